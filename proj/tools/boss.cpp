#include <atomic>
#include <chrono>
#include <csignal>
#include <cstdio>
#include <fstream>
#include <functional>
#include <iostream>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "boss/http.hpp"
#include "boss/service.hpp"

namespace svc = boss::service;
namespace tr = boss::trainer;
using nlohmann::json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitFailure = 1;
constexpr int kExitValidation = 2;
constexpr int kExitDiverged = 3;

std::atomic<bool> interrupted{false};

/// Flags that overwrite keys of a JSON request when given on the command line.
class Overlay {
 public:
  template <typename T>
  CLI::Option* add(CLI::App* app, const std::string& flag, const std::string& key, const std::string& help) {
    auto value = std::make_shared<T>();
    auto* opt = app->add_option(flag, *value, help);
    setters_.push_back([value, opt, key](json& j) {
      if (opt->count() > 0) j[key] = *value;
    });
    return opt;
  }

  void apply(json& j) const {
    for (const auto& s : setters_) s(j);
  }

 private:
  std::vector<std::function<void(json&)>> setters_;
};

json load_config(const std::string& path) {
  if (path.empty()) return json::object();
  std::ifstream in(path);
  if (!in) throw boss::NotFound("config file " + path + " not found");
  auto j = json::parse(in, nullptr, false);
  if (j.is_discarded() || !j.is_object()) throw boss::ConfigError("config file " + path + " is not a JSON object");
  return j;
}

void print(const json& j) { std::cout << j.dump(2) << '\n'; }

void add_training_flags(CLI::App* app, Overlay& o) {
  o.add<int>(app, "--method", "balance", "balance method 0-4");
  o.add<double>(app, "--tau", "tau", "confidence threshold");
  o.add<double>(app, "--delta", "delta", "threshold reduction for methods 1 and 4");
  o.add<double>(app, "--lambda-u", "lambda_u", "unlabeled loss weight");
  o.add<std::size_t>(app, "--batch-size", "batch_size", "labeled batch size B");
  o.add<double>(app, "--unlabeled-ratio", "unlabeled_ratio", "unlabeled ratio r_u");
  o.add<double>(app, "--kimg", "total_kimg", "training budget in thousands of images");
  o.add<long long>(app, "--steps", "total_steps", "training steps, overriding --kimg");
  o.add<double>(app, "--lr", "learning_rate", "initial learning rate");
  o.add<double>(app, "--momentum", "momentum", "SGD momentum");
  o.add<double>(app, "--wd", "weight_decay", "weight decay");
  o.add<std::uint64_t>(app, "--seed", "seed", "run seed");
  o.add<long long>(app, "--eval-interval", "eval_interval", "steps between evaluations (0: K/20)");
  o.add<std::string>(app, "--precision", "precision", "f32 or f64");
  o.add<std::string>(app, "--count-mode", "count_mode", "ema or exact-epoch");
  o.add<double>(app, "--count-decay", "count_decay", "EMA decay of the class counts");
}

/// Waits for a run, echoing evaluations to stderr; Ctrl-C stops the run.
tr::RunState follow(svc::Engine& engine, const std::string& run_id, bool quiet) {
  long long seen = -1;
  for (;;) {
    const auto state = engine.wait_for(run_id, std::chrono::milliseconds(200));
    if (interrupted.exchange(false)) engine.stop(run_id);
    const auto m = engine.metrics(run_id, seen);
    for (const auto& r : m["records"]) {
      seen = std::max(seen, r["step"].get<long long>());
      if (quiet) continue;
      if (r["type"] == "eval")
        std::fprintf(stderr, "step %6lld  accuracy %6.2f%%  best %6.2f%%\n", r["step"].get<long long>(),
                     100 * r["accuracy"].get<double>(), 100 * r["running_max"].get<double>());
      else if (r["type"] == "divergence")
        std::fprintf(stderr, "diverged at step %lld: %s\n", r["step"].get<long long>(),
                     r["message"].get<std::string>().c_str());
    }
    if (tr::is_terminal(state)) return state;
  }
}

int exit_for(tr::RunState s) {
  if (s == tr::RunState::diverged) return kExitDiverged;
  if (s == tr::RunState::failed) return kExitFailure;
  return kExitOk;
}

void print_diagnosis(const json& d) {
  std::cout << "verdict: " << d["verdict"].get<std::string>() << '\n';
  const auto& ev = d["evidence"];
  std::cout << "max drop: " << ev["max_drop"].get<double>() << " points\n";
  std::cout << "plateau length: " << ev["plateau_length"].get<std::size_t>() << " evals\n";
  if (!ev["weak_classes"].empty()) std::cout << "weak classes: " << ev["weak_classes"].dump() << '\n';
  if (d["suggestions"].empty()) return;
  std::cout << "suggestions:\n";
  for (const auto& s : d["suggestions"]) {
    std::cout << "  " << s["direction"].get<std::string>() << ' ' << s["parameter"].get<std::string>();
    if (!s["note"].get<std::string>().empty()) std::cout << "  (" << s["note"].get<std::string>() << ')';
    std::cout << '\n';
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Class-balanced semi-supervised training from one prototype per class"};
  app.require_subcommand(1);
  std::string root = svc::default_root().string();
  app.add_option("--root", root, std::string("workspace directory (default $") + svc::kRunRootEnv + " or ./boss-runs)");

  std::function<int()> action;
  const auto engine = [&] { return std::make_unique<svc::Engine>(root); };

  // gen-data
  auto* gen = app.add_subcommand("gen-data", "generate a synthetic dataset");
  std::string gen_config;
  Overlay gen_flags;
  gen->add_option("--config", gen_config, "JSON synthetic spec");
  gen_flags.add<std::size_t>(gen, "--classes", "classes", "number of classes");
  gen_flags.add<std::size_t>(gen, "--samples-per-class", "samples_per_class", "samples per class");
  gen_flags.add<std::size_t>(gen, "--image-size", "image_size", "image side, a multiple of 4");
  gen_flags.add<double>(gen, "--difficulty", "difficulty", "difficulty in [0,1]");
  gen_flags.add<std::vector<double>>(gen, "--class-difficulty", "class_difficulty", "per-class difficulty");
  gen_flags.add<std::uint64_t>(gen, "--seed", "seed", "generator seed");
  gen_flags.add<double>(gen, "--test-fraction", "test_fraction", "held-out fraction");
  gen->callback([&] {
    action = [&] {
      auto j = load_config(gen_config);
      gen_flags.apply(j);
      print(engine()->create_synthetic(j));
      return kExitOk;
    };
  });

  // ingest-cifar10
  auto* ingest = app.add_subcommand("ingest-cifar10", "register CIFAR-10 binary batches");
  std::string ingest_config;
  Overlay ingest_flags;
  ingest->add_option("--config", ingest_config, "JSON with train, test and seed");
  ingest_flags.add<std::vector<std::string>>(ingest, "--train", "train", "training batch files");
  ingest_flags.add<std::vector<std::string>>(ingest, "--test", "test", "test batch files");
  ingest_flags.add<std::uint64_t>(ingest, "--seed", "seed", "split seed when no test files are given");
  ingest->callback([&] {
    action = [&] {
      auto j = load_config(ingest_config);
      ingest_flags.apply(j);
      const auto info = engine()->ingest_cifar10(j);
      for (const auto& w : info["warnings"]) std::cerr << "warning: " << w.get<std::string>() << '\n';
      print(info);
      return kExitOk;
    };
  });

  // protoset
  auto* proto = app.add_subcommand("protoset", "create, refine and list prototype sets");
  proto->require_subcommand(1);
  auto* proto_create = proto->add_subcommand("create", "create a prototype set");
  std::string create_config;
  std::vector<std::string> create_indices;
  Overlay create_flags;
  proto_create->add_option("--config", create_config, "JSON with dataset_id and per_class");
  create_flags.add<std::string>(proto_create, "--dataset", "dataset_id", "dataset id");
  auto* indices_opt =
      proto_create->add_option("--indices", create_indices, "per class in order: comma-separated sample indices");
  auto* audit_flag = proto_create->add_flag("--audit", "warn about prototypes whose true label differs");
  proto_create->callback([&] {
    action = [&] {
      auto j = load_config(create_config);
      create_flags.apply(j);
      if (indices_opt->count() > 0) {
        json per_class = json::array();
        for (const auto& cls : create_indices) {
          json members = json::array();
          std::stringstream ss(cls);
          std::string item;
          while (std::getline(ss, item, ',')) members.push_back(std::stoull(item));
          per_class.push_back(members);
        }
        j["per_class"] = per_class;
      }
      if (audit_flag->count() > 0) j["audit"] = true;
      const auto set = engine()->create_prototype_set(j);
      for (const auto& w : set["warnings"]) std::cerr << "warning: " << w.get<std::string>() << '\n';
      print(set);
      return kExitOk;
    };
  });
  auto* proto_replace = proto->add_subcommand("replace", "replace one prototype, creating a new set version");
  std::string replace_config;
  int replace_set = 0;
  Overlay replace_flags;
  proto_replace->add_option("--config", replace_config, "JSON with class and index");
  proto_replace->add_option("--set", replace_set, "prototype set id")->required();
  replace_flags.add<int>(proto_replace, "--class", "class", "class whose prototype is replaced");
  replace_flags.add<std::size_t>(proto_replace, "--index", "index", "new prototype sample index");
  proto_replace->callback([&] {
    action = [&] {
      auto j = load_config(replace_config);
      replace_flags.apply(j);
      print(engine()->replace_prototype(replace_set, j));
      return kExitOk;
    };
  });
  auto* proto_list = proto->add_subcommand("list", "list prototype sets");
  std::string list_dataset;
  proto_list->add_option("--dataset", list_dataset, "only sets of this dataset");
  proto_list->callback([&] {
    action = [&] {
      print(engine()->prototype_sets(list_dataset.empty() ? std::nullopt : std::optional<std::string>(list_dataset)));
      return kExitOk;
    };
  });

  // train
  auto* train = app.add_subcommand("train", "train a run and wait for it");
  std::string train_config;
  Overlay train_flags;
  train->add_option("--config", train_config, "JSON run config");
  train_flags.add<std::string>(train, "--preset", "preset", "hyper-parameter preset, e.g. cifar-balance1");
  train_flags.add<std::string>(train, "--dataset", "dataset_id", "dataset id");
  train_flags.add<int>(train, "--protoset", "prototype_set_id", "prototype set id");
  add_training_flags(train, train_flags);
  auto* dry_run = train->add_flag("--dry-run", "print the resolved config and exit");
  auto* train_quiet = train->add_flag("--quiet", "no progress output");
  train->callback([&] {
    action = [&] {
      auto j = load_config(train_config);
      train_flags.apply(j);
      if (dry_run->count() > 0) {
        tr::RunConfig base;
        if (j.contains("preset")) base = tr::load_preset(j["preset"].get<std::string>());
        const auto c = tr::from_json(j, base);
        c.validate();
        print(tr::to_json(c));
        return kExitOk;
      }
      auto e = engine();
      const auto id = e->start_run(j)["run_id"].get<std::string>();
      std::cerr << "run " << id << " in " << e->run_dir(id).string() << '\n';
      const auto state = follow(*e, id, train_quiet->count() > 0);
      print(e->run_summary(id));
      return exit_for(state);
    };
  });

  // eval
  auto* eval = app.add_subcommand("eval", "test-split accuracy of a run checkpoint");
  std::string eval_run, eval_which = "best";
  eval->add_option("--run", eval_run, "run id")->required();
  eval->add_option("--checkpoint", eval_which, "best or final");
  eval->callback([&] {
    action = [&] {
      print(engine()->evaluate_run(eval_run, eval_which));
      return kExitOk;
    };
  });

  // dump
  auto* dump = app.add_subcommand("dump", "write the sorted pseudo-label files of a run checkpoint");
  std::string dump_run, dump_which = "best", dump_out;
  dump->add_option("--run", dump_run, "run id")->required();
  dump->add_option("--checkpoint", dump_which, "best or final");
  dump->add_option("--out", dump_out, "output directory (default: the run's dump/)");
  dump->callback([&] {
    action = [&] {
      print(engine()->redump(dump_run, dump_which,
                             dump_out.empty() ? std::nullopt : std::optional<std::filesystem::path>(dump_out)));
      return kExitOk;
    };
  });

  // diagnose
  auto* diag = app.add_subcommand("diagnose", "classify a run's accuracy trajectory and suggest changes");
  std::string diag_target;
  diag->add_option("target", diag_target, "run id or path to a metrics.jsonl file")->required();
  auto* diag_json = diag->add_flag("--json", "print the diagnosis as JSON");
  diag->callback([&] {
    action = [&] {
      json d;
      if (std::filesystem::is_regular_file(diag_target)) d = tr::diagnose(svc::load_metrics(diag_target)).to_json();
      else d = engine()->diagnosis(diag_target);
      if (diag_json->count() > 0) print(d);
      else print_diagnosis(d);
      return kExitOk;
    };
  });

  // self-train
  auto* self = app.add_subcommand("self-train", "retrain with the k most confident pseudo-labels per class added");
  std::string self_config, self_run;
  Overlay self_flags, self_overrides;
  self->add_option("--config", self_config, "JSON with k_per_class, family and overrides");
  self->add_option("--run", self_run, "source run id")->required();
  self_flags.add<std::size_t>(self, "--k", "k_per_class", "promotions per class");
  self_flags.add<std::string>(self, "--family", "family", "cifar or svhn self-training preset");
  add_training_flags(self, self_overrides);
  auto* self_quiet = self->add_flag("--quiet", "no progress output");
  self->callback([&] {
    action = [&] {
      auto j = load_config(self_config);
      self_flags.apply(j);
      json overrides = j.value("overrides", json::object());
      self_overrides.apply(overrides);
      j["overrides"] = overrides;
      auto e = engine();
      const auto ack = e->self_train(self_run, j);
      const auto id = ack["run_id"].get<std::string>();
      std::cerr << "run " << id << " trains on " << ack["labeled_count"].get<std::size_t>() << " labeled samples\n";
      const auto state = follow(*e, id, self_quiet->count() > 0);
      print(e->run_summary(id));
      return exit_for(state);
    };
  });

  // serve
  auto* serve = app.add_subcommand("serve", "serve the HTTP API");
  std::string serve_config;
  std::string host = "127.0.0.1";
  int port = 8080;
  serve->add_option("--config", serve_config, "JSON with host and port");
  auto* host_opt = serve->add_option("--host", host, "bind address");
  auto* port_opt = serve->add_option("--port", port, "port");
  serve->callback([&] {
    action = [&] {
      const auto j = load_config(serve_config);
      if (host_opt->count() == 0) host = j.value("host", host);
      if (port_opt->count() == 0) port = j.value("port", port);
      auto e = engine();
      httplib::Server server;
      svc::install_routes(server, *e);
      std::cerr << "serving " << e->root().string() << " on http://" << host << ':' << port << '\n';
      if (!server.listen(host, port)) throw boss::UsageError("cannot listen on " + host + ":" + std::to_string(port));
      return kExitOk;
    };
  });

  // presets
  auto* presets = app.add_subcommand("presets", "list the hyper-parameter presets");
  presets->callback([&] {
    action = [&] {
      for (const auto& p : tr::preset_table()) {
        std::printf("%-16s wd %-7g lr %-5g B %-3zu momentum %-5g r_u %-2g tau %-5g delta %-5g  %s\n", p.name.c_str(),
                    p.weight_decay, p.learning_rate, p.batch_size, p.momentum, p.unlabeled_ratio, p.tau, p.delta,
                    p.description.c_str());
      }
      return kExitOk;
    };
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitValidation;
  }

  std::signal(SIGINT, [](int) { interrupted = true; });
  try {
    return action ? action() : kExitValidation;
  } catch (const boss::Error& e) {
    std::cerr << "error (" << e.kind() << "): " << e.what() << '\n';
    return kExitValidation;
  } catch (const json::exception& e) {
    std::cerr << "error (validation): " << e.what() << '\n';
    return kExitValidation;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitFailure;
  }
}
