#pragma once

#include <algorithm>
#include <atomic>
#include <condition_variable>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "httplib.h"
#include "json.hpp"

#include "boss/cifar10.hpp"
#include "boss/config.hpp"
#include "boss/prototypes.hpp"
#include "boss/pseudo_dump.hpp"
#include "boss/selftrain.hpp"
#include "boss/synthetic.hpp"
#include "boss/thumbnail.hpp"
#include "boss/trainer.hpp"

namespace boss::service {

namespace fs = std::filesystem;
using nlohmann::json;
using trainer::RunState;

/// Environment variable naming the workspace root.
inline constexpr const char* kRunRootEnv = "BOSS_RUN_ROOT";

inline fs::path default_root() {
  const char* env = std::getenv(kRunRootEnv);
  return env && *env ? fs::path(env) : fs::path("boss-runs");
}

struct Lineage {
  std::optional<std::string> source_run;
  int prototype_set_id = 0;
  std::optional<int> parent_prototype_set;

  json to_json() const {
    json j{{"prototype_set_id", prototype_set_id}};
    j["source_run"] = source_run ? json(*source_run) : json(nullptr);
    j["parent_prototype_set"] = parent_prototype_set ? json(*parent_prototype_set) : json(nullptr);
    return j;
  }
  static Lineage from_json(const json& j) {
    Lineage l;
    l.prototype_set_id = j.at("prototype_set_id").get<int>();
    if (!j.value("source_run", json(nullptr)).is_null()) l.source_run = j["source_run"].get<std::string>();
    if (!j.value("parent_prototype_set", json(nullptr)).is_null())
      l.parent_prototype_set = j["parent_prototype_set"].get<int>();
    return l;
  }
};

inline json read_json_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw NotFound("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

inline void write_json_file(const fs::path& path, const json& j) {
  fs::create_directories(path.parent_path());
  const auto tmp = fs::path(path.string() + ".tmp");
  {
    std::ofstream out(tmp);
    if (!out) throw NotFound("cannot write " + tmp.string());
    out << j.dump(2) << '\n';
  }
  fs::rename(tmp, path);
}

/// Parses a metrics.jsonl file into records; unparsable lines are skipped.
inline std::vector<json> read_metric_lines(const fs::path& path) {
  std::vector<json> out;
  std::ifstream in(path);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto j = json::parse(line, nullptr, false);
    if (!j.is_discarded() && j.is_object() && j.contains("type")) out.push_back(std::move(j));
  }
  return out;
}

inline void absorb_record(trainer::RunMetrics& m, const json& j) {
  const auto type = j.at("type").get<std::string>();
  if (type == "step") m.steps.push_back(trainer::StepRecord::from_json(j));
  else if (type == "eval") m.evals.push_back(trainer::EvalRecord::from_json(j));
  else if (type == "divergence")
    m.divergence = trainer::DivergenceEvent{j.at("step").get<long long>(), j.value("message", std::string())};
}

inline trainer::RunMetrics load_metrics(const fs::path& path) {
  if (!fs::exists(path)) throw NotFound("metrics file " + path.string() + " not found");
  trainer::RunMetrics m;
  for (const auto& j : read_metric_lines(path)) absorb_record(m, j);
  return m;
}

/// Runs, datasets and prototype sets under one workspace root.
///
/// Layout: datasets/<id>.json, prototype-sets/<id>.json, runs/<run-id>/ with
/// summary.json, config.json, dataset.json, prototypes.json, metrics.jsonl,
/// best.ckpt, final.ckpt and dump/. Request and response bodies are the JSON
/// documents of the HTTP API.
class Engine {
 public:
  explicit Engine(fs::path root = default_root()) : root_(std::move(root)) {
    fs::create_directories(root_ / "datasets");
    fs::create_directories(root_ / "prototype-sets");
    fs::create_directories(root_ / "runs");
    load_prototype_sets();
    load_runs();
  }

  Engine(const Engine&) = delete;
  Engine& operator=(const Engine&) = delete;

  ~Engine() {
    std::vector<std::shared_ptr<Run>> all;
    {
      std::lock_guard lock(runs_mu_);
      for (auto& [id, r] : runs_) all.push_back(r);
    }
    for (auto& r : all) r->stop_requested = true;
    for (auto& r : all)
      if (r->worker.joinable()) r->worker.join();
  }

  const fs::path& root() const noexcept { return root_; }

  // ---- datasets ----

  json create_synthetic(const json& request) {
    const auto spec = data::SyntheticSpec::from_json(request);
    const auto id = spec.id();
    {
      std::lock_guard lock(datasets_mu_);
      if (!datasets_.count(id)) {
        auto ds = std::make_shared<const data::Dataset>(data::generate_synthetic(spec));
        json desc{{"dataset_id", id}, {"kind", "synthetic"}, {"spec", spec.to_json()}, {"warnings", json::array()}};
        write_json_file(root_ / "datasets" / (id + ".json"), desc);
        datasets_[id] = {desc, ds};
      }
    }
    return dataset_info(id);
  }

  json ingest_cifar10(const json& request) {
    const auto train = request.at("train").get<std::vector<std::string>>();
    const auto test = request.value("test", std::vector<std::string>{});
    const auto seed = request.value("seed", std::uint64_t{0});
    if (train.empty()) throw ValidationError("at least one training batch file is required");
    json key{{"train", train}, {"test", test}, {"seed", seed}};
    const std::string id = "cifar10-" + std::to_string(fnv1a(key.dump()) % 1000000);
    auto ingest = data::ingest_cifar10(train, test, seed, id);
    json desc{{"dataset_id", id}, {"kind", "cifar10"}, {"train", train}, {"test", test}, {"seed", seed},
              {"warnings", ingest.warnings}};
    {
      std::lock_guard lock(datasets_mu_);
      write_json_file(root_ / "datasets" / (id + ".json"), desc);
      datasets_[id] = {desc, std::make_shared<const data::Dataset>(std::move(ingest.dataset))};
    }
    return dataset_info(id);
  }

  data::DatasetPtr dataset(const std::string& id) { return dataset_entry(id).data; }

  json dataset_info(const std::string& id) {
    const auto e = dataset_entry(id);
    const auto& d = *e.data;
    return {{"dataset_id", id},
            {"kind", e.description.at("kind")},
            {"classes", d.classes()},
            {"size", d.size()},
            {"train_size", d.train_indices().size()},
            {"test_size", d.test_indices().size()},
            {"channels", d.channels()},
            {"height", d.height()},
            {"width", d.width()},
            {"warnings", e.description.value("warnings", json::array())}};
  }

  /// One page of samples. `unlabeled` restricts the listing to the training
  /// pool; true labels appear only with `audit`.
  json samples(const std::string& id, std::size_t offset, std::size_t limit, bool unlabeled, bool audit) {
    if (limit < 1 || limit > 500) throw ValidationError("limit must be in [1, 500]");
    const auto ds = dataset(id);
    std::vector<std::size_t> all;
    if (unlabeled) {
      all = ds->train_indices();
    } else {
      all.resize(ds->size());
      for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
    }
    json list = json::array();
    for (std::size_t k = offset; k < all.size() && k < offset + limit; ++k) {
      const std::size_t i = all[k];
      json s{{"index", i},
             {"split", ds->in_test_split(i) ? "test" : "train"},
             {"png", httplib::detail::base64_encode(encode_png(*ds, i))}};
      if (audit) s["true_label"] = ds->true_label(i, data::LabelAccess::audit);
      list.push_back(std::move(s));
    }
    return {{"dataset_id", id},  {"total", all.size()},     {"offset", offset},    {"limit", limit},
            {"channels", ds->channels()}, {"height", ds->height()}, {"width", ds->width()}, {"samples", list}};
  }

  // ---- prototype sets ----

  json create_prototype_set(const json& request) {
    const auto dataset_id = request.at("dataset_id").get<std::string>();
    const auto per_class = request.at("per_class").get<std::vector<std::vector<std::size_t>>>();
    const bool audit = request.value("audit", false);
    const auto ds = dataset(dataset_id);
    std::lock_guard lock(sets_mu_);
    auto set = data::select_prototypes(*ds, per_class, audit, sets_.next_id());
    const auto& added = sets_.add(std::move(set));
    write_json_file(set_path(added.id), added.to_json());
    return added.to_json();
  }

  json replace_prototype(int id, const json& request) {
    const int cls = request.at("class").get<int>();
    const auto index = request.at("index").get<std::size_t>();
    const auto ds = dataset(sets_.get(id).dataset_id);
    std::lock_guard lock(sets_mu_);
    const auto next = sets_.replace(id, cls, index, *ds);
    write_json_file(set_path(next.id), next.to_json());
    return next.to_json();
  }

  json prototype_set(int id) const { return sets_.get(id).to_json(); }

  json prototype_sets(const std::optional<std::string>& dataset_id = std::nullopt) const {
    json list = json::array();
    for (const auto& s : sets_.list())
      if (!dataset_id || s.dataset_id == *dataset_id) list.push_back(s.to_json());
    return {{"prototype_sets", list}};
  }

  // ---- runs ----

  /// Starts a run asynchronously. The body is a RunConfig document; an
  /// optional "preset" key seeds it from the hyper-parameter table first.
  json start_run(const json& request) {
    trainer::RunConfig base;
    if (request.contains("preset")) base = trainer::load_preset(request["preset"].get<std::string>());
    const auto config = trainer::from_json(request, base);
    const auto set = sets_.get(config.prototype_set_id);
    return launch(config, Lineage{std::nullopt, set.id, set.parent}, std::nullopt);
  }

  json runs() const {
    json list = json::array();
    std::lock_guard lock(runs_mu_);
    for (const auto& [id, r] : runs_) {
      std::lock_guard rl(r->mu);
      list.push_back({{"run_id", id}, {"state", trainer::to_string(r->state)}, {"lineage", r->lineage.to_json()}});
    }
    return {{"runs", list}};
  }

  json run_summary(const std::string& id) const {
    const auto r = run(id);
    std::lock_guard lock(r->mu);
    json j{{"run_id", id},
           {"state", trainer::to_string(r->state)},
           {"config", trainer::to_json(r->config)},
           {"steps_completed", r->steps_completed},
           {"total_steps", r->config.steps()},
           {"diagnosis", trainer::diagnose(r->metrics, r->config.diagnosis).to_json()},
           {"lineage", r->lineage.to_json()}};
    j["best_accuracy"] = r->metrics.evals.empty() ? json(nullptr) : json(r->metrics.best_accuracy());
    j["latest"] = {{"step", r->metrics.steps.empty() ? json(nullptr) : r->metrics.steps.back().to_json()},
                   {"eval", r->metrics.evals.empty() ? json(nullptr) : r->metrics.evals.back().to_json()}};
    j["error"] = r->error ? json(*r->error) : json(nullptr);
    return j;
  }

  /// Metric records with step greater than `since`, in emission order.
  json metrics(const std::string& id, long long since = -1) const {
    const auto r = run(id);
    json records = json::array();
    std::lock_guard lock(r->mu);
    for (const auto& rec : r->log)
      if (rec.at("step").get<long long>() > since) records.push_back(rec);
    return {{"run_id", id}, {"since", since}, {"state", trainer::to_string(r->state)}, {"records", records}};
  }

  json class_accuracies(const std::string& id) const {
    const auto r = run(id);
    std::lock_guard lock(r->mu);
    json history = json::array();
    for (const auto& e : r->metrics.evals)
      history.push_back({{"step", e.step}, {"accuracy", e.accuracy}, {"class_accuracy", e.class_accuracy}});
    const auto* last = r->metrics.evals.empty() ? nullptr : &r->metrics.evals.back();
    return {{"run_id", id},
            {"step", last ? json(last->step) : json(nullptr)},
            {"latest", last ? last->class_accuracy : std::vector<double>{}},
            {"history", history}};
  }

  json class_counts(const std::string& id) const {
    const auto r = run(id);
    std::lock_guard lock(r->mu);
    const auto* last = r->metrics.evals.empty() ? nullptr : &r->metrics.evals.back();
    return {{"run_id", id},
            {"step", last ? json(last->step) : json(nullptr)},
            {"counts", last ? last->counts_all : std::vector<double>{}},
            {"confident_counts", last ? last->counts_confident : std::vector<double>{}},
            {"thresholds", last ? last->thresholds : std::vector<double>{}}};
  }

  json diagnosis(const std::string& id) const {
    const auto r = run(id);
    std::lock_guard lock(r->mu);
    return trainer::diagnose(r->metrics, r->config.diagnosis).to_json();
  }

  /// Sorted dump records, optionally only those pseudo-labelled `cls`; `rank`
  /// is the position in the full dump.
  json pseudo_labels(const std::string& id, std::optional<std::size_t> top = std::nullopt,
                     std::optional<int> cls = std::nullopt, bool audit = false) const {
    const auto r = run(id);
    const auto dump = trainer::read_dump(trainer::DumpFiles{r->dir / "dump"});
    if (cls) {
      const auto classes = dataset_classes(r->config.dataset_id);
      if (*cls < 0 || static_cast<std::size_t>(*cls) >= classes)
        throw ValidationError("class " + std::to_string(*cls) + " out of range");
    }
    json records = json::array();
    const std::size_t limit = top.value_or(dump.size());
    for (std::size_t i = 0; i < dump.size() && records.size() < limit; ++i) {
      const auto& d = dump[i];
      if (cls && d.label != *cls) continue;
      json rec{{"rank", i}, {"index", d.index}, {"label", d.label}, {"confidence", d.confidence}};
      if (audit) rec["true_label"] = d.true_label;
      records.push_back(std::move(rec));
    }
    return {{"run_id", id}, {"total", dump.size()}, {"records", records}};
  }

  /// Launches the next run on the source run's prototypes plus its k most
  /// confident pseudo-labels per class. Launches from one source run are
  /// serialized.
  json self_train(const std::string& id, const json& request) {
    const auto src = run(id);
    std::lock_guard serial(src->self_train_mu);
    {
      std::lock_guard lock(src->mu);
      if (src->state != RunState::completed && src->state != RunState::stopped)
        throw StateError("run " + id + " is " + trainer::to_string(src->state) +
                         "; self-training needs a completed or stopped run");
    }
    const auto k = request.value("k_per_class", std::size_t{5});
    const auto family = request.value("family", std::string("cifar"));
    const auto dump = trainer::read_dump(trainer::DumpFiles{src->dir / "dump"});
    const auto entry = dataset_entry(src->config.dataset_id);
    const auto protos = sets_.get(src->lineage.prototype_set_id);
    const data::Dataset* audit = entry.description.at("kind") == "synthetic" ? entry.data.get() : nullptr;

    std::optional<selftrain::SelfTrainPlan> plan;
    {
      std::lock_guard lock(sets_mu_);
      plan = selftrain::make_plan(id, dump, k, protos, sets_.next_id(), audit);
      sets_.add(plan->labeled_set);
      write_json_file(set_path(plan->labeled_set.id), plan->labeled_set.to_json());
    }
    auto config = selftrain::iteration_config(src->config, family);
    if (request.contains("overrides")) config = trainer::from_json(request["overrides"], config);
    config.dataset_id = src->config.dataset_id;
    config.prototype_set_id = plan->labeled_set.id;
    auto ack = launch(config, Lineage{id, plan->labeled_set.id, protos.id}, plan);
    ack["source_run"] = id;
    ack["prototype_set_id"] = plan->labeled_set.id;
    ack["labeled_count"] = plan->labeled_set.total();
    ack["purity"] = plan->purity ? json(*plan->purity) : json(nullptr);
    ack["warnings"] = plan->warnings;
    return ack;
  }

  /// Asks the run to stop and waits for its terminal state. Stopping a
  /// finished run reports its state unchanged.
  json stop(const std::string& id) {
    const auto r = run(id);
    r->stop_requested = true;
    return {{"run_id", id}, {"state", trainer::to_string(wait(id))}};
  }

  RunState wait(const std::string& id) const {
    const auto r = run(id);
    std::unique_lock lock(r->mu);
    r->cv.wait(lock, [&] { return trainer::is_terminal(r->state); });
    return r->state;
  }

  /// Waits up to `timeout`; returns the state at that point.
  RunState wait_for(const std::string& id, std::chrono::milliseconds timeout) const {
    const auto r = run(id);
    std::unique_lock lock(r->mu);
    r->cv.wait_for(lock, timeout, [&] { return trainer::is_terminal(r->state); });
    return r->state;
  }

  /// Test-split accuracy of a saved checkpoint ("best" or "final").
  json evaluate_run(const std::string& id, const std::string& which = "best") {
    const auto r = run(id);
    const auto ds = dataset(r->config.dataset_id);
    const auto model = load_model(*r, *ds, which);
    const auto acc = trainer::evaluate(model, *ds);
    return {{"run_id", id}, {"checkpoint", which}, {"accuracy", acc.overall}, {"class_accuracy", acc.per_class}};
  }

  /// Re-runs pseudo-label inference from a checkpoint into the run's dump.
  json redump(const std::string& id, const std::string& which = "best",
              const std::optional<fs::path>& out = std::nullopt) {
    const auto r = run(id);
    const auto ds = dataset(r->config.dataset_id);
    const auto model = load_model(*r, *ds, which);
    const trainer::DumpFiles files{out.value_or(r->dir / "dump")};
    const auto dump = trainer::dump_pseudo_labels(model, *ds, ds->train_indices());
    trainer::write_dump(files, dump);
    return {{"run_id", id}, {"checkpoint", which}, {"records", dump.size()}, {"dir", files.dir.string()}};
  }

  fs::path run_dir(const std::string& id) const { return run(id)->dir; }

 private:
  struct DatasetEntry {
    json description;
    data::DatasetPtr data;
  };

  struct Run {
    std::string id;
    fs::path dir;
    trainer::RunConfig config;
    Lineage lineage;
    mutable std::mutex mu;
    std::condition_variable cv;
    RunState state = RunState::pending;
    std::vector<json> log;
    trainer::RunMetrics metrics;
    long long steps_completed = 0;
    std::optional<std::string> error;
    std::atomic<bool> stop_requested{false};
    std::mutex self_train_mu;
    std::thread worker;
  };

  fs::path set_path(int id) const { return root_ / "prototype-sets" / (std::to_string(id) + ".json"); }

  DatasetEntry dataset_entry(const std::string& id) const {
    std::lock_guard lock(datasets_mu_);
    if (auto it = datasets_.find(id); it != datasets_.end()) return it->second;
    const auto path = root_ / "datasets" / (id + ".json");
    if (id.empty() || id.find('/') != std::string::npos || !fs::exists(path))
      throw NotFound("dataset " + id + " not found");
    const auto desc = read_json_file(path);
    data::DatasetPtr ds;
    if (desc.at("kind") == "synthetic") {
      ds = std::make_shared<const data::Dataset>(
          data::generate_synthetic(data::SyntheticSpec::from_json(desc.at("spec"))));
    } else {
      auto ingest = data::ingest_cifar10(desc.at("train").get<std::vector<std::string>>(),
                                         desc.at("test").get<std::vector<std::string>>(),
                                         desc.at("seed").get<std::uint64_t>(), id);
      ds = std::make_shared<const data::Dataset>(std::move(ingest.dataset));
    }
    datasets_[id] = {desc, ds};
    return datasets_[id];
  }

  std::size_t dataset_classes(const std::string& id) const { return dataset_entry(id).data->classes(); }

  std::shared_ptr<Run> run(const std::string& id) const {
    std::lock_guard lock(runs_mu_);
    auto it = runs_.find(id);
    if (it == runs_.end()) throw NotFound("run " + id + " not found");
    return it->second;
  }

  nn::Classifier<double> load_model(const Run& r, const data::Dataset& ds, const std::string& which) const {
    if (which != "best" && which != "final") throw ValidationError("checkpoint must be best or final");
    const trainer::RunOutput out{r.dir};
    auto model = nn::Classifier<double>::standard({ds.channels(), ds.height(), ds.width()}, ds.classes());
    nn::load_checkpoint((which == "best" ? out.best_checkpoint() : out.final_checkpoint()).string(), model);
    return model;
  }

  void persist_summary(const Run& r) const {
    json j{{"run_id", r.id}, {"state", trainer::to_string(r.state)}, {"lineage", r.lineage.to_json()}};
    j["error"] = r.error ? json(*r.error) : json(nullptr);
    write_json_file(r.dir / "summary.json", j);
  }

  void load_prototype_sets() {
    std::vector<data::PrototypeSet> found;
    for (const auto& e : fs::directory_iterator(root_ / "prototype-sets"))
      if (e.path().extension() == ".json") found.push_back(data::PrototypeSet::from_json(read_json_file(e.path())));
    std::sort(found.begin(), found.end(), [](const auto& a, const auto& b) { return a.id < b.id; });
    for (auto& s : found) sets_.add(std::move(s));
  }

  void load_runs() {
    for (const auto& e : fs::directory_iterator(root_ / "runs")) {
      const auto summary_path = e.path() / "summary.json";
      if (!fs::exists(summary_path)) continue;
      const auto summary = read_json_file(summary_path);
      auto r = std::make_shared<Run>();
      r->id = summary.at("run_id").get<std::string>();
      r->dir = e.path();
      r->config = trainer::from_json(read_json_file(e.path() / "config.json"));
      r->lineage = Lineage::from_json(summary.at("lineage"));
      r->state = trainer::run_state_from_string(summary.at("state").get<std::string>());
      if (!summary.value("error", json(nullptr)).is_null()) r->error = summary["error"].get<std::string>();
      r->log = read_metric_lines(trainer::RunOutput{e.path()}.metrics());
      for (const auto& rec : r->log) absorb_record(r->metrics, rec);
      if (!r->metrics.steps.empty()) r->steps_completed = r->metrics.steps.back().step + 1;
      if (!trainer::is_terminal(r->state)) {
        r->state = RunState::stopped;
        r->error = "interrupted by a service restart";
        persist_summary(*r);
      }
      next_run_ = std::max(next_run_, run_number(r->id) + 1);
      runs_[r->id] = r;
    }
  }

  static int run_number(const std::string& id) {
    return id.rfind("run-", 0) == 0 ? std::atoi(id.c_str() + 4) : 0;
  }

  json launch(trainer::RunConfig config, const Lineage& lineage, const std::optional<selftrain::SelfTrainPlan>& plan) {
    config.validate();
    const auto entry = dataset_entry(config.dataset_id);
    const auto set = sets_.get(lineage.prototype_set_id);
    if (set.dataset_id != config.dataset_id)
      throw ValidationError("prototype set " + std::to_string(set.id) + " belongs to dataset " + set.dataset_id +
                            ", run targets " + config.dataset_id);
    data::validate_prototypes(set, *entry.data);
    if (config.unlabeled_batch() > entry.data->train_indices().size())
      throw ConfigError("unlabeled batch " + std::to_string(config.unlabeled_batch()) + " exceeds pool size " +
                        std::to_string(entry.data->train_indices().size()));

    auto r = std::make_shared<Run>();
    r->config = config;
    r->lineage = lineage;
    {
      std::lock_guard lock(runs_mu_);
      char name[32];
      std::snprintf(name, sizeof name, "run-%04d", next_run_++);
      r->id = name;
      r->dir = root_ / "runs" / r->id;
      fs::create_directories(r->dir);
      write_json_file(r->dir / "config.json", trainer::to_json(config));
      write_json_file(r->dir / "dataset.json", entry.description);
      write_json_file(r->dir / "prototypes.json", set.to_json());
      if (plan) write_json_file(r->dir / "selftrain_plan.json", plan->to_json());
      persist_summary(*r);
      runs_[r->id] = r;
    }
    r->worker = std::thread([this, r, ds = entry.data, set] { execute(*r, *ds, set); });
    return {{"run_id", r->id}, {"state", trainer::to_string(RunState::pending)}};
  }

  void finish(Run& r, RunState state, std::optional<std::string> error) const {
    {
      std::lock_guard lock(r.mu);
      r.state = state;
      r.error = std::move(error);
      persist_summary(r);
    }
    r.cv.notify_all();
  }

  void execute(Run& r, const data::Dataset& ds, const data::PrototypeSet& set) const {
    {
      std::lock_guard lock(r.mu);
      r.state = RunState::running;
      persist_summary(r);
    }
    trainer::TrainCallbacks cb;
    cb.on_step = [&r](const trainer::StepRecord& s) {
      auto j = s.to_json();
      std::lock_guard lock(r.mu);
      r.log.push_back(std::move(j));
      r.metrics.steps.push_back(s);
      r.steps_completed = s.step + 1;
    };
    cb.on_eval = [&r](const trainer::EvalRecord& e) {
      auto j = e.to_json();
      std::lock_guard lock(r.mu);
      r.log.push_back(std::move(j));
      r.metrics.evals.push_back(e);
    };
    cb.should_stop = [&r] { return r.stop_requested.load(); };
    try {
      const auto result = trainer::train(r.config, ds, set, cb, trainer::RunOutput{r.dir});
      if (result.metrics.divergence) {
        const auto& d = *result.metrics.divergence;
        std::lock_guard lock(r.mu);
        r.log.push_back({{"type", "divergence"}, {"step", d.step}, {"message", d.message}});
        r.metrics.divergence = d;
      }
      if (!result.best.empty()) {
        auto model = nn::Classifier<double>::standard({ds.channels(), ds.height(), ds.width()}, ds.classes());
        nn::restore(model, result.best);
        trainer::write_dump(trainer::DumpFiles{r.dir / "dump"},
                            trainer::dump_pseudo_labels(model, ds, ds.train_indices()));
      }
      finish(r, result.state, std::nullopt);
    } catch (const std::exception& e) {
      finish(r, RunState::failed, std::string(e.what()));
    }
  }

  fs::path root_;
  mutable std::mutex datasets_mu_;
  mutable std::map<std::string, DatasetEntry> datasets_;
  std::mutex sets_mu_;
  data::PrototypeRegistry sets_;
  mutable std::mutex runs_mu_;
  std::map<std::string, std::shared_ptr<Run>> runs_;
  int next_run_ = 1;
};

}  // namespace boss::service
