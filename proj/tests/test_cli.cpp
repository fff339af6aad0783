#include <gtest/gtest.h>
#include <sys/wait.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "boss/cifar10.hpp"
#include "boss/pseudo_dump.hpp"
#include "boss/service.hpp"

namespace fs = std::filesystem;
namespace tr = boss::trainer;
using nlohmann::json;

namespace {

struct Outcome {
  int code = -1;
  std::string out;
};

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    root_ = fs::temp_directory_path() /
            (std::string("boss_cli_") + ::testing::UnitTest::GetInstance()->current_test_info()->name());
    fs::remove_all(root_);
    fs::create_directories(root_);
  }
  void TearDown() override { fs::remove_all(root_); }

  Outcome boss(const std::string& args) const {
    const std::string cmd =
        std::string(BOSS_CLI) + " --root " + (root_ / "ws").string() + " " + args + " 2>" + (root_ / "stderr").string();
    Outcome o;
    FILE* p = popen(cmd.c_str(), "r");
    if (!p) return o;
    char buf[4096];
    std::size_t n;
    while ((n = fread(buf, 1, sizeof buf, p)) > 0) o.out.append(buf, n);
    const int status = pclose(p);
    o.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    return o;
  }

  std::string stderr_text() const {
    std::ifstream in(root_ / "stderr");
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
  }

  fs::path write(const std::string& name, const std::string& text) const {
    std::ofstream(root_ / name) << text;
    return root_ / name;
  }

  std::string dataset() const {
    const auto o = boss("gen-data --classes 4 --samples-per-class 50 --image-size 8 --difficulty 0.2 --seed 2");
    EXPECT_EQ(o.code, 0) << stderr_text();
    return json::parse(o.out)["dataset_id"];
  }

  /// The first `n` train indices of each class, read through the library.
  std::vector<std::vector<std::size_t>> train_picks(const std::string& id, std::size_t n = 2) const {
    boss::service::Engine engine(root_ / "ws");
    const auto ds = engine.dataset(id);
    std::vector<std::vector<std::size_t>> picks(ds->classes());
    for (auto i : ds->train_indices()) {
      const int y = ds->true_label(i, boss::data::LabelAccess::prototype_selection);
      if (picks[y].size() < n) picks[y].push_back(i);
    }
    return picks;
  }

  std::string first_picks(const std::string& id) const {
    std::string out;
    for (const auto& p : train_picks(id)) out += " " + std::to_string(p[0]);
    return out;
  }

  fs::path root_;
};

fs::path canned_metrics(const fs::path& dir, const std::vector<double>& acc, std::vector<double> cls = {}) {
  const auto path = dir / "metrics.jsonl";
  std::ofstream out(path);
  for (std::size_t i = 0; i < acc.size(); ++i) {
    tr::EvalRecord e;
    e.step = static_cast<long long>(i + 1) * 100;
    e.accuracy = acc[i];
    e.class_accuracy = cls.empty() ? std::vector<double>(4, acc[i]) : cls;
    out << tr::StepRecord{e.step - 1, 1, 1, 2, 3, 0.03}.to_json().dump() << '\n' << e.to_json().dump() << '\n';
  }
  return path;
}

}  // namespace

TEST_F(CliTest, PresetCifarBalance1) {
  const auto o = boss("train --preset cifar-balance1 --dry-run");
  ASSERT_EQ(o.code, 0) << stderr_text();
  const auto c = json::parse(o.out);
  EXPECT_EQ(c["weight_decay"], 8e-4);
  EXPECT_EQ(c["learning_rate"], 0.06);
  EXPECT_EQ(c["batch_size"], 30);
  EXPECT_EQ(c["momentum"], 0.88);
  EXPECT_EQ(c["unlabeled_ratio"], 9);
  EXPECT_EQ(c["tau"], 0.95);
  EXPECT_EQ(c["delta"], 0.25);
  EXPECT_EQ(c["balance"], 1);
}

TEST_F(CliTest, PresetSvhnBalance2) {
  const auto o = boss("train --preset svhn-balance2 --dry-run");
  ASSERT_EQ(o.code, 0) << stderr_text();
  const auto c = json::parse(o.out);
  EXPECT_EQ(c["weight_decay"], 6e-4);
  EXPECT_EQ(c["learning_rate"], 0.04);
  EXPECT_EQ(c["batch_size"], 32);
  EXPECT_EQ(c["momentum"], 0.85);
  EXPECT_EQ(c["unlabeled_ratio"], 7);
  EXPECT_EQ(c["tau"], 0.9);
  EXPECT_EQ(c["delta"], 0);
  EXPECT_EQ(c["balance"], 2);
}

TEST_F(CliTest, FlagsOverrideConfigFileOverridesPreset) {
  const auto cfg = write("run.json", R"({"preset": "fixmatch", "learning_rate": 0.5, "tau": 0.8})");
  const auto o = boss("train --config " + cfg.string() + " --tau 0.7 --dry-run");
  ASSERT_EQ(o.code, 0) << stderr_text();
  const auto c = json::parse(o.out);
  EXPECT_EQ(c["learning_rate"], 0.5);
  EXPECT_EQ(c["tau"], 0.7);
  EXPECT_EQ(c["batch_size"], 64);
}

TEST_F(CliTest, ValidationErrorsExitTwo) {
  EXPECT_EQ(boss("train --preset imagenet --dry-run").code, 2);
  EXPECT_EQ(boss("train --preset fixmatch --tau 1.5 --dry-run").code, 2);
  EXPECT_EQ(boss("gen-data --classes 1").code, 2);
  EXPECT_EQ(boss("train --batch-size lots --dry-run").code, 2);
  EXPECT_EQ(boss("").code, 2);
  EXPECT_EQ(boss("train --config /no/such/file.json --dry-run").code, 2);
  EXPECT_EQ(boss("eval --run run-0099").code, 2);
  EXPECT_NE(stderr_text().find("not-found"), std::string::npos);
}

TEST_F(CliTest, DiagnoseCannedCollapse) {
  const auto path = canned_metrics(root_, {0.3, 0.45, 0.55, 0.63, 0.7, 0.75, 0.78, 0.8, 0.8, 0.72, 0.65, 0.65, 0.66, 0.65});
  const auto o = boss("diagnose " + path.string());
  ASSERT_EQ(o.code, 0) << stderr_text();
  EXPECT_NE(o.out.find("verdict: instability"), std::string::npos) << o.out;
  for (const char* s : {"decrease delta", "decrease lambda_u", "decrease weight_decay", "decrease learning_rate",
                        "increase tau"})
    EXPECT_NE(o.out.find(s), std::string::npos) << s;
}

TEST_F(CliTest, DiagnoseCannedPlateauAsJson) {
  const auto path = canned_metrics(root_, {0.3, 0.5, 0.65, 0.74, 0.76, 0.77, 0.77, 0.77, 0.77, 0.77, 0.77, 0.77},
                                   {0.95, 0.95, 0.96, 0.22});
  const auto o = boss("diagnose --json " + path.string());
  ASSERT_EQ(o.code, 0) << stderr_text();
  const auto d = json::parse(o.out);
  EXPECT_EQ(d["verdict"], "local-minimum");
  EXPECT_EQ(d["evidence"]["weak_classes"], json::array({3}));
  EXPECT_EQ(d["suggestions"].back()["parameter"], "prototype:3");
  EXPECT_EQ(d["suggestions"].back()["direction"], "refine");
}

TEST_F(CliTest, IngestCifarFixture) {
  boss::data::CifarRecord a, b;
  a.label = 3;
  b.label = 9;
  a.pixels.assign(3072, 10);
  b.pixels.assign(3072, 200);
  const auto bin = root_ / "batch.bin";
  boss::io::write_file(bin.string(), boss::data::encode_cifar10({a, b, a, b, a}));
  const auto o = boss("ingest-cifar10 --train " + bin.string() + " --test " + bin.string());
  ASSERT_EQ(o.code, 0) << stderr_text();
  const auto info = json::parse(o.out);
  EXPECT_EQ(info["kind"], "cifar10");
  EXPECT_EQ(info["size"], 10);
  EXPECT_EQ(info["train_size"], 5);
  EXPECT_EQ(info["classes"], 10);
  boss::io::write_file((root_ / "short.bin").string(), std::string(100, '\0'));
  EXPECT_EQ(boss("ingest-cifar10 --train " + (root_ / "short.bin").string()).code, 2);
}

TEST_F(CliTest, ProtosetCreateReplaceList) {
  const auto ds = dataset();
  const auto picks = train_picks(ds);
  const auto created = boss("protoset create --dataset " + ds + " --indices" + first_picks(ds));
  ASSERT_EQ(created.code, 0) << stderr_text();
  EXPECT_EQ(json::parse(created.out)["id"], 1);
  const auto replaced = boss("protoset replace --set 1 --class 2 --index " + std::to_string(picks[2][1]));
  ASSERT_EQ(replaced.code, 0) << stderr_text();
  const auto set = json::parse(replaced.out);
  EXPECT_EQ(set["parent"], 1);
  EXPECT_EQ(set["per_class"][2][0], picks[2][1]);
  EXPECT_EQ(boss("protoset replace --set 1 --class 2 --index 99999").code, 2);
  const auto list = json::parse(boss("protoset list --dataset " + ds).out);
  EXPECT_EQ(list["prototype_sets"].size(), 2u);
}

TEST_F(CliTest, TrainDumpEvalSelfTrain) {
  const auto ds = dataset();
  ASSERT_EQ(boss("protoset create --dataset " + ds + " --indices" + first_picks(ds)).code, 0);
  const auto cfg = write("train.json", R"({"total_steps": 10, "batch_size": 8, "unlabeled_ratio": 2, "eval_interval": 5})");
  const auto trained =
      boss("train --quiet --config " + cfg.string() + " --dataset " + ds + " --protoset 1 --steps 24 --seed 4");
  ASSERT_EQ(trained.code, 0) << stderr_text();
  const auto summary = json::parse(trained.out);
  EXPECT_EQ(summary["state"], "completed");
  EXPECT_EQ(summary["total_steps"], 24);
  EXPECT_EQ(summary["config"]["seed"], 4);

  const auto run_dir = root_ / "ws" / "runs" / "run-0001";
  const auto original = tr::encode_dump(tr::read_dump(tr::DumpFiles{run_dir / "dump"}));
  const auto dumped = boss("dump --run run-0001 --out " + (root_ / "redump").string());
  ASSERT_EQ(dumped.code, 0) << stderr_text();
  const tr::DumpFiles again{root_ / "redump"};
  EXPECT_EQ(boss::io::read_file(again.labels().string()), original.labels);
  EXPECT_EQ(boss::io::read_file(again.confidences().string()), original.confidences);
  EXPECT_EQ(boss::io::read_file(again.indices().string()), original.indices);

  const auto eval = boss("eval --run run-0001");
  ASSERT_EQ(eval.code, 0) << stderr_text();
  EXPECT_DOUBLE_EQ(json::parse(eval.out)["accuracy"].get<double>(), summary["best_accuracy"].get<double>());

  const auto self = boss("self-train --quiet --run run-0001 --k 2 --steps 6 --batch-size 8 --unlabeled-ratio 2");
  ASSERT_EQ(self.code, 0) << stderr_text();
  const auto child = json::parse(self.out);
  EXPECT_EQ(child["lineage"]["source_run"], "run-0001");
  EXPECT_EQ(child["lineage"]["parent_prototype_set"], 1);
  EXPECT_EQ(child["config"]["balance"], 4);
  EXPECT_NE(stderr_text().find("12 labeled samples"), std::string::npos);

  const auto d = boss("diagnose --json run-0001");
  ASSERT_EQ(d.code, 0);
  EXPECT_EQ(json::parse(d.out)["verdict"], "undetermined");
}

TEST_F(CliTest, DivergedRunExitsThree) {
  const auto ds = dataset();
  ASSERT_EQ(boss("protoset create --dataset " + ds + " --indices" + first_picks(ds)).code, 0);
  const auto o = boss("train --quiet --dataset " + ds +
                      " --protoset 1 --steps 20 --batch-size 8 --unlabeled-ratio 2 --lr 1e150");
  EXPECT_EQ(o.code, 3) << stderr_text();
  EXPECT_EQ(json::parse(o.out)["state"], "diverged");
}

TEST_F(CliTest, RunRootFromEnvironment) {
  const std::string cmd = "BOSS_RUN_ROOT=" + (root_ / "envroot").string() + " " + BOSS_CLI +
                          " gen-data --classes 2 --samples-per-class 5 --image-size 4 >/dev/null 2>&1";
  ASSERT_EQ(std::system(cmd.c_str()), 0);
  EXPECT_TRUE(fs::exists(root_ / "envroot" / "datasets"));
}
