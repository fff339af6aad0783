#pragma once

#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

namespace boss::trainer {

struct StepRecord {
  long long step = 0;
  double supervised = 0;
  double unsupervised = 0;
  double total = 0;
  std::size_t included = 0;
  double learning_rate = 0;

  nlohmann::json to_json() const {
    return {{"type", "step"}, {"step", step}, {"L_s", supervised}, {"L_u", unsupervised},
            {"L", total},      {"included", included}, {"lr", learning_rate}};
  }
  static StepRecord from_json(const nlohmann::json& j) {
    return {j.at("step").get<long long>(), j.at("L_s").get<double>(), j.at("L_u").get<double>(),
            j.at("L").get<double>(), j.at("included").get<std::size_t>(), j.value("lr", 0.0)};
  }
};

struct EvalRecord {
  long long step = 0;
  double accuracy = 0;                  // fraction in [0,1]
  std::vector<double> class_accuracy;
  double running_max = 0;
  std::vector<double> counts_all;       // c_n
  std::vector<double> counts_confident; // ĉ_n
  std::vector<double> thresholds;       // τ_n in force at this step

  nlohmann::json to_json() const {
    return {{"type", "eval"},
            {"step", step},
            {"accuracy", accuracy},
            {"class_accuracy", class_accuracy},
            {"running_max", running_max},
            {"counts", counts_all},
            {"confident_counts", counts_confident},
            {"thresholds", thresholds}};
  }
  static EvalRecord from_json(const nlohmann::json& j) {
    EvalRecord r;
    r.step = j.at("step").get<long long>();
    r.accuracy = j.at("accuracy").get<double>();
    r.class_accuracy = j.at("class_accuracy").get<std::vector<double>>();
    r.running_max = j.at("running_max").get<double>();
    r.counts_all = j.value("counts", std::vector<double>{});
    r.counts_confident = j.value("confident_counts", std::vector<double>{});
    r.thresholds = j.value("thresholds", std::vector<double>{});
    return r;
  }
};

struct DivergenceEvent {
  long long step = 0;
  std::string message;
};

struct RunMetrics {
  std::vector<StepRecord> steps;
  std::vector<EvalRecord> evals;
  std::optional<DivergenceEvent> divergence;

  double best_accuracy() const { return evals.empty() ? 0.0 : evals.back().running_max; }
  std::vector<double> accuracy_series() const {
    std::vector<double> out;
    for (const auto& e : evals) out.push_back(e.accuracy);
    return out;
  }
};

}  // namespace boss::trainer
