#pragma once

#include <cmath>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "boss/augment.hpp"
#include "boss/balance.hpp"
#include "boss/diagnosis.hpp"
#include "boss/error.hpp"

namespace boss::trainer {

enum class Precision { f32, f64 };

struct RunConfig {
  std::string dataset_id;
  int prototype_set_id = 0;
  balance::BalanceConfig balance;
  std::size_t batch_size = 30;        // B
  double unlabeled_ratio = 9;         // r_u
  double total_kimg = 64;
  double learning_rate = 0.06;
  double momentum = 0.88;
  double weight_decay = 8e-4;
  std::uint64_t seed = 0;
  long long eval_interval = 0;        // 0: K/20
  Precision precision = Precision::f64;
  balance::CountMode count_mode = balance::CountMode::ema;
  double count_decay = 0.999;
  std::optional<long long> total_steps;   // overrides the kimg budget when set
  augment::AugmentPolicy weak = augment::AugmentPolicy::weak_default();
  augment::AugmentPolicy strong = augment::AugmentPolicy::strong_default();
  DiagnosisThresholds diagnosis;

  std::size_t unlabeled_batch() const {
    return static_cast<std::size_t>(std::llround(unlabeled_ratio * double(batch_size)));
  }

  /// K = ceil(kimg·1024 / (B + μ)) unless `total_steps` is pinned.
  long long steps() const {
    if (total_steps) return *total_steps;
    return static_cast<long long>(std::ceil(total_kimg * 1024.0 / double(batch_size + unlabeled_batch())));
  }

  long long eval_every() const {
    return eval_interval > 0 ? eval_interval : std::max<long long>(1, steps() / 20);
  }

  void validate() const {
    balance.validate();
    if (batch_size < 1) throw ConfigError("batch size must be positive");
    if (unlabeled_ratio < 0) throw ConfigError("unlabeled ratio must be nonnegative");
    if (unlabeled_batch() < 1) throw ConfigError("r_u * B must be at least 1");
    if (!(total_kimg > 0) && !total_steps) throw ConfigError("total kimg must be positive");
    if (total_steps && *total_steps <= 0) throw ConfigError("total steps must be positive");
    if (!(learning_rate > 0)) throw ConfigError("learning rate must be positive");
    if (momentum < 0 || momentum >= 1) throw ConfigError("momentum must be in [0,1)");
    if (weight_decay < 0) throw ConfigError("weight decay must be nonnegative");
    if (count_decay < 0 || count_decay >= 1) throw ConfigError("count decay must be in [0,1)");
    if (eval_interval < 0) throw ConfigError("eval interval must be nonnegative");
    weak.validate();
    strong.validate();
    if (weak.kind != augment::Kind::weak || strong.kind != augment::Kind::strong)
      throw ConfigError("augment policy kinds are swapped");
  }
};

inline nlohmann::json policy_to_json(const augment::AugmentPolicy& p) {
  std::vector<std::string> ops;
  for (auto op : p.strong_ops) ops.push_back(augment::to_string(op));
  return {{"kind", p.kind == augment::Kind::weak ? "weak" : "strong"},
          {"flip_probability", p.flip_probability},
          {"max_translate_fraction", p.max_translate_fraction},
          {"strong_ops", ops},
          {"ops_per_sample", p.ops_per_sample},
          {"cutout_fraction", p.cutout_fraction},
          {"max_scale_change", p.max_scale_change},
          {"max_noise_std", p.max_noise_std},
          {"min_quantize_levels", p.min_quantize_levels}};
}

inline augment::AugmentPolicy policy_from_json(const nlohmann::json& j, augment::AugmentPolicy p) {
  if (j.contains("kind")) p.kind = j["kind"].get<std::string>() == "strong" ? augment::Kind::strong : augment::Kind::weak;
  p.flip_probability = j.value("flip_probability", p.flip_probability);
  p.max_translate_fraction = j.value("max_translate_fraction", p.max_translate_fraction);
  if (j.contains("strong_ops")) {
    p.strong_ops.clear();
    for (const auto& s : j["strong_ops"]) p.strong_ops.push_back(augment::strong_op_from_string(s.get<std::string>()));
  }
  p.ops_per_sample = j.value("ops_per_sample", p.ops_per_sample);
  p.cutout_fraction = j.value("cutout_fraction", p.cutout_fraction);
  p.max_scale_change = j.value("max_scale_change", p.max_scale_change);
  p.max_noise_std = j.value("max_noise_std", p.max_noise_std);
  p.min_quantize_levels = j.value("min_quantize_levels", p.min_quantize_levels);
  return p;
}

inline nlohmann::json to_json(const RunConfig& c) {
  nlohmann::json j{{"dataset_id", c.dataset_id},
                   {"prototype_set_id", c.prototype_set_id},
                   {"balance", static_cast<int>(c.balance.method)},
                   {"tau", c.balance.tau},
                   {"delta", c.balance.delta},
                   {"lambda_u", c.balance.lambda_u},
                   {"batch_size", c.batch_size},
                   {"unlabeled_ratio", c.unlabeled_ratio},
                   {"total_kimg", c.total_kimg},
                   {"learning_rate", c.learning_rate},
                   {"momentum", c.momentum},
                   {"weight_decay", c.weight_decay},
                   {"seed", c.seed},
                   {"eval_interval", c.eval_interval},
                   {"precision", c.precision == Precision::f32 ? "f32" : "f64"},
                   {"count_mode", c.count_mode == balance::CountMode::ema ? "ema" : "exact-epoch"},
                   {"count_decay", c.count_decay},
                   {"weak", policy_to_json(c.weak)},
                   {"strong", policy_to_json(c.strong)},
                   {"diagnosis",
                    {{"min_evals", c.diagnosis.min_evals},
                     {"collapse_drop", c.diagnosis.collapse_drop},
                     {"plateau_band", c.diagnosis.plateau_band},
                     {"plateau_fraction", c.diagnosis.plateau_fraction},
                     {"weak_class_gap", c.diagnosis.weak_class_gap}}}};
  j["total_steps"] = c.total_steps ? nlohmann::json(*c.total_steps) : nlohmann::json(nullptr);
  return j;
}

/// Overlays the keys present in `j` onto `base`; absent keys keep their value.
inline RunConfig from_json(const nlohmann::json& j, RunConfig c = {}) {
  try {
    c.dataset_id = j.value("dataset_id", c.dataset_id);
    c.prototype_set_id = j.value("prototype_set_id", c.prototype_set_id);
    if (j.contains("balance")) c.balance.method = balance::method_from_int(j["balance"].get<int>());
    c.balance.tau = j.value("tau", c.balance.tau);
    c.balance.delta = j.value("delta", c.balance.delta);
    c.balance.lambda_u = j.value("lambda_u", c.balance.lambda_u);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.unlabeled_ratio = j.value("unlabeled_ratio", c.unlabeled_ratio);
    c.total_kimg = j.value("total_kimg", c.total_kimg);
    c.learning_rate = j.value("learning_rate", c.learning_rate);
    c.momentum = j.value("momentum", c.momentum);
    c.weight_decay = j.value("weight_decay", c.weight_decay);
    c.seed = j.value("seed", c.seed);
    c.eval_interval = j.value("eval_interval", c.eval_interval);
    if (j.contains("precision")) {
      const auto p = j["precision"].get<std::string>();
      if (p != "f32" && p != "f64") throw ConfigError("precision must be f32 or f64");
      c.precision = p == "f32" ? Precision::f32 : Precision::f64;
    }
    if (j.contains("count_mode")) {
      const auto m = j["count_mode"].get<std::string>();
      if (m != "ema" && m != "exact-epoch") throw ConfigError("count_mode must be ema or exact-epoch");
      c.count_mode = m == "ema" ? balance::CountMode::ema : balance::CountMode::exact_epoch;
    }
    c.count_decay = j.value("count_decay", c.count_decay);
    if (j.contains("total_steps")) {
      if (j["total_steps"].is_null()) c.total_steps.reset();
      else c.total_steps = j["total_steps"].get<long long>();
    }
    if (j.contains("weak")) c.weak = policy_from_json(j["weak"], c.weak);
    if (j.contains("strong")) c.strong = policy_from_json(j["strong"], c.strong);
    if (j.contains("diagnosis")) {
      const auto& d = j["diagnosis"];
      c.diagnosis.min_evals = d.value("min_evals", c.diagnosis.min_evals);
      c.diagnosis.collapse_drop = d.value("collapse_drop", c.diagnosis.collapse_drop);
      c.diagnosis.plateau_band = d.value("plateau_band", c.diagnosis.plateau_band);
      c.diagnosis.plateau_fraction = d.value("plateau_fraction", c.diagnosis.plateau_fraction);
      c.diagnosis.weak_class_gap = d.value("weak_class_gap", c.diagnosis.weak_class_gap);
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed run config: ") + e.what());
  }
  return c;
}

/// One row of the published hyper-parameter table.
struct Preset {
  std::string name;
  std::string description;
  std::vector<int> balance_methods;   // methods the row applies to; the first is the default
  double weight_decay;
  double learning_rate;
  std::size_t batch_size;
  double momentum;
  double unlabeled_ratio;
  double tau;
  double delta;

  RunConfig apply(RunConfig c, std::optional<int> method = std::nullopt) const {
    const int m = method.value_or(balance_methods.front());
    c.balance.method = balance::method_from_int(m);
    c.balance.tau = tau;
    c.balance.delta = delta;
    c.balance.lambda_u = 1.0;
    c.weight_decay = weight_decay;
    c.learning_rate = learning_rate;
    c.batch_size = batch_size;
    c.momentum = momentum;
    c.unlabeled_ratio = unlabeled_ratio;
    return c;
  }
};

inline const std::vector<Preset>& preset_table() {
  static const std::vector<Preset> table{
      {"fixmatch", "FixMatch baseline", {0}, 5e-4, 0.03, 64, 0.88, 7, 0.95, 0.0},
      {"cifar-balance1", "Cifar training, balance 1 and 4", {1, 4}, 8e-4, 0.06, 30, 0.88, 9, 0.95, 0.25},
      {"cifar-balance2", "Cifar training, balance 2 and 3", {2, 3}, 8e-4, 0.06, 30, 0.88, 9, 0.9, 0.0},
      {"cifar-selftrain", "Cifar self-training", {4}, 5e-4, 0.03, 64, 0.88, 7, 0.95, 0.25},
      {"svhn-balance1", "SVHN training, balance 1 and 4", {1, 4}, 6e-4, 0.04, 32, 0.85, 7, 0.95, 0.25},
      {"svhn-balance2", "SVHN training, balance 2 and 3", {2, 3}, 6e-4, 0.04, 32, 0.85, 7, 0.9, 0.0},
      {"svhn-selftrain", "SVHN self-training", {0}, 6e-4, 0.04, 32, 0.85, 7, 0.95, 0.25},
  };
  return table;
}

/// Looks up a preset by name. "<table>-balanceN" also resolves to the row that
/// covers method N (e.g. "cifar-balance4" is the balance 1,4 row with method 4).
inline RunConfig load_preset(const std::string& name, RunConfig base = {}) {
  for (const auto& p : preset_table())
    if (p.name == name) return p.apply(base);
  const auto dash = name.rfind("-balance");
  if (dash != std::string::npos && dash + 8 < name.size()) {
    const std::string family = name.substr(0, dash);
    const int method = std::atoi(name.c_str() + dash + 8);
    for (const auto& p : preset_table())
      if (p.name.rfind(family + "-balance", 0) == 0 &&
          std::find(p.balance_methods.begin(), p.balance_methods.end(), method) != p.balance_methods.end())
        return p.apply(base, method);
  }
  throw ConfigError("unknown preset '" + name + "'");
}

}  // namespace boss::trainer
