#pragma once

#include <algorithm>
#include <string>
#include <vector>

#include "boss/error.hpp"
#include "boss/ssl_loss.hpp"

namespace boss::balance {

enum class Method : int { off = 0, threshold = 1, weight_all = 2, weight_confident = 3, hybrid = 4 };

inline Method method_from_int(int id) {
  if (id < 0 || id > 4) throw ConfigError("unknown balance method " + std::to_string(id));
  return static_cast<Method>(id);
}

enum class CountMode { exact_epoch, ema };

struct BalanceConfig {
  Method method = Method::off;
  double tau = 0.95;
  double delta = 0.0;
  double lambda_u = 1.0;

  void validate() const {
    method_from_int(static_cast<int>(method));
    if (!(tau > 0 && tau < 1)) throw ConfigError("tau must lie in (0,1)");
    if (!(delta >= 0 && delta < tau)) throw ConfigError("delta must satisfy 0 <= delta < tau");
    if (!(lambda_u >= 0)) throw ConfigError("lambda_u must be nonnegative");
  }
};

/// Pseudo-label class histograms over the unlabeled pool.
///
/// `all` counts every pseudo-label (c_n); `confident` counts only rows that
/// passed their threshold (ĉ_n). In exact-epoch mode batches accumulate and
/// `begin_epoch` starts a fresh recount; in EMA mode each batch histogram is
/// rescaled to the pool size and blended in with weight (1 - decay).
struct ClassCounts {
  std::vector<double> all;
  std::vector<double> confident;
  CountMode mode = CountMode::ema;
  double decay = 0.999;
  std::size_t pool_size = 0;
  std::size_t observed = 0;   // rows seen since construction

  ClassCounts() = default;
  ClassCounts(std::size_t classes, CountMode m, double ema_decay, std::size_t pool)
      : all(classes, 0.0), confident(classes, 0.0), mode(m), decay(ema_decay), pool_size(pool) {
    if (decay < 0 || decay >= 1) throw ConfigError("ema decay must lie in [0,1)");
  }

  std::size_t classes() const noexcept { return all.size(); }

  /// True once a full pool's worth of pseudo-labels has been observed.
  bool warmed_up() const noexcept { return observed >= pool_size && observed > 0; }

  void begin_epoch() {
    if (mode != CountMode::exact_epoch) return;
    std::fill(all.begin(), all.end(), 0.0);
    std::fill(confident.begin(), confident.end(), 0.0);
  }
};

/// Folds one pseudo-labelled batch into the counts. Rows contribute to
/// `confident` only where `pseudo.mask` is set; an empty mask counts none.
inline void update_counts(ClassCounts& counts, const loss::PseudoBatch& pseudo) {
  const std::size_t rows = pseudo.size();
  if (rows == 0) return;
  const std::size_t n = counts.classes();
  std::vector<double> hist(n, 0.0), hist_conf(n, 0.0);
  for (std::size_t b = 0; b < rows; ++b) {
    const int y = pseudo.labels[b];
    if (y < 0 || static_cast<std::size_t>(y) >= n) throw DataError("pseudo-label outside class range");
    hist[y] += 1.0;
    if (b < pseudo.mask.size() && pseudo.mask[b]) hist_conf[y] += 1.0;
  }
  if (counts.mode == CountMode::exact_epoch) {
    for (std::size_t i = 0; i < n; ++i) {
      counts.all[i] += hist[i];
      counts.confident[i] += hist_conf[i];
    }
  } else {
    const double scale = static_cast<double>(counts.pool_size) / static_cast<double>(rows);
    const double d = counts.decay;
    for (std::size_t i = 0; i < n; ++i) {
      counts.all[i] = d * counts.all[i] + (1.0 - d) * hist[i] * scale;
      counts.confident[i] = d * counts.confident[i] + (1.0 - d) * hist_conf[i] * scale;
    }
  }
  counts.observed += rows;
}

/// τ_n = τ − Δ·(1 − c_n / max(C)); every class gets τ when all counts are zero.
inline std::vector<double> class_thresholds(const std::vector<double>& counts, double tau, double delta) {
  std::vector<double> out(counts.size(), tau);
  if (counts.empty()) return out;
  const double top = *std::max_element(counts.begin(), counts.end());
  if (!(top > 0)) return out;
  for (std::size_t i = 0; i < counts.size(); ++i) out[i] = tau - delta * (1.0 - counts[i] / top);
  return out;
}

/// w_n = 1 / max(k_n, 1) over the chosen base counts.
inline std::vector<double> class_weights(const std::vector<double>& base_counts) {
  std::vector<double> w(base_counts.size());
  for (std::size_t i = 0; i < w.size(); ++i) w[i] = 1.0 / std::max(base_counts[i], 1.0);
  return w;
}

/// Z = mean weight over included rows (1 when nothing is included), so a batch
/// whose included rows share one weight keeps its unweighted magnitude.
inline double weight_normalizer(const std::vector<double>& weights, const loss::PseudoBatch& pseudo) {
  double sum = 0;
  std::size_t included = 0;
  for (std::size_t b = 0; b < pseudo.size(); ++b)
    if (pseudo.mask[b]) {
      sum += weights[pseudo.labels[b]];
      ++included;
    }
  return included == 0 ? 1.0 : sum / static_cast<double>(included);
}

struct BalancePlan {
  std::vector<double> thresholds;
  std::vector<double> weights;
  bool weighted = false;   // Z must be taken per batch via `normalizer`

  /// The loss normalizer for a batch whose mask was set with `thresholds`.
  double normalizer(const loss::PseudoBatch& pseudo) const {
    return weighted ? weight_normalizer(weights, pseudo) : 1.0;
  }
};

/// Thresholds and weights for each balancing method:
///   0: (τ, 1)  1: (τ_n, 1)  2: (τ, 1/c_n)  3: (τ, 1/ĉ_n)  4: (τ_n, 1/ĉ_n).
inline BalancePlan balance_plan(const BalanceConfig& config, const ClassCounts& counts) {
  config.validate();
  const std::size_t n = counts.classes();
  BalancePlan plan{std::vector<double>(n, config.tau), std::vector<double>(n, 1.0), false};
  switch (config.method) {
    case Method::off:
      break;
    case Method::threshold:
      plan.thresholds = class_thresholds(counts.all, config.tau, config.delta);
      break;
    case Method::weight_all:
      plan.weights = class_weights(counts.all);
      plan.weighted = true;
      break;
    case Method::weight_confident:
      plan.weights = class_weights(counts.confident);
      plan.weighted = true;
      break;
    case Method::hybrid:
      plan.thresholds = class_thresholds(counts.all, config.tau, config.delta);
      plan.weights = class_weights(counts.confident);
      plan.weighted = true;
      break;
  }
  return plan;
}

/// The plan actually used while training: until a full pool's worth of
/// pseudo-labels has been counted every method behaves as method 0.
inline BalancePlan training_plan(const BalanceConfig& config, const ClassCounts& counts) {
  if (counts.warmed_up()) return balance_plan(config, counts);
  BalanceConfig off = config;
  off.method = Method::off;
  return balance_plan(off, counts);
}

}  // namespace boss::balance
