#pragma once

#include <cmath>
#include <numbers>
#include <vector>

#include "boss/classifier.hpp"
#include "boss/error.hpp"

namespace boss::nn {

/// Cosine decay η0·cos(7πk / 16K): ends at cos(7π/16) ≈ 0.195 of the base rate.
inline double cosine_lr(long long step, long long total_steps, double base_rate) {
  if (total_steps <= 0) throw ConfigError("total steps must be positive");
  if (step < 0) throw ConfigError("negative step");
  return base_rate * std::cos(7.0 * std::numbers::pi * double(step) / (16.0 * double(total_steps)));
}

struct SgdConfig {
  double learning_rate = 0.03;
  double momentum = 0.9;
  double weight_decay = 5e-4;
  long long total_steps = 1;
};

/// SGD with heavy-ball momentum and L2 weight decay folded into the velocity:
/// v <- m*v + g + wd*theta ; theta <- theta - lr(k)*v.
template <typename T>
class SgdMomentum {
 public:
  SgdMomentum(SgdConfig config, const Classifier<T>& model) : config_(config) {
    if (!(config.learning_rate > 0)) throw ConfigError("learning rate must be positive");
    if (config.momentum < 0 || config.momentum >= 1) throw ConfigError("momentum must be in [0,1)");
    if (config.weight_decay < 0) throw ConfigError("weight decay must be nonnegative");
    if (config.total_steps <= 0) throw ConfigError("total steps must be positive");
    for (const auto& p : model.parameters()) velocity_.emplace_back(p.value.shape());
  }

  const SgdConfig& config() const noexcept { return config_; }
  long long step_count() const noexcept { return step_; }
  const std::vector<Tensor<T>>& velocity() const noexcept { return velocity_; }
  double current_rate() const { return cosine_lr(step_, config_.total_steps, config_.learning_rate); }

  void step(Classifier<T>& model) {
    if (step_ >= config_.total_steps) throw ScheduleExhausted("optimizer schedule exhausted");
    auto& params = model.parameters();
    if (params.size() != velocity_.size()) throw DimensionError("optimizer/model parameter mismatch");
    const T lr = static_cast<T>(current_rate());
    const T beta = static_cast<T>(config_.momentum);
    const T wd = static_cast<T>(config_.weight_decay);
    for (std::size_t i = 0; i < params.size(); ++i) {
      auto& v = velocity_[i].storage();
      auto& theta = params[i].value.storage();
      const auto& g = params[i].grad.storage();
      for (std::size_t j = 0; j < v.size(); ++j) {
        v[j] = beta * v[j] + g[j] + wd * theta[j];
        theta[j] -= lr * v[j];
      }
    }
    ++step_;
  }

 private:
  SgdConfig config_;
  std::vector<Tensor<T>> velocity_;
  long long step_ = 0;
};

}  // namespace boss::nn
