#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "boss/balance.hpp"
#include "boss/checkpoint.hpp"
#include "boss/classifier.hpp"
#include "boss/config.hpp"
#include "boss/dataset.hpp"
#include "boss/diagnosis.hpp"
#include "boss/evaluate.hpp"
#include "boss/metrics.hpp"
#include "boss/optimizer.hpp"
#include "boss/prototypes.hpp"
#include "boss/ssl_loss.hpp"

namespace boss::trainer {

/// Dataset rows for one step: the labeled draw and the unlabeled draw.
struct BatchDraw {
  std::vector<std::size_t> labeled;
  std::vector<int> labels;
  std::vector<std::size_t> unlabeled;
};

/// Labeled: B draws with replacement, class-stratified round robin starting at
/// class (step·B mod N); a prototype is picked uniformly within its class.
/// Unlabeled: μ distinct pool positions drawn uniformly.
inline BatchDraw compose_batches(Rng& rng, const data::PrototypeSet& prototypes,
                                 const std::vector<std::size_t>& pool, std::size_t batch_size,
                                 std::size_t unlabeled_size, long long step = 0) {
  if (pool.empty()) throw ConfigError("unlabeled pool is empty");
  if (unlabeled_size > pool.size())
    throw ConfigError("unlabeled batch " + std::to_string(unlabeled_size) + " exceeds pool size " +
                      std::to_string(pool.size()));
  const std::size_t n = prototypes.classes();
  if (n == 0) throw ConfigError("prototype set is empty");
  BatchDraw d;
  d.labeled.reserve(batch_size);
  const std::size_t offset = static_cast<std::size_t>(step) * batch_size % n;
  for (std::size_t i = 0; i < batch_size; ++i) {
    const std::size_t cls = (offset + i) % n;
    const auto& members = prototypes.per_class[cls];
    std::size_t pick = 0;
    if (members.size() > 1) pick = std::uniform_int_distribution<std::size_t>(0, members.size() - 1)(rng);
    d.labeled.push_back(members[pick]);
    d.labels.push_back(static_cast<int>(cls));
  }
  // Partial Fisher-Yates over pool positions.
  std::vector<std::size_t> order(pool.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  d.unlabeled.reserve(unlabeled_size);
  for (std::size_t i = 0; i < unlabeled_size; ++i) {
    const std::size_t j = std::uniform_int_distribution<std::size_t>(i, order.size() - 1)(rng);
    std::swap(order[i], order[j]);
    d.unlabeled.push_back(pool[order[i]]);
  }
  return d;
}

enum class RunState { pending, running, diverged, completed, stopped, failed };

inline std::string to_string(RunState s) {
  switch (s) {
    case RunState::pending: return "pending";
    case RunState::running: return "running";
    case RunState::diverged: return "diverged";
    case RunState::completed: return "completed";
    case RunState::stopped: return "stopped";
    case RunState::failed: return "failed";
  }
  return "?";
}

inline RunState run_state_from_string(const std::string& s) {
  for (auto r : {RunState::pending, RunState::running, RunState::diverged, RunState::completed, RunState::stopped,
                 RunState::failed})
    if (to_string(r) == s) return r;
  throw FormatError("unknown run state '" + s + "'");
}

inline bool is_terminal(RunState s) { return s != RunState::pending && s != RunState::running; }

struct TrainCallbacks {
  std::function<void(const StepRecord&)> on_step;
  std::function<void(const EvalRecord&)> on_eval;
  std::function<bool()> should_stop;
};

struct TrainResult {
  RunState state = RunState::completed;
  RunMetrics metrics;
  nn::Classifier<double> model;
  std::vector<nn::CheckpointRecord> best;
  balance::ClassCounts counts;
  std::vector<double> thresholds;
  long long steps_completed = 0;
};

/// Where a run writes its artifacts; empty path means nothing is persisted.
struct RunOutput {
  std::filesystem::path dir;

  bool enabled() const { return !dir.empty(); }
  std::filesystem::path metrics() const { return dir / "metrics.jsonl"; }
  std::filesystem::path best_checkpoint() const { return dir / "best.ckpt"; }
  std::filesystem::path final_checkpoint() const { return dir / "final.ckpt"; }
  std::filesystem::path config() const { return dir / "config.json"; }
};

/// Augmentation seed streams of a run.
enum class ViewStream { labeled_weak = 0, unlabeled_weak = 1, unlabeled_strong = 2 };

inline std::uint64_t view_seed(std::uint64_t seed, ViewStream stream) {
  return derive_key(seed, 0xa06u, static_cast<int>(stream));
}

/// The generator behind a run's batch composition.
inline Rng batch_rng(std::uint64_t seed) { return Rng(derive_key(seed, 0xba7c4u)); }

namespace detail {

template <typename T>
void scale(Tensor<T>& t, double s) {
  for (auto& v : t.storage()) v = static_cast<T>(v * s);
}

// Exact recount: weak-view inference over the whole pool, thresholded with
// the plan currently in force for the confident counts.
template <typename T>
void recount(balance::ClassCounts& counts, const nn::Classifier<T>& model, const data::Dataset& dataset,
             const std::vector<std::size_t>& pool, const std::vector<double>& thresholds) {
  counts.begin_epoch();
  constexpr std::size_t chunk = 256;
  for (std::size_t start = 0; start < pool.size(); start += chunk) {
    std::span<const std::size_t> part(pool.data() + start, std::min(chunk, pool.size() - start));
    auto pseudo = loss::pseudo_label(model.infer(dataset.gather(part).template cast<T>()));
    loss::apply_thresholds(pseudo, thresholds);
    balance::update_counts(counts, pseudo);
  }
}

template <typename T>
TrainResult train_typed(const RunConfig& config, const data::Dataset& dataset, const data::PrototypeSet& prototypes,
                        const TrainCallbacks& callbacks, const RunOutput& output) {
  config.validate();
  data::validate_prototypes(prototypes, dataset);
  const std::size_t classes = dataset.classes();
  const nn::InputShape input{dataset.channels(), dataset.height(), dataset.width()};
  const auto& pool = dataset.train_indices();
  const std::size_t mu = config.unlabeled_batch();
  if (mu > pool.size())
    throw ConfigError("unlabeled batch " + std::to_string(mu) + " exceeds pool size " + std::to_string(pool.size()));
  const long long total_steps = config.steps();
  const long long eval_every = config.eval_every();

  auto model = nn::Classifier<T>::standard(input, classes);
  model.initialize(config.seed);
  nn::SgdMomentum<T> opt({config.learning_rate, config.momentum, config.weight_decay, total_steps}, model);

  auto weak = config.weak;
  auto strong = config.strong;
  weak.fill = strong.fill = dataset.channel_mean();

  TrainResult result{RunState::completed, {}, nn::Classifier<double>(input, nn::standard_layers(input, classes), classes),
                     {}, balance::ClassCounts(classes, config.count_mode, config.count_decay, pool.size()), {}, 0};
  auto& counts = result.counts;
  auto& metrics = result.metrics;

  std::ofstream metrics_out;
  if (output.enabled()) {
    std::filesystem::create_directories(output.dir);
    metrics_out.open(output.metrics(), std::ios::app);
  }
  const auto emit = [&](const nlohmann::json& j) {
    if (metrics_out) {
      metrics_out << j.dump() << '\n';
      metrics_out.flush();
    }
  };

  Rng rng = batch_rng(config.seed);
  const auto labeled_weak_seed = view_seed(config.seed, ViewStream::labeled_weak);
  const auto unlabeled_weak_seed = view_seed(config.seed, ViewStream::unlabeled_weak);
  const auto unlabeled_strong_seed = view_seed(config.seed, ViewStream::unlabeled_strong);
  const long long steps_per_epoch = static_cast<long long>((pool.size() + mu - 1) / mu);
  std::vector<double> thresholds(classes, config.balance.tau);
  double running_max = -1.0;

  for (long long step = 0; step < total_steps; ++step) {
    if (callbacks.should_stop && callbacks.should_stop()) {
      result.state = RunState::stopped;
      break;
    }
    if (config.count_mode == balance::CountMode::exact_epoch && step > 0 && step % steps_per_epoch == 0)
      recount(counts, model, dataset, pool, thresholds);

    StepRecord rec;
    rec.step = step;
    rec.learning_rate = opt.current_rate();
    try {
      const auto draw = compose_batches(rng, prototypes, pool, config.batch_size, mu, step);
      model.zero_grad();

      const auto xl = dataset.gather(draw.labeled);
      const auto xl_weak = augment::augment_batch<double>(xl, draw.labeled, weak, labeled_weak_seed, step);
      const auto ls = loss::supervised_loss(model.forward(xl_weak.template cast<T>()), draw.labels);
      model.backward(ls.grad);

      const auto xu = dataset.gather(draw.unlabeled);
      const auto xu_weak = augment::augment_batch<double>(xu, draw.unlabeled, weak, unlabeled_weak_seed, step);
      auto pseudo = loss::pseudo_label(model.infer(xu_weak.template cast<T>()));

      const auto plan = balance::training_plan(config.balance, counts);
      thresholds = plan.thresholds;
      loss::apply_thresholds(pseudo, plan.thresholds);
      const double z = plan.normalizer(pseudo);

      const auto xu_strong = augment::augment_batch<double>(xu, draw.unlabeled, strong, unlabeled_strong_seed, step);
      loss::UnsupervisedTerms terms;
      auto lu = loss::unsupervised_loss(model.forward(xu_strong.template cast<T>()), pseudo, plan.thresholds,
                                        plan.weights, z, &terms);
      scale(lu.grad, config.balance.lambda_u);
      model.backward(lu.grad);

      if (config.count_mode == balance::CountMode::ema) balance::update_counts(counts, pseudo);
      else counts.observed += pseudo.size();

      rec.supervised = ls.value;
      rec.unsupervised = lu.value;
      rec.total = loss::total_loss(ls.value, lu.value, config.balance.lambda_u);
      rec.included = terms.included;
      if (!std::isfinite(rec.total)) throw NumericDivergence("non-finite loss at step " + std::to_string(step));
      for (const auto& p : model.parameters())
        if (!p.grad.all_finite()) throw NumericDivergence("non-finite gradient at step " + std::to_string(step));
      opt.step(model);
      for (const auto& p : model.parameters())
        if (!p.value.all_finite()) throw NumericDivergence("non-finite parameters at step " + std::to_string(step));
    } catch (const NumericDivergence& e) {
      metrics.divergence = DivergenceEvent{step, e.what()};
      emit({{"type", "divergence"}, {"step", step}, {"message", e.what()}});
      result.state = RunState::diverged;
      break;
    }
    metrics.steps.push_back(rec);
    emit(rec.to_json());
    if (callbacks.on_step) callbacks.on_step(rec);
    result.steps_completed = step + 1;

    if ((step + 1) % eval_every == 0 || step + 1 == total_steps) {
      const auto acc = evaluate(model, dataset);
      EvalRecord ev{step + 1, acc.overall, acc.per_class, 0.0, counts.all, counts.confident, thresholds};
      if (acc.overall > running_max) {
        running_max = acc.overall;
        result.best = nn::snapshot(model);
        if (output.enabled()) io::write_file(output.best_checkpoint().string(), nn::encode_checkpoint(result.best));
      }
      ev.running_max = running_max;
      metrics.evals.push_back(ev);
      emit(ev.to_json());
      if (callbacks.on_eval) callbacks.on_eval(ev);
    }
  }

  result.thresholds = thresholds;
  result.model = nn::convert<double>(model);
  if (output.enabled()) nn::save_checkpoint(output.final_checkpoint().string(), result.model);
  return result;
}

}  // namespace detail

/// Runs the full consistency-training loop for `config.steps()` steps.
///
/// Each step: compose batches, weak views, pseudo-labels, balance plan,
/// L_s + λ_u·L_u, backward, SGD with the cosine schedule. Evaluates every
/// `eval_every()` steps and at the end. NaN/Inf ends the run in the
/// `diverged` state with the metrics gathered so far.
inline TrainResult train(const RunConfig& config, const data::Dataset& dataset, const data::PrototypeSet& prototypes,
                         const TrainCallbacks& callbacks = {}, const RunOutput& output = {}) {
  if (config.precision == Precision::f32)
    return detail::train_typed<float>(config, dataset, prototypes, callbacks, output);
  return detail::train_typed<double>(config, dataset, prototypes, callbacks, output);
}

}  // namespace boss::trainer
