#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "boss/augment.hpp"
#include "boss/classifier.hpp"
#include "boss/error.hpp"
#include "boss/tensor.hpp"

namespace boss::loss {

struct LabeledBatch {
  Tensor<double> samples;             // [B,C,H,W]
  std::vector<int> labels;            // B entries in [0,N)
  std::vector<std::size_t> indices;   // dataset positions, used as augmentation keys
};

struct UnlabeledBatch {
  Tensor<double> samples;                    // [mu,C,H,W]
  std::vector<std::size_t> source_indices;   // positions in the unlabeled pool
};

/// Weak-view predictions on unlabeled rows. `mask` stays empty until thresholds apply.
struct PseudoBatch {
  Tensor<double> probs;          // q_b, [mu,N]; constant with respect to gradients
  std::vector<int> labels;       // argmax q_b
  std::vector<double> confidence;
  std::vector<bool> mask;

  std::size_t size() const noexcept { return labels.size(); }
  std::size_t classes() const { return probs.rank() == 2 ? probs.dim(1) : 0; }
};

struct LossReport {
  double supervised = 0;
  double unsupervised = 0;
  double total = 0;
  double lambda_u = 0;
  std::size_t included = 0;
  std::vector<std::size_t> included_per_class;
};

/// A scalar loss with its gradient at the logits.
template <typename T>
struct LossGrad {
  double value = 0;
  Tensor<T> grad;
};

/// Row-wise log-softmax through log-sum-exp.
template <typename T>
Tensor<T> log_softmax(const Tensor<T>& logits) {
  if (logits.rank() != 2) throw DimensionError("log_softmax expects [B,N] logits");
  Tensor<T> out(logits.shape());
  const std::size_t n = logits.dim(1);
  for (std::size_t b = 0; b < logits.dim(0); ++b) {
    auto in = logits.row(b);
    auto o = out.row(b);
    const T mx = *std::max_element(in.begin(), in.end());
    T s{0};
    for (std::size_t j = 0; j < n; ++j) s += std::exp(in[j] - mx);
    const T lse = mx + std::log(s);
    for (std::size_t j = 0; j < n; ++j) o[j] = in[j] - lse;
  }
  return out;
}

template <typename T>
Tensor<T> softmax(const Tensor<T>& logits) {
  Tensor<T> out = log_softmax(logits);
  for (auto& v : out.storage()) v = std::exp(v);
  return out;
}

namespace detail {

inline void check_label(int label, std::size_t classes) {
  if (label < 0 || static_cast<std::size_t>(label) >= classes)
    throw DataError("label " + std::to_string(label) + " outside [0," + std::to_string(classes) + ")");
}

// -log p[label] from log-probabilities, floored so probabilities below 1e-300 never appear.
template <typename T>
double cross_entropy(std::span<const T> logp, int label) {
  constexpr double floor = -690.7755278982137;  // ln(1e-300)
  return -std::max(static_cast<double>(logp[label]), floor);
}

}  // namespace detail

/// Mean cross-entropy of logits against hard labels, with d(mean)/d(logits).
template <typename T>
LossGrad<T> supervised_loss(const Tensor<T>& logits, const std::vector<int>& labels) {
  if (logits.rank() != 2 || logits.dim(0) != labels.size() || labels.empty())
    throw DimensionError("supervised loss needs nonempty [B,N] logits matching labels");
  const std::size_t batch = logits.dim(0), classes = logits.dim(1);
  for (int y : labels) detail::check_label(y, classes);
  const Tensor<T> logp = log_softmax(logits);
  LossGrad<T> out{0.0, Tensor<T>(logits.shape())};
  double sum = 0;
  for (std::size_t b = 0; b < batch; ++b) {
    auto lp = logp.row(b);
    sum += detail::cross_entropy<T>(lp, labels[b]);
    auto g = out.grad.row(b);
    for (std::size_t j = 0; j < classes; ++j) g[j] = std::exp(lp[j]) / static_cast<T>(batch);
    g[labels[b]] -= T{1} / static_cast<T>(batch);
  }
  out.value = sum / static_cast<double>(batch);
  return out;
}

/// Pseudo-labels from weak-view logits. Probabilities are detached copies.
template <typename T>
PseudoBatch pseudo_label(const Tensor<T>& weak_logits) {
  if (weak_logits.rank() != 2 || weak_logits.dim(0) == 0)
    throw DimensionError("pseudo_label needs nonempty [mu,N] logits");
  PseudoBatch p;
  p.probs = softmax(weak_logits).template cast<double>();
  const std::size_t rows = p.probs.dim(0);
  p.labels.resize(rows);
  p.confidence.resize(rows);
  for (std::size_t b = 0; b < rows; ++b) {
    auto r = p.probs.row(b);
    const auto it = std::max_element(r.begin(), r.end());
    p.labels[b] = static_cast<int>(it - r.begin());
    p.confidence[b] = *it;
  }
  return p;
}

/// mask_b = confidence_b >= thresholds[label_b].
inline void apply_thresholds(PseudoBatch& pseudo, const std::vector<double>& thresholds) {
  if (thresholds.size() != pseudo.classes()) throw DimensionError("threshold vector length must equal class count");
  pseudo.mask.assign(pseudo.size(), false);
  for (std::size_t b = 0; b < pseudo.size(); ++b)
    pseudo.mask[b] = pseudo.confidence[b] >= thresholds[pseudo.labels[b]];
}

struct UnsupervisedTerms {
  std::size_t included = 0;
  std::vector<std::size_t> included_per_class;
};

/// L_u = (1/(Z·mu)) Σ_b 1{conf_b >= τ_{q̂_b}} · w_{q̂_b} · H(q̂_b, softmax(strong_logits_b)).
///
/// Sets `pseudo.mask` from `thresholds`. Masked-out rows contribute exactly zero
/// loss and zero gradient. With unit weights, Z = 1 and a uniform threshold
/// this is the plain FixMatch consistency loss.
template <typename T>
LossGrad<T> unsupervised_loss(const Tensor<T>& strong_logits, PseudoBatch& pseudo,
                              const std::vector<double>& thresholds, const std::vector<double>& weights,
                              double normalizer, UnsupervisedTerms* terms = nullptr) {
  if (!(normalizer > 0)) throw ConfigError("loss normalizer Z must be positive");
  const std::size_t classes = pseudo.classes();
  if (strong_logits.rank() != 2 || strong_logits.dim(0) != pseudo.size() || strong_logits.dim(1) != classes)
    throw DimensionError("strong logits do not match pseudo batch");
  if (weights.size() != classes) throw DimensionError("weight vector length must equal class count");
  apply_thresholds(pseudo, thresholds);
  const std::size_t mu = pseudo.size();
  const double scale = 1.0 / (normalizer * static_cast<double>(mu));
  LossGrad<T> out{0.0, Tensor<T>(strong_logits.shape())};
  if (terms) terms->included_per_class.assign(classes, 0);
  const Tensor<T> logp = log_softmax(strong_logits);
  double sum = 0;
  for (std::size_t b = 0; b < mu; ++b) {
    if (!pseudo.mask[b]) continue;
    const int label = pseudo.labels[b];
    const double w = weights[label];
    auto lp = logp.row(b);
    sum += w * detail::cross_entropy<T>(lp, label);
    const T coef = static_cast<T>(w * scale);
    auto g = out.grad.row(b);
    for (std::size_t j = 0; j < classes; ++j) g[j] = coef * std::exp(lp[j]);
    g[label] -= coef;
    if (terms) {
      ++terms->included;
      ++terms->included_per_class[label];
    }
  }
  out.value = sum / (normalizer * static_cast<double>(mu));
  return out;
}

inline double total_loss(double supervised, double unsupervised, double lambda_u) {
  return supervised + lambda_u * unsupervised;
}

// Model-level entry points: run the augmentation and forward pass, then the loss.

template <typename T>
LossGrad<T> supervised_loss(nn::Classifier<T>& model, const LabeledBatch& batch, const augment::AugmentPolicy& weak,
                            std::uint64_t seed, std::uint64_t step) {
  const auto view = augment::augment_batch<double>(batch.samples, batch.indices, weak, seed, step);
  return supervised_loss(model.forward(view.template cast<T>()), batch.labels);
}

template <typename T>
PseudoBatch pseudo_label(const nn::Classifier<T>& model, const UnlabeledBatch& batch,
                         const augment::AugmentPolicy& weak, std::uint64_t seed, std::uint64_t step) {
  const auto view = augment::augment_batch<double>(batch.samples, batch.source_indices, weak, seed, step);
  return pseudo_label(model.infer(view.template cast<T>()));
}

template <typename T>
LossGrad<T> unsupervised_loss(nn::Classifier<T>& model, PseudoBatch& pseudo, const UnlabeledBatch& batch,
                              const augment::AugmentPolicy& strong, std::uint64_t seed, std::uint64_t step,
                              const std::vector<double>& thresholds, const std::vector<double>& weights,
                              double normalizer, UnsupervisedTerms* terms = nullptr) {
  const auto view = augment::augment_batch<double>(batch.samples, batch.source_indices, strong, seed, step);
  return unsupervised_loss(model.forward(view.template cast<T>()), pseudo, thresholds, weights, normalizer, terms);
}

}  // namespace boss::loss
