#pragma once

#include <algorithm>
#include <vector>

#include "boss/classifier.hpp"
#include "boss/dataset.hpp"
#include "boss/error.hpp"

namespace boss::trainer {

struct Accuracy {
  double overall = 0;
  std::vector<double> per_class;
  std::vector<std::size_t> correct;
  std::vector<std::size_t> total;
};

/// Tallies predictions against ground truth; per-class accuracy = correct_n / total_n.
inline Accuracy score(const std::vector<int>& predicted, const std::vector<int>& truth, std::size_t classes) {
  if (predicted.size() != truth.size()) throw DimensionError("prediction and truth counts differ");
  if (truth.empty()) throw DataError("cannot evaluate on an empty split");
  Accuracy a{0.0, std::vector<double>(classes, 0.0), std::vector<std::size_t>(classes, 0),
             std::vector<std::size_t>(classes, 0)};
  std::size_t hits = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    ++a.total.at(truth[i]);
    if (predicted[i] == truth[i]) {
      ++a.correct[truth[i]];
      ++hits;
    }
  }
  for (std::size_t c = 0; c < classes; ++c)
    a.per_class[c] = a.total[c] ? double(a.correct[c]) / double(a.total[c]) : 0.0;
  a.overall = double(hits) / double(truth.size());
  return a;
}

template <typename T>
std::vector<int> predict(const nn::Classifier<T>& model, const data::Dataset& dataset,
                         const std::vector<std::size_t>& indices, std::size_t chunk = 256) {
  std::vector<int> out;
  out.reserve(indices.size());
  for (std::size_t start = 0; start < indices.size(); start += chunk) {
    const std::size_t end = std::min(indices.size(), start + chunk);
    std::span<const std::size_t> part(indices.data() + start, end - start);
    const auto logits = model.infer(dataset.gather(part).template cast<T>());
    for (std::size_t b = 0; b < part.size(); ++b) {
      auto r = logits.row(b);
      out.push_back(static_cast<int>(std::max_element(r.begin(), r.end()) - r.begin()));
    }
  }
  return out;
}

/// Accuracy on the dataset's test split (or the given indices).
template <typename T>
Accuracy evaluate(const nn::Classifier<T>& model, const data::Dataset& dataset,
                  const std::vector<std::size_t>* indices = nullptr) {
  const auto& idx = indices ? *indices : dataset.test_indices();
  if (idx.empty()) throw DataError("cannot evaluate on an empty split");
  const auto predicted = predict(model, dataset, idx);
  std::vector<int> truth(idx.size());
  for (std::size_t i = 0; i < idx.size(); ++i) truth[i] = dataset.true_label(idx[i], data::LabelAccess::evaluation);
  return score(predicted, truth, dataset.classes());
}

}  // namespace boss::trainer
