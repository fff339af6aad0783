#pragma once

#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "boss/error.hpp"
#include "boss/rng.hpp"
#include "boss/tensor.hpp"

namespace boss::data {

/// Why a caller reads a ground-truth label. Training itself never needs one.
enum class LabelAccess { prototype_selection = 0, evaluation = 1, audit = 2 };

struct LabelAccessCounts {
  std::size_t prototype_selection = 0;
  std::size_t evaluation = 0;
  std::size_t audit = 0;

  std::size_t total() const noexcept { return prototype_selection + evaluation + audit; }
  friend bool operator==(const LabelAccessCounts&, const LabelAccessCounts&) = default;
};

/// Images in [0,1] with held-back ground truth.
///
/// True labels sit behind `true_label`, which tallies every read by purpose so
/// tests can prove the training path never peeks at them. Immutable after
/// construction apart from that tally.
class Dataset {
 public:
  Dataset(std::string id, Tensor<double> images, std::vector<int> labels, std::size_t classes)
      : id_(std::move(id)), images_(std::move(images)), labels_(std::move(labels)), classes_(classes) {
    if (images_.rank() != 4) throw DimensionError("dataset images must be [M,C,H,W]");
    if (images_.dim(0) != labels_.size()) throw DataError("image and label counts differ");
    for (int y : labels_)
      if (y < 0 || static_cast<std::size_t>(y) >= classes_) throw DataError("label outside class range");
    compute_stats();
  }

  Dataset(const Dataset& other)
      : id_(other.id_), images_(other.images_), labels_(other.labels_), classes_(other.classes_),
        mean_(other.mean_), stddev_(other.stddev_), train_(other.train_), test_(other.test_) {}

  const std::string& id() const noexcept { return id_; }
  const Tensor<double>& images() const noexcept { return images_; }
  std::size_t size() const noexcept { return labels_.size(); }
  std::size_t classes() const noexcept { return classes_; }
  std::size_t channels() const { return images_.dim(1); }
  std::size_t height() const { return images_.dim(2); }
  std::size_t width() const { return images_.dim(3); }
  const std::vector<double>& channel_mean() const noexcept { return mean_; }
  const std::vector<double>& channel_std() const noexcept { return stddev_; }

  /// Training pool: every sample outside the test split.
  const std::vector<std::size_t>& train_indices() const noexcept { return train_; }
  const std::vector<std::size_t>& test_indices() const noexcept { return test_; }

  Tensor<double> image(std::size_t i) const {
    check_index(i);
    Shape s{images_.dim(1), images_.dim(2), images_.dim(3)};
    auto r = images_.row(i);
    return Tensor<double>(s, std::vector<double>(r.begin(), r.end()));
  }

  Tensor<double> gather(std::span<const std::size_t> indices) const {
    for (auto i : indices) check_index(i);
    return gather_rows(images_, indices);
  }

  int true_label(std::size_t i, LabelAccess purpose) const {
    check_index(i);
    access_[static_cast<int>(purpose)].fetch_add(1, std::memory_order_relaxed);
    return labels_[i];
  }

  LabelAccessCounts label_reads() const {
    return {access_[0].load(), access_[1].load(), access_[2].load()};
  }
  void reset_label_reads() const {
    for (auto& a : access_) a.store(0);
  }

  /// Stratified split: a seeded `test_fraction` of each class goes to test.
  void split_stratified(double test_fraction, std::uint64_t seed) {
    std::vector<std::vector<std::size_t>> by_class(classes_);
    for (std::size_t i = 0; i < labels_.size(); ++i) by_class[labels_[i]].push_back(i);
    train_.clear();
    test_.clear();
    Rng rng(derive_key(seed, 0x5917u));
    for (auto& members : by_class) {
      std::shuffle(members.begin(), members.end(), rng);
      const auto n_test = static_cast<std::size_t>(std::llround(test_fraction * double(members.size())));
      test_.insert(test_.end(), members.begin(), members.begin() + n_test);
      train_.insert(train_.end(), members.begin() + n_test, members.end());
    }
    std::sort(train_.begin(), train_.end());
    std::sort(test_.begin(), test_.end());
  }

  /// Uses an explicit split (e.g. CIFAR-10's separate test batch).
  void set_split(std::vector<std::size_t> train, std::vector<std::size_t> test) {
    for (auto i : train) check_index(i);
    for (auto i : test) check_index(i);
    train_ = std::move(train);
    test_ = std::move(test);
  }

  bool in_test_split(std::size_t i) const { return std::binary_search(test_.begin(), test_.end(), i); }

 private:
  void check_index(std::size_t i) const {
    if (i >= labels_.size())
      throw ValidationError("sample index " + std::to_string(i) + " out of range (size " +
                            std::to_string(labels_.size()) + ")");
  }

  void compute_stats() {
    const std::size_t c = images_.dim(1), plane = images_.dim(2) * images_.dim(3), m = images_.dim(0);
    mean_.assign(c, 0.0);
    stddev_.assign(c, 0.0);
    if (m == 0) return;
    for (std::size_t ch = 0; ch < c; ++ch) {
      double s = 0, s2 = 0;
      for (std::size_t n = 0; n < m; ++n) {
        const double* p = &images_.at(n, ch, 0, 0);
        for (std::size_t k = 0; k < plane; ++k) {
          s += p[k];
          s2 += p[k] * p[k];
        }
      }
      const double count = double(m * plane);
      mean_[ch] = s / count;
      stddev_[ch] = std::sqrt(std::max(0.0, s2 / count - mean_[ch] * mean_[ch]));
    }
  }

  std::string id_;
  Tensor<double> images_;
  std::vector<int> labels_;
  std::size_t classes_;
  std::vector<double> mean_, stddev_;
  std::vector<std::size_t> train_, test_;
  mutable std::array<std::atomic<std::size_t>, 3> access_{};
};

using DatasetPtr = std::shared_ptr<const Dataset>;

}  // namespace boss::data
