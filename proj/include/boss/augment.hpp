#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "boss/error.hpp"
#include "boss/rng.hpp"
#include "boss/tensor.hpp"

namespace boss::augment {

enum class Kind { weak, strong };

enum class StrongOp { brightness, contrast, noise, quantize, cutout };

inline std::string to_string(StrongOp op) {
  switch (op) {
    case StrongOp::brightness: return "brightness-scale";
    case StrongOp::contrast: return "contrast-scale";
    case StrongOp::noise: return "additive-noise";
    case StrongOp::quantize: return "quantize-levels";
    case StrongOp::cutout: return "cutout";
  }
  return "?";
}

inline StrongOp strong_op_from_string(const std::string& s) {
  for (auto op : {StrongOp::brightness, StrongOp::contrast, StrongOp::noise, StrongOp::quantize, StrongOp::cutout})
    if (to_string(op) == s) return op;
  throw ConfigError("unknown strong augmentation op '" + s + "'");
}

struct AugmentPolicy {
  Kind kind = Kind::weak;
  double flip_probability = 0.5;
  double max_translate_fraction = 0.125;
  std::vector<StrongOp> strong_ops{StrongOp::brightness, StrongOp::contrast, StrongOp::noise, StrongOp::quantize,
                                   StrongOp::cutout};
  int ops_per_sample = 2;
  double cutout_fraction = 0.5;
  // Magnitude ceilings for the photometric menu.
  double max_scale_change = 0.9;
  double max_noise_std = 0.1;
  int min_quantize_levels = 2;
  // Cutout fill, one value per channel (the dataset mean); empty means zero.
  std::vector<double> fill;
  double value_min = 0.0;
  double value_max = 1.0;

  static AugmentPolicy weak_default() { return AugmentPolicy{}; }
  static AugmentPolicy strong_default() {
    AugmentPolicy p;
    p.kind = Kind::strong;
    return p;
  }

  void validate() const {
    if (flip_probability < 0 || flip_probability > 1) throw ConfigError("flip probability must be in [0,1]");
    if (max_translate_fraction < 0 || max_translate_fraction > 0.5)
      throw ConfigError("max translate fraction must be in [0,0.5]");
    if (cutout_fraction < 0 || cutout_fraction > 0.5) throw ConfigError("cutout fraction must be in [0,0.5]");
    if (ops_per_sample < 0) throw ConfigError("ops per sample must be nonnegative");
    if (kind == Kind::strong && strong_ops.empty()) throw ConfigError("strong policy with empty op set");
    if (!(value_min < value_max)) throw ConfigError("invalid value range");
  }
};

struct WeakParams {
  bool flip = false;
  int shift_y = 0;
  int shift_x = 0;

  friend bool operator==(const WeakParams&, const WeakParams&) = default;
};

struct Rect {
  std::size_t top = 0, left = 0, height = 0, width = 0;
  friend bool operator==(const Rect&, const Rect&) = default;
};

struct OpDraw {
  StrongOp op;
  double magnitude = 0;        // scale factor, noise std or level count
  std::uint64_t noise_key = 0;
  Rect rect;                   // cutout only
};

struct StrongParams {
  WeakParams weak;
  std::vector<OpDraw> ops;
  std::optional<Rect> cutout;
};

namespace detail {

inline Rect draw_rect(Rng& rng, std::size_t h, std::size_t w, double fraction) {
  const auto max_side = std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(fraction * double(std::min(h, w)))));
  std::uniform_int_distribution<std::size_t> side(1, max_side);
  const std::size_t s = side(rng);
  std::uniform_int_distribution<std::size_t> cy(0, h - 1), cx(0, w - 1);
  const std::size_t y = cy(rng), x = cx(rng);
  const std::size_t top = y >= s / 2 ? y - s / 2 : 0;
  const std::size_t left = x >= s / 2 ? x - s / 2 : 0;
  return {top, left, std::min(s, h - top), std::min(s, w - left)};
}

}  // namespace detail

/// Flip and shift draws; stream 0 of the key, shared by weak and strong.
inline WeakParams draw_weak(const AugmentPolicy& policy, const AugmentKey& key, std::size_t height,
                            std::size_t width) {
  Rng rng = key.stream(0);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  WeakParams p;
  p.flip = u(rng) < policy.flip_probability;
  const int max_y = static_cast<int>(std::floor(policy.max_translate_fraction * double(height)));
  const int max_x = static_cast<int>(std::floor(policy.max_translate_fraction * double(width)));
  std::uniform_int_distribution<int> dy(-max_y, max_y), dx(-max_x, max_x);
  p.shift_y = dy(rng);
  p.shift_x = dx(rng);
  return p;
}

inline StrongParams draw_strong(const AugmentPolicy& policy, const AugmentKey& key, std::size_t height,
                                std::size_t width) {
  policy.validate();
  StrongParams p;
  p.weak = draw_weak(policy, key, height, width);
  Rng rng = key.stream(1);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  if (!policy.strong_ops.empty()) {
    std::uniform_int_distribution<std::size_t> pick(0, policy.strong_ops.size() - 1);
    for (int i = 0; i < policy.ops_per_sample; ++i) {
      OpDraw d{policy.strong_ops[pick(rng)]};
      switch (d.op) {
        case StrongOp::brightness:
        case StrongOp::contrast:
          d.magnitude = 1.0 + policy.max_scale_change * (2.0 * u(rng) - 1.0);
          break;
        case StrongOp::noise:
          d.magnitude = policy.max_noise_std * u(rng);
          d.noise_key = rng();
          break;
        case StrongOp::quantize: {
          std::uniform_int_distribution<int> levels(policy.min_quantize_levels, 8);
          d.magnitude = levels(rng);
          break;
        }
        case StrongOp::cutout:
          d.rect = detail::draw_rect(rng, height, width, policy.cutout_fraction > 0 ? policy.cutout_fraction : 0.25);
          break;
      }
      p.ops.push_back(d);
    }
  }
  if (policy.cutout_fraction > 0) p.cutout = detail::draw_rect(rng, height, width, policy.cutout_fraction);
  return p;
}

/// Applies a flip then an edge-replicated shift to one [C,H,W] image. Positive
/// shifts move content down/right.
template <typename T>
void apply_weak(std::span<const T> in, std::span<T> out, std::size_t channels, std::size_t height,
                std::size_t width, const WeakParams& p) {
  const auto clampi = [](long v, long hi) { return static_cast<std::size_t>(std::clamp(v, 0L, hi)); };
  for (std::size_t c = 0; c < channels; ++c)
    for (std::size_t y = 0; y < height; ++y) {
      const std::size_t sy = clampi(long(y) - p.shift_y, long(height) - 1);
      for (std::size_t x = 0; x < width; ++x) {
        std::size_t sx = clampi(long(x) - p.shift_x, long(width) - 1);
        if (p.flip) sx = width - 1 - sx;
        out[(c * height + y) * width + x] = in[(c * height + sy) * width + sx];
      }
    }
}

template <typename T>
void fill_rect(std::span<T> img, std::size_t channels, std::size_t height, std::size_t width, const Rect& r,
               const std::vector<double>& fill) {
  for (std::size_t c = 0; c < channels; ++c) {
    const T v = static_cast<T>(fill.empty() ? 0.0 : fill[c % fill.size()]);
    for (std::size_t y = r.top; y < r.top + r.height && y < height; ++y)
      for (std::size_t x = r.left; x < r.left + r.width && x < width; ++x) img[(c * height + y) * width + x] = v;
  }
}

template <typename T>
void apply_strong(std::span<const T> in, std::span<T> out, std::size_t channels, std::size_t height,
                  std::size_t width, const AugmentPolicy& policy, const StrongParams& p) {
  apply_weak(in, out, channels, height, width, p.weak);
  const T lo = static_cast<T>(policy.value_min), hi = static_cast<T>(policy.value_max);
  const auto clampv = [&](T v) { return std::clamp(v, lo, hi); };
  const std::size_t plane = height * width;
  for (const auto& d : p.ops) {
    switch (d.op) {
      case StrongOp::brightness:
        for (auto& v : out) v = clampv(static_cast<T>(v * d.magnitude));
        break;
      case StrongOp::contrast:
        for (std::size_t c = 0; c < channels; ++c) {
          auto ch = out.subspan(c * plane, plane);
          T mean{0};
          for (auto v : ch) mean += v;
          mean /= static_cast<T>(plane);
          for (auto& v : ch) v = clampv(static_cast<T>(mean + (v - mean) * d.magnitude));
        }
        break;
      case StrongOp::noise: {
        Rng rng(d.noise_key);
        std::normal_distribution<double> n(0.0, std::max(d.magnitude, 1e-12));
        for (auto& v : out) v = clampv(static_cast<T>(v + n(rng)));
        break;
      }
      case StrongOp::quantize: {
        const double levels = d.magnitude - 1.0;
        for (auto& v : out) {
          const double t = (double(v) - policy.value_min) / (policy.value_max - policy.value_min);
          v = clampv(static_cast<T>(policy.value_min + std::round(t * levels) / levels * (policy.value_max - policy.value_min)));
        }
        break;
      }
      case StrongOp::cutout:
        fill_rect(out, channels, height, width, d.rect, policy.fill);
        break;
    }
  }
  if (p.cutout) fill_rect(out, channels, height, width, *p.cutout, policy.fill);
}

/// Weak view α(x) of a single [C,H,W] image.
template <typename T>
Tensor<T> weak(const Tensor<T>& sample, const AugmentPolicy& policy, const AugmentKey& key) {
  if (sample.rank() != 3) throw DimensionError("augment expects a [C,H,W] image, got " + shape_string(sample.shape()));
  policy.validate();
  Tensor<T> out(sample.shape());
  apply_weak<T>(sample.values(), out.values(), sample.dim(0), sample.dim(1), sample.dim(2),
                draw_weak(policy, key, sample.dim(1), sample.dim(2)));
  return out;
}

/// Strong view A(x): the weak draw, then ops-per-sample menu draws, then cutout.
template <typename T>
Tensor<T> strong(const Tensor<T>& sample, const AugmentPolicy& policy, const AugmentKey& key) {
  if (sample.rank() != 3) throw DimensionError("augment expects a [C,H,W] image, got " + shape_string(sample.shape()));
  if (policy.kind != Kind::strong) throw ConfigError("strong() needs a strong policy");
  Tensor<T> out(sample.shape());
  apply_strong<T>(sample.values(), out.values(), sample.dim(0), sample.dim(1), sample.dim(2), policy,
                  draw_strong(policy, key, sample.dim(1), sample.dim(2)));
  return out;
}

/// Augments every row of a [B,C,H,W] batch. Row b uses key (seed, indices[b], step).
template <typename T>
Tensor<T> augment_batch(const Tensor<T>& batch, std::span<const std::size_t> indices, const AugmentPolicy& policy,
                        std::uint64_t seed, std::uint64_t step) {
  if (batch.rank() != 4 || indices.size() != batch.dim(0)) throw DimensionError("augment_batch shape mismatch");
  policy.validate();
  const std::size_t c = batch.dim(1), h = batch.dim(2), w = batch.dim(3);
  Tensor<T> out(batch.shape());
  for (std::size_t b = 0; b < batch.dim(0); ++b) {
    const AugmentKey key{seed, indices[b], step};
    if (policy.kind == Kind::weak)
      apply_weak<T>(batch.row(b), out.row(b), c, h, w, draw_weak(policy, key, h, w));
    else
      apply_strong<T>(batch.row(b), out.row(b), c, h, w, policy, draw_strong(policy, key, h, w));
  }
  return out;
}

}  // namespace boss::augment
