#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "json.hpp"

#include "boss/dataset.hpp"
#include "boss/error.hpp"
#include "boss/rng.hpp"

namespace boss::data {

enum class Primitive { disk, square, hbar, vbar, cross, ring, triangle, diagonal };

inline constexpr std::array<const char*, 8> kPrimitiveNames{"disk", "square", "hbar", "vbar",
                                                            "cross", "ring", "triangle", "diagonal"};

/// Procedural shape-grammar dataset. Class n draws primitive n mod 8 in colour
/// family n (hues spread evenly around the wheel). `difficulty` widens the
/// jitter in position, scale and hue, adds background clutter and pixel noise,
/// and blends in distractor shapes from other classes. `class_difficulty`, when
/// non-empty, overrides the global knob per class.
struct SyntheticSpec {
  std::size_t classes = 4;
  std::size_t samples_per_class = 500;
  std::size_t image_size = 16;
  double difficulty = 0.0;
  std::vector<double> class_difficulty;
  std::uint64_t seed = 0;
  double test_fraction = 0.2;

  void validate() const {
    if (classes < 2) throw ValidationError("synthetic spec needs at least 2 classes");
    if (samples_per_class < 1) throw ValidationError("samples per class must be positive");
    if (image_size < 4 || image_size % 4 != 0) throw ValidationError("image size must be a positive multiple of 4");
    if (difficulty < 0 || difficulty > 1) throw ValidationError("difficulty must be in [0,1]");
    if (!class_difficulty.empty() && class_difficulty.size() != classes)
      throw ValidationError("class_difficulty must have one entry per class");
    for (double d : class_difficulty)
      if (d < 0 || d > 1) throw ValidationError("class difficulty must be in [0,1]");
    if (test_fraction < 0 || test_fraction >= 1) throw ValidationError("test fraction must be in [0,1)");
  }

  double difficulty_of(std::size_t cls) const {
    return class_difficulty.empty() ? difficulty : class_difficulty[cls];
  }

  std::string id() const {
    return "synthetic-n" + std::to_string(classes) + "-s" + std::to_string(image_size) + "-seed" +
           std::to_string(seed) + "-" + std::to_string(fnv1a(to_json().dump()) % 1000000);
  }

  nlohmann::json to_json() const {
    return {{"classes", classes},       {"samples_per_class", samples_per_class},
            {"image_size", image_size}, {"difficulty", difficulty},
            {"class_difficulty", class_difficulty}, {"seed", seed},
            {"test_fraction", test_fraction}};
  }

  static SyntheticSpec from_json(const nlohmann::json& j) {
    SyntheticSpec s;
    s.classes = j.value("classes", s.classes);
    s.samples_per_class = j.value("samples_per_class", s.samples_per_class);
    s.image_size = j.value("image_size", s.image_size);
    s.difficulty = j.value("difficulty", s.difficulty);
    s.class_difficulty = j.value("class_difficulty", s.class_difficulty);
    s.seed = j.value("seed", s.seed);
    s.test_fraction = j.value("test_fraction", s.test_fraction);
    s.validate();
    return s;
  }
};

namespace detail {

inline std::array<double, 3> hue_to_rgb(double hue) {
  hue = std::fmod(std::fmod(hue, 1.0) + 1.0, 1.0) * 6.0;
  const double x = 1.0 - std::fabs(std::fmod(hue, 2.0) - 1.0);
  switch (static_cast<int>(hue)) {
    case 0: return {1, x, 0};
    case 1: return {x, 1, 0};
    case 2: return {0, 1, x};
    case 3: return {0, x, 1};
    case 4: return {x, 0, 1};
    default: return {1, 0, x};
  }
}

// Signed coverage of a primitive at normalised coordinates (u,v) in [-1,1].
inline double coverage(Primitive p, double u, double v, double edge) {
  const auto soft = [edge](double inside) { return std::clamp(0.5 + inside / edge, 0.0, 1.0); };
  const double r = std::hypot(u, v);
  switch (p) {
    case Primitive::disk: return soft(0.75 - r);
    case Primitive::square: return soft(0.65 - std::max(std::fabs(u), std::fabs(v)));
    case Primitive::hbar: return soft(std::min(0.28 - std::fabs(v), 0.9 - std::fabs(u)));
    case Primitive::vbar: return soft(std::min(0.28 - std::fabs(u), 0.9 - std::fabs(v)));
    case Primitive::cross:
      return std::max(soft(std::min(0.2 - std::fabs(v), 0.85 - std::fabs(u))),
                      soft(std::min(0.2 - std::fabs(u), 0.85 - std::fabs(v))));
    case Primitive::ring: return soft(std::min(0.85 - r, r - 0.5));
    case Primitive::triangle: return soft(0.55 * std::min(0.6 - v, v + 0.7 - 1.5 * std::fabs(u)));
    case Primitive::diagonal: return soft(std::min(0.25 - std::fabs(u - v) / std::numbers::sqrt2, 0.9 - r));
  }
  return 0.0;
}

}  // namespace detail

/// Renders one sample of class `cls`; deterministic in (spec.seed, index).
inline void render_sample(const SyntheticSpec& spec, std::size_t cls, std::size_t index, std::span<double> out) {
  Rng rng(derive_key(spec.seed, 0x5a11u, index));
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  const auto sym = [&](double scale) { return scale * (2.0 * u01(rng) - 1.0); };
  const double d = spec.difficulty_of(cls);
  const std::size_t s = spec.image_size;
  const double n = double(spec.classes);

  const auto primitive = static_cast<Primitive>(cls % 8);
  const double hue = double(cls) / n + sym(d * 0.9 / n);
  auto color = detail::hue_to_rgb(hue);
  const double bright = 0.75 + sym(0.2 * d);
  for (auto& c : color) c = 0.1 + 0.8 * c * bright;

  const double cx = sym(0.45 * d), cy = sym(0.45 * d);
  const double scale = 1.0 + sym(0.35 * d);
  const double bg_level = 0.15 + 0.15 * u01(rng) + sym(0.15 * d);
  const double gx = sym(0.4 * d), gy = sym(0.4 * d);
  const double noise = 0.02 + 0.18 * d;
  const double opacity = 1.0 - 0.45 * d * u01(rng);

  // Distractor: another class's shape in that class's colour, faded.
  const bool distract = u01(rng) < 0.7 * d;
  std::size_t other = cls;
  while (distract && other == cls) other = static_cast<std::size_t>(u01(rng) * n) % spec.classes;
  const auto other_prim = static_cast<Primitive>(other % 8);
  auto other_color = detail::hue_to_rgb(double(other) / n);
  for (auto& c : other_color) c = 0.1 + 0.6 * c;
  const double ox = sym(0.6), oy = sym(0.6);
  const double other_alpha = 0.35 + 0.35 * d * u01(rng);

  std::normal_distribution<double> pix(0.0, noise);
  const double edge = 2.5 / double(s);
  for (std::size_t y = 0; y < s; ++y)
    for (std::size_t x = 0; x < s; ++x) {
      const double px = (2.0 * (double(x) + 0.5) / double(s) - 1.0);
      const double py = (2.0 * (double(y) + 0.5) / double(s) - 1.0);
      const double m = opacity * detail::coverage(primitive, (px - cx) / scale, (py - cy) / scale, edge);
      const double mo = distract ? other_alpha * detail::coverage(other_prim, (px - ox) * 1.6, (py - oy) * 1.6, edge) : 0.0;
      const double bg = bg_level + gx * px * 0.25 + gy * py * 0.25;
      for (std::size_t c = 0; c < 3; ++c) {
        double v = bg;
        v = v * (1.0 - mo) + other_color[c] * mo;
        v = v * (1.0 - m) + color[c] * m;
        v += pix(rng);
        out[(c * s + y) * s + x] = std::clamp(v, 0.0, 1.0);
      }
    }
}

/// Balanced dataset; samples interleave classes (index i has class i mod N).
inline Dataset generate_synthetic(const SyntheticSpec& spec) {
  spec.validate();
  const std::size_t total = spec.classes * spec.samples_per_class, s = spec.image_size;
  Tensor<double> images(Shape{total, 3, s, s});
  std::vector<int> labels(total);
  for (std::size_t i = 0; i < total; ++i) {
    labels[i] = static_cast<int>(i % spec.classes);
    render_sample(spec, labels[i], i, images.row(i));
  }
  Dataset ds(spec.id(), std::move(images), std::move(labels), spec.classes);
  ds.split_stratified(spec.test_fraction, spec.seed);
  return ds;
}

}  // namespace boss::data
