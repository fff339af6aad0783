#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "boss/error.hpp"
#include "boss/rng.hpp"
#include "boss/tensor.hpp"

namespace boss::nn {

enum class LayerKind { conv3x3, relu, maxpool2, flatten, linear };

struct LayerSpec {
  LayerKind kind;
  std::size_t in = 0;
  std::size_t out = 0;

  static LayerSpec conv3x3(std::size_t cin, std::size_t cout) { return {LayerKind::conv3x3, cin, cout}; }
  static LayerSpec relu() { return {LayerKind::relu}; }
  static LayerSpec maxpool2() { return {LayerKind::maxpool2}; }
  static LayerSpec flatten() { return {LayerKind::flatten}; }
  static LayerSpec linear(std::size_t din, std::size_t dout) { return {LayerKind::linear, din, dout}; }
};

struct InputShape {
  std::size_t channels = 3;
  std::size_t height = 32;
  std::size_t width = 32;

  friend bool operator==(const InputShape&, const InputShape&) = default;
};

template <typename T>
struct Parameter {
  std::string name;
  Tensor<T> value;
  Tensor<T> grad;
};

/// conv(3,3,32)-ReLU-maxpool2-conv(3,3,64)-ReLU-maxpool2-flatten-linear(128)-ReLU-linear(N).
inline std::vector<LayerSpec> standard_layers(const InputShape& in, std::size_t classes) {
  if (in.height % 4 != 0 || in.width % 4 != 0)
    throw ConfigError("standard architecture needs height and width divisible by 4");
  const std::size_t flat = 64 * (in.height / 4) * (in.width / 4);
  return {LayerSpec::conv3x3(in.channels, 32), LayerSpec::relu(), LayerSpec::maxpool2(),
          LayerSpec::conv3x3(32, 64),          LayerSpec::relu(), LayerSpec::maxpool2(),
          LayerSpec::flatten(),                LayerSpec::linear(flat, 128),
          LayerSpec::relu(),                   LayerSpec::linear(128, classes)};
}

/// Sequential convolutional classifier with hand-written reverse-mode gradients.
///
/// Convolutions are 3x3, stride 1, zero padding 1. `forward` caches the
/// activations needed by `backward`; `infer` leaves the cache untouched.
/// Gradients accumulate across `backward` calls until `zero_grad`.
template <typename T>
class Classifier {
 public:
  Classifier(InputShape input, std::vector<LayerSpec> layers, std::size_t classes)
      : input_(input), layers_(std::move(layers)), classes_(classes) {
    build();
  }

  static Classifier standard(InputShape input, std::size_t classes) {
    return Classifier(input, standard_layers(input, classes), classes);
  }

  const InputShape& input_shape() const noexcept { return input_; }
  const std::vector<LayerSpec>& layers() const noexcept { return layers_; }
  std::size_t classes() const noexcept { return classes_; }

  std::vector<Parameter<T>>& parameters() noexcept { return params_; }
  const std::vector<Parameter<T>>& parameters() const noexcept { return params_; }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += p.value.size();
    return n;
  }

  Parameter<T>& parameter(const std::string& name) {
    for (auto& p : params_)
      if (p.name == name) return p;
    throw UsageError("no parameter named " + name);
  }

  /// He fan-in normal weights, zero biases.
  void initialize(std::uint64_t seed) {
    Rng rng(derive_key(seed, 0x1417u));
    for (std::size_t li = 0; li < layers_.size(); ++li) {
      const auto& l = layers_[li];
      if (l.kind != LayerKind::conv3x3 && l.kind != LayerKind::linear) continue;
      const double fan_in = l.kind == LayerKind::conv3x3 ? double(l.in) * 9.0 : double(l.in);
      std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / fan_in));
      auto& w = params_[param_slot_[li]];
      for (auto& v : w.value.storage()) v = static_cast<T>(dist(rng));
      params_[param_slot_[li] + 1].value.fill(T{0});
    }
    cache_.reset();
  }

  void zero_grad() {
    for (auto& p : params_) p.grad.fill(T{0});
  }

  /// Logits for a [B,C,H,W] batch; caches activations for `backward`.
  Tensor<T> forward(const Tensor<T>& batch) {
    Cache cache;
    Tensor<T> out = run(batch, &cache);
    cache_ = std::move(cache);
    return out;
  }

  /// Logits without touching the backward cache.
  Tensor<T> infer(const Tensor<T>& batch) const { return run(batch, nullptr); }

  /// Accumulates parameter gradients for the cached batch given dL/dlogits.
  void backward(const Tensor<T>& grad_logits) {
    if (!cache_) throw UsageError("backward called without a cached forward pass");
    const std::size_t batch = cache_->inputs.front().dim(0);
    if (grad_logits.shape() != Shape{batch, classes_})
      throw DimensionError("logit gradient shape " + shape_string(grad_logits.shape()) +
                           " does not match cached batch");
    Tensor<T> grad = grad_logits;
    for (std::size_t li = layers_.size(); li-- > 0;) {
      const Tensor<T>& x = cache_->inputs[li];
      switch (layers_[li].kind) {
        case LayerKind::conv3x3:
          grad = conv_backward(li, x, cache_->patches[li], grad, li != 0);
          break;
        case LayerKind::relu:
          for (std::size_t i = 0; i < grad.size(); ++i)
            if (!(x[i] > T{0})) grad[i] = T{0};
          break;
        case LayerKind::maxpool2:
          grad = pool_backward(x, grad, cache_->pool_argmax[li]);
          break;
        case LayerKind::flatten:
          grad = Tensor<T>(x.shape(), std::move(grad.storage()));
          break;
        case LayerKind::linear:
          grad = linear_backward(li, x, grad, li != 0);
          break;
      }
    }
    cache_.reset();
  }

  bool has_cache() const noexcept { return cache_.has_value(); }

 private:
  struct Cache {
    std::vector<Tensor<T>> inputs;
    std::vector<std::vector<std::uint32_t>> pool_argmax;
    std::vector<Tensor<T>> patches;
  };

  void build() {
    if (classes_ < 1) throw ConfigError("classifier needs at least one class");
    param_slot_.assign(layers_.size(), 0);
    Shape shape{input_.channels, input_.height, input_.width};
    for (std::size_t li = 0; li < layers_.size(); ++li) {
      auto& l = layers_[li];
      const std::string tag = "layer" + std::to_string(li);
      switch (l.kind) {
        case LayerKind::conv3x3:
          if (shape.size() != 3 || shape[0] != l.in)
            throw DimensionError(tag + ": conv3x3 expects " + std::to_string(l.in) + " channels, got " +
                                 shape_string(shape));
          param_slot_[li] = params_.size();
          add_param(tag + ".weight", {l.out, l.in, 3, 3});
          add_param(tag + ".bias", {l.out});
          shape[0] = l.out;
          break;
        case LayerKind::relu:
          break;
        case LayerKind::maxpool2:
          if (shape.size() != 3 || shape[1] % 2 || shape[2] % 2)
            throw DimensionError(tag + ": maxpool2 needs even spatial dims, got " + shape_string(shape));
          shape[1] /= 2;
          shape[2] /= 2;
          break;
        case LayerKind::flatten:
          shape = Shape{shape_size(shape)};
          break;
        case LayerKind::linear:
          if (shape.size() != 1 || shape[0] != l.in)
            throw DimensionError(tag + ": linear expects input width " + std::to_string(l.in) + ", got " +
                                 shape_string(shape));
          param_slot_[li] = params_.size();
          add_param(tag + ".weight", {l.out, l.in});
          add_param(tag + ".bias", {l.out});
          shape[0] = l.out;
          break;
      }
    }
    if (shape != Shape{classes_})
      throw DimensionError("classifier output " + shape_string(shape) + " does not match " +
                           std::to_string(classes_) + " classes");
  }

  void add_param(std::string name, Shape shape) {
    params_.push_back({std::move(name), Tensor<T>(shape), Tensor<T>(shape)});
  }

  Tensor<T> run(const Tensor<T>& batch, Cache* cache) const {
    if (batch.rank() != 4 || batch.dim(1) != input_.channels || batch.dim(2) != input_.height ||
        batch.dim(3) != input_.width)
      throw DimensionError("batch shape " + shape_string(batch.shape()) + " does not match model input [B," +
                           std::to_string(input_.channels) + "," + std::to_string(input_.height) + "," +
                           std::to_string(input_.width) + "]");
    if (batch.dim(0) == 0) throw DimensionError("empty batch");
    if (cache) {
      cache->inputs.reserve(layers_.size());
      cache->pool_argmax.resize(layers_.size());
      cache->patches.resize(layers_.size());
    }
    Tensor<T> x = batch;
    for (std::size_t li = 0; li < layers_.size(); ++li) {
      Tensor<T> y;
      switch (layers_[li].kind) {
        case LayerKind::conv3x3: y = conv_forward(li, x, cache ? &cache->patches[li] : nullptr); break;
        case LayerKind::relu:
          y = x;
          for (auto& v : y.storage()) v = v > T{0} ? v : T{0};
          break;
        case LayerKind::maxpool2:
          y = pool_forward(x, cache ? &cache->pool_argmax[li] : nullptr);
          break;
        case LayerKind::flatten: {
          const std::size_t b = x.dim(0);
          y = Tensor<T>(Shape{b, x.size() / b}, x.storage());
          break;
        }
        case LayerKind::linear: y = linear_forward(li, x); break;
      }
      if (cache)
        cache->inputs.push_back(std::move(x));
      x = std::move(y);
    }
    if (!x.all_finite()) throw NumericDivergence("non-finite logits in forward pass");
    return x;
  }

  // Patch matrix [B*H*W, cin*9]: row p holds the zero-padded 3x3 neighbourhood
  // of output pixel p, ordered (ci, ky, kx) to match the weight layout.
  static Tensor<T> im2row(const Tensor<T>& x) {
    const std::size_t n = x.dim(0), cin = x.dim(1), h = x.dim(2), w = x.dim(3), k = cin * 9;
    Tensor<T> a(Shape{n * h * w, k});
    for (std::size_t s = 0; s < n; ++s)
      for (std::size_t yy = 0; yy < h; ++yy)
        for (std::size_t xx = 0; xx < w; ++xx) {
          T* row = a.data() + ((s * h + yy) * w + xx) * k;
          for (std::size_t ci = 0; ci < cin; ++ci) {
            const T* in = &x.at(s, ci, 0, 0);
            for (int ky = 0; ky < 3; ++ky) {
              const long sy = long(yy) + ky - 1;
              for (int kx = 0; kx < 3; ++kx) {
                const long sx = long(xx) + kx - 1;
                row[ci * 9 + ky * 3 + kx] =
                    (sy < 0 || sy >= long(h) || sx < 0 || sx >= long(w)) ? T{0} : in[sy * long(w) + sx];
              }
            }
          }
        }
    return a;
  }

  Tensor<T> conv_forward(std::size_t li, const Tensor<T>& x, Tensor<T>* patches_out) const {
    const auto& wgt = params_[param_slot_[li]].value;
    const auto& b = params_[param_slot_[li] + 1].value;
    const std::size_t n = x.dim(0), h = x.dim(2), w = x.dim(3), cout = wgt.dim(0), k = wgt.size() / cout;
    Tensor<T> a = im2row(x);
    // Transposed weights [k, cout] so the inner loop runs over output channels.
    std::vector<T> wt(k * cout);
    for (std::size_t co = 0; co < cout; ++co)
      for (std::size_t j = 0; j < k; ++j) wt[j * cout + co] = wgt[co * k + j];
    const std::size_t pixels = n * h * w;
    std::vector<T> yt(pixels * cout);
    for (std::size_t p = 0; p < pixels; ++p) {
      T* out = yt.data() + p * cout;
      for (std::size_t co = 0; co < cout; ++co) out[co] = b[co];
      const T* row = a.data() + p * k;
      for (std::size_t j = 0; j < k; ++j) {
        const T v = row[j];
        if (v == T{0}) continue;
        const T* wr = wt.data() + j * cout;
        for (std::size_t co = 0; co < cout; ++co) out[co] += v * wr[co];
      }
    }
    Tensor<T> y(Shape{n, cout, h, w});
    const std::size_t plane = h * w;
    for (std::size_t s = 0; s < n; ++s)
      for (std::size_t q = 0; q < plane; ++q) {
        const T* src = yt.data() + (s * plane + q) * cout;
        for (std::size_t co = 0; co < cout; ++co) y[(s * cout + co) * plane + q] = src[co];
      }
    if (patches_out) *patches_out = std::move(a);
    return y;
  }

  Tensor<T> conv_backward(std::size_t li, const Tensor<T>& x, const Tensor<T>& patches, const Tensor<T>& gy,
                          bool need_input_grad) {
    const auto& wgt = params_[param_slot_[li]].value;
    auto& gw = params_[param_slot_[li]].grad;
    auto& gb = params_[param_slot_[li] + 1].grad;
    const std::size_t n = x.dim(0), cin = x.dim(1), h = x.dim(2), w = x.dim(3), cout = wgt.dim(0), k = cin * 9;
    const std::size_t plane = h * w, pixels = n * plane;
    // Output gradient in pixel-major layout [pixels, cout].
    std::vector<T> gyt(pixels * cout);
    for (std::size_t s = 0; s < n; ++s)
      for (std::size_t co = 0; co < cout; ++co) {
        const T* src = gy.data() + (s * cout + co) * plane;
        for (std::size_t q = 0; q < plane; ++q) gyt[(s * plane + q) * cout + co] = src[q];
      }
    std::vector<T> gwt(k * cout, T{0});
    std::vector<T> gbias(cout, T{0});
    for (std::size_t p = 0; p < pixels; ++p) {
      const T* g = gyt.data() + p * cout;
      for (std::size_t co = 0; co < cout; ++co) gbias[co] += g[co];
      const T* row = patches.data() + p * k;
      for (std::size_t j = 0; j < k; ++j) {
        const T v = row[j];
        if (v == T{0}) continue;
        T* dst = gwt.data() + j * cout;
        for (std::size_t co = 0; co < cout; ++co) dst[co] += v * g[co];
      }
    }
    for (std::size_t co = 0; co < cout; ++co) {
      gb[co] += gbias[co];
      for (std::size_t j = 0; j < k; ++j) gw[co * k + j] += gwt[j * cout + co];
    }
    Tensor<T> gx(x.shape());
    if (!need_input_grad) return gx;
    std::vector<T> grow(k);
    for (std::size_t p = 0; p < pixels; ++p) {
      std::fill(grow.begin(), grow.end(), T{0});
      const T* g = gyt.data() + p * cout;
      for (std::size_t co = 0; co < cout; ++co) {
        const T gv = g[co];
        if (gv == T{0}) continue;
        const T* wr = wgt.data() + co * k;
        for (std::size_t j = 0; j < k; ++j) grow[j] += gv * wr[j];
      }
      const std::size_t s = p / plane, q = p % plane, yy = q / w, xx = q % w;
      for (std::size_t ci = 0; ci < cin; ++ci) {
        T* gin = &gx.at(s, ci, 0, 0);
        for (int ky = 0; ky < 3; ++ky) {
          const long sy = long(yy) + ky - 1;
          if (sy < 0 || sy >= long(h)) continue;
          for (int kx = 0; kx < 3; ++kx) {
            const long sx = long(xx) + kx - 1;
            if (sx < 0 || sx >= long(w)) continue;
            gin[sy * long(w) + sx] += grow[ci * 9 + ky * 3 + kx];
          }
        }
      }
    }
    return gx;
  }

  static Tensor<T> pool_forward(const Tensor<T>& x, std::vector<std::uint32_t>* argmax) {
    const std::size_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
    Tensor<T> y(Shape{n, c, h / 2, w / 2});
    if (argmax) argmax->resize(y.size());
    std::size_t o = 0;
    for (std::size_t s = 0; s < n; ++s)
      for (std::size_t ch = 0; ch < c; ++ch)
        for (std::size_t yy = 0; yy < h / 2; ++yy)
          for (std::size_t xx = 0; xx < w / 2; ++xx, ++o) {
            std::size_t best = ((s * c + ch) * h + 2 * yy) * w + 2 * xx;
            for (std::size_t dy = 0; dy < 2; ++dy)
              for (std::size_t dx = 0; dx < 2; ++dx) {
                const std::size_t i = ((s * c + ch) * h + 2 * yy + dy) * w + 2 * xx + dx;
                if (x[i] > x[best]) best = i;
              }
            y[o] = x[best];
            if (argmax) (*argmax)[o] = static_cast<std::uint32_t>(best);
          }
    return y;
  }

  static Tensor<T> pool_backward(const Tensor<T>& x, const Tensor<T>& gy, const std::vector<std::uint32_t>& argmax) {
    Tensor<T> gx(x.shape());
    for (std::size_t o = 0; o < gy.size(); ++o) gx[argmax[o]] += gy[o];
    return gx;
  }

  Tensor<T> linear_forward(std::size_t li, const Tensor<T>& x) const {
    const auto& w = params_[param_slot_[li]].value;
    const auto& b = params_[param_slot_[li] + 1].value;
    const std::size_t n = x.dim(0), din = w.dim(1), dout = w.dim(0);
    Tensor<T> y(Shape{n, dout});
    for (std::size_t s = 0; s < n; ++s) {
      const T* in = x.data() + s * din;
      for (std::size_t o = 0; o < dout; ++o) {
        const T* wr = w.data() + o * din;
        T acc = b[o];
        for (std::size_t i = 0; i < din; ++i) acc += wr[i] * in[i];
        y.at(s, o) = acc;
      }
    }
    return y;
  }

  Tensor<T> linear_backward(std::size_t li, const Tensor<T>& x, const Tensor<T>& gy, bool need_input_grad) {
    auto& w = params_[param_slot_[li]].value;
    auto& gw = params_[param_slot_[li]].grad;
    auto& gb = params_[param_slot_[li] + 1].grad;
    const std::size_t n = x.dim(0), din = w.dim(1), dout = w.dim(0);
    Tensor<T> gx(x.shape());
    for (std::size_t s = 0; s < n; ++s) {
      const T* in = x.data() + s * din;
      T* gin = gx.data() + s * din;
      for (std::size_t o = 0; o < dout; ++o) {
        const T g = gy.at(s, o);
        if (g == T{0}) continue;
        gb[o] += g;
        T* gwr = gw.data() + o * din;
        const T* wr = w.data() + o * din;
        for (std::size_t i = 0; i < din; ++i) gwr[i] += g * in[i];
        if (need_input_grad)
          for (std::size_t i = 0; i < din; ++i) gin[i] += g * wr[i];
      }
    }
    return gx;
  }

  InputShape input_;
  std::vector<LayerSpec> layers_;
  std::size_t classes_;
  std::vector<Parameter<T>> params_;
  std::vector<std::size_t> param_slot_;
  std::optional<Cache> cache_;
};

/// Converts parameter values between precisions (checkpoints are always f64).
template <typename To, typename From>
Classifier<To> convert(const Classifier<From>& model) {
  Classifier<To> out(model.input_shape(), model.layers(), model.classes());
  for (std::size_t i = 0; i < model.parameters().size(); ++i)
    out.parameters()[i].value = model.parameters()[i].value.template cast<To>();
  return out;
}

}  // namespace boss::nn
