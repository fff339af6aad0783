#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <random>

#include "boss/checkpoint.hpp"
#include "boss/classifier.hpp"
#include "boss/optimizer.hpp"
#include "boss/ssl_loss.hpp"
#include "oracles.hpp"

using boss::Shape;
using boss::Tensor;
using boss::nn::Classifier;
using boss::nn::InputShape;
using boss::nn::LayerSpec;

namespace {

Classifier<double> small_model(std::uint64_t seed, std::size_t classes = 3) {
  auto m = Classifier<double>::standard(InputShape{2, 8, 8}, classes);
  m.initialize(seed);
  return m;
}

// Perturb biases away from zero so every parameter has a nontrivial gradient path.
void jitter_biases(Classifier<double>& m, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-0.1, 0.1);
  for (auto& p : m.parameters())
    if (p.name.ends_with(".bias"))
      for (auto& v : p.value.storage()) v = u(rng);
}

}  // namespace

TEST(Classifier, ZeroWeightsGiveUniformSoftmax) {
  auto m = Classifier<double>::standard(InputShape{3, 8, 8}, 5);
  for (auto& p : m.parameters()) p.value.fill(0.0);
  std::mt19937_64 rng(3);
  const auto x = oracle::random_tensor(Shape{4, 3, 8, 8}, rng, 0, 1);
  const auto logits = m.forward(x);
  for (double v : logits.storage()) EXPECT_EQ(v, 0.0);
  const auto probs = boss::loss::softmax(logits);
  for (double p : probs.storage()) EXPECT_NEAR(p, 0.2, 1e-15);
}

TEST(Classifier, IdentityLinearOnOneHotReturnsWeightColumn) {
  Classifier<double> m(InputShape{4, 1, 1}, {LayerSpec::flatten(), LayerSpec::linear(4, 4)}, 4);
  auto& w = m.parameter("layer1.weight").value;
  for (std::size_t o = 0; o < 4; ++o)
    for (std::size_t i = 0; i < 4; ++i) w.at(o, i) = double(10 * o + i);
  Tensor<double> x(Shape{1, 4, 1, 1});
  x[2] = 1.0;
  const auto y = m.forward(x);
  for (std::size_t o = 0; o < 4; ++o) EXPECT_EQ(y.at(0, o), w.at(o, 2));
}

TEST(Classifier, ForwardMatchesNaiveReference) {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 3; ++trial) {
    auto m = small_model(100 + trial, 4);
    jitter_biases(m, rng);
    const auto x = oracle::random_tensor(Shape{3, 2, 8, 8}, rng);
    const auto fast = m.infer(x);
    const auto ref = oracle::naive_forward(m, x);
    ASSERT_EQ(fast.shape(), ref.shape());
    for (std::size_t i = 0; i < fast.size(); ++i) EXPECT_NEAR(fast[i], ref[i], 1e-12);
  }
}

TEST(Classifier, InferAndForwardAgree) {
  auto m = small_model(5);
  std::mt19937_64 rng(5);
  const auto x = oracle::random_tensor(Shape{2, 2, 8, 8}, rng);
  EXPECT_EQ(m.infer(x), m.forward(x));
}

TEST(Classifier, ZeroUpstreamGradientGivesZeroGradients) {
  auto m = small_model(7);
  std::mt19937_64 rng(7);
  const auto x = oracle::random_tensor(Shape{2, 2, 8, 8}, rng);
  m.zero_grad();
  const auto y = m.forward(x);
  m.backward(Tensor<double>(y.shape()));
  for (const auto& p : m.parameters())
    for (double g : p.grad.storage()) EXPECT_EQ(g, 0.0);
}

TEST(Classifier, ScalarModelChainRule) {
  // logit = w*x + b, loss = 0.5*(logit - 3)^2, dL/dw = (logit - 3)*x, dL/db = logit - 3.
  Classifier<double> m(InputShape{1, 1, 1}, {LayerSpec::flatten(), LayerSpec::linear(1, 1)}, 1);
  m.parameter("layer1.weight").value[0] = 2.0;
  m.parameter("layer1.bias").value[0] = 0.5;
  Tensor<double> x(Shape{1, 1, 1, 1}, 1.5);
  m.zero_grad();
  const double logit = m.forward(x)[0];
  EXPECT_DOUBLE_EQ(logit, 3.5);
  m.backward(Tensor<double>(Shape{1, 1}, logit - 3.0));
  EXPECT_DOUBLE_EQ(m.parameter("layer1.weight").grad[0], 0.5 * 1.5);
  EXPECT_DOUBLE_EQ(m.parameter("layer1.bias").grad[0], 0.5);
}

TEST(Classifier, GradientsMatchFiniteDifferences) {
  std::mt19937_64 rng(21);
  auto m = small_model(21, 3);
  jitter_biases(m, rng);
  const auto x = oracle::random_tensor(Shape{2, 2, 8, 8}, rng);
  const auto proj = oracle::random_tensor(Shape{2, 3}, rng);
  const auto objective = [&] {
    const auto y = m.infer(x);
    double s = 0;
    for (std::size_t i = 0; i < y.size(); ++i) s += y[i] * proj[i];
    return s;
  };
  m.zero_grad();
  m.forward(x);
  m.backward(proj);
  for (auto& p : m.parameters()) {
    std::uniform_int_distribution<std::size_t> pick(0, p.value.size() - 1);
    for (int k = 0; k < 12; ++k) {
      const std::size_t j = pick(rng);
      const double numeric = oracle::central_difference(objective, &p.value.storage()[j]);
      EXPECT_LT(oracle::relative_error(p.grad[j], numeric), 1e-4) << p.name << "[" << j << "]";
    }
  }
}

TEST(Classifier, GradientsAccumulateUntilZeroed) {
  auto m = small_model(9);
  std::mt19937_64 rng(9);
  const auto x = oracle::random_tensor(Shape{1, 2, 8, 8}, rng);
  const auto g = oracle::random_tensor(Shape{1, 3}, rng);
  m.zero_grad();
  m.forward(x);
  m.backward(g);
  const auto once = m.parameters().back().grad;
  m.forward(x);
  m.backward(g);
  for (std::size_t i = 0; i < once.size(); ++i) EXPECT_NEAR(m.parameters().back().grad[i], 2 * once[i], 1e-12);
}

TEST(Classifier, BackwardWithoutForwardIsUsageError) {
  auto m = small_model(1);
  EXPECT_THROW(m.backward(Tensor<double>(Shape{1, 3})), boss::UsageError);
}

TEST(Classifier, WrongInputShapeIsDimensionError) {
  auto m = small_model(1);
  EXPECT_THROW(m.forward(Tensor<double>(Shape{1, 3, 8, 8})), boss::DimensionError);
  EXPECT_THROW(m.forward(Tensor<double>(Shape{1, 2, 4, 8})), boss::DimensionError);
}

TEST(Classifier, NonFiniteLogitsRaiseDivergence) {
  auto m = small_model(1);
  m.parameters().back().value[0] = std::numeric_limits<double>::infinity();
  EXPECT_THROW(m.forward(Tensor<double>(Shape{1, 2, 8, 8}, 0.5)), boss::NumericDivergence);
}

TEST(Classifier, InitializationIsSeeded) {
  auto a = small_model(42), b = small_model(42), c = small_model(43);
  EXPECT_EQ(a.parameters()[0].value, b.parameters()[0].value);
  EXPECT_FALSE(a.parameters()[0].value == c.parameters()[0].value);
}

TEST(Classifier, StandardArchitectureShape) {
  auto m = Classifier<double>::standard(InputShape{3, 32, 32}, 10);
  EXPECT_EQ(m.parameter("layer0.weight").value.shape(), (Shape{32, 3, 3, 3}));
  EXPECT_EQ(m.parameter("layer3.weight").value.shape(), (Shape{64, 32, 3, 3}));
  EXPECT_EQ(m.parameter("layer7.weight").value.shape(), (Shape{128, 64 * 8 * 8}));
  EXPECT_EQ(m.parameter("layer9.weight").value.shape(), (Shape{10, 128}));
  EXPECT_THROW(Classifier<double>::standard(InputShape{3, 10, 10}, 10), boss::ConfigError);
}

TEST(Optimizer, PlainStepFromZero) {
  Classifier<double> m(InputShape{1, 1, 1}, {LayerSpec::flatten(), LayerSpec::linear(1, 1)}, 1);
  for (auto& p : m.parameters()) {
    p.value.fill(0.0);
    p.grad.fill(1.0);
  }
  boss::nn::SgdMomentum<double> opt({0.1, 0.0, 0.0, 10}, m);
  opt.step(m);
  EXPECT_DOUBLE_EQ(m.parameters()[0].value[0], -0.1);
}

TEST(Optimizer, PureDecayWithZeroGradient) {
  Classifier<double> m(InputShape{1, 1, 1}, {LayerSpec::flatten(), LayerSpec::linear(1, 1)}, 1);
  m.parameters()[0].value[0] = 2.0;
  m.zero_grad();
  boss::nn::SgdMomentum<double> opt({0.1, 0.0, 0.01, 10}, m);
  opt.step(m);
  EXPECT_DOUBLE_EQ(m.parameters()[0].value[0], 2.0 - 0.1 * 0.01 * 2.0);
}

TEST(Optimizer, MomentumRecursionTwoSteps) {
  Classifier<double> m(InputShape{1, 1, 1}, {LayerSpec::flatten(), LayerSpec::linear(1, 1)}, 1);
  auto& w = m.parameters()[0];
  w.value[0] = 1.0;
  const double lr = 0.06, beta = 0.88, wd = 8e-4;
  const long long K = 4;
  boss::nn::SgdMomentum<double> opt({lr, beta, wd, K}, m);
  double theta = 1.0, v = 0.0;
  for (int k = 0; k < 2; ++k) {
    const double g = k == 0 ? 0.3 : -0.2;
    w.grad[0] = g;
    opt.step(m);
    v = beta * v + g + wd * theta;
    theta -= lr * std::cos(7.0 * M_PI * k / (16.0 * K)) * v;
  }
  EXPECT_NEAR(w.value[0], theta, 1e-15);
}

TEST(Optimizer, ScheduleExhaustion) {
  Classifier<double> m(InputShape{1, 1, 1}, {LayerSpec::flatten(), LayerSpec::linear(1, 1)}, 1);
  boss::nn::SgdMomentum<double> opt({0.1, 0.9, 0.0, 2}, m);
  opt.step(m);
  opt.step(m);
  EXPECT_THROW(opt.step(m), boss::ScheduleExhausted);
}

TEST(CosineSchedule, Endpoints) {
  EXPECT_EQ(boss::nn::cosine_lr(0, 100, 0.06), 0.06);
  EXPECT_NEAR(boss::nn::cosine_lr(100, 100, 1.0), 0.195090, 1e-6);
  EXPECT_NEAR(boss::nn::cosine_lr(100, 100, 1.0), std::cos(7 * M_PI / 16), 1e-15);
  EXPECT_THROW(boss::nn::cosine_lr(0, 0, 0.1), boss::ConfigError);
}

TEST(Checkpoint, RoundTripIsBitExact) {
  auto m = small_model(77);
  const auto bytes = boss::nn::encode_checkpoint(boss::nn::snapshot(m));
  auto other = small_model(78);
  boss::nn::restore(other, boss::nn::decode_checkpoint(bytes));
  for (std::size_t i = 0; i < m.parameters().size(); ++i)
    EXPECT_EQ(m.parameters()[i].value, other.parameters()[i].value);
  EXPECT_EQ(boss::nn::encode_checkpoint(boss::nn::snapshot(other)), bytes);
}

TEST(Checkpoint, FileRoundTrip) {
  const auto path = std::filesystem::temp_directory_path() / "boss_ckpt_test.ckpt";
  auto m = small_model(3);
  boss::nn::save_checkpoint(path.string(), m);
  auto other = small_model(4);
  boss::nn::load_checkpoint(path.string(), other);
  EXPECT_EQ(m.parameters()[2].value, other.parameters()[2].value);
  std::filesystem::remove(path);
}

TEST(Checkpoint, LayoutHeader) {
  const auto bytes = boss::nn::encode_checkpoint({{"w", Shape{2}, {1.0, 2.0}}});
  EXPECT_EQ(bytes.substr(0, 8), "BOSSCKPT");
  // magic + version + (name length + name + rank + dims + payload)
  EXPECT_EQ(bytes.size(), 8u + 4 + (4 + 1 + 4 + 8 + 16));
}

TEST(Checkpoint, RejectsBadMagicAndMismatchedModel) {
  EXPECT_THROW(boss::nn::decode_checkpoint("NOTACKPT\x01\0\0\0"), boss::FormatError);
  auto m = small_model(1, 3);
  auto other = small_model(1, 4);
  EXPECT_THROW(boss::nn::restore(other, boss::nn::snapshot(m)), boss::FormatError);
  EXPECT_THROW(boss::nn::load_checkpoint("/nonexistent/x.ckpt", m), boss::NotFound);
}

TEST(Checkpoint, FloatModelConvertsThroughDouble) {
  auto m = small_model(12);
  auto f = boss::nn::convert<float>(m);
  auto back = boss::nn::convert<double>(f);
  EXPECT_NEAR(back.parameters()[0].value[0], m.parameters()[0].value[0], 1e-6);
}
