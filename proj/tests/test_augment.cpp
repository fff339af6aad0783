#include <gtest/gtest.h>

#include <random>
#include <set>

#include "boss/augment.hpp"
#include "oracles.hpp"

using boss::AugmentKey;
using boss::Shape;
using boss::Tensor;
namespace aug = boss::augment;

namespace {

aug::AugmentPolicy still_weak() {
  aug::AugmentPolicy p;
  p.flip_probability = 0;
  p.max_translate_fraction = 0;
  return p;
}

Tensor<double> ramp(std::size_t c, std::size_t h, std::size_t w) {
  Tensor<double> t(Shape{c, h, w});
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = double(i) / double(t.size());
  return t;
}

}  // namespace

TEST(Augment, WeakWithoutFlipOrShiftIsIdentity) {
  const auto x = ramp(3, 8, 8);
  EXPECT_EQ(aug::weak(x, still_weak(), AugmentKey{1, 2, 3}), x);
}

TEST(Augment, ForcedFlipReversesColumnsAndIsAnInvolution) {
  auto p = still_weak();
  p.flip_probability = 1;
  const auto x = ramp(2, 4, 6);
  const auto y = aug::weak(x, p, AugmentKey{9, 0, 0});
  for (std::size_t c = 0; c < 2; ++c)
    for (std::size_t i = 0; i < 4; ++i)
      for (std::size_t j = 0; j < 6; ++j) EXPECT_EQ(y[(c * 4 + i) * 6 + j], x[(c * 4 + i) * 6 + (5 - j)]);
  EXPECT_EQ(aug::weak(y, p, AugmentKey{9, 0, 0}), x);
}

TEST(Augment, ShiftMovesDeltaByExactOffsets) {
  const std::size_t h = 10, w = 10;
  Tensor<double> x(Shape{1, h, w});
  x[4 * w + 5] = 1.0;
  Tensor<double> out(x.shape());
  aug::apply_weak<double>(x.values(), out.values(), 1, h, w, aug::WeakParams{false, 2, -2});
  for (std::size_t i = 0; i < h; ++i)
    for (std::size_t j = 0; j < w; ++j) EXPECT_EQ(out[i * w + j], (i == 6 && j == 3) ? 1.0 : 0.0);
}

TEST(Augment, ShiftReplicatesEdges) {
  Tensor<double> x(Shape{1, 1, 4});
  for (std::size_t j = 0; j < 4; ++j) x[j] = double(j + 1);
  Tensor<double> out(x.shape());
  aug::apply_weak<double>(x.values(), out.values(), 1, 1, 4, aug::WeakParams{false, 0, 2});
  EXPECT_EQ(out.storage(), (std::vector<double>{1, 1, 1, 2}));
}

TEST(Augment, DrawnShiftStaysWithinTranslateBound) {
  aug::AugmentPolicy p;
  for (std::uint64_t s = 0; s < 500; ++s) {
    const auto d = aug::draw_weak(p, AugmentKey{s, 1, 1}, 32, 32);
    EXPECT_LE(std::abs(d.shift_x), 4);
    EXPECT_LE(std::abs(d.shift_y), 4);
  }
}

TEST(Augment, StrongWithoutOpsOrCutoutEqualsWeak) {
  auto p = aug::AugmentPolicy::strong_default();
  p.ops_per_sample = 0;
  p.cutout_fraction = 0;
  const auto x = ramp(3, 8, 8);
  for (std::uint64_t s = 0; s < 20; ++s) {
    const AugmentKey key{s, 4, 7};
    EXPECT_EQ(aug::strong(x, p, key), aug::weak(x, p, key));
  }
}

TEST(Augment, CutoutZeroesTheDrawnRectangle) {
  auto p = aug::AugmentPolicy::strong_default();
  p.ops_per_sample = 0;
  p.cutout_fraction = 0.5;
  p.flip_probability = 0;
  p.max_translate_fraction = 0;
  const Tensor<double> x(Shape{1, 16, 16}, 1.0);
  const AugmentKey key{5, 0, 0};
  const auto drawn = aug::draw_strong(p, key, 16, 16);
  ASSERT_TRUE(drawn.cutout.has_value());
  const auto r = *drawn.cutout;
  EXPECT_GE(r.height, 1u);
  EXPECT_LE(r.height, 8u);
  const auto y = aug::strong(x, p, key);
  for (std::size_t i = 0; i < 16; ++i)
    for (std::size_t j = 0; j < 16; ++j) {
      const bool inside = i >= r.top && i < r.top + r.height && j >= r.left && j < r.left + r.width;
      EXPECT_EQ(y[i * 16 + j], inside ? 0.0 : 1.0);
    }
}

TEST(Augment, BrightnessOnConstantImageClamps) {
  auto p = aug::AugmentPolicy::strong_default();
  const Tensor<double> x(Shape{1, 4, 4}, 0.6);
  for (double s : {0.5, 1.5, 1.9}) {
    aug::StrongParams sp;
    sp.ops.push_back({aug::StrongOp::brightness, s, 0, {}});
    Tensor<double> out(x.shape());
    aug::apply_strong<double>(x.values(), out.values(), 1, 4, 4, p, sp);
    for (double v : out.storage()) EXPECT_DOUBLE_EQ(v, std::clamp(0.6 * s, 0.0, 1.0));
  }
}

TEST(Augment, StrongOutputStaysInValueRange) {
  const auto p = aug::AugmentPolicy::strong_default();
  std::mt19937_64 rng(1);
  const auto x = oracle::random_tensor(Shape{3, 8, 8}, rng, 0, 1);
  for (std::uint64_t s = 0; s < 200; ++s) {
    const auto y = aug::strong(x, p, AugmentKey{s, 0, 0});
    for (double v : y.storage()) {
      EXPECT_GE(v, 0.0);
      EXPECT_LE(v, 1.0);
    }
  }
}

TEST(Augment, SameKeySameOutput) {
  const auto p = aug::AugmentPolicy::strong_default();
  const auto x = ramp(3, 8, 8);
  EXPECT_EQ(aug::strong(x, p, AugmentKey{3, 4, 5}), aug::strong(x, p, AugmentKey{3, 4, 5}));
}

TEST(Augment, DistinctSeedsGiveDistinctViews) {
  const auto p = aug::AugmentPolicy::strong_default();
  std::mt19937_64 rng(2);
  const auto x = oracle::random_tensor(Shape{3, 8, 8}, rng, 0, 1);
  std::set<std::vector<double>> seen;
  for (std::uint64_t s = 0; s < 1000; ++s) seen.insert(aug::strong(x, p, AugmentKey{s, 0, 0}).storage());
  EXPECT_EQ(seen.size(), 1000u);
}

TEST(Augment, EmptyStrongMenuIsConfigError) {
  auto p = aug::AugmentPolicy::strong_default();
  p.strong_ops.clear();
  EXPECT_THROW(aug::strong(ramp(1, 4, 4), p, AugmentKey{}), boss::ConfigError);
}

TEST(Augment, BatchRowsUseTheirOwnKeys) {
  const auto p = aug::AugmentPolicy::strong_default();
  std::mt19937_64 rng(3);
  const auto batch = oracle::random_tensor(Shape{3, 3, 8, 8}, rng, 0, 1);
  const std::vector<std::size_t> idx{10, 20, 30};
  const auto out = aug::augment_batch(batch, idx, p, 77, 5);
  for (std::size_t b = 0; b < 3; ++b) {
    Tensor<double> one(Shape{3, 8, 8}, std::vector<double>(batch.row(b).begin(), batch.row(b).end()));
    const auto expect = aug::strong(one, p, AugmentKey{77, idx[b], 5});
    EXPECT_TRUE(std::equal(expect.storage().begin(), expect.storage().end(), out.row(b).begin()));
  }
}

TEST(Augment, StrongOpNamesRoundTrip) {
  for (auto op : {aug::StrongOp::brightness, aug::StrongOp::contrast, aug::StrongOp::noise, aug::StrongOp::quantize,
                  aug::StrongOp::cutout})
    EXPECT_EQ(aug::strong_op_from_string(aug::to_string(op)), op);
  EXPECT_THROW(aug::strong_op_from_string("shear"), boss::ConfigError);
}
