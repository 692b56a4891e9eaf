#include <gtest/gtest.h>

#include <cmath>

#include "occbranch/dataset.hpp"
#include "occbranch/rng.hpp"
#include "occbranch/segbaseline.hpp"
#include "occbranch/synthdata.hpp"

using namespace occbranch;
using namespace occbranch::seg;

namespace {

SegSpec small_seg(Variant v = Variant::whole) {
  SegSpec s;
  s.height = 32;
  s.width = 32;
  s.widths = {6, 12};
  s.bottleneck = 16;
  s.variant = v;
  s.seed = 3;
  return s;
}

Sample scene_sample(int seed, synth::OcclusionRegime regime) {
  const auto scene = synth::generate_scene(synth::TreeKind::y_shaped, {32, 32}, regime, seed);
  return make_sample("s" + std::to_string(seed), scene, synth::rasterize(scene));
}

/// Sum over layers of (k*k*in*out + out), written from the layer table.
std::size_t expected_parameters(const SegSpec& s) {
  auto conv = [](std::size_t k, std::size_t in, std::size_t out) { return k * k * in * out + out; };
  std::size_t total = 0;
  std::size_t in = s.channels;
  for (int w : s.widths) {
    total += conv(3, in, w);
    in = w;
  }
  total += conv(3, in, s.bottleneck);
  std::size_t below = s.bottleneck;
  for (int i = s.depth() - 1; i >= 0; --i) {
    total += conv(3, below + s.widths[i], s.widths[i]);
    below = s.widths[i];
  }
  return total + conv(1, s.widths[0], 1);
}

}  // namespace

TEST(SegModel, OutputShapeAndParameterCount) {
  for (const SegSpec& spec : {small_seg(), SegSpec{}}) {
    UNet<float> net(spec);
    nn::Tensor<float> x(2, spec.channels, spec.height, spec.width, 0.3f);
    const auto y = net.forward(x);
    EXPECT_EQ(y.n, 2);
    EXPECT_EQ(y.c, 1);
    EXPECT_EQ(y.h, spec.height);
    EXPECT_EQ(y.w, spec.width);
    EXPECT_EQ(spec.parameter_count(), expected_parameters(spec));
    EXPECT_EQ(nn::parameter_count(net.params()), expected_parameters(spec));
  }
  EXPECT_EQ(SegSpec{}.depth(), 3);
}

TEST(SegModel, DeterministicInitAndValidation) {
  UNet<float> a(small_seg()), b(small_seg());
  SegSpec other = small_seg();
  other.seed = 4;
  UNet<float> c(other);
  EXPECT_EQ(a.params()[0]->value, b.params()[0]->value);
  EXPECT_NE(a.params()[0]->value, c.params()[0]->value);
  SegSpec bad = small_seg();
  bad.height = 30;  // not divisible by 4
  EXPECT_THROW(bad.validate(), SpecMismatch);
  bad = small_seg();
  bad.widths = {};
  EXPECT_THROW(bad.validate(), SpecMismatch);
  EXPECT_THROW(a.forward(nn::Tensor<float>(1, 3, 16, 32)), ShapeError);
}

TEST(SegModel, BackwardMatchesFiniteDifferences) {
  SegSpec spec = small_seg();
  spec.height = spec.width = 8;
  spec.widths = {3, 4};
  spec.bottleneck = 5;
  UNet<double> net(spec);
  Rng rng(8);
  nn::Tensor<double> x(1, 3, 8, 8);
  for (auto& v : x.data) v = rng.uniform();
  std::vector<double> probe(64);
  for (auto& v : probe) v = rng.uniform(-1, 1);
  auto loss = [&] {
    const auto y = net.forward(x);
    double s = 0;
    for (int i = 0; i < 64; ++i) s += probe[i] * y.data[i];
    return s;
  };
  auto params = net.params();
  nn::zero_grads(params);
  net.forward(x);
  nn::Tensor<double> g(1, 1, 8, 8);
  g.data = probe;
  net.backward(g);
  double worst = 0;
  for (auto* p : params) {
    for (std::size_t i = 0; i < p->size(); i += 3) {
      const double keep = p->value[i];
      p->value[i] = keep + 1e-5;
      const double up = loss();
      p->value[i] = keep - 1e-5;
      const double down = loss();
      p->value[i] = keep;
      const double numeric = (up - down) / 2e-5;
      worst = std::max(worst, std::abs(numeric - p->grad[i]) /
                                  std::max({std::abs(numeric), std::abs(p->grad[i]), 1e-6}));
    }
  }
  EXPECT_LT(worst, 1e-4);
}

TEST(DiceLoss, Examples) {
  std::vector<std::uint8_t> mask(64 * 64, 0);
  for (int i = 0; i < 300; ++i) mask[i * 7] = 1;
  std::vector<double> perfect(mask.begin(), mask.end());
  for (double w : {1.0, 5.0, 40.0}) EXPECT_LT(weighted_dice_loss(perfect, mask, w).value, 1e-3);
  EXPECT_NEAR(weighted_dice_loss(perfect, mask).value, 0.0, 1e-12);

  const std::vector<double> zeros(mask.size(), 0.0);
  EXPECT_NEAR(weighted_dice_loss(zeros, mask, 1.0).value, 1.0 - 1.0 / 301.0, 1e-12);

  // F = 100 foreground pixels, half of them predicted exactly.
  std::vector<std::uint8_t> m(400, 0);
  std::vector<double> p(400, 0.0);
  for (int i = 0; i < 100; ++i) m[i] = 1;
  for (int i = 0; i < 50; ++i) p[i] = 1.0;
  EXPECT_NEAR(weighted_dice_loss(p, m, 1.0).value, 1.0 - 101.0 / 151.0, 1e-12);
}

TEST(DiceLoss, DefaultWeightIsBackgroundOverForeground) {
  std::vector<std::uint8_t> m(400, 0);
  for (int i = 0; i < 100; ++i) m[i] = 1;
  EXPECT_DOUBLE_EQ(default_foreground_weight(m), 3.0);
  EXPECT_DOUBLE_EQ(default_foreground_weight(std::vector<std::uint8_t>(10, 0)), 1.0);
  std::vector<double> p(400, 0.25);
  EXPECT_DOUBLE_EQ(weighted_dice_loss(p, m).value, weighted_dice_loss(p, m, 3.0).value);
  // By hand: sum wpg = 75, sum wp = 75 + 75, sum wg = 300.
  EXPECT_NEAR(weighted_dice_loss(p, m).value, 1.0 - (2 * 75.0 + 1) / (150.0 + 300.0 + 1), 1e-12);
}

TEST(DiceLoss, BoundedAndGradientCorrect) {
  Rng rng(12);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<std::uint8_t> m(16);
    std::vector<double> p(16);
    for (auto& v : m) v = rng.bernoulli(0.3);
    for (auto& v : p) v = rng.uniform();
    const double loss = weighted_dice_loss(p, m).value;
    EXPECT_GE(loss, 0.0);
    EXPECT_LE(loss, 1.0 + 1e-12);
    EXPECT_LT(dice_gradient_check(p, m), 1e-5);
  }
}

TEST(Segment, ThresholdExamplesAndMonotonicity) {
  Raster<float> low(8, 8, 1, 0.4f), high(8, 8, 1, 0.6f);
  EXPECT_EQ(count_foreground(threshold_mask(low)), 0u);
  EXPECT_EQ(count_foreground(threshold_mask(high)), 64u);
  Rng rng(3);
  Raster<float> probs(16, 16, 1);
  for (auto& v : probs.data) v = static_cast<float>(rng.uniform());
  MaskImage prev = threshold_mask(probs, 0.0);
  for (int i = 1; i <= 20; ++i) {
    const MaskImage cur = threshold_mask(probs, i / 20.0);
    EXPECT_TRUE(is_subset(cur, prev));
    prev = cur;
  }
  UNet<float> net(small_seg());
  EXPECT_THROW(segment(net, RgbImage(16, 16, 3)), ShapeError);
}

TEST(SegTraining, OverfitsOneSampleAndFillsOcclusion) {
  Sample s = scene_sample(5, synth::OcclusionRegime::heavy);
  ASSERT_GT(s.occlusion_fraction, 0.1);
  const std::vector<Sample> one = {s};
  TrainConfig cfg;
  cfg.epochs = 300;
  cfg.learning_rate = 3e-3;
  cfg.hflip = false;
  cfg.batch_size = 1;
  const auto result = train_seg(small_seg(Variant::whole), one, {}, cfg);
  EXPECT_LT(result.history.back().train_loss, 0.05);
  EXPECT_LT(evaluate_dice(*result.state.net, one), 0.05);

  const MaskImage pred = segment(*result.state.net, s.image);
  std::size_t hidden = 0, covered = 0;
  for (std::size_t i = 0; i < pred.data.size(); ++i) {
    if (s.whole_mask.data[i] && !s.visible_mask.data[i]) {
      ++hidden;
      covered += pred.data[i];
    }
  }
  ASSERT_GT(hidden, 0u);
  EXPECT_GT(static_cast<double>(covered) / hidden, 0.9);
}

TEST(SegTraining, DeterministicAndUsesVariantMask) {
  std::vector<Sample> train_set, val;
  for (int i = 0; i < 8; ++i) train_set.push_back(scene_sample(40 + i, synth::OcclusionRegime::heavy));
  for (int i = 0; i < 2; ++i) val.push_back(scene_sample(60 + i, synth::OcclusionRegime::heavy));
  EXPECT_EQ(&variant_mask(train_set[0], Variant::visible), &train_set[0].visible_mask);
  EXPECT_EQ(&variant_mask(train_set[0], Variant::whole), &train_set[0].whole_mask);
  TrainConfig cfg;
  cfg.epochs = 3;
  cfg.learning_rate = 1e-3;
  cfg.seed = 9;
  const auto a = train_seg(small_seg(), train_set, val, cfg);
  const auto b = train_seg(small_seg(), train_set, val, cfg);
  ASSERT_EQ(a.history.size(), 3u);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_EQ(a.history[i].train_loss, b.history[i].train_loss);
    EXPECT_EQ(a.history[i].val_loss, b.history[i].val_loss);
  }
  const auto c = train_seg(small_seg(Variant::visible), train_set, val, cfg);
  EXPECT_NE(a.history[0].train_loss, c.history[0].train_loss);
}
