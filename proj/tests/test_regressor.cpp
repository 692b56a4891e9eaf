#include <gtest/gtest.h>

#include <cmath>
#include <memory>
#include <set>

#include "occbranch/annotation.hpp"
#include "occbranch/dataset.hpp"
#include "occbranch/nn.hpp"
#include "occbranch/regressor.hpp"
#include "occbranch/rng.hpp"
#include "occbranch/synthdata.hpp"

using namespace occbranch;
using namespace occbranch::regressor;

namespace {

Sample scene_sample(int seed, int size = 32, synth::OcclusionRegime regime = synth::OcclusionRegime::medium) {
  const auto scene = synth::generate_scene(synth::TreeKind::y_shaped, {size, size}, regime, seed);
  return make_sample("s" + std::to_string(seed), scene, synth::rasterize(scene));
}

ModelSpec small_spec(int size = 32) {
  ModelSpec s;
  s.height = size;
  s.width = size;
  s.backbone = {4, 8};
  s.hidden = {32, 16};
  s.seed = 11;
  return s;
}

RgbImage random_image(Rng& rng, int w, int h) {
  RgbImage img(w, h, 3);
  for (auto& v : img.data) v = static_cast<std::uint8_t>(rng.below(256));
  return img;
}

/// Direct 7-loop convolution used as an oracle for the im2col path.
nn::Tensor<double> naive_conv(const nn::Conv2d<double>& conv, const nn::Tensor<double>& x, int stride, int pad) {
  const int k = conv.kernel();
  const int oh = (x.h + 2 * pad - k) / stride + 1;
  const int ow = (x.w + 2 * pad - k) / stride + 1;
  nn::Tensor<double> y(x.n, conv.out_channels(), oh, ow);
  for (int n = 0; n < x.n; ++n)
    for (int o = 0; o < conv.out_channels(); ++o)
      for (int oy = 0; oy < oh; ++oy)
        for (int ox = 0; ox < ow; ++ox) {
          long double acc = conv.has_bias() ? conv.bias.value[o] : 0.0;
          for (int c = 0; c < conv.in_channels(); ++c)
            for (int ky = 0; ky < k; ++ky)
              for (int kx = 0; kx < k; ++kx) {
                const int iy = oy * stride - pad + ky;
                const int ix = ox * stride - pad + kx;
                if (iy < 0 || ix < 0 || iy >= x.h || ix >= x.w) continue;
                acc += conv.weight.value[o * conv.in_channels() * k * k + (c * k + ky) * k + kx] *
                       x.at(n, c, iy, ix);
              }
          y.at(n, o, oy, ox) = static_cast<double>(acc);
        }
  return y;
}

}  // namespace

TEST(Layers, ConvMatchesDirectConvolution) {
  Rng rng(5);
  for (int stride : {1, 2}) {
    nn::Conv2d<double> conv("c", 3, 5, 3, stride, 1, true);
    nn::init_fan_in_uniform<double>(conv.params(), 17);
    for (auto& b : conv.bias.value) b = rng.uniform(-1, 1);
    nn::Tensor<double> x(2, 3, 9, 7);
    for (auto& v : x.data) v = rng.uniform(-1, 1);
    const auto y = conv.forward(x);
    const auto ref = naive_conv(conv, x, stride, 1);
    ASSERT_TRUE(y.same_shape(ref));
    for (std::size_t i = 0; i < y.size(); ++i) EXPECT_NEAR(y.data[i], ref.data[i], 1e-12);
  }
}

TEST(Layers, DenseReluPoolUpsample) {
  nn::Dense<double> d("d", 3, 2);
  d.weight.value = {1, 2, 3, -1, 0, 1};
  d.bias.value = {0.5, -0.5};
  nn::Tensor<double> x(1, 3, 1, 1);
  x.data = {1, 1, 2};
  const auto y = d.forward(x);
  EXPECT_DOUBLE_EQ(y.data[0], 1 + 2 + 6 + 0.5);
  EXPECT_DOUBLE_EQ(y.data[1], -1 + 0 + 2 - 0.5);

  nn::ReLU<double> relu;
  nn::Tensor<double> r(1, 1, 1, 3);
  r.data = {-2, 0, 3};
  EXPECT_EQ(relu.forward(r).data, (std::vector<double>{0, 0, 3}));

  nn::MaxPool2<double> pool;
  nn::Tensor<double> p(1, 1, 2, 4);
  p.data = {1, 5, 2, 0, 3, 4, 8, 7};
  const auto pooled = pool.forward(p);
  EXPECT_EQ(pooled.data, (std::vector<double>{5, 8}));
  nn::Tensor<double> g(1, 1, 1, 2);
  g.data = {1, 2};
  EXPECT_EQ(pool.backward(g).data, (std::vector<double>{0, 1, 0, 0, 0, 0, 2, 0}));

  nn::Upsample2<double> up;
  const auto u = up.forward(pooled);
  EXPECT_EQ(u.data, (std::vector<double>{5, 5, 8, 8, 5, 5, 8, 8}));
  nn::Tensor<double> ug(1, 1, 2, 4, 1.0);
  EXPECT_EQ(up.backward(ug).data, (std::vector<double>{4, 4}));
}

TEST(Adam, TwoStepsMatchClosedForm) {
  nn::Param<double> p("p", {2});
  p.value = {1.0, -2.0};
  nn::AdamConfig cfg{0.1, 0.9, 0.999, 1e-8};
  nn::Adam<double> adam({&p}, cfg);
  const double g1[2] = {0.5, -4.0};
  const double g2[2] = {-1.0, 2.0};
  double expect[2] = {1.0, -2.0};
  double m[2] = {0, 0}, v[2] = {0, 0};
  for (int t = 1; t <= 2; ++t) {
    const double* g = t == 1 ? g1 : g2;
    p.grad = {g[0], g[1]};
    adam.step();
    for (int i = 0; i < 2; ++i) {
      m[i] = 0.9 * m[i] + 0.1 * g[i];
      v[i] = 0.999 * v[i] + 0.001 * g[i] * g[i];
      const double mh = m[i] / (1 - std::pow(0.9, t));
      const double vh = v[i] / (1 - std::pow(0.999, t));
      expect[i] -= 0.1 * mh / (std::sqrt(vh) + 1e-8);
      EXPECT_NEAR(p.value[i], expect[i], 1e-12);
    }
  }
  EXPECT_EQ(adam.step_count(), 2);
  p.grad = {std::nan(""), 0.0};
  const auto before = p.value;
  EXPECT_THROW(adam.step(), DivergenceDetected);
  EXPECT_EQ(p.value, before);
}

TEST(TrainConfigTest, CosineScheduleEndpoints) {
  TrainConfig c;
  c.learning_rate = 1e-3;
  c.epochs = 11;
  EXPECT_EQ(c.learning_rate_at(1), 1e-3);
  EXPECT_EQ(c.learning_rate_at(11), 1e-3);
  c.final_lr_fraction = 0.1;
  EXPECT_NEAR(c.learning_rate_at(1), 1e-3, 1e-18);
  EXPECT_NEAR(c.learning_rate_at(6), 0.55e-3, 1e-15);  // cosine midpoint
  EXPECT_NEAR(c.learning_rate_at(11), 1e-4, 1e-18);
  for (int e = 1; e < 11; ++e) EXPECT_GT(c.learning_rate_at(e), c.learning_rate_at(e + 1));
  c.final_lr_fraction = 0.0;
  EXPECT_THROW(c.validate(), SpecMismatch);
  c.final_lr_fraction = 1.0;
  c.max_shift = -1;
  EXPECT_THROW(c.validate(), SpecMismatch);
}

TEST(ModelSpecTest, DefaultsAndHeadSize) {
  const ModelSpec s;
  EXPECT_EQ(s.hidden, (std::vector<int>{2048, 512}));
  EXPECT_EQ(s.head_size(), 2 * 64);
  EXPECT_EQ(TrainConfig{}.batch_size, 8);
  ModelSpec bad = s;
  bad.hidden = {0};
  EXPECT_THROW(bad.validate(), SpecMismatch);
  bad = s;
  bad.n_branches = 0;
  EXPECT_THROW(bad.validate(), SpecMismatch);
  TrainConfig t;
  t.batch_size = 0;
  EXPECT_THROW(t.validate(), SpecMismatch);
  t = {};
  t.beta2 = 1.0;
  EXPECT_THROW(t.validate(), SpecMismatch);
  t = {};
  t.learning_rate = 0.0;
  EXPECT_THROW(t.validate(), SpecMismatch);
}

TEST(RegressorTest, OutputShapeAndShapeError) {
  Regressor<float> net(small_spec());
  EXPECT_EQ(net.head().out_features(), 2 * 32);
  nn::Tensor<float> x(3, 3, 32, 32, 0.5f);
  const auto y = net.forward(x);
  EXPECT_EQ(y.n, 3);
  EXPECT_EQ(y.c, 2);
  EXPECT_EQ(y.h, 32);
  EXPECT_EQ(y.w, 1);
  for (float v : y.data) EXPECT_TRUE(std::isfinite(v));
  EXPECT_THROW(net.forward(nn::Tensor<float>(1, 3, 31, 32)), ShapeError);
  EXPECT_THROW(net.forward(nn::Tensor<float>(1, 4, 32, 32)), ShapeError);
}

TEST(RegressorTest, MaskedMseIgnoresInvalidEntries) {
  nn::Tensor<double> pred(1, 2, 2, 1), target(1, 2, 2, 1);
  pred.data = {0.1, 0.5, 0.3, 0.9};
  target.data = {0.2, 100.0, 0.1, 0.9};
  const std::vector<std::uint8_t> valid = {1, 0, 1, 1};
  const auto loss = mse_loss(pred, target, valid);
  EXPECT_NEAR(loss.value, (0.01 + 0.04 + 0.0) / 3.0, 1e-15);
  EXPECT_EQ(loss.grad.data[1], 0.0);
  EXPECT_NEAR(loss.grad.data[0], 2.0 * -0.1 / 3.0, 1e-15);
  EXPECT_THROW(mse_loss(pred, target, std::vector<std::uint8_t>(4, 0)), EmptyLoss);
}

TEST(RegressorTest, GradientCheckPasses) {
  const Sample s = scene_sample(3);
  const GradCheckReport rep = gradient_check(small_spec(), s, 1e-4);
  EXPECT_TRUE(rep.passed) << rep.worst_param << " " << rep.max_rel_error;
  EXPECT_LT(rep.max_rel_error, 1e-4);
  EXPECT_GT(rep.checked, 1000u);
  for (const auto& [name, g] : rep.max_abs_grad) EXPECT_GT(g, 0.0) << name;
}

TEST(RegressorTest, EveryRowPredictedInsideCanvas) {
  Regressor<float> net(small_spec());
  Rng rng(21);
  for (int i = 0; i < 50; ++i) {
    const PositionTarget t = predict_positions(net, random_image(rng, 32, 32));
    EXPECT_EQ(t.valid_count(), 64u);
    for (double c : t.coords) {
      EXPECT_GE(c, 0.0);
      EXPECT_LE(c, 31.0);
    }
  }
}

TEST(RegressorTest, MirroredLinearModelIsFlipEquivariant) {
  // With only the linear head, mirroring the weights across columns and
  // swapping channels makes f(flip(x)) = flip(f(x)) exactly.
  ModelSpec spec = small_spec();
  spec.backbone = {};
  spec.hidden = {};
  Regressor<double> net(spec);
  Regressor<double> mirrored(spec);
  const int n = spec.n_branches, H = spec.height, W = spec.width, C = spec.channels;
  auto& w = net.head().weight.value;
  auto& b = net.head().bias.value;
  Rng rng(2);
  for (auto& v : b) v = rng.uniform(0.2, 0.8);
  auto& w2 = mirrored.head().weight.value;
  auto& b2 = mirrored.head().bias.value;
  const int in = C * H * W;
  for (int bi = 0; bi < n; ++bi)
    for (int r = 0; r < H; ++r) {
      const int out = bi * H + r, src = (n - 1 - bi) * H + r;
      b2[out] = 1.0 - b[src];
      for (int c = 0; c < C; ++c)
        for (int y = 0; y < H; ++y)
          for (int x = 0; x < W; ++x)
            w2[out * in + (c * H + y) * W + x] = -w[src * in + (c * H + y) * W + (W - 1 - x)];
    }
  for (int seed = 0; seed < 5; ++seed) {
    const Sample s = scene_sample(seed);
    const PositionTarget direct = predict_positions(net, s.image);
    const PositionTarget flipped = predict_positions(mirrored, annotation::hflip(s.image));
    const PositionTarget back = annotation::hflip(flipped);
    for (std::size_t i = 0; i < direct.coords.size(); ++i) EXPECT_NEAR(back.coords[i], direct.coords[i], 1e-9);
  }
}

TEST(RegressorTest, TrainingIsDeterministicAndLearns) {
  std::vector<Sample> train_set, val;
  for (int i = 0; i < 24; ++i) train_set.push_back(scene_sample(100 + i));
  for (int i = 0; i < 6; ++i) val.push_back(scene_sample(200 + i));
  TrainConfig cfg;
  cfg.epochs = 8;
  cfg.learning_rate = 1e-3;
  cfg.seed = 4;
  std::set<std::string> seen;
  int epochs_seen = 0;
  const auto a = train(small_spec(), train_set, val, cfg,
                       [&](int, const std::vector<std::string>& ids) { seen.insert(ids.begin(), ids.end()); },
                       [&](const EpochRecord&) { ++epochs_seen; });
  // Shift the heap so buffers land at different alignments in the rerun.
  std::vector<std::unique_ptr<char[]>> shifts;
  for (int i = 1; i < 40; ++i) shifts.emplace_back(new char[8 * i + 8]);
  const auto b = train(small_spec(), train_set, val, cfg);
  ASSERT_EQ(a.history.size(), 8u);
  EXPECT_EQ(epochs_seen, 8);
  EXPECT_LT(a.history.back().train_loss, a.history.front().train_loss);
  EXPECT_GE(a.best_epoch, 1);
  EXPECT_LE(a.best_epoch, 8);
  for (std::size_t i = 0; i < a.history.size(); ++i) {
    EXPECT_EQ(a.history[i].train_loss, b.history[i].train_loss);
    EXPECT_EQ(a.history[i].val_loss, b.history[i].val_loss);
  }
  EXPECT_EQ(seen.size(), train_set.size());
  for (const auto& s : val) EXPECT_FALSE(seen.count(s.id));
  double best = 1e9;
  for (const auto& rec : a.history) best = std::min(best, rec.val_loss);
  EXPECT_NEAR(evaluate_loss(*a.state.net, val), best, 1e-6);
}

TEST(RegressorTest, DivergenceIsReported) {
  std::vector<Sample> train_set;
  for (int i = 0; i < 8; ++i) train_set.push_back(scene_sample(300 + i));
  TrainConfig cfg;
  cfg.epochs = 3;
  cfg.learning_rate = 1e30;
  EXPECT_THROW(train(small_spec(), train_set, {}, cfg), DivergenceDetected);
}
