#include "occbranch/segbaseline.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "occbranch/annotation.hpp"
#include "occbranch/error.hpp"
#include "occbranch/regressor.hpp"
#include "occbranch/rng.hpp"

namespace occbranch::seg {

namespace {

constexpr double kSmoothing = 1.0;

template <typename T>
nn::Tensor<T> concat_channels(const nn::Tensor<T>& a, const nn::Tensor<T>& b) {
  nn::Tensor<T> out(a.n, a.c + b.c, a.h, a.w);
  const std::size_t plane = static_cast<std::size_t>(a.h) * a.w;
  for (int n = 0; n < a.n; ++n) {
    std::copy(a.sample(n), a.sample(n) + a.c * plane, out.sample(n));
    std::copy(b.sample(n), b.sample(n) + b.c * plane, out.sample(n) + a.c * plane);
  }
  return out;
}

template <typename T>
void split_channels(const nn::Tensor<T>& g, int first_c, nn::Tensor<T>& a, nn::Tensor<T>& b) {
  const std::size_t plane = static_cast<std::size_t>(g.h) * g.w;
  a = nn::Tensor<T>(g.n, first_c, g.h, g.w);
  b = nn::Tensor<T>(g.n, g.c - first_c, g.h, g.w);
  for (int n = 0; n < g.n; ++n) {
    std::copy(g.sample(n), g.sample(n) + first_c * plane, a.sample(n));
    std::copy(g.sample(n) + first_c * plane, g.sample(n) + g.c * plane, b.sample(n));
  }
}

template <typename T>
T sigmoid(T z) {
  return T(1) / (T(1) + std::exp(-z));
}

}  // namespace

std::string to_string(Variant v) { return v == Variant::visible ? "visible" : "whole"; }

Variant parse_variant(const std::string& s) {
  if (s == "visible") return Variant::visible;
  if (s == "whole") return Variant::whole;
  throw ConfigError("unknown segmentation variant '" + s + "'");
}

void SegSpec::validate() const {
  if (channels <= 0 || height <= 0 || width <= 0) throw SpecMismatch("input shape must be positive");
  if (widths.empty()) throw SpecMismatch("encoder needs at least one stage");
  for (int w : widths)
    if (w <= 0) throw SpecMismatch("channel widths must be positive");
  if (bottleneck <= 0) throw SpecMismatch("bottleneck width must be positive");
  const int div = 1 << depth();
  if (height % div != 0 || width % div != 0) {
    throw SpecMismatch("input " + std::to_string(height) + "x" + std::to_string(width) + " not divisible by " +
                       std::to_string(div));
  }
}

std::size_t SegSpec::parameter_count() const {
  std::size_t n = 0;
  int in = channels;
  for (int w : widths) {
    n += static_cast<std::size_t>(in) * 9 * w + w;
    in = w;
  }
  n += static_cast<std::size_t>(widths.back()) * 9 * bottleneck + bottleneck;
  int below = bottleneck;
  for (int i = depth() - 1; i >= 0; --i) {
    n += static_cast<std::size_t>(below + widths[i]) * 9 * widths[i] + widths[i];
    below = widths[i];
  }
  n += static_cast<std::size_t>(widths.front()) + 1;
  return n;
}

template <typename T>
UNet<T>::UNet(const SegSpec& spec) : spec_(spec) {
  spec_.validate();
  const int d = spec_.depth();
  int in = spec_.channels;
  for (int i = 0; i < d; ++i) {
    enc_.push_back(std::make_unique<nn::Conv2d<T>>("enc" + std::to_string(i), in, spec_.widths[i], 3, 1, 1, true));
    in = spec_.widths[i];
  }
  enc_.front()->set_input_grad(false);
  enc_relu_.resize(d);
  pool_.resize(d);
  mid_ = std::make_unique<nn::Conv2d<T>>("mid", spec_.widths.back(), spec_.bottleneck, 3, 1, 1, true);
  up_.resize(d);
  up_channels_.resize(d);
  dec_.resize(d);
  dec_relu_.resize(d);
  int below = spec_.bottleneck;
  for (int i = d - 1; i >= 0; --i) {
    up_channels_[i] = below;
    dec_[i] = std::make_unique<nn::Conv2d<T>>("dec" + std::to_string(i), below + spec_.widths[i], spec_.widths[i], 3,
                                              1, 1, true);
    below = spec_.widths[i];
  }
  out_ = std::make_unique<nn::Conv2d<T>>("out", spec_.widths.front(), 1, 1, 1, 0, true);
  nn::init_fan_in_uniform(params(), spec_.seed);
}

template <typename T>
std::vector<nn::Param<T>*> UNet<T>::params() {
  std::vector<nn::Param<T>*> out;
  auto add = [&](nn::Conv2d<T>& c) {
    for (auto* p : c.params()) out.push_back(p);
  };
  for (auto& c : enc_) add(*c);
  add(*mid_);
  for (int i = spec_.depth() - 1; i >= 0; --i) add(*dec_[i]);
  add(*out_);
  return out;
}

template <typename T>
nn::Tensor<T> UNet<T>::forward(const nn::Tensor<T>& x) {
  if (x.c != spec_.channels || x.h != spec_.height || x.w != spec_.width) {
    throw ShapeError("segmentation input does not match the model's input shape");
  }
  const int d = spec_.depth();
  std::vector<nn::Tensor<T>> skips(d);
  nn::Tensor<T> cur = x;
  for (int i = 0; i < d; ++i) {
    skips[i] = enc_relu_[i].forward(enc_[i]->forward(cur));
    cur = pool_[i].forward(skips[i]);
  }
  cur = mid_relu_.forward(mid_->forward(cur));
  for (int i = d - 1; i >= 0; --i) {
    cur = dec_relu_[i].forward(dec_[i]->forward(concat_channels(up_[i].forward(cur), skips[i])));
  }
  return out_->forward(cur);
}

template <typename T>
void UNet<T>::backward(const nn::Tensor<T>& grad_logits) {
  const int d = spec_.depth();
  std::vector<nn::Tensor<T>> skip_grads(d);
  nn::Tensor<T> g = out_->backward(grad_logits);
  for (int i = 0; i < d; ++i) {
    g = dec_[i]->backward(dec_relu_[i].backward(g));
    nn::Tensor<T> g_up;
    split_channels(g, up_channels_[i], g_up, skip_grads[i]);
    g = up_[i].backward(g_up);
  }
  g = mid_->backward(mid_relu_.backward(g));
  for (int i = d - 1; i >= 0; --i) {
    g = pool_[i].backward(g);
    for (std::size_t k = 0; k < g.size(); ++k) g.data[k] += skip_grads[i].data[k];
    g = enc_[i]->backward(enc_relu_[i].backward(g));
  }
}

template <typename T>
SegModelState<T>::SegModelState(const SegSpec& spec, nn::AdamConfig config)
    : net(std::make_unique<UNet<T>>(spec)), adam(net->params(), config) {}

template <typename T>
SegModelState<T> build_segmodel(const SegSpec& spec, nn::AdamConfig config) {
  return SegModelState<T>(spec, config);
}

double default_foreground_weight(std::span<const std::uint8_t> mask) {
  std::size_t fg = 0;
  for (auto v : mask) fg += v != 0;
  if (fg == 0) return 1.0;
  return static_cast<double>(mask.size() - fg) / static_cast<double>(fg);
}

DiceResult weighted_dice_loss(std::span<const double> p, std::span<const std::uint8_t> g,
                              std::optional<double> foreground_weight) {
  if (p.size() != g.size()) throw ShapeError("probabilities and mask differ in size");
  const double fw = foreground_weight.value_or(default_foreground_weight(g));
  double inter = 0.0, sum_p = 0.0, sum_g = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double w = g[i] ? fw : 1.0;
    inter += w * p[i] * g[i];
    sum_p += w * p[i];
    sum_g += w * g[i];
  }
  const double num = 2.0 * inter + kSmoothing;
  const double den = sum_p + sum_g + kSmoothing;
  DiceResult out;
  out.value = 1.0 - num / den;
  out.grad.resize(p.size());
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double w = g[i] ? fw : 1.0;
    out.grad[i] = -(2.0 * w * g[i] * den - num * w) / (den * den);
  }
  return out;
}

double dice_gradient_check(std::span<const double> probabilities, std::span<const std::uint8_t> mask, double step) {
  const double fw = default_foreground_weight(mask);
  const DiceResult base = weighted_dice_loss(probabilities, mask, fw);
  std::vector<double> p(probabilities.begin(), probabilities.end());
  double worst = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double saved = p[i];
    p[i] = saved + step;
    const double plus = weighted_dice_loss(p, mask, fw).value;
    p[i] = saved - step;
    const double minus = weighted_dice_loss(p, mask, fw).value;
    p[i] = saved;
    const double numeric = (plus - minus) / (2.0 * step);
    const double denom = std::max({std::abs(base.grad[i]), std::abs(numeric), 1e-6});
    worst = std::max(worst, std::abs(base.grad[i] - numeric) / denom);
  }
  return worst;
}

const MaskImage& variant_mask(const Sample& sample, Variant variant) {
  return variant == Variant::visible ? sample.visible_mask : sample.whole_mask;
}

namespace {

struct SegBatch {
  std::vector<RgbImage> flipped_images;
  std::vector<MaskImage> flipped_masks;
  std::vector<const RgbImage*> images;
  std::vector<const MaskImage*> masks;
  std::vector<std::string> ids;
};

/// Forward + dice on one batch. Fills `grad_logits` when non-null.
double dice_step(UNet<float>& net, const SegBatch& batch, nn::Tensor<float>* grad_logits) {
  const nn::Tensor<float> logits = net.forward(regressor::image_batch<float>(batch.images));
  std::vector<double> probs(logits.size());
  std::vector<std::uint8_t> mask(logits.size());
  const std::size_t plane = static_cast<std::size_t>(logits.h) * logits.w;
  for (std::size_t i = 0; i < logits.size(); ++i) probs[i] = sigmoid(static_cast<double>(logits.data[i]));
  for (std::size_t n = 0; n < batch.masks.size(); ++n)
    std::copy(batch.masks[n]->data.begin(), batch.masks[n]->data.end(), mask.begin() + n * plane);
  const DiceResult dice = weighted_dice_loss(probs, mask);
  if (grad_logits) {
    *grad_logits = nn::Tensor<float>(logits.n, logits.c, logits.h, logits.w);
    for (std::size_t i = 0; i < probs.size(); ++i)
      grad_logits->data[i] = static_cast<float>(dice.grad[i] * probs[i] * (1.0 - probs[i]));
  }
  return dice.value;
}

}  // namespace

double evaluate_dice(UNet<float>& net, std::span<const Sample> samples, int batch_size) {
  double sum = 0.0;
  for (std::size_t start = 0; start < samples.size(); start += batch_size) {
    const std::size_t end = std::min(samples.size(), start + batch_size);
    SegBatch batch;
    for (std::size_t i = start; i < end; ++i) {
      batch.images.push_back(&samples[i].image);
      batch.masks.push_back(&variant_mask(samples[i], net.spec().variant));
    }
    sum += dice_step(net, batch, nullptr) * static_cast<double>(end - start);
  }
  return samples.empty() ? std::numeric_limits<double>::quiet_NaN() : sum / static_cast<double>(samples.size());
}

SegTrainResult train_seg(const SegSpec& spec, std::span<const Sample> train_set, std::span<const Sample> val,
                         const TrainConfig& config, const BatchObserver& observer,
                  const EpochObserver& on_epoch) {
  config.validate();
  if (train_set.empty()) throw TooFewSamples("training set is empty");
  SegTrainResult result{SegModelState<float>(spec, config.adam()), {}, -1};
  UNet<float>& net = *result.state.net;
  const auto params = net.params();

  Rng rng(config.seed);
  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), 0);
  double best = std::numeric_limits<double>::infinity();
  std::vector<std::vector<float>> best_values;
  for (auto* p : params) best_values.push_back(p->value);

  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    rng.shuffle(std::span<std::size_t>(order));
    result.state.adam.set_learning_rate(config.learning_rate_at(epoch));
    double loss_sum = 0.0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(config.batch_size));
      SegBatch batch;
      batch.flipped_images.reserve(end - start);
      batch.flipped_masks.reserve(end - start);
      for (std::size_t i = start; i < end; ++i) {
        const Sample& s = train_set[order[i]];
        const MaskImage& m = variant_mask(s, spec.variant);
        batch.ids.push_back(s.id);
        const bool flip = config.hflip && rng.bernoulli(0.5);
        int dx = 0, dy = 0;
        if (config.max_shift > 0) {
          dx = rng.uniform_int(-config.max_shift, config.max_shift);
          dy = rng.uniform_int(-config.max_shift, config.max_shift);
        }
        if (flip || dx != 0 || dy != 0) {
          // Masks share the image translation, edge repetition included.
          RgbImage img = flip ? annotation::hflip(s.image) : s.image;
          MaskImage msk = flip ? annotation::hflip(m) : m;
          if (dx != 0 || dy != 0) {
            img = annotation::translate(img, dx, dy);
            msk = annotation::translate(msk, dx, dy);
          }
          batch.flipped_images.push_back(std::move(img));
          batch.flipped_masks.push_back(std::move(msk));
          batch.images.push_back(&batch.flipped_images.back());
          batch.masks.push_back(&batch.flipped_masks.back());
        } else {
          batch.images.push_back(&s.image);
          batch.masks.push_back(&m);
        }
      }
      if (observer) observer(epoch, batch.ids);
      nn::zero_grads(params);
      nn::Tensor<float> grad;
      const double loss = dice_step(net, batch, &grad);
      if (!std::isfinite(loss)) {
        throw DivergenceDetected("dice loss became non-finite in epoch " + std::to_string(epoch), epoch);
      }
      net.backward(grad);
      try {
        result.state.adam.step();
      } catch (const DivergenceDetected& e) {
        throw DivergenceDetected(std::string(e.what()) + " (epoch " + std::to_string(epoch) + ")", epoch);
      }
      loss_sum += loss * static_cast<double>(end - start);
    }
    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = loss_sum / static_cast<double>(order.size());
    rec.val_loss = val.empty() ? std::numeric_limits<double>::quiet_NaN() : evaluate_dice(net, val, config.batch_size);
    result.history.push_back(rec);
    if (on_epoch) on_epoch(rec);
    const double score = val.empty() ? -static_cast<double>(epoch) : rec.val_loss;
    if (score < best) {
      best = score;
      for (std::size_t i = 0; i < params.size(); ++i) best_values[i] = params[i]->value;
      result.best_epoch = epoch;
    }
  }
  for (std::size_t i = 0; i < params.size(); ++i) params[i]->value = best_values[i];
  return result;
}

template <typename T>
Raster<float> predict_probabilities(UNet<T>& net, const RgbImage& image) {
  const RgbImage* ptr = &image;
  const nn::Tensor<T> logits = net.forward(regressor::image_batch<T>(std::span<const RgbImage* const>(&ptr, 1)));
  Raster<float> out(logits.w, logits.h, 1);
  for (std::size_t i = 0; i < out.data.size(); ++i)
    out.data[i] = static_cast<float>(sigmoid(static_cast<double>(logits.data[i])));
  return out;
}

MaskImage threshold_mask(const Raster<float>& probabilities, double threshold) {
  MaskImage mask = make_mask(probabilities.width, probabilities.height);
  for (std::size_t i = 0; i < mask.data.size(); ++i) mask.data[i] = probabilities.data[i] > threshold ? 1 : 0;
  return mask;
}

template <typename T>
MaskImage segment(UNet<T>& net, const RgbImage& image, double threshold) {
  return threshold_mask(predict_probabilities(net, image), threshold);
}

template class UNet<float>;
template class UNet<double>;
template struct SegModelState<float>;
template struct SegModelState<double>;
template SegModelState<float> build_segmodel<float>(const SegSpec&, nn::AdamConfig);
template SegModelState<double> build_segmodel<double>(const SegSpec&, nn::AdamConfig);
template Raster<float> predict_probabilities<float>(UNet<float>&, const RgbImage&);
template Raster<float> predict_probabilities<double>(UNet<double>&, const RgbImage&);
template MaskImage segment<float>(UNet<float>&, const RgbImage&, double);
template MaskImage segment<double>(UNet<double>&, const RgbImage&, double);

}  // namespace occbranch::seg
