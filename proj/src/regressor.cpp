#include "occbranch/regressor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "occbranch/annotation.hpp"
#include "occbranch/error.hpp"
#include "occbranch/rng.hpp"

namespace occbranch::regressor {

int ModelSpec::feature_size() const {
  int h = height;
  int w = width;
  int c = channels;
  for (int out : backbone) {
    h = (h + 2 - 3) / 2 + 1;
    w = (w + 2 - 3) / 2 + 1;
    c = out;
  }
  return c * h * w;
}

void ModelSpec::validate() const {
  if (channels <= 0 || height <= 0 || width <= 0) throw SpecMismatch("input shape must be positive");
  if (n_branches <= 0) throw SpecMismatch("n_branches must be positive");
  for (int c : backbone)
    if (c <= 0) throw SpecMismatch("backbone channel counts must be positive");
  for (int u : hidden)
    if (u <= 0) throw SpecMismatch("dense layer widths must be positive");
}

template <typename T>
Regressor<T>::Regressor(const ModelSpec& spec) : spec_(spec) {
  spec_.validate();
  int in_c = spec_.channels;
  for (std::size_t i = 0; i < spec_.backbone.size(); ++i) {
    auto conv = std::make_unique<nn::Conv2d<T>>("conv" + std::to_string(i), in_c, spec_.backbone[i], 3, 2, 1,
                                               spec_.conv_bias);
    if (i == 0) conv->set_input_grad(false);
    convs_.push_back(conv.get());
    net_.add(std::move(conv));
    net_.add(std::make_unique<nn::ReLU<T>>());
    in_c = spec_.backbone[i];
  }
  int in_f = spec_.feature_size();
  for (std::size_t i = 0; i < spec_.hidden.size(); ++i) {
    auto dense = std::make_unique<nn::Dense<T>>("dense" + std::to_string(i), in_f, spec_.hidden[i]);
    denses_.push_back(dense.get());
    net_.add(std::move(dense));
    net_.add(std::make_unique<nn::ReLU<T>>());
    in_f = spec_.hidden[i];
  }
  auto head = std::make_unique<nn::Dense<T>>("head", in_f, spec_.head_size());
  head_ = head.get();
  denses_.push_back(head_);
  net_.add(std::move(head));
  nn::init_fan_in_uniform(net_.params(), spec_.seed);
}

template <typename T>
nn::Tensor<T> Regressor<T>::forward(const nn::Tensor<T>& batch) {
  if (batch.c != spec_.channels || batch.h != spec_.height || batch.w != spec_.width) {
    throw ShapeError("input batch " + std::to_string(batch.c) + "x" + std::to_string(batch.h) + "x" +
                     std::to_string(batch.w) + " does not match model input " + std::to_string(spec_.channels) +
                     "x" + std::to_string(spec_.height) + "x" + std::to_string(spec_.width));
  }
  nn::Tensor<T> out = net_.forward(batch);
  out.c = spec_.n_branches;
  out.h = spec_.height;
  out.w = 1;
  return out;
}

template <typename T>
void Regressor<T>::backward(const nn::Tensor<T>& grad_out) {
  nn::Tensor<T> g = grad_out;
  g.c = spec_.head_size();
  g.h = 1;
  g.w = 1;
  net_.backward(g);
}

template <typename T>
ModelState<T>::ModelState(const ModelSpec& spec, nn::AdamConfig config)
    : net(std::make_unique<Regressor<T>>(spec)), adam(net->params(), config) {}

template <typename T>
ModelState<T> build_model(const ModelSpec& spec, nn::AdamConfig config) {
  return ModelState<T>(spec, config);
}

template <typename T>
nn::Tensor<T> image_batch(std::span<const RgbImage* const> images) {
  if (images.empty()) throw ShapeError("empty image batch");
  const RgbImage& first = *images.front();
  nn::Tensor<T> x(static_cast<int>(images.size()), first.channels, first.height, first.width);
  for (std::size_t i = 0; i < images.size(); ++i) {
    const RgbImage& img = *images[i];
    if (img.channels != first.channels || img.width != first.width || img.height != first.height) {
      throw ShapeError("images in a batch must share dimensions");
    }
    for (int c = 0; c < img.channels; ++c)
      for (int y = 0; y < img.height; ++y)
        for (int xx = 0; xx < img.width; ++xx)
          x.at(static_cast<int>(i), c, y, xx) = static_cast<T>(img.at(xx, y, c)) / T(255);
  }
  return x;
}

template <typename T>
void target_batch(std::span<const PositionTarget* const> targets, nn::Tensor<T>& values,
                  std::vector<std::uint8_t>& valid) {
  const PositionTarget& first = *targets.front();
  values = nn::Tensor<T>(static_cast<int>(targets.size()), first.n_branches, first.height, 1);
  valid.assign(values.size(), 0);
  const double scale = first.width > 1 ? 1.0 / (first.width - 1) : 1.0;
  std::size_t k = 0;
  for (const PositionTarget* t : targets) {
    if (t->n_branches != first.n_branches || t->height != first.height) {
      throw ShapeError("targets in a batch must share dimensions");
    }
    for (int b = 0; b < t->n_branches; ++b) {
      for (int r = 0; r < t->height; ++r, ++k) {
        if (t->is_valid(b, r)) {
          values.data[k] = static_cast<T>(t->coord(b, r) * scale);
          valid[k] = 1;
        }
      }
    }
  }
}

template <typename T>
LossResult<T> mse_loss(const nn::Tensor<T>& pred, const nn::Tensor<T>& target, const std::vector<std::uint8_t>& valid) {
  if (!pred.same_shape(target) || valid.size() != pred.size()) throw ShapeError("mse_loss shape mismatch");
  const std::size_t count = static_cast<std::size_t>(std::count(valid.begin(), valid.end(), std::uint8_t{1}));
  if (count == 0) throw EmptyLoss("no valid entries in the loss mask");
  LossResult<T> out;
  out.grad = nn::Tensor<T>(pred.n, pred.c, pred.h, pred.w);
  double sum = 0.0;
  const double inv = 1.0 / static_cast<double>(count);
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (!valid[i]) continue;
    const double d = static_cast<double>(pred.data[i]) - static_cast<double>(target.data[i]);
    sum += d * d;
    out.grad.data[i] = static_cast<T>(2.0 * d * inv);
  }
  out.value = sum * inv;
  return out;
}

namespace {

/// Flipped copies for one minibatch; references stay valid for the batch.
struct BatchData {
  std::vector<RgbImage> flipped_images;
  std::vector<PositionTarget> flipped_targets;
  std::vector<const RgbImage*> images;
  std::vector<const PositionTarget*> targets;
  std::vector<std::string> ids;
};

std::vector<std::vector<float>> snapshot(const std::vector<nn::Param<float>*>& params) {
  std::vector<std::vector<float>> out;
  for (auto* p : params) out.push_back(p->value);
  return out;
}

}  // namespace

double evaluate_loss(Regressor<float>& net, std::span<const Sample> samples, int batch_size) {
  double sum = 0.0;
  std::size_t count = 0;
  for (std::size_t start = 0; start < samples.size(); start += batch_size) {
    const std::size_t end = std::min(samples.size(), start + batch_size);
    std::vector<const RgbImage*> images;
    std::vector<const PositionTarget*> targets;
    for (std::size_t i = start; i < end; ++i) {
      images.push_back(&samples[i].image);
      targets.push_back(&samples[i].target);
    }
    nn::Tensor<float> tv;
    std::vector<std::uint8_t> valid;
    target_batch<float>(targets, tv, valid);
    const nn::Tensor<float> pred = net.forward(image_batch<float>(images));
    for (std::size_t i = 0; i < pred.size(); ++i) {
      if (!valid[i]) continue;
      const double d = static_cast<double>(pred.data[i]) - tv.data[i];
      sum += d * d;
      ++count;
    }
  }
  if (count == 0) throw EmptyLoss("no valid entries in the evaluation set");
  return sum / static_cast<double>(count);
}

TrainResult train(const ModelSpec& spec, std::span<const Sample> train_set, std::span<const Sample> val,
                  const TrainConfig& config, const BatchObserver& observer,
                  const EpochObserver& on_epoch) {
  config.validate();
  if (train_set.empty()) throw TooFewSamples("training set is empty");
  TrainResult result{ModelState<float>(spec, config.adam()), {}, -1};
  Regressor<float>& net = *result.state.net;
  const auto params = net.params();

  Rng rng(config.seed);
  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), 0);
  double best = std::numeric_limits<double>::infinity();
  std::vector<std::vector<float>> best_values = snapshot(params);

  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    rng.shuffle(std::span<std::size_t>(order));
    result.state.adam.set_learning_rate(config.learning_rate_at(epoch));
    double loss_sum = 0.0;
    std::size_t seen = 0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(config.batch_size));
      BatchData batch;
      batch.flipped_images.reserve(end - start);
      batch.flipped_targets.reserve(end - start);
      for (std::size_t i = start; i < end; ++i) {
        const Sample& s = train_set[order[i]];
        batch.ids.push_back(s.id);
        const bool flip = config.hflip && rng.bernoulli(0.5);
        int dx = 0, dy = 0;
        if (config.max_shift > 0) {
          dx = rng.uniform_int(-config.max_shift, config.max_shift);
          dy = rng.uniform_int(-config.max_shift, config.max_shift);
        }
        if (flip || dx != 0 || dy != 0) {
          RgbImage img = flip ? annotation::hflip(s.image) : s.image;
          PositionTarget tgt = flip ? annotation::hflip(s.target) : s.target;
          if (dx != 0 || dy != 0) {
            img = annotation::translate(img, dx, dy);
            tgt = annotation::translate(tgt, dx, dy);
          }
          batch.flipped_images.push_back(std::move(img));
          batch.flipped_targets.push_back(std::move(tgt));
          batch.images.push_back(&batch.flipped_images.back());
          batch.targets.push_back(&batch.flipped_targets.back());
        } else {
          batch.images.push_back(&s.image);
          batch.targets.push_back(&s.target);
        }
      }
      if (observer) observer(epoch, batch.ids);

      nn::Tensor<float> target;
      std::vector<std::uint8_t> valid;
      target_batch<float>(batch.targets, target, valid);
      nn::zero_grads(params);
      const nn::Tensor<float> pred = net.forward(image_batch<float>(batch.images));
      const LossResult<float> loss = mse_loss(pred, target, valid);
      if (!std::isfinite(loss.value)) {
        throw DivergenceDetected("training loss became non-finite in epoch " + std::to_string(epoch), epoch);
      }
      net.backward(loss.grad);
      try {
        result.state.adam.step();
      } catch (const DivergenceDetected& e) {
        throw DivergenceDetected(std::string(e.what()) + " (epoch " + std::to_string(epoch) + ")", epoch);
      }
      loss_sum += loss.value * static_cast<double>(end - start);
      seen += end - start;
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = loss_sum / static_cast<double>(seen);
    rec.val_loss = val.empty() ? std::numeric_limits<double>::quiet_NaN() : evaluate_loss(net, val, config.batch_size);
    result.history.push_back(rec);
    if (on_epoch) on_epoch(rec);
    const double score = val.empty() ? -static_cast<double>(epoch) : rec.val_loss;
    if (!std::isfinite(rec.train_loss)) {
      throw DivergenceDetected("training loss became non-finite in epoch " + std::to_string(epoch), epoch);
    }
    if (score < best) {
      best = score;
      best_values = snapshot(params);
      result.best_epoch = epoch;
    }
  }
  for (std::size_t i = 0; i < params.size(); ++i) params[i]->value = best_values[i];
  return result;
}

template <typename T>
PositionTarget predict_positions(Regressor<T>& net, const RgbImage& image) {
  const ModelSpec& spec = net.spec();
  const RgbImage* ptr = &image;
  const nn::Tensor<T> out = net.forward(image_batch<T>(std::span<const RgbImage* const>(&ptr, 1)));
  PositionTarget t(spec.n_branches, spec.width, spec.height);
  const double hi = spec.width - 1;
  std::size_t k = 0;
  for (int b = 0; b < spec.n_branches; ++b)
    for (int r = 0; r < spec.height; ++r, ++k) t.set(b, r, std::clamp(static_cast<double>(out.data[k]) * hi, 0.0, hi));
  return t;
}

GradCheckReport gradient_check(const ModelSpec& spec, const Sample& sample, double tolerance, double step,
                               std::size_t backbone_samples) {
  Regressor<double> net(spec);
  const auto params = net.params();
  const RgbImage* img = &sample.image;
  const nn::Tensor<double> x = image_batch<double>(std::span<const RgbImage* const>(&img, 1));
  const PositionTarget* tgt = &sample.target;
  nn::Tensor<double> target;
  std::vector<std::uint8_t> valid;
  target_batch<double>(std::span<const PositionTarget* const>(&tgt, 1), target, valid);

  auto loss_at = [&]() { return mse_loss(net.forward(x), target, valid).value; };

  nn::zero_grads(params);
  const auto base = mse_loss(net.forward(x), target, valid);
  net.backward(base.grad);

  GradCheckReport report;
  std::vector<std::pair<std::size_t, std::size_t>> to_check;  // (param index, entry)
  std::vector<std::pair<std::size_t, std::size_t>> backbone;
  for (std::size_t p = 0; p < params.size(); ++p) {
    const bool is_conv = params[p]->name.rfind("conv", 0) == 0;
    double max_abs = 0.0;
    for (std::size_t i = 0; i < params[p]->size(); ++i) {
      max_abs = std::max(max_abs, std::abs(params[p]->grad[i]));
      (is_conv ? backbone : to_check).emplace_back(p, i);
    }
    report.max_abs_grad[params[p]->name] = max_abs;
  }
  if (backbone.size() > backbone_samples) {
    Rng rng(mix_seed(spec.seed, 7));
    rng.shuffle(std::span<std::pair<std::size_t, std::size_t>>(backbone));
    backbone.resize(backbone_samples);
  }
  to_check.insert(to_check.end(), backbone.begin(), backbone.end());

  for (const auto& [p, i] : to_check) {
    double& v = params[p]->value[i];
    const double saved = v;
    v = saved + step;
    const double plus = loss_at();
    v = saved - step;
    const double minus = loss_at();
    v = saved;
    const double numeric = (plus - minus) / (2.0 * step);
    const double analytic = params[p]->grad[i];
    const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-6});
    const double rel = std::abs(analytic - numeric) / denom;
    if (rel > report.max_rel_error) {
      report.max_rel_error = rel;
      report.worst_param = params[p]->name + "[" + std::to_string(i) + "]";
    }
    ++report.checked;
  }
  report.passed = report.max_rel_error < tolerance;
  return report;
}

template class Regressor<float>;
template class Regressor<double>;
template struct ModelState<float>;
template struct ModelState<double>;
template ModelState<float> build_model<float>(const ModelSpec&, nn::AdamConfig);
template ModelState<double> build_model<double>(const ModelSpec&, nn::AdamConfig);
template nn::Tensor<float> image_batch<float>(std::span<const RgbImage* const>);
template nn::Tensor<double> image_batch<double>(std::span<const RgbImage* const>);
template void target_batch<float>(std::span<const PositionTarget* const>, nn::Tensor<float>&, std::vector<std::uint8_t>&);
template void target_batch<double>(std::span<const PositionTarget* const>, nn::Tensor<double>&,
                                   std::vector<std::uint8_t>&);
template LossResult<float> mse_loss<float>(const nn::Tensor<float>&, const nn::Tensor<float>&,
                                           const std::vector<std::uint8_t>&);
template LossResult<double> mse_loss<double>(const nn::Tensor<double>&, const nn::Tensor<double>&,
                                             const std::vector<std::uint8_t>&);
template PositionTarget predict_positions<float>(Regressor<float>&, const RgbImage&);
template PositionTarget predict_positions<double>(Regressor<double>&, const RgbImage&);

}  // namespace occbranch::regressor
