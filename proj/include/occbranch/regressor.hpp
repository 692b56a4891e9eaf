#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "occbranch/dataset.hpp"
#include "occbranch/nn.hpp"
#include "occbranch/position_target.hpp"
#include "occbranch/raster.hpp"
#include "occbranch/training.hpp"

namespace occbranch::regressor {

/// Convolutional backbone (3x3, stride 2, ReLU blocks) followed by a flatten
/// and dense layers: `hidden` ReLU layers and a linear head with
/// n_branches * height outputs.
struct ModelSpec {
  int channels = 3;
  int height = 64;
  int width = 64;
  std::vector<int> backbone = {16, 32, 64, 128};
  std::vector<int> hidden = {2048, 512};
  int n_branches = 2;
  bool conv_bias = true;
  std::uint64_t seed = 0;

  int head_size() const { return n_branches * height; }
  /// Flattened feature count entering the first dense layer.
  int feature_size() const;
  /// Throws SpecMismatch on non-positive sizes.
  void validate() const;

  bool operator==(const ModelSpec&) const = default;
};

template <typename T>
class Regressor {
 public:
  explicit Regressor(const ModelSpec& spec);

  const ModelSpec& spec() const { return spec_; }

  /// (N, C, H, W) in [0,1] -> (N, n_branches, height, 1), normalised by
  /// width - 1. Throws ShapeError on a mismatched batch.
  nn::Tensor<T> forward(const nn::Tensor<T>& batch);
  void backward(const nn::Tensor<T>& grad_out);

  std::vector<nn::Param<T>*> params() { return net_.params(); }
  nn::Dense<T>& head() { return *head_; }
  std::vector<nn::Conv2d<T>*>& convs() { return convs_; }
  std::vector<nn::Dense<T>*>& denses() { return denses_; }

 private:
  ModelSpec spec_;
  nn::Sequential<T> net_;
  std::vector<nn::Conv2d<T>*> convs_;
  std::vector<nn::Dense<T>*> denses_;
  nn::Dense<T>* head_ = nullptr;
};

/// Network plus optimiser state.
template <typename T>
struct ModelState {
  std::unique_ptr<Regressor<T>> net;
  nn::Adam<T> adam;

  explicit ModelState(const ModelSpec& spec, nn::AdamConfig config = {});
};

/// Builds a freshly initialised model (fan-in uniform weights, zero biases).
template <typename T>
ModelState<T> build_model(const ModelSpec& spec, nn::AdamConfig config = {});

/// Stacks images into an (N, C, H, W) tensor scaled to [0, 1].
template <typename T>
nn::Tensor<T> image_batch(std::span<const RgbImage* const> images);

/// Targets divided by (width - 1) with the per-entry validity mask, laid out
/// like the regressor output.
template <typename T>
void target_batch(std::span<const PositionTarget* const> targets, nn::Tensor<T>& values,
                  std::vector<std::uint8_t>& valid);

template <typename T>
struct LossResult {
  double value = 0.0;
  nn::Tensor<T> grad;
};

/// Mean squared error over valid entries only. Throws EmptyLoss when nothing
/// is valid.
template <typename T>
LossResult<T> mse_loss(const nn::Tensor<T>& pred, const nn::Tensor<T>& target,
                       const std::vector<std::uint8_t>& valid);

struct TrainResult {
  ModelState<float> state;
  History history;
  int best_epoch = -1;
};

/// Minibatch training with seeded shuffling and optional 50% horizontal
/// flips. Returns the parameters of the epoch with the lowest validation loss
/// (the last epoch when `val` is empty). Throws DivergenceDetected when the
/// loss stops being finite.
TrainResult train(const ModelSpec& spec, std::span<const Sample> train_set, std::span<const Sample> val,
                  const TrainConfig& config, const BatchObserver& observer = {},
                  const EpochObserver& on_epoch = {});

/// Mean validation loss of a model over a sample set.
double evaluate_loss(Regressor<float>& net, std::span<const Sample> samples, int batch_size = 8);

/// Forward pass, denormalised and clamped to [0, width - 1]; every row valid.
template <typename T>
PositionTarget predict_positions(Regressor<T>& net, const RgbImage& image);

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::size_t checked = 0;
  std::string worst_param;
  /// Largest |analytic gradient| per parameter tensor.
  std::map<std::string, double> max_abs_grad;
  bool passed = false;
};

/// Analytic gradient of mse_loss against central finite differences (64-bit).
/// Every dense parameter is checked, plus up to `backbone_samples` randomly
/// chosen backbone entries. Relative error is |a - n| / max(|a|, |n|, 1e-6).
GradCheckReport gradient_check(const ModelSpec& spec, const Sample& sample, double tolerance,
                               double step = 1e-5, std::size_t backbone_samples = 200);

}  // namespace occbranch::regressor
