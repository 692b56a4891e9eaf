#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "occbranch/dataset.hpp"
#include "occbranch/nn.hpp"
#include "occbranch/raster.hpp"
#include "occbranch/training.hpp"

namespace occbranch::seg {

enum class Variant { visible, whole };

std::string to_string(Variant v);
Variant parse_variant(const std::string& s);

/// Encoder-decoder with skip connections. Each encoder stage is a 3x3 conv +
/// ReLU followed by 2x2 max pooling; a 3x3 bottleneck conv sits at the
/// bottom; each decoder stage upsamples 2x, concatenates the matching encoder
/// features and applies a 3x3 conv + ReLU. A 1x1 conv produces one logit per
/// pixel, squashed with a sigmoid.
struct SegSpec {
  int channels = 3;
  int height = 64;
  int width = 64;
  std::vector<int> widths = {8, 16, 32};  // one entry per down-stage
  int bottleneck = 64;
  Variant variant = Variant::whole;
  std::uint64_t seed = 0;

  int depth() const { return static_cast<int>(widths.size()); }
  /// Throws SpecMismatch for non-positive sizes or input dimensions that do
  /// not divide by 2^depth.
  void validate() const;
  /// Closed-form number of learnable scalars.
  std::size_t parameter_count() const;

  bool operator==(const SegSpec&) const = default;
};

template <typename T>
class UNet {
 public:
  explicit UNet(const SegSpec& spec);

  const SegSpec& spec() const { return spec_; }

  /// (N, C, H, W) -> logits (N, 1, H, W).
  nn::Tensor<T> forward(const nn::Tensor<T>& x);
  /// Gradient w.r.t. the logits of the last forward call.
  void backward(const nn::Tensor<T>& grad_logits);

  std::vector<nn::Param<T>*> params();

 private:
  SegSpec spec_;
  std::vector<std::unique_ptr<nn::Conv2d<T>>> enc_;
  std::vector<nn::ReLU<T>> enc_relu_;
  std::vector<nn::MaxPool2<T>> pool_;
  std::unique_ptr<nn::Conv2d<T>> mid_;
  nn::ReLU<T> mid_relu_;
  std::vector<nn::Upsample2<T>> up_;
  std::vector<std::unique_ptr<nn::Conv2d<T>>> dec_;  // dec_[i] serves stage i
  std::vector<nn::ReLU<T>> dec_relu_;
  std::unique_ptr<nn::Conv2d<T>> out_;
  std::vector<int> up_channels_;  // channels arriving from below at stage i
};

template <typename T>
struct SegModelState {
  std::unique_ptr<UNet<T>> net;
  nn::Adam<T> adam;

  explicit SegModelState(const SegSpec& spec, nn::AdamConfig config = {});
};

template <typename T>
SegModelState<T> build_segmodel(const SegSpec& spec, nn::AdamConfig config = {});

struct DiceResult {
  double value = 0.0;
  std::vector<double> grad;  // d loss / d probability
};

/// bg/fg pixel ratio of a mask (1 when the mask has no foreground).
double default_foreground_weight(std::span<const std::uint8_t> mask);

/// 1 - (2 sum w p g + s) / (sum w p + sum w g + s) with smoothing s = 1, and
/// w = foreground_weight on foreground pixels, 1 elsewhere. When the weight is
/// not given it defaults to default_foreground_weight(mask).
DiceResult weighted_dice_loss(std::span<const double> probabilities, std::span<const std::uint8_t> mask,
                              std::optional<double> foreground_weight = std::nullopt);

/// Central-difference check of weighted_dice_loss's gradient. Returns the max
/// relative error |a - n| / max(|a|, |n|, 1e-6).
double dice_gradient_check(std::span<const double> probabilities, std::span<const std::uint8_t> mask,
                           double step = 1e-5);

struct SegTrainResult {
  SegModelState<float> state;
  History history;
  int best_epoch = -1;
};

/// Target mask of a sample for a given variant.
const MaskImage& variant_mask(const Sample& sample, Variant variant);

/// Same loop as the regressor (seeded shuffle, 50% flips, best validation
/// epoch) with the weighted dice loss against the variant's mask.
SegTrainResult train_seg(const SegSpec& spec, std::span<const Sample> train_set, std::span<const Sample> val,
                         const TrainConfig& config, const BatchObserver& observer = {},
                  const EpochObserver& on_epoch = {});

double evaluate_dice(UNet<float>& net, std::span<const Sample> samples, int batch_size = 8);

/// Per-pixel foreground probability, row-major.
template <typename T>
Raster<float> predict_probabilities(UNet<T>& net, const RgbImage& image);

/// probabilities > threshold.
MaskImage threshold_mask(const Raster<float>& probabilities, double threshold = 0.5);

template <typename T>
MaskImage segment(UNet<T>& net, const RgbImage& image, double threshold = 0.5);

}  // namespace occbranch::seg
