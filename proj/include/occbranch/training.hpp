#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "occbranch/error.hpp"
#include "occbranch/nn.hpp"

namespace occbranch {

/// Minibatch optimisation settings shared by the regressor and the
/// segmentation baseline.
struct TrainConfig {
  int batch_size = 8;
  double learning_rate = 3e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  int epochs = 90;
  bool hflip = true;
  /// Random integer translation in [-max_shift, max_shift] on both axes.
  int max_shift = 0;
  /// Cosine decay from learning_rate to final_lr_fraction * learning_rate
  /// over the epochs; 1 keeps the rate constant.
  double final_lr_fraction = 1.0;
  std::uint64_t seed = 0;

  void validate() const {
    if (batch_size < 1) throw SpecMismatch("batch_size must be >= 1");
    if (!(learning_rate > 0.0)) throw SpecMismatch("learning rate must be positive");
    if (!(beta1 > 0.0 && beta1 < 1.0) || !(beta2 > 0.0 && beta2 < 1.0)) {
      throw SpecMismatch("betas must lie in (0,1)");
    }
    if (epochs < 0) throw SpecMismatch("epochs must be non-negative");
    if (max_shift < 0) throw SpecMismatch("max_shift must be non-negative");
    if (!(final_lr_fraction > 0.0 && final_lr_fraction <= 1.0)) {
      throw SpecMismatch("final_lr_fraction must lie in (0, 1]");
    }
  }
  /// Learning rate used throughout 1-based `epoch`.
  double learning_rate_at(int epoch) const {
    if (epochs <= 1 || final_lr_fraction == 1.0) return learning_rate;
    const double progress = static_cast<double>(epoch - 1) / (epochs - 1);
    const double cosine = 0.5 * (1.0 + std::cos(progress * 3.14159265358979323846));
    return learning_rate * (final_lr_fraction + (1.0 - final_lr_fraction) * cosine);
  }
  nn::AdamConfig adam() const { return {learning_rate, beta1, beta2, epsilon}; }
};

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;  // NaN when no validation set was given
};
using History = std::vector<EpochRecord>;

/// Called once per minibatch with the sample ids it contains.
using BatchObserver = std::function<void(int epoch, const std::vector<std::string>& ids)>;

/// Called after every completed epoch.
using EpochObserver = std::function<void(const EpochRecord& record)>;

}  // namespace occbranch
