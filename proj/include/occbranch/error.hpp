#pragma once

#include <stdexcept>
#include <string>

namespace occbranch {

/// Base class for every error raised by the library. `kind()` is a stable
/// identifier used by the CLI when mapping failures to exit codes.
class Error : public std::runtime_error {
 public:
  Error(std::string kind, const std::string& message)
      : std::runtime_error(kind + ": " + message), kind_(std::move(kind)) {}

  const std::string& kind() const noexcept { return kind_; }

 private:
  std::string kind_;
};

#define OCCBRANCH_DEFINE_ERROR(Name)                                  \
  class Name : public Error {                                         \
   public:                                                            \
    explicit Name(const std::string& message) : Error(#Name, message) {} \
  };

// synthdata
OCCBRANCH_DEFINE_ERROR(InvalidCanvas)
OCCBRANCH_DEFINE_ERROR(EmptyReference)
// annotation
OCCBRANCH_DEFINE_ERROR(NonScannableGeometry)
OCCBRANCH_DEFINE_ERROR(InvalidCrop)
OCCBRANCH_DEFINE_ERROR(TooFewSamples)
// networks
OCCBRANCH_DEFINE_ERROR(SpecMismatch)
OCCBRANCH_DEFINE_ERROR(ShapeError)
OCCBRANCH_DEFINE_ERROR(EmptyLoss)
// curvefit
OCCBRANCH_DEFINE_ERROR(NoBranchDetected)
OCCBRANCH_DEFINE_ERROR(InsufficientPoints)
// metrics
OCCBRANCH_DEFINE_ERROR(CoverageGap)
OCCBRANCH_DEFINE_ERROR(DegenerateVariance)
// io / configuration
OCCBRANCH_DEFINE_ERROR(IoError)
OCCBRANCH_DEFINE_ERROR(ConfigError)

#undef OCCBRANCH_DEFINE_ERROR

/// Raised when a loss or gradient stops being finite. Carries the epoch in
/// which it happened (-1 when raised outside a training loop).
class DivergenceDetected : public Error {
 public:
  DivergenceDetected(const std::string& message, int epoch = -1)
      : Error("DivergenceDetected", message), epoch_(epoch) {}

  int epoch() const noexcept { return epoch_; }

 private:
  int epoch_;
};

}  // namespace occbranch
