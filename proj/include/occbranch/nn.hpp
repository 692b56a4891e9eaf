#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "occbranch/error.hpp"

namespace occbranch::nn {

/// Dense NCHW tensor. Fully connected activations use shape (n, features, 1, 1).
template <typename T>
struct Tensor {
  int n = 0, c = 0, h = 0, w = 0;
  std::vector<T> data;

  Tensor() = default;
  Tensor(int n_, int c_, int h_, int w_, T fill = T{})
      : n(n_), c(c_), h(h_), w(w_), data(static_cast<std::size_t>(n_) * c_ * h_ * w_, fill) {}

  std::size_t size() const { return data.size(); }
  std::size_t sample_size() const { return static_cast<std::size_t>(c) * h * w; }
  T* sample(int i) { return data.data() + i * sample_size(); }
  const T* sample(int i) const { return data.data() + i * sample_size(); }

  T& at(int ni, int ci, int y, int x) {
    return data[((static_cast<std::size_t>(ni) * c + ci) * h + y) * w + x];
  }
  const T& at(int ni, int ci, int y, int x) const {
    return data[((static_cast<std::size_t>(ni) * c + ci) * h + y) * w + x];
  }

  bool same_shape(const Tensor& o) const { return n == o.n && c == o.c && h == o.h && w == o.w; }
};

/// A learnable tensor with its gradient accumulator.
template <typename T>
struct Param {
  std::string name;
  std::vector<int> shape;
  std::vector<T> value;
  std::vector<T> grad;

  Param() = default;
  Param(std::string n, std::vector<int> s);
  std::size_t size() const { return value.size(); }
};

template <typename T>
class Layer {
 public:
  virtual ~Layer() = default;
  virtual Tensor<T> forward(const Tensor<T>& x) = 0;
  /// Consumes the gradient w.r.t. the last forward output, accumulates
  /// parameter gradients and returns the gradient w.r.t. the input.
  virtual Tensor<T> backward(const Tensor<T>& grad_out) = 0;
  virtual std::vector<Param<T>*> params() { return {}; }
};

/// Square-kernel 2D convolution, zero padding, computed with im2col + GEMM.
template <typename T>
class Conv2d final : public Layer<T> {
 public:
  Conv2d(std::string name, int in_channels, int out_channels, int kernel, int stride, int padding,
         bool bias);

  Tensor<T> forward(const Tensor<T>& x) override;
  Tensor<T> backward(const Tensor<T>& grad_out) override;
  std::vector<Param<T>*> params() override;

  /// When false, backward skips the input gradient and returns an empty
  /// tensor (used for the first layer of a network).
  void set_input_grad(bool on) { input_grad_ = on; }

  int out_size(int in) const { return (in + 2 * padding_ - kernel_) / stride_ + 1; }
  int in_channels() const { return in_; }
  int out_channels() const { return out_; }
  int kernel() const { return kernel_; }
  bool has_bias() const { return has_bias_; }

  Param<T> weight;  // (out, in * k * k)
  Param<T> bias;    // (out); empty when bias-free

 private:
  void im2col(const T* img, int h, int w, int oh, int ow, T* col) const;
  void col2im(const T* col, int h, int w, int oh, int ow, T* img) const;

  int in_, out_, kernel_, stride_, padding_;
  bool has_bias_;
  bool input_grad_ = true;
  Tensor<T> input_;
  std::vector<T> col_;
};

template <typename T>
class Dense final : public Layer<T> {
 public:
  Dense(std::string name, int in_features, int out_features);

  Tensor<T> forward(const Tensor<T>& x) override;
  Tensor<T> backward(const Tensor<T>& grad_out) override;
  std::vector<Param<T>*> params() override;

  int in_features() const { return in_; }
  int out_features() const { return out_; }

  Param<T> weight;  // (out, in)
  Param<T> bias;    // (out)

 private:
  int in_, out_;
  Tensor<T> input_;
};

template <typename T>
class ReLU final : public Layer<T> {
 public:
  Tensor<T> forward(const Tensor<T>& x) override;
  Tensor<T> backward(const Tensor<T>& grad_out) override;

 private:
  Tensor<T> output_;
};

/// 2x2 max pooling, stride 2. Odd trailing rows/columns are dropped.
template <typename T>
class MaxPool2 final : public Layer<T> {
 public:
  Tensor<T> forward(const Tensor<T>& x) override;
  Tensor<T> backward(const Tensor<T>& grad_out) override;

 private:
  int in_h_ = 0, in_w_ = 0;
  std::vector<std::uint32_t> argmax_;
};

/// Nearest-neighbour 2x upsampling.
template <typename T>
class Upsample2 final : public Layer<T> {
 public:
  Tensor<T> forward(const Tensor<T>& x) override;
  Tensor<T> backward(const Tensor<T>& grad_out) override;
};

template <typename T>
class Sequential {
 public:
  void add(std::unique_ptr<Layer<T>> layer) { layers_.push_back(std::move(layer)); }
  Tensor<T> forward(const Tensor<T>& x);
  Tensor<T> backward(const Tensor<T>& grad_out);
  std::vector<Param<T>*> params();
  std::size_t size() const { return layers_.size(); }
  Layer<T>& operator[](std::size_t i) { return *layers_[i]; }

 private:
  std::vector<std::unique_ptr<Layer<T>>> layers_;
};

/// Fan-in scaled uniform initialisation, U(-sqrt(6/fan_in), sqrt(6/fan_in)).
/// Biases are zeroed.
template <typename T>
void init_fan_in_uniform(std::vector<Param<T>*> params, std::uint64_t seed);

template <typename T>
void zero_grads(const std::vector<Param<T>*>& params);

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// Adaptive-moment optimiser with bias-corrected first and second moments.
template <typename T>
class Adam {
 public:
  Adam() = default;
  Adam(const std::vector<Param<T>*>& params, AdamConfig config);

  /// Applies one update from the gradients currently held in the params.
  /// Throws DivergenceDetected on a non-finite gradient (parameters are left
  /// untouched in that case).
  void step();

  std::int64_t step_count() const { return step_; }
  const AdamConfig& config() const { return config_; }
  void set_learning_rate(double lr) { config_.learning_rate = lr; }

  std::vector<std::vector<T>>& first_moments() { return m_; }
  std::vector<std::vector<T>>& second_moments() { return v_; }
  const std::vector<std::vector<T>>& first_moments() const { return m_; }
  const std::vector<std::vector<T>>& second_moments() const { return v_; }
  void set_step_count(std::int64_t s) { step_ = s; }

 private:
  std::vector<Param<T>*> params_;
  AdamConfig config_;
  std::vector<std::vector<T>> m_, v_;
  std::int64_t step_ = 0;
};

/// Copies parameter values (not gradients) between two parameter lists with
/// identical shapes.
template <typename T>
void copy_values(const std::vector<Param<T>*>& from, const std::vector<Param<T>*>& to);

template <typename T>
std::size_t parameter_count(const std::vector<Param<T>*>& params) {
  std::size_t n = 0;
  for (auto* p : params) n += p->size();
  return n;
}

}  // namespace occbranch::nn
