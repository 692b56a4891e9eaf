#include "occbranch/nn.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <limits>

#include "occbranch/rng.hpp"

namespace occbranch::nn {

namespace {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MapMat = Eigen::Map<RowMat<T>>;
template <typename T>
using CMapMat = Eigen::Map<const RowMat<T>>;
template <typename T>
using MapVec = Eigen::Map<Eigen::Matrix<T, Eigen::Dynamic, 1>>;

std::size_t product(const std::vector<int>& shape) {
  std::size_t n = 1;
  for (int d : shape) n *= static_cast<std::size_t>(d);
  return n;
}

}  // namespace

template <typename T>
Param<T>::Param(std::string n, std::vector<int> s)
    : name(std::move(n)), shape(std::move(s)), value(product(shape), T{}), grad(product(shape), T{}) {}

// ---------------------------------------------------------------------------
// Conv2d

template <typename T>
Conv2d<T>::Conv2d(std::string name, int in_channels, int out_channels, int kernel, int stride, int padding,
                  bool bias)
    : weight(name + ".weight", {out_channels, in_channels * kernel * kernel}),
      bias(bias ? Param<T>(name + ".bias", {out_channels}) : Param<T>()),
      in_(in_channels),
      out_(out_channels),
      kernel_(kernel),
      stride_(stride),
      padding_(padding),
      has_bias_(bias) {}

template <typename T>
void Conv2d<T>::im2col(const T* img, int h, int w, int oh, int ow, T* col) const {
  const int k = kernel_;
  for (int c = 0; c < in_; ++c) {
    const T* plane = img + static_cast<std::size_t>(c) * h * w;
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        T* row = col + static_cast<std::size_t>((c * k + ky) * k + kx) * oh * ow;
        for (int oy = 0; oy < oh; ++oy) {
          const int iy = oy * stride_ - padding_ + ky;
          T* dst = row + static_cast<std::size_t>(oy) * ow;
          if (iy < 0 || iy >= h) {
            std::fill(dst, dst + ow, T{});
            continue;
          }
          const T* src = plane + static_cast<std::size_t>(iy) * w;
          for (int ox = 0; ox < ow; ++ox) {
            const int ix = ox * stride_ - padding_ + kx;
            dst[ox] = (ix >= 0 && ix < w) ? src[ix] : T{};
          }
        }
      }
    }
  }
}

template <typename T>
void Conv2d<T>::col2im(const T* col, int h, int w, int oh, int ow, T* img) const {
  const int k = kernel_;
  for (int c = 0; c < in_; ++c) {
    T* plane = img + static_cast<std::size_t>(c) * h * w;
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        const T* row = col + static_cast<std::size_t>((c * k + ky) * k + kx) * oh * ow;
        for (int oy = 0; oy < oh; ++oy) {
          const int iy = oy * stride_ - padding_ + ky;
          if (iy < 0 || iy >= h) continue;
          const T* src = row + static_cast<std::size_t>(oy) * ow;
          T* dst = plane + static_cast<std::size_t>(iy) * w;
          for (int ox = 0; ox < ow; ++ox) {
            const int ix = ox * stride_ - padding_ + kx;
            if (ix >= 0 && ix < w) dst[ix] += src[ox];
          }
        }
      }
    }
  }
}

template <typename T>
Tensor<T> Conv2d<T>::forward(const Tensor<T>& x) {
  if (x.c != in_) {
    throw ShapeError(weight.name + ": expected " + std::to_string(in_) + " input channels, got " +
                     std::to_string(x.c));
  }
  const int oh = out_size(x.h);
  const int ow = out_size(x.w);
  const int rows = in_ * kernel_ * kernel_;
  input_ = x;
  Tensor<T> y(x.n, out_, oh, ow);
  col_.resize(static_cast<std::size_t>(rows) * oh * ow);
  CMapMat<T> wmat(weight.value.data(), out_, rows);
  for (int i = 0; i < x.n; ++i) {
    im2col(x.sample(i), x.h, x.w, oh, ow, col_.data());
    MapMat<T> out(y.sample(i), out_, oh * ow);
    out.noalias() = wmat * CMapMat<T>(col_.data(), rows, oh * ow);
    if (has_bias_) out.colwise() += MapVec<T>(bias.value.data(), out_);
  }
  return y;
}

template <typename T>
Tensor<T> Conv2d<T>::backward(const Tensor<T>& grad_out) {
  const Tensor<T>& x = input_;
  const int oh = grad_out.h;
  const int ow = grad_out.w;
  const int rows = in_ * kernel_ * kernel_;
  col_.resize(static_cast<std::size_t>(rows) * oh * ow);
  std::vector<T> dcol(input_grad_ ? col_.size() : 0);
  Tensor<T> dx = input_grad_ ? Tensor<T>(x.n, x.c, x.h, x.w) : Tensor<T>();
  CMapMat<T> wmat(weight.value.data(), out_, rows);
  MapMat<T> dw(weight.grad.data(), out_, rows);
  for (int i = 0; i < x.n; ++i) {
    im2col(x.sample(i), x.h, x.w, oh, ow, col_.data());
    CMapMat<T> g(grad_out.sample(i), out_, oh * ow);
    CMapMat<T> col(col_.data(), rows, oh * ow);
    dw.noalias() += g * col.transpose();
    if (has_bias_) {
      // Plain loops: Eigen's vectorised reductions depend on buffer alignment.
      const T* gp = grad_out.sample(i);
      for (int o = 0; o < out_; ++o) {
        T acc = 0;
        for (int k = 0; k < oh * ow; ++k) acc += gp[static_cast<std::size_t>(o) * oh * ow + k];
        bias.grad[o] += acc;
      }
    }
    if (input_grad_) {
      MapMat<T>(dcol.data(), rows, oh * ow).noalias() = wmat.transpose() * g;
      col2im(dcol.data(), x.h, x.w, oh, ow, dx.sample(i));
    }
  }
  return dx;
}

template <typename T>
std::vector<Param<T>*> Conv2d<T>::params() {
  if (has_bias_) return {&weight, &bias};
  return {&weight};
}

// ---------------------------------------------------------------------------
// Dense

template <typename T>
Dense<T>::Dense(std::string name, int in_features, int out_features)
    : weight(name + ".weight", {out_features, in_features}),
      bias(name + ".bias", {out_features}),
      in_(in_features),
      out_(out_features) {}

template <typename T>
Tensor<T> Dense<T>::forward(const Tensor<T>& x) {
  if (static_cast<int>(x.sample_size()) != in_) {
    throw ShapeError(weight.name + ": expected " + std::to_string(in_) + " features, got " +
                     std::to_string(x.sample_size()));
  }
  input_ = x;
  Tensor<T> y(x.n, out_, 1, 1);
  MapMat<T> out(y.data.data(), x.n, out_);
  out.noalias() = CMapMat<T>(x.data.data(), x.n, in_) * CMapMat<T>(weight.value.data(), out_, in_).transpose();
  out.rowwise() += MapVec<T>(bias.value.data(), out_).transpose();
  return y;
}

template <typename T>
Tensor<T> Dense<T>::backward(const Tensor<T>& grad_out) {
  const int n = grad_out.n;
  CMapMat<T> g(grad_out.data.data(), n, out_);
  CMapMat<T> x(input_.data.data(), n, in_);
  MapMat<T>(weight.grad.data(), out_, in_).noalias() += g.transpose() * x;
  for (int i = 0; i < n; ++i)
    for (int o = 0; o < out_; ++o) bias.grad[o] += grad_out.data[static_cast<std::size_t>(i) * out_ + o];
  Tensor<T> dx(input_.n, input_.c, input_.h, input_.w);
  MapMat<T>(dx.data.data(), n, in_).noalias() = g * CMapMat<T>(weight.value.data(), out_, in_);
  return dx;
}

template <typename T>
std::vector<Param<T>*> Dense<T>::params() {
  return {&weight, &bias};
}

// ---------------------------------------------------------------------------
// Elementwise and resampling layers

template <typename T>
Tensor<T> ReLU<T>::forward(const Tensor<T>& x) {
  output_ = x;
  for (auto& v : output_.data) v = v > T{} ? v : T{};
  return output_;
}

template <typename T>
Tensor<T> ReLU<T>::backward(const Tensor<T>& grad_out) {
  Tensor<T> dx = grad_out;
  for (std::size_t i = 0; i < dx.data.size(); ++i)
    if (!(output_.data[i] > T{})) dx.data[i] = T{};
  return dx;
}

template <typename T>
Tensor<T> MaxPool2<T>::forward(const Tensor<T>& x) {
  in_h_ = x.h;
  in_w_ = x.w;
  const int oh = x.h / 2;
  const int ow = x.w / 2;
  Tensor<T> y(x.n, x.c, oh, ow);
  argmax_.resize(y.size());
  std::size_t o = 0;
  for (int n = 0; n < x.n; ++n) {
    for (int c = 0; c < x.c; ++c) {
      for (int oy = 0; oy < oh; ++oy) {
        for (int ox = 0; ox < ow; ++ox, ++o) {
          std::uint32_t best = 0;
          T best_v = -std::numeric_limits<T>::infinity();
          for (int dy = 0; dy < 2; ++dy) {
            for (int dx = 0; dx < 2; ++dx) {
              const std::uint32_t idx = static_cast<std::uint32_t>((2 * oy + dy) * x.w + 2 * ox + dx);
              const T v = x.at(n, c, 2 * oy + dy, 2 * ox + dx);
              if (v > best_v) {
                best_v = v;
                best = idx;
              }
            }
          }
          y.data[o] = best_v;
          argmax_[o] = best;
        }
      }
    }
  }
  return y;
}

template <typename T>
Tensor<T> MaxPool2<T>::backward(const Tensor<T>& grad_out) {
  Tensor<T> dx(grad_out.n, grad_out.c, in_h_, in_w_);
  const std::size_t plane_out = static_cast<std::size_t>(grad_out.h) * grad_out.w;
  const std::size_t plane_in = static_cast<std::size_t>(in_h_) * in_w_;
  for (std::size_t o = 0; o < grad_out.size(); ++o) {
    const std::size_t plane = o / plane_out;
    dx.data[plane * plane_in + argmax_[o]] += grad_out.data[o];
  }
  return dx;
}

template <typename T>
Tensor<T> Upsample2<T>::forward(const Tensor<T>& x) {
  Tensor<T> y(x.n, x.c, x.h * 2, x.w * 2);
  for (int n = 0; n < x.n; ++n)
    for (int c = 0; c < x.c; ++c)
      for (int yy = 0; yy < y.h; ++yy)
        for (int xx = 0; xx < y.w; ++xx) y.at(n, c, yy, xx) = x.at(n, c, yy / 2, xx / 2);
  return y;
}

template <typename T>
Tensor<T> Upsample2<T>::backward(const Tensor<T>& grad_out) {
  Tensor<T> dx(grad_out.n, grad_out.c, grad_out.h / 2, grad_out.w / 2);
  for (int n = 0; n < grad_out.n; ++n)
    for (int c = 0; c < grad_out.c; ++c)
      for (int yy = 0; yy < grad_out.h; ++yy)
        for (int xx = 0; xx < grad_out.w; ++xx) dx.at(n, c, yy / 2, xx / 2) += grad_out.at(n, c, yy, xx);
  return dx;
}

// ---------------------------------------------------------------------------
// Sequential

template <typename T>
Tensor<T> Sequential<T>::forward(const Tensor<T>& x) {
  Tensor<T> cur = x;
  for (auto& layer : layers_) cur = layer->forward(cur);
  return cur;
}

template <typename T>
Tensor<T> Sequential<T>::backward(const Tensor<T>& grad_out) {
  Tensor<T> cur = grad_out;
  for (auto it = layers_.rbegin(); it != layers_.rend(); ++it) cur = (*it)->backward(cur);
  return cur;
}

template <typename T>
std::vector<Param<T>*> Sequential<T>::params() {
  std::vector<Param<T>*> out;
  for (auto& layer : layers_)
    for (auto* p : layer->params()) out.push_back(p);
  return out;
}

// ---------------------------------------------------------------------------
// Initialisation and optimisation

template <typename T>
void init_fan_in_uniform(std::vector<Param<T>*> params, std::uint64_t seed) {
  Rng rng(seed);
  for (auto* p : params) {
    if (p->shape.size() < 2) {
      std::fill(p->value.begin(), p->value.end(), T{});
      continue;
    }
    const double fan_in = static_cast<double>(p->size() / static_cast<std::size_t>(p->shape[0]));
    const double bound = std::sqrt(6.0 / fan_in);
    for (auto& v : p->value) v = static_cast<T>(rng.uniform(-bound, bound));
  }
}

template <typename T>
void zero_grads(const std::vector<Param<T>*>& params) {
  for (auto* p : params) std::fill(p->grad.begin(), p->grad.end(), T{});
}

template <typename T>
Adam<T>::Adam(const std::vector<Param<T>*>& params, AdamConfig config) : params_(params), config_(config) {
  for (auto* p : params_) {
    m_.emplace_back(p->size(), T{});
    v_.emplace_back(p->size(), T{});
  }
}

template <typename T>
void Adam<T>::step() {
  for (auto* p : params_) {
    for (T g : p->grad) {
      if (!std::isfinite(static_cast<double>(g))) throw DivergenceDetected("non-finite gradient in " + p->name);
    }
  }
  ++step_;
  const double b1 = config_.beta1;
  const double b2 = config_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(step_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(step_));
  const double lr = config_.learning_rate;
  const double eps = config_.epsilon;
  for (std::size_t k = 0; k < params_.size(); ++k) {
    auto& value = params_[k]->value;
    const auto& grad = params_[k]->grad;
    auto& m = m_[k];
    auto& v = v_[k];
    for (std::size_t i = 0; i < value.size(); ++i) {
      const double g = grad[i];
      const double mi = b1 * m[i] + (1.0 - b1) * g;
      const double vi = b2 * v[i] + (1.0 - b2) * g * g;
      m[i] = static_cast<T>(mi);
      v[i] = static_cast<T>(vi);
      value[i] = static_cast<T>(value[i] - lr * (mi / c1) / (std::sqrt(vi / c2) + eps));
    }
  }
}

template <typename T>
void copy_values(const std::vector<Param<T>*>& from, const std::vector<Param<T>*>& to) {
  if (from.size() != to.size()) throw SpecMismatch("parameter lists differ in length");
  for (std::size_t i = 0; i < from.size(); ++i) {
    if (from[i]->shape != to[i]->shape) throw SpecMismatch("shape mismatch for " + from[i]->name);
    to[i]->value = from[i]->value;
  }
}

#define OCCBRANCH_INSTANTIATE(T)                                                       \
  template struct Param<T>;                                                            \
  template class Conv2d<T>;                                                            \
  template class Dense<T>;                                                             \
  template class ReLU<T>;                                                              \
  template class MaxPool2<T>;                                                          \
  template class Upsample2<T>;                                                         \
  template class Sequential<T>;                                                        \
  template class Adam<T>;                                                              \
  template void init_fan_in_uniform<T>(std::vector<Param<T>*>, std::uint64_t);         \
  template void zero_grads<T>(const std::vector<Param<T>*>&);                          \
  template void copy_values<T>(const std::vector<Param<T>*>&, const std::vector<Param<T>*>&);

OCCBRANCH_INSTANTIATE(float)
OCCBRANCH_INSTANTIATE(double)

#undef OCCBRANCH_INSTANTIATE

}  // namespace occbranch::nn
