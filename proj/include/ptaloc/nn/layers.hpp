#pragma once

#include <cmath>
#include <cstddef>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "ptaloc/errors.hpp"
#include "ptaloc/random.hpp"

namespace ptaloc::nn {

/// Batch of feature maps, laid out [batch][channel][position]. Dense layers
/// see channel * length features per sample.
template <typename T>
struct Tensor {
  int batch = 0;
  int channels = 0;
  int length = 1;
  std::vector<T> data;

  Tensor() = default;
  Tensor(int b, int c, int l) : batch(b), channels(c), length(l), data(static_cast<std::size_t>(b) * c * l, T(0)) {}

  int features() const { return channels * length; }
  T* sample(int b) { return data.data() + static_cast<std::size_t>(b) * features(); }
  const T* sample(int b) const { return data.data() + static_cast<std::size_t>(b) * features(); }
  T& at(int b, int c, int l) { return data[(static_cast<std::size_t>(b) * channels + c) * length + l]; }
  T at(int b, int c, int l) const { return data[(static_cast<std::size_t>(b) * channels + c) * length + l]; }

  // features x batch, column-major: one column per sample
  auto matrix() { return Eigen::Map<Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic>>(data.data(), features(), batch); }
  auto matrix() const {
    return Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic>>(data.data(), features(), batch);
  }
};

template <typename T>
struct Param {
  std::vector<T> value;
  std::vector<T> grad;
  bool decay = true;  // subject to weight decay

  explicit Param(std::size_t n = 0, bool wd = true) : value(n, T(0)), grad(n, T(0)), decay(wd) {}
  std::size_t size() const { return value.size(); }
};

template <typename T>
class Layer {
 public:
  virtual ~Layer() = default;
  virtual Tensor<T> forward(const Tensor<T>& x, bool training) = 0;
  /// Accumulates parameter gradients and returns the input gradient of the
  /// most recent forward call.
  virtual Tensor<T> backward(const Tensor<T>& grad_out) = 0;
  virtual std::vector<Param<T>*> params() { return {}; }
  /// Non-trainable state saved with the parameters (batch-norm running stats).
  virtual std::vector<std::vector<T>*> buffers() { return {}; }
  virtual void init(Rng&) {}
  virtual std::string name() const = 0;
};

namespace detail {

template <typename T>
void uniform_fill(std::vector<T>& v, T bound, Rng& rng) {
  std::uniform_real_distribution<double> u(-static_cast<double>(bound), static_cast<double>(bound));
  for (auto& x : v) x = static_cast<T>(u(rng));
}

}  // namespace detail

template <typename T>
class Dense final : public Layer<T> {
 public:
  Dense(int in, int out) : in_(in), out_(out), w_(static_cast<std::size_t>(in) * out), b_(out, false) {}

  Tensor<T> forward(const Tensor<T>& x, bool) override {
    if (x.features() != in_) throw Error(Errc::shape_mismatch, "dense layer input width mismatch");
    x_ = x;
    Tensor<T> y(x.batch, out_, 1);
    y.matrix().noalias() = weight() * x.matrix();
    y.matrix().colwise() += bias();
    return y;
  }

  Tensor<T> backward(const Tensor<T>& g) override {
    Eigen::Map<Matrix> gw(w_.grad.data(), out_, in_);
    Eigen::Map<Vector> gb(b_.grad.data(), out_);
    gw.noalias() += g.matrix() * x_.matrix().transpose();
    gb += g.matrix().rowwise().sum();
    Tensor<T> gx(x_.batch, x_.channels, x_.length);
    gx.matrix().noalias() = weight().transpose() * g.matrix();
    return gx;
  }

  std::vector<Param<T>*> params() override { return {&w_, &b_}; }

  void init(Rng& rng) override {
    // He-uniform for rectifier stacks
    detail::uniform_fill(w_.value, static_cast<T>(std::sqrt(6.0 / in_)), rng);
    std::fill(b_.value.begin(), b_.value.end(), T(0));
  }

  std::string name() const override { return "Dense(" + std::to_string(in_) + "," + std::to_string(out_) + ")"; }

 private:
  using Matrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic>;
  using Vector = Eigen::Matrix<T, Eigen::Dynamic, 1>;
  Eigen::Map<Matrix> weight() { return {w_.value.data(), out_, in_}; }
  Eigen::Map<Vector> bias() { return {b_.value.data(), out_}; }

  int in_, out_;
  Param<T> w_, b_;
  Tensor<T> x_;
};

/// Leaky rectifier; slope 0 gives the plain ReLU.
template <typename T>
class LeakyReLU final : public Layer<T> {
 public:
  explicit LeakyReLU(T slope = T(0)) : slope_(slope) {}

  Tensor<T> forward(const Tensor<T>& x, bool) override {
    x_ = x;
    Tensor<T> y = x;
    for (auto& v : y.data) v = v > T(0) ? v : slope_ * v;
    return y;
  }

  Tensor<T> backward(const Tensor<T>& g) override {
    Tensor<T> gx = g;
    for (std::size_t i = 0; i < gx.data.size(); ++i) gx.data[i] *= x_.data[i] > T(0) ? T(1) : slope_;
    return gx;
  }

  std::string name() const override { return slope_ == T(0) ? "ReLU" : "LeakyReLU"; }

 private:
  T slope_;
  Tensor<T> x_;
};

template <typename T>
class Tanh final : public Layer<T> {
 public:
  Tensor<T> forward(const Tensor<T>& x, bool) override {
    y_ = x;
    for (auto& v : y_.data) v = std::tanh(v);
    return y_;
  }

  Tensor<T> backward(const Tensor<T>& g) override {
    Tensor<T> gx = g;
    for (std::size_t i = 0; i < gx.data.size(); ++i) gx.data[i] *= T(1) - y_.data[i] * y_.data[i];
    return gx;
  }

  std::string name() const override { return "Tanh"; }

 private:
  Tensor<T> y_;
};

/// 1-D convolution with zero padding, computed as im2col followed by one GEMM
/// per sample.
template <typename T>
class Conv1D final : public Layer<T> {
 public:
  Conv1D(int in_ch, int out_ch, int kernel, int stride, int padding)
      : cin_(in_ch), cout_(out_ch), k_(kernel), s_(stride), pad_(padding),
        w_(static_cast<std::size_t>(out_ch) * in_ch * kernel), b_(out_ch, false) {
    if (in_ch <= 0 || out_ch <= 0 || kernel <= 0 || stride <= 0 || padding < 0) {
      throw Error(Errc::shape_mismatch, "invalid conv1d dimensions");
    }
  }

  int output_length(int len) const {
    const int out = (len + 2 * pad_ - k_) / s_ + 1;
    if (len + 2 * pad_ < k_ || out <= 0) throw Error(Errc::shape_mismatch, "conv1d input shorter than kernel");
    return out;
  }

  Tensor<T> forward(const Tensor<T>& x, bool) override {
    if (x.channels != cin_) throw Error(Errc::shape_mismatch, "conv1d channel mismatch");
    const int lout = output_length(x.length);
    in_len_ = x.length;
    batch_ = x.batch;
    cols_.resize(x.batch);
    Tensor<T> y(x.batch, cout_, lout);
    for (int b = 0; b < x.batch; ++b) {
      Matrix& col = cols_[b];
      col.setZero(cin_ * k_, lout);
      for (int c = 0; c < cin_; ++c) {
        const T* src = x.sample(b) + static_cast<std::size_t>(c) * x.length;
        for (int j = 0; j < k_; ++j) {
          T* dst = col.data() + (c * k_ + j);
          for (int o = 0; o < lout; ++o) {
            const int pos = o * s_ + j - pad_;
            if (pos >= 0 && pos < x.length) dst[static_cast<std::size_t>(o) * cin_ * k_] = src[pos];
          }
        }
      }
      // out (lout x cout) = col^T W, which is channel-major storage of cout x lout
      Eigen::Map<Matrix> out(y.sample(b), lout, cout_);
      out.noalias() = col.transpose() * weight();
      out.rowwise() += bias().transpose();
    }
    return y;
  }

  Tensor<T> backward(const Tensor<T>& g) override {
    const int lout = g.length;
    Eigen::Map<Matrix> gw(w_.grad.data(), cin_ * k_, cout_);
    Eigen::Map<Vector> gb(b_.grad.data(), cout_);
    Tensor<T> gx(batch_, cin_, in_len_);
    Matrix gcol(cin_ * k_, lout);
    for (int b = 0; b < batch_; ++b) {
      Eigen::Map<const Matrix> go(g.sample(b), lout, cout_);
      gw.noalias() += cols_[b] * go;
      gb += go.colwise().sum().transpose();
      gcol.noalias() = weight() * go.transpose();
      for (int c = 0; c < cin_; ++c) {
        T* dst = gx.sample(b) + static_cast<std::size_t>(c) * in_len_;
        for (int j = 0; j < k_; ++j) {
          const T* src = gcol.data() + (c * k_ + j);
          for (int o = 0; o < lout; ++o) {
            const int pos = o * s_ + j - pad_;
            if (pos >= 0 && pos < in_len_) dst[pos] += src[static_cast<std::size_t>(o) * cin_ * k_];
          }
        }
      }
    }
    return gx;
  }

  std::vector<Param<T>*> params() override { return {&w_, &b_}; }

  void init(Rng& rng) override {
    detail::uniform_fill(w_.value, static_cast<T>(std::sqrt(6.0 / (cin_ * k_))), rng);
    std::fill(b_.value.begin(), b_.value.end(), T(0));
  }

  std::string name() const override {
    return "Conv1D(" + std::to_string(cin_) + "," + std::to_string(cout_) + ",k" + std::to_string(k_) + ",s" +
           std::to_string(s_) + ")";
  }

 private:
  using Matrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic>;
  using Vector = Eigen::Matrix<T, Eigen::Dynamic, 1>;
  // cin*k x cout, so column o holds output channel o's taps in [c][j] order
  Eigen::Map<Matrix> weight() { return {w_.value.data(), cin_ * k_, cout_}; }
  Eigen::Map<Vector> bias() { return {b_.value.data(), cout_}; }

  int cin_, cout_, k_, s_, pad_;
  Param<T> w_, b_;
  std::vector<Matrix> cols_;
  int in_len_ = 0, batch_ = 0;
};

/// Per-channel batch normalization over (batch, position). Training mode
/// uses batch statistics and updates running estimates with `momentum`.
template <typename T>
class BatchNorm1d final : public Layer<T> {
 public:
  explicit BatchNorm1d(int channels, T eps = T(1e-5), T momentum = T(0.1))
      : c_(channels), eps_(eps), momentum_(momentum), gamma_(channels, false), beta_(channels, false),
        running_mean_(channels, T(0)), running_var_(channels, T(1)) {
    std::fill(gamma_.value.begin(), gamma_.value.end(), T(1));
  }

  Tensor<T> forward(const Tensor<T>& x, bool training) override {
    if (x.channels != c_) throw Error(Errc::shape_mismatch, "batch-norm channel mismatch");
    xhat_ = Tensor<T>(x.batch, x.channels, x.length);
    inv_std_.assign(c_, T(0));
    Tensor<T> y(x.batch, x.channels, x.length);
    const double n = static_cast<double>(x.batch) * x.length;
    for (int c = 0; c < c_; ++c) {
      T mean, var;
      if (training) {
        double s = 0.0, s2 = 0.0;
        for (int b = 0; b < x.batch; ++b) {
          for (int l = 0; l < x.length; ++l) s += x.at(b, c, l);
        }
        const double m = s / n;
        for (int b = 0; b < x.batch; ++b) {
          for (int l = 0; l < x.length; ++l) s2 += (x.at(b, c, l) - m) * (x.at(b, c, l) - m);
        }
        mean = static_cast<T>(m);
        var = static_cast<T>(s2 / n);
        const T unbiased = n > 1 ? static_cast<T>(s2 / (n - 1)) : var;
        running_mean_[c] = (T(1) - momentum_) * running_mean_[c] + momentum_ * mean;
        running_var_[c] = (T(1) - momentum_) * running_var_[c] + momentum_ * unbiased;
      } else {
        mean = running_mean_[c];
        var = running_var_[c];
      }
      const T inv = T(1) / std::sqrt(var + eps_);
      inv_std_[c] = inv;
      for (int b = 0; b < x.batch; ++b) {
        for (int l = 0; l < x.length; ++l) {
          const T h = (x.at(b, c, l) - mean) * inv;
          xhat_.at(b, c, l) = h;
          y.at(b, c, l) = gamma_.value[c] * h + beta_.value[c];
        }
      }
    }
    training_ = training;
    return y;
  }

  Tensor<T> backward(const Tensor<T>& g) override {
    Tensor<T> gx(g.batch, g.channels, g.length);
    const T n = static_cast<T>(g.batch) * static_cast<T>(g.length);
    for (int c = 0; c < c_; ++c) {
      T sum_g = 0, sum_gh = 0;
      for (int b = 0; b < g.batch; ++b) {
        for (int l = 0; l < g.length; ++l) {
          sum_g += g.at(b, c, l);
          sum_gh += g.at(b, c, l) * xhat_.at(b, c, l);
        }
      }
      gamma_.grad[c] += sum_gh;
      beta_.grad[c] += sum_g;
      const T k = gamma_.value[c] * inv_std_[c];
      for (int b = 0; b < g.batch; ++b) {
        for (int l = 0; l < g.length; ++l) {
          gx.at(b, c, l) = training_ ? k * (g.at(b, c, l) - sum_g / n - xhat_.at(b, c, l) * sum_gh / n)
                                     : k * g.at(b, c, l);
        }
      }
    }
    return gx;
  }

  std::vector<Param<T>*> params() override { return {&gamma_, &beta_}; }
  std::vector<std::vector<T>*> buffers() override { return {&running_mean_, &running_var_}; }
  std::string name() const override { return "BatchNorm1d(" + std::to_string(c_) + ")"; }

 private:
  int c_;
  T eps_, momentum_;
  Param<T> gamma_, beta_;
  std::vector<T> running_mean_, running_var_;
  Tensor<T> xhat_;
  std::vector<T> inv_std_;
  bool training_ = false;
};

/// Average pooling to a fixed number of bins; bin b covers
/// [floor(b L / n), ceil((b + 1) L / n)).
template <typename T>
class AdaptiveAvgPool1d final : public Layer<T> {
 public:
  explicit AdaptiveAvgPool1d(int bins) : bins_(bins) {
    if (bins <= 0) throw Error(Errc::shape_mismatch, "pool needs at least one bin");
  }

  static std::pair<int, int> bin_range(int b, int bins, int len) {
    const int lo = static_cast<int>((static_cast<long long>(b) * len) / bins);
    const int hi = static_cast<int>(((static_cast<long long>(b) + 1) * len + bins - 1) / bins);
    return {lo, hi};
  }

  Tensor<T> forward(const Tensor<T>& x, bool) override {
    if (x.length < bins_) throw Error(Errc::shape_mismatch, "pool input shorter than bin count");
    in_len_ = x.length;
    Tensor<T> y(x.batch, x.channels, bins_);
    for (int b = 0; b < x.batch; ++b) {
      for (int c = 0; c < x.channels; ++c) {
        for (int k = 0; k < bins_; ++k) {
          const auto [lo, hi] = bin_range(k, bins_, x.length);
          T s = 0;
          for (int l = lo; l < hi; ++l) s += x.at(b, c, l);
          y.at(b, c, k) = s / static_cast<T>(hi - lo);
        }
      }
    }
    return y;
  }

  Tensor<T> backward(const Tensor<T>& g) override {
    Tensor<T> gx(g.batch, g.channels, in_len_);
    for (int b = 0; b < g.batch; ++b) {
      for (int c = 0; c < g.channels; ++c) {
        for (int k = 0; k < bins_; ++k) {
          const auto [lo, hi] = bin_range(k, bins_, in_len_);
          const T share = g.at(b, c, k) / static_cast<T>(hi - lo);
          for (int l = lo; l < hi; ++l) gx.at(b, c, l) += share;
        }
      }
    }
    return gx;
  }

  std::string name() const override { return "AdaptiveAvgPool1d(" + std::to_string(bins_) + ")"; }

 private:
  int bins_;
  int in_len_ = 0;
};

}  // namespace ptaloc::nn
