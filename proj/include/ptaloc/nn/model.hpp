#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <memory>
#include <string>
#include <vector>

#include "ptaloc/errors.hpp"
#include "ptaloc/nn/layers.hpp"
#include "ptaloc/random.hpp"

namespace ptaloc::nn {

template <typename T>
class Sequential {
 public:
  Sequential() = default;
  Sequential(Sequential&&) noexcept = default;
  Sequential& operator=(Sequential&&) noexcept = default;

  template <typename L, typename... Args>
  L& add(Args&&... args) {
    auto layer = std::make_unique<L>(std::forward<Args>(args)...);
    L& ref = *layer;
    layers_.push_back(std::move(layer));
    return ref;
  }

  Tensor<T> forward(const Tensor<T>& x, bool training = false) {
    Tensor<T> h = x;
    for (auto& l : layers_) h = l->forward(h, training);
    return h;
  }

  Tensor<T> backward(const Tensor<T>& grad_out) {
    Tensor<T> g = grad_out;
    for (auto it = layers_.rbegin(); it != layers_.rend(); ++it) g = (*it)->backward(g);
    return g;
  }

  std::vector<Param<T>*> params() {
    std::vector<Param<T>*> out;
    for (auto& l : layers_) {
      for (Param<T>* p : l->params()) out.push_back(p);
    }
    return out;
  }

  std::vector<std::vector<T>*> buffers() {
    std::vector<std::vector<T>*> out;
    for (auto& l : layers_) {
      for (auto* b : l->buffers()) out.push_back(b);
    }
    return out;
  }

  std::size_t parameter_count() {
    std::size_t n = 0;
    for (Param<T>* p : params()) n += p->size();
    return n;
  }

  void zero_grad() {
    for (Param<T>* p : params()) std::fill(p->grad.begin(), p->grad.end(), T(0));
  }

  void init(Rng& rng) {
    for (auto& l : layers_) l->init(rng);
  }

  /// Parameters followed by buffers, in layer order.
  std::vector<T> state() {
    std::vector<T> flat;
    for (Param<T>* p : params()) flat.insert(flat.end(), p->value.begin(), p->value.end());
    for (auto* b : buffers()) flat.insert(flat.end(), b->begin(), b->end());
    return flat;
  }

  void load_state(const std::vector<T>& flat) {
    std::size_t need = 0;
    for (Param<T>* p : params()) need += p->size();
    for (auto* b : buffers()) need += b->size();
    if (flat.size() != need) throw Error(Errc::shape_mismatch, "state size does not match the model");
    std::size_t k = 0;
    for (Param<T>* p : params()) {
      std::copy_n(flat.begin() + static_cast<std::ptrdiff_t>(k), p->size(), p->value.begin());
      k += p->size();
    }
    for (auto* b : buffers()) {
      std::copy_n(flat.begin() + static_cast<std::ptrdiff_t>(k), b->size(), b->begin());
      k += b->size();
    }
  }

  std::size_t size() const { return layers_.size(); }
  Layer<T>& layer(std::size_t i) { return *layers_.at(i); }

 private:
  std::vector<std::unique_ptr<Layer<T>>> layers_;
};

/// Parameter-level fuser: 4 features -> hidden -> hidden -> 2.
struct MlpSpec {
  int input_dim = 4;
  std::array<int, 2> hidden{64, 128};
  int output_dim = 2;

  void validate() const {
    if (input_dim <= 0 || output_dim <= 0 || hidden[0] <= 0 || hidden[1] <= 0) {
      throw Error(Errc::invalid_config, "MLP sizes must be positive");
    }
  }
  std::size_t parameter_count() const {
    return static_cast<std::size_t>(input_dim + 1) * hidden[0] + static_cast<std::size_t>(hidden[0] + 1) * hidden[1] +
           static_cast<std::size_t>(hidden[1] + 1) * output_dim;
  }
};

struct ConvLayerSpec {
  int channels = 16;
  int kernel = 7;
  int stride = 2;
};

/// Signal-level fuser: 5 x (conv, batch-norm, leaky ReLU), average pooling to
/// `pool_bins`, then 3 dense layers with a tanh output.
struct CnnSpec {
  int input_channels = 4;  // Re/Im of Rx1, then Re/Im of Rx2
  int input_length = 3276;
  std::array<ConvLayerSpec, 5> conv{ConvLayerSpec{16, 7, 2}, ConvLayerSpec{32, 7, 2}, ConvLayerSpec{32, 7, 2},
                                    ConvLayerSpec{64, 7, 2}, ConvLayerSpec{64, 7, 2}};
  int pool_bins = 8;
  std::array<int, 3> head{256, 64, 2};
  double leaky_slope = 0.01;

  void validate() const {
    auto fail = [](const char* what) { throw Error(Errc::invalid_config, what); };
    if (input_channels <= 0 || input_length <= 0 || pool_bins <= 0) fail("CNN sizes must be positive");
    for (const auto& c : conv) {
      if (c.channels <= 0 || c.kernel <= 0 || c.stride <= 0) fail("CNN conv sizes must be positive");
    }
    if (head[0] <= 0 || head[1] <= 0 || head[2] != 2) fail("CNN head must be positive and end in 2 outputs");
  }

  /// Sequence length after each conv layer (same padding of kernel / 2).
  std::array<int, 5> lengths() const {
    std::array<int, 5> out{};
    int len = input_length;
    for (int i = 0; i < 5; ++i) {
      const int pad = conv[i].kernel / 2;
      len = (len + 2 * pad - conv[i].kernel) / conv[i].stride + 1;
      if (len <= 0) throw Error(Errc::shape_mismatch, "CNN input too short for the conv stack");
      out[i] = len;
    }
    return out;
  }
};

template <typename T>
Sequential<T> build_mlp(const MlpSpec& spec) {
  spec.validate();
  Sequential<T> m;
  m.template add<Dense<T>>(spec.input_dim, spec.hidden[0]);
  m.template add<LeakyReLU<T>>(T(0));
  m.template add<Dense<T>>(spec.hidden[0], spec.hidden[1]);
  m.template add<LeakyReLU<T>>(T(0));
  m.template add<Dense<T>>(spec.hidden[1], spec.output_dim);
  return m;
}

template <typename T>
Sequential<T> build_cnn(const CnnSpec& spec) {
  spec.validate();
  const auto lens = spec.lengths();
  if (lens[4] < spec.pool_bins) throw Error(Errc::shape_mismatch, "conv output shorter than the pool bin count");
  Sequential<T> m;
  int ch = spec.input_channels;
  for (const auto& c : spec.conv) {
    m.template add<Conv1D<T>>(ch, c.channels, c.kernel, c.stride, c.kernel / 2);
    m.template add<BatchNorm1d<T>>(c.channels);
    m.template add<LeakyReLU<T>>(static_cast<T>(spec.leaky_slope));
    ch = c.channels;
  }
  m.template add<AdaptiveAvgPool1d<T>>(spec.pool_bins);
  m.template add<Dense<T>>(ch * spec.pool_bins, spec.head[0]);
  m.template add<LeakyReLU<T>>(static_cast<T>(spec.leaky_slope));
  m.template add<Dense<T>>(spec.head[0], spec.head[1]);
  m.template add<LeakyReLU<T>>(static_cast<T>(spec.leaky_slope));
  m.template add<Dense<T>>(spec.head[1], spec.head[2]);
  m.template add<Tanh<T>>();
  return m;
}

/// Mean over batch and outputs of the squared error; the gradient with
/// respect to the prediction is written to `grad` when non-null.
template <typename T>
T mse_loss(const Tensor<T>& pred, const Tensor<T>& target, Tensor<T>* grad = nullptr) {
  if (pred.data.size() != target.data.size()) throw Error(Errc::shape_mismatch, "loss shape mismatch");
  const T n = static_cast<T>(pred.data.size());
  T loss = 0;
  if (grad) *grad = Tensor<T>(pred.batch, pred.channels, pred.length);
  for (std::size_t i = 0; i < pred.data.size(); ++i) {
    const T e = pred.data[i] - target.data[i];
    loss += e * e;
    if (grad) grad->data[i] = T(2) * e / n;
  }
  return loss / n;
}

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::size_t checked = 0;
};

/// Central finite differences of the training-mode MSE loss against
/// backprop for every parameter (or an evenly strided subset of
/// `max_checks`). The relative error uses max(|a|, |n|, floor) in the
/// denominator so exactly-zero gradients (a conv bias feeding batch norm)
/// compare against the difference quotient's roundoff level instead.
template <typename T>
GradCheckReport gradient_check(Sequential<T>& model, const Tensor<T>& x, const Tensor<T>& y, double h = 1e-5,
                               std::size_t max_checks = 0, double floor = 1e-6) {
  model.zero_grad();
  Tensor<T> g;
  mse_loss(model.forward(x, true), y, &g);
  model.backward(g);
  for (Param<T>* p : model.params()) {
    for (T v : p->grad) {
      if (!std::isfinite(static_cast<double>(v))) throw Error(Errc::non_finite_gradient, "non-finite gradient");
    }
  }
  std::size_t total = model.parameter_count();
  const std::size_t stride = max_checks == 0 || max_checks >= total ? 1 : total / max_checks;
  GradCheckReport rep;
  std::size_t flat = 0;
  for (Param<T>* p : model.params()) {
    for (std::size_t i = 0; i < p->size(); ++i, ++flat) {
      if (flat % stride != 0) continue;
      const T keep = p->value[i];
      p->value[i] = keep + static_cast<T>(h);
      const double up = mse_loss(model.forward(x, true), y);
      p->value[i] = keep - static_cast<T>(h);
      const double down = mse_loss(model.forward(x, true), y);
      p->value[i] = keep;
      const double numeric = (up - down) / (2.0 * h);
      const double analytic = p->grad[i];
      const double denom = std::max({std::abs(numeric), std::abs(analytic), floor});
      rep.max_rel_error = std::max(rep.max_rel_error, std::abs(numeric - analytic) / denom);
      ++rep.checked;
    }
  }
  return rep;
}

}  // namespace ptaloc::nn
