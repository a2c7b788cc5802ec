#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <vector>

#include "ptaloc/errors.hpp"
#include "ptaloc/nn/model.hpp"
#include "ptaloc/random.hpp"

namespace ptaloc::nn {

struct AdamWSettings {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 1e-4;
};

/// Adam with decoupled weight decay: theta -= lr (m_hat / (sqrt(v_hat) + eps)
/// + wd theta), the decay applied only to parameters flagged for it.
template <typename T>
class AdamW {
 public:
  AdamW(std::vector<Param<T>*> params, AdamWSettings s) : params_(std::move(params)), s_(s) {
    for (Param<T>* p : params_) {
      m_.emplace_back(p->size(), 0.0);
      v_.emplace_back(p->size(), 0.0);
    }
  }

  void step() {
    ++t_;
    const double c1 = 1.0 - std::pow(s_.beta1, t_);
    const double c2 = 1.0 - std::pow(s_.beta2, t_);
    for (std::size_t k = 0; k < params_.size(); ++k) {
      Param<T>& p = *params_[k];
      const double wd = p.decay ? s_.weight_decay : 0.0;
      for (std::size_t i = 0; i < p.size(); ++i) {
        const double g = p.grad[i];
        m_[k][i] = s_.beta1 * m_[k][i] + (1.0 - s_.beta1) * g;
        v_[k][i] = s_.beta2 * v_[k][i] + (1.0 - s_.beta2) * g * g;
        const double upd = (m_[k][i] / c1) / (std::sqrt(v_[k][i] / c2) + s_.eps) + wd * p.value[i];
        p.value[i] = static_cast<T>(p.value[i] - s_.lr * upd);
      }
    }
  }

 private:
  std::vector<Param<T>*> params_;
  AdamWSettings s_;
  std::vector<std::vector<double>> m_, v_;
  long long t_ = 0;
};

/// Per-group affine feature map x' = (x - shift) / scale. A group is one
/// scalar feature (MLP) or one channel across all positions (CNN).
struct Normalizer {
  std::vector<double> shift;
  std::vector<double> scale;

  template <typename T>
  static Normalizer fit(const Tensor<T>& x, const std::vector<std::size_t>& rows) {
    if (rows.empty()) throw Error(Errc::degenerate_feature, "cannot fit a normalizer on an empty split");
    Normalizer n;
    n.shift.assign(x.channels, 0.0);
    n.scale.assign(x.channels, 0.0);
    const double count = static_cast<double>(rows.size()) * x.length;
    for (int c = 0; c < x.channels; ++c) {
      double s = 0.0;
      for (std::size_t r : rows) {
        for (int l = 0; l < x.length; ++l) s += x.at(static_cast<int>(r), c, l);
      }
      const double mean = s / count;
      double s2 = 0.0;
      for (std::size_t r : rows) {
        for (int l = 0; l < x.length; ++l) {
          const double d = x.at(static_cast<int>(r), c, l) - mean;
          s2 += d * d;
        }
      }
      const double sd = std::sqrt(s2 / count);
      if (!(sd > 1e-12 * std::max(1.0, std::abs(mean)))) {
        throw Error(Errc::degenerate_feature, "feature " + std::to_string(c) + " is constant on the train split");
      }
      n.shift[c] = mean;
      n.scale[c] = sd;
    }
    return n;
  }

  template <typename T>
  void apply(Tensor<T>& x) const {
    if (static_cast<int>(shift.size()) != x.channels) throw Error(Errc::shape_mismatch, "normalizer width mismatch");
    for (int b = 0; b < x.batch; ++b) {
      for (int c = 0; c < x.channels; ++c) {
        for (int l = 0; l < x.length; ++l) x.at(b, c, l) = static_cast<T>((x.at(b, c, l) - shift[c]) / scale[c]);
      }
    }
  }

  template <typename T>
  void invert(Tensor<T>& x) const {
    for (int b = 0; b < x.batch; ++b) {
      for (int c = 0; c < x.channels; ++c) {
        for (int l = 0; l < x.length; ++l) x.at(b, c, l) = static_cast<T>(x.at(b, c, l) * scale[c] + shift[c]);
      }
    }
  }
};

struct TrainSettings {
  AdamWSettings adamw;
  int batch_size = 256;
  int max_epochs = 100;
  int patience = 10;
  double diverge_factor = 10.0;
  int diverge_epochs = 3;
};

struct TrainResult {
  std::vector<double> train_loss;  // per epoch, mean over batches
  std::vector<double> val_loss;
  int best_epoch = -1;
  double best_val_loss = std::numeric_limits<double>::infinity();
  double initial_loss = 0.0;
  bool early_stopped = false;
};

template <typename T>
Tensor<T> gather(const Tensor<T>& src, const std::vector<std::size_t>& rows, std::size_t first, std::size_t count) {
  Tensor<T> out(static_cast<int>(count), src.channels, src.length);
  const std::size_t f = src.features();
  for (std::size_t i = 0; i < count; ++i) {
    std::copy_n(src.sample(static_cast<int>(rows[first + i])), f, out.sample(static_cast<int>(i)));
  }
  return out;
}

/// Inference-mode mean loss over `rows`, evaluated in batches.
template <typename T>
double evaluate_loss(Sequential<T>& model, const Tensor<T>& x, const Tensor<T>& y,
                     const std::vector<std::size_t>& rows, int batch_size) {
  double sum = 0.0;
  for (std::size_t first = 0; first < rows.size(); first += batch_size) {
    const std::size_t n = std::min<std::size_t>(batch_size, rows.size() - first);
    const Tensor<T> xb = gather(x, rows, first, n);
    const Tensor<T> yb = gather(y, rows, first, n);
    sum += static_cast<double>(mse_loss(model.forward(xb, false), yb)) * static_cast<double>(n);
  }
  return rows.empty() ? 0.0 : sum / static_cast<double>(rows.size());
}

/// Minibatch AdamW on the MSE loss with early stopping on the validation
/// loss; the best-validation state is restored at the end. Deterministic for
/// a fixed seed.
template <typename T>
TrainResult train(Sequential<T>& model, const Tensor<T>& x, const Tensor<T>& y, const std::vector<std::size_t>& train_rows,
                  const std::vector<std::size_t>& val_rows, const TrainSettings& s, std::uint64_t seed) {
  if (train_rows.empty()) throw Error(Errc::invalid_config, "empty training split");
  if (s.batch_size <= 0 || s.max_epochs <= 0) throw Error(Errc::invalid_config, "bad training settings");
  Rng rng(seed);
  AdamW<T> opt(model.params(), s.adamw);
  TrainResult res;
  res.initial_loss = evaluate_loss(model, x, y, train_rows, s.batch_size);
  std::vector<T> best_state = model.state();
  std::vector<std::size_t> order = train_rows;
  int since_best = 0, above = 0;
  for (int epoch = 0; epoch < s.max_epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double sum = 0.0;
    for (std::size_t first = 0; first < order.size(); first += s.batch_size) {
      const std::size_t n = std::min<std::size_t>(s.batch_size, order.size() - first);
      if (n < 2 && order.size() >= 2) continue;  // batch-norm needs two samples
      const Tensor<T> xb = gather(x, order, first, n);
      const Tensor<T> yb = gather(y, order, first, n);
      model.zero_grad();
      Tensor<T> g;
      const double loss = mse_loss(model.forward(xb, true), yb, &g);
      model.backward(g);
      for (Param<T>* p : model.params()) {
        for (T v : p->grad) {
          if (!std::isfinite(static_cast<double>(v))) throw Error(Errc::non_finite_gradient, "non-finite gradient");
        }
      }
      opt.step();
      sum += loss * static_cast<double>(n);
    }
    const double train_loss = sum / static_cast<double>(order.size());
    res.train_loss.push_back(train_loss);
    if (!std::isfinite(train_loss)) throw Error(Errc::diverged, "training loss is not finite");
    above = train_loss > s.diverge_factor * res.initial_loss ? above + 1 : 0;
    if (above >= s.diverge_epochs) throw Error(Errc::diverged, "training loss exceeded the divergence bound");

    const double val = val_rows.empty() ? train_loss : evaluate_loss(model, x, y, val_rows, s.batch_size);
    res.val_loss.push_back(val);
    if (val < res.best_val_loss) {
      res.best_val_loss = val;
      res.best_epoch = epoch;
      best_state = model.state();
      since_best = 0;
    } else if (++since_best >= s.patience) {
      res.early_stopped = true;
      break;
    }
  }
  model.load_state(best_state);
  return res;
}

/// Deterministic 8:1:1 split by record: a seeded permutation, then the first
/// 80% train, next 10% validation, rest test.
struct Split {
  std::vector<std::size_t> train, val, test;
};

inline Split split_811(std::size_t n, std::uint64_t seed) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  Rng rng(seed);
  std::shuffle(idx.begin(), idx.end(), rng);
  const std::size_t n_train = n * 8 / 10;
  const std::size_t n_val = n / 10;
  Split s;
  s.train.assign(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_train));
  s.val.assign(idx.begin() + static_cast<std::ptrdiff_t>(n_train),
               idx.begin() + static_cast<std::ptrdiff_t>(n_train + n_val));
  s.test.assign(idx.begin() + static_cast<std::ptrdiff_t>(n_train + n_val), idx.end());
  return s;
}

}  // namespace ptaloc::nn
