#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "ptaloc/fusion.hpp"
#include "ptaloc/harness/dataset.hpp"
#include "ptaloc/harness/parallel.hpp"
#include "ptaloc/nn/fusers.hpp"
#include "ptaloc/nn/train.hpp"

namespace ptaloc {

/// CNN preset trainable on one CPU core in minutes: about 29k parameters
/// against 203k for the default reduced spec.
inline nn::CnnSpec desk_cnn_spec(int input_length) {
  nn::CnnSpec s;
  s.input_length = input_length;
  s.conv = {nn::ConvLayerSpec{8, 7, 4}, nn::ConvLayerSpec{16, 5, 2}, nn::ConvLayerSpec{16, 5, 2},
            nn::ConvLayerSpec{32, 5, 2}, nn::ConvLayerSpec{32, 5, 2}};
  s.pool_bins = 8;
  s.head = {64, 32, 2};
  return s;
}

namespace detail {

inline std::vector<std::size_t> usable(const Dataset& ds, const std::vector<std::size_t>& rows) {
  std::vector<std::size_t> out;
  for (auto r : rows) {
    if (ds.records[r].estimation_ok) out.push_back(r);
  }
  return out;
}

template <typename T>
nn::Tensor<T> label_tensor(const Dataset& ds, const nn::LabelBox& box) {
  nn::Tensor<T> y(static_cast<int>(ds.records.size()), 2, 1);
  for (std::size_t i = 0; i < ds.records.size(); ++i) {
    const Position2D u = box.normalize(ds.records[i].p_true);
    y.at(static_cast<int>(i), 0, 0) = static_cast<T>(u.x);
    y.at(static_cast<int>(i), 1, 0) = static_cast<T>(u.y);
  }
  return y;
}

}  // namespace detail

struct MlpTraining {
  nn::PfMlp model;
  nn::TrainResult curves;
};

/// PF-MLP on the parameter tuples; records whose estimation failed are
/// left out of every split.
inline MlpTraining train_pf_mlp(const Dataset& ds, const nn::MlpSpec& spec, const nn::TrainSettings& settings,
                                std::uint64_t seed) {
  MlpTraining t{nn::PfMlp(spec, nn::LabelBox::from_roi(ds.cfg.roi)), {}};
  const auto n = static_cast<int>(ds.records.size());
  nn::Tensor<double> x(n, 4, 1);
  for (int i = 0; i < n; ++i) {
    const auto f = nn::mlp_features(ds.records[i].est, ds.cfg);
    std::copy(f.begin(), f.end(), x.sample(i));
  }
  const auto train_rows = detail::usable(ds, ds.split.train);
  const auto val_rows = detail::usable(ds, ds.split.val);
  t.model.norm = nn::Normalizer::fit(x, train_rows);
  t.model.norm.apply(x);
  const auto y = detail::label_tensor<double>(ds, t.model.box);
  Rng rng(substream(seed, 0));
  t.model.net.init(rng);
  t.curves = nn::train(t.model.net, x, y, train_rows, val_rows, settings, substream(seed, 1));
  return t;
}

/// SF-CNN input tensor for every record, 4 x N_c per sample.
inline nn::Tensor<float> cnn_tensor(const Dataset& ds, nn::CnnEncoding enc, int threads = 0) {
  if (!ds.has_signals()) throw Error(Errc::invalid_config, "dataset has no raw signals");
  nn::Tensor<float> x(static_cast<int>(ds.records.size()), 4, ds.n_subcarriers);
  parallel_for(ds.records.size(), threads, [&](std::size_t i, int) {
    nn::cnn_input(ds.signal_vector(i, 1), ds.signal_vector(i, 2), enc, x.sample(static_cast<int>(i)));
  });
  return x;
}

struct CnnTraining {
  nn::SfCnn model;
  nn::TrainResult curves;
};

inline CnnTraining train_sf_cnn(const Dataset& ds, const nn::CnnSpec& spec, nn::CnnEncoding enc,
                                const nn::TrainSettings& settings, std::uint64_t seed) {
  if (spec.input_length != ds.n_subcarriers) throw Error(Errc::shape_mismatch, "CNN input length != N_c");
  CnnTraining t{nn::SfCnn(spec, enc, nn::LabelBox::from_roi(ds.cfg.roi)), {}};
  nn::Tensor<float> x = cnn_tensor(ds, enc);
  t.model.norm = nn::Normalizer::fit(x, ds.split.train);
  t.model.norm.apply(x);
  const auto y = detail::label_tensor<float>(ds, t.model.box);
  Rng rng(substream(seed, 0));
  t.model.net.init(rng);
  t.curves = nn::train(t.model.net, x, y, ds.split.train, ds.split.val, settings, substream(seed, 1));
  return t;
}

/// Localization errors (meters) over `rows`. Records the scheme cannot
/// handle get the ROI diameter, the clamp used everywhere else.
inline std::vector<double> mlp_errors(nn::PfMlp& m, const Dataset& ds, const std::vector<std::size_t>& rows) {
  std::vector<double> e;
  for (auto r : rows) {
    const auto& rec = ds.records[r];
    e.push_back(rec.estimation_ok ? distance(m.predict(rec.est, ds.cfg), rec.p_true) : ds.cfg.roi.diameter());
  }
  return e;
}

inline std::vector<double> cnn_errors(nn::SfCnn& m, const Dataset& ds, const std::vector<std::size_t>& rows) {
  std::vector<double> e;
  for (auto r : rows) {
    e.push_back(distance(m.predict(ds.signal_vector(r, 1), ds.signal_vector(r, 2)), ds.records[r].p_true));
  }
  return e;
}

/// The GDOP-weighted schemes need the per-link sigmas, which the dataset
/// files do not store.
inline std::vector<double> analytical_errors(Scheme s, const Dataset& ds, const std::vector<std::size_t>& rows,
                                             const std::array<NoiseSigmas, 2>& sigmas) {
  const LinkPair links{ds.cfg.link(1), ds.cfg.link(2)};
  std::vector<double> e;
  for (auto r : rows) {
    const auto& rec = ds.records[r];
    double err = ds.cfg.roi.diameter();
    if (rec.estimation_ok) {
      LinkEstimates est = rec.est;
      est[0].sigmas = sigmas[0];
      est[1].sigmas = sigmas[1];
      try {
        err = distance(fuse_analytical(s, est, links, ds.cfg).p_hat, rec.p_true);
        if (!std::isfinite(err)) err = ds.cfg.roi.diameter();
      } catch (const Error&) {
      }
    }
    e.push_back(err);
  }
  return e;
}

inline double rms(const std::vector<double>& e) {
  double s = 0.0;
  for (double v : e) s += v * v;
  return e.empty() ? std::nan("") : std::sqrt(s / static_cast<double>(e.size()));
}

}  // namespace ptaloc
