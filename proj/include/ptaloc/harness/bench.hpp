#pragma once

#include <chrono>
#include <span>
#include <vector>

#include "ptaloc/harness/trial.hpp"

namespace ptaloc {

struct BenchRow {
  Scheme scheme = Scheme::gi_pl;
  std::size_t parameters = 0;  // learned weights, 0 for analytical schemes
  std::size_t macs = 0;        // multiply-accumulates per inference, 0 for analytical schemes
  double mean_ms = 0.0;
  double relative = 0.0;  // mean_ms / GI-PL mean_ms
  int reps = 0;
};

inline std::size_t mlp_macs(const nn::MlpSpec& s) {
  return static_cast<std::size_t>(s.input_dim) * s.hidden[0] + static_cast<std::size_t>(s.hidden[0]) * s.hidden[1] +
         static_cast<std::size_t>(s.hidden[1]) * s.output_dim;
}

inline std::size_t cnn_macs(const nn::CnnSpec& s) {
  const auto lens = s.lengths();
  std::size_t macs = 0;
  int cin = s.input_channels;
  for (int i = 0; i < 5; ++i) {
    macs += static_cast<std::size_t>(cin) * s.conv[i].kernel * s.conv[i].channels * lens[i];
    cin = s.conv[i].channels;
  }
  macs += static_cast<std::size_t>(cin) * s.pool_bins * s.head[0] + static_cast<std::size_t>(s.head[0]) * s.head[1] +
          static_cast<std::size_t>(s.head[1]) * s.head[2];
  return macs;
}

/// Wall-clock latency per localization on the calling thread. Parameter
/// level schemes are timed from the received signals through estimation and
/// fusion; SF-CNN from the received signals through the network. Signal
/// synthesis is excluded. GI-PL is always timed as the reference.
inline std::vector<BenchRow> bench_runtime(const Experiment& exp, std::span<const Scheme> schemes, int n_reps,
                                           Models* models, std::uint64_t seed) {
  if (n_reps < 30) throw Error(Errc::invalid_config, "bench needs at least 30 repetitions");
  if (exp.cfg().estimate_mode != EstimateMode::signal) throw Error(Errc::invalid_config, "bench needs signal mode");
  std::vector<LinkObservation> obs;
  for (int i = 0; i < n_reps; ++i) {
    const std::uint64_t s = derive_seed(seed, static_cast<std::uint64_t>(i));
    obs.push_back(observe(exp, trial_target(exp.cfg(), s), s));
  }
  using clock = std::chrono::steady_clock;
  volatile double sink = 0.0;
  auto time_scheme = [&](Scheme sch) {
    const auto t0 = clock::now();
    for (const auto& o : obs) {
      try {
        if (sch == Scheme::sf_cnn) {
          sink = sink + detail::fuse_one(sch, exp, o, models).p_hat.x;
        } else {
          LinkObservation fresh;
          for (int i = 0; i < 2; ++i) fresh.est[i] = estimate_link((*o.signals)[i], exp.dep, exp.sigmas[i]);
          sink = sink + detail::fuse_one(sch, exp, fresh, models).p_hat.x;
        }
      } catch (const Error& e) {
        if (e.code() == Errc::invalid_config) throw;
      }
    }
    return std::chrono::duration<double, std::milli>(clock::now() - t0).count() / n_reps;
  };
  const double ref = time_scheme(Scheme::gi_pl);
  std::vector<BenchRow> rows;
  for (Scheme sch : schemes) {
    BenchRow r;
    r.scheme = sch;
    r.reps = n_reps;
    r.mean_ms = sch == Scheme::gi_pl ? ref : time_scheme(sch);
    r.relative = r.mean_ms / ref;
    if (sch == Scheme::pf_mlp && models && models->mlp) {
      r.parameters = models->mlp->net.parameter_count();
      r.macs = mlp_macs(models->mlp->spec);
    } else if (sch == Scheme::sf_cnn && models && models->cnn) {
      r.parameters = models->cnn->net.parameter_count();
      r.macs = cnn_macs(models->cnn->spec);
    }
    rows.push_back(r);
  }
  return rows;
}

}  // namespace ptaloc
