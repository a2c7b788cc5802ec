#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ptaloc/channel.hpp"
#include "ptaloc/estimation.hpp"
#include "ptaloc/fusion.hpp"
#include "ptaloc/harness/experiment.hpp"
#include "ptaloc/harness/metrics.hpp"
#include "ptaloc/harness/parallel.hpp"
#include "ptaloc/nn/fusers.hpp"

namespace ptaloc {

/// Trained learned fusers. The networks keep forward caches, so every
/// worker thread needs its own copy (see clone()).
struct Models {
  std::optional<nn::PfMlp> mlp;
  std::optional<nn::SfCnn> cnn;

  Models clone() {
    Models m;
    if (mlp) m.mlp = mlp->clone();
    if (cnn) m.cnn = cnn->clone();
    return m;
  }
};

struct SchemeOutcome {
  Scheme scheme = Scheme::gi_pl;
  FusionResult result;
  double error = std::numeric_limits<double>::quiet_NaN();
  bool failed = false;
  std::string failure;  // error code name when failed
};

struct TrialRecord {
  std::uint64_t trial = 0;
  std::uint64_t seed = 0;
  Position2D p_true;
  double tx_power_dbm = 0.0;
  LinkEstimates est{};
  bool estimation_failed = false;
  std::string estimation_failure;
  std::vector<SchemeOutcome> outcomes;

  const SchemeOutcome* outcome(Scheme s) const {
    for (const auto& o : outcomes) {
      if (o.scheme == s) return &o;
    }
    return nullptr;
  }
};

/// Received signals (signal mode only) and the per-link estimates of one
/// trial.
struct LinkObservation {
  std::optional<std::array<RxSignal, 2>> signals;
  LinkEstimates est{};
  bool estimation_failed = false;
  std::string estimation_failure;
};

/// Seed layout: substream 0 draws the target, substream i the noise of
/// receiver i (and the oracle perturbation in oracle mode).
inline LinkObservation observe(const Experiment& exp, Position2D p, std::uint64_t seed) {
  const ScenarioConfig& cfg = exp.cfg();
  LinkObservation obs;
  if (cfg.estimate_mode == EstimateMode::oracle) {
    for (int i = 0; i < 2; ++i) {
      obs.est[i] = oracle_link_estimate(p, exp.dep.link(i + 1), cfg.oracle_noise, substream(seed, i + 1), exp.sigmas[i]);
    }
    return obs;
  }
  std::array<RxSignal, 2> rx;
  for (int i = 0; i < 2; ++i) {
    rx[i] = synthesize_received(p, exp.dep.link(i + 1), cfg, exp.dep.rx_pta(i + 1), exp.dep.tx_beam, cfg.noise,
                                substream(seed, i + 1));
  }
  try {
    for (int i = 0; i < 2; ++i) obs.est[i] = estimate_link(rx[i], exp.dep, exp.sigmas[i]);
  } catch (const Error& e) {
    obs.estimation_failed = true;
    obs.estimation_failure = std::string(errc_name(e.code()));
  }
  obs.signals = std::move(rx);
  return obs;
}

inline Position2D trial_target(const ScenarioConfig& cfg, std::uint64_t seed) {
  Rng rng(substream(seed, 0));
  return sample_target(cfg, rng);
}

namespace detail {

inline FusionResult fuse_one(Scheme s, const Experiment& exp, const LinkObservation& obs, Models* models) {
  switch (s) {
    case Scheme::pf_mlp: {
      if (!models || !models->mlp) throw Error(Errc::invalid_config, "PF-MLP requested without a trained model");
      if (obs.estimation_failed) throw Error(Errc::zero_signal, "no link estimates");
      FusionResult r;
      r.scheme = s;
      r.p_hat = models->mlp->predict(obs.est, exp.cfg());
      r.converged = true;
      return r;
    }
    case Scheme::sf_cnn: {
      if (!models || !models->cnn) throw Error(Errc::invalid_config, "SF-CNN requested without a trained model");
      if (!obs.signals) throw Error(Errc::invalid_config, "SF-CNN needs the signal estimation mode");
      FusionResult r;
      r.scheme = s;
      r.p_hat = models->cnn->predict((*obs.signals)[0].y, (*obs.signals)[1].y);
      r.converged = true;
      return r;
    }
    default:
      if (obs.estimation_failed) throw Error(Errc::zero_signal, "no link estimates");
      return fuse_analytical(s, obs.est, exp.links(), exp.cfg());
  }
}

}  // namespace detail

/// One trial: target (drawn from the seed unless given), both links,
/// estimation and every requested scheme. A scheme that throws is recorded
/// as failed; the others are unaffected.
inline TrialRecord run_trial(const Experiment& exp, std::span<const Scheme> schemes, std::uint64_t trial,
                             std::uint64_t seed, Models* models = nullptr,
                             std::optional<Position2D> target = std::nullopt) {
  TrialRecord rec;
  rec.trial = trial;
  rec.seed = seed;
  rec.tx_power_dbm = exp.cfg().tx_power_dbm;
  rec.p_true = target ? *target : trial_target(exp.cfg(), seed);
  const LinkObservation obs = observe(exp, rec.p_true, seed);
  rec.est = obs.est;
  rec.estimation_failed = obs.estimation_failed;
  rec.estimation_failure = obs.estimation_failure;
  for (Scheme s : schemes) {
    SchemeOutcome o;
    o.scheme = s;
    try {
      o.result = detail::fuse_one(s, exp, obs, models);
      o.error = distance(o.result.p_hat, rec.p_true);
      if (!std::isfinite(o.error)) {
        o.failed = true;
        o.failure = "NonFiniteEstimate";
      }
    } catch (const Error& e) {
      o.failed = true;
      o.failure = std::string(errc_name(e.code()));
    }
    rec.outcomes.push_back(std::move(o));
  }
  return rec;
}

struct TrialJob {
  std::uint64_t trial = 0;
  std::uint64_t seed = 0;
  std::optional<Position2D> target;
};

/// Parallel map of run_trial over `jobs`; record k always belongs to job k,
/// so results do not depend on the schedule or the thread count.
inline std::vector<TrialRecord> run_trials(const Experiment& exp, std::span<const Scheme> schemes,
                                           const std::vector<TrialJob>& jobs, Models* models = nullptr,
                                           int threads = 0) {
  std::vector<TrialRecord> out(jobs.size());
  std::vector<Models> local(worker_count(jobs.size(), threads));
  if (models) {
    for (auto& m : local) m = models->clone();
  }
  parallel_for(jobs.size(), threads, [&](std::size_t k, int w) {
    out[k] = run_trial(exp, schemes, jobs[k].trial, jobs[k].seed, models ? &local[w] : nullptr, jobs[k].target);
  });
  return out;
}

inline std::vector<MetricsSummary> summarize_records(const std::vector<TrialRecord>& records,
                                                     std::span<const Scheme> schemes, const ScenarioConfig& cfg) {
  std::vector<MetricsSummary> out;
  for (std::size_t k = 0; k < schemes.size(); ++k) {
    std::vector<double> err;
    std::vector<char> failed;
    for (const auto& r : records) {
      const SchemeOutcome* o = r.outcome(schemes[k]);
      err.push_back(o ? o->error : std::numeric_limits<double>::quiet_NaN());
      failed.push_back(!o || o->failed);
    }
    out.push_back(summarize(schemes[k], err, failed, cfg.failure_policy, cfg.roi.diameter()));
  }
  return out;
}

struct MonteCarloResult {
  std::vector<TrialRecord> records;
  std::vector<MetricsSummary> summaries;  // one per requested scheme, in request order
};

/// Trial i uses derive_seed(master, i).
inline MonteCarloResult run_monte_carlo(const Experiment& exp, std::size_t n_trials, std::span<const Scheme> schemes,
                                        std::uint64_t master_seed, Models* models = nullptr, int threads = 0) {
  if (n_trials == 0) throw Error(Errc::invalid_config, "need at least one trial");
  std::vector<TrialJob> jobs(n_trials);
  for (std::size_t i = 0; i < n_trials; ++i) jobs[i] = {i, derive_seed(master_seed, i), std::nullopt};
  MonteCarloResult res;
  res.records = run_trials(exp, schemes, jobs, models, threads);
  res.summaries = summarize_records(res.records, schemes, exp.cfg());
  return res;
}

}  // namespace ptaloc
