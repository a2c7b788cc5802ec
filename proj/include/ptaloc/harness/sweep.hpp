#pragma once

#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ptaloc/harness/experiment.hpp"
#include "ptaloc/harness/trial.hpp"

namespace ptaloc {

struct SweepRow {
  double tx_power_dbm = 0.0;
  Scheme scheme = Scheme::gi_pl;
  std::string variant;  // analytical, generalized or matched
  MetricsSummary metrics;
};

struct SweepOptions {
  std::size_t n_trials = 1000;
  std::uint64_t seed = 1;
  int threads = 0;
  std::optional<std::string> calibration_cache;
};

/// RMSE versus transmit power. Every power reuses the same trial seeds, so
/// targets and normalized noise draws are shared and only the SNR changes.
/// Sigmas are calibrated per power. Learned schemes run with the
/// `generalized` models (trained at one power) and, where `matched` has an
/// entry for the power, again with those.
inline std::vector<SweepRow> power_sweep(const ScenarioConfig& base, std::span<const double> powers,
                                         std::span<const Scheme> schemes, const SweepOptions& opt,
                                         Models* generalized = nullptr, std::map<double, Models>* matched = nullptr) {
  if (powers.empty()) throw Error(Errc::invalid_config, "power list is empty");
  std::vector<Scheme> learned;
  for (Scheme s : schemes) {
    if (is_neural(s)) learned.push_back(s);
  }
  std::vector<SweepRow> rows;
  for (double p : powers) {
    ScenarioConfig cfg = base;
    cfg.tx_power_dbm = p;
    const Experiment exp = make_experiment(cfg, opt.calibration_cache);
    const auto mc = run_monte_carlo(exp, opt.n_trials, schemes, opt.seed, generalized, opt.threads);
    for (const auto& m : mc.summaries) {
      rows.push_back({p, m.scheme, is_neural(m.scheme) ? "generalized" : "analytical", m});
    }
    if (matched && !learned.empty()) {
      auto it = matched->find(p);
      if (it != matched->end()) {
        const auto mm = run_monte_carlo(exp, opt.n_trials, learned, opt.seed, &it->second, opt.threads);
        for (const auto& m : mm.summaries) rows.push_back({p, m.scheme, "matched", m});
      }
    }
  }
  return rows;
}

}  // namespace ptaloc
