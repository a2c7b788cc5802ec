// One trial at a fixed target: both link estimates, then every analytical
// fuser's estimate and error.
#include <cstdio>

#include "ptaloc/harness/trial.hpp"

using namespace ptaloc;

int main() {
  ScenarioConfig cfg;
  // Representative per-link sigmas so the demo skips calibration.
  cfg.sigmas = std::array<NoiseSigmas, 2>{NoiseSigmas{1.6, 0.0086}, NoiseSigmas{1.5, 0.0086}};
  const Experiment exp = make_experiment(cfg);

  const Position2D target{110.0, 25.0};
  const TrialRecord r = run_trial(exp, kAnalyticalSchemes, 0, 2024, nullptr, target);

  std::printf("target        (%.2f, %.2f) m\n", r.p_true.x, r.p_true.y);
  if (r.estimation_failed) {
    std::printf("estimation failed: %s\n", r.estimation_failure.c_str());
    return 1;
  }
  for (int i = 0; i < 2; ++i) {
    const Measurement truth = measurement_model(r.p_true, exp.dep.link(i + 1));
    std::printf("Rx%d           theta %.3f deg (true %.3f), d %.2f m (true %.2f)\n", i + 1,
                rad2deg(r.est[i].theta_hat), rad2deg(truth.theta), r.est[i].d_hat, truth.d);
  }
  for (const auto& o : r.outcomes) {
    if (o.failed) {
      std::printf("%-12s  failed: %s\n", std::string(scheme_name(o.scheme)).c_str(), o.failure.c_str());
      continue;
    }
    std::printf("%-12s  (%.2f, %.2f) m, error %.2f m\n", std::string(scheme_name(o.scheme)).c_str(),
                o.result.p_hat.x, o.result.p_hat.y, o.error);
  }
  return 0;
}
