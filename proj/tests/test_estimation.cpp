#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include <Eigen/Dense>

#include "ptaloc/deployment.hpp"
#include "ptaloc/estimation.hpp"

using namespace ptaloc;

namespace {

ScenarioConfig quiet_config() {
  ScenarioConfig c;
  c.noise.enabled = false;
  return c;
}

CVector distance_steering(const std::vector<double>& rel_freqs, double r) {
  CVector a(rel_freqs.size());
  for (std::size_t q = 0; q < a.size(); ++q) a[q] = std::polar(1.0, -kTwoPi * rel_freqs[q] * r / kSpeedOfLight);
  return a;
}

std::vector<double> rel_freqs(int m, double df) {
  std::vector<double> f(m);
  for (int q = 0; q < m; ++q) f[q] = q * df;
  return f;
}

}  // namespace

TEST(PeakDetection, OneHotAndTies) {
  CVector y(32, cplx(0, 0));
  y[7] = cplx(0, 2);
  EXPECT_EQ(detect_peak_subcarrier(y), 7);
  const CVector flat(32, cplx(1, 1));
  EXPECT_EQ(detect_peak_subcarrier(flat), 0);
}

TEST(Aoa, StartBoundaryAndBoresightShift) {
  const Deployment dep(quiet_config());
  const PtaConfig& pta = dep.rx_pta(1);
  CVector y(pta.n_subcarriers, cplx(0, 0));
  y[0] = 1.0;
  EXPECT_NEAR(estimate_aoa(y, pta, 0.3), wrap_angle(0.3 + pta.theta_start), 1e-15);
  y[0] = 0.0;
  y[1234] = 1.0;
  const double a = estimate_aoa(y, pta, 0.3), b = estimate_aoa(y, pta, 0.3 + 0.05);
  EXPECT_NEAR(wrap_angle(b - a), 0.05, 1e-15);
}

TEST(Aoa, NoiselessWithinBeamSpacing) {
  const ScenarioConfig cfg = quiet_config();
  const Deployment dep(cfg);
  Rng rng(21);
  for (int i = 0; i < 40; ++i) {
    const Position2D p = sample_target(cfg, rng);
    for (int rx = 1; rx <= 2; ++rx) {
      const RxSignal s = synthesize_received(p, dep.link(rx), cfg, dep.rx_pta(rx), dep.tx_beam, cfg.noise, 0);
      const int peak = detect_peak_subcarrier(s.y);
      const double spacing = std::max(inter_beam_spacing(std::max(peak - 1, 0), dep.rx_pta(rx)),
                                      inter_beam_spacing(std::min(peak, cfg.n_subcarriers - 1), dep.rx_pta(rx)));
      const double err = wrap_angle(estimate_aoa(s.y, dep.rx_pta(rx), cfg.rx_boresight(rx)) -
                                    measurement_model(p, dep.link(rx)).theta);
      EXPECT_LE(std::abs(err), spacing) << i << " rx" << rx;
    }
  }
}

TEST(Music, ProjectionMatchesEigendecomposition) {
  const int m = 8;
  const auto freqs = rel_freqs(m, 30e3);
  std::mt19937_64 rng(4);
  std::normal_distribution<double> n01;
  CVector y(m);
  for (auto& v : y) v = cplx(n01(rng), n01(rng));
  const MusicGrid grid{200, 260, 0.5};
  const auto proj = music_projection(y, freqs, grid);

  Eigen::VectorXcd yv(m);
  for (int q = 0; q < m; ++q) yv(q) = y[q];
  const Eigen::MatrixXcd r = yv * yv.adjoint();
  const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> eig(r);
  // Eigenvalues ascend; the last column spans the signal subspace.
  const Eigen::MatrixXcd un = eig.eigenvectors().leftCols(m - 1);
  for (std::size_t k = 0; k < grid.size(); ++k) {
    const CVector a = distance_steering(freqs, grid.at(k));
    Eigen::VectorXcd av(m);
    for (int q = 0; q < m; ++q) av(q) = a[q];
    const double ref = (un.adjoint() * av).squaredNorm();
    EXPECT_NEAR(proj[k], ref, 1e-10 * ref) << k;
  }
}

TEST(Music, SpectrumClampedOnExactSteeringVector) {
  const auto freqs = rel_freqs(61, 30e3);
  const MusicGrid grid{200, 300, 0.1};
  const std::size_t k0 = 437;
  const CVector y = distance_steering(freqs, grid.at(k0));
  const auto spec = music_spectrum(y, freqs, grid);
  EXPECT_EQ(spec[k0], kMusicMaxSpectrum);
  for (double v : spec) EXPECT_LE(v, kMusicMaxSpectrum);
}

TEST(Music, CoarseToFineSearchIsExact) {
  const auto freqs = rel_freqs(61, 30e3);
  const MusicGrid grid{200, 800, 0.1};
  std::mt19937_64 rng(8);
  std::normal_distribution<double> n01;
  std::uniform_real_distribution<double> ur(210, 790);
  for (int t = 0; t < 50; ++t) {
    CVector y = distance_steering(freqs, ur(rng));
    const double noise = t < 25 ? 0.05 : 2.0;
    for (auto& v : y) v += noise * cplx(n01(rng), n01(rng));
    const auto proj = music_projection(y, freqs, grid);
    const std::size_t ref = std::min_element(proj.begin(), proj.end()) - proj.begin();
    const MusicPeak peak = music_grid_search(y, freqs, grid);
    // Equal argmin value; the index matches unless two grid points tie.
    EXPECT_NEAR(proj[peak.index], proj[ref], 1e-9);
    EXPECT_NEAR(peak.proj, proj[peak.index], 1e-9);
  }
}

TEST(Music, ZeroSubbandThrows) {
  const auto freqs = rel_freqs(5, 30e3);
  const CVector y(5, cplx(0, 0));
  EXPECT_THROW(music_projection(y, freqs, MusicGrid{}), Error);
}

TEST(Music, NoiselessDistanceWithinGridStep) {
  const ScenarioConfig cfg = quiet_config();
  const Deployment dep(cfg);
  Rng rng(31);
  for (int i = 0; i < 40; ++i) {
    const Position2D p = sample_target(cfg, rng);
    for (int rx = 1; rx <= 2; ++rx) {
      const RxSignal s = synthesize_received(p, dep.link(rx), cfg, dep.rx_pta(rx), dep.tx_beam, cfg.noise, 0);
      const LinkEstimate e = estimate_link(s, dep);
      EXPECT_LT(std::abs(e.d_hat - measurement_model(p, dep.link(rx)).d), cfg.music_grid.step);
    }
  }
}

TEST(Music, BandEdgeSubbandIsClamped) {
  EXPECT_EQ(subband_start(3, 61, 3276), 0);
  EXPECT_EQ(subband_start(3274, 61, 3276), 3276 - 61);
  EXPECT_EQ(subband_start(1000, 61, 3276), 970);
  const auto freqs = rel_freqs(3276, 30e3);
  CVector y(3276);
  const double r0 = 412.34;
  for (int m = 0; m < 3276; ++m) {
    y[m] = std::polar(m < 30 ? 1.0 : 1e-3, -kTwoPi * freqs[m] * r0 / kSpeedOfLight);
  }
  const double d = estimate_bistatic_distance(y, 0, 61, 30e3, MusicGrid{200, 800, 0.1});
  EXPECT_TRUE(std::isfinite(d));
  EXPECT_NEAR(d, r0, 0.1);
}

TEST(Music, GridExcludingTruthReturnsBoundary) {
  const auto freqs = rel_freqs(61, 30e3);
  const CVector y = distance_steering(freqs, 180.0);
  EXPECT_DOUBLE_EQ(estimate_bistatic_distance(y, 30, 61, 30e3, MusicGrid{200, 800, 0.1}), 200.0);
}

TEST(Oracle, ExactAndPerturbed) {
  const ScenarioConfig cfg;
  const LinkGeometry g = cfg.link(1);
  const Position2D p{90, 20};
  const LinkEstimate e = oracle_link_estimate(p, g, {0, 0}, 1);
  EXPECT_DOUBLE_EQ(e.d_hat, measurement_model(p, g).d);
  EXPECT_TRUE(e.valid);
  const LinkEstimate a = oracle_link_estimate(p, g, {1, 0.01}, 5), b = oracle_link_estimate(p, g, {1, 0.01}, 5);
  EXPECT_EQ(a.d_hat, b.d_hat);
  EXPECT_NE(a.d_hat, e.d_hat);
}

TEST(Calibration, DeterministicAndFloored) {
  const Deployment dep{ScenarioConfig{}};
  const NoiseSigmas a = calibrate_sigmas(dep, 1, 100, 3), b = calibrate_sigmas(dep, 1, 100, 3);
  EXPECT_EQ(a.sigma_d, b.sigma_d);
  EXPECT_EQ(a.sigma_theta, b.sigma_theta);
  EXPECT_GE(a.sigma_d, dep.cfg.music_grid.step / std::sqrt(12.0));
  EXPECT_GE(a.sigma_theta, mean_beam_spacing(dep.rx_pta(1)) / std::sqrt(12.0));
  EXPECT_THROW(calibrate_sigmas(dep, 1, 50, 3), Error);
}

TEST(Calibration, NoiselessApproachesQuantizationFloors) {
  const Deployment dep(quiet_config());
  const NoiseSigmas s = calibrate_sigmas(dep, 2, 200, 3);
  EXPECT_DOUBLE_EQ(s.sigma_d, dep.cfg.music_grid.step / std::sqrt(12.0));
  EXPECT_LT(s.sigma_theta, 2.0 * mean_beam_spacing(dep.rx_pta(2)) / std::sqrt(12.0));
}
