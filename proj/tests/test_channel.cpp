#include <gtest/gtest.h>

#include <cmath>

#include "ptaloc/channel.hpp"
#include "ptaloc/deployment.hpp"

using namespace ptaloc;

namespace {

ScenarioConfig quiet_config() {
  ScenarioConfig c;
  c.noise.enabled = false;
  return c;
}

// 64-subcarrier variant with an 8-element array so the brute-force matrix
// evaluation stays small.
ScenarioConfig small_config() {
  ScenarioConfig c = quiet_config();
  c.n_elements = 8;
  c.n_subcarriers = 64;
  c.music_subband = 31;
  return c;
}

}  // namespace

TEST(PathGain, ScalarOracle) {
  const double lambda = kSpeedOfLight / 2.6e9;
  const double ref = std::sqrt(lambda * lambda * 0.1 / (std::pow(4 * kPi, 3) * std::pow(200.0, 4)));
  EXPECT_NEAR(path_gain(200, 200, lambda, 0.1), ref, 1e-15 * ref);
  EXPECT_NEAR(ref, 2.0e-8, 0.2e-8);
}

TEST(PathGain, Homogeneity) {
  const double b = path_gain(120, 90, 0.1, 0.1);
  EXPECT_NEAR(path_gain(240, 90, 0.1, 0.1), 0.5 * b, 1e-15);
  EXPECT_EQ(path_gain(120, 90, 0.1, 0.0), 0.0);
  EXPECT_THROW(path_gain(0, 90, 0.1, 0.1), Error);
}

TEST(ChannelParams, DelayAndAngles) {
  const ScenarioConfig cfg;
  const LinkGeometry g{{0, 0}, {100, 0}, 1};
  // (50, y) with 2 sqrt(50^2 + y^2) = 150.
  const Position2D p{50, std::sqrt(75.0 * 75.0 - 50.0 * 50.0)};
  const ChannelParams cp = link_channel_params(p, g, cfg);
  EXPECT_NEAR(cp.tau, 150.0 / kSpeedOfLight, 1e-15 * cp.tau * 10);
  EXPECT_NEAR(cp.tau, 500e-9, 0.5e-9);
  EXPECT_DOUBLE_EQ(cp.aoa, measurement_model(p, g).theta);
  EXPECT_DOUBLE_EQ(cp.aod, std::atan2(p.y, p.x));
}

TEST(ChannelParams, ScalarOracleAtRandomPoints) {
  const ScenarioConfig cfg;
  const LinkGeometry g = cfg.link(2);
  Rng rng(11);
  for (int i = 0; i < 3; ++i) {
    const Position2D p = sample_target(cfg, rng);
    const double rt = std::hypot(p.x, p.y), rr = std::hypot(p.x - g.p_rx.x, p.y - g.p_rx.y);
    const double lambda = kSpeedOfLight / cfg.carrier_hz;
    const ChannelParams cp = link_channel_params(p, g, cfg);
    EXPECT_NEAR(cp.beta, std::sqrt(lambda * lambda * cfg.rcs_m2 / (std::pow(4 * kPi, 3) * rt * rt * rr * rr)),
                1e-12 * cp.beta);
    EXPECT_NEAR(cp.tau, (rt + rr) / kSpeedOfLight, 1e-15 * cp.tau * 10);
    EXPECT_NEAR(cp.aoa, std::atan2(p.y - g.p_rx.y, p.x - g.p_rx.x), 1e-15);
  }
}

TEST(Synthesis, ZeroRcsGivesZeroSignal) {
  ScenarioConfig cfg = quiet_config();
  cfg.rcs_m2 = 0.0;
  const Deployment dep(cfg);
  const RxSignal rx = synthesize_received({100, 10}, dep.link(1), cfg, dep.rx_pta(1), dep.tx_beam, cfg.noise, 1);
  for (const auto& v : rx.y) ASSERT_EQ(v, cplx(0, 0));
}

TEST(Synthesis, PeakFollowsRainbowMap) {
  const ScenarioConfig cfg = quiet_config();
  const Deployment dep(cfg);
  Rng rng(3);
  for (int i = 0; i < 20; ++i) {
    const Position2D p = sample_target(cfg, rng);
    for (int rx = 1; rx <= 2; ++rx) {
      const RxSignal s = synthesize_received(p, dep.link(rx), cfg, dep.rx_pta(rx), dep.tx_beam, cfg.noise, 0);
      const double local = wrap_angle(measurement_model(p, dep.link(rx)).theta - cfg.rx_boresight(rx));
      int peak = 0;
      for (int m = 1; m < cfg.n_subcarriers; ++m) {
        if (std::norm(s.y[m]) > std::norm(s.y[peak])) peak = m;
      }
      EXPECT_LE(std::abs(peak - angle_to_subcarrier(local, dep.rx_pta(rx))), 1);
    }
  }
}

// Every sample rebuilt from explicit weight, steering and channel-matrix
// products, y_m = sqrt(P) beta e^{-j2pi f tau} w^H (a_r a_t^H) v s.
TEST(Synthesis, MatchesBruteForceMatrixModel) {
  const ScenarioConfig cfg = small_config();
  const Deployment dep(cfg);
  for (const Position2D p : {Position2D{60, 25}, Position2D{140, -40}, Position2D{90, 80}}) {
    for (int rx = 1; rx <= 2; ++rx) {
      const LinkGeometry g = dep.link(rx);
      const PtaConfig& pta = dep.rx_pta(rx);
      const RxSignal s = synthesize_received(p, g, cfg, pta, dep.tx_beam, cfg.noise, 0);
      const ChannelParams cp = link_channel_params(p, g, cfg);
      const double th = wrap_angle(cp.aoa - cfg.rx_boresight(rx)), ph = wrap_angle(cp.aod - cfg.boresight_tx);
      const int n = cfg.n_elements;
      for (int m = 0; m < cfg.n_subcarriers; ++m) {
        const double f = pta.subcarrier_frequency(m);
        const CVector w = rx_weight_vector(m, pta);
        const CVector ar = steering_vector(f, th, n, cfg.element_spacing);
        const CVector at = steering_vector(f, ph, n, cfg.element_spacing);
        cplx acc{};
        for (int a = 0; a < n; ++a) {
          for (int b = 0; b < n; ++b) acc += std::conj(w[a]) * ar[a] * std::conj(at[b]) * dep.tx_beam.v[b];
        }
        const long double cyc = static_cast<long double>(pta.f0) * cp.tau +
                                static_cast<long double>(m) * static_cast<long double>(pta.subcarrier_spacing) * cp.tau;
        const double frac = static_cast<double>(cyc - std::roundl(cyc));
        const cplx ref = std::sqrt(cfg.tx_power_watts()) * cp.beta * std::polar(1.0, -kTwoPi * frac) * acc *
                         std::sqrt(1.0 / cfg.n_subcarriers);
        ASSERT_NEAR(std::abs(s.y[m] - ref), 0.0, 1e-12 * std::abs(ref)) << "m=" << m << " rx=" << rx;
      }
    }
  }
}

TEST(Synthesis, NoiseIsSeeded) {
  const ScenarioConfig cfg;
  const Deployment dep(cfg);
  const auto a = synthesize_received({80, 20}, dep.link(1), cfg, dep.rx_pta(1), dep.tx_beam, cfg.noise, 5);
  const auto b = synthesize_received({80, 20}, dep.link(1), cfg, dep.rx_pta(1), dep.tx_beam, cfg.noise, 5);
  const auto c = synthesize_received({80, 20}, dep.link(1), cfg, dep.rx_pta(1), dep.tx_beam, cfg.noise, 6);
  EXPECT_EQ(a.y, b.y);
  EXPECT_NE(a.y, c.y);
}

TEST(Synthesis, NoiseVarianceMatchesModel) {
  ScenarioConfig cfg;
  cfg.rcs_m2 = 0.0;
  const Deployment dep(cfg);
  const auto s = synthesize_received({80, 20}, dep.link(1), cfg, dep.rx_pta(1), dep.tx_beam, cfg.noise, 9);
  double power = 0;
  for (const auto& v : s.y) power += std::norm(v);
  power /= cfg.n_subcarriers;
  const double ref = noise_variance_per_subcarrier(cfg.noise, cfg.subcarrier_spacing_hz);
  // Mean of n exponential draws: relative sd 1/sqrt(n).
  EXPECT_NEAR(power / ref, 1.0, 4.0 / std::sqrt(cfg.n_subcarriers));
}

TEST(Noise, PerSubcarrierPower) {
  NoiseModel nm;
  const double dbm = 10 * std::log10(noise_variance_per_subcarrier(nm, 30e3)) + 30;
  EXPECT_NEAR(dbm, -129.23, 0.005);
  nm.noise_figure_db = 3.0;
  EXPECT_NEAR(noise_variance_per_subcarrier(nm, 30e3) / noise_variance_per_subcarrier(NoiseModel{}, 30e3),
              std::pow(10.0, 0.3), 1e-12);
  EXPECT_NEAR(noise_variance_per_subcarrier(NoiseModel{}, 300e3) / noise_variance_per_subcarrier(NoiseModel{}, 30e3),
              10.0, 1e-12);
}
