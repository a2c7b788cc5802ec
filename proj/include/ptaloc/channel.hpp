#pragma once

#include <cmath>
#include <complex>
#include <cstdint>
#include <random>
#include <vector>

#include "ptaloc/beamforming.hpp"
#include "ptaloc/geometry.hpp"
#include "ptaloc/random.hpp"
#include "ptaloc/scenario.hpp"

namespace ptaloc {

/// Beamformed subcarrier samples of one receiver for one trial.
struct RxSignal {
  CVector y;
  int rx_index = 1;
  Position2D p_true;  // simulation label only
  std::uint64_t seed = 0;
};

struct ChannelParams {
  double beta = 0.0;  // amplitude path gain
  double tau = 0.0;   // bistatic delay, seconds
  double aoa = 0.0;   // global, at the receiver
  double aod = 0.0;   // global, at the transmitter
};

inline double path_gain(double r_tx, double r_rx, double wavelength, double rcs) {
  if (!(r_tx > 0.0) || !(r_rx > 0.0)) throw Error(Errc::degenerate_geometry, "nonpositive range in path gain");
  const double four_pi_cubed = std::pow(4.0 * kPi, 3);
  return std::sqrt(wavelength * wavelength * rcs / (four_pi_cubed * r_tx * r_tx * r_rx * r_rx));
}

inline ChannelParams link_channel_params(Position2D p, const LinkGeometry& link, const ScenarioConfig& cfg) {
  const auto [r_tx, r_rx] = bistatic_distances(p, link);
  const Measurement z = measurement_model(p, link);
  if (r_tx == 0.0) throw Error(Errc::degenerate_geometry, "AoD undefined: target on the transmitter");
  ChannelParams cp;
  cp.beta = path_gain(r_tx, r_rx, cfg.wavelength(), cfg.rcs_m2);
  cp.tau = z.d / kSpeedOfLight;
  cp.aoa = z.theta;
  cp.aod = std::atan2(p.y - link.p_tx.y, p.x - link.p_tx.x);
  return cp;
}

/// Per-subcarrier complex noise variance (watts) of the thermal model.
inline double noise_variance_per_subcarrier(const NoiseModel& noise, double delta_f) {
  const double dbm = noise.psd_dbm_per_hz + 10.0 * std::log10(delta_f) + noise.noise_figure_db;
  return std::pow(10.0, (dbm - 30.0) / 10.0);
}

/// Receive-array response w_m^H a_r(f_m, theta) of one subcarrier. The
/// per-element phase is affine in the element index, so the sum is a
/// Dirichlet kernel.
inline cplx rx_beam_response(int m, const PtaConfig& pta, double theta_local) {
  const double f = pta.subcarrier_frequency(m);
  const double df = f - pta.f0;
  const double k = kTwoPi * f * std::sin(theta_local) / kSpeedOfLight;
  const int n_el = pta.n_elements;
  // phase of conj(w_n) * a_n
  auto phase = [&](int n) {
    return kTwoPi * (pta.phase_cycles[n] + df * pta.delays[n]) + k * element_offset(n, n_el, pta.spacing);
  };
  const double p0 = phase(0);
  const double half_step = 0.5 * (phase(1) - p0);
  const double s = std::sin(half_step);
  const double ratio = std::abs(s) > 1e-9 ? std::sin(n_el * half_step) / s
                                          : n_el * std::cos(n_el * half_step) / std::cos(half_step);
  return ratio / std::sqrt(static_cast<double>(n_el)) * std::polar(1.0, p0 + (n_el - 1) * half_step);
}

namespace detail {

/// sum_n v_n z0 step^n in plain real arithmetic; this loop dominates
/// signal synthesis.
inline cplx weighted_phasor_sum(const CVector& v, cplx z0, cplx step) {
  double zr = z0.real(), zi = z0.imag(), acc_r = 0.0, acc_i = 0.0;
  const double sr = step.real(), si = step.imag();
  for (const auto& w : v) {
    const double vr = w.real(), vi = w.imag();
    acc_r += zr * vr - zi * vi;
    acc_i += zr * vi + zi * vr;
    const double nr = zr * sr - zi * si;
    zi = zr * si + zi * sr;
    zr = nr;
  }
  return {acc_r, acc_i};
}

}  // namespace detail

/// Transmit-array response a_t(f, phi)^H v.
inline cplx tx_beam_response(double f, const TxBeam& beam, double phi_local, double spacing) {
  const int n_el = static_cast<int>(beam.v.size());
  const double k = kTwoPi * f * std::sin(phi_local) / kSpeedOfLight;
  return detail::weighted_phasor_sum(beam.v, std::polar(1.0, -k * element_offset(0, n_el, spacing)),
                                     std::polar(1.0, -k * spacing));
}

namespace detail {

/// Fractional part of a*b in cycles, in [-0.5, 0.5]. The rounding error of
/// the product is recovered with an fma, so large cycle counts keep their
/// sub-ulp phase.
inline double frac_product(double a, double b) {
  const double c = a * b;
  const double err = std::fma(a, b, -c);
  const double r = c - std::round(c);
  return r + err;
}

/// Delay phase of subcarrier m in cycles, reduced: f_m tau with
/// f_m = f0 + m df split so that neither part loses the fraction.
inline double delay_cycles(int m, const PtaConfig& pta, double tau) {
  const double base = frac_product(pta.f0, tau);
  const double off = frac_product(static_cast<double>(m) * pta.subcarrier_spacing, tau);
  const double c = base + off;
  return c - std::round(c);
}

}  // namespace detail

/// Noiseless received sample of subcarrier m via the rank-1 channel structure.
inline cplx noiseless_sample(int m, const ChannelParams& cp, const ScenarioConfig& cfg, const PtaConfig& pta,
                             const TxBeam& beam, double theta_local, double phi_local, double pilot) {
  const double f = pta.subcarrier_frequency(m);
  const cplx delay = std::polar(1.0, -kTwoPi * detail::delay_cycles(m, pta, cp.tau));
  return std::sqrt(cfg.tx_power_watts()) * cp.beta * delay * rx_beam_response(m, pta, theta_local) *
         tx_beam_response(f, beam, phi_local, cfg.element_spacing) * pilot;
}

/// y_m = sqrt(P) beta e^{-j2pi f_m tau} (w_m^H a_r)(a_t^H v) s_m + n_m.
/// With several symbols per trial the pilot is repeated and the received
/// symbols are coherently averaged.
inline RxSignal synthesize_received(Position2D p, const LinkGeometry& link, const ScenarioConfig& cfg,
                                    const PtaConfig& pta, const TxBeam& beam, const NoiseModel& noise,
                                    std::uint64_t seed) {
  const ChannelParams cp = link_channel_params(p, link, cfg);
  const double theta_local = wrap_angle(cp.aoa - cfg.rx_boresight(link.rx_index));
  const double phi_local = wrap_angle(cp.aod - cfg.boresight_tx);
  const int n_c = pta.n_subcarriers;
  const double pilot = std::sqrt(1.0 / n_c);

  RxSignal out;
  out.rx_index = link.rx_index;
  out.p_true = p;
  out.seed = seed;
  out.y.resize(n_c);
  if (cp.beta > 0.0) {
    // Every phase below is affine in m, so the per-subcarrier phasors advance
    // geometrically; they are re-anchored exactly every kAnchor subcarriers
    // to bound rounding drift.
    constexpr int kAnchor = 128;
    const double amp = std::sqrt(cfg.tx_power_watts()) * cp.beta * pilot;
    const int n_el = cfg.n_elements;
    const double x0 = element_offset(0, n_el, cfg.element_spacing);
    const double u_tx = std::sin(phi_local) / kSpeedOfLight;
    auto reduced = [](double cycles) { return kTwoPi * (cycles - std::round(cycles)); };
    // Cycles of each phasor at subcarrier m (sign included) and their
    // per-subcarrier increments, taken analytically rather than by
    // differencing two large cycle counts.
    auto tx0_cycles = [&](int m) { return -pta.subcarrier_frequency(m) * u_tx * x0; };
    auto tx_step_cycles = [&](int m) { return -pta.subcarrier_frequency(m) * u_tx * cfg.element_spacing; };
    const double df = pta.subcarrier_spacing;
    const cplx inc_delay = std::polar(1.0, -kTwoPi * detail::frac_product(df, cp.tau));
    const cplx inc_tx0 = std::polar(1.0, reduced(-df * u_tx * x0));
    const cplx inc_tx_step = std::polar(1.0, reduced(-df * u_tx * cfg.element_spacing));
    cplx delay, tx0, tx_step;
    for (int m = 0; m < n_c; ++m) {
      if (m % kAnchor == 0) {
        delay = std::polar(1.0, -kTwoPi * detail::delay_cycles(m, pta, cp.tau));
        tx0 = std::polar(1.0, reduced(tx0_cycles(m)));
        tx_step = std::polar(1.0, reduced(tx_step_cycles(m)));
      }
      out.y[m] = amp * delay * rx_beam_response(m, pta, theta_local) *
                 detail::weighted_phasor_sum(beam.v, tx0, tx_step);
      delay *= inc_delay, tx0 *= inc_tx0, tx_step *= inc_tx_step;
    }
  }
  if (noise.enabled) {
    Rng rng(seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    const int symbols = cfg.symbols_per_trial;
    const double sd = std::sqrt(noise_variance_per_subcarrier(noise, pta.subcarrier_spacing) / 2.0);
    for (int m = 0; m < n_c; ++m) {
      cplx acc{};
      for (int s = 0; s < symbols; ++s) {
        const double re = gauss(rng);
        const double im = gauss(rng);
        acc += cplx(re, im);
      }
      out.y[m] += sd * acc / static_cast<double>(symbols);
    }
  }
  return out;
}

}  // namespace ptaloc
