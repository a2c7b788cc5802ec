#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "ptaloc/errors.hpp"
#include "ptaloc/geometry.hpp"

namespace ptaloc {

using cplx = std::complex<double>;
using CVector = std::vector<cplx>;

/// Position of element `n` along a uniform linear array, measured from the
/// array center. The node coordinate is the array's phase center, so a
/// symmetric aperture adds no frequency-dependent delay of its own.
inline double element_offset(int n, int n_elements, double spacing) {
  return (static_cast<double>(n) - 0.5 * static_cast<double>(n_elements - 1)) * spacing;
}

/// Phase-shifter/true-time-delay settings of a rainbow receive array. Angles
/// are local to the array boresight.
struct PtaConfig {
  double theta_start = 0.0;
  double theta_end = 0.0;
  double f0 = 0.0;
  double f_high = 0.0;
  double bandwidth = 0.0;
  int n_elements = 0;
  double spacing = 0.0;
  int n_subcarriers = 0;
  double subcarrier_spacing = 0.0;
  std::vector<double> phase_cycles;  // phi_n
  std::vector<double> delays;        // t_n, seconds, may be negative

  double subcarrier_frequency(int m) const { return f0 + m * subcarrier_spacing; }

  /// Delays shifted by a common offset so the smallest is zero. A common
  /// delay only adds a per-subcarrier global phase.
  std::vector<double> hardware_delays() const {
    std::vector<double> out(delays);
    const double lo = *std::min_element(out.begin(), out.end());
    for (double& t : out) t -= lo;
    return out;
  }
};

inline PtaConfig make_pta_config(double theta_start, double theta_end, double f0, double bandwidth, int n_elements,
                                 double spacing, int n_subcarriers) {
  if (theta_start == theta_end) throw Error(Errc::invalid_sweep, "degenerate rainbow: start equals end");
  if (!(std::abs(theta_start) < kPi / 2) || !(std::abs(theta_end) < kPi / 2)) {
    throw Error(Errc::invalid_sweep, "sweep endpoints must be inside (-pi/2, pi/2)");
  }
  if (!(bandwidth > 0.0) || n_elements < 2 || n_subcarriers < 1 || !(f0 > 0.0)) {
    throw Error(Errc::invalid_sweep, "bad array or band parameters");
  }
  PtaConfig cfg;
  cfg.theta_start = theta_start;
  cfg.theta_end = theta_end;
  cfg.f0 = f0;
  cfg.bandwidth = bandwidth;
  cfg.f_high = f0 + bandwidth;
  cfg.n_elements = n_elements;
  cfg.spacing = spacing;
  cfg.n_subcarriers = n_subcarriers;
  cfg.subcarrier_spacing = bandwidth / n_subcarriers;
  cfg.phase_cycles.resize(n_elements);
  cfg.delays.resize(n_elements);
  const double s0 = std::sin(theta_start), s1 = std::sin(theta_end);
  for (int n = 0; n < n_elements; ++n) {
    const double x = element_offset(n, n_elements, spacing);
    cfg.phase_cycles[n] = -f0 * x * s0 / kSpeedOfLight;
    cfg.delays[n] = x / (bandwidth * kSpeedOfLight) * (f0 * s0 - cfg.f_high * s1);
  }
  return cfg;
}

inline CVector rx_weight_vector(int m, const PtaConfig& cfg) {
  const double df = cfg.subcarrier_frequency(m) - cfg.f0;
  const double norm = 1.0 / std::sqrt(static_cast<double>(cfg.n_elements));
  CVector w(cfg.n_elements);
  for (int n = 0; n < cfg.n_elements; ++n) {
    w[n] = std::polar(norm, -kTwoPi * (cfg.phase_cycles[n] + df * cfg.delays[n]));
  }
  return w;
}

/// Local main-lobe direction of a frequency under the rainbow map.
inline double frequency_to_angle(double f, const PtaConfig& cfg) {
  const double s = (cfg.f0 * (cfg.f_high - f) * std::sin(cfg.theta_start) +
                    cfg.f_high * (f - cfg.f0) * std::sin(cfg.theta_end)) /
                   (cfg.bandwidth * f);
  return std::asin(std::clamp(s, -1.0, 1.0));
}

/// m may equal n_subcarriers, which addresses f_high itself.
inline double subcarrier_to_angle(int m, const PtaConfig& cfg) {
  return frequency_to_angle(cfg.subcarrier_frequency(m), cfg);
}

/// Frequency whose rainbow beam points at local angle `theta`.
inline double angle_to_frequency(double theta, const PtaConfig& cfg) {
  const double s0 = std::sin(cfg.theta_start), s1 = std::sin(cfg.theta_end);
  return cfg.f0 * cfg.f_high * (s0 - s1) / (cfg.bandwidth * std::sin(theta) + cfg.f0 * s0 - cfg.f_high * s1);
}

/// Nearest subcarrier (in angle) to a local direction inside the sweep;
/// ties resolve to the higher index.
inline int angle_to_subcarrier(double theta, const PtaConfig& cfg) {
  const double lo = std::min(cfg.theta_start, cfg.theta_end);
  const double hi = std::max(cfg.theta_start, cfg.theta_end);
  const double tol = 1e-12;
  if (theta < lo - tol || theta > hi + tol) throw Error(Errc::out_of_sweep, "angle outside the rainbow sweep");
  const double m_cont = (angle_to_frequency(theta, cfg) - cfg.f0) / cfg.subcarrier_spacing;
  const int last = cfg.n_subcarriers - 1;
  const int below = std::clamp(static_cast<int>(std::floor(m_cont)), 0, last);
  const int above = std::clamp(below + 1, 0, last);
  const double e_below = std::abs(subcarrier_to_angle(below, cfg) - theta);
  const double e_above = std::abs(subcarrier_to_angle(above, cfg) - theta);
  return e_above <= e_below ? above : below;
}

/// Local angular distance between the beams of subcarriers m and m+1.
inline double inter_beam_spacing(int m, const PtaConfig& cfg) {
  return std::abs(subcarrier_to_angle(m + 1, cfg) - subcarrier_to_angle(m, cfg));
}

inline CVector steering_vector(double f, double angle, int n_elements, double spacing) {
  CVector a(n_elements);
  const double k = kTwoPi * f * std::sin(angle) / kSpeedOfLight;
  for (int n = 0; n < n_elements; ++n) a[n] = std::polar(1.0, k * element_offset(n, n_elements, spacing));
  return a;
}

/// a^H b
inline cplx inner(const CVector& a, const CVector& b) {
  cplx acc{};
  for (std::size_t n = 0; n < a.size(); ++n) acc += std::conj(a[n]) * b[n];
  return acc;
}

struct TxBeam {
  CVector v;
  double sector_lo = 0.0;
  double sector_hi = 0.0;
};

struct BeamSynthesisOptions {
  double carrier_hz = 2.6e9;
  double spacing = kSpeedOfLight / (2.0 * 2.6e9);
  double max_ripple_db = 3.0;
  double min_sidelobe_db = 10.0;
  int max_iters = 200;
  double grid_step = deg2rad(0.1);
};

struct BeamPatternStats {
  double ripple_db = 0.0;        // max/min in-sector gain
  double sidelobe_db = 0.0;      // sector average over worst out-of-sector gain
};

/// Gain |v^H a_t(f, theta)|^2.
inline double beam_gain(const CVector& v, double f, double theta, double spacing) {
  const CVector a = steering_vector(f, theta, static_cast<int>(v.size()), spacing);
  return std::norm(inner(a, v));
}

/// Null-to-null main-lobe width of the uniform aperture, in sine space.
inline double null_to_null_width(int n_elements, double f, double spacing) {
  return 2.0 * kSpeedOfLight / (f * n_elements * spacing);
}

inline BeamPatternStats evaluate_tx_beam(const TxBeam& beam, const BeamSynthesisOptions& opt) {
  const double f = opt.carrier_hz;
  const double guard = null_to_null_width(static_cast<int>(beam.v.size()), f, opt.spacing);
  const double u_lo = std::sin(beam.sector_lo) - guard, u_hi = std::sin(beam.sector_hi) + guard;
  double g_min = INFINITY, g_max = 0.0, g_sum = 0.0, out_max = 0.0;
  int in_count = 0;
  const int steps = static_cast<int>(std::floor(kPi / opt.grid_step));
  for (int k = 1; k < steps; ++k) {
    const double theta = -kPi / 2 + k * opt.grid_step;
    const double g = beam_gain(beam.v, f, theta, opt.spacing);
    const double u = std::sin(theta);
    if (theta >= beam.sector_lo && theta <= beam.sector_hi) {
      g_min = std::min(g_min, g);
      g_max = std::max(g_max, g);
      g_sum += g;
      ++in_count;
    } else if (u < u_lo || u > u_hi) {
      out_max = std::max(out_max, g);
    }
  }
  BeamPatternStats s;
  s.ripple_db = 10.0 * std::log10(g_max / g_min);
  const double avg = g_sum / std::max(in_count, 1);
  s.sidelobe_db = out_max > 0.0 ? 10.0 * std::log10(avg / out_max) : INFINITY;
  return s;
}

/// Flat-top transmit beam over [lo, hi] (local angles). Iterative
/// least-squares pattern fitting with alternating projection of the achieved
/// pattern onto the ripple and sidelobe masks. Weights are kept real and
/// symmetric about the array center, so the pattern is real and carries no
/// frequency-dependent group delay.
inline TxBeam tx_wide_beam(int n_elements, std::pair<double, double> sector, const BeamSynthesisOptions& opt = {}) {
  const auto [lo, hi] = sector;
  if (!(hi - lo > 0.0) || !(hi - lo < kPi)) throw Error(Errc::synthesis_failed, "sector width must be in (0, pi)");
  if (n_elements < 2) throw Error(Errc::synthesis_failed, "need at least two elements");

  const int half = (n_elements + 1) / 2;
  const double k = kTwoPi * opt.carrier_hz / kSpeedOfLight;
  const double guard = 0.5 * null_to_null_width(n_elements, opt.carrier_hz, opt.spacing);
  const double u_lo = std::sin(lo), u_hi = std::sin(hi);

  // Fit grid in sine space; samples inside the guard band are don't-care.
  const int n_grid = 16 * n_elements;
  std::vector<double> u_grid;
  std::vector<int> region;  // 1 in-sector, 0 out-of-sector
  for (int g = 0; g <= n_grid; ++g) {
    const double u = -1.0 + 2.0 * g / n_grid;
    if (u >= u_lo && u <= u_hi) {
      u_grid.push_back(u), region.push_back(1);
    } else if (u < u_lo - guard || u > u_hi + guard) {
      u_grid.push_back(u), region.push_back(0);
    }
  }
  // Pattern G(u) = sum_j c_j * basis_j(u) with c the half-aperture weights.
  const Eigen::Index rows = static_cast<Eigen::Index>(u_grid.size());
  Eigen::MatrixXd basis(rows, half);
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (int j = 0; j < half; ++j) {
      const int n = n_elements - half + j;  // upper half, including the center for odd N
      const double x = element_offset(n, n_elements, opt.spacing);
      const bool center = (2 * n == n_elements - 1);
      basis(r, j) = center ? 1.0 : 2.0 * std::cos(k * x * u_grid[r]);
    }
  }
  const Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(basis);

  Eigen::VectorXd target(rows);
  for (Eigen::Index r = 0; r < rows; ++r) target(r) = region[r] ? 1.0 : 0.0;
  const double ripple_amp = std::pow(10.0, -0.5 * (opt.max_ripple_db - 1.0) / 20.0);  // ~1 dB margin
  const double side_amp = std::pow(10.0, -(opt.min_sidelobe_db + 6.0) / 20.0);

  auto to_beam = [&](const Eigen::VectorXd& c) {
    TxBeam beam{CVector(n_elements), lo, hi};
    for (int j = 0; j < half; ++j) {
      const int n = n_elements - half + j;
      beam.v[n] = c(j);
      beam.v[n_elements - 1 - n] = c(j);
    }
    double nrm = 0.0;
    for (const auto& z : beam.v) nrm += std::norm(z);
    nrm = std::sqrt(nrm);
    for (auto& z : beam.v) z /= nrm;
    return beam;
  };

  for (int it = 0; it < opt.max_iters; ++it) {
    const Eigen::VectorXd c = qr.solve(target);
    const TxBeam beam = to_beam(c);
    const BeamPatternStats stats = evaluate_tx_beam(beam, opt);
    if (stats.ripple_db < opt.max_ripple_db && stats.sidelobe_db >= opt.min_sidelobe_db) return beam;
    const Eigen::VectorXd achieved = basis * c;
    double mean_in = 0.0;
    int cnt = 0;
    for (Eigen::Index r = 0; r < rows; ++r) {
      if (region[r]) mean_in += achieved(r), ++cnt;
    }
    mean_in /= std::max(cnt, 1);
    for (Eigen::Index r = 0; r < rows; ++r) {
      const double g = achieved(r) / mean_in;
      target(r) = region[r] ? std::clamp(g, ripple_amp, 1.0 / ripple_amp) : std::clamp(g, -side_amp, side_amp);
    }
  }
  throw Error(Errc::synthesis_failed, "flat-top ripple mask not met");
}

}  // namespace ptaloc
