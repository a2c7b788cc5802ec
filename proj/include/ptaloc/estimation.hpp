#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <limits>
#include <span>
#include <vector>

#include "ptaloc/beamforming.hpp"
#include "ptaloc/channel.hpp"
#include "ptaloc/deployment.hpp"
#include "ptaloc/geometry.hpp"
#include "ptaloc/random.hpp"

namespace ptaloc {

struct LinkEstimate {
  double theta_hat = 0.0;  // global
  double d_hat = 0.0;      // meters
  int rx_index = 1;
  int peak_index = 0;
  NoiseSigmas sigmas;
  bool valid = false;  // d_hat exceeds the Tx-Rx baseline
};

/// argmax_m |y_m|^2, lowest index on ties.
inline int detect_peak_subcarrier(std::span<const cplx> y) {
  int best = 0;
  double best_power = -1.0;
  for (std::size_t m = 0; m < y.size(); ++m) {
    const double p = std::norm(y[m]);
    if (p > best_power) best_power = p, best = static_cast<int>(m);
  }
  return best;
}

inline double estimate_aoa(std::span<const cplx> y, const PtaConfig& pta, double boresight) {
  return wrap_angle(subcarrier_to_angle(detect_peak_subcarrier(y), pta) + boresight);
}

inline constexpr double kMusicMaxSpectrum = 1e12;
inline constexpr double kZeroSignalEnergy = 1e-300;

namespace detail {

inline double subband_energy(std::span<const cplx> y_sub) {
  double energy = 0.0;
  for (const auto& v : y_sub) energy += std::norm(v);
  if (!(energy > kZeroSignalEnergy)) throw Error(Errc::zero_signal, "sub-band signal has no energy");
  return energy;
}

/// |y^H a(r)|^2 / ||y||^2 at grid indices first, first + stride, ...
inline std::vector<double> normalized_correlation(std::span<const cplx> y_sub, std::span<const double> rel_freqs,
                                                  const MusicGrid& grid, double energy, std::size_t first,
                                                  std::size_t count, std::size_t stride) {
  std::vector<cplx> corr(count);
  for (std::size_t q = 0; q < y_sub.size(); ++q) {
    const double w = -kTwoPi * rel_freqs[q] / kSpeedOfLight;
    cplx z = std::polar(1.0, w * grid.at(first));
    const cplx step = std::polar(1.0, w * grid.step * static_cast<double>(stride));
    const cplx yc = std::conj(y_sub[q]);
    for (std::size_t k = 0; k < count; ++k, z *= step) corr[k] += yc * z;
  }
  std::vector<double> g(count);
  for (std::size_t k = 0; k < count; ++k) g[k] = std::norm(corr[k]) / energy;
  return g;
}

}  // namespace detail

/// Noise-subspace projection ||U_n^H a(r)||^2 over the grid for the rank-1
/// pseudo-covariance y y^H. U_n spans the complement of y, hence
/// ||U_n^H a||^2 = ||a||^2 - |y^H a|^2 / ||y||^2.
inline std::vector<double> music_projection(std::span<const cplx> y_sub, std::span<const double> rel_freqs,
                                            const MusicGrid& grid) {
  const double energy = detail::subband_energy(y_sub);
  std::vector<double> proj = detail::normalized_correlation(y_sub, rel_freqs, grid, energy, 0, grid.size(), 1);
  const double a_norm2 = static_cast<double>(y_sub.size());
  for (double& v : proj) v = a_norm2 - v;
  return proj;
}

struct MusicPeak {
  std::size_t index = 0;
  double proj_prev = 0.0;  // projection at index - 1 (NaN at the grid start)
  double proj = 0.0;
  double proj_next = 0.0;  // projection at index + 1 (NaN at the grid end)
};

/// Exact grid minimizer of the projection, found on a coarse sub-lattice
/// first. The correlation is a trigonometric polynomial whose curvature is
/// bounded by M * Omega^2 (Omega the sub-band's angular frequency span), so
/// a coarse interval can only hold a better fine point if one of its
/// endpoints is within M Omega^2 h^2 / 8 of the coarse best; every such
/// interval is then searched on the fine grid.
inline MusicPeak music_grid_search(std::span<const cplx> y_sub, std::span<const double> rel_freqs,
                                   const MusicGrid& grid, std::size_t stride = 10) {
  const double energy = detail::subband_energy(y_sub);
  const std::size_t k_count = grid.size();
  const double a_norm2 = static_cast<double>(y_sub.size());
  stride = std::max<std::size_t>(1, std::min(stride, k_count - 1));

  const std::size_t n_coarse = (k_count - 1) / stride + 1;
  std::vector<double> coarse = detail::normalized_correlation(y_sub, rel_freqs, grid, energy, 0, n_coarse, stride);
  std::vector<std::size_t> coarse_idx(n_coarse);
  for (std::size_t i = 0; i < n_coarse; ++i) coarse_idx[i] = i * stride;
  if (coarse_idx.back() != k_count - 1) {
    coarse_idx.push_back(k_count - 1);
    coarse.push_back(detail::normalized_correlation(y_sub, rel_freqs, grid, energy, k_count - 1, 1, 1)[0]);
  }

  const auto [f_lo, f_hi] = std::minmax_element(rel_freqs.begin(), rel_freqs.end());
  const double omega = kTwoPi * (*f_hi - *f_lo) / kSpeedOfLight;
  const double h = grid.step * static_cast<double>(stride);
  const double slack = a_norm2 * omega * omega * h * h / 8.0 + 1e-12 * a_norm2;
  const double best_coarse = *std::max_element(coarse.begin(), coarse.end());

  std::size_t best = coarse_idx[0];
  double best_g = -1.0;
  auto consider = [&](std::size_t k, double g) {
    if (g > best_g || (g == best_g && k < best)) best_g = g, best = k;
  };
  for (std::size_t i = 0; i < coarse_idx.size(); ++i) consider(coarse_idx[i], coarse[i]);
  for (std::size_t i = 0; i + 1 < coarse_idx.size(); ++i) {
    if (std::max(coarse[i], coarse[i + 1]) + slack < best_coarse) continue;
    const std::size_t first = coarse_idx[i] + 1;
    const std::size_t count = coarse_idx[i + 1] - first;
    if (count == 0) continue;
    const auto fine = detail::normalized_correlation(y_sub, rel_freqs, grid, energy, first, count, 1);
    for (std::size_t k = 0; k < count; ++k) consider(first + k, fine[k]);
  }

  MusicPeak peak;
  peak.index = best;
  peak.proj = a_norm2 - best_g;
  const double nan = std::numeric_limits<double>::quiet_NaN();
  auto proj_at = [&](std::size_t k) {
    return a_norm2 - detail::normalized_correlation(y_sub, rel_freqs, grid, energy, k, 1, 1)[0];
  };
  peak.proj_prev = best > 0 ? proj_at(best - 1) : nan;
  peak.proj_next = best + 1 < k_count ? proj_at(best + 1) : nan;
  return peak;
}

/// MUSIC pseudo-spectrum 1/||U_n^H a(r)||^2, clamped to kMusicMaxSpectrum
/// where the steering vector lies in the signal subspace.
inline std::vector<double> music_spectrum(std::span<const cplx> y_sub, std::span<const double> rel_freqs,
                                          const MusicGrid& grid) {
  std::vector<double> p = music_projection(y_sub, rel_freqs, grid);
  for (double& v : p) v = v > 1.0 / kMusicMaxSpectrum ? 1.0 / v : kMusicMaxSpectrum;
  return p;
}

/// First subcarrier of the M-wide sub-band centered on `peak`, shifted
/// inward at the band edges.
inline int subband_start(int peak, int subband, int n_subcarriers) {
  return std::clamp(peak - subband / 2, 0, n_subcarriers - subband);
}

/// Bistatic sum from the sub-band around `peak`: grid argmax of the MUSIC
/// spectrum, optionally refined by a parabola through the projection values
/// of the peak triple.
inline double estimate_bistatic_distance(std::span<const cplx> y, int peak, int subband, double subcarrier_spacing,
                                         const MusicGrid& grid, bool refine = true) {
  const int start = subband_start(peak, subband, static_cast<int>(y.size()));
  std::vector<double> rel_freqs(subband);
  for (int q = 0; q < subband; ++q) rel_freqs[q] = q * subcarrier_spacing;
  const MusicPeak best = music_grid_search(y.subspan(start, subband), rel_freqs, grid);
  double r = grid.at(best.index);
  if (refine && std::isfinite(best.proj_prev) && std::isfinite(best.proj_next)) {
    const double curv = best.proj_prev - 2.0 * best.proj + best.proj_next;
    if (curv > 0.0) r += grid.step * std::clamp(0.5 * (best.proj_prev - best.proj_next) / curv, -0.5, 0.5);
  }
  return r;
}

/// Mean angular distance between adjacent rainbow beams over the sweep.
inline double mean_beam_spacing(const PtaConfig& pta) {
  return std::abs(pta.theta_end - pta.theta_start) / pta.n_subcarriers;
}

inline LinkEstimate estimate_link(const RxSignal& rx, const Deployment& dep, const NoiseSigmas& sigmas = {}) {
  const ScenarioConfig& cfg = dep.cfg;
  const PtaConfig& pta = dep.rx_pta(rx.rx_index);
  LinkEstimate est;
  est.rx_index = rx.rx_index;
  est.sigmas = sigmas;
  est.peak_index = detect_peak_subcarrier(rx.y);
  est.theta_hat = wrap_angle(subcarrier_to_angle(est.peak_index, pta) + cfg.rx_boresight(rx.rx_index));
  est.d_hat = estimate_bistatic_distance(rx.y, est.peak_index, cfg.music_subband, pta.subcarrier_spacing,
                                         cfg.music_grid, cfg.parabolic_refinement);
  est.valid = est.d_hat > dep.link(rx.rx_index).baseline();
  return est;
}

/// Exact measurements plus optional Gaussian perturbation; used where the
/// signal chain is bypassed.
inline LinkEstimate oracle_link_estimate(Position2D p, const LinkGeometry& link, const NoiseSigmas& perturb,
                                         std::uint64_t seed, const NoiseSigmas& sigmas = {}) {
  const Measurement z = measurement_model(p, link);
  LinkEstimate est;
  est.rx_index = link.rx_index;
  est.sigmas = sigmas;
  est.d_hat = z.d;
  est.theta_hat = z.theta;
  if (perturb.sigma_d > 0.0 || perturb.sigma_theta > 0.0) {
    Rng rng(seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    est.d_hat += perturb.sigma_d * gauss(rng);
    est.theta_hat = wrap_angle(est.theta_hat + perturb.sigma_theta * gauss(rng));
  }
  est.valid = est.d_hat > link.baseline();
  return est;
}

/// Per-link estimation error statistics over uniform ROI targets. The
/// standard deviations are floored at the quantization limits of the
/// subcarrier grid and of the MUSIC range grid.
inline NoiseSigmas calibrate_sigmas(const Deployment& dep, int rx_index, int n_cal, std::uint64_t seed) {
  if (n_cal < 100) throw Error(Errc::invalid_config, "calibration needs at least 100 draws");
  const LinkGeometry link = dep.link(rx_index);
  double sum_d = 0.0, sum_d2 = 0.0, sum_t = 0.0, sum_t2 = 0.0;
  for (int i = 0; i < n_cal; ++i) {
    const std::uint64_t s = derive_seed(seed, static_cast<std::uint64_t>(i));
    Rng target_rng(substream(s, 0));
    const Position2D p = sample_target(dep.cfg, target_rng);
    const RxSignal rx = synthesize_received(p, link, dep.cfg, dep.rx_pta(rx_index), dep.tx_beam, dep.cfg.noise,
                                            substream(s, static_cast<std::uint64_t>(rx_index)));
    const LinkEstimate est = estimate_link(rx, dep);
    const Measurement z = measurement_model(p, link);
    const double ed = est.d_hat - z.d;
    const double et = wrap_angle(est.theta_hat - z.theta);
    sum_d += ed, sum_d2 += ed * ed, sum_t += et, sum_t2 += et * et;
  }
  const double n = n_cal;
  auto sample_sd = [n](double s, double s2) { return std::sqrt(std::max(0.0, (s2 - s * s / n) / (n - 1.0))); };
  NoiseSigmas out;
  out.sigma_d = std::max(sample_sd(sum_d, sum_d2), dep.cfg.music_grid.step / std::sqrt(12.0));
  out.sigma_theta = std::max(sample_sd(sum_t, sum_t2), mean_beam_spacing(dep.rx_pta(rx_index)) / std::sqrt(12.0));
  return out;
}

}  // namespace ptaloc
