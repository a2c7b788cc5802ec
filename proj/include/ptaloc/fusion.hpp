#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "ptaloc/errors.hpp"
#include "ptaloc/estimation.hpp"
#include "ptaloc/geometry.hpp"
#include "ptaloc/scenario.hpp"

namespace ptaloc {

enum class Scheme { gi_pl, gdop_pl, gdop_wls, gdop_init, pf_mlp, sf_cnn };

inline constexpr std::array<Scheme, 6> kAllSchemes{Scheme::gi_pl,     Scheme::gdop_pl, Scheme::gdop_wls,
                                                   Scheme::gdop_init, Scheme::pf_mlp,  Scheme::sf_cnn};
inline constexpr std::array<Scheme, 4> kAnalyticalSchemes{Scheme::gi_pl, Scheme::gdop_pl, Scheme::gdop_wls,
                                                          Scheme::gdop_init};

inline std::string_view scheme_name(Scheme s) {
  switch (s) {
    case Scheme::gi_pl: return "GI-PL";
    case Scheme::gdop_pl: return "GDOP-PL";
    case Scheme::gdop_wls: return "GDOP-WLS";
    case Scheme::gdop_init: return "GDOP-Init";
    case Scheme::pf_mlp: return "PF-MLP";
    case Scheme::sf_cnn: return "SF-CNN";
  }
  return "?";
}

inline Scheme parse_scheme(std::string_view name) {
  for (Scheme s : kAllSchemes) {
    const std::string_view ref = scheme_name(s);
    if (ref.size() == name.size() &&
        std::equal(ref.begin(), ref.end(), name.begin(), [](char a, char b) {
          return std::tolower(static_cast<unsigned char>(a)) == std::tolower(static_cast<unsigned char>(b));
        })) {
      return s;
    }
  }
  throw Error(Errc::invalid_config, "unknown scheme '" + std::string(name) + "'");
}

inline bool is_neural(Scheme s) { return s == Scheme::pf_mlp || s == Scheme::sf_cnn; }

struct FusionResult {
  Position2D p_hat;
  Position2D p_init;
  Scheme scheme = Scheme::gdop_wls;
  int iterations = 0;
  bool converged = false;
  double cost_final = std::numeric_limits<double>::quiet_NaN();
  bool init_fallback = false;  // the scheme's own initializer failed and a substitute was used
};

using LinkEstimates = std::array<LinkEstimate, 2>;
using LinkPair = std::array<LinkGeometry, 2>;

// Stand-in GDOP (meters) for links whose normal matrix is singular, so their
// weight is tiny but positive.
inline constexpr double kGdopCap = 1e6;
// Relative size of the ellipse-ray denominator that counts as tangency.
inline constexpr double kTangentEps = 1e-9;
inline constexpr double kTanThreshold = 1e6;

/// Intersection of the bistatic ellipse for d_hat with the AoA ray.
inline Position2D per_link_geo_init(const LinkEstimate& est, const LinkGeometry& link) {
  const Position2D b = link.p_rx - link.p_tx;
  const double base2 = b.dot(b);
  if (!(est.d_hat > std::sqrt(base2))) {
    throw Error(Errc::infeasible_ellipse, "bistatic distance does not exceed the baseline");
  }
  const Position2D u{std::cos(est.theta_hat), std::sin(est.theta_hat)};
  const double den = 2.0 * (est.d_hat + b.dot(u));
  if (std::abs(den) < kTangentEps * est.d_hat) throw Error(Errc::tangent_ray, "AoA ray tangent to the ellipse");
  return link.p_rx + ((est.d_hat * est.d_hat - base2) / den) * u;
}

inline Position2D gdop_weighted_init(const std::array<Position2D, 2>& inits, const std::array<double, 2>& gdops) {
  const double w1 = 1.0 / gdops[0], w2 = 1.0 / gdops[1];
  return (1.0 / (w1 + w2)) * (w1 * inits[0] + w2 * inits[1]);
}

/// Single-link GDOP with singular geometry mapped to kGdopCap.
inline double clamped_gdop(Position2D p, const LinkGeometry& link, const NoiseSigmas& s) {
  try {
    return std::min(gdop(p, link, s), kGdopCap);
  } catch (const Error& e) {
    if (e.code() == Errc::singular_geometry || e.code() == Errc::degenerate_geometry) return kGdopCap;
    throw;
  }
}

namespace detail {

inline double cross(Position2D a, Position2D b) { return a.x * b.y - a.y * b.x; }

}  // namespace detail

/// Two-ray intersection with x from the tangent form and y from the
/// cotangent form. A coordinate whose form is ill-conditioned (|tan| or
/// |cot| above kTanThreshold, or a vanishing denominator) is instead read
/// off the better-conditioned ray through the other coordinate.
inline Position2D ray_intersection_init(const std::array<double, 2>& theta_hats,
                                        const std::array<Position2D, 2>& rx) {
  const double t1 = std::tan(theta_hats[0]), t2 = std::tan(theta_hats[1]);
  const double c1 = 1.0 / t1, c2 = 1.0 / t2;
  auto usable = [](double a, double b) {
    return std::isfinite(a) && std::isfinite(b) && std::abs(a) <= kTanThreshold && std::abs(b) <= kTanThreshold &&
           std::abs(a - b) > 1e-12 * (1.0 + std::abs(a) + std::abs(b));
  };
  const bool x_ok = usable(t1, t2);
  const bool y_ok = usable(c1, c2);
  const double x_tan = (rx[1].y - rx[0].y + rx[0].x * t1 - rx[1].x * t2) / (t1 - t2);
  const double y_cot = (rx[1].x - rx[0].x + rx[0].y * c1 - rx[1].y * c2) / (c1 - c2);
  if (x_ok && y_ok) return {x_tan, y_cot};
  if (x_ok) {
    const int i = std::abs(t1) <= std::abs(t2) ? 0 : 1;
    return {x_tan, rx[i].y + (x_tan - rx[i].x) * (i == 0 ? t1 : t2)};
  }
  if (y_ok) {
    const int i = std::abs(c1) <= std::abs(c2) ? 0 : 1;
    return {rx[i].x + (y_cot - rx[i].y) * (i == 0 ? c1 : c2), y_cot};
  }
  // Both forms degenerate: only (anti)parallel rays get here unless one ray is
  // axis-aligned in each form, which the vector form handles.
  const Position2D u1{std::cos(theta_hats[0]), std::sin(theta_hats[0])};
  const Position2D u2{std::cos(theta_hats[1]), std::sin(theta_hats[1])};
  const double den = detail::cross(u1, u2);
  if (std::abs(den) < 1e-12) throw Error(Errc::parallel_rays, "AoA rays are parallel");
  const double s = detail::cross(rx[1] - rx[0], u2) / den;
  return rx[0] + s * u1;
}

/// sum_i w_i [ (d_i - d_i(p))^2 / sd_i^2 + wrap(th_i - th_i(p))^2 / st_i^2 ]
inline double wls_cost(Position2D p, const LinkEstimates& est, const LinkPair& links,
                       const std::array<double, 2>& weights) {
  double cost = 0.0;
  for (int i = 0; i < 2; ++i) {
    const Measurement z = measurement_model(p, links[i]);
    const double rd = (est[i].d_hat - z.d) / est[i].sigmas.sigma_d;
    const double rt = wrap_angle(est[i].theta_hat - z.theta) / est[i].sigmas.sigma_theta;
    cost += weights[i] * (rd * rd + rt * rt);
  }
  return cost;
}

/// Path-loss weighted L1 cost, weights recomputed at p.
inline double pl_cost(Position2D p, const LinkEstimates& est, const LinkPair& links) {
  double num_d = 0.0, den_d = 0.0, num_t = 0.0, den_t = 0.0;
  for (int i = 0; i < 2; ++i) {
    const auto [r_tx, r_rx] = bistatic_distances(p, links[i]);
    if (!(r_tx > 0.0) || !(r_rx > 0.0)) throw Error(Errc::degenerate_geometry, "zero range in path-loss weights");
    const double alpha = 1.0 / (r_tx * r_tx * r_rx * r_rx);
    const double beta = 1.0 / (r_tx * r_tx * r_rx);
    const Measurement z = measurement_model(p, links[i]);
    num_d += alpha * std::abs(est[i].d_hat - z.d);
    den_d += alpha;
    num_t += beta * std::abs(wrap_angle(est[i].theta_hat - z.theta));
    den_t += beta;
  }
  return num_d / den_d + num_t / den_t;
}

struct SimplexResult {
  Position2D p;
  double cost = 0.0;
  int iterations = 0;
  bool converged = false;
};

/// Nelder-Mead on R^2 with standard coefficients. Points where `f` throws
/// are treated as +inf.
inline SimplexResult nelder_mead(const std::function<double(Position2D)>& f, Position2D p0,
                                 const SimplexSettings& s) {
  auto eval = [&](Position2D p) {
    try {
      const double v = f(p);
      return std::isfinite(v) ? v : std::numeric_limits<double>::infinity();
    } catch (const Error&) {
      return std::numeric_limits<double>::infinity();
    }
  };
  std::array<Position2D, 3> x{p0, p0 + Position2D{s.initial_step, 0.0}, p0 + Position2D{0.0, s.initial_step}};
  std::array<double, 3> fx{eval(x[0]), eval(x[1]), eval(x[2])};
  SimplexResult r;
  auto order = [&] {
    std::array<int, 3> idx{0, 1, 2};
    std::sort(idx.begin(), idx.end(), [&](int a, int b) { return fx[a] < fx[b]; });
    x = {x[idx[0]], x[idx[1]], x[idx[2]]};
    fx = {fx[idx[0]], fx[idx[1]], fx[idx[2]]};
  };
  auto diameter = [&] { return std::max({distance(x[0], x[1]), distance(x[0], x[2]), distance(x[1], x[2])}); };
  order();
  for (r.iterations = 0; r.iterations < s.max_iters; ++r.iterations) {
    if (diameter() < s.x_tol) {
      r.converged = true;
      break;
    }
    const Position2D c = 0.5 * (x[0] + x[1]);
    const Position2D xr = c + (c - x[2]);
    const double fr = eval(xr);
    if (fr < fx[0]) {
      const Position2D xe = c + 2.0 * (c - x[2]);
      const double fe = eval(xe);
      if (fe < fr) x[2] = xe, fx[2] = fe;
      else x[2] = xr, fx[2] = fr;
    } else if (fr < fx[1]) {
      x[2] = xr, fx[2] = fr;
    } else {
      const bool outside = fr < fx[2];
      const Position2D xc = outside ? c + 0.5 * (xr - c) : c + 0.5 * (x[2] - c);
      const double fc = eval(xc);
      if (fc < (outside ? fr : fx[2])) {
        x[2] = xc, fx[2] = fc;
      } else {
        for (int k = 1; k < 3; ++k) {
          x[k] = x[0] + 0.5 * (x[k] - x[0]);
          fx[k] = eval(x[k]);
        }
      }
    }
    order();
  }
  r.p = x[0];
  r.cost = fx[0];
  return r;
}

/// Per-link ellipse-ray points; a link whose ellipse is infeasible or whose
/// ray is tangent yields nullopt.
inline std::array<std::optional<Position2D>, 2> per_link_inits(const LinkEstimates& est, const LinkPair& links) {
  std::array<std::optional<Position2D>, 2> out;
  for (int i = 0; i < 2; ++i) {
    try {
      out[i] = per_link_geo_init(est[i], links[i]);
    } catch (const Error& e) {
      if (e.code() != Errc::infeasible_ellipse && e.code() != Errc::tangent_ray) throw;
    }
  }
  return out;
}

struct GdopInit {
  Position2D p0;
  std::array<double, 2> weights{};  // 1 / GDOP_i, zero for a link without a usable init
  bool fallback = false;            // only one link contributed
};

/// GDOP-weighted initialization. With one unusable link the other link's
/// point is taken alone; with none the two AoA rays are intersected.
inline GdopInit gdop_init(const LinkEstimates& est, const LinkPair& links) {
  const auto inits = per_link_inits(est, links);
  GdopInit g;
  if (!inits[0] && !inits[1]) {
    g.p0 = ray_intersection_init({est[0].theta_hat, est[1].theta_hat}, {links[0].p_rx, links[1].p_rx});
    g.weights = {1.0 / kGdopCap, 1.0 / kGdopCap};
    g.fallback = true;
    return g;
  }
  std::array<double, 2> gd{kGdopCap, kGdopCap};
  for (int i = 0; i < 2; ++i) {
    if (inits[i]) gd[i] = clamped_gdop(*inits[i], links[i], est[i].sigmas);
  }
  if (inits[0] && inits[1]) {
    g.p0 = gdop_weighted_init({*inits[0], *inits[1]}, gd);
    g.weights = {1.0 / gd[0], 1.0 / gd[1]};
  } else {
    const int i = inits[0] ? 0 : 1;
    g.p0 = *inits[i];
    g.weights[i] = 1.0 / gd[i];
    g.weights[1 - i] = 1.0 / kGdopCap;
    g.fallback = true;
  }
  return g;
}

inline FusionResult solve_gdop_init(const LinkEstimates& est, const LinkPair& links) {
  const GdopInit g = gdop_init(est, links);
  FusionResult r;
  r.scheme = Scheme::gdop_init;
  r.p_hat = r.p_init = g.p0;
  r.converged = true;
  r.cost_final = wls_cost(g.p0, est, links, g.weights);
  r.init_fallback = g.fallback;
  return r;
}

namespace detail {

/// Weighted, sigma-scaled residuals and their Jacobian. Throws on degenerate
/// geometry.
inline void wls_residuals(Position2D p, const LinkEstimates& est, const LinkPair& links,
                          const std::array<double, 2>& w, Eigen::Vector4d& r, Eigen::Matrix<double, 4, 2>& jac) {
  for (int i = 0; i < 2; ++i) {
    const Measurement z = measurement_model(p, links[i]);
    const Eigen::Matrix2d jg = geometric_jacobian(p, links[i]);
    const double sw = std::sqrt(w[i]);
    const double kd = sw / est[i].sigmas.sigma_d, kt = sw / est[i].sigmas.sigma_theta;
    r(2 * i) = kd * (est[i].d_hat - z.d);
    r(2 * i + 1) = kt * wrap_angle(est[i].theta_hat - z.theta);
    jac.row(2 * i) = -kd * jg.row(0);
    jac.row(2 * i + 1) = -kt * jg.row(1);
  }
}

/// Moves p radially out of the kMinRange ball of every node, where the
/// Jacobian is undefined.
inline Position2D clear_of_nodes(Position2D p, const LinkPair& links) {
  for (const Position2D node : {links[0].p_tx, links[0].p_rx, links[1].p_rx}) {
    const Position2D off = p - node;
    const double r = off.norm();
    if (r < kMinRange) p = node + (r > 0.0 ? (kMinRange * (1.0 + 1e-9) / r) * off : Position2D{kMinRange * 1.01, 0.0});
  }
  return p;
}

inline std::array<double, 2> gdop_weights_at(Position2D p, const LinkEstimates& est, const LinkPair& links) {
  return {1.0 / clamped_gdop(p, links[0], est[0].sigmas), 1.0 / clamped_gdop(p, links[1], est[1].sigmas)};
}

}  // namespace detail

/// Levenberg-Marquardt on the sigma-normalized WLS cost with Marquardt's
/// diag(J^T J) damping, started at the GDOP-weighted point.
inline FusionResult solve_gdop_wls(const LinkEstimates& est, const LinkPair& links, const SolverSettings& s) {
  const GdopInit g = gdop_init(est, links);
  FusionResult res;
  res.scheme = Scheme::gdop_wls;
  res.p_init = g.p0;
  res.init_fallback = g.fallback;

  std::array<double, 2> w = g.weights;
  Position2D p = detail::clear_of_nodes(g.p0, links);
  Eigen::Vector4d r;
  Eigen::Matrix<double, 4, 2> jac;
  detail::wls_residuals(p, est, links, w, r, jac);
  double cost = r.squaredNorm();
  double lambda = s.lm_lambda_init;

  for (res.iterations = 0; res.iterations < s.max_iters;) {
    const Eigen::Vector2d grad = jac.transpose() * r;
    if (grad.lpNorm<Eigen::Infinity>() < s.gradient_tol) {
      res.converged = true;
      break;
    }
    ++res.iterations;
    const Eigen::Matrix2d jtj = jac.transpose() * jac;
    bool accepted = false;
    while (!accepted && lambda < 1e16) {
      Eigen::Matrix2d a = jtj;
      a.diagonal() += lambda * jtj.diagonal().cwiseMax(1e-300);
      const Eigen::Vector2d delta = a.ldlt().solve(-grad);
      const Position2D cand{p.x + delta(0), p.y + delta(1)};
      Eigen::Vector4d r_new;
      Eigen::Matrix<double, 4, 2> j_new;
      double cost_new = std::numeric_limits<double>::infinity();
      try {
        detail::wls_residuals(cand, est, links, w, r_new, j_new);
        cost_new = r_new.squaredNorm();
      } catch (const Error&) {
      }
      if (std::isfinite(cost_new) && cost_new <= cost) {
        accepted = true;
        lambda = std::max(lambda / s.lm_lambda_factor, 1e-12);
        const double step = delta.norm();
        p = cand;
        if (s.reevaluate_gdop) {
          w = detail::gdop_weights_at(p, est, links);
          detail::wls_residuals(p, est, links, w, r_new, j_new);
          cost_new = r_new.squaredNorm();
        }
        r = r_new, jac = j_new, cost = cost_new;
        if (step < s.step_tol * (1.0 + p.norm())) res.converged = true;
      } else {
        lambda *= s.lm_lambda_factor;
      }
    }
    if (!accepted || res.converged) {
      res.converged = true;  // no descent direction left at machine precision
      break;
    }
  }
  res.p_hat = p;
  res.cost_final = cost;
  return res;
}

namespace detail {

inline FusionResult minimize_pl(Scheme scheme, Position2D p0, bool fallback, const LinkEstimates& est,
                                const LinkPair& links, const SimplexSettings& s) {
  const SimplexResult sr = nelder_mead([&](Position2D p) { return pl_cost(p, est, links); }, p0, s);
  FusionResult res;
  res.scheme = scheme;
  res.p_init = p0;
  res.init_fallback = fallback;
  res.p_hat = sr.p;
  res.iterations = sr.iterations;
  res.converged = sr.converged && std::isfinite(sr.cost);
  res.cost_final = sr.cost;
  return res;
}

}  // namespace detail

/// Ray-intersection start; on parallel rays the start falls back to the mean
/// of the usable per-link points (or the receiver midpoint).
inline FusionResult solve_gi_pl(const LinkEstimates& est, const LinkPair& links, const SimplexSettings& s) {
  Position2D p0;
  bool fallback = false;
  try {
    p0 = ray_intersection_init({est[0].theta_hat, est[1].theta_hat}, {links[0].p_rx, links[1].p_rx});
  } catch (const Error& e) {
    if (e.code() != Errc::parallel_rays) throw;
    fallback = true;
    const auto inits = per_link_inits(est, links);
    if (inits[0] && inits[1]) p0 = 0.5 * (*inits[0] + *inits[1]);
    else if (inits[0] || inits[1]) p0 = inits[0] ? *inits[0] : *inits[1];
    else p0 = 0.5 * (links[0].p_rx + links[1].p_rx);
  }
  return detail::minimize_pl(Scheme::gi_pl, p0, fallback, est, links, s);
}

inline FusionResult solve_gdop_pl(const LinkEstimates& est, const LinkPair& links, const SimplexSettings& s) {
  const GdopInit g = gdop_init(est, links);
  return detail::minimize_pl(Scheme::gdop_pl, g.p0, g.fallback, est, links, s);
}

inline FusionResult fuse_analytical(Scheme scheme, const LinkEstimates& est, const LinkPair& links,
                                    const ScenarioConfig& cfg) {
  switch (scheme) {
    case Scheme::gi_pl: return solve_gi_pl(est, links, cfg.simplex);
    case Scheme::gdop_pl: return solve_gdop_pl(est, links, cfg.simplex);
    case Scheme::gdop_wls: return solve_gdop_wls(est, links, cfg.lm);
    case Scheme::gdop_init: return solve_gdop_init(est, links);
    default: throw Error(Errc::invalid_config, "scheme is not analytical");
  }
}

}  // namespace ptaloc
