#pragma once

#include <array>
#include <cmath>
#include <numbers>

#include <Eigen/Dense>

#include "ptaloc/errors.hpp"
#include "ptaloc/random.hpp"

namespace ptaloc {

inline constexpr double kSpeedOfLight = 299792458.0;
inline constexpr double kPi = std::numbers::pi;
inline constexpr double kTwoPi = 2.0 * std::numbers::pi;

// Ranges below this are treated as a target sitting on a node.
inline constexpr double kMinRange = 1.0;
// Weighted normal matrices with a larger condition number are singular.
inline constexpr double kMaxConditionNumber = 1e12;

constexpr double deg2rad(double deg) { return deg * std::numbers::pi / 180.0; }
constexpr double rad2deg(double rad) { return rad * 180.0 / std::numbers::pi; }

struct Position2D {
  double x = 0.0;
  double y = 0.0;

  friend constexpr Position2D operator+(Position2D a, Position2D b) { return {a.x + b.x, a.y + b.y}; }
  friend constexpr Position2D operator-(Position2D a, Position2D b) { return {a.x - b.x, a.y - b.y}; }
  friend constexpr Position2D operator*(double s, Position2D a) { return {s * a.x, s * a.y}; }
  friend constexpr bool operator==(Position2D a, Position2D b) = default;

  double norm() const { return std::hypot(x, y); }
  constexpr double dot(Position2D o) const { return x * o.x + y * o.y; }
  bool finite() const { return std::isfinite(x) && std::isfinite(y); }
};

inline double distance(Position2D a, Position2D b) { return (a - b).norm(); }

/// Wraps an angle difference into (-pi, pi].
inline double wrap_angle(double delta) {
  double r = std::remainder(delta, kTwoPi);
  if (r <= -kPi) r += kTwoPi;
  if (r > kPi) r -= kTwoPi;
  return r;
}

/// Bistatic link: transmitter -> target -> receiver `rx_index` (1 or 2).
struct LinkGeometry {
  Position2D p_tx;
  Position2D p_rx;
  int rx_index = 1;

  double baseline() const { return distance(p_tx, p_rx); }
};

struct NoiseSigmas {
  double sigma_d = 1.0;      // meters
  double sigma_theta = 0.01; // radians
};

struct BistaticRanges {
  double r_tx = 0.0;
  double r_rx = 0.0;
};

struct Measurement {
  double d = 0.0;     // bistatic sum R_tx + R_rx, meters
  double theta = 0.0; // global AoA at the receiver, (-pi, pi]
};

inline BistaticRanges bistatic_distances(Position2D p, const LinkGeometry& g) {
  return {distance(p, g.p_tx), distance(p, g.p_rx)};
}

inline Measurement measurement_model(Position2D p, const LinkGeometry& g) {
  const auto [r_tx, r_rx] = bistatic_distances(p, g);
  if (r_rx == 0.0) {
    throw Error(Errc::degenerate_geometry, "AoA undefined: target on the receiver");
  }
  return {r_tx + r_rx, std::atan2(p.y - g.p_rx.y, p.x - g.p_rx.x)};
}

/// Rows are the gradients of the bistatic sum and of the global AoA.
inline Eigen::Matrix2d geometric_jacobian(Position2D p, const LinkGeometry& g, double min_range = kMinRange) {
  const auto [r_tx, r_rx] = bistatic_distances(p, g);
  if (r_tx < min_range || r_rx < min_range) {
    throw Error(Errc::degenerate_geometry, "range below epsilon in Jacobian");
  }
  const double dx_t = p.x - g.p_tx.x, dy_t = p.y - g.p_tx.y;
  const double dx_r = p.x - g.p_rx.x, dy_r = p.y - g.p_rx.y;
  Eigen::Matrix2d j;
  j(0, 0) = dx_t / r_tx + dx_r / r_rx;
  j(0, 1) = dy_t / r_tx + dy_r / r_rx;
  j(1, 0) = -dy_r / (r_rx * r_rx);
  j(1, 1) = dx_r / (r_rx * r_rx);
  return j;
}

/// Position error covariance (J^T S^-1 J)^-1 of one link, S = diag(sd^2, st^2).
inline Eigen::Matrix2d position_covariance(const Eigen::Matrix2d& jac, const NoiseSigmas& s) {
  const Eigen::Vector2d inv_var(1.0 / (s.sigma_d * s.sigma_d), 1.0 / (s.sigma_theta * s.sigma_theta));
  const Eigen::Matrix2d info = jac.transpose() * inv_var.asDiagonal() * jac;
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> eig(info, Eigen::EigenvaluesOnly);
  const double lo = eig.eigenvalues().minCoeff();
  const double hi = eig.eigenvalues().maxCoeff();
  if (!(lo > 0.0) || hi / lo > kMaxConditionNumber) {
    throw Error(Errc::singular_geometry, "weighted normal matrix is ill-conditioned");
  }
  return info.inverse();
}

inline double gdop(Position2D p, const LinkGeometry& g, const NoiseSigmas& s) {
  return std::sqrt(position_covariance(geometric_jacobian(p, g), s).trace());
}

/// Regular hexagon; `orientation` is the angle of the first vertex, so 0 gives
/// the flat-top layout with vertices at 0, 60, ..., 300 degrees.
struct HexRegion {
  Position2D center;
  double circumradius = 1.0;
  double orientation = 0.0;

  std::array<Position2D, 6> vertices() const {
    std::array<Position2D, 6> v{};
    for (int k = 0; k < 6; ++k) {
      const double a = orientation + k * kPi / 3.0;
      v[k] = {center.x + circumradius * std::cos(a), center.y + circumradius * std::sin(a)};
    }
    return v;
  }

  bool contains(Position2D p, double tol = 1e-9) const {
    const auto v = vertices();
    for (int k = 0; k < 6; ++k) {
      const Position2D e = v[(k + 1) % 6] - v[k];
      const Position2D q = p - v[k];
      if (e.x * q.y - e.y * q.x < -tol * circumradius) return false;
    }
    return true;
  }

  /// Axis-aligned bounding box as {min corner, max corner}.
  std::array<Position2D, 2> bounding_box() const {
    const auto v = vertices();
    Position2D lo = v[0], hi = v[0];
    for (const auto& q : v) {
      lo = {std::min(lo.x, q.x), std::min(lo.y, q.y)};
      hi = {std::max(hi.x, q.x), std::max(hi.y, q.y)};
    }
    return {lo, hi};
  }

  double diameter() const { return 2.0 * circumradius; }

  /// Sextant (0..5) of a point, counted from the first vertex direction.
  int sextant(Position2D p) const {
    double a = std::atan2(p.y - center.y, p.x - center.x) - orientation;
    a = std::fmod(a, kTwoPi);
    if (a < 0) a += kTwoPi;
    return std::min(5, static_cast<int>(a / (kPi / 3.0)));
  }
};

/// Uniform draw over the hexagon by rejection from its bounding box.
inline Position2D sample_roi(const HexRegion& region, Rng& rng) {
  const auto [lo, hi] = region.bounding_box();
  for (;;) {
    const Position2D p{lo.x + (hi.x - lo.x) * uniform01(rng), lo.y + (hi.y - lo.y) * uniform01(rng)};
    if (region.contains(p, 0.0)) return p;
  }
}

}  // namespace ptaloc
