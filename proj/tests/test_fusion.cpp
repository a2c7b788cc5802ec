#include <gtest/gtest.h>

#include <cmath>

#include "ptaloc/fusion.hpp"

using namespace ptaloc;

namespace {

const ScenarioConfig kCfg;

LinkPair links() { return {kCfg.link(1), kCfg.link(2)}; }

LinkEstimates exact(Position2D p, NoiseSigmas s = {1.5, 0.009}) {
  const LinkPair l = links();
  return {oracle_link_estimate(p, l[0], {0, 0}, 0, s), oracle_link_estimate(p, l[1], {0, 0}, 0, s)};
}

LinkEstimates noisy(Position2D p, NoiseSigmas perturb, std::uint64_t seed) {
  const LinkPair l = links();
  return {oracle_link_estimate(p, l[0], perturb, substream(seed, 1), perturb),
          oracle_link_estimate(p, l[1], perturb, substream(seed, 2), perturb)};
}

}  // namespace

TEST(RayIntersection, KnownRays) {
  const Position2D p = ray_intersection_init({-kPi / 4, kPi / 4}, {Position2D{0, 1}, Position2D{0, -1}});
  EXPECT_NEAR(p.x, 1.0, 1e-12);
  EXPECT_NEAR(p.y, 0.0, 1e-12);
  EXPECT_THROW(ray_intersection_init({0.0, 0.0}, {Position2D{0, 1}, Position2D{0, -1}}), Error);
  EXPECT_THROW(ray_intersection_init({0.0, kPi}, {Position2D{0, 1}, Position2D{0, -1}}), Error);
}

TEST(RayIntersection, AxisAlignedRays) {
  const Position2D p = ray_intersection_init({kPi / 2, 0.0}, {Position2D{3, -5}, Position2D{-2, 4}});
  EXPECT_NEAR(p.x, 3.0, 1e-9);
  EXPECT_NEAR(p.y, 4.0, 1e-9);
}

TEST(RayIntersection, NoiselessRoundTrip) {
  Rng rng(2);
  const LinkPair l = links();
  for (int i = 0; i < 200; ++i) {
    const Position2D p = sample_target(kCfg, rng);
    const LinkEstimates e = exact(p);
    const Position2D q = ray_intersection_init({e[0].theta_hat, e[1].theta_hat}, {l[0].p_rx, l[1].p_rx});
    // Near the Rx1-Rx2 line the rays are almost parallel and the intersection
    // is ill-conditioned.
    if (std::abs(p.x - l[0].p_rx.x) < 1.0) continue;
    EXPECT_LT(distance(p, q), 1e-6) << p.x << "," << p.y;
  }
}

TEST(PerLinkInit, RoundTripAndEllipseMembership) {
  Rng rng(3);
  const LinkPair l = links();
  for (int i = 0; i < 200; ++i) {
    const Position2D p = sample_target(kCfg, rng);
    const LinkEstimates e = exact(p);
    for (int k = 0; k < 2; ++k) {
      EXPECT_LT(distance(per_link_geo_init(e[k], l[k]), p), 1e-6);
      LinkEstimate off = e[k];
      off.d_hat += 3.0;
      off.theta_hat += 0.01;
      const Position2D q = per_link_geo_init(off, l[k]);
      const auto [rt, rr] = bistatic_distances(q, l[k]);
      EXPECT_NEAR(rt + rr, off.d_hat, 1e-9 * off.d_hat);
    }
  }
}

TEST(PerLinkInit, InfeasibleEllipse) {
  const LinkGeometry g = kCfg.link(1);
  LinkEstimate e;
  e.d_hat = g.baseline();
  e.theta_hat = std::atan2(g.p_tx.y - g.p_rx.y, g.p_tx.x - g.p_rx.x);
  EXPECT_THROW(per_link_geo_init(e, g), Error);
  try {
    per_link_geo_init(e, g);
  } catch (const Error& err) {
    EXPECT_EQ(err.code(), Errc::infeasible_ellipse);
  }
}

TEST(GdopWeightedInit, Weights) {
  const Position2D a{0, 0}, b{6, 3};
  const Position2D mid = gdop_weighted_init({a, b}, {2.0, 2.0});
  EXPECT_DOUBLE_EQ(mid.x, 3.0);
  EXPECT_DOUBLE_EQ(mid.y, 1.5);
  // weights 1/1 : 1/2 = 2:1
  const Position2D w = gdop_weighted_init({a, b}, {1.0, 2.0});
  EXPECT_NEAR(w.x, (2 * 0 + 6) / 3.0, 1e-15);
  EXPECT_NEAR(w.y, (2 * 0 + 3) / 3.0, 1e-15);
  const Position2D lim = gdop_weighted_init({a, b}, {1e300, 1.0});
  EXPECT_NEAR(lim.x, 6.0, 1e-12);
}

TEST(WlsCost, ZeroAtTruthHomogeneousAndOracle) {
  const LinkPair l = links();
  const Position2D p{80, 10};
  LinkEstimates e = exact(p, {2.0, 0.02});
  EXPECT_NEAR(wls_cost(p, e, l, {1.0, 1.0}), 0.0, 1e-20);

  const Position2D q{85, 4};
  double ref = 0;
  const std::array<double, 2> w{0.7, 1.9};
  for (int i = 0; i < 2; ++i) {
    const double d = std::hypot(q.x - l[i].p_tx.x, q.y - l[i].p_tx.y) + std::hypot(q.x - l[i].p_rx.x, q.y - l[i].p_rx.y);
    const double th = std::atan2(q.y - l[i].p_rx.y, q.x - l[i].p_rx.x);
    ref += w[i] * (std::pow((e[i].d_hat - d) / 2.0, 2) + std::pow(wrap_angle(e[i].theta_hat - th) / 0.02, 2));
  }
  EXPECT_NEAR(wls_cost(q, e, l, w), ref, 1e-12 * ref);

  // Residuals and sigmas scaled together (distance residuals only, since the
  // angular residual cannot be scaled by moving one estimate).
  LinkEstimates e2 = e;
  const Measurement z0 = measurement_model(q, l[0]), z1 = measurement_model(q, l[1]);
  e2[0].d_hat = z0.d + 3 * (e[0].d_hat - z0.d);
  e2[1].d_hat = z1.d + 3 * (e[1].d_hat - z1.d);
  e2[0].sigmas.sigma_d = e2[1].sigmas.sigma_d = 6.0;
  double dist_only = 0, dist_only2 = 0;
  for (int i = 0; i < 2; ++i) {
    const Measurement z = measurement_model(q, l[i]);
    dist_only += w[i] * std::pow((e[i].d_hat - z.d) / 2.0, 2);
    dist_only2 += w[i] * std::pow((e2[i].d_hat - z.d) / 6.0, 2);
  }
  EXPECT_NEAR(dist_only, dist_only2, 1e-9 * dist_only);
  EXPECT_NEAR(wls_cost(q, e2, l, w), wls_cost(q, e, l, w), 1e-9 * ref);
}

TEST(PlCost, ZeroAtTruthAndScalarOracle) {
  const LinkPair l = links();
  const Position2D p{70, -25};
  const LinkEstimates e = exact(p);
  EXPECT_NEAR(pl_cost(p, e, l), 0.0, 1e-15);

  auto oracle = [&](Position2D q, Position2D weights_at) {
    double nd = 0, dd = 0, nt = 0, dt = 0;
    for (int i = 0; i < 2; ++i) {
      const double rt = distance(weights_at, l[i].p_tx), rr = distance(weights_at, l[i].p_rx);
      const double alpha = 1 / (rt * rt * rr * rr), beta = 1 / (rt * rt * rr);
      const Measurement z = measurement_model(q, l[i]);
      nd += alpha * std::abs(e[i].d_hat - z.d), dd += alpha;
      nt += beta * std::abs(wrap_angle(e[i].theta_hat - z.theta)), dt += beta;
    }
    return nd / dd + nt / dt;
  };
  const Position2D q{90, -10};
  EXPECT_NEAR(pl_cost(q, e, l), oracle(q, q), 1e-12);
  // Weights follow the candidate point, not the start point.
  EXPECT_GT(std::abs(pl_cost(q, e, l) - oracle(q, p)), 1e-6);
}

TEST(GdopWls, NoiselessRoundTrip) {
  Rng rng(5);
  for (int i = 0; i < 300; ++i) {
    const Position2D p = sample_target(kCfg, rng);
    const FusionResult r = solve_gdop_wls(exact(p), links(), kCfg.lm);
    EXPECT_LT(distance(r.p_hat, p), 1e-6);
    EXPECT_LE(r.iterations, 2);
    EXPECT_TRUE(r.converged);
  }
}

TEST(GdopWls, ConvergesQuicklyFromNoisyInit) {
  Rng rng(6);
  for (int i = 0; i < 300; ++i) {
    const Position2D p = sample_target(kCfg, rng);
    LinkEstimates e = exact(p, {0.5, 0.003});
    const FusionResult r = solve_gdop_wls(e, links(), kCfg.lm);
    EXPECT_LE(r.iterations, 10);
    e[0].d_hat += 0.2, e[1].theta_hat -= 0.002;
    const FusionResult r2 = solve_gdop_wls(e, links(), kCfg.lm);
    EXPECT_TRUE(r2.converged);
    EXPECT_LE(r2.iterations, 10);
  }
}

// Small-noise scatter against the sandwich covariance of the weighted
// estimator linearized at the truth.
TEST(GdopWls, ScatterMatchesLinearizedCovariance) {
  const NoiseSigmas s{0.05, 0.0003};
  const LinkPair l = links();
  for (const Position2D p : {Position2D{60, 30}, Position2D{140, -50}, Position2D{100, 5}}) {
    Eigen::Matrix<double, 4, 2> j;
    Eigen::Vector4d w, var;
    for (int i = 0; i < 2; ++i) {
      const Eigen::Matrix2d g = geometric_jacobian(p, l[i]);
      j.row(2 * i) = g.row(0), j.row(2 * i + 1) = g.row(1);
      const double wi = 1.0 / gdop(p, l[i], s);
      w(2 * i) = wi / (s.sigma_d * s.sigma_d), w(2 * i + 1) = wi / (s.sigma_theta * s.sigma_theta);
      var(2 * i) = s.sigma_d * s.sigma_d, var(2 * i + 1) = s.sigma_theta * s.sigma_theta;
    }
    const Eigen::Matrix2d a = (j.transpose() * w.asDiagonal() * j).inverse();
    const Eigen::Matrix2d cov =
        a * j.transpose() * w.asDiagonal() * var.asDiagonal() * w.asDiagonal() * j * a;
    const double predicted = std::sqrt(cov.trace());
    double sum2 = 0;
    const int n = 10000;
    for (int t = 0; t < n; ++t) {
      const FusionResult r = solve_gdop_wls(noisy(p, s, derive_seed(17, t)), l, kCfg.lm);
      sum2 += (r.p_hat - p).dot(r.p_hat - p);
    }
    EXPECT_NEAR(std::sqrt(sum2 / n) / predicted, 1.0, 0.3) << p.x << "," << p.y;
  }
}

TEST(PathLossFusers, NoiselessRoundTrip) {
  Rng rng(7);
  for (int i = 0; i < 200; ++i) {
    const Position2D p = sample_target(kCfg, rng);
    const LinkEstimates e = exact(p);
    const FusionResult gi = solve_gi_pl(e, links(), kCfg.simplex);
    const FusionResult gd = solve_gdop_pl(e, links(), kCfg.simplex);
    EXPECT_LT(distance(gd.p_hat, p), 1e-3);
    // The ray start degenerates on the Rx1-Rx2 line.
    if (std::abs(p.x - kCfg.p_rx[0].x) > 1.0) EXPECT_LT(distance(gi.p_hat, p), 1e-3);
    EXPECT_TRUE(gd.converged);
  }
}

TEST(PathLossFusers, SameBasinSameCost) {
  const Position2D p{90, 30};
  const LinkEstimates e = noisy(p, {1.0, 0.005}, 3);
  const FusionResult gi = solve_gi_pl(e, links(), kCfg.simplex);
  const FusionResult gd = solve_gdop_pl(e, links(), kCfg.simplex);
  EXPECT_NE(gi.p_init, gd.p_init);
  // Both stop on the simplex-diameter tolerance of a nonsmooth L1 cost.
  EXPECT_NEAR(gi.cost_final, gd.cost_final, 1e-5 * gd.cost_final);
  EXPECT_LT(distance(gi.p_hat, gd.p_hat), 1e-3);
}

TEST(PathLossFusers, InitAtTruthStaysPut) {
  const Position2D p{120, -20};
  const FusionResult r = solve_gdop_pl(exact(p), links(), kCfg.simplex);
  EXPECT_LT(distance(r.p_hat, r.p_init), kCfg.simplex.initial_step * std::sqrt(2.0));
}

TEST(PathLossFusers, ParallelRaysFallBack) {
  // Both AoAs along the Rx1-Rx2 line in the same direction.
  const LinkPair l = links();
  const Position2D p{l[0].p_rx.x, 30};
  LinkEstimates e = exact(p);
  e[0].theta_hat = e[1].theta_hat = kPi / 2;
  const FusionResult r = solve_gi_pl(e, l, kCfg.simplex);
  EXPECT_TRUE(r.init_fallback);
  EXPECT_TRUE(r.p_hat.finite());
  EXPECT_LT(distance(r.p_hat, p), kCfg.roi.diameter());
}

TEST(GdopInit, OneInfeasibleLinkFallsBack) {
  const Position2D p{90, 40};
  LinkEstimates e = exact(p);
  e[0].d_hat = 10.0;
  const FusionResult r = solve_gdop_init(e, links());
  EXPECT_TRUE(r.init_fallback);
  EXPECT_LT(distance(r.p_hat, p), 1e-6);
}

TEST(Schemes, NamesRoundTrip) {
  for (Scheme s : kAllSchemes) EXPECT_EQ(parse_scheme(scheme_name(s)), s);
  EXPECT_EQ(parse_scheme("gdop-wls"), Scheme::gdop_wls);
  EXPECT_THROW(parse_scheme("LS"), Error);
  EXPECT_THROW(fuse_analytical(Scheme::pf_mlp, exact({90, 0}), links(), kCfg), Error);
}
