#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <vector>

#include "ptaloc/fusion.hpp"
#include "ptaloc/scenario.hpp"

namespace ptaloc {

/// Nearest-rank quantile of ascending data: the ceil(q n)-th smallest value.
inline double nearest_rank(std::span<const double> sorted, double q) {
  if (sorted.empty()) return std::numeric_limits<double>::quiet_NaN();
  const auto n = static_cast<double>(sorted.size());
  const auto rank = static_cast<std::size_t>(std::max(1.0, std::ceil(q * n - 1e-9)));
  return sorted[std::min(rank, sorted.size()) - 1];
}

struct MetricsSummary {
  Scheme scheme = Scheme::gi_pl;
  std::size_t n_trials = 0;
  std::size_t n_failed = 0;
  std::size_t n_used = 0;  // trials entering the statistics
  double rmse = std::numeric_limits<double>::quiet_NaN();
  double mean_error = std::numeric_limits<double>::quiet_NaN();
  double p95_error = std::numeric_limits<double>::quiet_NaN();
  std::vector<double> sorted_errors;  // the empirical CDF support
};

/// Failed trials enter at `clamp_error` under the clamp policy and are
/// dropped under exclude.
inline MetricsSummary summarize(Scheme scheme, std::span<const double> errors, std::span<const char> failed,
                                FailurePolicy policy, double clamp_error) {
  MetricsSummary m;
  m.scheme = scheme;
  m.n_trials = errors.size();
  m.sorted_errors.reserve(errors.size());
  for (std::size_t i = 0; i < errors.size(); ++i) {
    if (failed[i]) {
      ++m.n_failed;
      if (policy == FailurePolicy::clamp) m.sorted_errors.push_back(clamp_error);
    } else {
      m.sorted_errors.push_back(errors[i]);
    }
  }
  std::sort(m.sorted_errors.begin(), m.sorted_errors.end());
  m.n_used = m.sorted_errors.size();
  if (m.n_used == 0) return m;
  double s = 0.0, s2 = 0.0;
  for (double e : m.sorted_errors) s += e, s2 += e * e;
  const auto n = static_cast<double>(m.n_used);
  m.mean_error = s / n;
  m.rmse = std::sqrt(s2 / n);
  m.p95_error = nearest_rank(m.sorted_errors, 0.95);
  return m;
}

}  // namespace ptaloc
