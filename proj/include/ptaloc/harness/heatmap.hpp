#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <vector>

#include "ptaloc/harness/trial.hpp"

namespace ptaloc {

struct HeatmapSpec {
  int nx = 20;
  int ny = 20;
  int trials_per_cell = 20;

  void validate() const {
    if (nx <= 0 || ny <= 0 || trials_per_cell <= 0) throw Error(Errc::invalid_config, "heatmap sizes must be positive");
  }
};

struct HeatmapCell {
  int ix = 0;
  int iy = 0;
  Position2D center;
  bool inside = false;                 // center lies in the ROI hexagon
  std::vector<double> mean_error;      // per scheme; NaN when empty
  std::vector<std::size_t> count;      // per scheme, trials entering the mean
};

struct HeatmapGrid {
  HeatmapSpec spec;
  Position2D lo, hi;
  std::vector<Scheme> schemes;
  std::vector<HeatmapCell> cells;  // row-major, iy outer

  /// Median over inside cells of the per-cell mean error.
  double median_cell(std::size_t scheme_index) const {
    std::vector<double> v;
    for (const auto& c : cells) {
      if (c.inside && c.count[scheme_index] > 0) v.push_back(c.mean_error[scheme_index]);
    }
    if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
  }

  double max_cell(std::size_t scheme_index) const {
    double m = -std::numeric_limits<double>::infinity();
    for (const auto& c : cells) {
      if (c.inside && c.count[scheme_index] > 0) m = std::max(m, c.mean_error[scheme_index]);
    }
    return m;
  }
};

/// Fixed grid over the ROI bounding box. Targets of a cell are drawn
/// uniformly over the part of the cell inside the hexagon; cells whose
/// center is outside are flagged and left empty.
inline HeatmapGrid error_heatmap(const Experiment& exp, const HeatmapSpec& spec, std::span<const Scheme> schemes,
                                 std::uint64_t master_seed, Models* models = nullptr, int threads = 0) {
  spec.validate();
  const ScenarioConfig& cfg = exp.cfg();
  HeatmapGrid g;
  g.spec = spec;
  g.schemes.assign(schemes.begin(), schemes.end());
  const auto box = cfg.roi.bounding_box();
  g.lo = box[0];
  g.hi = box[1];
  const double wx = (g.hi.x - g.lo.x) / spec.nx;
  const double wy = (g.hi.y - g.lo.y) / spec.ny;

  std::vector<TrialJob> jobs;
  std::vector<std::size_t> job_cell;
  for (int iy = 0; iy < spec.ny; ++iy) {
    for (int ix = 0; ix < spec.nx; ++ix) {
      HeatmapCell c;
      c.ix = ix;
      c.iy = iy;
      c.center = {g.lo.x + (ix + 0.5) * wx, g.lo.y + (iy + 0.5) * wy};
      c.inside = cfg.roi.contains(c.center, 0.0);
      c.mean_error.assign(schemes.size(), std::numeric_limits<double>::quiet_NaN());
      c.count.assign(schemes.size(), 0);
      const std::size_t cell_index = g.cells.size();
      if (c.inside) {
        for (int t = 0; t < spec.trials_per_cell; ++t) {
          const std::uint64_t trial = cell_index * static_cast<std::uint64_t>(spec.trials_per_cell) + t;
          const std::uint64_t seed = derive_seed(master_seed, trial);
          Rng rng(substream(seed, 0));
          Position2D p = c.center;
          for (int attempt = 0; attempt < 1000; ++attempt) {
            const Position2D q{c.center.x + (uniform01(rng) - 0.5) * wx, c.center.y + (uniform01(rng) - 0.5) * wy};
            if (cfg.roi.contains(q, 0.0) && distance(q, cfg.p_tx) >= kMinRange &&
                distance(q, cfg.p_rx[0]) >= kMinRange && distance(q, cfg.p_rx[1]) >= kMinRange) {
              p = q;
              break;
            }
          }
          jobs.push_back({trial, seed, p});
          job_cell.push_back(cell_index);
        }
      }
      g.cells.push_back(std::move(c));
    }
  }

  const auto records = run_trials(exp, schemes, jobs, models, threads);
  std::vector<std::vector<double>> sums(g.cells.size(), std::vector<double>(schemes.size(), 0.0));
  for (std::size_t k = 0; k < records.size(); ++k) {
    HeatmapCell& c = g.cells[job_cell[k]];
    for (std::size_t s = 0; s < schemes.size(); ++s) {
      const SchemeOutcome* o = records[k].outcome(schemes[s]);
      double e;
      if (o && !o->failed) {
        e = o->error;
      } else if (cfg.failure_policy == FailurePolicy::clamp) {
        e = cfg.roi.diameter();
      } else {
        continue;
      }
      sums[job_cell[k]][s] += e;
      ++c.count[s];
    }
  }
  for (std::size_t i = 0; i < g.cells.size(); ++i) {
    for (std::size_t s = 0; s < schemes.size(); ++s) {
      if (g.cells[i].count[s] > 0) g.cells[i].mean_error[s] = sums[i][s] / static_cast<double>(g.cells[i].count[s]);
    }
  }
  return g;
}

/// Distance from p to the segment a-b.
inline double segment_distance(Position2D p, Position2D a, Position2D b) {
  const Position2D ab = b - a;
  const double t = std::clamp(((p - a).x * ab.x + (p - a).y * ab.y) / (ab.x * ab.x + ab.y * ab.y), 0.0, 1.0);
  return distance(p, a + t * ab);
}

}  // namespace ptaloc
