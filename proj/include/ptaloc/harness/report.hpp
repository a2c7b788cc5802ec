#pragma once

#include <charconv>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "ptaloc/harness/bench.hpp"
#include "ptaloc/harness/heatmap.hpp"
#include "ptaloc/harness/sweep.hpp"
#include "ptaloc/harness/trial.hpp"

namespace ptaloc {

/// A cell is empty (missing / not applicable), text, an integer or a real.
using Cell = std::variant<std::monostate, std::string, std::int64_t, std::uint64_t, double>;

/// Column-named rows written as CSV or as {"schema", "columns", "rows"}
/// JSON. `schema` carries the layout version, bumped on any column change.
struct Table {
  std::string schema;
  std::vector<std::string> columns;
  std::vector<std::vector<Cell>> rows;
};

/// Shortest text that parses back to the same double; NaN and infinities as
/// empty cells.
inline std::string format_number(double v) {
  if (!std::isfinite(v)) return "";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

namespace detail {

inline std::string csv_escape(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + '"';
}

inline std::string cell_text(const Cell& c) {
  struct V {
    std::string operator()(std::monostate) const { return ""; }
    std::string operator()(const std::string& s) const { return csv_escape(s); }
    std::string operator()(std::int64_t v) const { return std::to_string(v); }
    std::string operator()(std::uint64_t v) const { return std::to_string(v); }
    std::string operator()(double v) const { return format_number(v); }
  };
  return std::visit(V{}, c);
}

inline nlohmann::json cell_json(const Cell& c) {
  struct V {
    nlohmann::json operator()(std::monostate) const { return nullptr; }
    nlohmann::json operator()(const std::string& s) const { return s; }
    nlohmann::json operator()(std::int64_t v) const { return v; }
    nlohmann::json operator()(std::uint64_t v) const { return v; }
    nlohmann::json operator()(double v) const { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr); }
  };
  return std::visit(V{}, c);
}

inline Cell count(std::size_t n) { return static_cast<std::uint64_t>(n); }
inline Cell flag(bool b) { return static_cast<std::int64_t>(b ? 1 : 0); }
inline Cell text(std::string_view s) { return std::string(s); }

}  // namespace detail

inline std::string to_csv(const Table& t) {
  std::string out;
  for (std::size_t i = 0; i < t.columns.size(); ++i) out += (i ? "," : "") + detail::csv_escape(t.columns[i]);
  out += '\n';
  for (const auto& row : t.rows) {
    for (std::size_t i = 0; i < row.size(); ++i) out += (i ? "," : "") + detail::cell_text(row[i]);
    out += '\n';
  }
  return out;
}

inline nlohmann::json to_json(const Table& t) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& row : t.rows) {
    nlohmann::json r = nlohmann::json::object();
    for (std::size_t i = 0; i < row.size(); ++i) r[t.columns[i]] = detail::cell_json(row[i]);
    rows.push_back(std::move(r));
  }
  return {{"schema", t.schema}, {"columns", t.columns}, {"rows", rows}};
}

enum class OutputFormat { csv, json };

/// Writes `<dir>/<stem>.csv` or `.json`; returns the path.
inline std::string write_table(const Table& t, const std::string& dir, const std::string& stem, OutputFormat fmt) {
  std::filesystem::create_directories(dir);
  const std::string path = (std::filesystem::path(dir) / (stem + (fmt == OutputFormat::csv ? ".csv" : ".json"))).string();
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error(Errc::io_error, "cannot write " + path);
  if (fmt == OutputFormat::csv) {
    f << to_csv(t);
  } else {
    f << to_json(t).dump(2) << '\n';
  }
  if (!f) throw Error(Errc::io_error, "failed writing " + path);
  return path;
}

/// One row per trial; per-scheme columns are prefixed "<scheme>.".
inline Table trials_table(const std::vector<TrialRecord>& records, std::span<const Scheme> schemes) {
  using namespace detail;
  Table t;
  t.schema = "ptaloc-trials/1";
  t.columns = {"trial", "seed", "x_true", "y_true", "tx_power_dbm", "theta1_hat_rad", "d1_hat_m", "theta2_hat_rad",
               "d2_hat_m", "estimation_failure"};
  for (Scheme s : schemes) {
    const std::string p = std::string(scheme_name(s)) + ".";
    for (const char* c : {"x_hat", "y_hat", "x_init", "y_init", "error_m", "failed", "failure", "iterations",
                          "converged", "init_fallback"}) {
      t.columns.push_back(p + c);
    }
  }
  for (const auto& r : records) {
    std::vector<Cell> row{count(r.trial),   r.seed,          r.p_true.x,          r.p_true.y,
                          r.tx_power_dbm,   r.est[0].theta_hat, r.est[0].d_hat,   r.est[1].theta_hat,
                          r.est[1].d_hat,   text(r.estimation_failure)};
    if (r.estimation_failed) {
      for (int k = 5; k < 9; ++k) row[k] = std::monostate{};
    }
    for (Scheme s : schemes) {
      const SchemeOutcome* o = r.outcome(s);
      if (!o || o->failed) {
        row.insert(row.end(), {std::monostate{}, std::monostate{}, std::monostate{}, std::monostate{},
                               std::monostate{}, flag(true), text(o ? o->failure : "NotRun"), std::monostate{},
                               std::monostate{}, std::monostate{}});
        continue;
      }
      const FusionResult& f = o->result;
      row.insert(row.end(), {f.p_hat.x, f.p_hat.y, f.p_init.x, f.p_init.y, o->error, flag(false), text(""),
                             static_cast<std::int64_t>(f.iterations), flag(f.converged), flag(f.init_fallback)});
    }
    t.rows.push_back(std::move(row));
  }
  return t;
}

inline Table metrics_table(const std::vector<MetricsSummary>& m, FailurePolicy policy) {
  using namespace detail;
  Table t;
  t.schema = "ptaloc-metrics/1";
  t.columns = {"scheme", "n_trials", "n_failed", "n_used", "rmse_m", "mean_error_m", "p95_error_m", "failure_policy"};
  for (const auto& s : m) {
    t.rows.push_back({text(scheme_name(s.scheme)), count(s.n_trials), count(s.n_failed), count(s.n_used), s.rmse,
                      s.mean_error, s.p95_error, text(failure_policy_name(policy))});
  }
  return t;
}

/// Empirical CDF: every sorted error with its cumulative fraction i/n.
inline Table cdf_table(const std::vector<MetricsSummary>& m) {
  using namespace detail;
  Table t;
  t.schema = "ptaloc-cdf/1";
  t.columns = {"scheme", "error_m", "cdf"};
  for (const auto& s : m) {
    const auto n = static_cast<double>(s.sorted_errors.size());
    for (std::size_t i = 0; i < s.sorted_errors.size(); ++i) {
      t.rows.push_back({text(scheme_name(s.scheme)), s.sorted_errors[i], static_cast<double>(i + 1) / n});
    }
  }
  return t;
}

/// Long form, one row per (cell, scheme). Cells outside the hexagon carry
/// inside = 0, count 0 and an empty mean.
inline Table heatmap_table(const HeatmapGrid& g) {
  using namespace detail;
  Table t;
  t.schema = "ptaloc-heatmap/1";
  t.columns = {"x", "y", "scheme", "mean_error", "count", "ix", "iy", "inside"};
  for (const auto& c : g.cells) {
    for (std::size_t s = 0; s < g.schemes.size(); ++s) {
      t.rows.push_back({c.center.x, c.center.y, text(scheme_name(g.schemes[s])), c.mean_error[s], count(c.count[s]),
                        static_cast<std::int64_t>(c.ix), static_cast<std::int64_t>(c.iy), flag(c.inside)});
    }
  }
  return t;
}

inline Table sweep_table(const std::vector<SweepRow>& rows) {
  using namespace detail;
  Table t;
  t.schema = "ptaloc-sweep/1";
  t.columns = {"tx_power_dbm", "scheme",   "variant",  "rmse_m",
               "mean_error_m", "p95_error_m", "n_trials", "n_failed"};
  for (const auto& r : rows) {
    t.rows.push_back({r.tx_power_dbm, text(scheme_name(r.scheme)), text(r.variant), r.metrics.rmse,
                      r.metrics.mean_error, r.metrics.p95_error, count(r.metrics.n_trials), count(r.metrics.n_failed)});
  }
  return t;
}

inline Table bench_table(const std::vector<BenchRow>& rows) {
  using namespace detail;
  Table t;
  t.schema = "ptaloc-bench/1";
  t.columns = {"scheme", "parameters", "macs", "mean_ms", "relative", "reps"};
  for (const auto& r : rows) {
    t.rows.push_back({text(scheme_name(r.scheme)), count(r.parameters), count(r.macs), r.mean_ms, r.relative,
                      static_cast<std::int64_t>(r.reps)});
  }
  return t;
}

}  // namespace ptaloc
