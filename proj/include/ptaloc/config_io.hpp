#pragma once

#include <cstdint>
#include <fstream>
#include <set>
#include <sstream>
#include <string>

#include <json.hpp>

#include "ptaloc/errors.hpp"
#include "ptaloc/scenario.hpp"

namespace ptaloc {

using json = nlohmann::json;

namespace detail {

[[noreturn]] inline void config_error(const std::string& what) { throw Error(Errc::invalid_config, what); }

/// Rejects keys outside `allowed`; typos in a config must not silently fall
/// back to defaults.
inline void check_keys(const json& j, const std::string& section, std::initializer_list<const char*> allowed) {
  if (!j.is_object()) config_error("section '" + section + "' must be an object");
  const std::set<std::string> ok(allowed.begin(), allowed.end());
  for (const auto& [key, _] : j.items()) {
    if (!ok.count(key)) config_error("unknown key '" + section + "." + key + "'");
  }
}

template <typename V>
void read_opt(const json& j, const char* key, V& out) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<V>();
  } catch (const json::exception& e) {
    config_error(std::string("bad value for '") + key + "': " + e.what());
  }
}

inline void read_deg(const json& j, const char* key, double& rad) {
  if (!j.contains(key)) return;
  double deg = 0.0;
  read_opt(j, key, deg);
  rad = deg2rad(deg);
}

inline void read_deg2(const json& j, const char* key, std::array<double, 2>& rad) {
  if (!j.contains(key)) return;
  std::array<double, 2> deg{};
  read_opt(j, key, deg);
  rad = {deg2rad(deg[0]), deg2rad(deg[1])};
}

inline void read_point(const json& j, const char* key, Position2D& p) {
  if (!j.contains(key)) return;
  std::array<double, 2> a{};
  read_opt(j, key, a);
  p = {a[0], a[1]};
}

inline json point(Position2D p) { return json::array({p.x, p.y}); }

}  // namespace detail

inline std::string_view estimate_mode_name(EstimateMode m) { return m == EstimateMode::signal ? "signal" : "oracle"; }
inline std::string_view failure_policy_name(FailurePolicy p) { return p == FailurePolicy::clamp ? "clamp" : "exclude"; }

/// Sectioned JSON view of a config. Angles are written in degrees; every
/// field is present so the dump is canonical.
inline json config_to_json(const ScenarioConfig& c) {
  using detail::point;
  json sig = nullptr;
  if (c.sigmas) {
    sig = json::array();
    for (const auto& s : *c.sigmas) sig.push_back({{"sigma_d_m", s.sigma_d}, {"sigma_theta_deg", rad2deg(s.sigma_theta)}});
  }
  return {
      {"geometry",
       {{"isd_m", c.isd},
        {"p_tx", point(c.p_tx)},
        {"p_rx", json::array({point(c.p_rx[0]), point(c.p_rx[1])})},
        {"boresight_tx_deg", rad2deg(c.boresight_tx)},
        {"boresight_rx_deg", json::array({rad2deg(c.boresight_rx[0]), rad2deg(c.boresight_rx[1])})},
        {"roi",
         {{"center", point(c.roi.center)},
          {"circumradius_m", c.roi.circumradius},
          {"orientation_deg", rad2deg(c.roi.orientation)}}}}},
      {"array",
       {{"n_elements", c.n_elements},
        {"carrier_hz", c.carrier_hz},
        {"element_spacing_m", c.element_spacing},
        {"sweep_start_deg", json::array({rad2deg(c.sweep_start[0]), rad2deg(c.sweep_start[1])})},
        {"sweep_end_deg", json::array({rad2deg(c.sweep_end[0]), rad2deg(c.sweep_end[1])})},
        {"tx_sector_deg", json::array({rad2deg(c.tx_sector_lo), rad2deg(c.tx_sector_hi)})}}},
      {"ofdm",
       {{"subcarrier_spacing_hz", c.subcarrier_spacing_hz},
        {"n_subcarriers", c.n_subcarriers},
        {"symbols_per_trial", c.symbols_per_trial}}},
      {"link",
       {{"tx_power_dbm", c.tx_power_dbm},
        {"rcs_m2", c.rcs_m2},
        {"noise",
         {{"enabled", c.noise.enabled},
          {"psd_dbm_per_hz", c.noise.psd_dbm_per_hz},
          {"noise_figure_db", c.noise.noise_figure_db}}}}},
      {"estimation",
       {{"mode", estimate_mode_name(c.estimate_mode)},
        {"oracle_sigma_d_m", c.oracle_noise.sigma_d},
        {"oracle_sigma_theta_deg", rad2deg(c.oracle_noise.sigma_theta)},
        {"music_subband", c.music_subband},
        {"music_grid", {{"r_min_m", c.music_grid.r_min}, {"r_max_m", c.music_grid.r_max}, {"step_m", c.music_grid.step}}},
        {"parabolic_refinement", c.parabolic_refinement}}},
      {"fusion",
       {{"lm",
         {{"max_iters", c.lm.max_iters},
          {"gradient_tol", c.lm.gradient_tol},
          {"step_tol", c.lm.step_tol},
          {"lambda_init", c.lm.lm_lambda_init},
          {"lambda_factor", c.lm.lm_lambda_factor},
          {"reevaluate_gdop", c.lm.reevaluate_gdop}}},
        {"simplex",
         {{"max_iters", c.simplex.max_iters},
          {"initial_step_m", c.simplex.initial_step},
          {"x_tol_m", c.simplex.x_tol}}},
        {"sigmas", sig},
        {"calibration_trials", c.calibration_trials},
        {"calibration_seed", c.calibration_seed},
        {"failure_policy", failure_policy_name(c.failure_policy)}}},
  };
}

/// Parses a config. Missing keys keep the defaults of the standard layout
/// for the given inter-site distance; unknown keys are errors.
inline ScenarioConfig config_from_json(const json& j) {
  using namespace detail;
  check_keys(j, "", {"geometry", "array", "ofdm", "link", "estimation", "fusion"});
  double isd = 200.0;
  if (j.contains("geometry")) read_opt(j["geometry"], "isd_m", isd);
  if (!(isd > 0.0)) config_error("isd_m must be positive");
  ScenarioConfig c = ScenarioConfig::with_isd(isd);

  if (j.contains("geometry")) {
    const json& g = j["geometry"];
    check_keys(g, "geometry", {"isd_m", "p_tx", "p_rx", "boresight_tx_deg", "boresight_rx_deg", "roi"});
    read_point(g, "p_tx", c.p_tx);
    if (g.contains("p_rx")) {
      std::array<std::array<double, 2>, 2> rx{};
      read_opt(g, "p_rx", rx);
      c.p_rx = {Position2D{rx[0][0], rx[0][1]}, Position2D{rx[1][0], rx[1][1]}};
    }
    read_deg(g, "boresight_tx_deg", c.boresight_tx);
    read_deg2(g, "boresight_rx_deg", c.boresight_rx);
    if (g.contains("roi")) {
      const json& r = g["roi"];
      check_keys(r, "geometry.roi", {"center", "circumradius_m", "orientation_deg"});
      read_point(r, "center", c.roi.center);
      read_opt(r, "circumradius_m", c.roi.circumradius);
      read_deg(r, "orientation_deg", c.roi.orientation);
    }
  }
  if (j.contains("array")) {
    const json& a = j["array"];
    check_keys(a, "array",
               {"n_elements", "carrier_hz", "element_spacing_m", "sweep_start_deg", "sweep_end_deg", "tx_sector_deg"});
    read_opt(a, "n_elements", c.n_elements);
    read_opt(a, "carrier_hz", c.carrier_hz);
    read_opt(a, "element_spacing_m", c.element_spacing);
    read_deg2(a, "sweep_start_deg", c.sweep_start);
    read_deg2(a, "sweep_end_deg", c.sweep_end);
    if (a.contains("tx_sector_deg")) {
      std::array<double, 2> s{};
      read_deg2(a, "tx_sector_deg", s);
      c.tx_sector_lo = s[0];
      c.tx_sector_hi = s[1];
    }
  }
  if (j.contains("ofdm")) {
    const json& o = j["ofdm"];
    check_keys(o, "ofdm", {"subcarrier_spacing_hz", "n_subcarriers", "symbols_per_trial"});
    read_opt(o, "subcarrier_spacing_hz", c.subcarrier_spacing_hz);
    read_opt(o, "n_subcarriers", c.n_subcarriers);
    read_opt(o, "symbols_per_trial", c.symbols_per_trial);
  }
  if (j.contains("link")) {
    const json& l = j["link"];
    check_keys(l, "link", {"tx_power_dbm", "rcs_m2", "noise"});
    read_opt(l, "tx_power_dbm", c.tx_power_dbm);
    read_opt(l, "rcs_m2", c.rcs_m2);
    if (l.contains("noise")) {
      const json& n = l["noise"];
      check_keys(n, "link.noise", {"enabled", "psd_dbm_per_hz", "noise_figure_db"});
      read_opt(n, "enabled", c.noise.enabled);
      read_opt(n, "psd_dbm_per_hz", c.noise.psd_dbm_per_hz);
      read_opt(n, "noise_figure_db", c.noise.noise_figure_db);
    }
  }
  if (j.contains("estimation")) {
    const json& e = j["estimation"];
    check_keys(e, "estimation",
               {"mode", "oracle_sigma_d_m", "oracle_sigma_theta_deg", "music_subband", "music_grid",
                "parabolic_refinement"});
    if (e.contains("mode")) {
      std::string m;
      read_opt(e, "mode", m);
      if (m == "signal") c.estimate_mode = EstimateMode::signal;
      else if (m == "oracle") c.estimate_mode = EstimateMode::oracle;
      else config_error("estimation.mode must be 'signal' or 'oracle'");
    }
    read_opt(e, "oracle_sigma_d_m", c.oracle_noise.sigma_d);
    read_deg(e, "oracle_sigma_theta_deg", c.oracle_noise.sigma_theta);
    read_opt(e, "music_subband", c.music_subband);
    if (e.contains("music_grid")) {
      const json& g = e["music_grid"];
      check_keys(g, "estimation.music_grid", {"r_min_m", "r_max_m", "step_m"});
      read_opt(g, "r_min_m", c.music_grid.r_min);
      read_opt(g, "r_max_m", c.music_grid.r_max);
      read_opt(g, "step_m", c.music_grid.step);
    }
    read_opt(e, "parabolic_refinement", c.parabolic_refinement);
  }
  if (j.contains("fusion")) {
    const json& f = j["fusion"];
    check_keys(f, "fusion", {"lm", "simplex", "sigmas", "calibration_trials", "calibration_seed", "failure_policy"});
    if (f.contains("lm")) {
      const json& l = f["lm"];
      check_keys(l, "fusion.lm",
                 {"max_iters", "gradient_tol", "step_tol", "lambda_init", "lambda_factor", "reevaluate_gdop"});
      read_opt(l, "max_iters", c.lm.max_iters);
      read_opt(l, "gradient_tol", c.lm.gradient_tol);
      read_opt(l, "step_tol", c.lm.step_tol);
      read_opt(l, "lambda_init", c.lm.lm_lambda_init);
      read_opt(l, "lambda_factor", c.lm.lm_lambda_factor);
      read_opt(l, "reevaluate_gdop", c.lm.reevaluate_gdop);
    }
    if (f.contains("simplex")) {
      const json& s = f["simplex"];
      check_keys(s, "fusion.simplex", {"max_iters", "initial_step_m", "x_tol_m"});
      read_opt(s, "max_iters", c.simplex.max_iters);
      read_opt(s, "initial_step_m", c.simplex.initial_step);
      read_opt(s, "x_tol_m", c.simplex.x_tol);
    }
    if (f.contains("sigmas") && !f["sigmas"].is_null()) {
      const json& s = f["sigmas"];
      if (!s.is_array() || s.size() != 2) config_error("fusion.sigmas must be null or a 2-element array");
      std::array<NoiseSigmas, 2> sig{};
      for (int i = 0; i < 2; ++i) {
        check_keys(s[i], "fusion.sigmas", {"sigma_d_m", "sigma_theta_deg"});
        if (!s[i].contains("sigma_d_m") || !s[i].contains("sigma_theta_deg")) {
          config_error("fusion.sigmas entries need sigma_d_m and sigma_theta_deg");
        }
        read_opt(s[i], "sigma_d_m", sig[i].sigma_d);
        read_deg(s[i], "sigma_theta_deg", sig[i].sigma_theta);
      }
      c.sigmas = sig;
    }
    read_opt(f, "calibration_trials", c.calibration_trials);
    read_opt(f, "calibration_seed", c.calibration_seed);
    if (f.contains("failure_policy")) {
      std::string p;
      read_opt(f, "failure_policy", p);
      if (p == "clamp") c.failure_policy = FailurePolicy::clamp;
      else if (p == "exclude") c.failure_policy = FailurePolicy::exclude;
      else config_error("fusion.failure_policy must be 'clamp' or 'exclude'");
    }
  }
  c.validate();
  return c;
}

inline ScenarioConfig load_config(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw Error(Errc::invalid_config, "cannot open config " + path);
  json j;
  try {
    j = json::parse(f);
  } catch (const json::exception& e) {
    throw Error(Errc::invalid_config, "config " + path + " is not valid JSON: " + e.what());
  }
  return config_from_json(j);
}

inline void save_config(const ScenarioConfig& c, const std::string& path) {
  std::ofstream f(path);
  if (!f) throw Error(Errc::io_error, "cannot write " + path);
  f << config_to_json(c).dump(2) << '\n';
}

inline std::uint64_t fnv1a64(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return h;
}

/// Hash of everything that shapes the simulated signals and estimates. Fixed
/// sigmas, solver settings and the failure policy are left out so that
/// calibration caches and datasets survive changes to them.
inline std::uint64_t config_hash(const json& config_json) {
  json j = config_json;
  j.erase("fusion");
  return fnv1a64(j.dump());
}

inline std::uint64_t config_hash(const ScenarioConfig& c) { return config_hash(config_to_json(c)); }

inline std::string hash_hex(std::uint64_t h) {
  std::ostringstream s;
  s << std::hex;
  s.width(16);
  s.fill('0');
  s << h;
  return s.str();
}

}  // namespace ptaloc
