// Command-line front end: simulate, heatmap, sweep, gen-dataset, train,
// bench, calibrate. Exit codes: 0 ok, 2 config or usage error, 3 runtime
// failure.

#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "ptaloc/ptaloc.hpp"

namespace fs = std::filesystem;
using namespace ptaloc;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitRuntime = 3;

struct CommonArgs {
  std::string config;
  std::uint64_t seed = 1;
  std::size_t trials = 1000;
  std::string schemes;
  std::string out = "out";
  std::string format = "csv";
  int threads = 0;
  std::string mlp;
  std::string cnn;
  std::string calibration_cache;
};

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

void add_common(CLI::App* app, CommonArgs& a, bool trials, bool models) {
  app->add_option("--config", a.config, "scenario config (JSON); defaults when omitted");
  app->add_option("--seed", a.seed, "master seed");
  if (trials) app->add_option("--trials", a.trials, "Monte Carlo trials")->check(CLI::PositiveNumber);
  app->add_option("--out", a.out, "output directory");
  app->add_option("--format", a.format, "csv or json")->check(CLI::IsMember({"csv", "json"}));
  app->add_option("--threads", a.threads, "worker threads (0 = all cores)")->check(CLI::NonNegativeNumber);
  app->add_option("--calibration-cache", a.calibration_cache,
                  "sigma calibration cache (default <out>/calibration_cache.json)");
  if (models) {
    app->add_option("--schemes", a.schemes,
                    "comma list of GI-PL,GDOP-PL,GDOP-WLS,GDOP-Init,PF-MLP,SF-CNN (default: analytical plus "
                    "any supplied model)");
    app->add_option("--mlp", a.mlp, "PF-MLP checkpoint");
    app->add_option("--cnn", a.cnn, "SF-CNN checkpoint");
  }
}

ScenarioConfig load(const CommonArgs& a) {
  return a.config.empty() ? ScenarioConfig{} : load_config(a.config);
}

std::optional<std::string> cache_path(const CommonArgs& a) {
  if (!a.calibration_cache.empty()) return a.calibration_cache;
  return (fs::path(a.out) / "calibration_cache.json").string();
}

OutputFormat format(const CommonArgs& a) { return a.format == "json" ? OutputFormat::json : OutputFormat::csv; }

Models load_models(const CommonArgs& a) {
  Models m;
  if (!a.mlp.empty()) m.mlp = nn::PfMlp::load(a.mlp);
  if (!a.cnn.empty()) m.cnn = nn::SfCnn::load(a.cnn);
  return m;
}

std::vector<Scheme> parse_schemes(const CommonArgs& a, const Models& m) {
  std::vector<Scheme> out;
  if (a.schemes.empty()) {
    out.assign(kAnalyticalSchemes.begin(), kAnalyticalSchemes.end());
    if (m.mlp) out.push_back(Scheme::pf_mlp);
    if (m.cnn) out.push_back(Scheme::sf_cnn);
    return out;
  }
  std::stringstream ss(a.schemes);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    const Scheme s = parse_scheme(item);
    if (std::find(out.begin(), out.end(), s) != out.end()) continue;
    if (s == Scheme::pf_mlp && !m.mlp) throw ConfigError("PF-MLP needs --mlp <checkpoint>");
    if (s == Scheme::sf_cnn && !m.cnn) throw ConfigError("SF-CNN needs --cnn <checkpoint>");
    out.push_back(s);
  }
  if (out.empty()) throw ConfigError("no schemes selected");
  return out;
}

void check_models(const Models& m, const ScenarioConfig& cfg) {
  if (m.cnn && m.cnn->spec.input_length != cfg.n_subcarriers) {
    throw ConfigError("SF-CNN checkpoint expects " + std::to_string(m.cnn->spec.input_length) + " subcarriers");
  }
}

json sigmas_json(const Experiment& e) {
  json s = json::array();
  for (const auto& v : e.sigmas) s.push_back({{"sigma_d_m", v.sigma_d}, {"sigma_theta_rad", v.sigma_theta}});
  return s;
}

/// run.json: what produced the outputs. Deterministic, no timestamps.
void write_run(const CommonArgs& a, const std::string& command, const ScenarioConfig& cfg, const json& extra,
               const std::vector<std::string>& outputs) {
  json files = json::array();
  for (const auto& p : outputs) files.push_back(fs::path(p).filename().string());
  json run{{"schema", "ptaloc-run/1"},
           {"command", command},
           {"seed", a.seed},
           {"config_hash", hash_hex(config_hash(cfg))},
           {"config", config_to_json(cfg)},
           {"outputs", files}};
  for (const auto& [k, v] : extra.items()) run[k] = v;
  fs::create_directories(a.out);
  std::ofstream f(fs::path(a.out) / "run.json");
  if (!f) throw Error(Errc::io_error, "cannot write run.json");
  f << run.dump(2) << '\n';
}

std::vector<double> parse_list(const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    try {
      out.push_back(std::stod(item));
    } catch (const std::exception&) {
      throw ConfigError("not a number: '" + item + "'");
    }
  }
  return out;
}

int cmd_simulate(const CommonArgs& a) {
  const ScenarioConfig cfg = load(a);
  Models models = load_models(a);
  check_models(models, cfg);
  const auto schemes = parse_schemes(a, models);
  const Experiment exp = make_experiment(cfg, cache_path(a));
  const auto mc = run_monte_carlo(exp, a.trials, schemes, a.seed, &models, a.threads);
  std::vector<std::string> outs{write_table(trials_table(mc.records, schemes), a.out, "trials", format(a)),
                                write_table(metrics_table(mc.summaries, cfg.failure_policy), a.out, "metrics", format(a)),
                                write_table(cdf_table(mc.summaries), a.out, "cdf", format(a))};
  write_run(a, "simulate", cfg, {{"trials", a.trials}, {"sigmas", sigmas_json(exp)}}, outs);
  for (const auto& m : mc.summaries) {
    std::cout << scheme_name(m.scheme) << ": rmse " << m.rmse << " m, mean " << m.mean_error << " m, p95 "
              << m.p95_error << " m, failed " << m.n_failed << "/" << m.n_trials << '\n';
  }
  return 0;
}

int cmd_heatmap(const CommonArgs& a, const HeatmapSpec& spec) {
  const ScenarioConfig cfg = load(a);
  Models models = load_models(a);
  check_models(models, cfg);
  const auto schemes = parse_schemes(a, models);
  const Experiment exp = make_experiment(cfg, cache_path(a));
  const HeatmapGrid g = error_heatmap(exp, spec, schemes, a.seed, &models, a.threads);
  const std::string out = write_table(heatmap_table(g), a.out, "heatmap", format(a));
  const json extra{{"grid", {{"nx", spec.nx}, {"ny", spec.ny}, {"trials_per_cell", spec.trials_per_cell}}},
                   {"sigmas", sigmas_json(exp)}};
  write_run(a, "heatmap", cfg, extra, {out});
  for (std::size_t s = 0; s < schemes.size(); ++s) {
    std::cout << scheme_name(schemes[s]) << ": median cell " << g.median_cell(s) << " m, max cell " << g.max_cell(s)
              << " m\n";
  }
  return 0;
}

/// "42=a.ckpt,44=b.ckpt" into power -> path.
std::map<double, std::string> parse_matched(const std::vector<std::string>& items) {
  std::map<double, std::string> out;
  for (const auto& it : items) {
    const auto eq = it.find('=');
    if (eq == std::string::npos) throw ConfigError("expected <power>=<checkpoint>, got '" + it + "'");
    const auto p = parse_list(it.substr(0, eq));
    if (p.size() != 1) throw ConfigError("bad power in '" + it + "'");
    out[p[0]] = it.substr(eq + 1);
  }
  return out;
}

int cmd_sweep(const CommonArgs& a, const std::string& powers_text, const std::vector<std::string>& matched_mlp,
              const std::vector<std::string>& matched_cnn) {
  const ScenarioConfig cfg = load(a);
  Models models = load_models(a);
  check_models(models, cfg);
  const auto schemes = parse_schemes(a, models);
  const auto powers = parse_list(powers_text);
  if (powers.empty()) throw ConfigError("--powers is empty");
  std::map<double, Models> matched;
  for (const auto& [p, path] : parse_matched(matched_mlp)) matched[p].mlp = nn::PfMlp::load(path);
  for (const auto& [p, path] : parse_matched(matched_cnn)) matched[p].cnn = nn::SfCnn::load(path);
  SweepOptions opt;
  opt.n_trials = a.trials;
  opt.seed = a.seed;
  opt.threads = a.threads;
  opt.calibration_cache = cache_path(a);
  const auto rows = power_sweep(cfg, powers, schemes, opt, &models, matched.empty() ? nullptr : &matched);
  const std::string out = write_table(sweep_table(rows), a.out, "sweep", format(a));
  write_run(a, "sweep", cfg, {{"trials", a.trials}, {"powers_dbm", powers}}, {out});
  for (const auto& r : rows) {
    std::cout << r.tx_power_dbm << " dBm " << scheme_name(r.scheme) << " (" << r.variant << "): rmse "
              << r.metrics.rmse << " m\n";
  }
  return 0;
}

int cmd_gen_dataset(const CommonArgs& a, std::size_t samples, bool no_signals) {
  const ScenarioConfig cfg = load(a);
  const Experiment exp = make_experiment(cfg, cache_path(a));
  const Dataset ds = generate_dataset(exp, samples, a.seed, !no_signals, a.threads);
  write_dataset(ds, a.out);
  std::cout << "wrote " << ds.records.size() << " records (" << ds.split.train.size() << "/" << ds.split.val.size()
            << "/" << ds.split.test.size() << ") to " << a.out << '\n';
  return 0;
}

struct TrainArgs {
  std::string dataset;
  std::string model = "mlp";
  int epochs = 100;
  int batch = 0;  // 0: 256 for the MLP, 64 for the CNN
  double lr = 1e-3;
  double weight_decay = 1e-4;
  int patience = 10;
  std::string preset = "desk";
  std::string encoding = "real_imag";
};

int cmd_train(const CommonArgs& a, const TrainArgs& t) {
  Dataset ds = load_dataset(t.dataset, t.model == "cnn");
  if (!a.config.empty() && config_hash(load(a)) != ds.config_hash) {
    throw ConfigError("dataset was generated from a different config");
  }
  nn::TrainSettings s;
  s.max_epochs = t.epochs;
  s.adamw.lr = t.lr;
  s.adamw.weight_decay = t.weight_decay;
  s.patience = t.patience;
  s.batch_size = t.batch > 0 ? t.batch : (t.model == "cnn" ? 64 : 256);
  fs::create_directories(a.out);
  nn::TrainResult curves;
  std::vector<double> test_err;
  std::string ckpt;
  Scheme scheme;
  std::size_t params = 0;
  if (t.model == "mlp") {
    auto r = train_pf_mlp(ds, nn::MlpSpec{}, s, a.seed);
    ckpt = (fs::path(a.out) / "pf_mlp.ckpt").string();
    r.model.save(ckpt);
    test_err = mlp_errors(r.model, ds, ds.split.test);
    curves = r.curves;
    scheme = Scheme::pf_mlp;
    params = r.model.net.parameter_count();
  } else {
    const nn::CnnSpec spec = t.preset == "desk" ? desk_cnn_spec(ds.n_subcarriers) : [&] {
      nn::CnnSpec c;
      c.input_length = ds.n_subcarriers;
      return c;
    }();
    const auto enc = t.encoding == "mag_phase" ? nn::CnnEncoding::mag_phase : nn::CnnEncoding::real_imag;
    auto r = train_sf_cnn(ds, spec, enc, s, a.seed);
    ckpt = (fs::path(a.out) / "sf_cnn.ckpt").string();
    r.model.save(ckpt);
    test_err = cnn_errors(r.model, ds, ds.split.test);
    curves = r.curves;
    scheme = Scheme::sf_cnn;
    params = r.model.net.parameter_count();
  }
  Table c;
  c.schema = "ptaloc-curves/1";
  c.columns = {"epoch", "train_loss", "val_loss"};
  for (std::size_t e = 0; e < curves.train_loss.size(); ++e) {
    c.rows.push_back({static_cast<std::int64_t>(e), curves.train_loss[e], curves.val_loss[e]});
  }
  const std::vector<char> failed(test_err.size(), 0);
  const auto m = summarize(scheme, test_err, failed, FailurePolicy::clamp, ds.cfg.roi.diameter());
  std::vector<std::string> outs{write_table(c, a.out, "curves", format(a)),
                                write_table(metrics_table({m}, FailurePolicy::clamp), a.out, "test_metrics", format(a))};
  outs.push_back(ckpt);
  write_run(a, "train", ds.cfg,
            {{"model", t.model}, {"parameters", params}, {"best_epoch", curves.best_epoch},
             {"best_val_loss", curves.best_val_loss}, {"dataset", t.dataset}},
            outs);
  std::cout << scheme_name(scheme) << ": " << params << " parameters, best epoch " << curves.best_epoch
            << ", test rmse " << m.rmse << " m\n";
  return 0;
}

int cmd_bench(const CommonArgs& a, int reps) {
  const ScenarioConfig cfg = load(a);
  Models models = load_models(a);
  check_models(models, cfg);
  const auto schemes = parse_schemes(a, models);
  const Experiment exp = make_experiment(cfg, cache_path(a));
  const auto rows = bench_runtime(exp, schemes, reps, &models, a.seed);
  write_table(bench_table(rows), a.out, "bench", format(a));
  for (const auto& r : rows) {
    std::cout << scheme_name(r.scheme) << ": " << r.mean_ms << " ms (x" << r.relative << ")\n";
  }
  return 0;
}

int cmd_calibrate(const CommonArgs& a) {
  const ScenarioConfig cfg = load(a);
  ScenarioConfig c = cfg;
  c.sigmas.reset();  // always calibrate, even when the config fixes sigmas
  const Experiment exp = make_experiment(c, cache_path(a));
  Table t;
  t.schema = "ptaloc-calibration/1";
  t.columns = {"rx_index", "sigma_d_m", "sigma_theta_rad", "sigma_theta_deg", "n_draws", "seed"};
  for (int i = 0; i < 2; ++i) {
    t.rows.push_back({static_cast<std::int64_t>(i + 1), exp.sigmas[i].sigma_d, exp.sigmas[i].sigma_theta,
                      rad2deg(exp.sigmas[i].sigma_theta), static_cast<std::int64_t>(cfg.calibration_trials),
                      cfg.calibration_seed});
  }
  const std::string out = write_table(t, a.out, "calibration", format(a));
  write_run(a, "calibrate", cfg, {{"sigmas", sigmas_json(exp)}}, {out});
  for (int i = 0; i < 2; ++i) {
    std::cout << "Rx" << i + 1 << ": sigma_d " << exp.sigmas[i].sigma_d << " m, sigma_theta "
              << rad2deg(exp.sigmas[i].sigma_theta) << " deg\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Bistatic rainbow-beam ISAC localization: simulation, fusion and evaluation"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "help for every subcommand");

  CommonArgs sim, heat, sweep, gen, train, bench, calib;
  auto* c_sim = app.add_subcommand("simulate", "Monte Carlo trials: trials, metrics and CDF tables");
  add_common(c_sim, sim, true, true);

  HeatmapSpec hspec;
  auto* c_heat = app.add_subcommand("heatmap", "per-cell mean error over the ROI");
  add_common(c_heat, heat, false, true);
  c_heat->add_option("--nx", hspec.nx, "grid columns")->check(CLI::PositiveNumber);
  c_heat->add_option("--ny", hspec.ny, "grid rows")->check(CLI::PositiveNumber);
  c_heat->add_option("--per-cell", hspec.trials_per_cell, "trials per cell")->check(CLI::PositiveNumber);

  std::string powers = "42,44,46,48,50,52";
  std::vector<std::string> matched_mlp, matched_cnn;
  auto* c_sweep = app.add_subcommand("sweep", "RMSE versus transmit power");
  add_common(c_sweep, sweep, true, true);
  c_sweep->add_option("--powers", powers, "comma list of transmit powers, dBm");
  c_sweep->add_option("--matched-mlp", matched_mlp, "power-matched PF-MLP, <dBm>=<checkpoint> (repeatable)");
  c_sweep->add_option("--matched-cnn", matched_cnn, "power-matched SF-CNN, <dBm>=<checkpoint> (repeatable)");

  std::size_t samples = 10000;
  bool no_signals = false;
  auto* c_gen = app.add_subcommand("gen-dataset", "simulate a training dataset");
  add_common(c_gen, gen, false, false);
  c_gen->add_option("--samples", samples, "records")->check(CLI::PositiveNumber);
  c_gen->add_flag("--no-signals", no_signals, "skip the raw signal dump (PF-MLP only)");

  TrainArgs targs;
  auto* c_train = app.add_subcommand("train", "train PF-MLP or SF-CNN on a dataset");
  add_common(c_train, train, false, false);
  c_train->add_option("--dataset", targs.dataset, "dataset directory")->required();
  c_train->add_option("--model", targs.model, "mlp or cnn")->check(CLI::IsMember({"mlp", "cnn"}));
  c_train->add_option("--epochs", targs.epochs, "maximum epochs")->check(CLI::PositiveNumber);
  c_train->add_option("--batch", targs.batch, "batch size")->check(CLI::NonNegativeNumber);
  c_train->add_option("--lr", targs.lr, "AdamW step size")->check(CLI::NonNegativeNumber);
  c_train->add_option("--weight-decay", targs.weight_decay, "decoupled weight decay")->check(CLI::NonNegativeNumber);
  c_train->add_option("--patience", targs.patience, "early-stopping patience")->check(CLI::PositiveNumber);
  c_train->add_option("--cnn-preset", targs.preset, "desk or reduced")->check(CLI::IsMember({"desk", "reduced"}));
  c_train->add_option("--encoding", targs.encoding, "real_imag or mag_phase")
      ->check(CLI::IsMember({"real_imag", "mag_phase"}));

  int reps = 100;
  auto* c_bench = app.add_subcommand("bench", "per-scheme latency (timings are not deterministic)");
  add_common(c_bench, bench, false, true);
  c_bench->add_option("--reps", reps, "repetitions (>= 30)")->check(CLI::Range(30, 1000000));

  auto* c_calib = app.add_subcommand("calibrate", "per-link estimation sigmas");
  add_common(c_calib, calib, false, false);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  try {
    if (*c_sim) return cmd_simulate(sim);
    if (*c_heat) return cmd_heatmap(heat, hspec);
    if (*c_sweep) return cmd_sweep(sweep, powers, matched_mlp, matched_cnn);
    if (*c_gen) return cmd_gen_dataset(gen, samples, no_signals);
    if (*c_train) return cmd_train(train, targs);
    if (*c_bench) return cmd_bench(bench, reps);
    if (*c_calib) return cmd_calibrate(calib);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return e.code() == Errc::invalid_config ? kExitConfig : kExitRuntime;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
  return kExitConfig;
}
