#pragma once

#include <complex>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "ptaloc/config_io.hpp"
#include "ptaloc/harness/parallel.hpp"
#include "ptaloc/harness/trial.hpp"
#include "ptaloc/nn/train.hpp"

namespace ptaloc {

enum class SplitTag : char { train = 't', val = 'v', test = 's' };

inline std::string_view split_name(SplitTag t) {
  switch (t) {
    case SplitTag::train: return "train";
    case SplitTag::val: return "val";
    case SplitTag::test: return "test";
  }
  return "?";
}

struct DatasetRecord {
  std::uint64_t index = 0;
  std::uint64_t seed = 0;
  Position2D p_true;
  LinkEstimates est{};
  bool estimation_ok = true;
  double tx_power_dbm = 0.0;
  SplitTag split = SplitTag::train;
};

/// Simulated samples for the learned fusers. Signals are single precision,
/// laid out per record as Rx1 then Rx2, N_c complex samples each.
struct Dataset {
  ScenarioConfig cfg;
  std::uint64_t config_hash = 0;
  std::uint64_t seed = 0;
  int n_subcarriers = 0;
  std::vector<DatasetRecord> records;
  nn::Split split;
  std::vector<std::complex<float>> signals;

  bool has_signals() const { return !signals.empty(); }
  const std::complex<float>* signal(std::size_t record, int rx_index) const {
    return signals.data() + (record * 2 + static_cast<std::size_t>(rx_index - 1)) * n_subcarriers;
  }
  CVector signal_vector(std::size_t record, int rx_index) const {
    const auto* s = signal(record, rx_index);
    CVector out(n_subcarriers);
    for (int m = 0; m < n_subcarriers; ++m) out[m] = cplx(s[m].real(), s[m].imag());
    return out;
  }
};

inline constexpr std::uint64_t kSplitStream = 0x5b117;

/// Record i uses derive_seed(seed, i), the same seed layout as a Monte
/// Carlo trial; the 8:1:1 split is a permutation drawn from the seed.
inline Dataset generate_dataset(const Experiment& exp, std::size_t n, std::uint64_t seed, bool keep_signals = true,
                                int threads = 0) {
  if (n == 0) throw Error(Errc::invalid_config, "dataset needs at least one sample");
  const ScenarioConfig& cfg = exp.cfg();
  if (keep_signals && cfg.estimate_mode != EstimateMode::signal) {
    throw Error(Errc::invalid_config, "raw signals need the signal estimation mode");
  }
  Dataset ds;
  ds.cfg = cfg;
  ds.config_hash = config_hash(cfg);
  ds.seed = seed;
  ds.n_subcarriers = cfg.n_subcarriers;
  ds.records.resize(n);
  if (keep_signals) ds.signals.resize(n * 2 * static_cast<std::size_t>(cfg.n_subcarriers));
  parallel_for(n, threads, [&](std::size_t i, int) {
    DatasetRecord& r = ds.records[i];
    r.index = i;
    r.seed = derive_seed(seed, i);
    r.tx_power_dbm = cfg.tx_power_dbm;
    r.p_true = trial_target(cfg, r.seed);
    LinkObservation obs = observe(exp, r.p_true, r.seed);
    r.est = obs.est;
    r.estimation_ok = !obs.estimation_failed;
    if (keep_signals) {
      for (int rx = 0; rx < 2; ++rx) {
        auto* dst = ds.signals.data() + (i * 2 + rx) * static_cast<std::size_t>(cfg.n_subcarriers);
        const CVector& y = (*obs.signals)[rx].y;
        for (int m = 0; m < cfg.n_subcarriers; ++m) {
          dst[m] = {static_cast<float>(y[m].real()), static_cast<float>(y[m].imag())};
        }
      }
    }
  });
  ds.split = nn::split_811(n, substream(seed, kSplitStream));
  for (auto k : ds.split.train) ds.records[k].split = SplitTag::train;
  for (auto k : ds.split.val) ds.records[k].split = SplitTag::val;
  for (auto k : ds.split.test) ds.records[k].split = SplitTag::test;
  return ds;
}

inline constexpr char kSignalMagic[8] = {'P', 'T', 'A', 'S', 'I', 'G', 'N', 'L'};
inline constexpr std::uint32_t kDatasetVersion = 1;

namespace detail {

template <typename V>
void put(std::ostream& o, V v) {
  o.write(reinterpret_cast<const char*>(&v), sizeof(V));
}

template <typename V>
V get(std::istream& in) {
  V v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(V));
  if (!in) throw Error(Errc::io_error, "truncated dataset file");
  return v;
}

inline std::string fmt(double v) {
  std::ostringstream s;
  s.precision(17);
  s << v;
  return s.str();
}

}  // namespace detail

/// Writes signals.bin (header: magic, u32 version, u32 receivers, u64
/// records, u64 subcarriers, u64 config hash; then little-endian float32
/// re/im pairs), params.csv and manifest.json into `dir`.
inline void write_dataset(const Dataset& ds, const std::string& dir) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw Error(Errc::io_error, "cannot create " + dir + ": " + ec.message());
  const fs::path root(dir);

  if (ds.has_signals()) {
    std::ofstream f(root / "signals.bin", std::ios::binary);
    if (!f) throw Error(Errc::io_error, "cannot write signals.bin in " + dir);
    f.write(kSignalMagic, 8);
    detail::put<std::uint32_t>(f, kDatasetVersion);
    detail::put<std::uint32_t>(f, 2);
    detail::put<std::uint64_t>(f, ds.records.size());
    detail::put<std::uint64_t>(f, static_cast<std::uint64_t>(ds.n_subcarriers));
    detail::put<std::uint64_t>(f, ds.config_hash);
    f.write(reinterpret_cast<const char*>(ds.signals.data()),
            static_cast<std::streamsize>(ds.signals.size() * sizeof(std::complex<float>)));
    if (!f) throw Error(Errc::io_error, "failed writing signals.bin");
  }
  {
    std::ofstream f(root / "params.csv");
    if (!f) throw Error(Errc::io_error, "cannot write params.csv in " + dir);
    f << "index,seed,split,x_true,y_true,theta1_rad,d1_m,theta2_rad,d2_m,tx_power_dbm,estimation_ok\n";
    for (const auto& r : ds.records) {
      f << r.index << ',' << r.seed << ',' << split_name(r.split) << ',' << detail::fmt(r.p_true.x) << ','
        << detail::fmt(r.p_true.y) << ',' << detail::fmt(r.est[0].theta_hat) << ',' << detail::fmt(r.est[0].d_hat)
        << ',' << detail::fmt(r.est[1].theta_hat) << ',' << detail::fmt(r.est[1].d_hat) << ','
        << detail::fmt(r.tx_power_dbm) << ',' << (r.estimation_ok ? 1 : 0) << '\n';
    }
    if (!f) throw Error(Errc::io_error, "failed writing params.csv");
  }
  const json manifest{
      {"schema", "ptaloc-dataset/1"},
      {"records", ds.records.size()},
      {"n_subcarriers", ds.n_subcarriers},
      {"seed", ds.seed},
      {"config_hash", hash_hex(ds.config_hash)},
      {"config", config_to_json(ds.cfg)},
      {"signals", ds.has_signals() ? json("signals.bin") : json(nullptr)},
      {"split", {{"train", ds.split.train.size()}, {"val", ds.split.val.size()}, {"test", ds.split.test.size()}}},
  };
  std::ofstream f(root / "manifest.json");
  if (!f) throw Error(Errc::io_error, "cannot write manifest.json in " + dir);
  f << manifest.dump(2) << '\n';
}

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream s(line);
  while (std::getline(s, cell, ',')) out.push_back(cell);
  return out;
}

}  // namespace detail

/// Reads a dataset back. The manifest's config must hash to the recorded
/// value and the signal file must carry the same hash.
inline Dataset load_dataset(const std::string& dir, bool load_signals = true) {
  namespace fs = std::filesystem;
  const fs::path root(dir);
  std::ifstream mf(root / "manifest.json");
  if (!mf) throw Error(Errc::io_error, "no manifest.json in " + dir);
  json manifest;
  try {
    manifest = json::parse(mf);
  } catch (const json::exception& e) {
    throw Error(Errc::io_error, std::string("bad manifest: ") + e.what());
  }
  if (manifest.value("schema", "") != "ptaloc-dataset/1") throw Error(Errc::io_error, "unknown dataset schema");
  Dataset ds;
  ds.cfg = config_from_json(manifest.at("config"));
  // Hashed from the stored text: a degree/radian round trip may move the
  // last bit of an angle.
  ds.config_hash = config_hash(manifest.at("config"));
  if (hash_hex(ds.config_hash) != manifest.at("config_hash").get<std::string>()) {
    throw Error(Errc::io_error, "dataset config hash mismatch");
  }
  ds.seed = manifest.at("seed").get<std::uint64_t>();
  ds.n_subcarriers = manifest.at("n_subcarriers").get<int>();
  const auto n = manifest.at("records").get<std::size_t>();

  std::ifstream pf(root / "params.csv");
  if (!pf) throw Error(Errc::io_error, "no params.csv in " + dir);
  std::string line;
  std::getline(pf, line);
  while (std::getline(pf, line)) {
    if (line.empty()) continue;
    const auto c = detail::split_csv_line(line);
    if (c.size() != 11) throw Error(Errc::io_error, "params.csv row has " + std::to_string(c.size()) + " columns");
    DatasetRecord r;
    r.index = std::stoull(c[0]);
    r.seed = std::stoull(c[1]);
    r.split = c[2] == "train" ? SplitTag::train : c[2] == "val" ? SplitTag::val : SplitTag::test;
    r.p_true = {std::stod(c[3]), std::stod(c[4])};
    for (int i = 0; i < 2; ++i) {
      r.est[i].rx_index = i + 1;
      r.est[i].theta_hat = std::stod(c[5 + 2 * i]);
      r.est[i].d_hat = std::stod(c[6 + 2 * i]);
    }
    r.tx_power_dbm = std::stod(c[9]);
    r.estimation_ok = c[10] == "1";
    if (r.index != ds.records.size()) throw Error(Errc::io_error, "params.csv rows out of order");
    switch (r.split) {
      case SplitTag::train: ds.split.train.push_back(r.index); break;
      case SplitTag::val: ds.split.val.push_back(r.index); break;
      case SplitTag::test: ds.split.test.push_back(r.index); break;
    }
    ds.records.push_back(r);
  }
  if (ds.records.size() != n) throw Error(Errc::io_error, "params.csv record count mismatch");

  if (load_signals && !manifest.at("signals").is_null()) {
    std::ifstream sf(root / "signals.bin", std::ios::binary);
    if (!sf) throw Error(Errc::io_error, "no signals.bin in " + dir);
    char magic[8];
    sf.read(magic, 8);
    if (!sf || std::memcmp(magic, kSignalMagic, 8) != 0) throw Error(Errc::io_error, "signals.bin has a bad magic");
    if (detail::get<std::uint32_t>(sf) != kDatasetVersion) throw Error(Errc::io_error, "unsupported signals.bin version");
    if (detail::get<std::uint32_t>(sf) != 2) throw Error(Errc::io_error, "signals.bin must hold 2 receivers");
    if (detail::get<std::uint64_t>(sf) != n) throw Error(Errc::io_error, "signals.bin record count mismatch");
    if (detail::get<std::uint64_t>(sf) != static_cast<std::uint64_t>(ds.n_subcarriers)) {
      throw Error(Errc::io_error, "signals.bin subcarrier count mismatch");
    }
    if (detail::get<std::uint64_t>(sf) != ds.config_hash) throw Error(Errc::io_error, "signals.bin config hash mismatch");
    ds.signals.resize(n * 2 * static_cast<std::size_t>(ds.n_subcarriers));
    sf.read(reinterpret_cast<char*>(ds.signals.data()),
            static_cast<std::streamsize>(ds.signals.size() * sizeof(std::complex<float>)));
    if (!sf) throw Error(Errc::io_error, "truncated signals.bin");
  }
  return ds;
}

}  // namespace ptaloc
