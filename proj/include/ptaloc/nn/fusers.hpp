#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "ptaloc/channel.hpp"
#include "ptaloc/errors.hpp"
#include "ptaloc/fusion.hpp"
#include "ptaloc/nn/model.hpp"
#include "ptaloc/nn/train.hpp"
#include "ptaloc/scenario.hpp"

namespace ptaloc::nn {

/// Affine map between the ROI bounding box and [-1, 1]^2.
struct LabelBox {
  Position2D center;
  Position2D half;

  static LabelBox from_roi(const HexRegion& roi) {
    const auto [lo, hi] = roi.bounding_box();
    return {0.5 * (lo + hi), 0.5 * (hi - lo)};
  }
  Position2D normalize(Position2D p) const { return {(p.x - center.x) / half.x, (p.y - center.y) / half.y}; }
  Position2D denormalize(Position2D u) const { return {center.x + u.x * half.x, center.y + u.y * half.y}; }
};

/// PF-MLP inputs: per link the AoA relative to the receiver boresight
/// (continuous over the sweep, unlike the global angle which can cross
/// +-180 degrees) and the bistatic distance.
inline std::array<double, 4> mlp_features(const LinkEstimates& est, const ScenarioConfig& cfg) {
  return {wrap_angle(est[0].theta_hat - cfg.rx_boresight(1)), est[0].d_hat,
          wrap_angle(est[1].theta_hat - cfg.rx_boresight(2)), est[1].d_hat};
}

enum class CnnEncoding { real_imag, mag_phase };

/// SF-CNN input for one trial: 4 x N_c planes (Rx1 then Rx2; real/imag or
/// magnitude/phase). Both receivers are scaled by one common factor, the
/// RMS magnitude over the pair, so the path-loss dynamic range is removed
/// while the inter-link power ratio is kept.
template <typename T>
void cnn_input(const CVector& y1, const CVector& y2, CnnEncoding enc, T* out) {
  if (y1.size() != y2.size()) throw Error(Errc::shape_mismatch, "receiver signals differ in length");
  const std::size_t n = y1.size();
  double energy = 0.0;
  for (std::size_t m = 0; m < n; ++m) energy += std::norm(y1[m]) + std::norm(y2[m]);
  const double rms = std::sqrt(energy / (2.0 * static_cast<double>(n)));
  const double inv = rms > 0.0 ? 1.0 / rms : 0.0;
  const CVector* ys[2] = {&y1, &y2};
  for (int r = 0; r < 2; ++r) {
    T* a = out + static_cast<std::size_t>(2 * r) * n;
    T* b = a + n;
    for (std::size_t m = 0; m < n; ++m) {
      const cplx v = (*ys[r])[m] * inv;
      if (enc == CnnEncoding::real_imag) {
        a[m] = static_cast<T>(v.real());
        b[m] = static_cast<T>(v.imag());
      } else {
        a[m] = static_cast<T>(std::abs(v));
        b[m] = static_cast<T>(std::arg(v));
      }
    }
  }
}

inline nlohmann::json to_json(const MlpSpec& s) {
  return {{"input_dim", s.input_dim}, {"hidden", s.hidden}, {"output_dim", s.output_dim}};
}

inline MlpSpec mlp_spec_from_json(const nlohmann::json& j) {
  MlpSpec s;
  s.input_dim = j.at("input_dim").get<int>();
  s.hidden = j.at("hidden").get<std::array<int, 2>>();
  s.output_dim = j.at("output_dim").get<int>();
  s.validate();
  return s;
}

inline nlohmann::json to_json(const CnnSpec& s) {
  nlohmann::json conv = nlohmann::json::array();
  for (const auto& c : s.conv) conv.push_back({{"channels", c.channels}, {"kernel", c.kernel}, {"stride", c.stride}});
  return {{"input_channels", s.input_channels}, {"input_length", s.input_length}, {"conv", conv},
          {"pool_bins", s.pool_bins},           {"head", s.head},                 {"leaky_slope", s.leaky_slope}};
}

inline CnnSpec cnn_spec_from_json(const nlohmann::json& j) {
  CnnSpec s;
  s.input_channels = j.at("input_channels").get<int>();
  s.input_length = j.at("input_length").get<int>();
  const auto& conv = j.at("conv");
  if (!conv.is_array() || conv.size() != 5) throw Error(Errc::invalid_config, "CNN needs exactly 5 conv layers");
  for (std::size_t i = 0; i < 5; ++i) {
    s.conv[i] = {conv[i].at("channels").get<int>(), conv[i].at("kernel").get<int>(), conv[i].at("stride").get<int>()};
  }
  s.pool_bins = j.at("pool_bins").get<int>();
  s.head = j.at("head").get<std::array<int, 3>>();
  s.leaky_slope = j.at("leaky_slope").get<double>();
  s.validate();
  return s;
}

namespace detail {

inline constexpr char kCheckpointMagic[8] = {'P', 'T', 'A', 'L', 'O', 'C', 'N', 'N'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

/// magic | u32 version | u64 header length | JSON header | u64 n | n doubles,
/// all little-endian.
inline void write_checkpoint(const std::string& path, const nlohmann::json& header, const std::vector<double>& state) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error(Errc::io_error, "cannot write checkpoint " + path);
  const std::string h = header.dump();
  const std::uint64_t hl = h.size(), n = state.size();
  f.write(kCheckpointMagic, 8);
  f.write(reinterpret_cast<const char*>(&kCheckpointVersion), 4);
  f.write(reinterpret_cast<const char*>(&hl), 8);
  f.write(h.data(), static_cast<std::streamsize>(h.size()));
  f.write(reinterpret_cast<const char*>(&n), 8);
  f.write(reinterpret_cast<const char*>(state.data()), static_cast<std::streamsize>(n * sizeof(double)));
  if (!f) throw Error(Errc::io_error, "failed writing checkpoint " + path);
}

inline std::pair<nlohmann::json, std::vector<double>> read_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Error(Errc::io_error, "cannot open checkpoint " + path);
  char magic[8];
  std::uint32_t version = 0;
  std::uint64_t hl = 0, n = 0;
  f.read(magic, 8);
  f.read(reinterpret_cast<char*>(&version), 4);
  if (!f || std::memcmp(magic, kCheckpointMagic, 8) != 0) throw Error(Errc::io_error, path + " is not a checkpoint");
  if (version != kCheckpointVersion) throw Error(Errc::io_error, "unsupported checkpoint version");
  f.read(reinterpret_cast<char*>(&hl), 8);
  if (!f || hl > (1u << 24)) throw Error(Errc::io_error, "corrupt checkpoint header");
  std::string h(hl, '\0');
  f.read(h.data(), static_cast<std::streamsize>(hl));
  f.read(reinterpret_cast<char*>(&n), 8);
  if (!f || n > (1ull << 32)) throw Error(Errc::io_error, "corrupt checkpoint payload size");
  std::vector<double> state(n);
  f.read(reinterpret_cast<char*>(state.data()), static_cast<std::streamsize>(n * sizeof(double)));
  if (!f) throw Error(Errc::io_error, "truncated checkpoint " + path);
  return {nlohmann::json::parse(h), std::move(state)};
}

inline nlohmann::json to_json(const Normalizer& n) { return {{"shift", n.shift}, {"scale", n.scale}}; }
inline Normalizer normalizer_from_json(const nlohmann::json& j) {
  return {j.at("shift").get<std::vector<double>>(), j.at("scale").get<std::vector<double>>()};
}
inline nlohmann::json to_json(const LabelBox& b) {
  return {{"center", {b.center.x, b.center.y}}, {"half", {b.half.x, b.half.y}}};
}
inline LabelBox label_box_from_json(const nlohmann::json& j) {
  const auto c = j.at("center").get<std::array<double, 2>>();
  const auto h = j.at("half").get<std::array<double, 2>>();
  return {{c[0], c[1]}, {h[0], h[1]}};
}

template <typename T>
std::vector<double> to_double(const std::vector<T>& v) {
  return {v.begin(), v.end()};
}
template <typename T>
std::vector<T> from_double(const std::vector<double>& v) {
  std::vector<T> out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = static_cast<T>(v[i]);
  return out;
}

}  // namespace detail

/// Parameter-level fuser with its feature normalizer and label box.
struct PfMlp {
  MlpSpec spec;
  Sequential<double> net;
  Normalizer norm;
  LabelBox box;

  PfMlp() = default;
  PfMlp(MlpSpec s, LabelBox b) : spec(s), net(build_mlp<double>(s)), box(b) {}

  Position2D predict(const LinkEstimates& est, const ScenarioConfig& cfg) {
    const auto f = mlp_features(est, cfg);
    Tensor<double> x(1, 4, 1);
    std::copy(f.begin(), f.end(), x.data.begin());
    norm.apply(x);
    const Tensor<double> y = net.forward(x, false);
    return box.denormalize({y.data[0], y.data[1]});
  }

  /// Independent copy for use on another thread.
  PfMlp clone() {
    PfMlp c(spec, box);
    c.norm = norm;
    c.net.load_state(net.state());
    return c;
  }

  void save(const std::string& path) {
    const nlohmann::json h{{"kind", "PF-MLP"}, {"spec", to_json(spec)}, {"normalizer", detail::to_json(norm)},
                           {"label_box", detail::to_json(box)}, {"parameters", net.parameter_count()}};
    detail::write_checkpoint(path, h, net.state());
  }

  static PfMlp load(const std::string& path) {
    auto [h, state] = detail::read_checkpoint(path);
    if (h.at("kind") != "PF-MLP") throw Error(Errc::io_error, path + " does not hold a PF-MLP");
    PfMlp m(mlp_spec_from_json(h.at("spec")), detail::label_box_from_json(h.at("label_box")));
    m.norm = detail::normalizer_from_json(h.at("normalizer"));
    m.net.load_state(state);
    return m;
  }
};

/// Signal-level fuser. Single precision keeps the desk dataset in memory.
struct SfCnn {
  CnnSpec spec;
  CnnEncoding encoding = CnnEncoding::real_imag;
  Sequential<float> net;
  Normalizer norm;
  LabelBox box;

  SfCnn() = default;
  SfCnn(CnnSpec s, CnnEncoding e, LabelBox b) : spec(s), encoding(e), net(build_cnn<float>(s)), box(b) {}

  Position2D predict(const CVector& y1, const CVector& y2) {
    if (static_cast<int>(y1.size()) != spec.input_length) throw Error(Errc::shape_mismatch, "signal length mismatch");
    Tensor<float> x(1, 4, spec.input_length);
    cnn_input(y1, y2, encoding, x.data.data());
    norm.apply(x);
    const Tensor<float> y = net.forward(x, false);
    return box.denormalize({y.data[0], y.data[1]});
  }

  SfCnn clone() {
    SfCnn c(spec, encoding, box);
    c.norm = norm;
    c.net.load_state(net.state());
    return c;
  }

  void save(const std::string& path) {
    const nlohmann::json h{{"kind", "SF-CNN"},
                           {"spec", to_json(spec)},
                           {"encoding", encoding == CnnEncoding::real_imag ? "real_imag" : "mag_phase"},
                           {"normalizer", detail::to_json(norm)},
                           {"label_box", detail::to_json(box)},
                           {"parameters", net.parameter_count()}};
    detail::write_checkpoint(path, h, detail::to_double(net.state()));
  }

  static SfCnn load(const std::string& path) {
    auto [h, state] = detail::read_checkpoint(path);
    if (h.at("kind") != "SF-CNN") throw Error(Errc::io_error, path + " does not hold an SF-CNN");
    const CnnEncoding enc = h.at("encoding") == "mag_phase" ? CnnEncoding::mag_phase : CnnEncoding::real_imag;
    SfCnn m(cnn_spec_from_json(h.at("spec")), enc, detail::label_box_from_json(h.at("label_box")));
    m.norm = detail::normalizer_from_json(h.at("normalizer"));
    m.net.load_state(detail::from_double<float>(state));
    return m;
  }
};

}  // namespace ptaloc::nn
