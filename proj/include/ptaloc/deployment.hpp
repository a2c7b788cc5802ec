#pragma once

#include <array>

#include "ptaloc/beamforming.hpp"
#include "ptaloc/scenario.hpp"

namespace ptaloc {

/// Derived, immutable per-config state shared by every trial: the two
/// receive rainbow configurations and the transmit wide beam.
struct Deployment {
  ScenarioConfig cfg;
  std::array<PtaConfig, 2> pta;
  TxBeam tx_beam;

  explicit Deployment(ScenarioConfig config) : cfg(std::move(config)) {
    cfg.validate();
    for (int i = 0; i < 2; ++i) {
      pta[i] = make_pta_config(cfg.sweep_start[i], cfg.sweep_end[i], cfg.f0_hz(), cfg.bandwidth_hz(), cfg.n_elements,
                               cfg.element_spacing, cfg.n_subcarriers);
    }
    BeamSynthesisOptions opt;
    opt.carrier_hz = cfg.carrier_hz;
    opt.spacing = cfg.element_spacing;
    tx_beam = tx_wide_beam(cfg.n_elements, {cfg.tx_sector_lo, cfg.tx_sector_hi}, opt);
  }

  const PtaConfig& rx_pta(int rx_index) const { return pta.at(rx_index - 1); }
  LinkGeometry link(int rx_index) const { return cfg.link(rx_index); }
};

/// Uniform ROI target, redrawn while it falls within the degeneracy radius
/// of a node (the BS sites are hexagon vertices under the default layout).
inline Position2D sample_target(const ScenarioConfig& cfg, Rng& rng) {
  for (;;) {
    const Position2D p = sample_roi(cfg.roi, rng);
    if (distance(p, cfg.p_tx) >= kMinRange && distance(p, cfg.p_rx[0]) >= kMinRange &&
        distance(p, cfg.p_rx[1]) >= kMinRange) {
      return p;
    }
  }
}

}  // namespace ptaloc
