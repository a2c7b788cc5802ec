#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace ptaloc {

enum class Errc {
  degenerate_geometry,
  singular_geometry,
  invalid_sweep,
  out_of_sweep,
  synthesis_failed,
  zero_signal,
  tangent_ray,
  infeasible_ellipse,
  parallel_rays,
  shape_mismatch,
  non_finite_gradient,
  diverged,
  degenerate_feature,
  invalid_config,
  io_error,
};

constexpr std::string_view errc_name(Errc code) {
  switch (code) {
    case Errc::degenerate_geometry: return "DegenerateGeometry";
    case Errc::singular_geometry: return "SingularGeometry";
    case Errc::invalid_sweep: return "InvalidSweep";
    case Errc::out_of_sweep: return "OutOfSweep";
    case Errc::synthesis_failed: return "SynthesisFailed";
    case Errc::zero_signal: return "ZeroSignal";
    case Errc::tangent_ray: return "TangentRay";
    case Errc::infeasible_ellipse: return "InfeasibleEllipse";
    case Errc::parallel_rays: return "ParallelRays";
    case Errc::shape_mismatch: return "ShapeMismatch";
    case Errc::non_finite_gradient: return "NonFiniteGradient";
    case Errc::diverged: return "Diverged";
    case Errc::degenerate_feature: return "DegenerateFeature";
    case Errc::invalid_config: return "InvalidConfig";
    case Errc::io_error: return "IoError";
  }
  return "Unknown";
}

/// Every failure raised by the library carries one of the codes above so
/// callers (the trial runner in particular) can record it without parsing text.
class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what)
      : std::runtime_error(std::string(errc_name(code)) + ": " + what), code_(code) {}

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

}  // namespace ptaloc
