#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <limits>
#include <numbers>
#include <string>
#include <vector>

#include <json.hpp>

#include "pact/core.hpp"

namespace pact {

/// Pixel grid half of the imaging configuration. Origin is the physical
/// coordinate of the center of pixel (0,0).
struct GridSpec {
  int nx = 0;
  int ny = 0;
  double pixel_size = 0.0;
  std::array<double, 2> origin{0.0, 0.0};
};

/// Time-sampling half of the imaging configuration.
struct AcquisitionSpec {
  double sound_speed = 1500.0;
  double sample_period = 0.0;
  int n_samples = 0;
  double t_start = 0.0;
};

/// Immutable imaging configuration shared by the forward operator,
/// back-projection and data synthesis. SI units throughout.
struct ImagingGeometry {
  int grid_nx = 0;
  int grid_ny = 0;
  double pixel_size = 0.0;
  std::array<double, 2> grid_origin{0.0, 0.0};
  std::vector<std::array<double, 2>> detectors;
  double sound_speed = 1500.0;
  double sample_period = 0.0;
  int n_samples = 0;
  double t_start = 0.0;

  // Arc metadata, present when built from a ring/arc layout. Back-projection
  // uses the arc center to orient detector normals.
  bool has_arc = false;
  std::array<double, 2> arc_center{0.0, 0.0};
  double arc_radius = 0.0;

  int n_pixels() const { return grid_nx * grid_ny; }
  int n_detectors() const { return static_cast<int>(detectors.size()); }

  /// Physical position of the center of pixel (i, j); i indexes rows (y).
  std::array<double, 2> pixel_position(int i, int j) const {
    return {grid_origin[0] + j * pixel_size, grid_origin[1] + i * pixel_size};
  }

  double t_end() const { return t_start + (n_samples - 1) * sample_period; }

  void validate() const {
    require(grid_nx > 0 && grid_ny > 0, ErrorKind::invalid_argument,
            "grid dimensions must be positive");
    require(pixel_size > 0.0, ErrorKind::invalid_argument, "pixel_size must be positive");
    require(sound_speed > 0.0, ErrorKind::invalid_argument, "sound_speed must be positive");
    require(sample_period > 0.0, ErrorKind::invalid_argument,
            "sample_period must be positive");
    require(n_samples >= 2, ErrorKind::invalid_argument, "need at least 2 time samples");
    require(!detectors.empty(), ErrorKind::invalid_argument, "detector list is empty");
  }
};

inline ImagingGeometry make_half_ring_geometry(int n_detectors, double radius,
                                               std::array<double, 2> center,
                                               double angular_span_deg,
                                               double start_angle_deg,
                                               const GridSpec& grid,
                                               const AcquisitionSpec& acq) {
  require(n_detectors >= 1, ErrorKind::invalid_argument, "need at least one detector");
  require(radius > 0.0, ErrorKind::invalid_argument, "ring radius must be positive");
  require(angular_span_deg > 0.0 && angular_span_deg <= 360.0, ErrorKind::invalid_argument,
          "angular span must be in (0, 360]");

  ImagingGeometry g;
  g.grid_nx = grid.nx;
  g.grid_ny = grid.ny;
  g.pixel_size = grid.pixel_size;
  g.grid_origin = grid.origin;
  g.sound_speed = acq.sound_speed;
  g.sample_period = acq.sample_period;
  g.n_samples = acq.n_samples;
  g.t_start = acq.t_start;
  g.has_arc = true;
  g.arc_center = center;
  g.arc_radius = radius;

  // Partial arcs place elements at both endpoints; a full ring spaces them
  // span/n apart so the wrap point is not duplicated.
  const double deg2rad = std::numbers::pi / 180.0;
  const bool full_ring = angular_span_deg == 360.0;
  const double step_deg =
      (n_detectors == 1) ? 0.0
      : full_ring        ? angular_span_deg / n_detectors
                         : angular_span_deg / (n_detectors - 1);
  g.detectors.reserve(static_cast<size_t>(n_detectors));
  for (int k = 0; k < n_detectors; ++k) {
    const double theta = (start_angle_deg + k * step_deg) * deg2rad;
    g.detectors.push_back(
        {center[0] + radius * std::cos(theta), center[1] + radius * std::sin(theta)});
  }
  g.validate();
  return g;
}

struct CoverageReport {
  double max_tof = 0.0;
  double min_tof = 0.0;
  bool covered = false;
  // pixel/detector realizing max_tof, for diagnostics
  int worst_pixel_i = 0;
  int worst_pixel_j = 0;
  int worst_detector = 0;
};

/// Checks that every pixel-detector time of flight falls inside the sampled
/// time window.
inline CoverageReport coverage_check(const ImagingGeometry& g) {
  g.validate();
  CoverageReport rep;
  rep.min_tof = std::numeric_limits<double>::infinity();
  for (int i = 0; i < g.grid_ny; ++i) {
    for (int j = 0; j < g.grid_nx; ++j) {
      const auto p = g.pixel_position(i, j);
      for (int d = 0; d < g.n_detectors(); ++d) {
        const double dx = p[0] - g.detectors[d][0];
        const double dy = p[1] - g.detectors[d][1];
        const double tof = std::sqrt(dx * dx + dy * dy) / g.sound_speed;
        if (tof > rep.max_tof) {
          rep.max_tof = tof;
          rep.worst_pixel_i = i;
          rep.worst_pixel_j = j;
          rep.worst_detector = d;
        }
        if (tof < rep.min_tof) rep.min_tof = tof;
      }
    }
  }
  rep.covered = rep.min_tof >= g.t_start && rep.max_tof <= g.t_end();
  return rep;
}

/// Smallest n_samples that makes the geometry covered at its sample period.
inline int required_samples(const ImagingGeometry& g) {
  ImagingGeometry probe = g;
  probe.n_samples = 2;
  const auto rep = coverage_check(probe);
  return static_cast<int>(std::ceil((rep.max_tof - g.t_start) / g.sample_period)) + 1;
}

// ---------------------------------------------------------------------------
// Fingerprint: FNV-1a over the canonical byte layout of every field that
// affects the operator. Persisted files verify it on load.

namespace detail {
inline void fnv1a(uint64_t& h, const void* data, size_t n) {
  auto* p = static_cast<const unsigned char*>(data);
  for (size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 0x100000001B3ULL;
  }
}
inline void fnv1a_f64(uint64_t& h, double v) {
  uint64_t bits;
  std::memcpy(&bits, &v, sizeof bits);
  fnv1a(h, &bits, sizeof bits);
}
inline void fnv1a_i64(uint64_t& h, int64_t v) { fnv1a(h, &v, sizeof v); }
}  // namespace detail

inline uint64_t geometry_fingerprint(const ImagingGeometry& g) {
  uint64_t h = 0xCBF29CE484222325ULL;
  detail::fnv1a_i64(h, g.grid_nx);
  detail::fnv1a_i64(h, g.grid_ny);
  detail::fnv1a_f64(h, g.pixel_size);
  detail::fnv1a_f64(h, g.grid_origin[0]);
  detail::fnv1a_f64(h, g.grid_origin[1]);
  detail::fnv1a_f64(h, g.sound_speed);
  detail::fnv1a_f64(h, g.sample_period);
  detail::fnv1a_i64(h, g.n_samples);
  detail::fnv1a_f64(h, g.t_start);
  detail::fnv1a_i64(h, g.n_detectors());
  for (const auto& d : g.detectors) {
    detail::fnv1a_f64(h, d[0]);
    detail::fnv1a_f64(h, d[1]);
  }
  return h;
}

// ---------------------------------------------------------------------------
// JSON round trip with unit-annotated keys; consumed by the CLI config.

inline nlohmann::json geometry_to_json(const ImagingGeometry& g) {
  nlohmann::json j;
  j["grid_nx"] = g.grid_nx;
  j["grid_ny"] = g.grid_ny;
  j["pixel_size_m"] = g.pixel_size;
  j["grid_origin_m"] = {g.grid_origin[0], g.grid_origin[1]};
  j["sound_speed_m_per_s"] = g.sound_speed;
  j["sample_period_s"] = g.sample_period;
  j["n_samples"] = g.n_samples;
  j["t_start_s"] = g.t_start;
  nlohmann::json dets = nlohmann::json::array();
  for (const auto& d : g.detectors) dets.push_back({d[0], d[1]});
  j["detectors_m"] = std::move(dets);
  if (g.has_arc) {
    j["arc_center_m"] = {g.arc_center[0], g.arc_center[1]};
    j["arc_radius_m"] = g.arc_radius;
  }
  return j;
}

inline ImagingGeometry geometry_from_json(const nlohmann::json& j) {
  ImagingGeometry g;
  try {
    g.grid_nx = j.at("grid_nx").get<int>();
    g.grid_ny = j.at("grid_ny").get<int>();
    g.pixel_size = j.at("pixel_size_m").get<double>();
    g.grid_origin = {j.at("grid_origin_m").at(0).get<double>(),
                     j.at("grid_origin_m").at(1).get<double>()};
    g.sound_speed = j.at("sound_speed_m_per_s").get<double>();
    g.sample_period = j.at("sample_period_s").get<double>();
    g.n_samples = j.at("n_samples").get<int>();
    g.t_start = j.at("t_start_s").get<double>();
    for (const auto& d : j.at("detectors_m"))
      g.detectors.push_back({d.at(0).get<double>(), d.at(1).get<double>()});
    if (j.contains("arc_center_m")) {
      g.has_arc = true;
      g.arc_center = {j.at("arc_center_m").at(0).get<double>(),
                      j.at("arc_center_m").at(1).get<double>()};
      g.arc_radius = j.at("arc_radius_m").get<double>();
    }
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::format, std::string("bad geometry JSON: ") + e.what());
  }
  g.validate();
  return g;
}

}  // namespace pact
