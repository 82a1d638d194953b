#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <vector>

#include "pact/core.hpp"
#include "pact/rng.hpp"

namespace pact {

/// Procedural branching-vessel phantom parameters. Defaults are tuned for
/// 64x64 training grids.
struct VesselPhantomConfig {
  int ny = 64;
  int nx = 64;
  int n_trees = 3;
  int branch_depth = 3;
  double min_width = 0.9;   // capsule radius in pixels
  double max_width = 2.0;
  double min_curvature = 0.02;  // radians of heading jitter per step
  double max_curvature = 0.22;
  double min_intensity = 0.55;
  double max_intensity = 1.0;
  uint64_t seed = 0;
};

namespace detail {

inline void rasterize_capsule(Image& img, double x0, double y0, double x1, double y1,
                              double radius, double intensity) {
  const int jmin = std::max(0, static_cast<int>(std::floor(std::min(x0, x1) - radius - 1)));
  const int jmax = std::min(img.nx - 1, static_cast<int>(std::ceil(std::max(x0, x1) + radius + 1)));
  const int imin = std::max(0, static_cast<int>(std::floor(std::min(y0, y1) - radius - 1)));
  const int imax = std::min(img.ny - 1, static_cast<int>(std::ceil(std::max(y0, y1) + radius + 1)));
  const double ex = x1 - x0, ey = y1 - y0;
  const double len2 = ex * ex + ey * ey;
  for (int i = imin; i <= imax; ++i) {
    for (int j = jmin; j <= jmax; ++j) {
      const double px = j - x0, py = i - y0;
      double t = len2 > 0.0 ? (px * ex + py * ey) / len2 : 0.0;
      t = std::clamp(t, 0.0, 1.0);
      const double dx = px - t * ex, dy = py - t * ey;
      if (dx * dx + dy * dy <= radius * radius)
        img.at(i, j) = std::max(img.at(i, j), intensity);
    }
  }
}

struct VesselBranch {
  double x, y, heading, width;
  int depth;
};

}  // namespace detail

/// Seeded random branching trees rasterized as capsule chains. Values lie in
/// [0, 1] and the output is deterministic per seed.
inline Image generate_vessel_phantom(const VesselPhantomConfig& cfg) {
  require(cfg.ny >= 8 && cfg.nx >= 8, ErrorKind::invalid_argument,
          "vessel phantom grid must be at least 8x8");
  require(cfg.n_trees >= 0, ErrorKind::invalid_argument, "n_trees must be >= 0");
  require(cfg.branch_depth >= 1, ErrorKind::invalid_argument, "branch_depth must be >= 1");
  require(cfg.min_intensity >= 0.0 && cfg.max_intensity <= 1.0 &&
              cfg.min_intensity <= cfg.max_intensity,
          ErrorKind::invalid_argument, "intensity range must lie in [0,1]");

  Image img(cfg.ny, cfg.nx, 0.0);
  Rng rng(cfg.seed);
  const double diag = std::sqrt(static_cast<double>(cfg.nx) * cfg.nx +
                                static_cast<double>(cfg.ny) * cfg.ny);

  for (int t = 0; t < cfg.n_trees; ++t) {
    const double intensity = rng.uniform(cfg.min_intensity, cfg.max_intensity);
    std::vector<detail::VesselBranch> stack;
    stack.push_back({rng.uniform(0.18, 0.82) * cfg.nx, rng.uniform(0.18, 0.82) * cfg.ny,
                     rng.uniform(0.0, 2.0 * std::numbers::pi),
                     rng.uniform(cfg.min_width, cfg.max_width), 0});
    // Depth-first expansion keeps the draw order independent of rasterized
    // content.
    while (!stack.empty()) {
      detail::VesselBranch br = stack.back();
      stack.pop_back();
      const double curvature = rng.uniform(cfg.min_curvature, cfg.max_curvature);
      const int steps = 4 + static_cast<int>(rng.below(5));
      const double step_len = diag * rng.uniform(0.035, 0.065);
      double x = br.x, y = br.y, heading = br.heading;
      for (int s = 0; s < steps; ++s) {
        heading += rng.uniform(-curvature, curvature);
        const double nx_ = x + step_len * std::cos(heading);
        const double ny_ = y + step_len * std::sin(heading);
        detail::rasterize_capsule(img, x, y, nx_, ny_, br.width, intensity);
        x = nx_;
        y = ny_;
      }
      if (br.depth + 1 < cfg.branch_depth) {
        const double spread = rng.uniform(0.35, 0.85);
        const double w = std::max(0.45, br.width * 0.72);
        stack.push_back({x, y, heading + spread, w, br.depth + 1});
        stack.push_back({x, y, heading - spread, w, br.depth + 1});
      }
    }
  }
  return img;
}

// ---------------------------------------------------------------------------
// Mask augmentation: quadrant split, seeded rotations, max-superposition,
// centered placement.

/// Nearest-neighbor rotation about the image center; pixels mapping outside
/// the source are zero.
inline Image rotate_nearest(const Image& img, double angle_deg) {
  Image out(img.ny, img.nx, 0.0);
  const double a = angle_deg * std::numbers::pi / 180.0;
  const double ca = std::cos(a), sa = std::sin(a);
  const double cx = (img.nx - 1) / 2.0, cy = (img.ny - 1) / 2.0;
  for (int i = 0; i < out.ny; ++i) {
    for (int j = 0; j < out.nx; ++j) {
      // inverse map: rotate output coordinates by -angle
      const double dx = j - cx, dy = i - cy;
      const double sx = ca * dx + sa * dy + cx;
      const double sy = -sa * dx + ca * dy + cy;
      const int jj = static_cast<int>(std::lround(sx));
      const int ii = static_cast<int>(std::lround(sy));
      if (ii >= 0 && ii < img.ny && jj >= 0 && jj < img.nx) out.at(i, j) = img.at(ii, jj);
    }
  }
  return out;
}

/// Copies `src` centered onto a ny x nx canvas.
inline Image place_centered(const Image& src, int ny, int nx) {
  Image out(ny, nx, 0.0);
  const int oi = (ny - src.ny) / 2;
  const int oj = (nx - src.nx) / 2;
  for (int i = 0; i < src.ny; ++i) {
    const int ti = i + oi;
    if (ti < 0 || ti >= ny) continue;
    for (int j = 0; j < src.nx; ++j) {
      const int tj = j + oj;
      if (tj < 0 || tj >= nx) continue;
      out.at(ti, tj) = src.at(i, j);
    }
  }
  return out;
}

inline std::array<Image, 4> split_quadrants(const Image& mask) {
  require(mask.ny >= 2 && mask.nx >= 2, ErrorKind::invalid_argument,
          "mask must be at least 2x2");
  const int hy = mask.ny / 2, hx = mask.nx / 2;
  std::array<Image, 4> quads{Image(hy, hx), Image(hy, hx), Image(hy, hx), Image(hy, hx)};
  for (int q = 0; q < 4; ++q) {
    const int oi = (q / 2) * hy, oj = (q % 2) * hx;
    for (int i = 0; i < hy; ++i)
      for (int j = 0; j < hx; ++j) quads[static_cast<size_t>(q)].at(i, j) = mask.at(i + oi, j + oj);
  }
  return quads;
}

/// The two rotated fragments an augmentation pass will superpose; exposed so
/// their supports can be compared against the merged output.
inline std::pair<Image, Image> augment_fragments(const Image& mask, uint64_t seed) {
  const auto quads = split_quadrants(mask);
  Rng rng(seed);
  const int qa = static_cast<int>(rng.below(4));
  int qb = static_cast<int>(rng.below(3));
  if (qb >= qa) ++qb;  // two distinct quadrants
  const double angle_a = rng.uniform(0.0, 360.0);
  const double angle_b = rng.uniform(0.0, 360.0);
  return {rotate_nearest(quads[static_cast<size_t>(qa)], angle_a),
          rotate_nearest(quads[static_cast<size_t>(qb)], angle_b)};
}

/// Quadrant-split augmentation: pick two fragments, rotate them randomly,
/// superpose by elementwise max and re-center on the mask-sized grid.
inline Image augment_mask(const Image& mask, uint64_t seed) {
  const auto [a, b] = augment_fragments(mask, seed);
  Image merged(a.ny, a.nx, 0.0);
  for (size_t i = 0; i < merged.pixels.size(); ++i)
    merged.pixels[i] = std::max(a.pixels[i], b.pixels[i]);
  return place_centered(merged, mask.ny, mask.nx);
}

}  // namespace pact
