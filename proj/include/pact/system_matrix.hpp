#pragma once

#include <algorithm>
#include <cmath>
#include <concepts>
#include <cstdint>
#include <sstream>
#include <string>
#include <vector>

#include "pact/core.hpp"
#include "pact/geometry.hpp"
#include "pact/io.hpp"
#include "pact/rng.hpp"

namespace pact {

/// Anything that maps images to channel data and back. The sparse matrix
/// below is the production implementation; tests substitute dense and
/// instrumented operators.
template <class Op>
concept LinearOperator = requires(const Op& a, const Image& p, const Sinogram& b) {
  { a.forward(p) } -> std::same_as<Sinogram>;
  { a.adjoint(b) } -> std::same_as<Image>;
  { a.image_ny() } -> std::convertible_to<int>;
  { a.image_nx() } -> std::convertible_to<int>;
  { a.data_detectors() } -> std::convertible_to<int>;
  { a.data_samples() } -> std::convertible_to<int>;
  { a.fingerprint() } -> std::convertible_to<uint64_t>;
};

/// Sparse row-compressed discretization of the acoustic forward operator.
/// Row (d, k) holds the circular-arc contribution of every pixel whose time
/// of flight to detector d interpolates onto sample k. The transpose is
/// materialized alongside so the adjoint runs row-parallel with a fixed
/// accumulation order.
struct SystemMatrix {
  int64_t n_rows = 0;
  int64_t n_cols = 0;
  std::vector<int64_t> row_offsets;
  std::vector<int64_t> col_indices;
  std::vector<double> values;
  uint64_t geometry_fingerprint = 0;

  int n_detectors = 0, n_samples = 0;
  int grid_ny = 0, grid_nx = 0;

  // transpose (one row per pixel), rebuilt deterministically from the CSR
  std::vector<int64_t> t_row_offsets;
  std::vector<int64_t> t_col_indices;
  std::vector<double> t_values;

  int64_t nnz() const { return static_cast<int64_t>(values.size()); }

  int image_ny() const { return grid_ny; }
  int image_nx() const { return grid_nx; }
  int data_detectors() const { return n_detectors; }
  int data_samples() const { return n_samples; }
  uint64_t fingerprint() const { return geometry_fingerprint; }

  Sinogram forward(const Image& p) const {
    require(p.ny == grid_ny && p.nx == grid_nx, ErrorKind::shape_mismatch,
            "forward: image dimensions do not match operator grid");
    Sinogram b(n_detectors, n_samples, 0.0);
    const double* x = p.pixels.data();
    double* y = b.samples.data();
#pragma omp parallel for schedule(static)
    for (int64_t r = 0; r < n_rows; ++r) {
      double acc = 0.0;
      for (int64_t e = row_offsets[r]; e < row_offsets[r + 1]; ++e)
        acc += values[e] * x[col_indices[e]];
      y[r] = acc;
    }
    return b;
  }

  Image adjoint(const Sinogram& b) const {
    require(b.n_detectors == n_detectors && b.n_samples == n_samples,
            ErrorKind::shape_mismatch,
            "adjoint: sinogram dimensions do not match operator");
    Image p(grid_ny, grid_nx, 0.0);
    const double* y = b.samples.data();
    double* x = p.pixels.data();
#pragma omp parallel for schedule(static)
    for (int64_t c = 0; c < n_cols; ++c) {
      double acc = 0.0;
      for (int64_t e = t_row_offsets[c]; e < t_row_offsets[c + 1]; ++e)
        acc += t_values[e] * y[t_col_indices[e]];
      x[c] = acc;
    }
    return p;
  }

  void build_transpose() {
    t_row_offsets.assign(static_cast<size_t>(n_cols) + 1, 0);
    for (int64_t c : col_indices) t_row_offsets[static_cast<size_t>(c) + 1]++;
    for (int64_t c = 0; c < n_cols; ++c) t_row_offsets[c + 1] += t_row_offsets[c];
    t_col_indices.resize(values.size());
    t_values.resize(values.size());
    std::vector<int64_t> cursor(t_row_offsets.begin(), t_row_offsets.end() - 1);
    for (int64_t r = 0; r < n_rows; ++r) {
      for (int64_t e = row_offsets[r]; e < row_offsets[r + 1]; ++e) {
        const int64_t c = col_indices[e];
        const int64_t slot = cursor[c]++;
        t_col_indices[slot] = r;
        t_values[slot] = values[e];
      }
    }
  }
};

/// Discretizes the time-of-flight spherical-mean operator on the given
/// geometry. Each pixel-detector pair is linearly interpolated onto the two
/// adjacent time samples, weighted by 1/max(distance, pixel_size) amplitude
/// decay and the pixel area element.
inline SystemMatrix build_system_matrix(const ImagingGeometry& g) {
  const auto cov = coverage_check(g);
  if (!cov.covered) {
    std::ostringstream msg;
    msg << "geometry not covered by the time window: pixel (" << cov.worst_pixel_i
        << "," << cov.worst_pixel_j << ") and detector " << cov.worst_detector
        << " have time of flight " << cov.max_tof << " s outside ["
        << g.t_start << ", " << g.t_end() << "]";
    fail(ErrorKind::coverage, msg.str());
  }

  SystemMatrix A;
  A.n_detectors = g.n_detectors();
  A.n_samples = g.n_samples;
  A.grid_ny = g.grid_ny;
  A.grid_nx = g.grid_nx;
  A.n_rows = static_cast<int64_t>(A.n_detectors) * A.n_samples;
  A.n_cols = static_cast<int64_t>(A.grid_ny) * A.grid_nx;
  A.geometry_fingerprint = geometry_fingerprint(g);

  const double area = g.pixel_size * g.pixel_size;
  const double inv_dt = 1.0 / g.sample_period;
  const int last = g.n_samples - 1;

  struct Entry {
    int64_t row;
    int64_t col;
    double value;
  };

  // Two passes: count entries per row, then fill in pixel-scan order so each
  // row's columns come out sorted and the layout is reproducible.
  std::vector<int64_t> counts(static_cast<size_t>(A.n_rows) + 1, 0);
  auto visit = [&](auto&& emit) {
    for (int d = 0; d < A.n_detectors; ++d) {
      const auto det = g.detectors[d];
      const int64_t row_base = static_cast<int64_t>(d) * g.n_samples;
      for (int i = 0; i < g.grid_ny; ++i) {
        for (int j = 0; j < g.grid_nx; ++j) {
          const auto p = g.pixel_position(i, j);
          const double dx = p[0] - det[0];
          const double dy = p[1] - det[1];
          const double dist = std::sqrt(dx * dx + dy * dy);
          const double tof = dist / g.sound_speed;
          const double pos = (tof - g.t_start) * inv_dt;
          int k = static_cast<int>(std::floor(pos));
          double f = pos - k;
          if (k < 0) continue;  // coverage-checked; guards rounding at the edge
          if (k > last) continue;
          const double amp = area / std::max(dist, g.pixel_size);
          const int64_t col = static_cast<int64_t>(i) * g.grid_nx + j;
          emit(Entry{row_base + k, col, (1.0 - f) * amp});
          if (f > 0.0 && k + 1 <= last) emit(Entry{row_base + k + 1, col, f * amp});
        }
      }
    }
  };

  visit([&](const Entry& e) { counts[static_cast<size_t>(e.row) + 1]++; });
  for (int64_t r = 0; r < A.n_rows; ++r) counts[r + 1] += counts[r];
  A.row_offsets = counts;
  const int64_t nnz = counts.back();
  A.col_indices.resize(static_cast<size_t>(nnz));
  A.values.resize(static_cast<size_t>(nnz));
  std::vector<int64_t> cursor(counts.begin(), counts.end() - 1);
  visit([&](const Entry& e) {
    const int64_t slot = cursor[e.row]++;
    A.col_indices[slot] = e.col;
    A.values[slot] = e.value;
  });

  A.build_transpose();
  return A;
}

inline Sinogram apply_forward(const SystemMatrix& A, const Image& p) { return A.forward(p); }
inline Image apply_adjoint(const SystemMatrix& A, const Sinogram& b) { return A.adjoint(b); }

/// Time derivative of channel data: central differences inside, one-sided at
/// the ends (exact for affine signals).
inline Sinogram temporal_derivative(const Sinogram& b, double dt) {
  require(b.n_samples >= 3, ErrorKind::invalid_argument,
          "temporal derivative needs at least 3 samples");
  require(dt > 0.0, ErrorKind::invalid_argument, "sample period must be positive");
  Sinogram out(b.n_detectors, b.n_samples, 0.0);
  const double inv_dt = 1.0 / dt;
  const double inv_2dt = 0.5 / dt;
  for (int d = 0; d < b.n_detectors; ++d) {
    const int n = b.n_samples;
    out.at(d, 0) = (b.at(d, 1) - b.at(d, 0)) * inv_dt;
    for (int k = 1; k < n - 1; ++k)
      out.at(d, k) = (b.at(d, k + 1) - b.at(d, k - 1)) * inv_2dt;
    out.at(d, n - 1) = (b.at(d, n - 1) - b.at(d, n - 2)) * inv_dt;
  }
  return out;
}

/// Gradient of the data-consistency term 0.5*||Ap - b||^2.
template <class Op>
  requires LinearOperator<Op>
inline Image data_consistency_gradient(const Op& A, const Image& p, const Sinogram& b) {
  Sinogram residual = A.forward(p);
  require(residual.same_shape(b), ErrorKind::shape_mismatch,
          "data-consistency gradient: sinogram shape mismatch");
  for (size_t i = 0; i < residual.samples.size(); ++i) residual.samples[i] -= b.samples[i];
  return A.adjoint(residual);
}

// ---------------------------------------------------------------------------
// Matrix cache file ("PASM"). Loading verifies the geometry fingerprint.

inline void save_system_matrix(const std::string& path, const SystemMatrix& A) {
  auto os = io::open_out(path);
  io::write_magic(os, "PASM");
  io::write_u32(os, 1);
  io::write_u64(os, A.geometry_fingerprint);
  io::write_i64(os, A.n_rows);
  io::write_i64(os, A.n_cols);
  io::write_i64(os, static_cast<int64_t>(A.n_detectors));
  io::write_i64(os, static_cast<int64_t>(A.n_samples));
  io::write_i64(os, static_cast<int64_t>(A.grid_ny));
  io::write_i64(os, static_cast<int64_t>(A.grid_nx));
  io::write_i64(os, A.nnz());
  io::write_array(os, A.row_offsets);
  io::write_array(os, A.col_indices);
  io::write_array(os, A.values);
  if (!os) fail(ErrorKind::io, "write failed: " + path);
}

inline SystemMatrix load_system_matrix(const std::string& path,
                                       uint64_t expected_fingerprint) {
  auto is = io::open_in(path);
  io::check_magic(is, "PASM", "system matrix");
  const uint32_t version = io::read_u32(is, "matrix version");
  if (version != 1) fail(ErrorKind::format, "unsupported system-matrix file version");
  SystemMatrix A;
  A.geometry_fingerprint = io::read_u64(is, "matrix fingerprint");
  if (A.geometry_fingerprint != expected_fingerprint)
    fail(ErrorKind::incompatible,
         "system-matrix cache was built for a different geometry");
  A.n_rows = io::read_i64(is, "matrix n_rows");
  A.n_cols = io::read_i64(is, "matrix n_cols");
  A.n_detectors = static_cast<int>(io::read_i64(is, "matrix n_detectors"));
  A.n_samples = static_cast<int>(io::read_i64(is, "matrix n_samples"));
  A.grid_ny = static_cast<int>(io::read_i64(is, "matrix grid_ny"));
  A.grid_nx = static_cast<int>(io::read_i64(is, "matrix grid_nx"));
  const int64_t nnz = io::read_i64(is, "matrix nnz");
  io::read_array(is, A.row_offsets, static_cast<size_t>(A.n_rows) + 1, "row offsets");
  io::read_array(is, A.col_indices, static_cast<size_t>(nnz), "column indices");
  io::read_array(is, A.values, static_cast<size_t>(nnz), "values");
  A.build_transpose();
  return A;
}

}  // namespace pact
