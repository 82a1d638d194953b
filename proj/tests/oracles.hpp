#pragma once

// Independent reference implementations used only by the test suites. These
// deliberately restate the math from scratch rather than calling into the
// library paths they check.

#include <cmath>
#include <cstdint>
#include <vector>

#include "pact/pact.hpp"

namespace oracle {

// ---------------------------------------------------------------------------
// Dense forward model by direct summation over pixel/detector/sample triples.

struct DenseOperator {
  int ny = 0, nx = 0, n_det = 0, n_samp = 0;
  uint64_t fp = 0;
  std::vector<double> entries;  // (n_det * n_samp) rows x (ny * nx) cols

  int64_t rows() const { return static_cast<int64_t>(n_det) * n_samp; }
  int64_t cols() const { return static_cast<int64_t>(ny) * nx; }
  double entry(int64_t r, int64_t c) const { return entries[r * cols() + c]; }

  int image_ny() const { return ny; }
  int image_nx() const { return nx; }
  int data_detectors() const { return n_det; }
  int data_samples() const { return n_samp; }
  uint64_t fingerprint() const { return fp; }

  pact::Sinogram forward(const pact::Image& p) const {
    pact::Sinogram b(n_det, n_samp, 0.0);
    for (int64_t r = 0; r < rows(); ++r) {
      double acc = 0.0;
      for (int64_t c = 0; c < cols(); ++c) acc += entry(r, c) * p.pixels[c];
      b.samples[r] = acc;
    }
    return b;
  }

  pact::Image adjoint(const pact::Sinogram& b) const {
    pact::Image p(ny, nx, 0.0);
    for (int64_t c = 0; c < cols(); ++c) {
      double acc = 0.0;
      for (int64_t r = 0; r < rows(); ++r) acc += entry(r, c) * b.samples[r];
      p.pixels[c] = acc;
    }
    return p;
  }
};

inline DenseOperator build_dense(const pact::ImagingGeometry& g) {
  DenseOperator M;
  M.ny = g.grid_ny;
  M.nx = g.grid_nx;
  M.n_det = g.n_detectors();
  M.n_samp = g.n_samples;
  M.fp = pact::geometry_fingerprint(g);
  M.entries.assign(static_cast<size_t>(M.rows()) * M.cols(), 0.0);
  for (int d = 0; d < M.n_det; ++d) {
    for (int i = 0; i < g.grid_ny; ++i) {
      for (int j = 0; j < g.grid_nx; ++j) {
        const auto pos = g.pixel_position(i, j);
        const double dx = pos[0] - g.detectors[d][0];
        const double dy = pos[1] - g.detectors[d][1];
        const double dist = std::sqrt(dx * dx + dy * dy);
        const double t = dist / g.sound_speed;
        const double s = (t - g.t_start) / g.sample_period;
        const int k = static_cast<int>(std::floor(s));
        if (k < 0 || k >= g.n_samples) continue;
        const double f = s - k;
        const double amp = g.pixel_size * g.pixel_size / std::max(dist, g.pixel_size);
        const int64_t col = static_cast<int64_t>(i) * g.grid_nx + j;
        const int64_t row = static_cast<int64_t>(d) * g.n_samples + k;
        M.entries[row * M.cols() + col] += (1.0 - f) * amp;
        if (f > 0.0 && k + 1 < g.n_samples)
          M.entries[(row + 1) * M.cols() + col] += f * amp;
      }
    }
  }
  return M;
}

// ---------------------------------------------------------------------------
// Operator application counter.

template <class Op>
struct CountingOperator {
  const Op& inner;
  mutable int64_t forward_calls = 0;
  mutable int64_t adjoint_calls = 0;

  explicit CountingOperator(const Op& op) : inner(op) {}

  pact::Sinogram forward(const pact::Image& p) const {
    ++forward_calls;
    return inner.forward(p);
  }
  pact::Image adjoint(const pact::Sinogram& b) const {
    ++adjoint_calls;
    return inner.adjoint(b);
  }
  int image_ny() const { return inner.image_ny(); }
  int image_nx() const { return inner.image_nx(); }
  int data_detectors() const { return inner.data_detectors(); }
  int data_samples() const { return inner.data_samples(); }
  uint64_t fingerprint() const { return inner.fingerprint(); }
};

// ---------------------------------------------------------------------------
// Arbitrary dense matrix exposed through the operator interface (1 x n
// images, m x 1 channel data) for spectral checks.

struct RawMatrixOperator {
  int m = 0, n = 0;
  std::vector<double> a;  // row-major m x n

  int image_ny() const { return 1; }
  int image_nx() const { return n; }
  int data_detectors() const { return m; }
  int data_samples() const { return 1; }
  uint64_t fingerprint() const { return 0; }

  pact::Sinogram forward(const pact::Image& p) const {
    pact::Sinogram b(m, 1, 0.0);
    for (int r = 0; r < m; ++r) {
      double acc = 0.0;
      for (int c = 0; c < n; ++c) acc += a[static_cast<size_t>(r) * n + c] * p.pixels[c];
      b.samples[r] = acc;
    }
    return b;
  }
  pact::Image adjoint(const pact::Sinogram& b) const {
    pact::Image p(1, n, 0.0);
    for (int c = 0; c < n; ++c) {
      double acc = 0.0;
      for (int r = 0; r < m; ++r) acc += a[static_cast<size_t>(r) * n + c] * b.samples[r];
      p.pixels[c] = acc;
    }
    return p;
  }
};

/// Largest singular value via a cyclic Jacobi eigensolver on A^T A.
inline double dense_largest_singular_value(const RawMatrixOperator& op) {
  const int n = op.n;
  std::vector<double> g(static_cast<size_t>(n) * n, 0.0);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      double acc = 0.0;
      for (int r = 0; r < op.m; ++r)
        acc += op.a[static_cast<size_t>(r) * n + i] * op.a[static_cast<size_t>(r) * n + j];
      g[static_cast<size_t>(i) * n + j] = acc;
    }
  auto at = [&](int i, int j) -> double& { return g[static_cast<size_t>(i) * n + j]; };
  for (int sweep = 0; sweep < 60; ++sweep) {
    double off = 0.0;
    for (int p = 0; p < n - 1; ++p)
      for (int q = p + 1; q < n; ++q) off += at(p, q) * at(p, q);
    if (off < 1e-24) break;
    for (int p = 0; p < n - 1; ++p) {
      for (int q = p + 1; q < n; ++q) {
        if (at(p, q) == 0.0) continue;
        const double theta = (at(q, q) - at(p, p)) / (2.0 * at(p, q));
        const double t = (theta >= 0 ? 1.0 : -1.0) /
                         (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (int k = 0; k < n; ++k) {
          const double gpk = at(p, k), gqk = at(q, k);
          at(p, k) = c * gpk - s * gqk;
          at(q, k) = s * gpk + c * gqk;
        }
        for (int k = 0; k < n; ++k) {
          const double gkp = at(k, p), gkq = at(k, q);
          at(k, p) = c * gkp - s * gkq;
          at(k, q) = s * gkp + c * gkq;
        }
      }
    }
  }
  double lmax = 0.0;
  for (int i = 0; i < n; ++i) lmax = std::max(lmax, at(i, i));
  return std::sqrt(std::max(lmax, 0.0));
}

// ---------------------------------------------------------------------------
// Windowed brute-force structural similarity (no separable filtering).

inline double ssim_brute_force(const pact::Image& x, const pact::Image& y,
                               double data_range) {
  constexpr int half = 5;
  const double c1 = (0.01 * data_range) * (0.01 * data_range);
  const double c2 = (0.03 * data_range) * (0.03 * data_range);

  // same 11-tap Gaussian, sigma 1.5, but applied as an explicit 2-D window
  double taps[11];
  double tap_sum = 0.0;
  for (int i = 0; i < 11; ++i) {
    const double d = i - half;
    taps[i] = std::exp(-d * d / (2.0 * 1.5 * 1.5));
    tap_sum += taps[i];
  }
  for (double& t : taps) t /= tap_sum;

  auto reflect = [](int i, int n) {
    if (i < 0) return -1 - i;
    if (i >= n) return 2 * n - 1 - i;
    return i;
  };

  double total = 0.0;
  for (int i = 0; i < x.ny; ++i) {
    for (int j = 0; j < x.nx; ++j) {
      double mx = 0, my = 0, mxx = 0, myy = 0, mxy = 0;
      for (int wi = -half; wi <= half; ++wi) {
        for (int wj = -half; wj <= half; ++wj) {
          const double wgt = taps[wi + half] * taps[wj + half];
          const double xv = x.at(reflect(i + wi, x.ny), reflect(j + wj, x.nx));
          const double yv = y.at(reflect(i + wi, y.ny), reflect(j + wj, y.nx));
          mx += wgt * xv;
          my += wgt * yv;
          mxx += wgt * xv * xv;
          myy += wgt * yv * yv;
          mxy += wgt * xv * yv;
        }
      }
      const double vx = mxx - mx * mx;
      const double vy = myy - my * my;
      const double cov = mxy - mx * my;
      total += ((2 * mx * my + c1) * (2 * cov + c2)) /
               ((mx * mx + my * my + c1) * (vx + vy + c2));
    }
  }
  return total / static_cast<double>(x.ny) / static_cast<double>(x.nx);
}

}  // namespace oracle
