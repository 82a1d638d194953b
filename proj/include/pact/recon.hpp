#pragma once

#include <cmath>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "pact/core.hpp"
#include "pact/geometry.hpp"
#include "pact/rng.hpp"
#include "pact/system_matrix.hpp"

namespace pact {

struct TvParams {
  double step = 2.0;       // gradient step size
  double alpha = 0.04;     // regularization weight
  double eps = 1e-3;       // smoothing of the variation norm
  int n_iters = 20;
  bool nonneg = false;
};

struct IstaParams {
  double step = 1.0;
  double alpha = 0.01;
  int n_iters = 20;
};

struct ObjectiveRow {
  int iteration = 0;
  double data_term = 0.0;
  double reg_term = 0.0;
  double total = 0.0;
};

inline void write_trace_csv(const std::string& path, const std::vector<ObjectiveRow>& rows) {
  std::ofstream os(path);
  if (!os) fail(ErrorKind::io, "cannot open for writing: " + path);
  os << "iteration,data_term,reg_term,total\n";
  os.precision(17);
  for (const auto& r : rows)
    os << r.iteration << "," << r.data_term << "," << r.reg_term << "," << r.total << "\n";
}

// ---------------------------------------------------------------------------
// Universal back-projection.

struct UbpOptions {
  // Contributions whose time of flight falls outside the sampled window add
  // zero; the count of such skips is reported here.
  int64_t out_of_window = 0;
};

/// One-shot filtered back-projection: q(tau) = 2 b(tau) - 2 tau b'(tau)
/// spread along time-of-flight arcs, weighted by cos(theta0)/dist^2 against
/// the detector's inward normal and normalized per pixel by the weight sum.
inline Image ubp_reconstruct(const ImagingGeometry& g, const Sinogram& b,
                             UbpOptions* opts = nullptr) {
  g.validate();
  require(b.n_detectors == g.n_detectors() && b.n_samples == g.n_samples,
          ErrorKind::shape_mismatch, "ubp: sinogram does not match geometry");

  // Binomial 3-tap smoothing before filtering: the derivative term is only
  // meaningful on data resolvable at the sampling rate, and raw single-sample
  // spikes otherwise alias into the backprojection.
  Sinogram bs = b;
  for (int d = 0; d < b.n_detectors; ++d)
    for (int k = 1; k < b.n_samples - 1; ++k)
      bs.at(d, k) = 0.25 * b.at(d, k - 1) + 0.5 * b.at(d, k) + 0.25 * b.at(d, k + 1);
  const Sinogram db = temporal_derivative(bs, g.sample_period);
  Image out(g.grid_ny, g.grid_nx, 0.0);
  int64_t skipped = 0;

  // Inward normals: toward the arc center when built from an arc, otherwise
  // toward the detector centroid.
  std::array<double, 2> center = g.arc_center;
  if (!g.has_arc) {
    center = {0.0, 0.0};
    for (const auto& d : g.detectors) {
      center[0] += d[0];
      center[1] += d[1];
    }
    center[0] /= g.n_detectors();
    center[1] /= g.n_detectors();
  }

  const double inv_dt = 1.0 / g.sample_period;
  const int last = g.n_samples - 1;

#pragma omp parallel for schedule(static) reduction(+ : skipped)
  for (int i = 0; i < g.grid_ny; ++i) {
    for (int j = 0; j < g.grid_nx; ++j) {
      const auto p = g.pixel_position(i, j);
      double acc = 0.0;
      double wsum = 0.0;
      for (int d = 0; d < g.n_detectors(); ++d) {
        const auto det = g.detectors[d];
        const double rx = p[0] - det[0];
        const double ry = p[1] - det[1];
        const double dist = std::sqrt(rx * rx + ry * ry);
        const double tau = dist / g.sound_speed;
        const double pos = (tau - g.t_start) * inv_dt;
        const int k = static_cast<int>(std::floor(pos));
        if (pos < 0.0 || k > last || (k == last && pos > last)) {
          ++skipped;
          continue;
        }
        const double f = pos - k;
        const int k1 = std::min(k + 1, last);
        const double bv = (1.0 - f) * bs.at(d, k) + f * bs.at(d, k1);
        const double dv = (1.0 - f) * db.at(d, k) + f * db.at(d, k1);
        const double q = 2.0 * bv - 2.0 * tau * dv;

        double nx_ = center[0] - det[0];
        double ny_ = center[1] - det[1];
        const double nlen = std::sqrt(nx_ * nx_ + ny_ * ny_);
        double cos_theta = 1.0;
        if (nlen > 0.0 && dist > 0.0)
          cos_theta = (rx * nx_ + ry * ny_) / (dist * nlen);
        const double safe_dist = std::max(dist, g.pixel_size);
        const double w = cos_theta / (safe_dist * safe_dist);
        acc += w * q;
        wsum += w;
      }
      out.at(i, j) = (wsum != 0.0) ? acc / wsum : 0.0;
    }
  }
  if (opts) opts->out_of_window = skipped;
  return out;
}

// ---------------------------------------------------------------------------
// Smoothed isotropic total variation, forward differences, Neumann boundary
// (differences vanish on the last row/column).

inline double smoothed_tv_value(const Image& p, double eps) {
  require(eps > 0.0, ErrorKind::invalid_argument, "tv smoothing eps must be positive");
  double total = 0.0;
  for (int i = 0; i < p.ny; ++i) {
    for (int j = 0; j < p.nx; ++j) {
      const double gx = (j + 1 < p.nx) ? p.at(i, j + 1) - p.at(i, j) : 0.0;
      const double gy = (i + 1 < p.ny) ? p.at(i + 1, j) - p.at(i, j) : 0.0;
      total += std::sqrt(gx * gx + gy * gy + eps * eps);
    }
  }
  return total;
}

/// Exact gradient of smoothed_tv_value (negative divergence of the
/// normalized forward differences).
inline Image smoothed_tv_gradient(const Image& p, double eps) {
  require(eps > 0.0, ErrorKind::invalid_argument, "tv smoothing eps must be positive");
  const int ny = p.ny, nx = p.nx;
  // phi(i,j) = sqrt(gx^2 + gy^2 + eps^2); d phi / d p scattered to the three
  // pixels each difference touches.
  Image grad(ny, nx, 0.0);
  for (int i = 0; i < ny; ++i) {
    for (int j = 0; j < nx; ++j) {
      const double gx = (j + 1 < nx) ? p.at(i, j + 1) - p.at(i, j) : 0.0;
      const double gy = (i + 1 < ny) ? p.at(i + 1, j) - p.at(i, j) : 0.0;
      const double phi = std::sqrt(gx * gx + gy * gy + eps * eps);
      const double sx = gx / phi;
      const double sy = gy / phi;
      grad.at(i, j) -= sx + sy;
      if (j + 1 < nx) grad.at(i, j + 1) += sx;
      if (i + 1 < ny) grad.at(i + 1, j) += sy;
    }
  }
  return grad;
}

// ---------------------------------------------------------------------------
// Iterative reconstructions.

namespace detail {
inline void check_iterate_finite(const Image& p, int iteration, const char* method) {
  if (!all_finite(p.pixels)) {
    std::ostringstream msg;
    msg << method << " diverged: non-finite iterate at iteration " << iteration;
    fail(ErrorKind::divergence, msg.str());
  }
}
}  // namespace detail

/// Gradient descent on 0.5*||Ap-b||^2 + alpha * TV_eps(p).
template <class Op>
  requires LinearOperator<Op>
inline Image tv_gd_reconstruct(const Op& A, const Sinogram& b, const TvParams& params,
                               const Image& init,
                               std::vector<ObjectiveRow>* trace = nullptr) {
  require(params.step > 0.0, ErrorKind::invalid_argument, "tv step must be positive");
  require(params.alpha >= 0.0, ErrorKind::invalid_argument, "tv alpha must be >= 0");
  require(params.eps > 0.0, ErrorKind::invalid_argument, "tv eps must be positive");
  require(params.n_iters >= 1, ErrorKind::invalid_argument, "tv needs >= 1 iteration");

  Image p = init;
  auto record = [&](int it, const Sinogram& residual) {
    if (!trace) return;
    double data = 0.0;
    for (double r : residual.samples) data += r * r;
    ObjectiveRow row;
    row.iteration = it;
    row.data_term = 0.5 * data;
    row.reg_term = params.alpha * smoothed_tv_value(p, params.eps);
    row.total = row.data_term + row.reg_term;
    trace->push_back(row);
  };

  for (int it = 0; it < params.n_iters; ++it) {
    Sinogram residual = A.forward(p);
    for (size_t i = 0; i < residual.samples.size(); ++i)
      residual.samples[i] -= b.samples[i];
    record(it, residual);
    const Image grad_data = A.adjoint(residual);
    if (params.alpha > 0.0) {
      const Image grad_reg = smoothed_tv_gradient(p, params.eps);
      for (size_t i = 0; i < p.pixels.size(); ++i)
        p.pixels[i] -= params.step * (grad_data.pixels[i] + params.alpha * grad_reg.pixels[i]);
    } else {
      for (size_t i = 0; i < p.pixels.size(); ++i)
        p.pixels[i] -= params.step * grad_data.pixels[i];
    }
    if (params.nonneg)
      for (double& x : p.pixels) x = std::max(x, 0.0);
    detail::check_iterate_finite(p, it, "tv_gd");
  }
  if (trace) {
    Sinogram residual = A.forward(p);
    for (size_t i = 0; i < residual.samples.size(); ++i)
      residual.samples[i] -= b.samples[i];
    record(params.n_iters, residual);
  }
  return p;
}

inline double soft_threshold(double x, double t) {
  const double mag = std::abs(x) - t;
  return mag > 0.0 ? (x < 0.0 ? -mag : mag) : 0.0;
}

/// Proximal gradient with an L1 penalty: soft-threshold after each
/// data-consistency step.
template <class Op>
  requires LinearOperator<Op>
inline Image ista_l1_reconstruct(const Op& A, const Sinogram& b, const IstaParams& params,
                                 const Image& init,
                                 std::vector<ObjectiveRow>* trace = nullptr) {
  require(params.step > 0.0, ErrorKind::invalid_argument, "ista step must be positive");
  require(params.alpha >= 0.0, ErrorKind::invalid_argument, "ista alpha must be >= 0");
  require(params.n_iters >= 1, ErrorKind::invalid_argument, "ista needs >= 1 iteration");

  Image p = init;
  auto record = [&](int it, const Sinogram& residual) {
    if (!trace) return;
    double data = 0.0;
    for (double r : residual.samples) data += r * r;
    double l1 = 0.0;
    for (double x : p.pixels) l1 += std::abs(x);
    ObjectiveRow row;
    row.iteration = it;
    row.data_term = 0.5 * data;
    row.reg_term = params.alpha * l1;
    row.total = row.data_term + row.reg_term;
    trace->push_back(row);
  };

  const double threshold = params.step * params.alpha;
  for (int it = 0; it < params.n_iters; ++it) {
    Sinogram residual = A.forward(p);
    for (size_t i = 0; i < residual.samples.size(); ++i)
      residual.samples[i] -= b.samples[i];
    record(it, residual);
    const Image grad = A.adjoint(residual);
    for (size_t i = 0; i < p.pixels.size(); ++i)
      p.pixels[i] = soft_threshold(p.pixels[i] - params.step * grad.pixels[i], threshold);
    detail::check_iterate_finite(p, it, "ista_l1");
  }
  if (trace) {
    Sinogram residual = A.forward(p);
    for (size_t i = 0; i < residual.samples.size(); ++i)
      residual.samples[i] -= b.samples[i];
    record(params.n_iters, residual);
  }
  return p;
}

/// Power iteration on A^T A from a seeded start; returns an estimate of the
/// largest singular value.
template <class Op>
  requires LinearOperator<Op>
inline double operator_norm_estimate(const Op& A, int n_power_iters, uint64_t seed) {
  require(n_power_iters >= 1, ErrorKind::invalid_argument,
          "power iteration needs >= 1 iteration");
  Rng rng(seed);
  Image x(A.image_ny(), A.image_nx(), 0.0);
  for (double& v : x.pixels) v = rng.normal();
  double nx0 = norm2(x.pixels);
  if (nx0 == 0.0) return 0.0;
  for (double& v : x.pixels) v /= nx0;

  for (int it = 0; it < n_power_iters; ++it) {
    const Sinogram ax = A.forward(x);
    const Image y = A.adjoint(ax);
    const double ny = norm2(y.pixels);
    if (ny == 0.0) return 0.0;
    for (size_t i = 0; i < x.pixels.size(); ++i) x.pixels[i] = y.pixels[i] / ny;
  }
  // Rayleigh quotient at the final normalized vector.
  const Sinogram ax = A.forward(x);
  return std::sqrt(dot(ax.samples, ax.samples));
}

}  // namespace pact
