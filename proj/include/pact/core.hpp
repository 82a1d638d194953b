#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace pact {

// Error taxonomy shared by the library and the CLI (the CLI maps kinds to
// exit codes).
enum class ErrorKind {
  invalid_argument,
  shape_mismatch,
  coverage,
  io,
  format,
  divergence,
  incompatible,
};

class Error : public std::runtime_error {
public:
  Error(ErrorKind kind, std::string message)
      : std::runtime_error(std::move(message)), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& message) {
  throw Error(kind, message);
}

inline void require(bool ok, ErrorKind kind, const std::string& message) {
  if (!ok) fail(kind, message);
}

/// Initial-pressure map on the reconstruction grid, row-major (i = row = y).
struct Image {
  int ny = 0;
  int nx = 0;
  std::vector<double> pixels;

  Image() = default;
  Image(int ny_, int nx_, double fill = 0.0)
      : ny(ny_), nx(nx_), pixels(static_cast<size_t>(ny_) * nx_, fill) {}

  double& at(int i, int j) { return pixels[static_cast<size_t>(i) * nx + j]; }
  double at(int i, int j) const { return pixels[static_cast<size_t>(i) * nx + j]; }
  size_t size() const { return pixels.size(); }

  bool same_shape(const Image& other) const {
    return ny == other.ny && nx == other.nx;
  }
};

/// Channel data: one row of time samples per detector element.
struct Sinogram {
  int n_detectors = 0;
  int n_samples = 0;
  std::vector<double> samples;

  Sinogram() = default;
  Sinogram(int n_detectors_, int n_samples_, double fill = 0.0)
      : n_detectors(n_detectors_), n_samples(n_samples_),
        samples(static_cast<size_t>(n_detectors_) * n_samples_, fill) {}

  double& at(int d, int k) { return samples[static_cast<size_t>(d) * n_samples + k]; }
  double at(int d, int k) const { return samples[static_cast<size_t>(d) * n_samples + k]; }
  size_t size() const { return samples.size(); }

  bool same_shape(const Sinogram& other) const {
    return n_detectors == other.n_detectors && n_samples == other.n_samples;
  }
};

inline bool all_finite(const std::vector<double>& v) {
  for (double x : v)
    if (!std::isfinite(x)) return false;
  return true;
}

inline double dot(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline double norm2(const std::vector<double>& a) { return std::sqrt(dot(a, a)); }

}  // namespace pact
