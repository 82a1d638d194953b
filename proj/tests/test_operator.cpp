#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <numbers>

#include "oracles.hpp"
#include "pact/pact.hpp"

using namespace pact;

namespace {

ImagingGeometry desk_half_ring(int n, int n_det, double radius_factor = 1.5) {
  GridSpec grid{n, n, 1.0, {-(n - 1) / 2.0, -(n - 1) / 2.0}};
  AcquisitionSpec acq{1.0, 0.5, 2, 0.0};
  auto g = make_half_ring_geometry(n_det, radius_factor * n, {0, 0}, 180.0, 0.0, grid, acq);
  g.n_samples = required_samples(g) + 2;
  return g;
}

ImagingGeometry desk_full_ring(int n, int n_det) {
  GridSpec grid{n, n, 1.0, {-(n - 1) / 2.0, -(n - 1) / 2.0}};
  AcquisitionSpec acq{1.0, 0.5, 2, 0.0};
  auto g = make_half_ring_geometry(n_det, 1.5 * n, {0, 0}, 360.0, 0.0, grid, acq);
  g.n_samples = required_samples(g) + 2;
  return g;
}

Image random_image(int ny, int nx, Rng& rng) {
  Image p(ny, nx);
  for (double& v : p.pixels) v = rng.normal();
  return p;
}

Sinogram random_sinogram(int nd, int ns, Rng& rng) {
  Sinogram b(nd, ns);
  for (double& v : b.samples) v = rng.normal();
  return b;
}

}  // namespace

TEST_CASE("time of flight landing on a sample gives a single entry") {
  // one pixel at the origin, detector 3 length units away, unit speed, dt = 1
  ImagingGeometry g;
  g.grid_nx = g.grid_ny = 1;
  g.pixel_size = 1.0;
  g.grid_origin = {0.0, 0.0};
  g.detectors = {{3.0, 0.0}};
  g.sound_speed = 1.0;
  g.sample_period = 1.0;
  g.n_samples = 6;
  const auto A = build_system_matrix(g);
  REQUIRE(A.n_rows == 6);
  REQUIRE(A.n_cols == 1);
  REQUIRE(A.nnz() == 1);
  // row 3 holds the full area/decay weight; row 4 is empty
  CHECK(A.row_offsets[3] == 0);
  CHECK(A.row_offsets[4] == 1);
  CHECK(A.row_offsets[5] == 1);
  CHECK(A.values[0] == Catch::Approx(1.0 / 3.0).epsilon(1e-15));
}

TEST_CASE("half-sample offset splits the weight evenly") {
  ImagingGeometry g;
  g.grid_nx = g.grid_ny = 1;
  g.pixel_size = 1.0;
  g.grid_origin = {0.0, 0.0};
  g.detectors = {{3.5, 0.0}};
  g.sound_speed = 1.0;
  g.sample_period = 1.0;
  g.n_samples = 6;
  const auto A = build_system_matrix(g);
  REQUIRE(A.nnz() == 2);
  CHECK(A.values[0] == Catch::Approx(A.values[1]).epsilon(1e-15));
  CHECK(A.values[0] == Catch::Approx(0.5 / 3.5).epsilon(1e-15));
}

TEST_CASE("matrix shape follows the geometry") {
  const auto g = desk_half_ring(64, 32);
  const auto A = build_system_matrix(g);
  CHECK(A.n_rows == 32 * static_cast<int64_t>(g.n_samples));
  CHECK(A.n_cols == 4096);
}

TEST_CASE("uncovered geometry fails with the worst pair named") {
  auto g = desk_half_ring(16, 4);
  g.n_samples = 4;
  try {
    build_system_matrix(g);
    FAIL("expected a coverage error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::coverage);
    CHECK(std::string(e.what()).find("pixel") != std::string::npos);
    CHECK(std::string(e.what()).find("detector") != std::string::npos);
  }
}

TEST_CASE("forward: zero in, zero out; linear in the image") {
  const auto g = desk_half_ring(16, 8);
  const auto A = build_system_matrix(g);
  const auto zero = A.forward(Image(16, 16, 0.0));
  for (double v : zero.samples) CHECK(v == 0.0);

  Rng rng(11);
  const Image p1 = random_image(16, 16, rng);
  const Image p2 = random_image(16, 16, rng);
  Image sum(16, 16);
  for (size_t i = 0; i < sum.pixels.size(); ++i) sum.pixels[i] = p1.pixels[i] + p2.pixels[i];
  const auto b1 = A.forward(p1);
  const auto b2 = A.forward(p2);
  const auto bsum = A.forward(sum);
  double scale = 0.0;
  for (double v : bsum.samples) scale = std::max(scale, std::abs(v));
  for (size_t i = 0; i < bsum.samples.size(); ++i)
    CHECK(std::abs(bsum.samples[i] - (b1.samples[i] + b2.samples[i])) <= 1e-12 * scale);
}

TEST_CASE("sparse forward and adjoint match the dense oracle elementwise") {
  for (int n : {8, 16}) {
    const auto g = desk_half_ring(n, 6);
    const auto A = build_system_matrix(g);
    const auto D = oracle::build_dense(g);

    Rng rng(n);
    const Image p = random_image(n, n, rng);
    const auto b_sparse = A.forward(p);
    const auto b_dense = D.forward(p);
    for (size_t i = 0; i < b_sparse.samples.size(); ++i)
      CHECK(std::abs(b_sparse.samples[i] - b_dense.samples[i]) <= 1e-12);

    const Sinogram q = random_sinogram(g.n_detectors(), g.n_samples, rng);
    const auto at_sparse = A.adjoint(q);
    const auto at_dense = D.adjoint(q);
    for (size_t i = 0; i < at_sparse.pixels.size(); ++i)
      CHECK(std::abs(at_sparse.pixels[i] - at_dense.pixels[i]) <= 1e-12);
  }
}

TEST_CASE("single-pixel forward equals the dense oracle") {
  const auto g = desk_half_ring(12, 5);
  const auto A = build_system_matrix(g);
  const auto D = oracle::build_dense(g);
  Image p(12, 12, 0.0);
  p.at(4, 7) = 1.0;
  const auto bs = A.forward(p);
  const auto bd = D.forward(p);
  for (size_t i = 0; i < bs.samples.size(); ++i)
    CHECK(std::abs(bs.samples[i] - bd.samples[i]) <= 1e-12);
}

TEST_CASE("adjoint identity holds for random pairs") {
  const auto g = desk_half_ring(16, 8);
  const auto A = build_system_matrix(g);
  Rng rng(17);
  for (int trial = 0; trial < 10; ++trial) {
    const Image p = random_image(16, 16, rng);
    const Sinogram q = random_sinogram(g.n_detectors(), g.n_samples, rng);
    const auto ap = A.forward(p);
    const auto atq = A.adjoint(q);
    const double lhs = dot(ap.samples, q.samples);
    const double rhs = dot(p.pixels, atq.pixels);
    CHECK(std::abs(lhs - rhs) <= 1e-10 * norm2(ap.samples) * norm2(q.samples));
  }
}

TEST_CASE("unit sinogram adjoint recovers a stored row") {
  const auto g = desk_half_ring(10, 4);
  const auto A = build_system_matrix(g);
  const int d = 2, k = g.n_samples / 2;
  Sinogram e(g.n_detectors(), g.n_samples, 0.0);
  e.at(d, k) = 1.0;
  const auto img = A.adjoint(e);
  Image expected(g.grid_ny, g.grid_nx, 0.0);
  const int64_t row = static_cast<int64_t>(d) * g.n_samples + k;
  for (int64_t t = A.row_offsets[row]; t < A.row_offsets[row + 1]; ++t)
    expected.pixels[static_cast<size_t>(A.col_indices[t])] = A.values[t];
  for (size_t i = 0; i < img.pixels.size(); ++i)
    CHECK(img.pixels[i] == expected.pixels[i]);
}

TEST_CASE("zero sinogram backprojects to zero") {
  const auto g = desk_half_ring(8, 4);
  const auto A = build_system_matrix(g);
  const auto img = A.adjoint(Sinogram(g.n_detectors(), g.n_samples, 0.0));
  for (double v : img.pixels) CHECK(v == 0.0);
}

TEST_CASE("shape mismatches are rejected") {
  const auto g = desk_half_ring(8, 4);
  const auto A = build_system_matrix(g);
  CHECK_THROWS_AS(A.forward(Image(4, 4, 0.0)), Error);
  CHECK_THROWS_AS(A.adjoint(Sinogram(2, 3, 0.0)), Error);
}

TEST_CASE("matrix values are finite and non-negative with bounded column counts") {
  const auto g = desk_half_ring(16, 8);
  const auto A = build_system_matrix(g);
  for (double v : A.values) {
    CHECK(std::isfinite(v));
    CHECK(v >= 0.0);
  }
  std::vector<int> col_counts(static_cast<size_t>(A.n_cols), 0);
  for (int64_t c : A.col_indices) col_counts[static_cast<size_t>(c)]++;
  for (int cnt : col_counts) CHECK(cnt <= 2 * g.n_detectors());
}

TEST_CASE("matrix build is deterministic") {
  const auto g = desk_half_ring(16, 8);
  const auto A1 = build_system_matrix(g);
  const auto A2 = build_system_matrix(g);
  REQUIRE(A1.nnz() == A2.nnz());
  CHECK(std::memcmp(A1.values.data(), A2.values.data(),
                    A1.values.size() * sizeof(double)) == 0);
  CHECK(std::memcmp(A1.col_indices.data(), A2.col_indices.data(),
                    A1.col_indices.size() * sizeof(int64_t)) == 0);
  CHECK(std::memcmp(A1.row_offsets.data(), A2.row_offsets.data(),
                    A1.row_offsets.size() * sizeof(int64_t)) == 0);
}

TEST_CASE("temporal derivative: constant, ramp and sine") {
  const double dt = 0.25;
  Sinogram constant(2, 8, 3.5);
  const auto dc = temporal_derivative(constant, dt);
  for (double v : dc.samples) CHECK(v == 0.0);

  const double a = 1.7;
  Sinogram ramp(1, 9);
  for (int k = 0; k < 9; ++k) ramp.at(0, k) = a * (k * dt);
  const auto dr = temporal_derivative(ramp, dt);
  for (int k = 0; k < 9; ++k) CHECK(dr.at(0, k) == Catch::Approx(a).epsilon(1e-12));

  // f*dt = 0.01; central differences are second order, endpoints first order
  const double f = 0.01, dts = 1.0;
  const double w = 2.0 * std::numbers::pi * f;
  Sinogram sine(1, 256);
  for (int k = 0; k < 256; ++k) sine.at(0, k) = std::sin(w * k * dts);
  const auto ds = temporal_derivative(sine, dts);
  for (int k = 1; k < 255; ++k) {
    const double expected = w * std::cos(w * k * dts);
    CHECK(std::abs(ds.at(0, k) - expected) <= 1.1e-3 * w);
  }
  CHECK(std::abs(ds.at(0, 0) - w * std::cos(0.0)) <= 0.05 * w);
  CHECK(std::abs(ds.at(0, 255) - w * std::cos(w * 255 * dts)) <= 0.05 * w);

  CHECK_THROWS_AS(temporal_derivative(Sinogram(1, 2, 0.0), dt), Error);
}

TEST_CASE("data-consistency gradient vanishes at a consistent pair") {
  const auto g = desk_half_ring(12, 6);
  const auto A = build_system_matrix(g);
  Rng rng(5);
  const Image p = random_image(12, 12, rng);
  const auto b = A.forward(p);
  const auto grad = data_consistency_gradient(A, p, b);
  double scale = 0.0;
  for (double v : p.pixels) scale = std::max(scale, std::abs(v));
  for (double v : grad.pixels) CHECK(std::abs(v) <= 1e-10 * scale);
}

TEST_CASE("gradient with zero data equals the dense normal product") {
  const auto g = desk_half_ring(10, 5);
  const auto A = build_system_matrix(g);
  const auto D = oracle::build_dense(g);
  Rng rng(6);
  const Image p = random_image(10, 10, rng);
  const Sinogram zero(g.n_detectors(), g.n_samples, 0.0);
  const auto grad = data_consistency_gradient(A, p, zero);
  const auto oracle_grad = D.adjoint(D.forward(p));
  for (size_t i = 0; i < grad.pixels.size(); ++i)
    CHECK(std::abs(grad.pixels[i] - oracle_grad.pixels[i]) <= 1e-12);
}

TEST_CASE("gradient matches directional finite differences") {
  const auto g = desk_half_ring(8, 5);
  const auto A = build_system_matrix(g);
  Rng rng(7);
  const Image p = random_image(8, 8, rng);
  const Sinogram b = random_sinogram(g.n_detectors(), g.n_samples, rng);
  const auto grad = data_consistency_gradient(A, p, b);

  auto objective = [&](const Image& x) {
    auto r = A.forward(x);
    for (size_t i = 0; i < r.samples.size(); ++i) r.samples[i] -= b.samples[i];
    return 0.5 * dot(r.samples, r.samples);
  };
  for (int trial = 0; trial < 5; ++trial) {
    Image dir = random_image(8, 8, rng);
    const double nd = norm2(dir.pixels);
    for (double& v : dir.pixels) v /= nd;
    const double h = 1e-6;
    Image plus = p, minus = p;
    for (size_t i = 0; i < p.pixels.size(); ++i) {
      plus.pixels[i] += h * dir.pixels[i];
      minus.pixels[i] -= h * dir.pixels[i];
    }
    const double fd = (objective(plus) - objective(minus)) / (2.0 * h);
    const double analytic = dot(grad.pixels, dir.pixels);
    CHECK(std::abs(fd - analytic) <= 1e-6 * std::max(1.0, std::abs(analytic)));
  }
}

TEST_CASE("matrix cache file round trips and verifies") {
  namespace fs = std::filesystem;
  const auto dir = fs::temp_directory_path() / "pact_matrix_test";
  fs::create_directories(dir);
  const auto path = (dir / "a.pasm").string();

  const auto g = desk_half_ring(12, 6);
  const auto A = build_system_matrix(g);
  save_system_matrix(path, A);
  const auto B = load_system_matrix(path, A.geometry_fingerprint);
  CHECK(B.n_rows == A.n_rows);
  CHECK(B.values == A.values);
  CHECK(B.col_indices == A.col_indices);
  CHECK(B.row_offsets == A.row_offsets);

  // wrong fingerprint
  try {
    load_system_matrix(path, A.geometry_fingerprint + 1);
    FAIL("expected an incompatibility error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::incompatible);
  }

  // corrupted magic
  {
    auto bytes = io::open_in(path);
    std::string data((std::istreambuf_iterator<char>(bytes)),
                     std::istreambuf_iterator<char>());
    data[0] = 'X';
    auto out = io::open_out(path + ".bad");
    out.write(data.data(), static_cast<std::streamsize>(data.size()));
  }
  try {
    load_system_matrix(path + ".bad", A.geometry_fingerprint);
    FAIL("expected a format error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::format);
  }

  // truncated values
  {
    auto bytes = io::open_in(path);
    std::string data((std::istreambuf_iterator<char>(bytes)),
                     std::istreambuf_iterator<char>());
    data.resize(data.size() - 16);
    auto out = io::open_out(path + ".cut");
    out.write(data.data(), static_cast<std::streamsize>(data.size()));
  }
  try {
    load_system_matrix(path + ".cut", A.geometry_fingerprint);
    FAIL("expected an io error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::io);
  }
}
