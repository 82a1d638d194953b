#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <numbers>

#include "pact/pact.hpp"

using namespace pact;

namespace {

GridSpec small_grid(int n = 16, double pixel = 1.0) {
  return GridSpec{n, n, pixel, {-(n - 1) / 2.0 * pixel, -(n - 1) / 2.0 * pixel}};
}

AcquisitionSpec acq(double speed, double dt, int samples, double t0 = 0.0) {
  return AcquisitionSpec{speed, dt, samples, t0};
}

}  // namespace

TEST_CASE("half-ring placement spans the upper semicircle") {
  const auto g = make_half_ring_geometry(64, 0.019, {0, 0}, 180.0, 0.0,
                                         small_grid(16, 1e-4), acq(1500.0, 1e-8, 4000));
  REQUIRE(g.n_detectors() == 64);
  // endpoints inclusive
  CHECK(g.detectors.front()[0] == Catch::Approx(0.019).margin(1e-15));
  CHECK(g.detectors.front()[1] == Catch::Approx(0.0).margin(1e-15));
  CHECK(g.detectors.back()[0] == Catch::Approx(-0.019).margin(1e-12));
  CHECK(g.detectors.back()[1] == Catch::Approx(0.0).margin(1e-12));
  for (const auto& d : g.detectors) CHECK(d[1] >= -1e-12);
}

TEST_CASE("single detector at 90 degrees") {
  const auto g = make_half_ring_geometry(1, 2.0, {1.0, -1.0}, 180.0, 90.0, small_grid(8),
                                         acq(1.0, 1.0, 16));
  REQUIRE(g.n_detectors() == 1);
  CHECK(g.detectors[0][0] == Catch::Approx(1.0).margin(1e-15));
  CHECK(g.detectors[0][1] == Catch::Approx(1.0).margin(1e-15));
}

TEST_CASE("full ring avoids a duplicate wrap element") {
  const double r = 3.0;
  const auto g =
      make_half_ring_geometry(4, r, {0, 0}, 360.0, 0.0, small_grid(8), acq(1.0, 1.0, 32));
  REQUIRE(g.n_detectors() == 4);
  // 0, 90, 180, 270 degrees; pairwise distances against direct trigonometry
  CHECK(g.detectors[1][1] == Catch::Approx(r).margin(1e-14));
  auto dist = [&](int a, int b) {
    const double dx = g.detectors[a][0] - g.detectors[b][0];
    const double dy = g.detectors[a][1] - g.detectors[b][1];
    return std::sqrt(dx * dx + dy * dy);
  };
  const double quarter = 2.0 * r * std::sin(std::numbers::pi / 4.0);
  CHECK(dist(0, 1) == Catch::Approx(quarter).epsilon(1e-12));
  CHECK(dist(1, 2) == Catch::Approx(quarter).epsilon(1e-12));
  CHECK(dist(0, 2) == Catch::Approx(2.0 * r).epsilon(1e-12));
  CHECK(dist(1, 3) == Catch::Approx(2.0 * r).epsilon(1e-12));
}

TEST_CASE("invalid ring arguments are rejected") {
  CHECK_THROWS_AS(make_half_ring_geometry(0, 1.0, {0, 0}, 180.0, 0.0, small_grid(8),
                                          acq(1.0, 1.0, 16)),
                  Error);
  CHECK_THROWS_AS(make_half_ring_geometry(4, -1.0, {0, 0}, 180.0, 0.0, small_grid(8),
                                          acq(1.0, 1.0, 16)),
                  Error);
  CHECK_THROWS_AS(make_half_ring_geometry(4, 1.0, {0, 0}, 0.0, 0.0, small_grid(8),
                                          acq(1.0, 1.0, 16)),
                  Error);
}

TEST_CASE("detectors sit exactly on the ring") {
  const auto g = make_half_ring_geometry(33, 0.019, {0.002, -0.001}, 180.0, 12.5,
                                         small_grid(8, 1e-4), acq(1500.0, 1e-8, 4000));
  for (const auto& d : g.detectors) {
    const double dx = d[0] - 0.002;
    const double dy = d[1] + 0.001;
    const double r = std::sqrt(dx * dx + dy * dy);
    CHECK(std::abs(r - 0.019) <= 1e-12 * 0.019);
  }
}

TEST_CASE("reflecting the arc across its symmetry axis reverses the detectors") {
  const double start = 20.0, span = 180.0;
  const auto g = make_half_ring_geometry(9, 2.5, {0.5, 0.25}, span, start, small_grid(8),
                                         acq(1.0, 1.0, 32));
  const double axis = (start + span / 2.0) * std::numbers::pi / 180.0;
  const double c2 = std::cos(2 * axis), s2 = std::sin(2 * axis);
  for (int k = 0; k < 9; ++k) {
    const double dx = g.detectors[k][0] - 0.5;
    const double dy = g.detectors[k][1] - 0.25;
    const double rx = c2 * dx + s2 * dy;
    const double ry = s2 * dx - c2 * dy;
    CHECK(rx + 0.5 == Catch::Approx(g.detectors[8 - k][0]).margin(1e-12));
    CHECK(ry + 0.25 == Catch::Approx(g.detectors[8 - k][1]).margin(1e-12));
  }
}

TEST_CASE("coverage of a detector coincident with the only pixel") {
  ImagingGeometry g;
  g.grid_nx = g.grid_ny = 1;
  g.pixel_size = 1.0;
  g.grid_origin = {0.0, 0.0};
  g.detectors = {{0.0, 0.0}};
  g.sound_speed = 1.0;
  g.sample_period = 1.0;
  g.n_samples = 2;
  const auto rep = coverage_check(g);
  CHECK(rep.max_tof == 0.0);
  CHECK(rep.covered);
}

TEST_CASE("too-short time window is flagged") {
  ImagingGeometry g;
  g.grid_nx = 2;
  g.grid_ny = 1;
  g.pixel_size = 1.0;
  g.grid_origin = {0.0, 0.0};
  g.detectors = {{10.0, 0.0}};
  g.sound_speed = 1.0;
  g.sample_period = 1.0;
  g.n_samples = 2;  // window ends at t = 1, farthest pixel needs t = 10
  const auto rep = coverage_check(g);
  CHECK_FALSE(rep.covered);
  CHECK(rep.max_tof == Catch::Approx(10.0));
}

TEST_CASE("coverage holds at the brute-force sample count") {
  auto g = make_half_ring_geometry(16, 0.019, {0, 0}, 180.0, 0.0, small_grid(24, 1e-3),
                                   acq(1500.0, 2.5e-7, 2));
  // brute-force max time of flight, written out directly
  double max_tof = 0.0;
  for (int i = 0; i < g.grid_ny; ++i)
    for (int j = 0; j < g.grid_nx; ++j)
      for (const auto& det : g.detectors) {
        const auto p = g.pixel_position(i, j);
        const double dx = p[0] - det[0], dy = p[1] - det[1];
        max_tof = std::max(max_tof, std::sqrt(dx * dx + dy * dy) / g.sound_speed);
      }
  g.n_samples = static_cast<int>(std::ceil(max_tof / g.sample_period)) + 1;
  const auto rep = coverage_check(g);
  CHECK(rep.covered);
  CHECK(rep.max_tof == Catch::Approx(max_tof));
  CHECK(g.n_samples >= required_samples(g) - 1);
}

TEST_CASE("coverage is monotone in the sample count") {
  auto g = make_half_ring_geometry(8, 20.0, {0, 0}, 180.0, 0.0, small_grid(12),
                                   acq(1.0, 1.0, 2));
  bool was_covered = false;
  for (int n = 2; n < 64; ++n) {
    g.n_samples = n;
    const bool covered = coverage_check(g).covered;
    if (was_covered) CHECK(covered);
    was_covered = covered;
  }
  CHECK(was_covered);
}

TEST_CASE("geometry JSON round trip preserves the fingerprint") {
  const auto g = make_half_ring_geometry(12, 0.019, {0.001, 0.002}, 180.0, 5.0,
                                         small_grid(16, 1e-4), acq(1500.0, 1e-8, 5000));
  const auto j = geometry_to_json(g);
  const auto g2 = geometry_from_json(j);
  CHECK(geometry_fingerprint(g) == geometry_fingerprint(g2));
  CHECK(g2.grid_nx == g.grid_nx);
  CHECK(g2.detectors == g.detectors);
  CHECK(g2.arc_radius == g.arc_radius);
  CHECK(g2.has_arc);

  auto g3 = g2;
  g3.sound_speed += 1.0;
  CHECK(geometry_fingerprint(g3) != geometry_fingerprint(g));
}

TEST_CASE("geometry validation rejects bad fields") {
  ImagingGeometry g;
  g.grid_nx = 4;
  g.grid_ny = 4;
  g.pixel_size = 1.0;
  g.detectors = {{0, 0}};
  g.sound_speed = 1.0;
  g.sample_period = 0.0;  // invalid
  g.n_samples = 8;
  CHECK_THROWS_AS(g.validate(), Error);
  g.sample_period = 1.0;
  g.detectors.clear();
  CHECK_THROWS_AS(g.validate(), Error);
}
