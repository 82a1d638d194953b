#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <string>
#include <vector>

#include <json.hpp>

#include "pact/core.hpp"
#include "pact/geometry.hpp"
#include "pact/io.hpp"
#include "pact/rng.hpp"
#include "pact/system_matrix.hpp"

namespace pact {

enum class Split : uint8_t { train = 0, test = 1 };

struct DatasetSample {
  Image phantom;
  Sinogram sinogram;
};

/// Paired (initial pressure, channel data) samples with a fixed train/test
/// partition. Stored as float32 on disk.
struct Dataset {
  ImagingGeometry geometry;
  std::vector<DatasetSample> samples;
  std::vector<Split> split;
  double noise_sigma = 0.0;
  int fine_factor = 1;
  uint64_t seed = 0;

  std::vector<int> train_indices() const {
    std::vector<int> idx;
    for (size_t i = 0; i < split.size(); ++i)
      if (split[i] == Split::train) idx.push_back(static_cast<int>(i));
    return idx;
  }
  std::vector<int> test_indices() const {
    std::vector<int> idx;
    for (size_t i = 0; i < split.size(); ++i)
      if (split[i] == Split::test) idx.push_back(static_cast<int>(i));
    return idx;
  }
};

/// Refined geometry used only for data generation: fine_factor x denser grid
/// and time sampling over the same physical extent.
inline ImagingGeometry make_fine_geometry(const ImagingGeometry& g, int fine_factor) {
  require(fine_factor >= 1, ErrorKind::invalid_argument, "fine_factor must be >= 1");
  ImagingGeometry f = g;
  f.grid_nx = g.grid_nx * fine_factor;
  f.grid_ny = g.grid_ny * fine_factor;
  f.pixel_size = g.pixel_size / fine_factor;
  // keep the covered physical square identical: fine cell centers start half
  // a coarse cell in, shifted back half a fine cell
  const double shift = -g.pixel_size / 2.0 + f.pixel_size / 2.0;
  f.grid_origin = {g.grid_origin[0] + shift, g.grid_origin[1] + shift};
  f.sample_period = g.sample_period / fine_factor;
  f.n_samples = g.n_samples * fine_factor;
  return f;
}

/// Bilinear upsampling of a coarse image onto the fine generation grid.
inline Image upsample_bilinear(const Image& img, int fine_factor) {
  require(fine_factor >= 1, ErrorKind::invalid_argument, "fine_factor must be >= 1");
  const int fy = img.ny * fine_factor, fx = img.nx * fine_factor;
  Image out(fy, fx, 0.0);
  for (int i = 0; i < fy; ++i) {
    double v = (i + 0.5) / fine_factor - 0.5;
    v = std::clamp(v, 0.0, static_cast<double>(img.ny - 1));
    const int i0 = static_cast<int>(v);
    const int i1 = std::min(i0 + 1, img.ny - 1);
    const double wi = v - i0;
    for (int j = 0; j < fx; ++j) {
      double u = (j + 0.5) / fine_factor - 0.5;
      u = std::clamp(u, 0.0, static_cast<double>(img.nx - 1));
      const int j0 = static_cast<int>(u);
      const int j1 = std::min(j0 + 1, img.nx - 1);
      const double wj = u - j0;
      out.at(i, j) = (1.0 - wi) * ((1.0 - wj) * img.at(i0, j0) + wj * img.at(i0, j1)) +
                     wi * ((1.0 - wj) * img.at(i1, j0) + wj * img.at(i1, j1));
    }
  }
  return out;
}

/// Forward-projects each phantom on a refined model of the same physical
/// setup, averages the time series back to the acquisition rate, and adds
/// seeded Gaussian noise scaled by the peak amplitude. Generating data on a
/// model distinct from any reconstruction matrix keeps the usual model
/// mismatch in place.
inline Dataset synthesize_dataset(const ImagingGeometry& geometry,
                                  const std::vector<Image>& phantoms, double noise_sigma,
                                  int fine_factor, uint64_t seed, int n_train = -1) {
  geometry.validate();
  require(fine_factor >= 1, ErrorKind::invalid_argument, "fine_factor must be >= 1");
  require(noise_sigma >= 0.0, ErrorKind::invalid_argument, "noise_sigma must be >= 0");
  require(n_train <= static_cast<int>(phantoms.size()), ErrorKind::invalid_argument,
          "n_train exceeds the sample count");

  const ImagingGeometry fine = make_fine_geometry(geometry, fine_factor);
  const SystemMatrix a_fine = build_system_matrix(fine);

  Dataset ds;
  ds.geometry = geometry;
  ds.noise_sigma = noise_sigma;
  ds.fine_factor = fine_factor;
  ds.seed = seed;
  ds.samples.resize(phantoms.size());
  ds.split.assign(phantoms.size(), Split::train);
  if (n_train >= 0)
    for (size_t i = static_cast<size_t>(n_train); i < phantoms.size(); ++i)
      ds.split[i] = Split::test;

  for (size_t idx = 0; idx < phantoms.size(); ++idx) {
    const Image& p = phantoms[idx];
    require(p.ny == geometry.grid_ny && p.nx == geometry.grid_nx, ErrorKind::shape_mismatch,
            "phantom does not match the geometry grid");
    const Image up = upsample_bilinear(p, fine_factor);
    const Sinogram bf = a_fine.forward(up);
    Sinogram b(geometry.n_detectors(), geometry.n_samples, 0.0);
    for (int d = 0; d < b.n_detectors; ++d) {
      for (int k = 0; k < b.n_samples; ++k) {
        double acc = 0.0;
        for (int r = 0; r < fine_factor; ++r) acc += bf.at(d, k * fine_factor + r);
        b.at(d, k) = acc / fine_factor;
      }
    }
    if (noise_sigma > 0.0) {
      double peak = 0.0;
      for (double v : b.samples) peak = std::max(peak, std::abs(v));
      const double sigma = noise_sigma * peak;
      Rng rng(ds.seed ^ static_cast<uint64_t>(idx));
      for (double& v : b.samples) v += sigma * rng.normal();
    }
    ds.samples[idx].phantom = p;
    ds.samples[idx].sinogram = std::move(b);
  }
  return ds;
}

// ---------------------------------------------------------------------------
// Dataset container file ("PADS").

inline void save_dataset(const std::string& path, const Dataset& ds) {
  nlohmann::json header;
  header["geometry"] = geometry_to_json(ds.geometry);
  char fp[32];
  std::snprintf(fp, sizeof fp, "%016llx",
                static_cast<unsigned long long>(geometry_fingerprint(ds.geometry)));
  header["geometry_fingerprint"] = fp;
  header["n_samples"] = ds.samples.size();
  nlohmann::json split = nlohmann::json::array();
  for (auto s : ds.split) split.push_back(s == Split::train ? "train" : "test");
  header["split"] = std::move(split);
  header["dtype"] = "f32";
  header["noise_sigma"] = ds.noise_sigma;
  header["fine_factor"] = ds.fine_factor;
  header["seed"] = ds.seed;
  const std::string header_str = header.dump();

  auto os = io::open_out(path);
  io::write_magic(os, "PADS");
  io::write_u32(os, 1);
  io::write_u32(os, static_cast<uint32_t>(header_str.size()));
  os.write(header_str.data(), static_cast<std::streamsize>(header_str.size()));
  for (const auto& s : ds.samples) {
    std::vector<float> buf(s.phantom.pixels.begin(), s.phantom.pixels.end());
    io::write_array(os, buf);
    buf.assign(s.sinogram.samples.begin(), s.sinogram.samples.end());
    io::write_array(os, buf);
  }
  if (!os) fail(ErrorKind::io, "write failed: " + path);
}

inline Dataset load_dataset(const std::string& path) {
  auto is = io::open_in(path);
  io::check_magic(is, "PADS", "dataset");
  const uint32_t version = io::read_u32(is, "dataset version");
  if (version != 1) fail(ErrorKind::format, "unsupported dataset file version");
  const uint32_t header_len = io::read_u32(is, "dataset header length");
  std::string header_str(header_len, '\0');
  is.read(header_str.data(), header_len);
  if (!is) fail(ErrorKind::io, "truncated dataset header");

  Dataset ds;
  size_t n = 0;
  try {
    const auto header = nlohmann::json::parse(header_str);
    ds.geometry = geometry_from_json(header.at("geometry"));
    char fp[32];
    std::snprintf(fp, sizeof fp, "%016llx",
                  static_cast<unsigned long long>(geometry_fingerprint(ds.geometry)));
    if (header.at("geometry_fingerprint").get<std::string>() != fp)
      fail(ErrorKind::format, "dataset geometry fingerprint mismatch");
    if (header.at("dtype").get<std::string>() != "f32")
      fail(ErrorKind::format, "unsupported dataset dtype");
    n = header.at("n_samples").get<size_t>();
    const auto& split = header.at("split");
    if (split.size() != n) fail(ErrorKind::format, "dataset split labels do not partition samples");
    for (const auto& s : split)
      ds.split.push_back(s.get<std::string>() == "train" ? Split::train : Split::test);
    ds.noise_sigma = header.at("noise_sigma").get<double>();
    ds.fine_factor = header.at("fine_factor").get<int>();
    ds.seed = header.at("seed").get<uint64_t>();
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::format, std::string("bad dataset header: ") + e.what());
  }

  const size_t img_count = static_cast<size_t>(ds.geometry.grid_ny) * ds.geometry.grid_nx;
  const size_t sino_count =
      static_cast<size_t>(ds.geometry.n_detectors()) * ds.geometry.n_samples;
  ds.samples.resize(n);
  std::vector<float> buf;
  for (size_t i = 0; i < n; ++i) {
    io::read_array(is, buf, img_count, "dataset phantom blob");
    Image img(ds.geometry.grid_ny, ds.geometry.grid_nx);
    std::copy(buf.begin(), buf.end(), img.pixels.begin());
    io::read_array(is, buf, sino_count, "dataset sinogram blob");
    Sinogram sino(ds.geometry.n_detectors(), ds.geometry.n_samples);
    std::copy(buf.begin(), buf.end(), sino.samples.begin());
    ds.samples[i].phantom = std::move(img);
    ds.samples[i].sinogram = std::move(sino);
  }
  return ds;
}

/// Loads an 8-bit binary graymap, scales to [0, 1] and resamples to the
/// target grid with center-aligned nearest neighbor.
inline Image load_mask_image(const std::string& path, int ny, int nx) {
  const io::PgmImage pgm = io::load_pgm(path);
  Image out(ny, nx, 0.0);
  for (int i = 0; i < ny; ++i) {
    const int si = std::min(pgm.ny - 1,
                            static_cast<int>((i + 0.5) * pgm.ny / ny));
    for (int j = 0; j < nx; ++j) {
      const int sj = std::min(pgm.nx - 1,
                              static_cast<int>((j + 0.5) * pgm.nx / nx));
      out.at(i, j) =
          pgm.bytes[static_cast<size_t>(si) * pgm.nx + sj] / 255.0;
    }
  }
  return out;
}

}  // namespace pact
