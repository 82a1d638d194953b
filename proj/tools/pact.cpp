// Command-line front end: phantom/dataset generation, reconstruction,
// training, evaluation and image export. Every command echoes its resolved
// parameters into a JSON manifest that reproduces the run via --config.

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "pact/pact.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kExitUsage = 2;
constexpr int kExitIo = 3;
constexpr int kExitDivergence = 4;
constexpr int kExitIncompatible = 5;

int exit_code_for(pact::ErrorKind kind) {
  switch (kind) {
    case pact::ErrorKind::invalid_argument:
    case pact::ErrorKind::shape_mismatch:
    case pact::ErrorKind::coverage:
      return kExitUsage;
    case pact::ErrorKind::io:
    case pact::ErrorKind::format:
      return kExitIo;
    case pact::ErrorKind::divergence:
      return kExitDivergence;
    case pact::ErrorKind::incompatible:
      return kExitIncompatible;
  }
  return 1;
}

void set_threads(int threads) {
#ifdef _OPENMP
  if (threads > 0) omp_set_num_threads(threads);
#else
  (void)threads;
#endif
}

json load_config_params(const std::string& path) {
  std::ifstream is(path);
  if (!is) pact::fail(pact::ErrorKind::io, "cannot open config: " + path);
  json j;
  try {
    is >> j;
  } catch (const json::exception& e) {
    pact::fail(pact::ErrorKind::format, std::string("bad config JSON: ") + e.what());
  }
  if (j.contains("params")) return j.at("params");
  return j;
}

// Scan argv ahead of CLI11 so config values can seed the option defaults.
std::optional<std::string> find_config_arg(int argc, char** argv) {
  for (int i = 0; i < argc - 1; ++i)
    if (std::string(argv[i]) == "--config") return std::string(argv[i + 1]);
  return std::nullopt;
}

void write_manifest(const std::string& path, const std::string& command, const json& params) {
  std::ofstream os(path);
  if (!os) pact::fail(pact::ErrorKind::io, "cannot write manifest: " + path);
  json j;
  j["command"] = command;
  j["params"] = params;
  os << j.dump(2) << "\n";
}

template <class T>
void from_config(const json& cfg, const char* key, T& var) {
  if (cfg.contains(key)) var = cfg.at(key).get<T>();
}

// ---------------------------------------------------------------------------
// Geometry flags (dataset command). Values are SI; the -mm/-mhz conveniences
// convert at the boundary.

struct GeomParams {
  int nx = 64, ny = 64;
  double pixel = 1.0;
  int detectors = 32;
  double radius = 48.0;
  double span = 180.0;
  double start_angle = 0.0;
  double sound_speed = 1.0;
  double dt = 0.5;
  double t_start = 0.0;
  int samples = 0;  // 0 = smallest covered count plus margin
  double pixel_mm = 0.0, radius_mm = 0.0, fs_mhz = 0.0;
  std::string geometry_file;
};

void add_geometry_flags(CLI::App* app, GeomParams& gp) {
  app->add_option("--nx", gp.nx, "grid width in pixels");
  app->add_option("--ny", gp.ny, "grid height in pixels");
  app->add_option("--pixel", gp.pixel, "pixel size (m)");
  app->add_option("--detectors", gp.detectors, "number of ring elements");
  app->add_option("--radius", gp.radius, "ring radius (m)");
  app->add_option("--span", gp.span, "angular span (degrees)");
  app->add_option("--start-angle", gp.start_angle, "first element angle (degrees)");
  app->add_option("--sound-speed", gp.sound_speed, "speed of sound (m/s)");
  app->add_option("--dt", gp.dt, "sample period (s)");
  app->add_option("--t-start", gp.t_start, "time of first sample (s)");
  app->add_option("--samples", gp.samples, "time samples per channel (0 = auto)");
  app->add_option("--pixel-mm", gp.pixel_mm, "pixel size in mm (overrides --pixel)");
  app->add_option("--radius-mm", gp.radius_mm, "ring radius in mm (overrides --radius)");
  app->add_option("--fs-mhz", gp.fs_mhz, "sampling rate in MHz (overrides --dt)");
  app->add_option("--geometry", gp.geometry_file, "geometry JSON file (overrides flags)");
}

void geometry_from_config(const json& cfg, GeomParams& gp) {
  from_config(cfg, "nx", gp.nx);
  from_config(cfg, "ny", gp.ny);
  from_config(cfg, "pixel", gp.pixel);
  from_config(cfg, "detectors", gp.detectors);
  from_config(cfg, "radius", gp.radius);
  from_config(cfg, "span", gp.span);
  from_config(cfg, "start_angle", gp.start_angle);
  from_config(cfg, "sound_speed", gp.sound_speed);
  from_config(cfg, "dt", gp.dt);
  from_config(cfg, "t_start", gp.t_start);
  from_config(cfg, "samples", gp.samples);
  from_config(cfg, "pixel_mm", gp.pixel_mm);
  from_config(cfg, "radius_mm", gp.radius_mm);
  from_config(cfg, "fs_mhz", gp.fs_mhz);
  from_config(cfg, "geometry_file", gp.geometry_file);
}

json geometry_params_json(const GeomParams& gp) {
  json j;
  j["nx"] = gp.nx;
  j["ny"] = gp.ny;
  j["pixel"] = gp.pixel;
  j["detectors"] = gp.detectors;
  j["radius"] = gp.radius;
  j["span"] = gp.span;
  j["start_angle"] = gp.start_angle;
  j["sound_speed"] = gp.sound_speed;
  j["dt"] = gp.dt;
  j["t_start"] = gp.t_start;
  j["samples"] = gp.samples;
  j["pixel_mm"] = gp.pixel_mm;
  j["radius_mm"] = gp.radius_mm;
  j["fs_mhz"] = gp.fs_mhz;
  j["geometry_file"] = gp.geometry_file;
  return j;
}

pact::ImagingGeometry build_geometry(const GeomParams& gp_in) {
  GeomParams gp = gp_in;
  if (!gp.geometry_file.empty()) {
    std::ifstream is(gp.geometry_file);
    if (!is) pact::fail(pact::ErrorKind::io, "cannot open geometry: " + gp.geometry_file);
    json j;
    try {
      is >> j;
    } catch (const json::exception& e) {
      pact::fail(pact::ErrorKind::format, std::string("bad geometry JSON: ") + e.what());
    }
    return pact::geometry_from_json(j);
  }
  if (gp.pixel_mm > 0.0) gp.pixel = gp.pixel_mm * 1e-3;
  if (gp.radius_mm > 0.0) gp.radius = gp.radius_mm * 1e-3;
  if (gp.fs_mhz > 0.0) gp.dt = 1.0 / (gp.fs_mhz * 1e6);

  pact::GridSpec grid;
  grid.nx = gp.nx;
  grid.ny = gp.ny;
  grid.pixel_size = gp.pixel;
  grid.origin = {-(gp.nx - 1) / 2.0 * gp.pixel, -(gp.ny - 1) / 2.0 * gp.pixel};
  pact::AcquisitionSpec acq;
  acq.sound_speed = gp.sound_speed;
  acq.sample_period = gp.dt;
  acq.t_start = gp.t_start;
  acq.n_samples = gp.samples > 0 ? gp.samples : 2;
  auto geom = pact::make_half_ring_geometry(gp.detectors, gp.radius, {0.0, 0.0}, gp.span,
                                            gp.start_angle, grid, acq);
  if (gp.samples <= 0) {
    // margin of two samples keeps the refined generation grid covered too
    geom.n_samples = pact::required_samples(geom) + 2;
  }
  return geom;
}

pact::SystemMatrix obtain_matrix(const pact::ImagingGeometry& geom,
                                 const std::string& cache_path) {
  const uint64_t fp = pact::geometry_fingerprint(geom);
  if (!cache_path.empty() && fs::exists(cache_path))
    return pact::load_system_matrix(cache_path, fp);
  pact::SystemMatrix A = pact::build_system_matrix(geom);
  if (!cache_path.empty()) pact::save_system_matrix(cache_path, A);
  return A;
}

std::vector<pact::Image> make_phantoms(const pact::ImagingGeometry& geom, int n,
                                       uint64_t seed, int trees, int depth,
                                       const std::string& mask_path) {
  std::vector<pact::Image> out;
  out.reserve(static_cast<size_t>(n));
  if (!mask_path.empty()) {
    const pact::Image mask =
        pact::load_mask_image(mask_path, geom.grid_ny, geom.grid_nx);
    const uint64_t base = pact::derive_seed(seed, 11);
    for (int i = 0; i < n; ++i)
      out.push_back(pact::augment_mask(mask, base ^ static_cast<uint64_t>(i)));
  } else {
    pact::VesselPhantomConfig cfg;
    cfg.ny = geom.grid_ny;
    cfg.nx = geom.grid_nx;
    cfg.n_trees = trees;
    cfg.branch_depth = depth;
    const uint64_t base = pact::derive_seed(seed, 10);
    for (int i = 0; i < n; ++i) {
      cfg.seed = base ^ static_cast<uint64_t>(i);
      out.push_back(pact::generate_vessel_phantom(cfg));
    }
  }
  return out;
}

std::string sample_name(const char* prefix, int idx, int iter = -1) {
  char buf[64];
  if (iter < 0)
    std::snprintf(buf, sizeof buf, "%s_%04d.paim", prefix, idx);
  else
    std::snprintf(buf, sizeof buf, "%s_%04d_iter%d.paim", prefix, idx, iter);
  return buf;
}

// ---------------------------------------------------------------------------

int cmd_phantom(const json& cfg, CLI::App* app, int argc, char** argv) {
  std::string out_dir, mask_path;
  int n = 1, trees = 3, depth = 3, threads = 0;
  uint64_t seed = 0;
  bool seed_set = false;
  int nx = 64, ny = 64;

  from_config(cfg, "out", out_dir);
  from_config(cfg, "mask", mask_path);
  from_config(cfg, "n", n);
  from_config(cfg, "trees", trees);
  from_config(cfg, "depth", depth);
  from_config(cfg, "nx", nx);
  from_config(cfg, "ny", ny);
  if (cfg.contains("seed")) {
    seed = cfg.at("seed").get<uint64_t>();
    seed_set = true;
  }

  app->add_option("--out", out_dir, "output directory");
  app->add_option("--n", n, "number of phantoms");
  auto* seed_opt = app->add_option("--seed", seed, "random seed");
  app->add_option("--trees", trees, "vessel trees per phantom");
  app->add_option("--depth", depth, "branching depth");
  app->add_option("--nx", nx, "grid width");
  app->add_option("--ny", ny, "grid height");
  app->add_option("--mask", mask_path, "graymap mask to augment instead of vessels");
  app->add_option("--threads", threads, "worker thread cap");
  std::string config_path;
  app->add_option("--config", config_path, "JSON config/manifest");
  app->parse(argc, argv);
  if (seed_opt->count() > 0) seed_set = true;

  pact::require(!out_dir.empty(), pact::ErrorKind::invalid_argument, "--out is required");
  pact::require(seed_set, pact::ErrorKind::invalid_argument, "--seed is required");
  pact::require(n >= 1, pact::ErrorKind::invalid_argument, "--n must be >= 1");
  set_threads(threads);

  fs::create_directories(out_dir);
  std::vector<pact::Image> phantoms;
  if (!mask_path.empty()) {
    const pact::Image mask = pact::load_mask_image(mask_path, ny, nx);
    const uint64_t base = pact::derive_seed(seed, 11);
    for (int i = 0; i < n; ++i)
      phantoms.push_back(pact::augment_mask(mask, base ^ static_cast<uint64_t>(i)));
  } else {
    pact::VesselPhantomConfig vc;
    vc.ny = ny;
    vc.nx = nx;
    vc.n_trees = trees;
    vc.branch_depth = depth;
    const uint64_t base = pact::derive_seed(seed, 10);
    for (int i = 0; i < n; ++i) {
      vc.seed = base ^ static_cast<uint64_t>(i);
      phantoms.push_back(pact::generate_vessel_phantom(vc));
    }
  }
  for (int i = 0; i < n; ++i)
    pact::io::save_image((fs::path(out_dir) / sample_name("phantom", i)).string(),
                         phantoms[static_cast<size_t>(i)]);

  json params;
  params["out"] = out_dir;
  params["n"] = n;
  params["seed"] = seed;
  params["trees"] = trees;
  params["depth"] = depth;
  params["nx"] = nx;
  params["ny"] = ny;
  params["mask"] = mask_path;
  write_manifest((fs::path(out_dir) / "phantom.manifest.json").string(), "phantom", params);
  std::cout << "wrote " << n << " phantom(s) to " << out_dir << "\n";
  return 0;
}

int cmd_dataset(const json& cfg, CLI::App* app, int argc, char** argv) {
  GeomParams gp;
  geometry_from_config(cfg, gp);
  std::string out_path, mask_path;
  int n = 20, n_train = -1, trees = 3, depth = 3, threads = 0, fine_factor = 2;
  double noise = 0.0;
  uint64_t seed = 0;
  bool seed_set = false;

  from_config(cfg, "out", out_path);
  from_config(cfg, "mask", mask_path);
  from_config(cfg, "n", n);
  from_config(cfg, "train", n_train);
  from_config(cfg, "trees", trees);
  from_config(cfg, "depth", depth);
  from_config(cfg, "fine_factor", fine_factor);
  from_config(cfg, "noise", noise);
  if (cfg.contains("seed")) {
    seed = cfg.at("seed").get<uint64_t>();
    seed_set = true;
  }

  app->add_option("--out", out_path, "output dataset file (.pads)");
  app->add_option("--n", n, "number of samples");
  app->add_option("--train", n_train, "training samples (default: 90%)");
  auto* seed_opt = app->add_option("--seed", seed, "random seed");
  app->add_option("--noise", noise, "noise std as a fraction of peak amplitude");
  app->add_option("--fine-factor", fine_factor, "generation-grid refinement");
  app->add_option("--trees", trees, "vessel trees per phantom");
  app->add_option("--depth", depth, "branching depth");
  app->add_option("--mask", mask_path, "graymap mask to augment instead of vessels");
  app->add_option("--threads", threads, "worker thread cap");
  add_geometry_flags(app, gp);
  std::string config_path;
  app->add_option("--config", config_path, "JSON config/manifest");
  app->parse(argc, argv);
  if (seed_opt->count() > 0) seed_set = true;

  pact::require(!out_path.empty(), pact::ErrorKind::invalid_argument, "--out is required");
  pact::require(seed_set, pact::ErrorKind::invalid_argument, "--seed is required");
  pact::require(n >= 1, pact::ErrorKind::invalid_argument, "--n must be >= 1");
  set_threads(threads);

  const pact::ImagingGeometry geom = build_geometry(gp);
  if (n_train < 0) n_train = (n * 9) / 10;
  pact::require(n_train <= n, pact::ErrorKind::invalid_argument, "--train exceeds --n");

  const auto phantoms = make_phantoms(geom, n, seed, trees, depth, mask_path);
  const pact::Dataset ds = pact::synthesize_dataset(
      geom, phantoms, noise, fine_factor, pact::derive_seed(seed, 20), n_train);
  pact::save_dataset(out_path, ds);

  json params;
  params["out"] = out_path;
  params["n"] = n;
  params["train"] = n_train;
  params["seed"] = seed;
  params["noise"] = noise;
  params["fine_factor"] = fine_factor;
  params["trees"] = trees;
  params["depth"] = depth;
  params["mask"] = mask_path;
  const json geom_params = geometry_params_json(gp);
  for (const auto& [k, v] : geom_params.items()) params[k] = v;
  write_manifest(out_path + ".manifest.json", "dataset", params);
  std::cout << "wrote dataset with " << n << " samples (" << n_train << " train) to "
            << out_path << "\n";
  return 0;
}

struct MethodParams {
  std::string method = "ubp";
  double lambda = 2.0;
  double alpha = 0.04;
  double eps = 1e-3;
  int iters = 20;
  bool nonneg = false;
  std::string model_path;
};

void add_method_flags(CLI::App* app, MethodParams& mp) {
  app->add_option("--method", mp.method, "ubp | tv | ista | dav");
  app->add_option("--lambda", mp.lambda, "iterative step size");
  app->add_option("--alpha", mp.alpha, "regularization weight");
  app->add_option("--eps", mp.eps, "variation smoothing");
  app->add_option("--iters", mp.iters, "iteration count");
  app->add_flag("--nonneg", mp.nonneg, "clamp negatives after each step");
  app->add_option("--model", mp.model_path, "trained model (.davm), required for dav");
}

void method_from_config(const json& cfg, MethodParams& mp) {
  from_config(cfg, "method", mp.method);
  from_config(cfg, "lambda", mp.lambda);
  from_config(cfg, "alpha", mp.alpha);
  from_config(cfg, "eps", mp.eps);
  from_config(cfg, "iters", mp.iters);
  from_config(cfg, "nonneg", mp.nonneg);
  from_config(cfg, "model", mp.model_path);
}

json method_params_json(const MethodParams& mp) {
  json j;
  j["method"] = mp.method;
  j["lambda"] = mp.lambda;
  j["alpha"] = mp.alpha;
  j["eps"] = mp.eps;
  j["iters"] = mp.iters;
  j["nonneg"] = mp.nonneg;
  j["model"] = mp.model_path;
  return j;
}

/// Returns the iterate list for one sinogram under the selected method.
std::vector<pact::Image> run_method(const MethodParams& mp,
                                    const pact::ImagingGeometry& geom,
                                    const pact::SystemMatrix& A,
                                    const pact::DavModel<float>* model,
                                    const pact::Sinogram& sino, bool emit_iterates,
                                    std::vector<pact::ObjectiveRow>* trace) {
  if (mp.method == "ubp") return {pact::ubp_reconstruct(geom, sino)};
  const pact::Image init(geom.grid_ny, geom.grid_nx, 0.0);
  if (mp.method == "tv") {
    pact::TvParams tp;
    tp.step = mp.lambda;
    tp.alpha = mp.alpha;
    tp.eps = mp.eps;
    tp.n_iters = mp.iters;
    tp.nonneg = mp.nonneg;
    return {pact::tv_gd_reconstruct(A, sino, tp, init, trace)};
  }
  if (mp.method == "ista") {
    pact::IstaParams ip;
    ip.step = mp.lambda;
    ip.alpha = mp.alpha;
    ip.n_iters = mp.iters;
    return {pact::ista_l1_reconstruct(A, sino, ip, init, trace)};
  }
  if (mp.method == "dav") {
    pact::require(model != nullptr, pact::ErrorKind::invalid_argument,
                  "--model is required for the dav method");
    auto iterates = pact::dav_iterates(*model, A, sino);
    if (emit_iterates) return iterates;
    return {iterates.back()};
  }
  pact::fail(pact::ErrorKind::invalid_argument, "unknown method: " + mp.method);
}

int cmd_recon(const json& cfg, CLI::App* app, int argc, char** argv) {
  std::string dataset_path, out_dir, cache_path, split = "all";
  MethodParams mp;
  method_from_config(cfg, mp);
  int sample = -1, threads = 0;
  bool emit_iterates = false, trace = false;

  from_config(cfg, "dataset", dataset_path);
  from_config(cfg, "out", out_dir);
  from_config(cfg, "matrix_cache", cache_path);
  from_config(cfg, "split", split);
  from_config(cfg, "sample", sample);
  from_config(cfg, "emit_iterates", emit_iterates);
  from_config(cfg, "trace", trace);

  app->add_option("--dataset", dataset_path, "input dataset (.pads)");
  app->add_option("--out", out_dir, "output directory");
  app->add_option("--sample", sample, "sample index (-1 = all in split)");
  app->add_option("--split", split, "all | train | test");
  add_method_flags(app, mp);
  app->add_flag("--emit-iterates", emit_iterates, "write every unrolled iterate");
  app->add_flag("--trace", trace, "write per-iteration objective CSVs");
  app->add_option("--matrix-cache", cache_path, "system-matrix cache file (.pasm)");
  app->add_option("--threads", threads, "worker thread cap");
  std::string config_path;
  app->add_option("--config", config_path, "JSON config/manifest");
  app->parse(argc, argv);

  pact::require(!dataset_path.empty(), pact::ErrorKind::invalid_argument,
                "--dataset is required");
  pact::require(!out_dir.empty(), pact::ErrorKind::invalid_argument, "--out is required");
  set_threads(threads);

  const pact::Dataset ds = pact::load_dataset(dataset_path);
  const pact::SystemMatrix A = obtain_matrix(ds.geometry, cache_path);

  std::optional<pact::DavModel<float>> model;
  if (mp.method == "dav") {
    pact::require(!mp.model_path.empty(), pact::ErrorKind::invalid_argument,
                  "--model is required for the dav method");
    model = pact::load_dav_model(mp.model_path);
    pact::require(model->geometry_fingerprint == A.fingerprint(),
                  pact::ErrorKind::incompatible,
                  "model was trained for a different geometry");
  }

  std::vector<int> indices;
  if (sample >= 0) {
    pact::require(sample < static_cast<int>(ds.samples.size()),
                  pact::ErrorKind::invalid_argument, "--sample out of range");
    indices.push_back(sample);
  } else if (split == "train") {
    indices = ds.train_indices();
  } else if (split == "test") {
    indices = ds.test_indices();
  } else {
    for (size_t i = 0; i < ds.samples.size(); ++i) indices.push_back(static_cast<int>(i));
  }
  pact::require(!indices.empty(), pact::ErrorKind::invalid_argument,
                "no samples selected");

  fs::create_directories(out_dir);
  std::ofstream metrics((fs::path(out_dir) / "metrics.csv").string());
  metrics.precision(17);
  metrics << "sample_id,method,iteration,psnr_db,ssim\n";

  for (int idx : indices) {
    const auto& s = ds.samples[static_cast<size_t>(idx)];
    std::vector<pact::ObjectiveRow> trace_rows;
    const auto iterates =
        run_method(mp, ds.geometry, A, model ? &*model : nullptr, s.sinogram,
                   emit_iterates, trace ? &trace_rows : nullptr);
    double lo = s.phantom.pixels[0], hi = s.phantom.pixels[0];
    for (double v : s.phantom.pixels) {
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
    const double range = (hi > lo) ? hi - lo : 1.0;
    for (size_t k = 0; k < iterates.size(); ++k) {
      const std::string name =
          iterates.size() > 1
              ? sample_name("recon", idx, static_cast<int>(k))
              : sample_name("recon", idx);
      pact::io::save_image((fs::path(out_dir) / name).string(), iterates[k]);
      metrics << idx << "," << mp.method << "," << (k + 1) << ","
              << pact::psnr(s.phantom, iterates[k], range) << ","
              << pact::ssim(s.phantom, iterates[k], range) << "\n";
    }
    if (trace && !trace_rows.empty()) {
      char buf[48];
      std::snprintf(buf, sizeof buf, "trace_%04d.csv", idx);
      pact::write_trace_csv((fs::path(out_dir) / buf).string(), trace_rows);
    }
  }

  json params;
  params["dataset"] = dataset_path;
  params["out"] = out_dir;
  params["sample"] = sample;
  params["split"] = split;
  params["emit_iterates"] = emit_iterates;
  params["trace"] = trace;
  params["matrix_cache"] = cache_path;
  const json method_params = method_params_json(mp);
  for (const auto& [k, v] : method_params.items()) params[k] = v;
  write_manifest((fs::path(out_dir) / "recon.manifest.json").string(), "recon", params);
  std::cout << "reconstructed " << indices.size() << " sample(s) with " << mp.method
            << " into " << out_dir << "\n";
  return 0;
}

int cmd_train(const json& cfg, CLI::App* app, int argc, char** argv) {
  std::string dataset_path, out_path, cache_path, stage_log;
  pact::TrainConfig tc;
  int threads = 0;
  uint64_t seed = 0;
  bool seed_set = false;

  from_config(cfg, "dataset", dataset_path);
  from_config(cfg, "out", out_path);
  from_config(cfg, "matrix_cache", cache_path);
  from_config(cfg, "stage_log", stage_log);
  from_config(cfg, "imax", tc.i_max);
  from_config(cfg, "epochs", tc.epochs);
  from_config(cfg, "lr", tc.learning_rate);
  from_config(cfg, "batch", tc.batch_size);
  from_config(cfg, "omega_init", tc.omega_init);
  from_config(cfg, "width", tc.width);
  from_config(cfg, "hidden", tc.n_hidden);
  from_config(cfg, "slope", tc.slope);
  if (cfg.contains("seed")) {
    seed = cfg.at("seed").get<uint64_t>();
    seed_set = true;
  }

  app->add_option("--dataset", dataset_path, "training dataset (.pads)");
  app->add_option("--out", out_path, "output model file (.davm)");
  app->add_option("--imax", tc.i_max, "unrolled iterations");
  app->add_option("--epochs", tc.epochs, "epochs per stage");
  app->add_option("--lr", tc.learning_rate, "learning rate");
  app->add_option("--batch", tc.batch_size, "batch size");
  auto* seed_opt = app->add_option("--seed", seed, "random seed");
  app->add_option("--omega-init", tc.omega_init, "initial step size");
  app->add_option("--width", tc.width, "hidden channel width");
  app->add_option("--hidden", tc.n_hidden, "hidden conv layers");
  app->add_option("--slope", tc.slope, "leaky relu negative slope");
  app->add_option("--stage-log", stage_log, "per-stage metric CSV (default <out>.stages.csv)");
  app->add_option("--matrix-cache", cache_path, "system-matrix cache file (.pasm)");
  app->add_option("--threads", threads, "worker thread cap");
  std::string config_path;
  app->add_option("--config", config_path, "JSON config/manifest");
  app->parse(argc, argv);
  if (seed_opt->count() > 0) seed_set = true;

  pact::require(!dataset_path.empty(), pact::ErrorKind::invalid_argument,
                "--dataset is required");
  pact::require(!out_path.empty(), pact::ErrorKind::invalid_argument, "--out is required");
  pact::require(seed_set, pact::ErrorKind::invalid_argument, "--seed is required");
  tc.seed = seed;
  set_threads(threads);
  if (stage_log.empty()) stage_log = out_path + ".stages.csv";

  const pact::Dataset ds = pact::load_dataset(dataset_path);
  const pact::SystemMatrix A = obtain_matrix(ds.geometry, cache_path);
  const auto result = pact::train_dav_layerwise<float>(ds, A, tc);
  pact::save_dav_model(out_path, result.model);
  pact::write_summary_csv(stage_log, result.heldout, "dav");

  json params;
  params["dataset"] = dataset_path;
  params["out"] = out_path;
  params["imax"] = tc.i_max;
  params["epochs"] = tc.epochs;
  params["lr"] = tc.learning_rate;
  params["batch"] = tc.batch_size;
  params["seed"] = seed;
  params["omega_init"] = tc.omega_init;
  params["width"] = tc.width;
  params["hidden"] = tc.n_hidden;
  params["slope"] = tc.slope;
  params["stage_log"] = stage_log;
  params["matrix_cache"] = cache_path;
  write_manifest(out_path + ".manifest.json", "train", params);

  std::cout << "trained " << tc.i_max << " stage(s); step sizes:";
  for (double w : result.model.omegas) std::cout << " " << w;
  std::cout << "\nmodel written to " << out_path << "\n";
  return 0;
}

int cmd_eval(const json& cfg, CLI::App* app, int argc, char** argv) {
  std::string dataset_path, out_path, summary_path, cache_path;
  MethodParams mp;
  method_from_config(cfg, mp);
  int threads = 0;
  bool per_iteration = false;

  from_config(cfg, "dataset", dataset_path);
  from_config(cfg, "out", out_path);
  from_config(cfg, "summary", summary_path);
  from_config(cfg, "matrix_cache", cache_path);
  from_config(cfg, "per_iteration", per_iteration);

  app->add_option("--dataset", dataset_path, "dataset (.pads); evaluates the test split");
  app->add_option("--out", out_path, "per-sample metric CSV");
  app->add_option("--summary", summary_path, "summary CSV (default <out>.summary.csv)");
  add_method_flags(app, mp);
  app->add_flag("--per-iteration", per_iteration, "one row per unrolled iterate");
  app->add_option("--matrix-cache", cache_path, "system-matrix cache file (.pasm)");
  app->add_option("--threads", threads, "worker thread cap");
  std::string config_path;
  app->add_option("--config", config_path, "JSON config/manifest");
  app->parse(argc, argv);

  pact::require(!dataset_path.empty(), pact::ErrorKind::invalid_argument,
                "--dataset is required");
  pact::require(!out_path.empty(), pact::ErrorKind::invalid_argument, "--out is required");
  set_threads(threads);
  if (summary_path.empty()) summary_path = out_path + ".summary.csv";

  const pact::Dataset ds = pact::load_dataset(dataset_path);
  const pact::SystemMatrix A = obtain_matrix(ds.geometry, cache_path);

  std::optional<pact::DavModel<float>> model;
  if (mp.method == "dav") {
    pact::require(!mp.model_path.empty(), pact::ErrorKind::invalid_argument,
                  "--model is required for the dav method");
    model = pact::load_dav_model(mp.model_path);
  }

  const auto test_idx = ds.test_indices();
  pact::require(!test_idx.empty(), pact::ErrorKind::invalid_argument,
                "dataset has no test split");
  std::vector<std::pair<pact::Image, pact::Sinogram>> pairs;
  for (int i : test_idx)
    pairs.emplace_back(ds.samples[static_cast<size_t>(i)].phantom,
                       ds.samples[static_cast<size_t>(i)].sinogram);

  const auto report = pact::evaluate_method(
      pairs, [&](const pact::Sinogram& sino) {
        return run_method(mp, ds.geometry, A, model ? &*model : nullptr, sino,
                          per_iteration, nullptr);
      });
  pact::write_metric_csv(out_path, report, mp.method);
  pact::write_summary_csv(summary_path, report, mp.method);

  json params;
  params["dataset"] = dataset_path;
  params["out"] = out_path;
  params["summary"] = summary_path;
  params["per_iteration"] = per_iteration;
  params["matrix_cache"] = cache_path;
  const json method_params = method_params_json(mp);
  for (const auto& [k, v] : method_params.items()) params[k] = v;
  write_manifest(out_path + ".manifest.json", "eval", params);

  for (const auto& row : report.rows)
    std::cout << mp.method << " iteration " << row.iteration << ": psnr "
              << row.psnr_mean << " +- " << row.psnr_std << " dB, ssim "
              << row.ssim_mean << " +- " << row.ssim_std << "\n";
  return 0;
}

int cmd_export(const json& cfg, CLI::App* app, int argc, char** argv) {
  std::string in_path, out_path;
  from_config(cfg, "in", in_path);
  from_config(cfg, "out", out_path);

  app->add_option("--in", in_path, "input image (.paim)");
  app->add_option("--out", out_path, "output graymap (.pgm)");
  std::string config_path;
  app->add_option("--config", config_path, "JSON config/manifest");
  app->parse(argc, argv);

  pact::require(!in_path.empty(), pact::ErrorKind::invalid_argument, "--in is required");
  pact::require(!out_path.empty(), pact::ErrorKind::invalid_argument, "--out is required");

  const pact::Image img = pact::io::load_image(in_path);
  double lo = img.pixels[0], hi = img.pixels[0];
  for (double v : img.pixels) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  std::vector<uint8_t> bytes(img.pixels.size(), 0);
  if (hi > lo) {
    const double scale = 255.0 / (hi - lo);
    for (size_t i = 0; i < img.pixels.size(); ++i)
      bytes[i] = static_cast<uint8_t>(std::lround((img.pixels[i] - lo) * scale));
  }
  pact::io::save_pgm(out_path, img.ny, img.nx, bytes);

  // normalization sidecar so exports stay invertible up to quantization
  json sidecar;
  sidecar["min"] = lo;
  sidecar["max"] = hi;
  std::ofstream sc(out_path + ".json");
  if (!sc) pact::fail(pact::ErrorKind::io, "cannot write sidecar for " + out_path);
  sc << sidecar.dump(2) << "\n";

  json params;
  params["in"] = in_path;
  params["out"] = out_path;
  write_manifest(out_path + ".manifest.json", "export", params);
  std::cout << "exported " << in_path << " to " << out_path << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Limited-view photoacoustic reconstruction toolkit"};
  app.require_subcommand(1);
  auto* phantom = app.add_subcommand("phantom", "generate phantoms");
  auto* dataset = app.add_subcommand("dataset", "synthesize a paired dataset");
  auto* recon = app.add_subcommand("recon", "reconstruct dataset samples");
  auto* train = app.add_subcommand("train", "train the unrolled model");
  auto* eval_ = app.add_subcommand("eval", "evaluate a method on the test split");
  auto* export_ = app.add_subcommand("export", "export an image to a graymap");
  phantom->prefix_command();
  dataset->prefix_command();
  recon->prefix_command();
  train->prefix_command();
  eval_->prefix_command();
  export_->prefix_command();

  try {
    try {
      app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
      if (e.get_exit_code() == 0) return app.exit(e);  // --help
      std::cerr << "usage error: " << e.what() << "\n";
      return kExitUsage;
    }

    // The chosen subcommand re-parses its own argument slice so config
    // defaults can be injected before the flags land.
    CLI::App* chosen = app.get_subcommands().front();
    std::vector<std::string> remaining = chosen->remaining();
    std::vector<char*> sub_argv;
    std::string prog = std::string(argv[0]) + " " + chosen->get_name();
    sub_argv.push_back(prog.data());
    for (auto& s : remaining) sub_argv.push_back(s.data());

    json cfg = json::object();
    if (auto config_path =
            find_config_arg(static_cast<int>(sub_argv.size()), sub_argv.data()))
      cfg = load_config_params(*config_path);

    CLI::App sub{chosen->get_description()};
    const int sub_argc = static_cast<int>(sub_argv.size());
    try {
      if (chosen == phantom) return cmd_phantom(cfg, &sub, sub_argc, sub_argv.data());
      if (chosen == dataset) return cmd_dataset(cfg, &sub, sub_argc, sub_argv.data());
      if (chosen == recon) return cmd_recon(cfg, &sub, sub_argc, sub_argv.data());
      if (chosen == train) return cmd_train(cfg, &sub, sub_argc, sub_argv.data());
      if (chosen == eval_) return cmd_eval(cfg, &sub, sub_argc, sub_argv.data());
      if (chosen == export_) return cmd_export(cfg, &sub, sub_argc, sub_argv.data());
    } catch (const CLI::ParseError& e) {
      if (e.get_exit_code() == 0) return sub.exit(e);  // --help
      std::cerr << "usage error: " << e.what() << "\n";
      return kExitUsage;
    }
    std::cerr << "usage error: unknown subcommand\n";
    return kExitUsage;
  } catch (const pact::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code_for(e.kind());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
