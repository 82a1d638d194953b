#include <catch2/catch_amalgamated.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>

#include "pact/pact.hpp"

namespace fs = std::filesystem;

namespace {

const std::string cli = PACT_CLI_PATH;

int run(const std::string& args) {
  const std::string cmd = cli + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WEXITSTATUS(status);
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  REQUIRE(is.good());
  return std::string((std::istreambuf_iterator<char>(is)),
                     std::istreambuf_iterator<char>());
}

int count_lines(const fs::path& p) {
  std::ifstream is(p);
  REQUIRE(is.good());
  int n = 0;
  std::string line;
  while (std::getline(is, line))
    if (!line.empty()) ++n;
  return n;
}

fs::path work_dir() {
  const auto dir = fs::temp_directory_path() / "pact_cli_test";
  fs::create_directories(dir);
  return dir;
}

const std::string kSmallGeom =
    " --nx 16 --ny 16 --detectors 6 --radius 24 --dt 0.5 --sound-speed 1 ";

}  // namespace

TEST_CASE("dataset generation is reproducible and manifest-driven") {
  const auto dir = work_dir() / "ds";
  fs::create_directories(dir);
  const auto a = dir / "a.pads";
  const auto b = dir / "b.pads";
  const auto c = dir / "c.pads";

  REQUIRE(run("dataset --out " + a.string() + " --n 6 --train 4 --seed 7 --noise 0.01" +
              kSmallGeom) == 0);
  REQUIRE(run("dataset --out " + b.string() + " --n 6 --train 4 --seed 7 --noise 0.01" +
              kSmallGeom) == 0);
  CHECK(slurp(a) == slurp(b));

  // the manifest reproduces the dataset byte for byte
  REQUIRE(fs::exists(a.string() + ".manifest.json"));
  REQUIRE(run("dataset --config " + a.string() + ".manifest.json --out " + c.string()) ==
          0);
  CHECK(slurp(a) == slurp(c));
}

TEST_CASE("empty requests are usage errors and write nothing") {
  const auto dir = work_dir() / "usage";
  fs::create_directories(dir);
  const auto out = dir / "zero.pads";
  CHECK(run("dataset --out " + out.string() + " --n 0 --seed 1" + kSmallGeom) == 2);
  CHECK_FALSE(fs::exists(out));
  CHECK(run("dataset --n 4" + kSmallGeom) == 2);  // no --out, no --seed
}

TEST_CASE("phantom command is deterministic") {
  const auto d1 = work_dir() / "ph1";
  const auto d2 = work_dir() / "ph2";
  REQUIRE(run("phantom --out " + d1.string() + " --n 2 --seed 5 --nx 16 --ny 16") == 0);
  REQUIRE(run("phantom --out " + d2.string() + " --n 2 --seed 5 --nx 16 --ny 16") == 0);
  CHECK(slurp(d1 / "phantom_0000.paim") == slurp(d2 / "phantom_0000.paim"));
  CHECK(slurp(d1 / "phantom_0001.paim") == slurp(d2 / "phantom_0001.paim"));
}

TEST_CASE("ubp of silent channels is a zero image") {
  const auto dir = work_dir() / "ubp";
  fs::create_directories(dir);
  const auto ds = dir / "quiet.pads";
  REQUIRE(run("dataset --out " + ds.string() +
              " --n 2 --train 1 --seed 3 --trees 0 --noise 0 --fine-factor 1" +
              kSmallGeom) == 0);
  const auto out = dir / "rec";
  REQUIRE(run("recon --dataset " + ds.string() + " --method ubp --sample 0 --out " +
              out.string()) == 0);
  const auto img = pact::io::load_image((out / "recon_0000.paim").string());
  for (double v : img.pixels) CHECK(v == 0.0);
}

TEST_CASE("training writes a model, a stage log, and is reproducible") {
  const auto dir = work_dir() / "train";
  fs::create_directories(dir);
  const auto ds = dir / "train.pads";
  REQUIRE(run("dataset --out " + ds.string() + " --n 6 --train 4 --seed 11 --noise 0.01" +
              kSmallGeom) == 0);

  const auto m1 = dir / "m1.davm";
  const auto m2 = dir / "m2.davm";
  const std::string train_args =
      " --imax 2 --epochs 1 --batch 2 --width 2 --hidden 2 --seed 21 --lr 0.001";
  REQUIRE(run("train --dataset " + ds.string() + " --out " + m1.string() + train_args) ==
          0);
  REQUIRE(run("train --dataset " + ds.string() + " --out " + m2.string() + train_args) ==
          0);
  CHECK(slurp(m1) == slurp(m2));

  // header + one row per stage
  CHECK(count_lines(fs::path(m1.string() + ".stages.csv")) == 3);

  // manifest reruns reproduce the model bytes
  const auto m3 = dir / "m3.davm";
  REQUIRE(run("train --config " + m1.string() + ".manifest.json --out " + m3.string() +
              " --stage-log " + (dir / "m3.stages.csv").string()) == 0);
  CHECK(slurp(m1) == slurp(m3));

  // unrolled reconstruction emits every iterate
  const auto rec = dir / "rec";
  REQUIRE(run("recon --dataset " + ds.string() + " --method dav --model " + m1.string() +
              " --sample 4 --emit-iterates --out " + rec.string()) == 0);
  CHECK(fs::exists(rec / "recon_0004_iter0.paim"));
  CHECK(fs::exists(rec / "recon_0004_iter1.paim"));
  CHECK(fs::exists(rec / "recon_0004_iter2.paim"));
  CHECK_FALSE(fs::exists(rec / "recon_0004_iter3.paim"));

  // evaluation writes the per-iteration table
  const auto report = dir / "report.csv";
  REQUIRE(run("eval --dataset " + ds.string() + " --method dav --model " + m1.string() +
              " --per-iteration --out " + report.string()) == 0);
  CHECK(count_lines(report) >= 2);
  CHECK(count_lines(fs::path(report.string() + ".summary.csv")) == 4);  // header + 3 rows
}

TEST_CASE("dav requires a model and rejects mismatched geometries") {
  const auto dir = work_dir() / "mismatch";
  fs::create_directories(dir);
  const auto ds1 = dir / "g1.pads";
  const auto ds2 = dir / "g2.pads";
  REQUIRE(run("dataset --out " + ds1.string() + " --n 4 --train 3 --seed 1" +
              kSmallGeom) == 0);
  REQUIRE(run("dataset --out " + ds2.string() +
              " --n 4 --train 3 --seed 1 --nx 16 --ny 16 --detectors 5 --radius 25 "
              "--dt 0.5 --sound-speed 1") == 0);

  CHECK(run("recon --dataset " + ds1.string() + " --method dav --out " +
            (dir / "x").string()) == 2);

  const auto model = dir / "m.davm";
  REQUIRE(run("train --dataset " + ds1.string() + " --out " + model.string() +
              " --imax 1 --epochs 1 --batch 2 --width 2 --hidden 2 --seed 2") == 0);
  CHECK(run("recon --dataset " + ds2.string() + " --method dav --model " + model.string() +
            " --out " + (dir / "y").string()) == 5);
}

TEST_CASE("export writes a graymap with an invertible sidecar") {
  const auto dir = work_dir() / "export";
  fs::create_directories(dir);

  // two-level image maps to the full byte range
  pact::Image two(16, 16, 0.0);
  for (int j = 0; j < 16; ++j) two.at(3, j) = 1.0;
  const auto in = dir / "two.paim";
  pact::io::save_image(in.string(), two);
  const auto out = dir / "two.pgm";
  REQUIRE(run("export --in " + in.string() + " --out " + out.string()) == 0);
  const auto pgm = pact::io::load_pgm(out.string());
  for (int i = 0; i < 16; ++i)
    for (int j = 0; j < 16; ++j)
      CHECK(pgm.bytes[static_cast<size_t>(i) * 16 + j] == (i == 3 ? 255 : 0));

  // constant image: all zeros, sidecar records min == max
  pact::Image flat(16, 16, 0.77);
  const auto fin = dir / "flat.paim";
  pact::io::save_image(fin.string(), flat);
  const auto fout = dir / "flat.pgm";
  REQUIRE(run("export --in " + fin.string() + " --out " + fout.string()) == 0);
  const auto fpgm = pact::io::load_pgm(fout.string());
  for (uint8_t b : fpgm.bytes) CHECK(b == 0);
  {
    std::ifstream sc(fout.string() + ".json");
    nlohmann::json j;
    sc >> j;
    CHECK(j.at("min").get<double>() == j.at("max").get<double>());
  }

  // quantization bound on reimport
  pact::Image ramp(16, 16, 0.0);
  for (int i = 0; i < 16; ++i)
    for (int j = 0; j < 16; ++j) ramp.at(i, j) = std::sin(0.3 * i) * std::cos(0.2 * j);
  const auto rin = dir / "ramp.paim";
  pact::io::save_image(rin.string(), ramp);
  const auto rout = dir / "ramp.pgm";
  REQUIRE(run("export --in " + rin.string() + " --out " + rout.string()) == 0);
  const auto rpgm = pact::io::load_pgm(rout.string());
  nlohmann::json sidecar;
  {
    std::ifstream sc(rout.string() + ".json");
    sc >> sidecar;
  }
  const double lo = sidecar.at("min").get<double>();
  const double hi = sidecar.at("max").get<double>();
  for (size_t i = 0; i < ramp.pixels.size(); ++i) {
    const double reconstructed = lo + (hi - lo) * rpgm.bytes[i] / 255.0;
    CHECK(std::abs(reconstructed - ramp.pixels[i]) <= (hi - lo) / 255.0);
  }
}
