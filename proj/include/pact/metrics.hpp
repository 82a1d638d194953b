#pragma once

#include <cmath>
#include <fstream>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "pact/core.hpp"

namespace pact {

/// Peak signal-to-noise ratio in dB. Identical images return +infinity.
inline double psnr(const Image& reference, const Image& test, double data_range) {
  require(reference.same_shape(test), ErrorKind::shape_mismatch, "psnr shape mismatch");
  require(data_range > 0.0, ErrorKind::invalid_argument, "psnr data_range must be positive");
  double mse = 0.0;
  for (size_t i = 0; i < reference.pixels.size(); ++i) {
    const double d = reference.pixels[i] - test.pixels[i];
    mse += d * d;
  }
  mse /= static_cast<double>(reference.pixels.size());
  if (mse == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(data_range * data_range / mse);
}

namespace detail {

inline std::vector<double> gaussian_kernel(int size, double sigma) {
  std::vector<double> k(static_cast<size_t>(size));
  const int half = size / 2;
  double sum = 0.0;
  for (int i = 0; i < size; ++i) {
    const double x = i - half;
    k[static_cast<size_t>(i)] = std::exp(-(x * x) / (2.0 * sigma * sigma));
    sum += k[static_cast<size_t>(i)];
  }
  for (auto& v : k) v /= sum;
  return k;
}

// symmetric (reflect-including-edge) index: ..., 1, 0 | 0, 1, ..., n-1 | n-1, ...
inline int reflect_index(int i, int n) {
  if (i < 0) return -1 - i;
  if (i >= n) return 2 * n - 1 - i;
  return i;
}

inline Image gaussian_blur(const Image& img, const std::vector<double>& kernel) {
  const int half = static_cast<int>(kernel.size()) / 2;
  Image tmp(img.ny, img.nx, 0.0);
  for (int i = 0; i < img.ny; ++i) {
    for (int j = 0; j < img.nx; ++j) {
      double acc = 0.0;
      for (int t = -half; t <= half; ++t)
        acc += kernel[static_cast<size_t>(t + half)] *
               img.at(i, reflect_index(j + t, img.nx));
      tmp.at(i, j) = acc;
    }
  }
  Image out(img.ny, img.nx, 0.0);
  for (int i = 0; i < img.ny; ++i) {
    for (int j = 0; j < img.nx; ++j) {
      double acc = 0.0;
      for (int t = -half; t <= half; ++t)
        acc += kernel[static_cast<size_t>(t + half)] *
               tmp.at(reflect_index(i + t, img.ny), j);
      out.at(i, j) = acc;
    }
  }
  return out;
}

}  // namespace detail

/// Mean local structural similarity, 11x11 Gaussian window (sigma 1.5),
/// K1 = 0.01, K2 = 0.03, symmetric boundary handling.
inline double ssim(const Image& reference, const Image& test, double data_range) {
  require(reference.same_shape(test), ErrorKind::shape_mismatch, "ssim shape mismatch");
  require(data_range > 0.0, ErrorKind::invalid_argument, "ssim data_range must be positive");
  constexpr int window = 11;
  require(reference.ny >= window && reference.nx >= window, ErrorKind::invalid_argument,
          "ssim needs images at least 11x11");

  const auto kernel = detail::gaussian_kernel(window, 1.5);
  const double c1 = (0.01 * data_range) * (0.01 * data_range);
  const double c2 = (0.03 * data_range) * (0.03 * data_range);

  Image xx(reference.ny, reference.nx), yy(reference.ny, reference.nx),
      xy(reference.ny, reference.nx);
  for (size_t i = 0; i < reference.pixels.size(); ++i) {
    xx.pixels[i] = reference.pixels[i] * reference.pixels[i];
    yy.pixels[i] = test.pixels[i] * test.pixels[i];
    xy.pixels[i] = reference.pixels[i] * test.pixels[i];
  }
  const Image mu_x = detail::gaussian_blur(reference, kernel);
  const Image mu_y = detail::gaussian_blur(test, kernel);
  const Image m_xx = detail::gaussian_blur(xx, kernel);
  const Image m_yy = detail::gaussian_blur(yy, kernel);
  const Image m_xy = detail::gaussian_blur(xy, kernel);

  double total = 0.0;
  for (size_t i = 0; i < reference.pixels.size(); ++i) {
    const double mx = mu_x.pixels[i];
    const double my = mu_y.pixels[i];
    const double vx = m_xx.pixels[i] - mx * mx;
    const double vy = m_yy.pixels[i] - my * my;
    const double cov = m_xy.pixels[i] - mx * my;
    const double num = (2.0 * mx * my + c1) * (2.0 * cov + c2);
    const double den = (mx * mx + my * my + c1) * (vx + vy + c2);
    total += num / den;
  }
  return total / static_cast<double>(reference.pixels.size());
}

// ---------------------------------------------------------------------------
// Evaluation tables: per-sample metrics, mean and population std, optionally
// one row per iterate for unrolled methods.

struct MetricRow {
  int iteration = 1;
  std::vector<double> psnr_values;
  std::vector<double> ssim_values;
  double psnr_mean = 0.0, psnr_std = 0.0;
  double ssim_mean = 0.0, ssim_std = 0.0;
};

struct MetricReport {
  std::vector<int> sample_ids;
  std::vector<MetricRow> rows;
};

namespace detail {
inline void mean_std(const std::vector<double>& v, double& mean, double& std_out) {
  mean = 0.0;
  for (double x : v) mean += x;
  mean /= static_cast<double>(v.size());
  double acc = 0.0;
  for (double x : v) acc += (x - mean) * (x - mean);
  std_out = std::sqrt(acc / static_cast<double>(v.size()));
}
}  // namespace detail

/// A reconstructor maps channel data to one image per reported iteration
/// (single-shot methods return one).
using Reconstructor = std::function<std::vector<Image>(const Sinogram&)>;

template <class SamplePairs>
inline MetricReport evaluate_method(const SamplePairs& test_samples,
                                    const Reconstructor& reconstruct) {
  MetricReport report;
  require(!test_samples.empty(), ErrorKind::invalid_argument,
          "evaluation needs a non-empty test split");
  int sample_id = 0;
  for (const auto& [gt, sino] : test_samples) {
    const std::vector<Image> iterates = reconstruct(sino);
    require(!iterates.empty(), ErrorKind::invalid_argument,
            "reconstructor returned no images");
    if (report.rows.empty()) {
      report.rows.resize(iterates.size());
      for (size_t k = 0; k < iterates.size(); ++k)
        report.rows[k].iteration = static_cast<int>(k) + 1;
    }
    require(report.rows.size() == iterates.size(), ErrorKind::shape_mismatch,
            "reconstructor returned inconsistent iterate counts");
    double lo = gt.pixels[0], hi = gt.pixels[0];
    for (double v : gt.pixels) {
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
    const double data_range = (hi > lo) ? hi - lo : 1.0;
    for (size_t k = 0; k < iterates.size(); ++k) {
      report.rows[k].psnr_values.push_back(psnr(gt, iterates[k], data_range));
      report.rows[k].ssim_values.push_back(ssim(gt, iterates[k], data_range));
    }
    report.sample_ids.push_back(sample_id++);
  }
  for (auto& row : report.rows) {
    detail::mean_std(row.psnr_values, row.psnr_mean, row.psnr_std);
    detail::mean_std(row.ssim_values, row.ssim_mean, row.ssim_std);
  }
  return report;
}

inline void write_metric_csv(const std::string& path, const MetricReport& report,
                             const std::string& method) {
  std::ofstream os(path);
  if (!os) fail(ErrorKind::io, "cannot open for writing: " + path);
  os.precision(17);
  os << "sample_id,method,iteration,psnr_db,ssim\n";
  for (const auto& row : report.rows)
    for (size_t s = 0; s < row.psnr_values.size(); ++s)
      os << report.sample_ids[s] << "," << method << "," << row.iteration << ","
         << row.psnr_values[s] << "," << row.ssim_values[s] << "\n";
}

inline void write_summary_csv(const std::string& path, const MetricReport& report,
                              const std::string& method) {
  std::ofstream os(path);
  if (!os) fail(ErrorKind::io, "cannot open for writing: " + path);
  os.precision(17);
  os << "method,iteration,psnr_mean,psnr_std,ssim_mean,ssim_std\n";
  for (const auto& row : report.rows)
    os << method << "," << row.iteration << "," << row.psnr_mean << "," << row.psnr_std
       << "," << row.ssim_mean << "," << row.ssim_std << "\n";
}

}  // namespace pact
