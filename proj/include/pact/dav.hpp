#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "pact/core.hpp"
#include "pact/dataset.hpp"
#include "pact/io.hpp"
#include "pact/metrics.hpp"
#include "pact/neural.hpp"
#include "pact/rng.hpp"
#include "pact/system_matrix.hpp"
#include "pact/tensor.hpp"

// Unrolled reconstruction: a small trained network per iteration plus the
// exact data-consistency gradient, combined through a learnable step size.
// Stages are trained one at a time on cached outputs of the frozen earlier
// stages.

namespace pact {

template <class T = float>
struct DavModel {
  int i_max = 0;
  std::vector<ConvNet<T>> nets;   // eval mode
  std::vector<double> omegas;     // per-iteration learned step sizes
  uint64_t geometry_fingerprint = 0;

  void validate() const {
    require(i_max >= 0, ErrorKind::invalid_argument, "i_max must be >= 0");
    require(nets.size() == static_cast<size_t>(i_max) &&
                omegas.size() == static_cast<size_t>(i_max),
            ErrorKind::invalid_argument, "model must hold i_max nets and step sizes");
    for (double w : omegas)
      require(std::isfinite(w), ErrorKind::invalid_argument, "step sizes must be finite");
    for (const auto& net : nets) {
      net.validate();
      require(!net.training, ErrorKind::invalid_argument,
              "model networks must be in eval mode");
    }
  }
};

/// First iterate of the unrolled scheme.
template <class Op>
  requires LinearOperator<Op>
inline Image dav_init(const Op& A, const Sinogram& b) {
  return A.adjoint(b);
}

/// One unrolled step: network output minus the scaled data-consistency
/// gradient. The network sees only the current iterate; a zero step size
/// never touches the operator.
template <class T, class Op>
  requires LinearOperator<Op>
inline Image dav_step(const ConvNet<T>& net, double omega, const Op& A, const Image& p,
                      const Sinogram& b) {
  const Tensor4<T> x = image_to_tensor<T>(p);
  const Tensor4<T> y = cnn_forward(net, x);
  Image out = tensor_to_image(y);
  if (omega != 0.0) {
    const Image grad = data_consistency_gradient(A, p, b);
    for (size_t i = 0; i < out.pixels.size(); ++i) out.pixels[i] -= omega * grad.pixels[i];
  }
  return out;
}

/// All iterates p_1 .. p_{i_max+1}; the last entry is the reconstruction.
template <class T, class Op>
  requires LinearOperator<Op>
inline std::vector<Image> dav_iterates(const DavModel<T>& model, const Op& A,
                                       const Sinogram& b) {
  model.validate();
  require(model.geometry_fingerprint == A.fingerprint(), ErrorKind::incompatible,
          "model was trained for a different geometry");
  std::vector<Image> iterates;
  iterates.reserve(static_cast<size_t>(model.i_max) + 1);
  iterates.push_back(dav_init(A, b));
  for (int i = 0; i < model.i_max; ++i)
    iterates.push_back(
        dav_step(model.nets[static_cast<size_t>(i)], model.omegas[static_cast<size_t>(i)],
                 A, iterates.back(), b));
  return iterates;
}

template <class T, class Op>
  requires LinearOperator<Op>
inline Image dav_reconstruct(const DavModel<T>& model, const Op& A, const Sinogram& b) {
  return dav_iterates(model, A, b).back();
}

// ---------------------------------------------------------------------------
// Layer-by-layer training.

struct TrainConfig {
  int epochs = 40;  // per stage; 0 leaves the seeded initialization untouched
  double learning_rate = 4e-4;
  int batch_size = 32;
  uint64_t seed = 0;
  int i_max = 3;
  double omega_init = 1.0;
  int width = 32;
  int n_hidden = 4;
  double slope = 0.01;

  void validate() const {
    require(epochs >= 0, ErrorKind::invalid_argument, "epochs must be >= 0");
    require(learning_rate > 0.0, ErrorKind::invalid_argument,
            "learning rate must be positive");
    require(batch_size >= 2, ErrorKind::invalid_argument,
            "batch size must be >= 2 for batch normalization");
    require(i_max >= 0, ErrorKind::invalid_argument, "i_max must be >= 0");
    require(std::isfinite(omega_init), ErrorKind::invalid_argument,
            "omega_init must be finite");
  }
};

/// Cached per-sample inputs for one training stage: the current iterate and
/// its data-consistency gradient.
struct StageInputs {
  std::vector<Image> p;
  std::vector<Image> g;
};

template <class T, class Op>
  requires LinearOperator<Op>
inline StageInputs precompute_stage_inputs(const DavModel<T>& model_so_far,
                                           const std::vector<const Sinogram*>& sinograms,
                                           const Op& A) {
  StageInputs out;
  out.p.reserve(sinograms.size());
  out.g.reserve(sinograms.size());
  for (const Sinogram* b : sinograms) {
    Image p = dav_init(A, *b);
    for (size_t j = 0; j < model_so_far.nets.size(); ++j)
      p = dav_step(model_so_far.nets[j], model_so_far.omegas[j], A, p, *b);
    out.g.push_back(data_consistency_gradient(A, p, *b));
    out.p.push_back(std::move(p));
  }
  return out;
}

template <class T>
struct StageResult {
  ConvNet<T> net;  // eval mode
  double omega = 0.0;
  std::vector<double> epoch_loss;
};

namespace detail {

template <class T>
inline Tensor4<T> gather_batch(const std::vector<Image>& images,
                               const std::vector<int>& order, size_t first, size_t count) {
  const Image& head = images[static_cast<size_t>(order[first])];
  Tensor4<T> batch(static_cast<int>(count), 1, head.ny, head.nx);
  for (size_t s = 0; s < count; ++s) {
    const Image& img = images[static_cast<size_t>(order[first + s])];
    T* dst = batch.plane_ptr(static_cast<int>(s), 0);
    for (size_t i = 0; i < img.pixels.size(); ++i) dst[i] = static_cast<T>(img.pixels[i]);
  }
  return batch;
}

}  // namespace detail

/// Trains one stage: minimizes the MSE between CNN(p_i) - omega * g_i and the
/// ground truth over the training split, with the step size learned jointly
/// (its gradient is the inner product of the loss gradient with -g_i).
template <class T>
inline StageResult<T> train_dav_stage(int stage_index, const StageInputs& inputs,
                                      const std::vector<const Image*>& ground_truths,
                                      const TrainConfig& cfg) {
  cfg.validate();
  const size_t n = inputs.p.size();
  require(n > 0 && inputs.g.size() == n && ground_truths.size() == n,
          ErrorKind::invalid_argument, "stage inputs and ground truths must align");

  Rng init_rng(derive_seed(cfg.seed, 1000 + static_cast<uint64_t>(stage_index)));
  Rng order_rng(derive_seed(cfg.seed, 2000 + static_cast<uint64_t>(stage_index)));

  StageResult<T> result;
  result.net = make_convnet<T>(dav_layer_specs(cfg.width, cfg.n_hidden, cfg.slope), init_rng);
  result.net.training = true;
  std::vector<T> omega_param{static_cast<T>(cfg.omega_init)};

  auto params = trainable_parameters(result.net);
  params.push_back(&omega_param);
  AdamState<T> adam = AdamState<T>::template sized_like<std::vector<std::vector<T>*>>(params);

  std::vector<Image> gt_copies;  // contiguous access for batch gathering
  gt_copies.reserve(n);
  for (const Image* gt : ground_truths) gt_copies.push_back(*gt);

  std::vector<int> order(n);
  for (size_t i = 0; i < n; ++i) order[i] = static_cast<int>(i);

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    order_rng.shuffle(order);
    double loss_sum = 0.0;
    size_t loss_count = 0;
    for (size_t first = 0; first < n; first += static_cast<size_t>(cfg.batch_size)) {
      const size_t count = std::min(static_cast<size_t>(cfg.batch_size), n - first);
      if (count < 2) continue;  // batch normalization needs at least 2

      const Tensor4<T> x = detail::gather_batch<T>(inputs.p, order, first, count);
      const Tensor4<T> g = detail::gather_batch<T>(inputs.g, order, first, count);
      const Tensor4<T> gt = detail::gather_batch<T>(gt_copies, order, first, count);

      ForwardCache<T> cache;
      Tensor4<T> pred = cnn_forward_train(result.net, x, cache);
      const T omega = omega_param[0];
      for (size_t i = 0; i < pred.size(); ++i) pred.v[i] -= omega * g.v[i];

      auto [loss, dpred] = mse_loss(pred, gt);
      if (!std::isfinite(loss)) {
        std::ostringstream msg;
        msg << "training diverged: non-finite loss at stage " << stage_index + 1
            << ", epoch " << epoch + 1;
        fail(ErrorKind::divergence, msg.str());
      }
      loss_sum += loss * static_cast<double>(pred.size());
      loss_count += pred.size();

      double domega = 0.0;
      for (size_t i = 0; i < dpred.size(); ++i)
        domega -= static_cast<double>(dpred.v[i]) * static_cast<double>(g.v[i]);

      const CnnGradients<T> grads = cnn_backward(result.net, cache, dpred);
      auto grad_ptrs = gradient_list(grads, result.net);
      const std::vector<T> omega_grad{static_cast<T>(domega)};
      grad_ptrs.push_back(&omega_grad);
      adam_step(params, grad_ptrs, adam, cfg.learning_rate);
    }
    result.epoch_loss.push_back(loss_count > 0 ? loss_sum / static_cast<double>(loss_count)
                                               : 0.0);
  }

  result.net.training = false;
  result.omega = static_cast<double>(omega_param[0]);
  return result;
}

template <class T>
struct LayerwiseResult {
  DavModel<T> model;
  MetricReport heldout;  // one row per unrolled iteration, on the test split
  std::vector<std::vector<double>> stage_epoch_loss;
};

/// Full training loop: alternates caching of frozen-stage outputs with
/// per-stage optimization, recording held-out metrics after every stage.
template <class T, class Op>
  requires LinearOperator<Op>
inline LayerwiseResult<T> train_dav_layerwise(const Dataset& ds, const Op& A,
                                              const TrainConfig& cfg) {
  cfg.validate();
  const auto train_idx = ds.train_indices();
  const auto test_idx = ds.test_indices();
  require(!train_idx.empty(), ErrorKind::invalid_argument, "training split is empty");
  require(A.fingerprint() == geometry_fingerprint(ds.geometry), ErrorKind::incompatible,
          "operator does not match the dataset geometry");

  std::vector<const Sinogram*> train_sinos;
  std::vector<const Image*> train_gts;
  for (int i : train_idx) {
    train_sinos.push_back(&ds.samples[static_cast<size_t>(i)].sinogram);
    train_gts.push_back(&ds.samples[static_cast<size_t>(i)].phantom);
  }

  LayerwiseResult<T> out;
  out.model.i_max = cfg.i_max;
  out.model.geometry_fingerprint = A.fingerprint();

  for (int stage = 0; stage < cfg.i_max; ++stage) {
    DavModel<T> frozen = out.model;
    frozen.i_max = stage;
    frozen.nets.resize(static_cast<size_t>(stage));
    frozen.omegas.resize(static_cast<size_t>(stage));

    const StageInputs inputs = precompute_stage_inputs(frozen, train_sinos, A);
    StageResult<T> stage_result = train_dav_stage<T>(stage, inputs, train_gts, cfg);
    out.model.nets.push_back(std::move(stage_result.net));
    out.model.omegas.push_back(stage_result.omega);
    out.stage_epoch_loss.push_back(std::move(stage_result.epoch_loss));

    if (!test_idx.empty()) {
      DavModel<T> current = out.model;
      current.i_max = stage + 1;
      MetricRow row;
      row.iteration = stage + 1;
      for (int i : test_idx) {
        const auto& sample = ds.samples[static_cast<size_t>(i)];
        const Image rec = dav_reconstruct(current, A, sample.sinogram);
        double lo = sample.phantom.pixels[0], hi = sample.phantom.pixels[0];
        for (double v : sample.phantom.pixels) {
          lo = std::min(lo, v);
          hi = std::max(hi, v);
        }
        const double range = (hi > lo) ? hi - lo : 1.0;
        row.psnr_values.push_back(psnr(sample.phantom, rec, range));
        row.ssim_values.push_back(ssim(sample.phantom, rec, range));
        if (stage == 0) out.heldout.sample_ids.push_back(i);
      }
      detail::mean_std(row.psnr_values, row.psnr_mean, row.psnr_std);
      detail::mean_std(row.ssim_values, row.ssim_mean, row.ssim_std);
      out.heldout.rows.push_back(std::move(row));
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Model container file ("DAVM"): JSON header plus float32 parameter blobs in
// declared layer order. Round trips are bit-exact.

inline void save_dav_model(const std::string& path, const DavModel<float>& model) {
  model.validate();
  nlohmann::json header;
  header["i_max"] = model.i_max;
  header["omegas"] = model.omegas;
  char fp[32];
  std::snprintf(fp, sizeof fp, "%016llx",
                static_cast<unsigned long long>(model.geometry_fingerprint));
  header["geometry_fingerprint"] = fp;
  header["dtype"] = "f32";
  nlohmann::json nets = nlohmann::json::array();
  for (const auto& net : model.nets) {
    nlohmann::json jnet;
    jnet["bn_momentum"] = net.bn_momentum;
    jnet["bn_eps"] = net.bn_eps;
    nlohmann::json layers = nlohmann::json::array();
    for (const auto& layer : net.layers) {
      nlohmann::json jl;
      jl["in_channels"] = layer.spec.in_channels;
      jl["out_channels"] = layer.spec.out_channels;
      jl["kernel_size"] = layer.spec.kernel_size;
      jl["has_batchnorm"] = layer.spec.has_batchnorm;
      jl["has_activation"] = layer.spec.has_activation;
      jl["activation_slope"] = layer.spec.activation_slope;
      layers.push_back(std::move(jl));
    }
    jnet["layers"] = std::move(layers);
    nets.push_back(std::move(jnet));
  }
  header["nets"] = std::move(nets);
  const std::string header_str = header.dump();

  auto os = io::open_out(path);
  io::write_magic(os, "DAVM");
  io::write_u32(os, 1);
  io::write_u32(os, static_cast<uint32_t>(header_str.size()));
  os.write(header_str.data(), static_cast<std::streamsize>(header_str.size()));
  for (const auto& net : model.nets) {
    for (const auto& layer : net.layers) {
      io::write_array(os, layer.weight);
      io::write_array(os, layer.bias);
      if (layer.spec.has_batchnorm) {
        io::write_array(os, layer.gamma);
        io::write_array(os, layer.beta);
        io::write_array(os, layer.running_mean);
        io::write_array(os, layer.running_var);
      }
    }
  }
  if (!os) fail(ErrorKind::io, "write failed: " + path);
}

inline DavModel<float> load_dav_model(const std::string& path) {
  auto is = io::open_in(path);
  io::check_magic(is, "DAVM", "model");
  const uint32_t version = io::read_u32(is, "model version");
  if (version != 1) fail(ErrorKind::format, "unsupported model file version");
  const uint32_t header_len = io::read_u32(is, "model header length");
  std::string header_str(header_len, '\0');
  is.read(header_str.data(), header_len);
  if (!is) fail(ErrorKind::io, "truncated model header");

  DavModel<float> model;
  try {
    const auto header = nlohmann::json::parse(header_str);
    model.i_max = header.at("i_max").get<int>();
    model.omegas = header.at("omegas").get<std::vector<double>>();
    model.geometry_fingerprint = std::stoull(
        header.at("geometry_fingerprint").get<std::string>(), nullptr, 16);
    if (header.at("dtype").get<std::string>() != "f32")
      fail(ErrorKind::format, "unsupported model dtype");
    for (const auto& jnet : header.at("nets")) {
      ConvNet<float> net;
      net.bn_momentum = jnet.at("bn_momentum").get<double>();
      net.bn_eps = jnet.at("bn_eps").get<double>();
      for (const auto& jl : jnet.at("layers")) {
        ConvLayer<float> layer;
        layer.spec.in_channels = jl.at("in_channels").get<int>();
        layer.spec.out_channels = jl.at("out_channels").get<int>();
        layer.spec.kernel_size = jl.at("kernel_size").get<int>();
        layer.spec.has_batchnorm = jl.at("has_batchnorm").get<bool>();
        layer.spec.has_activation = jl.at("has_activation").get<bool>();
        layer.spec.activation_slope = jl.at("activation_slope").get<double>();
        net.layers.push_back(std::move(layer));
      }
      model.nets.push_back(std::move(net));
    }
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::format, std::string("bad model header: ") + e.what());
  }

  for (auto& net : model.nets) {
    for (auto& layer : net.layers) {
      io::read_array(is, layer.weight, layer.weight_count(), "model weights");
      io::read_array(is, layer.bias, static_cast<size_t>(layer.spec.out_channels),
                     "model biases");
      if (layer.spec.has_batchnorm) {
        const size_t C = static_cast<size_t>(layer.spec.out_channels);
        io::read_array(is, layer.gamma, C, "model batchnorm scale");
        io::read_array(is, layer.beta, C, "model batchnorm shift");
        io::read_array(is, layer.running_mean, C, "model running mean");
        io::read_array(is, layer.running_var, C, "model running variance");
      }
    }
    net.training = false;
  }
  model.validate();
  return model;
}

}  // namespace pact
