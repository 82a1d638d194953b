#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "pact/core.hpp"
#include "pact/rng.hpp"
#include "pact/tensor.hpp"

// Self-contained convolutional network: explicit forward and backward passes
// for same-padded convolutions, batch normalization and leaky ReLU, plus an
// Adam optimizer. Templated on the scalar type; float is the training
// configuration, double backs the finite-difference test suites.

namespace pact {

// ---------------------------------------------------------------------------
// Convolution, stride 1, zero "same" padding.

template <class T>
inline Tensor4<T> conv2d_forward(const Tensor4<T>& in, const std::vector<T>& weight,
                                 const std::vector<T>& bias, int kernel, int out_channels) {
  require(kernel >= 1 && kernel % 2 == 1, ErrorKind::invalid_argument,
          "conv kernel must be odd");
  require(weight.size() == static_cast<size_t>(out_channels) * in.c * kernel * kernel,
          ErrorKind::shape_mismatch, "conv weight shape mismatch");
  require(bias.size() == static_cast<size_t>(out_channels), ErrorKind::shape_mismatch,
          "conv bias shape mismatch");
  const int pad = kernel / 2;
  const int H = in.h, W = in.w;
  Tensor4<T> out(in.n, out_channels, H, W);
#pragma omp parallel for collapse(2) schedule(static)
  for (int s = 0; s < in.n; ++s) {
    for (int oc = 0; oc < out_channels; ++oc) {
      T* op = out.plane_ptr(s, oc);
      std::fill(op, op + out.plane(), bias[oc]);
      for (int ic = 0; ic < in.c; ++ic) {
        const T* ip = in.plane_ptr(s, ic);
        const T* wbase =
            weight.data() + (static_cast<size_t>(oc) * in.c + ic) * kernel * kernel;
        for (int ky = 0; ky < kernel; ++ky) {
          const int dy = ky - pad;
          const int y0 = std::max(0, -dy);
          const int y1 = H - std::max(0, dy);
          for (int kx = 0; kx < kernel; ++kx) {
            const int dx = kx - pad;
            const int x0 = std::max(0, -dx);
            const int x1 = W - std::max(0, dx);
            const T wv = wbase[ky * kernel + kx];
            for (int y = y0; y < y1; ++y) {
              const T* src = ip + static_cast<size_t>(y + dy) * W + dx;
              T* dst = op + static_cast<size_t>(y) * W;
              for (int x = x0; x < x1; ++x) dst[x] += wv * src[x];
            }
          }
        }
      }
    }
  }
  return out;
}

template <class T>
struct ConvGrads {
  Tensor4<T> input_grad;
  std::vector<T> weight_grad;
  std::vector<T> bias_grad;
};

template <class T>
inline ConvGrads<T> conv2d_backward(const Tensor4<T>& upstream, const Tensor4<T>& input,
                                    const std::vector<T>& weight, int kernel,
                                    int out_channels) {
  require(upstream.n == input.n && upstream.h == input.h && upstream.w == input.w &&
              upstream.c == out_channels,
          ErrorKind::shape_mismatch, "conv backward shape mismatch");
  const int pad = kernel / 2;
  const int H = input.h, W = input.w;
  ConvGrads<T> g;
  g.input_grad = Tensor4<T>(input.n, input.c, H, W);
  g.weight_grad.assign(weight.size(), T(0));
  g.bias_grad.assign(static_cast<size_t>(out_channels), T(0));

#pragma omp parallel for collapse(2) schedule(static)
  for (int s = 0; s < input.n; ++s) {
    for (int ic = 0; ic < input.c; ++ic) {
      T* gp = g.input_grad.plane_ptr(s, ic);
      for (int oc = 0; oc < out_channels; ++oc) {
        const T* up = upstream.plane_ptr(s, oc);
        const T* wbase =
            weight.data() + (static_cast<size_t>(oc) * input.c + ic) * kernel * kernel;
        for (int ky = 0; ky < kernel; ++ky) {
          const int dy = ky - pad;
          const int y0 = std::max(0, -dy);
          const int y1 = H - std::max(0, dy);
          for (int kx = 0; kx < kernel; ++kx) {
            const int dx = kx - pad;
            const int x0 = std::max(0, -dx);
            const int x1 = W - std::max(0, dx);
            const T wv = wbase[ky * kernel + kx];
            for (int y = y0; y < y1; ++y) {
              T* dst = gp + static_cast<size_t>(y + dy) * W + dx;
              const T* src = up + static_cast<size_t>(y) * W;
              for (int x = x0; x < x1; ++x) dst[x] += wv * src[x];
            }
          }
        }
      }
    }
  }

  // Weight gradients reduce over batch and space; four explicit accumulators
  // keep the combine order fixed while letting the inner loop vectorize.
#pragma omp parallel for collapse(2) schedule(static)
  for (int oc = 0; oc < out_channels; ++oc) {
    for (int ic = 0; ic < input.c; ++ic) {
      T* wg = g.weight_grad.data() +
              (static_cast<size_t>(oc) * input.c + ic) * kernel * kernel;
      for (int ky = 0; ky < kernel; ++ky) {
        const int dy = ky - pad;
        const int y0 = std::max(0, -dy);
        const int y1 = H - std::max(0, dy);
        for (int kx = 0; kx < kernel; ++kx) {
          const int dx = kx - pad;
          const int x0 = std::max(0, -dx);
          const int x1 = W - std::max(0, dx);
          T a0 = 0, a1 = 0, a2 = 0, a3 = 0;
          for (int s = 0; s < input.n; ++s) {
            const T* up = upstream.plane_ptr(s, oc);
            const T* ip = input.plane_ptr(s, ic);
            for (int y = y0; y < y1; ++y) {
              const T* u = up + static_cast<size_t>(y) * W;
              const T* b = ip + static_cast<size_t>(y + dy) * W + dx;
              int x = x0;
              for (; x + 4 <= x1; x += 4) {
                a0 += u[x] * b[x];
                a1 += u[x + 1] * b[x + 1];
                a2 += u[x + 2] * b[x + 2];
                a3 += u[x + 3] * b[x + 3];
              }
              for (; x < x1; ++x) a0 += u[x] * b[x];
            }
          }
          wg[ky * kernel + kx] = ((a0 + a1) + (a2 + a3));
        }
      }
    }
  }

#pragma omp parallel for schedule(static)
  for (int oc = 0; oc < out_channels; ++oc) {
    T acc = 0;
    for (int s = 0; s < input.n; ++s) {
      const T* up = upstream.plane_ptr(s, oc);
      for (size_t i = 0; i < upstream.plane(); ++i) acc += up[i];
    }
    g.bias_grad[oc] = acc;
  }
  return g;
}

// ---------------------------------------------------------------------------
// Batch normalization over (batch, H, W) per channel.

template <class T>
struct BatchNormCache {
  std::vector<T> mean, istd;  // statistics used for normalization
  Tensor4<T> xhat;
  bool training = false;
};

/// Train mode normalizes with batch statistics (biased variance) and updates
/// the running estimates with the given momentum; eval mode normalizes with
/// the running estimates. Both apply the gamma/beta affine.
template <class T>
inline Tensor4<T> batchnorm_forward(const Tensor4<T>& in, const std::vector<T>& gamma,
                                    const std::vector<T>& beta,
                                    std::vector<T>& running_mean,
                                    std::vector<T>& running_var, bool training,
                                    double momentum, double eps,
                                    BatchNormCache<T>* cache = nullptr) {
  const size_t C = static_cast<size_t>(in.c);
  require(gamma.size() == C && beta.size() == C && running_mean.size() == C &&
              running_var.size() == C,
          ErrorKind::shape_mismatch, "batchnorm parameter shape mismatch");
  require(!training || in.n >= 2, ErrorKind::invalid_argument,
          "batchnorm training requires batch size >= 2");

  Tensor4<T> out(in.n, in.c, in.h, in.w);
  std::vector<T> mean(C), istd(C);
  const size_t plane = in.plane();
  const T m = static_cast<T>(static_cast<double>(in.n) * plane);

#pragma omp parallel for schedule(static)
  for (int c = 0; c < in.c; ++c) {
    if (training) {
      T sum = 0;
      for (int s = 0; s < in.n; ++s) {
        const T* p = in.plane_ptr(s, c);
        for (size_t i = 0; i < plane; ++i) sum += p[i];
      }
      const T mu = sum / m;
      T acc = 0;
      for (int s = 0; s < in.n; ++s) {
        const T* p = in.plane_ptr(s, c);
        for (size_t i = 0; i < plane; ++i) {
          const T d = p[i] - mu;
          acc += d * d;
        }
      }
      const T var = acc / m;
      mean[c] = mu;
      istd[c] = T(1) / std::sqrt(var + static_cast<T>(eps));
      running_mean[c] =
          static_cast<T>((1.0 - momentum) * running_mean[c] + momentum * mu);
      running_var[c] =
          static_cast<T>((1.0 - momentum) * running_var[c] + momentum * var);
    } else {
      mean[c] = running_mean[c];
      istd[c] = T(1) / std::sqrt(running_var[c] + static_cast<T>(eps));
    }
    const T mu = mean[c];
    const T is = istd[c];
    const T ga = gamma[c];
    const T be = beta[c];
    for (int s = 0; s < in.n; ++s) {
      const T* p = in.plane_ptr(s, c);
      T* o = out.plane_ptr(s, c);
      for (size_t i = 0; i < plane; ++i) o[i] = ga * ((p[i] - mu) * is) + be;
    }
  }

  if (cache) {
    cache->training = training;
    cache->mean = mean;
    cache->istd = istd;
    cache->xhat = Tensor4<T>(in.n, in.c, in.h, in.w);
#pragma omp parallel for schedule(static)
    for (int c = 0; c < in.c; ++c) {
      const T mu = mean[c];
      const T is = istd[c];
      for (int s = 0; s < in.n; ++s) {
        const T* p = in.plane_ptr(s, c);
        T* xh = cache->xhat.plane_ptr(s, c);
        for (size_t i = 0; i < plane; ++i) xh[i] = (p[i] - mu) * is;
      }
    }
  }
  return out;
}

template <class T>
struct BatchNormGrads {
  Tensor4<T> input_grad;
  std::vector<T> gamma_grad;
  std::vector<T> beta_grad;
};

template <class T>
inline BatchNormGrads<T> batchnorm_backward(const Tensor4<T>& upstream,
                                            const BatchNormCache<T>& cache,
                                            const std::vector<T>& gamma) {
  const int C = upstream.c;
  BatchNormGrads<T> g;
  g.input_grad = Tensor4<T>(upstream.n, upstream.c, upstream.h, upstream.w);
  g.gamma_grad.assign(static_cast<size_t>(C), T(0));
  g.beta_grad.assign(static_cast<size_t>(C), T(0));
  const size_t plane = upstream.plane();
  const T m = static_cast<T>(static_cast<double>(upstream.n) * plane);

#pragma omp parallel for schedule(static)
  for (int c = 0; c < C; ++c) {
    T sum_up = 0, sum_up_xhat = 0;
    for (int s = 0; s < upstream.n; ++s) {
      const T* u = upstream.plane_ptr(s, c);
      const T* xh = cache.xhat.plane_ptr(s, c);
      for (size_t i = 0; i < plane; ++i) {
        sum_up += u[i];
        sum_up_xhat += u[i] * xh[i];
      }
    }
    g.beta_grad[c] = sum_up;
    g.gamma_grad[c] = sum_up_xhat;

    const T ga = gamma[c];
    const T is = cache.istd[c];
    if (cache.training) {
      const T k = ga * is / m;
      for (int s = 0; s < upstream.n; ++s) {
        const T* u = upstream.plane_ptr(s, c);
        const T* xh = cache.xhat.plane_ptr(s, c);
        T* gi = g.input_grad.plane_ptr(s, c);
        for (size_t i = 0; i < plane; ++i)
          gi[i] = k * (m * u[i] - sum_up - xh[i] * sum_up_xhat);
      }
    } else {
      const T k = ga * is;
      for (int s = 0; s < upstream.n; ++s) {
        const T* u = upstream.plane_ptr(s, c);
        T* gi = g.input_grad.plane_ptr(s, c);
        for (size_t i = 0; i < plane; ++i) gi[i] = k * u[i];
      }
    }
  }
  return g;
}

// ---------------------------------------------------------------------------
// Leaky ReLU. The subgradient at exactly zero is taken as 1.

template <class T>
inline Tensor4<T> leaky_relu_forward(const Tensor4<T>& in, double slope) {
  require(slope > 0.0 && slope < 1.0, ErrorKind::invalid_argument,
          "leaky relu slope must be in (0, 1)");
  Tensor4<T> out(in.n, in.c, in.h, in.w);
  const T s = static_cast<T>(slope);
#pragma omp parallel for schedule(static)
  for (int64_t i = 0; i < static_cast<int64_t>(in.size()); ++i) {
    const T x = in.v[static_cast<size_t>(i)];
    out.v[static_cast<size_t>(i)] = x >= T(0) ? x : s * x;
  }
  return out;
}

template <class T>
inline Tensor4<T> leaky_relu_backward(const Tensor4<T>& upstream, const Tensor4<T>& pre_act,
                                      double slope) {
  require(upstream.same_shape(pre_act), ErrorKind::shape_mismatch,
          "leaky relu backward shape mismatch");
  Tensor4<T> grad(upstream.n, upstream.c, upstream.h, upstream.w);
  const T s = static_cast<T>(slope);
#pragma omp parallel for schedule(static)
  for (int64_t i = 0; i < static_cast<int64_t>(upstream.size()); ++i) {
    const size_t k = static_cast<size_t>(i);
    grad.v[k] = pre_act.v[k] >= T(0) ? upstream.v[k] : s * upstream.v[k];
  }
  return grad;
}

// ---------------------------------------------------------------------------
// Mean squared error over all elements.

template <class T>
inline std::pair<double, Tensor4<T>> mse_loss(const Tensor4<T>& pred,
                                              const Tensor4<T>& target) {
  require(pred.same_shape(target), ErrorKind::shape_mismatch, "mse shape mismatch");
  const double n = static_cast<double>(pred.size());
  double loss = 0.0;
  Tensor4<T> grad(pred.n, pred.c, pred.h, pred.w);
  const T scale = static_cast<T>(2.0 / n);
  for (size_t i = 0; i < pred.size(); ++i) {
    const double d = static_cast<double>(pred.v[i]) - static_cast<double>(target.v[i]);
    loss += d * d;
    grad.v[i] = scale * (pred.v[i] - target.v[i]);
  }
  return {loss / n, std::move(grad)};
}

// ---------------------------------------------------------------------------
// Network of conv blocks.

struct ConvLayerSpec {
  int in_channels = 1;
  int out_channels = 1;
  int kernel_size = 3;  // 1 or 3
  bool has_batchnorm = true;
  bool has_activation = true;
  double activation_slope = 0.01;
};

template <class T>
struct ConvLayer {
  ConvLayerSpec spec;
  std::vector<T> weight;  // out x in x k x k
  std::vector<T> bias;    // out
  std::vector<T> gamma, beta, running_mean, running_var;  // per channel, BN only

  size_t weight_count() const {
    return static_cast<size_t>(spec.out_channels) * spec.in_channels *
           spec.kernel_size * spec.kernel_size;
  }
};

template <class T>
struct ConvNet {
  std::vector<ConvLayer<T>> layers;
  bool training = false;
  double bn_momentum = 0.1;
  double bn_eps = 1e-5;

  /// Structural invariants for image-to-image use: single channel in and
  /// out, bare 1x1 head, supported kernel sizes, chained channel counts.
  void validate() const {
    require(!layers.empty(), ErrorKind::invalid_argument, "network has no layers");
    require(layers.front().spec.in_channels == 1, ErrorKind::invalid_argument,
            "first layer must take 1 channel");
    const auto& last = layers.back().spec;
    require(last.out_channels == 1 && last.kernel_size == 1 && !last.has_batchnorm &&
                !last.has_activation,
            ErrorKind::invalid_argument,
            "last layer must be a bare 1x1 convolution to 1 channel");
    for (size_t i = 0; i < layers.size(); ++i) {
      const auto& s = layers[i].spec;
      require(s.kernel_size == 1 || s.kernel_size == 3, ErrorKind::invalid_argument,
              "kernel size must be 1 or 3");
      if (i > 0)
        require(s.in_channels == layers[i - 1].spec.out_channels,
                ErrorKind::invalid_argument, "channel counts must chain");
    }
  }
};

/// The default image prior network: 3x3 conv blocks with batch norm and
/// leaky ReLU, closed by a bare 1x1 projection.
inline std::vector<ConvLayerSpec> dav_layer_specs(int width = 32, int n_hidden = 4,
                                                  double slope = 0.01) {
  require(width >= 1 && n_hidden >= 1, ErrorKind::invalid_argument,
          "network width and depth must be positive");
  std::vector<ConvLayerSpec> specs;
  for (int i = 0; i < n_hidden; ++i) {
    ConvLayerSpec s;
    s.in_channels = (i == 0) ? 1 : width;
    s.out_channels = width;
    s.kernel_size = 3;
    s.has_batchnorm = true;
    s.has_activation = true;
    s.activation_slope = slope;
    specs.push_back(s);
  }
  ConvLayerSpec head;
  head.in_channels = width;
  head.out_channels = 1;
  head.kernel_size = 1;
  head.has_batchnorm = false;
  head.has_activation = false;
  head.activation_slope = slope;
  specs.push_back(head);
  return specs;
}

/// Fan-in-scaled uniform init for conv weights and biases; identity init for
/// batch norm. Draw order is fixed so a seed pins every parameter.
template <class T>
inline ConvNet<T> make_convnet(const std::vector<ConvLayerSpec>& specs, Rng& rng) {
  ConvNet<T> net;
  for (const auto& spec : specs) {
    ConvLayer<T> layer;
    layer.spec = spec;
    const int fan_in = spec.in_channels * spec.kernel_size * spec.kernel_size;
    const double bound = std::sqrt(1.0 / fan_in);
    layer.weight.resize(layer.weight_count());
    for (auto& w : layer.weight) w = static_cast<T>(rng.uniform(-bound, bound));
    layer.bias.resize(static_cast<size_t>(spec.out_channels));
    for (auto& b : layer.bias) b = static_cast<T>(rng.uniform(-bound, bound));
    if (spec.has_batchnorm) {
      const size_t C = static_cast<size_t>(spec.out_channels);
      layer.gamma.assign(C, T(1));
      layer.beta.assign(C, T(0));
      layer.running_mean.assign(C, T(0));
      layer.running_var.assign(C, T(1));
    }
    net.layers.push_back(std::move(layer));
  }
  net.validate();
  return net;
}

template <class T>
struct LayerCache {
  Tensor4<T> input;
  Tensor4<T> conv_out;  // stored only when the layer has no batch norm
  BatchNormCache<T> bn;
};

template <class T>
struct ForwardCache {
  std::vector<LayerCache<T>> layers;
};

namespace detail {

template <class T>
inline Tensor4<T> cnn_forward_impl(ConvNet<T>& net, const Tensor4<T>& input,
                                   ForwardCache<T>* cache, bool training) {
  net.validate();
  require(input.c == 1, ErrorKind::shape_mismatch, "network input must be 1-channel");
  if (cache) {
    cache->layers.clear();
    cache->layers.resize(net.layers.size());
  }
  Tensor4<T> x = input;
  for (size_t li = 0; li < net.layers.size(); ++li) {
    auto& layer = net.layers[li];
    const auto& spec = layer.spec;
    LayerCache<T>* lc = cache ? &cache->layers[li] : nullptr;
    if (lc) lc->input = x;

    Tensor4<T> y = conv2d_forward(x, layer.weight, layer.bias, spec.kernel_size,
                                  spec.out_channels);
    if (spec.has_batchnorm) {
      Tensor4<T> z = batchnorm_forward(y, layer.gamma, layer.beta, layer.running_mean,
                                       layer.running_var, training, net.bn_momentum,
                                       net.bn_eps, lc ? &lc->bn : nullptr);
      x = std::move(z);
    } else {
      if (lc) lc->conv_out = y;
      x = std::move(y);
    }
    if (spec.has_activation) x = leaky_relu_forward(x, spec.activation_slope);
  }
  return x;
}

}  // namespace detail

/// Inference pass; the net must be in eval mode (running statistics are read,
/// never written). Pass a cache to enable a later backward call.
template <class T>
inline Tensor4<T> cnn_forward(const ConvNet<T>& net, const Tensor4<T>& input,
                              ForwardCache<T>* cache = nullptr) {
  require(!net.training, ErrorKind::invalid_argument,
          "cnn_forward requires eval mode; use cnn_forward_train for training");
  return detail::cnn_forward_impl(const_cast<ConvNet<T>&>(net), input, cache, false);
}

/// Training pass: batch-statistics normalization plus running-stat updates.
template <class T>
inline Tensor4<T> cnn_forward_train(ConvNet<T>& net, const Tensor4<T>& input,
                                    ForwardCache<T>& cache) {
  require(net.training, ErrorKind::invalid_argument,
          "cnn_forward_train requires train mode");
  return detail::cnn_forward_impl(net, input, &cache, true);
}

template <class T>
struct LayerGrads {
  std::vector<T> weight, bias, gamma, beta;
};

template <class T>
struct CnnGradients {
  Tensor4<T> input_grad;
  std::vector<LayerGrads<T>> layers;
};

template <class T>
inline CnnGradients<T> cnn_backward(const ConvNet<T>& net, const ForwardCache<T>& cache,
                                    const Tensor4<T>& upstream) {
  require(cache.layers.size() == net.layers.size(), ErrorKind::invalid_argument,
          "forward cache does not match network");
  CnnGradients<T> grads;
  grads.layers.resize(net.layers.size());
  Tensor4<T> up = upstream;
  for (size_t li = net.layers.size(); li-- > 0;) {
    const auto& layer = net.layers[li];
    const auto& spec = layer.spec;
    const auto& lc = cache.layers[li];
    auto& lg = grads.layers[li];

    if (spec.has_activation) {
      // pre-activation values reconstructed from the cached normalized
      // output (or taken directly when there is no batch norm)
      if (spec.has_batchnorm) {
        Tensor4<T> pre(up.n, up.c, up.h, up.w);
        const size_t plane = pre.plane();
        for (int c = 0; c < pre.c; ++c) {
          const T ga = layer.gamma[c];
          const T be = layer.beta[c];
          for (int s = 0; s < pre.n; ++s) {
            const T* xh = lc.bn.xhat.plane_ptr(s, c);
            T* o = pre.plane_ptr(s, c);
            for (size_t i = 0; i < plane; ++i) o[i] = ga * xh[i] + be;
          }
        }
        up = leaky_relu_backward(up, pre, spec.activation_slope);
      } else {
        up = leaky_relu_backward(up, lc.conv_out, spec.activation_slope);
      }
    }

    if (spec.has_batchnorm) {
      BatchNormGrads<T> bg = batchnorm_backward(up, lc.bn, layer.gamma);
      lg.gamma = std::move(bg.gamma_grad);
      lg.beta = std::move(bg.beta_grad);
      up = std::move(bg.input_grad);
    }

    ConvGrads<T> cg =
        conv2d_backward(up, lc.input, layer.weight, spec.kernel_size, spec.out_channels);
    lg.weight = std::move(cg.weight_grad);
    lg.bias = std::move(cg.bias_grad);
    up = std::move(cg.input_grad);
  }
  grads.input_grad = std::move(up);
  return grads;
}

// ---------------------------------------------------------------------------
// Adam with bias correction.

template <class T>
struct AdamState {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  int64_t t = 0;
  std::vector<std::vector<T>> m, v;

  template <class PtrList>
  static AdamState sized_like(const PtrList& params) {
    AdamState st;
    for (const auto* p : params) {
      st.m.emplace_back(p->size(), T(0));
      st.v.emplace_back(p->size(), T(0));
    }
    return st;
  }
};

/// One optimizer step over a flat list of parameter tensors. A non-finite
/// gradient rejects the whole update.
template <class T>
inline void adam_step(const std::vector<std::vector<T>*>& params,
                      const std::vector<const std::vector<T>*>& grads, AdamState<T>& state,
                      double lr) {
  require(params.size() == grads.size() && params.size() == state.m.size(),
          ErrorKind::shape_mismatch, "adam: parameter/gradient list mismatch");
  for (size_t i = 0; i < params.size(); ++i) {
    require(params[i]->size() == grads[i]->size(), ErrorKind::shape_mismatch,
            "adam: gradient tensor shape mismatch");
    for (T gv : *grads[i])
      if (!std::isfinite(static_cast<double>(gv)))
        fail(ErrorKind::divergence, "adam: non-finite gradient, update rejected");
  }
  state.t += 1;
  const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.t));
  const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.t));
  for (size_t i = 0; i < params.size(); ++i) {
    auto& p = *params[i];
    const auto& g = *grads[i];
    auto& m = state.m[i];
    auto& v = state.v[i];
    const T b1 = static_cast<T>(state.beta1);
    const T b2 = static_cast<T>(state.beta2);
    for (size_t j = 0; j < p.size(); ++j) {
      m[j] = b1 * m[j] + (T(1) - b1) * g[j];
      v[j] = b2 * v[j] + (T(1) - b2) * g[j] * g[j];
      const double mhat = static_cast<double>(m[j]) / bc1;
      const double vhat = static_cast<double>(v[j]) / bc2;
      p[j] = static_cast<T>(static_cast<double>(p[j]) -
                            lr * mhat / (std::sqrt(vhat) + state.eps));
    }
  }
}

template <class T>
inline std::vector<std::vector<T>*> trainable_parameters(ConvNet<T>& net) {
  std::vector<std::vector<T>*> out;
  for (auto& layer : net.layers) {
    out.push_back(&layer.weight);
    out.push_back(&layer.bias);
    if (layer.spec.has_batchnorm) {
      out.push_back(&layer.gamma);
      out.push_back(&layer.beta);
    }
  }
  return out;
}

template <class T>
inline std::vector<const std::vector<T>*> gradient_list(const CnnGradients<T>& grads,
                                                        const ConvNet<T>& net) {
  std::vector<const std::vector<T>*> out;
  for (size_t i = 0; i < net.layers.size(); ++i) {
    out.push_back(&grads.layers[i].weight);
    out.push_back(&grads.layers[i].bias);
    if (net.layers[i].spec.has_batchnorm) {
      out.push_back(&grads.layers[i].gamma);
      out.push_back(&grads.layers[i].beta);
    }
  }
  return out;
}

}  // namespace pact
