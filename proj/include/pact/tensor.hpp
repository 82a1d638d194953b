#pragma once

#include <cstddef>
#include <vector>

#include "pact/core.hpp"

namespace pact {

/// Dense batch x channels x height x width tensor, contiguous row-major.
template <class T>
struct Tensor4 {
  int n = 0, c = 0, h = 0, w = 0;
  std::vector<T> v;

  Tensor4() = default;
  Tensor4(int n_, int c_, int h_, int w_, T fill = T(0))
      : n(n_), c(c_), h(h_), w(w_),
        v(static_cast<size_t>(n_) * c_ * h_ * w_, fill) {}

  size_t size() const { return v.size(); }
  size_t plane() const { return static_cast<size_t>(h) * w; }

  T* plane_ptr(int in, int ic) {
    return v.data() + (static_cast<size_t>(in) * c + ic) * plane();
  }
  const T* plane_ptr(int in, int ic) const {
    return v.data() + (static_cast<size_t>(in) * c + ic) * plane();
  }

  T& at(int in, int ic, int iy, int ix) {
    return v[((static_cast<size_t>(in) * c + ic) * h + iy) * w + ix];
  }
  T at(int in, int ic, int iy, int ix) const {
    return v[((static_cast<size_t>(in) * c + ic) * h + iy) * w + ix];
  }

  bool same_shape(const Tensor4& o) const {
    return n == o.n && c == o.c && h == o.h && w == o.w;
  }
};

template <class T>
inline Tensor4<T> image_to_tensor(const Image& img) {
  Tensor4<T> t(1, 1, img.ny, img.nx);
  for (size_t i = 0; i < img.pixels.size(); ++i) t.v[i] = static_cast<T>(img.pixels[i]);
  return t;
}

template <class T>
inline Image tensor_to_image(const Tensor4<T>& t, int sample = 0) {
  Image img(t.h, t.w);
  const T* p = t.plane_ptr(sample, 0);
  for (size_t i = 0; i < img.pixels.size(); ++i) img.pixels[i] = static_cast<double>(p[i]);
  return img;
}

}  // namespace pact
