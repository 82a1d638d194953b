#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "pact/core.hpp"

namespace pact::io {

// All container formats are little-endian on disk.

template <class T>
inline T byteswap_if_big(T v) {
  if constexpr (std::endian::native == std::endian::little) {
    return v;
  } else {
    T out;
    auto* src = reinterpret_cast<const unsigned char*>(&v);
    auto* dst = reinterpret_cast<unsigned char*>(&out);
    for (size_t i = 0; i < sizeof(T); ++i) dst[i] = src[sizeof(T) - 1 - i];
    return out;
  }
}

template <class T>
inline void write_pod(std::ostream& os, T v) {
  static_assert(std::is_trivially_copyable_v<T>);
  v = byteswap_if_big(v);
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
inline T read_pod(std::istream& is, const std::string& what) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is) fail(ErrorKind::io, "truncated file while reading " + what);
  return byteswap_if_big(v);
}

inline void write_u32(std::ostream& os, uint32_t v) { write_pod(os, v); }
inline void write_u64(std::ostream& os, uint64_t v) { write_pod(os, v); }
inline void write_i64(std::ostream& os, int64_t v) { write_pod(os, v); }
inline void write_f64(std::ostream& os, double v) { write_pod(os, v); }
inline void write_f32(std::ostream& os, float v) { write_pod(os, v); }

inline uint32_t read_u32(std::istream& is, const std::string& what) { return read_pod<uint32_t>(is, what); }
inline uint64_t read_u64(std::istream& is, const std::string& what) { return read_pod<uint64_t>(is, what); }
inline int64_t read_i64(std::istream& is, const std::string& what) { return read_pod<int64_t>(is, what); }
inline double read_f64(std::istream& is, const std::string& what) { return read_pod<double>(is, what); }
inline float read_f32(std::istream& is, const std::string& what) { return read_pod<float>(is, what); }

template <class T>
inline void write_array(std::ostream& os, const std::vector<T>& v) {
  if constexpr (std::endian::native == std::endian::little) {
    os.write(reinterpret_cast<const char*>(v.data()),
             static_cast<std::streamsize>(v.size() * sizeof(T)));
  } else {
    for (T x : v) write_pod(os, x);
  }
}

template <class T>
inline void read_array(std::istream& is, std::vector<T>& v, size_t count,
                       const std::string& what) {
  v.resize(count);
  if constexpr (std::endian::native == std::endian::little) {
    is.read(reinterpret_cast<char*>(v.data()),
            static_cast<std::streamsize>(count * sizeof(T)));
    if (!is) fail(ErrorKind::io, "truncated file while reading " + what);
  } else {
    for (size_t i = 0; i < count; ++i) v[i] = read_pod<T>(is, what);
  }
}

inline void write_magic(std::ostream& os, const char magic[4]) { os.write(magic, 4); }

inline void check_magic(std::istream& is, const char expected[4], const std::string& what) {
  char got[4] = {};
  is.read(got, 4);
  if (!is) fail(ErrorKind::io, "truncated file while reading " + what + " magic");
  if (std::memcmp(got, expected, 4) != 0)
    fail(ErrorKind::format, "bad magic in " + what + " file");
}

inline std::ofstream open_out(const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) fail(ErrorKind::io, "cannot open for writing: " + path);
  return os;
}

inline std::ifstream open_in(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) fail(ErrorKind::io, "cannot open for reading: " + path);
  return is;
}

// ---------------------------------------------------------------------------
// Raw image container ("PAIM"): dims + float64 pixels. Used for
// reconstruction outputs so they can be exported or diffed losslessly.

inline void save_image(const std::string& path, const Image& img) {
  auto os = open_out(path);
  write_magic(os, "PAIM");
  write_u32(os, 1);
  write_u32(os, static_cast<uint32_t>(img.ny));
  write_u32(os, static_cast<uint32_t>(img.nx));
  write_array(os, img.pixels);
  if (!os) fail(ErrorKind::io, "write failed: " + path);
}

inline Image load_image(const std::string& path) {
  auto is = open_in(path);
  check_magic(is, "PAIM", "image");
  const uint32_t version = read_u32(is, "image version");
  if (version != 1) fail(ErrorKind::format, "unsupported image file version");
  Image img;
  img.ny = static_cast<int>(read_u32(is, "image ny"));
  img.nx = static_cast<int>(read_u32(is, "image nx"));
  read_array(is, img.pixels, static_cast<size_t>(img.ny) * img.nx, "image pixels");
  return img;
}

// ---------------------------------------------------------------------------
// Binary portable graymap (P5, 8-bit). Mask input and export output format.

inline void save_pgm(const std::string& path, int ny, int nx,
                     const std::vector<uint8_t>& bytes) {
  auto os = open_out(path);
  os << "P5\n" << nx << " " << ny << "\n255\n";
  os.write(reinterpret_cast<const char*>(bytes.data()),
           static_cast<std::streamsize>(bytes.size()));
  if (!os) fail(ErrorKind::io, "write failed: " + path);
}

struct PgmImage {
  int ny = 0, nx = 0;
  std::vector<uint8_t> bytes;
};

inline PgmImage load_pgm(const std::string& path) {
  auto is = open_in(path);
  std::string magic;
  is >> magic;
  if (magic != "P5") fail(ErrorKind::format, "not a binary portable graymap (P5): " + path);
  auto next_token = [&is, &path]() {
    // skips whitespace and '#' comment lines
    std::string tok;
    for (;;) {
      if (!(is >> tok)) fail(ErrorKind::io, "truncated graymap header: " + path);
      if (tok[0] == '#') {
        std::string rest;
        std::getline(is, rest);
        continue;
      }
      return tok;
    }
  };
  PgmImage img;
  img.nx = std::stoi(next_token());
  img.ny = std::stoi(next_token());
  const int maxval = std::stoi(next_token());
  if (maxval <= 0 || maxval > 255)
    fail(ErrorKind::format, "only 8-bit graymaps supported: " + path);
  is.get();  // single whitespace after maxval
  img.bytes.resize(static_cast<size_t>(img.ny) * img.nx);
  is.read(reinterpret_cast<char*>(img.bytes.data()),
          static_cast<std::streamsize>(img.bytes.size()));
  if (!is) fail(ErrorKind::io, "truncated graymap data: " + path);
  return img;
}

}  // namespace pact::io
