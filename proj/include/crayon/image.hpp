#pragma once

#include "crayon/core.hpp"

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

namespace crayon {

using Rgb = std::array<std::uint8_t, 3>;

/// 8-bit RGB raster, row-major, origin top-left.
struct RgbImage {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> data;

  RgbImage() = default;
  RgbImage(int w, int h, Rgb fill = {0, 0, 0}) : width(w), height(h), data(static_cast<std::size_t>(w * h * 3)) {
    for (std::size_t i = 0; i < data.size(); i += 3) {
      data[i] = fill[0];
      data[i + 1] = fill[1];
      data[i + 2] = fill[2];
    }
  }

  bool contains(int x, int y) const { return x >= 0 && y >= 0 && x < width && y < height; }

  Rgb at(int x, int y) const {
    const auto i = index(x, y);
    return {data[i], data[i + 1], data[i + 2]};
  }

  void set(int x, int y, Rgb c) {
    const auto i = index(x, y);
    data[i] = c[0];
    data[i + 1] = c[1];
    data[i + 2] = c[2];
  }

  bool operator==(const RgbImage&) const = default;

 private:
  std::size_t index(int x, int y) const { return (static_cast<std::size_t>(y) * width + x) * 3; }
};

/// Per-pixel camera-frame depth (z) with a validity mask.
struct DepthImage {
  int width = 0;
  int height = 0;
  std::vector<double> values;
  std::vector<std::uint8_t> valid;

  DepthImage() = default;
  DepthImage(int w, int h)
      : width(w), height(h), values(static_cast<std::size_t>(w * h), 0.0), valid(static_cast<std::size_t>(w * h), 0) {}

  bool contains(int x, int y) const { return x >= 0 && y >= 0 && x < width && y < height; }
  bool is_valid(int x, int y) const { return contains(x, y) && valid[index(x, y)] != 0; }
  double at(int x, int y) const { return values[index(x, y)]; }

  void set(int x, int y, double depth) {
    if (!(depth > 0.0)) throw Error(ErrorCode::invalid_depth, "depth must be positive");
    values[index(x, y)] = depth;
    valid[index(x, y)] = 1;
  }

  void invalidate(int x, int y) {
    values[index(x, y)] = 0.0;
    valid[index(x, y)] = 0;
  }

  std::size_t index(int x, int y) const { return static_cast<std::size_t>(y) * width + x; }
};

// --- file formats -----------------------------------------------------------

/// Binary PPM (P6) bytes.
inline std::string encode_ppm(const RgbImage& img) {
  std::string out = "P6\n" + std::to_string(img.width) + " " + std::to_string(img.height) + "\n255\n";
  out.append(reinterpret_cast<const char*>(img.data.data()), img.data.size());
  return out;
}

inline RgbImage decode_ppm(const std::string& bytes) {
  std::istringstream in(bytes);
  std::string magic;
  int w = 0, h = 0, maxval = 0;
  in >> magic >> w >> h >> maxval;
  if (magic != "P6" || w <= 0 || h <= 0 || maxval != 255) throw Error(ErrorCode::io, "not an 8-bit P6 image");
  in.get();
  RgbImage img(w, h);
  in.read(reinterpret_cast<char*>(img.data.data()), static_cast<std::streamsize>(img.data.size()));
  if (in.gcount() != static_cast<std::streamsize>(img.data.size())) throw Error(ErrorCode::io, "truncated P6 image");
  return img;
}

inline constexpr char kDepthMagic[4] = {'C', 'R', 'D', 'P'};

namespace detail {
inline void put_u32_le(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}
inline std::uint32_t get_u32_le(const std::string& in, std::size_t at) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(in[at + i])) << (8 * i);
  return v;
}
}  // namespace detail

/// Depth raster: "CRDP", u32 width, u32 height, then width*height float32,
/// all little-endian, row-major. Invalid pixels are stored as 0.
inline std::string encode_depth(const DepthImage& depth) {
  std::string out(kDepthMagic, 4);
  detail::put_u32_le(out, static_cast<std::uint32_t>(depth.width));
  detail::put_u32_le(out, static_cast<std::uint32_t>(depth.height));
  out.reserve(out.size() + depth.values.size() * 4);
  for (std::size_t i = 0; i < depth.values.size(); ++i) {
    const float f = depth.valid[i] ? static_cast<float>(depth.values[i]) : 0.0f;
    detail::put_u32_le(out, std::bit_cast<std::uint32_t>(f));
  }
  return out;
}

inline DepthImage decode_depth(const std::string& bytes) {
  if (bytes.size() < 12 || std::memcmp(bytes.data(), kDepthMagic, 4) != 0)
    throw Error(ErrorCode::io, "bad depth magic");
  const auto w = detail::get_u32_le(bytes, 4);
  const auto h = detail::get_u32_le(bytes, 8);
  if (bytes.size() != 12 + static_cast<std::size_t>(w) * h * 4) throw Error(ErrorCode::io, "depth size mismatch");
  DepthImage depth(static_cast<int>(w), static_cast<int>(h));
  for (std::size_t i = 0; i < depth.values.size(); ++i) {
    const float f = std::bit_cast<float>(detail::get_u32_le(bytes, 12 + 4 * i));
    if (f > 0.0f) {
      depth.values[i] = f;
      depth.valid[i] = 1;
    }
  }
  return depth;
}

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::io, "cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_file(const std::string& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::io, "cannot write " + path);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

}  // namespace crayon
