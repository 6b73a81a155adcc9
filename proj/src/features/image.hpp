#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace daufi::img {

// Single-channel double image, row-major.
struct Plane {
  int h = 0, w = 0;
  std::vector<double> v;

  Plane() = default;
  Plane(int height, int width, double fill = 0.0)
      : h(height), w(width), v(static_cast<std::size_t>(height) * width, fill) {}

  double& at(int y, int x) { return v[static_cast<std::size_t>(y) * w + x]; }
  double at(int y, int x) const {
    return v[static_cast<std::size_t>(y) * w + x];
  }
  // Reflect-101 indexing used for border handling (a b c | b a).
  double at_reflect(int y, int x) const;

  double max_value() const;
  double min_value() const;
};

// 8-bit interleaved image, 1 (gray) or 3 (RGB) channels.
struct ImageU8 {
  int h = 0, w = 0, channels = 0;
  std::vector<std::uint8_t> v;

  ImageU8() = default;
  ImageU8(int height, int width, int ch, std::uint8_t fill = 0)
      : h(height), w(width), channels(ch),
        v(static_cast<std::size_t>(height) * width * ch, fill) {}

  std::uint8_t& at(int y, int x, int c) {
    return v[(static_cast<std::size_t>(y) * w + x) * channels + c];
  }
  std::uint8_t at(int y, int x, int c) const {
    return v[(static_cast<std::size_t>(y) * w + x) * channels + c];
  }
};

// Luma conversion with weights 0.299/0.587/0.114, output in [0,1].
Plane to_gray(const ImageU8& img);
// Per-channel [0,1] doubles.
std::vector<Plane> to_planes(const ImageU8& img);

// Min-max normalization into [0,1]; a constant plane maps to all zeros.
void normalize_minmax(Plane& p);

// Lossless image IO. Format chosen by extension: .png, .ppm (RGB), .pgm
// (gray). Throws std::runtime_error on failure.
ImageU8 read_image(const std::string& path);
void write_image(const std::string& path, const ImageU8& img);

}  // namespace daufi::img
