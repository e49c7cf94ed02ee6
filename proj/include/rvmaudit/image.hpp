#pragma once

#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace rvm {

using Piv = std::uint8_t;

/// Base class for every error raised by the toolkit.
class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Image geometry does not admit the requested operation.
class GeometryError : public Error {
public:
  using Error::Error;
};

/// Single-channel 8-bit image, row-major. For vessel maps the intensity
/// encodes the segmenter's vessel probability as PIV/255.
struct GrayImage {
  int width = 0;
  int height = 0;
  std::vector<Piv> pixels;

  GrayImage() = default;
  GrayImage(int w, int h, Piv fill = 0)
      : width(w), height(h), pixels(checked_size(w, h), fill) {}
  GrayImage(int w, int h, std::vector<Piv> data) : width(w), height(h), pixels(std::move(data)) {
    if (pixels.size() != checked_size(w, h))
      throw GeometryError("pixel buffer does not match " + std::to_string(w) + "x" +
                          std::to_string(h));
  }

  [[nodiscard]] std::size_t size() const { return pixels.size(); }
  [[nodiscard]] bool empty() const { return pixels.empty(); }

  Piv& at(int x, int y) { return pixels[static_cast<std::size_t>(y) * width + x]; }
  [[nodiscard]] Piv at(int x, int y) const {
    return pixels[static_cast<std::size_t>(y) * width + x];
  }
  [[nodiscard]] bool contains(int x, int y) const {
    return x >= 0 && y >= 0 && x < width && y < height;
  }

  friend bool operator==(const GrayImage&, const GrayImage&) = default;

  static std::size_t checked_size(int w, int h) {
    if (w < 0 || h < 0) throw GeometryError("negative image dimensions");
    return static_cast<std::size_t>(w) * static_cast<std::size_t>(h);
  }
};

/// Three-channel 8-bit image stored as planar red/green/blue buffers.
struct ColorImage {
  int width = 0;
  int height = 0;
  std::vector<Piv> red;
  std::vector<Piv> green;
  std::vector<Piv> blue;

  ColorImage() = default;
  ColorImage(int w, int h)
      : width(w),
        height(h),
        red(GrayImage::checked_size(w, h)),
        green(red.size()),
        blue(red.size()) {}

  [[nodiscard]] std::size_t size() const { return red.size(); }

  [[nodiscard]] const std::vector<Piv>& channel(int c) const {
    return c == 0 ? red : (c == 1 ? green : blue);
  }
  std::vector<Piv>& channel(int c) { return c == 0 ? red : (c == 1 ? green : blue); }

  [[nodiscard]] bool valid() const {
    const auto n = GrayImage::checked_size(width, height);
    return red.size() == n && green.size() == n && blue.size() == n;
  }

  friend bool operator==(const ColorImage&, const ColorImage&) = default;
};

/// Number of non-zero pixels.
inline std::size_t nnz(const GrayImage& img) {
  std::size_t n = 0;
  for (Piv v : img.pixels) n += (v != 0);
  return n;
}

}  // namespace rvm
