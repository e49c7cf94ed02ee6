#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "rvmaudit/image.hpp"

namespace rvm {

/// ITU-R 601 luma, rounded half up: round(0.299 R + 0.587 G + 0.114 B).
inline GrayImage to_gray(const ColorImage& img) {
  if (!img.valid()) throw GeometryError("color image channels do not match its dimensions");
  GrayImage out(img.width, img.height);
  for (std::size_t i = 0; i < img.size(); ++i) {
    const unsigned luma = 299u * img.red[i] + 587u * img.green[i] + 114u * img.blue[i];
    out.pixels[i] = static_cast<Piv>((luma + 500u) / 1000u);
  }
  return out;
}

struct TileGrid {
  int cols = 8;
  int rows = 8;
};

namespace clahe_detail {

// Start offset of tile `i` when `extent` pixels are split into `count` tiles.
inline int tile_start(int i, int count, int extent) {
  return static_cast<int>(static_cast<long long>(i) * extent / count);
}

// Per-tile transfer function, real-valued so that bilinear blending happens
// before rounding.
inline std::array<double, 256> tile_mapping(const GrayImage& img, int x0, int x1, int y0, int y1,
                                            double clip_limit) {
  std::array<double, 256> hist{};
  for (int y = y0; y < y1; ++y)
    for (int x = x0; x < x1; ++x) hist[img.at(x, y)] += 1.0;

  const double n = static_cast<double>(x1 - x0) * (y1 - y0);
  const double limit = clip_limit * n;
  double excess = 0.0;
  for (double& h : hist) {
    if (h > limit) {
      excess += h - limit;
      h = limit;
    }
  }
  if (excess > 0.0)
    for (double& h : hist) h += excess / 256.0;

  std::array<double, 256> cdf{};
  double run = 0.0;
  double cdf_min = -1.0;
  for (int v = 0; v < 256; ++v) {
    run += hist[v];
    cdf[v] = run;
    if (cdf_min < 0.0 && hist[v] > 0.0) cdf_min = run;
  }

  std::array<double, 256> lut{};
  const double span = n - cdf_min;
  for (int v = 0; v < 256; ++v) {
    if (span <= 1e-9 * n) {
      lut[v] = v;  // single occupied bin: nothing to stretch
    } else {
      lut[v] = std::clamp(255.0 * (cdf[v] - cdf_min) / span, 0.0, 255.0);
    }
  }
  return lut;
}

inline std::vector<double> tile_centers(int count, int extent) {
  std::vector<double> c(count);
  for (int i = 0; i < count; ++i)
    c[i] = 0.5 * (tile_start(i, count, extent) + tile_start(i + 1, count, extent) - 1);
  return c;
}

// Lower tile index and blend weight toward the next tile along one axis.
inline std::pair<int, double> locate(double pos, const std::vector<double>& centers) {
  const int n = static_cast<int>(centers.size());
  if (n == 1 || pos <= centers.front()) return {0, 0.0};
  if (pos >= centers.back()) return {n - 1, 0.0};
  int i = 0;
  while (i + 1 < n && centers[i + 1] <= pos) ++i;
  if (i + 1 >= n) return {n - 1, 0.0};
  return {i, (pos - centers[i]) / (centers[i + 1] - centers[i])};
}

}  // namespace clahe_detail

/// Contrast-limited adaptive histogram equalization.
///
/// Each tile's histogram is clipped at `clip_limit` times the tile's pixel
/// count; the clipped mass is spread evenly over all 256 bins. Output values
/// blend the four nearest tile mappings bilinearly (tile centers as nodes,
/// clamped at the border) and are rounded to the nearest PIV.
inline GrayImage clahe(const GrayImage& img, TileGrid tiles = {}, double clip_limit = 0.01) {
  if (tiles.cols < 1 || tiles.rows < 1) throw GeometryError("CLAHE needs at least a 1x1 tile grid");
  if (!(clip_limit > 0.0 && clip_limit <= 1.0))
    throw Error("CLAHE clip limit must lie in (0, 1]");
  if (img.width < tiles.cols || img.height < tiles.rows)
    throw GeometryError("image " + std::to_string(img.width) + "x" + std::to_string(img.height) +
                        " is smaller than one tile of a " + std::to_string(tiles.cols) + "x" +
                        std::to_string(tiles.rows) + " grid");

  using namespace clahe_detail;
  std::vector<std::array<double, 256>> maps;
  maps.reserve(static_cast<std::size_t>(tiles.cols) * tiles.rows);
  for (int ty = 0; ty < tiles.rows; ++ty)
    for (int tx = 0; tx < tiles.cols; ++tx)
      maps.push_back(tile_mapping(img, tile_start(tx, tiles.cols, img.width),
                                  tile_start(tx + 1, tiles.cols, img.width),
                                  tile_start(ty, tiles.rows, img.height),
                                  tile_start(ty + 1, tiles.rows, img.height), clip_limit));

  const auto cx = tile_centers(tiles.cols, img.width);
  const auto cy = tile_centers(tiles.rows, img.height);
  auto map_at = [&](int tx, int ty) -> const std::array<double, 256>& {
    return maps[static_cast<std::size_t>(ty) * tiles.cols + tx];
  };

  GrayImage out(img.width, img.height);
  for (int y = 0; y < img.height; ++y) {
    const auto [ty, wy] = locate(y, cy);
    const int ty1 = std::min(ty + 1, tiles.rows - 1);
    for (int x = 0; x < img.width; ++x) {
      const auto [tx, wx] = locate(x, cx);
      const int tx1 = std::min(tx + 1, tiles.cols - 1);
      const Piv v = img.at(x, y);
      const double top = (1.0 - wx) * map_at(tx, ty)[v] + wx * map_at(tx1, ty)[v];
      const double bottom = (1.0 - wx) * map_at(tx, ty1)[v] + wx * map_at(tx1, ty1)[v];
      const double value = (1.0 - wy) * top + wy * bottom;
      out.at(x, y) = static_cast<Piv>(std::clamp(std::lround(value), 0L, 255L));
    }
  }
  return out;
}

/// Luma CLAHE for a color fundus image.
inline GrayImage clahe(const ColorImage& img, TileGrid tiles = {}, double clip_limit = 0.01) {
  return clahe(to_gray(img), tiles, clip_limit);
}

struct ChannelHistogram {
  std::array<std::uint64_t, 256> bin_counts{};
  std::string group_label;

  [[nodiscard]] std::uint64_t total() const {
    std::uint64_t t = 0;
    for (auto c : bin_counts) t += c;
    return t;
  }

  [[nodiscard]] double mean() const {
    const auto t = total();
    if (t == 0) return 0.0;
    double s = 0.0;
    for (int b = 0; b < 256; ++b) s += static_cast<double>(b) * static_cast<double>(bin_counts[b]);
    return s / static_cast<double>(t);
  }
};

/// Red, green and blue histograms pooled over `images`.
inline std::array<ChannelHistogram, 3> channel_histograms(const std::vector<ColorImage>& images,
                                                          const std::string& group) {
  if (images.empty()) throw Error("channel_histograms: empty image list");
  std::array<ChannelHistogram, 3> out;
  for (auto& h : out) h.group_label = group;
  for (const auto& img : images) {
    if (!img.valid()) throw GeometryError("color image channels do not match its dimensions");
    for (int c = 0; c < 3; ++c)
      for (Piv v : img.channel(c)) ++out[c].bin_counts[v];
  }
  return out;
}

}  // namespace rvm
