#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>

#include "rvmaudit/image.hpp"
#include "rvmaudit/rng.hpp"

namespace rvm {

/// Keep-band for thresholding: a pixel survives iff lower <= PIV and, when
/// an upper bound is present, PIV <= upper. lower == 256 removes everything.
struct ThresholdSpec {
  int lower = 0;
  std::optional<int> upper;

  void validate() const {
    if (lower < 0 || lower > 256) throw Error("threshold lower bound must lie in [0, 256]");
    if (upper && (*upper < 0 || *upper > 255))
      throw Error("threshold upper bound must lie in [0, 255]");
  }

  [[nodiscard]] bool keeps(Piv v) const {
    return v >= lower && (!upper || v <= *upper);
  }

  friend bool operator==(const ThresholdSpec&, const ThresholdSpec&) = default;
};

inline GrayImage threshold(const GrayImage& img, const ThresholdSpec& spec) {
  spec.validate();
  GrayImage out = img;
  for (Piv& v : out.pixels)
    if (!spec.keeps(v)) v = 0;
  return out;
}

inline GrayImage binarize(const GrayImage& img) {
  GrayImage out = img;
  for (Piv& v : out.pixels) v = v > 0 ? 255 : 0;
  return out;
}

[[nodiscard]] inline bool is_binary(const GrayImage& img) {
  return std::all_of(img.pixels.begin(), img.pixels.end(),
                     [](Piv v) { return v == 0 || v == 255; });
}

/// Bilinear resampling with half-pixel-centered sampling positions.
inline GrayImage resize(const GrayImage& img, int w, int h) {
  if (w < 1 || h < 1) throw GeometryError("resize target must be at least 1x1");
  if (img.empty()) throw GeometryError("cannot resize an empty image");
  if (w == img.width && h == img.height) return img;

  const double sx = static_cast<double>(img.width) / w;
  const double sy = static_cast<double>(img.height) / h;
  GrayImage out(w, h);
  for (int y = 0; y < h; ++y) {
    const double fy = std::clamp((y + 0.5) * sy - 0.5, 0.0, img.height - 1.0);
    const int y0 = static_cast<int>(fy);
    const int y1 = std::min(y0 + 1, img.height - 1);
    const double wy = fy - y0;
    for (int x = 0; x < w; ++x) {
      const double fx = std::clamp((x + 0.5) * sx - 0.5, 0.0, img.width - 1.0);
      const int x0 = static_cast<int>(fx);
      const int x1 = std::min(x0 + 1, img.width - 1);
      const double wx = fx - x0;
      const double top = (1.0 - wx) * img.at(x0, y0) + wx * img.at(x1, y0);
      const double bottom = (1.0 - wx) * img.at(x0, y1) + wx * img.at(x1, y1);
      const double v = (1.0 - wy) * top + wy * bottom;
      out.at(x, y) = static_cast<Piv>(std::clamp(std::lround(v), 0L, 255L));
    }
  }
  return out;
}

inline GrayImage flip_horizontal(const GrayImage& img) {
  GrayImage out(img.width, img.height);
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x) out.at(img.width - 1 - x, y) = img.at(x, y);
  return out;
}

inline GrayImage flip_vertical(const GrayImage& img) {
  GrayImage out(img.width, img.height);
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x) out.at(x, img.height - 1 - y) = img.at(x, y);
  return out;
}

/// Counter-clockwise rotation by quarter_turns * 90 degrees.
inline GrayImage rotate90(const GrayImage& img, int quarter_turns) {
  quarter_turns = ((quarter_turns % 4) + 4) % 4;
  if (quarter_turns == 0) return img;
  if (quarter_turns == 2) return flip_vertical(flip_horizontal(img));
  GrayImage out(img.height, img.width);
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x) {
      if (quarter_turns == 1)
        out.at(y, img.width - 1 - x) = img.at(x, y);
      else
        out.at(img.height - 1 - y, x) = img.at(x, y);
    }
  return out;
}

struct AugmentSpec {
  double flip_h_prob = 0.5;
  double flip_v_prob = 0.5;
  double rot90_prob = 0.5;
  std::uint64_t seed = 0;

  void validate() const {
    auto ok = [](double p) { return p >= 0.0 && p <= 1.0; };
    if (!ok(flip_h_prob) || !ok(flip_v_prob) || !ok(rot90_prob))
      throw Error("augmentation probabilities must lie in [0, 1]");
  }
};

/// Random on-grid flips and rotations. Exactly four draws are consumed per
/// call so the stream position depends only on the number of calls.
inline GrayImage augment(const GrayImage& img, const AugmentSpec& spec, Rng& draw) {
  spec.validate();
  const bool fh = draw.uniform() < spec.flip_h_prob;
  const bool fv = draw.uniform() < spec.flip_v_prob;
  const bool rot = draw.uniform() < spec.rot90_prob;
  const int k = 1 + static_cast<int>(draw.below(3));
  GrayImage out = img;
  if (fh) out = flip_horizontal(out);
  if (fv) out = flip_vertical(out);
  if (rot) out = rotate90(out, k);
  return out;
}

}  // namespace rvm
