#pragma once

// Independent reference implementations and random-input generators shared
// by the unit and acceptance tests. Nothing here calls the library's own
// algorithms for the quantity being checked.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <string>
#include <vector>

#include <unistd.h>

#include "rvmaudit/image.hpp"
#include "rvmaudit/metrics.hpp"
#include "rvmaudit/model.hpp"
#include "rvmaudit/rng.hpp"

namespace oracle {

using rvm::GrayImage;

// ---- connectivity by flood fill ----

inline int count_components(const GrayImage& img, bool foreground, bool eight) {
  const int w = img.width;
  const int h = img.height;
  // Background is labelled on a one-pixel padded canvas so that everything
  // touching the border is a single outer component.
  const int pad = foreground ? 0 : 1;
  const int W = w + 2 * pad;
  const int H = h + 2 * pad;
  auto is_member = [&](int x, int y) {
    const int ix = x - pad;
    const int iy = y - pad;
    const bool inside = ix >= 0 && iy >= 0 && ix < w && iy < h;
    const bool fg = inside && img.at(ix, iy) != 0;
    return foreground ? fg : !fg;
  };
  std::vector<char> seen(static_cast<std::size_t>(W) * H, 0);
  int count = 0;
  std::deque<std::pair<int, int>> queue;
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x) {
      if (seen[y * W + x] || !is_member(x, y)) continue;
      ++count;
      seen[y * W + x] = 1;
      queue.emplace_back(x, y);
      while (!queue.empty()) {
        auto [cx, cy] = queue.front();
        queue.pop_front();
        for (int dy = -1; dy <= 1; ++dy)
          for (int dx = -1; dx <= 1; ++dx) {
            if ((dx == 0 && dy == 0) || (!eight && dx != 0 && dy != 0)) continue;
            const int nx = cx + dx;
            const int ny = cy + dy;
            if (nx < 0 || ny < 0 || nx >= W || ny >= H) continue;
            if (seen[ny * W + nx] || !is_member(nx, ny)) continue;
            seen[ny * W + nx] = 1;
            queue.emplace_back(nx, ny);
          }
      }
    }
  return count;
}

inline int foreground_components(const GrayImage& img) { return count_components(img, true, true); }
inline int background_components(const GrayImage& img) { return count_components(img, false, false); }

inline int full_2x2_blocks(const GrayImage& img) {
  int n = 0;
  for (int y = 0; y + 1 < img.height; ++y)
    for (int x = 0; x + 1 < img.width; ++x)
      n += img.at(x, y) && img.at(x + 1, y) && img.at(x, y + 1) && img.at(x + 1, y + 1);
  return n;
}

inline bool subset(const GrayImage& a, const GrayImage& b) {
  for (std::size_t i = 0; i < a.pixels.size(); ++i)
    if (a.pixels[i] && !b.pixels[i]) return false;
  return true;
}

// ---- random inputs ----

inline GrayImage random_gray(rvm::Rng& rng, int w, int h, double density = 1.0) {
  GrayImage img(w, h);
  for (auto& p : img.pixels)
    if (rng.uniform() < density) p = static_cast<rvm::Piv>(rng.below(256));
  return img;
}

/// Binary vessel-like mask: a few thick random strokes, optionally with
/// isolated speckle on top.
inline GrayImage random_vessel_mask(rvm::Rng& rng, int max_side = 64) {
  const int w = rng.uniform_int(8, max_side);
  const int h = rng.uniform_int(8, max_side);
  GrayImage img(w, h);
  const int strokes = rng.uniform_int(1, 6);
  for (int s = 0; s < strokes; ++s) {
    double x = rng.uniform(0, w);
    double y = rng.uniform(0, h);
    double heading = rng.uniform(0, 6.283185307179586);
    const double r = rng.uniform(0.5, 4.0);
    const int steps = rng.uniform_int(5, 60);
    for (int k = 0; k < steps; ++k) {
      heading += rng.normal(0.0, 0.3);
      x += std::cos(heading);
      y += std::sin(heading);
      const int x0 = static_cast<int>(std::floor(x - r));
      const int y0 = static_cast<int>(std::floor(y - r));
      for (int yy = y0; yy <= y0 + 2 * r + 1; ++yy)
        for (int xx = x0; xx <= x0 + 2 * r + 1; ++xx)
          if (img.contains(xx, yy) && std::hypot(xx + 0.5 - x, yy + 0.5 - y) <= r) img.at(xx, yy) = 255;
    }
  }
  if (rng.bernoulli(0.5))
    for (auto& p : img.pixels)
      if (rng.bernoulli(0.02)) p = 255;
  return img;
}

// ---- ranking metrics by enumeration ----

inline double brute_auc_roc(const rvm::PredictionSet& p) {
  double num = 0.0;
  double pairs = 0.0;
  for (const auto& a : p)
    for (const auto& b : p) {
      if (a.label != 1 || b.label != 0) continue;
      pairs += 1.0;
      if (a.probability > b.probability) num += 1.0;
      else if (a.probability == b.probability) num += 0.5;
    }
  return num / pairs;
}

/// Average precision by enumerating every distinct threshold t and
/// classifying score >= t as positive.
inline double brute_average_precision(const rvm::PredictionSet& p) {
  std::vector<double> thresholds;
  for (const auto& x : p) thresholds.push_back(x.probability);
  std::sort(thresholds.begin(), thresholds.end(), std::greater<>());
  thresholds.erase(std::unique(thresholds.begin(), thresholds.end()), thresholds.end());
  double positives = 0.0;
  for (const auto& x : p) positives += x.label;
  double ap = 0.0;
  double prev_recall = 0.0;
  for (double t : thresholds) {
    double tp = 0.0;
    double fp = 0.0;
    for (const auto& x : p)
      if (x.probability >= t) (x.label ? tp : fp) += 1.0;
    const double recall = tp / positives;
    ap += (recall - prev_recall) * (tp / (tp + fp));
    prev_recall = recall;
  }
  return ap;
}

// ---- Student t tail by quadrature ----

inline long double t_density(long double x, long double df) {
  const long double logc = std::lgamma((df + 1) / 2) - std::lgamma(df / 2) - 0.5L * std::log(df * 3.14159265358979323846L);
  return std::exp(logc - (df + 1) / 2 * std::log1p(x * x / df));
}

inline long double simpson(long double a, long double b, long double fa, long double fm, long double fb, long double df,
                           long double whole, long double eps, int depth) {
  const long double m = (a + b) / 2;
  const long double lm = (a + m) / 2;
  const long double rm = (m + b) / 2;
  const long double flm = t_density(lm, df);
  const long double frm = t_density(rm, df);
  const long double left = (m - a) / 6 * (fa + 4 * flm + fm);
  const long double right = (b - m) / 6 * (fm + 4 * frm + fb);
  if (depth <= 0 || std::fabs(left + right - whole) <= 15 * eps)
    return left + right + (left + right - whole) / 15;
  return simpson(a, m, fa, flm, fm, df, left, eps / 2, depth - 1) +
         simpson(m, b, fm, frm, fb, df, right, eps / 2, depth - 1);
}

/// Two-sided p-value 1 - 2 * integral_0^|t| f(x) dx.
inline double t_two_sided_quadrature(double t, double df) {
  const long double a = 0;
  const long double b = std::fabs(static_cast<long double>(t));
  if (b == 0) return 1.0;
  // Split [0, |t|] into pieces so the adaptive rule starts well resolved.
  const int pieces = 64;
  long double integral = 0;
  for (int i = 0; i < pieces; ++i) {
    const long double lo = a + (b - a) * i / pieces;
    const long double hi = a + (b - a) * (i + 1) / pieces;
    const long double flo = t_density(lo, df);
    const long double fhi = t_density(hi, df);
    const long double fm = t_density((lo + hi) / 2, df);
    const long double whole = (hi - lo) / 6 * (flo + 4 * fm + fhi);
    integral += simpson(lo, hi, flo, fm, fhi, df, whole, 1e-16L, 40);
  }
  return static_cast<double>(std::max<long double>(0, 1 - 2 * integral));
}

// ---- naive network forward pass ----

/// Logit of the conv/ReLU/mean-pool classifier written out as plain loops
/// over the parameter layout, accumulated in long double.
/// When `active` is given, the on/off state of every ReLU is appended to it.
inline long double naive_logit(const rvm::ArchDescriptor& arch, const std::vector<double>& w,
                               const std::vector<double>& input, std::vector<bool>* active = nullptr) {
  const int k = arch.kernel;
  const int r = k / 2;
  int side = arch.input_size;
  int in_c = 1;
  std::vector<long double> act(input.begin(), input.end());
  std::size_t off = 0;
  for (int oc : arch.channels) {
    const std::size_t wbase = off;
    const std::size_t bbase = off + static_cast<std::size_t>(oc) * in_c * k * k;
    off = bbase + oc;
    const int os = side / arch.pool;
    std::vector<long double> next(static_cast<std::size_t>(oc) * os * os, 0.0L);
    for (int co = 0; co < oc; ++co)
      for (int y = 0; y < os * arch.pool; ++y)
        for (int x = 0; x < os * arch.pool; ++x) {
          long double z = w[bbase + co];
          for (int ci = 0; ci < in_c; ++ci)
            for (int ky = 0; ky < k; ++ky)
              for (int kx = 0; kx < k; ++kx) {
                const int sy = y + ky - r;
                const int sx = x + kx - r;
                if (sy < 0 || sx < 0 || sy >= side || sx >= side) continue;
                z += w[wbase + ((static_cast<std::size_t>(co) * in_c + ci) * k + ky) * k + kx] *
                     act[(static_cast<std::size_t>(ci) * side + sy) * side + sx];
              }
          if (active) active->push_back(z > 0);
          if (z > 0)
            next[(static_cast<std::size_t>(co) * os + y / arch.pool) * os + x / arch.pool] +=
                z / (arch.pool * arch.pool);
        }
    act = std::move(next);
    side = os;
    in_c = oc;
  }
  long double logit = w[off + in_c];
  for (int c = 0; c < in_c; ++c) {
    long double mean = 0;
    for (int i = 0; i < side * side; ++i) mean += act[static_cast<std::size_t>(c) * side * side + i];
    logit += w[off + c] * mean / (side * side);
  }
  return logit;
}

inline long double naive_loss(const rvm::ArchDescriptor& arch, const std::vector<double>& w,
                              const std::vector<rvm::Sample>& batch, const std::vector<int>& labels,
                              std::vector<bool>* active = nullptr) {
  long double total = 0;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const long double z = naive_logit(arch, w, batch[i], active);
    const long double softplus = z > 0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z));
    total += softplus - labels[i] * z;
  }
  return total / static_cast<long double>(batch.size());
}

/// Largest relative discrepancy between `grad` and central differences of
/// naive_loss, |a - n| / max(|a|, |n|, floor). A probe pair whose ReLU
/// on/off pattern differs straddles a kink, where the loss has no
/// derivative; its step is shrunk tenfold until the patterns agree.
inline double gradient_check(const rvm::ArchDescriptor& arch, const std::vector<double>& w,
                             const std::vector<double>& grad, const std::vector<rvm::Sample>& batch,
                             const std::vector<int>& labels, double eps = 1e-6, double floor = 1e-7) {
  double worst = 0;
  auto probe = w;
  for (std::size_t i = 0; i < w.size(); ++i) {
    double numeric = 0;
    for (double step = eps; step >= eps * 1e-4; step /= 10) {
      const double hi = w[i] + step;
      const double lo = w[i] - step;
      std::vector<bool> on_hi, on_lo;
      probe[i] = hi;
      const long double fh = naive_loss(arch, probe, batch, labels, &on_hi);
      probe[i] = lo;
      const long double fl = naive_loss(arch, probe, batch, labels, &on_lo);
      probe[i] = w[i];
      numeric = static_cast<double>((fh - fl) / (static_cast<long double>(hi) - lo));
      if (on_hi == on_lo) break;
    }
    const double denom = std::max({std::fabs(grad[i]), std::fabs(numeric), floor});
    worst = std::max(worst, std::fabs(grad[i] - numeric) / denom);
  }
  return worst;
}

// ---- plain histogram equalization (one tile, no clipping) ----

inline GrayImage equalize(const GrayImage& img) {
  std::uint64_t hist[256] = {};
  for (auto v : img.pixels) ++hist[v];
  std::uint64_t cdf[256];
  std::uint64_t run = 0;
  for (int v = 0; v < 256; ++v) cdf[v] = run += hist[v];
  std::uint64_t cdf_min = 0;
  for (int v = 0; v < 256; ++v)
    if (hist[v]) {
      cdf_min = cdf[v];
      break;
    }
  const std::uint64_t n = img.pixels.size();
  GrayImage out(img.width, img.height);
  for (std::size_t i = 0; i < img.pixels.size(); ++i) {
    const auto v = img.pixels[i];
    out.pixels[i] = n == cdf_min ? v
                                 : static_cast<rvm::Piv>(std::lround(255.0 * static_cast<double>(cdf[v] - cdf_min) /
                                                                     static_cast<double>(n - cdf_min)));
  }
  return out;
}

// ---- scratch directories ----

inline std::filesystem::path scratch_dir(const std::string& name) {
  // Per process: ctest runs each discovered test case as its own process.
  auto dir = std::filesystem::temp_directory_path() /
             ("rvmaudit_test_" + std::to_string(::getpid()) + "_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace oracle
