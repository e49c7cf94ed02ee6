#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "rvmaudit/image.hpp"

namespace rvm {

struct LabeledImage {
  std::string group;
  GrayImage image;
};

struct CountSummary {
  std::size_t images = 0;
  double mean = 0.0;
  double sd = 0.0;  // sample standard deviation; 0 for a single image
  std::uint64_t min = 0;
  std::uint64_t max = 0;
};

struct PixelCountStats {
  /// Non-zero pixel count per image, by group, in input order.
  std::map<std::string, std::vector<std::uint64_t>> counts;
  std::map<std::string, CountSummary> summary;
  /// Histogram of counts per group over `bin_edges` (shared across groups).
  std::vector<double> bin_edges;
  std::map<std::string, std::vector<std::uint64_t>> histogram;

  [[nodiscard]] std::size_t total_images() const {
    std::size_t n = 0;
    for (const auto& [g, c] : counts) n += c.size();
    return n;
  }
};

inline PixelCountStats pixel_count_stats(const std::vector<LabeledImage>& images, int bins = 20) {
  if (images.empty()) throw Error("pixel_count_stats: no images");
  if (bins < 1) throw Error("pixel_count_stats: bins must be positive");

  PixelCountStats out;
  std::uint64_t global_max = 0;
  for (const auto& li : images) {
    const auto c = static_cast<std::uint64_t>(nnz(li.image));
    out.counts[li.group].push_back(c);
    global_max = std::max(global_max, c);
  }

  for (const auto& [group, cs] : out.counts) {
    CountSummary s;
    s.images = cs.size();
    s.min = *std::min_element(cs.begin(), cs.end());
    s.max = *std::max_element(cs.begin(), cs.end());
    double sum = 0.0;
    for (auto c : cs) sum += static_cast<double>(c);
    s.mean = sum / static_cast<double>(cs.size());
    if (cs.size() > 1) {
      double ss = 0.0;
      for (auto c : cs) ss += (c - s.mean) * (c - s.mean);
      s.sd = std::sqrt(ss / static_cast<double>(cs.size() - 1));
    }
    out.summary[group] = s;
  }

  const double top = static_cast<double>(std::max<std::uint64_t>(global_max, 1));
  out.bin_edges.resize(static_cast<std::size_t>(bins) + 1);
  for (int i = 0; i <= bins; ++i) out.bin_edges[i] = top * i / bins;
  for (const auto& [group, cs] : out.counts) {
    auto& h = out.histogram[group];
    h.assign(static_cast<std::size_t>(bins), 0);
    for (auto c : cs) {
      auto b = static_cast<int>(static_cast<double>(c) / top * bins);
      ++h[static_cast<std::size_t>(std::clamp(b, 0, bins - 1))];
    }
  }
  return out;
}

}  // namespace rvm
