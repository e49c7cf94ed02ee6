#pragma once

// Topology-preserving thinning of binary masks.
//
// Foreground uses 8-connectivity and background 4-connectivity. Each pass
// visits the four border directions in turn; for a direction it first
// collects the border pixels that are simple and not end points, then
// re-tests every candidate sequentially before deleting it. Because each
// deletion is individually checked against the current image, no deletion
// can merge, split, create or remove a component or a hole.

#include <algorithm>
#include <array>
#include <bit>
#include <cstdint>
#include <vector>

#include "rvmaudit/image.hpp"

namespace rvm {

class NotBinaryError : public Error {
public:
  using Error::Error;
};

namespace skeleton_detail {

// Neighbour ring order, clockwise from the top-left corner.
inline constexpr std::array<int, 8> kDx = {-1, 0, 1, 1, 1, 0, -1, -1};
inline constexpr std::array<int, 8> kDy = {-1, -1, -1, 0, 1, 1, 1, 0};

constexpr bool ring_adjacent(int a, int b, bool eight) {
  const int dx = kDx[a] - kDx[b];
  const int dy = kDy[a] - kDy[b];
  const int adx = dx < 0 ? -dx : dx;
  const int ady = dy < 0 ? -dy : dy;
  if (adx + ady == 0) return false;
  return eight ? (adx <= 1 && ady <= 1) : (adx + ady == 1);
}

constexpr bool is_edge_neighbour(int i) { return (i % 2) == 1; }

// Components of ring positions selected by `set`, using 8- or 4-adjacency
// inside the 3x3 window. With `touching_center_only`, only components that
// contain a 4-neighbour of the center are counted.
constexpr int count_components(unsigned set, bool eight, bool touching_center_only) {
  unsigned seen = 0;
  int components = 0;
  for (int start = 0; start < 8; ++start) {
    if (!((set >> start) & 1u) || ((seen >> start) & 1u)) continue;
    unsigned stack = 1u << start;
    unsigned comp = 0;
    while (stack) {
      const int cur = std::countr_zero(stack);
      stack &= stack - 1;
      if ((comp >> cur) & 1u) continue;
      comp |= 1u << cur;
      for (int nb = 0; nb < 8; ++nb)
        if (((set >> nb) & 1u) && !((comp >> nb) & 1u) && ring_adjacent(cur, nb, eight))
          stack |= 1u << nb;
    }
    seen |= comp;
    bool touches = !touching_center_only;
    for (int i = 0; i < 8 && !touches; ++i)
      if (((comp >> i) & 1u) && is_edge_neighbour(i)) touches = true;
    if (touches) ++components;
  }
  return components;
}

constexpr std::array<bool, 256> make_simple_table() {
  std::array<bool, 256> table{};
  for (unsigned mask = 0; mask < 256; ++mask) {
    const int fg = count_components(mask, true, false);
    const int bg = count_components(~mask & 0xffu, false, true);
    table[mask] = (fg == 1 && bg == 1);
  }
  return table;
}

inline constexpr std::array<bool, 256> kSimple = make_simple_table();

inline unsigned neighbourhood(const std::vector<std::uint8_t>& fg, int w, int h, int x, int y) {
  unsigned mask = 0;
  for (int i = 0; i < 8; ++i) {
    const int nx = x + kDx[i];
    const int ny = y + kDy[i];
    if (nx >= 0 && ny >= 0 && nx < w && ny < h && fg[static_cast<std::size_t>(ny) * w + nx])
      mask |= 1u << i;
  }
  return mask;
}

}  // namespace skeleton_detail

/// True when the center of the 3x3 window described by `mask` (bit i set
/// when ring neighbour i is foreground) can be deleted without changing
/// topology.
constexpr bool is_simple_configuration(unsigned mask) {
  return skeleton_detail::kSimple[mask & 0xffu];
}

/// Thins a {0,255} mask to one-pixel-wide centerlines. End points (pixels
/// with exactly one foreground neighbour) are kept, so open curves retain
/// their length. Throws NotBinaryError for any other intensity.
inline GrayImage skeletonize(const GrayImage& img) {
  using namespace skeleton_detail;
  const int w = img.width;
  const int h = img.height;
  std::vector<std::uint8_t> fg(img.size());
  for (std::size_t i = 0; i < img.size(); ++i) {
    const Piv v = img.pixels[i];
    if (v != 0 && v != 255) throw NotBinaryError("skeletonize requires a binary {0,255} image");
    fg[i] = v != 0;
  }

  // Border directions: north, south, east, west (4-neighbour ring indices).
  constexpr std::array<int, 4> kBorder = {1, 5, 3, 7};
  auto deletable = [&](int x, int y, int dir) {
    const unsigned mask = neighbourhood(fg, w, h, x, y);
    if ((mask >> dir) & 1u) return false;  // not a border pixel for this direction
    if (std::popcount(mask) < 2) return false;  // end point or isolated
    return kSimple[mask];
  };

  std::vector<int> candidates;
  auto thin = [&] {
    bool changed = true;
    while (changed) {
      changed = false;
      for (int dir : kBorder) {
        candidates.clear();
        for (int y = 0; y < h; ++y)
          for (int x = 0; x < w; ++x)
            if (fg[static_cast<std::size_t>(y) * w + x] && deletable(x, y, dir))
              candidates.push_back(y * w + x);
        for (int idx : candidates) {
          const int x = idx % w;
          const int y = idx / w;
          if (deletable(x, y, dir)) {
            fg[static_cast<std::size_t>(idx)] = 0;
            changed = true;
          }
        }
      }
    }
  };

  auto on = [&](int x, int y) {
    return x >= 0 && y >= 0 && x < w && y < h && fg[static_cast<std::size_t>(y) * w + x];
  };
  // Blocks that contain (px,py) or its 4-neighbour (qx,qy).
  auto blocks_near = [&](int px, int py, int qx, int qy) {
    int n = 0;
    for (int by = std::min(py, qy) - 1; by <= std::max(py, qy); ++by)
      for (int bx = std::min(px, qx) - 1; bx <= std::max(px, qx); ++bx)
        n += on(bx, by) && on(bx + 1, by) && on(bx, by + 1) && on(bx + 1, by + 1);
    return n;
  };

  // A 2x2 block can survive thinning when each of its pixels anchors a
  // diagonal branch (two diagonal curves crossing between pixel centers).
  // If the original mask offers room, route one branch through a 4-neighbour
  // instead: add q, then remove p, each step being a simple-point change.
  // Accepted only when the block count drops, so this terminates.
  auto reroute_once = [&] {
    for (int y = 0; y + 1 < h; ++y)
      for (int x = 0; x + 1 < w; ++x) {
        if (!(on(x, y) && on(x + 1, y) && on(x, y + 1) && on(x + 1, y + 1))) continue;
        for (int k = 0; k < 4; ++k) {
          const int px = x + (k & 1);
          const int py = y + (k >> 1);
          for (int e = 1; e < 8; e += 2) {
            const int qx = px + kDx[e];
            const int qy = py + kDy[e];
            if (qx < 0 || qy < 0 || qx >= w || qy >= h) continue;
            const auto qi = static_cast<std::size_t>(qy) * w + qx;
            if (fg[qi] || !img.pixels[qi]) continue;
            if (!kSimple[neighbourhood(fg, w, h, qx, qy)]) continue;
            const int before = blocks_near(px, py, qx, qy);
            fg[qi] = 1;
            const auto pi = static_cast<std::size_t>(py) * w + px;
            const unsigned pmask = neighbourhood(fg, w, h, px, py);
            if (kSimple[pmask] && std::popcount(pmask) >= 2) {
              fg[pi] = 0;
              if (blocks_near(px, py, qx, qy) < before) return true;
              fg[pi] = 1;
            }
            fg[qi] = 0;
          }
        }
      }
    return false;
  };

  do {
    thin();
  } while (reroute_once());

  GrayImage out(w, h);
  for (std::size_t i = 0; i < fg.size(); ++i) out.pixels[i] = fg[i] ? 255 : 0;
  return out;
}

}  // namespace rvm
