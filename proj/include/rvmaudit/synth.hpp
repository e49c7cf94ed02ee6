#pragma once

// Procedural vessel trees, a "biased segmenter" rendering of them as vessel
// maps, fundus-like colour renderings, and whole synthetic cohorts.
//
// The first entry of CohortSpec::groups is the designated group: every
// leakage knob (tint, caliber, confidence, branch count) applies to it only.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <string>
#include <vector>

#include "rvmaudit/manifest.hpp"
#include "rvmaudit/pnm.hpp"
#include "rvmaudit/rng.hpp"

namespace rvm {

struct CohortSpec {
  std::vector<std::string> groups = {"Black", "White"};
  std::vector<int> n_subjects = {40, 40};  // per group, aligned with groups
  int images_min = 5;
  int images_max = 5;
  int width = 640;
  int height = 480;
  double tint_offset = 0.0;
  double caliber_delta = 0.0;
  double confidence_bias = 0.0;
  double branch_delta = 0.0;
  double noise = 0.002;

  // Tree shape.
  double expected_branches = 8.0;
  int max_depth = 6;
  double root_width = 5.0;
  double taper = 0.8;
  // Per-image multiplicative contrast spread of the emulated segmenter.
  double quality_spread = 0.2;
  // PIV noise of the emulated segmenter.
  double piv_sd = 10.0;

  std::uint64_t seed = 0;

  void validate() const {
    if (groups.size() != 2) throw Error("groups: exactly two group labels required");
    if (groups[0] == groups[1]) throw Error("groups: labels must differ");
    if (n_subjects.size() != groups.size()) throw Error("n_subjects: one count per group required");
    for (std::size_t g = 0; g < n_subjects.size(); ++g)
      if (n_subjects[g] < 1) throw Error("n_subjects[" + std::to_string(g) + "]: must be >= 1");
    if (images_min < 1) throw Error("images_per_subject.min: must be >= 1");
    if (images_max < images_min) throw Error("images_per_subject.max: must be >= min");
    if (width < 8 || height < 8) throw Error("image_size: both sides must be >= 8");
    if (std::abs(tint_offset) > 60) throw Error("tint_offset: magnitude must be <= 60");
    if (root_width < 1) throw Error("root_width: must be >= 1");
    if (root_width + caliber_delta < 1) throw Error("caliber_delta: widths must stay >= 1");
    if (std::abs(confidence_bias) > 70) throw Error("confidence_bias: magnitude must be <= 70");
    if (expected_branches < 0) throw Error("expected_branches: must be >= 0");
    if (expected_branches + branch_delta < 0) throw Error("branch_delta: expected count must stay >= 0");
    if (!(noise >= 0 && noise <= 1)) throw Error("noise: must lie in [0, 1]");
    if (max_depth < 0) throw Error("max_depth: must be >= 0");
    if (!(taper > 0 && taper <= 1)) throw Error("taper: must lie in (0, 1]");
    if (!(quality_spread >= 0 && quality_spread < 0.5)) throw Error("quality_spread: must lie in [0, 0.5)");
    if (!(piv_sd >= 0)) throw Error("piv_sd: must be >= 0");
  }

  [[nodiscard]] bool designated(const std::string& group) const { return group == groups.front(); }
};

struct Point {
  double x = 0.0;
  double y = 0.0;
};

struct VesselSegment {
  std::vector<Point> points;
  double width = 1.0;
  double confidence = 1.0;  // in (0, 1]
  int parent = -1;          // index into VesselTree::segments, -1 for the root
  int depth = 0;
};

struct VesselTree {
  int width = 0;  // canvas size the tree was grown for
  int height = 0;
  std::vector<VesselSegment> segments;
};

struct TreeParams {
  int width = 640;
  int height = 480;
  double expected_branches = 8.0;
  int max_depth = 6;
  double root_width = 5.0;
  double taper = 0.8;
};

inline TreeParams tree_params(const CohortSpec& spec, const std::string& group) {
  TreeParams p;
  p.width = spec.width;
  p.height = spec.height;
  p.expected_branches = spec.expected_branches + (spec.designated(group) ? spec.branch_delta : 0.0);
  p.max_depth = spec.max_depth;
  p.root_width = spec.root_width;
  p.taper = spec.taper;
  return p;
}

namespace synth_detail {

inline VesselSegment walk(Point start, double heading, double length, Rng& rng) {
  VesselSegment s;
  s.points.push_back(start);
  const double step = 2.0;
  const int steps = std::max(2, static_cast<int>(length / step));
  Point p = start;
  for (int i = 0; i < steps; ++i) {
    heading += rng.normal(0.0, 0.08);
    p.x += step * std::cos(heading);
    p.y += step * std::sin(heading);
    s.points.push_back(p);
  }
  return s;
}

}  // namespace synth_detail

/// Grows a tree: one root walk from an off-centre disc heading inward, then
/// a Poisson number of side branches. Each branch sprouts from a random
/// interior point of a random segment above the depth limit, one level
/// deeper, thinner by `taper` and slightly less confident than its parent.
inline VesselTree gen_tree(const TreeParams& params, std::uint64_t seed) {
  using namespace synth_detail;
  Rng rng(seed);
  VesselTree tree;
  tree.width = params.width;
  tree.height = params.height;
  const double scale = std::min(params.width, params.height);

  const Point disc{params.width * rng.uniform(0.3, 0.7), params.height * rng.uniform(0.35, 0.65)};
  const double inward = std::atan2(params.height / 2.0 - disc.y, params.width / 2.0 - disc.x);
  auto root = walk(disc, inward + rng.uniform(-0.6, 0.6), 0.45 * scale, rng);
  root.width = params.root_width;
  root.confidence = rng.uniform(0.8, 1.0);
  tree.segments.push_back(std::move(root));

  const int branches = rng.poisson(params.expected_branches);
  std::vector<int> open;
  for (int b = 0; b < branches; ++b) {
    open.clear();
    for (std::size_t i = 0; i < tree.segments.size(); ++i)
      if (tree.segments[i].depth < params.max_depth) open.push_back(static_cast<int>(i));
    if (open.empty()) break;
    const int parent = open[rng.below(open.size())];
    const VesselSegment& par = tree.segments[parent];
    const std::size_t n = par.points.size();
    const std::size_t at = n / 5 + rng.below(std::max<std::size_t>(1, n - n / 5 - 1));
    const Point origin = par.points[at];
    const Point next = par.points[std::min(at + 1, n - 1)];
    const double along = std::atan2(next.y - origin.y, next.x - origin.x);
    const double side = rng.bernoulli(0.5) ? 1.0 : -1.0;
    const double length = scale * rng.uniform(0.15, 0.3) * std::pow(0.85, par.depth);
    VesselSegment child = walk(origin, along + side * rng.uniform(0.4, 1.1), length, rng);
    child.width = std::max(1.0, par.width * params.taper);
    child.confidence = std::max(0.05, par.confidence * rng.uniform(0.8, 1.0));
    child.parent = parent;
    child.depth = par.depth + 1;
    tree.segments.push_back(std::move(child));
  }
  return tree;
}

namespace synth_detail {

inline double point_segment_distance(double px, double py, const Point& a, const Point& b) {
  const double dx = b.x - a.x;
  const double dy = b.y - a.y;
  const double len2 = dx * dx + dy * dy;
  double t = len2 > 0 ? ((px - a.x) * dx + (py - a.y) * dy) / len2 : 0.0;
  t = std::clamp(t, 0.0, 1.0);
  const double ex = px - (a.x + t * dx);
  const double ey = py - (a.y + t * dy);
  return std::sqrt(ex * ex + ey * ey);
}

// Calls visit(index, segment, distance) for every pixel centre within
// `radius(segment)` of a segment's centreline.
template <typename Radius, typename Visit>
void rasterize(const VesselTree& tree, int w, int h, Radius radius, Visit visit) {
  for (std::size_t si = 0; si < tree.segments.size(); ++si) {
    const auto& seg = tree.segments[si];
    const double r = radius(seg);
    for (std::size_t k = 0; k + 1 < seg.points.size(); ++k) {
      const Point& a = seg.points[k];
      const Point& b = seg.points[k + 1];
      const int x0 = std::max(0, static_cast<int>(std::floor(std::min(a.x, b.x) - r - 1)));
      const int x1 = std::min(w - 1, static_cast<int>(std::ceil(std::max(a.x, b.x) + r + 1)));
      const int y0 = std::max(0, static_cast<int>(std::floor(std::min(a.y, b.y) - r - 1)));
      const int y1 = std::min(h - 1, static_cast<int>(std::ceil(std::max(a.y, b.y) + r + 1)));
      for (int y = y0; y <= y1; ++y)
        for (int x = x0; x <= x1; ++x) {
          const double d = point_segment_distance(x + 0.5, y + 0.5, a, b);
          if (d <= r) visit(static_cast<std::size_t>(y) * w + x, seg, d);
        }
    }
  }
}

inline std::uint8_t clamp_piv(double v, double lo = 0.0) {
  return static_cast<std::uint8_t>(std::clamp(std::lround(v), std::lround(lo), 255L));
}

}  // namespace synth_detail

/// Emulated segmenter output. A pixel within half the (caliber-adjusted)
/// width of a centreline gets a PIV around
///   30 + 120 * confidence * quality - 25 * max(0, d - 0.5)
/// plus Gaussian noise and the designated group's confidence bias, clamped
/// to [1, 255]. Background is 0 apart from faint speckle.
inline GrayImage render_rvm(const VesselTree& tree, const CohortSpec& spec, const std::string& group,
                            std::uint64_t seed) {
  using namespace synth_detail;
  Rng rng(seed);
  const int w = spec.width;
  const int h = spec.height;
  const bool des = spec.designated(group);
  const double delta = des ? spec.caliber_delta : 0.0;
  const double bias = des ? spec.confidence_bias : 0.0;
  const double quality = rng.uniform(1.0 - spec.quality_spread, 1.0 + spec.quality_spread);

  std::vector<double> level(static_cast<std::size_t>(w) * h, -1.0);
  rasterize(
      tree, w, h, [&](const VesselSegment& s) { return std::max(1.0, s.width + delta) / 2.0; },
      [&](std::size_t i, const VesselSegment& s, double d) {
        const double v = 30.0 + 120.0 * s.confidence * quality - 25.0 * std::max(0.0, d - 0.5);
        level[i] = std::max(level[i], std::max(30.0, v));
      });

  GrayImage img(w, h);
  for (std::size_t i = 0; i < level.size(); ++i) {
    if (level[i] >= 0.0) {
      img.pixels[i] = clamp_piv(level[i] + spec.piv_sd * rng.normal() + bias, 1.0);
    } else if (spec.noise > 0.0 && rng.bernoulli(spec.noise)) {
      img.pixels[i] = static_cast<Piv>(rng.uniform_int(1, 40));
    }
  }
  return img;
}

/// Fundus-like colour rendering: an orange plate with a soft vignette and
/// texture noise, the designated group's red raised and blue lowered by
/// tint_offset, vessels drawn as a fixed darkening of the plate.
inline ColorImage render_rfi(const VesselTree& tree, const CohortSpec& spec, const std::string& group,
                             std::uint64_t seed) {
  using namespace synth_detail;
  Rng rng(seed);
  const int w = spec.width;
  const int h = spec.height;
  const bool des = spec.designated(group);
  const double tint = des ? spec.tint_offset : 0.0;
  const double delta = des ? spec.caliber_delta : 0.0;

  std::vector<char> vessel(static_cast<std::size_t>(w) * h, 0);
  rasterize(
      tree, w, h, [&](const VesselSegment& s) { return std::max(1.0, s.width + delta) / 2.0; },
      [&](std::size_t i, const VesselSegment&, double) { vessel[i] = 1; });

  ColorImage img(w, h);
  const double cx = w / 2.0;
  const double cy = h / 2.0;
  const double rmax = std::sqrt(cx * cx + cy * cy);
  const double brightness = rng.uniform(0.9, 1.1);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const auto i = static_cast<std::size_t>(y) * w + x;
      const double rr = std::hypot(x + 0.5 - cx, y + 0.5 - cy) / rmax;
      const double shade = brightness * (1.0 - 0.15 * rr * rr);
      double r = 170.0 * shade + rng.normal(0.0, 5.0) + tint;
      double g = 90.0 * shade + rng.normal(0.0, 4.0);
      double b = 70.0 * shade + rng.normal(0.0, 4.0) - tint;
      if (vessel[i]) {
        r -= 45.0;
        g -= 35.0;
        b -= 20.0;
      }
      img.red[i] = clamp_piv(r);
      img.green[i] = clamp_piv(g);
      img.blue[i] = clamp_piv(b);
    }
  return img;
}

/// Seed derivation used by gen_cohort, exposed for reproducing single images.
inline std::uint64_t image_seed(std::uint64_t cohort_seed, int subject, int image) {
  return derive_seed(derive_seed(cohort_seed, 1000 + static_cast<std::uint64_t>(subject)),
                     static_cast<std::uint64_t>(image));
}

struct Cohort {
  Manifest rvm;  // manifest.csv: vessel maps
  Manifest rfi;  // manifest_rfi.csv: colour images, same subjects
};

/// Writes rvm/*.pgm, rfi/*.ppm, manifest.csv and manifest_rfi.csv under
/// out_dir. Subjects are numbered S0001.. with the designated group first;
/// covariates come from one group-independent distribution.
inline Cohort gen_cohort(const CohortSpec& spec, const std::filesystem::path& out_dir) {
  spec.validate();
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(out_dir / "rvm", ec);
  fs::create_directories(out_dir / "rfi", ec);
  if (ec) throw PnmError(PnmError::Kind::Io, "cannot create " + out_dir.string() + ": " + ec.message());

  Cohort c;
  c.rvm.groups = spec.groups;
  c.rfi.groups = spec.groups;
  c.rvm.base_dir = out_dir;
  c.rfi.base_dir = out_dir;
  int index = 0;
  for (std::size_t g = 0; g < spec.groups.size(); ++g) {
    const auto& group = spec.groups[g];
    const auto params = tree_params(spec, group);
    for (int k = 0; k < spec.n_subjects[g]; ++k, ++index) {
      Rng rng(derive_seed(spec.seed, 1000 + static_cast<std::uint64_t>(index)));
      char id[16];
      std::snprintf(id, sizeof id, "S%04d", index + 1);
      SubjectRecord rec;
      rec.subject_id = id;
      rec.group = group;
      rec.bw = std::round(std::clamp(rng.normal(1040.0, 320.0), 400.0, 1800.0));
      rec.ga = std::round(std::clamp(rng.normal(27.7, 2.3), 22.0, 34.0) * 10.0) / 10.0;
      rec.pma = std::round((rec.ga + std::max(0.5, rng.normal(7.0, 3.0))) * 10.0) / 10.0;
      const int images = rng.uniform_int(spec.images_min, spec.images_max);
      SubjectRecord colour = rec;
      for (int j = 0; j < images; ++j) {
        const auto seed = image_seed(spec.seed, index, j);
        const auto tree = gen_tree(params, derive_seed(seed, 1));
        const std::string stem = rec.subject_id + "_" + std::to_string(j);
        const std::string rvm_path = "rvm/" + stem + ".pgm";
        const std::string rfi_path = "rfi/" + stem + ".ppm";
        write_gray(render_rvm(tree, spec, group, derive_seed(seed, 2)), out_dir / rvm_path);
        write_color(render_rfi(tree, spec, group, derive_seed(seed, 3)), out_dir / rfi_path);
        rec.image_paths.push_back(rvm_path);
        colour.image_paths.push_back(rfi_path);
      }
      c.rvm.subjects.push_back(std::move(rec));
      c.rfi.subjects.push_back(std::move(colour));
    }
  }
  write_manifest(c.rvm, out_dir / "manifest.csv");
  write_manifest(c.rfi, out_dir / "manifest_rfi.csv");
  return c;
}

}  // namespace rvm
