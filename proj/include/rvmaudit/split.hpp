#pragma once

// Subject-level train/validation/test partitioning, stratified by group.

#include <array>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <string>
#include <vector>

#include "rvmaudit/manifest.hpp"
#include "rvmaudit/rng.hpp"

namespace rvm {

enum class Partition { Train = 0, Validation = 1, Test = 2 };

inline const char* to_string(Partition p) {
  switch (p) {
    case Partition::Train: return "train";
    case Partition::Validation: return "validation";
    case Partition::Test: return "test";
  }
  return "?";
}

inline Partition parse_partition(const std::string& s) {
  if (s == "train") return Partition::Train;
  if (s == "validation" || s == "val") return Partition::Validation;
  if (s == "test") return Partition::Test;
  throw Error("unknown partition '" + s + "'");
}

using SplitRatios = std::array<double, 3>;

struct SplitAssignment {
  std::map<std::string, Partition> partition_of;
  SplitRatios ratios{0.5, 0.2, 0.3};
  std::uint64_t seed = 0;

  [[nodiscard]] Partition at(const std::string& subject_id) const {
    const auto it = partition_of.find(subject_id);
    if (it == partition_of.end()) throw Error("subject '" + subject_id + "' is not in the split");
    return it->second;
  }

  [[nodiscard]] std::vector<const SubjectRecord*> subjects(const Manifest& m, Partition p) const {
    std::vector<const SubjectRecord*> out;
    for (const auto& s : m.subjects)
      if (at(s.subject_id) == p) out.push_back(&s);
    return out;
  }
};

/// Largest-remainder apportionment of `n` items over `ratios`; fractional
/// ties go to the earlier partition.
inline std::array<int, 3> apportion(int n, const SplitRatios& ratios) {
  std::array<int, 3> counts{};
  std::array<double, 3> frac{};
  int assigned = 0;
  for (int k = 0; k < 3; ++k) {
    const double target = n * ratios[k];
    counts[k] = static_cast<int>(std::floor(target + 1e-9));
    frac[k] = target - counts[k];
    assigned += counts[k];
  }
  while (assigned < n) {
    int best = 0;
    for (int k = 1; k < 3; ++k)
      if (frac[k] > frac[best] + 1e-12) best = k;
    ++counts[best];
    frac[best] = -1.0;
    ++assigned;
  }
  return counts;
}

inline SplitAssignment split(const Manifest& m, const SplitRatios& ratios, std::uint64_t seed) {
  double sum = 0.0;
  for (double r : ratios) {
    if (!(r > 0.0)) throw Error("split ratios must be positive");
    sum += r;
  }
  if (std::abs(sum - 1.0) > 1e-9) throw Error("split ratios must sum to 1");

  SplitAssignment out;
  out.ratios = ratios;
  out.seed = seed;
  for (std::size_t g = 0; g < m.groups.size(); ++g) {
    std::vector<std::string> ids;
    for (const auto& s : m.subjects)
      if (s.group == m.groups[g]) ids.push_back(s.subject_id);
    if (ids.empty()) continue;
    if (ids.size() < 3)
      throw Error("group '" + m.groups[g] + "' has " + std::to_string(ids.size()) +
                  " subjects; at least 3 are needed to fill three partitions");
    std::sort(ids.begin(), ids.end());
    Rng rng(derive_seed(seed, g));
    rng.shuffle(ids);
    const auto counts = apportion(static_cast<int>(ids.size()), ratios);
    std::size_t i = 0;
    for (int k = 0; k < 3; ++k)
      for (int c = 0; c < counts[k]; ++c) out.partition_of[ids[i++]] = static_cast<Partition>(k);
  }
  return out;
}

inline void write_split(const SplitAssignment& s, const Manifest& m,
                        const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error("cannot write split " + path.string());
  out << "subject_id,partition\n";
  for (const auto& subj : m.subjects)
    out << subj.subject_id << ',' << to_string(s.at(subj.subject_id)) << '\n';
  if (!out) throw Error("write failed: " + path.string());
}

inline SplitAssignment read_split(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open split " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw Error(path.string() + ": empty split file");
  SplitAssignment s;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    const auto f = manifest_detail::split_csv_line(line);
    if (f.size() == 1 && f[0].empty()) continue;
    if (f.size() < 2) throw Error(path.string() + ":" + std::to_string(line_no) + ": bad row");
    if (!s.partition_of.emplace(f[0], parse_partition(f[1])).second)
      throw Error(path.string() + ":" + std::to_string(line_no) + ": subject listed twice");
  }
  return s;
}

}  // namespace rvm
