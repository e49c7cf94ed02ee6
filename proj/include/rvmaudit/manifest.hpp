#pragma once

// Cohort manifest: one CSV row per image, grouped into subject records.
//
//   subject_id,group,bw_g,ga_wk,pma_wk,image_path
//
// Columns may appear in any order; extra columns are ignored. Relative image
// paths are resolved against the manifest's directory.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "rvmaudit/image.hpp"

namespace rvm {

class ManifestError : public Error {
public:
  using Error::Error;
};

struct SubjectRecord {
  std::string subject_id;
  std::string group;
  double bw = 0.0;   // grams
  double ga = 0.0;   // weeks
  double pma = 0.0;  // weeks
  std::vector<std::string> image_paths;
};

struct Manifest {
  /// Allowed group labels; groups.front() is the positive class.
  std::vector<std::string> groups = {"Black", "White"};
  std::vector<SubjectRecord> subjects;
  /// Directory relative image paths are resolved against.
  std::filesystem::path base_dir;

  [[nodiscard]] std::size_t image_count() const {
    std::size_t n = 0;
    for (const auto& s : subjects) n += s.image_paths.size();
    return n;
  }

  [[nodiscard]] const std::string& positive_group() const { return groups.front(); }

  [[nodiscard]] int label_of(const SubjectRecord& s) const {
    return s.group == positive_group() ? 1 : 0;
  }

  [[nodiscard]] std::filesystem::path resolve(const std::string& image_path) const {
    std::filesystem::path p(image_path);
    return p.is_absolute() ? p : base_dir / p;
  }

  [[nodiscard]] const SubjectRecord* find(const std::string& id) const {
    for (const auto& s : subjects)
      if (s.subject_id == id) return &s;
    return nullptr;
  }
};

inline constexpr const char* kManifestColumns[] = {"subject_id", "group",  "bw_g",
                                                   "ga_wk",      "pma_wk", "image_path"};

namespace manifest_detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur.push_back(c);
    }
  }
  out.push_back(cur);
  for (auto& f : out) {
    const auto b = f.find_first_not_of(" \t");
    const auto e = f.find_last_not_of(" \t");
    f = b == std::string::npos ? std::string() : f.substr(b, e - b + 1);
  }
  return out;
}

inline double parse_number(const std::string& text, const std::string& where) {
  double v = 0.0;
  const auto* first = text.data();
  const auto* last = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(first, last, v);
  if (ec != std::errc() || ptr != last || !std::isfinite(v))
    throw ManifestError(where + ": not a number: '" + text + "'");
  return v;
}

}  // namespace manifest_detail

inline void validate_subject(const SubjectRecord& s, const std::string& where) {
  if (s.subject_id.empty()) throw ManifestError(where + ": empty subject_id");
  if (!(s.bw > 0.0)) throw ManifestError(where + ": bw_g must be positive");
  if (!(s.ga > 0.0)) throw ManifestError(where + ": ga_wk must be positive");
  if (s.pma < s.ga) throw ManifestError(where + ": pma_wk must be >= ga_wk");
  if (s.image_paths.empty()) throw ManifestError(where + ": subject has no images");
}

inline Manifest parse_manifest(std::istream& in, const std::string& origin,
                               std::vector<std::string> groups = {"Black", "White"}) {
  using namespace manifest_detail;
  if (groups.size() < 2) throw ManifestError("at least two group labels are required");

  std::string line;
  if (!std::getline(in, line)) throw ManifestError(origin + ": empty manifest");
  if (line.size() >= 3 && static_cast<unsigned char>(line[0]) == 0xEF &&
      static_cast<unsigned char>(line[1]) == 0xBB && static_cast<unsigned char>(line[2]) == 0xBF)
    line.erase(0, 3);
  const auto header = split_csv_line(line);
  std::map<std::string, std::size_t> column;
  for (std::size_t i = 0; i < header.size(); ++i) column[header[i]] = i;
  std::vector<std::size_t> idx;
  for (const char* name : kManifestColumns) {
    const auto it = column.find(name);
    if (it == column.end())
      throw ManifestError(origin + ": missing column '" + std::string(name) + "'");
    idx.push_back(it->second);
  }

  Manifest m;
  m.groups = std::move(groups);
  std::map<std::string, std::size_t> by_id;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::string where = origin + ":" + std::to_string(line_no);
    const auto f = split_csv_line(line);
    if (f.size() < header.size()) throw ManifestError(where + ": too few fields");

    SubjectRecord row;
    row.subject_id = f[idx[0]];
    row.group = f[idx[1]];
    row.bw = parse_number(f[idx[2]], where + " bw_g");
    row.ga = parse_number(f[idx[3]], where + " ga_wk");
    row.pma = parse_number(f[idx[4]], where + " pma_wk");
    if (f[idx[5]].empty()) throw ManifestError(where + ": empty image_path");
    row.image_paths.push_back(f[idx[5]]);
    if (std::find(m.groups.begin(), m.groups.end(), row.group) == m.groups.end())
      throw ManifestError(where + ": unknown group label '" + row.group + "'");
    validate_subject(row, where);

    const auto it = by_id.find(row.subject_id);
    if (it == by_id.end()) {
      by_id.emplace(row.subject_id, m.subjects.size());
      m.subjects.push_back(std::move(row));
      continue;
    }
    auto& s = m.subjects[it->second];
    if (s.group != row.group || s.bw != row.bw || s.ga != row.ga || s.pma != row.pma)
      throw ManifestError(where + ": conflicting covariates for subject '" + row.subject_id + "'");
    s.image_paths.push_back(std::move(row.image_paths.front()));
  }
  if (m.subjects.empty()) throw ManifestError(origin + ": manifest has no rows");
  return m;
}

inline Manifest load_manifest(const std::filesystem::path& path,
                              std::vector<std::string> groups = {"Black", "White"}) {
  std::ifstream in(path);
  if (!in) throw ManifestError("cannot open manifest " + path.string());
  Manifest m = parse_manifest(in, path.string(), std::move(groups));
  m.base_dir = path.parent_path();
  return m;
}

inline std::string format_number(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

inline void write_manifest(const Manifest& m, std::ostream& out) {
  out << "subject_id,group,bw_g,ga_wk,pma_wk,image_path\n";
  for (const auto& s : m.subjects)
    for (const auto& p : s.image_paths)
      out << s.subject_id << ',' << s.group << ',' << format_number(s.bw) << ','
          << format_number(s.ga) << ',' << format_number(s.pma) << ',' << p << '\n';
}

inline void write_manifest(const Manifest& m, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw ManifestError("cannot write manifest " + path.string());
  write_manifest(m, out);
  if (!out) throw ManifestError("write failed: " + path.string());
}

}  // namespace rvm
