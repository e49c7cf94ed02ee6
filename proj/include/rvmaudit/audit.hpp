#pragma once

// Information-ablation audit: one shared subject split, then for every plan
// entry transform -> train -> predict the test partition -> score at image
// and subject level.

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include "rvmaudit/checkpoint.hpp"
#include "rvmaudit/color.hpp"
#include "rvmaudit/config.hpp"
#include "rvmaudit/manifest.hpp"
#include "rvmaudit/metrics.hpp"
#include "rvmaudit/pixel_stats.hpp"
#include "rvmaudit/pnm.hpp"
#include "rvmaudit/skeleton.hpp"
#include "rvmaudit/split.hpp"
#include "rvmaudit/svg.hpp"
#include "rvmaudit/train.hpp"
#include "rvmaudit/transforms.hpp"
#include "rvmaudit/welch.hpp"

namespace rvm {

enum class Variant { Grayscale, Binarized, Skeletonized };

inline const char* to_string(Variant v) {
  switch (v) {
    case Variant::Grayscale: return "grayscale";
    case Variant::Binarized: return "binarized";
    case Variant::Skeletonized: return "skeletonized";
  }
  return "?";
}

inline Variant parse_variant(const std::string& s) {
  if (s == "grayscale") return Variant::Grayscale;
  if (s == "binarized") return Variant::Binarized;
  if (s == "skeletonized") return Variant::Skeletonized;
  throw ConfigError("unknown variant '" + s + "' (grayscale, binarized, skeletonized)");
}

/// threshold -> optional binarize -> optional skeletonize.
struct TransformPipeline {
  ThresholdSpec threshold;
  bool binarize = false;
  bool skeletonize = false;

  static TransformPipeline of(Variant v, ThresholdSpec t) {
    return {t, v != Variant::Grayscale, v == Variant::Skeletonized};
  }

  void validate() const {
    threshold.validate();
    if (skeletonize && !binarize) throw ConfigError("skeletonize requires binarize (skeletons need binary input)");
  }

  [[nodiscard]] GrayImage apply(const GrayImage& img) const {
    GrayImage out = threshold_is_identity() ? img : rvm::threshold(img, threshold);
    if (binarize) out = rvm::binarize(out);
    if (skeletonize) out = rvm::skeletonize(out);
    return out;
  }

private:
  [[nodiscard]] bool threshold_is_identity() const { return threshold.lower == 0 && !threshold.upper; }
};

struct PlanEntry {
  std::string name;
  Variant variant = Variant::Grayscale;
  ThresholdSpec threshold;

  [[nodiscard]] TransformPipeline pipeline() const { return TransformPipeline::of(variant, threshold); }
};

inline std::string entry_name(Variant v, const ThresholdSpec& t) {
  std::string n = std::string(to_string(v)) + "_" + std::to_string(t.lower);
  if (t.upper) n += "-" + std::to_string(*t.upper);
  return n;
}

struct AuditPlan {
  std::vector<PlanEntry> entries;

  void validate() const {
    if (entries.empty()) throw ConfigError("plan: ladder is empty");
    std::set<std::string> names;
    for (std::size_t i = 0; i < entries.size(); ++i) {
      const auto& e = entries[i];
      const std::string where = "plan.entries[" + std::to_string(i) + "]";
      if (e.name.empty()) throw ConfigError(where + ".name: must not be empty");
      if (!names.insert(e.name).second) throw ConfigError(where + ".name: duplicate '" + e.name + "'");
      try {
        e.threshold.validate();
      } catch (const Error& err) {
        throw ConfigError(where + ": " + err.what());
      }
    }
  }

  /// Cartesian product, variants outermost.
  static AuditPlan grid(const std::vector<Variant>& variants, const std::vector<ThresholdSpec>& thresholds) {
    AuditPlan p;
    for (Variant v : variants)
      for (const auto& t : thresholds) p.entries.push_back({entry_name(v, t), v, t});
    return p;
  }

  /// Lower thresholds 0..256 plus the low (<= 10) and mid (75..150) bands,
  /// each in all three variants: 39 entries.
  static AuditPlan default_ladder() {
    std::vector<ThresholdSpec> t;
    for (int lower : {0, 50, 100, 150, 200, 210, 220, 230, 240, 250, 256}) t.push_back({lower, std::nullopt});
    t.push_back({0, 10});
    t.push_back({75, 150});
    return grid({Variant::Grayscale, Variant::Binarized, Variant::Skeletonized}, t);
  }
};

namespace audit_detail {

inline ThresholdSpec threshold_from_json(const Json& j, const std::string& where) {
  JsonReader r(j, where);
  ThresholdSpec t;
  r.read("lower", t.lower);
  if (const Json* u = r.get("upper")) {
    if (!u->is_null()) {
      if (!u->is_number_integer()) throw ConfigError(r.field("upper") + ": expected an integer or null");
      t.upper = u->get<int>();
    }
  }
  r.allow("name");  // read by the caller
  r.allow("variant");
  r.finish();
  return t;
}

}  // namespace audit_detail

/// Either {"entries": [{"name"?, "variant", "lower", "upper"?}, ...]} or the
/// grid form {"variants": [...], "thresholds": [{"lower", "upper"?}, ...]}.
inline AuditPlan plan_from_json(const Json& j) {
  JsonReader r(j, "plan");
  AuditPlan plan;
  const Json* entries = r.get("entries");
  const Json* variants = r.get("variants");
  const Json* thresholds = r.get("thresholds");
  r.finish();
  if (entries && (variants || thresholds)) throw ConfigError("plan: give either entries or variants/thresholds");
  if (entries) {
    if (!entries->is_array()) throw ConfigError("plan.entries: expected an array");
    for (std::size_t i = 0; i < entries->size(); ++i) {
      const std::string where = "plan.entries[" + std::to_string(i) + "]";
      const Json& e = (*entries)[i];
      const auto t = audit_detail::threshold_from_json(e, where);
      if (!e.contains("variant") || !e["variant"].is_string()) throw ConfigError(where + ".variant: required string");
      Variant v;
      try {
        v = parse_variant(e["variant"].get<std::string>());
      } catch (const ConfigError& err) {
        throw ConfigError(where + ".variant: " + err.what());
      }
      std::string name = entry_name(v, t);
      if (e.contains("name")) {
        if (!e["name"].is_string()) throw ConfigError(where + ".name: expected a string");
        name = e["name"].get<std::string>();
      }
      plan.entries.push_back({name, v, t});
    }
  } else {
    if (!variants || !thresholds) throw ConfigError("plan: entries, or both variants and thresholds, required");
    if (!variants->is_array()) throw ConfigError("plan.variants: expected an array");
    if (!thresholds->is_array()) throw ConfigError("plan.thresholds: expected an array");
    std::vector<Variant> vs;
    for (std::size_t i = 0; i < variants->size(); ++i) {
      const std::string where = "plan.variants[" + std::to_string(i) + "]";
      if (!(*variants)[i].is_string()) throw ConfigError(where + ": expected a string");
      try {
        vs.push_back(parse_variant((*variants)[i].get<std::string>()));
      } catch (const ConfigError& err) {
        throw ConfigError(where + ": " + err.what());
      }
    }
    std::vector<ThresholdSpec> ts;
    for (std::size_t i = 0; i < thresholds->size(); ++i)
      ts.push_back(audit_detail::threshold_from_json((*thresholds)[i], "plan.thresholds[" + std::to_string(i) + "]"));
    plan = AuditPlan::grid(vs, ts);
  }
  plan.validate();
  return plan;
}

inline Json to_json(const AuditPlan& p) {
  Json entries = Json::array();
  for (const auto& e : p.entries) {
    Json j{{"name", e.name}, {"variant", to_string(e.variant)}, {"lower", e.threshold.lower}};
    j["upper"] = e.threshold.upper ? Json(*e.threshold.upper) : Json(nullptr);
    entries.push_back(j);
  }
  return Json{{"entries", entries}};
}

struct AuditConfig {
  TrainConfig train;
  SplitRatios ratios{0.5, 0.2, 0.3};
  std::uint64_t split_seed = 0;
  int concurrency = 1;
  bool checkpoints = true;
  bool curves = true;  // per-entry SVG/CSV/JSON curve files
};

inline AuditConfig audit_config_from_json(const Json& j, AuditConfig cfg = {}) {
  JsonReader r(j, "");
  if (const Json* t = r.get("train")) cfg.train = train_config_from_json(*t, cfg.train, "train");
  if (const Json* s = r.get("split")) {
    JsonReader sr(*s, "split");
    if (const Json* ratios = sr.get("ratios")) {
      if (!ratios->is_array() || ratios->size() != 3)
        throw ConfigError("split.ratios: expected three numbers [train, validation, test]");
      for (std::size_t k = 0; k < 3; ++k) {
        if (!(*ratios)[k].is_number()) throw ConfigError("split.ratios[" + std::to_string(k) + "]: expected a number");
        cfg.ratios[k] = (*ratios)[k].get<double>();
      }
    }
    sr.read("seed", cfg.split_seed);
    sr.finish();
  }
  r.read("concurrency", cfg.concurrency);
  r.read("checkpoints", cfg.checkpoints);
  r.read("curves", cfg.curves);
  r.finish();
  if (cfg.concurrency < 1) throw ConfigError("concurrency: must be >= 1");
  return cfg;
}

inline Json to_json(const AuditConfig& c) {
  return Json{{"train", to_json(c.train)},
              {"split", {{"ratios", c.ratios}, {"seed", c.split_seed}}},
              {"concurrency", c.concurrency},
              {"checkpoints", c.checkpoints},
              {"curves", c.curves}};
}

/// One manifest image with its subject, label and partition.
struct CohortImage {
  std::string image_id;
  std::string subject_id;
  std::string group;
  int label = 0;
  Partition partition = Partition::Train;
  GrayImage image;
};

inline std::vector<CohortImage> load_cohort_images(const Manifest& m, const SplitAssignment& s) {
  std::vector<CohortImage> out;
  out.reserve(m.image_count());
  for (const auto& subj : m.subjects) {
    const Partition p = s.at(subj.subject_id);
    for (const auto& path : subj.image_paths)
      out.push_back({path, subj.subject_id, subj.group, m.label_of(subj), p, read_gray(m.resolve(path))});
  }
  return out;
}

/// Model input: the transformed image resampled to input_size x input_size.
inline GrayImage model_input(const GrayImage& transformed, int input_size) {
  if (transformed.width == input_size && transformed.height == input_size) return transformed;
  return resize(transformed, input_size, input_size);
}

struct PartitionData {
  Dataset train, validation, test;
  std::vector<const CohortImage*> test_refs;
};

inline PartitionData build_partitions(const std::vector<CohortImage>& images,
                                      const std::vector<GrayImage>& transformed, int input_size) {
  PartitionData d;
  for (std::size_t i = 0; i < images.size(); ++i) {
    Dataset* target = images[i].partition == Partition::Train        ? &d.train
                      : images[i].partition == Partition::Validation ? &d.validation
                                                                     : &d.test;
    target->images.push_back(model_input(transformed[i], input_size));
    target->labels.push_back(images[i].label);
    if (images[i].partition == Partition::Test) d.test_refs.push_back(&images[i]);
  }
  return d;
}

inline PredictionSet predict(const ClassifierParams& params, const Dataset& d,
                             const std::vector<const CohortImage*>& refs) {
  std::vector<Sample> samples;
  samples.reserve(d.size());
  for (const auto& img : d.images) samples.push_back(to_sample(img));
  const auto probs = forward(params, samples);
  PredictionSet out;
  out.reserve(probs.size());
  for (std::size_t i = 0; i < probs.size(); ++i)
    out.push_back({refs[i]->image_id, refs[i]->subject_id, d.labels[i], probs[i]});
  return out;
}

struct RunRecord {
  std::string entry;
  std::uint64_t seed = 0;
  std::string checkpoint;  // path relative to the audit directory; empty when not saved
  bool ok = false;
  std::string error;
  MetricsReport image;
  MetricsReport subject;
  TrainReport train;
  ClassifierParams params;
  PredictionSet predictions;
  PixelCountStats pixel_counts;  // on transformed images, native resolution
};

/// Runs one plan entry end to end. Stage errors are captured in the record.
inline RunRecord run_entry(const PlanEntry& entry, const std::vector<CohortImage>& images,
                           const AuditConfig& cfg) {
  RunRecord rec;
  rec.entry = entry.name;
  rec.seed = cfg.train.seed;
  try {
    const auto pipe = entry.pipeline();
    pipe.validate();
    std::vector<GrayImage> transformed;
    std::vector<LabeledImage> labeled;
    transformed.reserve(images.size());
    for (const auto& ci : images) {
      transformed.push_back(pipe.apply(ci.image));
      labeled.push_back({ci.group, transformed.back()});
    }
    rec.pixel_counts = pixel_count_stats(labeled);
    const auto data = build_partitions(images, transformed, cfg.train.input_size);
    auto result = train(data.train, data.validation, cfg.train);
    rec.predictions = predict(result.params, data.test, data.test_refs);
    rec.image = curves(rec.predictions, Level::Image);
    rec.subject = curves(aggregate_subjects(rec.predictions), Level::Subject);
    rec.train = std::move(result.report);
    rec.params = std::move(result.params);
    rec.ok = true;
  } catch (const std::exception& e) {
    rec.ok = false;
    rec.error = e.what();
  }
  return rec;
}

/// Runs every entry, up to `concurrency` at a time; records come back in
/// plan order regardless of scheduling.
inline std::vector<RunRecord> run_entries(const AuditPlan& plan, const std::vector<CohortImage>& images,
                                          const AuditConfig& cfg) {
  std::vector<RunRecord> records(plan.entries.size());
  const int workers = std::max(1, std::min<int>(cfg.concurrency, static_cast<int>(plan.entries.size())));
  std::atomic<std::size_t> next{0};
  auto work = [&] {
    for (std::size_t i; (i = next.fetch_add(1)) < plan.entries.size();)
      records[i] = run_entry(plan.entries[i], images, cfg);
  };
  if (workers == 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w) pool.emplace_back(work);
    for (auto& t : pool) t.join();
  }
  return records;
}

// ---- reports ----

inline void write_results_csv(const std::vector<RunRecord>& records, std::ostream& out) {
  out << "entry,level,auc_pr,auc_roc,prevalence,n_pos,n_neg,seed\n";
  out.precision(17);
  for (const auto& r : records) {
    if (!r.ok) continue;
    for (const auto* m : {&r.image, &r.subject})
      out << r.entry << ',' << to_string(m->level) << ',' << m->auc_pr << ',' << m->auc_roc << ','
          << m->prevalence << ',' << m->n_pos << ',' << m->n_neg << ',' << r.seed << '\n';
  }
}

inline void write_predictions_csv(const PredictionSet& preds, std::ostream& out) {
  out << "image_id,subject_id,label,probability\n";
  out.precision(17);
  for (const auto& p : preds)
    out << p.image_id << ',' << p.subject_id << ',' << p.label << ',' << p.probability << '\n';
}

inline PredictionSet read_predictions_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open predictions " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw Error(path.string() + ": empty predictions file");
  PredictionSet out;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    const auto f = manifest_detail::split_csv_line(line);
    if (f.size() == 1 && f[0].empty()) continue;
    const std::string where = path.string() + ":" + std::to_string(line_no);
    if (f.size() != 4) throw Error(where + ": expected 4 columns");
    Prediction p{f[0], f[1], static_cast<int>(manifest_detail::parse_number(f[2], where)),
                 manifest_detail::parse_number(f[3], where)};
    out.push_back(std::move(p));
  }
  return out;
}

inline void write_pixel_count_csv(const std::vector<RunRecord>& records, const std::vector<std::string>& groups,
                                  std::ostream& out) {
  out << "entry,group,images,mean,sd,min,max,welch_t,welch_p\n";
  out.precision(10);
  for (const auto& r : records) {
    if (!r.ok) continue;
    std::optional<WelchResult> w;
    if (groups.size() == 2 && r.pixel_counts.counts.count(groups[0]) && r.pixel_counts.counts.count(groups[1])) {
      auto as_double = [](const std::vector<std::uint64_t>& v) { return std::vector<double>(v.begin(), v.end()); };
      const auto a = as_double(r.pixel_counts.counts.at(groups[0]));
      const auto b = as_double(r.pixel_counts.counts.at(groups[1]));
      if (a.size() >= 2 && b.size() >= 2) w = welch_t(a, b);
    }
    for (const auto& [group, s] : r.pixel_counts.summary) {
      out << r.entry << ',' << group << ',' << s.images << ',' << s.mean << ',' << s.sd << ',' << s.min << ','
          << s.max << ',';
      if (w) out << w->t << ',' << w->p;
      else out << ',';
      out << '\n';
    }
  }
}

/// channel,bin,<group>... with one row per (channel, PIV bin).
inline void write_channel_histogram_csv(const Manifest& rfi, std::ostream& out) {
  std::vector<std::array<ChannelHistogram, 3>> by_group;
  for (const auto& g : rfi.groups) {
    std::vector<ColorImage> images;
    for (const auto& s : rfi.subjects)
      if (s.group == g)
        for (const auto& p : s.image_paths) images.push_back(read_color(rfi.resolve(p)));
    if (images.empty()) throw Error("no colour images for group '" + g + "'");
    by_group.push_back(channel_histograms(images, g));
  }
  out << "channel,bin";
  for (const auto& g : rfi.groups) out << ',' << g;
  out << '\n';
  const char* names[3] = {"red", "green", "blue"};
  for (int c = 0; c < 3; ++c)
    for (int b = 0; b < 256; ++b) {
      out << names[c] << ',' << b;
      for (const auto& h : by_group) out << ',' << h[c].bin_counts[b];
      out << '\n';
    }
}

inline Json summary_json(const AuditPlan& plan, const std::vector<RunRecord>& records) {
  auto scalars = [](const MetricsReport& m) {
    return Json{{"auc_pr", m.auc_pr}, {"auc_roc", m.auc_roc}, {"prevalence", m.prevalence},
                {"n_pos", m.n_pos},   {"n_neg", m.n_neg}};
  };
  Json entries = Json::array();
  Json aborted = Json::array();
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto& r = records[i];
    const auto& e = plan.entries[i];
    Json j{{"entry", r.entry}, {"variant", to_string(e.variant)}, {"lower", e.threshold.lower}, {"seed", r.seed}};
    j["upper"] = e.threshold.upper ? Json(*e.threshold.upper) : Json(nullptr);
    if (!r.ok) {
      aborted.push_back({{"entry", r.entry}, {"error", r.error}});
      continue;
    }
    j["image"] = scalars(r.image);
    j["subject"] = scalars(r.subject);
    j["best_epoch"] = r.train.best_epoch;
    j["epochs_run"] = r.train.epochs.size();
    j["stop_reason"] = to_string(r.train.stop_reason);
    if (!r.checkpoint.empty()) j["checkpoint"] = r.checkpoint;
    entries.push_back(j);
  }
  return Json{{"entries", entries}, {"aborted", aborted}};
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  out << text;
  if (!out) throw Error("write failed: " + path.string());
}

struct AuditResult {
  SplitAssignment split;
  std::vector<RunRecord> records;
};

/// Full audit. With a non-empty out_dir writes: effective_config.json,
/// plan.json, split.csv, results.csv, summary.json, pixel_counts.csv,
/// channel_histograms.csv (when an RFI manifest is given), and per entry
/// curves/, predictions/, logs/ and checkpoints/ files.
inline AuditResult run_audit(const Manifest& m, const AuditPlan& plan, const AuditConfig& cfg,
                             const std::filesystem::path& out_dir = {}, const Manifest* rfi = nullptr) {
  namespace fs = std::filesystem;
  plan.validate();
  cfg.train.validate();
  AuditResult res;
  res.split = split(m, cfg.ratios, cfg.split_seed);
  const auto images = load_cohort_images(m, res.split);
  res.records = run_entries(plan, images, cfg);
  if (out_dir.empty()) return res;

  for (const char* sub : {"curves", "predictions", "logs", "checkpoints"}) fs::create_directories(out_dir / sub);
  write_json_file(to_json(cfg), out_dir / "effective_config.json");
  write_json_file(to_json(plan), out_dir / "plan.json");
  write_split(res.split, m, out_dir / "split.csv");
  {
    std::ofstream out(out_dir / "results.csv", std::ios::binary | std::ios::trunc);
    write_results_csv(res.records, out);
  }
  {
    std::ofstream out(out_dir / "pixel_counts.csv", std::ios::binary | std::ios::trunc);
    write_pixel_count_csv(res.records, m.groups, out);
  }
  if (rfi) {
    std::ofstream out(out_dir / "channel_histograms.csv", std::ios::binary | std::ios::trunc);
    write_channel_histogram_csv(*rfi, out);
  }
  for (auto& r : res.records) {
    if (!r.ok) continue;
    {
      std::ofstream out(out_dir / "predictions" / (r.entry + ".csv"), std::ios::binary | std::ios::trunc);
      write_predictions_csv(r.predictions, out);
    }
    {
      std::ofstream out(out_dir / "logs" / (r.entry + ".csv"), std::ios::binary | std::ios::trunc);
      write_train_report_csv(r.train, out);
    }
    if (cfg.checkpoints) {
      const auto path = out_dir / "checkpoints" / (r.entry + ".ckpt");
      save_checkpoint(r.params, path);
      r.checkpoint = fs::relative(path, out_dir).generic_string();
    }
    if (cfg.curves) {
      for (const auto* mr : {&r.image, &r.subject}) {
        const std::string stem = r.entry + "_" + to_string(mr->level);
        write_text(out_dir / "curves" / (stem + "_pr.svg"), pr_svg(*mr, stem + " PR"));
        write_text(out_dir / "curves" / (stem + "_roc.svg"), roc_svg(*mr, stem + " ROC"));
        std::ofstream csv(out_dir / "curves" / (stem + ".csv"), std::ios::binary | std::ios::trunc);
        write_curve_csv(*mr, csv);
      }
    }
  }
  write_json_file(summary_json(plan, res.records), out_dir / "summary.json");
  return res;
}

}  // namespace rvm
