#pragma once

// Ranking metrics for binary predictions.
//
// Ties are always handled as blocks: every distinct score is one operating
// point. AUC-ROC counts a tied positive/negative pair as half concordant;
// AUC-PR is average precision, sum over blocks of (R_k - R_{k-1}) * P_k,
// which makes a constant-score predictor score exactly the prevalence.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>
#include <ostream>
#include <string>
#include <vector>

#include "rvmaudit/image.hpp"

namespace rvm {

class MetricError : public Error {
public:
  using Error::Error;
};

struct Prediction {
  std::string image_id;
  std::string subject_id;
  int label = 0;  // 1 = positive class
  double probability = 0.0;
};

using PredictionSet = std::vector<Prediction>;

enum class Level { Image, Subject };

inline const char* to_string(Level l) { return l == Level::Image ? "image" : "subject"; }

struct RocPoint {
  double fpr = 0.0;
  double tpr = 0.0;
  double threshold = 0.0;
};

struct PrPoint {
  double recall = 0.0;
  double precision = 1.0;
  double threshold = 0.0;
};

struct MetricsReport {
  Level level = Level::Image;
  double auc_pr = 0.0;
  double auc_roc = 0.0;
  double prevalence = 0.0;
  std::size_t n_pos = 0;
  std::size_t n_neg = 0;
  std::vector<RocPoint> roc;
  std::vector<PrPoint> pr;
};

namespace metrics_detail {

struct Block {
  double score;
  std::uint64_t pos;
  std::uint64_t neg;
};

// Distinct-score blocks in descending score order.
inline std::vector<Block> descending_blocks(const PredictionSet& preds) {
  std::uint64_t pos = 0;
  std::uint64_t neg = 0;
  for (const auto& p : preds) {
    if (p.label != 0 && p.label != 1) throw MetricError("labels must be 0 or 1");
    if (!(p.probability >= 0.0 && p.probability <= 1.0))
      throw MetricError("probabilities must lie in [0, 1]");
    (p.label ? pos : neg) += 1;
  }
  if (pos == 0 || neg == 0)
    throw MetricError("AUC needs at least one positive and one negative example");

  std::vector<std::size_t> order(preds.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return preds[a].probability > preds[b].probability;
  });
  std::vector<Block> blocks;
  for (std::size_t i : order) {
    const auto& p = preds[i];
    if (blocks.empty() || blocks.back().score != p.probability)
      blocks.push_back({p.probability, 0, 0});
    (p.label ? blocks.back().pos : blocks.back().neg) += 1;
  }
  return blocks;
}

}  // namespace metrics_detail

inline double auc_roc(const PredictionSet& preds) {
  const auto blocks = metrics_detail::descending_blocks(preds);
  std::uint64_t pos_above = 0;
  std::uint64_t total_pos = 0;
  std::uint64_t total_neg = 0;
  // Twice the concordance count keeps the tie half-credit in integers.
  std::uint64_t twice_concordant = 0;
  for (const auto& b : blocks) {
    twice_concordant += 2 * b.neg * pos_above + b.neg * b.pos;
    pos_above += b.pos;
    total_pos += b.pos;
    total_neg += b.neg;
  }
  return static_cast<double>(twice_concordant) /
         (2.0 * static_cast<double>(total_pos) * static_cast<double>(total_neg));
}

inline double auc_pr(const PredictionSet& preds) {
  const auto blocks = metrics_detail::descending_blocks(preds);
  std::uint64_t total_pos = 0;
  for (const auto& b : blocks) total_pos += b.pos;
  std::uint64_t tp = 0;
  std::uint64_t fp = 0;
  double prev_recall = 0.0;
  double ap = 0.0;
  for (const auto& b : blocks) {
    tp += b.pos;
    fp += b.neg;
    const double recall = static_cast<double>(tp) / static_cast<double>(total_pos);
    const double precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
    ap += (recall - prev_recall) * precision;
    prev_recall = recall;
  }
  return ap;
}

/// Full PR and ROC curves: one point per distinct score plus the (0,0) ROC
/// origin and the (recall 0, precision 1) PR start.
inline MetricsReport curves(const PredictionSet& preds, Level level = Level::Image) {
  const auto blocks = metrics_detail::descending_blocks(preds);
  MetricsReport r;
  r.level = level;
  for (const auto& b : blocks) {
    r.n_pos += b.pos;
    r.n_neg += b.neg;
  }
  r.prevalence = static_cast<double>(r.n_pos) / static_cast<double>(r.n_pos + r.n_neg);
  r.roc.push_back({0.0, 0.0, 1.0});
  r.pr.push_back({0.0, 1.0, 1.0});
  std::uint64_t tp = 0;
  std::uint64_t fp = 0;
  for (const auto& b : blocks) {
    tp += b.pos;
    fp += b.neg;
    r.roc.push_back({static_cast<double>(fp) / static_cast<double>(r.n_neg),
                     static_cast<double>(tp) / static_cast<double>(r.n_pos), b.score});
    r.pr.push_back({static_cast<double>(tp) / static_cast<double>(r.n_pos),
                    static_cast<double>(tp) / static_cast<double>(tp + fp), b.score});
  }
  r.auc_roc = auc_roc(preds);
  r.auc_pr = auc_pr(preds);
  return r;
}

/// Trapezoidal area under emitted ROC points.
inline double area_under_roc_points(const std::vector<RocPoint>& pts) {
  double a = 0.0;
  for (std::size_t i = 1; i < pts.size(); ++i)
    a += (pts[i].fpr - pts[i - 1].fpr) * (pts[i].tpr + pts[i - 1].tpr) * 0.5;
  return a;
}

/// Step-wise (average precision) area under emitted PR points.
inline double area_under_pr_points(const std::vector<PrPoint>& pts) {
  double a = 0.0;
  for (std::size_t i = 1; i < pts.size(); ++i)
    a += (pts[i].recall - pts[i - 1].recall) * pts[i].precision;
  return a;
}

inline double median(std::vector<double> v) {
  if (v.empty()) throw MetricError("median of an empty set");
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

/// Collapses image predictions to one per subject (median probability).
/// Subjects appear in order of first occurrence.
inline PredictionSet aggregate_subjects(const PredictionSet& preds) {
  std::vector<std::string> order;
  std::map<std::string, std::pair<int, std::vector<double>>> by_subject;
  for (const auto& p : preds) {
    if (p.subject_id.empty()) throw MetricError("prediction without subject id");
    auto [it, inserted] = by_subject.try_emplace(p.subject_id, p.label, std::vector<double>{});
    if (inserted) order.push_back(p.subject_id);
    if (it->second.first != p.label)
      throw MetricError("conflicting labels for subject '" + p.subject_id + "'");
    it->second.second.push_back(p.probability);
  }
  PredictionSet out;
  out.reserve(order.size());
  for (const auto& id : order) {
    const auto& [label, probs] = by_subject.at(id);
    out.push_back({id, id, label, median(probs)});
  }
  return out;
}

/// One row per emitted curve point; the ROC and PR lists are index-aligned.
inline void write_curve_csv(const MetricsReport& r, std::ostream& out) {
  out << "level,threshold,recall,precision,fpr,tpr\n";
  out.precision(17);
  for (std::size_t i = 0; i < r.roc.size(); ++i)
    out << to_string(r.level) << ',' << r.roc[i].threshold << ',' << r.pr[i].recall << ','
        << r.pr[i].precision << ',' << r.roc[i].fpr << ',' << r.roc[i].tpr << '\n';
}

}  // namespace rvm
