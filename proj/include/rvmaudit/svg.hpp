#pragma once

// Minimal standalone SVG line charts for PR and ROC curves.

#include <cstdio>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "rvmaudit/metrics.hpp"

namespace rvm {

namespace svg_detail {

inline std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

inline std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

}  // namespace svg_detail

/// Unit-square chart of (x, y) points in [0,1]^2 joined by straight segments.
inline std::string svg_line_chart(const std::vector<std::pair<double, double>>& points,
                                  const std::string& title, const std::string& x_label,
                                  const std::string& y_label, bool diagonal = false) {
  using svg_detail::num;
  const double size = 320.0;
  const double left = 60.0;
  const double top = 40.0;
  auto px = [&](double x) { return left + x * size; };
  auto py = [&](double y) { return top + (1.0 - y) * size; };

  std::ostringstream o;
  o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"420\" height=\"420\" viewBox=\"0 0 420 420\">\n";
  o << "<rect width=\"420\" height=\"420\" fill=\"white\"/>\n";
  o << "<text x=\"210\" y=\"24\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"14\">"
    << svg_detail::escape(title) << "</text>\n";
  o << "<rect x=\"" << num(left) << "\" y=\"" << num(top) << "\" width=\"" << num(size) << "\" height=\""
    << num(size) << "\" fill=\"none\" stroke=\"black\"/>\n";
  for (int i = 0; i <= 4; ++i) {
    const double t = i / 4.0;
    o << "<text x=\"" << num(px(t)) << "\" y=\"" << num(top + size + 16)
      << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"10\">" << num(t) << "</text>\n";
    o << "<text x=\"" << num(left - 6) << "\" y=\"" << num(py(t) + 3)
      << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"10\">" << num(t) << "</text>\n";
  }
  o << "<text x=\"" << num(left + size / 2) << "\" y=\"" << num(top + size + 34)
    << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\">" << svg_detail::escape(x_label)
    << "</text>\n";
  o << "<text x=\"16\" y=\"" << num(top + size / 2) << "\" text-anchor=\"middle\" font-family=\"sans-serif\""
    << " font-size=\"12\" transform=\"rotate(-90 16 " << num(top + size / 2) << ")\">"
    << svg_detail::escape(y_label) << "</text>\n";
  if (diagonal)
    o << "<line x1=\"" << num(px(0)) << "\" y1=\"" << num(py(0)) << "\" x2=\"" << num(px(1)) << "\" y2=\""
      << num(py(1)) << "\" stroke=\"gray\" stroke-dasharray=\"4 4\"/>\n";
  o << "<polyline fill=\"none\" stroke=\"steelblue\" stroke-width=\"2\" points=\"";
  for (std::size_t i = 0; i < points.size(); ++i) {
    o << num(px(points[i].first)) << ',' << num(py(points[i].second)) << ' ';
  }
  o << "\"/>\n</svg>\n";
  return o.str();
}

inline std::string pr_svg(const MetricsReport& r, const std::string& title) {
  std::vector<std::pair<double, double>> pts;
  for (const auto& p : r.pr) pts.emplace_back(p.recall, p.precision);
  // Average precision is the area under this staircase: each block's
  // precision applies over its recall increment.
  std::vector<std::pair<double, double>> stair;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    if (i > 0) stair.emplace_back(pts[i - 1].first, pts[i].second);
    stair.push_back(pts[i]);
  }
  return svg_line_chart(stair, title + " (AP " + svg_detail::num(r.auc_pr) + ")", "recall", "precision");
}

inline std::string roc_svg(const MetricsReport& r, const std::string& title) {
  std::vector<std::pair<double, double>> pts;
  for (const auto& p : r.roc) pts.emplace_back(p.fpr, p.tpr);
  return svg_line_chart(pts, title + " (AUC " + svg_detail::num(r.auc_roc) + ")", "false positive rate",
                        "true positive rate", true);
}

}  // namespace rvm
