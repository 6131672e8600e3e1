#pragma once

#include <algorithm>
#include <array>
#include <cstddef>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "dsuda/error.hpp"
#include "dsuda/io.hpp"
#include "dsuda/trial.hpp"

namespace dsuda {

// Class 1 (tinnitus) is the positive class.
struct ConfusionCounts {
  std::size_t tp = 0, fp = 0, tn = 0, fn = 0;
  std::size_t total() const { return tp + fp + tn + fn; }
  bool operator==(const ConfusionCounts&) const = default;
};

namespace detail {
inline void check_binary(std::span<const int> v, const char* what) {
  for (int x : v)
    if (x != 0 && x != 1) throw ValueError(std::string(what) + " must be 0 or 1, got " + std::to_string(x));
}
}  // namespace detail

inline ConfusionCounts confusion(std::span<const int> predictions, std::span<const int> truths) {
  if (predictions.size() != truths.size())
    throw ShapeError("predictions and truths differ in length");
  if (predictions.empty()) throw ShapeError("confusion over zero items");
  detail::check_binary(predictions, "prediction");
  detail::check_binary(truths, "truth");
  ConfusionCounts c;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    if (predictions[i] == 1)
      (truths[i] == 1 ? c.tp : c.fp) += 1;
    else
      (truths[i] == 0 ? c.tn : c.fn) += 1;
  }
  return c;
}

enum class Slice { both, left, right };

inline std::string_view to_string(Slice s) {
  switch (s) {
    case Slice::both: return "both";
    case Slice::left: return "left";
    case Slice::right: return "right";
  }
  return "?";
}

// Undefined ratios (zero denominators, empty slices) are nullopt.
struct MetricsReport {
  Slice slice = Slice::both;
  ConfusionCounts counts;
  std::optional<double> npv, tnr, n_f1, ppv, tpr, p_f1, acc;

  std::array<std::optional<double>, 7> values() const { return {npv, tnr, n_f1, ppv, tpr, p_f1, acc}; }
  bool operator==(const MetricsReport&) const = default;
};

inline constexpr std::array<std::string_view, 7> kMetricNames = {"npv", "tnr", "n_f1", "ppv", "tpr", "p_f1", "acc"};

inline std::optional<double> ratio(std::size_t num, std::size_t den) {
  if (den == 0) return std::nullopt;
  return static_cast<double>(num) / static_cast<double>(den);
}

inline std::optional<double> harmonic_mean(std::optional<double> a, std::optional<double> b) {
  if (!a || !b || *a + *b == 0.0) return std::nullopt;
  return 2.0 * *a * *b / (*a + *b);
}

inline MetricsReport report(const ConfusionCounts& c, Slice slice) {
  MetricsReport r;
  r.slice = slice;
  r.counts = c;
  r.npv = ratio(c.tn, c.tn + c.fn);
  r.tnr = ratio(c.tn, c.tn + c.fp);
  r.ppv = ratio(c.tp, c.tp + c.fp);
  r.tpr = ratio(c.tp, c.tp + c.fn);
  r.n_f1 = harmonic_mean(r.npv, r.tnr);
  r.p_f1 = harmonic_mean(r.ppv, r.tpr);
  r.acc = ratio(c.tp + c.tn, c.total());
  return r;
}

// Reports for both sides together, then left only, then right only.
inline std::array<MetricsReport, 3> side_reports(std::span<const int> predictions, std::span<const int> truths,
                                                 std::span<const Side> sides) {
  if (predictions.size() != truths.size() || predictions.size() != sides.size())
    throw ShapeError("predictions, truths and sides differ in length");
  detail::check_binary(predictions, "prediction");
  detail::check_binary(truths, "truth");
  std::array<MetricsReport, 3> out;
  out[0] = report(predictions.empty() ? ConfusionCounts{} : confusion(predictions, truths), Slice::both);
  for (Side s : {Side::left, Side::right}) {
    std::vector<int> p, t;
    for (std::size_t i = 0; i < sides.size(); ++i)
      if (sides[i] == s) {
        p.push_back(predictions[i]);
        t.push_back(truths[i]);
      }
    const Slice slice = s == Side::left ? Slice::left : Slice::right;
    out[s == Side::left ? 1 : 2] = report(p.empty() ? ConfusionCounts{} : confusion(p, t), slice);
  }
  return out;
}

inline std::string format_metric(const std::optional<double>& v) { return v ? format_real(*v) : "n/a"; }

inline std::string format_metrics_csv(std::span<const MetricsReport> reports) {
  std::string out = "slice,npv,tnr,n_f1,ppv,tpr,p_f1,acc\n";
  for (const auto& r : reports) {
    out += to_string(r.slice);
    for (const auto& v : r.values()) {
      out += ',';
      out += format_metric(v);
    }
    out += '\n';
  }
  return out;
}

// ---------------------------------------------------------------------------
// ROC

struct RocPoint {
  double fpr = 0.0;
  double tpr = 0.0;
};

struct RocCurve {
  std::vector<RocPoint> points;  // from (0,0) to (1,1), non-decreasing in both
  double auc = 0.0;
};

// Threshold sweep over distinct scores, descending; tied scores move together.
inline RocCurve roc_curve(std::span<const double> scores, std::span<const int> truths) {
  if (scores.size() != truths.size()) throw ShapeError("scores and truths differ in length");
  detail::check_binary(truths, "truth");
  const auto positives = static_cast<std::size_t>(std::count(truths.begin(), truths.end(), 1));
  const std::size_t negatives = truths.size() - positives;
  if (positives == 0 || negatives == 0) throw ValueError("ROC needs at least one item of each class");

  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });

  RocCurve curve;
  curve.points.push_back({0.0, 0.0});
  std::size_t tp = 0, fp = 0;
  for (std::size_t i = 0; i < order.size();) {
    const double s = scores[order[i]];
    std::size_t dtp = 0, dfp = 0;
    for (; i < order.size() && scores[order[i]] == s; ++i) (truths[order[i]] == 1 ? dtp : dfp) += 1;
    // Trapezoid in integer units, normalized once at the end.
    curve.auc += static_cast<double>(dfp) * (static_cast<double>(tp) + 0.5 * static_cast<double>(dtp));
    tp += dtp;
    fp += dfp;
    curve.points.push_back({static_cast<double>(fp) / static_cast<double>(negatives),
                            static_cast<double>(tp) / static_cast<double>(positives)});
  }
  curve.auc /= static_cast<double>(positives) * static_cast<double>(negatives);
  return curve;
}

// Per-class curves (class 0 scored by 1 - p), pooled micro curve and macro mean.
struct RocSeries {
  RocCurve class0;
  RocCurve class1;
  RocCurve micro;
  double auc_micro = 0.0;
  double auc_macro = 0.0;
};

inline RocSeries roc_auc(std::span<const double> scores, std::span<const int> truths) {
  if (scores.size() != truths.size()) throw ShapeError("scores and truths differ in length");
  std::vector<double> neg_scores(scores.size());
  std::vector<int> neg_truths(truths.size());
  for (std::size_t i = 0; i < scores.size(); ++i) {
    neg_scores[i] = 1.0 - scores[i];
    neg_truths[i] = 1 - truths[i];
  }
  RocSeries r;
  r.class1 = roc_curve(scores, truths);
  r.class0 = roc_curve(neg_scores, neg_truths);
  std::vector<double> pooled_scores(scores.begin(), scores.end());
  pooled_scores.insert(pooled_scores.end(), neg_scores.begin(), neg_scores.end());
  std::vector<int> pooled_truths(truths.begin(), truths.end());
  pooled_truths.insert(pooled_truths.end(), neg_truths.begin(), neg_truths.end());
  r.micro = roc_curve(pooled_scores, pooled_truths);
  r.auc_micro = r.micro.auc;
  r.auc_macro = 0.5 * (r.class0.auc + r.class1.auc);
  return r;
}

inline std::string format_roc_csv(const RocSeries& roc) {
  std::string out = "class,fpr,tpr\n";
  auto emit = [&](std::string_view cls, const RocCurve& c) {
    for (const auto& p : c.points) {
      out += cls;
      out += ',' + format_real(p.fpr) + ',' + format_real(p.tpr) + '\n';
    }
  };
  emit("0", roc.class0);
  emit("1", roc.class1);
  out += "auc_micro,auc_macro\n";
  out += format_real(roc.auc_micro) + ',' + format_real(roc.auc_macro) + '\n';
  return out;
}

}  // namespace dsuda
