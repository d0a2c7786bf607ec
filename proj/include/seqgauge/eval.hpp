#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <iostream>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "seqgauge/util.hpp"

namespace seqgauge {

// Labeled scatterplot data: the convention throughout is that higher scores
// are more malware-like, so positives are supposed to score higher.
struct ScoreSet {
  std::vector<double> positives;
  std::vector<double> negatives;

  void validate() const {
    if (positives.empty() || negatives.empty())
      throw std::invalid_argument(
          "ScoreSet: both positive and negative scores are required");
    for (double s : positives)
      if (!std::isfinite(s))
        throw std::invalid_argument("ScoreSet: non-finite positive score");
    for (double s : negatives)
      if (!std::isfinite(s))
        throw std::invalid_argument("ScoreSet: non-finite negative score");
  }
};

struct ConfusionCounts {
  long long tp = 0;
  long long fn = 0;
  long long fp = 0;
  long long tn = 0;
};

// Classified as malware iff score >= threshold.
inline ConfusionCounts confusion_at(const ScoreSet& scores, double threshold) {
  scores.validate();
  if (!std::isfinite(threshold))
    throw std::invalid_argument("confusion_at: non-finite threshold");
  ConfusionCounts c;
  for (double s : scores.positives)
    s >= threshold ? ++c.tp : ++c.fn;
  for (double s : scores.negatives)
    s >= threshold ? ++c.fp : ++c.tn;
  return c;
}

enum class CurveKind { kRoc, kPr };

inline std::string to_string(CurveKind k) {
  return k == CurveKind::kRoc ? "roc" : "pr";
}

inline CurveKind parse_curve_kind(std::string_view s) {
  if (s == "roc") return CurveKind::kRoc;
  if (s == "pr") return CurveKind::kPr;
  throw std::invalid_argument("unknown curve kind '" + std::string(s) +
                              "' (expected roc|pr)");
}

struct Curve {
  std::vector<std::pair<double, double>> points;
  CurveKind kind = CurveKind::kRoc;
  double auc = 0.0;
};

namespace detail {

// Distinct score values, descending: the threshold sweep grid. A sentinel
// above the maximum is handled by the callers' initial point; a threshold at
// the minimum already classifies everything positive under >=, so no
// below-minimum sentinel is needed.
inline std::vector<double> sweep_values(const ScoreSet& s) {
  std::vector<double> values;
  values.reserve(s.positives.size() + s.negatives.size());
  values.insert(values.end(), s.positives.begin(), s.positives.end());
  values.insert(values.end(), s.negatives.begin(), s.negatives.end());
  std::sort(values.begin(), values.end(), std::greater<>());
  values.erase(std::unique(values.begin(), values.end()), values.end());
  return values;
}

inline void dedup_points(std::vector<std::pair<double, double>>& pts) {
  pts.erase(std::unique(pts.begin(), pts.end()), pts.end());
}

inline double trapezoid_area(const std::vector<std::pair<double, double>>& pts) {
  double area = 0.0;
  for (size_t i = 1; i < pts.size(); ++i)
    area += (pts[i].first - pts[i - 1].first) *
            (pts[i].second + pts[i - 1].second) / 2.0;
  return area;
}

// Counts of scores >= each sweep value, accumulated by a two-pointer walk
// down the sorted score lists.
template <typename Fn>
inline void sweep_confusions(const ScoreSet& s, Fn&& emit) {
  std::vector<double> pos = s.positives;
  std::vector<double> neg = s.negatives;
  std::sort(pos.begin(), pos.end(), std::greater<>());
  std::sort(neg.begin(), neg.end(), std::greater<>());
  size_t ip = 0, in = 0;
  for (double v : sweep_values(s)) {
    while (ip < pos.size() && pos[ip] >= v) ++ip;
    while (in < neg.size() && neg[in] >= v) ++in;
    emit(static_cast<long long>(ip), static_cast<long long>(in));
  }
}

}  // namespace detail

// ROC curve: (false positive rate, true positive rate) at every distinct
// threshold, starting from the above-maximum sentinel (0,0) and ending at
// (1,1). Ties between positive and negative scores yield the diagonal
// segment of processing each distinct value once. AUC by the trapezoid rule.
inline Curve roc_curve(const ScoreSet& scores) {
  scores.validate();
  const double p = static_cast<double>(scores.positives.size());
  const double n = static_cast<double>(scores.negatives.size());
  Curve curve;
  curve.kind = CurveKind::kRoc;
  curve.points.emplace_back(0.0, 0.0);
  detail::sweep_confusions(scores, [&](long long tp, long long fp) {
    curve.points.emplace_back(static_cast<double>(fp) / n,
                              static_cast<double>(tp) / p);
  });
  detail::dedup_points(curve.points);
  curve.auc = detail::trapezoid_area(curve.points);
  return curve;
}

// Exact probability that a randomly selected positive outscores a randomly
// selected negative, ties counted half. The independent estimator that the
// trapezoidal ROC AUC must reproduce.
inline double auc_roc_pairwise(const ScoreSet& scores) {
  scores.validate();
  double wins = 0.0;
  for (double p : scores.positives)
    for (double n : scores.negatives) {
      if (p > n)
        wins += 1.0;
      else if (p == n)
        wins += 0.5;
    }
  return wins / (static_cast<double>(scores.positives.size()) *
                 static_cast<double>(scores.negatives.size()));
}

// PR curve: (recall, precision) at every distinct threshold, skipping
// thresholds that classify nothing as positive. The zero-recall endpoint
// extends the first achieved precision as a constant. AUC by the trapezoid
// rule over the recall axis; same-recall points contribute zero width, which
// reproduces the stepped area geometry of a full threshold sweep.
inline Curve pr_curve(const ScoreSet& scores) {
  scores.validate();
  const double p = static_cast<double>(scores.positives.size());
  Curve curve;
  curve.kind = CurveKind::kPr;
  detail::sweep_confusions(scores, [&](long long tp, long long fp) {
    if (tp + fp == 0) return;
    curve.points.emplace_back(static_cast<double>(tp) / p,
                              static_cast<double>(tp) /
                                  static_cast<double>(tp + fp));
  });
  detail::dedup_points(curve.points);
  if (!curve.points.empty() && curve.points.front().first > 0.0)
    curve.points.insert(curve.points.begin(),
                        {0.0, curve.points.front().second});
  curve.auc = detail::trapezoid_area(curve.points);
  return curve;
}

// Replicates each benign (negative) score n times, simulating an n:1
// benign-to-malware imbalance. Positives are untouched.
inline ScoreSet expand_benign(const ScoreSet& scores, long long n) {
  if (n < 1) throw std::invalid_argument("expand_benign: n must be >= 1");
  ScoreSet out;
  out.positives = scores.positives;
  out.negatives.reserve(scores.negatives.size() * static_cast<size_t>(n));
  for (double s : scores.negatives)
    for (long long i = 0; i < n; ++i) out.negatives.push_back(s);
  return out;
}

struct ImbalancePoint {
  long long factor = 1;
  double auc_pr = 0.0;
  double auc_roc = 0.0;
};

// Both AUCs at each benign expansion factor. Duplicating negatives replaces
// the confusion counts (a, b, c, d) with (a, b, nc, nd), so every ROC point
// and hence AUC-ROC is unchanged, while precision a/(a+nc) can only fall:
// AUC-PR is non-increasing in n.
inline std::vector<ImbalancePoint> imbalance_sweep(
    const ScoreSet& scores, std::span<const long long> factors) {
  if (factors.empty())
    throw std::invalid_argument("imbalance_sweep: no expansion factors");
  std::vector<ImbalancePoint> out;
  out.reserve(factors.size());
  for (long long n : factors) {
    ScoreSet expanded = expand_benign(scores, n);
    ImbalancePoint pt;
    pt.factor = n;
    pt.auc_roc = roc_curve(expanded).auc;
    pt.auc_pr = pr_curve(expanded).auc;
    out.push_back(pt);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Score CSV: `sample_id,label,score` rows; label "benign" marks a negative.
// Curve CSV: `x,y` rows preceded by comment headers naming kind, AUC and the
// benign expansion factor, consumable by any plotting tool.

struct LabeledScore {
  std::string sample_id;
  std::string label;  // family name, or "benign"
  double score = 0.0;
};

inline void write_scores_csv(std::ostream& out,
                             std::span<const LabeledScore> scores) {
  out << "sample_id,label,score\n";
  for (const LabeledScore& s : scores)
    out << s.sample_id << ',' << s.label << ',' << fmt_double(s.score) << '\n';
}

inline std::vector<LabeledScore> read_scores_csv(std::istream& in) {
  std::vector<LabeledScore> out;
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    std::string_view sv = trim(line);
    if (sv.empty() || sv[0] == '#') continue;
    if (first && sv.starts_with("sample_id")) {
      first = false;
      continue;
    }
    first = false;
    auto fields = split_on(sv, ',');
    if (fields.size() != 3)
      throw std::runtime_error("bad score row: " + line);
    LabeledScore s;
    s.sample_id = std::string(trim(fields[0]));
    s.label = std::string(trim(fields[1]));
    try {
      s.score = std::stod(std::string(trim(fields[2])));
    } catch (const std::exception&) {
      throw std::runtime_error("bad score value in row: " + line);
    }
    out.push_back(std::move(s));
  }
  return out;
}

inline ScoreSet score_set_from_labeled(std::span<const LabeledScore> scores) {
  ScoreSet s;
  for (const LabeledScore& row : scores) {
    if (row.label == "benign")
      s.negatives.push_back(row.score);
    else
      s.positives.push_back(row.score);
  }
  return s;
}

inline void write_curve_csv(std::ostream& out, const Curve& curve,
                            long long expansion_factor = 1,
                            std::string_view config_digest = {}) {
  out << "# kind=" << to_string(curve.kind) << " auc=" << fmt_fixed(curve.auc, 6)
      << " expand=" << expansion_factor;
  if (!config_digest.empty()) out << " config=" << config_digest;
  out << '\n';
  out << (curve.kind == CurveKind::kRoc ? "# fpr,tpr\n" : "# recall,precision\n");
  for (const auto& [x, y] : curve.points)
    out << fmt_double(x) << ',' << fmt_double(y) << '\n';
}

}  // namespace seqgauge
