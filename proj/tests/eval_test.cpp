#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <random>
#include <sstream>

#include "oracles.hpp"
#include "seqgauge/eval.hpp"

using namespace seqgauge;

namespace {

// Ten positives and ten negatives arranged so the threshold 0.5 produces the
// worked confusion counts tp=7, fn=3, fp=2, tn=8.
ScoreSet worked_example() {
  ScoreSet s;
  s.positives = {0.9, 0.88, 0.86, 0.84, 0.82, 0.8, 0.78, 0.3, 0.2, 0.1};
  s.negatives = {0.85, 0.7, 0.25, 0.22, 0.18, 0.15, 0.12, 0.08, 0.05, 0.02};
  return s;
}

bool has_point(const Curve& c, double x, double y, double tol = 1e-12) {
  for (const auto& [px, py] : c.points)
    if (std::fabs(px - x) <= tol && std::fabs(py - y) <= tol) return true;
  return false;
}

}  // namespace

TEST_CASE("confusion counts at the worked-example threshold") {
  ConfusionCounts c = confusion_at(worked_example(), 0.5);
  REQUIRE(c.tp == 7);
  REQUIRE(c.fn == 3);
  REQUIRE(c.fp == 2);
  REQUIRE(c.tn == 8);
  // sensitivity 0.7 at false positive rate 0.2
  REQUIRE(double(c.tp) / double(c.tp + c.fn) == 0.7);
  REQUIRE(double(c.fp) / double(c.fp + c.tn) == 0.2);
}

TEST_CASE("confusion counts at extreme thresholds") {
  ScoreSet s = worked_example();
  ConfusionCounts below = confusion_at(s, -1.0);
  REQUIRE(below.tp == 10);
  REQUIRE(below.fp == 10);
  REQUIRE(below.fn == 0);
  REQUIRE(below.tn == 0);
  ConfusionCounts above = confusion_at(s, 2.0);
  REQUIRE(above.tp == 0);
  REQUIRE(above.fp == 0);
}

TEST_CASE("classification at a threshold is inclusive (score >= threshold)") {
  ScoreSet s;
  s.positives = {0.5};
  s.negatives = {0.4};
  ConfusionCounts c = confusion_at(s, 0.5);
  REQUIRE(c.tp == 1);
  REQUIRE(c.fp == 0);
}

TEST_CASE("score sets validate their contents") {
  ScoreSet missing;
  missing.positives = {1.0};
  REQUIRE_THROWS_AS(missing.validate(), std::invalid_argument);
  REQUIRE_THROWS_AS(confusion_at(missing, 0.0), std::invalid_argument);

  ScoreSet inf;
  inf.positives = {std::numeric_limits<double>::infinity()};
  inf.negatives = {0.0};
  REQUIRE_THROWS_AS(roc_curve(inf), std::invalid_argument);
}

TEST_CASE("ROC curve passes through the worked-example point") {
  Curve roc = roc_curve(worked_example());
  REQUIRE(has_point(roc, 0.2, 0.7));
  REQUIRE(roc.points.front() == std::pair{0.0, 0.0});
  REQUIRE(roc.points.back() == std::pair{1.0, 1.0});
  for (size_t i = 1; i < roc.points.size(); ++i)
    REQUIRE(roc.points[i].first >= roc.points[i - 1].first);
}

TEST_CASE("perfect separation gives AUC-ROC 1.0") {
  ScoreSet s;
  s.positives = {0.9, 0.8, 0.7};
  s.negatives = {0.3, 0.2, 0.1};
  REQUIRE(roc_curve(s).auc == 1.0);
  REQUIRE(auc_roc_pairwise(s) == 1.0);
}

TEST_CASE("identical score multisets give AUC-ROC 0.5") {
  ScoreSet s;
  s.positives = {0.4, 0.6, 0.8};
  s.negatives = {0.4, 0.6, 0.8};
  REQUIRE(roc_curve(s).auc == 0.5);
  REQUIRE(auc_roc_pairwise(s) == 0.5);
}

TEST_CASE("single distinct value everywhere gives AUC-ROC 0.5") {
  ScoreSet s;
  s.positives = {1.0, 1.0};
  s.negatives = {1.0, 1.0, 1.0};
  REQUIRE(roc_curve(s).auc == 0.5);
  REQUIRE(auc_roc_pairwise(s) == 0.5);
}

TEST_CASE("mixed ordering matches the pairwise enumeration, 4/6 case") {
  ScoreSet s;
  s.positives = {0.9, 0.8, 0.7};
  s.negatives = {0.85, 0.1};
  // pairs won: (0.9,0.85),(0.9,0.1),(0.8,0.1),(0.7,0.1) = 4 of 6
  REQUIRE_THAT(auc_roc_pairwise(s),
               Catch::Matchers::WithinAbs(4.0 / 6.0, 1e-15));
  REQUIRE_THAT(roc_curve(s).auc,
               Catch::Matchers::WithinAbs(4.0 / 6.0, 1e-12));
}

TEST_CASE("trapezoid ROC AUC equals the pairwise estimator on random sets") {
  std::mt19937 gen(2025);
  for (int trial = 0; trial < 1000; ++trial) {
    ScoreSet s = oracle::random_score_set(gen, 25, trial % 2 == 0);
    REQUIRE_THAT(roc_curve(s).auc,
                 Catch::Matchers::WithinAbs(auc_roc_pairwise(s), 1e-12));
  }
}

TEST_CASE("ROC points match an independent direct-count sweep") {
  std::mt19937 gen(99);
  for (int trial = 0; trial < 200; ++trial) {
    ScoreSet s = oracle::random_score_set(gen);
    REQUIRE(roc_curve(s).points == oracle::sweep_roc_points(s));
  }
}

TEST_CASE("PR curve reproduces the worked example point") {
  Curve pr = pr_curve(worked_example());
  REQUIRE(has_point(pr, 0.7, 7.0 / 9.0));
  // recall non-decreasing along stored order, spanning [0, 1]
  REQUIRE(pr.points.front().first == 0.0);
  REQUIRE(pr.points.back().first == 1.0);
  for (size_t i = 1; i < pr.points.size(); ++i)
    REQUIRE(pr.points[i].first >= pr.points[i - 1].first);
}

TEST_CASE("perfect separation with equal classes gives AUC-PR 1.0") {
  ScoreSet s;
  s.positives = {0.9, 0.8, 0.7};
  s.negatives = {0.3, 0.2, 0.1};
  REQUIRE(pr_curve(s).auc == 1.0);
}

TEST_CASE("PR sweep on {3,1} vs {2} matches the hand enumeration") {
  ScoreSet s;
  s.positives = {3.0, 1.0};
  s.negatives = {2.0};
  Curve pr = pr_curve(s);
  // thresholds 3, 2, 1 give (0.5, 1), (0.5, 0.5), (1, 2/3); plus the
  // zero-recall constant extension of the first achieved precision
  std::vector<std::pair<double, double>> expected = {
      {0.0, 1.0}, {0.5, 1.0}, {0.5, 0.5}, {1.0, 2.0 / 3.0}};
  REQUIRE(pr.points == expected);
  // trapezoid over the recall axis: 0.5*1 + 0 + 0.5*(0.5+2/3)/2
  double hand_auc = 0.5 + 0.5 * (0.5 + 2.0 / 3.0) / 2.0;
  REQUIRE_THAT(pr.auc, Catch::Matchers::WithinAbs(hand_auc, 1e-15));
}

TEST_CASE("PR points match an independent direct-count sweep") {
  std::mt19937 gen(313);
  for (int trial = 0; trial < 200; ++trial) {
    ScoreSet s = oracle::random_score_set(gen);
    Curve pr = pr_curve(s);
    auto expected = oracle::sweep_pr_points(s);
    REQUIRE(pr.points == expected);
    REQUIRE_THAT(pr.auc,
                 Catch::Matchers::WithinAbs(oracle::trapezoid(expected), 1e-15));
  }
}

TEST_CASE("PR curve when the top score is a negative starts at zero recall") {
  ScoreSet s;
  s.positives = {3.0, 1.0};
  s.negatives = {5.0};
  Curve pr = pr_curve(s);
  REQUIRE(pr.points.front() == std::pair{0.0, 0.0});
}

TEST_CASE("expand_benign replicates negatives and nothing else") {
  ScoreSet s = worked_example();
  ScoreSet same = expand_benign(s, 1);
  REQUIRE(same.positives == s.positives);
  REQUIRE(same.negatives == s.negatives);

  ScoreSet ten = expand_benign(s, 10);
  REQUIRE(ten.positives == s.positives);
  REQUIRE(ten.negatives.size() == 100);
  for (double v : s.negatives)
    REQUIRE(std::count(ten.negatives.begin(), ten.negatives.end(), v) >= 10);

  REQUIRE_THROWS_AS(expand_benign(s, 0), std::invalid_argument);
}

TEST_CASE("ROC curve points are exactly invariant under benign expansion") {
  std::mt19937 gen(515);
  for (int trial = 0; trial < 100; ++trial) {
    ScoreSet s = oracle::random_score_set(gen);
    Curve base = roc_curve(s);
    for (long long n : {10LL, 100LL, 1000LL}) {
      Curve expanded = roc_curve(expand_benign(s, n));
      REQUIRE(expanded.points == base.points);
      REQUIRE(expanded.auc == base.auc);
    }
  }
}

TEST_CASE("duplicated benign counts substitute into the precision formula") {
  // tp=7, fp=2 at the worked threshold; n=10 gives precision 7/(7+20)
  ScoreSet expanded = expand_benign(worked_example(), 10);
  ConfusionCounts c = confusion_at(expanded, 0.5);
  REQUIRE(c.tp == 7);
  REQUIRE(c.fp == 20);
  double precision = double(c.tp) / double(c.tp + c.fp);
  REQUIRE_THAT(precision, Catch::Matchers::WithinAbs(7.0 / 27.0, 1e-15));
}

TEST_CASE("imbalance sweep: AUC-PR non-increasing, AUC-ROC constant") {
  std::mt19937 gen(777);
  std::vector<long long> factors = {1, 10, 100};
  for (int trial = 0; trial < 50; ++trial) {
    ScoreSet s = oracle::random_score_set(gen);
    auto rows = imbalance_sweep(s, factors);
    REQUIRE(rows.size() == 3);
    for (size_t i = 1; i < rows.size(); ++i) {
      REQUIRE(rows[i].auc_pr <= rows[i - 1].auc_pr);
      REQUIRE_THAT(rows[i].auc_roc,
                   Catch::Matchers::WithinAbs(rows[0].auc_roc, 1e-12));
    }
  }
}

TEST_CASE("imbalance sweep covers the configured factor grid") {
  std::vector<long long> factors = {1, 10, 100, 1000};
  auto rows = imbalance_sweep(worked_example(), factors);
  REQUIRE(rows.size() == 4);
  for (size_t i = 0; i < factors.size(); ++i)
    REQUIRE(rows[i].factor == factors[i]);
  std::vector<long long> none;
  REQUIRE_THROWS_AS(imbalance_sweep(worked_example(), none),
                    std::invalid_argument);
}

TEST_CASE("curves are invariant under strictly increasing score transforms") {
  std::mt19937 gen(41);
  for (int trial = 0; trial < 50; ++trial) {
    ScoreSet s = oracle::random_score_set(gen);
    ScoreSet mapped;
    auto f = [](double x) { return 3.0 * x + 1.0; };  // strictly increasing
    for (double v : s.positives) mapped.positives.push_back(f(v));
    for (double v : s.negatives) mapped.negatives.push_back(f(v));
    REQUIRE(roc_curve(mapped).points == roc_curve(s).points);
    REQUIRE(pr_curve(mapped).points == pr_curve(s).points);
  }
}

TEST_CASE("label swap with negated scores preserves AUC-ROC") {
  std::mt19937 gen(43);
  for (int trial = 0; trial < 50; ++trial) {
    ScoreSet s = oracle::random_score_set(gen);
    ScoreSet swapped;
    for (double v : s.positives) swapped.negatives.push_back(-v);
    for (double v : s.negatives) swapped.positives.push_back(-v);
    REQUIRE_THAT(auc_roc_pairwise(swapped),
                 Catch::Matchers::WithinAbs(auc_roc_pairwise(s), 1e-12));
    REQUIRE_THAT(roc_curve(swapped).auc,
                 Catch::Matchers::WithinAbs(roc_curve(s).auc, 1e-12));
  }
}

TEST_CASE("exchanging classes reverses the AUC") {
  std::mt19937 gen(47);
  for (int trial = 0; trial < 50; ++trial) {
    ScoreSet s = oracle::random_score_set(gen);
    ScoreSet exchanged;
    exchanged.positives = s.negatives;
    exchanged.negatives = s.positives;
    REQUIRE_THAT(auc_roc_pairwise(s) + auc_roc_pairwise(exchanged),
                 Catch::Matchers::WithinAbs(1.0, 1e-12));
  }
}

TEST_CASE("score CSV round-trips and feeds a ScoreSet") {
  std::vector<LabeledScore> rows = {{"mal_0", "famA", -1.25},
                                    {"mal_1", "famA", -0.5},
                                    {"ben_0", "benign", -3.75}};
  std::ostringstream os;
  write_scores_csv(os, rows);
  std::istringstream is(os.str());
  auto back = read_scores_csv(is);
  REQUIRE(back.size() == 3);
  REQUIRE(back[0].sample_id == "mal_0");
  REQUIRE(back[0].label == "famA");
  REQUIRE(back[0].score == -1.25);
  ScoreSet s = score_set_from_labeled(back);
  REQUIRE(s.positives.size() == 2);
  REQUIRE(s.negatives.size() == 1);

  std::istringstream bad("a,b\n");
  REQUIRE_THROWS(read_scores_csv(bad));
}

TEST_CASE("curve CSV carries a self-describing header") {
  Curve roc = roc_curve(worked_example());
  std::ostringstream os;
  write_curve_csv(os, roc, 10, "cafecafecafecafe");
  std::string text = os.str();
  REQUIRE(text.find("# kind=roc auc=") == 0);
  REQUIRE(text.find("expand=10") != std::string::npos);
  REQUIRE(text.find("config=cafecafecafecafe") != std::string::npos);
  REQUIRE(text.find("0.2,0.7") != std::string::npos);
}
