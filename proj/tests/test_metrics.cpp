#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "json.hpp"
#include "rgc/error.hpp"
#include "rgc/metrics.hpp"

using namespace rgc;
using namespace rgc::metrics;

namespace {

// P(score_pos > score_neg) + ½ P(tie) over all pairs.
double pair_count_auc(const std::vector<double>& s, const std::vector<bool>& y) {
  double num = 0.0, pairs = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (!y[i]) continue;
    for (std::size_t j = 0; j < s.size(); ++j) {
      if (y[j]) continue;
      pairs += 1.0;
      num += s[i] > s[j] ? 1.0 : s[i] == s[j] ? 0.5 : 0.0;
    }
  }
  return num / pairs;
}

// Two-tailed p by integrating the Student-t density over (|t|, inf). With
// x = sqrt(df)·tan(theta) the integrand becomes k·cos^(df-1)(theta) on
// [atan(|t|/sqrt(df)), pi/2], smooth for df >= 1; composite Simpson.
double t_tail_oracle(double t, double df) {
  const double k = std::exp(std::lgamma((df + 1) / 2) - std::lgamma(df / 2)) / std::sqrt(std::numbers::pi);
  const double a = std::atan(std::abs(t) / std::sqrt(df)), b = std::numbers::pi / 2;
  const int steps = 20000;
  const double h = (b - a) / steps;
  auto f = [&](double th) { return k * std::pow(std::cos(th), df - 1.0); };
  double sum = f(a) + f(b);
  for (int i = 1; i < steps; ++i) sum += (i % 2 ? 4.0 : 2.0) * f(a + i * h);
  return 2.0 * sum * h / 3.0;
}

LabelGrid grid_from(const std::vector<int>& v) {
  LabelGrid g(1, static_cast<int>(v.size()), 0);
  for (std::size_t i = 0; i < v.size(); ++i) g(0, static_cast<int>(i)) = static_cast<std::uint8_t>(v[i]);
  return g;
}

}  // namespace

TEST_CASE("confusion metrics fixture") {
  const ConfusionMetrics m = confusion_metrics({34, 22, 2, 1});
  CHECK(*m.accuracy == doctest::Approx(0.9492).epsilon(1e-4));
  CHECK(*m.tpr == doctest::Approx(0.9714).epsilon(1e-4));
  CHECK(*m.ppv == doctest::Approx(0.9444).epsilon(1e-4));
  CHECK(*m.f1 == doctest::Approx(0.9577).epsilon(1e-4));
  CHECK(*m.tnr == doctest::Approx(22.0 / 24.0));
  CHECK(*m.fpr == doctest::Approx(2.0 / 24.0));
}

TEST_CASE("undefined rates stay undefined") {
  const ConfusionMetrics m = confusion_metrics({0, 9, 0, 0});
  CHECK(*m.accuracy == 1.0);
  CHECK_FALSE(m.tpr.has_value());
  CHECK_FALSE(m.ppv.has_value());
  CHECK_FALSE(m.f1.has_value());
  CHECK(*m.tnr == 1.0);
  CHECK_FALSE(confusion_metrics({0, 0, 0, 0}).accuracy.has_value());
  CHECK_THROWS_AS(confusion_metrics({-1, 0, 0, 0}), ValidationError);
}

TEST_CASE("grading accuracy with three errors in 34") {
  const ConfusionMetrics m = confusion_metrics({17, 14, 2, 1});
  CHECK(*m.accuracy == doctest::Approx(31.0 / 34.0));
  CHECK(std::abs(*m.accuracy - 0.9117) < 2e-4);
}

TEST_CASE("confusion tally") {
  const ConfusionCounts c = count_confusion({true, true, false, false, true}, {true, false, false, true, true});
  CHECK(c == ConfusionCounts{2, 1, 1, 1});
  CHECK_THROWS_AS(count_confusion({true}, {}), ValidationError);
}

TEST_CASE("dice and mask precision on pixel-count fixtures") {
  const LabelGrid gt = grid_from({1, 1, 1, 1, 0, 0, 0, 0});
  CHECK(dice(gt, gt, 1) == 1.0);
  CHECK(mask_precision(gt, gt, 1) == 1.0);
  CHECK(dice(grid_from({0, 0, 0, 0, 1, 1, 1, 1}), gt, 1) == 0.0);
  CHECK(dice(grid_from({1, 1, 0, 0, 0, 0, 0, 0}), gt, 1) == doctest::Approx(2.0 / 3.0));

  // Superset prediction: tp = 100, fp = 25.
  std::vector<int> g(200, 0), p(200, 0);
  for (int i = 0; i < 100; ++i) g[i] = p[i] = 2;
  for (int i = 100; i < 125; ++i) p[i] = 2;
  CHECK(dice(grid_from(p), grid_from(g), 2) == doctest::Approx(200.0 / 225.0));
  CHECK(mask_precision(grid_from(p), grid_from(g), 2) == doctest::Approx(0.8));

  // Dice 0.4: tp = 2, fn = 3, fp = 3.
  const LabelGrid low_gt = grid_from({1, 1, 1, 1, 1, 0, 0, 0});
  const LabelGrid low_p = grid_from({0, 0, 0, 1, 1, 1, 1, 1});
  CHECK(dice(low_p, low_gt, 1) == doctest::Approx(0.4));
  CHECK(mask_precision(low_p, low_gt, 1) == 0.0);

  const ClassScore vac = score_class(gt, gt, 2);
  CHECK(vac.vacuous);
  CHECK(vac.dice == 1.0);
  CHECK_THROWS_AS(dice(gt, grid_from({1}), 1), ValidationError);
}

TEST_CASE("dice is symmetric and mask precision is not") {
  std::vector<int> g(200, 0), p(200, 0);
  for (int i = 0; i < 100; ++i) g[i] = p[i] = 1;
  for (int i = 100; i < 125; ++i) p[i] = 1;
  const LabelGrid a = grid_from(p), b = grid_from(g);
  CHECK(dice(a, b, 1) == dice(b, a, 1));
  CHECK(mask_precision(a, b, 1) != mask_precision(b, a, 1));
  std::mt19937_64 rng(1);
  std::uniform_int_distribution<int> lab(0, 2);
  for (int t = 0; t < 20; ++t) {
    std::vector<int> x(50), y(50);
    for (auto& v : x) v = lab(rng);
    for (auto& v : y) v = lab(rng);
    CHECK(dice(grid_from(x), grid_from(y), 1) == dice(grid_from(y), grid_from(x), 1));
  }
}

TEST_CASE("mean dice is the scan-wise mean of per-scan scores") {
  std::mt19937_64 rng(5);
  std::vector<LayerMask> pred, gt;
  for (int s = 0; s < 6; ++s) {
    LabelGrid a(30, 4, 0), b(30, 4, 0);
    std::uniform_int_distribution<int> row(2, 12);
    for (int c = 0; c < 4; ++c) {
      const int r1 = row(rng), r2 = row(rng);
      for (int r = r1; r < r1 + 6; ++r) a(r, c) = 1;
      for (int r = r1 + 6; r < r1 + 12; ++r) a(r, c) = 2;
      for (int r = r2; r < r2 + 5; ++r) b(r, c) = 1;
      for (int r = r2 + 5; r < r2 + 13; ++r) b(r, c) = 2;
    }
    pred.emplace_back(a);
    gt.emplace_back(b);
  }
  // A scan with no GC-IPL anywhere is vacuous for that class and skipped.
  LabelGrid only_rnfl(30, 4, 0);
  only_rnfl(3, 1) = 1;
  pred.emplace_back(only_rnfl);
  gt.emplace_back(only_rnfl);

  const SegmentationScore s = score_segmentation(pred, gt);
  double d1 = 0, d2 = 0;
  for (std::size_t i = 0; i < 7; ++i) d1 += dice(pred[i].labels(), gt[i].labels(), 1);
  for (std::size_t i = 0; i < 6; ++i) d2 += dice(pred[i].labels(), gt[i].labels(), 2);
  REQUIRE(s.per_class.size() == 2);
  CHECK(s.per_class[0].scans == 7);
  CHECK(s.per_class[1].scans == 6);
  CHECK(*s.per_class[0].dice == doctest::Approx(d1 / 7).epsilon(1e-14));
  CHECK(*s.per_class[1].dice == doctest::Approx(d2 / 6).epsilon(1e-14));
  CHECK(*s.mean_dice == doctest::Approx((d1 / 7 + d2 / 6) / 2).epsilon(1e-14));
}

TEST_CASE("ROC basics") {
  const RocCurve perfect = roc({0.9, 0.8, 0.2, 0.1}, {true, true, false, false});
  CHECK(perfect.auc == 1.0);
  CHECK(perfect.points.front().fpr == 0.0);
  CHECK(perfect.points.back().tpr == 1.0);
  const RocCurve flat = roc({0.5, 0.5, 0.5, 0.5}, {true, false, true, false});
  CHECK(flat.auc == 0.5);
  CHECK(flat.points.size() == 2);
  CHECK_THROWS_AS(roc({0.1, 0.2}, {true, true}), ValidationError);
  CHECK_THROWS_AS(roc({0.1}, {true, false}), ValidationError);
}

TEST_CASE("ROC AUC equals pair counting") {
  std::mt19937_64 rng(77);
  for (int inst = 0; inst < 50; ++inst) {
    std::uniform_int_distribution<int> size(2, 500);
    const int n = inst == 0 ? 200 : size(rng);
    std::vector<double> s(static_cast<std::size_t>(n));
    std::vector<bool> y(static_cast<std::size_t>(n));
    std::uniform_int_distribution<int> coarse(0, 20);
    std::bernoulli_distribution coin(0.4);
    for (int i = 0; i < n; ++i) {
      y[i] = i < 2 ? i == 0 : coin(rng);
      s[i] = coarse(rng) / 20.0 + (y[i] ? 0.1 : 0.0);  // coarse scores produce ties
    }
    const RocCurve c = roc(s, y);
    CHECK(std::abs(c.auc - pair_count_auc(s, y)) < 1e-10);
    for (std::size_t k = 1; k < c.points.size(); ++k) {
      CHECK(c.points[k].fpr >= c.points[k - 1].fpr);
      CHECK(c.points[k].tpr >= c.points[k - 1].tpr);
    }
    CHECK(c.points.back().fpr == 1.0);
    CHECK(c.points.back().tpr == 1.0);
  }
}

TEST_CASE("pearson examples") {
  // Deviations (-2,-1,0,1,2) and (-2,0,-1,2,1): sxy = 8, sxx = syy = 10.
  const CorrelationResult a = pearson({1, 2, 3, 4, 5}, {1, 3, 2, 5, 4});
  CHECK(a.r == doctest::Approx(0.8).epsilon(1e-12));
  CHECK(std::abs(a.p_value - 0.1041) < 1e-4);
  CHECK(std::abs(a.p_value - t_tail_oracle(0.8 * std::sqrt(3 / 0.36), 3)) < 1e-8);
  // sxy = 10, sxx = 10, syy = 14.8.
  const CorrelationResult a2 = pearson({1, 2, 3, 4, 5}, {2, 1, 4, 3, 6});
  const double r2 = 10.0 / std::sqrt(148.0);
  CHECK(a2.r == doctest::Approx(r2).epsilon(1e-12));
  CHECK(std::abs(a2.p_value - t_tail_oracle(r2 * std::sqrt(3 / (1 - r2 * r2)), 3)) < 1e-8);
  const CorrelationResult b = pearson({1, 2, 3}, {3, 2, 1});
  CHECK(b.r == -1.0);
  CHECK(b.p_value == 0.0);
  CHECK(pearson({1, 2, 3, 4}, {1, 2, 3, 4}).r == 1.0);
  CHECK_THROWS_AS(pearson({1, 1, 1}, {1, 2, 3}), ValidationError);
  CHECK_THROWS_AS(pearson({1, 2}, {1, 2}), ValidationError);
  CHECK_THROWS_AS(pearson({1, 2, 3}, {1, 2}), ValidationError);
}

TEST_CASE("pearson p-value matches numeric t-tail integration") {
  std::mt19937_64 rng(21);
  std::normal_distribution<double> z(0.0, 1.0);
  std::uniform_int_distribution<int> size(3, 60);
  std::uniform_real_distribution<double> mix(-1.0, 1.0);
  for (int inst = 0; inst < 50; ++inst) {
    const int n = size(rng);
    const double rho = mix(rng);
    std::vector<double> x(static_cast<std::size_t>(n)), y(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
      x[i] = z(rng);
      y[i] = rho * x[i] + std::sqrt(1 - rho * rho) * z(rng);
    }
    const CorrelationResult c = pearson(x, y);
    // Direct product-moment formula.
    double mx = 0, my = 0;
    for (int i = 0; i < n; ++i) {
      mx += x[i] / n;
      my += y[i] / n;
    }
    double sxy = 0, sxx = 0, syy = 0;
    for (int i = 0; i < n; ++i) {
      sxy += (x[i] - mx) * (y[i] - my);
      sxx += (x[i] - mx) * (x[i] - mx);
      syy += (y[i] - my) * (y[i] - my);
    }
    const double r = sxy / std::sqrt(sxx * syy);
    CHECK(std::abs(c.r - r) < 1e-8);
    const double df = n - 2.0;
    const double t = r * std::sqrt(df / (1 - r * r));
    CHECK(std::abs(c.p_value - t_tail_oracle(t, df)) < 1e-8);
  }
}

TEST_CASE("pearson is invariant under positive affine maps") {
  std::mt19937_64 rng(4);
  std::normal_distribution<double> z(0.0, 1.0);
  std::vector<double> x(30), y(30), xa(30), ya(30);
  for (int i = 0; i < 30; ++i) {
    x[i] = z(rng);
    y[i] = 0.5 * x[i] + z(rng);
    xa[i] = 3.0 * x[i] + 10.0;
    ya[i] = 0.2 * y[i] - 4.0;
  }
  CHECK(std::abs(pearson(x, y).r - pearson(xa, ya).r) < 1e-12);
  CHECK(std::abs(pearson(x, y).r) <= 1.0);
}

TEST_CASE("p-value decreases as |r| grows") {
  double prev = 1.1;
  for (double r : {0.0, 0.2, 0.4, 0.6, 0.8, 0.95}) {
    const double t = r * std::sqrt(8 / (1 - r * r));
    const double p = student_t_two_tailed(t, 8);
    CHECK(p < prev);
    prev = p;
  }
  CHECK(student_t_two_tailed(0.0, 8) == doctest::Approx(1.0));
}

TEST_CASE("metric report JSON layout") {
  MetricReport r;
  r.confusion = confusion_metrics({0, 3, 0, 0});
  r.roc = roc({0.9, 0.1}, {true, false});
  r.correlation = pearson({1, 2, 3, 4, 5}, {2, 1, 4, 3, 6});
  r.extra.push_back({"grading_accuracy", 0.5});
  const auto j = nlohmann::json::parse(report_json(r));
  CHECK(j["confusion"]["tn"] == 3);
  CHECK(j["confusion"]["tpr"].is_null());
  CHECK(j["confusion"]["acc"] == 1.0);
  CHECK(j["roc"]["auc"] == 1.0);
  CHECK(j["roc"]["points"].size() == 3);
  CHECK(j["correlation"]["n"] == 5);
  CHECK(j["grading_accuracy"] == 0.5);
  CHECK_FALSE(j.contains("seg"));
  CHECK(report_json(r) == report_json(r));
}
