#include <cmath>
#include <limits>
#include <vector>

#include "doctest.h"
#include "rubric_loop/errors.hpp"
#include "rubric_loop/metrics.hpp"
#include "support/generators.hpp"
#include "support/oracles.hpp"

using namespace rubric_loop;

TEST_SUITE("metrics") {
  TEST_CASE("accuracy counts matches") {
    const std::vector<int> pred{1, 0, 0, 1}, gold{1, 0, 1, 1};
    CHECK(accuracy(pred, gold) == doctest::Approx(0.75));
  }

  TEST_CASE("macro f1 hand values") {
    const std::vector<int> gold{1, 0, 1, 1}, pred{1, 0, 0, 1};
    // class 1: tp 2, fp 0, fn 1 -> 0.8; class 0: tp 1, fp 1, fn 0 -> 2/3
    CHECK(std::abs(macro_f1(pred, gold) - (0.8 + 2.0 / 3.0) / 2.0) < 1e-12);
    const auto per = per_class_f1(pred, gold);
    CHECK(per.at(1) == doctest::Approx(0.8));
    CHECK(per.at(0) == doctest::Approx(2.0 / 3.0));
  }

  TEST_CASE("macro f1 counts undefined classes as zero") {
    const std::vector<int> gold{1, 1, 1}, pred{0, 0, 0};
    CHECK(macro_f1(pred, gold) == 0.0);
  }

  TEST_CASE("cohen kappa hand value") {
    const std::vector<int> a{1, 1, 0, 0, 1}, b{1, 0, 0, 0, 1};
    // p_o = 0.8, p_e = 0.6*0.4 + 0.4*0.6 = 0.48
    CHECK(std::abs(cohen_kappa(a, b) - (0.8 - 0.48) / (1 - 0.48)) < 1e-12);
  }

  TEST_CASE("qwk of a full reversal is -1") {
    const std::vector<int> a{0, 0, 1, 1}, b{1, 1, 0, 0};
    CHECK(quadratic_weighted_kappa(a, b, 0, 1) == doctest::Approx(-1.0));
  }

  TEST_CASE("perfect agreement with a single class is 1") {
    const std::vector<int> a{1, 1, 1};
    CHECK(cohen_kappa(a, a) == 1.0);
    CHECK(quadratic_weighted_kappa(a, a, 0, 1) == 1.0);
  }

  TEST_CASE("qwk matches the brute-force oracle") {
    gen::Gen g(20240601);
    int checked = 0;
    while (checked < 500) {
      const auto n = static_cast<std::size_t>(g.integer(1, 50));
      const auto a = g.labels(n, 0, 4);
      const auto b = g.labels(n, 0, 4);
      if (oracle::qwk_expected(a, b) == 0.0) continue;
      CHECK(std::abs(quadratic_weighted_kappa(a, b, 0, 4) - oracle::qwk(a, b, 0, 4)) < 1e-12);
      ++checked;
    }
  }

  TEST_CASE("kappa matches the p_o / p_e oracle") {
    gen::Gen g(7);
    int checked = 0;
    while (checked < 300) {
      const auto n = static_cast<std::size_t>(g.integer(2, 40));
      const auto a = g.labels(n, 0, 1);
      const auto b = g.labels(n, 0, 1);
      if (oracle::qwk_expected(a, b) == 0.0) continue;
      CHECK(std::abs(cohen_kappa(a, b) - oracle::kappa(a, b, 0, 1)) < 1e-12);
      CHECK(quadratic_weighted_kappa(a, b, 0, 1) == doctest::Approx(cohen_kappa(a, b)).epsilon(1e-12));
      ++checked;
    }
  }

  TEST_CASE("macro f1 matches the oracle") {
    gen::Gen g(99);
    for (int i = 0; i < 300; ++i) {
      const auto n = static_cast<std::size_t>(g.integer(1, 30));
      const auto p = g.labels(n, 0, 1);
      const auto t = g.labels(n, 0, 1);
      CHECK(std::abs(macro_f1(p, t) - oracle::macro_f1(p, t)) < 1e-12);
    }
  }

  TEST_CASE("metric bounds and symmetry") {
    gen::Gen g(3);
    for (int i = 0; i < 200; ++i) {
      const auto n = static_cast<std::size_t>(g.integer(1, 30));
      const auto a = g.labels(n, 0, 4);
      const auto b = g.labels(n, 0, 4);
      const double q = quadratic_weighted_kappa(a, b, 0, 4);
      CHECK(q <= 1.0 + 1e-12);
      CHECK(q >= -1.0 - 1e-12);
      CHECK(q == doctest::Approx(quadratic_weighted_kappa(b, a, 0, 4)).epsilon(1e-12));
      CHECK(quadratic_weighted_kappa(a, a, 0, 4) == 1.0);
      const double acc = accuracy(a, b);
      CHECK(acc >= 0.0);
      CHECK(acc <= 1.0);
    }
  }

  TEST_CASE("agreement bands") {
    CHECK(agreement_band(0.68) == AgreementBand::kModerate);
    CHECK(agreement_band(0.60) == AgreementBand::kModerate);
    CHECK(agreement_band(0.59) == AgreementBand::kNoneToWeak);
    CHECK(agreement_band(0.80) == AgreementBand::kStrong);
    CHECK(agreement_band(0.90) == AgreementBand::kStrong);
    CHECK(agreement_band(0.91) == AgreementBand::kAlmostPerfect);
    CHECK(agreement_band(0.95) == AgreementBand::kAlmostPerfect);
    CHECK(agreement_band(-0.5) == AgreementBand::kNoneToWeak);
    CHECK_THROWS_AS(agreement_band(1.5), ValidationError);
    CHECK_THROWS_AS(agreement_band(std::numeric_limits<double>::quiet_NaN()), ValidationError);
    CHECK(to_string(AgreementBand::kAlmostPerfect) == "almost_perfect");
  }

  TEST_CASE("input errors") {
    const std::vector<int> two{0, 1}, three{0, 1, 1}, empty{}, bad{0, 7};
    CHECK_THROWS_WITH_AS(accuracy(two, three), doctest::Contains("length"), ValidationError);
    CHECK_THROWS_AS(macro_f1(empty, empty), ValidationError);
    CHECK_THROWS_AS(quadratic_weighted_kappa(bad, two, 0, 4), ValidationError);
    CHECK_THROWS_AS(cohen_kappa(empty, empty), ValidationError);
    try {
      accuracy(two, three);
    } catch (const ValidationError& e) {
      CHECK(e.code() == "length_mismatch");
    }
  }

  TEST_CASE("trend direction") {
    CHECK(trend_direction(5, 1) == TrendDirection::kOverscoring);
    CHECK(trend_direction(1, 5) == TrendDirection::kUnderscoring);
    CHECK(trend_direction(2, 2) == TrendDirection::kBalanced);
    const std::vector<int> pred{1, 1, 0, 1}, gold{0, 0, 0, 1};
    const auto t = error_trend(pred, gold, "a");
    CHECK(t.fp_count == 2);
    CHECK(t.fn_count == 0);
    CHECK(t.direction == TrendDirection::kOverscoring);
  }

  TEST_CASE("evaluate_scores aligns by id and uses the total range") {
    const Rubric rubric = make_rubric("q", "Q?", {{"a", SubscoreKind::kConcept, "A", 1},
                                                  {"b", SubscoreKind::kReasoning, "B", 1}});
    std::vector<ScoreVector> gold{make_score_vector("r1", {{"a", 1}, {"b", 1}}),
                                  make_score_vector("r2", {{"a", 0}, {"b", 1}}),
                                  make_score_vector("r3", {{"a", 0}, {"b", 0}})};
    std::vector<ScoreVector> pred{gold[2], gold[0], make_score_vector("r2", {{"a", 1}, {"b", 1}})};
    const auto report = evaluate_scores(pred, gold, rubric);
    REQUIRE(report.by_subscore.size() == 2);
    CHECK(report.by_subscore[0].subscore == "a");
    CHECK(report.find("a")->accuracy == doctest::Approx(2.0 / 3.0));
    CHECK(report.find("b")->accuracy == 1.0);
    // Totals in id order r1, r2, r3, over the range [0, max_total].
    const std::vector<int> pt{2, 2, 0}, gt{2, 1, 0};
    CHECK(std::abs(report.total.qwk - oracle::qwk(pt, gt, 0, 2)) < 1e-12);
    CHECK(report.total.n == 3);

    std::vector<ScoreVector> missing{gold[0], gold[1]};
    CHECK_THROWS_AS(evaluate_scores(missing, gold, rubric), ValidationError);
  }

  TEST_CASE("metric report JSON round trip") {
    const std::vector<int> p{1, 0, 1}, t{1, 1, 1};
    const auto r = metric_report(p, t, 0, 1);
    const nlohmann::json j = r;
    CHECK(j.get<MetricReport>() == r);
  }
}
