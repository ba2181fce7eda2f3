#include "doctest.h"
#include "rubric_loop/core_model.hpp"
#include "rubric_loop/errors.hpp"
#include "support/generators.hpp"

using namespace rubric_loop;

namespace {

Rubric two_subscores() {
  return make_rubric("q1", "What happens?", {{"a", SubscoreKind::kConcept, "States A.", 1},
                                             {"b", SubscoreKind::kReasoning, "Explains B.", 1}});
}

}  // namespace

TEST_SUITE("core_model") {
  TEST_CASE("a well-formed rubric has no violations") {
    CHECK(rubric_violations(two_subscores()).empty());
    CHECK(two_subscores().max_total == 2);
  }

  TEST_CASE("rubric violations") {
    Rubric r = two_subscores();
    r.subscores.push_back({"A", SubscoreKind::kConcept, "dup", 1});
    r.max_total = 3;
    auto v = rubric_violations(r);
    REQUIRE(v.size() == 1);
    CHECK(v[0].find("duplicate") != std::string::npos);

    Rubric empty = make_rubric("q", "t", {});
    CHECK_FALSE(rubric_violations(empty).empty());

    Rubric too_many = make_rubric("q", "t", {});
    for (int i = 0; i < 9; ++i) too_many.subscores.push_back({"s" + std::to_string(i), SubscoreKind::kConcept, "c", 1});
    too_many.max_total = 9;
    CHECK_FALSE(rubric_violations(too_many).empty());

    Rubric spaced = make_rubric("q", "t", {{"has space", SubscoreKind::kConcept, "c", 1}});
    CHECK_THROWS_AS(require_valid(spaced), ValidationError);

    Rubric two_points = make_rubric("q", "t", {{"a", SubscoreKind::kConcept, "c", 2}});
    CHECK_FALSE(rubric_violations(two_points).empty());
  }

  TEST_CASE("subscore names fold case and spaces") {
    CHECK(fold_subscore_name("Level Unchanged") == "level_unchanged");
    CHECK(fold_subscore_name("mass_conservation") == "mass_conservation");
  }

  TEST_CASE("response text keeps inner text verbatim") {
    CHECK(normalize_response_text("  Teh Water  rises \n") == "Teh Water  rises");
    CHECK(normalize_response_text(" \t\n").empty());
    CHECK_FALSE(response_violations({"r1", "q1", "   "}).empty());
    CHECK(response_violations({"r1", "q1", "ok"}).empty());
  }

  TEST_CASE("score vector validation") {
    const Rubric r = two_subscores();
    CHECK(validate_score_vector(make_score_vector("x", {{"a", 1}, {"b", 0}}), r).empty());

    auto missing = validate_score_vector(make_score_vector("x", {{"a", 1}}), r);
    REQUIRE(missing.size() == 1);
    CHECK(missing[0] == "missing subscore b");

    ScoreVector bad_total = make_score_vector("x", {{"a", 1}, {"b", 0}});
    bad_total.total = 2;
    CHECK(validate_score_vector(bad_total, r) ==
          std::vector<std::string>{"total mismatch: declared 2, sum 1"});

    auto non_binary = validate_score_vector(make_score_vector("x", {{"a", 2}, {"b", 0}}), r);
    CHECK(non_binary.size() == 1);

    auto unknown = validate_score_vector(make_score_vector("x", {{"a", 1}, {"b", 0}, {"c", 1}}), r);
    CHECK(unknown.size() == 1);
  }

  TEST_CASE("total is the sum of subscores") {
    gen::Gen g(11);
    for (int i = 0; i < 100; ++i) {
      const Rubric r = g.rubric();
      const auto e = g.exemplar(r, "r" + std::to_string(i));
      int sum = 0;
      for (const auto& [k, v] : e.gold.by_subscore) sum += v;
      CHECK(e.gold.total == sum);
      CHECK(e.gold.total <= r.max_total);
      CHECK(validate_score_vector(e.gold, r).empty());
    }
  }

  TEST_CASE("rater violations name the rater and response") {
    RaterScores rater{"alice", {make_score_vector("r1", {{"a", 1}, {"b", 1}}),
                                make_score_vector("r1", {{"a", 1}, {"b", 1}})}};
    auto v = rater_violations(rater, two_subscores());
    REQUIRE(v.size() == 1);
    CHECK(v[0].find("alice") != std::string::npos);
  }

  TEST_CASE("exemplar reasoning requirements") {
    const Rubric r = two_subscores();
    CotExemplar e;
    e.response = {"r1", "q1", "text"};
    e.gold = make_score_vector("r1", {{"a", 1}, {"b", 0}});
    e.reasoning = {{"a", "because"}};
    CHECK(exemplar_violations(e, r, false).empty());
    CHECK(exemplar_violations(e, r, true).size() == 1);
    CHECK_FALSE(e.has_full_reasoning(r));
    e.reasoning["b"] = "  ";
    CHECK_FALSE(exemplar_violations(e, r, false).empty());
    e.reasoning["b"] = "no mention";
    CHECK(e.has_full_reasoning(r));
  }

  TEST_CASE("reasoning template has three parts in order") {
    const std::string s = compose_reasoning("it stays level", "States A.", 1);
    CHECK(s ==
          "The student says \"it stays level\". The rubric states \"States A.\". Based on the rubric, "
          "the student earned a score of 1.");
  }

  TEST_CASE("JSON round trips") {
    gen::Gen g(5);
    for (int i = 0; i < 30; ++i) {
      const Rubric r = g.rubric();
      const nlohmann::json jr = r;
      CHECK(jr.get<Rubric>() == r);
      auto e = g.exemplar(r, "id" + std::to_string(i));
      e.source = static_cast<ExemplarSource>(i % 3);
      const nlohmann::json je = e;
      CHECK(je.get<CotExemplar>() == e);
    }
    Generation gen{"abc", "raw", "gpt-4", 12, {3, 4}, 2};
    const nlohmann::json jg = gen;
    CHECK(jg.get<Generation>() == gen);
  }

  TEST_CASE("unknown enum strings are rejected") {
    nlohmann::json j = {{"name", "a"}, {"kind", "vibes"}, {"criteria", "c"}, {"points", 1}};
    CHECK_THROWS_AS(j.get<Subscore>(), ValidationError);
  }
}
