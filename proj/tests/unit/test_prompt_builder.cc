#include "doctest.h"
#include "rubric_loop/errors.hpp"
#include "rubric_loop/prompt_builder.hpp"
#include "rubric_loop/score_parser.hpp"
#include "support/generators.hpp"
#include "support/toy.hpp"

using namespace rubric_loop;

namespace {

PromptSpec cot_spec() {
  const Rubric r = toy::rubric();
  PromptSpec s;
  s.rubric = r;
  s.persona_preamble = default_persona_template();
  s.format_instructions = apply_template(default_format_template(), r);
  s.mode = PromptMode::kFewShotCot;
  s.exemplars = {toy::made(r, "e1", {1, 0, 1}), toy::made(r, "e2", {0, 1, 0})};
  return s;
}

}  // namespace

TEST_SUITE("prompt_builder") {
  TEST_CASE("sections appear in order") {
    const std::string text = render_prompt(cot_spec()).text;
    const auto persona = text.find("middle school science teacher");
    const auto question = text.find("QUESTION:\nWhy does the ice float?");
    const auto rubric = text.find("RUBRIC:\n- a (concept, 1 point): Names density.");
    const auto format = text.find("OUTPUT FORMAT:");
    const auto ex1 = text.find("### EXAMPLE 1\nSTUDENT RESPONSE:\nresponse e1\nEVALUATION:\nSUBSCORE a: 1\nREASONING: reason e1");
    const auto ex2 = text.find("### EXAMPLE 2");
    const auto target = text.find("### STUDENT RESPONSE TO SCORE\n{{STUDENT_RESPONSE}}\n");
    REQUIRE(persona != std::string::npos);
    REQUIRE(question != std::string::npos);
    REQUIRE(rubric != std::string::npos);
    REQUIRE(format != std::string::npos);
    REQUIRE(ex1 != std::string::npos);
    REQUIRE(ex2 != std::string::npos);
    REQUIRE(target != std::string::npos);
    CHECK(persona < question);
    CHECK(question < rubric);
    CHECK(rubric < format);
    CHECK(format < ex1);
    CHECK(ex1 < ex2);
    CHECK(ex2 < target);
    CHECK(text.ends_with("{{STUDENT_RESPONSE}}\n"));
  }

  TEST_CASE("rendering is byte-deterministic") {
    const auto a = render_prompt(cot_spec());
    const auto b = render_prompt(cot_spec());
    CHECK(a == b);
    CHECK(a.digest() == b.digest());
    CHECK(prompt_spec_digest(cot_spec()) == prompt_spec_digest(cot_spec()));
    PromptSpec other = cot_spec();
    std::swap(other.exemplars[0], other.exemplars[1]);
    CHECK(render_prompt(other).digest() != a.digest());
  }

  TEST_CASE("every rendered exemplar block parses back to its gold") {
    gen::Gen g(8);
    for (int i = 0; i < 40; ++i) {
      const Rubric r = g.rubric();
      const auto e = g.exemplar(r, "x");
      CHECK(parse_generation(render_cot_block(e, r), r, "x").scores == e.gold);
    }
  }

  TEST_CASE("few-shot without CoT renders score blocks only") {
    PromptSpec s = cot_spec();
    s.mode = PromptMode::kFewShot;
    const std::string text = render_prompt(s).text;
    CHECK(text.find("REASONING: reason e1") == std::string::npos);
    CHECK(text.find("SUBSCORE a: 1") != std::string::npos);
  }

  TEST_CASE("zero-shot has no exemplars") {
    PromptSpec s = cot_spec();
    s.mode = PromptMode::kZeroShot;
    CHECK_THROWS_AS(render_prompt(s), ValidationError);
    s.exemplars.clear();
    CHECK(render_prompt(s).text.find("### EXAMPLE") == std::string::npos);
  }

  TEST_CASE("CoT mode needs reasoning on every subscore") {
    PromptSpec s = cot_spec();
    s.exemplars[0].reasoning.erase("b");
    try {
      render_prompt(s);
      FAIL("no error");
    } catch (const ValidationError& e) {
      CHECK(e.code() == "invalid_prompt_spec");
    }
  }

  TEST_CASE("balance report names the subscore") {
    const Rubric r = toy::rubric();
    std::vector<CotExemplar> ex{toy::made(r, "e1", {1, 1, 1}), toy::made(r, "e2", {0, 1, 0})};
    const auto rep = check_balance(ex, r);
    CHECK_FALSE(rep.satisfied);
    CHECK(rep.deficit == 1);
    REQUIRE(rep.violations.size() == 1);
    CHECK(rep.violations[0] == "subscore b lacks a negative instance");
    CHECK(rep.per_subscore.at("b").positives == 2);

    PromptSpec s = cot_spec();
    s.exemplars = ex;
    try {
      render_prompt(s);
      FAIL("no error");
    } catch (const ValidationError& e) {
      CHECK(e.code() == "unbalanced_prompt");
      CHECK(std::string(e.what()).find("subscore b") != std::string::npos);
    }
    s.allow_unbalanced = true;
    CHECK_NOTHROW(render_prompt(s));
  }

  TEST_CASE("balance property: min constraint holds iff each subscore has both classes") {
    gen::Gen g(21);
    for (int i = 0; i < 200; ++i) {
      const Rubric r = g.rubric(1, 4);
      std::vector<CotExemplar> ex;
      const int n = g.integer(0, 6);
      for (int k = 0; k < n; ++k) ex.push_back(g.exemplar(r, "e" + std::to_string(k)));
      bool expected = true;
      for (const auto& s : r.subscores) {
        bool pos = false, neg = false;
        for (const auto& e : ex) (e.gold.by_subscore.at(s.name) == 1 ? pos : neg) = true;
        expected = expected && pos && neg;
      }
      CHECK(check_balance(ex, r).satisfied == expected);
    }
  }

  TEST_CASE("uniform and empirical strategies") {
    const Rubric r = toy::rubric();
    std::vector<CotExemplar> ex{toy::made(r, "e1", {1, 0, 1}), toy::made(r, "e2", {1, 1, 0}),
                                toy::made(r, "e3", {1, 0, 1}), toy::made(r, "e4", {0, 1, 0})};
    CHECK(check_balance(ex, r).satisfied);
    BalanceTarget uniform{BalanceStrategy::kUniform, {}};
    const auto u = check_balance(ex, r, uniform);
    CHECK_FALSE(u.satisfied);  // a: 3 vs 1
    CHECK(u.deficit == 1);
    BalanceTarget empirical{BalanceStrategy::kEmpirical, {{"a", 0.75}, {"b", 0.5}, {"c", 0.5}}};
    CHECK(check_balance(ex, r, empirical).satisfied);
    BalanceTarget missing{BalanceStrategy::kEmpirical, {{"a", 0.75}}};
    CHECK_THROWS_AS(check_balance(ex, r, missing), ValidationError);
  }

  TEST_CASE("token budget") {
    const auto text = render_prompt(cot_spec()).text;
    const auto estimate = estimate_tokens(text);
    CHECK_NOTHROW(render_prompt(cot_spec(), {estimate}));
    try {
      render_prompt(cot_spec(), {estimate - 1});
      FAIL("no error");
    } catch (const GatewayError& e) {
      CHECK(e.kind() == GatewayErrorKind::kBudgetExceeded);
    }
    CHECK(estimate_tokens("abcd") == 1);
    CHECK(estimate_tokens("abcde") == 2);
    CHECK(estimate_tokens("ééé") == 1);
    CHECK(estimate_tokens("") == 0);
  }

  TEST_CASE("reserved delimiters in templates are rejected") {
    PromptSpec s = cot_spec();
    s.persona_preamble = "hello ### EXAMPLE";
    CHECK_THROWS_AS(render_prompt(s), ValidationError);
  }

  TEST_CASE("response slot fill and extraction") {
    const auto p = render_prompt(cot_spec());
    const std::string filled = fill_response_slot(p, {"t", "q1", "  the ice floats  "});
    CHECK(filled.find("{{STUDENT_RESPONSE}}") == std::string::npos);
    CHECK(extract_target_response(filled) == std::optional<std::string>("the ice floats"));
    CHECK_FALSE(extract_target_response("no header").has_value());
  }

  TEST_CASE("template slots") {
    const std::string out = apply_template("{question}|{subscore_list}", toy::rubric());
    CHECK(out == "Why does the ice float?|a, b, c");
  }

  TEST_CASE("select_balanced closes gaps with few exemplars") {
    const Rubric r = toy::rubric();
    std::vector<CotExemplar> pool{toy::made(r, "p1", {1, 1, 1}), toy::made(r, "p2", {1, 1, 1}),
                                  toy::made(r, "p3", {0, 0, 0}), toy::made(r, "p4", {0, 1, 0})};
    const auto picked = select_balanced(pool, r, 4);
    REQUIRE(picked.size() == 2);
    CHECK(picked[0].response.id == "p1");
    CHECK(picked[1].response.id == "p3");
    CHECK(check_balance(picked, r).satisfied);
  }

  TEST_CASE("spec JSON round trip") {
    const PromptSpec s = cot_spec();
    const nlohmann::json j = s;
    CHECK(j.get<PromptSpec>() == s);
    CHECK(prompt_spec_digest(j.get<PromptSpec>()) == prompt_spec_digest(s));
  }
}
