#include "rubric_loop/prompt_builder.hpp"

#include <cmath>
#include <set>

#include <fmt/format.h>

#include "rubric_loop/digest.hpp"
#include "rubric_loop/errors.hpp"
#include "rubric_loop/score_parser.hpp"

namespace rubric_loop {

namespace {

void replace_all(std::string& s, std::string_view from, std::string_view to) {
  std::size_t pos = 0;
  while ((pos = s.find(from, pos)) != std::string::npos) {
    s.replace(pos, from.size(), to);
    pos += to.size();
  }
}

std::string render_rubric_list(const Rubric& rubric) {
  std::string out;
  for (const auto& s : rubric.subscores) {
    if (!out.empty()) out += '\n';
    out += fmt::format("- {} ({}, 1 point): {}", s.name, to_string(s.kind), s.criteria);
  }
  return out;
}

std::string render_subscore_list(const Rubric& rubric) {
  std::string out;
  for (const auto& s : rubric.subscores) {
    if (!out.empty()) out += ", ";
    out += s.name;
  }
  return out;
}

int deficit_for(const ClassCounts& c, const std::string& name, const BalanceTarget& target,
                std::vector<std::string>& violations) {
  int deficit = 0;
  if (c.positives == 0) {
    ++deficit;
    violations.push_back(fmt::format("subscore {} lacks a positive instance", name));
  }
  if (c.negatives == 0) {
    ++deficit;
    violations.push_back(fmt::format("subscore {} lacks a negative instance", name));
  }
  if (target.strategy == BalanceStrategy::kUniform) {
    const int gap = std::abs(c.positives - c.negatives);
    if (gap > 1) {
      deficit += gap - 1;
      violations.push_back(fmt::format("subscore {} is not uniform: {} positive vs {} negative",
                                       name, c.positives, c.negatives));
    }
  } else if (target.strategy == BalanceStrategy::kEmpirical) {
    auto it = target.positive_rate.find(name);
    if (it == target.positive_rate.end()) {
      throw ValidationError("missing_rate",
                            fmt::format("empirical balance needs a positive rate for {}", name));
    }
    const double expected = it->second * (c.positives + c.negatives);
    const double gap = std::abs(c.positives - expected);
    if (gap > 1.0) {
      deficit += static_cast<int>(std::floor(gap));
      violations.push_back(fmt::format(
          "subscore {} has {} positives, expected {:.2f} from the empirical rate {:.3f}", name,
          c.positives, expected, it->second));
    }
  }
  return deficit;
}

std::string render_exemplar(const CotExemplar& e, const Rubric& rubric, PromptMode mode,
                            std::size_t index) {
  const std::string block = mode == PromptMode::kFewShotCot ? render_cot_block(e, rubric)
                                                            : render_score_only_block(e, rubric);
  return fmt::format("{} {}\nSTUDENT RESPONSE:\n{}\nEVALUATION:\n{}\n\n", kExemplarDelimiter,
                     index, normalize_response_text(e.response.text), block);
}

}  // namespace

std::string to_string(PromptMode mode) {
  switch (mode) {
    case PromptMode::kZeroShot:
      return "zero_shot";
    case PromptMode::kFewShot:
      return "few_shot";
    case PromptMode::kFewShotCot:
      return "few_shot_cot";
  }
  return "unknown";
}

PromptMode parse_prompt_mode(std::string_view s) {
  if (s == "zero_shot") return PromptMode::kZeroShot;
  if (s == "few_shot") return PromptMode::kFewShot;
  if (s == "few_shot_cot") return PromptMode::kFewShotCot;
  throw ValidationError("bad_enum", fmt::format("unknown prompt mode '{}'", s));
}

std::string to_string(BalanceStrategy strategy) {
  switch (strategy) {
    case BalanceStrategy::kMinConstraint:
      return "min_constraint";
    case BalanceStrategy::kUniform:
      return "uniform";
    case BalanceStrategy::kEmpirical:
      return "empirical";
  }
  return "unknown";
}

BalanceStrategy parse_balance_strategy(std::string_view s) {
  if (s == "min_constraint") return BalanceStrategy::kMinConstraint;
  if (s == "uniform") return BalanceStrategy::kUniform;
  if (s == "empirical") return BalanceStrategy::kEmpirical;
  throw ValidationError("bad_enum", fmt::format("unknown balance strategy '{}'", s));
}

std::string PromptText::digest() const { return sha256_hex(text); }

BalanceReport check_balance(std::span<const CotExemplar> exemplars, const Rubric& rubric,
                            const BalanceTarget& target) {
  BalanceReport report;
  for (const auto& s : rubric.subscores) report.per_subscore[s.name] = {};
  for (const auto& e : exemplars) {
    for (const auto& [name, value] : e.gold.by_subscore) {
      auto it = report.per_subscore.find(name);
      if (it == report.per_subscore.end()) continue;
      (value == 1 ? it->second.positives : it->second.negatives) += 1;
    }
  }
  for (const auto& s : rubric.subscores) {
    report.deficit += deficit_for(report.per_subscore[s.name], s.name, target, report.violations);
  }
  report.satisfied = report.deficit == 0;
  return report;
}

std::string render_cot_block(const CotExemplar& exemplar, const Rubric& rubric) {
  return render_score_block(exemplar.gold, rubric, &exemplar.reasoning);
}

std::string render_score_only_block(const CotExemplar& exemplar, const Rubric& rubric) {
  return render_score_block(exemplar.gold, rubric, nullptr);
}

std::size_t estimate_tokens(std::string_view text) {
  std::size_t code_points = 0;
  for (char c : text) {
    if ((static_cast<unsigned char>(c) & 0xC0) != 0x80) ++code_points;
  }
  return (code_points + 3) / 4;
}

std::string apply_template(std::string_view tpl, const Rubric& rubric) {
  std::string out(tpl);
  replace_all(out, "{question}", rubric.question_text);
  replace_all(out, "{rubric}", render_rubric_list(rubric));
  replace_all(out, "{subscore_list}", render_subscore_list(rubric));
  return out;
}

std::string default_persona_template() {
  return "You are a middle school science teacher scoring your students' short answers to a "
         "formative assessment question. Use the rubric to decide whether the student's response "
         "earns each point, and explain every decision with evidence from the response.";
}

std::string default_format_template() {
  return "Score the student response on every rubric subscore in this order: {subscore_list}.\n"
         "For each subscore write one line `SUBSCORE <name>: <0 or 1>` followed by one line "
         "`REASONING: <text>`. In the reasoning, quote the student's response as evidence, state "
         "what the rubric requires, then state the score.\n"
         "After the last subscore write one line `TOTAL: <sum of the subscores>` and nothing "
         "else.";
}

PromptText render_prompt(const PromptSpec& spec, const RenderOptions& options) {
  std::vector<std::string> violations = rubric_violations(spec.rubric);
  if (spec.mode == PromptMode::kZeroShot && !spec.exemplars.empty()) {
    violations.push_back("zero_shot prompt must not carry exemplars");
  }
  std::set<std::string> ids;
  for (const auto& e : spec.exemplars) {
    for (auto& v : exemplar_violations(e, spec.rubric, spec.mode == PromptMode::kFewShotCot)) {
      violations.push_back(std::move(v));
    }
    if (e.response.question_id != spec.rubric.question_id) {
      violations.push_back(fmt::format("exemplar {} belongs to question {}, not {}",
                                       e.response.id, e.response.question_id,
                                       spec.rubric.question_id));
    }
    if (!ids.insert(e.response.id).second) {
      violations.push_back("duplicate exemplar " + e.response.id);
    }
  }
  for (std::string_view tpl : {std::string_view(spec.persona_preamble),
                               std::string_view(spec.format_instructions)}) {
    if (tpl.find(kExemplarDelimiter) != std::string_view::npos ||
        tpl.find(kResponseSlot) != std::string_view::npos ||
        tpl.find(kTargetHeader) != std::string_view::npos) {
      violations.push_back("template text contains a reserved prompt delimiter");
    }
  }
  if (!violations.empty()) throw ValidationError(std::move(violations), "invalid_prompt_spec");

  if (spec.mode != PromptMode::kZeroShot && !spec.allow_unbalanced) {
    auto report = check_balance(spec.exemplars, spec.rubric, spec.balance);
    if (!report.satisfied) throw ValidationError(report.violations, "unbalanced_prompt");
  }

  std::string text;
  text += apply_template(spec.persona_preamble, spec.rubric);
  text += "\n\nQUESTION:\n";
  text += spec.rubric.question_text;
  text += "\n\nRUBRIC:\n";
  text += render_rubric_list(spec.rubric);
  text += "\n\nOUTPUT FORMAT:\n";
  text += apply_template(spec.format_instructions, spec.rubric);
  text += "\n\n";
  for (std::size_t i = 0; i < spec.exemplars.size(); ++i) {
    text += render_exemplar(spec.exemplars[i], spec.rubric, spec.mode, i + 1);
  }
  text += kTargetHeader;
  text += '\n';
  text += kResponseSlot;
  text += '\n';

  if (options.token_budget) {
    const auto estimate = estimate_tokens(text);
    if (estimate > *options.token_budget) {
      throw GatewayError(GatewayErrorKind::kBudgetExceeded,
                         fmt::format("prompt estimate of {} tokens exceeds the budget of {}",
                                     estimate, *options.token_budget));
    }
  }
  return PromptText{std::move(text)};
}

std::string fill_response_slot(const PromptText& prompt, const StudentResponse& response) {
  std::string out = prompt.text;
  const auto pos = out.rfind(kResponseSlot);
  if (pos == std::string::npos) {
    throw ValidationError("missing_slot", "prompt has no response slot");
  }
  out.replace(pos, kResponseSlot.size(), normalize_response_text(response.text));
  return out;
}

std::optional<std::string> extract_target_response(std::string_view prompt) {
  const auto pos = prompt.rfind(kTargetHeader);
  if (pos == std::string_view::npos) return std::nullopt;
  return normalize_response_text(prompt.substr(pos + kTargetHeader.size()));
}

std::vector<CotExemplar> select_balanced(std::span<const CotExemplar> pool, const Rubric& rubric,
                                         std::size_t max_count) {
  // Open gaps: (subscore, value) pairs not yet represented.
  std::set<std::pair<std::string, int>> open;
  for (const auto& s : rubric.subscores) {
    open.insert({s.name, 0});
    open.insert({s.name, 1});
  }
  std::vector<bool> taken(pool.size(), false);
  std::size_t count = 0;
  while (count < max_count && !open.empty()) {
    std::size_t best = pool.size();
    std::size_t best_gain = 0;
    for (std::size_t i = 0; i < pool.size(); ++i) {
      if (taken[i]) continue;
      std::size_t gain = 0;
      for (const auto& [name, value] : pool[i].gold.by_subscore) gain += open.count({name, value});
      if (gain > best_gain) {
        best_gain = gain;
        best = i;
      }
    }
    if (best == pool.size()) break;
    taken[best] = true;
    ++count;
    for (const auto& kv : pool[best].gold.by_subscore) open.erase(kv);
  }
  std::vector<CotExemplar> out;
  for (std::size_t i = 0; i < pool.size(); ++i) {
    if (taken[i]) out.push_back(pool[i]);
  }
  return out;
}

using nlohmann::json;

void to_json(json& j, const BalanceTarget& t) {
  j = json{{"strategy", to_string(t.strategy)}, {"positive_rate", t.positive_rate}};
}

void from_json(const json& j, BalanceTarget& t) {
  t.strategy = parse_balance_strategy(j.at("strategy").get<std::string>());
  t.positive_rate = j.value("positive_rate", std::map<std::string, double>{});
}

void to_json(json& j, const PromptSpec& s) {
  j = json{{"rubric", s.rubric},
           {"persona_preamble", s.persona_preamble},
           {"exemplars", s.exemplars},
           {"mode", to_string(s.mode)},
           {"format_instructions", s.format_instructions},
           {"balance", s.balance},
           {"allow_unbalanced", s.allow_unbalanced}};
}

void from_json(const json& j, PromptSpec& s) {
  j.at("rubric").get_to(s.rubric);
  j.at("persona_preamble").get_to(s.persona_preamble);
  j.at("exemplars").get_to(s.exemplars);
  s.mode = parse_prompt_mode(j.at("mode").get<std::string>());
  j.at("format_instructions").get_to(s.format_instructions);
  if (j.contains("balance")) j.at("balance").get_to(s.balance);
  s.allow_unbalanced = j.value("allow_unbalanced", false);
}

void to_json(json& j, const BalanceReport& r) {
  json per = json::object();
  for (const auto& [name, c] : r.per_subscore) {
    per[name] = {{"positives", c.positives}, {"negatives", c.negatives}};
  }
  j = json{{"per_subscore", per},
           {"satisfied", r.satisfied},
           {"violations", r.violations},
           {"deficit", r.deficit}};
}

void from_json(const json& j, BalanceReport& r) {
  r.per_subscore.clear();
  for (const auto& [name, c] : j.at("per_subscore").items()) {
    r.per_subscore[name] = {c.at("positives").get<int>(), c.at("negatives").get<int>()};
  }
  j.at("satisfied").get_to(r.satisfied);
  j.at("violations").get_to(r.violations);
  j.at("deficit").get_to(r.deficit);
}

std::string prompt_spec_digest(const PromptSpec& spec) { return digest_of(json(spec)); }

}  // namespace rubric_loop
