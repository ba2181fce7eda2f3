#pragma once

// Deterministic persona-pattern prompts: persona preamble, question, rubric,
// output format, few-shot exemplars (optionally with reasoning), and a slot
// for the response under evaluation.

#include <cstddef>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "rubric_loop/core_model.hpp"

namespace rubric_loop {

enum class PromptMode { kZeroShot, kFewShot, kFewShotCot };

std::string to_string(PromptMode mode);
PromptMode parse_prompt_mode(std::string_view s);

// kMinConstraint: at least one positive and one negative exemplar per
// subscore. kUniform additionally keeps |pos - neg| <= 1. kEmpirical keeps
// each subscore's positive count within one exemplar of a target rate.
enum class BalanceStrategy { kMinConstraint, kUniform, kEmpirical };

std::string to_string(BalanceStrategy strategy);
BalanceStrategy parse_balance_strategy(std::string_view s);

struct BalanceTarget {
  BalanceStrategy strategy = BalanceStrategy::kMinConstraint;
  // kEmpirical only: subscore name -> positive rate in the dataset.
  std::map<std::string, double> positive_rate;

  bool operator==(const BalanceTarget&) const = default;
};

struct PromptSpec {
  Rubric rubric;
  std::string persona_preamble;
  std::vector<CotExemplar> exemplars;
  PromptMode mode = PromptMode::kZeroShot;
  std::string format_instructions;
  BalanceTarget balance;
  // Permits rendering a few-shot prompt whose balance check fails. The
  // balance report is still produced and persisted.
  bool allow_unbalanced = false;

  bool operator==(const PromptSpec&) const = default;
};

struct ClassCounts {
  int positives = 0;
  int negatives = 0;

  bool operator==(const ClassCounts&) const = default;
};

struct BalanceReport {
  std::map<std::string, ClassCounts> per_subscore;
  bool satisfied = false;
  std::vector<std::string> violations;
  // Number of unmet balance units; 0 iff satisfied.
  int deficit = 0;

  bool operator==(const BalanceReport&) const = default;
};

struct PromptText {
  std::string text;

  std::string digest() const;
  bool operator==(const PromptText&) const = default;
};

struct RenderOptions {
  std::optional<std::size_t> token_budget;
};

inline constexpr std::string_view kExemplarDelimiter = "### EXAMPLE";
inline constexpr std::string_view kTargetHeader = "### STUDENT RESPONSE TO SCORE";
inline constexpr std::string_view kResponseSlot = "{{STUDENT_RESPONSE}}";

BalanceReport check_balance(std::span<const CotExemplar> exemplars, const Rubric& rubric,
                            const BalanceTarget& target = {});

/// Renders the prompt. Throws ValidationError on spec invariant violations,
/// on an unbalanced few-shot spec (unless spec.allow_unbalanced), and GatewayError
/// budget_exceeded when the estimate exceeds `options.token_budget`.
PromptText render_prompt(const PromptSpec& spec, const RenderOptions& options = {});

// Reasoning for every subscore followed by the score block.
std::string render_cot_block(const CotExemplar& exemplar, const Rubric& rubric);

// Score block only, for few-shot prompts without reasoning.
std::string render_score_only_block(const CotExemplar& exemplar, const Rubric& rubric);

// ceil(UTF-8 code points / 4).
std::size_t estimate_tokens(std::string_view text);

// Substitutes {question}, {rubric} and {subscore_list}.
std::string apply_template(std::string_view tpl, const Rubric& rubric);

std::string default_persona_template();
std::string default_format_template();

// Full prompt for one response: the slot replaced by the response text.
std::string fill_response_slot(const PromptText& prompt, const StudentResponse& response);

// The response text following the target header of a filled prompt.
std::optional<std::string> extract_target_response(std::string_view prompt);

/// Picks up to `max_count` exemplars from `pool` (kept in pool order) so that
/// the min-constraint balance is met with as few exemplars as possible:
/// repeatedly takes the exemplar that closes the most open pos/neg gaps,
/// earliest in the pool on ties.
std::vector<CotExemplar> select_balanced(std::span<const CotExemplar> pool, const Rubric& rubric,
                                         std::size_t max_count);

std::string prompt_spec_digest(const PromptSpec& spec);

void to_json(nlohmann::json& j, const BalanceTarget& t);
void from_json(const nlohmann::json& j, BalanceTarget& t);
void to_json(nlohmann::json& j, const PromptSpec& s);
void from_json(const nlohmann::json& j, PromptSpec& s);
void to_json(nlohmann::json& j, const BalanceReport& r);
void from_json(const nlohmann::json& j, BalanceReport& r);

}  // namespace rubric_loop
