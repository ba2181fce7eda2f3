#pragma once

// Domain values shared by every module. Plain data plus validation; no I/O.

#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

namespace rubric_loop {

enum class SubscoreKind { kConcept, kReasoning };

/// One binary rubric item. Every item is worth exactly one point.
struct Subscore {
  std::string name;
  SubscoreKind kind = SubscoreKind::kConcept;
  std::string criteria;
  int points = 1;

  bool operator==(const Subscore&) const = default;
};

/// The scoring contract for one question: 1 to 8 binary subscores, in the
/// order they are presented to raters and to the model.
struct Rubric {
  std::string question_id;
  std::string question_text;
  std::vector<Subscore> subscores;
  int max_total = 0;

  std::vector<std::string> subscore_names() const;
  const Subscore* find(std::string_view name) const;

  bool operator==(const Rubric&) const = default;
};

inline constexpr std::size_t kMaxSubscores = 8;

// Builds a rubric with max_total derived from the subscore count.
Rubric make_rubric(std::string question_id, std::string question_text,
                   std::vector<Subscore> subscores);

std::vector<std::string> rubric_violations(const Rubric& rubric);
// Throws ValidationError listing every violation.
void require_valid(const Rubric& rubric);

/// Lowercase and fold spaces to underscores. Used to match subscore names
/// written by a model against rubric names.
std::string fold_subscore_name(std::string_view name);

struct StudentResponse {
  std::string id;
  std::string question_id;
  std::string text;

  bool operator==(const StudentResponse&) const = default;
};

// Trims outer whitespace only. Casing and spelling inside are preserved.
std::string normalize_response_text(std::string_view text);

std::vector<std::string> response_violations(const StudentResponse& response);

using SubscoreValues = std::map<std::string, int>;

struct ScoreVector {
  std::string response_id;
  SubscoreValues by_subscore;
  int total = 0;

  bool operator==(const ScoreVector&) const = default;
};

ScoreVector make_score_vector(std::string response_id, SubscoreValues values);

int total_of(const ScoreVector& v);

/// Every invariant violation of `v` against `rubric`: missing or extra
/// subscores, non-binary values and a declared total that differs from the
/// sum. An empty result means the vector is valid.
std::vector<std::string> validate_score_vector(const ScoreVector& v, const Rubric& rubric);

struct RaterScores {
  std::string rater_id;
  std::vector<ScoreVector> scores;

  bool operator==(const RaterScores&) const = default;
};

std::vector<std::string> rater_violations(const RaterScores& rater, const Rubric& rubric);

enum class ExemplarSource { kIrrAgreed, kIrrDisagreedConsensus, kActiveLearning };

using ReasoningMap = std::map<std::string, std::string>;

/// A labeled response with per-subscore reasoning text of the form
/// evidence quote, rubric reference, verdict.
struct CotExemplar {
  StudentResponse response;
  ScoreVector gold;
  ReasoningMap reasoning;
  ExemplarSource source = ExemplarSource::kIrrAgreed;

  bool has_full_reasoning(const Rubric& rubric) const;

  bool operator==(const CotExemplar&) const = default;
};

std::vector<std::string> exemplar_violations(const CotExemplar& exemplar, const Rubric& rubric,
                                             bool require_reasoning);

// Composes one reasoning paragraph from its three parts.
std::string compose_reasoning(std::string_view evidence, std::string_view rubric_reference,
                              int score);

struct TokenUsage {
  int prompt = 0;
  int completion = 0;

  bool operator==(const TokenUsage&) const = default;
};

/// A model completion, kept verbatim for audit.
struct Generation {
  std::string prompt_hash;
  std::string raw_text;
  std::string model_id;
  std::int64_t latency_ms = 0;
  TokenUsage usage;
  int attempts = 1;

  bool operator==(const Generation&) const = default;
};

std::string to_string(SubscoreKind kind);
std::string to_string(ExemplarSource source);

void to_json(nlohmann::json& j, const Subscore& s);
void from_json(const nlohmann::json& j, Subscore& s);
void to_json(nlohmann::json& j, const Rubric& r);
void from_json(const nlohmann::json& j, Rubric& r);
void to_json(nlohmann::json& j, const StudentResponse& r);
void from_json(const nlohmann::json& j, StudentResponse& r);
void to_json(nlohmann::json& j, const ScoreVector& v);
void from_json(const nlohmann::json& j, ScoreVector& v);
void to_json(nlohmann::json& j, const RaterScores& r);
void from_json(const nlohmann::json& j, RaterScores& r);
void to_json(nlohmann::json& j, const CotExemplar& e);
void from_json(const nlohmann::json& j, CotExemplar& e);
void to_json(nlohmann::json& j, const TokenUsage& u);
void from_json(const nlohmann::json& j, TokenUsage& u);
void to_json(nlohmann::json& j, const Generation& g);
void from_json(const nlohmann::json& j, Generation& g);

}  // namespace rubric_loop
