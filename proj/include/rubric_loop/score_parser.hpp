#pragma once

// The score grammar shared by rendered exemplars and model output:
//
//   SUBSCORE <name>: <0|1>
//   REASONING: <text, running until the next keyword line>
//   ...
//   TOTAL: <int>
//
// Names match rubric names after lowercasing and folding spaces to '_'.
// Prose that is not inside a REASONING block (before the first SUBSCORE
// line, or between a SUBSCORE line and the next one) is attached as
// reasoning to the nearest following SUBSCORE line. The first TOTAL line
// ends the block. FORMAT.md documents the grammar for prompt authors.

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "rubric_loop/core_model.hpp"
#include "rubric_loop/errors.hpp"

namespace rubric_loop {

inline constexpr std::string_view kSubscoreKeyword = "SUBSCORE";
inline constexpr std::string_view kReasoningKeyword = "REASONING";
inline constexpr std::string_view kTotalKeyword = "TOTAL";

enum class ParseErrorKind {
  kMissingSubscore,
  kNonBinaryValue,
  kDuplicateSubscore,
  kUnknownSubscore,
  kMalformedTotal,
};

std::string to_string(ParseErrorKind kind);

class ParseError : public ValidationError {
 public:
  ParseError(ParseErrorKind kind, std::string subscore, int line, const std::string& message)
      : ValidationError(to_string(kind), message),
        kind_(kind),
        subscore_(std::move(subscore)),
        line_(line) {}

  ParseErrorKind kind() const noexcept { return kind_; }
  const std::string& subscore() const noexcept { return subscore_; }
  // 1-based; 0 when the error is not tied to a line.
  int line() const noexcept { return line_; }

 private:
  ParseErrorKind kind_;
  std::string subscore_;
  int line_;
};

// Recoverable problems. The total is recomputed from the subscores.
enum class ParseFlag { kTotalMismatch, kMissingTotal };

std::string to_string(ParseFlag flag);

struct ParsedScore {
  ScoreVector scores;
  ReasoningMap reasoning;
  Generation raw;
  std::vector<ParseFlag> flags;
  // TOTAL as written by the model, if present.
  std::optional<int> declared_total;

  bool flagged(ParseFlag f) const;
  bool operator==(const ParsedScore&) const = default;
};

// True for lines the grammar treats as SUBSCORE, REASONING or TOTAL.
bool is_keyword_line(std::string_view line);

/// Renders `scores` in rubric order. When `reasoning` is given, each
/// SUBSCORE line is followed by its REASONING line; throws ValidationError if
/// a reasoning text is missing or contains a keyword line.
std::string render_score_block(const ScoreVector& scores, const Rubric& rubric,
                               const ReasoningMap* reasoning = nullptr);

ParsedScore parse_generation(std::string_view raw, const Rubric& rubric,
                             std::string response_id = {});
ParsedScore parse_generation(const Generation& generation, const Rubric& rubric,
                             std::string response_id = {});

void to_json(nlohmann::json& j, const ParsedScore& p);
void from_json(const nlohmann::json& j, ParsedScore& p);

}  // namespace rubric_loop
