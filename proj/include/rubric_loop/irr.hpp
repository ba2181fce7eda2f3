#pragma once

// Inter-rater reliability between two human raters: per-subscore Cohen's
// kappa gated at > 0.7, disagreement extraction, consensus resolution, and
// the exemplars that seed the prompt.

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "rubric_loop/core_model.hpp"

namespace rubric_loop {

inline constexpr double kIrrKappaThreshold = 0.7;

struct Disagreement {
  std::string response_id;
  std::string subscore;
  int a_value = 0;
  int b_value = 0;

  bool operator==(const Disagreement&) const = default;
};

struct IrrRound {
  int round_index = 1;
  RaterScores rater_a;
  RaterScores rater_b;
  std::map<std::string, double> kappa_by_subscore;
  // Ordered by response id, then rubric order.
  std::vector<Disagreement> disagreements;
  bool passed = false;
  double threshold = kIrrKappaThreshold;

  bool operator==(const IrrRound&) const = default;
};

struct ConsensusRecord {
  std::string response_id;
  std::string subscore;
  int resolved_value = 0;
  std::string rationale;
  std::vector<std::string> resolved_by;

  bool operator==(const ConsensusRecord&) const = default;
};

/// Seeded sample of ceil(fraction * n) ids: canonical sort, SplitMix64
/// Fisher-Yates shuffle, prefix. Returned sorted.
std::vector<std::string> sample_for_irr(std::span<const std::string> ids, double fraction,
                                        std::uint64_t seed);

// Strict: every kappa must exceed the threshold.
bool gate_passes(const std::map<std::string, double>& kappa_by_subscore, double threshold);

IrrRound compute_round(const RaterScores& a, const RaterScores& b, const Rubric& rubric,
                       int round_index = 1, double threshold = kIrrKappaThreshold);

// Subscores at or below the threshold, in rubric order.
std::vector<std::string> failing_subscores(const IrrRound& round, const Rubric& rubric);

// response id -> subscore -> reasoning text.
using ReasoningDrafts = std::map<std::string, ReasoningMap>;

/// One exemplar per sampled response. Agreed responses come first, then those
/// resolved by consensus, each group by id. Consensus values override both
/// raters. Reasoning comes from `drafts`, else from the consensus rationale;
/// subscores with neither are left without reasoning for a human to write.
std::vector<CotExemplar> emit_exemplars(const IrrRound& round,
                                        std::span<const ConsensusRecord> consensus,
                                        const ReasoningDrafts& drafts,
                                        std::span<const StudentResponse> responses,
                                        const Rubric& rubric);

// Columns: response_id, subscore, rater_a, rater_b, consensus, rationale.
std::string disagreement_worksheet_csv(const IrrRound& round,
                                       std::span<const ConsensusRecord> consensus = {});

// Rows with an empty consensus column are skipped.
std::vector<ConsensusRecord> parse_worksheet_csv(std::string_view text,
                                                 const std::vector<std::string>& resolved_by);

void to_json(nlohmann::json& j, const Disagreement& d);
void from_json(const nlohmann::json& j, Disagreement& d);
void to_json(nlohmann::json& j, const IrrRound& r);
void from_json(const nlohmann::json& j, IrrRound& r);
void to_json(nlohmann::json& j, const ConsensusRecord& c);
void from_json(const nlohmann::json& j, ConsensusRecord& c);

}  // namespace rubric_loop
