#pragma once

// The active-learning loop: score the validation pool with the current
// prompt, let a human tag reasoning-error patterns, pick a minimal balanced
// set of instances covering those patterns, append them (with human-edited
// reasoning) to the prompt, and decide when to stop.
//
// All operations are value-to-value. Persistence is the caller's job; see
// the workbench for the persisted loop.

#include <cstddef>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "rubric_loop/core_model.hpp"
#include "rubric_loop/llm_gateway.hpp"
#include "rubric_loop/metrics.hpp"
#include "rubric_loop/prompt_builder.hpp"
#include "rubric_loop/storage.hpp"

namespace rubric_loop {

enum class ErrorDirection { kFalsePositive, kFalseNegative };

std::string to_string(ErrorDirection d);
ErrorDirection parse_error_direction(std::string_view s);

/// A human-identified reasoning error shared by several misclassified
/// instances of one subscore.
struct ErrorTag {
  std::string pattern_id;
  std::string description;
  std::set<std::string> instance_ids;
  std::string subscore;
  ErrorDirection direction = ErrorDirection::kFalsePositive;

  bool operator==(const ErrorTag&) const = default;
};

struct Misclassification {
  std::string response_id;
  std::string subscore;
  int pred = 0;
  int gold = 0;
  // The generation could not be obtained or parsed.
  bool unparsed = false;

  bool operator==(const Misclassification&) const = default;
};

struct ALIteration {
  int index = 0;
  std::string prompt_spec_digest;
  std::vector<std::string> validation_ids;
  EvaluationReport reports;
  std::vector<Misclassification> misclassified;
  std::vector<TrendReport> trends;
  std::vector<ErrorTag> tags;
  std::vector<CotExemplar> added_exemplars;
  int error_count = 0;
  std::string run_digest;

  bool operator==(const ALIteration&) const = default;
};

std::map<std::string, int> errors_by_subscore(const ALIteration& iteration);

enum class StopStatus { kContinue, kConverged, kOverfitRevert, kExhausted };

std::string to_string(StopStatus s);
StopStatus parse_stop_status(std::string_view s);

struct StopDecision {
  StopStatus status = StopStatus::kContinue;
  std::string reason;
  // kOverfitRevert only: the iteration whose prompt should be restored.
  std::optional<int> revert_to;

  bool operator==(const StopDecision&) const = default;
};

struct ALConfig {
  // One iteration by default; stopping rules still apply within the budget.
  int max_iterations = 1;
  std::size_t max_additions = 3;
  BalanceTarget balance;
  // Fraction of the pool whose generation may fail before the run aborts.
  double failure_tolerance = 0.5;

  bool operator==(const ALConfig&) const = default;
};

enum class CandidateRole { kCover, kRebalance };

struct Candidate {
  // Reasoning is empty until a human supplies it on acceptance.
  CotExemplar exemplar;
  ReasoningMap draft_reasoning;
  std::vector<std::string> covered_patterns;
  int weight = 0;
  CandidateRole role = CandidateRole::kCover;

  bool operator==(const Candidate&) const = default;
};

struct CandidateSelection {
  std::vector<Candidate> candidates;
  std::vector<std::string> uncovered_patterns;
  bool full_cover = false;
  // No balance-preserving candidate could treat the remaining patterns, or
  // the pool cannot restore the prompt's balance.
  bool exhausted = false;
  std::string exhausted_reason;

  bool operator==(const CandidateSelection&) const = default;
};

struct AcceptedCandidate {
  std::string response_id;
  ReasoningMap reasoning;
};

struct ALLogEntry {
  int iteration = 0;
  std::string event;  // "advance", "noop", "revert"
  std::vector<std::string> response_ids;
  std::string prompt_spec_digest;

  bool operator==(const ALLogEntry&) const = default;
};

struct ALState {
  int iteration = 0;
  PromptSpec spec;
  std::map<std::string, PromptSpec> prompt_specs;  // by digest, every spec ever active
  std::vector<std::string> validation_pool;         // sorted
  std::vector<std::string> test_ids;                // sorted
  std::vector<ALIteration> history;
  std::vector<Candidate> pending_candidates;
  std::vector<ALLogEntry> log;

  std::string prompt_digest() const;
  bool operator==(const ALState&) const = default;
};

/// Pool = training ids minus prompt exemplars. Throws if an exemplar is in
/// the test set.
ALState init_state(const PromptSpec& spec, const Split& split);

// Validation pool, exemplar ids and test ids must be pairwise disjoint.
void check_disjoint(const ALState& state);

using IterationSink = std::function<void(const ALIteration&, const ScoringRun&)>;

/// Scores the validation pool with the active prompt. Generations that fail
/// or cannot be parsed count as misclassified on every subscore. The sink
/// runs before returning.
ALIteration run_validation(const ALState& state, Gateway& gateway, const Dataset& dataset,
                           const ALConfig& config, const IterationSink& sink = {});

// Appends a validated iteration for the current prompt.
ALState record_iteration(ALState state, ALIteration iteration);

// Attaches tags to the latest iteration after checking them against its
// misclassifications.
ALState attach_tags(ALState state, std::vector<ErrorTag> tags);

/// Greedy weighted set cover over the iteration's tags. Each step takes the
/// instance whose untreated tags have the largest total weight (weight =
/// tag size), among instances whose addition does not increase the balance
/// deficit; ties go to the smaller response id. Stops at full cover or
/// `max_additions`. Remaining budget is then spent on pool instances that
/// reduce a balance deficit.
CandidateSelection select_candidates(const ALIteration& iteration, const Rubric& rubric,
                                     std::span<const CotExemplar> current_exemplars,
                                     const Dataset& dataset, std::size_t max_additions,
                                     const BalanceTarget& balance = {});

// Selects candidates for the latest iteration and makes them pending.
std::pair<ALState, CandidateSelection> propose_candidates(ALState state, const Dataset& dataset,
                                                         const ALConfig& config);

/// Appends accepted candidates (source active_learning) with their
/// human-written reasoning, removes them from the pool and moves to the next
/// iteration. Accepting none logs a no-op iteration.
ALState advance(ALState state, std::span<const AcceptedCandidate> accepted);

/// converged: the latest iteration has no errors. overfit_revert: it has
/// more errors than the one before. exhausted: candidate selection cannot
/// keep the prompt balanced from the remaining pool. Otherwise continue.
StopDecision check_stop(const std::vector<ALIteration>& history, const ALState& state,
                        const Dataset& dataset, const ALConfig& config);

/// Restores the prompt used by `target_iteration`. Exemplars added since
/// return to the validation pool; the history is kept.
ALState revert(ALState state, int target_iteration);

void to_json(nlohmann::json& j, const ErrorTag& t);
void from_json(const nlohmann::json& j, ErrorTag& t);
void to_json(nlohmann::json& j, const Misclassification& m);
void from_json(const nlohmann::json& j, Misclassification& m);
void to_json(nlohmann::json& j, const ALIteration& it);
void from_json(const nlohmann::json& j, ALIteration& it);
void to_json(nlohmann::json& j, const StopDecision& d);
void from_json(const nlohmann::json& j, StopDecision& d);
void to_json(nlohmann::json& j, const ALConfig& c);
void from_json(const nlohmann::json& j, ALConfig& c);
void to_json(nlohmann::json& j, const Candidate& c);
void from_json(const nlohmann::json& j, Candidate& c);
void to_json(nlohmann::json& j, const CandidateSelection& s);
void from_json(const nlohmann::json& j, CandidateSelection& s);
void to_json(nlohmann::json& j, const AcceptedCandidate& a);
void from_json(const nlohmann::json& j, AcceptedCandidate& a);
void to_json(nlohmann::json& j, const ALLogEntry& e);
void from_json(const nlohmann::json& j, ALLogEntry& e);
void to_json(nlohmann::json& j, const ALState& s);
void from_json(const nlohmann::json& j, ALState& s);

}  // namespace rubric_loop
