#pragma once

// Scripted model behaviours for the mock backend. They let the whole
// pipeline run with no network: an echo-gold oracle, and perturbations of it.

#include <functional>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "rubric_loop/core_model.hpp"
#include "rubric_loop/llm_gateway.hpp"

namespace rubric_loop {

// Well-formed generation for `scores`, with templated reasoning per subscore.
std::string render_model_answer(const ScoreVector& scores, const Rubric& rubric,
                                std::string_view response_text);

inline constexpr std::string_view kGarbageAnswer = "I'm sorry, I cannot score this response.";

/// Decides what the scripted model answers for one request. `gold` is the
/// target response's gold vector. Returning nullopt produces an unparseable
/// answer.
using ScoreOracle =
    std::function<std::optional<ScoreVector>(const CompletionRequest& request, const ScoreVector& gold)>;

/// Resolves the target response of each request (by request metadata, else
/// by the text under the target header) and answers with `oracle`.
MockBackend::Script oracle_script(const Rubric& rubric, std::span<const StudentResponse> responses,
                                  std::span<const ScoreVector> gold, ScoreOracle oracle);

// Answers every response with its gold vector.
MockBackend::Script echo_gold_script(const Rubric& rubric, std::span<const StudentResponse> responses,
                                     std::span<const ScoreVector> gold);

struct Perturbation {
  std::set<std::pair<std::string, std::string>> flips;  // (response id, subscore)
  std::set<std::string> garbage_ids;
};

MockBackend::Script perturbed_script(const Rubric& rubric, std::span<const StudentResponse> responses,
                                     std::span<const ScoreVector> gold, Perturbation perturbation);

/// A flip that persists until the prompt shows one of `fixed_by` as an
/// exemplar, modelling a reasoning error the exemplar teaches away.
struct RepairRule {
  std::string response_id;
  std::string subscore;
  std::set<std::string> fixed_by;
};

MockBackend::Script repairing_script(const Rubric& rubric, std::span<const StudentResponse> responses,
                                     std::span<const ScoreVector> gold, std::vector<RepairRule> rules);

}  // namespace rubric_loop
