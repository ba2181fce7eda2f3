#pragma once

// Persisted experiment operations shared by the CLI and the HTTP service.
// Every mutating call holds the experiment's writer lock for its duration
// and, given `expected_head`, refuses to commit over a newer manifest.

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "rubric_loop/active_learning.hpp"
#include "rubric_loop/core_model.hpp"
#include "rubric_loop/irr.hpp"
#include "rubric_loop/llm_gateway.hpp"
#include "rubric_loop/metrics.hpp"
#include "rubric_loop/prompt_builder.hpp"
#include "rubric_loop/report.hpp"
#include "rubric_loop/storage.hpp"

namespace rubric_loop {

inline constexpr const char* kHomeEnv = "RUBRIC_LOOP_HOME";

// $RUBRIC_LOOP_HOME, else ./.rubric_loop
std::filesystem::path default_home();

struct ExperimentConfig {
  std::string experiment_id;
  Rubric rubric;
  GatewayConfig gateway;
  ALConfig al;
  double split_ratio = 0.8;
  std::uint64_t seed = 0;
  double irr_fraction = 0.2;
  // Few-shot prompts use at most this many IRR exemplars; 0 keeps all.
  std::size_t max_exemplars = 0;
  std::string persona_template = default_persona_template();
  std::string format_template = default_format_template();

  bool operator==(const ExperimentConfig&) const = default;
};

/// Mock scripts: "echo-gold", "garbage", "table:<file>" (JSON object of
/// response id -> raw answer), "flip:<file>" ({"flips": [[id, subscore]],
/// "garbage_ids": [id]}), "repair:<file>" ([{"response_id", "subscore",
/// "fixed_by": [id]}]).
struct BackendChoice {
  std::string mock_script = "echo-gold";
  std::string api_key;  // live only; empty reads RUBRIC_LOOP_API_KEY
};

std::unique_ptr<Gateway> make_gateway(const GatewayConfig& config, const BackendChoice& choice,
                                      const Dataset& dataset);

inline constexpr const char* kCotAl = "cot_al";

class Workbench {
 public:
  Workbench(std::filesystem::path home, std::string experiment_id);

  /// Creates the experiment. The dataset is validated against the rubric
  /// and referenced by path and SHA-256.
  static Workbench init(const std::filesystem::path& home, const ExperimentConfig& config,
                        const std::filesystem::path& dataset_path);

  const ExperimentStore& store() const { return store_; }
  std::string head() const { return store_.head(); }
  ExperimentConfig config() const;
  // Throws CorruptionError if the file changed since init.
  Dataset dataset() const;

  Split split(std::optional<double> ratio = std::nullopt, std::optional<std::uint64_t> seed = std::nullopt);
  std::optional<Split> current_split() const;

  // Drawn from the training partition.
  std::vector<std::string> irr_sample(std::optional<double> fraction = std::nullopt);
  std::vector<std::string> current_irr_sample() const;
  // Persisted whether or not the gate passes.
  IrrRound irr_compute(const RaterScores& a, const RaterScores& b);
  std::optional<IrrRound> latest_irr_round() const;
  std::vector<CotExemplar> irr_resolve(const std::vector<ConsensusRecord>& consensus,
                                       const ReasoningDrafts& drafts,
                                       const std::optional<std::string>& expected_head = std::nullopt);
  std::vector<CotExemplar> current_exemplars() const;

  // Persists the spec under the mode's name and its balance report.
  PromptSpec build_prompt(PromptMode mode, bool allow_unbalanced = false);
  std::optional<PromptSpec> prompt_for(const std::string& implementation) const;

  /// Scores a partition ("test", "train" or "all") with an implementation's
  /// prompt (zero_shot, few_shot, few_shot_cot, cot_al), persists the run
  /// and its evaluation. With `resume`, a previous run of the same prompt
  /// and partition is continued.
  ScoringRun score(const std::string& implementation, const std::string& partition, Gateway& gateway,
                   bool resume = false);
  std::optional<EvaluationReport> evaluation(const std::string& implementation,
                                             const std::string& partition) const;
  std::vector<ReportRow> report_rows(const std::string& partition) const;

  ALState al_init(const std::string& implementation = "few_shot_cot");
  ALState al_state() const;
  bool al_started() const;

  struct ValidationOutcome {
    ALIteration iteration;
    StopDecision decision;
  };
  ValidationOutcome al_validate(Gateway& gateway,
                                const std::optional<std::string>& expected_head = std::nullopt);
  ALState al_tag(std::vector<ErrorTag> tags, const std::optional<std::string>& expected_head = std::nullopt);
  CandidateSelection al_select(const std::optional<std::string>& expected_head = std::nullopt);
  ALState al_accept(const std::vector<AcceptedCandidate>& accepted,
                    const std::optional<std::string>& expected_head = std::nullopt);
  ALState al_revert(int target_iteration, const std::optional<std::string>& expected_head = std::nullopt);
  std::optional<StopDecision> al_decision() const;

  nlohmann::json al_status() const;
  // Misclassifications of one iteration with the verbatim generation text.
  nlohmann::json al_misclassified(int iteration) const;
  nlohmann::json summary() const;

 private:
  ALState commit_state(ExperimentWriter& w, const ALState& state, const nlohmann::json& event,
                       const std::optional<std::string>& expected_head);
  std::vector<std::string> partition_ids(const std::string& partition) const;

  std::filesystem::path home_;
  ExperimentStore store_;
};

void to_json(nlohmann::json& j, const ExperimentConfig& c);
void from_json(const nlohmann::json& j, ExperimentConfig& c);

}  // namespace rubric_loop
