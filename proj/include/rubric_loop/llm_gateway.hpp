#pragma once

// Completion backends (live chat-completion API or scripted mock), the
// retrying gateway in front of them, and batch scoring of responses.

#include <chrono>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "rubric_loop/core_model.hpp"
#include "rubric_loop/prompt_builder.hpp"
#include "rubric_loop/prng.hpp"
#include "rubric_loop/score_parser.hpp"

namespace rubric_loop {

inline constexpr const char* kApiKeyEnv = "RUBRIC_LOOP_API_KEY";

enum class BackendKind { kLive, kMock };

std::string to_string(BackendKind kind);
BackendKind parse_backend_kind(std::string_view s);

struct GatewayConfig {
  BackendKind backend = BackendKind::kMock;
  std::string model_id = "gpt-4";
  double temperature = 0.0;
  int max_retries = 3;
  int backoff_base_ms = 500;
  int max_inflight = 4;
  std::size_t token_budget = 8000;
  // Chat-completion endpoint root; "/chat/completions" is appended.
  std::string base_url = "https://api.openai.com/v1";
  int timeout_ms = 60000;
  std::uint64_t jitter_seed = 0;

  bool operator==(const GatewayConfig&) const = default;
};

std::vector<std::string> config_violations(const GatewayConfig& config);

struct CompletionRequest {
  std::string prompt;
  std::string prompt_hash;
  std::string model_id;
  double temperature = 0.0;
  // Caller metadata; never sent over the wire.
  std::string response_id;
};

enum class BackendStatus { kOk, kTransient, kAuth, kRefusal };

struct BackendReply {
  BackendStatus status = BackendStatus::kOk;
  std::string text;
  TokenUsage usage;
  std::string detail;

  static BackendReply ok(std::string text);
  static BackendReply transient(std::string detail);
};

class CompletionBackend {
 public:
  virtual ~CompletionBackend() = default;
  // Must be safe to call from several threads at once.
  virtual BackendReply send(const CompletionRequest& request) = 0;
};

/// Scripted backend. Lookup order: queued replies for the prompt digest,
/// then the fixed table, then the fallback script. Unscripted prompts get a
/// refusal.
class MockBackend : public CompletionBackend {
 public:
  using Script = std::function<BackendReply(const CompletionRequest&)>;

  void set_response(const std::string& prompt_hash, std::string text);
  // Replies consumed one per call for this digest before the table applies.
  void queue_replies(const std::string& prompt_hash, std::vector<BackendReply> replies);
  void set_fallback(Script script);

  BackendReply send(const CompletionRequest& request) override;

  int calls() const;
  std::vector<std::string> requested_response_ids() const;

 private:
  mutable std::mutex mu_;
  std::map<std::string, std::string> table_;
  std::map<std::string, std::vector<BackendReply>> queued_;
  Script fallback_;
  int calls_ = 0;
  std::vector<std::string> requested_;
};

/// OpenAI-style chat completion over HTTP(S). The prompt is split at the
/// target-response header into a system and a user message.
class LiveBackend : public CompletionBackend {
 public:
  // An empty api_key falls back to the RUBRIC_LOOP_API_KEY environment variable.
  LiveBackend(GatewayConfig config, std::string api_key = {});

  BackendReply send(const CompletionRequest& request) override;

  static nlohmann::json request_body(const CompletionRequest& request);

 private:
  GatewayConfig config_;
  std::string api_key_;
};

/// Budget check, retry with exponential backoff, and usage bookkeeping in
/// front of one backend. Shareable across threads.
class Gateway {
 public:
  using Sleeper = std::function<void(std::chrono::milliseconds)>;

  Gateway(GatewayConfig config, std::unique_ptr<CompletionBackend> backend);

  /// Returns the verbatim completion. Throws GatewayError: budget_exceeded
  /// before any backend call, auth_failure and backend_refusal without
  /// retrying, transient_exhausted after max_retries retries.
  Generation complete(const std::string& prompt, const std::string& response_id = {});

  // base * 2^retry with +-20% jitter; retry counts from 0.
  std::chrono::milliseconds backoff_delay(int retry);

  void set_sleeper(Sleeper sleeper);
  const GatewayConfig& config() const { return config_; }
  CompletionBackend& backend() { return *backend_; }
  int completions_issued() const;

 private:
  GatewayConfig config_;
  std::unique_ptr<CompletionBackend> backend_;
  Sleeper sleeper_;
  mutable std::mutex mu_;
  SplitMix64 jitter_;
  int issued_ = 0;
};

struct ScoringFailure {
  std::string response_id;
  std::string code;
  std::string message;
  std::optional<Generation> raw;

  bool operator==(const ScoringFailure&) const = default;
};

struct ScoringRun {
  std::string prompt_digest;
  std::string model_id;
  std::map<std::string, ParsedScore> results;
  std::vector<ScoringFailure> failures;  // sorted by response id
  int completions_issued = 0;

  std::vector<ScoreVector> predictions() const;
  bool operator==(const ScoringRun&) const = default;
};

// Digest over everything except timing, so identical runs hash alike.
std::string run_digest(const ScoringRun& run);

/// Scores each response with the rendered spec, up to max_inflight at once.
/// Per-response failures are collected; only auth_failure aborts. Ids already
/// scored in `resume` are kept and not re-sent; its failures are retried.
ScoringRun score_batch(std::span<const StudentResponse> responses, const PromptSpec& spec,
                       Gateway& gateway, const ScoringRun* resume = nullptr);

void to_json(nlohmann::json& j, const GatewayConfig& c);
void from_json(const nlohmann::json& j, GatewayConfig& c);
void to_json(nlohmann::json& j, const ScoringFailure& f);
void from_json(const nlohmann::json& j, ScoringFailure& f);
void to_json(nlohmann::json& j, const ScoringRun& r);
void from_json(const nlohmann::json& j, ScoringRun& r);

}  // namespace rubric_loop
