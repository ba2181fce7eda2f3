#include "rubric_loop/llm_gateway.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <set>
#include <thread>

#include <fmt/format.h>

#include "rubric_loop/digest.hpp"
#include "rubric_loop/errors.hpp"

namespace rubric_loop {

std::string to_string(BackendKind kind) { return kind == BackendKind::kLive ? "live" : "mock"; }

BackendKind parse_backend_kind(std::string_view s) {
  if (s == "live") return BackendKind::kLive;
  if (s == "mock") return BackendKind::kMock;
  throw ValidationError("bad_enum", fmt::format("unknown backend '{}'", s));
}

std::vector<std::string> config_violations(const GatewayConfig& config) {
  std::vector<std::string> out;
  if (!(config.temperature >= 0.0)) out.push_back("temperature must be >= 0");
  if (config.max_inflight < 1) out.push_back("max_inflight must be >= 1");
  if (config.max_retries < 0) out.push_back("max_retries must be >= 0");
  if (config.backoff_base_ms < 0) out.push_back("backoff_base_ms must be >= 0");
  if (config.model_id.empty()) out.push_back("model_id is empty");
  return out;
}

BackendReply BackendReply::ok(std::string text) {
  BackendReply r;
  r.status = BackendStatus::kOk;
  r.text = std::move(text);
  return r;
}

BackendReply BackendReply::transient(std::string detail) {
  BackendReply r;
  r.status = BackendStatus::kTransient;
  r.detail = std::move(detail);
  return r;
}

void MockBackend::set_response(const std::string& prompt_hash, std::string text) {
  std::lock_guard lock(mu_);
  table_[prompt_hash] = std::move(text);
}

void MockBackend::queue_replies(const std::string& prompt_hash, std::vector<BackendReply> replies) {
  std::lock_guard lock(mu_);
  auto& q = queued_[prompt_hash];
  q.insert(q.end(), replies.begin(), replies.end());
}

void MockBackend::set_fallback(Script script) {
  std::lock_guard lock(mu_);
  fallback_ = std::move(script);
}

BackendReply MockBackend::send(const CompletionRequest& request) {
  Script fallback;
  {
    std::lock_guard lock(mu_);
    ++calls_;
    requested_.push_back(request.response_id);
    if (auto it = queued_.find(request.prompt_hash); it != queued_.end() && !it->second.empty()) {
      BackendReply reply = it->second.front();
      it->second.erase(it->second.begin());
      return reply;
    }
    if (auto it = table_.find(request.prompt_hash); it != table_.end()) {
      return BackendReply::ok(it->second);
    }
    fallback = fallback_;
  }
  if (fallback) return fallback(request);
  BackendReply r;
  r.status = BackendStatus::kRefusal;
  r.detail = "mock backend has no script for prompt " + request.prompt_hash;
  return r;
}

int MockBackend::calls() const {
  std::lock_guard lock(mu_);
  return calls_;
}

std::vector<std::string> MockBackend::requested_response_ids() const {
  std::lock_guard lock(mu_);
  return requested_;
}

Gateway::Gateway(GatewayConfig config, std::unique_ptr<CompletionBackend> backend)
    : config_(std::move(config)),
      backend_(std::move(backend)),
      sleeper_([](std::chrono::milliseconds d) { std::this_thread::sleep_for(d); }),
      jitter_(config_.jitter_seed) {
  auto v = config_violations(config_);
  if (!v.empty()) throw ValidationError(std::move(v), "invalid_gateway_config");
  if (!backend_) throw ValidationError("invalid_gateway_config", "gateway needs a backend");
}

void Gateway::set_sleeper(Sleeper sleeper) { sleeper_ = std::move(sleeper); }

int Gateway::completions_issued() const {
  std::lock_guard lock(mu_);
  return issued_;
}

std::chrono::milliseconds Gateway::backoff_delay(int retry) {
  double unit;
  {
    std::lock_guard lock(mu_);
    unit = static_cast<double>(jitter_.next() >> 11) * 0x1.0p-53;
  }
  const double base = config_.backoff_base_ms * std::ldexp(1.0, retry);
  const double factor = 0.8 + 0.4 * unit;
  return std::chrono::milliseconds(static_cast<std::int64_t>(std::llround(base * factor)));
}

Generation Gateway::complete(const std::string& prompt, const std::string& response_id) {
  const auto estimate = estimate_tokens(prompt);
  if (estimate > config_.token_budget) {
    throw GatewayError(GatewayErrorKind::kBudgetExceeded,
                       fmt::format("prompt estimate of {} tokens exceeds the budget of {}",
                                   estimate, config_.token_budget));
  }
  CompletionRequest request{prompt, sha256_hex(prompt), config_.model_id, config_.temperature,
                            response_id};
  {
    std::lock_guard lock(mu_);
    ++issued_;
  }
  const auto start = std::chrono::steady_clock::now();
  for (int attempt = 0;; ++attempt) {
    BackendReply reply = backend_->send(request);
    switch (reply.status) {
      case BackendStatus::kOk: {
        Generation g;
        g.prompt_hash = request.prompt_hash;
        g.raw_text = std::move(reply.text);
        g.model_id = config_.model_id;
        g.latency_ms = std::chrono::duration_cast<std::chrono::milliseconds>(
                           std::chrono::steady_clock::now() - start)
                           .count();
        g.usage = reply.usage;
        g.attempts = attempt + 1;
        return g;
      }
      case BackendStatus::kAuth:
        throw GatewayError(GatewayErrorKind::kAuthFailure, "authentication failed: " + reply.detail);
      case BackendStatus::kRefusal:
        throw GatewayError(GatewayErrorKind::kBackendRefusal, "backend refused: " + reply.detail);
      case BackendStatus::kTransient:
        if (attempt >= config_.max_retries) {
          throw GatewayError(GatewayErrorKind::kTransientExhausted,
                             fmt::format("gave up after {} attempts: {}", attempt + 1, reply.detail));
        }
        sleeper_(backoff_delay(attempt));
        break;
    }
  }
}

std::vector<ScoreVector> ScoringRun::predictions() const {
  std::vector<ScoreVector> out;
  out.reserve(results.size());
  for (const auto& [id, parsed] : results) out.push_back(parsed.scores);
  return out;
}

std::string run_digest(const ScoringRun& run) {
  nlohmann::json results = nlohmann::json::object();
  for (const auto& [id, p] : run.results) {
    nlohmann::json flags = nlohmann::json::array();
    for (auto f : p.flags) flags.push_back(to_string(f));
    results[id] = {{"scores", p.scores},
                   {"reasoning", p.reasoning},
                   {"raw_text", p.raw.raw_text},
                   {"prompt_hash", p.raw.prompt_hash},
                   {"flags", flags}};
  }
  nlohmann::json failures = nlohmann::json::array();
  for (const auto& f : run.failures) {
    failures.push_back({{"response_id", f.response_id},
                        {"code", f.code},
                        {"raw_text", f.raw ? f.raw->raw_text : std::string()}});
  }
  return digest_of({{"prompt_digest", run.prompt_digest},
                    {"model_id", run.model_id},
                    {"results", results},
                    {"failures", failures}});
}

ScoringRun score_batch(std::span<const StudentResponse> responses, const PromptSpec& spec,
                       Gateway& gateway, const ScoringRun* resume) {
  if (responses.empty()) throw ValidationError("empty_input", "no responses to score");
  std::vector<std::string> violations;
  std::set<std::string> ids;
  for (const auto& r : responses) {
    if (r.question_id != spec.rubric.question_id) {
      violations.push_back(fmt::format("response {} is for question {}, prompt is for {}", r.id,
                                       r.question_id, spec.rubric.question_id));
    }
    if (!ids.insert(r.id).second) violations.push_back("duplicate response id " + r.id);
  }
  if (!violations.empty()) throw ValidationError(std::move(violations), "invalid_batch");

  const PromptText prompt = render_prompt(spec);
  ScoringRun run;
  run.prompt_digest = prompt_spec_digest(spec);
  run.model_id = gateway.config().model_id;
  if (resume != nullptr) {
    if (resume->prompt_digest != run.prompt_digest) {
      throw ValidationError("resume_mismatch", "resumed run was produced by a different prompt");
    }
    run.results = resume->results;
  }

  std::vector<const StudentResponse*> todo;
  for (const auto& r : responses) {
    if (!run.results.contains(r.id)) todo.push_back(&r);
  }

  std::mutex mu;
  std::atomic<std::size_t> next{0};
  std::atomic<bool> abort{false};
  std::optional<GatewayError> auth_error;
  int issued = 0;

  auto worker = [&] {
    for (;;) {
      if (abort.load()) return;
      const std::size_t i = next.fetch_add(1);
      if (i >= todo.size()) return;
      const StudentResponse& response = *todo[i];
      std::optional<Generation> generation;
      try {
        {
          std::lock_guard lock(mu);
          ++issued;
        }
        generation = gateway.complete(fill_response_slot(prompt, response), response.id);
        ParsedScore parsed = parse_generation(*generation, spec.rubric, response.id);
        std::lock_guard lock(mu);
        run.results.emplace(response.id, std::move(parsed));
      } catch (const GatewayError& e) {
        std::lock_guard lock(mu);
        if (e.kind() == GatewayErrorKind::kAuthFailure) {
          if (!auth_error) auth_error = e;
          abort.store(true);
          return;
        }
        run.failures.push_back({response.id, e.code(), e.what(), std::nullopt});
      } catch (const ParseError& e) {
        std::lock_guard lock(mu);
        run.failures.push_back({response.id, e.code(), e.what(), generation});
      }
    }
  };

  const auto threads = std::min<std::size_t>(static_cast<std::size_t>(gateway.config().max_inflight),
                                             todo.size());
  {
    std::vector<std::jthread> pool;
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
  }
  if (auth_error) throw *auth_error;

  std::sort(run.failures.begin(), run.failures.end(),
            [](const ScoringFailure& a, const ScoringFailure& b) { return a.response_id < b.response_id; });
  run.completions_issued = issued;
  return run;
}

using nlohmann::json;

void to_json(json& j, const GatewayConfig& c) {
  j = json{{"backend", to_string(c.backend)},
           {"model_id", c.model_id},
           {"temperature", c.temperature},
           {"max_retries", c.max_retries},
           {"backoff_base_ms", c.backoff_base_ms},
           {"max_inflight", c.max_inflight},
           {"token_budget", c.token_budget},
           {"base_url", c.base_url},
           {"timeout_ms", c.timeout_ms},
           {"jitter_seed", c.jitter_seed}};
}

void from_json(const json& j, GatewayConfig& c) {
  GatewayConfig d;
  c.backend = parse_backend_kind(j.value("backend", to_string(d.backend)));
  c.model_id = j.value("model_id", d.model_id);
  c.temperature = j.value("temperature", d.temperature);
  c.max_retries = j.value("max_retries", d.max_retries);
  c.backoff_base_ms = j.value("backoff_base_ms", d.backoff_base_ms);
  c.max_inflight = j.value("max_inflight", d.max_inflight);
  c.token_budget = j.value("token_budget", d.token_budget);
  c.base_url = j.value("base_url", d.base_url);
  c.timeout_ms = j.value("timeout_ms", d.timeout_ms);
  c.jitter_seed = j.value("jitter_seed", d.jitter_seed);
}

void to_json(json& j, const ScoringFailure& f) {
  j = json{{"response_id", f.response_id}, {"code", f.code}, {"message", f.message}};
  j["raw"] = f.raw ? json(*f.raw) : json(nullptr);
}

void from_json(const json& j, ScoringFailure& f) {
  j.at("response_id").get_to(f.response_id);
  j.at("code").get_to(f.code);
  j.at("message").get_to(f.message);
  const auto& raw = j.at("raw");
  f.raw = raw.is_null() ? std::nullopt : std::optional<Generation>(raw.get<Generation>());
}

void to_json(json& j, const ScoringRun& r) {
  j = json{{"prompt_digest", r.prompt_digest},
           {"model_id", r.model_id},
           {"results", r.results},
           {"failures", r.failures},
           {"completions_issued", r.completions_issued}};
}

void from_json(const json& j, ScoringRun& r) {
  j.at("prompt_digest").get_to(r.prompt_digest);
  j.at("model_id").get_to(r.model_id);
  j.at("results").get_to(r.results);
  j.at("failures").get_to(r.failures);
  r.completions_issued = j.value("completions_issued", 0);
}

}  // namespace rubric_loop
