#include "httplib.h"

#include <cstdlib>

#include <fmt/format.h>

#include "rubric_loop/llm_gateway.hpp"

namespace rubric_loop {

namespace {

struct Endpoint {
  std::string origin;  // scheme://host[:port]
  std::string path;
};

Endpoint split_url(const std::string& base_url) {
  const auto scheme_end = base_url.find("://");
  const auto path_start =
      base_url.find('/', scheme_end == std::string::npos ? 0 : scheme_end + 3);
  Endpoint e;
  e.origin = base_url.substr(0, path_start);
  std::string prefix = path_start == std::string::npos ? "" : base_url.substr(path_start);
  while (!prefix.empty() && prefix.back() == '/') prefix.pop_back();
  e.path = prefix + "/chat/completions";
  return e;
}

BackendReply reply_with(BackendStatus status, std::string detail) {
  BackendReply r;
  r.status = status;
  r.detail = std::move(detail);
  return r;
}

}  // namespace

LiveBackend::LiveBackend(GatewayConfig config, std::string api_key)
    : config_(std::move(config)), api_key_(std::move(api_key)) {
  if (api_key_.empty()) {
    if (const char* env = std::getenv(kApiKeyEnv)) api_key_ = env;
  }
}

nlohmann::json LiveBackend::request_body(const CompletionRequest& request) {
  const auto header = request.prompt.rfind(kTargetHeader);
  nlohmann::json messages = nlohmann::json::array();
  if (header == std::string::npos) {
    messages.push_back({{"role", "user"}, {"content", request.prompt}});
  } else {
    messages.push_back({{"role", "system"}, {"content", request.prompt.substr(0, header)}});
    messages.push_back({{"role", "user"}, {"content", request.prompt.substr(header)}});
  }
  return {{"model", request.model_id},
          {"temperature", request.temperature},
          {"messages", messages}};
}

BackendReply LiveBackend::send(const CompletionRequest& request) {
  if (api_key_.empty()) {
    return reply_with(BackendStatus::kAuth, fmt::format("{} is not set", kApiKeyEnv));
  }
  const Endpoint endpoint = split_url(config_.base_url);
  httplib::Client client(endpoint.origin);
  const auto timeout = std::chrono::milliseconds(config_.timeout_ms);
  client.set_connection_timeout(timeout);
  client.set_read_timeout(timeout);
  client.set_write_timeout(timeout);
  httplib::Headers headers{{"Authorization", "Bearer " + api_key_}};

  auto res = client.Post(endpoint.path, headers, request_body(request).dump(), "application/json");
  if (!res) {
    return BackendReply::transient("transport error: " + httplib::to_string(res.error()));
  }
  const int status = res->status;
  if (status == 401 || status == 403) {
    return reply_with(BackendStatus::kAuth, fmt::format("HTTP {}", status));
  }
  if (status == 408 || status == 429 || status >= 500) {
    return BackendReply::transient(fmt::format("HTTP {}", status));
  }
  if (status < 200 || status >= 300) {
    return reply_with(BackendStatus::kRefusal, fmt::format("HTTP {}: {}", status, res->body));
  }

  const auto body = nlohmann::json::parse(res->body, nullptr, false);
  if (body.is_discarded() || !body.contains("choices") || body["choices"].empty()) {
    return reply_with(BackendStatus::kRefusal, "malformed completion body");
  }
  const auto& choice = body["choices"][0];
  if (choice.value("finish_reason", "") == "content_filter" || !choice.contains("message") ||
      !choice["message"].contains("content") || !choice["message"]["content"].is_string()) {
    return reply_with(BackendStatus::kRefusal, "completion has no content");
  }
  BackendReply reply = BackendReply::ok(choice["message"]["content"].get<std::string>());
  if (body.contains("usage") && body["usage"].is_object()) {
    reply.usage.prompt = body["usage"].value("prompt_tokens", 0);
    reply.usage.completion = body["usage"].value("completion_tokens", 0);
  }
  return reply;
}

}  // namespace rubric_loop
