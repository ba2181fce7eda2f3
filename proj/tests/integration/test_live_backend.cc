#include <atomic>
#include <thread>

#include "doctest.h"
#include "httplib.h"
#include "rubric_loop/errors.hpp"
#include "rubric_loop/llm_gateway.hpp"

using namespace rubric_loop;
using nlohmann::json;

namespace {

// Local stand-in for a chat-completion endpoint.
class FakeApi {
 public:
  using Handler = std::function<void(const httplib::Request&, httplib::Response&)>;

  explicit FakeApi(Handler h) {
    server_.Post("/v1/chat/completions", [this, h](const httplib::Request& req, httplib::Response& res) {
      ++hits;
      h(req, res);
    });
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }
  ~FakeApi() {
    server_.stop();
    thread_.join();
  }

  GatewayConfig config() const {
    GatewayConfig c;
    c.backend = BackendKind::kLive;
    c.base_url = "http://127.0.0.1:" + std::to_string(port_) + "/v1";
    c.timeout_ms = 5000;
    return c;
  }

  std::atomic<int> hits = 0;

 private:
  httplib::Server server_;
  int port_ = 0;
  std::thread thread_;
};

json completion(const std::string& text) {
  return {{"choices", {{{"message", {{"role", "assistant"}, {"content", text}}}, {"finish_reason", "stop"}}}},
          {"usage", {{"prompt_tokens", 11}, {"completion_tokens", 7}}}};
}

std::unique_ptr<Gateway> gateway(const GatewayConfig& c, std::string key) {
  auto g = std::make_unique<Gateway>(c, std::make_unique<LiveBackend>(c, std::move(key)));
  g->set_sleeper([](auto) {});
  return g;
}

}  // namespace

TEST_SUITE("live_backend") {
  TEST_CASE("request shape and usage") {
    json seen;
    std::string auth;
    FakeApi api([&](const httplib::Request& req, httplib::Response& res) {
      seen = json::parse(req.body);
      auth = req.get_header_value("Authorization");
      res.set_content(completion("SUBSCORE a: 1").dump(), "application/json");
    });
    auto g = gateway(api.config(), "test-key");
    const Generation gen = g->complete("persona\n### STUDENT RESPONSE TO SCORE\nice floats\n", "r1");
    CHECK(gen.raw_text == "SUBSCORE a: 1");
    CHECK(gen.usage.prompt == 11);
    CHECK(gen.usage.completion == 7);
    CHECK(auth == "Bearer test-key");
    CHECK(seen["model"] == "gpt-4");
    CHECK(seen["messages"][0]["role"] == "system");
    CHECK(seen.dump().find("r1") == std::string::npos);
  }

  TEST_CASE("429 then 200 is retried") {
    FakeApi api([](const httplib::Request&, httplib::Response& res) {
      static std::atomic<int> n = 0;
      if (n++ == 0) {
        res.status = 429;
        return;
      }
      res.set_content(completion("ok").dump(), "application/json");
    });
    auto g = gateway(api.config(), "k");
    const Generation gen = g->complete("p");
    CHECK(gen.raw_text == "ok");
    CHECK(gen.attempts == 2);
    CHECK(api.hits == 2);
  }

  TEST_CASE("401 is an auth failure without retry") {
    FakeApi api([](const httplib::Request&, httplib::Response& res) { res.status = 401; });
    auto g = gateway(api.config(), "wrong");
    try {
      g->complete("p");
      FAIL("no error");
    } catch (const GatewayError& e) {
      CHECK(e.kind() == GatewayErrorKind::kAuthFailure);
    }
    CHECK(api.hits == 1);
  }

  TEST_CASE("persistent 503 exhausts retries") {
    FakeApi api([](const httplib::Request&, httplib::Response& res) { res.status = 503; });
    GatewayConfig c = api.config();
    c.max_retries = 2;
    auto g = gateway(c, "k");
    CHECK_THROWS_AS(g->complete("p"), GatewayError);
    CHECK(api.hits == 3);
  }

  TEST_CASE("content filter is a refusal") {
    FakeApi api([](const httplib::Request&, httplib::Response& res) {
      json body = completion("");
      body["choices"][0]["finish_reason"] = "content_filter";
      res.set_content(body.dump(), "application/json");
    });
    auto g = gateway(api.config(), "k");
    try {
      g->complete("p");
      FAIL("no error");
    } catch (const GatewayError& e) {
      CHECK(e.kind() == GatewayErrorKind::kBackendRefusal);
    }
  }

  TEST_CASE("missing key fails before any network call") {
    FakeApi api([](const httplib::Request&, httplib::Response& res) { res.set_content("{}", "application/json"); });
    unsetenv(kApiKeyEnv);
    auto g = gateway(api.config(), "");
    try {
      g->complete("p");
      FAIL("no error");
    } catch (const GatewayError& e) {
      CHECK(e.kind() == GatewayErrorKind::kAuthFailure);
      CHECK(std::string(e.what()).find(kApiKeyEnv) != std::string::npos);
    }
    CHECK(api.hits == 0);
  }

  TEST_CASE("key is read from the environment") {
    std::string auth;
    FakeApi api([&](const httplib::Request& req, httplib::Response& res) {
      auth = req.get_header_value("Authorization");
      res.set_content(completion("ok").dump(), "application/json");
    });
    setenv(kApiKeyEnv, "from-env", 1);
    auto g = gateway(api.config(), "");
    unsetenv(kApiKeyEnv);
    g->complete("p");
    CHECK(auth == "Bearer from-env");
  }
}
