#include "rubric_loop/service.hpp"

#include "httplib.h"

#include <fmt/format.h>

#include "rubric_loop/errors.hpp"

using nlohmann::json;

namespace rubric_loop {

namespace {

constexpr const char* kId = R"(([A-Za-z0-9._-]+))";

int http_status(const Error& e) {
  if (dynamic_cast<const NotFoundError*>(&e) != nullptr) return 404;
  switch (e.exit_code()) {
    case ExitCode::kValidation:
      return 400;
    case ExitCode::kGateway:
      return 502;
    case ExitCode::kGateFailed:
    case ExitCode::kLock:
      return 409;
    default:
      return 500;
  }
}

void send_json(httplib::Response& res, int status, const json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

void send_error(httplib::Response& res, const Error& e) {
  json body{{"code", e.code()}, {"exit_code", static_cast<int>(e.exit_code())}, {"message", e.what()}};
  if (const auto* v = dynamic_cast<const ValidationError*>(&e)) body["violations"] = v->violations();
  send_json(res, http_status(e), body);
}

json parse_body(const httplib::Request& req) {
  auto j = json::parse(req.body, nullptr, false);
  if (j.is_discarded() || !j.is_object()) throw ValidationError("json_parse", "request body must be a JSON object");
  return j;
}

std::string expected_head(const json& body) {
  if (!body.contains("expected_head") || !body["expected_head"].is_string()) {
    throw ValidationError("missing_expected_head", "mutating requests must carry expected_head");
  }
  return body["expected_head"].get<std::string>();
}

template <typename T>
T field(const json& body, const char* key) {
  if (!body.contains(key)) throw ValidationError("missing_field", fmt::format("request lacks '{}'", key));
  try {
    return body.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ValidationError("invalid_field", fmt::format("'{}': {}", key, e.what()));
  }
}

}  // namespace

struct Service::Impl {
  std::filesystem::path home;
  BackendChoice backend;
  httplib::Server server;

  Workbench open(const std::string& id) const {
    Workbench wb(home, id);
    if (!wb.store().exists()) throw NotFoundError("no experiment " + id);
    return wb;
  }

  using Handler = std::function<json(const httplib::Request&)>;

  httplib::Server::Handler wrap(Handler h) {
    return [h = std::move(h)](const httplib::Request& req, httplib::Response& res) {
      try {
        send_json(res, 200, h(req));
      } catch (const Error& e) {
        send_error(res, e);
      } catch (const json::exception& e) {
        send_error(res, ValidationError("invalid_field", e.what()));
      } catch (const std::exception& e) {
        send_error(res, Error("internal", e.what(), ExitCode::kInternal));
      }
    };
  }

  void get(const std::string& pattern, Handler h) { server.Get(pattern, wrap(std::move(h))); }
  void post(const std::string& pattern, Handler h) { server.Post(pattern, wrap(std::move(h))); }

  void routes() {
    const std::string base = "/api/v1/experiments";
    const std::string exp = base + "/" + kId;

    get("/api/v1/health", [](const auto&) { return json{{"status", "ok"}}; });

    get(base, [this](const auto&) { return json{{"experiments", ExperimentStore::list(home)}}; });

    get(exp, [this](const auto& req) { return open(req.matches[1]).summary(); });

    get(exp + "/irr/disagreements", [this](const auto& req) {
      const Workbench wb = open(req.matches[1]);
      auto round = wb.latest_irr_round();
      if (!round) throw NotFoundError("no IRR round yet");
      return json{{"round", round->round_index},
                  {"passed", round->passed},
                  {"kappa", round->kappa_by_subscore},
                  {"disagreements", round->disagreements},
                  {"head", wb.head()}};
    });

    post(exp + "/irr/consensus", [this](const auto& req) {
      Workbench wb = open(req.matches[1]);
      const json body = parse_body(req);
      const auto head = expected_head(body);
      auto exemplars = wb.irr_resolve(field<std::vector<ConsensusRecord>>(body, "consensus"),
                                      body.value("drafts", ReasoningDrafts{}), head);
      return json{{"exemplars", exemplars}, {"head", wb.head()}};
    });

    get(exp + "/al/status", [this](const auto& req) { return open(req.matches[1]).al_status(); });

    get(exp + "/al/iterations", [this](const auto& req) {
      const Workbench wb = open(req.matches[1]);
      return json{{"iterations", wb.al_state().history}, {"head", wb.head()}};
    });

    get(exp + R"(/al/iterations/(\d+)/misclassified)", [this](const auto& req) {
      const Workbench wb = open(req.matches[1]);
      const int n = std::stoi(req.matches[2]);
      return json{{"iteration", n}, {"misclassified", wb.al_misclassified(n)}, {"head", wb.head()}};
    });

    post(exp + "/al/validate", [this](const auto& req) {
      Workbench wb = open(req.matches[1]);
      const auto head = expected_head(parse_body(req));
      auto gateway = make_gateway(wb.config().gateway, backend, wb.dataset());
      auto outcome = wb.al_validate(*gateway, head);
      return json{{"iteration", outcome.iteration}, {"decision", outcome.decision}, {"head", wb.head()}};
    });

    post(exp + "/al/tags", [this](const auto& req) {
      Workbench wb = open(req.matches[1]);
      const json body = parse_body(req);
      const auto head = expected_head(body);
      auto state = wb.al_tag(field<std::vector<ErrorTag>>(body, "tags"), head);
      return json{{"tags", state.history.back().tags}, {"head", wb.head()}};
    });

    post(exp + "/al/candidates/select", [this](const auto& req) {
      Workbench wb = open(req.matches[1]);
      const auto head = expected_head(parse_body(req));
      auto selection = wb.al_select(head);
      return json{{"selection", selection}, {"head", wb.head()}};
    });

    post(exp + "/al/accept", [this](const auto& req) {
      Workbench wb = open(req.matches[1]);
      const json body = parse_body(req);
      const auto head = expected_head(body);
      auto state = wb.al_accept(field<std::vector<AcceptedCandidate>>(body, "accepted"), head);
      return json{{"iteration", state.iteration}, {"log", state.log.back()}, {"head", wb.head()}};
    });

    post(exp + "/al/revert", [this](const auto& req) {
      Workbench wb = open(req.matches[1]);
      const json body = parse_body(req);
      const auto head = expected_head(body);
      auto state = wb.al_revert(field<int>(body, "to"), head);
      return json{{"iteration", state.iteration}, {"log", state.log.back()}, {"head", wb.head()}};
    });

    get(exp + "/report", [this](const auto& req) {
      const Workbench wb = open(req.matches[1]);
      const std::string partition = req.has_param("partition") ? req.get_param_value("partition") : "test";
      const auto rows = wb.report_rows(partition);
      const Rubric rubric = wb.config().rubric;
      json out_rows = json::array();
      for (const auto& r : rows) out_rows.push_back({{"implementation", r.implementation}, {"report", r.report}});
      return json{{"partition", partition},
                  {"rows", out_rows},
                  {"table", render_report_table(rubric, rows)}};
    });
  }
};

Service::Service(std::filesystem::path home, BackendChoice backend) : impl_(std::make_unique<Impl>()) {
  impl_->home = std::move(home);
  impl_->backend = std::move(backend);
  impl_->routes();
}

Service::~Service() { stop(); }

int Service::bind(const std::string& host, int port) {
  if (port == 0) {
    const int bound = impl_->server.bind_to_any_port(host);
    if (bound < 0) throw Error("bind_failed", "cannot bind " + host, ExitCode::kInternal);
    return bound;
  }
  if (!impl_->server.bind_to_port(host, port)) {
    throw Error("bind_failed", fmt::format("cannot bind {}:{}", host, port), ExitCode::kInternal);
  }
  return port;
}

void Service::run() { impl_->server.listen_after_bind(); }

void Service::wait_until_ready() const { impl_->server.wait_until_ready(); }

void Service::stop() {
  if (impl_) impl_->server.stop();
}

}  // namespace rubric_loop
