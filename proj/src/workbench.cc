#include "rubric_loop/workbench.hpp"

#include <algorithm>
#include <cstdlib>

#include <fmt/format.h>

#include "rubric_loop/digest.hpp"
#include "rubric_loop/errors.hpp"
#include "rubric_loop/mock_scripts.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace rubric_loop {

namespace {

const std::vector<std::string> kImplementations{"zero_shot", "few_shot", "few_shot_cot", kCotAl};

json load_json_file(const fs::path& path) {
  auto j = json::parse(read_file(path), nullptr, false);
  if (j.is_discarded()) throw ValidationError("json_parse", path.string() + " is not valid JSON");
  return j;
}

MockBackend::Script mock_script(const std::string& spec, const Dataset& d) {
  const auto colon = spec.find(':');
  const std::string name = spec.substr(0, colon);
  const std::string arg = colon == std::string::npos ? "" : spec.substr(colon + 1);
  if (name == "echo-gold") return echo_gold_script(d.rubric, d.responses, d.gold);
  if (name == "garbage") {
    return [](const CompletionRequest&) { return BackendReply::ok(std::string(kGarbageAnswer)); };
  }
  if (arg.empty()) throw ValidationError("invalid_mock_script", fmt::format("unknown mock script '{}'", spec));
  const json j = load_json_file(arg);
  if (name == "table") {
    auto table = j.get<std::map<std::string, std::string>>();
    return [table = std::move(table)](const CompletionRequest& request) {
      auto it = table.find(request.response_id);
      if (it == table.end()) {
        BackendReply r;
        r.status = BackendStatus::kRefusal;
        r.detail = "no scripted answer for " + request.response_id;
        return r;
      }
      return BackendReply::ok(it->second);
    };
  }
  if (name == "flip") {
    Perturbation p;
    for (const auto& f : j.value("flips", json::array())) {
      p.flips.insert({f.at(0).get<std::string>(), fold_subscore_name(f.at(1).get<std::string>())});
    }
    p.garbage_ids = j.value("garbage_ids", std::set<std::string>{});
    return perturbed_script(d.rubric, d.responses, d.gold, std::move(p));
  }
  if (name == "repair") {
    std::vector<RepairRule> rules;
    for (const auto& r : j) {
      rules.push_back({r.at("response_id").get<std::string>(),
                       fold_subscore_name(r.at("subscore").get<std::string>()),
                       r.at("fixed_by").get<std::set<std::string>>()});
    }
    return repairing_script(d.rubric, d.responses, d.gold, std::move(rules));
  }
  throw ValidationError("invalid_mock_script", fmt::format("unknown mock script '{}'", spec));
}

std::string run_label(const std::string& implementation, const std::string& partition) {
  return implementation + "." + partition;
}

std::string al_run_label(int iteration) { return fmt::format("al.{}", iteration); }

}  // namespace

fs::path default_home() {
  if (const char* env = std::getenv(kHomeEnv); env != nullptr && *env != '\0') return env;
  return fs::current_path() / ".rubric_loop";
}

std::unique_ptr<Gateway> make_gateway(const GatewayConfig& config, const BackendChoice& choice,
                                      const Dataset& dataset) {
  if (config.backend == BackendKind::kLive) {
    return std::make_unique<Gateway>(config, std::make_unique<LiveBackend>(config, choice.api_key));
  }
  auto backend = std::make_unique<MockBackend>();
  backend->set_fallback(mock_script(choice.mock_script, dataset));
  return std::make_unique<Gateway>(config, std::move(backend));
}

Workbench::Workbench(fs::path home, std::string experiment_id)
    : home_(std::move(home)), store_(home_, std::move(experiment_id)) {}

Workbench Workbench::init(const fs::path& home, const ExperimentConfig& config,
                          const fs::path& dataset_path) {
  require_valid(config.rubric);
  auto violations = config_violations(config.gateway);
  if (config.al.max_iterations < 0) violations.push_back("al.max_iterations must be >= 0");
  if (config.al.max_additions < 1) violations.push_back("al.max_additions must be >= 1");
  if (!violations.empty()) throw ValidationError(std::move(violations), "invalid_config");
  const std::string bytes = read_file(dataset_path);
  parse_dataset(bytes, config.rubric);
  Workbench wb(home, config.experiment_id);
  const json ref{{"path", fs::absolute(dataset_path).lexically_normal().string()},
                 {"sha256", sha256_hex(bytes)}};
  ExperimentWriter::create(wb.store_, json(config), ref);
  return wb;
}

ExperimentConfig Workbench::config() const { return store_.config().get<ExperimentConfig>(); }

Dataset Workbench::dataset() const {
  const json ref = store_.dataset_ref();
  const std::string bytes = read_file(ref.at("path").get<std::string>());
  if (sha256_hex(bytes) != ref.at("sha256").get<std::string>()) {
    throw CorruptionError(fmt::format("dataset {} changed since the experiment was created",
                                      ref.at("path").get<std::string>()));
  }
  return parse_dataset(bytes, config().rubric);
}

Split Workbench::split(std::optional<double> ratio, std::optional<std::uint64_t> seed) {
  ExperimentWriter w(store_);
  const ExperimentConfig cfg = config();
  Split s = split_dataset(dataset(), ratio.value_or(cfg.split_ratio), seed.value_or(cfg.seed));
  if (auto existing = current_split()) {
    if (*existing == s) return s;
    throw ConflictError("split_exists", "the experiment already has a different split");
  }
  w.stage(record_kind::kSplit, s);
  w.commit();
  return s;
}

std::optional<Split> Workbench::current_split() const {
  auto e = store_.latest(record_kind::kSplit);
  if (!e) return std::nullopt;
  return store_.load(e->kind, e->digest).get<Split>();
}

std::vector<std::string> Workbench::partition_ids(const std::string& partition) const {
  if (partition == "all") return dataset().ids();
  auto s = current_split();
  if (!s) throw NotFoundError("no split yet; run split first");
  if (partition == "test") return s->test_ids;
  if (partition == "train") return s->train_ids;
  throw ValidationError("invalid_partition", fmt::format("unknown partition '{}'", partition));
}

std::vector<std::string> Workbench::irr_sample(std::optional<double> fraction) {
  ExperimentWriter w(store_);
  auto train = partition_ids("train");
  const ExperimentConfig cfg = config();
  auto ids = sample_for_irr(train, fraction.value_or(cfg.irr_fraction), cfg.seed);
  w.stage(record_kind::kIrrSample, ids);
  w.commit();
  return ids;
}

std::vector<std::string> Workbench::current_irr_sample() const {
  auto e = store_.latest(record_kind::kIrrSample);
  if (!e) throw NotFoundError("no IRR sample yet; run irr sample first");
  return store_.load(e->kind, e->digest).get<std::vector<std::string>>();
}

IrrRound Workbench::irr_compute(const RaterScores& a, const RaterScores& b) {
  ExperimentWriter w(store_);
  const auto sample = current_irr_sample();
  const std::set<std::string> expected(sample.begin(), sample.end());
  for (const RaterScores* r : {&a, &b}) {
    std::set<std::string> got;
    for (const auto& v : r->scores) got.insert(v.response_id);
    if (got != expected) {
      throw ValidationError("id_mismatch",
                            fmt::format("rater {} did not score exactly the IRR sample", r->rater_id));
    }
  }
  const int index = static_cast<int>(store_.all(record_kind::kIrrRound).size()) + 1;
  IrrRound round = compute_round(a, b, config().rubric, index);
  w.stage(record_kind::kIrrRound, round);
  w.commit();
  return round;
}

std::optional<IrrRound> Workbench::latest_irr_round() const {
  auto e = store_.latest(record_kind::kIrrRound);
  if (!e) return std::nullopt;
  return store_.load(e->kind, e->digest).get<IrrRound>();
}

std::vector<CotExemplar> Workbench::irr_resolve(const std::vector<ConsensusRecord>& consensus,
                                                const ReasoningDrafts& drafts,
                                                const std::optional<std::string>& expected_head) {
  ExperimentWriter w(store_);
  auto round = latest_irr_round();
  if (!round) throw NotFoundError("no IRR round yet; run irr compute first");
  if (!round->passed) {
    throw GateFailedError(fmt::format("IRR round {} did not pass the kappa gate", round->round_index));
  }
  const Dataset d = dataset();
  auto exemplars = emit_exemplars(*round, consensus, drafts, d.responses, d.rubric);
  w.stage(record_kind::kConsensus, consensus);
  w.stage(record_kind::kExemplars, exemplars);
  w.commit(expected_head);
  return exemplars;
}

std::vector<CotExemplar> Workbench::current_exemplars() const {
  auto e = store_.latest(record_kind::kExemplars);
  if (!e) throw NotFoundError("no exemplars yet; run irr resolve first");
  return store_.load(e->kind, e->digest).get<std::vector<CotExemplar>>();
}

PromptSpec Workbench::build_prompt(PromptMode mode, bool allow_unbalanced) {
  ExperimentWriter w(store_);
  const ExperimentConfig cfg = config();
  PromptSpec spec;
  spec.rubric = cfg.rubric;
  spec.persona_preamble = apply_template(cfg.persona_template, cfg.rubric);
  spec.format_instructions = apply_template(cfg.format_template, cfg.rubric);
  spec.mode = mode;
  spec.balance = cfg.al.balance;
  spec.allow_unbalanced = allow_unbalanced;
  if (mode != PromptMode::kZeroShot) {
    auto pool = current_exemplars();
    spec.exemplars = cfg.max_exemplars == 0 ? std::move(pool)
                                            : select_balanced(pool, cfg.rubric, cfg.max_exemplars);
  }
  const BalanceReport balance = check_balance(spec.exemplars, spec.rubric, spec.balance);
  render_prompt(spec);
  w.stage(record_kind::kPromptSpec, spec, to_string(mode));
  w.stage(record_kind::kBalance, balance, to_string(mode));
  w.commit();
  return spec;
}

std::optional<PromptSpec> Workbench::prompt_for(const std::string& implementation) const {
  if (implementation == kCotAl) {
    if (!al_started()) return std::nullopt;
    return al_state().spec;
  }
  auto e = store_.latest(record_kind::kPromptSpec, implementation);
  if (!e) return std::nullopt;
  return store_.load(e->kind, e->digest).get<PromptSpec>();
}

ScoringRun Workbench::score(const std::string& implementation, const std::string& partition,
                            Gateway& gateway, bool resume) {
  ExperimentWriter w(store_);
  auto spec = prompt_for(implementation);
  if (!spec) throw NotFoundError(fmt::format("no {} prompt yet", implementation));
  const Dataset d = dataset();
  const auto ids = partition_ids(partition);
  const auto responses = d.responses_for(ids);
  const std::string label = run_label(implementation, partition);

  std::optional<ScoringRun> previous;
  if (resume) {
    if (auto e = store_.latest(record_kind::kRun, label)) {
      auto prev = store_.load(e->kind, e->digest).get<ScoringRun>();
      if (prev.prompt_digest == prompt_spec_digest(*spec)) previous = std::move(prev);
    }
  }
  ScoringRun run = score_batch(responses, *spec, gateway, previous ? &*previous : nullptr);
  w.stage(record_kind::kRun, run, label);

  std::vector<ScoreVector> preds = run.predictions();
  std::vector<std::string> scored;
  for (const auto& p : preds) scored.push_back(p.response_id);
  if (!preds.empty()) {
    const EvaluationReport report = evaluate_scores(preds, d.gold_for_all(scored), d.rubric);
    w.stage(record_kind::kEvaluation,
            json{{"implementation", implementation},
                 {"partition", partition},
                 {"report", report},
                 {"scored", preds.size()},
                 {"failed", run.failures.size()},
                 {"run_digest", run_digest(run)}},
            label);
  }
  w.commit();
  return run;
}

std::optional<EvaluationReport> Workbench::evaluation(const std::string& implementation,
                                                      const std::string& partition) const {
  auto e = store_.latest(record_kind::kEvaluation, run_label(implementation, partition));
  if (!e) return std::nullopt;
  return store_.load(e->kind, e->digest).at("report").get<EvaluationReport>();
}

std::vector<ReportRow> Workbench::report_rows(const std::string& partition) const {
  std::vector<ReportRow> rows;
  for (const auto& impl : kImplementations) {
    if (auto r = evaluation(impl, partition)) rows.push_back({impl, *r});
  }
  return rows;
}

bool Workbench::al_started() const { return store_.latest(record_kind::kAlState).has_value(); }

ALState Workbench::al_state() const {
  auto e = store_.latest(record_kind::kAlState);
  if (!e) throw NotFoundError("active learning has not started; run al init first");
  return store_.load(e->kind, e->digest).get<ALState>();
}

ALState Workbench::commit_state(ExperimentWriter& w, const ALState& state, const json& event,
                                const std::optional<std::string>& expected_head) {
  w.stage(record_kind::kAlEvent, event);
  w.stage(record_kind::kPromptSpec, state.spec, kCotAl);
  w.stage(record_kind::kAlState, state);
  w.commit(expected_head);
  return state;
}

ALState Workbench::al_init(const std::string& implementation) {
  ExperimentWriter w(store_);
  if (al_started()) throw ConflictError("already_started", "active learning already started");
  auto spec = prompt_for(implementation);
  if (!spec) throw NotFoundError(fmt::format("no {} prompt yet", implementation));
  auto split = current_split();
  if (!split) throw NotFoundError("no split yet; run split first");
  ALState state = init_state(*spec, *split);
  return commit_state(w, state, json{{"event", "init"}, {"from", implementation}}, std::nullopt);
}

Workbench::ValidationOutcome Workbench::al_validate(Gateway& gateway,
                                                    const std::optional<std::string>& expected_head) {
  ExperimentWriter w(store_);
  if (expected_head && *expected_head != store_.head()) {
    throw ConflictError("stale_head", "experiment changed since it was read; reload and retry");
  }
  ALState state = al_state();
  const Dataset d = dataset();
  const ExperimentConfig cfg = config();
  ALIteration it = run_validation(state, gateway, d, cfg.al, [&](const ALIteration& i, const ScoringRun& run) {
    w.stage(record_kind::kRun, run, al_run_label(i.index));
    w.commit();
  });
  state = record_iteration(std::move(state), it);
  const StopDecision decision = check_stop(state.history, state, d, cfg.al);
  w.stage(record_kind::kAlIteration, it, std::to_string(it.index));
  commit_state(w, state,
               json{{"event", "validate"}, {"iteration", it.index}, {"decision", decision}},
               std::nullopt);
  return {std::move(it), decision};
}

ALState Workbench::al_tag(std::vector<ErrorTag> tags, const std::optional<std::string>& expected_head) {
  ExperimentWriter w(store_);
  ALState state = attach_tags(al_state(), std::move(tags));
  w.stage(record_kind::kAlTags, state.history.back().tags, std::to_string(state.iteration));
  return commit_state(w, state, json{{"event", "tag"}, {"iteration", state.iteration}}, expected_head);
}

CandidateSelection Workbench::al_select(const std::optional<std::string>& expected_head) {
  ExperimentWriter w(store_);
  auto [state, selection] = propose_candidates(al_state(), dataset(), config().al);
  w.stage(record_kind::kAlCandidates, selection, std::to_string(state.iteration));
  commit_state(w, state, json{{"event", "select"}, {"iteration", state.iteration}}, expected_head);
  return selection;
}

ALState Workbench::al_accept(const std::vector<AcceptedCandidate>& accepted,
                             const std::optional<std::string>& expected_head) {
  ExperimentWriter w(store_);
  ALState state = al_state();
  const ExperimentConfig cfg = config();
  const auto used = std::count_if(state.log.begin(), state.log.end(),
                                  [](const ALLogEntry& e) { return e.event == "advance"; });
  if (!accepted.empty() && used >= cfg.al.max_iterations) {
    throw ValidationError("iteration_budget",
                          fmt::format("the iteration budget ({}) is used up", cfg.al.max_iterations));
  }
  state = advance(std::move(state), accepted);
  return commit_state(w, state, json{{"event", state.log.back().event}, {"entry", state.log.back()}},
                      expected_head);
}

ALState Workbench::al_revert(int target_iteration, const std::optional<std::string>& expected_head) {
  ExperimentWriter w(store_);
  ALState state = revert(al_state(), target_iteration);
  return commit_state(w, state, json{{"event", "revert"}, {"entry", state.log.back()}}, expected_head);
}

std::optional<StopDecision> Workbench::al_decision() const {
  const ALState state = al_state();
  if (state.history.empty()) return std::nullopt;
  return check_stop(state.history, state, dataset(), config().al);
}

json Workbench::al_status() const {
  const ALState state = al_state();
  const ExperimentConfig cfg = config();
  json history = json::array();
  for (const auto& it : state.history) {
    history.push_back({{"index", it.index},
                       {"error_count", it.error_count},
                       {"errors_by_subscore", errors_by_subscore(it)},
                       {"prompt_spec_digest", it.prompt_spec_digest},
                       {"tags", it.tags.size()},
                       {"added_exemplars", it.added_exemplars.size()},
                       {"validation_size", it.validation_ids.size()}});
  }
  const auto advances = std::count_if(state.log.begin(), state.log.end(),
                                      [](const ALLogEntry& e) { return e.event == "advance"; });
  const auto exemplars = state.spec.exemplars.size();
  json out{{"iteration", state.iteration},
           {"max_iterations", cfg.al.max_iterations},
           {"advances", advances},
           {"validation_pool_size", state.validation_pool.size()},
           {"exemplar_count", exemplars},
           {"pool_to_exemplar_ratio",
            exemplars == 0 ? json(nullptr)
                           : json(static_cast<double>(state.validation_pool.size()) /
                                  static_cast<double>(exemplars))},
           {"prompt_spec_digest", state.prompt_digest()},
           {"history", history},
           {"pending_candidates", state.pending_candidates},
           {"log", state.log},
           {"head", store_.head()}};
  auto decision = al_decision();
  out["decision"] = decision ? json(*decision) : json(nullptr);
  return out;
}

json Workbench::al_misclassified(int iteration) const {
  const ALState state = al_state();
  auto it = std::find_if(state.history.begin(), state.history.end(),
                         [&](const ALIteration& i) { return i.index == iteration; });
  if (it == state.history.end()) throw NotFoundError(fmt::format("no validated iteration {}", iteration));
  std::optional<ScoringRun> run;
  if (auto e = store_.latest(record_kind::kRun, al_run_label(iteration))) {
    run = store_.load(e->kind, e->digest).get<ScoringRun>();
  }
  const Dataset d = dataset();
  json out = json::array();
  for (const auto& m : it->misclassified) {
    json item = m;
    item["response_text"] = d.response(m.response_id)->text;
    item["generation"] = nullptr;
    if (run) {
      if (auto r = run->results.find(m.response_id); r != run->results.end()) {
        item["generation"] = r->second.raw.raw_text;
        auto reason = r->second.reasoning.find(m.subscore);
        if (reason != r->second.reasoning.end()) item["model_reasoning"] = reason->second;
      } else {
        for (const auto& f : run->failures) {
          if (f.response_id != m.response_id) continue;
          item["failure"] = {{"code", f.code}, {"message", f.message}};
          if (f.raw) item["generation"] = f.raw->raw_text;
        }
      }
    }
    out.push_back(std::move(item));
  }
  return out;
}

json Workbench::summary() const {
  const ExperimentConfig cfg = config();
  json kinds = json::object();
  for (const auto& e : store_.manifest()) kinds[e.kind] = kinds.value(e.kind, 0) + 1;
  json out{{"experiment_id", store_.id()},
           {"head", store_.head()},
           {"question_id", cfg.rubric.question_id},
           {"subscores", cfg.rubric.subscore_names()},
           {"records", kinds}};
  if (auto s = current_split()) {
    out["split"] = {{"train", s->train_ids.size()}, {"test", s->test_ids.size()}, {"seed", s->seed}};
  }
  if (auto r = latest_irr_round()) {
    out["irr"] = {{"round", r->round_index}, {"kappa", r->kappa_by_subscore}, {"passed", r->passed},
                  {"disagreements", r->disagreements.size()}};
  }
  json prompts = json::array();
  for (const auto& impl : kImplementations) {
    if (store_.latest(record_kind::kPromptSpec, impl)) prompts.push_back(impl);
  }
  out["prompts"] = prompts;
  out["al_started"] = al_started();
  return out;
}

void to_json(json& j, const ExperimentConfig& c) {
  j = json{{"experiment_id", c.experiment_id},
           {"rubric", c.rubric},
           {"gateway", c.gateway},
           {"al", c.al},
           {"split_ratio", c.split_ratio},
           {"seed", c.seed},
           {"irr_fraction", c.irr_fraction},
           {"max_exemplars", c.max_exemplars},
           {"persona_template", c.persona_template},
           {"format_template", c.format_template}};
}

void from_json(const json& j, ExperimentConfig& c) {
  c = ExperimentConfig{};
  j.at("experiment_id").get_to(c.experiment_id);
  j.at("rubric").get_to(c.rubric);
  if (j.contains("gateway")) j.at("gateway").get_to(c.gateway);
  if (j.contains("al")) j.at("al").get_to(c.al);
  c.split_ratio = j.value("split_ratio", c.split_ratio);
  c.seed = j.value("seed", c.seed);
  c.irr_fraction = j.value("irr_fraction", c.irr_fraction);
  c.max_exemplars = j.value("max_exemplars", c.max_exemplars);
  c.persona_template = j.value("persona_template", c.persona_template);
  c.format_template = j.value("format_template", c.format_template);
}

}  // namespace rubric_loop
