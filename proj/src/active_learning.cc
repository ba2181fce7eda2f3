#include "rubric_loop/active_learning.hpp"

#include <algorithm>
#include <iterator>

#include <fmt/format.h>
#include <fmt/ranges.h>

#include "rubric_loop/errors.hpp"

namespace rubric_loop {

namespace {

std::vector<std::string> sorted_unique(std::vector<std::string> v) {
  std::sort(v.begin(), v.end());
  v.erase(std::unique(v.begin(), v.end()), v.end());
  return v;
}

std::set<std::string> exemplar_ids(const PromptSpec& spec) {
  std::set<std::string> out;
  for (const auto& e : spec.exemplars) out.insert(e.response.id);
  return out;
}

CandidateRole parse_role(std::string_view s) {
  if (s == "cover") return CandidateRole::kCover;
  if (s == "rebalance") return CandidateRole::kRebalance;
  throw ValidationError("bad_enum", fmt::format("unknown candidate role '{}'", s));
}

std::string role_name(CandidateRole r) { return r == CandidateRole::kCover ? "cover" : "rebalance"; }

CotExemplar candidate_exemplar(const Dataset& dataset, const std::string& id) {
  CotExemplar e;
  e.response = *dataset.response(id);
  e.gold = *dataset.gold_for(id);
  e.source = ExemplarSource::kActiveLearning;
  return e;
}

ReasoningMap draft_reasoning(const CotExemplar& e, const Rubric& rubric) {
  ReasoningMap out;
  for (const auto& s : rubric.subscores) {
    out[s.name] = compose_reasoning(normalize_response_text(e.response.text), s.criteria,
                                    e.gold.by_subscore.at(s.name));
  }
  return out;
}

}  // namespace

std::string to_string(ErrorDirection d) {
  return d == ErrorDirection::kFalsePositive ? "false_positive" : "false_negative";
}

ErrorDirection parse_error_direction(std::string_view s) {
  if (s == "false_positive" || s == "fp") return ErrorDirection::kFalsePositive;
  if (s == "false_negative" || s == "fn") return ErrorDirection::kFalseNegative;
  throw ValidationError("bad_enum", fmt::format("unknown error direction '{}'", s));
}

std::string to_string(StopStatus s) {
  switch (s) {
    case StopStatus::kContinue:
      return "continue";
    case StopStatus::kConverged:
      return "converged";
    case StopStatus::kOverfitRevert:
      return "overfit_revert";
    case StopStatus::kExhausted:
      return "exhausted";
  }
  return "continue";
}

StopStatus parse_stop_status(std::string_view s) {
  for (auto v : {StopStatus::kContinue, StopStatus::kConverged, StopStatus::kOverfitRevert,
                 StopStatus::kExhausted}) {
    if (to_string(v) == s) return v;
  }
  throw ValidationError("bad_enum", fmt::format("unknown stop status '{}'", s));
}

std::map<std::string, int> errors_by_subscore(const ALIteration& iteration) {
  std::map<std::string, int> out;
  for (const auto& r : iteration.reports.by_subscore) out[r.subscore] = 0;
  for (const auto& m : iteration.misclassified) ++out[m.subscore];
  return out;
}

std::string ALState::prompt_digest() const { return prompt_spec_digest(spec); }

ALState init_state(const PromptSpec& spec, const Split& split) {
  ALState s;
  s.spec = spec;
  s.prompt_specs[prompt_spec_digest(spec)] = spec;
  const auto in_prompt = exemplar_ids(spec);
  for (const auto& id : split.train_ids) {
    if (!in_prompt.contains(id)) s.validation_pool.push_back(id);
  }
  s.validation_pool = sorted_unique(std::move(s.validation_pool));
  s.test_ids = sorted_unique(split.test_ids);
  check_disjoint(s);
  return s;
}

void check_disjoint(const ALState& state) {
  std::vector<std::string> violations;
  const std::set<std::string> pool(state.validation_pool.begin(), state.validation_pool.end());
  const std::set<std::string> test(state.test_ids.begin(), state.test_ids.end());
  for (const auto& id : exemplar_ids(state.spec)) {
    if (pool.contains(id)) violations.push_back(fmt::format("exemplar {} is in the validation pool", id));
    if (test.contains(id)) violations.push_back(fmt::format("exemplar {} is in the test set", id));
  }
  for (const auto& id : pool) {
    if (test.contains(id)) violations.push_back(fmt::format("validation id {} is in the test set", id));
  }
  if (!violations.empty()) throw ValidationError(std::move(violations), "partition_overlap");
}

ALIteration run_validation(const ALState& state, Gateway& gateway, const Dataset& dataset,
                           const ALConfig& config, const IterationSink& sink) {
  check_disjoint(state);
  if (state.validation_pool.empty()) {
    throw ValidationError("empty_pool", "the validation pool is empty");
  }
  const Rubric& rubric = dataset.rubric;
  const auto responses = dataset.responses_for(state.validation_pool);
  const ScoringRun run = score_batch(responses, state.spec, gateway);

  const double failed = static_cast<double>(run.failures.size()) /
                        static_cast<double>(state.validation_pool.size());
  if (failed > config.failure_tolerance) {
    throw Error("too_many_failures",
                fmt::format("{} of {} generations failed (tolerance {})", run.failures.size(),
                            state.validation_pool.size(), config.failure_tolerance),
                ExitCode::kGateway);
  }

  ALIteration it;
  it.index = state.iteration;
  it.prompt_spec_digest = state.prompt_digest();
  it.validation_ids = state.validation_pool;
  it.run_digest = run_digest(run);

  std::vector<ScoreVector> preds;
  std::vector<ScoreVector> golds;
  std::vector<bool> unparsed;
  for (const auto& id : state.validation_pool) {
    const ScoreVector& gold = *dataset.gold_for(id);
    golds.push_back(gold);
    auto r = run.results.find(id);
    if (r != run.results.end()) {
      preds.push_back(r->second.scores);
      unparsed.push_back(false);
    } else {
      SubscoreValues flipped;
      for (const auto& [name, v] : gold.by_subscore) flipped[name] = 1 - v;
      preds.push_back(make_score_vector(id, std::move(flipped)));
      unparsed.push_back(true);
    }
  }
  it.reports = evaluate_scores(preds, golds, rubric);
  for (std::size_t i = 0; i < preds.size(); ++i) {
    for (const auto& s : rubric.subscores) {
      const int p = preds[i].by_subscore.at(s.name);
      const int g = golds[i].by_subscore.at(s.name);
      if (p != g) it.misclassified.push_back({preds[i].response_id, s.name, p, g, unparsed[i]});
    }
  }
  for (const auto& s : rubric.subscores) {
    std::vector<int> p, g;
    for (std::size_t i = 0; i < preds.size(); ++i) {
      p.push_back(preds[i].by_subscore.at(s.name));
      g.push_back(golds[i].by_subscore.at(s.name));
    }
    it.trends.push_back(error_trend(p, g, s.name));
  }
  it.error_count = static_cast<int>(it.misclassified.size());
  if (sink) sink(it, run);
  return it;
}

ALState record_iteration(ALState state, ALIteration iteration) {
  if (iteration.index != state.iteration) {
    throw ValidationError("stale_iteration", fmt::format("iteration {} recorded while the loop is at {}",
                                                         iteration.index, state.iteration));
  }
  if (iteration.prompt_spec_digest != state.prompt_digest()) {
    throw ValidationError("stale_iteration", "iteration was scored with a different prompt");
  }
  if (!state.history.empty() && state.history.back().index == iteration.index) {
    state.history.back() = std::move(iteration);
  } else {
    state.history.push_back(std::move(iteration));
  }
  state.pending_candidates.clear();
  return state;
}

ALState attach_tags(ALState state, std::vector<ErrorTag> tags) {
  if (state.history.empty() || state.history.back().index != state.iteration) {
    throw ValidationError("no_iteration", "run validation for the current iteration before tagging");
  }
  ALIteration& it = state.history.back();
  std::map<std::pair<std::string, std::string>, const Misclassification*> missed;
  for (const auto& m : it.misclassified) missed[{m.response_id, m.subscore}] = &m;

  std::vector<std::string> violations;
  std::set<std::string> pattern_ids;
  for (const auto& t : tags) {
    if (t.pattern_id.empty()) violations.push_back("tag has an empty pattern_id");
    if (!pattern_ids.insert(t.pattern_id).second) {
      violations.push_back("duplicate pattern_id " + t.pattern_id);
    }
    if (t.instance_ids.empty()) violations.push_back(fmt::format("tag {} has no instances", t.pattern_id));
    for (const auto& id : t.instance_ids) {
      auto m = missed.find({id, t.subscore});
      if (m == missed.end()) {
        violations.push_back(
            fmt::format("tag {}: {} is not misclassified on {}", t.pattern_id, id, t.subscore));
        continue;
      }
      const bool fp = m->second->pred == 1 && m->second->gold == 0;
      if (fp != (t.direction == ErrorDirection::kFalsePositive)) {
        violations.push_back(fmt::format("tag {}: {} on {} is not a {}", t.pattern_id, id, t.subscore,
                                         to_string(t.direction)));
      }
    }
  }
  if (!violations.empty()) throw ValidationError(std::move(violations), "invalid_tags");
  it.tags = std::move(tags);
  state.pending_candidates.clear();
  return state;
}

CandidateSelection select_candidates(const ALIteration& iteration, const Rubric& rubric,
                                     std::span<const CotExemplar> current_exemplars,
                                     const Dataset& dataset, std::size_t max_additions,
                                     const BalanceTarget& balance) {
  if (max_additions < 1) throw ValidationError("out_of_range", "max_additions must be at least 1");
  const std::set<std::string> pool(iteration.validation_ids.begin(), iteration.validation_ids.end());
  for (const auto& t : iteration.tags) {
    for (const auto& id : t.instance_ids) {
      if (!pool.contains(id)) {
        throw ValidationError("invalid_tags",
                              fmt::format("tag {} names {} outside the validation pool", t.pattern_id, id));
      }
    }
  }

  std::vector<CotExemplar> prompt(current_exemplars.begin(), current_exemplars.end());
  auto deficit_with = [&](const CotExemplar* extra) {
    if (extra != nullptr) prompt.push_back(*extra);
    const int d = check_balance(prompt, rubric, balance).deficit;
    if (extra != nullptr) prompt.pop_back();
    return d;
  };

  CandidateSelection out;
  std::set<std::string> chosen;
  std::vector<bool> treated(iteration.tags.size(), false);
  int deficit = deficit_with(nullptr);
  bool blocked = false;

  while (out.candidates.size() < max_additions) {
    std::set<std::string> open_ids;
    for (std::size_t t = 0; t < iteration.tags.size(); ++t) {
      if (!treated[t]) open_ids.insert(iteration.tags[t].instance_ids.begin(), iteration.tags[t].instance_ids.end());
    }
    if (open_ids.empty()) break;
    std::string best;
    int best_weight = 0;
    int best_deficit = 0;
    for (const auto& id : open_ids) {
      if (chosen.contains(id)) continue;
      int w = 0;
      for (std::size_t t = 0; t < iteration.tags.size(); ++t) {
        if (!treated[t] && iteration.tags[t].instance_ids.contains(id)) {
          w += static_cast<int>(iteration.tags[t].instance_ids.size());
        }
      }
      const CotExemplar e = candidate_exemplar(dataset, id);
      const int d = deficit_with(&e);
      if (d > deficit) continue;
      if (w > best_weight) {
        best = id;
        best_weight = w;
        best_deficit = d;
      }
    }
    if (best.empty()) {
      blocked = true;
      break;
    }
    Candidate c;
    c.exemplar = candidate_exemplar(dataset, best);
    c.draft_reasoning = draft_reasoning(c.exemplar, rubric);
    c.weight = best_weight;
    c.role = CandidateRole::kCover;
    for (std::size_t t = 0; t < iteration.tags.size(); ++t) {
      if (!treated[t] && iteration.tags[t].instance_ids.contains(best)) {
        treated[t] = true;
        c.covered_patterns.push_back(iteration.tags[t].pattern_id);
      }
    }
    prompt.push_back(c.exemplar);
    deficit = best_deficit;
    chosen.insert(best);
    out.candidates.push_back(std::move(c));
  }
  for (std::size_t t = 0; t < iteration.tags.size(); ++t) {
    if (!treated[t]) out.uncovered_patterns.push_back(iteration.tags[t].pattern_id);
  }
  out.full_cover = out.uncovered_patterns.empty();

  // Rebalance with whatever budget is left.
  while (deficit > 0 && out.candidates.size() < max_additions) {
    std::string best;
    int best_deficit = deficit;
    for (const auto& id : iteration.validation_ids) {
      if (chosen.contains(id)) continue;
      const CotExemplar e = candidate_exemplar(dataset, id);
      const int d = deficit_with(&e);
      if (d < best_deficit) {
        best = id;
        best_deficit = d;
      }
    }
    if (best.empty()) break;
    Candidate c;
    c.exemplar = candidate_exemplar(dataset, best);
    c.draft_reasoning = draft_reasoning(c.exemplar, rubric);
    c.role = CandidateRole::kRebalance;
    prompt.push_back(c.exemplar);
    deficit = best_deficit;
    chosen.insert(best);
    out.candidates.push_back(std::move(c));
  }

  if (blocked) {
    out.exhausted = true;
    out.exhausted_reason = fmt::format(
        "no remaining validation instance treats pattern(s) {} without unbalancing the prompt",
        fmt::join(out.uncovered_patterns, ", "));
  } else if (deficit > 0 && out.candidates.size() < max_additions) {
    out.exhausted = true;
    out.exhausted_reason =
        fmt::format("the validation pool cannot restore prompt balance (deficit {})", deficit);
  }
  return out;
}

std::pair<ALState, CandidateSelection> propose_candidates(ALState state, const Dataset& dataset,
                                                         const ALConfig& config) {
  if (state.history.empty() || state.history.back().index != state.iteration) {
    throw ValidationError("no_iteration", "run validation for the current iteration before selecting");
  }
  CandidateSelection sel = select_candidates(state.history.back(), dataset.rubric, state.spec.exemplars,
                                             dataset, config.max_additions, config.balance);
  state.pending_candidates = sel.candidates;
  return {std::move(state), std::move(sel)};
}

ALState advance(ALState state, std::span<const AcceptedCandidate> accepted) {
  if (state.history.empty() || state.history.back().index != state.iteration) {
    throw ValidationError("no_iteration", "run validation for the current iteration before advancing");
  }
  const Rubric& rubric = state.spec.rubric;
  std::map<std::string, const AcceptedCandidate*> by_id;
  std::vector<std::string> violations;
  for (const auto& a : accepted) {
    if (!by_id.emplace(a.response_id, &a).second) {
      violations.push_back("candidate accepted twice: " + a.response_id);
    }
  }
  std::set<std::string> pending;
  for (const auto& c : state.pending_candidates) pending.insert(c.exemplar.response.id);
  for (const auto& [id, a] : by_id) {
    if (!pending.contains(id)) violations.push_back(id + " is not a pending candidate");
    for (const auto& s : rubric.subscores) {
      auto r = a->reasoning.find(s.name);
      if (r == a->reasoning.end() || normalize_response_text(r->second).empty()) {
        violations.push_back(fmt::format("{} lacks reasoning for {}", id, s.name));
      }
    }
    for (const auto& [name, text] : a->reasoning) {
      if (rubric.find(name) == nullptr) violations.push_back(fmt::format("{}: unknown subscore {}", id, name));
    }
  }
  if (!violations.empty()) throw ValidationError(std::move(violations), "invalid_acceptance");

  ALIteration& it = state.history.back();
  ALLogEntry entry;
  entry.iteration = state.iteration;
  if (by_id.empty()) {
    entry.event = "noop";
  } else {
    PromptSpec next = state.spec;
    std::vector<CotExemplar> added;
    for (const auto& c : state.pending_candidates) {
      auto a = by_id.find(c.exemplar.response.id);
      if (a == by_id.end()) continue;
      CotExemplar e = c.exemplar;
      e.reasoning = a->second->reasoning;
      e.source = ExemplarSource::kActiveLearning;
      added.push_back(e);
      next.exemplars.push_back(std::move(e));
      entry.response_ids.push_back(c.exemplar.response.id);
    }
    if (next.mode == PromptMode::kZeroShot) next.mode = PromptMode::kFewShotCot;
    const int before = check_balance(state.spec.exemplars, rubric, state.spec.balance).deficit;
    const int after = check_balance(next.exemplars, rubric, next.balance).deficit;
    if (!next.allow_unbalanced && after > before) {
      throw ValidationError("unbalanced_prompt",
                            fmt::format("accepting these candidates raises the balance deficit from {} to {}",
                                        before, after));
    }
    const std::set<std::string> taken(entry.response_ids.begin(), entry.response_ids.end());
    std::erase_if(state.validation_pool, [&](const std::string& id) { return taken.contains(id); });
    it.added_exemplars = std::move(added);
    state.spec = std::move(next);
    state.prompt_specs[state.prompt_digest()] = state.spec;
    entry.event = "advance";
  }
  entry.prompt_spec_digest = state.prompt_digest();
  state.log.push_back(std::move(entry));
  state.pending_candidates.clear();
  state.iteration += 1;
  check_disjoint(state);
  return state;
}

StopDecision check_stop(const std::vector<ALIteration>& history, const ALState& state,
                        const Dataset& dataset, const ALConfig& config) {
  if (history.empty()) throw ValidationError("no_iteration", "no iteration has been validated yet");
  const ALIteration& last = history.back();
  if (last.error_count == 0) {
    return {StopStatus::kConverged,
            fmt::format("iteration {} has no misclassified validation instances", last.index),
            std::nullopt};
  }
  if (history.size() >= 2) {
    const ALIteration& prev = history[history.size() - 2];
    if (last.error_count > prev.error_count) {
      return {StopStatus::kOverfitRevert,
              fmt::format("errors rose from {} (iteration {}) to {} (iteration {})", prev.error_count,
                          prev.index, last.error_count, last.index),
              prev.index};
    }
  }
  if (state.validation_pool.empty()) {
    return {StopStatus::kExhausted, "the validation pool is empty", std::nullopt};
  }
  if (!last.tags.empty()) {
    const auto sel = select_candidates(last, dataset.rubric, state.spec.exemplars, dataset,
                                       config.max_additions, config.balance);
    if (sel.exhausted) return {StopStatus::kExhausted, sel.exhausted_reason, std::nullopt};
  }
  return {StopStatus::kContinue,
          fmt::format("iteration {} has {} errors", last.index, last.error_count), std::nullopt};
}

ALState revert(ALState state, int target_iteration) {
  auto it = std::find_if(state.history.begin(), state.history.end(),
                         [&](const ALIteration& i) { return i.index == target_iteration; });
  if (it == state.history.end()) {
    throw NotFoundError(fmt::format("no validated iteration {}", target_iteration));
  }
  auto spec = state.prompt_specs.find(it->prompt_spec_digest);
  if (spec == state.prompt_specs.end()) {
    throw NotFoundError("no prompt spec recorded for iteration " + std::to_string(target_iteration));
  }
  const auto keep = exemplar_ids(spec->second);
  ALLogEntry entry;
  entry.iteration = state.iteration;
  entry.event = "revert";
  for (const auto& e : state.spec.exemplars) {
    if (!keep.contains(e.response.id)) {
      state.validation_pool.push_back(e.response.id);
      entry.response_ids.push_back(e.response.id);
    }
  }
  state.validation_pool = sorted_unique(std::move(state.validation_pool));
  std::erase_if(state.validation_pool, [&](const std::string& id) { return keep.contains(id); });
  state.spec = spec->second;
  entry.prompt_spec_digest = state.prompt_digest();
  state.log.push_back(std::move(entry));
  state.pending_candidates.clear();
  state.iteration += 1;
  check_disjoint(state);
  return state;
}

using nlohmann::json;

void to_json(json& j, const ErrorTag& t) {
  j = json{{"pattern_id", t.pattern_id}, {"description", t.description},
           {"instance_ids", t.instance_ids}, {"subscore", t.subscore},
           {"direction", to_string(t.direction)}};
}

void from_json(const json& j, ErrorTag& t) {
  j.at("pattern_id").get_to(t.pattern_id);
  t.description = j.value("description", "");
  j.at("instance_ids").get_to(t.instance_ids);
  t.subscore = fold_subscore_name(j.at("subscore").get<std::string>());
  t.direction = parse_error_direction(j.at("direction").get<std::string>());
}

void to_json(json& j, const Misclassification& m) {
  j = json{{"response_id", m.response_id}, {"subscore", m.subscore}, {"pred", m.pred},
           {"gold", m.gold}, {"unparsed", m.unparsed}};
}

void from_json(const json& j, Misclassification& m) {
  j.at("response_id").get_to(m.response_id);
  j.at("subscore").get_to(m.subscore);
  j.at("pred").get_to(m.pred);
  j.at("gold").get_to(m.gold);
  m.unparsed = j.value("unparsed", false);
}

void to_json(json& j, const ALIteration& it) {
  json trends = json::array();
  for (const auto& t : it.trends) trends.push_back(t);
  j = json{{"index", it.index},
           {"prompt_spec_digest", it.prompt_spec_digest},
           {"validation_ids", it.validation_ids},
           {"reports", it.reports},
           {"misclassified", it.misclassified},
           {"trends", trends},
           {"tags", it.tags},
           {"added_exemplars", it.added_exemplars},
           {"error_count", it.error_count},
           {"run_digest", it.run_digest}};
}

void from_json(const json& j, ALIteration& it) {
  j.at("index").get_to(it.index);
  j.at("prompt_spec_digest").get_to(it.prompt_spec_digest);
  j.at("validation_ids").get_to(it.validation_ids);
  j.at("reports").get_to(it.reports);
  j.at("misclassified").get_to(it.misclassified);
  it.trends.clear();
  for (const auto& t : j.at("trends")) it.trends.push_back(t.get<TrendReport>());
  j.at("tags").get_to(it.tags);
  j.at("added_exemplars").get_to(it.added_exemplars);
  j.at("error_count").get_to(it.error_count);
  it.run_digest = j.value("run_digest", "");
}

void to_json(json& j, const StopDecision& d) {
  j = json{{"status", to_string(d.status)}, {"reason", d.reason}};
  j["revert_to"] = d.revert_to ? json(*d.revert_to) : json(nullptr);
}

void from_json(const json& j, StopDecision& d) {
  d.status = parse_stop_status(j.at("status").get<std::string>());
  d.reason = j.value("reason", "");
  d.revert_to.reset();
  if (j.contains("revert_to") && !j["revert_to"].is_null()) d.revert_to = j["revert_to"].get<int>();
}

void to_json(json& j, const ALConfig& c) {
  j = json{{"max_iterations", c.max_iterations}, {"max_additions", c.max_additions},
           {"balance", c.balance}, {"failure_tolerance", c.failure_tolerance}};
}

void from_json(const json& j, ALConfig& c) {
  c = ALConfig{};
  c.max_iterations = j.value("max_iterations", c.max_iterations);
  c.max_additions = j.value("max_additions", c.max_additions);
  if (j.contains("balance")) j.at("balance").get_to(c.balance);
  c.failure_tolerance = j.value("failure_tolerance", c.failure_tolerance);
}

void to_json(json& j, const Candidate& c) {
  j = json{{"exemplar", c.exemplar}, {"draft_reasoning", c.draft_reasoning},
           {"covered_patterns", c.covered_patterns}, {"weight", c.weight},
           {"role", role_name(c.role)}};
}

void from_json(const json& j, Candidate& c) {
  j.at("exemplar").get_to(c.exemplar);
  j.at("draft_reasoning").get_to(c.draft_reasoning);
  j.at("covered_patterns").get_to(c.covered_patterns);
  j.at("weight").get_to(c.weight);
  c.role = parse_role(j.at("role").get<std::string>());
}

void to_json(json& j, const CandidateSelection& s) {
  j = json{{"candidates", s.candidates}, {"uncovered_patterns", s.uncovered_patterns},
           {"full_cover", s.full_cover}, {"exhausted", s.exhausted},
           {"exhausted_reason", s.exhausted_reason}};
}

void from_json(const json& j, CandidateSelection& s) {
  j.at("candidates").get_to(s.candidates);
  j.at("uncovered_patterns").get_to(s.uncovered_patterns);
  j.at("full_cover").get_to(s.full_cover);
  j.at("exhausted").get_to(s.exhausted);
  s.exhausted_reason = j.value("exhausted_reason", "");
}

void to_json(json& j, const AcceptedCandidate& a) {
  j = json{{"response_id", a.response_id}, {"reasoning", a.reasoning}};
}

void from_json(const json& j, AcceptedCandidate& a) {
  j.at("response_id").get_to(a.response_id);
  a.reasoning.clear();
  for (const auto& [k, v] : j.at("reasoning").items()) a.reasoning[fold_subscore_name(k)] = v.get<std::string>();
}

void to_json(json& j, const ALLogEntry& e) {
  j = json{{"iteration", e.iteration}, {"event", e.event}, {"response_ids", e.response_ids},
           {"prompt_spec_digest", e.prompt_spec_digest}};
}

void from_json(const json& j, ALLogEntry& e) {
  j.at("iteration").get_to(e.iteration);
  j.at("event").get_to(e.event);
  j.at("response_ids").get_to(e.response_ids);
  j.at("prompt_spec_digest").get_to(e.prompt_spec_digest);
}

void to_json(json& j, const ALState& s) {
  json specs = json::object();
  for (const auto& [d, spec] : s.prompt_specs) specs[d] = spec;
  j = json{{"iteration", s.iteration},
           {"spec", s.spec},
           {"prompt_specs", specs},
           {"validation_pool", s.validation_pool},
           {"test_ids", s.test_ids},
           {"history", s.history},
           {"pending_candidates", s.pending_candidates},
           {"log", s.log}};
}

void from_json(const json& j, ALState& s) {
  j.at("iteration").get_to(s.iteration);
  j.at("spec").get_to(s.spec);
  s.prompt_specs.clear();
  for (const auto& [d, spec] : j.at("prompt_specs").items()) s.prompt_specs[d] = spec.get<PromptSpec>();
  j.at("validation_pool").get_to(s.validation_pool);
  j.at("test_ids").get_to(s.test_ids);
  j.at("history").get_to(s.history);
  j.at("pending_candidates").get_to(s.pending_candidates);
  j.at("log").get_to(s.log);
}

}  // namespace rubric_loop
