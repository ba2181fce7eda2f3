#include "rubric_loop/irr.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include <fmt/format.h>

#include "rubric_loop/csv.hpp"
#include "rubric_loop/errors.hpp"
#include "rubric_loop/metrics.hpp"
#include "rubric_loop/prng.hpp"

namespace rubric_loop {

namespace {

std::map<std::string, const ScoreVector*> by_id(const RaterScores& r) {
  std::map<std::string, const ScoreVector*> out;
  for (const auto& v : r.scores) out[v.response_id] = &v;
  return out;
}

}  // namespace

std::vector<std::string> sample_for_irr(std::span<const std::string> ids, double fraction,
                                        std::uint64_t seed) {
  if (ids.empty()) throw ValidationError("empty_input", "cannot sample from an empty dataset");
  if (!(fraction > 0.0 && fraction <= 1.0)) {
    throw ValidationError("out_of_range", fmt::format("sample fraction {} outside (0, 1]", fraction));
  }
  std::vector<std::string> shuffled =
      canonical_shuffle(std::vector<std::string>(ids.begin(), ids.end()), seed);
  // The epsilon keeps 0.2 * 100 at 20 despite binary rounding.
  auto k = static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(ids.size()) - 1e-9));
  k = std::clamp<std::size_t>(k, 1, shuffled.size());
  shuffled.resize(k);
  std::sort(shuffled.begin(), shuffled.end());
  return shuffled;
}

bool gate_passes(const std::map<std::string, double>& kappa_by_subscore, double threshold) {
  return std::all_of(kappa_by_subscore.begin(), kappa_by_subscore.end(),
                     [&](const auto& kv) { return kv.second > threshold; });
}

IrrRound compute_round(const RaterScores& a, const RaterScores& b, const Rubric& rubric,
                       int round_index, double threshold) {
  std::vector<std::string> violations = rater_violations(a, rubric);
  for (auto& v : rater_violations(b, rubric)) violations.push_back(std::move(v));
  if (round_index < 1) violations.push_back("round index must be >= 1");
  if (!violations.empty()) throw ValidationError(std::move(violations), "invalid_rater_scores");

  const auto a_by_id = by_id(a);
  const auto b_by_id = by_id(b);
  std::vector<std::string> mismatch;
  for (const auto& [id, v] : a_by_id) {
    if (!b_by_id.contains(id)) mismatch.push_back(fmt::format("{} scored only by {}", id, a.rater_id));
  }
  for (const auto& [id, v] : b_by_id) {
    if (!a_by_id.contains(id)) mismatch.push_back(fmt::format("{} scored only by {}", id, b.rater_id));
  }
  if (!mismatch.empty()) throw ValidationError(std::move(mismatch), "id_mismatch");
  if (a_by_id.empty()) throw ValidationError("empty_input", "raters scored no responses");

  IrrRound round;
  round.round_index = round_index;
  round.rater_a = a;
  round.rater_b = b;
  round.threshold = threshold;
  for (const auto& s : rubric.subscores) {
    std::vector<int> la, lb;
    for (const auto& [id, va] : a_by_id) {
      la.push_back(va->by_subscore.at(s.name));
      lb.push_back(b_by_id.at(id)->by_subscore.at(s.name));
    }
    round.kappa_by_subscore[s.name] = cohen_kappa(la, lb);
  }
  for (const auto& [id, va] : a_by_id) {
    const auto* vb = b_by_id.at(id);
    for (const auto& s : rubric.subscores) {
      const int x = va->by_subscore.at(s.name);
      const int y = vb->by_subscore.at(s.name);
      if (x != y) round.disagreements.push_back({id, s.name, x, y});
    }
  }
  round.passed = gate_passes(round.kappa_by_subscore, threshold);
  return round;
}

std::vector<std::string> failing_subscores(const IrrRound& round, const Rubric& rubric) {
  std::vector<std::string> out;
  for (const auto& s : rubric.subscores) {
    auto it = round.kappa_by_subscore.find(s.name);
    if (it == round.kappa_by_subscore.end() || !(it->second > round.threshold)) out.push_back(s.name);
  }
  return out;
}

std::vector<CotExemplar> emit_exemplars(const IrrRound& round,
                                        std::span<const ConsensusRecord> consensus,
                                        const ReasoningDrafts& drafts,
                                        std::span<const StudentResponse> responses,
                                        const Rubric& rubric) {
  std::vector<std::string> violations;
  std::map<std::pair<std::string, std::string>, const ConsensusRecord*> resolved;
  for (const auto& c : consensus) {
    if (c.resolved_value != 0 && c.resolved_value != 1) {
      violations.push_back(fmt::format("consensus for ({}, {}) has non-binary value {}",
                                       c.response_id, c.subscore, c.resolved_value));
    }
    if (normalize_response_text(c.rationale).empty()) {
      violations.push_back(fmt::format("consensus for ({}, {}) has an empty rationale",
                                       c.response_id, c.subscore));
    }
    if (rubric.find(c.subscore) == nullptr) {
      violations.push_back(fmt::format("consensus names unknown subscore {}", c.subscore));
    }
    if (!resolved.emplace(std::pair{c.response_id, c.subscore}, &c).second) {
      violations.push_back(fmt::format("duplicate consensus for ({}, {})", c.response_id, c.subscore));
    }
  }
  std::set<std::string> disputed_ids;
  for (const auto& d : round.disagreements) {
    disputed_ids.insert(d.response_id);
    if (!resolved.contains({d.response_id, d.subscore})) {
      violations.push_back(
          fmt::format("uncovered disagreement ({}, {})", d.response_id, d.subscore));
    }
  }
  std::map<std::string, const StudentResponse*> response_by_id;
  for (const auto& r : responses) response_by_id[r.id] = &r;
  for (const auto& v : round.rater_a.scores) {
    if (!response_by_id.contains(v.response_id)) {
      violations.push_back("no response text for " + v.response_id);
    }
  }
  if (!violations.empty()) {
    const bool uncovered = std::any_of(violations.begin(), violations.end(), [](const auto& v) {
      return v.starts_with("uncovered disagreement");
    });
    throw ValidationError(std::move(violations),
                          uncovered ? "uncovered_disagreement" : "invalid_consensus");
  }

  std::vector<CotExemplar> agreed, consensual;
  std::vector<const ScoreVector*> ordered;
  for (const auto& v : round.rater_a.scores) ordered.push_back(&v);
  std::sort(ordered.begin(), ordered.end(),
            [](const auto* x, const auto* y) { return x->response_id < y->response_id; });
  for (const ScoreVector* v : ordered) {
    const std::string& id = v->response_id;
    CotExemplar e;
    e.response = *response_by_id.at(id);
    SubscoreValues values = v->by_subscore;
    const auto draft_it = drafts.find(id);
    for (const auto& s : rubric.subscores) {
      auto cit = resolved.find({id, s.name});
      if (cit != resolved.end()) values[s.name] = cit->second->resolved_value;
      if (draft_it != drafts.end()) {
        auto t = draft_it->second.find(s.name);
        if (t != draft_it->second.end() && !normalize_response_text(t->second).empty()) {
          e.reasoning[s.name] = t->second;
          continue;
        }
      }
      if (cit != resolved.end()) e.reasoning[s.name] = cit->second->rationale;
    }
    e.gold = make_score_vector(id, std::move(values));
    const bool disputed = disputed_ids.contains(id);
    e.source = disputed ? ExemplarSource::kIrrDisagreedConsensus : ExemplarSource::kIrrAgreed;
    (disputed ? consensual : agreed).push_back(std::move(e));
  }
  agreed.insert(agreed.end(), std::make_move_iterator(consensual.begin()),
                std::make_move_iterator(consensual.end()));
  return agreed;
}

std::string disagreement_worksheet_csv(const IrrRound& round,
                                       std::span<const ConsensusRecord> consensus) {
  std::map<std::pair<std::string, std::string>, const ConsensusRecord*> resolved;
  for (const auto& c : consensus) resolved[{c.response_id, c.subscore}] = &c;
  std::string out = csv::row({"response_id", "subscore", "rater_a", "rater_b", "consensus", "rationale"});
  for (const auto& d : round.disagreements) {
    auto it = resolved.find({d.response_id, d.subscore});
    const bool has = it != resolved.end();
    out += csv::row({d.response_id, d.subscore, std::to_string(d.a_value), std::to_string(d.b_value),
                     has ? std::to_string(it->second->resolved_value) : "",
                     has ? it->second->rationale : ""});
  }
  return out;
}

std::vector<ConsensusRecord> parse_worksheet_csv(std::string_view text,
                                                 const std::vector<std::string>& resolved_by) {
  const auto rows = csv::parse(text);
  if (rows.empty()) throw ValidationError("csv_parse", "worksheet is empty");
  const std::vector<std::string> header{"response_id", "subscore", "rater_a", "rater_b", "consensus", "rationale"};
  if (rows.front() != header) {
    throw ValidationError("csv_parse", "worksheet header must be " + csv::row(header));
  }
  std::vector<ConsensusRecord> out;
  std::vector<std::string> violations;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const auto& r = rows[i];
    if (r.size() != header.size()) {
      violations.push_back(fmt::format("worksheet row {} has {} columns", i + 1, r.size()));
      continue;
    }
    if (normalize_response_text(r[4]).empty()) continue;
    const std::string value = normalize_response_text(r[4]);
    if (value != "0" && value != "1") {
      violations.push_back(fmt::format("worksheet row {}: consensus '{}' is not 0 or 1", i + 1, r[4]));
      continue;
    }
    out.push_back({r[0], r[1], value == "1" ? 1 : 0, r[5], resolved_by});
  }
  if (!violations.empty()) throw ValidationError(std::move(violations), "csv_parse");
  return out;
}

using nlohmann::json;

void to_json(json& j, const Disagreement& d) {
  j = json{{"response_id", d.response_id}, {"subscore", d.subscore}, {"a_value", d.a_value},
           {"b_value", d.b_value}};
}

void from_json(const json& j, Disagreement& d) {
  j.at("response_id").get_to(d.response_id);
  j.at("subscore").get_to(d.subscore);
  j.at("a_value").get_to(d.a_value);
  j.at("b_value").get_to(d.b_value);
}

void to_json(json& j, const IrrRound& r) {
  j = json{{"round_index", r.round_index},
           {"rater_a", r.rater_a},
           {"rater_b", r.rater_b},
           {"kappa_by_subscore", r.kappa_by_subscore},
           {"disagreements", r.disagreements},
           {"passed", r.passed},
           {"threshold", r.threshold}};
}

void from_json(const json& j, IrrRound& r) {
  j.at("round_index").get_to(r.round_index);
  j.at("rater_a").get_to(r.rater_a);
  j.at("rater_b").get_to(r.rater_b);
  j.at("kappa_by_subscore").get_to(r.kappa_by_subscore);
  j.at("disagreements").get_to(r.disagreements);
  j.at("passed").get_to(r.passed);
  j.at("threshold").get_to(r.threshold);
}

void to_json(json& j, const ConsensusRecord& c) {
  j = json{{"response_id", c.response_id},
           {"subscore", c.subscore},
           {"resolved_value", c.resolved_value},
           {"rationale", c.rationale},
           {"resolved_by", c.resolved_by}};
}

void from_json(const json& j, ConsensusRecord& c) {
  j.at("response_id").get_to(c.response_id);
  j.at("subscore").get_to(c.subscore);
  j.at("resolved_value").get_to(c.resolved_value);
  j.at("rationale").get_to(c.rationale);
  c.resolved_by = j.value("resolved_by", std::vector<std::string>{});
}

}  // namespace rubric_loop
