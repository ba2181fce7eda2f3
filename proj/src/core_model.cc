#include "rubric_loop/core_model.hpp"

#include <algorithm>
#include <cctype>
#include <set>

#include <fmt/format.h>

#include "rubric_loop/errors.hpp"

namespace rubric_loop {

namespace {

bool is_space(char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; }

SubscoreKind parse_kind(const std::string& s) {
  if (s == "concept") return SubscoreKind::kConcept;
  if (s == "reasoning") return SubscoreKind::kReasoning;
  throw ValidationError("bad_enum", fmt::format("unknown subscore kind '{}'", s));
}

ExemplarSource parse_source(const std::string& s) {
  if (s == "irr_agreed") return ExemplarSource::kIrrAgreed;
  if (s == "irr_disagreed_consensus") return ExemplarSource::kIrrDisagreedConsensus;
  if (s == "active_learning") return ExemplarSource::kActiveLearning;
  throw ValidationError("bad_enum", fmt::format("unknown exemplar source '{}'", s));
}

}  // namespace

std::vector<std::string> Rubric::subscore_names() const {
  std::vector<std::string> names;
  names.reserve(subscores.size());
  for (const auto& s : subscores) names.push_back(s.name);
  return names;
}

const Subscore* Rubric::find(std::string_view name) const {
  for (const auto& s : subscores) {
    if (s.name == name) return &s;
  }
  return nullptr;
}

Rubric make_rubric(std::string question_id, std::string question_text,
                   std::vector<Subscore> subscores) {
  Rubric r;
  r.question_id = std::move(question_id);
  r.question_text = std::move(question_text);
  r.max_total = static_cast<int>(subscores.size());
  r.subscores = std::move(subscores);
  return r;
}

std::vector<std::string> rubric_violations(const Rubric& rubric) {
  std::vector<std::string> out;
  if (rubric.question_id.empty()) out.push_back("rubric question_id is empty");
  if (rubric.subscores.empty() || rubric.subscores.size() > kMaxSubscores) {
    out.push_back(fmt::format("rubric must have 1 to {} subscores, found {}", kMaxSubscores,
                              rubric.subscores.size()));
  }
  if (rubric.max_total != static_cast<int>(rubric.subscores.size())) {
    out.push_back(fmt::format("max_total {} does not equal subscore count {}", rubric.max_total,
                              rubric.subscores.size()));
  }
  std::set<std::string> folded;
  for (const auto& s : rubric.subscores) {
    if (s.name.empty()) {
      out.push_back("subscore with empty name");
      continue;
    }
    if (std::any_of(s.name.begin(), s.name.end(), [](char c) { return is_space(c) || c == ':'; })) {
      out.push_back(fmt::format("subscore name '{}' contains whitespace or ':'", s.name));
    }
    if (!folded.insert(fold_subscore_name(s.name)).second) {
      out.push_back(fmt::format("duplicate subscore name '{}'", s.name));
    }
    if (s.points != 1) {
      out.push_back(fmt::format("subscore {} has points {}, expected 1", s.name, s.points));
    }
  }
  return out;
}

void require_valid(const Rubric& rubric) {
  auto v = rubric_violations(rubric);
  if (!v.empty()) throw ValidationError(std::move(v), "invalid_rubric");
}

std::string fold_subscore_name(std::string_view name) {
  std::string out;
  out.reserve(name.size());
  for (char c : name) {
    out.push_back(c == ' ' ? '_' : static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  }
  return out;
}

std::string normalize_response_text(std::string_view text) {
  auto begin = std::find_if_not(text.begin(), text.end(), is_space);
  auto end = std::find_if_not(text.rbegin(), std::make_reverse_iterator(begin), is_space).base();
  return std::string(begin, end);
}

std::vector<std::string> response_violations(const StudentResponse& response) {
  std::vector<std::string> out;
  if (response.id.empty()) out.push_back("response id is empty");
  if (normalize_response_text(response.text).empty()) {
    out.push_back(fmt::format("response {} has empty text", response.id));
  }
  return out;
}

ScoreVector make_score_vector(std::string response_id, SubscoreValues values) {
  ScoreVector v{std::move(response_id), std::move(values), 0};
  v.total = total_of(v);
  return v;
}

int total_of(const ScoreVector& v) {
  int sum = 0;
  for (const auto& [name, value] : v.by_subscore) sum += value;
  return sum;
}

std::vector<std::string> validate_score_vector(const ScoreVector& v, const Rubric& rubric) {
  std::vector<std::string> out;
  for (const auto& s : rubric.subscores) {
    if (!v.by_subscore.contains(s.name)) out.push_back("missing subscore " + s.name);
  }
  for (const auto& [name, value] : v.by_subscore) {
    if (rubric.find(name) == nullptr) out.push_back("unknown subscore " + name);
    if (value != 0 && value != 1) {
      out.push_back(fmt::format("non-binary value {} for subscore {}", value, name));
    }
  }
  const int sum = total_of(v);
  if (v.total != sum) {
    out.push_back(fmt::format("total mismatch: declared {}, sum {}", v.total, sum));
  }
  return out;
}

std::vector<std::string> rater_violations(const RaterScores& rater, const Rubric& rubric) {
  std::vector<std::string> out;
  if (rater.rater_id.empty()) out.push_back("rater id is empty");
  std::set<std::string> seen;
  for (const auto& v : rater.scores) {
    if (!seen.insert(v.response_id).second) {
      out.push_back(fmt::format("rater {} scored response {} twice", rater.rater_id, v.response_id));
    }
    for (auto& msg : validate_score_vector(v, rubric)) {
      out.push_back(fmt::format("rater {} response {}: {}", rater.rater_id, v.response_id, msg));
    }
  }
  return out;
}

bool CotExemplar::has_full_reasoning(const Rubric& rubric) const {
  return std::all_of(rubric.subscores.begin(), rubric.subscores.end(), [&](const Subscore& s) {
    auto it = reasoning.find(s.name);
    return it != reasoning.end() && !normalize_response_text(it->second).empty();
  });
}

std::vector<std::string> exemplar_violations(const CotExemplar& exemplar, const Rubric& rubric,
                                             bool require_reasoning) {
  std::vector<std::string> out = response_violations(exemplar.response);
  if (exemplar.gold.response_id != exemplar.response.id) {
    out.push_back(fmt::format("exemplar gold id {} does not match response id {}",
                              exemplar.gold.response_id, exemplar.response.id));
  }
  for (auto& msg : validate_score_vector(exemplar.gold, rubric)) {
    out.push_back(fmt::format("exemplar {}: {}", exemplar.response.id, msg));
  }
  for (const auto& [name, text] : exemplar.reasoning) {
    if (rubric.find(name) == nullptr) {
      out.push_back(fmt::format("exemplar {} has reasoning for unknown subscore {}",
                                exemplar.response.id, name));
    } else if (normalize_response_text(text).empty()) {
      out.push_back(fmt::format("exemplar {} has empty reasoning for subscore {}",
                                exemplar.response.id, name));
    }
  }
  if (require_reasoning) {
    for (const auto& s : rubric.subscores) {
      if (!exemplar.reasoning.contains(s.name)) {
        out.push_back(fmt::format("exemplar {} is missing reasoning for subscore {}",
                                  exemplar.response.id, s.name));
      }
    }
  }
  return out;
}

std::string compose_reasoning(std::string_view evidence, std::string_view rubric_reference,
                              int score) {
  return fmt::format(
      "The student says \"{}\". The rubric states \"{}\". Based on the rubric, the student earned "
      "a score of {}.",
      evidence, rubric_reference, score);
}

std::string to_string(SubscoreKind kind) {
  return kind == SubscoreKind::kConcept ? "concept" : "reasoning";
}

std::string to_string(ExemplarSource source) {
  switch (source) {
    case ExemplarSource::kIrrAgreed:
      return "irr_agreed";
    case ExemplarSource::kIrrDisagreedConsensus:
      return "irr_disagreed_consensus";
    case ExemplarSource::kActiveLearning:
      return "active_learning";
  }
  return "unknown";
}

using nlohmann::json;

void to_json(json& j, const Subscore& s) {
  j = json{{"name", s.name}, {"kind", to_string(s.kind)}, {"criteria", s.criteria},
           {"points", s.points}};
}

void from_json(const json& j, Subscore& s) {
  j.at("name").get_to(s.name);
  s.kind = parse_kind(j.at("kind").get<std::string>());
  j.at("criteria").get_to(s.criteria);
  s.points = j.value("points", 1);
}

void to_json(json& j, const Rubric& r) {
  j = json{{"question_id", r.question_id},
           {"question_text", r.question_text},
           {"subscores", r.subscores},
           {"max_total", r.max_total}};
}

void from_json(const json& j, Rubric& r) {
  j.at("question_id").get_to(r.question_id);
  j.at("question_text").get_to(r.question_text);
  j.at("subscores").get_to(r.subscores);
  r.max_total = j.value("max_total", static_cast<int>(r.subscores.size()));
}

void to_json(json& j, const StudentResponse& r) {
  j = json{{"id", r.id}, {"question_id", r.question_id}, {"text", r.text}};
}

void from_json(const json& j, StudentResponse& r) {
  j.at("id").get_to(r.id);
  j.at("question_id").get_to(r.question_id);
  j.at("text").get_to(r.text);
}

void to_json(json& j, const ScoreVector& v) {
  j = json{{"response_id", v.response_id}, {"by_subscore", v.by_subscore}, {"total", v.total}};
}

void from_json(const json& j, ScoreVector& v) {
  j.at("response_id").get_to(v.response_id);
  j.at("by_subscore").get_to(v.by_subscore);
  j.at("total").get_to(v.total);
}

void to_json(json& j, const RaterScores& r) {
  j = json{{"rater_id", r.rater_id}, {"scores", r.scores}};
}

void from_json(const json& j, RaterScores& r) {
  j.at("rater_id").get_to(r.rater_id);
  j.at("scores").get_to(r.scores);
}

void to_json(json& j, const CotExemplar& e) {
  j = json{{"response", e.response},
           {"gold", e.gold},
           {"reasoning", e.reasoning},
           {"source", to_string(e.source)}};
}

void from_json(const json& j, CotExemplar& e) {
  j.at("response").get_to(e.response);
  j.at("gold").get_to(e.gold);
  e.reasoning = j.value("reasoning", ReasoningMap{});
  e.source = parse_source(j.at("source").get<std::string>());
}

void to_json(json& j, const TokenUsage& u) {
  j = json{{"prompt", u.prompt}, {"completion", u.completion}};
}

void from_json(const json& j, TokenUsage& u) {
  j.at("prompt").get_to(u.prompt);
  j.at("completion").get_to(u.completion);
}

void to_json(json& j, const Generation& g) {
  j = json{{"prompt_hash", g.prompt_hash}, {"raw_text", g.raw_text},   {"model_id", g.model_id},
           {"latency_ms", g.latency_ms},   {"usage", g.usage},         {"attempts", g.attempts}};
}

void from_json(const json& j, Generation& g) {
  j.at("prompt_hash").get_to(g.prompt_hash);
  j.at("raw_text").get_to(g.raw_text);
  j.at("model_id").get_to(g.model_id);
  j.at("latency_ms").get_to(g.latency_ms);
  j.at("usage").get_to(g.usage);
  g.attempts = j.value("attempts", 1);
}

}  // namespace rubric_loop
