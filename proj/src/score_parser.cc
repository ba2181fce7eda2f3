#include "rubric_loop/score_parser.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <map>
#include <optional>

#include <fmt/format.h>

namespace rubric_loop {

namespace {

enum class LineKind { kProse, kSubscore, kReasoning, kTotal };

struct Line {
  LineKind kind = LineKind::kProse;
  std::string name;   // kSubscore
  std::string value;  // kSubscore, kTotal: the text after ':'; kReasoning: its inline text
};

std::string_view lstrip(std::string_view s) {
  std::size_t i = 0;
  while (i < s.size() && std::isspace(static_cast<unsigned char>(s[i]))) ++i;
  return s.substr(i);
}

// Matches `<keyword><spaces>:<rest>` and returns rest with one optional
// leading space removed.
std::optional<std::string_view> after_keyword_colon(std::string_view s, std::string_view keyword) {
  if (!s.starts_with(keyword)) return std::nullopt;
  s.remove_prefix(keyword.size());
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  if (s.empty() || s.front() != ':') return std::nullopt;
  s.remove_prefix(1);
  if (!s.empty() && s.front() == ' ') s.remove_prefix(1);
  return s;
}

Line classify(std::string_view raw_line) {
  const std::string_view s = lstrip(raw_line);
  Line line;
  if (s.starts_with(kSubscoreKeyword) && s.size() > kSubscoreKeyword.size() &&
      (s[kSubscoreKeyword.size()] == ' ' || s[kSubscoreKeyword.size()] == '\t')) {
    const std::string_view rest = s.substr(kSubscoreKeyword.size());
    const auto colon = rest.find(':');
    if (colon != std::string_view::npos) {
      line.kind = LineKind::kSubscore;
      line.name = normalize_response_text(rest.substr(0, colon));
      line.value = normalize_response_text(rest.substr(colon + 1));
      if (!line.name.empty()) return line;
      line = Line{};
    }
  }
  if (auto rest = after_keyword_colon(s, kReasoningKeyword)) {
    line.kind = LineKind::kReasoning;
    line.value = std::string(*rest);
    return line;
  }
  if (auto rest = after_keyword_colon(s, kTotalKeyword)) {
    line.kind = LineKind::kTotal;
    line.value = normalize_response_text(*rest);
    return line;
  }
  return line;
}

std::vector<std::string_view> split_lines(std::string_view text) {
  std::vector<std::string_view> lines;
  std::size_t start = 0;
  while (start <= text.size()) {
    auto end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(start, end - start);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    lines.push_back(line);
    start = end + 1;
  }
  return lines;
}

std::string join_reasoning(const std::vector<std::string>& parts) {
  std::string out;
  for (const auto& p : parts) {
    if (!out.empty()) out += '\n';
    out += p;
  }
  return normalize_response_text(out);
}

}  // namespace

std::string to_string(ParseErrorKind kind) {
  switch (kind) {
    case ParseErrorKind::kMissingSubscore:
      return "missing_subscore";
    case ParseErrorKind::kNonBinaryValue:
      return "non_binary_value";
    case ParseErrorKind::kDuplicateSubscore:
      return "duplicate_subscore";
    case ParseErrorKind::kUnknownSubscore:
      return "unknown_subscore";
    case ParseErrorKind::kMalformedTotal:
      return "malformed_total";
  }
  return "parse_error";
}

std::string to_string(ParseFlag flag) {
  return flag == ParseFlag::kTotalMismatch ? "total_mismatch" : "missing_total";
}

bool ParsedScore::flagged(ParseFlag f) const {
  return std::find(flags.begin(), flags.end(), f) != flags.end();
}

bool is_keyword_line(std::string_view line) { return classify(line).kind != LineKind::kProse; }

std::string render_score_block(const ScoreVector& scores, const Rubric& rubric,
                               const ReasoningMap* reasoning) {
  std::string out;
  for (const auto& s : rubric.subscores) {
    auto it = scores.by_subscore.find(s.name);
    if (it == scores.by_subscore.end()) {
      throw ValidationError("missing_subscore",
                            fmt::format("score vector {} lacks subscore {}", scores.response_id, s.name));
    }
    out += fmt::format("{} {}: {}\n", kSubscoreKeyword, s.name, it->second);
    if (reasoning == nullptr) continue;
    auto rit = reasoning->find(s.name);
    if (rit == reasoning->end() || normalize_response_text(rit->second).empty()) {
      throw ValidationError("missing_reasoning", fmt::format("exemplar {} has no reasoning for {}",
                                                             scores.response_id, s.name));
    }
    const auto lines = split_lines(rit->second);
    for (std::size_t i = 1; i < lines.size(); ++i) {
      if (is_keyword_line(lines[i])) {
        throw ValidationError(
            "reasoning_contains_keyword",
            fmt::format("reasoning for {} on {} contains a grammar keyword line: '{}'", s.name,
                        scores.response_id, lines[i]));
      }
    }
    out += fmt::format("{}: {}\n", kReasoningKeyword, rit->second);
  }
  out += fmt::format("{}: {}", kTotalKeyword, total_of(scores));
  return out;
}

ParsedScore parse_generation(std::string_view raw, const Rubric& rubric, std::string response_id) {
  std::map<std::string, const Subscore*> by_folded;
  for (const auto& s : rubric.subscores) by_folded[fold_subscore_name(s.name)] = &s;

  SubscoreValues values;
  ReasoningMap reasoning;
  std::vector<std::string> pending_prose;
  std::vector<std::string>* reasoning_target = nullptr;  // open REASONING block
  std::map<std::string, std::vector<std::string>> parts;
  std::string last_subscore;
  std::optional<int> declared_total;
  bool saw_total = false;

  const auto lines = split_lines(raw);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    const int line_no = static_cast<int>(i) + 1;
    Line line = classify(lines[i]);
    if (line.kind == LineKind::kTotal) {
      int total = 0;
      const auto* first = line.value.data();
      const auto* last = first + line.value.size();
      auto [ptr, ec] = std::from_chars(first, last, total);
      if (ec != std::errc{} || ptr != last) {
        throw ParseError(ParseErrorKind::kMalformedTotal, {}, line_no,
                         fmt::format("line {}: TOTAL value '{}' is not an integer", line_no, line.value));
      }
      declared_total = total;
      saw_total = true;
      break;
    }
    if (line.kind == LineKind::kSubscore) {
      auto it = by_folded.find(fold_subscore_name(line.name));
      if (it == by_folded.end()) {
        throw ParseError(ParseErrorKind::kUnknownSubscore, line.name, line_no,
                         fmt::format("line {}: unknown subscore '{}'", line_no, line.name));
      }
      const std::string& name = it->second->name;
      if (values.contains(name)) {
        throw ParseError(ParseErrorKind::kDuplicateSubscore, name, line_no,
                         fmt::format("line {}: duplicate subscore {}", line_no, name));
      }
      if (line.value != "0" && line.value != "1") {
        throw ParseError(ParseErrorKind::kNonBinaryValue, name, line_no,
                         fmt::format("line {}: subscore {} has non-binary value '{}'", line_no,
                                     name, line.value));
      }
      values[name] = line.value == "1" ? 1 : 0;
      parts[name] = std::move(pending_prose);
      pending_prose.clear();
      last_subscore = name;
      reasoning_target = nullptr;
      continue;
    }
    if (line.kind == LineKind::kReasoning) {
      // A REASONING line with no preceding SUBSCORE line is prose for the
      // next subscore.
      reasoning_target = last_subscore.empty() ? &pending_prose : &parts[last_subscore];
      reasoning_target->push_back(line.value);
      continue;
    }
    if (reasoning_target != nullptr) {
      reasoning_target->push_back(std::string(lines[i]));
    } else if (!normalize_response_text(lines[i]).empty() || !pending_prose.empty()) {
      pending_prose.push_back(std::string(lines[i]));
    }
  }

  std::vector<std::string> missing;
  for (const auto& s : rubric.subscores) {
    if (!values.contains(s.name)) missing.push_back(s.name);
  }
  if (!missing.empty()) {
    std::string list;
    for (const auto& m : missing) list += (list.empty() ? "" : ", ") + m;
    throw ParseError(ParseErrorKind::kMissingSubscore, missing.front(), 0,
                     "missing subscore " + list);
  }

  ParsedScore parsed;
  for (auto& [name, texts] : parts) reasoning[name] = join_reasoning(texts);
  parsed.scores = make_score_vector(std::move(response_id), std::move(values));
  parsed.reasoning = std::move(reasoning);
  parsed.declared_total = declared_total;
  if (!saw_total) {
    parsed.flags.push_back(ParseFlag::kMissingTotal);
  } else if (*declared_total != parsed.scores.total) {
    parsed.flags.push_back(ParseFlag::kTotalMismatch);
  }
  parsed.raw.raw_text = std::string(raw);
  return parsed;
}

ParsedScore parse_generation(const Generation& generation, const Rubric& rubric,
                             std::string response_id) {
  ParsedScore parsed = parse_generation(generation.raw_text, rubric, std::move(response_id));
  parsed.raw = generation;
  return parsed;
}

using nlohmann::json;

void to_json(json& j, const ParsedScore& p) {
  json flags = json::array();
  for (auto f : p.flags) flags.push_back(to_string(f));
  j = json{{"scores", p.scores}, {"reasoning", p.reasoning}, {"raw", p.raw}, {"flags", flags}};
  j["declared_total"] = p.declared_total ? json(*p.declared_total) : json(nullptr);
}

void from_json(const json& j, ParsedScore& p) {
  j.at("scores").get_to(p.scores);
  j.at("reasoning").get_to(p.reasoning);
  j.at("raw").get_to(p.raw);
  p.flags.clear();
  for (const auto& f : j.at("flags")) {
    p.flags.push_back(f.get<std::string>() == "total_mismatch" ? ParseFlag::kTotalMismatch
                                                               : ParseFlag::kMissingTotal);
  }
  const auto& dt = j.at("declared_total");
  p.declared_total = dt.is_null() ? std::nullopt : std::optional<int>(dt.get<int>());
}

}  // namespace rubric_loop
