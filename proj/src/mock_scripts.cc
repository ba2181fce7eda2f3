#include "rubric_loop/mock_scripts.hpp"

#include <algorithm>
#include <map>
#include <memory>

#include "rubric_loop/prompt_builder.hpp"
#include "rubric_loop/score_parser.hpp"

namespace rubric_loop {

std::string render_model_answer(const ScoreVector& scores, const Rubric& rubric,
                                std::string_view response_text) {
  ReasoningMap reasoning;
  for (const auto& s : rubric.subscores) {
    auto it = scores.by_subscore.find(s.name);
    const int value = it == scores.by_subscore.end() ? 0 : it->second;
    reasoning[s.name] = compose_reasoning(response_text, s.criteria, value);
  }
  return render_score_block(scores, rubric, &reasoning);
}

MockBackend::Script oracle_script(const Rubric& rubric, std::span<const StudentResponse> responses,
                                  std::span<const ScoreVector> gold, ScoreOracle oracle) {
  struct Index {
    std::map<std::string, ScoreVector> gold_by_id;
    std::map<std::string, std::string> id_by_text;
    std::map<std::string, std::string> text_by_id;
  };
  auto index = std::make_shared<Index>();
  for (const auto& g : gold) index->gold_by_id[g.response_id] = g;
  for (const auto& r : responses) {
    const auto text = normalize_response_text(r.text);
    index->id_by_text.emplace(text, r.id);
    index->text_by_id[r.id] = text;
  }
  return [rubric, index, oracle = std::move(oracle)](const CompletionRequest& request) {
    std::string id = request.response_id;
    if (id.empty()) {
      if (auto text = extract_target_response(request.prompt)) {
        if (auto it = index->id_by_text.find(*text); it != index->id_by_text.end()) id = it->second;
      }
    }
    auto git = index->gold_by_id.find(id);
    if (git == index->gold_by_id.end()) {
      BackendReply r;
      r.status = BackendStatus::kRefusal;
      r.detail = "scripted model does not know response '" + id + "'";
      return r;
    }
    auto answer = oracle(request, git->second);
    if (!answer) return BackendReply::ok(std::string(kGarbageAnswer));
    answer->response_id = id;
    answer->total = total_of(*answer);
    return BackendReply::ok(render_model_answer(*answer, rubric, index->text_by_id[id]));
  };
}

MockBackend::Script echo_gold_script(const Rubric& rubric, std::span<const StudentResponse> responses,
                                     std::span<const ScoreVector> gold) {
  return oracle_script(rubric, responses, gold,
                       [](const CompletionRequest&, const ScoreVector& g) { return g; });
}

MockBackend::Script perturbed_script(const Rubric& rubric, std::span<const StudentResponse> responses,
                                     std::span<const ScoreVector> gold, Perturbation perturbation) {
  return oracle_script(
      rubric, responses, gold,
      [p = std::move(perturbation)](const CompletionRequest&,
                                    const ScoreVector& g) -> std::optional<ScoreVector> {
        if (p.garbage_ids.contains(g.response_id)) return std::nullopt;
        ScoreVector out = g;
        for (auto& [name, value] : out.by_subscore) {
          if (p.flips.contains({g.response_id, name})) value = 1 - value;
        }
        return out;
      });
}

MockBackend::Script repairing_script(const Rubric& rubric, std::span<const StudentResponse> responses,
                                     std::span<const ScoreVector> gold, std::vector<RepairRule> rules) {
  auto marker_by_id = std::make_shared<std::map<std::string, std::string>>();
  for (const auto& r : responses) {
    (*marker_by_id)[r.id] = "STUDENT RESPONSE:\n" + normalize_response_text(r.text) + "\n";
  }
  return oracle_script(
      rubric, responses, gold,
      [rules = std::move(rules), marker_by_id](const CompletionRequest& request,
                                               const ScoreVector& g) -> std::optional<ScoreVector> {
        const auto header = request.prompt.rfind(kTargetHeader);
        const std::string_view shots =
            std::string_view(request.prompt).substr(0, header == std::string::npos ? 0 : header);
        ScoreVector out = g;
        for (const auto& rule : rules) {
          if (rule.response_id != g.response_id) continue;
          const bool repaired = std::any_of(rule.fixed_by.begin(), rule.fixed_by.end(), [&](const auto& id) {
            auto m = marker_by_id->find(id);
            return m != marker_by_id->end() && shots.find(m->second) != std::string_view::npos;
          });
          if (!repaired) out.by_subscore[rule.subscore] = 1 - g.by_subscore.at(rule.subscore);
        }
        return out;
      });
}

}  // namespace rubric_loop
