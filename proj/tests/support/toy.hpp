#pragma once

// Small in-memory datasets and exemplars for unit tests.

#include <string>
#include <vector>

#include <fmt/format.h>

#include "rubric_loop/core_model.hpp"
#include "rubric_loop/storage.hpp"
#include "support/generators.hpp"

namespace toy {

inline rubric_loop::Rubric rubric() {
  using rubric_loop::SubscoreKind;
  return rubric_loop::make_rubric("q1", "Why does the ice float?",
                                  {{"a", SubscoreKind::kConcept, "Names density.", 1},
                                   {"b", SubscoreKind::kConcept, "Names buoyancy.", 1},
                                   {"c", SubscoreKind::kReasoning, "Links the two.", 1}});
}

// Response i gets gold bits from `seed`; ids are r000, r001, ...
inline rubric_loop::Dataset dataset(int n, std::uint64_t seed = 1,
                                    const rubric_loop::Rubric& r = rubric()) {
  gen::Gen g(seed);
  rubric_loop::Dataset d;
  d.rubric = r;
  for (int i = 0; i < n; ++i) {
    const std::string id = fmt::format("r{:03d}", i);
    rubric_loop::SubscoreValues v;
    for (const auto& s : r.subscores) v[s.name] = g.coin() ? 1 : 0;
    d.responses.push_back({id, r.question_id, fmt::format("answer {} says {}", i, g.sentence(2, 6))});
    d.gold.push_back(rubric_loop::make_score_vector(id, v));
  }
  return d;
}

inline rubric_loop::CotExemplar exemplar(const rubric_loop::Dataset& d, const std::string& id,
                                         rubric_loop::ExemplarSource source =
                                             rubric_loop::ExemplarSource::kIrrAgreed) {
  rubric_loop::CotExemplar e;
  e.response = *d.response(id);
  e.gold = *d.gold_for(id);
  e.source = source;
  for (const auto& s : d.rubric.subscores) {
    e.reasoning[s.name] = rubric_loop::compose_reasoning(e.response.text, s.criteria, e.gold.by_subscore.at(s.name));
  }
  return e;
}

// One exemplar per entry of `bits`: bits[k] is the gold vector in rubric order.
inline rubric_loop::CotExemplar made(const rubric_loop::Rubric& r, const std::string& id, std::vector<int> bits) {
  rubric_loop::CotExemplar e;
  e.response = {id, r.question_id, "response " + id};
  rubric_loop::SubscoreValues v;
  for (std::size_t k = 0; k < r.subscores.size(); ++k) {
    v[r.subscores[k].name] = bits[k];
    e.reasoning[r.subscores[k].name] = "reason " + id;
  }
  e.gold = rubric_loop::make_score_vector(id, v);
  return e;
}

}  // namespace toy
