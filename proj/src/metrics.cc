#include "rubric_loop/metrics.hpp"

#include <cmath>
#include <cstdint>
#include <set>

#include <fmt/format.h>

#include "rubric_loop/errors.hpp"

namespace rubric_loop {

namespace {

void require_aligned(Labels a, Labels b) {
  if (a.size() != b.size()) {
    throw ValidationError("length_mismatch",
                          fmt::format("label lists differ in length: {} vs {}", a.size(), b.size()));
  }
  if (a.empty()) throw ValidationError("empty_input", "label lists are empty");
}

void require_binary(Labels labels) {
  for (int v : labels) {
    if (v != 0 && v != 1) {
      throw ValidationError("non_binary_label", fmt::format("label {} is not 0 or 1", v));
    }
  }
}

double safe_ratio(double num, double den) { return den == 0.0 ? 0.0 : num / den; }

}  // namespace

ConfusionCounts binary_confusion(Labels pred, Labels gold) {
  if (pred.size() != gold.size()) {
    throw ValidationError("length_mismatch", fmt::format("label lists differ in length: {} vs {}",
                                                         pred.size(), gold.size()));
  }
  require_binary(pred);
  require_binary(gold);
  ConfusionCounts c;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (pred[i] == 1 && gold[i] == 1) ++c.tp;
    if (pred[i] == 1 && gold[i] == 0) ++c.fp;
    if (pred[i] == 0 && gold[i] == 1) ++c.fn;
    if (pred[i] == 0 && gold[i] == 0) ++c.tn;
  }
  return c;
}

double accuracy(Labels pred, Labels gold) {
  require_aligned(pred, gold);
  std::size_t hits = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) hits += pred[i] == gold[i];
  return static_cast<double>(hits) / static_cast<double>(pred.size());
}

std::map<int, double> per_class_f1(Labels pred, Labels gold) {
  require_aligned(pred, gold);
  std::set<int> classes(gold.begin(), gold.end());
  classes.insert(pred.begin(), pred.end());
  std::map<int, double> out;
  for (int c : classes) {
    int tp = 0, fp = 0, fn = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
      if (pred[i] == c && gold[i] == c) ++tp;
      if (pred[i] == c && gold[i] != c) ++fp;
      if (pred[i] != c && gold[i] == c) ++fn;
    }
    const double precision = safe_ratio(tp, tp + fp);
    const double recall = safe_ratio(tp, tp + fn);
    out[c] = safe_ratio(2.0 * precision * recall, precision + recall);
  }
  return out;
}

double macro_f1(Labels pred, Labels gold) {
  const auto f1 = per_class_f1(pred, gold);
  double sum = 0.0;
  for (const auto& [label, value] : f1) sum += value;
  return sum / static_cast<double>(f1.size());
}

double cohen_kappa(Labels a, Labels b) {
  require_aligned(a, b);
  const auto n = static_cast<std::int64_t>(a.size());
  std::map<int, std::int64_t> count_a, count_b;
  std::int64_t agree = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ++count_a[a[i]];
    ++count_b[b[i]];
    agree += a[i] == b[i];
  }
  // p_e * n^2
  std::int64_t chance = 0;
  for (const auto& [label, ca] : count_a) {
    auto it = count_b.find(label);
    if (it != count_b.end()) chance += ca * it->second;
  }
  const std::int64_t num = n * agree - chance;
  const std::int64_t den = n * n - chance;
  if (den == 0) return agree == n ? 1.0 : 0.0;
  return static_cast<double>(num) / static_cast<double>(den);
}

double quadratic_weighted_kappa(Labels a, Labels b, int label_min, int label_max) {
  require_aligned(a, b);
  if (label_max < label_min) {
    throw ValidationError("label_out_of_range",
                          fmt::format("label range [{}, {}] is empty", label_min, label_max));
  }
  for (Labels side : {a, b}) {
    for (int v : side) {
      if (v < label_min || v > label_max) {
        throw ValidationError("label_out_of_range", fmt::format("label {} outside [{}, {}]", v,
                                                                label_min, label_max));
      }
    }
  }
  if (label_max == label_min) return 1.0;

  const auto k = static_cast<std::size_t>(label_max - label_min + 1);
  const auto n = static_cast<std::int64_t>(a.size());
  std::vector<std::int64_t> hist_a(k, 0), hist_b(k, 0);
  // Sum of squared rating differences over observed pairs.
  std::int64_t observed = 0;
  for (std::size_t t = 0; t < a.size(); ++t) {
    ++hist_a[static_cast<std::size_t>(a[t] - label_min)];
    ++hist_b[static_cast<std::size_t>(b[t] - label_min)];
    const std::int64_t d = a[t] - b[t];
    observed += d * d;
  }
  // Weighted outer product of marginals, scaled by n^2 * (k-1)^2.
  std::int64_t expected = 0;
  for (std::size_t i = 0; i < k; ++i) {
    for (std::size_t j = 0; j < k; ++j) {
      const auto d = static_cast<std::int64_t>(i) - static_cast<std::int64_t>(j);
      expected += d * d * hist_a[i] * hist_b[j];
    }
  }
  if (expected == 0) return observed == 0 ? 1.0 : 0.0;
  return static_cast<double>(expected - n * observed) / static_cast<double>(expected);
}

AgreementBand agreement_band(double qwk) {
  if (!(qwk >= -1.0 && qwk <= 1.0)) {
    throw ValidationError("out_of_range", fmt::format("QWK {} outside [-1, 1]", qwk));
  }
  if (qwk > 0.9) return AgreementBand::kAlmostPerfect;
  if (qwk >= 0.8) return AgreementBand::kStrong;
  if (qwk >= 0.6) return AgreementBand::kModerate;
  return AgreementBand::kNoneToWeak;
}

std::string to_string(AgreementBand band) {
  switch (band) {
    case AgreementBand::kNoneToWeak:
      return "none_to_weak";
    case AgreementBand::kModerate:
      return "moderate";
    case AgreementBand::kStrong:
      return "strong";
    case AgreementBand::kAlmostPerfect:
      return "almost_perfect";
  }
  return "unknown";
}

TrendDirection trend_direction(int fp_count, int fn_count) {
  if (fp_count > fn_count) return TrendDirection::kOverscoring;
  if (fn_count > fp_count) return TrendDirection::kUnderscoring;
  return TrendDirection::kBalanced;
}

std::string to_string(TrendDirection direction) {
  switch (direction) {
    case TrendDirection::kOverscoring:
      return "overscoring";
    case TrendDirection::kUnderscoring:
      return "underscoring";
    case TrendDirection::kBalanced:
      return "balanced";
  }
  return "unknown";
}

TrendReport error_trend(Labels pred, Labels gold, std::string subscore) {
  const auto c = binary_confusion(pred, gold);
  return TrendReport{std::move(subscore), c.fp, c.fn, trend_direction(c.fp, c.fn)};
}

MetricReport metric_report(Labels pred, Labels gold, int label_min, int label_max) {
  MetricReport r;
  r.accuracy = accuracy(pred, gold);
  r.per_class_f1 = per_class_f1(pred, gold);
  r.macro_f1 = macro_f1(pred, gold);
  r.kappa = cohen_kappa(pred, gold);
  r.qwk = quadratic_weighted_kappa(pred, gold, label_min, label_max);
  r.n = static_cast<int>(pred.size());
  return r;
}

const MetricReport* EvaluationReport::find(std::string_view subscore) const {
  for (const auto& s : by_subscore) {
    if (s.subscore == subscore) return &s.report;
  }
  return nullptr;
}

EvaluationReport evaluate_scores(std::span<const ScoreVector> pred,
                                 std::span<const ScoreVector> gold, const Rubric& rubric) {
  std::map<std::string, const ScoreVector*> gold_by_id;
  for (const auto& g : gold) {
    if (!gold_by_id.emplace(g.response_id, &g).second) {
      throw ValidationError("id_mismatch", "duplicate gold id " + g.response_id);
    }
  }
  std::map<std::string, const ScoreVector*> pred_by_id;
  for (const auto& p : pred) {
    if (!gold_by_id.contains(p.response_id)) {
      throw ValidationError("id_mismatch", "prediction for unknown id " + p.response_id);
    }
    if (!pred_by_id.emplace(p.response_id, &p).second) {
      throw ValidationError("id_mismatch", "duplicate prediction id " + p.response_id);
    }
  }
  if (pred_by_id.size() != gold_by_id.size()) {
    std::vector<std::string> missing;
    for (const auto& [id, g] : gold_by_id) {
      if (!pred_by_id.contains(id)) missing.push_back("no prediction for id " + id);
    }
    throw ValidationError(std::move(missing), "id_mismatch");
  }

  EvaluationReport report;
  for (const auto& s : rubric.subscores) {
    std::vector<int> p, g;
    for (const auto& [id, gv] : gold_by_id) {
      const auto& pv = *pred_by_id.at(id);
      auto pit = pv.by_subscore.find(s.name);
      auto git = gv->by_subscore.find(s.name);
      if (pit == pv.by_subscore.end() || git == gv->by_subscore.end()) {
        throw ValidationError("id_mismatch",
                              fmt::format("response {} lacks subscore {}", id, s.name));
      }
      p.push_back(pit->second);
      g.push_back(git->second);
    }
    report.by_subscore.push_back({s.name, metric_report(p, g, 0, 1)});
  }
  std::vector<int> p, g;
  for (const auto& [id, gv] : gold_by_id) {
    p.push_back(total_of(*pred_by_id.at(id)));
    g.push_back(total_of(*gv));
  }
  report.total = metric_report(p, g, 0, rubric.max_total);
  return report;
}

using nlohmann::json;

void to_json(json& j, const MetricReport& r) {
  json per_class = json::object();
  for (const auto& [label, f1] : r.per_class_f1) per_class[std::to_string(label)] = f1;
  j = json{{"accuracy", r.accuracy}, {"macro_f1", r.macro_f1}, {"qwk", r.qwk},
           {"kappa", r.kappa},       {"per_class_f1", per_class}, {"n", r.n}};
}

void from_json(const json& j, MetricReport& r) {
  j.at("accuracy").get_to(r.accuracy);
  j.at("macro_f1").get_to(r.macro_f1);
  j.at("qwk").get_to(r.qwk);
  j.at("kappa").get_to(r.kappa);
  j.at("n").get_to(r.n);
  r.per_class_f1.clear();
  for (const auto& [label, f1] : j.at("per_class_f1").items()) {
    r.per_class_f1[std::stoi(label)] = f1.get<double>();
  }
}

void to_json(json& j, const TrendReport& r) {
  j = json{{"subscore", r.subscore},
           {"fp_count", r.fp_count},
           {"fn_count", r.fn_count},
           {"direction", to_string(r.direction)}};
}

void from_json(const json& j, TrendReport& r) {
  j.at("subscore").get_to(r.subscore);
  j.at("fp_count").get_to(r.fp_count);
  j.at("fn_count").get_to(r.fn_count);
  r.direction = trend_direction(r.fp_count, r.fn_count);
}

void to_json(json& j, const EvaluationReport& r) {
  json subs = json::array();
  for (const auto& s : r.by_subscore) subs.push_back({{"subscore", s.subscore}, {"report", s.report}});
  j = json{{"by_subscore", subs}, {"total", r.total}};
}

void from_json(const json& j, EvaluationReport& r) {
  r.by_subscore.clear();
  for (const auto& s : j.at("by_subscore")) {
    r.by_subscore.push_back({s.at("subscore").get<std::string>(), s.at("report").get<MetricReport>()});
  }
  j.at("total").get_to(r.total);
}

}  // namespace rubric_loop
