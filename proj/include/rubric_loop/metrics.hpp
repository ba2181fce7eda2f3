#pragma once

// Agreement and classification metrics used to compare model scores with
// human scores, plus the false-positive/false-negative trend per subscore.
//
// Conventions:
//  * Macro F1 averages over the classes present in gold or pred. A 0/0
//    precision or recall is 0, and so is F1 when precision + recall == 0.
//  * Kappa with chance agreement of exactly 1 (both raters constant and
//    identical) is 1.0 when observed agreement is perfect, else 0.0. The same
//    rule covers a QWK whose expected weighted disagreement is 0.
//  * QWK takes its label range explicitly. The weight matrix depends on it.
//  * Both kappas are computed from integer counts and divided once, so for
//    binary labels QWK and Cohen's kappa are bit-identical.

#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "rubric_loop/core_model.hpp"

namespace rubric_loop {

using Labels = std::span<const int>;

struct ConfusionCounts {
  int tp = 0;
  int fp = 0;
  int fn = 0;
  int tn = 0;

  int total() const { return tp + fp + fn + tn; }
  bool operator==(const ConfusionCounts&) const = default;
};

// Binary confusion with 1 as the positive class. Labels must be 0/1.
ConfusionCounts binary_confusion(Labels pred, Labels gold);

struct MetricReport {
  double accuracy = 0.0;
  double macro_f1 = 0.0;
  double qwk = 0.0;
  double kappa = 0.0;
  std::map<int, double> per_class_f1;
  int n = 0;

  bool operator==(const MetricReport&) const = default;
};

enum class TrendDirection { kOverscoring, kUnderscoring, kBalanced };

struct TrendReport {
  std::string subscore;
  int fp_count = 0;
  int fn_count = 0;
  TrendDirection direction = TrendDirection::kBalanced;

  bool operator==(const TrendReport&) const = default;
};

enum class AgreementBand { kNoneToWeak, kModerate, kStrong, kAlmostPerfect };

double accuracy(Labels pred, Labels gold);
std::map<int, double> per_class_f1(Labels pred, Labels gold);
double macro_f1(Labels pred, Labels gold);
double cohen_kappa(Labels a, Labels b);
double quadratic_weighted_kappa(Labels a, Labels b, int label_min, int label_max);

AgreementBand agreement_band(double qwk);
std::string to_string(AgreementBand band);

TrendDirection trend_direction(int fp_count, int fn_count);
std::string to_string(TrendDirection direction);
TrendReport error_trend(Labels pred, Labels gold, std::string subscore);

// All metrics for one aligned label pair. QWK uses [label_min, label_max].
MetricReport metric_report(Labels pred, Labels gold, int label_min, int label_max);

struct SubscoreReport {
  std::string subscore;
  MetricReport report;

  bool operator==(const SubscoreReport&) const = default;
};

/// Per-subscore reports in rubric order plus the total-score report.
struct EvaluationReport {
  std::vector<SubscoreReport> by_subscore;
  MetricReport total;

  const MetricReport* find(std::string_view subscore) const;
  bool operator==(const EvaluationReport&) const = default;
};

/// Aligns pred and gold by response id. Subscores use binary metrics; the
/// total uses QWK over [0, rubric.max_total].
EvaluationReport evaluate_scores(std::span<const ScoreVector> pred,
                                 std::span<const ScoreVector> gold, const Rubric& rubric);

void to_json(nlohmann::json& j, const MetricReport& r);
void from_json(const nlohmann::json& j, MetricReport& r);
void to_json(nlohmann::json& j, const TrendReport& r);
void from_json(const nlohmann::json& j, TrendReport& r);
void to_json(nlohmann::json& j, const EvaluationReport& r);
void from_json(const nlohmann::json& j, EvaluationReport& r);

}  // namespace rubric_loop
