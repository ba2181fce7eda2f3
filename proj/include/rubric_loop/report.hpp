#pragma once

// Comparison tables across prompt implementations, one block per subscore
// plus the total score.

#include <span>
#include <string>

#include "rubric_loop/core_model.hpp"
#include "rubric_loop/metrics.hpp"

namespace rubric_loop {

struct ReportRow {
  std::string implementation;  // e.g. zero_shot, few_shot, few_shot_cot, cot_al
  EvaluationReport report;
};

// Fixed-width text; metrics to two decimals.
std::string render_report_table(const Rubric& rubric, std::span<const ReportRow> rows);

// Columns: block, implementation, n, accuracy, macro_f1, qwk, kappa.
std::string render_report_csv(const Rubric& rubric, std::span<const ReportRow> rows);

}  // namespace rubric_loop
