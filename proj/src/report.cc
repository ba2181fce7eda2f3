#include "rubric_loop/report.hpp"

#include <algorithm>

#include <fmt/format.h>

#include "rubric_loop/csv.hpp"

namespace rubric_loop {

namespace {

struct Block {
  std::string title;
  std::string key;  // empty for the total
};

std::vector<Block> blocks(const Rubric& rubric) {
  std::vector<Block> out;
  for (const auto& s : rubric.subscores) out.push_back({"Subscore: " + s.name, s.name});
  out.push_back({"Total Score", ""});
  return out;
}

const MetricReport* pick(const EvaluationReport& r, const Block& b) {
  return b.key.empty() ? &r.total : r.find(b.key);
}

}  // namespace

std::string render_report_table(const Rubric& rubric, std::span<const ReportRow> rows) {
  std::size_t width = std::string_view("Implementation").size();
  for (const auto& row : rows) width = std::max(width, row.implementation.size());
  std::string out;
  for (const auto& b : blocks(rubric)) {
    if (!out.empty()) out += '\n';
    out += b.title + '\n';
    out += fmt::format("{:<{}}  {:>4}  {:>5}  {:>5}  {:>5}\n", "Implementation", width, "n", "Acc",
                       "F1", "QWK");
    for (const auto& row : rows) {
      const MetricReport* m = pick(row.report, b);
      if (m == nullptr) {
        out += fmt::format("{:<{}}  {:>4}  {:>5}  {:>5}  {:>5}\n", row.implementation, width, "-", "-",
                           "-", "-");
        continue;
      }
      out += fmt::format("{:<{}}  {:>4}  {:>5.2f}  {:>5.2f}  {:>5.2f}\n", row.implementation, width, m->n,
                         m->accuracy, m->macro_f1, m->qwk);
    }
  }
  return out;
}

std::string render_report_csv(const Rubric& rubric, std::span<const ReportRow> rows) {
  std::string out = csv::row({"block", "implementation", "n", "accuracy", "macro_f1", "qwk", "kappa"});
  for (const auto& b : blocks(rubric)) {
    for (const auto& row : rows) {
      const MetricReport* m = pick(row.report, b);
      if (m == nullptr) continue;
      out += csv::row({b.key.empty() ? "total" : b.key, row.implementation, std::to_string(m->n),
                       fmt::format("{:.6f}", m->accuracy), fmt::format("{:.6f}", m->macro_f1),
                       fmt::format("{:.6f}", m->qwk), fmt::format("{:.6f}", m->kappa)});
    }
  }
  return out;
}

}  // namespace rubric_loop
