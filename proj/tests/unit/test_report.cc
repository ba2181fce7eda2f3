#include "doctest.h"
#include "rubric_loop/report.hpp"
#include "support/toy.hpp"

using namespace rubric_loop;

namespace {

std::vector<ReportRow> rows() {
  const Dataset d = toy::dataset(10, 2);
  std::vector<ScoreVector> off = d.gold;
  for (std::size_t i = 0; i < off.size(); i += 3) {
    off[i].by_subscore["a"] ^= 1;
    off[i].total = total_of(off[i]);
  }
  return {{"zero_shot", evaluate_scores(off, d.gold, d.rubric)},
          {"few_shot_cot", evaluate_scores(d.gold, d.gold, d.rubric)}};
}

}  // namespace

TEST_SUITE("report") {
  TEST_CASE("table layout") {
    const std::string t = render_report_table(toy::rubric(), rows());
    CHECK(t.find("Subscore: a") < t.find("Subscore: b"));
    CHECK(t.find("Subscore: c") < t.find("Total Score"));
    CHECK(t.find("Implementation") != std::string::npos);
    CHECK(t.find("few_shot_cot") != std::string::npos);
    CHECK(t.find("1.00") != std::string::npos);
    CHECK(t.find("0.60") != std::string::npos);  // accuracy on a: 6 of 10
  }

  TEST_CASE("output is byte-identical across calls") {
    CHECK(render_report_table(toy::rubric(), rows()) == render_report_table(toy::rubric(), rows()));
    CHECK(render_report_csv(toy::rubric(), rows()) == render_report_csv(toy::rubric(), rows()));
  }

  TEST_CASE("csv has one row per block and implementation") {
    const std::string csv = render_report_csv(toy::rubric(), rows());
    CHECK(csv.starts_with("block,implementation,n,accuracy,macro_f1,qwk,kappa\n"));
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 1 + 4 * 2);
  }
}
