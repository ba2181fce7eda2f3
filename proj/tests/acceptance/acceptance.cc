// Acceptance suite: one PASS/FAIL line per criterion. Runs with no network
// and no API key; the HTTP service is never started.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <map>
#include <set>
#include <string>
#include <vector>

#include <fmt/format.h>

#include "rubric_loop/errors.hpp"
#include "rubric_loop/metrics.hpp"
#include "rubric_loop/mock_scripts.hpp"
#include "rubric_loop/prompt_builder.hpp"
#include "rubric_loop/score_parser.hpp"
#include "rubric_loop/workbench.hpp"
#include "support/cli.hpp"
#include "support/generators.hpp"
#include "support/oracles.hpp"
#include "support/pipeline.hpp"
#include "support/temp_dir.hpp"

using namespace rubric_loop;
using nlohmann::json;
using testing_support::TempDir;

namespace {

struct Failure {
  std::string what;
};

void expect(bool ok, const std::string& what) {
  if (!ok) throw Failure{what};
}

void expect_near(double got, double want, double tol, const std::string& what) {
  expect(std::fabs(got - want) <= tol, fmt::format("{}: got {:.17g}, want {:.17g} (tol {:g})", what, got, want, tol));
}

double seconds_since(std::chrono::steady_clock::time_point t) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t).count();
}

// ---- metrics ----

void qwk_oracle_equivalence() {
  const auto start = std::chrono::steady_clock::now();
  gen::Gen g(2024);
  int checked = 0;
  while (checked < 200) {
    const auto n = static_cast<std::size_t>(g.integer(1, 50));
    const auto a = g.labels(n, 0, 4);
    const auto b = g.labels(n, 0, 4);
    const double got = quadratic_weighted_kappa(a, b, 0, 4);
    if (oracle::qwk_expected(a, b) == 0.0) {
      // Both raters used one shared label: kappa is undefined, and the
      // library reports perfect agreement.
      expect(got == 1.0, "undefined kappa convention");
      continue;
    }
    expect_near(got, oracle::qwk(a, b, 0, 4), 1e-12, fmt::format("pair {} (n={})", checked, n));
    ++checked;
  }
  const double elapsed = seconds_since(start);
  expect(elapsed < 1.0, fmt::format("took {:.3f} s", elapsed));
}

void binary_degeneracy() {
  gen::Gen g(7);
  for (int i = 0; i < 200; ++i) {
    const auto n = static_cast<std::size_t>(g.integer(1, 50));
    const auto a = g.labels(n, 0, 1);
    const auto b = g.labels(n, 0, 1);
    expect_near(quadratic_weighted_kappa(a, b, 0, 1), cohen_kappa(a, b), 1e-12, fmt::format("pair {}", i));
  }
}

void metric_hand_values() {
  const std::vector<int> ka{1, 1, 0, 0, 1}, kb{1, 0, 0, 0, 1};
  // p_o = 4/5, p_e = (3*2 + 2*3) / 25 = 12/25, kappa = (20 - 12) / (25 - 12) = 8/13.
  expect_near(cohen_kappa(ka, kb), 8.0 / 13.0, 1e-9, "kappa hand value");
  expect_near(cohen_kappa(ka, kb), 0.615384615, 1e-9, "kappa literal");
  expect_near(cohen_kappa(ka, kb), oracle::kappa(ka, kb, 0, 1), 1e-12, "kappa oracle");

  const std::vector<int> gold{1, 0, 1, 1}, pred{1, 0, 0, 1};
  // Class 1: P = 1, R = 2/3, F1 = 4/5. Class 0: P = 1/2, R = 1, F1 = 2/3. Mean 11/15.
  expect_near(macro_f1(pred, gold), 11.0 / 15.0, 1e-9, "macro F1 hand value");
  expect_near(macro_f1(pred, gold), 0.733333333, 1e-9, "macro F1 literal");
  expect_near(macro_f1(pred, gold), oracle::macro_f1(pred, gold), 1e-12, "macro F1 oracle");
}

void agreement_bands() {
  const std::vector<std::pair<double, AgreementBand>> cases{{0.68, AgreementBand::kModerate},
                                                            {0.80, AgreementBand::kStrong},
                                                            {0.95, AgreementBand::kAlmostPerfect},
                                                            {0.91, AgreementBand::kAlmostPerfect},
                                                            {0.59, AgreementBand::kNoneToWeak}};
  for (const auto& [q, band] : cases) {
    expect(agreement_band(q) == band,
           fmt::format("{} -> {}, want {}", q, to_string(agreement_band(q)), to_string(band)));
  }
  expect(to_string(agreement_band(0.59)) == "none_to_weak", "band name");
}

// ---- IRR ----

// Two raters on one subscore from a 2x2 table of counts.
std::pair<RaterScores, RaterScores> table(int both1, int a_only, int b_only, int both0) {
  RaterScores a{"A", {}}, b{"B", {}};
  int i = 0;
  auto add = [&](int count, int x, int y) {
    for (int k = 0; k < count; ++k, ++i) {
      const std::string id = fmt::format("r{:04d}", i);
      a.scores.push_back(make_score_vector(id, {{"s", x}}));
      b.scores.push_back(make_score_vector(id, {{"s", y}}));
    }
  };
  add(both1, 1, 1);
  add(a_only, 1, 0);
  add(b_only, 0, 1);
  add(both0, 0, 0);
  return {a, b};
}

void irr_gate_strictness() {
  const Rubric r = make_rubric("q", "Q", {{"s", SubscoreKind::kConcept, "c", 1}});
  // n = 15, agree = 13, chance * n^2 = 125: kappa = (195 - 125) / (225 - 125) = 0.7.
  const auto [a7, b7] = table(4, 1, 1, 9);
  const IrrRound at = compute_round(a7, b7, r);
  expect(at.kappa_by_subscore.at("s") == 0.7, fmt::format("kappa {:.17g}, want 0.7", at.kappa_by_subscore.at("s")));
  expect(!at.passed, "kappa 0.70 passed the gate");
  // n = 156: kappa = 701/1000.
  const auto [a701, b701] = table(54, 3, 20, 79);
  const IrrRound above = compute_round(a701, b701, r);
  expect(above.kappa_by_subscore.at("s") == 0.701,
         fmt::format("kappa {:.17g}, want 0.701", above.kappa_by_subscore.at("s")));
  expect(above.passed, "kappa 0.701 failed the gate");
  expect(!gate_passes({{"s", 0.70}}, kIrrKappaThreshold), "gate_passes(0.70)");
  expect(gate_passes({{"s", 0.701}}, kIrrKappaThreshold), "gate_passes(0.701)");
}

// ---- end to end through the CLI ----

struct CliRun {
  Split split;
  std::map<std::string, std::string> prompts;      // mode -> rendered bytes
  std::map<std::string, std::string> run_digests;  // implementation -> digest
  json report;
};

CliRun full_cli_pipeline(const std::filesystem::path& home, const std::string& seed) {
  const std::string exp = "synthetic";
  auto ok = [&](const std::vector<std::string>& args) {
    auto r = cli::run(home, args);
    expect(r.exit_code == 0, fmt::format("`{}` exited {}: {}", fmt::join(args, " "), r.exit_code, r.err));
    return r;
  };
  CliRun out;
  pipeline::prepare(home, exp, {"--seed", seed});
  out.split = ok({"-e", exp, "--json", "split"}).json().get<Split>();
  for (const char* mode : {"zero_shot", "few_shot", "few_shot_cot"}) {
    out.prompts[mode] = ok({"-e", exp, "prompt", "build", "--mode", mode, "--print"}).out;
    out.run_digests[mode] =
        ok({"-e", exp, "--json", "score", "--prompt", mode, "--on", "test"}).json()["run_digest"];
  }
  ok({"-e", exp, "al", "init"});
  const json v = ok({"-e", exp, "--json", "al", "validate"}).json();
  expect(v["decision"]["status"] == "converged", "echo-gold validation did not converge");
  out.run_digests["cot_al"] = ok({"-e", exp, "--json", "score", "--prompt", "cot_al", "--on", "test"}).json()["run_digest"];
  out.report = ok({"-e", exp, "--json", "report", "--on", "test"}).json();
  return out;
}

void end_to_end_oracle() {
  TempDir home;
  const auto start = std::chrono::steady_clock::now();
  const CliRun run = full_cli_pipeline(home.path(), "0");
  const double elapsed = seconds_since(start);
  expect(run.report.size() == 4, fmt::format("{} report rows, want 4", run.report.size()));
  const Rubric rubric = pipeline::fixture().rubric;
  for (const auto& row : run.report) {
    const auto report = row["report"].get<EvaluationReport>();
    auto check = [&](const std::string& block, const MetricReport& m) {
      const std::string where = fmt::format("{} / {}", row["implementation"].get<std::string>(), block);
      expect(m.n == 12, where + ": n != 12");
      expect(m.accuracy == 1.0 && m.macro_f1 == 1.0 && m.qwk == 1.0,
             fmt::format("{}: acc {} f1 {} qwk {}", where, m.accuracy, m.macro_f1, m.qwk));
    };
    expect(report.by_subscore.size() == rubric.subscores.size(), "subscore blocks missing");
    for (const auto& s : report.by_subscore) check(s.subscore, s.report);
    check("total", report.total);
  }
  expect(elapsed < 5.0, fmt::format("took {:.2f} s", elapsed));
}

void determinism() {
  TempDir a, b;
  const CliRun ra = full_cli_pipeline(a.path(), "42");
  const CliRun rb = full_cli_pipeline(b.path(), "42");
  expect(ra.split == rb.split, "split ids differ");
  expect(ra.split.seed == 42, "seed not applied");
  expect(ra.prompts == rb.prompts, "prompt bytes differ");
  expect(ra.run_digests == rb.run_digests, "run digests differ");
  TempDir c;
  pipeline::prepare(c.path(), "synthetic", {"--seed", "43"});
  const auto other = cli::run(c.path(), {"-e", "synthetic", "--json", "split"}).json().get<Split>();
  expect(other.test_ids != ra.split.test_ids, "a different seed gave the same split");
}

// ---- prompt builder and parser ----

void balance_invariant() {
  gen::Gen g(99);
  int failures_seen = 0;
  for (int trial = 0; trial < 300; ++trial) {
    const Rubric r = g.rubric(1, 5);
    PromptSpec spec;
    spec.rubric = r;
    spec.persona_preamble = default_persona_template();
    spec.format_instructions = apply_template(default_format_template(), r);
    spec.mode = g.coin() ? PromptMode::kFewShotCot : PromptMode::kFewShot;
    const int n = g.integer(1, 5);
    for (int k = 0; k < n; ++k) spec.exemplars.push_back(g.exemplar(r, "e" + std::to_string(k)));

    std::vector<std::string> lacking;
    for (const auto& s : r.subscores) {
      int pos = 0, neg = 0;
      for (const auto& e : spec.exemplars) (e.gold.by_subscore.at(s.name) == 1 ? pos : neg)++;
      if (pos == 0) lacking.push_back(fmt::format("subscore {} lacks a positive instance", s.name));
      if (neg == 0) lacking.push_back(fmt::format("subscore {} lacks a negative instance", s.name));
    }
    const BalanceReport report = check_balance(spec.exemplars, r);
    expect(report.violations == lacking, fmt::format("trial {}: balance report disagrees", trial));
    try {
      render_prompt(spec);
      expect(lacking.empty(), fmt::format("trial {}: unbalanced prompt rendered", trial));
    } catch (const ValidationError& e) {
      expect(!lacking.empty(), fmt::format("trial {}: balanced prompt refused: {}", trial, e.what()));
      expect(e.code() == "unbalanced_prompt", "wrong error code " + e.code());
      for (const auto& v : lacking) expect(std::string(e.what()).find(v) != std::string::npos, "message omits " + v);
      ++failures_seen;
      spec.allow_unbalanced = true;
      render_prompt(spec);
    }
  }
  expect(failures_seen > 50, "too few unbalanced trials to be meaningful");
}

void parser_round_trip() {
  gen::Gen g(5);
  for (int i = 0; i < 100; ++i) {
    const Rubric r = g.rubric(1, 8);
    const CotExemplar e = g.exemplar(r, "x" + std::to_string(i));
    const ParsedScore p = parse_generation(render_cot_block(e, r), r, e.response.id);
    expect(p.scores == e.gold, fmt::format("exemplar {}: scores differ", i));
    expect(p.flags.empty(), fmt::format("exemplar {}: unexpected flags", i));
  }

  const Rubric r = make_rubric("ice", "Q", {{"level_unchanged", SubscoreKind::kConcept, "c1", 1},
                                            {"displacement", SubscoreKind::kConcept, "c2", 1},
                                            {"mass_conservation", SubscoreKind::kReasoning, "r1", 1}});
  const std::string tail = "SUBSCORE displacement: 0\nSUBSCORE mass_conservation: 1\n";
  const std::vector<std::pair<std::string, ParseErrorKind>> corpora{
      {"SUBSCORE level_unchanged: 1\nSUBSCORE displacement: 0\nTOTAL: 1", ParseErrorKind::kMissingSubscore},
      {std::string(kGarbageAnswer), ParseErrorKind::kMissingSubscore},
      {"SUBSCORE level_unchanged: 2\n" + tail + "TOTAL: 3", ParseErrorKind::kNonBinaryValue},
      {"SUBSCORE level_unchanged: yes\n" + tail, ParseErrorKind::kNonBinaryValue},
      {"SUBSCORE level_unchanged: 1\nSUBSCORE level_unchanged: 1\n" + tail, ParseErrorKind::kDuplicateSubscore},
      {"SUBSCORE Level Unchanged: 1\nSUBSCORE level_unchanged: 0\n" + tail, ParseErrorKind::kDuplicateSubscore},
      {"SUBSCORE zeta: 1\n" + tail, ParseErrorKind::kUnknownSubscore},
      {"SUBSCORE level_unchange: 1\n" + tail, ParseErrorKind::kUnknownSubscore},
      {"SUBSCORE level_unchanged: 1\n" + tail + "TOTAL: two", ParseErrorKind::kMalformedTotal},
      {"SUBSCORE level_unchanged: 1\n" + tail + "TOTAL: 2.5", ParseErrorKind::kMalformedTotal},
  };
  for (std::size_t i = 0; i < corpora.size(); ++i) {
    try {
      parse_generation(corpora[i].first, r);
      throw Failure{fmt::format("corpus {} parsed", i)};
    } catch (const ParseError& e) {
      expect(e.kind() == corpora[i].second,
             fmt::format("corpus {}: {} instead of {}", i, to_string(e.kind()), to_string(corpora[i].second)));
    }
  }
}

// ---- active learning ----

using Labeler = std::function<SubscoreValues(const std::string& id)>;

/// Experiment on the synthetic fixture, through IRR (both raters give
/// `label`) to an initialised active-learning loop on few_shot_cot.
Workbench al_experiment(const std::filesystem::path& home, ExperimentConfig cfg, const Labeler& label = {}) {
  const Dataset d = pipeline::fixture();
  cfg.experiment_id = "al";
  cfg.rubric = d.rubric;
  Workbench wb = Workbench::init(home, cfg, pipeline::dataset_path());
  wb.split();
  const auto sample = wb.irr_sample();
  RaterScores a{"A", {}};
  ReasoningDrafts drafts;
  for (const auto& id : sample) {
    const SubscoreValues v = label ? label(id) : d.gold_for(id)->by_subscore;
    a.scores.push_back(make_score_vector(id, v));
    for (const auto& s : d.rubric.subscores) {
      drafts[id][s.name] = compose_reasoning(d.response(id)->text, s.criteria, v.at(s.name));
    }
  }
  RaterScores b = a;
  b.rater_id = "B";
  expect(wb.irr_compute(a, b).passed, "IRR gate");
  wb.irr_resolve({}, drafts);
  wb.build_prompt(PromptMode::kFewShotCot);
  wb.al_init();
  return wb;
}

std::unique_ptr<Gateway> scripted(MockBackend::Script script) {
  auto backend = std::make_unique<MockBackend>();
  backend->set_fallback(std::move(script));
  auto g = std::make_unique<Gateway>(GatewayConfig{}, std::move(backend));
  g->set_sleeper([](auto) {});
  return g;
}

// Pool ids (sorted) whose gold on `subscore` equals `value`.
std::vector<std::string> pool_where(const Workbench& wb, const std::string& subscore, int value) {
  const Dataset d = wb.dataset();
  std::vector<std::string> out;
  for (const auto& id : wb.al_state().validation_pool) {
    if (d.gold_for(id)->by_subscore.at(subscore) == value) out.push_back(id);
  }
  return out;
}

ErrorTag tag(const std::string& pattern, const std::vector<std::string>& ids, const std::string& subscore,
             int gold) {
  return {pattern, "injected " + pattern, {ids.begin(), ids.end()}, subscore,
          gold == 1 ? ErrorDirection::kFalseNegative : ErrorDirection::kFalsePositive};
}

// Every candidate accepted with its draft reasoning, as a reviewer would after editing.
void accept_all(Workbench& wb) {
  std::vector<AcceptedCandidate> accepted;
  for (const auto& c : wb.al_state().pending_candidates) accepted.push_back({c.exemplar.response.id, c.draft_reasoning});
  wb.al_accept(accepted);
}

// A fresh reader of the same experiment must recompute `live` from disk.
void expect_replay(const std::filesystem::path& home, const StopDecision& live, const std::string& what) {
  const Workbench reader(home, "al");
  const auto replayed = reader.al_decision();
  expect(replayed.has_value() && *replayed == live, what + ": replayed decision differs");
}

void al_stopping() {
  const Dataset d = pipeline::fixture();

  {  // converged: [k, 0]
    TempDir home;
    Workbench wb = al_experiment(home.path(), {});
    const auto cohort = pool_where(wb, "buoyancy_link", 1);
    expect(cohort.size() >= 4, "fixture lacks buoyancy positives");
    const std::vector<std::string> k(cohort.begin(), cohort.begin() + 4);
    std::vector<RepairRule> rules;
    for (const auto& id : k) rules.push_back({id, "buoyancy_link", {k.begin(), k.end()}});
    auto g = scripted(repairing_script(d.rubric, d.responses, d.gold, rules));
    auto first = wb.al_validate(*g);
    expect(first.iteration.error_count == 4, fmt::format("first count {}", first.iteration.error_count));
    expect(first.decision.status == StopStatus::kContinue, "first decision");
    wb.al_tag({tag("P1", k, "buoyancy_link", 1)});
    wb.al_select();
    accept_all(wb);
    auto second = wb.al_validate(*g);
    expect(second.iteration.error_count == 0, fmt::format("second count {}", second.iteration.error_count));
    expect(second.decision.status == StopStatus::kConverged, "not converged: " + second.decision.reason);
    expect_replay(home.path(), second.decision, "converged");
  }

  {  // overfit: [5, 8], then revert restores the prompt
    TempDir home;
    ExperimentConfig cfg;
    cfg.al.max_additions = 1;
    Workbench wb = al_experiment(home.path(), cfg);
    const auto fives = pool_where(wb, "displacement", 0);
    const auto eights = pool_where(wb, "level_unchanged", 1);
    expect(fives.size() >= 5 && eights.size() >= 14, "fixture too small for the overfit script");
    const std::set<std::string> a(fives.begin(), fives.begin() + 5);
    std::set<std::string> b;
    for (const auto& id : eights) {
      if (!a.contains(id) && b.size() < 8) b.insert(id);
    }
    const std::size_t base = wb.al_state().spec.exemplars.size();
    // The original prompt misleads on set a; any longer prompt on set b.
    auto g = scripted(oracle_script(d.rubric, d.responses, d.gold,
                                    [&](const CompletionRequest& req, const ScoreVector& gold) -> std::optional<ScoreVector> {
                                      std::size_t shown = 0;
                                      for (auto p = req.prompt.find("### EXAMPLE "); p != std::string::npos;
                                           p = req.prompt.find("### EXAMPLE ", p + 1)) {
                                        ++shown;
                                      }
                                      ScoreVector out = gold;
                                      if (shown == base && a.contains(gold.response_id)) out.by_subscore["displacement"] ^= 1;
                                      if (shown > base && b.contains(gold.response_id)) out.by_subscore["level_unchanged"] ^= 1;
                                      out.total = total_of(out);
                                      return out;
                                    }));
    const std::string digest0 = wb.al_state().prompt_digest();
    auto first = wb.al_validate(*g);
    expect(first.iteration.error_count == 5, fmt::format("first count {}", first.iteration.error_count));
    wb.al_tag({tag("P1", {a.begin(), a.end()}, "displacement", 0)});
    wb.al_select();
    accept_all(wb);
    expect(wb.al_state().prompt_digest() != digest0, "prompt unchanged after accept");
    auto second = wb.al_validate(*g);
    expect(second.iteration.error_count == 8, fmt::format("second count {}", second.iteration.error_count));
    expect(second.decision.status == StopStatus::kOverfitRevert, "not overfit: " + second.decision.reason);
    expect(second.decision.revert_to == 0, "revert target");
    expect_replay(home.path(), second.decision, "overfit");
    wb.al_revert(*second.decision.revert_to);
    expect(wb.al_state().prompt_digest() == digest0, "revert did not restore the prompt digest");
    expect(wb.al_state().spec.exemplars.size() == base, "revert left extra exemplars");
  }

  {  // exhausted: every tagged instance would unbalance the prompt
    TempDir home;
    ExperimentConfig cfg;
    cfg.irr_fraction = 0.18;  // 9 of 48 training responses
    cfg.al.balance.strategy = BalanceStrategy::kUniform;
    // Raters label 5 sampled responses all-positive and 4 all-negative, so
    // every subscore sits at |pos - neg| = 1.
    std::map<std::string, int> rank;
    Labeler label = [&](const std::string& id) {
      if (!rank.contains(id)) rank.emplace(id, static_cast<int>(rank.size()));
      SubscoreValues v;
      for (const auto& s : d.rubric.subscores) v[s.name] = rank.at(id) < 5 ? 1 : 0;
      return v;
    };
    Workbench wb = al_experiment(home.path(), cfg, label);
    expect(wb.al_state().spec.exemplars.size() == 9, "sample size");
    const auto targets = pool_where(wb, "displacement", 1);
    expect(targets.size() >= 3, "fixture lacks displacement positives");
    const std::vector<std::string> t(targets.begin(), targets.begin() + 3);
    Perturbation p;
    for (const auto& id : t) p.flips.insert({id, "displacement"});
    auto g = scripted(perturbed_script(d.rubric, d.responses, d.gold, p));
    auto first = wb.al_validate(*g);
    expect(first.iteration.error_count == 3, fmt::format("count {}", first.iteration.error_count));
    const ALState tagged = wb.al_tag({tag("P1", t, "displacement", 1)});
    const StopDecision live = check_stop(tagged.history, tagged, d, wb.config().al);
    expect(live.status == StopStatus::kExhausted, "not exhausted: " + live.reason);
    const auto selection = wb.al_select();
    expect(selection.exhausted && selection.candidates.empty(), "selection offered a candidate");
    expect_replay(home.path(), live, "exhausted");
  }
}

void al_convergence_simulation() {
  const Dataset d = pipeline::fixture();
  TempDir home;
  ExperimentConfig cfg;
  cfg.al.max_iterations = 3;
  cfg.al.max_additions = 1;  // one pattern treated per iteration
  Workbench wb = al_experiment(home.path(), cfg);

  struct Pattern {
    std::string id, subscore;
    int gold;
    std::vector<std::string> members;
  };
  std::vector<Pattern> patterns{{"P1", "level_unchanged", 0, {}}, {"P2", "mass_conservation", 1, {}},
                                {"P3", "displacement", 1, {}}};
  const std::vector<std::size_t> sizes{4, 3, 2};
  std::set<std::string> used;
  for (std::size_t i = 0; i < patterns.size(); ++i) {
    for (const auto& id : pool_where(wb, patterns[i].subscore, patterns[i].gold)) {
      if (patterns[i].members.size() < sizes[i] && !used.contains(id)) {
        patterns[i].members.push_back(id);
        used.insert(id);
      }
    }
    expect(patterns[i].members.size() == sizes[i], "fixture too small for pattern " + patterns[i].id);
  }
  std::vector<RepairRule> rules;
  for (const auto& p : patterns) {
    for (const auto& id : p.members) rules.push_back({id, p.subscore, {p.members.begin(), p.members.end()}});
  }
  auto g = scripted(repairing_script(d.rubric, d.responses, d.gold, rules));

  std::vector<int> counts;
  for (int guard = 0; guard < 10; ++guard) {
    const auto outcome = wb.al_validate(*g);
    counts.push_back(outcome.iteration.error_count);
    if (outcome.decision.status != StopStatus::kContinue) {
      expect(outcome.decision.status == StopStatus::kConverged, "stopped without converging: " + outcome.decision.reason);
      break;
    }
    // The reviewer groups the misclassified instances by the pattern they share.
    std::set<std::string> wrong;
    for (const auto& m : outcome.iteration.misclassified) wrong.insert(m.response_id);
    std::vector<ErrorTag> tags;
    for (const auto& p : patterns) {
      std::vector<std::string> ids;
      for (const auto& id : p.members) {
        if (wrong.contains(id)) ids.push_back(id);
      }
      if (!ids.empty()) tags.push_back(tag(p.id, ids, p.subscore, p.gold));
    }
    wb.al_tag(tags);
    wb.al_select();
    accept_all(wb);
  }
  const int iterations = static_cast<int>(counts.size()) - 1;
  expect(wb.al_decision()->status == StopStatus::kConverged, "did not converge");
  expect(iterations <= 3, fmt::format("{} iterations: {}", iterations, fmt::join(counts, ", ")));
  expect(counts.front() == 9, fmt::format("initial errors {}", counts.front()));
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<void()>>> criteria{
      {"QWK oracle equivalence (200 pairs, 1e-12, < 1 s)", qwk_oracle_equivalence},
      {"Binary degeneracy: QWK == Cohen's kappa", binary_degeneracy},
      {"Metric hand values: kappa 0.615384..., macro F1 0.7333...", metric_hand_values},
      {"Agreement bands", agreement_bands},
      {"IRR gate strictness: 0.70 fails, 0.701 passes", irr_gate_strictness},
      {"End-to-end echo-gold run via CLI: all metrics 1.0, < 5 s", end_to_end_oracle},
      {"Balance invariant: unbalanced prompts refused, subscore named", balance_invariant},
      {"Parser round trip (100 exemplars) and 10 malformed corpora", parser_round_trip},
      {"AL stopping: converged, overfit_revert with restore, exhausted; replayed", al_stopping},
      {"AL convergence: 3 patterns repaired within 3 iterations", al_convergence_simulation},
      {"Determinism: split ids, prompt bytes, run digests", determinism},
  };
  int failed = 0;
  for (const auto& [name, fn] : criteria) {
    std::string detail;
    try {
      fn();
    } catch (const Failure& f) {
      detail = f.what;
    } catch (const std::exception& e) {
      detail = std::string("exception: ") + e.what();
    }
    if (detail.empty()) {
      std::printf("PASS  %s\n", name.c_str());
    } else {
      ++failed;
      std::printf("FAIL  %s: %s\n", name.c_str(), detail.c_str());
    }
  }
  std::printf("%zu criteria, %d failed\n", criteria.size(), failed);
  return failed == 0 ? 0 : 1;
}
