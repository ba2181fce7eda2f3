// rubric-loop: command-line front end to the scoring workbench.
//
// Exit codes: 0 ok, 1 validation, 2 gateway, 3 IRR gate failed, 4 lock or
// stale head, 5 internal.

#include <csignal>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <fmt/ranges.h>
#include <nlohmann/json.hpp>

#include "rubric_loop/errors.hpp"
#include "rubric_loop/irr.hpp"
#include "rubric_loop/service.hpp"
#include "rubric_loop/storage.hpp"
#include "rubric_loop/workbench.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace rubric_loop;

namespace {

struct Globals {
  std::string home;
  std::string experiment;
  bool json_out = false;
};

struct BackendOpts {
  std::string backend;
  std::string mock_script = "echo-gold";
  int max_inflight = 0;
};

void add_backend_options(CLI::App* cmd, BackendOpts& o) {
  cmd->add_option("--backend", o.backend, "mock or live (default: experiment config)")
      ->check(CLI::IsMember({"mock", "live"}));
  cmd->add_option("--mock-script", o.mock_script,
                  "echo-gold, garbage, table:<file>, flip:<file>, repair:<file>");
  cmd->add_option("--max-inflight", o.max_inflight, "concurrent completions");
}

json read_json(const std::string& path) {
  auto j = json::parse(read_file(path), nullptr, false);
  if (j.is_discarded()) throw ValidationError("json_parse", path + " is not valid JSON");
  return j;
}

std::unique_ptr<Gateway> gateway_for(const Workbench& wb, const BackendOpts& o) {
  GatewayConfig cfg = wb.config().gateway;
  if (!o.backend.empty()) cfg.backend = parse_backend_kind(o.backend);
  if (o.max_inflight > 0) cfg.max_inflight = o.max_inflight;
  return make_gateway(cfg, BackendChoice{o.mock_script, {}}, wb.dataset());
}

void print_kappas(const IrrRound& round, const Rubric& rubric) {
  fmt::print("IRR round {} (gate: kappa > {})\n", round.round_index, round.threshold);
  for (const auto& s : rubric.subscores) {
    const double k = round.kappa_by_subscore.at(s.name);
    fmt::print("  {:<24} {:>7.4f}  {}\n", s.name, k, k > round.threshold ? "pass" : "FAIL");
  }
  fmt::print("{} disagreement(s)\n", round.disagreements.size());
}

void print_report(const std::string& title, const EvaluationReport& r) {
  fmt::print("{}\n", title);
  for (const auto& s : r.by_subscore) {
    fmt::print("  {:<24} n={:<4} acc={:.2f} f1={:.2f} qwk={:.2f}\n", s.subscore, s.report.n,
               s.report.accuracy, s.report.macro_f1, s.report.qwk);
  }
  fmt::print("  {:<24} n={:<4} acc={:.2f} f1={:.2f} qwk={:.2f} ({})\n", "total", r.total.n, r.total.accuracy,
             r.total.macro_f1, r.total.qwk, to_string(agreement_band(r.total.qwk)));
}

void print_decision(const StopDecision& d) {
  fmt::print("decision: {} ({})\n", to_string(d.status), d.reason);
  if (d.revert_to) fmt::print("  revert to iteration {} with: rubric-loop al revert --to {}\n", *d.revert_to, *d.revert_to);
}

void print_selection(const CandidateSelection& sel) {
  for (const auto& c : sel.candidates) {
    fmt::print("candidate {} [{}] weight={} covers: {}\n", c.exemplar.response.id,
               c.role == CandidateRole::kCover ? "cover" : "rebalance", c.weight,
               fmt::join(c.covered_patterns, ", "));
  }
  if (!sel.uncovered_patterns.empty()) {
    fmt::print("uncovered patterns: {}\n", fmt::join(sel.uncovered_patterns, ", "));
  }
  if (sel.exhausted) fmt::print("exhausted: {}\n", sel.exhausted_reason);
}

std::vector<AcceptedCandidate> prompt_acceptance(const ALState& state) {
  std::vector<AcceptedCandidate> out;
  for (const auto& c : state.pending_candidates) {
    fmt::print("\n== {} ==\n{}\n", c.exemplar.response.id, c.exemplar.response.text);
    fmt::print("accept? [y/N] ");
    std::fflush(stdout);
    std::string answer;
    if (!std::getline(std::cin, answer)) break;
    if (answer != "y" && answer != "Y") continue;
    AcceptedCandidate a{c.exemplar.response.id, {}};
    for (const auto& [sub, draft] : c.draft_reasoning) {
      fmt::print("reasoning for {} (gold {}), empty keeps the draft:\n  {}\n> ", sub,
                 c.exemplar.gold.by_subscore.at(sub), draft);
      std::fflush(stdout);
      std::string line;
      std::getline(std::cin, line);
      a.reasoning[sub] = normalize_response_text(line).empty() ? draft : line;
    }
    out.push_back(std::move(a));
  }
  return out;
}

std::vector<AcceptedCandidate> read_acceptance(const std::string& file, bool use_drafts, const ALState& state) {
  if (use_drafts) {
    std::vector<AcceptedCandidate> out;
    for (const auto& c : state.pending_candidates) out.push_back({c.exemplar.response.id, c.draft_reasoning});
    return out;
  }
  return read_json(file).get<std::vector<AcceptedCandidate>>();
}

std::optional<std::string> head_opt(const std::string& h) {
  return h.empty() ? std::nullopt : std::optional<std::string>(h);
}

Service* g_service = nullptr;

void on_signal(int) {
  if (g_service != nullptr) g_service->stop();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Human-in-the-loop rubric scoring workbench"};
  app.require_subcommand(1);
  Globals g;
  app.add_option("--home", g.home, "state directory (default: $RUBRIC_LOOP_HOME or ./.rubric_loop)");
  app.add_option("-e,--experiment", g.experiment, "experiment id");
  app.add_flag("--json", g.json_out, "machine-readable output");

  // init
  auto* init = app.add_subcommand("init", "create an experiment from a rubric and a dataset");
  std::string rubric_path, dataset_path, config_path;
  std::optional<std::uint64_t> init_seed;
  std::optional<int> max_iterations;
  std::string balance;
  init->add_option("--rubric", rubric_path, "rubric JSON")->required();
  init->add_option("--dataset", dataset_path, "dataset JSONL")->required();
  init->add_option("--config", config_path, "JSON with config overrides");
  init->add_option("--seed", init_seed, "seed for splits and samples");
  init->add_option("--max-iterations", max_iterations, "active-learning iteration budget");
  init->add_option("--balance", balance, "min_constraint, uniform or empirical");

  auto* split = app.add_subcommand("split", "80/20 train/test split");
  std::optional<double> ratio;
  std::optional<std::uint64_t> split_seed;
  split->add_option("--ratio", ratio, "training fraction");
  split->add_option("--seed", split_seed, "shuffle seed");

  auto* irr = app.add_subcommand("irr", "inter-rater reliability");
  irr->require_subcommand(1);
  auto* irr_sample = irr->add_subcommand("sample", "draw the IRR sample from the training set");
  std::optional<double> fraction;
  irr_sample->add_option("--fraction", fraction, "sample fraction");
  auto* irr_compute = irr->add_subcommand("compute", "kappa per subscore between two raters");
  std::string rater_a, rater_b;
  irr_compute->add_option("--rater-a", rater_a)->required();
  irr_compute->add_option("--rater-b", rater_b)->required();
  auto* irr_worksheet = irr->add_subcommand("worksheet", "disagreement worksheet (CSV)");
  std::string worksheet_out;
  irr_worksheet->add_option("--out", worksheet_out, "write to file instead of stdout");
  auto* irr_resolve = irr->add_subcommand("resolve", "record consensus and emit exemplars");
  std::string consensus_path, drafts_path, resolved_by = "raters", head;
  irr_resolve->add_option("--consensus", consensus_path, "worksheet CSV or JSON list")->required();
  irr_resolve->add_option("--drafts", drafts_path, "JSON: response id -> subscore -> reasoning");
  irr_resolve->add_option("--by", resolved_by, "comma-separated resolver names");
  irr_resolve->add_option("--expected-head", head);

  auto* prompt = app.add_subcommand("prompt", "prompt specs");
  prompt->require_subcommand(1);
  auto* prompt_build = prompt->add_subcommand("build", "build and persist a prompt spec");
  std::string mode = "few_shot_cot";
  bool allow_unbalanced = false, print_prompt = false;
  prompt_build->add_option("--mode", mode)->check(CLI::IsMember({"zero_shot", "few_shot", "few_shot_cot"}));
  prompt_build->add_flag("--allow-unbalanced", allow_unbalanced);
  prompt_build->add_flag("--print", print_prompt, "print the rendered prompt");

  auto* score = app.add_subcommand("score", "score a partition with a prompt");
  std::string impl = "few_shot_cot", partition = "test";
  bool resume = false;
  BackendOpts backend;
  score->add_option("--prompt", impl, "zero_shot, few_shot, few_shot_cot or cot_al");
  score->add_option("--on", partition, "test, train or all");
  score->add_flag("--resume", resume, "continue the previous run of this prompt");
  add_backend_options(score, backend);

  auto* evaluate = app.add_subcommand("evaluate", "metrics of the latest run");
  evaluate->add_option("--prompt", impl);
  evaluate->add_option("--on", partition);

  auto* al = app.add_subcommand("al", "active learning");
  al->require_subcommand(1);
  auto* al_init = al->add_subcommand("init", "start from a prompt");
  std::string from = "few_shot_cot";
  al_init->add_option("--from", from);
  auto* al_validate = al->add_subcommand("validate", "score the validation pool");
  add_backend_options(al_validate, backend);
  al_validate->add_option("--expected-head", head);
  auto* al_tag = al->add_subcommand("tag", "attach error tags to the latest iteration");
  std::string tags_path;
  al_tag->add_option("--file", tags_path)->required();
  al_tag->add_option("--expected-head", head);
  auto* al_select = al->add_subcommand("select", "select candidate exemplars");
  al_select->add_option("--expected-head", head);
  auto* al_accept = al->add_subcommand("accept", "accept candidates with reasoning");
  std::string accept_path;
  bool use_drafts = false;
  al_accept->add_option("--file", accept_path, "JSON list of {response_id, reasoning}");
  al_accept->add_flag("--use-drafts", use_drafts, "accept every pending candidate with its draft reasoning");
  al_accept->add_option("--expected-head", head);
  auto* al_step = al->add_subcommand("step", "validate, then optionally tag, select and accept");
  bool interactive = false;
  add_backend_options(al_step, backend);
  al_step->add_option("--tags", tags_path);
  al_step->add_option("--accept", accept_path);
  al_step->add_flag("--use-drafts", use_drafts);
  al_step->add_flag("--interactive", interactive);
  auto* al_status = al->add_subcommand("status", "loop state and stop decision");
  auto* al_revert = al->add_subcommand("revert", "restore an earlier prompt");
  int revert_to = 0;
  al_revert->add_option("--to", revert_to)->required();
  al_revert->add_option("--expected-head", head);

  auto* report = app.add_subcommand("report", "comparison table across prompts");
  std::string csv_out;
  report->add_option("--on", partition);
  report->add_option("--csv", csv_out, "also write CSV here");

  auto* serve = app.add_subcommand("serve", "HTTP API for the review UI");
  std::string host = "127.0.0.1";
  int port = 8080;
  serve->add_option("--host", host);
  serve->add_option("--port", port);
  serve->add_option("--mock-script", backend.mock_script);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : static_cast<int>(ExitCode::kValidation);
  }

  const fs::path home = g.home.empty() ? default_home() : fs::path(g.home);
  auto need_experiment = [&] {
    if (g.experiment.empty()) throw ValidationError("missing_experiment", "--experiment is required");
    return Workbench(home, g.experiment);
  };
  auto emit = [&](const json& j, const std::function<void()>& text) {
    if (g.json_out) {
      fmt::print("{}\n", j.dump(2));
    } else {
      text();
    }
  };

  try {
    if (*init) {
      if (g.experiment.empty()) throw ValidationError("missing_experiment", "--experiment is required");
      ExperimentConfig cfg;
      if (!config_path.empty()) {
        json j = read_json(config_path);
        j["experiment_id"] = g.experiment;
        j["rubric"] = load_rubric(rubric_path);
        cfg = j.get<ExperimentConfig>();
      }
      cfg.experiment_id = g.experiment;
      cfg.rubric = load_rubric(rubric_path);
      if (init_seed) cfg.seed = *init_seed;
      if (max_iterations) cfg.al.max_iterations = *max_iterations;
      if (!balance.empty()) cfg.al.balance.strategy = parse_balance_strategy(balance);
      Workbench wb = Workbench::init(home, cfg, dataset_path);
      const auto n = wb.dataset().responses.size();
      emit({{"experiment_id", g.experiment}, {"responses", n}, {"head", wb.head()}},
           [&] { fmt::print("created experiment {} with {} responses\n", g.experiment, n); });
    } else if (*split) {
      Workbench wb = need_experiment();
      Split s = wb.split(ratio, split_seed);
      emit(s, [&] { fmt::print("train {} / test {} (seed {})\n", s.train_ids.size(), s.test_ids.size(), s.seed); });
    } else if (*irr_sample) {
      Workbench wb = need_experiment();
      auto ids = wb.irr_sample(fraction);
      emit({{"sample", ids}}, [&] {
        fmt::print("IRR sample of {}:\n", ids.size());
        for (const auto& id : ids) fmt::print("  {}\n", id);
      });
    } else if (*irr_compute) {
      Workbench wb = need_experiment();
      const Rubric rubric = wb.config().rubric;
      IrrRound round = wb.irr_compute(load_rater_scores(rater_a, rubric), load_rater_scores(rater_b, rubric));
      emit(round, [&] { print_kappas(round, rubric); });
      if (!round.passed) {
        const auto failing = failing_subscores(round, rubric);
        fmt::print(stderr, "error[gate_failed]: kappa at or below {} for: {}\n", round.threshold,
                   fmt::join(failing, ", "));
        return static_cast<int>(ExitCode::kGateFailed);
      }
    } else if (*irr_worksheet) {
      Workbench wb = need_experiment();
      auto round = wb.latest_irr_round();
      if (!round) throw NotFoundError("no IRR round yet");
      const std::string csv = disagreement_worksheet_csv(*round);
      if (worksheet_out.empty()) {
        fmt::print("{}", csv);
      } else {
        write_file_atomic(worksheet_out, csv);
      }
    } else if (*irr_resolve) {
      Workbench wb = need_experiment();
      std::vector<std::string> by;
      for (const auto& part : CLI::detail::split(resolved_by, ',')) by.push_back(part);
      std::vector<ConsensusRecord> consensus;
      if (fs::path(consensus_path).extension() == ".csv") {
        consensus = parse_worksheet_csv(read_file(consensus_path), by);
      } else {
        consensus = read_json(consensus_path).get<std::vector<ConsensusRecord>>();
      }
      ReasoningDrafts drafts;
      if (!drafts_path.empty()) drafts = read_json(drafts_path).get<ReasoningDrafts>();
      auto exemplars = wb.irr_resolve(consensus, drafts, head_opt(head));
      emit({{"exemplars", exemplars.size()}, {"head", wb.head()}},
           [&] { fmt::print("{} exemplar(s) recorded\n", exemplars.size()); });
    } else if (*prompt_build) {
      Workbench wb = need_experiment();
      PromptSpec spec = wb.build_prompt(parse_prompt_mode(mode), allow_unbalanced);
      const BalanceReport bal = check_balance(spec.exemplars, spec.rubric, spec.balance);
      const PromptText text = render_prompt(spec);
      emit({{"mode", mode}, {"digest", prompt_spec_digest(spec)}, {"exemplars", spec.exemplars.size()},
            {"balance", bal}, {"tokens", estimate_tokens(text.text)}},
           [&] {
             if (print_prompt) {
               fmt::print("{}", text.text);
               return;
             }
             fmt::print("{} prompt {} with {} exemplar(s), ~{} tokens\n", mode, prompt_spec_digest(spec),
                        spec.exemplars.size(), estimate_tokens(text.text));
             for (const auto& v : bal.violations) fmt::print("  balance: {}\n", v);
           });
    } else if (*score) {
      Workbench wb = need_experiment();
      auto gateway = gateway_for(wb, backend);
      ScoringRun run = wb.score(impl, partition, *gateway, resume);
      auto report_opt = wb.evaluation(impl, partition);
      json out{{"scored", run.results.size()}, {"failures", run.failures}, {"run_digest", run_digest(run)}};
      if (report_opt) out["report"] = *report_opt;
      emit(out, [&] {
        fmt::print("scored {} response(s), {} failure(s)\n", run.results.size(), run.failures.size());
        for (const auto& f : run.failures) fmt::print("  {}: {} {}\n", f.response_id, f.code, f.message);
        if (report_opt) print_report(fmt::format("{} on {}", impl, partition), *report_opt);
      });
    } else if (*evaluate) {
      Workbench wb = need_experiment();
      auto r = wb.evaluation(impl, partition);
      if (!r) throw NotFoundError(fmt::format("no {} run on {} yet", impl, partition));
      emit(*r, [&] { print_report(fmt::format("{} on {}", impl, partition), *r); });
    } else if (*al_init) {
      Workbench wb = need_experiment();
      ALState s = wb.al_init(from);
      emit({{"validation_pool", s.validation_pool.size()}, {"exemplars", s.spec.exemplars.size()}}, [&] {
        fmt::print("active learning started: {} exemplar(s), {} in the validation pool\n", s.spec.exemplars.size(),
                   s.validation_pool.size());
      });
    } else if (*al_validate || *al_step) {
      Workbench wb = need_experiment();
      auto gateway = gateway_for(wb, backend);
      auto outcome = wb.al_validate(*gateway, head_opt(head));
      json out{{"iteration", outcome.iteration.index},
               {"error_count", outcome.iteration.error_count},
               {"decision", outcome.decision}};
      auto text = [&] {
        fmt::print("iteration {}: {} misclassified (subscore, id) pair(s)\n", outcome.iteration.index,
                   outcome.iteration.error_count);
        for (const auto& [sub, n] : errors_by_subscore(outcome.iteration)) fmt::print("  {:<24} {}\n", sub, n);
        print_decision(outcome.decision);
      };
      if (*al_step && outcome.decision.status == StopStatus::kContinue && (!tags_path.empty() || interactive)) {
        if (!tags_path.empty()) wb.al_tag(read_json(tags_path).get<std::vector<ErrorTag>>());
        CandidateSelection sel = wb.al_select();
        out["selection"] = sel;
        std::vector<AcceptedCandidate> accepted;
        if (interactive) {
          text();
          print_selection(sel);
          accepted = prompt_acceptance(wb.al_state());
        } else if (!accept_path.empty() || use_drafts) {
          accepted = read_acceptance(accept_path, use_drafts, wb.al_state());
        }
        if (interactive || !accept_path.empty() || use_drafts) {
          ALState s = wb.al_accept(accepted);
          out["accepted"] = s.log.back();
        }
        if (!interactive) {
          emit(out, [&] {
            text();
            print_selection(sel);
            if (out.contains("accepted")) {
              fmt::print("accepted: {}\n", fmt::join(out["accepted"]["response_ids"].get<std::vector<std::string>>(), ", "));
            }
          });
        }
      } else {
        emit(out, text);
      }
    } else if (*al_tag) {
      Workbench wb = need_experiment();
      ALState s = wb.al_tag(read_json(tags_path).get<std::vector<ErrorTag>>(), head_opt(head));
      emit({{"tags", s.history.back().tags.size()}, {"head", wb.head()}},
           [&] { fmt::print("{} tag(s) attached to iteration {}\n", s.history.back().tags.size(), s.iteration); });
    } else if (*al_select) {
      Workbench wb = need_experiment();
      CandidateSelection sel = wb.al_select(head_opt(head));
      emit(sel, [&] { print_selection(sel); });
    } else if (*al_accept) {
      Workbench wb = need_experiment();
      if (accept_path.empty() && !use_drafts) {
        throw ValidationError("missing_field", "pass --file or --use-drafts");
      }
      ALState s = wb.al_accept(read_acceptance(accept_path, use_drafts, wb.al_state()), head_opt(head));
      emit(s.log.back(), [&] {
        fmt::print("{}: {} exemplar(s) added, now at iteration {}\n", s.log.back().event,
                   s.log.back().response_ids.size(), s.iteration);
      });
    } else if (*al_status) {
      Workbench wb = need_experiment();
      const json st = wb.al_status();
      emit(st, [&] {
        fmt::print("iteration {} (advances {}/{}), pool {}, exemplars {}\n", st["iteration"].get<int>(),
                   st["advances"].get<int>(), st["max_iterations"].get<int>(),
                   st["validation_pool_size"].get<std::size_t>(), st["exemplar_count"].get<std::size_t>());
        for (const auto& h : st["history"]) {
          fmt::print("  iteration {}: {} error(s)\n", h["index"].get<int>(), h["error_count"].get<int>());
        }
        if (!st["decision"].is_null()) print_decision(st["decision"].get<StopDecision>());
      });
    } else if (*al_revert) {
      Workbench wb = need_experiment();
      ALState s = wb.al_revert(revert_to, head_opt(head));
      emit(s.log.back(), [&] {
        fmt::print("reverted to the prompt of iteration {}; {} exemplar(s) returned to the pool\n", revert_to,
                   s.log.back().response_ids.size());
      });
    } else if (*report) {
      Workbench wb = need_experiment();
      const auto rows = wb.report_rows(partition);
      const Rubric rubric = wb.config().rubric;
      if (!csv_out.empty()) write_file_atomic(csv_out, render_report_csv(rubric, rows));
      json out = json::array();
      for (const auto& r : rows) out.push_back({{"implementation", r.implementation}, {"report", r.report}});
      emit(out, [&] { fmt::print("{}", render_report_table(rubric, rows)); });
    } else if (*serve) {
      Service service(home, BackendChoice{backend.mock_script, {}});
      const int bound = service.bind(host, port);
      g_service = &service;
      std::signal(SIGINT, on_signal);
      std::signal(SIGTERM, on_signal);
      fmt::print("listening on http://{}:{}/api/v1/\n", host, bound);
      std::fflush(stdout);
      service.run();
      g_service = nullptr;
    }
  } catch (const Error& e) {
    fmt::print(stderr, "error[{}]: {}\n", e.code(), e.what());
    if (const auto* v = dynamic_cast<const ValidationError*>(&e); v != nullptr && v->violations().size() > 1) {
      for (const auto& line : v->violations()) fmt::print(stderr, "  - {}\n", line);
    }
    return static_cast<int>(e.exit_code());
  } catch (const json::exception& e) {
    fmt::print(stderr, "error[json]: {}\n", e.what());
    return static_cast<int>(ExitCode::kValidation);
  } catch (const std::exception& e) {
    fmt::print(stderr, "error[internal]: {}\n", e.what());
    return static_cast<int>(ExitCode::kInternal);
  }
  return 0;
}
