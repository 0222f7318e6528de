#include "rtlforge/pipeline.hpp"

#include <array>
#include <future>
#include <map>
#include <unordered_map>
#include <unordered_set>

#include <spdlog/spdlog.h>

#include "rtlforge/pool.hpp"

namespace rtlforge {

namespace {

std::string status_text(const SimulationOutcome& o) { return std::string(to_string(o.status)); }

nlohmann::json trail_json(const std::vector<CallInfo>& trail) {
  nlohmann::json calls = nlohmann::json::array();
  for (const auto& c : trail) calls.push_back({{"agent", c.agent}, {"template", c.template_id}});
  return calls;
}

bool backend_failure(const std::exception_ptr& e) {
  try {
    std::rethrow_exception(e);
  } catch (const TransportError&) {
    return true;
  } catch (const BackendRefused&) {
    return true;
  } catch (const ScriptExhausted&) {
    return true;
  } catch (...) {
    return false;
  }
}

struct SeedResult {
  std::optional<TrainingTuple> tuple;
  LedgerEntry ledger;
};

SeedResult process_seed(const SeedPair& seed, Gateway& teacher, const Harness& harness, const PromptLibrary& prompts,
                        const PipelineConfig& config) {
  SeedResult result;
  result.ledger.seed_id = seed.id;
  auto finish = [&](std::string_view terminal, std::string detail) {
    result.ledger.terminal = std::string(terminal);
    result.ledger.detail = std::move(detail);
    spdlog::info("phase=1 seed={} terminal={} detail={}", seed.id, result.ledger.terminal, result.ledger.detail);
    return result;
  };

  // Compile filter first: a broken seed costs no model calls.
  std::array<VerilogSource, 1> seed_src{seed.code};
  const CompileReport check = harness.compile_check(seed_src);
  if (!check.ok) {
    std::string why = "seed code does not compile";
    for (const auto& d : check.diagnostics) {
      if (d.severity == "error") {
        why += ": line " + std::to_string(d.line.value_or(0)) + ": " + d.message;
        break;
      }
    }
    return finish(terminal::discarded_compile, why);
  }

  std::vector<CallInfo> trail;
  AgentContext ctx{teacher, prompts, config.teacher_params, seed.id, &trail};
  try {
    RefinedProblem problem;
    try {
      problem = revise(seed.problem, seed.code, check, ctx, seed.id);
    } catch (const InterfaceMismatch& e) {
      return finish(terminal::discarded_revision, e.what());
    } catch (const ParseFailure& e) {
      return finish(terminal::discarded_revision, e.what());
    } catch (const NoModuleFound& e) {
      return finish(terminal::discarded_revision, e.what());
    }

    // Solution and testbench agents work from p' independently.
    std::vector<CallInfo> sol_trail, tb_trail;
    AgentContext sol_ctx{teacher, prompts, config.teacher_params, seed.id, &sol_trail};
    AgentContext tb_ctx{teacher, prompts, config.teacher_params, seed.id, &tb_trail};
    std::optional<Solution> solution;
    std::optional<VerilogSource> tb;
    std::exception_ptr sol_error, tb_error;
    auto run_solution = [&] {
      try {
        solution = solve(problem, sol_ctx);
      } catch (...) {
        sol_error = std::current_exception();
      }
    };
    auto run_testbench = [&] {
      try {
        tb = gen_testbench(problem, tb_ctx);
      } catch (...) {
        tb_error = std::current_exception();
      }
    };
    if (config.serial) {
      run_solution();
      run_testbench();
    } else {
      auto pending = std::async(std::launch::async, run_testbench);
      run_solution();
      pending.get();
    }
    trail.insert(trail.end(), sol_trail.begin(), sol_trail.end());
    trail.insert(trail.end(), tb_trail.begin(), tb_trail.end());
    for (auto& err : {sol_error, tb_error}) {
      if (err && backend_failure(err)) std::rethrow_exception(err);
    }
    if (tb_error) {
      try {
        std::rethrow_exception(tb_error);
      } catch (const std::exception& e) {
        return finish(terminal::discarded_failed_twice, std::string("testbench unusable: ") + e.what());
      }
    }

    auto accept = [&](const Solution& s, const VerilogSource& bench, std::string_view how) {
      TrainingTuple t;
      t.id = seed.id;
      t.problem = problem;
      t.reasoning = s.reasoning;
      t.code = s.code;
      t.code.label = seed.id;
      t.testbench = bench;
      t.testbench.label = seed.id;
      t.provenance = {{"seed_id", seed.id}, {"source", seed.source}, {"route", how}, {"calls", trail_json(trail)}};
      result.tuple = std::move(t);
      return finish(terminal::accepted, std::string(how));
    };

    // A missing code block is a failed first attempt with nothing to arbitrate.
    std::optional<ErrorReport> report;
    std::optional<SimulationOutcome> first;
    if (sol_error) {
      report = ErrorReport{Fault::solution, "no code block in solution response", "", false};
    } else {
      first = harness.simulate(solution->code, *tb, config.sim_limit);
      if (first->passed()) return accept(*solution, *tb, route::first_pass);
      report = arbitrate(problem, solution->code, *tb, *first, ctx);
    }

    if (report->fault == Fault::solution) {
      Solution retry;
      try {
        retry = solve(problem, ctx, report);
      } catch (const NoCodeBlock&) {
        return finish(terminal::discarded_failed_twice, "solution retry returned no code block");
      }
      auto second = harness.simulate(retry.code, *tb, config.sim_limit);
      if (second.passed()) return accept(retry, *tb, route::solution_retry);
      return finish(terminal::discarded_failed_twice, "solution retry failed: " + status_text(second));
    }

    VerilogSource repaired;
    try {
      repaired = gen_testbench(problem, ctx, report, *tb);
    } catch (const std::exception& e) {
      if (backend_failure(std::current_exception())) throw;
      return finish(terminal::discarded_failed_twice, std::string("testbench repair unusable: ") + e.what());
    }
    auto second = harness.simulate(solution->code, repaired, config.sim_limit);
    if (second.passed()) return accept(*solution, repaired, route::testbench_repair);
    return finish(terminal::discarded_failed_twice, "testbench repair failed: " + status_text(second));
  } catch (const TransportError& e) {
    return finish(terminal::discarded_backend_error, e.what());
  } catch (const BackendRefused& e) {
    return finish(terminal::discarded_backend_error, e.what());
  } catch (const ScriptExhausted& e) {
    return finish(terminal::discarded_backend_error, e.what());
  }
}

SamplingParams sample_params(const PipelineConfig& config, const std::string& key, std::size_t index) {
  SamplingParams p = config.student_params;
  if (config.seed) p.seed = derive_seed(*config.seed, key, index);
  return p;
}

}  // namespace

Phase1Result run_phase1(std::span<const SeedPair> seeds, Gateway& teacher, const Harness& harness,
                        const PromptLibrary& prompts, const PipelineConfig& config) {
  std::vector<std::optional<SeedResult>> slots(seeds.size());
  parallel_for(
      seeds.size(), config.width(),
      [&](std::size_t i) { slots[i] = process_seed(seeds[i], teacher, harness, prompts, config); }, config.cancel);
  Phase1Result out;
  for (auto& slot : slots) {
    if (!slot) continue;  // cancelled before it started
    if (slot->tuple) out.dataset.push_back(std::move(*slot->tuple));
    out.ledger.push_back(std::move(slot->ledger));
  }
  return out;
}

std::vector<ProblemAttempts> sample_attempts(std::span<const TrainingTuple> dataset, Gateway& student,
                                             const Harness& harness, const PromptLibrary& prompts,
                                             const PipelineConfig& config) {
  if (config.attempts_per_problem < 1) throw PreconditionError("attempts per problem must be >= 1");
  const auto m = static_cast<std::size_t>(config.attempts_per_problem);
  std::vector<ProblemAttempts> out(dataset.size());
  for (std::size_t t = 0; t < dataset.size(); ++t) {
    out[t].tuple_id = dataset[t].id;
    out[t].attempts.resize(m);
  }
  std::vector<char> done(dataset.size() * m, 0);
  parallel_for(
      dataset.size() * m, config.width(),
      [&](std::size_t k) {
        const auto& tuple = dataset[k / m];
        const std::size_t i = k % m;
        const std::string session = tuple.id + "/att" + std::to_string(i);
        AgentContext ctx{student, prompts, sample_params(config, tuple.id, i), session};
        AttemptRecord rec;
        try {
          auto s = solve(tuple.problem, ctx);
          rec.code = s.code;
          rec.code.label = session;
          rec.outcome = harness.simulate(rec.code, tuple.testbench, config.sim_limit);
        } catch (const NoCodeBlock&) {
          rec.no_code = true;
          rec.code = VerilogSource("// no code block in response", Origin::solution_agent, session);
          rec.outcome.status = SimStatus::compile_error;
          rec.outcome.tool_stderr = "no code block in response";
        }
        rec.label = rec.outcome.passed() ? AttemptLabel::att_plus : AttemptLabel::att_minus;
        spdlog::info("phase=2 session={} label={} status={}", session, to_string(rec.label),
                     to_string(rec.outcome.status));
        out[k / m].attempts[i] = std::move(rec);
        done[k] = 1;
      },
      config.cancel);
  // Drop samples that never ran because of cancellation.
  for (std::size_t t = 0; t < out.size(); ++t) {
    std::vector<AttemptRecord> kept;
    for (std::size_t i = 0; i < m; ++i) {
      if (done[t * m + i]) kept.push_back(std::move(out[t].attempts[i]));
    }
    out[t].attempts = std::move(kept);
  }
  return out;
}

std::vector<BalancedProblem> select_and_balance(std::span<const ProblemAttempts> attempts) {
  std::vector<BalancedProblem> out;
  for (const auto& problem : attempts) {
    BalancedProblem b;
    b.tuple_id = problem.tuple_id;
    std::unordered_set<std::string> seen;
    for (std::size_t i = 0; i < problem.attempts.size(); ++i) {
      const auto& a = problem.attempts[i];
      if (!seen.insert(a.code.text).second) continue;
      (a.label == AttemptLabel::att_plus ? b.plus : b.minus).push_back(i);
    }
    if (b.minus.empty()) continue;
    const auto n = std::min(b.plus.size(), b.minus.size());
    b.plus.resize(n);
    b.minus.resize(n);
    if (n == 0) continue;
    out.push_back(std::move(b));
  }
  return out;
}

namespace {

struct Phase2Item {
  const TrainingTuple* tuple;
  std::size_t attempt_index;
  const AttemptRecord* attempt;
};

struct Phase2ItemResult {
  std::optional<CurriculumRecord> record;
  LedgerEntry ledger;
};

Phase2ItemResult process_attempt(const Phase2Item& item, Gateway& teacher, const Harness& harness,
                                 const PromptLibrary& prompts, const PipelineConfig& config) {
  const auto& tuple = *item.tuple;
  const auto& attempt = *item.attempt;
  const std::string id = tuple.id + "/att" + std::to_string(item.attempt_index);
  Phase2ItemResult out;
  out.ledger.seed_id = id;
  auto finish = [&](std::string_view terminal, std::string detail) {
    out.ledger.terminal = std::string(terminal);
    out.ledger.detail = std::move(detail);
    spdlog::info("phase=2 record={} terminal={} detail={}", id, out.ledger.terminal, out.ledger.detail);
    return out;
  };
  auto record = [&](CurriculumKind kind, const AttemptRecord& on, const TestReport& review,
                    std::optional<DebugPatch> patch, int round) {
    CurriculumRecord r;
    r.id = id;
    r.base = tuple;
    r.kind = kind;
    r.attempt = on;
    r.review = review;
    r.patch = std::move(patch);
    r.debug_round = round;
    out.record = std::move(r);
  };

  AgentContext ctx{teacher, prompts, config.teacher_params, id};
  try {
    if (attempt.no_code) return finish(terminal::dropped_no_code, "attempt had no code block");

    auto review = test_review(tuple.problem, attempt.code, ctx);
    if (!review) return finish(terminal::dropped_unparsable_review, "review unparsable after re-ask");

    if (attempt.label == AttemptLabel::att_plus) {
      if (review->verdict != Verdict::pass) return finish(terminal::dropped_disagreement, "review FAIL on att_plus");
      record(CurriculumKind::test_only, attempt, *review, std::nullopt, 0);
      return finish(terminal::accepted_test_only, "review PASS agrees with testbench");
    }

    if (review->verdict != Verdict::fail) return finish(terminal::dropped_disagreement, "review PASS on att_minus");
    DebugPatch first;
    try {
      first = debug(tuple.problem, attempt.code, *review, ctx);
    } catch (const NoCodeBlock&) {
      return finish(terminal::dropped_no_code, "first patch had no code block");
    }
    auto first_outcome = harness.simulate(first.code, tuple.testbench, config.sim_limit);
    if (first_outcome.passed()) {
      record(CurriculumKind::test_and_debug, attempt, *review, first, 1);
      return finish(terminal::accepted_debug_first_round, "first patch passes testbench");
    }

    // Second iteration starts from the failed patch with a fresh review.
    AttemptRecord d_old;
    d_old.code = first.code;
    d_old.code.label = id + "/d_old";
    d_old.label = AttemptLabel::att_minus;
    d_old.outcome = first_outcome;
    auto second_review = test_review(tuple.problem, d_old.code, ctx);
    if (!second_review) return finish(terminal::dropped_unparsable_review, "second review unparsable after re-ask");
    if (second_review->verdict != Verdict::fail) {
      return finish(terminal::dropped_disagreement, "second review PASS on failing patch");
    }
    DebugPatch second;
    try {
      second = debug(tuple.problem, d_old.code, *second_review, ctx);
    } catch (const NoCodeBlock&) {
      return finish(terminal::dropped_no_code, "second patch had no code block");
    }
    auto second_outcome = harness.simulate(second.code, tuple.testbench, config.sim_limit);
    if (second_outcome.passed()) {
      record(CurriculumKind::test_and_debug, d_old, *second_review, second, 2);
      return finish(terminal::accepted_debug_second_round, "second patch passes testbench");
    }
    return finish(terminal::dropped_debug_failed, "second patch failed: " + status_text(second_outcome));
  } catch (const TransportError& e) {
    return finish(terminal::dropped_backend_error, e.what());
  } catch (const BackendRefused& e) {
    return finish(terminal::dropped_backend_error, e.what());
  } catch (const ScriptExhausted& e) {
    return finish(terminal::dropped_backend_error, e.what());
  }
}

}  // namespace

Phase2Result run_phase2(std::span<const TrainingTuple> dataset, Gateway& student, Gateway& teacher,
                        const Harness& harness, const PromptLibrary& prompts, const PipelineConfig& config) {
  if (dataset.empty()) throw PreconditionError("phase 2 requires a non-empty tuple dataset");
  auto attempts = sample_attempts(dataset, student, harness, prompts, config);
  return run_phase2_on(dataset, std::move(attempts), teacher, harness, prompts, config);
}

Phase2Result run_phase2_on(std::span<const TrainingTuple> dataset, std::vector<ProblemAttempts> attempts,
                           Gateway& teacher, const Harness& harness, const PromptLibrary& prompts,
                           const PipelineConfig& config) {
  if (dataset.empty()) throw PreconditionError("phase 2 requires a non-empty tuple dataset");
  Phase2Result out;
  out.attempts = std::move(attempts);
  out.balanced = select_and_balance(out.attempts);

  std::unordered_map<std::string, const TrainingTuple*> by_id;
  for (const auto& t : dataset) by_id.emplace(t.id, &t);
  std::unordered_map<std::string, const ProblemAttempts*> attempts_by_id;
  for (const auto& p : out.attempts) attempts_by_id.emplace(p.tuple_id, &p);

  // Plus before minus within a problem, problems in dataset order.
  std::vector<Phase2Item> items;
  for (const auto& b : out.balanced) {
    const auto* tuple = by_id.at(b.tuple_id);
    const auto* problem = attempts_by_id.at(b.tuple_id);
    for (auto i : b.plus) items.push_back({tuple, i, &problem->attempts[i]});
    for (auto i : b.minus) items.push_back({tuple, i, &problem->attempts[i]});
  }
  std::vector<std::optional<Phase2ItemResult>> slots(items.size());
  parallel_for(
      items.size(), config.width(),
      [&](std::size_t k) { slots[k] = process_attempt(items[k], teacher, harness, prompts, config); }, config.cancel);
  for (auto& slot : slots) {
    if (!slot) continue;
    if (slot->record) out.dataset.push_back(std::move(*slot->record));
    out.ledger.push_back(std::move(slot->ledger));
  }
  return out;
}

// --- SFT export ------------------------------------------------------------------

std::string_view to_string(SftTask task) {
  switch (task) {
    case SftTask::solve:
      return "solve";
    case SftTask::test:
      return "test";
    case SftTask::debug:
      return "debug";
  }
  return "solve";
}

SftTask sft_task_from_string(std::string_view text) {
  if (text == "solve") return SftTask::solve;
  if (text == "test") return SftTask::test;
  if (text == "debug") return SftTask::debug;
  throw ConfigError("unknown SFT task: " + std::string(text));
}

std::size_t SftSample::tokens() const {
  std::size_t n = whitespace_tokens(target_reasoning) + whitespace_tokens(target_answer);
  for (const auto& m : input_messages) n += whitespace_tokens(m.content);
  return n;
}

void to_json(nlohmann::json& j, const SftSample& s) {
  nlohmann::json messages = nlohmann::json::array();
  for (const auto& m : s.input_messages) messages.push_back({{"role", to_string(m.role)}, {"content", m.content}});
  j = nlohmann::json{{"task", to_string(s.task)},
                     {"record_id", s.record_id},
                     {"messages", messages},
                     {"target", {{"reasoning", s.target_reasoning}, {"answer", s.target_answer}}}};
}

SftExport export_sft(std::span<const DatasetRecord> records, const std::set<SftTask>& tasks, std::size_t seq_cap,
                     const PromptLibrary& prompts) {
  if (seq_cap == 0) throw PreconditionError("sequence cap must be positive");
  SftExport out;
  auto emit = [&](SftSample s) {
    if (s.tokens() > seq_cap) {
      ++out.skipped_over_cap;
      return;
    }
    out.samples.push_back(std::move(s));
  };
  for (const auto& rec : records) {
    if (rec.tuple) {
      if (!tasks.contains(SftTask::solve)) continue;
      const auto& t = *rec.tuple;
      emit(SftSample{SftTask::solve, t.id, {ChatMessage::user(t.problem.statement)}, t.reasoning,
                     embed_in_fence(t.code.text, "verilog")});
      continue;
    }
    const auto& r = *rec.curriculum;
    const auto& problem = r.base.problem;
    if (tasks.contains(SftTask::test)) {
      emit(SftSample{SftTask::test, r.id, test_messages(problem, r.attempt.code, prompts), r.review.reasoning,
                     r.review.body});
    }
    if (r.kind == CurriculumKind::test_and_debug && r.patch && tasks.contains(SftTask::debug)) {
      emit(SftSample{SftTask::debug, r.id, debug_messages(problem, r.attempt.code, r.review, prompts),
                     r.patch->reasoning, embed_in_fence(r.patch->code.text, "verilog")});
    }
  }
  return out;
}

// --- audit ------------------------------------------------------------------------

AuditReport audit_dataset(std::span<const DatasetRecord> records, const Harness& harness, int width,
                          const std::atomic<bool>* cancel) {
  struct Check {
    std::string record_id;
    std::string what;
    const VerilogSource* code;
    const VerilogSource* tb;
    bool expect_pass;
  };
  AuditReport report;
  report.records = records.size();
  std::vector<Check> checks;
  for (const auto& rec : records) {
    if (rec.tuple) {
      checks.push_back({rec.tuple->id, "tuple code fails its testbench", &rec.tuple->code, &rec.tuple->testbench, true});
      continue;
    }
    const auto& r = *rec.curriculum;
    if (r.kind == CurriculumKind::test_only) {
      if (r.attempt.label != AttemptLabel::att_plus) report.violations.push_back({r.id, "test_only record on att_minus"});
      if (r.review.verdict != Verdict::pass) report.violations.push_back({r.id, "test_only record with FAIL review"});
      if (r.patch) report.violations.push_back({r.id, "test_only record carries a patch"});
      checks.push_back({r.id, "test_only attempt fails the testbench", &r.attempt.code, &r.base.testbench, true});
    } else {
      if (r.attempt.label != AttemptLabel::att_minus) {
        report.violations.push_back({r.id, "test_and_debug record on att_plus"});
      }
      if (r.review.verdict != Verdict::fail) report.violations.push_back({r.id, "test_and_debug record with PASS review"});
      if (!r.patch) {
        report.violations.push_back({r.id, "test_and_debug record without a patch"});
      } else {
        checks.push_back({r.id, "patch fails the testbench", &r.patch->code, &r.base.testbench, true});
      }
    }
    if (r.review.cases.empty()) report.violations.push_back({r.id, "review has no cases"});
  }

  std::vector<std::optional<SimulationOutcome>> outcomes(checks.size());
  parallel_for(
      checks.size(), width,
      [&](std::size_t i) { outcomes[i] = harness.simulate(*checks[i].code, *checks[i].tb); }, cancel);
  for (std::size_t i = 0; i < checks.size(); ++i) {
    if (!outcomes[i]) {
      report.violations.push_back({checks[i].record_id, "not re-verified (cancelled)"});
      continue;
    }
    ++report.simulations;
    if (outcomes[i]->passed() != checks[i].expect_pass) {
      report.violations.push_back({checks[i].record_id, checks[i].what + " (" + status_text(*outcomes[i]) + ")"});
    }
  }
  return report;
}

}  // namespace rtlforge
