#include <gtest/gtest.h>

#include <random>

#include "rtlforge/pipeline.hpp"
#include "scenarios.hpp"
#include "support.hpp"

using namespace rtlforge;
using namespace rtlforge::testing;

namespace {

#define REQUIRE_SIMULATOR() \
  if (!simulator_available()) GTEST_SKIP() << "no Verilog simulator installed"

AttemptRecord attempt(const std::string& code, bool pass) {
  AttemptRecord a;
  a.code = VerilogSource(code, Origin::solution_agent);
  a.label = pass ? AttemptLabel::att_plus : AttemptLabel::att_minus;
  a.outcome.status = pass ? SimStatus::pass : SimStatus::test_failure;
  return a;
}

ProblemAttempts problem(const std::string& id, const std::vector<std::pair<std::string, bool>>& codes) {
  ProblemAttempts p{id, {}};
  for (const auto& [c, pass] : codes) p.attempts.push_back(attempt(c, pass));
  return p;
}

PipelineConfig serial_config() {
  PipelineConfig c;
  c.serial = true;
  c.attempts_per_problem = 4;
  return c;
}

struct Phase1Run {
  Phase1Scenario scenario;
  Phase1Result result;
  std::vector<CallRecord> calls;
};

const Phase1Run& phase1_run() {
  static const Phase1Run run = [] {
    Phase1Run r{phase1_scenario(), {}, {}};
    auto log = std::make_shared<CallLog>();
    auto teacher = scripted_gateway(r.scenario.script, log);
    r.result = run_phase1(r.scenario.seeds, *teacher, shared_harness(), shared_prompts(), serial_config());
    r.calls = log->snapshot();
    return r;
  }();
  return run;
}

struct Phase2Run {
  Phase2Scenario scenario;
  Phase2Result result;
  std::vector<CallRecord> calls;
};

const Phase2Run& phase2_run() {
  static const Phase2Run run = [] {
    Phase2Run r{phase2_scenario(), {}, {}};
    auto log = std::make_shared<CallLog>();
    auto student = scripted_gateway(r.scenario.student, log);
    auto teacher = scripted_gateway(r.scenario.teacher, log);
    r.result = run_phase2(r.scenario.tuples, *student, *teacher, shared_harness(), shared_prompts(), serial_config());
    r.calls = log->snapshot();
    return r;
  }();
  return run;
}

std::vector<DatasetRecord> as_records(const std::vector<TrainingTuple>& tuples,
                                      const std::vector<CurriculumRecord>& curriculum = {}) {
  std::vector<DatasetRecord> out;
  for (const auto& t : tuples) out.push_back(DatasetRecord{t, std::nullopt});
  for (const auto& c : curriculum) out.push_back(DatasetRecord{std::nullopt, c});
  return out;
}

}  // namespace

TEST(Balance, TruncatesTheLargerClassInSamplingOrder) {
  std::vector<ProblemAttempts> in{problem("q", {{"a", true}, {"b", false}, {"c", true}, {"d", true}})};
  auto out = select_and_balance(in);
  ASSERT_EQ(out.size(), 1u);
  EXPECT_EQ(out[0].plus, (std::vector<std::size_t>{0}));
  EXPECT_EQ(out[0].minus, (std::vector<std::size_t>{1}));
}

TEST(Balance, AllPassingProblemsAreNotSelected) {
  std::vector<ProblemAttempts> in{problem("q", {{"a", true}, {"b", true}})};
  EXPECT_TRUE(select_and_balance(in).empty());
}

TEST(Balance, DuplicatesAreRemovedFirstKept) {
  std::vector<ProblemAttempts> in{problem("q", {{"a", true}, {"x", false}, {"x", false}, {"a", true}, {"y", false}})};
  auto out = select_and_balance(in);
  ASSERT_EQ(out.size(), 1u);
  EXPECT_EQ(out[0].plus, (std::vector<std::size_t>{0}));
  EXPECT_EQ(out[0].minus, (std::vector<std::size_t>{1}));
}

TEST(Balance, AllFailingProblemsLeaveNothing) {
  std::vector<ProblemAttempts> in{problem("q", {{"a", false}, {"b", false}})};
  EXPECT_TRUE(select_and_balance(in).empty());
}

TEST(Balance, ClassesAreAlwaysEqualSized) {
  std::mt19937 rng(7);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<std::pair<std::string, bool>> codes;
    const int n = 1 + static_cast<int>(rng() % 8);
    for (int i = 0; i < n; ++i) codes.emplace_back(std::string(1, static_cast<char>('a' + rng() % 5)), rng() % 2);
    std::vector<ProblemAttempts> in{problem("q", codes)};
    for (const auto& b : select_and_balance(in)) {
      EXPECT_EQ(b.plus.size(), b.minus.size());
      EXPECT_FALSE(b.plus.empty());
      std::set<std::string> seen;
      for (auto i : b.plus) EXPECT_TRUE(seen.insert(in[0].attempts[i].code.text).second);
      for (auto i : b.minus) EXPECT_TRUE(seen.insert(in[0].attempts[i].code.text).second);
    }
  }
}

TEST(Phase1, EverySeedReachesItsTerminal) {
  REQUIRE_SIMULATOR();
  const auto& run = phase1_run();
  ASSERT_EQ(run.result.ledger.size(), run.scenario.seeds.size());
  for (const auto& e : run.result.ledger) {
    EXPECT_EQ(e.terminal, run.scenario.terminal.at(e.seed_id)) << e.seed_id << ": " << e.detail;
    if (run.scenario.detail.count(e.seed_id)) EXPECT_EQ(e.detail, run.scenario.detail.at(e.seed_id));
  }
}

TEST(Phase1, AcceptedTuplesPassTheirOwnTestbench) {
  REQUIRE_SIMULATOR();
  const auto& run = phase1_run();
  ASSERT_EQ(run.result.dataset.size(), 3u);
  for (const auto& t : run.result.dataset) {
    EXPECT_TRUE(shared_harness().simulate(t.code, t.testbench).passed()) << t.id;
    EXPECT_TRUE(missing_identifiers(t.problem.statement, t.problem.interface).empty()) << t.id;
    EXPECT_FALSE(t.reasoning.empty());
    EXPECT_EQ(t.provenance.at("seed_id"), t.id);
  }
}

TEST(Phase1, CompileFailureMakesNoCalls) {
  REQUIRE_SIMULATOR();
  for (const auto& c : phase1_run().calls) EXPECT_NE(c.info.session.rfind("s2", 0), 0u) << c.info.session;
}

TEST(Phase1, SolutionAndTestAgentsNeverSeeATestbench) {
  REQUIRE_SIMULATOR();
  const auto& run = phase1_run();
  std::vector<std::string> benches;
  for (const auto& d : {"adder", "dff", "counter", "fsm"}) benches.push_back(design_text(d, "tb.v"));
  benches.push_back(design_text("counter", "tb_swapped.v"));
  for (const auto& c : run.calls) {
    if (!testbench_blind_agent(c.info.agent)) continue;
    for (const auto& m : c.request)
      for (const auto& tb : benches) EXPECT_FALSE(leaks_testbench(m.content, tb)) << c.info.session;
  }
}

TEST(Phase2, AttemptsAreLabeledBySimulation) {
  REQUIRE_SIMULATOR();
  const auto& run = phase2_run();
  ASSERT_EQ(run.result.attempts.size(), 4u);
  for (const auto& p : run.result.attempts) {
    ASSERT_EQ(p.attempts.size(), 4u) << p.tuple_id;
    for (const auto& a : p.attempts) {
      EXPECT_EQ(a.label == AttemptLabel::att_plus, a.outcome.status == SimStatus::pass);
    }
  }
  EXPECT_TRUE(run.result.attempts[3].attempts[1].no_code);
  EXPECT_EQ(run.result.attempts[3].attempts[1].label, AttemptLabel::att_minus);
}

TEST(Phase2, BalancedSelectionMatchesTheScenario) {
  REQUIRE_SIMULATOR();
  const auto& run = phase2_run();
  std::map<std::string, std::vector<std::size_t>> plus, minus;
  for (const auto& b : run.result.balanced) {
    plus[b.tuple_id] = b.plus;
    minus[b.tuple_id] = b.minus;
  }
  EXPECT_EQ(plus, run.scenario.balanced_plus);
  EXPECT_EQ(minus, run.scenario.balanced_minus);
}

TEST(Phase2, EveryBalancedAttemptReachesItsTerminal) {
  REQUIRE_SIMULATOR();
  const auto& run = phase2_run();
  std::map<std::string, std::string> got;
  for (const auto& e : run.result.ledger) got[e.seed_id] = e.terminal;
  EXPECT_EQ(got, run.scenario.terminal);
}

TEST(Phase2, RecordsSatisfyTheirInvariants) {
  REQUIRE_SIMULATOR();
  const auto& run = phase2_run();
  std::size_t test_only = 0, debugged = 0;
  for (const auto& r : run.result.dataset) {
    EXPECT_FALSE(r.review.cases.empty()) << r.id;
    if (r.kind == CurriculumKind::test_only) {
      ++test_only;
      EXPECT_EQ(r.attempt.label, AttemptLabel::att_plus);
      EXPECT_EQ(r.review.verdict, Verdict::pass);
      EXPECT_FALSE(r.patch);
    } else {
      ++debugged;
      EXPECT_EQ(r.review.verdict, Verdict::fail);
      ASSERT_TRUE(r.patch);
      EXPECT_EQ(r.debug_round, run.scenario.debug_round.at(r.id));
      EXPECT_TRUE(shared_harness().simulate(r.patch->code, r.base.testbench).passed()) << r.id;
    }
  }
  EXPECT_EQ(test_only, 4u);
  EXPECT_EQ(debugged, 2u);
}

TEST(Phase2, SecondRoundStartsFromTheFailedPatch) {
  REQUIRE_SIMULATOR();
  const auto& run = phase2_run();
  for (const auto& r : run.result.dataset) {
    if (r.id != "p1/att3") continue;
    EXPECT_NE(r.attempt.code.text.find("[p1a3d]"), std::string::npos);
    EXPECT_NE(r.patch->code.text.find("[p1a3p]"), std::string::npos);
    return;
  }
  FAIL() << "p1/att3 missing";
}

TEST(Phase2, StudentAndTestPromptsNeverSeeATestbench) {
  REQUIRE_SIMULATOR();
  const auto& run = phase2_run();
  for (const auto& c : run.calls) {
    if (!testbench_blind_agent(c.info.agent)) continue;
    for (const auto& m : c.request)
      for (const auto& t : run.scenario.tuples) EXPECT_FALSE(leaks_testbench(m.content, t.testbench.text));
  }
}

TEST(Phase2, EmptyDatasetIsAPreconditionViolation) {
  auto g = scripted_gateway({reply("solution", "", "x")});
  EXPECT_THROW(run_phase2({}, *g, *g, shared_harness(), shared_prompts(), serial_config()), PreconditionError);
}

TEST(Export, TaskSelectionAndShapes) {
  REQUIRE_SIMULATOR();
  const auto& p1 = phase1_run();
  const auto& p2 = phase2_run();
  auto records = as_records(p1.result.dataset, p2.result.dataset);
  auto all = export_sft(records, {SftTask::solve, SftTask::test, SftTask::debug}, 16384, shared_prompts());
  std::map<SftTask, int> count;
  for (const auto& s : all.samples) {
    ++count[s.task];
    EXPECT_FALSE(s.target_answer.empty());
    ASSERT_FALSE(s.input_messages.empty());
    for (const auto& m : s.input_messages) EXPECT_EQ(m.content.find("ALL_TESTS_PASSED"), std::string::npos);
  }
  EXPECT_EQ(count[SftTask::solve], 3);
  EXPECT_EQ(count[SftTask::test], 6);
  EXPECT_EQ(count[SftTask::debug], 2);
  EXPECT_EQ(all.skipped_over_cap, 0u);

  auto solve_only = export_sft(records, {SftTask::solve}, 16384, shared_prompts());
  EXPECT_EQ(solve_only.samples.size(), 3u);
  for (const auto& s : solve_only.samples) {
    EXPECT_NE(s.target_answer.find("```verilog"), std::string::npos);
    EXPECT_EQ(s.input_messages.back().role, Role::user);
  }
}

TEST(Export, OverCapSamplesAreSkipped) {
  REQUIRE_SIMULATOR();
  auto records = as_records(phase1_run().result.dataset);
  auto tiny = export_sft(records, {SftTask::solve}, 10, shared_prompts());
  EXPECT_TRUE(tiny.samples.empty());
  EXPECT_EQ(tiny.skipped_over_cap, 3u);
}

TEST(SftTask, NamesRoundTrip) {
  for (auto t : {SftTask::solve, SftTask::test, SftTask::debug}) EXPECT_EQ(sft_task_from_string(to_string(t)), t);
  EXPECT_THROW(sft_task_from_string("translate"), ConfigError);
}

TEST(Audit, GeneratedDatasetIsClean) {
  REQUIRE_SIMULATOR();
  auto records = as_records(phase1_run().result.dataset, phase2_run().result.dataset);
  auto report = audit_dataset(records, shared_harness());
  EXPECT_TRUE(report.clean()) << report.violations.front().record_id << ": " << report.violations.front().reason;
  EXPECT_EQ(report.records, records.size());
  EXPECT_GT(report.simulations, 0u);
}

TEST(Audit, CorruptedRecordsAreNamed) {
  REQUIRE_SIMULATOR();
  auto tuples = phase1_run().result.dataset;
  auto curriculum = phase2_run().result.dataset;
  tuples.at(0).code = design("adder", "mutants/sub.v", Origin::solution_agent);
  for (auto& r : curriculum) {
    if (r.kind == CurriculumKind::test_and_debug) {
      r.patch.reset();
      break;
    }
  }
  auto report = audit_dataset(as_records(tuples, curriculum), shared_harness());
  std::set<std::string> named;
  for (const auto& v : report.violations) named.insert(v.record_id);
  EXPECT_TRUE(named.count(tuples.at(0).id));
  EXPECT_TRUE(named.count("p1/att1"));
}

TEST(Records, DatasetLinesRoundTrip) {
  REQUIRE_SIMULATOR();
  for (const auto& t : phase1_run().result.dataset) {
    auto back = parse_dataset_line(dataset_line(t));
    ASSERT_TRUE(back.tuple);
    EXPECT_EQ(nlohmann::json(*back.tuple), nlohmann::json(t));
  }
  for (const auto& r : phase2_run().result.dataset) {
    auto back = parse_dataset_line(dataset_line(r));
    ASSERT_TRUE(back.curriculum);
    EXPECT_EQ(nlohmann::json(*back.curriculum), nlohmann::json(r));
  }
}
