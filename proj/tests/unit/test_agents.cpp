#include <gtest/gtest.h>

#include "rtlforge/agents.hpp"
#include "scenarios.hpp"
#include "support.hpp"

using namespace rtlforge;
using namespace rtlforge::testing;

namespace {

CompileReport compiled() {
  CompileReport r;
  r.ok = true;
  return r;
}

struct Rig {
  explicit Rig(std::vector<ScriptEntry> script)
      : log(std::make_shared<CallLog>()), gateway(scripted_backend(std::move(script)), log) {}

  AgentContext ctx() { return AgentContext{gateway, shared_prompts(), SamplingParams{}, "sess", &trail}; }

  std::shared_ptr<CallLog> log;
  Gateway gateway;
  std::vector<CallInfo> trail;
};

RefinedProblem adder_problem() {
  RefinedProblem p;
  p.interface = parse_interface(design_text("adder", "ref.v"));
  p.statement = "Implement module `add` with 2-bit inputs `a`, `b` and 3-bit output `s` = a + b.";
  p.source_id = "seed";
  return p;
}

const std::string kAdderStatement =
    "Implement module `add` that adds 2-bit inputs `a` and `b` into the 3-bit output `s`.";

}  // namespace

TEST(Revise, ProducesStatementWithMatchingInterface) {
  Rig rig({reply("revision", "", revision_answer("It adds.", kAdderStatement))});
  auto ctx = rig.ctx();
  auto p = revise("make an adder", design("adder", "ref.v"), compiled(), ctx, "seed-1");
  EXPECT_EQ(p.interface.module_name, "add");
  ASSERT_EQ(p.interface.ports.size(), 3u);
  EXPECT_TRUE(missing_identifiers(p.statement, p.interface).empty());
  EXPECT_NE(p.statement.find(kAdderStatement), std::string::npos);
  EXPECT_NE(p.statement.find(p.interface.render()), std::string::npos);
  EXPECT_EQ(p.source_id, "seed-1");
}

TEST(Revise, PromptEmbedsFiveExemplars) {
  Rig rig({reply("revision", "", revision_answer("It adds.", kAdderStatement))});
  auto ctx = rig.ctx();
  revise("make an adder", design("adder", "ref.v"), compiled(), ctx);
  ASSERT_EQ(shared_prompts().revision_exemplars().size(), 5u);
  const auto prompt = rig.log->snapshot().at(0).request.at(0).content;
  for (const auto& ex : shared_prompts().revision_exemplars()) {
    EXPECT_NE(prompt.find(ex.answer), std::string::npos) << ex.name;
  }
}

TEST(Revise, UncompiledSeedIsAPreconditionViolation) {
  Rig rig({reply("revision", "", "unused")});
  auto ctx = rig.ctx();
  EXPECT_THROW(revise("x", design("adder", "ref.v"), CompileReport{}, ctx), PreconditionError);
  EXPECT_EQ(rig.log->size(), 0u);
}

TEST(Revise, MissingPortTwiceRejectsTheSeed) {
  const auto no_s = revision_answer("It adds.", "Implement module `add` that adds inputs `a` and `b`.");
  Rig rig({reply("revision", "", no_s), reply("revision", "", no_s)});
  auto ctx = rig.ctx();
  EXPECT_THROW(revise("make an adder", design("adder", "ref.v"), compiled(), ctx), InterfaceMismatch);
  EXPECT_EQ(rig.log->size(), 2u);
  EXPECT_NE(rig.log->snapshot()[1].request.back().content.find("`s`"), std::string::npos);
}

TEST(Revise, ReaskRecoversAMissingPort) {
  const auto no_s = revision_answer("It adds.", "Implement module `add` that adds inputs `a` and `b`.");
  Rig rig({reply("revision", "", no_s), reply("revision", "", revision_answer("It adds.", kAdderStatement))});
  auto ctx = rig.ctx();
  EXPECT_NO_THROW(revise("make an adder", design("adder", "ref.v"), compiled(), ctx));
}

TEST(Revise, NoStatementSectionIsAParseFailure) {
  Rig rig({reply("revision", "", "I am not sure."), reply("revision", "", "Still no layout.")});
  auto ctx = rig.ctx();
  EXPECT_THROW(revise("make an adder", design("adder", "ref.v"), compiled(), ctx), ParseFailure);
}

TEST(Solve, SplitsReasoningAndCode) {
  Rig rig({reply("solution", "", fenced(design_text("adder", "ref.v")), std::string("think"))});
  auto ctx = rig.ctx();
  auto s = solve(adder_problem(), ctx);
  EXPECT_EQ(s.reasoning, "think");
  EXPECT_EQ(s.code.text + "\n", design_text("adder", "ref.v"));
  EXPECT_EQ(s.code.origin, Origin::solution_agent);
}

TEST(Solve, ProseWithoutFenceIsNoCodeBlock) {
  Rig rig({reply("solution", "", "an adder adds numbers")});
  auto ctx = rig.ctx();
  EXPECT_THROW(solve(adder_problem(), ctx), NoCodeBlock);
}

TEST(Solve, RetryPromptIsIdenticalAndCarriesNoToolFeedback) {
  Rig rig({reply("solution", "", fenced("module add; endmodule\n")), reply("solution", "", fenced("module add; endmodule\n"))});
  auto ctx = rig.ctx();
  ErrorReport report{Fault::solution, "TEST_FAILED: a=1 b=1 expected s=2", "wrong sum", false};
  solve(adder_problem(), ctx);
  solve(adder_problem(), ctx, report);
  auto calls = rig.log->snapshot();
  ASSERT_EQ(calls.size(), 2u);
  EXPECT_EQ(nlohmann::json(calls[0].request), nlohmann::json(calls[1].request));
  for (const auto& m : calls[1].request) EXPECT_EQ(m.content.find("TEST_FAILED"), std::string::npos);
  ASSERT_EQ(calls[0].request.size(), 2u);
  EXPECT_EQ(calls[0].request[1].content, adder_problem().statement);
}

TEST(Solve, TestbenchBlameIsAPreconditionViolation) {
  Rig rig({reply("solution", "", "x")});
  auto ctx = rig.ctx();
  EXPECT_THROW(solve(adder_problem(), ctx, ErrorReport{Fault::testbench, "", "", false}), PreconditionError);
}

TEST(GenTestbench, InstantiatesTheDut) {
  Rig rig({reply("testbench", "", fenced(design_text("adder", "tb.v")))});
  auto ctx = rig.ctx();
  auto tb = gen_testbench(adder_problem(), ctx);
  EXPECT_EQ(tb.origin, Origin::testbench_agent);
  EXPECT_NE(tb.text.find("add dut"), std::string::npos);
  EXPECT_NE(tb.text.find("ALL_TESTS_PASSED"), std::string::npos);
  const auto prompt = rig.log->snapshot().at(0).request.at(0).content;
  EXPECT_NE(prompt.find("ALL_TESTS_PASSED"), std::string::npos);
  EXPECT_NE(prompt.find("TEST_FAILED: "), std::string::npos);
}

TEST(GenTestbench, SelfContainedDutIsRejectedAfterOneReask) {
  const auto self = fenced(design_text("adder", "ref.v") + design_text("adder", "tb.v"));
  Rig rig({reply("testbench", "", self), reply("testbench", "", self)});
  auto ctx = rig.ctx();
  EXPECT_THROW(gen_testbench(adder_problem(), ctx), SelfContainedDUT);
  EXPECT_EQ(rig.log->size(), 2u);
}

TEST(GenTestbench, ReaskRecoversFromSelfContainedDut) {
  const auto self = fenced(design_text("adder", "ref.v") + design_text("adder", "tb.v"));
  Rig rig({reply("testbench", "", self), reply("testbench", "", fenced(design_text("adder", "tb.v")))});
  auto ctx = rig.ctx();
  EXPECT_NO_THROW(gen_testbench(adder_problem(), ctx));
}

TEST(GenTestbench, RepairPromptCarriesReportAndPreviousTestbench) {
  RefinedProblem p;
  p.interface = parse_interface(design_text("counter", "ref.v"));
  p.statement = "Implement module `counter` with inputs `clk`, `rst`, `en` and 4-bit output `count`.";
  Rig rig({reply("testbench", "", fenced(design_text("counter", "tb.v")))});
  auto ctx = rig.ctx();
  ErrorReport report{Fault::testbench, "TEST_FAILED: cycle 0", "ports connected by position in the wrong order", false};
  auto old_tb = design("counter", "tb_swapped.v", Origin::testbench_agent);
  auto repaired = gen_testbench(p, ctx, report, old_tb);
  const auto prompt = rig.log->snapshot().at(0).request.at(0).content;
  EXPECT_NE(prompt.find("counter dut (clk, en, rst, count);"), std::string::npos);
  EXPECT_NE(prompt.find("wrong order"), std::string::npos);
  EXPECT_EQ(rig.trail.at(0).template_id, "testbench_repair.v1");
  if (!simulator_available()) GTEST_SKIP() << "no Verilog simulator installed";
  const auto dut = design("counter", "ref.v");
  EXPECT_EQ(shared_harness().simulate(dut, old_tb).status, SimStatus::test_failure);
  EXPECT_TRUE(shared_harness().simulate(dut, repaired).passed());
}

TEST(Arbitrate, ParsesTestbenchFault) {
  Rig rig({reply("verification", "", "The testbench is wrong.\nFAULT: TESTBENCH\n")});
  auto ctx = rig.ctx();
  SimulationOutcome failed{SimStatus::test_failure, "TEST_FAILED: x", "", {}};
  auto r = arbitrate(adder_problem(), design("adder", "ref.v"), design("adder", "tb.v"), failed, ctx);
  EXPECT_EQ(r.fault, Fault::testbench);
  EXPECT_FALSE(r.defaulted);
  EXPECT_NE(r.evidence.find("TEST_FAILED: x"), std::string::npos);
}

TEST(Arbitrate, PassingOutcomeIsAPreconditionViolation) {
  Rig rig({reply("verification", "", "FAULT: SOLUTION")});
  auto ctx = rig.ctx();
  SimulationOutcome ok{SimStatus::pass, "ALL_TESTS_PASSED", "", {}};
  EXPECT_THROW(arbitrate(adder_problem(), design("adder", "ref.v"), design("adder", "tb.v"), ok, ctx),
               PreconditionError);
}

TEST(Arbitrate, UnparsableVerdictDefaultsToSolution) {
  Rig rig({reply("verification", "", "hmm"), reply("verification", "", "still unsure")});
  auto ctx = rig.ctx();
  SimulationOutcome failed{SimStatus::test_failure, "", "", {}};
  auto r = arbitrate(adder_problem(), design("adder", "ref.v"), design("adder", "tb.v"), failed, ctx);
  EXPECT_EQ(r.fault, Fault::solution);
  EXPECT_TRUE(r.defaulted);
  EXPECT_EQ(rig.log->size(), 2u);
}

TEST(ParseFault, LastLineWins) {
  EXPECT_EQ(parse_fault("FAULT: SOLUTION\nthen again\nFAULT: TESTBENCH"), Fault::testbench);
  EXPECT_EQ(parse_fault("**FAULT: SOLUTION**"), Fault::solution);
  EXPECT_FALSE(parse_fault("no verdict"));
}

TEST(TestReview, PassVerdict) {
  Rig rig({reply("test", "", review({"a=1 b=2 | EXPECTED: s=3 | OBSERVED: s=3"}, true), std::string("trace"))});
  auto ctx = rig.ctx();
  auto r = test_review(adder_problem(), design("adder", "ref.v"), ctx);
  ASSERT_TRUE(r);
  EXPECT_EQ(r->verdict, Verdict::pass);
  EXPECT_EQ(r->reasoning, "trace");
  ASSERT_EQ(r->cases.size(), 1u);
  EXPECT_EQ(r->cases[0].expected, "s=3");
}

TEST(TestReview, FailVerdictWithCases) {
  Rig rig({reply("test", "",
                 review({"a=1 b=1 | EXPECTED: s=2 | OBSERVED: s=0", "a=3 b=0 | EXPECTED: s=3 | OBSERVED: s=3"}, false))});
  auto ctx = rig.ctx();
  auto r = test_review(adder_problem(), design("adder", "mutants/sub.v"), ctx);
  ASSERT_TRUE(r);
  EXPECT_EQ(r->verdict, Verdict::fail);
  EXPECT_EQ(r->cases.size(), 2u);
}

TEST(TestReview, MissingVerdictTwiceIsDiscarded) {
  Rig rig({reply("test", "", "CASE: a | EXPECTED: b | OBSERVED: c\n"), reply("test", "", "no verdict again")});
  auto ctx = rig.ctx();
  EXPECT_FALSE(test_review(adder_problem(), design("adder", "ref.v"), ctx));
  EXPECT_EQ(rig.log->size(), 2u);
}

TEST(TestReview, PromptNeverContainsTheTestbench) {
  Rig rig({reply("test", "", review({"x | EXPECTED: y | OBSERVED: y"}, true))});
  auto ctx = rig.ctx();
  test_review(adder_problem(), design("adder", "ref.v"), ctx);
  const auto calls = rig.log->snapshot();
  for (const auto& m : calls.at(0).request) {
    EXPECT_FALSE(leaks_testbench(m.content, design_text("adder", "tb.v")));
  }
}

TEST(Debug, PatchFromLastFence) {
  TestReport report{"", review({"a=1 b=1 | EXPECTED: s=2 | OBSERVED: s=0"}, false), Verdict::fail,
                    {{"a=1 b=1", "s=2", "s=0"}}};
  Rig rig({reply("debug", "", "first try\n" + fenced("module add; endmodule\n") + "better:\n" +
                                  fenced(design_text("adder", "ref.v")),
                 std::string("the operator is wrong"))});
  auto ctx = rig.ctx();
  auto patch = debug(adder_problem(), design("adder", "mutants/sub.v"), report, ctx);
  EXPECT_EQ(patch.reasoning, "the operator is wrong");
  EXPECT_EQ(patch.code.origin, Origin::debug_agent);
  if (!simulator_available()) GTEST_SKIP() << "no Verilog simulator installed";
  EXPECT_TRUE(shared_harness().simulate(patch.code, design("adder", "tb.v")).passed());
}

TEST(Debug, PassReportIsAPreconditionViolation) {
  Rig rig({reply("debug", "", "x")});
  auto ctx = rig.ctx();
  TestReport pass{"", "VERDICT: PASS", Verdict::pass, {{"a", "b", "b"}}};
  EXPECT_THROW(debug(adder_problem(), design("adder", "ref.v"), pass, ctx), PreconditionError);
}

TEST(Debug, NoFenceIsNoCodeBlock) {
  Rig rig({reply("debug", "", "cannot fix")});
  auto ctx = rig.ctx();
  TestReport fail{"", "VERDICT: FAIL", Verdict::fail, {{"a", "b", "c"}}};
  EXPECT_THROW(debug(adder_problem(), design("adder", "ref.v"), fail, ctx), NoCodeBlock);
}

TEST(TestReport, RenderParseRoundTrip) {
  TestReport r{"why", "", Verdict::fail, {{"s1", "e1", "o1"}, {"s2", "e2", "o2"}}};
  r.body = render_test_report(r);
  auto back = parse_test_report(r.body, "why");
  ASSERT_TRUE(back);
  EXPECT_EQ(*back, r);
}
