#pragma once

// The six pipeline agents. Each renders a prompt template, calls the gateway
// and parses a structured answer.

#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "rtlforge/gateway.hpp"
#include "rtlforge/harness.hpp"
#include "rtlforge/prompts.hpp"
#include "rtlforge/verilog.hpp"

namespace rtlforge {

struct AgentContext {
  Gateway& gateway;
  const PromptLibrary& prompts;
  SamplingParams params;
  std::string session;  // seed / session id stamped on every call
  std::vector<CallInfo>* trail = nullptr;  // receives every call made through this context
};

struct RefinedProblem {
  std::string statement;  // full text handed to solvers (interface included)
  ModuleInterface interface;
  std::string source_id;

  friend bool operator==(const RefinedProblem&, const RefinedProblem&) = default;
};

void to_json(nlohmann::json& j, const RefinedProblem& p);
void from_json(const nlohmann::json& j, RefinedProblem& p);

enum class Fault { solution, testbench };

std::string_view to_string(Fault fault);

struct ErrorReport {
  Fault fault = Fault::solution;
  std::string evidence;   // tool output excerpt
  std::string rationale;  // arbiter's explanation
  bool defaulted = false; // verdict was never parseable

  std::string render() const;
};

void to_json(nlohmann::json& j, const ErrorReport& r);
void from_json(const nlohmann::json& j, ErrorReport& r);

enum class Verdict { pass, fail };

std::string_view to_string(Verdict verdict);

struct TestCase {
  std::string scenario;
  std::string expected;
  std::string observed;

  friend bool operator==(const TestCase&, const TestCase&) = default;
};

struct TestReport {
  std::string reasoning;  // thinking that produced the report
  std::string body;       // the report text itself
  Verdict verdict = Verdict::fail;
  std::vector<TestCase> cases;

  friend bool operator==(const TestReport&, const TestReport&) = default;
};

void to_json(nlohmann::json& j, const TestReport& r);
void from_json(const nlohmann::json& j, TestReport& r);

struct DebugPatch {
  std::string reasoning;
  VerilogSource code;
};

void to_json(nlohmann::json& j, const DebugPatch& p);
void from_json(const nlohmann::json& j, DebugPatch& p);

struct Solution {
  std::string reasoning;
  VerilogSource code;
};

// --- structured output parsers ---------------------------------------------

struct RevisionAnswer {
  std::string behavior;
  std::string statement;
};

std::optional<RevisionAnswer> parse_revision(std::string_view text);
std::string render_revision(const RevisionAnswer& answer);

// `FAULT: SOLUTION|TESTBENCH` anywhere on its own line (last one wins).
std::optional<Fault> parse_fault(std::string_view text);

// CASE lines plus a final `VERDICT:` line; nullopt when either is missing.
std::optional<TestReport> parse_test_report(std::string_view body, std::string_view reasoning = {});
std::string render_test_report(const TestReport& report);

// Prose before the last code fence.
std::string prose_before_code(std::string_view text);

// Reasoning channel if present, else the prose preceding the answer's fence.
std::string answer_reasoning(const ChatMessage& message);

// Reasoning followed by the code in a verilog fence.
std::string render_answer(std::string_view reasoning, const VerilogSource& code);

// Ports and the module name absent from `statement`.
std::vector<std::string> missing_identifiers(std::string_view statement, const ModuleInterface& iface);

// --- agents ------------------------------------------------------------------

// Revision: seed (p, c) -> p'. Throws PreconditionError when the seed did not
// compile, ParseFailure when no statement section comes back and
// InterfaceMismatch when the statement omits identifiers after one re-ask.
RefinedProblem revise(const std::string& seed_problem, const VerilogSource& seed_code, const CompileReport& seed_check,
                      AgentContext& ctx, const std::string& source_id = {});

// Messages sent to the solution agent; identical with or without a prior error.
std::vector<ChatMessage> solve_messages(const RefinedProblem& p, const PromptLibrary& prompts);

Solution solve(const RefinedProblem& p, AgentContext& ctx, const std::optional<ErrorReport>& prior_error = {});

VerilogSource gen_testbench(const RefinedProblem& p, AgentContext& ctx, const std::optional<ErrorReport>& prior_error = {},
                            const std::optional<VerilogSource>& previous = {});

ErrorReport arbitrate(const RefinedProblem& p, const VerilogSource& code, const VerilogSource& tb,
                      const SimulationOutcome& outcome, AgentContext& ctx);

std::vector<ChatMessage> test_messages(const RefinedProblem& p, const VerilogSource& attempt,
                                       const PromptLibrary& prompts);

// nullopt when the report stays unparsable after one re-ask.
std::optional<TestReport> test_review(const RefinedProblem& p, const VerilogSource& attempt, AgentContext& ctx);

std::vector<ChatMessage> debug_messages(const RefinedProblem& p, const VerilogSource& attempt,
                                        const TestReport& report, const PromptLibrary& prompts);

DebugPatch debug(const RefinedProblem& p, const VerilogSource& attempt, const TestReport& report, AgentContext& ctx);

}  // namespace rtlforge
