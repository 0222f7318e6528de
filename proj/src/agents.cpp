#include "rtlforge/agents.hpp"

#include <algorithm>
#include <regex>
#include <sstream>

namespace rtlforge {

namespace {

std::string trim_copy(std::string_view s) {
  auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string_view> split_lines(std::string_view text) {
  std::vector<std::string_view> lines;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    auto nl = text.find('\n', pos);
    if (nl == std::string_view::npos) nl = text.size();
    lines.push_back(text.substr(pos, nl - pos));
    pos = nl + 1;
  }
  return lines;
}

// Drops markdown emphasis so "**VERDICT: PASS**" reads as a verdict line.
std::string plain(std::string_view line) {
  std::string out;
  for (char c : line) {
    if (c != '*' && c != '`') out += c;
  }
  return trim_copy(out);
}

std::string upper(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::toupper(c); });
  return s;
}

std::string excerpt(std::string_view text, std::size_t limit = 4000) {
  if (text.size() <= limit) return std::string(text);
  return std::string(text.substr(0, limit)) + "\n[... truncated]";
}

Completion ask(AgentContext& ctx, const std::vector<ChatMessage>& messages, std::string agent,
               std::string template_id) {
  CallInfo info{std::move(agent), std::move(template_id), ctx.session};
  auto reply = ctx.gateway.complete(messages, ctx.params, info);
  if (ctx.trail) ctx.trail->push_back(std::move(info));
  return reply;
}

}  // namespace

// --- value types --------------------------------------------------------------

void to_json(nlohmann::json& j, const RefinedProblem& p) {
  j = nlohmann::json{{"statement", p.statement}, {"interface", p.interface}, {"source_id", p.source_id}};
}

void from_json(const nlohmann::json& j, RefinedProblem& p) {
  p.statement = j.at("statement").get<std::string>();
  p.interface = j.at("interface").get<ModuleInterface>();
  p.source_id = j.value("source_id", std::string());
}

std::string_view to_string(Fault fault) { return fault == Fault::solution ? "solution" : "testbench"; }

std::string ErrorReport::render() const {
  std::string out = "FAULT: " + upper(std::string(to_string(fault))) + "\n";
  if (!rationale.empty()) out += "\n" + rationale + "\n";
  if (!evidence.empty()) out += "\nSimulator output:\n" + evidence + "\n";
  return out;
}

void to_json(nlohmann::json& j, const ErrorReport& r) {
  j = nlohmann::json{{"fault", to_string(r.fault)},
                     {"evidence", r.evidence},
                     {"rationale", r.rationale},
                     {"defaulted", r.defaulted}};
}

void from_json(const nlohmann::json& j, ErrorReport& r) {
  r.fault = j.at("fault").get<std::string>() == "testbench" ? Fault::testbench : Fault::solution;
  r.evidence = j.value("evidence", std::string());
  r.rationale = j.value("rationale", std::string());
  r.defaulted = j.value("defaulted", false);
}

std::string_view to_string(Verdict verdict) { return verdict == Verdict::pass ? "PASS" : "FAIL"; }

void to_json(nlohmann::json& j, const TestReport& r) {
  nlohmann::json cases = nlohmann::json::array();
  for (const auto& c : r.cases) {
    cases.push_back({{"scenario", c.scenario}, {"expected", c.expected}, {"observed", c.observed}});
  }
  j = nlohmann::json{{"reasoning", r.reasoning}, {"body", r.body}, {"verdict", to_string(r.verdict)}, {"cases", cases}};
}

void from_json(const nlohmann::json& j, TestReport& r) {
  r.reasoning = j.value("reasoning", std::string());
  r.body = j.at("body").get<std::string>();
  r.verdict = j.at("verdict").get<std::string>() == "PASS" ? Verdict::pass : Verdict::fail;
  r.cases.clear();
  for (const auto& c : j.value("cases", nlohmann::json::array())) {
    r.cases.push_back({c.at("scenario").get<std::string>(), c.at("expected").get<std::string>(),
                       c.at("observed").get<std::string>()});
  }
}

void to_json(nlohmann::json& j, const DebugPatch& p) { j = nlohmann::json{{"reasoning", p.reasoning}, {"code", p.code}}; }

void from_json(const nlohmann::json& j, DebugPatch& p) {
  p.reasoning = j.value("reasoning", std::string());
  p.code = j.at("code").get<VerilogSource>();
}

// --- parsers --------------------------------------------------------------------

std::optional<RevisionAnswer> parse_revision(std::string_view text) {
  auto lines = split_lines(text);
  std::optional<std::size_t> behavior_at, statement_at;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    auto line = upper(plain(lines[i]));
    if (line.starts_with("BEHAVIOR:") || line.starts_with("BEHAVIOUR:")) behavior_at = i;
    if (line.starts_with("PROBLEM STATEMENT:")) statement_at = i;
  }
  if (!statement_at) return std::nullopt;

  auto collect = [&](std::size_t header, std::size_t end) {
    std::string first = plain(lines[header]);
    first = trim_copy(first.substr(first.find(':') + 1));
    std::string body = first;
    for (std::size_t i = header + 1; i < end; ++i) {
      body += '\n';
      body += lines[i];
    }
    return trim_copy(body);
  };
  RevisionAnswer answer;
  answer.statement = collect(*statement_at, lines.size());
  if (behavior_at && *behavior_at < *statement_at) answer.behavior = collect(*behavior_at, *statement_at);
  if (answer.statement.empty()) return std::nullopt;
  return answer;
}

std::string render_revision(const RevisionAnswer& answer) {
  return "BEHAVIOR:\n" + answer.behavior + "\n\nPROBLEM STATEMENT:\n" + answer.statement;
}

std::optional<Fault> parse_fault(std::string_view text) {
  static const std::regex kFault(R"(^FAULT:\s*(SOLUTION|TESTBENCH)\b.*$)", std::regex::icase);
  std::optional<Fault> fault;
  for (auto raw : split_lines(text)) {
    std::string line = plain(raw);
    std::smatch m;
    if (std::regex_match(line, m, kFault)) {
      fault = upper(m[1].str()) == "SOLUTION" ? Fault::solution : Fault::testbench;
    }
  }
  return fault;
}

std::optional<TestReport> parse_test_report(std::string_view body, std::string_view reasoning) {
  static const std::regex kCase(R"(^CASE:\s*(.*?)\s*\|\s*EXPECTED:\s*(.*?)\s*\|\s*OBSERVED:\s*(.*?)\s*$)",
                                std::regex::icase);
  static const std::regex kVerdict(R"(^VERDICT:\s*(PASS|FAIL)\s*\.?$)", std::regex::icase);
  auto lines = split_lines(body);
  TestReport report;
  std::optional<std::size_t> first_case;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    std::string line = plain(lines[i]);
    if (line.starts_with("- ")) line = trim_copy(line.substr(2));
    std::smatch m;
    if (std::regex_match(line, m, kCase)) {
      report.cases.push_back({m[1].str(), m[2].str(), m[3].str()});
      if (!first_case) first_case = i;
    }
  }
  std::optional<Verdict> verdict;
  for (auto it = lines.rbegin(); it != lines.rend(); ++it) {
    std::string line = plain(*it);
    if (line.empty()) continue;
    std::smatch m;
    if (std::regex_match(line, m, kVerdict)) verdict = upper(m[1].str()) == "PASS" ? Verdict::pass : Verdict::fail;
    break;
  }
  if (!verdict || report.cases.empty()) return std::nullopt;
  report.verdict = *verdict;
  report.body = std::string(body);
  if (!reasoning.empty()) {
    report.reasoning = std::string(reasoning);
  } else {
    std::string prose;
    for (std::size_t i = 0; i < *first_case; ++i) {
      prose += lines[i];
      prose += '\n';
    }
    report.reasoning = trim_copy(prose);
  }
  return report;
}

std::string render_test_report(const TestReport& report) {
  std::string out;
  for (const auto& c : report.cases) {
    out += "CASE: " + c.scenario + " | EXPECTED: " + c.expected + " | OBSERVED: " + c.observed + "\n";
  }
  out += "VERDICT: ";
  out += to_string(report.verdict);
  return out;
}

std::string prose_before_code(std::string_view text) {
  auto close = text.rfind("```");
  if (close == std::string_view::npos) return trim_copy(text);
  auto open = close == 0 ? std::string_view::npos : text.rfind("```", close - 1);
  if (open == std::string_view::npos) return trim_copy(text.substr(0, close));
  while (open > 0 && text[open - 1] == '`') --open;
  return trim_copy(text.substr(0, open));
}

std::string answer_reasoning(const ChatMessage& message) {
  if (message.reasoning && !message.reasoning->empty()) return *message.reasoning;
  return prose_before_code(message.content);
}

std::string render_answer(std::string_view reasoning, const VerilogSource& code) {
  std::string out(reasoning);
  if (!out.empty()) out += "\n\n";
  out += embed_in_fence(code.text, "verilog");
  return out;
}

std::vector<std::string> missing_identifiers(std::string_view statement, const ModuleInterface& iface) {
  std::vector<std::string> missing;
  if (!mentions_identifier(statement, iface.module_name)) missing.push_back(iface.module_name);
  for (const auto& p : iface.ports) {
    if (!mentions_identifier(statement, p.name)) missing.push_back(p.name);
  }
  return missing;
}

// --- agents ------------------------------------------------------------------

RefinedProblem revise(const std::string& seed_problem, const VerilogSource& seed_code, const CompileReport& seed_check,
                      AgentContext& ctx, const std::string& source_id) {
  if (!seed_check.ok) throw PreconditionError("revise() requires seed code that compiles");
  const ModuleInterface iface = parse_interface(seed_code);

  std::vector<ChatMessage> messages{ChatMessage::user(ctx.prompts.render(
      "revision.v1", {{"exemplars", ctx.prompts.render_exemplars()},
                      {"problem", seed_problem},
                      {"code", seed_code.text},
                      {"interface", iface.render()}}))};

  std::vector<std::string> missing;
  for (int round = 0; round < 2; ++round) {
    auto reply = ask(ctx, messages, "revision", round == 0 ? "revision.v1" : "revision_reask.v1");
    auto answer = parse_revision(reply.message.content);
    if (!answer) {
      if (round == 0) {
        messages.push_back(ChatMessage::assistant(reply.message.content));
        messages.push_back(ChatMessage::user(ctx.prompts.render("revision_reask.v1", {{"missing", "a PROBLEM STATEMENT section"}})));
        continue;
      }
      throw ParseFailure("revision output has no PROBLEM STATEMENT section");
    }
    missing = missing_identifiers(answer->statement, iface);
    if (missing.empty()) {
      RefinedProblem p;
      p.interface = iface;
      p.source_id = source_id;
      p.statement = ctx.prompts.render("statement.v1", {{"statement", answer->statement}, {"interface", iface.render()}});
      return p;
    }
    std::string list;
    for (const auto& m : missing) list += (list.empty() ? "`" : ", `") + m + "`";
    messages.push_back(ChatMessage::assistant(reply.message.content));
    messages.push_back(ChatMessage::user(ctx.prompts.render("revision_reask.v1", {{"missing", list}})));
  }
  std::string list;
  for (const auto& m : missing) list += (list.empty() ? "" : ", ") + m;
  throw InterfaceMismatch("problem statement omits " + list);
}

std::vector<ChatMessage> solve_messages(const RefinedProblem& p, const PromptLibrary& prompts) {
  return {ChatMessage::system(prompts.render("solution.v1")), ChatMessage::user(p.statement)};
}

Solution solve(const RefinedProblem& p, AgentContext& ctx, const std::optional<ErrorReport>& prior_error) {
  if (prior_error && prior_error->fault != Fault::solution) {
    throw PreconditionError("solve() retry requires an error report blaming the solution");
  }
  // A retry is a fresh attempt: the error report never reaches the prompt.
  auto reply = ask(ctx, solve_messages(p, ctx.prompts), "solution", "solution.v1");
  auto code = extract_verilog(reply.message.content, Origin::solution_agent);
  if (!code) throw NoCodeBlock("solution agent returned no code block");
  return Solution{answer_reasoning(reply.message), std::move(*code)};
}

VerilogSource gen_testbench(const RefinedProblem& p, AgentContext& ctx, const std::optional<ErrorReport>& prior_error,
                            const std::optional<VerilogSource>& previous) {
  if (prior_error && prior_error->fault != Fault::testbench) {
    throw PreconditionError("testbench repair requires an error report blaming the testbench");
  }
  if (prior_error && !previous) throw PreconditionError("testbench repair requires the previous testbench");
  const std::string& module = p.interface.module_name;

  std::vector<ChatMessage> messages;
  std::string template_id;
  if (prior_error) {
    template_id = "testbench_repair.v1";
    messages.push_back(ChatMessage::user(ctx.prompts.render(
        template_id,
        {{"module", module}, {"statement", p.statement}, {"testbench", previous->text}, {"report", prior_error->render()}})));
  } else {
    template_id = "testbench.v1";
    messages.push_back(ChatMessage::user(ctx.prompts.render(template_id, {{"module", module}, {"statement", p.statement}})));
  }

  for (int round = 0;; ++round) {
    auto reply = ask(ctx, messages, "testbench", round == 0 ? template_id : "testbench_reask.v1");
    auto tb = extract_verilog(reply.message.content, Origin::testbench_agent);
    enum { ok, no_code, self_contained, unlinked } problem = ok;
    if (!tb) {
      problem = no_code;
    } else {
      auto declared = declared_modules(tb->text);
      auto used = instantiated_modules(tb->text);
      if (std::find(declared.begin(), declared.end(), module) != declared.end()) {
        problem = self_contained;
      } else if (std::find(used.begin(), used.end(), module) == used.end()) {
        problem = unlinked;
      }
    }
    if (problem == ok) return std::move(*tb);
    if (round == 1) {
      if (problem == no_code) throw NoCodeBlock("testbench agent returned no code block");
      if (problem == self_contained) throw SelfContainedDUT("testbench declares module " + module + " itself");
      throw InterfaceMismatch("testbench does not instantiate module " + module);
    }
    messages.push_back(ChatMessage::assistant(reply.message.content));
    messages.push_back(ChatMessage::user(ctx.prompts.render("testbench_reask.v1", {{"module", module}})));
  }
}

ErrorReport arbitrate(const RefinedProblem& p, const VerilogSource& code, const VerilogSource& tb,
                      const SimulationOutcome& outcome, AgentContext& ctx) {
  if (outcome.passed()) throw PreconditionError("arbitrate() is only called for non-passing outcomes");
  std::string tool_output = outcome.tool_stdout;
  if (!outcome.tool_stderr.empty()) tool_output += (tool_output.empty() ? "" : "\n") + outcome.tool_stderr;
  tool_output = excerpt(tool_output);

  std::vector<ChatMessage> messages{ChatMessage::user(ctx.prompts.render(
      "verification.v1", {{"statement", p.statement},
                          {"code", code.text},
                          {"testbench", tb.text},
                          {"status", std::string(to_string(outcome.status))},
                          {"tool_output", tool_output}}))};

  ErrorReport report;
  report.evidence = tool_output;
  for (int round = 0; round < 2; ++round) {
    auto reply = ask(ctx, messages, "verification", round == 0 ? "verification.v1" : "verification_reask.v1");
    if (auto fault = parse_fault(reply.message.content)) {
      report.fault = *fault;
      report.rationale = trim_copy(reply.message.content);
      return report;
    }
    messages.push_back(ChatMessage::assistant(reply.message.content));
    messages.push_back(ChatMessage::user(ctx.prompts.render("verification_reask.v1")));
  }
  report.fault = Fault::solution;
  report.defaulted = true;
  report.rationale = "verdict unparsable after one re-ask; blaming the solution";
  return report;
}

std::vector<ChatMessage> test_messages(const RefinedProblem& p, const VerilogSource& attempt,
                                       const PromptLibrary& prompts) {
  return {ChatMessage::user(prompts.render("test.v1", {{"statement", p.statement}, {"code", attempt.text}}))};
}

std::optional<TestReport> test_review(const RefinedProblem& p, const VerilogSource& attempt, AgentContext& ctx) {
  auto messages = test_messages(p, attempt, ctx.prompts);
  for (int round = 0; round < 2; ++round) {
    auto reply = ask(ctx, messages, "test", round == 0 ? "test.v1" : "test_reask.v1");
    if (auto report = parse_test_report(reply.message.content, reply.message.reasoning.value_or(""))) return report;
    messages.push_back(ChatMessage::assistant(reply.message.content));
    messages.push_back(ChatMessage::user(ctx.prompts.render("test_reask.v1")));
  }
  return std::nullopt;
}

std::vector<ChatMessage> debug_messages(const RefinedProblem& p, const VerilogSource& attempt,
                                        const TestReport& report, const PromptLibrary& prompts) {
  return {ChatMessage::user(
      prompts.render("debug.v1", {{"statement", p.statement}, {"code", attempt.text}, {"report", report.body}}))};
}

DebugPatch debug(const RefinedProblem& p, const VerilogSource& attempt, const TestReport& report, AgentContext& ctx) {
  if (report.verdict != Verdict::fail) throw PreconditionError("debug() requires a FAIL test report");
  auto reply = ask(ctx, debug_messages(p, attempt, report, ctx.prompts), "debug", "debug.v1");
  auto code = extract_verilog(reply.message.content, Origin::debug_agent);
  if (!code) throw NoCodeBlock("debug agent returned no code block");
  return DebugPatch{answer_reasoning(reply.message), std::move(*code)};
}

}  // namespace rtlforge
