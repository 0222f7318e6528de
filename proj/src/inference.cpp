#include "rtlforge/inference.hpp"

#include <charconv>

#include <spdlog/spdlog.h>

#include "rtlforge/pool.hpp"

namespace rtlforge {

std::string_view to_string(Strategy strategy) {
  switch (strategy) {
    case Strategy::regular:
      return "regular";
    case Strategy::deep_thinking:
      return "deep_thinking";
    case Strategy::agentic:
      return "agentic";
  }
  return "regular";
}

Strategy strategy_from_string(std::string_view text) {
  if (text == "regular") return Strategy::regular;
  if (text == "deep" || text == "deep_thinking") return Strategy::deep_thinking;
  if (text == "agentic") return Strategy::agentic;
  throw ConfigError("unknown strategy '" + std::string(text) + "' (expected regular, deep or agentic)");
}

Budget Budget::of(int n) {
  if (n < 0) throw ConfigError("interaction budget must be >= 0");
  return Budget{n};
}

Budget Budget::parse(std::string_view text) {
  if (text == "inf" || text == "infinity" || text == "unbounded") return unbounded();
  int n = 0;
  auto [end, ec] = std::from_chars(text.data(), text.data() + text.size(), n);
  if (ec != std::errc() || end != text.data() + text.size()) {
    throw ConfigError("budget must be a non-negative integer or 'inf', got '" + std::string(text) + "'");
  }
  return of(n);
}

std::string Budget::str() const { return limit ? std::to_string(*limit) : "inf"; }

void StrategyConfig::validate() const {
  if (budget && strategy != Strategy::agentic) throw ConfigError("an interaction budget applies only to agentic");
  if (budget && budget->limit && *budget->limit < 0) throw ConfigError("interaction budget must be >= 0");
  params.validate();
}

std::string_view to_string(SessionTerminal terminal) {
  switch (terminal) {
    case SessionTerminal::verdict_pass:
      return "verdict_pass";
    case SessionTerminal::budget_exhausted:
      return "budget_exhausted";
    case SessionTerminal::single_shot:
      return "single_shot";
  }
  return "single_shot";
}

SessionTerminal session_terminal_from_string(std::string_view text) {
  if (text == "verdict_pass") return SessionTerminal::verdict_pass;
  if (text == "budget_exhausted") return SessionTerminal::budget_exhausted;
  if (text == "single_shot") return SessionTerminal::single_shot;
  throw ParseFailure("unknown session terminal '" + std::string(text) + "'");
}

void to_json(nlohmann::json& j, const Turn& t) {
  j = nlohmann::json{{"agent", t.agent},
                     {"template", t.template_id},
                     {"request", t.request},
                     {"response", t.response},
                     {"prompt_tokens", t.prompt_tokens},
                     {"completion_tokens", t.completion_tokens}};
}

void from_json(const nlohmann::json& j, Turn& t) {
  t.agent = j.at("agent").get<std::string>();
  t.template_id = j.value("template", std::string());
  t.request = j.at("request").get<std::vector<ChatMessage>>();
  t.response = j.at("response").get<ChatMessage>();
  t.prompt_tokens = j.value("prompt_tokens", std::size_t{0});
  t.completion_tokens = j.value("completion_tokens", std::size_t{0});
}

void to_json(nlohmann::json& j, const SessionTranscript& t) {
  j = nlohmann::json{{"turns", t.turns},
                     {"total_completion_tokens", t.total_completion_tokens},
                     {"interactions_used", t.interactions_used},
                     {"terminal", to_string(t.terminal)}};
}

void from_json(const nlohmann::json& j, SessionTranscript& t) {
  t.turns = j.at("turns").get<std::vector<Turn>>();
  t.total_completion_tokens = j.value("total_completion_tokens", std::size_t{0});
  t.interactions_used = j.value("interactions_used", 0);
  t.terminal = session_terminal_from_string(j.value("terminal", std::string("single_shot")));
}

namespace {

class Session {
 public:
  Session(const StrategyConfig& config, std::string session) : config_(config), session_(std::move(session)) {}

  const ChatMessage& call(Gateway& gateway, std::vector<ChatMessage> messages, std::string agent,
                          std::string template_id) {
    auto reply = gateway.complete(messages, config_.params, CallInfo{agent, template_id, session_});
    Turn turn{std::move(agent), std::move(template_id), std::move(messages), std::move(reply.message),
              reply.prompt_tokens, reply.completion_tokens};
    transcript.total_completion_tokens += turn.completion_tokens;
    transcript.turns.push_back(std::move(turn));
    return transcript.turns.back().response;
  }

  SessionTranscript transcript;

 private:
  const StrategyConfig& config_;
  std::string session_;
};

InferenceResult single_shot(const std::string& problem, Gateway& gateway, const StrategyConfig& config,
                            const PromptLibrary& prompts, const std::string& session, const std::string& template_id) {
  Session s(config, session);
  const auto& reply = s.call(gateway, {ChatMessage::system(prompts.render(template_id)), ChatMessage::user(problem)},
                             "solution", template_id);
  InferenceResult result;
  result.code = extract_verilog(reply.content, Origin::solution_agent);
  s.transcript.terminal = SessionTerminal::single_shot;
  result.transcript = std::move(s.transcript);
  return result;
}

}  // namespace

InferenceResult infer_regular(const std::string& problem, Gateway& gateway, const StrategyConfig& config,
                              const PromptLibrary& prompts, const std::string& session) {
  return single_shot(problem, gateway, config, prompts, session, "strategy_regular.v1");
}

InferenceResult infer_deep_thinking(const std::string& problem, Gateway& gateway, const StrategyConfig& config,
                                    const PromptLibrary& prompts, const std::string& session) {
  return single_shot(problem, gateway, config, prompts, session, "strategy_deep.v1");
}

InferenceResult infer_agentic(const std::string& problem, Gateway& gateway, const StrategyConfig& config,
                              const PromptLibrary& prompts, const std::string& session) {
  const Budget budget = config.budget.value_or(Budget::of(3));
  if (budget.limit && *budget.limit < 0) throw PreconditionError("interaction budget must be >= 0");
  Gateway& tester = config.test_gateway ? *config.test_gateway : gateway;
  Gateway& debugger = config.debug_gateway ? *config.debug_gateway : gateway;

  RefinedProblem p;
  p.statement = problem;
  Session s(config, session);
  std::optional<VerilogSource> current =
      extract_verilog(s.call(gateway, solve_messages(p, prompts), "solution", "solution.v1").content,
                      Origin::solution_agent);

  auto& used = s.transcript.interactions_used;
  s.transcript.terminal = SessionTerminal::budget_exhausted;
  while (!budget.limit || used < *budget.limit) {
    ++used;
    if (!current) {
      // Nothing to review yet: the round goes to a fresh solve.
      current = extract_verilog(s.call(gateway, solve_messages(p, prompts), "solution", "solution.v1").content,
                                Origin::solution_agent);
      continue;
    }
    const auto& review_msg = s.call(tester, test_messages(p, *current, prompts), "test", "test.v1");
    auto report = parse_test_report(review_msg.content, review_msg.reasoning.value_or(""));
    if (report && report->verdict == Verdict::pass) {
      s.transcript.terminal = SessionTerminal::verdict_pass;
      break;
    }
    if (!report) report = TestReport{review_msg.reasoning.value_or(""), review_msg.content, Verdict::fail, {}};
    const auto& patch_msg = s.call(debugger, debug_messages(p, *current, *report, prompts), "debug", "debug.v1");
    if (auto patched = extract_verilog(patch_msg.content, Origin::debug_agent)) current = std::move(patched);
  }
  InferenceResult result;
  result.code = std::move(current);
  result.transcript = std::move(s.transcript);
  return result;
}

InferenceResult infer(const std::string& problem, Gateway& gateway, const StrategyConfig& config,
                      const PromptLibrary& prompts, const std::string& session) {
  switch (config.strategy) {
    case Strategy::regular:
      return infer_regular(problem, gateway, config, prompts, session);
    case Strategy::deep_thinking:
      return infer_deep_thinking(problem, gateway, config, prompts, session);
    case Strategy::agentic:
      return infer_agentic(problem, gateway, config, prompts, session);
  }
  throw PreconditionError("unknown strategy");
}

void to_json(nlohmann::json& j, const SessionResult& r) {
  j = nlohmann::json{{"problem_id", r.problem_id},
                     {"sample", r.sample},
                     {"strategy", to_string(r.strategy)},
                     {"code", r.result.code ? nlohmann::json(r.result.code->text) : nlohmann::json(nullptr)},
                     {"transcript", r.result.transcript}};
  if (!r.error.empty()) j["error"] = r.error;
}

void from_json(const nlohmann::json& j, SessionResult& r) {
  r.problem_id = j.at("problem_id").get<std::string>();
  r.sample = j.value("sample", 0);
  r.strategy = strategy_from_string(j.value("strategy", std::string("regular")));
  const auto& code = j.at("code");
  if (code.is_null()) {
    r.result.code.reset();
  } else {
    r.result.code = VerilogSource(code.get<std::string>(), Origin::solution_agent,
                                  r.problem_id + "#" + std::to_string(r.sample));
  }
  if (j.contains("transcript")) r.result.transcript = j["transcript"].get<SessionTranscript>();
  r.error = j.value("error", std::string());
}

std::vector<SessionResult> run_batch(const std::vector<BatchProblem>& problems, Gateway& gateway,
                                     const StrategyConfig& config, const PromptLibrary& prompts,
                                     const BatchOptions& options) {
  if (options.n < 1) throw PreconditionError("samples per problem must be >= 1");
  config.validate();
  const auto n = static_cast<std::size_t>(options.n);
  std::vector<std::optional<SessionResult>> slots(problems.size() * n);
  parallel_for(
      slots.size(), options.width,
      [&](std::size_t k) {
        const auto& problem = problems[k / n];
        const int sample = static_cast<int>(k % n);
        const std::string session = problem.id + "#" + std::to_string(sample);
        StrategyConfig local = config;
        if (options.seed) local.params.seed = derive_seed(*options.seed, problem.id, static_cast<std::uint64_t>(sample));
        SessionResult r;
        r.problem_id = problem.id;
        r.sample = sample;
        r.strategy = config.strategy;
        try {
          r.result = infer(problem.prompt, gateway, local, prompts, session);
          if (r.result.code) r.result.code->label = session;
        } catch (const Error& e) {
          r.result = InferenceResult{};
          r.error = e.what();
          spdlog::warn("session={} failed: {}", session, e.what());
        }
        spdlog::info("session={} strategy={} terminal={} interactions={} completion_tokens={} code={}", session,
                     to_string(r.strategy), to_string(r.result.transcript.terminal),
                     r.result.transcript.interactions_used, r.result.transcript.total_completion_tokens,
                     r.result.code ? "yes" : "none");
        slots[k] = std::move(r);
      },
      options.cancel);
  std::vector<SessionResult> out;
  for (auto& s : slots) {
    if (s) out.push_back(std::move(*s));
  }
  return out;
}

}  // namespace rtlforge
