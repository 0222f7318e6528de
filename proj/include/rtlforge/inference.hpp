#pragma once

// Verilog generation strategies: regular, deep thinking and the agentic
// solve / test / debug loop.

#include <atomic>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "rtlforge/agents.hpp"
#include "rtlforge/gateway.hpp"
#include "rtlforge/prompts.hpp"
#include "rtlforge/verilog.hpp"

namespace rtlforge {

enum class Strategy { regular, deep_thinking, agentic };

std::string_view to_string(Strategy strategy);
// Accepts "regular", "deep", "deep_thinking", "agentic".
Strategy strategy_from_string(std::string_view text);

// Interaction budget of the agentic loop; no limit means unbounded.
struct Budget {
  std::optional<int> limit;

  static Budget unbounded() { return {}; }
  static Budget of(int n);
  // "inf" or a non-negative integer.
  static Budget parse(std::string_view text);
  std::string str() const;

  friend bool operator==(const Budget&, const Budget&) = default;
};

struct StrategyConfig {
  Strategy strategy = Strategy::regular;
  std::optional<Budget> budget;  // agentic only; defaults to 3 there
  SamplingParams params;
  // Per-role overrides for the agentic loop; the main gateway otherwise.
  Gateway* test_gateway = nullptr;
  Gateway* debug_gateway = nullptr;

  void validate() const;
};

enum class SessionTerminal { verdict_pass, budget_exhausted, single_shot };

std::string_view to_string(SessionTerminal terminal);
SessionTerminal session_terminal_from_string(std::string_view text);

struct Turn {
  std::string agent;
  std::string template_id;
  std::vector<ChatMessage> request;
  ChatMessage response;
  std::size_t prompt_tokens = 0;
  std::size_t completion_tokens = 0;
};

struct SessionTranscript {
  std::vector<Turn> turns;
  std::size_t total_completion_tokens = 0;
  int interactions_used = 0;
  SessionTerminal terminal = SessionTerminal::single_shot;
};

struct InferenceResult {
  std::optional<VerilogSource> code;
  SessionTranscript transcript;
};

void to_json(nlohmann::json& j, const Turn& t);
void from_json(const nlohmann::json& j, Turn& t);
void to_json(nlohmann::json& j, const SessionTranscript& t);
void from_json(const nlohmann::json& j, SessionTranscript& t);

InferenceResult infer_regular(const std::string& problem, Gateway& gateway, const StrategyConfig& config,
                              const PromptLibrary& prompts, const std::string& session = {});
InferenceResult infer_deep_thinking(const std::string& problem, Gateway& gateway, const StrategyConfig& config,
                                    const PromptLibrary& prompts, const std::string& session = {});
InferenceResult infer_agentic(const std::string& problem, Gateway& gateway, const StrategyConfig& config,
                              const PromptLibrary& prompts, const std::string& session = {});

// Dispatches on config.strategy.
InferenceResult infer(const std::string& problem, Gateway& gateway, const StrategyConfig& config,
                      const PromptLibrary& prompts, const std::string& session = {});

struct BatchProblem {
  std::string id;
  std::string prompt;
};

// One line of results.jsonl.
struct SessionResult {
  std::string problem_id;
  int sample = 0;
  Strategy strategy = Strategy::regular;
  InferenceResult result;
  std::string error;  // set when the session failed; code is then none
};

void to_json(nlohmann::json& j, const SessionResult& r);
void from_json(const nlohmann::json& j, SessionResult& r);

struct BatchOptions {
  int n = 1;
  std::optional<std::uint64_t> seed;
  int width = 1;
  const std::atomic<bool>* cancel = nullptr;
};

// n sessions per problem, ordered by (problem, sample). Session failures
// yield code=none results. Sessions skipped by cancellation are absent.
std::vector<SessionResult> run_batch(const std::vector<BatchProblem>& problems, Gateway& gateway,
                                     const StrategyConfig& config, const PromptLibrary& prompts,
                                     const BatchOptions& options);

}  // namespace rtlforge
