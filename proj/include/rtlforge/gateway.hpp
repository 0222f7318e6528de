#pragma once

// Chat-completion gateway: one call surface over an OpenAI-compatible HTTP
// endpoint or a deterministic scripted backend.

#include <atomic>
#include <chrono>
#include <cstdint>
#include <memory>
#include <mutex>
#include <optional>
#include <semaphore>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "rtlforge/errors.hpp"

namespace rtlforge {

enum class Role { system, user, assistant };

std::string_view to_string(Role role);
Role role_from_string(std::string_view text);

struct ChatMessage {
  Role role = Role::user;
  std::string content;
  // Separated thinking channel; only ever set on assistant messages.
  std::optional<std::string> reasoning;

  static ChatMessage system(std::string content);
  static ChatMessage user(std::string content);
  static ChatMessage assistant(std::string content, std::optional<std::string> reasoning = {});

  // Throws PreconditionError when the role invariants do not hold.
  void validate() const;

  friend bool operator==(const ChatMessage&, const ChatMessage&) = default;
};

struct SamplingParams {
  double temperature = 1.0;
  double top_p = 1.0;
  std::optional<int> top_k;  // nullopt = unlimited (sent as -1)
  double repetition_penalty = 1.0;
  int max_tokens = 8192;
  std::optional<std::uint64_t> seed;

  void validate() const;

  friend bool operator==(const SamplingParams&, const SamplingParams&) = default;
};

enum class FinishReason { stop, length, error };

std::string_view to_string(FinishReason reason);
FinishReason finish_reason_from_string(std::string_view text);

struct Completion {
  ChatMessage message;
  std::size_t prompt_tokens = 0;
  std::size_t completion_tokens = 0;
  FinishReason finish_reason = FinishReason::stop;
  // Transient failures absorbed by the retry loop before this result.
  int retries = 0;

  bool truncated() const { return finish_reason == FinishReason::length; }
};

// One entry of a scripted backend. `match` and `tag` route the entry to
// specific requests; entries without either are served in script order.
struct ScriptEntry {
  std::string content;
  std::optional<std::string> reasoning;
  // "timeout*N" / "timeout×N" / "error*N" fail the first N deliveries with a
  // transient error; "refuse" always answers with a 4xx-class refusal.
  std::optional<std::string> failure;
  std::optional<std::string> match;
  std::optional<std::string> tag;
  // Sticky entries are never consumed.
  bool sticky = false;
  std::optional<std::size_t> completion_tokens;
  FinishReason finish_reason = FinishReason::stop;
  std::chrono::milliseconds delay{0};
};

void to_json(nlohmann::json& j, const ScriptEntry& entry);
void from_json(const nlohmann::json& j, ScriptEntry& entry);

std::vector<ScriptEntry> load_script(const std::string& path);

enum class BackendKind { http, scripted };

struct BackendSpec {
  BackendKind kind = BackendKind::scripted;
  std::string endpoint;  // base URL, e.g. http://localhost:8000/v1
  std::string model_id;
  std::string api_key_env = "OPENAI_API_KEY";
  std::chrono::milliseconds timeout{std::chrono::minutes(10)};
  int max_retries = 3;
  int max_in_flight = 8;
  std::chrono::milliseconds backoff_base{500};
  std::shared_ptr<const std::vector<ScriptEntry>> script;

  void validate() const;
};

BackendSpec scripted_backend(std::vector<ScriptEntry> script);

// Request as handed to a transport.
struct ChatRequest {
  std::span<const ChatMessage> messages;
  const SamplingParams& params;
  std::string_view tag;
  std::string_view model_id;
};

// Raw transport; implementations throw TransportError for retryable faults,
// BackendRefused for refusals and ScriptExhausted when a script runs dry.
class ChatBackend {
 public:
  virtual ~ChatBackend() = default;
  virtual Completion send(const ChatRequest& request) = 0;
};

// Caller-side metadata attached to each call for transcripts and audits.
struct CallInfo {
  std::string agent;        // solution, testbench, test, debug, ...
  std::string template_id;  // prompt template that rendered the request
  std::string session;      // seed id / session id
};

struct CallRecord {
  CallInfo info;
  std::vector<ChatMessage> request;
  ChatMessage response;
  std::size_t prompt_tokens = 0;
  std::size_t completion_tokens = 0;
};

void to_json(nlohmann::json& j, const CallRecord& record);

// Thread-safe sink of every call made through the gateways it is attached to.
class CallLog {
 public:
  void append(CallRecord record);
  std::vector<CallRecord> snapshot() const;
  std::size_t size() const;

 private:
  mutable std::mutex mutex_;
  std::vector<CallRecord> records_;
};

struct UsageTotals {
  std::size_t calls = 0;
  std::size_t prompt_tokens = 0;
  std::size_t completion_tokens = 0;
  std::size_t retries = 0;
};

class Gateway {
 public:
  explicit Gateway(BackendSpec spec, std::shared_ptr<CallLog> log = nullptr);
  Gateway(BackendSpec spec, std::shared_ptr<ChatBackend> backend,
          std::shared_ptr<CallLog> log = nullptr);

  Gateway(const Gateway&) = delete;
  Gateway& operator=(const Gateway&) = delete;

  // Validates, bounds concurrency to max_in_flight, retries transient
  // failures with exponential backoff and records usage.
  Completion complete(std::span<const ChatMessage> messages, const SamplingParams& params,
                      const CallInfo& info = {});

  const BackendSpec& spec() const { return spec_; }
  UsageTotals usage() const;
  int peak_in_flight() const { return peak_in_flight_.load(); }
  const std::shared_ptr<CallLog>& log() const { return log_; }

 private:
  BackendSpec spec_;
  std::shared_ptr<ChatBackend> backend_;
  std::shared_ptr<CallLog> log_;
  std::counting_semaphore<> slots_;
  std::atomic<int> in_flight_{0};
  std::atomic<int> peak_in_flight_{0};
  mutable std::mutex usage_mutex_;
  UsageTotals usage_;
};

// Free-function spelling of Gateway::complete.
Completion complete(Gateway& gateway, std::span<const ChatMessage> messages,
                    const SamplingParams& params, const CallInfo& info = {});

// Splits inline <think>...</think> blocks out of `content` into the
// reasoning channel. Existing reasoning is kept and prepended.
ChatMessage normalize_reasoning(ChatMessage message);

// Whitespace-delimited token count; the scripted backend's usage unit.
std::size_t whitespace_tokens(std::string_view text);

std::shared_ptr<ChatBackend> make_backend(const BackendSpec& spec);

// Sampling seed for one (key, index) draw under a run-level base seed.
std::uint64_t derive_seed(std::uint64_t base, std::string_view key, std::uint64_t index);

void to_json(nlohmann::json& j, const ChatMessage& message);
void from_json(const nlohmann::json& j, ChatMessage& message);
void to_json(nlohmann::json& j, const SamplingParams& params);
void from_json(const nlohmann::json& j, SamplingParams& params);

}  // namespace rtlforge
