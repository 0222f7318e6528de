#include "rtlforge/gateway.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <thread>

#include "rtlforge/backends.hpp"

namespace rtlforge {

std::string_view to_string(Role role) {
  switch (role) {
    case Role::system:
      return "system";
    case Role::user:
      return "user";
    case Role::assistant:
      return "assistant";
  }
  return "user";
}

Role role_from_string(std::string_view text) {
  if (text == "system") return Role::system;
  if (text == "user") return Role::user;
  if (text == "assistant") return Role::assistant;
  throw ParseFailure("unknown chat role: " + std::string(text));
}

std::string_view to_string(FinishReason reason) {
  switch (reason) {
    case FinishReason::stop:
      return "stop";
    case FinishReason::length:
      return "length";
    case FinishReason::error:
      return "error";
  }
  return "stop";
}

FinishReason finish_reason_from_string(std::string_view text) {
  if (text == "length") return FinishReason::length;
  if (text == "stop" || text.empty() || text == "eos" || text == "tool_calls") return FinishReason::stop;
  return FinishReason::error;
}

ChatMessage ChatMessage::system(std::string content) { return {Role::system, std::move(content), {}}; }

ChatMessage ChatMessage::user(std::string content) { return {Role::user, std::move(content), {}}; }

ChatMessage ChatMessage::assistant(std::string content, std::optional<std::string> reasoning) {
  return {Role::assistant, std::move(content), std::move(reasoning)};
}

void ChatMessage::validate() const {
  if (role != Role::assistant && content.empty()) {
    throw PreconditionError(std::string(to_string(role)) + " message must have content");
  }
  if (role != Role::assistant && reasoning) {
    throw PreconditionError("reasoning is only allowed on assistant messages");
  }
}

void SamplingParams::validate() const {
  if (!(top_p > 0.0 && top_p <= 1.0)) throw PreconditionError("top_p must be in (0, 1]");
  if (max_tokens <= 0) throw PreconditionError("max_tokens must be positive");
  if (top_k && *top_k <= 0) throw PreconditionError("top_k must be positive or unlimited");
  if (temperature < 0.0) throw PreconditionError("temperature must be non-negative");
}

void BackendSpec::validate() const {
  if (max_in_flight < 1) throw ConfigError("max_in_flight must be >= 1");
  if (max_retries < 0) throw ConfigError("max_retries must be >= 0");
  if (kind == BackendKind::scripted && !script) {
    throw ConfigError("scripted backend requires a response script");
  }
  if (kind == BackendKind::http && endpoint.empty()) {
    throw ConfigError("http backend requires an endpoint");
  }
}

BackendSpec scripted_backend(std::vector<ScriptEntry> script) {
  if (script.empty()) throw PreconditionError("scripted backend requires a non-empty script");
  BackendSpec spec;
  spec.kind = BackendKind::scripted;
  spec.model_id = "scripted";
  spec.backoff_base = std::chrono::milliseconds(1);
  spec.script = std::make_shared<const std::vector<ScriptEntry>>(std::move(script));
  return spec;
}

std::shared_ptr<ChatBackend> make_backend(const BackendSpec& spec) {
  spec.validate();
  if (spec.kind == BackendKind::scripted) return std::make_shared<ScriptedBackend>(*spec.script);
  return std::make_shared<HttpBackend>(spec);
}

// --- call log ---------------------------------------------------------------

void CallLog::append(CallRecord record) {
  std::lock_guard lock(mutex_);
  records_.push_back(std::move(record));
}

std::vector<CallRecord> CallLog::snapshot() const {
  std::lock_guard lock(mutex_);
  return records_;
}

std::size_t CallLog::size() const {
  std::lock_guard lock(mutex_);
  return records_.size();
}

// --- gateway ----------------------------------------------------------------

Gateway::Gateway(BackendSpec spec, std::shared_ptr<CallLog> log)
    : Gateway(spec, make_backend(spec), std::move(log)) {}

Gateway::Gateway(BackendSpec spec, std::shared_ptr<ChatBackend> backend, std::shared_ptr<CallLog> log)
    : spec_(std::move(spec)),
      backend_(std::move(backend)),
      log_(std::move(log)),
      slots_(std::max(1, spec_.max_in_flight)) {
  if (spec_.max_in_flight < 1) throw ConfigError("max_in_flight must be >= 1");
}

namespace {

class SlotGuard {
 public:
  SlotGuard(std::counting_semaphore<>& slots, std::atomic<int>& in_flight, std::atomic<int>& peak)
      : slots_(slots), in_flight_(in_flight) {
    slots_.acquire();
    int now = ++in_flight_;
    int prev = peak.load();
    while (now > prev && !peak.compare_exchange_weak(prev, now)) {
    }
  }
  ~SlotGuard() {
    --in_flight_;
    slots_.release();
  }
  SlotGuard(const SlotGuard&) = delete;
  SlotGuard& operator=(const SlotGuard&) = delete;

 private:
  std::counting_semaphore<>& slots_;
  std::atomic<int>& in_flight_;
};

}  // namespace

Completion Gateway::complete(std::span<const ChatMessage> messages, const SamplingParams& params,
                             const CallInfo& info) {
  if (messages.empty()) throw PreconditionError("complete() requires at least one message");
  if (messages.front().role == Role::assistant) {
    throw PreconditionError("first message must have role system or user");
  }
  for (const auto& m : messages) m.validate();
  params.validate();

  ChatRequest request{messages, params, info.agent, spec_.model_id};
  int retries = 0;
  Completion completion;
  for (;;) {
    try {
      SlotGuard guard(slots_, in_flight_, peak_in_flight_);
      completion = backend_->send(request);
      break;
    } catch (const TransportError&) {
      if (retries >= spec_.max_retries) {
        std::lock_guard lock(usage_mutex_);
        usage_.retries += static_cast<std::size_t>(retries);
        throw;
      }
      auto delay = spec_.backoff_base * (1LL << std::min(retries, 16));
      std::this_thread::sleep_for(delay);
      ++retries;
    }
  }
  completion.retries = retries;
  completion.message = normalize_reasoning(std::move(completion.message));
  completion.message.role = Role::assistant;

  {
    std::lock_guard lock(usage_mutex_);
    usage_.calls += 1;
    usage_.prompt_tokens += completion.prompt_tokens;
    usage_.completion_tokens += completion.completion_tokens;
    usage_.retries += static_cast<std::size_t>(retries);
  }
  if (log_) {
    log_->append(CallRecord{info, {messages.begin(), messages.end()}, completion.message,
                            completion.prompt_tokens, completion.completion_tokens});
  }
  return completion;
}

UsageTotals Gateway::usage() const {
  std::lock_guard lock(usage_mutex_);
  return usage_;
}

Completion complete(Gateway& gateway, std::span<const ChatMessage> messages, const SamplingParams& params,
                    const CallInfo& info) {
  return gateway.complete(messages, params, info);
}

// --- helpers ----------------------------------------------------------------

ChatMessage normalize_reasoning(ChatMessage message) {
  static constexpr std::string_view kOpen = "<think>";
  static constexpr std::string_view kClose = "</think>";
  std::string& text = message.content;
  std::string extracted;
  for (;;) {
    auto close = text.find(kClose);
    if (close == std::string::npos) break;
    auto open = text.rfind(kOpen, close);
    // Some chat templates put the opening tag in the prompt, so a lone
    // closing tag means everything before it was reasoning.
    std::size_t body_begin = open == std::string::npos ? 0 : open + kOpen.size();
    std::size_t erase_begin = open == std::string::npos ? 0 : open;
    if (!extracted.empty()) extracted += "\n";
    extracted += text.substr(body_begin, close - body_begin);
    text.erase(erase_begin, close + kClose.size() - erase_begin);
  }
  if (extracted.empty()) return message;
  auto trim = [](std::string s) {
    auto not_space = [](unsigned char c) { return !std::isspace(c); };
    s.erase(s.begin(), std::find_if(s.begin(), s.end(), not_space));
    s.erase(std::find_if(s.rbegin(), s.rend(), not_space).base(), s.end());
    return s;
  };
  extracted = trim(std::move(extracted));
  text = trim(std::move(text));
  if (message.reasoning && !message.reasoning->empty()) {
    message.reasoning = *message.reasoning + "\n" + extracted;
  } else {
    message.reasoning = extracted;
  }
  return message;
}

std::size_t whitespace_tokens(std::string_view text) {
  std::size_t count = 0;
  bool in_token = false;
  for (unsigned char c : text) {
    if (std::isspace(c)) {
      in_token = false;
    } else if (!in_token) {
      in_token = true;
      ++count;
    }
  }
  return count;
}

// --- JSON -------------------------------------------------------------------

void to_json(nlohmann::json& j, const ChatMessage& message) {
  j = nlohmann::json{{"role", to_string(message.role)}, {"content", message.content}};
  if (message.reasoning) j["reasoning"] = *message.reasoning;
}

void from_json(const nlohmann::json& j, ChatMessage& message) {
  message.role = role_from_string(j.at("role").get<std::string>());
  message.content = j.value("content", std::string{});
  if (j.contains("reasoning") && !j["reasoning"].is_null()) {
    message.reasoning = j["reasoning"].get<std::string>();
  } else {
    message.reasoning.reset();
  }
}

void to_json(nlohmann::json& j, const SamplingParams& params) {
  j = nlohmann::json{{"temperature", params.temperature},
                     {"top_p", params.top_p},
                     {"top_k", params.top_k ? *params.top_k : -1},
                     {"repetition_penalty", params.repetition_penalty},
                     {"max_tokens", params.max_tokens}};
  if (params.seed) j["seed"] = *params.seed;
}

void from_json(const nlohmann::json& j, SamplingParams& params) {
  params = SamplingParams{};
  params.temperature = j.value("temperature", params.temperature);
  params.top_p = j.value("top_p", params.top_p);
  int top_k = j.value("top_k", -1);
  if (top_k > 0) params.top_k = top_k;
  params.repetition_penalty = j.value("repetition_penalty", params.repetition_penalty);
  params.max_tokens = j.value("max_tokens", params.max_tokens);
  if (j.contains("seed") && !j["seed"].is_null()) params.seed = j["seed"].get<std::uint64_t>();
}

void to_json(nlohmann::json& j, const ScriptEntry& entry) {
  j = nlohmann::json{{"content", entry.content}};
  if (entry.reasoning) j["reasoning"] = *entry.reasoning;
  if (entry.failure) j["fail"] = *entry.failure;
  if (entry.match) j["match"] = *entry.match;
  if (entry.tag) j["tag"] = *entry.tag;
  if (entry.sticky) j["sticky"] = true;
  if (entry.completion_tokens) j["completion_tokens"] = *entry.completion_tokens;
  if (entry.finish_reason != FinishReason::stop) j["finish_reason"] = to_string(entry.finish_reason);
  if (entry.delay.count() > 0) j["delay_ms"] = entry.delay.count();
}

void from_json(const nlohmann::json& j, ScriptEntry& entry) {
  entry = ScriptEntry{};
  entry.content = j.value("content", std::string{});
  auto opt = [&](const char* key) -> std::optional<std::string> {
    if (j.contains(key) && !j[key].is_null()) return j[key].get<std::string>();
    return std::nullopt;
  };
  entry.reasoning = opt("reasoning");
  entry.failure = opt("fail");
  entry.match = opt("match");
  entry.tag = opt("tag");
  entry.sticky = j.value("sticky", false);
  if (j.contains("completion_tokens")) entry.completion_tokens = j["completion_tokens"].get<std::size_t>();
  if (j.contains("finish_reason")) {
    entry.finish_reason = finish_reason_from_string(j["finish_reason"].get<std::string>());
  }
  entry.delay = std::chrono::milliseconds(j.value("delay_ms", 0));
}

std::vector<ScriptEntry> load_script(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open script file: " + path);
  std::string all((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  std::vector<ScriptEntry> script;
  auto start = all.find_first_not_of(" \t\r\n");
  if (start != std::string::npos && (all[start] == '[' || all[start] == '{')) {
    // Whole-document JSON: either an array or {"responses": [...]}.
    try {
      auto doc = nlohmann::json::parse(all);
      if (doc.is_object() && !doc.contains("responses")) {
        script.push_back(doc.get<ScriptEntry>());
        return script;
      }
      const auto& list = doc.is_array() ? doc : doc.at("responses");
      for (const auto& item : list) script.push_back(item.get<ScriptEntry>());
      return script;
    } catch (const nlohmann::json::parse_error&) {
      // fall through to JSONL
    }
  }
  std::size_t pos = 0;
  while (pos < all.size()) {
    auto end = all.find('\n', pos);
    if (end == std::string::npos) end = all.size();
    std::string_view line(all.data() + pos, end - pos);
    pos = end + 1;
    if (line.find_first_not_of(" \t\r") == std::string_view::npos) continue;
    script.push_back(nlohmann::json::parse(line).get<ScriptEntry>());
  }
  return script;
}

void to_json(nlohmann::json& j, const CallRecord& record) {
  j = nlohmann::json{{"agent", record.info.agent},
                     {"template", record.info.template_id},
                     {"session", record.info.session},
                     {"request", record.request},
                     {"response", record.response},
                     {"prompt_tokens", record.prompt_tokens},
                     {"completion_tokens", record.completion_tokens}};
}

std::uint64_t derive_seed(std::uint64_t base, std::string_view key, std::uint64_t index) {
  // FNV-1a over the key, then splitmix64 finalization.
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : key) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  std::uint64_t z = base ^ (h + 0x9e3779b97f4a7c15ULL + (index << 6) + (index >> 2));
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace rtlforge
