#include "rtlforge/backends.hpp"

#include <charconv>
#include <cstdlib>
#include <thread>

#define CPPHTTPLIB_OPENSSL_SUPPORT
#include "httplib.h"

namespace rtlforge {

namespace {

struct FailurePlan {
  int transient = 0;
  bool refuse = false;
};

FailurePlan parse_failure(const std::optional<std::string>& directive) {
  FailurePlan plan;
  if (!directive || directive->empty()) return plan;
  std::string_view text = *directive;
  if (text == "refuse") {
    plan.refuse = true;
    return plan;
  }
  std::string_view kind = text;
  std::string_view count;
  for (std::string_view sep : {std::string_view("\xC3\x97"), std::string_view("*"), std::string_view("x")}) {
    auto at = text.rfind(sep);
    if (at != std::string_view::npos && at > 0) {
      kind = text.substr(0, at);
      count = text.substr(at + sep.size());
      break;
    }
  }
  if (kind != "timeout" && kind != "error") {
    throw ConfigError("unknown failure directive: " + std::string(text));
  }
  plan.transient = 1;
  if (!count.empty()) {
    auto [ptr, ec] = std::from_chars(count.data(), count.data() + count.size(), plan.transient);
    if (ec != std::errc() || ptr != count.data() + count.size() || plan.transient < 0) {
      throw ConfigError("bad failure count in directive: " + std::string(text));
    }
  }
  return plan;
}

std::string request_text(const ChatRequest& request) {
  std::string text;
  for (const auto& m : request.messages) {
    text += m.content;
    text += '\n';
  }
  return text;
}

}  // namespace

// --- scripted ---------------------------------------------------------------

ScriptedBackend::ScriptedBackend(std::vector<ScriptEntry> script) {
  if (script.empty()) throw PreconditionError("scripted backend requires a non-empty script");
  slots_.reserve(script.size());
  for (auto& entry : script) {
    auto plan = parse_failure(entry.failure);
    slots_.push_back(Slot{std::move(entry), plan.transient, plan.refuse, false});
  }
}

Completion ScriptedBackend::send(const ChatRequest& request) {
  int now = ++active_;
  int prev = peak_.load();
  while (now > prev && !peak_.compare_exchange_weak(prev, now)) {
  }
  struct Leave {
    std::atomic<int>& active;
    ~Leave() { --active; }
  } leave{active_};

  const std::string text = request_text(request);
  ScriptEntry entry;
  {
    std::lock_guard lock(mutex_);
    Slot* chosen = nullptr;
    for (auto& slot : slots_) {
      if (slot.consumed) continue;
      if (slot.entry.tag && *slot.entry.tag != request.tag) continue;
      if (slot.entry.match && text.find(*slot.entry.match) == std::string::npos) continue;
      chosen = &slot;
      break;
    }
    if (!chosen) {
      throw ScriptExhausted("script has no response for request #" + std::to_string(served_ + 1) +
                            (request.tag.empty() ? "" : " (tag " + std::string(request.tag) + ")"));
    }
    if (chosen->refuse) throw BackendRefused("scripted refusal");
    if (chosen->failures_left > 0) {
      --chosen->failures_left;
      throw TransportError("scripted transient failure");
    }
    if (!chosen->entry.sticky) chosen->consumed = true;
    ++served_;
    entry = chosen->entry;
  }
  if (entry.delay.count() > 0) std::this_thread::sleep_for(entry.delay);

  Completion completion;
  completion.message = ChatMessage::assistant(entry.content, entry.reasoning);
  completion.prompt_tokens = whitespace_tokens(text);
  completion.completion_tokens =
      entry.completion_tokens.value_or(whitespace_tokens(entry.content) +
                                       (entry.reasoning ? whitespace_tokens(*entry.reasoning) : 0));
  completion.finish_reason = entry.finish_reason;
  return completion;
}

std::size_t ScriptedBackend::served() const {
  std::lock_guard lock(mutex_);
  return served_;
}

std::size_t ScriptedBackend::remaining() const {
  std::lock_guard lock(mutex_);
  std::size_t n = 0;
  for (const auto& slot : slots_) n += slot.consumed ? 0 : 1;
  return n;
}

// --- http -------------------------------------------------------------------

HttpBackend::HttpBackend(BackendSpec spec) : spec_(std::move(spec)) {
  const std::string& url = spec_.endpoint;
  auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) throw ConfigError("endpoint must be an absolute URL: " + url);
  auto path_begin = url.find('/', scheme_end + 3);
  scheme_host_port_ = url.substr(0, path_begin);
  base_path_ = path_begin == std::string::npos ? "" : url.substr(path_begin);
  while (!base_path_.empty() && base_path_.back() == '/') base_path_.pop_back();
}

nlohmann::json HttpBackend::request_body(const ChatRequest& request) {
  nlohmann::json messages = nlohmann::json::array();
  for (const auto& m : request.messages) {
    messages.push_back({{"role", to_string(m.role)}, {"content", m.content}});
  }
  nlohmann::json body = request.params;
  body["model"] = std::string(request.model_id);
  body["messages"] = std::move(messages);
  return body;
}

Completion HttpBackend::parse_response(const nlohmann::json& body) {
  try {
    const auto& choice = body.at("choices").at(0);
    const auto& message = choice.at("message");
    Completion completion;
    completion.message.role = Role::assistant;
    if (message.contains("content") && message["content"].is_string()) {
      completion.message.content = message["content"].get<std::string>();
    }
    for (const char* key : {"reasoning_content", "reasoning"}) {
      if (message.contains(key) && message[key].is_string() && !message[key].get<std::string>().empty()) {
        completion.message.reasoning = message[key].get<std::string>();
        break;
      }
    }
    if (choice.contains("finish_reason") && choice["finish_reason"].is_string()) {
      completion.finish_reason = finish_reason_from_string(choice["finish_reason"].get<std::string>());
    }
    if (body.contains("usage") && body["usage"].is_object()) {
      completion.prompt_tokens = body["usage"].value("prompt_tokens", std::size_t{0});
      completion.completion_tokens = body["usage"].value("completion_tokens", std::size_t{0});
    }
    return completion;
  } catch (const nlohmann::json::exception& e) {
    throw TransportError(std::string("malformed chat-completions response: ") + e.what());
  }
}

Completion HttpBackend::send(const ChatRequest& request) {
  httplib::Client client(scheme_host_port_);
  auto seconds = std::chrono::duration_cast<std::chrono::seconds>(spec_.timeout);
  client.set_connection_timeout(std::chrono::seconds(30));
  client.set_read_timeout(seconds);
  client.set_write_timeout(std::chrono::seconds(60));

  httplib::Headers headers;
  if (!spec_.api_key_env.empty()) {
    if (const char* key = std::getenv(spec_.api_key_env.c_str()); key && *key) {
      headers.emplace("Authorization", std::string("Bearer ") + key);
    }
  }
  auto result = client.Post(base_path_ + "/chat/completions", headers, request_body(request).dump(),
                            "application/json");
  if (!result) {
    throw TransportError("transport failure: " + httplib::to_string(result.error()));
  }
  const int status = result->status;
  if (status == 408 || status == 429 || status >= 500) {
    throw TransportError("endpoint returned HTTP " + std::to_string(status));
  }
  if (status >= 400) {
    throw BackendRefused("endpoint refused request with HTTP " + std::to_string(status) + ": " +
                         result->body.substr(0, 512));
  }
  nlohmann::json body;
  try {
    body = nlohmann::json::parse(result->body);
  } catch (const nlohmann::json::parse_error& e) {
    throw TransportError(std::string("unparsable response body: ") + e.what());
  }
  return parse_response(body);
}

}  // namespace rtlforge
