#pragma once

#include <atomic>
#include <mutex>
#include <string>
#include <vector>

#include "json.hpp"
#include "rtlforge/gateway.hpp"

namespace rtlforge {

// Deterministic backend replaying a response script.
//
// Each request is served by the first unconsumed entry whose `tag` equals the
// request tag (when set) and whose `match` is a substring of the concatenated
// request contents (when set). With neither field set, entries are served in
// script order. Consumption is serialized; `delay` is slept outside the lock
// so concurrency can be observed.
class ScriptedBackend final : public ChatBackend {
 public:
  explicit ScriptedBackend(std::vector<ScriptEntry> script);

  Completion send(const ChatRequest& request) override;

  std::size_t served() const;
  std::size_t remaining() const;
  int peak_concurrency() const { return peak_.load(); }

 private:
  struct Slot {
    ScriptEntry entry;
    int failures_left = 0;
    bool refuse = false;
    bool consumed = false;
  };

  mutable std::mutex mutex_;
  std::vector<Slot> slots_;
  std::size_t served_ = 0;
  std::atomic<int> active_{0};
  std::atomic<int> peak_{0};
};

// OpenAI-compatible chat-completions client.
class HttpBackend final : public ChatBackend {
 public:
  explicit HttpBackend(BackendSpec spec);

  Completion send(const ChatRequest& request) override;

  // Request body exactly as sent on the wire.
  static nlohmann::json request_body(const ChatRequest& request);
  // Parses a chat-completions response body; throws TransportError on
  // malformed payloads.
  static Completion parse_response(const nlohmann::json& body);

 private:
  BackendSpec spec_;
  std::string scheme_host_port_;
  std::string base_path_;
};

}  // namespace rtlforge
