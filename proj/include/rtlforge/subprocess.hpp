#pragma once

#include <chrono>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace rtlforge {

struct ProcessResult {
  int exit_code = -1;  // -1 when killed by a signal
  int term_signal = 0;
  bool timed_out = false;
  std::string out;
  std::string err;
  std::chrono::milliseconds wall{0};

  bool ok() const { return !timed_out && exit_code == 0; }
};

struct ProcessOptions {
  std::filesystem::path cwd;
  std::chrono::milliseconds timeout{std::chrono::seconds(10)};
  // Captured output is written here (relative to cwd when not absolute);
  // defaults to <cwd>/stdout.txt and <cwd>/stderr.txt.
  std::optional<std::filesystem::path> stdout_file;
  std::optional<std::filesystem::path> stderr_file;
  std::map<std::string, std::string> env;  // added to / overriding the inherited environment
  std::size_t max_output_bytes = 8u << 20;
};

// Runs argv[0] (PATH-resolved) in its own process group. On timeout the whole
// group is killed. Throws ToolMissing when the executable cannot be started.
ProcessResult run_process(const std::vector<std::string>& argv, const ProcessOptions& options);

// Absolute path of `name` on PATH, if any.
std::optional<std::filesystem::path> find_on_path(const std::string& name);

// Process-wide cap on concurrently running tool processes.
class ProcessGate {
 public:
  static void set_limit(int limit);
  static int limit();

  class Ticket {
   public:
    Ticket();
    ~Ticket();
    Ticket(const Ticket&) = delete;
    Ticket& operator=(const Ticket&) = delete;
  };

  static int peak();
  static void reset_peak();
};

}  // namespace rtlforge
