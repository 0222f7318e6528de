#pragma once

#include <sys/wait.h>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include "rtlforge/gateway.hpp"
#include "rtlforge/harness.hpp"
#include "rtlforge/prompts.hpp"
#include "rtlforge/verilog.hpp"

namespace rtlforge::testing {

inline std::filesystem::path fixture_dir() { return RTLFORGE_FIXTURE_DIR; }

inline std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("missing fixture " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream(path, std::ios::binary) << text;
}

inline std::string design_text(const std::string& design, const std::string& file) {
  return read_text(fixture_dir() / "designs" / design / file);
}

inline VerilogSource design(const std::string& design, const std::string& file, Origin origin = Origin::benchmark) {
  return VerilogSource(design_text(design, file), origin, design + "/" + file);
}

inline std::string fenced(const std::string& code) { return "```verilog\n" + code + "```\n"; }

inline ScriptEntry reply(std::string tag, std::string match, std::string content,
                         std::optional<std::string> reasoning = std::nullopt) {
  ScriptEntry e;
  e.tag = std::move(tag);
  if (!match.empty()) e.match = std::move(match);
  e.content = std::move(content);
  e.reasoning = std::move(reasoning);
  return e;
}

inline std::shared_ptr<Gateway> scripted_gateway(std::vector<ScriptEntry> script,
                                                 std::shared_ptr<CallLog> log = nullptr) {
  return std::make_shared<Gateway>(scripted_backend(std::move(script)), std::move(log));
}

// One harness per process; its toolchain is detected once.
inline const Harness& shared_harness() {
  static const Harness harness{HarnessConfig{}};
  return harness;
}

inline bool simulator_available() {
  try {
    (void)shared_harness();
    return true;
  } catch (const ToolMissing&) {
    return false;
  }
}

inline const PromptLibrary& shared_prompts() {
  static const PromptLibrary prompts;
  return prompts;
}

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  TempDir() {
    auto pattern = (std::filesystem::temp_directory_path() / "rtlforge-test-XXXXXX").string();
    std::vector<char> buf(pattern.begin(), pattern.end());
    buf.push_back('\0');
    if (!mkdtemp(buf.data())) throw std::runtime_error("mkdtemp failed");
    path_ = buf.data();
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

struct CommandResult {
  int exit_code = -1;
  std::string output;
};

// Runs a shell command line, capturing stdout and stderr together.
inline CommandResult run_command(const std::string& command) {
  CommandResult r;
  FILE* pipe = popen((command + " 2>&1").c_str(), "r");
  if (!pipe) return r;
  char buf[4096];
  std::size_t n;
  while ((n = fread(buf, 1, sizeof buf, pipe)) > 0) r.output.append(buf, n);
  int status = pclose(pipe);
  r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

inline std::string cli_path() { return RTLFORGE_CLI_PATH; }

}  // namespace rtlforge::testing
