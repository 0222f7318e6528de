#pragma once

// Compile and simulate DUT + testbench pairs with an external Verilog
// toolchain, each run inside its own scratch directory.

#include <chrono>
#include <filesystem>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "rtlforge/subprocess.hpp"
#include "rtlforge/verilog.hpp"

namespace rtlforge {

enum class SimStatus { pass, test_failure, compile_error, runtime_error, timeout };

std::string_view to_string(SimStatus status);
SimStatus sim_status_from_string(std::string_view text);

struct SimulationOutcome {
  SimStatus status = SimStatus::compile_error;
  std::string tool_stdout;
  std::string tool_stderr;
  std::chrono::milliseconds wall_time{0};

  bool passed() const { return status == SimStatus::pass; }
};

void to_json(nlohmann::json& j, const SimulationOutcome& outcome);
void from_json(const nlohmann::json& j, SimulationOutcome& outcome);

struct Diagnostic {
  std::string file;
  std::optional<int> line;
  std::optional<int> column;
  std::string severity;  // "error" or "warning"
  std::string message;
};

struct CompileReport {
  bool ok = false;
  std::vector<Diagnostic> diagnostics;
  std::string log;
};

// How a testbench signals success.
enum class PassConvention {
  sentinel,        // ALL_TESTS_PASSED / TEST_FAILED: <msg>
  mismatch_count,  // "Mismatches: 0 in N samples"
  exit_code,       // clean exit is a pass
};

std::string_view to_string(PassConvention convention);
PassConvention pass_convention_from_string(std::string_view text);

inline constexpr std::string_view kPassSentinel = "ALL_TESTS_PASSED";
inline constexpr std::string_view kFailSentinel = "TEST_FAILED:";

// Pure classification of a finished simulator run.
SimStatus classify_run(PassConvention convention, const ProcessResult& run);

// Parses "file:line[:col]: message" lines from either toolchain.
std::vector<Diagnostic> parse_diagnostics(std::string_view log);

struct HarnessConfig {
  std::string toolchain = "auto";  // auto | icarus | verilator
  std::optional<std::filesystem::path> verilator_root;
  std::filesystem::path cache_dir;    // empty: $XDG_CACHE_HOME/rtlforge or ~/.cache/rtlforge
  std::filesystem::path scratch_root; // empty: system temp dir
  std::chrono::milliseconds sim_timeout{std::chrono::seconds(10)};
  std::chrono::milliseconds compile_timeout{std::chrono::seconds(120)};
  int max_parallel = 0;  // 0 keeps the process-wide default
  bool keep_scratch = false;
};

struct BuildResult {
  bool ok = false;
  std::string log;
  ProcessResult last;
};

class Toolchain {
 public:
  virtual ~Toolchain() = default;
  virtual std::string name() const = 0;
  // Syntax/elaboration check of `files` (all inside dir).
  virtual BuildResult check(const std::filesystem::path& dir, const std::vector<std::string>& files,
                            std::chrono::milliseconds timeout) const = 0;
  // Builds a runnable image with `top` as root.
  virtual BuildResult build(const std::filesystem::path& dir, const std::vector<std::string>& files,
                            const std::string& top, std::chrono::milliseconds timeout) const = 0;
  virtual ProcessResult run(const std::filesystem::path& dir, std::chrono::milliseconds timeout) const = 0;
};

// Resolves a toolchain per config; throws ToolMissing when none is usable.
std::shared_ptr<Toolchain> detect_toolchain(const HarnessConfig& config);

class Harness {
 public:
  explicit Harness(HarnessConfig config = {});
  Harness(HarnessConfig config, std::shared_ptr<Toolchain> toolchain);

  CompileReport compile_check(std::span<const VerilogSource> sources) const;

  SimulationOutcome simulate(const VerilogSource& dut, const VerilogSource& tb,
                             std::optional<std::chrono::milliseconds> limit = std::nullopt,
                             PassConvention convention = PassConvention::sentinel) const;

  const HarnessConfig& config() const { return config_; }
  const Toolchain& toolchain() const { return *toolchain_; }

 private:
  std::filesystem::path make_scratch() const;
  void release_scratch(const std::filesystem::path& dir) const;

  HarnessConfig config_;
  std::shared_ptr<Toolchain> toolchain_;
};

}  // namespace rtlforge
