#include "rtlforge/harness.hpp"

#include <fcntl.h>
#include <sys/file.h>
#include <unistd.h>

#include <array>
#include <climits>
#include <cstdlib>
#include <fstream>
#include <mutex>
#include <random>
#include <regex>
#include <set>
#include <sstream>

#include <spdlog/spdlog.h>

namespace fs = std::filesystem;

namespace rtlforge {

std::string_view to_string(SimStatus status) {
  switch (status) {
    case SimStatus::pass:
      return "pass";
    case SimStatus::test_failure:
      return "test_failure";
    case SimStatus::compile_error:
      return "compile_error";
    case SimStatus::runtime_error:
      return "runtime_error";
    case SimStatus::timeout:
      return "timeout";
  }
  return "compile_error";
}

SimStatus sim_status_from_string(std::string_view text) {
  static constexpr std::array kAll = {SimStatus::pass, SimStatus::test_failure, SimStatus::compile_error,
                                      SimStatus::runtime_error, SimStatus::timeout};
  for (auto s : kAll) {
    if (to_string(s) == text) return s;
  }
  throw ParseFailure("unknown simulation status: " + std::string(text));
}

void to_json(nlohmann::json& j, const SimulationOutcome& outcome) {
  // Wall time stays out of the serialized form so stored records are
  // reproducible byte for byte.
  j = nlohmann::json{
      {"status", to_string(outcome.status)}, {"tool_stdout", outcome.tool_stdout}, {"tool_stderr", outcome.tool_stderr}};
}

void from_json(const nlohmann::json& j, SimulationOutcome& outcome) {
  outcome.status = sim_status_from_string(j.at("status").get<std::string>());
  outcome.tool_stdout = j.value("tool_stdout", std::string());
  outcome.tool_stderr = j.value("tool_stderr", std::string());
  outcome.wall_time = std::chrono::milliseconds(j.value("wall_time_ms", std::int64_t{0}));
}

std::string_view to_string(PassConvention convention) {
  switch (convention) {
    case PassConvention::sentinel:
      return "sentinel";
    case PassConvention::mismatch_count:
      return "mismatch_count";
    case PassConvention::exit_code:
      return "exit_code";
  }
  return "sentinel";
}

PassConvention pass_convention_from_string(std::string_view text) {
  if (text == "sentinel") return PassConvention::sentinel;
  if (text == "mismatch_count") return PassConvention::mismatch_count;
  if (text == "exit_code") return PassConvention::exit_code;
  throw ConfigError("unknown pass convention: " + std::string(text));
}

namespace {

std::string_view trim(std::string_view s) {
  auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <typename F>
void for_each_line(std::string_view text, F&& f) {
  std::size_t pos = 0;
  while (pos <= text.size()) {
    auto nl = text.find('\n', pos);
    if (nl == std::string_view::npos) nl = text.size();
    f(text.substr(pos, nl - pos));
    pos = nl + 1;
  }
}

}  // namespace

SimStatus classify_run(PassConvention convention, const ProcessResult& run) {
  if (run.timed_out) return SimStatus::timeout;
  const bool clean = run.exit_code == 0 && run.term_signal == 0;

  switch (convention) {
    case PassConvention::sentinel: {
      bool sentinel = false;
      bool failure = false;
      for_each_line(run.out, [&](std::string_view line) {
        auto t = trim(line);
        if (t == kPassSentinel) sentinel = true;
        if (t.starts_with(kFailSentinel)) failure = true;
      });
      if (failure) return SimStatus::test_failure;
      if (!clean) return SimStatus::runtime_error;
      return sentinel ? SimStatus::pass : SimStatus::test_failure;
    }
    case PassConvention::mismatch_count: {
      static const std::regex kMismatch(R"(Mismatches:\s*(\d+)\s+in\s+(\d+)\s+samples)");
      std::smatch m;
      std::optional<long> mismatches;
      std::string out = run.out;
      for (auto it = std::sregex_iterator(out.begin(), out.end(), kMismatch); it != std::sregex_iterator(); ++it) {
        mismatches = std::stol((*it)[1].str());
      }
      if (mismatches && *mismatches > 0) return SimStatus::test_failure;
      if (!clean) return SimStatus::runtime_error;
      return mismatches ? SimStatus::pass : SimStatus::test_failure;
    }
    case PassConvention::exit_code:
      if (run.term_signal != 0) return SimStatus::runtime_error;
      return clean ? SimStatus::pass : SimStatus::test_failure;
  }
  return SimStatus::runtime_error;
}

std::vector<Diagnostic> parse_diagnostics(std::string_view log) {
  // %Error: dut.v:1:21: msg | %Warning-WIDTH: tb.v:3:5: msg | dut.v:3: syntax error
  static const std::regex kLine(
      R"(^(?:%(Error|Warning)(?:-[A-Z0-9_]+)?:\s*)?([^\s:]+\.(?:s?v|vh|svh)):(\d+):(?:(\d+):)?\s*(.*)$)");
  std::vector<Diagnostic> diags;
  for_each_line(log, [&](std::string_view raw) {
    std::string line(trim(raw));
    std::smatch m;
    if (!std::regex_match(line, m, kLine)) return;
    Diagnostic d;
    d.file = m[2].str();
    d.line = std::stoi(m[3].str());
    if (m[4].matched) d.column = std::stoi(m[4].str());
    std::string message = m[5].str();
    if (m[1].matched) {
      d.severity = m[1].str() == "Warning" ? "warning" : "error";
    } else {
      auto lower = message;
      for (auto& c : lower) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
      d.severity = lower.starts_with("warning") ? "warning" : "error";
    }
    d.message = std::move(message);
    diags.push_back(std::move(d));
  });
  return diags;
}

namespace {

fs::path default_cache_dir() {
  if (const char* xdg = std::getenv("XDG_CACHE_HOME"); xdg && *xdg) return fs::path(xdg) / "rtlforge";
  if (const char* home = std::getenv("HOME"); home && *home) return fs::path(home) / ".cache" / "rtlforge";
  return fs::temp_directory_path() / "rtlforge-cache";
}

fs::path make_temp_dir(const fs::path& root, const std::string& prefix) {
  fs::create_directories(root);
  std::string templ = (root / (prefix + "XXXXXX")).string();
  if (!::mkdtemp(templ.data())) throw Error("cannot create scratch directory under " + root.string());
  return templ;
}

// Runs a short query command and returns trimmed stdout, or nullopt.
std::optional<std::string> query(const std::vector<std::string>& argv) {
  if (!find_on_path(argv[0])) return std::nullopt;
  auto dir = make_temp_dir(fs::temp_directory_path(), "rtlforge-query-");
  std::optional<std::string> answer;
  try {
    ProcessOptions opts;
    opts.cwd = dir;
    opts.timeout = std::chrono::seconds(30);
    auto r = run_process(argv, opts);
    if (r.ok()) answer = std::string(trim(r.out.substr(0, r.out.find('\n'))));
  } catch (const Error&) {
  }
  std::error_code ec;
  fs::remove_all(dir, ec);
  if (answer && answer->empty()) answer.reset();
  return answer;
}

void write_file(const fs::path& path, std::string_view text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
  if (!text.empty() && text.back() != '\n') out << '\n';
  if (!out) throw Error("cannot write " + path.string());
}

// --- icarus -----------------------------------------------------------------

class IcarusToolchain final : public Toolchain {
 public:
  std::string name() const override { return "icarus"; }

  BuildResult check(const fs::path& dir, const std::vector<std::string>& files,
                    std::chrono::milliseconds timeout) const override {
    std::vector<std::string> argv = {"iverilog", "-g2012", "-t", "null"};
    argv.insert(argv.end(), files.begin(), files.end());
    return finish(dir, argv, timeout);
  }

  BuildResult build(const fs::path& dir, const std::vector<std::string>& files, const std::string& top,
                    std::chrono::milliseconds timeout) const override {
    std::vector<std::string> argv = {"iverilog", "-g2012", "-s", top, "-o", "sim.vvp"};
    argv.insert(argv.end(), files.begin(), files.end());
    return finish(dir, argv, timeout);
  }

  ProcessResult run(const fs::path& dir, std::chrono::milliseconds timeout) const override {
    ProcessOptions opts;
    opts.cwd = dir;
    opts.timeout = timeout;
    return run_process({"vvp", "-n", "sim.vvp"}, opts);
  }

 private:
  static BuildResult finish(const fs::path& dir, const std::vector<std::string>& argv,
                            std::chrono::milliseconds timeout) {
    ProcessOptions opts;
    opts.cwd = dir;
    opts.timeout = timeout;
    opts.stdout_file = "build.stdout.txt";
    opts.stderr_file = "build.stderr.txt";
    BuildResult b;
    b.last = run_process(argv, opts);
    b.ok = b.last.ok();
    b.log = b.last.out + b.last.err;
    return b;
  }
};

// --- verilator --------------------------------------------------------------

class VerilatorToolchain final : public Toolchain {
 public:
  VerilatorToolchain(fs::path root, fs::path cache_dir) : root_(std::move(root)), cache_dir_(std::move(cache_dir)) {}

  std::string name() const override { return "verilator"; }

  BuildResult check(const fs::path& dir, const std::vector<std::string>& files,
                    std::chrono::milliseconds timeout) const override {
    std::vector<std::string> argv = frontend_argv();
    argv.push_back("--lint-only");
    argv.insert(argv.end(), files.begin(), files.end());
    return step(dir, argv, timeout);
  }

  BuildResult build(const fs::path& dir, const std::vector<std::string>& files, const std::string& top,
                    std::chrono::milliseconds timeout) const override {
    const auto runtime = ensure_runtime();
    const auto start = std::chrono::steady_clock::now();
    std::vector<std::string> argv = frontend_argv();
    for (std::string a : {"--cc", "--main", "--prefix", "Vsim", "--top-module"}) argv.push_back(a);
    argv.push_back(top);
    for (std::string a : {std::string("--converge-limit"), std::to_string(INT_MAX), std::string("-Mdir"), std::string("obj")}) argv.push_back(a);
    argv.insert(argv.end(), files.begin(), files.end());
    auto front = step(dir, argv, timeout);
    if (!front.ok) return front;

    std::ostringstream unity;
    std::vector<fs::path> units;
    for (const auto& entry : fs::directory_iterator(dir / "obj")) {
      if (entry.path().extension() == ".cpp") units.push_back(entry.path().filename());
    }
    std::sort(units.begin(), units.end());
    for (const auto& u : units) unity << "#include \"obj/" << u.string() << "\"\n";
    write_file(dir / "all.cpp", unity.str());

    auto spent = std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() - start);
    std::vector<std::string> cc = compiler_argv();
    cc.push_back("-I.");
    cc.push_back("all.cpp");
    for (const char* obj : kRuntimeUnits) cc.push_back((runtime / (std::string(obj) + ".o")).string());
    for (std::string a : {"-pthread", "-latomic", "-o", "sim"}) cc.push_back(a);
    auto back = step(dir, cc, std::max(timeout - spent, std::chrono::milliseconds(1000)));
    back.log = front.log + back.log;
    return back;
  }

  ProcessResult run(const fs::path& dir, std::chrono::milliseconds timeout) const override {
    ProcessOptions opts;
    opts.cwd = dir;
    opts.timeout = timeout;
    auto r = run_process({(dir / "sim").string()}, opts);
    r.out = drop_run_report(r.out);
    return r;
  }

 private:
  // The end-of-run report carries wall-clock figures; it is not design output.
  static std::string drop_run_report(const std::string& out) {
    std::string kept;
    std::istringstream in(out);
    std::string line;
    while (std::getline(in, line)) {
      if (line.starts_with("- S i m u l a t i o n") || line.starts_with("- Verilator:")) continue;
      kept += line;
      kept += '\n';
    }
    return kept;
  }

  static constexpr std::array<const char*, 3> kRuntimeUnits = {"verilated", "verilated_timing", "verilated_threads"};

  std::vector<std::string> frontend_argv() const {
    return {(root_ / "bin" / "verilator_bin").string(),
            "--timing",
            "--timescale",
            "1ns/1ps",
            "-Wno-fatal",
            "-Wno-lint",
            "-Wno-style",
            "-Wno-TIMESCALEMOD",
            "-Wno-MULTITOP"};
  }

  std::vector<std::string> compiler_argv() const {
    const auto inc = root_ / "include";
    return {"g++",
            "-std=c++20",
            "-O0",
            "-fcoroutines",
            "-w",
            "-I" + inc.string(),
            "-I" + (inc / "vltstd").string(),
            "-DVERILATOR=1",
            "-DVM_COVERAGE=0",
            "-DVM_SC=0",
            "-DVM_TIMING=1",
            "-DVM_TRACE=0",
            "-DVM_TRACE_FST=0",
            "-DVM_TRACE_VCD=0",
            "-DVM_TRACE_SAIF=0"};
  }

  BuildResult step(const fs::path& dir, const std::vector<std::string>& argv,
                   std::chrono::milliseconds timeout) const {
    ProcessOptions opts;
    opts.cwd = dir;
    opts.timeout = timeout;
    opts.stdout_file = "build.stdout.txt";
    opts.stderr_file = "build.stderr.txt";
    opts.env["VERILATOR_ROOT"] = root_.string();
    BuildResult b;
    b.last = run_process(argv, opts);
    b.ok = b.last.ok();
    b.log = b.last.out + b.last.err;
    return b;
  }

  // Runtime support objects, compiled once per (root, flags) and shared by
  // every later build.
  fs::path ensure_runtime() const {
    std::lock_guard lock(runtime_mutex_);
    if (!runtime_dir_.empty()) return runtime_dir_;

    std::string key = root_.string();
    for (const auto& a : compiler_argv()) key += " " + a;
    std::error_code ec;
    auto bin = root_ / "bin" / "verilator_bin";
    key += std::to_string(fs::file_size(bin, ec));
    std::ostringstream hex;
    hex << std::hex << std::hash<std::string>{}(key);
    const fs::path final_dir = cache_dir_ / ("verilator-runtime-" + hex.str());

    auto complete = [&] {
      for (const char* u : kRuntimeUnits) {
        if (!fs::exists(final_dir / (std::string(u) + ".o"))) return false;
      }
      return true;
    };
    if (!complete()) {
      fs::create_directories(cache_dir_);
      const auto lock_path = (cache_dir_ / ".lock").string();
      int fd = ::open(lock_path.c_str(), O_RDWR | O_CREAT, 0644);
      if (fd >= 0) ::flock(fd, LOCK_EX);
      try {
        if (!complete()) {
          spdlog::info("compiling simulator runtime into {}", final_dir.string());
          auto tmp = make_temp_dir(cache_dir_, "tmp-runtime-");
          for (const char* u : kRuntimeUnits) {
            auto argv = compiler_argv();
            argv.push_back("-c");
            argv.push_back((root_ / "include" / (std::string(u) + ".cpp")).string());
            argv.push_back("-o");
            argv.push_back((tmp / (std::string(u) + ".o")).string());
            auto b = step(tmp, argv, std::chrono::minutes(10));
            if (!b.ok) {
              fs::remove_all(tmp, ec);
              throw ToolMissing("cannot compile simulator runtime " + std::string(u) + ": " + b.log.substr(0, 2000));
            }
          }
          fs::remove(tmp / "build.stdout.txt", ec);
          fs::remove(tmp / "build.stderr.txt", ec);
          fs::remove_all(final_dir, ec);
          fs::rename(tmp, final_dir);
        }
      } catch (...) {
        if (fd >= 0) ::close(fd);
        throw;
      }
      if (fd >= 0) ::close(fd);
    }
    runtime_dir_ = final_dir;
    return runtime_dir_;
  }

  fs::path root_;
  fs::path cache_dir_;
  mutable std::mutex runtime_mutex_;
  mutable fs::path runtime_dir_;
};

bool valid_verilator_root(const fs::path& root) {
  return !root.empty() && fs::exists(root / "bin" / "verilator_bin") && fs::exists(root / "include" / "verilated.h");
}

std::optional<fs::path> locate_verilator(const HarnessConfig& config) {
  if (config.verilator_root) {
    if (valid_verilator_root(*config.verilator_root)) return *config.verilator_root;
    return std::nullopt;
  }
  if (const char* env = std::getenv("VERILATOR_ROOT"); env && valid_verilator_root(env)) return fs::path(env);
  if (auto root = query({"verilator", "--getenv", "VERILATOR_ROOT"}); root && valid_verilator_root(*root)) {
    return fs::path(*root);
  }
  if (find_on_path("verilator-cli")) {
    auto dir = query({"python3", "-c", "import os, verilator; print(os.path.dirname(verilator.__file__))"});
    if (dir && valid_verilator_root(*dir)) return fs::path(*dir);
  }
  return std::nullopt;
}

}  // namespace

std::shared_ptr<Toolchain> detect_toolchain(const HarnessConfig& config) {
  const auto& want = config.toolchain;
  if (want != "auto" && want != "icarus" && want != "verilator") {
    throw ConfigError("unknown toolchain: " + want);
  }
  const bool icarus_present = find_on_path("iverilog") && find_on_path("vvp");
  if (want == "icarus" || (want == "auto" && icarus_present)) {
    if (!icarus_present) throw ToolMissing("Icarus Verilog (iverilog/vvp) not found on PATH");
    return std::make_shared<IcarusToolchain>();
  }
  auto root = locate_verilator(config);
  if (!root) {
    throw ToolMissing(want == "verilator" ? "Verilator not found (set VERILATOR_ROOT or harness.verilator_root)"
                                          : "no Verilog simulator found: install Icarus Verilog (iverilog, vvp) "
                                            "or Verilator");
  }
  if (!find_on_path("g++")) throw ToolMissing("Verilator backend needs g++ on PATH");
  auto cache = config.cache_dir.empty() ? default_cache_dir() : config.cache_dir;
  return std::make_shared<VerilatorToolchain>(*root, cache);
}

Harness::Harness(HarnessConfig config) : Harness(config, detect_toolchain(config)) {}

Harness::Harness(HarnessConfig config, std::shared_ptr<Toolchain> toolchain)
    : config_(std::move(config)), toolchain_(std::move(toolchain)) {
  if (!toolchain_) throw PreconditionError("harness requires a toolchain");
  if (config_.max_parallel > 0) ProcessGate::set_limit(config_.max_parallel);
}

fs::path Harness::make_scratch() const {
  auto root = config_.scratch_root.empty() ? fs::temp_directory_path() : config_.scratch_root;
  return make_temp_dir(root, "rtlforge-");
}

void Harness::release_scratch(const fs::path& dir) const {
  if (config_.keep_scratch) return;
  std::error_code ec;
  fs::remove_all(dir, ec);
}

CompileReport Harness::compile_check(std::span<const VerilogSource> sources) const {
  if (sources.empty()) throw PreconditionError("compile_check requires at least one source");
  ProcessGate::Ticket ticket;
  const auto dir = make_scratch();
  CompileReport report;
  try {
    std::vector<std::string> files;
    for (std::size_t i = 0; i < sources.size(); ++i) {
      std::string file = sources.size() == 1 ? "dut.v" : "src" + std::to_string(i) + ".v";
      write_file(dir / file, sources[i].text);
      files.push_back(file);
    }
    auto b = toolchain_->check(dir, files, config_.compile_timeout);
    if (b.last.timed_out) {
      release_scratch(dir);
      throw ToolTimeout("compile check exceeded " + std::to_string(config_.compile_timeout.count()) + " ms");
    }
    report.ok = b.ok;
    report.log = b.log;
    report.diagnostics = parse_diagnostics(b.log);
  } catch (...) {
    release_scratch(dir);
    throw;
  }
  release_scratch(dir);
  return report;
}

SimulationOutcome Harness::simulate(const VerilogSource& dut, const VerilogSource& tb,
                                    std::optional<std::chrono::milliseconds> limit,
                                    PassConvention convention) const {
  const auto run_limit = limit.value_or(config_.sim_timeout);
  if (run_limit.count() <= 0) throw PreconditionError("simulation limit must be positive");
  const auto start = std::chrono::steady_clock::now();
  auto elapsed = [&] {
    return std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() - start);
  };

  SimulationOutcome outcome;
  const auto dut_modules = declared_modules(dut.text);
  const auto tb_modules = declared_modules(tb.text);
  const auto tb_instances = instantiated_modules(tb.text);
  std::set<std::string> dut_set(dut_modules.begin(), dut_modules.end());
  bool links = std::any_of(tb_instances.begin(), tb_instances.end(),
                           [&](const std::string& name) { return dut_set.contains(name); });
  std::string top;
  for (const auto& m : tb_modules) {
    if (std::find(tb_instances.begin(), tb_instances.end(), m) == tb_instances.end()) {
      top = m;
      break;
    }
  }
  if (!links || top.empty()) {
    outcome.status = SimStatus::compile_error;
    outcome.tool_stderr = top.empty() ? "harness: testbench declares no top-level module\n"
                                      : "harness: testbench does not instantiate any module declared by the DUT\n";
    outcome.wall_time = elapsed();
    return outcome;
  }

  ProcessGate::Ticket ticket;
  const auto dir = make_scratch();
  try {
    write_file(dir / "dut.v", dut.text);
    write_file(dir / "tb.v", tb.text);
    auto b = toolchain_->build(dir, {"dut.v", "tb.v"}, top, config_.compile_timeout);
    if (!b.ok) {
      outcome.status = b.last.timed_out ? SimStatus::timeout : SimStatus::compile_error;
      outcome.tool_stdout = b.last.out;
      outcome.tool_stderr = b.log;
    } else {
      auto run = toolchain_->run(dir, run_limit);
      outcome.status = classify_run(convention, run);
      outcome.tool_stdout = std::move(run.out);
      outcome.tool_stderr = std::move(run.err);
    }
  } catch (...) {
    release_scratch(dir);
    throw;
  }
  release_scratch(dir);
  outcome.wall_time = elapsed();
  return outcome;
}

}  // namespace rtlforge
