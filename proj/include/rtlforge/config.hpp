#pragma once

// Run configuration: one YAML file per run, command-line flags on top.

#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>

#include "rtlforge/gateway.hpp"
#include "rtlforge/harness.hpp"
#include "rtlforge/inference.hpp"
#include "rtlforge/pipeline.hpp"

namespace rtlforge {

struct RunPaths {
  std::filesystem::path seeds;
  std::filesystem::path dataset = "out/dataset.jsonl";  // phase 1 tuples
  std::filesystem::path ledger = "out/ledger.jsonl";
  std::filesystem::path curriculum = "out/curriculum.jsonl";  // phase 2 records
  std::filesystem::path curriculum_ledger = "out/curriculum_ledger.jsonl";
  std::filesystem::path attempts = "out/attempts.jsonl";
  std::filesystem::path sft = "out/sft.jsonl";
  std::filesystem::path suite;
  std::filesystem::path results = "out/results.jsonl";
  std::filesystem::path report = "out/report.json";
  std::filesystem::path embeddings_a;
  std::filesystem::path embeddings_b;
  std::filesystem::path assets;  // empty: built-in asset directory
  std::filesystem::path calls;   // every model call of the run (JSONL); empty: not written
};

struct RunConfig {
  // Backends by role: teacher, student, eval.
  std::map<std::string, BackendSpec> backends;
  std::map<std::string, SamplingParams> sampling;
  Strategy strategy = Strategy::regular;
  std::optional<Budget> budget;
  int n = 20;
  std::vector<int> ks{1, 3, 5};
  int attempts_per_problem = 4;
  std::set<SftTask> sft_tasks{SftTask::solve, SftTask::test, SftTask::debug};
  std::size_t seq_cap = 16384;
  std::optional<std::chrono::milliseconds> sim_limit;
  HarnessConfig harness;
  RunPaths paths;
  int workers = 4;
  bool serial = false;
  bool deterministic = false;
  std::uint64_t seed = 0;

  // Pool width after the deterministic / serial switches.
  int width() const { return deterministic || serial ? 1 : std::max(1, workers); }

  const BackendSpec& backend(const std::string& role) const;
  SamplingParams params(const std::string& role) const;

  PipelineConfig pipeline() const;
  StrategyConfig strategy_config() const;

  // Structural checks (ranges, role presence is checked per command).
  void validate() const;
};

// Relative paths in the file resolve against the file's directory.
RunConfig load_run_config(const std::filesystem::path& path);
RunConfig parse_run_config(const std::string& yaml_text, const std::filesystem::path& base_dir = {});

// Throws ConfigError naming `what` unless `path` exists.
void require_path(const std::filesystem::path& path, std::string_view what);

}  // namespace rtlforge
