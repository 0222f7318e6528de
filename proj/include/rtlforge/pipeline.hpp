#pragma once

// Phase 1 (tuple generation) and Phase 2 (test/debug curriculum) orchestration,
// SFT export and dataset re-verification.

#include <atomic>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "rtlforge/agents.hpp"
#include "rtlforge/harness.hpp"
#include "rtlforge/records.hpp"

namespace rtlforge {

// Phase 1 terminal states.
namespace terminal {
inline constexpr std::string_view accepted = "accepted";
inline constexpr std::string_view discarded_compile = "discarded_compile";
inline constexpr std::string_view discarded_revision = "discarded_revision";
inline constexpr std::string_view discarded_failed_twice = "discarded_failed_twice";
inline constexpr std::string_view discarded_backend_error = "discarded_backend_error";

// Phase 2
inline constexpr std::string_view accepted_test_only = "accepted_test_only";
inline constexpr std::string_view accepted_debug_first_round = "accepted_debug_first_round";
inline constexpr std::string_view accepted_debug_second_round = "accepted_debug_second_round";
inline constexpr std::string_view dropped_disagreement = "dropped_disagreement";
inline constexpr std::string_view dropped_unparsable_review = "dropped_unparsable_review";
inline constexpr std::string_view dropped_debug_failed = "dropped_debug_failed";
inline constexpr std::string_view dropped_no_code = "dropped_no_code";
inline constexpr std::string_view dropped_backend_error = "dropped_backend_error";
}  // namespace terminal

// Route of an accepted Phase 1 seed (ledger detail).
namespace route {
inline constexpr std::string_view first_pass = "first_pass";
inline constexpr std::string_view solution_retry = "solution_retry";
inline constexpr std::string_view testbench_repair = "testbench_repair";
}  // namespace route

struct PipelineConfig {
  int workers = 4;
  bool serial = false;  // one seed at a time, no intra-seed concurrency
  int attempts_per_problem = 4;
  std::optional<std::chrono::milliseconds> sim_limit;  // harness default when unset
  SamplingParams teacher_params;
  SamplingParams student_params;
  std::optional<std::uint64_t> seed;  // base for per-sample sampling seeds
  const std::atomic<bool>* cancel = nullptr;

  int width() const { return serial ? 1 : std::max(1, workers); }
};

struct Phase1Result {
  std::vector<TrainingTuple> dataset;
  std::vector<LedgerEntry> ledger;  // seed order
};

Phase1Result run_phase1(std::span<const SeedPair> seeds, Gateway& teacher, const Harness& harness,
                        const PromptLibrary& prompts, const PipelineConfig& config);

struct ProblemAttempts {
  std::string tuple_id;
  std::vector<AttemptRecord> attempts;  // sampling order
};

std::vector<ProblemAttempts> sample_attempts(std::span<const TrainingTuple> dataset, Gateway& student,
                                             const Harness& harness, const PromptLibrary& prompts,
                                             const PipelineConfig& config);

struct BalancedProblem {
  std::string tuple_id;
  std::vector<std::size_t> plus;   // indices into the problem's attempt list
  std::vector<std::size_t> minus;
};

// Keeps problems with at least one failing attempt, removes byte-identical
// duplicate codes (first kept), truncates the larger class to the smaller
// one's size in sampling order. Problems left empty are dropped.
std::vector<BalancedProblem> select_and_balance(std::span<const ProblemAttempts> attempts);

struct Phase2Result {
  std::vector<CurriculumRecord> dataset;
  std::vector<LedgerEntry> ledger;  // one entry per balanced attempt
  std::vector<ProblemAttempts> attempts;
  std::vector<BalancedProblem> balanced;
};

Phase2Result run_phase2(std::span<const TrainingTuple> dataset, Gateway& student, Gateway& teacher,
                        const Harness& harness, const PromptLibrary& prompts, const PipelineConfig& config);

// Phase 2 for attempts that were already sampled and labeled.
Phase2Result run_phase2_on(std::span<const TrainingTuple> dataset, std::vector<ProblemAttempts> attempts,
                           Gateway& teacher, const Harness& harness, const PromptLibrary& prompts,
                           const PipelineConfig& config);

// --- SFT export -------------------------------------------------------------

enum class SftTask { solve, test, debug };

std::string_view to_string(SftTask task);
SftTask sft_task_from_string(std::string_view text);

struct SftSample {
  SftTask task = SftTask::solve;
  std::string record_id;
  std::vector<ChatMessage> input_messages;
  std::string target_reasoning;
  std::string target_answer;

  std::size_t tokens() const;
};

void to_json(nlohmann::json& j, const SftSample& s);

struct SftExport {
  std::vector<SftSample> samples;
  std::size_t skipped_over_cap = 0;
};

SftExport export_sft(std::span<const DatasetRecord> records, const std::set<SftTask>& tasks, std::size_t seq_cap,
                     const PromptLibrary& prompts);

// --- audit --------------------------------------------------------------------

struct AuditViolation {
  std::string record_id;
  std::string reason;
};

struct AuditReport {
  std::size_t records = 0;
  std::size_t simulations = 0;
  std::vector<AuditViolation> violations;

  bool clean() const { return violations.empty(); }
};

// Re-simulates every tuple and every test_and_debug patch against its
// testbench and re-checks each curriculum record's invariants.
AuditReport audit_dataset(std::span<const DatasetRecord> records, const Harness& harness, int width = 1,
                          const std::atomic<bool>* cancel = nullptr);

}  // namespace rtlforge
