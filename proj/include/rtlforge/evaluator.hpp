#pragma once

// Benchmark scoring: pass@k, token cost and embedding-centroid similarity.

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "rtlforge/harness.hpp"
#include "rtlforge/inference.hpp"

namespace rtlforge {

struct ScoreCell {
  int n = 0;
  int c = 0;
  int k = 1;
};

// Probability that at least one of k samples drawn without replacement from
// n (c correct) is correct. Throws PreconditionError unless 0<=c<=n, 1<=k<=n.
double pass_at_k(const ScoreCell& cell);

enum class TaskFamily { generation, completion };

std::string_view to_string(TaskFamily family);
TaskFamily task_family_from_string(std::string_view text);

struct BenchmarkItem {
  std::string id;
  std::string prompt;
  VerilogSource golden_testbench;
  TaskFamily family = TaskFamily::generation;
  std::string suite;
  std::optional<VerilogSource> reference;
};

struct Suite {
  std::string name;
  PassConvention convention = PassConvention::sentinel;
  std::vector<BenchmarkItem> items;

  const BenchmarkItem* find(const std::string& id) const;
  std::vector<BatchProblem> problems() const;
};

// Manifest (JSON):
//   {"suite": name, "convention": "sentinel"|"mismatch_count"|"exit_code",
//    "items": [{"id", "prompt" | "prompt_file", "testbench_file",
//               "reference_file"?, "family"?}]}
// File paths are relative to the manifest's directory.
Suite load_suite(const std::filesystem::path& manifest);

struct ReferenceCheck {
  std::string item_id;
  SimulationOutcome outcome;
};

// Simulates each shipped reference against its golden testbench.
std::vector<ReferenceCheck> verify_suite(const Suite& suite, const Harness& harness, int width = 1);

struct ProblemScore {
  std::string id;
  int n = 0;
  int c = 0;
  std::map<int, double> pass_at;  // k -> probability
};

struct PassAtKReport {
  std::string suite;
  int n = 0;
  std::vector<ProblemScore> problems;    // suite order
  std::map<int, double> mean_percent;    // k -> mean pass@k * 100
  std::map<std::string, double> mean_completion_tokens;  // strategy -> mean
};

void to_json(nlohmann::json& j, const PassAtKReport& r);

// c counts results whose code passes the golden testbench; code=none fails.
// Throws MissingSamples unless every suite problem has the same n >= 1
// results. Ks above n are left out.
PassAtKReport score_run(const std::vector<SessionResult>& results, const Suite& suite, const Harness& harness,
                        const std::vector<int>& ks = {1, 3, 5}, int width = 1);

std::string render_text(const PassAtKReport& r);

struct EmbeddingSet {
  std::string label;
  std::vector<std::vector<double>> vectors;
};

// Lines {"label": ..., "vector": [...]} grouped by label, in first-seen order.
std::vector<EmbeddingSet> load_embeddings(const std::filesystem::path& path);

std::vector<double> centroid(const EmbeddingSet& set);

// Cosine of the two arithmetic-mean vectors.
double centroid_similarity(const EmbeddingSet& a, const EmbeddingSet& b);

struct CostRow {
  std::string strategy;
  std::size_t sessions = 0;
  double mean_completion_tokens = 0;
  std::optional<double> ratio;  // vs baseline; none without a baseline
};

struct CostTable {
  std::string baseline;
  std::vector<CostRow> rows;  // strategy name order
};

CostTable token_cost_report(const std::map<std::string, std::vector<SessionTranscript>>& by_strategy,
                            const std::string& baseline = "regular");
CostTable token_cost_report(const std::vector<SessionResult>& results, const std::string& baseline = "regular");

void to_json(nlohmann::json& j, const CostTable& t);
std::string render_text(const CostTable& t);

}  // namespace rtlforge
