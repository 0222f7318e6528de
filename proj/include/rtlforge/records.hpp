#pragma once

// Dataset records and their line-delimited JSON form.

#include <filesystem>
#include <fstream>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "rtlforge/agents.hpp"
#include "rtlforge/harness.hpp"

namespace rtlforge {

struct SeedPair {
  std::string id;
  std::string problem;
  VerilogSource code;
  std::string source;
};

// Reads {"problem", "code", "source"[, "id"]} lines; missing ids become
// seed-0001, seed-0002, ... in file order.
std::vector<SeedPair> load_seeds(const std::filesystem::path& path);
void to_json(nlohmann::json& j, const SeedPair& s);

struct TrainingTuple {
  std::string id;
  RefinedProblem problem;
  std::string reasoning;
  VerilogSource code;
  VerilogSource testbench;
  nlohmann::json provenance = nlohmann::json::object();
};

void to_json(nlohmann::json& j, const TrainingTuple& t);
void from_json(const nlohmann::json& j, TrainingTuple& t);

enum class AttemptLabel { att_plus, att_minus };

std::string_view to_string(AttemptLabel label);

struct AttemptRecord {
  VerilogSource code;
  AttemptLabel label = AttemptLabel::att_minus;
  SimulationOutcome outcome;
  bool no_code = false;  // response had no code block; `code` holds the raw text
};

void to_json(nlohmann::json& j, const AttemptRecord& a);
void from_json(const nlohmann::json& j, AttemptRecord& a);

enum class CurriculumKind { test_only, test_and_debug };

std::string_view to_string(CurriculumKind kind);

struct CurriculumRecord {
  std::string id;
  TrainingTuple base;
  CurriculumKind kind = CurriculumKind::test_only;
  AttemptRecord attempt;
  TestReport review;
  std::optional<DebugPatch> patch;
  int debug_round = 0;  // 0 for test_only, else 1 or 2
};

void to_json(nlohmann::json& j, const CurriculumRecord& r);
void from_json(const nlohmann::json& j, CurriculumRecord& r);

// One line of dataset.jsonl: either a tuple or a curriculum record.
struct DatasetRecord {
  std::optional<TrainingTuple> tuple;
  std::optional<CurriculumRecord> curriculum;

  const std::string& id() const { return tuple ? tuple->id : curriculum->id; }
};

nlohmann::json dataset_line(const TrainingTuple& t);
nlohmann::json dataset_line(const CurriculumRecord& r);
DatasetRecord parse_dataset_line(const nlohmann::json& j);
std::vector<DatasetRecord> load_dataset(const std::filesystem::path& path);

struct LedgerEntry {
  std::string seed_id;
  std::string terminal;
  std::string detail;

  friend bool operator==(const LedgerEntry&, const LedgerEntry&) = default;
};

void to_json(nlohmann::json& j, const LedgerEntry& e);
void from_json(const nlohmann::json& j, LedgerEntry& e);

std::vector<nlohmann::json> read_jsonl(const std::filesystem::path& path);

// Serialized appender: one compact JSON document per line, flushed per write.
class JsonlWriter {
 public:
  explicit JsonlWriter(const std::filesystem::path& path, bool append = false);
  void write(const nlohmann::json& j);

 private:
  std::mutex mutex_;
  std::ofstream out_;
  std::filesystem::path path_;
};

template <typename T>
void write_jsonl(const std::filesystem::path& path, const std::vector<T>& items) {
  JsonlWriter w(path);
  for (const auto& item : items) w.write(nlohmann::json(item));
}

}  // namespace rtlforge
