#include "rtlforge/records.hpp"

#include <cstdio>

namespace rtlforge {

std::vector<nlohmann::json> read_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open " + path.string());
  std::vector<nlohmann::json> lines;
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      lines.push_back(nlohmann::json::parse(line));
    } catch (const nlohmann::json::parse_error& e) {
      throw ParseFailure(path.string() + ":" + std::to_string(number) + ": " + e.what());
    }
  }
  return lines;
}

JsonlWriter::JsonlWriter(const std::filesystem::path& path, bool append) : path_(path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  out_.open(path, std::ios::binary | (append ? std::ios::app : std::ios::trunc));
  if (!out_) throw ConfigError("cannot write " + path.string());
}

void JsonlWriter::write(const nlohmann::json& j) {
  std::lock_guard lock(mutex_);
  out_ << j.dump() << '\n';
  out_.flush();
  if (!out_) throw Error("write failed: " + path_.string());
}

// --- seeds ----------------------------------------------------------------------

std::vector<SeedPair> load_seeds(const std::filesystem::path& path) {
  std::vector<SeedPair> seeds;
  for (const auto& j : read_jsonl(path)) {
    SeedPair s;
    char id[32];
    std::snprintf(id, sizeof id, "seed-%04zu", seeds.size() + 1);
    s.id = j.value("id", std::string(id));
    s.problem = j.at("problem").get<std::string>();
    s.code = VerilogSource(j.at("code").get<std::string>(), Origin::seed_corpus, s.id);
    s.source = j.value("source", std::string("unknown"));
    seeds.push_back(std::move(s));
  }
  return seeds;
}

void to_json(nlohmann::json& j, const SeedPair& s) {
  j = nlohmann::json{{"id", s.id}, {"problem", s.problem}, {"code", s.code.text}, {"source", s.source}};
}

// --- tuples -------------------------------------------------------------------------

void to_json(nlohmann::json& j, const TrainingTuple& t) {
  j = nlohmann::json{{"id", t.id},
                     {"problem", t.problem},
                     {"reasoning", t.reasoning},
                     {"code", t.code},
                     {"testbench", t.testbench},
                     {"provenance", t.provenance}};
}

void from_json(const nlohmann::json& j, TrainingTuple& t) {
  t.id = j.at("id").get<std::string>();
  t.problem = j.at("problem").get<RefinedProblem>();
  t.reasoning = j.value("reasoning", std::string());
  t.code = j.at("code").get<VerilogSource>();
  t.testbench = j.at("testbench").get<VerilogSource>();
  t.provenance = j.value("provenance", nlohmann::json::object());
}

std::string_view to_string(AttemptLabel label) { return label == AttemptLabel::att_plus ? "att_plus" : "att_minus"; }

void to_json(nlohmann::json& j, const AttemptRecord& a) {
  j = nlohmann::json{{"code", a.code}, {"label", to_string(a.label)}, {"outcome", a.outcome}};
  if (a.no_code) j["no_code"] = true;
}

void from_json(const nlohmann::json& j, AttemptRecord& a) {
  a.code = j.at("code").get<VerilogSource>();
  a.label = j.at("label").get<std::string>() == "att_plus" ? AttemptLabel::att_plus : AttemptLabel::att_minus;
  a.outcome = j.at("outcome").get<SimulationOutcome>();
  a.no_code = j.value("no_code", false);
}

std::string_view to_string(CurriculumKind kind) {
  return kind == CurriculumKind::test_only ? "test_only" : "test_and_debug";
}

void to_json(nlohmann::json& j, const CurriculumRecord& r) {
  j = nlohmann::json{{"id", r.id},
                     {"kind", to_string(r.kind)},
                     {"base", r.base},
                     {"attempt", r.attempt},
                     {"review", r.review},
                     {"debug_round", r.debug_round}};
  j["patch"] = r.patch ? nlohmann::json(*r.patch) : nlohmann::json(nullptr);
}

void from_json(const nlohmann::json& j, CurriculumRecord& r) {
  r.id = j.at("id").get<std::string>();
  auto kind = j.at("kind").get<std::string>();
  if (kind != "test_only" && kind != "test_and_debug") throw ParseFailure("unknown curriculum kind: " + kind);
  r.kind = kind == "test_only" ? CurriculumKind::test_only : CurriculumKind::test_and_debug;
  r.base = j.at("base").get<TrainingTuple>();
  r.attempt = j.at("attempt").get<AttemptRecord>();
  r.review = j.at("review").get<TestReport>();
  r.debug_round = j.value("debug_round", 0);
  if (j.contains("patch") && !j["patch"].is_null()) {
    r.patch = j["patch"].get<DebugPatch>();
  } else {
    r.patch.reset();
  }
}

nlohmann::json dataset_line(const TrainingTuple& t) {
  nlohmann::json j = t;
  nlohmann::json line = {{"kind", "tuple"}};
  line.update(j);
  return line;
}

nlohmann::json dataset_line(const CurriculumRecord& r) { return nlohmann::json(r); }

DatasetRecord parse_dataset_line(const nlohmann::json& j) {
  DatasetRecord rec;
  auto kind = j.value("kind", std::string());
  if (kind == "tuple") {
    rec.tuple = j.get<TrainingTuple>();
  } else if (kind == "test_only" || kind == "test_and_debug") {
    rec.curriculum = j.get<CurriculumRecord>();
  } else {
    throw ParseFailure("dataset record has unknown kind '" + kind + "'");
  }
  return rec;
}

std::vector<DatasetRecord> load_dataset(const std::filesystem::path& path) {
  std::vector<DatasetRecord> records;
  for (const auto& j : read_jsonl(path)) records.push_back(parse_dataset_line(j));
  return records;
}

void to_json(nlohmann::json& j, const LedgerEntry& e) {
  j = nlohmann::json{{"seed_id", e.seed_id}, {"terminal", e.terminal}, {"detail", e.detail}};
}

void from_json(const nlohmann::json& j, LedgerEntry& e) {
  e.seed_id = j.at("seed_id").get<std::string>();
  e.terminal = j.at("terminal").get<std::string>();
  e.detail = j.value("detail", std::string());
}

}  // namespace rtlforge
