#include <gtest/gtest.h>

#include "rtlforge/records.hpp"
#include "scenarios.hpp"
#include "support.hpp"

using namespace rtlforge;
using namespace rtlforge::testing;

namespace {

#define REQUIRE_SIMULATOR() \
  if (!simulator_available()) GTEST_SKIP() << "no Verilog simulator installed"

CommandResult cli(const std::string& args) { return run_command(cli_path() + " --log-level off " + args); }

std::string q(const std::filesystem::path& p) { return "'" + p.string() + "'"; }

// Eval backend that always answers with the adder reference.
std::filesystem::path write_infer_workspace(const std::filesystem::path& dir, const std::string& extra = {}) {
  ScriptEntry e;
  e.content = fenced(design_text("adder", "ref.v"));
  e.sticky = true;
  write_jsonl(dir / "eval.jsonl", std::vector<ScriptEntry>{e});
  write_text(dir / "run.yaml", "n: 3\nworkers: 2\nbackends:\n  eval: {kind: scripted, script: eval.jsonl}\n"
                               "sampling:\n  eval: {top_p: 0.9}\npaths: {suite: " +
                                   (fixture_dir() / "suite" / "toy.json").string() + "}\n" + extra);
  return dir / "run.yaml";
}

}  // namespace

TEST(Cli, HelpListsCommandsAndFlags) {
  auto top = cli("--help");
  EXPECT_EQ(top.exit_code, 0);
  for (const char* cmd : {"phase1", "phase2", "export", "infer", "eval", "audit", "similarity"})
    EXPECT_NE(top.output.find(cmd), std::string::npos) << cmd;
  auto infer = cli("infer --help");
  EXPECT_EQ(infer.exit_code, 0);
  for (const char* flag : {"--config", "--strategy", "--budget", "--n", "--topp", "--serial", "--seed", "--workers"})
    EXPECT_NE(infer.output.find(flag), std::string::npos) << flag;
}

TEST(Cli, MissingSubcommandIsAUsageError) { EXPECT_NE(cli("").exit_code, 0); }

TEST(Cli, MissingSeedsIsAConfigError) {
  TempDir dir;
  write_text(dir / "run.yaml", "backends:\n  teacher: {kind: scripted, script: t.jsonl}\n");
  write_text(dir / "t.jsonl", "{\"content\": \"x\"}\n");
  auto r = cli("phase1 --config " + q(dir / "run.yaml"));
  EXPECT_EQ(r.exit_code, 2) << r.output;
  EXPECT_NE(r.output.find("seeds"), std::string::npos);
}

TEST(Cli, UnknownConfigKeyIsAConfigError) {
  TempDir dir;
  write_text(dir / "run.yaml", "workerz: 3\n");
  auto r = cli("infer --config " + q(dir / "run.yaml"));
  EXPECT_EQ(r.exit_code, 2);
  EXPECT_NE(r.output.find("workerz"), std::string::npos);
}

TEST(Cli, BudgetWithoutAgenticIsAConfigError) {
  TempDir dir;
  auto cfg = write_infer_workspace(dir.path());
  EXPECT_EQ(cli("infer --config " + q(cfg) + " --strategy regular --budget 2").exit_code, 2);
}

TEST(Cli, MissingSimulatorIsToolMissing) {
  if (find_on_path("iverilog")) GTEST_SKIP() << "iverilog is installed";
  TempDir dir;
  write_phase1_workspace(dir.path());
  write_text(dir / "run.yaml", read_text(dir / "run.yaml") + "harness: {toolchain: icarus}\n");
  auto r = cli("phase1 --config " + q(dir / "run.yaml"));
  EXPECT_EQ(r.exit_code, 3) << r.output;
}

TEST(Cli, Phase1ThenAuditThenExport) {
  REQUIRE_SIMULATOR();
  TempDir dir;
  auto cfg = write_phase1_workspace(dir.path());
  auto run = cli("phase1 --config " + q(cfg));
  ASSERT_EQ(run.exit_code, 0) << run.output;
  EXPECT_NE(run.output.find("accepted: 3"), std::string::npos) << run.output;
  EXPECT_NE(run.output.find("discarded_compile: 1"), std::string::npos);
  EXPECT_EQ(load_dataset(dir / "out/dataset.jsonl").size(), 3u);
  EXPECT_EQ(read_jsonl(dir / "out/ledger.jsonl").size(), 6u);
  EXPECT_FALSE(read_jsonl(dir / "out/calls.jsonl").empty());

  auto audit = cli("audit --config " + q(cfg));
  EXPECT_EQ(audit.exit_code, 0) << audit.output;
  EXPECT_NE(audit.output.find("0 violations"), std::string::npos) << audit.output;

  auto sft = cli("export --config " + q(cfg) + " --out " + q(dir / "sft.jsonl"));
  EXPECT_EQ(sft.exit_code, 0) << sft.output;
  EXPECT_EQ(read_jsonl(dir / "sft.jsonl").size(), 3u);
  for (const auto& j : read_jsonl(dir / "sft.jsonl")) EXPECT_EQ(j.at("task"), "solve");

  auto lines = read_jsonl(dir / "out/dataset.jsonl");
  auto first = parse_dataset_line(lines.at(0));
  first.tuple->code = design("adder", "mutants/sub.v", Origin::solution_agent);
  JsonlWriter w(dir / "bad.jsonl");
  w.write(dataset_line(*first.tuple));
  for (std::size_t i = 1; i < lines.size(); ++i) w.write(lines[i]);
  auto bad = cli("audit --config " + q(cfg) + " --dataset " + q(dir / "bad.jsonl"));
  EXPECT_EQ(bad.exit_code, 1) << bad.output;
  EXPECT_NE(bad.output.find("1 violations"), std::string::npos) << bad.output;
  EXPECT_NE(bad.output.find("  " + first.tuple->id + ":"), std::string::npos) << bad.output;
}

TEST(Cli, InferFlagsOverrideTheFile) {
  TempDir dir;
  auto cfg = write_infer_workspace(dir.path());
  auto from_file = cli("infer --config " + q(cfg));
  ASSERT_EQ(from_file.exit_code, 0) << from_file.output;
  EXPECT_NE(from_file.output.find("sessions: 15"), std::string::npos) << from_file.output;
  auto flagged = cli("infer --config " + q(cfg) + " --n 2 --strategy agentic --budget 0 --topp 0.5");
  ASSERT_EQ(flagged.exit_code, 0) << flagged.output;
  EXPECT_NE(flagged.output.find("sessions: 10"), std::string::npos) << flagged.output;
  EXPECT_NE(flagged.output.find("strategy agentic, budget 0"), std::string::npos) << flagged.output;
  auto results = read_jsonl(dir / "out/results.jsonl");
  ASSERT_EQ(results.size(), 10u);
  EXPECT_EQ(results[0].at("strategy"), "agentic");
}

TEST(Cli, InferThenEval) {
  REQUIRE_SIMULATOR();
  TempDir dir;
  auto cfg = write_infer_workspace(dir.path(), "ks: [1, 3]\n");
  ASSERT_EQ(cli("infer --config " + q(cfg) + " --n 1").exit_code, 0);
  auto eval = cli("eval --config " + q(cfg) + " --n 1");
  ASSERT_EQ(eval.exit_code, 0) << eval.output;
  auto report = nlohmann::json::parse(read_text(dir / "out/report.json"));
  EXPECT_NEAR(report.at("mean_pass_at_k_percent").at("1").get<double>(), 20.0, 1e-9);
  EXPECT_FALSE(report.at("mean_pass_at_k_percent").contains("3"));
  EXPECT_TRUE(report.contains("token_cost"));
}

TEST(Cli, EvalWithMissingResultsIsAConfigError) {
  TempDir dir;
  auto cfg = write_infer_workspace(dir.path());
  EXPECT_EQ(cli("eval --config " + q(cfg) + " --results " + q(dir / "none.jsonl")).exit_code, 2);
}

TEST(Cli, SimilarityOfIdenticalFilesIsOne) {
  TempDir dir;
  write_text(dir / "a.jsonl", "{\"label\":\"a\",\"vector\":[1,2,3]}\n{\"label\":\"a\",\"vector\":[0,1,0]}\n");
  auto r = cli("similarity --a " + q(dir / "a.jsonl") + " --b " + q(dir / "a.jsonl"));
  EXPECT_EQ(r.exit_code, 0) << r.output;
  EXPECT_NE(r.output.find("1.000000"), std::string::npos) << r.output;
}

TEST(Cli, SimilarityDimensionMismatchFails) {
  TempDir dir;
  write_text(dir / "a.jsonl", "{\"label\":\"a\",\"vector\":[1,2,3]}\n");
  write_text(dir / "b.jsonl", "{\"label\":\"b\",\"vector\":[1,2]}\n");
  auto r = cli("similarity --a " + q(dir / "a.jsonl") + " --b " + q(dir / "b.jsonl"));
  EXPECT_EQ(r.exit_code, 4) << r.output;
}
