#include <gtest/gtest.h>

#include "rtlforge/config.hpp"
#include "support.hpp"

using namespace rtlforge;
using namespace rtlforge::testing;

TEST(RunConfig, EmptyFileGivesDefaults) {
  auto c = parse_run_config("", "/base");
  EXPECT_EQ(c.strategy, Strategy::regular);
  EXPECT_EQ(c.n, 20);
  EXPECT_EQ(c.ks, (std::vector<int>{1, 3, 5}));
  EXPECT_EQ(c.attempts_per_problem, 4);
  EXPECT_EQ(c.seq_cap, 16384u);
  EXPECT_EQ(c.sft_tasks.size(), 3u);
  EXPECT_EQ(c.paths.dataset, std::filesystem::path("/base/out/dataset.jsonl"));
  EXPECT_EQ(c.params("teacher"), SamplingParams{});
  EXPECT_THROW(c.backend("teacher"), ConfigError);
}

TEST(RunConfig, FullFileParses) {
  TempDir dir;
  write_text(dir / "script.jsonl", "{\"content\": \"hi\"}\n");
  write_text(dir / "run.yaml", R"(
seed: 7
workers: 3
backends:
  teacher: {kind: scripted, script: script.jsonl}
  eval: {kind: http, endpoint: "http://localhost:9/v1", model: m, timeout_s: 5, max_retries: 1, max_in_flight: 2}
sampling:
  teacher: {temperature: 0.2, top_p: 0.95, top_k: 40, max_tokens: 1024}
  eval: {temperature: 0.0, top_k: none}
strategy: agentic
budget: inf
n: 5
ks: [1, 5]
attempts_per_problem: 6
sft_tasks: [solve, debug]
seq_cap: 4096
sim_limit_s: 12
harness: {toolchain: verilator, sim_timeout_s: 30, max_parallel: 2}
paths: {seeds: data/seeds.jsonl, suite: suite/toy.json}
)");
  auto c = load_run_config(dir / "run.yaml");
  EXPECT_EQ(c.seed, 7u);
  EXPECT_EQ(c.workers, 3);
  EXPECT_EQ(c.width(), 3);
  EXPECT_EQ(c.backend("teacher").kind, BackendKind::scripted);
  ASSERT_TRUE(c.backend("teacher").script);
  EXPECT_EQ(c.backend("teacher").script->size(), 1u);
  EXPECT_EQ(c.backend("eval").kind, BackendKind::http);
  EXPECT_EQ(c.backend("eval").model_id, "m");
  EXPECT_EQ(c.backend("eval").max_in_flight, 2);
  EXPECT_DOUBLE_EQ(c.params("teacher").top_p, 0.95);
  EXPECT_EQ(c.params("teacher").top_k, 40);
  EXPECT_FALSE(c.params("eval").top_k);
  EXPECT_EQ(c.strategy, Strategy::agentic);
  EXPECT_EQ(c.budget, Budget::unbounded());
  EXPECT_EQ(c.strategy_config().budget, Budget::unbounded());
  EXPECT_EQ(c.ks, (std::vector<int>{1, 5}));
  EXPECT_EQ(c.sft_tasks, (std::set<SftTask>{SftTask::solve, SftTask::debug}));
  EXPECT_EQ(c.sim_limit, std::chrono::milliseconds(12000));
  EXPECT_EQ(c.harness.toolchain, "verilator");
  EXPECT_EQ(c.harness.max_parallel, 2);
  EXPECT_EQ(c.paths.seeds, (dir.path() / "data/seeds.jsonl").lexically_normal());
  EXPECT_EQ(c.pipeline().attempts_per_problem, 6);
}

TEST(RunConfig, UnknownKeysAreRejected) {
  EXPECT_THROW(parse_run_config("colour: blue\n"), ConfigError);
  EXPECT_THROW(parse_run_config("sampling: {eval: {temprature: 0.5}}\n"), ConfigError);
  EXPECT_THROW(parse_run_config("harness: {tool: x}\n"), ConfigError);
  EXPECT_THROW(parse_run_config("paths: {nowhere: x}\n"), ConfigError);
}

TEST(RunConfig, InvalidValuesAreRejected) {
  EXPECT_THROW(parse_run_config("n: 0\n"), ConfigError);
  EXPECT_THROW(parse_run_config("workers: zero\n"), ConfigError);
  EXPECT_THROW(parse_run_config("ks: [0]\n"), ConfigError);
  EXPECT_THROW(parse_run_config("strategy: beam\n"), ConfigError);
  EXPECT_THROW(parse_run_config("budget: 2\n"), ConfigError);
  EXPECT_THROW(parse_run_config("sampling: {eval: {top_p: 1.5}}\n"), ConfigError);
  EXPECT_THROW(parse_run_config("sft_tasks: [translate]\n"), ConfigError);
  EXPECT_THROW(parse_run_config("backends: {teacher: {kind: carrier_pigeon}}\n"), ConfigError);
  EXPECT_THROW(parse_run_config("[1, 2]\n"), ConfigError);
}

TEST(RunConfig, AgenticDefaultsToBudgetThree) {
  auto c = parse_run_config("strategy: agentic\n");
  EXPECT_EQ(c.strategy_config().budget, Budget::of(3));
  EXPECT_FALSE(parse_run_config("strategy: deep\n").strategy_config().budget);
}

TEST(RunConfig, DeterministicAndSerialForceWidthOne) {
  auto d = parse_run_config("workers: 8\ndeterministic: true\n");
  EXPECT_EQ(d.width(), 1);
  EXPECT_TRUE(d.pipeline().serial);
  auto s = parse_run_config("workers: 8\nserial: true\n");
  EXPECT_EQ(s.width(), 1);
  EXPECT_EQ(parse_run_config("workers: 8\n").width(), 8);
}

TEST(RunConfig, MissingFileIsAConfigError) {
  EXPECT_THROW(load_run_config("/definitely/not/here.yaml"), ConfigError);
}

TEST(RequirePath, NamesWhatIsMissing) {
  try {
    require_path("/no/such/seeds.jsonl", "seed file");
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("seed file"), std::string::npos);
  }
  EXPECT_THROW(require_path("", "suite"), ConfigError);
}
