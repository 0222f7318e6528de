// rtlforge command-line entry point.

#include <atomic>
#include <csignal>
#include <cstdio>
#include <iostream>
#include <map>

#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "CLI11.hpp"
#include "rtlforge/config.hpp"
#include "rtlforge/evaluator.hpp"
#include "rtlforge/inference.hpp"
#include "rtlforge/pipeline.hpp"
#include "rtlforge/records.hpp"

using namespace rtlforge;

namespace {

std::atomic<bool> g_cancel{false};

extern "C" void on_interrupt(int) { g_cancel.store(true); }

enum Exit { ok = 0, failed = 1, config_error = 2, tool_missing = 3, runtime_error = 4 };

// Flags shared by every command; unset flags leave the file value alone.
struct Overrides {
  std::string config;
  std::optional<std::string> strategy;
  std::optional<std::string> budget;
  std::optional<int> n;
  std::optional<double> top_p;
  bool serial = false;
  std::optional<std::uint64_t> seed;
  std::optional<int> workers;
  std::optional<std::string> seeds, dataset, curriculum, suite, results, report, sft, a, b, calls;
};

void add_common(CLI::App* cmd, Overrides& o) {
  cmd->add_option("--config", o.config, "run configuration (YAML)");
  cmd->add_option("--strategy", o.strategy, "regular | deep | agentic");
  cmd->add_option("--budget", o.budget, "agentic interaction budget: N or inf");
  cmd->add_option("--n", o.n, "samples per problem");
  cmd->add_option("--topp", o.top_p, "top-p for every sampling role");
  cmd->add_flag("--serial", o.serial, "one item at a time, no concurrency");
  cmd->add_option("--seed", o.seed, "run seed");
  cmd->add_option("--workers", o.workers, "worker pool width");
  cmd->add_option("--calls", o.calls, "write every model call to this file (JSONL)");
}

RunConfig resolve_config(const Overrides& o) {
  RunConfig c = o.config.empty() ? parse_run_config("") : load_run_config(o.config);
  if (o.strategy) c.strategy = strategy_from_string(*o.strategy);
  if (o.budget) c.budget = Budget::parse(*o.budget);
  if (o.n) c.n = *o.n;
  if (o.top_p) {
    for (const auto* role : {"teacher", "student", "eval"}) {
      auto p = c.params(role);
      p.top_p = *o.top_p;
      c.sampling[role] = p;
    }
  }
  if (o.serial) c.serial = true;
  if (o.seed) c.seed = *o.seed;
  if (o.workers) c.workers = *o.workers;
  auto set = [](const std::optional<std::string>& v, std::filesystem::path& dst) {
    if (v) dst = *v;
  };
  set(o.seeds, c.paths.seeds);
  set(o.dataset, c.paths.dataset);
  set(o.curriculum, c.paths.curriculum);
  set(o.suite, c.paths.suite);
  set(o.results, c.paths.results);
  set(o.report, c.paths.report);
  set(o.sft, c.paths.sft);
  set(o.a, c.paths.embeddings_a);
  set(o.b, c.paths.embeddings_b);
  set(o.calls, c.paths.calls);
  c.validate();
  return c;
}

PromptLibrary prompt_library(const RunConfig& c) {
  return c.paths.assets.empty() ? PromptLibrary() : PromptLibrary(c.paths.assets);
}

Harness make_harness(const RunConfig& c) {
  auto hc = c.harness;
  if (hc.max_parallel == 0) hc.max_parallel = c.width();
  return Harness(hc);
}

std::shared_ptr<CallLog> call_log(const RunConfig& c) {
  return c.paths.calls.empty() ? nullptr : std::make_shared<CallLog>();
}

void write_calls(const RunConfig& c, const std::shared_ptr<CallLog>& log) {
  if (log) write_jsonl(c.paths.calls, log->snapshot());
}

std::map<std::string, int> tally(const std::vector<LedgerEntry>& ledger) {
  std::map<std::string, int> counts;
  for (const auto& e : ledger) ++counts[e.terminal];
  return counts;
}

void print_tally(const std::string& title, const std::vector<LedgerEntry>& ledger) {
  std::cout << title << ": " << ledger.size() << " entries\n";
  for (const auto& [terminal, count] : tally(ledger)) std::cout << "  " << terminal << ": " << count << "\n";
}

std::vector<DatasetRecord> load_records(const RunConfig& c, bool need_curriculum) {
  require_path(c.paths.dataset, "dataset");
  auto records = load_dataset(c.paths.dataset);
  if (need_curriculum) require_path(c.paths.curriculum, "curriculum");
  if (std::filesystem::exists(c.paths.curriculum)) {
    for (auto& r : load_dataset(c.paths.curriculum)) records.push_back(std::move(r));
  }
  return records;
}

std::vector<TrainingTuple> load_tuples(const std::filesystem::path& path) {
  std::vector<TrainingTuple> tuples;
  for (auto& r : load_dataset(path)) {
    if (r.tuple) tuples.push_back(std::move(*r.tuple));
  }
  return tuples;
}

int cmd_phase1(const RunConfig& c) {
  require_path(c.paths.seeds, "seeds");
  const auto seeds = load_seeds(c.paths.seeds);
  auto log = call_log(c);
  Gateway teacher(c.backend("teacher"), log);
  const auto harness = make_harness(c);
  const auto prompts = prompt_library(c);
  auto pc = c.pipeline();
  pc.cancel = &g_cancel;
  auto result = run_phase1(seeds, teacher, harness, prompts, pc);
  write_calls(c, log);
  JsonlWriter data(c.paths.dataset);
  for (const auto& t : result.dataset) data.write(dataset_line(t));
  write_jsonl(c.paths.ledger, result.ledger);
  print_tally("phase1 ledger", result.ledger);
  std::cout << "accepted tuples: " << result.dataset.size() << " -> " << c.paths.dataset.string() << "\n";
  if (g_cancel) std::cout << "interrupted: ledger covers " << result.ledger.size() << " of " << seeds.size() << " seeds\n";
  return ok;
}

int cmd_phase2(const RunConfig& c) {
  require_path(c.paths.dataset, "dataset");
  const auto tuples = load_tuples(c.paths.dataset);
  auto log = call_log(c);
  Gateway student(c.backend("student"), log);
  Gateway teacher(c.backend("teacher"), log);
  const auto harness = make_harness(c);
  const auto prompts = prompt_library(c);
  auto pc = c.pipeline();
  pc.cancel = &g_cancel;
  auto result = run_phase2(tuples, student, teacher, harness, prompts, pc);
  write_calls(c, log);
  JsonlWriter data(c.paths.curriculum);
  for (const auto& r : result.dataset) data.write(dataset_line(r));
  write_jsonl(c.paths.curriculum_ledger, result.ledger);
  JsonlWriter attempts(c.paths.attempts);
  for (const auto& p : result.attempts) attempts.write({{"tuple_id", p.tuple_id}, {"attempts", p.attempts}});
  print_tally("phase2 ledger", result.ledger);
  std::cout << "curriculum records: " << result.dataset.size() << " -> " << c.paths.curriculum.string() << "\n";
  return ok;
}

int cmd_export(const RunConfig& c) {
  const auto records = load_records(c, false);
  const auto prompts = prompt_library(c);
  auto out = export_sft(records, c.sft_tasks, c.seq_cap, prompts);
  write_jsonl(c.paths.sft, out.samples);
  std::map<std::string, int> per_task;
  for (const auto& s : out.samples) ++per_task[std::string(to_string(s.task))];
  std::cout << "sft samples: " << out.samples.size() << " -> " << c.paths.sft.string() << "\n";
  for (const auto& [task, count] : per_task) std::cout << "  " << task << ": " << count << "\n";
  std::cout << "skipped over sequence cap: " << out.skipped_over_cap << "\n";
  return ok;
}

int cmd_infer(const RunConfig& c) {
  require_path(c.paths.suite, "suite");
  const auto suite = load_suite(c.paths.suite);
  auto log = call_log(c);
  Gateway gateway(c.backend("eval"), log);
  const auto prompts = prompt_library(c);
  BatchOptions opts;
  opts.n = c.n;
  opts.seed = c.seed;
  opts.width = c.width();
  opts.cancel = &g_cancel;
  const auto sc = c.strategy_config();
  auto results = run_batch(suite.problems(), gateway, sc, prompts, opts);
  write_jsonl(c.paths.results, results);
  write_calls(c, log);
  std::size_t with_code = 0;
  for (const auto& r : results) with_code += r.result.code ? 1 : 0;
  std::cout << "sessions: " << results.size() << " (" << with_code << " with code), strategy " << to_string(sc.strategy);
  if (sc.budget) std::cout << ", budget " << sc.budget->str();
  std::cout << " -> " << c.paths.results.string() << "\n";
  std::cout << render_text(token_cost_report(results));
  return ok;
}

int cmd_eval(const RunConfig& c) {
  require_path(c.paths.suite, "suite");
  require_path(c.paths.results, "results");
  const auto suite = load_suite(c.paths.suite);
  std::vector<SessionResult> results;
  for (const auto& j : read_jsonl(c.paths.results)) results.push_back(j.get<SessionResult>());
  const auto harness = make_harness(c);
  auto report = score_run(results, suite, harness, c.ks, c.width());
  auto cost = token_cost_report(results);
  nlohmann::json out = report;
  out["token_cost"] = cost;
  if (c.paths.report.has_parent_path()) std::filesystem::create_directories(c.paths.report.parent_path());
  std::ofstream(c.paths.report) << out.dump(2) << "\n";
  std::cout << render_text(report) << render_text(cost);
  return ok;
}

int cmd_audit(const RunConfig& c) {
  const auto records = load_records(c, false);
  const auto harness = make_harness(c);
  auto report = audit_dataset(records, harness, c.width(), &g_cancel);
  std::cout << report.records << " records, " << report.simulations << " simulations, " << report.violations.size()
            << " violations\n";
  for (const auto& v : report.violations) std::cout << "  " << v.record_id << ": " << v.reason << "\n";
  return report.clean() ? ok : failed;
}

int cmd_similarity(const RunConfig& c) {
  require_path(c.paths.embeddings_a, "embeddings a");
  require_path(c.paths.embeddings_b, "embeddings b");
  auto merged = [](const std::filesystem::path& p) {
    EmbeddingSet all;
    for (auto& s : load_embeddings(p)) {
      if (all.label.empty()) all.label = s.label;
      for (auto& v : s.vectors) all.vectors.push_back(std::move(v));
    }
    return all;
  };
  const auto a = merged(c.paths.embeddings_a);
  const auto b = merged(c.paths.embeddings_b);
  const double sim = centroid_similarity(a, b);
  std::printf("centroid cosine similarity (%s vs %s): %.6f\n", a.label.c_str(), b.label.c_str(), sim);
  return ok;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"rtlforge: Verilog training data pipeline, inference strategies and evaluation"};
  app.require_subcommand(1);
  std::string log_level = "info";
  app.add_option("--log-level", log_level, "trace | debug | info | warn | error | off");

  Overrides o;
  struct Command {
    const char* name;
    const char* help;
    int (*run)(const RunConfig&);
  };
  const std::vector<Command> commands{
      {"phase1", "generate (problem, reasoning, code, testbench) tuples from seed pairs", cmd_phase1},
      {"phase2", "build the test/debug curriculum from phase 1 tuples", cmd_phase2},
      {"export", "write SFT samples from the datasets", cmd_export},
      {"infer", "run a generation strategy over a benchmark suite", cmd_infer},
      {"eval", "score inference results with pass@k", cmd_eval},
      {"audit", "re-simulate every dataset record and check its invariants", cmd_audit},
      {"similarity", "cosine similarity between two embedding centroids", cmd_similarity},
  };
  std::map<CLI::App*, const Command*> by_app;
  for (const auto& cmd : commands) {
    auto* sub = app.add_subcommand(cmd.name, cmd.help);
    add_common(sub, o);
    by_app[sub] = &cmd;
  }
  auto* phase1 = app.get_subcommand("phase1");
  phase1->add_option("--seeds", o.seeds, "seed pairs (JSONL)");
  phase1->add_option("--dataset", o.dataset, "output tuple dataset (JSONL)");
  auto* phase2 = app.get_subcommand("phase2");
  phase2->add_option("--dataset", o.dataset, "phase 1 tuple dataset (JSONL)");
  phase2->add_option("--curriculum", o.curriculum, "output curriculum dataset (JSONL)");
  for (const char* name : {"export", "audit"}) {
    auto* sub = app.get_subcommand(name);
    sub->add_option("--dataset", o.dataset, "tuple dataset (JSONL)");
    sub->add_option("--curriculum", o.curriculum, "curriculum dataset (JSONL)");
  }
  app.get_subcommand("export")->add_option("--out", o.sft, "output SFT samples (JSONL)");
  for (const char* name : {"infer", "eval"}) {
    auto* sub = app.get_subcommand(name);
    sub->add_option("--suite", o.suite, "benchmark suite manifest (JSON)");
    sub->add_option("--results", o.results, "inference results (JSONL)");
  }
  app.get_subcommand("eval")->add_option("--report", o.report, "report output (JSON)");
  auto* similarity = app.get_subcommand("similarity");
  similarity->add_option("--a", o.a, "first embeddings file (JSONL)");
  similarity->add_option("--b", o.b, "second embeddings file (JSONL)");

  CLI11_PARSE(app, argc, argv);

  auto logger = spdlog::stderr_color_mt("rtlforge");
  spdlog::set_default_logger(logger);
  spdlog::set_pattern("%Y-%m-%dT%H:%M:%S.%e %l %v");
  spdlog::set_level(spdlog::level::from_str(log_level));

  std::signal(SIGINT, on_interrupt);
  std::signal(SIGTERM, on_interrupt);

  const Command* chosen = nullptr;
  for (const auto& [sub, cmd] : by_app) {
    if (sub->parsed()) chosen = cmd;
  }
  try {
    const auto config = resolve_config(o);
    return chosen->run(config);
  } catch (const ToolMissing& e) {
    std::cerr << "error: " << e.what() << "\n";
    return tool_missing;
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return config_error;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return runtime_error;
  }
}
