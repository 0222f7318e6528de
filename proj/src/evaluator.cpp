#include "rtlforge/evaluator.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>
#include <unordered_map>

#include "rtlforge/pool.hpp"
#include "rtlforge/records.hpp"

namespace rtlforge {

double pass_at_k(const ScoreCell& cell) {
  const auto [n, c, k] = cell;
  if (n < 1 || c < 0 || c > n || k < 1 || k > n) {
    throw PreconditionError("pass@k needs 0 <= c <= n and 1 <= k <= n (n=" + std::to_string(n) +
                            ", c=" + std::to_string(c) + ", k=" + std::to_string(k) + ")");
  }
  if (n - c < k) return 1.0;
  double all_wrong = 1.0;
  for (int i = 0; i < k; ++i) all_wrong *= static_cast<double>(n - c - i) / static_cast<double>(n - i);
  return 1.0 - all_wrong;
}

std::string_view to_string(TaskFamily family) {
  return family == TaskFamily::generation ? "generation" : "completion";
}

TaskFamily task_family_from_string(std::string_view text) {
  if (text == "generation") return TaskFamily::generation;
  if (text == "completion") return TaskFamily::completion;
  throw ConfigError("unknown task family '" + std::string(text) + "'");
}

const BenchmarkItem* Suite::find(const std::string& id) const {
  for (const auto& item : items) {
    if (item.id == id) return &item;
  }
  return nullptr;
}

std::vector<BatchProblem> Suite::problems() const {
  std::vector<BatchProblem> out;
  for (const auto& item : items) out.push_back({item.id, item.prompt});
  return out;
}

namespace {

std::string slurp(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

Suite load_suite(const std::filesystem::path& manifest) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(slurp(manifest));
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(manifest.string() + ": " + e.what());
  }
  const auto dir = manifest.parent_path();
  Suite suite;
  suite.name = j.value("suite", manifest.stem().string());
  suite.convention = pass_convention_from_string(j.value("convention", std::string("sentinel")));
  std::set<std::string> ids;
  for (const auto& it : j.at("items")) {
    BenchmarkItem item;
    item.id = it.at("id").get<std::string>();
    if (!ids.insert(item.id).second) throw ConfigError("duplicate benchmark item id " + item.id);
    item.suite = suite.name;
    if (it.contains("prompt")) {
      item.prompt = it["prompt"].get<std::string>();
    } else {
      item.prompt = slurp(dir / it.at("prompt_file").get<std::string>());
    }
    item.golden_testbench = VerilogSource(slurp(dir / it.at("testbench_file").get<std::string>()), Origin::benchmark,
                                          suite.name + "/" + item.id + "/tb");
    if (it.contains("reference_file")) {
      item.reference = VerilogSource(slurp(dir / it["reference_file"].get<std::string>()), Origin::benchmark,
                                     suite.name + "/" + item.id + "/ref");
    }
    item.family = task_family_from_string(it.value("family", std::string("generation")));
    suite.items.push_back(std::move(item));
  }
  if (suite.items.empty()) throw ConfigError("suite " + suite.name + " has no items");
  return suite;
}

std::vector<ReferenceCheck> verify_suite(const Suite& suite, const Harness& harness, int width) {
  std::vector<const BenchmarkItem*> with_ref;
  for (const auto& item : suite.items) {
    if (item.reference) with_ref.push_back(&item);
  }
  std::vector<ReferenceCheck> out(with_ref.size());
  parallel_for(with_ref.size(), width, [&](std::size_t i) {
    out[i] = {with_ref[i]->id,
              harness.simulate(*with_ref[i]->reference, with_ref[i]->golden_testbench, std::nullopt, suite.convention)};
  });
  return out;
}

void to_json(nlohmann::json& j, const PassAtKReport& r) {
  nlohmann::json problems = nlohmann::json::array();
  for (const auto& p : r.problems) {
    nlohmann::json pass = nlohmann::json::object();
    for (const auto& [k, v] : p.pass_at) pass[std::to_string(k)] = v;
    problems.push_back({{"id", p.id}, {"n", p.n}, {"c", p.c}, {"pass_at_k", pass}});
  }
  nlohmann::json means = nlohmann::json::object();
  for (const auto& [k, v] : r.mean_percent) means[std::to_string(k)] = v;
  j = nlohmann::json{{"suite", r.suite},
                     {"n", r.n},
                     {"problems", problems},
                     {"mean_pass_at_k_percent", means},
                     {"mean_completion_tokens", r.mean_completion_tokens}};
}

PassAtKReport score_run(const std::vector<SessionResult>& results, const Suite& suite, const Harness& harness,
                        const std::vector<int>& ks, int width) {
  std::unordered_map<std::string, std::vector<const SessionResult*>> by_problem;
  for (const auto& r : results) {
    if (!suite.find(r.problem_id)) throw PreconditionError("result for unknown problem '" + r.problem_id + "'");
    by_problem[r.problem_id].push_back(&r);
  }
  PassAtKReport report;
  report.suite = suite.name;
  for (const auto& item : suite.items) {
    auto it = by_problem.find(item.id);
    const int count = it == by_problem.end() ? 0 : static_cast<int>(it->second.size());
    if (count == 0) throw MissingSamples("no results for problem '" + item.id + "'");
    if (report.n == 0) report.n = count;
    if (count != report.n) {
      throw MissingSamples("problem '" + item.id + "' has " + std::to_string(count) + " results, expected " +
                           std::to_string(report.n));
    }
  }

  // Identical code for the same item is simulated once.
  struct Job {
    const BenchmarkItem* item;
    const VerilogSource* code;
  };
  std::vector<Job> jobs;
  std::map<std::pair<std::string, std::string>, std::size_t> job_index;
  for (const auto& item : suite.items) {
    for (const auto* r : by_problem[item.id]) {
      if (!r->result.code) continue;
      auto key = std::make_pair(item.id, r->result.code->text);
      if (job_index.emplace(key, jobs.size()).second) jobs.push_back({&item, &*r->result.code});
    }
  }
  std::vector<char> passed(jobs.size(), 0);
  parallel_for(jobs.size(), width, [&](std::size_t i) {
    passed[i] = harness.simulate(*jobs[i].code, jobs[i].item->golden_testbench, std::nullopt, suite.convention)
                    .passed();
  });

  for (const auto& item : suite.items) {
    ProblemScore score;
    score.id = item.id;
    score.n = report.n;
    for (const auto* r : by_problem[item.id]) {
      if (r->result.code && passed[job_index.at({item.id, r->result.code->text})]) ++score.c;
    }
    for (int k : ks) {
      if (k >= 1 && k <= report.n) score.pass_at[k] = pass_at_k({score.n, score.c, k});
    }
    report.problems.push_back(std::move(score));
  }
  for (int k : ks) {
    if (k < 1 || k > report.n) continue;
    double sum = 0;
    for (const auto& p : report.problems) sum += p.pass_at.at(k);
    report.mean_percent[k] = 100.0 * sum / static_cast<double>(report.problems.size());
  }
  for (const auto& row : token_cost_report(results).rows) {
    report.mean_completion_tokens[row.strategy] = row.mean_completion_tokens;
  }
  return report;
}

std::string render_text(const PassAtKReport& r) {
  std::ostringstream out;
  out << "suite " << r.suite << "  n=" << r.n << "\n";
  out << std::left << std::setw(24) << "problem" << std::right << std::setw(4) << "c";
  for (const auto& [k, _] : r.mean_percent) out << std::setw(10) << ("pass@" + std::to_string(k));
  out << "\n";
  out << std::fixed << std::setprecision(2);
  for (const auto& p : r.problems) {
    out << std::left << std::setw(24) << p.id << std::right << std::setw(4) << p.c;
    for (const auto& [k, v] : p.pass_at) out << std::setw(10) << v * 100.0;
    out << "\n";
  }
  out << std::left << std::setw(28) << "mean";
  out << std::right;
  for (const auto& [k, v] : r.mean_percent) out << std::setw(10) << v;
  out << "\n";
  for (const auto& [strategy, tokens] : r.mean_completion_tokens) {
    out << "mean completion tokens (" << strategy << "): " << tokens << "\n";
  }
  return out.str();
}

std::vector<EmbeddingSet> load_embeddings(const std::filesystem::path& path) {
  std::vector<EmbeddingSet> sets;
  std::map<std::string, std::size_t> index;
  for (const auto& j : read_jsonl(path)) {
    auto label = j.value("label", std::string("default"));
    auto vec = j.at("vector").get<std::vector<double>>();
    auto [it, fresh] = index.emplace(label, sets.size());
    if (fresh) sets.push_back({label, {}});
    sets[it->second].vectors.push_back(std::move(vec));
  }
  if (sets.empty()) throw ConfigError(path.string() + " has no embeddings");
  return sets;
}

std::vector<double> centroid(const EmbeddingSet& set) {
  if (set.vectors.empty()) throw PreconditionError("embedding set '" + set.label + "' is empty");
  const auto dim = set.vectors.front().size();
  std::vector<double> mean(dim, 0.0);
  for (const auto& v : set.vectors) {
    if (v.size() != dim) throw DimensionMismatch("embedding set '" + set.label + "' mixes vector dimensions");
    for (std::size_t i = 0; i < dim; ++i) mean[i] += v[i];
  }
  for (auto& x : mean) x /= static_cast<double>(set.vectors.size());
  return mean;
}

double centroid_similarity(const EmbeddingSet& a, const EmbeddingSet& b) {
  const auto ca = centroid(a);
  const auto cb = centroid(b);
  if (ca.size() != cb.size()) {
    throw DimensionMismatch("dimension " + std::to_string(ca.size()) + " vs " + std::to_string(cb.size()));
  }
  double dot = 0, na = 0, nb = 0;
  for (std::size_t i = 0; i < ca.size(); ++i) {
    dot += ca[i] * cb[i];
    na += ca[i] * ca[i];
    nb += cb[i] * cb[i];
  }
  if (na == 0.0) throw DegenerateCentroid("centroid of '" + a.label + "' is zero");
  if (nb == 0.0) throw DegenerateCentroid("centroid of '" + b.label + "' is zero");
  return std::clamp(dot / (std::sqrt(na) * std::sqrt(nb)), -1.0, 1.0);
}

CostTable token_cost_report(const std::map<std::string, std::vector<SessionTranscript>>& by_strategy,
                            const std::string& baseline) {
  CostTable table;
  table.baseline = baseline;
  std::optional<double> base;
  for (const auto& [strategy, transcripts] : by_strategy) {
    CostRow row;
    row.strategy = strategy;
    row.sessions = transcripts.size();
    double sum = 0;
    for (const auto& t : transcripts) sum += static_cast<double>(t.total_completion_tokens);
    row.mean_completion_tokens = transcripts.empty() ? 0.0 : sum / static_cast<double>(transcripts.size());
    if (strategy == baseline) base = row.mean_completion_tokens;
    table.rows.push_back(std::move(row));
  }
  if (base && *base > 0) {
    for (auto& row : table.rows) row.ratio = row.mean_completion_tokens / *base;
  }
  return table;
}

CostTable token_cost_report(const std::vector<SessionResult>& results, const std::string& baseline) {
  std::map<std::string, std::vector<SessionTranscript>> grouped;
  for (const auto& r : results) grouped[std::string(to_string(r.strategy))].push_back(r.result.transcript);
  return token_cost_report(grouped, baseline);
}

void to_json(nlohmann::json& j, const CostTable& t) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& r : t.rows) {
    rows.push_back({{"strategy", r.strategy},
                    {"sessions", r.sessions},
                    {"mean_completion_tokens", r.mean_completion_tokens},
                    {"ratio", r.ratio ? nlohmann::json(*r.ratio) : nlohmann::json(nullptr)}});
  }
  j = nlohmann::json{{"baseline", t.baseline}, {"rows", rows}};
}

std::string render_text(const CostTable& t) {
  std::ostringstream out;
  out << std::left << std::setw(16) << "strategy" << std::right << std::setw(10) << "sessions" << std::setw(14)
      << "mean_tokens" << std::setw(10) << "ratio" << "\n";
  out << std::fixed;
  for (const auto& r : t.rows) {
    out << std::left << std::setw(16) << r.strategy << std::right << std::setw(10) << r.sessions << std::setw(14)
        << std::setprecision(1) << r.mean_completion_tokens << std::setw(10);
    if (r.ratio) {
      out << std::setprecision(3) << *r.ratio;
    } else {
      out << "-";
    }
    out << "\n";
  }
  return out.str();
}

}  // namespace rtlforge
