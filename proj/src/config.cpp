#include "rtlforge/config.hpp"

#include <fstream>
#include <sstream>

#include <yaml-cpp/yaml.h>

namespace rtlforge {

namespace {

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& value) {
  std::filesystem::path p(value);
  if (p.is_relative() && !base.empty()) p = base / p;
  return p.lexically_normal();
}

template <typename T>
T scalar(const YAML::Node& node, const std::string& what) {
  try {
    return node.as<T>();
  } catch (const YAML::Exception&) {
    throw ConfigError("config: bad value for '" + what + "'");
  }
}

void read_params(const YAML::Node& node, SamplingParams& p, const std::string& where) {
  for (const auto& kv : node) {
    const auto key = kv.first.as<std::string>();
    const auto& v = kv.second;
    if (key == "temperature") {
      p.temperature = scalar<double>(v, where + ".temperature");
    } else if (key == "top_p") {
      p.top_p = scalar<double>(v, where + ".top_p");
    } else if (key == "top_k") {
      if (v.IsNull() || v.as<std::string>() == "none" || v.as<std::string>() == "-1") {
        p.top_k.reset();
      } else {
        p.top_k = scalar<int>(v, where + ".top_k");
      }
    } else if (key == "repetition_penalty") {
      p.repetition_penalty = scalar<double>(v, where + ".repetition_penalty");
    } else if (key == "max_tokens") {
      p.max_tokens = scalar<int>(v, where + ".max_tokens");
    } else {
      throw ConfigError("config: unknown key '" + where + "." + key + "'");
    }
  }
}

BackendSpec read_backend(const YAML::Node& node, const std::filesystem::path& base, const std::string& where) {
  BackendSpec spec;
  const auto kind = node["kind"] ? scalar<std::string>(node["kind"], where + ".kind") : std::string("http");
  for (const auto& kv : node) {
    const auto key = kv.first.as<std::string>();
    const auto& v = kv.second;
    if (key == "kind") continue;
    if (key == "script") {
      spec.script = std::make_shared<const std::vector<ScriptEntry>>(
          load_script(resolve(base, scalar<std::string>(v, where + ".script")).string()));
    } else if (key == "endpoint") {
      spec.endpoint = scalar<std::string>(v, where + ".endpoint");
    } else if (key == "model") {
      spec.model_id = scalar<std::string>(v, where + ".model");
    } else if (key == "api_key_env") {
      spec.api_key_env = scalar<std::string>(v, where + ".api_key_env");
    } else if (key == "timeout_s") {
      spec.timeout = std::chrono::milliseconds(static_cast<long>(scalar<double>(v, where + ".timeout_s") * 1000));
    } else if (key == "max_retries") {
      spec.max_retries = scalar<int>(v, where + ".max_retries");
    } else if (key == "max_in_flight") {
      spec.max_in_flight = scalar<int>(v, where + ".max_in_flight");
    } else if (key == "backoff_ms") {
      spec.backoff_base = std::chrono::milliseconds(scalar<long>(v, where + ".backoff_ms"));
    } else {
      throw ConfigError("config: unknown key '" + where + "." + key + "'");
    }
  }
  if (kind == "scripted") {
    spec.kind = BackendKind::scripted;
    if (spec.model_id.empty()) spec.model_id = "scripted";
    spec.backoff_base = std::min(spec.backoff_base, std::chrono::milliseconds(1));
  } else if (kind == "http") {
    spec.kind = BackendKind::http;
  } else {
    throw ConfigError("config: " + where + ".kind must be http or scripted");
  }
  spec.validate();
  return spec;
}

void read_paths(const YAML::Node& node, const std::filesystem::path& base, RunPaths& paths) {
  const std::map<std::string, std::filesystem::path RunPaths::*> fields{
      {"seeds", &RunPaths::seeds},       {"curriculum", &RunPaths::curriculum},       {"dataset", &RunPaths::dataset},
      {"curriculum_ledger", &RunPaths::curriculum_ledger},
      {"ledger", &RunPaths::ledger},     {"attempts", &RunPaths::attempts},   {"sft", &RunPaths::sft},
      {"suite", &RunPaths::suite},       {"results", &RunPaths::results},     {"report", &RunPaths::report},
      {"embeddings_a", &RunPaths::embeddings_a}, {"embeddings_b", &RunPaths::embeddings_b},
      {"assets", &RunPaths::assets},     {"calls", &RunPaths::calls}};
  for (const auto& kv : node) {
    const auto key = kv.first.as<std::string>();
    auto it = fields.find(key);
    if (it == fields.end()) throw ConfigError("config: unknown key 'paths." + key + "'");
    paths.*(it->second) = resolve(base, scalar<std::string>(kv.second, "paths." + key));
  }
}

}  // namespace

const BackendSpec& RunConfig::backend(const std::string& role) const {
  auto it = backends.find(role);
  if (it == backends.end()) throw ConfigError("config: no backend configured for role '" + role + "'");
  return it->second;
}

SamplingParams RunConfig::params(const std::string& role) const {
  auto it = sampling.find(role);
  SamplingParams p = it == sampling.end() ? SamplingParams{} : it->second;
  return p;
}

PipelineConfig RunConfig::pipeline() const {
  PipelineConfig pc;
  pc.workers = width();
  pc.serial = deterministic || serial;
  pc.attempts_per_problem = attempts_per_problem;
  pc.sim_limit = sim_limit;
  pc.teacher_params = params("teacher");
  pc.student_params = params("student");
  pc.seed = seed;
  return pc;
}

StrategyConfig RunConfig::strategy_config() const {
  StrategyConfig sc;
  sc.strategy = strategy;
  if (strategy == Strategy::agentic) sc.budget = budget.value_or(Budget::of(3));
  sc.params = params("eval");
  return sc;
}

void RunConfig::validate() const {
  if (workers < 1) throw ConfigError("config: workers must be >= 1");
  if (n < 1) throw ConfigError("config: n must be >= 1");
  if (attempts_per_problem < 1) throw ConfigError("config: attempts_per_problem must be >= 1");
  if (seq_cap == 0) throw ConfigError("config: seq_cap must be positive");
  for (int k : ks) {
    if (k < 1) throw ConfigError("config: every k must be >= 1");
  }
  if (budget && strategy != Strategy::agentic) throw ConfigError("config: budget applies only to the agentic strategy");
  for (const auto& [role, p] : sampling) {
    try {
      p.validate();
    } catch (const Error& e) {
      throw ConfigError("config: sampling." + role + ": " + e.what());
    }
  }
  for (const auto& [role, b] : backends) b.validate();
}

RunConfig parse_run_config(const std::string& yaml_text, const std::filesystem::path& base_dir) {
  YAML::Node root;
  try {
    root = YAML::Load(yaml_text);
  } catch (const YAML::Exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  RunConfig c;
  // Default output locations live next to the config file.
  for (auto* p : {&c.paths.dataset, &c.paths.ledger, &c.paths.curriculum, &c.paths.curriculum_ledger,
                  &c.paths.attempts, &c.paths.sft, &c.paths.results, &c.paths.report}) {
    *p = resolve(base_dir, p->string());
  }
  if (root.IsNull()) return c;
  if (!root.IsMap()) throw ConfigError("config: top level must be a mapping");
  for (const auto& kv : root) {
    const auto key = kv.first.as<std::string>();
    const auto& v = kv.second;
    if (key == "seed") {
      c.seed = scalar<std::uint64_t>(v, key);
    } else if (key == "deterministic") {
      c.deterministic = scalar<bool>(v, key);
    } else if (key == "serial") {
      c.serial = scalar<bool>(v, key);
    } else if (key == "workers") {
      c.workers = scalar<int>(v, key);
    } else if (key == "backends") {
      for (const auto& b : v) {
        const auto role = b.first.as<std::string>();
        c.backends[role] = read_backend(b.second, base_dir, "backends." + role);
      }
    } else if (key == "sampling") {
      for (const auto& s : v) {
        const auto role = s.first.as<std::string>();
        SamplingParams p;
        read_params(s.second, p, "sampling." + role);
        c.sampling[role] = p;
      }
    } else if (key == "strategy") {
      c.strategy = strategy_from_string(scalar<std::string>(v, key));
    } else if (key == "budget") {
      c.budget = Budget::parse(scalar<std::string>(v, key));
    } else if (key == "n") {
      c.n = scalar<int>(v, key);
    } else if (key == "ks") {
      c.ks = scalar<std::vector<int>>(v, key);
    } else if (key == "attempts_per_problem") {
      c.attempts_per_problem = scalar<int>(v, key);
    } else if (key == "sft_tasks") {
      c.sft_tasks.clear();
      for (const auto& t : scalar<std::vector<std::string>>(v, key)) c.sft_tasks.insert(sft_task_from_string(t));
    } else if (key == "seq_cap") {
      c.seq_cap = scalar<std::size_t>(v, key);
    } else if (key == "sim_limit_s") {
      c.sim_limit = std::chrono::milliseconds(static_cast<long>(scalar<double>(v, key) * 1000));
    } else if (key == "harness") {
      for (const auto& h : v) {
        const auto hk = h.first.as<std::string>();
        const auto& hv = h.second;
        if (hk == "toolchain") {
          c.harness.toolchain = scalar<std::string>(hv, "harness.toolchain");
        } else if (hk == "verilator_root") {
          c.harness.verilator_root = resolve(base_dir, scalar<std::string>(hv, "harness.verilator_root"));
        } else if (hk == "cache_dir") {
          c.harness.cache_dir = resolve(base_dir, scalar<std::string>(hv, "harness.cache_dir"));
        } else if (hk == "sim_timeout_s") {
          c.harness.sim_timeout =
              std::chrono::milliseconds(static_cast<long>(scalar<double>(hv, "harness.sim_timeout_s") * 1000));
        } else if (hk == "compile_timeout_s") {
          c.harness.compile_timeout =
              std::chrono::milliseconds(static_cast<long>(scalar<double>(hv, "harness.compile_timeout_s") * 1000));
        } else if (hk == "max_parallel") {
          c.harness.max_parallel = scalar<int>(hv, "harness.max_parallel");
        } else {
          throw ConfigError("config: unknown key 'harness." + hk + "'");
        }
      }
    } else if (key == "paths") {
      read_paths(v, base_dir, c.paths);
    } else {
      throw ConfigError("config: unknown key '" + key + "'");
    }
  }
  c.validate();
  return c;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_run_config(ss.str(), path.parent_path());
}

void require_path(const std::filesystem::path& path, std::string_view what) {
  if (path.empty()) throw ConfigError(std::string(what) + " is not configured");
  if (!std::filesystem::exists(path)) throw ConfigError(std::string(what) + " not found: " + path.string());
}

}  // namespace rtlforge
