#include "rtlforge/prompts.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "rtlforge/errors.hpp"
#include "rtlforge/verilog.hpp"

namespace fs = std::filesystem;

namespace rtlforge {

namespace {

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string strip_trailing_newlines(std::string s) {
  while (!s.empty() && (s.back() == '\n' || s.back() == '\r')) s.pop_back();
  return s;
}

RevisionExemplar parse_exemplar(const fs::path& path) {
  const std::string text = read_text(path);
  RevisionExemplar ex;
  ex.name = path.stem().string();
  std::string* current = nullptr;
  std::string buffer;
  std::istringstream lines(text);
  std::string line;
  auto flush = [&] {
    if (current) *current = strip_trailing_newlines(buffer);
    buffer.clear();
  };
  while (std::getline(lines, line)) {
    if (line == "=== request ===" || line == "=== code ===" || line == "=== answer ===") {
      flush();
      current = line == "=== request ===" ? &ex.request : line == "=== code ===" ? &ex.code : &ex.answer;
      continue;
    }
    buffer += line;
    buffer += '\n';
  }
  flush();
  if (ex.request.empty() || ex.code.empty() || ex.answer.empty()) {
    throw ConfigError("exemplar " + path.string() + " needs request, code and answer sections");
  }
  return ex;
}

}  // namespace

fs::path default_asset_dir() {
  if (const char* env = std::getenv("RTLFORGE_ASSETS"); env && *env) return env;
#ifdef RTLFORGE_ASSET_DIR
  return RTLFORGE_ASSET_DIR;
#else
  return "assets";
#endif
}

std::string fill_template(std::string_view text, const std::map<std::string, std::string>& vars) {
  std::string out;
  out.reserve(text.size());
  std::size_t pos = 0;
  while (pos < text.size()) {
    auto open = text.find("{{", pos);
    if (open == std::string_view::npos) {
      out.append(text.substr(pos));
      break;
    }
    auto close = text.find("}}", open + 2);
    if (close == std::string_view::npos) {
      out.append(text.substr(pos));
      break;
    }
    std::string name(text.substr(open + 2, close - open - 2));
    auto it = vars.find(name);
    if (it == vars.end()) throw ConfigError("template placeholder has no value: {{" + name + "}}");
    out.append(text.substr(pos, open - pos));
    out.append(it->second);
    pos = close + 2;
  }
  return out;
}

PromptLibrary::PromptLibrary(fs::path asset_dir) : asset_dir_(std::move(asset_dir)) {
  const auto prompt_dir = asset_dir_ / "prompts";
  if (!fs::is_directory(prompt_dir)) throw ConfigError("prompt directory not found: " + prompt_dir.string());
  for (const auto& entry : fs::directory_iterator(prompt_dir)) {
    if (entry.path().extension() != ".txt") continue;
    templates_.emplace(entry.path().stem().string(), strip_trailing_newlines(read_text(entry.path())));
  }
  const auto ex_dir = asset_dir_ / "exemplars" / "revision";
  if (fs::is_directory(ex_dir)) {
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(ex_dir)) {
      if (entry.path().extension() == ".txt") files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end());
    for (const auto& f : files) exemplars_.push_back(parse_exemplar(f));
  }
}

const std::string& PromptLibrary::raw(std::string_view template_id) const {
  auto it = templates_.find(template_id);
  if (it == templates_.end()) throw ConfigError("unknown prompt template: " + std::string(template_id));
  return it->second;
}

bool PromptLibrary::has(std::string_view template_id) const { return templates_.find(template_id) != templates_.end(); }

std::string PromptLibrary::render(std::string_view template_id, const std::map<std::string, std::string>& vars) const {
  return fill_template(raw(template_id), vars);
}

std::string PromptLibrary::render_exemplars() const {
  std::string out;
  for (std::size_t i = 0; i < exemplars_.size(); ++i) {
    const auto& ex = exemplars_[i];
    if (i) out += "\n\n";
    out += "Example " + std::to_string(i + 1) + "\n";
    out += "Original request:\n" + ex.request + "\n\n";
    out += "Reference code:\n" + embed_in_fence(ex.code, "verilog") + "\n\n";
    out += ex.answer;
  }
  return out;
}

}  // namespace rtlforge
