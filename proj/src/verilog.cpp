#include "rtlforge/verilog.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <charconv>
#include <functional>
#include <map>
#include <set>
#include <sstream>
#include <unordered_set>

namespace rtlforge {

std::string_view to_string(Origin origin) {
  switch (origin) {
    case Origin::seed_corpus:
      return "seed_corpus";
    case Origin::solution_agent:
      return "solution_agent";
    case Origin::testbench_agent:
      return "testbench_agent";
    case Origin::debug_agent:
      return "debug_agent";
    case Origin::benchmark:
      return "benchmark";
  }
  return "seed_corpus";
}

Origin origin_from_string(std::string_view text) {
  static constexpr std::array kAll = {Origin::seed_corpus, Origin::solution_agent, Origin::testbench_agent,
                                      Origin::debug_agent, Origin::benchmark};
  for (auto o : kAll) {
    if (to_string(o) == text) return o;
  }
  throw ParseFailure("unknown source origin: " + std::string(text));
}

VerilogSource::VerilogSource(std::string text_, Origin origin_, std::optional<std::string> label_)
    : text(std::move(text_)), origin(origin_), label(std::move(label_)) {
  if (text.empty()) throw PreconditionError("VerilogSource text must be non-empty");
}

void to_json(nlohmann::json& j, const VerilogSource& source) {
  j = nlohmann::json{{"text", source.text}, {"origin", to_string(source.origin)}};
  if (source.label) j["label"] = *source.label;
}

void from_json(const nlohmann::json& j, VerilogSource& source) {
  source.text = j.at("text").get<std::string>();
  source.origin = origin_from_string(j.value("origin", std::string("seed_corpus")));
  if (j.contains("label") && !j["label"].is_null()) {
    source.label = j["label"].get<std::string>();
  } else {
    source.label.reset();
  }
}

std::string_view to_string(PortDirection direction) {
  switch (direction) {
    case PortDirection::input:
      return "input";
    case PortDirection::output:
      return "output";
    case PortDirection::inout:
      return "inout";
  }
  return "input";
}

std::string ModuleInterface::render() const {
  std::ostringstream out;
  out << "module " << module_name;
  if (ports.empty()) {
    out << ";";
    return out.str();
  }
  out << " (\n";
  for (std::size_t i = 0; i < ports.size(); ++i) {
    const auto& p = ports[i];
    out << "  " << to_string(p.direction);
    if (p.width > 1) out << " [" << (p.width - 1) << ":0]";
    out << " " << p.name << (i + 1 < ports.size() ? ",\n" : "\n");
  }
  out << ");";
  return out.str();
}

void to_json(nlohmann::json& j, const ModuleInterface& iface) {
  nlohmann::json ports = nlohmann::json::array();
  for (const auto& p : iface.ports) {
    ports.push_back({{"name", p.name}, {"direction", to_string(p.direction)}, {"width", p.width}});
  }
  j = nlohmann::json{{"module_name", iface.module_name}, {"ports", ports}, {"complete", iface.complete}};
}

void from_json(const nlohmann::json& j, ModuleInterface& iface) {
  iface.module_name = j.at("module_name").get<std::string>();
  iface.complete = j.value("complete", true);
  iface.ports.clear();
  for (const auto& p : j.at("ports")) {
    Port port;
    port.name = p.at("name").get<std::string>();
    auto dir = p.at("direction").get<std::string>();
    port.direction = dir == "output" ? PortDirection::output
                     : dir == "inout" ? PortDirection::inout
                                      : PortDirection::input;
    port.width = p.value("width", 1u);
    iface.ports.push_back(std::move(port));
  }
}

// --- lexing -----------------------------------------------------------------

std::string strip_comments(std::string_view text) {
  std::string out(text);
  const std::size_t n = out.size();
  auto blank = [&](std::size_t from, std::size_t to) {
    for (std::size_t k = from; k < to && k < n; ++k) {
      if (out[k] != '\n') out[k] = ' ';
    }
  };
  std::size_t i = 0;
  while (i < n) {
    char c = out[i];
    if (c == '/' && i + 1 < n && out[i + 1] == '/') {
      auto end = out.find('\n', i);
      if (end == std::string::npos) end = n;
      blank(i, end);
      i = end;
    } else if (c == '/' && i + 1 < n && out[i + 1] == '*') {
      auto end = out.find("*/", i + 2);
      end = end == std::string::npos ? n : end + 2;
      blank(i, end);
      i = end;
    } else if (c == '"') {
      std::size_t j = i + 1;
      while (j < n && out[j] != '"' && out[j] != '\n') j += out[j] == '\\' ? 2 : 1;
      j = std::min(n, j + 1);
      blank(i, j);
      i = j;
    } else if (c == '`') {
      // Line directives are dropped whole; macro uses lose only their name.
      std::size_t j = i + 1;
      while (j < n && (std::isalnum(static_cast<unsigned char>(out[j])) || out[j] == '_')) ++j;
      std::string_view word(out.data() + i + 1, j - i - 1);
      static const std::unordered_set<std::string_view> kLineDirectives = {
          "timescale", "include", "define", "undef", "ifdef", "ifndef", "else", "elsif", "endif",
          "default_nettype", "resetall", "celldefine", "endcelldefine", "line", "pragma"};
      if (kLineDirectives.contains(word)) {
        auto end = out.find('\n', i);
        if (end == std::string::npos) end = n;
        // `define bodies continue across backslash-newline.
        while (word == "define" && end < n && end > 0 && out[end - 1] == '\\') {
          auto next = out.find('\n', end + 1);
          end = next == std::string::npos ? n : next;
        }
        blank(i, end);
        i = end;
      } else {
        blank(i, j);
        i = j;
      }
    } else {
      ++i;
    }
  }
  return out;
}

namespace {

enum class TokKind { ident, number, system, punct };

struct Token {
  TokKind kind;
  std::string text;
};

bool ident_start(char c) { return std::isalpha(static_cast<unsigned char>(c)) || c == '_'; }
bool ident_char(char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '$'; }

std::vector<Token> tokenize(std::string_view raw) {
  const std::string text = strip_comments(raw);
  std::vector<Token> tokens;
  const std::size_t n = text.size();
  std::size_t i = 0;
  while (i < n) {
    char c = text[i];
    if (std::isspace(static_cast<unsigned char>(c))) {
      ++i;
    } else if (ident_start(c)) {
      std::size_t j = i + 1;
      while (j < n && ident_char(text[j])) ++j;
      tokens.push_back({TokKind::ident, text.substr(i, j - i)});
      i = j;
    } else if (c == '\\') {
      std::size_t j = i + 1;
      while (j < n && !std::isspace(static_cast<unsigned char>(text[j]))) ++j;
      tokens.push_back({TokKind::ident, text.substr(i + 1, j - i - 1)});
      i = j;
    } else if (c == '$') {
      std::size_t j = i + 1;
      while (j < n && ident_char(text[j])) ++j;
      tokens.push_back({TokKind::system, text.substr(i, j - i)});
      i = j;
    } else if (std::isdigit(static_cast<unsigned char>(c)) || (c == '\'' && i + 1 < n && std::isalpha(static_cast<unsigned char>(text[i + 1])))) {
      // Decimal, or sized/unsized based literal such as 4'b1010, 'hFF, 8'sd3.
      std::size_t j = i;
      while (j < n && (std::isdigit(static_cast<unsigned char>(text[j])) || text[j] == '_')) ++j;
      std::size_t k = j;
      while (k < n && std::isspace(static_cast<unsigned char>(text[k]))) ++k;
      if (k < n && text[k] == '\'') {
        j = k + 1;
        if (j < n && (text[j] == 's' || text[j] == 'S')) ++j;
        if (j < n && std::isalpha(static_cast<unsigned char>(text[j]))) ++j;
        while (j < n && std::isspace(static_cast<unsigned char>(text[j]))) ++j;
        while (j < n && (std::isxdigit(static_cast<unsigned char>(text[j])) || text[j] == '_' ||
                         text[j] == 'x' || text[j] == 'X' || text[j] == 'z' || text[j] == 'Z' || text[j] == '?')) {
          ++j;
        }
      } else if (j < n && text[j] == '.') {
        ++j;
        while (j < n && std::isdigit(static_cast<unsigned char>(text[j]))) ++j;
      }
      tokens.push_back({TokKind::number, text.substr(i, j - i)});
      i = j;
    } else {
      // Keep the few two-character operators the width evaluator cares about.
      static constexpr std::array<std::string_view, 5> kPairs = {"**", "<<", ">>", "+:", "-:"};
      std::string_view rest(text.data() + i, std::min<std::size_t>(2, n - i));
      bool paired = false;
      for (auto p : kPairs) {
        if (rest == p) {
          tokens.push_back({TokKind::punct, std::string(p)});
          i += 2;
          paired = true;
          break;
        }
      }
      if (!paired) {
        tokens.push_back({TokKind::punct, std::string(1, c)});
        ++i;
      }
    }
  }
  return tokens;
}

const std::unordered_set<std::string_view>& keywords() {
  static const std::unordered_set<std::string_view> kKeywords = {
      "always", "always_comb", "always_ff", "always_latch", "and", "assign", "assert", "automatic", "begin",
      "bit", "buf", "byte", "case", "casex", "casez", "class", "const", "default", "defparam", "disable",
      "do", "edge", "else", "end", "endcase", "endclass", "endfunction", "endgenerate", "endinterface",
      "endmodule", "endpackage", "endprimitive", "endspecify", "endtask", "enum", "event", "final", "for",
      "force", "forever", "fork", "function", "generate", "genvar", "if", "import", "initial", "inout",
      "input", "int", "integer", "interface", "join", "join_any", "join_none", "localparam", "logic",
      "longint", "macromodule", "module", "nand", "negedge", "nor", "not", "or", "output", "package",
      "parameter", "posedge", "real", "realtime", "reg", "release", "repeat", "return", "shortint",
      "signed", "specify", "static", "string", "struct", "supply0", "supply1", "task", "time", "tri",
      "tri0", "tri1", "typedef", "union", "unique", "unsigned", "var", "void", "wait", "wand", "while",
      "wire", "wor", "xnor", "xor", "priority", "ref", "modport", "specparam", "wait_order"};
  return kKeywords;
}

bool is_ident(const Token& t) { return t.kind == TokKind::ident && !keywords().contains(t.text); }
bool is_punct(const Token& t, std::string_view p) { return t.kind == TokKind::punct && t.text == p; }
bool is_word(const Token& t, std::string_view w) { return t.kind == TokKind::ident && t.text == w; }

// Index one past the bracket that closes the one at `open`.
std::size_t skip_balanced(const std::vector<Token>& tokens, std::size_t open, std::string_view lhs,
                          std::string_view rhs) {
  int depth = 0;
  for (std::size_t i = open; i < tokens.size(); ++i) {
    if (is_punct(tokens[i], lhs)) ++depth;
    if (is_punct(tokens[i], rhs) && --depth == 0) return i + 1;
  }
  return tokens.size();
}

struct ModuleSpan {
  std::string name;
  std::size_t name_index = 0;  // token index of the name
  std::size_t end_index = 0;   // token index of endmodule (or end of tokens)
};

std::vector<ModuleSpan> module_spans(const std::vector<Token>& tokens) {
  std::vector<ModuleSpan> spans;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (!is_word(tokens[i], "module") && !is_word(tokens[i], "macromodule")) continue;
    std::size_t j = i + 1;
    if (j < tokens.size() && (is_word(tokens[j], "automatic") || is_word(tokens[j], "static"))) ++j;
    if (j >= tokens.size() || tokens[j].kind != TokKind::ident) continue;
    ModuleSpan span{tokens[j].text, j, tokens.size()};
    for (std::size_t k = j + 1; k < tokens.size(); ++k) {
      if (is_word(tokens[k], "endmodule")) {
        span.end_index = k;
        break;
      }
    }
    spans.push_back(span);
    i = span.end_index == tokens.size() ? j : span.end_index;
  }
  return spans;
}

bool statement_boundary(const std::vector<Token>& tokens, std::size_t i) {
  if (i == 0) return true;
  const Token& prev = tokens[i - 1];
  if (is_punct(prev, ";")) return true;
  static const std::unordered_set<std::string_view> kOpeners = {"begin", "end", "generate", "endgenerate",
                                                                "else", "endcase", "endfunction", "endtask"};
  if (prev.kind == TokKind::ident && kOpeners.contains(prev.text)) return true;
  // Named block: `begin : label`.
  if (i >= 3 && prev.kind == TokKind::ident && is_punct(tokens[i - 2], ":") && is_word(tokens[i - 3], "begin")) {
    return true;
  }
  return false;
}

std::vector<std::string> instantiated_in(const std::vector<Token>& tokens, std::size_t from, std::size_t to) {
  std::vector<std::string> found;
  for (std::size_t i = from; i < to; ++i) {
    if (!is_ident(tokens[i]) || !statement_boundary(tokens, i)) continue;
    std::size_t j = i + 1;
    if (j < to && is_punct(tokens[j], "#")) {
      ++j;
      if (j < to && is_punct(tokens[j], "(")) {
        j = skip_balanced(tokens, j, "(", ")");
      } else if (j < to) {
        ++j;  // #5-style single-token parameter
      }
    }
    if (j >= to || !is_ident(tokens[j])) continue;
    ++j;
    while (j < to && is_punct(tokens[j], "[")) j = skip_balanced(tokens, j, "[", "]");
    if (j < to && is_punct(tokens[j], "(")) found.push_back(tokens[i].text);
  }
  return found;
}

// --- width expressions ------------------------------------------------------

using ParamTable = std::map<std::string, std::vector<Token>>;

class ExprEval {
 public:
  ExprEval(const std::vector<Token>& tokens, const ParamTable& params, int depth = 0)
      : tokens_(tokens), params_(params), depth_(depth) {}

  std::optional<long long> run() {
    if (tokens_.empty() || depth_ > 16) return std::nullopt;
    auto v = shift();
    if (!ok_ || pos_ != tokens_.size()) return std::nullopt;
    return v;
  }

 private:
  const Token* peek() const { return pos_ < tokens_.size() ? &tokens_[pos_] : nullptr; }
  bool accept(std::string_view p) {
    if (auto t = peek(); t && t->kind == TokKind::punct && t->text == p) {
      ++pos_;
      return true;
    }
    return false;
  }

  long long shift() {
    long long v = additive();
    for (;;) {
      if (accept("<<")) {
        v <<= additive();
      } else if (accept(">>")) {
        v >>= additive();
      } else {
        return v;
      }
    }
  }
  long long additive() {
    long long v = multiplicative();
    for (;;) {
      if (accept("+")) {
        v += multiplicative();
      } else if (accept("-")) {
        v -= multiplicative();
      } else {
        return v;
      }
    }
  }
  long long multiplicative() {
    long long v = power();
    for (;;) {
      if (accept("*")) {
        v *= power();
      } else if (accept("/")) {
        long long d = power();
        if (d == 0) return fail();
        v /= d;
      } else if (accept("%")) {
        long long d = power();
        if (d == 0) return fail();
        v %= d;
      } else {
        return v;
      }
    }
  }
  long long power() {
    long long base = unary();
    if (accept("**")) {
      long long exp = unary();
      if (exp < 0 || exp > 62) return fail();
      long long r = 1;
      for (long long k = 0; k < exp; ++k) r *= base;
      return r;
    }
    return base;
  }
  long long unary() {
    if (accept("-")) return -unary();
    if (accept("+")) return unary();
    return primary();
  }
  long long primary() {
    const Token* t = peek();
    if (!t) return fail();
    if (accept("(")) {
      long long v = shift();
      if (!accept(")")) return fail();
      return v;
    }
    if (t->kind == TokKind::number) {
      ++pos_;
      return parse_number(t->text);
    }
    if (t->kind == TokKind::system && t->text == "$clog2") {
      ++pos_;
      if (!accept("(")) return fail();
      long long x = shift();
      if (!accept(")")) return fail();
      long long bits = 0;
      while ((1LL << bits) < x) ++bits;
      return bits;
    }
    if (t->kind == TokKind::ident) {
      ++pos_;
      auto it = params_.find(t->text);
      if (it == params_.end()) return fail();
      auto v = ExprEval(it->second, params_, depth_ + 1).run();
      if (!v) return fail();
      return *v;
    }
    return fail();
  }

  long long parse_number(const std::string& text) {
    std::string digits;
    int base = 10;
    auto quote = text.find('\'');
    std::string body = quote == std::string::npos ? text : text.substr(quote + 1);
    if (quote != std::string::npos) {
      std::size_t k = 0;
      if (k < body.size() && (body[k] == 's' || body[k] == 'S')) ++k;
      char b = k < body.size() ? static_cast<char>(std::tolower(static_cast<unsigned char>(body[k]))) : 'd';
      base = b == 'b' ? 2 : b == 'o' ? 8 : b == 'h' ? 16 : 10;
      body = body.substr(k + 1);
    }
    for (char c : body) {
      if (c == '_' || std::isspace(static_cast<unsigned char>(c))) continue;
      if (c == '.') break;
      digits += c;
    }
    long long value = 0;
    auto [ptr, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), value, base);
    if (ec != std::errc() || digits.empty()) return fail();
    return value;
  }

  long long fail() {
    ok_ = false;
    pos_ = tokens_.size();
    return 0;
  }

  const std::vector<Token>& tokens_;
  const ParamTable& params_;
  int depth_;
  std::size_t pos_ = 0;
  bool ok_ = true;
};

// Width of one `[a:b]` (or `[base+:w]`) range starting at tokens[open].
std::optional<unsigned> range_width(const std::vector<Token>& tokens, std::size_t open, std::size_t close,
                                    const ParamTable& params) {
  std::vector<Token> lhs, rhs;
  bool indexed = false;
  int depth = 0;
  bool seen_colon = false;
  for (std::size_t k = open + 1; k + 1 < close; ++k) {
    const Token& t = tokens[k];
    if (is_punct(t, "(") || is_punct(t, "[")) ++depth;
    if (is_punct(t, ")") || is_punct(t, "]")) --depth;
    if (depth == 0 && !seen_colon && (is_punct(t, ":") || is_punct(t, "+:") || is_punct(t, "-:"))) {
      seen_colon = true;
      indexed = t.text != ":";
      continue;
    }
    (seen_colon ? rhs : lhs).push_back(t);
  }
  if (!seen_colon) return std::nullopt;
  auto b = ExprEval(rhs, params).run();
  if (!b) return std::nullopt;
  if (indexed) {
    if (*b < 1) return std::nullopt;
    return static_cast<unsigned>(*b);
  }
  auto a = ExprEval(lhs, params).run();
  if (!a) return std::nullopt;
  long long w = (*a > *b ? *a - *b : *b - *a) + 1;
  return static_cast<unsigned>(w);
}

bool is_direction(const Token& t) {
  return is_word(t, "input") || is_word(t, "output") || is_word(t, "inout");
}

PortDirection direction_of(const Token& t) {
  if (is_word(t, "output")) return PortDirection::output;
  if (is_word(t, "inout")) return PortDirection::inout;
  return PortDirection::input;
}

bool is_type_word(const Token& t) {
  static const std::unordered_set<std::string_view> kTypes = {
      "wire", "reg", "logic", "signed", "unsigned", "var", "tri", "bit", "integer", "int", "byte",
      "shortint", "longint", "wand", "wor", "tri0", "tri1", "supply0", "supply1", "time"};
  return t.kind == TokKind::ident && kTypes.contains(t.text);
}

unsigned implicit_type_width(const std::string& type) {
  if (type == "integer" || type == "int") return 32;
  if (type == "byte") return 8;
  if (type == "shortint") return 16;
  if (type == "longint" || type == "time") return 64;
  return 1;
}

// Collects `parameter/localparam NAME = expr` within [from, to).
void collect_params(const std::vector<Token>& tokens, std::size_t from, std::size_t to, ParamTable& params) {
  for (std::size_t i = from; i < to; ++i) {
    if (!is_word(tokens[i], "parameter") && !is_word(tokens[i], "localparam")) continue;
    std::size_t j = i + 1;
    while (j < to) {
      // Skip type and range words up to the name.
      while (j < to && (is_type_word(tokens[j]) || is_punct(tokens[j], "["))) {
        j = is_punct(tokens[j], "[") ? skip_balanced(tokens, j, "[", "]") : j + 1;
      }
      if (j >= to || tokens[j].kind != TokKind::ident) break;
      std::string name = tokens[j].text;
      ++j;
      if (j >= to || !is_punct(tokens[j], "=")) break;
      ++j;
      std::vector<Token> expr;
      int depth = 0;
      while (j < to) {
        const Token& t = tokens[j];
        if (is_punct(t, "(") || is_punct(t, "[") || is_punct(t, "{")) ++depth;
        if (is_punct(t, ")") || is_punct(t, "]") || is_punct(t, "}")) {
          if (depth == 0) break;
          --depth;
        }
        if (depth == 0 && (is_punct(t, ",") || is_punct(t, ";"))) break;
        expr.push_back(t);
        ++j;
      }
      params[name] = std::move(expr);
      if (j < to && is_punct(tokens[j], ",")) {
        ++j;
        // `parameter A = 1, parameter B = 2` inside #( ) restarts the keyword.
        if (j < to && (is_word(tokens[j], "parameter") || is_word(tokens[j], "localparam"))) break;
        continue;
      }
      break;
    }
  }
}

struct Declared {
  PortDirection direction = PortDirection::input;
  std::optional<unsigned> width;
  bool width_known = true;
};

// Parses one declaration head starting at `i` (after any direction keyword
// has been consumed): types, packed ranges. Returns the index of the first
// name token.
std::size_t parse_decl_head(const std::vector<Token>& tokens, std::size_t i, std::size_t to,
                            const ParamTable& params, std::optional<unsigned>& width, bool& width_known,
                            bool& saw_type_or_range) {
  unsigned type_width = 1;
  std::optional<unsigned> packed;
  while (i < to) {
    if (is_type_word(tokens[i])) {
      type_width = std::max(type_width, implicit_type_width(tokens[i].text));
      saw_type_or_range = true;
      ++i;
    } else if (is_punct(tokens[i], "[")) {
      std::size_t close = skip_balanced(tokens, i, "[", "]");
      auto w = range_width(tokens, i, close, params);
      saw_type_or_range = true;
      if (!w) {
        width_known = false;
      } else {
        packed = packed.value_or(1) * *w;
      }
      i = close;
    } else {
      break;
    }
  }
  if (saw_type_or_range) width = packed ? *packed : type_width;
  return i;
}

}  // namespace

std::vector<std::string> declared_modules(std::string_view text) {
  std::vector<std::string> names;
  for (auto& span : module_spans(tokenize(text))) names.push_back(span.name);
  return names;
}

std::vector<std::string> instantiated_modules(std::string_view text) {
  auto tokens = tokenize(text);
  return instantiated_in(tokens, 0, tokens.size());
}

bool instantiates_external_module(std::string_view text) {
  auto tokens = tokenize(text);
  std::set<std::string> declared;
  for (auto& span : module_spans(tokens)) declared.insert(span.name);
  for (auto& name : instantiated_in(tokens, 0, tokens.size())) {
    if (!declared.contains(name)) return true;
  }
  return false;
}

ModuleInterface parse_interface(std::string_view text) {
  auto tokens = tokenize(text);
  auto spans = module_spans(tokens);
  if (spans.empty()) throw NoModuleFound("no module declaration found");

  std::set<std::string> instantiated;
  for (const auto& span : spans) {
    for (auto& name : instantiated_in(tokens, span.name_index + 1, span.end_index)) instantiated.insert(name);
  }
  const ModuleSpan* top = &spans.front();
  for (const auto& span : spans) {
    if (!instantiated.contains(span.name)) {
      top = &span;
      break;
    }
  }

  ModuleInterface iface;
  iface.module_name = top->name;
  const std::size_t end = top->end_index;
  std::size_t i = top->name_index + 1;

  ParamTable params;
  collect_params(tokens, i, end, params);

  // Package imports in the header.
  while (i < end && is_word(tokens[i], "import")) {
    while (i < end && !is_punct(tokens[i], ";")) ++i;
    ++i;
  }
  if (i < end && is_punct(tokens[i], "#")) {
    ++i;
    if (i < end && is_punct(tokens[i], "(")) i = skip_balanced(tokens, i, "(", ")");
  }
  if (i >= end || !is_punct(tokens[i], "(")) return iface;  // no port list

  const std::size_t list_open = i;
  const std::size_t list_close = skip_balanced(tokens, list_open, "(", ")") - 1;
  std::size_t body = list_close + 1;
  while (body < end && !is_punct(tokens[body], ";")) ++body;

  bool ansi = false;
  for (std::size_t k = list_open + 1; k < list_close; ++k) {
    if (is_direction(tokens[k])) {
      ansi = true;
      break;
    }
  }

  std::set<std::string> seen;
  auto add_port = [&](Port port) {
    if (seen.insert(port.name).second) iface.ports.push_back(std::move(port));
  };

  if (ansi) {
    PortDirection dir = PortDirection::input;
    std::optional<unsigned> width = 1u;
    bool width_known = true;
    std::size_t k = list_open + 1;
    while (k < list_close) {
      std::size_t stop = k;
      int depth = 0;
      while (stop < list_close) {
        const Token& t = tokens[stop];
        if (is_punct(t, "(") || is_punct(t, "[") || is_punct(t, "{")) ++depth;
        if (is_punct(t, ")") || is_punct(t, "]") || is_punct(t, "}")) --depth;
        if (depth == 0 && is_punct(t, ",")) break;
        ++stop;
      }
      std::size_t j = k;
      bool has_dir = false;
      if (j < stop && is_direction(tokens[j])) {
        dir = direction_of(tokens[j]);
        has_dir = true;
        ++j;
      }
      std::optional<unsigned> entry_width;
      bool entry_known = true;
      bool saw = false;
      j = parse_decl_head(tokens, j, stop, params, entry_width, entry_known, saw);
      if (has_dir || saw) {
        width = saw ? entry_width : 1u;
        width_known = entry_known;
      }
      if (j < stop && tokens[j].kind == TokKind::ident) {
        Port port{tokens[j].text, dir, width.value_or(1)};
        if (!width_known) iface.complete = false;
        add_port(std::move(port));
      } else {
        iface.complete = false;
      }
      k = stop + 1;
    }
    return iface;
  }

  // Non-ANSI: names in the header, directions in the body.
  std::vector<std::string> names;
  for (std::size_t k = list_open + 1; k < list_close; ++k) {
    if (tokens[k].kind == TokKind::ident && (k == list_open + 1 || is_punct(tokens[k - 1], ","))) {
      names.push_back(tokens[k].text);
    }
  }
  std::map<std::string, Declared> directions;
  std::map<std::string, unsigned> typed_widths;
  for (std::size_t k = body; k < end; ++k) {
    bool dir_decl = is_direction(tokens[k]);
    bool type_decl = (is_word(tokens[k], "reg") || is_word(tokens[k], "wire") || is_word(tokens[k], "logic")) &&
                     (k == 0 || is_punct(tokens[k - 1], ";"));
    if (!dir_decl && !type_decl) continue;
    if (!(k == 0 || is_punct(tokens[k - 1], ";") || is_word(tokens[k - 1], "begin") ||
          is_word(tokens[k - 1], "end"))) {
      continue;
    }
    PortDirection dir = dir_decl ? direction_of(tokens[k]) : PortDirection::input;
    std::size_t j = dir_decl ? k + 1 : k;
    std::optional<unsigned> width;
    bool known = true;
    bool saw = false;
    j = parse_decl_head(tokens, j, end, params, width, known, saw);
    while (j < end && !is_punct(tokens[j], ";")) {
      if (tokens[j].kind == TokKind::ident && (is_punct(tokens[j - 1], ",") || j == k + 1 || !is_ident(tokens[j - 1]))) {
        if (dir_decl) {
          directions[tokens[j].text] = Declared{dir, width, known};
        } else if (width && known) {
          typed_widths[tokens[j].text] = *width;
        }
      }
      if (is_punct(tokens[j], "[")) {
        j = skip_balanced(tokens, j, "[", "]");
      } else if (is_punct(tokens[j], "=")) {
        while (j < end && !is_punct(tokens[j], ",") && !is_punct(tokens[j], ";")) ++j;
      } else {
        ++j;
      }
    }
    k = j;
  }
  for (auto& name : names) {
    auto it = directions.find(name);
    if (it == directions.end()) {
      iface.complete = false;
      add_port(Port{name, PortDirection::input, 1});
      continue;
    }
    unsigned width = 1;
    if (it->second.width) {
      width = *it->second.width;
    } else if (auto t = typed_widths.find(name); t != typed_widths.end()) {
      width = t->second;
    }
    if (!it->second.width_known) iface.complete = false;
    add_port(Port{name, it->second.direction, width});
  }
  return iface;
}

// --- fenced code ------------------------------------------------------------

namespace {

std::string lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) { return std::tolower(c); });
  return out;
}

struct Fence {
  std::string tag;
  std::string body;
};

std::vector<Fence> scan_fences(std::string_view text) {
  std::vector<Fence> fences;
  std::size_t pos = 0;
  while (pos < text.size()) {
    auto open = text.find("```", pos);
    if (open == std::string_view::npos) break;
    std::size_t run = open;
    while (run < text.size() && text[run] == '`') ++run;
    const std::string_view marker = text.substr(open, run - open);
    auto line_end = text.find('\n', run);
    if (line_end == std::string_view::npos) break;
    std::string_view info = text.substr(run, line_end - run);
    auto first = info.find_first_not_of(" \t\r");
    std::string tag;
    if (first != std::string_view::npos) {
      auto last = info.find_first_of(" \t\r{", first);
      tag = lower(info.substr(first, last == std::string_view::npos ? std::string_view::npos : last - first));
    }
    const std::size_t body_begin = line_end + 1;
    auto close = text.find(marker, body_begin);
    // A body ending right at the opening line (empty block) closes at body_begin.
    if (close == std::string_view::npos) break;
    std::string_view body = text.substr(body_begin, close - body_begin);
    if (!body.empty() && body.back() == '\n') body.remove_suffix(1);
    fences.push_back({std::move(tag), std::string(body)});
    std::size_t after = close + marker.size();
    while (after < text.size() && text[after] == '`') ++after;
    pos = after;
  }
  return fences;
}

}  // namespace

std::optional<std::string> extract_fenced(std::string_view message, std::span<const std::string_view> tags) {
  auto fences = scan_fences(message);
  for (auto it = fences.rbegin(); it != fences.rend(); ++it) {
    for (auto tag : tags) {
      if (it->tag == lower(tag)) return it->body;
    }
  }
  for (auto it = fences.rbegin(); it != fences.rend(); ++it) {
    if (it->tag.empty()) return it->body;
  }
  return std::nullopt;
}

std::optional<VerilogSource> extract_code(std::string_view message, std::string_view language_tag, Origin origin) {
  std::array<std::string_view, 1> tags{language_tag};
  auto body = extract_fenced(message, tags);
  if (!body || body->empty()) return std::nullopt;
  return VerilogSource(std::move(*body), origin);
}

std::optional<VerilogSource> extract_verilog(std::string_view message, Origin origin) {
  static constexpr std::array<std::string_view, 4> kTags = {"verilog", "systemverilog", "sv", "v"};
  auto body = extract_fenced(message, kTags);
  if (!body || body->empty()) return std::nullopt;
  return VerilogSource(std::move(*body), origin);
}

std::string embed_in_fence(std::string_view body, std::string_view language_tag) {
  std::string out = "```";
  out += language_tag;
  out += '\n';
  out += body;
  out += "\n```";
  return out;
}

bool mentions_identifier(std::string_view text, std::string_view identifier) {
  if (identifier.empty()) return false;
  std::size_t pos = 0;
  while ((pos = text.find(identifier, pos)) != std::string_view::npos) {
    bool left_ok = pos == 0 || !ident_char(text[pos - 1]);
    std::size_t after = pos + identifier.size();
    bool right_ok = after >= text.size() || !ident_char(text[after]);
    if (left_ok && right_ok) return true;
    pos = after;
  }
  return false;
}

}  // namespace rtlforge
