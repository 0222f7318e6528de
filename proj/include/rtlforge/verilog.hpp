#pragma once

// Lexical handling of Verilog text: source records, module/instance discovery,
// port-interface extraction and fenced-code extraction from model output.

#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "rtlforge/errors.hpp"

namespace rtlforge {

enum class Origin { seed_corpus, solution_agent, testbench_agent, debug_agent, benchmark };

std::string_view to_string(Origin origin);
Origin origin_from_string(std::string_view text);

struct VerilogSource {
  std::string text;
  Origin origin = Origin::seed_corpus;
  std::optional<std::string> label;

  VerilogSource() = default;
  VerilogSource(std::string text, Origin origin, std::optional<std::string> label = {});

  friend bool operator==(const VerilogSource&, const VerilogSource&) = default;
};

void to_json(nlohmann::json& j, const VerilogSource& source);
void from_json(const nlohmann::json& j, VerilogSource& source);

enum class PortDirection { input, output, inout };

std::string_view to_string(PortDirection direction);

struct Port {
  std::string name;
  PortDirection direction = PortDirection::input;
  unsigned width = 1;

  friend bool operator==(const Port&, const Port&) = default;
};

struct ModuleInterface {
  std::string module_name;
  std::vector<Port> ports;
  // False when the port list could not be fully resolved and the interface
  // fell back to names only (directions/widths defaulted).
  bool complete = true;

  bool operator==(const ModuleInterface& other) const {
    return module_name == other.module_name && ports == other.ports;
  }

  // "module add(input [1:0] a, ...)"-style one-line summary, one port per line.
  std::string render() const;
};

void to_json(nlohmann::json& j, const ModuleInterface& iface);
void from_json(const nlohmann::json& j, ModuleInterface& iface);

// Text with comments, strings and compiler directives blanked out (offsets
// preserved).
std::string strip_comments(std::string_view text);

// Names of every `module` declared in the text, in order.
std::vector<std::string> declared_modules(std::string_view text);

// Names of every module type instantiated in the text, in order.
std::vector<std::string> instantiated_modules(std::string_view text);

// True when the text instantiates at least one module it does not declare.
bool instantiates_external_module(std::string_view text);

// Top module's name and ports. ANSI and non-ANSI headers are supported;
// widths come from `[msb:lsb]` with parameter defaults substituted. Throws
// NoModuleFound; unresolvable ports yield complete=false.
ModuleInterface parse_interface(std::string_view text);
inline ModuleInterface parse_interface(const VerilogSource& source) { return parse_interface(source.text); }

// Content of the last fenced block tagged with one of `tags`
// (case-insensitive), else of the last untagged fence, else nullopt.
std::optional<std::string> extract_fenced(std::string_view message, std::span<const std::string_view> tags);

std::optional<VerilogSource> extract_code(std::string_view message, std::string_view language_tag,
                                          Origin origin = Origin::solution_agent);

// Verilog blocks accept the common tag spellings (verilog, systemverilog, sv, v).
std::optional<VerilogSource> extract_verilog(std::string_view message, Origin origin);

std::string embed_in_fence(std::string_view body, std::string_view language_tag);

// Whole-word containment (identifier boundaries).
bool mentions_identifier(std::string_view text, std::string_view identifier);

}  // namespace rtlforge
