#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace rtlforge {

// One few-shot example for the revision agent.
struct RevisionExemplar {
  std::string name;
  std::string request;
  std::string code;
  std::string answer;
};

std::filesystem::path default_asset_dir();

// Prompt templates (`prompts/<id>.txt`, `{{name}}` placeholders) and exemplar
// fixtures loaded from an asset directory.
class PromptLibrary {
 public:
  explicit PromptLibrary(std::filesystem::path asset_dir = default_asset_dir());

  // Throws ConfigError for an unknown template or a placeholder with no value.
  std::string render(std::string_view template_id, const std::map<std::string, std::string>& vars = {}) const;
  const std::string& raw(std::string_view template_id) const;
  bool has(std::string_view template_id) const;

  const std::vector<RevisionExemplar>& revision_exemplars() const { return exemplars_; }
  // Exemplars formatted for inclusion in the revision prompt.
  std::string render_exemplars() const;

  const std::filesystem::path& asset_dir() const { return asset_dir_; }

 private:
  std::filesystem::path asset_dir_;
  std::map<std::string, std::string, std::less<>> templates_;
  std::vector<RevisionExemplar> exemplars_;
};

// Substitutes `{{name}}` placeholders; a placeholder without a value throws.
std::string fill_template(std::string_view text, const std::map<std::string, std::string>& vars);

}  // namespace rtlforge
