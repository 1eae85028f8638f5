#pragma once

#include <map>
#include <string>

namespace memex {

/// Loads the prompt templates shipped under prompts/ and renders {name}
/// placeholders. Loading fails fast when a required template is missing or
/// when two answer styles resolve to the same file.
class PromptLibrary {
  public:
    static PromptLibrary load(const std::string& dir);

    /// Looks in `dir`, then next to the executable, then one level up.
    static std::string resolve_dir(const std::string& dir, const std::string& argv0 = "");

    const std::string& get(const std::string& key) const;
    bool has(const std::string& key) const;

    static std::string render(const std::string& tpl,
                              const std::map<std::string, std::string>& vars);

  private:
    std::map<std::string, std::string> templates_;
};

}  // namespace memex
