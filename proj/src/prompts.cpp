#include "memex/prompts.hpp"

#include <cctype>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>
#include <vector>

namespace memex {

namespace fs = std::filesystem;

namespace {

const std::vector<std::string>& required_templates() {
    static const std::vector<std::string> kRequired = {
        "extract",
        "decompose",
        "diagnose",
        "answer/system",
        "answer/concise",
        "answer/explanatory",
        "answer/verifying",
        "answer/inferential",
        "answer/strict",
        "answer/list",
        "answer/adversarial",
        "answer/mcq",
        "answer/mcq_system",
        "verify/system",
        "verify/strict",
        "verify/multi_candidate",
    };
    return kRequired;
}

std::string read_file(const fs::path& p) {
    std::ifstream in(p);
    if (!in) throw std::runtime_error("missing prompt template: " + p.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace

PromptLibrary PromptLibrary::load(const std::string& dir) {
    PromptLibrary lib;
    std::set<std::string> style_files;
    for (const auto& key : required_templates()) {
        fs::path p = fs::path(dir) / (key + ".txt");
        lib.templates_[key] = read_file(p);
    }
    // Style-template bijection: the six answer styles must each bind to a
    // distinct, non-empty template.
    const char* styles[] = {"concise", "explanatory", "verifying",
                            "inferential", "strict", "list"};
    std::set<std::string> bodies;
    for (const char* s : styles) {
        const std::string& body = lib.templates_.at(std::string("answer/") + s);
        if (body.empty())
            throw std::runtime_error(std::string("empty answer template for style ") + s);
        if (!bodies.insert(body).second)
            throw std::runtime_error(std::string("answer style ") + s +
                                     " duplicates another style's template");
    }
    return lib;
}

std::string PromptLibrary::resolve_dir(const std::string& dir, const std::string& argv0) {
    std::vector<fs::path> candidates;
    candidates.emplace_back(dir);
    if (!argv0.empty()) {
        fs::path exe(argv0);
        if (exe.has_parent_path()) {
            candidates.push_back(exe.parent_path() / dir);
            candidates.push_back(exe.parent_path().parent_path() / dir);
        }
    }
    for (const auto& c : candidates) {
        if (fs::exists(c / "extract.txt")) return c.string();
    }
    return dir;
}

const std::string& PromptLibrary::get(const std::string& key) const {
    auto it = templates_.find(key);
    if (it == templates_.end())
        throw std::runtime_error("unknown prompt template: " + key);
    return it->second;
}

bool PromptLibrary::has(const std::string& key) const { return templates_.count(key) > 0; }

std::string PromptLibrary::render(const std::string& tpl,
                                  const std::map<std::string, std::string>& vars) {
    std::string out;
    out.reserve(tpl.size());
    size_t i = 0;
    while (i < tpl.size()) {
        if (tpl[i] == '{') {
            size_t j = i + 1;
            while (j < tpl.size() &&
                   (std::isalnum(static_cast<unsigned char>(tpl[j])) || tpl[j] == '_')) {
                ++j;
            }
            if (j < tpl.size() && tpl[j] == '}') {
                std::string key = tpl.substr(i + 1, j - i - 1);
                auto it = vars.find(key);
                if (it != vars.end()) {
                    out += it->second;
                    i = j + 1;
                    continue;
                }
            }
        }
        out.push_back(tpl[i]);
        ++i;
    }
    return out;
}

}  // namespace memex
