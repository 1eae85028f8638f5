#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "memex/gateway.hpp"
#include "memex/prompts.hpp"
#include "memex/retrieval.hpp"
#include "memex/retrieval_config.hpp"
#include "memex/types.hpp"

namespace memex {

struct AnswerResult {
    std::string reasoning;
    std::string answer;
    double confidence = 0.5;
    bool verified = false;
    std::string raw_response;
    bool failed = false;  // both passes unparseable; answer falls back to "unknown"
};

/// Case-insensitive membership in the Unknown class
/// {"unknown", "not specified", "not mentioned", ""}.
bool is_unknown_answer(const std::string& answer);

/// Category ids routed to the adversarial / inferential prompt branches.
/// Data-driven so dataset loaders can rebind ids without code changes.
struct CategoryRouter {
    std::map<std::string, std::string> routes = {
        {"5", "adversarial"}, {"adversarial", "adversarial"},
        {"3", "inferential"}, {"inferential", "inferential"},
    };
    std::optional<std::string> route(const std::string& category) const;
};

/// "[i] (type, date) content" lines in ranking order.
std::string render_context(const std::vector<MemoryUnit>& context);

AnswerResult generate_answer(const std::string& question, const std::string& category,
                             const std::optional<std::array<std::string, 4>>& options,
                             const std::vector<MemoryUnit>& context, AnswerStyle style,
                             Gateway& gateway, const PromptLibrary& prompts,
                             const CategoryRouter& router = {});

/// Second pass, gated on conf < threshold or membership in the Unknown class.
/// Best-effort: gateway failure returns the candidate unchanged.
AnswerResult verify_answer(const std::string& question,
                           const std::vector<MemoryUnit>& context,
                           const AnswerResult& candidate, const RetrievalConfig& cfg,
                           Gateway& gateway, const PromptLibrary& prompts);

struct AnswerOutcome {
    AnswerResult result;
    RetrievalResult retrieval;
};

/// retrieve -> generate -> optional reflection re-queries -> optional verify.
AnswerOutcome answer_question(const std::string& question, const std::string& category,
                              const std::optional<std::array<std::string, 4>>& options,
                              const RetrievalIndex& index, const RetrievalConfig& cfg,
                              Gateway& gateway, const PromptLibrary& prompts,
                              Embedder& embedder, Timestamp now,
                              const CategoryRouter& router = {});

}  // namespace memex
