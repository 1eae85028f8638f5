#pragma once

#include <functional>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "memex/types.hpp"

namespace memex {

enum class FusionMode { sum, rrf, weighted_sum };
const char* to_string(FusionMode m);
std::optional<FusionMode> fusion_mode_from_string(const std::string& s);

enum class AnswerStyle { concise, explanatory, verifying, inferential, strict, list };
const char* to_string(AnswerStyle s);
std::optional<AnswerStyle> answer_style_from_string(const std::string& s);

enum class VerificationStyle { strict, multi_candidate };
const char* to_string(VerificationStyle s);
std::optional<VerificationStyle> verification_style_from_string(const std::string& s);

/// The complete evolvable retrieval configuration. Defaults mirror the
/// minimal baseline: lexical view only, sum fusion, k_kw=5, B_ctx=8, all
/// augmentations off.
struct RetrievalConfig {
    // retrieval budgets
    int semantic_top_k = 10;
    int keyword_top_k = 5;
    int structured_top_k = 5;
    int max_context = 8;
    // view toggles (the baseline disables all but the lexical view)
    bool enable_semantic_view = false;
    bool enable_keyword_view = true;
    bool enable_structured_view = false;
    // fusion
    FusionMode fusion_mode = FusionMode::sum;
    double w_sem = 1.0;
    double w_kw = 1.0;
    double w_str = 1.0;
    int rrf_k = 60;
    // hybrid ranking weights
    double importance_weight = 0.2;
    double recency_weight = 0.1;
    // entity swap
    bool enable_entity_swap = false;
    int swap_topic_top_k = 5;
    int swap_merge_top_k = 10;
    // query decomposition
    bool enable_query_decomposition = false;
    int decomposition_max_subqs = 3;
    int decomposition_merge_top_k = 10;
    // reflection
    int reflection_rounds = 0;
    // answer generation / verification
    bool enable_answer_verification = false;
    VerificationStyle verification_style = VerificationStyle::strict;
    double verification_confidence_threshold = 0.6;
    AnswerStyle answer_style = AnswerStyle::concise;
    // time decay
    std::optional<double> time_decay_half_life_days;
    std::optional<std::string> reference_date;  // "YYYY-MM-DD"
    // per-category partial overrides, keyed by category id string
    std::map<std::string, json> per_category_overrides;

    bool operator==(const RetrievalConfig& o) const;
};

/// One evolvable dimension: name, kind, numeric range or enum value set,
/// and typed accessors. The registry drives serialization, clamping, delta
/// application and perturbation so the action space stays consistent.
struct ConfigFieldSpec {
    enum class Kind { integer, real, boolean, enumeration, optional_real, optional_date };
    std::string name;
    Kind kind = Kind::integer;
    double min = 0.0;
    double max = 0.0;
    std::vector<std::string> enum_values;
    std::function<json(const RetrievalConfig&)> get;
    /// Applies without clamping; false on type mismatch.
    std::function<bool(RetrievalConfig&, const json&)> set;
};

const std::vector<ConfigFieldSpec>& config_fields();
const ConfigFieldSpec* find_config_field(const std::string& name);

json config_to_json(const RetrievalConfig& cfg);

/// Strict parse: unknown fields raise with the offending name; values are
/// applied field-wise and the result clamped.
RetrievalConfig config_from_json(const json& j);

/// Projects every numeric field onto its valid range; malformed override
/// entries are dropped, numeric override values clamped.
RetrievalConfig clamp_config(const RetrievalConfig& cfg);

enum class ApplyStatus { applied, unknown_field, type_mismatch };

ApplyStatus apply_config_field(RetrievalConfig& cfg, const std::string& name,
                               const json& value);

struct DeltaOutcome {
    RetrievalConfig config;
    std::vector<std::string> rejected_fields;   // type mismatches, field kept as-is
    std::vector<std::string> unknown_fields;    // discovered-dimension candidates
};

/// Absolute-value overlay of a flat suggestion map plus per-category partial
/// overlays, followed by clamping. Unknown keys are reported, never applied.
DeltaOutcome apply_delta(const RetrievalConfig& cfg,
                         const std::map<std::string, json>& parameter_suggestions,
                         const std::map<std::string, json>& per_category_proposals = {});

/// Each numeric field moves by uniform(-1,1) * scale * range_width with
/// probability 0.3; one enum field is re-sampled with probability 0.3.
/// Deterministic for a fixed rng state; scale 0 is the identity.
RetrievalConfig perturb_config(const RetrievalConfig& cfg, double scale,
                               std::mt19937_64& rng);

/// Global config overlaid with the category's partial override, clamped.
RetrievalConfig effective_config(const RetrievalConfig& cfg, const std::string& category);

}  // namespace memex
