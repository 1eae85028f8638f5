#pragma once

#include <map>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "memex/evaluation.hpp"
#include "memex/retrieval_config.hpp"

namespace memex {

struct DiagnosisProposal {
    json root_causes = json::object();
    std::vector<std::string> missing_topics;
    std::map<std::string, json> parameter_suggestions;
    json extraction_suggestions = json::object();
    std::map<std::string, json> per_category_proposals;
    std::vector<std::string> priority_actions;
    /// Suggestion keys that name no existing config field; recorded, never applied.
    std::vector<std::string> discovered_dimensions;

    json to_json() const;
    static DiagnosisProposal from_json(const json& j);
};

struct GuardConfig {
    double revert_threshold = 0.01;  // tau_rev
    double convergence_eps = 0.005;  // epsilon (shared by explore + convergence)
    int max_rounds = 7;
    double perturb_scale = 0.15;
    int stagnation_window = 2;  // consecutive sub-epsilon deltas before explore

    std::string validate() const;
};

enum class UpdateBranch { apply, revert, explore };
const char* to_string(UpdateBranch b);

struct RoundEntry {
    int round = 0;
    double score = 0.0;
    RetrievalConfig config;
    std::string branch;
    std::string summary_path;
};

struct EvolutionState {
    int round = 0;
    std::vector<RoundEntry> history;
    double best_score = 0.0;
    RetrievalConfig best_config;
    int stagnation_count = 0;
    bool last_branch_was_explore = false;
    bool terminated = false;
    std::string reason;  // converged | max_rounds | manual

    json to_json() const;
};

struct MetaUpdateResult {
    RetrievalConfig next;
    UpdateBranch branch = UpdateBranch::apply;
};

/// The guarded three-branch rule. Revert to the best-so-far when the score
/// dropped by more than revert_threshold; explore by random perturbation
/// after `stagnation_window` consecutive sub-epsilon deltas; otherwise apply
/// the clamped proposal. Revert outranks explore; both reset stagnation.
MetaUpdateResult meta_update(EvolutionState& state, double score,
                             const RetrievalConfig& current,
                             const DiagnosisProposal& proposal, const GuardConfig& guards,
                             std::mt19937_64& rng);

struct StoreStats {
    std::int64_t total_memories = 0;
    std::set<std::string> entity_vocab;  // lowercased
};

enum class DiagnosisMode { rubric, llm };

/// Rubric mode applies the decision rules deterministically; llm mode renders
/// the diagnosis template and parses the structured proposal, falling back to
/// the rubric after one failed repair reprompt.
DiagnosisProposal diagnose(const RoundSummary& summary,
                           const std::vector<RawResultRecord>& records,
                           const RetrievalConfig& cfg, const StoreStats& stats,
                           Gateway* gateway, const PromptLibrary* prompts,
                           DiagnosisMode mode, const std::string& benchmark_name);

struct EvolutionOptions {
    GuardConfig guards;
    ExtractionConfig extraction;
    ConsolidationConfig consolidation;
    DiagnosisMode diagnosis_mode = DiagnosisMode::llm;
    std::string run_dir;  // artifacts land in run_dir/round_<r>/...
    std::string benchmark_name = "dataset";
    BenchmarkKind kind = BenchmarkKind::free_text;
    Scope scope{"default", "main", std::nullopt};
    bool skip_ingest = false;  // reuse a pre-populated store
};

struct EvolutionOutcome {
    RetrievalConfig best_config;
    EvolutionState state;
};

/// The full loop: extract once, consolidate, then per round build indexes,
/// evaluate, diagnose, meta-update, optionally re-extract for coverage gaps.
/// Stops on convergence (a sub-epsilon round right after an explore) or the
/// round cap. Artifacts: round_<r>/{config.json, raw_results.jsonl,
/// round_summary.json, diagnosis.json, branch.txt} plus best_config.json,
/// state.json and discovered_dimensions.json at the top.
EvolutionOutcome run_evolution(const std::vector<DatasetSample>& samples,
                               const RetrievalConfig& theta0, Gateway& gateway,
                               const PromptLibrary& prompts, MemoryStore& store,
                               Embedder& embedder, Timestamp now, std::mt19937_64& rng,
                               const EvolutionOptions& options);

}  // namespace memex
