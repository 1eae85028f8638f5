#pragma once

#include <map>
#include <string>
#include <vector>

#include "memex/answering.hpp"
#include "memex/consolidation.hpp"
#include "memex/dataset.hpp"
#include "memex/retrieval.hpp"

namespace memex {

/// Lowercase, replace punctuation with whitespace, split. Articles are kept:
/// dropping them shifts the pinned case-study F1 values.
std::vector<std::string> normalize_answer(const std::string& textual);

/// Multiset-overlap precision/recall harmonic mean over normalized tokens.
/// Both empty -> 1.0; exactly one empty -> 0.0.
double token_f1(const std::string& prediction, const std::string& reference);

/// Clipped unigram precision times brevity penalty exp(1 - |ref|/|pred|)
/// applied when |pred| < |ref|. No smoothing.
double bleu1(const std::string& prediction, const std::string& reference);

/// 1 iff the first standalone A-D letter of the prediction matches the
/// reference (case-insensitive). Throws when the reference is not A-D.
int exact_match_mcq(const std::string& prediction, const std::string& reference);

struct SourceRef {
    std::string memory_id;
    std::vector<std::string> provenance;
    double score = 0.0;
};

struct RawResultRecord {
    std::string question_id;
    std::string question;
    std::string prediction;
    std::string reference;
    std::string category;
    std::map<std::string, double> metrics;
    std::vector<SourceRef> sources;
    std::string error;

    json to_json() const;
};

struct RoundSummary {
    int round_index = 0;
    double overall = 0.0;
    std::map<std::string, double> per_category;
    int zero_score_count = 0;
    RetrievalConfig config_snapshot;

    json to_json() const;
};

/// Per-sample evaluation context: the sample's scope, prebuilt index and
/// question set.
struct SampleContext {
    std::string sample_id;
    Scope scope;
    RetrievalIndex index;
    std::vector<QaItem> qa;
};

struct EvaluateOptions {
    int round_index = 0;
    BenchmarkKind kind = BenchmarkKind::free_text;
    std::string log_path;  // raw_results.jsonl; empty disables logging
    bool reinforce_on_query = true;
    ConsolidationConfig consolidation;
};

struct RoundOutcome {
    RoundSummary summary;
    std::vector<RawResultRecord> records;
};

/// Answers every question, writes one JSONL record per question, and computes
/// the round objective as the mean primary metric (F1 for free text, exact
/// match for MCQ). Per-question failures score 0 and never abort the round.
RoundOutcome evaluate_round(std::vector<SampleContext>& samples, MemoryStore& store,
                            const RetrievalConfig& cfg, Gateway& gateway,
                            const PromptLibrary& prompts, Embedder& embedder, Timestamp now,
                            const EvaluateOptions& options);

}  // namespace memex
