#pragma once

#include <functional>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "memex/gateway.hpp"
#include "memex/prompts.hpp"
#include "memex/store.hpp"
#include "memex/types.hpp"

namespace memex {

class Embedder;

struct Turn {
    std::string speaker;
    std::string text;
};

struct Session {
    std::string session_id;
    std::string date;  // "YYYY-MM-DD", may be empty
    std::vector<Turn> turns;
};

struct ExtractionConfig {
    int window_size = 40;
    int window_overlap = 5;
    int max_retries = 3;
    double retry_base_wait_sec = 1.0;  // doubles per retry
    int chunk_size = 15;               // sub-window turns for the overflow fallback
    int min_entries_per_window = 15;
    int min_restatement_words = 4;
    std::function<void(double)> sleep_fn;  // injectable; default real sleep

    /// Empty when valid, else the violated constraint.
    std::string validate() const;
};

struct ExtractedEntry {
    std::string lossless_restatement;
    std::vector<std::string> keywords;
    std::vector<std::string> persons;
    std::vector<std::string> entities;
    std::optional<std::string> timestamp;  // "YYYY-MM-DD"
    std::optional<std::string> location;
    std::string topic;

    json to_json() const;
};

struct ExtractionWindow {
    int index = 0;
    std::string date;
    int start_turn = 0;
    std::vector<Turn> turns;

    std::string dialogue_text() const;
};

struct CoverageReport {
    int window_index = 0;
    std::set<std::string> reference_keywords;
    std::set<std::string> covered;
    std::set<std::string> missing;
};

struct WindowExtraction {
    bool failed = false;
    std::string error;
    int retries_used = 0;
    int sub_calls = 1;
    std::vector<ExtractedEntry> entries;
};

struct IngestSummary {
    int windows = 0;
    int units_extracted = 0;
    int units_stored = 0;
    int failed_windows = 0;
    int coverage_gaps = 0;
    /// Validated entries in extraction order, kept for the extraction cache.
    std::vector<ExtractedEntry> entries;

    json to_json() const;
    /// Extraction cache: {sample_id, scope, entries:[...]}.
    json cache_json(const std::string& sample_id, const Scope& scope) const;
};

/// Overlapping sliding windows; consecutive windows share `window_overlap`
/// turns and every turn lands in at least one window.
std::vector<ExtractionWindow> partition_windows(const Session& session,
                                                const ExtractionConfig& cfg);

/// Guarded single-window extraction: retry with doubling waits on call
/// failure, split into chunk_size-turn sub-windows on context overflow, one
/// repair reprompt on malformed JSON. Partial results survive failures.
WindowExtraction extract_window(const ExtractionWindow& window,
                                const std::vector<ExtractedEntry>& prev_tail,
                                const ExtractionConfig& cfg, Gateway& gateway,
                                const PromptLibrary& prompts);

/// Entry -> unit mapping: episodic when the entry carries a timestamp, else
/// semantic; importance 0.5, confidence 0.8.
std::vector<MemoryUnit> entries_to_units(const std::vector<ExtractedEntry>& entries,
                                         const Scope& scope, const std::string& session_date,
                                         Timestamp now, std::mt19937_64& rng,
                                         const ExtractionConfig& cfg);

CoverageReport verify_coverage(const ExtractionWindow& window,
                               const std::vector<MemoryUnit>& extracted);

/// Re-invokes the extractor with the missing keywords injected; keeps only
/// units that cover at least one previously-missing keyword.
std::vector<MemoryUnit> targeted_reextract(const ExtractionWindow& window,
                                           const CoverageReport& report,
                                           const ExtractionConfig& cfg, Gateway& gateway,
                                           const PromptLibrary& prompts, const Scope& scope,
                                           Timestamp now, std::mt19937_64& rng);

IngestSummary ingest_conversation(const std::vector<Session>& sessions, const Scope& scope,
                                  const ExtractionConfig& cfg, Gateway& gateway,
                                  const PromptLibrary& prompts, MemoryStore& store,
                                  Embedder& embedder, Timestamp now, std::mt19937_64& rng);

}  // namespace memex
