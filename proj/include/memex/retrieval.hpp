#pragma once

#include <map>
#include <optional>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

#include "memex/embedding.hpp"
#include "memex/gateway.hpp"
#include "memex/prompts.hpp"
#include "memex/retrieval_config.hpp"
#include "memex/store.hpp"
#include "memex/types.hpp"

namespace memex {

struct LexicalIndexConfig {
    double k1 = 1.5;
    double b = 0.75;
};

struct ScoredCandidate {
    std::string memory_id;
    double s_kw = 0.0;
    double s_sem = 0.0;
    int s_str = 0;
    std::optional<int> r_kw;
    std::optional<int> r_sem;
    std::optional<int> r_str;
    double s_fuse = 0.0;
    double s = 0.0;
    std::set<std::string> provenance;  // kw | sem | str | swap | decomp

    json to_json() const;
};

/// Immutable multi-view index over the active units of a base scope:
/// an inverted lexical index with document lengths and an IDF table, a dense
/// vector table, and metadata maps for persons/locations/entities.
class RetrievalIndex {
  public:
    const std::vector<MemoryUnit>& units() const { return units_; }
    size_t size() const { return units_.size(); }
    double avg_doc_len() const { return avg_doc_len_; }
    const MemoryUnit* unit_by_id(const std::string& id) const;

    /// Okapi BM25 with IDF(t) = ln(1 + (N - df + 0.5)/(df + 0.5)); only
    /// documents containing at least one query term appear in the result.
    std::map<std::string, double> score_bm25(const std::string& query,
                                             const LexicalIndexConfig& cfg = {}) const;

    /// Cosine per embedded unit; zero query vector scores every unit 0.
    /// Units without embeddings are absent. Throws on dimension mismatch.
    std::map<std::string, double> score_semantic(const EmbeddingVector& query_vec) const;

    /// Indicator sum over persons/locations/entities: the query's tokens and
    /// n-grams are matched against the index vocabulary per field; a unit
    /// scores 1 per field whose values intersect the extracted query values.
    std::map<std::string, int> score_structured(const std::string& query) const;

    /// Query n-grams (1..3 tokens) present in the persons vocabulary.
    std::vector<std::string> detect_person_spans(const std::string& query) const;

    /// Union of persons/locations/entities vocabulary values named by the
    /// query; this is what query co-occurrence reinforcement keys on.
    std::set<std::string> matched_metadata_values(const std::string& query) const;

  private:
    friend RetrievalIndex build_index(const MemoryStore& store, const Scope& scope);

    std::vector<MemoryUnit> units_;
    std::unordered_map<std::string, size_t> by_id_;
    std::unordered_map<std::string, std::vector<std::pair<size_t, int>>> postings_;
    std::vector<int> doc_len_;
    double avg_doc_len_ = 0.0;
    // lowercased vocab value -> unit indexes, per metadata field
    std::map<std::string, std::set<size_t>> persons_;
    std::map<std::string, std::set<size_t>> locations_;
    std::map<std::string, std::set<size_t>> entities_;

    std::set<std::string> extract_field_matches(
        const std::vector<std::string>& query_tokens,
        const std::map<std::string, std::set<size_t>>& vocab) const;
};

RetrievalIndex build_index(const MemoryStore& store, const Scope& scope);

/// One view's ranked contribution to fusion.
struct ViewList {
    std::string label;  // "kw" | "sem" | "str"
    std::vector<std::pair<std::string, double>> ranked;  // (memory_id, raw score) desc
};

/// sum: raw scores added; weighted_sum: per-view min-max normalized scores
/// weighted; rrf: sum of 1/(rrf_k + rank) with 1-based ranks.
std::vector<ScoredCandidate> fuse(const std::vector<ViewList>& views, FusionMode mode,
                                  double w_kw, double w_sem, double w_str, int rrf_k);

/// s = s_fuse + importance_weight * importance + recency_weight * rec + rho.
/// rec = 2^(-age/half_life) against reference_date (or `now`) when the half
/// life is set, else 0. Sorted by s desc, memory_id asc.
std::vector<ScoredCandidate> hybrid_rank(std::vector<ScoredCandidate> candidates,
                                         const RetrievalIndex& index,
                                         const RetrievalConfig& cfg, Timestamp now);

/// Person-stripped re-retrieval pool ranked under the same config; empty when
/// the query names no known person.
std::vector<ScoredCandidate> entity_swap_retrieve(const std::string& query,
                                                  const RetrievalIndex& index,
                                                  const RetrievalConfig& cfg,
                                                  Embedder& embedder, Timestamp now);

/// LLM query decomposition into at most decomposition_max_subqs sub-queries;
/// falls back to the original query alone on any gateway or parse failure.
std::vector<std::string> decompose_query(const std::string& query,
                                         const RetrievalConfig& cfg, Gateway& gateway,
                                         const PromptLibrary& prompts);

struct RetrievalResult {
    std::vector<MemoryUnit> context;            // truncated to max_context
    std::vector<ScoredCandidate> candidates;    // full final ranking
    std::vector<std::string> sub_queries;
};

RetrievalResult retrieve(const std::string& query, const std::string& category,
                         const RetrievalIndex& index, const RetrievalConfig& cfg,
                         Gateway* gateway, const PromptLibrary* prompts, Embedder& embedder,
                         Timestamp now);

}  // namespace memex
