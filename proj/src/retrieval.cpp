#include "memex/retrieval.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>

namespace memex {

namespace {

void sort_candidates(std::vector<ScoredCandidate>& cands) {
    std::sort(cands.begin(), cands.end(), [](const ScoredCandidate& a, const ScoredCandidate& b) {
        if (a.s != b.s) return a.s > b.s;
        return a.memory_id < b.memory_id;
    });
}

/// Score-descending, id-ascending order shared by every view.
template <typename T>
std::vector<std::pair<std::string, T>> ranked_from_map(const std::map<std::string, T>& m) {
    std::vector<std::pair<std::string, T>> out(m.begin(), m.end());
    std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) {
        if (a.second != b.second) return a.second > b.second;
        return a.first < b.first;
    });
    return out;
}

}  // namespace

json ScoredCandidate::to_json() const {
    json j;
    j["memory_id"] = memory_id;
    j["s_kw"] = s_kw;
    j["s_sem"] = s_sem;
    j["s_str"] = s_str;
    j["r_kw"] = r_kw ? json(*r_kw) : json(nullptr);
    j["r_sem"] = r_sem ? json(*r_sem) : json(nullptr);
    j["r_str"] = r_str ? json(*r_str) : json(nullptr);
    j["s_fuse"] = s_fuse;
    j["s"] = s;
    json prov = json::array();
    for (const auto& p : provenance) prov.push_back(p);
    j["provenance"] = std::move(prov);
    return j;
}

RetrievalIndex build_index(const MemoryStore& store, const Scope& scope) {
    RetrievalIndex index;
    index.units_ = store.query_scope(scope.base(), true, MemoryStatus::active);

    long total_len = 0;
    for (size_t i = 0; i < index.units_.size(); ++i) {
        const MemoryUnit& u = index.units_[i];
        index.by_id_[u.memory_id] = i;

        auto tokens = text::tokenize(u.content);
        index.doc_len_.push_back(static_cast<int>(tokens.size()));
        total_len += static_cast<long>(tokens.size());
        std::map<std::string, int> tf;
        for (const auto& t : tokens) ++tf[t];
        for (const auto& [term, count] : tf) index.postings_[term].push_back({i, count});

        for (const auto& p : u.persons) index.persons_[text::to_lower(p)].insert(i);
        for (const auto& l : u.locations) index.locations_[text::to_lower(l)].insert(i);
        for (const auto& e : u.entities) index.entities_[text::to_lower(e)].insert(i);
    }
    index.avg_doc_len_ = index.units_.empty()
                             ? 0.0
                             : static_cast<double>(total_len) /
                                   static_cast<double>(index.units_.size());
    return index;
}

const MemoryUnit* RetrievalIndex::unit_by_id(const std::string& id) const {
    auto it = by_id_.find(id);
    if (it == by_id_.end()) return nullptr;
    return &units_[it->second];
}

std::map<std::string, double> RetrievalIndex::score_bm25(
    const std::string& query, const LexicalIndexConfig& cfg) const {
    std::map<std::string, double> out;
    if (units_.empty()) return out;
    const double n_docs = static_cast<double>(units_.size());
    std::unordered_map<size_t, double> acc;

    // Duplicate query terms contribute once per occurrence, per the BM25 sum
    // over t in q.
    for (const auto& term : text::tokenize(query)) {
        auto it = postings_.find(term);
        if (it == postings_.end()) continue;
        const auto& posting = it->second;
        double df = static_cast<double>(posting.size());
        double idf = std::log(1.0 + (n_docs - df + 0.5) / (df + 0.5));
        for (const auto& [doc, tf] : posting) {
            double len_norm = avg_doc_len_ > 0.0
                                  ? static_cast<double>(doc_len_[doc]) / avg_doc_len_
                                  : 0.0;
            double tf_term = (static_cast<double>(tf) * (cfg.k1 + 1.0)) /
                             (static_cast<double>(tf) +
                              cfg.k1 * (1.0 - cfg.b + cfg.b * len_norm));
            acc[doc] += idf * tf_term;
        }
    }
    for (const auto& [doc, score] : acc) out[units_[doc].memory_id] = score;
    return out;
}

std::map<std::string, double> RetrievalIndex::score_semantic(
    const EmbeddingVector& query_vec) const {
    std::map<std::string, double> out;
    for (const auto& u : units_) {
        if (!u.embedding) continue;
        out[u.memory_id] = cosine(query_vec, *u.embedding);
    }
    return out;
}

std::set<std::string> RetrievalIndex::extract_field_matches(
    const std::vector<std::string>& query_tokens,
    const std::map<std::string, std::set<size_t>>& vocab) const {
    std::set<std::string> out;
    const size_t n = query_tokens.size();
    for (size_t len = 1; len <= 3; ++len) {
        for (size_t i = 0; i + len <= n; ++i) {
            std::string gram = query_tokens[i];
            for (size_t k = 1; k < len; ++k) gram += " " + query_tokens[i + k];
            if (vocab.count(gram)) out.insert(gram);
        }
    }
    return out;
}

std::map<std::string, int> RetrievalIndex::score_structured(const std::string& query) const {
    std::map<std::string, int> out;
    auto tokens = text::tokenize(query);
    const std::map<std::string, std::set<size_t>>* fields[3] = {&persons_, &locations_,
                                                                &entities_};
    for (const auto* vocab : fields) {
        auto matches = extract_field_matches(tokens, *vocab);
        std::set<size_t> docs;
        for (const auto& value : matches) {
            const auto& ids = vocab->at(value);
            docs.insert(ids.begin(), ids.end());
        }
        for (size_t doc : docs) out[units_[doc].memory_id] += 1;
    }
    return out;
}

std::vector<std::string> RetrievalIndex::detect_person_spans(const std::string& query) const {
    auto matches = extract_field_matches(text::tokenize(query), persons_);
    return {matches.begin(), matches.end()};
}

std::set<std::string> RetrievalIndex::matched_metadata_values(const std::string& query) const {
    auto tokens = text::tokenize(query);
    std::set<std::string> out;
    for (const auto* vocab : {&persons_, &locations_, &entities_}) {
        auto matches = extract_field_matches(tokens, *vocab);
        out.insert(matches.begin(), matches.end());
    }
    return out;
}

std::vector<ScoredCandidate> fuse(const std::vector<ViewList>& views, FusionMode mode,
                                  double w_kw, double w_sem, double w_str, int rrf_k) {
    std::map<std::string, ScoredCandidate> pool;

    auto slot = [&](const std::string& id) -> ScoredCandidate& {
        auto it = pool.find(id);
        if (it == pool.end()) {
            ScoredCandidate c;
            c.memory_id = id;
            it = pool.emplace(id, std::move(c)).first;
        }
        return it->second;
    };

    for (const auto& view : views) {
        double weight = view.label == "kw" ? w_kw : view.label == "sem" ? w_sem : w_str;
        // min-max endpoints over this view's contributed list
        double lo = 0.0, hi = 0.0;
        if (!view.ranked.empty()) {
            lo = view.ranked.back().second;
            hi = view.ranked.front().second;
        }
        for (size_t r = 0; r < view.ranked.size(); ++r) {
            const auto& [id, raw] = view.ranked[r];
            ScoredCandidate& c = slot(id);
            c.provenance.insert(view.label);
            int rank = static_cast<int>(r) + 1;
            if (view.label == "kw") {
                c.s_kw = raw;
                c.r_kw = rank;
            } else if (view.label == "sem") {
                c.s_sem = raw;
                c.r_sem = rank;
            } else {
                c.s_str = static_cast<int>(raw);
                c.r_str = rank;
            }
            switch (mode) {
                case FusionMode::sum:
                    c.s_fuse += raw;
                    break;
                case FusionMode::weighted_sum: {
                    double norm = hi > lo ? (raw - lo) / (hi - lo) : 1.0;
                    c.s_fuse += weight * norm;
                    break;
                }
                case FusionMode::rrf:
                    c.s_fuse += 1.0 / (static_cast<double>(rrf_k) + rank);
                    break;
            }
        }
    }

    std::vector<ScoredCandidate> out;
    out.reserve(pool.size());
    for (auto& [id, c] : pool) {
        c.s = c.s_fuse;
        out.push_back(std::move(c));
    }
    sort_candidates(out);
    return out;
}

std::vector<ScoredCandidate> hybrid_rank(std::vector<ScoredCandidate> candidates,
                                         const RetrievalIndex& index,
                                         const RetrievalConfig& cfg, Timestamp now) {
    Timestamp reference = now;
    if (cfg.reference_date) {
        Timestamp t;
        if (text::parse_timestamp(*cfg.reference_date, t)) reference = t;
    }
    for (auto& c : candidates) {
        const MemoryUnit* u = index.unit_by_id(c.memory_id);
        if (!u) continue;
        double rec = 0.0;
        if (cfg.time_decay_half_life_days && *cfg.time_decay_half_life_days > 0.0) {
            double age = text::age_days(u->created_at, reference);
            rec = std::exp2(-age / *cfg.time_decay_half_life_days);
            rec = std::clamp(rec, 0.0, 1.0);
        }
        c.s = c.s_fuse + cfg.importance_weight * u->importance +
              cfg.recency_weight * rec + u->reinforcement;
    }
    sort_candidates(candidates);
    return candidates;
}

namespace {

std::vector<ViewList> run_views(const std::string& query, const RetrievalIndex& index,
                                const RetrievalConfig& cfg, Embedder& embedder,
                                int top_k_override = 0) {
    std::vector<ViewList> views;
    auto take = [&](std::vector<std::pair<std::string, double>> ranked, int k) {
        if (static_cast<int>(ranked.size()) > k) ranked.resize(static_cast<size_t>(k));
        return ranked;
    };

    if (cfg.enable_keyword_view) {
        ViewList v;
        v.label = "kw";
        int k = top_k_override > 0 ? top_k_override : cfg.keyword_top_k;
        v.ranked = take(ranked_from_map(index.score_bm25(query)), k);
        views.push_back(std::move(v));
    }
    if (cfg.enable_semantic_view) {
        ViewList v;
        v.label = "sem";
        int k = top_k_override > 0 ? top_k_override : cfg.semantic_top_k;
        auto qvec = embedder.embed({query});
        v.ranked = take(ranked_from_map(index.score_semantic(qvec.front())), k);
        views.push_back(std::move(v));
    }
    if (cfg.enable_structured_view) {
        ViewList v;
        v.label = "str";
        int k = top_k_override > 0 ? top_k_override : cfg.structured_top_k;
        auto scores = index.score_structured(query);
        std::map<std::string, double> as_double(scores.begin(), scores.end());
        v.ranked = take(ranked_from_map(as_double), k);
        views.push_back(std::move(v));
    }
    return views;
}

std::vector<ScoredCandidate> fused_ranked(const std::string& query,
                                          const RetrievalIndex& index,
                                          const RetrievalConfig& cfg, Embedder& embedder,
                                          Timestamp now, int top_k_override = 0) {
    auto views = run_views(query, index, cfg, embedder, top_k_override);
    auto fused = fuse(views, cfg.fusion_mode, cfg.w_kw, cfg.w_sem, cfg.w_str, cfg.rrf_k);
    return hybrid_rank(std::move(fused), index, cfg, now);
}

/// Union keeping the max final score per memory and merged provenance.
std::vector<ScoredCandidate> max_merge(const std::vector<ScoredCandidate>& a,
                                       const std::vector<ScoredCandidate>& b) {
    std::map<std::string, ScoredCandidate> pool;
    auto absorb = [&](const ScoredCandidate& c) {
        auto it = pool.find(c.memory_id);
        if (it == pool.end()) {
            pool.emplace(c.memory_id, c);
            return;
        }
        ScoredCandidate& dst = it->second;
        if (c.s > dst.s) {
            auto prov = dst.provenance;
            dst = c;
            dst.provenance.insert(prov.begin(), prov.end());
        } else {
            dst.provenance.insert(c.provenance.begin(), c.provenance.end());
        }
    };
    for (const auto& c : a) absorb(c);
    for (const auto& c : b) absorb(c);
    std::vector<ScoredCandidate> out;
    out.reserve(pool.size());
    for (auto& [id, c] : pool) out.push_back(std::move(c));
    sort_candidates(out);
    return out;
}

}  // namespace

std::vector<ScoredCandidate> entity_swap_retrieve(const std::string& query,
                                                  const RetrievalIndex& index,
                                                  const RetrievalConfig& cfg,
                                                  Embedder& embedder, Timestamp now) {
    auto spans = index.detect_person_spans(query);
    if (spans.empty()) return {};

    std::set<std::string> strip_tokens;
    for (const auto& span : spans) {
        for (const auto& tok : text::tokenize(span)) strip_tokens.insert(tok);
    }
    // Remove whitespace-delimited words whose alnum form is a detected person
    // token; keep everything else verbatim.
    std::vector<std::string> kept;
    std::string word;
    auto flush = [&]() {
        if (word.empty()) return;
        auto toks = text::tokenize(word);
        bool is_person = toks.size() == 1 && strip_tokens.count(toks[0]) > 0;
        if (!is_person) kept.push_back(word);
        word.clear();
    };
    for (char c : query) {
        if (std::isspace(static_cast<unsigned char>(c))) {
            flush();
        } else {
            word.push_back(c);
        }
    }
    flush();
    std::string swap_query = text::join(kept, " ");
    if (swap_query.empty()) return {};

    auto pool = fused_ranked(swap_query, index, cfg, embedder, now, cfg.swap_topic_top_k);
    if (static_cast<int>(pool.size()) > cfg.swap_merge_top_k)
        pool.resize(static_cast<size_t>(cfg.swap_merge_top_k));
    for (auto& c : pool) c.provenance.insert("swap");
    return pool;
}

std::vector<std::string> decompose_query(const std::string& query,
                                         const RetrievalConfig& cfg, Gateway& gateway,
                                         const PromptLibrary& prompts) {
    ChatRequest req;
    req.messages.push_back(
        {"user", PromptLibrary::render(
                     prompts.get("decompose"),
                     {{"max_n", std::to_string(cfg.decomposition_max_subqs)},
                      {"question", query}})});
    ChatResult res = gateway.chat(req);
    if (!res.ok) return {query};
    auto payload = parse_json_payload(res.text);
    if (!payload.ok || !payload.value.is_array()) return {query};
    std::vector<std::string> out;
    for (const auto& v : payload.value) {
        if (v.is_string() && !text::trim(v.get<std::string>()).empty())
            out.push_back(v.get<std::string>());
        if (static_cast<int>(out.size()) >= cfg.decomposition_max_subqs) break;
    }
    if (out.empty()) return {query};
    return out;
}

RetrievalResult retrieve(const std::string& query, const std::string& category,
                         const RetrievalIndex& index, const RetrievalConfig& cfg,
                         Gateway* gateway, const PromptLibrary* prompts, Embedder& embedder,
                         Timestamp now) {
    RetrievalConfig eff = effective_config(cfg, category);
    RetrievalResult result;

    result.sub_queries = {query};
    if (eff.enable_query_decomposition && gateway && prompts) {
        result.sub_queries = decompose_query(query, eff, *gateway, *prompts);
    }

    std::vector<std::vector<ScoredCandidate>> lists;
    for (const auto& sq : result.sub_queries) {
        auto pool = fused_ranked(sq, index, eff, embedder, now);
        if (eff.enable_entity_swap) {
            auto swap_pool = entity_swap_retrieve(sq, index, eff, embedder, now);
            if (!swap_pool.empty()) pool = max_merge(pool, swap_pool);
        }
        lists.push_back(std::move(pool));
    }

    std::vector<ScoredCandidate> final_pool;
    if (lists.size() == 1) {
        final_pool = std::move(lists.front());
    } else {
        // RRF merge over the union of per-sub-query rankings.
        std::map<std::string, ScoredCandidate> pool;
        for (const auto& list : lists) {
            for (size_t r = 0; r < list.size(); ++r) {
                const ScoredCandidate& c = list[r];
                auto it = pool.find(c.memory_id);
                if (it == pool.end()) {
                    ScoredCandidate copy = c;
                    copy.s = 0.0;
                    it = pool.emplace(c.memory_id, std::move(copy)).first;
                }
                it->second.s += 1.0 / (static_cast<double>(eff.rrf_k) +
                                        static_cast<double>(r) + 1.0);
                it->second.provenance.insert(c.provenance.begin(), c.provenance.end());
                it->second.provenance.insert("decomp");
            }
        }
        for (auto& [id, c] : pool) final_pool.push_back(std::move(c));
        sort_candidates(final_pool);
        if (static_cast<int>(final_pool.size()) > eff.decomposition_merge_top_k)
            final_pool.resize(static_cast<size_t>(eff.decomposition_merge_top_k));
    }

    result.candidates = final_pool;
    for (const auto& c : final_pool) {
        if (static_cast<int>(result.context.size()) >= eff.max_context) break;
        const MemoryUnit* u = index.unit_by_id(c.memory_id);
        if (u) result.context.push_back(*u);
    }
    return result;
}

}  // namespace memex
