#include "memex/evolution.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

namespace memex {

namespace fs = std::filesystem;

const char* to_string(UpdateBranch b) {
    switch (b) {
        case UpdateBranch::apply: return "apply";
        case UpdateBranch::revert: return "revert";
        case UpdateBranch::explore: return "explore";
    }
    return "apply";
}

std::string GuardConfig::validate() const {
    if (revert_threshold <= 0.0) return "revert_threshold must be > 0";
    if (convergence_eps <= 0.0) return "convergence_eps must be > 0";
    if (max_rounds < 1) return "max_rounds must be >= 1";
    if (perturb_scale < 0.0) return "perturb_scale must be >= 0";
    return "";
}

json DiagnosisProposal::to_json() const {
    json j;
    j["root_causes"] = root_causes;
    j["missing_topics"] = missing_topics;
    json params = json::object();
    for (const auto& [k, v] : parameter_suggestions) params[k] = v;
    j["parameter_suggestions"] = std::move(params);
    j["extraction_suggestions"] = extraction_suggestions;
    json per_cat = json::object();
    for (const auto& [k, v] : per_category_proposals) per_cat[k] = v;
    j["per_category_proposals"] = std::move(per_cat);
    j["priority_actions"] = priority_actions;
    j["discovered_dimensions"] = discovered_dimensions;
    return j;
}

DiagnosisProposal DiagnosisProposal::from_json(const json& j) {
    DiagnosisProposal p;
    if (!j.is_object()) return p;
    p.root_causes = j.value("root_causes", json::object());
    if (j.contains("missing_topics") && j["missing_topics"].is_array()) {
        for (const auto& t : j["missing_topics"]) {
            if (t.is_string()) p.missing_topics.push_back(t.get<std::string>());
        }
    }
    if (j.contains("parameter_suggestions") && j["parameter_suggestions"].is_object()) {
        for (auto it = j["parameter_suggestions"].begin();
             it != j["parameter_suggestions"].end(); ++it) {
            if (find_config_field(it.key())) {
                p.parameter_suggestions[it.key()] = it.value();
            } else {
                p.discovered_dimensions.push_back(it.key());
            }
        }
    }
    p.extraction_suggestions = j.value("extraction_suggestions", json::object());
    if (j.contains("per_category_proposals") && j["per_category_proposals"].is_object()) {
        for (auto it = j["per_category_proposals"].begin();
             it != j["per_category_proposals"].end(); ++it) {
            if (it.value().is_object()) p.per_category_proposals[it.key()] = it.value();
        }
    }
    if (j.contains("priority_actions") && j["priority_actions"].is_array()) {
        for (const auto& a : j["priority_actions"]) {
            if (a.is_string()) p.priority_actions.push_back(a.get<std::string>());
        }
    }
    return p;
}

json EvolutionState::to_json() const {
    json hist = json::array();
    for (const auto& e : history) {
        hist.push_back(json{{"round", e.round},
                            {"score", e.score},
                            {"branch", e.branch},
                            {"config", config_to_json(e.config)},
                            {"summary_path", e.summary_path}});
    }
    return json{{"round", round},
                {"history", std::move(hist)},
                {"best_score", best_score},
                {"best_config", config_to_json(best_config)},
                {"stagnation_count", stagnation_count},
                {"terminated", terminated},
                {"reason", reason}};
}

MetaUpdateResult meta_update(EvolutionState& state, double score,
                             const RetrievalConfig& current,
                             const DiagnosisProposal& proposal, const GuardConfig& guards,
                             std::mt19937_64& rng) {
    MetaUpdateResult out;
    const bool has_prev = !state.history.empty();
    const double prev = has_prev ? state.history.back().score : 0.0;

    if (has_prev && (prev - score) > guards.revert_threshold) {
        out.branch = UpdateBranch::revert;
        out.next = state.best_config;
        state.stagnation_count = 0;
        state.last_branch_was_explore = false;
        return out;
    }

    if (has_prev && std::fabs(score - prev) < guards.convergence_eps) {
        ++state.stagnation_count;
    } else {
        state.stagnation_count = 0;
    }

    if (state.stagnation_count >= guards.stagnation_window) {
        out.branch = UpdateBranch::explore;
        out.next = perturb_config(current, guards.perturb_scale, rng);
        state.stagnation_count = 0;
        state.last_branch_was_explore = true;
        return out;
    }

    out.branch = UpdateBranch::apply;
    auto applied = apply_delta(current, proposal.parameter_suggestions,
                               proposal.per_category_proposals);
    out.next = applied.config;
    state.last_branch_was_explore = false;
    return out;
}

namespace {

bool category_matches(const std::string& category, std::initializer_list<const char*> needles,
                      const char* numeric_id) {
    std::string lc = text::to_lower(category);
    for (const char* n : needles) {
        if (lc.find(n) != std::string::npos) return true;
    }
    return lc == numeric_id;
}

struct FailureProfile {
    int total = 0;
    int abstentions = 0;
    int zero_wrong = 0;  // zero primary score, non-abstention
    std::map<std::string, double> category_means;
    std::vector<const RawResultRecord*> worst;
    std::vector<std::string> weak_categories;  // mean < overall - 0.1
};

double primary_metric(const RawResultRecord& r) {
    auto em = r.metrics.find("exact_match");
    if (em != r.metrics.end()) return em->second;
    auto f1 = r.metrics.find("f1");
    return f1 != r.metrics.end() ? f1->second : 0.0;
}

FailureProfile profile_failures(const RoundSummary& summary,
                                const std::vector<RawResultRecord>& records) {
    FailureProfile p;
    p.total = static_cast<int>(records.size());
    for (const auto& r : records) {
        if (is_unknown_answer(r.prediction)) {
            ++p.abstentions;
        } else if (primary_metric(r) == 0.0) {
            ++p.zero_wrong;
        }
    }
    p.category_means = summary.per_category;
    for (const auto& [cat, mean] : p.category_means) {
        if (mean < summary.overall - 0.1) p.weak_categories.push_back(cat);
    }
    std::vector<const RawResultRecord*> sorted;
    for (const auto& r : records) sorted.push_back(&r);
    std::sort(sorted.begin(), sorted.end(), [](const RawResultRecord* a,
                                               const RawResultRecord* b) {
        double pa = primary_metric(*a), pb = primary_metric(*b);
        if (pa != pb) return pa < pb;
        return a->question_id < b->question_id;
    });
    for (size_t i = 0; i < sorted.size() && i < 5; ++i) p.worst.push_back(sorted[i]);
    return p;
}

DiagnosisProposal rubric_diagnose(const RoundSummary& summary,
                                  const std::vector<RawResultRecord>& records,
                                  const RetrievalConfig& cfg, const StoreStats& stats) {
    DiagnosisProposal p;
    FailureProfile prof = profile_failures(summary, records);
    const double abstention_rate =
        prof.total > 0 ? static_cast<double>(prof.abstentions) / prof.total : 0.0;
    const double wrong_rate =
        prof.total > 0 ? static_cast<double>(prof.zero_wrong) / prof.total : 0.0;

    std::vector<std::string> enable_actions;
    std::vector<std::string> tune_actions;

    // Rule 1: abstentions -> widen retrieval; prefer enabling the semantic
    // view over int tuning (rule 7).
    if (abstention_rate >= 0.2) {
        if (!cfg.enable_semantic_view) {
            p.parameter_suggestions["enable_semantic_view"] = true;
            p.parameter_suggestions["semantic_top_k"] = std::max(cfg.semantic_top_k, 10);
            enable_actions.push_back("enable semantic view for abstention-heavy failures");
        }
        p.parameter_suggestions["keyword_top_k"] = std::min(30, cfg.keyword_top_k + 5);
        p.parameter_suggestions["max_context"] = std::min(30, cfg.max_context + 4);
        if (cfg.fusion_mode == FusionMode::sum) {
            p.parameter_suggestions["fusion_mode"] = "rrf";
            tune_actions.push_back("switch fusion to rrf to mix view scales");
        }
        tune_actions.push_back("raise top-k and context budget for abstentions");
    } else if (wrong_rate >= 0.3) {
        // Rule 2: wrong answers despite retrieval -> tighten the context.
        p.parameter_suggestions["max_context"] = std::max(6, cfg.max_context - 2);
        tune_actions.push_back("tighten max_context against distractor-heavy contexts");
    }

    std::vector<std::string> handled;
    for (const auto& cat : prof.weak_categories) {
        // Rule 3: temporal weakness -> recency signal.
        if (category_matches(cat, {"temporal", "time"}, "2")) {
            if (!cfg.time_decay_half_life_days) {
                p.parameter_suggestions["time_decay_half_life_days"] = 30.0;
                enable_actions.push_back("enable time decay for temporal weakness");
            }
            handled.push_back(cat);
            continue;
        }
        // Rule 4: adversarial weakness -> entity swap for that category.
        if (category_matches(cat, {"adversarial"}, "5")) {
            RetrievalConfig eff = effective_config(cfg, cat);
            if (!eff.enable_entity_swap) {
                p.per_category_proposals[cat] = json{{"enable_entity_swap", true}};
                enable_actions.push_back("enable entity swap for category " + cat);
            }
            handled.push_back(cat);
            continue;
        }
        // Rule 5: multi-hop / inferential weakness -> reflection.
        if (category_matches(cat, {"multi", "hop", "inferential"}, "1")) {
            if (cfg.reflection_rounds < 1) {
                p.parameter_suggestions["reflection_rounds"] = 1;
                enable_actions.push_back("enable reflection for multi-hop weakness");
            }
            handled.push_back(cat);
            continue;
        }
    }

    // Rule 6: a single unhandled lagging category gets a targeted override.
    std::vector<std::string> unhandled;
    for (const auto& cat : prof.weak_categories) {
        if (std::find(handled.begin(), handled.end(), cat) == handled.end())
            unhandled.push_back(cat);
    }
    if (unhandled.size() == 1) {
        const std::string& cat = unhandled.front();
        RetrievalConfig eff = effective_config(cfg, cat);
        p.per_category_proposals[cat] =
            json{{"keyword_top_k", std::min(30, eff.keyword_top_k + 5)},
                 {"max_context", std::min(30, eff.max_context + 4)}};
        tune_actions.push_back("per-category override for lagging category " + cat);
    }

    // Rule 8: residual Unknowns -> second-pass verification.
    if (prof.abstentions > 0 && !cfg.enable_answer_verification) {
        p.parameter_suggestions["enable_answer_verification"] = true;
        enable_actions.push_back("enable answer verification for residual Unknowns");
    }

    // Missing coverage: reference tokens of zero-score questions absent from
    // the store vocabulary.
    std::set<std::string> missing;
    for (const auto& r : records) {
        if (primary_metric(r) > 0.0) continue;
        for (const auto& tok : text::tokenize(r.reference)) {
            if (tok.size() < 3 || text::is_stopword(tok)) continue;
            if (!stats.entity_vocab.count(tok)) missing.insert(tok);
            if (missing.size() >= 5) break;
        }
        if (missing.size() >= 5) break;
    }
    p.missing_topics.assign(missing.begin(), missing.end());

    p.root_causes = json{
        {"extraction_gap", json{{"missing_topics", static_cast<int>(missing.size())}}},
        {"retrieval_miss", json{{"abstentions", prof.abstentions}}},
        {"answer_error", json{{"zero_score_wrong", prof.zero_wrong}}}};

    // Rule 7 ordering: enabling levers outranks int tuning.
    for (const auto& a : enable_actions) p.priority_actions.push_back(a);
    for (const auto& a : tune_actions) p.priority_actions.push_back(a);
    return p;
}

std::string render_failure_summary(const RoundSummary& summary, const FailureProfile& prof) {
    char buf[256];
    std::snprintf(buf, sizeof(buf),
                  "overall %.4f; %d/%d zero-score; %d abstentions; %d wrong non-abstentions",
                  summary.overall, summary.zero_score_count, prof.total, prof.abstentions,
                  prof.zero_wrong);
    return buf;
}

std::string render_category_breakdown(const RoundSummary& summary) {
    std::string out;
    for (const auto& [cat, mean] : summary.per_category) {
        char buf[128];
        std::snprintf(buf, sizeof(buf), "- %s: %.4f\n", cat.c_str(), mean);
        out += buf;
    }
    return out;
}

std::string render_sample_failures(const FailureProfile& prof) {
    std::string out;
    for (const auto* r : prof.worst) {
        std::string q = r->question.substr(0, 120);
        std::string pred = r->prediction.substr(0, 60);
        std::string ref = r->reference.substr(0, 60);
        out += "- [" + r->category + "] Q: " + q + " | pred: " + pred + " | ref: " + ref +
               "\n";
    }
    return out;
}

std::string render_todo_checklist(const RetrievalConfig& cfg, const FailureProfile& prof) {
    std::string out;
    if (!cfg.enable_semantic_view && prof.abstentions > 0)
        out += "- enable_semantic_view is OFF while abstentions are present\n";
    if (!cfg.enable_entity_swap) out += "- enable_entity_swap is OFF\n";
    if (!cfg.enable_query_decomposition) out += "- enable_query_decomposition is OFF\n";
    if (!cfg.enable_answer_verification && prof.abstentions > 0)
        out += "- enable_answer_verification is OFF while Unknown answers remain\n";
    if (!cfg.time_decay_half_life_days)
        out += "- time_decay_half_life_days is null (no recency signal)\n";
    if (out.empty()) out = "(none)";
    return out;
}

}  // namespace

DiagnosisProposal diagnose(const RoundSummary& summary,
                           const std::vector<RawResultRecord>& records,
                           const RetrievalConfig& cfg, const StoreStats& stats,
                           Gateway* gateway, const PromptLibrary* prompts,
                           DiagnosisMode mode, const std::string& benchmark_name) {
    if (records.empty())
        throw std::invalid_argument("diagnose: records must be non-empty");
    if (mode == DiagnosisMode::rubric || !gateway || !prompts) {
        return rubric_diagnose(summary, records, cfg, stats);
    }

    FailureProfile prof = profile_failures(summary, records);
    char overall[32];
    std::snprintf(overall, sizeof(overall), "%.4f", summary.overall);
    std::map<std::string, std::string> vars = {
        {"benchmark", benchmark_name},
        {"total_memories", std::to_string(stats.total_memories)},
        {"total_questions", std::to_string(prof.total)},
        {"overall_f1", overall},
        {"zero_count", std::to_string(summary.zero_score_count)},
        {"current_config", config_to_json(cfg).dump()},
        {"failure_summary", render_failure_summary(summary, prof)},
        {"category_breakdown", render_category_breakdown(summary)},
        {"sample_failures", render_sample_failures(prof)},
        {"todo_checklist", render_todo_checklist(cfg, prof)},
    };
    ChatRequest req;
    req.messages.push_back({"user", PromptLibrary::render(prompts->get("diagnose"), vars)});

    ChatResult res = gateway->chat(req);
    if (res.ok) {
        auto payload = parse_json_payload(res.text);
        if (payload.ok && payload.value.is_object()) {
            return DiagnosisProposal::from_json(payload.value);
        }
        ChatRequest repair = req;
        repair.messages.push_back({"assistant", res.text});
        repair.messages.push_back(
            {"user", "Your previous reply was not valid JSON. Return ONLY the JSON object "
                     "described under ## Output."});
        ChatResult second = gateway->chat(repair);
        if (second.ok) {
            auto repaired = parse_json_payload(second.text);
            if (repaired.ok && repaired.value.is_object()) {
                return DiagnosisProposal::from_json(repaired.value);
            }
        }
    }
    return rubric_diagnose(summary, records, cfg, stats);
}

namespace {

void write_file(const fs::path& path, const std::string& content) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << content;
}

StoreStats collect_store_stats(MemoryStore& store) {
    StoreStats stats;
    stats.total_memories = store.count(MemoryStatus::active);
    for (const auto& u : store.all_units(MemoryStatus::active)) {
        for (const auto& e : u.entities) stats.entity_vocab.insert(text::to_lower(e));
        for (const auto& k : u.keywords) stats.entity_vocab.insert(text::to_lower(k));
        for (const auto& p : u.persons) stats.entity_vocab.insert(text::to_lower(p));
    }
    return stats;
}

Scope sample_scope(const Scope& base, const std::vector<DatasetSample>& samples,
                   const DatasetSample& sample) {
    Scope s = base.base();
    if (samples.size() > 1) s.workspace = base.workspace + "-" + sample.sample_id;
    return s;
}

/// Targeted re-extraction over windows whose text mentions a missing topic.
void reextract_missing(const std::vector<DatasetSample>& samples, const Scope& base_scope,
                       const std::vector<std::string>& missing_topics,
                       const EvolutionOptions& options, Gateway& gateway,
                       const PromptLibrary& prompts, MemoryStore& store, Embedder& embedder,
                       Timestamp now, std::mt19937_64& rng) {
    std::set<std::string> wanted(missing_topics.begin(), missing_topics.end());
    if (wanted.empty()) return;
    int budget = 3;  // windows per gap round
    for (const auto& sample : samples) {
        Scope scope = sample_scope(base_scope, samples, sample);
        for (const auto& session : sample.sessions) {
            Scope session_scope = scope;
            if (!session.session_id.empty()) session_scope.session = session.session_id;
            for (const auto& window : partition_windows(session, options.extraction)) {
                if (budget <= 0) return;
                std::string lower = text::to_lower(window.dialogue_text());
                CoverageReport report;
                report.window_index = window.index;
                for (const auto& topic : wanted) {
                    if (lower.find(topic) != std::string::npos) {
                        report.missing.insert(topic);
                        report.reference_keywords.insert(topic);
                    }
                }
                if (report.missing.empty()) continue;
                --budget;
                auto units = targeted_reextract(window, report, options.extraction, gateway,
                                                prompts, session_scope, now, rng);
                for (auto& u : units) {
                    auto vecs = embedder.embed({u.content});
                    if (!is_zero_vector(vecs.front())) u.embedding = vecs.front();
                    try {
                        store.put(u);
                    } catch (const StoreError&) {
                        // duplicates and validation rejects are fine here
                    }
                }
                if (!units.empty()) {
                    consolidate(store, scope, now, options.consolidation);
                }
            }
        }
    }
}

}  // namespace

EvolutionOutcome run_evolution(const std::vector<DatasetSample>& samples,
                               const RetrievalConfig& theta0, Gateway& gateway,
                               const PromptLibrary& prompts, MemoryStore& store,
                               Embedder& embedder, Timestamp now, std::mt19937_64& rng,
                               const EvolutionOptions& options) {
    std::string bad = options.guards.validate();
    if (!bad.empty()) throw std::invalid_argument("GuardConfig: " + bad);

    fs::create_directories(options.run_dir);

    // Extract once (Algorithm 1 line 1), then keep the store maintained.
    if (!options.skip_ingest) {
        fs::create_directories(fs::path(options.run_dir) / "extraction_cache");
        for (const auto& sample : samples) {
            Scope scope = sample_scope(options.scope, samples, sample);
            IngestSummary summary =
                ingest_conversation(sample.sessions, scope, options.extraction, gateway,
                                    prompts, store, embedder, now, rng);
            write_file(fs::path(options.run_dir) / "extraction_cache" /
                           (sample.sample_id + ".json"),
                       summary.cache_json(sample.sample_id, scope).dump(1) + "\n");
            consolidate(store, scope, now, options.consolidation);
        }
    }

    EvolutionState state;
    state.best_score = 0.0;
    state.best_config = clamp_config(theta0);
    RetrievalConfig theta = clamp_config(theta0);

    json discovered = json::array();
    double prev_score = 0.0;

    for (int r = 0; r < options.guards.max_rounds; ++r) {
        state.round = r;
        fs::path round_dir = fs::path(options.run_dir) / ("round_" + std::to_string(r));
        fs::create_directories(round_dir);
        write_file(round_dir / "config.json", config_to_json(theta).dump(1) + "\n");

        // Build per-sample contexts against the current store.
        std::vector<SampleContext> contexts;
        for (const auto& sample : samples) {
            SampleContext ctx;
            ctx.sample_id = sample.sample_id;
            ctx.scope = sample_scope(options.scope, samples, sample);
            ctx.index = build_index(store, ctx.scope);
            ctx.qa = sample.qa;
            contexts.push_back(std::move(ctx));
        }

        EvaluateOptions eval_options;
        eval_options.round_index = r;
        eval_options.kind = options.kind;
        eval_options.log_path = (round_dir / "raw_results.jsonl").string();
        eval_options.consolidation = options.consolidation;

        double score = prev_score;
        RoundOutcome outcome;
        bool round_failed = false;
        try {
            outcome = evaluate_round(contexts, store, theta, gateway, prompts, embedder, now,
                                     eval_options);
            score = outcome.summary.overall;
        } catch (const std::exception& e) {
            // Degraded continuation: carry the previous score forward.
            round_failed = true;
            outcome.summary.round_index = r;
            outcome.summary.overall = score;
            outcome.summary.config_snapshot = theta;
            write_file(round_dir / "error.txt", std::string(e.what()) + "\n");
        }
        write_file(round_dir / "round_summary.json",
                   outcome.summary.to_json().dump(1) + "\n");

        DiagnosisProposal proposal;
        if (!round_failed && !outcome.records.empty()) {
            StoreStats stats = collect_store_stats(store);
            proposal = diagnose(outcome.summary, outcome.records, theta, stats, &gateway,
                                &prompts, options.diagnosis_mode, options.benchmark_name);
        }
        write_file(round_dir / "diagnosis.json", proposal.to_json().dump(1) + "\n");
        for (const auto& dim : proposal.discovered_dimensions) {
            discovered.push_back(json{{"round", r}, {"field", dim}});
        }

        MetaUpdateResult update =
            meta_update(state, score, theta, proposal, options.guards, rng);
        write_file(round_dir / "branch.txt", std::string(to_string(update.branch)) + "\n");

        RoundEntry entry;
        entry.round = r;
        entry.score = score;
        entry.config = theta;
        entry.branch = to_string(update.branch);
        // run-dir-relative so artifacts stay byte-identical across run roots
        entry.summary_path = "round_" + std::to_string(r) + "/round_summary.json";
        state.history.push_back(entry);

        if (score > state.best_score) {
            state.best_score = score;
            state.best_config = theta;
        }

        if (!proposal.missing_topics.empty()) {
            reextract_missing(samples, options.scope, proposal.missing_topics, options,
                              gateway, prompts, store, embedder, now, rng);
        }

        // Convergence: the round right after an explore still moved less than
        // epsilon (Algorithm 1's break, reconciled with the explore branch).
        if (r > 0 && state.history[r - 1].branch == "explore" &&
            (score - prev_score) < options.guards.convergence_eps) {
            state.terminated = true;
            state.reason = "converged";
            theta = update.next;
            break;
        }

        theta = update.next;
        prev_score = score;
    }

    if (!state.terminated) {
        state.terminated = true;
        state.reason = "max_rounds";
    }
    state.round = static_cast<int>(state.history.size());

    write_file(fs::path(options.run_dir) / "best_config.json",
               config_to_json(state.best_config).dump(1) + "\n");
    write_file(fs::path(options.run_dir) / "state.json", state.to_json().dump(1) + "\n");
    write_file(fs::path(options.run_dir) / "discovered_dimensions.json",
               discovered.dump(1) + "\n");

    EvolutionOutcome out;
    out.best_config = state.best_config;
    out.state = state;
    return out;
}

}  // namespace memex
