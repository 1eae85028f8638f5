#include "memex/extraction.hpp"

#include <algorithm>
#include <chrono>
#include <thread>

#include "memex/embedding.hpp"

namespace memex {

namespace {

void default_sleep(double sec) {
    std::this_thread::sleep_for(std::chrono::duration<double>(sec));
}

std::vector<ExtractedEntry> entries_from_json(const json& arr) {
    std::vector<ExtractedEntry> out;
    if (!arr.is_array()) return out;
    for (const auto& e : arr) {
        if (!e.is_object()) continue;
        ExtractedEntry entry;
        entry.lossless_restatement = e.value("lossless_restatement", "");
        auto read_list = [&](const char* key, std::vector<std::string>& dst) {
            if (e.contains(key) && e[key].is_array()) {
                for (const auto& v : e[key]) {
                    if (v.is_string() && !v.get<std::string>().empty())
                        dst.push_back(v.get<std::string>());
                }
            }
        };
        read_list("keywords", entry.keywords);
        read_list("persons", entry.persons);
        read_list("entities", entry.entities);
        if (e.contains("timestamp") && e["timestamp"].is_string()) {
            std::string t = e["timestamp"].get<std::string>();
            if (!t.empty() && t != "null") entry.timestamp = t;
        }
        if (e.contains("location") && e["location"].is_string()) {
            std::string l = e["location"].get<std::string>();
            if (!l.empty() && l != "null") entry.location = l;
        }
        entry.topic = e.value("topic", "");
        out.push_back(std::move(entry));
    }
    return out;
}

std::string render_context_slot(const std::vector<ExtractedEntry>& prev_tail) {
    if (prev_tail.empty()) return "";
    std::string out = "[Context from previous window -- do NOT duplicate these entries]\n";
    for (const auto& e : prev_tail) out += "- " + e.lossless_restatement + "\n";
    return out;
}

ChatRequest make_extract_request(const PromptLibrary& prompts, const ExtractionWindow& window,
                                 const std::string& context_slot) {
    std::string prompt = PromptLibrary::render(
        prompts.get("extract"), {{"context", context_slot},
                                 {"date", window.date.empty() ? "unknown date" : window.date},
                                 {"dialogue_text", window.dialogue_text()}});
    ChatRequest req;
    req.messages.push_back({"user", prompt});
    return req;
}

/// One extraction call with the retry guard; no overflow handling here.
struct CallOutcome {
    bool ok = false;
    bool overflow = false;
    std::string error;
    int retries_used = 0;
    std::vector<ExtractedEntry> entries;
};

CallOutcome call_extractor(const ChatRequest& req, const ExtractionConfig& cfg,
                           Gateway& gateway) {
    CallOutcome out;
    auto sleep = cfg.sleep_fn ? cfg.sleep_fn : default_sleep;
    for (int attempt = 0;; ++attempt) {
        ChatResult res = gateway.chat(req);
        if (res.ok) {
            auto payload = parse_json_payload(res.text);
            if (!payload.ok || !payload.value.is_array()) {
                // one repair reprompt, then give up on this call
                ChatRequest repair = req;
                repair.messages.push_back({"assistant", res.text});
                repair.messages.push_back(
                    {"user", "Your previous reply was not a valid JSON array. Return ONLY "
                             "the JSON array of entries, with no prose."});
                ChatResult second = gateway.chat(repair);
                if (second.ok) {
                    auto repaired = parse_json_payload(second.text);
                    if (repaired.ok && repaired.value.is_array()) {
                        out.ok = true;
                        out.retries_used = attempt;
                        out.entries = entries_from_json(repaired.value);
                        return out;
                    }
                }
                out.error = "malformed JSON after repair reprompt";
                out.retries_used = attempt;
                return out;
            }
            out.ok = true;
            out.retries_used = attempt;
            out.entries = entries_from_json(payload.value);
            return out;
        }
        if (res.error == GatewayErrorType::context_overflow) {
            out.overflow = true;
            out.retries_used = attempt;
            return out;
        }
        if (attempt >= cfg.max_retries) {
            out.error = "retries exhausted: " + res.error_message;
            out.retries_used = attempt;
            return out;
        }
        sleep(cfg.retry_base_wait_sec * static_cast<double>(1 << attempt));
    }
}

}  // namespace

std::string ExtractionConfig::validate() const {
    if (window_size <= 0) return "window_size must be positive";
    if (window_overlap <= 0 || window_overlap >= window_size)
        return "window_overlap must satisfy 0 < overlap < window_size";
    if (chunk_size <= 0 || chunk_size >= window_size)
        return "chunk_size must satisfy 0 < chunk_size < window_size";
    if (max_retries < 0) return "max_retries must be >= 0";
    if (min_entries_per_window <= 0) return "min_entries_per_window must be positive";
    if (min_restatement_words <= 0) return "min_restatement_words must be positive";
    return "";
}

std::string ExtractionWindow::dialogue_text() const {
    std::string out;
    for (const auto& t : turns) {
        out += t.speaker + ": " + t.text + "\n";
    }
    return out;
}

json ExtractedEntry::to_json() const {
    json j;
    j["lossless_restatement"] = lossless_restatement;
    j["keywords"] = keywords;
    j["persons"] = persons;
    j["entities"] = entities;
    j["timestamp"] = timestamp ? json(*timestamp) : json(nullptr);
    j["location"] = location ? json(*location) : json(nullptr);
    j["topic"] = topic;
    return j;
}

json IngestSummary::to_json() const {
    return json{{"windows", windows},
                {"units_extracted", units_extracted},
                {"units_stored", units_stored},
                {"failed_windows", failed_windows},
                {"coverage_gaps", coverage_gaps}};
}

json IngestSummary::cache_json(const std::string& sample_id, const Scope& scope) const {
    json arr = json::array();
    for (const auto& e : entries) arr.push_back(e.to_json());
    return json{{"sample_id", sample_id}, {"scope", scope.base().str()},
                {"entries", std::move(arr)}};
}

std::vector<ExtractionWindow> partition_windows(const Session& session,
                                                const ExtractionConfig& cfg) {
    std::vector<ExtractionWindow> out;
    const int n = static_cast<int>(session.turns.size());
    if (n == 0) return out;
    const int stride = cfg.window_size - cfg.window_overlap;
    int index = 0;
    for (int start = 0;; start += stride, ++index) {
        int end = std::min(n, start + cfg.window_size);
        ExtractionWindow w;
        w.index = index;
        w.date = session.date;
        w.start_turn = start;
        w.turns.assign(session.turns.begin() + start, session.turns.begin() + end);
        out.push_back(std::move(w));
        if (end >= n) break;
    }
    return out;
}

namespace {

WindowExtraction extract_with_context(const ExtractionWindow& window,
                                      const std::string& context_slot,
                                      const ExtractionConfig& cfg, Gateway& gateway,
                                      const PromptLibrary& prompts) {
    WindowExtraction result;
    CallOutcome first = call_extractor(make_extract_request(prompts, window, context_slot),
                                       cfg, gateway);
    result.retries_used = first.retries_used;
    if (first.ok) {
        result.entries = std::move(first.entries);
        return result;
    }
    if (!first.overflow) {
        result.failed = true;
        result.error = first.error;
        return result;
    }

    // Context overflow: split into chunk_size-turn sub-windows and merge,
    // preserving whatever each sub-call yields.
    result.sub_calls = 0;
    bool any_failed = false;
    for (size_t start = 0; start < window.turns.size();
         start += static_cast<size_t>(cfg.chunk_size)) {
        ExtractionWindow sub;
        sub.index = window.index;
        sub.date = window.date;
        sub.start_turn = window.start_turn + static_cast<int>(start);
        size_t end = std::min(window.turns.size(), start + static_cast<size_t>(cfg.chunk_size));
        sub.turns.assign(window.turns.begin() + start, window.turns.begin() + end);
        ++result.sub_calls;
        CallOutcome sub_out = call_extractor(make_extract_request(prompts, sub, context_slot),
                                             cfg, gateway);
        result.retries_used += sub_out.retries_used;
        if (sub_out.ok) {
            for (auto& e : sub_out.entries) result.entries.push_back(std::move(e));
        } else {
            any_failed = true;
        }
    }
    if (any_failed && result.entries.empty()) {
        result.failed = true;
        result.error = "all sub-windows failed after overflow split";
    }
    return result;
}

}  // namespace

WindowExtraction extract_window(const ExtractionWindow& window,
                                const std::vector<ExtractedEntry>& prev_tail,
                                const ExtractionConfig& cfg, Gateway& gateway,
                                const PromptLibrary& prompts) {
    return extract_with_context(window, render_context_slot(prev_tail), cfg, gateway,
                                prompts);
}

std::vector<MemoryUnit> entries_to_units(const std::vector<ExtractedEntry>& entries,
                                         const Scope& scope, const std::string& session_date,
                                         Timestamp now, std::mt19937_64& rng,
                                         const ExtractionConfig& cfg) {
    std::vector<MemoryUnit> out;
    for (const auto& e : entries) {
        const std::string restatement = text::trim(e.lossless_restatement);
        auto words = text::tokenize(restatement);
        if (restatement.empty() || static_cast<int>(words.size()) < cfg.min_restatement_words)
            continue;
        if (e.keywords.empty()) continue;
        if (restatement.size() < static_cast<size_t>(kMinContentChars)) continue;

        MemoryUnit u;
        u.memory_id = make_uuid(rng);
        u.scope = scope;
        u.memory_type = e.timestamp ? MemoryType::episodic : MemoryType::semantic;
        u.content = restatement;
        u.importance = 0.5;
        u.importance_base = 0.5;
        u.confidence = 0.8;
        u.keywords.insert(e.keywords.begin(), e.keywords.end());
        u.persons.insert(e.persons.begin(), e.persons.end());
        u.entities.insert(e.entities.begin(), e.entities.end());
        if (e.location) u.locations.insert(*e.location);
        if (!e.topic.empty()) u.topics.insert(e.topic);

        // Memory age follows the conversation: entry timestamp first, then
        // the session date, then ingest time.
        Timestamp created = now;
        Timestamp parsed;
        if (e.timestamp && text::parse_timestamp(*e.timestamp, parsed)) {
            created = parsed;
        } else if (!session_date.empty() && text::parse_timestamp(session_date, parsed)) {
            created = parsed;
        }
        u.created_at = created;
        u.updated_at = now;
        out.push_back(std::move(u));
    }
    return out;
}

CoverageReport verify_coverage(const ExtractionWindow& window,
                               const std::vector<MemoryUnit>& extracted) {
    CoverageReport report;
    report.window_index = window.index;
    report.reference_keywords = text::reference_keywords(window.dialogue_text());

    std::string haystack;
    for (const auto& u : extracted) {
        haystack += text::to_lower(u.content);
        haystack += ' ';
        for (const auto& k : u.keywords) {
            haystack += text::to_lower(k);
            haystack += ' ';
        }
        for (const auto& e : u.entities) {
            haystack += text::to_lower(e);
            haystack += ' ';
        }
    }
    for (const auto& kw : report.reference_keywords) {
        if (haystack.find(kw) != std::string::npos) {
            report.covered.insert(kw);
        } else {
            report.missing.insert(kw);
        }
    }
    return report;
}

std::vector<MemoryUnit> targeted_reextract(const ExtractionWindow& window,
                                           const CoverageReport& report,
                                           const ExtractionConfig& cfg, Gateway& gateway,
                                           const PromptLibrary& prompts, const Scope& scope,
                                           Timestamp now, std::mt19937_64& rng) {
    if (report.missing.empty())
        throw std::invalid_argument("targeted_reextract: missing set is empty");

    std::string focus = "[Targeted re-extraction] The following source keywords were NOT "
                        "covered by earlier extractions. Produce entries that cover them:\n";
    for (const auto& kw : report.missing) focus += "- " + kw + "\n";

    WindowExtraction ext = extract_with_context(window, focus, cfg, gateway, prompts);
    if (ext.failed) return {};

    auto units = entries_to_units(ext.entries, scope, window.date, now, rng, cfg);
    std::vector<MemoryUnit> accepted;
    for (const auto& u : units) {
        std::string blob = text::to_lower(u.content) + ' ';
        for (const auto& k : u.keywords) blob += text::to_lower(k) + ' ';
        for (const auto& e : u.entities) blob += text::to_lower(e) + ' ';
        for (const auto& kw : report.missing) {
            if (blob.find(kw) != std::string::npos) {
                accepted.push_back(u);
                break;
            }
        }
    }
    return accepted;
}

IngestSummary ingest_conversation(const std::vector<Session>& sessions, const Scope& scope,
                                  const ExtractionConfig& cfg, Gateway& gateway,
                                  const PromptLibrary& prompts, MemoryStore& store,
                                  Embedder& embedder, Timestamp now, std::mt19937_64& rng) {
    std::string bad = cfg.validate();
    if (!bad.empty()) throw std::invalid_argument("ExtractionConfig: " + bad);

    IngestSummary summary;

    // Seed the exact-match pre-dedup key set from what is already stored.
    std::set<std::string> seen;
    for (const auto& u :
         store.query_scope(scope.base(), true, MemoryStatus::active)) {
        seen.insert(std::string(to_string(u.memory_type)) + "\x1f" +
                    text::normalize_content(u.content));
    }

    for (const auto& session : sessions) {
        Scope session_scope = scope.base();
        if (!session.session_id.empty()) session_scope.session = session.session_id;

        std::vector<ExtractedEntry> prev_tail;
        for (const auto& window : partition_windows(session, cfg)) {
            ++summary.windows;
            WindowExtraction ext = extract_window(window, prev_tail, cfg, gateway, prompts);
            if (ext.failed && ext.entries.empty()) {
                ++summary.failed_windows;
                continue;
            }
            for (const auto& e : ext.entries) summary.entries.push_back(e);
            auto units =
                entries_to_units(ext.entries, session_scope, session.date, now, rng, cfg);
            summary.units_extracted += static_cast<int>(units.size());

            std::vector<MemoryUnit> fresh;
            for (auto& u : units) {
                std::string key = std::string(to_string(u.memory_type)) + "\x1f" +
                                  text::normalize_content(u.content);
                if (seen.count(key)) continue;  // pre-dedup: exact match against the store
                seen.insert(key);
                fresh.push_back(std::move(u));
            }

            std::vector<std::string> texts;
            texts.reserve(fresh.size());
            for (const auto& u : fresh) texts.push_back(u.content);
            auto vectors = embed_batch(texts, embedder);
            for (size_t i = 0; i < fresh.size(); ++i) {
                if (!is_zero_vector(vectors[i])) fresh[i].embedding = vectors[i];
                store.put(fresh[i]);
                ++summary.units_stored;
            }

            auto coverage = verify_coverage(window, fresh);
            if (!coverage.missing.empty()) ++summary.coverage_gaps;

            prev_tail.clear();
            size_t tail = ext.entries.size() > 5 ? ext.entries.size() - 5 : 0;
            for (size_t i = tail; i < ext.entries.size(); ++i)
                prev_tail.push_back(ext.entries[i]);
        }
    }
    return summary;
}

}  // namespace memex
