#include "memex/evaluation.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>

namespace memex {

std::vector<std::string> normalize_answer(const std::string& textual) {
    std::string cleaned;
    cleaned.reserve(textual.size());
    for (unsigned char c : textual) {
        if (std::isalnum(c)) {
            cleaned.push_back(static_cast<char>(std::tolower(c)));
        } else {
            cleaned.push_back(' ');
        }
    }
    std::vector<std::string> out;
    std::string cur;
    for (char c : cleaned) {
        if (c == ' ') {
            if (!cur.empty()) out.push_back(std::move(cur));
            cur.clear();
        } else {
            cur.push_back(c);
        }
    }
    if (!cur.empty()) out.push_back(std::move(cur));
    return out;
}

namespace {

std::map<std::string, int> counts(const std::vector<std::string>& tokens) {
    std::map<std::string, int> out;
    for (const auto& t : tokens) ++out[t];
    return out;
}

int overlap(const std::map<std::string, int>& a, const std::map<std::string, int>& b) {
    int n = 0;
    for (const auto& [tok, ca] : a) {
        auto it = b.find(tok);
        if (it != b.end()) n += std::min(ca, it->second);
    }
    return n;
}

}  // namespace

double token_f1(const std::string& prediction, const std::string& reference) {
    auto pred = normalize_answer(prediction);
    auto ref = normalize_answer(reference);
    if (pred.empty() && ref.empty()) return 1.0;
    if (pred.empty() || ref.empty()) return 0.0;
    int common = overlap(counts(pred), counts(ref));
    if (common == 0) return 0.0;
    double precision = static_cast<double>(common) / static_cast<double>(pred.size());
    double recall = static_cast<double>(common) / static_cast<double>(ref.size());
    return 2.0 * precision * recall / (precision + recall);
}

double bleu1(const std::string& prediction, const std::string& reference) {
    auto pred = normalize_answer(prediction);
    auto ref = normalize_answer(reference);
    if (pred.empty() && ref.empty()) return 1.0;
    if (pred.empty() || ref.empty()) return 0.0;
    int clipped = overlap(counts(pred), counts(ref));
    double precision = static_cast<double>(clipped) / static_cast<double>(pred.size());
    double bp = 1.0;
    if (pred.size() < ref.size()) {
        bp = std::exp(1.0 - static_cast<double>(ref.size()) / static_cast<double>(pred.size()));
    }
    return precision * bp;
}

int exact_match_mcq(const std::string& prediction, const std::string& reference) {
    std::string ref = text::trim(reference);
    if (ref.size() != 1 || std::toupper(static_cast<unsigned char>(ref[0])) < 'A' ||
        std::toupper(static_cast<unsigned char>(ref[0])) > 'D') {
        throw std::invalid_argument("exact_match_mcq: reference must be one of A-D, got '" +
                                    reference + "'");
    }
    char expected = static_cast<char>(std::toupper(static_cast<unsigned char>(ref[0])));
    for (const auto& tok : text::tokenize(prediction)) {
        if (tok.size() == 1 && tok[0] >= 'a' && tok[0] <= 'd') {
            return std::toupper(static_cast<unsigned char>(tok[0])) == expected ? 1 : 0;
        }
    }
    return 0;
}

json RawResultRecord::to_json() const {
    json j;
    j["question_id"] = question_id;
    j["question"] = question;
    j["prediction"] = prediction;
    j["reference"] = reference;
    j["category"] = category;
    j["metrics"] = metrics;
    json srcs = json::array();
    for (const auto& s : sources) {
        srcs.push_back(json{{"memory_id", s.memory_id},
                            {"provenance", s.provenance},
                            {"score", s.score}});
    }
    j["sources"] = std::move(srcs);
    if (!error.empty()) j["error"] = error;
    return j;
}

json RoundSummary::to_json() const {
    return json{{"round_index", round_index},
                {"overall", overall},
                {"per_category", per_category},
                {"zero_score_count", zero_score_count},
                {"config_snapshot", config_to_json(config_snapshot)}};
}

RoundOutcome evaluate_round(std::vector<SampleContext>& samples, MemoryStore& store,
                            const RetrievalConfig& cfg, Gateway& gateway,
                            const PromptLibrary& prompts, Embedder& embedder, Timestamp now,
                            const EvaluateOptions& options) {
    RoundOutcome out;
    out.summary.round_index = options.round_index;
    out.summary.config_snapshot = cfg;

    std::map<std::string, std::pair<double, int>> per_category;  // sum, count
    double total = 0.0;
    int n = 0;

    for (auto& sample : samples) {
        for (const auto& q : sample.qa) {
            RawResultRecord rec;
            rec.question_id = q.question_id;
            rec.question = q.question;
            rec.reference = q.reference;
            rec.category = q.category;

            double primary = 0.0;
            try {
                AnswerOutcome outcome =
                    answer_question(q.question, q.category, q.options, sample.index, cfg,
                                    gateway, prompts, embedder, now);
                rec.prediction = outcome.result.answer;
                for (const auto& c : outcome.retrieval.candidates) {
                    SourceRef src;
                    src.memory_id = c.memory_id;
                    src.provenance.assign(c.provenance.begin(), c.provenance.end());
                    src.score = c.s;
                    rec.sources.push_back(std::move(src));
                    if (rec.sources.size() >= 16) break;
                }

                rec.metrics["f1"] = token_f1(rec.prediction, rec.reference);
                rec.metrics["bleu1"] = bleu1(rec.prediction, rec.reference);
                bool mcq_item = q.options.has_value();
                if (mcq_item) {
                    rec.metrics["exact_match"] =
                        static_cast<double>(exact_match_mcq(rec.prediction, rec.reference));
                }
                primary = mcq_item ? rec.metrics["exact_match"] : rec.metrics["f1"];

                if (options.reinforce_on_query) {
                    // Query co-occurrence: metadata values named by the query
                    // reinforce the units carrying them.
                    auto matched = sample.index.matched_metadata_values(q.question);
                    if (!matched.empty()) {
                        reinforce_entities(store, matched, options.consolidation, now);
                    }
                }
            } catch (const std::exception& e) {
                rec.error = e.what();
                rec.metrics["f1"] = 0.0;
                rec.metrics["bleu1"] = 0.0;
                primary = 0.0;
            }

            total += primary;
            ++n;
            if (primary == 0.0) ++out.summary.zero_score_count;
            auto& slot = per_category[rec.category];
            slot.first += primary;
            slot.second += 1;
            out.records.push_back(std::move(rec));
        }
    }

    out.summary.overall = n > 0 ? total / static_cast<double>(n) : 0.0;
    for (const auto& [cat, sum_count] : per_category) {
        out.summary.per_category[cat] = sum_count.first / sum_count.second;
    }

    if (!options.log_path.empty()) {
        std::ofstream log(options.log_path);
        if (!log) throw std::runtime_error("cannot write raw log " + options.log_path);
        for (const auto& rec : out.records) log << rec.to_json().dump() << "\n";
    }
    return out;
}

}  // namespace memex
