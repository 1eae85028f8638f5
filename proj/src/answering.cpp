#include "memex/answering.hpp"

#include <algorithm>
#include <cctype>

namespace memex {

namespace {

std::string strip_terminal_period(std::string s) {
    while (!s.empty() && (s.back() == '.' || s.back() == '!')) s.pop_back();
    return s;
}

/// First standalone a-d token of the normalized prediction.
std::optional<char> extract_mcq_letter(const std::string& prediction) {
    for (const auto& tok : text::tokenize(prediction)) {
        if (tok.size() == 1 && tok[0] >= 'a' && tok[0] <= 'd')
            return static_cast<char>(std::toupper(tok[0]));
    }
    return std::nullopt;
}

AnswerResult parse_answer_payload(const std::string& raw) {
    AnswerResult out;
    out.raw_response = raw;
    auto payload = parse_json_payload(raw);
    if (!payload.ok || !payload.value.is_object() || !payload.value.contains("answer")) {
        out.failed = true;
        return out;
    }
    const json& v = payload.value;
    out.reasoning = v.value("reasoning", "");
    if (v["answer"].is_string()) {
        out.answer = v["answer"].get<std::string>();
    } else {
        out.answer = v["answer"].dump();
    }
    if (v.contains("confidence") && v["confidence"].is_number()) {
        out.confidence = std::clamp(v["confidence"].get<double>(), 0.0, 1.0);
    } else {
        out.confidence = 0.5;  // self-reported confidence absent
    }
    return out;
}

}  // namespace

bool is_unknown_answer(const std::string& answer) {
    std::string a = text::to_lower(strip_terminal_period(text::trim(answer)));
    return a.empty() || a == "unknown" || a == "not specified" || a == "not mentioned";
}

std::optional<std::string> CategoryRouter::route(const std::string& category) const {
    auto it = routes.find(text::to_lower(category));
    if (it == routes.end()) return std::nullopt;
    return it->second;
}

std::string render_context(const std::vector<MemoryUnit>& context) {
    std::string out;
    int i = 1;
    for (const auto& u : context) {
        out += "[" + std::to_string(i++) + "] (" + to_string(u.memory_type) + ", " +
               text::format_date(u.created_at) + ") " + u.content + "\n";
    }
    return out;
}

AnswerResult generate_answer(const std::string& question, const std::string& category,
                             const std::optional<std::array<std::string, 4>>& options,
                             const std::vector<MemoryUnit>& context, AnswerStyle style,
                             Gateway& gateway, const PromptLibrary& prompts,
                             const CategoryRouter& router) {
    std::map<std::string, std::string> vars = {{"question", question},
                                               {"context", render_context(context)}};
    std::string system_key = "answer/system";
    std::string template_key;
    if (options) {
        system_key = "answer/mcq_system";
        template_key = "answer/mcq";
        vars["opt_a"] = (*options)[0];
        vars["opt_b"] = (*options)[1];
        vars["opt_c"] = (*options)[2];
        vars["opt_d"] = (*options)[3];
    } else if (auto branch = router.route(category)) {
        template_key = "answer/" + *branch;
    } else {
        template_key = std::string("answer/") + to_string(style);
    }

    ChatRequest req;
    req.messages.push_back({"system", prompts.get(system_key)});
    req.messages.push_back({"user", PromptLibrary::render(prompts.get(template_key), vars)});

    ChatResult res = gateway.chat(req);
    AnswerResult out;
    if (res.ok) {
        out = parse_answer_payload(res.text);
        if (out.failed) {
            // one repair reprompt
            ChatRequest repair = req;
            repair.messages.push_back({"assistant", res.text});
            repair.messages.push_back(
                {"user", "Your previous reply was not valid JSON. Return ONLY "
                         "{\"reasoning\":\"brief\",\"answer\":\"concise\"}."});
            ChatResult second = gateway.chat(repair);
            if (second.ok) out = parse_answer_payload(second.text);
        }
    } else {
        out.failed = true;
        out.raw_response = res.error_message;
    }
    if (out.failed) {
        out.answer = "unknown";
        out.confidence = 0.0;
    }
    if (options) {
        auto letter = extract_mcq_letter(out.answer);
        out.answer = letter ? std::string(1, *letter) : "unknown";
    }
    return out;
}

AnswerResult verify_answer(const std::string& question,
                           const std::vector<MemoryUnit>& context,
                           const AnswerResult& candidate, const RetrievalConfig& cfg,
                           Gateway& gateway, const PromptLibrary& prompts) {
    bool triggered = candidate.confidence < cfg.verification_confidence_threshold ||
                     is_unknown_answer(candidate.answer);
    if (!triggered) return candidate;

    std::string key = cfg.verification_style == VerificationStyle::strict
                          ? "verify/strict"
                          : "verify/multi_candidate";
    ChatRequest req;
    req.messages.push_back({"system", prompts.get("verify/system")});
    req.messages.push_back(
        {"user", PromptLibrary::render(prompts.get(key),
                                       {{"question", question},
                                        {"context", render_context(context)},
                                        {"candidate", candidate.answer}})});
    ChatResult res = gateway.chat(req);
    if (!res.ok) return candidate;  // verification is best-effort
    AnswerResult parsed = parse_answer_payload(res.text);
    if (parsed.failed) return candidate;
    parsed.verified = true;
    return parsed;
}

AnswerOutcome answer_question(const std::string& question, const std::string& category,
                              const std::optional<std::array<std::string, 4>>& options,
                              const RetrievalIndex& index, const RetrievalConfig& cfg,
                              Gateway& gateway, const PromptLibrary& prompts,
                              Embedder& embedder, Timestamp now,
                              const CategoryRouter& router) {
    RetrievalConfig eff = effective_config(cfg, category);
    AnswerOutcome out;
    out.retrieval = retrieve(question, category, index, cfg, &gateway, &prompts, embedder, now);
    out.result = generate_answer(question, category, options, out.retrieval.context,
                                 eff.answer_style, gateway, prompts, router);

    // Reflection: the answer LLM may hand back a follow-up query; each round
    // re-retrieves with it and regenerates. Absent the field this is a
    // pass-through.
    for (int round = 0; round < eff.reflection_rounds; ++round) {
        auto payload = parse_json_payload(out.result.raw_response);
        if (!payload.ok || !payload.value.is_object()) break;
        std::string follow_up = payload.value.value("follow_up_query", "");
        if (follow_up.empty()) break;
        out.retrieval =
            retrieve(follow_up, category, index, cfg, &gateway, &prompts, embedder, now);
        out.result = generate_answer(question, category, options, out.retrieval.context,
                                     eff.answer_style, gateway, prompts, router);
    }

    if (eff.enable_answer_verification) {
        out.result = verify_answer(question, out.retrieval.context, out.result, eff, gateway,
                                   prompts);
    }
    return out;
}

}  // namespace memex
