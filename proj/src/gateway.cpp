#include "memex/gateway.hpp"

#include <chrono>
#include <condition_variable>
#include <fstream>
#include <thread>

#include <httplib.h>

namespace memex {

const char* to_string(GatewayErrorType t) {
    switch (t) {
        case GatewayErrorType::none: return "none";
        case GatewayErrorType::rate_limited: return "rate_limited";
        case GatewayErrorType::context_overflow: return "context_overflow";
        case GatewayErrorType::transport: return "transport";
        case GatewayErrorType::exhausted: return "exhausted";
    }
    return "unknown";
}

json ChatRequest::to_json() const {
    json msgs = json::array();
    for (const auto& m : messages) msgs.push_back({{"role", m.role}, {"content", m.content}});
    return json{{"model", model},
                {"temperature", temperature},
                {"max_tokens", max_tokens},
                {"messages", std::move(msgs)}};
}

// --- stub ---

StubScript StubScript::from_json(const json& j) {
    StubScript script;
    const json& rules = j.is_array() ? j : j.at("rules");
    for (const auto& r : rules) {
        StubRule rule;
        rule.match = r.value("match", "");
        rule.match_role = r.value("match_role", "any");
        if (r.contains("responses")) {
            for (const auto& resp : r["responses"]) {
                if (resp.is_string()) {
                    rule.responses.push_back(resp.get<std::string>());
                } else {
                    rule.responses.push_back(resp.dump());
                }
            }
        }
        rule.fail_n_times = r.value("fail_n_times", 0);
        rule.context_overflow = r.value("context_overflow", false);
        if (r.contains("context_overflow_if_longer_than") &&
            !r["context_overflow_if_longer_than"].is_null()) {
            rule.context_overflow_if_longer_than =
                r["context_overflow_if_longer_than"].get<size_t>();
        }
        rule.repeat_last = r.value("repeat_last", true);
        script.rules.push_back(std::move(rule));
    }
    return script;
}

StubScript StubScript::from_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot read stub script " + path);
    json j;
    in >> j;
    return from_json(j);
}

StubScript StubScript::from_transcript(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot read transcript " + path);
    StubRule rule;  // empty match == catch-all
    rule.repeat_last = false;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        json j = json::parse(line);
        if (j.contains("response") && j["response"].is_string())
            rule.responses.push_back(j["response"].get<std::string>());
    }
    StubScript script;
    script.rules.push_back(std::move(rule));
    return script;
}

ChatResult StubGateway::chat(const ChatRequest& request) {
    std::lock_guard<std::mutex> lock(mu_);
    size_t total_chars = 0;
    for (const auto& m : request.messages) total_chars += m.content.size();

    for (auto& rule : script_.rules) {
        bool matched = rule.match.empty();
        if (!matched) {
            for (const auto& m : request.messages) {
                if (rule.match_role != "any" && m.role != rule.match_role) continue;
                if (m.content.find(rule.match) != std::string::npos) {
                    matched = true;
                    break;
                }
            }
        }
        if (!matched) continue;

        if (rule.context_overflow ||
            (rule.context_overflow_if_longer_than &&
             total_chars > *rule.context_overflow_if_longer_than)) {
            ChatResult r;
            r.error = GatewayErrorType::context_overflow;
            r.error_message = "stub: context overflow";
            return r;
        }
        if (rule.failures_served < rule.fail_n_times) {
            ++rule.failures_served;
            ChatResult r;
            r.error = GatewayErrorType::transport;
            r.error_message = "stub: injected failure " + std::to_string(rule.failures_served);
            return r;
        }
        if (rule.responses.empty()) {
            ChatResult r;
            r.error = GatewayErrorType::transport;
            r.error_message = "stub: rule has no responses";
            return r;
        }
        size_t idx = rule.consumed;
        if (idx >= rule.responses.size()) {
            if (!rule.repeat_last) {
                ChatResult r;
                r.error = GatewayErrorType::exhausted;
                r.error_message = "stub: responses exhausted";
                return r;
            }
            idx = rule.responses.size() - 1;
        } else {
            ++rule.consumed;
        }
        ChatResult r;
        r.ok = true;
        r.text = rule.responses[idx];
        return r;
    }
    ChatResult r;
    r.error = GatewayErrorType::transport;
    r.error_message = "stub: no rule matched request";
    return r;
}

// --- http ---

struct HttpGateway::Impl {
    HttpGatewayConfig cfg;
    std::mutex mu;
    std::condition_variable cv;
    int in_flight = 0;

    explicit Impl(HttpGatewayConfig c) : cfg(std::move(c)) {
        if (!cfg.sleep_fn) {
            cfg.sleep_fn = [](double sec) {
                std::this_thread::sleep_for(std::chrono::duration<double>(sec));
            };
        }
    }

    struct Slot {
        Impl* impl;
        explicit Slot(Impl* i) : impl(i) {
            std::unique_lock<std::mutex> lock(impl->mu);
            impl->cv.wait(lock, [&] { return impl->in_flight < impl->cfg.max_in_flight; });
            ++impl->in_flight;
        }
        ~Slot() {
            {
                std::lock_guard<std::mutex> lock(impl->mu);
                --impl->in_flight;
            }
            impl->cv.notify_one();
        }
    };
};

HttpGateway::HttpGateway(HttpGatewayConfig config)
    : impl_(std::make_unique<Impl>(std::move(config))) {}

HttpGateway::~HttpGateway() = default;

namespace {

bool looks_like_context_overflow(const std::string& body) {
    auto payload = parse_json_payload(body);
    if (!payload.ok || !payload.value.is_object()) return false;
    if (!payload.value.contains("error")) return false;
    const json& err = payload.value["error"];
    std::string code = err.value("code", "");
    std::string type = err.value("type", "");
    std::string message = err.value("message", "");
    return code == "context_length_exceeded" ||
           type.find("context_length") != std::string::npos ||
           message.find("context length") != std::string::npos ||
           message.find("maximum context") != std::string::npos;
}

}  // namespace

ChatResult HttpGateway::chat(const ChatRequest& request) {
    Impl::Slot slot(impl_.get());
    const auto& cfg = impl_->cfg;

    httplib::Client client(cfg.base_url);
    client.set_connection_timeout(cfg.timeout_sec);
    client.set_read_timeout(cfg.timeout_sec);
    httplib::Headers headers;
    if (!cfg.api_key.empty()) headers.emplace("Authorization", "Bearer " + cfg.api_key);

    ChatRequest req = request;
    if (req.model.empty()) req.model = cfg.model;
    std::string body = req.to_json().dump();

    ChatResult result;
    for (int attempt = 0; attempt <= cfg.max_retries; ++attempt) {
        result.retries = attempt;
        auto res = client.Post(cfg.path_prefix + "/chat/completions", headers, body,
                               "application/json");
        if (res && res->status >= 200 && res->status < 300) {
            auto payload = parse_json_payload(res->body);
            if (payload.ok && payload.value.contains("choices") &&
                !payload.value["choices"].empty()) {
                result.ok = true;
                result.text = payload.value["choices"][0]["message"]["content"]
                                  .get<std::string>();
                result.error = GatewayErrorType::none;
                return result;
            }
            result.error = GatewayErrorType::transport;
            result.error_message = "malformed completion body";
            return result;
        }

        bool retryable = false;
        if (!res) {
            result.error = GatewayErrorType::transport;
            result.error_message = "transport: " + httplib::to_string(res.error());
            retryable = true;
        } else if (res->status == 429) {
            result.error = GatewayErrorType::rate_limited;
            result.error_message = "rate limited (429)";
            retryable = true;
        } else if (res->status >= 500 || res->status == 408) {
            result.error = GatewayErrorType::transport;
            result.error_message = "server error " + std::to_string(res->status);
            retryable = true;
        } else if (looks_like_context_overflow(res->body)) {
            // never retried: callers split the input instead
            result.error = GatewayErrorType::context_overflow;
            result.error_message = "context overflow (" + std::to_string(res->status) + ")";
            return result;
        } else {
            result.error = GatewayErrorType::transport;
            result.error_message =
                "http " + std::to_string(res->status) + ": " + res->body.substr(0, 200);
            return result;
        }

        if (retryable && attempt < cfg.max_retries) {
            cfg.sleep_fn(cfg.backoff_base_sec * static_cast<double>(1 << attempt));
        }
    }
    result.error = GatewayErrorType::exhausted;
    if (result.error_message.empty()) result.error_message = "retries exhausted";
    result.error_message = "exhausted after " + std::to_string(cfg.max_retries) +
                           " retries: " + result.error_message;
    return result;
}

// --- transcript ---

TranscriptingGateway::TranscriptingGateway(std::shared_ptr<Gateway> inner,
                                           std::string transcript_path)
    : inner_(std::move(inner)), path_(std::move(transcript_path)) {}

ChatResult TranscriptingGateway::chat(const ChatRequest& request) {
    auto start = std::chrono::steady_clock::now();
    ChatResult result = inner_->chat(request);
    std::int64_t latency_ms = 0;
    if (inner_->name() != "stub") {
        latency_ms = std::chrono::duration_cast<std::chrono::milliseconds>(
                         std::chrono::steady_clock::now() - start)
                         .count();
    }
    json line;
    line["request"] = request.to_json();
    if (result.ok) {
        line["response"] = result.text;
    } else {
        line["response"] = nullptr;
        line["error"] = to_string(result.error);
        line["error_message"] = result.error_message;
    }
    line["latency_ms"] = latency_ms;
    line["retries"] = result.retries;
    std::lock_guard<std::mutex> lock(mu_);
    std::ofstream out(path_, std::ios::app);
    out << line.dump() << "\n";
    return result;
}

// --- json payload extraction ---

namespace {

std::optional<size_t> matching_bracket(const std::string& s, size_t open) {
    char open_c = s[open];
    char close_c = open_c == '{' ? '}' : ']';
    int depth = 0;
    bool in_string = false;
    for (size_t i = open; i < s.size(); ++i) {
        char c = s[i];
        if (in_string) {
            if (c == '\\') {
                ++i;
            } else if (c == '"') {
                in_string = false;
            }
        } else if (c == '"') {
            in_string = true;
        } else if (c == open_c) {
            ++depth;
        } else if (c == close_c) {
            --depth;
            if (depth == 0) return i;
        }
    }
    return std::nullopt;
}

}  // namespace

JsonPayload parse_json_payload(const std::string& text) {
    JsonPayload out;
    for (size_t i = 0; i < text.size(); ++i) {
        if (text[i] != '{' && text[i] != '[') continue;
        auto close = matching_bracket(text, i);
        if (!close) continue;
        json parsed = json::parse(text.substr(i, *close - i + 1), nullptr, false);
        if (!parsed.is_discarded()) {
            out.ok = true;
            out.value = std::move(parsed);
            return out;
        }
    }
    out.error = "no JSON value found in: " + text.substr(0, 120);
    return out;
}

}  // namespace memex
