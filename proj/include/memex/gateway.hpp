#pragma once

#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

namespace memex {

using json = nlohmann::json;

enum class GatewayErrorType { none, rate_limited, context_overflow, transport, exhausted };
const char* to_string(GatewayErrorType t);

struct ChatMessage {
    std::string role;  // "system" | "user" | "assistant"
    std::string content;
};

struct ChatRequest {
    std::vector<ChatMessage> messages;
    std::string model;
    double temperature = 0.0;
    int max_tokens = 2048;

    json to_json() const;
};

struct ChatResult {
    bool ok = false;
    std::string text;
    GatewayErrorType error = GatewayErrorType::none;
    std::string error_message;
    int retries = 0;
};

/// Single choke-point for LLM calls. The engine performs no network access
/// outside implementations of this interface.
class Gateway {
  public:
    virtual ~Gateway() = default;
    virtual ChatResult chat(const ChatRequest& request) = 0;
    virtual std::string name() const = 0;
};

// --- deterministic scripted stub ---

struct StubRule {
    std::string match;                     // substring matched against message content
    std::string match_role = "any";       // "system" | "user" | "assistant" | "any"
    std::vector<std::string> responses;   // consumed in order per match
    int fail_n_times = 0;                 // typed transport failures before success
    bool context_overflow = false;        // always overflow when matched
    std::optional<size_t> context_overflow_if_longer_than;  // chars across messages
    bool repeat_last = true;              // keep serving the last response when exhausted

    // consumption state
    int failures_served = 0;
    size_t consumed = 0;
};

struct StubScript {
    std::vector<StubRule> rules;

    static StubScript from_json(const json& j);
    static StubScript from_file(const std::string& path);
    /// One catch-all rule replaying a transcript's responses in order.
    static StubScript from_transcript(const std::string& path);
};

class StubGateway : public Gateway {
  public:
    explicit StubGateway(StubScript script) : script_(std::move(script)) {}
    ChatResult chat(const ChatRequest& request) override;
    std::string name() const override { return "stub"; }

  private:
    StubScript script_;
    std::mutex mu_;
};

// --- OpenAI-compatible HTTP client ---

struct HttpGatewayConfig {
    std::string base_url = "http://localhost:8080";  // scheme://host[:port]
    std::string path_prefix = "/v1";
    std::string api_key;
    std::string model = "gpt-4o";
    int timeout_sec = 60;
    int max_retries = 3;
    double backoff_base_sec = 1.0;
    int max_in_flight = 4;
    std::function<void(double)> sleep_fn;  // injectable for tests; default real sleep
};

class HttpGateway : public Gateway {
  public:
    explicit HttpGateway(HttpGatewayConfig config);
    ~HttpGateway() override;
    ChatResult chat(const ChatRequest& request) override;
    std::string name() const override { return "http"; }

  private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

/// Appends {request, response, latency_ms, retries} JSONL per call.
/// Stub-backed calls log latency_ms = 0 so artifacts stay byte-reproducible.
class TranscriptingGateway : public Gateway {
  public:
    TranscriptingGateway(std::shared_ptr<Gateway> inner, std::string transcript_path);
    ChatResult chat(const ChatRequest& request) override;
    std::string name() const override { return inner_->name(); }

  private:
    std::shared_ptr<Gateway> inner_;
    std::string path_;
    std::mutex mu_;
};

struct JsonPayload {
    bool ok = false;
    json value;
    std::string error;
};

/// Extracts the first well-formed JSON object or array from LLM output,
/// tolerating code fences and surrounding prose.
JsonPayload parse_json_payload(const std::string& text);

}  // namespace memex
