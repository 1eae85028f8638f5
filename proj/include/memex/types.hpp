#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "memex/text.hpp"

#include <json.hpp>

namespace memex {

using text::Timestamp;
using json = nlohmann::json;

constexpr double kImportanceFloor = 0.15;
constexpr double kReinforcementCap = 0.30;
constexpr int kMinContentChars = 3;
constexpr int kSchemaVersion = 6;
constexpr double kEmbeddingNormTol = 1e-6;
constexpr const char* kEngineVersion = "0.1.0";

enum class MemoryType {
    episodic,
    semantic,
    preference,
    project_state,
    working_summary,
    procedural,
};

const char* to_string(MemoryType t);
std::optional<MemoryType> memory_type_from_string(const std::string& s);

enum class MemoryStatus { active, superseded, expired };
const char* to_string(MemoryStatus s);
std::optional<MemoryStatus> memory_status_from_string(const std::string& s);

enum class EventKind { created, merged, decayed, reinforced, superseded, expired };
const char* to_string(EventKind k);
std::optional<EventKind> event_kind_from_string(const std::string& s);

enum class LinkKind { related, depends_on, elaborates, contradicts };
const char* to_string(LinkKind k);
std::optional<LinkKind> link_kind_from_string(const std::string& s);

/// Hierarchical scope identifier: user / workspace / optional session.
/// Serialized as `user:<u>|workspace:<w>[|session:<s>]`; components may not
/// contain '|' or ':'.
struct Scope {
    std::string user;
    std::string workspace;
    std::optional<std::string> session;

    bool valid() const;
    std::string str() const;
    /// Same scope with the session component removed.
    Scope base() const;
    bool operator==(const Scope& o) const = default;

    static std::optional<Scope> parse(const std::string& s);
};

struct MemoryUnit {
    std::string memory_id;
    Scope scope;
    MemoryType memory_type = MemoryType::semantic;
    std::string content;
    std::optional<std::string> summary;
    std::optional<std::vector<double>> embedding;
    double importance = 0.5;
    /// Undecayed importance; decay recomputes from this so passes stay idempotent.
    double importance_base = 0.5;
    double confidence = 0.8;
    double reinforcement = 0.0;
    std::set<std::string> entities;
    std::set<std::string> persons;
    std::set<std::string> locations;
    std::set<std::string> topics;
    std::set<std::string> tags;
    std::set<std::string> keywords;
    std::int64_t access_count = 0;
    MemoryStatus status = MemoryStatus::active;
    std::set<std::string> supersedes;
    std::optional<std::string> superseded_by;
    Timestamp created_at = 0;
    Timestamp updated_at = 0;
    std::optional<Timestamp> expires_at;

    json to_json() const;
    static MemoryUnit from_json(const json& j);

    /// Empty string when the unit satisfies all invariants, else the reason.
    std::string validate() const;
};

struct MemoryEvent {
    std::int64_t event_id = 0;
    std::string memory_id;
    EventKind kind = EventKind::created;
    json payload;
    Timestamp at = 0;

    json to_json() const;
    static MemoryEvent from_json(const json& j);
};

struct MemoryLink {
    std::string src;
    std::string dst;
    LinkKind kind = LinkKind::related;

    json to_json() const;
    static MemoryLink from_json(const json& j);
};

/// Deterministic v4-format UUID drawn from the caller's RNG.
std::string make_uuid(std::mt19937_64& rng);

}  // namespace memex
