#include "memex/types.hpp"

#include <cmath>
#include <cstdio>

namespace memex {

namespace {

template <typename E, size_t N>
std::optional<E> lookup(const std::pair<const char*, E> (&table)[N], const std::string& s) {
    for (const auto& [name, value] : table) {
        if (s == name) return value;
    }
    return std::nullopt;
}

constexpr std::pair<const char*, MemoryType> kMemoryTypes[] = {
    {"episodic", MemoryType::episodic},
    {"semantic", MemoryType::semantic},
    {"preference", MemoryType::preference},
    {"project_state", MemoryType::project_state},
    {"working_summary", MemoryType::working_summary},
    {"procedural", MemoryType::procedural},
};

constexpr std::pair<const char*, MemoryStatus> kStatuses[] = {
    {"active", MemoryStatus::active},
    {"superseded", MemoryStatus::superseded},
    {"expired", MemoryStatus::expired},
};

constexpr std::pair<const char*, EventKind> kEventKinds[] = {
    {"created", EventKind::created},     {"merged", EventKind::merged},
    {"decayed", EventKind::decayed},     {"reinforced", EventKind::reinforced},
    {"superseded", EventKind::superseded}, {"expired", EventKind::expired},
};

constexpr std::pair<const char*, LinkKind> kLinkKinds[] = {
    {"related", LinkKind::related},
    {"depends_on", LinkKind::depends_on},
    {"elaborates", LinkKind::elaborates},
    {"contradicts", LinkKind::contradicts},
};

json set_to_json(const std::set<std::string>& s) {
    json arr = json::array();
    for (const auto& v : s) arr.push_back(v);
    return arr;
}

std::set<std::string> set_from_json(const json& j) {
    std::set<std::string> out;
    if (j.is_array()) {
        for (const auto& v : j) out.insert(v.get<std::string>());
    }
    return out;
}

}  // namespace

const char* to_string(MemoryType t) { return kMemoryTypes[static_cast<int>(t)].first; }
std::optional<MemoryType> memory_type_from_string(const std::string& s) {
    return lookup(kMemoryTypes, s);
}

const char* to_string(MemoryStatus s) { return kStatuses[static_cast<int>(s)].first; }
std::optional<MemoryStatus> memory_status_from_string(const std::string& s) {
    return lookup(kStatuses, s);
}

const char* to_string(EventKind k) { return kEventKinds[static_cast<int>(k)].first; }
std::optional<EventKind> event_kind_from_string(const std::string& s) {
    return lookup(kEventKinds, s);
}

const char* to_string(LinkKind k) { return kLinkKinds[static_cast<int>(k)].first; }
std::optional<LinkKind> link_kind_from_string(const std::string& s) {
    return lookup(kLinkKinds, s);
}

bool Scope::valid() const {
    auto component_ok = [](const std::string& c) {
        return !c.empty() && c.find('|') == std::string::npos && c.find(':') == std::string::npos;
    };
    if (!component_ok(user) || !component_ok(workspace)) return false;
    if (session && !component_ok(*session)) return false;
    return true;
}

std::string Scope::str() const {
    std::string out = "user:" + user + "|workspace:" + workspace;
    if (session) out += "|session:" + *session;
    return out;
}

Scope Scope::base() const { return Scope{user, workspace, std::nullopt}; }

std::optional<Scope> Scope::parse(const std::string& s) {
    Scope out;
    size_t pos = 0;
    int part = 0;
    while (pos <= s.size()) {
        size_t bar = s.find('|', pos);
        std::string piece = s.substr(pos, bar == std::string::npos ? std::string::npos : bar - pos);
        size_t colon = piece.find(':');
        if (colon == std::string::npos) return std::nullopt;
        std::string key = piece.substr(0, colon);
        std::string value = piece.substr(colon + 1);
        if (part == 0 && key == "user") {
            out.user = value;
        } else if (part == 1 && key == "workspace") {
            out.workspace = value;
        } else if (part == 2 && key == "session") {
            out.session = value;
        } else {
            return std::nullopt;
        }
        ++part;
        if (bar == std::string::npos) break;
        pos = bar + 1;
    }
    if (part < 2 || !out.valid()) return std::nullopt;
    return out;
}

json MemoryUnit::to_json() const {
    json j;
    j["memory_id"] = memory_id;
    j["scope"] = scope.str();
    j["memory_type"] = to_string(memory_type);
    j["content"] = content;
    j["summary"] = summary ? json(*summary) : json(nullptr);
    j["embedding"] = embedding ? json(*embedding) : json(nullptr);
    j["importance"] = importance;
    j["importance_base"] = importance_base;
    j["confidence"] = confidence;
    j["reinforcement"] = reinforcement;
    j["entities"] = set_to_json(entities);
    j["persons"] = set_to_json(persons);
    j["locations"] = set_to_json(locations);
    j["topics"] = set_to_json(topics);
    j["tags"] = set_to_json(tags);
    j["keywords"] = set_to_json(keywords);
    j["access_count"] = access_count;
    j["status"] = to_string(status);
    j["supersedes"] = set_to_json(supersedes);
    j["superseded_by"] = superseded_by ? json(*superseded_by) : json(nullptr);
    j["created_at"] = text::format_timestamp(created_at);
    j["updated_at"] = text::format_timestamp(updated_at);
    j["expires_at"] = expires_at ? json(text::format_timestamp(*expires_at)) : json(nullptr);
    return j;
}

MemoryUnit MemoryUnit::from_json(const json& j) {
    MemoryUnit u;
    u.memory_id = j.at("memory_id").get<std::string>();
    auto scope = Scope::parse(j.at("scope").get<std::string>());
    if (!scope) throw std::runtime_error("bad scope string: " + j.at("scope").dump());
    u.scope = *scope;
    auto type = memory_type_from_string(j.at("memory_type").get<std::string>());
    if (!type) throw std::runtime_error("bad memory_type: " + j.at("memory_type").dump());
    u.memory_type = *type;
    u.content = j.at("content").get<std::string>();
    if (j.contains("summary") && !j["summary"].is_null())
        u.summary = j["summary"].get<std::string>();
    if (j.contains("embedding") && !j["embedding"].is_null())
        u.embedding = j["embedding"].get<std::vector<double>>();
    u.importance = j.at("importance").get<double>();
    u.importance_base = j.value("importance_base", u.importance);
    u.confidence = j.at("confidence").get<double>();
    u.reinforcement = j.at("reinforcement").get<double>();
    u.entities = set_from_json(j.value("entities", json::array()));
    u.persons = set_from_json(j.value("persons", json::array()));
    u.locations = set_from_json(j.value("locations", json::array()));
    u.topics = set_from_json(j.value("topics", json::array()));
    u.tags = set_from_json(j.value("tags", json::array()));
    u.keywords = set_from_json(j.value("keywords", json::array()));
    u.access_count = j.value("access_count", 0);
    auto status = memory_status_from_string(j.at("status").get<std::string>());
    if (!status) throw std::runtime_error("bad status: " + j.at("status").dump());
    u.status = *status;
    u.supersedes = set_from_json(j.value("supersedes", json::array()));
    if (j.contains("superseded_by") && !j["superseded_by"].is_null())
        u.superseded_by = j["superseded_by"].get<std::string>();
    auto ts = [&](const char* key, Timestamp& out) {
        Timestamp t;
        if (!text::parse_timestamp(j.at(key).get<std::string>(), t))
            throw std::runtime_error(std::string("bad timestamp in ") + key);
        out = t;
    };
    ts("created_at", u.created_at);
    ts("updated_at", u.updated_at);
    if (j.contains("expires_at") && !j["expires_at"].is_null()) {
        Timestamp t;
        if (!text::parse_timestamp(j["expires_at"].get<std::string>(), t))
            throw std::runtime_error("bad expires_at");
        u.expires_at = t;
    }
    return u;
}

std::string MemoryUnit::validate() const {
    if (memory_id.empty()) return "memory_id empty";
    if (!scope.valid()) return "scope malformed";
    if (text::trim(content).size() < kMinContentChars) return "content < 3 chars";
    if (importance < kImportanceFloor || importance > 1.0)
        return "importance outside [0.15, 1]";
    if (confidence < 0.0 || confidence > 1.0) return "confidence outside [0, 1]";
    if (reinforcement < 0.0 || reinforcement > kReinforcementCap)
        return "reinforcement outside [0, 0.30]";
    if (access_count < 0) return "access_count negative";
    if (embedding) {
        double norm2 = 0.0;
        for (double v : *embedding) norm2 += v * v;
        if (std::fabs(std::sqrt(norm2) - 1.0) > kEmbeddingNormTol)
            return "embedding norm violation";
    }
    if ((status == MemoryStatus::superseded) != superseded_by.has_value())
        return "superseded_by must be set iff status is superseded";
    return "";
}

json MemoryEvent::to_json() const {
    return json{{"event_id", event_id},
                {"memory_id", memory_id},
                {"kind", to_string(kind)},
                {"payload", payload.is_null() ? json::object() : payload},
                {"at", text::format_timestamp(at)}};
}

MemoryEvent MemoryEvent::from_json(const json& j) {
    MemoryEvent e;
    e.event_id = j.at("event_id").get<std::int64_t>();
    e.memory_id = j.at("memory_id").get<std::string>();
    auto kind = event_kind_from_string(j.at("kind").get<std::string>());
    if (!kind) throw std::runtime_error("bad event kind");
    e.kind = *kind;
    e.payload = j.value("payload", json::object());
    if (!text::parse_timestamp(j.at("at").get<std::string>(), e.at))
        throw std::runtime_error("bad event timestamp");
    return e;
}

json MemoryLink::to_json() const {
    return json{{"src", src}, {"dst", dst}, {"kind", to_string(kind)}};
}

MemoryLink MemoryLink::from_json(const json& j) {
    MemoryLink l;
    l.src = j.at("src").get<std::string>();
    l.dst = j.at("dst").get<std::string>();
    auto kind = link_kind_from_string(j.at("kind").get<std::string>());
    if (!kind) throw std::runtime_error("bad link kind");
    l.kind = *kind;
    return l;
}

std::string make_uuid(std::mt19937_64& rng) {
    std::uint64_t hi = rng();
    std::uint64_t lo = rng();
    // v4 version and variant bits
    hi = (hi & 0xffffffffffff0fffULL) | 0x0000000000004000ULL;
    lo = (lo & 0x3fffffffffffffffULL) | 0x8000000000000000ULL;
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%08x-%04x-%04x-%04x-%012llx",
                  static_cast<unsigned>(hi >> 32), static_cast<unsigned>((hi >> 16) & 0xffff),
                  static_cast<unsigned>(hi & 0xffff), static_cast<unsigned>(lo >> 48),
                  static_cast<unsigned long long>(lo & 0xffffffffffffULL));
    return buf;
}

}  // namespace memex
