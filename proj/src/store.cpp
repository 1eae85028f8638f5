#include "memex/store.hpp"

#include <algorithm>
#include <fstream>

#include <sqlite3.h>

namespace memex {

namespace {

json set_to_json(const std::set<std::string>& s) {
    json arr = json::array();
    for (const auto& v : s) arr.push_back(v);
    return arr;
}

std::set<std::string> set_from_text(const char* txt) {
    std::set<std::string> out;
    if (!txt || !*txt) return out;
    json j = json::parse(txt);
    for (const auto& v : j) out.insert(v.get<std::string>());
    return out;
}

/// RAII prepared statement.
class Stmt {
  public:
    Stmt(sqlite3* db, const std::string& sql) {
        if (sqlite3_prepare_v2(db, sql.c_str(), -1, &stmt_, nullptr) != SQLITE_OK) {
            throw StoreError(std::string("sqlite prepare failed: ") + sqlite3_errmsg(db) +
                             " in: " + sql);
        }
    }
    ~Stmt() { sqlite3_finalize(stmt_); }
    Stmt(const Stmt&) = delete;
    Stmt& operator=(const Stmt&) = delete;

    void bind(int i, const std::string& v) {
        sqlite3_bind_text(stmt_, i, v.c_str(), static_cast<int>(v.size()), SQLITE_TRANSIENT);
    }
    void bind_opt(int i, const std::optional<std::string>& v) {
        if (v) bind(i, *v); else sqlite3_bind_null(stmt_, i);
    }
    void bind(int i, double v) { sqlite3_bind_double(stmt_, i, v); }
    void bind(int i, std::int64_t v) { sqlite3_bind_int64(stmt_, i, v); }
    void bind_blob(int i, const void* data, size_t n) {
        sqlite3_bind_blob(stmt_, i, data, static_cast<int>(n), SQLITE_TRANSIENT);
    }
    bool step() {
        int rc = sqlite3_step(stmt_);
        if (rc == SQLITE_ROW) return true;
        if (rc == SQLITE_DONE) return false;
        throw StoreError(std::string("sqlite step failed: ") +
                         sqlite3_errmsg(sqlite3_db_handle(stmt_)));
    }
    const char* col_text(int i) {
        return reinterpret_cast<const char*>(sqlite3_column_text(stmt_, i));
    }
    double col_double(int i) { return sqlite3_column_double(stmt_, i); }
    std::int64_t col_int64(int i) { return sqlite3_column_int64(stmt_, i); }
    bool col_null(int i) { return sqlite3_column_type(stmt_, i) == SQLITE_NULL; }
    const void* col_blob(int i) { return sqlite3_column_blob(stmt_, i); }
    int col_bytes(int i) { return sqlite3_column_bytes(stmt_, i); }

  private:
    sqlite3_stmt* stmt_ = nullptr;
};

struct Tx {
    sqlite3* db;
    bool done = false;
    explicit Tx(sqlite3* db) : db(db) { sqlite3_exec(db, "BEGIN", nullptr, nullptr, nullptr); }
    void commit() {
        sqlite3_exec(db, "COMMIT", nullptr, nullptr, nullptr);
        done = true;
    }
    ~Tx() {
        if (!done) sqlite3_exec(db, "ROLLBACK", nullptr, nullptr, nullptr);
    }
};

constexpr const char* kUnitColumns =
    "memory_id, scope_id, base_scope_id, memory_type, content, summary, embedding, "
    "importance, importance_base, confidence, reinforcement_score, entities, persons, "
    "locations, topics, tags, keywords, access_count, status, supersedes, superseded_by, "
    "created_at, updated_at, expires_at";

}  // namespace

SqliteMemoryStore::SqliteMemoryStore(const std::string& path) {
    int flags = SQLITE_OPEN_READWRITE | SQLITE_OPEN_CREATE | SQLITE_OPEN_FULLMUTEX;
    if (sqlite3_open_v2(path.c_str(), &db_, flags, nullptr) != SQLITE_OK) {
        std::string msg = db_ ? sqlite3_errmsg(db_) : "out of memory";
        if (db_) sqlite3_close(db_);
        throw StoreError("cannot open store at " + path + ": " + msg);
    }
    exec("PRAGMA foreign_keys=ON");
    if (path != ":memory:") {
        exec("PRAGMA journal_mode=WAL");
        exec("PRAGMA synchronous=NORMAL");
    }
    exec(R"sql(
CREATE TABLE IF NOT EXISTS memories (
    memory_id TEXT PRIMARY KEY,
    scope_id TEXT NOT NULL,
    base_scope_id TEXT NOT NULL,
    memory_type TEXT NOT NULL,
    content TEXT NOT NULL,
    summary TEXT,
    embedding BLOB,
    importance REAL NOT NULL,
    importance_base REAL NOT NULL,
    confidence REAL NOT NULL,
    reinforcement_score REAL NOT NULL,
    entities TEXT NOT NULL DEFAULT '[]',
    persons TEXT NOT NULL DEFAULT '[]',
    locations TEXT NOT NULL DEFAULT '[]',
    topics TEXT NOT NULL DEFAULT '[]',
    tags TEXT NOT NULL DEFAULT '[]',
    keywords TEXT NOT NULL DEFAULT '[]',
    access_count INTEGER NOT NULL DEFAULT 0,
    status TEXT NOT NULL,
    supersedes TEXT NOT NULL DEFAULT '[]',
    superseded_by TEXT,
    created_at TEXT NOT NULL,
    updated_at TEXT NOT NULL,
    expires_at TEXT
);
CREATE INDEX IF NOT EXISTS idx_memories_scope ON memories(scope_id);
CREATE INDEX IF NOT EXISTS idx_memories_base_scope ON memories(base_scope_id);
CREATE VIRTUAL TABLE IF NOT EXISTS memories_fts USING fts5(
    memory_id UNINDEXED, content, summary, entities, topics);
CREATE TABLE IF NOT EXISTS memory_events (
    event_id INTEGER PRIMARY KEY AUTOINCREMENT,
    memory_id TEXT NOT NULL,
    kind TEXT NOT NULL,
    payload TEXT NOT NULL DEFAULT '{}',
    at TEXT NOT NULL
);
CREATE TABLE IF NOT EXISTS memory_links (
    src TEXT NOT NULL,
    dst TEXT NOT NULL,
    kind TEXT NOT NULL,
    UNIQUE(src, dst, kind)
);
CREATE TABLE IF NOT EXISTS schema_version (version INTEGER NOT NULL);
)sql");
    Stmt count(db_, "SELECT COUNT(*) FROM schema_version");
    count.step();
    if (count.col_int64(0) == 0) {
        exec("INSERT INTO schema_version(version) VALUES (" +
             std::to_string(kSchemaVersion) + ")");
    } else {
        Stmt v(db_, "SELECT version FROM schema_version LIMIT 1");
        v.step();
        int found = static_cast<int>(v.col_int64(0));
        if (found != kSchemaVersion) throw SnapshotVersionError(found, kSchemaVersion);
    }
}

SqliteMemoryStore::~SqliteMemoryStore() {
    if (db_) sqlite3_close(db_);
}

void SqliteMemoryStore::exec(const std::string& sql) {
    char* err = nullptr;
    if (sqlite3_exec(db_, sql.c_str(), nullptr, nullptr, &err) != SQLITE_OK) {
        std::string msg = err ? err : "unknown";
        sqlite3_free(err);
        throw StoreError("sqlite exec failed: " + msg);
    }
}

void SqliteMemoryStore::append_event(const std::string& memory_id, EventKind kind,
                                     const json& payload, Timestamp at) {
    Stmt s(db_, "INSERT INTO memory_events(memory_id, kind, payload, at) VALUES (?,?,?,?)");
    s.bind(1, memory_id);
    s.bind(2, std::string(to_string(kind)));
    s.bind(3, payload.dump());
    s.bind(4, text::format_timestamp(at));
    s.step();
}

void SqliteMemoryStore::insert_unit_row(const MemoryUnit& u) {
    Stmt s(db_, std::string("INSERT INTO memories(") + kUnitColumns +
                    ") VALUES (?,?,?,?,?,?,?,?,?,?,?,?,?,?,?,?,?,?,?,?,?,?,?,?)");
    int i = 1;
    s.bind(i++, u.memory_id);
    s.bind(i++, u.scope.str());
    s.bind(i++, u.scope.base().str());
    s.bind(i++, std::string(to_string(u.memory_type)));
    s.bind(i++, u.content);
    s.bind_opt(i++, u.summary);
    if (u.embedding) {
        s.bind_blob(i++, u.embedding->data(), u.embedding->size() * sizeof(double));
    } else {
        s.bind_opt(i++, std::nullopt);
    }
    s.bind(i++, u.importance);
    s.bind(i++, u.importance_base);
    s.bind(i++, u.confidence);
    s.bind(i++, u.reinforcement);
    s.bind(i++, set_to_json(u.entities).dump());
    s.bind(i++, set_to_json(u.persons).dump());
    s.bind(i++, set_to_json(u.locations).dump());
    s.bind(i++, set_to_json(u.topics).dump());
    s.bind(i++, set_to_json(u.tags).dump());
    s.bind(i++, set_to_json(u.keywords).dump());
    s.bind(i++, u.access_count);
    s.bind(i++, std::string(to_string(u.status)));
    s.bind(i++, set_to_json(u.supersedes).dump());
    s.bind_opt(i++, u.superseded_by);
    s.bind(i++, text::format_timestamp(u.created_at));
    s.bind(i++, text::format_timestamp(u.updated_at));
    s.bind_opt(i++, u.expires_at ? std::optional<std::string>(
                                       text::format_timestamp(*u.expires_at))
                                 : std::nullopt);
    s.step();

    Stmt f(db_, "INSERT INTO memories_fts(memory_id, content, summary, entities, topics) "
                "VALUES (?,?,?,?,?)");
    f.bind(1, u.memory_id);
    f.bind(2, u.content);
    f.bind(3, u.summary.value_or(""));
    f.bind(4, text::join({u.entities.begin(), u.entities.end()}, " "));
    f.bind(5, text::join({u.topics.begin(), u.topics.end()}, " "));
    f.step();
}

void SqliteMemoryStore::update_unit_row(const MemoryUnit& u) {
    {
        Stmt d(db_, "DELETE FROM memories WHERE memory_id = ?");
        d.bind(1, u.memory_id);
        d.step();
    }
    {
        Stmt d(db_, "DELETE FROM memories_fts WHERE memory_id = ?");
        d.bind(1, u.memory_id);
        d.step();
    }
    insert_unit_row(u);
}

std::string SqliteMemoryStore::put(const MemoryUnit& unit) {
    std::lock_guard<std::mutex> lock(mu_);
    std::string reason = unit.validate();
    if (!reason.empty()) throw StoreError("put rejected: " + reason);
    {
        Stmt s(db_, "SELECT 1 FROM memories WHERE memory_id = ?");
        s.bind(1, unit.memory_id);
        if (s.step()) throw StoreError("put rejected: duplicate memory_id " + unit.memory_id);
    }
    Tx tx(db_);
    insert_unit_row(unit);
    append_event(unit.memory_id, EventKind::created, json::object(), unit.created_at);
    tx.commit();
    return unit.memory_id;
}

std::vector<MemoryUnit> SqliteMemoryStore::query_units(
    const std::string& where, const std::vector<std::string>& binds) const {
    Stmt s(db_, std::string("SELECT ") + kUnitColumns + " FROM memories " + where +
                    " ORDER BY created_at DESC, memory_id ASC");
    for (size_t i = 0; i < binds.size(); ++i) s.bind(static_cast<int>(i + 1), binds[i]);
    std::vector<MemoryUnit> out;
    while (s.step()) {
        MemoryUnit u;
        int i = 0;
        u.memory_id = s.col_text(i++);
        auto scope = Scope::parse(s.col_text(i++));
        if (!scope) throw StoreError("corrupt scope in row " + u.memory_id);
        u.scope = *scope;
        i++;  // base_scope_id is derived
        u.memory_type = *memory_type_from_string(s.col_text(i++));
        u.content = s.col_text(i++);
        if (!s.col_null(i)) u.summary = s.col_text(i);
        i++;
        if (!s.col_null(i)) {
            int bytes = s.col_bytes(i);
            const double* data = static_cast<const double*>(s.col_blob(i));
            u.embedding = std::vector<double>(data, data + bytes / sizeof(double));
        }
        i++;
        u.importance = s.col_double(i++);
        u.importance_base = s.col_double(i++);
        u.confidence = s.col_double(i++);
        u.reinforcement = s.col_double(i++);
        u.entities = set_from_text(s.col_text(i++));
        u.persons = set_from_text(s.col_text(i++));
        u.locations = set_from_text(s.col_text(i++));
        u.topics = set_from_text(s.col_text(i++));
        u.tags = set_from_text(s.col_text(i++));
        u.keywords = set_from_text(s.col_text(i++));
        u.access_count = s.col_int64(i++);
        u.status = *memory_status_from_string(s.col_text(i++));
        u.supersedes = set_from_text(s.col_text(i++));
        if (!s.col_null(i)) u.superseded_by = s.col_text(i);
        i++;
        text::parse_timestamp(s.col_text(i++), u.created_at);
        text::parse_timestamp(s.col_text(i++), u.updated_at);
        if (!s.col_null(i)) {
            Timestamp t;
            text::parse_timestamp(s.col_text(i), t);
            u.expires_at = t;
        }
        out.push_back(std::move(u));
    }
    return out;
}

std::optional<MemoryUnit> SqliteMemoryStore::get(const std::string& memory_id) const {
    std::lock_guard<std::mutex> lock(mu_);
    auto rows = query_units("WHERE memory_id = ?", {memory_id});
    if (rows.empty()) return std::nullopt;
    return rows.front();
}

std::vector<MemoryUnit> SqliteMemoryStore::query_scope(
    const Scope& scope, bool include_sessions,
    std::optional<MemoryStatus> status_filter) const {
    std::lock_guard<std::mutex> lock(mu_);
    std::string where;
    std::vector<std::string> binds;
    if (include_sessions) {
        where = "WHERE base_scope_id = ?";
        binds.push_back(scope.base().str());
    } else {
        where = "WHERE scope_id = ?";
        binds.push_back(scope.str());
    }
    if (status_filter) {
        where += " AND status = ?";
        binds.push_back(to_string(*status_filter));
    }
    return query_units(where, binds);
}

std::vector<MemoryUnit> SqliteMemoryStore::all_units(
    std::optional<MemoryStatus> status_filter) const {
    std::lock_guard<std::mutex> lock(mu_);
    if (status_filter) return query_units("WHERE status = ?", {to_string(*status_filter)});
    return query_units("", {});
}

void SqliteMemoryStore::supersede(const std::string& old_id, const std::string& new_id,
                                  Timestamp at) {
    std::lock_guard<std::mutex> lock(mu_);
    auto olds = query_units("WHERE memory_id = ?", {old_id});
    if (olds.empty()) throw StoreError("supersede: unknown id " + old_id);
    auto news = query_units("WHERE memory_id = ?", {new_id});
    if (news.empty()) throw StoreError("supersede: unknown id " + new_id);
    MemoryUnit oldu = olds.front();
    MemoryUnit newu = news.front();
    if (oldu.status != MemoryStatus::active)
        throw StoreError("supersede: " + old_id + " already superseded");
    Tx tx(db_);
    oldu.status = MemoryStatus::superseded;
    oldu.superseded_by = new_id;
    oldu.updated_at = at;
    newu.supersedes.insert(old_id);
    newu.updated_at = at;
    update_unit_row(oldu);
    update_unit_row(newu);
    append_event(old_id, EventKind::superseded, json{{"by", new_id}}, at);
    tx.commit();
}

void SqliteMemoryStore::merge_into(const std::string& victim_id, const MemoryUnit& survivor,
                                   Timestamp at) {
    std::lock_guard<std::mutex> lock(mu_);
    auto victims = query_units("WHERE memory_id = ?", {victim_id});
    if (victims.empty()) throw StoreError("merge_into: unknown id " + victim_id);
    MemoryUnit victim = victims.front();
    if (victim.status != MemoryStatus::active)
        throw StoreError("merge_into: " + victim_id + " not active");
    Tx tx(db_);
    victim.status = MemoryStatus::superseded;
    victim.superseded_by = survivor.memory_id;
    victim.updated_at = at;
    MemoryUnit surv = survivor;
    surv.supersedes.insert(victim_id);
    surv.updated_at = at;
    update_unit_row(victim);
    update_unit_row(surv);
    append_event(victim_id, EventKind::merged, json{{"into", survivor.memory_id}}, at);
    tx.commit();
}

void SqliteMemoryStore::set_decayed_importance(const std::string& memory_id,
                                               double importance, Timestamp at) {
    std::lock_guard<std::mutex> lock(mu_);
    auto rows = query_units("WHERE memory_id = ?", {memory_id});
    if (rows.empty()) throw StoreError("set_decayed_importance: unknown id " + memory_id);
    MemoryUnit u = rows.front();
    if (u.importance == importance) return;
    Tx tx(db_);
    u.importance = importance;
    u.updated_at = at;
    update_unit_row(u);
    append_event(memory_id, EventKind::decayed, json{{"importance", importance}}, at);
    tx.commit();
}

void SqliteMemoryStore::set_reinforcement(const std::string& memory_id, double reinforcement,
                                          Timestamp at) {
    std::lock_guard<std::mutex> lock(mu_);
    auto rows = query_units("WHERE memory_id = ?", {memory_id});
    if (rows.empty()) throw StoreError("set_reinforcement: unknown id " + memory_id);
    MemoryUnit u = rows.front();
    if (u.reinforcement == reinforcement) return;
    Tx tx(db_);
    u.reinforcement = reinforcement;
    u.updated_at = at;
    update_unit_row(u);
    append_event(memory_id, EventKind::reinforced, json{{"reinforcement", reinforcement}},
                 at);
    tx.commit();
}

void SqliteMemoryStore::expire(const std::string& memory_id, Timestamp at) {
    std::lock_guard<std::mutex> lock(mu_);
    auto rows = query_units("WHERE memory_id = ?", {memory_id});
    if (rows.empty()) throw StoreError("expire: unknown id " + memory_id);
    MemoryUnit u = rows.front();
    if (u.status != MemoryStatus::active) throw StoreError("expire: unit not active");
    Tx tx(db_);
    u.status = MemoryStatus::expired;
    u.updated_at = at;
    update_unit_row(u);
    append_event(memory_id, EventKind::expired, json::object(), at);
    tx.commit();
}

void SqliteMemoryStore::add_link(const MemoryLink& link) {
    std::lock_guard<std::mutex> lock(mu_);
    if (link.src == link.dst) throw StoreError("link src == dst");
    Stmt s(db_, "INSERT OR IGNORE INTO memory_links(src, dst, kind) VALUES (?,?,?)");
    s.bind(1, link.src);
    s.bind(2, link.dst);
    s.bind(3, std::string(to_string(link.kind)));
    s.step();
}

std::vector<MemoryLink> SqliteMemoryStore::links() const {
    std::lock_guard<std::mutex> lock(mu_);
    Stmt s(db_, "SELECT src, dst, kind FROM memory_links ORDER BY src, dst, kind");
    std::vector<MemoryLink> out;
    while (s.step()) {
        MemoryLink l;
        l.src = s.col_text(0);
        l.dst = s.col_text(1);
        l.kind = *link_kind_from_string(s.col_text(2));
        out.push_back(l);
    }
    return out;
}

std::vector<MemoryEvent> SqliteMemoryStore::events() const {
    std::lock_guard<std::mutex> lock(mu_);
    Stmt s(db_, "SELECT event_id, memory_id, kind, payload, at FROM memory_events "
                "ORDER BY event_id");
    std::vector<MemoryEvent> out;
    while (s.step()) {
        MemoryEvent e;
        e.event_id = s.col_int64(0);
        e.memory_id = s.col_text(1);
        e.kind = *event_kind_from_string(s.col_text(2));
        e.payload = json::parse(s.col_text(3));
        text::parse_timestamp(s.col_text(4), e.at);
        out.push_back(std::move(e));
    }
    return out;
}

std::vector<std::string> SqliteMemoryStore::search_text(const std::string& query,
                                                        int limit) const {
    std::lock_guard<std::mutex> lock(mu_);
    auto terms = text::tokenize(query);
    if (terms.empty()) return {};
    std::string match = text::join(terms, " OR ");
    Stmt s(db_,
           "SELECT f.memory_id FROM memories_fts f JOIN memories m ON m.memory_id = "
           "f.memory_id WHERE memories_fts MATCH ? AND m.status = 'active' "
           "ORDER BY rank LIMIT ?");
    s.bind(1, match);
    s.bind(2, static_cast<std::int64_t>(limit));
    std::vector<std::string> out;
    while (s.step()) out.emplace_back(s.col_text(0));
    return out;
}

std::int64_t SqliteMemoryStore::count(std::optional<MemoryStatus> status_filter) const {
    std::lock_guard<std::mutex> lock(mu_);
    if (status_filter) {
        Stmt s(db_, "SELECT COUNT(*) FROM memories WHERE status = ?");
        s.bind(1, std::string(to_string(*status_filter)));
        s.step();
        return s.col_int64(0);
    }
    Stmt s(db_, "SELECT COUNT(*) FROM memories");
    s.step();
    return s.col_int64(0);
}

void SqliteMemoryStore::save_snapshot(const std::string& path) const {
    json j;
    j["schema_version"] = kSchemaVersion;
    auto units = all_units();
    std::sort(units.begin(), units.end(),
              [](const MemoryUnit& a, const MemoryUnit& b) { return a.memory_id < b.memory_id; });
    json mems = json::array();
    for (const auto& u : units) mems.push_back(u.to_json());
    j["memories"] = std::move(mems);
    json evs = json::array();
    for (const auto& e : events()) evs.push_back(e.to_json());
    j["events"] = std::move(evs);
    json lks = json::array();
    for (const auto& l : links()) lks.push_back(l.to_json());
    j["links"] = std::move(lks);

    std::ofstream out(path);
    if (!out) throw StoreError("cannot write snapshot to " + path);
    out << j.dump(1) << "\n";
    if (!out) throw StoreError("write failure for snapshot " + path);
}

std::unique_ptr<SqliteMemoryStore> SqliteMemoryStore::load_snapshot(
    const std::string& path, const std::string& db_path) {
    std::ifstream in(path);
    if (!in) throw StoreError("cannot read snapshot " + path);
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw StoreError("corrupt snapshot " + path + ": " + e.what());
    }
    if (!j.is_object() || !j.contains("schema_version"))
        throw StoreError("corrupt snapshot " + path + ": missing schema_version");
    int version = j["schema_version"].get<int>();
    if (version != kSchemaVersion) throw SnapshotVersionError(version, kSchemaVersion);

    std::vector<MemoryUnit> units;
    std::vector<MemoryEvent> evs;
    std::vector<MemoryLink> lks;
    try {
        for (const auto& m : j.value("memories", json::array()))
            units.push_back(MemoryUnit::from_json(m));
        for (const auto& e : j.value("events", json::array()))
            evs.push_back(MemoryEvent::from_json(e));
        for (const auto& l : j.value("links", json::array()))
            lks.push_back(MemoryLink::from_json(l));
    } catch (const std::exception& e) {
        throw StoreError("corrupt snapshot " + path + ": " + e.what());
    }

    auto store = std::make_unique<SqliteMemoryStore>(db_path);
    Tx tx(store->db_);
    for (const auto& u : units) store->insert_unit_row(u);
    for (const auto& e : evs) {
        Stmt s(store->db_,
               "INSERT INTO memory_events(event_id, memory_id, kind, payload, at) "
               "VALUES (?,?,?,?,?)");
        s.bind(1, e.event_id);
        s.bind(2, e.memory_id);
        s.bind(3, std::string(to_string(e.kind)));
        s.bind(4, e.payload.dump());
        s.bind(5, text::format_timestamp(e.at));
        s.step();
    }
    for (const auto& l : lks) {
        Stmt s(store->db_, "INSERT INTO memory_links(src, dst, kind) VALUES (?,?,?)");
        s.bind(1, l.src);
        s.bind(2, l.dst);
        s.bind(3, std::string(to_string(l.kind)));
        s.step();
    }
    tx.commit();
    return store;
}

}  // namespace memex
