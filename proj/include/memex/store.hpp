#pragma once

#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "memex/types.hpp"

struct sqlite3;

namespace memex {

class StoreError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

/// Raised when a snapshot's schema version does not match the engine's.
class SnapshotVersionError : public StoreError {
  public:
    SnapshotVersionError(int found, int expected)
        : StoreError("snapshot schema_version " + std::to_string(found) +
                      " does not match engine schema_version " + std::to_string(expected)),
          found(found),
          expected(expected) {}
    int found;
    int expected;
};

/// Storage contract: typed, scoped units with an append-only audit log and a
/// typed link graph. Mutations serialize through a single writer; returned
/// values are copies safe to share across threads.
class MemoryStore {
  public:
    virtual ~MemoryStore() = default;

    /// Persists a validated unit and appends a `created` event.
    /// Throws StoreError on validation failure or duplicate id.
    virtual std::string put(const MemoryUnit& unit) = 0;

    virtual std::optional<MemoryUnit> get(const std::string& memory_id) const = 0;

    /// Exact-scope match, or base-scope match when include_sessions is set.
    /// Ordered by created_at descending (memory_id ascending on ties).
    virtual std::vector<MemoryUnit> query_scope(
        const Scope& scope, bool include_sessions,
        std::optional<MemoryStatus> status_filter = std::nullopt) const = 0;

    virtual std::vector<MemoryUnit> all_units(
        std::optional<MemoryStatus> status_filter = std::nullopt) const = 0;

    /// Marks `old_id` superseded by `new_id` and appends a `superseded` event.
    virtual void supersede(const std::string& old_id, const std::string& new_id,
                           Timestamp at) = 0;

    /// Dedup merge: writes the updated survivor (set unions, reinforcement),
    /// marks the victim superseded by it, appends a `merged` event.
    virtual void merge_into(const std::string& victim_id, const MemoryUnit& survivor,
                            Timestamp at) = 0;

    /// Appends a `decayed` event when the value changes.
    virtual void set_decayed_importance(const std::string& memory_id, double importance,
                                        Timestamp at) = 0;

    /// Appends a `reinforced` event when the value changes.
    virtual void set_reinforcement(const std::string& memory_id, double reinforcement,
                                   Timestamp at) = 0;

    /// Marks a unit expired and appends an `expired` event. Never called
    /// automatically; expiry needs an explicit caller-side rule.
    virtual void expire(const std::string& memory_id, Timestamp at) = 0;

    virtual void add_link(const MemoryLink& link) = 0;
    virtual std::vector<MemoryLink> links() const = 0;
    virtual std::vector<MemoryEvent> events() const = 0;

    /// Full-text match over content/summary/entities/topics of active units.
    virtual std::vector<std::string> search_text(const std::string& query,
                                                 int limit = 20) const = 0;

    virtual std::int64_t count(std::optional<MemoryStatus> status_filter = std::nullopt)
        const = 0;

    /// JSON snapshot: {schema_version, memories, events, links}.
    virtual void save_snapshot(const std::string& path) const = 0;
};

/// Reference implementation over a single SQLite file (":memory:" for an
/// ephemeral store) with an FTS5 index and WAL journaling for file-backed
/// databases.
class SqliteMemoryStore : public MemoryStore {
  public:
    explicit SqliteMemoryStore(const std::string& path = ":memory:");
    ~SqliteMemoryStore() override;

    SqliteMemoryStore(const SqliteMemoryStore&) = delete;
    SqliteMemoryStore& operator=(const SqliteMemoryStore&) = delete;

    std::string put(const MemoryUnit& unit) override;
    std::optional<MemoryUnit> get(const std::string& memory_id) const override;
    std::vector<MemoryUnit> query_scope(
        const Scope& scope, bool include_sessions,
        std::optional<MemoryStatus> status_filter = std::nullopt) const override;
    std::vector<MemoryUnit> all_units(
        std::optional<MemoryStatus> status_filter = std::nullopt) const override;
    void supersede(const std::string& old_id, const std::string& new_id,
                   Timestamp at) override;
    void merge_into(const std::string& victim_id, const MemoryUnit& survivor,
                    Timestamp at) override;
    void set_decayed_importance(const std::string& memory_id, double importance,
                                Timestamp at) override;
    void set_reinforcement(const std::string& memory_id, double reinforcement,
                           Timestamp at) override;
    void expire(const std::string& memory_id, Timestamp at) override;
    void add_link(const MemoryLink& link) override;
    std::vector<MemoryLink> links() const override;
    std::vector<MemoryEvent> events() const override;
    std::vector<std::string> search_text(const std::string& query,
                                         int limit = 20) const override;
    std::int64_t count(std::optional<MemoryStatus> status_filter = std::nullopt)
        const override;
    void save_snapshot(const std::string& path) const override;

    /// Builds a fresh store from a JSON snapshot. Throws (leaving nothing
    /// behind) on parse failure or schema-version mismatch.
    static std::unique_ptr<SqliteMemoryStore> load_snapshot(
        const std::string& path, const std::string& db_path = ":memory:");

  private:
    void exec(const std::string& sql);
    void append_event(const std::string& memory_id, EventKind kind, const json& payload,
                      Timestamp at);
    void update_unit_row(const MemoryUnit& unit);
    void insert_unit_row(const MemoryUnit& unit);
    std::vector<MemoryUnit> query_units(const std::string& where,
                                        const std::vector<std::string>& binds) const;

    sqlite3* db_ = nullptr;
    mutable std::mutex mu_;
};

}  // namespace memex
