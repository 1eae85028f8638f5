#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <random>

#include "memex/embedding.hpp"
#include "memex/store.hpp"

using namespace memex;
namespace fs = std::filesystem;

namespace {

Timestamp ts(const std::string& s) {
    Timestamp t = 0;
    REQUIRE(text::parse_timestamp(s, t));
    return t;
}

MemoryUnit make_unit(const std::string& id, const std::string& content,
                     const std::string& scope_str = "user:u|workspace:w",
                     double importance = 0.5) {
    MemoryUnit u;
    u.memory_id = id;
    u.scope = *Scope::parse(scope_str);
    u.memory_type = MemoryType::episodic;
    u.content = content;
    u.importance = importance;
    u.importance_base = importance;
    u.created_at = ts("2023-05-01T00:00:00Z");
    u.updated_at = u.created_at;
    return u;
}

/// Replays the audit log over empty state: unit statuses must be fully
/// reconstructable from events alone.
std::map<std::string, MemoryStatus> replay_statuses(const std::vector<MemoryEvent>& events) {
    std::map<std::string, MemoryStatus> out;
    for (const auto& e : events) {
        switch (e.kind) {
            case EventKind::created: out[e.memory_id] = MemoryStatus::active; break;
            case EventKind::merged:
            case EventKind::superseded: out[e.memory_id] = MemoryStatus::superseded; break;
            case EventKind::expired: out[e.memory_id] = MemoryStatus::expired; break;
            case EventKind::decayed:
            case EventKind::reinforced: break;
        }
    }
    return out;
}

}  // namespace

TEST_CASE("scope parsing and base scope") {
    auto s = Scope::parse("user:u1|workspace:w1|session:s1");
    REQUIRE(s);
    CHECK(s->user == "u1");
    CHECK(s->session.value() == "s1");
    CHECK(s->base().str() == "user:u1|workspace:w1");
    CHECK(s->str() == "user:u1|workspace:w1|session:s1");
    CHECK_FALSE(Scope::parse("user:u1"));
    CHECK_FALSE(Scope::parse("workspace:w|user:u"));
    CHECK_FALSE(Scope::parse("user:|workspace:w"));
    Scope bad{"a|b", "w", std::nullopt};
    CHECK_FALSE(bad.valid());
}

TEST_CASE("put stores valid units and rejects invalid ones") {
    SqliteMemoryStore store;

    SUBCASE("minimal valid unit emits created event") {
        auto u = make_unit("m1", "apple");
        CHECK(store.put(u) == "m1");
        auto got = store.get("m1");
        REQUIRE(got);
        CHECK(got->content == "apple");
        auto events = store.events();
        REQUIRE(events.size() == 1);
        CHECK(events[0].kind == EventKind::created);
        CHECK(events[0].memory_id == "m1");
        CHECK(events[0].event_id == 1);
    }
    SUBCASE("content shorter than 3 chars is rejected with reason") {
        auto u = make_unit("m2", "ab");
        CHECK_THROWS_WITH_AS(store.put(u), "put rejected: content < 3 chars", StoreError);
    }
    SUBCASE("duplicate memory_id is rejected") {
        store.put(make_unit("m3", "first content"));
        CHECK_THROWS_AS(store.put(make_unit("m3", "second content")), StoreError);
    }
    SUBCASE("embedding norm violation is rejected") {
        auto u = make_unit("m4", "vector unit");
        u.embedding = std::vector<double>{0.5, 0.5};
        CHECK_THROWS_AS(store.put(u), StoreError);
        u.embedding = hash_embed("vector unit");
        CHECK(store.put(u) == "m4");
    }
    SUBCASE("importance below the floor is rejected") {
        auto u = make_unit("m5", "low importance", "user:u|workspace:w", 0.05);
        CHECK_THROWS_AS(store.put(u), StoreError);
    }
}

TEST_CASE("query_scope: session isolation and cross-session retrieval") {
    SqliteMemoryStore store;
    store.put(make_unit("a", "unit in session one", "user:u|workspace:w|session:s1"));
    store.put(make_unit("b", "unit in session two", "user:u|workspace:w|session:s2"));
    store.put(make_unit("c", "other workspace", "user:u|workspace:other"));

    Scope base = *Scope::parse("user:u|workspace:w");
    auto both = store.query_scope(base, true);
    CHECK(both.size() == 2);
    for (const auto& u : both) CHECK(u.scope.base().str() == base.str());

    Scope s1 = *Scope::parse("user:u|workspace:w|session:s1");
    auto only = store.query_scope(s1, false);
    REQUIRE(only.size() == 1);
    CHECK(only[0].memory_id == "a");

    Scope unknown = *Scope::parse("user:nobody|workspace:w");
    CHECK(store.query_scope(unknown, true).empty());
}

TEST_CASE("query_scope orders by created_at descending") {
    SqliteMemoryStore store;
    auto early = make_unit("early", "first unit stored");
    early.created_at = ts("2023-01-01");
    auto late = make_unit("late", "second unit stored");
    late.created_at = ts("2023-06-01");
    store.put(early);
    store.put(late);
    auto rows = store.query_scope(*Scope::parse("user:u|workspace:w"), true);
    REQUIRE(rows.size() == 2);
    CHECK(rows[0].memory_id == "late");
}

TEST_CASE("supersede state transitions") {
    SqliteMemoryStore store;
    store.put(make_unit("a", "old fact about topic"));
    store.put(make_unit("b", "new fact about topic"));

    store.supersede("a", "b", ts("2023-05-02"));
    auto a = store.get("a");
    auto b = store.get("b");
    CHECK(a->status == MemoryStatus::superseded);
    CHECK(a->superseded_by.value() == "b");
    CHECK(b->supersedes.count("a") == 1);

    CHECK_THROWS_WITH_AS(store.supersede("a", "b", ts("2023-05-03")),
                         "supersede: a already superseded", StoreError);
    CHECK_THROWS_AS(store.supersede("missing", "b", ts("2023-05-03")), StoreError);

    auto events = store.events();
    REQUIRE(events.size() == 3);
    CHECK(events[2].kind == EventKind::superseded);
    CHECK(events[2].payload["by"] == "b");
}

TEST_CASE("audit log replay reconstructs statuses") {
    SqliteMemoryStore store;
    store.put(make_unit("a", "alpha content here"));
    store.put(make_unit("b", "beta content here"));
    store.put(make_unit("c", "gamma content here"));
    store.supersede("a", "b", ts("2023-05-02"));
    store.expire("c", ts("2023-05-03"));
    store.set_decayed_importance("b", 0.3, ts("2023-05-03"));
    store.set_reinforcement("b", 0.1, ts("2023-05-03"));

    auto replayed = replay_statuses(store.events());
    for (const auto& u : store.all_units()) {
        REQUIRE(replayed.count(u.memory_id) == 1);
        CHECK(replayed[u.memory_id] == u.status);
    }
}

TEST_CASE("event ids are strictly increasing") {
    SqliteMemoryStore store;
    for (int i = 0; i < 5; ++i)
        store.put(make_unit("m" + std::to_string(i), "content number " + std::to_string(i)));
    auto events = store.events();
    for (size_t i = 1; i < events.size(); ++i)
        CHECK(events[i].event_id > events[i - 1].event_id);
}

TEST_CASE("links are typed, unique, and reject self loops") {
    SqliteMemoryStore store;
    store.put(make_unit("a", "alpha content"));
    store.put(make_unit("b", "beta content"));
    store.add_link({"a", "b", LinkKind::elaborates});
    store.add_link({"a", "b", LinkKind::elaborates});  // duplicate collapses
    store.add_link({"a", "b", LinkKind::contradicts});
    CHECK(store.links().size() == 2);
    CHECK_THROWS_AS(store.add_link({"a", "a", LinkKind::related}), StoreError);
}

TEST_CASE("full-text search finds active units only") {
    SqliteMemoryStore store;
    store.put(make_unit("a", "Melanie roasted marshmallows while camping"));
    store.put(make_unit("b", "completely unrelated note about taxes"));
    store.supersede("b", "a", ts("2023-06-01"));
    auto hits = store.search_text("marshmallows");
    REQUIRE(hits.size() == 1);
    CHECK(hits[0] == "a");
    CHECK(store.search_text("taxes").empty());  // superseded excluded
}

TEST_CASE("snapshot round trip is lossless") {
    std::mt19937_64 rng(42);
    SqliteMemoryStore store;
    std::uniform_int_distribution<int> words(3, 10);
    for (int i = 0; i < 100; ++i) {
        auto u = make_unit(make_uuid(rng), "unit content number " + std::to_string(i),
                           i % 2 ? "user:u|workspace:w|session:s1" : "user:u|workspace:w");
        u.entities.insert("entity" + std::to_string(i % 7));
        u.embedding = hash_embed(u.content);
        u.summary = "summary " + std::to_string(i);
        store.put(u);
    }
    store.supersede(store.all_units()[0].memory_id, store.all_units()[1].memory_id,
                    ts("2023-06-01"));
    store.add_link({store.all_units()[2].memory_id, store.all_units()[3].memory_id,
                    LinkKind::related});

    std::string path = (fs::temp_directory_path() / "memex_snapshot_test.json").string();
    store.save_snapshot(path);
    auto loaded = SqliteMemoryStore::load_snapshot(path);

    auto a = store.all_units();
    auto b = loaded->all_units();
    REQUIRE(a.size() == b.size());
    for (size_t i = 0; i < a.size(); ++i) {
        CHECK(a[i].to_json() == b[i].to_json());  // bitwise-equal unit set
    }
    auto ea = store.events();
    auto eb = loaded->events();
    REQUIRE(ea.size() == eb.size());
    for (size_t i = 0; i < ea.size(); ++i) CHECK(ea[i].to_json() == eb[i].to_json());
    auto la = store.links();
    auto lb = loaded->links();
    REQUIRE(la.size() == lb.size());
    for (size_t i = 0; i < la.size(); ++i) CHECK(la[i].to_json() == lb[i].to_json());
    fs::remove(path);
}

TEST_CASE("snapshot version mismatch reports both versions") {
    std::string path = (fs::temp_directory_path() / "memex_snapshot_v5.json").string();
    {
        std::ofstream out(path);
        out << R"({"schema_version":5,"memories":[],"events":[],"links":[]})";
    }
    try {
        SqliteMemoryStore::load_snapshot(path);
        FAIL("expected SnapshotVersionError");
    } catch (const SnapshotVersionError& e) {
        CHECK(e.found == 5);
        CHECK(e.expected == 6);
        CHECK(std::string(e.what()).find("5") != std::string::npos);
        CHECK(std::string(e.what()).find("6") != std::string::npos);
    }
    fs::remove(path);
}

TEST_CASE("corrupt snapshot leaves nothing behind") {
    std::string path = (fs::temp_directory_path() / "memex_snapshot_bad.json").string();
    {
        std::ofstream out(path);
        out << "this is not json {{{";
    }
    CHECK_THROWS_AS(SqliteMemoryStore::load_snapshot(path), StoreError);
    fs::remove(path);
}

TEST_CASE("persistence round trip property over randomized stores") {
    std::mt19937_64 rng(1234);
    std::uniform_int_distribution<int> n_units(1, 25);
    std::uniform_int_distribution<int> word(0, 9);
    const char* vocab[] = {"apple", "banana", "camping", "dog",  "eagle",
                           "forest", "guitar", "harbor", "igloo", "jacket"};
    for (int round = 0; round < 10; ++round) {
        SqliteMemoryStore store;
        int n = n_units(rng);
        for (int i = 0; i < n; ++i) {
            std::string content;
            for (int w = 0; w < 5; ++w) content += std::string(vocab[word(rng)]) + " ";
            auto u = make_unit(make_uuid(rng), content);
            if (word(rng) > 4) u.embedding = hash_embed(content);
            store.put(u);
        }
        std::string path =
            (fs::temp_directory_path() / ("memex_prop_" + std::to_string(round) + ".json"))
                .string();
        store.save_snapshot(path);
        auto loaded = SqliteMemoryStore::load_snapshot(path);
        auto a = store.all_units();
        auto b = loaded->all_units();
        REQUIRE(a.size() == b.size());
        for (size_t i = 0; i < a.size(); ++i) CHECK(a[i].to_json() == b[i].to_json());
        fs::remove(path);
    }
}
