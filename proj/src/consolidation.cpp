#include "memex/consolidation.hpp"

#include <algorithm>
#include <map>

namespace memex {

namespace {

/// importance desc, created_at asc, memory_id asc — the survivor ordering
/// used by both dedup passes.
bool priority_less(const MemoryUnit& a, const MemoryUnit& b) {
    if (a.importance != b.importance) return a.importance > b.importance;
    if (a.created_at != b.created_at) return a.created_at < b.created_at;
    return a.memory_id < b.memory_id;
}

std::set<std::string> lowered(const std::set<std::string>& in) {
    std::set<std::string> out;
    for (const auto& s : in) out.insert(text::to_lower(s));
    return out;
}

bool share_entity(const MemoryUnit& a, const MemoryUnit& b) {
    auto la = lowered(a.entities);
    for (const auto& e : lowered(b.entities)) {
        if (la.count(e)) return true;
    }
    return false;
}

std::vector<MemoryUnit> active_units(MemoryStore& store, const Scope& scope) {
    return store.query_scope(scope.base(), true, MemoryStatus::active);
}

}  // namespace

std::string ConsolidationConfig::validate() const {
    if (jaccard_threshold <= 0.0 || jaccard_threshold > 1.0)
        return "jaccard_threshold must be in (0, 1]";
    if (importance_floor < 0.0 || importance_floor >= 1.0)
        return "importance_floor must be in [0, 1)";
    if (reinforce_step <= 0.0 || reinforce_step > reinforce_cap)
        return "reinforce_step must be in (0, reinforce_cap]";
    if (decay_rate_per_day < 0.0) return "decay_rate_per_day must be >= 0";
    return "";
}

json MergeReport::to_json() const { return json{{"groups", groups}, {"merged", merged}}; }
json DecayReport::to_json() const {
    return json{{"examined", examined}, {"changed", changed}, {"horizon_days", horizon_days}};
}
json ReinforceReport::to_json() const { return json{{"reinforced", reinforced}}; }
json PruneReport::to_json() const { return json{{"pruned", pruned}}; }
json ConsolidationReport::to_json() const {
    return json{{"prune", prune.to_json()},
                {"dedup_exact", exact.to_json()},
                {"merge_near_duplicates", near.to_json()},
                {"decay", decay.to_json()}};
}

double jaccard(const std::string& a, const std::string& b) { return text::jaccard(a, b); }

MergeReport dedup_exact(MemoryStore& store, const Scope& scope, Timestamp now) {
    MergeReport report;
    auto units = active_units(store, scope);
    std::map<std::string, std::vector<MemoryUnit>> groups;
    for (auto& u : units) {
        std::string key =
            std::string(to_string(u.memory_type)) + "\x1f" + text::normalize_content(u.content);
        groups[key].push_back(std::move(u));
    }
    for (auto& [key, members] : groups) {
        if (members.size() < 2) continue;
        ++report.groups;
        std::sort(members.begin(), members.end(), priority_less);
        MemoryUnit survivor = members.front();
        for (size_t i = 1; i < members.size(); ++i) {
            store.merge_into(members[i].memory_id, survivor, now);
            survivor = *store.get(survivor.memory_id);
            ++report.merged;
        }
    }
    return report;
}

MergeReport merge_near_duplicates(MemoryStore& store, const Scope& scope,
                                  const ConsolidationConfig& cfg, Timestamp now) {
    MergeReport report;
    auto units = active_units(store, scope);
    std::sort(units.begin(), units.end(), priority_less);
    std::vector<bool> absorbed(units.size(), false);

    for (size_t i = 0; i < units.size(); ++i) {
        if (absorbed[i]) continue;
        MemoryUnit survivor = units[i];
        bool changed = false;
        for (size_t j = i + 1; j < units.size(); ++j) {
            if (absorbed[j]) continue;
            const MemoryUnit& victim = units[j];
            if (text::jaccard(survivor.content, victim.content) < cfg.jaccard_threshold)
                continue;
            absorbed[j] = true;
            bool shares = share_entity(survivor, victim);
            survivor.entities.insert(victim.entities.begin(), victim.entities.end());
            survivor.persons.insert(victim.persons.begin(), victim.persons.end());
            survivor.locations.insert(victim.locations.begin(), victim.locations.end());
            survivor.topics.insert(victim.topics.begin(), victim.topics.end());
            survivor.keywords.insert(victim.keywords.begin(), victim.keywords.end());
            survivor.tags.insert(victim.tags.begin(), victim.tags.end());
            if (shares) {
                survivor.reinforcement =
                    std::min(cfg.reinforce_cap,
                             survivor.reinforcement + cfg.merge_reinforce_step);
            }
            store.merge_into(victim.memory_id, survivor, now);
            survivor = *store.get(survivor.memory_id);
            changed = true;
            ++report.merged;
        }
        if (changed) ++report.groups;
    }
    return report;
}

DecayReport decay_importance(MemoryStore& store, const Scope& scope, Timestamp now,
                             const ConsolidationConfig& cfg) {
    DecayReport report;
    report.horizon_days = cfg.decay_horizon_days;
    for (const auto& u : active_units(store, scope)) {
        ++report.examined;
        double target = std::max(cfg.importance_floor,
                                 u.importance_base -
                                     cfg.decay_rate_per_day * text::age_days(u.created_at, now));
        if (target != u.importance) {
            store.set_decayed_importance(u.memory_id, target, now);
            ++report.changed;
        }
    }
    return report;
}

ReinforceReport reinforce_entities(MemoryStore& store,
                                   const std::set<std::string>& query_entities,
                                   const ConsolidationConfig& cfg, Timestamp now) {
    ReinforceReport report;
    if (query_entities.empty()) return report;
    std::set<std::string> wanted;
    for (const auto& e : query_entities) wanted.insert(text::to_lower(e));
    for (const auto& u : store.all_units(MemoryStatus::active)) {
        bool hit = false;
        for (const auto& e : u.entities) {
            if (wanted.count(text::to_lower(e))) {
                hit = true;
                break;
            }
        }
        if (!hit) continue;
        double target = std::min(cfg.reinforce_cap, u.reinforcement + cfg.reinforce_step);
        if (target != u.reinforcement) {
            store.set_reinforcement(u.memory_id, target, now);
            ++report.reinforced;
        }
    }
    return report;
}

PruneReport prune_working_summaries(MemoryStore& store, const Scope& scope, Timestamp now) {
    PruneReport report;
    std::map<std::string, std::vector<MemoryUnit>> per_scope;
    for (auto& u : active_units(store, scope)) {
        if (u.memory_type != MemoryType::working_summary) continue;
        per_scope[u.scope.str()].push_back(std::move(u));
    }
    for (auto& [scope_key, members] : per_scope) {
        if (members.size() < 2) continue;
        std::sort(members.begin(), members.end(), [](const MemoryUnit& a, const MemoryUnit& b) {
            if (a.created_at != b.created_at) return a.created_at > b.created_at;
            return a.memory_id < b.memory_id;
        });
        const std::string& keeper = members.front().memory_id;
        for (size_t i = 1; i < members.size(); ++i) {
            store.supersede(members[i].memory_id, keeper, now);
            ++report.pruned;
        }
    }
    return report;
}

ConsolidationReport consolidate(MemoryStore& store, const Scope& scope, Timestamp now,
                                const ConsolidationConfig& cfg) {
    std::string bad = cfg.validate();
    if (!bad.empty()) throw std::invalid_argument("ConsolidationConfig: " + bad);
    ConsolidationReport report;
    report.prune = prune_working_summaries(store, scope, now);
    report.exact = dedup_exact(store, scope, now);
    report.near = merge_near_duplicates(store, scope, cfg, now);
    report.decay = decay_importance(store, scope, now, cfg);
    return report;
}

}  // namespace memex
