#pragma once

#include <set>
#include <string>

#include "memex/store.hpp"
#include "memex/types.hpp"

namespace memex {

struct ConsolidationConfig {
    double jaccard_threshold = 0.80;
    double decay_rate_per_day = 0.05;
    double importance_floor = kImportanceFloor;
    double reinforce_step = 0.05;       // query co-occurrence increment
    double merge_reinforce_step = 0.05; // shared-entity increment on merge
    double reinforce_cap = kReinforcementCap;
    double decay_horizon_days = 30.0;   // reporting horizon, not a cutoff

    std::string validate() const;
};

struct MergeReport {
    int groups = 0;
    int merged = 0;  // victims superseded
    json to_json() const;
};

struct DecayReport {
    int examined = 0;
    int changed = 0;
    double horizon_days = 30.0;
    json to_json() const;
};

struct ReinforceReport {
    int reinforced = 0;
    json to_json() const;
};

struct PruneReport {
    int pruned = 0;
    json to_json() const;
};

struct ConsolidationReport {
    PruneReport prune;
    MergeReport exact;
    MergeReport near;
    DecayReport decay;
    json to_json() const;
};

/// Token-set Jaccard over lowercase alphanumeric tokens; J(empty, empty) = 1.
double jaccard(const std::string& a, const std::string& b);

/// Among active units sharing (memory_type, normalized content), the highest
/// importance survives (ties: older created_at, then memory_id).
MergeReport dedup_exact(MemoryStore& store, const Scope& scope, Timestamp now);

/// Greedy near-duplicate absorption: in priority order (importance desc,
/// created_at asc, memory_id asc), each surviving unit absorbs every active
/// later unit whose content Jaccard reaches the threshold. Survivor keeps its
/// own content and takes the union of entity/keyword/topic sets; shared
/// entities reinforce the survivor.
MergeReport merge_near_duplicates(MemoryStore& store, const Scope& scope,
                                  const ConsolidationConfig& cfg, Timestamp now);

/// importance = max(floor, importance_base - rate * age_days); idempotent for
/// a fixed `now` because it recomputes from created_at instead of subtracting
/// repeatedly.
DecayReport decay_importance(MemoryStore& store, const Scope& scope, Timestamp now,
                             const ConsolidationConfig& cfg);

/// Bumps reinforcement (capped) for every active unit sharing at least one
/// entity with the query, case-insensitively.
ReinforceReport reinforce_entities(MemoryStore& store,
                                   const std::set<std::string>& query_entities,
                                   const ConsolidationConfig& cfg, Timestamp now);

/// Per exact scope, only the newest working summary stays active.
PruneReport prune_working_summaries(MemoryStore& store, const Scope& scope, Timestamp now);

/// prune -> dedup_exact -> merge_near_duplicates -> decay_importance.
ConsolidationReport consolidate(MemoryStore& store, const Scope& scope, Timestamp now,
                                const ConsolidationConfig& cfg);

}  // namespace memex
