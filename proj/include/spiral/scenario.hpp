#pragma once

#include <string>
#include <vector>

#include "spiral/core.hpp"
#include "spiral/simnet.hpp"

namespace spiral {

// Explicit adversary composition for one shard (epoch-0 membership).
struct AdversaryPin {
    ShardId shard = 0;
    uint32_t byzantine = 0;
    uint32_t abc = 0;
};

enum class PlacementMode : uint8_t { RandomBySeed, PinnedToShards };

// Full experiment description; one JSON file per scenario.
struct ScenarioConfig {
    std::string name = "scenario";
    uint32_t network_size = 30;
    uint32_t shard_size = 10;
    uint32_t group_size = 3;
    Tick epoch_length_ticks = 1'000'000; // effectively one epoch unless lowered
    Tick run_ticks = 2000;

    double f_byzantine = 0.0;
    double f_abc = 0.0;
    PlacementMode placement = PlacementMode::RandomBySeed;
    std::string byz_behavior = "equivocate"; // silent | equivocate | withhold_endorsement
    uint32_t equivocate_branches = 2;
    std::vector<AdversaryPin> pins;

    std::vector<simnet::PartitionWindow> partitions;

    double txs_per_tick = 1.0;
    double cross_shard_ratio = 0.2;
    uint32_t accounts_per_shard = 8;
    uint64_t initial_balance = 1000;
    uint32_t block_capacity = 4096;

    simnet::NetworkParams net;

    uint64_t seed = 1;
    Tick vc_timeout = 80;
    Tick window_ticks = 500; // liveness audit window W
    Tick frame_ticks = 60;   // metrics frame length
    Tick sync_pause_ticks = 40;
    bool check_liveness = true;
    std::string genesis_file; // optional CSV address_hex,balance

    uint32_t num_shards() const { return network_size / shard_size; }

    // Throws std::invalid_argument on violated invariants; derives the GST
    // from partition windows when unset.
    void validate_and_finalize();

    std::string to_json() const;
    static ScenarioConfig from_json(const std::string& text);
    static ScenarioConfig load(const std::string& path);
    void save(const std::string& path) const;
};

} // namespace spiral
