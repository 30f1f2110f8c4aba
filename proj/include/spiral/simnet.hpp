#pragma once

#include <cstdint>
#include <map>
#include <set>
#include <span>
#include <vector>

#include "spiral/core.hpp"

namespace spiral::simnet {

// splitmix64: tiny, platform-stable, good enough for delay jitter and
// shuffles. Standard-library distributions are not bit-stable across
// implementations, so everything derives from raw draws.
struct Rng {
    uint64_t state = 0x9e3779b97f4a7c15ull;

    explicit Rng(uint64_t seed = 0) : state(seed + 0x9e3779b97f4a7c15ull) {}

    uint64_t next() {
        uint64_t z = (state += 0x9e3779b97f4a7c15ull);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
        return z ^ (z >> 31);
    }

    // Unbiased draw in [0, n).
    uint64_t below(uint64_t n) {
        if (n <= 1) return 0;
        uint64_t bound = UINT64_MAX - UINT64_MAX % n;
        uint64_t v;
        do { v = next(); } while (v >= bound);
        return v % n;
    }

    double unit() { return double(next() >> 11) * 0x1.0p-53; }
};

struct PartitionWindow {
    ShardId shard = 0;
    Tick t_start = 0;
    Tick t_end = 0; // inclusive of deferral until this tick
};

struct NetworkParams {
    uint32_t base_latency = 10; // ticks; 1 tick ~ 10 ms, so 10 ticks ~ 100 ms
    uint32_t jitter = 2;        // uniform extra ticks in [0, jitter]
    uint32_t delta_bound = 0;   // post-GST cap; 0 derives base+jitter
    Tick gst = 0;

    uint32_t effective_delta() const { return delta_bound ? delta_bound : base_latency + jitter; }
};

// Message delay: base plus uniform jitter; a send touching a partitioned
// shard is deferred to the partition's end; after GST the delay is clamped
// to delta.
Tick sample_delay(Rng& rng, const NetworkParams& net, ShardId from, ShardId to, Tick now,
                  std::span<const PartitionWindow> partitions);

struct EpochEntry {
    std::vector<ShardId> node_shard;          // node -> shard
    std::vector<std::vector<NodeId>> members; // shard -> ordered member list
    std::vector<Height> start_height;         // per shard, first height of the epoch
    uint64_t randomness = 0;
};

// Per-epoch assignments; globally readable.
struct EpochRegistry {
    std::map<Epoch, EpochEntry> entries;

    const EpochEntry* get(Epoch e) const {
        auto it = entries.find(e);
        return it == entries.end() ? nullptr : &it->second;
    }
};

// Seeded Fisher-Yates keyed by H(seed || epoch), chunked into N/S shards of
// exactly S. `current_heights` records each shard's next height.
EpochEntry reconfigure_epoch(uint64_t seed, Epoch epoch, uint32_t network_size,
                             uint32_t shard_size, std::span<const Height> current_heights);

} // namespace spiral::simnet
