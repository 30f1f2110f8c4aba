#include "spiral/simnet.hpp"

#include <stdexcept>

namespace spiral::simnet {

Tick sample_delay(Rng& rng, const NetworkParams& net, ShardId from, ShardId to, Tick now,
                  std::span<const PartitionWindow> partitions) {
    Tick send = now;
    for (const auto& p : partitions) {
        if ((p.shard == from || p.shard == to) && now >= p.t_start && now <= p.t_end)
            send = std::max(send, p.t_end);
    }
    Tick delay = net.base_latency;
    if (net.jitter > 0) delay += rng.below(uint64_t(net.jitter) + 1);
    if (send == now && now >= net.gst && delay > net.effective_delta())
        delay = net.effective_delta();
    return send - now + delay;
}

EpochEntry reconfigure_epoch(uint64_t seed, Epoch epoch, uint32_t network_size,
                             uint32_t shard_size, std::span<const Height> current_heights) {
    if (shard_size == 0 || network_size % shard_size != 0)
        throw std::invalid_argument("shard size must divide the network size");
    uint32_t num_shards = network_size / shard_size;

    Encoder e;
    e.put_u64(seed);
    e.put_u32(epoch);
    Hash key = e.digest();
    uint64_t k = 0;
    for (int i = 0; i < 8; ++i) k = (k << 8) | key.bytes[i];

    Rng rng(k);
    std::vector<NodeId> perm(network_size);
    for (uint32_t i = 0; i < network_size; ++i) perm[i] = i;
    for (uint32_t i = network_size - 1; i > 0; --i)
        std::swap(perm[i], perm[rng.below(uint64_t(i) + 1)]);

    EpochEntry entry;
    entry.randomness = k;
    entry.node_shard.resize(network_size);
    entry.members.resize(num_shards);
    entry.start_height.resize(num_shards);
    for (uint32_t s = 0; s < num_shards; ++s) {
        entry.members[s].assign(perm.begin() + size_t(s) * shard_size,
                                perm.begin() + size_t(s + 1) * shard_size);
        for (NodeId n : entry.members[s]) entry.node_shard[n] = s;
        entry.start_height[s] = s < current_heights.size() ? current_heights[s] : 1;
    }
    return entry;
}

} // namespace spiral::simnet
