#include "spiral/core.hpp"

namespace spiral {

const char* to_string(BlockStatus s) {
    switch (s) {
    case BlockStatus::Prepared: return "prepared";
    case BlockStatus::Finalized: return "finalized";
    case BlockStatus::Discarded: return "discarded";
    }
    return "?";
}

std::vector<uint8_t> encode_header(const BlockHeader& h) {
    Encoder e;
    e.put_u32(h.shard);
    e.put_u32(h.epoch);
    e.put_u64(h.height);
    e.put_u32(h.view);
    e.put_hash(h.parent);
    e.put_hash(h.tx_root);
    e.put_hash(h.latest_finalized);
    e.put_u32(uint32_t(h.endorsement_list.size()));
    for (const auto& eh : h.endorsement_list) e.put_hash(eh);
    e.put_u32(h.proposer);
    return std::move(e.buf);
}

Hash content_hash(const BlockHeader& h) {
    return sha256(encode_header(h));
}

const Hash& epoch_genesis_sentinel() {
    static const Hash sentinel = sha256(std::string("epoch-genesis"));
    return sentinel;
}

ShardId shard_of_account(const Address& addr, uint32_t num_shards) {
    if (num_shards == 0) throw std::invalid_argument("num_shards must be >= 1");
    Hash h = sha256(std::span<const uint8_t>(addr.data(), addr.size()));
    // Big-endian reduction of the full digest, one byte at a time.
    uint64_t rem = 0;
    for (auto b : h.bytes) rem = (rem * 256 + b) % num_shards;
    return ShardId(rem);
}

bool verify_ancestry(const Hash& descendant, const Hash& ancestor,
                     std::span<const BlockHeader> chain) {
    if (chain.empty()) return false;
    Hash first = content_hash(chain.front());
    if (first != ancestor && chain.front().parent != ancestor) return false;
    Hash prev = first;
    for (size_t i = 1; i < chain.size(); ++i) {
        if (chain[i].parent != prev) return false;
        prev = content_hash(chain[i]);
    }
    return prev == descendant;
}

} // namespace spiral
