#pragma once

#include <cstdint>
#include <optional>
#include <set>
#include <span>
#include <stdexcept>
#include <vector>

#include "spiral/hash.hpp"

namespace spiral {

using NodeId = uint32_t;
using ShardId = uint32_t;
using GroupId = uint32_t;
using Epoch = uint32_t;
using Height = uint64_t;
using ViewNumber = uint32_t;
using Tick = uint64_t;

using Address = std::array<uint8_t, 20>;

// GroupId = floor(ShardId / G); group g spans shards [gG, gG+G-1] and the
// endorsement order cycles inside the group.
struct GroupLayout {
    uint32_t group_size = 1; // shards per group (G)

    GroupId group_of(ShardId w) const { return w / group_size; }

    ShardId successor(ShardId w) const {
        ShardId base = (w / group_size) * group_size;
        return base + (w - base + 1) % group_size;
    }

    ShardId predecessor(ShardId w) const {
        ShardId base = (w / group_size) * group_size;
        return base + (w - base + group_size - 1) % group_size;
    }
};

enum class BlockStatus : uint8_t { Prepared, Finalized, Discarded };

const char* to_string(BlockStatus s);

struct BlockHeader {
    ShardId shard = 0;
    Epoch epoch = 0;
    Height height = 0;
    ViewNumber view = 0;
    Hash parent{};
    Hash tx_root{};
    Hash latest_finalized{};
    std::vector<Hash> endorsement_list; // oldest first, at most G-1 entries
    NodeId proposer = 0;
    std::set<NodeId> quorum_cert; // voter ids; excluded from the content hash
};

// Canonical header encoding (quorum_cert excluded): shard u32, epoch u32,
// height u64, view u32, parent, tx_root, latest_finalized, endorsement list
// (u32 count + 32-byte entries), proposer u32. Big-endian throughout.
std::vector<uint8_t> encode_header(const BlockHeader& h);

// Identity of a proposal; stable while votes accumulate.
Hash content_hash(const BlockHeader& h);

// Reserved target for the first endorsement of each epoch, before the
// predecessor shard has prepared anything.
const Hash& epoch_genesis_sentinel();

// The block this header endorses: last endorsement-list entry, or the epoch
// sentinel when the list is empty.
inline Hash endorsed_hash(const BlockHeader& h) {
    return h.endorsement_list.empty() ? epoch_genesis_sentinel() : h.endorsement_list.back();
}

// Quorum size for a shard of S nodes.
inline uint32_t quorum_size(uint32_t shard_size) { return (2 * shard_size + 2) / 3; }

// Account-to-shard assignment: H(address) interpreted big-endian mod num_shards.
ShardId shard_of_account(const Address& addr, uint32_t num_shards);

// True iff `chain` is a parent-linked path connecting `ancestor` to
// `descendant`: chain.front() hashes to ancestor (or its parent is ancestor)
// and chain.back() hashes to descendant. A broken link yields false.
bool verify_ancestry(const Hash& descendant, const Hash& ancestor,
                     std::span<const BlockHeader> chain);

enum class TxKind : uint8_t { IntraTransfer, CrossSourceDebit, CrossDestCredit };

// (source block hash, body index) of the debit a cross-shard credit settles.
struct OriginRef {
    Hash source_block{};
    uint32_t tx_index = 0;

    auto operator<=>(const OriginRef&) const = default;
};

struct Transaction {
    TxKind kind = TxKind::IntraTransfer;
    Address from{};
    Address to{};
    uint64_t amount = 0;
    uint64_t nonce = 0;
    std::optional<OriginRef> origin_ref; // CrossDestCredit only
};

struct Block {
    BlockHeader header;
    std::vector<Transaction> body;
};

} // namespace spiral
