#pragma once

#include <map>
#include <optional>
#include <set>
#include <vector>

#include "spiral/core.hpp"

namespace spiral::lce {

struct BlockEntry {
    BlockHeader header;
    BlockStatus status = BlockStatus::Prepared;
    // Last predecessor-shard block this block's lineage endorsed within its
    // epoch; the epoch-genesis sentinel before the first endorsement.
    Hash endorse_anchor{};
    uint64_t insert_seq = 0;
};

// One shard's block tree plus the endorsement inbox fed by its predecessor.
struct ShardChainState {
    ShardId shard = 0;
    Hash genesis{};
    Height genesis_height = 0;
    std::map<Hash, BlockEntry> blocks;
    std::map<Hash, std::set<Hash>> children;
    Hash latest_finalized{};
    Height latest_finalized_height = 0;
    std::set<Hash> prepared_tips;
    struct InboxEntry {
        Hash hash{};
        Tick arrival = 0;
    };
    std::vector<InboxEntry> predecessor_inbox; // arrival order
    std::set<Hash> inbox_seen;
    uint64_t next_seq = 0;

    void init_genesis(const BlockHeader& g);

    // Records a header that passed intra-shard consensus.
    void insert_prepared(const BlockHeader& h);

    const BlockEntry* find(const Hash& h) const;
    bool known(const Hash& h) const { return blocks.count(h) != 0; }

    // Height of a block, genesis included.
    std::optional<Height> height_of(const Hash& h) const;

    // True iff `ancestor` is on `descendant`'s parent chain (or equal).
    bool is_ancestor(const Hash& ancestor, const Hash& descendant) const;

    // Highest non-discarded leaf; ties break toward the earliest inserted.
    Hash best_tip() const;

    // Arrival-ordered inbox insert, deduplicated.
    bool inbox_add(const Hash& h, Tick arrival = 0);
};

// Read access to every chain of one endorsement group plus the header store.
struct GroupContext {
    uint32_t group_size = 1;
    GroupLayout layout{};
    const std::map<Hash, BlockHeader>* headers = nullptr;
    std::map<ShardId, ShardChainState>* shards = nullptr;

    const BlockHeader* header_of(const Hash& h) const {
        auto it = headers->find(h);
        return it == headers->end() ? nullptr : &it->second;
    }
    ShardChainState* shard_state(ShardId s) const {
        auto it = shards->find(s);
        return it == shards->end() ? nullptr : &it->second;
    }
};

struct FinalizationEvent {
    std::vector<Hash> finalized; // ancestor-first, ends at the directly finalized block
    std::set<Hash> discarded;
    BlockHeader witness;
    // Set instead of finalizing when a complete endorsement chain points at an
    // already-discarded block; the caller's safety audit records it.
    bool conflict_with_finalized = false;
};

// The anchor a child of `parent` inherits at `epoch` (the sentinel right
// after an epoch boundary).
Hash lineage_anchor(const ShardChainState& st, const Hash& parent, Epoch epoch);

// Picks the endorsement target for a new candidate: the highest prepared
// inbox entry of the current epoch on the anchor's branch, first received
// winning ties; falls back to re-endorsing the anchor. `max_arrival`
// restricts the choice to entries received by that tick (voters use it to
// tell a withheld endorsement from one that merely raced a fresh header).
Hash endorsement_target(const ShardChainState& st, const Hash& parent, Epoch epoch,
                        const GroupContext& ctx,
                        Tick max_arrival = ~Tick(0));

// endorsed.list ++ [hash(endorsed)], keeping the newest G-1 entries.
std::vector<Hash> extend_endorsement_list(const BlockHeader& endorsed, uint32_t group_size);

enum class EndorseFault : uint8_t {
    None,
    NotPrepared,
    CrossEpochEndorsement,
    ConflictingEndorsement,
    MalformedList,
};

const char* to_string(EndorseFault f);

// Checks a candidate's endorsement fields against its parent's lineage and
// the predecessor chain.
EndorseFault validate_endorsement(const BlockHeader& candidate, const Hash& parent,
                                  const GroupContext& ctx);

// Finalization hook, called right after `h` is inserted as prepared. Returns
// the event when `h` completes an endorsement chain.
std::optional<FinalizationEvent> on_header_prepared(const BlockHeader& h, GroupContext& ctx);

// Every voter of a prepared header forwards it to the successor shard.
std::vector<std::pair<NodeId, ShardId>> route_header(const BlockHeader& h, uint32_t shard_size,
                                                     const GroupLayout& layout);

// Epoch boundary: prepared blocks survive, endorsement progress does not.
void epoch_boundary_reset(ShardChainState& st);

} // namespace spiral::lce
