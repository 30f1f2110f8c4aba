#pragma once

#include <functional>
#include <map>
#include <set>
#include <vector>

#include "spiral/core.hpp"
#include "spiral/lce.hpp"
#include "spiral/ledger.hpp"

namespace spiral::consensus {

enum class Role : uint8_t { Honest, Byzantine, AliveButCorrupt };

enum class ByzBehavior : uint8_t { Silent, Equivocate, WithholdEndorsement };

const char* to_string(Role r);

// Behavior profile of one simulated node; roles are fixed within an epoch.
struct NodePolicy {
    Role role = Role::Honest;
    ByzBehavior byz_behavior = ByzBehavior::Equivocate; // Byzantine only
    uint32_t equivocate_branches = 2;

    bool is_malicious() const { return role != Role::Honest; }
    bool preserves_liveness() const { return role != Role::Byzantine; }
};

// Per-shard, per-epoch consensus bookkeeping.
struct ShardConsensusState {
    ShardId shard = 0;
    Epoch epoch = 0;
    std::vector<NodeId> members; // leader = members[view % S]
    ViewNumber view = 0;
    std::map<Hash, std::set<NodeId>> pending_votes;
    Tick vc_deadline = 0;
    Height armed_height = 0; // progress marker when the timer was armed

    NodeId leader() const { return members[view % members.size()]; }
    bool is_member(NodeId n) const;
};

enum class TallyResult : uint8_t { Prepared, Pending };

// 2/3 quorum over distinct shard members; outsiders and duplicates do not
// count.
TallyResult tally(const std::set<NodeId>& votes, const ShardConsensusState& st);
uint32_t member_vote_count(const std::set<NodeId>& votes, const ShardConsensusState& st);

enum class ValidationFault : uint8_t {
    None,
    UnknownParent,
    DiscardedParent,
    BadHeight,
    InvalidTx,
    ConflictingEndorsement,
    CrossEpochEndorsement,
    NotPrepared,
    MalformedList,
};

const char* to_string(ValidationFault f);

inline bool endorsement_fault(ValidationFault f) {
    return f == ValidationFault::ConflictingEndorsement ||
           f == ValidationFault::CrossEpochEndorsement || f == ValidationFault::NotPrepared ||
           f == ValidationFault::MalformedList;
}

ValidationFault from_endorse_fault(lce::EndorseFault f);

// Full candidate check in spec order: parentage, height/epoch, transaction
// replay against the parent overlay, endorsement fields. `credit_ok` vouches
// for cross-shard credits (relay-verified by the caller).
ValidationFault validate_candidate(const lce::ShardChainState& chain, const lce::GroupContext& ctx,
                                   const ShardLedger& ledger, Epoch current_epoch,
                                   const Block& candidate,
                                   const std::function<bool(const Transaction&)>& credit_ok);

enum class VoteDecision : uint8_t { Vote, Abstain };

// Role-dependent voting. `fault` is the validation outcome for the candidate;
// `conflicting_lock` tells whether this honest node already voted for a
// different block at the same height.
VoteDecision cast_vote(const NodePolicy& policy, ValidationFault fault, bool conflicting_lock);

enum class ViewChangeReason : uint8_t { Timeout, InvalidEndorsement };

// Rotates the leader when enough live (honest + a-b-c) members participate;
// otherwise leaves the view untouched. Returns true on rotation.
bool trigger_view_change(ShardConsensusState& st, uint32_t live_members, Tick now,
                         Tick vc_timeout);

} // namespace spiral::consensus
