#include "spiral/consensus.hpp"

#include <algorithm>

namespace spiral::consensus {

const char* to_string(Role r) {
    switch (r) {
    case Role::Honest: return "honest";
    case Role::Byzantine: return "byzantine";
    case Role::AliveButCorrupt: return "abc";
    }
    return "?";
}

bool ShardConsensusState::is_member(NodeId n) const {
    return std::find(members.begin(), members.end(), n) != members.end();
}

uint32_t member_vote_count(const std::set<NodeId>& votes, const ShardConsensusState& st) {
    uint32_t count = 0;
    for (NodeId v : votes)
        if (st.is_member(v)) ++count;
    return count;
}

TallyResult tally(const std::set<NodeId>& votes, const ShardConsensusState& st) {
    return member_vote_count(votes, st) >= quorum_size(uint32_t(st.members.size()))
               ? TallyResult::Prepared
               : TallyResult::Pending;
}

const char* to_string(ValidationFault f) {
    switch (f) {
    case ValidationFault::None: return "ok";
    case ValidationFault::UnknownParent: return "unknown_parent";
    case ValidationFault::DiscardedParent: return "discarded_parent";
    case ValidationFault::BadHeight: return "bad_height";
    case ValidationFault::InvalidTx: return "invalid_tx";
    case ValidationFault::ConflictingEndorsement: return "conflicting_endorsement";
    case ValidationFault::CrossEpochEndorsement: return "cross_epoch_endorsement";
    case ValidationFault::NotPrepared: return "not_prepared";
    case ValidationFault::MalformedList: return "malformed_list";
    }
    return "?";
}

ValidationFault from_endorse_fault(lce::EndorseFault f) {
    switch (f) {
    case lce::EndorseFault::None: return ValidationFault::None;
    case lce::EndorseFault::NotPrepared: return ValidationFault::NotPrepared;
    case lce::EndorseFault::CrossEpochEndorsement: return ValidationFault::CrossEpochEndorsement;
    case lce::EndorseFault::ConflictingEndorsement:
        return ValidationFault::ConflictingEndorsement;
    case lce::EndorseFault::MalformedList: return ValidationFault::MalformedList;
    }
    return ValidationFault::MalformedList;
}

ValidationFault validate_candidate(const lce::ShardChainState& chain, const lce::GroupContext& ctx,
                                   const ShardLedger& ledger, Epoch current_epoch,
                                   const Block& candidate,
                                   const std::function<bool(const Transaction&)>& credit_ok) {
    const BlockHeader& h = candidate.header;
    const lce::BlockEntry* parent = chain.find(h.parent);
    if (!parent) return ValidationFault::UnknownParent;
    if (parent->status == BlockStatus::Discarded) return ValidationFault::DiscardedParent;
    if (h.height != parent->header.height + 1) return ValidationFault::BadHeight;
    if (h.epoch != current_epoch || h.epoch < parent->header.epoch)
        return ValidationFault::BadHeight;

    if (h.tx_root != merkle_root(candidate.body)) return ValidationFault::InvalidTx;
    StateView pre = ledger.view_at(h.parent);
    AccountMap writes;
    for (const auto& tx : candidate.body) {
        bool allowed = tx.kind == TxKind::CrossDestCredit && credit_ok && credit_ok(tx);
        if (!apply_tx(pre, tx, writes, allowed)) return ValidationFault::InvalidTx;
    }

    return from_endorse_fault(lce::validate_endorsement(h, h.parent, ctx));
}

VoteDecision cast_vote(const NodePolicy& policy, ValidationFault fault, bool conflicting_lock) {
    switch (policy.role) {
    case Role::Byzantine:
        return policy.byz_behavior == ByzBehavior::Silent ? VoteDecision::Abstain
                                                          : VoteDecision::Vote;
    case Role::Honest:
        if (fault != ValidationFault::None || conflicting_lock) return VoteDecision::Abstain;
        return VoteDecision::Vote;
    case Role::AliveButCorrupt:
        // Attacks safety via conflicting branches, never via invalid blocks.
        return fault == ValidationFault::None ? VoteDecision::Vote : VoteDecision::Abstain;
    }
    return VoteDecision::Abstain;
}

bool trigger_view_change(ShardConsensusState& st, uint32_t live_members, Tick now,
                         Tick vc_timeout) {
    st.vc_deadline = now + vc_timeout;
    if (live_members < quorum_size(uint32_t(st.members.size()))) return false;
    st.view += 1;
    return true;
}

} // namespace spiral::consensus
