#include "spiral/lce.hpp"

#include <algorithm>
#include <cassert>

namespace spiral::lce {

void ShardChainState::init_genesis(const BlockHeader& g) {
    Hash h = content_hash(g);
    genesis = h;
    genesis_height = g.height;
    latest_finalized = h;
    latest_finalized_height = g.height;
    BlockEntry e;
    e.header = g;
    e.status = BlockStatus::Finalized;
    e.endorse_anchor = epoch_genesis_sentinel();
    e.insert_seq = next_seq++;
    blocks.emplace(h, std::move(e));
}

void ShardChainState::insert_prepared(const BlockHeader& h) {
    Hash id = content_hash(h);
    if (blocks.count(id)) return;
    BlockEntry e;
    e.header = h;
    e.status = BlockStatus::Prepared;
    if (!h.endorsement_list.empty()) {
        e.endorse_anchor = h.endorsement_list.back();
    } else {
        auto p = blocks.find(h.parent);
        e.endorse_anchor = (p != blocks.end() && p->second.header.epoch == h.epoch)
                               ? p->second.endorse_anchor
                               : epoch_genesis_sentinel();
    }
    e.insert_seq = next_seq++;
    blocks.emplace(id, std::move(e));
    children[h.parent].insert(id);
    prepared_tips.insert(id);
    prepared_tips.erase(h.parent);
}

const BlockEntry* ShardChainState::find(const Hash& h) const {
    auto it = blocks.find(h);
    return it == blocks.end() ? nullptr : &it->second;
}

std::optional<Height> ShardChainState::height_of(const Hash& h) const {
    const BlockEntry* e = find(h);
    if (!e) return std::nullopt;
    return e->header.height;
}

bool ShardChainState::is_ancestor(const Hash& ancestor, const Hash& descendant) const {
    const BlockEntry* anc = find(ancestor);
    if (!anc) return false;
    Hash cur = descendant;
    while (true) {
        if (cur == ancestor) return true;
        const BlockEntry* e = find(cur);
        if (!e || e->header.height <= anc->header.height) return false;
        cur = e->header.parent;
    }
}

Hash ShardChainState::best_tip() const {
    Hash best{};
    Height best_height = 0;
    uint64_t best_seq = 0;
    bool found = false;
    for (const auto& h : prepared_tips) {
        const BlockEntry* e = find(h);
        if (!e || e->status == BlockStatus::Discarded) continue;
        if (!found || e->header.height > best_height ||
            (e->header.height == best_height && e->insert_seq < best_seq)) {
            best = h;
            best_height = e->header.height;
            best_seq = e->insert_seq;
            found = true;
        }
    }
    return found ? best : latest_finalized;
}

bool ShardChainState::inbox_add(const Hash& h, Tick arrival) {
    if (!inbox_seen.insert(h).second) return false;
    predecessor_inbox.push_back({h, arrival});
    return true;
}

Hash lineage_anchor(const ShardChainState& st, const Hash& parent, Epoch epoch) {
    const BlockEntry* p = st.find(parent);
    if (!p || p->header.epoch != epoch) return epoch_genesis_sentinel();
    return p->endorse_anchor;
}

namespace {

// Same-branch forward test against the predecessor chain: target equals the
// anchor or descends from it.
bool on_anchor_branch(const ShardChainState& pred, const Hash& anchor, const Hash& target) {
    if (anchor == epoch_genesis_sentinel()) return true;
    return pred.is_ancestor(anchor, target);
}

bool list_entries_known(const BlockHeader& h, const GroupContext& ctx) {
    for (const auto& e : h.endorsement_list)
        if (!ctx.header_of(e)) return false;
    return true;
}

} // namespace

Hash endorsement_target(const ShardChainState& st, const Hash& parent, Epoch epoch,
                        const GroupContext& ctx, Tick max_arrival) {
    Hash anchor = lineage_anchor(st, parent, epoch);
    const ShardChainState* pred = ctx.shard_state(ctx.layout.predecessor(st.shard));
    if (!pred) return anchor;

    Hash best = anchor;
    bool have = false;
    Height best_height = 0;
    for (const auto& entry : st.predecessor_inbox) { // arrival order: first received wins ties
        if (entry.arrival > max_arrival) continue;
        const BlockEntry* e = pred->find(entry.hash);
        if (!e || e->status == BlockStatus::Discarded) continue;
        if (e->header.epoch != epoch) continue;
        if (!on_anchor_branch(*pred, anchor, entry.hash)) continue;
        if (!list_entries_known(e->header, ctx)) continue; // endorse only verifiable chains
        if (!have || e->header.height > best_height) {
            best = entry.hash;
            best_height = e->header.height;
            have = true;
        }
    }
    return best;
}

std::vector<Hash> extend_endorsement_list(const BlockHeader& endorsed, uint32_t group_size) {
    std::vector<Hash> list = endorsed.endorsement_list;
    list.push_back(content_hash(endorsed));
    size_t cap = group_size == 0 ? 0 : size_t(group_size) - 1;
    if (list.size() > cap) list.erase(list.begin(), list.end() - cap);
    return list;
}

const char* to_string(EndorseFault f) {
    switch (f) {
    case EndorseFault::None: return "ok";
    case EndorseFault::NotPrepared: return "not_prepared";
    case EndorseFault::CrossEpochEndorsement: return "cross_epoch_endorsement";
    case EndorseFault::ConflictingEndorsement: return "conflicting_endorsement";
    case EndorseFault::MalformedList: return "malformed_list";
    }
    return "?";
}

EndorseFault validate_endorsement(const BlockHeader& candidate, const Hash& parent,
                                  const GroupContext& ctx) {
    const ShardChainState* own = ctx.shard_state(candidate.shard);
    const ShardChainState* pred = ctx.shard_state(ctx.layout.predecessor(candidate.shard));
    if (!own || !pred) return EndorseFault::MalformedList;

    Hash anchor = lineage_anchor(*own, parent, candidate.epoch);

    if (candidate.endorsement_list.empty()) {
        // Legal only while the lineage has endorsed nothing this epoch.
        return anchor == epoch_genesis_sentinel() ? EndorseFault::None
                                                  : EndorseFault::MalformedList;
    }

    Hash target = candidate.endorsement_list.back();
    const BlockEntry* e = pred->find(target);
    if (!e || e->status == BlockStatus::Discarded) return EndorseFault::NotPrepared;
    if (e->header.epoch != candidate.epoch) return EndorseFault::CrossEpochEndorsement;
    if (!on_anchor_branch(*pred, anchor, target)) return EndorseFault::ConflictingEndorsement;
    if (candidate.endorsement_list != extend_endorsement_list(e->header, ctx.group_size))
        return EndorseFault::MalformedList;
    return EndorseFault::None;
}

namespace {

// Marks `target` and its unfinalized ancestors finalized, discards every
// conflicting prepared block, and fills in the event.
void finalize_in_shard(ShardChainState& owner, const Hash& target, FinalizationEvent& ev) {
    // Ancestor-first chain from the old finalized head to the target.
    std::vector<Hash> chain;
    Hash cur = target;
    while (cur != owner.latest_finalized) {
        auto it = owner.blocks.find(cur);
        assert(it != owner.blocks.end());
        chain.push_back(cur);
        cur = it->second.header.parent;
    }
    std::reverse(chain.begin(), chain.end());

    for (const auto& h : chain) {
        auto& entry = owner.blocks.at(h);
        assert(entry.status == BlockStatus::Prepared);
        entry.status = BlockStatus::Finalized;
        owner.prepared_tips.erase(h);
    }
    owner.latest_finalized = target;
    owner.latest_finalized_height = owner.blocks.at(target).header.height;

    // A prepared block conflicts unless it sits on the finalized path or
    // descends from the new head.
    for (auto& [h, entry] : owner.blocks) {
        if (entry.status != BlockStatus::Prepared) continue;
        if (owner.is_ancestor(h, target) || owner.is_ancestor(target, h)) continue;
        entry.status = BlockStatus::Discarded;
        owner.prepared_tips.erase(h);
        ev.discarded.insert(h);
    }

    ev.finalized = std::move(chain);
}

} // namespace

std::optional<FinalizationEvent> on_header_prepared(const BlockHeader& h, GroupContext& ctx) {
    Hash target{};
    ShardId owner_shard = 0;

    if (ctx.group_size == 1) {
        // A group of one shard: preparation is the full endorsement.
        target = content_hash(h);
        owner_shard = h.shard;
    } else {
        if (h.endorsement_list.size() != size_t(ctx.group_size) - 1) return std::nullopt;
        // Verify the recorded chain link by link and its epoch purity.
        const std::vector<Hash>& list = h.endorsement_list;
        for (size_t i = 0; i < list.size(); ++i) {
            const BlockHeader* e = ctx.header_of(list[i]);
            if (!e || e->epoch != h.epoch) return std::nullopt;
            if (i > 0 && (e->endorsement_list.empty() || e->endorsement_list.back() != list[i - 1]))
                return std::nullopt;
        }
        target = list.front();
        owner_shard = ctx.layout.successor(h.shard);
    }

    ShardChainState* owner = ctx.shard_state(owner_shard);
    if (!owner) return std::nullopt;
    const BlockEntry* t = owner->find(target);
    if (!t || t->header.shard != owner_shard) return std::nullopt;
    if (t->status == BlockStatus::Finalized) return std::nullopt; // already done
    if (t->status == BlockStatus::Discarded) {
        FinalizationEvent ev;
        ev.witness = h;
        ev.conflict_with_finalized = true; // surfaced to the safety audit
        return ev;
    }

    FinalizationEvent ev;
    ev.witness = h;
    finalize_in_shard(*owner, target, ev);
    return ev;
}

std::vector<std::pair<NodeId, ShardId>> route_header(const BlockHeader& h, uint32_t shard_size,
                                                     const GroupLayout& layout) {
    std::vector<std::pair<NodeId, ShardId>> out;
    if (h.quorum_cert.size() < quorum_size(shard_size)) return out; // not prepared
    ShardId dest = layout.successor(h.shard);
    out.reserve(h.quorum_cert.size());
    for (NodeId v : h.quorum_cert) out.emplace_back(v, dest);
    return out;
}

void epoch_boundary_reset(ShardChainState& st) {
    st.predecessor_inbox.clear();
    st.inbox_seen.clear();
}

} // namespace spiral::lce
