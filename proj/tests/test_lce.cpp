#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "spiral/lce.hpp"

using namespace spiral;
using namespace spiral::lce;

namespace {

// Three shards forming one endorsement group, with hand-driven headers.
struct GroupFixture {
    uint32_t group_size;
    std::map<Hash, BlockHeader> headers;
    std::map<ShardId, ShardChainState> shards;
    GroupContext ctx;

    explicit GroupFixture(uint32_t g = 3, uint32_t num_shards = 3) : group_size(g) {
        ctx.group_size = g;
        ctx.layout = GroupLayout{g};
        ctx.headers = &headers;
        ctx.shards = &shards;
        for (ShardId s = 0; s < num_shards; ++s) {
            BlockHeader genesis;
            genesis.shard = s;
            genesis.height = 0;
            shards[s].shard = s;
            shards[s].init_genesis(genesis);
            headers.emplace(content_hash(genesis), genesis);
        }
    }

    uint64_t body_seq = 0;

    BlockHeader make(ShardId shard, const Hash& parent, Epoch epoch,
                     std::vector<Hash> list = {}) {
        BlockHeader h;
        h.shard = shard;
        h.epoch = epoch;
        h.height = *shards[shard].height_of(parent) + 1;
        h.parent = parent;
        h.tx_root = sha256("body-" + std::to_string(body_seq++)); // distinct payloads
        h.endorsement_list = std::move(list);
        return h;
    }

    // Builds a header endorsing `target` (or nothing) and inserts it prepared.
    Hash prepare(ShardId shard, const Hash& parent, Epoch epoch,
                 std::optional<Hash> target = std::nullopt,
                 std::optional<FinalizationEvent>* ev_out = nullptr) {
        std::vector<Hash> list;
        if (target) list = extend_endorsement_list(headers.at(*target), group_size);
        BlockHeader h = make(shard, parent, epoch, list);
        Hash id = content_hash(h);
        headers.emplace(id, h);
        shards[shard].insert_prepared(h);
        auto ev = on_header_prepared(h, ctx);
        if (ev_out) *ev_out = ev;
        return id;
    }

    Hash genesis_of(ShardId s) const {
        for (const auto& [h, e] : shards.at(s).blocks)
            if (e.header.height == 0) return h;
        return Hash{};
    }

    BlockStatus status(ShardId s, const Hash& h) const { return shards.at(s).find(h)->status; }
};

} // namespace

TEST_CASE("extend_endorsement_list appends and caps at G-1") {
    BlockHeader a;
    a.shard = 0;
    Hash ha = content_hash(a);

    BlockHeader b;
    b.shard = 1;
    b.endorsement_list = {ha};
    Hash hb = content_hash(b);

    CHECK(extend_endorsement_list(a, 3) == std::vector<Hash>{ha});
    CHECK(extend_endorsement_list(b, 3) == std::vector<Hash>{ha, hb});

    BlockHeader c;
    c.shard = 2;
    c.endorsement_list = {ha, hb};
    Hash hc = content_hash(c);
    CHECK(extend_endorsement_list(c, 3) == std::vector<Hash>{hb, hc}); // oldest dropped

    CHECK(extend_endorsement_list(c, 1).empty()); // degenerate group
}

TEST_CASE("fork elimination: the endorsed sibling wins") {
    GroupFixture fx;
    Hash g0 = fx.genesis_of(0);

    Hash a1 = fx.prepare(0, g0, 0);
    Hash a2p = fx.prepare(0, a1, 0);  // A2'
    Hash a2pp = fx.prepare(0, a1, 0); // A2'' — same parent, fork
    CHECK(a2p != a2pp);
    CHECK(fx.status(0, a2p) == BlockStatus::Prepared);
    CHECK(fx.status(0, a2pp) == BlockStatus::Prepared);

    Hash g1 = fx.genesis_of(1);
    Hash b3 = fx.prepare(1, g1, 0, a2p);
    CHECK(fx.status(0, a2p) == BlockStatus::Prepared); // one endorsement is not enough

    std::optional<FinalizationEvent> ev;
    Hash g2 = fx.genesis_of(2);
    fx.prepare(2, g2, 0, b3, &ev);

    REQUIRE(ev.has_value());
    CHECK_FALSE(ev->conflict_with_finalized);
    CHECK(ev->finalized == std::vector<Hash>{a1, a2p});
    CHECK(ev->discarded == std::set<Hash>{a2pp});
    CHECK(fx.status(0, a2p) == BlockStatus::Finalized);
    CHECK(fx.status(0, a2pp) == BlockStatus::Discarded);
    CHECK(fx.status(0, a1) == BlockStatus::Finalized);
    CHECK(fx.shards[0].latest_finalized == a2p);
}

TEST_CASE("pipelining: one witness finalizes the whole parent chain") {
    GroupFixture fx;
    Hash g0 = fx.genesis_of(0);

    // Shard 0 runs ahead: A1, A2, A3 prepared without endorsement.
    Hash a1 = fx.prepare(0, g0, 0);
    Hash a2 = fx.prepare(0, a1, 0);
    Hash a3 = fx.prepare(0, a2, 0);

    // B2 endorses the latest block A3; C5 endorses B2.
    Hash b2 = fx.prepare(1, fx.genesis_of(1), 0, a3);
    std::optional<FinalizationEvent> ev;
    fx.prepare(2, fx.genesis_of(2), 0, b2, &ev);

    REQUIRE(ev.has_value());
    CHECK(ev->finalized == std::vector<Hash>{a1, a2, a3}); // single batch, ancestor-first
    CHECK(ev->discarded.empty());
    CHECK(fx.status(0, a1) == BlockStatus::Finalized);
    CHECK(fx.status(0, a3) == BlockStatus::Finalized);
}

TEST_CASE("endorsement lists crossing an epoch boundary never finalize") {
    GroupFixture fx;
    Hash a1 = fx.prepare(0, fx.genesis_of(0), 0);
    Hash b1 = fx.prepare(1, fx.genesis_of(1), 0, a1);

    // The completing endorsement lands in epoch 1: witness carries an
    // epoch-0 list.
    BlockHeader witness = fx.make(2, fx.genesis_of(2), 1,
                                  extend_endorsement_list(fx.headers.at(b1), 3));
    Hash wid = content_hash(witness);
    fx.headers.emplace(wid, witness);
    fx.shards[2].insert_prepared(witness);
    auto ev = on_header_prepared(witness, fx.ctx);

    CHECK_FALSE(ev.has_value());
    CHECK(fx.status(0, a1) == BlockStatus::Prepared); // stays endorsable
}

TEST_CASE("epoch boundary: fresh endorsements finalize the stalled block") {
    GroupFixture fx;
    Hash a1 = fx.prepare(0, fx.genesis_of(0), 0);
    fx.prepare(1, fx.genesis_of(1), 0, a1); // endorsement progress, now void

    for (auto& [s, st] : fx.shards) epoch_boundary_reset(st);

    // Epoch 1 re-runs the spiral from scratch over A1's descendant A2.
    Hash a2 = fx.prepare(0, a1, 1);
    Hash b1 = fx.prepare(1, fx.genesis_of(1), 1, a2);
    std::optional<FinalizationEvent> ev;
    fx.prepare(2, fx.genesis_of(2), 1, b1, &ev);

    REQUIRE(ev.has_value());
    CHECK(ev->finalized == std::vector<Hash>{a1, a2});
    CHECK(fx.status(0, a1) == BlockStatus::Finalized);
}

TEST_CASE("first block of an epoch carries an empty endorsement list") {
    GroupFixture fx;
    Hash a1 = fx.prepare(0, fx.genesis_of(0), 0);
    // No epoch-1 block from the predecessor yet: target is the sentinel.
    Hash t = endorsement_target(fx.shards[0], a1, 1, fx.ctx);
    CHECK(t == epoch_genesis_sentinel());

    // An empty list is well-formed there and only there.
    BlockHeader c = fx.make(0, a1, 1, {});
    CHECK(validate_endorsement(c, a1, fx.ctx) == EndorseFault::None);
}

TEST_CASE("endorsement target: first received wins among equal-height forks") {
    GroupFixture fx;
    ShardId w = 1; // its predecessor is shard 0
    Hash g0 = fx.genesis_of(0);
    Hash a1 = fx.prepare(0, g0, 0);
    Hash a2p = fx.prepare(0, a1, 0);
    Hash a2pp = fx.prepare(0, a1, 0);

    auto& st = fx.shards[w];
    Hash parent = fx.genesis_of(1);

    SUBCASE("A2' arrives first") {
        st.inbox_add(a2p);
        st.inbox_add(a2pp);
        CHECK(endorsement_target(st, parent, 0, fx.ctx) == a2p);
    }
    SUBCASE("A2'' arrives first") {
        st.inbox_add(a2pp);
        st.inbox_add(a2p);
        CHECK(endorsement_target(st, parent, 0, fx.ctx) == a2pp);
    }
    SUBCASE("the latest block on the endorsed branch wins over stale ones") {
        Hash a3 = fx.prepare(0, a2p, 0);
        st.inbox_add(a2p);
        st.inbox_add(a3);
        CHECK(endorsement_target(st, parent, 0, fx.ctx) == a3);
    }
}

TEST_CASE("endorsement target never jumps branches") {
    GroupFixture fx;
    Hash a1 = fx.prepare(0, fx.genesis_of(0), 0);
    Hash a2p = fx.prepare(0, a1, 0);
    Hash a2pp = fx.prepare(0, a1, 0);

    auto& st = fx.shards[1];
    st.inbox_add(a2p);
    st.inbox_add(a2pp);
    Hash parent = fx.prepare(1, fx.genesis_of(1), 0, a2p); // lineage endorsed A2'

    // Only a conflicting sibling is on offer beyond the anchor: re-endorse.
    CHECK(endorsement_target(st, parent, 0, fx.ctx) == a2p);

    // A child of the anchor is eligible.
    Hash a3 = fx.prepare(0, a2p, 0);
    st.inbox_add(a3);
    CHECK(endorsement_target(st, parent, 0, fx.ctx) == a3);
}

TEST_CASE("validate_endorsement faults") {
    GroupFixture fx;
    Hash a1 = fx.prepare(0, fx.genesis_of(0), 0);
    Hash a2p = fx.prepare(0, a1, 0);
    Hash a2pp = fx.prepare(0, a1, 0);
    Hash b_parent = fx.prepare(1, fx.genesis_of(1), 0, a1); // lineage anchor: A1

    auto candidate_for = [&](const Hash& target) {
        return fx.make(1, b_parent, 0,
                       extend_endorsement_list(fx.headers.at(target), fx.group_size));
    };

    // Children of the anchor are endorsable either way.
    CHECK(validate_endorsement(candidate_for(a2p), b_parent, fx.ctx) == EndorseFault::None);
    CHECK(validate_endorsement(candidate_for(a2pp), b_parent, fx.ctx) == EndorseFault::None);

    // After the lineage commits to A2', its sibling conflicts.
    Hash b2 = fx.prepare(1, b_parent, 0, a2p);
    CHECK(validate_endorsement(candidate_for(a2pp), b2, fx.ctx) ==
          EndorseFault::ConflictingEndorsement);

    // Re-endorsing the anchor itself is the stall-tolerant path.
    CHECK(validate_endorsement(candidate_for(a2p), b2, fx.ctx) == EndorseFault::None);

    // A backward (stale) endorsement walks away from the lineage decision.
    CHECK(validate_endorsement(candidate_for(a1), b2, fx.ctx) ==
          EndorseFault::ConflictingEndorsement);

    // Unknown target.
    BlockHeader ghost = fx.make(1, b2, 0, {sha256(std::string("nothing"))});
    CHECK(validate_endorsement(ghost, b2, fx.ctx) == EndorseFault::NotPrepared);

    // Wrong epoch on the target.
    BlockHeader cross = candidate_for(a2p);
    cross.epoch = 1;
    CHECK(validate_endorsement(cross, b2, fx.ctx) == EndorseFault::CrossEpochEndorsement);

    // Structurally wrong list over a legal target.
    BlockHeader malformed = fx.make(1, b2, 0, {a1, a2p}); // extend() would give {a2p}
    CHECK(validate_endorsement(malformed, b2, fx.ctx) == EndorseFault::MalformedList);

    // Empty list once the lineage has endorsed.
    BlockHeader withheld = fx.make(1, b2, 0, {});
    CHECK(validate_endorsement(withheld, b2, fx.ctx) == EndorseFault::MalformedList);
}

TEST_CASE("witness replay reproduces every endorsement list byte for byte") {
    GroupFixture fx;
    Hash a1 = fx.prepare(0, fx.genesis_of(0), 0);
    Hash b1 = fx.prepare(1, fx.genesis_of(1), 0, a1);
    std::optional<FinalizationEvent> ev;
    fx.prepare(2, fx.genesis_of(2), 0, b1, &ev);
    REQUIRE(ev.has_value());

    // Walk backwards from the witness through the endorsement chain.
    const BlockHeader* cur = &ev->witness;
    while (!cur->endorsement_list.empty()) {
        const BlockHeader& endorsed = fx.headers.at(cur->endorsement_list.back());
        CHECK(cur->endorsement_list ==
              extend_endorsement_list(endorsed, fx.group_size));
        cur = &endorsed;
    }
}

TEST_CASE("a group of one self-finalizes on preparation") {
    GroupFixture fx(1, 1);
    std::optional<FinalizationEvent> ev;
    Hash a1 = fx.prepare(0, fx.genesis_of(0), 0, std::nullopt, &ev);
    REQUIRE(ev.has_value());
    CHECK(ev->finalized == std::vector<Hash>{a1});
    CHECK(fx.status(0, a1) == BlockStatus::Finalized);
}

TEST_CASE("route_header fans out to every voter toward the successor") {
    BlockHeader h;
    h.shard = 5; // group {3,4,5} under G=3
    h.quorum_cert = {1, 2, 3, 4, 5, 6, 7};
    GroupLayout layout{3};

    auto routes = route_header(h, 10, layout);
    CHECK(routes.size() == 7);
    for (auto [sender, dest] : routes) CHECK(dest == 3); // wrap-around

    h.quorum_cert = {1, 2, 3}; // below quorum: not prepared, no routing
    CHECK(route_header(h, 10, layout).empty());
}

TEST_CASE("discard soundness: exactly the blocks conflicting with finality") {
    GroupFixture fx;
    Hash a1 = fx.prepare(0, fx.genesis_of(0), 0);
    Hash a2p = fx.prepare(0, a1, 0);
    Hash a2pp = fx.prepare(0, a1, 0);
    Hash a3pp = fx.prepare(0, a2pp, 0); // descendant of the losing sibling
    Hash a3p = fx.prepare(0, a2p, 0);   // descendant of the winner

    Hash b1 = fx.prepare(1, fx.genesis_of(1), 0, a2p);
    std::optional<FinalizationEvent> ev;
    fx.prepare(2, fx.genesis_of(2), 0, b1, &ev);
    REQUIRE(ev.has_value());

    CHECK(ev->discarded == std::set<Hash>{a2pp, a3pp});
    CHECK(fx.status(0, a3p) == BlockStatus::Prepared); // extends the finalized head
    for (const auto& [h, e] : fx.shards[0].blocks) {
        if (e.status == BlockStatus::Discarded) {
            bool conflicts = !fx.shards[0].is_ancestor(h, a2p) &&
                             !fx.shards[0].is_ancestor(a2p, h);
            CHECK(conflicts);
        }
    }
}

TEST_CASE("terminal statuses never revert") {
    GroupFixture fx;
    Hash a1 = fx.prepare(0, fx.genesis_of(0), 0);
    Hash b1 = fx.prepare(1, fx.genesis_of(1), 0, a1);
    std::optional<FinalizationEvent> ev;
    Hash c1 = fx.prepare(2, fx.genesis_of(2), 0, b1, &ev);
    REQUIRE(ev.has_value());
    CHECK(fx.status(0, a1) == BlockStatus::Finalized);

    // Re-delivering the witness is idempotent.
    auto again = on_header_prepared(fx.headers.at(c1), fx.ctx);
    CHECK_FALSE(again.has_value());
    CHECK(fx.status(0, a1) == BlockStatus::Finalized);
}
