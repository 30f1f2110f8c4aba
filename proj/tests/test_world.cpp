#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "spiral/replay.hpp"
#include "spiral/world.hpp"

using namespace spiral;
using namespace spiral::sim;

namespace {

ScenarioConfig small_world() {
    ScenarioConfig cfg;
    cfg.network_size = 30;
    cfg.shard_size = 10;
    cfg.group_size = 3;
    cfg.run_ticks = 1200;
    cfg.txs_per_tick = 2.0;
    cfg.cross_shard_ratio = 0.25;
    cfg.block_capacity = 64;
    cfg.seed = 11;
    cfg.window_ticks = 400;
    return cfg;
}

} // namespace

TEST_CASE("honest-only run: monotone finalization, no discards") {
    ScenarioConfig cfg = small_world();
    World w(cfg);
    RunReport rep = w.run();
    CHECK(rep.ok());
    CHECK(rep.blocks_discarded == 0);
    CHECK(rep.blocks_finalized > 50);
    CHECK(rep.txs_confirmed > 500);
    for (auto h : rep.finalized_height) CHECK(h > 20);

    // Finalized statuses form a single chain per shard.
    for (ShardId s = 0; s < cfg.num_shards(); ++s) {
        const auto& chain = w.chain(s);
        for (const auto& [h, e] : chain.blocks)
            if (e.status == BlockStatus::Finalized)
                CHECK(chain.is_ancestor(h, chain.latest_finalized));
    }
}

TEST_CASE("identical seed and config reproduce identical artifacts") {
    ScenarioConfig cfg = small_world();
    cfg.f_abc = 0.1;
    cfg.placement = PlacementMode::RandomBySeed;

    World w1(cfg), w2(cfg);
    RunReport r1 = w1.run(), r2 = w2.run();
    CHECK(r1.to_json() == r2.to_json());
    CHECK(trace_to_csv(w1.trace()) == trace_to_csv(w2.trace()));
    CHECK(metrics_to_csv(w1.metrics()) == metrics_to_csv(w2.metrics()));

    ScenarioConfig other = cfg;
    other.seed = cfg.seed + 1;
    World w3(other);
    CHECK(w3.run().to_json() != r1.to_json());
}

TEST_CASE("equivocating leader forks the shard; exactly one branch survives") {
    ScenarioConfig cfg = small_world();
    cfg.placement = PlacementMode::PinnedToShards;
    cfg.pins.push_back({0, 1, 3});
    cfg.byz_behavior = "equivocate";
    cfg.run_ticks = 1500;
    cfg.txs_per_tick = 3.0;
    cfg.seed = 4;

    World w(cfg);
    RunReport rep = w.run();
    CHECK(rep.ok());
    CHECK(rep.blocks_discarded > 0); // forks appeared and lost

    // Search a finalized/discarded sibling pair under one parent.
    const auto& chain = w.chain(0);
    bool found_pair = false;
    for (const auto& [parent, kids] : chain.children) {
        if (kids.size() < 2) continue;
        int fin = 0, disc = 0;
        for (const auto& k : kids) {
            auto st = chain.find(k)->status;
            fin += st == BlockStatus::Finalized;
            disc += st == BlockStatus::Discarded;
        }
        if (fin == 1 && disc >= 1) found_pair = true;
        CHECK(fin <= 1); // never two finalized siblings
    }
    CHECK(found_pair);

    // Every recorded witness replays to byte-identical endorsement lists.
    for (const auto& rec : w.finalizations()) {
        const BlockHeader* cur = &rec.event.witness;
        while (!cur->endorsement_list.empty()) {
            auto it = w.headers().find(cur->endorsement_list.back());
            REQUIRE(it != w.headers().end());
            CHECK(cur->endorsement_list ==
                  lce::extend_endorsement_list(it->second, cfg.group_size));
            cur = &it->second;
        }
    }
}

TEST_CASE("silent Byzantine leader rotates away; quorum-sized Byzantine stalls") {
    ScenarioConfig cfg = small_world();
    cfg.placement = PlacementMode::PinnedToShards;
    cfg.byz_behavior = "silent";

    SUBCASE("below one third: view change restores progress") {
        cfg.pins.push_back({0, 2, 0});
        World w(cfg);
        RunReport rep = w.run();
        CHECK(rep.ok());
        CHECK(rep.view_changes >= 2);
        CHECK(rep.finalized_height[0] > 10);
    }

    SUBCASE("at ceil(S/3): the shard makes no progress") {
        cfg.pins.push_back({0, 4, 0});
        cfg.check_liveness = false;
        World w(cfg);
        RunReport rep = w.run();
        CHECK(rep.ok());
        CHECK(rep.finalized_height[0] == 0);
        CHECK_FALSE(rep.audit.liveness);
    }
}

TEST_CASE("endorsement withholding triggers view changes, not stalls") {
    ScenarioConfig cfg = small_world();
    cfg.placement = PlacementMode::PinnedToShards;
    cfg.byz_behavior = "withhold_endorsement";
    cfg.pins.push_back({1, 3, 0});
    cfg.run_ticks = 1500;

    World w(cfg);
    RunReport rep = w.run();
    CHECK(rep.ok());
    CHECK(rep.view_changes >= 1);
    for (auto h : rep.finalized_height) CHECK(h > 10);
}

TEST_CASE("cross-shard value is conserved and relays are idempotent") {
    ScenarioConfig cfg = small_world();
    cfg.cross_shard_ratio = 0.5;
    cfg.run_ticks = 1500;
    World w(cfg);
    RunReport rep = w.run();
    CHECK(rep.ok());
    CHECK(rep.audit.conservation);
    CHECK(rep.relays_emitted > 50);
    CHECK(rep.relays_deposited > 0);

    // Adversarial re-delivery cannot double-credit.
    REQUIRE(!w.emitted_relays().empty());
    size_t checked = 0;
    for (const auto& relay : w.emitted_relays()) {
        if (checked++ > 25) break;
        CHECK(w.redeliver_relay(relay) == RelayVerdict::Duplicate);
    }
}

TEST_CASE("epoch transitions keep safety and restart endorsements") {
    ScenarioConfig cfg = small_world();
    cfg.epoch_length_ticks = 400;
    cfg.run_ticks = 1600;
    cfg.check_liveness = false; // sync pauses stall fixed windows
    World w(cfg);
    RunReport rep = w.run();
    CHECK(rep.audit.safety);
    CHECK(rep.audit.conservation);
    CHECK(rep.blocks_finalized > 50);

    // No witness ever mixes epochs with its list entries.
    for (const auto& rec : w.finalizations()) {
        for (const auto& e : rec.event.witness.endorsement_list) {
            auto it = w.headers().find(e);
            REQUIRE(it != w.headers().end());
            CHECK(it->second.epoch == rec.event.witness.epoch);
        }
    }

    // Blocks prepared before a boundary finalize only via fresh same-epoch
    // endorsements afterwards.
    bool cross_epoch_batch = false;
    for (const auto& rec : w.finalizations()) {
        for (const auto& bh : rec.event.finalized) {
            auto it = w.headers().find(bh);
            if (it != w.headers().end() && it->second.epoch < rec.event.witness.epoch)
                cross_epoch_batch = true;
        }
    }
    CHECK(cross_epoch_batch); // ancestor batching across the boundary occurred
}

TEST_CASE("metrics frames report empty latency when nothing finalizes") {
    ScenarioConfig cfg = small_world();
    cfg.run_ticks = 600;
    World w(cfg);
    w.run();
    bool saw_empty = false, saw_value = false;
    for (const auto& row : w.metrics()) {
        if (row.finalized_txs == 0) {
            CHECK_FALSE(row.mean_latency.has_value());
            saw_empty = true;
        } else if (row.mean_latency) {
            saw_value = true;
        }
    }
    CHECK(saw_empty);  // warm-up frames have no finalizations
    CHECK(saw_value);
    std::string csv = metrics_to_csv(w.metrics());
    CHECK(csv.substr(0, csv.find('\n')) ==
          "tick,shard,finalized_blocks,finalized_txs,mean_latency_ticks,p99_latency_ticks");
}

TEST_CASE("trace replay audits transitions") {
    ScenarioConfig cfg = small_world();
    cfg.placement = PlacementMode::PinnedToShards;
    cfg.pins.push_back({0, 1, 3});
    cfg.run_ticks = 1000;
    cfg.seed = 4;
    World w(cfg);
    w.run();
    std::string csv = trace_to_csv(w.trace());

    ReplayResult ok = replay_trace(csv);
    CHECK(ok.well_formed);
    CHECK(ok.ok);

    SUBCASE("an injected conflicting finalization fails with its line number") {
        // Find a discarded block and append a finalization row for it.
        std::string discarded_hash;
        for (const auto& row : w.trace())
            if (row.new_status == BlockStatus::Discarded) {
                discarded_hash = row.block.hex();
                break;
            }
        REQUIRE(!discarded_hash.empty());
        size_t lines = std::count(csv.begin(), csv.end(), '\n');
        std::string tampered = csv + "9999,0," + discarded_hash +
                               ",prepared,finalized," + discarded_hash + "\n";
        ReplayResult bad = replay_trace(tampered);
        CHECK(bad.well_formed);
        CHECK_FALSE(bad.ok);
        REQUIRE(!bad.failures.empty());
        CHECK(bad.failures[0].find("line " + std::to_string(lines + 1)) != std::string::npos);
        CHECK(bad.failures[0].find("conflicting finalization") != std::string::npos);
    }

    SUBCASE("a truncated trace is malformed") {
        ReplayResult bad = replay_trace(csv.substr(0, csv.size() - 7));
        CHECK_FALSE(bad.well_formed);
    }

    SUBCASE("finalizing a block that never prepared is flagged") {
        std::string ghost(64, 'a');
        std::string tampered = csv + "9999,0," + ghost + ",prepared,finalized," + ghost + "\n";
        ReplayResult bad = replay_trace(tampered);
        CHECK(bad.well_formed);
        CHECK_FALSE(bad.ok);
    }
}

TEST_CASE("a genesis allocation file seeds the ledgers") {
    namespace fs = std::filesystem;
    fs::path file = fs::temp_directory_path() / "spiralsim_genesis_test.csv";
    {
        std::ofstream out(file);
        // Deterministic addresses; balances tagged by index.
        for (int i = 0; i < 30; ++i) {
            Encoder e;
            e.put_u64(uint64_t(i) + 7000);
            Hash h = e.digest();
            for (int b = 0; b < 20; ++b) {
                char buf[3];
                std::snprintf(buf, sizeof(buf), "%02x", h.bytes[b]);
                out << buf;
            }
            out << "," << 500 + i << "\n";
        }
    }
    ScenarioConfig cfg = small_world();
    cfg.genesis_file = file.string();
    cfg.run_ticks = 600;
    World w(cfg);
    uint64_t want = 0;
    for (int i = 0; i < 30; ++i) want += 500 + i;
    CHECK(w.genesis_total() == want);
    RunReport rep = w.run();
    CHECK(rep.audit.conservation);
    fs::remove(file);
}

TEST_CASE("post-GST deliveries respect the delta bound") {
    ScenarioConfig cfg = small_world();
    cfg.net.gst = 0;
    cfg.net.delta_bound = cfg.net.base_latency + cfg.net.jitter;
    World w(cfg);
    RunReport rep = w.run();
    CHECK(rep.audit.delivery_bound);
}
