#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <set>

#include "spiral/seccalc.hpp"
#include "spiral/simnet.hpp"
#include "spiral/world.hpp"

using namespace spiral;
using namespace spiral::simnet;

TEST_CASE("rng bounded draws stay in range and are deterministic") {
    Rng a(42), b(42);
    for (int i = 0; i < 1000; ++i) {
        uint64_t va = a.below(7);
        CHECK(va < 7);
        CHECK(va == b.below(7));
    }
    CHECK(Rng(1).next() != Rng(2).next());
}

TEST_CASE("delay sampling: base, jitter, partitions, GST clamp") {
    NetworkParams net;
    net.base_latency = 10;
    net.jitter = 0;
    Rng rng(7);

    CHECK(sample_delay(rng, net, 0, 1, 100, {}) == 10); // no jitter: always base

    net.jitter = 3;
    for (int i = 0; i < 200; ++i) {
        Tick d = sample_delay(rng, net, 0, 1, 100, {});
        CHECK(d >= 10);
        CHECK(d <= 13);
    }

    // A send touching a partitioned shard defers to the window's end.
    std::vector<PartitionWindow> parts{{2, 75, 135}};
    Tick d = sample_delay(rng, net, 2, 0, 80, parts);
    CHECK(80 + d >= 135 + net.base_latency);
    d = sample_delay(rng, net, 0, 2, 80, parts); // receiver side partitioned
    CHECK(80 + d >= 135 + net.base_latency);
    d = sample_delay(rng, net, 0, 1, 80, parts); // untouched link
    CHECK(d <= 13);
    d = sample_delay(rng, net, 2, 0, 140, parts); // window over
    CHECK(d <= 13);

    // Post-GST the delay never exceeds delta.
    net.gst = 1000;
    net.delta_bound = 11;
    for (int i = 0; i < 100000; ++i) CHECK(sample_delay(rng, net, 0, 1, 2000, {}) <= 11);
}

TEST_CASE("epoch reshuffle is a seeded partition into equal shards") {
    std::vector<Height> heights{5, 9, 3};
    EpochEntry e1 = reconfigure_epoch(99, 4, 30, 10, heights);
    EpochEntry e2 = reconfigure_epoch(99, 4, 30, 10, heights);
    CHECK(e1.node_shard == e2.node_shard); // same epoch: identical
    CHECK(e1.randomness == e2.randomness);

    EpochEntry other = reconfigure_epoch(99, 5, 30, 10, heights);
    CHECK(e1.node_shard != other.node_shard); // different epochs differ

    std::set<NodeId> seen;
    for (ShardId s = 0; s < 3; ++s) {
        CHECK(e1.members[s].size() == 10);
        for (NodeId n : e1.members[s]) {
            CHECK(e1.node_shard[n] == s);
            CHECK(seen.insert(n).second); // a partition, no node twice
        }
        CHECK(e1.start_height[s] == heights[s]);
    }
    CHECK(seen.size() == 30);

    CHECK_THROWS_AS(reconfigure_epoch(1, 0, 31, 10, heights), std::invalid_argument);
}

TEST_CASE("reshuffle marginals match the hypergeometric model") {
    // 10^4 reshuffles of 60 nodes (15 malicious) into shards of 10; the
    // malicious count in shard 0 must follow Hyp(60, 15, 10) by chi-square
    // at the 1% level.
    const int kRounds = 10000;
    const uint32_t n = 60, s = 10, malicious = 15;
    std::vector<int> counts(s + 1, 0);
    std::vector<Height> heights(n / s, 1);
    for (int round = 0; round < kRounds; ++round) {
        EpochEntry e = reconfigure_epoch(4242, Epoch(round), n, s, heights);
        int m = 0;
        for (NodeId node : e.members[0])
            if (node < malicious) ++m;
        counts[size_t(m)]++;
    }

    // Merge tail bins below an expected count of 5.
    std::vector<double> expected(s + 1);
    for (uint32_t k = 0; k <= s; ++k)
        expected[k] = seccalc::hypergeom_pmf(n, malicious, s, k) * kRounds;
    std::vector<std::pair<double, double>> bins; // (observed, expected)
    double obs_acc = 0, exp_acc = 0;
    for (uint32_t k = 0; k <= s; ++k) {
        obs_acc += counts[k];
        exp_acc += expected[k];
        if (exp_acc >= 5.0) {
            bins.emplace_back(obs_acc, exp_acc);
            obs_acc = exp_acc = 0;
        }
    }
    if (exp_acc > 0 && !bins.empty()) {
        bins.back().first += obs_acc;
        bins.back().second += exp_acc;
    }
    double chi2 = 0;
    for (auto [obs, exp] : bins) chi2 += (obs - exp) * (obs - exp) / exp;
    size_t df = bins.size() - 1;
    REQUIRE(df >= 1);
    REQUIRE(df <= 12);
    // 99th percentile of chi-square by degrees of freedom.
    const double crit[13] = {0,      6.635,  9.210,  11.345, 13.277, 15.086, 16.812,
                             18.475, 20.090, 21.666, 23.209, 24.725, 26.217};
    CHECK(chi2 < crit[df]);
}

TEST_CASE("scenario config round-trips through JSON") {
    ScenarioConfig cfg;
    cfg.name = "roundtrip";
    cfg.network_size = 60;
    cfg.shard_size = 10;
    cfg.group_size = 3;
    cfg.partitions.push_back({1, 100, 200});
    cfg.pins.push_back({0, 1, 3});
    cfg.placement = PlacementMode::PinnedToShards;
    cfg.run_ticks = 500;
    cfg.validate_and_finalize();

    ScenarioConfig back = ScenarioConfig::from_json(cfg.to_json());
    CHECK(back.name == cfg.name);
    CHECK(back.network_size == cfg.network_size);
    CHECK(back.partitions.size() == 1);
    CHECK(back.partitions[0].t_end == 200);
    CHECK(back.pins.size() == 1);
    CHECK(back.pins[0].abc == 3);
    CHECK(back.placement == PlacementMode::PinnedToShards);
    CHECK(back.net.gst == 201); // derived past the partition

    ScenarioConfig bad = cfg;
    bad.network_size = 61; // not divisible by the shard size
    CHECK_THROWS_AS(bad.validate_and_finalize(), std::invalid_argument);
    bad = cfg;
    bad.group_size = 4; // 6 shards, 4 does not divide
    CHECK_THROWS_AS(bad.validate_and_finalize(), std::invalid_argument);
}
