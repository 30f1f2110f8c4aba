// Command-line surface for the parameter calculator and the protocol
// simulator. Exit codes: 0 ok, 2 infeasible parameters, 3 invariant
// violation, 4 bad input.

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <future>
#include <iostream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "spiral/replay.hpp"
#include "spiral/scenario.hpp"
#include "spiral/seccalc.hpp"
#include "spiral/world.hpp"

namespace {

using namespace spiral;
using nlohmann::json;

std::string fmt_prob(double p) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.6e", p);
    return buf;
}

json breakdown_json(const seccalc::FailureBreakdown& b) {
    json j;
    j["case1"] = fmt_prob(b.case1.linear());
    j["case2"] = fmt_prob(b.case2.linear());
    j["case3"] = fmt_prob(b.case3.linear());
    j["per_group"] = fmt_prob(b.per_group.linear());
    j["system"] = fmt_prob(b.system.linear());
    return j;
}

int cmd_tune(uint64_t network, uint32_t shard_size, uint32_t group_size, double f, double fb,
             double eps) {
    bool have_shard = shard_size != 0;
    bool have_group = group_size != 0;
    if (have_shard == have_group) {
        std::cerr << "tune: give exactly one of --shard-size / --group-size\n";
        return 4;
    }
    seccalc::TuneResult r;
    json out;
    out["network_size"] = network;
    out["f"] = f;
    out["fb"] = fb;
    out["eps"] = fmt_prob(eps);
    if (have_shard) {
        r = seccalc::min_group_size(network, shard_size, f, fb, eps);
        out["shard_size"] = shard_size;
        if (r.feasible) out["group_size"] = r.value;
    } else {
        r = seccalc::min_shard_size_given_group(network, group_size, f, fb, eps);
        out["group_size"] = group_size;
        if (r.feasible) out["shard_size"] = r.value;
    }
    out["feasible"] = r.feasible;
    if (r.feasible) out["breakdown"] = breakdown_json(r.breakdown);
    std::cout << out.dump(2) << "\n";
    if (!r.feasible) {
        std::cerr << "tune: no feasible parameter under eps\n";
        return 2;
    }
    return 0;
}

int cmd_tables(const std::string& which, double f, double fb, double eps) {
    std::cout << "network_size,shard_size,group_size,failure_prob\n";
    if (which == "reference") {
        auto cells = seccalc::emit_reference_table(seccalc::reference_ranges(),
                                                   seccalc::reference_shard_sizes(), f, fb, eps);
        for (const auto& c : cells) {
            std::cout << c.network_size << ',' << c.shard_size << ','
                      << (c.group_size ? std::to_string(*c.group_size) : "") << ','
                      << fmt_prob(c.failure_prob) << "\n";
            if (!c.sensitivity.empty())
                std::cerr << "note: cell (" << c.network_size << "," << c.shard_size
                          << ") is limit-sensitive: " << c.sensitivity << "\n";
        }
        return 0;
    }
    if (which == "paper-params") {
        const std::pair<uint64_t, uint32_t> rows[] = {{1260, 105}, {2000, 100}, {3000, 100},
                                                      {4200, 100}};
        for (auto [n, s] : rows) {
            auto r = seccalc::min_group_size(n, s, f, fb, eps);
            std::cout << n << ',' << s << ','
                      << (r.feasible ? std::to_string(r.value) : "") << ','
                      << fmt_prob(r.feasible ? r.breakdown.system.linear() : 1.0) << "\n";
        }
        return 0;
    }
    if (which == "baseline") {
        const uint64_t rows[] = {1260, 2000, 3000, 4200};
        for (auto n : rows) {
            auto r = seccalc::baseline_shard_size(n, f, eps);
            std::cout << n << ',' << r.shard_size << ",1," << fmt_prob(r.system.linear()) << "\n";
        }
        return 0;
    }
    std::cerr << "tables: unknown table '" << which << "'\n";
    return 4;
}

int cmd_baseline(uint64_t network, double f, double eps) {
    auto r = seccalc::baseline_shard_size(network, f, eps);
    json out;
    out["network_size"] = network;
    out["f"] = f;
    out["eps"] = fmt_prob(eps);
    out["shard_size"] = r.shard_size;
    out["num_shards"] = network / r.shard_size;
    out["failure_prob"] = fmt_prob(r.system.linear());
    out["single_shard_fallback"] = r.single_shard_fallback;
    std::cout << out.dump(2) << "\n";
    return 0;
}

int cmd_simulate(const std::string& scenario_path, const std::string& out_dir, uint32_t batch) {
    ScenarioConfig cfg;
    try {
        cfg = ScenarioConfig::load(scenario_path);
    } catch (const std::exception& e) {
        std::cerr << "simulate: " << e.what() << "\n";
        return 4;
    }
    if (const char* env = std::getenv("SPIRALSIM_SEED")) cfg.seed = std::strtoull(env, nullptr, 10);

    if (batch <= 1) {
        sim::RunReport report = sim::run_scenario_to_dir(cfg, out_dir);
        std::cout << (report.ok() ? "pass" : "FAIL") << " blocks_finalized="
                  << report.blocks_finalized << " txs_confirmed=" << report.txs_confirmed << "\n";
        return report.ok() ? 0 : 3;
    }

    // Independent seeds fan out across workers; each run owns its world.
    std::vector<std::future<sim::RunReport>> futures;
    for (uint32_t i = 0; i < batch; ++i) {
        ScenarioConfig c = cfg;
        c.seed = cfg.seed + i;
        std::string dir = (std::filesystem::path(out_dir) / ("seed_" + std::to_string(c.seed)))
                              .string();
        futures.push_back(std::async(std::launch::async,
                                     [c, dir] { return sim::run_scenario_to_dir(c, dir); }));
    }
    bool all_ok = true;
    for (auto& f : futures) {
        sim::RunReport r = f.get();
        std::cout << "seed " << r.seed << ": " << (r.ok() ? "pass" : "FAIL") << "\n";
        all_ok = all_ok && r.ok();
    }
    return all_ok ? 0 : 3;
}

int cmd_replay(const std::string& trace_path) {
    sim::ReplayResult res = sim::replay_trace_file(trace_path);
    for (const auto& f : res.failures) std::cerr << f << "\n";
    if (!res.well_formed) {
        std::cout << "malformed\n";
        return 4;
    }
    std::cout << (res.ok ? "pass" : "FAIL") << "\n";
    return res.ok ? 0 : 3;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"SpiralShard sharding laboratory: parameter calculator and protocol simulator"};
    app.require_subcommand(1);

    uint64_t network = 0;
    uint32_t shard_size = 0, group_size = 0, batch = 1;
    double f = 0.25, fb = 0.125, eps = spiral::seccalc::SecurityParams::default_eps();
    std::string which = "reference", scenario_path, out_dir = "out", trace_path;

    auto* tune = app.add_subcommand("tune", "minimal group or shard size under the failure budget");
    tune->add_option("--network", network, "total node count")->required();
    tune->add_option("--shard-size", shard_size, "fixed shard size; tunes the group size");
    tune->add_option("--group-size", group_size, "fixed group size; tunes the shard size");
    tune->add_option("--f", f, "total malicious fraction");
    tune->add_option("--fb", fb, "Byzantine fraction");
    tune->add_option("--eps", eps, "failure budget");

    auto* tables = app.add_subcommand("tables", "regenerate the parameter tables as CSV");
    tables->add_option("--which", which, "reference | paper-params | baseline")->required();
    tables->add_option("--f", f, "total malicious fraction");
    tables->add_option("--fb", fb, "Byzantine fraction");
    tables->add_option("--eps", eps, "failure budget");

    auto* baseline = app.add_subcommand("baseline", "classical shard size without endorsement");
    baseline->add_option("--network", network, "total node count")->required();
    baseline->add_option("--f", f, "total malicious fraction");
    baseline->add_option("--eps", eps, "failure budget");

    auto* simulate = app.add_subcommand("simulate", "run a scenario");
    simulate->add_option("--scenario", scenario_path, "scenario JSON file")->required();
    simulate->add_option("--out", out_dir, "output directory");
    simulate->add_option("--batch", batch, "number of consecutive seeds to fan out");

    auto* replay = app.add_subcommand("replay", "re-audit a recorded trace");
    replay->add_option("--trace", trace_path, "trace.csv path")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (tune->parsed()) return cmd_tune(network, shard_size, group_size, f, fb, eps);
        if (tables->parsed()) return cmd_tables(which, f, fb, eps);
        if (baseline->parsed()) return cmd_baseline(network, f, eps);
        if (simulate->parsed()) return cmd_simulate(scenario_path, out_dir, batch);
        if (replay->parsed()) return cmd_replay(trace_path);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 4;
    }
    return 4;
}
