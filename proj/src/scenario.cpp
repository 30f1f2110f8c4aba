#include "spiral/scenario.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace spiral {

using nlohmann::json;

void ScenarioConfig::validate_and_finalize() {
    if (shard_size == 0 || network_size == 0) throw std::invalid_argument("empty network");
    if (network_size % shard_size != 0)
        throw std::invalid_argument("shard size must divide the network size");
    uint32_t shards = num_shards();
    if (group_size == 0 || shards % group_size != 0)
        throw std::invalid_argument("group size must divide the shard count");
    if (f_byzantine < 0 || f_abc < 0 || f_byzantine + f_abc >= 1.0)
        throw std::invalid_argument("adversary fractions out of range");
    if (byz_behavior != "silent" && byz_behavior != "equivocate" &&
        byz_behavior != "withhold_endorsement")
        throw std::invalid_argument("unknown byz_behavior: " + byz_behavior);
    if (equivocate_branches < 2) equivocate_branches = 2;
    if (run_ticks == 0 || frame_ticks == 0 || window_ticks == 0 || vc_timeout == 0)
        throw std::invalid_argument("tick parameters must be positive");
    Tick last_partition_end = 0;
    for (const auto& p : partitions) {
        if (p.shard >= shards) throw std::invalid_argument("partition names an unknown shard");
        if (p.t_end < p.t_start || p.t_end > run_ticks)
            throw std::invalid_argument("partition window outside the run horizon");
        last_partition_end = std::max(last_partition_end, p.t_end);
    }
    for (const auto& pin : pins) {
        if (pin.shard >= shards) throw std::invalid_argument("pin names an unknown shard");
        if (pin.byzantine + pin.abc > shard_size)
            throw std::invalid_argument("pin exceeds the shard size");
    }
    // Partitions are asynchrony; GST must not precede them or the post-GST
    // delivery bound would be violated by deferral.
    if (net.gst < last_partition_end + (last_partition_end ? 1 : 0))
        net.gst = last_partition_end ? last_partition_end + 1 : net.gst;
}

std::string ScenarioConfig::to_json() const {
    json j;
    j["name"] = name;
    j["network_size"] = network_size;
    j["shard_size"] = shard_size;
    j["group_size"] = group_size;
    j["epoch_length_ticks"] = epoch_length_ticks;
    j["run_ticks"] = run_ticks;
    j["adversary"]["f_byzantine"] = f_byzantine;
    j["adversary"]["f_abc"] = f_abc;
    j["adversary"]["placement"] =
        placement == PlacementMode::RandomBySeed ? "random" : "pinned";
    j["adversary"]["byz_behavior"] = byz_behavior;
    j["adversary"]["equivocate_branches"] = equivocate_branches;
    j["adversary"]["pins"] = json::array();
    for (const auto& p : pins)
        j["adversary"]["pins"].push_back(
            {{"shard", p.shard}, {"byzantine", p.byzantine}, {"abc", p.abc}});
    j["partitions"] = json::array();
    for (const auto& p : partitions)
        j["partitions"].push_back({{"shard", p.shard}, {"t_start", p.t_start}, {"t_end", p.t_end}});
    j["workload"]["txs_per_tick"] = txs_per_tick;
    j["workload"]["cross_shard_ratio"] = cross_shard_ratio;
    j["workload"]["accounts_per_shard"] = accounts_per_shard;
    j["workload"]["initial_balance"] = initial_balance;
    j["workload"]["block_capacity"] = block_capacity;
    j["network"]["base_latency"] = net.base_latency;
    j["network"]["jitter"] = net.jitter;
    j["network"]["delta_bound"] = net.delta_bound;
    j["network"]["gst"] = net.gst;
    j["seed"] = seed;
    j["vc_timeout"] = vc_timeout;
    j["window_ticks"] = window_ticks;
    j["frame_ticks"] = frame_ticks;
    j["sync_pause_ticks"] = sync_pause_ticks;
    j["check_liveness"] = check_liveness;
    if (!genesis_file.empty()) j["genesis_file"] = genesis_file;
    return j.dump(2) + "\n";
}

ScenarioConfig ScenarioConfig::from_json(const std::string& text) {
    json j = json::parse(text);
    ScenarioConfig c;
    c.name = j.value("name", c.name);
    c.network_size = j.value("network_size", c.network_size);
    c.shard_size = j.value("shard_size", c.shard_size);
    c.group_size = j.value("group_size", c.group_size);
    c.epoch_length_ticks = j.value("epoch_length_ticks", c.epoch_length_ticks);
    c.run_ticks = j.value("run_ticks", c.run_ticks);
    if (j.contains("adversary")) {
        const json& a = j["adversary"];
        c.f_byzantine = a.value("f_byzantine", c.f_byzantine);
        c.f_abc = a.value("f_abc", c.f_abc);
        std::string mode = a.value("placement", "random");
        if (mode == "random") c.placement = PlacementMode::RandomBySeed;
        else if (mode == "pinned") c.placement = PlacementMode::PinnedToShards;
        else throw std::invalid_argument("unknown placement mode: " + mode);
        c.byz_behavior = a.value("byz_behavior", c.byz_behavior);
        c.equivocate_branches = a.value("equivocate_branches", c.equivocate_branches);
        for (const auto& p : a.value("pins", json::array()))
            c.pins.push_back({p.at("shard").get<ShardId>(), p.value("byzantine", 0u),
                              p.value("abc", 0u)});
    }
    for (const auto& p : j.value("partitions", json::array()))
        c.partitions.push_back({p.at("shard").get<ShardId>(), p.at("t_start").get<Tick>(),
                                p.at("t_end").get<Tick>()});
    if (j.contains("workload")) {
        const json& w = j["workload"];
        c.txs_per_tick = w.value("txs_per_tick", c.txs_per_tick);
        c.cross_shard_ratio = w.value("cross_shard_ratio", c.cross_shard_ratio);
        c.accounts_per_shard = w.value("accounts_per_shard", c.accounts_per_shard);
        c.initial_balance = w.value("initial_balance", c.initial_balance);
        c.block_capacity = w.value("block_capacity", c.block_capacity);
    }
    if (j.contains("network")) {
        const json& n = j["network"];
        c.net.base_latency = n.value("base_latency", c.net.base_latency);
        c.net.jitter = n.value("jitter", c.net.jitter);
        c.net.delta_bound = n.value("delta_bound", c.net.delta_bound);
        c.net.gst = n.value("gst", c.net.gst);
    }
    c.seed = j.value("seed", c.seed);
    c.vc_timeout = j.value("vc_timeout", c.vc_timeout);
    c.window_ticks = j.value("window_ticks", c.window_ticks);
    c.frame_ticks = j.value("frame_ticks", c.frame_ticks);
    c.sync_pause_ticks = j.value("sync_pause_ticks", c.sync_pause_ticks);
    c.check_liveness = j.value("check_liveness", c.check_liveness);
    c.genesis_file = j.value("genesis_file", c.genesis_file);
    c.validate_and_finalize();
    return c;
}

ScenarioConfig ScenarioConfig::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open scenario file: " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return from_json(ss.str());
}

void ScenarioConfig::save(const std::string& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write scenario file: " + path);
    out << to_json();
}

} // namespace spiral
