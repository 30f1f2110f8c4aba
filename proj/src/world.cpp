#include "spiral/world.hpp"

#include <algorithm>
#include <cassert>
#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include <json.hpp>

namespace spiral::sim {

using consensus::NodePolicy;
using consensus::Role;
using consensus::ByzBehavior;

namespace {

std::string fmt_latency(const std::optional<double>& v) {
    if (!v) return "";
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.3f", *v);
    return buf;
}

ByzBehavior behavior_from_string(const std::string& s) {
    if (s == "silent") return ByzBehavior::Silent;
    if (s == "withhold_endorsement") return ByzBehavior::WithholdEndorsement;
    return ByzBehavior::Equivocate;
}

std::optional<double> percentile(std::vector<double>& v, double q) {
    if (v.empty()) return std::nullopt;
    std::sort(v.begin(), v.end());
    size_t idx = size_t(std::ceil(q * double(v.size())));
    if (idx > 0) --idx;
    return v[std::min(idx, v.size() - 1)];
}

} // namespace

std::string trace_to_csv(const std::vector<TraceRow>& rows) {
    std::string out = "tick,shard,block_hash,old_status,new_status,witness_hash\n";
    for (const auto& r : rows) {
        out += std::to_string(r.tick);
        out += ',';
        out += std::to_string(r.shard);
        out += ',';
        out += r.block.hex();
        out += ',';
        out += r.has_old ? to_string(r.old_status) : "none";
        out += ',';
        out += to_string(r.new_status);
        out += ',';
        out += r.witness.is_zero() ? "" : r.witness.hex();
        out += '\n';
    }
    return out;
}

std::string metrics_to_csv(const std::vector<MetricsRow>& rows) {
    std::string out = "tick,shard,finalized_blocks,finalized_txs,mean_latency_ticks,p99_latency_ticks\n";
    for (const auto& r : rows) {
        out += std::to_string(r.tick);
        out += ',';
        out += std::to_string(r.shard);
        out += ',';
        out += std::to_string(r.finalized_blocks);
        out += ',';
        out += std::to_string(r.finalized_txs);
        out += ',';
        out += fmt_latency(r.mean_latency);
        out += ',';
        out += fmt_latency(r.p99_latency);
        out += '\n';
    }
    return out;
}

std::string RunReport::to_json() const {
    nlohmann::json j;
    j["scenario"] = scenario;
    j["seed"] = seed;
    j["run_ticks"] = run_ticks;
    j["totals"]["blocks_prepared"] = blocks_prepared;
    j["totals"]["blocks_finalized"] = blocks_finalized;
    j["totals"]["blocks_discarded"] = blocks_discarded;
    j["totals"]["txs_confirmed"] = txs_confirmed;
    j["totals"]["relays_emitted"] = relays_emitted;
    j["totals"]["relays_deposited"] = relays_deposited;
    j["totals"]["relays_rejected"] = relays_rejected;
    j["totals"]["view_changes"] = view_changes;
    j["per_shard_finalized_height"] = finalized_height;
    {
        char buf[32];
        std::snprintf(buf, sizeof(buf), "%.6f", mean_tps);
        j["mean_tps"] = std::string(buf);
    }
    j["mean_latency_ticks"] = mean_latency ? nlohmann::json(fmt_latency(mean_latency))
                                           : nlohmann::json(nullptr);
    j["p99_latency_ticks"] = p99_latency ? nlohmann::json(fmt_latency(p99_latency))
                                         : nlohmann::json(nullptr);
    j["audit"]["safety"] = audit.safety;
    j["audit"]["conservation"] = audit.conservation;
    j["audit"]["liveness"] = audit.liveness;
    j["audit"]["liveness_required"] = liveness_required;
    j["audit"]["delivery_bound"] = audit.delivery_bound;
    j["audit"]["local_consistency"] = audit.local_consistency;
    j["audit"]["violations"] = audit.violations;
    j["pass"] = ok();
    return j.dump(2) + "\n";
}

World::World(ScenarioConfig cfg) : cfg_(std::move(cfg)) {
    cfg_.validate_and_finalize();
    num_shards_ = cfg_.num_shards();
    layout_.group_size = cfg_.group_size;
    rng_net_ = simnet::Rng(cfg_.seed ^ 0x6e65740000000000ull);
    rng_workload_ = simnet::Rng(cfg_.seed ^ 0x776f726b00000000ull);
    rng_roles_ = simnet::Rng(cfg_.seed ^ 0x726f6c6500000000ull);

    ctx_.group_size = cfg_.group_size;
    ctx_.layout = layout_;
    ctx_.headers = &headers_;
    ctx_.shards = &chains_;

    build_accounts();

    // Genesis chain per shard.
    for (ShardId s = 0; s < num_shards_; ++s) {
        BlockHeader g;
        g.shard = s;
        g.epoch = 0;
        g.height = 0;
        chains_[s].shard = s;
        chains_[s].init_genesis(g);
        headers_.emplace(content_hash(g), g);
        all_blocks_.emplace(content_hash(g), Block{g, {}});
        consensus_[s].shard = s;
        ledgers_[s]; // default-construct
        mempools_[s];
        credit_pool_[s];
    }

    // Genesis allocation.
    std::map<ShardId, AccountMap> alloc;
    for (size_t i = 0; i < accounts_.size(); ++i)
        alloc[shard_of_account(accounts_[i], num_shards_)][accounts_[i]] =
            AccountRecord{account_balances_[i], 0};
    for (auto& [s, m] : alloc) ledgers_[s].set_genesis(std::move(m));
    for (auto& [s, ledger] : ledgers_) genesis_total_ += ledger.total_balance();

    start_epoch(0, 0);
    assign_roles();
    schedule_workload();

    // Epoch boundaries across the horizon.
    for (Tick t = cfg_.epoch_length_ticks; t < cfg_.run_ticks; t += cfg_.epoch_length_ticks) {
        Event ev;
        ev.kind = EvKind::EpochBoundary;
        ev.at = t;
        push_event(std::move(ev));
    }

    frame_blocks_.assign(num_shards_, 0);
    frame_txs_.assign(num_shards_, 0);
    frame_latencies_.assign(num_shards_, {});
    window_heights_.assign(num_shards_, {});
    next_window_ = cfg_.window_ticks;
}

void World::build_accounts() {
    accounts_by_shard_.assign(num_shards_, {});
    if (!cfg_.genesis_file.empty()) {
        // CSV allocation: address_hex,balance per line.
        std::ifstream in(cfg_.genesis_file);
        if (!in) throw std::runtime_error("cannot open genesis file: " + cfg_.genesis_file);
        std::string line;
        while (std::getline(in, line)) {
            if (line.empty() || line[0] == '#') continue;
            auto comma = line.find(',');
            if (comma != 40) throw std::runtime_error("bad genesis line: " + line);
            Address a{};
            for (size_t i = 0; i < 20; ++i)
                a[i] = uint8_t(std::stoul(line.substr(2 * i, 2), nullptr, 16));
            uint64_t balance = std::stoull(line.substr(comma + 1));
            accounts_by_shard_[shard_of_account(a, num_shards_)].push_back(accounts_.size());
            accounts_.push_back(a);
            account_balances_.push_back(balance);
        }
    } else {
        uint64_t salt = 0;
        uint32_t target = cfg_.accounts_per_shard;
        size_t need = size_t(target) * num_shards_;
        while (accounts_.size() < need && salt < need * 1000 + 100000) {
            Encoder e;
            e.put_u64(0x6163637400000000ull);
            e.put_u64(salt++);
            Hash h = e.digest();
            Address a{};
            std::copy(h.bytes.begin(), h.bytes.begin() + 20, a.begin());
            ShardId s = shard_of_account(a, num_shards_);
            if (accounts_by_shard_[s].size() < target) {
                accounts_by_shard_[s].push_back(accounts_.size());
                accounts_.push_back(a);
                account_balances_.push_back(cfg_.initial_balance);
            }
        }
    }
    for (ShardId s = 0; s < num_shards_; ++s)
        if (accounts_by_shard_[s].empty())
            throw std::runtime_error("no accounts landed in shard " + std::to_string(s));
}

void World::assign_roles() {
    policies_.assign(cfg_.network_size, NodePolicy{});
    ByzBehavior behavior = behavior_from_string(cfg_.byz_behavior);
    auto mark = [&](NodeId n, Role r) {
        policies_[n].role = r;
        policies_[n].byz_behavior = behavior;
        policies_[n].equivocate_branches = cfg_.equivocate_branches;
    };
    const simnet::EpochEntry* entry = registry_.get(0);
    if (cfg_.placement == PlacementMode::PinnedToShards) {
        for (const auto& pin : cfg_.pins) {
            const auto& members = entry->members[pin.shard];
            for (uint32_t i = 0; i < pin.byzantine; ++i) mark(members[i], Role::Byzantine);
            for (uint32_t i = 0; i < pin.abc; ++i)
                mark(members[pin.byzantine + i], Role::AliveButCorrupt);
        }
    } else {
        uint32_t byz = uint32_t(std::llround(cfg_.f_byzantine * cfg_.network_size));
        uint32_t abc = uint32_t(std::llround(cfg_.f_abc * cfg_.network_size));
        std::vector<NodeId> ids(cfg_.network_size);
        for (uint32_t i = 0; i < cfg_.network_size; ++i) ids[i] = i;
        for (uint32_t i = cfg_.network_size - 1; i > 0; --i)
            std::swap(ids[i], ids[rng_roles_.below(uint64_t(i) + 1)]);
        for (uint32_t i = 0; i < byz && i < ids.size(); ++i) mark(ids[i], Role::Byzantine);
        for (uint32_t i = 0; i < abc && byz + i < ids.size(); ++i)
            mark(ids[byz + i], Role::AliveButCorrupt);
    }
}

void World::schedule_workload() {
    if (cfg_.txs_per_tick <= 0.0 || accounts_.empty()) return;
    double acc = 0.0;
    for (Tick t = 1; t <= cfg_.run_ticks; ++t) {
        acc += cfg_.txs_per_tick;
        while (acc >= 1.0) {
            acc -= 1.0;
            size_t from_idx = size_t(rng_workload_.below(accounts_.size()));
            const Address& from = accounts_[from_idx];
            ShardId src = shard_of_account(from, num_shards_);
            bool cross = num_shards_ > 1 && rng_workload_.unit() < cfg_.cross_shard_ratio;
            Transaction tx;
            tx.from = from;
            tx.amount = 1;
            tx.nonce = ++next_nonce_[from];
            if (cross) {
                ShardId dst = ShardId(rng_workload_.below(num_shards_ - 1));
                if (dst >= src) ++dst;
                const auto& pool = accounts_by_shard_[dst];
                tx.to = accounts_[pool[size_t(rng_workload_.below(pool.size()))]];
                tx.kind = TxKind::CrossSourceDebit;
            } else {
                const auto& pool = accounts_by_shard_[src];
                tx.to = accounts_[pool[size_t(rng_workload_.below(pool.size()))]];
                tx.kind = TxKind::IntraTransfer;
            }
            Event ev;
            ev.kind = EvKind::TxArrival;
            ev.at = t;
            ev.shard = src;
            ev.tx = tx;
            push_event(std::move(ev));
        }
    }
}

void World::start_epoch(Epoch e, Tick now) {
    std::vector<Height> heights(num_shards_, 1);
    for (ShardId s = 0; s < num_shards_; ++s) {
        if (auto it = chains_.find(s); it != chains_.end()) {
            auto h = it->second.height_of(it->second.best_tip());
            heights[s] = (h ? *h : 0) + 1;
        }
    }
    registry_.entries[e] = simnet::reconfigure_epoch(cfg_.seed, e, cfg_.network_size,
                                                     cfg_.shard_size, heights);
    const simnet::EpochEntry& entry = registry_.entries[e];
    current_epoch_ = e;

    vote_locks_.clear();
    endorse_rejects_.clear();
    reject_vc_done_.clear();
    proposed_.clear();

    Tick resume = now + (e == 0 ? 0 : cfg_.sync_pause_ticks);
    for (ShardId s = 0; s < num_shards_; ++s) {
        member_sets_[{s, e}] =
            std::set<NodeId>(entry.members[s].begin(), entry.members[s].end());
        auto& st = consensus_[s];
        st.shard = s;
        st.epoch = e;
        st.members = entry.members[s];
        st.view = 0;
        st.pending_votes.clear();
        st.vc_deadline = resume + cfg_.vc_timeout;
        lce::epoch_boundary_reset(chains_[s]);
        last_progress_[s] = resume;

        Event wake;
        wake.kind = EvKind::ProposeWake;
        wake.at = resume + 1;
        wake.shard = s;
        push_event(std::move(wake));

        Event vc;
        vc.kind = EvKind::VcTimeout;
        vc.at = st.vc_deadline;
        vc.shard = s;
        vc.deadline = st.vc_deadline;
        push_event(std::move(vc));
    }
}

void World::push_event(Event ev) {
    ev.seq = next_seq_++;
    queue_.push(std::move(ev));
}

Tick World::net_delay(ShardId from, ShardId to, Tick now) {
    Tick d = simnet::sample_delay(rng_net_, cfg_.net, from, to, now, cfg_.partitions);
    if (now >= cfg_.net.gst && d > cfg_.net.effective_delta()) {
        report_.audit.delivery_bound = false;
        record_violation("post-GST delivery bound exceeded");
    }
    return d;
}

void World::send_to_shard_members(EvKind kind, const Block& b, ShardId shard, Tick now) {
    const auto& members = consensus_[shard].members;
    for (NodeId n : members) {
        Event ev;
        ev.kind = kind;
        ev.shard = shard;
        ev.node = n;
        ev.epoch = current_epoch_;
        ev.block = b;
        ev.hash = content_hash(b.header);
        ev.at = now + (n == b.header.proposer ? 0 : net_delay(shard, shard, now));
        push_event(std::move(ev));
    }
}

RunReport World::run() {
    if (ran_) return report_;
    ran_ = true;
    report_.scenario = cfg_.name;
    report_.seed = cfg_.seed;
    report_.run_ticks = cfg_.run_ticks;
    report_.liveness_required = cfg_.check_liveness;

    while (!queue_.empty() && queue_.top().at <= cfg_.run_ticks) {
        Event ev = queue_.top();
        queue_.pop();
        flush_frames_until(ev.at);
        flush_windows_until(ev.at);
        now_ = ev.at;
        switch (ev.kind) {
        case EvKind::Proposal: handle_proposal(ev); break;
        case EvKind::VoteArrival: handle_vote(ev); break;
        case EvKind::HeaderArrival: handle_header_arrival(ev); break;
        case EvKind::RelayArrival: handle_relay_arrival(ev); break;
        case EvKind::VcTimeout: handle_vc_timeout(ev); break;
        case EvKind::EpochBoundary: handle_epoch_boundary(ev); break;
        case EvKind::TxArrival: handle_tx_arrival(ev); break;
        case EvKind::ProposeWake: handle_propose_wake(ev); break;
        case EvKind::EndorseRejectQuorum: handle_endorse_reject(ev); break;
        }
    }
    flush_frames_until(cfg_.run_ticks);
    flush_windows_until(cfg_.run_ticks + 1);

    // Liveness: finalized height strictly increases across every window.
    for (ShardId s = 0; s < num_shards_; ++s) {
        const auto& series = window_heights_[s];
        Height prev = 0;
        for (size_t k = 0; k < series.size(); ++k) {
            if (series[k] <= prev) {
                report_.audit.liveness = false;
                record_violation("shard " + std::to_string(s) + " stalled in window " +
                                 std::to_string(k));
                break;
            }
            prev = series[k];
        }
        if (series.empty()) report_.audit.liveness = false;
    }

    audit_conservation(cfg_.run_ticks);

    report_.finalized_height.assign(num_shards_, 0);
    for (ShardId s = 0; s < num_shards_; ++s)
        report_.finalized_height[s] = chains_[s].latest_finalized_height;
    report_.mean_tps = double(report_.txs_confirmed) / double(cfg_.run_ticks);
    if (!latency_log_.empty()) {
        std::vector<double> lat = latency_log_;
        double sum = 0;
        for (double v : lat) sum += v;
        report_.mean_latency = sum / double(lat.size());
        report_.p99_latency = percentile(lat, 0.99);
    }
    return report_;
}

const Block* World::block_of(const Hash& h) const {
    auto it = all_blocks_.find(h);
    return it == all_blocks_.end() ? nullptr : &it->second;
}

RelayVerdict World::redeliver_relay(const RelayMessage& relay) {
    auto members = [this](ShardId s, Epoch e) -> const std::set<NodeId>* {
        auto it = member_sets_.find({s, e});
        return it == member_sets_.end() ? nullptr : &it->second;
    };
    return relay_ledger_.accept(relay, members, cfg_.shard_size, cfg_.group_size);
}

void World::handle_tx_arrival(const Event& ev) {
    mempools_[ev.shard].push_back({ev.tx, ev.at});
    submit_tick_[tx_hash(ev.tx)] = ev.at;
}

void World::handle_propose_wake(const Event& ev) {
    ShardId shard = ev.shard;
    auto& st = consensus_[shard];
    NodeId leader = st.leader();
    std::vector<Block> candidates = build_candidates(shard, leader, ev.at);
    for (const auto& b : candidates) {
        all_blocks_.emplace(content_hash(b.header), b);
        send_to_shard_members(EvKind::Proposal, b, shard, ev.at);
    }
}

std::vector<Block> World::build_candidates(ShardId shard, NodeId leader, Tick) {
    auto& st = consensus_[shard];
    auto& chain = chains_[shard];
    Hash tip = chain.best_tip();
    auto tip_height = chain.height_of(tip);
    if (!tip_height) return {};
    Height height = *tip_height + 1;

    auto key = std::make_tuple(shard, height, st.view, tip);
    if (proposed_.count(key)) return {};
    proposed_.insert(key);

    const NodePolicy& policy = policies_[leader];
    std::vector<Block> out;
    if (policy.role == Role::Byzantine) {
        switch (policy.byz_behavior) {
        case ByzBehavior::Silent: return {};
        case ByzBehavior::WithholdEndorsement:
            out.push_back(assemble_block(shard, leader, tip, 0, true));
            break;
        case ByzBehavior::Equivocate: {
            std::set<Hash> seen;
            for (uint32_t k = 0; k < policy.equivocate_branches; ++k) {
                Block b = assemble_block(shard, leader, tip, k, false);
                if (seen.insert(content_hash(b.header)).second) out.push_back(std::move(b));
            }
            break;
        }
        }
    } else {
        out.push_back(assemble_block(shard, leader, tip, 0, false));
    }
    return out;
}

Block World::assemble_block(ShardId shard, NodeId leader, const Hash& parent, uint64_t body_salt,
                            bool withhold_endorsement) {
    auto& chain = chains_[shard];
    const NodePolicy& policy = policies_[leader];
    uint32_t branches =
        (policy.role == Role::Byzantine && policy.byz_behavior == ByzBehavior::Equivocate)
            ? policy.equivocate_branches
            : 1;

    Block b;
    b.header.shard = shard;
    b.header.epoch = current_epoch_;
    b.header.height = *chain.height_of(parent) + 1;
    b.header.view = consensus_[shard].view;
    b.header.parent = parent;
    b.header.latest_finalized = chain.latest_finalized;
    b.header.proposer = leader;

    if (!withhold_endorsement) {
        Hash target = lce::endorsement_target(chain, parent, current_epoch_, ctx_);
        if (target != epoch_genesis_sentinel()) {
            auto it = headers_.find(target);
            if (it != headers_.end())
                b.header.endorsement_list = lce::extend_endorsement_list(it->second,
                                                                         cfg_.group_size);
        }
    }

    // Body: verified cross-shard credits first, then mempool order.
    StateView pre = ledgers_[shard].view_at(parent);
    AccountMap writes;
    for (const auto& [ref, pending] : credit_pool_[shard]) {
        if (b.body.size() >= cfg_.block_capacity) break;
        if (credits_settled_.count(ref)) continue;
        if (credit_in_branch(shard, parent, ref)) continue;
        if (apply_tx(pre, pending.tx, writes, true)) b.body.push_back(pending.tx);
    }
    uint64_t pick = 0;
    for (const auto& entry : mempools_[shard]) {
        if (b.body.size() >= cfg_.block_capacity) break;
        if (confirmed_txs_.count(tx_hash(entry.tx))) continue;
        if (branches > 1 && (pick++ % branches) != body_salt) continue;
        if (apply_tx(pre, entry.tx, writes, false)) b.body.push_back(entry.tx);
    }
    b.header.tx_root = merkle_root(b.body);
    return b;
}

bool World::credit_in_branch(ShardId shard, Hash at, const OriginRef& ref) const {
    const auto& chain = chains_.at(shard);
    while (true) {
        auto it = block_credits_.find(at);
        if (it != block_credits_.end() && it->second.count(ref)) return true;
        const lce::BlockEntry* e = chain.find(at);
        if (!e || e->header.height == 0) return false;
        at = e->header.parent;
    }
}

bool World::credit_admissible(ShardId shard, const Hash& parent, const Transaction& tx) const {
    if (!tx.origin_ref) return false;
    const auto& pool = credit_pool_.at(shard);
    auto it = pool.find(*tx.origin_ref);
    if (it == pool.end()) return false;
    if (credits_settled_.count(*tx.origin_ref)) return false;
    if (credit_in_branch(shard, parent, *tx.origin_ref)) return false;
    // The packaged credit must match the relayed transfer.
    return it->second.tx.to == tx.to && it->second.tx.amount == tx.amount;
}

void World::handle_proposal(const Event& ev) {
    if (ev.epoch != current_epoch_) return;
    const simnet::EpochEntry* entry = registry_.get(current_epoch_);
    if (entry->node_shard[ev.node] != ev.shard) return;
    // Proposals from superseded views are dead on arrival; deferred
    // deliveries must not resurrect them after a view change.
    if (ev.block.header.view != consensus_[ev.shard].view) return;

    all_blocks_.emplace(ev.hash, ev.block);
    const Block& b = all_blocks_.at(ev.hash);
    auto& chain = chains_[ev.shard];
    const NodePolicy& policy = policies_[ev.node];

    Hash parent = b.header.parent;
    auto fault = consensus::validate_candidate(
        chain, ctx_, ledgers_[ev.shard], current_epoch_, b,
        [&](const Transaction& tx) { return credit_admissible(ev.shard, parent, tx); });

    // A candidate that skips an endorsable block which was already known when
    // it was proposed is withholding; one that merely raced a fresh header is
    // not. Byzantine votes ignore this distinction.
    if (fault == consensus::ValidationFault::None && policy.role != Role::Byzantine) {
        Tick grace = cfg_.net.base_latency + cfg_.net.jitter + 2;
        Tick horizon = ev.at > grace ? ev.at - grace : 0;
        Hash mature = lce::endorsement_target(chain, parent, current_epoch_, ctx_, horizon);
        if (mature != epoch_genesis_sentinel()) {
            Height mature_height = headers_.count(mature) ? headers_.at(mature).height : 0;
            Hash endorsed = endorsed_hash(b.header);
            Height endorsed_height =
                endorsed != epoch_genesis_sentinel() && headers_.count(endorsed)
                    ? headers_.at(endorsed).height
                    : 0;
            if (endorsed == epoch_genesis_sentinel() || endorsed_height < mature_height)
                fault = consensus::ValidationFault::ConflictingEndorsement;
        }
    }

    // The per-height lock keeps one honest vote per height while the voted
    // candidate is alive; a discarded block, or one that never prepared
    // before a view change, releases it (the dead block can no longer be
    // endorsed or finalized).
    bool conflicting_lock = false;
    if (policy.role == Role::Honest) {
        auto& locks = vote_locks_[ev.node];
        auto it = locks.find(b.header.height);
        if (it != locks.end()) {
            const VoteLock& lock = it->second;
            if (lock.hash == ev.hash) return; // already voted this candidate
            const lce::BlockEntry* locked = chain.find(lock.hash);
            bool released = locked ? locked->status == BlockStatus::Discarded
                                   : lock.view < consensus_[ev.shard].view;
            conflicting_lock = !released;
        }
    }

    auto decision = consensus::cast_vote(policy, fault, conflicting_lock);
    if (decision == consensus::VoteDecision::Vote) {
        if (policy.role == Role::Honest)
            vote_locks_[ev.node][b.header.height] = VoteLock{ev.hash, b.header.view};
        Event vote;
        vote.kind = EvKind::VoteArrival;
        vote.shard = ev.shard;
        vote.node = ev.node;
        vote.epoch = current_epoch_;
        vote.hash = ev.hash;
        vote.at = ev.at + net_delay(ev.shard, ev.shard, ev.at);
        push_event(std::move(vote));
    } else if (consensus::endorsement_fault(fault) && policy.role != Role::Byzantine) {
        auto& rejects = endorse_rejects_[ev.hash];
        rejects.insert(ev.node);
        if (rejects.size() >= quorum_size(cfg_.shard_size) && !reject_vc_done_.count(ev.hash)) {
            reject_vc_done_.insert(ev.hash);
            Event vc;
            vc.kind = EvKind::EndorseRejectQuorum;
            vc.shard = ev.shard;
            vc.hash = ev.hash;
            vc.at = ev.at;
            push_event(std::move(vc));
        }
    }
}

void World::handle_vote(const Event& ev) {
    if (ev.epoch != current_epoch_) return;
    auto& st = consensus_[ev.shard];
    auto& chain = chains_[ev.shard];
    if (chain.known(ev.hash)) return; // already prepared
    const Block* voted = block_of(ev.hash);
    if (!voted || voted->header.view != st.view) return; // vote for a dead view
    auto& votes = st.pending_votes[ev.hash];
    votes.insert(ev.node);
    if (consensus::tally(votes, st) != consensus::TallyResult::Prepared) return;

    // A quorum completed by stale votes is void once the branch has lost: the
    // parent must still extend the finalized chain.
    const Block* b = block_of(ev.hash);
    if (!b) return;
    const lce::BlockEntry* parent = chain.find(b->header.parent);
    if (!parent || parent->status == BlockStatus::Discarded) return;
    if (!chain.is_ancestor(chain.latest_finalized, b->header.parent)) return;

    on_prepared(ev.hash, ev.shard, ev.at);
}

void World::on_prepared(const Hash& h, ShardId shard, Tick now) {
    auto& st = consensus_[shard];
    auto& chain = chains_[shard];
    Block& block = all_blocks_.at(h);

    std::set<NodeId> cert;
    for (NodeId v : st.pending_votes[h])
        if (st.is_member(v)) cert.insert(v);
    block.header.quorum_cert = cert;

    headers_[h] = block.header;

    // Two live conflicting quorums may only share malicious voters; an honest
    // node inside both certificates would falsify the vote model.
    for (const auto& [other, entry] : chain.blocks) {
        if (entry.status != BlockStatus::Prepared) continue;
        if (entry.header.height != block.header.height || other == h) continue;
        for (NodeId v : cert) {
            if (entry.header.quorum_cert.count(v) && policies_[v].role == Role::Honest) {
                report_.audit.safety = false;
                record_violation("honest double vote across a live fork at shard " +
                                 std::to_string(shard));
            }
        }
    }

    chain.insert_prepared(block.header);
    bool applied = ledgers_[shard].apply_block(h, block.header.parent, block.body, true);
    assert(applied);
    (void)applied;

    std::set<OriginRef> credits;
    for (const auto& tx : block.body)
        if (tx.kind == TxKind::CrossDestCredit && tx.origin_ref) credits.insert(*tx.origin_ref);
    if (!credits.empty()) block_credits_[h] = std::move(credits);

    trace_.push_back({now, shard, h, BlockStatus::Prepared, false, BlockStatus::Prepared, Hash{}});
    report_.blocks_prepared++;

    last_progress_[shard] = now;
    st.vc_deadline = now + cfg_.vc_timeout;
    Event vc;
    vc.kind = EvKind::VcTimeout;
    vc.at = st.vc_deadline;
    vc.shard = shard;
    vc.deadline = st.vc_deadline;
    push_event(std::move(vc));

    // Endorsement-list completion may finalize a block in the owner shard.
    auto finalization = lce::on_header_prepared(block.header, ctx_);
    if (finalization) {
        if (finalization->conflict_with_finalized) {
            report_.audit.safety = false;
            record_violation("complete endorsement chain for a discarded block at shard " +
                             std::to_string(shard));
        } else {
            ShardId owner = cfg_.group_size == 1 ? shard : layout_.successor(shard);
            apply_finalization(*finalization, owner, now);
        }
    }

    // Every honest or a-b-c voter forwards the header to the successor shard.
    for (auto [sender, dest] : lce::route_header(block.header, cfg_.shard_size, layout_)) {
        if (!policies_[sender].preserves_liveness()) continue;
        Event arrival;
        arrival.kind = EvKind::HeaderArrival;
        arrival.shard = dest;
        arrival.node = sender;
        arrival.header = block.header;
        arrival.hash = h;
        arrival.at = now + net_delay(shard, dest, now);
        push_event(std::move(arrival));
    }

    Event wake;
    wake.kind = EvKind::ProposeWake;
    wake.at = now + 1;
    wake.shard = shard;
    push_event(std::move(wake));
}

void World::apply_finalization(const lce::FinalizationEvent& ev, ShardId owner, Tick now) {
    finalization_log_.push_back({now, owner, ev});
    auto& chain = chains_[owner];
    Hash witness_hash = content_hash(ev.witness);

    ledgers_[owner].finalize_chain(ev.finalized);

    for (const auto& bh : ev.finalized) {
        trace_.push_back({now, owner, bh, BlockStatus::Prepared, true, BlockStatus::Finalized,
                          witness_hash});
        report_.blocks_finalized++;
        frame_blocks_[owner]++;

        auto& fin_at = finalized_at_height_[owner];
        const lce::BlockEntry* e = chain.find(bh);
        auto [it, inserted] = fin_at.emplace(e->header.height, bh);
        if (!inserted && it->second != bh) {
            report_.audit.safety = false;
            record_violation("conflicting finalization at shard " + std::to_string(owner) +
                             " height " + std::to_string(e->header.height));
        }
    }

    // Confirm transactions and emit relays, oldest block first.
    for (size_t i = 0; i < ev.finalized.size(); ++i) {
        const Hash& bh = ev.finalized[i];
        const Block* blk = block_of(bh);
        if (!blk) continue;
        for (size_t ti = 0; ti < blk->body.size(); ++ti) {
            const Transaction& tx = blk->body[ti];
            Hash th = tx_hash(tx);
            if (!confirmed_txs_.insert(th).second) continue;
            Tick submitted;
            if (tx.kind == TxKind::CrossDestCredit && tx.origin_ref &&
                relay_submit_.count(*tx.origin_ref)) {
                submitted = relay_submit_.at(*tx.origin_ref);
            } else {
                auto sit = submit_tick_.find(th);
                submitted = sit != submit_tick_.end() ? sit->second : now;
            }
            double latency = double(now - submitted);
            frame_latencies_[owner].push_back(latency);
            latency_log_.push_back(latency);
            frame_txs_[owner]++;
            report_.txs_confirmed++;

            if (tx.kind == TxKind::CrossSourceDebit) {
                in_flight_ += tx.amount;
                OriginRef ref{bh, uint32_t(ti)};
                relay_submit_[ref] = submitted;
            } else if (tx.kind == TxKind::CrossDestCredit && tx.origin_ref) {
                in_flight_ -= tx.amount;
                credits_settled_.insert(*tx.origin_ref);
                credit_pool_[owner].erase(*tx.origin_ref);
            }
        }

        // Relays carry the ancestry from the block to the directly finalized
        // descendant plus the witness header.
        bool has_debit = false;
        for (const auto& tx : blk->body)
            if (tx.kind == TxKind::CrossSourceDebit) { has_debit = true; break; }
        if (has_debit) {
            std::vector<BlockHeader> suffix;
            for (size_t j = i; j < ev.finalized.size(); ++j)
                suffix.push_back(headers_.at(ev.finalized[j]));
            for (auto& relay : emit_cross_shard_relays(*blk, suffix, ev.witness)) {
                ShardId dest = shard_of_account(relay.tx.to, num_shards_);
                report_.relays_emitted++;
                emitted_relays_.push_back(relay);
                Event arrival;
                arrival.kind = EvKind::RelayArrival;
                arrival.shard = dest;
                arrival.relay = std::move(relay);
                arrival.at = now + net_delay(owner, dest, now);
                push_event(std::move(arrival));
            }
        }
    }

    for (const auto& dh : ev.discarded) {
        trace_.push_back({now, owner, dh, BlockStatus::Prepared, true, BlockStatus::Discarded,
                          witness_hash});
        report_.blocks_discarded++;
        ledgers_[owner].rollback_block(dh);
    }
    if (!ev.discarded.empty()) {
        // Discards may have pruned the owner's tip; let its leader rebuild.
        Event wake;
        wake.kind = EvKind::ProposeWake;
        wake.at = now + 1;
        wake.shard = owner;
        push_event(std::move(wake));
    }

    audit_conservation(now);
}

void World::handle_header_arrival(const Event& ev) {
    const BlockHeader& h = ev.header;
    const simnet::EpochEntry* entry = registry_.get(h.epoch);
    if (!entry) return;
    auto key = std::make_pair(h.shard, h.epoch);
    auto mit = member_sets_.find(key);
    if (mit == member_sets_.end()) return;
    uint32_t valid = 0;
    for (NodeId v : h.quorum_cert)
        if (mit->second.count(v)) ++valid;
    if (valid < quorum_size(cfg_.shard_size)) return; // not a prepared header

    if (layout_.predecessor(ev.shard) == h.shard) chains_[ev.shard].inbox_add(ev.hash, ev.at);

    local_finality_check(h, ev.shard);
}

void World::local_finality_check(const BlockHeader& h, ShardId dest) {
    // An owner-shard node deriving finalization from a received witness must
    // agree with the observer.
    if (cfg_.group_size <= 1) return;
    if (h.endorsement_list.size() != size_t(cfg_.group_size) - 1) return;
    if (layout_.successor(h.shard) != dest) return;
    for (const auto& e : h.endorsement_list) {
        auto it = headers_.find(e);
        if (it == headers_.end() || it->second.epoch != h.epoch) return;
    }
    const Hash& target = h.endorsement_list.front();
    const lce::BlockEntry* e = chains_[dest].find(target);
    if (!e) return;
    if (e->status == BlockStatus::Discarded) {
        report_.audit.local_consistency = false;
        record_violation("node-level finalization diverges from observer at shard " +
                         std::to_string(dest));
    }
}

void World::handle_relay_arrival(const Event& ev) {
    auto members = [this](ShardId s, Epoch e) -> const std::set<NodeId>* {
        auto it = member_sets_.find({s, e});
        return it == member_sets_.end() ? nullptr : &it->second;
    };
    RelayVerdict v = relay_ledger_.accept(ev.relay, members, cfg_.shard_size, cfg_.group_size);
    if (v == RelayVerdict::Deposit) {
        report_.relays_deposited++;
        OriginRef ref{ev.relay.proof.subject, ev.relay.tx_index};
        if (!credits_settled_.count(ref)) {
            Transaction credit;
            credit.kind = TxKind::CrossDestCredit;
            credit.from = ev.relay.tx.from;
            credit.to = ev.relay.tx.to;
            credit.amount = ev.relay.tx.amount;
            credit.origin_ref = ref;
            Tick submitted =
                relay_submit_.count(ref) ? relay_submit_.at(ref) : ev.at;
            credit_pool_[ev.shard][ref] = PendingCredit{credit, submitted};
        }
    } else {
        report_.relays_rejected++;
    }
}

void World::handle_vc_timeout(const Event& ev) {
    auto& st = consensus_[ev.shard];
    if (ev.deadline != st.vc_deadline) return; // re-armed since
    bool rotated = consensus::trigger_view_change(st, live_member_count(ev.shard), ev.at,
                                                  cfg_.vc_timeout);
    if (rotated) {
        report_.view_changes++;
        st.pending_votes.clear(); // votes of unprepared candidates die with the view
        Event wake;
        wake.kind = EvKind::ProposeWake;
        wake.at = ev.at + 1;
        wake.shard = ev.shard;
        push_event(std::move(wake));
    }
    Event next;
    next.kind = EvKind::VcTimeout;
    next.at = st.vc_deadline;
    next.shard = ev.shard;
    next.deadline = st.vc_deadline;
    push_event(std::move(next));
}

void World::handle_endorse_reject(const Event& ev) {
    auto& st = consensus_[ev.shard];
    bool rotated = consensus::trigger_view_change(st, live_member_count(ev.shard), ev.at,
                                                  cfg_.vc_timeout);
    if (rotated) {
        report_.view_changes++;
        st.pending_votes.clear();
        Event wake;
        wake.kind = EvKind::ProposeWake;
        wake.at = ev.at + 1;
        wake.shard = ev.shard;
        push_event(std::move(wake));
    }
}

void World::handle_epoch_boundary(const Event& ev) {
    start_epoch(current_epoch_ + 1, ev.at);
}

uint32_t World::live_member_count(ShardId shard) const {
    uint32_t live = 0;
    for (NodeId n : consensus_.at(shard).members)
        if (policies_[n].preserves_liveness()) ++live;
    return live;
}

void World::audit_conservation(Tick now) {
    uint64_t total = in_flight_;
    for (const auto& [s, ledger] : ledgers_) total += ledger.total_balance();
    if (total != genesis_total_) {
        report_.audit.conservation = false;
        record_violation("conservation broken at tick " + std::to_string(now) + ": " +
                         std::to_string(total) + " != " + std::to_string(genesis_total_));
    }
}

void World::record_violation(std::string what) {
    if (report_.audit.violations.size() < 64) report_.audit.violations.push_back(std::move(what));
}

void World::flush_frames_until(Tick t) {
    while (frame_start_ + cfg_.frame_ticks <= t) {
        Tick end = frame_start_ + cfg_.frame_ticks;
        for (ShardId s = 0; s < num_shards_; ++s) {
            MetricsRow row;
            row.tick = end;
            row.shard = s;
            row.finalized_blocks = frame_blocks_[s];
            row.finalized_txs = frame_txs_[s];
            auto& lat = frame_latencies_[s];
            if (!lat.empty()) {
                double sum = 0;
                for (double v : lat) sum += v;
                row.mean_latency = sum / double(lat.size());
                row.p99_latency = percentile(lat, 0.99);
            }
            metrics_.push_back(row);
            frame_blocks_[s] = 0;
            frame_txs_[s] = 0;
            lat.clear();
        }
        frame_start_ = end;
    }
}

void World::flush_windows_until(Tick t) {
    while (next_window_ <= t && next_window_ <= cfg_.run_ticks) {
        for (ShardId s = 0; s < num_shards_; ++s)
            window_heights_[s].push_back(chains_[s].latest_finalized_height);
        next_window_ += cfg_.window_ticks;
    }
}

RunReport run_scenario_to_dir(const ScenarioConfig& cfg, const std::string& out_dir) {
    namespace fs = std::filesystem;
    fs::create_directories(out_dir);
    World world(cfg);
    RunReport report = world.run();
    auto write = [&](const std::string& name, const std::string& content) {
        std::ofstream out(fs::path(out_dir) / name, std::ios::binary);
        out << content;
    };
    write("report.json", report.to_json());
    write("metrics.csv", metrics_to_csv(world.metrics()));
    write("trace.csv", trace_to_csv(world.trace()));
    return report;
}

} // namespace spiral::sim
