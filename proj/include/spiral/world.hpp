#pragma once

#include <map>
#include <optional>
#include <queue>
#include <set>
#include <string>
#include <vector>

#include "spiral/consensus.hpp"
#include "spiral/core.hpp"
#include "spiral/lce.hpp"
#include "spiral/ledger.hpp"
#include "spiral/scenario.hpp"
#include "spiral/simnet.hpp"

namespace spiral::sim {

struct TraceRow {
    Tick tick = 0;
    ShardId shard = 0;
    Hash block{};
    BlockStatus old_status = BlockStatus::Prepared; // preparation rows use new only
    bool has_old = false;
    BlockStatus new_status = BlockStatus::Prepared;
    Hash witness{}; // zero for preparation rows
};

std::string trace_to_csv(const std::vector<TraceRow>& rows);

struct MetricsRow {
    Tick tick = 0; // frame end
    ShardId shard = 0;
    uint32_t finalized_blocks = 0;
    uint32_t finalized_txs = 0;
    std::optional<double> mean_latency;
    std::optional<double> p99_latency;
};

std::string metrics_to_csv(const std::vector<MetricsRow>& rows);

struct AuditOutcome {
    bool safety = true;
    bool conservation = true;
    bool liveness = true;       // only meaningful when the scenario checks it
    bool delivery_bound = true; // post-GST delta respected
    bool local_consistency = true;
    std::vector<std::string> violations;

    bool pass(bool require_liveness) const {
        return safety && conservation && delivery_bound && local_consistency &&
               (!require_liveness || liveness);
    }
};

struct RunReport {
    std::string scenario;
    uint64_t seed = 0;
    Tick run_ticks = 0;
    uint64_t blocks_prepared = 0;
    uint64_t blocks_finalized = 0;
    uint64_t blocks_discarded = 0;
    uint64_t txs_confirmed = 0;
    uint64_t relays_emitted = 0;
    uint64_t relays_deposited = 0;
    uint64_t relays_rejected = 0;
    uint64_t view_changes = 0;
    std::vector<Height> finalized_height; // per shard
    double mean_tps = 0.0;                // confirmed txs per tick
    std::optional<double> mean_latency;
    std::optional<double> p99_latency;
    AuditOutcome audit;
    bool liveness_required = true;

    bool ok() const { return audit.pass(liveness_required); }
    std::string to_json() const;
};

// Record of one finalization for tests and relay construction.
struct FinalizationRecord {
    Tick tick = 0;
    ShardId owner_shard = 0;
    lce::FinalizationEvent event;
};

class World {
public:
    explicit World(ScenarioConfig cfg);

    RunReport run();

    const std::vector<TraceRow>& trace() const { return trace_; }
    const std::vector<MetricsRow>& metrics() const { return metrics_; }
    const std::vector<FinalizationRecord>& finalizations() const { return finalization_log_; }
    const lce::ShardChainState& chain(ShardId s) const { return chains_.at(s); }
    const std::map<Hash, BlockHeader>& headers() const { return headers_; }
    const Block* block_of(const Hash& h) const;
    const std::vector<consensus::NodePolicy>& policies() const { return policies_; }
    const simnet::EpochRegistry& registry() const { return registry_; }
    uint64_t genesis_total() const { return genesis_total_; }

    // Test hook: deliver a stored relay message again, as an adversarial
    // re-delivery would.
    RelayVerdict redeliver_relay(const RelayMessage& relay);
    const std::vector<RelayMessage>& emitted_relays() const { return emitted_relays_; }

private:
    enum class EvKind : uint8_t {
        Proposal,
        VoteArrival,
        HeaderArrival,
        RelayArrival,
        VcTimeout,
        EpochBoundary,
        TxArrival,
        ProposeWake,
        EndorseRejectQuorum,
    };

    struct Event {
        Tick at = 0;
        uint64_t seq = 0;
        EvKind kind = EvKind::ProposeWake;
        ShardId shard = 0;
        NodeId node = 0;
        Epoch epoch = 0;
        Hash hash{};
        Block block;
        BlockHeader header;
        RelayMessage relay;
        Transaction tx;
        Tick deadline = 0;
    };

    struct EventCmp {
        bool operator()(const Event& a, const Event& b) const {
            return a.at != b.at ? a.at > b.at : a.seq > b.seq;
        }
    };

    struct PendingCredit {
        Transaction tx;
        Tick source_submit = 0;
    };

    struct MempoolEntry {
        Transaction tx;
        Tick submitted = 0;
    };

    // setup
    void build_accounts();
    void assign_roles();
    void schedule_workload();
    void start_epoch(Epoch e, Tick now);

    // scheduling
    void push_event(Event ev);
    Tick net_delay(ShardId from, ShardId to, Tick now);
    void send_to_shard_members(EvKind kind, const Block& b, ShardId shard, Tick now);

    // handlers
    void handle_propose_wake(const Event& ev);
    void handle_proposal(const Event& ev);
    void handle_vote(const Event& ev);
    void handle_header_arrival(const Event& ev);
    void handle_relay_arrival(const Event& ev);
    void handle_vc_timeout(const Event& ev);
    void handle_endorse_reject(const Event& ev);
    void handle_epoch_boundary(const Event& ev);
    void handle_tx_arrival(const Event& ev);

    // protocol steps
    std::vector<Block> build_candidates(ShardId shard, NodeId leader, Tick now);
    Block assemble_block(ShardId shard, NodeId leader, const Hash& parent, uint64_t body_salt,
                         bool withhold_endorsement);
    void on_prepared(const Hash& h, ShardId shard, Tick now);
    void apply_finalization(const lce::FinalizationEvent& ev, ShardId owner, Tick now);
    bool credit_admissible(ShardId shard, const Hash& parent, const Transaction& tx) const;
    bool credit_in_branch(ShardId shard, Hash at, const OriginRef& ref) const;
    uint32_t live_member_count(ShardId shard) const;

    // audits and metrics
    void audit_conservation(Tick now);
    void record_violation(std::string what);
    void flush_frames_until(Tick t);
    void flush_windows_until(Tick t);
    void local_finality_check(const BlockHeader& h, ShardId dest);

    ScenarioConfig cfg_;
    GroupLayout layout_;
    uint32_t num_shards_ = 0;

    simnet::Rng rng_net_{0};
    simnet::Rng rng_workload_{0};
    simnet::Rng rng_roles_{0};

    std::priority_queue<Event, std::vector<Event>, EventCmp> queue_;
    uint64_t next_seq_ = 0;
    Tick now_ = 0;

    simnet::EpochRegistry registry_;
    Epoch current_epoch_ = 0;

    std::vector<consensus::NodePolicy> policies_;
    std::map<ShardId, consensus::ShardConsensusState> consensus_;
    std::map<std::pair<ShardId, Epoch>, std::set<NodeId>> member_sets_;
    std::map<ShardId, lce::ShardChainState> chains_;
    std::map<Hash, BlockHeader> headers_; // prepared headers, global observer view
    lce::GroupContext ctx_;
    std::map<Hash, Block> all_blocks_;
    std::map<Hash, std::set<OriginRef>> block_credits_;
    std::map<ShardId, std::map<Height, Hash>> finalized_at_height_;
    std::set<std::tuple<ShardId, Height, ViewNumber, Hash>> proposed_;

    struct VoteLock {
        Hash hash{};
        ViewNumber view = 0;
    };
    std::map<NodeId, std::map<Height, VoteLock>> vote_locks_;
    std::map<Hash, std::set<NodeId>> endorse_rejects_;
    std::set<Hash> reject_vc_done_;
    std::map<ShardId, Tick> last_progress_;

    std::map<ShardId, ShardLedger> ledgers_;
    RelayLedger relay_ledger_;
    std::map<ShardId, std::map<OriginRef, PendingCredit>> credit_pool_;
    std::set<OriginRef> credits_settled_;
    std::map<ShardId, std::vector<MempoolEntry>> mempools_;
    std::map<Hash, Tick> submit_tick_;   // by tx hash
    std::map<OriginRef, Tick> relay_submit_;
    std::set<Hash> confirmed_txs_;
    uint64_t in_flight_ = 0;
    uint64_t genesis_total_ = 0;

    std::vector<Address> accounts_;             // all accounts
    std::vector<uint64_t> account_balances_;    // genesis balances, by index
    std::vector<std::vector<size_t>> accounts_by_shard_;
    std::map<Address, uint64_t> next_nonce_;

    std::vector<TraceRow> trace_;
    std::vector<MetricsRow> metrics_;
    std::vector<FinalizationRecord> finalization_log_;
    std::vector<RelayMessage> emitted_relays_;
    std::vector<double> latency_log_;

    // frame accumulation
    Tick frame_start_ = 0;
    std::vector<uint32_t> frame_blocks_;
    std::vector<uint32_t> frame_txs_;
    std::vector<std::vector<double>> frame_latencies_;

    // liveness windows
    Tick next_window_ = 0;
    std::vector<std::vector<Height>> window_heights_; // per shard series

    RunReport report_;
    bool ran_ = false;
};

// Runs the scenario and writes report.json, metrics.csv, trace.csv under
// `out_dir`. Returns the report.
RunReport run_scenario_to_dir(const ScenarioConfig& cfg, const std::string& out_dir);

} // namespace spiral::sim
