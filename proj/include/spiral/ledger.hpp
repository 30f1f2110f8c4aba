#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <set>
#include <span>
#include <vector>

#include "spiral/core.hpp"

namespace spiral {

// Wire size every transaction is padded to.
constexpr size_t kTxWireSize = 512;

std::vector<uint8_t> encode_tx(const Transaction& tx);
Hash tx_hash(const Transaction& tx);

// --- Merkle commitments over block bodies ---------------------------------

struct MerkleStep {
    Hash sibling{};
    bool sibling_on_right = false;
};

using MerklePath = std::vector<MerkleStep>;

// Binary tree over H(tx bytes) leaves; an odd level duplicates its last node.
// The empty body commits to H("").
Hash merkle_root(std::span<const Transaction> txs);
MerklePath merkle_prove(std::span<const Transaction> txs, size_t index);
bool merkle_verify(const Hash& root, const MerklePath& path, const Transaction& tx);

// --- Account state ----------------------------------------------------------

struct AccountRecord {
    uint64_t balance = 0;
    uint64_t nonce = 0;

    auto operator<=>(const AccountRecord&) const = default;
};

using AccountMap = std::map<Address, AccountRecord>;

// Read-only view resolving an address through a chain of speculative
// overlays down to the canonical state.
class StateView {
public:
    using Lookup = std::function<const AccountRecord*(const Address&)>;

    explicit StateView(Lookup lookup) : lookup_(std::move(lookup)) {}

    AccountRecord get(const Address& a) const {
        const AccountRecord* r = lookup_(a);
        return r ? *r : AccountRecord{};
    }

private:
    Lookup lookup_;
};

// Single-transaction admission check against a pre-state. Credits are only
// admissible through the relay path, so a bare credit fails here unless the
// caller vouches for it.
bool validate_tx(const StateView& pre, const Transaction& tx, bool credit_allowed = false);

// Applies one transaction to a mutable account map holding the block's
// speculative writes. Returns false (map unspecified) on an invalid tx.
bool apply_tx(const StateView& pre, const Transaction& tx, AccountMap& writes,
              bool credit_allowed = false);

// Per-shard ledger: canonical accounts plus one overlay per prepared block.
class ShardLedger {
public:
    void set_genesis(AccountMap alloc) { canonical_ = std::move(alloc); }
    const AccountMap& canonical() const { return canonical_; }

    uint64_t total_balance() const;

    // View of the state after `block_hash` (zero hash: canonical only).
    StateView view_at(const Hash& block_hash) const;

    // Validates `txs` in order against the parent view and, on success,
    // records the block's overlay. Credits are admitted when
    // `credit_allowed` vouches for them (relay-verified).
    bool apply_block(const Hash& block_hash, const Hash& parent_hash,
                     std::span<const Transaction> txs, bool credit_allowed = false);

    // Drops a discarded block's speculative writes.
    void rollback_block(const Hash& block_hash);

    bool has_overlay(const Hash& block_hash) const { return overlays_.count(block_hash) != 0; }

    // Folds the overlays of an ancestor-first finalized chain into the
    // canonical state and drops them.
    void finalize_chain(std::span<const Hash> chain);

private:
    struct Overlay {
        Hash parent{};
        AccountMap writes;
    };

    const AccountRecord* resolve(const Hash& block_hash, const Address& a) const;

    AccountMap canonical_;
    std::map<Hash, Overlay> overlays_;
};

// --- Cross-shard transfer relays -------------------------------------------

// Merkle path + ancestry + witness showing a source block is finalized.
struct FinalityProof {
    Hash subject{};                          // block the transaction lives in
    MerklePath merkle_path;                  // tx -> subject.tx_root
    std::vector<BlockHeader> ancestry_headers; // subject..directly-finalized descendant
    BlockHeader witness_header;              // header whose preparation finalized it
};

struct RelayMessage {
    Transaction tx; // the CrossSourceDebit being settled
    uint32_t tx_index = 0;
    FinalityProof proof;
};

std::vector<uint8_t> encode_relay(const RelayMessage& relay);

enum class RelayVerdict : uint8_t { Deposit, BadQuorum, BadMerkle, BadFinality, Duplicate };

const char* to_string(RelayVerdict v);

// Membership oracle for quorum checks: shard member set for (shard, epoch).
using MembershipFn = std::function<const std::set<NodeId>*(ShardId, Epoch)>;

// Tracks settled (source block, index) pairs so re-delivered relays cannot
// double-credit.
class RelayLedger {
public:
    RelayVerdict accept(const RelayMessage& relay, const MembershipFn& members,
                        uint32_t shard_size, uint32_t group_size);

    bool credited(const OriginRef& ref) const { return credited_.count(ref) != 0; }

private:
    std::set<OriginRef> credited_;
};

// One relay per CrossSourceDebit of a finalized block, addressed to the
// destination account's shard. `descendant_chain` is the finalized
// ancestor-first chain segment from this block to the directly finalized one.
std::vector<RelayMessage> emit_cross_shard_relays(const Block& finalized_block,
                                                  std::span<const BlockHeader> descendant_chain,
                                                  const BlockHeader& witness_header);

} // namespace spiral
