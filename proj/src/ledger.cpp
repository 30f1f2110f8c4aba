#include "spiral/ledger.hpp"

#include <cassert>
#include <stdexcept>

namespace spiral {

std::vector<uint8_t> encode_tx(const Transaction& tx) {
    Encoder e;
    e.put_u8(uint8_t(tx.kind));
    e.put_bytes(std::span<const uint8_t>(tx.from.data(), tx.from.size()));
    e.put_bytes(std::span<const uint8_t>(tx.to.data(), tx.to.size()));
    e.put_u64(tx.amount);
    e.put_u64(tx.nonce);
    if (tx.origin_ref) {
        e.put_u8(1);
        e.put_hash(tx.origin_ref->source_block);
        e.put_u32(tx.origin_ref->tx_index);
    } else {
        e.put_u8(0);
    }
    if (e.buf.size() > kTxWireSize) throw std::length_error("transaction exceeds wire size");
    e.buf.resize(kTxWireSize, 0);
    return std::move(e.buf);
}

Hash tx_hash(const Transaction& tx) { return sha256(encode_tx(tx)); }

namespace {

Hash combine(const Hash& l, const Hash& r) {
    Encoder e;
    e.put_hash(l);
    e.put_hash(r);
    return e.digest();
}

std::vector<Hash> leaf_hashes(std::span<const Transaction> txs) {
    std::vector<Hash> leaves;
    leaves.reserve(txs.size());
    for (const auto& tx : txs) leaves.push_back(tx_hash(tx));
    return leaves;
}

} // namespace

Hash merkle_root(std::span<const Transaction> txs) {
    if (txs.empty()) return sha256(std::string(""));
    std::vector<Hash> level = leaf_hashes(txs);
    while (level.size() > 1) {
        if (level.size() % 2 != 0) level.push_back(level.back());
        std::vector<Hash> next;
        next.reserve(level.size() / 2);
        for (size_t i = 0; i < level.size(); i += 2) next.push_back(combine(level[i], level[i + 1]));
        level.swap(next);
    }
    return level[0];
}

MerklePath merkle_prove(std::span<const Transaction> txs, size_t index) {
    if (txs.empty()) throw std::invalid_argument("cannot prove against an empty body");
    if (index >= txs.size()) throw std::out_of_range("transaction index out of range");
    MerklePath path;
    std::vector<Hash> level = leaf_hashes(txs);
    size_t pos = index;
    while (level.size() > 1) {
        if (level.size() % 2 != 0) level.push_back(level.back());
        size_t sibling = pos ^ 1;
        path.push_back({level[sibling], sibling > pos});
        std::vector<Hash> next;
        next.reserve(level.size() / 2);
        for (size_t i = 0; i < level.size(); i += 2) next.push_back(combine(level[i], level[i + 1]));
        level.swap(next);
        pos /= 2;
    }
    return path;
}

bool merkle_verify(const Hash& root, const MerklePath& path, const Transaction& tx) {
    Hash acc = tx_hash(tx);
    for (const auto& step : path)
        acc = step.sibling_on_right ? combine(acc, step.sibling) : combine(step.sibling, acc);
    return acc == root;
}

bool validate_tx(const StateView& pre, const Transaction& tx, bool credit_allowed) {
    switch (tx.kind) {
    case TxKind::IntraTransfer:
    case TxKind::CrossSourceDebit: {
        AccountRecord from = pre.get(tx.from);
        return from.balance >= tx.amount && tx.nonce == from.nonce + 1;
    }
    case TxKind::CrossDestCredit:
        return credit_allowed && tx.origin_ref.has_value();
    }
    return false;
}

bool apply_tx(const StateView& pre, const Transaction& tx, AccountMap& writes,
              bool credit_allowed) {
    auto read = [&](const Address& a) {
        auto it = writes.find(a);
        return it != writes.end() ? it->second : pre.get(a);
    };
    switch (tx.kind) {
    case TxKind::IntraTransfer: {
        AccountRecord from = read(tx.from);
        if (from.balance < tx.amount || tx.nonce != from.nonce + 1) return false;
        from.balance -= tx.amount;
        from.nonce = tx.nonce;
        writes[tx.from] = from;
        AccountRecord to = read(tx.to);
        to.balance += tx.amount;
        writes[tx.to] = to;
        return true;
    }
    case TxKind::CrossSourceDebit: {
        AccountRecord from = read(tx.from);
        if (from.balance < tx.amount || tx.nonce != from.nonce + 1) return false;
        from.balance -= tx.amount;
        from.nonce = tx.nonce;
        writes[tx.from] = from;
        return true;
    }
    case TxKind::CrossDestCredit: {
        if (!credit_allowed || !tx.origin_ref) return false;
        AccountRecord to = read(tx.to);
        to.balance += tx.amount;
        writes[tx.to] = to;
        return true;
    }
    }
    return false;
}

uint64_t ShardLedger::total_balance() const {
    uint64_t sum = 0;
    for (const auto& [_, rec] : canonical_) sum += rec.balance;
    return sum;
}

const AccountRecord* ShardLedger::resolve(const Hash& block_hash, const Address& a) const {
    Hash cur = block_hash;
    while (!cur.is_zero()) {
        auto it = overlays_.find(cur);
        if (it == overlays_.end()) break; // overlay folded into canonical
        auto w = it->second.writes.find(a);
        if (w != it->second.writes.end()) return &w->second;
        cur = it->second.parent;
    }
    auto c = canonical_.find(a);
    return c != canonical_.end() ? &c->second : nullptr;
}

StateView ShardLedger::view_at(const Hash& block_hash) const {
    return StateView([this, block_hash](const Address& a) { return resolve(block_hash, a); });
}

bool ShardLedger::apply_block(const Hash& block_hash, const Hash& parent_hash,
                              std::span<const Transaction> txs, bool credit_allowed) {
    StateView pre = view_at(parent_hash);
    AccountMap writes;
    for (const auto& tx : txs)
        if (!apply_tx(pre, tx, writes, credit_allowed)) return false;
    overlays_[block_hash] = Overlay{parent_hash, std::move(writes)};
    return true;
}

void ShardLedger::rollback_block(const Hash& block_hash) { overlays_.erase(block_hash); }

void ShardLedger::finalize_chain(std::span<const Hash> chain) {
    for (const auto& h : chain) {
        auto it = overlays_.find(h);
        if (it == overlays_.end()) continue; // already canonical (epoch-spanning replays)
        for (const auto& [addr, rec] : it->second.writes) canonical_[addr] = rec;
        overlays_.erase(it);
    }
}

const char* to_string(RelayVerdict v) {
    switch (v) {
    case RelayVerdict::Deposit: return "deposit";
    case RelayVerdict::BadQuorum: return "bad_quorum";
    case RelayVerdict::BadMerkle: return "bad_merkle";
    case RelayVerdict::BadFinality: return "bad_finality";
    case RelayVerdict::Duplicate: return "duplicate";
    }
    return "?";
}

namespace {

void encode_header_with_cert(Encoder& e, const BlockHeader& h) {
    auto bytes = encode_header(h);
    e.put_u32(uint32_t(bytes.size()));
    e.put_bytes(bytes);
    e.put_u32(uint32_t(h.quorum_cert.size()));
    for (NodeId id : h.quorum_cert) e.put_u32(id);
}

bool quorum_valid(const BlockHeader& h, const MembershipFn& members, uint32_t shard_size) {
    const std::set<NodeId>* shard = members(h.shard, h.epoch);
    if (!shard) return false;
    uint32_t count = 0;
    for (NodeId id : h.quorum_cert)
        if (shard->count(id)) ++count;
    return count >= quorum_size(shard_size);
}

} // namespace

std::vector<uint8_t> encode_relay(const RelayMessage& relay) {
    Encoder e;
    e.put_bytes(encode_tx(relay.tx));
    e.put_u32(relay.tx_index);
    e.put_hash(relay.proof.subject);
    e.put_u32(uint32_t(relay.proof.merkle_path.size()));
    for (const auto& step : relay.proof.merkle_path) {
        e.put_hash(step.sibling);
        e.put_u8(step.sibling_on_right ? 1 : 0);
    }
    e.put_u32(uint32_t(relay.proof.ancestry_headers.size()));
    for (const auto& h : relay.proof.ancestry_headers) encode_header_with_cert(e, h);
    encode_header_with_cert(e, relay.proof.witness_header);
    return std::move(e.buf);
}

RelayVerdict RelayLedger::accept(const RelayMessage& relay, const MembershipFn& members,
                                 uint32_t shard_size, uint32_t group_size) {
    const FinalityProof& proof = relay.proof;
    if (proof.ancestry_headers.empty()) return RelayVerdict::BadFinality;

    for (const auto& h : proof.ancestry_headers)
        if (!quorum_valid(h, members, shard_size)) return RelayVerdict::BadQuorum;
    if (!quorum_valid(proof.witness_header, members, shard_size)) return RelayVerdict::BadQuorum;

    const BlockHeader& subject_header = proof.ancestry_headers.front();
    if (content_hash(subject_header) != proof.subject) return RelayVerdict::BadFinality;
    if (!merkle_verify(subject_header.tx_root, proof.merkle_path, relay.tx))
        return RelayVerdict::BadMerkle;

    // All proof headers must sit in one epoch; endorsements never span epochs.
    Epoch epoch = proof.witness_header.epoch;
    for (const auto& h : proof.ancestry_headers)
        if (h.epoch != epoch) return RelayVerdict::BadFinality;

    const BlockHeader& descendant = proof.ancestry_headers.back();
    Hash descendant_hash = content_hash(descendant);
    if (!verify_ancestry(descendant_hash, proof.subject, proof.ancestry_headers))
        return RelayVerdict::BadFinality;

    if (group_size == 1) {
        // Degenerate groups self-finalize: the witness is the block itself.
        if (content_hash(proof.witness_header) != descendant_hash) return RelayVerdict::BadFinality;
    } else {
        if (proof.witness_header.endorsement_list.size() != size_t(group_size) - 1)
            return RelayVerdict::BadFinality;
        if (proof.witness_header.endorsement_list.front() != descendant_hash)
            return RelayVerdict::BadFinality;
    }

    OriginRef ref{proof.subject, relay.tx_index};
    if (credited_.count(ref)) return RelayVerdict::Duplicate;
    credited_.insert(ref);
    return RelayVerdict::Deposit;
}

std::vector<RelayMessage> emit_cross_shard_relays(const Block& finalized_block,
                                                  std::span<const BlockHeader> descendant_chain,
                                                  const BlockHeader& witness_header) {
    assert(!descendant_chain.empty());
    std::vector<RelayMessage> out;
    Hash subject = content_hash(finalized_block.header);
    for (size_t i = 0; i < finalized_block.body.size(); ++i) {
        const Transaction& tx = finalized_block.body[i];
        if (tx.kind != TxKind::CrossSourceDebit) continue;
        RelayMessage relay;
        relay.tx = tx;
        relay.tx_index = uint32_t(i);
        relay.proof.subject = subject;
        relay.proof.merkle_path = merkle_prove(finalized_block.body, i);
        relay.proof.ancestry_headers.assign(descendant_chain.begin(), descendant_chain.end());
        relay.proof.witness_header = witness_header;
        out.push_back(std::move(relay));
    }
    return out;
}

} // namespace spiral
