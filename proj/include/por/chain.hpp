#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "por/codec.hpp"
#include "por/error.hpp"
#include "por/hash.hpp"
#include "por/transaction.hpp"

namespace por {

// Per-evidence digest plus the fields scoring needs. Keeping predictions and
// labels on-chain lets rankings be re-derived without the transaction bodies.
struct EvidenceSummary {
    Digest kappa_digest{};
    std::vector<double> y_hat;
    std::uint64_t y = 0;

    bool operator==(const EvidenceSummary&) const = default;
};

struct TxSummary {
    std::uint64_t participant_id = 0;
    std::uint64_t round = 0;
    std::uint64_t claimed_sample_count = 0;
    Digest tx_digest{};
    std::vector<EvidenceSummary> evidence;

    bool operator==(const TxSummary&) const = default;
};

// Consensus outcome for one participant in one round. rank is 1-based;
// 0 means the participant was not ranked (failed validation).
struct PorEntry {
    std::uint64_t participant_id = 0;
    bool validated = false;
    double reduced_score = 0.0;
    std::uint64_t rank = 0;
    double coefficient = 0.0;

    bool operator==(const PorEntry&) const = default;
};

struct PorRecord {
    std::vector<PorEntry> entries;

    bool operator==(const PorRecord&) const = default;
};

inline TxSummary make_summary(const Transaction& tx) {
    TxSummary s;
    s.participant_id = tx.participant_id;
    s.round = tx.round;
    s.claimed_sample_count = tx.claimed_sample_count;
    s.tx_digest = transaction_digest(tx);
    s.evidence.reserve(tx.evidence.size());
    for (const EvidenceTuple& ev : tx.evidence) {
        EvidenceSummary es;
        es.kappa_digest = datapoint_digest(ev.kappa);
        es.y_hat = ev.y_hat;
        es.y = ev.y;
        s.evidence.push_back(std::move(es));
    }
    return s;
}

// Whether a block keeps full transaction bodies or only their digests.
enum class BodyMode : std::uint8_t { inline_bodies = 0, digest_only = 1 };

// The hashed content of a block is always the summary form, independent of
// BodyMode, so dropping bodies later cannot change any hash.
struct Block {
    std::uint64_t index = 0;
    Digest prev_hash{};
    Digest payload_hash{};
    std::vector<TxSummary> summaries;
    PorRecord por;
    std::uint64_t timestamp = 0;  // logical round counter, not wall clock
    BodyMode mode = BodyMode::inline_bodies;
    std::vector<std::vector<std::uint8_t>> bodies;  // empty when digest_only

    bool operator==(const Block&) const = default;
};

inline void encode_digest(ByteWriter& w, const Digest& d) { w.put_bytes(d.data(), d.size()); }

inline Digest decode_digest(ByteReader& r) {
    Digest d;
    r.get_bytes(d.data(), d.size());
    return d;
}

inline void encode_summary(ByteWriter& w, const TxSummary& s) {
    w.put_u64(s.participant_id);
    w.put_u64(s.round);
    w.put_u64(s.claimed_sample_count);
    encode_digest(w, s.tx_digest);
    w.put_u64(s.evidence.size());
    for (const EvidenceSummary& es : s.evidence) {
        encode_digest(w, es.kappa_digest);
        encode_f64_list(w, es.y_hat);
        w.put_u64(es.y);
    }
}

inline TxSummary decode_summary(ByteReader& r) {
    TxSummary s;
    s.participant_id = r.get_u64();
    s.round = r.get_u64();
    s.claimed_sample_count = r.get_u64();
    s.tx_digest = decode_digest(r);
    const std::uint64_t n = r.get_count(32 + 8 + 8);
    s.evidence.resize(n);
    for (EvidenceSummary& es : s.evidence) {
        es.kappa_digest = decode_digest(r);
        es.y_hat = decode_f64_list(r);
        es.y = r.get_u64();
    }
    return s;
}

inline void encode_por_record(ByteWriter& w, const PorRecord& rec) {
    w.put_u64(rec.entries.size());
    for (const PorEntry& e : rec.entries) {
        w.put_u64(e.participant_id);
        w.put_u8(e.validated ? 1 : 0);
        w.put_f64(e.reduced_score);
        w.put_u64(e.rank);
        w.put_f64(e.coefficient);
    }
}

inline PorRecord decode_por_record(ByteReader& r) {
    PorRecord rec;
    const std::uint64_t n = r.get_count(8 + 1 + 8 + 8 + 8);
    rec.entries.resize(n);
    for (PorEntry& e : rec.entries) {
        e.participant_id = r.get_u64();
        const std::uint8_t flag = r.get_u8();
        if (flag > 1) throw DecodeError("validated flag must be 0 or 1");
        e.validated = flag == 1;
        e.reduced_score = r.get_f64();
        e.rank = r.get_u64();
        e.coefficient = r.get_f64();
    }
    return rec;
}

// The byte string the payload hash commits to.
inline std::vector<std::uint8_t> encode_canonical_payload(const std::vector<TxSummary>& summaries,
                                                          const PorRecord& por,
                                                          std::uint64_t timestamp) {
    ByteWriter w;
    w.put_u64(summaries.size());
    for (const TxSummary& s : summaries) encode_summary(w, s);
    encode_por_record(w, por);
    w.put_u64(timestamp);
    return w.take();
}

inline std::vector<std::uint8_t> header_bytes(const Block& b) {
    ByteWriter w;
    w.put_u64(b.index);
    encode_digest(w, b.prev_hash);
    encode_digest(w, b.payload_hash);
    return w.take();
}

// A block's identity is the hash of its header; the header commits to the
// payload through payload_hash.
inline Digest block_hash(const Block& b) { return sha256(header_bytes(b)); }

inline void encode_block(ByteWriter& w, const Block& b) {
    ByteWriter inner;
    inner.put_u64(b.index);
    encode_digest(inner, b.prev_hash);
    encode_digest(inner, b.payload_hash);
    inner.put_u8(static_cast<std::uint8_t>(b.mode));
    const auto payload = encode_canonical_payload(b.summaries, b.por, b.timestamp);
    inner.put_bytes(payload);
    if (b.mode == BodyMode::inline_bodies) {
        inner.put_u64(b.bodies.size());
        for (const auto& body : b.bodies) {
            inner.put_u64(body.size());
            inner.put_bytes(body);
        }
    }
    w.put_u64(inner.bytes().size());
    w.put_bytes(inner.bytes());
}

inline Block decode_block(ByteReader& outer) {
    const std::uint64_t len = outer.get_u64();
    if (len > outer.remaining()) throw DecodeError("block length exceeds input");
    std::vector<std::uint8_t> slice(len);
    outer.get_bytes(slice.data(), slice.size());
    ByteReader r(slice);

    Block b;
    b.index = r.get_u64();
    b.prev_hash = decode_digest(r);
    b.payload_hash = decode_digest(r);
    const std::uint8_t mode = r.get_u8();
    if (mode > 1) throw DecodeError("unknown block body mode");
    b.mode = static_cast<BodyMode>(mode);

    const std::uint64_t num_summaries = r.get_count(8 * 3 + 32 + 8);
    b.summaries.resize(num_summaries);
    for (TxSummary& s : b.summaries) s = decode_summary(r);
    b.por = decode_por_record(r);
    b.timestamp = r.get_u64();

    if (b.mode == BodyMode::inline_bodies) {
        const std::uint64_t num_bodies = r.get_count(8);
        b.bodies.resize(num_bodies);
        for (auto& body : b.bodies) {
            const std::uint64_t blen = r.get_count(1);
            body.resize(blen);
            r.get_bytes(body.data(), body.size());
        }
    }
    r.expect_end();
    return b;
}

// Append-only hash-linked log of rounds. Block index doubles as the round
// number.
class Chain {
public:
    explicit Chain(BodyMode mode = BodyMode::inline_bodies) : mode_(mode) {}

    std::size_t size() const { return blocks_.size(); }
    const Block& at(std::size_t i) const {
        if (i >= blocks_.size()) throw InvalidInput("chain: block index out of range");
        return blocks_[i];
    }
    const std::vector<Block>& blocks() const { return blocks_; }
    BodyMode mode() const { return mode_; }

    Digest tip_hash() const {
        if (blocks_.empty()) return zero_digest();
        return block_hash(blocks_.back());
    }

    // Transactions must arrive in strictly ascending participant order, all
    // stamped with the round this block will occupy, and the consensus record
    // must cover exactly the same participants. Refuses to extend a log whose
    // existing blocks no longer verify.
    const Block& append_block(const std::vector<Transaction>& txs, const PorRecord& por);

    // Full structural and cryptographic check of the log. Throws on the first
    // violation; the non-throwing form is verify_chain below.
    void verify() const;

    // Drops inline bodies from all blocks except the most recent `horizon`
    // ones. No hash changes: the hashed form never includes bodies.
    void prune(std::size_t horizon) {
        if (blocks_.size() <= horizon) return;
        const std::size_t cutoff = blocks_.size() - horizon;
        for (std::size_t i = 0; i < cutoff; ++i) {
            blocks_[i].mode = BodyMode::digest_only;
            blocks_[i].bodies.clear();
        }
    }

    std::vector<std::uint8_t> export_bytes() const {
        ByteWriter w;
        for (const Block& b : blocks_) encode_block(w, b);
        return w.take();
    }

    static Chain import_bytes(const std::vector<std::uint8_t>& bytes) {
        ByteReader r(bytes);
        Chain chain;
        while (r.remaining() > 0) chain.blocks_.push_back(decode_block(r));
        r.expect_end();
        if (!chain.blocks_.empty()) chain.mode_ = chain.blocks_.back().mode;
        return chain;
    }

private:
    BodyMode mode_;
    std::vector<Block> blocks_;
};

// Outcome of a full-chain check. When ok is false, first_bad_index names the
// earliest block that fails and reason says how.
struct VerifyResult {
    bool ok = true;
    std::uint64_t first_bad_index = 0;
    std::string reason;
};

// Checks every block: index sequence, timestamp, hash links, payload hash,
// and body/digest agreement. An empty chain is valid. Never throws.
inline VerifyResult verify_chain(const Chain& chain) {
    const std::vector<Block>& blocks = chain.blocks();
    const auto bad = [](std::uint64_t i, const char* why) {
        return VerifyResult{false, i, why};
    };
    for (std::size_t i = 0; i < blocks.size(); ++i) {
        const Block& b = blocks[i];
        if (b.index != i) return bad(i, "block index out of sequence");
        if (b.timestamp != i) return bad(i, "block timestamp does not match its round");
        const Digest want_prev = i == 0 ? zero_digest() : block_hash(blocks[i - 1]);
        if (b.prev_hash != want_prev) return bad(i, "previous-hash link broken");
        const auto payload = encode_canonical_payload(b.summaries, b.por, b.timestamp);
        if (sha256(payload) != b.payload_hash) return bad(i, "payload hash mismatch");
        if (b.summaries.empty()) return bad(i, "block carries no transactions");
        for (const TxSummary& s : b.summaries) {
            if (s.round != i) return bad(i, "summary round does not match block index");
        }
        if (b.mode == BodyMode::inline_bodies) {
            if (b.bodies.size() != b.summaries.size()) {
                return bad(i, "inline body count does not match summaries");
            }
            for (std::size_t t = 0; t < b.bodies.size(); ++t) {
                if (sha256(b.bodies[t]) != b.summaries[t].tx_digest) {
                    return bad(i, "inline body does not match its digest");
                }
            }
        } else if (!b.bodies.empty()) {
            return bad(i, "digest-only block carries bodies");
        }
    }
    return VerifyResult{};
}

inline void Chain::verify() const {
    const VerifyResult r = verify_chain(*this);
    if (!r.ok) {
        throw IntegrityError("block " + std::to_string(r.first_bad_index) + ": " + r.reason);
    }
}

inline const Block& Chain::append_block(const std::vector<Transaction>& txs,
                                        const PorRecord& por) {
    {
        const VerifyResult state = verify_chain(*this);
        if (!state.ok) {
            throw ChainError("append_block: chain invalid at block " +
                             std::to_string(state.first_bad_index) + ": " + state.reason);
        }
    }
    if (txs.empty()) throw InvalidInput("append_block: no transactions");
    const std::uint64_t round = blocks_.size();
    for (std::size_t i = 0; i < txs.size(); ++i) {
        if (txs[i].round != round) {
            throw InvalidInput("append_block: transaction round does not match block index");
        }
        if (i > 0 && txs[i].participant_id <= txs[i - 1].participant_id) {
            throw InvalidInput("append_block: participants must be strictly ascending");
        }
    }
    if (por.entries.size() != txs.size()) {
        throw InvalidInput("append_block: consensus record size does not match transactions");
    }
    for (std::size_t i = 0; i < txs.size(); ++i) {
        if (por.entries[i].participant_id != txs[i].participant_id) {
            throw InvalidInput("append_block: consensus record participants do not match");
        }
    }

    Block b;
    b.index = round;
    b.prev_hash = tip_hash();
    b.timestamp = round;
    b.mode = mode_;
    b.summaries.reserve(txs.size());
    for (const Transaction& tx : txs) b.summaries.push_back(make_summary(tx));
    b.por = por;
    b.payload_hash = sha256(encode_canonical_payload(b.summaries, b.por, b.timestamp));
    if (mode_ == BodyMode::inline_bodies) {
        b.bodies.reserve(txs.size());
        for (const Transaction& tx : txs) b.bodies.push_back(serialize_transaction(tx));
    }
    blocks_.push_back(std::move(b));
    return blocks_.back();
}

} // namespace por
