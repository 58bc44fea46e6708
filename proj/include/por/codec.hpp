#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <vector>

#include "por/bytes.hpp"
#include "por/error.hpp"
#include "por/hash.hpp"
#include "por/transaction.hpp"

namespace por {

// Canonical wire form. Integers are little-endian u64, doubles travel as
// their IEEE-754 bit pattern, lists carry a u64 count, and fields appear in
// declaration order. Matrices write rows and cols followed by the row-major
// payload with no extra count. Every value has exactly one encoding.

inline void encode_f64_list(ByteWriter& w, const std::vector<double>& v) {
    w.put_u64(v.size());
    for (double x : v) w.put_f64(x);
}

inline std::vector<double> decode_f64_list(ByteReader& r) {
    const std::uint64_t n = r.get_count(8);
    std::vector<double> v(n);
    for (auto& x : v) x = r.get_f64();
    return v;
}

inline void encode_matrix(ByteWriter& w, const Matrix& m) {
    if (m.data.size() != m.rows * m.cols) throw EncodeError("matrix buffer does not match shape");
    w.put_u64(m.rows);
    w.put_u64(m.cols);
    for (double x : m.data) w.put_f64(x);
}

inline Matrix decode_matrix(ByteReader& r) {
    const std::uint64_t rows = r.get_u64();
    const std::uint64_t cols = r.get_u64();
    if (rows != 0 && cols > r.remaining() / 8 / rows) {
        throw DecodeError("matrix larger than remaining input");
    }
    Matrix m(rows, cols);
    for (double& x : m.data) x = r.get_f64();
    return m;
}

inline void encode_classifier(ByteWriter& w, const ClassifierWeights& cw) {
    encode_f64_list(w, cw.norm_mean);
    encode_f64_list(w, cw.norm_scale);
    encode_matrix(w, cw.w_hidden);
    encode_f64_list(w, cw.b_hidden);
    encode_matrix(w, cw.w_out);
    encode_f64_list(w, cw.b_out);
}

inline ClassifierWeights decode_classifier(ByteReader& r) {
    ClassifierWeights cw;
    cw.norm_mean = decode_f64_list(r);
    cw.norm_scale = decode_f64_list(r);
    cw.w_hidden = decode_matrix(r);
    cw.b_hidden = decode_f64_list(r);
    cw.w_out = decode_matrix(r);
    cw.b_out = decode_f64_list(r);
    return cw;
}

inline void encode_encoded_datapoint(ByteWriter& w, const EncodedDatapoint& enc) {
    w.put_u64(enc.size());
    for (const EncodedPatch& p : enc) {
        w.put_u64(p.patch_index);
        encode_f64_list(w, p.values);
    }
}

inline EncodedDatapoint decode_encoded_datapoint(ByteReader& r) {
    const std::uint64_t n = r.get_count(16);
    EncodedDatapoint enc(n);
    for (EncodedPatch& p : enc) {
        p.patch_index = r.get_u64();
        p.values = decode_f64_list(r);
    }
    return enc;
}

inline void encode_evidence(ByteWriter& w, const EvidenceTuple& ev) {
    encode_encoded_datapoint(w, ev.kappa);
    encode_f64_list(w, ev.y_hat);
    w.put_u64(ev.y);
}

inline EvidenceTuple decode_evidence(ByteReader& r) {
    EvidenceTuple ev;
    ev.kappa = decode_encoded_datapoint(r);
    ev.y_hat = decode_f64_list(r);
    ev.y = r.get_u64();
    return ev;
}

// Structural well-formedness of a submission. Value-level checks (finite
// numbers, whether y_hat matches the weights) are the validator's job.
inline void check_transaction(const Transaction& tx) {
    try {
        tx.omega.check_consistent();
    } catch (const ShapeError& e) {
        throw EncodeError(std::string("transaction weights: ") + e.what());
    }
    if (tx.evidence.empty()) throw EncodeError("transaction carries no evidence");
    for (const EvidenceTuple& ev : tx.evidence) {
        if (ev.kappa.empty()) throw EncodeError("evidence has empty encoding");
        for (const EncodedPatch& p : ev.kappa) {
            if (p.values.size() != tx.omega.input_dim()) {
                throw EncodeError("evidence encoding width does not match weights");
            }
        }
        if (ev.y_hat.size() != tx.omega.num_classes()) {
            throw EncodeError("evidence prediction length does not match class count");
        }
        double mass = 0.0;
        for (double p : ev.y_hat) {
            if (!std::isfinite(p)) throw EncodeError("evidence prediction is not finite");
            mass += p;
        }
        if (std::fabs(mass - 1.0) > 1e-9) {
            throw EncodeError("evidence prediction is not a probability distribution");
        }
        if (ev.y >= tx.omega.num_classes()) throw EncodeError("evidence label out of range");
    }
}

inline void encode_transaction(ByteWriter& w, const Transaction& tx) {
    check_transaction(tx);
    w.put_u64(tx.participant_id);
    w.put_u64(tx.round);
    w.put_u64(tx.claimed_sample_count);
    encode_classifier(w, tx.omega);
    w.put_u64(tx.evidence.size());
    for (const EvidenceTuple& ev : tx.evidence) encode_evidence(w, ev);
}

inline Transaction decode_transaction(ByteReader& r) {
    Transaction tx;
    tx.participant_id = r.get_u64();
    tx.round = r.get_u64();
    tx.claimed_sample_count = r.get_u64();
    tx.omega = decode_classifier(r);
    const std::uint64_t n = r.get_count(8 + 16 + 8);
    tx.evidence.resize(n);
    for (EvidenceTuple& ev : tx.evidence) ev = decode_evidence(r);
    return tx;
}

inline std::vector<std::uint8_t> serialize_transaction(const Transaction& tx) {
    ByteWriter w;
    encode_transaction(w, tx);
    return w.take();
}

inline Transaction deserialize_transaction(const std::vector<std::uint8_t>& bytes) {
    ByteReader r(bytes);
    Transaction tx = decode_transaction(r);
    r.expect_end();
    return tx;
}

inline Digest transaction_digest(const Transaction& tx) {
    return sha256(serialize_transaction(tx));
}

inline Digest datapoint_digest(const EncodedDatapoint& enc) {
    ByteWriter w;
    encode_encoded_datapoint(w, enc);
    return sha256(w.bytes());
}

} // namespace por
