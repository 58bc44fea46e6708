#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "por/chain.hpp"
#include "por/error.hpp"
#include "por/numerics.hpp"
#include "por/transaction.hpp"

namespace por {

// Per-tuple validation verdicts plus the conjunction over all tuples.
struct ValidationResult {
    bool overall = false;
    std::vector<bool> per_tuple;  // submission order
};

// Checks that the submitted weights actually produce the submitted
// predictions: every component of every recorded prediction must sit
// strictly within epsilon of the recomputed one. epsilon = 0 therefore
// accepts nothing.
inline ValidationResult validate_evidence(const Transaction& tx, double epsilon) {
    if (!(epsilon >= 0.0) || !std::isfinite(epsilon)) {
        throw InvalidInput("validate: epsilon must be finite and non-negative");
    }
    tx.omega.check_consistent();
    if (tx.evidence.empty()) throw ShapeError("validate: transaction carries no evidence");
    ValidationResult res;
    res.overall = true;
    res.per_tuple.reserve(tx.evidence.size());
    for (const EvidenceTuple& ev : tx.evidence) {
        if (ev.y_hat.size() != tx.omega.num_classes()) {
            throw ShapeError("validate: recorded prediction length does not match weights");
        }
        const std::vector<double> probs = forward(tx.omega, ev.kappa);
        bool ok = true;
        for (std::size_t c = 0; c < probs.size(); ++c) {
            const double diff = std::fabs(probs[c] - ev.y_hat[c]);
            if (!(diff < epsilon)) {
                ok = false;
                break;
            }
        }
        res.per_tuple.push_back(ok);
        if (!ok) res.overall = false;
    }
    return res;
}

inline bool validate_transaction(const Transaction& tx, double epsilon) {
    return validate_evidence(tx, epsilon).overall;
}

using ScoringFn = std::function<double(const std::vector<double>&, std::uint64_t)>;
using ReductionFn = std::function<double(const std::vector<double>&)>;

// Rank-based score: the true class earns num_classes points when it holds
// the highest probability, one point when it holds the lowest. Ties resolve
// toward the lower class index.
inline double score_linear(const std::vector<double>& probs, std::uint64_t label) {
    if (probs.empty()) throw InvalidInput("score: empty probabilities");
    if (label >= probs.size()) throw InvalidInput("score: label out of range");
    double total = 0.0;
    for (double p : probs) {
        if (!std::isfinite(p) || p < 0.0 || p > 1.0 + 1e-9) {
            throw InvalidInput("score: probabilities must lie in [0, 1]");
        }
        total += p;
    }
    if (std::fabs(total - 1.0) > 1e-6) throw InvalidInput("score: probabilities must sum to 1");

    std::uint64_t ahead = 0;
    for (std::size_t c = 0; c < probs.size(); ++c) {
        if (probs[c] > probs[label]) ++ahead;
        else if (probs[c] == probs[label] && c < label) ++ahead;
    }
    const std::uint64_t rank = ahead + 1;  // 1-based position of the true class
    return static_cast<double>(probs.size() - rank + 1);
}

inline double reduce_sum(const std::vector<double>& values) {
    if (values.empty()) throw InvalidInput("reduce: empty score list");
    double total = 0.0;
    for (double v : values) total += v;
    return total;
}

inline const std::map<std::string, ScoringFn>& scoring_registry() {
    static const std::map<std::string, ScoringFn> reg = {{"linear", score_linear}};
    return reg;
}

inline const std::map<std::string, ReductionFn>& reduction_registry() {
    static const std::map<std::string, ReductionFn> reg = {{"sum", reduce_sum}};
    return reg;
}

inline ScoringFn lookup_scoring(const std::string& name) {
    auto it = scoring_registry().find(name);
    if (it == scoring_registry().end()) throw InvalidInput("unknown scoring rule: " + name);
    return it->second;
}

inline ReductionFn lookup_reduction(const std::string& name) {
    auto it = reduction_registry().find(name);
    if (it == reduction_registry().end()) throw InvalidInput("unknown reduction rule: " + name);
    return it->second;
}

// Shift scores so the weakest ranked participant still gets weight, then
// normalize. Invariant under adding a constant to every score.
inline std::vector<double> rank_weighted_coefficients(const std::vector<double>& reduced) {
    if (reduced.empty()) throw InvalidInput("coefficients: no scores");
    const double lo = *std::min_element(reduced.begin(), reduced.end());
    std::vector<double> out(reduced.size());
    double total = 0.0;
    for (std::size_t i = 0; i < reduced.size(); ++i) {
        out[i] = reduced[i] - lo + 1.0;
        total += out[i];
    }
    for (double& v : out) v /= total;
    return out;
}

// Classic sample-count weighting over the participants' own claims.
inline std::vector<double> fedavg_coefficients(const std::vector<std::uint64_t>& claimed) {
    if (claimed.empty()) throw InvalidInput("coefficients: no claims");
    double total = 0.0;
    for (auto c : claimed) total += static_cast<double>(c);
    if (total <= 0.0) throw InvalidInput("coefficients: claimed sample counts sum to zero");
    std::vector<double> out(claimed.size());
    for (std::size_t i = 0; i < claimed.size(); ++i) {
        out[i] = static_cast<double>(claimed[i]) / total;
    }
    return out;
}

// Uniform weight over the k best ranks, zero elsewhere.
inline std::vector<double> top_k_coefficients(const std::vector<std::uint64_t>& ranks,
                                              std::uint64_t k) {
    if (ranks.empty()) throw InvalidInput("coefficients: no ranks");
    if (k == 0 || k > ranks.size()) {
        throw InvalidInput("coefficients: k must lie in [1, number of ranked participants]");
    }
    std::vector<double> out(ranks.size(), 0.0);
    for (std::size_t i = 0; i < ranks.size(); ++i) {
        if (ranks[i] >= 1 && ranks[i] <= k) out[i] = 1.0 / static_cast<double>(k);
    }
    return out;
}

struct ConsensusPolicy {
    double epsilon = 1e-6;
    std::string scoring = "linear";
    std::string reduction = "sum";
    std::string coefficient_rule = "rank_weighted";  // rank_weighted | fedavg_claimed_counts | top_k_uniform
    std::uint64_t top_k = 0;                         // only read by top_k_uniform
};

// One evaluation item: a validated participant's evidence tuple, addressed
// by its owner and position.
struct EvalItem {
    std::uint64_t owner = 0;
    std::uint64_t evidence_index = 0;
};

struct ParticipantResult {
    std::uint64_t participant_id = 0;
    bool validated = false;
    std::vector<double> raw_scores;  // one per eval item, in eval order; empty if not validated
    double reduced_score = 0.0;
    std::uint64_t rank = 0;  // 1-based among validated, 0 otherwise
    double coefficient = 0.0;
};

// Full outcome of one consensus round, including the per-item scores that
// never reach the chain.
struct RankTable {
    std::vector<EvalItem> eval_items;
    std::vector<ParticipantResult> results;  // ascending participant_id
};

inline PorRecord to_por_record(const RankTable& table) {
    PorRecord rec;
    rec.entries.reserve(table.results.size());
    for (const ParticipantResult& r : table.results) {
        PorEntry e;
        e.participant_id = r.participant_id;
        e.validated = r.validated;
        e.reduced_score = r.reduced_score;
        e.rank = r.rank;
        e.coefficient = r.coefficient;
        rec.entries.push_back(e);
    }
    return rec;
}

// Validate every submission, cross-evaluate every validated model on the
// union of validated participants' evidence, rank by reduced score, and
// assign aggregation coefficients. Submissions that fail validation (or
// cannot be evaluated against the others) get no rank and zero coefficient,
// and their evidence is excluded from everyone's scoring.
inline RankTable rank_participants(const std::vector<Transaction>& txs,
                                   const ConsensusPolicy& policy) {
    if (txs.empty()) throw InvalidInput("rank_participants: no transactions");
    const ScoringFn score = lookup_scoring(policy.scoring);
    const ReductionFn reduce = lookup_reduction(policy.reduction);

    std::vector<const Transaction*> ordered;
    ordered.reserve(txs.size());
    for (const Transaction& tx : txs) ordered.push_back(&tx);
    std::sort(ordered.begin(), ordered.end(), [](const Transaction* a, const Transaction* b) {
        return a->participant_id < b->participant_id;
    });
    for (std::size_t i = 1; i < ordered.size(); ++i) {
        if (ordered[i]->participant_id == ordered[i - 1]->participant_id) {
            throw InvalidInput("rank_participants: duplicate participant id");
        }
    }

    const std::size_t n = ordered.size();
    std::vector<bool> valid(n);
    for (std::size_t i = 0; i < n; ++i) {
        try {
            valid[i] = validate_transaction(*ordered[i], policy.epsilon);
        } catch (const ShapeError&) {
            valid[i] = false;
        }
    }

    // Cross-evaluation can still hit shape mismatches between participants;
    // such participants drop out and the evaluation set shrinks, repeated to
    // a fixpoint.
    std::vector<std::vector<double>> raw(n);
    while (true) {
        std::vector<EvalItem> items;
        for (std::size_t i = 0; i < n; ++i) {
            if (!valid[i]) continue;
            for (std::size_t e = 0; e < ordered[i]->evidence.size(); ++e) {
                items.push_back({ordered[i]->participant_id, e});
            }
        }
        if (items.empty()) throw EmptyConsensusError("rank_participants: no validated participants");

        bool demoted = false;
        for (std::size_t i = 0; i < n && !demoted; ++i) {
            if (!valid[i]) continue;
            raw[i].clear();
            raw[i].reserve(items.size());
            for (const EvalItem& item : items) {
                const Transaction* owner = nullptr;
                for (std::size_t j = 0; j < n; ++j) {
                    if (ordered[j]->participant_id == item.owner) owner = ordered[j];
                }
                const EvidenceTuple& ev = owner->evidence[item.evidence_index];
                try {
                    raw[i].push_back(score(forward(ordered[i]->omega, ev.kappa), ev.y));
                } catch (const ShapeError&) {
                    valid[i] = false;
                    raw[i].clear();
                    demoted = true;
                    break;
                }
            }
        }
        if (!demoted) {
            RankTable table;
            table.eval_items = std::move(items);

            table.results.resize(n);
            for (std::size_t i = 0; i < n; ++i) {
                ParticipantResult& r = table.results[i];
                r.participant_id = ordered[i]->participant_id;
                r.validated = valid[i];
                if (valid[i]) {
                    r.raw_scores = raw[i];
                    r.reduced_score = reduce(r.raw_scores);
                }
            }

            // ranks: higher reduced score first, lower participant id on ties
            std::vector<std::size_t> validated_idx;
            for (std::size_t i = 0; i < n; ++i) {
                if (valid[i]) validated_idx.push_back(i);
            }
            std::sort(validated_idx.begin(), validated_idx.end(), [&](std::size_t a, std::size_t b) {
                if (table.results[a].reduced_score != table.results[b].reduced_score) {
                    return table.results[a].reduced_score > table.results[b].reduced_score;
                }
                return table.results[a].participant_id < table.results[b].participant_id;
            });
            for (std::size_t pos = 0; pos < validated_idx.size(); ++pos) {
                table.results[validated_idx[pos]].rank = pos + 1;
            }

            std::vector<double> coeff;
            if (policy.coefficient_rule == "rank_weighted") {
                std::vector<double> reduced;
                for (std::size_t i : validated_idx) reduced.push_back(table.results[i].reduced_score);
                coeff = rank_weighted_coefficients(reduced);
            } else if (policy.coefficient_rule == "fedavg_claimed_counts") {
                std::vector<std::uint64_t> claimed;
                for (std::size_t i : validated_idx) {
                    claimed.push_back(ordered[i]->claimed_sample_count);
                }
                coeff = fedavg_coefficients(claimed);
            } else if (policy.coefficient_rule == "top_k_uniform") {
                std::vector<std::uint64_t> ranks;
                for (std::size_t i : validated_idx) ranks.push_back(table.results[i].rank);
                coeff = top_k_coefficients(ranks, policy.top_k);
            } else {
                throw InvalidInput("unknown coefficient rule: " + policy.coefficient_rule);
            }
            for (std::size_t pos = 0; pos < validated_idx.size(); ++pos) {
                table.results[validated_idx[pos]].coefficient = coeff[pos];
            }
            return table;
        }
    }
}

// Everything one consensus round produces: the blended global model, the
// full table, and the compact record that goes on the chain.
struct PorResult {
    ClassifierWeights global;
    RankTable table;
    PorRecord record;
};

// Full consensus step: rank all submissions, then blend the validated
// models under their coefficients into the next global model. Invalid
// submissions carry zero coefficient and are left out of the blend
// entirely, so dropping them from the input changes nothing.
inline PorResult por_round(const std::vector<Transaction>& txs, const ConsensusPolicy& policy) {
    PorResult out;
    out.table = rank_participants(txs, policy);
    out.record = to_por_record(out.table);

    std::vector<ClassifierWeights> models;
    std::vector<double> coeff;
    models.reserve(out.table.results.size());
    for (const ParticipantResult& r : out.table.results) {
        if (!r.validated) continue;
        for (const Transaction& tx : txs) {
            if (tx.participant_id == r.participant_id) {
                models.push_back(tx.omega);
                coeff.push_back(r.coefficient);
                break;
            }
        }
    }
    out.global = average_weights(models, coeff);
    return out;
}

} // namespace por
