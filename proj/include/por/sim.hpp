#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "por/chain.hpp"
#include "por/config.hpp"
#include "por/consensus.hpp"
#include "por/encoder.hpp"
#include "por/error.hpp"
#include "por/numerics.hpp"
#include "por/rng.hpp"

namespace por {

struct LabeledImage {
    Image image;
    std::uint64_t label = 0;
};

struct SyntheticData {
    std::vector<Image> templates;     // one per class
    std::vector<LabeledImage> train;  // class-major order
    std::vector<LabeledImage> test;   // class-major order
};

// Class-conditional template images with additive pixel noise, clamped back
// to [0, 1]. Deterministic for a given rng state.
inline SyntheticData gen_synthetic_dataset(const DatasetSpec& spec, Rng& rng) {
    if (spec.height == 0 || spec.width == 0 || spec.channels == 0 || spec.num_classes == 0 ||
        spec.train_per_class == 0 || spec.test_per_class == 0) {
        throw InvalidInput("dataset: every dimension and count must be at least 1");
    }
    if (!std::isfinite(spec.noise_sigma) || spec.noise_sigma < 0.0) {
        throw InvalidInput("dataset: noise_sigma must be finite and non-negative");
    }

    SyntheticData data;
    data.templates.reserve(spec.num_classes);
    for (std::uint64_t c = 0; c < spec.num_classes; ++c) {
        Image img(spec.height, spec.width, spec.channels);
        for (double& px : img.pixels) px = rng.uniform();
        data.templates.push_back(std::move(img));
    }

    auto draw = [&](std::uint64_t cls) {
        LabeledImage s;
        s.label = cls;
        s.image = data.templates[cls];
        for (double& px : s.image.pixels) {
            px = std::min(1.0, std::max(0.0, px + rng.normal(0.0, spec.noise_sigma)));
        }
        return s;
    };
    for (std::uint64_t c = 0; c < spec.num_classes; ++c) {
        for (std::uint64_t i = 0; i < spec.train_per_class; ++i) data.train.push_back(draw(c));
    }
    for (std::uint64_t c = 0; c < spec.num_classes; ++c) {
        for (std::uint64_t i = 0; i < spec.test_per_class; ++i) data.test.push_back(draw(c));
    }
    return data;
}

// Disjoint participant shards over the training set. "range" cuts contiguous
// near-equal blocks of the class-major order; "dirichlet" draws per-class
// label proportions, then repairs until every shard holds min_per_shard
// samples. Shards come back sorted.
inline std::vector<std::vector<std::size_t>> partition_shards(
    const std::vector<LabeledImage>& train, const PartitionSpec& part, std::uint64_t n,
    std::size_t min_per_shard, std::uint64_t num_classes, Rng& rng) {
    if (n == 0) throw InvalidInput("partition: need at least one participant");
    if (train.size() < n * min_per_shard) {
        throw InvalidInput("partition: not enough samples for every participant");
    }

    std::vector<std::vector<std::size_t>> shards(n);
    if (part.kind == "range") {
        const std::size_t base = train.size() / n;
        const std::size_t extra = train.size() % n;
        std::size_t pos = 0;
        for (std::uint64_t p = 0; p < n; ++p) {
            const std::size_t len = base + (p < extra ? 1 : 0);
            for (std::size_t i = 0; i < len; ++i) shards[p].push_back(pos + i);
            pos += len;
        }
        return shards;
    }
    if (part.kind != "dirichlet") throw InvalidInput("partition: unknown kind: " + part.kind);
    if (!std::isfinite(part.alpha) || part.alpha <= 0.0) {
        throw InvalidInput("partition: alpha must be finite and positive");
    }

    std::vector<std::vector<std::size_t>> by_class(num_classes);
    for (std::size_t i = 0; i < train.size(); ++i) {
        if (train[i].label >= num_classes) throw InvalidInput("partition: label out of range");
        by_class[train[i].label].push_back(i);
    }

    for (std::uint64_t c = 0; c < num_classes; ++c) {
        const std::size_t m = by_class[c].size();
        if (m == 0) continue;
        std::vector<double> prop(n);
        double total = 0.0;
        for (double& g : prop) {
            g = rng.gamma(part.alpha);
            total += g;
        }
        if (total <= 0.0) {
            for (double& g : prop) g = 1.0;
            total = static_cast<double>(n);
        }

        // largest-remainder rounding of m * proportion
        std::vector<std::size_t> count(n);
        std::vector<std::pair<double, std::uint64_t>> frac;
        std::size_t assigned = 0;
        for (std::uint64_t p = 0; p < n; ++p) {
            const double exact = static_cast<double>(m) * prop[p] / total;
            count[p] = static_cast<std::size_t>(std::floor(exact));
            assigned += count[p];
            frac.push_back({exact - std::floor(exact), p});
        }
        std::sort(frac.begin(), frac.end(), [](const auto& a, const auto& b) {
            if (a.first != b.first) return a.first > b.first;
            return a.second < b.second;
        });
        for (std::size_t i = 0; assigned < m; ++i, ++assigned) count[frac[i % n].second]++;

        std::size_t cursor = 0;
        for (std::uint64_t p = 0; p < n; ++p) {
            for (std::size_t i = 0; i < count[p]; ++i) shards[p].push_back(by_class[c][cursor++]);
        }
    }

    // move samples from the fullest shard (among those above the floor) to
    // the emptiest until everyone has enough
    while (true) {
        std::uint64_t lo = 0, hi = n;
        for (std::uint64_t p = 0; p < n; ++p) {
            if (shards[p].size() < shards[lo].size()) lo = p;
            if (shards[p].size() > min_per_shard && (hi == n || shards[p].size() > shards[hi].size())) {
                hi = p;
            }
        }
        if (shards[lo].size() >= min_per_shard) break;
        shards[lo].push_back(shards[hi].back());
        shards[hi].pop_back();
    }
    for (auto& s : shards) std::sort(s.begin(), s.end());
    return shards;
}

struct MetricRow {
    std::int64_t round = 0;  // -1 marks the pre-federation snapshot
    std::uint64_t participant_id = 0;
    bool validated = false;
    double score = 0.0;
    std::uint64_t rank = 0;
    double coefficient = 0.0;
    double local_acc = 0.0;
    double global_acc = 0.0;

    bool operator==(const MetricRow&) const = default;
};

struct RoundReport {
    std::uint64_t round = 0;
    std::vector<Transaction> transactions;  // ascending participant id
    RankTable table;
    Digest block_hash{};
    std::vector<MetricRow> rows;
};

namespace detail {
enum : std::uint64_t {
    kTagData = 1,
    kTagPartition,
    kTagEncoder,
    kTagTestMask,
    kTagStdMask,
    kTagClassifier,
    kTagTrainMask,
    kTagShuffle,
    kTagDropout,
    kTagEvidence,
    kTagNoise,
};

inline void scale_all_weights(ClassifierWeights& w, double f) {
    for (double& v : w.norm_mean) v *= f;
    for (double& v : w.norm_scale) v *= f;
    for (double& v : w.w_hidden.data) v *= f;
    for (double& v : w.b_hidden) v *= f;
    for (double& v : w.w_out.data) v *= f;
    for (double& v : w.b_out) v *= f;
}
}  // namespace detail

// Deterministic federation driver: synthetic data, per-participant local
// training, evidence-carrying transactions, consensus, and a hash-linked
// block per round. Everything derives from config.seed.
class Simulation {
public:
    explicit Simulation(const SimConfig& cfg)
        : cfg_(cfg),
          chain_(cfg.block_body_mode == "inline" ? BodyMode::inline_bodies
                                                 : BodyMode::digest_only) {
        cfg_.check();
        setup();
        pre_federation();
        snapshot_metrics();
    }

    const SimConfig& config() const { return cfg_; }
    const Chain& chain() const { return chain_; }
    const SyntheticData& data() const { return data_; }
    std::uint64_t rounds_run() const { return round_; }
    const std::vector<MetricRow>& metrics() const { return metrics_; }

    std::size_t num_participants() const { return members_.size(); }
    const EncoderWeights& encoder_of(std::size_t p) const { return members_.at(p).encoder; }
    const ClassifierWeights& model_of(std::size_t p) const { return members_.at(p).model; }
    const std::vector<std::size_t>& shard_of(std::size_t p) const {
        return members_.at(p).data_idx;
    }
    const ClassifierWeights& global_model() const {
        if (!has_global_) throw InvalidInput("simulation: no aggregation round has run yet");
        return global_;
    }

    RoundReport run_round() {
        if (round_ >= cfg_.rounds) throw InvalidInput("simulation: all configured rounds already run");
        RoundReport rep;
        rep.round = round_;

        for (Member& m : members_) {
            if (m.behavior == "free_rider") continue;
            for (std::uint64_t j = 0; j < cfg_.epochs_per_round; ++j) {
                train_epoch(m, cfg_.pre_federation_epochs + round_ * cfg_.epochs_per_round + j);
            }
        }

        rep.transactions.reserve(members_.size());
        for (Member& m : members_) rep.transactions.push_back(build_transaction(m, round_));

        PorResult out = por_round(rep.transactions, cfg_.consensus);
        rep.table = out.table;

        const Block& blk = chain_.append_block(rep.transactions, out.record);
        rep.block_hash = block_hash(blk);
        if (cfg_.prune_horizon > 0) chain_.prune(cfg_.prune_horizon);

        global_ = out.global;
        has_global_ = true;
        for (Member& m : members_) m.model = global_;

        const double gacc = accuracy(global_, test_eval_enc_);
        for (std::size_t i = 0; i < members_.size(); ++i) {
            const ParticipantResult& r = out.table.results[i];
            MetricRow row;
            row.round = static_cast<std::int64_t>(round_);
            row.participant_id = r.participant_id;
            row.validated = r.validated;
            row.score = r.reduced_score;
            row.rank = r.rank;
            row.coefficient = r.coefficient;
            row.local_acc = accuracy(rep.transactions[i].omega, test_table(members_[i]));
            row.global_acc = gacc;
            rep.rows.push_back(row);
            metrics_.push_back(row);
        }

        ++round_;
        return rep;
    }

    std::vector<RoundReport> run_all() {
        std::vector<RoundReport> reports;
        while (round_ < cfg_.rounds) reports.push_back(run_round());
        return reports;
    }

private:
    struct Member {
        std::uint64_t id = 0;
        std::string behavior = "honest";
        double sigma = 0.0;
        double factor = 1.0;
        double claimed_factor = 1.0;
        EncoderWeights encoder;
        ClassifierWeights model;
        std::vector<std::size_t> data_idx;     // into data_.train
        std::vector<std::uint64_t> labels;     // local view; label_flip permutes these
        std::vector<EncodedDatapoint> test_enc;  // empty when the shared table applies
    };

    void setup() {
        const DatasetSpec& ds = cfg_.dataset;
        Rng data_rng(Rng::derive(cfg_.seed, {detail::kTagData}));
        data_ = gen_synthetic_dataset(ds, data_rng);
        rho_ = (ds.height / cfg_.patch_size) * (ds.width / cfg_.patch_size);

        train_patches_.reserve(data_.train.size());
        for (const LabeledImage& s : data_.train) {
            train_patches_.push_back(patchify(s.image, cfg_.patch_size));
        }
        test_patches_.reserve(data_.test.size());
        for (const LabeledImage& s : data_.test) {
            test_patches_.push_back(patchify(s.image, cfg_.patch_size));
        }

        Rng part_rng(Rng::derive(cfg_.seed, {detail::kTagPartition}));
        auto shards = partition_shards(data_.train, cfg_.partition, cfg_.num_participants,
                                       cfg_.min_shard_size(), ds.num_classes, part_rng);

        members_.resize(cfg_.num_participants);
        for (std::uint64_t p = 0; p < cfg_.num_participants; ++p) {
            Member& m = members_[p];
            m.id = p;
            m.data_idx = std::move(shards[p]);
            for (std::size_t idx : m.data_idx) m.labels.push_back(data_.train[idx].label);
        }
        for (const AdversarySpec& a : cfg_.adversaries) {
            Member& m = members_[a.participant];
            m.behavior = a.behavior;
            m.sigma = a.sigma;
            m.factor = a.factor;
            m.claimed_factor = a.claimed_factor;
            if (a.behavior == "label_flip") {
                for (std::uint64_t& l : m.labels) l = (l + 1) % ds.num_classes;
            }
        }

        for (Member& m : members_) {
            Rng er(Rng::derive(cfg_.seed, {detail::kTagEncoder, m.id}));
            m.encoder = init_encoder(cfg_.patch_size, ds.channels, rho_, cfg_.encoding_dim, er);
        }
        std::vector<EncoderWeights> all_enc;
        for (const Member& m : members_) all_enc.push_back(m.encoder);
        eval_encoder_ = aggregate_encoders(all_enc);
        if (cfg_.share_encoders) {
            for (Member& m : members_) m.encoder = eval_encoder_;
        }

        Rng tm(Rng::derive(cfg_.seed, {detail::kTagTestMask}));
        test_plans_.reserve(data_.test.size());
        for (std::size_t i = 0; i < data_.test.size(); ++i) {
            test_plans_.push_back(sample_mask(rho_, cfg_.mask_ratio, tm));
        }
        test_eval_enc_.reserve(data_.test.size());
        for (std::size_t i = 0; i < data_.test.size(); ++i) {
            test_eval_enc_.push_back(encode(test_patches_[i], test_plans_[i], eval_encoder_));
        }
        if (!cfg_.share_encoders) {
            for (Member& m : members_) {
                m.test_enc.reserve(data_.test.size());
                for (std::size_t i = 0; i < data_.test.size(); ++i) {
                    m.test_enc.push_back(encode(test_patches_[i], test_plans_[i], m.encoder));
                }
            }
        }

        Rng cr(Rng::derive(cfg_.seed, {detail::kTagClassifier}));
        const ClassifierWeights base =
            init_classifier(cfg_.encoding_dim, cfg_.hidden_dim, ds.num_classes, cr);
        for (Member& m : members_) {
            Rng sr(Rng::derive(cfg_.seed, {detail::kTagStdMask, m.id}));
            std::vector<std::vector<double>> pooled;
            pooled.reserve(m.data_idx.size());
            for (std::size_t idx : m.data_idx) {
                MaskPlan plan = sample_mask(rho_, cfg_.mask_ratio, sr);
                pooled.push_back(global_average_pool(encode(train_patches_[idx], plan, m.encoder)));
            }
            const std::size_t d = cfg_.encoding_dim;
            std::vector<double> mean(d, 0.0), scale(d, 0.0);
            for (const auto& v : pooled) {
                for (std::size_t j = 0; j < d; ++j) mean[j] += v[j];
            }
            for (double& v : mean) v /= static_cast<double>(pooled.size());
            for (const auto& v : pooled) {
                for (std::size_t j = 0; j < d; ++j) {
                    scale[j] += (v[j] - mean[j]) * (v[j] - mean[j]);
                }
            }
            for (double& v : scale) {
                v = std::sqrt(v / static_cast<double>(pooled.size()));
                if (v < 1e-6) v = 1.0;
            }
            m.model = base;
            set_standardization(m.model, mean, scale);
        }
    }

    void pre_federation() {
        for (Member& m : members_) {
            if (m.behavior == "free_rider") continue;
            for (std::uint64_t e = 0; e < cfg_.pre_federation_epochs; ++e) train_epoch(m, e);
        }
    }

    // Initial metrics row block (round -1): each participant's solo model
    // plus the accuracy a plain uniform average would give right now.
    void snapshot_metrics() {
        std::vector<ClassifierWeights> models;
        std::vector<double> coeff(members_.size(), 1.0 / static_cast<double>(members_.size()));
        for (const Member& m : members_) models.push_back(m.model);
        const ClassifierWeights blended = average_weights(models, coeff);
        const double gacc = accuracy(blended, test_eval_enc_);
        for (const Member& m : members_) {
            MetricRow row;
            row.round = -1;
            row.participant_id = m.id;
            row.local_acc = accuracy(m.model, test_table(m));
            row.global_acc = gacc;
            metrics_.push_back(row);
        }
    }

    void train_epoch(Member& m, std::uint64_t epoch) {
        const std::size_t count = m.data_idx.size();
        Rng mask_rng(Rng::derive(cfg_.seed, {detail::kTagTrainMask, m.id, epoch}));
        std::vector<TrainingExample> examples(count);
        for (std::size_t pos = 0; pos < count; ++pos) {
            MaskPlan plan = sample_mask(rho_, cfg_.mask_ratio, mask_rng);
            examples[pos].encoding = encode(train_patches_[m.data_idx[pos]], plan, m.encoder);
            examples[pos].label = m.labels[pos];
        }

        std::vector<std::size_t> order(count);
        for (std::size_t i = 0; i < count; ++i) order[i] = i;
        Rng shuf(Rng::derive(cfg_.seed, {detail::kTagShuffle, m.id, epoch}));
        shuf.shuffle(order);

        Rng drop(Rng::derive(cfg_.seed, {detail::kTagDropout, m.id, epoch}));
        for (std::size_t start = 0; start < count; start += cfg_.batch_size) {
            const std::size_t stop = std::min(count, start + cfg_.batch_size);
            std::vector<TrainingExample> batch;
            batch.reserve(stop - start);
            for (std::size_t i = start; i < stop; ++i) batch.push_back(examples[order[i]]);
            const std::vector<double> dmask =
                make_dropout_mask(cfg_.hidden_dim, cfg_.dropout_rate, drop);
            m.model = train_step(m.model, batch, cfg_.learning_rate, dmask);
        }
    }

    Transaction build_transaction(const Member& m, std::uint64_t r) {
        Transaction tx;
        tx.participant_id = m.id;
        tx.round = r;
        tx.claimed_sample_count = static_cast<std::uint64_t>(
            std::llround(static_cast<double>(m.data_idx.size()) * m.claimed_factor));

        ClassifierWeights submitted = m.model;
        if (m.behavior == "scaled_weights") detail::scale_all_weights(submitted, m.factor);

        Rng ev_rng(Rng::derive(cfg_.seed, {detail::kTagEvidence, m.id, r}));
        std::vector<std::size_t> pool(m.data_idx.size());
        for (std::size_t i = 0; i < pool.size(); ++i) pool[i] = i;
        ev_rng.shuffle(pool);
        for (std::uint64_t e = 0; e < cfg_.evidence_per_transaction; ++e) {
            const std::size_t pos = pool[e];
            MaskPlan plan = sample_mask(rho_, cfg_.mask_ratio, ev_rng);
            EvidenceTuple ev;
            ev.kappa = encode(train_patches_[m.data_idx[pos]], plan, m.encoder);
            ev.y = m.labels[pos];
            ev.y_hat = forward(submitted, ev.kappa);
            tx.evidence.push_back(std::move(ev));
        }

        // weight noise lands after the predictions are recorded, so the
        // submission is self-inconsistent and validation rejects it
        if (m.behavior == "noise_weights") {
            Rng nz(Rng::derive(cfg_.seed, {detail::kTagNoise, m.id, r}));
            for (double& v : submitted.w_hidden.data) v += nz.normal(0.0, m.sigma);
            for (double& v : submitted.b_hidden) v += nz.normal(0.0, m.sigma);
            for (double& v : submitted.w_out.data) v += nz.normal(0.0, m.sigma);
            for (double& v : submitted.b_out) v += nz.normal(0.0, m.sigma);
        }
        tx.omega = std::move(submitted);
        return tx;
    }

    const std::vector<EncodedDatapoint>& test_table(const Member& m) const {
        return cfg_.share_encoders ? test_eval_enc_ : m.test_enc;
    }

    double accuracy(const ClassifierWeights& w, const std::vector<EncodedDatapoint>& encs) const {
        std::size_t correct = 0;
        for (std::size_t i = 0; i < encs.size(); ++i) {
            if (predict_class(forward(w, encs[i])) == data_.test[i].label) ++correct;
        }
        return static_cast<double>(correct) / static_cast<double>(encs.size());
    }

    SimConfig cfg_;
    Chain chain_;
    SyntheticData data_;
    std::size_t rho_ = 0;
    std::vector<std::vector<std::vector<double>>> train_patches_;
    std::vector<std::vector<std::vector<double>>> test_patches_;
    std::vector<MaskPlan> test_plans_;
    std::vector<EncodedDatapoint> test_eval_enc_;
    EncoderWeights eval_encoder_;
    std::vector<Member> members_;
    ClassifierWeights global_;
    bool has_global_ = false;
    std::uint64_t round_ = 0;
    std::vector<MetricRow> metrics_;
};

struct ExperimentResult {
    std::vector<RoundReport> reports;
    std::vector<MetricRow> metrics;
    Chain chain;
};

inline ExperimentResult run_experiment(const SimConfig& cfg) {
    Simulation sim(cfg);
    ExperimentResult res;
    res.reports = sim.run_all();
    res.metrics = sim.metrics();
    res.chain = sim.chain();
    return res;
}

} // namespace por
