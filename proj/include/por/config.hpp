#pragma once

#include <cstdint>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "por/consensus.hpp"
#include "por/error.hpp"

namespace por {

struct DatasetSpec {
    std::uint64_t height = 16;
    std::uint64_t width = 16;
    std::uint64_t channels = 1;
    std::uint64_t num_classes = 10;
    std::uint64_t train_per_class = 60;
    std::uint64_t test_per_class = 20;
    double noise_sigma = 0.08;
};

struct PartitionSpec {
    std::string kind = "dirichlet";  // dirichlet | range
    double alpha = 0.5;
};

struct AdversarySpec {
    std::uint64_t participant = 0;
    std::string behavior = "label_flip";  // label_flip | noise_weights | scaled_weights | free_rider
    double sigma = 0.01;           // noise_weights: stddev applied after predictions are recorded
    double factor = 10.0;          // scaled_weights: multiplier on every submitted weight
    double claimed_factor = 1.0;   // multiplier on the claimed sample count
};

// Complete description of one experiment. Every knob appears in the file
// format; load fills unset fields with these defaults and the resolved form
// is echoed back out so runs are self-describing.
struct SimConfig {
    std::uint64_t seed = 0;
    std::uint64_t num_participants = 4;
    std::uint64_t rounds = 5;
    std::uint64_t pre_federation_epochs = 0;
    std::uint64_t epochs_per_round = 1;
    std::uint64_t evidence_per_transaction = 2;
    double learning_rate = 0.05;
    double dropout_rate = 0.0;
    std::uint64_t batch_size = 16;
    double mask_ratio = 0.75;
    std::uint64_t patch_size = 4;
    std::uint64_t encoding_dim = 32;
    std::uint64_t hidden_dim = 64;
    bool share_encoders = true;
    ConsensusPolicy consensus;
    DatasetSpec dataset;
    PartitionSpec partition;
    std::vector<AdversarySpec> adversaries;
    std::string block_body_mode = "digest_only";  // inline | digest_only
    std::uint64_t prune_horizon = 0;              // 0 keeps every inline body

    std::size_t min_shard_size() const {
        return evidence_per_transaction > 2 ? static_cast<std::size_t>(evidence_per_transaction)
                                            : 2;
    }

    void check() const {
        if (num_participants == 0) throw InvalidInput("config: num_participants must be at least 1");
        if (evidence_per_transaction == 0) {
            throw InvalidInput("config: evidence_per_transaction must be at least 1");
        }
        if (batch_size == 0) throw InvalidInput("config: batch_size must be at least 1");
        if (!std::isfinite(learning_rate) || learning_rate < 0.0) {
            throw InvalidInput("config: learning_rate must be finite and non-negative");
        }
        if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) {
            throw InvalidInput("config: dropout_rate must lie in [0, 1)");
        }
        if (!(mask_ratio >= 0.0 && mask_ratio < 1.0)) {
            throw InvalidInput("config: mask_ratio must lie in [0, 1)");
        }
        if (patch_size == 0) throw InvalidInput("config: patch_size must be at least 1");
        if (encoding_dim == 0) throw InvalidInput("config: encoding_dim must be at least 1");
        if (hidden_dim == 0) throw InvalidInput("config: hidden_dim must be at least 1");

        if (dataset.height == 0 || dataset.width == 0 || dataset.channels == 0) {
            throw InvalidInput("config: dataset.height/width/channels must be at least 1");
        }
        if (dataset.num_classes == 0) throw InvalidInput("config: dataset.num_classes must be at least 1");
        if (dataset.train_per_class == 0) {
            throw InvalidInput("config: dataset.train_per_class must be at least 1");
        }
        if (dataset.test_per_class == 0) {
            throw InvalidInput("config: dataset.test_per_class must be at least 1");
        }
        if (!std::isfinite(dataset.noise_sigma) || dataset.noise_sigma < 0.0) {
            throw InvalidInput("config: dataset.noise_sigma must be finite and non-negative");
        }
        if (dataset.height % patch_size != 0 || dataset.width % patch_size != 0) {
            throw InvalidInput("config: patch_size must divide dataset.height and dataset.width");
        }

        if (partition.kind != "dirichlet" && partition.kind != "range") {
            throw InvalidInput("config: partition.kind must be \"dirichlet\" or \"range\"");
        }
        if (partition.kind == "dirichlet" &&
            (!std::isfinite(partition.alpha) || partition.alpha <= 0.0)) {
            throw InvalidInput("config: partition.alpha must be finite and positive");
        }

        const std::uint64_t total_train = dataset.num_classes * dataset.train_per_class;
        if (total_train < num_participants * min_shard_size()) {
            throw InvalidInput(
                "config: dataset.train_per_class too small to give every participant "
                "max(evidence_per_transaction, 2) samples");
        }

        if (!std::isfinite(consensus.epsilon) || consensus.epsilon < 0.0) {
            throw InvalidInput("config: consensus.epsilon must be finite and non-negative");
        }
        lookup_scoring(consensus.scoring);
        lookup_reduction(consensus.reduction);
        if (consensus.coefficient_rule != "rank_weighted" &&
            consensus.coefficient_rule != "fedavg_claimed_counts" &&
            consensus.coefficient_rule != "top_k_uniform") {
            throw InvalidInput("config: consensus.coefficient_rule unknown: " +
                               consensus.coefficient_rule);
        }
        if (consensus.coefficient_rule == "top_k_uniform" &&
            (consensus.top_k == 0 || consensus.top_k > num_participants)) {
            throw InvalidInput("config: consensus.top_k must lie in [1, num_participants]");
        }

        std::set<std::uint64_t> seen;
        for (const AdversarySpec& a : adversaries) {
            if (a.participant >= num_participants) {
                throw InvalidInput("config: adversaries.participant out of range");
            }
            if (!seen.insert(a.participant).second) {
                throw InvalidInput("config: adversaries lists a participant twice");
            }
            if (a.behavior != "label_flip" && a.behavior != "noise_weights" &&
                a.behavior != "scaled_weights" && a.behavior != "free_rider") {
                throw InvalidInput("config: adversaries.behavior unknown: " + a.behavior);
            }
            if (a.behavior == "noise_weights" && (!std::isfinite(a.sigma) || a.sigma <= 0.0)) {
                throw InvalidInput("config: adversaries.sigma must be finite and positive");
            }
            if (a.behavior == "scaled_weights" &&
                (!std::isfinite(a.factor) || a.factor <= 0.0 || a.factor == 1.0)) {
                throw InvalidInput(
                    "config: adversaries.factor must be finite, positive and not 1");
            }
            if (!std::isfinite(a.claimed_factor) || a.claimed_factor <= 0.0) {
                throw InvalidInput("config: adversaries.claimed_factor must be finite and positive");
            }
        }

        if (block_body_mode != "inline" && block_body_mode != "digest_only") {
            throw InvalidInput("config: block_body_mode must be \"inline\" or \"digest_only\"");
        }
    }
};

namespace detail {

// Object wrapper that type-checks each lookup and rejects keys it never saw.
class ConfigReader {
public:
    ConfigReader(const nlohmann::json& j, std::string scope) : j_(j), scope_(std::move(scope)) {
        if (!j_.is_object()) throw InvalidInput(scope_ + " must be a JSON object");
    }

    std::uint64_t u64(const char* key, std::uint64_t def) {
        const nlohmann::json* el = claim(key);
        if (!el) return def;
        if (el->is_number_unsigned()) return el->get<std::uint64_t>();
        if (el->is_number_integer() && el->get<std::int64_t>() >= 0) {
            return static_cast<std::uint64_t>(el->get<std::int64_t>());
        }
        throw InvalidInput(scope_ + "." + key + " must be a non-negative integer");
    }

    double f64(const char* key, double def) {
        const nlohmann::json* el = claim(key);
        if (!el) return def;
        if (!el->is_number()) throw InvalidInput(scope_ + "." + key + " must be a number");
        return el->get<double>();
    }

    bool boolean(const char* key, bool def) {
        const nlohmann::json* el = claim(key);
        if (!el) return def;
        if (!el->is_boolean()) throw InvalidInput(scope_ + "." + key + " must be true or false");
        return el->get<bool>();
    }

    std::string str(const char* key, std::string def) {
        const nlohmann::json* el = claim(key);
        if (!el) return def;
        if (!el->is_string()) throw InvalidInput(scope_ + "." + key + " must be a string");
        return el->get<std::string>();
    }

    const nlohmann::json* object(const char* key) {
        const nlohmann::json* el = claim(key);
        if (el && !el->is_object()) throw InvalidInput(scope_ + "." + key + " must be an object");
        return el;
    }

    const nlohmann::json* array(const char* key) {
        const nlohmann::json* el = claim(key);
        if (el && !el->is_array()) throw InvalidInput(scope_ + "." + key + " must be an array");
        return el;
    }

    void finish() const {
        for (auto it = j_.begin(); it != j_.end(); ++it) {
            if (!seen_.count(it.key())) {
                throw InvalidInput(scope_ + ": unknown field: " + it.key());
            }
        }
    }

private:
    const nlohmann::json* claim(const char* key) {
        seen_.insert(key);
        auto it = j_.find(key);
        return it == j_.end() ? nullptr : &*it;
    }

    const nlohmann::json& j_;
    std::string scope_;
    std::set<std::string> seen_;
};

}  // namespace detail

inline SimConfig config_from_json(const nlohmann::json& j) {
    SimConfig cfg;
    detail::ConfigReader r(j, "config");
    cfg.seed = r.u64("seed", cfg.seed);
    cfg.num_participants = r.u64("num_participants", cfg.num_participants);
    cfg.rounds = r.u64("rounds", cfg.rounds);
    cfg.pre_federation_epochs = r.u64("pre_federation_epochs", cfg.pre_federation_epochs);
    cfg.epochs_per_round = r.u64("epochs_per_round", cfg.epochs_per_round);
    cfg.evidence_per_transaction = r.u64("evidence_per_transaction", cfg.evidence_per_transaction);
    cfg.learning_rate = r.f64("learning_rate", cfg.learning_rate);
    cfg.dropout_rate = r.f64("dropout_rate", cfg.dropout_rate);
    cfg.batch_size = r.u64("batch_size", cfg.batch_size);
    cfg.mask_ratio = r.f64("mask_ratio", cfg.mask_ratio);
    cfg.patch_size = r.u64("patch_size", cfg.patch_size);
    cfg.encoding_dim = r.u64("encoding_dim", cfg.encoding_dim);
    cfg.hidden_dim = r.u64("hidden_dim", cfg.hidden_dim);
    cfg.share_encoders = r.boolean("share_encoders", cfg.share_encoders);
    cfg.block_body_mode = r.str("block_body_mode", cfg.block_body_mode);
    cfg.prune_horizon = r.u64("prune_horizon", cfg.prune_horizon);

    if (const nlohmann::json* c = r.object("consensus")) {
        detail::ConfigReader cr(*c, "config.consensus");
        cfg.consensus.epsilon = cr.f64("epsilon", cfg.consensus.epsilon);
        cfg.consensus.scoring = cr.str("scoring", cfg.consensus.scoring);
        cfg.consensus.reduction = cr.str("reduction", cfg.consensus.reduction);
        cfg.consensus.coefficient_rule = cr.str("coefficient_rule", cfg.consensus.coefficient_rule);
        cfg.consensus.top_k = cr.u64("top_k", cfg.consensus.top_k);
        cr.finish();
    }
    if (const nlohmann::json* d = r.object("dataset")) {
        detail::ConfigReader dr(*d, "config.dataset");
        cfg.dataset.height = dr.u64("height", cfg.dataset.height);
        cfg.dataset.width = dr.u64("width", cfg.dataset.width);
        cfg.dataset.channels = dr.u64("channels", cfg.dataset.channels);
        cfg.dataset.num_classes = dr.u64("num_classes", cfg.dataset.num_classes);
        cfg.dataset.train_per_class = dr.u64("train_per_class", cfg.dataset.train_per_class);
        cfg.dataset.test_per_class = dr.u64("test_per_class", cfg.dataset.test_per_class);
        cfg.dataset.noise_sigma = dr.f64("noise_sigma", cfg.dataset.noise_sigma);
        dr.finish();
    }
    if (const nlohmann::json* p = r.object("partition")) {
        detail::ConfigReader pr(*p, "config.partition");
        cfg.partition.kind = pr.str("kind", cfg.partition.kind);
        cfg.partition.alpha = pr.f64("alpha", cfg.partition.alpha);
        pr.finish();
    }
    if (const nlohmann::json* a = r.array("adversaries")) {
        for (std::size_t i = 0; i < a->size(); ++i) {
            detail::ConfigReader ar((*a)[i], "config.adversaries[" + std::to_string(i) + "]");
            AdversarySpec adv;
            adv.participant = ar.u64("participant", adv.participant);
            adv.behavior = ar.str("behavior", adv.behavior);
            adv.sigma = ar.f64("sigma", adv.sigma);
            adv.factor = ar.f64("factor", adv.factor);
            adv.claimed_factor = ar.f64("claimed_factor", adv.claimed_factor);
            ar.finish();
            cfg.adversaries.push_back(adv);
        }
    }
    r.finish();
    cfg.check();
    return cfg;
}

inline nlohmann::json config_to_json(const SimConfig& cfg) {
    nlohmann::json j;
    j["seed"] = cfg.seed;
    j["num_participants"] = cfg.num_participants;
    j["rounds"] = cfg.rounds;
    j["pre_federation_epochs"] = cfg.pre_federation_epochs;
    j["epochs_per_round"] = cfg.epochs_per_round;
    j["evidence_per_transaction"] = cfg.evidence_per_transaction;
    j["learning_rate"] = cfg.learning_rate;
    j["dropout_rate"] = cfg.dropout_rate;
    j["batch_size"] = cfg.batch_size;
    j["mask_ratio"] = cfg.mask_ratio;
    j["patch_size"] = cfg.patch_size;
    j["encoding_dim"] = cfg.encoding_dim;
    j["hidden_dim"] = cfg.hidden_dim;
    j["share_encoders"] = cfg.share_encoders;
    j["consensus"] = {{"epsilon", cfg.consensus.epsilon},
                      {"scoring", cfg.consensus.scoring},
                      {"reduction", cfg.consensus.reduction},
                      {"coefficient_rule", cfg.consensus.coefficient_rule},
                      {"top_k", cfg.consensus.top_k}};
    j["dataset"] = {{"height", cfg.dataset.height},
                    {"width", cfg.dataset.width},
                    {"channels", cfg.dataset.channels},
                    {"num_classes", cfg.dataset.num_classes},
                    {"train_per_class", cfg.dataset.train_per_class},
                    {"test_per_class", cfg.dataset.test_per_class},
                    {"noise_sigma", cfg.dataset.noise_sigma}};
    j["partition"] = {{"kind", cfg.partition.kind}, {"alpha", cfg.partition.alpha}};
    j["adversaries"] = nlohmann::json::array();
    for (const AdversarySpec& a : cfg.adversaries) {
        j["adversaries"].push_back({{"participant", a.participant},
                                    {"behavior", a.behavior},
                                    {"sigma", a.sigma},
                                    {"factor", a.factor},
                                    {"claimed_factor", a.claimed_factor}});
    }
    j["block_body_mode"] = cfg.block_body_mode;
    j["prune_horizon"] = cfg.prune_horizon;
    return j;
}

inline SimConfig parse_config(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw InvalidInput(std::string("config: not valid JSON: ") + e.what());
    }
    return config_from_json(j);
}

inline SimConfig load_config_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InvalidInput("config: cannot read file: " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_config(buf.str());
}

} // namespace por
