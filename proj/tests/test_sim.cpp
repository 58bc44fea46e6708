#include <catch2/catch_amalgamated.hpp>

#include <chrono>
#include <cstdint>
#include <set>
#include <vector>

#include "por/sim.hpp"
#include "por/store.hpp"

namespace {

// small but fully functional federation
por::SimConfig tiny(std::uint64_t seed = 1) {
    por::SimConfig cfg;
    cfg.seed = seed;
    cfg.num_participants = 3;
    cfg.rounds = 2;
    cfg.pre_federation_epochs = 2;
    cfg.epochs_per_round = 1;
    cfg.evidence_per_transaction = 2;
    cfg.learning_rate = 0.1;
    cfg.dropout_rate = 0.0;
    cfg.batch_size = 8;
    cfg.mask_ratio = 0.5;
    cfg.patch_size = 4;
    cfg.encoding_dim = 8;
    cfg.hidden_dim = 12;
    cfg.dataset.height = 8;
    cfg.dataset.width = 8;
    cfg.dataset.channels = 1;
    cfg.dataset.num_classes = 4;
    cfg.dataset.train_per_class = 12;
    cfg.dataset.test_per_class = 6;
    cfg.dataset.noise_sigma = 0.05;
    return cfg;
}

double mean_coefficient(const std::vector<por::MetricRow>& rows, std::uint64_t pid) {
    double total = 0.0;
    std::size_t count = 0;
    for (const auto& r : rows) {
        if (r.round >= 0 && r.participant_id == pid) {
            total += r.coefficient;
            ++count;
        }
    }
    return total / static_cast<double>(count);
}

} // namespace

TEST_CASE("zero noise reproduces class templates exactly") {
    por::DatasetSpec spec;
    spec.height = 6;
    spec.width = 6;
    spec.channels = 2;
    spec.num_classes = 3;
    spec.train_per_class = 4;
    spec.test_per_class = 2;
    spec.noise_sigma = 0.0;
    por::Rng rng(42);
    auto data = por::gen_synthetic_dataset(spec, rng);
    REQUIRE(data.templates.size() == 3);
    REQUIRE(data.train.size() == 12);
    REQUIRE(data.test.size() == 6);
    for (const auto& s : data.train) {
        REQUIRE(s.image.pixels == data.templates[s.label].pixels);
    }
    for (const auto& s : data.test) {
        REQUIRE(s.image.pixels == data.templates[s.label].pixels);
    }
}

TEST_CASE("dataset generation is deterministic and in range") {
    por::DatasetSpec spec;
    spec.num_classes = 5;
    spec.train_per_class = 7;
    spec.test_per_class = 3;
    spec.noise_sigma = 0.3;
    por::Rng r1(9), r2(9);
    auto a = por::gen_synthetic_dataset(spec, r1);
    auto b = por::gen_synthetic_dataset(spec, r2);
    REQUIRE(a.train.size() == b.train.size());
    for (std::size_t i = 0; i < a.train.size(); ++i) {
        REQUIRE(a.train[i].label == b.train[i].label);
        REQUIRE(a.train[i].image.pixels == b.train[i].image.pixels);
        for (double px : a.train[i].image.pixels) {
            REQUIRE(px >= 0.0);
            REQUIRE(px <= 1.0);
        }
    }

    por::DatasetSpec degenerate = spec;
    degenerate.num_classes = 0;
    por::Rng r3(1);
    REQUIRE_THROWS_AS(por::gen_synthetic_dataset(degenerate, r3), por::InvalidInput);
}

TEST_CASE("partition covers the training set with disjoint sorted shards") {
    por::DatasetSpec spec;
    spec.num_classes = 6;
    spec.train_per_class = 20;
    spec.test_per_class = 1;
    por::Rng rng(5);
    auto data = por::gen_synthetic_dataset(spec, rng);

    for (const char* kind : {"range", "dirichlet"}) {
        por::PartitionSpec part;
        part.kind = kind;
        part.alpha = 0.5;
        por::Rng prng(77);
        auto shards = por::partition_shards(data.train, part, 4, 2, spec.num_classes, prng);
        REQUIRE(shards.size() == 4);
        std::set<std::size_t> seen;
        for (const auto& s : shards) {
            REQUIRE(s.size() >= 2);
            REQUIRE(std::is_sorted(s.begin(), s.end()));
            for (std::size_t i : s) {
                REQUIRE(i < data.train.size());
                REQUIRE(seen.insert(i).second);
            }
        }
        REQUIRE(seen.size() == data.train.size());
    }
}

TEST_CASE("concentrated dirichlet approaches uniform label frequencies") {
    por::DatasetSpec spec;
    spec.num_classes = 10;
    spec.train_per_class = 60;
    spec.test_per_class = 1;
    por::Rng rng(8);
    auto data = por::gen_synthetic_dataset(spec, rng);

    por::PartitionSpec part;
    part.kind = "dirichlet";
    part.alpha = 1000.0;
    por::Rng prng(3);
    auto shards = por::partition_shards(data.train, part, 4, 2, spec.num_classes, prng);
    for (const auto& s : shards) {
        std::vector<std::size_t> counts(spec.num_classes, 0);
        for (std::size_t i : s) counts[data.train[i].label]++;
        for (std::size_t c = 0; c < spec.num_classes; ++c) {
            const double freq = double(counts[c]) / double(s.size());
            REQUIRE(std::fabs(freq - 0.1) < 0.05);
        }
    }

    // contrast: contiguous range shards are heavily class-skewed
    por::PartitionSpec range;
    range.kind = "range";
    por::Rng prng2(3);
    auto blocks = por::partition_shards(data.train, range, 4, 2, spec.num_classes, prng2);
    std::vector<std::size_t> counts(spec.num_classes, 0);
    for (std::size_t i : blocks[0]) counts[data.train[i].label]++;
    double worst = 0.0;
    for (std::size_t c = 0; c < spec.num_classes; ++c) {
        worst = std::max(worst, std::fabs(double(counts[c]) / double(blocks[0].size()) - 0.1));
    }
    REQUIRE(worst > 0.05);
}

TEST_CASE("extreme dirichlet concentration still honors the shard floor") {
    por::DatasetSpec spec;
    spec.num_classes = 3;
    spec.train_per_class = 10;
    spec.test_per_class = 1;
    por::Rng rng(14);
    auto data = por::gen_synthetic_dataset(spec, rng);
    por::PartitionSpec part;
    part.kind = "dirichlet";
    part.alpha = 0.05;
    for (std::uint64_t s = 0; s < 5; ++s) {
        por::Rng prng(s);
        auto shards = por::partition_shards(data.train, part, 5, 3, spec.num_classes, prng);
        for (const auto& shard : shards) REQUIRE(shard.size() >= 3);
    }
    por::Rng prng(0);
    REQUIRE_THROWS_AS(por::partition_shards(data.train, part, 16, 2, spec.num_classes, prng),
                      por::InvalidInput);
}

TEST_CASE("config parsing applies defaults, rejects unknown and invalid fields") {
    auto cfg = por::parse_config("{}");
    REQUIRE(cfg.num_participants == 4);
    REQUIRE(cfg.consensus.scoring == "linear");
    REQUIRE(cfg.block_body_mode == "digest_only");

    auto custom = por::parse_config(R"({"seed": 9, "rounds": 1,
        "consensus": {"coefficient_rule": "top_k_uniform", "top_k": 2},
        "adversaries": [{"participant": 1, "behavior": "free_rider"}]})");
    REQUIRE(custom.seed == 9);
    REQUIRE(custom.consensus.top_k == 2);
    REQUIRE(custom.adversaries.size() == 1);

    REQUIRE_THROWS_WITH(por::parse_config(R"({"masc_ratio": 0.5})"),
                        Catch::Matchers::ContainsSubstring("masc_ratio"));
    REQUIRE_THROWS_WITH(por::parse_config(R"({"mask_ratio": 1.2})"),
                        Catch::Matchers::ContainsSubstring("mask_ratio"));
    REQUIRE_THROWS_WITH(por::parse_config(R"({"patch_size": 5})"),
                        Catch::Matchers::ContainsSubstring("patch_size"));
    REQUIRE_THROWS_WITH(por::parse_config(R"({"consensus": {"scoring": "cubic"}})"),
                        Catch::Matchers::ContainsSubstring("cubic"));
    REQUIRE_THROWS_AS(por::parse_config(R"({"rounds": -1})"), por::InvalidInput);
    REQUIRE_THROWS_AS(por::parse_config("not json"), por::InvalidInput);
    REQUIRE_THROWS_AS(
        por::parse_config(R"({"adversaries": [{"participant": 0, "behavior": "steal"}]})"),
        por::InvalidInput);
    REQUIRE_THROWS_AS(por::parse_config(R"({"adversaries": [{"participant": 99}]})"),
                      por::InvalidInput);

    // round trip through the resolved form
    auto echoed = por::config_from_json(por::config_to_json(custom));
    REQUIRE(echoed.seed == custom.seed);
    REQUIRE(echoed.adversaries.size() == 1);
    REQUIRE(por::config_to_json(echoed) == por::config_to_json(custom));
}

TEST_CASE("all-honest federation validates everyone every round") {
    auto cfg = tiny(21);
    por::Simulation sim(cfg);
    auto reports = sim.run_all();
    REQUIRE(reports.size() == 2);
    for (const auto& rep : reports) {
        for (const auto& r : rep.table.results) {
            REQUIRE(r.validated);
            REQUIRE(r.rank >= 1);
        }
        double csum = 0.0;
        for (const auto& r : rep.table.results) csum += r.coefficient;
        REQUIRE(csum == Catch::Approx(1.0).margin(1e-9));
        REQUIRE(rep.block_hash == por::block_hash(sim.chain().at(rep.round)));
    }
    sim.chain().verify();
    REQUIRE(sim.chain().size() == 2);
}

TEST_CASE("weight noise after prediction recording fails validation") {
    auto cfg = tiny(22);
    cfg.adversaries.push_back({1, "noise_weights", 0.01, 10.0, 1.0});
    por::Simulation sim(cfg);
    auto reports = sim.run_all();
    for (const auto& rep : reports) {
        REQUIRE_FALSE(rep.table.results[1].validated);
        REQUIRE(rep.table.results[1].coefficient == 0.0);
        REQUIRE(rep.table.results[0].validated);
        REQUIRE(rep.table.results[2].validated);
    }
}

TEST_CASE("label flipping validates while recording permuted labels") {
    auto honest_cfg = tiny(23);
    honest_cfg.rounds = 1;
    auto flip_cfg = honest_cfg;
    flip_cfg.adversaries.push_back({1, "label_flip", 0.01, 10.0, 1.0});

    por::Simulation honest(honest_cfg);
    por::Simulation flipped(flip_cfg);
    auto h = honest.run_round();
    auto f = flipped.run_round();

    REQUIRE(f.table.results[1].validated);
    const auto& ev_h = h.transactions[1].evidence;
    const auto& ev_f = f.transactions[1].evidence;
    REQUIRE(ev_h.size() == ev_f.size());
    for (std::size_t j = 0; j < ev_h.size(); ++j) {
        // same seeds pick the same datapoints and masks, so the encodings
        // agree and only the labels rotate
        REQUIRE(ev_f[j].kappa == ev_h[j].kappa);
        REQUIRE(ev_f[j].y == (ev_h[j].y + 1) % honest_cfg.dataset.num_classes);
    }
}

TEST_CASE("free rider resubmits the previous global model") {
    auto cfg = tiny(24);
    cfg.rounds = 2;
    cfg.adversaries.push_back({2, "free_rider", 0.01, 10.0, 1.0});
    por::Simulation sim(cfg);
    auto first = sim.run_round();
    REQUIRE(first.table.results[2].validated);
    const por::ClassifierWeights global_after_first = sim.global_model();
    auto second = sim.run_round();
    REQUIRE(second.transactions[2].omega == global_after_first);
    REQUIRE(second.table.results[2].validated);
}

TEST_CASE("scaled weight submissions earn the smallest mean coefficient") {
    auto cfg = tiny(25);
    cfg.num_participants = 4;
    cfg.rounds = 5;
    cfg.pre_federation_epochs = 8;
    cfg.epochs_per_round = 2;
    cfg.evidence_per_transaction = 3;
    cfg.encoding_dim = 12;
    cfg.hidden_dim = 16;
    cfg.partition.alpha = 1000.0;  // near-uniform shards so honest models cross-evaluate well
    cfg.dataset.num_classes = 10;
    cfg.dataset.train_per_class = 12;
    cfg.dataset.test_per_class = 4;
    cfg.adversaries.push_back({3, "scaled_weights", 0.01, 10.0, 1.0});
    por::Simulation sim(cfg);
    sim.run_all();
    const double adv = mean_coefficient(sim.metrics(), 3);
    for (std::uint64_t p = 0; p < 3; ++p) {
        REQUIRE(mean_coefficient(sim.metrics(), p) > adv);
    }
}

TEST_CASE("no rounds means no blocks and snapshot metrics only") {
    auto cfg = tiny(26);
    cfg.rounds = 0;
    por::Simulation sim(cfg);
    REQUIRE(sim.run_all().empty());
    REQUIRE(sim.chain().size() == 0);
    REQUIRE(sim.metrics().size() == cfg.num_participants);
    for (const auto& row : sim.metrics()) {
        REQUIRE(row.round == -1);
        REQUIRE_FALSE(row.validated);
        REQUIRE(row.rank == 0);
        REQUIRE(row.local_acc >= 0.0);
        REQUIRE(row.local_acc <= 1.0);
    }
    REQUIRE_THROWS_AS(sim.run_round(), por::InvalidInput);
}

TEST_CASE("singleton federation: global accuracy equals local accuracy") {
    auto cfg = tiny(27);
    cfg.num_participants = 1;
    cfg.rounds = 1;
    por::Simulation sim(cfg);
    auto rep = sim.run_round();
    REQUIRE(rep.rows.size() == 1);
    REQUIRE(rep.rows[0].local_acc == rep.rows[0].global_acc);
    REQUIRE(rep.rows[0].rank == 1);
    REQUIRE(rep.rows[0].coefficient == 1.0);
    REQUIRE(sim.global_model() == rep.transactions[0].omega);
}

TEST_CASE("shared encoders are bit-identical across participants") {
    auto cfg = tiny(28);
    cfg.share_encoders = true;
    por::Simulation sim(cfg);
    for (std::size_t p = 1; p < sim.num_participants(); ++p) {
        REQUIRE(sim.encoder_of(p).projection == sim.encoder_of(0).projection);
        REQUIRE(sim.encoder_of(p).positional == sim.encoder_of(0).positional);
    }

    auto distinct = tiny(28);
    distinct.share_encoders = false;
    por::Simulation sim2(distinct);
    REQUIRE_FALSE(sim2.encoder_of(1).projection == sim2.encoder_of(0).projection);
    // distinct-encoder mode still completes consensus rounds
    auto rep = sim2.run_round();
    REQUIRE(rep.table.results.size() == cfg.num_participants);
}

TEST_CASE("identical config and seed give byte-identical runs") {
    auto cfg = tiny(29);
    cfg.rounds = 3;
    cfg.adversaries.push_back({0, "label_flip", 0.01, 10.0, 2.0});
    auto a = por::run_experiment(cfg);
    auto b = por::run_experiment(cfg);
    REQUIRE(a.chain.export_bytes() == b.chain.export_bytes());
    REQUIRE(a.metrics == b.metrics);
    REQUIRE(a.reports.size() == b.reports.size());
    for (std::size_t i = 0; i < a.reports.size(); ++i) {
        REQUIRE(a.reports[i].block_hash == b.reports[i].block_hash);
    }
}

TEST_CASE("federated schedule shows non-decreasing smoothed global accuracy") {
    por::SimConfig cfg;
    cfg.seed = 35;
    cfg.num_participants = 4;
    cfg.rounds = 15;
    cfg.pre_federation_epochs = 25;
    cfg.epochs_per_round = 5;
    cfg.evidence_per_transaction = 2;
    cfg.learning_rate = 0.03;
    cfg.batch_size = 16;
    cfg.mask_ratio = 0.75;
    cfg.patch_size = 4;
    cfg.encoding_dim = 16;
    cfg.hidden_dim = 32;
    cfg.dataset.num_classes = 6;
    cfg.dataset.train_per_class = 40;
    cfg.dataset.test_per_class = 50;
    cfg.dataset.noise_sigma = 0.10;
    por::Simulation sim(cfg);
    auto reports = sim.run_all();

    std::vector<double> global_acc;
    for (const auto& rep : reports) global_acc.push_back(rep.rows[0].global_acc);
    std::vector<double> smoothed;
    for (std::size_t i = 2; i < global_acc.size(); ++i) {
        smoothed.push_back((global_acc[i - 2] + global_acc[i - 1] + global_acc[i]) / 3.0);
    }
    for (std::size_t i = 1; i < smoothed.size(); ++i) {
        REQUIRE(smoothed[i] >= smoothed[i - 1] - 1e-12);
    }
    REQUIRE(global_acc.back() > 0.5);
}

TEST_CASE("pruning during a run keeps the chain verifiable") {
    auto cfg = tiny(32);
    cfg.rounds = 5;
    cfg.block_body_mode = "inline";
    cfg.prune_horizon = 2;
    por::Simulation sim(cfg);
    sim.run_all();
    const por::Chain& chain = sim.chain();
    REQUIRE(chain.size() == 5);
    for (std::size_t i = 0; i < 3; ++i) {
        REQUIRE(chain.at(i).mode == por::BodyMode::digest_only);
        REQUIRE(chain.at(i).bodies.empty());
    }
    for (std::size_t i = 3; i < 5; ++i) {
        REQUIRE(chain.at(i).mode == por::BodyMode::inline_bodies);
        REQUIRE_FALSE(chain.at(i).bodies.empty());
    }
    chain.verify();
    auto reimported = por::Chain::import_bytes(chain.export_bytes());
    reimported.verify();
}

TEST_CASE("round reports carry enough to rebuild the off-chain store") {
    auto cfg = tiny(33);
    cfg.block_body_mode = "digest_only";
    por::Simulation sim(cfg);
    auto reports = sim.run_all();

    std::filesystem::path dir =
        std::filesystem::temp_directory_path() / "por_sim_store_test";
    std::filesystem::remove_all(dir);
    por::OffchainStore store(dir.string());
    for (const auto& rep : reports) {
        for (const auto& tx : rep.transactions) store.put(por::serialize_transaction(tx));
    }
    por::verify_chain_with_store(sim.chain(), store);
    std::filesystem::remove_all(dir);
}

TEST_CASE("round wall time stays near-linear in participant count") {
    auto timed_run = [](std::uint64_t n) {
        por::SimConfig cfg;
        cfg.seed = 40;
        cfg.num_participants = n;
        cfg.rounds = 2;
        cfg.pre_federation_epochs = 2;
        cfg.epochs_per_round = 2;
        cfg.learning_rate = 0.05;
        cfg.batch_size = 16;
        cfg.mask_ratio = 0.75;
        cfg.patch_size = 4;
        cfg.encoding_dim = 32;
        cfg.hidden_dim = 64;
        cfg.dataset.num_classes = 4;
        cfg.dataset.train_per_class = 16 * n;  // fixed shard size per participant
        cfg.dataset.test_per_class = 8;
        const auto start = std::chrono::steady_clock::now();
        por::Simulation sim(cfg);
        sim.run_all();
        const auto stop = std::chrono::steady_clock::now();
        return std::chrono::duration<double>(stop - start).count();
    };
    const double t2 = timed_run(2);
    const double t8 = timed_run(8);
    // 4x the work should cost clearly more than 1x and clearly less than 10x
    REQUIRE(t8 < 10.0 * t2);
    REQUIRE(t8 > t2);
}
