// porctl: batch driver for federation experiments plus chain inspection.
//
// Exit codes: 0 success, 1 runtime or integrity failure, 2 bad usage,
// bad config, or unreadable/corrupt input. Every error path prints exactly
// one line to stderr shaped like "error: <category>: <detail>".

#include <CLI11.hpp>

#include <cstdio>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include "por/por.hpp"

namespace {

[[noreturn]] void fail(int code, const std::string& category, const std::string& detail) {
    std::string msg = detail;
    for (char& c : msg) {
        if (c == '\n' || c == '\r') c = ' ';
    }
    std::fprintf(stderr, "error: %s: %s\n", category.c_str(), msg.c_str());
    std::exit(code);
}

std::vector<std::uint8_t> read_binary(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(2, "io", "cannot read file: " + path);
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                    std::istreambuf_iterator<char>());
    if (in.bad()) fail(2, "io", "cannot read file: " + path);
    return bytes;
}

void write_binary(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (out) out.write(reinterpret_cast<const char*>(bytes.data()),
                       static_cast<std::streamsize>(bytes.size()));
    if (!out) fail(1, "io", "cannot write file: " + path.string());
}

void write_text(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (out) out.write(text.data(), static_cast<std::streamsize>(text.size()));
    if (!out) fail(1, "io", "cannot write file: " + path.string());
}

std::string fmt_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.9g", v);
    return buf;
}

constexpr const char* kMetricsHeader =
    "round,participant_id,validated,score,rank,coefficient,local_acc,global_acc\n";
constexpr const char* kRankHeader =
    "round,participant_id,validated,score,rank,coefficient,block_hash\n";

std::string metrics_csv(const std::vector<por::MetricRow>& rows) {
    std::string csv = kMetricsHeader;
    char buf[256];
    for (const auto& r : rows) {
        std::snprintf(buf, sizeof(buf), "%lld,%llu,%d,%s,%llu,%s,%s,%s\n",
                      static_cast<long long>(r.round),
                      static_cast<unsigned long long>(r.participant_id),
                      r.validated ? 1 : 0,
                      fmt_double(r.score).c_str(),
                      static_cast<unsigned long long>(r.rank),
                      fmt_double(r.coefficient).c_str(),
                      fmt_double(r.local_acc).c_str(),
                      fmt_double(r.global_acc).c_str());
        csv += buf;
    }
    return csv;
}

std::string rank_rows_for_block(const por::Block& block) {
    std::string out;
    char buf[256];
    const std::string hash_hex = por::to_hex(por::block_hash(block));
    for (const auto& e : block.por.entries) {
        std::snprintf(buf, sizeof(buf), "%llu,%llu,%d,%s,%llu,%s,%s\n",
                      static_cast<unsigned long long>(block.timestamp),
                      static_cast<unsigned long long>(e.participant_id),
                      e.validated ? 1 : 0,
                      fmt_double(e.reduced_score).c_str(),
                      static_cast<unsigned long long>(e.rank),
                      fmt_double(e.coefficient).c_str(),
                      hash_hex.c_str());
        out += buf;
    }
    return out;
}

por::Chain load_chain(const std::string& path) {
    const auto bytes = read_binary(path);
    try {
        return por::Chain::import_bytes(bytes);
    } catch (const por::Error& e) {
        fail(2, "parse", std::string("corrupt chain file: ") + e.what());
    }
}

const por::Block* find_round(const por::Chain& chain, std::uint64_t round) {
    for (std::size_t i = 0; i < chain.size(); ++i) {
        if (chain.at(i).timestamp == round) return &chain.at(i);
    }
    return nullptr;
}

int cmd_run(const std::string& config_path, const std::string& out_dir,
            std::optional<std::uint64_t> seed_override) {
    por::SimConfig cfg;
    try {
        cfg = por::load_config_file(config_path);
        if (seed_override) {
            cfg.seed = *seed_override;
            cfg.check();
        }
    } catch (const por::InvalidInput& e) {
        std::string what = e.what();
        if (what.rfind("config: ", 0) == 0) what.erase(0, 8);
        fail(2, "config", what);
    }

    por::ExperimentResult result;
    try {
        result = por::run_experiment(cfg);
    } catch (const por::Error& e) {
        fail(1, "runtime", e.what());
    }

    const std::filesystem::path dir(out_dir);
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) fail(1, "io", "cannot create output directory: " + out_dir);

    const auto chain_file = dir / "chain.bin";
    const auto metrics_file = dir / "metrics.csv";
    const auto rank_file = dir / "rank_report.csv";
    const auto config_file = dir / "config.resolved.json";
    const auto store_dir = dir / "store";

    write_binary(chain_file, result.chain.export_bytes());
    write_text(metrics_file, metrics_csv(result.metrics));

    std::string rank_csv = kRankHeader;
    for (std::size_t i = 0; i < result.chain.size(); ++i) {
        rank_csv += rank_rows_for_block(result.chain.at(i));
    }
    write_text(rank_file, rank_csv);
    write_text(config_file, por::config_to_json(cfg).dump(2) + "\n");

    try {
        por::OffchainStore store(store_dir.string());
        for (const auto& rep : result.reports) {
            for (const auto& tx : rep.transactions) {
                store.put(por::serialize_transaction(tx));
            }
        }
    } catch (const por::Error& e) {
        fail(1, "io", e.what());
    }

    nlohmann::json manifest;
    manifest["config"] = config_path;
    manifest["output_dir"] = out_dir;
    manifest["artifacts"] = {
        {"chain", chain_file.filename().string()},
        {"metrics", metrics_file.filename().string()},
        {"rank_report", rank_file.filename().string()},
        {"resolved_config", config_file.filename().string()},
        {"store", store_dir.filename().string()},
    };
    manifest["rounds"] = result.reports.size();
    manifest["exit_status"] = 0;
    write_text(dir / "manifest.json", manifest.dump(2) + "\n");

    std::printf("ok: %zu rounds, %zu blocks, artifacts in %s\n",
                result.reports.size(), result.chain.size(), out_dir.c_str());
    return 0;
}

int cmd_verify(const std::string& chain_path) {
    const por::Chain chain = load_chain(chain_path);
    const por::VerifyResult vr = por::verify_chain(chain);
    if (!vr.ok) {
        fail(1, "chain",
             "invalid at block " + std::to_string(vr.first_bad_index) + ": " + vr.reason);
    }
    std::printf("ok: chain valid, %zu blocks\n", chain.size());
    return 0;
}

int cmd_rank_report(const std::string& chain_path, std::uint64_t round) {
    const por::Chain chain = load_chain(chain_path);
    const por::Block* block = find_round(chain, round);
    if (!block) fail(2, "usage", "round " + std::to_string(round) + " not found in chain");
    std::fputs(kRankHeader, stdout);
    std::fputs(rank_rows_for_block(*block).c_str(), stdout);
    return 0;
}

int cmd_inspect_block(const std::string& chain_path, std::uint64_t round) {
    const por::Chain chain = load_chain(chain_path);
    const por::Block* block = find_round(chain, round);
    if (!block) fail(2, "usage", "round " + std::to_string(round) + " not found in chain");

    std::printf("index: %llu\n", static_cast<unsigned long long>(block->index));
    std::printf("round: %llu\n", static_cast<unsigned long long>(block->timestamp));
    std::printf("hash: %s\n", por::to_hex(por::block_hash(*block)).c_str());
    std::printf("prev_hash: %s\n", por::to_hex(block->prev_hash).c_str());
    std::printf("payload_hash: %s\n", por::to_hex(block->payload_hash).c_str());
    std::printf("body_mode: %s\n",
                block->mode == por::BodyMode::inline_bodies ? "inline" : "digest_only");
    std::printf("transactions: %zu\n", block->summaries.size());
    for (const auto& s : block->summaries) {
        std::printf("  participant %llu: claimed_samples=%llu evidence=%zu digest=%s\n",
                    static_cast<unsigned long long>(s.participant_id),
                    static_cast<unsigned long long>(s.claimed_sample_count),
                    s.evidence.size(), por::to_hex(s.tx_digest).c_str());
    }
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"federation experiment driver and chain inspector"};
    app.require_subcommand(1);

    std::string config_path;
    std::string out_dir;
    std::string chain_path;
    std::uint64_t round = 0;
    std::optional<std::uint64_t> seed_override;

    auto* run = app.add_subcommand("run", "run an experiment from a config file");
    run->add_option("--config", config_path, "experiment config (JSON)")->required();
    run->add_option("--out", out_dir, "output directory for artifacts")->required();
    run->add_option("--seed", seed_override, "override the config's master seed");

    auto* verify = app.add_subcommand("verify", "check a chain export end to end");
    verify->add_option("--chain", chain_path, "chain export file")->required();

    auto* rank = app.add_subcommand("rank-report", "print one round's ranking as CSV");
    rank->add_option("--chain", chain_path, "chain export file")->required();
    rank->add_option("--round", round, "round to report")->required();

    auto* inspect = app.add_subcommand("inspect-block", "dump one block's header and summaries");
    inspect->add_option("--chain", chain_path, "chain export file")->required();
    inspect->add_option("--round", round, "round to inspect")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        fail(2, "usage", e.what());
    }

    try {
        if (run->parsed()) return cmd_run(config_path, out_dir, seed_override);
        if (verify->parsed()) return cmd_verify(chain_path);
        if (rank->parsed()) return cmd_rank_report(chain_path, round);
        return cmd_inspect_block(chain_path, round);
    } catch (const por::Error& e) {
        fail(1, "runtime", e.what());
    } catch (const std::exception& e) {
        fail(1, "runtime", e.what());
    }
}
