// Drives the porctl binary as a subprocess. The binary path and the golden
// directory come from the PORCTL and GOLDEN_DIR environment variables, wired
// up by the build so the suite works from any build tree.
#include <catch2/catch_amalgamated.hpp>

#include <cstdlib>
#include <fstream>
#include <filesystem>
#include <sstream>
#include <string>
#include <unistd.h>
#include <vector>

#include "por/por.hpp"

namespace fs = std::filesystem;

namespace {

std::string env_or_fail(const char* name) {
    const char* v = std::getenv(name);
    REQUIRE(v != nullptr);
    return v;
}

struct CmdResult {
    int code = -1;
    std::string out;
    std::string err;
};

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    REQUIRE(in.good());
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void spit(const fs::path& p, const std::string& text) {
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    out << text;
    REQUIRE(out.good());
}

struct TempDir {
    fs::path path;
    TempDir() {
        path = fs::temp_directory_path() /
               ("por_cli_" + std::to_string(::getpid()) + "_" + std::to_string(counter()++));
        fs::create_directories(path);
    }
    ~TempDir() {
        std::error_code ec;
        fs::remove_all(path, ec);
    }
    static int& counter() {
        static int c = 0;
        return c;
    }
};

CmdResult run_cmd(const std::string& args, const fs::path& scratch) {
    const fs::path out_file = scratch / "stdout.txt";
    const fs::path err_file = scratch / "stderr.txt";
    const std::string cmd = env_or_fail("PORCTL") + " " + args + " > " +
                            out_file.string() + " 2> " + err_file.string();
    const int status = std::system(cmd.c_str());
    CmdResult r;
    r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    r.out = slurp(out_file);
    r.err = slurp(err_file);
    return r;
}

std::string minimal_config(std::uint64_t n, std::uint64_t rounds, std::uint64_t seed = 11) {
    std::ostringstream os;
    os << "{\n"
       << "  \"seed\": " << seed << ",\n"
       << "  \"num_participants\": " << n << ",\n"
       << "  \"rounds\": " << rounds << ",\n"
       << "  \"pre_federation_epochs\": 1,\n"
       << "  \"epochs_per_round\": 1,\n"
       << "  \"batch_size\": 4,\n"
       << "  \"encoding_dim\": 8,\n"
       << "  \"hidden_dim\": 10,\n"
       << "  \"mask_ratio\": 0.5,\n"
       << "  \"patch_size\": 4,\n"
       << "  \"dataset\": {\"height\": 8, \"width\": 8, \"num_classes\": 3,\n"
       << "               \"train_per_class\": 8, \"test_per_class\": 4}\n"
       << "}\n";
    return os.str();
}

std::vector<std::vector<std::string>> parse_csv(const std::string& text) {
    std::vector<std::vector<std::string>> rows;
    std::istringstream lines(text);
    std::string line;
    while (std::getline(lines, line)) {
        if (line.empty()) continue;
        std::vector<std::string> fields;
        std::istringstream cells(line);
        std::string cell;
        while (std::getline(cells, cell, ',')) fields.push_back(cell);
        rows.push_back(std::move(fields));
    }
    return rows;
}

} // namespace

TEST_CASE("run emits every declared artifact for a minimal config") {
    TempDir tmp;
    spit(tmp.path / "cfg.json", minimal_config(1, 1));
    auto r = run_cmd("run --config " + (tmp.path / "cfg.json").string() + " --out " +
                         (tmp.path / "out").string(),
                     tmp.path);
    INFO(r.err);
    REQUIRE(r.code == 0);
    for (const char* name :
         {"chain.bin", "metrics.csv", "rank_report.csv", "config.resolved.json",
          "manifest.json"}) {
        REQUIRE(fs::exists(tmp.path / "out" / name));
    }
    REQUIRE(fs::is_directory(tmp.path / "out" / "store"));

    // resolved config parses and spells out every field, including defaults
    auto cfg = por::parse_config(slurp(tmp.path / "out" / "config.resolved.json"));
    REQUIRE(cfg.num_participants == 1);
    REQUIRE(cfg.consensus.scoring == "linear");
}

TEST_CASE("bad config values exit 2 and name the offending field") {
    TempDir tmp;
    spit(tmp.path / "cfg.json", "{\"mask_ratio\": 1.2}");
    auto r = run_cmd("run --config " + (tmp.path / "cfg.json").string() + " --out " +
                         (tmp.path / "out").string(),
                     tmp.path);
    REQUIRE(r.code == 2);
    REQUIRE(r.err.find("mask_ratio") != std::string::npos);
    REQUIRE(r.err.rfind("error: config:", 0) == 0);

    spit(tmp.path / "missing.jsn", "");
    auto r2 = run_cmd("run --config " + (tmp.path / "no_such_file.json").string() +
                          " --out " + (tmp.path / "out").string(),
                      tmp.path);
    REQUIRE(r2.code == 2);

    auto r3 = run_cmd("run --config " + (tmp.path / "cfg.json").string(), tmp.path);
    REQUIRE(r3.code == 2);
    REQUIRE(r3.err.rfind("error: usage:", 0) == 0);
}

TEST_CASE("golden config reproduces the committed metrics byte for byte") {
    TempDir tmp;
    const fs::path golden = env_or_fail("GOLDEN_DIR");
    auto r = run_cmd("run --config " + (golden / "config.json").string() + " --out " +
                         (tmp.path / "out").string(),
                     tmp.path);
    INFO(r.err);
    REQUIRE(r.code == 0);
    REQUIRE(slurp(tmp.path / "out" / "metrics.csv") == slurp(golden / "metrics.csv"));
}

TEST_CASE("verify accepts fresh chains and pinpoints corrupted ones") {
    TempDir tmp;
    spit(tmp.path / "cfg.json", minimal_config(2, 3));
    auto r = run_cmd("run --config " + (tmp.path / "cfg.json").string() + " --out " +
                         (tmp.path / "out").string(),
                     tmp.path);
    REQUIRE(r.code == 0);
    const fs::path chain_file = tmp.path / "out" / "chain.bin";

    auto ok = run_cmd("verify --chain " + chain_file.string(), tmp.path);
    REQUIRE(ok.code == 0);
    REQUIRE(ok.out.find("chain valid") != std::string::npos);

    std::string bytes = slurp(chain_file);
    bytes[bytes.size() / 2] = static_cast<char>(bytes[bytes.size() / 2] ^ 0x40);
    spit(tmp.path / "bad.bin", bytes);
    auto bad = run_cmd("verify --chain " + (tmp.path / "bad.bin").string(), tmp.path);
    REQUIRE(bad.code == 1);
    REQUIRE(bad.err.find("block") != std::string::npos);

    spit(tmp.path / "trunc.bin", bytes.substr(0, 30));
    auto trunc = run_cmd("verify --chain " + (tmp.path / "trunc.bin").string(), tmp.path);
    REQUIRE(trunc.code == 2);

    auto gone = run_cmd("verify --chain " + (tmp.path / "gone.bin").string(), tmp.path);
    REQUIRE(gone.code == 2);
    REQUIRE(gone.err.rfind("error: io:", 0) == 0);
}

TEST_CASE("rank report prints a lone participant at rank 1 with full weight") {
    TempDir tmp;
    spit(tmp.path / "cfg.json", minimal_config(1, 1));
    run_cmd("run --config " + (tmp.path / "cfg.json").string() + " --out " +
                (tmp.path / "out").string(),
            tmp.path);
    auto r = run_cmd("rank-report --chain " + (tmp.path / "out" / "chain.bin").string() +
                         " --round 0",
                     tmp.path);
    REQUIRE(r.code == 0);
    auto rows = parse_csv(r.out);
    REQUIRE(rows.size() == 2);
    REQUIRE(rows[0][0] == "round");
    REQUIRE(rows[1][0] == "0");  // round
    REQUIRE(rows[1][1] == "0");  // participant
    REQUIRE(rows[1][2] == "1");  // validated
    REQUIRE(rows[1][4] == "1");  // rank
    REQUIRE(rows[1][5] == "1");  // coefficient

    auto missing = run_cmd("rank-report --chain " +
                               (tmp.path / "out" / "chain.bin").string() + " --round 5",
                           tmp.path);
    REQUIRE(missing.code == 2);
    REQUIRE(missing.err.find("round 5") != std::string::npos);
}

TEST_CASE("rank report agrees with a from-scratch recomputation") {
    TempDir tmp;
    spit(tmp.path / "cfg.json", minimal_config(3, 2, 77));
    run_cmd("run --config " + (tmp.path / "cfg.json").string() + " --out " +
                (tmp.path / "out").string(),
            tmp.path);

    auto r = run_cmd("rank-report --chain " + (tmp.path / "out" / "chain.bin").string() +
                         " --round 1",
                     tmp.path);
    REQUIRE(r.code == 0);
    auto rows = parse_csv(r.out);
    REQUIRE(rows.size() == 4);
    double coeff_sum = 0.0;
    for (std::size_t i = 1; i < rows.size(); ++i) coeff_sum += std::stod(rows[i][5]);
    REQUIRE(coeff_sum == Catch::Approx(1.0).margin(1e-9));

    // rebuild the round's transactions from the off-chain store and rerank
    const std::string chain_bytes = slurp(tmp.path / "out" / "chain.bin");
    auto chain = por::Chain::import_bytes(
        std::vector<std::uint8_t>(chain_bytes.begin(), chain_bytes.end()));
    auto cfg = por::parse_config(slurp(tmp.path / "out" / "config.resolved.json"));
    std::vector<por::Transaction> txs;
    for (const auto& s : chain.at(1).summaries) {
        const std::string blob =
            slurp(tmp.path / "out" / "store" / por::to_hex(s.tx_digest));
        txs.push_back(por::deserialize_transaction(
            std::vector<std::uint8_t>(blob.begin(), blob.end())));
    }
    auto table = por::rank_participants(txs, cfg.consensus);
    for (std::size_t i = 0; i < table.results.size(); ++i) {
        const auto& want = table.results[i];
        const auto& got = rows[i + 1];
        REQUIRE(std::stoull(got[1]) == want.participant_id);
        REQUIRE((got[2] == "1") == want.validated);
        REQUIRE(std::stod(got[3]) == Catch::Approx(want.reduced_score).margin(1e-9));
        REQUIRE(std::stoull(got[4]) == want.rank);
        REQUIRE(std::stod(got[5]) == Catch::Approx(want.coefficient).margin(1e-9));
    }
}

TEST_CASE("emitted rank report lines up with the metrics table") {
    TempDir tmp;
    spit(tmp.path / "cfg.json", minimal_config(3, 2, 31));
    run_cmd("run --config " + (tmp.path / "cfg.json").string() + " --out " +
                (tmp.path / "out").string(),
            tmp.path);
    auto rank_rows = parse_csv(slurp(tmp.path / "out" / "rank_report.csv"));
    auto metric_rows = parse_csv(slurp(tmp.path / "out" / "metrics.csv"));

    // index metrics by (round, participant); compare the consensus columns
    std::size_t matched = 0;
    for (std::size_t i = 1; i < rank_rows.size(); ++i) {
        for (std::size_t j = 1; j < metric_rows.size(); ++j) {
            if (metric_rows[j][0] == rank_rows[i][0] &&
                metric_rows[j][1] == rank_rows[i][1]) {
                REQUIRE(metric_rows[j][2] == rank_rows[i][2]);
                REQUIRE(metric_rows[j][3] == rank_rows[i][3]);
                REQUIRE(metric_rows[j][4] == rank_rows[i][4]);
                REQUIRE(metric_rows[j][5] == rank_rows[i][5]);
                ++matched;
            }
        }
    }
    REQUIRE(matched == 6);
}

TEST_CASE("identical invocations produce byte-identical artifacts") {
    TempDir tmp;
    spit(tmp.path / "cfg.json", minimal_config(2, 2, 99));
    const std::string base = "run --config " + (tmp.path / "cfg.json").string();
    REQUIRE(run_cmd(base + " --out " + (tmp.path / "a").string(), tmp.path).code == 0);
    REQUIRE(run_cmd(base + " --out " + (tmp.path / "b").string(), tmp.path).code == 0);
    REQUIRE(slurp(tmp.path / "a" / "chain.bin") == slurp(tmp.path / "b" / "chain.bin"));
    REQUIRE(slurp(tmp.path / "a" / "metrics.csv") == slurp(tmp.path / "b" / "metrics.csv"));

    // a seed override must change the run
    REQUIRE(run_cmd(base + " --seed 100 --out " + (tmp.path / "c").string(), tmp.path)
                .code == 0);
    REQUIRE(slurp(tmp.path / "a" / "chain.bin") != slurp(tmp.path / "c" / "chain.bin"));
}

TEST_CASE("inspect-block dumps header fields and per-transaction digests") {
    TempDir tmp;
    spit(tmp.path / "cfg.json", minimal_config(2, 2));
    run_cmd("run --config " + (tmp.path / "cfg.json").string() + " --out " +
                (tmp.path / "out").string(),
            tmp.path);
    auto r = run_cmd("inspect-block --chain " + (tmp.path / "out" / "chain.bin").string() +
                         " --round 1",
                     tmp.path);
    REQUIRE(r.code == 0);
    REQUIRE(r.out.find("index: 1") != std::string::npos);
    REQUIRE(r.out.find("prev_hash: ") != std::string::npos);
    REQUIRE(r.out.find("transactions: 2") != std::string::npos);
    REQUIRE(r.out.find("participant 0") != std::string::npos);

    auto missing = run_cmd("inspect-block --chain " +
                               (tmp.path / "out" / "chain.bin").string() + " --round 7",
                           tmp.path);
    REQUIRE(missing.code == 2);
}
