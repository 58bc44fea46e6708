#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "por/chain.hpp"
#include "por/codec.hpp"
#include "por/error.hpp"
#include "por/hash.hpp"

namespace por {

// Content-addressed file store: each blob lives in one file named by the
// lowercase hex of its digest. Blocks reference bodies by digest, so a chain
// plus a store reconstructs everything a fully inline chain holds.
class OffchainStore {
public:
    explicit OffchainStore(std::filesystem::path dir) : dir_(std::move(dir)) {
        std::error_code ec;
        std::filesystem::create_directories(dir_, ec);
        if (ec) throw StorageError("store: cannot create directory " + dir_.string());
    }

    const std::filesystem::path& dir() const { return dir_; }

    Digest put(const std::vector<std::uint8_t>& bytes) {
        const Digest d = sha256(bytes);
        const auto path = path_for(d);
        if (std::filesystem::exists(path)) return d;
        std::ofstream out(path, std::ios::binary | std::ios::trunc);
        if (!out) throw StorageError("store: cannot open " + path.string() + " for writing");
        out.write(reinterpret_cast<const char*>(bytes.data()),
                  static_cast<std::streamsize>(bytes.size()));
        if (!out) throw StorageError("store: short write to " + path.string());
        return d;
    }

    bool has(const Digest& d) const { return std::filesystem::exists(path_for(d)); }

    std::vector<std::uint8_t> get(const Digest& d) const {
        const auto path = path_for(d);
        std::ifstream in(path, std::ios::binary);
        if (!in) throw StorageError("store: missing blob " + to_hex(d));
        std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                        std::istreambuf_iterator<char>());
        if (sha256(bytes) != d) {
            throw IntegrityError("store: blob " + to_hex(d) + " does not match its name");
        }
        return bytes;
    }

private:
    std::filesystem::path path_for(const Digest& d) const { return dir_ / to_hex(d); }

    std::filesystem::path dir_;
};

// Checks the chain itself, then checks that the store holds a body for every
// summarized transaction and that each body reproduces its summary exactly.
inline void verify_chain_with_store(const Chain& chain, const OffchainStore& store) {
    chain.verify();
    for (const Block& b : chain.blocks()) {
        for (const TxSummary& s : b.summaries) {
            const auto body = store.get(s.tx_digest);
            Transaction tx;
            try {
                tx = deserialize_transaction(body);
            } catch (const Error& e) {
                throw IntegrityError("store: blob " + to_hex(s.tx_digest) +
                                     " does not decode: " + e.what());
            }
            if (!(make_summary(tx) == s)) {
                throw IntegrityError("store: blob " + to_hex(s.tx_digest) +
                                     " does not reproduce its on-chain summary");
            }
        }
    }
}

} // namespace por
