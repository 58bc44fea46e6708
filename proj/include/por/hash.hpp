#pragma once

#include <array>
#include <cstdint>
#include <cstddef>
#include <string>
#include <vector>

#include <openssl/evp.h>

#include "por/error.hpp"

namespace por {

using Digest = std::array<std::uint8_t, 32>;

inline Digest sha256(const std::uint8_t* data, std::size_t size) {
    Digest out{};
    unsigned int out_len = 0;
    if (EVP_Digest(data, size, out.data(), &out_len, EVP_sha256(), nullptr) != 1 || out_len != out.size()) {
        throw Error("sha256: digest computation failed");
    }
    return out;
}

inline Digest sha256(const std::vector<std::uint8_t>& bytes) {
    return sha256(bytes.data(), bytes.size());
}

inline std::string to_hex(const Digest& digest) {
    static const char* alphabet = "0123456789abcdef";
    std::string hex;
    hex.reserve(64);
    for (std::uint8_t byte : digest) {
        hex.push_back(alphabet[byte >> 4]);
        hex.push_back(alphabet[byte & 0x0f]);
    }
    return hex;
}

inline Digest digest_from_hex(const std::string& hex) {
    if (hex.size() != 64) throw InvalidInput("digest_from_hex: expected 64 hex characters");
    auto nibble = [](char c) -> std::uint8_t {
        if (c >= '0' && c <= '9') return static_cast<std::uint8_t>(c - '0');
        if (c >= 'a' && c <= 'f') return static_cast<std::uint8_t>(c - 'a' + 10);
        if (c >= 'A' && c <= 'F') return static_cast<std::uint8_t>(c - 'A' + 10);
        throw InvalidInput("digest_from_hex: invalid hex character");
    };
    Digest digest{};
    for (std::size_t i = 0; i < 32; ++i) {
        digest[i] = static_cast<std::uint8_t>((nibble(hex[2 * i]) << 4) | nibble(hex[2 * i + 1]));
    }
    return digest;
}

inline constexpr Digest zero_digest() { return Digest{}; }

} // namespace por
