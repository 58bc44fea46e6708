#pragma once

#include <cstdint>
#include <cstring>
#include <vector>

#include "por/error.hpp"

namespace por {

// Canonical wire primitives: little-endian fixed-width integers, IEEE-754
// binary64 reals stored by bit pattern, raw byte runs. Every composite type
// is encoded as its fields in declaration order, lists as u64 count plus
// elements, which keeps the encoding injective and platform independent.
class ByteWriter {
  public:
    void put_u8(std::uint8_t value) { buffer_.push_back(value); }

    void put_u64(std::uint64_t value) {
        for (int i = 0; i < 8; ++i) buffer_.push_back(static_cast<std::uint8_t>(value >> (8 * i)));
    }

    void put_f64(double value) {
        std::uint64_t bits = 0;
        std::memcpy(&bits, &value, sizeof bits);
        put_u64(bits);
    }

    void put_bytes(const std::uint8_t* data, std::size_t size) {
        buffer_.insert(buffer_.end(), data, data + size);
    }

    void put_bytes(const std::vector<std::uint8_t>& bytes) { put_bytes(bytes.data(), bytes.size()); }

    const std::vector<std::uint8_t>& bytes() const { return buffer_; }
    std::vector<std::uint8_t> take() { return std::move(buffer_); }

  private:
    std::vector<std::uint8_t> buffer_;
};

class ByteReader {
  public:
    ByteReader(const std::uint8_t* data, std::size_t size) : data_(data), size_(size) {}
    explicit ByteReader(const std::vector<std::uint8_t>& bytes) : ByteReader(bytes.data(), bytes.size()) {}

    std::uint8_t get_u8() {
        need(1);
        return data_[pos_++];
    }

    std::uint64_t get_u64() {
        need(8);
        std::uint64_t value = 0;
        for (int i = 0; i < 8; ++i) value |= static_cast<std::uint64_t>(data_[pos_ + i]) << (8 * i);
        pos_ += 8;
        return value;
    }

    double get_f64() {
        const std::uint64_t bits = get_u64();
        double value = 0.0;
        std::memcpy(&value, &bits, sizeof value);
        return value;
    }

    void get_bytes(std::uint8_t* out, std::size_t size) {
        need(size);
        std::memcpy(out, data_ + pos_, size);
        pos_ += size;
    }

    // Bounded list count: a corrupt length prefix must not turn into a huge
    // allocation, so counts are checked against the bytes that remain.
    std::uint64_t get_count(std::size_t min_element_size) {
        const std::uint64_t count = get_u64();
        if (min_element_size > 0 && count > remaining() / min_element_size) {
            throw DecodeError("list count exceeds remaining bytes");
        }
        return count;
    }

    std::size_t remaining() const { return size_ - pos_; }
    std::size_t position() const { return pos_; }

    void expect_end() const {
        if (pos_ != size_) throw DecodeError("trailing bytes after value");
    }

  private:
    void need(std::size_t n) {
        if (size_ - pos_ < n) throw DecodeError("unexpected end of input");
    }

    const std::uint8_t* data_;
    std::size_t size_;
    std::size_t pos_ = 0;
};

} // namespace por
