// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <stdexcept>
#include <string>
#include <vector>

// Little-endian byte packing for the binary file formats. Explicit shifts,
// so layouts are identical on any host.

namespace ropim::wire {

struct FormatError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

inline void put_u8(std::vector<uint8_t>& b, uint8_t v) { b.push_back(v); }

inline void put_u16(std::vector<uint8_t>& b, uint16_t v) {
    b.push_back(static_cast<uint8_t>(v));
    b.push_back(static_cast<uint8_t>(v >> 8));
}

inline void put_u32(std::vector<uint8_t>& b, uint32_t v) {
    for (int i = 0; i < 4; ++i) b.push_back(static_cast<uint8_t>(v >> (8 * i)));
}

inline void put_u64(std::vector<uint8_t>& b, uint64_t v) {
    for (int i = 0; i < 8; ++i) b.push_back(static_cast<uint8_t>(v >> (8 * i)));
}

inline void put_i8(std::vector<uint8_t>& b, int8_t v) { b.push_back(static_cast<uint8_t>(v)); }

inline void put_f32(std::vector<uint8_t>& b, float v) { put_u32(b, std::bit_cast<uint32_t>(v)); }

inline void put_f64(std::vector<uint8_t>& b, double v) { put_u64(b, std::bit_cast<uint64_t>(v)); }

inline void put_bytes(std::vector<uint8_t>& b, const void* p, size_t n) {
    const auto* c = static_cast<const uint8_t*>(p);
    for (size_t i = 0; i < n; ++i) b.push_back(c[i]);
}

class Reader {
public:
    Reader(const uint8_t* data, size_t size) : p_(data), end_(data + size) {}
    explicit Reader(const std::vector<uint8_t>& b) : Reader(b.data(), b.size()) {}

    size_t offset() const { return off_; }
    size_t remaining() const { return static_cast<size_t>(end_ - p_); }

    uint8_t u8() {
        need(1);
        uint8_t v = *p_;
        advance(1);
        return v;
    }
    uint16_t u16() {
        need(2);
        uint16_t v = static_cast<uint16_t>(p_[0] | (p_[1] << 8));
        advance(2);
        return v;
    }
    uint32_t u32() {
        need(4);
        uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(p_[i]) << (8 * i);
        advance(4);
        return v;
    }
    uint64_t u64() {
        need(8);
        uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(p_[i]) << (8 * i);
        advance(8);
        return v;
    }
    int8_t i8() { return static_cast<int8_t>(u8()); }
    float f32() { return std::bit_cast<float>(u32()); }
    double f64() { return std::bit_cast<double>(u64()); }

    std::string str(size_t n) {
        need(n);
        std::string s(reinterpret_cast<const char*>(p_), n);
        advance(n);
        return s;
    }

    void need(size_t n) const {
        if (remaining() < n)
            throw FormatError("truncated input at byte offset " + std::to_string(off_));
    }

private:
    void advance(size_t n) {
        p_ += n;
        off_ += n;
    }
    const uint8_t* p_;
    const uint8_t* end_;
    size_t off_ = 0;
};

std::vector<uint8_t> read_file(const std::string& path);
void write_file(const std::string& path, const std::vector<uint8_t>& bytes);

}  // namespace ropim::wire
