#pragma once

#include <cstdint>
#include <cstdio>
#include <stdexcept>
#include <string>
#include <vector>

namespace pble {

// One element per bit, values 0/1. Index 0 is the first bit on air.
using BitSeq = std::vector<std::uint8_t>;
using Bytes = std::vector<std::uint8_t>;

// On-air order: least significant bit of each byte first.
inline BitSeq bytes_to_bits(const Bytes& bytes) {
    BitSeq bits;
    bits.reserve(bytes.size() * 8);
    for (std::uint8_t b : bytes)
        for (int i = 0; i < 8; ++i)
            bits.push_back(static_cast<std::uint8_t>((b >> i) & 1u));
    return bits;
}

inline Bytes bits_to_bytes(const BitSeq& bits) {
    if (bits.size() % 8 != 0)
        throw std::invalid_argument("bit count not a multiple of 8");
    Bytes bytes(bits.size() / 8, 0);
    for (std::size_t i = 0; i < bits.size(); ++i)
        if (bits[i]) bytes[i / 8] |= static_cast<std::uint8_t>(1u << (i % 8));
    return bytes;
}

inline BitSeq xor_bits(const BitSeq& a, const BitSeq& b) {
    if (a.size() != b.size())
        throw std::invalid_argument("xor_bits: length mismatch");
    BitSeq out(a.size());
    for (std::size_t i = 0; i < a.size(); ++i)
        out[i] = a[i] ^ b[i];
    return out;
}

inline std::string to_hex(const Bytes& bytes) {
    static const char* digits = "0123456789ABCDEF";
    std::string s;
    s.reserve(bytes.size() * 2);
    for (std::uint8_t b : bytes) {
        s.push_back(digits[b >> 4]);
        s.push_back(digits[b & 0xF]);
    }
    return s;
}

inline Bytes from_hex(const std::string& hex) {
    if (hex.size() % 2 != 0)
        throw std::invalid_argument("hex string has odd length");
    auto nibble = [](char c) -> std::uint8_t {
        if (c >= '0' && c <= '9') return static_cast<std::uint8_t>(c - '0');
        if (c >= 'a' && c <= 'f') return static_cast<std::uint8_t>(c - 'a' + 10);
        if (c >= 'A' && c <= 'F') return static_cast<std::uint8_t>(c - 'A' + 10);
        throw std::invalid_argument("bad hex digit");
    };
    Bytes out(hex.size() / 2);
    for (std::size_t i = 0; i < out.size(); ++i)
        out[i] = static_cast<std::uint8_t>((nibble(hex[2 * i]) << 4) | nibble(hex[2 * i + 1]));
    return out;
}

} // namespace pble
