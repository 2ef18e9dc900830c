#pragma once

#include <cstdint>
#include <stdexcept>
#include <vector>

#include "pble/bits.hpp"

namespace pble {

// Polynomial over GF(2). coeff_[i] is the coefficient of x^i.
// Canonical form: no stored coefficient beyond the degree; the zero
// polynomial has an empty coefficient vector and degree() == -1.
class Gf2Poly {
public:
    Gf2Poly() = default;

    // bits[i] taken as coefficient of x^i.
    explicit Gf2Poly(BitSeq coeffs) : coeff_(std::move(coeffs)) { trim(); }

    static Gf2Poly from_exponents(std::initializer_list<int> exps) {
        BitSeq c;
        for (int e : exps) {
            if (e < 0) throw std::invalid_argument("negative exponent");
            if (c.size() <= static_cast<std::size_t>(e)) c.resize(e + 1, 0);
            c[e] ^= 1u;
        }
        return Gf2Poly(std::move(c));
    }

    // BLE CRC generator g(x) = x^24 + x^10 + x^9 + x^6 + x^4 + x^3 + x + 1.
    static Gf2Poly ble_crc_generator() {
        return from_exponents({24, 10, 9, 6, 4, 3, 1, 0});
    }

    int degree() const { return static_cast<int>(coeff_.size()) - 1; }
    bool is_zero() const { return coeff_.empty(); }
    const BitSeq& coefficients() const { return coeff_; }

    std::uint8_t coeff(std::size_t i) const {
        return i < coeff_.size() ? coeff_[i] : 0;
    }

    friend Gf2Poly operator^(const Gf2Poly& a, const Gf2Poly& b) {
        BitSeq c(std::max(a.coeff_.size(), b.coeff_.size()), 0);
        for (std::size_t i = 0; i < c.size(); ++i)
            c[i] = a.coeff(i) ^ b.coeff(i);
        return Gf2Poly(std::move(c));
    }

    friend bool operator==(const Gf2Poly& a, const Gf2Poly& b) {
        return a.coeff_ == b.coeff_;
    }

private:
    void trim() {
        while (!coeff_.empty() && coeff_.back() == 0) coeff_.pop_back();
    }

    BitSeq coeff_;
};

// Remainder of a modulo g, long division over GF(2).
inline Gf2Poly poly_mod(const Gf2Poly& a, const Gf2Poly& g) {
    if (g.is_zero())
        throw std::invalid_argument("division by zero polynomial");
    BitSeq r = a.coefficients();
    const int dg = g.degree();
    for (int i = static_cast<int>(r.size()) - 1; i >= dg; --i) {
        if (!r[i]) continue;
        for (int j = 0; j <= dg; ++j)
            r[i - dg + j] ^= g.coeff(j);
    }
    return Gf2Poly(std::move(r));
}

// ---------------------------------------------------------------------------
// BLE CRC-24
//
// Convention (see CONVENTIONS.md): 24-bit LFSR, message bits enter least
// significant bit of each byte first; feedback tap mask 0x00065B encodes
// x^10+x^9+x^6+x^4+x^3+x+1 with x^24 implicit. The checksum is transmitted
// most significant register bit first.
// ---------------------------------------------------------------------------

inline constexpr std::uint32_t kCrc24Mask = 0xFFFFFFu;
inline constexpr std::uint32_t kCrc24Taps = 0x00065Bu;

struct CrcState {
    std::uint32_t reg = 0;  // 24-bit LFSR state
    std::uint32_t init = 0; // CRC_Init the register was loaded with

    explicit CrcState(std::uint32_t initial = 0)
        : reg(initial & kCrc24Mask), init(initial & kCrc24Mask) {}

    void feed(std::uint8_t bit) {
        const std::uint32_t fb = ((reg >> 23) & 1u) ^ (bit & 1u);
        reg = (reg << 1) & kCrc24Mask;
        if (fb) reg ^= kCrc24Taps;
    }
};

inline std::uint32_t crc24(const BitSeq& message, std::uint32_t init) {
    CrcState st(init);
    for (std::uint8_t b : message) st.feed(b);
    return st.reg;
}

// 24 checksum bits in transmit order (register MSB first).
inline BitSeq crc24_bits(std::uint32_t crc) {
    BitSeq bits(24);
    for (int i = 0; i < 24; ++i)
        bits[i] = static_cast<std::uint8_t>((crc >> (23 - i)) & 1u);
    return bits;
}

// Distributive split of the checksum: the tag part depends only on the
// message, the source part only on CRC_Init. XOR of the two equals
// crc24(message, init) by LFSR linearity.
struct CrcSplit {
    std::uint32_t tag_part;
    std::uint32_t source_part;
};

inline CrcSplit crc24_split(const BitSeq& message, std::uint32_t init) {
    const BitSeq zeros(message.size(), 0);
    return {crc24(message, 0), crc24(zeros, init)};
}

// ---------------------------------------------------------------------------
// Data whitening
//
// 7-bit Fibonacci LFSR for x^7 + x^4 + 1, register initialized with bit 6
// set to 1 and bits 5..0 holding the channel index. Output is bit 6 before
// each shift. Maximal length, period 127.
// ---------------------------------------------------------------------------

struct WhitenState {
    std::uint8_t reg = 0x40;
    int channel_index = 0;

    explicit WhitenState(int channel) : channel_index(channel) {
        if (channel < 0 || channel > 39)
            throw std::invalid_argument("channel index out of range 0..39");
        reg = static_cast<std::uint8_t>(0x40u | static_cast<unsigned>(channel));
    }

    std::uint8_t next() {
        const std::uint8_t out = (reg >> 6) & 1u;
        const std::uint8_t fb = out ^ ((reg >> 3) & 1u);
        reg = static_cast<std::uint8_t>(((reg << 1) | fb) & 0x7Fu);
        return out;
    }
};

inline BitSeq whiten_seq(int channel_index, std::size_t n_bits) {
    WhitenState st(channel_index);
    BitSeq out(n_bits);
    for (std::size_t i = 0; i < n_bits; ++i) out[i] = st.next();
    return out;
}

inline BitSeq whiten(const BitSeq& data, int channel_index) {
    return xor_bits(data, whiten_seq(channel_index, data.size()));
}

// ---------------------------------------------------------------------------
// Distributed encoding
// ---------------------------------------------------------------------------

inline constexpr std::size_t kMaxTagMessageBytes = 241;

// Pre-modulated excitation sequence covering the header+payload+CRC region:
// the CRC_Init remainder placed in the CRC field, XORed with the whitening
// sequence for the connection channel.
struct PremodSequence {
    BitSeq bits;
    std::size_t region_len_bits = 0;
};

inline PremodSequence source_premod(std::uint32_t init, int channel_index,
                                    std::size_t payload_len_bits,
                                    std::size_t header_len_bits,
                                    bool whitening_enabled = true) {
    const std::size_t data_bits = header_len_bits + payload_len_bits;
    BitSeq seq(data_bits, 0);
    const std::uint32_t crc = crc24(BitSeq(data_bits, 0), init);
    const BitSeq crc_bits = crc24_bits(crc);
    seq.insert(seq.end(), crc_bits.begin(), crc_bits.end());
    if (whitening_enabled) seq = whiten(seq, channel_index);
    return {std::move(seq), data_bits + 24};
}

// The tag's contribution: message bits followed by the init-free checksum.
// Contains no dynamic parameter.
inline BitSeq tag_baseband(const Bytes& message) {
    if (message.size() > kMaxTagMessageBytes)
        throw std::invalid_argument("message exceeds inner payload capacity");
    BitSeq bits = bytes_to_bits(message);
    const BitSeq crc_bits = crc24_bits(crc24(bits, 0));
    bits.insert(bits.end(), crc_bits.begin(), crc_bits.end());
    return bits;
}

// What a standard BLE transmitter would put on air for the same PDU region:
// whiten(message || crc24(message, init)). Oracle for the distributed path.
inline BitSeq encode_monolithic(const Bytes& message, std::uint32_t init,
                                int channel_index,
                                bool whitening_enabled = true) {
    if (message.size() > kMaxTagMessageBytes)
        throw std::invalid_argument("message exceeds inner payload capacity");
    BitSeq bits = bytes_to_bits(message);
    const BitSeq crc_bits = crc24_bits(crc24(bits, init));
    bits.insert(bits.end(), crc_bits.begin(), crc_bits.end());
    if (whitening_enabled) bits = whiten(bits, channel_index);
    return bits;
}

} // namespace pble
