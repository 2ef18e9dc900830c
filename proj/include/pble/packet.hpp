#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <stdexcept>

#include "pble/bits.hpp"
#include "pble/gf2.hpp"

namespace pble {

enum class PhyMode { LE1M, LE2M };

inline std::size_t preamble_len_bytes(PhyMode mode) {
    return mode == PhyMode::LE1M ? 1 : 2;
}

inline double symbol_rate(PhyMode mode) {
    return mode == PhyMode::LE1M ? 1.0e6 : 2.0e6;
}

inline const char* phy_mode_name(PhyMode mode) {
    return mode == PhyMode::LE1M ? "LE1M" : "LE2M";
}

inline std::optional<PhyMode> phy_mode_from_name(const std::string& s) {
    if (s == "LE1M" || s == "le1m") return PhyMode::LE1M;
    if (s == "LE2M" || s == "le2m") return PhyMode::LE2M;
    return std::nullopt;
}

using AccessAddress = std::array<std::uint8_t, 4>;

inline constexpr std::size_t kMaxPduPayloadBytes = 251;
inline constexpr std::size_t kMaxInnerPayloadLe1m = 241; // 251 - 7 - 3
inline constexpr std::size_t kMaxInnerPayloadLe2m = 240; // 251 - 8 - 3

inline std::size_t max_inner_payload(PhyMode mode) {
    return mode == PhyMode::LE1M ? kMaxInnerPayloadLe1m : kMaxInnerPayloadLe2m;
}

// Preamble alternates 0/1 on air; variant picked by the access address LSB
// so the last preamble bit differs from the first address bit.
inline Bytes preamble_bytes(PhyMode mode, const AccessAddress& aa) {
    const std::uint8_t pattern = (aa[0] & 1u) ? 0x55 : 0xAA;
    return Bytes(preamble_len_bytes(mode), pattern);
}

struct BlePacket {
    PhyMode mode = PhyMode::LE1M;
    Bytes preamble;
    AccessAddress access_address{};
    std::array<std::uint8_t, 2> header{};
    Bytes payload;
    std::uint32_t crc = 0; // 24-bit, stored as a value; on air MSB-first

    std::size_t on_air_bytes() const {
        return preamble.size() + 4 + 2 + payload.size() + 3;
    }

    // PDU region = header + payload; the region CRC generation and
    // whitening operate on.
    BitSeq pdu_bits() const {
        Bytes pdu(header.begin(), header.end());
        pdu.insert(pdu.end(), payload.begin(), payload.end());
        return bytes_to_bits(pdu);
    }
};

inline BlePacket build_packet(PhyMode mode, const AccessAddress& aa,
                              const std::array<std::uint8_t, 2>& header,
                              Bytes payload) {
    if (payload.size() > kMaxPduPayloadBytes)
        throw std::invalid_argument("payload exceeds 251 bytes");
    BlePacket p;
    p.mode = mode;
    p.preamble = preamble_bytes(mode, aa);
    p.access_address = aa;
    p.header = header;
    p.payload = std::move(payload);
    return p;
}

inline Bytes serialize(const BlePacket& p) {
    Bytes out = p.preamble;
    out.insert(out.end(), p.access_address.begin(), p.access_address.end());
    out.insert(out.end(), p.header.begin(), p.header.end());
    out.insert(out.end(), p.payload.begin(), p.payload.end());
    // CRC in transmit byte order: register bits 23..16, 15..8, 7..0 with
    // each byte later serialized LSB-first matching crc24_bits order.
    const BitSeq cb = crc24_bits(p.crc);
    Bytes crc_bytes = bits_to_bytes(cb);
    out.insert(out.end(), crc_bytes.begin(), crc_bytes.end());
    return out;
}

inline BlePacket parse(PhyMode mode, const Bytes& raw) {
    const std::size_t pre = preamble_len_bytes(mode);
    if (raw.size() < pre + 4 + 2 + 3)
        throw std::invalid_argument("packet too short");
    BlePacket p;
    p.mode = mode;
    p.preamble.assign(raw.begin(), raw.begin() + pre);
    std::copy(raw.begin() + pre, raw.begin() + pre + 4, p.access_address.begin());
    p.header = {raw[pre + 4], raw[pre + 5]};
    p.payload.assign(raw.begin() + pre + 6, raw.end() - 3);
    const Bytes crc_bytes(raw.end() - 3, raw.end());
    const BitSeq cb = bytes_to_bits(crc_bytes);
    p.crc = 0;
    for (int i = 0; i < 24; ++i)
        p.crc |= static_cast<std::uint32_t>(cb[i]) << (23 - i);
    return p;
}

// ---------------------------------------------------------------------------
// Carrier packet: outer excitation packet whose payload hosts an inner BLE
// packet. The first inner_offset bytes (inner preamble + AA + header) are
// frequency-shifted by the tag without phase changes; the rest (inner
// payload + inner CRC) is the XOR region.
// ---------------------------------------------------------------------------

struct CarrierPacket {
    BlePacket outer;
    std::size_t inner_offset_bytes = 7;
    AccessAddress inner_aa{};
    std::array<std::uint8_t, 2> inner_header{};
    std::size_t inner_payload_len = 0;

    std::size_t xor_region_bytes() const { return inner_payload_len + 3; }

    // Region map over the outer payload, in bytes.
    struct RegionMap {
        std::size_t shift_only_begin; // inner preamble+AA+header
        std::size_t shift_only_end;
        std::size_t xor_begin; // inner payload + inner CRC
        std::size_t xor_end;
    };

    RegionMap region_map() const {
        return {0, inner_offset_bytes, inner_offset_bytes,
                inner_offset_bytes + xor_region_bytes()};
    }
};

struct InnerSpec {
    AccessAddress aa{};
    std::array<std::uint8_t, 2> header{};
    std::size_t payload_len = 0;
};

inline CarrierPacket build_carrier(PhyMode mode, const AccessAddress& outer_aa,
                                   const InnerSpec& inner) {
    if (inner.payload_len > max_inner_payload(mode))
        throw std::invalid_argument("inner capacity exceeded");
    CarrierPacket cp;
    cp.inner_offset_bytes = mode == PhyMode::LE1M ? 7 : 8;
    cp.inner_aa = inner.aa;
    cp.inner_header = inner.header;
    cp.inner_payload_len = inner.payload_len;

    Bytes outer_payload = preamble_bytes(mode, inner.aa);
    outer_payload.insert(outer_payload.end(), inner.aa.begin(), inner.aa.end());
    outer_payload.insert(outer_payload.end(), inner.header.begin(),
                         inner.header.end());
    // XOR region placeholder; actual on-air bits come from the premod
    // sequence and the tag's chips.
    outer_payload.resize(outer_payload.size() + cp.xor_region_bytes(), 0);

    cp.outer = build_packet(mode, outer_aa, {0, 0}, std::move(outer_payload));
    return cp;
}

// ---------------------------------------------------------------------------
// Redundant access-address coding for tag activation.
//
// Each logical id bit expands to a group of n BLE symbols: bit 0 is an
// all-zero group; bit 1 carries a single 0->1 transition at the start of
// the group ("01" then zeros). For n == 1 the symbol is the bit itself.
// Address space is 2^(32/n) ids.
// ---------------------------------------------------------------------------

inline void check_redundancy_factor(unsigned n) {
    if (n == 0 || 32 % n != 0)
        throw std::invalid_argument("n must divide 32");
}

inline std::uint64_t tag_address_capacity(unsigned n) {
    check_redundancy_factor(n);
    return 1ull << (32 / n);
}

struct TagAddressCode {
    std::uint32_t tag_id = 0;
    unsigned n = 8;
    AccessAddress encoded_aa{};
};

// Symbol k of the address is on-air bit k (LSB-first within each byte).
inline AccessAddress encode_tag_address(std::uint32_t tag_id, unsigned n) {
    check_redundancy_factor(n);
    const unsigned id_bits = 32 / n;
    if (id_bits < 32 && tag_id >= (1u << id_bits))
        throw std::invalid_argument("tag id out of range for n");
    BitSeq symbols(32, 0);
    for (unsigned j = 0; j < id_bits; ++j) {
        const unsigned bit = (tag_id >> (id_bits - 1 - j)) & 1u;
        if (!bit) continue;
        if (n == 1)
            symbols[j] = 1;
        else
            symbols[j * n + 1] = 1; // group pattern 0,1,0,...,0
    }
    Bytes b = bits_to_bytes(symbols);
    return {b[0], b[1], b[2], b[3]};
}

inline TagAddressCode make_tag_address(std::uint32_t tag_id, unsigned n) {
    return {tag_id, n, encode_tag_address(tag_id, n)};
}

inline BitSeq tag_address_symbols(const AccessAddress& aa) {
    return bytes_to_bits(Bytes(aa.begin(), aa.end()));
}

// Decode a 32-slot rising-transition pulse stream into a tag id. A group is
// bit 0 when pulse-free and bit 1 when its only pulse sits at the encoder's
// transition slot; any other pulse pattern is a no-match.
inline std::optional<std::uint32_t> decode_activation(const BitSeq& pulses,
                                                      unsigned n) {
    check_redundancy_factor(n);
    if (pulses.size() != 32)
        throw std::invalid_argument("pulse stream must cover 32 symbol slots");
    const unsigned id_bits = 32 / n;
    std::uint32_t id = 0;
    for (unsigned j = 0; j < id_bits; ++j) {
        unsigned count = 0;
        bool at_mark = false;
        for (unsigned k = 0; k < n; ++k) {
            if (!pulses[j * n + k]) continue;
            ++count;
            at_mark = (n == 1) ? (k == 0) : (k == 1);
        }
        if (count == 0) {
            id <<= 1;
        } else if (count == 1 && at_mark) {
            id = (id << 1) | 1u;
        } else {
            return std::nullopt;
        }
    }
    return id;
}

// Expected rising-transition pulse pattern for an encoded address through a
// noiseless discriminator: a pulse wherever the symbol stream steps 0 -> 1.
inline BitSeq expected_pulses(const AccessAddress& aa,
                              std::uint8_t prev_symbol = 0) {
    const BitSeq symbols = tag_address_symbols(aa);
    BitSeq pulses(32, 0);
    std::uint8_t prev = prev_symbol;
    for (std::size_t k = 0; k < 32; ++k) {
        pulses[k] = static_cast<std::uint8_t>(!prev && symbols[k]);
        prev = symbols[k];
    }
    return pulses;
}

} // namespace pble
