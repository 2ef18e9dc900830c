#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>
#include <set>

#include "pble/packet.hpp"

using namespace pble;

TEST_CASE("packet structure arithmetic") {
    const AccessAddress aa{0xD6, 0xBE, 0x89, 0x8E};

    SUBCASE("empty payload PDU size") {
        auto p = build_packet(PhyMode::LE1M, aa, {0x02, 0x00}, {});
        CHECK(p.payload.empty());
        // header + CRC only in the PDU region
        CHECK(p.on_air_bytes() == 1 + 4 + 2 + 0 + 3);
    }
    SUBCASE("LE1M max frame is 261 bytes on air") {
        auto p = build_packet(PhyMode::LE1M, aa, {0x02, 251}, Bytes(251, 0xAB));
        CHECK(p.on_air_bytes() == 261);
    }
    SUBCASE("oversize payload rejected") {
        CHECK_THROWS_AS(build_packet(PhyMode::LE1M, aa, {0, 0}, Bytes(252, 0)),
                        std::invalid_argument);
    }
    SUBCASE("preamble follows access-address LSB") {
        auto even = build_packet(PhyMode::LE1M, AccessAddress{0x10, 0, 0, 0}, {0, 0}, {});
        CHECK(even.preamble == Bytes{0xAA});
        auto odd = build_packet(PhyMode::LE2M, AccessAddress{0x11, 0, 0, 0}, {0, 0}, {});
        CHECK(odd.preamble == Bytes(2, 0x55));
    }
}

TEST_CASE("serialize/parse round trip") {
    std::mt19937_64 rng(3);
    for (int t = 0; t < 200; ++t) {
        const PhyMode mode = (rng() & 1) ? PhyMode::LE1M : PhyMode::LE2M;
        AccessAddress aa;
        for (auto& b : aa) b = static_cast<std::uint8_t>(rng());
        Bytes payload(rng() % 252);
        for (auto& b : payload) b = static_cast<std::uint8_t>(rng());
        auto p = build_packet(mode, aa, {static_cast<std::uint8_t>(rng()),
                                         static_cast<std::uint8_t>(rng())},
                              payload);
        p.crc = static_cast<std::uint32_t>(rng()) & 0xFFFFFF;
        const BlePacket q = parse(mode, serialize(p));
        CHECK(q.preamble == p.preamble);
        CHECK(q.access_address == p.access_address);
        CHECK(q.header == p.header);
        CHECK(q.payload == p.payload);
        CHECK(q.crc == p.crc);
    }
}

TEST_CASE("carrier packet layout") {
    const AccessAddress outer{0x11, 0x22, 0x33, 0x44};
    InnerSpec inner;
    inner.aa = {0xAA, 0xBB, 0xCC, 0xDD};
    inner.header = {0x02, 0x10};
    inner.payload_len = 16;

    SUBCASE("inner offset per PHY mode") {
        CHECK(build_carrier(PhyMode::LE1M, outer, inner).inner_offset_bytes == 7);
        CHECK(build_carrier(PhyMode::LE2M, outer, inner).inner_offset_bytes == 8);
    }
    SUBCASE("inner capacity bounds") {
        inner.payload_len = 241;
        auto cp = build_carrier(PhyMode::LE1M, outer, inner);
        CHECK(cp.outer.payload.size() == 7 + 241 + 3);
        CHECK(cp.outer.payload.size() <= kMaxPduPayloadBytes);
        inner.payload_len = 242;
        CHECK_THROWS_WITH_AS(build_carrier(PhyMode::LE1M, outer, inner),
                             "inner capacity exceeded", std::invalid_argument);
        inner.payload_len = 240;
        auto cp2 = build_carrier(PhyMode::LE2M, outer, inner);
        CHECK(cp2.outer.payload.size() == 8 + 240 + 3);
        inner.payload_len = 241;
        CHECK_THROWS_AS(build_carrier(PhyMode::LE2M, outer, inner),
                        std::invalid_argument);
    }
    SUBCASE("region map partitions the outer payload") {
        for (auto mode : {PhyMode::LE1M, PhyMode::LE2M}) {
            for (std::size_t len : {std::size_t{0}, std::size_t{1}, std::size_t{100},
                                    max_inner_payload(mode)}) {
                inner.payload_len = len;
                const auto cp = build_carrier(mode, outer, inner);
                const auto rm = cp.region_map();
                CHECK(rm.shift_only_begin == 0);
                CHECK(rm.shift_only_end == rm.xor_begin);
                CHECK(rm.xor_end == cp.outer.payload.size());
            }
        }
    }
}

TEST_CASE("tag address coding") {
    SUBCASE("n=2 coding rule: bit 1 -> \"01\", bit 0 -> \"00\"") {
        // id with bit pattern 10 in its two most significant positions
        const auto aa = encode_tag_address(0x8000u, 2);
        const BitSeq symbols = tag_address_symbols(aa);
        CHECK(symbols[0] == 0);
        CHECK(symbols[1] == 1); // first group "01"
        CHECK(symbols[2] == 0);
        CHECK(symbols[3] == 0); // second group "00"
    }
    SUBCASE("address capacity per redundancy factor") {
        CHECK(tag_address_capacity(8) == 16);
        CHECK(tag_address_capacity(1) == (1ull << 32));
        CHECK(tag_address_capacity(32) == 2);
        CHECK_THROWS_AS(tag_address_capacity(3), std::invalid_argument);
        CHECK_THROWS_AS(encode_tag_address(16, 8), std::invalid_argument);
    }
    SUBCASE("addresses pairwise distinct and round trip, n in {2,4,8,16,32}") {
        for (unsigned n : {2u, 4u, 8u, 16u, 32u}) {
            const std::uint64_t cap = tag_address_capacity(n);
            const std::uint64_t limit = std::min<std::uint64_t>(cap, 4096);
            std::set<AccessAddress> seen;
            for (std::uint64_t id = 0; id < limit; ++id) {
                const auto aa = encode_tag_address(static_cast<std::uint32_t>(id), n);
                CHECK(seen.insert(aa).second);
                const auto got = decode_activation(expected_pulses(aa), n);
                REQUIRE(got.has_value());
                CHECK(*got == id);
            }
        }
    }
    SUBCASE("n=1 uses plain symbol levels") {
        // with one symbol per bit the address bits are the id itself
        const auto aa = encode_tag_address(0xDEADBEEF, 1);
        const BitSeq symbols = tag_address_symbols(aa);
        const auto got = decode_activation(symbols, 1);
        REQUIRE(got.has_value());
        CHECK(*got == 0xDEADBEEF);
    }
}

TEST_CASE("activation decoding") {
    SUBCASE("all-zero pulse stream is tag 0") {
        const auto got = decode_activation(BitSeq(32, 0), 8);
        REQUIRE(got.has_value());
        CHECK(*got == 0);
    }
    SUBCASE("single flipped pulse never silently keeps the original id") {
        for (std::uint32_t id = 0; id < 16; ++id) {
            const BitSeq clean = expected_pulses(encode_tag_address(id, 8));
            REQUIRE(decode_activation(clean, 8) == id);
            for (std::size_t k = 0; k < 32; ++k) {
                BitSeq flipped = clean;
                flipped[k] ^= 1;
                const auto got = decode_activation(flipped, 8);
                CHECK((!got.has_value() || *got != id));
            }
        }
    }
    SUBCASE("wrong slot count rejected") {
        CHECK_THROWS_AS(decode_activation(BitSeq(31, 0), 8), std::invalid_argument);
    }
}
