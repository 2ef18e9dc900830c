#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <map>
#include <random>
#include <set>

#include "pble/linklayer.hpp"

using namespace pble;

namespace {

// Independent oracle: probability of no run of >= run_len losses in n
// Bernoulli(p) trials, by dynamic programming over the current loss streak.
double no_run_probability(int n, double p, int run_len) {
    std::vector<double> state(static_cast<std::size_t>(run_len), 0.0);
    state[0] = 1.0;
    for (int i = 0; i < n; ++i) {
        std::vector<double> next(state.size(), 0.0);
        for (std::size_t s = 0; s < state.size(); ++s) {
            if (state[s] == 0.0) continue;
            next[0] += state[s] * (1.0 - p); // event ok resets the streak
            if (s + 1 < state.size()) next[s + 1] += state[s] * p;
            // a streak reaching run_len is absorbed (counted as failure)
        }
        state = std::move(next);
    }
    double alive = 0;
    for (double v : state) alive += v;
    return alive;
}

} // namespace

TEST_CASE("channel selection algorithm") {
    const std::uint64_t full_map = (1ull << kDataChannels) - 1;

    SUBCASE("full map never remaps") {
        int last = 0;
        for (int i = 0; i < 200; ++i) {
            const auto hop = csa_next_channel(last, 7, full_map);
            CHECK(hop.mapped == hop.unmapped);
            CHECK(hop.unmapped == (last + 7) % kDataChannels);
            last = hop.unmapped;
        }
    }
    SUBCASE("hand-stepped remap: map {0,36}, hop 5, last 0") {
        const std::uint64_t map = (1ull << 0) | (1ull << 36);
        const auto hop = csa_next_channel(0, 5, map);
        CHECK(hop.unmapped == 5);
        CHECK(hop.mapped == 36); // used[5 mod 2] = used[1]
    }
    SUBCASE("1e5 hops, full map, hop 7: each channel within 2% of uniform") {
        std::array<int, kDataChannels> counts{};
        int last = 0;
        const int n = 100000;
        for (int i = 0; i < n; ++i) {
            const auto hop = csa_next_channel(last, 7, full_map);
            ++counts[static_cast<std::size_t>(hop.mapped)];
            last = hop.unmapped;
        }
        const double uniform = static_cast<double>(n) / kDataChannels;
        for (int c = 0; c < kDataChannels; ++c)
            CHECK(std::abs(counts[static_cast<std::size_t>(c)] / uniform - 1.0) < 0.02);
    }
    SUBCASE("legality: mapped channel always in the map") {
        std::mt19937_64 rng(8);
        for (int t = 0; t < 200; ++t) {
            std::uint64_t map = rng() & full_map;
            int used = 0;
            for (int c = 0; c < kDataChannels; ++c)
                if (map & (1ull << c)) ++used;
            if (used < 2) continue;
            int last = static_cast<int>(rng() % kDataChannels);
            const int hop_inc = 5 + static_cast<int>(rng() % 12);
            for (int i = 0; i < 50; ++i) {
                const auto hop = csa_next_channel(last, hop_inc, map);
                CHECK(((map >> hop.mapped) & 1) == 1);
                last = hop.unmapped;
            }
        }
    }
    SUBCASE("degenerate map rejected") {
        CHECK_THROWS_AS(csa_next_channel(0, 5, 1ull << 3), std::invalid_argument);
    }
}

TEST_CASE("carrier channel arithmetic") {
    SUBCASE("Y=20, 8 MHz shift -> excitation channel 16") {
        CHECK(carrier_channel(20, 8e6) == 16);
    }
    SUBCASE("zero or non-multiple shifts rejected") {
        CHECK_THROWS_AS(carrier_channel(20, 0.0), std::invalid_argument);
        CHECK_THROWS_AS(carrier_channel(20, 3e6), std::invalid_argument);
    }
    SUBCASE("out-of-band result rejected") {
        CHECK_THROWS_AS(carrier_channel(1, 8e6), std::invalid_argument);
    }
    SUBCASE("end-to-end invariant over 1e4 hops") {
        const std::uint64_t map = ((1ull << kDataChannels) - 1) & ~0xFull;
        int last = 0;
        for (int i = 0; i < 10000; ++i) {
            const auto hop = csa_next_channel(last, 11, map);
            last = hop.unmapped;
            const int exc = carrier_channel(hop.mapped, 8e6);
            CHECK(exc + 4 == hop.mapped); // 8 MHz = 4 channel steps
        }
    }
}

TEST_CASE("connection params validation") {
    ConnectionParams p;
    CHECK_NOTHROW(p.validate());
    p.hop_increment = 4;
    CHECK_THROWS_AS(p.validate(), std::invalid_argument);
    p.hop_increment = 17;
    CHECK_THROWS_AS(p.validate(), std::invalid_argument);
    p.hop_increment = 16;
    p.channel_map = 1; // single channel
    CHECK_THROWS_AS(p.validate(), std::invalid_argument);
    p.channel_map = 1ull << kDataChannels; // out of mask
    CHECK_THROWS_AS(p.validate(), std::invalid_argument);
}

TEST_CASE("goodput model") {
    SUBCASE("LE2M 241-byte inner airtime is 1008 us") {
        CHECK(packet_airtime_s(PhyMode::LE2M, 241) == doctest::Approx(1008e-6));
    }
    SUBCASE("model equals hand-computed ledger") {
        GoodputConfig cfg; // LE2M, 241 B, 50 ms, 150 us IFS, 500 us guard
        // round trip: 1008 us data + 150 + 44 (11-byte empty PDU) + 150
        const double rt = 1008e-6 + 150e-6 + 44e-6 + 150e-6;
        const auto n = static_cast<std::uint32_t>((50e-3 - 500e-6) / rt);
        CHECK(packets_per_event(cfg) == n);
        CHECK(goodput_model_kbps(cfg) ==
              doctest::Approx(n * 241 * 8 / 50e-3 / 1000.0));
    }
    SUBCASE("doubling the interval leaves goodput nearly unchanged") {
        GoodputConfig a, b;
        b.conn_interval_s = 2 * a.conn_interval_s;
        CHECK(goodput_model_kbps(b) ==
              doctest::Approx(goodput_model_kbps(a)).epsilon(0.03));
    }
    SUBCASE("packet cap binds") {
        GoodputConfig cfg;
        cfg.packet_cap = 25;
        CHECK(packets_per_event(cfg) == 25);
        CHECK(goodput_model_kbps(cfg) == doctest::Approx(964.0));
        GoodputConfig le1m;
        le1m.mode = PhyMode::LE1M;
        le1m.packet_cap = 14;
        CHECK(goodput_model_kbps(le1m) == doctest::Approx(539.84));
    }
    SUBCASE("zero capacity errors") {
        GoodputConfig cfg;
        cfg.conn_interval_s = 1e-3;
        CHECK_THROWS_WITH_AS(packets_per_event(cfg),
                             "zero capacity: interval cannot fit one exchange",
                             std::invalid_argument);
    }
}

TEST_CASE("distributed data packet over a connection event") {
    SUBCASE("compose/receive round trip, CRC passes") {
        std::mt19937_64 rng(31);
        for (int t = 0; t < 100; ++t) {
            Bytes msg(rng() % 242);
            for (auto& b : msg) b = static_cast<std::uint8_t>(rng());
            const std::uint32_t init = static_cast<std::uint32_t>(rng()) & 0xFFFFFF;
            const int ch = static_cast<int>(rng() % 37);
            const auto pkt = compose_data_packet(
                {0x02, static_cast<std::uint8_t>(msg.size())}, msg, init, ch);
            const auto rx = receive_data_packet(combine_on_air(pkt), init, ch);
            REQUIRE(rx.accepted());
            CHECK(rx.payload == msg);
        }
    }
    SUBCASE("any single bit flip breaks the CRC") {
        const Bytes msg{0xDE, 0xAD, 0xBE, 0xEF};
        const auto pkt = compose_data_packet({0x02, 4}, msg, 0x123456, 9);
        const BitSeq on_air = combine_on_air(pkt);
        for (std::size_t i = 0; i < on_air.size(); ++i) {
            BitSeq corrupted = on_air;
            corrupted[i] ^= 1;
            CHECK_FALSE(receive_data_packet(corrupted, 0x123456, 9).crc_ok);
        }
    }
    SUBCASE("tag chips independent of every dynamic parameter") {
        const Bytes msg{1, 2, 3};
        const auto a = compose_data_packet({0x02, 3}, msg, 0x000001, 0);
        const auto b = compose_data_packet({0x02, 3}, msg, 0xABCDEF, 36);
        CHECK(a.tag_chips == b.tag_chips);
        CHECK(a.excitation != b.excitation);
        CHECK(a.tag_chips == tag_data_chips({0x02, 3}, msg));
    }
    SUBCASE("noiseless event delivers the tag message") {
        EventContext ctx;
        ctx.tag_message = {0x11, 0x22, 0x33, 0x44};
        auto rng = substream(1, 0);
        const auto rec = run_connection_event(ctx, noiseless_channel(), rng);
        CHECK(rec.outcome == EventOutcome::ok);
        CHECK(rec.bytes_delivered == 4);
        CHECK(rec.excitation_channel + 4 == rec.channel_used);
        CHECK(((ctx.params.channel_map >> rec.channel_used) & 1) == 1);
    }
    SUBCASE("silent tag (wrong access address): CRC fails, event lost") {
        EventContext ctx;
        ctx.tag_message = {0x11, 0x22};
        ctx.tag_activated = false;
        auto rng = substream(2, 0);
        const auto rec = run_connection_event(ctx, noiseless_channel(), rng);
        CHECK(rec.outcome == EventOutcome::lost);
        CHECK(rec.bytes_delivered == 0);
    }
    SUBCASE("erased packet: event lost, zero bytes") {
        EventContext ctx;
        ctx.tag_message = {0x55};
        auto rng = substream(3, 0);
        const auto rec = run_connection_event(ctx, noiseless_channel(1.0), rng);
        CHECK(rec.outcome == EventOutcome::lost);
        CHECK(rec.bytes_delivered == 0);
        CHECK(rec.packets_exchanged == 1);
    }
}

TEST_CASE("establishment") {
    auto rng = substream(17, 0);
    SUBCASE("p=0 succeeds on the first event") {
        for (int i = 0; i < 100; ++i) {
            const auto res = establish(0.0, rng);
            CHECK(res.success);
            CHECK(res.events_used == 1);
        }
    }
    SUBCASE("p=1 fails after exactly 6 events") {
        for (int i = 0; i < 100; ++i) {
            const auto res = establish(1.0, rng);
            CHECK_FALSE(res.success);
            CHECK(res.events_used == kSupervisionEvents);
        }
    }
    SUBCASE("Monte-Carlo matches the 1 - p^6 oracle within 3 sigma") {
        for (double p : {0.1, 0.3, 0.5, 0.9}) {
            const int n = 100000;
            int succ = 0;
            for (int t = 0; t < n; ++t) {
                auto trng = substream(23, 1, static_cast<std::uint64_t>(t),
                                      static_cast<std::uint64_t>(p * 100));
                if (establish(p, trng).success) ++succ;
            }
            const double want = 1.0 - std::pow(p, 6);
            const double sigma = std::sqrt(want * (1 - want) / n);
            CHECK(std::abs(static_cast<double>(succ) / n - want) <
                  3 * sigma + 1e-9);
        }
    }
}

TEST_CASE("maintenance supervision") {
    SUBCASE("p=0 for 10 s at 50 ms: 200 events, survives") {
        auto rng = substream(5, 0);
        const auto res = maintain(10.0, 50e-3, 0.0, rng);
        CHECK(res.survived);
        CHECK(res.events.size() == 200);
    }
    SUBCASE("p=1 fails at event 6") {
        auto rng = substream(5, 1);
        const auto res = maintain(10.0, 50e-3, 1.0, rng);
        CHECK_FALSE(res.survived);
        CHECK(res.events.size() == kSupervisionEvents);
    }
    SUBCASE("duration below one interval rejected") {
        auto rng = substream(5, 2);
        CHECK_THROWS_AS(maintain(10e-3, 50e-3, 0.0, rng), std::invalid_argument);
    }
    SUBCASE("survival equals the independent run-length scanner") {
        for (int t = 0; t < 300; ++t) {
            auto rng = substream(29, 0, static_cast<std::uint64_t>(t));
            const double p = 0.3 + 0.4 * (t % 3) / 2.0;
            auto check_rng = rng;
            const auto res = maintain(5.0, 50e-3, p, rng);
            (void)check_rng;
            if (res.survived)
                CHECK_FALSE(has_loss_run(res.events, kSupervisionEvents));
            else
                CHECK(has_loss_run(res.events, kSupervisionEvents));
        }
    }
    SUBCASE("Monte-Carlo survival matches the DP oracle within 3 sigma") {
        const int n_events = 200, trials = 20000;
        for (double p : {0.2, 0.5, 0.8}) {
            int alive = 0;
            for (int t = 0; t < trials; ++t) {
                auto rng = substream(37, 2, static_cast<std::uint64_t>(t),
                                     static_cast<std::uint64_t>(p * 10));
                if (maintain(10.0, 50e-3, p, rng, false).survived) ++alive;
            }
            const double want = no_run_probability(n_events, p, kSupervisionEvents);
            const double sigma = std::sqrt(want * (1 - want) / trials);
            CHECK(std::abs(static_cast<double>(alive) / trials - want) <
                  3 * sigma + 1e-9);
        }
    }
}

TEST_CASE("multi-tag time division") {
    SUBCASE("single tag owns every slot") {
        const auto tl = tdd_schedule({42}, 50e-3, 1.0);
        CHECK(tl.size() == 20);
        for (auto id : tl) CHECK(id == 42);
    }
    SUBCASE("4 tags over 1 s: 5 slots each, round-robin") {
        const auto tl = tdd_schedule({1, 2, 3, 4}, 50e-3, 1.0);
        REQUIRE(tl.size() == 20);
        std::map<std::uint32_t, int> counts;
        for (std::size_t i = 0; i < tl.size(); ++i) {
            CHECK(tl[i] == 1 + i % 4);
            ++counts[tl[i]];
        }
        for (auto& [id, c] : counts) CHECK(c == 5);
    }
    SUBCASE("empty tag list rejected") {
        CHECK_THROWS_AS(tdd_schedule({}, 50e-3, 1.0), std::invalid_argument);
    }
}

TEST_CASE("tag registry and connection lifecycle") {
    SUBCASE("capacity enforced per redundancy factor") {
        TagRegistry reg(8);
        for (std::uint32_t id = 0; id < 16; ++id) reg.register_tag(id);
        CHECK(reg.size() == 16);
        CHECK_THROWS_AS(reg.register_tag(16), std::invalid_argument);
        CHECK_THROWS_AS(reg.register_tag(3), std::invalid_argument); // duplicate
    }
    SUBCASE("addresses pairwise distinct, pulse lookup round-trips") {
        TagRegistry reg(8);
        for (std::uint32_t id = 0; id < 16; ++id) reg.register_tag(id);
        std::set<AccessAddress> seen;
        for (const auto& [id, e] : reg.entries())
            CHECK(seen.insert(e.access_address).second);
        for (std::uint32_t id = 0; id < 16; ++id) {
            const auto got =
                reg.lookup_by_pulses(expected_pulses(reg.at(id).access_address));
            REQUIRE(got.has_value());
            CHECK(*got == id);
        }
        CHECK_FALSE(reg.lookup_by_pulses(BitSeq(32, 1)).has_value());
    }
    SUBCASE("lifecycle transitions and termination guard") {
        TagRegistry reg(8);
        reg.register_tag(7);
        CHECK(reg.at(7).state == ConnState::Advertising);
        reg.transition(7, ConnState::Initiating);
        reg.transition(7, ConnState::Connection);
        reg.transition(7, ConnState::Connection); // connection events
        reg.terminate(7);
        CHECK(reg.at(7).state == ConnState::Standby);
        CHECK_FALSE(reg.at(7).params.has_value());
        CHECK_THROWS_AS(reg.terminate(7), std::invalid_argument); // double
        CHECK_THROWS_AS(reg.transition(7, ConnState::Connection),
                        std::invalid_argument);
        CHECK(validate_trace(reg.at(7).trace));
    }
    SUBCASE("illegal transitions rejected and trace validator agrees") {
        TagRegistry reg(8);
        reg.register_tag(1);
        CHECK_THROWS_AS(reg.transition(1, ConnState::Connection),
                        std::invalid_argument); // skip initiating
        CHECK(validate_trace(reg.at(1).trace));
        CHECK_FALSE(validate_trace({ConnState::Advertising, ConnState::Connection}));
        CHECK_FALSE(validate_trace({ConnState::Standby, ConnState::Advertising}));
        CHECK(validate_trace({ConnState::Advertising, ConnState::Initiating,
                              ConnState::Connection, ConnState::Connection,
                              ConnState::Standby}));
    }
}
