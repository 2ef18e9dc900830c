#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <vector>

#include "pble/channel.hpp"
#include "pble/gf2.hpp"
#include "pble/packet.hpp"

namespace pble {

inline constexpr int kDataChannels = 37;
inline constexpr double kChannelSpacingHz = 2e6;
inline constexpr int kSupervisionEvents = 6;
inline constexpr double kDefaultIfs = 150e-6;
inline constexpr double kDefaultConnInterval = 50e-3;

// ---------------------------------------------------------------------------
// Connection parameters and state
// ---------------------------------------------------------------------------

struct ConnectionParams {
    AccessAddress access_address{};
    std::uint32_t crc_init = 0;
    std::uint64_t channel_map = (1ull << kDataChannels) - 1; // 37-bit mask
    int hop_increment = 5;
    double conn_interval_s = kDefaultConnInterval;
    PhyMode phy_mode = PhyMode::LE1M;

    void validate() const {
        if (hop_increment < 5 || hop_increment > 16)
            throw std::invalid_argument("hop increment outside 5..16");
        if (channel_map == 0 || channel_map >= (1ull << kDataChannels))
            throw std::invalid_argument("channel map not a 37-bit mask");
        int used = 0;
        for (int c = 0; c < kDataChannels; ++c)
            if (channel_map & (1ull << c)) ++used;
        if (used < 2)
            throw std::invalid_argument("channel map must use at least 2 channels");
    }
};

enum class ConnState { Advertising, Initiating, Connection, Standby };

inline const char* conn_state_name(ConnState s) {
    switch (s) {
        case ConnState::Advertising: return "advertising";
        case ConnState::Initiating: return "initiating";
        case ConnState::Connection: return "connection";
        case ConnState::Standby: return "standby";
    }
    return "?";
}

// Legal transition relation: the forward lifecycle, connection events, and
// termination to standby from anywhere.
inline bool transition_allowed(ConnState from, ConnState to) {
    if (to == ConnState::Standby) return true;
    if (from == ConnState::Advertising && to == ConnState::Initiating) return true;
    if (from == ConnState::Initiating && to == ConnState::Connection) return true;
    if (from == ConnState::Connection && to == ConnState::Connection) return true;
    return false;
}

inline bool validate_trace(const std::vector<ConnState>& trace) {
    for (std::size_t i = 1; i < trace.size(); ++i)
        if (!transition_allowed(trace[i - 1], trace[i])) return false;
    return true;
}

enum class EventOutcome { ok, lost };

struct EventRecord {
    std::uint64_t event_index = 0;
    int channel_used = 0;
    int excitation_channel = 0;
    std::uint32_t tag_id = 0;
    std::uint32_t packets_exchanged = 0;
    std::uint64_t bytes_delivered = 0;
    EventOutcome outcome = EventOutcome::ok;
};

// ---------------------------------------------------------------------------
// Channel selection (CSA #1) and the FHSS carrier offset
// ---------------------------------------------------------------------------

struct HopResult {
    int unmapped;
    int mapped;
};

inline HopResult csa_next_channel(int last_unmapped, int hop_increment,
                                  std::uint64_t channel_map) {
    int used = 0;
    int used_list[kDataChannels];
    for (int c = 0; c < kDataChannels; ++c)
        if (channel_map & (1ull << c)) used_list[used++] = c;
    if (used < 2) throw std::invalid_argument("degenerate channel map");
    const int unmapped = (last_unmapped + hop_increment) % kDataChannels;
    const int mapped = (channel_map & (1ull << unmapped))
                           ? unmapped
                           : used_list[unmapped % used];
    return {unmapped, mapped};
}

// Excitation channel for target channel Y and tag shift f_s: Y - f_s/2MHz,
// so the tag-shifted reflection lands exactly on Y.
inline int carrier_channel(int target_channel, double f_shift_hz) {
    if (f_shift_hz <= 0.0)
        throw std::invalid_argument("frequency shift must be positive");
    const double steps = f_shift_hz / kChannelSpacingHz;
    if (std::abs(steps - std::round(steps)) > 1e-9)
        throw std::invalid_argument("frequency shift must be a multiple of 2 MHz");
    const int idx = target_channel - static_cast<int>(std::round(steps));
    if (idx < 0 || target_channel >= kDataChannels || target_channel < 0)
        throw std::invalid_argument("excitation channel out of band");
    return idx;
}

// ---------------------------------------------------------------------------
// Timing ledger / goodput model
// ---------------------------------------------------------------------------

struct GoodputConfig {
    PhyMode mode = PhyMode::LE2M;
    std::size_t inner_payload_bytes = 241;
    double conn_interval_s = kDefaultConnInterval;
    double ifs_s = kDefaultIfs;
    std::size_t ack_bytes = 0;  // 0: derived from mode (empty PDU)
    double guard_s = 500e-6;    // excitation retune guard per event
    std::uint32_t packet_cap = 0; // 0: no cap
};

inline double packet_airtime_s(PhyMode mode, std::size_t payload_bytes) {
    const std::size_t bytes = preamble_len_bytes(mode) + 4 + 2 + payload_bytes + 3;
    return static_cast<double>(bytes) * 8.0 / symbol_rate(mode);
}

inline std::size_t ack_packet_bytes(PhyMode mode) {
    return preamble_len_bytes(mode) + 4 + 2 + 3; // empty PDU
}

inline std::uint32_t packets_per_event(const GoodputConfig& cfg) {
    const double data_air = packet_airtime_s(cfg.mode, cfg.inner_payload_bytes);
    const double ack_air =
        (cfg.ack_bytes ? static_cast<double>(cfg.ack_bytes) * 8.0 / symbol_rate(cfg.mode)
                       : static_cast<double>(ack_packet_bytes(cfg.mode)) * 8.0 /
                             symbol_rate(cfg.mode));
    const double round_trip = data_air + cfg.ifs_s + ack_air + cfg.ifs_s;
    const double usable = cfg.conn_interval_s - cfg.guard_s;
    if (usable < round_trip)
        throw std::invalid_argument("zero capacity: interval cannot fit one exchange");
    auto n = static_cast<std::uint32_t>(usable / round_trip);
    if (cfg.packet_cap && n > cfg.packet_cap) n = cfg.packet_cap;
    return n;
}

inline double goodput_model_kbps(const GoodputConfig& cfg) {
    const std::uint32_t n = packets_per_event(cfg);
    const double bits = static_cast<double>(n) *
                        static_cast<double>(cfg.inner_payload_bytes) * 8.0;
    return bits / cfg.conn_interval_s / 1000.0;
}

// ---------------------------------------------------------------------------
// Bit-level distributed encoding of one data packet. The excitation side
// carries the whitened header and the CRC_Init remainder; the tag's chips
// cover payload + CRC and are independent of every dynamic parameter.
// ---------------------------------------------------------------------------

struct DataPacketBits {
    BitSeq excitation; // pre-modulated PDU+CRC region (no tag data)
    BitSeq tag_chips;  // XOR contribution: header + payload + CRC
};

// The tag's chips over the whole PDU region: its own header and message,
// closed with the init-free checksum. No dynamic parameter enters.
inline BitSeq tag_data_chips(const std::array<std::uint8_t, 2>& header,
                             const Bytes& message) {
    BitSeq chips = bytes_to_bits(Bytes(header.begin(), header.end()));
    const BitSeq m = bytes_to_bits(message);
    chips.insert(chips.end(), m.begin(), m.end());
    const BitSeq crc_bits = crc24_bits(crc24(chips, 0));
    chips.insert(chips.end(), crc_bits.begin(), crc_bits.end());
    return chips;
}

// Excitation side: all-zero PDU with the CRC_Init remainder in the CRC
// field, whitened for the connection channel. XORing the tag chips on air
// yields whiten(pdu || crc24(pdu, init)) by CRC linearity.
inline DataPacketBits compose_data_packet(const std::array<std::uint8_t, 2>& header,
                                          const Bytes& message,
                                          std::uint32_t crc_init, int channel) {
    DataPacketBits pkt;
    const std::size_t pdu_bits = 16 + message.size() * 8;
    pkt.excitation = source_premod(crc_init, channel, message.size() * 8, 16).bits;
    (void)pdu_bits;
    pkt.tag_chips = tag_data_chips(header, message);
    return pkt;
}

inline BitSeq combine_on_air(const DataPacketBits& pkt) {
    BitSeq on_air = pkt.excitation;
    for (std::size_t i = 0; i < pkt.tag_chips.size(); ++i)
        on_air[i] ^= pkt.tag_chips[i];
    return on_air;
}

// Commodity-receiver side: de-whiten, CRC-check the PDU region and verify
// the header's length field covers the received payload.
struct ReceiveResult {
    bool crc_ok = false;
    bool header_ok = false;
    Bytes payload;

    bool accepted() const { return crc_ok && header_ok; }
};

inline ReceiveResult receive_data_packet(const BitSeq& on_air,
                                         std::uint32_t crc_init, int channel) {
    ReceiveResult res;
    if (on_air.size() < 16 + 24) return res;
    const BitSeq plain = whiten(on_air, channel);
    const std::size_t pdu_bits = on_air.size() - 24;
    const BitSeq pdu(plain.begin(), plain.begin() + pdu_bits);
    std::uint32_t rx_crc = 0;
    for (int i = 0; i < 24; ++i)
        rx_crc |= static_cast<std::uint32_t>(plain[pdu_bits + i]) << (23 - i);
    res.crc_ok = crc24(pdu, crc_init) == rx_crc;
    if (!res.crc_ok) return res;
    const Bytes hdr = bits_to_bytes(BitSeq(pdu.begin(), pdu.begin() + 16));
    res.header_ok = pdu_bits == 16 + static_cast<std::size_t>(hdr[1]) * 8;
    if (res.header_ok)
        res.payload = bits_to_bytes(BitSeq(pdu.begin() + 16, pdu.end()));
    return res;
}

// ---------------------------------------------------------------------------
// Connection events
// ---------------------------------------------------------------------------

struct EventContext {
    ConnectionParams params;
    double f_shift_hz = 8e6;
    Bytes tag_message;
    std::array<std::uint8_t, 2> data_header{0x02, 0};
    std::uint32_t packet_budget = 1;
    bool tag_activated = true; // false models a wrong/undecoded access address
    int last_unmapped = 0;
};

inline EventRecord run_connection_event(EventContext& ctx,
                                        const ChannelModel& channel,
                                        std::mt19937_64& rng,
                                        std::uint64_t event_index = 0) {
    EventRecord rec;
    rec.event_index = event_index;
    const HopResult hop = csa_next_channel(ctx.last_unmapped,
                                           ctx.params.hop_increment,
                                           ctx.params.channel_map);
    ctx.last_unmapped = hop.unmapped;
    rec.channel_used = hop.mapped;
    rec.excitation_channel = carrier_channel(hop.mapped, ctx.f_shift_hz);

    ctx.data_header[1] = static_cast<std::uint8_t>(ctx.tag_message.size());
    const double ber = channel.noiseless ? 0.0 : ber_from_snr(channel.snr_for(hop.mapped));
    std::uniform_real_distribution<double> u(0.0, 1.0);

    for (std::uint32_t k = 0; k < ctx.packet_budget; ++k) {
        ++rec.packets_exchanged;
        if (erase_packet(channel.erasure_p, rng)) continue;
        DataPacketBits pkt = compose_data_packet(ctx.data_header, ctx.tag_message,
                                                 ctx.params.crc_init, hop.mapped);
        BitSeq on_air = ctx.tag_activated
                            ? combine_on_air(pkt)
                            : pkt.excitation; // tag silent: premod stream only
        if (ber > 0.0)
            for (auto& b : on_air)
                if (u(rng) < ber) b ^= 1u;
        const ReceiveResult rx = receive_data_packet(on_air, ctx.params.crc_init,
                                                     hop.mapped);
        if (rx.accepted()) rec.bytes_delivered += rx.payload.size();
    }
    rec.outcome = rec.bytes_delivered > 0 ? EventOutcome::ok : EventOutcome::lost;
    return rec;
}

// ---------------------------------------------------------------------------
// Establishment and maintenance under a per-event loss probability
// ---------------------------------------------------------------------------

struct EstablishResult {
    bool success = false;
    int events_used = 0;
};

// Advertising handshake: ADV -> CONNECT_IND -> first data packet. A whole
// exchange is lost with probability p per event; success on the first
// completed event, failure after 6 consecutive losses.
inline EstablishResult establish(double per_event_loss_p, std::mt19937_64& rng) {
    EstablishResult res;
    for (int e = 1; e <= kSupervisionEvents; ++e) {
        res.events_used = e;
        if (!erase_packet(per_event_loss_p, rng)) {
            res.success = true;
            return res;
        }
    }
    return res;
}

struct MaintainResult {
    bool survived = true;
    std::vector<EventRecord> events;
};

inline MaintainResult maintain(double duration_s, double conn_interval_s,
                               double per_event_loss_p, std::mt19937_64& rng,
                               bool keep_records = true) {
    if (duration_s < conn_interval_s)
        throw std::invalid_argument("duration shorter than one interval");
    const auto n_events = static_cast<std::uint64_t>(duration_s / conn_interval_s);
    MaintainResult res;
    int consecutive_lost = 0;
    for (std::uint64_t e = 0; e < n_events; ++e) {
        const bool lost = erase_packet(per_event_loss_p, rng);
        if (keep_records) {
            EventRecord rec;
            rec.event_index = e;
            rec.outcome = lost ? EventOutcome::lost : EventOutcome::ok;
            res.events.push_back(rec);
        }
        consecutive_lost = lost ? consecutive_lost + 1 : 0;
        if (consecutive_lost >= kSupervisionEvents) {
            res.survived = false;
            return res;
        }
    }
    return res;
}

// Independent run-length scanner used to cross-check supervision outcomes.
inline bool has_loss_run(const std::vector<EventRecord>& events, int run_len) {
    int run = 0;
    for (const auto& e : events) {
        run = e.outcome == EventOutcome::lost ? run + 1 : 0;
        if (run >= run_len) return true;
    }
    return false;
}

// ---------------------------------------------------------------------------
// Multi-tag time division and the connection scheduler
// ---------------------------------------------------------------------------

inline std::vector<std::uint32_t> tdd_schedule(
    const std::vector<std::uint32_t>& tags, double conn_interval_s,
    double horizon_s) {
    if (tags.empty()) throw std::invalid_argument("empty tag list");
    const auto slots = static_cast<std::size_t>(horizon_s / conn_interval_s);
    std::vector<std::uint32_t> timeline(slots);
    for (std::size_t i = 0; i < slots; ++i)
        timeline[i] = tags[i % tags.size()];
    return timeline;
}

struct TagEntry {
    std::uint32_t tag_id = 0;
    unsigned n = 8;
    AccessAddress access_address{};
    std::optional<ConnectionParams> params;
    ConnState state = ConnState::Advertising;
    std::vector<ConnState> trace{ConnState::Advertising};
};

class TagRegistry {
public:
    explicit TagRegistry(unsigned n = 8) : n_(n) { check_redundancy_factor(n); }

    TagEntry& register_tag(std::uint32_t tag_id) {
        if (entries_.size() >= tag_address_capacity(n_))
            throw std::invalid_argument("registry full for redundancy factor");
        if (entries_.count(tag_id))
            throw std::invalid_argument("tag id already registered");
        TagEntry e;
        e.tag_id = tag_id;
        e.n = n_;
        e.access_address = encode_tag_address(tag_id, n_);
        auto [it, ok] = entries_.emplace(tag_id, std::move(e));
        (void)ok;
        return it->second;
    }

    TagEntry& at(std::uint32_t tag_id) {
        auto it = entries_.find(tag_id);
        if (it == entries_.end()) throw std::invalid_argument("unknown tag id");
        return it->second;
    }

    std::optional<std::uint32_t> lookup_by_pulses(const BitSeq& pulses) const {
        const auto id = decode_activation(pulses, n_);
        if (!id || !entries_.count(*id)) return std::nullopt;
        return id;
    }

    std::size_t size() const { return entries_.size(); }
    unsigned redundancy() const { return n_; }
    const std::map<std::uint32_t, TagEntry>& entries() const { return entries_; }

    void transition(std::uint32_t tag_id, ConnState to) {
        TagEntry& e = at(tag_id);
        if (!transition_allowed(e.state, to))
            throw std::invalid_argument("invalid transition");
        e.state = to;
        e.trace.push_back(to);
    }

    void terminate(std::uint32_t tag_id) {
        TagEntry& e = at(tag_id);
        if (e.state != ConnState::Connection)
            throw std::invalid_argument("invalid transition: terminate outside connection");
        e.state = ConnState::Standby;
        e.trace.push_back(ConnState::Standby);
        e.params.reset();
    }

private:
    unsigned n_;
    std::map<std::uint32_t, TagEntry> entries_;
};

} // namespace pble
