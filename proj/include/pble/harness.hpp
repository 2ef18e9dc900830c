#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "pble/channel.hpp"
#include "pble/gf2.hpp"
#include "pble/linklayer.hpp"
#include "pble/packet.hpp"
#include "pble/phy.hpp"

namespace pble {

using ordered_json = nlohmann::ordered_json;

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

inline const std::vector<std::string>& scenario_names() {
    static const std::vector<std::string> names = {
        "codec-selftest", "phase-xor",        "sync-jitter",
        "wakeup-rate",    "activation-rate",  "goodput-vs-snr",
        "goodput-vs-loss", "fhss-per-channel", "fhss-hopping",
        "establishment",  "maintenance",      "multi-tag"};
    return names;
}

inline std::uint64_t scenario_index(const std::string& name) {
    const auto& names = scenario_names();
    const auto it = std::find(names.begin(), names.end(), name);
    if (it == names.end()) throw ConfigError("unknown scenario: " + name);
    return static_cast<std::uint64_t>(it - names.begin());
}

// ---------------------------------------------------------------------------
// Scenario configuration. Defaults resolve at parse time; the echoed config
// in every report parses back to an identical configuration.
// ---------------------------------------------------------------------------

struct ScenarioConfig {
    std::string scenario;
    PhyMode mode = PhyMode::LE2M;
    std::uint64_t trials = 1000;
    std::uint64_t seed = 0;
    double sample_rate = 100e6;

    // channel
    bool noiseless = true;
    double snr_db = 30.0;
    std::vector<double> snr_sweep_db{5, 10, 15, 20, 25, 30};
    std::vector<double> per_channel_snr_db; // empty or 40 entries
    double erasure_p = 0.0;

    // link. The default map drops channels 0..3: with the default 8 MHz tag
    // shift their excitation carrier would fall below the data band.
    int hop_increment = 7;
    std::uint64_t channel_map = ((1ull << kDataChannels) - 1) & ~0xFull;
    double conn_interval_s = kDefaultConnInterval;
    double ifs_s = kDefaultIfs;
    double f_shift_hz = 8e6;
    std::size_t inner_payload_bytes = 0; // 0: max for mode
    double guard_s = 500e-6;
    std::uint32_t packet_cap = 0;
    double duration_s = 10.0;
    unsigned redundancy_n = 8;
    std::size_t n_tags = 4;

    std::size_t payload_bytes() const {
        return inner_payload_bytes ? inner_payload_bytes : max_inner_payload(mode);
    }

    ChannelModel channel_model() const {
        if (!per_channel_snr_db.empty()) {
            std::array<double, 40> a{};
            std::copy(per_channel_snr_db.begin(), per_channel_snr_db.end(),
                      a.begin());
            auto m = per_channel_snr(a, erasure_p, seed);
            m.noiseless = noiseless;
            return m;
        }
        auto m = noiseless ? noiseless_channel(erasure_p, seed)
                           : flat_channel(snr_db, erasure_p, seed);
        return m;
    }

    GoodputConfig goodput_config() const {
        GoodputConfig g;
        g.mode = mode;
        g.inner_payload_bytes = payload_bytes();
        g.conn_interval_s = conn_interval_s;
        g.ifs_s = ifs_s;
        g.guard_s = guard_s;
        g.packet_cap = packet_cap;
        return g;
    }

    void validate() const {
        scenario_index(scenario);
        if (trials < 1) throw ConfigError("trials must be >= 1");
        if (erasure_p < 0 || erasure_p > 1)
            throw ConfigError("erasure_p outside [0,1]");
        if (!per_channel_snr_db.empty() && per_channel_snr_db.size() != 40)
            throw ConfigError("per_channel_snr_db must have 40 entries");
        if (payload_bytes() > max_inner_payload(mode))
            throw ConfigError("inner_payload_bytes exceeds mode capacity");
        if (n_tags < 1) throw ConfigError("n_tags must be >= 1");
        if (duration_s < conn_interval_s)
            throw ConfigError("duration_s shorter than one interval");
        check_redundancy_factor(redundancy_n);
        ConnectionParams p;
        p.hop_increment = hop_increment;
        p.channel_map = channel_map;
        try {
            p.validate();
        } catch (const std::invalid_argument& e) {
            throw ConfigError(e.what());
        }
        samples_per_symbol(sample_rate, mode); // throws on bad rate
    }

    ordered_json to_json() const {
        ordered_json j;
        j["scenario"] = scenario;
        j["phy_mode"] = phy_mode_name(mode);
        j["trials"] = trials;
        j["seed"] = seed;
        j["sample_rate"] = sample_rate;
        ordered_json ch;
        ch["noiseless"] = noiseless;
        ch["snr_db"] = snr_db;
        ch["snr_sweep_db"] = snr_sweep_db;
        if (!per_channel_snr_db.empty())
            ch["per_channel_snr_db"] = per_channel_snr_db;
        ch["erasure_p"] = erasure_p;
        j["channel"] = ch;
        ordered_json lk;
        lk["hop_increment"] = hop_increment;
        lk["channel_map"] = channel_map;
        lk["conn_interval_s"] = conn_interval_s;
        lk["ifs_s"] = ifs_s;
        lk["f_shift_hz"] = f_shift_hz;
        lk["inner_payload_bytes"] = inner_payload_bytes;
        lk["guard_s"] = guard_s;
        lk["packet_cap"] = packet_cap;
        lk["duration_s"] = duration_s;
        lk["redundancy_n"] = redundancy_n;
        lk["n_tags"] = n_tags;
        j["link"] = lk;
        return j;
    }

    static ScenarioConfig from_json(const ordered_json& j) {
        ScenarioConfig c;
        const auto known = [](const ordered_json& obj,
                              std::initializer_list<const char*> keys,
                              const char* where) {
            for (auto it = obj.begin(); it != obj.end(); ++it)
                if (std::find_if(keys.begin(), keys.end(), [&](const char* k) {
                        return it.key() == k;
                    }) == keys.end())
                    throw ConfigError(std::string("unknown key '") + it.key() +
                                      "' in " + where);
        };
        if (!j.is_object()) throw ConfigError("config must be a JSON object");
        known(j, {"scenario", "phy_mode", "trials", "seed", "sample_rate",
                  "channel", "link"},
              "config");
        try {
            if (!j.contains("scenario"))
                throw ConfigError("missing required key 'scenario'");
            c.scenario = j.at("scenario").get<std::string>();
            if (j.contains("phy_mode")) {
                const auto m = phy_mode_from_name(j.at("phy_mode"));
                if (!m) throw ConfigError("phy_mode must be LE1M or LE2M");
                c.mode = *m;
            }
            if (j.contains("trials")) c.trials = j.at("trials");
            if (j.contains("seed")) c.seed = j.at("seed");
            if (j.contains("sample_rate")) c.sample_rate = j.at("sample_rate");
            if (j.contains("channel")) {
                const auto& ch = j.at("channel");
                known(ch, {"noiseless", "snr_db", "snr_sweep_db",
                           "per_channel_snr_db", "erasure_p"},
                      "channel");
                if (ch.contains("noiseless")) c.noiseless = ch.at("noiseless");
                if (ch.contains("snr_db")) c.snr_db = ch.at("snr_db");
                if (ch.contains("snr_sweep_db"))
                    c.snr_sweep_db = ch.at("snr_sweep_db")
                                         .get<std::vector<double>>();
                if (ch.contains("per_channel_snr_db"))
                    c.per_channel_snr_db = ch.at("per_channel_snr_db")
                                               .get<std::vector<double>>();
                if (ch.contains("erasure_p")) c.erasure_p = ch.at("erasure_p");
            }
            if (j.contains("link")) {
                const auto& lk = j.at("link");
                known(lk, {"hop_increment", "channel_map", "conn_interval_s",
                           "ifs_s", "f_shift_hz", "inner_payload_bytes",
                           "guard_s", "packet_cap", "duration_s",
                           "redundancy_n", "n_tags"},
                      "link");
                if (lk.contains("hop_increment"))
                    c.hop_increment = lk.at("hop_increment");
                if (lk.contains("channel_map"))
                    c.channel_map = lk.at("channel_map");
                if (lk.contains("conn_interval_s"))
                    c.conn_interval_s = lk.at("conn_interval_s");
                if (lk.contains("ifs_s")) c.ifs_s = lk.at("ifs_s");
                if (lk.contains("f_shift_hz")) c.f_shift_hz = lk.at("f_shift_hz");
                if (lk.contains("inner_payload_bytes"))
                    c.inner_payload_bytes = lk.at("inner_payload_bytes");
                if (lk.contains("guard_s")) c.guard_s = lk.at("guard_s");
                if (lk.contains("packet_cap")) c.packet_cap = lk.at("packet_cap");
                if (lk.contains("duration_s")) c.duration_s = lk.at("duration_s");
                if (lk.contains("redundancy_n"))
                    c.redundancy_n = lk.at("redundancy_n");
                if (lk.contains("n_tags")) c.n_tags = lk.at("n_tags");
            }
        } catch (const ordered_json::exception& e) {
            throw ConfigError(std::string("config parse error: ") + e.what());
        }
        c.validate();
        return c;
    }
};

// ---------------------------------------------------------------------------
// Metrics report: versioned JSON document plus a fixed CSV projection.
// metrics.points is the tabular payload (one row per sweep point or a single
// row); scalar metrics summarize the whole run.
// ---------------------------------------------------------------------------

struct MetricsReport {
    ordered_json doc;

    std::string to_json_string() const { return doc.dump(2) + "\n"; }

    std::string to_csv() const {
        const auto& points = doc.at("metrics").at("points");
        std::ostringstream out;
        if (points.empty()) return "";
        bool first = true;
        for (auto it = points[0].begin(); it != points[0].end(); ++it) {
            if (!first) out << ",";
            out << it.key();
            first = false;
        }
        out << "\n";
        for (const auto& row : points) {
            first = true;
            for (auto it = row.begin(); it != row.end(); ++it) {
                if (!first) out << ",";
                if (it.value().is_string())
                    out << it.value().get<std::string>();
                else
                    out << it.value().dump();
                first = false;
            }
            out << "\n";
        }
        return out.str();
    }
};

namespace detail {

inline MetricsReport make_report(const ScenarioConfig& cfg, double runtime_s,
                                 ordered_json metrics) {
    MetricsReport rep;
    rep.doc["schema"] = "1";
    rep.doc["scenario"] = cfg.scenario;
    rep.doc["seed"] = cfg.seed;
    rep.doc["runtime_s"] = runtime_s; // simulated time, deterministic
    rep.doc["config"] = cfg.to_json();
    rep.doc["metrics"] = std::move(metrics);
    return rep;
}

inline double percentile_sorted(std::vector<double> v, double p) {
    if (v.empty()) return 0.0;
    std::sort(v.begin(), v.end());
    const auto idx = static_cast<std::size_t>(
        p * (static_cast<double>(v.size()) - 1.0) + 0.5);
    return v[idx];
}

struct JitterStats {
    double wakeup = 0;
    double mean_ns = 0, std_ns = 0, p95_ns = 0;
};

// Preamble detection over `trials` noisy copies of one clean waveform.
// Common random numbers: the per-trial substream depends only on
// (seed, scenario, trial), never on the SNR point.
inline JitterStats sync_trials(const ScenarioConfig& cfg, double snr_db,
                               bool noiseless, const IqWaveform& clean,
                               double truth_s) {
    const DiscriminatorConfig dcfg;
    const std::uint64_t sc = scenario_index(cfg.scenario);
    std::vector<double> errs_ns;
    std::uint64_t detected = 0;
    for (std::uint64_t t = 0; t < cfg.trials; ++t) {
        IqWaveform rx = clean;
        if (!noiseless) {
            auto rng = substream(cfg.seed, sc, t);
            rx = add_awgn(clean, snr_db, rng);
        }
        const auto res = detect_sync(delay_discriminator(rx, dcfg), cfg.mode,
                                     dcfg, cfg.sample_rate);
        if (!res.detected) continue;
        const double err = res.detect_time - truth_s;
        if (std::abs(err) > 2e-6) continue; // false lock, not a wake-up
        ++detected;
        errs_ns.push_back(err * 1e9);
    }
    JitterStats s;
    s.wakeup = static_cast<double>(detected) / static_cast<double>(cfg.trials);
    if (!errs_ns.empty()) {
        double mean = 0;
        for (double e : errs_ns) mean += e;
        mean /= static_cast<double>(errs_ns.size());
        double var = 0;
        for (double e : errs_ns) var += (e - mean) * (e - mean);
        if (errs_ns.size() > 1) var /= static_cast<double>(errs_ns.size() - 1);
        s.mean_ns = mean;
        s.std_ns = std::sqrt(var);
        s.p95_ns = percentile_sorted(errs_ns, 0.95);
    }
    return s;
}

inline IqWaveform preamble_fixture(const ScenarioConfig& cfg,
                                   std::uint64_t tail_seed, double& truth_s) {
    BitSeq bits;
    const int pre = cfg.mode == PhyMode::LE1M ? 8 : 16;
    for (int i = 0; i < pre; ++i) bits.push_back(i % 2);
    auto rng = substream(tail_seed, 0xF1);
    for (int i = 0; i < 24; ++i) bits.push_back(rng() & 1);
    truth_s = pre / symbol_rate(cfg.mode);
    return gfsk_modulate(bits, cfg.mode, cfg.sample_rate);
}

// Bit-level goodput measurement: run connection events, flip bits at the
// BER implied by the channel, count CRC-accepted inner payload bytes.
inline ordered_json goodput_point(const ScenarioConfig& cfg,
                                  const ChannelModel& channel,
                                  std::uint64_t point_tag) {
    const std::uint64_t sc = scenario_index(cfg.scenario);
    EventContext ctx;
    ctx.params.hop_increment = cfg.hop_increment;
    ctx.params.channel_map = cfg.channel_map;
    ctx.params.phy_mode = cfg.mode;
    ctx.params.crc_init = 0x555555;
    ctx.f_shift_hz = cfg.f_shift_hz;
    ctx.tag_message.assign(cfg.payload_bytes(), 0xA5);
    ctx.packet_budget = packets_per_event(cfg.goodput_config());

    std::uint64_t bytes = 0, packets = 0, lost_packets = 0;
    for (std::uint64_t e = 0; e < cfg.trials; ++e) {
        auto rng = substream(cfg.seed, sc, point_tag, e);
        const auto rec = run_connection_event(ctx, channel, rng, e);
        bytes += rec.bytes_delivered;
        packets += rec.packets_exchanged;
        lost_packets += rec.packets_exchanged -
                        rec.bytes_delivered / ctx.tag_message.size();
    }
    const double span = static_cast<double>(cfg.trials) * cfg.conn_interval_s;
    ordered_json p;
    p["events"] = cfg.trials;
    p["packets"] = packets;
    p["per"] = packets ? static_cast<double>(lost_packets) /
                             static_cast<double>(packets)
                       : 0.0;
    p["goodput_kbps"] = static_cast<double>(bytes) * 8.0 / span / 1000.0;
    return p;
}

} // namespace detail

// ---------------------------------------------------------------------------
// Scenarios
// ---------------------------------------------------------------------------

inline MetricsReport run_scenario(const ScenarioConfig& cfg) {
    cfg.validate();
    const std::uint64_t sc = scenario_index(cfg.scenario);
    ordered_json m;

    if (cfg.scenario == "codec-selftest") {
        std::uint64_t mismatches = 0;
        for (std::uint64_t t = 0; t < cfg.trials; ++t) {
            auto rng = substream(cfg.seed, sc, t);
            Bytes msg(rng() % (kMaxTagMessageBytes + 1));
            for (auto& b : msg) b = static_cast<std::uint8_t>(rng());
            const auto init = static_cast<std::uint32_t>(rng()) & kCrc24Mask;
            const int ch = static_cast<int>(rng() % 40);
            const auto premod =
                source_premod(init, ch, msg.size() * 8, 0).bits;
            const BitSeq combined = xor_bits(tag_baseband(msg), premod);
            if (combined != encode_monolithic(msg, init, ch)) ++mismatches;
            // CRC linearity spot check on the same draw
            const BitSeq mb = bytes_to_bits(msg);
            if (crc24(mb, init) !=
                (crc24(mb, 0) ^ crc24(BitSeq(mb.size(), 0), init)))
                ++mismatches;
        }
        m["checks"] = cfg.trials * 2;
        m["mismatches"] = mismatches;
        m["points"] = ordered_json::array(
            {{{"checks", cfg.trials * 2}, {"mismatches", mismatches}}});
        return detail::make_report(cfg, 0.0, m);
    }

    if (cfg.scenario == "phase-xor") {
        const std::size_t sps = samples_per_symbol(cfg.sample_rate, cfg.mode);
        std::uint64_t symbols = 0, errors = 0;
        for (std::uint64_t t = 0; t < cfg.trials; ++t) {
            auto rng = substream(cfg.seed, sc, t);
            BitSeq src(64), chips(63);
            for (auto& b : src) b = rng() & 1;
            for (auto& b : chips) b = rng() & 1;
            const auto carrier = gfsk_modulate(src, cfg.mode, cfg.sample_rate);
            const auto rx = backscatter_apply(
                carrier, SymbolPhases::from_bits(chips), 0.0, 1, sps);
            const auto res = demodulate(rx, cfg.mode);
            for (std::size_t k = 1; k < src.size(); ++k, ++symbols)
                if (res.bits[k] != (src[k] ^ chips[k - 1])) ++errors;
        }
        m["symbols"] = symbols;
        m["bit_errors"] = errors;
        m["ber"] = symbols ? static_cast<double>(errors) /
                                 static_cast<double>(symbols)
                           : 0.0;
        m["points"] = ordered_json::array({{{"symbols", symbols},
                                            {"bit_errors", errors},
                                            {"ber", m["ber"]}}});
        const double sim_t = static_cast<double>(cfg.trials) * 64.0 /
                             symbol_rate(cfg.mode);
        return detail::make_report(cfg, sim_t, m);
    }

    if (cfg.scenario == "sync-jitter" || cfg.scenario == "wakeup-rate") {
        double truth = 0;
        const auto clean = detail::preamble_fixture(cfg, cfg.seed, truth);
        auto points = ordered_json::array();
        if (cfg.noiseless) {
            const auto s = detail::sync_trials(cfg, 0.0, true, clean, truth);
            points.push_back({{"snr_db", "inf"},
                              {"wakeup_rate", s.wakeup},
                              {"jitter_mean_ns", s.mean_ns},
                              {"jitter_std_ns", s.std_ns},
                              {"jitter_p95_ns", s.p95_ns}});
        } else {
            for (double snr : cfg.snr_sweep_db) {
                const auto s = detail::sync_trials(cfg, snr, false, clean, truth);
                points.push_back({{"snr_db", snr},
                                  {"wakeup_rate", s.wakeup},
                                  {"jitter_mean_ns", s.mean_ns},
                                  {"jitter_std_ns", s.std_ns},
                                  {"jitter_p95_ns", s.p95_ns}});
            }
        }
        m["points"] = points;
        const double sim_t = static_cast<double>(cfg.trials) *
                             clean.duration() *
                             static_cast<double>(points.size());
        return detail::make_report(cfg, sim_t, m);
    }

    if (cfg.scenario == "activation-rate") {
        const DiscriminatorConfig dcfg;
        const std::uint64_t cap = tag_address_capacity(cfg.redundancy_n);
        std::uint64_t correct = 0;
        for (std::uint64_t t = 0; t < cfg.trials; ++t) {
            auto rng = substream(cfg.seed, sc, t);
            const auto id = static_cast<std::uint32_t>(rng() % cap);
            const auto aa = encode_tag_address(id, cfg.redundancy_n);
            BitSeq bits;
            const int pre = cfg.mode == PhyMode::LE1M ? 8 : 16;
            for (int i = 0; i < pre; ++i) bits.push_back(i % 2);
            const BitSeq sym = tag_address_symbols(aa);
            bits.insert(bits.end(), sym.begin(), sym.end());
            bits.insert(bits.end(), {0, 1, 0, 0});
            auto w = gfsk_modulate(bits, cfg.mode, cfg.sample_rate);
            if (!cfg.noiseless) w = add_awgn(w, cfg.snr_db, rng);
            const auto disc = delay_discriminator(w, dcfg);
            const auto sync = detect_sync(disc, cfg.mode, dcfg, cfg.sample_rate);
            if (!sync.detected) continue;
            const auto pulses = transition_pulses(disc, cfg.mode, dcfg,
                                                  cfg.sample_rate,
                                                  sync.detect_time, 32);
            const auto got = decode_activation(pulses, cfg.redundancy_n);
            if (got && *got == id) ++correct;
        }
        m["activation_rate"] = static_cast<double>(correct) /
                               static_cast<double>(cfg.trials);
        m["points"] = ordered_json::array(
            {{{"trials", cfg.trials},
              {"activation_rate", m["activation_rate"]}}});
        return detail::make_report(cfg, 0.0, m);
    }

    if (cfg.scenario == "goodput-vs-snr") {
        auto points = ordered_json::array();
        double span = 0;
        if (cfg.noiseless) {
            auto p = detail::goodput_point(cfg, cfg.channel_model(), 0);
            p["snr_db"] = "inf";
            p["model_kbps"] = goodput_model_kbps(cfg.goodput_config());
            points.push_back(p);
            span += static_cast<double>(cfg.trials) * cfg.conn_interval_s;
        } else {
            std::uint64_t idx = 0;
            for (double snr : cfg.snr_sweep_db) {
                auto ch = flat_channel(snr, cfg.erasure_p, cfg.seed);
                auto p = detail::goodput_point(cfg, ch, idx++);
                p["snr_db"] = snr;
                points.push_back(p);
                span += static_cast<double>(cfg.trials) * cfg.conn_interval_s;
            }
        }
        m["points"] = points;
        return detail::make_report(cfg, span, m);
    }

    if (cfg.scenario == "goodput-vs-loss") {
        auto points = ordered_json::array();
        std::uint64_t idx = 0;
        double span = 0;
        for (double p_loss : {0.0, 0.1, 0.2, 0.4, 0.6, 0.8}) {
            auto base = cfg;
            base.erasure_p = p_loss;
            auto p = detail::goodput_point(base, base.channel_model(), idx++);
            p["erasure_p"] = p_loss;
            points.push_back(p);
            span += static_cast<double>(cfg.trials) * cfg.conn_interval_s;
        }
        m["points"] = points;
        return detail::make_report(cfg, span, m);
    }

    if (cfg.scenario == "fhss-per-channel") {
        const auto channel = cfg.channel_model();
        EventContext ctx;
        ctx.params.hop_increment = cfg.hop_increment;
        ctx.params.channel_map = cfg.channel_map;
        ctx.params.crc_init = 0x555555;
        ctx.f_shift_hz = cfg.f_shift_hz;
        ctx.tag_message.assign(32, 0x5A);
        std::array<std::uint64_t, kDataChannels> events{}, ok{};
        for (std::uint64_t e = 0; e < cfg.trials; ++e) {
            auto rng = substream(cfg.seed, sc, 0, e);
            const auto rec = run_connection_event(ctx, channel, rng, e);
            ++events[static_cast<std::size_t>(rec.channel_used)];
            if (rec.outcome == EventOutcome::ok)
                ++ok[static_cast<std::size_t>(rec.channel_used)];
        }
        auto points = ordered_json::array();
        for (int c = 0; c < kDataChannels; ++c) {
            const auto n = events[static_cast<std::size_t>(c)];
            if (!((cfg.channel_map >> c) & 1) && n == 0) continue;
            points.push_back(
                {{"channel", c},
                 {"events", n},
                 {"per", n ? 1.0 - static_cast<double>(
                                       ok[static_cast<std::size_t>(c)]) /
                                       static_cast<double>(n)
                           : 0.0}});
        }
        m["points"] = points;
        const double span = static_cast<double>(cfg.trials) * cfg.conn_interval_s;
        return detail::make_report(cfg, span, m);
    }

    if (cfg.scenario == "fhss-hopping") {
        int last = 0;
        std::array<std::uint64_t, kDataChannels> counts{};
        std::uint64_t legality_violations = 0, offset_violations = 0;
        const int steps = static_cast<int>(
            std::round(cfg.f_shift_hz / kChannelSpacingHz));
        for (std::uint64_t e = 0; e < cfg.trials; ++e) {
            const auto hop = csa_next_channel(last, cfg.hop_increment,
                                              cfg.channel_map);
            last = hop.unmapped;
            if (!((cfg.channel_map >> hop.mapped) & 1)) ++legality_violations;
            ++counts[static_cast<std::size_t>(hop.mapped)];
            if (hop.mapped - steps >= 0) {
                if (carrier_channel(hop.mapped, cfg.f_shift_hz) + steps !=
                    hop.mapped)
                    ++offset_violations;
            }
        }
        int used = 0;
        for (int c = 0; c < kDataChannels; ++c)
            if ((cfg.channel_map >> c) & 1) ++used;
        double max_dev = 0;
        const bool full = used == kDataChannels;
        if (full) {
            const double uniform = static_cast<double>(cfg.trials) / used;
            for (int c = 0; c < kDataChannels; ++c)
                max_dev = std::max(
                    max_dev,
                    std::abs(counts[static_cast<std::size_t>(c)] / uniform -
                             1.0));
        }
        m["legality_violations"] = legality_violations;
        m["offset_violations"] = offset_violations;
        m["max_uniform_deviation"] = max_dev;
        m["points"] = ordered_json::array(
            {{{"hops", cfg.trials},
              {"legality_violations", legality_violations},
              {"offset_violations", offset_violations},
              {"max_uniform_deviation", max_dev}}});
        return detail::make_report(cfg, 0.0, m);
    }

    if (cfg.scenario == "establishment") {
        std::uint64_t succ = 0, events_total = 0;
        for (std::uint64_t t = 0; t < cfg.trials; ++t) {
            auto rng = substream(cfg.seed, sc, t);
            const auto res = establish(cfg.erasure_p, rng);
            if (res.success) ++succ;
            events_total += static_cast<std::uint64_t>(res.events_used);
        }
        m["establishment_success"] = static_cast<double>(succ) /
                                     static_cast<double>(cfg.trials);
        m["mean_events_used"] = static_cast<double>(events_total) /
                                static_cast<double>(cfg.trials);
        m["points"] = ordered_json::array(
            {{{"erasure_p", cfg.erasure_p},
              {"trials", cfg.trials},
              {"establishment_success", m["establishment_success"]},
              {"mean_events_used", m["mean_events_used"]}}});
        const double span = static_cast<double>(events_total) *
                            cfg.conn_interval_s;
        return detail::make_report(cfg, span, m);
    }

    if (cfg.scenario == "maintenance") {
        std::uint64_t alive = 0;
        for (std::uint64_t t = 0; t < cfg.trials; ++t) {
            auto rng = substream(cfg.seed, sc, t);
            const auto res = maintain(cfg.duration_s, cfg.conn_interval_s,
                                      cfg.erasure_p, rng, false);
            if (res.survived) ++alive;
        }
        m["maintenance_success"] = static_cast<double>(alive) /
                                   static_cast<double>(cfg.trials);
        m["points"] = ordered_json::array(
            {{{"erasure_p", cfg.erasure_p},
              {"trials", cfg.trials},
              {"duration_s", cfg.duration_s},
              {"maintenance_success", m["maintenance_success"]}}});
        const double span = static_cast<double>(cfg.trials) * cfg.duration_s;
        return detail::make_report(cfg, span, m);
    }

    if (cfg.scenario == "multi-tag") {
        const auto channel = cfg.channel_model();
        std::vector<std::uint32_t> tags(cfg.n_tags);
        for (std::size_t i = 0; i < tags.size(); ++i)
            tags[i] = static_cast<std::uint32_t>(i);
        const double horizon = static_cast<double>(cfg.trials) *
                               cfg.conn_interval_s;
        const auto timeline = tdd_schedule(tags, cfg.conn_interval_s, horizon);
        std::vector<EventContext> ctxs(cfg.n_tags);
        std::vector<std::uint64_t> bytes(cfg.n_tags, 0);
        const std::uint32_t budget = packets_per_event(cfg.goodput_config());
        for (std::size_t i = 0; i < ctxs.size(); ++i) {
            ctxs[i].params.hop_increment = cfg.hop_increment;
            ctxs[i].params.channel_map = cfg.channel_map;
            ctxs[i].params.crc_init = 0x555555 + static_cast<std::uint32_t>(i);
            ctxs[i].f_shift_hz = cfg.f_shift_hz;
            ctxs[i].tag_message.assign(cfg.payload_bytes(), 0xC3);
            ctxs[i].packet_budget = budget;
        }
        for (std::size_t slot = 0; slot < timeline.size(); ++slot) {
            const std::uint32_t tag = timeline[slot];
            auto rng = substream(cfg.seed, sc, tag, slot);
            const auto rec = run_connection_event(ctxs[tag], channel, rng, slot);
            bytes[tag] += rec.bytes_delivered;
        }
        auto points = ordered_json::array();
        for (std::size_t i = 0; i < cfg.n_tags; ++i)
            points.push_back(
                {{"tag_id", i},
                 {"goodput_kbps",
                  static_cast<double>(bytes[i]) * 8.0 / horizon / 1000.0}});
        m["points"] = points;
        return detail::make_report(cfg, horizon, m);
    }

    throw ConfigError("unknown scenario: " + cfg.scenario); // unreachable
}

// ---------------------------------------------------------------------------
// Sweeps
// ---------------------------------------------------------------------------

inline std::vector<MetricsReport> sweep(const ScenarioConfig& base,
                                        const std::string& axis,
                                        const std::vector<double>& values) {
    std::vector<MetricsReport> reports;
    for (double v : values) {
        ScenarioConfig cfg = base;
        if (axis == "snr_db") {
            cfg.snr_db = v;
            cfg.noiseless = false;
            cfg.snr_sweep_db = {v};
        } else if (axis == "erasure_p") {
            cfg.erasure_p = v;
        } else if (axis == "conn_interval_s") {
            cfg.conn_interval_s = v;
        } else if (axis == "inner_payload_bytes") {
            cfg.inner_payload_bytes = static_cast<std::size_t>(v);
        } else if (axis == "duration_s") {
            cfg.duration_s = v;
        } else {
            throw ConfigError("unknown sweep axis: " + axis);
        }
        cfg.validate();
        reports.push_back(run_scenario(cfg));
    }
    return reports;
}

inline std::string sweep_csv(const std::string& axis,
                             const std::vector<double>& values,
                             const std::vector<MetricsReport>& reports) {
    std::ostringstream out;
    for (std::size_t i = 0; i < reports.size(); ++i) {
        const auto& points = reports[i].doc.at("metrics").at("points");
        for (const auto& row : points) {
            if (i == 0 && &row == &points[0]) {
                out << axis;
                for (auto it = row.begin(); it != row.end(); ++it)
                    out << "," << it.key();
                out << "\n";
            }
            out << ordered_json(values[i]).dump();
            for (auto it = row.begin(); it != row.end(); ++it)
                out << ","
                    << (it.value().is_string() ? it.value().get<std::string>()
                                               : it.value().dump());
            out << "\n";
        }
    }
    return out.str();
}

// ---------------------------------------------------------------------------
// Paper arithmetic cross-checks
// ---------------------------------------------------------------------------

struct ConsistencyCheck {
    std::string name;
    double got;
    double want;
    double tolerance;
    bool pass;
};

inline std::vector<ConsistencyCheck> paper_consistency() {
    std::vector<ConsistencyCheck> checks;
    auto add = [&](const std::string& name, double got, double want,
                   double tol) {
        checks.push_back({name, got, want, tol, std::abs(got - want) <= tol});
    };
    add("goodput ratio 532/8.4", 532.0 / 8.4, 63.3, 0.1);
    add("tag capacity 2^(32/8)",
        static_cast<double>(tag_address_capacity(8)), 16.0, 0.0);
    add("LE1M max frame bytes 1+4+2+251+3",
        static_cast<double>(1 + 4 + 2 + 251 + 3), 261.0, 0.0);
    add("LE2M 241B inner airtime us",
        packet_airtime_s(PhyMode::LE2M, 241) * 1e6, 1008.0, 1e-6);
    return checks;
}

// ---------------------------------------------------------------------------
// File emission
// ---------------------------------------------------------------------------

inline void write_report(const MetricsReport& rep, const std::string& path,
                         const std::string& format) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open output file: " + path);
    if (format == "json")
        f << rep.to_json_string();
    else if (format == "csv")
        f << rep.to_csv();
    else
        throw ConfigError("unknown format: " + format);
}

// Event log export: JSON lines, one EventRecord per line.
inline std::string event_log_lines(const std::vector<EventRecord>& events) {
    std::ostringstream out;
    for (const auto& e : events) {
        ordered_json j;
        j["event_index"] = e.event_index;
        j["channel_used"] = e.channel_used;
        j["excitation_channel"] = e.excitation_channel;
        j["packets_exchanged"] = e.packets_exchanged;
        j["bytes_delivered"] = e.bytes_delivered;
        j["outcome"] = e.outcome == EventOutcome::ok ? "ok" : "lost";
        out << j.dump() << "\n";
    }
    return out.str();
}

// ---------------------------------------------------------------------------
// Waveform fixtures: 32-bit little-endian float interleaved I/Q plus a JSON
// sidecar descriptor.
// ---------------------------------------------------------------------------

inline void save_waveform_fixture(const IqWaveform& w, PhyMode mode,
                                  const std::string& base_path) {
    std::ofstream raw(base_path + ".f32", std::ios::binary);
    if (!raw) throw std::runtime_error("cannot open " + base_path + ".f32");
    for (const auto& s : w.samples) {
        const float iq[2] = {static_cast<float>(s.real()),
                             static_cast<float>(s.imag())};
        raw.write(reinterpret_cast<const char*>(iq), sizeof iq);
    }
    ordered_json side;
    side["sample_rate"] = w.sample_rate;
    side["mode"] = phy_mode_name(mode);
    side["channel"] = w.center_channel;
    std::ofstream meta(base_path + ".json", std::ios::binary);
    meta << side.dump(2) << "\n";
}

inline IqWaveform load_waveform_fixture(const std::string& base_path,
                                        PhyMode* mode_out = nullptr) {
    std::ifstream meta(base_path + ".json", std::ios::binary);
    if (!meta) throw std::runtime_error("cannot open " + base_path + ".json");
    const auto side = ordered_json::parse(meta);
    IqWaveform w;
    w.sample_rate = side.at("sample_rate");
    w.center_channel = side.at("channel");
    if (mode_out) {
        const auto m = phy_mode_from_name(side.at("mode"));
        if (!m) throw std::runtime_error("bad mode in sidecar");
        *mode_out = *m;
    }
    std::ifstream raw(base_path + ".f32", std::ios::binary);
    if (!raw) throw std::runtime_error("cannot open " + base_path + ".f32");
    float iq[2];
    while (raw.read(reinterpret_cast<char*>(iq), sizeof iq))
        w.samples.emplace_back(iq[0], iq[1]);
    return w;
}

} // namespace pble
