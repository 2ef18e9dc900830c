#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>

#include "pble/phy.hpp"

namespace pble {

// ---------------------------------------------------------------------------
// Seeded randomness. Every (scenario, trial, event) triple maps to an
// independent substream via splitmix64 chaining, so trials are reproducible
// and order-independent.
// ---------------------------------------------------------------------------

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ull;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
    return x ^ (x >> 31);
}

inline std::mt19937_64 substream(std::uint64_t seed, std::uint64_t scenario,
                                 std::uint64_t trial = 0,
                                 std::uint64_t event = 0) {
    std::uint64_t s = splitmix64(seed);
    s = splitmix64(s ^ splitmix64(scenario));
    s = splitmix64(s ^ splitmix64(trial));
    s = splitmix64(s ^ splitmix64(event));
    return std::mt19937_64(s);
}

struct ChannelModel {
    std::array<double, 40> snr_db{}; // per-channel SNR
    bool noiseless = true;           // bypass flag: no AWGN applied
    double erasure_p = 0.0;
    double amplitude = 1.0; // flat-fading scale
    std::uint64_t seed = 0;

    double snr_for(int channel) const {
        if (channel < 0 || channel > 39)
            throw std::invalid_argument("channel index out of range");
        return snr_db[static_cast<std::size_t>(channel)];
    }
};

inline ChannelModel flat_channel(double snr_db, double erasure_p = 0.0,
                                 std::uint64_t seed = 0) {
    ChannelModel m;
    m.snr_db.fill(snr_db);
    m.noiseless = false;
    m.erasure_p = erasure_p;
    m.seed = seed;
    return m;
}

inline ChannelModel noiseless_channel(double erasure_p = 0.0,
                                      std::uint64_t seed = 0) {
    ChannelModel m;
    m.snr_db.fill(0.0);
    m.noiseless = true;
    m.erasure_p = erasure_p;
    m.seed = seed;
    return m;
}

inline ChannelModel per_channel_snr(const std::array<double, 40>& snrs,
                                    double erasure_p = 0.0,
                                    std::uint64_t seed = 0) {
    ChannelModel m;
    m.snr_db = snrs;
    m.noiseless = false;
    m.erasure_p = erasure_p;
    m.seed = seed;
    return m;
}

// Complex AWGN at the given SNR relative to the measured signal power.
inline IqWaveform add_awgn(const IqWaveform& w, double snr_db,
                           std::mt19937_64& rng) {
    double power = 0;
    for (const auto& s : w.samples) power += std::norm(s);
    power /= static_cast<double>(w.samples.size());
    const double noise_power = power / std::pow(10.0, snr_db / 10.0);
    const double sigma = std::sqrt(noise_power / 2.0);
    std::normal_distribution<double> gauss(0.0, sigma);
    IqWaveform out = w;
    for (auto& s : out.samples) s += cplx(gauss(rng), gauss(rng));
    return out;
}

inline bool erase_packet(double p, std::mt19937_64& rng) {
    if (p < 0.0 || p > 1.0)
        throw std::invalid_argument("erasure probability outside [0,1]");
    if (p == 0.0) return false;
    if (p == 1.0) return true;
    std::uniform_real_distribution<double> u(0.0, 1.0);
    return u(rng) < p;
}

// Bit error probability for the bit-level fidelity path; a monotone
// noncoherent-FSK style mapping from SNR, not a measured curve.
inline double ber_from_snr(double snr_db) {
    const double snr = std::pow(10.0, snr_db / 10.0);
    return 0.5 * std::exp(-snr / 2.0);
}

} // namespace pble
