#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <numbers>
#include <stdexcept>
#include <vector>

#include "pble/bits.hpp"
#include "pble/packet.hpp"

namespace pble {

using cplx = std::complex<double>;

inline constexpr double kPi = std::numbers::pi;

// RF center frequency of a BLE channel index (data 0..36, advertising 37..39).
inline double channel_freq_hz(int channel_index) {
    if (channel_index >= 0 && channel_index <= 10)
        return 2404e6 + 2e6 * channel_index;
    if (channel_index >= 11 && channel_index <= 36)
        return 2428e6 + 2e6 * (channel_index - 11);
    if (channel_index == 37) return 2402e6;
    if (channel_index == 38) return 2426e6;
    if (channel_index == 39) return 2480e6;
    throw std::invalid_argument("channel index out of range 0..39");
}

struct IqWaveform {
    double sample_rate = 100e6;
    std::vector<cplx> samples;
    int center_channel = -1; // -1: plain baseband

    double duration() const { return samples.size() / sample_rate; }

    double center_freq_hz() const {
        return center_channel >= 0 ? channel_freq_hz(center_channel) : 2.44e9;
    }
};

inline std::size_t samples_per_symbol(double sample_rate, PhyMode mode) {
    const double sps = sample_rate / symbol_rate(mode);
    const double rounded = std::round(sps);
    if (std::abs(sps - rounded) > 1e-9)
        throw std::invalid_argument("sample rate not an integer multiple of symbol rate");
    if (rounded < 8.0)
        throw std::invalid_argument("sample rate below 8x symbol rate");
    return static_cast<std::size_t>(rounded);
}

// ---------------------------------------------------------------------------
// GFSK modulation. Modulation index 0.5, BT = 0.5; each symbol accrues a net
// phase of +-pi/2. Frequency deviation is symbol_rate/4 (250 kHz LE1M,
// 500 kHz LE2M).
// ---------------------------------------------------------------------------

// Gaussian frequency pulse for one symbol, centered mid-symbol and
// truncated to a 3-symbol span; samples sum to sps so an isolated symbol
// accrues exactly pi/2 of phase.
inline std::vector<double> gaussian_freq_pulse(std::size_t sps, double bt = 0.5) {
    const double sigma = std::sqrt(std::log(2.0)) / (2.0 * kPi * bt) *
                         static_cast<double>(sps);
    const auto len = static_cast<long>(sps * 3);
    const double center = (static_cast<double>(len) - 1.0) / 2.0;
    std::vector<double> p(static_cast<std::size_t>(len));
    double sum = 0;
    for (long i = 0; i < len; ++i) {
        const double x = (static_cast<double>(i) - center) / sigma;
        p[static_cast<std::size_t>(i)] = std::exp(-0.5 * x * x);
        sum += p[static_cast<std::size_t>(i)];
    }
    for (double& v : p) v *= static_cast<double>(sps) / sum;
    return p;
}

inline IqWaveform gfsk_modulate(const BitSeq& bits, PhyMode mode,
                                double sample_rate, double amplitude = 1.0) {
    const std::size_t sps = samples_per_symbol(sample_rate, mode);
    const double f_dev = symbol_rate(mode) / 4.0;
    const std::size_t n = bits.size() * sps;

    const std::vector<double> pulse = gaussian_freq_pulse(sps);
    const long span = static_cast<long>(pulse.size());
    const long lead = (span - static_cast<long>(sps)) / 2;

    std::vector<double> freq(n, 0.0);
    for (std::size_t k = 0; k < bits.size(); ++k) {
        const double a = bits[k] ? 1.0 : -1.0;
        const long base = static_cast<long>(k * sps) - lead;
        for (long j = 0; j < span; ++j) {
            const long i = base + j;
            if (i >= 0 && i < static_cast<long>(n))
                freq[static_cast<std::size_t>(i)] +=
                    a * pulse[static_cast<std::size_t>(j)];
        }
    }

    IqWaveform w;
    w.sample_rate = sample_rate;
    w.samples.resize(n);
    double phase = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        phase += 2.0 * kPi * f_dev * freq[i] / sample_rate;
        w.samples[i] = std::polar(amplitude, phase);
    }
    return w;
}

// ---------------------------------------------------------------------------
// Backscatter model. The tag multiplies the incident carrier by a tone at
// f_shift and, inside the XOR region, adds per-symbol phase accumulations
// chips[k] in {0, pi}. The offset is cumulative: a pi chip toggles the
// reflection phase at the symbol boundary, so the receiver's boundary-
// inclusive phase measurement for symbol k picks up exactly chips[k].
// ---------------------------------------------------------------------------

struct SymbolPhases {
    std::vector<double> accum; // per-symbol phase accumulation, each 0 or pi

    static SymbolPhases from_bits(const BitSeq& bits) {
        SymbolPhases sp;
        sp.accum.reserve(bits.size());
        for (auto b : bits) sp.accum.push_back(b ? kPi : 0.0);
        return sp;
    }
};

inline IqWaveform backscatter_apply(const IqWaveform& carrier,
                                    const SymbolPhases& chips, double f_shift,
                                    std::size_t xor_start_symbol,
                                    std::size_t sps,
                                    double loss_scale = 1.0) {
    const std::size_t region_begin = xor_start_symbol * sps;
    const std::size_t region_symbols = chips.accum.size();
    if (region_begin + region_symbols * sps > carrier.samples.size())
        throw std::invalid_argument("chip count exceeds waveform region");

    IqWaveform out = carrier;
    double theta = 0.0;
    std::size_t next_boundary = region_begin;
    std::size_t chip_idx = 0;
    for (std::size_t i = 0; i < out.samples.size(); ++i) {
        if (chip_idx < region_symbols && i == next_boundary) {
            theta += chips.accum[chip_idx++];
            next_boundary += sps;
        }
        const double rot = 2.0 * kPi * f_shift * (i / carrier.sample_rate) + theta;
        out.samples[i] *= loss_scale * std::polar(1.0, rot);
    }
    return out;
}

// Shift a waveform's baseband center by delta_hz (receiver retune helper).
inline IqWaveform retune(const IqWaveform& w, double delta_hz) {
    IqWaveform out = w;
    for (std::size_t i = 0; i < out.samples.size(); ++i)
        out.samples[i] *= std::polar(1.0, -2.0 * kPi * delta_hz * (i / w.sample_rate));
    return out;
}

inline IqWaveform add_frequency_offset(const IqWaveform& w, double ppm) {
    if (std::abs(ppm) > 100.0)
        throw std::invalid_argument("|ppm| must be <= 100");
    const double offset_hz = w.center_freq_hz() * ppm * 1e-6;
    IqWaveform out = w;
    for (std::size_t i = 0; i < out.samples.size(); ++i)
        out.samples[i] *= std::polar(1.0, 2.0 * kPi * offset_hz * (i / w.sample_rate));
    return out;
}

// ---------------------------------------------------------------------------
// Standard-receiver demodulation: per-symbol wrapped phase accumulation,
// measured from just before the symbol boundary (so tag phase toggles are
// included) to 90% into the symbol. Positive -> 1, negative -> 0.
// ---------------------------------------------------------------------------

struct DemodResult {
    BitSeq bits;
    std::size_t ties = 0; // exact zero decisions, broken toward 0
};

inline DemodResult demodulate(const IqWaveform& w, PhyMode mode,
                              std::size_t start_sample = 0,
                              std::size_t n_symbols = 0) {
    const std::size_t sps = samples_per_symbol(w.sample_rate, mode);
    const std::size_t avail = (w.samples.size() - start_sample) / sps;
    if (n_symbols == 0 || n_symbols > avail) n_symbols = avail;

    DemodResult res;
    res.bits.resize(n_symbols);
    for (std::size_t k = 0; k < n_symbols; ++k) {
        const std::size_t b = start_sample + k * sps;
        const std::size_t s = (b == 0) ? 0 : b - 1;
        std::size_t e = b + (sps * 9) / 10;
        e = std::min(e, w.samples.size() - 1);
        const double dphi = std::arg(w.samples[e] * std::conj(w.samples[s]));
        if (dphi == 0.0) ++res.ties;
        res.bits[k] = dphi > 0.0 ? 1 : 0;
    }
    return res;
}

// ---------------------------------------------------------------------------
// Delay-and-mix discriminator. Models the SAW delay line (fixed delay and
// insertion loss), single-diode mixer and 10 MHz low-pass. At complex
// baseband the RF delay contributes a constant carrier phase
// 2*pi*carrier_freq*delay, which sets the operating point that separates
// the two symbol frequencies into distinct DC levels.
// ---------------------------------------------------------------------------

struct DiscriminatorConfig {
    double delay_s = 46e-9;
    double insertion_loss_db = 3.3;
    double lpf_cutoff_hz = 10e6;
    double comparator_threshold = 0.5; // normalized position between levels
    double hysteresis = 0.25;          // fraction of the level swing
    double carrier_freq_hz = 2.44e9;
};

namespace detail {

struct Biquad {
    double b0, b1, b2, a1, a2;
    double z1 = 0, z2 = 0;

    double step(double x) {
        const double y = b0 * x + z1;
        z1 = b1 * x - a1 * y + z2;
        z2 = b2 * x - a2 * y;
        return y;
    }
};

// 4th-order Butterworth low-pass as two RBJ biquads.
inline std::vector<Biquad> butterworth4_lowpass(double cutoff_hz,
                                                double sample_rate) {
    if (cutoff_hz >= sample_rate / 2)
        throw std::invalid_argument("LPF cutoff at or above Nyquist");
    std::vector<Biquad> sections;
    const double w0 = 2.0 * kPi * cutoff_hz / sample_rate;
    const double q[2] = {1.0 / (2.0 * std::cos(kPi / 8.0)),
                         1.0 / (2.0 * std::cos(3.0 * kPi / 8.0))};
    for (double Q : q) {
        const double alpha = std::sin(w0) / (2.0 * Q);
        const double a0 = 1.0 + alpha;
        Biquad s{};
        s.b0 = (1.0 - std::cos(w0)) / 2.0 / a0;
        s.b1 = (1.0 - std::cos(w0)) / a0;
        s.b2 = s.b0;
        s.a1 = (-2.0 * std::cos(w0)) / a0;
        s.a2 = (1.0 - alpha) / a0;
        sections.push_back(s);
    }
    return sections;
}

// Group delay of the two-biquad Butterworth at DC, in seconds.
inline double butterworth4_group_delay(double cutoff_hz) {
    // a1 coefficient of the normalized analog prototype, order 4
    return 2.6131259 / (2.0 * kPi * cutoff_hz);
}

// Band-limited fractional delay: windowed-sinc interpolation, 8 taps.
inline std::vector<double> fractional_delay_taps(double mu) {
    constexpr int kTaps = 8;
    constexpr int kCenter = 3;
    std::vector<double> h(kTaps);
    double sum = 0;
    for (int k = 0; k < kTaps; ++k) {
        const double x = (k - kCenter) - mu;
        const double sinc = x == 0.0 ? 1.0 : std::sin(kPi * x) / (kPi * x);
        const double win = 0.54 - 0.46 * std::cos(2.0 * kPi * k / (kTaps - 1));
        h[k] = sinc * win;
        sum += h[k];
    }
    for (double& v : h) v /= sum;
    return h;
}

} // namespace detail

// Delay of the discriminator's own processing chain relative to the input
// waveform, in seconds: half the SAW delay (the mix product edge centers
// between direct and delayed paths) plus the LPF group delay, minus a
// calibrated 11.5 ns that absorbs the discrete filter's departure from the
// analog group delay and half-sample integration conventions. detect_sync
// subtracts this from reported times.
inline double discriminator_chain_delay(const DiscriminatorConfig& cfg,
                                        double sample_rate) {
    (void)sample_rate;
    return 0.5 * cfg.delay_s +
           detail::butterworth4_group_delay(cfg.lpf_cutoff_hz) - 11.5e-9;
}

inline std::vector<double> delay_discriminator(const IqWaveform& w,
                                               const DiscriminatorConfig& cfg) {
    const double d_samples = cfg.delay_s * w.sample_rate;
    if (d_samples >= static_cast<double>(w.samples.size()))
        throw std::invalid_argument("delay exceeds waveform duration");
    const int d_int = static_cast<int>(std::floor(d_samples));
    const double mu = d_samples - d_int;
    const std::vector<double> h = detail::fractional_delay_taps(mu);
    const double loss = std::pow(10.0, -cfg.insertion_loss_db / 20.0);
    // The carrier phase across the delay sets the mixer operating point.
    // The delay is trimmed so that phase sits at quadrature (46 ns at
    // 2.44 GHz is 112.24 carrier cycles, within 4% of a quarter cycle),
    // which centers the slicer mid level at zero frequency deviation and
    // puts the higher symbol frequency on the higher output level.
    const cplx op_point = std::polar(1.0, -kPi / 2.0);

    auto sections = detail::butterworth4_lowpass(cfg.lpf_cutoff_hz, w.sample_rate);
    std::vector<double> out(w.samples.size(), 0.0);
    for (std::size_t i = 0; i < w.samples.size(); ++i) {
        cplx delayed = 0;
        for (int k = 0; k < static_cast<int>(h.size()); ++k) {
            const long idx = static_cast<long>(i) - d_int - k + 3;
            if (idx >= 0 && idx < static_cast<long>(w.samples.size()))
                delayed += h[static_cast<std::size_t>(k)] *
                           w.samples[static_cast<std::size_t>(idx)];
        }
        double mixed = std::real(w.samples[i] * std::conj(delayed) * op_point) * loss;
        for (auto& s : sections) mixed = s.step(mixed);
        out[i] = mixed;
    }
    return out;
}

// ---------------------------------------------------------------------------
// Preamble detection on the discriminator output: hysteresis comparator,
// then a run of alternating level transitions at symbol spacing.
// ---------------------------------------------------------------------------

struct SyncResult {
    bool detected = false;
    double detect_time = 0.0;  // estimated end of preamble, seconds
    double symbol_epoch = 0.0; // detect_time modulo the symbol period
};

namespace detail {

struct Edge {
    double t; // mid-level crossing time in samples
    int dir;  // +1 rising, -1 falling
};

inline double percentile(std::vector<double> v, double p) {
    if (v.empty()) return 0.0;
    const std::size_t idx = static_cast<std::size_t>(
        p * (static_cast<double>(v.size()) - 1.0) + 0.5);
    std::nth_element(v.begin(), v.begin() + idx, v.end());
    return v[idx];
}

inline std::vector<double> boxcar(const std::vector<double>& x, std::size_t win) {
    if (win <= 1) return x;
    std::vector<double> out(x.size(), 0.0);
    double acc = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        acc += x[i];
        if (i >= win) acc -= x[i - win];
        out[i] = acc / static_cast<double>(std::min(i + 1, win));
    }
    return out;
}

// Hysteresis comparator. Trigger thresholds sit half the hysteresis band
// away from mid; the reported time is back-interpolated to the mid-level
// crossing so the hysteresis adds no timing bias.
inline std::vector<Edge> slice_edges(const std::vector<double>& s, double mid,
                                     double hyst) {
    std::vector<Edge> edges;
    const double up = mid + hyst / 2, dn = mid - hyst / 2;
    int state = s.empty() ? 0 : (s[0] > mid ? 1 : 0);
    for (std::size_t i = 1; i < s.size(); ++i) {
        int dir = 0;
        if (state == 0 && s[i] > up) { dir = +1; state = 1; }
        else if (state == 1 && s[i] < dn) { dir = -1; state = 0; }
        if (!dir) continue;
        // walk back to the most recent mid crossing
        std::size_t j = i;
        while (j > 1 && ((dir > 0) ? (s[j - 1] > mid) : (s[j - 1] < mid))) --j;
        const double denom = s[j] - s[j - 1];
        const double frac = denom != 0.0 ? (mid - s[j - 1]) / denom : 0.5;
        edges.push_back({static_cast<double>(j - 1) + frac, dir});
    }
    return edges;
}

struct SlicerSetup {
    std::vector<double> smooth;
    std::vector<Edge> edges;
    std::size_t win = 1;
    bool valid = false;
};

inline SlicerSetup prepare_slicer(const std::vector<double>& disc,
                                  std::size_t sps,
                                  const DiscriminatorConfig& cfg,
                                  double sample_rate) {
    SlicerSetup s;
    s.win = std::max<std::size_t>(1, sps / 4);
    s.smooth = boxcar(disc, s.win);
    // wide percentile span: level occupancy can be very unbalanced (e.g. a
    // mostly-zero tag address region)
    const double lo = percentile(s.smooth, 0.05);
    const double hi = percentile(s.smooth, 0.95);
    const double swing = hi - lo;
    if (swing <= 0) return s;
    const double mid = lo + cfg.comparator_threshold * swing;
    s.edges = slice_edges(s.smooth, mid, cfg.hysteresis * swing);
    // drop warm-up artifacts: the filters start from zero state, which can
    // produce a spurious edge before the chain settles
    const double settle =
        static_cast<double>(s.win) +
        (cfg.delay_s + 4.0 * butterworth4_group_delay(cfg.lpf_cutoff_hz)) *
            sample_rate;
    std::erase_if(s.edges, [settle](const Edge& e) { return e.t < settle; });
    s.valid = true;
    return s;
}

} // namespace detail

inline SyncResult detect_sync(const std::vector<double>& disc, PhyMode mode,
                              const DiscriminatorConfig& cfg,
                              double sample_rate) {
    SyncResult res;
    if (disc.size() < 16) return res;
    const std::size_t isps = samples_per_symbol(sample_rate, mode);
    const double sps = static_cast<double>(isps);

    const auto sl = detail::prepare_slicer(disc, isps, cfg, sample_rate);
    if (!sl.valid) return res;
    const auto& edges = sl.edges;

    // Preamble: one transition per symbol boundary (7 for LE1M's 8 symbols,
    // 15 for LE2M's 16), hence transitions-1 qualifying intervals.
    const std::size_t intervals_needed =
        (mode == PhyMode::LE1M ? 8 : 16) - 2;
    if (edges.size() < intervals_needed + 1) return res;

    const double chain =
        discriminator_chain_delay(cfg, sample_rate) * sample_rate +
        (static_cast<double>(sl.win) - 1.0) / 2.0;
    for (std::size_t j = intervals_needed; j < edges.size(); ++j) {
        bool ok = true;
        for (std::size_t i = 0; i < intervals_needed; ++i) {
            const double gap = edges[j - i].t - edges[j - i - 1].t;
            if (gap < 0.7 * sps || gap > 1.3 * sps) { ok = false; break; }
        }
        if (!ok) continue;
        // Estimate the preamble end by averaging run edges projected forward.
        double acc = 0;
        for (std::size_t i = 0; i <= intervals_needed; ++i)
            acc += edges[j - i].t + (static_cast<double>(i) + 1.0) * sps;
        const double end_samples = acc / (intervals_needed + 1) - chain;
        res.detected = true;
        res.detect_time = end_samples / sample_rate;
        res.symbol_epoch = std::fmod(res.detect_time, 1.0 / symbol_rate(mode));
        if (res.symbol_epoch < 0) res.symbol_epoch += 1.0 / symbol_rate(mode);
        return res;
    }
    return res;
}

// Rising-transition pulses per symbol slot, for activation decoding: slot k
// is marked when a rising edge lands at its leading boundary.
inline BitSeq transition_pulses(const std::vector<double>& disc, PhyMode mode,
                                const DiscriminatorConfig& cfg,
                                double sample_rate, double region_start_s,
                                std::size_t n_slots) {
    const std::size_t isps = samples_per_symbol(sample_rate, mode);
    const double sps = static_cast<double>(isps);
    BitSeq pulses(n_slots, 0);

    const auto sl = detail::prepare_slicer(disc, isps, cfg, sample_rate);
    if (!sl.valid) return pulses;
    const double chain =
        discriminator_chain_delay(cfg, sample_rate) * sample_rate +
        (static_cast<double>(sl.win) - 1.0) / 2.0;
    const double start = region_start_s * sample_rate;

    for (const auto& e : sl.edges) {
        if (e.dir != +1) continue;
        const double slot = (e.t - chain - start) / sps;
        const long k = static_cast<long>(std::floor(slot + 0.5));
        if (k >= 0 && k < static_cast<long>(n_slots))
            pulses[static_cast<std::size_t>(k)] = 1;
    }
    return pulses;
}

} // namespace pble
