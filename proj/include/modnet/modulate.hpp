#pragma once

#include <algorithm>
#include <complex>
#include <string>
#include <vector>

#include "modnet/dsp.hpp"
#include "modnet/rng.hpp"

namespace modnet {

// The 11-class catalog, in label order.
enum class ModClass {
    Bpsk = 0,
    Qpsk,
    Psk8,
    Pam4,
    Qam16,
    Qam64,
    Gfsk,
    Cpfsk,
    Wbfm,
    AmDsb,
    AmSsb,
};

inline const std::vector<std::string>& mod_class_names() {
    static const std::vector<std::string> names = {
        "bpsk", "qpsk", "8psk",  "pam4",   "qam16", "qam64",
        "gfsk", "cpfsk", "wbfm", "am-dsb", "am-ssb"};
    return names;
}

inline constexpr int kNumModClasses = 11;

inline const std::string& mod_class_name(ModClass m) {
    return mod_class_names()[static_cast<std::size_t>(m)];
}

inline ModClass mod_class_from_name(const std::string& name) {
    const auto& names = mod_class_names();
    for (std::size_t i = 0; i < names.size(); ++i)
        if (names[i] == name) return static_cast<ModClass>(i);
    throw ConfigError("unknown modulation class '" + name + "'");
}

inline bool is_analog(ModClass m) {
    return m == ModClass::Wbfm || m == ModClass::AmDsb || m == ModClass::AmSsb;
}

inline bool is_linear_digital(ModClass m) {
    switch (m) {
        case ModClass::Bpsk:
        case ModClass::Qpsk:
        case ModClass::Psk8:
        case ModClass::Pam4:
        case ModClass::Qam16:
        case ModClass::Qam64:
            return true;
        default:
            return false;
    }
}

inline int bits_per_symbol(ModClass m) {
    switch (m) {
        case ModClass::Bpsk: return 1;
        case ModClass::Qpsk: return 2;
        case ModClass::Psk8: return 3;
        case ModClass::Pam4: return 2;
        case ModClass::Qam16: return 4;
        case ModClass::Qam64: return 6;
        case ModClass::Gfsk:
        case ModClass::Cpfsk: return 1;
        default:
            throw ConfigError("bits_per_symbol: not a digital class");
    }
}

inline unsigned gray_encode(unsigned v) { return v ^ (v >> 1); }

inline unsigned gray_decode(unsigned g) {
    unsigned b = 0;
    for (; g; g >>= 1) b ^= g;
    return b;
}

namespace detail {

// Gray-coded PAM levels {-(m-1), ..., +(m-1)} in steps of 2, unnormalized.
// Level position p carries bit pattern gray_encode(p), so the position for a
// bit pattern is gray_decode(bits); adjacent levels then differ in one bit.
inline double pam_level(unsigned bits, unsigned m) {
    unsigned pos = gray_decode(bits);
    return 2.0 * static_cast<double>(pos) - static_cast<double>(m - 1);
}

}  // namespace detail

// Maps a bit pattern to a unit-average-energy constellation point.
// Bit order is MSB-first as drawn from the payload stream.
inline cplx symbol_for_bits(ModClass m, unsigned bits) {
    switch (m) {
        case ModClass::Bpsk:
            // bit 0 -> +1, bit 1 -> -1
            return cplx(bits ? -1.0 : 1.0, 0.0);
        case ModClass::Qpsk: {
            unsigned pos = gray_decode(bits & 3u);
            double ph = M_PI / 4.0 + static_cast<double>(pos) * M_PI / 2.0;
            return cplx(std::cos(ph), std::sin(ph));
        }
        case ModClass::Psk8: {
            unsigned pos = gray_decode(bits & 7u);
            double ph = static_cast<double>(pos) * M_PI / 4.0;
            return cplx(std::cos(ph), std::sin(ph));
        }
        case ModClass::Pam4:
            // E{a^2} = (9+1+1+9)/4 = 5
            return cplx(detail::pam_level(bits & 3u, 4) / std::sqrt(5.0), 0.0);
        case ModClass::Qam16: {
            double i = detail::pam_level((bits >> 2) & 3u, 4);
            double q = detail::pam_level(bits & 3u, 4);
            return cplx(i, q) / std::sqrt(10.0);
        }
        case ModClass::Qam64: {
            double i = detail::pam_level((bits >> 3) & 7u, 8);
            double q = detail::pam_level(bits & 7u, 8);
            return cplx(i, q) / std::sqrt(42.0);
        }
        default:
            throw ConfigError("symbol_for_bits: not a linear digital class");
    }
}

inline std::vector<cplx> constellation(ModClass m) {
    const int bits = bits_per_symbol(m);
    std::vector<cplx> points;
    for (unsigned v = 0; v < (1u << bits); ++v) points.push_back(symbol_for_bits(m, v));
    return points;
}

// Band-limited "program audio" stand-in for the analog classes: a handful of
// low-frequency tones plus low-passed noise, RMS-normalized.
inline std::vector<double> analog_source(Rng& rng, int n_samples) {
    std::vector<double> m(static_cast<std::size_t>(n_samples), 0.0);
    const int n_tones = 4;
    for (int t = 0; t < n_tones; ++t) {
        double f = rng.uniform(0.002, 0.04);
        double amp = rng.uniform(0.3, 1.0);
        double ph = rng.uniform(0.0, 2.0 * M_PI);
        for (int i = 0; i < n_samples; ++i)
            m[static_cast<std::size_t>(i)] += amp * std::cos(2.0 * M_PI * f * i + ph);
    }
    std::vector<double> noise(static_cast<std::size_t>(n_samples));
    for (auto& v : noise) v = rng.normal();
    auto lp = lowpass_taps(0.05, 65);
    auto filtered = convolve_full(noise, lp);
    for (int i = 0; i < n_samples; ++i)
        m[static_cast<std::size_t>(i)] += 0.7 * filtered[static_cast<std::size_t>(i + 32)];

    double rms = 0.0;
    for (double v : m) rms += v * v;
    rms = std::sqrt(rms / n_samples);
    if (rms > 0.0)
        for (double& v : m) v /= rms;
    return m;
}

struct ModulateOptions {
    double rrc_alpha = 0.35;
    int rrc_span = 10;        // symbols
    double gfsk_bt = 0.35;
    double fsk_mod_index = 0.5;
    double fm_deviation = 0.08;  // cycles/sample at unit source amplitude
    double am_depth = 0.5;
};

// Synthesizes `n_samples` of unit-average-power complex baseband for one
// class. Digital classes draw i.i.d. symbols; analog classes modulate the
// synthetic audio source.
inline std::vector<cplx> modulate(ModClass cls, Rng& payload_rng, int n_samples,
                                  int sps = 8, const ModulateOptions& opt = {}) {
    if (n_samples < 1) throw ConfigError("modulate: n_samples must be >= 1");
    if (!is_analog(cls) && sps < 2)
        throw ConfigError("modulate: digital classes need sps >= 2");

    std::vector<cplx> out;
    if (is_linear_digital(cls)) {
        const int bps = bits_per_symbol(cls);
        const int n_sym = (n_samples + sps - 1) / sps + opt.rrc_span + 2;
        std::vector<cplx> up(static_cast<std::size_t>(n_sym * sps), cplx(0.0, 0.0));
        for (int s = 0; s < n_sym; ++s) {
            unsigned bits = 0;
            for (int b = 0; b < bps; ++b)
                bits = (bits << 1) | (payload_rng.uniform() < 0.5 ? 0u : 1u);
            up[static_cast<std::size_t>(s * sps)] = symbol_for_bits(cls, bits);
        }
        auto shaped = convolve_full(up, rrc_taps(sps, opt.rrc_span, opt.rrc_alpha));
        // skip the filter ramp-up plus a random symbol-timing phase
        int offset = opt.rrc_span * sps / 2 +
                     static_cast<int>(payload_rng.uniform_index(static_cast<std::uint64_t>(sps)));
        out.assign(shaped.begin() + offset, shaped.begin() + offset + n_samples);
    } else if (cls == ModClass::Gfsk || cls == ModClass::Cpfsk) {
        const int n_sym = (n_samples + sps - 1) / sps + 6;
        std::vector<double> nrz(static_cast<std::size_t>(n_sym * sps));
        for (int s = 0; s < n_sym; ++s) {
            double a = payload_rng.uniform() < 0.5 ? 1.0 : -1.0;
            for (int k = 0; k < sps; ++k) nrz[static_cast<std::size_t>(s * sps + k)] = a;
        }
        std::vector<double> freq;
        int offset;
        if (cls == ModClass::Gfsk) {
            auto g = gaussian_taps(sps, opt.gfsk_bt, 4);
            freq = convolve_full(nrz, g);
            offset = 2 * sps +
                     static_cast<int>(payload_rng.uniform_index(static_cast<std::uint64_t>(sps)));
        } else {
            freq = nrz;
            offset = static_cast<int>(payload_rng.uniform_index(static_cast<std::uint64_t>(sps)));
        }
        const double step = M_PI * opt.fsk_mod_index / sps;
        double phase = payload_rng.uniform(0.0, 2.0 * M_PI);
        out.resize(static_cast<std::size_t>(n_samples));
        for (int i = 0; i < n_samples; ++i) {
            phase += step * freq[static_cast<std::size_t>(i + offset)];
            out[static_cast<std::size_t>(i)] = cplx(std::cos(phase), std::sin(phase));
        }
    } else if (cls == ModClass::Wbfm) {
        auto m = analog_source(payload_rng, n_samples);
        double phase = payload_rng.uniform(0.0, 2.0 * M_PI);
        out.resize(static_cast<std::size_t>(n_samples));
        for (int i = 0; i < n_samples; ++i) {
            phase += 2.0 * M_PI * opt.fm_deviation * m[static_cast<std::size_t>(i)];
            out[static_cast<std::size_t>(i)] = cplx(std::cos(phase), std::sin(phase));
        }
    } else if (cls == ModClass::AmDsb) {
        auto m = analog_source(payload_rng, n_samples);
        double peak = 1e-12;
        for (double v : m) peak = std::max(peak, std::abs(v));
        out.resize(static_cast<std::size_t>(n_samples));
        for (int i = 0; i < n_samples; ++i)
            out[static_cast<std::size_t>(i)] =
                cplx(1.0 + opt.am_depth * m[static_cast<std::size_t>(i)] / peak, 0.0);
    } else if (cls == ModClass::AmSsb) {
        const int ht = 101, delay = ht / 2;
        auto m = analog_source(payload_rng, n_samples + 2 * ht);
        auto hq = convolve_full(m, hilbert_fir(ht));
        out.resize(static_cast<std::size_t>(n_samples));
        for (int i = 0; i < n_samples; ++i) {
            // align the Hilbert branch's group delay with the direct branch
            double re = m[static_cast<std::size_t>(i + delay + ht / 2)];
            double im = hq[static_cast<std::size_t>(i + delay + ht - 1)];
            out[static_cast<std::size_t>(i)] = cplx(re, im);
        }
    } else {
        throw ConfigError("modulate: unhandled class");
    }

    normalize_power(out);
    return out;
}

}  // namespace modnet
