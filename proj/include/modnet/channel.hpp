#pragma once

#include <cmath>
#include <complex>
#include <vector>

#include "modnet/dsp.hpp"
#include "modnet/rng.hpp"

namespace modnet {

struct PdpTap {
    int delay_samples = 0;
    double power_db = 0.0;
};

inline void validate_pdp(const std::vector<PdpTap>& pdp) {
    if (pdp.empty()) throw ConfigError("power delay profile must have at least one tap");
    if (pdp.front().delay_samples != 0)
        throw ConfigError("power delay profile must start at delay 0");
    for (const auto& tap : pdp) {
        if (tap.delay_samples < 0) throw ConfigError("pdp delays must be non-negative");
        if (tap.power_db > 0.0) throw ConfigError("pdp powers must be <= 0 dB");
    }
}

// Frequency-selective fading: convolve with a random FIR whose tap k is
// complex Gaussian with variance from the profile power, then re-normalize
// to unit average power.
inline std::vector<cplx> apply_fading(const std::vector<cplx>& signal,
                                      const std::vector<PdpTap>& pdp, Rng& rng) {
    validate_pdp(pdp);
    int max_delay = 0;
    for (const auto& tap : pdp) max_delay = std::max(max_delay, tap.delay_samples);
    std::vector<cplx> h(static_cast<std::size_t>(max_delay) + 1, cplx(0.0, 0.0));
    for (const auto& tap : pdp) {
        double sigma = std::sqrt(std::pow(10.0, tap.power_db / 10.0) / 2.0);
        h[static_cast<std::size_t>(tap.delay_samples)] +=
            cplx(sigma * rng.normal(), sigma * rng.normal());
    }
    auto out = fir_causal(signal, h);
    normalize_power(out);
    return out;
}

// Local-oscillator offset: rotate sample n by exp(j 2 pi f_off n).
inline std::vector<cplx> apply_cfo(const std::vector<cplx>& signal, double f_off) {
    std::vector<cplx> out(signal.size());
    // incremental rotation with periodic re-sync against accumulated error
    cplx rot(1.0, 0.0);
    const cplx step(std::cos(2.0 * M_PI * f_off), std::sin(2.0 * M_PI * f_off));
    for (std::size_t n = 0; n < signal.size(); ++n) {
        if (n % 4096 == 0) {
            double ang = 2.0 * M_PI * f_off * static_cast<double>(n);
            rot = cplx(std::cos(ang), std::sin(ang));
        }
        out[n] = signal[n] * rot;
        rot *= step;
    }
    return out;
}

// Sample-rate offset: fractional resampling by (1 + ppm * 1e-6).
inline std::vector<cplx> apply_sro(const std::vector<cplx>& signal, double ppm) {
    return resample_sinc(signal, 1.0 + ppm * 1e-6);
}

// Complex AWGN at per-sample variance 10^(-snr_db/10); the signal is assumed
// unit average power.
inline std::vector<cplx> add_awgn(const std::vector<cplx>& signal, double snr_db,
                                  Rng& rng) {
    const double var = std::pow(10.0, -snr_db / 10.0);
    const double sigma = std::sqrt(var / 2.0);
    std::vector<cplx> out(signal.size());
    for (std::size_t n = 0; n < signal.size(); ++n)
        out[n] = signal[n] + cplx(sigma * rng.normal(), sigma * rng.normal());
    return out;
}

// SNR estimate from the known noise realization, in dB.
inline double measure_snr(const std::vector<cplx>& pre_noise,
                          const std::vector<cplx>& post_noise) {
    if (pre_noise.size() != post_noise.size())
        throw ShapeError("measure_snr: length mismatch");
    double ps = 0.0, pn = 0.0;
    for (std::size_t i = 0; i < pre_noise.size(); ++i) {
        ps += std::norm(pre_noise[i]);
        pn += std::norm(post_noise[i] - pre_noise[i]);
    }
    if (pn <= ps * 1e-30) pn = ps * 1e-30;  // caps the estimate at +300 dB
    return 10.0 * std::log10(ps / pn);
}

}  // namespace modnet
