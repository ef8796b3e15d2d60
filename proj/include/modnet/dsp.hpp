#pragma once

#include <cmath>
#include <complex>
#include <vector>

#include "modnet/common.hpp"

namespace modnet {

using cplx = std::complex<double>;

inline double mean_power(const std::vector<cplx>& x) {
    double p = 0.0;
    for (const cplx& v : x) p += std::norm(v);
    return x.empty() ? 0.0 : p / static_cast<double>(x.size());
}

inline void normalize_power(std::vector<cplx>& x) {
    double p = mean_power(x);
    if (p <= 0.0) return;
    double s = 1.0 / std::sqrt(p);
    for (cplx& v : x) v *= s;
}

// Root-raised-cosine impulse response; span_symbols * sps + 1 taps, peak at
// the center. Times are in symbol units.
inline std::vector<double> rrc_taps(int sps, int span_symbols, double alpha) {
    if (sps < 1 || span_symbols < 1 || alpha <= 0.0 || alpha > 1.0)
        throw ConfigError("rrc_taps: invalid sps/span/alpha");
    const int n = span_symbols * sps + 1;
    std::vector<double> h(static_cast<std::size_t>(n));
    const double mid = static_cast<double>(span_symbols) / 2.0;
    for (int i = 0; i < n; ++i) {
        double t = static_cast<double>(i) / sps - mid;
        double v;
        double den = 1.0 - 16.0 * alpha * alpha * t * t;
        if (std::abs(t) < 1e-10) {
            v = 1.0 + alpha * (4.0 / M_PI - 1.0);
        } else if (std::abs(den) < 1e-8) {
            double arg = M_PI / (4.0 * alpha);
            v = alpha / std::sqrt(2.0) *
                ((1.0 + 2.0 / M_PI) * std::sin(arg) + (1.0 - 2.0 / M_PI) * std::cos(arg));
        } else {
            v = (std::sin(M_PI * t * (1.0 - alpha)) +
                 4.0 * alpha * t * std::cos(M_PI * t * (1.0 + alpha))) /
                (M_PI * t * den);
        }
        h[static_cast<std::size_t>(i)] = v;
    }
    // unit energy
    double e = 0.0;
    for (double v : h) e += v * v;
    double s = 1.0 / std::sqrt(e);
    for (double& v : h) v *= s;
    return h;
}

// Gaussian frequency pulse used by GFSK, convolved with a one-symbol
// rectangular hold; normalized to unit area (one symbol of +1 integrates to 1).
inline std::vector<double> gaussian_taps(int sps, double bt, int span_symbols) {
    if (sps < 1 || bt <= 0.0 || span_symbols < 1)
        throw ConfigError("gaussian_taps: invalid sps/bt/span");
    const int n = span_symbols * sps + 1;
    std::vector<double> g(static_cast<std::size_t>(n));
    // std of the Gaussian in samples, from the 3 dB bandwidth-time product
    const double sigma = std::sqrt(std::log(2.0)) / (2.0 * M_PI * bt) * sps;
    const double mid = (n - 1) / 2.0;
    for (int i = 0; i < n; ++i) {
        double t = (static_cast<double>(i) - mid) / sigma;
        g[static_cast<std::size_t>(i)] = std::exp(-0.5 * t * t);
    }
    double area = 0.0;
    for (double v : g) area += v;
    for (double& v : g) v /= area;
    return g;
}

// y[n] = sum_k h[k] x[n-k]; output length x.size() + h.size() - 1
inline std::vector<cplx> convolve_full(const std::vector<cplx>& x,
                                       const std::vector<double>& h) {
    std::vector<cplx> y(x.size() + h.size() - 1, cplx(0.0, 0.0));
    for (std::size_t k = 0; k < h.size(); ++k) {
        const double hv = h[k];
        if (hv == 0.0) continue;
        for (std::size_t n = 0; n < x.size(); ++n) y[n + k] += hv * x[n];
    }
    return y;
}

inline std::vector<double> convolve_full(const std::vector<double>& x,
                                         const std::vector<double>& h) {
    std::vector<double> y(x.size() + h.size() - 1, 0.0);
    for (std::size_t k = 0; k < h.size(); ++k)
        for (std::size_t n = 0; n < x.size(); ++n) y[n + k] += h[k] * x[n];
    return y;
}

// Causal complex FIR: y[n] = sum_k h[k] x[n-k], same length as x.
inline std::vector<cplx> fir_causal(const std::vector<cplx>& x,
                                    const std::vector<cplx>& h) {
    std::vector<cplx> y(x.size(), cplx(0.0, 0.0));
    for (std::size_t k = 0; k < h.size(); ++k) {
        if (h[k] == cplx(0.0, 0.0)) continue;
        for (std::size_t n = k; n < x.size(); ++n) y[n] += h[k] * x[n - k];
    }
    return y;
}

// Odd-length type-III Hilbert transformer (Hamming window); used for SSB.
inline std::vector<double> hilbert_fir(int n_taps) {
    if (n_taps < 3 || n_taps % 2 == 0)
        throw ConfigError("hilbert_fir: taps must be odd and >= 3");
    std::vector<double> h(static_cast<std::size_t>(n_taps), 0.0);
    const int mid = n_taps / 2;
    for (int i = 0; i < n_taps; ++i) {
        int k = i - mid;
        if (k % 2 != 0) {
            double w = 0.54 - 0.46 * std::cos(2.0 * M_PI * i / (n_taps - 1));
            h[static_cast<std::size_t>(i)] = 2.0 / (M_PI * k) * w;
        }
    }
    return h;
}

// Windowed-sinc low-pass, cutoff in cycles/sample, odd length.
inline std::vector<double> lowpass_taps(double cutoff, int n_taps) {
    if (cutoff <= 0.0 || cutoff >= 0.5 || n_taps < 3 || n_taps % 2 == 0)
        throw ConfigError("lowpass_taps: invalid cutoff/taps");
    std::vector<double> h(static_cast<std::size_t>(n_taps));
    const int mid = n_taps / 2;
    double sum = 0.0;
    for (int i = 0; i < n_taps; ++i) {
        int k = i - mid;
        double v = k == 0 ? 2.0 * cutoff
                          : std::sin(2.0 * M_PI * cutoff * k) / (M_PI * k);
        double w = 0.54 - 0.46 * std::cos(2.0 * M_PI * i / (n_taps - 1));
        h[static_cast<std::size_t>(i)] = v * w;
        sum += h[static_cast<std::size_t>(i)];
    }
    for (double& v : h) v /= sum;  // unit DC gain
    return h;
}

// Fractional resampling by `rate` via Blackman-windowed sinc interpolation;
// output[n] = x(n * rate), truncated/zero-padded to the input length.
inline std::vector<cplx> resample_sinc(const std::vector<cplx>& x, double rate,
                                       int half_width = 16) {
    if (rate <= 0.0) throw ConfigError("resample_sinc: rate must be positive");
    const int n = static_cast<int>(x.size());
    std::vector<cplx> y(x.size(), cplx(0.0, 0.0));
    const double k_inv = 1.0 / static_cast<double>(half_width);
    for (int i = 0; i < n; ++i) {
        const double t = i * rate;
        const int lo = static_cast<int>(std::ceil(t)) - half_width;
        const int hi = static_cast<int>(std::floor(t)) + half_width;
        cplx acc(0.0, 0.0);
        for (int k = std::max(0, lo); k <= std::min(n - 1, hi); ++k) {
            const double d = t - k;
            double sinc = d == 0.0 ? 1.0 : std::sin(M_PI * d) / (M_PI * d);
            const double u = d * k_inv;  // in [-1, 1]
            const double w = 0.42 + 0.5 * std::cos(M_PI * u) + 0.08 * std::cos(2.0 * M_PI * u);
            acc += x[static_cast<std::size_t>(k)] * (sinc * w);
        }
        y[static_cast<std::size_t>(i)] = acc;
    }
    return y;
}

}  // namespace modnet
