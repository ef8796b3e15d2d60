#pragma once

#include <complex>
#include <vector>

#include "modnet/common.hpp"

namespace modnet {

using cplx = std::complex<double>;

// Iterative radix-2 FFT, negative-exponent forward convention.
// Length must be a power of two.
inline void fft_pow2(std::vector<cplx>& a, bool inverse = false) {
    const std::size_t n = a.size();
    if (n == 0 || (n & (n - 1)) != 0)
        throw ShapeError("fft length must be a power of two, got " + std::to_string(n));

    // bit-reversal permutation
    for (std::size_t i = 1, j = 0; i < n; ++i) {
        std::size_t bit = n >> 1;
        for (; j & bit; bit >>= 1) j ^= bit;
        j ^= bit;
        if (i < j) std::swap(a[i], a[j]);
    }

    for (std::size_t len = 2; len <= n; len <<= 1) {
        const double ang = (inverse ? 2.0 : -2.0) * M_PI / static_cast<double>(len);
        const cplx wlen(std::cos(ang), std::sin(ang));
        for (std::size_t i = 0; i < n; i += len) {
            cplx w(1.0, 0.0);
            for (std::size_t k = 0; k < len / 2; ++k) {
                cplx u = a[i + k];
                cplx v = a[i + k + len / 2] * w;
                a[i + k] = u + v;
                a[i + k + len / 2] = u - v;
                w *= wlen;
            }
        }
    }
    if (inverse) {
        const double inv = 1.0 / static_cast<double>(n);
        for (auto& v : a) v *= inv;
    }
}

inline constexpr int kFftSize = 128;

inline std::vector<cplx> fft128(const std::vector<cplx>& x) {
    if (x.size() != static_cast<std::size_t>(kFftSize))
        throw ShapeError("fft128 requires exactly 128 samples, got " +
                         std::to_string(x.size()));
    std::vector<cplx> out = x;
    fft_pow2(out, false);
    return out;
}

inline std::vector<cplx> ifft128(const std::vector<cplx>& x) {
    if (x.size() != static_cast<std::size_t>(kFftSize))
        throw ShapeError("ifft128 requires exactly 128 samples, got " +
                         std::to_string(x.size()));
    std::vector<cplx> out = x;
    fft_pow2(out, true);
    return out;
}

}  // namespace modnet
