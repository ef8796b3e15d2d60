#include <gtest/gtest.h>

#include "modnet/channel.hpp"
#include "modnet/fft.hpp"
#include "modnet/modulate.hpp"

using namespace modnet;

namespace {

std::vector<cplx> unit_tone(int n, double freq) {
    std::vector<cplx> x(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        double ang = 2.0 * M_PI * freq * i;
        x[static_cast<std::size_t>(i)] = cplx(std::cos(ang), std::sin(ang));
    }
    return x;
}

}  // namespace

TEST(Fading, SingleTapIsUnitModulusRotation) {
    Rng payload(1), chan(2);
    auto x = modulate(ModClass::Qpsk, payload, 1024, 8);
    auto y = apply_fading(x, {{0, 0.0}}, chan);
    ASSERT_EQ(y.size(), x.size());
    cplx ratio = y[10] / x[10];
    EXPECT_NEAR(std::abs(ratio), 1.0, 1e-6);
    for (std::size_t i = 0; i < x.size(); ++i) {
        if (std::abs(x[i]) < 1e-6) continue;
        cplx r = y[i] / x[i];
        EXPECT_NEAR(r.real(), ratio.real(), 1e-9);
        EXPECT_NEAR(r.imag(), ratio.imag(), 1e-9);
    }
}

TEST(Fading, OutputPowerRenormalizedToOne) {
    Rng payload(3), chan(4);
    auto x = modulate(ModClass::Qam16, payload, 2048, 8);
    for (int trial = 0; trial < 5; ++trial) {
        auto y = apply_fading(x, {{0, 0.0}, {1, -2.0}, {3, -10.0}}, chan);
        EXPECT_NEAR(mean_power(y), 1.0, 1e-6);
    }
}

TEST(Fading, TwoTapProfileCreatesSpectralRipple) {
    // white input; averaged periodogram of the output should show > 3 dB
    // max/min power ripple for most channel draws
    const int seeds = 60;
    int rippled = 0;
    for (int seed = 0; seed < seeds; ++seed) {
        Rng noise_rng(1000 + static_cast<std::uint64_t>(seed));
        std::vector<cplx> x(4096);
        for (auto& v : x)
            v = cplx(noise_rng.normal() / std::sqrt(2.0), noise_rng.normal() / std::sqrt(2.0));
        Rng chan(2000 + static_cast<std::uint64_t>(seed));
        auto y = apply_fading(x, {{0, 0.0}, {2, -2.0}}, chan);
        std::vector<double> psd(128, 0.0);
        for (int w = 0; w + 128 <= 4096; w += 128) {
            std::vector<cplx> win(y.begin() + w, y.begin() + w + 128);
            auto spec = fft128(win);
            for (int k = 0; k < 128; ++k)
                psd[static_cast<std::size_t>(k)] += std::norm(spec[static_cast<std::size_t>(k)]);
        }
        double mx = 0.0, mn = 1e300;
        for (double v : psd) {
            mx = std::max(mx, v);
            mn = std::min(mn, v);
        }
        if (mx / mn > 2.0) ++rippled;  // 3 dB in power
    }
    EXPECT_GT(static_cast<double>(rippled) / seeds, 0.9);
}

TEST(Fading, InvalidProfileRejected) {
    Rng rng(5);
    std::vector<cplx> x(64, cplx(1.0, 0.0));
    EXPECT_THROW(apply_fading(x, {}, rng), ConfigError);
    EXPECT_THROW(apply_fading(x, {{1, 0.0}}, rng), ConfigError);
    EXPECT_THROW(apply_fading(x, {{0, 1.0}}, rng), ConfigError);
}

TEST(Cfo, ZeroOffsetIsIdentity) {
    auto x = unit_tone(512, 0.03);
    auto y = apply_cfo(x, 0.0);
    for (std::size_t i = 0; i < x.size(); ++i) EXPECT_LT(std::abs(y[i] - x[i]), 1e-12);
}

TEST(Cfo, MagnitudePreserving) {
    Rng rng(6);
    std::vector<cplx> x(512);
    for (auto& v : x) v = cplx(rng.normal(), rng.normal());
    auto y = apply_cfo(x, 0.0123);
    for (std::size_t i = 0; i < x.size(); ++i)
        EXPECT_NEAR(std::abs(y[i]), std::abs(x[i]), 1e-9);
}

TEST(Cfo, OneBinShiftOnPureTone) {
    auto x = unit_tone(128, 5.0 / 128.0);
    auto y = apply_cfo(x, 1.0 / 128.0);
    auto spec = fft128(y);
    int peak = 0;
    for (int k = 1; k < 128; ++k)
        if (std::abs(spec[static_cast<std::size_t>(k)]) >
            std::abs(spec[static_cast<std::size_t>(peak)]))
            peak = k;
    EXPECT_EQ(peak, 6);
    EXPECT_NEAR(std::abs(spec[6]), 128.0, 1e-6);
}

TEST(Sro, ZeroPpmIsIdentity) {
    Rng payload(7);
    auto x = modulate(ModClass::Qpsk, payload, 1024, 8);
    auto y = apply_sro(x, 0.0);
    double rms = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) rms += std::norm(y[i] - x[i]);
    EXPECT_LT(std::sqrt(rms / static_cast<double>(x.size())), 1e-9);
}

TEST(Sro, RoundTripRecoversBandLimitedSignal) {
    // band-limited pulse-shaped signal, tapered so edge effects vanish
    Rng payload(8);
    auto x = modulate(ModClass::Qpsk, payload, 2048, 8);
    for (std::size_t i = 0; i < 64; ++i) {
        double w = static_cast<double>(i) / 64.0;
        x[i] *= w;
        x[x.size() - 1 - i] *= w;
    }
    auto fwd = apply_sro(x, 50.0);
    auto back = apply_sro(fwd, -50.0);
    double rms = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) rms += std::norm(back[i] - x[i]);
    rms = std::sqrt(rms / static_cast<double>(x.size()));
    EXPECT_LT(rms, 1e-3);
}

TEST(Sro, EnergyPreservedWithinOnePercent) {
    Rng payload(9);
    auto x = modulate(ModClass::Qam16, payload, 4096, 8);
    auto y = apply_sro(x, 50.0);
    // ignore the trailing edge the resampler cannot fill
    double ex = 0.0, ey = 0.0;
    for (std::size_t i = 32; i < x.size() - 32; ++i) {
        ex += std::norm(x[i]);
        ey += std::norm(y[i]);
    }
    EXPECT_NEAR(ey / ex, 1.0, 0.01);
}

TEST(Awgn, ZeroDbNoisePowerMatchesSignalPower) {
    Rng payload(10), noise(11);
    auto x = modulate(ModClass::Cpfsk, payload, 10000, 8);
    auto y = add_awgn(x, 0.0, noise);
    double pn = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) pn += std::norm(y[i] - x[i]);
    pn /= static_cast<double>(x.size());
    double err_db = std::abs(10.0 * std::log10(pn / mean_power(x)));
    EXPECT_LT(err_db, 0.5);
}

TEST(Awgn, HighSnrIsNearIdentity) {
    Rng payload(12), noise(13);
    auto x = modulate(ModClass::Bpsk, payload, 4096, 8);
    auto y = add_awgn(x, 60.0, noise);
    double diff = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) diff += std::norm(y[i] - x[i]);
    diff = std::sqrt(diff / static_cast<double>(x.size()));
    EXPECT_LT(diff, 0.002);  // RMS < 0.2% of unit power
}

TEST(Awgn, IqNoiseComponentsUncorrelated) {
    Rng noise(14);
    std::vector<cplx> zero(10000, cplx(0.0, 0.0));
    auto n = add_awgn(zero, 0.0, noise);
    double sii = 0.0, sqq = 0.0, siq = 0.0;
    for (const auto& v : n) {
        sii += v.real() * v.real();
        sqq += v.imag() * v.imag();
        siq += v.real() * v.imag();
    }
    double rho = siq / std::sqrt(sii * sqq);
    EXPECT_LT(std::abs(rho), 0.05);
}

TEST(MeasureSnr, TracksLabelWithinHalfDb) {
    Rng payload(15), noise(16);
    for (double label : {0.0, 10.0}) {
        auto x = modulate(ModClass::Qpsk, payload, 128 * 64, 8);
        auto y = add_awgn(x, label, noise);
        EXPECT_NEAR(measure_snr(x, y), label, 0.5) << "label " << label;
    }
}

TEST(MeasureSnr, NoiselessPathReportsAbove60Db) {
    Rng payload(17);
    auto x = modulate(ModClass::Qpsk, payload, 1024, 8);
    EXPECT_GT(measure_snr(x, x), 60.0);
}

TEST(MeasureSnr, MonotoneAcrossGrid) {
    Rng payload(18);
    auto x = modulate(ModClass::Qam16, payload, 128 * 64, 8);
    double prev = -1e9;
    for (double label = -20.0; label <= 18.0; label += 4.0) {
        Rng noise(19);
        auto y = add_awgn(x, label, noise);
        double est = measure_snr(x, y);
        EXPECT_GT(est, prev);
        prev = est;
    }
}
