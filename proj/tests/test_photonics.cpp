#include "qsdc/photonics.hpp"

#include <gtest/gtest.h>

#include <array>
#include <cmath>
#include <numeric>
#include <vector>

using namespace qsdc;
using namespace qsdc::photonics;

namespace {

// Bell-basis populations from explicit kets in (ss, sl, ls, ll) order.
std::array<double, 4> oracle_populations(const TwoQubitState& rho) {
    const double r = 1.0 / std::sqrt(2.0);
    const std::array<std::array<double, 4>, 4> kets{{
        {r, 0, 0, r},    // phi+
        {r, 0, 0, -r},   // phi-
        {0, r, r, 0},    // psi+
        {0, -r, r, 0},   // psi-
    }};
    std::array<double, 4> out{};
    for (std::size_t b = 0; b < 4; ++b) {
        Complex acc = 0.0;
        for (int i = 0; i < 4; ++i)
            for (int j = 0; j < 4; ++j) acc += kets[b][i] * rho(i, j) * kets[b][j];
        out[b] = acc.real();
    }
    return out;
}

}  // namespace

TEST(Fiber, Transmittance) {
    EXPECT_DOUBLE_EQ(transmittance({0.0, 0.2}), 1.0);
    EXPECT_NEAR(transmittance({40.0, 0.2}), std::pow(10.0, -0.8), 1e-15);
    EXPECT_NEAR(transmittance({50.0, 0.2}), 0.1, 1e-15);
    EXPECT_THROW(transmittance({-1.0, 0.2}), DomainError);
}

TEST(Fiber, SurvivalFrequency) {
    Rng rng(5);
    const double p = transmittance({25.0, 0.2});
    int hits = 0;
    constexpr int n = 200000;
    for (int i = 0; i < n; ++i) hits += survive(rng, p) ? 1 : 0;
    const double se = std::sqrt(p * (1 - p) / n);
    EXPECT_NEAR(hits / static_cast<double>(n), p, 4 * se);
    EXPECT_TRUE(survive(rng, 1.0));
    EXPECT_FALSE(survive(rng, 0.0));
    EXPECT_THROW(survive(rng, 1.5), DomainError);
}

TEST(Rng, SameSeedSameStream) {
    Rng a(42), b(42), c(43);
    bool differs = false;
    for (int i = 0; i < 100; ++i) {
        const auto x = a.next();
        EXPECT_EQ(x, b.next());
        differs |= x != c.next();
    }
    EXPECT_TRUE(differs);
    for (int i = 0; i < 1000; ++i) {
        const double u = a.uniform();
        EXPECT_GE(u, 0.0);
        EXPECT_LT(u, 1.0);
    }
}

TEST(Specs, Validation) {
    EXPECT_THROW((DetectorSpec{1.2, 0.0, 1e-9}).validate(), DomainError);
    EXPECT_THROW((SfgSpec{-0.1, 1e5}).validate(), DomainError);
    EXPECT_THROW((ModulatorSpec{0.0, 0.0}).validate(), DomainError);
    EXPECT_THROW((SourceSpec{1e6, {0.0, 2.0, 0.0}}).validate(), DomainError);
    EXPECT_NO_THROW(SourceSpec{}.validate());
}

TEST(SfgBsm, PureBellStatesAreIdentifiedExactly) {
    Rng rng(1);
    for (BellLabel l : kBellLabels) {
        const auto state = bell_state(l);
        for (int i = 0; i < 1000; ++i) {
            const auto out = sfg_bsm(state, SfgSpec{1.0, 1e5}, rng);
            ASSERT_TRUE(out.has_value());
            EXPECT_EQ(*out, l);
        }
    }
}

TEST(SfgBsm, ConversionEfficiencyGivesErasures) {
    Rng rng(2);
    const auto state = bell_state(BellLabel::PsiPlus);
    for (int i = 0; i < 100; ++i) EXPECT_FALSE(sfg_bsm(state, SfgSpec{0.0, 1e5}, rng).has_value());
    int erased = 0;
    constexpr int n = 100000;
    for (int i = 0; i < n; ++i) erased += sfg_bsm(state, SfgSpec{0.3, 1e5}, rng).has_value() ? 0 : 1;
    EXPECT_NEAR(erased / static_cast<double>(n), 0.7, 4 * std::sqrt(0.21 / n));
}

TEST(SfgBsm, WernerFrequenciesMatchPopulations) {
    Rng rng(3);
    constexpr int n = 100000;
    for (double p : {0.1, 0.5, 0.9}) {
        for (BellLabel l : kBellLabels) {
            const auto rho = apply_noise(werner_state(l, p), {0.0, 0.1, 0.3});
            const auto expected = oracle_populations(rho);
            const auto lib = bell_diagonal(rho);
            std::array<int, 4> counts{};
            const BellSampler sampler(rho);
            for (int i = 0; i < n; ++i) ++counts[static_cast<std::size_t>(*sfg_bsm(sampler, SfgSpec{}, rng))];
            for (std::size_t k = 0; k < 4; ++k) {
                EXPECT_NEAR(lib[k], expected[k], 1e-12);
                const double se = std::sqrt(expected[k] * (1 - expected[k]) / n);
                EXPECT_NEAR(counts[k] / static_cast<double>(n), expected[k], 3 * se + 1e-12);
            }
        }
    }
}

TEST(SfgBsm, RejectsBadDistribution) {
    EXPECT_THROW(BellSampler(std::array<double, 4>{0.5, 0.5, 0.5, 0.0}), InvariantViolation);
    EXPECT_THROW(BellSampler(std::array<double, 4>{-0.1, 0.5, 0.6, 0.0}), DomainError);
}

TEST(Modulation, LevelsAndDarkCounts) {
    const ModulatorSpec mod{1e3, 0.01};
    const DetectorSpec det{0.5, 100.0, 1e-9};
    EXPECT_DOUBLE_EQ(detection_rate(false, mod, 0.2, det, 1e5), 1e5 * 0.2 * 0.5 + 100.0);
    EXPECT_DOUBLE_EQ(detection_rate(true, mod, 0.2, det, 1e5), 1e5 * 0.2 * 0.5 * 0.01 + 100.0);

    Rng rng(9);
    const double dwell = 0.01;
    double high = 0.0, low = 0.0;
    constexpr int n = 2000;
    for (int i = 0; i < n; ++i) {
        high += static_cast<double>(modulate_and_detect(false, mod, 0.2, det, dwell, 1e5, rng));
        low += static_cast<double>(modulate_and_detect(true, mod, 0.2, det, dwell, 1e5, rng));
    }
    const double mh = dwell * detection_rate(false, mod, 0.2, det, 1e5);
    const double ml = dwell * detection_rate(true, mod, 0.2, det, 1e5);
    EXPECT_NEAR(high / n, mh, 4 * std::sqrt(mh / n));
    EXPECT_NEAR(low / n, ml, 4 * std::sqrt(ml / n));
    EXPECT_THROW(modulate_and_detect(false, mod, 0.2, det, 0.0, 1e5, rng), DomainError);
}

TEST(Modulation, WaveformBinsAndMixing) {
    const ModulatorSpec mod{1e3, 0.0};
    const DetectorSpec det{1.0, 0.0, 1e-9};
    std::vector<bool> bits{false, true, false, true};
    Rng rng(4);
    const auto fine = security_waveform(bits, mod, 1.0, det, 1e7, 1e-3, rng);
    ASSERT_EQ(fine.size(), 4u);
    EXPECT_EQ(fine[1], 0u);
    EXPECT_EQ(fine[3], 0u);
    EXPECT_GT(fine[0], 9000u);

    // 2 ms bins each average one high and one low bit
    double sum = 0.0;
    constexpr int reps = 200;
    for (int r = 0; r < reps; ++r) {
        const auto coarse = security_waveform(bits, mod, 1.0, det, 1e5, 2e-3, rng);
        ASSERT_EQ(coarse.size(), 2u);
        sum += static_cast<double>(coarse[0] + coarse[1]);
    }
    const double mean = 2 * 100.0;  // two high bits of 1 ms at 1e5/s
    EXPECT_NEAR(sum / reps, mean, 4 * std::sqrt(mean / reps));
}

TEST(Accidentals, ProductFormula) {
    EXPECT_DOUBLE_EQ(accidental_rate(1e4, 2e4, 1e-9), 0.2);
    EXPECT_THROW(accidental_rate(-1.0, 1.0, 1.0), DomainError);
}
