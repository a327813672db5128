#pragma once

// Device and channel models: fiber loss, detection, polarization modulation,
// SFG Bell-state measurement and accidental coincidences.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "qsdc/errors.hpp"
#include "qsdc/qstate.hpp"

namespace qsdc::photonics {

// Seeded generator owned by one session.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    // Uniform on [0, 1) from the top 53 bits.
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    bool bernoulli(double p) { return uniform() < p; }

    std::uint64_t poisson(double mean) {
        if (!(mean > 0.0)) return 0;
        std::poisson_distribution<std::uint64_t> dist(mean);
        return dist(engine_);
    }

    std::uint64_t binomial(std::uint64_t trials, double p) {
        if (trials == 0 || !(p > 0.0)) return 0;
        if (p >= 1.0) return trials;
        std::binomial_distribution<std::uint64_t> dist(trials, p);
        return dist(engine_);
    }

    std::uint64_t next() { return engine_(); }

private:
    std::mt19937_64 engine_;
};

inline void require_probability(double p, const char* what) {
    if (!std::isfinite(p) || p < 0.0 || p > 1.0) throw DomainError(std::string(what) + " must lie in [0,1]");
}

inline void require_nonnegative(double x, const char* what) {
    if (!std::isfinite(x) || x < 0.0) throw DomainError(std::string(what) + " must be finite and >= 0");
}

struct FiberSpec {
    double length_km = 0.0;
    double attenuation_db_per_km = 0.2;

    void validate() const {
        require_nonnegative(length_km, "fiber length");
        require_nonnegative(attenuation_db_per_km, "fiber attenuation");
    }
    bool operator==(const FiberSpec&) const = default;
};

struct DetectorSpec {
    double efficiency = 1.0;
    double dark_count_rate_hz = 0.0;
    double coincidence_window_s = 300e-12;

    void validate() const {
        require_probability(efficiency, "detector efficiency");
        require_nonnegative(dark_count_rate_hz, "dark count rate");
        require_nonnegative(coincidence_window_s, "coincidence window");
    }
    bool operator==(const DetectorSpec&) const = default;
};

struct SfgSpec {
    double conversion_efficiency = 1.0;
    double max_rate_hz = 1e5;

    void validate() const {
        require_probability(conversion_efficiency, "SFG conversion efficiency");
        require_nonnegative(max_rate_hz, "SFG max rate");
    }
    bool operator==(const SfgSpec&) const = default;
};

struct ModulatorSpec {
    double rate_hz = 1e3;
    double extinction_error = 0.0;

    void validate() const {
        if (!std::isfinite(rate_hz) || rate_hz <= 0.0) throw DomainError("modulator rate must be > 0");
        require_probability(extinction_error, "modulator extinction error");
    }
    bool operator==(const ModulatorSpec&) const = default;
};

struct SourceSpec {
    double pair_rate_hz = 1e6;
    NoiseParams heralding_noise;

    void validate() const {
        require_nonnegative(pair_rate_hz, "pair rate");
        heralding_noise.validate();
    }
    bool operator==(const SourceSpec&) const = default;
};

inline double transmittance(const FiberSpec& fiber) {
    fiber.validate();
    return std::pow(10.0, -fiber.attenuation_db_per_km * fiber.length_km / 10.0);
}

inline bool survive(Rng& rng, double probability) {
    require_probability(probability, "survival probability");
    if (probability >= 1.0) return true;
    if (probability <= 0.0) return false;
    return rng.bernoulli(probability);
}

// Samples a Bell label from a fixed Bell-basis distribution.
class BellSampler {
public:
    explicit BellSampler(const std::array<double, 4>& probabilities) : probs_(probabilities) {
        double acc = 0.0;
        for (std::size_t i = 0; i < 4; ++i) {
            require_probability(probabilities[i], "Bell outcome probability");
            acc += probabilities[i];
            cumulative_[i] = acc;
        }
        if (std::abs(acc - 1.0) > 1e-9) throw InvariantViolation("Bell outcome probabilities do not sum to 1");
        cumulative_[3] = 1.0;
    }

    explicit BellSampler(const TwoQubitState& state) : BellSampler(bell_diagonal(state)) {}

    BellLabel sample(Rng& rng) const {
        const double u = rng.uniform();
        for (std::size_t i = 0; i < 3; ++i) {
            if (u < cumulative_[i]) return kBellLabels[i];
        }
        return kBellLabels[3];
    }

    const std::array<double, 4>& probabilities() const { return probs_; }

private:
    std::array<double, 4> probs_{};
    std::array<double, 4> cumulative_{};
};

// Identified(label) when engaged, NoConversion (erasure) otherwise.
using SfgOutcome = std::optional<BellLabel>;

inline SfgOutcome sfg_bsm(const BellSampler& sampler, const SfgSpec& spec, Rng& rng) {
    if (!survive(rng, spec.conversion_efficiency)) return std::nullopt;
    return sampler.sample(rng);
}

// Complete Bell-basis projection gated by the conversion efficiency. All four
// labels are reachable outcomes.
inline SfgOutcome sfg_bsm(const TwoQubitState& state, const SfgSpec& spec, Rng& rng) {
    TwoQubitState::check(state.matrix());
    return sfg_bsm(BellSampler(state), spec, rng);
}

// Mean click rate while holding `bit`: 0 is the high level, 1 the low level.
inline double detection_rate(bool bit, const ModulatorSpec& mod, double channel_eta, const DetectorSpec& det,
                             double photon_rate_hz) {
    const double level = bit ? mod.extinction_error : 1.0;
    return photon_rate_hz * channel_eta * det.efficiency * level + det.dark_count_rate_hz;
}

inline std::uint64_t modulate_and_detect(bool bit, const ModulatorSpec& mod, double channel_eta,
                                         const DetectorSpec& det, double dwell_s, double photon_rate_hz, Rng& rng) {
    if (!(dwell_s > 0.0)) throw DomainError("dwell time must be > 0");
    require_probability(channel_eta, "channel transmittance");
    return rng.poisson(dwell_s * detection_rate(bit, mod, channel_eta, det, photon_rate_hz));
}

// Click counts for a bit sequence held 1/mod.rate_hz each, accumulated into
// bins of `accumulation_s`. Bins wider than a bit mix adjacent levels.
inline std::vector<std::uint64_t> security_waveform(const std::vector<bool>& bits, const ModulatorSpec& mod,
                                                    double channel_eta, const DetectorSpec& det,
                                                    double photon_rate_hz, double accumulation_s, Rng& rng) {
    if (!(accumulation_s > 0.0)) throw DomainError("accumulation time must be > 0");
    const double bit_s = 1.0 / mod.rate_hz;
    const double total_s = bit_s * static_cast<double>(bits.size());
    const auto bins = static_cast<std::size_t>(std::ceil(total_s / accumulation_s - 1e-9));
    std::vector<std::uint64_t> out;
    out.reserve(bins);
    for (std::size_t b = 0; b < bins; ++b) {
        const double t0 = accumulation_s * static_cast<double>(b);
        const double t1 = std::min(total_s, t0 + accumulation_s);
        const auto first = static_cast<std::size_t>(std::floor(t0 / bit_s));
        double expected = 0.0;
        for (std::size_t i = first; i < bits.size(); ++i) {
            const double b0 = bit_s * static_cast<double>(i);
            if (b0 >= t1) break;
            const double overlap = std::min(t1, b0 + bit_s) - std::max(t0, b0);
            if (overlap > 0.0) expected += overlap * detection_rate(bits[i], mod, channel_eta, det, photon_rate_hz);
        }
        out.push_back(rng.poisson(expected));
    }
    return out;
}

inline double accidental_rate(double singles_1_hz, double singles_2_hz, double window_s) {
    require_nonnegative(singles_1_hz, "singles rate");
    require_nonnegative(singles_2_hz, "singles rate");
    require_nonnegative(window_s, "coincidence window");
    return singles_1_hz * singles_2_hz * window_s;
}

}  // namespace qsdc::photonics
