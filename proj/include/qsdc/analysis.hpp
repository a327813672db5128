#pragma once

// QBER estimation, binary entropy, the wiretap secrecy-capacity lower bound,
// fidelity-from-visibility and throughput accounting.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>

#include <boost/math/special_functions/beta.hpp>

#include "qsdc/errors.hpp"

namespace qsdc::analysis {

inline void check_unit(double x, const char* what) {
    if (!std::isfinite(x) || x < 0.0 || x > 1.0) throw DomainError(std::string(what) + " must lie in [0,1]");
}

// H(e) in bits with H(0) = H(1) = 0.
inline double binary_entropy(double e) {
    check_unit(e, "binary entropy argument");
    if (e == 0.0 || e == 1.0) return 0.0;
    return -e * std::log2(e) - (1.0 - e) * std::log2(1.0 - e);
}

struct Interval {
    double low = 0.0;
    double high = 1.0;
};

// Exact (Clopper-Pearson) two-sided interval for k successes in n trials.
inline Interval clopper_pearson(std::uint64_t k, std::uint64_t n, double confidence = 0.95) {
    if (n == 0) throw InsufficientData("Clopper-Pearson interval needs at least one trial");
    if (k > n) throw DomainError("successes exceed trials");
    const double alpha = 1.0 - confidence;
    const auto kd = static_cast<double>(k);
    const auto nd = static_cast<double>(n);
    Interval out;
    out.low = k == 0 ? 0.0 : boost::math::ibeta_inv(kd, nd - kd + 1.0, alpha / 2.0);
    out.high = k == n ? 1.0 : boost::math::ibeta_inv(kd + 1.0, nd - kd, 1.0 - alpha / 2.0);
    return out;
}

struct QberEstimate {
    double e = 0.0;
    double e_x = 0.0;
    double e_z = 0.0;
    std::uint64_t n_x = 0;
    std::uint64_t n_z = 0;
    std::uint64_t errors_x = 0;
    std::uint64_t errors_z = 0;
    double ci_low = 0.0;
    double ci_high = 1.0;
};

struct BasisCounts {
    std::uint64_t n_x = 0;
    std::uint64_t errors_x = 0;
    std::uint64_t n_z = 0;
    std::uint64_t errors_z = 0;

    BasisCounts& operator+=(const BasisCounts& o) {
        n_x += o.n_x;
        errors_x += o.errors_x;
        n_z += o.n_z;
        errors_z += o.errors_z;
        return *this;
    }
};

inline QberEstimate qber_from_counts(const BasisCounts& c) {
    const std::uint64_t n = c.n_x + c.n_z;
    if (n == 0) throw InsufficientData("no matched-basis detection records");
    if (c.errors_x > c.n_x || c.errors_z > c.n_z) throw DomainError("error count exceeds sample count");
    QberEstimate q;
    q.n_x = c.n_x;
    q.n_z = c.n_z;
    q.errors_x = c.errors_x;
    q.errors_z = c.errors_z;
    q.e_x = c.n_x ? static_cast<double>(c.errors_x) / static_cast<double>(c.n_x) : 0.0;
    q.e_z = c.n_z ? static_cast<double>(c.errors_z) / static_cast<double>(c.n_z) : 0.0;
    const std::uint64_t errors = c.errors_x + c.errors_z;
    q.e = static_cast<double>(errors) / static_cast<double>(n);
    const auto ci = clopper_pearson(errors, n);
    q.ci_low = std::min(ci.low, q.e);
    q.ci_high = std::max(ci.high, q.e);
    return q;
}

// Any record type exposing basis_is_x(), alice_outcome, bob_outcome and
// published. Unpublished records are ignored.
template <typename Record>
QberEstimate qber_from_transcript(std::span<const Record> records) {
    BasisCounts c;
    for (const auto& r : records) {
        if (!r.published) continue;
        const bool error = r.alice_outcome != r.bob_outcome;
        if (r.basis_is_x()) {
            ++c.n_x;
            c.errors_x += error ? 1 : 0;
        } else {
            ++c.n_z;
            c.errors_z += error ? 1 : 0;
        }
    }
    return qber_from_counts(c);
}

struct SecrecyReport {
    double q_b = 0.0;
    double q_e = 0.0;
    double e = 0.0;
    double e_x = 0.0;
    double e_z = 0.0;
    double h_e = 0.0;
    double h_exez = 0.0;
    double cs_lower = 0.0;
    bool exez_clamped = false;  // e_x + e_z exceeded 1 and was clamped
};

// C_s >= Q^B [1 - H(e)] - Q^E H(e_x + e_z). Negative bounds are reported as-is.
inline SecrecyReport secrecy_capacity_bound(double q_b, double q_e, double e, double e_x, double e_z) {
    check_unit(q_b, "Q^B");
    check_unit(q_e, "Q^E");
    check_unit(e, "e");
    check_unit(e_x, "e_x");
    check_unit(e_z, "e_z");
    SecrecyReport r;
    r.q_b = q_b;
    r.q_e = q_e;
    r.e = e;
    r.e_x = e_x;
    r.e_z = e_z;
    double arg = e_x + e_z;
    if (arg > 1.0) {
        arg = 1.0;
        r.exez_clamped = true;
    }
    r.h_e = binary_entropy(e);
    r.h_exez = binary_entropy(arg);
    r.cs_lower = q_b * (1.0 - r.h_e) - q_e * r.h_exez;
    return r;
}

enum class NoiseAssumption : std::uint8_t { Isotropic, PhaseOnly };

constexpr const char* to_string(NoiseAssumption a) {
    return a == NoiseAssumption::Isotropic ? "isotropic" : "phase_only";
}

struct FidelityEstimate {
    double fidelity = 0.0;
    NoiseAssumption assumption = NoiseAssumption::Isotropic;
};

// Werner: F = (1 + 3V)/4.  Pure dephasing: F = (1 + V)/2.
inline FidelityEstimate fidelity_from_visibility(double v, NoiseAssumption assumption) {
    check_unit(v, "visibility");
    const double f = assumption == NoiseAssumption::Isotropic ? (1.0 + 3.0 * v) / 4.0 : (1.0 + v) / 2.0;
    return {f, assumption};
}

struct ThroughputReport {
    double symbol_rate = 0.0;  // symbols/s
    double erasure_fraction = 0.0;
    double overhead_fraction = 0.0;
    double info_rate = 0.0;  // bits/s
};

// Two bits per Bell symbol; the symbol rate is limited by whichever of the
// modulator and the SFG event rate is slower.
inline ThroughputReport throughput(double sfg_rate, double modulation_rate, double erasure_fraction,
                                   double overhead_fraction) {
    if (!std::isfinite(sfg_rate) || sfg_rate < 0.0) throw DomainError("SFG rate must be >= 0");
    if (!std::isfinite(modulation_rate) || modulation_rate < 0.0) throw DomainError("modulation rate must be >= 0");
    check_unit(erasure_fraction, "erasure fraction");
    check_unit(overhead_fraction, "overhead fraction");
    ThroughputReport t;
    t.symbol_rate = std::min(modulation_rate, sfg_rate);
    t.erasure_fraction = erasure_fraction;
    t.overhead_fraction = overhead_fraction;
    t.info_rate = 2.0 * t.symbol_rate * (1.0 - erasure_fraction) * (1.0 - overhead_fraction);
    return t;
}

}  // namespace qsdc::analysis
