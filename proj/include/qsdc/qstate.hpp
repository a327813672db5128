#pragma once

// Two time-bin qubits as an exact 4x4 density matrix.
//
// Basis order is (ss, sl, ls, ll): index = 2*a + b with the first qubit (a)
// held by the sender and s = 0, l = 1. sigma_z = diag(1, -1) and
// sigma_x |s> = |l> in the (s, l) basis.

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <cstdint>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <string_view>

#include <Eigen/Dense>

#include "qsdc/errors.hpp"

namespace qsdc {

using Complex = std::complex<double>;
using Matrix2 = Eigen::Matrix2cd;
using Matrix4 = Eigen::Matrix4cd;
using Vector4 = Eigen::Vector4cd;

enum class TimeBin : std::uint8_t { Short = 0, Long = 1 };

enum class BasisState : std::uint8_t { SS = 0, SL = 1, LS = 2, LL = 3 };

constexpr std::size_t basis_index(TimeBin a, TimeBin b) {
    return 2 * static_cast<std::size_t>(a) + static_cast<std::size_t>(b);
}

// Enumerator order equals the two-bit code: PhiPlus=00 ... PsiMinus=11.
enum class BellLabel : std::uint8_t { PhiPlus = 0, PhiMinus = 1, PsiPlus = 2, PsiMinus = 3 };

inline constexpr std::array<BellLabel, 4> kBellLabels = {
    BellLabel::PhiPlus, BellLabel::PhiMinus, BellLabel::PsiPlus, BellLabel::PsiMinus};

enum class PauliEncoding : std::uint8_t { I = 0, SigmaZ = 1, SigmaX = 2, MinusISigmaY = 3 };

inline constexpr std::array<PauliEncoding, 4> kEncodings = {
    PauliEncoding::I, PauliEncoding::SigmaZ, PauliEncoding::SigmaX, PauliEncoding::MinusISigmaY};

// Two message bits packed as (first << 1) | second.
struct SymbolCode {
    std::uint8_t value = 0;

    constexpr SymbolCode() = default;
    constexpr explicit SymbolCode(std::uint8_t v) : value(v & 0b11) {}
    constexpr SymbolCode(bool first, bool second)
        : value(static_cast<std::uint8_t>((first ? 2 : 0) | (second ? 1 : 0))) {}

    constexpr bool first() const { return (value & 0b10) != 0; }
    constexpr bool second() const { return (value & 0b01) != 0; }
    constexpr bool operator==(const SymbolCode&) const = default;
};

constexpr std::string_view to_string(BellLabel label) {
    switch (label) {
        case BellLabel::PhiPlus: return "phi_plus";
        case BellLabel::PhiMinus: return "phi_minus";
        case BellLabel::PsiPlus: return "psi_plus";
        case BellLabel::PsiMinus: return "psi_minus";
    }
    return "?";
}

constexpr std::string_view to_string(PauliEncoding enc) {
    switch (enc) {
        case PauliEncoding::I: return "I";
        case PauliEncoding::SigmaZ: return "sigma_z";
        case PauliEncoding::SigmaX: return "sigma_x";
        case PauliEncoding::MinusISigmaY: return "minus_i_sigma_y";
    }
    return "?";
}

inline std::optional<BellLabel> parse_bell_label(std::string_view text) {
    for (BellLabel label : kBellLabels) {
        if (text == to_string(label)) return label;
    }
    if (text == "PhiPlus" || text == "phi+") return BellLabel::PhiPlus;
    if (text == "PhiMinus" || text == "phi-") return BellLabel::PhiMinus;
    if (text == "PsiPlus" || text == "psi+") return BellLabel::PsiPlus;
    if (text == "PsiMinus" || text == "psi-") return BellLabel::PsiMinus;
    return std::nullopt;
}

constexpr SymbolCode bell_bits(BellLabel label) { return SymbolCode(static_cast<std::uint8_t>(label)); }

constexpr BellLabel bell_from_bits(SymbolCode code) { return static_cast<BellLabel>(code.value); }

constexpr PauliEncoding encode_bits(SymbolCode code) { return static_cast<PauliEncoding>(code.value); }

constexpr SymbolCode decode_bits(BellLabel label) { return bell_bits(label); }

// The Bell state reached by applying `enc` to the sender's half of PhiPlus.
constexpr BellLabel encoded_label(PauliEncoding enc) { return static_cast<BellLabel>(enc); }

inline Matrix2 pauli_matrix(PauliEncoding enc) {
    Matrix2 u;
    switch (enc) {
        case PauliEncoding::I: u << 1, 0, 0, 1; break;
        case PauliEncoding::SigmaZ: u << 1, 0, 0, -1; break;
        case PauliEncoding::SigmaX: u << 0, 1, 1, 0; break;
        // -i * [[0, -i], [i, 0]]
        case PauliEncoding::MinusISigmaY: u << 0, -1, 1, 0; break;
    }
    return u;
}

namespace detail {

inline constexpr double kHermitianTol = 1e-12;
inline constexpr double kTraceTol = 1e-12;
inline constexpr double kEigenTol = 1e-10;

// U (x) I in the (ss, sl, ls, ll) ordering.
inline Matrix4 on_first(const Matrix2& u) {
    Matrix4 out = Matrix4::Zero();
    for (Eigen::Index a = 0; a < 2; ++a) {
        for (Eigen::Index c = 0; c < 2; ++c) {
            out(2 * a, 2 * c) = u(a, c);
            out(2 * a + 1, 2 * c + 1) = u(a, c);
        }
    }
    return out;
}

inline Vector4 product_vector(const Eigen::Vector2cd& a, const Eigen::Vector2cd& b) {
    return Vector4(a(0) * b(0), a(0) * b(1), a(1) * b(0), a(1) * b(1));
}

}  // namespace detail

class TwoQubitState {
public:
    // Validates Hermiticity, unit trace, and positive semidefiniteness.
    static TwoQubitState from_matrix(const Matrix4& rho) {
        check(rho);
        return TwoQubitState(rho);
    }

    static TwoQubitState from_pure(const Vector4& psi) {
        const double norm = psi.norm();
        if (norm == 0.0) throw InvariantViolation("zero state vector");
        const Vector4 unit = psi / norm;
        return from_matrix(unit * unit.adjoint());
    }

    static TwoQubitState maximally_mixed() { return TwoQubitState(Matrix4::Identity() / 4.0); }

    const Matrix4& matrix() const { return rho_; }
    Complex operator()(std::size_t row, std::size_t col) const {
        return rho_(static_cast<Eigen::Index>(row), static_cast<Eigen::Index>(col));
    }

    double purity() const { return (rho_ * rho_).trace().real(); }

    Eigen::Vector4d eigenvalues() const {
        Eigen::SelfAdjointEigenSolver<Matrix4> solver(rho_, Eigen::EigenvaluesOnly);
        return solver.eigenvalues();
    }

    static void check(const Matrix4& rho) {
        if (!rho.allFinite()) throw InvariantViolation("density matrix has non-finite entries");
        const double herm = (rho - rho.adjoint()).cwiseAbs().maxCoeff();
        if (herm > detail::kHermitianTol) {
            throw InvariantViolation("density matrix is not Hermitian (max deviation " + std::to_string(herm) +
                                     ")");
        }
        const double trace_err = std::abs(rho.trace() - Complex(1.0, 0.0));
        if (trace_err > detail::kTraceTol) {
            throw InvariantViolation("density matrix trace differs from 1 by " + std::to_string(trace_err));
        }
        Eigen::SelfAdjointEigenSolver<Matrix4> solver(rho, Eigen::EigenvaluesOnly);
        if (solver.eigenvalues().minCoeff() < -detail::kEigenTol) {
            throw InvariantViolation("density matrix has a negative eigenvalue " +
                                     std::to_string(solver.eigenvalues().minCoeff()));
        }
    }

private:
    explicit TwoQubitState(Matrix4 rho) : rho_(std::move(rho)) {}

    Matrix4 rho_;
};

inline Vector4 bell_vector(BellLabel label) {
    const double h = std::numbers::sqrt2 / 2.0;
    Vector4 v = Vector4::Zero();
    constexpr auto ss = basis_index(TimeBin::Short, TimeBin::Short);
    constexpr auto sl = basis_index(TimeBin::Short, TimeBin::Long);
    constexpr auto ls = basis_index(TimeBin::Long, TimeBin::Short);
    constexpr auto ll = basis_index(TimeBin::Long, TimeBin::Long);
    switch (label) {
        case BellLabel::PhiPlus: v(ss) = h; v(ll) = h; break;
        case BellLabel::PhiMinus: v(ss) = h; v(ll) = -h; break;
        case BellLabel::PsiPlus: v(ls) = h; v(sl) = h; break;
        case BellLabel::PsiMinus: v(ls) = h; v(sl) = -h; break;
    }
    return v;
}

inline TwoQubitState bell_state(BellLabel label) {
    const Vector4 v = bell_vector(label);
    return TwoQubitState::from_matrix(v * v.adjoint());
}

// (U (x) I) rho (U (x) I)^dagger with U acting on the sender's qubit.
inline TwoQubitState apply_encoding(const TwoQubitState& state, PauliEncoding enc) {
    TwoQubitState::check(state.matrix());
    const Matrix4 u = detail::on_first(pauli_matrix(enc));
    Matrix4 out = u * state.matrix() * u.adjoint();
    return TwoQubitState::from_matrix(0.5 * (out + out.adjoint()));
}

struct NoiseParams {
    double depolarizing_p = 0.0;
    double dephasing_q = 0.0;
    double phase_offset = 0.0;  // radians

    void validate() const {
        auto in_unit = [](double x) { return std::isfinite(x) && x >= 0.0 && x <= 1.0; };
        if (!in_unit(depolarizing_p)) throw DomainError("depolarizing_p must lie in [0,1]");
        if (!in_unit(dephasing_q)) throw DomainError("dephasing_q must lie in [0,1]");
        if (!std::isfinite(phase_offset)) throw DomainError("phase_offset must be finite");
    }

    bool operator==(const NoiseParams&) const = default;
};

// rho' = (1-p) D_q(R_theta rho R_theta^dagger) + p I/4.
//
// R_theta = diag(1, 1, 1, e^{i theta}) rotates the ss/ll coherence, and D_q
// dephases each qubit with probability q (every off-diagonal element between
// states differing on that qubit scales by 1-q).
inline TwoQubitState apply_noise(const TwoQubitState& state, const NoiseParams& noise) {
    noise.validate();
    Matrix4 rho = state.matrix();
    if (noise.phase_offset != 0.0) {
        Vector4 phases = Vector4::Ones();
        phases(basis_index(TimeBin::Long, TimeBin::Long)) = std::polar(1.0, noise.phase_offset);
        rho = phases.asDiagonal() * rho * phases.conjugate().asDiagonal();
    }
    if (noise.dephasing_q > 0.0) {
        const double keep = 1.0 - noise.dephasing_q;
        for (Eigen::Index r = 0; r < 4; ++r) {
            for (Eigen::Index c = 0; c < 4; ++c) {
                const bool first_differs = ((r >> 1) & 1) != ((c >> 1) & 1);
                const bool second_differs = (r & 1) != (c & 1);
                double scale = 1.0;
                if (first_differs) scale *= keep;
                if (second_differs) scale *= keep;
                rho(r, c) *= scale;
            }
        }
    }
    const double p = noise.depolarizing_p;
    rho = (1.0 - p) * rho + p * Matrix4::Identity() / 4.0;
    return TwoQubitState::from_matrix(0.5 * (rho + rho.adjoint()));
}

inline TwoQubitState werner_state(BellLabel label, double p) {
    return apply_noise(bell_state(label), NoiseParams{p, 0.0, 0.0});
}

// <b| rho |b>, clamped into [0, 1].
inline double fidelity(const TwoQubitState& state, BellLabel target) {
    const Vector4 b = bell_vector(target);
    const double f = (b.adjoint() * state.matrix() * b)(0).real();
    return std::clamp(f, 0.0, 1.0);
}

// Bell-basis diagonal in kBellLabels order; sums to 1.
inline std::array<double, 4> bell_diagonal(const TwoQubitState& state) {
    std::array<double, 4> out{};
    double total = 0.0;
    for (std::size_t i = 0; i < 4; ++i) {
        out[i] = fidelity(state, kBellLabels[i]);
        total += out[i];
    }
    for (double& x : out) x /= total;
    return out;
}

// Joint projection onto (|s> + e^{i phase_a}|l>)/sqrt2 (x) (|s> + e^{i phase_b}|l>)/sqrt2.
inline double fringe_coincidence(const TwoQubitState& state, double phase_a, double phase_b) {
    Eigen::Vector2cd va(1.0, std::polar(1.0, phase_a));
    Eigen::Vector2cd vb(1.0, std::polar(1.0, phase_b));
    const Vector4 v = detail::product_vector(va, vb) / 2.0;
    const double p = (v.adjoint() * state.matrix() * v)(0).real();
    return std::clamp(p, 0.0, 1.0);
}

struct FringeSample {
    double phase = 0.0;
    double value = 0.0;
};

// value ~ offset + amplitude * cos(phase + phase_shift)
struct FringeFit {
    double offset = 0.0;
    double amplitude = 0.0;
    double phase_shift = 0.0;
    double visibility = 0.0;
};

inline FringeFit fit_fringe(std::span<const FringeSample> samples) {
    constexpr std::size_t kMinSamples = 8;
    if (samples.size() < kMinSamples) {
        throw InsufficientData("fringe fit needs at least 8 samples, got " + std::to_string(samples.size()));
    }
    double lo = samples.front().phase;
    double hi = lo;
    for (const auto& s : samples) {
        lo = std::min(lo, s.phase);
        hi = std::max(hi, s.phase);
    }
    const double n = static_cast<double>(samples.size());
    const double coverage = (hi - lo) * n / (n - 1.0);
    if (coverage < 2.0 * std::numbers::pi - 1e-9) {
        throw InsufficientData("fringe samples must cover a full 2*pi of phase");
    }

    Eigen::Matrix3d normal = Eigen::Matrix3d::Zero();
    Eigen::Vector3d rhs = Eigen::Vector3d::Zero();
    for (const auto& s : samples) {
        const Eigen::Vector3d row(1.0, std::cos(s.phase), std::sin(s.phase));
        normal += row * row.transpose();
        rhs += row * s.value;
    }
    Eigen::FullPivLU<Eigen::Matrix3d> lu(normal);
    if (lu.rank() < 3) throw InsufficientData("degenerate fringe fit");
    const Eigen::Vector3d coef = lu.solve(rhs);

    FringeFit fit;
    fit.offset = coef(0);
    fit.amplitude = std::hypot(coef(1), coef(2));
    fit.phase_shift = std::atan2(-coef(2), coef(1));
    if (!(fit.offset > 1e-15)) throw InsufficientData("fringe offset is not positive");
    fit.visibility = std::clamp(fit.amplitude / fit.offset, 0.0, 1.0);
    return fit;
}

inline double visibility(std::span<const FringeSample> samples) { return fit_fringe(samples).visibility; }

// Depolarizing probability p such that fidelity(apply_noise(bell(label),
// base with p), label) == target, found by bisection.
inline double calibrate_depolarizing(BellLabel label, double target, NoiseParams base = {}) {
    base.depolarizing_p = 0.0;
    const auto f_at = [&](double p) {
        NoiseParams n = base;
        n.depolarizing_p = p;
        return fidelity(apply_noise(bell_state(label), n), label);
    };
    const double f0 = f_at(0.0);
    const double f1 = f_at(1.0);
    if (target > f0 + 1e-15 || target < f1 - 1e-15) {
        throw DomainError("target fidelity " + std::to_string(target) + " not reachable by depolarizing noise");
    }
    double lo = 0.0;
    double hi = 1.0;
    for (int iter = 0; iter < 200 && hi - lo > 1e-15; ++iter) {
        const double mid = 0.5 * (lo + hi);
        if (f_at(mid) > target) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    return 0.5 * (lo + hi);
}

}  // namespace qsdc
