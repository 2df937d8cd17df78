#pragma once

// Speaker/listener roles for teams that imitate a centralized linear
// feedback law a* = -K* s on the plant ds/dt = A s + B a.
//
// Agent indices are 0-based throughout. Agent i observes s_i and emits a_i.

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "rolecomms/errors.hpp"
#include "rolecomms/numerics.hpp"

namespace rolecomms::linear {

struct TeamLinearSystem {
    SmallMatrix A, B, Kstar;
    // Per-agent noise variances w_i^2.
    Vector W;

    std::size_t size() const noexcept { return A.rows(); }

    void validate() const {
        A.require_square("TeamLinearSystem: A");
        const std::size_t n = A.rows();
        if (B.rows() != n || B.cols() != n || Kstar.rows() != n || Kstar.cols() != n)
            throw DimensionError("TeamLinearSystem: A, B and K* must share one square shape");
        if (!W.empty() && W.size() != n) throw DimensionError("TeamLinearSystem: one noise variance per agent");
        for (Real w : W)
            if (!(w >= 0.0)) throw ArgumentError("TeamLinearSystem: noise variances must be non-negative");
    }
};

// The plant on which every fixed speaker/listener split is unstable:
// A = [[1, 1], [0, 1]], B = [[0, 0], [1, 0]].
inline TeamLinearSystem shear_plant(const SmallMatrix& Kstar = SmallMatrix::identity(2)) {
    return {SmallMatrix{{1, 1}, {0, 1}}, SmallMatrix{{0, 0}, {1, 0}}, Kstar, {}};
}

struct RoleAllocation {
    enum class Kind { SpeakerSpeaker, SpeakerListener, DynamicAlternating };
    Kind kind = Kind::SpeakerListener;
    std::size_t speaker = 0;
    Real dt = 0.0;

    static RoleAllocation speaker_speaker() { return {Kind::SpeakerSpeaker, 0, 0.0}; }
    static RoleAllocation speaker_listener(std::size_t speaker) { return {Kind::SpeakerListener, speaker, 0.0}; }
    static RoleAllocation dynamic(Real dt) { return {Kind::DynamicAlternating, 0, dt}; }

    void validate(std::size_t team_size) const {
        if (kind == Kind::SpeakerListener && speaker >= team_size)
            throw ArgumentError("RoleAllocation: speaker index out of range");
        if (kind == Kind::DynamicAlternating && !(dt > 0.0)) throw ArgumentError("RoleAllocation: dt must be positive");
    }
};

struct VariancePair {
    Real speaker = 0.0;
    Real listener = 0.0;
};

// Gain the team actually applies under a fixed allocation. A speaker drops
// its dependence on the partner's state. Dynamic alternation keeps K* (its
// phase average).
inline SmallMatrix role_gain(const SmallMatrix& Kstar, const RoleAllocation& alloc) {
    if (Kstar.rows() != 2 || Kstar.cols() != 2) throw DimensionError("role_gain: 2x2 gain required");
    alloc.validate(2);
    SmallMatrix K = Kstar;
    switch (alloc.kind) {
    case RoleAllocation::Kind::SpeakerSpeaker:
        K(0, 1) = 0.0;
        K(1, 0) = 0.0;
        break;
    case RoleAllocation::Kind::SpeakerListener:
        if (alloc.speaker == 0)
            K(0, 1) = 0.0;
        else
            K(1, 0) = 0.0;
        break;
    case RoleAllocation::Kind::DynamicAlternating: break;
    }
    return K;
}

struct StabilityReport {
    std::vector<Complex> eigenvalues;
    Real max_real = 0.0;
    bool stable = false;
};

// Spectrum of A - B role_gain(K*).
inline StabilityReport stability_report(const TeamLinearSystem& sys, const RoleAllocation& alloc) {
    sys.validate();
    if (sys.size() != 2) throw DimensionError("stability_report: 2-agent system required");
    const SmallMatrix closed = sys.A - sys.B * role_gain(sys.Kstar, alloc);
    const ComplexPair e = eig2x2(closed);
    StabilityReport r;
    r.eigenvalues = {e.first, e.second};
    r.max_real = e.max_real();
    r.stable = r.max_real < 0.0;
    return r;
}

// State-revealing actions: g(a_bar) = s with g(a) = G a, so a_bar = G^-1 s.
inline Vector naive_actions(std::span<const Real> s, const SmallMatrix* G = nullptr) {
    if (!G) return Vector(s.begin(), s.end());
    G->require_square("naive_actions: G");
    if (G->rows() != s.size()) throw DimensionError("naive_actions: G and s sizes differ");
    const Eigen::MatrixXd g = G->to_eigen();
    Eigen::FullPivLU<Eigen::MatrixXd> lu(g);
    if (!lu.isInvertible()) throw SingularityError("naive_actions: G is not invertible");
    const Eigen::VectorXd x = lu.solve(Eigen::Map<const Eigen::VectorXd>(s.data(), static_cast<Eigen::Index>(s.size())));
    return Vector(x.data(), x.data() + x.size());
}

// Team action in one phase of the rotation. In phase p the single listener
// is agent (p + 1) mod N and every other agent speaks its naive action; the
// listener overshoots as a*_j + (N - 1)(a*_j - a_bar_j) so the mean over N
// consecutive phases is a*. With two agents, agent p is the speaker.
inline Vector rotation_action(const TeamLinearSystem& sys, std::span<const Real> s, std::size_t phase,
                              std::span<const Real> naive) {
    const std::size_t n = sys.size();
    if (sys.Kstar.rows() != n || sys.Kstar.cols() != n) throw DimensionError("rotation_action: K* must be N x N");
    if (s.size() != n || naive.size() != n) throw DimensionError("rotation_action: state and naive actions need N entries");
    if (phase >= n) throw ArgumentError("rotation_action: phase out of range");
    const Vector ks = sys.Kstar * s;
    const std::size_t listener = (phase + 1) % n;
    Vector a(naive.begin(), naive.end());
    const Real astar = -ks[listener];
    a[listener] = astar + static_cast<Real>(n - 1) * (astar - naive[listener]);
    return a;
}

struct RotationRow {
    Real dt = 0.0;
    // sup over cycles of |cycle-mean action - a*(cycle start)|_inf
    Real deviation = 0.0;
    int cycles = 0;
};

namespace detail {

// ds/dt = A s + B a with a held fixed, RK4.
inline Vector hold_step(const SmallMatrix& A, const SmallMatrix& B, Vector s, std::span<const Real> a, Real dt,
                        int substeps = 4) {
    const Vector ba = B * a;
    const Real h = dt / substeps;
    auto f = [&](const Vector& x) {
        Vector d = A * x;
        for (std::size_t i = 0; i < d.size(); ++i) d[i] += ba[i];
        return d;
    };
    auto axpy = [](const Vector& x, Real c, const Vector& y) {
        Vector r = x;
        for (std::size_t i = 0; i < r.size(); ++i) r[i] += c * y[i];
        return r;
    };
    for (int k = 0; k < substeps; ++k) {
        const Vector k1 = f(s), k2 = f(axpy(s, h / 2, k1)), k3 = f(axpy(s, h / 2, k2)), k4 = f(axpy(s, h, k3));
        for (std::size_t i = 0; i < s.size(); ++i) s[i] += h / 6 * (k1[i] + 2 * k2[i] + 2 * k3[i] + k4[i]);
    }
    return s;
}

} // namespace detail

// Runs the rotation closed loop for each dt over [0, horizon], each phase a
// zero-order hold of length dt. Only whole N-phase cycles are simulated.
inline std::vector<RotationRow> rotation_converges(const TeamLinearSystem& sys, std::span<const Real> s0, Real horizon,
                                                   std::span<const Real> dts, const SmallMatrix* G = nullptr) {
    sys.validate();
    const std::size_t n = sys.size();
    if (s0.size() != n) throw DimensionError("rotation_converges: initial state needs N entries");
    if (!(horizon > 0.0)) throw ArgumentError("rotation_converges: horizon must be positive");
    if (dts.empty()) throw ArgumentError("rotation_converges: empty dt sequence");
    for (std::size_t i = 0; i < dts.size(); ++i) {
        if (!(dts[i] > 0.0)) throw ArgumentError("rotation_converges: dt must be positive");
        if (i > 0 && !(dts[i] < dts[i - 1])) throw ArgumentError("rotation_converges: dt sequence must decrease");
    }

    std::vector<RotationRow> rows;
    for (Real dt : dts) {
        const int cycles = static_cast<int>(std::floor(horizon / (static_cast<Real>(n) * dt) + 1e-9));
        if (cycles < 1) throw ArgumentError("rotation_converges: horizon shorter than one cycle");
        RotationRow row{dt, 0.0, cycles};
        Vector s(s0.begin(), s0.end());
        for (int c = 0; c < cycles; ++c) {
            const Vector target = sys.Kstar * s;
            Vector mean(n, 0.0);
            for (std::size_t p = 0; p < n; ++p) {
                const Vector a = rotation_action(sys, s, p, naive_actions(s, G));
                for (std::size_t i = 0; i < n; ++i) mean[i] += a[i] / static_cast<Real>(n);
                s = detail::hold_step(sys.A, sys.B, std::move(s), a, dt);
            }
            for (std::size_t i = 0; i < n; ++i) row.deviation = std::max(row.deviation, std::abs(mean[i] + target[i]));
        }
        rows.push_back(row);
    }
    return rows;
}

// -K* s + [K12/K22 n2 ; K21/K11 n1]: each listener reads the partner's
// noisy action as if it were exact.
inline Vector noisy_listener_action(const SmallMatrix& Kstar, std::span<const Real> s, std::span<const Real> noise) {
    if (Kstar.rows() != 2 || Kstar.cols() != 2) throw DimensionError("noisy_listener_action: 2x2 gain required");
    if (s.size() != 2 || noise.size() != 2) throw DimensionError("noisy_listener_action: 2-vectors required");
    if (Kstar(0, 0) == 0.0 || Kstar(1, 1) == 0.0) throw SingularityError("noisy_listener_action: zero diagonal gain");
    Vector a = Kstar * s;
    a[0] = -a[0] + Kstar(0, 1) / Kstar(1, 1) * noise[1];
    a[1] = -a[1] + Kstar(1, 0) / Kstar(0, 0) * noise[0];
    return a;
}

// KL-optimal speaker and listener variances. The speaker shrinks its
// variance when the listener depends on it; the listener keeps w^2.
inline VariancePair optimal_variances(const SmallMatrix& K, Real w1sq, Real w2sq, std::size_t speaker = 0) {
    if (K.rows() != 2 || K.cols() != 2) throw DimensionError("optimal_variances: 2x2 gain required");
    if (!(w1sq > 0.0) || !(w2sq > 0.0)) throw ArgumentError("optimal_variances: variances must be positive");
    if (speaker > 1) throw ArgumentError("optimal_variances: speaker index out of range");
    const std::size_t i = speaker, j = 1 - speaker;
    const Real kii = K(i, i), kji = K(j, i);
    const Real wi = speaker == 0 ? w1sq : w2sq, wj = speaker == 0 ? w2sq : w1sq;
    if (kii == 0.0) throw SingularityError("optimal_variances: speaker diagonal gain is zero");
    return {kii * kii * wi * wj / (kii * kii * wj + kji * kji * wi), wj};
}

// Expected KL between the speaker(0)/listener(1) team and the centralized
// team, with sigma_s2sq the speaker's prior variance on s_2.
inline Real expected_kl(const SmallMatrix& K, Real sigma1sq, Real sigma2sq, Real w1sq, Real w2sq, Real sigma_s2sq) {
    if (K.rows() != 2 || K.cols() != 2) throw DimensionError("expected_kl: 2x2 gain required");
    if (!(sigma1sq > 0.0) || !(sigma2sq > 0.0) || !(w1sq > 0.0) || !(w2sq > 0.0) || !(sigma_s2sq > 0.0))
        throw ArgumentError("expected_kl: variances must be positive");
    const Real k11 = K(0, 0), k12 = K(0, 1), k21 = K(1, 0);
    if (k11 == 0.0) throw SingularityError("expected_kl: K11 is zero");
    return k12 * k12 * sigma_s2sq / (2 * w1sq) + 0.5 * std::log(w1sq * w2sq / (sigma1sq * sigma2sq)) +
           sigma1sq / (2 * w1sq) + (sigma2sq + k21 * k21 * sigma1sq / (k11 * k11)) / (2 * w2sq);
}

namespace detail {

// Solves Ac^T P + P Ac = -M through the Kronecker form (n <= 4).
inline Eigen::MatrixXd lyapunov(const Eigen::MatrixXd& Ac, const Eigen::MatrixXd& M) {
    const Eigen::Index n = Ac.rows();
    const Eigen::MatrixXd I = Eigen::MatrixXd::Identity(n, n);
    Eigen::MatrixXd L = Eigen::MatrixXd::Zero(n * n, n * n);
    // vec(Ac^T P) = (I kron Ac^T) vec P, vec(P Ac) = (Ac^T kron I) vec P
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < n; ++j) {
            L.block(i * n, j * n, n, n) += I(i, j) * Ac.transpose();
            L.block(i * n, j * n, n, n) += Ac(j, i) * I;
        }
    const Eigen::VectorXd vm = Eigen::Map<const Eigen::VectorXd>(M.data(), n * n);
    const Eigen::VectorXd vp = L.fullPivLu().solve(-vm);
    Eigen::MatrixXd P = Eigen::Map<const Eigen::MatrixXd>(vp.data(), n, n);
    return 0.5 * (P + P.transpose());
}

} // namespace detail

inline Real riccati_residual(const SmallMatrix& A, const SmallMatrix& B, const SmallMatrix& Q, const SmallMatrix& R,
                             const SmallMatrix& P) {
    const Eigen::MatrixXd a = A.to_eigen(), b = B.to_eigen(), q = Q.to_eigen(), r = R.to_eigen(), p = P.to_eigen();
    const Eigen::MatrixXd res = a.transpose() * p + p * a - p * b * r.ldlt().solve(b.transpose() * p) + q;
    return res.cwiseAbs().maxCoeff();
}

struct LqrSolution {
    SmallMatrix K, P;
    Real residual = 0.0;
};

// Continuous-time LQR: stable invariant subspace of the Hamiltonian, then
// a few Newton (Kleinman) refinements.
inline LqrSolution lqr_solve(const SmallMatrix& A, const SmallMatrix& B, const SmallMatrix& Q, const SmallMatrix& R) {
    A.require_square("lqr_gain: A");
    const std::size_t n = A.rows(), m = B.cols();
    if (n == 0 || n > 4) throw DimensionError("lqr_gain: state dimension must be 1..4");
    if (B.rows() != n || Q.rows() != n || Q.cols() != n || R.rows() != m || R.cols() != m)
        throw DimensionError("lqr_gain: shape mismatch");
    const Eigen::MatrixXd a = A.to_eigen(), b = B.to_eigen(), q = Q.to_eigen(), r = R.to_eigen();
    const auto N = static_cast<Eigen::Index>(n);

    if ((q - q.transpose()).cwiseAbs().maxCoeff() > 1e-12 || (r - r.transpose()).cwiseAbs().maxCoeff() > 1e-12)
        throw ArgumentError("lqr_gain: Q and R must be symmetric");
    Eigen::LLT<Eigen::MatrixXd> rllt(r);
    if (rllt.info() != Eigen::Success) throw ArgumentError("lqr_gain: R must be positive definite");
    if (Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(q).eigenvalues().minCoeff() < -1e-12)
        throw ArgumentError("lqr_gain: Q must be positive semidefinite");

    Eigen::MatrixXd ctrb(N, N * static_cast<Eigen::Index>(m));
    Eigen::MatrixXd blk = b;
    for (Eigen::Index k = 0; k < N; ++k) {
        ctrb.middleCols(k * static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(m)) = blk;
        blk = a * blk;
    }
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(ctrb);
    qr.setThreshold(1e-10);
    if (qr.rank() < N) throw AnalysisError("lqr_gain: (A, B) is not controllable");

    const Eigen::MatrixXd s = b * rllt.solve(b.transpose());
    Eigen::MatrixXd H(2 * N, 2 * N);
    H << a, -s, -q, -a.transpose();
    Eigen::ComplexEigenSolver<Eigen::MatrixXd> ces(H);
    if (ces.info() != Eigen::Success) throw AnalysisError("lqr_gain: Hamiltonian eigensolver failed");

    Eigen::MatrixXcd X(2 * N, N);
    Eigen::Index found = 0;
    for (Eigen::Index i = 0; i < 2 * N; ++i)
        if (ces.eigenvalues()[i].real() < 0.0) {
            if (found == N) throw AnalysisError("lqr_gain: Hamiltonian has too many stable eigenvalues");
            X.col(found++) = ces.eigenvectors().col(i);
        }
    if (found != N) throw AnalysisError("lqr_gain: Hamiltonian has eigenvalues on the imaginary axis");
    const Eigen::MatrixXcd X1 = X.topRows(N), X2 = X.bottomRows(N);
    Eigen::FullPivLU<Eigen::MatrixXcd> lu(X1);
    if (!lu.isInvertible()) throw AnalysisError("lqr_gain: stable subspace is not a graph");
    Eigen::MatrixXd P = (X2 * lu.inverse()).real();
    P = 0.5 * (P + P.transpose());

    auto residual = [&](const Eigen::MatrixXd& p) {
        return (a.transpose() * p + p * a - p * s * p + q).cwiseAbs().maxCoeff();
    };
    for (int it = 0; it < 8 && residual(P) > 1e-13 * std::max<Real>(1.0, P.cwiseAbs().maxCoeff()); ++it) {
        const Eigen::MatrixXd K = rllt.solve(b.transpose() * P);
        const Eigen::MatrixXd Ac = a - b * K;
        P = detail::lyapunov(Ac, q + K.transpose() * r * K);
    }
    const Real res = residual(P);
    if (!std::isfinite(res) || res >= 1e-8) throw AnalysisError("lqr_gain: Riccati residual did not converge");

    const Eigen::MatrixXd K = rllt.solve(b.transpose() * P);
    return {SmallMatrix::from_eigen(K), SmallMatrix::from_eigen(P), res};
}

inline SmallMatrix lqr_gain(const SmallMatrix& A, const SmallMatrix& B, const SmallMatrix& Q, const SmallMatrix& R) {
    return lqr_solve(A, B, Q, R).K;
}

} // namespace rolecomms::linear
