#include <gtest/gtest.h>

#include <cmath>

#include "rolecomms/linear_roles.hpp"

using namespace rolecomms;
using namespace rolecomms::linear;

namespace {

const SmallMatrix kK{{1, 2}, {3, 4}};

TeamLinearSystem team(const SmallMatrix& K) {
    const std::size_t n = K.rows();
    return {SmallMatrix::identity(n), SmallMatrix::identity(n), K, Vector(n, 1.0)};
}

} // namespace

TEST(RoleGain, Masks) {
    const SmallMatrix sl = role_gain(kK, RoleAllocation::speaker_listener(0));
    EXPECT_EQ(sl(0, 1), 0.0);
    EXPECT_EQ(sl(1, 0), 3.0);
    const SmallMatrix sl2 = role_gain(kK, RoleAllocation::speaker_listener(1));
    EXPECT_EQ(sl2(1, 0), 0.0);
    EXPECT_EQ(sl2(0, 1), 2.0);
    const SmallMatrix ss = role_gain(kK, RoleAllocation::speaker_speaker());
    EXPECT_EQ(ss(0, 1), 0.0);
    EXPECT_EQ(ss(1, 0), 0.0);
    EXPECT_EQ(ss(0, 0), 1.0);
    EXPECT_EQ(ss(1, 1), 4.0);
}

TEST(RoleGain, DiagonalUnchangedAndIdempotent) {
    const Vector d{2, -3};
    const SmallMatrix D = SmallMatrix::diagonal(d);
    for (const auto& alloc : {RoleAllocation::speaker_listener(0), RoleAllocation::speaker_listener(1),
                              RoleAllocation::speaker_speaker(), RoleAllocation::dynamic(0.1)}) {
        const SmallMatrix g = role_gain(D, alloc);
        EXPECT_EQ(g(0, 0), 2);
        EXPECT_EQ(g(1, 1), -3);
        EXPECT_EQ(g(0, 1), 0);
        const SmallMatrix once = role_gain(kK, alloc);
        const SmallMatrix twice = role_gain(once, alloc);
        for (std::size_t i = 0; i < 2; ++i)
            for (std::size_t j = 0; j < 2; ++j) EXPECT_EQ(once(i, j), twice(i, j));
        EXPECT_EQ(once(0, 0), 1.0);
        EXPECT_EQ(once(1, 1), 4.0);
    }
    EXPECT_THROW(role_gain(kK, RoleAllocation::speaker_listener(2)), ArgumentError);
    EXPECT_THROW(role_gain(kK, RoleAllocation::dynamic(0.0)), ArgumentError);
}

TEST(Stability, ShearPlantAlwaysUnstable) {
    Rng rng(1);
    for (int i = 0; i < 100; ++i) {
        const SmallMatrix K{{rng.uniform(-10, 10), rng.uniform(-10, 10)}, {rng.uniform(-10, 10), rng.uniform(-10, 10)}};
        const auto r = stability_report(shear_plant(K), RoleAllocation::speaker_listener(0));
        EXPECT_FALSE(r.stable);
        EXPECT_GE(r.max_real, 1.0 - 1e-9);
    }
    const auto one = stability_report(shear_plant(SmallMatrix{{1, 7}, {-2, 5}}), RoleAllocation::speaker_listener(0));
    EXPECT_NEAR(one.max_real, 1.0, 1e-15);
}

TEST(Stability, AlreadyStablePlant) {
    const TeamLinearSystem sys{-1.0 * SmallMatrix::identity(2), SmallMatrix::identity(2), SmallMatrix(2, 2, 0.0), {}};
    const auto r = stability_report(sys, RoleAllocation::speaker_speaker());
    EXPECT_TRUE(r.stable);
    EXPECT_EQ(r.eigenvalues[0], Complex(-1, 0));
    EXPECT_EQ(r.eigenvalues[1], Complex(-1, 0));
}

TEST(Rotation, NaiveEqualsOptimal) {
    const Vector s{1, 2};
    const Vector astar{-5, -11};
    for (std::size_t p = 0; p < 2; ++p) EXPECT_EQ(rotation_action(team(kK), s, p, astar), astar);
}

TEST(Rotation, ProofConstruction) {
    const Vector s{1, 2};
    const Vector naive = naive_actions(s);
    EXPECT_EQ(rotation_action(team(kK), s, 0, naive), (Vector{1, -24}));
    EXPECT_EQ(rotation_action(team(kK), s, 1, naive), (Vector{-11, 2}));
}

TEST(Rotation, ThreeAgentPhaseAverage) {
    const SmallMatrix K{{1, 2, 3}, {-1, 0.5, 2}, {4, -2, 1}};
    const Vector s{0.3, -1.2, 2.0};
    const Vector ks = K * std::span<const Real>(s);
    Vector mean(3, 0.0);
    for (std::size_t p = 0; p < 3; ++p) {
        const Vector a = rotation_action(team(K), s, p, naive_actions(s));
        for (int i = 0; i < 3; ++i) mean[i] += a[i] / 3;
    }
    for (int i = 0; i < 3; ++i) EXPECT_NEAR(mean[i], -ks[i], 1e-12);
}

TEST(Rotation, NonIdentityNaiveMap) {
    const SmallMatrix G{{2, 0}, {1, 1}};
    const Vector s{1, 2};
    const Vector abar = naive_actions(s, &G);
    const Vector back = G * std::span<const Real>(abar);
    EXPECT_NEAR(back[0], 1, 1e-15);
    EXPECT_NEAR(back[1], 2, 1e-15);
    const SmallMatrix singular{{1, 1}, {1, 1}};
    EXPECT_THROW(naive_actions(s, &singular), SingularityError);
}

TEST(RotationConverges, ConstantStateZeroDeviation) {
    // A = B = 0 keeps the state fixed.
    const TeamLinearSystem sys{SmallMatrix(2, 2, 0.0), SmallMatrix(2, 2, 0.0), kK, {}};
    const Vector s0{1, 2};
    const Vector dts{0.1, 0.05, 0.025};
    for (const auto& row : rotation_converges(sys, s0, 1.0, dts)) EXPECT_LT(row.deviation, 1e-12);
}

TEST(RotationConverges, DriftingStateFirstOrder) {
    const Vector s0{1, -0.5};
    const Vector dts{0.02, 0.01, 0.005, 0.0025};
    const auto rows = rotation_converges(shear_plant(SmallMatrix{{1, -1}, {1, 2}}), s0, 2.0, dts);
    ASSERT_EQ(rows.size(), 4u);
    for (std::size_t i = 1; i < rows.size(); ++i) {
        EXPECT_LT(rows[i].deviation, rows[i - 1].deviation);
        const Real ratio = rows[i].deviation / rows[i - 1].deviation;
        EXPECT_GE(ratio, 0.4);
        EXPECT_LE(ratio, 0.6);
    }
}

TEST(RotationConverges, SingleRowAndTruncation) {
    const Vector s0{1, 1};
    const Vector one{0.3};
    const auto rows = rotation_converges(shear_plant(kK), s0, 1.0, one);
    ASSERT_EQ(rows.size(), 1u);
    EXPECT_EQ(rows[0].cycles, 1); // 1.0 / (2 * 0.3) truncates to one cycle
    const Vector up{0.1, 0.2};
    EXPECT_THROW(rotation_converges(shear_plant(kK), s0, 1.0, up), ArgumentError);
    const Vector big{0.6};
    EXPECT_THROW(rotation_converges(shear_plant(kK), s0, 1.0, big), ArgumentError);
}

TEST(NoisyListener, NoiseFree) {
    const Vector s{1, 2}, n{0, 0};
    EXPECT_EQ(noisy_listener_action(kK, s, n), (Vector{-5, -11}));
}

TEST(NoisyListener, ExtraTerm) {
    const Vector s{0, 0}, n{0.1, -0.2};
    const Vector a = noisy_listener_action(kK, s, n);
    EXPECT_NEAR(a[0], -0.1, 1e-15);
    EXPECT_NEAR(a[1], 0.3, 1e-15);
    EXPECT_THROW(noisy_listener_action(SmallMatrix{{0, 1}, {1, 1}}, s, n), SingularityError);
}

TEST(NoisyListener, UnbiasedOnAverage) {
    Rng rng(12);
    const Vector s{0.7, -1.3};
    const int N = 100000;
    const Real sigma = 0.5;
    Vector sum(2, 0.0);
    for (int i = 0; i < N; ++i) {
        const Vector n{gaussian(rng, 0, sigma), gaussian(rng, 0, sigma)};
        const Vector a = noisy_listener_action(kK, s, n);
        sum[0] += a[0];
        sum[1] += a[1];
    }
    const Vector ks = kK * std::span<const Real>(s);
    // Per-component spread of the extra term.
    const Real sd0 = std::abs(kK(0, 1) / kK(1, 1)) * sigma, sd1 = std::abs(kK(1, 0) / kK(0, 0)) * sigma;
    EXPECT_LT(std::abs(sum[0] / N + ks[0]), 4 * sd0 / std::sqrt(Real(N)));
    EXPECT_LT(std::abs(sum[1] / N + ks[1]), 4 * sd1 / std::sqrt(Real(N)));
}

TEST(Variances, Examples) {
    const auto zero = optimal_variances(SmallMatrix{{2, 1}, {0, 1}}, 0.7, 1.3);
    EXPECT_DOUBLE_EQ(zero.speaker, 0.7);
    const auto half = optimal_variances(SmallMatrix{{1, 0}, {1, 1}}, 1, 1);
    EXPECT_DOUBLE_EQ(half.speaker, 0.5);
    EXPECT_DOUBLE_EQ(half.listener, 1.0);
    // Mirrored for speaker 1: K22 and K12 play the roles of K11 and K21.
    const auto mirrored = optimal_variances(SmallMatrix{{1, 1}, {0, 1}}, 1, 1, 1);
    EXPECT_DOUBLE_EQ(mirrored.speaker, 0.5);
    EXPECT_THROW(optimal_variances(SmallMatrix{{0, 1}, {1, 1}}, 1, 1), SingularityError);
}

TEST(Variances, NeverAboveNoise) {
    Rng rng(6);
    for (int i = 0; i < 1000; ++i) {
        const SmallMatrix K{{rng.uniform(0.1, 5), rng.uniform(-5, 5)}, {rng.uniform(-5, 5), rng.uniform(0.1, 5)}};
        const Real w1 = rng.uniform(0.1, 3), w2 = rng.uniform(0.1, 3);
        const auto v = optimal_variances(K, w1, w2);
        EXPECT_LE(v.speaker, w1 * (1 + 1e-15));
        EXPECT_EQ(v.listener, w2);
    }
}

TEST(ExpectedKl, UncoupledIsOne) {
    EXPECT_NEAR(expected_kl(SmallMatrix{{1, 0}, {0, 1}}, 2.0, 3.0, 2.0, 3.0, 1.0), 1.0, 1e-15);
    EXPECT_THROW(expected_kl(kK, 0.0, 1, 1, 1, 1), ArgumentError);
}

TEST(ExpectedKl, ConvexAlongChords) {
    Rng rng(7);
    for (int i = 0; i < 200; ++i) {
        const Real a1 = rng.uniform(0.05, 3), a2 = rng.uniform(0.05, 3), b1 = rng.uniform(0.05, 3),
                   b2 = rng.uniform(0.05, 3);
        const Real fa = expected_kl(kK, a1, a2, 1.5, 0.8, 0.4);
        const Real fb = expected_kl(kK, b1, b2, 1.5, 0.8, 0.4);
        const Real fm = expected_kl(kK, 0.5 * (a1 + b1), 0.5 * (a2 + b2), 1.5, 0.8, 0.4);
        EXPECT_LE(fm, 0.5 * (fa + fb) + 1e-12);
    }
}

TEST(Lqr, ScalarCases) {
    const SmallMatrix one{{1}};
    EXPECT_NEAR(lqr_gain(SmallMatrix{{0}}, one, one, one)(0, 0), 1.0, 1e-10);
    EXPECT_NEAR(lqr_gain(one, one, SmallMatrix{{0}}, one)(0, 0), 2.0, 1e-10);
}

TEST(Lqr, ClosedLoopStableAndResidualSmall) {
    Rng rng(9);
    for (int n = 2; n <= 4; ++n)
        for (int trial = 0; trial < 10; ++trial) {
            SmallMatrix A(n, n), B(n, n);
            for (int i = 0; i < n; ++i)
                for (int j = 0; j < n; ++j) {
                    A(i, j) = rng.uniform(-2, 2);
                    B(i, j) = rng.uniform(-1, 1);
                }
            const auto sol = lqr_solve(A, B, SmallMatrix::identity(n), SmallMatrix::identity(n));
            EXPECT_LT(riccati_residual(A, B, SmallMatrix::identity(n), SmallMatrix::identity(n), sol.P), 1e-8);
            EXPECT_LT(max_real_part(eig_general(A - B * sol.K)), 0.0);
        }
}

TEST(Lqr, UncontrollableRejected) {
    const SmallMatrix A{{1, 0}, {0, 2}};
    const SmallMatrix B{{1}, {0}};
    EXPECT_THROW(lqr_gain(A, B, SmallMatrix::identity(2), SmallMatrix{{1}}), AnalysisError);
}
