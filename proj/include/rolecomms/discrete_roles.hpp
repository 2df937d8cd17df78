#pragma once

// Speaker and listener policies on finite state and action spaces, by
// direct enumeration.
//
// A FinitePolicy is a table pi(a | own, partner). A speaker-form policy has
// a single partner column. Histories can be handled by enumerating them as
// super-states before building the table.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "rolecomms/errors.hpp"
#include "rolecomms/numerics.hpp"

namespace rolecomms::discrete {

inline constexpr Real kNormTol = 1e-9;

using Belief = std::vector<Real>;

class FinitePolicy {
public:
    FinitePolicy() = default;

    // Rows are ordered own-major: row (own, partner) starts at
    // (own * partner_states + partner) * actions.
    FinitePolicy(std::size_t own_states, std::size_t partner_states, std::size_t actions, Vector table)
        : own_(own_states), partner_(partner_states), actions_(actions), table_(std::move(table)) {
        if (own_ == 0 || partner_ == 0 || actions_ == 0) throw DimensionError("FinitePolicy: empty axis");
        if (table_.size() != own_ * partner_ * actions_) throw DimensionError("FinitePolicy: table size mismatch");
        for (std::size_t s = 0; s < own_; ++s)
            for (std::size_t p = 0; p < partner_; ++p) {
                Real sum = 0.0;
                for (Real x : row(s, p)) {
                    if (!(x >= 0.0)) throw ArgumentError("FinitePolicy: negative or NaN probability");
                    sum += x;
                }
                if (std::abs(sum - 1.0) > kNormTol) throw ArgumentError("FinitePolicy: row does not sum to 1");
            }
    }

    // Speaker form: no dependence on the partner.
    static FinitePolicy speaker_form(std::size_t own_states, std::size_t actions, Vector table) {
        return {own_states, 1, actions, std::move(table)};
    }

    std::size_t own_states() const noexcept { return own_; }
    std::size_t partner_states() const noexcept { return partner_; }
    std::size_t actions() const noexcept { return actions_; }
    bool is_speaker_form() const noexcept { return partner_ == 1; }

    std::span<const Real> row(std::size_t own, std::size_t partner = 0) const {
        if (own >= own_ || partner >= partner_) throw ArgumentError("FinitePolicy: state out of range");
        return {table_.data() + (own * partner_ + partner) * actions_, actions_};
    }

    Real operator()(std::size_t own, std::size_t partner, std::size_t action) const {
        if (action >= actions_) throw ArgumentError("FinitePolicy: action out of range");
        return row(own, partner)[action];
    }

    const Vector& table() const noexcept { return table_; }

    friend bool operator==(const FinitePolicy&, const FinitePolicy&) = default;

private:
    std::size_t own_ = 0, partner_ = 0, actions_ = 0;
    Vector table_;
};

inline void validate_belief(std::span<const Real> b, const char* what) {
    if (b.empty()) throw DimensionError(std::string(what) + ": empty belief");
    Real sum = 0.0;
    for (Real x : b) {
        if (!(x >= 0.0)) throw ArgumentError(std::string(what) + ": negative or NaN belief entry");
        sum += x;
    }
    if (std::abs(sum - 1.0) > kNormTol) throw ArgumentError(std::string(what) + ": belief does not sum to 1");
}

inline Vector normalized(Vector v) {
    Real sum = 0.0;
    for (Real x : v) sum += x;
    if (!(sum > 0.0)) throw InconsistencyError("distribution has zero mass");
    for (Real& x : v) x /= sum;
    return v;
}

inline Real total_variation(std::span<const Real> p, std::span<const Real> q) {
    if (p.size() != q.size()) throw DimensionError("total_variation: size mismatch");
    Real d = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) d += std::abs(p[i] - q[i]);
    return 0.5 * d;
}

// sum_{s2} pi1*(a | s1, s2) P(s2)
inline Vector speaker_policy_exact(const FinitePolicy& centralized, std::span<const Real> belief, std::size_t own_state) {
    if (belief.size() != centralized.partner_states())
        throw DimensionError("speaker_policy_exact: belief size does not match partner states");
    validate_belief(belief, "speaker_policy_exact");
    Vector out(centralized.actions(), 0.0);
    for (std::size_t p = 0; p < belief.size(); ++p) {
        const auto r = centralized.row(own_state, p);
        for (std::size_t a = 0; a < out.size(); ++a) out[a] += belief[p] * r[a];
    }
    return normalized(std::move(out));
}

// P(s1 | a1) proportional to pi1(a1 | s1) P(s1)
inline Belief listener_posterior(std::span<const Real> prior, std::size_t speaker_action, const FinitePolicy& speaker_policy) {
    if (!speaker_policy.is_speaker_form())
        throw ArgumentError("listener_posterior: partner policy must not depend on the listener's state");
    if (prior.size() != speaker_policy.own_states())
        throw DimensionError("listener_posterior: prior size does not match speaker states");
    if (speaker_action >= speaker_policy.actions()) throw ArgumentError("listener_posterior: action out of range");
    validate_belief(prior, "listener_posterior");
    Belief post(prior.size());
    for (std::size_t s = 0; s < prior.size(); ++s) post[s] = speaker_policy(s, 0, speaker_action) * prior[s];
    Real sum = 0.0;
    for (Real x : post) sum += x;
    if (!(sum > 0.0)) throw InconsistencyError("listener_posterior: observed action has zero likelihood");
    for (Real& x : post) x /= sum;
    return post;
}

// sum_{s1} pi2*(a | s1, s2) P(s1 | a1), with pi2* indexed (own = s2, partner = s1).
inline Vector listener_policy_exact(const FinitePolicy& centralized, std::span<const Real> posterior, std::size_t own_state) {
    // Same contraction as the speaker; the posterior already carries the
    // partner's action.
    if (posterior.size() != centralized.partner_states())
        throw DimensionError("listener_policy_exact: posterior size does not match partner states");
    return speaker_policy_exact(centralized, posterior, own_state);
}

struct InterdependenceStep {
    // pi1(a1 | s1, a2) and pi2(a2 | s2, a1).
    FinitePolicy policy1, policy2;
    // Largest TV distance to the previous iterate over all rows of both.
    Real change = 0.0;
};

struct InterdependenceTrace {
    std::vector<InterdependenceStep> steps;
    bool settled = false;
};

// Alternating substitution of the coupled pair
//   pi1(a1|s1,a2) ~ sum_{s2} pi1*(a1|s1,s2) pi2(a2|s2,a1) P(s2)
//   pi2(a2|s2,a1) ~ sum_{s1} pi2*(a2|s2,s1) pi1(a1|s1,a2) P(s1)
// started from the speaker policies. Both updates use the previous iterate.
// A row with zero mass falls back to the speaker row. Stops when the change
// drops to settle_tol or after cap iterations; no convergence is implied.
inline InterdependenceTrace interdependence_demo(const FinitePolicy& centralized1, const FinitePolicy& centralized2,
                                                 std::span<const Real> prior_on_s2, std::span<const Real> prior_on_s1,
                                                 int cap, Real settle_tol = 1e-12) {
    if (cap < 1) throw ArgumentError("interdependence_demo: cap must be >= 1");
    const std::size_t S1 = centralized1.own_states(), S2 = centralized2.own_states();
    const std::size_t A1 = centralized1.actions(), A2 = centralized2.actions();
    if (centralized1.partner_states() != S2 || centralized2.partner_states() != S1)
        throw DimensionError("interdependence_demo: state axes of the two policies disagree");
    if (prior_on_s2.size() != S2 || prior_on_s1.size() != S1)
        throw DimensionError("interdependence_demo: prior sizes do not match");

    std::vector<Vector> speak1(S1), speak2(S2);
    for (std::size_t s = 0; s < S1; ++s) speak1[s] = speaker_policy_exact(centralized1, prior_on_s2, s);
    for (std::size_t s = 0; s < S2; ++s) speak2[s] = speaker_policy_exact(centralized2, prior_on_s1, s);

    auto initial = [](const std::vector<Vector>& speak, std::size_t partner_actions, std::size_t actions) {
        Vector t;
        t.reserve(speak.size() * partner_actions * actions);
        for (const auto& r : speak)
            for (std::size_t b = 0; b < partner_actions; ++b) t.insert(t.end(), r.begin(), r.end());
        return FinitePolicy(speak.size(), partner_actions, actions, std::move(t));
    };

    // One side of the substitution: the "own" agent emulates pi_star against
    // the partner's current iterate.
    auto update = [](const FinitePolicy& pi_star, const FinitePolicy& partner_iter, std::span<const Real> prior,
                     const std::vector<Vector>& speak) {
        const std::size_t S = pi_star.own_states(), P = pi_star.partner_states(), A = pi_star.actions();
        const std::size_t B = partner_iter.actions();
        Vector t(S * B * A, 0.0);
        for (std::size_t s = 0; s < S; ++s)
            for (std::size_t b = 0; b < B; ++b) {
                Vector r(A, 0.0);
                Real mass = 0.0;
                for (std::size_t a = 0; a < A; ++a) {
                    for (std::size_t p = 0; p < P; ++p) r[a] += pi_star(s, p, a) * partner_iter(p, a, b) * prior[p];
                    mass += r[a];
                }
                if (mass > 0.0)
                    for (Real& x : r) x /= mass;
                else
                    r = speak[s];
                std::copy(r.begin(), r.end(), t.begin() + static_cast<std::ptrdiff_t>((s * B + b) * A));
            }
        return FinitePolicy(S, B, A, std::move(t));
    };

    auto row_change = [](const FinitePolicy& x, const FinitePolicy& y) {
        Real d = 0.0;
        for (std::size_t s = 0; s < x.own_states(); ++s)
            for (std::size_t b = 0; b < x.partner_states(); ++b) d = std::max(d, total_variation(x.row(s, b), y.row(s, b)));
        return d;
    };

    InterdependenceTrace trace;
    FinitePolicy p1 = initial(speak1, A2, A1), p2 = initial(speak2, A1, A2);
    for (int k = 0; k < cap; ++k) {
        FinitePolicy n1 = update(centralized1, p2, prior_on_s2, speak1);
        FinitePolicy n2 = update(centralized2, p1, prior_on_s1, speak2);
        const Real change = std::max(row_change(n1, p1), row_change(n2, p2));
        trace.steps.push_back({n1, n2, change});
        p1 = std::move(n1);
        p2 = std::move(n2);
        if (change <= settle_tol) {
            trace.settled = true;
            break;
        }
    }
    return trace;
}

} // namespace rolecomms::discrete
