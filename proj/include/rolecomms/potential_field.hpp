#pragma once

// Artificial potential-field planner: unit-magnitude attraction to goal
// points, short-range repulsion from disc obstacles, and the agent
// velocity law.
//
// repulsive_grad returns the term w_rep (1/rho - 1/rho0)(1/rho) n, where n
// is the unit vector from the obstacle center to q, so it points away from
// the obstacle. The true gradient of a repulsive potential points the other
// way; the velocity law accounts for that:
//
//   v = -w_v * (sum attractive_grad - sum repulsive_grad)

#include <cmath>
#include <limits>
#include <span>
#include <vector>

#include "rolecomms/errors.hpp"
#include "rolecomms/numerics.hpp"

namespace rolecomms::field {

struct FieldParams {
    Real w_att = 1.0;
    Real w_rep = 1.0;
    Real w_v = 1.0;
    Real rho0 = 2.0;
    // Speed limit on the commanded velocity; infinity disables the clamp.
    Real v_max = std::numeric_limits<Real>::infinity();
    // Floor on the boundary distance; the repulsive magnitude diverges at 0.
    Real rho_min = 1e-3;
    // Attraction is zeroed this close to the attractor.
    Real eps_sing = 1e-6;

    void validate() const {
        if (!(w_att > 0.0) || !(w_rep > 0.0) || !(w_v > 0.0) || !(rho0 > 0.0))
            throw ArgumentError("FieldParams: w_att, w_rep, w_v and rho0 must be positive");
        if (!(v_max > 0.0)) throw ArgumentError("FieldParams: v_max must be positive");
        if (!(rho_min > 0.0) || !(rho_min < rho0)) throw ArgumentError("FieldParams: need 0 < rho_min < rho0");
        if (!(eps_sing >= 0.0)) throw ArgumentError("FieldParams: eps_sing must be non-negative");
    }
};

struct Obstacle {
    Vec2 center;
    Real radius = 0.0;

    friend bool operator==(const Obstacle&, const Obstacle&) = default;
};

struct Attractor {
    Vec2 location;
};

// Distance from q to the obstacle boundary, floored at rho_min.
inline Real boundary_distance(const Vec2& q, const Obstacle& obs, const FieldParams& params) {
    return std::max(norm(q - obs.center) - obs.radius, params.rho_min);
}

inline Vec2 attractive_grad(const Vec2& q, const Attractor& attractor, Real w_att, Real eps_sing = 1e-6) {
    const Vec2 d = q - attractor.location;
    const Real dist = norm(d);
    if (dist < eps_sing) return {};
    return d * (w_att / dist);
}

inline Vec2 attractive_grad(const Vec2& q, const Attractor& attractor, const FieldParams& params) {
    return attractive_grad(q, attractor, params.w_att, params.eps_sing);
}

// Magnitude of the repulsive gradient at boundary distance rho (rho <= rho0).
// Strictly decreasing on (0, rho0], zero at rho0.
inline Real repulsive_magnitude(Real rho, Real rho0, Real w_rep) noexcept {
    return w_rep * (1.0 / rho - 1.0 / rho0) * (1.0 / rho);
}

inline Vec2 repulsive_grad(const Vec2& q, const Obstacle& obs, const FieldParams& params) {
    const Real rho = boundary_distance(q, obs, params);
    if (rho > params.rho0) return {};
    const Vec2 d = q - obs.center;
    const Real dist = norm(d);
    // Direction is undefined at the center itself.
    if (dist == 0.0) return {};
    return d * (repulsive_magnitude(rho, params.rho0, params.w_rep) / dist);
}

inline Vec2 clamp_speed(const Vec2& v, Real v_max) {
    const Real speed = norm(v);
    if (speed <= v_max) return v;
    return v * (v_max / speed);
}

// Descent direction of the combined field, before the speed clamp.
inline Vec2 field_velocity(const Vec2& q, std::span<const Attractor> attractors,
                           std::span<const Obstacle> obstacles, const FieldParams& params) {
    Vec2 grad;
    for (const auto& a : attractors) grad += attractive_grad(q, a, params);
    for (const auto& o : obstacles) grad -= repulsive_grad(q, o, params);
    return -params.w_v * grad;
}

inline Vec2 agent_velocity(const Vec2& q, std::span<const Attractor> attractors,
                           std::span<const Obstacle> obstacles, const FieldParams& params) {
    if (attractors.empty()) throw ArgumentError("agent_velocity: at least one attractor required");
    return clamp_speed(field_velocity(q, attractors, obstacles, params), params.v_max);
}

} // namespace rolecomms::field
