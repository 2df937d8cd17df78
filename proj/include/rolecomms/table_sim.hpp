#pragma once

// Two-agent table-carrying game.
//
// Two point agents hold the ends of a rigid table (a segment of length 2r)
// and push it toward a goal through disc obstacles. Each agent sees only
// the obstacles it owns and learns about the rest either from explicit
// messages or by inverting its partner's commanded velocity while the
// partner is the speaker.

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "rolecomms/errors.hpp"
#include "rolecomms/numerics.hpp"
#include "rolecomms/potential_field.hpp"

namespace rolecomms::sim {

using field::Attractor;
using field::FieldParams;
using field::Obstacle;

inline constexpr std::size_t kAgents = 2;

// Agent 0 sits at center + r * axis, agent 1 at center - r * axis.
struct TableState {
    Vec2 center;
    Real heading = 0.0;
    Real half_length = 0.5;

    Vec2 axis() const noexcept { return {std::cos(heading), std::sin(heading)}; }
    Vec2 end(std::size_t agent) const noexcept {
        return agent == 0 ? center + half_length * axis() : center - half_length * axis();
    }
};

// The center moves with the mean of the two commanded velocities; the
// heading turns with the velocity of agent 0 relative to the center,
// projected across the table and divided by r. Using agent 1 gives the same
// rate because both its arm and its relative velocity flip sign.
inline Real table_angular_rate(const TableState& state, const Vec2& v_agent, const Vec2& v_center,
                               std::size_t agent = 0) {
    const Vec2 u = agent == 0 ? state.axis() : -state.axis();
    return cross(u, v_agent - v_center) / state.half_length;
}

inline TableState table_step(const TableState& state, const Vec2& v1, const Vec2& v2, Real dt) {
    if (!(dt > 0.0)) throw ArgumentError("table_step: dt must be positive");
    const Vec2 vc = 0.5 * (v1 + v2);
    const Real omega = table_angular_rate(state, v1, vc);
    TableState next = state;
    next.center += dt * vc;
    next.heading += dt * omega;
    return next;
}

// True iff some obstacle disc reaches the table segment.
inline bool table_collides(const TableState& state, std::span<const Obstacle> obstacles) {
    const Vec2 a = state.end(0), b = state.end(1);
    for (const auto& o : obstacles)
        if (point_segment_distance(o.center, a, b) < o.radius) return true;
    return false;
}

struct GeometryMode {
    enum class Kind { KnownRadius, UnknownRadius };
    Kind kind = Kind::KnownRadius;
    Real r_fixed = 0.5;
    Real r_min = 0.25;
    Real r_max = 0.75;

    static GeometryMode known(Real r) { return {Kind::KnownRadius, r, r, r}; }
    static GeometryMode unknown(Real lo, Real hi) { return {Kind::UnknownRadius, 0.5 * (lo + hi), lo, hi}; }

    // Radius a listener assigns to an inferred obstacle.
    Real nominal_radius() const noexcept { return kind == Kind::KnownRadius ? r_fixed : 0.5 * (r_min + r_max); }

    void validate() const {
        if (kind == Kind::KnownRadius && !(r_fixed > 0.0)) throw ArgumentError("GeometryMode: r_fixed must be positive");
        if (kind == Kind::UnknownRadius && !(r_min > 0.0 && r_min <= r_max))
            throw ArgumentError("GeometryMode: need 0 < r_min <= r_max");
    }
};

inline std::string_view to_string(GeometryMode::Kind k) {
    return k == GeometryMode::Kind::KnownRadius ? "known_radius" : "unknown_radius";
}

struct OwnedObstacle {
    Obstacle obstacle;
    std::size_t owner = 0;
};

struct Environment {
    std::vector<OwnedObstacle> obstacles;
    Vec2 start;
    Vec2 goal{10.0, 0.0};
    Real heading = 0.0;
    Real half_length = 0.5;
    GeometryMode geometry;
    std::uint64_t seed = 0;

    TableState initial_state() const { return {start, heading, half_length}; }

    // Both agents are drawn to the goal point itself; the pulls on the two
    // ends cancel exactly once the table center sits on the goal.
    Attractor attractor(std::size_t /*agent*/) const { return {goal}; }

    std::vector<Obstacle> all_obstacles() const {
        std::vector<Obstacle> out;
        out.reserve(obstacles.size());
        for (const auto& o : obstacles) out.push_back(o.obstacle);
        return out;
    }

    std::vector<Obstacle> owned_by(std::size_t agent) const {
        std::vector<Obstacle> out;
        for (const auto& o : obstacles)
            if (o.owner == agent) out.push_back(o.obstacle);
        return out;
    }
};

// FNV-1a over the bit patterns of every field; equal hashes mean the same
// environment on any platform.
inline std::uint64_t environment_hash(const Environment& env) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    auto mix_bytes = [&h](const void* p, std::size_t n) {
        const auto* b = static_cast<const unsigned char*>(p);
        for (std::size_t i = 0; i < n; ++i) {
            h ^= b[i];
            h *= 0x100000001b3ULL;
        }
    };
    auto mix = [&](Real v) { mix_bytes(&v, sizeof v); };
    mix(env.start.x), mix(env.start.y), mix(env.goal.x), mix(env.goal.y), mix(env.heading), mix(env.half_length);
    for (const auto& o : env.obstacles) {
        mix(o.obstacle.center.x), mix(o.obstacle.center.y), mix(o.obstacle.radius);
        const std::uint64_t owner = o.owner;
        mix_bytes(&owner, sizeof owner);
    }
    return h;
}

struct AgentBelief {
    std::vector<Obstacle> observed;
    std::optional<Obstacle> inferred;
    // Keyed by the sender's obstacle index, so repeated messages about one
    // obstacle refresh its entry instead of duplicating it.
    std::map<std::size_t, Obstacle> received;

    // Obstacles that shape this agent's velocity.
    std::vector<Obstacle> planning_set(bool use_inferred) const {
        std::vector<Obstacle> out = observed;
        for (const auto& [_, o] : received) out.push_back(o);
        if (use_inferred && inferred) out.push_back(*inferred);
        return out;
    }
};

struct Message {
    std::size_t index = 0;
    Obstacle obstacle;
};

// Closest observed obstacle by center distance; ties go to the lower index.
inline std::optional<Message> build_message(const AgentBelief& belief, const Vec2& own_pos) {
    std::optional<Message> best;
    Real best_dist = 0.0;
    for (std::size_t i = 0; i < belief.observed.size(); ++i) {
        const Real d = norm(belief.observed[i].center - own_pos);
        if (!best || d < best_dist) {
            best = Message{i, belief.observed[i]};
            best_dist = d;
        }
    }
    return best;
}

// x -> x + N(0, (cv |x|)^2) per component.
inline Vector corrupt(std::span<const Real> values, Real cv, Rng& rng) {
    if (!(cv >= 0.0)) throw ArgumentError("corrupt: cv must be non-negative");
    Vector out(values.begin(), values.end());
    for (Real& x : out) x = gaussian(rng, x, cv * std::abs(x));
    return out;
}

inline Vec2 corrupt(const Vec2& v, Real cv, Rng& rng) {
    const std::array<Real, 2> raw{v.x, v.y};
    const Vector out = corrupt(raw, cv, rng);
    return {out[0], out[1]};
}

struct InferenceResult {
    std::optional<Obstacle> obstacle;
    Real rho = 0.0;
    bool saturated = false;
};

struct InferenceSettings {
    // Residuals below this norm are read as "no obstacle".
    Real residual_eps = 1e-9;
    Real bisect_tol = 1e-10;
};

// Explain the partner's velocity as attraction plus one repulsive disc of
// the nominal radius. The residual fixes the direction; the distance comes
// from inverting the repulsive magnitude by bisection on (rho_min, rho0].
inline InferenceResult infer_obstacle_detailed(const Vec2& observed_partner_velocity, const Vec2& partner_pos,
                                               std::span<const Attractor> attractors, const FieldParams& params,
                                               Real nominal_radius, const InferenceSettings& settings = {}) {
    // Whatever attraction does not explain is the summed repulsive term.
    Vec2 residual = observed_partner_velocity / params.w_v;
    for (const auto& a : attractors) residual += field::attractive_grad(partner_pos, a, params);
    const Real mag = norm(residual);
    if (!(mag >= settings.residual_eps)) return {};

    const Real peak = field::repulsive_magnitude(params.rho_min, params.rho0, params.w_rep);
    InferenceResult out;
    if (mag >= peak) {
        out.rho = params.rho_min;
        out.saturated = true;
    } else {
        out.rho = bisect(
            [&](Real rho) { return field::repulsive_magnitude(rho, params.rho0, params.w_rep) - mag; },
            params.rho_min, params.rho0, settings.bisect_tol);
    }
    const Vec2 dir = residual / mag;
    out.obstacle = Obstacle{partner_pos - (out.rho + nominal_radius) * dir, nominal_radius};
    return out;
}

inline std::optional<Obstacle> infer_obstacle(const Vec2& observed_partner_velocity, const Vec2& partner_pos,
                                              std::span<const Attractor> attractors, const FieldParams& params,
                                              Real nominal_radius, const InferenceSettings& settings = {}) {
    return infer_obstacle_detailed(observed_partner_velocity, partner_pos, attractors, params, nominal_radius,
                                   settings)
        .obstacle;
}

struct CommStrategy {
    enum class Kind { Explicit, DynamicRoles, SpeakerListener, SpeakerSpeaker, Centralized };
    Kind kind = Kind::DynamicRoles;
    // Steps between sender swaps (Explicit) or role swaps (DynamicRoles).
    // Explicit with period 0 has both agents send every step.
    int period = 1;
    std::size_t initial_speaker = 0;
    Real noise_cv = 0.0;

    static CommStrategy explicit_every(int period, Real cv = 0.0, std::size_t first = 0) {
        return {Kind::Explicit, period, first, cv};
    }
    static CommStrategy dynamic_roles(int period, Real cv = 0.0, std::size_t first = 0) {
        return {Kind::DynamicRoles, period, first, cv};
    }
    static CommStrategy speaker_listener(std::size_t speaker = 0, Real cv = 0.0) {
        return {Kind::SpeakerListener, 0, speaker, cv};
    }
    static CommStrategy speaker_speaker() { return {Kind::SpeakerSpeaker, 0, 0, 0.0}; }
    static CommStrategy centralized() { return {Kind::Centralized, 0, 0, 0.0}; }

    void validate() const {
        if (!(noise_cv >= 0.0)) throw ArgumentError("CommStrategy: noise_cv must be non-negative");
        if (kind == Kind::Explicit && period < 0) throw ArgumentError("CommStrategy: explicit period must be >= 0");
        if (kind == Kind::DynamicRoles && period < 1) throw ArgumentError("CommStrategy: role period must be >= 1");
        if (initial_speaker >= kAgents) throw ArgumentError("CommStrategy: speaker index out of range");
    }

    friend bool operator==(const CommStrategy&, const CommStrategy&) = default;
};

inline std::string_view to_string(CommStrategy::Kind k) {
    switch (k) {
    case CommStrategy::Kind::Explicit: return "explicit";
    case CommStrategy::Kind::DynamicRoles: return "dynamic_roles";
    case CommStrategy::Kind::SpeakerListener: return "speaker_listener";
    case CommStrategy::Kind::SpeakerSpeaker: return "speaker_speaker";
    case CommStrategy::Kind::Centralized: return "centralized";
    }
    return "?";
}

inline CommStrategy::Kind parse_strategy_kind(std::string_view s) {
    using K = CommStrategy::Kind;
    for (K k : {K::Explicit, K::DynamicRoles, K::SpeakerListener, K::SpeakerSpeaker, K::Centralized})
        if (to_string(k) == s) return k;
    throw ArgumentError("unknown strategy '" + std::string(s) + "'");
}

// Sender/Receiver: periodic explicit messaging. The sender plans on its own
// observations only, mirroring a speaker; Explicit: both exchange every step.
enum class Role { Speaker, Listener, Sender, Receiver, Explicit, Central };

inline std::string_view to_string(Role r) {
    switch (r) {
    case Role::Speaker: return "speaker";
    case Role::Listener: return "listener";
    case Role::Sender: return "sender";
    case Role::Receiver: return "receiver";
    case Role::Explicit: return "explicit";
    case Role::Central: return "central";
    }
    return "?";
}

inline std::array<Role, kAgents> roles_at(const CommStrategy& s, int step) {
    using K = CommStrategy::Kind;
    switch (s.kind) {
    case K::Explicit: {
        if (s.period == 0) return {Role::Explicit, Role::Explicit};
        const std::size_t sender = (s.initial_speaker + static_cast<std::size_t>(step / s.period)) % kAgents;
        std::array<Role, kAgents> r{Role::Receiver, Role::Receiver};
        r[sender] = Role::Sender;
        return r;
    }
    case K::Centralized: return {Role::Central, Role::Central};
    case K::SpeakerSpeaker: return {Role::Speaker, Role::Speaker};
    case K::SpeakerListener: {
        std::array<Role, kAgents> r{Role::Listener, Role::Listener};
        r[s.initial_speaker] = Role::Speaker;
        return r;
    }
    case K::DynamicRoles: {
        const std::size_t speaker = (s.initial_speaker + static_cast<std::size_t>(step / s.period)) % kAgents;
        std::array<Role, kAgents> r{Role::Listener, Role::Listener};
        r[speaker] = Role::Speaker;
        return r;
    }
    }
    return {Role::Speaker, Role::Speaker};
}

struct SimLimits {
    int max_steps = 200;
    // Non-positive means "use the table half length".
    Real goal_eps = 0.0;
    Real dt = 1.0;

    void validate() const {
        if (max_steps < 1) throw ArgumentError("SimLimits: max_steps must be >= 1");
        if (!(dt > 0.0)) throw ArgumentError("SimLimits: dt must be positive");
    }
};

struct SimOptions {
    // Speakers ignore their inferred obstacle.
    bool strict_speaker = true;
    InferenceSettings inference;
    bool record_trajectory = false;
};

struct TrajectoryRecord {
    int step = 0;
    TableState state;
    Vec2 v1, v2;
    std::array<Role, kAgents> roles{};
    std::array<std::optional<Obstacle>, kAgents> inferred{};
};

enum class FailureKind { None, Collision, Timeout };

inline std::string_view to_string(FailureKind k) {
    switch (k) {
    case FailureKind::None: return "none";
    case FailureKind::Collision: return "collision";
    case FailureKind::Timeout: return "timeout";
    }
    return "?";
}

struct SimOutcome {
    bool success = false;
    int steps = 0;
    FailureKind failure_kind = FailureKind::None;
    std::vector<TrajectoryRecord> trajectory;
};

// Stream tag for the per-game noise generator.
inline constexpr std::uint64_t kNoiseStream = 0x6e6f697365ULL;

inline Message corrupt_message(const Message& m, const Vec2& sender_pos, Real cv, Rng& rng) {
    // On the wire: offset from the sender, then radius.
    const Vec2 offset = m.obstacle.center - sender_pos;
    const std::array<Real, 3> wire{offset.x, offset.y, m.obstacle.radius};
    const Vector noisy = corrupt(wire, cv, rng);
    return {m.index, Obstacle{sender_pos + Vec2{noisy[0], noisy[1]}, std::max(noisy[2], 0.0)}};
}

inline SimOutcome run_game(const Environment& env, const CommStrategy& strategy, const FieldParams& params,
                           const SimLimits& limits, std::uint64_t seed, const SimOptions& options = {}) {
    params.validate();
    limits.validate();
    strategy.validate();
    if (!(env.half_length > 0.0)) throw ArgumentError("run_game: table half length must be positive");

    using K = CommStrategy::Kind;
    Rng noise(derive_seed(seed, kNoiseStream));
    const Real goal_eps = limits.goal_eps > 0.0 ? limits.goal_eps : env.half_length;
    const Real nominal_radius = env.geometry.nominal_radius();
    const std::vector<Obstacle> truth = env.all_obstacles();

    std::array<AgentBelief, kAgents> belief;
    std::array<std::vector<Attractor>, kAgents> attractors;
    for (std::size_t i = 0; i < kAgents; ++i) {
        belief[i].observed = strategy.kind == K::Centralized ? truth : env.owned_by(i);
        attractors[i] = {env.attractor(i)};
    }

    TableState state = env.initial_state();
    SimOutcome outcome;
    for (int step = 0; step < limits.max_steps; ++step) {
        const std::array<Vec2, kAgents> q{state.end(0), state.end(1)};
        const auto roles = roles_at(strategy, step);

        if (strategy.kind == K::Explicit) {
            for (std::size_t i = 0; i < kAgents; ++i) {
                if (roles[i] == Role::Receiver) continue;
                if (auto m = build_message(belief[i], q[i])) {
                    const Message noisy = corrupt_message(*m, q[i], strategy.noise_cv, noise);
                    belief[1 - i].received[noisy.index] = noisy.obstacle;
                }
            }
        }

        std::array<Vec2, kAgents> v{};
        for (std::size_t i = 0; i < kAgents; ++i) {
            if (roles[i] == Role::Listener) continue;
            const auto set = roles[i] == Role::Sender ? belief[i].observed
                                                      : belief[i].planning_set(!options.strict_speaker);
            v[i] = field::agent_velocity(q[i], attractors[i], set, params);
        }
        for (std::size_t i = 0; i < kAgents; ++i) {
            if (roles[i] != Role::Listener) continue;
            const std::size_t partner = 1 - i;
            const Vec2 seen = corrupt(v[partner], strategy.noise_cv, noise);
            if (auto o = infer_obstacle(seen, q[partner], attractors[partner], params, nominal_radius, options.inference))
                belief[i].inferred = *o;
            v[i] = field::agent_velocity(q[i], attractors[i], belief[i].planning_set(true), params);
        }

        if (options.record_trajectory)
            outcome.trajectory.push_back({step, state, v[0], v[1], roles, {belief[0].inferred, belief[1].inferred}});

        state = table_step(state, v[0], v[1], limits.dt);
        outcome.steps = step + 1;
        if (table_collides(state, truth)) {
            outcome.failure_kind = FailureKind::Collision;
            break;
        }
        if (norm(state.center - env.goal) <= goal_eps) {
            outcome.success = true;
            break;
        }
    }
    if (!outcome.success && outcome.failure_kind == FailureKind::None) outcome.failure_kind = FailureKind::Timeout;
    if (options.record_trajectory) {
        // Final pose, with the commands left empty.
        TrajectoryRecord last{outcome.steps, state, {}, {}, roles_at(strategy, outcome.steps), {belief[0].inferred, belief[1].inferred}};
        outcome.trajectory.push_back(last);
    }
    return outcome;
}

struct WorkspaceBounds {
    Vec2 start{0.0, 0.0};
    Vec2 goal{10.0, 0.0};
    // Table heading; the default holds the table across the direction of travel.
    Real heading = 1.5707963267948966;
    Real half_length = 0.5;
    // Obstacle centers are drawn this far either side of the start-goal line...
    Real corridor_half_width = 2.0;
    // ...and along it, excluding this margin at each end.
    Real end_margin = 0.0;
    // Obstacle discs keep this clearance from the start and goal table poses.
    Real clearance = 1.0;
    int retry_cap = 1000;
};

inline Environment generate_environment(std::uint64_t seed, std::size_t n, const GeometryMode& geometry,
                                        const WorkspaceBounds& bounds) {
    geometry.validate();
    Environment env;
    env.start = bounds.start;
    env.goal = bounds.goal;
    env.heading = bounds.heading;
    env.half_length = bounds.half_length;
    env.geometry = geometry;
    env.seed = seed;

    const Vec2 along = bounds.goal - bounds.start;
    const Real length = norm(along);
    if (!(length > 0.0)) throw ArgumentError("generate_environment: start and goal coincide");
    const Vec2 ux = along / length;
    const Vec2 uy{-ux.y, ux.x};
    const TableState start_pose{bounds.start, bounds.heading, bounds.half_length};
    const TableState goal_pose{bounds.goal, bounds.heading, bounds.half_length};

    Rng rng(seed);
    for (std::size_t k = 0; k < n; ++k) {
        const Real radius = geometry.kind == GeometryMode::Kind::KnownRadius ? geometry.r_fixed
                                                                             : rng.uniform(geometry.r_min, geometry.r_max);
        bool placed = false;
        for (int attempt = 0; attempt < bounds.retry_cap && !placed; ++attempt) {
            const Real s = rng.uniform(bounds.end_margin, length - bounds.end_margin);
            const Real t = rng.uniform(-bounds.corridor_half_width, bounds.corridor_half_width);
            const Vec2 c = bounds.start + s * ux + t * uy;
            const Real need = radius + bounds.clearance;
            const bool clear = point_segment_distance(c, start_pose.end(0), start_pose.end(1)) >= need &&
                               point_segment_distance(c, goal_pose.end(0), goal_pose.end(1)) >= need;
            if (clear) {
                env.obstacles.push_back({Obstacle{c, radius}, k % kAgents});
                placed = true;
            }
        }
        if (!placed) throw GenerationError("generate_environment: retry cap exhausted for seed " + std::to_string(seed));
    }
    return env;
}

// Flat CSV trajectory. Column order is part of the file format.
inline constexpr std::string_view kTrajectoryHeader =
    "step,cx,cy,theta,v1x,v1y,v2x,v2y,role1,role2,inf1_x,inf1_y,inf1_r,inf2_x,inf2_y,inf2_r";

// A leading "# seed=..." line is written when a seed is given.
inline void write_trajectory_csv(std::ostream& os, std::span<const TrajectoryRecord> rows,
                                 std::optional<std::uint64_t> seed = std::nullopt) {
    const auto old_precision = os.precision(17);
    if (seed) os << "# seed=" << *seed << '\n';
    os << kTrajectoryHeader << '\n';
    for (const auto& r : rows) {
        os << r.step << ',' << r.state.center.x << ',' << r.state.center.y << ',' << r.state.heading << ','
           << r.v1.x << ',' << r.v1.y << ',' << r.v2.x << ',' << r.v2.y << ',' << to_string(r.roles[0]) << ','
           << to_string(r.roles[1]);
        for (const auto& inf : r.inferred) {
            if (inf)
                os << ',' << inf->center.x << ',' << inf->center.y << ',' << inf->radius;
            else
                os << ",,,";
        }
        os << '\n';
    }
    os.precision(old_precision);
}

} // namespace rolecomms::sim
