#pragma once

// JSON config, system and environment files. Unknown keys are rejected
// everywhere.

#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "rolecomms/bench.hpp"
#include "rolecomms/errors.hpp"
#include "rolecomms/linear_roles.hpp"
#include "rolecomms/table_sim.hpp"

namespace rolecomms::config {

using json = nlohmann::ordered_json;

inline json load_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open '" + path + "'");
    try {
        return json::parse(in);
    } catch (const json::exception& e) {
        throw ConfigError("'" + path + "': " + e.what());
    }
}

inline void require_object(const json& j, const std::string& where) {
    if (!j.is_object()) throw ConfigError(where + ": expected an object");
}

inline void check_keys(const json& j, std::initializer_list<std::string_view> allowed, const std::string& where) {
    require_object(j, where);
    for (const auto& [k, _] : j.items()) {
        bool ok = false;
        for (auto a : allowed) ok = ok || a == k;
        if (!ok) throw ConfigError(where + ": unknown key '" + k + "'");
    }
}

inline Real get_real(const json& j, const char* key, Real fallback, const std::string& where) {
    if (!j.contains(key)) return fallback;
    const auto& v = j.at(key);
    // null stands for infinity (JSON has no inf literal)
    if (v.is_null()) return std::numeric_limits<Real>::infinity();
    if (!v.is_number()) throw ConfigError(where + "." + key + ": expected a number");
    return v.get<Real>();
}

inline long long get_int(const json& j, const char* key, long long fallback, const std::string& where) {
    if (!j.contains(key)) return fallback;
    const auto& v = j.at(key);
    if (!v.is_number_integer()) throw ConfigError(where + "." + key + ": expected an integer");
    return v.get<long long>();
}

inline bool get_bool(const json& j, const char* key, bool fallback, const std::string& where) {
    if (!j.contains(key)) return fallback;
    const auto& v = j.at(key);
    if (!v.is_boolean()) throw ConfigError(where + "." + key + ": expected true or false");
    return v.get<bool>();
}

inline std::string get_string(const json& j, const char* key, const std::string& fallback, const std::string& where) {
    if (!j.contains(key)) return fallback;
    const auto& v = j.at(key);
    if (!v.is_string()) throw ConfigError(where + "." + key + ": expected a string");
    return v.get<std::string>();
}

inline Vec2 get_vec2(const json& j, const char* key, Vec2 fallback, const std::string& where) {
    if (!j.contains(key)) return fallback;
    const auto& v = j.at(key);
    if (!v.is_array() || v.size() != 2 || !v[0].is_number() || !v[1].is_number())
        throw ConfigError(where + "." + key + ": expected [x, y]");
    return {v[0].get<Real>(), v[1].get<Real>()};
}

inline field::FieldParams parse_field(const json& j, field::FieldParams p = {}) {
    const std::string w = "field";
    check_keys(j, {"w_att", "w_rep", "w_v", "rho0", "v_max", "rho_min", "eps_sing"}, w);
    p.w_att = get_real(j, "w_att", p.w_att, w);
    p.w_rep = get_real(j, "w_rep", p.w_rep, w);
    p.w_v = get_real(j, "w_v", p.w_v, w);
    p.rho0 = get_real(j, "rho0", p.rho0, w);
    p.v_max = get_real(j, "v_max", p.v_max, w);
    p.rho_min = get_real(j, "rho_min", p.rho_min, w);
    p.eps_sing = get_real(j, "eps_sing", p.eps_sing, w);
    return p;
}

inline sim::SimLimits parse_limits(const json& j, sim::SimLimits l = {}) {
    const std::string w = "limits";
    check_keys(j, {"max_steps", "goal_eps", "dt"}, w);
    l.max_steps = static_cast<int>(get_int(j, "max_steps", l.max_steps, w));
    l.goal_eps = get_real(j, "goal_eps", l.goal_eps, w);
    l.dt = get_real(j, "dt", l.dt, w);
    return l;
}

inline sim::WorkspaceBounds parse_workspace(const json& j, sim::WorkspaceBounds b = {}) {
    const std::string w = "workspace";
    check_keys(j, {"start", "goal", "heading", "half_length", "corridor_half_width", "end_margin", "clearance", "retry_cap"},
               w);
    b.start = get_vec2(j, "start", b.start, w);
    b.goal = get_vec2(j, "goal", b.goal, w);
    b.heading = get_real(j, "heading", b.heading, w);
    b.half_length = get_real(j, "half_length", b.half_length, w);
    b.corridor_half_width = get_real(j, "corridor_half_width", b.corridor_half_width, w);
    b.end_margin = get_real(j, "end_margin", b.end_margin, w);
    b.clearance = get_real(j, "clearance", b.clearance, w);
    b.retry_cap = static_cast<int>(get_int(j, "retry_cap", b.retry_cap, w));
    if (!(b.half_length > 0.0) || !(b.corridor_half_width >= 0.0) || !(b.clearance >= 0.0) || b.retry_cap < 1)
        throw ConfigError("workspace: invalid bounds");
    return b;
}

inline sim::SimOptions parse_options(const json& j, sim::SimOptions o = {}) {
    const std::string w = "options";
    check_keys(j, {"strict_speaker", "residual_eps", "bisect_tol"}, w);
    o.strict_speaker = get_bool(j, "strict_speaker", o.strict_speaker, w);
    o.inference.residual_eps = get_real(j, "residual_eps", o.inference.residual_eps, w);
    o.inference.bisect_tol = get_real(j, "bisect_tol", o.inference.bisect_tol, w);
    return o;
}

struct GeometryDefaults {
    Real known_radius = 0.5;
    Real r_min = 0.25, r_max = 0.75;

    sim::GeometryMode make(const std::string& name) const {
        if (name == "known") return sim::GeometryMode::known(known_radius);
        if (name == "unknown") return sim::GeometryMode::unknown(r_min, r_max);
        throw ConfigError("geometry must be 'known' or 'unknown', got '" + name + "'");
    }
};

inline GeometryDefaults parse_geometry(const json& j, GeometryDefaults g = {}) {
    const std::string w = "geometry";
    check_keys(j, {"known_radius", "radius_range"}, w);
    g.known_radius = get_real(j, "known_radius", g.known_radius, w);
    const Vec2 range = get_vec2(j, "radius_range", {g.r_min, g.r_max}, w);
    g.r_min = range.x;
    g.r_max = range.y;
    return g;
}

// Labels as produced by Condition::strategy_label: explicit_T<k>,
// dynamic_T<k>, speaker_listener, speaker_speaker, centralized, with an
// optional _s1 suffix for agent 1 starting as speaker/sender.
inline sim::CommStrategy parse_strategy_label(std::string label, Real cv = 0.0) {
    using sim::CommStrategy;
    std::size_t first = 0;
    if (label.size() > 3 && label.compare(label.size() - 3, 3, "_s1") == 0) {
        first = 1;
        label.resize(label.size() - 3);
    } else if (label.size() > 3 && label.compare(label.size() - 3, 3, "_s0") == 0) {
        label.resize(label.size() - 3);
    }
    auto period_after = [&](std::string_view prefix) -> std::optional<int> {
        if (label.rfind(prefix, 0) != 0) return std::nullopt;
        const std::string digits = label.substr(prefix.size());
        if (digits.empty() || digits.find_first_not_of("0123456789") != std::string::npos)
            throw ConfigError("bad period in strategy '" + label + "'");
        return std::stoi(digits);
    };
    CommStrategy s;
    if (auto T = period_after("explicit_T"))
        s = CommStrategy::explicit_every(*T, cv, first);
    else if (auto T2 = period_after("dynamic_T"))
        s = CommStrategy::dynamic_roles(*T2, cv, first);
    else if (label == "speaker_listener")
        s = CommStrategy::speaker_listener(first, cv);
    else if (label == "speaker_speaker")
        s = {CommStrategy::Kind::SpeakerSpeaker, 0, 0, cv};
    else if (label == "centralized")
        s = {CommStrategy::Kind::Centralized, 0, 0, cv};
    else
        throw ConfigError("unknown strategy '" + label + "'");
    try {
        s.validate();
    } catch (const ArgumentError& e) {
        throw ConfigError(e.what());
    }
    return s;
}

inline bench::TrendAssert parse_assert(const json& j, std::size_t index) {
    using K = bench::TrendAssert::Kind;
    const std::string w = "assert[" + std::to_string(index) + "]";
    check_keys(j, {"name", "kind", "chain", "upper", "lower", "strategy", "max_gap", "value", "alpha", "two_sided", "n", "cv"},
               w);
    bench::TrendAssert a;
    const std::string kind = get_string(j, "kind", "", w);
    if (kind == "ordered")
        a.kind = K::Ordered;
    else if (kind == "gap")
        a.kind = K::Gap;
    else if (kind == "at_least")
        a.kind = K::AtLeast;
    else if (kind == "monotone_in_n")
        a.kind = K::MonotoneInN;
    else if (kind == "monotone_in_cv")
        a.kind = K::MonotoneInCv;
    else if (kind == "longest_failures")
        a.kind = K::LongestFailures;
    else
        throw ConfigError(w + ": unknown kind '" + kind + "'");
    a.name = get_string(j, "name", kind, w);
    if (j.contains("chain")) {
        if (!j.at("chain").is_array()) throw ConfigError(w + ".chain: expected an array of strategy labels");
        for (const auto& c : j.at("chain")) {
            if (!c.is_string()) throw ConfigError(w + ".chain: expected strategy labels");
            a.chain.push_back(c.get<std::string>());
        }
    }
    a.upper = get_string(j, "upper", "", w);
    a.lower = get_string(j, "lower", "", w);
    a.strategy = get_string(j, "strategy", "", w);
    a.max_gap = get_real(j, "max_gap", 0.0, w);
    a.value = get_real(j, "value", 0.0, w);
    a.alpha = get_real(j, "alpha", 0.05, w);
    a.two_sided = get_bool(j, "two_sided", false, w);
    if (j.contains("n")) a.n = static_cast<int>(get_int(j, "n", 0, w));
    if (j.contains("cv")) a.cv = get_real(j, "cv", 0.0, w);
    switch (a.kind) {
    case K::Ordered:
        if (a.chain.size() < 2) throw ConfigError(w + ": ordered needs a chain of at least two strategies");
        break;
    case K::Gap:
        if (a.upper.empty() || a.lower.empty()) throw ConfigError(w + ": gap needs upper and lower");
        break;
    case K::AtLeast:
    case K::LongestFailures:
        if (a.strategy.empty()) throw ConfigError(w + ": strategy required");
        break;
    default: break;
    }
    return a;
}

struct RunConfig {
    bench::BenchmarkConfig bench;
    GeometryDefaults geometry;
    std::vector<bench::TrendAssert> asserts;
};

inline std::vector<int> int_list(const json& j, const char* key, const std::string& where) {
    std::vector<int> out;
    if (!j.contains(key)) throw ConfigError(where + ": missing '" + key + "'");
    const auto& v = j.at(key);
    if (v.is_number_integer()) return {v.get<int>()};
    if (!v.is_array()) throw ConfigError(where + "." + key + ": expected an integer or a list");
    for (const auto& x : v) {
        if (!x.is_number_integer()) throw ConfigError(where + "." + key + ": expected integers");
        out.push_back(x.get<int>());
    }
    return out;
}

inline std::vector<Real> real_list(const json& j, const char* key, std::vector<Real> fallback, const std::string& where) {
    if (!j.contains(key)) return fallback;
    const auto& v = j.at(key);
    if (v.is_number()) return {v.get<Real>()};
    if (!v.is_array()) throw ConfigError(where + "." + key + ": expected a number or a list");
    std::vector<Real> out;
    for (const auto& x : v) {
        if (!x.is_number()) throw ConfigError(where + "." + key + ": expected numbers");
        out.push_back(x.get<Real>());
    }
    return out;
}

inline bench::Condition parse_condition(const json& j, const GeometryDefaults& g, const std::string& where) {
    check_keys(j, {"strategy", "n", "cv", "geometry"}, where);
    bench::Condition c;
    c.strategy = parse_strategy_label(get_string(j, "strategy", "", where), get_real(j, "cv", 0.0, where));
    c.n = static_cast<int>(get_int(j, "n", 0, where));
    c.geometry = g.make(get_string(j, "geometry", "known", where));
    return c;
}

// Grid block: every strategy x n x cv, with one geometry.
inline std::vector<bench::Condition> expand_grid(const json& j, const GeometryDefaults& g, const std::string& where) {
    check_keys(j, {"strategies", "n", "cv", "geometry"}, where);
    if (!j.contains("strategies") || !j.at("strategies").is_array() || j.at("strategies").empty())
        throw ConfigError(where + ".strategies: expected a nonempty list of labels");
    const auto ns = int_list(j, "n", where);
    const auto cvs = real_list(j, "cv", {0.0}, where);
    const auto geom = g.make(get_string(j, "geometry", "known", where));
    std::vector<bench::Condition> out;
    for (int n : ns)
        for (Real cv : cvs)
            for (const auto& s : j.at("strategies")) {
                if (!s.is_string()) throw ConfigError(where + ".strategies: expected labels");
                out.push_back({parse_strategy_label(s.get<std::string>(), cv), n, geom});
            }
    return out;
}

// Parses without checking that conditions exist (simulate only needs the
// field, limits and workspace).
inline RunConfig parse_run_config_base(const json& j) {
    check_keys(j,
               {"format_version", "seed", "games", "field", "limits", "workspace", "options", "geometry", "grid",
                "conditions", "assert", "description"},
               "config");
    const std::string w = "config";
    if (j.contains("format_version") && get_int(j, "format_version", 0, w) != bench::kFormatVersion)
        throw ConfigError("config: unsupported format_version");
    RunConfig rc;
    auto& b = rc.bench;
    const long long seed = get_int(j, "seed", static_cast<long long>(b.base_seed), w);
    if (seed < 0) throw ConfigError("config.seed: must be non-negative");
    b.base_seed = static_cast<std::uint64_t>(seed);
    b.games = static_cast<int>(get_int(j, "games", b.games, w));
    if (j.contains("field")) b.field = parse_field(j.at("field"), b.field);
    if (j.contains("limits")) b.limits = parse_limits(j.at("limits"), b.limits);
    if (j.contains("workspace")) b.workspace = parse_workspace(j.at("workspace"), b.workspace);
    if (j.contains("options")) b.options = parse_options(j.at("options"), b.options);
    if (j.contains("geometry")) rc.geometry = parse_geometry(j.at("geometry"), rc.geometry);
    if (j.contains("grid")) {
        const auto& grid = j.at("grid");
        if (!grid.is_array()) throw ConfigError("config.grid: expected a list of blocks");
        for (std::size_t i = 0; i < grid.size(); ++i) {
            auto block = expand_grid(grid[i], rc.geometry, "grid[" + std::to_string(i) + "]");
            b.conditions.insert(b.conditions.end(), block.begin(), block.end());
        }
    }
    if (j.contains("conditions")) {
        const auto& cs = j.at("conditions");
        if (!cs.is_array()) throw ConfigError("config.conditions: expected a list");
        for (std::size_t i = 0; i < cs.size(); ++i)
            b.conditions.push_back(parse_condition(cs[i], rc.geometry, "conditions[" + std::to_string(i) + "]"));
    }
    if (j.contains("assert")) {
        const auto& as = j.at("assert");
        if (!as.is_array()) throw ConfigError("config.assert: expected a list");
        for (std::size_t i = 0; i < as.size(); ++i) rc.asserts.push_back(parse_assert(as[i], i));
    }
    return rc;
}

inline RunConfig parse_run_config(const json& j) {
    RunConfig rc = parse_run_config_base(j);
    rc.bench.validate();
    return rc;
}

// Scalar and pair keys that can also be given as --<path> flags.
struct ConfigKey {
    enum class Type { Int, Real, Bool, Pair };
    const char* path;
    Type type;
    const char* help;
};

inline const std::vector<ConfigKey>& config_keys() {
    using T = ConfigKey::Type;
    static const std::vector<ConfigKey> keys{
        {"games", T::Int, "games per condition"},
        {"field.w_att", T::Real, "attraction weight"},
        {"field.w_rep", T::Real, "repulsion weight"},
        {"field.w_v", T::Real, "velocity gain"},
        {"field.rho0", T::Real, "repulsion range"},
        {"field.v_max", T::Real, "speed limit"},
        {"field.rho_min", T::Real, "boundary distance floor"},
        {"field.eps_sing", T::Real, "attraction dead zone"},
        {"limits.max_steps", T::Int, "step cap per game"},
        {"limits.goal_eps", T::Real, "goal tolerance (<=0: table half length)"},
        {"limits.dt", T::Real, "time step"},
        {"workspace.start", T::Pair, "table start center x y"},
        {"workspace.goal", T::Pair, "goal x y"},
        {"workspace.heading", T::Real, "initial table heading"},
        {"workspace.half_length", T::Real, "table half length"},
        {"workspace.corridor_half_width", T::Real, "obstacle corridor half width"},
        {"workspace.end_margin", T::Real, "obstacle-free margin at corridor ends"},
        {"workspace.clearance", T::Real, "obstacle clearance from start and goal poses"},
        {"workspace.retry_cap", T::Int, "placement attempts per obstacle"},
        {"options.strict_speaker", T::Bool, "speakers ignore their inferred obstacle"},
        {"options.residual_eps", T::Real, "residual below which nothing is inferred"},
        {"options.bisect_tol", T::Real, "inference bisection tolerance"},
        {"geometry.known_radius", T::Real, "obstacle radius in known mode"},
        {"geometry.radius_range", T::Pair, "radius range in unknown mode"},
    };
    return keys;
}

inline void set_path(json& j, std::string_view path, json value) {
    json* node = &j;
    while (true) {
        const auto dot = path.find('.');
        const std::string head(path.substr(0, dot));
        if (dot == std::string_view::npos) {
            (*node)[head] = std::move(value);
            return;
        }
        if (!node->contains(head)) (*node)[head] = json::object();
        node = &(*node)[head];
        path = path.substr(dot + 1);
    }
}

// Environment file: start, goal, heading, half_length, geometry, obstacles.
inline sim::Environment parse_environment(const json& j) {
    const std::string w = "env";
    check_keys(j, {"format_version", "seed", "start", "goal", "heading", "half_length", "geometry", "obstacles",
                   "description"},
               w);
    sim::Environment env;
    const long long seed = get_int(j, "seed", 0, w);
    if (seed < 0) throw ConfigError("env.seed: must be non-negative");
    env.seed = static_cast<std::uint64_t>(seed);
    env.start = get_vec2(j, "start", env.start, w);
    env.goal = get_vec2(j, "goal", env.goal, w);
    env.heading = get_real(j, "heading", env.heading, w);
    env.half_length = get_real(j, "half_length", env.half_length, w);
    if (!(env.half_length > 0.0)) throw ConfigError("env.half_length: must be positive");
    GeometryDefaults g;
    std::string mode = "known";
    if (j.contains("geometry")) {
        const auto& gj = j.at("geometry");
        check_keys(gj, {"mode", "known_radius", "radius_range"}, "env.geometry");
        mode = get_string(gj, "mode", mode, "env.geometry");
        json rest = gj;
        rest.erase("mode");
        g = parse_geometry(rest, g);
    }
    env.geometry = g.make(mode);
    if (j.contains("obstacles")) {
        const auto& os = j.at("obstacles");
        if (!os.is_array()) throw ConfigError("env.obstacles: expected a list");
        for (std::size_t i = 0; i < os.size(); ++i) {
            const std::string wi = "env.obstacles[" + std::to_string(i) + "]";
            check_keys(os[i], {"center", "radius", "owner"}, wi);
            sim::OwnedObstacle o;
            o.obstacle.center = get_vec2(os[i], "center", {}, wi);
            o.obstacle.radius = get_real(os[i], "radius", env.geometry.nominal_radius(), wi);
            const long long owner = get_int(os[i], "owner", static_cast<long long>(i % sim::kAgents), wi);
            if (owner < 0 || owner >= static_cast<long long>(sim::kAgents)) throw ConfigError(wi + ".owner: must be 0 or 1");
            if (!(o.obstacle.radius > 0.0)) throw ConfigError(wi + ".radius: must be positive");
            o.owner = static_cast<std::size_t>(owner);
            env.obstacles.push_back(o);
        }
    }
    return env;
}

inline json to_json(const sim::Environment& env) {
    json j;
    j["format_version"] = bench::kFormatVersion;
    j["seed"] = env.seed;
    j["start"] = {env.start.x, env.start.y};
    j["goal"] = {env.goal.x, env.goal.y};
    j["heading"] = env.heading;
    j["half_length"] = env.half_length;
    if (env.geometry.kind == sim::GeometryMode::Kind::KnownRadius)
        j["geometry"] = {{"mode", "known"}, {"known_radius", env.geometry.r_fixed}};
    else
        j["geometry"] = {{"mode", "unknown"}, {"radius_range", {env.geometry.r_min, env.geometry.r_max}}};
    json os = json::array();
    for (const auto& o : env.obstacles)
        os.push_back({{"center", {o.obstacle.center.x, o.obstacle.center.y}}, {"radius", o.obstacle.radius}, {"owner", o.owner}});
    j["obstacles"] = std::move(os);
    return j;
}

inline SmallMatrix parse_matrix(const json& j, const std::string& where) {
    if (!j.is_array() || j.empty()) throw ConfigError(where + ": expected a nonempty list of rows");
    const std::size_t rows = j.size();
    const std::size_t cols = j[0].is_array() ? j[0].size() : 0;
    if (cols == 0) throw ConfigError(where + ": rows must be nonempty lists");
    Vector data;
    for (const auto& r : j) {
        if (!r.is_array() || r.size() != cols) throw ConfigError(where + ": ragged rows");
        for (const auto& x : r) {
            if (!x.is_number()) throw ConfigError(where + ": entries must be numbers");
            data.push_back(x.get<Real>());
        }
    }
    return SmallMatrix(rows, cols, std::move(data));
}

// Linear team description for `analyze`.
struct SystemFile {
    linear::TeamLinearSystem sys = linear::shear_plant();
    std::string allocation = "speaker_listener";
    std::size_t speaker = 0;
    Vector s0;
    Real horizon = 1.0;
    Vector dts;
    std::optional<SmallMatrix> G;
    std::optional<std::pair<Real, Real>> sigma;
    // Speaker's prior variance on the partner state; no default.
    std::optional<Real> sigma_s2sq;
};

inline SystemFile parse_system(const json& j) {
    const std::string w = "system";
    check_keys(j, {"format_version", "A", "B", "K", "W", "allocation", "speaker", "s0", "horizon", "dt", "G", "sigma",
                   "sigma_s2sq", "description"},
               w);
    SystemFile f;
    if (!j.contains("A") || !j.contains("B") || !j.contains("K")) throw ConfigError("system: A, B and K are required");
    f.sys.A = parse_matrix(j.at("A"), "system.A");
    f.sys.B = parse_matrix(j.at("B"), "system.B");
    f.sys.Kstar = parse_matrix(j.at("K"), "system.K");
    const std::size_t n = f.sys.A.rows();
    f.sys.W = real_list(j, "W", Vector(n, 1.0), w);
    try {
        f.sys.validate();
    } catch (const ArgumentError& e) {
        throw ConfigError(e.what());
    }
    f.allocation = get_string(j, "allocation", f.allocation, w);
    if (f.allocation != "speaker_listener" && f.allocation != "speaker_speaker" && f.allocation != "dynamic")
        throw ConfigError("system.allocation: expected speaker_listener, speaker_speaker or dynamic");
    const long long sp = get_int(j, "speaker", 0, w);
    if (sp < 0 || sp >= static_cast<long long>(n)) throw ConfigError("system.speaker: out of range");
    f.speaker = static_cast<std::size_t>(sp);
    f.s0 = real_list(j, "s0", Vector(n, 1.0), w);
    if (f.s0.size() != n) throw ConfigError("system.s0: one entry per agent");
    f.horizon = get_real(j, "horizon", f.horizon, w);
    f.dts = real_list(j, "dt", {0.1, 0.05, 0.025, 0.0125, 0.00625}, w);
    if (j.contains("G")) f.G = parse_matrix(j.at("G"), "system.G");
    if (j.contains("sigma")) {
        const auto s = real_list(j, "sigma", {}, w);
        if (s.size() != 2) throw ConfigError("system.sigma: expected [sigma1^2, sigma2^2]");
        f.sigma = std::pair{s[0], s[1]};
    }
    if (j.contains("sigma_s2sq")) f.sigma_s2sq = get_real(j, "sigma_s2sq", 0.0, w);
    return f;
}

} // namespace rolecomms::config
