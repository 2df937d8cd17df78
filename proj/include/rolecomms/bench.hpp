#pragma once

// Monte-Carlo harness for the table game: success rate and failure length
// per condition, on environment sequences shared by every condition.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <exception>
#include <map>
#include <mutex>
#include <optional>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <tuple>
#include <vector>

#include <nlohmann/json.hpp>

#include "rolecomms/errors.hpp"
#include "rolecomms/table_sim.hpp"

namespace rolecomms::bench {

using sim::CommStrategy;
using sim::GeometryMode;

inline constexpr int kFormatVersion = 1;
// Bumped whenever a change alters simulation results.
inline constexpr const char* kCodeRevision = "rolecomms-sim-3";

struct Condition {
    CommStrategy strategy;
    int n = 0;
    GeometryMode geometry;

    // Column name used in pivot tables and assertions.
    std::string strategy_label() const {
        using K = CommStrategy::Kind;
        std::string s;
        switch (strategy.kind) {
        case K::Explicit: s = "explicit_T" + std::to_string(strategy.period); break;
        case K::DynamicRoles: s = "dynamic_T" + std::to_string(strategy.period); break;
        default: s = std::string(sim::to_string(strategy.kind));
        }
        if (strategy.initial_speaker != 0) s += "_s" + std::to_string(strategy.initial_speaker);
        return s;
    }

    std::string geometry_name() const {
        return geometry.kind == GeometryMode::Kind::KnownRadius ? "known" : "unknown";
    }
};

struct BenchmarkConfig {
    std::vector<Condition> conditions;
    int games = 1000;
    std::uint64_t base_seed = 1000;
    field::FieldParams field;
    sim::SimLimits limits;
    sim::WorkspaceBounds workspace;
    sim::SimOptions options;

    void validate() const {
        if (conditions.empty()) throw ConfigError("benchmark: no conditions");
        if (games < 1) throw ConfigError("benchmark: games must be >= 1");
        try {
            field.validate();
            limits.validate();
            for (const auto& c : conditions) {
                c.strategy.validate();
                c.geometry.validate();
                if (c.n < 0) throw ConfigError("benchmark: obstacle count must be >= 0");
            }
        } catch (const ArgumentError& e) {
            throw ConfigError(e.what());
        }
    }
};

struct GameRecord {
    std::uint64_t seed = 0;
    bool success = false;
    int steps = 0;
    sim::FailureKind failure = sim::FailureKind::None;
};

struct ConditionResult {
    Condition condition;
    int games = 0;
    int successes = 0;
    double lambda = 0.0;
    int failures = 0;
    // Mean game length over failed games only; empty when nothing failed.
    std::optional<double> failure_mean_steps;
    // Hash over the environment sequence, equal for paired conditions.
    std::uint64_t env_digest = 0;
    std::vector<GameRecord> outcomes;
};

struct BenchmarkReport {
    std::uint64_t base_seed = 0;
    int games_requested = 0;
    std::string fingerprint;
    nlohmann::ordered_json config_echo;
    std::vector<std::uint64_t> excluded_seeds;
    std::vector<ConditionResult> results;
};

inline std::string hex64(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

inline std::uint64_t fnv1a(std::string_view s, std::uint64_t h = 0xcbf29ce484222325ULL) {
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

// Two-sided sign test on `wins` vs `losses` discordant pairs.
inline double sign_test_p(int wins, int losses) {
    if (wins < 0 || losses < 0) throw ArgumentError("sign_test_p: negative count");
    const int n = wins + losses;
    if (n == 0) return 1.0;
    const int k = std::min(wins, losses);
    // Sum the lower tail in log space; terms grow with i up to k <= n/2.
    double log_tail = -INFINITY;
    for (int i = 0; i <= k; ++i) {
        const double lt = std::lgamma(n + 1.0) - std::lgamma(i + 1.0) - std::lgamma(n - i + 1.0) - n * std::log(2.0);
        const double hi = std::max(log_tail, lt);
        log_tail = hi + std::log(std::exp(log_tail - hi) + std::exp(lt - hi));
    }
    return std::min(1.0, 2.0 * std::exp(log_tail));
}

struct Comparison {
    double delta_lambda = 0.0;
    int a_only = 0;
    int b_only = 0;
    double p_value = 1.0;
};

inline Comparison compare_conditions(const ConditionResult& a, const ConditionResult& b) {
    if (a.outcomes.size() != b.outcomes.size()) throw ComparisonError("compare_conditions: different game counts");
    Comparison c;
    for (std::size_t i = 0; i < a.outcomes.size(); ++i) {
        if (a.outcomes[i].seed != b.outcomes[i].seed)
            throw ComparisonError("compare_conditions: environment seed sequences differ");
        if (a.outcomes[i].success && !b.outcomes[i].success) ++c.a_only;
        if (!a.outcomes[i].success && b.outcomes[i].success) ++c.b_only;
    }
    c.delta_lambda = a.lambda - b.lambda;
    c.p_value = sign_test_p(c.a_only, c.b_only);
    return c;
}

inline Comparison compare_conditions(const BenchmarkReport& report, std::size_t a, std::size_t b) {
    if (a >= report.results.size() || b >= report.results.size())
        throw ArgumentError("compare_conditions: condition index out of range");
    return compare_conditions(report.results[a], report.results[b]);
}

// First condition matching all given keys.
inline const ConditionResult* find_condition(const BenchmarkReport& report, const std::string& label, int n,
                                             std::optional<double> cv = std::nullopt,
                                             std::optional<std::string> geometry = std::nullopt) {
    for (const auto& r : report.results) {
        if (r.condition.strategy_label() != label || r.condition.n != n) continue;
        if (cv && r.condition.strategy.noise_cv != *cv) continue;
        if (geometry && r.condition.geometry_name() != *geometry) continue;
        return &r;
    }
    return nullptr;
}

inline nlohmann::ordered_json to_json(const BenchmarkConfig& c) {
    using nlohmann::ordered_json;
    ordered_json j;
    j["seed"] = c.base_seed;
    j["games"] = c.games;
    j["field"] = {{"w_att", c.field.w_att},   {"w_rep", c.field.w_rep},     {"w_v", c.field.w_v},
                  {"rho0", c.field.rho0},     {"v_max", c.field.v_max},     {"rho_min", c.field.rho_min},
                  {"eps_sing", c.field.eps_sing}};
    j["limits"] = {{"max_steps", c.limits.max_steps}, {"goal_eps", c.limits.goal_eps}, {"dt", c.limits.dt}};
    const auto& w = c.workspace;
    j["workspace"] = {{"start", {w.start.x, w.start.y}},
                      {"goal", {w.goal.x, w.goal.y}},
                      {"heading", w.heading},
                      {"half_length", w.half_length},
                      {"corridor_half_width", w.corridor_half_width},
                      {"end_margin", w.end_margin},
                      {"clearance", w.clearance},
                      {"retry_cap", w.retry_cap}};
    j["options"] = {{"strict_speaker", c.options.strict_speaker},
                    {"residual_eps", c.options.inference.residual_eps},
                    {"bisect_tol", c.options.inference.bisect_tol}};
    ordered_json conds = ordered_json::array();
    for (const auto& k : c.conditions) {
        ordered_json e{{"strategy", sim::to_string(k.strategy.kind)},
                       {"T", k.strategy.period},
                       {"initial_speaker", k.strategy.initial_speaker},
                       {"cv", k.strategy.noise_cv},
                       {"n", k.n},
                       {"geometry", k.geometry_name()}};
        if (k.geometry.kind == GeometryMode::Kind::KnownRadius)
            e["radius"] = k.geometry.r_fixed;
        else
            e["radius_range"] = {k.geometry.r_min, k.geometry.r_max};
        conds.push_back(std::move(e));
    }
    j["conditions"] = std::move(conds);
    return j;
}

inline std::string config_fingerprint(const BenchmarkConfig& c) {
    return hex64(fnv1a(to_json(c).dump(), fnv1a(kCodeRevision)));
}

// Runs every condition over seeds base_seed .. base_seed + games - 1. A seed
// whose environment cannot be generated for some (n, geometry) in the config
// is dropped from every condition. Output does not depend on `workers`.
inline BenchmarkReport run_benchmark(const BenchmarkConfig& config, unsigned workers = 1) {
    config.validate();
    workers = std::max(1u, workers);

    // One environment sequence per distinct (n, geometry).
    using EnvKey = std::tuple<int, int, Real, Real, Real>;
    auto key_of = [](const Condition& c) {
        return EnvKey{c.n, static_cast<int>(c.geometry.kind), c.geometry.r_fixed, c.geometry.r_min, c.geometry.r_max};
    };
    std::map<EnvKey, std::vector<std::optional<sim::Environment>>> envs;
    for (const auto& c : config.conditions) {
        auto [it, fresh] = envs.try_emplace(key_of(c));
        if (!fresh) continue;
        it->second.resize(static_cast<std::size_t>(config.games));
        for (int g = 0; g < config.games; ++g) {
            try {
                it->second[static_cast<std::size_t>(g)] =
                    sim::generate_environment(config.base_seed + static_cast<std::uint64_t>(g), c.n, c.geometry,
                                              config.workspace);
            } catch (const GenerationError&) {
            }
        }
    }
    std::vector<int> kept;
    BenchmarkReport report;
    for (int g = 0; g < config.games; ++g) {
        bool ok = true;
        for (const auto& [_, seq] : envs) ok = ok && seq[static_cast<std::size_t>(g)].has_value();
        if (ok)
            kept.push_back(g);
        else
            report.excluded_seeds.push_back(config.base_seed + static_cast<std::uint64_t>(g));
    }

    const std::size_t C = config.conditions.size(), G = kept.size();
    std::vector<GameRecord> slots(C * G);
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    auto work = [&] {
        for (;;) {
            const std::size_t item = next.fetch_add(1);
            if (item >= slots.size()) return;
            const std::size_t c = item / G, g = item % G;
            try {
                const Condition& cond = config.conditions[c];
                const sim::Environment& env = *envs.at(key_of(cond))[static_cast<std::size_t>(kept[g])];
                const auto out = sim::run_game(env, cond.strategy, config.field, config.limits, env.seed, config.options);
                slots[item] = {env.seed, out.success, out.steps, out.failure_kind};
            } catch (...) {
                std::lock_guard lock(failure_mutex);
                if (!failure) failure = std::current_exception();
                next = slots.size();
            }
        }
    };
    if (workers == 1 || slots.size() < 2) {
        work();
    } else {
        std::vector<std::thread> pool;
        for (unsigned w = 0; w < workers; ++w) pool.emplace_back(work);
        for (auto& t : pool) t.join();
    }
    if (failure) std::rethrow_exception(failure);

    report.base_seed = config.base_seed;
    report.games_requested = config.games;
    report.config_echo = to_json(config);
    report.fingerprint = config_fingerprint(config);
    for (std::size_t c = 0; c < C; ++c) {
        ConditionResult r;
        r.condition = config.conditions[c];
        r.outcomes.assign(slots.begin() + static_cast<std::ptrdiff_t>(c * G),
                          slots.begin() + static_cast<std::ptrdiff_t>((c + 1) * G));
        r.games = static_cast<int>(G);
        long long fail_steps = 0;
        for (const auto& o : r.outcomes) {
            if (o.success) {
                ++r.successes;
            } else {
                ++r.failures;
                fail_steps += o.steps;
            }
        }
        r.lambda = G ? static_cast<double>(r.successes) / static_cast<double>(G) : 0.0;
        if (r.failures > 0) r.failure_mean_steps = static_cast<double>(fail_steps) / r.failures;
        std::uint64_t h = 0xcbf29ce484222325ULL;
        const auto& seq = envs.at(key_of(r.condition));
        for (int g : kept) h = fnv1a(hex64(sim::environment_hash(*seq[static_cast<std::size_t>(g)])), h);
        r.env_digest = h;
        report.results.push_back(std::move(r));
    }
    return report;
}

inline nlohmann::ordered_json to_json(const BenchmarkReport& report, bool include_outcomes = true) {
    using nlohmann::ordered_json;
    ordered_json j;
    j["format_version"] = kFormatVersion;
    j["seed"] = report.base_seed;
    j["fingerprint"] = report.fingerprint;
    j["pairing"] = "every condition runs on the environments generated from seeds seed .. seed+games-1";
    j["config"] = report.config_echo;
    j["excluded_seeds"] = report.excluded_seeds;
    ordered_json rows = ordered_json::array();
    for (const auto& r : report.results) {
        ordered_json e{{"strategy", r.condition.strategy_label()},
                       {"T", r.condition.strategy.period},
                       {"n", r.condition.n},
                       {"geometry", r.condition.geometry_name()},
                       {"cv", r.condition.strategy.noise_cv},
                       {"games", r.games},
                       {"successes", r.successes},
                       {"lambda", r.lambda},
                       {"failures", r.failures}};
        e["failure_mean_steps"] = r.failure_mean_steps ? ordered_json(*r.failure_mean_steps) : ordered_json(nullptr);
        e["env_digest"] = hex64(r.env_digest);
        if (include_outcomes) {
            ordered_json outs = ordered_json::array();
            for (const auto& o : r.outcomes)
                outs.push_back({{"seed", o.seed}, {"success", o.success}, {"steps", o.steps},
                                {"failure", sim::to_string(o.failure)}});
            e["outcomes"] = std::move(outs);
        }
        rows.push_back(std::move(e));
    }
    j["conditions"] = std::move(rows);
    return j;
}

inline void write_report_json(std::ostream& os, const BenchmarkReport& report) {
    os << to_json(report).dump(2) << '\n';
}

inline std::string format_real(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6f", v);
    return buf;
}

// One row per condition.
inline void write_report_csv(std::ostream& os, const BenchmarkReport& report) {
    os << "# format_version=" << kFormatVersion << " seed=" << report.base_seed << " fingerprint=" << report.fingerprint
       << '\n';
    os << "strategy,T,n,geometry,cv,lambda,failure_mean_steps,games\n";
    for (const auto& r : report.results) {
        os << r.condition.strategy_label() << ',' << r.condition.strategy.period << ',' << r.condition.n << ','
           << r.condition.geometry_name() << ',' << format_real(r.condition.strategy.noise_cv) << ','
           << format_real(r.lambda) << ',' << (r.failure_mean_steps ? format_real(*r.failure_mean_steps) : "") << ','
           << r.games << '\n';
    }
}

// Wide layout: one row per (geometry, n, cv), one lambda column per
// strategy, both in order of first appearance.
inline void write_table_csv(std::ostream& os, const BenchmarkReport& report) {
    using RowKey = std::tuple<std::string, int, double>;
    std::vector<RowKey> rows;
    std::vector<std::string> cols;
    std::map<std::pair<RowKey, std::string>, double> cell;
    for (const auto& r : report.results) {
        const RowKey k{r.condition.geometry_name(), r.condition.n, r.condition.strategy.noise_cv};
        if (std::find(rows.begin(), rows.end(), k) == rows.end()) rows.push_back(k);
        const std::string label = r.condition.strategy_label();
        if (std::find(cols.begin(), cols.end(), label) == cols.end()) cols.push_back(label);
        cell.emplace(std::pair{k, label}, r.lambda);
    }
    os << "# format_version=" << kFormatVersion << " seed=" << report.base_seed << " fingerprint=" << report.fingerprint
       << '\n';
    os << "geometry,n,cv";
    for (const auto& c : cols) os << ',' << c;
    os << '\n';
    for (const auto& k : rows) {
        os << std::get<0>(k) << ',' << std::get<1>(k) << ',' << format_real(std::get<2>(k));
        for (const auto& c : cols) {
            os << ',';
            if (auto it = cell.find({k, c}); it != cell.end()) os << format_real(it->second);
        }
        os << '\n';
    }
}

// Trend checks over a report, evaluated per row group (geometry, n, cv)
// unless stated otherwise.
struct TrendAssert {
    enum class Kind {
        // chain[0] > chain[1] > ..., each adjacent pair significant
        Ordered,
        // lambda(upper) >= lambda(lower) and lambda(upper) - lambda(lower) <= max_gap;
        // with two_sided only |difference| <= max_gap is required
        Gap,
        // lambda(strategy) >= value
        AtLeast,
        // per strategy, lambda non-increasing as n grows (same geometry, cv)
        MonotoneInN,
        // per strategy, lambda non-increasing as cv grows unless the rise is
        // not significant
        MonotoneInCv,
        // failure_mean_steps of `strategy` is the largest in its row
        LongestFailures,
    };
    Kind kind = Kind::Ordered;
    std::vector<std::string> chain;
    std::string upper, lower, strategy;
    double max_gap = 0.0;
    double value = 0.0;
    double alpha = 0.05;
    bool two_sided = false;
    std::optional<int> n;
    std::optional<double> cv;
    std::string name;
};

struct AssertOutcome {
    std::string name;
    bool passed = true;
    std::vector<std::string> details;
};

namespace detail {

inline std::string fmt(double v, int prec = 3) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.*f", prec, v);
    return buf;
}

inline std::string fmt_p(double p) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.3g", p);
    return buf;
}

} // namespace detail

inline AssertOutcome evaluate(const TrendAssert& a, const BenchmarkReport& report) {
    using K = TrendAssert::Kind;
    AssertOutcome out;
    out.name = a.name;
    auto fail = [&](std::string msg) {
        out.passed = false;
        out.details.push_back("FAIL " + std::move(msg));
    };
    auto note = [&](std::string msg) { out.details.push_back("ok   " + std::move(msg)); };

    using RowKey = std::tuple<std::string, int, double>;
    std::vector<RowKey> rows;
    for (const auto& r : report.results) {
        const RowKey k{r.condition.geometry_name(), r.condition.n, r.condition.strategy.noise_cv};
        if (a.n && *a.n != r.condition.n) continue;
        if (a.cv && *a.cv != r.condition.strategy.noise_cv) continue;
        if (std::find(rows.begin(), rows.end(), k) == rows.end()) rows.push_back(k);
    }
    auto lookup = [&](const RowKey& k, const std::string& label) {
        return find_condition(report, label, std::get<1>(k), std::get<2>(k), std::get<0>(k));
    };
    auto rname = [](const RowKey& k) {
        std::ostringstream os;
        os << std::get<0>(k) << " n=" << std::get<1>(k) << " cv=" << std::get<2>(k);
        return os.str();
    };

    switch (a.kind) {
    case K::Ordered:
    case K::Gap:
    case K::AtLeast:
    case K::LongestFailures: {
        bool any = false;
        for (const auto& k : rows) {
            if (a.kind == K::Ordered) {
                std::vector<const ConditionResult*> chain;
                for (const auto& l : a.chain) chain.push_back(lookup(k, l));
                if (std::find(chain.begin(), chain.end(), nullptr) != chain.end()) continue;
                any = true;
                for (std::size_t i = 0; i + 1 < chain.size(); ++i) {
                    const auto cmp = compare_conditions(*chain[i], *chain[i + 1]);
                    const std::string msg = rname(k) + ": " + a.chain[i] + " " + detail::fmt(chain[i]->lambda) +
                                            " > " + a.chain[i + 1] + " " + detail::fmt(chain[i + 1]->lambda) +
                                            " (p=" + detail::fmt_p(cmp.p_value) + ")";
                    if (cmp.delta_lambda > 0.0 && cmp.p_value < a.alpha)
                        note(msg);
                    else
                        fail(msg);
                }
            } else if (a.kind == K::Gap) {
                const auto* u = lookup(k, a.upper);
                const auto* l = lookup(k, a.lower);
                if (!u || !l) continue;
                any = true;
                const double d = u->lambda - l->lambda;
                const bool ok = a.two_sided ? std::abs(d) <= a.max_gap : (d >= 0.0 && d <= a.max_gap);
                const std::string msg = rname(k) + ": " + a.upper + " " + detail::fmt(u->lambda) + " vs " + a.lower +
                                        " " + detail::fmt(l->lambda) + " gap " + detail::fmt(d) +
                                        (a.two_sided ? " |gap| <= " : " in [0, ") + detail::fmt(a.max_gap) +
                                        (a.two_sided ? "" : "]");
                ok ? note(msg) : fail(msg);
            } else if (a.kind == K::AtLeast) {
                const auto* s = lookup(k, a.strategy);
                if (!s) continue;
                any = true;
                const std::string msg =
                    rname(k) + ": " + a.strategy + " " + detail::fmt(s->lambda) + " >= " + detail::fmt(a.value);
                s->lambda >= a.value ? note(msg) : fail(msg);
            } else {
                const auto* s = lookup(k, a.strategy);
                if (!s) continue;
                any = true;
                bool longest = s->failure_mean_steps.has_value();
                std::string others;
                for (const auto& r : report.results) {
                    if (&r == s || r.condition.n != std::get<1>(k) || r.condition.strategy.noise_cv != std::get<2>(k) ||
                        r.condition.geometry_name() != std::get<0>(k))
                        continue;
                    if (r.failure_mean_steps) {
                        others += " " + r.condition.strategy_label() + "=" + detail::fmt(*r.failure_mean_steps, 1);
                        if (longest && *r.failure_mean_steps >= *s->failure_mean_steps) longest = false;
                    }
                }
                const std::string msg = rname(k) + ": " + a.strategy + "=" +
                                        (s->failure_mean_steps ? detail::fmt(*s->failure_mean_steps, 1) : "none") +
                                        " longest among" + others;
                longest ? note(msg) : fail(msg);
            }
        }
        if (!any) fail("no matching conditions in report");
        break;
    }
    case K::MonotoneInN:
    case K::MonotoneInCv: {
        // Group by everything except the swept variable.
        std::map<std::tuple<std::string, std::string, double>, std::vector<const ConditionResult*>> groups;
        for (const auto& r : report.results) {
            const double other = a.kind == K::MonotoneInN ? r.condition.strategy.noise_cv : r.condition.n;
            groups[{r.condition.strategy_label(), r.condition.geometry_name(), other}].push_back(&r);
        }
        bool any = false;
        for (auto& [key, members] : groups) {
            auto swept = [&](const ConditionResult* r) {
                return a.kind == K::MonotoneInN ? static_cast<double>(r->condition.n) : r->condition.strategy.noise_cv;
            };
            std::sort(members.begin(), members.end(),
                      [&](const ConditionResult* x, const ConditionResult* y) { return swept(x) < swept(y); });
            for (std::size_t i = 0; i + 1 < members.size(); ++i) {
                any = true;
                const auto* lo = members[i];
                const auto* hi = members[i + 1];
                std::ostringstream msg;
                msg << std::get<0>(key) << ' ' << std::get<1>(key) << (a.kind == K::MonotoneInN ? " cv=" : " n=")
                    << std::get<2>(key) << ": " << (a.kind == K::MonotoneInN ? "n " : "cv ") << swept(lo) << " -> "
                    << swept(hi) << " lambda " << detail::fmt(lo->lambda) << " -> " << detail::fmt(hi->lambda);
                if (hi->lambda <= lo->lambda) {
                    note(msg.str());
                } else if (a.kind == K::MonotoneInCv) {
                    // Seeds are shared across cv levels, so the rise can be
                    // tested with the paired sign test.
                    const auto cmp = compare_conditions(*hi, *lo);
                    msg << " rise p=" << detail::fmt_p(cmp.p_value);
                    cmp.p_value >= a.alpha ? note(msg.str() + " (not significant)") : fail(msg.str());
                } else {
                    fail(msg.str());
                }
            }
        }
        if (!any) fail("no sweep found in report");
        break;
    }
    }
    return out;
}

} // namespace rolecomms::bench
