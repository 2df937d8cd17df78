#pragma once

// rolecomms command line: analyze, simulate, bench, sweep.
//
// Exit codes: 0 success, 1 a trend assertion in the config failed,
// 2 usage or config error.

#include <charconv>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "rolecomms/bench.hpp"
#include "rolecomms/config.hpp"
#include "rolecomms/errors.hpp"
#include "rolecomms/linear_roles.hpp"
#include "rolecomms/table_sim.hpp"

namespace rolecomms::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitAssert = 1;
inline constexpr int kExitUsage = 2;

using config::json;

namespace detail {

// --<config path> flags shared by bench, sweep and simulate.
struct KeyFlags {
    std::map<std::string, double> reals;
    std::map<std::string, long long> ints;
    std::map<std::string, bool> bools;
    std::map<std::string, std::vector<double>> pairs;
    std::vector<std::pair<const config::ConfigKey*, CLI::Option*>> options;

    void attach(CLI::App& app) {
        using T = config::ConfigKey::Type;
        for (const auto& k : config::config_keys()) {
            const std::string flag = std::string("--") + k.path;
            CLI::Option* opt = nullptr;
            switch (k.type) {
            case T::Real: opt = app.add_option(flag, reals[k.path], k.help); break;
            case T::Int: opt = app.add_option(flag, ints[k.path], k.help); break;
            case T::Bool: opt = app.add_option(flag, bools[k.path], k.help); break;
            case T::Pair: opt = app.add_option(flag, pairs[k.path], k.help)->expected(2)->delimiter(','); break;
            }
            opt->group("Config overrides");
            options.emplace_back(&k, opt);
        }
    }

    void apply(json& j) const {
        using T = config::ConfigKey::Type;
        for (const auto& [k, opt] : options) {
            if (opt->count() == 0) continue;
            switch (k->type) {
            case T::Real: config::set_path(j, k->path, reals.at(k->path)); break;
            case T::Int: config::set_path(j, k->path, ints.at(k->path)); break;
            case T::Bool: config::set_path(j, k->path, bools.at(k->path)); break;
            case T::Pair: config::set_path(j, k->path, pairs.at(k->path)); break;
            }
        }
    }
};

inline unsigned worker_count(unsigned flag) {
    if (const char* env = std::getenv("ROLECOMMS_THREADS")) {
        unsigned v = 0;
        const std::string s(env);
        const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
        if (ec != std::errc() || p != s.data() + s.size() || v == 0)
            throw ConfigError("ROLECOMMS_THREADS must be a positive integer");
        return v;
    }
    return flag == 0 ? 1u : flag;
}

inline json complex_list(const std::vector<Complex>& values) {
    json out = json::array();
    for (const auto& z : values) out.push_back({z.real(), z.imag()});
    return out;
}

inline void write_file(const std::filesystem::path& path, const std::string& text) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw ConfigError("cannot write '" + path.string() + "'");
    f << text;
    if (!f) throw ConfigError("write failed for '" + path.string() + "'");
}

} // namespace detail

struct AnalyzeArgs {
    std::string system;
    std::string mode;
    std::uint64_t seed = 0;
};

inline int cmd_analyze(const AnalyzeArgs& args, std::ostream& out) {
    const config::SystemFile f = config::parse_system(config::load_json_file(args.system));
    const auto& sys = f.sys;
    json j;
    j["format_version"] = bench::kFormatVersion;
    j["seed"] = args.seed;
    j["mode"] = args.mode;
    if (args.mode == "stability") {
        linear::RoleAllocation alloc = f.allocation == "speaker_speaker" ? linear::RoleAllocation::speaker_speaker()
                                       : f.allocation == "dynamic"       ? linear::RoleAllocation::dynamic(1.0)
                                                                         : linear::RoleAllocation::speaker_listener(f.speaker);
        const auto rep = linear::stability_report(sys, alloc);
        j["allocation"] = f.allocation;
        j["gain"] = json::array();
        const SmallMatrix K = linear::role_gain(sys.Kstar, alloc);
        for (std::size_t r = 0; r < K.rows(); ++r) j["gain"].push_back({K(r, 0), K(r, 1)});
        j["eigenvalues"] = detail::complex_list(rep.eigenvalues);
        j["max_real"] = rep.max_real;
        j["stable"] = rep.stable;
    } else if (args.mode == "rotation") {
        const auto rows = linear::rotation_converges(sys, f.s0, f.horizon, f.dts, f.G ? &*f.G : nullptr);
        json table = json::array();
        for (std::size_t i = 0; i < rows.size(); ++i) {
            json r{{"dt", rows[i].dt}, {"deviation", rows[i].deviation}, {"cycles", rows[i].cycles}};
            r["ratio"] = i > 0 && rows[i - 1].deviation > 0.0 ? json(rows[i].deviation / rows[i - 1].deviation)
                                                               : json(nullptr);
            table.push_back(std::move(r));
        }
        j["rows"] = std::move(table);
    } else if (args.mode == "variances" || args.mode == "kl") {
        if (sys.W.size() != 2) throw ConfigError("system: W must hold two variances for this mode");
        const auto v = linear::optimal_variances(sys.Kstar, sys.W[0], sys.W[1], f.speaker);
        j["speaker"] = f.speaker;
        if (args.mode == "variances") {
            j["speaker_variance"] = v.speaker;
            j["listener_variance"] = v.listener;
        } else {
            if (!f.sigma_s2sq) throw ConfigError("system: kl mode needs sigma_s2sq (speaker prior variance)");
            const Real s_speaker = f.sigma ? f.sigma->first : v.speaker;
            const Real s_listener = f.sigma ? f.sigma->second : v.listener;
            // Relabel so the speaker is agent 0.
            SmallMatrix K = sys.Kstar;
            Real w_speaker = sys.W[0], w_listener = sys.W[1];
            if (f.speaker == 1) {
                K = SmallMatrix{{sys.Kstar(1, 1), sys.Kstar(1, 0)}, {sys.Kstar(0, 1), sys.Kstar(0, 0)}};
                std::swap(w_speaker, w_listener);
            }
            j["speaker_variance"] = s_speaker;
            j["listener_variance"] = s_listener;
            j["kl"] = linear::expected_kl(K, s_speaker, s_listener, w_speaker, w_listener, *f.sigma_s2sq);
        }
    } else {
        throw ConfigError("unknown mode '" + args.mode + "'");
    }
    out << j.dump(2) << '\n';
    return kExitOk;
}

struct SimulateArgs {
    std::string env;
    std::string strategy;
    double cv = 0.0;
    int n = 2;
    std::string geometry = "known";
    std::string config;
    std::string trajectory_out;
    std::optional<std::uint64_t> seed;
    json overrides = json::object();
};

inline int cmd_simulate(const SimulateArgs& args, std::ostream& out) {
    json cj = args.config.empty() ? json::object() : config::load_json_file(args.config);
    for (const auto& [k, v] : args.overrides.items()) cj[k] = v;
    // Conditions and asserts are irrelevant for a single game.
    cj.erase("conditions");
    cj.erase("grid");
    cj.erase("assert");
    const config::RunConfig rc = config::parse_run_config_base(cj);

    sim::Environment env;
    std::uint64_t env_seed = 0;
    const auto [p, ec] = std::from_chars(args.env.data(), args.env.data() + args.env.size(), env_seed);
    if (!args.env.empty() && ec == std::errc() && p == args.env.data() + args.env.size()) {
        if (args.n < 0) throw ConfigError("--n must be >= 0");
        env = sim::generate_environment(env_seed, static_cast<std::size_t>(args.n), rc.geometry.make(args.geometry),
                                        rc.bench.workspace);
    } else {
        env = config::parse_environment(config::load_json_file(args.env));
    }
    const sim::CommStrategy strategy = config::parse_strategy_label(args.strategy, args.cv);
    const std::uint64_t seed = args.seed.value_or(env.seed);

    sim::SimOptions options = rc.bench.options;
    options.record_trajectory = !args.trajectory_out.empty();
    const auto outcome = sim::run_game(env, strategy, rc.bench.field, rc.bench.limits, seed, options);
    if (options.record_trajectory) {
        std::ostringstream csv;
        sim::write_trajectory_csv(csv, outcome.trajectory, seed);
        detail::write_file(args.trajectory_out, csv.str());
    }
    json j;
    j["format_version"] = bench::kFormatVersion;
    j["seed"] = seed;
    j["env_hash"] = bench::hex64(sim::environment_hash(env));
    j["strategy"] = args.strategy;
    j["cv"] = args.cv;
    j["obstacles"] = env.obstacles.size();
    j["success"] = outcome.success;
    j["steps"] = outcome.steps;
    j["failure"] = sim::to_string(outcome.failure_kind);
    out << j.dump(2) << '\n';
    return kExitOk;
}

struct BenchArgs {
    std::string config;
    std::string out_dir;
    unsigned threads = 1;
    std::optional<std::uint64_t> seed;
    json overrides = json::object();
    // sweep only
    std::optional<std::vector<double>> cvs;
    std::optional<std::vector<int>> ns;
    std::optional<std::vector<std::string>> strategies;
    std::optional<std::string> geometry;
};

inline void merge_overrides(json& into, const json& overrides) {
    for (const auto& [k, v] : overrides.items()) {
        if (v.is_object() && into.contains(k) && into[k].is_object())
            merge_overrides(into[k], v);
        else
            into[k] = v;
    }
}

inline int run_and_report(const config::RunConfig& rc, const BenchArgs& args, std::ostream& out) {
    const unsigned workers = detail::worker_count(args.threads);
    const bench::BenchmarkReport report = bench::run_benchmark(rc.bench, workers);
    namespace fs = std::filesystem;
    const fs::path dir(args.out_dir);
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw ConfigError("cannot create '" + dir.string() + "': " + ec.message());
    std::ostringstream js, csv, table;
    bench::write_report_json(js, report);
    bench::write_report_csv(csv, report);
    bench::write_table_csv(table, report);
    detail::write_file(dir / "report.json", js.str());
    detail::write_file(dir / "report.csv", csv.str());
    detail::write_file(dir / "table.csv", table.str());

    out << "seed " << report.base_seed << " fingerprint " << report.fingerprint << '\n';
    out << table.str();
    bool all = true;
    for (const auto& a : rc.asserts) {
        const auto res = bench::evaluate(a, report);
        out << (res.passed ? "PASS " : "FAIL ") << res.name << '\n';
        for (const auto& d : res.details) out << "  " << d << '\n';
        all = all && res.passed;
    }
    return all ? kExitOk : kExitAssert;
}

inline json load_with_overrides(const BenchArgs& args) {
    json j = config::load_json_file(args.config);
    merge_overrides(j, args.overrides);
    if (args.seed) j["seed"] = *args.seed;
    return j;
}

inline int cmd_bench(const BenchArgs& args, std::ostream& out) {
    const config::RunConfig rc = config::parse_run_config(load_with_overrides(args));
    return run_and_report(rc, args, out);
}

// Noise grid: every strategy x n x cv on the config's field and workspace.
inline int cmd_sweep(const BenchArgs& args, std::ostream& out) {
    json j = load_with_overrides(args);
    const std::vector<std::string> strategies = args.strategies.value_or(std::vector<std::string>{
        "explicit_T0", "dynamic_T1", "dynamic_T4", "dynamic_T16", "speaker_listener", "speaker_speaker"});
    json block{{"strategies", strategies},
               {"n", args.ns.value_or(std::vector<int>{2, 4, 8})},
               {"cv", args.cvs.value_or(std::vector<double>{0.001, 0.01, 0.1})},
               {"geometry", args.geometry.value_or("known")}};
    j.erase("conditions");
    j["grid"] = json::array({block});
    const config::RunConfig rc = config::parse_run_config(j);
    return run_and_report(rc, args, out);
}

inline int run(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
    CLI::App app{"Speaker/listener role analysis and the table-carrying benchmark"};
    app.name("rolecomms");
    app.require_subcommand(1);

    AnalyzeArgs aa;
    auto* analyze = app.add_subcommand("analyze", "Linear-feedback analysis of a team system file");
    analyze->add_option("--system", aa.system, "system JSON file")->required();
    analyze->add_option("--mode", aa.mode, "stability | rotation | variances | kl")
        ->required()
        ->check(CLI::IsMember({"stability", "rotation", "variances", "kl"}));
    analyze->add_option("--seed", aa.seed, "echoed into the output");

    SimulateArgs sa;
    detail::KeyFlags sim_keys;
    std::uint64_t sim_seed = 0;
    auto* simulate = app.add_subcommand("simulate", "Run one game and write its trajectory");
    simulate->add_option("--env", sa.env, "environment JSON file, or an integer seed to generate one")->required();
    simulate->add_option("--strategy", sa.strategy,
                         "explicit_T<k> | dynamic_T<k> | speaker_listener | speaker_speaker | centralized")
        ->required();
    simulate->add_option("--cv", sa.cv, "noise coefficient of variation");
    simulate->add_option("--n", sa.n, "obstacle count when --env is a seed");
    simulate->add_option("--geometry", sa.geometry, "known | unknown, when --env is a seed")
        ->check(CLI::IsMember({"known", "unknown"}));
    simulate->add_option("--config", sa.config, "config JSON supplying field, limits, workspace and geometry");
    simulate->add_option("--trajectory-out", sa.trajectory_out, "trajectory CSV path");
    auto* sim_seed_opt = simulate->add_option("--seed", sim_seed, "noise seed (default: the environment seed)");
    sim_keys.attach(*simulate);

    BenchArgs ba;
    detail::KeyFlags bench_keys;
    std::uint64_t bench_seed = 0;
    auto* benchc = app.add_subcommand("bench", "Run a benchmark config");
    benchc->add_option("--config", ba.config, "benchmark config JSON")->required();
    benchc->add_option("--out", ba.out_dir, "output directory")->required();
    benchc->add_option("--threads", ba.threads, "worker threads (ROLECOMMS_THREADS overrides)");
    auto* bench_seed_opt = benchc->add_option("--seed", bench_seed, "base environment seed");
    bench_keys.attach(*benchc);

    BenchArgs wa;
    detail::KeyFlags sweep_keys;
    std::uint64_t sweep_seed = 0;
    std::vector<double> cvs;
    std::vector<int> ns;
    std::vector<std::string> strategies;
    std::string geometry;
    auto* sweep = app.add_subcommand("sweep", "Noise grid over strategies, obstacle counts and cv levels");
    sweep->add_option("--config", wa.config, "config JSON for field, limits, workspace and asserts")->required();
    sweep->add_option("--out", wa.out_dir, "output directory")->required();
    sweep->add_option("--threads", wa.threads, "worker threads (ROLECOMMS_THREADS overrides)");
    auto* sweep_seed_opt = sweep->add_option("--seed", sweep_seed, "base environment seed");
    auto* cv_opt = sweep->add_option("--cv", cvs, "cv levels")->delimiter(',');
    auto* n_opt = sweep->add_option("--n", ns, "obstacle counts")->delimiter(',');
    auto* st_opt = sweep->add_option("--strategies", strategies, "strategy labels")->delimiter(',');
    auto* geo_opt = sweep->add_option("--geometry", geometry, "known | unknown")->check(CLI::IsMember({"known", "unknown"}));
    sweep_keys.attach(*sweep);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        app.exit(e, out, err);
        return kExitOk;
    } catch (const CLI::CallForAllHelp& e) {
        app.exit(e, out, err);
        return kExitOk;
    } catch (const CLI::ParseError& e) {
        app.exit(e, out, err);
        return kExitUsage;
    }

    try {
        if (*analyze) return cmd_analyze(aa, out);
        if (*simulate) {
            if (sim_seed_opt->count()) sa.seed = sim_seed;
            sim_keys.apply(sa.overrides);
            return cmd_simulate(sa, out);
        }
        if (*benchc) {
            if (bench_seed_opt->count()) ba.seed = bench_seed;
            bench_keys.apply(ba.overrides);
            return cmd_bench(ba, out);
        }
        if (*sweep) {
            if (sweep_seed_opt->count()) wa.seed = sweep_seed;
            if (cv_opt->count()) wa.cvs = cvs;
            if (n_opt->count()) wa.ns = ns;
            if (st_opt->count()) wa.strategies = strategies;
            if (geo_opt->count()) wa.geometry = geometry;
            sweep_keys.apply(wa.overrides);
            return cmd_sweep(wa, out);
        }
    } catch (const Error& e) {
        err << "error: " << e.what() << '\n';
        return kExitUsage;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return kExitUsage;
    }
    return kExitUsage;
}

} // namespace rolecomms::cli
