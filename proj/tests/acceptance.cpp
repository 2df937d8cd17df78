// Runs the acceptance criteria and prints one PASS/FAIL line per criterion.
// Usage: rolecomms_acceptance [output dir]

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <limits>
#include <numbers>
#include <sstream>
#include <string>
#include <thread>

#include "rolecomms/bench.hpp"
#include "rolecomms/config.hpp"
#include "rolecomms/discrete_roles.hpp"
#include "rolecomms/linear_roles.hpp"
#include "rolecomms/table_sim.hpp"
#include "test_paths.hpp"

using namespace rolecomms;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

struct Verdict {
    bool passed = true;
    std::string summary;
    std::vector<std::string> details;
};

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(const char* f, double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, f, v);
    return buf;
}

// 1. Speaker/listener masking never stabilizes the shear plant.
Verdict criterion1() {
    const auto t0 = Clock::now();
    Rng rng(101);
    Real worst = std::numeric_limits<Real>::infinity();
    for (int i = 0; i < 1000; ++i) {
        const Real k11 = rng.uniform(-10, 10), k21 = rng.uniform(-10, 10), k22 = rng.uniform(-10, 10);
        const SmallMatrix K{{k11, rng.uniform(-10, 10)}, {k21, k22}};
        const auto rep = linear::stability_report(linear::shear_plant(K), linear::RoleAllocation::speaker_listener(0));
        worst = std::min(worst, rep.max_real);
    }
    const double t = seconds_since(t0);
    Verdict v;
    v.passed = worst >= 1.0 - 1e-9 && t < 1.0;
    v.summary = "min over 1000 gains of max Re(lambda) = " + fmt("%.12f", worst) + ", " + fmt("%.3f", t) + " s";
    return v;
}

// 2. Rotating the listener recovers the centralized action on average.
Verdict criterion2() {
    const auto t0 = Clock::now();
    Verdict v;
    Rng rng(102);
    Real worst = 0;
    for (std::size_t n = 2; n <= 4; ++n)
        for (int trial = 0; trial < 50; ++trial) {
            SmallMatrix K(n, n);
            Vector s(n);
            for (std::size_t i = 0; i < n; ++i) {
                s[i] = rng.uniform(-2, 2);
                for (std::size_t j = 0; j < n; ++j) K(i, j) = rng.uniform(-3, 3);
            }
            const linear::TeamLinearSystem sys{SmallMatrix::identity(n), SmallMatrix::identity(n), K, Vector(n, 1.0)};
            const Vector naive = linear::naive_actions(s);
            const Vector ks = K * std::span<const Real>(s);
            Vector mean(n, 0.0);
            for (std::size_t p = 0; p < n; ++p) {
                const Vector a = linear::rotation_action(sys, s, p, naive);
                for (std::size_t i = 0; i < n; ++i) mean[i] += a[i];
            }
            for (std::size_t i = 0; i < n; ++i) worst = std::max(worst, std::abs(mean[i] / n + ks[i]));
        }
    const auto f = config::parse_system(config::load_json_file(test_paths::config("shear_system.json")));
    const auto rows = linear::rotation_converges(f.sys, f.s0, f.horizon, f.dts, f.G ? &*f.G : nullptr);
    bool ratios_ok = rows.size() == 6;
    std::string ratios;
    for (std::size_t i = 1; i < rows.size(); ++i) {
        const Real r = rows[i].deviation / rows[i - 1].deviation;
        ratios += " " + fmt("%.3f", r);
        ratios_ok = ratios_ok && r >= 0.4 && r <= 0.6;
    }
    const double t = seconds_since(t0);
    v.passed = worst < 1e-12 && ratios_ok && t < 5.0;
    v.summary = "phase-average error " + fmt("%.2e", worst) + " (N=2,3,4); halving ratios" + ratios + ", " +
                fmt("%.3f", t) + " s";
    return v;
}

// 3. Listener reading a noisy partner is unbiased.
Verdict criterion3() {
    const auto t0 = Clock::now();
    const SmallMatrix K{{1.5, -0.8}, {0.6, 2.0}};
    const Vector s{0.7, -1.3};
    const Real sigma = 0.5;
    const int N = 100000;
    Rng rng(103);
    Vector sum(2, 0.0);
    Real structure = 0;
    for (int i = 0; i < N; ++i) {
        const Vector noise{gaussian(rng, 0, sigma), gaussian(rng, 0, sigma)};
        const Vector a = linear::noisy_listener_action(K, s, noise);
        // Direct substitution: each agent inverts the partner's noisy action
        // for the partner state, then applies its own row of K.
        const Real a1_clean = -(K(0, 0) * s[0] + K(0, 1) * s[1]);
        const Real a2_clean = -(K(1, 0) * s[0] + K(1, 1) * s[1]);
        const Real s2_hat = -((a2_clean + noise[1]) + K(1, 0) * s[0]) / K(1, 1);
        const Real s1_hat = -((a1_clean + noise[0]) + K(0, 1) * s[1]) / K(0, 0);
        const Real d1 = -(K(0, 0) * s[0] + K(0, 1) * s2_hat);
        const Real d2 = -(K(1, 0) * s1_hat + K(1, 1) * s[1]);
        structure = std::max({structure, std::abs(a[0] - d1), std::abs(a[1] - d2)});
        sum[0] += a[0];
        sum[1] += a[1];
    }
    const Vector ks = K * std::span<const Real>(s);
    const Real sd0 = std::abs(K(0, 1) / K(1, 1)) * sigma, sd1 = std::abs(K(1, 0) / K(0, 0)) * sigma;
    const Real z0 = std::abs(sum[0] / N + ks[0]) / (sd0 / std::sqrt(Real(N)));
    const Real z1 = std::abs(sum[1] / N + ks[1]) / (sd1 / std::sqrt(Real(N)));
    const double t = seconds_since(t0);
    Verdict v;
    v.passed = z0 < 4 && z1 < 4 && structure < 1e-12 && t < 5.0;
    v.summary = "mean deviation " + fmt("%.2f", z0) + " and " + fmt("%.2f", z1) + " standard errors (< 4); substitution gap " +
                fmt("%.1e", structure) + ", " + fmt("%.3f", t) + " s";
    return v;
}

// 4. Closed-form variances against a grid search of the expected KL.
Verdict criterion4() {
    const auto t0 = Clock::now();
    Rng rng(104);
    Verdict v;
    Real worst_grad = 0;
    int grid_misses = 0, above_noise = 0;
    for (int draw = 0; draw < 20; ++draw) {
        const SmallMatrix K{{rng.uniform(0.3, 3) * (rng.uniform() < 0.5 ? -1 : 1), rng.uniform(-3, 3)},
                            {rng.uniform(-3, 3), rng.uniform(0.3, 3)}};
        const Real w1 = rng.uniform(0.2, 3), w2 = rng.uniform(0.2, 3), prior = rng.uniform(0.2, 2);
        const auto opt = linear::optimal_variances(K, w1, w2);
        if (opt.speaker > w1) ++above_noise;
        auto kl = [&](Real a, Real b) { return linear::expected_kl(K, a, b, w1, w2, prior); };

        const Real h1 = 1.5 * w1 / 200, h2 = 2.0 * w2 / 200;
        Real best = std::numeric_limits<Real>::infinity(), g1 = 0, g2 = 0;
        for (int i = 1; i <= 200; ++i)
            for (int j = 1; j <= 200; ++j) {
                const Real val = kl(i * h1, j * h2);
                if (val < best) {
                    best = val;
                    g1 = i * h1;
                    g2 = j * h2;
                }
            }
        if (std::abs(g1 - opt.speaker) > h1 || std::abs(g2 - opt.listener) > h2) {
            ++grid_misses;
            v.details.push_back("draw " + std::to_string(draw) + ": grid (" + fmt("%.4f", g1) + ", " + fmt("%.4f", g2) +
                                ") vs closed form (" + fmt("%.4f", opt.speaker) + ", " + fmt("%.4f", opt.listener) + ")");
        }
        const Real e1 = 1e-6 * opt.speaker, e2 = 1e-6 * opt.listener;
        const Real d1 = (kl(opt.speaker + e1, opt.listener) - kl(opt.speaker - e1, opt.listener)) / (2 * e1);
        const Real d2 = (kl(opt.speaker, opt.listener + e2) - kl(opt.speaker, opt.listener - e2)) / (2 * e2);
        worst_grad = std::max(worst_grad, std::hypot(d1, d2));
    }
    const double t = seconds_since(t0);
    v.passed = grid_misses == 0 && above_noise == 0 && worst_grad < 1e-4 && t < 10.0;
    v.summary = std::to_string(20 - grid_misses) + "/20 grid argmins within one cell, " + std::to_string(above_noise) +
                " speaker variances above w1^2, max |grad| " + fmt("%.1e", worst_grad) + ", " + fmt("%.3f", t) + " s";
    return v;
}

Vector random_simplex(Rng& rng, std::size_t n) {
    Vector v(n);
    Real s = 0;
    for (Real& x : v) s += (x = rng.uniform() + 1e-3);
    for (Real& x : v) x /= s;
    return v;
}

discrete::FinitePolicy random_policy(Rng& rng, std::size_t own, std::size_t partner, std::size_t actions) {
    Vector t;
    for (std::size_t i = 0; i < own * partner; ++i) {
        const Vector r = random_simplex(rng, actions);
        t.insert(t.end(), r.begin(), r.end());
    }
    return {own, partner, actions, std::move(t)};
}

// 5. Speaker and listener policies against brute-force enumeration.
Verdict criterion5() {
    using namespace discrete;
    Rng rng(105);
    Real worst = 0;
    for (int inst = 0; inst < 100; ++inst) {
        const std::size_t S1 = 1 + rng.next_u64() % 6, S2 = 1 + rng.next_u64() % 6;
        const std::size_t A1 = 1 + rng.next_u64() % 4, A2 = 1 + rng.next_u64() % 4;
        const FinitePolicy pi1 = random_policy(rng, S1, S2, A1);
        const FinitePolicy pi2 = random_policy(rng, S2, S1, A2);
        const Vector p_s1 = random_simplex(rng, S1), p_s2 = random_simplex(rng, S2);

        // Joint table P(s1, s2, a1) by enumeration.
        std::vector<Real> joint(S1 * S2 * A1, 0.0);
        for (std::size_t s1 = 0; s1 < S1; ++s1)
            for (std::size_t s2 = 0; s2 < S2; ++s2)
                for (std::size_t a = 0; a < A1; ++a) joint[(s1 * S2 + s2) * A1 + a] = p_s1[s1] * p_s2[s2] * pi1(s1, s2, a);

        Vector speak_table;
        for (std::size_t s1 = 0; s1 < S1; ++s1) {
            const Vector got = speaker_policy_exact(pi1, p_s2, s1);
            Vector want(A1, 0.0);
            Real z = 0;
            for (std::size_t s2 = 0; s2 < S2; ++s2)
                for (std::size_t a = 0; a < A1; ++a) {
                    want[a] += joint[(s1 * S2 + s2) * A1 + a];
                    z += joint[(s1 * S2 + s2) * A1 + a];
                }
            for (Real& x : want) x /= z;
            worst = std::max(worst, total_variation(got, want));
            speak_table.insert(speak_table.end(), got.begin(), got.end());
        }
        const FinitePolicy speaker = FinitePolicy::speaker_form(S1, A1, speak_table);

        for (std::size_t a1 = 0; a1 < A1; ++a1) {
            // P(s1 | a1) from the marginal of the speaker's own-observation policy.
            Vector post_want(S1, 0.0);
            Real z = 0;
            for (std::size_t s1 = 0; s1 < S1; ++s1) {
                for (std::size_t s2 = 0; s2 < S2; ++s2) post_want[s1] += joint[(s1 * S2 + s2) * A1 + a1];
                z += post_want[s1];
            }
            for (Real& x : post_want) x /= z;
            const Belief post = listener_posterior(p_s1, a1, speaker);
            worst = std::max(worst, total_variation(post, post_want));
            for (std::size_t s2 = 0; s2 < S2; ++s2) {
                const Vector got = listener_policy_exact(pi2, post, s2);
                Vector want(A2, 0.0);
                Real zz = 0;
                for (std::size_t s1 = 0; s1 < S1; ++s1)
                    for (std::size_t a = 0; a < A2; ++a) {
                        want[a] += pi2(s2, s1, a) * post_want[s1];
                        zz += pi2(s2, s1, a) * post_want[s1];
                    }
                for (Real& x : want) x /= zz;
                worst = std::max(worst, total_variation(got, want));
            }
        }
    }
    Verdict v;
    v.passed = worst < 1e-10;
    v.summary = "max total variation over 100 instances " + fmt("%.2e", worst);
    return v;
}

// 6. Noise-free obstacle recovery from the partner velocity.
Verdict criterion6() {
    const auto rc = config::parse_run_config(config::load_json_file(test_paths::config("role_ordering.json")));
    sim::FieldParams p = rc.bench.field;
    // A clamped velocity no longer encodes the field, so recovery is tested unclamped.
    p.v_max = std::numeric_limits<Real>::infinity();
    const sim::InferenceSettings settings = rc.bench.options.inference;
    const Real r = rc.geometry.known_radius;
    const std::array<field::Attractor, 1> goal{{{rc.bench.workspace.goal}}};
    Rng rng(106);
    Real worst = 0;
    int missing = 0;
    for (int i = 0; i < 100; ++i) {
        const Vec2 q{rng.uniform(0, 8), rng.uniform(-2, 2)};
        const Real angle = rng.uniform(0, 2 * std::numbers::pi);
        const Real rho = rng.uniform(0.02, 0.98) * p.rho0;
        const field::Obstacle truth{q + (rho + r) * Vec2{std::cos(angle), std::sin(angle)}, r};
        const std::array<field::Obstacle, 1> obs{truth};
        const Vec2 vel = field::agent_velocity(q, goal, obs, p);
        const auto got = sim::infer_obstacle(vel, q, goal, p, r, settings);
        if (!got) {
            ++missing;
            continue;
        }
        worst = std::max(worst, norm(got->center - truth.center));
    }
    Verdict v;
    v.passed = missing == 0 && worst < 10 * settings.bisect_tol;
    v.summary = "max center error " + fmt("%.2e", worst) + " (bound " + fmt("%.0e", 10 * settings.bisect_tol) + "), " +
                std::to_string(missing) + " not recovered";
    return v;
}

struct BenchRun {
    config::RunConfig rc;
    bench::BenchmarkReport report;
    std::string json, csv;
};

BenchRun run_config(const std::string& name, unsigned workers, const fs::path& out_dir) {
    BenchRun b;
    b.rc = config::parse_run_config(config::load_json_file(test_paths::config(name)));
    b.report = bench::run_benchmark(b.rc.bench, workers);
    std::ostringstream js, csv, table;
    bench::write_report_json(js, b.report);
    bench::write_report_csv(csv, b.report);
    bench::write_table_csv(table, b.report);
    b.json = js.str();
    b.csv = csv.str();
    if (!out_dir.empty()) {
        const fs::path dir = out_dir / fs::path(name).stem();
        fs::create_directories(dir);
        std::ofstream(dir / "report.json", std::ios::binary) << b.json;
        std::ofstream(dir / "report.csv", std::ios::binary) << b.csv;
        std::ofstream(dir / "table.csv", std::ios::binary) << table.str();
    }
    return b;
}

Verdict trend(const BenchRun& b, const std::string& label) {
    Verdict v;
    int failed = 0;
    for (const auto& a : b.rc.asserts) {
        const auto res = bench::evaluate(a, b.report);
        v.details.push_back((res.passed ? "PASS " : "FAIL ") + res.name);
        for (const auto& d : res.details) v.details.push_back("  " + d);
        if (!res.passed) ++failed;
    }
    v.passed = failed == 0;
    v.summary = label + ": " + std::to_string(b.rc.asserts.size() - failed) + "/" + std::to_string(b.rc.asserts.size()) +
                " trend checks hold";
    if (!b.report.excluded_seeds.empty())
        v.summary += ", " + std::to_string(b.report.excluded_seeds.size()) + " seeds excluded";
    return v;
}

// Criterion 10 is the longest-failure check inside the role ordering config.
Verdict longest_failures(const BenchRun& b) {
    Verdict v;
    bool found = false;
    for (const auto& a : b.rc.asserts) {
        if (a.kind != bench::TrendAssert::Kind::LongestFailures) continue;
        found = true;
        const auto res = bench::evaluate(a, b.report);
        v.passed = v.passed && res.passed;
        for (const auto& d : res.details) v.details.push_back("  " + d);
    }
    v.passed = v.passed && found;
    v.summary = "mean failing-game length is largest for dynamic_T1 at every n";
    return v;
}

Verdict guarded(const std::function<Verdict()>& f) {
    try {
        return f();
    } catch (const std::exception& e) {
        return {false, std::string("error: ") + e.what(), {}};
    }
}

void print(int k, const Verdict& v) {
    std::cout << (v.passed ? "PASS" : "FAIL") << " criterion " << k << ": " << v.summary << '\n';
    for (const auto& d : v.details) std::cout << "    " << d << '\n';
    std::cout.flush();
}

} // namespace

int main(int argc, char** argv) {
    const fs::path out_dir = argc > 1 ? fs::path(argv[1]) : fs::path("acceptance_reports");
    const unsigned hw = std::max(2u, std::thread::hardware_concurrency());
    const unsigned other = hw > 2 ? hw / 2 : hw + 1;

    std::vector<Verdict> verdicts;
    verdicts.push_back(guarded(criterion1));
    verdicts.push_back(guarded(criterion2));
    verdicts.push_back(guarded(criterion3));
    verdicts.push_back(guarded(criterion4));
    verdicts.push_back(guarded(criterion5));
    verdicts.push_back(guarded(criterion6));
    for (std::size_t i = 0; i < verdicts.size(); ++i) print(static_cast<int>(i + 1), verdicts[i]);

    const std::vector<std::pair<std::string, std::string>> trend_configs{
        {"role_ordering.json", "role ordering"}, {"explicit_vs_roles.json", "explicit vs dynamic at equal period"},
        {"noise_sweep.json", "noise robustness"}};
    std::vector<BenchRun> runs;
    for (const auto& [name, label] : trend_configs) {
        const auto t0 = Clock::now();
        try {
            runs.push_back(run_config(name, hw, out_dir));
        } catch (const std::exception& e) {
            std::cerr << name << ": " << e.what() << '\n';
            runs.push_back({});
        }
        std::cout << "  ran " << name << " in " << fmt("%.1f", seconds_since(t0)) << " s with " << hw << " workers\n";
    }
    auto ok = [&](std::size_t i) { return !runs[i].json.empty(); };

    const Verdict c7 = ok(0) ? guarded([&] { return trend(runs[0], "role_ordering"); }) : Verdict{false, "role_ordering did not run", {}};
    const Verdict c8 = ok(1) ? guarded([&] { return trend(runs[1], "explicit_vs_roles"); }) : Verdict{false, "explicit_vs_roles did not run", {}};
    const Verdict c9 =
        ok(2) ? guarded([&] { return trend(runs[2], "noise_sweep"); }) : Verdict{false, "noise_sweep did not run", {}};
    const Verdict c10 = ok(0) ? guarded([&] { return longest_failures(runs[0]); }) : Verdict{false, "role_ordering did not run", {}};
    print(7, c7);
    print(8, c8);
    print(9, c9);
    print(10, c10);

    Verdict c11;
    c11.summary = "reports identical at " + std::to_string(hw) + " and " + std::to_string(other) + " workers";
    for (std::size_t i = 0; i < trend_configs.size(); ++i) {
        if (!ok(i)) {
            c11.passed = false;
            continue;
        }
        try {
            const BenchRun again = run_config(trend_configs[i].first, other, {});
            const bool same = again.json == runs[i].json && again.csv == runs[i].csv;
            c11.details.push_back(trend_configs[i].first + (same ? ": identical" : ": DIFFERENT"));
            c11.passed = c11.passed && same;
        } catch (const std::exception& e) {
            c11.details.push_back(trend_configs[i].first + ": " + e.what());
            c11.passed = false;
        }
    }
    print(11, c11);

    verdicts.insert(verdicts.end(), {c7, c8, c9, c10, c11});
    const auto passed = std::count_if(verdicts.begin(), verdicts.end(), [](const Verdict& v) { return v.passed; });
    std::cout << passed << "/" << verdicts.size() << " criteria passed\n";
    return passed == static_cast<long>(verdicts.size()) ? 0 : 1;
}
