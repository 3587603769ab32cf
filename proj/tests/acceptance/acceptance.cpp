// Copyright 2026 The repara_gap Authors
// SPDX-License-Identifier: Apache-2.0

// Acceptance suite: one PASS/FAIL line per criterion. Exit status is the
// number of failed criteria (capped at 1) so ctest reports any failure.

#include <boost/multiprecision/cpp_bin_float.hpp>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <sys/wait.h>

#include "repara_gap/bounds.hpp"
#include "repara_gap/gap_lab.hpp"
#include "repara_gap/io.hpp"
#include "repara_gap/mdp_checks.hpp"

using namespace repara_gap;
namespace fs = std::filesystem;

namespace {

// Tolerances and budgets.
constexpr double c1_tv_limit = 0.01;
constexpr double c1_seconds = 5.0;
constexpr double c2_fixed_noise_limit = 1e-6;
constexpr double c3_rel_error_limit = 1e-4;
constexpr double c3_step = 1e-5;
constexpr double c3_seconds = 10.0;
constexpr double c4_slack = 1e-12;
constexpr double c5_slack = 1e-12;
constexpr double c6_seconds = 1800.0;
constexpr double c7_superlinear_ratio = 1000.0;
constexpr double c7_flat_ratio = 10.0;
constexpr double c8_exact = 1e-12;
constexpr double c8_continuity = 1e-6;
constexpr double c10_return_limit = 1e-3;
constexpr double c10_kl_rel = 1e-12;

struct Outcome {
    bool pass = false;
    std::string detail;
};

class Clock {
public:
    double seconds() const { return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count(); }

private:
    std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

std::string num(double v)
{
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.4g", v);
    return buf;
}

std::size_t jobs() { return std::max(1u, std::thread::hardware_concurrency()); }

ExperimentConfig desk_config()
{
    ExperimentConfig cfg;
    cfg.env.state_dim = 16;
    cfg.env.action_dim = 4;
    cfg.env.noise_dim = 2;
    cfg.env.horizon = 32;
    cfg.env.reward_kind = RewardKind::linear;
    cfg.policy.input_dim = 16;
    cfg.policy.output_dim = 4;
    cfg.policy.hidden_dims = {32};
    cfg.train.episodes = 64;
    cfg.train.epochs = 256;
    cfg.train.learning_rates = {1e-2, 1e-3};
    cfg.test_episodes = 64;
    for (std::uint64_t s = 0; s < 10; ++s) cfg.seeds.push_back(s);
    return cfg;
}

// ---------------------------------------------------------------------------

Outcome gumbel_max(const MdpCheckReport& rep, double seconds)
{
    const bool ok = rep.max_gumbel_max_tv < c1_tv_limit && rep.gumbel_max_tv.size() == 20 && seconds < c1_seconds;
    return {ok, "max TV " + num(rep.max_gumbel_max_tv) + " over " + std::to_string(rep.gumbel_max_tv.size()) +
                    " distributions (< " + num(c1_tv_limit) + "), suite " + num(seconds) + " s (< " +
                    num(c1_seconds) + " s)"};
}

Outcome relaxation(const MdpCheckReport& rep)
{
    std::string diffs;
    for (double d : rep.relaxation_max_diff) diffs += (diffs.empty() ? "" : ", ") + num(d);
    const bool ok = rep.fixed_noise_diff < c2_fixed_noise_limit && rep.relaxation_nonincreasing;
    return {ok, "fixed-noise diff at tau=0.001 " + num(rep.fixed_noise_diff) + " (< " + num(c2_fixed_noise_limit) +
                    "), max diff over 100 seeds by tau [" + diffs + "] " +
                    (rep.relaxation_nonincreasing ? "nonincreasing" : "NOT nonincreasing")};
}

Outcome gradient_oracle()
{
    const Clock clock;
    double worst = 0.0;
    for (std::uint64_t c = 0; c < 10; ++c) {
        EnvSpec es;
        es.state_dim = 8;
        es.action_dim = 4;
        es.horizon = 16;
        es.env_seed = 500 + c;
        es.reward_kind = c % 2 ? RewardKind::tanh : RewardKind::linear;
        PolicySpec ps;
        ps.input_dim = 8;
        ps.output_dim = 4;
        ps.hidden_dims = {16};
        ps.policy_seed = 600 + c;
        const Env env = make_env(es);
        const NoiseSet noise = sample_noise_set(es, RngStream(700 + c, 1), 4);
        const auto r = gradient_check(env, init_params(ps), noise, 10, c3_step, RngStream(800 + c, 2));
        worst = std::max(worst, r.max_relative_error);
    }
    const double t = clock.seconds();
    return {worst < c3_rel_error_limit && t < c3_seconds,
            "max relative error " + num(worst) + " over 10 configs (< " + num(c3_rel_error_limit) + "), " + num(t) +
                " s (< " + num(c3_seconds) + " s)"};
}

Outcome lemma3()
{
    std::size_t violations = 0, checks = 0;
    double tightest = 0.0;
    for (std::uint64_t e = 0; e < 10; ++e) {
        EnvSpec es;
        es.state_dim = 8;
        es.action_dim = 4;
        es.horizon = 16;
        es.env_seed = 900 + e;
        es.reward_kind = RewardKind::tanh;
        const Env env = make_env(es);
        const NoiseSet noise = sample_noise_set(es, RngStream(e, 11), 8);
        PolicySpec base;
        base.input_dim = 8;
        base.output_dim = 4;
        base.hidden_dims = {16};
        RngStream s(e, 12);
        for (int k = 0; k < 100; ++k) {
            PolicySpec spec = base;
            spec.policy_seed = s.next_bits();
            const PolicyParams a = init_params(spec);
            PolicyParams b = a;
            const double scale = std::pow(10.0, -3.0 * s.next_uniform());
            for (auto& l : b.layers)
                for (double& v : l.flat()) v += scale * s.next_gaussian();
            const double beta = beta_constant(pair_constants(env, a, b, noise), es.gamma, es.horizon);
            const double dist = parameter_distance(a.layers, b.layers);
            double lhs = 0.0;
            for (const auto& n : noise) lhs = std::max(lhs, std::abs(episode_return(env, a, n) - episode_return(env, b, n)));
            ++checks;
            if (lhs > beta * dist * (1.0 + c4_slack)) ++violations;
            tightest = std::max(tightest, lhs / (beta * dist));
        }
    }
    return {violations == 0, std::to_string(violations) + " violations over " + std::to_string(checks) +
                                 " pairs x 8 episodes, largest |dR|/(beta |dtheta|) " + num(tightest)};
}

Outcome lemmas67()
{
    std::size_t gap_violations = 0, step_violations = 0, rows = 0;
    double tightest = 0.0;
    ExperimentConfig cfg = desk_config();
    cfg.train.epochs = 32;
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
        EnvSpec es = cfg.env;
        es.env_seed = seed;
        const Env env = make_env(es);
        PolicySpec ps = cfg.policy;
        ps.policy_seed = seed;
        const TrainResult tr = train(env, ps, cfg.train, train_noise_for(es, cfg.train.episodes, seed));
        const LipschitzConstants l = measured_constants(env, tr.params, 0.0);
        const NoiseSet eval = sample_noise_set(es, RngStream(seed, streams::shift_eval), 512);
        std::vector<Trajectory> base;
        for (const auto& n : eval) base.push_back(rollout(env, tr.params, n));
        for (ShiftTarget target : {ShiftTarget::initialization, ShiftTarget::transition}) {
            const RngStream ds(seed, derive_stream_id({streams::shift_delta, static_cast<std::uint64_t>(target)}));
            for (double zeta : {0.1, 1.0, 10.0}) {
                const EnvShift shift = make_shift(env, target, zeta, ds);
                double shifted = 0.0, unshifted = 0.0;
                for (std::size_t i = 0; i < eval.size(); ++i) {
                    const Trajectory b = rollout(env, tr.params, eval[i], &shift);
                    shifted += b.ret;
                    unshifted += base[i].ret;
                    for (std::size_t t = 0; t < b.states.size(); ++t)
                        if (distance(base[i].states[t], b.states[t]) >
                            state_deviation_bound(l, target, zeta, t) * (1.0 + c5_slack) + c5_slack)
                            ++step_violations;
                }
                const double gap = std::abs(unshifted - shifted) / static_cast<double>(eval.size());
                const double bound = shift_bound(l, target, zeta, es.gamma, es.horizon);
                ++rows;
                if (gap > bound) ++gap_violations;
                tightest = std::max(tightest, gap / bound);
            }
        }
    }
    return {gap_violations == 0 && step_violations == 0,
            std::to_string(gap_violations) + " gap violations over " + std::to_string(rows) +
                " (seed, target, zeta) rows, " + std::to_string(step_violations) +
                " stepwise deviation violations, largest gap/bound " + num(tightest)};
}

Outcome table1_trend()
{
    ExperimentConfig cfg = desk_config();
    cfg.sweep = {SweepParam::policy_tau, {0.001, 0.01, 0.1, 1.0, 10.0, 100.0, 1000.0}};
    const Clock clock;
    const GapReport rep = run_intrinsic(cfg, jobs());
    const double t = clock.seconds();
    std::map<double, std::pair<double, double>> sums;  // tau -> (gap, metric)
    std::map<double, std::size_t> counts;
    for (const auto& r : rep.rows) {
        if (r.failed) continue;
        sums[r.policy_tau].first += r.gap;
        sums[r.policy_tau].second += r.lipschitz_metric;
        ++counts[r.policy_tau];
    }
    std::vector<double> gap, metric;
    std::string detail = "tau:gap/metric";
    for (double tau : cfg.sweep.values) {
        const double n = static_cast<double>(counts[tau]);
        gap.push_back(sums[tau].first / n);
        metric.push_back(sums[tau].second / n);
        detail += " " + num(tau) + ":" + num(gap.back()) + "/" + num(metric.back());
    }
    bool monotone = true;
    for (std::size_t i = 1; i < metric.size(); ++i) monotone = monotone && metric[i] < metric[i - 1];
    const bool endpoints = gap.front() > gap.back();
    return {endpoints && monotone && rep.failures == 0 && t < c6_seconds,
            detail + "; gap(0.001) > gap(1000): " + (endpoints ? "yes" : "no") + ", metric decreasing: " +
                (monotone ? "yes" : "no") + ", failures " + std::to_string(rep.failures) + ", " + num(t) + " s (< " +
                num(c6_seconds) + " s, " + std::to_string(jobs()) + " jobs)"};
}

Outcome tables34_trend()
{
    ExperimentConfig cfg = desk_config();
    cfg.test_episodes = 512;
    cfg.shift.zetas = {1.0, 10.0, 100.0, 1000.0};
    const ExternalReport rep = run_external(cfg, jobs());
    std::map<std::pair<ShiftTarget, double>, double> mean;
    std::size_t diverged = 0;
    for (const auto& r : rep.rows) {
        if (r.diverged) {
            ++diverged;
            continue;
        }
        mean[{r.target, r.zeta}] += r.gap / static_cast<double>(cfg.seeds.size());
    }
    auto tr = [&](double z) { return mean[{ShiftTarget::transition, z}]; };
    auto in = [&](double z) { return mean[{ShiftTarget::initialization, z}]; };
    const double growth = tr(1000.0) / tr(1.0);
    double in_lo = in(1.0), in_hi = in(1.0);
    std::string detail = "zeta:transition/init";
    for (double z : cfg.shift.zetas) {
        in_lo = std::min(in_lo, in(z));
        in_hi = std::max(in_hi, in(z));
        detail += " " + num(z) + ":" + num(tr(z)) + "/" + num(in(z));
    }
    const bool superlinear = growth > c7_superlinear_ratio;
    const bool ordering = tr(100.0) > in(100.0);
    const bool flat = in_hi / in_lo <= c7_flat_ratio;
    return {superlinear && ordering && flat && diverged == 0,
            detail + "; transition growth " + num(growth) + " (> " + num(c7_superlinear_ratio) + "): " +
                (superlinear ? "yes" : "no") + ", transition > init at 100: " + (ordering ? "yes" : "no") +
                ", init spread " + num(in_hi / in_lo) + " (<= " + num(c7_flat_ratio) + "): " + (flat ? "yes" : "no")};
}

Outcome golden_values()
{
    std::vector<std::pair<std::string, bool>> checks;
    auto near = [&](const std::string& name, double got, double want, double tol = c8_exact) {
        checks.emplace_back(name, std::abs(got - want) <= tol);
    };
    const auto lc = [](double t1, double t2, double pi1, double pi2, double r) {
        return LipschitzConstants{t1, t2, pi1, pi2, r};
    };
    const auto nu = [&](double v) { return lc(v - 1.0, 1.0, 1.0, 1.0, 1.0); };
    near("geo_sum(1,5)", geo_sum(1.0, 5), 5.0);
    near("geo_sum(2,3)", geo_sum(2.0, 3), 7.0);
    near("geo_sum(1+1e-10,50)", geo_sum(1.0 + 1e-10, 50), 50.0, c8_continuity);
    near("beta nu=2", beta_constant(nu(2.0), 1.0, 2), 4.0);
    near("beta L_t2=0", beta_constant(lc(0.7, 0.0, 3.0, 2.0, 1.0), 1.0, 10), 0.0);
    near("beta nu=1", beta_constant(lc(0.5, 2.0, 0.25, 1.5, 0.5), 1.0, 3), 6.0 * 0.5 * 2.0 * 1.5);
    const double d = 2.0 / std::exp(1.0);
    near("concentration", concentration_bound(2.0, 8, d), 0.5);
    near("concentration class 1", concentration_bound(2.0, 8, d, 1), concentration_bound(2.0, 8, d));
    near("concentration sqrt n", concentration_bound(2.0, 32, 0.05), 0.5 * concentration_bound(2.0, 8, 0.05));
    near("rademacher beta=0", rademacher_bound(0.0, 10, 4), 0.0);
    near("rademacher m=n", rademacher_bound(3.5, 7, 7, 2.0), 7.0);
    near("rademacher 4m", rademacher_bound(1.2, 40, 9), 2.0 * rademacher_bound(1.2, 10, 9));
    near("init zeta=0", init_shift_bound(nu(2.0), 0.0, 1.0, 5), 0.0);
    near("init nu=1", init_shift_bound(nu(1.0), 0.5, 1.0, 2), 1.5);
    near("init nu=2", init_shift_bound(nu(2.0), 1.0, 1.0, 2), 7.0);
    near("transition zeta=0", transition_shift_bound(nu(2.0), 0.0, 1.0, 5), 0.0);
    near("transition nu=2", transition_shift_bound(nu(2.0), 1.0, 1.0, 2), 4.0);
    near("transition nu=1", transition_shift_bound(nu(1.0), 2.0, 1.0, 3), 12.0);
    {
        BoundInputs in;
        in.constants = lc(0.5, 0.0, 1.0, 1.0, 1.0);
        in.horizon = 4;
        in.m = 100;
        in.n = 16;
        in.c = 10.0;
        const BoundReport r = theorem1_total(in);
        near("theorem1 reduces", r.theorem1_total, r.concentration);
        BoundInputs full = in;
        full.constants = lc(0.6, 0.3, 1.2, 2.0, 1.0);
        full.zeta = 0.4;
        full.epsilon = 0.2;
        const BoundReport f = theorem1_total(full);
        near("theorem1 composes", f.theorem1_total, f.rademacher + f.transition_shift + f.init_shift + f.concentration);
    }
    near("kl identical", gaussian_kl(Vector(1, 0.0), 0.3, 0.3), 0.0);
    near("kl identical m=1000", gaussian_kl(Vector(1000, 0.0), 2.0, 2.0), 0.0);
    near("pac_bayes 2sqrt2", pac_bayes_penalty(0.0, 2, 4.0 / std::exp(1.0)), 2.0 * std::sqrt(2.0));
    checks.emplace_back("pac_bayes increasing in kl", pac_bayes_penalty(2.0, 10, 0.05) > pac_bayes_penalty(1.0, 10, 0.05));

    std::size_t failed = 0;
    std::string names;
    for (const auto& [name, ok] : checks)
        if (!ok) {
            ++failed;
            names += " " + name;
        }
    return {failed == 0, std::to_string(checks.size() - failed) + "/" + std::to_string(checks.size()) +
                             " golden values within " + num(c8_exact) + (failed ? "; failed:" + names : "")};
}

std::string slurp(const fs::path& p)
{
    std::ifstream in(p, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

int run_command(const std::string& cmd)
{
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

Outcome cli_determinism()
{
    const fs::path dir = fs::temp_directory_path() / "repara_gap_acceptance_cli";
    fs::remove_all(dir);
    fs::create_directories(dir);
    const fs::path cfg = dir / "config.json";
    std::ofstream(cfg) << R"({
      "seed": 5,
      "env": {"state_dim": 6, "action_dim": 3, "horizon": 12},
      "policy": {"hidden": [8]},
      "train": {"episodes": 16, "epochs": 16},
      "eval": {"test_episodes": 32},
      "shift": {"zetas": [0, 1, 10]},
      "sweep": {"param": "policy_tau", "values": [0.1, 1, 10]},
      "seeds": [5, 6, 7, 8]
    })";
    std::size_t files = 0, mismatched = 0, failed = 0;
    for (const char* verb : {"check-mdp", "gradcheck", "run-intrinsic", "run-external", "bounds", "pacbayes"}) {
        for (const char* format : {"csv", "json"}) {
            const fs::path a = dir / (std::string(verb) + "_" + format + "_a");
            const fs::path b = dir / (std::string(verb) + "_" + format + "_b");
            const std::string base = std::string(REPARA_CLI_PATH) + " " + verb + " --config " + cfg.string() +
                                     " --format " + format + " --out ";
            failed += run_command(base + a.string() + " >/dev/null 2>&1") != 0;
            failed += run_command(base + b.string() + " --jobs 4 >/dev/null 2>&1") != 0;
            // Rerun into the same directory: atomic replace must reproduce it.
            std::map<std::string, std::string> first;
            if (fs::exists(a))
                for (const auto& e : fs::directory_iterator(a)) first[e.path().filename()] = slurp(e.path());
            failed += run_command(base + a.string() + " >/dev/null 2>&1") != 0;
            for (const auto& [name, content] : first) {
                ++files;
                mismatched += slurp(b / name) != content || slurp(a / name) != content;
            }
        }
    }
    fs::remove_all(dir);
    return {files > 0 && mismatched == 0 && failed == 0,
            std::to_string(files) + " output files compared across reruns and --jobs 4, " +
                std::to_string(mismatched) + " differ, " + std::to_string(failed) + " nonzero exits"};
}

double kl_oracle(const Vector& theta, double sq, double sp)
{
    using big = boost::multiprecision::cpp_bin_float_50;
    const big m = static_cast<double>(theta.size());
    big norm = 0;
    for (double v : theta) norm += big(v) * big(v);
    const big q = sq, p = sp;
    return static_cast<double>(m * log(p / q) + (m * q * q + norm) / (2 * p * p) - m / 2);
}

Outcome pac_bayes_continuity()
{
    const ExperimentConfig cfg = desk_config();
    PolicySpec ps = cfg.policy;
    ps.policy_seed = 0;
    const Env env = make_env(cfg.env);
    const NoiseSet noise = train_noise_for(cfg.env, cfg.train.episodes, 0);
    const TrainResult tr = train(env, ps, cfg.train, noise);
    const double base = mean_return(env, tr.params, noise);
    const double perturbed = pac_bayes_expected_return(env, tr.params, 1e-4, noise, 256, RngStream(0, 0x706163ULL));
    const double shift = std::abs(perturbed - base);

    double worst = 0.0;
    RngStream s(10, 20);
    std::vector<Vector> cases{flatten(tr.params.layers)};
    for (int i = 0; i < 999; ++i) cases.push_back(sample_gaussian(s, 1 + s.next_bits() % 300));
    for (std::size_t i = 0; i < cases.size(); ++i) {
        const double sq = i == 0 ? 1e-4 : std::pow(10.0, -4.0 + 4.0 * s.next_uniform());
        const double sp = i == 0 ? 1.0 : std::pow(10.0, -2.0 + 3.0 * s.next_uniform());
        const double oracle = kl_oracle(cases[i], sq, sp);
        worst = std::max(worst, std::abs(gaussian_kl(cases[i], sq, sp) - oracle) / std::max(1.0, std::abs(oracle)));
    }
    return {shift < c10_return_limit && worst <= c10_kl_rel,
            "trained return " + num(base) + ", perturbed " + num(perturbed) + ", |diff| " + num(shift) + " (< " +
                num(c10_return_limit) + "); gaussian_kl max relative error " + num(worst) + " over " +
                std::to_string(cases.size()) + " cases (<= " + num(c10_kl_rel) + ")"};
}

} // namespace

int main()
{
    std::size_t failures = 0;
    auto report = [&](int id, const char* name, const std::function<Outcome()>& f) {
        Outcome o;
        const Clock clock;
        try {
            o = f();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        failures += o.pass ? 0 : 1;
        std::printf("%s criterion %d (%s): %s [%.1f s]\n", o.pass ? "PASS" : "FAIL", id, name, o.detail.c_str(),
                    clock.seconds());
        std::fflush(stdout);
    };

    MdpCheckReport mdp;
    double mdp_seconds = 0.0;
    {
        const Clock clock;
        mdp = run_mdp_checks(MdpCheckConfig{});
        mdp_seconds = clock.seconds();
    }
    report(1, "gumbel-max sampling", [&] { return gumbel_max(mdp, mdp_seconds); });
    report(2, "relaxation limit", [&] { return relaxation(mdp); });
    report(3, "gradient oracle", gradient_oracle);
    report(4, "return Lipschitz in parameters", lemma3);
    report(5, "shift bounds and state deviations", lemmas67);
    report(6, "intrinsic gap vs policy temperature", table1_trend);
    report(7, "external gap vs shift size", tables34_trend);
    report(8, "bound golden values", golden_values);
    report(9, "CLI determinism", cli_determinism);
    report(10, "PAC-Bayes continuity", pac_bayes_continuity);
    std::printf("%zu of 10 criteria failed\n", failures);
    return failures == 0 ? 0 : 1;
}
