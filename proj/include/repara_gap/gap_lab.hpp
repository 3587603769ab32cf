/*
   Copyright 2026 The repara_gap Authors

   Licensed under the Apache License, Version 2.0 (the "License");
   you may not use this file except in compliance with the License.
   You may obtain a copy of the License at

       http://www.apache.org/licenses/LICENSE-2.0

   Unless required by applicable law or agreed to in writing, software
   distributed under the License is distributed on an "AS IS" BASIS,
   WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
   See the License for the specific language governing permissions and
   limitations under the License.
*/

#pragma once

// Intrinsic and external generalization-gap experiments.
//
// Intrinsic: train on a fixed set of n episode noises, evaluate on a fresh
// set, report |train - test|. External: train once, then compare the mean
// return in the training environment with a shifted one on shared noise.
//
// Within an experiment the environment depends only on env_seed and the
// sweep point; each trial seed reseeds policy initialization and noise.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <exception>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include "repara_gap/bounds.hpp"
#include "repara_gap/env.hpp"
#include "repara_gap/errors.hpp"
#include "repara_gap/io.hpp"
#include "repara_gap/policy.hpp"
#include "repara_gap/rng.hpp"
#include "repara_gap/train.hpp"

namespace repara_gap {

enum class SweepParam { none, policy_tau, trans_tau_states, trans_tau_actions, hidden_width };

inline std::string_view to_string(SweepParam p) noexcept
{
    switch (p) {
    case SweepParam::none: return "none";
    case SweepParam::policy_tau: return "policy_tau";
    case SweepParam::trans_tau_states: return "trans_tau_states";
    case SweepParam::trans_tau_actions: return "trans_tau_actions";
    case SweepParam::hidden_width: return "hidden_width";
    }
    return "none";
}

struct ShiftSpec {
    std::vector<ShiftTarget> targets{ShiftTarget::initialization, ShiftTarget::transition};
    std::vector<double> zetas{1.0, 10.0, 100.0, 1000.0};
};

struct SweepSpec {
    SweepParam param = SweepParam::none;
    std::vector<double> values;
};

/// Inputs of the `bounds` and `pacbayes` commands.
struct BoundsSpec {
    double zeta = 0.0;
    double epsilon = 0.0;
    double delta = 0.05;
    double rademacher_c = 1.0;
    std::optional<double> reward_range;          ///< c; measured when absent
    std::optional<LipschitzConstants> constants;  ///< measured on a trained policy when absent
    double sigma_q = 1e-4;
    double sigma_p = 1.0;
    std::size_t n_mc = 256;
};

struct ExperimentConfig {
    std::uint64_t seed = 0;
    EnvSpec env;
    PolicySpec policy;
    TrainConfig train;
    std::size_t test_episodes = 64;
    ShiftSpec shift;
    SweepSpec sweep;
    std::vector<std::uint64_t> seeds;
    BoundsSpec bounds;
};

inline void validate(const ExperimentConfig& cfg)
{
    validate(cfg.env);
    validate(cfg.policy);
    validate(cfg.train);
    require(cfg.test_episodes >= 1, "eval.test_episodes must be >= 1");
    require(!cfg.seeds.empty(), "seeds must be nonempty");
    require(cfg.sweep.param == SweepParam::none || !cfg.sweep.values.empty(),
            "sweep.values must be nonempty when sweep.param is set");
    for (double z : cfg.shift.zetas) require(z >= 0.0 && std::isfinite(z), "shift.zetas must be finite and >= 0");
    if (cfg.sweep.param == SweepParam::hidden_width)
        for (double v : cfg.sweep.values)
            require(v >= 1.0 && v == std::floor(v), "sweep.values must be positive integers for hidden_width");
    else
        for (double v : cfg.sweep.values) require(v > 0.0, "sweep.values must be positive");
}

namespace streams {
inline constexpr std::uint64_t train_noise = derive_stream_id({0x747261696eULL});
inline constexpr std::uint64_t test_noise = derive_stream_id({0x74657374ULL});
inline constexpr std::uint64_t shift_eval = derive_stream_id({0x6576616cULL});
inline constexpr std::uint64_t shift_delta = derive_stream_id({0x64656c7461ULL});
} // namespace streams

inline NoiseSet train_noise_for(const EnvSpec& spec, std::size_t n, std::uint64_t seed)
{
    return sample_noise_set(spec, RngStream(seed, streams::train_noise), n);
}

inline NoiseSet test_noise_for(const EnvSpec& spec, std::size_t n, std::uint64_t seed)
{
    return sample_noise_set(spec, RngStream(seed, streams::test_noise), n);
}

/// The environment and policy specs at one sweep point.
struct SweepPoint {
    double value = std::numeric_limits<double>::quiet_NaN();
    EnvSpec env;
    PolicySpec policy;
};

inline SweepPoint apply_sweep(const ExperimentConfig& cfg, std::optional<double> value)
{
    SweepPoint p{value.value_or(std::numeric_limits<double>::quiet_NaN()), cfg.env, cfg.policy};
    p.policy.input_dim = cfg.env.state_dim;
    p.policy.output_dim = cfg.env.action_dim;
    if (!value) return p;
    switch (cfg.sweep.param) {
    case SweepParam::none: break;
    case SweepParam::policy_tau: p.policy.tau = *value; break;
    case SweepParam::trans_tau_states: p.env.trans_tau_states = *value; break;
    case SweepParam::trans_tau_actions: p.env.trans_tau_actions = *value; break;
    case SweepParam::hidden_width:
        for (auto& h : p.policy.hidden_dims) h = static_cast<std::size_t>(*value);
        break;
    }
    return p;
}

inline std::vector<SweepPoint> sweep_points(const ExperimentConfig& cfg)
{
    std::vector<SweepPoint> out;
    if (cfg.sweep.param == SweepParam::none) {
        out.push_back(apply_sweep(cfg, std::nullopt));
    } else {
        for (double v : cfg.sweep.values) out.push_back(apply_sweep(cfg, v));
    }
    return out;
}

/// Runs f(0..n-1) on up to `jobs` threads. Results must be written to
/// per-index slots; the first failing index (lowest) is rethrown.
template <class F>
void parallel_for(std::size_t n, std::size_t jobs, F&& f)
{
    if (jobs <= 1 || n <= 1) {
        for (std::size_t i = 0; i < n; ++i) f(i);
        return;
    }
    std::vector<std::exception_ptr> errors(n);
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> workers;
    const std::size_t count = std::min(jobs, n);
    workers.reserve(count);
    for (std::size_t w = 0; w < count; ++w)
        workers.emplace_back([&] {
            for (std::size_t i = next++; i < n; i = next++) {
                try {
                    f(i);
                } catch (...) {
                    errors[i] = std::current_exception();
                }
            }
        });
    for (auto& t : workers) t.join();
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
}

// ---------------------------------------------------------------------------
// Rows and reports

struct CurveRow {
    std::uint64_t seed = 0;
    double sweep_value = 0.0;
    CurvePoint point;
};

struct IntrinsicRow {
    std::uint64_t seed = 0;
    SweepParam sweep_param = SweepParam::none;
    double sweep_value = 0.0;
    double policy_tau = 0.0;
    double trans_tau_states = 0.0;
    double trans_tau_actions = 0.0;
    std::size_t n_params = 0;
    double lr_selected = 0.0;
    double train_return = 0.0;
    double test_return = 0.0;
    double gap = 0.0;
    double lipschitz_metric = 0.0;
    bool failed = false;
    std::string failure;
};

struct GapReport {
    std::vector<IntrinsicRow> rows;
    std::vector<CurveRow> curve;
    std::size_t failures = 0;
};

struct ExternalRow {
    std::uint64_t seed = 0;
    ShiftTarget target = ShiftTarget::initialization;
    double zeta = 0.0;
    double base_return = 0.0;
    double shifted_return = 0.0;
    double gap = 0.0;
    double bound = 0.0;
    bool diverged = false;
};

struct ExternalReport {
    std::vector<ExternalRow> rows;
    std::vector<CurveRow> curve;
};

namespace detail {

inline std::vector<CurveRow> tag_curve(const std::vector<CurvePoint>& pts, std::uint64_t seed, double value)
{
    std::vector<CurveRow> out;
    out.reserve(pts.size());
    for (const auto& p : pts) out.push_back({seed, value, p});
    return out;
}

} // namespace detail

/// One intrinsic trial: train on seed's train noise, evaluate on its test noise.
inline IntrinsicRow intrinsic_trial(const ExperimentConfig& cfg, const SweepPoint& point, const Env& env,
                                    std::uint64_t seed, std::vector<CurveRow>* curve = nullptr)
{
    IntrinsicRow row;
    row.seed = seed;
    row.sweep_param = cfg.sweep.param;
    row.sweep_value = point.value;
    row.policy_tau = point.policy.tau;
    row.trans_tau_states = point.env.trans_tau_states;
    row.trans_tau_actions = point.env.trans_tau_actions;
    row.n_params = parameter_count(point.policy);

    PolicySpec ps = point.policy;
    ps.policy_seed = seed;
    const NoiseSet train_set = train_noise_for(point.env, cfg.train.episodes, seed);
    const NoiseSet test_set = test_noise_for(point.env, cfg.test_episodes, seed);
    try {
        const TrainResult tr = train(env, ps, cfg.train, train_set);
        row.lr_selected = tr.lr_selected;
        row.train_return = tr.final_return;
        row.test_return = mean_return(env, tr.params, test_set);
        row.gap = std::abs(row.train_return - row.test_return);
        row.lipschitz_metric = lipschitz_metric(tr.params, LipschitzMode::frobenius);
        if (curve) *curve = detail::tag_curve(tr.curve, seed, point.value);
    } catch (const Error& e) {
        if (e.code() != ErrorCode::training_failed && e.code() != ErrorCode::rollout_diverged) throw;
        const double nan = std::numeric_limits<double>::quiet_NaN();
        row.lr_selected = row.train_return = row.test_return = row.gap = row.lipschitz_metric = nan;
        row.failed = true;
        row.failure = e.what();
    }
    return row;
}

/// Every (sweep point, seed) pair, rows ordered by sweep point then seed.
inline GapReport run_intrinsic(const ExperimentConfig& cfg, std::size_t jobs = 1)
{
    validate(cfg);
    const auto points = sweep_points(cfg);
    std::vector<Env> envs;
    for (const auto& p : points) envs.push_back(make_env(p.env));
    const std::size_t n_seeds = cfg.seeds.size();
    std::vector<IntrinsicRow> rows(points.size() * n_seeds);
    std::vector<std::vector<CurveRow>> curves(rows.size());
    parallel_for(rows.size(), jobs, [&](std::size_t i) {
        const std::size_t p = i / n_seeds;
        rows[i] = intrinsic_trial(cfg, points[p], envs[p], cfg.seeds[i % n_seeds], &curves[i]);
    });
    GapReport rep;
    rep.rows = std::move(rows);
    for (auto& c : curves) rep.curve.insert(rep.curve.end(), c.begin(), c.end());
    for (const auto& r : rep.rows) rep.failures += r.failed ? 1 : 0;
    return rep;
}

/// Intrinsic experiment over hidden widths.
inline GapReport run_param_sweep(const ExperimentConfig& cfg, std::size_t jobs = 1)
{
    require(cfg.sweep.param == SweepParam::hidden_width, "run-sweep requires sweep.param = hidden_width");
    return run_intrinsic(cfg, jobs);
}

/// Trained-once external comparison for one seed.
inline std::vector<ExternalRow> external_trial(const ExperimentConfig& cfg, const Env& env, std::uint64_t seed,
                                               std::vector<CurveRow>* curve = nullptr)
{
    const SweepPoint point = apply_sweep(cfg, std::nullopt);
    PolicySpec ps = point.policy;
    ps.policy_seed = seed;
    const NoiseSet train_set = train_noise_for(cfg.env, cfg.train.episodes, seed);
    const TrainResult tr = train(env, ps, cfg.train, train_set);
    if (curve) *curve = detail::tag_curve(tr.curve, seed, point.value);

    const NoiseSet eval = sample_noise_set(cfg.env, RngStream(seed, streams::shift_eval), cfg.test_episodes);
    const double base = mean_return(env, tr.params, eval);
    const LipschitzConstants l = measured_constants(env, tr.params, 0.0);

    std::vector<ExternalRow> rows;
    for (ShiftTarget target : cfg.shift.targets) {
        // One sign pattern per (seed, target); zeta only rescales it.
        const RngStream delta_stream(seed, derive_stream_id({streams::shift_delta, static_cast<std::uint64_t>(target)}));
        for (double zeta : cfg.shift.zetas) {
            ExternalRow row;
            row.seed = seed;
            row.target = target;
            row.zeta = zeta;
            row.base_return = base;
            row.bound = shift_bound(l, target, zeta, cfg.env.gamma, cfg.env.horizon);
            const EnvShift shift = make_shift(env, target, zeta, delta_stream);
            try {
                row.shifted_return = mean_return(env, tr.params, eval, &shift);
                row.gap = std::abs(base - row.shifted_return);
            } catch (const RolloutDiverged&) {
                row.diverged = true;
                row.shifted_return = std::numeric_limits<double>::infinity();
                row.gap = std::numeric_limits<double>::infinity();
            }
            rows.push_back(row);
        }
    }
    return rows;
}

inline ExternalReport run_external(const ExperimentConfig& cfg, std::size_t jobs = 1)
{
    validate(cfg);
    require(!cfg.shift.targets.empty() && !cfg.shift.zetas.empty(), "shift.targets and shift.zetas must be nonempty");
    const Env env = make_env(apply_sweep(cfg, std::nullopt).env);
    std::vector<std::vector<ExternalRow>> per_seed(cfg.seeds.size());
    std::vector<std::vector<CurveRow>> curves(cfg.seeds.size());
    parallel_for(cfg.seeds.size(), jobs, [&](std::size_t i) {
        per_seed[i] = external_trial(cfg, env, cfg.seeds[i], &curves[i]);
    });
    ExternalReport rep;
    for (auto& r : per_seed) rep.rows.insert(rep.rows.end(), r.begin(), r.end());
    for (auto& c : curves) rep.curve.insert(rep.curve.end(), c.begin(), c.end());
    return rep;
}

// ---------------------------------------------------------------------------
// Aggregation

struct AggregateInput {
    std::vector<std::string> key;
    std::vector<double> metrics;
    bool failed = false;
};

struct AggregateRow {
    std::vector<std::string> key;
    std::vector<double> mean;
    std::vector<double> std;  ///< sample standard deviation; 0 for a single value
    std::vector<std::size_t> count;
    std::size_t failures = 0;
};

/// Groups by key in order of first appearance; failed rows are only counted.
inline std::vector<AggregateRow> aggregate(const std::vector<AggregateInput>& rows)
{
    require(!rows.empty(), "aggregate: no rows");
    const std::size_t n_metrics = rows.front().metrics.size();
    std::vector<AggregateRow> out;
    std::map<std::vector<std::string>, std::size_t> index;
    std::vector<std::vector<std::vector<double>>> values;
    for (const auto& r : rows) {
        require(r.metrics.size() == n_metrics, "aggregate: metric count mismatch");
        auto [it, inserted] = index.try_emplace(r.key, out.size());
        if (inserted) {
            out.push_back({r.key, {}, {}, {}, 0});
            values.emplace_back(n_metrics);
        }
        const std::size_t g = it->second;
        if (r.failed) {
            ++out[g].failures;
            continue;
        }
        for (std::size_t m = 0; m < n_metrics; ++m) values[g][m].push_back(r.metrics[m]);
    }
    for (std::size_t g = 0; g < out.size(); ++g) {
        for (std::size_t m = 0; m < n_metrics; ++m) {
            const auto& v = values[g][m];
            double mean = std::numeric_limits<double>::quiet_NaN();
            double sd = std::numeric_limits<double>::quiet_NaN();
            if (!v.empty()) {
                mean = 0.0;
                for (double x : v) mean += x;
                mean /= static_cast<double>(v.size());
                sd = 0.0;
                if (v.size() > 1) {
                    for (double x : v) sd += (x - mean) * (x - mean);
                    sd = std::sqrt(sd / static_cast<double>(v.size() - 1));
                }
            }
            out[g].mean.push_back(mean);
            out[g].std.push_back(sd);
            out[g].count.push_back(v.size());
        }
    }
    return out;
}

inline CsvTable aggregate_table(const std::vector<std::string>& key_names, const std::vector<std::string>& metric_names,
                                const std::vector<AggregateRow>& rows)
{
    std::vector<std::string> header = key_names;
    for (const auto& m : metric_names) {
        header.push_back(m + "_mean");
        header.push_back(m + "_std");
        header.push_back(m + "_count");
    }
    header.push_back("failures");
    CsvTable t(header);
    for (const auto& r : rows) {
        for (const auto& k : r.key) t.cell(k);
        for (std::size_t m = 0; m < metric_names.size(); ++m) t.cell(r.mean[m]).cell(r.std[m]).cell(r.count[m]);
        t.cell(r.failures);
        t.end_row();
    }
    return t;
}

// ---------------------------------------------------------------------------
// Tables

inline const std::vector<std::string>& intrinsic_header()
{
    static const std::vector<std::string> h{"seed", "sweep_param", "sweep_value", "policy_tau",
                                            "trans_tau_states", "trans_tau_actions", "n_params",
                                            "lr_selected", "train_return", "test_return", "gap",
                                            "lipschitz_metric"};
    return h;
}

inline const std::vector<std::string>& external_header()
{
    static const std::vector<std::string> h{"seed", "target", "zeta", "base_return",
                                            "shifted_return", "gap", "bound", "diverged"};
    return h;
}

inline CsvTable intrinsic_table(const GapReport& rep)
{
    CsvTable t(intrinsic_header());
    for (const auto& r : rep.rows) {
        t.cell(r.seed).cell(to_string(r.sweep_param)).cell(r.sweep_value).cell(r.policy_tau);
        t.cell(r.trans_tau_states).cell(r.trans_tau_actions).cell(static_cast<std::uint64_t>(r.n_params));
        t.cell(r.lr_selected).cell(r.train_return).cell(r.test_return).cell(r.gap).cell(r.lipschitz_metric);
        t.end_row();
    }
    return t;
}

inline CsvTable intrinsic_aggregate_table(const GapReport& rep)
{
    std::vector<AggregateInput> in;
    for (const auto& r : rep.rows)
        in.push_back({{std::string(to_string(r.sweep_param)), format_double(r.sweep_value), format_double(r.policy_tau),
                       format_double(r.trans_tau_states), format_double(r.trans_tau_actions),
                       std::to_string(r.n_params)},
                      {r.train_return, r.test_return, r.gap, r.lipschitz_metric},
                      r.failed});
    return aggregate_table({"sweep_param", "sweep_value", "policy_tau", "trans_tau_states", "trans_tau_actions", "n_params"},
                           {"train_return", "test_return", "gap", "lipschitz_metric"}, aggregate(in));
}

inline CsvTable external_table(const ExternalReport& rep)
{
    CsvTable t(external_header());
    for (const auto& r : rep.rows) {
        t.cell(r.seed).cell(to_string(r.target)).cell(r.zeta).cell(r.base_return).cell(r.shifted_return);
        t.cell(r.gap).cell(r.bound).flag(r.diverged);
        t.end_row();
    }
    return t;
}

inline CsvTable external_aggregate_table(const ExternalReport& rep)
{
    std::vector<AggregateInput> in;
    for (const auto& r : rep.rows)
        in.push_back({{std::string(to_string(r.target)), format_double(r.zeta)},
                      {r.base_return, r.shifted_return, r.gap, r.bound},
                      r.diverged});
    return aggregate_table({"target", "zeta"}, {"base_return", "shifted_return", "gap", "bound"}, aggregate(in));
}

inline CsvTable curve_table(const std::vector<CurveRow>& curve)
{
    CsvTable t({"seed", "sweep_value", "run", "epoch", "lr", "mean_train_return"});
    for (const auto& c : curve) {
        t.cell(c.seed).cell(c.sweep_value).cell(static_cast<std::uint64_t>(c.point.run));
        t.cell(static_cast<std::uint64_t>(c.point.epoch)).cell(c.point.lr).cell(c.point.mean_train_return);
        t.end_row();
    }
    return t;
}

} // namespace repara_gap
