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

// Deterministic episodes and pathwise training.
//
// With the peripheral noise fixed, an episode is a deterministic function of
// the policy parameters, so the return can be differentiated directly through
// the rollout s_0 -> s_1 -> ... -> s_T and maximized with Adam.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "repara_gap/env.hpp"
#include "repara_gap/errors.hpp"
#include "repara_gap/linalg.hpp"
#include "repara_gap/policy.hpp"
#include "repara_gap/rng.hpp"

namespace repara_gap {

struct Trajectory {
    std::vector<Vector> states;   ///< s_0 .. s_T
    std::vector<Vector> actions;  ///< a_0 .. a_{T-1}
    Vector rewards;               ///< r_0 .. r_T
    double ret = 0.0;
};

/// Any |state entry| above this aborts the rollout.
inline constexpr double divergence_limit = 1e12;

namespace detail {

inline void check_state(std::span<const double> s, std::size_t step)
{
    for (double v : s)
        if (!(std::abs(v) <= divergence_limit)) throw RolloutDiverged(step);
}

inline void check_dims(const Env& env, const PolicyParams& params, const EpisodeNoise& noise)
{
    require(params.spec.input_dim == env.spec.state_dim, "rollout: policy input_dim != state_dim");
    require(params.spec.output_dim == env.spec.action_dim, "rollout: policy output_dim != action_dim");
    require(noise.xi0.size() == env.spec.state_dim, "rollout: xi0 length");
    require(noise.xi.size() >= env.spec.horizon, "rollout: too few transition noise vectors");
}

} // namespace detail

inline Trajectory rollout(const Env& env, const PolicyParams& params, const EpisodeNoise& noise,
                          const EnvShift* shift = nullptr)
{
    detail::check_dims(env, params, noise);
    const std::size_t horizon = env.spec.horizon;
    Trajectory tr;
    tr.states.reserve(horizon + 1);
    tr.actions.reserve(horizon);
    tr.states.push_back(init_state(env, noise.xi0, shift));
    detail::check_state(tr.states[0], 0);

    ForwardCache cache;
    double discount = 1.0;
    for (std::size_t t = 0;; ++t) {
        const double r = reward(env, tr.states[t]);
        tr.rewards.push_back(r);
        tr.ret += discount * r;
        if (t == horizon) break;
        discount *= env.spec.gamma;
        forward_cached(params, tr.states[t], cache);
        tr.actions.push_back(cache.probs);
        Vector next(env.spec.state_dim);
        transition_into(env, tr.states[t], cache.probs, noise.xi[t], shift, next);
        detail::check_state(next, t + 1);
        tr.states.push_back(std::move(next));
    }
    return tr;
}

/// Return only; same arithmetic as rollout() without storing the trajectory.
inline double episode_return(const Env& env, const PolicyParams& params, const EpisodeNoise& noise,
                             const EnvShift* shift = nullptr)
{
    detail::check_dims(env, params, noise);
    Vector s = init_state(env, noise.xi0, shift);
    detail::check_state(s, 0);
    Vector next(s.size());
    ForwardCache cache;
    double ret = 0.0;
    double discount = 1.0;
    for (std::size_t t = 0;; ++t) {
        ret += discount * reward(env, s);
        if (t == env.spec.horizon) break;
        discount *= env.spec.gamma;
        forward_cached(params, s, cache);
        transition_into(env, s, cache.probs, noise.xi[t], shift, next);
        detail::check_state(next, t + 1);
        std::swap(s, next);
    }
    return ret;
}

inline double mean_return(const Env& env, const PolicyParams& params, const NoiseSet& noise,
                          const EnvShift* shift = nullptr)
{
    require(!noise.empty(), "mean_return: empty noise set");
    double total = 0.0;
    for (const auto& n : noise) total += episode_return(env, params, n, shift);
    return total / static_cast<double>(noise.size());
}

/// Reusable buffers for return_gradient().
struct GradientWorkspace {
    std::vector<Vector> states;
    std::vector<ForwardCache> caches;
    Vector ds, ds_next, da, grad_r;
    BackwardScratch scratch;
};

/// Adds dR/dtheta of one episode into grad and returns R. Reverse mode:
///   ds_T = gamma^T r'(s_T)
///   ds_t = gamma^t r'(s_t) + ds_{t+1} T1^T + (da_t backpropagated through pi),
///   da_t = ds_{t+1} T2^T.
inline double accumulate_return_gradient(const Env& env, const PolicyParams& params,
                                         const EpisodeNoise& noise, LayerStack& grad,
                                         GradientWorkspace& ws, const EnvShift* shift = nullptr)
{
    detail::check_dims(env, params, noise);
    const std::size_t horizon = env.spec.horizon;
    const std::size_t ns = env.spec.state_dim;
    ws.states.resize(horizon + 1);
    ws.caches.resize(horizon);

    ws.states[0] = init_state(env, noise.xi0, shift);
    detail::check_state(ws.states[0], 0);
    double ret = 0.0;
    double discount = 1.0;
    Vector discounts(horizon + 1);
    for (std::size_t t = 0;; ++t) {
        discounts[t] = discount;
        ret += discount * reward(env, ws.states[t]);
        if (t == horizon) break;
        discount *= env.spec.gamma;
        forward_cached(params, ws.states[t], ws.caches[t]);
        ws.states[t + 1].resize(ns);
        transition_into(env, ws.states[t], ws.caches[t].probs, noise.xi[t], shift, ws.states[t + 1]);
        detail::check_state(ws.states[t + 1], t + 1);
    }

    ws.ds_next.resize(ns);
    ws.ds.resize(ns);
    ws.grad_r.resize(ns);
    ws.da.resize(env.spec.action_dim);
    reward_gradient(env, ws.states[horizon], ws.ds_next);
    for (double& v : ws.ds_next) v *= discounts[horizon];

    for (std::size_t t = horizon; t-- > 0;) {
        reward_gradient(env, ws.states[t], ws.grad_r);
        for (std::size_t i = 0; i < ns; ++i) ws.ds[i] = discounts[t] * ws.grad_r[i];
        add_times_transpose(ws.ds_next, env.t1, ws.ds);
        std::fill(ws.da.begin(), ws.da.end(), 0.0);
        add_times_transpose(ws.ds_next, env.t2, ws.da);
        backward(params, ws.caches[t], ws.da, grad, ws.ds, ws.scratch);
        std::swap(ws.ds, ws.ds_next);
    }
    return ret;
}

inline LayerStack return_gradient(const Env& env, const PolicyParams& params, const EpisodeNoise& noise,
                                  const EnvShift* shift = nullptr)
{
    LayerStack grad = zeros_like(params.layers);
    GradientWorkspace ws;
    accumulate_return_gradient(env, params, noise, grad, ws, shift);
    return grad;
}

struct BatchGradient {
    LayerStack grad;   ///< mean over episodes
    double mean_return = 0.0;
};

/// Full-batch gradient of (1/n) sum_i R_i, accumulated in episode order.
inline BatchGradient batch_gradient(const Env& env, const PolicyParams& params, const NoiseSet& noise,
                                    GradientWorkspace& ws)
{
    require(!noise.empty(), "batch_gradient: empty noise set");
    BatchGradient out{zeros_like(params.layers), 0.0};
    for (const auto& n : noise) out.mean_return += accumulate_return_gradient(env, params, n, out.grad, ws);
    const double inv = 1.0 / static_cast<double>(noise.size());
    for (auto& g : out.grad) g *= inv;
    out.mean_return *= inv;
    return out;
}

// ---------------------------------------------------------------------------
// Adam

struct AdamConfig {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

struct AdamState {
    LayerStack m;
    LayerStack v;
    long step = 0;

    static AdamState for_params(const PolicyParams& params)
    {
        return AdamState{zeros_like(params.layers), zeros_like(params.layers), 0};
    }
};

/// Bias-corrected Adam step in the ascent direction.
inline void adam_step(PolicyParams& params, const LayerStack& grad, AdamState& state, double lr,
                      const AdamConfig& cfg = {})
{
    require(grad.size() == params.layers.size(), "adam_step: gradient layer count mismatch");
    ++state.step;
    const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
    const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
    for (std::size_t l = 0; l < params.layers.size(); ++l) {
        auto theta = params.layers[l].flat();
        const auto g = grad[l].flat();
        auto m = state.m[l].flat();
        auto v = state.v[l].flat();
        require(g.size() == theta.size(), "adam_step: gradient shape mismatch");
        for (std::size_t i = 0; i < theta.size(); ++i) {
            m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
            v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
            const double m_hat = m[i] / c1;
            const double v_hat = v[i] / c2;
            theta[i] += lr * m_hat / (std::sqrt(v_hat) + cfg.epsilon);
        }
    }
}

// ---------------------------------------------------------------------------
// Training

struct TrainConfig {
    std::size_t episodes = 64;
    std::size_t epochs = 256;
    std::vector<double> learning_rates{1e-2, 1e-3};
    std::size_t halving_patience = 8;
    AdamConfig adam;
};

inline void validate(const TrainConfig& cfg)
{
    require(cfg.episodes >= 1, "TrainConfig: episodes must be >= 1");
    require(cfg.epochs >= 1, "TrainConfig: epochs must be >= 1");
    require(!cfg.learning_rates.empty(), "TrainConfig: at least one learning rate");
    for (double lr : cfg.learning_rates) require(lr > 0.0, "TrainConfig: learning rates must be positive");
    require(cfg.halving_patience >= 1, "TrainConfig: halving_patience must be >= 1");
}

struct CurvePoint {
    std::size_t run = 0;     ///< index into learning_rates
    std::size_t epoch = 0;
    double lr = 0.0;         ///< learning rate used in this epoch
    double mean_train_return = 0.0;
};

struct TrainRun {
    double initial_lr = 0.0;
    bool failed = false;
    std::string failure;
    double final_return = 0.0;  ///< mean training return of the final parameters
    PolicyParams params;
};

struct TrainResult {
    PolicyParams params;        ///< selected run's final parameters
    std::size_t selected_run = 0;
    double lr_selected = 0.0;
    double final_return = 0.0;
    std::vector<TrainRun> runs;
    std::vector<CurvePoint> curve;
};

/// One training run at a fixed initial learning rate; halves lr after
/// `halving_patience` epochs without improvement of the epoch-mean return.
inline TrainRun train_single(const Env& env, const PolicyParams& init, const TrainConfig& cfg,
                             const NoiseSet& train_noise, std::size_t run_index, double lr0,
                             std::vector<CurvePoint>& curve)
{
    TrainRun run;
    run.initial_lr = lr0;
    run.params = init;
    AdamState adam = AdamState::for_params(init);
    GradientWorkspace ws;
    double lr = lr0;
    double best = -std::numeric_limits<double>::infinity();
    std::size_t stale = 0;
    try {
        for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
            const BatchGradient bg = batch_gradient(env, run.params, train_noise, ws);
            curve.push_back({run_index, epoch, lr, bg.mean_return});
            if (bg.mean_return > best) {
                best = bg.mean_return;
                stale = 0;
            } else if (++stale >= cfg.halving_patience) {
                lr *= 0.5;
                stale = 0;
            }
            adam_step(run.params, bg.grad, adam, lr, cfg.adam);
        }
        run.final_return = mean_return(env, run.params, train_noise);
    } catch (const RolloutDiverged& e) {
        run.failed = true;
        run.failure = e.what();
    }
    return run;
}

/// Runs every configured learning rate from the same initialization and keeps
/// the run with the highest final training return (ties: lowest index).
inline TrainResult train(const Env& env, const PolicySpec& policy_spec, const TrainConfig& cfg,
                         const NoiseSet& train_noise)
{
    validate(cfg);
    require(!train_noise.empty(), "train: empty noise set");
    const PolicyParams init = init_params(policy_spec);
    TrainResult result;
    std::optional<std::size_t> best;
    for (std::size_t i = 0; i < cfg.learning_rates.size(); ++i) {
        result.runs.push_back(train_single(env, init, cfg, train_noise, i, cfg.learning_rates[i], result.curve));
        const auto& run = result.runs.back();
        if (run.failed) continue;
        if (!best || run.final_return > result.runs[*best].final_return) best = i;
    }
    if (!best) {
        std::string why = "train: every learning-rate run failed";
        for (const auto& r : result.runs) why += "; " + r.failure;
        fail(ErrorCode::training_failed, why);
    }
    result.selected_run = *best;
    result.params = result.runs[*best].params;
    result.lr_selected = result.runs[*best].initial_lr;
    result.final_return = result.runs[*best].final_return;
    return result;
}

// ---------------------------------------------------------------------------
// Finite-difference oracle

struct GradCheckResult {
    double max_relative_error = 0.0;
    std::size_t probes = 0;
};

/// Directional derivatives of the mean return along random unit directions,
/// compared with central differences of step h evaluated by plain rollouts.
inline GradCheckResult gradient_check(const Env& env, const PolicyParams& params, const NoiseSet& noise,
                                      std::size_t probes, double h, RngStream stream)
{
    GradientWorkspace ws;
    const BatchGradient bg = batch_gradient(env, params, noise, ws);
    GradCheckResult out;
    out.probes = probes;
    for (std::size_t p = 0; p < probes; ++p) {
        LayerStack dir = zeros_like(params.layers);
        double nrm = 0.0;
        for (auto& l : dir)
            for (double& v : l.flat()) {
                v = stream.next_gaussian();
                nrm += v * v;
            }
        nrm = std::sqrt(nrm);
        double analytic = 0.0;
        PolicyParams plus = params, minus = params;
        for (std::size_t l = 0; l < dir.size(); ++l) {
            auto d = dir[l].flat();
            auto g = bg.grad[l].flat();
            auto up = plus.layers[l].flat();
            auto dn = minus.layers[l].flat();
            for (std::size_t i = 0; i < d.size(); ++i) {
                d[i] /= nrm;
                analytic += g[i] * d[i];
                up[i] += h * d[i];
                dn[i] -= h * d[i];
            }
        }
        const double numeric = (mean_return(env, plus, noise) - mean_return(env, minus, noise)) / (2.0 * h);
        const double scale = std::max({std::abs(analytic), std::abs(numeric), 1e-8});
        out.max_relative_error = std::max(out.max_relative_error, std::abs(analytic - numeric) / scale);
    }
    return out;
}

} // namespace repara_gap
