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

// Closed-form generalization bounds for reparameterizable RL.
//
// With Lipschitz constants L_t1, L_t2 (transition), L_pi1, L_pi2 (policy) and
// L_r (reward), the per-step state deviation grows by nu = L_t1 + L_t2 L_pi1.
// Every bound below is a discounted sum over t = 0..T of either nu^t or the
// geometric partial sum 1 + nu + ... + nu^{t-1}.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>

#include <nlohmann/json.hpp>

#include "repara_gap/env.hpp"
#include "repara_gap/errors.hpp"
#include "repara_gap/policy.hpp"
#include "repara_gap/train.hpp"

namespace repara_gap {

struct LipschitzConstants {
    double l_t1 = 0.0;
    double l_t2 = 0.0;
    double l_pi1 = 0.0;
    double l_pi2 = 0.0;
    double l_r = 0.0;

    double nu() const noexcept { return l_t1 + l_t2 * l_pi1; }
};

inline void validate(const LipschitzConstants& l)
{
    for (double v : {l.l_t1, l.l_t2, l.l_pi1, l.l_pi2, l.l_r})
        require(std::isfinite(v) && v >= 0.0, "LipschitzConstants: entries must be finite and nonnegative");
}

/// sum_{k=0}^{t-1} nu^k. Summed directly near nu = 1, closed form elsewhere.
inline double geo_sum(double nu, std::size_t t) noexcept
{
    if (std::abs(nu - 1.0) < 1e-9) {
        double s = 0.0, p = 1.0;
        for (std::size_t k = 0; k < t; ++k) {
            s += p;
            p *= nu;
        }
        return s;
    }
    return (std::pow(nu, static_cast<double>(t)) - 1.0) / (nu - 1.0);
}

/// Lipschitz constant of the return in theta:
/// beta = L_r L_t2 L_pi2 sum_{t=0}^T gamma^t geo_sum(nu, t).
inline double beta_constant(const LipschitzConstants& l, double gamma, std::size_t horizon)
{
    validate(l);
    require(gamma > 0.0 && gamma <= 1.0, "beta_constant: gamma must be in (0,1]");
    const double nu = l.nu();
    double s = 0.0, discount = 1.0;
    for (std::size_t t = 0; t <= horizon; ++t) {
        s += discount * geo_sum(nu, t);
        discount *= gamma;
    }
    return l.l_r * l.l_t2 * l.l_pi2 * s;
}

/// c sqrt(log(2 |Pi| / delta) / (2n)); class_size defaults to a single policy.
inline double concentration_bound(double c, std::size_t n, double delta,
                                  std::optional<std::uint64_t> class_size = std::nullopt)
{
    require(delta > 0.0 && delta < 1.0, "concentration_bound: delta must be in (0,1)");
    require(n >= 1, "concentration_bound: n must be >= 1");
    require(c >= 0.0, "concentration_bound: c must be nonnegative");
    const double k = class_size ? static_cast<double>(*class_size) : 1.0;
    require(k >= 1.0, "concentration_bound: class_size must be >= 1");
    return c * std::sqrt(std::log(2.0 * k / delta) / (2.0 * static_cast<double>(n)));
}

/// C beta sqrt(m / n), the explicit-constant form of O(beta sqrt(m/n)).
inline double rademacher_bound(double beta, std::size_t m, std::size_t n, double c_const = 1.0)
{
    require(m >= 1 && n >= 1, "rademacher_bound: m and n must be >= 1");
    return c_const * beta * std::sqrt(static_cast<double>(m) / static_cast<double>(n));
}

/// L_r eps sum_{t=0}^T gamma^t nu^t.
inline double init_shift_bound(const LipschitzConstants& l, double epsilon, double gamma, std::size_t horizon)
{
    validate(l);
    require(epsilon >= 0.0, "init_shift_bound: epsilon must be nonnegative");
    const double nu = l.nu();
    double s = 0.0, discount = 1.0, power = 1.0;
    for (std::size_t t = 0; t <= horizon; ++t) {
        s += discount * power;
        discount *= gamma;
        power *= nu;
    }
    return l.l_r * epsilon * s;
}

/// L_r zeta sum_{t=0}^T gamma^t geo_sum(nu, t).
inline double transition_shift_bound(const LipschitzConstants& l, double zeta, double gamma,
                                     std::size_t horizon)
{
    validate(l);
    require(zeta >= 0.0, "transition_shift_bound: zeta must be nonnegative");
    const double nu = l.nu();
    double s = 0.0, discount = 1.0;
    for (std::size_t t = 0; t <= horizon; ++t) {
        s += discount * geo_sum(nu, t);
        discount *= gamma;
    }
    return l.l_r * zeta * s;
}

struct BoundInputs {
    LipschitzConstants constants;
    double gamma = 1.0;
    std::size_t horizon = 1;
    double zeta = 0.0;     ///< transition shift
    double epsilon = 0.0;  ///< initialization shift
    std::size_t m = 1;     ///< parameter count
    std::size_t n = 1;     ///< training episodes
    double c = 0.0;        ///< reward range, |R| <= c/2
    double delta = 0.05;
    double rademacher_c = 1.0;
};

struct BoundReport {
    BoundInputs inputs;
    double nu = 0.0;
    double beta = 0.0;
    double rademacher = 0.0;
    double concentration = 0.0;
    double init_shift = 0.0;
    double transition_shift = 0.0;
    double theorem1_total = 0.0;
    std::optional<double> pac_bayes_penalty;
};

/// Rademacher term + transition shift + initialization shift + concentration.
inline BoundReport theorem1_total(const BoundInputs& in)
{
    BoundReport r;
    r.inputs = in;
    r.nu = in.constants.nu();
    r.beta = beta_constant(in.constants, in.gamma, in.horizon);
    r.rademacher = rademacher_bound(r.beta, in.m, in.n, in.rademacher_c);
    r.transition_shift = transition_shift_bound(in.constants, in.zeta, in.gamma, in.horizon);
    r.init_shift = init_shift_bound(in.constants, in.epsilon, in.gamma, in.horizon);
    r.concentration = concentration_bound(in.c, in.n, in.delta);
    r.theorem1_total = r.rademacher + r.transition_shift + r.init_shift + r.concentration;
    return r;
}

/// KL(N(theta_hat, sq^2 I) || N(0, sp^2 I)).
inline double gaussian_kl(std::span<const double> theta_hat, double sigma_q, double sigma_p)
{
    require(sigma_q > 0.0 && sigma_p > 0.0, "gaussian_kl: sigmas must be positive");
    const double m = static_cast<double>(theta_hat.size());
    const double sq_norm = dot(theta_hat, theta_hat);
    return m * std::log(sigma_p / sigma_q) + (m * sigma_q * sigma_q + sq_norm) / (2.0 * sigma_p * sigma_p)
           - m / 2.0;
}

/// 2 sqrt(2 (KL + log(2n/delta)) / (n - 1)).
inline double pac_bayes_penalty(double kl, std::size_t n, double delta)
{
    require(n >= 2, "pac_bayes_penalty: n must be >= 2");
    require(delta > 0.0, "pac_bayes_penalty: delta must be positive");
    const double nd = static_cast<double>(n);
    return 2.0 * std::sqrt(2.0 * (kl + std::log(2.0 * nd / delta)) / (nd - 1.0));
}

/// Monte Carlo estimate of E_{theta ~ N(theta_hat, sigma_q^2 I)} of the mean
/// return over `noise`. sigma_q = 0 returns the unperturbed mean exactly.
inline double pac_bayes_expected_return(const Env& env, const PolicyParams& theta_hat, double sigma_q,
                                        const NoiseSet& noise, std::size_t n_mc, RngStream stream)
{
    require(sigma_q >= 0.0, "pac_bayes_expected_return: sigma_q must be nonnegative");
    require(n_mc >= 1, "pac_bayes_expected_return: n_mc must be >= 1");
    if (sigma_q == 0.0) return mean_return(env, theta_hat, noise);
    double total = 0.0;
    for (std::size_t k = 0; k < n_mc; ++k) {
        RngStream draw = stream.substream(k);
        PolicyParams perturbed = theta_hat;
        for (auto& l : perturbed.layers)
            for (double& v : l.flat()) v += sigma_q * draw.next_gaussian();
        total += mean_return(env, perturbed, noise);
    }
    return total / static_cast<double>(n_mc);
}

/// Constants measured on an environment and a policy: L_t1, L_t2 are the
/// transition spectral norms, L_pi1 the spectral policy metric, L_r = 1.
/// L_pi2 is the parameter-Lipschitz bound at theta for states of norm <= state_norm.
inline LipschitzConstants measured_constants(const Env& env, const PolicyParams& params, double state_norm)
{
    LipschitzConstants l;
    l.l_t1 = spectral_norm(env.t1);
    l.l_t2 = spectral_norm(env.t2);
    l.l_pi1 = lipschitz_metric(params, LipschitzMode::spectral);
    const Vector norms = layer_spectral_norms(params.layers);
    l.l_pi2 = parameter_lipschitz(norms, norms, params.spec.tau, state_norm);
    l.l_r = reward_lipschitz;
    return l;
}

/// Constants for comparing two parameter vectors on shared noise. L_pi1 is the
/// larger spectral metric; L_pi2 covers both swap orders and the largest state
/// norm reached by either parameter's trajectories.
inline LipschitzConstants pair_constants(const Env& env, const PolicyParams& a, const PolicyParams& b,
                                         const NoiseSet& noise)
{
    double state_norm = 0.0;
    for (const auto& n : noise)
        for (const PolicyParams* p : {&a, &b})
            for (const auto& s : rollout(env, *p, n).states) state_norm = std::max(state_norm, norm2(s));
    const Vector na = layer_spectral_norms(a.layers);
    const Vector nb = layer_spectral_norms(b.layers);
    LipschitzConstants l;
    l.l_t1 = spectral_norm(env.t1);
    l.l_t2 = spectral_norm(env.t2);
    l.l_pi1 = std::max(lipschitz_metric(a, LipschitzMode::spectral), lipschitz_metric(b, LipschitzMode::spectral));
    l.l_pi2 = std::max(parameter_lipschitz(na, nb, a.spec.tau, state_norm),
                       parameter_lipschitz(nb, na, a.spec.tau, state_norm));
    l.l_r = reward_lipschitz;
    return l;
}

/// Bound on ||s'_t - s_t|| under a shift of size zeta with a fixed policy:
/// zeta nu^t for the initialization, zeta geo_sum(nu, t) for the transition.
inline double state_deviation_bound(const LipschitzConstants& l, ShiftTarget target, double zeta, std::size_t t)
{
    const double nu = l.nu();
    return target == ShiftTarget::initialization ? zeta * std::pow(nu, static_cast<double>(t))
                                                 : zeta * geo_sum(nu, t);
}

/// External-shift bound for a fixed policy: L_r sum_t gamma^t state_deviation_bound.
inline double shift_bound(const LipschitzConstants& l, ShiftTarget target, double zeta, double gamma,
                          std::size_t horizon)
{
    return target == ShiftTarget::initialization ? init_shift_bound(l, zeta, gamma, horizon)
                                                 : transition_shift_bound(l, zeta, gamma, horizon);
}

inline nlohmann::json to_json(const LipschitzConstants& l)
{
    return {{"L_t1", l.l_t1}, {"L_t2", l.l_t2}, {"L_pi1", l.l_pi1}, {"L_pi2", l.l_pi2}, {"L_r", l.l_r}};
}

inline nlohmann::json to_json(const BoundReport& r)
{
    nlohmann::json inputs = {
        {"constants", to_json(r.inputs.constants)},
        {"gamma", r.inputs.gamma},
        {"horizon", r.inputs.horizon},
        {"zeta", r.inputs.zeta},
        {"epsilon", r.inputs.epsilon},
        {"m", r.inputs.m},
        {"n", r.inputs.n},
        {"c", r.inputs.c},
        {"delta", r.inputs.delta},
        {"rademacher_c", r.inputs.rademacher_c},
    };
    nlohmann::json j = {
        {"inputs", inputs},
        {"nu", r.nu},
        {"beta", r.beta},
        {"rademacher", r.rademacher},
        {"concentration", r.concentration},
        {"init_shift", r.init_shift},
        {"transition_shift", r.transition_shift},
        {"theorem1_total", r.theorem1_total},
    };
    if (r.pac_bayes_penalty) j["pac_bayes_penalty"] = *r.pac_bayes_penalty;
    return j;
}

} // namespace repara_gap
