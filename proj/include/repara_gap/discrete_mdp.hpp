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

// Discrete-state MDP whose sampling steps are rewritten with Gumbel noise:
// a draw from a multinomial p is argmax(g + log p) with g standard Gumbel,
// so a whole episode is a deterministic function of (g_init, g_0, ..., g_T).

#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <vector>

#include "repara_gap/errors.hpp"
#include "repara_gap/linalg.hpp"
#include "repara_gap/rng.hpp"

namespace repara_gap {

struct DiscreteMdp {
    std::size_t n_states = 0;
    std::size_t n_actions = 0;
    Vector p0;                           ///< initial distribution, length n_states
    std::vector<Vector> transitions;     ///< row-major (state, action) -> distribution
    Vector reward;                       ///< r(s), length n_states
    double gamma = 1.0;
    std::size_t horizon = 1;

    const Vector& transition(std::size_t s, std::size_t a) const
    {
        return transitions[s * n_actions + a];
    }
    Vector& transition(std::size_t s, std::size_t a) { return transitions[s * n_actions + a]; }
};

using TabularPolicy = std::vector<std::size_t>;

/// g_init for s_0 and g_t for the transition out of s_t (t = 0..T, the last is unused).
struct GumbelNoise {
    Vector g_init;
    std::vector<Vector> g;
};

inline constexpr double probability_tol = 1e-12;

inline void validate_probability(std::span<const double> p, std::size_t n, const char* what)
{
    require(p.size() == n, std::string(what) + ": wrong length");
    double total = 0.0;
    for (double v : p) {
        require(v >= 0.0 && std::isfinite(v), std::string(what) + ": negative or non-finite entry");
        total += v;
    }
    require(std::abs(total - 1.0) <= probability_tol, std::string(what) + ": does not sum to 1");
}

inline void validate(const DiscreteMdp& mdp)
{
    require(mdp.n_states >= 1 && mdp.n_actions >= 1, "DiscreteMdp: empty state or action set");
    require(mdp.gamma > 0.0 && mdp.gamma <= 1.0, "DiscreteMdp: gamma must be in (0,1]");
    require(mdp.horizon >= 1, "DiscreteMdp: horizon must be >= 1");
    require(mdp.reward.size() == mdp.n_states, "DiscreteMdp: reward length");
    require(mdp.transitions.size() == mdp.n_states * mdp.n_actions, "DiscreteMdp: transition table size");
    validate_probability(mdp.p0, mdp.n_states, "DiscreteMdp.p0");
    for (const auto& row : mdp.transitions)
        validate_probability(row, mdp.n_states, "DiscreteMdp.transition");
}

inline void validate(const DiscreteMdp& mdp, const TabularPolicy& policy)
{
    require(policy.size() == mdp.n_states, "TabularPolicy: one action per state required");
    for (std::size_t a : policy) require(a < mdp.n_actions, "TabularPolicy: action out of range");
}

inline Vector log_probabilities(std::span<const double> p)
{
    Vector out(p.size());
    for (std::size_t i = 0; i < p.size(); ++i)
        out[i] = p[i] > 0.0 ? std::log(p[i]) : -std::numeric_limits<double>::infinity();
    return out;
}

/// argmax(g + log_p), ties to the lowest index. log_p may hold -inf.
inline std::size_t gumbel_max_sample(std::span<const double> log_p, std::span<const double> g)
{
    require(log_p.size() == g.size() && !g.empty(), "gumbel_max_sample: length mismatch");
    std::size_t best = log_p.size();
    double best_value = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < log_p.size(); ++i) {
        if (log_p[i] == -std::numeric_limits<double>::infinity()) continue;
        const double v = g[i] + log_p[i];
        if (best == log_p.size() || v > best_value) {
            best = i;
            best_value = v;
        }
    }
    if (best == log_p.size())
        fail(ErrorCode::invalid_argument, "gumbel_max_sample: all probabilities are zero");
    return best;
}

inline GumbelNoise sample_gumbel_noise(const DiscreteMdp& mdp, RngStream& stream)
{
    GumbelNoise noise;
    noise.g_init = sample_gumbel(stream, mdp.n_states);
    noise.g.reserve(mdp.horizon + 1);
    for (std::size_t t = 0; t <= mdp.horizon; ++t) noise.g.push_back(sample_gumbel(stream, mdp.n_states));
    return noise;
}

struct HardRollout {
    std::vector<std::size_t> states;  ///< s_0 .. s_T
    double ret = 0.0;
};

struct RelaxedRollout {
    std::vector<Vector> states;           ///< relaxed one-hot vectors s_0 .. s_T
    std::vector<std::size_t> decisions;   ///< argmax of each relaxed state
    double ret = 0.0;
};

namespace detail {

inline void check_noise(const DiscreteMdp& mdp, const GumbelNoise& noise)
{
    require(noise.g_init.size() == mdp.n_states, "GumbelNoise: g_init length");
    require(noise.g.size() >= mdp.horizon, "GumbelNoise: too few steps");
    for (std::size_t t = 0; t < mdp.horizon; ++t)
        require(noise.g[t].size() == mdp.n_states, "GumbelNoise: step length");
}

// Tempered softmax of g + log_p where zero-probability entries stay exactly zero.
inline Vector relax(std::span<const double> log_p, std::span<const double> g, double tau)
{
    const std::size_t top = gumbel_max_sample(log_p, g);
    const double top_value = g[top] + log_p[top];
    Vector out(g.size(), 0.0);
    double total = 0.0;
    for (std::size_t i = 0; i < g.size(); ++i) {
        if (log_p[i] == -std::numeric_limits<double>::infinity()) continue;
        out[i] = std::exp((g[i] + log_p[i] - top_value) / tau);
        total += out[i];
    }
    for (double& v : out) v /= total;
    return out;
}

} // namespace detail

/// Gumbel-max rollout; R = sum_t gamma^t r(s_t) over t = 0..T.
inline HardRollout rollout_hard(const DiscreteMdp& mdp, const TabularPolicy& policy,
                                const GumbelNoise& noise)
{
    detail::check_noise(mdp, noise);
    validate(mdp, policy);
    HardRollout out;
    out.states.reserve(mdp.horizon + 1);
    std::size_t s = gumbel_max_sample(log_probabilities(mdp.p0), noise.g_init);
    double discount = 1.0;
    for (std::size_t t = 0;; ++t) {
        out.states.push_back(s);
        out.ret += discount * mdp.reward[s];
        if (t == mdp.horizon) break;
        discount *= mdp.gamma;
        s = gumbel_max_sample(log_probabilities(mdp.transition(s, policy[s])), noise.g[t]);
    }
    return out;
}

/// Gumbel-softmax rollout. Rewards are taken as r . s_t on the relaxed state;
/// the next transition row is picked by the argmax state.
inline RelaxedRollout rollout_relaxed(const DiscreteMdp& mdp, const TabularPolicy& policy,
                                      const GumbelNoise& noise, double tau)
{
    require(tau > 0.0, "rollout_relaxed: tau must be positive");
    detail::check_noise(mdp, noise);
    validate(mdp, policy);
    RelaxedRollout out;
    Vector soft = detail::relax(log_probabilities(mdp.p0), noise.g_init, tau);
    double discount = 1.0;
    for (std::size_t t = 0;; ++t) {
        const std::size_t s = argmax(soft);
        out.ret += discount * dot(mdp.reward, soft);
        out.decisions.push_back(s);
        out.states.push_back(std::move(soft));
        if (t == mdp.horizon) break;
        discount *= mdp.gamma;
        soft = detail::relax(log_probabilities(mdp.transition(s, policy[s])), noise.g[t], tau);
    }
    return out;
}

/// Classical multinomial draw by inverse CDF on a single uniform.
inline std::size_t multinomial_sample(std::span<const double> p, double u) noexcept
{
    double cumulative = 0.0;
    std::size_t last_positive = 0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        if (p[i] <= 0.0) continue;
        last_positive = i;
        cumulative += p[i];
        if (u < cumulative) return i;
    }
    return last_positive;
}

/// Direct simulation of the same MDP without reparameterization.
inline std::vector<std::size_t> rollout_multinomial(const DiscreteMdp& mdp, const TabularPolicy& policy,
                                                    RngStream& stream)
{
    std::vector<std::size_t> states;
    states.reserve(mdp.horizon + 1);
    std::size_t s = multinomial_sample(mdp.p0, stream.next_uniform());
    states.push_back(s);
    for (std::size_t t = 0; t < mdp.horizon; ++t) {
        s = multinomial_sample(mdp.transition(s, policy[s]), stream.next_uniform());
        states.push_back(s);
    }
    return states;
}

inline double total_variation(std::span<const double> p, std::span<const double> q) noexcept
{
    double s = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) s += std::abs(p[i] - q[i]);
    return 0.5 * s;
}

/// Random probability vector from normalized exponentials.
inline Vector random_distribution(RngStream& stream, std::size_t n)
{
    Vector p(n);
    double total = 0.0;
    for (double& v : p) {
        v = -std::log(1.0 - stream.next_uniform());
        total += v;
    }
    for (double& v : p) v /= total;
    return p;
}

inline DiscreteMdp random_mdp(RngStream& stream, std::size_t n_states, std::size_t n_actions,
                              std::size_t horizon, double gamma = 1.0)
{
    DiscreteMdp mdp;
    mdp.n_states = n_states;
    mdp.n_actions = n_actions;
    mdp.horizon = horizon;
    mdp.gamma = gamma;
    mdp.p0 = random_distribution(stream, n_states);
    for (std::size_t i = 0; i < n_states * n_actions; ++i)
        mdp.transitions.push_back(random_distribution(stream, n_states));
    mdp.reward = sample_uniform(stream, n_states);
    return mdp;
}

/// n-state chain: action 0 advances with probability `advance` (else stays),
/// action 1 steps back the same way. Reward grows linearly along the chain.
inline DiscreteMdp chain_mdp(std::size_t n_states, std::size_t horizon, double advance = 0.9)
{
    DiscreteMdp mdp;
    mdp.n_states = n_states;
    mdp.n_actions = 2;
    mdp.horizon = horizon;
    mdp.gamma = 1.0;
    mdp.p0.assign(n_states, 0.0);
    mdp.p0[0] = 0.6;
    for (std::size_t i = 1; i < n_states; ++i) mdp.p0[i] = 0.4 / static_cast<double>(n_states - 1);
    if (n_states == 1) mdp.p0[0] = 1.0;
    mdp.transitions.assign(n_states * 2, Vector(n_states, 0.0));
    for (std::size_t s = 0; s < n_states; ++s) {
        const std::size_t up = s + 1 < n_states ? s + 1 : s;
        const std::size_t down = s > 0 ? s - 1 : s;
        mdp.transition(s, 0)[up] += advance;
        mdp.transition(s, 0)[s] += 1.0 - advance;
        mdp.transition(s, 1)[down] += advance;
        mdp.transition(s, 1)[s] += 1.0 - advance;
    }
    mdp.reward.resize(n_states);
    for (std::size_t s = 0; s < n_states; ++s)
        mdp.reward[s] = n_states > 1 ? static_cast<double>(s) / static_cast<double>(n_states - 1) : 0.0;
    return mdp;
}

} // namespace repara_gap
