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

// Statistical checks that the Gumbel-reparameterized MDP samples the same
// trajectories as classical multinomial simulation, and that the relaxed
// rollout approaches the hard one as the temperature goes to zero.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <vector>

#include <nlohmann/json.hpp>

#include "repara_gap/discrete_mdp.hpp"
#include "repara_gap/rng.hpp"

namespace repara_gap {

struct MdpCheckConfig {
    std::uint64_t seed = 0;
    std::size_t draws = 100000;
    std::size_t distributions = 20;
    std::size_t max_states = 10;
    std::size_t trajectory_mdps = 5;
    std::size_t trajectory_horizon = 5;
    std::size_t relaxation_seeds = 100;
    std::vector<double> relaxation_taus{1.0, 0.1, 0.01, 0.001};
    std::size_t chain_states = 5;
    std::size_t chain_horizon = 5;
};

struct MdpCheckReport {
    std::vector<double> gumbel_max_tv;   ///< one per random distribution
    double max_gumbel_max_tv = 0.0;
    double max_trajectory_tv = 0.0;      ///< worst per-step marginal TV
    std::vector<double> relaxation_max_diff;  ///< per tau, max over seeds of |R_relaxed - R_hard|
    bool relaxation_nonincreasing = false;
    double fixed_noise_diff = 0.0;       ///< |R_relaxed - R_hard| at the smallest tau, seed 0
};

/// Empirical frequencies of argmax(g + log p) over fresh Gumbel draws.
inline Vector gumbel_max_frequencies(std::span<const double> p, std::size_t draws, RngStream& stream)
{
    const Vector log_p = log_probabilities(p);
    Vector counts(p.size(), 0.0);
    std::vector<double> g(p.size());
    for (std::size_t k = 0; k < draws; ++k) {
        for (double& v : g) v = gumbel_from_uniform(stream.next_uniform());
        counts[gumbel_max_sample(log_p, g)] += 1.0;
    }
    for (double& c : counts) c /= static_cast<double>(draws);
    return counts;
}

/// Max over steps t of TV between the marginal of s_t under hard Gumbel
/// rollouts and under direct multinomial simulation.
inline double trajectory_marginal_tv(const DiscreteMdp& mdp, const TabularPolicy& policy,
                                     std::size_t draws, RngStream gumbel_stream, RngStream direct_stream)
{
    const std::size_t steps = mdp.horizon + 1;
    std::vector<Vector> hard(steps, Vector(mdp.n_states, 0.0));
    std::vector<Vector> direct(steps, Vector(mdp.n_states, 0.0));
    for (std::size_t k = 0; k < draws; ++k) {
        const GumbelNoise noise = sample_gumbel_noise(mdp, gumbel_stream);
        const auto h = rollout_hard(mdp, policy, noise);
        const auto d = rollout_multinomial(mdp, policy, direct_stream);
        for (std::size_t t = 0; t < steps; ++t) {
            hard[t][h.states[t]] += 1.0;
            direct[t][d[t]] += 1.0;
        }
    }
    double worst = 0.0;
    for (std::size_t t = 0; t < steps; ++t) {
        for (double& v : hard[t]) v /= static_cast<double>(draws);
        for (double& v : direct[t]) v /= static_cast<double>(draws);
        worst = std::max(worst, total_variation(hard[t], direct[t]));
    }
    return worst;
}

inline MdpCheckReport run_mdp_checks(const MdpCheckConfig& cfg)
{
    MdpCheckReport rep;
    const RngStream root(cfg.seed, derive_stream_id({0x6d6470ULL}));

    RngStream dist_stream = root.substream(1);
    RngStream draw_stream = root.substream(2);
    for (std::size_t i = 0; i < cfg.distributions; ++i) {
        const std::size_t n = 2 + dist_stream.next_bits() % (cfg.max_states - 1);
        const Vector p = random_distribution(dist_stream, n);
        const Vector f = gumbel_max_frequencies(p, cfg.draws, draw_stream);
        rep.gumbel_max_tv.push_back(total_variation(p, f));
    }
    rep.max_gumbel_max_tv = *std::max_element(rep.gumbel_max_tv.begin(), rep.gumbel_max_tv.end());

    RngStream mdp_stream = root.substream(3);
    for (std::size_t i = 0; i < cfg.trajectory_mdps; ++i) {
        const std::size_t ns = 2 + mdp_stream.next_bits() % (cfg.max_states - 1);
        const std::size_t na = 1 + mdp_stream.next_bits() % 3;
        const DiscreteMdp mdp = random_mdp(mdp_stream, ns, na, cfg.trajectory_horizon);
        TabularPolicy policy(ns);
        for (auto& a : policy) a = mdp_stream.next_bits() % na;
        rep.max_trajectory_tv = std::max(
            rep.max_trajectory_tv,
            trajectory_marginal_tv(mdp, policy, cfg.draws, root.substream(100 + i), root.substream(200 + i)));
    }

    const DiscreteMdp chain = chain_mdp(cfg.chain_states, cfg.chain_horizon);
    const TabularPolicy forward_policy(cfg.chain_states, 0);
    rep.relaxation_max_diff.assign(cfg.relaxation_taus.size(), 0.0);
    for (std::size_t k = 0; k < cfg.relaxation_seeds; ++k) {
        RngStream ns = root.substream(1000 + k);
        const GumbelNoise noise = sample_gumbel_noise(chain, ns);
        const double hard = rollout_hard(chain, forward_policy, noise).ret;
        for (std::size_t j = 0; j < cfg.relaxation_taus.size(); ++j) {
            const double d = std::abs(rollout_relaxed(chain, forward_policy, noise, cfg.relaxation_taus[j]).ret - hard);
            rep.relaxation_max_diff[j] = std::max(rep.relaxation_max_diff[j], d);
            if (k == 0 && j + 1 == cfg.relaxation_taus.size()) rep.fixed_noise_diff = d;
        }
    }
    rep.relaxation_nonincreasing = true;
    for (std::size_t j = 1; j < rep.relaxation_max_diff.size(); ++j)
        if (rep.relaxation_max_diff[j] > rep.relaxation_max_diff[j - 1]) rep.relaxation_nonincreasing = false;
    return rep;
}

inline nlohmann::json to_json(const MdpCheckReport& r)
{
    return {
        {"gumbel_max_tv", r.gumbel_max_tv},
        {"max_gumbel_max_tv", r.max_gumbel_max_tv},
        {"max_trajectory_tv", r.max_trajectory_tv},
        {"relaxation_max_diff", r.relaxation_max_diff},
        {"relaxation_nonincreasing", r.relaxation_nonincreasing},
        {"fixed_noise_diff", r.fixed_noise_diff},
        {"max_tv", std::max(r.max_gumbel_max_tv, r.max_trajectory_tv)},
    };
}

} // namespace repara_gap
