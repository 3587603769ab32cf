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

// Continuous reparameterizable environment.
//
//   s_0     = I(xi_0) = xi_0                      xi_0 ~ U[0,1]^|S|
//   s_{t+1} = s_t T1 + a_t T2 + xi_t T3           xi_t ~ U[0,1]^d
//   r(s)    = w.s  or  tanh(w.s),  ||w|| = 1
//
// T1 and T2 are random Gaussian matrices whose singular values are replaced by
// softmax(sigma / tau), so the temperatures control the Lipschitz constants
// ||T1||_2 and ||T2||_2, both below one. T3 has unit spectral norm.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "repara_gap/errors.hpp"
#include "repara_gap/linalg.hpp"
#include "repara_gap/rng.hpp"

namespace repara_gap {

enum class RewardKind { linear, tanh };

inline std::string_view to_string(RewardKind k) noexcept
{
    return k == RewardKind::linear ? "linear" : "tanh";
}

struct EnvSpec {
    std::size_t state_dim = 16;
    std::size_t action_dim = 4;
    std::size_t noise_dim = 2;
    std::size_t horizon = 32;
    double gamma = 1.0;
    double trans_tau_states = 1.0;
    double trans_tau_actions = 1.0;
    RewardKind reward_kind = RewardKind::linear;
    std::uint64_t env_seed = 0;
    bool t2_unit_norm = false;  ///< rescale tempered T2 to spectral norm 1
};

inline void validate(const EnvSpec& spec)
{
    require(spec.state_dim >= 1 && spec.action_dim >= 1 && spec.noise_dim >= 1,
            "EnvSpec: dimensions must be >= 1");
    require(spec.horizon >= 1, "EnvSpec: horizon must be >= 1");
    require(spec.gamma > 0.0 && spec.gamma <= 1.0, "EnvSpec: gamma must be in (0,1]");
    require(spec.trans_tau_states > 0.0 && spec.trans_tau_actions > 0.0,
            "EnvSpec: transition temperatures must be positive");
}

struct Env {
    Matrix t1;  ///< |S| x |S|
    Matrix t2;  ///< |A| x |S|
    Matrix t3;  ///< d x |S|
    Vector w;   ///< reward weights, unit norm
    EnvSpec spec;
};

enum class ShiftTarget { initialization, transition };

inline std::string_view to_string(ShiftTarget t) noexcept
{
    return t == ShiftTarget::initialization ? "initialization" : "transition";
}

/// Test-time environment change: a constant vector added to I or to T.
struct EnvShift {
    ShiftTarget target = ShiftTarget::initialization;
    double zeta = 0.0;
    Vector delta;  ///< length |S|, norm zeta
};

namespace detail {

inline Matrix gaussian_matrix(RngStream& stream, std::size_t rows, std::size_t cols)
{
    return Matrix(rows, cols, sample_gaussian(stream, rows * cols));
}

/// Replace the singular values of m by softmax(sigma, tau).
inline Matrix temper_singular_values(const Matrix& m, double tau)
{
    const Svd svd = svd_small(m);
    const Vector tempered = softmax_tempered(svd.sigma, tau);
    return compose_svd(svd.u, tempered, svd.v);
}

// Stream ids for the environment's matrices; fixed so env_seed fully determines Env.
inline constexpr std::uint64_t stream_t1 = 1;
inline constexpr std::uint64_t stream_t2 = 2;
inline constexpr std::uint64_t stream_t3 = 3;
inline constexpr std::uint64_t stream_w = 4;

} // namespace detail

inline Env make_env(const EnvSpec& spec)
{
    validate(spec);
    Env env;
    env.spec = spec;

    RngStream s1(spec.env_seed, detail::stream_t1);
    env.t1 = detail::temper_singular_values(
        detail::gaussian_matrix(s1, spec.state_dim, spec.state_dim), spec.trans_tau_states);

    RngStream s2(spec.env_seed, detail::stream_t2);
    env.t2 = detail::temper_singular_values(
        detail::gaussian_matrix(s2, spec.action_dim, spec.state_dim), spec.trans_tau_actions);
    if (spec.t2_unit_norm) env.t2 *= 1.0 / spectral_norm(env.t2);

    RngStream s3(spec.env_seed, detail::stream_t3);
    env.t3 = detail::gaussian_matrix(s3, spec.noise_dim, spec.state_dim);
    env.t3 *= 1.0 / spectral_norm(env.t3);

    RngStream s4(spec.env_seed, detail::stream_w);
    env.w = sample_gaussian(s4, spec.state_dim);
    const double wn = norm2(env.w);
    for (double& v : env.w) v /= wn;
    return env;
}

inline EnvShift make_shift(const Env& env, ShiftTarget target, double zeta, RngStream stream)
{
    require(zeta >= 0.0, "make_shift: zeta must be nonnegative");
    return EnvShift{target, zeta, rademacher_shift(stream, env.spec.state_dim, zeta)};
}

/// I(xi_0) = xi_0, or xi_0 + delta under an initialization shift.
inline Vector init_state(const Env& env, std::span<const double> xi0,
                         const EnvShift* shift = nullptr)
{
    require(xi0.size() == env.spec.state_dim, "init_state: xi0 length must equal state_dim");
    Vector s(xi0.begin(), xi0.end());
    if (shift && shift->target == ShiftTarget::initialization)
        for (std::size_t i = 0; i < s.size(); ++i) s[i] += shift->delta[i];
    return s;
}

/// out = s T1 + a T2 + xi T3 (+ delta under a transition shift). out must not alias s or a.
inline void transition_into(const Env& env, std::span<const double> s, std::span<const double> a,
                            std::span<const double> xi, const EnvShift* shift, std::span<double> out)
{
    for (double& v : out) v = 0.0;
    add_row_times(s, env.t1, out);
    add_row_times(a, env.t2, out);
    add_row_times(xi, env.t3, out);
    if (shift && shift->target == ShiftTarget::transition)
        for (std::size_t i = 0; i < out.size(); ++i) out[i] += shift->delta[i];
}

inline Vector transition(const Env& env, std::span<const double> s, std::span<const double> a,
                         std::span<const double> xi, const EnvShift* shift = nullptr)
{
    require(s.size() == env.spec.state_dim, "transition: state length");
    require(a.size() == env.spec.action_dim, "transition: action length");
    require(xi.size() == env.spec.noise_dim, "transition: noise length");
    Vector out(env.spec.state_dim);
    transition_into(env, s, a, xi, shift, out);
    return out;
}

inline double reward(const Env& env, std::span<const double> s)
{
    const double z = dot(env.w, s);
    return env.spec.reward_kind == RewardKind::linear ? z : std::tanh(z);
}

/// dr/ds, written into out.
inline void reward_gradient(const Env& env, std::span<const double> s, std::span<double> out)
{
    double scale = 1.0;
    if (env.spec.reward_kind == RewardKind::tanh) {
        const double th = std::tanh(dot(env.w, s));
        scale = 1.0 - th * th;
    }
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = scale * env.w[i];
}

/// Lipschitz constant of r: 1 for both kinds because ||w|| = 1.
inline constexpr double reward_lipschitz = 1.0;

/// Peripheral noise of one episode.
struct EpisodeNoise {
    Vector xi0;              ///< length |S|
    std::vector<Vector> xi;  ///< xi_0 .. xi_{T-1}, each length d
    std::uint64_t episode_index = 0;
};

/// Draws are addressed by episode: xi0 occupies counters [0, |S|) of the
/// episode's stream and xi_t occupies [|S| + t d, |S| + (t+1) d).
inline EpisodeNoise sample_episode_noise(const EnvSpec& spec, const RngStream& stream,
                                         std::uint64_t episode_index)
{
    RngStream es = stream.substream(episode_index);
    EpisodeNoise noise;
    noise.episode_index = episode_index;
    noise.xi0 = sample_uniform(es, spec.state_dim);
    noise.xi.reserve(spec.horizon);
    for (std::size_t t = 0; t < spec.horizon; ++t) noise.xi.push_back(sample_uniform(es, spec.noise_dim));
    return noise;
}

using NoiseSet = std::vector<EpisodeNoise>;

inline NoiseSet sample_noise_set(const EnvSpec& spec, const RngStream& stream, std::size_t n)
{
    NoiseSet set;
    set.reserve(n);
    for (std::size_t i = 0; i < n; ++i) set.push_back(sample_episode_noise(spec, stream, i));
    return set;
}

} // namespace repara_gap
