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

// Bias-free ReLU MLP followed by a tempered softmax over actions:
//
//   h^0 = s,  h^l = relu(h^{l-1} theta^l),  a = softmax(h^{L-1} theta^L, tau)

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "repara_gap/errors.hpp"
#include "repara_gap/linalg.hpp"
#include "repara_gap/rng.hpp"

namespace repara_gap {

struct PolicySpec {
    std::size_t input_dim = 16;
    std::vector<std::size_t> hidden_dims{32};
    std::size_t output_dim = 4;
    double tau = 1.0;
    double init_scale = 1.0;
    std::uint64_t policy_seed = 0;
};

inline void validate(const PolicySpec& spec)
{
    require(spec.input_dim >= 1 && spec.output_dim >= 1, "PolicySpec: dimensions must be >= 1");
    for (std::size_t h : spec.hidden_dims) require(h >= 1, "PolicySpec: hidden widths must be >= 1");
    require(spec.tau > 0.0, "PolicySpec: tau must be positive");
    require(spec.init_scale > 0.0, "PolicySpec: init_scale must be positive");
}

/// One matrix per layer; used for parameters, gradients and optimizer moments.
using LayerStack = std::vector<Matrix>;

struct PolicyParams {
    LayerStack layers;
    PolicySpec spec;

    std::size_t parameter_count() const noexcept
    {
        std::size_t m = 0;
        for (const auto& l : layers) m += l.size();
        return m;
    }
};

inline std::vector<std::size_t> layer_widths(const PolicySpec& spec)
{
    std::vector<std::size_t> widths{spec.input_dim};
    widths.insert(widths.end(), spec.hidden_dims.begin(), spec.hidden_dims.end());
    widths.push_back(spec.output_dim);
    return widths;
}

inline std::size_t parameter_count(const PolicySpec& spec)
{
    const auto w = layer_widths(spec);
    std::size_t m = 0;
    for (std::size_t l = 0; l + 1 < w.size(); ++l) m += w[l] * w[l + 1];
    return m;
}

inline LayerStack zeros_like(const LayerStack& layers)
{
    LayerStack out;
    out.reserve(layers.size());
    for (const auto& l : layers) out.emplace_back(l.rows(), l.cols());
    return out;
}

/// Gaussian entries with standard deviation init_scale / sqrt(fan_in).
inline PolicyParams init_params(const PolicySpec& spec)
{
    validate(spec);
    PolicyParams params;
    params.spec = spec;
    const auto widths = layer_widths(spec);
    RngStream stream(spec.policy_seed, derive_stream_id({0x706f6c696379ULL}));
    for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
        const double sd = spec.init_scale / std::sqrt(static_cast<double>(widths[l]));
        Vector data = sample_gaussian(stream, widths[l] * widths[l + 1]);
        for (double& v : data) v *= sd;
        params.layers.emplace_back(widths[l], widths[l + 1], std::move(data));
    }
    return params;
}

/// Activations kept for the backward pass. activations[0] is the input,
/// activations[l] the post-ReLU output of hidden layer l, probs the softmax.
struct ForwardCache {
    std::vector<Vector> activations;
    Vector probs;

    void resize_for(const PolicyParams& params)
    {
        const std::size_t n = params.layers.size();
        activations.resize(n);
        activations[0].resize(params.layers[0].rows());
        for (std::size_t l = 1; l < n; ++l) activations[l].resize(params.layers[l].rows());
        probs.resize(params.layers.back().cols());
    }
};

inline void forward_cached(const PolicyParams& params, std::span<const double> s, ForwardCache& cache)
{
    cache.resize_for(params);
    const std::size_t n = params.layers.size();
    std::copy(s.begin(), s.end(), cache.activations[0].begin());
    for (std::size_t l = 1; l < n; ++l) {
        auto& h = cache.activations[l];
        std::fill(h.begin(), h.end(), 0.0);
        add_row_times(cache.activations[l - 1], params.layers[l - 1], h);
        for (double& v : h) v = v > 0.0 ? v : 0.0;
    }
    auto& logits = cache.probs;
    std::fill(logits.begin(), logits.end(), 0.0);
    add_row_times(cache.activations[n - 1], params.layers[n - 1], logits);

    const double tau = params.spec.tau;
    const double top = logits[argmax(logits)];
    double total = 0.0;
    for (double& v : logits) {
        v = std::exp((v - top) / tau);
        total += v;
    }
    for (double& v : logits) v /= total;
}

inline Vector forward(const PolicyParams& params, std::span<const double> s)
{
    require(s.size() == params.spec.input_dim, "forward: state length must equal input_dim");
    ForwardCache cache;
    forward_cached(params, s, cache);
    return cache.probs;
}

/// Scratch buffers for backward(); reused across calls to avoid allocation.
struct BackwardScratch {
    Vector upstream;
    Vector downstream;
};

/// Given dL/da for the output a of a cached forward pass, accumulate dL/dtheta
/// into grad and add dL/ds into ds. ReLU uses subgradient 0 at exactly 0.
inline void backward(const PolicyParams& params, const ForwardCache& cache,
                     std::span<const double> d_probs, LayerStack& grad,
                     std::span<double> ds, BackwardScratch& scratch)
{
    const std::size_t n = params.layers.size();
    const double tau = params.spec.tau;
    const auto& p = cache.probs;

    // softmax(z / tau): dz = p * (dp - <p, dp>) / tau
    auto& dz = scratch.upstream;
    dz.resize(p.size());
    const double pd = dot(p, d_probs);
    for (std::size_t k = 0; k < p.size(); ++k) dz[k] = p[k] * (d_probs[k] - pd) / tau;

    for (std::size_t l = n; l-- > 0;) {
        const auto& in = cache.activations[l];
        const Matrix& theta = params.layers[l];
        Matrix& g = grad[l];
        for (std::size_t i = 0; i < theta.rows(); ++i) {
            const double x = in[i];
            if (x == 0.0) continue;
            auto gr = g.row(i);
            for (std::size_t j = 0; j < theta.cols(); ++j) gr[j] += x * dz[j];
        }
        auto& dh = scratch.downstream;
        dh.assign(theta.rows(), 0.0);
        add_times_transpose(dz, theta, dh);
        if (l == 0) {
            for (std::size_t i = 0; i < ds.size(); ++i) ds[i] += dh[i];
        } else {
            for (std::size_t i = 0; i < dh.size(); ++i)
                if (!(in[i] > 0.0)) dh[i] = 0.0;
            std::swap(scratch.upstream, scratch.downstream);
        }
    }
}

enum class LipschitzMode { frobenius, spectral };

/// (1/tau) prod_l ||theta^l||, with the Frobenius or the spectral norm. The
/// spectral form bounds the state-Lipschitz constant of the policy: ReLU is
/// 1-Lipschitz and the tempered softmax is (1/tau)-Lipschitz.
inline double lipschitz_metric(const PolicyParams& params, LipschitzMode mode)
{
    double product = 1.0 / params.spec.tau;
    for (const auto& l : params.layers)
        product *= mode == LipschitzMode::frobenius ? frobenius_norm(l) : spectral_norm(l);
    return product;
}

inline Vector layer_spectral_norms(const LayerStack& layers)
{
    Vector out;
    out.reserve(layers.size());
    for (const auto& l : layers) out.push_back(spectral_norm(l));
    return out;
}

/// Bound on ||pi(s; a) - pi(s; b)|| / ||a - b|| over parameter pairs, for any
/// state with ||s|| <= state_norm. Swapping layers one at a time from b to a
/// gives terms bounded by (1/tau) ||s|| prod_{k<l} ||b^k|| prod_{k>l} ||a^k|| ||a^l - b^l||;
/// Cauchy-Schwarz over l turns the sum into a single norm of the full difference.
inline double parameter_lipschitz(std::span<const double> norms_a, std::span<const double> norms_b,
                                  double tau, double state_norm)
{
    const std::size_t n = norms_a.size();
    double sum_sq = 0.0;
    for (std::size_t l = 0; l < n; ++l) {
        double c = 1.0;
        for (std::size_t k = 0; k < l; ++k) c *= norms_b[k];
        for (std::size_t k = l + 1; k < n; ++k) c *= norms_a[k];
        sum_sq += c * c;
    }
    return state_norm * std::sqrt(sum_sq) / tau;
}

inline double parameter_distance(const LayerStack& a, const LayerStack& b) noexcept
{
    double s = 0.0;
    for (std::size_t l = 0; l < a.size(); ++l) {
        const auto fa = a[l].flat();
        const auto fb = b[l].flat();
        for (std::size_t i = 0; i < fa.size(); ++i) s += (fa[i] - fb[i]) * (fa[i] - fb[i]);
    }
    return std::sqrt(s);
}

/// Flatten all layers into one parameter vector (layer order, row-major).
inline Vector flatten(const LayerStack& layers)
{
    Vector out;
    for (const auto& l : layers) out.insert(out.end(), l.flat().begin(), l.flat().end());
    return out;
}

} // namespace repara_gap
