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

// Counter-based random streams.
//
// A value is a pure function of (seed, stream_id, counter): the stream key is
// a hash of seed and stream_id, and the value at counter c is the c-th output
// of a splitmix64 generator started at that key. Any draw can therefore be
// addressed directly, e.g. by (episode index, time step), and replaying the
// same call sequence gives bit-identical results on every platform.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <numbers>
#include <vector>

namespace repara_gap {

namespace detail {

inline constexpr std::uint64_t golden_gamma = 0x9e3779b97f4a7c15ULL;

constexpr std::uint64_t mix64(std::uint64_t z) noexcept
{
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

} // namespace detail

/// Combine several identifiers into one 64-bit stream id.
constexpr std::uint64_t derive_stream_id(std::initializer_list<std::uint64_t> parts) noexcept
{
    std::uint64_t h = 0x6a09e667f3bcc909ULL;
    for (std::uint64_t p : parts)
        h = detail::mix64(h ^ detail::mix64(p + detail::golden_gamma));
    return h;
}

class RngStream {
public:
    constexpr RngStream() noexcept = default;
    constexpr RngStream(std::uint64_t seed, std::uint64_t stream_id,
                        std::uint64_t counter = 0) noexcept
        : seed_(seed), stream_id_(stream_id), counter_(counter),
          key_(make_key(seed, stream_id))
    {
    }

    constexpr std::uint64_t seed() const noexcept { return seed_; }
    constexpr std::uint64_t stream_id() const noexcept { return stream_id_; }
    constexpr std::uint64_t counter() const noexcept { return counter_; }

    /// Raw 64 bits at an absolute counter position; does not advance.
    constexpr std::uint64_t bits_at(std::uint64_t counter) const noexcept
    {
        return detail::mix64(key_ + (counter + 1) * detail::golden_gamma);
    }

    constexpr std::uint64_t next_bits() noexcept { return bits_at(counter_++); }

    /// Uniform on [0, 1) with 53 random bits.
    constexpr double next_uniform() noexcept
    {
        return static_cast<double>(next_bits() >> 11) * 0x1.0p-53;
    }

    /// Standard normal by Box-Muller; consumes two counters.
    double next_gaussian() noexcept
    {
        const double u1 = static_cast<double>((next_bits() >> 11) + 1) * 0x1.0p-53; // (0, 1]
        const double u2 = next_uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
    }

    /// Independent child stream, counter reset to zero.
    constexpr RngStream substream(std::uint64_t tag) const noexcept
    {
        return RngStream(seed_, derive_stream_id({stream_id_, tag}));
    }

    constexpr RngStream at(std::uint64_t counter) const noexcept
    {
        return RngStream(seed_, stream_id_, counter);
    }

    friend constexpr bool operator==(const RngStream& a, const RngStream& b) noexcept
    {
        return a.seed_ == b.seed_ && a.stream_id_ == b.stream_id_ && a.counter_ == b.counter_;
    }

private:
    static constexpr std::uint64_t make_key(std::uint64_t seed, std::uint64_t stream_id) noexcept
    {
        return detail::mix64(seed ^ detail::mix64(stream_id ^ 0x632be59bd9b4e019ULL));
    }

    std::uint64_t seed_ = 0;
    std::uint64_t stream_id_ = 0;
    std::uint64_t counter_ = 0;
    std::uint64_t key_ = make_key(0, 0);
};

inline constexpr double uniform_clamp = 1e-12;

/// Inverse CDF of the standard Gumbel distribution, with u clamped away from 0 and 1.
inline double gumbel_from_uniform(double u) noexcept
{
    if (u < uniform_clamp) u = uniform_clamp;
    if (u > 1.0 - uniform_clamp) u = 1.0 - uniform_clamp;
    return -std::log(-std::log(u));
}

inline std::vector<double> sample_uniform(RngStream& stream, std::size_t dim)
{
    std::vector<double> out(dim);
    for (auto& v : out) v = stream.next_uniform();
    return out;
}

/// Standard Gumbel draws; advances the counter by dim.
inline std::vector<double> sample_gumbel(RngStream& stream, std::size_t dim)
{
    std::vector<double> out(dim);
    for (auto& v : out) v = gumbel_from_uniform(stream.next_uniform());
    return out;
}

inline std::vector<double> sample_gaussian(RngStream& stream, std::size_t dim)
{
    std::vector<double> out(dim);
    for (auto& v : out) v = stream.next_gaussian();
    return out;
}

/// Entries are +-zeta/sqrt(dim) with fair independent signs, so the norm is zeta.
inline std::vector<double> rademacher_shift(RngStream& stream, std::size_t dim, double zeta)
{
    std::vector<double> out(dim);
    const double magnitude = zeta / std::sqrt(static_cast<double>(dim));
    for (auto& v : out) v = (stream.next_bits() >> 63) ? magnitude : -magnitude;
    return out;
}

} // namespace repara_gap
