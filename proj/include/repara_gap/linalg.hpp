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

// Small dense linear algebra: a row-major matrix, row-vector products,
// the tempered softmax and a one-sided Jacobi SVD.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <limits>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "repara_gap/errors.hpp"

namespace repara_gap {

using Vector = std::vector<double>;

class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
        : rows_(rows), cols_(cols), data_(rows * cols, fill)
    {
    }
    Matrix(std::size_t rows, std::size_t cols, Vector data)
        : rows_(rows), cols_(cols), data_(std::move(data))
    {
        require(data_.size() == rows_ * cols_, "Matrix: data length does not match shape");
        for (double v : data_) require(std::isfinite(v), "Matrix: entries must be finite");
    }
    Matrix(std::initializer_list<std::initializer_list<double>> rows)
        : rows_(rows.size()), cols_(rows.size() ? rows.begin()->size() : 0)
    {
        data_.reserve(rows_ * cols_);
        for (const auto& r : rows) {
            require(r.size() == cols_, "Matrix: ragged initializer");
            data_.insert(data_.end(), r.begin(), r.end());
        }
    }

    static Matrix identity(std::size_t n)
    {
        Matrix m(n, n);
        for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
        return m;
    }

    std::size_t rows() const noexcept { return rows_; }
    std::size_t cols() const noexcept { return cols_; }
    std::size_t size() const noexcept { return data_.size(); }

    double& operator()(std::size_t i, std::size_t j) noexcept { return data_[i * cols_ + j]; }
    double operator()(std::size_t i, std::size_t j) const noexcept { return data_[i * cols_ + j]; }

    std::span<double> row(std::size_t i) noexcept { return {data_.data() + i * cols_, cols_}; }
    std::span<const double> row(std::size_t i) const noexcept
    {
        return {data_.data() + i * cols_, cols_};
    }

    std::span<double> flat() noexcept { return data_; }
    std::span<const double> flat() const noexcept { return data_; }

    Matrix transpose() const
    {
        Matrix t(cols_, rows_);
        for (std::size_t i = 0; i < rows_; ++i)
            for (std::size_t j = 0; j < cols_; ++j) t(j, i) = (*this)(i, j);
        return t;
    }

    Matrix& operator*=(double s) noexcept
    {
        for (double& v : data_) v *= s;
        return *this;
    }

    friend bool operator==(const Matrix&, const Matrix&) = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    Vector data_;
};

inline double dot(std::span<const double> a, std::span<const double> b) noexcept
{
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

inline double norm2(std::span<const double> a) noexcept { return std::sqrt(dot(a, a)); }

inline double distance(std::span<const double> a, std::span<const double> b) noexcept
{
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
    return std::sqrt(s);
}

inline double frobenius_norm(const Matrix& m) noexcept { return norm2(m.flat()); }

/// out += x * M for a row vector x.
inline void add_row_times(std::span<const double> x, const Matrix& m, std::span<double> out) noexcept
{
    for (std::size_t i = 0; i < m.rows(); ++i) {
        const double xi = x[i];
        if (xi == 0.0) continue;
        const auto r = m.row(i);
        for (std::size_t j = 0; j < r.size(); ++j) out[j] += xi * r[j];
    }
}

/// out += y * M^T, i.e. out[i] += sum_j M(i,j) y[j].
inline void add_times_transpose(std::span<const double> y, const Matrix& m, std::span<double> out) noexcept
{
    for (std::size_t i = 0; i < m.rows(); ++i) out[i] += dot(m.row(i), y);
}

inline Vector row_times(std::span<const double> x, const Matrix& m)
{
    require(x.size() == m.rows(), "row_times: dimension mismatch");
    Vector out(m.cols(), 0.0);
    add_row_times(x, m, out);
    return out;
}

inline Matrix matmul(const Matrix& a, const Matrix& b)
{
    require(a.cols() == b.rows(), "matmul: dimension mismatch");
    Matrix c(a.rows(), b.cols());
    for (std::size_t i = 0; i < a.rows(); ++i) add_row_times(a.row(i), b, c.row(i));
    return c;
}

/// Index of the largest entry; ties go to the lowest index.
inline std::size_t argmax(std::span<const double> x) noexcept
{
    std::size_t best = 0;
    for (std::size_t i = 1; i < x.size(); ++i)
        if (x[i] > x[best]) best = i;
    return best;
}

/// exp(x/tau) / sum exp(x/tau), evaluated after subtracting the maximum.
inline Vector softmax_tempered(std::span<const double> x, double tau)
{
    require(tau > 0.0, "softmax_tempered: tau must be positive");
    require(!x.empty(), "softmax_tempered: empty input");
    const double top = x[argmax(x)];
    Vector out(x.size());
    double total = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        require(std::isfinite(x[i]), "softmax_tempered: non-finite input");
        out[i] = std::exp((x[i] - top) / tau);
        total += out[i];
    }
    for (double& v : out) v /= total;
    return out;
}

// ---------------------------------------------------------------------------
// SVD

struct Svd {
    Matrix u;      ///< rows x k, orthonormal columns
    Vector sigma;  ///< k values, descending
    Matrix v;      ///< cols x k, orthonormal columns
    int sweeps = 0;
};

inline constexpr std::size_t svd_max_dim = 256;
inline constexpr int svd_max_sweeps = 100;
inline constexpr double svd_rotation_tol = 1e-12;

namespace detail {

// Extend the orthonormal columns of q flagged in `valid` to a full orthonormal
// set, filling the remaining columns from the standard basis.
inline void complete_basis(Matrix& q, std::vector<bool>& valid)
{
    const std::size_t n = q.rows();
    std::size_t next_e = 0;
    for (std::size_t j = 0; j < q.cols(); ++j) {
        if (valid[j]) continue;
        while (next_e < n) {
            Vector c(n, 0.0);
            c[next_e++] = 1.0;
            for (int pass = 0; pass < 2; ++pass) {
                for (std::size_t k = 0; k < q.cols(); ++k) {
                    if (!valid[k]) continue;
                    double p = 0.0;
                    for (std::size_t i = 0; i < n; ++i) p += q(i, k) * c[i];
                    for (std::size_t i = 0; i < n; ++i) c[i] -= p * q(i, k);
                }
            }
            const double nc = norm2(c);
            if (nc > 1e-8) {
                for (std::size_t i = 0; i < n; ++i) q(i, j) = c[i] / nc;
                valid[j] = true;
                break;
            }
        }
    }
}

// Hestenes one-sided Jacobi for a tall (rows >= cols) matrix.
inline Svd svd_tall(const Matrix& a)
{
    const std::size_t m = a.rows();
    const std::size_t n = a.cols();
    Matrix w = a;
    Matrix v = Matrix::identity(n);

    int sweep = 0;
    bool rotated = true;
    while (rotated) {
        if (sweep == svd_max_sweeps)
            fail(ErrorCode::svd_not_converged,
                 "svd_small: no convergence after " + std::to_string(svd_max_sweeps) + " sweeps");
        rotated = false;
        ++sweep;
        for (std::size_t p = 0; p + 1 < n; ++p) {
            for (std::size_t q = p + 1; q < n; ++q) {
                double alpha = 0.0, beta = 0.0, gamma = 0.0;
                for (std::size_t i = 0; i < m; ++i) {
                    alpha += w(i, p) * w(i, p);
                    beta += w(i, q) * w(i, q);
                    gamma += w(i, p) * w(i, q);
                }
                if (gamma == 0.0 || std::abs(gamma) <= svd_rotation_tol * std::sqrt(alpha * beta))
                    continue;
                rotated = true;
                const double zeta = (beta - alpha) / (2.0 * gamma);
                const double t = std::copysign(1.0, zeta) / (std::abs(zeta) + std::sqrt(1.0 + zeta * zeta));
                const double c = 1.0 / std::sqrt(1.0 + t * t);
                const double s = c * t;
                for (std::size_t i = 0; i < m; ++i) {
                    const double wp = w(i, p), wq = w(i, q);
                    w(i, p) = c * wp - s * wq;
                    w(i, q) = s * wp + c * wq;
                }
                for (std::size_t i = 0; i < n; ++i) {
                    const double vp = v(i, p), vq = v(i, q);
                    v(i, p) = c * vp - s * vq;
                    v(i, q) = s * vp + c * vq;
                }
            }
        }
    }

    Vector norms(n);
    for (std::size_t j = 0; j < n; ++j) {
        double s = 0.0;
        for (std::size_t i = 0; i < m; ++i) s += w(i, j) * w(i, j);
        norms[j] = std::sqrt(s);
    }
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t x, std::size_t y) { return norms[x] > norms[y]; });

    Svd out{Matrix(m, n), Vector(n), Matrix(n, n), sweep};
    const double scale = norms.empty() ? 0.0 : norms[order[0]];
    std::vector<bool> valid(n, false);
    for (std::size_t k = 0; k < n; ++k) {
        const std::size_t j = order[k];
        out.sigma[k] = norms[j];
        for (std::size_t i = 0; i < n; ++i) out.v(i, k) = v(i, j);
        if (norms[j] > 0.0 && norms[j] > scale * 1e-14) {
            for (std::size_t i = 0; i < m; ++i) out.u(i, k) = w(i, j) / norms[j];
            valid[k] = true;
        }
    }
    complete_basis(out.u, valid);
    return out;
}

} // namespace detail

/// Thin SVD A = U diag(sigma) V^T with k = min(rows, cols).
inline Svd svd_small(const Matrix& a)
{
    require(a.rows() >= 1 && a.cols() >= 1, "svd_small: empty matrix");
    require(a.rows() <= svd_max_dim && a.cols() <= svd_max_dim, "svd_small: matrix too large");
    if (a.rows() >= a.cols()) return detail::svd_tall(a);
    Svd t = detail::svd_tall(a.transpose());
    std::swap(t.u, t.v);
    return t;
}

inline double spectral_norm(const Matrix& a) { return svd_small(a).sigma[0]; }

/// U diag(sigma) V^T.
inline Matrix compose_svd(const Matrix& u, std::span<const double> sigma, const Matrix& v)
{
    Matrix out(u.rows(), v.rows());
    for (std::size_t i = 0; i < u.rows(); ++i)
        for (std::size_t j = 0; j < v.rows(); ++j) {
            double s = 0.0;
            for (std::size_t k = 0; k < sigma.size(); ++k) s += u(i, k) * sigma[k] * v(j, k);
            out(i, j) = s;
        }
    return out;
}

} // namespace repara_gap
