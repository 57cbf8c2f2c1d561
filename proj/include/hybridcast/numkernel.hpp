#pragma once

#include <hybridcast/error.hpp>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <numbers>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace hybridcast {

using Vector = std::vector<double>;

/// Dense row-major float64 matrix.
class Matrix {
public:
    Matrix() = default;

    Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
        : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

    Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
        : rows_(rows), cols_(cols), data_(std::move(data)) {
        if (data_.size() != rows_ * cols_) {
            throw ShapeError("matrix data length " + std::to_string(data_.size()) + " does not match " +
                             shape_string(rows_, cols_));
        }
    }

    Matrix(std::initializer_list<std::initializer_list<double>> rows) {
        rows_ = rows.size();
        cols_ = rows_ == 0 ? 0 : rows.begin()->size();
        data_.reserve(rows_ * cols_);
        for (const auto& r : rows) {
            if (r.size() != cols_) throw ShapeError("ragged matrix literal");
            data_.insert(data_.end(), r.begin(), r.end());
        }
    }

    static Matrix zeros(std::size_t rows, std::size_t cols) { return Matrix(rows, cols); }

    static Matrix identity(std::size_t n) {
        Matrix m(n, n);
        for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
        return m;
    }

    /// Single-column matrix from a vector.
    static Matrix column(std::span<const double> v) {
        return Matrix(v.size(), 1, std::vector<double>(v.begin(), v.end()));
    }

    std::size_t rows() const noexcept { return rows_; }
    std::size_t cols() const noexcept { return cols_; }
    std::size_t size() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }

    double& operator()(std::size_t r, std::size_t c) noexcept { return data_[r * cols_ + c]; }
    double operator()(std::size_t r, std::size_t c) const noexcept { return data_[r * cols_ + c]; }

    std::span<double> row(std::size_t r) & noexcept { return {data_.data() + r * cols_, cols_}; }
    std::span<const double> row(std::size_t r) const& noexcept { return {data_.data() + r * cols_, cols_}; }
    std::span<const double> row(std::size_t) const&& = delete;

    Vector col(std::size_t c) const {
        Vector out(rows_);
        for (std::size_t r = 0; r < rows_; ++r) out[r] = (*this)(r, c);
        return out;
    }

    std::span<double> data() & noexcept { return data_; }
    std::span<const double> data() const& noexcept { return data_; }
    std::span<const double> data() const&& = delete;

    bool all_finite() const noexcept {
        return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
    }

    friend bool operator==(const Matrix&, const Matrix&) = default;

    static std::string shape_string(std::size_t r, std::size_t c) {
        return std::to_string(r) + "x" + std::to_string(c);
    }
    std::string shape_string() const { return shape_string(rows_, cols_); }

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

inline Matrix matmul(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.rows()) {
        throw ShapeError("matmul: cannot multiply " + a.shape_string() + " by " + b.shape_string());
    }
    Matrix out(a.rows(), b.cols());
    for (std::size_t i = 0; i < a.rows(); ++i) {
        auto orow = out.row(i);
        for (std::size_t k = 0; k < a.cols(); ++k) {
            const double aik = a(i, k);
            if (aik == 0.0) continue;
            auto brow = b.row(k);
            for (std::size_t j = 0; j < b.cols(); ++j) orow[j] += aik * brow[j];
        }
    }
    if (!out.all_finite()) throw DomainError("matmul: non-finite result");
    return out;
}

/// y += M x. The hot path of the recurrent cell; no allocation.
inline void gemv_accumulate(const Matrix& m, std::span<const double> x, std::span<double> y) noexcept {
    for (std::size_t r = 0; r < m.rows(); ++r) {
        const double* w = m.row(r).data();
        double acc = 0.0;
        for (std::size_t c = 0; c < m.cols(); ++c) acc += w[c] * x[c];
        y[r] += acc;
    }
}

/// y += M^T x.
inline void gemv_transpose_accumulate(const Matrix& m, std::span<const double> x, std::span<double> y) noexcept {
    for (std::size_t r = 0; r < m.rows(); ++r) {
        const double xr = x[r];
        if (xr == 0.0) continue;
        const double* w = m.row(r).data();
        for (std::size_t c = 0; c < m.cols(); ++c) y[c] += w[c] * xr;
    }
}

/// M += a b^T.
inline void outer_accumulate(Matrix& m, std::span<const double> a, std::span<const double> b) noexcept {
    for (std::size_t r = 0; r < m.rows(); ++r) {
        const double ar = a[r];
        if (ar == 0.0) continue;
        double* w = m.row(r).data();
        for (std::size_t c = 0; c < m.cols(); ++c) w[c] += ar * b[c];
    }
}

inline double sigmoid(double x) noexcept {
    // Branching keeps exp() from overflowing for large |x|.
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

inline double tanh(double x) noexcept { return std::tanh(x); }

inline Matrix sigmoid(const Matrix& m) {
    Matrix out = m;
    for (double& v : out.data()) v = sigmoid(v);
    return out;
}

inline Matrix tanh(const Matrix& m) {
    Matrix out = m;
    for (double& v : out.data()) v = std::tanh(v);
    return out;
}

/// xoshiro256** seeded through splitmix64. The output sequence depends only
/// on the seed, so every run and platform sees the same draws.
class Rng {
public:
    explicit Rng(std::uint64_t seed = 0) : seed_(seed) {
        std::uint64_t s = seed;
        for (auto& word : state_) word = splitmix64(s);
    }

    std::uint64_t seed() const noexcept { return seed_; }

    std::uint64_t next_u64() noexcept {
        const std::uint64_t result = rotl(state_[1] * 5, 7) * 9;
        const std::uint64_t t = state_[1] << 17;
        state_[2] ^= state_[0];
        state_[3] ^= state_[1];
        state_[1] ^= state_[2];
        state_[0] ^= state_[3];
        state_[2] ^= t;
        state_[3] = rotl(state_[3], 45);
        return result;
    }

    /// Uniform in [0, 1) with 53 bits of resolution.
    double uniform01() noexcept { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) noexcept { return lo + (hi - lo) * uniform01(); }

    /// Standard normal via Box-Muller; no cached second draw so the stream
    /// position is a simple function of the number of calls.
    double normal() noexcept {
        double u1 = uniform01();
        while (u1 <= 0.0) u1 = uniform01();
        const double u2 = uniform01();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
    }

private:
    static std::uint64_t rotl(std::uint64_t x, int k) noexcept { return (x << k) | (x >> (64 - k)); }

    static std::uint64_t splitmix64(std::uint64_t& x) noexcept {
        std::uint64_t z = (x += 0x9e3779b97f4a7c15ULL);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    std::uint64_t seed_;
    std::uint64_t state_[4]{};
};

/// Matrix with entries drawn i.i.d. from U[-scale, +scale].
inline Matrix seeded_uniform(Rng& rng, std::size_t rows, std::size_t cols, double scale) {
    if (!(scale > 0.0) || !std::isfinite(scale)) {
        throw DomainError("seeded_uniform: scale must be positive and finite");
    }
    Matrix m(rows, cols);
    for (double& v : m.data()) v = rng.uniform(-scale, scale);
    return m;
}

}  // namespace hybridcast
