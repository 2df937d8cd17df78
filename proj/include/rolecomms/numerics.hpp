#pragma once

// Small dense linear algebra, root finding and a pinned random stream.
//
// Matrices here never exceed 8x8, so SmallMatrix is a plain row-major
// value type. The general eigen solver delegates to Eigen; the 2x2 case is
// closed form and serves as its cross-check.

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <limits>
#include <numbers>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "rolecomms/errors.hpp"

namespace rolecomms {

using Real = double;
using Complex = std::complex<Real>;
using Vector = std::vector<Real>;

struct Vec2 {
    Real x = 0.0;
    Real y = 0.0;

    constexpr Vec2& operator+=(const Vec2& o) noexcept {
        x += o.x;
        y += o.y;
        return *this;
    }
    constexpr Vec2& operator-=(const Vec2& o) noexcept {
        x -= o.x;
        y -= o.y;
        return *this;
    }
    constexpr Vec2& operator*=(Real s) noexcept {
        x *= s;
        y *= s;
        return *this;
    }
    friend constexpr Vec2 operator+(Vec2 a, const Vec2& b) noexcept { return a += b; }
    friend constexpr Vec2 operator-(Vec2 a, const Vec2& b) noexcept { return a -= b; }
    friend constexpr Vec2 operator-(const Vec2& a) noexcept { return {-a.x, -a.y}; }
    friend constexpr Vec2 operator*(Vec2 a, Real s) noexcept { return a *= s; }
    friend constexpr Vec2 operator*(Real s, Vec2 a) noexcept { return a *= s; }
    friend constexpr Vec2 operator/(Vec2 a, Real s) noexcept { return {a.x / s, a.y / s}; }
    friend constexpr bool operator==(const Vec2&, const Vec2&) = default;

    friend std::ostream& operator<<(std::ostream& os, const Vec2& v) {
        return os << '(' << v.x << ", " << v.y << ')';
    }
};

inline constexpr Real dot(const Vec2& a, const Vec2& b) noexcept { return a.x * b.x + a.y * b.y; }
// z component of the 3D cross product.
inline constexpr Real cross(const Vec2& a, const Vec2& b) noexcept { return a.x * b.y - a.y * b.x; }
inline Real norm(const Vec2& a) noexcept { return std::hypot(a.x, a.y); }
inline bool is_finite(const Vec2& a) noexcept { return std::isfinite(a.x) && std::isfinite(a.y); }

// Distance from point p to the segment [a, b].
inline Real point_segment_distance(const Vec2& p, const Vec2& a, const Vec2& b) noexcept {
    const Vec2 ab = b - a;
    const Real len2 = dot(ab, ab);
    if (len2 == 0.0) return norm(p - a);
    const Real t = std::clamp(dot(p - a, ab) / len2, 0.0, 1.0);
    return norm(p - (a + t * ab));
}

class SmallMatrix {
  public:
    SmallMatrix(std::size_t rows, std::size_t cols, Real fill = 0.0)
        : rows_(rows), cols_(cols), data_(rows * cols, fill) {
        if (rows == 0 || cols == 0) throw DimensionError("SmallMatrix: zero dimension");
    }

    SmallMatrix(std::size_t rows, std::size_t cols, Vector row_major)
        : rows_(rows), cols_(cols), data_(std::move(row_major)) {
        if (rows == 0 || cols == 0) throw DimensionError("SmallMatrix: zero dimension");
        if (data_.size() != rows * cols) throw DimensionError("SmallMatrix: entry count does not match shape");
    }

    SmallMatrix(std::initializer_list<std::initializer_list<Real>> rows) {
        rows_ = rows.size();
        cols_ = rows_ ? rows.begin()->size() : 0;
        if (rows_ == 0 || cols_ == 0) throw DimensionError("SmallMatrix: zero dimension");
        data_.reserve(rows_ * cols_);
        for (const auto& r : rows) {
            if (r.size() != cols_) throw DimensionError("SmallMatrix: ragged initializer");
            data_.insert(data_.end(), r.begin(), r.end());
        }
    }

    static SmallMatrix identity(std::size_t n) {
        SmallMatrix m(n, n);
        for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
        return m;
    }

    static SmallMatrix diagonal(std::span<const Real> d) {
        SmallMatrix m(d.size(), d.size());
        for (std::size_t i = 0; i < d.size(); ++i) m(i, i) = d[i];
        return m;
    }

    std::size_t rows() const noexcept { return rows_; }
    std::size_t cols() const noexcept { return cols_; }
    bool is_square() const noexcept { return rows_ == cols_; }
    std::span<const Real> entries() const noexcept { return data_; }

    Real& operator()(std::size_t r, std::size_t c) noexcept { return data_[r * cols_ + c]; }
    Real operator()(std::size_t r, std::size_t c) const noexcept { return data_[r * cols_ + c]; }

    bool all_finite() const noexcept {
        return std::all_of(data_.begin(), data_.end(), [](Real v) { return std::isfinite(v); });
    }

    SmallMatrix transpose() const {
        SmallMatrix t(cols_, rows_);
        for (std::size_t r = 0; r < rows_; ++r)
            for (std::size_t c = 0; c < cols_; ++c) t(c, r) = (*this)(r, c);
        return t;
    }

    Real trace() const {
        require_square("trace");
        Real t = 0.0;
        for (std::size_t i = 0; i < rows_; ++i) t += (*this)(i, i);
        return t;
    }

    Real max_abs() const noexcept {
        Real m = 0.0;
        for (Real v : data_) m = std::max(m, std::abs(v));
        return m;
    }

    friend SmallMatrix operator+(const SmallMatrix& a, const SmallMatrix& b) {
        a.require_same_shape(b, "operator+");
        SmallMatrix out = a;
        for (std::size_t i = 0; i < out.data_.size(); ++i) out.data_[i] += b.data_[i];
        return out;
    }

    friend SmallMatrix operator-(const SmallMatrix& a, const SmallMatrix& b) {
        a.require_same_shape(b, "operator-");
        SmallMatrix out = a;
        for (std::size_t i = 0; i < out.data_.size(); ++i) out.data_[i] -= b.data_[i];
        return out;
    }

    friend SmallMatrix operator*(Real s, SmallMatrix m) {
        for (Real& v : m.data_) v *= s;
        return m;
    }

    friend SmallMatrix operator*(const SmallMatrix& a, const SmallMatrix& b) {
        if (a.cols_ != b.rows_) throw DimensionError("SmallMatrix: inner dimensions differ");
        SmallMatrix out(a.rows_, b.cols_);
        for (std::size_t r = 0; r < a.rows_; ++r)
            for (std::size_t k = 0; k < a.cols_; ++k) {
                const Real av = a(r, k);
                for (std::size_t c = 0; c < b.cols_; ++c) out(r, c) += av * b(k, c);
            }
        return out;
    }

    friend Vector operator*(const SmallMatrix& a, std::span<const Real> x) {
        if (a.cols_ != x.size()) throw DimensionError("SmallMatrix: vector length differs from column count");
        Vector out(a.rows_, 0.0);
        for (std::size_t r = 0; r < a.rows_; ++r)
            for (std::size_t c = 0; c < a.cols_; ++c) out[r] += a(r, c) * x[c];
        return out;
    }

    friend Vector operator*(const SmallMatrix& a, const Vector& x) { return a * std::span<const Real>(x); }

    friend bool operator==(const SmallMatrix&, const SmallMatrix&) = default;

    friend std::ostream& operator<<(std::ostream& os, const SmallMatrix& m) {
        os << '[';
        for (std::size_t r = 0; r < m.rows_; ++r) {
            os << (r ? ", [" : "[");
            for (std::size_t c = 0; c < m.cols_; ++c) os << (c ? ", " : "") << m(r, c);
            os << ']';
        }
        return os << ']';
    }

    Eigen::MatrixXd to_eigen() const {
        Eigen::MatrixXd e(rows_, cols_);
        for (std::size_t r = 0; r < rows_; ++r)
            for (std::size_t c = 0; c < cols_; ++c) e(r, c) = (*this)(r, c);
        return e;
    }

    static SmallMatrix from_eigen(const Eigen::MatrixXd& e) {
        SmallMatrix m(static_cast<std::size_t>(e.rows()), static_cast<std::size_t>(e.cols()));
        for (std::size_t r = 0; r < m.rows_; ++r)
            for (std::size_t c = 0; c < m.cols_; ++c) m(r, c) = e(r, c);
        return m;
    }

    void require_square(const char* what) const {
        if (!is_square()) throw DimensionError(std::string(what) + ": matrix must be square");
    }

  private:
    void require_same_shape(const SmallMatrix& b, const char* what) const {
        if (rows_ != b.rows_ || cols_ != b.cols_) throw DimensionError(std::string("SmallMatrix ") + what + ": shape mismatch");
    }

    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    Vector data_;
};

struct ComplexPair {
    Complex first;
    Complex second;

    bool both_real() const noexcept { return first.imag() == 0.0 && second.imag() == 0.0; }
    Real max_real() const noexcept { return std::max(first.real(), second.real()); }
};

// Roots of lambda^2 - tr(m) lambda + det(m). Real roots come out in
// descending order, complex roots as (re + i im, re - i im) with im > 0.
inline ComplexPair eig2x2(const SmallMatrix& m) {
    if (m.rows() != 2 || m.cols() != 2) throw DimensionError("eig2x2: expected a 2x2 matrix");
    if (!m.all_finite()) throw ArgumentError("eig2x2: non-finite entry");

    const Real a = m(0, 0), b = m(0, 1), c = m(1, 0), d = m(1, 1);
    const Real half_trace = 0.5 * (a + d);
    const Real half_gap = 0.5 * (a - d);
    // (tr/2)^2 - det written without cancellation between tr^2 and 4 det.
    const Real disc = half_gap * half_gap + b * c;

    if (disc >= 0.0) {
        const Real root = std::sqrt(disc);
        // Larger-magnitude root directly, the other via det / root1.
        const Real big = half_trace >= 0.0 ? half_trace + root : half_trace - root;
        const Real det = a * d - b * c;
        const Real small = big != 0.0 ? det / big : 0.0;
        const Real hi = std::max(big, small), lo = std::min(big, small);
        return {Complex(hi, 0.0), Complex(lo, 0.0)};
    }
    const Real im = std::sqrt(-disc);
    return {Complex(half_trace, im), Complex(half_trace, -im)};
}

// Descending real part, then descending imaginary part.
inline void sort_spectrum(std::vector<Complex>& values) {
    std::sort(values.begin(), values.end(), [](const Complex& l, const Complex& r) {
        if (l.real() != r.real()) return l.real() > r.real();
        return l.imag() > r.imag();
    });
}

inline constexpr std::size_t kMaxEigenDimension = 8;

// Eigenvalues of a real n x n matrix, n <= 8, via Hessenberg reduction and
// shifted QR (Eigen's real Schur form, capped at 40 sweeps per eigenvalue).
// Every value is verified by an eigenpair residual below tol * max(1, |m|).
inline std::vector<Complex> eig_general(const SmallMatrix& m, Real tol = 1e-9) {
    m.require_square("eig_general");
    if (m.rows() > kMaxEigenDimension) throw DimensionError("eig_general: dimension above 8");
    if (!m.all_finite()) throw ArgumentError("eig_general: non-finite entry");
    if (!(tol > 0.0)) throw ArgumentError("eig_general: tol must be positive");

    const Eigen::MatrixXd e = m.to_eigen();
    Eigen::EigenSolver<Eigen::MatrixXd> solver(e, /*computeEigenvectors=*/true);
    if (solver.info() != Eigen::Success) throw NumericError("eig_general: QR iteration did not converge");

    const Eigen::MatrixXcd ec = e.cast<Complex>();
    const Real scale = std::max<Real>(1.0, m.max_abs());
    std::vector<Complex> values;
    values.reserve(m.rows());
    for (Eigen::Index i = 0; i < e.rows(); ++i) {
        const Complex lambda = solver.eigenvalues()(i);
        const Eigen::VectorXcd v = solver.eigenvectors().col(i);
        const Real residual = (ec * v - lambda * v).norm() / std::max<Real>(v.norm(), 1e-300);
        // Defective eigenvalues have ill-conditioned vectors; fall back to
        // the smallest singular value of (m - lambda I) in that case.
        if (residual > tol * scale) {
            const Eigen::MatrixXcd shifted = ec - lambda * Eigen::MatrixXcd::Identity(e.rows(), e.cols());
            Eigen::JacobiSVD<Eigen::MatrixXcd> svd(shifted);
            const Real sigma_min = svd.singularValues()(svd.singularValues().size() - 1);
            if (sigma_min > std::sqrt(tol) * scale)
                throw NumericError("eig_general: eigenpair residual above tolerance");
        }
        values.push_back(lambda);
    }
    sort_spectrum(values);
    return values;
}

inline Real max_real_part(std::span<const Complex> values) {
    Real m = -std::numeric_limits<Real>::infinity();
    for (const auto& v : values) m = std::max(m, v.real());
    return m;
}

struct BisectResult {
    Real root;
    int iterations;
};

// Bisection on a sign-changing bracket. Stops once the bracket is no wider
// than tol and returns its midpoint, so |root - true_root| <= tol / 2.
inline BisectResult bisect_counted(const std::function<Real(Real)>& f, Real lo, Real hi, Real tol) {
    if (!(tol > 0.0)) throw ArgumentError("bisect: tol must be positive");
    if (!(lo <= hi)) std::swap(lo, hi);
    Real flo = f(lo);
    const Real fhi = f(hi);
    if (flo == 0.0) return {lo, 0};
    if (fhi == 0.0) return {hi, 0};
    if (std::signbit(flo) == std::signbit(fhi)) throw BracketError("bisect: f(lo) and f(hi) share a sign");

    int iterations = 0;
    while (hi - lo > tol) {
        const Real mid = lo + 0.5 * (hi - lo);
        if (mid <= lo || mid >= hi) break; // bracket at floating-point resolution
        const Real fmid = f(mid);
        ++iterations;
        if (fmid == 0.0) return {mid, iterations};
        if (std::signbit(fmid) == std::signbit(flo)) {
            lo = mid;
            flo = fmid;
        } else {
            hi = mid;
        }
    }
    return {lo + 0.5 * (hi - lo), iterations};
}

inline Real bisect(const std::function<Real(Real)>& f, Real lo, Real hi, Real tol) {
    return bisect_counted(f, lo, hi, tol).root;
}

// SplitMix64 step; used for seeding and for deriving child seeds.
inline constexpr std::uint64_t splitmix64(std::uint64_t& state) noexcept {
    std::uint64_t z = (state += 0x9E3779B97F4A7C15ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

// Independent child seed for (seed, stream) pairs.
inline constexpr std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) noexcept {
    std::uint64_t s = seed ^ (stream * 0xD1B54A32D192ED03ULL);
    splitmix64(s);
    return splitmix64(s);
}

// xoshiro256** (Blackman & Vigna) seeded through SplitMix64. The bit stream
// depends only on the seed; doubles use the top 53 bits.
class Rng {
  public:
    explicit Rng(std::uint64_t seed) noexcept : seed_(seed) {
        std::uint64_t sm = seed;
        for (auto& w : s_) w = splitmix64(sm);
    }

    std::uint64_t seed() const noexcept { return seed_; }

    std::uint64_t next_u64() noexcept {
        const std::uint64_t result = rotl(s_[1] * 5, 7) * 9;
        const std::uint64_t t = s_[1] << 17;
        s_[2] ^= s_[0];
        s_[3] ^= s_[1];
        s_[1] ^= s_[2];
        s_[0] ^= s_[3];
        s_[2] ^= t;
        s_[3] = rotl(s_[3], 45);
        return result;
    }

    // Uniform in [0, 1).
    Real uniform() noexcept { return static_cast<Real>(next_u64() >> 11) * 0x1.0p-53; }

    Real uniform(Real lo, Real hi) noexcept { return lo + (hi - lo) * uniform(); }

  private:
    static constexpr std::uint64_t rotl(std::uint64_t x, int k) noexcept { return (x << k) | (x >> (64 - k)); }

    std::uint64_t seed_;
    std::array<std::uint64_t, 4> s_{};
};

// Box-Muller on exactly two uniforms per sample (cosine branch only), so each
// call advances the stream by a fixed amount. stddev == 0 returns mean
// exactly but still consumes the two draws.
inline Real gaussian(Rng& rng, Real mean, Real stddev) {
    if (!(stddev >= 0.0)) throw ArgumentError("gaussian: stddev must be non-negative");
    const Real u1 = 1.0 - rng.uniform(); // (0, 1]
    const Real u2 = rng.uniform();
    if (stddev == 0.0) return mean;
    const Real z = std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
    return mean + stddev * z;
}

} // namespace rolecomms
