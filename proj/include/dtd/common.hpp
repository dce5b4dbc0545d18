// Shared primitives: error types, dense vector/matrix helpers, fingerprint hashing.
#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace dtd {

using Vec = std::vector<double>;
using Mask = std::vector<uint8_t>;  // 1 = active unit, 0 = inactive

// ---------------------------------------------------------------------------
// Errors
// ---------------------------------------------------------------------------

struct DtdError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ShapeError : DtdError {
    using DtdError::DtdError;
};

struct ClassIndexError : DtdError {
    using DtdError::DtdError;
};

// Search direction is orthogonal to the weight row; no root exists on the line.
struct OrthogonalDirectionError : DtdError {
    using DtdError::DtdError;
};

// |denominator| below tolerance while the propagated relevance is nonzero.
struct DegenerateDenominatorError : DtdError {
    using DtdError::DtdError;
};

struct RootUnavailableError : DtdError {
    using DtdError::DtdError;
};

struct SamplerExhaustedError : DtdError {
    using DtdError::DtdError;
};

struct BoundaryProximityError : DtdError {
    using DtdError::DtdError;
};

struct UnreachableTargetError : DtdError {
    using DtdError::DtdError;
};

// ---------------------------------------------------------------------------
// Dense row-major matrix. Desk-scale sizes only; no blocking, no views.
// ---------------------------------------------------------------------------

struct Matrix {
    std::vector<double> data;
    size_t rows = 0;
    size_t cols = 0;

    Matrix() = default;
    Matrix(size_t r, size_t c, double fill = 0.0) : data(r * c, fill), rows(r), cols(c) {}

    double& operator()(size_t i, size_t j) { return data[i * cols + j]; }
    const double& operator()(size_t i, size_t j) const { return data[i * cols + j]; }

    const double* row_ptr(size_t i) const { return data.data() + i * cols; }

    Vec row(size_t i) const {
        return Vec(data.begin() + static_cast<long>(i * cols),
                   data.begin() + static_cast<long>((i + 1) * cols));
    }
};

inline Vec matvec(const Matrix& m, const Vec& x) {
    if (x.size() != m.cols) throw ShapeError("matvec: size mismatch");
    Vec y(m.rows, 0.0);
    for (size_t i = 0; i < m.rows; ++i) {
        double acc = 0.0;
        const double* r = m.row_ptr(i);
        for (size_t j = 0; j < m.cols; ++j) acc += r[j] * x[j];
        y[i] = acc;
    }
    return y;
}

// y = M^T x, used by reverse-mode sweeps.
inline Vec matTvec(const Matrix& m, const Vec& x) {
    if (x.size() != m.rows) throw ShapeError("matTvec: size mismatch");
    Vec y(m.cols, 0.0);
    for (size_t i = 0; i < m.rows; ++i) {
        const double* r = m.row_ptr(i);
        for (size_t j = 0; j < m.cols; ++j) y[j] += r[j] * x[i];
    }
    return y;
}

// ---------------------------------------------------------------------------
// Small vector helpers
// ---------------------------------------------------------------------------

inline double dot(const Vec& a, const Vec& b) {
    if (a.size() != b.size()) throw ShapeError("dot: size mismatch");
    double acc = 0.0;
    for (size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
    return acc;
}

inline double linf_diff(const Vec& a, const Vec& b) {
    if (a.size() != b.size()) throw ShapeError("linf_diff: size mismatch");
    double m = 0.0;
    for (size_t i = 0; i < a.size(); ++i) m = std::max(m, std::fabs(a[i] - b[i]));
    return m;
}

inline double linf_norm(const Vec& a) {
    double m = 0.0;
    for (double v : a) m = std::max(m, std::fabs(v));
    return m;
}

inline double l2_norm(const Vec& a) { return std::sqrt(dot(a, a)); }

inline double sum(const Vec& a) {
    double acc = 0.0;
    for (double v : a) acc += v;
    return acc;
}

inline bool all_finite(const Vec& a) {
    for (double v : a) {
        if (!std::isfinite(v)) return false;
    }
    return true;
}

// Cosine similarity; NaN when either vector has zero norm.
inline double cosine(const Vec& a, const Vec& b) {
    const double na = l2_norm(a), nb = l2_norm(b);
    if (na == 0.0 || nb == 0.0) return std::nan("");
    return dot(a, b) / (na * nb);
}

// sign with sign(0) = +1; keeps the epsilon-stabilized denominator away from zero.
inline double sign_plus(double z) { return z >= 0.0 ? 1.0 : -1.0; }

// FNV-1a over mask bits; stable region identifier for rasters and tables.
inline uint64_t fnv1a_bits(const std::vector<Mask>& patterns) {
    uint64_t h = 1469598103934665603ull;
    for (const auto& m : patterns) {
        for (uint8_t b : m) {
            h ^= static_cast<uint64_t>(b + 1);
            h *= 1099511628211ull;
        }
    }
    return h;
}

}  // namespace dtd
