#ifndef OMTP_KERNELS_HPP
#define OMTP_KERNELS_HPP

// Dense numeric kernels shared by the plain (double) evaluation path and the
// tape-recorded path. Both routes call exactly these loops so that their
// results agree bit for bit.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>

namespace omtp::kernels {

// y = A x, A row-major rows x cols.
inline void matvec(std::span<const double> a, std::span<const double> x, std::span<double> y) {
    const std::size_t rows = y.size();
    const std::size_t cols = x.size();
    for (std::size_t i = 0; i < rows; ++i) {
        const double* row = a.data() + i * cols;
        double acc = 0.0;
        for (std::size_t j = 0; j < cols; ++j) acc += row[j] * x[j];
        y[i] = acc;
    }
}

inline void add(std::span<const double> a, std::span<const double> b, std::span<double> y) {
    for (std::size_t i = 0; i < y.size(); ++i) y[i] = a[i] + b[i];
}

inline void sub(std::span<const double> a, std::span<const double> b, std::span<double> y) {
    for (std::size_t i = 0; i < y.size(); ++i) y[i] = a[i] - b[i];
}

inline void mul(std::span<const double> a, std::span<const double> b, std::span<double> y) {
    for (std::size_t i = 0; i < y.size(); ++i) y[i] = a[i] * b[i];
}

inline void scale(std::span<const double> x, double c, std::span<double> y) {
    for (std::size_t i = 0; i < y.size(); ++i) y[i] = x[i] * c;
}

inline double dot(std::span<const double> a, std::span<const double> b) {
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
    return acc;
}

inline double sum(std::span<const double> x) {
    double acc = 0.0;
    for (double v : x) acc += v;
    return acc;
}

// Rescales only when the plain sum of squares overflows.
inline double l2norm(std::span<const double> x) {
    const double sq = dot(x, x);
    if (std::isfinite(sq)) return std::sqrt(sq);
    double scale = 0.0;
    for (double v : x) scale = std::max(scale, std::abs(v));
    if (!std::isfinite(scale)) return scale;
    double acc = 0.0;
    for (double v : x) acc += (v / scale) * (v / scale);
    return scale * std::sqrt(acc);
}

inline double relu(double x) { return x > 0.0 ? x : 0.0; }

}  // namespace omtp::kernels

#endif
