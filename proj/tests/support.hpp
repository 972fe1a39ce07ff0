#pragma once

// Shared oracles for the test suites: random tensors, dense operator
// matrices, naive reference loops and central differences. Nothing here calls
// the optimized kernels.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <functional>
#include <span>
#include <vector>

#include "isonet/reference.hpp"
#include "isonet/rng.hpp"
#include "isonet/tensor.hpp"

namespace testing {

using isonet::Kernel;
using isonet::Rng;
using isonet::Signal;

inline Signal random_signal(Rng& rng, int n, int c, int h, int w, double sd = 1.0) {
    Signal s(n, c, h, w);
    for (double& v : s.values()) v = rng.normal(0.0, sd);
    return s;
}

inline Kernel random_kernel(Rng& rng, int m, int c, int k, double sd = 1.0) {
    Kernel a(m, c, k);
    for (double& v : a.values()) v = rng.normal(0.0, sd);
    return a;
}

inline double max_abs(std::span<const double> v) {
    double out = 0.0;
    for (double x : v) out = std::max(out, std::abs(x));
    return out;
}

/// max |a - b| / max(max |b|, floor)
inline double rel_diff(std::span<const double> a, std::span<const double> b, double floor = 1e-300) {
    double num = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) num = std::max(num, std::abs(a[i] - b[i]));
    return num / std::max(max_abs(b), floor);
}

inline double rel_err(double a, double b, double floor = 1e-12) {
    return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

/// Plain double sum of elementwise products; independent of the library.
inline double dot(std::span<const double> a, std::span<const double> b) {
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
    return acc;
}

/// Dense matrix of the operator x -> A x on a single C x H x W signal, built
/// column by column from the naive reference loops. Rows index (m, i, j),
/// columns (c, i, j).
inline Eigen::MatrixXd operator_matrix(const Kernel& a, int h, int w) {
    const int cols = a.in_channels() * h * w;
    const int rows = a.out_channels() * h * w;
    Eigen::MatrixXd out(rows, cols);
    for (int col = 0; col < cols; ++col) {
        Signal e(1, a.in_channels(), h, w);
        e.values()[static_cast<std::size_t>(col)] = 1.0;
        const Signal y = isonet::reference::apply_operator(a, e);
        for (int row = 0; row < rows; ++row) out(row, col) = y.values()[static_cast<std::size_t>(row)];
    }
    return out;
}

/// Central difference of f along every entry of `theta` (modified in place and restored).
inline std::vector<double> numeric_gradient(std::span<double> theta, const std::function<double()>& f,
                                            double h = 1e-5) {
    std::vector<double> out(theta.size());
    for (std::size_t i = 0; i < theta.size(); ++i) {
        const double saved = theta[i];
        theta[i] = saved + h;
        const double lp = f();
        theta[i] = saved - h;
        const double lm = f();
        theta[i] = saved;
        out[i] = (lp - lm) / (2.0 * h);
    }
    return out;
}

/// Signal that is zero within `margin` of every border.
inline Signal interior_signal(Rng& rng, int n, int c, int h, int w, int margin) {
    Signal s(n, c, h, w);
    for (int b = 0; b < n; ++b)
        for (int ch = 0; ch < c; ++ch)
            for (int i = margin; i < h - margin; ++i)
                for (int j = margin; j < w - margin; ++j) s.at(b, ch, i, j) = rng.normal();
    return s;
}

}  // namespace testing
