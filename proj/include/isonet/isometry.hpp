#pragma once

#include <cstdint>

#include "isonet/convops.hpp"
#include "isonet/tensor.hpp"

namespace isonet {

struct PenaltyResult {
    double loss = 0.0;
    Kernel grad;
};

/// True when the penalty and residual act on Conv(A, A), i.e. the adjoint side
/// (C > M); otherwise they act on Conv(A^T, A^T).
inline bool uses_adjoint_side(const Kernel& a) { return a.in_channels() > a.out_channels(); }

/// (gamma/2) * || Conv(B, B) - delta ||_F^2 with Same support, where B = A if
/// C > M and B = A^T otherwise. The gradient is exact with respect to A.
PenaltyResult ortho_penalty(const Kernel& a, double gamma);

/// Frobenius distance between the Full-support self-correlation (on the side
/// chosen as in ortho_penalty) and the delta kernel. Zero iff the
/// corresponding operator is an isometry on the infinite grid.
double isometry_residual(const Kernel& a);

/// Same as isometry_residual but with Same support: the quantity the penalty drives to zero.
double isometry_residual_same(const Kernel& a);

bool check_isometry_condition(const Kernel& a, double tol);

struct SpectrumEstimate {
    double sigma_max = 0.0;
    /// Shifted power iteration estimate; a heuristic, not a certified bound.
    double sigma_min_lower = 0.0;
};

struct SpectrumOptions {
    int iterations = 200;
    int height = 16;
    int width = 16;
    std::uint64_t seed = 0x15013e7;
};

/// Extreme singular values of the operator of A over signals of the given
/// spatial shape. Iterates on A*A when M >= C and on AA* otherwise, so the
/// smaller side (where sigma_min is meaningful) is used.
SpectrumEstimate extreme_singular_values(const Kernel& a, const SpectrumOptions& options = {});

}  // namespace isonet
