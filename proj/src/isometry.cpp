#include "isonet/isometry.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "isonet/rng.hpp"

namespace isonet {

namespace {

// Self-correlation minus the delta target, in place.
Kernel correlation_residual(const Kernel& b, Support support) {
    Kernel s = kernel_self_correlation(b, support);
    for (int m = 0; m < s.out_channels(); ++m) s.at(m, m, 0, 0) -= 1.0;
    return s;
}

// Gradient of 0.5 * ||Conv(B,B) - delta||^2 (Same support) with respect to B,
// given the residual R = Conv(B,B) - delta. B_{ac} enters R_{m,a}[t] as the
// kernel and R_{a,m}[t] as the signal; since R_{a,m}[t] = R_{m,a}[-t] both
// terms are equal, giving dB_{ac}[s] = 2 sum_m sum_t R_{m,a}[t] B_{mc}[t+s].
Kernel penalty_gradient(const Kernel& b, const Kernel& resid) {
    const int mch = b.out_channels(), cch = b.in_channels(), r = b.radius(), k = b.size();
    Kernel grad(mch, cch, k);
    const double* bv = b.values().data();
    const long plane = static_cast<long>(k) * k;
#pragma omp parallel for schedule(static)
    for (int a = 0; a < mch; ++a) {
        double* ga = grad.values().data() + static_cast<long>(a) * cch * plane;
        for (int m = 0; m < mch; ++m) {
            for (int tp = -r; tp <= r; ++tp) {
                for (int tq = -r; tq <= r; ++tq) {
                    const double coef = 2.0 * resid.at(m, a, tp, tq);
                    if (coef == 0.0) continue;
                    const int sp_lo = std::max(-r, -r - tp), sp_hi = std::min(r, r - tp);
                    const int sq_lo = std::max(-r, -r - tq), sq_hi = std::min(r, r - tq);
                    for (int c = 0; c < cch; ++c) {
                        const double* bmc = bv + (static_cast<long>(m) * cch + c) * plane;
                        double* gac = ga + c * plane;
                        for (int sp = sp_lo; sp <= sp_hi; ++sp)
                            for (int sq = sq_lo; sq <= sq_hi; ++sq)
                                gac[(sp + r) * k + (sq + r)] += coef * bmc[(tp + sp + r) * k + (tq + sq + r)];
                    }
                }
            }
        }
    }
    return grad;
}

double sum_squares(const Kernel& k) {
    double acc = 0.0;
    for (double v : k.values()) acc += v * v;
    return acc;
}

double residual_on_selected_side(const Kernel& a, Support support) {
    const Kernel resid = uses_adjoint_side(a) ? correlation_residual(a, support)
                                              : correlation_residual(transpose_kernel(a), support);
    return frobenius_norm(resid);
}

void normalize(Signal& v) {
    const double nrm = frobenius_norm(v);
    if (nrm == 0.0) return;
    for (double& x : v.values()) x /= nrm;
}

}  // namespace

PenaltyResult ortho_penalty(const Kernel& a, double gamma) {
    if (gamma < 0.0) throw std::invalid_argument("ortho_penalty: gamma must be >= 0");
    const bool adjoint_side = uses_adjoint_side(a);
    const Kernel b = adjoint_side ? a : transpose_kernel(a);
    const Kernel resid = correlation_residual(b, Support::Same);

    PenaltyResult out;
    out.loss = 0.5 * gamma * sum_squares(resid);
    Kernel grad_b = penalty_gradient(b, resid);
    for (double& g : grad_b.values()) g *= gamma;
    out.grad = adjoint_side ? std::move(grad_b) : transpose_kernel(grad_b);
    return out;
}

double isometry_residual(const Kernel& a) { return residual_on_selected_side(a, Support::Full); }

double isometry_residual_same(const Kernel& a) { return residual_on_selected_side(a, Support::Same); }

bool check_isometry_condition(const Kernel& a, double tol) {
    if (!(tol > 0.0)) throw std::invalid_argument("check_isometry_condition: tol must be > 0");
    return isometry_residual(a) <= tol;
}

SpectrumEstimate extreme_singular_values(const Kernel& a, const SpectrumOptions& options) {
    if (options.iterations < 1) throw std::invalid_argument("extreme_singular_values: iterations must be >= 1");
    // Gram operator on the smaller side: A*A on C channels or AA* on M channels.
    const bool gram_on_input = a.out_channels() >= a.in_channels();
    const int channels = gram_on_input ? a.in_channels() : a.out_channels();
    auto gram = [&](const Signal& v) {
        return gram_on_input ? apply_adjoint(a, apply_operator(a, v)) : apply_operator(a, apply_adjoint(a, v));
    };

    Rng rng(options.seed);
    auto random_start = [&] {
        Signal v(1, channels, options.height, options.width);
        for (double& x : v.values()) x = rng.normal();
        normalize(v);
        return v;
    };

    // Largest eigenvalue of the Gram operator.
    Signal v = random_start();
    double lambda_max = 0.0;
    for (int it = 0; it < options.iterations; ++it) {
        Signal gv = gram(v);
        lambda_max = inner_product(v, gv);
        v = std::move(gv);
        if (frobenius_norm(v) == 0.0) break;
        normalize(v);
    }

    // Largest eigenvalue of lambda_max * I - Gram gives lambda_max - lambda_min.
    Signal u = random_start();
    double shifted = 0.0;
    for (int it = 0; it < options.iterations; ++it) {
        Signal gu = gram(u);
        for (std::size_t i = 0; i < gu.size(); ++i) gu.values()[i] = lambda_max * u.values()[i] - gu.values()[i];
        shifted = inner_product(u, gu);
        u = std::move(gu);
        if (frobenius_norm(u) == 0.0) break;
        normalize(u);
    }

    SpectrumEstimate out;
    out.sigma_max = std::sqrt(std::max(lambda_max, 0.0));
    out.sigma_min_lower = std::sqrt(std::max(lambda_max - shifted, 0.0));
    return out;
}

}  // namespace isonet
