#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "isonet/tensor.hpp"

namespace isonet {

// ---------------------------------------------------------------------------
// SReLU: phi_b(y) = max(y, b), one b per channel.

Signal srelu_forward(const Signal& y, std::span<const double> shift);

struct SReLUGrad {
    Signal grad_y;               // upstream * 1[y >= b]
    std::vector<double> grad_b;  // per channel: sum of upstream where y < b
};
SReLUGrad srelu_backward(const Signal& y, std::span<const double> shift, const Signal& upstream);

// ---------------------------------------------------------------------------
// Residual combine: out = x + s_c * r. `scale` holds either one value shared by
// all channels or one value per channel.

Signal residual_combine_forward(const Signal& x, const Signal& r, std::span<const double> scale);

struct ResidualGrad {
    Signal grad_x;
    Signal grad_r;
    std::vector<double> grad_s;
};
ResidualGrad residual_combine_backward(const Signal& r, std::span<const double> scale, const Signal& upstream);

// ---------------------------------------------------------------------------
// Inverted dropout. The mask for entry e of call `stream` is a pure function
// of (seed, stream, e), so it does not depend on thread scheduling.

struct DropoutConfig {
    double p = 0.0;
    std::uint64_t seed = 0;
};

struct DropoutResult {
    Signal out;
    std::vector<double> mask;  // 0 or 1/(1-p) per entry; empty when identity
};

DropoutResult dropout_forward(const Signal& x, const DropoutConfig& cfg, bool training, std::uint64_t stream);
Signal dropout_backward(const Signal& upstream, const std::vector<double>& mask);

// ---------------------------------------------------------------------------
// Pooling.

Signal avg_pool2(const Signal& x);
Signal avg_pool2_backward(const Signal& upstream);
/// Spatial mean per (n, c), returned as an N x C x 1 x 1 signal.
Signal global_avg_pool(const Signal& x);
Signal global_avg_pool_backward(const Signal& upstream, int height, int width);

// ---------------------------------------------------------------------------
// Affine classifier head on N x D x 1 x 1 features; weight is K x D row-major.

struct LinearView {
    std::span<const double> weight;
    std::span<const double> bias;
    int outputs = 0;
    int inputs = 0;
};

Signal linear_forward(const Signal& features, const LinearView& layer);

struct LinearGrad {
    Signal grad_features;
    std::vector<double> grad_weight;
    std::vector<double> grad_bias;
};
LinearGrad linear_backward(const Signal& features, const LinearView& layer, const Signal& upstream);

}  // namespace isonet
