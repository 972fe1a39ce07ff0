#pragma once

#include "isonet/tensor.hpp"

// Serial quadruple-loop versions of the convolution kernels. They follow the
// defining sums literally and are kept as the oracle for the direct SIMD/OpenMP path
// and as the baseline in the benchmark.
namespace isonet::reference {

Signal apply_operator(const Kernel& a, const Signal& x);
Signal apply_adjoint(const Kernel& a, const Signal& y);
Kernel conv_weight_gradient(const Signal& x, const Signal& upstream, int k);

}  // namespace isonet::reference
