#pragma once

#include <vector>

#include "isonet/tensor.hpp"

namespace isonet {

/// Output support for correlating/convolving two zero-extended maps.
/// Same keeps the index range of the signal argument; Full keeps every offset
/// with nonzero overlap, so two k x k maps give a (2k-1) x (2k-1) result.
enum class Support { Same, Full };

// (alpha * xi)[i,j] = sum_{p,q} xi[i-p, j-q] alpha[p,q], alpha odd-sized and centred.
Map2D convolve2d(const Map2D& alpha, const Map2D& xi, Support support);
// (alpha ⋆ xi)[i,j] = sum_{p,q} xi[i+p, j+q] alpha[p,q]
Map2D correlate2d(const Map2D& alpha, const Map2D& xi, Support support);
Map2D flip(const Map2D& alpha);

/// Delta kernel: 1 at offset (0,0) on channel pairs (i,i), i < min(M,C).
Kernel delta_kernel(int out_channels, int in_channels, int k);
/// Swap the two channel axes (M x C -> C x M).
Kernel transpose_kernel(const Kernel& a);

/// Conv(A, A): entry (m', m) = sum_c alpha_{mc} ⋆ alpha_{m'c}. The result has
/// spatial size k for Support::Same and 2k-1 for Support::Full.
Kernel kernel_self_correlation(const Kernel& a, Support support);

/// Zero-padded, flattened copy of a batch for the direct convolution kernels.
/// Each (n, c) plane is stored as (H + 2r) x (W + 2r) with the signal in the
/// interior, so tap (p, q) of output (i, j) sits at a fixed flat offset from
/// i * row_stride + j. Planes of one image are contiguous; every image carries
/// enough trailing zeros for the kernels to read whole vector blocks.
class PaddedSignal {
public:
    PaddedSignal() = default;
    PaddedSignal(const Signal& x, int radius);

    int batch() const { return n_; }
    int channels() const { return c_; }
    int height() const { return h_; }
    int width() const { return w_; }
    int radius() const { return r_; }
    long row_stride() const { return w_ + 2L * r_; }
    long plane_stride() const { return row_stride() * (h_ + 2L * r_); }
    long image_stride() const { return image_stride_; }
    /// Flat output length per channel, rounded up to the kernel block size.
    long output_length() const { return out_len_; }
    bool empty() const { return data_.empty(); }
    const double* image(int n) const { return data_.data() + n * image_stride_; }

private:
    int n_ = 0, c_ = 0, h_ = 0, w_ = 0, r_ = 0;
    long out_len_ = 0;
    long image_stride_ = 0;
    std::vector<double> data_;
};

/// Multi-channel operator A: output channel m = sum_c alpha_{mc} ⋆ xi_c (Same support),
/// applied to every batch element.
Signal apply_operator(const Kernel& a, const Signal& x);
/// Same, on an input already padded with radius a.radius().
Signal apply_operator(const Kernel& a, const PaddedSignal& x);
/// Adjoint A*: output channel c = sum_m alpha_{mc} * eta_m (Same support).
Signal apply_adjoint(const Kernel& a, const Signal& y);
/// The kernel whose operator is the adjoint of A's: channels swapped, taps flipped.
Kernel adjoint_kernel(const Kernel& a);

/// d loss / d x for y = A x, given d loss / d y.
Signal conv_input_gradient(const Kernel& a, const Signal& upstream);
/// d loss / d A: entry (m,c,p,q) = sum_{n,i,j} x[n,c,i+p,j+q] * upstream[n,m,i,j].
Kernel conv_weight_gradient(const Signal& x, const Signal& upstream, int k);
/// Same, reusing the padded forward input; the kernel size is 2 * x.radius() + 1.
Kernel conv_weight_gradient(const PaddedSignal& x, const Signal& upstream);

}  // namespace isonet
