#include "isonet/convops.hpp"

#include <algorithm>
#include <cstring>
#include <stdexcept>
#include <string>

namespace isonet {

namespace {

void require_odd_map(const Map2D& alpha) {
    if (alpha.rows() % 2 == 0 || alpha.cols() % 2 == 0) {
        throw std::invalid_argument("kernel map must have odd dimensions");
    }
}

// Output geometry for a signal of extent n under a kernel of radius r:
// Same keeps [0, n), Full covers [-r, n-1+r].
struct Extent {
    int size;
    int origin;  // signal coordinate of output index 0
};

Extent output_extent(int n, int r, Support support) {
    if (support == Support::Same) return {n, 0};
    return {n + 2 * r, -r};
}

// ---------------------------------------------------------------------------
// direct kernels

// Portable SIMD vector of 8 doubles; the compiler lowers it to whatever the
// target provides.
typedef double v8 __attribute__((vector_size(64)));
typedef double v8u __attribute__((vector_size(64), aligned(8)));

inline v8 load(const double* p) { return *reinterpret_cast<const v8u*>(p); }
inline void store(double* p, v8 v) { *reinterpret_cast<v8u*>(p) = v; }
inline double hsum(v8 v) { return ((v[0] + v[1]) + (v[2] + v[3])) + ((v[4] + v[5]) + (v[6] + v[7])); }

// Forward block: 4 output channels x 48 flat outputs. The accumulators are
// named so they stay in registers.
constexpr int kOutBlock = 4;
constexpr long kFlatBlock = 48;

void forward_block(const double* x, const long* off, long taps, const double* w, long w_stride, double* out,
                   long out_stride) {
#define ISONET_ROW(a) v8 a##0 = {}, a##1 = {}, a##2 = {}, a##3 = {}, a##4 = {}, a##5 = {};
    ISONET_ROW(r0) ISONET_ROW(r1) ISONET_ROW(r2) ISONET_ROW(r3)
#undef ISONET_ROW
    for (long u = 0; u < taps; ++u) {
        const double* xb = x + off[u];
        const v8 x0 = load(xb), x1 = load(xb + 8), x2 = load(xb + 16), x3 = load(xb + 24), x4 = load(xb + 32),
                 x5 = load(xb + 40);
        const double* wt = w + u * w_stride;
#define ISONET_FMA(a, s) \
    { const double s_ = s; a##0 += x0 * s_; a##1 += x1 * s_; a##2 += x2 * s_; a##3 += x3 * s_; a##4 += x4 * s_; a##5 += x5 * s_; }
        ISONET_FMA(r0, wt[0]) ISONET_FMA(r1, wt[1]) ISONET_FMA(r2, wt[2]) ISONET_FMA(r3, wt[3])
#undef ISONET_FMA
    }
#define ISONET_STORE(a, row) \
    { double* d = out + row * out_stride; store(d, a##0); store(d + 8, a##1); store(d + 16, a##2); store(d + 24, a##3); store(d + 32, a##4); store(d + 40, a##5); }
    ISONET_STORE(r0, 0) ISONET_STORE(r1, 1) ISONET_STORE(r2, 2) ISONET_STORE(r3, 3)
#undef ISONET_STORE
}

// Weight-gradient block: 2 output channels x 9 taps of one input channel,
// reduced over `len` flat positions; partial sums are added to res[a * 9 + t].
constexpr int kGradRows = 2;
constexpr int kGradTaps = 9;

void weight_block(const double* g, long g_stride, const double* x, const long* off, long len, double* res) {
#define ISONET_ROW(a) v8 a##0 = {}, a##1 = {}, a##2 = {}, a##3 = {}, a##4 = {}, a##5 = {}, a##6 = {}, a##7 = {}, a##8 = {};
    ISONET_ROW(s0) ISONET_ROW(s1)
#undef ISONET_ROW
    const double* x0 = x + off[0]; const double* x1 = x + off[1]; const double* x2 = x + off[2];
    const double* x3 = x + off[3]; const double* x4 = x + off[4]; const double* x5 = x + off[5];
    const double* x6 = x + off[6]; const double* x7 = x + off[7]; const double* x8 = x + off[8];
    for (long o = 0; o < len; o += 8) {
        const v8 g0 = load(g + o), g1 = load(g + g_stride + o);
#define ISONET_TAP(t) { const v8 xv = load(x##t + o); s0##t += g0 * xv; s1##t += g1 * xv; }
        ISONET_TAP(0) ISONET_TAP(1) ISONET_TAP(2) ISONET_TAP(3) ISONET_TAP(4) ISONET_TAP(5) ISONET_TAP(6)
        ISONET_TAP(7) ISONET_TAP(8)
#undef ISONET_TAP
    }
#define ISONET_SUM(a, row) \
    res[row * 9 + 0] += hsum(a##0); res[row * 9 + 1] += hsum(a##1); res[row * 9 + 2] += hsum(a##2); \
    res[row * 9 + 3] += hsum(a##3); res[row * 9 + 4] += hsum(a##4); res[row * 9 + 5] += hsum(a##5); \
    res[row * 9 + 6] += hsum(a##6); res[row * 9 + 7] += hsum(a##7); res[row * 9 + 8] += hsum(a##8);
    ISONET_SUM(s0, 0) ISONET_SUM(s1, 1)
#undef ISONET_SUM
}

long round_up(long v, long m) { return (v + m - 1) / m * m; }

// Flat offset of tap (p, q), p, q in [-r, r], relative to output position 0.
long tap_offset(const PaddedSignal& x, int c, int p, int q) {
    const int r = x.radius();
    return c * x.plane_stride() + (p + r) * x.row_stride() + (q + r);
}

}  // namespace

Map2D flip(const Map2D& alpha) {
    Map2D out(alpha.rows(), alpha.cols());
    for (int i = 0; i < alpha.rows(); ++i)
        for (int j = 0; j < alpha.cols(); ++j) out.at(i, j) = alpha.at(alpha.rows() - 1 - i, alpha.cols() - 1 - j);
    return out;
}

Map2D correlate2d(const Map2D& alpha, const Map2D& xi, Support support) {
    require_odd_map(alpha);
    const int rp = alpha.row_radius(), rq = alpha.col_radius();
    const Extent ei = output_extent(xi.rows(), rp, support);
    const Extent ej = output_extent(xi.cols(), rq, support);
    Map2D out(ei.size, ej.size);
    for (int a = 0; a < ei.size; ++a) {
        const int i = a + ei.origin;
        for (int b = 0; b < ej.size; ++b) {
            const int j = b + ej.origin;
            double acc = 0.0;
            for (int p = -rp; p <= rp; ++p)
                for (int q = -rq; q <= rq; ++q) acc += xi.sample_extended(i + p, j + q) * alpha.offset_extended(p, q);
            out.at(a, b) = acc;
        }
    }
    return out;
}

Map2D convolve2d(const Map2D& alpha, const Map2D& xi, Support support) {
    require_odd_map(alpha);
    const int rp = alpha.row_radius(), rq = alpha.col_radius();
    const Extent ei = output_extent(xi.rows(), rp, support);
    const Extent ej = output_extent(xi.cols(), rq, support);
    Map2D out(ei.size, ej.size);
    for (int a = 0; a < ei.size; ++a) {
        const int i = a + ei.origin;
        for (int b = 0; b < ej.size; ++b) {
            const int j = b + ej.origin;
            double acc = 0.0;
            for (int p = -rp; p <= rp; ++p)
                for (int q = -rq; q <= rq; ++q) acc += xi.sample_extended(i - p, j - q) * alpha.offset_extended(p, q);
            out.at(a, b) = acc;
        }
    }
    return out;
}

Kernel delta_kernel(int out_channels, int in_channels, int k) {
    if (k < 1 || k % 2 == 0) throw std::invalid_argument("delta_kernel: kernel size must be odd, got " + std::to_string(k));
    Kernel out(out_channels, in_channels, k);
    for (int i = 0; i < std::min(out_channels, in_channels); ++i) out.at(i, i, 0, 0) = 1.0;
    return out;
}

Kernel transpose_kernel(const Kernel& a) {
    const int r = a.radius();
    Kernel out(a.in_channels(), a.out_channels(), a.size());
    for (int m = 0; m < a.out_channels(); ++m)
        for (int c = 0; c < a.in_channels(); ++c)
            for (int p = -r; p <= r; ++p)
                for (int q = -r; q <= r; ++q) out.at(c, m, p, q) = a.at(m, c, p, q);
    return out;
}

Kernel kernel_self_correlation(const Kernel& a, Support support) {
    const int mch = a.out_channels(), cch = a.in_channels(), r = a.radius();
    const int out_r = support == Support::Same ? r : 2 * r;
    Kernel out(mch, mch, 2 * out_r + 1);
    const int k = a.size();
    const long plane = static_cast<long>(k) * k;
    const double* av = a.values().data();
#pragma omp parallel for collapse(2) schedule(static)
    for (int m2 = 0; m2 < mch; ++m2) {
        for (int m = 0; m < mch; ++m) {
            for (int tp = -out_r; tp <= out_r; ++tp) {
                for (int tq = -out_r; tq <= out_r; ++tq) {
                    // sum_c sum_{p,q} alpha_{m'c}[t+p] alpha_{mc}[p]
                    double acc = 0.0;
                    const int p_lo = std::max(-r, -r - tp), p_hi = std::min(r, r - tp);
                    const int q_lo = std::max(-r, -r - tq), q_hi = std::min(r, r - tq);
                    for (int c = 0; c < cch; ++c) {
                        const double* s2 = av + (static_cast<long>(m2) * cch + c) * plane;
                        const double* s1 = av + (static_cast<long>(m) * cch + c) * plane;
                        for (int p = p_lo; p <= p_hi; ++p)
                            for (int q = q_lo; q <= q_hi; ++q)
                                acc += s2[(tp + p + r) * k + (tq + q + r)] * s1[(p + r) * k + (q + r)];
                    }
                    out.at(m2, m, tp, tq) = acc;
                }
            }
        }
    }
    return out;
}

PaddedSignal::PaddedSignal(const Signal& x, int radius)
    : n_(x.batch()), c_(x.channels()), h_(x.height()), w_(x.width()), r_(radius) {
    if (radius < 0) throw std::invalid_argument("PaddedSignal: radius must be >= 0");
    const long row = row_stride(), plane = plane_stride();
    out_len_ = round_up(static_cast<long>(h_) * row, kFlatBlock);
    // The last tap of the last output block reaches this far past the image start.
    const long reach = (c_ - 1) * plane + 2L * r_ * row + 2L * r_ + out_len_;
    image_stride_ = round_up(std::max(reach, c_ * plane), 8);
    data_.assign(static_cast<std::size_t>(n_) * image_stride_, 0.0);
#pragma omp parallel for collapse(2) schedule(static)
    for (int b = 0; b < n_; ++b) {
        for (int c = 0; c < c_; ++c) {
            const double* src = x.plane(b, c);
            double* dst = data_.data() + b * image_stride_ + c * plane + r_ * row + r_;
            for (int i = 0; i < h_; ++i) std::memcpy(dst + i * row, src + static_cast<long>(i) * w_, sizeof(double) * w_);
        }
    }
}

Signal apply_operator(const Kernel& a, const PaddedSignal& x) {
    if (a.in_channels() != x.channels()) {
        throw std::invalid_argument("apply_operator: kernel expects " + std::to_string(a.in_channels()) +
                                    " input channels, signal has " + std::to_string(x.channels()));
    }
    if (a.radius() != x.radius()) throw std::invalid_argument("apply_operator: padding does not match kernel size");
    const int mch = a.out_channels(), cch = a.in_channels(), k = a.size(), r = a.radius();
    const long taps = static_cast<long>(cch) * k * k;
    const int m_pad = static_cast<int>(round_up(mch, kOutBlock));

    // Weights as [c][p][q][m], zero rows beyond M.
    std::vector<double> wt(static_cast<std::size_t>(taps) * m_pad, 0.0);
    std::vector<long> off(static_cast<std::size_t>(taps));
    for (int c = 0; c < cch; ++c)
        for (int p = -r; p <= r; ++p)
            for (int q = -r; q <= r; ++q) {
                const long u = (static_cast<long>(c) * k + (p + r)) * k + (q + r);
                off[u] = tap_offset(x, c, p, q);
                for (int m = 0; m < mch; ++m) wt[u * m_pad + m] = a.at(m, c, p, q);
            }

    const int h = x.height(), w = x.width();
    const long row = x.row_stride(), len = x.output_length();
    Signal out(x.batch(), mch, h, w);
#pragma omp parallel
    {
        std::vector<double> tmp(static_cast<std::size_t>(m_pad) * len);
#pragma omp for schedule(static)
        for (int b = 0; b < x.batch(); ++b) {
            const double* img = x.image(b);
            for (int m0 = 0; m0 < m_pad; m0 += kOutBlock)
                for (long o0 = 0; o0 < len; o0 += kFlatBlock)
                    forward_block(img + o0, off.data(), taps, wt.data() + m0, m_pad, tmp.data() + m0 * len + o0, len);
            for (int m = 0; m < mch; ++m)
                for (int i = 0; i < h; ++i)
                    std::memcpy(out.plane(b, m) + static_cast<long>(i) * w, tmp.data() + m * len + i * row,
                                sizeof(double) * w);
        }
    }
    return out;
}

Signal apply_operator(const Kernel& a, const Signal& x) {
    if (a.in_channels() != x.channels()) {
        throw std::invalid_argument("apply_operator: kernel expects " + std::to_string(a.in_channels()) +
                                    " input channels, signal has " + std::to_string(x.channels()));
    }
    return apply_operator(a, PaddedSignal(x, a.radius()));
}

Kernel adjoint_kernel(const Kernel& a) {
    const int r = a.radius();
    Kernel out(a.in_channels(), a.out_channels(), a.size());
    for (int m = 0; m < a.out_channels(); ++m)
        for (int c = 0; c < a.in_channels(); ++c)
            for (int p = -r; p <= r; ++p)
                for (int q = -r; q <= r; ++q) out.at(c, m, -p, -q) = a.at(m, c, p, q);
    return out;
}

Signal apply_adjoint(const Kernel& a, const Signal& y) {
    if (a.out_channels() != y.channels()) {
        throw std::invalid_argument("apply_adjoint: kernel has " + std::to_string(a.out_channels()) +
                                    " output channels, signal has " + std::to_string(y.channels()));
    }
    // (alpha * eta)[i,j] = sum_{p,q} eta[i+p, j+q] alpha[-p,-q]: a correlation
    // with the flipped, channel-transposed kernel.
    return apply_operator(adjoint_kernel(a), y);
}

Signal conv_input_gradient(const Kernel& a, const Signal& upstream) { return apply_adjoint(a, upstream); }

Kernel conv_weight_gradient(const PaddedSignal& x, const Signal& upstream) {
    if (upstream.batch() != x.batch() || upstream.height() != x.height() || upstream.width() != x.width()) {
        throw std::invalid_argument("conv_weight_gradient: upstream shape does not match forward input");
    }
    const int mch = upstream.channels(), cch = x.channels(), r = x.radius(), k = 2 * r + 1;
    const int taps = k * k;
    const int n = x.batch(), h = x.height(), w = x.width();
    const long row = x.row_stride(), len = x.output_length();
    const int m_pad = static_cast<int>(round_up(mch, kGradRows));

    // Upstream on the flat output grid, zero at the padding columns.
    std::vector<double> g(static_cast<std::size_t>(n) * m_pad * len, 0.0);
#pragma omp parallel for collapse(2) schedule(static)
    for (int b = 0; b < n; ++b)
        for (int m = 0; m < mch; ++m) {
            double* dst = g.data() + (static_cast<long>(b) * m_pad + m) * len;
            for (int i = 0; i < h; ++i) std::memcpy(dst + i * row, upstream.plane(b, m) + static_cast<long>(i) * w, sizeof(double) * w);
        }

    // Taps in groups of nine; unused slots of the last group point at tap 0.
    const int groups = (taps + kGradTaps - 1) / kGradTaps;
    std::vector<long> off(static_cast<std::size_t>(groups) * kGradTaps, tap_offset(x, 0, -r, -r));
    for (int t = 0; t < taps; ++t) off[t] = tap_offset(x, 0, t / k - r, t % k - r);

    Kernel out(mch, cch, k);
    const int m_blocks = m_pad / kGradRows;
#pragma omp parallel for collapse(2) schedule(static)
    for (int mb = 0; mb < m_blocks; ++mb) {
        for (int c = 0; c < cch; ++c) {
            std::vector<double> res(static_cast<std::size_t>(groups) * kGradRows * kGradTaps, 0.0);
            for (int b = 0; b < n; ++b) {
                const double* gb = g.data() + (static_cast<long>(b) * m_pad + mb * kGradRows) * len;
                const double* xb = x.image(b) + c * x.plane_stride();
                for (int grp = 0; grp < groups; ++grp)
                    weight_block(gb, len, xb, off.data() + grp * kGradTaps, len,
                                 res.data() + grp * kGradRows * kGradTaps);
            }
            for (int a = 0; a < kGradRows; ++a) {
                const int m = mb * kGradRows + a;
                if (m >= mch) break;
                for (int t = 0; t < taps; ++t) {
                    const int grp = t / kGradTaps, slot = t % kGradTaps;
                    out.at(m, c, t / k - r, t % k - r) = res[(grp * kGradRows + a) * kGradTaps + slot];
                }
            }
        }
    }
    return out;
}

Kernel conv_weight_gradient(const Signal& x, const Signal& upstream, int k) {
    if (k < 1 || k % 2 == 0) throw std::invalid_argument("conv_weight_gradient: kernel size must be odd");
    if (x.batch() != upstream.batch() || x.height() != upstream.height() || x.width() != upstream.width()) {
        throw std::invalid_argument("conv_weight_gradient: upstream shape does not match forward input");
    }
    return conv_weight_gradient(PaddedSignal(x, k / 2), upstream);
}

}  // namespace isonet
