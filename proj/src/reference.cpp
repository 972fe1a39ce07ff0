#include "isonet/reference.hpp"

#include <stdexcept>

namespace isonet::reference {

Signal apply_operator(const Kernel& a, const Signal& x) {
    if (a.in_channels() != x.channels()) throw std::invalid_argument("reference::apply_operator: channel mismatch");
    const int r = a.radius();
    Signal out(x.batch(), a.out_channels(), x.height(), x.width());
    for (int n = 0; n < x.batch(); ++n)
        for (int m = 0; m < a.out_channels(); ++m)
            for (int i = 0; i < x.height(); ++i)
                for (int j = 0; j < x.width(); ++j) {
                    double acc = 0.0;
                    for (int c = 0; c < a.in_channels(); ++c)
                        for (int p = -r; p <= r; ++p)
                            for (int q = -r; q <= r; ++q) acc += x.sample_extended(n, c, i + p, j + q) * a.at(m, c, p, q);
                    out.at(n, m, i, j) = acc;
                }
    return out;
}

Signal apply_adjoint(const Kernel& a, const Signal& y) {
    if (a.out_channels() != y.channels()) throw std::invalid_argument("reference::apply_adjoint: channel mismatch");
    const int r = a.radius();
    Signal out(y.batch(), a.in_channels(), y.height(), y.width());
    for (int n = 0; n < y.batch(); ++n)
        for (int c = 0; c < a.in_channels(); ++c)
            for (int i = 0; i < y.height(); ++i)
                for (int j = 0; j < y.width(); ++j) {
                    double acc = 0.0;
                    for (int m = 0; m < a.out_channels(); ++m)
                        for (int p = -r; p <= r; ++p)
                            for (int q = -r; q <= r; ++q) acc += y.sample_extended(n, m, i - p, j - q) * a.at(m, c, p, q);
                    out.at(n, c, i, j) = acc;
                }
    return out;
}

Kernel conv_weight_gradient(const Signal& x, const Signal& upstream, int k) {
    if (x.batch() != upstream.batch() || x.height() != upstream.height() || x.width() != upstream.width()) {
        throw std::invalid_argument("reference::conv_weight_gradient: shape mismatch");
    }
    Kernel out(upstream.channels(), x.channels(), k);
    const int r = out.radius();
    for (int m = 0; m < upstream.channels(); ++m)
        for (int c = 0; c < x.channels(); ++c)
            for (int p = -r; p <= r; ++p)
                for (int q = -r; q <= r; ++q) {
                    double acc = 0.0;
                    for (int n = 0; n < x.batch(); ++n)
                        for (int i = 0; i < x.height(); ++i)
                            for (int j = 0; j < x.width(); ++j)
                                acc += x.sample_extended(n, c, i + p, j + q) * upstream.at(n, m, i, j);
                    out.at(m, c, p, q) = acc;
                }
    return out;
}

}  // namespace isonet::reference
