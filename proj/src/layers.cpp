#include "isonet/layers.hpp"

#include <stdexcept>
#include <string>

#include "isonet/rng.hpp"

namespace isonet {

namespace {

void require_per_channel(std::span<const double> v, int channels, const char* what) {
    if (static_cast<int>(v.size()) != channels) {
        throw std::invalid_argument(std::string(what) + ": expected " + std::to_string(channels) +
                                    " per-channel values, got " + std::to_string(v.size()));
    }
}

double scale_for(std::span<const double> scale, int c) { return scale.size() == 1 ? scale[0] : scale[c]; }

void require_scale(std::span<const double> scale, int channels) {
    if (scale.size() != 1 && static_cast<int>(scale.size()) != channels) {
        throw std::invalid_argument("residual scale must have 1 or " + std::to_string(channels) + " entries");
    }
}

}  // namespace

Signal srelu_forward(const Signal& y, std::span<const double> shift) {
    require_per_channel(shift, y.channels(), "srelu_forward");
    Signal out(y.batch(), y.channels(), y.height(), y.width());
    const long hw = static_cast<long>(y.plane_size());
#pragma omp parallel for collapse(2) schedule(static)
    for (int n = 0; n < y.batch(); ++n)
        for (int c = 0; c < y.channels(); ++c) {
            const double b = shift[c];
            const double* src = y.plane(n, c);
            double* dst = out.plane(n, c);
            for (long e = 0; e < hw; ++e) dst[e] = src[e] >= b ? src[e] : b;
        }
    return out;
}

SReLUGrad srelu_backward(const Signal& y, std::span<const double> shift, const Signal& upstream) {
    require_per_channel(shift, y.channels(), "srelu_backward");
    if (!y.same_shape(upstream)) throw std::invalid_argument("srelu_backward: upstream shape mismatch");
    SReLUGrad out{Signal(y.batch(), y.channels(), y.height(), y.width()),
                  std::vector<double>(static_cast<std::size_t>(y.channels()), 0.0)};
    const long hw = static_cast<long>(y.plane_size());
    // Channels are the outer loop so each grad_b entry is summed by one thread in batch order.
#pragma omp parallel for schedule(static)
    for (int c = 0; c < y.channels(); ++c) {
        const double b = shift[c];
        double acc = 0.0;
        for (int n = 0; n < y.batch(); ++n) {
            const double* yv = y.plane(n, c);
            const double* g = upstream.plane(n, c);
            double* gy = out.grad_y.plane(n, c);
            for (long e = 0; e < hw; ++e) {
                if (yv[e] >= b) {
                    gy[e] = g[e];
                } else {
                    gy[e] = 0.0;
                    acc += g[e];
                }
            }
        }
        out.grad_b[c] = acc;
    }
    return out;
}

Signal residual_combine_forward(const Signal& x, const Signal& r, std::span<const double> scale) {
    if (!x.same_shape(r)) throw std::invalid_argument("residual_combine_forward: shape mismatch");
    require_scale(scale, x.channels());
    Signal out(x.batch(), x.channels(), x.height(), x.width());
    const long hw = static_cast<long>(x.plane_size());
#pragma omp parallel for collapse(2) schedule(static)
    for (int n = 0; n < x.batch(); ++n)
        for (int c = 0; c < x.channels(); ++c) {
            const double s = scale_for(scale, c);
            const double* xv = x.plane(n, c);
            const double* rv = r.plane(n, c);
            double* dst = out.plane(n, c);
            for (long e = 0; e < hw; ++e) dst[e] = xv[e] + s * rv[e];
        }
    return out;
}

ResidualGrad residual_combine_backward(const Signal& r, std::span<const double> scale, const Signal& upstream) {
    if (!r.same_shape(upstream)) throw std::invalid_argument("residual_combine_backward: shape mismatch");
    require_scale(scale, r.channels());
    ResidualGrad out{upstream, Signal(r.batch(), r.channels(), r.height(), r.width()),
                     std::vector<double>(scale.size(), 0.0)};
    const long hw = static_cast<long>(r.plane_size());
    std::vector<double> per_channel(static_cast<std::size_t>(r.channels()), 0.0);
#pragma omp parallel for schedule(static)
    for (int c = 0; c < r.channels(); ++c) {
        const double s = scale_for(scale, c);
        double acc = 0.0;
        for (int n = 0; n < r.batch(); ++n) {
            const double* rv = r.plane(n, c);
            const double* g = upstream.plane(n, c);
            double* gr = out.grad_r.plane(n, c);
            for (long e = 0; e < hw; ++e) {
                gr[e] = s * g[e];
                acc += rv[e] * g[e];
            }
        }
        per_channel[c] = acc;
    }
    if (scale.size() == 1) {
        for (double v : per_channel) out.grad_s[0] += v;
    } else {
        out.grad_s = std::move(per_channel);
    }
    return out;
}

DropoutResult dropout_forward(const Signal& x, const DropoutConfig& cfg, bool training, std::uint64_t stream) {
    if (cfg.p < 0.0 || cfg.p >= 1.0) throw std::invalid_argument("dropout probability must be in [0, 1)");
    if (!training || cfg.p == 0.0) return {x, {}};
    DropoutResult out{Signal(x.batch(), x.channels(), x.height(), x.width()), std::vector<double>(x.size())};
    const double keep_scale = 1.0 / (1.0 - cfg.p);
    const std::uint64_t key = derive_seed(cfg.seed, stream);
    const auto src = x.values();
    auto dst = out.out.values();
    const long count = static_cast<long>(x.size());
#pragma omp parallel for schedule(static)
    for (long e = 0; e < count; ++e) {
        const double m = counter_uniform(key, static_cast<std::uint64_t>(e)) < cfg.p ? 0.0 : keep_scale;
        out.mask[e] = m;
        dst[e] = src[e] * m;
    }
    return out;
}

Signal dropout_backward(const Signal& upstream, const std::vector<double>& mask) {
    if (mask.empty()) return upstream;
    if (mask.size() != upstream.size()) throw std::invalid_argument("dropout_backward: mask size mismatch");
    Signal out = upstream;
    for (std::size_t e = 0; e < mask.size(); ++e) out.values()[e] *= mask[e];
    return out;
}

Signal avg_pool2(const Signal& x) {
    if (x.height() % 2 != 0 || x.width() % 2 != 0) {
        throw std::invalid_argument("avg_pool2: spatial dims must be even, got " + std::to_string(x.height()) + "x" +
                                    std::to_string(x.width()));
    }
    const int h = x.height() / 2, w = x.width() / 2;
    Signal out(x.batch(), x.channels(), h, w);
#pragma omp parallel for collapse(2) schedule(static)
    for (int n = 0; n < x.batch(); ++n)
        for (int c = 0; c < x.channels(); ++c)
            for (int i = 0; i < h; ++i)
                for (int j = 0; j < w; ++j) {
                    out.at(n, c, i, j) = 0.25 * (x.at(n, c, 2 * i, 2 * j) + x.at(n, c, 2 * i, 2 * j + 1) +
                                                 x.at(n, c, 2 * i + 1, 2 * j) + x.at(n, c, 2 * i + 1, 2 * j + 1));
                }
    return out;
}

Signal avg_pool2_backward(const Signal& upstream) {
    Signal out(upstream.batch(), upstream.channels(), 2 * upstream.height(), 2 * upstream.width());
#pragma omp parallel for collapse(2) schedule(static)
    for (int n = 0; n < upstream.batch(); ++n)
        for (int c = 0; c < upstream.channels(); ++c)
            for (int i = 0; i < out.height(); ++i)
                for (int j = 0; j < out.width(); ++j) out.at(n, c, i, j) = 0.25 * upstream.at(n, c, i / 2, j / 2);
    return out;
}

Signal global_avg_pool(const Signal& x) {
    Signal out(x.batch(), x.channels(), 1, 1);
    const long hw = static_cast<long>(x.plane_size());
    for (int n = 0; n < x.batch(); ++n)
        for (int c = 0; c < x.channels(); ++c) {
            const double* src = x.plane(n, c);
            double acc = 0.0;
            for (long e = 0; e < hw; ++e) acc += src[e];
            out.at(n, c, 0, 0) = acc / static_cast<double>(hw);
        }
    return out;
}

Signal global_avg_pool_backward(const Signal& upstream, int height, int width) {
    if (upstream.height() != 1 || upstream.width() != 1) {
        throw std::invalid_argument("global_avg_pool_backward: upstream must be N x C x 1 x 1");
    }
    Signal out(upstream.batch(), upstream.channels(), height, width);
    const long hw = static_cast<long>(height) * width;
    for (int n = 0; n < upstream.batch(); ++n)
        for (int c = 0; c < upstream.channels(); ++c) {
            const double g = upstream.at(n, c, 0, 0) / static_cast<double>(hw);
            double* dst = out.plane(n, c);
            for (long e = 0; e < hw; ++e) dst[e] = g;
        }
    return out;
}

namespace {

void check_linear(const Signal& features, const LinearView& layer) {
    if (features.height() != 1 || features.width() != 1 || features.channels() != layer.inputs) {
        throw std::invalid_argument("linear: expected N x " + std::to_string(layer.inputs) + " x 1 x 1 features");
    }
    if (layer.weight.size() != static_cast<std::size_t>(layer.outputs) * layer.inputs ||
        layer.bias.size() != static_cast<std::size_t>(layer.outputs)) {
        throw std::invalid_argument("linear: weight/bias sizes do not match " + std::to_string(layer.outputs) + "x" +
                                    std::to_string(layer.inputs));
    }
}

}  // namespace

Signal linear_forward(const Signal& features, const LinearView& layer) {
    check_linear(features, layer);
    Signal out(features.batch(), layer.outputs, 1, 1);
    for (int n = 0; n < features.batch(); ++n) {
        const double* f = features.plane(n, 0);
        for (int k = 0; k < layer.outputs; ++k) {
            double acc = layer.bias[k];
            const double* wrow = layer.weight.data() + static_cast<std::size_t>(k) * layer.inputs;
            for (int d = 0; d < layer.inputs; ++d) acc += wrow[d] * f[d];
            out.at(n, k, 0, 0) = acc;
        }
    }
    return out;
}

LinearGrad linear_backward(const Signal& features, const LinearView& layer, const Signal& upstream) {
    check_linear(features, layer);
    if (upstream.batch() != features.batch() || upstream.channels() != layer.outputs) {
        throw std::invalid_argument("linear_backward: upstream shape mismatch");
    }
    LinearGrad out{Signal(features.batch(), layer.inputs, 1, 1), std::vector<double>(layer.weight.size(), 0.0),
                   std::vector<double>(layer.bias.size(), 0.0)};
    for (int n = 0; n < features.batch(); ++n) {
        const double* f = features.plane(n, 0);
        double* gf = out.grad_features.plane(n, 0);
        for (int k = 0; k < layer.outputs; ++k) {
            const double g = upstream.at(n, k, 0, 0);
            out.grad_bias[k] += g;
            const double* wrow = layer.weight.data() + static_cast<std::size_t>(k) * layer.inputs;
            double* gw = out.grad_weight.data() + static_cast<std::size_t>(k) * layer.inputs;
            for (int d = 0; d < layer.inputs; ++d) {
                gw[d] += g * f[d];
                gf[d] += g * wrow[d];
            }
        }
    }
    return out;
}

}  // namespace isonet
