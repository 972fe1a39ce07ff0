#include "isonet/tensor.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace isonet {

namespace {

void require_positive(int v, const char* what) {
    if (v < 1) throw std::invalid_argument(std::string(what) + " must be >= 1");
}

void require_odd_kernel(int k) {
    if (k < 1 || k % 2 == 0) throw std::invalid_argument("kernel size must be odd, got " + std::to_string(k));
}

}  // namespace

Signal::Signal(int n, int c, int h, int w) : n_(n), c_(c), h_(h), w_(w) {
    require_positive(n, "batch");
    require_positive(c, "channels");
    require_positive(h, "height");
    require_positive(w, "width");
    data_.assign(static_cast<std::size_t>(n) * c * h * w, 0.0);
}

Signal::Signal(int n, int c, int h, int w, std::vector<double> data) : Signal(n, c, h, w) {
    if (data.size() != data_.size()) throw std::invalid_argument("signal data length does not match shape");
    data_ = std::move(data);
}

Map2D::Map2D(int rows, int cols) : rows_(rows), cols_(cols) {
    require_positive(rows, "rows");
    require_positive(cols, "cols");
    data_.assign(static_cast<std::size_t>(rows) * cols, 0.0);
}

Map2D::Map2D(int rows, int cols, std::vector<double> data) : Map2D(rows, cols) {
    if (data.size() != data_.size()) throw std::invalid_argument("map data length does not match shape");
    data_ = std::move(data);
}

Kernel::Kernel(int out_channels, int in_channels, int k) : m_(out_channels), c_(in_channels), k_(k) {
    require_positive(out_channels, "out_channels");
    require_positive(in_channels, "in_channels");
    require_odd_kernel(k);
    data_.assign(static_cast<std::size_t>(out_channels) * in_channels * k * k, 0.0);
}

Kernel::Kernel(int out_channels, int in_channels, int k, std::vector<double> data)
    : Kernel(out_channels, in_channels, k) {
    if (data.size() != data_.size()) throw std::invalid_argument("kernel data length does not match shape");
    data_ = std::move(data);
}

Map2D Kernel::slice(int m, int c) const {
    Map2D out(k_, k_);
    const auto base = index(m, c, -radius(), -radius());
    for (int i = 0; i < k_ * k_; ++i) out.values()[i] = data_[base + i];
    return out;
}

double inner_product(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) {
        throw std::invalid_argument("inner_product: length mismatch (" + std::to_string(a.size()) + " vs " +
                                    std::to_string(b.size()) + ")");
    }
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
    return acc;
}

double inner_product(const Signal& a, const Signal& b) {
    if (!a.same_shape(b)) throw std::invalid_argument("inner_product: signal shape mismatch");
    return inner_product(a.values(), b.values());
}

double inner_product(const Kernel& a, const Kernel& b) {
    if (!a.same_shape(b)) throw std::invalid_argument("inner_product: kernel shape mismatch");
    return inner_product(a.values(), b.values());
}

double frobenius_norm(std::span<const double> t) {
    double acc = 0.0;
    for (double v : t) acc += v * v;
    return std::sqrt(acc);
}

}  // namespace isonet
