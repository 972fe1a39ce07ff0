#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace isonet {

/// Batched multi-channel 2D feature map, laid out (n, c, i, j) row-major with j fastest.
/// Coordinates outside [0,H) x [0,W) read as zero through sample_extended().
class Signal {
public:
    Signal() = default;
    Signal(int n, int c, int h, int w);
    Signal(int n, int c, int h, int w, std::vector<double> data);

    int batch() const { return n_; }
    int channels() const { return c_; }
    int height() const { return h_; }
    int width() const { return w_; }
    std::size_t plane_size() const { return static_cast<std::size_t>(h_) * w_; }
    std::size_t size() const { return data_.size(); }
    bool same_shape(const Signal& o) const {
        return n_ == o.n_ && c_ == o.c_ && h_ == o.h_ && w_ == o.w_;
    }

    double& at(int n, int c, int i, int j) { return data_[index(n, c, i, j)]; }
    double at(int n, int c, int i, int j) const { return data_[index(n, c, i, j)]; }
    double sample_extended(int n, int c, int i, int j) const {
        if (i < 0 || i >= h_ || j < 0 || j >= w_) return 0.0;
        return data_[index(n, c, i, j)];
    }

    double* plane(int n, int c) { return data_.data() + index(n, c, 0, 0); }
    const double* plane(int n, int c) const { return data_.data() + index(n, c, 0, 0); }

    std::span<double> values() { return data_; }
    std::span<const double> values() const { return data_; }
    std::vector<double>& storage() { return data_; }
    const std::vector<double>& storage() const { return data_; }

private:
    std::size_t index(int n, int c, int i, int j) const {
        return ((static_cast<std::size_t>(n) * c_ + c) * h_ + i) * w_ + j;
    }

    int n_ = 0, c_ = 0, h_ = 0, w_ = 0;
    std::vector<double> data_;
};

/// Single 2D map (rows x cols). When used as a kernel the size must be odd and
/// offsets are centred, i.e. offset p maps to row p + rows/2.
class Map2D {
public:
    Map2D() = default;
    Map2D(int rows, int cols);
    Map2D(int rows, int cols, std::vector<double> data);

    int rows() const { return rows_; }
    int cols() const { return cols_; }
    int row_radius() const { return rows_ / 2; }
    int col_radius() const { return cols_ / 2; }

    double& at(int i, int j) { return data_[static_cast<std::size_t>(i) * cols_ + j]; }
    double at(int i, int j) const { return data_[static_cast<std::size_t>(i) * cols_ + j]; }
    double sample_extended(int i, int j) const {
        if (i < 0 || i >= rows_ || j < 0 || j >= cols_) return 0.0;
        return at(i, j);
    }
    // Centred-offset access for odd-sized maps used as kernels.
    double offset_extended(int p, int q) const {
        return sample_extended(p + row_radius(), q + col_radius());
    }

    std::span<double> values() { return data_; }
    std::span<const double> values() const { return data_; }

private:
    int rows_ = 0, cols_ = 0;
    std::vector<double> data_;
};

/// Convolution weight of shape M x C x k x k with odd k. Spatial entries are
/// addressed by offsets p, q in [-k0, k0]; anything outside the support is 0.
class Kernel {
public:
    Kernel() = default;
    Kernel(int out_channels, int in_channels, int k);
    Kernel(int out_channels, int in_channels, int k, std::vector<double> data);

    int out_channels() const { return m_; }
    int in_channels() const { return c_; }
    int size() const { return k_; }
    int radius() const { return k_ / 2; }
    std::size_t count() const { return data_.size(); }
    bool same_shape(const Kernel& o) const { return m_ == o.m_ && c_ == o.c_ && k_ == o.k_; }

    double& at(int m, int c, int p, int q) { return data_[index(m, c, p, q)]; }
    double at(int m, int c, int p, int q) const { return data_[index(m, c, p, q)]; }
    double sample_extended(int m, int c, int p, int q) const {
        const int r = radius();
        if (p < -r || p > r || q < -r || q > r) return 0.0;
        return data_[index(m, c, p, q)];
    }

    /// k x k slice alpha_{mc} as a centred map.
    Map2D slice(int m, int c) const;

    std::span<double> values() { return data_; }
    std::span<const double> values() const { return data_; }
    std::vector<double>& storage() { return data_; }
    const std::vector<double>& storage() const { return data_; }

private:
    std::size_t index(int m, int c, int p, int q) const {
        const int r = radius();
        return ((static_cast<std::size_t>(m) * c_ + c) * k_ + (p + r)) * k_ + (q + r);
    }

    int m_ = 0, c_ = 0, k_ = 0;
    std::vector<double> data_;
};

double inner_product(std::span<const double> a, std::span<const double> b);
double inner_product(const Signal& a, const Signal& b);
double inner_product(const Kernel& a, const Kernel& b);

double frobenius_norm(std::span<const double> t);
inline double frobenius_norm(const Signal& s) { return frobenius_norm(s.values()); }
inline double frobenius_norm(const Kernel& k) { return frobenius_norm(k.values()); }
inline double frobenius_norm(const Map2D& m) { return frobenius_norm(m.values()); }

}  // namespace isonet
