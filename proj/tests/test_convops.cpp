#include <doctest.h>

#include <cmath>

#include "isonet/convops.hpp"
#include "isonet/reference.hpp"
#include "support.hpp"

using namespace isonet;
using testing::random_kernel;
using testing::random_signal;
using testing::rel_diff;

namespace {

Map2D unit_at(int k, int p, int q) {
    Map2D m(k, k);
    m.at(p + k / 2, q + k / 2) = 1.0;
    return m;
}

Map2D random_map(Rng& rng, int rows, int cols) {
    Map2D m(rows, cols);
    for (double& v : m.values()) v = rng.normal();
    return m;
}

// Naive loop oracle for A x written from the operator definition, independent
// of both library paths.
Signal loop_operator(const Kernel& a, const Signal& x) {
    Signal out(x.batch(), a.out_channels(), x.height(), x.width());
    const int r = a.radius();
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

}  // namespace

TEST_CASE("correlate2d examples") {
    Rng rng(1);
    const Map2D xi = random_map(rng, 4, 5);
    const Map2D one(1, 1, {1.0});
    const Map2D same = correlate2d(one, xi, Support::Same);
    CHECK(rel_diff(same.values(), xi.values()) == 0.0);

    const Map2D x2(2, 2, {1, 2, 3, 4});
    const Map2D out = correlate2d(unit_at(3, 0, 1), x2, Support::Same);
    CHECK(out.rows() == 2);
    CHECK(out.at(0, 0) == 2.0);
    CHECK(out.at(0, 1) == 0.0);
    CHECK(out.at(1, 0) == 4.0);
    CHECK(out.at(1, 1) == 0.0);

    const Map2D delta = unit_at(3, 0, 0);
    const Map2D full = correlate2d(delta, delta, Support::Full);
    REQUIRE(full.rows() == 5);
    REQUIRE(full.cols() == 5);
    for (int i = 0; i < 5; ++i)
        for (int j = 0; j < 5; ++j) CHECK(full.at(i, j) == (i == 2 && j == 2 ? 1.0 : 0.0));
}

TEST_CASE("convolve2d examples") {
    Rng rng(2);
    const Map2D xi = random_map(rng, 5, 3);
    const Map2D id = convolve2d(unit_at(3, 0, 0), xi, Support::Same);
    CHECK(rel_diff(id.values(), xi.values()) == 0.0);

    const Map2D x2(2, 2, {1, 2, 3, 4});
    const Map2D out = convolve2d(unit_at(3, 0, 1), x2, Support::Same);
    CHECK(out.at(0, 0) == 0.0);
    CHECK(out.at(0, 1) == 1.0);
    CHECK(out.at(1, 0) == 0.0);
    CHECK(out.at(1, 1) == 3.0);
}

TEST_CASE("convolution is correlation with the flipped kernel") {
    Rng rng(3);
    for (int trial = 0; trial < 20; ++trial) {
        const int k = 1 + 2 * static_cast<int>(rng.below(3));
        const Map2D alpha = random_map(rng, k, k);
        const Map2D xi = random_map(rng, 1 + static_cast<int>(rng.below(8)), 1 + static_cast<int>(rng.below(8)));
        for (Support s : {Support::Same, Support::Full}) {
            const Map2D a = convolve2d(alpha, xi, s);
            const Map2D b = correlate2d(flip(alpha), xi, s);
            CHECK(rel_diff(a.values(), b.values()) < 1e-14);
        }
    }
}

TEST_CASE("Full-support convolution is commutative and associative with correlation") {
    Rng rng(4);
    for (int trial = 0; trial < 20; ++trial) {
        const int k1 = 1 + 2 * static_cast<int>(rng.below(3));
        const int k2 = 1 + 2 * static_cast<int>(rng.below(3));
        const Map2D alpha = random_map(rng, k1, k1);
        const Map2D alpha2 = random_map(rng, k2, k2);
        const Map2D xi = random_map(rng, 1 + 2 * static_cast<int>(rng.below(4)), 1 + 2 * static_cast<int>(rng.below(4)));

        const Map2D ax = convolve2d(alpha, xi, Support::Full);
        const Map2D xa = convolve2d(xi, alpha, Support::Full);
        REQUIRE(ax.rows() == xa.rows());
        REQUIRE(ax.cols() == xa.cols());
        CHECK(rel_diff(ax.values(), xa.values()) < 1e-12);

        // alpha ⋆ (alpha' * xi) = (alpha ⋆ alpha') * xi
        const Map2D lhs = correlate2d(alpha, convolve2d(alpha2, xi, Support::Full), Support::Full);
        const Map2D rhs = convolve2d(correlate2d(alpha, alpha2, Support::Full), xi, Support::Full);
        REQUIRE(lhs.rows() == rhs.rows());
        REQUIRE(lhs.cols() == rhs.cols());
        CHECK(rel_diff(lhs.values(), rhs.values()) < 1e-12);
    }
}

TEST_CASE("correlate2d and convolve2d reject even kernels") {
    const Map2D even(2, 2);
    const Map2D xi(3, 3);
    CHECK_THROWS_AS(correlate2d(even, xi, Support::Same), std::invalid_argument);
    CHECK_THROWS_AS(convolve2d(even, xi, Support::Full), std::invalid_argument);
}

TEST_CASE("apply_operator examples") {
    Rng rng(5);
    const Signal x = random_signal(rng, 2, 3, 5, 4);
    for (int k : {1, 3, 5}) {
        const Signal y = apply_operator(delta_kernel(3, 3, k), x);
        CHECK(rel_diff(y.values(), x.values()) == 0.0);
    }

    const Signal lifted = apply_operator(delta_kernel(5, 3, 3), x);
    REQUIRE(lifted.channels() == 5);
    for (int n = 0; n < 2; ++n)
        for (int c = 0; c < 5; ++c)
            for (int i = 0; i < 5; ++i)
                for (int j = 0; j < 4; ++j) CHECK(lifted.at(n, c, i, j) == (c < 3 ? x.at(n, c, i, j) : 0.0));

    const double a = 0.7, b = -1.3;
    const Kernel mix(1, 2, 1, {a, b});
    const Signal x2 = random_signal(rng, 1, 2, 3, 3);
    const Signal y2 = apply_operator(mix, x2);
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) CHECK(y2.at(0, 0, i, j) == doctest::Approx(a * x2.at(0, 0, i, j) + b * x2.at(0, 1, i, j)).epsilon(1e-15));

    CHECK_THROWS_AS(apply_operator(delta_kernel(2, 4, 3), x), std::invalid_argument);
}

TEST_CASE("apply_adjoint examples") {
    Rng rng(6);
    const Signal y = random_signal(rng, 2, 4, 3, 6);
    const Signal id = apply_adjoint(delta_kernel(4, 4, 3), y);
    CHECK(rel_diff(id.values(), y.values()) == 0.0);

    const double a = 0.7, b = -1.3;
    const Kernel mix(1, 2, 1, {a, b});
    const Signal eta = random_signal(rng, 1, 1, 3, 3);
    const Signal back = apply_adjoint(mix, eta);
    REQUIRE(back.channels() == 2);
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) {
            CHECK(back.at(0, 0, i, j) == doctest::Approx(a * eta.at(0, 0, i, j)).epsilon(1e-15));
            CHECK(back.at(0, 1, i, j) == doctest::Approx(b * eta.at(0, 0, i, j)).epsilon(1e-15));
        }

    CHECK_THROWS_AS(apply_adjoint(delta_kernel(3, 4, 3), y), std::invalid_argument);
}

TEST_CASE("adjoint identity on 100 random triples") {
    Rng rng(7);
    double worst = 0.0;
    for (int trial = 0; trial < 100; ++trial) {
        const int m = 1 + static_cast<int>(rng.below(8)), c = 1 + static_cast<int>(rng.below(8));
        const int k = 1 + 2 * static_cast<int>(rng.below(3));
        const int h = 1 + static_cast<int>(rng.below(12)), w = 1 + static_cast<int>(rng.below(12));
        const Kernel a = random_kernel(rng, m, c, k);
        const Signal x = random_signal(rng, 2, c, h, w);
        const Signal y = random_signal(rng, 2, m, h, w);
        const Signal ax = apply_operator(a, x);
        const Signal aty = apply_adjoint(a, y);
        const double lhs = testing::dot(ax.values(), y.values());
        const double rhs = testing::dot(x.values(), aty.values());
        const double scale = frobenius_norm(ax) * frobenius_norm(y) + frobenius_norm(x) * frobenius_norm(aty);
        worst = std::max(worst, std::abs(lhs - rhs) / scale);
    }
    CHECK(worst < 1e-10);
}

TEST_CASE("optimized path matches the naive oracle") {
    Rng rng(8);
    double worst_fwd = 0.0, worst_adj = 0.0, worst_wg = 0.0, worst_loop = 0.0;
    for (int trial = 0; trial < 50; ++trial) {
        const int m = 1 + static_cast<int>(rng.below(9)), c = 1 + static_cast<int>(rng.below(9));
        const int k = 1 + 2 * static_cast<int>(rng.below(3));
        const int n = 1 + static_cast<int>(rng.below(3));
        const int h = 1 + static_cast<int>(rng.below(14)), w = 1 + static_cast<int>(rng.below(14));
        const Kernel a = random_kernel(rng, m, c, k);
        const Signal x = random_signal(rng, n, c, h, w);
        const Signal y = random_signal(rng, n, m, h, w);
        worst_fwd = std::max(worst_fwd, rel_diff(apply_operator(a, x).values(), reference::apply_operator(a, x).values()));
        worst_adj = std::max(worst_adj, rel_diff(apply_adjoint(a, y).values(), reference::apply_adjoint(a, y).values()));
        worst_wg = std::max(worst_wg, rel_diff(conv_weight_gradient(x, y, k).values(),
                                               reference::conv_weight_gradient(x, y, k).values()));
        worst_loop = std::max(worst_loop, rel_diff(reference::apply_operator(a, x).values(), loop_operator(a, x).values()));
    }
    CHECK(worst_fwd < 1e-12);
    CHECK(worst_adj < 1e-12);
    CHECK(worst_wg < 1e-12);
    CHECK(worst_loop < 1e-12);
}

TEST_CASE("padded input can be reused across calls") {
    Rng rng(9);
    const Signal x = random_signal(rng, 3, 4, 7, 9);
    const Kernel a = random_kernel(rng, 5, 4, 3);
    const PaddedSignal padded(x, 1);
    CHECK(rel_diff(apply_operator(a, padded).values(), apply_operator(a, x).values()) == 0.0);
    const Signal g = random_signal(rng, 3, 5, 7, 9);
    CHECK(rel_diff(conv_weight_gradient(padded, g).values(), conv_weight_gradient(x, g, 3).values()) == 0.0);
    CHECK_THROWS_AS(apply_operator(random_kernel(rng, 5, 4, 5), padded), std::invalid_argument);
}

TEST_CASE("adjoint is the operator of the flipped transposed kernel") {
    Rng rng(10);
    const Kernel a = random_kernel(rng, 3, 2, 3);
    const Kernel b = adjoint_kernel(a);
    CHECK(b.out_channels() == 2);
    CHECK(b.in_channels() == 3);
    CHECK(b.at(1, 2, -1, 1) == a.at(2, 1, 1, -1));
    const Signal y = random_signal(rng, 1, 3, 5, 5);
    CHECK(rel_diff(apply_operator(b, y).values(), reference::apply_adjoint(a, y).values()) < 1e-13);
}

TEST_CASE("delta kernels act as identities when M = C") {
    Rng rng(11);
    for (int k : {1, 3, 5}) {
        const Signal x = random_signal(rng, 2, 4, 6, 5);
        const Kernel d = delta_kernel(4, 4, k);
        CHECK(rel_diff(apply_operator(d, x).values(), x.values()) == 0.0);
        CHECK(rel_diff(apply_adjoint(d, x).values(), x.values()) == 0.0);
    }
}

TEST_CASE("delta_kernel examples") {
    const Kernel d = delta_kernel(1, 1, 3);
    for (int p = -1; p <= 1; ++p)
        for (int q = -1; q <= 1; ++q) CHECK(d.at(0, 0, p, q) == (p == 0 && q == 0 ? 1.0 : 0.0));

    const Kernel d23 = delta_kernel(2, 3, 3);
    double total = 0.0;
    for (double v : d23.values()) total += v;
    CHECK(total == 2.0);
    CHECK(d23.at(0, 0, 0, 0) == 1.0);
    CHECK(d23.at(1, 1, 0, 0) == 1.0);
    CHECK(d23.at(1, 2, 0, 0) == 0.0);

    CHECK_THROWS_AS(delta_kernel(2, 2, 2), std::invalid_argument);
    CHECK_THROWS_AS(delta_kernel(2, 2, 4), std::invalid_argument);
}

TEST_CASE("transpose_kernel") {
    Rng rng(12);
    const Kernel a = random_kernel(rng, 3, 5, 3);
    const Kernel t = transpose_kernel(a);
    CHECK(t.out_channels() == 5);
    CHECK(t.in_channels() == 3);
    for (int m = 0; m < 3; ++m)
        for (int c = 0; c < 5; ++c)
            for (int p = -1; p <= 1; ++p)
                for (int q = -1; q <= 1; ++q) CHECK(t.at(c, m, p, q) == a.at(m, c, p, q));
    CHECK(rel_diff(transpose_kernel(t).values(), a.values()) == 0.0);
    CHECK(rel_diff(transpose_kernel(delta_kernel(2, 4, 3)).values(), delta_kernel(4, 2, 3).values()) == 0.0);
}

TEST_CASE("kernel_self_correlation examples") {
    for (int k : {1, 3, 5}) {
        const Kernel s = kernel_self_correlation(delta_kernel(3, 3, k), Support::Same);
        CHECK(rel_diff(s.values(), delta_kernel(3, 3, k).values()) == 0.0);
        const Kernel f = kernel_self_correlation(delta_kernel(3, 3, k), Support::Full);
        CHECK(f.size() == 2 * k - 1);
        CHECK(rel_diff(f.values(), delta_kernel(3, 3, 2 * k - 1).values()) == 0.0);
    }

    const Kernel scalar(1, 1, 1, {1.7});
    CHECK(kernel_self_correlation(scalar, Support::Same).at(0, 0, 0, 0) == doctest::Approx(1.7 * 1.7).epsilon(1e-15));

    for (double theta : {0.0, 0.3, 1.0, 2.5, -4.0}) {
        const double cs = std::cos(theta), sn = std::sin(theta);
        const Kernel rot(2, 2, 1, {cs, -sn, sn, cs});
        // Direct matrix-product oracle: R R^T = I.
        const Eigen::Matrix2d r{{cs, -sn}, {sn, cs}};
        const Eigen::Matrix2d rrt = r * r.transpose();
        const Kernel s = kernel_self_correlation(rot, Support::Same);
        for (int m2 = 0; m2 < 2; ++m2)
            for (int m = 0; m < 2; ++m) CHECK(s.at(m2, m, 0, 0) == doctest::Approx(rrt(m2, m)).epsilon(1e-15));
        CHECK(testing::rel_diff(s.values(), delta_kernel(2, 2, 1).values(), 1.0) < 1e-15);
    }
}

TEST_CASE("kernel_self_correlation matches a Map2D oracle") {
    Rng rng(13);
    for (int trial = 0; trial < 10; ++trial) {
        const int m = 1 + static_cast<int>(rng.below(4)), c = 1 + static_cast<int>(rng.below(4));
        const int k = 1 + 2 * static_cast<int>(rng.below(3));
        const Kernel a = random_kernel(rng, m, c, k);
        const Kernel full = kernel_self_correlation(a, Support::Full);
        const Kernel same = kernel_self_correlation(a, Support::Same);
        const int r = k / 2;
        for (int m2 = 0; m2 < m; ++m2)
            for (int m1 = 0; m1 < m; ++m1) {
                // entry (m', m) = sum_c alpha_{mc} ⋆ alpha_{m'c}: alpha_{mc} is the kernel, alpha_{m'c} the signal.
                Map2D acc(2 * k - 1, 2 * k - 1);
                for (int ch = 0; ch < c; ++ch) {
                    const Map2D part = correlate2d(a.slice(m1, ch), a.slice(m2, ch), Support::Full);
                    for (std::size_t i = 0; i < acc.values().size(); ++i) acc.values()[i] += part.values()[i];
                }
                for (int p = -2 * r; p <= 2 * r; ++p)
                    for (int q = -2 * r; q <= 2 * r; ++q) {
                        const double want = acc.offset_extended(p, q);
                        CHECK(full.at(m2, m1, p, q) == doctest::Approx(want).epsilon(1e-13).scale(1.0));
                        if (std::abs(p) <= r && std::abs(q) <= r)
                            CHECK(same.at(m2, m1, p, q) == doctest::Approx(want).epsilon(1e-13).scale(1.0));
                    }
            }
    }
}

TEST_CASE("Full-support orthogonality implies inner-product preservation") {
    Rng rng(14);
    // Two-channel Haar pair: sum_m alpha_m ⋆ alpha_m = delta over Full support.
    Kernel haar(2, 1, 3);
    haar.at(0, 0, 0, 0) = haar.at(0, 0, 0, 1) = 0.5;
    haar.at(1, 0, 0, 0) = 0.5;
    haar.at(1, 0, 0, 1) = -0.5;
    // Spatial shift: one tap off-centre.
    Kernel shift(2, 2, 3);
    shift.at(0, 1, 1, -1) = 1.0;
    shift.at(1, 0, -1, 0) = -1.0;

    for (const Kernel& a : {haar, shift, delta_kernel(4, 3, 5)}) {
        const Kernel cond = kernel_self_correlation(transpose_kernel(a), Support::Full);
        CHECK(testing::rel_diff(cond.values(), delta_kernel(a.in_channels(), a.in_channels(), cond.size()).values(), 1.0) < 1e-15);
        for (int trial = 0; trial < 5; ++trial) {
            const Signal x = testing::interior_signal(rng, 1, a.in_channels(), 9, 9, a.radius());
            const Signal x2 = testing::interior_signal(rng, 1, a.in_channels(), 9, 9, a.radius());
            const double lhs = inner_product(apply_operator(a, x), apply_operator(a, x2));
            const double rhs = inner_product(x, x2);
            CHECK(testing::rel_err(lhs, rhs, frobenius_norm(x) * frobenius_norm(x2)) < 1e-10);
        }
    }
}

TEST_CASE("conv gradients") {
    Rng rng(15);
    const Kernel a = random_kernel(rng, 3, 2, 3);
    const Signal x = random_signal(rng, 2, 2, 4, 4);
    const Signal zero(2, 3, 4, 4);
    CHECK(testing::max_abs(conv_input_gradient(a, zero).values()) == 0.0);
    CHECK(testing::max_abs(conv_weight_gradient(x, zero, 3).values()) == 0.0);

    // 1x1 kernel, single pixel: d(a x)·u / da = x u
    const Signal px(1, 1, 1, 1, {1.5});
    const Signal pu(1, 1, 1, 1, {-0.4});
    CHECK(conv_weight_gradient(px, pu, 1).at(0, 0, 0, 0) == doctest::Approx(1.5 * -0.4).epsilon(1e-15));

    // Finite differences on L = <A x, u> for a 2x3x4x4 input.
    const Signal xin = random_signal(rng, 2, 3, 4, 4);
    Kernel w = random_kernel(rng, 2, 3, 3);
    const Signal u = random_signal(rng, 2, 2, 4, 4);
    Signal xv = xin;
    auto loss = [&] { return testing::dot(reference::apply_operator(w, xv).values(), u.values()); };
    const Kernel gw = conv_weight_gradient(xin, u, 3);
    const auto nw = testing::numeric_gradient(w.values(), loss);
    CHECK(rel_diff(gw.values(), nw) < 1e-6);
    const Signal gx = conv_input_gradient(w, u);
    const auto nx = testing::numeric_gradient(xv.values(), loss);
    CHECK(rel_diff(gx.values(), nx) < 1e-6);

    CHECK_THROWS_AS(conv_weight_gradient(x, random_signal(rng, 2, 3, 4, 5), 3), std::invalid_argument);
    CHECK_THROWS_AS(conv_weight_gradient(x, random_signal(rng, 1, 3, 4, 4), 3), std::invalid_argument);
}

TEST_CASE("kernels parallelize without changing results") {
    // Results are a pure function of the inputs: two evaluations are bit-identical.
    Rng rng(16);
    const Kernel a = random_kernel(rng, 16, 16, 3);
    const Signal x = random_signal(rng, 8, 16, 16, 16);
    CHECK(rel_diff(apply_operator(a, x).values(), apply_operator(a, x).values()) == 0.0);
    CHECK(rel_diff(conv_weight_gradient(x, x, 3).values(), conv_weight_gradient(x, x, 3).values()) == 0.0);
}
