#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#ifdef _OPENMP
#include <omp.h>
#endif

#include <cstring>
#include <vector>

#include "cprl/kernels.hpp"
#include "cprl/rng.hpp"

using namespace cprl;

namespace {

std::vector<double> random_vec(std::size_t n, Rng& rng) {
    std::vector<double> v(n);
    for (auto& x : v) x = rng.uniform(-2.0, 2.0);
    return v;
}

bool same_bits(const std::vector<double>& a, const std::vector<double>& b) {
    return a.size() == b.size() &&
           std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0;
}

// plain triple loop, written independently of the library kernels
std::vector<double> matmul_naive(const std::vector<double>& a, const std::vector<double>& b,
                                 std::size_t m, std::size_t k, std::size_t n, bool ta, bool tb) {
    std::vector<double> c(m * n, 0.0);
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j)
            for (std::size_t p = 0; p < k; ++p) {
                const double av = ta ? a[p * m + i] : a[i * k + p];
                const double bv = tb ? b[j * k + p] : b[p * n + j];
                c[i * n + j] += av * bv;
            }
    return c;
}

}  // namespace

TEST_CASE("matmul matches a naive triple loop in every transpose mode") {
    Rng rng(7);
    for (const bool ta : {false, true})
        for (const bool tb : {false, true}) {
            const std::size_t m = 5, k = 7, n = 4;
            const auto a = random_vec(m * k, rng);
            const auto b = random_vec(k * n, rng);
            std::vector<double> c(m * n);
            kernels::matmul(a.data(), b.data(), c.data(), m, k, n, ta, tb, false);
            const auto ref = matmul_naive(a, b, m, k, n, ta, tb);
            for (std::size_t i = 0; i < c.size(); ++i)
                CHECK(c[i] == doctest::Approx(ref[i]).epsilon(1e-12));
        }
}

TEST_CASE("matmul accumulate adds on top of existing output") {
    Rng rng(8);
    const std::size_t m = 3, k = 4, n = 2;
    const auto a = random_vec(m * k, rng);
    const auto b = random_vec(k * n, rng);
    std::vector<double> base = random_vec(m * n, rng);
    std::vector<double> c = base;
    kernels::matmul(a.data(), b.data(), c.data(), m, k, n, false, false, true);
    const auto prod = matmul_naive(a, b, m, k, n, false, false);
    for (std::size_t i = 0; i < c.size(); ++i)
        CHECK(c[i] == doctest::Approx(base[i] + prod[i]).epsilon(1e-12));
}

TEST_CASE("conv2d forward hand cases") {
    // 1x1 kernel of value 2 doubles every element
    const std::size_t b = 1, c = 1, h = 3, w = 3;
    std::vector<double> x = {1, 2, 3, 4, 5, 6, 7, 8, 9};
    std::vector<double> k = {2.0};
    std::vector<double> out(9);
    kernels::conv2d_forward(x.data(), k.data(), out.data(), b, c, h, w, 1, 1, 1, 0);
    for (std::size_t i = 0; i < 9; ++i) CHECK(out[i] == 2.0 * x[i]);

    // 3x3 all-ones kernel with pad 1 at the center sums the whole patch
    std::vector<double> k9(9, 1.0), out9(9);
    kernels::conv2d_forward(x.data(), k9.data(), out9.data(), b, c, h, w, 1, 3, 3, 1);
    CHECK(out9[4] == 45.0);        // full 3x3 sum
    CHECK(out9[0] == 1 + 2 + 4 + 5);  // corner sees only the valid quadrant
}

TEST_CASE("omp kernels are bit-identical to the serial reference") {
    Rng rng(9);
    const std::size_t batch = 3, ic = 4, oc = 5, h = 9, w = 7, kh = 3, kw = 3;
    for (const std::size_t pad : {std::size_t{0}, std::size_t{1}, std::size_t{2}}) {
        const std::size_t oh = h + 2 * pad - kh + 1, ow = w + 2 * pad - kw + 1;
        const auto x = random_vec(batch * ic * h * w, rng);
        const auto wt = random_vec(oc * ic * kh * kw, rng);
        std::vector<double> o1(batch * oc * oh * ow), o2(o1.size());
        kernels::serial::conv2d_forward(x.data(), wt.data(), o1.data(), batch, ic, h, w, oc, kh,
                                        kw, pad);
        kernels::conv2d_forward(x.data(), wt.data(), o2.data(), batch, ic, h, w, oc, kh, kw, pad);
        CHECK(same_bits(o1, o2));

        const auto gout = random_vec(o1.size(), rng);
        std::vector<double> gx1(x.size(), 0.0), gx2(x.size(), 0.0);
        kernels::serial::conv2d_backward_input(gout.data(), wt.data(), gx1.data(), batch, ic, h,
                                               w, oc, kh, kw, pad);
        kernels::conv2d_backward_input(gout.data(), wt.data(), gx2.data(), batch, ic, h, w, oc,
                                       kh, kw, pad);
        CHECK(same_bits(gx1, gx2));

        std::vector<double> gw1(wt.size(), 0.0), gw2(wt.size(), 0.0);
        kernels::serial::conv2d_backward_weight(gout.data(), x.data(), gw1.data(), batch, ic, h,
                                                w, oc, kh, kw, pad);
        kernels::conv2d_backward_weight(gout.data(), x.data(), gw2.data(), batch, ic, h, w, oc,
                                        kh, kw, pad);
        CHECK(same_bits(gw1, gw2));
    }

    const std::size_t m = 33, k = 17, n = 29;
    const auto a = random_vec(m * k, rng);
    const auto b2 = random_vec(k * n, rng);
    std::vector<double> c1(m * n), c2(m * n);
    kernels::serial::matmul(a.data(), b2.data(), c1.data(), m, k, n, false, false, false);
    kernels::matmul(a.data(), b2.data(), c2.data(), m, k, n, false, false, false);
    CHECK(same_bits(c1, c2));
}

TEST_CASE("results do not depend on the omp thread count") {
#ifdef _OPENMP
    Rng rng(10);
    const std::size_t batch = 2, ic = 3, oc = 4, h = 8, w = 8, pad = 1;
    const auto x = random_vec(batch * ic * h * w, rng);
    const auto wt = random_vec(oc * ic * 9, rng);
    std::vector<double> o1(batch * oc * h * w), o2(o1.size());

    const int saved = omp_get_max_threads();
    omp_set_num_threads(1);
    kernels::conv2d_forward(x.data(), wt.data(), o1.data(), batch, ic, h, w, oc, 3, 3, pad);
    omp_set_num_threads(4);
    kernels::conv2d_forward(x.data(), wt.data(), o2.data(), batch, ic, h, w, oc, 3, 3, pad);
    omp_set_num_threads(saved);
    CHECK(same_bits(o1, o2));
#endif
}

TEST_CASE("conv2d backward input scatters through the kernel correctly") {
    std::vector<double> gout(9, 0.0);
    gout[4] = 1.0;  // center of a 3x3 output
    std::vector<double> wt = {1, 2, 3, 4, 5, 6, 7, 8, 9};
    std::vector<double> gx(9, 0.0);
    kernels::conv2d_backward_input(gout.data(), wt.data(), gx.data(), 1, 1, 3, 3, 1, 3, 3, 1);
    // with stride 1 pad 1, input pixel (y,x) receives w[ky,kx] where the
    // offsets line up; the center output touches every input once
    CHECK(gx[4] == 5.0);
    CHECK(gx[0] == 1.0);
    CHECK(gx[8] == 9.0);
}
