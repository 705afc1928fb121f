// Times the OpenMP kernels against the serial reference and checks that both
// produce bit-identical output. Run manually; not part of ctest.
#include <algorithm>
#include <chrono>
#include <cstdio>
#include <cstring>
#include <vector>

#include "cprl/kernels.hpp"
#include "cprl/rng.hpp"

using namespace cprl;

namespace {

template <typename F>
double time_best_of(int reps, F&& fn) {
    double best = 1e300;
    for (int r = 0; r < reps; ++r) {
        const auto t0 = std::chrono::steady_clock::now();
        fn();
        const auto t1 = std::chrono::steady_clock::now();
        best = std::min(best, std::chrono::duration<double>(t1 - t0).count());
    }
    return best;
}

bool same_bits(const std::vector<double>& a, const std::vector<double>& b) {
    return a.size() == b.size() &&
           std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0;
}

}  // namespace

int main() {
    Rng rng(42);

    {
        const std::size_t m = 256, k = 256, n = 256;
        std::vector<double> a(m * k), b(k * n), c1(m * n), c2(m * n);
        for (auto& v : a) v = rng.uniform(-1, 1);
        for (auto& v : b) v = rng.uniform(-1, 1);
        const double ts = time_best_of(3, [&] {
            kernels::serial::matmul(a.data(), b.data(), c1.data(), m, k, n, false, false, false);
        });
        const double tp = time_best_of(3, [&] {
            kernels::matmul(a.data(), b.data(), c2.data(), m, k, n, false, false, false);
        });
        std::printf("matmul %zux%zux%zu      serial %8.3f ms   omp %8.3f ms   speedup %5.2fx   %s\n",
                    m, k, n, ts * 1e3, tp * 1e3, ts / tp, same_bits(c1, c2) ? "bit-identical" : "MISMATCH");
        if (!same_bits(c1, c2)) return 1;
    }

    {
        const std::size_t batch = 16, ic = 16, oc = 32, hw = 32, kk = 3, pad = 1;
        std::vector<double> x(batch * ic * hw * hw), w(oc * ic * kk * kk);
        std::vector<double> o1(batch * oc * hw * hw), o2(o1.size());
        for (auto& v : x) v = rng.uniform(-1, 1);
        for (auto& v : w) v = rng.uniform(-1, 1);
        const double ts = time_best_of(3, [&] {
            kernels::serial::conv2d_forward(x.data(), w.data(), o1.data(), batch, ic, hw, hw, oc,
                                            kk, kk, pad);
        });
        const double tp = time_best_of(3, [&] {
            kernels::conv2d_forward(x.data(), w.data(), o2.data(), batch, ic, hw, hw, oc, kk, kk,
                                    pad);
        });
        std::printf("conv2d 16x16x32x32->32 serial %8.3f ms   omp %8.3f ms   speedup %5.2fx   %s\n",
                    ts * 1e3, tp * 1e3, ts / tp, same_bits(o1, o2) ? "bit-identical" : "MISMATCH");
        if (!same_bits(o1, o2)) return 1;

        std::vector<double> gx1(x.size(), 0.0), gx2(x.size(), 0.0);
        const double tsb = time_best_of(3, [&] {
            std::fill(gx1.begin(), gx1.end(), 0.0);
            kernels::serial::conv2d_backward_input(o1.data(), w.data(), gx1.data(), batch, ic, hw,
                                                   hw, oc, kk, kk, pad);
        });
        const double tpb = time_best_of(3, [&] {
            std::fill(gx2.begin(), gx2.end(), 0.0);
            kernels::conv2d_backward_input(o1.data(), w.data(), gx2.data(), batch, ic, hw, hw, oc,
                                           kk, kk, pad);
        });
        std::printf("conv2d backward input  serial %8.3f ms   omp %8.3f ms   speedup %5.2fx   %s\n",
                    tsb * 1e3, tpb * 1e3, tsb / tpb,
                    same_bits(gx1, gx2) ? "bit-identical" : "MISMATCH");
        if (!same_bits(gx1, gx2)) return 1;
    }

    return 0;
}
