#include "cprl/kernels.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

// Parallelism is over output elements only; each element keeps the serial
// reduction order, so values match kernels::serial bit for bit at any
// thread count.
namespace cprl::kernels {

void matmul(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
            std::size_t n, bool trans_a, bool trans_b, bool accumulate) {
    const std::ptrdiff_t rows = static_cast<std::ptrdiff_t>(m);
#pragma omp parallel for schedule(static) if (m * n * k > 16384)
    for (std::ptrdiff_t i = 0; i < rows; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            double acc = 0.0;
            for (std::size_t p = 0; p < k; ++p) {
                double av = trans_a ? a[p * m + i] : a[i * k + p];
                double bv = trans_b ? b[j * k + p] : b[p * n + j];
                acc += av * bv;
            }
            if (accumulate)
                c[i * n + j] += acc;
            else
                c[i * n + j] = acc;
        }
    }
}

void conv2d_forward(const double* x, const double* w, double* out, std::size_t batch,
                    std::size_t in_c, std::size_t h, std::size_t wd, std::size_t out_c,
                    std::size_t kh, std::size_t kw, std::size_t pad) {
    const std::size_t oh = h + 2 * pad - kh + 1;
    const std::size_t ow = wd + 2 * pad - kw + 1;
    const std::ptrdiff_t planes = static_cast<std::ptrdiff_t>(batch * out_c);
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t plane = 0; plane < planes; ++plane) {
        const std::size_t b = static_cast<std::size_t>(plane) / out_c;
        const std::size_t oc = static_cast<std::size_t>(plane) % out_c;
        double* o = out + (b * out_c + oc) * oh * ow;
        for (std::size_t y = 0; y < oh; ++y) {
            for (std::size_t xo = 0; xo < ow; ++xo) {
                double acc = 0.0;
                for (std::size_t ic = 0; ic < in_c; ++ic) {
                    const double* xp = x + (b * in_c + ic) * h * wd;
                    const double* wp = w + ((oc * in_c + ic) * kh) * kw;
                    for (std::size_t ky = 0; ky < kh; ++ky) {
                        const std::ptrdiff_t iy =
                            static_cast<std::ptrdiff_t>(y + ky) - static_cast<std::ptrdiff_t>(pad);
                        if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) continue;
                        for (std::size_t kx = 0; kx < kw; ++kx) {
                            const std::ptrdiff_t ix =
                                static_cast<std::ptrdiff_t>(xo + kx) - static_cast<std::ptrdiff_t>(pad);
                            if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(wd)) continue;
                            acc += xp[iy * static_cast<std::ptrdiff_t>(wd) + ix] * wp[ky * kw + kx];
                        }
                    }
                }
                o[y * ow + xo] = acc;
            }
        }
    }
}

void conv2d_backward_input(const double* gout, const double* w, double* gx, std::size_t batch,
                           std::size_t in_c, std::size_t h, std::size_t wd, std::size_t out_c,
                           std::size_t kh, std::size_t kw, std::size_t pad) {
    const std::size_t oh = h + 2 * pad - kh + 1;
    const std::size_t ow = wd + 2 * pad - kw + 1;
    const std::ptrdiff_t planes = static_cast<std::ptrdiff_t>(batch * in_c);
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t plane = 0; plane < planes; ++plane) {
        const std::size_t b = static_cast<std::size_t>(plane) / in_c;
        const std::size_t ic = static_cast<std::size_t>(plane) % in_c;
        double* g = gx + (b * in_c + ic) * h * wd;
        for (std::size_t iy = 0; iy < h; ++iy) {
            for (std::size_t ix = 0; ix < wd; ++ix) {
                double acc = 0.0;
                for (std::size_t oc = 0; oc < out_c; ++oc) {
                    const double* gp = gout + (b * out_c + oc) * oh * ow;
                    const double* wp = w + ((oc * in_c + ic) * kh) * kw;
                    for (std::size_t ky = 0; ky < kh; ++ky) {
                        const std::ptrdiff_t y =
                            static_cast<std::ptrdiff_t>(iy + pad) - static_cast<std::ptrdiff_t>(ky);
                        if (y < 0 || y >= static_cast<std::ptrdiff_t>(oh)) continue;
                        for (std::size_t kx = 0; kx < kw; ++kx) {
                            const std::ptrdiff_t xo =
                                static_cast<std::ptrdiff_t>(ix + pad) - static_cast<std::ptrdiff_t>(kx);
                            if (xo < 0 || xo >= static_cast<std::ptrdiff_t>(ow)) continue;
                            acc += gp[y * static_cast<std::ptrdiff_t>(ow) + xo] * wp[ky * kw + kx];
                        }
                    }
                }
                g[iy * wd + ix] += acc;
            }
        }
    }
}

void conv2d_backward_weight(const double* gout, const double* x, double* gw, std::size_t batch,
                            std::size_t in_c, std::size_t h, std::size_t wd, std::size_t out_c,
                            std::size_t kh, std::size_t kw, std::size_t pad) {
    const std::size_t oh = h + 2 * pad - kh + 1;
    const std::size_t ow = wd + 2 * pad - kw + 1;
    const std::ptrdiff_t planes = static_cast<std::ptrdiff_t>(out_c * in_c);
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t plane = 0; plane < planes; ++plane) {
        const std::size_t oc = static_cast<std::size_t>(plane) / in_c;
        const std::size_t ic = static_cast<std::size_t>(plane) % in_c;
        double* g = gw + ((oc * in_c + ic) * kh) * kw;
        for (std::size_t ky = 0; ky < kh; ++ky) {
            for (std::size_t kx = 0; kx < kw; ++kx) {
                double acc = 0.0;
                for (std::size_t b = 0; b < batch; ++b) {
                    const double* gp = gout + (b * out_c + oc) * oh * ow;
                    const double* xp = x + (b * in_c + ic) * h * wd;
                    for (std::size_t y = 0; y < oh; ++y) {
                        const std::ptrdiff_t iy =
                            static_cast<std::ptrdiff_t>(y + ky) - static_cast<std::ptrdiff_t>(pad);
                        if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) continue;
                        for (std::size_t xo = 0; xo < ow; ++xo) {
                            const std::ptrdiff_t ix =
                                static_cast<std::ptrdiff_t>(xo + kx) - static_cast<std::ptrdiff_t>(pad);
                            if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(wd)) continue;
                            acc += gp[y * ow + xo] * xp[iy * static_cast<std::ptrdiff_t>(wd) + ix];
                        }
                    }
                }
                g[ky * kw + kx] += acc;
            }
        }
    }
}

}  // namespace cprl::kernels
