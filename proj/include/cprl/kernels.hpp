#pragma once

#include <cstddef>

// Dense compute kernels behind the autodiff ops. The default entry points
// are OpenMP-parallel over independent output elements, so results are
// bit-identical to the serial reference for any thread count; the
// kernels::serial versions are the reference used by tests and the
// benchmark.
namespace cprl::kernels {

// c[m,n] (+)= op(a)[m,k] * op(b)[k,n], where op transposes when flagged.
// a is stored m×k (or k×m when trans_a), b is k×n (or n×k when trans_b).
void matmul(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
            std::size_t n, bool trans_a, bool trans_b, bool accumulate);

// x: [batch, in_c, h, w], w: [out_c, in_c, kh, kw], stride 1, zero padding.
// out: [batch, out_c, h + 2*pad - kh + 1, w + 2*pad - kw + 1].
void conv2d_forward(const double* x, const double* w, double* out, std::size_t batch,
                    std::size_t in_c, std::size_t h, std::size_t wd, std::size_t out_c,
                    std::size_t kh, std::size_t kw, std::size_t pad);

// gx (+)= correlation of gout with w; accumulates into gx.
void conv2d_backward_input(const double* gout, const double* w, double* gx, std::size_t batch,
                           std::size_t in_c, std::size_t h, std::size_t wd, std::size_t out_c,
                           std::size_t kh, std::size_t kw, std::size_t pad);

// gw (+)= correlation of x with gout; accumulates into gw.
void conv2d_backward_weight(const double* gout, const double* x, double* gw, std::size_t batch,
                            std::size_t in_c, std::size_t h, std::size_t wd, std::size_t out_c,
                            std::size_t kh, std::size_t kw, std::size_t pad);

namespace serial {

void matmul(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
            std::size_t n, bool trans_a, bool trans_b, bool accumulate);

void conv2d_forward(const double* x, const double* w, double* out, std::size_t batch,
                    std::size_t in_c, std::size_t h, std::size_t wd, std::size_t out_c,
                    std::size_t kh, std::size_t kw, std::size_t pad);

void conv2d_backward_input(const double* gout, const double* w, double* gx, std::size_t batch,
                           std::size_t in_c, std::size_t h, std::size_t wd, std::size_t out_c,
                           std::size_t kh, std::size_t kw, std::size_t pad);

void conv2d_backward_weight(const double* gout, const double* x, double* gw, std::size_t batch,
                            std::size_t in_c, std::size_t h, std::size_t wd, std::size_t out_c,
                            std::size_t kh, std::size_t kw, std::size_t pad);

}  // namespace serial

}  // namespace cprl::kernels
