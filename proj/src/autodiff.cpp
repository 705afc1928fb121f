#include "cprl/autodiff.hpp"

#include <cmath>
#include <stdexcept>
#include <utility>

#include "cprl/kernels.hpp"

namespace cprl::ops {

namespace {

using detail::Node;

std::shared_ptr<Node> make_node(Shape shape, std::vector<std::shared_ptr<Node>> parents) {
    auto n = std::make_shared<Node>();
    n->value.resize(shape_numel(shape));
    n->shape = std::move(shape);
    n->parents = std::move(parents);
    for (const auto& p : n->parents)
        if (p->requires_grad) n->requires_grad = true;
    return n;
}

void check_same_shape(const char* op, const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape())
        throw std::invalid_argument(std::string(op) + ": shape mismatch " + shape_str(a.shape()) +
                                    " vs " + shape_str(b.shape()));
}

void check_rank(const char* op, const Tensor& t, std::size_t rank) {
    if (t.ndim() != rank)
        throw std::invalid_argument(std::string(op) + ": expected rank " + std::to_string(rank) +
                                    " tensor, got " + shape_str(t.shape()));
}

}  // namespace

double sigmoid_value(double z) {
    if (z >= 0.0) {
        const double e = std::exp(-z);
        return 1.0 / (1.0 + e);
    }
    const double e = std::exp(z);
    return e / (1.0 + e);
}

Tensor add(const Tensor& a, const Tensor& b) {
    check_same_shape("add", a, b);
    auto n = make_node(a.shape(), {a.node(), b.node()});
    const auto& av = a.node()->value;
    const auto& bv = b.node()->value;
    for (std::size_t i = 0; i < n->value.size(); ++i) n->value[i] = av[i] + bv[i];
    n->backprop = [](Node& self) {
        for (const auto& p : self.parents) {
            if (!p->requires_grad) continue;
            detail::ensure_grad(*p);
            for (std::size_t i = 0; i < self.grad.size(); ++i) p->grad[i] += self.grad[i];
        }
    };
    return Tensor(std::move(n));
}

Tensor sub(const Tensor& a, const Tensor& b) {
    check_same_shape("sub", a, b);
    auto n = make_node(a.shape(), {a.node(), b.node()});
    const auto& av = a.node()->value;
    const auto& bv = b.node()->value;
    for (std::size_t i = 0; i < n->value.size(); ++i) n->value[i] = av[i] - bv[i];
    n->backprop = [](Node& self) {
        auto& pa = *self.parents[0];
        auto& pb = *self.parents[1];
        if (pa.requires_grad) {
            detail::ensure_grad(pa);
            for (std::size_t i = 0; i < self.grad.size(); ++i) pa.grad[i] += self.grad[i];
        }
        if (pb.requires_grad) {
            detail::ensure_grad(pb);
            for (std::size_t i = 0; i < self.grad.size(); ++i) pb.grad[i] -= self.grad[i];
        }
    };
    return Tensor(std::move(n));
}

Tensor mul(const Tensor& a, const Tensor& b) {
    check_same_shape("mul", a, b);
    auto n = make_node(a.shape(), {a.node(), b.node()});
    const auto& av = a.node()->value;
    const auto& bv = b.node()->value;
    for (std::size_t i = 0; i < n->value.size(); ++i) n->value[i] = av[i] * bv[i];
    n->backprop = [](Node& self) {
        auto& pa = *self.parents[0];
        auto& pb = *self.parents[1];
        if (pa.requires_grad) {
            detail::ensure_grad(pa);
            for (std::size_t i = 0; i < self.grad.size(); ++i)
                pa.grad[i] += self.grad[i] * pb.value[i];
        }
        if (pb.requires_grad) {
            detail::ensure_grad(pb);
            for (std::size_t i = 0; i < self.grad.size(); ++i)
                pb.grad[i] += self.grad[i] * pa.value[i];
        }
    };
    return Tensor(std::move(n));
}

Tensor neg(const Tensor& a) { return mul_scalar(a, -1.0); }

Tensor add_scalar(const Tensor& a, double s) {
    auto n = make_node(a.shape(), {a.node()});
    const auto& av = a.node()->value;
    for (std::size_t i = 0; i < n->value.size(); ++i) n->value[i] = av[i] + s;
    n->backprop = [](Node& self) {
        auto& p = *self.parents[0];
        if (!p.requires_grad) return;
        detail::ensure_grad(p);
        for (std::size_t i = 0; i < self.grad.size(); ++i) p.grad[i] += self.grad[i];
    };
    return Tensor(std::move(n));
}

Tensor mul_scalar(const Tensor& a, double s) {
    auto n = make_node(a.shape(), {a.node()});
    const auto& av = a.node()->value;
    for (std::size_t i = 0; i < n->value.size(); ++i) n->value[i] = av[i] * s;
    n->backprop = [s](Node& self) {
        auto& p = *self.parents[0];
        if (!p.requires_grad) return;
        detail::ensure_grad(p);
        for (std::size_t i = 0; i < self.grad.size(); ++i) p.grad[i] += self.grad[i] * s;
    };
    return Tensor(std::move(n));
}

Tensor relu(const Tensor& a) {
    auto n = make_node(a.shape(), {a.node()});
    const auto& av = a.node()->value;
    for (std::size_t i = 0; i < n->value.size(); ++i) n->value[i] = av[i] > 0.0 ? av[i] : 0.0;
    n->backprop = [](Node& self) {
        auto& p = *self.parents[0];
        if (!p.requires_grad) return;
        detail::ensure_grad(p);
        for (std::size_t i = 0; i < self.grad.size(); ++i)
            if (p.value[i] > 0.0) p.grad[i] += self.grad[i];
    };
    return Tensor(std::move(n));
}

Tensor sigmoid(const Tensor& a) {
    auto n = make_node(a.shape(), {a.node()});
    const auto& av = a.node()->value;
    for (std::size_t i = 0; i < n->value.size(); ++i) n->value[i] = sigmoid_value(av[i]);
    n->backprop = [](Node& self) {
        auto& p = *self.parents[0];
        if (!p.requires_grad) return;
        detail::ensure_grad(p);
        for (std::size_t i = 0; i < self.grad.size(); ++i) {
            const double y = self.value[i];
            p.grad[i] += self.grad[i] * y * (1.0 - y);
        }
    };
    return Tensor(std::move(n));
}

Tensor sum(const Tensor& a) {
    auto n = make_node(Shape{1}, {a.node()});
    double acc = 0.0;
    for (double v : a.node()->value) acc += v;
    n->value[0] = acc;
    n->backprop = [](Node& self) {
        auto& p = *self.parents[0];
        if (!p.requires_grad) return;
        detail::ensure_grad(p);
        const double g = self.grad[0];
        for (std::size_t i = 0; i < p.grad.size(); ++i) p.grad[i] += g;
    };
    return Tensor(std::move(n));
}

Tensor mean(const Tensor& a) {
    if (a.size() == 0) throw std::invalid_argument("mean: empty tensor");
    return mul_scalar(sum(a), 1.0 / static_cast<double>(a.size()));
}

Tensor squared_error(const Tensor& a, const Tensor& b) {
    check_same_shape("squared_error", a, b);
    auto n = make_node(Shape{1}, {a.node(), b.node()});
    const auto& av = a.node()->value;
    const auto& bv = b.node()->value;
    double acc = 0.0;
    for (std::size_t i = 0; i < av.size(); ++i) {
        const double d = av[i] - bv[i];
        acc += d * d;
    }
    n->value[0] = acc;
    n->backprop = [](Node& self) {
        auto& pa = *self.parents[0];
        auto& pb = *self.parents[1];
        const double g = self.grad[0];
        if (pa.requires_grad) {
            detail::ensure_grad(pa);
            for (std::size_t i = 0; i < pa.value.size(); ++i)
                pa.grad[i] += g * 2.0 * (pa.value[i] - pb.value[i]);
        }
        if (pb.requires_grad) {
            detail::ensure_grad(pb);
            for (std::size_t i = 0; i < pb.value.size(); ++i)
                pb.grad[i] -= g * 2.0 * (pa.value[i] - pb.value[i]);
        }
    };
    return Tensor(std::move(n));
}

Tensor matmul(const Tensor& a, const Tensor& b) {
    check_rank("matmul", a, 2);
    check_rank("matmul", b, 2);
    if (a.shape()[1] != b.shape()[0])
        throw std::invalid_argument("matmul: inner dims disagree, " + shape_str(a.shape()) +
                                    " vs " + shape_str(b.shape()));
    const std::size_t m = a.shape()[0], k = a.shape()[1], nn = b.shape()[1];
    auto n = make_node(Shape{m, nn}, {a.node(), b.node()});
    kernels::matmul(a.data().data(), b.data().data(), n->value.data(), m, k, nn, false, false,
                    false);
    n->backprop = [m, k, nn](Node& self) {
        auto& pa = *self.parents[0];
        auto& pb = *self.parents[1];
        if (pa.requires_grad) {
            detail::ensure_grad(pa);
            // gA += gC * B^T
            kernels::matmul(self.grad.data(), pb.value.data(), pa.grad.data(), m, nn, k, false,
                            true, true);
        }
        if (pb.requires_grad) {
            detail::ensure_grad(pb);
            // gB += A^T * gC
            kernels::matmul(pa.value.data(), self.grad.data(), pb.grad.data(), k, m, nn, true,
                            false, true);
        }
    };
    return Tensor(std::move(n));
}

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) {
    check_rank("linear", x, 2);
    check_rank("linear", w, 2);
    check_rank("linear", b, 1);
    if (x.shape()[1] != w.shape()[1] || w.shape()[0] != b.shape()[0])
        throw std::invalid_argument("linear: shapes disagree, x " + shape_str(x.shape()) + ", w " +
                                    shape_str(w.shape()) + ", b " + shape_str(b.shape()));
    const std::size_t n_rows = x.shape()[0], k_in = x.shape()[1], k_out = w.shape()[0];
    auto n = make_node(Shape{n_rows, k_out}, {x.node(), w.node(), b.node()});
    // out = x * w^T + b
    kernels::matmul(x.data().data(), w.data().data(), n->value.data(), n_rows, k_in, k_out, false,
                    true, false);
    for (std::size_t r = 0; r < n_rows; ++r)
        for (std::size_t c = 0; c < k_out; ++c) n->value[r * k_out + c] += b.at(c);
    n->backprop = [n_rows, k_in, k_out](Node& self) {
        auto& px = *self.parents[0];
        auto& pw = *self.parents[1];
        auto& pb = *self.parents[2];
        if (px.requires_grad) {
            detail::ensure_grad(px);
            // gx += g * w
            kernels::matmul(self.grad.data(), pw.value.data(), px.grad.data(), n_rows, k_out, k_in,
                            false, false, true);
        }
        if (pw.requires_grad) {
            detail::ensure_grad(pw);
            // gw += g^T * x
            kernels::matmul(self.grad.data(), px.value.data(), pw.grad.data(), k_out, n_rows, k_in,
                            true, false, true);
        }
        if (pb.requires_grad) {
            detail::ensure_grad(pb);
            for (std::size_t r = 0; r < n_rows; ++r)
                for (std::size_t c = 0; c < k_out; ++c) pb.grad[c] += self.grad[r * k_out + c];
        }
    };
    return Tensor(std::move(n));
}

Tensor conv2d(const Tensor& x, const Tensor& w, std::size_t pad) {
    check_rank("conv2d", x, 4);
    check_rank("conv2d", w, 4);
    if (x.shape()[1] != w.shape()[1])
        throw std::invalid_argument("conv2d: channel mismatch, x " + shape_str(x.shape()) +
                                    " vs w " + shape_str(w.shape()));
    const std::size_t batch = x.shape()[0], in_c = x.shape()[1], h = x.shape()[2],
                      wd = x.shape()[3];
    const std::size_t out_c = w.shape()[0], kh = w.shape()[2], kw = w.shape()[3];
    if (h + 2 * pad < kh || wd + 2 * pad < kw)
        throw std::invalid_argument("conv2d: kernel " + shape_str(w.shape()) +
                                    " larger than padded input " + shape_str(x.shape()));
    const std::size_t oh = h + 2 * pad - kh + 1, ow = wd + 2 * pad - kw + 1;
    auto n = make_node(Shape{batch, out_c, oh, ow}, {x.node(), w.node()});
    kernels::conv2d_forward(x.data().data(), w.data().data(), n->value.data(), batch, in_c, h, wd,
                            out_c, kh, kw, pad);
    n->backprop = [batch, in_c, h, wd, out_c, kh, kw, pad](Node& self) {
        auto& px = *self.parents[0];
        auto& pw = *self.parents[1];
        if (px.requires_grad) {
            detail::ensure_grad(px);
            kernels::conv2d_backward_input(self.grad.data(), pw.value.data(), px.grad.data(),
                                           batch, in_c, h, wd, out_c, kh, kw, pad);
        }
        if (pw.requires_grad) {
            detail::ensure_grad(pw);
            kernels::conv2d_backward_weight(self.grad.data(), px.value.data(), pw.grad.data(),
                                            batch, in_c, h, wd, out_c, kh, kw, pad);
        }
    };
    return Tensor(std::move(n));
}

Tensor add_channel_bias(const Tensor& x, const Tensor& bias) {
    check_rank("add_channel_bias", x, 4);
    check_rank("add_channel_bias", bias, 1);
    if (x.shape()[1] != bias.shape()[0])
        throw std::invalid_argument("add_channel_bias: x " + shape_str(x.shape()) + " vs bias " +
                                    shape_str(bias.shape()));
    const std::size_t batch = x.shape()[0], c = x.shape()[1], plane = x.shape()[2] * x.shape()[3];
    auto n = make_node(x.shape(), {x.node(), bias.node()});
    const auto& xv = x.node()->value;
    for (std::size_t b = 0; b < batch; ++b)
        for (std::size_t ch = 0; ch < c; ++ch) {
            const double bv = bias.at(ch);
            const std::size_t base = (b * c + ch) * plane;
            for (std::size_t i = 0; i < plane; ++i) n->value[base + i] = xv[base + i] + bv;
        }
    n->backprop = [batch, c, plane](Node& self) {
        auto& px = *self.parents[0];
        auto& pb = *self.parents[1];
        if (px.requires_grad) {
            detail::ensure_grad(px);
            for (std::size_t i = 0; i < self.grad.size(); ++i) px.grad[i] += self.grad[i];
        }
        if (pb.requires_grad) {
            detail::ensure_grad(pb);
            for (std::size_t b = 0; b < batch; ++b)
                for (std::size_t ch = 0; ch < c; ++ch) {
                    const std::size_t base = (b * c + ch) * plane;
                    double acc = 0.0;
                    for (std::size_t i = 0; i < plane; ++i) acc += self.grad[base + i];
                    pb.grad[ch] += acc;
                }
        }
    };
    return Tensor(std::move(n));
}

Tensor avg_pool2(const Tensor& x) {
    check_rank("avg_pool2", x, 4);
    const std::size_t batch = x.shape()[0], c = x.shape()[1], h = x.shape()[2], wd = x.shape()[3];
    if (h % 2 != 0 || wd % 2 != 0)
        throw std::invalid_argument("avg_pool2: spatial dims must be even, got " +
                                    shape_str(x.shape()));
    const std::size_t oh = h / 2, ow = wd / 2;
    auto n = make_node(Shape{batch, c, oh, ow}, {x.node()});
    const auto& xv = x.node()->value;
    for (std::size_t p = 0; p < batch * c; ++p) {
        const double* in = xv.data() + p * h * wd;
        double* out = n->value.data() + p * oh * ow;
        for (std::size_t y = 0; y < oh; ++y)
            for (std::size_t xo = 0; xo < ow; ++xo)
                out[y * ow + xo] = 0.25 * (in[(2 * y) * wd + 2 * xo] + in[(2 * y) * wd + 2 * xo + 1] +
                                           in[(2 * y + 1) * wd + 2 * xo] +
                                           in[(2 * y + 1) * wd + 2 * xo + 1]);
    }
    n->backprop = [batch, c, h, wd, oh, ow](Node& self) {
        auto& px = *self.parents[0];
        if (!px.requires_grad) return;
        detail::ensure_grad(px);
        for (std::size_t p = 0; p < batch * c; ++p) {
            double* gin = px.grad.data() + p * h * wd;
            const double* g = self.grad.data() + p * oh * ow;
            for (std::size_t y = 0; y < oh; ++y)
                for (std::size_t xo = 0; xo < ow; ++xo) {
                    const double gv = 0.25 * g[y * ow + xo];
                    gin[(2 * y) * wd + 2 * xo] += gv;
                    gin[(2 * y) * wd + 2 * xo + 1] += gv;
                    gin[(2 * y + 1) * wd + 2 * xo] += gv;
                    gin[(2 * y + 1) * wd + 2 * xo + 1] += gv;
                }
        }
    };
    return Tensor(std::move(n));
}

Tensor global_avg_pool(const Tensor& x) {
    check_rank("global_avg_pool", x, 4);
    const std::size_t batch = x.shape()[0], c = x.shape()[1], plane = x.shape()[2] * x.shape()[3];
    auto n = make_node(Shape{batch, c}, {x.node()});
    const auto& xv = x.node()->value;
    const double inv = 1.0 / static_cast<double>(plane);
    for (std::size_t p = 0; p < batch * c; ++p) {
        double acc = 0.0;
        const double* in = xv.data() + p * plane;
        for (std::size_t i = 0; i < plane; ++i) acc += in[i];
        n->value[p] = acc * inv;
    }
    n->backprop = [plane, inv](Node& self) {
        auto& px = *self.parents[0];
        if (!px.requires_grad) return;
        detail::ensure_grad(px);
        for (std::size_t p = 0; p < self.grad.size(); ++p) {
            const double g = self.grad[p] * inv;
            double* gin = px.grad.data() + p * plane;
            for (std::size_t i = 0; i < plane; ++i) gin[i] += g;
        }
    };
    return Tensor(std::move(n));
}

Tensor soft_rank(const Tensor& v, double tau) {
    if (tau <= 0.0) throw std::invalid_argument("soft_rank: tau must be positive");
    if (v.ndim() != 1 && v.ndim() != 2)
        throw std::invalid_argument("soft_rank: expected [k] or [n, k], got " +
                                    shape_str(v.shape()));
    const std::size_t k = v.shape().back();
    const std::size_t rows = v.size() / k;
    auto n = make_node(v.shape(), {v.node()});
    const auto& vv = v.node()->value;
    for (std::size_t r = 0; r < rows; ++r) {
        const double* row = vv.data() + r * k;
        double* out = n->value.data() + r * k;
        for (std::size_t i = 0; i < k; ++i) {
            double acc = 0.0;
            for (std::size_t j = 0; j < k; ++j) acc += sigmoid_value((row[i] - row[j]) / tau);
            out[i] = acc;
        }
    }
    n->backprop = [rows, k, tau](Node& self) {
        auto& p = *self.parents[0];
        if (!p.requires_grad) return;
        detail::ensure_grad(p);
        // d r_i / d v_m = (1/tau) * sigma'((v_i - v_m)/tau) * (-1) for m != i,
        // and (1/tau) * sum_{j != i} sigma'((v_i - v_j)/tau) for m == i.
        // sigma' is even, which collapses the pull-back to pairwise terms.
        for (std::size_t r = 0; r < rows; ++r) {
            const double* row = p.value.data() + r * k;
            const double* g = self.grad.data() + r * k;
            double* gin = p.grad.data() + r * k;
            for (std::size_t m = 0; m < k; ++m) {
                double acc = 0.0;
                for (std::size_t j = 0; j < k; ++j) {
                    if (j == m) continue;
                    const double s = sigmoid_value((row[m] - row[j]) / tau);
                    acc += (g[m] - g[j]) * s * (1.0 - s);
                }
                gin[m] += acc / tau;
            }
        }
    };
    return Tensor(std::move(n));
}

Tensor detach(const Tensor& a) {
    auto n = std::make_shared<Node>();
    n->shape = a.shape();
    n->value = a.node()->value;
    n->requires_grad = false;
    return Tensor(std::move(n));
}

Tensor reshape(const Tensor& a, Shape shape) {
    if (shape_numel(shape) != a.size())
        throw std::invalid_argument("reshape: cannot view " + shape_str(a.shape()) + " as " +
                                    shape_str(shape));
    auto n = make_node(std::move(shape), {a.node()});
    n->value = a.node()->value;
    n->backprop = [](Node& self) {
        auto& p = *self.parents[0];
        if (!p.requires_grad) return;
        detail::ensure_grad(p);
        for (std::size_t i = 0; i < self.grad.size(); ++i) p.grad[i] += self.grad[i];
    };
    return Tensor(std::move(n));
}

}  // namespace cprl::ops
