#pragma once

#include "cprl/tensor.hpp"

// Forward ops with recorded backward rules. Elementwise ops require exact
// shape matches; broadcasting exists only between a tensor and a scalar
// (the *_scalar ops). Shape violations throw std::invalid_argument naming
// both shapes.
namespace cprl::ops {

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor neg(const Tensor& a);
Tensor add_scalar(const Tensor& a, double s);
Tensor mul_scalar(const Tensor& a, double s);

Tensor relu(const Tensor& a);
Tensor sigmoid(const Tensor& a);

Tensor sum(const Tensor& a);   // -> scalar
Tensor mean(const Tensor& a);  // -> scalar

/// Scalar sum of squared differences.
Tensor squared_error(const Tensor& a, const Tensor& b);

/// [m,k] x [k,n] -> [m,n]
Tensor matmul(const Tensor& a, const Tensor& b);

/// x: [n, k_in], w: [k_out, k_in], b: [k_out] -> [n, k_out]
Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b);

/// x: [b, c, h, w], w: [oc, c, kh, kw]; stride 1, zero padding `pad`.
Tensor conv2d(const Tensor& x, const Tensor& w, std::size_t pad);

/// x: [b, c, h, w], bias: [c]; adds bias[c] over each channel plane.
Tensor add_channel_bias(const Tensor& x, const Tensor& bias);

/// 2x2 average pooling, stride 2; h and w must be even.
Tensor avg_pool2(const Tensor& x);

/// [b, c, h, w] -> [b, c], mean over the spatial dims.
Tensor global_avg_pool(const Tensor& x);

/// Row-wise soft rank r_k = sum_j sigmoid((v_k - v_j) / tau) on [k] or [n, k].
Tensor soft_rank(const Tensor& v, double tau);

/// Same values, gradient barrier.
Tensor detach(const Tensor& a);

/// Same buffer contents under a new shape with identical numel.
Tensor reshape(const Tensor& a, Shape shape);

/// Numerically stable logistic, exposed for non-graph callers.
double sigmoid_value(double z);

}  // namespace cprl::ops
