#include "cprl/spectral.hpp"

#include <cmath>
#include <stdexcept>

#include "cprl/rng.hpp"

namespace cprl {

namespace {

double norm2(const std::vector<double>& v) {
    double acc = 0.0;
    for (double x : v) acc += x * x;
    return std::sqrt(acc);
}

void check_matrix(const Tensor& w) {
    if (w.ndim() != 2)
        throw std::invalid_argument("spectral: expected 2-D weight, got " + shape_str(w.shape()));
}

}  // namespace

double estimate_sigma_max(const Tensor& w, int iters, PowerIterState& state) {
    check_matrix(w);
    if (iters < 1) throw std::invalid_argument("spectral: iters must be >= 1");
    const std::size_t rows = w.shape()[0], cols = w.shape()[1];
    auto wv = w.data();

    if (state.u.size() != rows) {
        state.u.resize(rows);
        Rng rng(mix_seed(0x5eedu, rows * 1000003 + cols));
        for (auto& x : state.u) x = rng.uniform(-1.0, 1.0);
        const double n = norm2(state.u);
        for (auto& x : state.u) x /= (n > 1e-12 ? n : 1.0);
    }

    std::vector<double> v(cols);
    double sigma = 0.0;
    for (int it = 0; it < iters; ++it) {
        for (std::size_t j = 0; j < cols; ++j) {
            double acc = 0.0;
            for (std::size_t i = 0; i < rows; ++i) acc += wv[i * cols + j] * state.u[i];
            v[j] = acc;
        }
        const double nv = norm2(v);
        for (auto& x : v) x /= std::max(nv, 1e-12);
        for (std::size_t i = 0; i < rows; ++i) {
            double acc = 0.0;
            for (std::size_t j = 0; j < cols; ++j) acc += wv[i * cols + j] * v[j];
            state.u[i] = acc;
        }
        sigma = norm2(state.u);
        for (auto& x : state.u) x /= std::max(sigma, 1e-12);
    }
    return sigma;
}

Tensor spectral_normalize(const Tensor& w, int iters, PowerIterState& state) {
    const double sigma = estimate_sigma_max(w, iters, state);
    const double denom = std::max(sigma, 1e-12);
    std::vector<double> scaled(w.data().begin(), w.data().end());
    for (auto& x : scaled) x /= denom;
    return Tensor::from_data(w.shape(), std::move(scaled), false);
}

void project_to_unit_sigma(Tensor& w, PowerIterState& state, double tol, int max_rounds) {
    check_matrix(w);
    for (int round = 0; round < max_rounds; ++round) {
        const double sigma = estimate_sigma_max(w, 1, state);
        if (sigma < 1e-12) return;  // zero weight, nothing to scale
        if (std::abs(sigma - 1.0) <= tol) return;
        auto data = w.data_mut();
        for (auto& x : data) x /= sigma;
    }
}

}  // namespace cprl
