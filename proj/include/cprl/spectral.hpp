#pragma once

#include "cprl/tensor.hpp"

namespace cprl {

/// Persistent left-vector for warm-started power iteration, one per weight.
struct PowerIterState {
    std::vector<double> u;
};

/// Power-iteration estimate of the largest singular value of a 2-D tensor.
/// The state vector is initialized deterministically on first use and kept
/// warm across calls.
double estimate_sigma_max(const Tensor& w, int iters, PowerIterState& state);

/// Returns w / max(sigma_hat, 1e-12). A zero matrix comes back unchanged.
Tensor spectral_normalize(const Tensor& w, int iters, PowerIterState& state);

/// In-place projection used by the trainer: repeatedly re-estimate and
/// divide until the warm estimate is within tol of 1. Converges in one or
/// two rounds once the state vector tracks the weight.
void project_to_unit_sigma(Tensor& w, PowerIterState& state, double tol = 1e-9,
                           int max_rounds = 100);

}  // namespace cprl
