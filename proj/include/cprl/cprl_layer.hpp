#pragma once

#include <vector>

#include "cprl/autodiff.hpp"
#include "cprl/rng.hpp"
#include "cprl/spectral.hpp"

namespace cprl {

struct CprlConfig {
    std::size_t channel_count = 32;
    double bias = 0.4;                  // b in the mask exponent
    double softrank_temperature = 1.0;  // tau
    bool style_complement = false;      // s branch passes f*(1-M) through instead of f*M
};

void validate(const CprlConfig& cfg);

/// M_k = sigmoid(soft_rank(f)_k - K/2 + b*K), row-wise. Accepts [K] or [n, K].
/// High-magnitude channels rank near K and gate toward 1.
Tensor channel_mask(const Tensor& f, const CprlConfig& cfg);

/// f * channel_mask(f), gradients flowing through both factors.
Tensor activate(const Tensor& f, const CprlConfig& cfg);

/// One linear map per intervention target, spectrally normalized before use.
struct InterventionHeads {
    Tensor w_phi, b_phi;  // rewrites channels the mask suppresses
    Tensor w_xi, b_xi;    // rewrites channels the mask keeps
    PowerIterState phi_state, xi_state;

    void init(std::size_t k, Rng& rng);
    void normalize(double tol = 1e-9);
    std::vector<Tensor> phi_params();
    std::vector<Tensor> xi_params();
};

/// c = (FC_phi f) * (1 - M) + f * M
Tensor intervene_c(const Tensor& f, const Tensor& mask, const InterventionHeads& heads);

/// s = (FC_xi f) * M + f * M, or with complement_passthrough
/// s = (FC_xi f) * M + f * (1 - M).
Tensor intervene_s(const Tensor& f, const Tensor& mask, const InterventionHeads& heads,
                   bool complement_passthrough = false);

/// R = mean((y_c - y)^2) - mean((y_s - y)^2), a scalar.
Tensor pns_risk(const Tensor& y_c, const Tensor& y_s, const Tensor& y);

}  // namespace cprl
