#include "cprl/cprl_layer.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace cprl {

namespace {

using namespace ops;

std::size_t last_dim(const Tensor& t) { return t.shape().back(); }

void check_channels(const Tensor& f, std::size_t k, const char* who) {
    if (f.ndim() < 1 || f.ndim() > 2 || last_dim(f) != k)
        throw std::invalid_argument(std::string(who) + ": expected trailing dimension " +
                                    std::to_string(k) + ", got shape " + shape_str(f.shape()));
}

Tensor one_minus(const Tensor& m) { return add_scalar(neg(m), 1.0); }

// Lifts a [K] vector to [1, K] so the linear head applies, undone afterwards.
Tensor as_rows(const Tensor& t) {
    if (t.ndim() == 2) return t;
    return reshape(t, {1, t.shape()[0]});
}

Tensor like(const Tensor& rows, const Tensor& proto) {
    if (proto.ndim() == 2) return rows;
    return reshape(rows, proto.shape());
}

}  // namespace

void validate(const CprlConfig& cfg) {
    if (cfg.channel_count < 2) throw std::invalid_argument("cprl: channel_count must be >= 2");
    if (!(cfg.softrank_temperature > 0.0))
        throw std::invalid_argument("cprl: softrank_temperature must be > 0");
    if (cfg.bias < 0.0 || cfg.bias > 1.0)
        throw std::invalid_argument("cprl: bias must lie in [0, 1]");
}

Tensor channel_mask(const Tensor& f, const CprlConfig& cfg) {
    validate(cfg);
    check_channels(f, cfg.channel_count, "channel_mask");
    const double k = static_cast<double>(cfg.channel_count);
    const double shift = -k / 2.0 + cfg.bias * k;
    return sigmoid(add_scalar(soft_rank(f, cfg.softrank_temperature), shift));
}

Tensor activate(const Tensor& f, const CprlConfig& cfg) {
    validate(cfg);
    check_channels(f, cfg.channel_count, "activate");
    return mul(f, channel_mask(f, cfg));
}

void InterventionHeads::init(std::size_t k, Rng& rng) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(k));
    std::vector<double> wp(k * k), wx(k * k);
    for (auto& v : wp) v = rng.uniform(-bound, bound);
    for (auto& v : wx) v = rng.uniform(-bound, bound);
    w_phi = Tensor::from_data({k, k}, std::move(wp), true);
    w_xi = Tensor::from_data({k, k}, std::move(wx), true);
    b_phi = Tensor::zeros({k}, true);
    b_xi = Tensor::zeros({k}, true);
    phi_state = {};
    xi_state = {};
    normalize();
}

void InterventionHeads::normalize(double tol) {
    project_to_unit_sigma(w_phi, phi_state, tol);
    project_to_unit_sigma(w_xi, xi_state, tol);
}

std::vector<Tensor> InterventionHeads::phi_params() { return {w_phi, b_phi}; }
std::vector<Tensor> InterventionHeads::xi_params() { return {w_xi, b_xi}; }

Tensor intervene_c(const Tensor& f, const Tensor& mask, const InterventionHeads& heads) {
    const Tensor fr = as_rows(f), mr = as_rows(mask);
    const Tensor mapped = ops::linear(fr, heads.w_phi, heads.b_phi);
    return like(add(mul(mapped, one_minus(mr)), mul(fr, mr)), f);
}

Tensor intervene_s(const Tensor& f, const Tensor& mask, const InterventionHeads& heads,
                   bool complement_passthrough) {
    const Tensor fr = as_rows(f), mr = as_rows(mask);
    const Tensor mapped = ops::linear(fr, heads.w_xi, heads.b_xi);
    const Tensor pass = complement_passthrough ? mul(fr, one_minus(mr)) : mul(fr, mr);
    return like(add(mul(mapped, mr), pass), f);
}

Tensor pns_risk(const Tensor& y_c, const Tensor& y_s, const Tensor& y) {
    if (y_c.shape() != y.shape() || y_s.shape() != y.shape())
        throw std::invalid_argument("pns_risk: prediction shapes disagree: " +
                                    shape_str(y_c.shape()) + ", " + shape_str(y_s.shape()) +
                                    ", " + shape_str(y.shape()));
    const double n = static_cast<double>(y.size());
    return mul_scalar(sub(squared_error(y_c, y), squared_error(y_s, y)), 1.0 / n);
}

}  // namespace cprl
