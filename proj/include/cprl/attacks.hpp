#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "cprl/autodiff.hpp"
#include "cprl/dataset.hpp"
#include "cprl/metrics.hpp"

namespace cprl {

/// Differentiable scorer: image batch [n,c,h,w] -> scores [n] in (0,1).
using ScoreFn = std::function<Tensor(const Tensor&)>;

struct AttackResult {
    Tensor x_adv;
    double loss_before = 0.0, loss_after = 0.0;  // mean squared error vs labels
    std::vector<double> score_before, score_after;
};

/// x_adv = clip(x + eps * sign(grad_x sum((h(x) - y)^2))), pixels kept in [0,1].
AttackResult fgsm(const ScoreFn& score, const Tensor& x, const std::vector<double>& y,
                  double eps);

/// Ascends the squared distance to the reflected target sign(y - 0.5) in
/// {-1, 0, +1} (0 at the boundary), driving scores away from the label's side.
AttackResult score_reflection(const ScoreFn& score, const Tensor& x,
                              const std::vector<double>& y, double eps);

/// `steps` projected sign-gradient ascents of size alpha, each iterate clipped
/// to the eps-ball around x and to [0,1]. alpha <= 0 selects eps/4.
AttackResult pgd(const ScoreFn& score, const Tensor& x, const std::vector<double>& y, double eps,
                 double alpha, std::size_t steps, bool random_start = false,
                 std::uint64_t seed = 0);

struct SweepRow {
    double epsilon = 0.0;
    MetricTriple metrics;
};

struct SweepOptions {
    std::string family = "fgsm";  // fgsm | pgd | reflect
    std::size_t batch_size = 16;
    std::size_t pgd_steps = 10;
    double pgd_alpha = 0.0;  // <= 0 selects eps/4
};

/// Attacks every sample at each epsilon of the ascending grid and scores the
/// perturbed set. epsilon 0 reproduces the clean evaluation exactly.
std::vector<SweepRow> attack_sweep(const ScoreFn& score, const Dataset& ds,
                                   const std::vector<double>& grid, const SweepOptions& opt);

/// Applies one attack family to one batch; shared by sweep and the CLI.
Tensor attack_batch(const ScoreFn& score, const Tensor& x, const std::vector<double>& y,
                    const std::string& family, double eps, const SweepOptions& opt);

}  // namespace cprl
