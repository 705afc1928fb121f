#include "cprl/attacks.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "cprl/rng.hpp"

namespace cprl {

namespace {

double sgn(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

void check_labels(const Tensor& x, const std::vector<double>& y) {
    if (x.ndim() != 4)
        throw std::invalid_argument("attack: expected [n,c,h,w] input, got " +
                                    shape_str(x.shape()));
    if (x.shape()[0] != y.size())
        throw std::invalid_argument("attack: batch " + std::to_string(x.shape()[0]) + " vs " +
                                    std::to_string(y.size()) + " labels");
}

std::vector<double> score_values(const ScoreFn& score, const Tensor& x) {
    const Tensor s = score(Tensor::from_data(x.shape(), {x.data().begin(), x.data().end()}, false));
    return {s.data().begin(), s.data().end()};
}

double mean_sq_err(const std::vector<double>& a, const std::vector<double>& b) {
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) acc += (a[i] - b[i]) * (a[i] - b[i]);
    return acc / static_cast<double>(a.size());
}

// Gradient of sum((score(x) - target)^2) w.r.t. the pixels.
std::vector<double> loss_grad(const ScoreFn& score, const std::vector<double>& x_cur,
                              const Shape& shape, const std::vector<double>& target) {
    Tensor xt = Tensor::from_data(shape, x_cur, true);
    Tensor pred = score(xt);
    if (pred.size() != target.size())
        throw std::invalid_argument("attack: scorer returned " + std::to_string(pred.size()) +
                                    " scores for " + std::to_string(target.size()) + " samples");
    Tensor loss = ops::squared_error(pred, Tensor::from_data({target.size()}, target, false));
    backward(loss);
    return {xt.grad().begin(), xt.grad().end()};
}

// One projected ascent step shared by every attack family, so a single-step
// PGD at alpha = eps reproduces FGSM bit for bit.
void ascend_step(std::vector<double>& x_cur, const std::vector<double>& grad,
                 const std::vector<double>& x0, double alpha, double eps) {
    for (std::size_t i = 0; i < x_cur.size(); ++i) {
        double v = x_cur[i] + alpha * sgn(grad[i]);
        v = std::clamp(v, x0[i] - eps, x0[i] + eps);
        x_cur[i] = std::clamp(v, 0.0, 1.0);
    }
}

AttackResult finish(const ScoreFn& score, const Tensor& x, const std::vector<double>& y,
                    std::vector<double> x_adv) {
    AttackResult r;
    r.score_before = score_values(score, x);
    r.x_adv = Tensor::from_data(x.shape(), std::move(x_adv), false);
    r.score_after = score_values(score, r.x_adv);
    r.loss_before = mean_sq_err(r.score_before, y);
    r.loss_after = mean_sq_err(r.score_after, y);
    return r;
}

}  // namespace

AttackResult fgsm(const ScoreFn& score, const Tensor& x, const std::vector<double>& y,
                  double eps) {
    check_labels(x, y);
    if (eps < 0.0) throw std::invalid_argument("fgsm: eps must be >= 0");
    const std::vector<double> x0(x.data().begin(), x.data().end());
    std::vector<double> cur = x0;
    ascend_step(cur, loss_grad(score, cur, x.shape(), y), x0, eps, eps);
    return finish(score, x, y, std::move(cur));
}

AttackResult score_reflection(const ScoreFn& score, const Tensor& x,
                              const std::vector<double>& y, double eps) {
    check_labels(x, y);
    if (eps < 0.0) throw std::invalid_argument("score_reflection: eps must be >= 0");
    std::vector<double> target(y.size());
    for (std::size_t i = 0; i < y.size(); ++i) target[i] = sgn(y[i] - 0.5);
    const std::vector<double> x0(x.data().begin(), x.data().end());
    std::vector<double> cur = x0;
    ascend_step(cur, loss_grad(score, cur, x.shape(), target), x0, eps, eps);
    return finish(score, x, y, std::move(cur));
}

AttackResult pgd(const ScoreFn& score, const Tensor& x, const std::vector<double>& y, double eps,
                 double alpha, std::size_t steps, bool random_start, std::uint64_t seed) {
    check_labels(x, y);
    if (eps < 0.0) throw std::invalid_argument("pgd: eps must be >= 0");
    if (steps < 1) throw std::invalid_argument("pgd: steps must be >= 1");
    if (alpha <= 0.0) alpha = eps / 4.0;

    const std::vector<double> x0(x.data().begin(), x.data().end());
    std::vector<double> cur = x0;
    if (random_start) {
        Rng rng(mix_seed(seed, 0x96d));
        for (auto& v : cur) v = std::clamp(v + rng.uniform(-eps, eps), 0.0, 1.0);
    }
    for (std::size_t t = 0; t < steps; ++t)
        ascend_step(cur, loss_grad(score, cur, x.shape(), y), x0, alpha, eps);
    return finish(score, x, y, std::move(cur));
}

Tensor attack_batch(const ScoreFn& score, const Tensor& x, const std::vector<double>& y,
                    const std::string& family, double eps, const SweepOptions& opt) {
    if (family == "fgsm") return fgsm(score, x, y, eps).x_adv;
    if (family == "reflect") return score_reflection(score, x, y, eps).x_adv;
    if (family == "pgd") return pgd(score, x, y, eps, opt.pgd_alpha, opt.pgd_steps).x_adv;
    throw std::invalid_argument("attack: unknown family " + family);
}

std::vector<SweepRow> attack_sweep(const ScoreFn& score, const Dataset& ds,
                                   const std::vector<double>& grid, const SweepOptions& opt) {
    if (grid.empty()) throw std::invalid_argument("attack_sweep: empty epsilon grid");
    if (!std::is_sorted(grid.begin(), grid.end()))
        throw std::invalid_argument("attack_sweep: epsilon grid must be ascending");
    if (ds.samples.empty()) throw std::invalid_argument("attack_sweep: empty dataset");

    const std::size_t n = ds.samples.size();
    const std::size_t px = ds.pixel_count();
    std::vector<SweepRow> rows;
    rows.reserve(grid.size());
    for (double eps : grid) {
        std::vector<double> preds, labels;
        preds.reserve(n);
        labels.reserve(n);
        for (std::size_t begin = 0; begin < n; begin += opt.batch_size) {
            const std::size_t count = std::min(opt.batch_size, n - begin);
            std::vector<double> pixels(count * px);
            std::vector<double> y(count);
            for (std::size_t i = 0; i < count; ++i) {
                const auto& s = ds.samples[begin + i];
                std::copy(s.image.begin(), s.image.end(), pixels.begin() + i * px);
                y[i] = s.label;
            }
            const Tensor x = Tensor::from_data({count, ds.channels, ds.height, ds.width},
                                               std::move(pixels), false);
            const Tensor x_adv = attack_batch(score, x, y, opt.family, eps, opt);
            const Tensor s = score(x_adv);
            preds.insert(preds.end(), s.data().begin(), s.data().end());
            labels.insert(labels.end(), y.begin(), y.end());
        }
        rows.push_back({eps, evaluate_scores(preds, labels)});
    }
    return rows;
}

}  // namespace cprl
