#include "cprl/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

namespace cprl {

namespace {

void check_pair(const std::vector<double>& a, const std::vector<double>& b, const char* who) {
    if (a.size() != b.size())
        throw std::invalid_argument(std::string(who) + ": length mismatch " +
                                    std::to_string(a.size()) + " vs " + std::to_string(b.size()));
}

}  // namespace

std::vector<double> average_ranks(const std::vector<double>& v) {
    const std::size_t n = v.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
    std::vector<double> ranks(n);
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j + 1 < n && v[order[j + 1]] == v[order[i]]) ++j;
        const double avg = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
        for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = avg;
        i = j + 1;
    }
    return ranks;
}

std::optional<double> plcc(const std::vector<double>& pred, const std::vector<double>& target) {
    check_pair(pred, target, "plcc");
    const std::size_t n = pred.size();
    if (n < 2) return std::nullopt;
    double mp = 0.0, mt = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        mp += pred[i];
        mt += target[i];
    }
    mp /= static_cast<double>(n);
    mt /= static_cast<double>(n);
    double cov = 0.0, vp = 0.0, vt = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double dp = pred[i] - mp, dt = target[i] - mt;
        cov += dp * dt;
        vp += dp * dp;
        vt += dt * dt;
    }
    if (vp == 0.0 || vt == 0.0) return std::nullopt;
    return cov / std::sqrt(vp * vt);
}

std::optional<double> srcc(const std::vector<double>& pred, const std::vector<double>& target) {
    check_pair(pred, target, "srcc");
    if (pred.size() < 2) return std::nullopt;
    return plcc(average_ranks(pred), average_ranks(target));
}

double mse(const std::vector<double>& pred, const std::vector<double>& target) {
    check_pair(pred, target, "mse");
    if (pred.empty()) throw std::invalid_argument("mse: empty input");
    double acc = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const double d = pred[i] - target[i];
        acc += d * d;
    }
    return acc / static_cast<double>(pred.size());
}

MetricTriple evaluate_scores(const std::vector<double>& pred, const std::vector<double>& target) {
    return {srcc(pred, target), plcc(pred, target), mse(pred, target)};
}

LandscapeGrid landscape(const std::function<double(const Tensor&)>& score, const Tensor& x,
                        const std::vector<double>& dir_a, const std::vector<double>& dir_b,
                        double extent_px, std::size_t resolution) {
    if (resolution < 2) throw std::invalid_argument("landscape: resolution must be >= 2");
    if (dir_a.size() != x.size() || dir_b.size() != x.size())
        throw std::invalid_argument("landscape: direction size does not match image");
    if (extent_px < 0.0) throw std::invalid_argument("landscape: extent must be >= 0");

    LandscapeGrid grid;
    grid.resolution = resolution;
    grid.extent_px = extent_px;
    grid.offsets_px.resize(resolution);
    for (std::size_t i = 0; i < resolution; ++i)
        grid.offsets_px[i] =
            -extent_px + 2.0 * extent_px * static_cast<double>(i) / static_cast<double>(resolution - 1);

    const auto base = x.data();
    std::vector<double> probe(base.begin(), base.end());
    grid.scores.resize(resolution * resolution);
    for (std::size_t iu = 0; iu < resolution; ++iu) {
        const double u = grid.offsets_px[iu] / 255.0;
        for (std::size_t iv = 0; iv < resolution; ++iv) {
            const double v = grid.offsets_px[iv] / 255.0;
            for (std::size_t p = 0; p < probe.size(); ++p)
                probe[p] = base[p] + u * dir_a[p] + v * dir_b[p];
            grid.scores[iu * resolution + iv] =
                score(Tensor::from_data(x.shape(), probe, false));
        }
    }
    return grid;
}

std::vector<ActivationPair> activation_dump(const std::vector<double>& f_clean,
                                            const std::vector<double>& f_adv) {
    check_pair(f_clean, f_adv, "activation_dump");
    std::vector<ActivationPair> pairs(f_clean.size());
    for (std::size_t k = 0; k < f_clean.size(); ++k) pairs[k] = {k, f_clean[k], f_adv[k]};
    std::stable_sort(pairs.begin(), pairs.end(), [](const ActivationPair& a, const ActivationPair& b) {
        return std::abs(a.clean) > std::abs(b.clean);
    });
    return pairs;
}

}  // namespace cprl
