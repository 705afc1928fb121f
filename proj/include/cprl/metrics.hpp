#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <vector>

#include "cprl/tensor.hpp"

namespace cprl {

/// Average ranks in [1, n], ties averaged.
std::vector<double> average_ranks(const std::vector<double>& v);

// Correlations return nullopt when undefined (fewer than two points or zero
// variance in either argument); callers print an explicit marker, never NaN.
std::optional<double> plcc(const std::vector<double>& pred, const std::vector<double>& target);
std::optional<double> srcc(const std::vector<double>& pred, const std::vector<double>& target);
double mse(const std::vector<double>& pred, const std::vector<double>& target);

struct MetricTriple {
    std::optional<double> srcc;
    std::optional<double> plcc;
    double mse = 0.0;
};

MetricTriple evaluate_scores(const std::vector<double>& pred, const std::vector<double>& target);

/// Scores over x + u*dir_a + v*dir_b. scores[iu * resolution + iv] pairs with
/// offsets (offsets_px[iu], offsets_px[iv]); offsets are in pixel units and
/// scaled by 1/255 before touching the image. No clipping: the surface is a
/// probe, not an attack.
struct LandscapeGrid {
    std::size_t resolution = 0;
    double extent_px = 0.0;
    std::vector<double> offsets_px;
    std::vector<double> scores;
};

LandscapeGrid landscape(const std::function<double(const Tensor&)>& score, const Tensor& x,
                        const std::vector<double>& dir_a, const std::vector<double>& dir_b,
                        double extent_px, std::size_t resolution);

struct ActivationPair {
    std::size_t channel = 0;
    double clean = 0.0;
    double adversarial = 0.0;
};

/// Pairs sorted by |clean| descending; ties keep channel order.
std::vector<ActivationPair> activation_dump(const std::vector<double>& f_clean,
                                            const std::vector<double>& f_adv);

}  // namespace cprl
