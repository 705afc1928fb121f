#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "cprl/dataset.hpp"
#include "cprl/metrics.hpp"
#include "cprl/model.hpp"

namespace cprl {

struct AdamParams {
    double lr = 3e-5;
    double beta1 = 0.9, beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.0;
};

struct AdamSlot {
    std::vector<double> m, v;
};

struct AdamState {
    std::vector<AdamSlot> slots;
    std::size_t t = 0;
};

/// Decoupled-weight-decay Adam with bias correction. maximize flips the
/// gradient (ascent) while decay keeps shrinking toward zero. A parameter
/// whose grad buffer was never populated counts as zero gradient.
void adamw_step(const std::vector<Tensor>& params, AdamState& state, const AdamParams& hp,
                bool maximize = false);

/// Scales grads in place so their joint l2 norm is at most max_norm.
void clip_global_norm(const std::vector<Tensor>& params, double max_norm);

struct TrainConfig {
    std::size_t epochs = 12;
    std::size_t batch_size = 16;
    double lr = 3e-5;
    double beta1 = 0.9, beta2 = 0.999;
    double adam_eps = 1e-8;
    double weight_decay = 0.0;
    double grad_clip = 5.0;
    std::uint64_t seed = 0;
    bool pns = true;            // enable the SF/NC min-max phases
    bool full_objective = true; // min sub-step sees both intervention branches
};

struct TrainState {
    TrainConfig cfg;
    AdamState backbone, phi, xi;
    std::size_t iteration = 0;

    explicit TrainState(TrainConfig c) : cfg(std::move(c)) {}
    AdamParams hyper() const { return {cfg.lr, cfg.beta1, cfg.beta2, cfg.adam_eps, cfg.weight_decay}; }
};

InterventionPhase phase_at(std::size_t iteration, bool pns_enabled, bool mask_enabled);

/// One adversary update: SF ascends the phi branch risk, NC descends the xi
/// branch toward the clean prediction; weights re-normalized afterwards.
/// Backbone and head stay untouched.
double adversary_step(Model& model, const Tensor& x, TrainState& ts, InterventionPhase phase);

/// One minimizing update of backbone + head on the phase objective.
double minimize_step(Model& model, const Tensor& x, const Tensor& y, TrainState& ts,
                     InterventionPhase phase);

/// Full Algorithm-style step: adversary sub-step (SF/NC only), then the
/// minimizing sub-step. Returns the minimized objective value.
double train_step(Model& model, const Tensor& x, const Tensor& y, TrainState& ts,
                  InterventionPhase phase);

struct CurveRow {
    std::size_t epoch = 0;
    std::string split;  // train | test
    std::optional<double> srcc, plcc;
    double mse = 0.0;
    double loss = 0.0;
    std::string phase_counts;  // e.g. none=11;sf=11;nc=10
};

struct FitResult {
    std::vector<CurveRow> curve;
    std::vector<CheckpointRecord> best;  // best test SRCC, else the initial weights
    std::size_t best_epoch = 0;          // 0 = initial
    std::optional<double> best_srcc;
};

std::vector<double> predict_dataset(const Model& model, const Dataset& ds,
                                    std::size_t batch_size);
MetricTriple evaluate_model(const Model& model, const Dataset& ds, std::size_t batch_size);

FitResult fit(Model& model, const Dataset& train, const Dataset& test, const TrainConfig& cfg,
              bool log = false);

}  // namespace cprl
