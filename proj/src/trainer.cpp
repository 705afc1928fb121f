#include "cprl/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <stdexcept>

#include "cprl/cprl_layer.hpp"
#include "cprl/rng.hpp"

namespace cprl {

namespace {

using namespace ops;

std::span<const double> grad_or_empty(const Tensor& p) {
    return p.node()->grad.empty() ? std::span<const double>{} : p.grad();
}

Tensor batch_tensor(const Dataset& ds, const std::vector<std::size_t>& idx, std::size_t begin,
                    std::size_t count, std::vector<double>* labels) {
    const std::size_t px = ds.pixel_count();
    std::vector<double> pixels(count * px);
    if (labels) labels->resize(count);
    for (std::size_t i = 0; i < count; ++i) {
        const auto& s = ds.samples[idx[begin + i]];
        std::copy(s.image.begin(), s.image.end(), pixels.begin() + i * px);
        if (labels) (*labels)[i] = s.label;
    }
    return Tensor::from_data({count, ds.channels, ds.height, ds.width}, std::move(pixels), false);
}

Tensor mse_loss(const Tensor& pred, const Tensor& y) {
    return mul_scalar(squared_error(pred, y), 1.0 / static_cast<double>(y.size()));
}

}  // namespace

void adamw_step(const std::vector<Tensor>& params, AdamState& state, const AdamParams& hp,
                bool maximize) {
    if (state.slots.empty()) {
        state.slots.resize(params.size());
        for (std::size_t i = 0; i < params.size(); ++i) {
            state.slots[i].m.assign(params[i].size(), 0.0);
            state.slots[i].v.assign(params[i].size(), 0.0);
        }
    }
    if (state.slots.size() != params.size())
        throw std::invalid_argument("adamw: state holds " + std::to_string(state.slots.size()) +
                                    " slots for " + std::to_string(params.size()) + " params");
    state.t += 1;
    const double bc1 = 1.0 - std::pow(hp.beta1, static_cast<double>(state.t));
    const double bc2 = 1.0 - std::pow(hp.beta2, static_cast<double>(state.t));
    for (std::size_t i = 0; i < params.size(); ++i) {
        auto p = params[i].data_mut();
        auto& slot = state.slots[i];
        if (slot.m.size() != p.size())
            throw std::invalid_argument("adamw: slot " + std::to_string(i) +
                                        " shape does not match its parameter");
        const auto g = grad_or_empty(params[i]);
        for (std::size_t j = 0; j < p.size(); ++j) {
            const double grad = (j < g.size() ? (maximize ? -g[j] : g[j]) : 0.0);
            slot.m[j] = hp.beta1 * slot.m[j] + (1.0 - hp.beta1) * grad;
            slot.v[j] = hp.beta2 * slot.v[j] + (1.0 - hp.beta2) * grad * grad;
            const double mhat = slot.m[j] / bc1;
            const double vhat = slot.v[j] / bc2;
            p[j] -= hp.lr * (mhat / (std::sqrt(vhat) + hp.eps) + hp.weight_decay * p[j]);
        }
    }
}

void clip_global_norm(const std::vector<Tensor>& params, double max_norm) {
    if (max_norm <= 0.0) return;
    double sq = 0.0;
    for (const auto& p : params)
        for (double g : grad_or_empty(p)) sq += g * g;
    const double norm = std::sqrt(sq);
    if (norm <= max_norm) return;
    const double scale = max_norm / norm;
    for (const auto& p : params) {
        if (p.node()->grad.empty()) continue;
        for (auto& g : p.grad_mut()) g *= scale;
    }
}

InterventionPhase phase_at(std::size_t iteration, bool pns_enabled, bool mask_enabled) {
    if (!pns_enabled || !mask_enabled) return InterventionPhase::None;
    switch (iteration % 3) {
        case 1: return InterventionPhase::SF;
        case 2: return InterventionPhase::NC;
        default: return InterventionPhase::None;
    }
}

double adversary_step(Model& model, const Tensor& x, TrainState& ts, InterventionPhase phase) {
    if (phase == InterventionPhase::None)
        throw std::invalid_argument("adversary_step: phase must be SF or NC");
    if (!model.config().use_mask)
        throw std::invalid_argument("adversary_step: baseline model has no adversary");

    Model::FullForward ff = model.forward_full(x);
    const bool sf = phase == InterventionPhase::SF;
    const Tensor branch = sf ? ff.y_c : ff.y_s;
    const Tensor risk = mse_loss(branch, ff.pred_detached);
    backward(risk);

    auto params = sf ? model.phi_params() : model.xi_params();
    clip_global_norm(params, ts.cfg.grad_clip);
    // phi climbs its branch of the risk; xi descends toward the clean
    // prediction, which is what maximizing the full risk asks of it
    adamw_step(params, sf ? ts.phi : ts.xi, ts.hyper(), /*maximize=*/sf);
    model.heads().normalize();
    return risk.item();
}

double minimize_step(Model& model, const Tensor& x, const Tensor& y, TrainState& ts,
                     InterventionPhase phase) {
    Tensor objective;
    if (phase == InterventionPhase::None || !model.config().use_mask) {
        objective = mse_loss(model.predict(x), y);
    } else {
        Model::FullForward ff = model.forward_full(x);
        const Tensor fit_term = mse_loss(ff.pred, y);
        if (ts.cfg.full_objective) {
            objective = add(fit_term, pns_risk(ff.y_c, ff.y_s, ff.pred_detached));
        } else if (phase == InterventionPhase::SF) {
            objective = add(fit_term, mse_loss(ff.y_c, ff.pred_detached));
        } else {
            objective = sub(fit_term, mse_loss(ff.y_s, ff.pred_detached));
        }
    }
    backward(objective);
    auto params = model.backbone_params();
    clip_global_norm(params, ts.cfg.grad_clip);
    adamw_step(params, ts.backbone, ts.hyper(), false);
    return objective.item();
}

double train_step(Model& model, const Tensor& x, const Tensor& y, TrainState& ts,
                  InterventionPhase phase) {
    if (phase != InterventionPhase::None) {
        if (!model.config().use_mask)
            throw std::invalid_argument("train_step: SF/NC phase on a maskless model");
        adversary_step(model, x, ts, phase);
    }
    return minimize_step(model, x, y, ts, phase);
}

std::vector<double> predict_dataset(const Model& model, const Dataset& ds,
                                    std::size_t batch_size) {
    std::vector<std::size_t> idx(ds.samples.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::vector<double> preds;
    preds.reserve(ds.samples.size());
    for (std::size_t begin = 0; begin < idx.size(); begin += batch_size) {
        const std::size_t count = std::min(batch_size, idx.size() - begin);
        const Tensor x = batch_tensor(ds, idx, begin, count, nullptr);
        const auto s = model.predict_values(x);
        preds.insert(preds.end(), s.begin(), s.end());
    }
    return preds;
}

MetricTriple evaluate_model(const Model& model, const Dataset& ds, std::size_t batch_size) {
    std::vector<double> labels;
    labels.reserve(ds.samples.size());
    for (const auto& s : ds.samples) labels.push_back(s.label);
    return evaluate_scores(predict_dataset(model, ds, batch_size), labels);
}

FitResult fit(Model& model, const Dataset& train, const Dataset& test, const TrainConfig& cfg,
              bool log) {
    if (train.samples.empty()) throw std::invalid_argument("fit: empty training set");
    if (test.samples.empty()) throw std::invalid_argument("fit: empty test set");
    if (cfg.batch_size < 1) throw std::invalid_argument("fit: batch_size must be >= 1");
    if (!(cfg.lr > 0.0)) throw std::invalid_argument("fit: lr must be > 0");

    TrainState ts(cfg);
    FitResult out;
    out.best = model.to_records();
    out.best_epoch = 0;

    std::vector<std::size_t> idx(train.samples.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});

    for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
        Rng shuffler(mix_seed(cfg.seed, 0xe90c + epoch));
        shuffler.shuffle(idx);

        double loss_sum = 0.0;
        std::size_t steps = 0, n_none = 0, n_sf = 0, n_nc = 0;
        for (std::size_t begin = 0; begin < idx.size(); begin += cfg.batch_size) {
            const std::size_t count = std::min(cfg.batch_size, idx.size() - begin);
            std::vector<double> labels;
            const Tensor x = batch_tensor(train, idx, begin, count, &labels);
            const Tensor y = Tensor::from_data({count}, labels, false);
            const InterventionPhase phase =
                phase_at(ts.iteration, cfg.pns, model.config().use_mask);
            switch (phase) {
                case InterventionPhase::None: ++n_none; break;
                case InterventionPhase::SF: ++n_sf; break;
                case InterventionPhase::NC: ++n_nc; break;
            }
            loss_sum += train_step(model, x, y, ts, phase);
            ++ts.iteration;
            ++steps;
        }

        char counts[64];
        std::snprintf(counts, sizeof counts, "none=%zu;sf=%zu;nc=%zu", n_none, n_sf, n_nc);
        const MetricTriple mtr = evaluate_model(model, train, cfg.batch_size);
        const MetricTriple mte = evaluate_model(model, test, cfg.batch_size);
        out.curve.push_back({epoch, "train", mtr.srcc, mtr.plcc, mtr.mse,
                             loss_sum / static_cast<double>(steps), counts});
        out.curve.push_back({epoch, "test", mte.srcc, mte.plcc, mte.mse, mte.mse, counts});

        if (mte.srcc && (!out.best_srcc || *mte.srcc > *out.best_srcc)) {
            out.best_srcc = mte.srcc;
            out.best = model.to_records();
            out.best_epoch = epoch;
        }
        if (log) {
            std::printf("epoch %zu loss %.6f test srcc %s mse %.6f\n", epoch,
                        loss_sum / static_cast<double>(steps),
                        mte.srcc ? std::to_string(*mte.srcc).c_str() : "undefined", mte.mse);
            std::fflush(stdout);
        }
    }
    return out;
}

}  // namespace cprl
