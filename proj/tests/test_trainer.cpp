#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numeric>
#include <vector>

#include "cprl/rng.hpp"
#include "cprl/trainer.hpp"
#include "oracles.hpp"

using namespace cprl;
using namespace cprl::ops;

namespace {

bool same_bits(const std::vector<double>& a, const std::vector<double>& b) {
    return a.size() == b.size() &&
           std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0;
}

bool records_equal(const std::vector<CheckpointRecord>& a,
                   const std::vector<CheckpointRecord>& b) {
    if (a.size() != b.size()) return false;
    for (std::size_t i = 0; i < a.size(); ++i)
        if (a[i].name != b[i].name || a[i].shape != b[i].shape ||
            !same_bits(a[i].values, b[i].values))
            return false;
    return true;
}

ModelConfig small_cfg(bool use_mask) {
    ModelConfig cfg;
    cfg.channels = 8;
    cfg.input_side = 16;
    cfg.use_mask = use_mask;
    return cfg;
}

Tensor batch_of(const Dataset& ds, const std::vector<std::size_t>& idx, std::size_t begin,
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

}  // namespace

TEST_CASE("adamw reproduces a scalar reference update") {
    Rng rng(211);
    Tensor a = Tensor::from_data({3}, {0.5, -1.2, 2.0}, true);
    Tensor b = Tensor::from_data({2}, {0.1, 0.9}, true);
    std::vector<double> ra(a.data().begin(), a.data().end());
    std::vector<double> rb(b.data().begin(), b.data().end());
    std::vector<double> ma(3, 0.0), va(3, 0.0), mb(2, 0.0), vb(2, 0.0);

    AdamState st;
    AdamParams hp;
    hp.lr = 0.01;
    hp.weight_decay = 0.02;

    for (std::size_t t = 1; t <= 7; ++t) {
        // a fresh random "loss gradient" each step
        std::vector<double> ga(3), gb(2);
        for (auto& g : ga) g = rng.uniform(-1, 1);
        for (auto& g : gb) g = rng.uniform(-1, 1);
        backward(add(sum(mul(a, Tensor::from_data({3}, ga, false))),
                     sum(mul(b, Tensor::from_data({2}, gb, false)))));

        adamw_step({a, b}, st, hp);

        const double bc1 = 1.0 - std::pow(hp.beta1, double(t));
        const double bc2 = 1.0 - std::pow(hp.beta2, double(t));
        auto ref = [&](std::vector<double>& p, std::vector<double>& m, std::vector<double>& v,
                       const std::vector<double>& g) {
            for (std::size_t j = 0; j < p.size(); ++j) {
                m[j] = hp.beta1 * m[j] + (1.0 - hp.beta1) * g[j];
                v[j] = hp.beta2 * v[j] + (1.0 - hp.beta2) * g[j] * g[j];
                const double mhat = m[j] / bc1;
                const double vhat = v[j] / bc2;
                p[j] -= hp.lr * (mhat / (std::sqrt(vhat) + hp.eps) + hp.weight_decay * p[j]);
            }
        };
        ref(ra, ma, va, ga);
        ref(rb, mb, vb, gb);
        for (std::size_t j = 0; j < 3; ++j) CHECK(a.at(j) == ra[j]);
        for (std::size_t j = 0; j < 2; ++j) CHECK(b.at(j) == rb[j]);
    }
    CHECK(st.t == 7);
}

TEST_CASE("zero gradient with zero decay leaves parameters alone") {
    Tensor p = Tensor::from_data({4}, {1.0, -2.0, 3.0, -4.0}, true);
    const std::vector<double> before(p.data().begin(), p.data().end());
    AdamState st;
    AdamParams hp;  // wd = 0, grad buffer never populated
    for (int i = 0; i < 5; ++i) adamw_step({p}, st, hp);
    CHECK(same_bits(std::vector<double>(p.data().begin(), p.data().end()), before));
}

TEST_CASE("pure decay shrinks by lr times wd times p") {
    Tensor p = Tensor::from_data({2}, {2.0, -8.0}, true);
    AdamState st;
    AdamParams hp;
    hp.lr = 0.1;
    hp.weight_decay = 0.5;
    adamw_step({p}, st, hp);
    CHECK(p.at(0) == 2.0 - 0.1 * 0.5 * 2.0);
    CHECK(p.at(1) == -8.0 - 0.1 * 0.5 * -8.0);
}

TEST_CASE("maximize climbs a concave bump it would otherwise descend") {
    // loss = -(w - 3)^2 has its peak at 3; ascent should walk there
    Tensor w = Tensor::from_data({1}, {0.0}, true);
    AdamState st;
    AdamParams hp;
    hp.lr = 0.05;
    for (int i = 0; i < 400; ++i) {
        backward(neg(squared_error(w, Tensor::from_data({1}, {3.0}, false))));
        adamw_step({w}, st, hp, /*maximize=*/true);
    }
    // adam hovers around the peak at the lr scale; reaching the neighborhood
    // from 3 away is the point
    CHECK(std::abs(w.at(0) - 3.0) < 0.2);
}

TEST_CASE("maximize flips only the gradient, not the decay") {
    Tensor up = Tensor::from_data({1}, {5.0}, true);
    Tensor down = Tensor::from_data({1}, {5.0}, true);
    AdamState s1, s2;
    AdamParams hp;
    hp.lr = 0.1;
    hp.weight_decay = 0.3;
    adamw_step({up}, s1, hp, true);    // zero grad: only decay acts
    adamw_step({down}, s2, hp, false);
    CHECK(up.at(0) == down.at(0));
    CHECK(up.at(0) < 5.0);
}

TEST_CASE("state and parameter lists must stay aligned") {
    Tensor a = Tensor::zeros({2}, true), b = Tensor::zeros({3}, true);
    AdamState st;
    adamw_step({a, b}, st, {});
    CHECK_THROWS_AS(adamw_step({a}, st, {}), std::invalid_argument);
    AdamState st2;
    adamw_step({a}, st2, {});
    CHECK_THROWS_AS(adamw_step({b}, st2, {}), std::invalid_argument);
}

TEST_CASE("global norm clipping rescales exactly to the bound") {
    Tensor a = Tensor::from_data({2}, {3.0, 0.0}, true);
    Tensor b = Tensor::from_data({1}, {4.0}, true);
    backward(add(mul_scalar(sum(mul(a, a)), 0.5), mul_scalar(sum(mul(b, b)), 0.5)));
    // grads are now a and b themselves: norm = 5
    clip_global_norm({a, b}, 2.5);
    double sq = 0;
    for (double g : a.grad()) sq += g * g;
    for (double g : b.grad()) sq += g * g;
    CHECK(std::sqrt(sq) == doctest::Approx(2.5).epsilon(1e-12));
    CHECK(a.grad()[0] == doctest::Approx(1.5).epsilon(1e-12));

    // below the bound: untouched
    clip_global_norm({a, b}, 100.0);
    CHECK(a.grad()[0] == doctest::Approx(1.5).epsilon(1e-12));
}

TEST_CASE("a one-dimensional regression fits to well under a thousandth") {
    Tensor w = Tensor::from_data({1, 1}, {0.0}, true);
    Tensor b = Tensor::from_data({1}, {0.0}, true);
    const std::vector<double> xs = {-1.0, -0.5, 0.0, 0.5, 1.0};
    std::vector<double> ys(5);
    for (std::size_t i = 0; i < 5; ++i) ys[i] = 1.4 * xs[i] - 0.2;
    Tensor x = Tensor::from_data({5, 1}, xs, false);
    Tensor y = Tensor::from_data({5}, ys, false);

    AdamState st;
    AdamParams hp;
    hp.lr = 0.05;
    double last = 1e9;
    for (int stp = 0; stp < 500; ++stp) {
        Tensor loss =
            mul_scalar(squared_error(reshape(linear(x, w, b), {5}), y), 1.0 / 5.0);
        last = loss.item();
        backward(loss);
        adamw_step({w, b}, st, hp);
    }
    CHECK(last < 1e-3);
    CHECK(w.at(0) == doctest::Approx(1.4).epsilon(0.05));
    CHECK(b.at(0) == doctest::Approx(-0.2).epsilon(0.05));
}

TEST_CASE("phase schedule cycles and collapses without pns") {
    CHECK(phase_at(0, true, true) == InterventionPhase::None);
    CHECK(phase_at(1, true, true) == InterventionPhase::SF);
    CHECK(phase_at(2, true, true) == InterventionPhase::NC);
    CHECK(phase_at(3, true, true) == InterventionPhase::None);
    CHECK(phase_at(4, true, true) == InterventionPhase::SF);
    for (std::size_t i = 0; i < 9; ++i) {
        CHECK(phase_at(i, false, true) == InterventionPhase::None);
        CHECK(phase_at(i, true, false) == InterventionPhase::None);
    }
}

TEST_CASE("the adversary never touches backbone or head") {
    Model m(small_cfg(true), 301);
    Dataset ds = generate(5, 3, 303, 16);
    std::vector<std::size_t> idx(ds.samples.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    const Tensor x = batch_of(ds, idx, 0, 8, nullptr);

    TrainConfig cfg;
    cfg.lr = 1e-2;
    TrainState ts(cfg);

    const auto before = m.to_records();
    adversary_step(m, x, ts, InterventionPhase::SF);
    adversary_step(m, x, ts, InterventionPhase::NC);
    const auto after = m.to_records();
    REQUIRE(before.size() == after.size());
    bool phi_moved = false, xi_moved = false;
    for (std::size_t i = 0; i < before.size(); ++i) {
        const bool is_head = before[i].name.find("phi") != std::string::npos ||
                             before[i].name.find("xi") != std::string::npos;
        if (!is_head) {
            CHECK(same_bits(before[i].values, after[i].values));
        } else if (!same_bits(before[i].values, after[i].values)) {
            if (before[i].name.find("phi") != std::string::npos) phi_moved = true;
            else xi_moved = true;
        }
    }
    CHECK(phi_moved);
    CHECK(xi_moved);

    CHECK_THROWS_AS(adversary_step(m, x, ts, InterventionPhase::None), std::invalid_argument);
    Model baseline(small_cfg(false), 305);
    CHECK_THROWS_AS(adversary_step(baseline, x, ts, InterventionPhase::SF),
                    std::invalid_argument);
}

TEST_CASE("phi ascent raises its branch risk over a burst of steps") {
    Model m(small_cfg(true), 307);
    Dataset ds = generate(5, 3, 309, 16);
    std::vector<std::size_t> idx(ds.samples.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    const Tensor x = batch_of(ds, idx, 0, 16, nullptr);

    TrainConfig cfg;
    cfg.lr = 5e-3;
    TrainState ts(cfg);
    const double first = adversary_step(m, x, ts, InterventionPhase::SF);
    double last = first;
    for (int i = 0; i < 60; ++i) last = adversary_step(m, x, ts, InterventionPhase::SF);
    CHECK(last > first);
}

TEST_CASE("spectral projection holds through adversary updates") {
    Model m(small_cfg(true), 311);
    Dataset ds = generate(5, 3, 313, 16);
    std::vector<std::size_t> idx(ds.samples.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    const Tensor x = batch_of(ds, idx, 0, 8, nullptr);

    TrainConfig cfg;
    cfg.lr = 1e-2;
    TrainState ts(cfg);
    for (int i = 0; i < 10; ++i) {
        adversary_step(m, x, ts, InterventionPhase::SF);
        adversary_step(m, x, ts, InterventionPhase::NC);
        for (const Tensor* w : {&m.heads().w_phi, &m.heads().w_xi}) {
            const double sigma = oracle::sigma_max(
                std::vector<double>(w->data().begin(), w->data().end()), 8, 8);
            CHECK(sigma <= 1.0 + 1e-6);
        }
    }
}

TEST_CASE("baseline fit is exactly a vanilla training loop") {
    const std::uint64_t seed = 317;
    Dataset ds = generate(6, 3, 319, 16);
    const SplitSpec spec = make_split(ds, 319);
    const auto [train, test] = apply_split(ds, spec);

    TrainConfig cfg;
    cfg.epochs = 2;
    cfg.batch_size = 8;
    cfg.lr = 1e-3;
    cfg.seed = seed;

    Model fitted(small_cfg(false), 321);
    fit(fitted, train, test, cfg);

    Model manual(small_cfg(false), 321);
    AdamState st;
    const AdamParams hp{cfg.lr, cfg.beta1, cfg.beta2, cfg.adam_eps, cfg.weight_decay};
    std::vector<std::size_t> idx(train.samples.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
        Rng shuffler(mix_seed(cfg.seed, 0xe90c + epoch));
        shuffler.shuffle(idx);
        for (std::size_t begin = 0; begin < idx.size(); begin += cfg.batch_size) {
            const std::size_t count = std::min(cfg.batch_size, idx.size() - begin);
            std::vector<double> labels;
            const Tensor x = batch_of(train, idx, begin, count, &labels);
            const Tensor y = Tensor::from_data({count}, labels, false);
            backward(mul_scalar(squared_error(manual.predict(x), y),
                                1.0 / static_cast<double>(count)));
            auto params = manual.backbone_params();
            clip_global_norm(params, cfg.grad_clip);
            adamw_step(params, st, hp, false);
        }
    }
    CHECK(records_equal(fitted.to_records(), manual.to_records()));
}

TEST_CASE("zero epochs return the initial weights and an empty curve") {
    Dataset ds = generate(5, 3, 323, 16);
    const SplitSpec spec = make_split(ds, 323);
    const auto [train, test] = apply_split(ds, spec);
    Model m(small_cfg(true), 325);
    const auto initial = m.to_records();
    TrainConfig cfg;
    cfg.epochs = 0;
    const FitResult res = fit(m, train, test, cfg);
    CHECK(res.curve.empty());
    CHECK(res.best_epoch == 0);
    CHECK(!res.best_srcc.has_value());
    CHECK(records_equal(res.best, initial));
    CHECK(records_equal(m.to_records(), initial));
}

TEST_CASE("fit is deterministic end to end") {
    Dataset ds = generate(6, 3, 331, 16);
    const SplitSpec spec = make_split(ds, 331);
    const auto [train, test] = apply_split(ds, spec);
    TrainConfig cfg;
    cfg.epochs = 2;
    cfg.batch_size = 8;
    cfg.lr = 1e-3;
    cfg.seed = 333;

    Model m1(small_cfg(true), 335), m2(small_cfg(true), 335);
    const FitResult r1 = fit(m1, train, test, cfg);
    const FitResult r2 = fit(m2, train, test, cfg);
    CHECK(records_equal(m1.to_records(), m2.to_records()));
    CHECK(records_equal(r1.best, r2.best));
    REQUIRE(r1.curve.size() == r2.curve.size());
    for (std::size_t i = 0; i < r1.curve.size(); ++i) {
        CHECK(r1.curve[i].mse == r2.curve[i].mse);
        CHECK(r1.curve[i].loss == r2.curve[i].loss);
        CHECK(r1.curve[i].srcc == r2.curve[i].srcc);
        CHECK(r1.curve[i].phase_counts == r2.curve[i].phase_counts);
    }
}

TEST_CASE("fit rejects degenerate inputs") {
    Dataset ds = generate(5, 3, 337, 16);
    const SplitSpec spec = make_split(ds, 337);
    const auto [train, test] = apply_split(ds, spec);
    Model m(small_cfg(true), 339);
    Dataset empty = train;
    empty.samples.clear();
    TrainConfig cfg;
    CHECK_THROWS_AS(fit(m, empty, test, cfg), std::invalid_argument);
    CHECK_THROWS_AS(fit(m, train, empty, cfg), std::invalid_argument);
    TrainConfig bad = cfg;
    bad.batch_size = 0;
    CHECK_THROWS_AS(fit(m, train, test, bad), std::invalid_argument);
    TrainConfig badlr = cfg;
    badlr.lr = 0.0;
    CHECK_THROWS_AS(fit(m, train, test, badlr), std::invalid_argument);
}

TEST_CASE("the training curve records both splits with phase tallies") {
    Dataset ds = generate(6, 3, 341, 16);
    const SplitSpec spec = make_split(ds, 341);
    const auto [train, test] = apply_split(ds, spec);
    TrainConfig cfg;
    cfg.epochs = 3;
    cfg.batch_size = 16;
    cfg.lr = 1e-3;
    Model m(small_cfg(true), 343);
    const FitResult res = fit(m, train, test, cfg);
    REQUIRE(res.curve.size() == 6);
    std::size_t train_rows = 0, test_rows = 0;
    for (const auto& row : res.curve) {
        if (row.split == "train") ++train_rows;
        if (row.split == "test") ++test_rows;
        CHECK(row.phase_counts.find("none=") != std::string::npos);
        CHECK(row.phase_counts.find("sf=") != std::string::npos);
        CHECK(row.phase_counts.find("nc=") != std::string::npos);
    }
    CHECK(train_rows == 3);
    CHECK(test_rows == 3);
    // per-epoch steps: 50 train samples / 16 -> 4 iterations cycling the phases
    CHECK(res.curve[0].phase_counts == std::string("none=2;sf=1;nc=1"));
    // pns off: every step is a plain minimization
    TrainConfig off = cfg;
    off.pns = false;
    off.epochs = 1;
    Model m2(small_cfg(true), 345);
    const FitResult r2 = fit(m2, train, test, off);
    CHECK(r2.curve[0].phase_counts == std::string("none=4;sf=0;nc=0"));
}

TEST_CASE("predictions do not depend on the batch size") {
    Dataset ds = generate(5, 3, 347, 16);
    Model m(small_cfg(true), 349);
    const auto p1 = predict_dataset(m, ds, 1);
    const auto p7 = predict_dataset(m, ds, 7);
    const auto pall = predict_dataset(m, ds, ds.samples.size());
    CHECK(same_bits(p1, p7));
    CHECK(same_bits(p1, pall));
}

TEST_CASE("best checkpoint tracks the peak test srcc") {
    Dataset ds = generate(6, 3, 351, 16);
    const SplitSpec spec = make_split(ds, 351);
    const auto [train, test] = apply_split(ds, spec);
    TrainConfig cfg;
    cfg.epochs = 4;
    cfg.batch_size = 16;
    cfg.lr = 2e-3;
    Model m(small_cfg(false), 353);
    const FitResult res = fit(m, train, test, cfg);
    REQUIRE(res.best_srcc.has_value());
    double peak = -2.0;
    std::size_t peak_epoch = 0;
    for (const auto& row : res.curve)
        if (row.split == "test" && row.srcc && *row.srcc > peak) {
            peak = *row.srcc;
            peak_epoch = row.epoch;
        }
    CHECK(res.best_srcc.value() == peak);
    CHECK(res.best_epoch == peak_epoch);

    Model reloaded(small_cfg(false), 1);
    reloaded.from_records(res.best);
    const MetricTriple mt = evaluate_model(reloaded, test, cfg.batch_size);
    CHECK(mt.srcc.value() == peak);
}
