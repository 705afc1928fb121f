#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "cprl/rng.hpp"
#include "cprl/spectral.hpp"
#include "oracles.hpp"

using namespace cprl;

TEST_CASE("identity matrix has unit sigma") {
    Tensor w = Tensor::zeros({3, 3});
    auto d = w.data_mut();
    d[0] = d[4] = d[8] = 1.0;
    PowerIterState st;
    CHECK(estimate_sigma_max(w, 50, st) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("diagonal matrix normalizes to sigma one") {
    Tensor w = Tensor::zeros({2, 2});
    auto d = w.data_mut();
    d[0] = 3.0;
    d[3] = 1.0;
    PowerIterState st;
    Tensor n = spectral_normalize(w, 100, st);
    CHECK(n.at(0) == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(n.at(3) == doctest::Approx(1.0 / 3.0).epsilon(1e-9));
    CHECK(n.at(1) == 0.0);
    CHECK(n.at(2) == 0.0);
    // original untouched
    CHECK(w.at(0) == 3.0);
}

TEST_CASE("power iteration matches an eigendecomposition oracle") {
    Rng rng(41);
    for (int rep = 0; rep < 20; ++rep) {
        std::vector<double> v(16);
        for (auto& x : v) x = rng.uniform(-2, 2);
        Tensor w = Tensor::from_data({4, 4}, v);
        PowerIterState st;
        const double est = estimate_sigma_max(w, 100, st);
        const double ref = oracle::sigma_max(v, 4, 4);
        CHECK(est == doctest::Approx(ref).epsilon(1e-6));
    }
}

TEST_CASE("rectangular shapes work both ways") {
    Rng rng(43);
    std::vector<double> v(12);
    for (auto& x : v) x = rng.uniform(-1, 1);
    PowerIterState s1, s2;
    Tensor tall = Tensor::from_data({4, 3}, v);
    Tensor wide = Tensor::from_data({3, 4}, v);
    const double ref_tall = oracle::sigma_max(v, 4, 3);
    const double ref_wide = oracle::sigma_max(v, 3, 4);
    CHECK(estimate_sigma_max(tall, 100, s1) == doctest::Approx(ref_tall).epsilon(1e-6));
    CHECK(estimate_sigma_max(wide, 100, s2) == doctest::Approx(ref_wide).epsilon(1e-6));
}

TEST_CASE("normalized matrix re-measures near one") {
    Rng rng(47);
    std::vector<double> v(30);
    for (auto& x : v) x = rng.uniform(-5, 5);
    PowerIterState st;
    Tensor n = spectral_normalize(Tensor::from_data({5, 6}, v), 100, st);
    PowerIterState fresh;
    const double sigma = estimate_sigma_max(n, 100, fresh);
    CHECK(sigma > 1.0 - 1e-6);
    CHECK(sigma < 1.0 + 1e-6);
}

TEST_CASE("zero matrix passes through unchanged") {
    Tensor w = Tensor::zeros({3, 4});
    PowerIterState st;
    Tensor n = spectral_normalize(w, 20, st);
    for (std::size_t i = 0; i < n.size(); ++i) CHECK(n.at(i) == 0.0);
    Tensor p = Tensor::zeros({3, 4});
    project_to_unit_sigma(p, st);
    for (std::size_t i = 0; i < p.size(); ++i) CHECK(p.at(i) == 0.0);
}

TEST_CASE("projection pins sigma at most one plus tolerance") {
    Rng rng(53);
    for (int rep = 0; rep < 10; ++rep) {
        std::vector<double> v(24);
        for (auto& x : v) x = rng.uniform(-3, 3);
        Tensor w = Tensor::from_data({4, 6}, v);
        PowerIterState st;
        project_to_unit_sigma(w, st);
        const double ref = oracle::sigma_max(
            std::vector<double>(w.data().begin(), w.data().end()), 4, 6);
        CHECK(ref <= 1.0 + 1e-6);
    }
}

TEST_CASE("projection keeps holding after incremental edits") {
    // mirrors the trainer: perturb, re-project with the warm state, stay bounded
    Rng rng(59);
    std::vector<double> v(16);
    for (auto& x : v) x = rng.uniform(-1, 1);
    Tensor w = Tensor::from_data({4, 4}, v);
    PowerIterState st;
    project_to_unit_sigma(w, st);
    for (int step = 0; step < 25; ++step) {
        auto d = w.data_mut();
        for (auto& x : d) x += rng.uniform(-0.05, 0.05);
        project_to_unit_sigma(w, st);
        const double ref = oracle::sigma_max(
            std::vector<double>(w.data().begin(), w.data().end()), 4, 4);
        CHECK(ref <= 1.0 + 1e-6);
    }
}

TEST_CASE("bad arguments are rejected") {
    PowerIterState st;
    Tensor w = Tensor::zeros({2, 2});
    CHECK_THROWS_AS(estimate_sigma_max(Tensor::zeros({4}), 10, st), std::invalid_argument);
    CHECK_THROWS_AS(estimate_sigma_max(Tensor::zeros({2, 2, 2}), 10, st), std::invalid_argument);
    CHECK_THROWS_AS(estimate_sigma_max(w, 0, st), std::invalid_argument);
    CHECK_THROWS_AS(estimate_sigma_max(w, -3, st), std::invalid_argument);
}
