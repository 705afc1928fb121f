#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include "cprl/cprl_layer.hpp"
#include "cprl/rng.hpp"
#include "oracles.hpp"

using namespace cprl;
using namespace cprl::ops;

namespace {

CprlConfig cfg_for(std::size_t k, double b, double tau) {
    CprlConfig c;
    c.channel_count = k;
    c.bias = b;
    c.softrank_temperature = tau;
    return c;
}

double sig(double z) { return 1.0 / (1.0 + std::exp(-z)); }

Tensor vec(std::vector<double> v, bool grad = false) {
    const std::size_t n = v.size();
    return Tensor::from_data({n}, std::move(v), grad);
}

}  // namespace

TEST_CASE("config validation") {
    CHECK_NOTHROW(validate(cfg_for(2, 0.0, 1e-6)));
    CHECK_THROWS_AS(validate(cfg_for(1, 0.4, 1.0)), std::invalid_argument);
    CHECK_THROWS_AS(validate(cfg_for(4, -0.1, 1.0)), std::invalid_argument);
    CHECK_THROWS_AS(validate(cfg_for(4, 1.1, 1.0)), std::invalid_argument);
    CHECK_THROWS_AS(validate(cfg_for(4, 0.4, 0.0)), std::invalid_argument);
    CHECK_THROWS_AS(channel_mask(Tensor::zeros({3}), cfg_for(4, 0.4, 1.0)),
                    std::invalid_argument);
}

TEST_CASE("equal channels gate at the bias point") {
    // equal inputs rank K/2 everywhere, so the exponent collapses to b*K
    for (const std::size_t k : {2ul, 4ul, 32ul}) {
        Tensor f = Tensor::full({k}, 0.7);
        Tensor m0 = channel_mask(f, cfg_for(k, 0.0, 0.5));
        Tensor m4 = channel_mask(f, cfg_for(k, 0.4, 0.5));
        for (std::size_t i = 0; i < k; ++i) {
            CHECK(m0.at(i) == doctest::Approx(0.5).epsilon(1e-12));
            CHECK(m4.at(i) == doctest::Approx(sig(0.4 * double(k))).epsilon(1e-12));
        }
    }
}

TEST_CASE("worked four-channel example") {
    Tensor f = vec({0.1, 0.2, 0.3, 0.4});
    Tensor m = channel_mask(f, cfg_for(4, 0.4, 1e-4));
    const double expected_exponents[4] = {0.1, 1.1, 2.1, 3.1};
    for (std::size_t i = 0; i < 4; ++i)
        CHECK(m.at(i) == doctest::Approx(sig(expected_exponents[i])).epsilon(1e-9));
}

TEST_CASE("strongest channel saturates toward one at half bias") {
    Tensor f = vec({0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 5.0});
    Tensor m = channel_mask(f, cfg_for(8, 0.5, 0.01));
    CHECK(m.at(7) > 0.999);
    CHECK(m.at(7) <= 1.0);
}

TEST_CASE("mask preserves the input ordering") {
    Rng rng(61);
    for (int rep = 0; rep < 50; ++rep) {
        std::vector<double> v(8);
        for (auto& x : v) x = rng.uniform(-2, 2);
        Tensor m = channel_mask(vec(v), cfg_for(8, 0.3, 0.7));
        for (std::size_t i = 0; i < 8; ++i)
            for (std::size_t j = 0; j < 8; ++j)
                if (v[i] > v[j]) CHECK(m.at(i) >= m.at(j));
    }
}

TEST_CASE("mask is permutation equivariant") {
    Rng rng(67);
    std::vector<double> v(6);
    for (auto& x : v) x = rng.uniform(-1, 1);
    std::vector<std::size_t> perm = {3, 0, 5, 1, 4, 2};
    std::vector<double> pv(6);
    for (std::size_t i = 0; i < 6; ++i) pv[i] = v[perm[i]];
    Tensor m = channel_mask(vec(v), cfg_for(6, 0.4, 0.9));
    Tensor pm = channel_mask(vec(pv), cfg_for(6, 0.4, 0.9));
    for (std::size_t i = 0; i < 6; ++i)
        CHECK(pm.at(i) == doctest::Approx(m.at(perm[i])).epsilon(1e-12));
}

TEST_CASE("mask ignores a common shift") {
    // integer inputs with an integer shift subtract exactly, so equality is bitwise
    Tensor a = vec({1.0, 4.0, 2.0, 8.0});
    Tensor b = vec({129.0, 132.0, 130.0, 136.0});
    Tensor ma = channel_mask(a, cfg_for(4, 0.4, 0.5));
    Tensor mb = channel_mask(b, cfg_for(4, 0.4, 0.5));
    for (std::size_t i = 0; i < 4; ++i) CHECK(ma.at(i) == mb.at(i));

    Rng rng(71);
    std::vector<double> v(8), shifted(8);
    for (std::size_t i = 0; i < 8; ++i) {
        v[i] = rng.uniform(-1, 1);
        shifted[i] = v[i] + 0.731;
    }
    Tensor mv = channel_mask(vec(v), cfg_for(8, 0.2, 0.3));
    Tensor ms = channel_mask(vec(shifted), cfg_for(8, 0.2, 0.3));
    for (std::size_t i = 0; i < 8; ++i)
        CHECK(mv.at(i) == doctest::Approx(ms.at(i)).epsilon(1e-12));
}

TEST_CASE("raising the bias never shrinks the mean mask") {
    Rng rng(73);
    const CprlConfig base = cfg_for(16, 0.0, 1.0);
    for (int rep = 0; rep < 100; ++rep) {
        std::vector<double> v(16);
        for (auto& x : v) x = rng.uniform(-3, 3);
        double prev = -1.0;
        for (int bi = 0; bi <= 5; ++bi) {
            CprlConfig c = base;
            c.bias = 0.1 * bi;
            Tensor m = channel_mask(vec(v), c);
            double mean = 0;
            for (std::size_t i = 0; i < 16; ++i) mean += m.at(i);
            mean /= 16;
            CHECK(mean >= prev);
            prev = mean;
        }
    }
}

TEST_CASE("tiny temperature recovers hard ranks") {
    Rng rng(79);
    for (int rep = 0; rep < 25; ++rep) {
        std::vector<double> v(10);
        for (auto& x : v) x = rng.uniform(-5, 5);  // distinct w.p. 1
        Tensor r = soft_rank(vec(v), 1e-6);
        const auto hard = oracle::ranks(v);  // 1-based average ranks
        for (std::size_t i = 0; i < 10; ++i)
            CHECK(std::llround(r.at(i) + 0.5) == std::llround(hard[i]));
    }
}

TEST_CASE("identity content head reproduces the features") {
    const std::size_t k = 6;
    Rng rng(83);
    InterventionHeads heads;
    heads.init(k, rng);
    {
        auto w = heads.w_phi.data_mut();
        std::fill(w.begin(), w.end(), 0.0);
        for (std::size_t i = 0; i < k; ++i) w[i * k + i] = 1.0;
        auto b = heads.b_phi.data_mut();
        std::fill(b.begin(), b.end(), 0.0);
    }
    std::vector<double> fv(k);
    for (auto& x : fv) x = rng.uniform(-2, 2);
    Tensor f = vec(fv);
    Tensor m = channel_mask(f, cfg_for(k, 0.4, 1.0));
    Tensor c = intervene_c(f, m, heads);
    REQUIRE(c.shape() == Shape{k});
    for (std::size_t i = 0; i < k; ++i)
        CHECK(c.at(i) == doctest::Approx(f.at(i)).epsilon(1e-12));
}

TEST_CASE("zero style head leaves only the passthrough") {
    const std::size_t k = 5;
    Rng rng(89);
    InterventionHeads heads;
    heads.init(k, rng);
    {
        auto w = heads.w_xi.data_mut();
        std::fill(w.begin(), w.end(), 0.0);
        auto b = heads.b_xi.data_mut();
        std::fill(b.begin(), b.end(), 0.0);
    }
    std::vector<double> fv(k);
    for (auto& x : fv) x = rng.uniform(-2, 2);
    Tensor f = vec(fv);
    Tensor m = channel_mask(f, cfg_for(k, 0.3, 0.8));

    Tensor s = intervene_s(f, m, heads, false);
    for (std::size_t i = 0; i < k; ++i)
        CHECK(s.at(i) == doctest::Approx(f.at(i) * m.at(i)).epsilon(1e-12));

    Tensor sc = intervene_s(f, m, heads, true);
    for (std::size_t i = 0; i < k; ++i)
        CHECK(sc.at(i) == doctest::Approx(f.at(i) * (1.0 - m.at(i))).epsilon(1e-12));
}

TEST_CASE("interventions match a scalar-loop oracle") {
    const std::size_t k = 7;
    Rng rng(97);
    InterventionHeads heads;
    heads.init(k, rng);
    const auto wp = heads.w_phi.data();
    const auto wx = heads.w_xi.data();

    for (int rep = 0; rep < 5; ++rep) {
        std::vector<double> fv(2 * k), mv(2 * k);
        for (auto& x : fv) x = rng.uniform(-2, 2);
        for (auto& x : mv) x = rng.uniform(0, 1);
        Tensor f = Tensor::from_data({2, k}, fv);
        Tensor m = Tensor::from_data({2, k}, mv);
        Tensor c = intervene_c(f, m, heads);
        Tensor s = intervene_s(f, m, heads, false);
        Tensor s2 = intervene_s(f, m, heads, true);
        REQUIRE(c.shape() == Shape{2, k});
        for (std::size_t r = 0; r < 2; ++r) {
            for (std::size_t i = 0; i < k; ++i) {
                double phi = 0, xi = 0;
                for (std::size_t j = 0; j < k; ++j) {
                    phi += wp[i * k + j] * fv[r * k + j];
                    xi += wx[i * k + j] * fv[r * k + j];
                }
                const double fm = fv[r * k + i], mm = mv[r * k + i];
                CHECK(c.at(r * k + i) ==
                      doctest::Approx(phi * (1 - mm) + fm * mm).epsilon(1e-12));
                CHECK(s.at(r * k + i) == doctest::Approx(xi * mm + fm * mm).epsilon(1e-12));
                CHECK(s2.at(r * k + i) ==
                      doctest::Approx(xi * mm + fm * (1 - mm)).epsilon(1e-12));
            }
        }
    }
}

TEST_CASE("fresh heads start inside the unit spectral ball") {
    Rng rng(101);
    InterventionHeads heads;
    heads.init(12, rng);
    const auto measure = [](const Tensor& w) {
        return oracle::sigma_max(std::vector<double>(w.data().begin(), w.data().end()), 12, 12);
    };
    CHECK(measure(heads.w_phi) <= 1.0 + 1e-6);
    CHECK(measure(heads.w_xi) <= 1.0 + 1e-6);
}

TEST_CASE("risk vanishes when both branches agree") {
    Tensor y = vec({0.2, 0.8, 0.5});
    Tensor yb = vec({0.3, 0.6, 0.9});
    CHECK(pns_risk(yb, yb, y).item() == 0.0);
}

TEST_CASE("risk by hand on a batch of three") {
    Tensor y = vec({0.0, 1.0, 0.5});
    Tensor yc = vec({0.1, 0.9, 0.5});
    Tensor ys = vec({0.5, 0.5, 0.0});
    // mean((yc-y)^2) = (0.01+0.01+0)/3, mean((ys-y)^2) = (0.25+0.25+0.25)/3
    const double want = (0.02 - 0.75) / 3.0;
    CHECK(pns_risk(yc, ys, y).item() == doctest::Approx(want).epsilon(1e-15));

    CHECK(pns_risk(yc, ys, y).item() ==
          doctest::Approx(-oracle::mean_sq({0.5, 0.5, 0.0}, {0.0, 1.0, 0.5}) +
                          oracle::mean_sq({0.1, 0.9, 0.5}, {0.0, 1.0, 0.5}))
              .epsilon(1e-15));
    CHECK_THROWS_AS(pns_risk(yc, vec({1.0, 2.0}), y), std::invalid_argument);
}

TEST_CASE("gradients flow through the gated activation") {
    Rng rng(103);
    const CprlConfig cfg = cfg_for(6, 0.4, 0.8);
    Tensor f = Tensor::from_data({6}, {0.3, -1.2, 0.8, 0.1, -0.5, 1.7}, true);
    const double err = oracle::gradcheck([&] { return sum(sigmoid(activate(f, cfg))); }, f);
    CHECK(err < 1e-4);

    InterventionHeads heads;
    heads.init(6, rng);
    const double errc = oracle::gradcheck(
        [&] {
            Tensor m = channel_mask(f, cfg);
            return mean(squared_error(intervene_c(f, m, heads), detach(f)));
        },
        heads.w_phi);
    CHECK(errc < 1e-4);
}
