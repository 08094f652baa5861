#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "dimkit/ratemodel.hpp"
#include "dimkit/rng.hpp"

using namespace dimkit;

TEST_CASE("evolve is the exact OU transition", "[ratemodel]") {
    VasicekParams p{0.05, 0.0, 0.03, 0.04};
    SECTION("deterministic decay with sigma = 0") {
        ShortRateState s{0.0, 0.01, 0.04};
        const auto out = evolve(p, s, 1.0, 1.7);  // draw is irrelevant at sigma = 0
        CHECK(out.x == Catch::Approx(0.01 * std::exp(-0.05)).epsilon(1e-15));
        CHECK(out.t == 1.0);
        CHECK(out.r == Catch::Approx(out.x + p.theta).epsilon(1e-15));
    }
    SECTION("z = 0 decays regardless of sigma") {
        VasicekParams q{0.2, 0.015, 0.03, 0.04};
        ShortRateState s{0.5, -0.007, 0.023};
        const auto out = evolve(q, s, 0.25, 0.0);
        CHECK(out.x == Catch::Approx(-0.007 * std::exp(-0.05)).epsilon(1e-14));
    }
    SECTION("step must be positive and draw finite") {
        ShortRateState s{0.0, 0.0, 0.03};
        CHECK_THROWS_AS(evolve(p, s, 0.0, 0.0), std::domain_error);
        CHECK_THROWS_AS(evolve(p, s, -0.1, 0.0), std::domain_error);
        CHECK_THROWS_AS(evolve(p, s, 0.1, std::nan("")), std::domain_error);
    }
}

TEST_CASE("evolve moments match the OU law", "[ratemodel]") {
    const double a = 0.05, sigma = 0.01, h = 0.25, x0 = 0.02;
    VasicekParams p{a, sigma, 0.03, x0 + 0.03};
    const std::size_t n = 100000;
    double sum = 0.0, sumsq = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double z = rng::normal_draw(20240601, 0, i, 0);
        const auto out = evolve(p, ShortRateState{0.0, x0, x0 + 0.03}, h, z);
        sum += out.x;
        sumsq += out.x * out.x;
    }
    const double mean = sum / n;
    const double var = sumsq / n - mean * mean;
    const double mean_exact = x0 * std::exp(-a * h);
    const double var_exact = sigma * sigma * (1.0 - std::exp(-2.0 * a * h)) / (2.0 * a);
    const double se_mean = std::sqrt(var_exact / n);
    const double se_var = var_exact * std::sqrt(2.0 / (n - 1.0));
    CHECK(std::abs(mean - mean_exact) < 4.0 * se_mean);
    CHECK(std::abs(var - var_exact) < 4.0 * se_var);
}

TEST_CASE("zcb_price basics", "[ratemodel]") {
    SECTION("unit price at T = t") {
        VasicekParams p{0.05, 0.01, 0.03, 0.02};
        const auto s = initial_state(p);
        CHECK(zcb_price(p, s, 0.0) == 1.0);
        HullWhiteParams hw{0.025, 0.0075, {0.03, 0.01, 0.005, 1.37}};
        const auto sh = initial_state(hw);
        CHECK(zcb_price(hw, sh, 0.0) == 1.0);
    }
    SECTION("maturity before valuation is rejected") {
        VasicekParams p{0.05, 0.01, 0.03, 0.02};
        ShortRateState s{1.0, 0.0, 0.03};
        CHECK_THROWS_AS(zcb_price(p, s, 0.5), std::domain_error);
    }
}

TEST_CASE("Vasicek sigma=0 price equals the deterministic discount", "[ratemodel]") {
    VasicekParams p{0.07, 0.0, 0.035, 0.015};
    const auto s = initial_state(p);
    // Simpson quadrature over the deterministic mean path r(u).
    auto r_det = [&](double u) { return p.theta + (p.r0 - p.theta) * std::exp(-p.a * u); };
    for (const double T : {1.0, 5.0, 12.0}) {
        const int n = 2000;
        const double h = T / n;
        double integral = r_det(0.0) + r_det(T);
        for (int i = 1; i < n; ++i) integral += (i % 2 ? 4.0 : 2.0) * r_det(i * h);
        integral *= h / 3.0;
        CHECK(zcb_price(p, s, T) == Catch::Approx(std::exp(-integral)).epsilon(1e-10));
    }
}

TEST_CASE("Hull-White fits the initial discount curve", "[ratemodel]") {
    HullWhiteParams p{0.025, 0.0075, {0.03, 0.01, 0.005, 1.37}};
    const auto s = initial_state(p);
    for (const double T : {1.0, 5.0, 30.0}) {
        const double target = std::exp(-ns_yield(p.ns, T) * T);
        CHECK(zcb_price(p, s, T) == Catch::Approx(target).epsilon(1e-12));
    }
    SECTION("all 12 model yields reproduce the NS curve at t0") {
        const YieldCurve c = model_yields(p, s);
        for (std::size_t k = 0; k < kNumTenors; ++k)
            CHECK(c.yields[k] == Catch::Approx(ns_yield(p.ns, c.grid.tenors[k])).margin(1e-12));
    }
}

TEST_CASE("model_yields consistency", "[ratemodel]") {
    SECTION("Vasicek sigma=0 with r0=theta is flat") {
        VasicekParams p{0.5, 0.0, 0.03, 0.03};
        const YieldCurve c = model_yields(p, initial_state(p));
        for (std::size_t k = 0; k < kNumTenors; ++k)
            CHECK(c.yields[k] == Catch::Approx(0.03).epsilon(1e-13));
    }
    SECTION("definitional round trip exp(-Y tau) = P") {
        VasicekParams p{0.05, 0.012, 0.028, 0.017};
        ShortRateState s = initial_state(p);
        s = evolve(p, s, 0.5, 0.7);
        const YieldCurve c = model_yields(p, s);
        for (std::size_t k = 0; k < kNumTenors; ++k) {
            const double tau = c.grid.tenors[k];
            CHECK(std::exp(-c.yields[k] * tau) ==
                  Catch::Approx(zcb_price(p, s, s.t + tau)).epsilon(1e-14));
        }
    }
    SECTION("Hull-White yields drift toward the forward curve at later times") {
        HullWhiteParams p{0.03, 0.004, {0.025, 0.008, 0.004, 1.37}};
        ShortRateState s = initial_state(p);
        s = evolve(p, s, 2.0, 0.0);  // deterministic mean path
        const YieldCurve c = model_yields(p, s);
        for (std::size_t k = 0; k < kNumTenors; ++k) {
            const double tau = c.grid.tenors[k];
            CHECK(std::exp(-c.yields[k] * tau) ==
                  Catch::Approx(zcb_price(p, s, s.t + tau)).epsilon(1e-14));
        }
    }
}

TEST_CASE("discounted money market account is a martingale", "[ratemodel][slow]") {
    // Desk-size check; the acceptance suite runs the full-size version.
    const double T = 2.0;
    const int steps = 64;
    const double h = T / steps;
    const std::size_t m = 1 << 13;

    auto run = [&](const auto& model) {
        double sum = 0.0, sumsq = 0.0;
        for (std::size_t j = 0; j < m; ++j) {
            ShortRateState s = initial_state(model);
            double integral = 0.0;
            for (int i = 0; i < steps; ++i) {
                integral += s.r * h;
                s = evolve(model, s, h, rng::normal_draw(77, 0, j, static_cast<std::uint64_t>(i)));
            }
            const double v = std::exp(-integral);
            sum += v;
            sumsq += v * v;
        }
        const double mean = sum / static_cast<double>(m);
        const double var = sumsq / static_cast<double>(m) - mean * mean;
        const double se = std::sqrt(var / static_cast<double>(m));
        const double target = zcb_price(model, initial_state(model), T);
        CAPTURE(mean, target, se);
        CHECK(std::abs(mean - target) < 3.0 * se + 2e-5);  // 3 SE plus O(h) slack
    };
    run(VasicekParams{0.05, 0.01, 0.03, 0.02});
    run(HullWhiteParams{0.025, 0.0075, {0.03, 0.01, 0.005, 1.37}});
}
