#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "dimkit/instruments.hpp"
#include "dimkit/portfolio_spec.hpp"
#include "dimkit/rng.hpp"

using namespace dimkit;

namespace {

YieldCurve flat_curve(double y) {
    YieldCurve c;
    c.yields.fill(y);
    return c;
}

YieldCurve random_curve(rng::Stream& s) {
    YieldCurve c;
    for (auto& y : c.yields) y = -0.01 + 0.06 * s.next_uniform01();
    return c;
}

}  // namespace

TEST_CASE("make_schedule lays exact fractional-year grids", "[instruments]") {
    const Schedule s = make_schedule(1.0, 6.0, 4);
    REQUIRE(s.n_periods() == 20);
    CHECK(s.times.front() == 1.0);
    CHECK(s.times.back() == 6.0);
    CHECK(s.times[1] == 1.25);
    for (const double a : s.accruals) CHECK(a == 0.25);
    CHECK_NOTHROW(s.validate());
    CHECK_THROWS_AS(make_schedule(0.0, 1.1, 2), std::invalid_argument);
    CHECK_THROWS_AS(make_schedule(2.0, 2.0, 2), std::invalid_argument);
}

TEST_CASE("annuity", "[instruments]") {
    SECTION("unit discounting sums the accruals") {
        const Schedule s = make_schedule(0.0, 1.0, 2);
        CHECK(annuity(flat_curve(0.0), s, 0.0) == Catch::Approx(1.0).epsilon(1e-15));
    }
    SECTION("flat curve closed form") {
        const Schedule s = make_schedule(0.0, 2.0, 1);
        const double expect = std::exp(-0.05) + std::exp(-0.10);
        CHECK(annuity(flat_curve(0.05), s, 0.0) == Catch::Approx(expect).epsilon(1e-15));
    }
    SECTION("mid-life keeps only remaining periods") {
        const Schedule s = make_schedule(0.0, 3.0, 2);
        const YieldCurve c = flat_curve(0.021);
        const double t = 1.3;
        double expect = 0.0;
        for (const double pay : {1.5, 2.0, 2.5, 3.0})
            expect += 0.5 * std::exp(-0.021 * (pay - t));
        CHECK(annuity(c, s, t) == Catch::Approx(expect).epsilon(1e-14));
    }
    SECTION("expired schedule gives an empty sum") {
        const Schedule s = make_schedule(0.0, 1.0, 2);
        CHECK(annuity(flat_curve(0.05), s, 1.0) == 0.0);
        CHECK(annuity(flat_curve(0.05), s, 2.0) == 0.0);
    }
}

TEST_CASE("swap_rate", "[instruments]") {
    SECTION("pricing at the swap rate gives zero") {
        rng::Stream s(5150);
        for (int trial = 0; trial < 20; ++trial) {
            const YieldCurve c = random_curve(s);
            SwapSpec spec;
            spec.notional = 100.0;
            spec.payer = 1;
            spec.fixed_schedule = make_schedule(0.5, 4.5, 2);
            spec.float_schedule = make_schedule(0.5, 4.5, 4);
            spec.fixed_rate = swap_rate(c, spec, 0.0);
            CHECK(std::abs(price_swap(c, spec, 0.0)) < 1e-12 * spec.notional);
        }
    }
    SECTION("independent evaluation on a Nelson-Siegel curve") {
        const YieldCurve c = ns_curve(NelsonSiegelParams{0.03, 0.01, 0.005, 1.37});
        SwapSpec spec;
        spec.fixed_schedule = make_schedule(1.0, 6.0, 2);
        spec.float_schedule = make_schedule(1.0, 6.0, 4);
        // Scalar oracle with its own interpolation and discounting.
        auto df = [&](double tau) {
            if (tau == 0.0) return 1.0;
            double y = c.yields.back();
            if (tau <= c.grid.tenors.front()) {
                y = c.yields.front();
            } else {
                for (std::size_t k = 0; k + 1 < kNumTenors; ++k)
                    if (tau > c.grid.tenors[k] && tau <= c.grid.tenors[k + 1]) {
                        const double u = (tau - c.grid.tenors[k]) /
                                         (c.grid.tenors[k + 1] - c.grid.tenors[k]);
                        y = c.yields[k] + u * (c.yields[k + 1] - c.yields[k]);
                    }
            }
            return std::exp(-y * tau);
        };
        double annuity_oracle = 0.0;
        for (std::size_t k = 0; k < spec.fixed_schedule.n_periods(); ++k)
            annuity_oracle += spec.fixed_schedule.accruals[k] * df(spec.fixed_schedule.times[k + 1]);
        double float_oracle = 0.0;
        for (std::size_t k = 0; k < spec.float_schedule.n_periods(); ++k) {
            const double tau = spec.float_schedule.accruals[k];
            const double p_reset = df(spec.float_schedule.times[k]);
            const double p_pay = df(spec.float_schedule.times[k + 1]);
            float_oracle += tau * p_pay * ((p_reset / p_pay - 1.0) / tau);
        }
        CHECK(swap_rate(c, spec, 0.0) ==
              Catch::Approx(float_oracle / annuity_oracle).epsilon(1e-13));
    }
    SECTION("expired swap is rejected") {
        SwapSpec spec;
        spec.fixed_schedule = make_schedule(0.0, 1.0, 2);
        spec.float_schedule = make_schedule(0.0, 1.0, 4);
        CHECK_THROWS_AS(swap_rate(flat_curve(0.02), spec, 1.0), std::runtime_error);
    }
}

TEST_CASE("price_swap", "[instruments]") {
    SECTION("single-period closed form") {
        const YieldCurve c = flat_curve(0.025);
        SwapSpec spec;
        spec.notional = 250.0;
        spec.payer = 1;
        spec.fixed_rate = 0.02;
        spec.fixed_schedule = make_schedule(0.0, 0.5, 2);
        spec.float_schedule = make_schedule(0.0, 0.5, 2);
        const double df = std::exp(-0.025 * 0.5);
        const double fwd = (1.0 / df - 1.0) / 0.5;
        const double expect = 250.0 * 0.5 * df * (fwd - 0.02);
        CHECK(price_swap(c, spec, 0.0) == Catch::Approx(expect).epsilon(1e-14));
    }
    SECTION("payer and receiver are exact negations") {
        rng::Stream s(99);
        FixingStore fixings;
        fixings.set(0.5, 0.75, 0.0198);  // in-flight period at t = 0.6
        for (int trial = 0; trial < 10; ++trial) {
            const YieldCurve c = random_curve(s);
            SwapSpec spec;
            spec.notional = 100.0;
            spec.fixed_rate = 0.021;
            spec.fixed_schedule = make_schedule(0.0, 5.0, 2);
            spec.float_schedule = make_schedule(0.0, 5.0, 4);
            spec.payer = 1;
            const double v_pay = price_swap(c, spec, 0.6, fixings);
            spec.payer = -1;
            const double v_rec = price_swap(c, spec, 0.6, fixings);
            CHECK(v_pay == -v_rec);  // bit-exact sign flip
        }
    }
    SECTION("linearity in notional is exact") {
        const YieldCurve c = flat_curve(0.013);
        SwapSpec spec;
        spec.fixed_rate = 0.015;
        spec.fixed_schedule = make_schedule(0.0, 3.0, 2);
        spec.float_schedule = make_schedule(0.0, 3.0, 4);
        spec.notional = 1.0;
        const double unit = price_swap(c, spec, 0.0);
        spec.notional = 4.0;
        CHECK(price_swap(c, spec, 0.0) == 4.0 * unit);
    }
    SECTION("in-flight period uses the stored fixing") {
        const YieldCurve c = flat_curve(0.02);
        SwapSpec spec;
        spec.notional = 100.0;
        spec.fixed_rate = 0.02;
        spec.fixed_schedule = make_schedule(0.0, 1.0, 2);
        spec.float_schedule = make_schedule(0.0, 1.0, 4);
        const double t = 0.1;  // inside the first quarter
        CHECK_THROWS_WITH(price_swap(c, spec, t), Catch::Matchers::ContainsSubstring("0.0"));
        FixingStore fixings;
        fixings.set(0.0, 0.25, 0.0234);
        const double v = price_swap(c, spec, t, fixings);
        // Oracle: fixed first-period coupon plus forward periods minus fixed leg.
        double float_leg = 0.25 * discount_factor(c, 0.25 - t) * 0.0234;
        for (const double reset : {0.25, 0.5, 0.75}) {
            const double p_reset = discount_factor(c, reset - t);
            const double p_pay = discount_factor(c, reset + 0.25 - t);
            float_leg += 0.25 * p_pay * ((p_reset / p_pay - 1.0) / 0.25);
        }
        const double fixed_leg = 0.02 * annuity(c, spec.fixed_schedule, t);
        CHECK(v == Catch::Approx(100.0 * (float_leg - fixed_leg)).epsilon(1e-13));
    }
    SECTION("expired swap prices to zero") {
        SwapSpec spec;
        spec.fixed_rate = 0.02;
        spec.fixed_schedule = make_schedule(0.0, 1.0, 2);
        spec.float_schedule = make_schedule(0.0, 1.0, 4);
        CHECK(price_swap(flat_curve(0.02), spec, 1.0) == 0.0);
    }
}

TEST_CASE("price_portfolio", "[instruments]") {
    SECTION("empty portfolio") {
        CHECK(price_portfolio(flat_curve(0.02), {}, 0.0) == 0.0);
    }
    SECTION("mirrored swaps cancel") {
        const YieldCurve c = flat_curve(0.024);
        SwapSpec a;
        a.fixed_rate = 0.02;
        a.fixed_schedule = make_schedule(0.0, 4.0, 2);
        a.float_schedule = make_schedule(0.0, 4.0, 4);
        SwapSpec b = a;
        b.payer = -1;
        CHECK(price_portfolio(c, {a, b}, 0.0) == 0.0);
    }
    SECTION("six-swap ATM portfolio prices to zero at inception") {
        const YieldCurve c = ns_curve(NelsonSiegelParams{0.025, 0.005, 0.003, 1.37});
        const Portfolio pf = resolve_portfolio(six_swap_template(), c);
        REQUIRE(pf.size() == 6);
        CHECK(std::abs(price_portfolio(c, pf, 0.0)) < 6.0 * 1e-12 * 100.0);
    }
    SECTION("portfolio value decomposes into constituents") {
        rng::Stream s(1234);
        const YieldCurve c = random_curve(s);
        Portfolio pf;
        for (int i = 0; i < 4; ++i) {
            SwapSpec spec;
            spec.notional = 50.0 + 25.0 * i;
            spec.payer = (i % 2) ? -1 : 1;
            spec.fixed_rate = 0.01 + 0.004 * i;
            spec.fixed_schedule = make_schedule(0.0, 2.0 + i, 2);
            spec.float_schedule = make_schedule(0.0, 2.0 + i, 4);
            pf.push_back(spec);
        }
        FixingStore fixings;
        fixings.set(0.25, 0.5, 0.0172);  // shared in-flight quarter at t = 0.3
        double sum = 0.0;
        for (const auto& spec : pf) sum += price_swap(c, spec, 0.3, fixings);
        CHECK(price_portfolio(c, pf, 0.3, fixings) == Catch::Approx(sum).margin(1e-12));
    }
}

TEST_CASE("portfolio template resolution", "[instruments]") {
    const YieldCurve c = ns_curve(NelsonSiegelParams{0.02, 0.006, 0.002, 1.37});
    SECTION("ATM plus spread shifts the strike") {
        const auto tmpl = single_swap_template();
        const Portfolio atm = resolve_portfolio(tmpl, c, 0.0, 0.0);
        const Portfolio itm = resolve_portfolio(tmpl, c, 0.0, 0.001);
        CHECK(itm[0].fixed_rate == Catch::Approx(atm[0].fixed_rate + 0.001).epsilon(1e-12));
        CHECK(std::abs(price_swap(c, atm[0], 0.0)) < 1e-12 * atm[0].notional);
    }
    SECTION("fixed strikes pass through") {
        SwapTemplate t;
        t.mode = StrikeMode::fixed;
        t.strike = 0.0234;
        t.start = 0.0;
        t.maturity = 3.0;
        const Portfolio pf = resolve_portfolio({t}, c);
        CHECK(pf[0].fixed_rate == 0.0234);
    }
}
