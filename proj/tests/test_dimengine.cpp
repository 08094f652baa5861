#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "dimkit/dimengine.hpp"
#include "dimkit/portfolio_spec.hpp"

using namespace dimkit;

namespace {

SimmConfig engine_simm() {
    SimmConfig cfg;
    cfg.risk_weights = {109, 105, 90, 71, 66, 66, 64, 60, 60, 61, 61, 67};
    for (std::size_t i = 0; i < kNumTenors; ++i)
        for (std::size_t j = 0; j < kNumTenors; ++j)
            cfg.correlations[i][j] =
                (i == j) ? 1.0
                         : 0.95 * std::exp(-0.25 * std::abs(static_cast<double>(i) -
                                                            static_cast<double>(j)));
    validate_simm_config(cfg);
    return cfg;
}

template <class Model>
Portfolio resolved_single_swap(const Model& model, double delta = 0.0) {
    const auto s0 = initial_state(model);
    return resolve_portfolio(single_swap_template(), model_yields(model, s0), 0.0, delta);
}

// Replays the engine's path recursion through the public pricing API:
// evolve / model_yields / price_portfolio / pv01_sensitivities / delta_margin,
// consuming the same counter-RNG draws.
template <class Model>
std::vector<double> replay_path(const Model& model, const Portfolio& pf,
                                const SimulationGrid& grid, const SimmConfig& simm,
                                std::uint64_t seed, std::uint64_t state_idx,
                                std::uint64_t path_idx) {
    ShortRateState state = initial_state(model);
    FixingStore fixings;
    // Fixings observed at t0 for spot-starting periods.
    {
        const YieldCurve c0 = model_yields(model, state);
        for (const auto& swap : pf)
            for (std::size_t k = 0; k < swap.float_schedule.n_periods(); ++k)
                if (swap.float_schedule.times[k] == 0.0) {
                    const double pay = swap.float_schedule.times[k + 1];
                    const double df = discount_factor(c0, pay);
                    fixings.set(0.0, pay, (1.0 / df - 1.0) / swap.float_schedule.accruals[k]);
                }
    }
    double integral = 0.0;
    std::vector<double> out;
    double t_prev = 0.0;
    for (std::size_t i = 0; i < grid.times.size(); ++i) {
        const double t = grid.times[i];
        // Resets inside the step, for periods still alive at t.
        std::vector<std::pair<double, std::pair<double, double>>> events;  // u -> (pay, accrual)
        for (const auto& swap : pf)
            for (std::size_t k = 0; k < swap.float_schedule.n_periods(); ++k) {
                const double reset = swap.float_schedule.times[k];
                const double pay = swap.float_schedule.times[k + 1];
                if (reset > t_prev && reset <= t && pay > t)
                    events.push_back({reset, {pay, swap.float_schedule.accruals[k]}});
            }
        std::sort(events.begin(), events.end(),
                  [](const auto& a, const auto& b) { return a.first < b.first; });
        std::uint64_t sub = 0;
        const double r_prev = state.r;
        for (const auto& [u, period] : events) {
            if (u == t) break;  // fixed after the final transition below
            if (u > state.t) {
                const double z = rng::normal_draw(seed, state_idx, path_idx, i + 1, sub++);
                state = evolve(model, state, u - state.t, z);
            }
            const YieldCurve cu = model_yields(model, state);
            const double df = discount_factor(cu, period.first - u);
            fixings.set(u, period.first, (1.0 / df - 1.0) / period.second);
        }
        const double z = rng::normal_draw(seed, state_idx, path_idx, i + 1, sub);
        state = evolve(model, state, t - state.t, z);
        integral += r_prev * grid.h;
        const YieldCurve curve = model_yields(model, state);
        for (const auto& [u, period] : events)
            if (u == t) {
                const double df = discount_factor(curve, period.first - t);
                fixings.set(t, period.first, (1.0 / df - 1.0) / period.second);
            }
        const auto sens = pv01_sensitivities(
            [&](const YieldCurve& c) { return price_portfolio(c, pf, t, fixings); }, curve);
        out.push_back(delta_margin(sens, simm) * std::exp(-integral));
        t_prev = t;
    }
    return out;
}

}  // namespace

TEST_CASE("simulation grid", "[dimengine]") {
    const auto g = SimulationGrid::regular(160, 6.0);
    CHECK(g.times.size() == 160);
    CHECK(g.times.back() == 6.0);
    CHECK(g.h == Catch::Approx(0.0375).epsilon(1e-15));
    CHECK_THROWS_AS(SimulationGrid::regular(0, 6.0), std::invalid_argument);
    CHECK_THROWS_AS(SimulationGrid::regular(10, -1.0), std::invalid_argument);
}

TEST_CASE("simulate_im_path basics", "[dimengine]") {
    const VasicekParams model{0.05, 0.01, 0.03, 0.01};
    const auto simm = engine_simm();
    const auto grid = SimulationGrid::regular(12, 6.0);

    SECTION("zero portfolio gives an all-zero path") {
        const auto res =
            simulate_im_path(model, initial_state(model), {}, grid, simm, 404, 0, 0);
        for (const double v : res.discounted_im) CHECK(v == 0.0);
    }
    SECTION("zero notional stays finite and exactly zero") {
        auto tmpl = single_swap_template(0.0);
        const Portfolio pf = resolve_portfolio(tmpl, model_yields(model, initial_state(model)));
        const auto res = simulate_im_path(model, initial_state(model), pf, grid, simm, 404, 0, 0);
        for (const double v : res.discounted_im) {
            CHECK(v == 0.0);
            CHECK(std::isfinite(v));
        }
    }
    SECTION("pinned seed reproduces bit-identically") {
        const Portfolio pf = resolved_single_swap(model);
        const auto a = simulate_im_path(model, initial_state(model), pf, grid, simm, 2024, 3, 5);
        const auto b = simulate_im_path(model, initial_state(model), pf, grid, simm, 2024, 3, 5);
        for (std::size_t i = 0; i < a.discounted_im.size(); ++i)
            CHECK(a.discounted_im[i] == b.discounted_im[i]);
        const auto c = simulate_im_path(model, initial_state(model), pf, grid, simm, 2025, 3, 5);
        bool any_diff = false;
        for (std::size_t i = 0; i < a.discounted_im.size(); ++i)
            any_diff = any_diff || (a.discounted_im[i] != c.discounted_im[i]);
        CHECK(any_diff);
    }
    SECTION("non-negative everywhere") {
        const Portfolio pf = resolved_single_swap(model, 0.001);
        for (std::uint64_t p = 0; p < 8; ++p) {
            const auto res = simulate_im_path(model, initial_state(model), pf, grid, simm, 7, 0, p);
            for (const double v : res.discounted_im) CHECK(v >= 0.0);
        }
    }
}

TEST_CASE("sigma = 0 collapses all paths onto the deterministic profile", "[dimengine]") {
    const VasicekParams model{0.08, 0.0, 0.025, 0.015};
    const auto simm = engine_simm();
    const auto grid = SimulationGrid::regular(10, 6.0);
    const Portfolio pf = resolved_single_swap(model);
    const auto p0 = simulate_im_path(model, initial_state(model), pf, grid, simm, 1, 0, 0);
    const auto p7 = simulate_im_path(model, initial_state(model), pf, grid, simm, 99, 0, 7);
    for (std::size_t i = 0; i < p0.discounted_im.size(); ++i)
        CHECK(p0.discounted_im[i] == p7.discounted_im[i]);
    const auto est = mc_dim(model, initial_state(model), pf, grid, simm, 64, 5);
    for (std::size_t i = 0; i < est.values.size(); ++i) {
        CHECK(est.values[i] == Catch::Approx(p0.discounted_im[i]).margin(1e-15));
        CHECK(est.stderrs[i] == Catch::Approx(0.0).margin(1e-12));
    }
}

TEST_CASE("engine path matches the public-API replay", "[dimengine]") {
    const auto simm = engine_simm();

    SECTION("Vasicek, grid aligned with quarterly resets") {
        const VasicekParams model{0.05, 0.01, 0.03, 0.01};
        const Portfolio pf = resolved_single_swap(model, 0.0005);
        const auto grid = SimulationGrid::regular(24, 6.0);  // h = 0.25
        for (std::uint64_t p = 0; p < 3; ++p) {
            const auto fast = simulate_im_path(model, initial_state(model), pf, grid, simm, 11, 2, p);
            const auto slow = replay_path(model, pf, grid, simm, 11, 2, p);
            for (std::size_t i = 0; i < slow.size(); ++i)
                CHECK(fast.discounted_im[i] == Catch::Approx(slow[i]).margin(1e-10));
        }
    }
    SECTION("Hull-White, misaligned grid exercises sub-step fixing capture") {
        const HullWhiteParams model{0.025, 0.0075, {0.03, 0.01, 0.005, 1.37}};
        const Portfolio pf = resolved_single_swap(model, -0.0005);
        const auto grid = SimulationGrid::regular(10, 6.0);  // h = 0.6 crosses resets mid-step
        for (std::uint64_t p = 0; p < 3; ++p) {
            const auto fast = simulate_im_path(model, initial_state(model), pf, grid, simm, 13, 0, p);
            const auto slow = replay_path(model, pf, grid, simm, 13, 0, p);
            for (std::size_t i = 0; i < slow.size(); ++i)
                CHECK(fast.discounted_im[i] == Catch::Approx(slow[i]).margin(1e-10));
        }
    }
    SECTION("six-swap portfolio with mixed frequencies") {
        const VasicekParams model{0.04, 0.012, 0.02, 0.018};
        const auto s0 = initial_state(model);
        const Portfolio pf = resolve_portfolio(six_swap_template(), model_yields(model, s0));
        const auto grid = SimulationGrid::regular(8, 10.0);
        for (std::uint64_t p = 0; p < 2; ++p) {
            const auto fast = simulate_im_path(model, s0, pf, grid, simm, 21, 1, p);
            const auto slow = replay_path(model, pf, grid, simm, 21, 1, p);
            for (std::size_t i = 0; i < slow.size(); ++i)
                CHECK(fast.discounted_im[i] == Catch::Approx(slow[i]).margin(1e-9));
        }
    }
}

TEST_CASE("portfolio expiring inside the grid pins IM to zero afterwards", "[dimengine]") {
    const VasicekParams model{0.05, 0.01, 0.03, 0.02};
    const auto simm = engine_simm();
    SwapTemplate t;
    t.start = 0.0;
    t.maturity = 2.0;
    t.fixed_leg_freq = 2;
    t.float_leg_freq = 4;
    t.mode = StrikeMode::atm;
    const Portfolio pf = resolve_portfolio({t}, model_yields(model, initial_state(model)));
    const auto grid = SimulationGrid::regular(12, 3.0);
    const auto res = simulate_im_path(model, initial_state(model), pf, grid, simm, 3, 0, 0);
    for (std::size_t i = 0; i < grid.times.size(); ++i) {
        if (grid.times[i] >= 2.0) CHECK(res.discounted_im[i] == 0.0);
        else CHECK(res.discounted_im[i] > 0.0);
    }
}

TEST_CASE("mc_dim estimator", "[dimengine]") {
    const VasicekParams model{0.05, 0.01, 0.03, 0.01};
    const auto simm = engine_simm();
    const auto grid = SimulationGrid::regular(10, 6.0);
    const Portfolio pf = resolved_single_swap(model);

    SECTION("M = 1 returns the single path verbatim") {
        const auto est = mc_dim(model, initial_state(model), pf, grid, simm, 1, 31);
        const auto path = simulate_im_path(model, initial_state(model), pf, grid, simm, 31, 0, 0);
        for (std::size_t i = 0; i < est.values.size(); ++i) {
            CHECK(est.values[i] == path.discounted_im[i]);
            CHECK(est.stderrs[i] == 0.0);
        }
    }
    SECTION("estimates at M and 2M agree within combined error bars") {
        const std::size_t m = 1 << 13;
        const auto a = mc_dim(model, initial_state(model), pf, grid, simm, m, 100);
        const auto b = mc_dim(model, initial_state(model), pf, grid, simm, 2 * m, 200);
        for (std::size_t i = 0; i < a.values.size(); ++i) {
            const double se = std::hypot(a.stderrs[i], b.stderrs[i]);
            CHECK(std::abs(a.values[i] - b.values[i]) < 3.0 * se + 1e-12);
        }
    }
    SECTION("worker count does not change a single bit") {
        const std::size_t m = 3000;  // not a multiple of the chunk size
        const auto t1 = mc_dim(model, initial_state(model), pf, grid, simm, m, 55, 0, 1);
        const auto t2 = mc_dim(model, initial_state(model), pf, grid, simm, m, 55, 0, 2);
        const auto t3 = mc_dim(model, initial_state(model), pf, grid, simm, m, 55, 0, 3);
        for (std::size_t i = 0; i < t1.values.size(); ++i) {
            CHECK(t1.values[i] == t2.values[i]);
            CHECK(t1.values[i] == t3.values[i]);
            CHECK(t1.stderrs[i] == t2.stderrs[i]);
            CHECK(t1.stderrs[i] == t3.stderrs[i]);
        }
    }
    SECTION("at least one path required") {
        CHECK_THROWS_AS(mc_dim(model, initial_state(model), pf, grid, simm, 0, 1),
                        std::domain_error);
    }
}

TEST_CASE("label mechanism is unbiased for the estimator", "[dimengine][slow]") {
    // Mean of many single-path labels vs one converged estimate; the
    // acceptance suite runs the full-size version of this check.
    const VasicekParams model{0.05, 0.01, 0.03, 0.01};
    const auto simm = engine_simm();
    const auto grid = SimulationGrid::regular(10, 6.0);
    const Portfolio pf = resolved_single_swap(model);
    const std::size_t k = 1 << 10;

    const auto n = grid.times.size();
    std::vector<double> mean(n, 0.0), m2(n, 0.0);
    const ImPathEngine<VasicekParams> engine(model, initial_state(model), pf, grid, simm);
    auto scratch = engine.make_scratch();
    std::vector<double> label(n);
    for (std::size_t row = 0; row < k; ++row) {
        engine.run_path(900, row, 0, scratch, label.data());
        for (std::size_t i = 0; i < n; ++i) {
            const double d = label[i] - mean[i];
            mean[i] += d / static_cast<double>(row + 1);
            m2[i] += d * (label[i] - mean[i]);
        }
    }
    const auto ref = mc_dim(model, initial_state(model), pf, grid, simm, k, 901);
    for (std::size_t i = 0; i < n; ++i) {
        const double se_labels = std::sqrt(m2[i] / (static_cast<double>(k) - 1.0) /
                                           static_cast<double>(k));
        const double se = std::hypot(se_labels, ref.stderrs[i]);
        CHECK(std::abs(mean[i] - ref.values[i]) < 3.5 * se + 1e-12);
    }
}

TEST_CASE("dim_at_inception", "[dimengine]") {
    const VasicekParams model{0.05, 0.01, 0.03, 0.01};
    const auto simm = engine_simm();

    SECTION("zero portfolio") {
        CHECK(dim_at_inception(model, initial_state(model), {}, simm) == 0.0);
    }
    SECTION("ATM swap margin is the weighted PV01 aggregate") {
        const Portfolio pf = resolved_single_swap(model);
        const double anchor = dim_at_inception(model, initial_state(model), pf, simm);
        CHECK(anchor > 0.0);
        const YieldCurve c = model_yields(model, initial_state(model));
        const auto sens = pv01_sensitivities(
            [&](const YieldCurve& cc) { return price_portfolio(cc, pf, 0.0); }, c);
        CHECK(anchor == delta_margin(sens, simm));
    }
    SECTION("matches the first monitoring point as the grid refines") {
        const Portfolio pf = resolved_single_swap(model);
        const double anchor = dim_at_inception(model, initial_state(model), pf, simm);
        const auto fine = SimulationGrid::regular(512, 6.0);
        const auto est = mc_dim(model, initial_state(model), pf, fine, simm, 1 << 12, 77);
        CHECK(std::abs(est.values.front() - anchor) < 3.0 * est.stderrs.front() + 5e-3 * anchor);
    }
}
