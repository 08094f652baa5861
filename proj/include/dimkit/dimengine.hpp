#pragma once

#include <array>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <thread>
#include <vector>

#include "instruments.hpp"
#include "ratemodel.hpp"
#include "rng.hpp"
#include "simm.hpp"
#include "termstructure.hpp"

// Nested Monte Carlo simulation of discounted initial-margin paths and the
// DIM estimator. The market state at each monitoring time is the 12-point
// yield curve implied by the short-rate model; margins come from 1bp node
// bumps aggregated through the SIMM config.
//
// Paths are independent work units. The estimator reduces fixed-size path
// chunks in chunk-index order, so results are bit-identical for any worker
// count. All randomness is counter-based on (seed, state, path, step).

namespace dimkit {

struct SimulationGrid {
    int n_times = 0;      // N monitoring times, excluding t0
    double t_final = 0.0; // T
    double h = 0.0;       // T / N
    std::vector<double> times;  // t_i = i*T/N for i = 1..N

    static SimulationGrid regular(int n, double t_final) {
        if (n < 1) throw std::invalid_argument("SimulationGrid: need at least one time");
        if (!(t_final > 0.0)) throw std::invalid_argument("SimulationGrid: horizon must be positive");
        SimulationGrid g;
        g.n_times = n;
        g.t_final = t_final;
        g.h = t_final / n;
        g.times.resize(n);
        for (int i = 1; i <= n; ++i)
            g.times[i - 1] = (static_cast<double>(i) * t_final) / n;
        return g;
    }
};

struct ImPathResult {
    std::vector<double> discounted_im;  // one value per monitoring time
    std::vector<double> short_rates;    // rates at monitoring times (diagnostics)
};

struct DimTrajectory {
    std::vector<double> values;
    std::vector<double> stderrs;  // sample std / sqrt(M); zero when M == 1
};

namespace detail {

// Interpolation handle for one discount time on the 12-node curve.
struct DfRef {
    double tau = 0.0;  // tau == 0 means DF == 1 identically
    int lo = 0, hi = 0;
    double w = 0.0;
};

inline DfRef make_df_ref(double tau, const TenorGrid& grid) {
    DfRef r;
    r.tau = tau;
    if (tau <= 0.0) return r;
    const auto& t = grid.tenors;
    const auto it = std::upper_bound(t.begin(), t.end(), tau);
    if (it == t.begin()) {
        r.lo = r.hi = 0;
    } else if (it == t.end()) {
        r.lo = r.hi = static_cast<int>(kNumTenors) - 1;
    } else {
        r.hi = static_cast<int>(it - t.begin());
        r.lo = r.hi - 1;
        r.w = (tau - t[r.lo]) / (t[r.hi] - t[r.lo]);
        if (r.w == 0.0) r.hi = r.lo;
    }
    return r;
}

// Discount factor off the yield vector, optionally with node `bump_k`
// shifted by one basis point.
inline double eval_df(const DfRef& r, const double* y, int bump_k) {
    if (r.tau == 0.0) return 1.0;
    double ylo = y[r.lo] + (r.lo == bump_k ? kOneBp : 0.0);
    if (r.hi != r.lo) {
        const double yhi = y[r.hi] + (r.hi == bump_k ? kOneBp : 0.0);
        ylo += r.w * (yhi - ylo);
    }
    return std::exp(-ylo * r.tau);
}

enum class TermKind : std::uint8_t { fixed_payment, float_forward, float_fixed };

// One discounted cashflow contribution of the portfolio price.
struct Term {
    TermKind kind;
    double coeff = 0.0;    // fixed: -w*N*K*tau; float_forward: w*N; float_fixed: w*N*tau
    double accrual = 0.0;  // float period year fraction
    DfRef a;               // fixed/float_fixed: pay; float_forward: reset
    DfRef b;               // float_forward: pay
    int slot = -1;         // float_fixed: per-swap fixing slot
};

inline double eval_term(const Term& t, const double* y, const double* fix, int bump_k) {
    switch (t.kind) {
        case TermKind::fixed_payment:
            return t.coeff * eval_df(t.a, y, bump_k);
        case TermKind::float_forward: {
            const double df_pay = eval_df(t.b, y, bump_k);
            const double fwd = (eval_df(t.a, y, bump_k) / df_pay - 1.0) / t.accrual;
            return t.coeff * t.accrual * df_pay * fwd;
        }
        case TermKind::float_fixed:
            return t.coeff * fix[t.slot] * eval_df(t.a, y, bump_k);
    }
    return 0.0;
}

// Yield curve as an affine map of the short rate: y_k(t, r) = c0_k(t) + c1_k * r.
inline void yield_coefs(const VasicekParams& p, double /*t*/, const TenorGrid& grid,
                        std::array<double, kNumTenors>& c0, std::array<double, kNumTenors>& c1) {
    for (std::size_t k = 0; k < kNumTenors; ++k) {
        const double tau = grid.tenors[k];
        const double c = affine_c(p.a, tau);
        const double ln_a = (p.theta - p.sigma * p.sigma / (2.0 * p.a * p.a)) * (c - tau) -
                            p.sigma * p.sigma * c * c / (4.0 * p.a);
        c0[k] = -ln_a / tau;
        c1[k] = c / tau;
    }
}

inline void yield_coefs(const HullWhiteParams& p, double t, const TenorGrid& grid,
                        std::array<double, kNumTenors>& c0, std::array<double, kNumTenors>& c1) {
    const double ln_pm_t = (t > 0.0) ? -ns_yield(p.ns, t) * t : 0.0;
    const double fwd_t = ns_instantaneous_forward(p.ns, t);
    const double q = p.sigma * p.sigma / (4.0 * p.a) * (-std::expm1(-2.0 * p.a * t));
    for (std::size_t k = 0; k < kNumTenors; ++k) {
        const double tau = grid.tenors[k];
        const double c = affine_c(p.a, tau);
        const double ln_pm_T = -ns_yield(p.ns, t + tau) * (t + tau);
        c0[k] = -(ln_pm_T - ln_pm_t + c * fwd_t - q * c * c) / tau;
        c1[k] = c / tau;
    }
}

inline double alpha_term(const VasicekParams& p, double /*t*/) { return p.theta; }
inline double alpha_term(const HullWhiteParams& p, double t) { return hw_alpha(p, t); }

// Fixing to capture when a float reset is crossed.
struct FixTarget {
    int slot = -1;
    double accrual = 0.0;
    DfRef pay;
};

// Reset crossed strictly inside a monitoring interval; the state is evolved
// to the reset time with its own exact OU sub-step.
struct FixEvent {
    double decay = 0.0, stddev = 0.0;  // OU transition from the previous point
    double alpha = 0.0;
    std::array<double, kNumTenors> c0{}, c1{};
    std::vector<FixTarget> targets;
};

struct StepPlan {
    double alpha = 0.0;
    double final_decay = 0.0, final_std = 0.0;
    std::array<double, kNumTenors> c0{}, c1{};
    std::vector<FixEvent> events;
    std::vector<FixTarget> at_node_targets;  // resets landing exactly on this time
    std::vector<Term> terms;
    std::array<std::vector<int>, kNumTenors> node_terms;
};

}  // namespace detail

// Precompiled simulation of discounted IM paths for one (model, portfolio,
// grid, SIMM config) combination; immutable and shareable across threads.
template <class Model>
class ImPathEngine {
  public:
    ImPathEngine(const Model& model, const ShortRateState& state0, const Portfolio& portfolio,
                 const SimulationGrid& grid, const SimmConfig& simm)
        : model_(model), state0_(state0), grid_(grid), simm_(simm),
          n_slots_(portfolio.size()) {
        if (state0.t != 0.0)
            throw std::invalid_argument("ImPathEngine: monitoring grid is anchored at t0 = 0");
        for (const auto& swap : portfolio) swap.validate();
        build(portfolio);
    }

    const SimulationGrid& grid() const { return grid_; }

    struct Scratch {
        std::vector<double> fix;
        std::vector<double> contrib;
    };

    Scratch make_scratch() const {
        Scratch s;
        s.fix.resize(n_slots_, 0.0);
        std::size_t max_terms = 0;
        for (const auto& st : steps_) max_terms = std::max(max_terms, st.terms.size());
        s.contrib.resize(max_terms, 0.0);
        return s;
    }

    // One path of discounted IM values; bit-reproducible from the counter tuple.
    void run_path(std::uint64_t seed, std::uint64_t state_idx, std::uint64_t path_idx,
                  Scratch& scratch, double* out_im, double* out_rates = nullptr) const {
        double x = state0_.x;
        double r_prev = state0_.r;
        double integral = 0.0;
        std::copy(initial_fix_.begin(), initial_fix_.end(), scratch.fix.begin());
        std::array<double, kNumTenors> y{};
        SensitivityVector sens{};

        for (std::size_t i = 0; i < steps_.size(); ++i) {
            const auto& st = steps_[i];
            std::uint64_t sub = 0;
            for (const auto& ev : st.events) {
                const double z = rng::normal_draw(seed, state_idx, path_idx, i + 1, sub++);
                x = x * ev.decay + ev.stddev * z;
                const double r_u = x + ev.alpha;
                for (std::size_t k = 0; k < kNumTenors; ++k) y[k] = ev.c0[k] + ev.c1[k] * r_u;
                capture(ev.targets, y.data(), scratch.fix.data());
            }
            const double z = rng::normal_draw(seed, state_idx, path_idx, i + 1, sub);
            x = x * st.final_decay + st.final_std * z;
            integral += r_prev * grid_.h;  // left-endpoint rate sum
            const double r = x + st.alpha;
            for (std::size_t k = 0; k < kNumTenors; ++k) y[k] = st.c0[k] + st.c1[k] * r;
            if (!st.at_node_targets.empty())
                capture(st.at_node_targets, y.data(), scratch.fix.data());

            for (std::size_t j = 0; j < st.terms.size(); ++j)
                scratch.contrib[j] = detail::eval_term(st.terms[j], y.data(), scratch.fix.data(), -1);
            for (std::size_t k = 0; k < kNumTenors; ++k) {
                double delta = 0.0;
                for (const int j : st.node_terms[k])
                    delta += detail::eval_term(st.terms[static_cast<std::size_t>(j)], y.data(),
                                               scratch.fix.data(), static_cast<int>(k)) -
                             scratch.contrib[static_cast<std::size_t>(j)];
                sens[k] = delta;
            }
            const double im = delta_margin(sens, simm_);
            out_im[i] = im * std::exp(-integral);
            if (out_rates) out_rates[i] = r;
            r_prev = r;
        }
    }

  private:
    static void capture(const std::vector<detail::FixTarget>& targets, const double* y,
                        double* fix) {
        for (const auto& tgt : targets) {
            const double df = detail::eval_df(tgt.pay, y, -1);
            fix[tgt.slot] = (1.0 / df - 1.0) / tgt.accrual;
        }
    }

    void build(const Portfolio& portfolio) {
        const auto& tenors = grid_tenor_;
        // Fixings already set at t0 (spot-starting float periods).
        initial_fix_.assign(n_slots_, 0.0);
        {
            std::array<double, kNumTenors> c0{}, c1{};
            detail::yield_coefs(model_, 0.0, tenors, c0, c1);
            std::array<double, kNumTenors> y{};
            for (std::size_t k = 0; k < kNumTenors; ++k) y[k] = c0[k] + c1[k] * state0_.r;
            for (std::size_t s = 0; s < portfolio.size(); ++s) {
                const auto& fl = portfolio[s].float_schedule;
                for (std::size_t k = 0; k < fl.n_periods(); ++k) {
                    if (fl.times[k] < 0.0 && fl.times[k + 1] > 0.0)
                        throw std::invalid_argument(
                            "ImPathEngine: seasoned swaps need externally supplied fixings");
                    if (fl.times[k] == 0.0 && fl.times[k + 1] > 0.0) {
                        const auto ref = detail::make_df_ref(fl.times[k + 1], tenors);
                        const double df = detail::eval_df(ref, y.data(), -1);
                        initial_fix_[s] = (1.0 / df - 1.0) / fl.accruals[k];
                    }
                }
            }
        }

        steps_.resize(grid_.times.size());
        double t_prev = 0.0;
        for (std::size_t i = 0; i < grid_.times.size(); ++i) {
            auto& st = steps_[i];
            const double t = grid_.times[i];
            st.alpha = detail::alpha_term(model_, t);
            detail::yield_coefs(model_, t, tenors, st.c0, st.c1);

            // Resets crossed in (t_prev, t] whose period is still alive at t.
            std::vector<std::pair<double, detail::FixTarget>> crossings;
            for (std::size_t s = 0; s < portfolio.size(); ++s) {
                const auto& fl = portfolio[s].float_schedule;
                for (std::size_t k = 0; k < fl.n_periods(); ++k) {
                    const double reset = fl.times[k];
                    const double pay = fl.times[k + 1];
                    if (reset > t_prev && reset <= t && pay > t) {
                        detail::FixTarget tgt;
                        tgt.slot = static_cast<int>(s);
                        tgt.accrual = fl.accruals[k];
                        tgt.pay = detail::make_df_ref(pay - reset, tenors);
                        crossings.emplace_back(reset, tgt);
                    }
                }
            }
            std::sort(crossings.begin(), crossings.end(),
                      [](const auto& a, const auto& b) { return a.first < b.first; });
            double u_prev = t_prev;
            for (std::size_t c = 0; c < crossings.size();) {
                const double u = crossings[c].first;
                if (u == t) {
                    for (; c < crossings.size(); ++c) st.at_node_targets.push_back(crossings[c].second);
                    break;
                }
                detail::FixEvent ev;
                set_transition(u - u_prev, ev.decay, ev.stddev);
                ev.alpha = detail::alpha_term(model_, u);
                detail::yield_coefs(model_, u, tenors, ev.c0, ev.c1);
                for (; c < crossings.size() && crossings[c].first == u; ++c)
                    ev.targets.push_back(crossings[c].second);
                u_prev = u;
                st.events.push_back(std::move(ev));
            }
            set_transition(t - u_prev, st.final_decay, st.final_std);

            build_terms(portfolio, t, st);
            t_prev = t;
        }
    }

    void build_terms(const Portfolio& portfolio, double t, detail::StepPlan& st) {
        for (std::size_t s = 0; s < portfolio.size(); ++s) {
            const auto& swap = portfolio[s];
            const double wn = swap.payer * swap.notional;
            const auto& fl = swap.float_schedule;
            for (std::size_t k = 0; k < fl.n_periods(); ++k) {
                const double reset = fl.times[k];
                const double pay = fl.times[k + 1];
                if (!(pay > t)) continue;
                detail::Term term;
                term.accrual = fl.accruals[k];
                if (reset < t) {
                    term.kind = detail::TermKind::float_fixed;
                    term.coeff = wn * fl.accruals[k];
                    term.slot = static_cast<int>(s);
                    term.a = detail::make_df_ref(pay - t, grid_tenor_);
                } else {
                    term.kind = detail::TermKind::float_forward;
                    term.coeff = wn;
                    term.a = detail::make_df_ref(reset - t, grid_tenor_);
                    term.b = detail::make_df_ref(pay - t, grid_tenor_);
                }
                st.terms.push_back(term);
            }
            const auto& fx = swap.fixed_schedule;
            for (std::size_t k = 0; k < fx.n_periods(); ++k) {
                const double pay = fx.times[k + 1];
                if (!(pay > t)) continue;
                detail::Term term;
                term.kind = detail::TermKind::fixed_payment;
                term.coeff = -wn * swap.fixed_rate * fx.accruals[k];
                term.a = detail::make_df_ref(pay - t, grid_tenor_);
                st.terms.push_back(term);
            }
        }
        for (std::size_t j = 0; j < st.terms.size(); ++j) {
            const auto& term = st.terms[j];
            auto touch = [&](const detail::DfRef& r) {
                if (r.tau == 0.0) return;
                auto& lo = st.node_terms[static_cast<std::size_t>(r.lo)];
                if (lo.empty() || lo.back() != static_cast<int>(j)) lo.push_back(static_cast<int>(j));
                if (r.hi != r.lo) {
                    auto& hi = st.node_terms[static_cast<std::size_t>(r.hi)];
                    if (hi.empty() || hi.back() != static_cast<int>(j))
                        hi.push_back(static_cast<int>(j));
                }
            };
            touch(term.a);
            if (term.kind == detail::TermKind::float_forward) touch(term.b);
        }
    }

    void set_transition(double dt, double& decay, double& stddev) const {
        decay = std::exp(-model_.a * dt);
        stddev = detail::ou_step_std(model_.a, model_.sigma, dt);
    }

    Model model_;
    ShortRateState state0_;
    SimulationGrid grid_;
    SimmConfig simm_;
    TenorGrid grid_tenor_;
    std::size_t n_slots_;
    std::vector<double> initial_fix_;
    std::vector<detail::StepPlan> steps_;
};

// Single discounted IM path (M = 1 gives a training label).
template <class Model>
ImPathResult simulate_im_path(const Model& model, const ShortRateState& state0,
                              const Portfolio& portfolio, const SimulationGrid& grid,
                              const SimmConfig& simm, std::uint64_t seed,
                              std::uint64_t state_idx = 0, std::uint64_t path_idx = 0,
                              bool keep_rates = false) {
    const ImPathEngine<Model> engine(model, state0, portfolio, grid, simm);
    auto scratch = engine.make_scratch();
    ImPathResult out;
    out.discounted_im.resize(grid.times.size());
    if (keep_rates) out.short_rates.resize(grid.times.size());
    engine.run_path(seed, state_idx, path_idx, scratch, out.discounted_im.data(),
                    keep_rates ? out.short_rates.data() : nullptr);
    return out;
}

namespace detail {

// Running mean / sum-of-squared-deviations per monitoring time (Welford);
// chunks are merged pairwise in chunk-index order, so the reduction is
// bit-identical for any worker count and exact for degenerate samples.
struct MomentChunk {
    double count = 0.0;
    std::vector<double> mean;
    std::vector<double> m2;

    explicit MomentChunk(std::size_t n) : mean(n, 0.0), m2(n, 0.0) {}

    void add(const double* x) {
        count += 1.0;
        for (std::size_t j = 0; j < mean.size(); ++j) {
            const double d = x[j] - mean[j];
            mean[j] += d / count;
            m2[j] += d * (x[j] - mean[j]);
        }
    }

    void merge(const MomentChunk& other) {
        if (other.count == 0.0) return;
        if (count == 0.0) {
            *this = other;
            return;
        }
        const double total = count + other.count;
        for (std::size_t j = 0; j < mean.size(); ++j) {
            const double d = other.mean[j] - mean[j];
            m2[j] += other.m2[j] + d * d * count * other.count / total;
            mean[j] += d * other.count / total;
        }
        count = total;
    }
};

inline void reduce_pairwise(std::vector<MomentChunk>& chunks) {
    std::size_t n = chunks.size();
    while (n > 1) {
        const std::size_t half = (n + 1) / 2;
        for (std::size_t i = 0; i + half < n; ++i) chunks[i].merge(chunks[i + half]);
        n = half;
    }
}

}  // namespace detail

template <class Model>
DimTrajectory mc_dim(const Model& model, const ShortRateState& state0, const Portfolio& portfolio,
                     const SimulationGrid& grid, const SimmConfig& simm, std::size_t m_paths,
                     std::uint64_t seed, std::uint64_t state_idx = 0, int n_threads = 1) {
    if (m_paths < 1) throw std::domain_error("mc_dim: need at least one path");
    const ImPathEngine<Model> engine(model, state0, portfolio, grid, simm);
    const auto n = grid.times.size();

    constexpr std::size_t kChunk = 1024;
    const std::size_t n_chunks = (m_paths + kChunk - 1) / kChunk;
    std::vector<detail::MomentChunk> partials(n_chunks, detail::MomentChunk(n));

    std::atomic<std::size_t> next{0};
    auto worker = [&]() {
        auto scratch = engine.make_scratch();
        std::vector<double> path(n);
        for (;;) {
            const std::size_t c = next.fetch_add(1);
            if (c >= n_chunks) break;
            auto& acc = partials[c];
            const std::size_t lo = c * kChunk;
            const std::size_t hi = std::min(lo + kChunk, m_paths);
            for (std::size_t p = lo; p < hi; ++p) {
                engine.run_path(seed, state_idx, p, scratch, path.data());
                acc.add(path.data());
            }
        }
    };

    int threads = n_threads;
    if (threads <= 0) threads = static_cast<int>(std::thread::hardware_concurrency());
    threads = std::max(1, std::min<int>(threads, static_cast<int>(n_chunks)));
    if (threads == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        pool.reserve(static_cast<std::size_t>(threads));
        for (int t = 0; t < threads; ++t) pool.emplace_back(worker);
        for (auto& th : pool) th.join();
    }

    detail::reduce_pairwise(partials);
    const auto& total = partials.front();
    DimTrajectory out;
    out.values = total.mean;
    out.stderrs.assign(n, 0.0);
    const auto m = static_cast<double>(m_paths);
    if (m_paths > 1)
        for (std::size_t j = 0; j < n; ++j) {
            const double var = total.m2[j] / (m - 1.0);
            out.stderrs[j] = std::sqrt((var > 0.0 ? var : 0.0) / m);
        }
    return out;
}

// Deterministic t0 margin: no simulation, just the spot curve, PV01 and SIMM.
template <class Model>
double dim_at_inception(const Model& model, const ShortRateState& state0,
                        const Portfolio& portfolio, const SimmConfig& simm) {
    const YieldCurve curve = model_yields(model, state0);
    const auto sens = pv01_sensitivities(
        [&](const YieldCurve& c) { return price_portfolio(c, portfolio, state0.t); }, curve);
    return delta_margin(sens, simm);
}

}  // namespace dimkit
