#pragma once

#include <cmath>
#include <cstddef>
#include <map>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "termstructure.hpp"

// Interest rate swaps on exact fractional-year grids: schedules, pricing off
// a yield curve, swap rates, annuities and portfolio aggregation. Pricing is
// pure; the FixingStore carries float rates fixed along a simulated path.

namespace dimkit {

struct Schedule {
    // times[0] is the accrual start; times[1..] are payment dates.
    std::vector<double> times;
    std::vector<double> accruals;  // accruals[k] covers (times[k], times[k+1])

    std::size_t n_periods() const { return accruals.size(); }
    double start() const { return times.front(); }
    double maturity() const { return times.back(); }

    void validate() const {
        if (times.size() < 2 || accruals.size() != times.size() - 1)
            throw std::invalid_argument("Schedule: need at least one period");
        for (std::size_t k = 0; k + 1 < times.size(); ++k) {
            if (!(times[k + 1] > times[k]))
                throw std::invalid_argument("Schedule: times must be strictly increasing");
            if (!(accruals[k] > 0.0))
                throw std::invalid_argument("Schedule: accruals must be positive");
            if (std::abs(accruals[k] - (times[k + 1] - times[k])) > 1e-12)
                throw std::invalid_argument("Schedule: accruals inconsistent with times");
        }
    }
};

// Equispaced schedule with `payments_per_year` periods per year.
inline Schedule make_schedule(double start, double end, int payments_per_year) {
    if (!(end > start)) throw std::invalid_argument("make_schedule: end must exceed start");
    if (payments_per_year < 1) throw std::invalid_argument("make_schedule: bad frequency");
    const double span = end - start;
    const auto n = static_cast<std::size_t>(std::lround(span * payments_per_year));
    if (n == 0 || std::abs(span * payments_per_year - static_cast<double>(n)) > 1e-9)
        throw std::invalid_argument("make_schedule: span is not a whole number of periods");
    Schedule s;
    s.times.resize(n + 1);
    s.accruals.resize(n);
    for (std::size_t k = 0; k <= n; ++k)
        s.times[k] = start + static_cast<double>(k) / payments_per_year;
    s.times[n] = end;
    for (std::size_t k = 0; k < n; ++k) s.accruals[k] = s.times[k + 1] - s.times[k];
    return s;
}

struct SwapSpec {
    double notional = 100.0;
    double fixed_rate = 0.0;
    int payer = +1;  // +1 payer, -1 receiver
    Schedule fixed_schedule;
    Schedule float_schedule;

    double maturity() const { return fixed_schedule.maturity(); }

    void validate() const {
        if (payer != 1 && payer != -1) throw std::invalid_argument("SwapSpec: payer must be +-1");
        fixed_schedule.validate();
        float_schedule.validate();
        if (fixed_schedule.start() != float_schedule.start() ||
            fixed_schedule.maturity() != float_schedule.maturity())
            throw std::invalid_argument("SwapSpec: legs must share start and maturity");
    }
};

// Float rates fixed at reset times along a path, keyed by (reset, pay) dates.
class FixingStore {
  public:
    void set(double reset, double pay, double rate) { fixings_[{reset, pay}] = rate; }

    bool has(double reset, double pay) const { return fixings_.count({reset, pay}) > 0; }

    double get(double reset, double pay) const {
        const auto it = fixings_.find({reset, pay});
        if (it == fixings_.end())
            throw std::runtime_error("FixingStore: missing fixing for reset at t=" +
                                     std::to_string(reset));
        return it->second;
    }

    std::size_t size() const { return fixings_.size(); }

  private:
    std::map<std::pair<double, double>, double> fixings_;
};

using Portfolio = std::vector<SwapSpec>;

// Present value of a basis point: sum of accrual-weighted discounts over the
// remaining fixed periods. Returns 0 for an expired schedule.
inline double annuity(const YieldCurve& curve, const Schedule& fixed_schedule, double t) {
    double acc = 0.0;
    for (std::size_t k = 0; k < fixed_schedule.n_periods(); ++k) {
        const double pay = fixed_schedule.times[k + 1];
        if (pay > t) acc += fixed_schedule.accruals[k] * discount_factor(curve, pay - t);
    }
    return acc;
}

// Float leg PV per unit notional. Periods already reset use the stored
// fixing; future periods use the forward rate from discount-factor ratios.
inline double float_leg_pv(const YieldCurve& curve, const Schedule& float_schedule, double t,
                           const FixingStore& fixings) {
    double acc = 0.0;
    for (std::size_t k = 0; k < float_schedule.n_periods(); ++k) {
        const double reset = float_schedule.times[k];
        const double pay = float_schedule.times[k + 1];
        if (!(pay > t)) continue;
        const double tau = float_schedule.accruals[k];
        const double df_pay = discount_factor(curve, pay - t);
        double fwd;
        if (reset < t) {
            fwd = fixings.get(reset, pay);
        } else {
            const double df_reset = discount_factor(curve, reset - t);
            fwd = (df_reset / df_pay - 1.0) / tau;
        }
        acc += tau * df_pay * fwd;
    }
    return acc;
}

// Fixed rate that prices the swap to zero at t.
inline double swap_rate(const YieldCurve& curve, const SwapSpec& spec, double t,
                        const FixingStore& fixings = {}) {
    const double a = annuity(curve, spec.fixed_schedule, t);
    if (!(a > 0.0)) throw std::runtime_error("swap_rate: swap is expired at valuation time");
    return float_leg_pv(curve, spec.float_schedule, t, fixings) / a;
}

inline double price_swap(const YieldCurve& curve, const SwapSpec& spec, double t,
                         const FixingStore& fixings = {}) {
    const double float_leg = float_leg_pv(curve, spec.float_schedule, t, fixings);
    const double fixed_leg = spec.fixed_rate * annuity(curve, spec.fixed_schedule, t);
    return spec.payer * spec.notional * (float_leg - fixed_leg);
}

inline double price_portfolio(const YieldCurve& curve, const Portfolio& portfolio, double t,
                              const FixingStore& fixings = {}) {
    double acc = 0.0;
    for (const auto& swap : portfolio) acc += price_swap(curve, swap, t, fixings);
    return acc;
}

}  // namespace dimkit
