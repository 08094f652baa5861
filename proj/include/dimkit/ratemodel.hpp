#pragma once

#include <cmath>
#include <stdexcept>
#include <variant>

#include "termstructure.hpp"

// Vasicek and Hull-White short-rate models sharing the OU state dynamics
//   dx = -a x dt + sigma dW,   r(t) = x(t) + theta-term(t).
// Exact Gaussian transitions (no Euler bias) and closed-form zero-coupon
// bond prices. Parameter objects are immutable and freely shareable.

namespace dimkit {

struct VasicekParams {
    double a = 0.0;      // mean-reversion speed (1/yr)
    double sigma = 0.0;  // volatility
    double theta = 0.0;  // long-term level
    double r0 = 0.0;     // initial short rate

    void validate() const {
        if (!(a > 0.0)) throw std::invalid_argument("VasicekParams: a must be positive");
        if (sigma < 0.0) throw std::invalid_argument("VasicekParams: sigma must be non-negative");
    }
};

struct HullWhiteParams {
    double a = 0.0;
    double sigma = 0.0;
    NelsonSiegelParams ns;  // the t0 market curve; x(0) = 0

    void validate() const {
        if (!(a > 0.0)) throw std::invalid_argument("HullWhiteParams: a must be positive");
        if (sigma < 0.0) throw std::invalid_argument("HullWhiteParams: sigma must be non-negative");
        if (!(ns.lambda > 0.0)) throw std::invalid_argument("HullWhiteParams: lambda must be positive");
    }
};

struct ShortRateState {
    double t = 0.0;  // year fraction
    double x = 0.0;  // OU state
    double r = 0.0;  // short rate, kept consistent with x by construction
};

namespace detail {

// (1 - e^{-a tau}) / a, the affine duration factor.
inline double affine_c(double a, double tau) { return -std::expm1(-a * tau) / a; }

// Conditional std dev of x over a step of length h.
inline double ou_step_std(double a, double sigma, double h) {
    return sigma * std::sqrt(-std::expm1(-2.0 * a * h) / (2.0 * a));
}

}  // namespace detail

// Deterministic shift for Hull-White: r(t) = x(t) + hw_alpha(t).
inline double hw_alpha(const HullWhiteParams& p, double t) {
    const double c = -std::expm1(-p.a * t);
    return ns_instantaneous_forward(p.ns, t) + p.sigma * p.sigma / (2.0 * p.a * p.a) * c * c;
}

inline ShortRateState initial_state(const VasicekParams& p) {
    return {0.0, p.r0 - p.theta, p.r0};
}

inline ShortRateState initial_state(const HullWhiteParams& p) {
    return {0.0, 0.0, hw_alpha(p, 0.0)};
}

// Exact OU transition over a step h given a standard normal draw z.
inline ShortRateState evolve(const VasicekParams& p, const ShortRateState& s, double h, double z) {
    if (!(h > 0.0)) throw std::domain_error("evolve: step must be positive");
    if (!std::isfinite(z)) throw std::domain_error("evolve: draw must be finite");
    ShortRateState out;
    out.t = s.t + h;
    out.x = s.x * std::exp(-p.a * h) + detail::ou_step_std(p.a, p.sigma, h) * z;
    out.r = out.x + p.theta;
    return out;
}

inline ShortRateState evolve(const HullWhiteParams& p, const ShortRateState& s, double h, double z) {
    if (!(h > 0.0)) throw std::domain_error("evolve: step must be positive");
    if (!std::isfinite(z)) throw std::domain_error("evolve: draw must be finite");
    ShortRateState out;
    out.t = s.t + h;
    out.x = s.x * std::exp(-p.a * h) + detail::ou_step_std(p.a, p.sigma, h) * z;
    out.r = out.x + hw_alpha(p, out.t);
    return out;
}

// Vasicek affine bond price P(t,T) = A(tau) e^{-C(tau) r(t)}.
inline double zcb_price(const VasicekParams& p, const ShortRateState& s, double T) {
    if (T < s.t) throw std::domain_error("zcb_price: maturity before valuation time");
    const double tau = T - s.t;
    if (tau == 0.0) return 1.0;
    const double c = detail::affine_c(p.a, tau);
    const double ln_a = (p.theta - p.sigma * p.sigma / (2.0 * p.a * p.a)) * (c - tau) -
                        p.sigma * p.sigma * c * c / (4.0 * p.a);
    return std::exp(ln_a - c * s.r);
}

// Hull-White bond price fitted to the t0 Nelson-Siegel discount curve.
inline double zcb_price(const HullWhiteParams& p, const ShortRateState& s, double T) {
    if (T < s.t) throw std::domain_error("zcb_price: maturity before valuation time");
    if (T == s.t) return 1.0;
    const double c = detail::affine_c(p.a, T - s.t);
    const double ln_pm_T = -ns_yield(p.ns, T) * T;
    const double ln_pm_t = (s.t > 0.0) ? -ns_yield(p.ns, s.t) * s.t : 0.0;
    const double fwd_t = ns_instantaneous_forward(p.ns, s.t);
    const double q = p.sigma * p.sigma / (4.0 * p.a) * (-std::expm1(-2.0 * p.a * s.t));
    return std::exp(ln_pm_T - ln_pm_t + c * fwd_t - q * c * c - c * s.r);
}

// Model-implied zero curve at the state's observation time.
template <class Model>
YieldCurve model_yields(const Model& p, const ShortRateState& s, const TenorGrid& grid = {}) {
    YieldCurve curve;
    curve.grid = grid;
    curve.anchor_time = s.t;
    for (std::size_t k = 0; k < kNumTenors; ++k) {
        const double tau = grid.tenors[k];
        curve.yields[k] = -std::log(zcb_price(p, s, s.t + tau)) / tau;
    }
    return curve;
}

using ShortRateModel = std::variant<VasicekParams, HullWhiteParams>;

inline ShortRateState initial_state(const ShortRateModel& m) {
    return std::visit([](const auto& p) { return initial_state(p); }, m);
}

}  // namespace dimkit
