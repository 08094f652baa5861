#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>

// Yield curves on the 12-point ISDA tenor grid, Nelson-Siegel
// parameterization, linear-in-yield interpolation and discount factors.
// All types are immutable value types; all operations are pure.

namespace dimkit {

inline constexpr std::size_t kNumTenors = 12;

// {2W, 1M, 3M, 6M, 1Y, 2Y, 3Y, 5Y, 10Y, 15Y, 20Y, 30Y} as year fractions.
inline constexpr std::array<double, kNumTenors> kIsdaTenors = {
    14.0 / 365.0, 1.0 / 12.0, 0.25, 0.5, 1.0, 2.0, 3.0, 5.0, 10.0, 15.0, 20.0, 30.0};

struct TenorGrid {
    std::array<double, kNumTenors> tenors = kIsdaTenors;

    void validate() const {
        for (std::size_t k = 0; k < kNumTenors; ++k) {
            if (!(tenors[k] > 0.0)) throw std::invalid_argument("TenorGrid: tenors must be positive");
            if (k > 0 && !(tenors[k] > tenors[k - 1]))
                throw std::invalid_argument("TenorGrid: tenors must be strictly increasing");
        }
    }
};

struct NelsonSiegelParams {
    double beta0 = 0.0;
    double beta1 = 0.0;
    double beta2 = 0.0;
    double lambda = 1.37;  // decay time scale in years
};

// Zero rate y(tau) = b0 + b1*(1-e^{-x})/x + b2*((1-e^{-x})/x - e^{-x}), x = tau/lambda.
inline double ns_yield(const NelsonSiegelParams& p, double tau) {
    if (!(p.lambda > 0.0)) throw std::invalid_argument("ns_yield: lambda must be positive");
    if (!(tau > 0.0)) throw std::domain_error("ns_yield: tau must be positive");
    const double x = tau / p.lambda;
    const double g = -std::expm1(-x) / x;  // (1-e^{-x})/x, stable for small x
    return p.beta0 + p.beta1 * g + p.beta2 * (g - std::exp(-x));
}

// Instantaneous forward f(0,t) = d/dt [t * y(t)].
inline double ns_instantaneous_forward(const NelsonSiegelParams& p, double t) {
    if (!(p.lambda > 0.0))
        throw std::invalid_argument("ns_instantaneous_forward: lambda must be positive");
    if (t < 0.0) throw std::domain_error("ns_instantaneous_forward: t must be non-negative");
    const double x = t / p.lambda;
    const double e = std::exp(-x);
    return p.beta0 + p.beta1 * e + p.beta2 * x * e;
}

struct YieldCurve {
    TenorGrid grid;
    std::array<double, kNumTenors> yields{};  // continuously compounded zero rates
    double anchor_time = 0.0;                 // observation time as a year fraction
};

// Linear interpolation in (tenor, yield); flat extrapolation beyond the grid.
// Exact node reproduction: tau equal to a grid tenor returns the stored yield.
inline double interp_yield(const YieldCurve& curve, double tau) {
    if (!(tau > 0.0)) throw std::domain_error("interp_yield: tau must be positive");
    const auto& t = curve.grid.tenors;
    const auto it = std::upper_bound(t.begin(), t.end(), tau);
    if (it == t.begin()) return curve.yields.front();
    if (it == t.end()) return curve.yields.back();
    const auto hi = static_cast<std::size_t>(it - t.begin());
    const auto lo = hi - 1;
    const double w = (tau - t[lo]) / (t[hi] - t[lo]);
    return curve.yields[lo] + w * (curve.yields[hi] - curve.yields[lo]);
}

inline double discount_factor(const YieldCurve& curve, double tau) {
    if (tau < 0.0) throw std::domain_error("discount_factor: tau must be non-negative");
    if (tau == 0.0) return 1.0;
    return std::exp(-interp_yield(curve, tau) * tau);
}

// Curve sampled from a Nelson-Siegel parameterization at the grid tenors.
inline YieldCurve ns_curve(const NelsonSiegelParams& p, const TenorGrid& grid = {},
                           double anchor_time = 0.0) {
    YieldCurve c;
    c.grid = grid;
    c.anchor_time = anchor_time;
    for (std::size_t k = 0; k < kNumTenors; ++k) c.yields[k] = ns_yield(p, grid.tenors[k]);
    return c;
}

inline void save_curve_csv(const YieldCurve& curve, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("save_curve_csv: cannot open " + path);
    out << "tenor_yf,yield\n";
    char buf[64];
    for (std::size_t k = 0; k < kNumTenors; ++k) {
        std::snprintf(buf, sizeof(buf), "%.17g,%.17g\n", curve.grid.tenors[k], curve.yields[k]);
        out << buf;
    }
}

inline YieldCurve load_curve_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("load_curve_csv: cannot open " + path);
    std::string line;
    if (!std::getline(in, line)) throw std::runtime_error("load_curve_csv: empty file " + path);
    YieldCurve c;
    std::size_t k = 0;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        if (k >= kNumTenors) throw std::runtime_error("load_curve_csv: too many rows in " + path);
        std::istringstream ss(line);
        std::string a, b;
        if (!std::getline(ss, a, ',') || !std::getline(ss, b))
            throw std::runtime_error("load_curve_csv: malformed row in " + path);
        c.grid.tenors[k] = std::stod(a);
        c.yields[k] = std::stod(b);
        ++k;
    }
    if (k != kNumTenors) throw std::runtime_error("load_curve_csv: expected 12 rows in " + path);
    c.grid.validate();
    return c;
}

}  // namespace dimkit
