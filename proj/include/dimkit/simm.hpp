#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "rng.hpp"
#include "termstructure.hpp"

// Interest-rate delta margin: 1bp node-bump PV01 sensitivities at the 12
// tenors, risk weighting and variance-covariance aggregation. Stateless
// given an immutable config; the 12 bumped reprices are independent.

namespace dimkit {

inline constexpr double kOneBp = 1e-4;

using SensitivityVector = std::array<double, kNumTenors>;

struct SimmConfig {
    std::array<double, kNumTenors> risk_weights{};
    std::array<std::array<double, kNumTenors>, kNumTenors> correlations{};
    double concentration_factor = 1.0;
};

namespace detail {

// Eigenvalues of a symmetric 12x12 matrix by cyclic Jacobi rotations.
inline std::array<double, kNumTenors> symmetric_eigenvalues(
    std::array<std::array<double, kNumTenors>, kNumTenors> m) {
    constexpr int n = static_cast<int>(kNumTenors);
    for (int sweep = 0; sweep < 64; ++sweep) {
        double off = 0.0;
        for (int p = 0; p < n; ++p)
            for (int q = p + 1; q < n; ++q) off += m[p][q] * m[p][q];
        if (off < 1e-24) break;
        for (int p = 0; p < n; ++p) {
            for (int q = p + 1; q < n; ++q) {
                if (m[p][q] == 0.0) continue;
                const double theta = (m[q][q] - m[p][p]) / (2.0 * m[p][q]);
                const double t = ((theta >= 0.0) ? 1.0 : -1.0) /
                                 (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double s = t * c;
                for (int k = 0; k < n; ++k) {
                    const double mkp = m[k][p], mkq = m[k][q];
                    m[k][p] = c * mkp - s * mkq;
                    m[k][q] = s * mkp + c * mkq;
                }
                for (int k = 0; k < n; ++k) {
                    const double mpk = m[p][k], mqk = m[q][k];
                    m[p][k] = c * mpk - s * mqk;
                    m[q][k] = s * mpk + c * mqk;
                }
            }
        }
    }
    std::array<double, kNumTenors> eig{};
    for (int k = 0; k < n; ++k) eig[k] = m[k][k];
    return eig;
}

}  // namespace detail

inline void validate_simm_config(const SimmConfig& cfg) {
    for (std::size_t k = 0; k < kNumTenors; ++k)
        if (!(cfg.risk_weights[k] > 0.0))
            throw std::invalid_argument("SimmConfig: risk weights must be positive");
    if (!(cfg.concentration_factor > 0.0))
        throw std::invalid_argument("SimmConfig: concentration factor must be positive");
    for (std::size_t i = 0; i < kNumTenors; ++i) {
        if (cfg.correlations[i][i] != 1.0)
            throw std::invalid_argument("SimmConfig: correlation diagonal must be 1");
        for (std::size_t j = 0; j < kNumTenors; ++j) {
            const double r = cfg.correlations[i][j];
            if (!(r >= -1.0 && r <= 1.0))
                throw std::invalid_argument("SimmConfig: correlations must lie in [-1,1]");
            if (r != cfg.correlations[j][i])
                throw std::invalid_argument("SimmConfig: correlation matrix must be symmetric");
        }
    }
    const auto eig = detail::symmetric_eigenvalues(cfg.correlations);
    for (double e : eig)
        if (e < -1e-10)
            throw std::invalid_argument("SimmConfig: correlation matrix is not positive semidefinite");
}

// PV01 per tenor: bump one node yield by +1bp on a copied curve, reprice,
// difference against the base price. The base price is evaluated once.
template <class Pricer>
SensitivityVector pv01_sensitivities(Pricer&& pricer, const YieldCurve& curve) {
    SensitivityVector s{};
    const double base = pricer(curve);
    for (std::size_t k = 0; k < kNumTenors; ++k) {
        YieldCurve bumped = curve;
        bumped.yields[k] += kOneBp;
        try {
            s[k] = pricer(bumped) - base;
        } catch (const std::exception& e) {
            throw std::runtime_error("pv01_sensitivities: pricer failed at tenor index " +
                                     std::to_string(k) + ": " + e.what());
        }
    }
    return s;
}

// Variance-covariance aggregation sqrt(WS' rho WS) of weighted sensitivities.
inline double delta_margin(const SensitivityVector& s, const SimmConfig& cfg) {
    std::array<double, kNumTenors> ws{};
    for (std::size_t k = 0; k < kNumTenors; ++k)
        ws[k] = cfg.risk_weights[k] * s[k] * cfg.concentration_factor;
    double acc = 0.0;
    for (std::size_t k = 0; k < kNumTenors; ++k) acc += ws[k] * ws[k];
    for (std::size_t k = 0; k < kNumTenors; ++k)
        for (std::size_t l = k + 1; l < kNumTenors; ++l)
            acc += 2.0 * cfg.correlations[k][l] * ws[k] * ws[l];
    return std::sqrt(acc > 0.0 ? acc : 0.0);
}

// Sum-preserving linear allocation of sensitivities from an arbitrary tenor
// grid onto the ISDA grid: mass between two ISDA nodes is split by distance;
// mass outside the grid goes to the nearest end node.
inline SensitivityVector allocate_to_isda_tenors(const std::vector<double>& tenors,
                                                 const std::vector<double>& sens,
                                                 const TenorGrid& grid = {}) {
    if (tenors.size() != sens.size())
        throw std::invalid_argument("allocate_to_isda_tenors: size mismatch");
    SensitivityVector out{};
    const auto& g = grid.tenors;
    for (std::size_t i = 0; i < tenors.size(); ++i) {
        const double tau = tenors[i];
        const auto it = std::upper_bound(g.begin(), g.end(), tau);
        if (it == g.begin()) {
            out.front() += sens[i];
        } else if (it == g.end()) {
            out.back() += sens[i];
        } else {
            const auto hi = static_cast<std::size_t>(it - g.begin());
            const auto lo = hi - 1;
            const double w = (tau - g[lo]) / (g[hi] - g[lo]);
            out[lo] += (1.0 - w) * sens[i];
            out[hi] += w * sens[i];
        }
    }
    return out;
}

inline SimmConfig load_simm_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("load_simm_config: cannot open " + path);
    nlohmann::json j;
    in >> j;
    SimmConfig cfg;
    const auto& rw = j.at("risk_weights");
    if (rw.size() != kNumTenors) throw std::runtime_error("load_simm_config: need 12 risk weights");
    for (std::size_t k = 0; k < kNumTenors; ++k) cfg.risk_weights[k] = rw[k].get<double>();
    const auto& co = j.at("correlations");
    if (co.size() != kNumTenors) throw std::runtime_error("load_simm_config: need 12x12 correlations");
    for (std::size_t i = 0; i < kNumTenors; ++i) {
        if (co[i].size() != kNumTenors)
            throw std::runtime_error("load_simm_config: need 12x12 correlations");
        for (std::size_t jx = 0; jx < kNumTenors; ++jx)
            cfg.correlations[i][jx] = co[i][jx].get<double>();
    }
    cfg.concentration_factor = j.value("concentration_factor", 1.0);
    validate_simm_config(cfg);
    return cfg;
}

inline std::uint64_t simm_config_hash(const SimmConfig& cfg) {
    std::uint64_t h = rng::fnv1a(cfg.risk_weights.data(), sizeof(cfg.risk_weights));
    for (const auto& row : cfg.correlations) h = rng::fnv1a(row.data(), sizeof(row), h);
    h = rng::fnv1a(&cfg.concentration_factor, sizeof(double), h);
    return h;
}

}  // namespace dimkit
