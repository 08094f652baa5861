#pragma once

#include <cmath>
#include <stdexcept>

#include "dimengine.hpp"

// Funding spread under constant default intensities and the quadrature of
// spread times DIM over the monitoring grid.

namespace dimkit {

struct FundingParams {
    double recovery = 0.0;       // R_B in [0,1]
    double lambda_b = 0.0;       // own default intensity (1/yr)
    double lambda_c = 0.0;       // counterparty default intensity (1/yr)
    double im_spread = 0.0;      // spread earned on posted IM
    double t0 = 0.0;

    void validate() const {
        if (!(recovery >= 0.0 && recovery <= 1.0))
            throw std::invalid_argument("FundingParams: recovery must be in [0,1]");
        if (lambda_b < 0.0 || lambda_c < 0.0)
            throw std::invalid_argument("FundingParams: intensities must be non-negative");
    }
};

inline double funding_spread(const FundingParams& p, double s) {
    if (!(s > p.t0)) throw std::domain_error("funding_spread: time must exceed t0");
    return ((1.0 - p.recovery) * p.lambda_b - p.im_spread) *
           std::exp(-(p.lambda_b + p.lambda_c) * (s - p.t0));
}

// MVA = sum_{i=1..N} f(t_i) DIM_i h.
inline double mva_quadrature(const DimTrajectory& dim, const SimulationGrid& grid,
                             const FundingParams& p) {
    if (dim.values.size() != grid.times.size())
        throw std::invalid_argument("mva_quadrature: trajectory does not match grid");
    double acc = 0.0;
    for (std::size_t i = 0; i < grid.times.size(); ++i)
        acc += funding_spread(p, grid.times[i]) * dim.values[i] * grid.h;
    return acc;
}

}  // namespace dimkit
