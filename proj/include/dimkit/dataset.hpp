#pragma once

#include <atomic>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "dimengine.hpp"
#include "portfolio_spec.hpp"
#include "ratemodel.hpp"
#include "rng.hpp"

// Latin Hypercube sampling of initial market states, generation of noisy
// single-path training labels (M = 1) and converged validation labels
// (large M), and the bit-exact on-disk container for both. Row generation
// is parallel across states; every row is reproducible from (seed, index).

namespace dimkit {

enum class Setting : std::uint8_t { vasicek = 0, hull_white = 1 };

inline const char* setting_name(Setting s) {
    return s == Setting::vasicek ? "vasicek" : "hull_white";
}

inline Setting setting_from_name(const std::string& name) {
    if (name == "vasicek") return Setting::vasicek;
    if (name == "hull_white" || name == "hull-white") return Setting::hull_white;
    throw std::invalid_argument("unknown setting '" + name + "'");
}

// Network input vector. Vasicek: (a, sigma, theta, r0 [, delta]);
// Hull-White: (a, sigma, beta0, beta1, beta2 [, delta]).
struct MarketState {
    Setting setting = Setting::vasicek;
    bool has_delta = true;
    std::vector<double> x;

    double delta() const { return has_delta ? x.back() : 0.0; }
};

struct StateBounds {
    Setting setting = Setting::vasicek;
    bool has_delta = true;
    std::vector<std::pair<double, double>> ranges;  // per-dimension (min, max)

    std::size_t dim() const { return ranges.size(); }

    void validate() const {
        const std::size_t expect = (setting == Setting::vasicek ? 4u : 5u) + (has_delta ? 1u : 0u);
        if (ranges.size() != expect)
            throw std::invalid_argument("StateBounds: wrong dimensionality for setting");
        for (const auto& [lo, hi] : ranges)
            if (!(lo < hi)) throw std::invalid_argument("StateBounds: need min < max per dimension");
    }

    std::vector<std::string> names() const {
        std::vector<std::string> n = (setting == Setting::vasicek)
                                         ? std::vector<std::string>{"a", "sigma", "theta", "r0"}
                                         : std::vector<std::string>{"a", "sigma", "beta0", "beta1", "beta2"};
        if (has_delta) n.push_back("delta");
        return n;
    }

    // Bounds used throughout the experiments. The theta lower bound is
    // 0.1% (the tables quote percentages).
    static StateBounds vasicek_default(bool with_delta = true) {
        StateBounds b;
        b.setting = Setting::vasicek;
        b.has_delta = with_delta;
        b.ranges = {{0.01, 0.10}, {0.005, 0.025}, {0.001, 0.05}, {-0.05, 0.05}};
        if (with_delta) b.ranges.push_back({-0.001, 0.001});
        return b;
    }

    static StateBounds hull_white_default(bool with_delta = true) {
        StateBounds b;
        b.setting = Setting::hull_white;
        b.has_delta = with_delta;
        b.ranges = {{0.01, 0.05}, {0.0005, 0.015}, {-0.005, 0.05}, {0.0, 0.01}, {0.0, 0.01}};
        if (with_delta) b.ranges.push_back({-0.001, 0.001});
        return b;
    }

    static StateBounds defaults(Setting s, bool with_delta = true) {
        return s == Setting::vasicek ? vasicek_default(with_delta) : hull_white_default(with_delta);
    }
};

inline VasicekParams vasicek_from_state(const MarketState& s) {
    if (s.setting != Setting::vasicek) throw std::invalid_argument("state is not a Vasicek state");
    return {s.x[0], s.x[1], s.x[2], s.x[3]};
}

inline HullWhiteParams hull_white_from_state(const MarketState& s) {
    if (s.setting != Setting::hull_white)
        throw std::invalid_argument("state is not a Hull-White state");
    return {s.x[0], s.x[1], NelsonSiegelParams{s.x[2], s.x[3], s.x[4], 1.37}};
}

// One sample per stratum per dimension: dimension j's K values occupy each
// of the K equal sub-intervals of [min_j, max_j] exactly once, with an
// independent permutation per dimension and uniform jitter within a stratum.
inline std::vector<MarketState> lhs_sample(const StateBounds& bounds, std::size_t k_samples,
                                           std::uint64_t seed) {
    bounds.validate();
    if (k_samples < 1) throw std::invalid_argument("lhs_sample: need at least one sample");
    const std::size_t d = bounds.dim();
    std::vector<std::vector<std::uint32_t>> perms(d);
    for (std::size_t j = 0; j < d; ++j) {
        auto& p = perms[j];
        p.resize(k_samples);
        for (std::size_t i = 0; i < k_samples; ++i) p[i] = static_cast<std::uint32_t>(i);
        rng::Stream s(seed, 0x4c485350u + j);  // per-dimension permutation stream
        rng::shuffle(p.begin(), p.end(), s);
    }
    std::vector<MarketState> out(k_samples);
    for (std::size_t k = 0; k < k_samples; ++k) {
        auto& st = out[k];
        st.setting = bounds.setting;
        st.has_delta = bounds.has_delta;
        st.x.resize(d);
        for (std::size_t j = 0; j < d; ++j) {
            const double u = rng::uniform01(rng::key(seed, 0x4c48534aULL, k, j));
            const double stratum = (static_cast<double>(perms[j][k]) + u) /
                                   static_cast<double>(k_samples);
            const auto [lo, hi] = bounds.ranges[j];
            st.x[j] = lo + stratum * (hi - lo);
        }
    }
    return out;
}

struct DatasetMeta {
    Setting setting = Setting::vasicek;
    bool has_delta = true;
    bool has_stderr = false;
    std::uint32_t d = 0;
    std::uint32_t n_times = 0;
    double t_final = 0.0;
    std::uint64_t seed = 0;
    std::uint64_t m_paths = 1;
    std::uint64_t simm_hash = 0;
    std::uint64_t portfolio_hash = 0;
    std::uint64_t skipped = 0;
    std::vector<std::pair<double, double>> bounds;

    StateBounds state_bounds() const {
        StateBounds b;
        b.setting = setting;
        b.has_delta = has_delta;
        b.ranges = bounds;
        return b;
    }

    SimulationGrid grid() const {
        return SimulationGrid::regular(static_cast<int>(n_times), t_final);
    }
};

struct TrainingSet {
    DatasetMeta meta;
    std::vector<std::uint64_t> row_indices;  // original LHS indices
    std::vector<double> states;              // rows x d, row-major
    std::vector<double> labels;              // rows x N, row-major
    std::vector<double> stderrs;             // rows x N when meta.has_stderr

    std::size_t rows() const { return row_indices.size(); }
    const double* state_row(std::size_t r) const { return states.data() + r * meta.d; }
    const double* label_row(std::size_t r) const { return labels.data() + r * meta.n_times; }
};

// Largest stored MC standard error; reported as the set's tolerance.
inline double max_stderr(const TrainingSet& ts) {
    double m = 0.0;
    for (const double s : ts.stderrs) m = std::max(m, s);
    return m;
}

namespace detail {

template <class Model>
DimTrajectory run_state_dim(const Model& model, const MarketState& state,
                            const PortfolioTemplate& tmpl, const SimulationGrid& grid,
                            const SimmConfig& simm, std::size_t m_paths, std::uint64_t seed,
                            std::uint64_t state_idx) {
    const ShortRateState s0 = initial_state(model);
    const YieldCurve t0_curve = model_yields(model, s0);
    const Portfolio pf = resolve_portfolio(tmpl, t0_curve, 0.0, state.delta());
    return mc_dim(model, s0, pf, grid, simm, m_paths, seed, state_idx, 1);
}

inline DimTrajectory run_state_dim(const MarketState& state, const PortfolioTemplate& tmpl,
                                   const SimulationGrid& grid, const SimmConfig& simm,
                                   std::size_t m_paths, std::uint64_t seed,
                                   std::uint64_t state_idx) {
    if (state.setting == Setting::vasicek)
        return run_state_dim(vasicek_from_state(state), state, tmpl, grid, simm, m_paths, seed,
                             state_idx);
    return run_state_dim(hull_white_from_state(state), state, tmpl, grid, simm, m_paths, seed,
                         state_idx);
}

}  // namespace detail

// Core generator shared by the training (M = 1) and validation (large M)
// sets. Failed rows are dropped, never resampled; the skip count and the
// surviving LHS indices keep the strata auditable.
inline TrainingSet generate_labeled_set(const StateBounds& bounds, std::size_t k_states,
                                        std::size_t m_paths, const PortfolioTemplate& tmpl,
                                        const SimulationGrid& grid, const SimmConfig& simm,
                                        std::uint64_t seed, bool keep_stderr, int n_threads = 1) {
    bounds.validate();
    if (m_paths < 1) throw std::domain_error("generate_labeled_set: need at least one path");
    const auto states = lhs_sample(bounds, k_states, seed);
    const std::size_t d = bounds.dim();
    const auto n = static_cast<std::size_t>(grid.n_times);

    std::vector<double> labels(k_states * n, 0.0);
    std::vector<double> errs(keep_stderr ? k_states * n : 0, 0.0);
    std::vector<std::uint8_t> ok(k_states, 0);

    std::atomic<std::size_t> next{0};
    auto worker = [&]() {
        for (;;) {
            const std::size_t k = next.fetch_add(1);
            if (k >= k_states) break;
            try {
                const DimTrajectory traj =
                    detail::run_state_dim(states[k], tmpl, grid, simm, m_paths, seed, k);
                std::copy(traj.values.begin(), traj.values.end(), labels.begin() + k * n);
                if (keep_stderr)
                    std::copy(traj.stderrs.begin(), traj.stderrs.end(), errs.begin() + k * n);
                ok[k] = 1;
            } catch (const std::exception&) {
                ok[k] = 0;
            }
        }
    };
    int threads = n_threads;
    if (threads <= 0) threads = static_cast<int>(std::thread::hardware_concurrency());
    threads = std::max(1, std::min<int>(threads, static_cast<int>(k_states)));
    if (threads == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (int t = 0; t < threads; ++t) pool.emplace_back(worker);
        for (auto& th : pool) th.join();
    }

    TrainingSet ts;
    ts.meta.setting = bounds.setting;
    ts.meta.has_delta = bounds.has_delta;
    ts.meta.has_stderr = keep_stderr;
    ts.meta.d = static_cast<std::uint32_t>(d);
    ts.meta.n_times = static_cast<std::uint32_t>(grid.n_times);
    ts.meta.t_final = grid.t_final;
    ts.meta.seed = seed;
    ts.meta.m_paths = m_paths;
    ts.meta.simm_hash = simm_config_hash(simm);
    ts.meta.portfolio_hash = portfolio_hash(tmpl);
    ts.meta.bounds = bounds.ranges;

    for (std::size_t k = 0; k < k_states; ++k) {
        if (!ok[k]) {
            ++ts.meta.skipped;
            continue;
        }
        ts.row_indices.push_back(k);
        ts.states.insert(ts.states.end(), states[k].x.begin(), states[k].x.end());
        ts.labels.insert(ts.labels.end(), labels.begin() + k * n, labels.begin() + (k + 1) * n);
        if (keep_stderr)
            ts.stderrs.insert(ts.stderrs.end(), errs.begin() + k * n, errs.begin() + (k + 1) * n);
    }
    return ts;
}

inline TrainingSet generate_training(const StateBounds& bounds, std::size_t k_train,
                                     const PortfolioTemplate& tmpl, const SimulationGrid& grid,
                                     const SimmConfig& simm, std::uint64_t seed,
                                     int n_threads = 1) {
    return generate_labeled_set(bounds, k_train, 1, tmpl, grid, simm, seed, false, n_threads);
}

inline TrainingSet generate_validation(const StateBounds& bounds, std::size_t k_val,
                                       std::size_t m_val, const PortfolioTemplate& tmpl,
                                       const SimulationGrid& grid, const SimmConfig& simm,
                                       std::uint64_t seed, int n_threads = 1) {
    return generate_labeled_set(bounds, k_val, m_val, tmpl, grid, simm, seed, true, n_threads);
}

// Regenerate one label row from metadata alone (reproducibility hook);
// k_states is the original LHS sample count, rows() + meta.skipped.
inline std::pair<MarketState, std::vector<double>> regenerate_row(
    const DatasetMeta& meta, const PortfolioTemplate& tmpl, const SimmConfig& simm,
    std::uint64_t row_index, std::size_t k_states) {
    const auto states = lhs_sample(meta.state_bounds(), k_states, meta.seed);
    const auto& st = states.at(row_index);
    const DimTrajectory traj =
        detail::run_state_dim(st, tmpl, meta.grid(), simm, meta.m_paths, meta.seed, row_index);
    return {st, traj.values};
}

namespace detail {

inline constexpr char kDatasetMagic[8] = {'D', 'I', 'M', 'K', 'D', 'S', 'E', 'T'};

template <class T>
void write_pod(std::ofstream& out, const T& v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
void read_pod(std::ifstream& in, T& v) {
    in.read(reinterpret_cast<char*>(&v), sizeof(T));
}

}  // namespace detail

// Versioned little-endian binary container: header, row indices, then
// row-major doubles for states, labels and (optionally) standard errors.
inline void save_dataset(const TrainingSet& ts, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("save_dataset: cannot open " + path);
    out.write(detail::kDatasetMagic, 8);
    detail::write_pod(out, std::uint32_t{1});
    detail::write_pod(out, static_cast<std::uint8_t>(ts.meta.setting));
    detail::write_pod(out, static_cast<std::uint8_t>(ts.meta.has_delta));
    detail::write_pod(out, static_cast<std::uint8_t>(ts.meta.has_stderr));
    detail::write_pod(out, std::uint8_t{0});
    detail::write_pod(out, ts.meta.d);
    detail::write_pod(out, ts.meta.n_times);
    detail::write_pod(out, static_cast<std::uint64_t>(ts.rows()));
    detail::write_pod(out, ts.meta.t_final);
    detail::write_pod(out, ts.meta.seed);
    detail::write_pod(out, ts.meta.m_paths);
    detail::write_pod(out, ts.meta.simm_hash);
    detail::write_pod(out, ts.meta.portfolio_hash);
    detail::write_pod(out, ts.meta.skipped);
    for (const auto& [lo, hi] : ts.meta.bounds) {
        detail::write_pod(out, lo);
        detail::write_pod(out, hi);
    }
    out.write(reinterpret_cast<const char*>(ts.row_indices.data()),
              static_cast<std::streamsize>(ts.row_indices.size() * sizeof(std::uint64_t)));
    out.write(reinterpret_cast<const char*>(ts.states.data()),
              static_cast<std::streamsize>(ts.states.size() * sizeof(double)));
    out.write(reinterpret_cast<const char*>(ts.labels.data()),
              static_cast<std::streamsize>(ts.labels.size() * sizeof(double)));
    if (ts.meta.has_stderr)
        out.write(reinterpret_cast<const char*>(ts.stderrs.data()),
                  static_cast<std::streamsize>(ts.stderrs.size() * sizeof(double)));
    if (!out) throw std::runtime_error("save_dataset: write failed for " + path);
}

inline TrainingSet load_dataset(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("load_dataset: cannot open " + path);
    char magic[8];
    in.read(magic, 8);
    if (std::memcmp(magic, detail::kDatasetMagic, 8) != 0)
        throw std::runtime_error("load_dataset: bad magic in " + path);
    std::uint32_t version = 0;
    detail::read_pod(in, version);
    if (version != 1) throw std::runtime_error("load_dataset: unsupported version");
    TrainingSet ts;
    std::uint8_t setting = 0, has_delta = 0, has_stderr = 0, pad = 0;
    detail::read_pod(in, setting);
    detail::read_pod(in, has_delta);
    detail::read_pod(in, has_stderr);
    detail::read_pod(in, pad);
    ts.meta.setting = static_cast<Setting>(setting);
    ts.meta.has_delta = has_delta != 0;
    ts.meta.has_stderr = has_stderr != 0;
    detail::read_pod(in, ts.meta.d);
    detail::read_pod(in, ts.meta.n_times);
    std::uint64_t rows = 0;
    detail::read_pod(in, rows);
    detail::read_pod(in, ts.meta.t_final);
    detail::read_pod(in, ts.meta.seed);
    detail::read_pod(in, ts.meta.m_paths);
    detail::read_pod(in, ts.meta.simm_hash);
    detail::read_pod(in, ts.meta.portfolio_hash);
    detail::read_pod(in, ts.meta.skipped);
    ts.meta.bounds.resize(ts.meta.d);
    for (auto& [lo, hi] : ts.meta.bounds) {
        detail::read_pod(in, lo);
        detail::read_pod(in, hi);
    }
    ts.row_indices.resize(rows);
    in.read(reinterpret_cast<char*>(ts.row_indices.data()),
            static_cast<std::streamsize>(rows * sizeof(std::uint64_t)));
    ts.states.resize(rows * ts.meta.d);
    in.read(reinterpret_cast<char*>(ts.states.data()),
            static_cast<std::streamsize>(ts.states.size() * sizeof(double)));
    ts.labels.resize(rows * ts.meta.n_times);
    in.read(reinterpret_cast<char*>(ts.labels.data()),
            static_cast<std::streamsize>(ts.labels.size() * sizeof(double)));
    if (ts.meta.has_stderr) {
        ts.stderrs.resize(rows * ts.meta.n_times);
        in.read(reinterpret_cast<char*>(ts.stderrs.data()),
                static_cast<std::streamsize>(ts.stderrs.size() * sizeof(double)));
    }
    if (!in) throw std::runtime_error("load_dataset: truncated file " + path);
    return ts;
}

inline void export_dataset_csv(const TrainingSet& ts, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("export_dataset_csv: cannot open " + path);
    const auto names = ts.meta.state_bounds().names();
    out << "row";
    for (const auto& n : names) out << ',' << n;
    for (std::uint32_t i = 0; i < ts.meta.n_times; ++i) out << ",label_" << i;
    if (ts.meta.has_stderr)
        for (std::uint32_t i = 0; i < ts.meta.n_times; ++i) out << ",stderr_" << i;
    out << '\n';
    char buf[32];
    for (std::size_t r = 0; r < ts.rows(); ++r) {
        out << ts.row_indices[r];
        auto emit = [&](double v) {
            std::snprintf(buf, sizeof(buf), ",%.17g", v);
            out << buf;
        };
        for (std::uint32_t j = 0; j < ts.meta.d; ++j) emit(ts.state_row(r)[j]);
        for (std::uint32_t i = 0; i < ts.meta.n_times; ++i) emit(ts.label_row(r)[i]);
        if (ts.meta.has_stderr)
            for (std::uint32_t i = 0; i < ts.meta.n_times; ++i)
                emit(ts.stderrs[r * ts.meta.n_times + i]);
        out << '\n';
    }
}

}  // namespace dimkit
