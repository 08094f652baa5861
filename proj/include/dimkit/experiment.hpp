#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "dataset.hpp"
#include "dimengine.hpp"
#include "mva.hpp"
#include "neuralnet.hpp"
#include "portfolio_spec.hpp"
#include "simm.hpp"

// Experiment harness behind the CLI: config files, dataset generation with
// manifests, repeated training trials with t-distribution confidence
// intervals, validation metrics, per-variable error scatters, volatility
// stress grids and MVA comparisons. Subcommands communicate only via files;
// manifests are deterministic so identical seeds give identical bytes.

namespace dimkit {

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Bundled IR delta calibration: risk weights in basis points and the tenor
// correlation matrix, patterned on published SIMM parameter sets.
inline SimmConfig builtin_simm_config() {
    SimmConfig cfg;
    cfg.risk_weights = {109, 105, 90, 71, 66, 66, 64, 60, 60, 61, 61, 67};
    constexpr double c[kNumTenors][kNumTenors] = {
        {1.00, 0.73, 0.64, 0.57, 0.44, 0.34, 0.29, 0.24, 0.18, 0.13, 0.11, 0.09},
        {0.73, 1.00, 0.78, 0.67, 0.50, 0.37, 0.30, 0.24, 0.18, 0.13, 0.11, 0.10},
        {0.64, 0.78, 1.00, 0.85, 0.66, 0.52, 0.43, 0.35, 0.27, 0.20, 0.17, 0.17},
        {0.57, 0.67, 0.85, 1.00, 0.81, 0.68, 0.59, 0.50, 0.41, 0.35, 0.33, 0.31},
        {0.44, 0.50, 0.66, 0.81, 1.00, 0.94, 0.85, 0.76, 0.65, 0.59, 0.56, 0.54},
        {0.34, 0.37, 0.52, 0.68, 0.94, 1.00, 0.95, 0.89, 0.79, 0.73, 0.71, 0.70},
        {0.29, 0.30, 0.43, 0.59, 0.85, 0.95, 1.00, 0.96, 0.88, 0.83, 0.82, 0.81},
        {0.24, 0.24, 0.35, 0.50, 0.76, 0.89, 0.96, 1.00, 0.95, 0.91, 0.90, 0.90},
        {0.18, 0.18, 0.27, 0.41, 0.65, 0.79, 0.88, 0.95, 1.00, 0.97, 0.97, 0.97},
        {0.13, 0.13, 0.20, 0.35, 0.59, 0.73, 0.83, 0.91, 0.97, 1.00, 0.99, 0.99},
        {0.11, 0.11, 0.17, 0.33, 0.56, 0.71, 0.82, 0.90, 0.97, 0.99, 1.00, 0.99},
        {0.09, 0.10, 0.17, 0.31, 0.54, 0.70, 0.81, 0.90, 0.97, 0.99, 0.99, 1.00}};
    for (std::size_t i = 0; i < kNumTenors; ++i)
        for (std::size_t j = 0; j < kNumTenors; ++j) cfg.correlations[i][j] = c[i][j];
    cfg.concentration_factor = 1.0;
    validate_simm_config(cfg);
    return cfg;
}

// Two-sided 95% t-distribution multipliers for 1..30 degrees of freedom.
inline double t_multiplier_95(int dof) {
    static constexpr double table[30] = {
        12.706, 4.303, 3.182, 2.776, 2.571, 2.447, 2.365, 2.306, 2.262, 2.228,
        2.201,  2.179, 2.160, 2.145, 2.131, 2.120, 2.110, 2.101, 2.093, 2.086,
        2.080,  2.074, 2.069, 2.064, 2.060, 2.056, 2.052, 2.048, 2.045, 2.042};
    if (dof < 1) throw std::invalid_argument("t_multiplier_95: dof must be positive");
    if (dof <= 30) return table[dof - 1];
    return 1.960;
}

struct StressSpec {
    std::vector<double> a_values;
    std::vector<double> sigma_values;
    std::map<std::string, double> fixed;  // remaining state variables
};

struct ExperimentConfig {
    Setting setting = Setting::vasicek;
    bool use_delta = true;
    StateBounds bounds;
    PortfolioTemplate portfolio;
    SimmConfig simm;
    std::string output_dir = "runs/out";
    int n_times = 160;
    double t_final = 6.0;
    std::size_t k_train = std::size_t{1} << 22;
    std::size_t k_val = std::size_t{1} << 9;
    std::size_t m_val = std::size_t{1} << 20;
    std::uint64_t dataset_seed = 1;
    std::uint64_t train_seed = 7;
    int trials = 1;
    int threads = 1;
    TrainConfig training;
    FundingParams funding{0.4, 1.67e-2, 0.0, 0.0, 0.0};
    double t_gamma = -1.0;  // <0 selects the highest-variance monitoring time
    StressSpec stress;
    nlohmann::json raw;  // resolved config echoed into manifests

    SimulationGrid grid() const { return SimulationGrid::regular(n_times, t_final); }
};

inline ExperimentConfig parse_experiment_config(const nlohmann::json& j,
                                                const std::string& base_dir = ".") {
    ExperimentConfig cfg;
    try {
        cfg.setting = setting_from_name(j.value("setting", "vasicek"));
        cfg.use_delta = j.value("use_delta", true);
        cfg.bounds = StateBounds::defaults(cfg.setting, cfg.use_delta);
        if (j.contains("bounds")) {
            const auto names = cfg.bounds.names();
            for (const auto& [key, val] : j.at("bounds").items()) {
                const auto it = std::find(names.begin(), names.end(), key);
                if (it == names.end()) throw ConfigError("unknown bounds key '" + key + "'");
                const auto idx = static_cast<std::size_t>(it - names.begin());
                cfg.bounds.ranges[idx] = {val.at(0).get<double>(), val.at(1).get<double>()};
            }
        }
        cfg.bounds.validate();

        if (j.contains("portfolio")) {
            const auto p = j.at("portfolio").get<std::string>();
            cfg.portfolio = load_portfolio_template(
                std::filesystem::path(p).is_absolute() ? p : base_dir + "/" + p);
        } else {
            cfg.portfolio = single_swap_template();
        }
        if (j.contains("simm_config")) {
            const auto p = j.at("simm_config").get<std::string>();
            cfg.simm = load_simm_config(std::filesystem::path(p).is_absolute() ? p
                                                                               : base_dir + "/" + p);
        } else {
            cfg.simm = builtin_simm_config();
        }
        cfg.output_dir = j.value("output_dir", cfg.output_dir);

        if (j.contains("grid")) {
            cfg.n_times = j.at("grid").value("n_times", cfg.n_times);
            cfg.t_final = j.at("grid").value("t_final", cfg.t_final);
        }
        if (j.contains("dataset")) {
            const auto& d = j.at("dataset");
            cfg.k_train = d.value("k_train", cfg.k_train);
            cfg.k_val = d.value("k_val", cfg.k_val);
            cfg.m_val = d.value("m_val", cfg.m_val);
            cfg.dataset_seed = d.value("seed", cfg.dataset_seed);
        }
        if (j.contains("training")) {
            const auto& t = j.at("training");
            if (t.contains("hidden")) cfg.training.hidden = t.at("hidden").get<std::vector<int>>();
            cfg.training.batch_size = t.value("batch_size", cfg.training.batch_size);
            cfg.training.max_epochs = t.value("max_epochs", cfg.training.max_epochs);
            cfg.training.lr0 = t.value("lr0", cfg.training.lr0);
            cfg.training.lr_floor = t.value("lr_floor", cfg.training.lr_floor);
            cfg.training.lr_factor = t.value("lr_factor", cfg.training.lr_factor);
            cfg.training.plateau_patience = t.value("plateau_patience", cfg.training.plateau_patience);
            cfg.training.early_stop_patience =
                t.value("early_stop_patience", cfg.training.early_stop_patience);
            cfg.training.target_val_mse = t.value("target_val_mse", cfg.training.target_val_mse);
            cfg.train_seed = t.value("seed", cfg.train_seed);
            cfg.trials = t.value("trials", cfg.trials);
        }
        if (j.contains("funding")) {
            const auto& f = j.at("funding");
            cfg.funding.recovery = f.value("recovery", cfg.funding.recovery);
            cfg.funding.lambda_b = f.value("lambda_b", cfg.funding.lambda_b);
            cfg.funding.lambda_c = f.value("lambda_c", cfg.funding.lambda_c);
            cfg.funding.im_spread = f.value("im_spread", cfg.funding.im_spread);
            cfg.funding.validate();
        }
        if (j.contains("report")) {
            const auto& r = j.at("report");
            cfg.t_gamma = r.value("t_gamma", cfg.t_gamma);
            if (r.contains("stress")) {
                const auto& s = r.at("stress");
                cfg.stress.a_values = s.at("a").get<std::vector<double>>();
                cfg.stress.sigma_values = s.at("sigma").get<std::vector<double>>();
                if (s.contains("fixed"))
                    for (const auto& [key, val] : s.at("fixed").items())
                        cfg.stress.fixed[key] = val.get<double>();
            }
        }
        cfg.threads = j.value("threads", cfg.threads);
        cfg.raw = j;
    } catch (const ConfigError&) {
        throw;
    } catch (const std::exception& e) {
        throw ConfigError(std::string("bad experiment config: ") + e.what());
    }
    return cfg;
}

inline ExperimentConfig load_experiment_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const std::exception& e) {
        throw ConfigError(std::string("config is not valid JSON: ") + e.what());
    }
    return parse_experiment_config(j, std::filesystem::path(path).parent_path().string());
}

inline std::uint64_t file_hash(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("file_hash: cannot open " + path);
    std::uint64_t h = 0xcbf29ce484222325ULL;
    char buf[1 << 16];
    while (in.read(buf, sizeof(buf)) || in.gcount() > 0)
        h = rng::fnv1a(buf, static_cast<std::size_t>(in.gcount()), h);
    return h;
}

// ---------------------------------------------------------------------------
// gen

struct GenResult {
    std::string train_path;
    std::string val_path;
    std::string manifest_path;
    std::uint64_t train_hash = 0;
    std::uint64_t val_hash = 0;
    double max_val_stderr = 0.0;
};

inline GenResult run_gen(const ExperimentConfig& cfg) {
    namespace fs = std::filesystem;
    fs::create_directories(cfg.output_dir);
    const auto grid = cfg.grid();

    GenResult res;
    res.train_path = cfg.output_dir + "/train.dimds";
    res.val_path = cfg.output_dir + "/val.dimds";
    res.manifest_path = cfg.output_dir + "/gen_manifest.json";

    const TrainingSet train_set = generate_training(cfg.bounds, cfg.k_train, cfg.portfolio, grid,
                                                    cfg.simm, cfg.dataset_seed, cfg.threads);
    save_dataset(train_set, res.train_path);
    // Validation rows draw from an offset state-index block so their paths
    // never reuse training-label streams under the shared seed.
    const TrainingSet val_set =
        generate_validation(cfg.bounds, cfg.k_val, cfg.m_val, cfg.portfolio, grid, cfg.simm,
                            cfg.dataset_seed + 1, cfg.threads);
    save_dataset(val_set, res.val_path);

    res.train_hash = file_hash(res.train_path);
    res.val_hash = file_hash(res.val_path);
    res.max_val_stderr = max_stderr(val_set);

    nlohmann::json manifest;
    manifest["config"] = cfg.raw.is_null() ? nlohmann::json::object() : cfg.raw;
    manifest["setting"] = setting_name(cfg.setting);
    manifest["grid"] = {{"n_times", cfg.n_times}, {"t_final", cfg.t_final}};
    manifest["k_train"] = cfg.k_train;
    manifest["k_val"] = cfg.k_val;
    manifest["m_val"] = cfg.m_val;
    manifest["dataset_seed"] = cfg.dataset_seed;
    manifest["simm_hash"] = simm_config_hash(cfg.simm);
    manifest["portfolio_hash"] = portfolio_hash(cfg.portfolio);
    manifest["train_file"] = {{"path", "train.dimds"},
                              {"fnv1a", res.train_hash},
                              {"rows", train_set.rows()},
                              {"skipped", train_set.meta.skipped}};
    manifest["val_file"] = {{"path", "val.dimds"},
                            {"fnv1a", res.val_hash},
                            {"rows", val_set.rows()},
                            {"skipped", val_set.meta.skipped},
                            {"max_stderr", res.max_val_stderr}};
    std::ofstream out(res.manifest_path);
    out << manifest.dump(2) << '\n';
    return res;
}

// ---------------------------------------------------------------------------
// train

// Shuffled-prefix subset: rows are permuted once under the seed, then the
// first `subset` rows form the reduced training set.
inline TrainingSet make_shuffled_subset(const TrainingSet& ts, std::size_t subset,
                                        std::uint64_t seed) {
    if (subset == 0 || subset >= ts.rows()) subset = ts.rows();
    std::vector<std::uint32_t> order(ts.rows());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<std::uint32_t>(i);
    rng::Stream s(seed, 0x73756273u);
    rng::shuffle(order.begin(), order.end(), s);
    TrainingSet out;
    out.meta = ts.meta;
    out.row_indices.reserve(subset);
    out.states.reserve(subset * ts.meta.d);
    out.labels.reserve(subset * ts.meta.n_times);
    for (std::size_t i = 0; i < subset; ++i) {
        const std::size_t r = order[i];
        out.row_indices.push_back(ts.row_indices[r]);
        out.states.insert(out.states.end(), ts.state_row(r), ts.state_row(r) + ts.meta.d);
        out.labels.insert(out.labels.end(), ts.label_row(r), ts.label_row(r) + ts.meta.n_times);
        if (ts.meta.has_stderr) {
            const double* e = ts.stderrs.data() + r * ts.meta.n_times;
            out.stderrs.insert(out.stderrs.end(), e, e + ts.meta.n_times);
        }
    }
    return out;
}

// Validation RMSE in label units (currency).
inline double validation_rmse(const MlpModel& model, const TrainingSet& val) {
    double acc = 0.0;
    for (std::size_t r = 0; r < val.rows(); ++r) {
        const Eigen::VectorXd pred = forward(model, val.state_row(r), static_cast<int>(val.meta.d));
        const Eigen::Map<const Eigen::VectorXd> truth(val.label_row(r), val.meta.n_times);
        acc += (pred - truth).squaredNorm();
    }
    return std::sqrt(acc / (static_cast<double>(val.rows()) * val.meta.n_times));
}

struct TrainOutcome {
    std::vector<std::string> model_paths;
    std::vector<double> trial_rmse;
    double rmse_mean = 0.0;
    double rmse_ci_half = 0.0;  // 95% t-interval half width (0 for one trial)
    std::string summary_path;
};

inline TrainOutcome run_train(const ExperimentConfig& cfg, const std::string& train_path,
                              const std::string& val_path, std::size_t subset = 0,
                              const std::string& tag = "") {
    namespace fs = std::filesystem;
    fs::create_directories(cfg.output_dir);
    const TrainingSet full = load_dataset(train_path);
    const TrainingSet val = load_dataset(val_path);
    const TrainingSet ts = make_shuffled_subset(full, subset, cfg.train_seed);

    TrainOutcome out;
    const std::string stem = cfg.output_dir + "/model" + (tag.empty() ? "" : "_" + tag);
    for (int trial = 0; trial < cfg.trials; ++trial) {
        TrainConfig tc = cfg.training;
        tc.seed = cfg.train_seed + static_cast<std::uint64_t>(trial);
        auto [model, report] = train(ts, val, tc);
        const std::string model_path = stem + "_t" + std::to_string(trial) + ".dimnn";
        save_model(model, model_path, 0);
        save_train_report_csv(report, stem + "_t" + std::to_string(trial) + "_report.csv");
        out.model_paths.push_back(model_path);
        out.trial_rmse.push_back(validation_rmse(model, val));
    }
    const auto r = static_cast<double>(out.trial_rmse.size());
    for (const double v : out.trial_rmse) out.rmse_mean += v;
    out.rmse_mean /= r;
    if (out.trial_rmse.size() > 1) {
        double ss = 0.0;
        for (const double v : out.trial_rmse) ss += (v - out.rmse_mean) * (v - out.rmse_mean);
        const double sd = std::sqrt(ss / (r - 1.0));
        out.rmse_ci_half = t_multiplier_95(static_cast<int>(out.trial_rmse.size()) - 1) * sd /
                           std::sqrt(r);
    }

    nlohmann::json summary;
    summary["tag"] = tag;
    summary["subset_rows"] = ts.rows();
    summary["trials"] = cfg.trials;
    summary["trial_rmse"] = out.trial_rmse;
    summary["rmse_mean"] = out.rmse_mean;
    summary["rmse_ci95_half_width"] = out.rmse_ci_half;
    summary["models"] = out.model_paths;
    out.summary_path = stem + "_summary.json";
    std::ofstream o(out.summary_path);
    o << summary.dump(2) << '\n';
    return out;
}

// ---------------------------------------------------------------------------
// report

// Monitoring index with the largest cross-state variance of the ground
// truth labels; the natural place to probe prediction errors.
inline std::size_t highest_variance_index(const TrainingSet& val) {
    const std::size_t n = val.meta.n_times;
    std::size_t best = 0;
    double best_var = -1.0;
    for (std::size_t i = 0; i < n; ++i) {
        double s = 0.0, ss = 0.0;
        for (std::size_t r = 0; r < val.rows(); ++r) {
            const double v = val.label_row(r)[i];
            s += v;
            ss += v * v;
        }
        const double mean = s / static_cast<double>(val.rows());
        const double var = ss / static_cast<double>(val.rows()) - mean * mean;
        if (var > best_var) {
            best_var = var;
            best = i;
        }
    }
    return best;
}

inline std::size_t nearest_time_index(const SimulationGrid& grid, double t) {
    std::size_t best = 0;
    double dist = std::abs(grid.times[0] - t);
    for (std::size_t i = 1; i < grid.times.size(); ++i) {
        const double d = std::abs(grid.times[i] - t);
        if (d < dist) {
            dist = d;
            best = i;
        }
    }
    return best;
}

struct ReportResult {
    double rmse_mean = 0.0;
    std::size_t t_gamma_index = 0;
    double t_gamma = 0.0;
    double mva_median_rel_err = 0.0;
    double mva_max_rel_err = 0.0;
    std::string metrics_path;
};

inline ReportResult run_report(const ExperimentConfig& cfg,
                               const std::vector<std::string>& model_paths,
                               const std::string& val_path) {
    namespace fs = std::filesystem;
    fs::create_directories(cfg.output_dir);
    const TrainingSet val = load_dataset(val_path);
    const auto grid = val.meta.grid();
    std::vector<MlpModel> models;
    for (const auto& p : model_paths) models.push_back(load_model(p));
    if (models.empty()) throw ConfigError("report: need at least one model");

    // Mean prediction per validation state across the supplied models.
    const std::size_t n = val.meta.n_times;
    std::vector<double> pred(val.rows() * n, 0.0);
    for (const auto& m : models) {
        if (m.n_inputs() != static_cast<int>(val.meta.d) ||
            m.n_outputs() != static_cast<int>(n))
            throw ConfigError("report: model does not match the validation set dimensions");
        for (std::size_t r = 0; r < val.rows(); ++r) {
            const Eigen::VectorXd p = forward(m, val.state_row(r), static_cast<int>(val.meta.d));
            for (std::size_t i = 0; i < n; ++i)
                pred[r * n + i] += p[static_cast<Eigen::Index>(i)] /
                                   static_cast<double>(models.size());
        }
    }

    ReportResult res;
    res.t_gamma_index =
        cfg.t_gamma >= 0.0 ? nearest_time_index(grid, cfg.t_gamma) : highest_variance_index(val);
    res.t_gamma = grid.times[res.t_gamma_index];

    double acc = 0.0;
    for (std::size_t r = 0; r < val.rows(); ++r)
        for (std::size_t i = 0; i < n; ++i) {
            const double d = pred[r * n + i] - val.label_row(r)[i];
            acc += d * d;
        }
    res.rmse_mean = std::sqrt(acc / (static_cast<double>(val.rows()) * n));

    // Per-variable scatter of prediction - truth at t_gamma.
    {
        std::ofstream out(cfg.output_dir + "/scatter_tgamma.csv");
        const auto names = val.meta.state_bounds().names();
        for (const auto& nm : names) out << nm << ',';
        out << "diff\n";
        char buf[32];
        for (std::size_t r = 0; r < val.rows(); ++r) {
            for (std::size_t j = 0; j < val.meta.d; ++j) {
                std::snprintf(buf, sizeof(buf), "%.17g,", val.state_row(r)[j]);
                out << buf;
            }
            std::snprintf(buf, sizeof(buf), "%.17g\n",
                          pred[r * n + res.t_gamma_index] -
                              val.label_row(r)[res.t_gamma_index]);
            out << buf;
        }
    }

    // MVA per validation state: ground-truth DIM vs predicted DIM.
    std::vector<double> rel_errs;
    {
        std::ofstream out(cfg.output_dir + "/mva.csv");
        out << "row,mva_truth,mva_pred,rel_err\n";
        char buf[128];
        for (std::size_t r = 0; r < val.rows(); ++r) {
            DimTrajectory truth, approx;
            truth.values.assign(val.label_row(r), val.label_row(r) + n);
            approx.values.assign(pred.begin() + r * n, pred.begin() + (r + 1) * n);
            const double mva_truth = mva_quadrature(truth, grid, cfg.funding);
            const double mva_pred = mva_quadrature(approx, grid, cfg.funding);
            const double rel = std::abs(mva_pred - mva_truth) /
                               std::max(std::abs(mva_truth), 1e-300);
            rel_errs.push_back(rel);
            std::snprintf(buf, sizeof(buf), "%zu,%.17g,%.17g,%.17g\n", val.row_indices[r],
                          mva_truth, mva_pred, rel);
            out << buf;
        }
    }
    std::vector<double> sorted = rel_errs;
    std::sort(sorted.begin(), sorted.end());
    res.mva_median_rel_err = sorted.empty() ? 0.0 : sorted[sorted.size() / 2];
    res.mva_max_rel_err = sorted.empty() ? 0.0 : sorted.back();

    // Predicted trajectories, one row per state (intermediates for audit).
    {
        std::ofstream out(cfg.output_dir + "/pred_mean.csv");
        out << "row";
        for (std::size_t i = 0; i < n; ++i) out << ",t" << grid.times[i];
        out << '\n';
        char buf[32];
        for (std::size_t r = 0; r < val.rows(); ++r) {
            out << val.row_indices[r];
            for (std::size_t i = 0; i < n; ++i) {
                std::snprintf(buf, sizeof(buf), ",%.17g", pred[r * n + i]);
                out << buf;
            }
            out << '\n';
        }
    }

    nlohmann::json metrics;
    metrics["models"] = model_paths;
    metrics["rmse_mean_prediction"] = res.rmse_mean;
    metrics["t_gamma_index"] = res.t_gamma_index;
    metrics["t_gamma"] = res.t_gamma;
    metrics["mva_median_rel_err"] = res.mva_median_rel_err;
    metrics["mva_max_rel_err"] = res.mva_max_rel_err;
    metrics["outputs"] = {"scatter_tgamma.csv", "mva.csv", "pred_mean.csv"};

    // Volatility stress grid over (a, sigma) with the other variables pinned.
    if (!cfg.stress.a_values.empty() && !cfg.stress.sigma_values.empty()) {
        const auto names = cfg.bounds.names();
        std::ofstream out(cfg.output_dir + "/stress.csv");
        out << "a,sigma,dim_tgamma_rel_err,dim_2tgamma_rel_err,mva_rel_err\n";
        const std::size_t idx2 = nearest_time_index(grid, 2.0 * res.t_gamma);
        char buf[160];
        std::uint64_t combo = 0;
        for (const double a : cfg.stress.a_values) {
            for (const double sigma : cfg.stress.sigma_values) {
                MarketState st;
                st.setting = cfg.setting;
                st.has_delta = cfg.bounds.has_delta;
                st.x.assign(cfg.bounds.dim(), 0.0);
                for (std::size_t j = 0; j < names.size(); ++j) {
                    if (names[j] == "a") st.x[j] = a;
                    else if (names[j] == "sigma") st.x[j] = sigma;
                    else {
                        const auto it = cfg.stress.fixed.find(names[j]);
                        if (it == cfg.stress.fixed.end())
                            throw ConfigError("stress: missing fixed value for '" + names[j] + "'");
                        st.x[j] = it->second;
                    }
                }
                const DimTrajectory truth = detail::run_state_dim(
                    st, cfg.portfolio, grid, cfg.simm, cfg.m_val, cfg.dataset_seed + 2, combo++);
                Eigen::VectorXd p = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n));
                for (const auto& m : models)
                    p += forward(m, st.x.data(), static_cast<int>(st.x.size())) /
                         static_cast<double>(models.size());
                DimTrajectory approx;
                approx.values.assign(p.data(), p.data() + n);
                const double mva_truth = mva_quadrature(truth, grid, cfg.funding);
                const double mva_pred = mva_quadrature(approx, grid, cfg.funding);
                auto rel = [](double x, double y) {
                    return std::abs(x - y) / std::max(std::abs(y), 1e-300);
                };
                std::snprintf(buf, sizeof(buf), "%.17g,%.17g,%.6e,%.6e,%.6e\n", a, sigma,
                              rel(approx.values[res.t_gamma_index], truth.values[res.t_gamma_index]),
                              rel(approx.values[idx2], truth.values[idx2]),
                              rel(mva_pred, mva_truth));
                out << buf;
            }
        }
        metrics["outputs"].push_back("stress.csv");
    }

    res.metrics_path = cfg.output_dir + "/metrics.json";
    std::ofstream out(res.metrics_path);
    out << metrics.dump(2) << '\n';
    return res;
}

// ---------------------------------------------------------------------------
// one-off trajectory runs

inline void save_dim_csv(const DimTrajectory& dim, const SimulationGrid& grid,
                         const std::string& path) {
    if (dim.values.size() != grid.times.size())
        throw std::invalid_argument("save_dim_csv: trajectory does not match grid");
    std::ofstream out(path);
    if (!out) throw std::runtime_error("save_dim_csv: cannot open " + path);
    out << "t,dim,stderr\n";
    char buf[96];
    for (std::size_t i = 0; i < grid.times.size(); ++i) {
        std::snprintf(buf, sizeof(buf), "%.17g,%.17g,%.17g\n", grid.times[i], dim.values[i],
                      dim.stderrs.empty() ? 0.0 : dim.stderrs[i]);
        out << buf;
    }
}

inline std::pair<DimTrajectory, SimulationGrid> load_dim_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("load_dim_csv: cannot open " + path);
    std::string line;
    if (!std::getline(in, line)) throw std::runtime_error("load_dim_csv: empty file " + path);
    DimTrajectory dim;
    std::vector<double> times;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::istringstream ss(line);
        std::string a, b, c;
        if (!std::getline(ss, a, ',') || !std::getline(ss, b, ',') || !std::getline(ss, c))
            throw std::runtime_error("load_dim_csv: malformed row in " + path);
        times.push_back(std::stod(a));
        dim.values.push_back(std::stod(b));
        dim.stderrs.push_back(std::stod(c));
    }
    if (times.empty()) throw std::runtime_error("load_dim_csv: no rows in " + path);
    const auto n = static_cast<int>(times.size());
    SimulationGrid grid = SimulationGrid::regular(n, times.back());
    for (int i = 0; i < n; ++i)
        if (std::abs(grid.times[static_cast<std::size_t>(i)] - times[static_cast<std::size_t>(i)]) >
            1e-9)
            throw std::runtime_error("load_dim_csv: times are not an equispaced grid from t0");
    return {dim, grid};
}

// One-off DIM run for an explicit market state.
inline DimTrajectory run_dim_once(const ExperimentConfig& cfg, const std::vector<double>& state,
                                  std::size_t m_paths, std::uint64_t seed) {
    MarketState st;
    st.setting = cfg.setting;
    st.has_delta = cfg.bounds.has_delta;
    st.x = state;
    if (st.x.size() != cfg.bounds.dim())
        throw ConfigError("dim: state vector has wrong dimension for the setting");
    return detail::run_state_dim(st, cfg.portfolio, cfg.grid(), cfg.simm, m_paths, seed, 0);
}

}  // namespace dimkit
