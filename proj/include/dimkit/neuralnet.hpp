#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <numeric>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "dataset.hpp"
#include "rng.hpp"

// Multi-output feed-forward network and trainer: Glorot-uniform init, ReLU
// hidden layers, linear output, min-max input normalization, MSE loss, Adam
// with plateau learning-rate halving and early stopping. Training is
// single-threaded and bit-deterministic given the seed; trained models are
// immutable and inference is pure.

namespace dimkit {

struct MlpModel {
    std::vector<int> dims;  // [d, hidden..., n_outputs]
    std::vector<Eigen::MatrixXd> weights;  // weights[l]: dims[l+1] x dims[l]
    std::vector<Eigen::VectorXd> biases;
    Eigen::VectorXd in_lo, in_hi;  // per-input normalization bounds

    int n_inputs() const { return dims.front(); }
    int n_outputs() const { return dims.back(); }
    std::size_t n_layers() const { return weights.size(); }
};

inline void validate_dims(const std::vector<int>& dims) {
    if (dims.size() < 2) throw std::invalid_argument("MlpModel: need input and output dims");
    for (const int d : dims)
        if (d < 1) throw std::invalid_argument("MlpModel: layer widths must be positive");
}

// Weights uniform on +-sqrt(6/(fan_in+fan_out)), biases zero.
inline MlpModel glorot_init(const std::vector<int>& dims, const Eigen::VectorXd& in_lo,
                            const Eigen::VectorXd& in_hi, std::uint64_t seed) {
    validate_dims(dims);
    if (in_lo.size() != dims.front() || in_hi.size() != dims.front())
        throw std::invalid_argument("glorot_init: normalization bounds must match input width");
    for (int j = 0; j < in_lo.size(); ++j)
        if (!(in_lo[j] < in_hi[j]))
            throw std::invalid_argument("glorot_init: need lo < hi per input");
    MlpModel m;
    m.dims = dims;
    m.in_lo = in_lo;
    m.in_hi = in_hi;
    rng::Stream stream(seed, 0x676c6f72u);
    for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
        const int fan_in = dims[l], fan_out = dims[l + 1];
        const double limit = std::sqrt(6.0 / (fan_in + fan_out));
        Eigen::MatrixXd w(fan_out, fan_in);
        for (int c = 0; c < fan_in; ++c)
            for (int r = 0; r < fan_out; ++r)
                w(r, c) = limit * (2.0 * stream.next_uniform01() - 1.0);
        m.weights.push_back(std::move(w));
        m.biases.emplace_back(Eigen::VectorXd::Zero(fan_out));
    }
    return m;
}

// Inputs normalized to [0,1] through the stored bounds.
inline Eigen::MatrixXd normalize_inputs(const MlpModel& m, const Eigen::MatrixXd& x) {
    return (x.colwise() - m.in_lo).array().colwise() / (m.in_hi - m.in_lo).array();
}

// Batch forward pass; columns are samples.
inline Eigen::MatrixXd forward_batch(const MlpModel& m, const Eigen::MatrixXd& x) {
    if (x.rows() != m.n_inputs()) throw std::invalid_argument("forward: input dim mismatch");
    Eigen::MatrixXd a = normalize_inputs(m, x);
    for (std::size_t l = 0; l < m.n_layers(); ++l) {
        Eigen::MatrixXd z = (m.weights[l] * a).colwise() + m.biases[l];
        if (l + 1 < m.n_layers()) a = z.cwiseMax(0.0);
        else a = std::move(z);
    }
    return a;
}

inline Eigen::VectorXd forward(const MlpModel& m, const Eigen::VectorXd& x) {
    return forward_batch(m, x);
}

inline Eigen::VectorXd forward(const MlpModel& m, const double* state, int d) {
    return forward(m, Eigen::Map<const Eigen::VectorXd>(state, d));
}

// Mean over outputs of the squared difference.
inline double mse_loss(const Eigen::VectorXd& pred, const Eigen::VectorXd& label) {
    if (pred.size() != label.size()) throw std::invalid_argument("mse_loss: length mismatch");
    return (pred - label).squaredNorm() / static_cast<double>(pred.size());
}

// Batch MSE: mean over outputs and samples.
inline double mse_loss_batch(const Eigen::MatrixXd& pred, const Eigen::MatrixXd& label) {
    if (pred.rows() != label.rows() || pred.cols() != label.cols())
        throw std::invalid_argument("mse_loss_batch: shape mismatch");
    return (pred - label).squaredNorm() / static_cast<double>(pred.size());
}

struct Gradients {
    std::vector<Eigen::MatrixXd> w;
    std::vector<Eigen::VectorXd> b;
};

inline Gradients zero_gradients(const MlpModel& m) {
    Gradients g;
    for (std::size_t l = 0; l < m.n_layers(); ++l) {
        g.w.emplace_back(Eigen::MatrixXd::Zero(m.weights[l].rows(), m.weights[l].cols()));
        g.b.emplace_back(Eigen::VectorXd::Zero(m.biases[l].size()));
    }
    return g;
}

// Backpropagation of the batch MSE; returns the loss and fills gradients.
inline double backprop(const MlpModel& m, const Eigen::MatrixXd& x, const Eigen::MatrixXd& y,
                       Gradients& grads) {
    const std::size_t n_layers = m.n_layers();
    std::vector<Eigen::MatrixXd> activations(n_layers + 1);
    activations[0] = normalize_inputs(m, x);
    for (std::size_t l = 0; l < n_layers; ++l) {
        Eigen::MatrixXd z = (m.weights[l] * activations[l]).colwise() + m.biases[l];
        activations[l + 1] = (l + 1 < n_layers) ? z.cwiseMax(0.0) : std::move(z);
    }
    const Eigen::MatrixXd& pred = activations[n_layers];
    const double loss = (pred - y).squaredNorm() / static_cast<double>(pred.size());

    Eigen::MatrixXd delta = 2.0 * (pred - y) / static_cast<double>(pred.size());
    for (std::size_t l = n_layers; l-- > 0;) {
        grads.w[l].noalias() = delta * activations[l].transpose();
        grads.b[l] = delta.rowwise().sum();
        if (l > 0) {
            Eigen::MatrixXd back = m.weights[l].transpose() * delta;
            // ReLU mask from the post-activation values of the layer below.
            delta = back.cwiseProduct(
                (activations[l].array() > 0.0).cast<double>().matrix());
        }
    }
    return loss;
}

struct AdamState {
    Gradients m, v;
    long step = 0;
};

inline AdamState make_adam_state(const MlpModel& model) {
    return {zero_gradients(model), zero_gradients(model), 0};
}

// Adam with default moments and bias correction.
inline void adam_step(MlpModel& model, const Gradients& grads, AdamState& st, double lr,
                      double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8) {
    ++st.step;
    const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(st.step));
    const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(st.step));
    for (std::size_t l = 0; l < model.n_layers(); ++l) {
        st.m.w[l] = beta1 * st.m.w[l] + (1.0 - beta1) * grads.w[l];
        st.v.w[l] = beta2 * st.v.w[l].array().matrix() +
                    (1.0 - beta2) * grads.w[l].array().square().matrix();
        model.weights[l].array() -=
            lr * (st.m.w[l].array() / bc1) / ((st.v.w[l].array() / bc2).sqrt() + eps);
        st.m.b[l] = beta1 * st.m.b[l] + (1.0 - beta1) * grads.b[l];
        st.v.b[l] = beta2 * st.v.b[l].array().matrix() +
                    (1.0 - beta2) * grads.b[l].array().square().matrix();
        model.biases[l].array() -=
            lr * (st.m.b[l].array() / bc1) / ((st.v.b[l].array() / bc2).sqrt() + eps);
    }
}

struct TrainConfig {
    std::vector<int> hidden = {256, 256, 256};
    int batch_size = 4096;
    int max_epochs = 2000;
    double lr0 = 1e-3;
    double lr_floor = 1e-6;
    double lr_factor = 0.5;
    int plateau_patience = 50;     // epochs without a new best before halving
    int early_stop_patience = 200; // epochs without a new best before stopping
    double target_val_mse = 0.0;   // stop once reached; 0 disables
    std::uint64_t seed = 0;

    void validate() const {
        if (batch_size < 1 || max_epochs < 1 || plateau_patience < 1 || early_stop_patience < 1)
            throw std::invalid_argument("TrainConfig: counts must be positive");
        if (!(lr0 > 0.0) || !(lr_floor > 0.0) || lr_floor > lr0)
            throw std::invalid_argument("TrainConfig: need 0 < lr_floor <= lr0");
        if (!(lr_factor > 0.0 && lr_factor < 1.0))
            throw std::invalid_argument("TrainConfig: lr_factor must be in (0,1)");
    }
};

struct TrainReport {
    std::vector<double> train_mse;
    std::vector<double> val_mse;
    std::vector<double> lr;
    std::string stop_reason;
    int best_epoch = 0;
    double best_val_mse = 0.0;
    double wall_seconds = 0.0;
};

inline void save_train_report_csv(const TrainReport& r, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("save_train_report_csv: cannot open " + path);
    out << "epoch,train_mse,val_mse,lr\n";
    char buf[96];
    for (std::size_t e = 0; e < r.train_mse.size(); ++e) {
        std::snprintf(buf, sizeof(buf), "%zu,%.17g,%.17g,%.17g\n", e + 1, r.train_mse[e],
                      r.val_mse[e], r.lr[e]);
        out << buf;
    }
}

namespace detail {

inline Eigen::MatrixXd to_columns(const std::vector<double>& row_major, std::size_t rows,
                                  std::size_t width) {
    Eigen::MatrixXd out(width, rows);
    for (std::size_t r = 0; r < rows; ++r)
        out.col(static_cast<Eigen::Index>(r)) =
            Eigen::Map<const Eigen::VectorXd>(row_major.data() + r * width,
                                              static_cast<Eigen::Index>(width));
    return out;
}

}  // namespace detail

// Mini-batch Adam over shuffled epochs with validation-driven LR halving
// and early stopping; returns the best-validation snapshot.
inline std::pair<MlpModel, TrainReport> train(const TrainingSet& train_set,
                                              const TrainingSet& val_set,
                                              const TrainConfig& cfg) {
    cfg.validate();
    if (train_set.meta.d != val_set.meta.d || train_set.meta.n_times != val_set.meta.n_times ||
        train_set.meta.t_final != val_set.meta.t_final ||
        train_set.meta.setting != val_set.meta.setting)
        throw std::invalid_argument("train: incompatible training and validation sets");
    if (train_set.rows() == 0 || val_set.rows() == 0)
        throw std::invalid_argument("train: empty dataset");

    const auto t_start = std::chrono::steady_clock::now();
    const std::size_t d = train_set.meta.d;
    const std::size_t n_out = train_set.meta.n_times;
    const std::size_t k = train_set.rows();

    const Eigen::MatrixXd x_all = detail::to_columns(train_set.states, k, d);
    const Eigen::MatrixXd y_all = detail::to_columns(train_set.labels, k, n_out);
    const Eigen::MatrixXd x_val = detail::to_columns(val_set.states, val_set.rows(), d);
    const Eigen::MatrixXd y_val = detail::to_columns(val_set.labels, val_set.rows(), n_out);

    std::vector<int> dims;
    dims.push_back(static_cast<int>(d));
    for (const int hdim : cfg.hidden) dims.push_back(hdim);
    dims.push_back(static_cast<int>(n_out));

    Eigen::VectorXd lo(d), hi(d);
    for (std::size_t j = 0; j < d; ++j) {
        lo[static_cast<Eigen::Index>(j)] = train_set.meta.bounds[j].first;
        hi[static_cast<Eigen::Index>(j)] = train_set.meta.bounds[j].second;
    }

    MlpModel model = glorot_init(dims, lo, hi, cfg.seed);
    AdamState adam = make_adam_state(model);
    Gradients grads = zero_gradients(model);

    std::vector<std::uint32_t> order(k);
    std::iota(order.begin(), order.end(), 0u);

    MlpModel best = model;
    double best_val = std::numeric_limits<double>::infinity();
    int best_epoch = 0;
    int epochs_since_best = 0;
    double lr = cfg.lr0;
    TrainReport report;
    report.stop_reason = "max_epochs";

    const auto batch = static_cast<std::size_t>(cfg.batch_size);
    Eigen::MatrixXd xb(d, std::min(batch, k)), yb(n_out, std::min(batch, k));

    for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
        rng::Stream shuffle_stream(cfg.seed, 0x65706f00u + static_cast<std::uint64_t>(epoch));
        rng::shuffle(order.begin(), order.end(), shuffle_stream);

        double loss_sum = 0.0;
        std::size_t seen = 0;
        for (std::size_t at = 0; at < k; at += batch) {
            const std::size_t b = std::min(batch, k - at);
            xb.resize(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(b));
            yb.resize(static_cast<Eigen::Index>(n_out), static_cast<Eigen::Index>(b));
            for (std::size_t c = 0; c < b; ++c) {
                xb.col(static_cast<Eigen::Index>(c)) = x_all.col(order[at + c]);
                yb.col(static_cast<Eigen::Index>(c)) = y_all.col(order[at + c]);
            }
            const double loss = backprop(model, xb, yb, grads);
            adam_step(model, grads, adam, lr);
            loss_sum += loss * static_cast<double>(b);
            seen += b;
        }
        const double train_mse = loss_sum / static_cast<double>(seen);
        const double val_mse = mse_loss_batch(forward_batch(model, x_val), y_val);

        report.train_mse.push_back(train_mse);
        report.val_mse.push_back(val_mse);
        report.lr.push_back(lr);

        if (val_mse < best_val) {
            best_val = val_mse;
            best = model;
            best_epoch = epoch;
            epochs_since_best = 0;
        } else {
            ++epochs_since_best;
        }
        if (cfg.target_val_mse > 0.0 && best_val < cfg.target_val_mse) {
            report.stop_reason = "target_reached";
            break;
        }
        if (epochs_since_best >= cfg.early_stop_patience) {
            report.stop_reason = "no_improvement";
            break;
        }
        if (epochs_since_best > 0 && epochs_since_best % cfg.plateau_patience == 0 &&
            lr > cfg.lr_floor) {
            lr = std::max(lr * cfg.lr_factor, cfg.lr_floor);
        }
    }

    report.best_epoch = best_epoch;
    report.best_val_mse = best_val;
    report.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
    return {std::move(best), std::move(report)};
}

namespace detail {
inline constexpr char kModelMagic[8] = {'D', 'I', 'M', 'K', 'M', 'L', 'P', '1'};
}

inline void save_model(const MlpModel& m, const std::string& path,
                       std::uint64_t train_config_hash = 0) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("save_model: cannot open " + path);
    out.write(detail::kModelMagic, 8);
    const auto n_dims = static_cast<std::uint32_t>(m.dims.size());
    detail::write_pod(out, std::uint32_t{1});
    detail::write_pod(out, n_dims);
    for (const int d : m.dims) detail::write_pod(out, static_cast<std::int32_t>(d));
    for (int j = 0; j < m.n_inputs(); ++j) {
        detail::write_pod(out, m.in_lo[j]);
        detail::write_pod(out, m.in_hi[j]);
    }
    for (std::size_t l = 0; l < m.n_layers(); ++l) {
        const auto& w = m.weights[l];
        for (Eigen::Index r = 0; r < w.rows(); ++r)
            for (Eigen::Index c = 0; c < w.cols(); ++c) detail::write_pod(out, w(r, c));
        for (Eigen::Index r = 0; r < m.biases[l].size(); ++r)
            detail::write_pod(out, m.biases[l][r]);
    }
    detail::write_pod(out, train_config_hash);
    if (!out) throw std::runtime_error("save_model: write failed for " + path);
}

inline MlpModel load_model(const std::string& path, std::uint64_t* train_config_hash = nullptr) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("load_model: cannot open " + path);
    char magic[8];
    in.read(magic, 8);
    if (std::memcmp(magic, detail::kModelMagic, 8) != 0)
        throw std::runtime_error("load_model: bad magic in " + path);
    std::uint32_t version = 0, n_dims = 0;
    detail::read_pod(in, version);
    if (version != 1) throw std::runtime_error("load_model: unsupported version");
    detail::read_pod(in, n_dims);
    MlpModel m;
    m.dims.resize(n_dims);
    for (auto& d : m.dims) {
        std::int32_t v = 0;
        detail::read_pod(in, v);
        d = v;
    }
    validate_dims(m.dims);
    m.in_lo.resize(m.dims.front());
    m.in_hi.resize(m.dims.front());
    for (int j = 0; j < m.n_inputs(); ++j) {
        detail::read_pod(in, m.in_lo[j]);
        detail::read_pod(in, m.in_hi[j]);
    }
    for (std::size_t l = 0; l + 1 < m.dims.size(); ++l) {
        Eigen::MatrixXd w(m.dims[l + 1], m.dims[l]);
        for (Eigen::Index r = 0; r < w.rows(); ++r)
            for (Eigen::Index c = 0; c < w.cols(); ++c) detail::read_pod(in, w(r, c));
        Eigen::VectorXd b(m.dims[l + 1]);
        for (Eigen::Index r = 0; r < b.size(); ++r) detail::read_pod(in, b[r]);
        m.weights.push_back(std::move(w));
        m.biases.push_back(std::move(b));
    }
    std::uint64_t h = 0;
    detail::read_pod(in, h);
    if (train_config_hash) *train_config_hash = h;
    if (!in) throw std::runtime_error("load_model: truncated file " + path);
    return m;
}

}  // namespace dimkit
