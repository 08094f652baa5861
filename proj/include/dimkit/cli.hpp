#pragma once

#include <cstdio>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "experiment.hpp"

// Batch front door: dataset generation, training trials, validation
// reports, one-off DIM runs and MVA integration. Exit codes: 0 ok,
// 2 config error, 3 runtime failure.

namespace dimkit {

inline int run_cli(int argc, const char* const* argv) {
    CLI::App app{"DIM learning pipeline: simulate IR portfolios, compute SIMM margin paths, "
                 "train DIM proxies and integrate MVA"};
    app.require_subcommand(1);

    std::string config_path, train_path, val_path, out_path, dim_path, tag, state_csv;
    std::vector<std::string> model_paths;
    std::size_t subset = 0, m_paths = 1;
    std::uint64_t seed_override = 0;
    bool seed_set = false;
    int trials_override = 0, threads_override = -1;
    double t_gamma_override = -2.0;
    std::size_t k_train_override = 0, k_val_override = 0, m_val_override = 0;
    FundingParams funding_cli{0.4, 1.67e-2, 0.0, 0.0, 0.0};
    bool funding_given = false;

    auto add_config = [&](CLI::App* cmd, bool required) {
        auto* opt = cmd->add_option("--config", config_path, "experiment config (JSON)");
        if (required) opt->required();
    };

    auto* gen = app.add_subcommand("gen", "generate training and validation datasets");
    add_config(gen, true);
    gen->add_option("--output-dir", out_path, "override output directory");
    gen->add_option("--threads", threads_override, "worker threads (0 = all cores)");
    gen->add_option("--k-train", k_train_override, "override training-set size");
    gen->add_option("--k-val", k_val_override, "override validation-set size");
    gen->add_option("--m-val", m_val_override, "override validation path count");
    gen->add_option("--seed", seed_override, "override dataset seed")->each([&](const std::string&) {
        seed_set = true;
    });

    auto* train_cmd = app.add_subcommand("train", "train one or more DIM networks");
    add_config(train_cmd, true);
    train_cmd->add_option("--train", train_path, "training dataset")->required();
    train_cmd->add_option("--val", val_path, "validation dataset")->required();
    train_cmd->add_option("--subset", subset, "shuffled-prefix subset size (0 = all rows)");
    train_cmd->add_option("--trials", trials_override, "number of training trials");
    train_cmd->add_option("--tag", tag, "output filename tag");
    train_cmd->add_option("--output-dir", out_path, "override output directory");

    auto* report = app.add_subcommand("report", "validation metrics, scatters, MVA and stress grid");
    add_config(report, true);
    report->add_option("--val", val_path, "validation dataset")->required();
    report->add_option("--model", model_paths, "model file (repeatable)")->required();
    report->add_option("--t-gamma", t_gamma_override, "probe time (default: highest DIM variance)");
    report->add_option("--output-dir", out_path, "override output directory");

    auto* dim = app.add_subcommand("dim", "one-off DIM trajectory for an explicit market state");
    add_config(dim, true);
    dim->add_option("--state", state_csv, "comma-separated state vector")->required();
    dim->add_option("--m", m_paths, "number of MC paths")->required();
    dim->add_option("--seed", seed_override, "simulation seed")->each([&](const std::string&) {
        seed_set = true;
    });
    dim->add_option("--out", dim_path, "output CSV (t,dim,stderr)")->required();

    auto* mva = app.add_subcommand("mva", "integrate MVA from a DIM trajectory CSV");
    mva->add_option("--dim", dim_path, "DIM trajectory CSV")->required();
    mva->add_option("--recovery", funding_cli.recovery, "recovery rate")->each([&](const std::string&) {
        funding_given = true;
    });
    mva->add_option("--lambda-b", funding_cli.lambda_b, "own default intensity");
    mva->add_option("--lambda-c", funding_cli.lambda_c, "counterparty default intensity");
    mva->add_option("--im-spread", funding_cli.im_spread, "spread earned on IM");
    add_config(mva, false);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        if (app.got_subcommand(mva)) {
            const auto [traj, grid] = load_dim_csv(dim_path);
            FundingParams funding = funding_cli;
            if (!config_path.empty() && !funding_given)
                funding = load_experiment_config(config_path).funding;
            funding.validate();
            std::printf("{\"mva\": %.17g}\n", mva_quadrature(traj, grid, funding));
            return 0;
        }

        ExperimentConfig cfg = load_experiment_config(config_path);
        if (!out_path.empty()) cfg.output_dir = out_path;
        if (threads_override >= 0) cfg.threads = threads_override;
        if (trials_override > 0) cfg.trials = trials_override;
        if (k_train_override > 0) cfg.k_train = k_train_override;
        if (k_val_override > 0) cfg.k_val = k_val_override;
        if (m_val_override > 0) cfg.m_val = m_val_override;
        if (seed_set) cfg.dataset_seed = seed_override;
        if (t_gamma_override > -2.0) cfg.t_gamma = t_gamma_override;

        if (app.got_subcommand(gen)) {
            const GenResult res = run_gen(cfg);
            std::printf("train=%s fnv1a=%016llx\n", res.train_path.c_str(),
                        static_cast<unsigned long long>(res.train_hash));
            std::printf("val=%s fnv1a=%016llx max_stderr=%.6e\n", res.val_path.c_str(),
                        static_cast<unsigned long long>(res.val_hash), res.max_val_stderr);
            std::printf("manifest=%s\n", res.manifest_path.c_str());
        } else if (app.got_subcommand(train_cmd)) {
            const TrainOutcome res = run_train(cfg, train_path, val_path, subset, tag);
            for (std::size_t t = 0; t < res.trial_rmse.size(); ++t)
                std::printf("trial=%zu rmse=%.6e model=%s\n", t, res.trial_rmse[t],
                            res.model_paths[t].c_str());
            std::printf("rmse_mean=%.6e ci95_half=%.6e summary=%s\n", res.rmse_mean,
                        res.rmse_ci_half, res.summary_path.c_str());
        } else if (app.got_subcommand(report)) {
            const ReportResult res = run_report(cfg, model_paths, val_path);
            std::printf("rmse=%.6e t_gamma=%.6g mva_median_rel=%.6e mva_max_rel=%.6e\n",
                        res.rmse_mean, res.t_gamma, res.mva_median_rel_err, res.mva_max_rel_err);
            std::printf("metrics=%s\n", res.metrics_path.c_str());
        } else if (app.got_subcommand(dim)) {
            std::vector<double> state;
            std::stringstream ss(state_csv);
            std::string item;
            while (std::getline(ss, item, ',')) state.push_back(std::stod(item));
            const DimTrajectory traj =
                run_dim_once(cfg, state, m_paths, seed_set ? seed_override : cfg.dataset_seed);
            save_dim_csv(traj, cfg.grid(), dim_path);
            std::printf("dim=%s points=%zu\n", dim_path.c_str(), traj.values.size());
        }
        return 0;
    } catch (const ConfigError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return 2;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 3;
    }
}

}  // namespace dimkit
