#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "leakguard/audit.hpp"
#include "leakguard/dataset.hpp"
#include "leakguard/split.hpp"
#include "leakguard/stats.hpp"

namespace leakguard {

enum class SimMechanism { none, subject_overlap, batch_confounded, peek_norm, lookahead };
std::string mechanism_name(SimMechanism m);
SimMechanism mechanism_from_name(const std::string& s);

struct SimConfig {
    SimMechanism mechanism = SimMechanism::none;
    int n = 250;
    int p = 10;
    double s = 0.0;  // latent signal level
    std::uint64_t seed = 1;
    int subjects = 0;  // 0 picks ~n/3 contiguous subjects
    int batches = 6;
    int studies = 4;
    double ar_rho = 0.9;
    double peek_var = 0.09;
    int signal_features = 5;
    double batch_logit_offset = 1.0;
    double lookahead_noise_sd = 2.0;
};

struct SimDataset {
    Dataset data;
    std::vector<std::string> leak_columns;
    std::vector<double> signal_coefficients;  // per predictor x1..xp
    SimConfig config;
};

SimDataset simulate(const SimConfig& cfg);

struct SimGridOptions {
    double alpha = 0.05;
    int B = 200;
    int v = 5;
    SplitMode split_mode = SplitMode::subject_grouped;
    std::string checkpoint_dir;  // empty disables checkpoints
    std::string learner = "glmnet:alpha=0.9";
    std::string preprocess = "impute=median,normalize=zscore";
};

struct SimTaskResult {
    SimConfig config;
    std::string split_mode;
    bool ok = false;
    std::string message;
    double observed = 0.0;
    double perm_mean = 0.0;
    double gap = 0.0;
    double p_value = 1.0;
    bool reject = false;
};

struct SimCell {
    SimMechanism mechanism = SimMechanism::none;
    std::string split_mode;
    int n = 0;
    int p = 0;
    double s = 0.0;
    int seeds = 0;       // tasks attempted
    int completed = 0;   // tasks with a result
    int rejections = 0;
    double rejection_rate = 0.0;
    WilsonInterval wilson;
    double mean_observed = 0.0;
    double mean_gap = 0.0;
    std::vector<std::string> failures;
};

struct SimGrid {
    std::vector<SimTaskResult> tasks;
    std::vector<SimCell> cells;
};

// One dataset: simulate, split, fit the guarded pipeline, audit with
// fixed-prediction permutations.
SimTaskResult run_sim_task(const SimConfig& cfg, const SimGridOptions& opts);

// Factorial grid over mechanism x n x p x s with seeds 1..n_seeds; base
// carries the remaining generator settings.
SimGrid run_grid(const std::vector<SimMechanism>& mechanisms, const std::vector<int>& ns,
                 const std::vector<int>& ps, const std::vector<double>& ss, int n_seeds,
                 const SimGridOptions& opts, const SimConfig& base = {});

// Split-mode supplementary grid at n=500, p=20, s=0. Uses one batch per fold
// so batch blocking aligns exactly with the confounding structure.
SimGrid run_split_mode_grid(const std::vector<SplitMode>& modes,
                            const std::vector<SimMechanism>& mechanisms, int n_seeds,
                            const SimGridOptions& opts, const SimConfig& base = {});

std::string grid_table_csv(const SimGrid& grid);

}  // namespace leakguard
