#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "leakguard/dataset.hpp"
#include "leakguard/learners.hpp"
#include "leakguard/metrics.hpp"
#include "leakguard/preprocess.hpp"
#include "leakguard/split.hpp"

namespace leakguard {

enum class FoldStatus { success, skipped, failed };
std::string fold_status_name(FoldStatus s);

struct FoldRecord {
    int repeat_index = 0;
    int fold_index = 0;
    FoldStatus status = FoldStatus::success;
    std::string message;
    std::vector<MetricValue> metrics;
    std::vector<std::int32_t> test_rows;
    std::vector<double> predictions;  // parallel to test_rows
    int n_features_in = 0;
    int n_features_out = 0;
    std::string preproc_hash;
    double lambda = 0.0;  // chosen penalty where applicable
    int model_iterations = 0;
};

struct MetricAggregate {
    MetricKind metric = MetricKind::auc;
    double mean = 0.0;
    double sd = 0.0;
    double ci_lo = 0.0;
    double ci_hi = 0.0;
    int folds_used = 0;
};

struct FitResult {
    TaskKind task = TaskKind::binary_classification;
    std::string outcome;
    std::string positive_class;
    LearnerSpec learner;
    PreprocSpec preprocess;
    std::vector<MetricKind> metrics;
    std::uint64_t seed = 1;
    int n_rows = 0;
    SplitPlan plan;
    std::vector<FoldRecord> folds;
    std::vector<MetricAggregate> aggregates;
    // refit payload: enough to re-run the whole pipeline under permuted labels
    bool refit_payload = true;
    std::string data_ref;   // path for CLI round trips
    std::string data_hash;  // dataset content hash

    const MetricAggregate& aggregate(MetricKind m) const;
    bool has_predictions() const;
};

FitResult fit_resample(const Dataset& ds, const SplitPlan& plan, const LearnerSpec& learner,
                       const PreprocSpec& preprocess, const std::vector<MetricKind>& metrics,
                       std::uint64_t seed, bool store_refit_data = true);

// Per-repeat summaries: test-set-size weighted mean over that repeat's
// successful folds. Repeats with no aggregable fold are dropped.
struct RepeatSummary {
    std::vector<int> repeat_index;
    std::vector<double> value;
    std::vector<int> dropped_repeats;
};
RepeatSummary aggregate_repeats(const FitResult& fit, MetricKind metric);

// aggregation used everywhere a FitResult is reported: mean/sd across
// successful folds plus a t interval clipped to the metric range
MetricAggregate aggregate_metric(const std::vector<FoldRecord>& folds, MetricKind metric);

enum class TuneSelection { best, one_std_err };

struct TuneFoldReport {
    int repeat_index = 0;
    int fold_index = 0;
    double chosen_lambda = 0.0;
    double best_lambda = 0.0;  // before the one-std-err step
    std::vector<double> candidates;
    std::vector<double> candidate_mean;
    std::vector<double> candidate_se;
    std::vector<int> candidate_inner_folds;
};

struct TuneResult {
    FitResult outer;
    MetricKind tuning_metric = MetricKind::auc;
    TuneSelection selection = TuneSelection::one_std_err;
    std::vector<TuneFoldReport> fold_reports;
    double final_lambda = 0.0;  // median of per-fold winners
    bool refitted = false;
    FittedModel final_model;
    FittedPreproc final_preproc;
};

struct TuneOptions {
    int grid_size = 5;
    std::vector<double> explicit_grid;  // overrides grid_size when non-empty
    TuneSelection selection = TuneSelection::one_std_err;
    bool refit = true;
};

// Requires a nested plan. The learner must be the elastic net; its lambda is
// the tuned parameter.
TuneResult tune_resample(const Dataset& ds, const SplitPlan& plan, const LearnerSpec& learner,
                         const PreprocSpec& preprocess, const std::vector<MetricKind>& metrics,
                         const TuneOptions& opts, std::uint64_t seed);

}  // namespace leakguard
