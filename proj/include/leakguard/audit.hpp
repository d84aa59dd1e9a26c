#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "leakguard/resample.hpp"

namespace leakguard {

enum class PermRefit { automatic, fixed, refit };
std::string perm_refit_name(PermRefit m);
PermRefit perm_refit_from_name(const std::string& s);

struct AuditConfig {
    MetricKind metric = MetricKind::auc;
    int B = 200;
    PermRefit perm_refit = PermRefit::automatic;
    bool perm_stratify = false;
    bool return_perm_draws = false;
    std::vector<std::string> x_ref;           // scan features; default numeric predictors
    std::vector<std::string> assoc_columns;   // default batch/study roles
    double target_threshold = 0.9;
    double duplicate_threshold = 0.995;
    bool run_univariate = true;
    bool run_multivariate = true;
    bool run_duplicates = true;
    int multivar_n_pc = -1;  // auto: min(10, p, n/10)
    int multivar_inner_folds = 5;
    int multivar_B = 200;
    double mechanism_alpha = 0.01;
    std::uint64_t seed = 1;
};

struct PermGapResult {
    double observed = 0.0;
    double perm_mean = 0.0;
    double perm_sd = 0.0;
    double gap = 0.0;       // observed - perm_mean, exactly
    double p_value = 1.0;   // Phipson-Smyth (b+1)/(B+1), one-sided toward inflation
    std::string method;     // fixed_predictions | refit
    MetricKind metric = MetricKind::auc;
    int B = 0;              // draws attempted
    int B_used = 0;         // draws that produced a finite statistic
    bool stratified = false;
    std::vector<double> draws;  // kept when return_perm_draws
    std::vector<std::string> notes;
};

struct AssociationCell {
    std::string column;
    int repeat_index = 0;
    double chi2 = 0.0;
    double df = 0.0;
    double p_value = 1.0;
    double cramers_v = 0.0;
    std::vector<std::vector<double>> table;  // level x test-fold counts
    std::vector<std::string> level_names;
    bool valid = true;
    bool by_design = false;  // the column defines the fold structure
    std::string note;
};

struct TargetScanUnivariate {
    struct Feature {
        std::string name;
        double score = 0.0;   // |auc - 0.5| * 2
        bool flagged = false; // score >= threshold
        std::string note;
    };
    std::vector<Feature> features;
    std::vector<std::string> unscanned;  // categorical columns are not scored
    double threshold = 0.9;
    int n_flagged = 0;
};

struct TargetScanMultivariate {
    bool available = false;
    std::string reason;
    double observed_auc = 0.0;
    double p_value = 1.0;
    int n_pc = 0;
    int B = 0;
};

struct DuplicateScan {
    struct Pair {
        int row_a = 0;
        int row_b = 0;
        double similarity = 0.0;
        bool cross_fold = false;
    };
    std::vector<Pair> pairs;  // canonical (a < b), each counted once
    int n_pairs = 0;
    int n_cross_fold = 0;
    double threshold = 0.995;
    std::vector<int> zero_spread_rows;
    std::vector<std::string> notes;
};

struct MechanismItem {
    std::string mechanism;
    bool flagged = false;
    std::string evidence;
};

struct AuditResult {
    PermGapResult perm;
    std::vector<AssociationCell> association;
    std::optional<TargetScanUnivariate> target_uni;
    std::optional<TargetScanMultivariate> target_multi;
    std::optional<DuplicateScan> duplicates;
    std::vector<MechanismItem> mechanisms;
    std::string plan_hash;
    std::string learner_label;
    AuditConfig config;
};

// Label-permutation gap for a finished fit; `ds` supplies labels and, for the
// refit path, the full pipeline inputs.
PermGapResult perm_gap(const FitResult& fit, const Dataset& ds, const AuditConfig& cfg);

std::vector<AssociationCell> fold_association(const SplitPlan& plan, const Dataset& ds,
                                              const std::vector<std::string>& columns);

TargetScanUnivariate target_scan_univariate(const Dataset& ds,
                                            const std::vector<std::string>& columns,
                                            double threshold);

TargetScanMultivariate target_scan_multivariate(const Dataset& ds,
                                                const std::vector<std::string>& columns,
                                                int n_pc, int inner_folds, int B,
                                                std::uint64_t seed);

DuplicateScan duplicate_scan(const Dataset& ds, const std::vector<std::string>& columns,
                             const SplitPlan& plan, double threshold);

std::vector<MechanismItem> assess_mechanisms(const FitResult& fit, const Dataset& ds,
                                             const AuditResult& partial, double alpha);

AuditResult audit_leakage(const FitResult& fit, const Dataset& ds, const AuditConfig& cfg);

}  // namespace leakguard
