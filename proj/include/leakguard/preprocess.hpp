#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "leakguard/dataset.hpp"

namespace leakguard {

enum class StepKind {
    impute_median,
    normalize_zscore,
    normalize_robust,
    filter_variance,
    filter_iqr,
    select_ttest,
    select_lasso,
    project_pca
};

std::string step_name(StepKind k);

struct PreprocStep {
    StepKind kind = StepKind::impute_median;
    double threshold = 0.0;  // filters
    int k = 0;               // select_ttest
    double lambda = -1.0;    // select_lasso; < 0 means internal CV
    int m = 0;               // project_pca
};

// Pipeline spec. Steps always run in the canonical order
// impute -> normalize -> filter -> select/project, one step per stage.
struct PreprocSpec {
    std::vector<PreprocStep> steps;

    // "impute=median,normalize=zscore,filter=variance:0.01,select=ttest:100"
    static PreprocSpec parse(const std::string& text);
    std::string label() const;
    void validate() const;
    bool has_stage(StepKind k) const;
};

// Everything fitted on the training fold; applying to new rows reuses these
// parameters and never re-estimates.
struct FittedPreproc {
    struct Impute {
        std::vector<double> medians;
    };
    struct Normalize {
        bool robust = false;
        std::vector<double> center;
        std::vector<double> scale;
        std::vector<std::uint8_t> degenerate;  // scale fell back to 1
    };
    struct Subset {
        StepKind kind = StepKind::filter_variance;
        double threshold = 0.0;
        std::vector<int> kept;          // indices into the incoming feature space
        std::vector<double> scores;     // per incoming feature (filters/select)
        double lambda_used = 0.0;       // select_lasso
    };
    struct Pca {
        Eigen::VectorXd center;
        Eigen::MatrixXd loadings;  // p_in x m
    };

    std::optional<Impute> impute;
    std::optional<Normalize> normalize;
    std::optional<Subset> filter;
    std::optional<Subset> select;
    std::optional<Pca> pca;
    std::vector<std::string> input_names;
    std::vector<std::string> output_names;
    std::vector<std::string> warnings;

    std::string params_hash() const;
};

FittedPreproc fit_preproc(const PreprocSpec& spec, const Eigen::MatrixXd& X_train,
                          const std::vector<double>& y_train, TaskKind task,
                          const std::vector<std::string>& names, std::uint64_t seed);

Eigen::MatrixXd apply_preproc(const FittedPreproc& fp, const Eigen::MatrixXd& X);

}  // namespace leakguard
