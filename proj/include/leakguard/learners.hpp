#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <string>
#include <vector>

#include "leakguard/dataset.hpp"

namespace leakguard {

struct LearnerSpec {
    enum class Kind { logistic_glm, logistic_elastic_net, linear_ols, linear_ridge };
    Kind kind = Kind::logistic_glm;
    double alpha = 0.9;            // elastic-net mixing
    double lambda = -1.0;          // fixed penalty; < 0 means choose by internal CV
    int n_lambda = 50;
    double lambda_min_ratio = 1e-3;
    int cv_folds = 5;
    int max_iter = 100;            // IRLS iterations
    double tol = 1e-9;
    double ridge_eps = 1e-8;       // always-on stabilizer for the plain GLM

    // "glm" | "glmnet[:k=v,...]" | "ols" | "ridge[:lambda=x]"
    static LearnerSpec parse(const std::string& text);
    std::string label() const;
};

struct FittedModel {
    double intercept = 0.0;
    Eigen::VectorXd coef;  // slopes, original scale
    std::vector<std::string> feature_names;
    bool logistic = true;
    int iterations = 0;
    bool converged = true;
    double lambda = 0.0;
    double alpha = 0.0;
    std::vector<double> deviance_path;  // per IRLS iteration (plain GLM)
    std::vector<std::string> warnings;

    std::vector<double> predict(const Eigen::MatrixXd& X) const;  // probability or value
};

// plain logistic GLM via IRLS; ridge_eps stabilizes separation and is always on
FittedModel fit_logistic_irls(const Eigen::MatrixXd& X, const std::vector<double>& y,
                              double ridge_eps = 1e-8, int max_iter = 100, double tol = 1e-9);

enum class GlmFamily { gaussian, binomial };

// penalty = lambda * (alpha*|b|_1 + (1-alpha)/2*|b|_2^2) on internally
// standardized features, intercept unpenalized
double elastic_net_lambda_max(const Eigen::MatrixXd& X, const std::vector<double>& y,
                              double alpha, GlmFamily family);
std::vector<double> lambda_path(double lambda_max, int n_lambda, double min_ratio);

struct EnetPathResult {
    std::vector<double> lambdas;
    std::vector<double> intercepts;
    std::vector<Eigen::VectorXd> coefs;  // original scale
};
EnetPathResult elastic_net_path(const Eigen::MatrixXd& X, const std::vector<double>& y,
                                double alpha, const std::vector<double>& lambdas,
                                GlmFamily family, int max_iter = 100, double tol = 1e-9);

// fixed lambda, or internal CV over the default path when spec.lambda < 0
FittedModel fit_elastic_net(const Eigen::MatrixXd& X, const std::vector<double>& y,
                            const LearnerSpec& spec, GlmFamily family, std::uint64_t seed);

FittedModel fit_linear(const Eigen::MatrixXd& X, const std::vector<double>& y,
                       double ridge_lambda = 0.0);

FittedModel fit_learner(const LearnerSpec& spec, const Eigen::MatrixXd& X,
                        const std::vector<double>& y, TaskKind task, std::uint64_t seed);

// max KKT stationarity residual of an elastic-net solution, for verification
double elastic_net_kkt_residual(const Eigen::MatrixXd& X, const std::vector<double>& y,
                                double alpha, double lambda, GlmFamily family,
                                const FittedModel& model);

}  // namespace leakguard
