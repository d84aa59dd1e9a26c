#include "leakguard/learners.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "leakguard/rng.hpp"

namespace leakguard {

namespace {

constexpr double kProbClip = 1e-8;
constexpr double kWeightFloor = 1e-8;

double sigmoid(double eta) {
    if (eta > 35.0) eta = 35.0;
    if (eta < -35.0) eta = -35.0;
    return 1.0 / (1.0 + std::exp(-eta));
}

double soft_threshold(double x, double t) {
    if (x > t) return x - t;
    if (x < -t) return x + t;
    return 0.0;
}

struct Standardized {
    Eigen::MatrixXd Xs;
    Eigen::VectorXd mean;
    Eigen::VectorXd sd;  // population (1/n); constant columns get sd=1 and stay zero
};

Standardized standardize(const Eigen::MatrixXd& X) {
    Standardized s;
    Eigen::Index n = X.rows(), p = X.cols();
    s.mean = X.colwise().mean();
    s.sd.resize(p);
    s.Xs.resize(n, p);
    for (Eigen::Index j = 0; j < p; ++j) {
        double var = (X.col(j).array() - s.mean(j)).square().sum() / static_cast<double>(n);
        s.sd(j) = var > 0.0 ? std::sqrt(var) : 1.0;
        s.Xs.col(j) = (X.col(j).array() - s.mean(j)) / s.sd(j);
    }
    return s;
}

double binomial_deviance(const std::vector<double>& p, const std::vector<double>& y) {
    double d = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) {
        double pi = std::clamp(p[i], 1e-12, 1.0 - 1e-12);
        d += y[i] > 0.5 ? -2.0 * std::log(pi) : -2.0 * std::log(1.0 - pi);
    }
    return d;
}

// One penalized weighted least-squares solve by coordinate descent with an
// active-set sweep. State (beta0, beta, residual r = z - eta) is updated in
// place; x2w must hold (1/n) * sum_i w_i * xs_ij^2.
void cd_solve(const Eigen::MatrixXd& Xs, const Eigen::VectorXd& w, double w_sum,
              const Eigen::VectorXd& x2w, double lam_l1, double lam_l2, double tol,
              double& beta0, Eigen::VectorXd& beta, Eigen::VectorXd& r) {
    Eigen::Index n = Xs.rows(), p = Xs.cols();
    double inv_n = 1.0 / static_cast<double>(n);
    std::vector<char> active(static_cast<std::size_t>(p), 1);

    auto pass = [&](bool full) {
        double max_delta = 0.0;
        for (Eigen::Index j = 0; j < p; ++j) {
            if (!full && !active[static_cast<std::size_t>(j)]) continue;
            double denom = x2w(j) + lam_l2;
            if (denom <= 0.0) continue;
            double rho = inv_n * (w.array() * Xs.col(j).array() * r.array()).sum() + x2w(j) * beta(j);
            double bj = soft_threshold(rho, lam_l1) / denom;
            double delta = bj - beta(j);
            if (delta != 0.0) {
                r -= Xs.col(j) * delta;
                beta(j) = bj;
                max_delta = std::max(max_delta, std::fabs(delta));
            }
            active[static_cast<std::size_t>(j)] = bj != 0.0;
        }
        double b0 = (w.array() * r.array()).sum() / w_sum;
        if (b0 != 0.0) {
            beta0 += b0;
            r.array() -= b0;
            max_delta = std::max(max_delta, std::fabs(b0));
        }
        return max_delta;
    };

    for (int sweep = 0; sweep < 10000; ++sweep) {
        double d = pass(true);
        if (d < tol) return;
        for (int inner = 0; inner < 10000; ++inner) {
            if (pass(false) < tol) break;
        }
    }
}

struct EnetState {
    double beta0 = 0.0;
    Eigen::VectorXd beta;
};

// Fit one lambda (standardized scale), warm started from `state`.
int enet_fit_one(const Eigen::MatrixXd& Xs, const std::vector<double>& y, double alpha,
                 double lambda, GlmFamily family, int max_iter, double tol, EnetState& state) {
    Eigen::Index n = Xs.rows();
    double lam_l1 = lambda * alpha;
    double lam_l2 = lambda * (1.0 - alpha);
    Eigen::Map<const Eigen::VectorXd> yv(y.data(), static_cast<Eigen::Index>(y.size()));

    if (family == GlmFamily::gaussian) {
        Eigen::VectorXd w = Eigen::VectorXd::Ones(n);
        Eigen::VectorXd x2w = Xs.array().square().colwise().sum() / static_cast<double>(n);
        Eigen::VectorXd r = yv - Eigen::VectorXd::Constant(n, state.beta0) - Xs * state.beta;
        cd_solve(Xs, w, static_cast<double>(n), x2w, lam_l1, lam_l2, tol, state.beta0, state.beta, r);
        return 1;
    }

    int iter = 0;
    for (; iter < max_iter; ++iter) {
        Eigen::VectorXd eta = Eigen::VectorXd::Constant(n, state.beta0) + Xs * state.beta;
        Eigen::VectorXd w(n), z(n);
        for (Eigen::Index i = 0; i < n; ++i) {
            double pi = std::clamp(sigmoid(eta(i)), kProbClip, 1.0 - kProbClip);
            double wi = std::max(pi * (1.0 - pi), kWeightFloor);
            w(i) = wi;
            z(i) = eta(i) + (y[static_cast<std::size_t>(i)] - pi) / wi;
        }
        Eigen::VectorXd x2w(Xs.cols());
        for (Eigen::Index j = 0; j < Xs.cols(); ++j)
            x2w(j) = (w.array() * Xs.col(j).array().square()).sum() / static_cast<double>(n);
        Eigen::VectorXd r = z - eta;
        double old0 = state.beta0;
        Eigen::VectorXd old = state.beta;
        cd_solve(Xs, w, w.sum(), x2w, lam_l1, lam_l2, tol, state.beta0, state.beta, r);
        double delta = std::fabs(state.beta0 - old0);
        for (Eigen::Index j = 0; j < state.beta.size(); ++j)
            delta = std::max(delta, std::fabs(state.beta(j) - old(j)));
        if (delta < std::max(tol, 1e-10)) {
            ++iter;
            break;
        }
    }
    return iter;
}

void check_binary_labels(const std::vector<double>& y) {
    bool pos = false, neg = false;
    for (double v : y) {
        if (v > 0.5) pos = true;
        else neg = true;
    }
    if (!pos || !neg)
        throw std::invalid_argument("degenerate outcome: training labels contain a single class");
}

std::vector<int> cv_assignment(const std::vector<double>& y, GlmFamily family, int folds,
                               std::uint64_t seed) {
    std::size_t n = y.size();
    std::vector<int> fold_of(n, 0);
    Rng rng(derive_seed(seed, 0x63765f656eULL));
    if (family == GlmFamily::binomial) {
        std::vector<std::size_t> pos, neg;
        for (std::size_t i = 0; i < n; ++i) (y[i] > 0.5 ? pos : neg).push_back(i);
        rng.shuffle(pos);
        rng.shuffle(neg);
        int k = 0;
        for (std::size_t i : pos) fold_of[i] = k++ % folds;
        for (std::size_t i : neg) fold_of[i] = k++ % folds;
    } else {
        std::vector<std::size_t> idx(n);
        std::iota(idx.begin(), idx.end(), 0);
        rng.shuffle(idx);
        int k = 0;
        for (std::size_t i : idx) fold_of[i] = k++ % folds;
    }
    return fold_of;
}

}  // namespace

LearnerSpec LearnerSpec::parse(const std::string& text) {
    LearnerSpec spec;
    std::string head = text, args;
    if (auto colon = text.find(':'); colon != std::string::npos) {
        head = text.substr(0, colon);
        args = text.substr(colon + 1);
    }
    if (head == "glm") {
        spec.kind = Kind::logistic_glm;
    } else if (head == "glmnet") {
        spec.kind = Kind::logistic_elastic_net;
    } else if (head == "ols") {
        spec.kind = Kind::linear_ols;
    } else if (head == "ridge") {
        spec.kind = Kind::linear_ridge;
        spec.lambda = 1.0;
    } else {
        throw std::invalid_argument("unknown learner '" + head + "'");
    }
    std::stringstream ss(args);
    std::string kv;
    while (std::getline(ss, kv, ',')) {
        if (kv.empty()) continue;
        auto eq = kv.find('=');
        if (eq == std::string::npos)
            throw std::invalid_argument("learner option '" + kv + "' is not key=value");
        std::string key = kv.substr(0, eq), val = kv.substr(eq + 1);
        if (key == "alpha") spec.alpha = std::stod(val);
        else if (key == "lambda") spec.lambda = std::stod(val);
        else if (key == "nlambda") spec.n_lambda = std::stoi(val);
        else if (key == "min_ratio") spec.lambda_min_ratio = std::stod(val);
        else if (key == "cv_folds") spec.cv_folds = std::stoi(val);
        else if (key == "max_iter") spec.max_iter = std::stoi(val);
        else throw std::invalid_argument("unknown learner option '" + key + "'");
    }
    if (spec.kind == Kind::logistic_elastic_net && (spec.alpha < 0.0 || spec.alpha > 1.0))
        throw std::invalid_argument("alpha must be in [0, 1]");
    return spec;
}

std::string LearnerSpec::label() const {
    std::ostringstream ss;
    switch (kind) {
        case Kind::logistic_glm: return "glm";
        case Kind::linear_ols: return "ols";
        case Kind::linear_ridge:
            ss << "ridge(lambda=" << lambda << ")";
            return ss.str();
        case Kind::logistic_elastic_net:
            ss << "glmnet(alpha=" << alpha << ",lambda=";
            if (lambda < 0.0) ss << "cv";
            else ss << lambda;
            ss << ")";
            return ss.str();
    }
    return "?";
}

std::vector<double> FittedModel::predict(const Eigen::MatrixXd& X) const {
    if (X.cols() != coef.size())
        throw std::invalid_argument("predict: feature count mismatch (" + std::to_string(X.cols()) +
                                    " vs " + std::to_string(coef.size()) + ")");
    Eigen::VectorXd eta = Eigen::VectorXd::Constant(X.rows(), intercept) + X * coef;
    std::vector<double> out(static_cast<std::size_t>(X.rows()));
    for (Eigen::Index i = 0; i < eta.size(); ++i)
        out[static_cast<std::size_t>(i)] = logistic ? sigmoid(eta(i)) : eta(i);
    return out;
}

FittedModel fit_logistic_irls(const Eigen::MatrixXd& X, const std::vector<double>& y,
                              double ridge_eps, int max_iter, double tol) {
    check_binary_labels(y);
    Eigen::Index n = X.rows(), p = X.cols();
    if (static_cast<std::size_t>(n) != y.size()) throw std::invalid_argument("irls: size mismatch");

    Eigen::MatrixXd Xd(n, p + 1);
    Xd.col(0).setOnes();
    Xd.rightCols(p) = X;
    Eigen::VectorXd beta = Eigen::VectorXd::Zero(p + 1);
    Eigen::VectorXd penalty = Eigen::VectorXd::Constant(p + 1, ridge_eps);
    penalty(0) = 0.0;  // intercept unpenalized

    FittedModel model;
    model.logistic = true;
    model.converged = false;
    for (int it = 0; it < max_iter; ++it) {
        Eigen::VectorXd eta = Xd * beta;
        Eigen::VectorXd w(n), z(n);
        std::vector<double> probs(static_cast<std::size_t>(n));
        for (Eigen::Index i = 0; i < n; ++i) {
            double pi = std::clamp(sigmoid(eta(i)), kProbClip, 1.0 - kProbClip);
            probs[static_cast<std::size_t>(i)] = pi;
            double wi = std::max(pi * (1.0 - pi), kWeightFloor);
            w(i) = wi;
            z(i) = eta(i) + (y[static_cast<std::size_t>(i)] - pi) / wi;
        }
        model.deviance_path.push_back(binomial_deviance(probs, y));
        Eigen::MatrixXd A = Xd.transpose() * w.asDiagonal() * Xd;
        A += penalty.asDiagonal();
        Eigen::VectorXd b = Xd.transpose() * (w.array() * z.array()).matrix();
        Eigen::VectorXd next = A.ldlt().solve(b);
        double delta = (next - beta).cwiseAbs().maxCoeff();
        beta = next;
        model.iterations = it + 1;
        if (delta < tol) {
            model.converged = true;
            break;
        }
    }
    if (!model.converged)
        model.warnings.push_back("IRLS reached max_iter without converging; possible separation");
    model.intercept = beta(0);
    model.coef = beta.tail(p);
    return model;
}

double elastic_net_lambda_max(const Eigen::MatrixXd& X, const std::vector<double>& y,
                              double alpha, GlmFamily family) {
    (void)family;  // the null-model score is x'(y - ybar)/n for both families
    Standardized s = standardize(X);
    double ybar = std::accumulate(y.begin(), y.end(), 0.0) / static_cast<double>(y.size());
    double m = 0.0;
    for (Eigen::Index j = 0; j < s.Xs.cols(); ++j) {
        double g = 0.0;
        for (Eigen::Index i = 0; i < s.Xs.rows(); ++i)
            g += s.Xs(i, j) * (y[static_cast<std::size_t>(i)] - ybar);
        m = std::max(m, std::fabs(g) / static_cast<double>(y.size()));
    }
    return m / std::max(alpha, 1e-3);
}

std::vector<double> lambda_path(double lambda_max, int n_lambda, double min_ratio) {
    if (n_lambda < 1) throw std::invalid_argument("n_lambda must be positive");
    if (lambda_max <= 0.0) lambda_max = 1e-3;
    std::vector<double> path(static_cast<std::size_t>(n_lambda));
    if (n_lambda == 1) {
        path[0] = lambda_max;
        return path;
    }
    double log_max = std::log(lambda_max);
    double log_min = std::log(lambda_max * min_ratio);
    for (int k = 0; k < n_lambda; ++k)
        path[static_cast<std::size_t>(k)] =
            std::exp(log_max + (log_min - log_max) * k / (n_lambda - 1.0));
    return path;
}

EnetPathResult elastic_net_path(const Eigen::MatrixXd& X, const std::vector<double>& y,
                                double alpha, const std::vector<double>& lambdas,
                                GlmFamily family, int max_iter, double tol) {
    if (family == GlmFamily::binomial) check_binary_labels(y);
    Standardized s = standardize(X);
    EnetState state;
    state.beta = Eigen::VectorXd::Zero(X.cols());
    if (family == GlmFamily::binomial) {
        double ybar = std::accumulate(y.begin(), y.end(), 0.0) / static_cast<double>(y.size());
        ybar = std::clamp(ybar, kProbClip, 1.0 - kProbClip);
        state.beta0 = std::log(ybar / (1.0 - ybar));
    } else {
        state.beta0 = std::accumulate(y.begin(), y.end(), 0.0) / static_cast<double>(y.size());
    }

    EnetPathResult out;
    out.lambdas = lambdas;
    for (double lam : lambdas) {
        enet_fit_one(s.Xs, y, alpha, lam, family, max_iter, tol, state);
        Eigen::VectorXd orig = state.beta.array() / s.sd.array();
        double b0 = state.beta0 - (state.beta.array() * s.mean.array() / s.sd.array()).sum();
        out.intercepts.push_back(b0);
        out.coefs.push_back(orig);
    }
    return out;
}

FittedModel fit_elastic_net(const Eigen::MatrixXd& X, const std::vector<double>& y,
                            const LearnerSpec& spec, GlmFamily family, std::uint64_t seed) {
    if (family == GlmFamily::binomial) check_binary_labels(y);
    double lambda_max = elastic_net_lambda_max(X, y, spec.alpha, family);

    FittedModel model;
    model.logistic = family == GlmFamily::binomial;
    model.alpha = spec.alpha;
    model.converged = true;

    std::vector<double> path;
    double chosen = spec.lambda;
    if (spec.lambda >= 0.0) {
        // warm-start down to the requested value
        if (spec.lambda >= lambda_max) {
            path = {spec.lambda};
        } else {
            int steps = std::min(spec.n_lambda, 20);
            double ratio = std::max(spec.lambda / lambda_max, 1e-12);
            path = lambda_path(lambda_max, steps, ratio);
            path.back() = spec.lambda;
        }
    } else {
        path = lambda_path(lambda_max, spec.n_lambda, spec.lambda_min_ratio);
        auto fold_of = cv_assignment(y, family, spec.cv_folds, seed);
        std::vector<double> dev(path.size(), 0.0);
        for (int f = 0; f < spec.cv_folds; ++f) {
            Eigen::Index n_tr = 0;
            for (std::size_t i = 0; i < y.size(); ++i)
                if (fold_of[i] != f) ++n_tr;
            Eigen::MatrixXd Xtr(n_tr, X.cols());
            std::vector<double> ytr;
            ytr.reserve(static_cast<std::size_t>(n_tr));
            std::vector<std::size_t> held;
            Eigen::Index r = 0;
            for (std::size_t i = 0; i < y.size(); ++i) {
                if (fold_of[i] != f) {
                    Xtr.row(r++) = X.row(static_cast<Eigen::Index>(i));
                    ytr.push_back(y[i]);
                } else {
                    held.push_back(i);
                }
            }
            bool tr_pos = false, tr_neg = false;
            for (double v : ytr) (v > 0.5 ? tr_pos : tr_neg) = true;
            if (family == GlmFamily::binomial && (!tr_pos || !tr_neg)) continue;
            auto fold_path = elastic_net_path(Xtr, ytr, spec.alpha, path, family,
                                              spec.max_iter, spec.tol);
            for (std::size_t k = 0; k < path.size(); ++k) {
                for (std::size_t i : held) {
                    double eta = fold_path.intercepts[k] +
                                 X.row(static_cast<Eigen::Index>(i)).dot(fold_path.coefs[k]);
                    if (family == GlmFamily::binomial) {
                        double pi = std::clamp(sigmoid(eta), 1e-12, 1.0 - 1e-12);
                        dev[k] += y[i] > 0.5 ? -2.0 * std::log(pi) : -2.0 * std::log(1.0 - pi);
                    } else {
                        dev[k] += (y[i] - eta) * (y[i] - eta);
                    }
                }
            }
        }
        std::size_t best = 0;
        for (std::size_t k = 1; k < path.size(); ++k)
            if (dev[k] < dev[best]) best = k;  // ties keep the larger lambda
        chosen = path[best];
        path.resize(best + 1);
    }

    auto full = elastic_net_path(X, y, spec.alpha, path, family, spec.max_iter, spec.tol);
    model.lambda = chosen;
    model.intercept = full.intercepts.back();
    model.coef = full.coefs.back();
    return model;
}

FittedModel fit_linear(const Eigen::MatrixXd& X, const std::vector<double>& y,
                       double ridge_lambda) {
    Eigen::Index n = X.rows(), p = X.cols();
    if (static_cast<std::size_t>(n) != y.size()) throw std::invalid_argument("linear: size mismatch");
    Eigen::Map<const Eigen::VectorXd> yv(y.data(), n);
    Eigen::MatrixXd Xd(n, p + 1);
    Xd.col(0).setOnes();
    Xd.rightCols(p) = X;

    FittedModel model;
    model.logistic = false;
    model.iterations = 1;
    Eigen::VectorXd beta;
    if (ridge_lambda > 0.0) {
        Eigen::VectorXd penalty = Eigen::VectorXd::Constant(p + 1, ridge_lambda);
        penalty(0) = 0.0;
        Eigen::MatrixXd A = Xd.transpose() * Xd;
        A += penalty.asDiagonal();
        beta = A.ldlt().solve(Xd.transpose() * yv);
        model.lambda = ridge_lambda;
    } else {
        beta = Xd.colPivHouseholderQr().solve(yv);
    }
    model.intercept = beta(0);
    model.coef = beta.tail(p);
    return model;
}

FittedModel fit_learner(const LearnerSpec& spec, const Eigen::MatrixXd& X,
                        const std::vector<double>& y, TaskKind task, std::uint64_t seed) {
    switch (spec.kind) {
        case LearnerSpec::Kind::logistic_glm:
            if (task != TaskKind::binary_classification)
                throw std::invalid_argument("glm learner requires a binary task");
            return fit_logistic_irls(X, y, spec.ridge_eps, spec.max_iter, spec.tol);
        case LearnerSpec::Kind::logistic_elastic_net:
            if (task != TaskKind::binary_classification)
                throw std::invalid_argument("glmnet learner requires a binary task");
            return fit_elastic_net(X, y, spec, GlmFamily::binomial, seed);
        case LearnerSpec::Kind::linear_ols:
            if (task != TaskKind::regression)
                throw std::invalid_argument("ols learner requires a regression task");
            return fit_linear(X, y, 0.0);
        case LearnerSpec::Kind::linear_ridge:
            if (task != TaskKind::regression)
                throw std::invalid_argument("ridge learner requires a regression task");
            return fit_linear(X, y, spec.lambda);
    }
    throw std::logic_error("unknown learner kind");
}

double elastic_net_kkt_residual(const Eigen::MatrixXd& X, const std::vector<double>& y,
                                double alpha, double lambda, GlmFamily family,
                                const FittedModel& model) {
    Standardized s = standardize(X);
    Eigen::Index n = X.rows(), p = X.cols();
    // back to the standardized scale the penalty acts on
    Eigen::VectorXd beta_std = model.coef.array() * s.sd.array();
    Eigen::VectorXd eta = Eigen::VectorXd::Constant(n, model.intercept) + X * model.coef;
    Eigen::VectorXd resid(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        double mu = family == GlmFamily::binomial ? sigmoid(eta(i)) : eta(i);
        resid(i) = mu - y[static_cast<std::size_t>(i)];
    }
    double worst = std::fabs(resid.sum() / static_cast<double>(n));  // intercept stationarity
    for (Eigen::Index j = 0; j < p; ++j) {
        if ((X.col(j).array() - s.mean(j)).abs().maxCoeff() == 0.0) continue;  // constant column
        double g = s.Xs.col(j).dot(resid) / static_cast<double>(n) + lambda * (1.0 - alpha) * beta_std(j);
        double r;
        if (beta_std(j) != 0.0)
            r = std::fabs(g + lambda * alpha * (beta_std(j) > 0 ? 1.0 : -1.0));
        else
            r = std::max(0.0, std::fabs(g) - lambda * alpha);
        worst = std::max(worst, r);
    }
    return worst;
}

}  // namespace leakguard
