#include "leakguard/preprocess.hpp"

#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "leakguard/hash.hpp"
#include "leakguard/learners.hpp"
#include "leakguard/stats.hpp"

namespace leakguard {

namespace {

constexpr double kMadScale = 1.4826;

int stage_of(StepKind k) {
    switch (k) {
        case StepKind::impute_median: return 0;
        case StepKind::normalize_zscore:
        case StepKind::normalize_robust: return 1;
        case StepKind::filter_variance:
        case StepKind::filter_iqr: return 2;
        case StepKind::select_ttest:
        case StepKind::select_lasso:
        case StepKind::project_pca: return 3;
    }
    return -1;
}

std::vector<double> column_vector(const Eigen::MatrixXd& X, Eigen::Index j) {
    std::vector<double> v(static_cast<std::size_t>(X.rows()));
    for (Eigen::Index i = 0; i < X.rows(); ++i) v[static_cast<std::size_t>(i)] = X(i, j);
    return v;
}

double welch_t(const std::vector<double>& x1, const std::vector<double>& x0) {
    if (x1.size() < 2 || x0.size() < 2) return 0.0;
    double m1 = mean_of(x1), m0 = mean_of(x0);
    double s1 = sample_sd(x1), s0 = sample_sd(x0);
    double denom = std::sqrt(s1 * s1 / static_cast<double>(x1.size()) +
                             s0 * s0 / static_cast<double>(x0.size()));
    if (denom <= 0.0 || !std::isfinite(denom)) return 0.0;
    return (m1 - m0) / denom;
}

}  // namespace

std::string step_name(StepKind k) {
    switch (k) {
        case StepKind::impute_median: return "impute_median";
        case StepKind::normalize_zscore: return "normalize_zscore";
        case StepKind::normalize_robust: return "normalize_robust";
        case StepKind::filter_variance: return "filter_variance";
        case StepKind::filter_iqr: return "filter_iqr";
        case StepKind::select_ttest: return "select_ttest";
        case StepKind::select_lasso: return "select_lasso";
        case StepKind::project_pca: return "project_pca";
    }
    throw std::logic_error("unknown step");
}

PreprocSpec PreprocSpec::parse(const std::string& text) {
    PreprocSpec spec;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (item.empty()) continue;
        auto eq = item.find('=');
        if (eq == std::string::npos)
            throw std::invalid_argument("preprocess step '" + item + "' is not key=value");
        std::string key = item.substr(0, eq);
        std::string val = item.substr(eq + 1);
        std::string arg;
        if (auto colon = val.find(':'); colon != std::string::npos) {
            arg = val.substr(colon + 1);
            val = val.substr(0, colon);
        }
        PreprocStep step;
        if (key == "impute" && val == "median") {
            step.kind = StepKind::impute_median;
        } else if (key == "normalize" && val == "zscore") {
            step.kind = StepKind::normalize_zscore;
        } else if (key == "normalize" && val == "robust") {
            step.kind = StepKind::normalize_robust;
        } else if (key == "filter" && val == "variance") {
            step.kind = StepKind::filter_variance;
            step.threshold = arg.empty() ? 0.0 : std::stod(arg);
        } else if (key == "filter" && val == "iqr") {
            step.kind = StepKind::filter_iqr;
            step.threshold = arg.empty() ? 0.0 : std::stod(arg);
        } else if (key == "select" && val == "ttest") {
            step.kind = StepKind::select_ttest;
            if (arg.empty()) throw std::invalid_argument("select=ttest needs a count, e.g. ttest:100");
            step.k = std::stoi(arg);
        } else if (key == "select" && val == "lasso") {
            step.kind = StepKind::select_lasso;
            step.lambda = arg.empty() ? -1.0 : std::stod(arg);
        } else if (key == "project" && val == "pca") {
            step.kind = StepKind::project_pca;
            if (arg.empty()) throw std::invalid_argument("project=pca needs a dimension, e.g. pca:10");
            step.m = std::stoi(arg);
        } else {
            throw std::invalid_argument("unknown preprocess step '" + item + "'");
        }
        spec.steps.push_back(step);
    }
    spec.validate();
    return spec;
}

void PreprocSpec::validate() const {
    int seen[4] = {0, 0, 0, 0};
    for (const auto& s : steps) {
        int st = stage_of(s.kind);
        if (++seen[st] > 1)
            throw std::invalid_argument("preprocess pipeline has more than one step in the " +
                                        std::string(st == 1 ? "normalize" : st == 2 ? "filter" : st == 3 ? "select/project" : "impute") +
                                        " stage");
        if (s.kind == StepKind::select_ttest && s.k < 1)
            throw std::invalid_argument("select_ttest needs k >= 1");
        if (s.kind == StepKind::project_pca && s.m < 1)
            throw std::invalid_argument("project_pca needs m >= 1");
        if ((s.kind == StepKind::filter_variance || s.kind == StepKind::filter_iqr) && s.threshold < 0.0)
            throw std::invalid_argument("filter threshold must be nonnegative");
    }
}

bool PreprocSpec::has_stage(StepKind k) const {
    for (const auto& s : steps)
        if (stage_of(s.kind) == stage_of(k)) return true;
    return false;
}

std::string PreprocSpec::label() const {
    std::vector<const PreprocStep*> ordered;
    for (const auto& s : steps) ordered.push_back(&s);
    std::stable_sort(ordered.begin(), ordered.end(),
                     [](const PreprocStep* a, const PreprocStep* b) {
                         return stage_of(a->kind) < stage_of(b->kind);
                     });
    std::ostringstream ss;
    bool first = true;
    for (const PreprocStep* s : ordered) {
        if (!first) ss << ",";
        first = false;
        switch (s->kind) {
            case StepKind::impute_median: ss << "impute=median"; break;
            case StepKind::normalize_zscore: ss << "normalize=zscore"; break;
            case StepKind::normalize_robust: ss << "normalize=robust"; break;
            case StepKind::filter_variance: ss << "filter=variance:" << s->threshold; break;
            case StepKind::filter_iqr: ss << "filter=iqr:" << s->threshold; break;
            case StepKind::select_ttest: ss << "select=ttest:" << s->k; break;
            case StepKind::select_lasso:
                ss << "select=lasso";
                if (s->lambda >= 0.0) ss << ":" << s->lambda;
                break;
            case StepKind::project_pca: ss << "project=pca:" << s->m; break;
        }
    }
    return ss.str();
}

std::string FittedPreproc::params_hash() const {
    std::ostringstream ss;
    auto num = [&](double v) {
        char buf[40];
        std::snprintf(buf, sizeof(buf), "%.17g", v);
        ss << buf << ",";
    };
    if (impute) {
        ss << "impute:";
        for (double m : impute->medians) num(m);
    }
    if (normalize) {
        ss << (normalize->robust ? "robust:" : "zscore:");
        for (double c : normalize->center) num(c);
        for (double s : normalize->scale) num(s);
    }
    for (const auto* sub : {&filter, &select}) {
        if (*sub) {
            ss << step_name((*sub)->kind) << ":";
            for (int k : (*sub)->kept) ss << k << ",";
            num((*sub)->lambda_used);
        }
    }
    if (pca) {
        ss << "pca:";
        for (Eigen::Index i = 0; i < pca->center.size(); ++i) num(pca->center(i));
        for (Eigen::Index j = 0; j < pca->loadings.cols(); ++j)
            for (Eigen::Index i = 0; i < pca->loadings.rows(); ++i) num(pca->loadings(i, j));
    }
    return sha256_hex(ss.str()).substr(0, 16);
}

FittedPreproc fit_preproc(const PreprocSpec& spec, const Eigen::MatrixXd& X_train,
                          const std::vector<double>& y_train, TaskKind task,
                          const std::vector<std::string>& names, std::uint64_t seed) {
    spec.validate();
    if (static_cast<std::size_t>(X_train.cols()) != names.size())
        throw std::invalid_argument("fit_preproc: name list does not match feature count");
    if (static_cast<std::size_t>(X_train.rows()) != y_train.size())
        throw std::invalid_argument("fit_preproc: outcome length mismatch");

    FittedPreproc fp;
    fp.input_names = names;

    const PreprocStep* by_stage[4] = {nullptr, nullptr, nullptr, nullptr};
    for (const auto& s : spec.steps) by_stage[stage_of(s.kind)] = &s;

    Eigen::MatrixXd X = X_train;

    // impute
    if (by_stage[0]) {
        FittedPreproc::Impute imp;
        imp.medians.resize(static_cast<std::size_t>(X.cols()));
        for (Eigen::Index j = 0; j < X.cols(); ++j) {
            std::vector<double> obs;
            for (Eigen::Index i = 0; i < X.rows(); ++i)
                if (!std::isnan(X(i, j))) obs.push_back(X(i, j));
            double med = 0.0;
            if (obs.empty()) {
                fp.warnings.push_back("column '" + names[static_cast<std::size_t>(j)] +
                                      "' is entirely missing in the training fold; imputing 0");
            } else {
                med = median_of(std::move(obs));
            }
            imp.medians[static_cast<std::size_t>(j)] = med;
            for (Eigen::Index i = 0; i < X.rows(); ++i)
                if (std::isnan(X(i, j))) X(i, j) = med;
        }
        fp.impute = std::move(imp);
    }
    if (X.hasNaN())
        throw std::invalid_argument("missing values present after preprocessing; add impute=median");

    // normalize
    if (by_stage[1]) {
        FittedPreproc::Normalize nm;
        nm.robust = by_stage[1]->kind == StepKind::normalize_robust;
        for (Eigen::Index j = 0; j < X.cols(); ++j) {
            auto col = column_vector(X, j);
            double center, scale;
            if (nm.robust) {
                center = median_of(col);
                scale = kMadScale * mad_of(col);
            } else {
                center = mean_of(col);
                scale = sample_sd(col);
            }
            bool degenerate = !(scale > 0.0) || !std::isfinite(scale);
            if (degenerate) {
                scale = 1.0;
                fp.warnings.push_back("column '" + names[static_cast<std::size_t>(j)] +
                                      "' has zero spread in the training fold; centered only");
            }
            nm.center.push_back(center);
            nm.scale.push_back(scale);
            nm.degenerate.push_back(degenerate ? 1 : 0);
            X.col(j) = (X.col(j).array() - center) / scale;
        }
        fp.normalize = std::move(nm);
    }

    std::vector<int> live(static_cast<std::size_t>(X.cols()));
    std::iota(live.begin(), live.end(), 0);

    // filter
    if (by_stage[2]) {
        FittedPreproc::Subset sub;
        sub.kind = by_stage[2]->kind;
        sub.threshold = by_stage[2]->threshold;
        for (Eigen::Index j = 0; j < X.cols(); ++j) {
            auto col = column_vector(X, j);
            double stat;
            if (sub.kind == StepKind::filter_variance) {
                double sd = sample_sd(col);
                stat = sd * sd;
            } else {
                stat = quantile7(col, 0.75) - quantile7(col, 0.25);
            }
            sub.scores.push_back(stat);
            if (stat > sub.threshold) sub.kept.push_back(static_cast<int>(j));
        }
        if (sub.kept.empty())
            throw std::invalid_argument("no features survive the " + step_name(sub.kind) + " threshold");
        Eigen::MatrixXd Xf(X.rows(), static_cast<Eigen::Index>(sub.kept.size()));
        std::vector<int> live_next;
        for (std::size_t k = 0; k < sub.kept.size(); ++k) {
            Xf.col(static_cast<Eigen::Index>(k)) = X.col(sub.kept[k]);
            live_next.push_back(live[static_cast<std::size_t>(sub.kept[k])]);
        }
        X = std::move(Xf);
        live = std::move(live_next);
        fp.filter = std::move(sub);
    }

    // select / project
    if (by_stage[3]) {
        const PreprocStep& s = *by_stage[3];
        if (s.kind == StepKind::select_ttest) {
            if (task != TaskKind::binary_classification)
                throw std::invalid_argument("select_ttest requires a binary task");
            FittedPreproc::Subset sub;
            sub.kind = s.kind;
            std::vector<std::pair<double, int>> ranked;
            for (Eigen::Index j = 0; j < X.cols(); ++j) {
                std::vector<double> x1, x0;
                for (Eigen::Index i = 0; i < X.rows(); ++i)
                    (y_train[static_cast<std::size_t>(i)] > 0.5 ? x1 : x0).push_back(X(i, j));
                double t = std::fabs(welch_t(x1, x0));
                sub.scores.push_back(t);
                ranked.emplace_back(-t, static_cast<int>(j));  // ties keep column order
            }
            std::stable_sort(ranked.begin(), ranked.end(),
                             [](const auto& a, const auto& b) { return a.first < b.first; });
            int kk = std::min<int>(s.k, static_cast<int>(X.cols()));
            for (int r = 0; r < kk; ++r) sub.kept.push_back(ranked[static_cast<std::size_t>(r)].second);
            std::sort(sub.kept.begin(), sub.kept.end());
            Eigen::MatrixXd Xs(X.rows(), kk);
            std::vector<int> live_next;
            for (int k = 0; k < kk; ++k) {
                Xs.col(k) = X.col(sub.kept[static_cast<std::size_t>(k)]);
                live_next.push_back(live[static_cast<std::size_t>(sub.kept[static_cast<std::size_t>(k)])]);
            }
            X = std::move(Xs);
            live = std::move(live_next);
            fp.select = std::move(sub);
        } else if (s.kind == StepKind::select_lasso) {
            FittedPreproc::Subset sub;
            sub.kind = s.kind;
            LearnerSpec en;
            en.kind = LearnerSpec::Kind::logistic_elastic_net;
            en.alpha = 1.0;
            en.lambda = s.lambda;
            en.cv_folds = 3;
            GlmFamily family = task == TaskKind::binary_classification ? GlmFamily::binomial
                                                                       : GlmFamily::gaussian;
            FittedModel lasso = fit_elastic_net(X, y_train, en, family, seed);
            sub.lambda_used = lasso.lambda;
            for (Eigen::Index j = 0; j < X.cols(); ++j) {
                sub.scores.push_back(std::fabs(lasso.coef(j)));
                if (lasso.coef(j) != 0.0) sub.kept.push_back(static_cast<int>(j));
            }
            if (sub.kept.empty()) {
                // fall back to the single best-scoring column by association
                double ybar = mean_of(y_train);
                double best = -1.0;
                int best_j = 0;
                for (Eigen::Index j = 0; j < X.cols(); ++j) {
                    double dot = 0.0;
                    for (Eigen::Index i = 0; i < X.rows(); ++i)
                        dot += X(i, j) * (y_train[static_cast<std::size_t>(i)] - ybar);
                    if (std::fabs(dot) > best) {
                        best = std::fabs(dot);
                        best_j = static_cast<int>(j);
                    }
                }
                sub.kept.push_back(best_j);
                fp.warnings.push_back("select_lasso kept no features; falling back to the best-associated column");
            }
            Eigen::MatrixXd Xs(X.rows(), static_cast<Eigen::Index>(sub.kept.size()));
            std::vector<int> live_next;
            for (std::size_t k = 0; k < sub.kept.size(); ++k) {
                Xs.col(static_cast<Eigen::Index>(k)) = X.col(sub.kept[k]);
                live_next.push_back(live[static_cast<std::size_t>(sub.kept[k])]);
            }
            X = std::move(Xs);
            live = std::move(live_next);
            fp.select = std::move(sub);
        } else {  // project_pca
            FittedPreproc::Pca pca;
            pca.center = X.colwise().mean();
            Eigen::MatrixXd C = X.rowwise() - pca.center.transpose();
            Eigen::BDCSVD<Eigen::MatrixXd> svd(C, Eigen::ComputeThinV);
            int rank = 0;
            double top = svd.singularValues().size() ? svd.singularValues()(0) : 0.0;
            for (Eigen::Index k = 0; k < svd.singularValues().size(); ++k)
                if (svd.singularValues()(k) > top * 1e-10) ++rank;
            int m = std::min<int>(s.m, rank);
            if (m < 1) throw std::invalid_argument("project_pca found no non-degenerate directions");
            if (m < s.m)
                fp.warnings.push_back("project_pca reduced to " + std::to_string(m) +
                                      " components (rank limit)");
            pca.loadings = svd.matrixV().leftCols(m);
            // deterministic sign: largest-magnitude loading positive
            for (Eigen::Index k = 0; k < pca.loadings.cols(); ++k) {
                Eigen::Index argmax = 0;
                pca.loadings.col(k).cwiseAbs().maxCoeff(&argmax);
                if (pca.loadings(argmax, k) < 0.0) pca.loadings.col(k) = -pca.loadings.col(k);
            }
            fp.pca = std::move(pca);
            fp.output_names.clear();
            for (int k = 1; k <= m; ++k) fp.output_names.push_back("pc" + std::to_string(k));
        }
    }

    if (!fp.pca) {
        fp.output_names.clear();
        for (int j : live) fp.output_names.push_back(names[static_cast<std::size_t>(j)]);
    }
    return fp;
}

Eigen::MatrixXd apply_preproc(const FittedPreproc& fp, const Eigen::MatrixXd& X_in) {
    if (static_cast<std::size_t>(X_in.cols()) != fp.input_names.size())
        throw std::invalid_argument("apply_preproc: feature count mismatch");
    Eigen::MatrixXd X = X_in;
    if (fp.impute) {
        for (Eigen::Index j = 0; j < X.cols(); ++j)
            for (Eigen::Index i = 0; i < X.rows(); ++i)
                if (std::isnan(X(i, j))) X(i, j) = fp.impute->medians[static_cast<std::size_t>(j)];
    }
    if (X.hasNaN())
        throw std::invalid_argument("missing values present and the pipeline has no impute step");
    if (fp.normalize) {
        for (Eigen::Index j = 0; j < X.cols(); ++j)
            X.col(j) = (X.col(j).array() - fp.normalize->center[static_cast<std::size_t>(j)]) /
                       fp.normalize->scale[static_cast<std::size_t>(j)];
    }
    for (const auto* sub : {&fp.filter, &fp.select}) {
        if (*sub) {
            Eigen::MatrixXd Xs(X.rows(), static_cast<Eigen::Index>((*sub)->kept.size()));
            for (std::size_t k = 0; k < (*sub)->kept.size(); ++k)
                Xs.col(static_cast<Eigen::Index>(k)) = X.col((*sub)->kept[k]);
            X = std::move(Xs);
        }
    }
    if (fp.pca) {
        Eigen::MatrixXd C = X.rowwise() - fp.pca->center.transpose();
        X = C * fp.pca->loadings;
    }
    return X;
}

}  // namespace leakguard
