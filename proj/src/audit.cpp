#include "leakguard/audit.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <set>
#include <sstream>
#include <stdexcept>

#include "leakguard/parallel.hpp"
#include "leakguard/rng.hpp"
#include "leakguard/stats.hpp"

namespace leakguard {

namespace {

constexpr std::uint64_t kPermTag = 0x7065726d;
constexpr std::uint64_t kRefitTag = 0x72656669;
constexpr std::uint64_t kScanTag = 0x7363616e;

// Test-size-weighted per-repeat statistic recomputed against an arbitrary
// label vector, averaged over repeats; mirrors aggregate_repeats.
double stat_against_labels(const FitResult& fit, const std::vector<double>& y, MetricKind metric) {
    std::map<int, std::pair<double, double>> acc;  // repeat -> (sum w*m, sum w)
    std::vector<double> yt;
    for (const auto& f : fit.folds) {
        if (f.status != FoldStatus::success || f.predictions.empty()) continue;
        yt.resize(f.test_rows.size());
        for (std::size_t i = 0; i < f.test_rows.size(); ++i)
            yt[i] = y[static_cast<std::size_t>(f.test_rows[i])];
        double m = metric_value(metric, f.predictions, yt);
        if (!std::isfinite(m)) continue;
        double w = static_cast<double>(f.test_rows.size());
        auto& a = acc[f.repeat_index];
        a.first += w * m;
        a.second += w;
    }
    if (acc.empty()) return std::numeric_limits<double>::quiet_NaN();
    double s = 0.0;
    for (const auto& [rep, a] : acc) s += a.first / a.second;
    return s / static_cast<double>(acc.size());
}

// Row-level permutation of labels. With strata, whole groups of equal size
// swap their label blocks; groups alone in their size stratum keep theirs.
std::vector<std::int32_t> label_permutation(Rng& rng, std::size_t n,
                                            const std::vector<std::vector<std::int32_t>>* groups) {
    std::vector<std::int32_t> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    if (groups == nullptr) {
        rng.shuffle(perm);
        return perm;
    }
    std::map<std::size_t, std::vector<std::size_t>> strata;  // size -> group ids
    for (std::size_t g = 0; g < groups->size(); ++g) strata[(*groups)[g].size()].push_back(g);
    for (auto& [sz, ids] : strata) {
        if (ids.size() < 2) continue;
        std::vector<std::size_t> to = ids;
        rng.shuffle(to);
        for (std::size_t k = 0; k < ids.size(); ++k) {
            const auto& dst = (*groups)[ids[k]];
            const auto& src = (*groups)[to[k]];
            for (std::size_t i = 0; i < sz; ++i)
                perm[static_cast<std::size_t>(dst[i])] = src[i];
        }
    }
    return perm;
}

Dataset permute_outcome(const Dataset& ds, const std::vector<std::int32_t>& perm) {
    std::vector<Column> cols = ds.columns();
    for (auto& c : cols) {
        if (c.name != ds.roles().outcome) continue;
        if (c.kind == ColumnKind::numeric) {
            std::vector<double> v(c.values.size());
            for (std::size_t i = 0; i < v.size(); ++i)
                v[i] = c.values[static_cast<std::size_t>(perm[i])];
            c.values = std::move(v);
        } else {
            std::vector<std::int32_t> v(c.codes.size());
            for (std::size_t i = 0; i < v.size(); ++i)
                v[i] = c.codes[static_cast<std::size_t>(perm[i])];
            c.codes = std::move(v);
        }
    }
    return Dataset::build(std::move(cols), ds.roles());
}

std::vector<std::vector<std::int32_t>> rows_by_group(const std::vector<std::int32_t>& codes) {
    std::int32_t n_groups = 0;
    for (std::int32_t c : codes) n_groups = std::max(n_groups, c + 1);
    std::vector<std::vector<std::int32_t>> groups(static_cast<std::size_t>(n_groups));
    for (std::size_t r = 0; r < codes.size(); ++r)
        if (codes[r] >= 0) groups[static_cast<std::size_t>(codes[r])].push_back(static_cast<std::int32_t>(r));
    return groups;
}

void finish_perm_result(PermGapResult& res, std::vector<double>& draws, bool keep_draws) {
    int b_extreme = 0;
    double sum = 0.0, sum2 = 0.0;
    int used = 0;
    bool higher = higher_is_better(res.metric);
    for (double d : draws) {
        if (!std::isfinite(d)) continue;
        ++used;
        sum += d;
        sum2 += d * d;
        if (higher ? d >= res.observed : d <= res.observed) ++b_extreme;
    }
    if (used == 0) throw std::runtime_error("permutation gap undefined: no draw produced a finite statistic");
    res.B_used = used;
    res.perm_mean = sum / used;
    res.perm_sd = used > 1 ? std::sqrt(std::max(0.0, (sum2 - sum * sum / used) / (used - 1))) : 0.0;
    res.gap = res.observed - res.perm_mean;
    res.p_value = (b_extreme + 1.0) / (used + 1.0);
    if (used < res.B) res.notes.push_back(std::to_string(res.B - used) + " draw(s) had no finite statistic and were dropped");
    if (keep_draws) res.draws = std::move(draws);
}

std::string role_column_of(const Dataset& ds, SplitMode m) {
    const auto& roles = ds.roles();
    switch (m) {
        case SplitMode::subject_grouped: return roles.subject.value_or("");
        case SplitMode::batch_blocked: return roles.batch.value_or("");
        case SplitMode::study_loocv: return roles.study.value_or("");
        default: return "";
    }
}

bool column_defines_plan(const SplitPlan& plan, const Dataset& ds, const std::string& col) {
    if (!plan.group_col.empty() && plan.group_col == col) return true;
    if (plan.mode == SplitMode::combined)
        for (SplitMode part : plan.combine)
            if (role_column_of(ds, part) == col) return true;
    return false;
}

}  // namespace

std::string perm_refit_name(PermRefit m) {
    switch (m) {
        case PermRefit::automatic: return "auto";
        case PermRefit::fixed: return "fixed";
        case PermRefit::refit: return "refit";
    }
    return "auto";
}

PermRefit perm_refit_from_name(const std::string& s) {
    if (s == "auto") return PermRefit::automatic;
    if (s == "fixed") return PermRefit::fixed;
    if (s == "refit") return PermRefit::refit;
    throw std::invalid_argument("unknown perm_refit mode: " + s + " (expected auto, fixed, or refit)");
}

PermGapResult perm_gap(const FitResult& fit, const Dataset& ds, const AuditConfig& cfg) {
    if (cfg.B < 1) throw std::invalid_argument("permutation count B must be >= 1");
    if (ds.n_rows() != static_cast<std::size_t>(fit.n_rows))
        throw std::invalid_argument("audit dataset has " + std::to_string(ds.n_rows()) +
                                    " rows but the fit covers " + std::to_string(fit.n_rows));

    PermGapResult res;
    res.metric = cfg.metric;
    res.B = cfg.B;

    bool refit = false;
    switch (cfg.perm_refit) {
        case PermRefit::fixed:
            if (!fit.has_predictions())
                throw std::invalid_argument("fixed-prediction permutation requires stored out-of-fold predictions");
            break;
        case PermRefit::refit:
            if (!fit.refit_payload)
                throw std::invalid_argument(
                    "refit permutation requires the fit to be created with store_refit_data=true");
            refit = true;
            break;
        case PermRefit::automatic:
            if (fit.refit_payload) {
                refit = true;
            } else if (fit.has_predictions()) {
                res.notes.push_back("refit payload not stored; falling back to fixed-prediction permutation");
            } else {
                throw std::invalid_argument("permutation gap needs stored predictions or a refit payload");
            }
            break;
    }
    res.method = refit ? "refit" : "fixed_predictions";

    // group blocks for stratified permutation
    std::vector<std::vector<std::int32_t>> groups;
    const std::vector<std::vector<std::int32_t>>* groups_ptr = nullptr;
    if (cfg.perm_stratify) {
        if (fit.plan.mode == SplitMode::time_series) {
            res.notes.push_back("stratified permutation is undefined for time_series plans; using row-level shuffles");
        } else {
            groups = rows_by_group(plan_group_codes(fit.plan, ds));
            groups_ptr = &groups;
            res.stratified = true;
        }
    }

    const std::vector<double> y = ds.outcome_values();
    std::vector<double> draws(static_cast<std::size_t>(cfg.B),
                              std::numeric_limits<double>::quiet_NaN());

    if (!refit) {
        res.observed = stat_against_labels(fit, y, cfg.metric);
        if (!std::isfinite(res.observed))
            throw std::runtime_error("permutation gap undefined: observed statistic is not finite");
        parallel_for(static_cast<std::size_t>(cfg.B), [&](std::size_t b) {
            Rng rng(derive_seed(cfg.seed, static_cast<std::uint64_t>(b), kPermTag));
            auto perm = label_permutation(rng, ds.n_rows(), groups_ptr);
            std::vector<double> yp(y.size());
            for (std::size_t i = 0; i < y.size(); ++i) yp[i] = y[static_cast<std::size_t>(perm[i])];
            draws[b] = stat_against_labels(fit, yp, cfg.metric);
        });
    } else {
        RepeatSummary rs = aggregate_repeats(fit, cfg.metric);
        if (rs.value.empty())
            throw std::runtime_error("permutation gap undefined: observed statistic is not finite");
        res.observed = mean_of(rs.value);
        parallel_for(static_cast<std::size_t>(cfg.B), [&](std::size_t b) {
            Rng rng(derive_seed(cfg.seed, static_cast<std::uint64_t>(b), kPermTag));
            auto perm = label_permutation(rng, ds.n_rows(), groups_ptr);
            Dataset dsp = permute_outcome(ds, perm);
            FitResult fr = fit_resample(dsp, fit.plan, fit.learner, fit.preprocess, {cfg.metric},
                                        derive_seed(cfg.seed, static_cast<std::uint64_t>(b), kRefitTag),
                                        /*store_refit_data=*/false);
            RepeatSummary prs = aggregate_repeats(fr, cfg.metric);
            if (!prs.value.empty()) draws[b] = mean_of(prs.value);
        });
    }

    finish_perm_result(res, draws, cfg.return_perm_draws);
    return res;
}

std::vector<AssociationCell> fold_association(const SplitPlan& plan, const Dataset& ds,
                                              const std::vector<std::string>& columns) {
    std::vector<AssociationCell> cells;
    for (const auto& col : columns) {
        auto codes = ds.group_codes(col);
        auto labels = ds.group_labels(col);
        bool by_design = column_defines_plan(plan, ds, col);
        for (int rep = 0; rep < plan.repeats; ++rep) {
            AssociationCell cell;
            cell.column = col;
            cell.repeat_index = rep + 1;
            cell.by_design = by_design;
            cell.level_names = labels;
            if (labels.size() < 2) {
                cell.valid = false;
                cell.note = "column has a single level; association undefined";
                cells.push_back(std::move(cell));
                continue;
            }
            std::vector<std::vector<double>> table(labels.size(),
                                                   std::vector<double>(static_cast<std::size_t>(plan.v), 0.0));
            for (const auto& f : plan.folds) {
                if (f.repeat_index != rep) continue;
                for (std::int32_t r : f.test_rows) {
                    std::int32_t code = codes[static_cast<std::size_t>(r)];
                    if (code < 0) continue;
                    table[static_cast<std::size_t>(code)][static_cast<std::size_t>(f.fold_index)] += 1.0;
                }
            }
            Chi2Result chi = chi_squared_test(table);
            cell.table = std::move(table);
            cell.valid = chi.valid;
            if (chi.valid) {
                cell.chi2 = chi.statistic;
                cell.df = chi.df;
                cell.p_value = chi.p_value;
                cell.cramers_v = chi.cramers_v;
                if (by_design) cell.note = "fold assignment is defined by this column; association expected by design";
            } else {
                cell.note = "association undefined: contingency table has fewer than two occupied rows or columns";
            }
            cells.push_back(std::move(cell));
        }
    }
    return cells;
}

TargetScanUnivariate target_scan_univariate(const Dataset& ds,
                                            const std::vector<std::string>& columns,
                                            double threshold) {
    if (ds.task() != TaskKind::binary_classification)
        throw std::invalid_argument("univariate target scan requires a binary outcome");
    TargetScanUnivariate scan;
    scan.threshold = threshold;
    const std::vector<double> y = ds.outcome_values();
    for (const auto& name : columns) {
        const Column& col = ds.column(name);
        if (col.kind == ColumnKind::categorical) {
            scan.unscanned.push_back(name);
            continue;
        }
        TargetScanUnivariate::Feature feat;
        feat.name = name;
        std::vector<double> x, yk;
        for (std::size_t i = 0; i < col.values.size(); ++i) {
            if (std::isnan(col.values[i])) continue;
            x.push_back(col.values[i]);
            yk.push_back(y[i]);
        }
        if (x.empty()) {
            feat.note = "all values missing";
        } else if (*std::min_element(x.begin(), x.end()) == *std::max_element(x.begin(), x.end())) {
            feat.note = "constant feature";
        } else {
            double auc = auc_score(x, yk);
            if (std::isfinite(auc)) {
                feat.score = std::fabs(auc - 0.5) * 2.0;
                feat.flagged = feat.score >= threshold;
            } else {
                feat.note = "only one outcome class among non-missing rows";
            }
        }
        if (feat.flagged) ++scan.n_flagged;
        scan.features.push_back(std::move(feat));
    }
    return scan;
}

namespace {

struct PcFoldScores {
    std::vector<std::int32_t> train_rows, test_rows;
    Eigen::MatrixXd train_scores, test_scores;
};

// pooled out-of-fold AUC of per-fold logistic models on precomputed PC scores
double pc_cv_auc(const std::vector<PcFoldScores>& folds, const std::vector<double>& y) {
    std::vector<double> pooled_pred, pooled_y;
    for (const auto& f : folds) {
        std::vector<double> ytr(f.train_rows.size());
        for (std::size_t i = 0; i < f.train_rows.size(); ++i)
            ytr[i] = y[static_cast<std::size_t>(f.train_rows[i])];
        FittedModel model;
        try {
            model = fit_logistic_irls(f.train_scores, ytr);
        } catch (const std::exception&) {
            continue;  // single-class training fold under this labelling
        }
        std::vector<double> pred = model.predict(f.test_scores);
        for (std::size_t i = 0; i < f.test_rows.size(); ++i) {
            pooled_pred.push_back(pred[i]);
            pooled_y.push_back(y[static_cast<std::size_t>(f.test_rows[i])]);
        }
    }
    if (pooled_pred.empty()) return std::numeric_limits<double>::quiet_NaN();
    return auc_score(pooled_pred, pooled_y);
}

}  // namespace

TargetScanMultivariate target_scan_multivariate(const Dataset& ds,
                                                const std::vector<std::string>& columns,
                                                int n_pc, int inner_folds, int B,
                                                std::uint64_t seed) {
    TargetScanMultivariate scan;
    scan.B = B;
    if (ds.task() != TaskKind::binary_classification) {
        scan.reason = "requires a binary outcome";
        return scan;
    }
    std::vector<std::string> numeric;
    for (const auto& name : columns)
        if (ds.column(name).kind == ColumnKind::numeric) numeric.push_back(name);
    if (numeric.size() < 5) {
        scan.reason = "too few predictors to build a meaningful principal-component model (need 5, have " +
                      std::to_string(numeric.size()) + ")";
        return scan;
    }
    const std::size_t n = ds.n_rows();
    const std::size_t p = numeric.size();
    int pcs = n_pc > 0 ? n_pc
                       : static_cast<int>(std::min<std::size_t>({10, p, n / 10}));
    if (pcs < 1) {
        scan.reason = "too few rows for a principal-component model";
        return scan;
    }
    if (inner_folds < 2) throw std::invalid_argument("multivariate scan needs at least 2 inner folds");
    if (B < 1) throw std::invalid_argument("multivariate scan needs B >= 1 permutations");

    FeatureMatrix fm = encode_features(ds, numeric);
    const std::vector<double> y = ds.outcome_values();

    // stratified row-wise fold assignment, fixed across permutations
    Rng fold_rng(derive_seed(seed, kScanTag, 1));
    std::vector<std::int32_t> pos, neg;
    for (std::size_t i = 0; i < n; ++i) (y[i] > 0.5 ? pos : neg).push_back(static_cast<std::int32_t>(i));
    fold_rng.shuffle(pos);
    fold_rng.shuffle(neg);
    std::vector<int> fold_of(n, 0);
    int v = inner_folds;
    for (std::size_t i = 0; i < pos.size(); ++i) fold_of[static_cast<std::size_t>(pos[i])] = static_cast<int>(i % v);
    for (std::size_t i = 0; i < neg.size(); ++i) fold_of[static_cast<std::size_t>(neg[i])] = static_cast<int>(i % v);

    // Per-fold PCA depends on X only, so scores are shared by every draw.
    std::vector<PcFoldScores> folds;
    for (int f = 0; f < v; ++f) {
        PcFoldScores fs;
        for (std::size_t i = 0; i < n; ++i)
            (fold_of[i] == f ? fs.test_rows : fs.train_rows).push_back(static_cast<std::int32_t>(i));
        if (fs.test_rows.empty() || fs.train_rows.empty()) continue;
        Eigen::MatrixXd Xtr(fs.train_rows.size(), fm.X.cols());
        for (std::size_t i = 0; i < fs.train_rows.size(); ++i)
            Xtr.row(static_cast<Eigen::Index>(i)) = fm.X.row(fs.train_rows[i]);
        Eigen::MatrixXd Xte(fs.test_rows.size(), fm.X.cols());
        for (std::size_t i = 0; i < fs.test_rows.size(); ++i)
            Xte.row(static_cast<Eigen::Index>(i)) = fm.X.row(fs.test_rows[i]);
        // train-fold mean imputation and centering
        Eigen::VectorXd mu(fm.X.cols());
        for (Eigen::Index j = 0; j < Xtr.cols(); ++j) {
            double s = 0.0;
            Eigen::Index m = 0;
            for (Eigen::Index i = 0; i < Xtr.rows(); ++i)
                if (!std::isnan(Xtr(i, j))) { s += Xtr(i, j); ++m; }
            mu(j) = m > 0 ? s / static_cast<double>(m) : 0.0;
            for (Eigen::Index i = 0; i < Xtr.rows(); ++i)
                Xtr(i, j) = std::isnan(Xtr(i, j)) ? 0.0 : Xtr(i, j) - mu(j);
            for (Eigen::Index i = 0; i < Xte.rows(); ++i)
                Xte(i, j) = std::isnan(Xte(i, j)) ? 0.0 : Xte(i, j) - mu(j);
        }
        Eigen::BDCSVD<Eigen::MatrixXd> svd(Xtr, Eigen::ComputeThinV);
        Eigen::Index rank = 0;
        double tol = svd.singularValues().size() > 0 ? svd.singularValues()(0) * 1e-10 : 0.0;
        for (Eigen::Index k = 0; k < svd.singularValues().size(); ++k)
            if (svd.singularValues()(k) > tol) ++rank;
        Eigen::Index keep = std::min<Eigen::Index>(pcs, rank);
        if (keep < 1) continue;
        Eigen::MatrixXd V = svd.matrixV().leftCols(keep);
        fs.train_scores = Xtr * V;
        fs.test_scores = Xte * V;
        folds.push_back(std::move(fs));
    }
    if (folds.empty()) {
        scan.reason = "no usable inner fold for the principal-component model";
        return scan;
    }
    scan.n_pc = pcs;

    double observed = pc_cv_auc(folds, y);
    if (!std::isfinite(observed)) {
        scan.reason = "cross-validated AUC undefined under the observed labels";
        return scan;
    }
    scan.observed_auc = observed;

    std::vector<double> draws(static_cast<std::size_t>(B), std::numeric_limits<double>::quiet_NaN());
    parallel_for(static_cast<std::size_t>(B), [&](std::size_t b) {
        Rng rng(derive_seed(seed, static_cast<std::uint64_t>(b), kScanTag));
        std::vector<double> yp = y;
        rng.shuffle(yp);
        draws[b] = pc_cv_auc(folds, yp);
    });
    int b_extreme = 0, used = 0;
    for (double d : draws) {
        if (!std::isfinite(d)) continue;
        ++used;
        if (d >= observed) ++b_extreme;
    }
    if (used == 0) {
        scan.reason = "all permutation draws were degenerate";
        return scan;
    }
    scan.p_value = (b_extreme + 1.0) / (used + 1.0);
    scan.available = true;
    return scan;
}

DuplicateScan duplicate_scan(const Dataset& ds, const std::vector<std::string>& columns,
                             const SplitPlan& plan, double threshold) {
    if (!(threshold > 0.0 && threshold <= 1.0))
        throw std::invalid_argument("duplicate threshold must lie in (0, 1]");
    DuplicateScan scan;
    scan.threshold = threshold;
    std::vector<std::string> numeric;
    for (const auto& name : columns)
        if (ds.column(name).kind == ColumnKind::numeric) numeric.push_back(name);
    if (numeric.empty()) {
        scan.notes.push_back("no numeric reference columns; duplicate scan skipped");
        return scan;
    }
    FeatureMatrix fm = encode_features(ds, numeric);
    Eigen::MatrixXd X = fm.X;
    const Eigen::Index n = X.rows(), p = X.cols();
    // mean-impute, then z-score each column (similarity computation only)
    for (Eigen::Index j = 0; j < p; ++j) {
        double s = 0.0;
        Eigen::Index m = 0;
        for (Eigen::Index i = 0; i < n; ++i)
            if (!std::isnan(X(i, j))) { s += X(i, j); ++m; }
        double mu = m > 0 ? s / static_cast<double>(m) : 0.0;
        for (Eigen::Index i = 0; i < n; ++i)
            if (std::isnan(X(i, j))) X(i, j) = mu;
        double mean = X.col(j).mean();
        double sd = n > 1 ? std::sqrt((X.col(j).array() - mean).square().sum() / (n - 1)) : 0.0;
        if (sd <= 0.0) sd = 1.0;
        X.col(j) = (X.col(j).array() - mean) / sd;
    }
    Eigen::VectorXd norms = X.rowwise().norm();
    std::vector<bool> usable(static_cast<std::size_t>(n), true);
    for (Eigen::Index i = 0; i < n; ++i) {
        if (norms(i) <= 0.0) {
            usable[static_cast<std::size_t>(i)] = false;
            scan.zero_spread_rows.push_back(static_cast<int>(i));
        }
    }
    if (!scan.zero_spread_rows.empty())
        scan.notes.push_back(std::to_string(scan.zero_spread_rows.size()) +
                             " zero-norm row(s) excluded from pairing");

    // cross-fold membership lookup: fold id -> side per row
    auto crosses = [&](std::int32_t a, std::int32_t b) {
        for (const auto& f : plan.folds) {
            bool a_test = std::binary_search(f.test_rows.begin(), f.test_rows.end(), a);
            bool b_test = std::binary_search(f.test_rows.begin(), f.test_rows.end(), b);
            if (a_test == b_test) continue;
            std::int32_t tr = a_test ? b : a;
            if (std::binary_search(f.train_rows.begin(), f.train_rows.end(), tr)) return true;
        }
        return false;
    };

    for (Eigen::Index i = 0; i < n; ++i) {
        if (!usable[static_cast<std::size_t>(i)]) continue;
        for (Eigen::Index j = i + 1; j < n; ++j) {
            if (!usable[static_cast<std::size_t>(j)]) continue;
            double sim = X.row(i).dot(X.row(j)) / (norms(i) * norms(j));
            if (sim >= threshold) {
                DuplicateScan::Pair pair;
                pair.row_a = static_cast<int>(i);
                pair.row_b = static_cast<int>(j);
                pair.similarity = sim;
                pair.cross_fold = crosses(static_cast<std::int32_t>(i), static_cast<std::int32_t>(j));
                scan.pairs.push_back(pair);
            }
        }
    }
    scan.n_pairs = static_cast<int>(scan.pairs.size());
    for (const auto& pr : scan.pairs)
        if (pr.cross_fold) ++scan.n_cross_fold;
    return scan;
}

std::vector<MechanismItem> assess_mechanisms(const FitResult& fit, const Dataset& ds,
                                             const AuditResult& partial, double alpha) {
    std::vector<MechanismItem> out;

    {  // subject_overlap
        MechanismItem item;
        item.mechanism = "subject_overlap";
        const auto& subject = ds.roles().subject;
        if (!subject) {
            item.evidence = "OK: no subject column declared";
        } else {
            auto codes = ds.group_codes(*subject);
            std::map<std::int32_t, int> counts;
            for (std::int32_t c : codes)
                if (c >= 0) ++counts[c];
            bool repeats = std::any_of(counts.begin(), counts.end(),
                                       [](const auto& kv) { return kv.second > 1; });
            if (!repeats) {
                item.evidence = "OK: subject identifiers are unique";
            } else {
                OverlapReport rep = overlap_check(fit.plan, ds, {*subject});
                bool row_level = false;
                if (fit.plan.mode != SplitMode::time_series) {
                    auto plan_codes = plan_group_codes(fit.plan, ds);
                    std::map<std::int32_t, int> sizes;
                    for (std::int32_t c : plan_codes)
                        if (c >= 0) ++sizes[c];
                    row_level = !sizes.empty() &&
                                std::all_of(sizes.begin(), sizes.end(),
                                            [](const auto& kv) { return kv.second == 1; });
                }
                if (!rep.straddles.empty()) {
                    item.flagged = true;
                    item.evidence = "subject column '" + *subject + "' straddles train/test in " +
                                    std::to_string(rep.straddles.size()) + " fold case(s)";
                } else if (row_level) {
                    item.flagged = true;
                    item.evidence = "fold groups are single rows while subject '" + *subject +
                                    "' has repeated values";
                } else {
                    item.evidence = "OK: repeated subjects never straddle train and test";
                }
            }
        }
        out.push_back(std::move(item));
    }

    {  // batch_confounded
        MechanismItem item;
        item.mechanism = "batch_confounded";
        std::ostringstream hits;
        for (const auto& cell : partial.association) {
            if (!cell.valid || cell.by_design) continue;
            if (cell.p_value < alpha) {
                item.flagged = true;
                if (hits.tellp() > 0) hits << "; ";
                hits << cell.column << " (repeat " << cell.repeat_index << ", p = " << cell.p_value << ")";
            }
        }
        if (item.flagged)
            item.evidence = "fold association below alpha for " + hits.str();
        else if (partial.association.empty())
            item.evidence = "OK: no grouping metadata to test";
        else
            item.evidence = "OK: no non-design column associates with fold assignment";
        out.push_back(std::move(item));
    }

    {  // preprocessing_leak
        MechanismItem item;
        item.mechanism = "preprocessing_leak";
        item.evidence = "OK: preprocessing ran inside the guard for every fold";
        out.push_back(std::move(item));
    }

    {  // target_leakage
        MechanismItem item;
        item.mechanism = "target_leakage";
        std::ostringstream why;
        if (partial.target_uni && partial.target_uni->n_flagged > 0) {
            item.flagged = true;
            why << partial.target_uni->n_flagged << " feature(s) at or above the univariate threshold";
        }
        if (partial.target_multi && partial.target_multi->available &&
            partial.target_multi->p_value < alpha) {
            item.flagged = true;
            if (why.tellp() > 0) why << "; ";
            why << "multivariate scan p = " << partial.target_multi->p_value;
        }
        if (item.flagged)
            item.evidence = why.str();
        else if (!partial.target_uni && !partial.target_multi)
            item.evidence = "OK: target scans not run";
        else
            item.evidence = "OK: no feature scores near the outcome";
        out.push_back(std::move(item));
    }

    return out;
}

AuditResult audit_leakage(const FitResult& fit, const Dataset& ds, const AuditConfig& cfg) {
    if (ds.n_rows() != static_cast<std::size_t>(fit.n_rows))
        throw std::invalid_argument("audit dataset has " + std::to_string(ds.n_rows()) +
                                    " rows but the fit covers " + std::to_string(fit.n_rows));
    if (!fit.data_hash.empty()) {
        std::string h = ds.content_hash();
        if (h != fit.data_hash)
            throw std::invalid_argument("audit dataset does not match the fit: fit recorded " +
                                        fit.data_hash.substr(0, 12) + " but the dataset hashes to " +
                                        h.substr(0, 12));
    }

    AuditResult res;
    res.plan_hash = fit.plan.hash;
    res.learner_label = fit.learner.label();

    AuditConfig resolved = cfg;
    if (resolved.x_ref.empty()) resolved.x_ref = ds.predictor_names();
    if (resolved.assoc_columns.empty()) {
        if (ds.roles().batch) resolved.assoc_columns.push_back(*ds.roles().batch);
        if (ds.roles().study) resolved.assoc_columns.push_back(*ds.roles().study);
    }
    res.config = resolved;

    res.perm = perm_gap(fit, ds, resolved);

    if (!resolved.assoc_columns.empty())
        res.association = fold_association(fit.plan, ds, resolved.assoc_columns);

    if (ds.task() == TaskKind::binary_classification) {
        if (resolved.run_univariate)
            res.target_uni = target_scan_univariate(ds, resolved.x_ref, resolved.target_threshold);
        if (resolved.run_multivariate)
            res.target_multi = target_scan_multivariate(ds, resolved.x_ref, resolved.multivar_n_pc,
                                                        resolved.multivar_inner_folds,
                                                        resolved.multivar_B,
                                                        derive_seed(resolved.seed, kScanTag, 2));
    }
    if (resolved.run_duplicates)
        res.duplicates = duplicate_scan(ds, resolved.x_ref, fit.plan, resolved.duplicate_threshold);

    res.mechanisms = assess_mechanisms(fit, ds, res, resolved.mechanism_alpha);
    return res;
}

}  // namespace leakguard
