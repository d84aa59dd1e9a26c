#include "leakguard/resample.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <stdexcept>

#include "leakguard/parallel.hpp"
#include "leakguard/rng.hpp"
#include "leakguard/stats.hpp"

namespace leakguard {

namespace {

constexpr std::uint64_t kPrepTag = 0x70726570ULL;
constexpr std::uint64_t kModelTag = 0x6d6f64656cULL;

Eigen::MatrixXd slice_rows(const Eigen::MatrixXd& X, const std::vector<std::int32_t>& rows) {
    Eigen::MatrixXd out(static_cast<Eigen::Index>(rows.size()), X.cols());
    for (std::size_t i = 0; i < rows.size(); ++i)
        out.row(static_cast<Eigen::Index>(i)) = X.row(rows[i]);
    return out;
}

std::vector<double> slice_vec(const std::vector<double>& v, const std::vector<std::int32_t>& rows) {
    std::vector<double> out(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) out[i] = v[static_cast<std::size_t>(rows[i])];
    return out;
}

bool single_class(const std::vector<double>& y) {
    bool pos = false, neg = false;
    for (double v : y) (v > 0.5 ? pos : neg) = true;
    return !(pos && neg);
}

void check_plan_matches(const SplitPlan& plan, const Dataset& ds) {
    if (plan.n_rows != static_cast<int>(ds.n_rows()))
        throw std::invalid_argument(
            "stale plan: plan " + plan.hash + " covers " + std::to_string(plan.n_rows) +
            " rows but dataset " + ds.content_hash().substr(0, 12) + " has " +
            std::to_string(ds.n_rows()) + " rows");
}

}  // namespace

std::string fold_status_name(FoldStatus s) {
    switch (s) {
        case FoldStatus::success: return "success";
        case FoldStatus::skipped: return "skipped";
        case FoldStatus::failed: return "failed";
    }
    return "?";
}

const MetricAggregate& FitResult::aggregate(MetricKind m) const {
    for (const auto& a : aggregates)
        if (a.metric == m) return a;
    throw std::out_of_range("metric '" + metric_name(m) + "' was not requested in this fit");
}

bool FitResult::has_predictions() const {
    for (const auto& f : folds)
        if (!f.predictions.empty()) return true;
    return false;
}

MetricAggregate aggregate_metric(const std::vector<FoldRecord>& folds, MetricKind metric) {
    std::vector<double> vals;
    for (const auto& f : folds) {
        if (f.status != FoldStatus::success) continue;
        for (const auto& mv : f.metrics)
            if (mv.metric == metric && std::isfinite(mv.value)) vals.push_back(mv.value);
    }
    MetricAggregate agg;
    agg.metric = metric;
    agg.folds_used = static_cast<int>(vals.size());
    if (vals.empty()) {
        agg.mean = agg.sd = agg.ci_lo = agg.ci_hi = std::nan("");
        return agg;
    }
    agg.mean = mean_of(vals);
    if (vals.size() == 1) {
        agg.sd = std::nan("");
        agg.ci_lo = agg.ci_hi = agg.mean;
        return agg;
    }
    agg.sd = sample_sd(vals);
    double f = static_cast<double>(vals.size());
    double half = student_t_quantile(0.975, f - 1.0) * agg.sd / std::sqrt(f);
    double lo, hi;
    metric_range(metric, lo, hi);
    agg.ci_lo = std::max(lo, agg.mean - half);
    agg.ci_hi = std::min(hi, agg.mean + half);
    return agg;
}

FitResult fit_resample(const Dataset& ds, const SplitPlan& plan, const LearnerSpec& learner,
                       const PreprocSpec& preprocess, const std::vector<MetricKind>& metrics,
                       std::uint64_t seed, bool store_refit_data) {
    check_plan_matches(plan, ds);
    if (metrics.empty()) throw std::invalid_argument("at least one metric is required");
    for (MetricKind m : metrics)
        if ((ds.task() == TaskKind::binary_classification) != metric_for_binary(m))
            throw std::invalid_argument("metric '" + metric_name(m) + "' does not match the task kind");

    FitResult res;
    res.task = ds.task();
    res.outcome = ds.roles().outcome;
    res.positive_class = ds.positive_class();
    res.learner = learner;
    res.preprocess = preprocess;
    res.metrics = metrics;
    res.seed = seed;
    res.n_rows = static_cast<int>(ds.n_rows());
    res.plan = plan;
    res.refit_payload = store_refit_data;
    if (store_refit_data) res.data_hash = ds.content_hash();

    FeatureMatrix fm = encode_features(ds, ds.predictor_names());
    std::vector<double> y = ds.outcome_values();

    res.folds.resize(plan.folds.size());
    parallel_for(static_cast<int>(plan.folds.size()), [&](int k) {
        const Fold& fold = plan.folds[static_cast<std::size_t>(k)];
        FoldRecord rec;
        rec.repeat_index = fold.repeat_index;
        rec.fold_index = fold.fold_index;
        rec.test_rows = fold.test_rows;
        rec.n_features_in = static_cast<int>(fm.X.cols());
        try {
            std::vector<double> ytr = slice_vec(y, fold.train_rows);
            std::vector<double> yte = slice_vec(y, fold.test_rows);
            if (ds.task() == TaskKind::binary_classification && single_class(ytr)) {
                rec.status = FoldStatus::skipped;
                rec.message = "training fold contains a single outcome class";
            } else {
                Eigen::MatrixXd Xtr = slice_rows(fm.X, fold.train_rows);
                Eigen::MatrixXd Xte = slice_rows(fm.X, fold.test_rows);
                auto r = static_cast<std::uint64_t>(fold.repeat_index);
                auto f = static_cast<std::uint64_t>(fold.fold_index);
                FittedPreproc fp = fit_preproc(preprocess, Xtr, ytr, ds.task(), fm.names,
                                               derive_seed(seed, r, f, kPrepTag));
                Eigen::MatrixXd Xtr2 = apply_preproc(fp, Xtr);
                Eigen::MatrixXd Xte2 = apply_preproc(fp, Xte);
                FittedModel model = fit_learner(learner, Xtr2, ytr, ds.task(),
                                                derive_seed(seed, r, f, kModelTag));
                rec.predictions = model.predict(Xte2);
                rec.metrics = metric_suite(ds.task(), metrics, rec.predictions, yte);
                rec.n_features_out = static_cast<int>(Xtr2.cols());
                rec.preproc_hash = fp.params_hash();
                rec.lambda = model.lambda;
                rec.model_iterations = model.iterations;
                rec.status = FoldStatus::success;
                for (const auto& mv : rec.metrics)
                    if (!std::isfinite(mv.value))
                        rec.message = "metric '" + metric_name(mv.metric) +
                                      "' undefined on this test fold (single class)";
            }
        } catch (const std::exception& e) {
            rec.status = FoldStatus::failed;
            rec.message = e.what();
            rec.predictions.clear();
        }
        res.folds[static_cast<std::size_t>(k)] = std::move(rec);
    });

    for (MetricKind m : metrics) res.aggregates.push_back(aggregate_metric(res.folds, m));
    return res;
}

RepeatSummary aggregate_repeats(const FitResult& fit, MetricKind metric) {
    std::set<int> repeats;
    for (const auto& f : fit.folds) repeats.insert(f.repeat_index);
    RepeatSummary out;
    for (int rep : repeats) {
        double num = 0.0, den = 0.0;
        for (const auto& f : fit.folds) {
            if (f.repeat_index != rep || f.status != FoldStatus::success) continue;
            for (const auto& mv : f.metrics) {
                if (mv.metric == metric && std::isfinite(mv.value)) {
                    num += static_cast<double>(mv.n_test) * mv.value;
                    den += static_cast<double>(mv.n_test);
                }
            }
        }
        if (den > 0.0) {
            out.repeat_index.push_back(rep);
            out.value.push_back(num / den);
        } else {
            out.dropped_repeats.push_back(rep);
        }
    }
    return out;
}

namespace {

struct InnerEval {
    std::vector<double> mean;
    std::vector<double> se;
    std::vector<int> folds;
};

InnerEval evaluate_candidates(const Eigen::MatrixXd& X, const std::vector<double>& y,
                              const FeatureMatrix& fm, const Dataset& ds,
                              const std::vector<Fold>& inner_folds,
                              const std::vector<double>& candidates, const LearnerSpec& learner,
                              const PreprocSpec& preprocess, MetricKind tuning_metric,
                              std::uint64_t seed) {
    std::size_t nc = candidates.size();
    std::vector<std::vector<double>> values(nc);
    for (std::size_t j = 0; j < inner_folds.size(); ++j) {
        const Fold& inf = inner_folds[j];
        std::vector<double> ytr = slice_vec(y, inf.train_rows);
        std::vector<double> yva = slice_vec(y, inf.test_rows);
        if (ds.task() == TaskKind::binary_classification && single_class(ytr)) continue;
        Eigen::MatrixXd Xtr = slice_rows(X, inf.train_rows);
        Eigen::MatrixXd Xva = slice_rows(X, inf.test_rows);
        FittedPreproc fp = fit_preproc(preprocess, Xtr, ytr, ds.task(), fm.names,
                                       derive_seed(seed, static_cast<std::uint64_t>(j), kPrepTag));
        Eigen::MatrixXd Xtr2 = apply_preproc(fp, Xtr);
        Eigen::MatrixXd Xva2 = apply_preproc(fp, Xva);
        auto path = elastic_net_path(Xtr2, ytr, learner.alpha, candidates, GlmFamily::binomial,
                                     learner.max_iter, learner.tol);
        for (std::size_t c = 0; c < nc; ++c) {
            Eigen::VectorXd eta = Eigen::VectorXd::Constant(Xva2.rows(), path.intercepts[c]) +
                                  Xva2 * path.coefs[c];
            std::vector<double> preds(static_cast<std::size_t>(eta.size()));
            for (Eigen::Index i = 0; i < eta.size(); ++i)
                preds[static_cast<std::size_t>(i)] = 1.0 / (1.0 + std::exp(-std::clamp(eta(i), -35.0, 35.0)));
            double v = metric_value(tuning_metric, preds, yva);
            if (std::isfinite(v)) values[c].push_back(v);
        }
    }
    InnerEval ev;
    for (std::size_t c = 0; c < nc; ++c) {
        ev.folds.push_back(static_cast<int>(values[c].size()));
        if (values[c].empty()) {
            ev.mean.push_back(std::nan(""));
            ev.se.push_back(std::nan(""));
        } else {
            ev.mean.push_back(mean_of(values[c]));
            double sd = values[c].size() > 1 ? sample_sd(values[c]) : 0.0;
            ev.se.push_back(sd / std::sqrt(static_cast<double>(values[c].size())));
        }
    }
    return ev;
}

std::size_t pick_candidate(const std::vector<double>& candidates, const InnerEval& ev,
                           MetricKind metric, TuneSelection selection, std::size_t& best_out) {
    bool higher = higher_is_better(metric);
    std::size_t best = candidates.size();
    for (std::size_t c = 0; c < candidates.size(); ++c) {
        if (!std::isfinite(ev.mean[c])) continue;
        if (best == candidates.size() ||
            (higher ? ev.mean[c] > ev.mean[best] : ev.mean[c] < ev.mean[best]))
            best = c;
    }
    if (best == candidates.size())
        throw std::runtime_error("no tuning candidate could be evaluated on the inner folds");
    best_out = best;
    if (selection == TuneSelection::best) return best;
    double threshold = higher ? ev.mean[best] - ev.se[best] : ev.mean[best] + ev.se[best];
    // candidates are sorted descending: the first acceptable one is the most
    // regularized
    for (std::size_t c = 0; c < candidates.size(); ++c) {
        if (!std::isfinite(ev.mean[c])) continue;
        if (higher ? ev.mean[c] >= threshold : ev.mean[c] <= threshold) return c;
    }
    return best;
}

}  // namespace

TuneResult tune_resample(const Dataset& ds, const SplitPlan& plan, const LearnerSpec& learner,
                         const PreprocSpec& preprocess, const std::vector<MetricKind>& metrics,
                         const TuneOptions& opts, std::uint64_t seed) {
    check_plan_matches(plan, ds);
    if (!plan.nested || plan.inner.size() != plan.folds.size())
        throw std::invalid_argument("tune_resample requires a nested plan (build with nested=true)");
    if (learner.kind != LearnerSpec::Kind::logistic_elastic_net)
        throw std::invalid_argument("tune_resample tunes the elastic-net penalty; use the glmnet learner");
    if (metrics.empty()) throw std::invalid_argument("at least one metric is required");
    if (ds.task() != TaskKind::binary_classification)
        throw std::invalid_argument("tune_resample currently supports binary tasks");

    TuneResult tr;
    tr.tuning_metric = metrics.front();
    tr.selection = opts.selection;

    FeatureMatrix fm = encode_features(ds, ds.predictor_names());
    std::vector<double> y = ds.outcome_values();

    tr.outer.task = ds.task();
    tr.outer.outcome = ds.roles().outcome;
    tr.outer.positive_class = ds.positive_class();
    tr.outer.learner = learner;
    tr.outer.preprocess = preprocess;
    tr.outer.metrics = metrics;
    tr.outer.seed = seed;
    tr.outer.n_rows = static_cast<int>(ds.n_rows());
    tr.outer.plan = plan;
    tr.outer.folds.resize(plan.folds.size());
    tr.fold_reports.resize(plan.folds.size());

    parallel_for(static_cast<int>(plan.folds.size()), [&](int k) {
        const Fold& fold = plan.folds[static_cast<std::size_t>(k)];
        FoldRecord rec;
        rec.repeat_index = fold.repeat_index;
        rec.fold_index = fold.fold_index;
        rec.test_rows = fold.test_rows;
        rec.n_features_in = static_cast<int>(fm.X.cols());
        TuneFoldReport report;
        report.repeat_index = fold.repeat_index;
        report.fold_index = fold.fold_index;
        try {
            std::vector<double> ytr = slice_vec(y, fold.train_rows);
            std::vector<double> yte = slice_vec(y, fold.test_rows);
            if (single_class(ytr)) {
                rec.status = FoldStatus::skipped;
                rec.message = "training fold contains a single outcome class";
            } else {
                auto r = static_cast<std::uint64_t>(fold.repeat_index);
                auto f = static_cast<std::uint64_t>(fold.fold_index);
                Eigen::MatrixXd Xtr = slice_rows(fm.X, fold.train_rows);
                Eigen::MatrixXd Xte = slice_rows(fm.X, fold.test_rows);
                FittedPreproc fp = fit_preproc(preprocess, Xtr, ytr, ds.task(), fm.names,
                                               derive_seed(seed, r, f, kPrepTag));
                Eigen::MatrixXd Xtr2 = apply_preproc(fp, Xtr);

                std::vector<double> candidates = opts.explicit_grid;
                if (candidates.empty()) {
                    double lam_max = elastic_net_lambda_max(Xtr2, ytr, learner.alpha,
                                                            GlmFamily::binomial);
                    candidates = lambda_path(lam_max, opts.grid_size, 1e-3);
                }
                std::sort(candidates.rbegin(), candidates.rend());

                InnerEval ev = evaluate_candidates(fm.X, y, fm, ds,
                                                   plan.inner[static_cast<std::size_t>(k)],
                                                   candidates, learner, preprocess,
                                                   metrics.front(),
                                                   derive_seed(seed, r, f, kModelTag));
                std::size_t best = 0;
                std::size_t winner = pick_candidate(candidates, ev, metrics.front(),
                                                    opts.selection, best);
                report.candidates = candidates;
                report.candidate_mean = ev.mean;
                report.candidate_se = ev.se;
                report.candidate_inner_folds = ev.folds;
                report.best_lambda = candidates[best];
                report.chosen_lambda = candidates[winner];

                LearnerSpec winner_spec = learner;
                winner_spec.lambda = candidates[winner];
                FittedModel model = fit_elastic_net(Xtr2, ytr, winner_spec, GlmFamily::binomial,
                                                    derive_seed(seed, r, f, kModelTag));
                rec.predictions = model.predict(apply_preproc(fp, Xte));
                rec.metrics = metric_suite(ds.task(), metrics, rec.predictions, yte);
                rec.n_features_out = static_cast<int>(Xtr2.cols());
                rec.preproc_hash = fp.params_hash();
                rec.lambda = candidates[winner];
                rec.model_iterations = model.iterations;
                rec.status = FoldStatus::success;
            }
        } catch (const std::exception& e) {
            rec.status = FoldStatus::failed;
            rec.message = e.what();
        }
        tr.outer.folds[static_cast<std::size_t>(k)] = std::move(rec);
        tr.fold_reports[static_cast<std::size_t>(k)] = std::move(report);
    });

    for (MetricKind m : metrics)
        tr.outer.aggregates.push_back(aggregate_metric(tr.outer.folds, m));

    std::vector<double> winners;
    for (const auto& rec : tr.outer.folds)
        if (rec.status == FoldStatus::success) winners.push_back(rec.lambda);
    if (winners.empty()) throw std::runtime_error("tuning failed on every outer fold");
    tr.final_lambda = median_of(winners);

    if (opts.refit) {
        FittedPreproc fp = fit_preproc(preprocess, fm.X, y, ds.task(), fm.names,
                                       derive_seed(seed, ~0ULL, kPrepTag));
        Eigen::MatrixXd Xall = apply_preproc(fp, fm.X);
        LearnerSpec final_spec = learner;
        final_spec.lambda = tr.final_lambda;
        tr.final_model = fit_elastic_net(Xall, y, final_spec, GlmFamily::binomial,
                                         derive_seed(seed, ~0ULL, kModelTag));
        tr.final_model.feature_names = fp.output_names;
        tr.final_preproc = std::move(fp);
        tr.refitted = true;
    }
    return tr;
}

}  // namespace leakguard
