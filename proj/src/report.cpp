#include "leakguard/report.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace leakguard {

namespace {

using nlohmann::json;

double jdouble(const json& j, const char* key, double fallback = std::numeric_limits<double>::quiet_NaN()) {
    if (!j.contains(key) || j[key].is_null()) return fallback;
    return j[key].get<double>();
}

json dnum(double v) {
    if (std::isfinite(v)) return v;
    return nullptr;  // NaN/inf have no JSON literal
}

std::string task_name(TaskKind t) {
    return t == TaskKind::binary_classification ? "binary" : "regression";
}

TaskKind task_from_name(const std::string& s) {
    if (s == "binary") return TaskKind::binary_classification;
    if (s == "regression") return TaskKind::regression;
    throw std::invalid_argument("unknown task kind: " + s);
}

std::string learner_kind_name(LearnerSpec::Kind k) {
    switch (k) {
        case LearnerSpec::Kind::logistic_glm: return "glm";
        case LearnerSpec::Kind::logistic_elastic_net: return "glmnet";
        case LearnerSpec::Kind::linear_ols: return "ols";
        case LearnerSpec::Kind::linear_ridge: return "ridge";
    }
    return "glm";
}

LearnerSpec::Kind learner_kind_from_name(const std::string& s) {
    if (s == "glm") return LearnerSpec::Kind::logistic_glm;
    if (s == "glmnet") return LearnerSpec::Kind::logistic_elastic_net;
    if (s == "ols") return LearnerSpec::Kind::linear_ols;
    if (s == "ridge") return LearnerSpec::Kind::linear_ridge;
    throw std::invalid_argument("unknown learner kind: " + s);
}

json learner_to_json(const LearnerSpec& spec) {
    json j;
    j["kind"] = learner_kind_name(spec.kind);
    j["alpha"] = spec.alpha;
    j["lambda"] = spec.lambda;
    j["n_lambda"] = spec.n_lambda;
    j["lambda_min_ratio"] = spec.lambda_min_ratio;
    j["cv_folds"] = spec.cv_folds;
    j["max_iter"] = spec.max_iter;
    j["tol"] = spec.tol;
    j["ridge_eps"] = spec.ridge_eps;
    j["label"] = spec.label();
    return j;
}

LearnerSpec learner_from_json(const json& j) {
    LearnerSpec spec;
    spec.kind = learner_kind_from_name(j.at("kind").get<std::string>());
    spec.alpha = j.value("alpha", spec.alpha);
    spec.lambda = j.value("lambda", spec.lambda);
    spec.n_lambda = j.value("n_lambda", spec.n_lambda);
    spec.lambda_min_ratio = j.value("lambda_min_ratio", spec.lambda_min_ratio);
    spec.cv_folds = j.value("cv_folds", spec.cv_folds);
    spec.max_iter = j.value("max_iter", spec.max_iter);
    spec.tol = j.value("tol", spec.tol);
    spec.ridge_eps = j.value("ridge_eps", spec.ridge_eps);
    return spec;
}

json preproc_to_json(const PreprocSpec& spec) {
    json steps = json::array();
    for (const auto& s : spec.steps) {
        json item;
        item["kind"] = step_name(s.kind);
        item["threshold"] = s.threshold;
        item["k"] = s.k;
        item["lambda"] = s.lambda;
        item["m"] = s.m;
        steps.push_back(item);
    }
    json j;
    j["label"] = spec.label();
    j["steps"] = steps;
    return j;
}

StepKind step_from_name(const std::string& s) {
    if (s == "impute_median") return StepKind::impute_median;
    if (s == "normalize_zscore") return StepKind::normalize_zscore;
    if (s == "normalize_robust") return StepKind::normalize_robust;
    if (s == "filter_variance") return StepKind::filter_variance;
    if (s == "filter_iqr") return StepKind::filter_iqr;
    if (s == "select_ttest") return StepKind::select_ttest;
    if (s == "select_lasso") return StepKind::select_lasso;
    if (s == "project_pca") return StepKind::project_pca;
    throw std::invalid_argument("unknown preprocessing step: " + s);
}

PreprocSpec preproc_from_json(const json& j) {
    PreprocSpec spec;
    for (const auto& item : j.at("steps")) {
        PreprocStep s;
        s.kind = step_from_name(item.at("kind").get<std::string>());
        s.threshold = item.value("threshold", 0.0);
        s.k = item.value("k", 0);
        s.lambda = item.value("lambda", -1.0);
        s.m = item.value("m", 0);
        spec.steps.push_back(s);
    }
    spec.validate();
    return spec;
}

json model_to_json(const FittedModel& m) {
    json j;
    j["intercept"] = m.intercept;
    json coef = json::array();
    for (Eigen::Index i = 0; i < m.coef.size(); ++i) coef.push_back(m.coef(i));
    j["coef"] = coef;
    j["feature_names"] = m.feature_names;
    j["logistic"] = m.logistic;
    j["iterations"] = m.iterations;
    j["converged"] = m.converged;
    j["lambda"] = m.lambda;
    j["alpha"] = m.alpha;
    j["warnings"] = m.warnings;
    return j;
}

}  // namespace

json plan_to_json(const SplitPlan& plan) {
    CompactPlan c = to_compact(plan);
    json j;
    j["schema_version"] = kSchemaVersion;
    j["tool_version"] = kToolVersion;
    j["kind"] = "plan";
    j["mode"] = split_mode_name(plan.mode);
    json combine = json::array();
    for (SplitMode m : plan.combine) combine.push_back(split_mode_name(m));
    j["combine"] = combine;
    j["v"] = plan.v;
    j["repeats"] = plan.repeats;
    j["stratified"] = plan.stratified;
    j["nested"] = plan.nested;
    j["inner_v"] = plan.inner_v;
    j["seed"] = plan.seed;
    j["n_rows"] = plan.n_rows;
    j["group_col"] = plan.group_col;
    j["time_col"] = plan.time_col;
    j["time"] = {{"horizon", plan.time.horizon},
                 {"purge", plan.time.purge},
                 {"embargo", plan.time.embargo}};
    j["fold_of"] = c.fold_of;
    j["time_order"] = plan.time_order;
    j["hash"] = plan.hash;
    if (plan.nested && !plan.inner.empty()) {
        // per outer fold: 1-based inner fold id per row, 0 = outside the
        // outer training set
        json inner = json::array();
        for (const auto& folds : plan.inner) {
            std::vector<std::int32_t> fold_of(static_cast<std::size_t>(plan.n_rows), 0);
            for (const auto& f : folds)
                for (std::int32_t r : f.test_rows)
                    fold_of[static_cast<std::size_t>(r)] = f.fold_index + 1;
            inner.push_back(fold_of);
        }
        j["inner_fold_of"] = inner;
    }
    return j;
}

SplitPlan plan_from_json(const json& j) {
    CompactPlan c;
    c.mode = split_mode_from_name(j.at("mode").get<std::string>());
    for (const auto& m : j.value("combine", json::array()))
        c.combine.push_back(split_mode_from_name(m.get<std::string>()));
    c.v = j.at("v").get<int>();
    c.repeats = j.at("repeats").get<int>();
    c.stratified = j.value("stratified", false);
    c.seed = j.at("seed").get<std::uint64_t>();
    c.n_rows = j.at("n_rows").get<int>();
    c.group_col = j.value("group_col", "");
    c.time_col = j.value("time_col", "");
    if (j.contains("time")) {
        c.time.horizon = j["time"].value("horizon", 0);
        c.time.purge = j["time"].value("purge", 0);
        c.time.embargo = j["time"].value("embargo", 0);
    }
    c.fold_of = j.at("fold_of").get<std::vector<std::vector<std::int32_t>>>();
    c.time_order = j.value("time_order", std::vector<std::int32_t>{});
    c.hash = j.value("hash", "");
    SplitPlan plan = expand_compact(c);
    plan.nested = j.value("nested", false);
    plan.inner_v = j.value("inner_v", 3);
    if (plan.nested && j.contains("inner_fold_of")) {
        auto inner = j["inner_fold_of"].get<std::vector<std::vector<std::int32_t>>>();
        if (inner.size() != plan.folds.size())
            throw std::invalid_argument("nested plan has " + std::to_string(inner.size()) +
                                        " inner blocks for " + std::to_string(plan.folds.size()) +
                                        " outer folds");
        plan.inner.resize(plan.folds.size());
        for (std::size_t k = 0; k < inner.size(); ++k) {
            const auto& fo = inner[k];
            std::int32_t v_seen = 0;
            for (std::int32_t id : fo) v_seen = std::max(v_seen, id);
            for (std::int32_t f = 1; f <= v_seen; ++f) {
                Fold fold;
                fold.repeat_index = plan.folds[k].repeat_index;
                fold.fold_index = f - 1;
                for (std::size_t r = 0; r < fo.size(); ++r) {
                    if (fo[r] == f)
                        fold.test_rows.push_back(static_cast<std::int32_t>(r));
                    else if (fo[r] > 0)
                        fold.train_rows.push_back(static_cast<std::int32_t>(r));
                }
                plan.inner[k].push_back(std::move(fold));
            }
        }
    }
    return plan;
}

json fit_to_json(const FitResult& fit) {
    json j;
    j["schema_version"] = kSchemaVersion;
    j["tool_version"] = kToolVersion;
    j["kind"] = "fit";
    j["task"] = task_name(fit.task);
    j["outcome"] = fit.outcome;
    j["positive_class"] = fit.positive_class;
    j["learner"] = learner_to_json(fit.learner);
    j["preprocess"] = preproc_to_json(fit.preprocess);
    json metrics = json::array();
    for (MetricKind m : fit.metrics) metrics.push_back(metric_name(m));
    j["metrics"] = metrics;
    j["seed"] = fit.seed;
    j["n_rows"] = fit.n_rows;
    j["plan"] = plan_to_json(fit.plan);
    json folds = json::array();
    for (const auto& f : fit.folds) {
        json rec;
        rec["repeat"] = f.repeat_index + 1;
        rec["fold"] = f.fold_index + 1;
        rec["status"] = fold_status_name(f.status);
        rec["message"] = f.message;
        json mv = json::array();
        for (const auto& m : f.metrics) {
            json item;
            item["metric"] = metric_name(m.metric);
            item["value"] = dnum(m.value);
            item["n_test"] = m.n_test;
            mv.push_back(item);
        }
        rec["metrics"] = mv;
        rec["test_rows"] = f.test_rows;
        json preds = json::array();
        for (double p : f.predictions) preds.push_back(dnum(p));
        rec["predictions"] = preds;
        rec["n_features_in"] = f.n_features_in;
        rec["n_features_out"] = f.n_features_out;
        rec["preproc_hash"] = f.preproc_hash;
        rec["lambda"] = f.lambda;
        rec["iterations"] = f.model_iterations;
        folds.push_back(rec);
    }
    j["folds"] = folds;
    json aggs = json::array();
    for (const auto& a : fit.aggregates) {
        json item;
        item["metric"] = metric_name(a.metric);
        item["mean"] = dnum(a.mean);
        item["sd"] = dnum(a.sd);
        item["ci_lo"] = dnum(a.ci_lo);
        item["ci_hi"] = dnum(a.ci_hi);
        item["folds_used"] = a.folds_used;
        aggs.push_back(item);
    }
    j["aggregates"] = aggs;
    j["refit_payload"] = fit.refit_payload;
    j["data_ref"] = fit.data_ref;
    j["data_hash"] = fit.data_hash;
    return j;
}

FitResult fit_from_json(const json& j) {
    if (j.value("kind", "") != "fit")
        throw std::invalid_argument("expected a fit bundle, found kind '" + j.value("kind", "") + "'");
    FitResult fit;
    fit.task = task_from_name(j.at("task").get<std::string>());
    fit.outcome = j.value("outcome", "");
    fit.positive_class = j.value("positive_class", "");
    fit.learner = learner_from_json(j.at("learner"));
    fit.preprocess = preproc_from_json(j.at("preprocess"));
    for (const auto& m : j.at("metrics")) fit.metrics.push_back(metric_from_name(m.get<std::string>()));
    fit.seed = j.at("seed").get<std::uint64_t>();
    fit.n_rows = j.at("n_rows").get<int>();
    fit.plan = plan_from_json(j.at("plan"));
    for (const auto& rec : j.at("folds")) {
        FoldRecord f;
        f.repeat_index = rec.at("repeat").get<int>() - 1;
        f.fold_index = rec.at("fold").get<int>() - 1;
        const std::string status = rec.at("status").get<std::string>();
        f.status = status == "success" ? FoldStatus::success
                   : status == "skipped" ? FoldStatus::skipped
                                         : FoldStatus::failed;
        f.message = rec.value("message", "");
        for (const auto& item : rec.at("metrics")) {
            MetricValue mv;
            mv.metric = metric_from_name(item.at("metric").get<std::string>());
            mv.value = item.at("value").is_null() ? std::numeric_limits<double>::quiet_NaN()
                                                  : item.at("value").get<double>();
            mv.n_test = item.at("n_test").get<int>();
            f.metrics.push_back(mv);
        }
        f.test_rows = rec.at("test_rows").get<std::vector<std::int32_t>>();
        for (const auto& p : rec.at("predictions"))
            f.predictions.push_back(p.is_null() ? std::numeric_limits<double>::quiet_NaN()
                                                : p.get<double>());
        f.n_features_in = rec.value("n_features_in", 0);
        f.n_features_out = rec.value("n_features_out", 0);
        f.preproc_hash = rec.value("preproc_hash", "");
        f.lambda = rec.value("lambda", 0.0);
        f.model_iterations = rec.value("iterations", 0);
        fit.folds.push_back(std::move(f));
    }
    for (const auto& item : j.at("aggregates")) {
        MetricAggregate a;
        a.metric = metric_from_name(item.at("metric").get<std::string>());
        a.mean = jdouble(item, "mean");
        a.sd = jdouble(item, "sd");
        a.ci_lo = jdouble(item, "ci_lo");
        a.ci_hi = jdouble(item, "ci_hi");
        a.folds_used = item.value("folds_used", 0);
        fit.aggregates.push_back(a);
    }
    fit.refit_payload = j.value("refit_payload", false);
    fit.data_ref = j.value("data_ref", "");
    fit.data_hash = j.value("data_hash", "");
    return fit;
}

json tune_to_json(const TuneResult& tune) {
    json j;
    j["schema_version"] = kSchemaVersion;
    j["tool_version"] = kToolVersion;
    j["kind"] = "tune";
    j["outer"] = fit_to_json(tune.outer);
    j["tuning_metric"] = metric_name(tune.tuning_metric);
    j["selection"] = tune.selection == TuneSelection::one_std_err ? "one_std_err" : "best";
    j["final_lambda"] = tune.final_lambda;
    j["refitted"] = tune.refitted;
    json reports = json::array();
    for (const auto& r : tune.fold_reports) {
        json item;
        item["repeat"] = r.repeat_index + 1;
        item["fold"] = r.fold_index + 1;
        item["chosen_lambda"] = r.chosen_lambda;
        item["best_lambda"] = r.best_lambda;
        item["candidates"] = r.candidates;
        json means = json::array(), ses = json::array();
        for (double v : r.candidate_mean) means.push_back(dnum(v));
        for (double v : r.candidate_se) ses.push_back(dnum(v));
        item["candidate_mean"] = means;
        item["candidate_se"] = ses;
        item["candidate_inner_folds"] = r.candidate_inner_folds;
        reports.push_back(item);
    }
    j["fold_reports"] = reports;
    if (tune.refitted) {
        j["final_model"] = model_to_json(tune.final_model);
        json fp;
        fp["input_names"] = tune.final_preproc.input_names;
        fp["output_names"] = tune.final_preproc.output_names;
        fp["params_hash"] = tune.final_preproc.params_hash();
        fp["warnings"] = tune.final_preproc.warnings;
        j["final_preproc"] = fp;
    }
    return j;
}

json audit_to_json(const AuditResult& audit) {
    json j;
    j["schema_version"] = kSchemaVersion;
    j["tool_version"] = kToolVersion;
    j["kind"] = "audit";
    j["plan_hash"] = audit.plan_hash;
    j["learner"] = audit.learner_label;

    const AuditConfig& cfg = audit.config;
    json cj;
    cj["metric"] = metric_name(cfg.metric);
    cj["B"] = cfg.B;
    cj["perm_refit"] = perm_refit_name(cfg.perm_refit);
    cj["perm_stratify"] = cfg.perm_stratify;
    cj["return_perm_draws"] = cfg.return_perm_draws;
    cj["x_ref"] = cfg.x_ref;
    cj["assoc_columns"] = cfg.assoc_columns;
    cj["target_threshold"] = cfg.target_threshold;
    cj["duplicate_threshold"] = cfg.duplicate_threshold;
    cj["run_univariate"] = cfg.run_univariate;
    cj["run_multivariate"] = cfg.run_multivariate;
    cj["run_duplicates"] = cfg.run_duplicates;
    cj["multivar_n_pc"] = cfg.multivar_n_pc;
    cj["multivar_inner_folds"] = cfg.multivar_inner_folds;
    cj["multivar_B"] = cfg.multivar_B;
    cj["mechanism_alpha"] = cfg.mechanism_alpha;
    cj["seed"] = cfg.seed;
    j["config"] = cj;

    const PermGapResult& p = audit.perm;
    json pj;
    pj["observed"] = dnum(p.observed);
    pj["perm_mean"] = dnum(p.perm_mean);
    pj["perm_sd"] = dnum(p.perm_sd);
    pj["gap"] = dnum(p.gap);
    pj["p_value"] = dnum(p.p_value);
    pj["method"] = p.method;
    pj["metric"] = metric_name(p.metric);
    pj["B"] = p.B;
    pj["B_used"] = p.B_used;
    pj["stratified"] = p.stratified;
    if (!p.draws.empty()) {
        json draws = json::array();
        for (double d : p.draws) draws.push_back(dnum(d));
        pj["draws"] = draws;
    }
    pj["notes"] = p.notes;
    j["permutation"] = pj;

    json assoc = json::array();
    for (const auto& cell : audit.association) {
        json item;
        item["column"] = cell.column;
        item["repeat"] = cell.repeat_index;
        item["chi2"] = dnum(cell.chi2);
        item["df"] = dnum(cell.df);
        item["p_value"] = dnum(cell.p_value);
        item["cramers_v"] = dnum(cell.cramers_v);
        item["table"] = cell.table;
        item["levels"] = cell.level_names;
        item["valid"] = cell.valid;
        item["by_design"] = cell.by_design;
        item["note"] = cell.note;
        assoc.push_back(item);
    }
    j["association"] = assoc;

    if (audit.target_uni) {
        json u;
        u["threshold"] = audit.target_uni->threshold;
        u["n_flagged"] = audit.target_uni->n_flagged;
        json feats = json::array();
        for (const auto& f : audit.target_uni->features) {
            json item;
            item["name"] = f.name;
            item["score"] = dnum(f.score);
            item["flagged"] = f.flagged;
            item["note"] = f.note;
            feats.push_back(item);
        }
        u["features"] = feats;
        u["unscanned"] = audit.target_uni->unscanned;
        j["target_univariate"] = u;
    } else {
        j["target_univariate"] = nullptr;
    }

    if (audit.target_multi) {
        json m;
        m["available"] = audit.target_multi->available;
        m["reason"] = audit.target_multi->reason;
        m["observed_auc"] = dnum(audit.target_multi->observed_auc);
        m["p_value"] = dnum(audit.target_multi->p_value);
        m["n_pc"] = audit.target_multi->n_pc;
        m["B"] = audit.target_multi->B;
        j["target_multivariate"] = m;
    } else {
        j["target_multivariate"] = nullptr;
    }

    if (audit.duplicates) {
        json d;
        d["threshold"] = audit.duplicates->threshold;
        d["n_pairs"] = audit.duplicates->n_pairs;
        d["n_cross_fold"] = audit.duplicates->n_cross_fold;
        json pairs = json::array();
        for (const auto& pr : audit.duplicates->pairs) {
            json item;
            item["row_a"] = pr.row_a;
            item["row_b"] = pr.row_b;
            item["similarity"] = dnum(pr.similarity);
            item["cross_fold"] = pr.cross_fold;
            pairs.push_back(item);
        }
        d["pairs"] = pairs;
        d["zero_spread_rows"] = audit.duplicates->zero_spread_rows;
        d["notes"] = audit.duplicates->notes;
        j["duplicates"] = d;
    } else {
        j["duplicates"] = nullptr;
    }

    json mech = json::array();
    for (const auto& m : audit.mechanisms) {
        json item;
        item["mechanism"] = m.mechanism;
        item["flagged"] = m.flagged;
        item["evidence"] = m.evidence;
        mech.push_back(item);
    }
    j["mechanisms"] = mech;
    return j;
}

json dlsi_to_json(const DeltaLsiResult& res) {
    json j;
    j["schema_version"] = kSchemaVersion;
    j["tool_version"] = kToolVersion;
    j["kind"] = "dlsi";
    j["metric"] = metric_name(res.metric);
    j["delta_metric"] = dnum(res.delta_metric);
    j["delta_lsi"] = dnum(res.delta_lsi);
    auto ci_json = [](const BcaInterval& ci) {
        json c;
        c["available"] = ci.available;
        c["lo"] = dnum(ci.lo);
        c["hi"] = dnum(ci.hi);
        c["reason"] = ci.reason;
        return c;
    };
    j["ci_metric"] = ci_json(res.ci_metric);
    j["ci_lsi"] = ci_json(res.ci_lsi);
    if (res.has_p) {
        json sf;
        sf["t_observed"] = dnum(res.sign_flip.t_observed);
        sf["p_value"] = dnum(res.sign_flip.p_value);
        sf["method"] = res.sign_flip.method;
        sf["m_flip"] = res.sign_flip.m_flip;
        j["sign_flip"] = sf;
        j["p_signflip"] = dnum(res.sign_flip.p_value);
    } else {
        j["sign_flip"] = nullptr;
        j["p_signflip"] = nullptr;
    }
    j["tier"] = tier_name(res.tier);
    j["inference_ok"] = res.inference_ok;
    j["r_eff"] = res.r_eff;
    j["paired"] = res.paired;
    j["leaky_pooled"] = dnum(res.leaky_pooled);
    j["guarded_pooled"] = dnum(res.guarded_pooled);
    j["exchangeability"] = {{"requested", exchangeability_name(res.requested_exchangeability)},
                            {"effective", res.effective_exchangeability}};
    json deltas = json::array();
    for (double d : res.delta_vector.deltas) deltas.push_back(dnum(d));
    j["deltas"] = deltas;
    j["repeat_ids"] = res.delta_vector.repeat_ids;
    json lv = json::array(), gv = json::array();
    for (double v : res.delta_vector.leaky_values) lv.push_back(dnum(v));
    for (double v : res.delta_vector.guarded_values) gv.push_back(dnum(v));
    j["leaky_values"] = lv;
    j["guarded_values"] = gv;
    j["notes"] = res.notes;
    return j;
}

json sim_grid_to_json(const SimGrid& grid) {
    json j;
    j["schema_version"] = kSchemaVersion;
    j["tool_version"] = kToolVersion;
    j["kind"] = "sim_grid";
    json cells = json::array();
    for (const auto& c : grid.cells) {
        json item;
        item["mechanism"] = mechanism_name(c.mechanism);
        item["split_mode"] = c.split_mode;
        item["n"] = c.n;
        item["p"] = c.p;
        item["s"] = c.s;
        item["seeds"] = c.seeds;
        item["completed"] = c.completed;
        item["rejections"] = c.rejections;
        item["rejection_rate"] = dnum(c.rejection_rate);
        item["wilson_lo"] = dnum(c.wilson.lower);
        item["wilson_hi"] = dnum(c.wilson.upper);
        item["mean_auc"] = dnum(c.mean_observed);
        item["mean_gap"] = dnum(c.mean_gap);
        item["failures"] = c.failures;
        cells.push_back(item);
    }
    j["cells"] = cells;
    json tasks = json::array();
    for (const auto& t : grid.tasks) {
        json item;
        item["mechanism"] = mechanism_name(t.config.mechanism);
        item["split_mode"] = t.split_mode;
        item["n"] = t.config.n;
        item["p"] = t.config.p;
        item["s"] = t.config.s;
        item["seed"] = t.config.seed;
        item["ok"] = t.ok;
        item["message"] = t.message;
        item["observed"] = dnum(t.observed);
        item["perm_mean"] = dnum(t.perm_mean);
        item["gap"] = dnum(t.gap);
        item["p_value"] = dnum(t.p_value);
        item["reject"] = t.reject;
        tasks.push_back(item);
    }
    j["tasks"] = tasks;
    return j;
}

void stamp_bundle(json& bundle) {
    std::time_t now = std::time(nullptr);
    char buf[32];
    std::tm tm{};
    gmtime_r(&now, &tm);
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
    bundle["generated_at"] = buf;
}

namespace {

std::string escape_html(const std::string& s) {
    std::string out;
    out.reserve(s.size());
    for (char c : s) {
        switch (c) {
            case '&': out += "&amp;"; break;
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            case '"': out += "&quot;"; break;
            case '\'': out += "&#39;"; break;
            default: out += c;
        }
    }
    return out;
}

// 4 significant decimals for display; JSON keeps full precision
std::string fmt4(const json& v) {
    if (v.is_null()) return "n/a";
    if (v.is_boolean()) return v.get<bool>() ? "TRUE" : "FALSE";
    if (v.is_string()) return escape_html(v.get<std::string>());
    if (v.is_number_integer()) return std::to_string(v.get<long long>());
    if (v.is_number_unsigned()) return std::to_string(v.get<unsigned long long>());
    if (v.is_number_float()) {
        double d = v.get<double>();
        if (!std::isfinite(d)) return "n/a";
        char buf[64];
        std::snprintf(buf, sizeof(buf), "%.4g", d);
        return buf;
    }
    return escape_html(v.dump());
}

struct Html {
    std::ostringstream out;

    void kv_table(const std::vector<std::pair<std::string, std::string>>& rows) {
        out << "<table class=\"kv\">\n";
        for (const auto& [k, v] : rows)
            out << "<tr><th>" << escape_html(k) << "</th><td>" << v << "</td></tr>\n";
        out << "</table>\n";
    }

    void table_head(const std::vector<std::string>& cols) {
        out << "<table>\n<tr>";
        for (const auto& c : cols) out << "<th>" << escape_html(c) << "</th>";
        out << "</tr>\n";
    }

    void row(const std::vector<std::string>& cells) {
        out << "<tr>";
        for (const auto& c : cells) out << "<td>" << c << "</td>";
        out << "</tr>\n";
    }

    void table_end() { out << "</table>\n"; }

    void h2(const std::string& title) { out << "<h2>" << escape_html(title) << "</h2>\n"; }
    void para(const std::string& text) { out << "<p>" << text << "</p>\n"; }

    void notes(const json& list) {
        if (!list.is_array() || list.empty()) return;
        out << "<ul class=\"notes\">\n";
        for (const auto& n : list) out << "<li>" << fmt4(n) << "</li>\n";
        out << "</ul>\n";
    }
};

void render_audit(Html& h, const json& j) {
    h.out << "<h1>Leakage Audit</h1>\n";
    h.kv_table({{"Plan hash", fmt4(j.value("plan_hash", json("")))},
                {"Learner", fmt4(j.value("learner", json("")))},
                {"Metric", fmt4(j["config"].value("metric", json("")))},
                {"Tool version", fmt4(j.value("tool_version", json("")))}});

    const json& p = j["permutation"];
    h.h2("Permutation Test");
    h.kv_table({{"Observed", fmt4(p["observed"])},
                {"Permutation null mean", fmt4(p["perm_mean"])},
                {"Permutation null sd", fmt4(p["perm_sd"])},
                {"Gap", fmt4(p["gap"]) + " (larger gap = stronger non-random signal)"},
                {"p-value", fmt4(p["p_value"])},
                {"Method", fmt4(p["method"])},
                {"Draws", fmt4(p["B_used"]) + " of " + fmt4(p["B"])},
                {"Stratified", fmt4(p["stratified"])}});
    h.notes(p.value("notes", json::array()));

    h.h2("Fold Association");
    const json& assoc = j["association"];
    if (!assoc.is_array() || assoc.empty()) {
        h.para("No grouping metadata to test.");
    } else {
        h.table_head({"Column", "Repeat", "Chi^2", "df", "p", "Cramer's V", "Note"});
        for (const auto& cell : assoc) {
            if (cell.value("valid", false)) {
                h.row({fmt4(cell["column"]), fmt4(cell["repeat"]), fmt4(cell["chi2"]),
                       fmt4(cell["df"]), fmt4(cell["p_value"]), fmt4(cell["cramers_v"]),
                       fmt4(cell["note"])});
            } else {
                h.row({fmt4(cell["column"]), fmt4(cell["repeat"]), "n/a", "n/a", "n/a", "n/a",
                       fmt4(cell["note"])});
            }
        }
        h.table_end();
    }

    h.h2("Univariate Target Scan");
    const json& uni = j["target_univariate"];
    if (uni.is_null()) {
        h.para("Not run.");
    } else {
        char line[128];
        std::snprintf(line, sizeof(line), "Flagged (score &gt;= %s): %d",
                      fmt4(uni["threshold"]).c_str(), uni.value("n_flagged", 0));
        h.para(line);
        std::vector<const json*> feats;
        for (const auto& f : uni["features"]) feats.push_back(&f);
        std::sort(feats.begin(), feats.end(), [](const json* a, const json* b) {
            double sa = a->value("score", 0.0), sb = b->value("score", 0.0);
            if (sa != sb) return sa > sb;
            return a->value("name", "") < b->value("name", "");
        });
        h.table_head({"Feature", "Score", "Flagged", "Note"});
        std::size_t shown = 0;
        for (const json* f : feats) {
            if (shown++ >= 50) break;
            h.row({fmt4((*f)["name"]), fmt4((*f)["score"]), fmt4((*f)["flagged"]),
                   fmt4((*f)["note"])});
        }
        h.table_end();
        if (feats.size() > 50)
            h.para("Showing the 50 highest-scoring of " + std::to_string(feats.size()) +
                   " features.");
        if (uni.contains("unscanned") && !uni["unscanned"].empty())
            h.para("Categorical features not scanned: " + std::to_string(uni["unscanned"].size()) + ".");
    }

    h.h2("Multivariate Target Scan");
    const json& multi = j["target_multivariate"];
    if (multi.is_null()) {
        h.para("Not run.");
    } else if (!multi.value("available", false)) {
        h.para("Multivariate Target Scan: not available (" + fmt4(multi["reason"]) + ").");
    } else {
        h.kv_table({{"Cross-validated AUC", fmt4(multi["observed_auc"])},
                    {"Principal components", fmt4(multi["n_pc"])},
                    {"Permutations", fmt4(multi["B"])},
                    {"p-value", fmt4(multi["p_value"])}});
    }

    h.h2("Near-Duplicate Scan");
    const json& dup = j["duplicates"];
    if (dup.is_null()) {
        h.para("Not run.");
    } else if (dup["pairs"].empty()) {
        h.para("No near-duplicates detected.");
    } else {
        h.para("Pairs at or above threshold " + fmt4(dup["threshold"]) + ": " +
               fmt4(dup["n_pairs"]) + " (" + fmt4(dup["n_cross_fold"]) + " cross-fold).");
        h.table_head({"Row A", "Row B", "Similarity", "Cross-fold"});
        std::size_t shown = 0;
        for (const auto& pr : dup["pairs"]) {
            if (shown++ >= 100) break;
            h.row({fmt4(pr["row_a"]), fmt4(pr["row_b"]), fmt4(pr["similarity"]),
                   fmt4(pr["cross_fold"])});
        }
        h.table_end();
    }
    if (!dup.is_null()) h.notes(dup.value("notes", json::array()));

    h.h2("Mechanism Risk Assessment");
    h.table_head({"Mechanism", "Flagged", "Evidence"});
    for (const auto& m : j["mechanisms"])
        h.row({fmt4(m["mechanism"]), fmt4(m["flagged"]), fmt4(m["evidence"])});
    h.table_end();

    h.h2("Settings");
    const json& cfg = j["config"];
    std::vector<std::pair<std::string, std::string>> rows;
    for (const auto& [key, value] : cfg.items()) {
        if (value.is_array()) {
            std::string joined;
            for (const auto& v : value) {
                if (!joined.empty()) joined += ", ";
                joined += fmt4(v);
            }
            rows.emplace_back(key, joined.empty() ? "(default)" : joined);
        } else {
            rows.emplace_back(key, fmt4(value));
        }
    }
    h.kv_table(rows);
}

void render_dlsi(Html& h, const json& j) {
    h.out << "<h1>Delta-LSI Report</h1>\n";
    std::string tier = j.value("tier", "");
    if (tier == "D_insufficient")
        h.para("<strong>Inference suppressed (unpaired/insufficient repeats); point estimates "
               "only.</strong>");
    auto ci_text = [&](const json& ci) -> std::string {
        if (!ci.value("available", false)) return "absent (" + fmt4(ci["reason"]) + ")";
        return "[" + fmt4(ci["lo"]) + ", " + fmt4(ci["hi"]) + "]";
    };
    h.kv_table({{"Metric", fmt4(j["metric"])},
                {"Leaky pooled mean", fmt4(j["leaky_pooled"])},
                {"Guarded pooled mean", fmt4(j["guarded_pooled"])},
                {"delta_metric (mean)", fmt4(j["delta_metric"])},
                {"delta_lsi (Huber)", fmt4(j["delta_lsi"])},
                {"95% BCa CI (mean)", ci_text(j["ci_metric"])},
                {"95% BCa CI (Huber)", ci_text(j["ci_lsi"])},
                {"Sign-flip p", fmt4(j["p_signflip"])},
                {"Inference tier", fmt4(j["tier"])},
                {"Inference ok", fmt4(j["inference_ok"])},
                {"Paired repeats (R_eff)", fmt4(j["r_eff"])},
                {"Exchangeability",
                 fmt4(j["exchangeability"]["requested"]) + " (effective " +
                     fmt4(j["exchangeability"]["effective"]) + ")"}});
    if (!j["sign_flip"].is_null()) {
        h.h2("Sign-Flip Test");
        h.kv_table({{"T observed", fmt4(j["sign_flip"]["t_observed"])},
                    {"p-value", fmt4(j["sign_flip"]["p_value"])},
                    {"Method", fmt4(j["sign_flip"]["method"])},
                    {"Assignments", fmt4(j["sign_flip"]["m_flip"])}});
    }
    if (j.contains("deltas") && !j["deltas"].empty()) {
        h.h2("Repeat-Level Deltas");
        h.table_head({"Repeat", "Leaky", "Guarded", "Delta"});
        const json& d = j["deltas"];
        for (std::size_t i = 0; i < d.size(); ++i) {
            h.row({fmt4(j["repeat_ids"][i]), fmt4(j["leaky_values"][i]),
                   fmt4(j["guarded_values"][i]), fmt4(d[i])});
        }
        h.table_end();
    }
    h.notes(j.value("notes", json::array()));
}

void render_fit(Html& h, const json& j) {
    h.out << "<h1>Resampled Fit</h1>\n";
    h.kv_table({{"Task", fmt4(j["task"])},
                {"Outcome", fmt4(j["outcome"])},
                {"Learner", fmt4(j["learner"]["label"])},
                {"Preprocess", fmt4(j["preprocess"]["label"])},
                {"Plan hash", fmt4(j["plan"]["hash"])},
                {"Rows", fmt4(j["n_rows"])},
                {"Seed", fmt4(j["seed"])}});
    h.h2("Aggregate Metrics");
    h.table_head({"Metric", "Mean", "SD", "95% CI", "Folds"});
    for (const auto& a : j["aggregates"])
        h.row({fmt4(a["metric"]), fmt4(a["mean"]), fmt4(a["sd"]),
               "[" + fmt4(a["ci_lo"]) + ", " + fmt4(a["ci_hi"]) + "]", fmt4(a["folds_used"])});
    h.table_end();
    h.h2("Folds");
    h.table_head({"Repeat", "Fold", "Status", "n_test", "Values", "Lambda"});
    for (const auto& f : j["folds"]) {
        std::string values;
        for (const auto& m : f["metrics"]) {
            if (!values.empty()) values += "; ";
            values += fmt4(m["metric"]) + "=" + fmt4(m["value"]);
        }
        h.row({fmt4(f["repeat"]), fmt4(f["fold"]), fmt4(f["status"]),
               std::to_string(f["test_rows"].size()), values, fmt4(f["lambda"])});
    }
    h.table_end();
}

void render_plan(Html& h, const json& j) {
    h.out << "<h1>Split Plan</h1>\n";
    h.kv_table({{"Mode", fmt4(j["mode"])},
                {"Folds (v)", fmt4(j["v"])},
                {"Repeats", fmt4(j["repeats"])},
                {"Stratified", fmt4(j["stratified"])},
                {"Nested", fmt4(j["nested"])},
                {"Seed", fmt4(j["seed"])},
                {"Rows", fmt4(j["n_rows"])},
                {"Group column", fmt4(j["group_col"])},
                {"Hash", fmt4(j["hash"])}});
    h.h2("Folds");
    h.table_head({"Repeat", "Fold", "n_train", "n_test"});
    const auto& fold_of = j["fold_of"];
    int n_rows = j["n_rows"].get<int>();
    for (std::size_t rep = 0; rep < fold_of.size(); ++rep) {
        std::map<int, int> test_counts;
        int assigned = 0;
        for (const auto& f : fold_of[rep]) {
            int id = f.get<int>();
            if (id > 0) {
                ++test_counts[id];
                ++assigned;
            }
        }
        bool time_mode = j.value("mode", "") == "time_series";
        for (const auto& [fold_id, n_test] : test_counts) {
            int n_train = time_mode ? -1 : n_rows - n_test;
            h.row({std::to_string(rep + 1), std::to_string(fold_id),
                   n_train < 0 ? std::string("(forward chain)") : std::to_string(n_train),
                   std::to_string(n_test)});
        }
        (void)assigned;
    }
    h.table_end();
}

void render_tune(Html& h, const json& j) {
    h.out << "<h1>Nested Tuning</h1>\n";
    h.kv_table({{"Tuning metric", fmt4(j["tuning_metric"])},
                {"Selection", fmt4(j["selection"])},
                {"Final lambda", fmt4(j["final_lambda"])},
                {"Refitted", fmt4(j["refitted"])}});
    h.h2("Per-Fold Selection");
    h.table_head({"Repeat", "Fold", "Best lambda", "Chosen lambda"});
    for (const auto& r : j["fold_reports"])
        h.row({fmt4(r["repeat"]), fmt4(r["fold"]), fmt4(r["best_lambda"]),
               fmt4(r["chosen_lambda"])});
    h.table_end();
    h.h2("Outer Evaluation");
    h.table_head({"Metric", "Mean", "SD", "95% CI", "Folds"});
    for (const auto& a : j["outer"]["aggregates"])
        h.row({fmt4(a["metric"]), fmt4(a["mean"]), fmt4(a["sd"]),
               "[" + fmt4(a["ci_lo"]) + ", " + fmt4(a["ci_hi"]) + "]", fmt4(a["folds_used"])});
    h.table_end();
}

void render_sim_grid(Html& h, const json& j) {
    h.out << "<h1>Simulation Grid</h1>\n";
    h.table_head({"Mechanism", "Split mode", "n", "p", "s", "Seeds", "Rejection rate",
                  "Wilson 95%", "Mean AUC", "Mean gap"});
    for (const auto& c : j["cells"])
        h.row({fmt4(c["mechanism"]), fmt4(c["split_mode"]), fmt4(c["n"]), fmt4(c["p"]),
               fmt4(c["s"]), fmt4(c["completed"]), fmt4(c["rejection_rate"]),
               "[" + fmt4(c["wilson_lo"]) + ", " + fmt4(c["wilson_hi"]) + "]",
               fmt4(c["mean_auc"]), fmt4(c["mean_gap"])});
    h.table_end();
}

}  // namespace

std::string render_html(const json& bundle) {
    const std::string kind = bundle.value("kind", "");
    Html h;
    h.out << "<!doctype html>\n<html lang=\"en\">\n<head>\n<meta charset=\"utf-8\">\n"
          << "<title>leakguard report</title>\n<style>\n"
          << "body{font-family:Georgia,serif;margin:2rem auto;max-width:60rem;color:#1a1a1a;}\n"
          << "h1{border-bottom:2px solid #444;padding-bottom:.3rem;}\n"
          << "h2{margin-top:1.6rem;color:#333;}\n"
          << "table{border-collapse:collapse;margin:.6rem 0;}\n"
          << "th,td{border:1px solid #bbb;padding:.25rem .6rem;text-align:left;"
          << "font-family:\"DejaVu Sans Mono\",monospace;font-size:.85rem;}\n"
          << "table.kv th{background:#f2f2f2;width:16rem;}\n"
          << "tr:nth-child(even) td{background:#fafafa;}\n"
          << "ul.notes li{font-size:.85rem;color:#555;}\n"
          << "</style>\n</head>\n<body>\n";
    if (kind == "audit")
        render_audit(h, bundle);
    else if (kind == "dlsi")
        render_dlsi(h, bundle);
    else if (kind == "fit")
        render_fit(h, bundle);
    else if (kind == "plan")
        render_plan(h, bundle);
    else if (kind == "tune")
        render_tune(h, bundle);
    else if (kind == "sim_grid")
        render_sim_grid(h, bundle);
    else
        throw std::invalid_argument("cannot render bundle of kind '" + kind + "'");
    h.out << "</body>\n</html>\n";
    return h.out.str();
}

json load_json_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path);
    return json::parse(in);
}

void write_json_file(const std::string& path, const json& j) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << j.dump(2) << "\n";
}

void write_text_file(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << text;
}

}  // namespace leakguard
