#include <CLI11.hpp>

#include <cstdio>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "leakguard/audit.hpp"
#include "leakguard/dataset.hpp"
#include "leakguard/delta_lsi.hpp"
#include "leakguard/report.hpp"
#include "leakguard/resample.hpp"
#include "leakguard/sim.hpp"
#include "leakguard/split.hpp"

using namespace leakguard;
using nlohmann::json;

namespace {

std::vector<std::string> split_list(const std::string& text) {
    std::vector<std::string> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        std::size_t a = item.find_first_not_of(" \t");
        std::size_t b = item.find_last_not_of(" \t");
        if (a != std::string::npos) out.push_back(item.substr(a, b - a + 1));
    }
    return out;
}

struct RoleFlags {
    std::string outcome, positive, subject, batch, study, time, predictors;

    void attach(CLI::App* cmd) {
        cmd->add_option("--outcome", outcome, "Outcome column")->required();
        cmd->add_option("--positive", positive, "Positive class label (binary outcomes)");
        cmd->add_option("--subject", subject, "Subject id column");
        cmd->add_option("--batch", batch, "Batch column");
        cmd->add_option("--study", study, "Study column");
        cmd->add_option("--time", time, "Time column");
        cmd->add_option("--predictors", predictors,
                        "Comma-separated predictor columns (default: all unassigned columns)");
    }

    RoleMap to_roles() const {
        RoleMap r;
        r.outcome = outcome;
        if (!positive.empty()) r.positive_class = positive;
        if (!subject.empty()) r.subject = subject;
        if (!batch.empty()) r.batch = batch;
        if (!study.empty()) r.study = study;
        if (!time.empty()) r.time = time;
        if (!predictors.empty()) r.predictors = split_list(predictors);
        return r;
    }
};

struct SplitFlags {
    std::string mode = "subject_grouped";
    std::string combine;
    int v = 5;
    int repeats = 1;
    bool stratify = false;
    bool nested = false;
    int inner_v = 3;
    int horizon = 0;
    int purge = 0;
    int embargo = 0;

    void attach(CLI::App* cmd) {
        cmd->add_option("--mode", mode,
                        "subject_grouped | batch_blocked | study_loocv | time_series | combined");
        cmd->add_option("--combine", combine, "Constituent modes for combined splits");
        cmd->add_option("--v", v, "Fold count");
        cmd->add_option("--repeats", repeats, "Repeat count");
        cmd->add_flag("--stratify", stratify, "Stratify folds by outcome prevalence");
        cmd->add_flag("--nested", nested, "Attach inner folds for tuning");
        cmd->add_option("--inner-v", inner_v, "Inner fold count for nested plans");
        cmd->add_option("--horizon", horizon, "Forecast horizon in rows (time_series)");
        cmd->add_option("--purge", purge, "Extra purged rows before each test block");
        cmd->add_option("--embargo", embargo, "Embargoed rows after each test block");
    }

    SplitPlan build(const Dataset& ds, std::uint64_t seed) const {
        SplitOptions opts;
        opts.v = v;
        opts.repeats = repeats;
        opts.stratify = stratify;
        opts.nested = nested;
        opts.inner_v = inner_v;
        opts.seed = seed;
        opts.time.horizon = horizon;
        opts.time.purge = purge;
        opts.time.embargo = embargo;
        for (const auto& m : split_list(combine)) opts.combine.push_back(split_mode_from_name(m));
        return make_split_plan(ds, split_mode_from_name(mode), opts);
    }
};

void emit(json bundle, const std::string& out_json, const std::string& out_html) {
    if (!out_html.empty()) write_text_file(out_html, render_html(bundle));
    if (!out_json.empty()) {
        stamp_bundle(bundle);
        write_json_file(out_json, bundle);
    }
}

std::vector<MetricKind> parse_metrics(const std::string& text, TaskKind task) {
    std::vector<MetricKind> out;
    for (const auto& m : split_list(text)) out.push_back(metric_from_name(m));
    if (out.empty())
        out.push_back(task == TaskKind::binary_classification ? MetricKind::auc : MetricKind::rmse);
    return out;
}

SplitPlan load_plan_for(const std::string& path, const Dataset& ds) {
    json j = load_json_file(path);
    if (j.value("kind", "") != "plan")
        throw std::invalid_argument(path + " is not a split plan bundle");
    SplitPlan plan = plan_from_json(j);
    if (plan.n_rows != static_cast<int>(ds.n_rows()))
        throw std::invalid_argument("plan " + plan.hash + " was built for " +
                                    std::to_string(plan.n_rows) + " rows but the dataset has " +
                                    std::to_string(ds.n_rows()));
    return plan;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"leakguard: leakage-aware evaluation for predictive models"};
    app.require_subcommand(1);
    app.fallthrough();
    bool quiet = false;
    app.add_flag("--quiet", quiet, "Suppress progress output");

    // ---- split ----
    auto* c_split = app.add_subcommand("split", "Build a leakage-aware resampling plan");
    std::string sp_data, sp_out, sp_html;
    std::uint64_t sp_seed = 1;
    RoleFlags sp_roles;
    SplitFlags sp_flags;
    c_split->add_option("--data", sp_data, "Input CSV")->required();
    sp_roles.attach(c_split);
    sp_flags.attach(c_split);
    c_split->add_option("--seed", sp_seed, "RNG seed");
    c_split->add_option("--out", sp_out, "Plan JSON path")->required();
    c_split->add_option("--html", sp_html, "Plan HTML path");
    c_split->callback([&] {
        Dataset ds = load_csv(sp_data, sp_roles.to_roles());
        SplitPlan plan = sp_flags.build(ds, sp_seed);
        OverlapReport rep = overlap_check(plan, ds);
        if (!rep.clean())
            throw std::runtime_error("generated plan failed its own hygiene check");
        emit(plan_to_json(plan), sp_out, sp_html);
        if (!quiet)
            std::cout << "plan " << plan.hash << ": " << split_mode_name(plan.mode) << ", v="
                      << plan.v << ", repeats=" << plan.repeats << ", rows=" << plan.n_rows
                      << "\n";
    });

    // ---- fit ----
    auto* c_fit = app.add_subcommand("fit", "Resample a guarded pipeline over a plan");
    std::string ft_data, ft_plan, ft_out, ft_html;
    std::string ft_learner = "glmnet:alpha=0.9";
    std::string ft_preproc = "impute=median,normalize=zscore";
    std::string ft_metrics;
    std::uint64_t ft_seed = 1;
    bool ft_no_refit_data = false;
    RoleFlags ft_roles;
    SplitFlags ft_flags;
    c_fit->add_option("--data", ft_data, "Input CSV")->required();
    ft_roles.attach(c_fit);
    c_fit->add_option("--plan", ft_plan, "Plan JSON (otherwise built from the split flags)");
    ft_flags.attach(c_fit);
    c_fit->add_option("--learner", ft_learner, "Learner spec, e.g. glmnet:alpha=0.9,cv_folds=5");
    c_fit->add_option("--preprocess", ft_preproc,
                      "Guarded preprocessing spec, e.g. impute=median,normalize=zscore");
    c_fit->add_option("--metrics", ft_metrics, "Comma-separated metrics (default auc or rmse)");
    c_fit->add_option("--seed", ft_seed, "RNG seed");
    c_fit->add_flag("--no-refit-data", ft_no_refit_data,
                    "Do not keep the refit payload used by refit-mode audits");
    c_fit->add_option("--out", ft_out, "Fit JSON path")->required();
    c_fit->add_option("--html", ft_html, "Fit HTML path");
    c_fit->callback([&] {
        Dataset ds = load_csv(ft_data, ft_roles.to_roles());
        SplitPlan plan = ft_plan.empty() ? ft_flags.build(ds, ft_seed) : load_plan_for(ft_plan, ds);
        LearnerSpec learner = LearnerSpec::parse(ft_learner);
        PreprocSpec preproc = PreprocSpec::parse(ft_preproc);
        FitResult fit = fit_resample(ds, plan, learner, preproc, parse_metrics(ft_metrics, ds.task()),
                                     ft_seed, !ft_no_refit_data);
        fit.data_ref = ft_data;
        if (fit.data_hash.empty()) fit.data_hash = ds.content_hash();
        emit(fit_to_json(fit), ft_out, ft_html);
        if (!quiet) {
            for (const auto& a : fit.aggregates)
                std::cout << metric_name(a.metric) << " = " << a.mean << " (sd " << a.sd << ", "
                          << a.folds_used << " folds)\n";
        }
    });

    // ---- tune ----
    auto* c_tune = app.add_subcommand("tune", "Nested lambda tuning for the elastic net");
    std::string tn_data, tn_plan, tn_out, tn_html;
    std::string tn_learner = "glmnet:alpha=0.9";
    std::string tn_preproc = "impute=median,normalize=zscore";
    std::string tn_metrics, tn_grid, tn_selection = "one_std_err";
    std::string tn_tune_metric = "auc";
    int tn_grid_size = 5;
    bool tn_no_refit = false;
    std::uint64_t tn_seed = 1;
    RoleFlags tn_roles;
    SplitFlags tn_flags;
    c_tune->add_option("--data", tn_data, "Input CSV")->required();
    tn_roles.attach(c_tune);
    c_tune->add_option("--plan", tn_plan, "Nested plan JSON (otherwise built from split flags)");
    tn_flags.attach(c_tune);
    c_tune->add_option("--learner", tn_learner, "Elastic-net learner spec");
    c_tune->add_option("--preprocess", tn_preproc, "Guarded preprocessing spec");
    c_tune->add_option("--metrics", tn_metrics, "Outer evaluation metrics");
    c_tune->add_option("--tune-metric", tn_tune_metric, "Inner selection metric");
    c_tune->add_option("--grid-size", tn_grid_size, "Lambda grid size");
    c_tune->add_option("--grid", tn_grid, "Explicit comma-separated lambda grid");
    c_tune->add_option("--selection", tn_selection, "best | one_std_err");
    c_tune->add_flag("--no-refit", tn_no_refit, "Skip the final whole-data refit");
    c_tune->add_option("--seed", tn_seed, "RNG seed");
    c_tune->add_option("--out", tn_out, "Tune JSON path")->required();
    c_tune->add_option("--html", tn_html, "Tune HTML path");
    c_tune->callback([&] {
        Dataset ds = load_csv(tn_data, tn_roles.to_roles());
        tn_flags.nested = true;
        SplitPlan plan = tn_plan.empty() ? tn_flags.build(ds, tn_seed) : load_plan_for(tn_plan, ds);
        TuneOptions opts;
        opts.grid_size = tn_grid_size;
        for (const auto& g : split_list(tn_grid)) opts.explicit_grid.push_back(std::stod(g));
        if (tn_selection == "best")
            opts.selection = TuneSelection::best;
        else if (tn_selection == "one_std_err")
            opts.selection = TuneSelection::one_std_err;
        else
            throw std::invalid_argument("unknown selection rule: " + tn_selection);
        opts.refit = !tn_no_refit;
        std::vector<MetricKind> metrics = parse_metrics(tn_metrics, ds.task());
        MetricKind tune_metric = metric_from_name(tn_tune_metric);
        bool have = false;
        for (MetricKind m : metrics) have = have || m == tune_metric;
        if (!have) metrics.push_back(tune_metric);
        TuneResult tune = tune_resample(ds, plan, LearnerSpec::parse(tn_learner),
                                        PreprocSpec::parse(tn_preproc), metrics, opts, tn_seed);
        tune.outer.data_ref = tn_data;
        if (tune.outer.data_hash.empty()) tune.outer.data_hash = ds.content_hash();
        emit(tune_to_json(tune), tn_out, tn_html);
        if (!quiet)
            std::cout << "final lambda " << tune.final_lambda << " ("
                      << tune.fold_reports.size() << " outer folds)\n";
    });

    // ---- audit ----
    auto* c_audit = app.add_subcommand("audit", "Leakage audit for a finished fit");
    std::string au_fit, au_data, au_out, au_html;
    std::string au_metric = "auc", au_perm = "auto", au_xref, au_assoc;
    int au_B = 200, au_pc = -1, au_inner = 5, au_mB = 200;
    double au_target = 0.9, au_dup = 0.995, au_alpha = 0.01;
    bool au_strat = false, au_draws = false;
    bool au_skip_uni = false, au_skip_multi = false, au_skip_dup = false;
    std::uint64_t au_seed = 1;
    RoleFlags au_roles;
    c_audit->add_option("--fit", au_fit, "Fit JSON")->required();
    c_audit->add_option("--data", au_data, "Input CSV the fit was built on")->required();
    au_roles.attach(c_audit);
    c_audit->add_option("--metric", au_metric, "Metric to permute");
    c_audit->add_option("--B", au_B, "Permutation draws");
    c_audit->add_option("--perm-mode", au_perm, "auto | fixed | refit");
    c_audit->add_flag("--stratify-perm", au_strat, "Permute labels within plan groups of equal size");
    c_audit->add_flag("--keep-draws", au_draws, "Store the permutation draws in the bundle");
    c_audit->add_option("--x-ref", au_xref, "Columns for the target and duplicate scans");
    c_audit->add_option("--assoc-columns", au_assoc, "Columns for the fold-association test");
    c_audit->add_option("--target-threshold", au_target, "Univariate flag threshold");
    c_audit->add_option("--dup-threshold", au_dup, "Near-duplicate cosine threshold");
    c_audit->add_flag("--skip-univariate", au_skip_uni, "Skip the univariate target scan");
    c_audit->add_flag("--skip-multivariate", au_skip_multi, "Skip the multivariate target scan");
    c_audit->add_flag("--skip-duplicates", au_skip_dup, "Skip the near-duplicate scan");
    c_audit->add_option("--multivar-pc", au_pc, "Principal components (default min(10, p, n/10))");
    c_audit->add_option("--multivar-folds", au_inner, "Inner folds for the multivariate scan");
    c_audit->add_option("--multivar-B", au_mB, "Permutations for the multivariate scan");
    c_audit->add_option("--mechanism-alpha", au_alpha, "Association alpha for the risk rollup");
    c_audit->add_option("--seed", au_seed, "RNG seed");
    c_audit->add_option("--out", au_out, "Audit JSON path")->required();
    c_audit->add_option("--html", au_html, "Audit HTML path");
    c_audit->callback([&] {
        Dataset ds = load_csv(au_data, au_roles.to_roles());
        json fj = load_json_file(au_fit);
        FitResult fit = fit_from_json(fj);
        AuditConfig cfg;
        cfg.metric = metric_from_name(au_metric);
        cfg.B = au_B;
        if (au_perm == "auto")
            cfg.perm_refit = PermRefit::automatic;
        else
            cfg.perm_refit = perm_refit_from_name(au_perm);
        cfg.perm_stratify = au_strat;
        cfg.return_perm_draws = au_draws;
        cfg.x_ref = split_list(au_xref);
        cfg.assoc_columns = split_list(au_assoc);
        cfg.target_threshold = au_target;
        cfg.duplicate_threshold = au_dup;
        cfg.run_univariate = !au_skip_uni;
        cfg.run_multivariate = !au_skip_multi;
        cfg.run_duplicates = !au_skip_dup;
        cfg.multivar_n_pc = au_pc;
        cfg.multivar_inner_folds = au_inner;
        cfg.multivar_B = au_mB;
        cfg.mechanism_alpha = au_alpha;
        cfg.seed = au_seed;
        AuditResult audit = audit_leakage(fit, ds, cfg);
        emit(audit_to_json(audit), au_out, au_html);
        if (!quiet) {
            std::cout << "gap " << audit.perm.gap << ", p " << audit.perm.p_value << " ("
                      << audit.perm.method << ")\n";
            for (const auto& m : audit.mechanisms)
                std::cout << (m.flagged ? "FLAG " : "ok   ") << m.mechanism << "\n";
        }
    });

    // ---- dlsi ----
    auto* c_dlsi = app.add_subcommand("dlsi", "Inflation between a leaky and a guarded fit");
    std::string dl_leaky, dl_guarded, dl_metric = "auc", dl_exch = "iid", dl_out, dl_html;
    int dl_boot = 2000, dl_flip = 10000, dl_block = -1;
    std::uint64_t dl_seed = 1;
    c_dlsi->add_option("--leaky", dl_leaky, "Fit JSON for the leaky arm")->required();
    c_dlsi->add_option("--guarded", dl_guarded, "Fit JSON for the guarded arm")->required();
    c_dlsi->add_option("--metric", dl_metric, "Metric to compare");
    c_dlsi->add_option("--m-boot", dl_boot, "Bootstrap resamples for the BCa intervals");
    c_dlsi->add_option("--m-flip", dl_flip, "Sign-flip assignments (Monte Carlo cap)");
    c_dlsi->add_option("--exchangeability", dl_exch, "iid | blocked_time | by_group | within_batch");
    c_dlsi->add_option("--block-len", dl_block, "Block length for blocked_time sign flips");
    c_dlsi->add_option("--seed", dl_seed, "RNG seed");
    c_dlsi->add_option("--out", dl_out, "Result JSON path")->required();
    c_dlsi->add_option("--html", dl_html, "Result HTML path");
    c_dlsi->callback([&] {
        json lj = load_json_file(dl_leaky);
        json gj = load_json_file(dl_guarded);
        DeltaLsiOptions opts;
        opts.metric = metric_from_name(dl_metric);
        opts.m_boot = dl_boot;
        opts.m_flip = dl_flip;
        opts.exchangeability = exchangeability_from_name(dl_exch);
        opts.block_len = dl_block;
        opts.seed = dl_seed;
        DeltaLsiResult res = delta_lsi(fit_from_json(lj), fit_from_json(gj), opts);
        emit(dlsi_to_json(res), dl_out, dl_html);
        if (!quiet) {
            std::cout << "delta_metric " << res.delta_metric << ", delta_lsi " << res.delta_lsi
                      << ", tier " << tier_name(res.tier);
            if (res.has_p) std::cout << ", p " << res.sign_flip.p_value;
            std::cout << "\n";
        }
    });

    // ---- simulate ----
    auto* c_sim = app.add_subcommand("simulate", "Rejection-rate grids on synthetic leakage");
    std::string sm_mechs = "none", sm_ns = "250", sm_ps = "10", sm_ss = "0";
    std::string sm_split = "subject_grouped", sm_modes;
    std::string sm_learner = "glmnet:alpha=0.9", sm_preproc = "impute=median,normalize=zscore";
    std::string sm_ckpt, sm_out, sm_csv, sm_html;
    int sm_seeds = 20, sm_B = 200, sm_v = 5;
    double sm_alpha = 0.05;
    bool sm_split_grid = false;
    c_sim->add_option("--mechanisms", sm_mechs,
                      "none | subject_overlap | batch_confounded | peek_norm | lookahead");
    c_sim->add_option("--ns", sm_ns, "Comma-separated sample sizes");
    c_sim->add_option("--ps", sm_ps, "Comma-separated predictor counts");
    c_sim->add_option("--ss", sm_ss, "Comma-separated signal levels");
    c_sim->add_option("--seeds", sm_seeds, "Replicates per cell");
    c_sim->add_option("--alpha", sm_alpha, "Rejection level for the permutation p-value");
    c_sim->add_option("--B", sm_B, "Permutation draws per task");
    c_sim->add_option("--v", sm_v, "Fold count");
    c_sim->add_option("--split-mode", sm_split, "Plan mode for the standard grid");
    c_sim->add_flag("--split-grid", sm_split_grid,
                    "Run the split-mode comparison grid (n=500, p=20, s=0)");
    c_sim->add_option("--modes", sm_modes, "Split modes for the comparison grid");
    c_sim->add_option("--learner", sm_learner, "Learner spec");
    c_sim->add_option("--preprocess", sm_preproc, "Guarded preprocessing spec");
    c_sim->add_option("--checkpoint-dir", sm_ckpt, "Directory for per-task checkpoints");
    c_sim->add_option("--out", sm_out, "Grid JSON path")->required();
    c_sim->add_option("--csv", sm_csv, "Aggregated CSV table path");
    c_sim->add_option("--html", sm_html, "Grid HTML path");
    c_sim->callback([&] {
        SimGridOptions opts;
        opts.alpha = sm_alpha;
        opts.B = sm_B;
        opts.v = sm_v;
        opts.split_mode = split_mode_from_name(sm_split);
        opts.checkpoint_dir = sm_ckpt;
        opts.learner = sm_learner;
        opts.preprocess = sm_preproc;
        std::vector<SimMechanism> mechs;
        for (const auto& m : split_list(sm_mechs)) mechs.push_back(mechanism_from_name(m));
        SimGrid grid;
        if (sm_split_grid) {
            std::vector<SplitMode> modes;
            for (const auto& m : split_list(sm_modes.empty()
                                                ? "subject_grouped,batch_blocked,study_loocv"
                                                : sm_modes))
                modes.push_back(split_mode_from_name(m));
            grid = run_split_mode_grid(modes, mechs, sm_seeds, opts);
        } else {
            std::vector<int> ns, ps;
            std::vector<double> ss;
            for (const auto& x : split_list(sm_ns)) ns.push_back(std::stoi(x));
            for (const auto& x : split_list(sm_ps)) ps.push_back(std::stoi(x));
            for (const auto& x : split_list(sm_ss)) ss.push_back(std::stod(x));
            grid = run_grid(mechs, ns, ps, ss, sm_seeds, opts);
        }
        if (!sm_csv.empty()) write_text_file(sm_csv, grid_table_csv(grid));
        emit(sim_grid_to_json(grid), sm_out, sm_html);
        if (!quiet)
            for (const auto& c : grid.cells)
                std::cout << mechanism_name(c.mechanism) << " " << c.split_mode << " n=" << c.n
                          << " p=" << c.p << " s=" << c.s << ": reject " << c.rejection_rate
                          << " [" << c.wilson.lower << ", " << c.wilson.upper << "]\n";
    });

    // ---- report ----
    auto* c_report = app.add_subcommand("report", "Render a stored JSON bundle as HTML");
    std::string rp_in, rp_html;
    c_report->add_option("--in", rp_in, "Bundle JSON")->required();
    c_report->add_option("--html", rp_html, "HTML output path")->required();
    c_report->callback([&] {
        json bundle = load_json_file(rp_in);
        write_text_file(rp_html, render_html(bundle));
        if (!quiet) std::cout << "rendered " << bundle.value("kind", "?") << " bundle\n";
    });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 2;
    } catch (const nlohmann::json::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
