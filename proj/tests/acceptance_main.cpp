// Acceptance gate: pinned end-to-end behavior for the leakguard toolkit.
// Prints one PASS/FAIL line per criterion and exits nonzero on any failure.

#include <algorithm>
#include <cmath>
#include <cstdarg>
#include <cstdint>
#include <cstdio>
#include <limits>
#include <map>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "leakguard/delta_lsi.hpp"
#include "leakguard/learners.hpp"
#include "leakguard/metrics.hpp"
#include "leakguard/preprocess.hpp"
#include "leakguard/report.hpp"
#include "leakguard/resample.hpp"
#include "leakguard/rng.hpp"
#include "leakguard/sim.hpp"
#include "leakguard/split.hpp"
#include "leakguard/stats.hpp"
#include "util.hpp"

using namespace leakguard;

namespace {

const char* kGoldenDir = LEAKGUARD_GOLDEN_DIR;

struct Gate {
    int failures = 0;
    void result(const std::string& label, bool ok, const std::string& detail) {
        std::printf("%s %s: %s\n", ok ? "PASS" : "FAIL", label.c_str(), detail.c_str());
        std::fflush(stdout);
        if (!ok) ++failures;
    }
};

std::string fmt(const char* f, ...) {
    char buf[512];
    va_list ap;
    va_start(ap, f);
    std::vsnprintf(buf, sizeof buf, f, ap);
    va_end(ap);
    return buf;
}

const std::vector<SimMechanism> kMechanisms = {
    SimMechanism::none, SimMechanism::subject_overlap, SimMechanism::batch_confounded,
    SimMechanism::peek_norm, SimMechanism::lookahead};

std::map<SimMechanism, SimCell> by_mechanism(const SimGrid& grid) {
    std::map<SimMechanism, SimCell> out;
    for (const auto& c : grid.cells) out[c.mechanism] = c;
    return out;
}

// Criterion 1: permutation audit holds its size on clean data under the
// full guarded elastic-net pipeline.
void criterion1(Gate& g) {
    SimGridOptions opts;
    opts.B = 200;
    auto grid = run_grid({SimMechanism::none}, {250}, {10}, {0.0}, 100, opts);
    const auto& c = grid.cells.at(0);
    bool ok = c.completed == 100 && c.rejection_rate >= 0.03 && c.rejection_rate <= 0.14;
    g.result("criterion 1", ok,
             fmt("null rejection rate %.3f (%d/%d) at alpha 0.05, band [0.03, 0.14]",
                 c.rejection_rate, c.rejections, c.completed));
}

// Criterion 2: planted mechanisms are detected at s=0 and clean/irrelevant
// mechanisms stay quiet.
void criterion2(Gate& g) {
    SimGridOptions opts;
    opts.B = 200;
    auto grid = run_grid(kMechanisms, {250}, {10}, {0.0}, 50, opts);
    auto cells = by_mechanism(grid);
    double peek = cells[SimMechanism::peek_norm].rejection_rate;
    double subj = cells[SimMechanism::subject_overlap].rejection_rate;
    double batch = cells[SimMechanism::batch_confounded].rejection_rate;
    double look = cells[SimMechanism::lookahead].rejection_rate;
    double none = cells[SimMechanism::none].rejection_rate;
    bool complete = true;
    for (const auto& [m, c] : cells) complete = complete && c.completed == 50;
    bool ok = complete && peek >= 0.98 && subj >= 0.95 && batch >= 0.95 && look <= 0.15 &&
              none <= 0.15;
    g.result("criterion 2", ok,
             fmt("detection at s=0: peek %.2f subject %.2f batch %.2f | lookahead %.2f none %.2f",
                 peek, subj, batch, look, none));
}

// Criterion 3: blocking on the confounded factor removes the signal the
// audit would otherwise flag.
void criterion3(Gate& g) {
    SimGridOptions opts;
    opts.B = 200;
    auto grid = run_split_mode_grid({SplitMode::subject_grouped, SplitMode::batch_blocked},
                                    {SimMechanism::batch_confounded}, 30, opts);
    double grouped = -1.0, blocked = -1.0;
    for (const auto& c : grid.cells) {
        if (c.split_mode == "subject_grouped") grouped = c.rejection_rate;
        if (c.split_mode == "batch_blocked") blocked = c.rejection_rate;
    }
    bool ok = grouped >= 0.90 && blocked >= 0.0 && blocked <= 0.10;
    g.result("criterion 3", ok,
             fmt("batch confounding rejected %.2f under subject_grouped vs %.2f under "
                 "batch_blocked",
                 grouped, blocked));
}

// Criterion 4: AUC inflation over the clean baseline orders the mechanisms
// as peek > batch ~ subject > lookahead.
void criterion4(Gate& g) {
    SimGridOptions opts;
    opts.B = 200;
    SimConfig base;
    base.subjects = 100;            // five rows per subject at n=500
    base.batch_logit_offset = 1.75; // matches batch confounding to the subject leak
    auto grid = run_grid(kMechanisms, {500}, {10}, {0.5}, 25, opts, base);
    auto cells = by_mechanism(grid);
    double clean = cells[SimMechanism::none].mean_observed;
    double peek = cells[SimMechanism::peek_norm].mean_observed - clean;
    double subj = cells[SimMechanism::subject_overlap].mean_observed - clean;
    double batch = cells[SimMechanism::batch_confounded].mean_observed - clean;
    double look = cells[SimMechanism::lookahead].mean_observed - clean;
    bool ok = peek >= 0.15 && look <= 0.08 && peek > subj && peek > batch &&
              std::fabs(subj - batch) <= 0.05 && std::min(subj, batch) > look;
    g.result("criterion 4", ok,
             fmt("inflation at s=0.5: peek %.3f > batch %.3f ~ subject %.3f > lookahead %.3f",
                 peek, batch, subj, look));
}

// Criterion 5: the paired delta test has power against a planted peek
// feature and the inflation estimate sits where it should.
void criterion5(Gate& g) {
    auto learner = LearnerSpec::parse("glmnet:alpha=0.9");
    auto pre = PreprocSpec::parse("impute=median,normalize=zscore");
    std::vector<MetricKind> mets = {MetricKind::auc};
    const int kSeeds = 20;
    int rejections = 0;
    double sum_delta = 0.0;
    for (int seed = 1; seed <= kSeeds; ++seed) {
        SimConfig cfg;
        cfg.mechanism = SimMechanism::peek_norm;
        cfg.n = 200;
        cfg.p = 20;
        cfg.s = 1.2;
        cfg.peek_var = 0.09;
        cfg.seed = static_cast<std::uint64_t>(seed);
        Dataset ds = simulate(cfg).data;
        SplitOptions sp;
        sp.v = 5;
        sp.repeats = 20;
        sp.stratify = true;
        sp.seed = static_cast<std::uint64_t>(1000 + seed);
        auto plan = make_split_plan(ds, SplitMode::subject_grouped, sp);
        auto leaky = fit_resample(ds, plan, learner, pre, mets, 5, false);
        auto guarded =
            fit_resample(ds.without_column("peek_y"), plan, learner, pre, mets, 5, false);
        DeltaLsiOptions dopts;
        dopts.seed = static_cast<std::uint64_t>(seed);
        auto rep = delta_lsi(leaky, guarded, dopts);
        sum_delta += rep.delta_metric;
        if (rep.sign_flip.p_value < 0.05) ++rejections;
    }
    double mean_delta = sum_delta / kSeeds;
    bool ok = rejections >= 19 && mean_delta >= 0.197 - 0.05 && mean_delta <= 0.197 + 0.05;
    g.result("criterion 5", ok,
             fmt("paired power: %d/%d rejections, mean delta %.4f (target 0.197 +/- 0.05)",
                 rejections, kSeeds, mean_delta));
}

// Criterion 6: with no leak the paired delta test stays calibrated.
void criterion6(Gate& g) {
    auto learner = LearnerSpec::parse("glmnet:alpha=0.9");
    auto pre = PreprocSpec::parse("impute=median,normalize=zscore");
    std::vector<MetricKind> mets = {MetricKind::auc};
    const int kReps = 50;
    int rejections = 0;
    double sum_delta = 0.0;
    for (int r = 1; r <= kReps; ++r) {
        SimConfig cfg;
        cfg.mechanism = SimMechanism::none;
        cfg.n = 200;
        cfg.p = 20;
        cfg.s = 1.0;
        cfg.seed = static_cast<std::uint64_t>(r);
        Dataset ds = simulate(cfg).data;
        SplitOptions sp;
        sp.v = 5;
        sp.repeats = 20;
        sp.stratify = true;
        sp.seed = static_cast<std::uint64_t>(2000 + r);
        auto plan = make_split_plan(ds, SplitMode::subject_grouped, sp);
        // both arms are honest; the compared pipelines differ only by one
        // pure-noise predictor
        auto full = fit_resample(ds, plan, learner, pre, mets, 5, false);
        auto reduced = fit_resample(ds.without_column("x20"), plan, learner, pre, mets, 5, false);
        DeltaLsiOptions dopts;
        dopts.seed = static_cast<std::uint64_t>(r);
        auto rep = delta_lsi(full, reduced, dopts);
        sum_delta += rep.delta_metric;
        if (rep.sign_flip.p_value < 0.05) ++rejections;
    }
    double mean_delta = sum_delta / kReps;
    double binom_p = binomial_upper_tail(rejections, kReps, 0.05);
    bool ok = binom_p >= 0.05 && std::fabs(mean_delta) < 0.01;
    g.result("criterion 6", ok,
             fmt("null calibration: %d/%d rejections (exact binomial p %.3f), mean delta %+.5f",
                 rejections, kReps, binom_p, mean_delta));
}

// ---- criterion 7 oracles ------------------------------------------------

double auc_pair_count(const std::vector<double>& s, const std::vector<double>& y) {
    double num = 0.0;
    long long pairs = 0;
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (y[i] < 0.5) continue;
        for (std::size_t j = 0; j < s.size(); ++j) {
            if (y[j] > 0.5) continue;
            ++pairs;
            if (s[i] > s[j]) num += 1.0;
            else if (s[i] == s[j]) num += 0.5;
        }
    }
    return pairs == 0 ? std::numeric_limits<double>::quiet_NaN()
                      : num / static_cast<double>(pairs);
}

double huber_grid_oracle(const std::vector<double>& d, double k) {
    double scale = 1.4826 * mad_of(d);
    if (scale <= 0.0) return median_of(d);
    auto loss = [&](double mu) {
        double total = 0.0;
        for (double x : d) {
            double r = std::fabs(x - mu);
            double c = k * scale;
            total += r <= c ? 0.5 * r * r : c * (r - 0.5 * c);
        }
        return total;
    };
    double lo = *std::min_element(d.begin(), d.end());
    double hi = *std::max_element(d.begin(), d.end());
    double best = lo;
    for (int stage = 0; stage < 5; ++stage) {
        double step = (hi - lo) / 2000.0;
        double best_loss = std::numeric_limits<double>::infinity();
        for (int i = 0; i <= 2000; ++i) {
            double mu = lo + step * i;
            double l = loss(mu);
            if (l < best_loss) {
                best_loss = l;
                best = mu;
            }
        }
        lo = best - step;
        hi = best + step;
    }
    return best;
}

void criterion7(Gate& g) {
    Rng rng(7001);
    int bad = 0;

    // AUC against O(n^2) pair counting, with heavy ties
    double max_auc_err = 0.0;
    for (int trial = 0; trial < 200; ++trial) {
        std::size_t n = 4 + rng.below(60);
        std::vector<double> s(n), y(n);
        bool pos = false, neg = false;
        for (std::size_t i = 0; i < n; ++i) {
            s[i] = static_cast<double>(rng.below(10)) / 5.0;
            y[i] = rng.bernoulli(0.4);
            (y[i] > 0.5 ? pos : neg) = true;
        }
        if (!pos || !neg) {
            if (!std::isnan(auc_score(s, y))) ++bad;
            continue;
        }
        double err = std::fabs(auc_score(s, y) - auc_pair_count(s, y));
        max_auc_err = std::max(max_auc_err, err);
        if (err > 1e-12) ++bad;
    }

    // Huber location against a shrinking grid minimizer
    double max_huber_err = 0.0;
    HuberConfig hc;
    for (int trial = 0; trial < 100; ++trial) {
        std::size_t r = 5 + rng.below(36);
        std::vector<double> d(r);
        for (auto& x : d) x = 0.1 + 0.3 * rng.normal();
        if (trial % 3 == 0) d[0] += 2.5;  // force the redescend branch
        double err = std::fabs(huber_location(d, hc) - huber_grid_oracle(d, hc.k));
        max_huber_err = std::max(max_huber_err, err);
        if (err > 1e-6) ++bad;
    }

    // exact sign flip against a Monte Carlo re-draw at M=100k
    double max_flip_err = 0.0;
    std::mt19937_64 mc(424242);
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<double> d(10);
        for (auto& x : d) x = 0.05 + 0.1 * rng.normal();
        auto exact = sign_flip_test(d, Exchangeability::iid, 10000, 1);
        if (exact.method != "exact") ++bad;
        double t_obs = 0.0;
        for (double x : d) t_obs += x;
        t_obs /= static_cast<double>(d.size());
        const int kM = 100000;
        long long hits = 0;
        for (int m = 0; m < kM; ++m) {
            double t = 0.0;
            for (double x : d) t += (mc() & 1ULL) ? -x : x;
            t /= static_cast<double>(d.size());
            if (t >= t_obs) ++hits;
        }
        double p_mc = (static_cast<double>(hits) + 1.0) / (kM + 1.0);
        double err = std::fabs(exact.p_value - p_mc);
        max_flip_err = std::max(max_flip_err, err);
        if (err > 0.01) ++bad;
    }

    // elastic-net stationarity residuals at a fixed penalty
    double max_kkt = 0.0;
    for (GlmFamily family : {GlmFamily::binomial, GlmFamily::gaussian}) {
        for (double alpha : {0.3, 0.9, 1.0}) {
            for (std::uint64_t seed = 1; seed <= 4; ++seed) {
                Rng prng(derive_seed(9000, seed, alpha * 10));
                int n = 120, p = 8;
                Eigen::MatrixXd X(n, p);
                Eigen::VectorXd beta(p);
                for (int j = 0; j < p; ++j) beta(j) = prng.normal() * 0.7;
                std::vector<double> y(static_cast<std::size_t>(n));
                bool pos = false, neg = false;
                for (int i = 0; i < n; ++i) {
                    for (int j = 0; j < p; ++j) X(i, j) = prng.normal();
                    double eta = X.row(i).dot(beta) * 0.8;
                    if (family == GlmFamily::binomial) {
                        double pr = 1.0 / (1.0 + std::exp(-eta));
                        y[static_cast<std::size_t>(i)] = prng.uniform01() < pr ? 1.0 : 0.0;
                        (y[static_cast<std::size_t>(i)] > 0.5 ? pos : neg) = true;
                    } else {
                        y[static_cast<std::size_t>(i)] = eta + prng.normal() * 0.5;
                    }
                }
                if (family == GlmFamily::binomial && (!pos || !neg)) continue;
                LearnerSpec spec;
                spec.kind = family == GlmFamily::binomial
                                ? LearnerSpec::Kind::logistic_elastic_net
                                : LearnerSpec::Kind::linear_ols;
                spec.alpha = alpha;
                spec.lambda = 0.3 * elastic_net_lambda_max(X, y, alpha, family);
                spec.max_iter = 500;
                spec.tol = 1e-11;
                FittedModel m = fit_elastic_net(X, y, spec, family, seed);
                double res = elastic_net_kkt_residual(X, y, alpha, spec.lambda, family, m);
                max_kkt = std::max(max_kkt, res);
                if (res > 1e-6) ++bad;
            }
        }
    }

    g.result("criterion 7", bad == 0,
             fmt("oracles: auc err %.1e, huber err %.1e, signflip err %.4f, kkt %.1e "
                 "(%d mismatches)",
                 max_auc_err, max_huber_err, max_flip_err, max_kkt, bad));
}

// ---- criterion 8 structural invariants ----------------------------------

void criterion8(Gate& g) {
    Rng rng(8001);
    int straddles = 0, hygiene = 0;

    // 1000 random grouped plans, straddles counted directly per constituent
    for (int trial = 0; trial < 1000; ++trial) {
        testutil::SynthSpec spec;
        spec.n = 40 + static_cast<int>(rng.below(140));
        spec.rows_per_subject = 1 + static_cast<int>(rng.below(5));
        spec.batches = 3 + static_cast<int>(rng.below(5));
        spec.studies = 2 + static_cast<int>(rng.below(4));
        spec.p = 2;
        spec.beta = 0.5;
        spec.seed = static_cast<std::uint64_t>(trial + 1);
        Dataset ds = testutil::make_synth(spec);

        SplitOptions so;
        so.v = 2 + static_cast<int>(rng.below(2));
        so.repeats = 1 + static_cast<int>(rng.below(3));
        so.stratify = rng.bernoulli(0.5) != 0;
        so.seed = rng.next_u64();
        SplitMode mode;
        std::vector<std::string> group_cols;
        switch (rng.below(4)) {
            case 0: mode = SplitMode::subject_grouped; group_cols = {"subject"}; break;
            case 1: mode = SplitMode::batch_blocked; group_cols = {"batch"}; break;
            case 2:
                mode = SplitMode::study_loocv;
                group_cols = {"study"};
                so.repeats = 1;  // LOOCV is deterministic
                break;
            default:
                // adding the study constraint as well tends to merge every row
                // into one component, so stop at two constituents
                mode = SplitMode::combined;
                so.combine = {SplitMode::subject_grouped, SplitMode::batch_blocked};
                group_cols = {"subject", "batch"};
                break;
        }
        auto plan = make_split_plan(ds, mode, so);
        for (const auto& col : group_cols) {
            auto codes = ds.group_codes(col);
            for (const auto& fold : plan.folds) {
                std::set<std::int32_t> train_groups;
                for (auto r : fold.train_rows) train_groups.insert(codes[static_cast<std::size_t>(r)]);
                for (auto r : fold.test_rows)
                    if (train_groups.count(codes[static_cast<std::size_t>(r)])) ++straddles;
            }
        }
        if (!overlap_check(plan, ds).clean()) ++hygiene;
    }

    // time-order invariant with purge/horizon/embargo, checked by rank
    int time_bad = 0;
    for (int trial = 0; trial < 100; ++trial) {
        int n = 30 + static_cast<int>(rng.below(170));
        std::vector<double> t(static_cast<std::size_t>(n));
        for (int i = 0; i < n; ++i) t[static_cast<std::size_t>(i)] = i * 2.0;
        // shuffle row order so the plan has to sort by time itself
        for (int i = n - 1; i > 0; --i)
            std::swap(t[static_cast<std::size_t>(i)],
                      t[rng.below(static_cast<std::size_t>(i + 1))]);
        std::vector<double> y(static_cast<std::size_t>(n)), x(static_cast<std::size_t>(n));
        for (int i = 0; i < n; ++i) {
            x[static_cast<std::size_t>(i)] = rng.normal();
            y[static_cast<std::size_t>(i)] = rng.bernoulli(0.5);
        }
        std::vector<Column> cols;
        cols.push_back(Column::numeric_col("t", t));
        std::vector<std::string> ylab(static_cast<std::size_t>(n));
        for (int i = 0; i < n; ++i)
            ylab[static_cast<std::size_t>(i)] = y[static_cast<std::size_t>(i)] > 0.5 ? "1" : "0";
        cols.push_back(Column::categorical_col("y", ylab));
        cols.push_back(Column::numeric_col("x1", x));
        RoleMap roles;
        roles.outcome = "y";
        roles.positive_class = "1";
        roles.time = "t";
        Dataset ds = Dataset::build(cols, roles);

        SplitOptions so;
        so.v = 2 + static_cast<int>(rng.below(5));
        so.time.horizon = static_cast<int>(rng.below(4));
        so.time.purge = static_cast<int>(rng.below(4));
        so.time.embargo = static_cast<int>(rng.below(4));
        auto plan = make_split_plan(ds, SplitMode::time_series, so);

        std::vector<int> rank(static_cast<std::size_t>(n));
        for (std::size_t pos = 0; pos < plan.time_order.size(); ++pos)
            rank[static_cast<std::size_t>(plan.time_order[pos])] = static_cast<int>(pos);
        int gap = so.time.horizon + so.time.purge;
        auto tv = ds.numeric_values("t");
        for (const auto& fold : plan.folds) {
            int max_train = -1, min_test = n;
            double max_train_t = -1e300, min_test_t = 1e300;
            for (auto r : fold.train_rows) {
                max_train = std::max(max_train, rank[static_cast<std::size_t>(r)]);
                max_train_t = std::max(max_train_t, tv[static_cast<std::size_t>(r)]);
            }
            for (auto r : fold.test_rows) {
                min_test = std::min(min_test, rank[static_cast<std::size_t>(r)]);
                min_test_t = std::min(min_test_t, tv[static_cast<std::size_t>(r)]);
            }
            if (max_train + gap >= min_test) ++time_bad;
            if (max_train_t >= min_test_t) ++time_bad;
        }
        if (!overlap_check(plan, ds).clean()) ++time_bad;
    }

    // guard metamorphic: corrupting one test row never changes the fitted
    // preprocessing or model for that fold
    int meta_bad = 0;
    std::vector<std::string> normalizers = {"", ",normalize=zscore", ",normalize=robust"};
    std::vector<std::string> filters = {"", ",filter=variance:0.0", ",filter=iqr:0.02"};
    for (int trial = 0; trial < 200; ++trial) {
        testutil::SynthSpec spec;
        spec.n = 60;
        spec.rows_per_subject = 1 + static_cast<int>(rng.below(3));
        spec.p = 3 + static_cast<int>(rng.below(5));
        spec.beta = 0.8;
        spec.seed = static_cast<std::uint64_t>(5000 + trial);
        Dataset ds = testutil::make_synth(spec);

        std::string stage4;
        switch (rng.below(4)) {
            case 0: break;
            case 1: stage4 = ",select=ttest:" + std::to_string(2 + rng.below(static_cast<std::size_t>(spec.p - 1))); break;
            case 2: stage4 = ",select=lasso:0.05"; break;
            default: stage4 = ",project=pca:" + std::to_string(1 + rng.below(2)); break;
        }
        auto pre = PreprocSpec::parse("impute=median" + normalizers[rng.below(3)] +
                                      filters[rng.below(3)] + stage4);
        auto learner = LearnerSpec::parse(rng.bernoulli(0.3) ? "glmnet:alpha=0.9,lambda=0.05"
                                                             : "glm");

        SplitOptions so;
        so.v = 3;
        so.seed = rng.next_u64();
        auto plan = make_split_plan(ds, SplitMode::subject_grouped, so);
        std::vector<MetricKind> mets = {MetricKind::auc};
        auto fit_a = fit_resample(ds, plan, learner, pre, mets, 3, false);

        std::size_t fold_i = rng.below(plan.folds.size());
        const auto& fold = plan.folds[fold_i];
        auto row = fold.test_rows[rng.below(fold.test_rows.size())];
        std::string col = "x" + std::to_string(1 + rng.below(static_cast<std::size_t>(spec.p)));

        auto cols = ds.columns();
        for (auto& c : cols)
            if (c.name == col)
                c.values[static_cast<std::size_t>(row)] =
                    trial % 4 == 0 ? std::numeric_limits<double>::quiet_NaN()
                                   : c.values[static_cast<std::size_t>(row)] * 3.0 + 5.0;
        Dataset mutated = Dataset::build(cols, ds.roles());
        auto fit_b = fit_resample(mutated, plan, learner, pre, mets, 3, false);

        const auto& ra = fit_a.folds[fold_i];
        const auto& rb = fit_b.folds[fold_i];
        bool same = ra.preproc_hash == rb.preproc_hash && ra.lambda == rb.lambda &&
                    ra.model_iterations == rb.model_iterations &&
                    ra.n_features_out == rb.n_features_out;
        for (std::size_t k = 0; k < ra.test_rows.size() && same; ++k) {
            if (ra.test_rows[k] == row) continue;  // only the corrupted row may move
            same = ra.predictions[k] == rb.predictions[k];
        }
        if (!same) ++meta_bad;
    }

    bool ok = straddles == 0 && hygiene == 0 && time_bad == 0 && meta_bad == 0;
    g.result("criterion 8", ok,
             fmt("structure: %d straddles / %d hygiene over 1000 grouped plans, %d time-order "
                 "breaks, %d guard metamorphic breaks over 200 pipelines",
                 straddles, hygiene, time_bad, meta_bad));
}

// ---- criterion 9 tiers and the pinned example ----------------------------

void criterion9(Gate& g) {
    bool tiers_ok = tier_for(4, true) == InferenceTier::D_insufficient &&
                    tier_for(5, true) == InferenceTier::C_signflip &&
                    tier_for(9, true) == InferenceTier::C_signflip &&
                    tier_for(10, true) == InferenceTier::B_signflip_ci &&
                    tier_for(19, true) == InferenceTier::B_signflip_ci &&
                    tier_for(20, true) == InferenceTier::A_full_inference &&
                    tier_for(20, false) == InferenceTier::D_insufficient &&
                    tier_for(4, false) == InferenceTier::D_insufficient;

    auto j = load_json_file(std::string(kGoldenDir) + "/dlsi_fixture.json");
    DeltaVector dv;
    dv.paired = true;
    dv.higher_better = true;
    dv.metric = MetricKind::auc;
    dv.leaky_values = j.at("leaky_values").get<std::vector<double>>();
    dv.guarded_values = j.at("guarded_values").get<std::vector<double>>();
    dv.repeat_ids = j.at("repeat_ids").get<std::vector<int>>();
    for (std::size_t i = 0; i < dv.leaky_values.size(); ++i)
        dv.deltas.push_back(dv.leaky_values[i] - dv.guarded_values[i]);
    dv.leaky_pooled = mean_of(dv.leaky_values);
    dv.guarded_pooled = mean_of(dv.guarded_values);

    DeltaLsiOptions opts;
    opts.seed = 20260814;
    auto rep = delta_lsi_from_deltas(dv, opts);

    bool range_ok = true;
    for (double d : rep.delta_vector.deltas) range_ok = range_ok && d >= 0.14 && d <= 0.21;
    bool fixture_ok = range_ok && rep.r_eff == 20 && rep.paired &&
                      rep.tier == InferenceTier::A_full_inference && rep.inference_ok &&
                      std::fabs(rep.leaky_pooled - 0.791) <= 5e-4 &&
                      std::fabs(rep.guarded_pooled - 0.611) <= 5e-4 &&
                      std::fabs(rep.delta_metric - 0.180) <= 5e-4 &&
                      std::fabs(rep.delta_lsi - 0.181) <= 5e-4 &&
                      rep.sign_flip.p_value <= 2e-4;
    g.result("criterion 9", tiers_ok && fixture_ok,
             fmt("tiers at 4/5/9/10/19/20+unpaired %s; fixture leaky %.3f guarded %.3f "
                 "delta %.4f/%.4f p %.1e tier %s",
                 tiers_ok ? "exact" : "WRONG", rep.leaky_pooled, rep.guarded_pooled,
                 rep.delta_metric, rep.delta_lsi, rep.sign_flip.p_value,
                 tier_name(rep.tier).c_str()));
}

// Criterion 10: BCa interval for the mean holds near-nominal coverage.
void criterion10(Gate& g) {
    const int kVectors = 500;
    const double mu = 0.05, sd = 0.02;
    int covered = 0;
    Rng rng(1010);
    for (int v = 0; v < kVectors; ++v) {
        std::vector<double> d(20);
        for (auto& x : d) x = mu + sd * rng.normal();
        auto ci = bca_interval(d, BcaEstimator::mean, 2000, 0.95,
                               static_cast<std::uint64_t>(v + 1));
        if (ci.available && ci.lo <= mu && mu <= ci.hi) ++covered;
    }
    double coverage = static_cast<double>(covered) / kVectors;
    bool ok = coverage >= 0.90 && coverage <= 0.98;
    g.result("criterion 10", ok,
             fmt("BCa 95%% interval covered the true mean %.3f of the time (band [0.90, 0.98])",
                 coverage));
}

// Four-arm decomposition on one synthetic cohort: each arm removes one more
// safeguard and the scores must climb monotonically.
void four_arm(Gate& g) {
    const int kSubjects = 60, kRowsPer = 3, kP = 60;
    const int n = kSubjects * kRowsPer;
    std::mt19937_64 rng(314159);
    std::normal_distribution<double> gauss;
    std::bernoulli_distribution coin(0.5);

    std::vector<std::vector<double>> x(kP, std::vector<double>(static_cast<std::size_t>(n)));
    std::vector<std::string> ylab(static_cast<std::size_t>(n)), subj(static_cast<std::size_t>(n)),
        row_id(static_cast<std::size_t>(n));
    std::vector<double> peek(static_cast<std::size_t>(n));
    std::size_t r = 0;
    for (int k = 0; k < kSubjects; ++k) {
        std::vector<double> z(kP);
        for (auto& v : z) v = gauss(rng);
        double yk = coin(rng) ? 1.0 : 0.0;
        for (int j = 0; j < kRowsPer; ++j, ++r) {
            subj[r] = "s" + std::to_string(k + 1);
            row_id[r] = "r" + std::to_string(r + 1);
            ylab[r] = yk > 0.5 ? "1" : "0";
            for (int f = 0; f < kP; ++f)
                x[static_cast<std::size_t>(f)][r] = z[static_cast<std::size_t>(f)] + 0.4 * gauss(rng);
            peek[r] = yk + 0.3 * gauss(rng);
        }
    }

    std::vector<Column> cols;
    cols.push_back(Column::categorical_col("subj", subj));
    cols.push_back(Column::categorical_col("row", row_id));
    cols.push_back(Column::categorical_col("y", ylab));
    std::vector<std::string> xnames;
    for (int f = 0; f < kP; ++f) {
        xnames.push_back("x" + std::to_string(f + 1));
        cols.push_back(Column::numeric_col(xnames.back(), x[static_cast<std::size_t>(f)]));
    }
    cols.push_back(Column::numeric_col("peek", peek));

    auto make_ds = [&](const std::string& subject_col, std::vector<std::string> preds) {
        RoleMap roles;
        roles.outcome = "y";
        roles.positive_class = "1";
        roles.subject = subject_col;
        roles.predictors = std::move(preds);
        return Dataset::build(cols, roles);
    };

    auto learner = LearnerSpec::parse("glm");
    std::vector<MetricKind> mets = {MetricKind::auc};
    SplitOptions sp;
    sp.v = 5;
    sp.repeats = 4;
    sp.stratify = true;
    sp.seed = 99;
    auto run = [&](const Dataset& ds, const PreprocSpec& pre) {
        auto plan = make_split_plan(ds, SplitMode::subject_grouped, sp);
        return fit_resample(ds, plan, learner, pre, mets, 7, false).aggregates[0].mean;
    };

    // fully guarded: grouped folds, selection inside the guard
    double guarded = run(make_ds("subj", xnames),
                         PreprocSpec::parse("impute=median,normalize=zscore,select=ttest:8"));

    // feature selection leaked: screen on the full dataset, then refit
    Dataset ds_all = make_ds("subj", xnames);
    auto fm = encode_features(ds_all, ds_all.predictor_names());
    auto fp = fit_preproc(PreprocSpec::parse("select=ttest:8"), fm.X, ds_all.outcome_values(),
                          TaskKind::binary_classification, fm.names, 11);
    std::vector<std::string> chosen = fp.output_names;
    double fs_leak = run(make_ds("subj", chosen),
                         PreprocSpec::parse("impute=median,normalize=zscore"));

    // naive: leaked selection plus row-level folds that ignore subjects
    double naive = run(make_ds("row", chosen),
                       PreprocSpec::parse("impute=median,normalize=zscore"));

    // leaky: all of the above plus an outcome-proxy feature
    auto preds4 = chosen;
    preds4.push_back("peek");
    double leaky = run(make_ds("row", preds4),
                       PreprocSpec::parse("impute=median,normalize=zscore"));

    bool ok = guarded < fs_leak && fs_leak < naive && naive < leaky;
    g.result("four-arm decomposition", ok,
             fmt("auc guarded %.3f < fs-leak %.3f < naive %.3f < leaky %.3f", guarded, fs_leak,
                 naive, leaky));
}

}  // namespace

int main() {
    Gate g;
    criterion1(g);
    criterion2(g);
    criterion3(g);
    criterion4(g);
    criterion5(g);
    criterion6(g);
    criterion7(g);
    criterion8(g);
    criterion9(g);
    criterion10(g);
    four_arm(g);
    if (g.failures == 0) {
        std::printf("acceptance: all criteria passed\n");
        return 0;
    }
    std::printf("acceptance: %d criteria failed\n", g.failures);
    return 1;
}
