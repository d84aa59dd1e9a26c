#include "leakguard/sim.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>
#include <stdexcept>

#include "leakguard/parallel.hpp"
#include "leakguard/resample.hpp"
#include "leakguard/rng.hpp"

namespace leakguard {

namespace {

constexpr std::uint64_t kSimTag = 0x73696d;

enum SimStream : std::uint64_t {
    kStreamX = 1,
    kStreamAr = 2,
    kStreamIid = 3,
    kStreamY = 4,
    kStreamBatch = 5,
    kStreamPeek = 6,
    kStreamBio = 7,
    kStreamSplit = 8,
    kStreamFit = 9,
    kStreamAudit = 10,
};

Rng stream_rng(const SimConfig& cfg, SimStream which) {
    return Rng(derive_seed(cfg.seed, kSimTag, static_cast<std::uint64_t>(which)));
}

void validate(const SimConfig& cfg) {
    if (cfg.n < 10) throw std::invalid_argument("simulation needs n >= 10");
    if (cfg.p < 1) throw std::invalid_argument("simulation needs p >= 1");
    if (cfg.s < 0.0) throw std::invalid_argument("signal level s must be >= 0");
    if (cfg.batches < 2) throw std::invalid_argument("simulation needs at least 2 batches");
    if (cfg.studies < 2) throw std::invalid_argument("simulation needs at least 2 studies");
    if (!(cfg.ar_rho >= 0.0 && cfg.ar_rho < 1.0))
        throw std::invalid_argument("ar_rho must lie in [0, 1)");
    if (cfg.peek_var <= 0.0) throw std::invalid_argument("peek_var must be positive");
    if (cfg.signal_features < 1) throw std::invalid_argument("signal_features must be >= 1");
    if (cfg.lookahead_noise_sd < 0.0)
        throw std::invalid_argument("lookahead_noise_sd must be >= 0");
}

Column int_categorical(std::string name, const std::vector<std::int32_t>& codes,
                       const std::string& prefix, int n_levels) {
    Column col;
    col.name = std::move(name);
    col.kind = ColumnKind::categorical;
    col.codes = codes;
    col.levels.reserve(static_cast<std::size_t>(n_levels));
    for (int i = 0; i < n_levels; ++i) col.levels.push_back(prefix + std::to_string(i + 1));
    return col;
}

std::string trimmed_double(double v) {
    std::ostringstream ss;
    ss << v;
    return ss.str();
}

}  // namespace

std::string mechanism_name(SimMechanism m) {
    switch (m) {
        case SimMechanism::none: return "none";
        case SimMechanism::subject_overlap: return "subject_overlap";
        case SimMechanism::batch_confounded: return "batch_confounded";
        case SimMechanism::peek_norm: return "peek_norm";
        case SimMechanism::lookahead: return "lookahead";
    }
    return "none";
}

SimMechanism mechanism_from_name(const std::string& s) {
    if (s == "none") return SimMechanism::none;
    if (s == "subject_overlap") return SimMechanism::subject_overlap;
    if (s == "batch_confounded") return SimMechanism::batch_confounded;
    if (s == "peek_norm") return SimMechanism::peek_norm;
    if (s == "lookahead") return SimMechanism::lookahead;
    throw std::invalid_argument("unknown mechanism: " + s);
}

SimDataset simulate(const SimConfig& cfg) {
    validate(cfg);
    const int n = cfg.n, p = cfg.p;

    // contiguous subjects of ~3 rows, studies aligned to subject boundaries
    int n_subjects = cfg.subjects > 0 ? cfg.subjects : std::max(2, n / 3);
    n_subjects = std::min(n_subjects, n);
    std::vector<std::int32_t> subject_of(static_cast<std::size_t>(n));
    {
        int base = n / n_subjects, extra = n % n_subjects, row = 0;
        for (int k = 0; k < n_subjects; ++k) {
            int size = base + (k < extra ? 1 : 0);
            for (int j = 0; j < size; ++j) subject_of[static_cast<std::size_t>(row++)] = k;
        }
    }
    int n_studies = std::min(cfg.studies, n_subjects);
    std::vector<std::int32_t> study_of(static_cast<std::size_t>(n));
    for (int r = 0; r < n; ++r) {
        int k = subject_of[static_cast<std::size_t>(r)];
        study_of[static_cast<std::size_t>(r)] =
            std::min(n_studies - 1, k * n_studies / n_subjects);
    }

    Rng rx = stream_rng(cfg, kStreamX);
    std::vector<std::vector<double>> X(static_cast<std::size_t>(p),
                                       std::vector<double>(static_cast<std::size_t>(n)));
    for (int r = 0; r < n; ++r)
        for (int j = 0; j < p; ++j) X[static_cast<std::size_t>(j)][static_cast<std::size_t>(r)] = rx.normal();

    const int k_signal = std::min(cfg.signal_features, p);
    const double w = 1.0 / std::sqrt(static_cast<double>(k_signal));
    std::vector<double> lin(static_cast<std::size_t>(n), 0.0);
    for (int r = 0; r < n; ++r)
        for (int j = 0; j < k_signal; ++j)
            lin[static_cast<std::size_t>(r)] += w * X[static_cast<std::size_t>(j)][static_cast<std::size_t>(r)];

    // stationary AR(1) path; it enters the latent predictor only when s > 0,
    // so at s = 0 anything derived from it is independent of the outcome
    Rng rar = stream_rng(cfg, kStreamAr);
    std::vector<double> ar(static_cast<std::size_t>(n));
    double innov = std::sqrt(1.0 - cfg.ar_rho * cfg.ar_rho);
    ar[0] = rar.normal();
    for (int r = 1; r < n; ++r)
        ar[static_cast<std::size_t>(r)] = cfg.ar_rho * ar[static_cast<std::size_t>(r - 1)] + innov * rar.normal();

    Rng riid = stream_rng(cfg, kStreamIid);
    std::vector<double> eta(static_cast<std::size_t>(n));
    for (int r = 0; r < n; ++r) {
        double noise = cfg.s > 0.0 ? ar[static_cast<std::size_t>(r)] : riid.normal();
        eta[static_cast<std::size_t>(r)] = cfg.s * lin[static_cast<std::size_t>(r)] + noise;
    }

    Rng ry = stream_rng(cfg, kStreamY);
    std::vector<std::int32_t> y(static_cast<std::size_t>(n));
    for (int r = 0; r < n; ++r)
        y[static_cast<std::size_t>(r)] = ry.uniform01() < normal_cdf(eta[static_cast<std::size_t>(r)]) ? 1 : 0;

    // batch assignment; outcome-dependent only for batch_confounded
    Rng rb = stream_rng(cfg, kStreamBatch);
    std::vector<std::int32_t> batch_of(static_cast<std::size_t>(n));
    if (cfg.mechanism == SimMechanism::batch_confounded) {
        int case_batches = (cfg.batches + 1) / 2;  // lower-indexed batches lean toward cases
        std::vector<double> cum(static_cast<std::size_t>(cfg.batches));
        for (int r = 0; r < n; ++r) {
            double total = 0.0;
            for (int b = 0; b < cfg.batches; ++b) {
                int pole = b < case_batches ? 1 : 0;
                double wgt = std::exp(cfg.batch_logit_offset *
                                      (pole == y[static_cast<std::size_t>(r)] ? 1.0 : 0.0));
                total += wgt;
                cum[static_cast<std::size_t>(b)] = total;
            }
            double u = rb.uniform01() * total;
            int b = 0;
            while (b + 1 < cfg.batches && u > cum[static_cast<std::size_t>(b)]) ++b;
            batch_of[static_cast<std::size_t>(r)] = b;
        }
    } else {
        for (int r = 0; r < n; ++r)
            batch_of[static_cast<std::size_t>(r)] =
                static_cast<std::int32_t>(rb.below(static_cast<std::uint64_t>(cfg.batches)));
    }

    SimDataset out;
    out.config = cfg;
    out.signal_coefficients.assign(static_cast<std::size_t>(p), 0.0);
    for (int j = 0; j < k_signal; ++j) out.signal_coefficients[static_cast<std::size_t>(j)] = cfg.s * w;

    std::vector<Column> cols;
    cols.push_back(int_categorical("subject", subject_of, "s", n_subjects));
    cols.push_back(int_categorical("batch", batch_of, "b", cfg.batches));
    cols.push_back(int_categorical("study", study_of, "st", n_studies));
    {
        std::vector<double> t(static_cast<std::size_t>(n));
        for (int r = 0; r < n; ++r) t[static_cast<std::size_t>(r)] = static_cast<double>(r);
        cols.push_back(Column::numeric_col("time", std::move(t)));
    }
    {
        Column yc;
        yc.name = "y";
        yc.kind = ColumnKind::categorical;
        yc.codes = y;
        yc.levels = {"0", "1"};
        cols.push_back(std::move(yc));
    }
    for (int j = 0; j < p; ++j)
        cols.push_back(Column::numeric_col("x" + std::to_string(j + 1), std::move(X[static_cast<std::size_t>(j)])));

    switch (cfg.mechanism) {
        case SimMechanism::none:
            break;
        case SimMechanism::subject_overlap: {
            std::vector<double> sum(static_cast<std::size_t>(n_subjects), 0.0);
            std::vector<double> count(static_cast<std::size_t>(n_subjects), 0.0);
            for (int r = 0; r < n; ++r) {
                sum[static_cast<std::size_t>(subject_of[static_cast<std::size_t>(r)])] +=
                    y[static_cast<std::size_t>(r)];
                count[static_cast<std::size_t>(subject_of[static_cast<std::size_t>(r)])] += 1.0;
            }
            std::vector<double> v(static_cast<std::size_t>(n));
            for (int r = 0; r < n; ++r) {
                int k = subject_of[static_cast<std::size_t>(r)];
                v[static_cast<std::size_t>(r)] = sum[static_cast<std::size_t>(k)] / count[static_cast<std::size_t>(k)];
            }
            cols.push_back(Column::numeric_col("subj_mean_y", std::move(v)));
            out.leak_columns.push_back("subj_mean_y");
            break;
        }
        case SimMechanism::batch_confounded: {
            std::vector<double> sum(static_cast<std::size_t>(cfg.batches), 0.0);
            std::vector<double> count(static_cast<std::size_t>(cfg.batches), 0.0);
            for (int r = 0; r < n; ++r) {
                sum[static_cast<std::size_t>(batch_of[static_cast<std::size_t>(r)])] +=
                    y[static_cast<std::size_t>(r)];
                count[static_cast<std::size_t>(batch_of[static_cast<std::size_t>(r)])] += 1.0;
            }
            std::vector<double> v(static_cast<std::size_t>(n));
            for (int r = 0; r < n; ++r) {
                int b = batch_of[static_cast<std::size_t>(r)];
                v[static_cast<std::size_t>(r)] =
                    count[static_cast<std::size_t>(b)] > 0.0
                        ? sum[static_cast<std::size_t>(b)] / count[static_cast<std::size_t>(b)]
                        : 0.0;
            }
            cols.push_back(Column::numeric_col("batch_mean_y", std::move(v)));
            out.leak_columns.push_back("batch_mean_y");
            break;
        }
        case SimMechanism::peek_norm: {
            Rng rp = stream_rng(cfg, kStreamPeek);
            double sd = std::sqrt(cfg.peek_var);
            std::vector<double> v(static_cast<std::size_t>(n));
            for (int r = 0; r < n; ++r)
                v[static_cast<std::size_t>(r)] = y[static_cast<std::size_t>(r)] + sd * rp.normal();
            cols.push_back(Column::numeric_col("peek_y", std::move(v)));
            out.leak_columns.push_back("peek_y");
            break;
        }
        case SimMechanism::lookahead: {
            // biomarker tracks the latent state; the predictor holds the next
            // row's value within each subject, last rows keep their own
            Rng rbio = stream_rng(cfg, kStreamBio);
            std::vector<double> bio(static_cast<std::size_t>(n));
            for (int r = 0; r < n; ++r)
                bio[static_cast<std::size_t>(r)] = cfg.s * lin[static_cast<std::size_t>(r)] +
                                                   ar[static_cast<std::size_t>(r)] +
                                                   cfg.lookahead_noise_sd * rbio.normal();
            std::vector<double> v(static_cast<std::size_t>(n));
            for (int r = 0; r < n; ++r) {
                bool has_next = r + 1 < n && subject_of[static_cast<std::size_t>(r + 1)] ==
                                                 subject_of[static_cast<std::size_t>(r)];
                v[static_cast<std::size_t>(r)] = bio[static_cast<std::size_t>(has_next ? r + 1 : r)];
            }
            cols.push_back(Column::numeric_col("lookahead_biomarker", std::move(v)));
            out.leak_columns.push_back("lookahead_biomarker");
            break;
        }
    }

    RoleMap roles;
    roles.outcome = "y";
    roles.positive_class = "1";
    roles.subject = "subject";
    roles.batch = "batch";
    roles.study = "study";
    roles.time = "time";
    out.data = Dataset::build(std::move(cols), std::move(roles));
    return out;
}

namespace {

std::string task_key(const SimConfig& cfg, const std::string& mode) {
    std::ostringstream ss;
    ss << mechanism_name(cfg.mechanism) << "_" << mode << "_n" << cfg.n << "_p" << cfg.p << "_s"
       << trimmed_double(cfg.s) << "_seed" << cfg.seed;
    return ss.str();
}

nlohmann::json task_to_json(const SimTaskResult& t) {
    nlohmann::json j;
    j["mechanism"] = mechanism_name(t.config.mechanism);
    j["split_mode"] = t.split_mode;
    j["n"] = t.config.n;
    j["p"] = t.config.p;
    j["s"] = t.config.s;
    j["seed"] = t.config.seed;
    j["ok"] = t.ok;
    j["message"] = t.message;
    j["observed"] = t.observed;
    j["perm_mean"] = t.perm_mean;
    j["gap"] = t.gap;
    j["p_value"] = t.p_value;
    j["reject"] = t.reject;
    return j;
}

bool task_from_json(const nlohmann::json& j, SimTaskResult& t) {
    if (!j.is_object() || !j.contains("ok")) return false;
    t.ok = j.value("ok", false);
    t.message = j.value("message", "");
    t.observed = j.value("observed", 0.0);
    t.perm_mean = j.value("perm_mean", 0.0);
    t.gap = j.value("gap", 0.0);
    t.p_value = j.value("p_value", 1.0);
    t.reject = j.value("reject", false);
    return true;
}

void write_atomic(const std::filesystem::path& path, const std::string& text) {
    std::filesystem::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw std::runtime_error("cannot write checkpoint " + tmp.string());
        out << text;
    }
    std::filesystem::rename(tmp, path);
}

struct TaskSpec {
    SimConfig cfg;
    SplitMode mode = SplitMode::subject_grouped;
};

SimGrid run_tasks(const std::vector<TaskSpec>& specs, const SimGridOptions& opts) {
    SimGrid grid;
    grid.tasks.resize(specs.size());

    std::filesystem::path dir;
    std::vector<bool> done(specs.size(), false);
    if (!opts.checkpoint_dir.empty()) {
        dir = opts.checkpoint_dir;
        std::filesystem::create_directories(dir);
        for (std::size_t i = 0; i < specs.size(); ++i) {
            auto path = dir / (task_key(specs[i].cfg, split_mode_name(specs[i].mode)) + ".json");
            if (!std::filesystem::exists(path)) continue;
            try {
                std::ifstream in(path);
                nlohmann::json j = nlohmann::json::parse(in);
                SimTaskResult t;
                t.config = specs[i].cfg;
                t.split_mode = split_mode_name(specs[i].mode);
                if (task_from_json(j, t)) {
                    grid.tasks[i] = std::move(t);
                    done[i] = true;
                }
            } catch (const std::exception&) {
                // unreadable checkpoint: recompute and overwrite
            }
        }
    }

    parallel_for(specs.size(), [&](std::size_t i) {
        if (done[i]) return;
        SimGridOptions local = opts;
        local.split_mode = specs[i].mode;
        grid.tasks[i] = run_sim_task(specs[i].cfg, local);
        if (!dir.empty()) {
            auto path = dir / (task_key(specs[i].cfg, split_mode_name(specs[i].mode)) + ".json");
            write_atomic(path, task_to_json(grid.tasks[i]).dump(2) + "\n");
        }
    });

    // aggregate cells in spec order
    std::map<std::string, std::size_t> index;
    for (const auto& t : grid.tasks) {
        std::ostringstream key;
        key << mechanism_name(t.config.mechanism) << '|' << t.split_mode << '|' << t.config.n << '|'
            << t.config.p << '|' << t.config.s;
        auto it = index.find(key.str());
        if (it == index.end()) {
            SimCell cell;
            cell.mechanism = t.config.mechanism;
            cell.split_mode = t.split_mode;
            cell.n = t.config.n;
            cell.p = t.config.p;
            cell.s = t.config.s;
            index.emplace(key.str(), grid.cells.size());
            grid.cells.push_back(std::move(cell));
            it = index.find(key.str());
        }
        SimCell& cell = grid.cells[it->second];
        cell.seeds += 1;
        if (t.ok) {
            cell.completed += 1;
            cell.rejections += t.reject ? 1 : 0;
            cell.mean_observed += t.observed;
            cell.mean_gap += t.gap;
        } else {
            cell.failures.push_back("seed " + std::to_string(t.config.seed) + ": " + t.message);
        }
    }
    for (auto& cell : grid.cells) {
        if (cell.completed > 0) {
            cell.rejection_rate = static_cast<double>(cell.rejections) / cell.completed;
            cell.mean_observed /= cell.completed;
            cell.mean_gap /= cell.completed;
            cell.wilson = wilson_interval(cell.rejections, cell.completed);
        } else {
            cell.rejection_rate = std::numeric_limits<double>::quiet_NaN();
            cell.mean_observed = std::numeric_limits<double>::quiet_NaN();
            cell.mean_gap = std::numeric_limits<double>::quiet_NaN();
        }
    }
    return grid;
}

}  // namespace

SimTaskResult run_sim_task(const SimConfig& cfg, const SimGridOptions& opts) {
    SimTaskResult res;
    res.config = cfg;
    res.split_mode = split_mode_name(opts.split_mode);
    try {
        SimDataset sd = simulate(cfg);
        SplitOptions so;
        so.v = opts.v;
        so.repeats = 1;
        so.stratify = opts.split_mode == SplitMode::subject_grouped ||
                      opts.split_mode == SplitMode::batch_blocked ||
                      opts.split_mode == SplitMode::combined;
        so.seed = derive_seed(cfg.seed, kSimTag, kStreamSplit);
        SplitPlan plan = make_split_plan(sd.data, opts.split_mode, so);

        LearnerSpec learner = LearnerSpec::parse(opts.learner);
        PreprocSpec preproc = PreprocSpec::parse(opts.preprocess);
        FitResult fit = fit_resample(sd.data, plan, learner, preproc, {MetricKind::auc},
                                     derive_seed(cfg.seed, kSimTag, kStreamFit),
                                     /*store_refit_data=*/false);

        AuditConfig ac;
        ac.metric = MetricKind::auc;
        ac.B = opts.B;
        ac.perm_refit = PermRefit::fixed;
        ac.seed = derive_seed(cfg.seed, kSimTag, kStreamAudit);
        PermGapResult pg = perm_gap(fit, sd.data, ac);

        res.observed = pg.observed;
        res.perm_mean = pg.perm_mean;
        res.gap = pg.gap;
        res.p_value = pg.p_value;
        res.reject = pg.p_value < opts.alpha;
        res.ok = true;
    } catch (const std::exception& e) {
        res.ok = false;
        res.message = e.what();
    }
    return res;
}

SimGrid run_grid(const std::vector<SimMechanism>& mechanisms, const std::vector<int>& ns,
                 const std::vector<int>& ps, const std::vector<double>& ss, int n_seeds,
                 const SimGridOptions& opts, const SimConfig& base) {
    if (n_seeds < 1) throw std::invalid_argument("run_grid needs at least one seed");
    std::vector<TaskSpec> specs;
    for (SimMechanism mech : mechanisms)
        for (int n : ns)
            for (int p : ps)
                for (double s : ss)
                    for (int seed = 1; seed <= n_seeds; ++seed) {
                        TaskSpec spec;
                        spec.cfg = base;
                        spec.cfg.mechanism = mech;
                        spec.cfg.n = n;
                        spec.cfg.p = p;
                        spec.cfg.s = s;
                        spec.cfg.seed = static_cast<std::uint64_t>(seed);
                        spec.mode = opts.split_mode;
                        specs.push_back(spec);
                    }
    return run_tasks(specs, opts);
}

SimGrid run_split_mode_grid(const std::vector<SplitMode>& modes,
                            const std::vector<SimMechanism>& mechanisms, int n_seeds,
                            const SimGridOptions& opts, const SimConfig& base) {
    if (n_seeds < 1) throw std::invalid_argument("run_split_mode_grid needs at least one seed");
    std::vector<TaskSpec> specs;
    for (SplitMode mode : modes)
        for (SimMechanism mech : mechanisms)
            for (int seed = 1; seed <= n_seeds; ++seed) {
                TaskSpec spec;
                spec.cfg = base;
                spec.cfg.mechanism = mech;
                spec.cfg.n = 500;
                spec.cfg.p = 20;
                spec.cfg.s = 0.0;
                spec.cfg.batches = opts.v;  // one batch per fold
                spec.cfg.seed = static_cast<std::uint64_t>(seed);
                spec.mode = mode;
                specs.push_back(spec);
            }
    return run_tasks(specs, opts);
}

std::string grid_table_csv(const SimGrid& grid) {
    std::ostringstream ss;
    ss << "mechanism,split_mode,n,p,s,seeds,completed,rejections,rejection_rate,"
          "wilson_lo,wilson_hi,mean_auc,mean_gap\n";
    for (const auto& c : grid.cells) {
        ss << mechanism_name(c.mechanism) << ',' << c.split_mode << ',' << c.n << ',' << c.p << ','
           << trimmed_double(c.s) << ',' << c.seeds << ',' << c.completed << ',' << c.rejections
           << ',' << trimmed_double(c.rejection_rate) << ',' << trimmed_double(c.wilson.lower)
           << ',' << trimmed_double(c.wilson.upper) << ',' << trimmed_double(c.mean_observed)
           << ',' << trimmed_double(c.mean_gap) << '\n';
    }
    return ss.str();
}

}  // namespace leakguard
