#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "leakguard/sim.hpp"
#include "leakguard/stats.hpp"

using namespace leakguard;
namespace fs = std::filesystem;

namespace {

const std::vector<double>& numeric(const Dataset& ds, const std::string& name) {
    return ds.column(name).values;
}

double pearson(const std::vector<double>& a, const std::vector<double>& b) {
    double ma = mean_of(a), mb = mean_of(b);
    double num = 0.0, da = 0.0, db = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        num += (a[i] - ma) * (b[i] - mb);
        da += (a[i] - ma) * (a[i] - ma);
        db += (b[i] - mb) * (b[i] - mb);
    }
    return num / std::sqrt(da * db);
}

std::vector<std::string> column_names(const Dataset& ds) {
    std::vector<std::string> out;
    for (const auto& c : ds.columns()) out.push_back(c.name);
    return out;
}

void expect_invalid(const SimConfig& cfg, const std::string& needle) {
    try {
        simulate(cfg);
        FAIL("expected simulate to reject config, wanted message with '", needle, "'");
    } catch (const std::invalid_argument& e) {
        CHECK(std::string(e.what()).find(needle) != std::string::npos);
    }
}

SimGridOptions quick_opts(int b, int v) {
    SimGridOptions opts;
    opts.B = b;
    opts.v = v;
    opts.learner = "glm";
    return opts;
}

std::vector<std::string> split_lines(const std::string& text) {
    std::vector<std::string> out;
    std::istringstream ss(text);
    std::string line;
    while (std::getline(ss, line)) out.push_back(line);
    return out;
}

std::vector<std::string> split_fields(const std::string& line) {
    std::vector<std::string> out;
    std::istringstream ss(line);
    std::string field;
    while (std::getline(ss, field, ',')) out.push_back(field);
    return out;
}

}  // namespace

TEST_CASE("simulate validates its configuration") {
    SimConfig base;

    SimConfig c = base;
    c.n = 9;
    expect_invalid(c, "n >= 10");
    c = base;
    c.p = 0;
    expect_invalid(c, "p >= 1");
    c = base;
    c.s = -0.25;
    expect_invalid(c, "signal level s");
    c = base;
    c.batches = 1;
    expect_invalid(c, "2 batches");
    c = base;
    c.studies = 1;
    expect_invalid(c, "2 studies");
    c = base;
    c.ar_rho = 1.0;
    expect_invalid(c, "ar_rho");
    c = base;
    c.ar_rho = -0.2;
    expect_invalid(c, "ar_rho");
    c = base;
    c.peek_var = 0.0;
    expect_invalid(c, "peek_var");
    c = base;
    c.signal_features = 0;
    expect_invalid(c, "signal_features");
    c = base;
    c.lookahead_noise_sd = -1.0;
    expect_invalid(c, "lookahead_noise_sd");

    CHECK_THROWS_AS(mechanism_from_name("oracle"), std::invalid_argument);
    for (SimMechanism m : {SimMechanism::none, SimMechanism::subject_overlap,
                           SimMechanism::batch_confounded, SimMechanism::peek_norm,
                           SimMechanism::lookahead}) {
        CHECK(mechanism_from_name(mechanism_name(m)) == m);
    }
}

TEST_CASE("simulated datasets carry the expected columns and roles") {
    struct Case {
        SimMechanism mechanism;
        std::string leak;
    };
    const std::vector<Case> cases = {
        {SimMechanism::none, ""},
        {SimMechanism::subject_overlap, "subj_mean_y"},
        {SimMechanism::batch_confounded, "batch_mean_y"},
        {SimMechanism::peek_norm, "peek_y"},
        {SimMechanism::lookahead, "lookahead_biomarker"},
    };
    for (const auto& tc : cases) {
        CAPTURE(mechanism_name(tc.mechanism));
        SimConfig cfg;
        cfg.mechanism = tc.mechanism;
        cfg.n = 60;
        cfg.p = 4;
        cfg.seed = 7;
        SimDataset sd = simulate(cfg);

        CHECK(sd.data.n_rows() == 60);
        CHECK(sd.data.task() == TaskKind::binary_classification);
        CHECK(sd.data.roles().outcome == "y");
        CHECK(sd.data.roles().subject.value() == "subject");
        CHECK(sd.data.roles().batch.value() == "batch");
        CHECK(sd.data.roles().study.value() == "study");
        CHECK(sd.data.roles().time.value() == "time");
        CHECK(sd.data.positive_class() == "1");

        std::vector<std::string> want = {"subject", "batch", "study", "time",
                                         "y",       "x1",    "x2",    "x3",
                                         "x4"};
        std::vector<std::string> preds = {"x1", "x2", "x3", "x4"};
        if (!tc.leak.empty()) {
            want.push_back(tc.leak);
            preds.push_back(tc.leak);
            REQUIRE(sd.leak_columns.size() == 1);
            CHECK(sd.leak_columns[0] == tc.leak);
        } else {
            CHECK(sd.leak_columns.empty());
        }
        CHECK(column_names(sd.data) == want);
        CHECK(sd.data.predictor_names() == preds);

        // no planted signal at s = 0
        REQUIRE(sd.signal_coefficients.size() == 4);
        for (double b : sd.signal_coefficients) CHECK(b == 0.0);

        // subjects are contiguous blocks, studies follow subject boundaries
        const auto subj = sd.data.group_codes("subject");
        const auto study = sd.data.group_codes("study");
        CHECK(std::is_sorted(subj.begin(), subj.end()));
        CHECK(std::is_sorted(study.begin(), study.end()));
        std::vector<int> study_of_subject(20, -1);
        for (std::size_t r = 0; r < subj.size(); ++r) {
            int k = subj[r];
            if (study_of_subject[static_cast<std::size_t>(k)] < 0)
                study_of_subject[static_cast<std::size_t>(k)] = study[r];
            CHECK(study_of_subject[static_cast<std::size_t>(k)] == study[r]);
        }
        CHECK(sd.data.column("subject").levels.size() == 20);  // max(2, 60/3)
        CHECK(sd.data.column("study").levels.size() == 4);
        CHECK(sd.data.column("batch").levels.size() == 6);

        const auto& t = numeric(sd.data, "time");
        for (std::size_t r = 0; r < t.size(); ++r) CHECK(t[r] == static_cast<double>(r));
    }
}

TEST_CASE("signal coefficients and grouping overrides") {
    SimConfig cfg;
    cfg.n = 100;
    cfg.p = 6;
    cfg.s = 0.8;
    cfg.signal_features = 2;
    SimDataset sd = simulate(cfg);
    REQUIRE(sd.signal_coefficients.size() == 6);
    const double w = 0.8 / std::sqrt(2.0);
    CHECK(sd.signal_coefficients[0] == doctest::Approx(w));
    CHECK(sd.signal_coefficients[1] == doctest::Approx(w));
    for (std::size_t j = 2; j < 6; ++j) CHECK(sd.signal_coefficients[j] == 0.0);

    // more requested signal features than predictors: spread over all of them
    cfg.signal_features = 10;
    sd = simulate(cfg);
    for (double b : sd.signal_coefficients) CHECK(b == doctest::Approx(0.8 / std::sqrt(6.0)));

    // explicit subject count, near-equal contiguous blocks
    cfg.subjects = 7;
    sd = simulate(cfg);
    const auto subj = sd.data.group_codes("subject");
    CHECK(sd.data.column("subject").levels.size() == 7);
    std::vector<int> sizes(7, 0);
    for (int k : subj) sizes[static_cast<std::size_t>(k)]++;
    auto [lo, hi] = std::minmax_element(sizes.begin(), sizes.end());
    CHECK(*hi - *lo <= 1);

    // study count is capped by the subject count
    cfg.subjects = 3;
    cfg.studies = 4;
    sd = simulate(cfg);
    CHECK(sd.data.column("study").levels.size() == 3);
}

TEST_CASE("leak columns reproduce their construction") {
    SUBCASE("subject overlap column equals the per-subject outcome mean") {
        SimConfig cfg;
        cfg.mechanism = SimMechanism::subject_overlap;
        cfg.n = 90;
        cfg.p = 3;
        cfg.seed = 11;
        SimDataset sd = simulate(cfg);
        const auto subj = sd.data.group_codes("subject");
        const auto y = sd.data.outcome_values();
        std::vector<double> sum(30, 0.0), cnt(30, 0.0);
        for (std::size_t r = 0; r < y.size(); ++r) {
            sum[static_cast<std::size_t>(subj[r])] += y[r];
            cnt[static_cast<std::size_t>(subj[r])] += 1.0;
        }
        const auto& leak = numeric(sd.data, "subj_mean_y");
        for (std::size_t r = 0; r < y.size(); ++r)
            CHECK(leak[r] == sum[static_cast<std::size_t>(subj[r])] /
                                 cnt[static_cast<std::size_t>(subj[r])]);
    }

    SUBCASE("batch means match and assignment is outcome-skewed") {
        SimConfig cfg;
        cfg.mechanism = SimMechanism::batch_confounded;
        cfg.n = 300;
        cfg.p = 3;
        cfg.seed = 11;
        SimDataset sd = simulate(cfg);
        const auto batch = sd.data.group_codes("batch");
        const auto y = sd.data.outcome_values();
        std::vector<double> sum(6, 0.0), cnt(6, 0.0);
        for (std::size_t r = 0; r < y.size(); ++r) {
            sum[static_cast<std::size_t>(batch[r])] += y[r];
            cnt[static_cast<std::size_t>(batch[r])] += 1.0;
        }
        const auto& leak = numeric(sd.data, "batch_mean_y");
        for (std::size_t r = 0; r < y.size(); ++r)
            CHECK(leak[r] == sum[static_cast<std::size_t>(batch[r])] /
                                 cnt[static_cast<std::size_t>(batch[r])]);

        // cases pile into the low-index batches
        double case_code = 0.0, ctrl_code = 0.0, n_case = 0.0, n_ctrl = 0.0;
        for (std::size_t r = 0; r < y.size(); ++r) {
            if (y[r] > 0.5) {
                case_code += batch[r];
                n_case += 1.0;
            } else {
                ctrl_code += batch[r];
                n_ctrl += 1.0;
            }
        }
        CHECK(ctrl_code / n_ctrl - case_code / n_case > 0.8);
    }

    SUBCASE("peek column is the outcome plus bounded noise") {
        SimConfig cfg;
        cfg.mechanism = SimMechanism::peek_norm;
        cfg.n = 300;
        cfg.p = 3;
        cfg.seed = 11;
        SimDataset sd = simulate(cfg);
        const auto y = sd.data.outcome_values();
        const auto& peek = numeric(sd.data, "peek_y");
        std::vector<double> noise(y.size());
        for (std::size_t r = 0; r < y.size(); ++r) noise[r] = peek[r] - y[r];
        double sd_noise = sample_sd(noise);
        CHECK(sd_noise > 0.25);
        CHECK(sd_noise < 0.35);
        CHECK(pearson(peek, y) > 0.75);
    }

    SUBCASE("generator streams are independent of the mechanism") {
        SimConfig cfg;
        cfg.n = 80;
        cfg.p = 3;
        cfg.seed = 19;
        SimDataset plain = simulate(cfg);
        cfg.mechanism = SimMechanism::peek_norm;
        SimDataset peek = simulate(cfg);
        cfg.mechanism = SimMechanism::batch_confounded;
        SimDataset conf = simulate(cfg);

        CHECK(numeric(plain.data, "x1") == numeric(peek.data, "x1"));
        CHECK(plain.data.column("y").codes == peek.data.column("y").codes);
        CHECK(plain.data.column("batch").codes == peek.data.column("batch").codes);

        CHECK(numeric(plain.data, "x1") == numeric(conf.data, "x1"));
        CHECK(plain.data.column("y").codes == conf.data.column("y").codes);
        CHECK(plain.data.column("batch").codes != conf.data.column("batch").codes);
    }
}

TEST_CASE("lookahead column shifts the biomarker forward within subjects") {
    SimConfig cfg;
    cfg.mechanism = SimMechanism::lookahead;
    cfg.n = 120;
    cfg.p = 3;
    cfg.seed = 5;
    cfg.s = 2.0;
    cfg.lookahead_noise_sd = 0.1;
    cfg.subjects = 40;
    SimDataset sd = simulate(cfg);
    const auto subj = sd.data.group_codes("subject");
    const auto& v = numeric(sd.data, "lookahead_biomarker");

    // the last two rows of each subject both hold the final biomarker value
    int checked = 0;
    for (std::size_t r = 0; r + 1 < v.size(); ++r) {
        bool last_pair = subj[r] == subj[r + 1] &&
                         (r + 2 == v.size() || subj[r + 2] != subj[r + 1]);
        if (last_pair) {
            CHECK(v[r] == v[r + 1]);
            ++checked;
        }
    }
    CHECK(checked == 40);

    // with signal the column predicts the next row's outcome
    const auto y = sd.data.outcome_values();
    std::vector<double> va, yn;
    for (std::size_t r = 0; r + 1 < v.size(); ++r) {
        if (subj[r] != subj[r + 1]) continue;
        va.push_back(v[r]);
        yn.push_back(y[r + 1]);
    }
    CHECK(pearson(va, yn) > 0.35);

    // without signal it carries no outcome information
    SimConfig null_cfg = cfg;
    null_cfg.s = 0.0;
    null_cfg.n = 600;
    null_cfg.subjects = 0;
    SimDataset nd = simulate(null_cfg);
    CHECK(std::fabs(pearson(numeric(nd.data, "lookahead_biomarker"),
                            nd.data.outcome_values())) < 0.15);
}

TEST_CASE("simulation is deterministic in the seed") {
    SimConfig cfg;
    cfg.mechanism = SimMechanism::subject_overlap;
    cfg.n = 150;
    cfg.p = 5;
    cfg.s = 0.4;
    cfg.seed = 42;
    SimDataset a = simulate(cfg);
    SimDataset b = simulate(cfg);
    CHECK(a.data.content_hash() == b.data.content_hash());
    CHECK(a.signal_coefficients == b.signal_coefficients);

    cfg.seed = 43;
    SimDataset c = simulate(cfg);
    CHECK(a.data.content_hash() != c.data.content_hash());
}

TEST_CASE("run_sim_task audits a single dataset") {
    SimGridOptions opts = quick_opts(39, 4);

    SUBCASE("planted peek leak is flagged at the permutation floor") {
        SimConfig cfg;
        cfg.mechanism = SimMechanism::peek_norm;
        cfg.n = 120;
        cfg.p = 4;
        cfg.seed = 3;
        SimTaskResult res = run_sim_task(cfg, opts);
        REQUIRE(res.ok);
        CHECK(res.message.empty());
        CHECK(res.split_mode == "subject_grouped");
        CHECK(res.observed > 0.9);
        CHECK(res.gap == res.observed - res.perm_mean);
        CHECK(res.gap > 0.25);
        CHECK(res.p_value == doctest::Approx(1.0 / 40.0));
        CHECK(res.reject);

        SimTaskResult again = run_sim_task(cfg, opts);
        CHECK(again.observed == res.observed);
        CHECK(again.perm_mean == res.perm_mean);
        CHECK(again.p_value == res.p_value);
    }

    SUBCASE("clean generator stays quiet") {
        SimConfig cfg;
        cfg.n = 120;
        cfg.p = 4;
        cfg.seed = 3;
        SimTaskResult res = run_sim_task(cfg, opts);
        REQUIRE(res.ok);
        CHECK(res.observed > 0.3);
        CHECK(res.observed < 0.7);
        CHECK(res.p_value > 0.05);
        CHECK_FALSE(res.reject);
        CHECK(res.reject == (res.p_value < opts.alpha));
    }

    SUBCASE("generator errors are contained") {
        SimConfig cfg;
        cfg.n = 5;
        SimTaskResult res = run_sim_task(cfg, opts);
        CHECK_FALSE(res.ok);
        CHECK(res.message.find("n >= 10") != std::string::npos);
    }
}

TEST_CASE("run_grid aggregates cells and honors checkpoints") {
    const fs::path dir = fs::temp_directory_path() / "leakguard_sim_ckpt_test";
    fs::remove_all(dir);

    // B = 39 keeps the permutation floor 1/40 under alpha so leaks can reject
    SimGridOptions opts = quick_opts(39, 3);
    opts.checkpoint_dir = dir.string();

    const std::vector<SimMechanism> mechs = {SimMechanism::none, SimMechanism::peek_norm};
    SimGrid grid = run_grid(mechs, {100}, {3}, {0.0}, 2, opts);

    REQUIRE(grid.tasks.size() == 4);
    REQUIRE(grid.cells.size() == 2);
    CHECK(grid.cells[0].mechanism == SimMechanism::none);
    CHECK(grid.cells[1].mechanism == SimMechanism::peek_norm);

    for (const auto& cell : grid.cells) {
        CHECK(cell.split_mode == "subject_grouped");
        CHECK(cell.n == 100);
        CHECK(cell.p == 3);
        CHECK(cell.s == 0.0);
        CHECK(cell.seeds == 2);
        CHECK(cell.completed == 2);
        CHECK(cell.failures.empty());
        CHECK(cell.rejection_rate ==
              static_cast<double>(cell.rejections) / cell.completed);
        WilsonInterval w = wilson_interval(cell.rejections, cell.completed);
        CHECK(cell.wilson.lower == w.lower);
        CHECK(cell.wilson.upper == w.upper);
    }
    CHECK(grid.cells[1].rejections == 2);

    // cell means recompute from the task list
    double obs = 0.0;
    for (const auto& t : grid.tasks)
        if (t.config.mechanism == SimMechanism::none) obs += t.observed;
    CHECK(grid.cells[0].mean_observed == doctest::Approx(obs / 2.0).epsilon(1e-12));

    // one checkpoint per task, reused verbatim on the next run
    const fs::path first = dir / "none_subject_grouped_n100_p3_s0_seed1.json";
    const fs::path second = dir / "peek_norm_subject_grouped_n100_p3_s0_seed2.json";
    CHECK(fs::exists(first));
    CHECK(fs::exists(second));

    SimGrid rerun = run_grid(mechs, {100}, {3}, {0.0}, 2, opts);
    REQUIRE(rerun.tasks.size() == 4);
    for (std::size_t i = 0; i < 4; ++i) {
        CHECK(rerun.tasks[i].observed == grid.tasks[i].observed);
        CHECK(rerun.tasks[i].p_value == grid.tasks[i].p_value);
        CHECK(rerun.tasks[i].gap == grid.tasks[i].gap);
    }

    // a checkpoint edit shows up in the next run: files are trusted
    {
        std::ofstream out(first, std::ios::trunc);
        out << "{\"ok\": true, \"message\": \"\", \"observed\": 0.77, "
               "\"perm_mean\": 0.5, \"gap\": 0.27, \"p_value\": 0.123, "
               "\"reject\": false}\n";
    }
    // a corrupted checkpoint is recomputed
    {
        std::ofstream out(second, std::ios::trunc);
        out << "definitely not json\n";
    }
    SimGrid patched = run_grid(mechs, {100}, {3}, {0.0}, 2, opts);
    CHECK(patched.tasks[0].p_value == 0.123);
    CHECK(patched.tasks[0].observed == 0.77);
    CHECK(patched.tasks[3].p_value == grid.tasks[3].p_value);
    CHECK(patched.tasks[3].observed == grid.tasks[3].observed);
    {
        std::ifstream in(second);
        std::stringstream ss;
        ss << in.rdbuf();
        CHECK(ss.str().find("\"p_value\"") != std::string::npos);
    }

    CHECK_THROWS_AS(run_grid(mechs, {100}, {3}, {0.0}, 0, opts), std::invalid_argument);
    fs::remove_all(dir);
}

TEST_CASE("failed grid cells report their errors") {
    SimGridOptions opts = quick_opts(19, 3);
    SimGrid grid = run_grid({SimMechanism::none}, {5}, {3}, {0.0}, 2, opts);
    REQUIRE(grid.cells.size() == 1);
    const SimCell& cell = grid.cells[0];
    CHECK(cell.seeds == 2);
    CHECK(cell.completed == 0);
    CHECK(std::isnan(cell.rejection_rate));
    CHECK(std::isnan(cell.mean_observed));
    REQUIRE(cell.failures.size() == 2);
    CHECK(cell.failures[0].find("seed 1: ") != std::string::npos);
    CHECK(cell.failures[0].find("n >= 10") != std::string::npos);

    std::string csv = grid_table_csv(grid);
    auto lines = split_lines(csv);
    REQUIRE(lines.size() == 2);
    CHECK(lines[1].find("nan") != std::string::npos);
}

TEST_CASE("grid csv table lists one row per cell") {
    SimGridOptions opts = quick_opts(39, 3);
    SimGrid grid =
        run_grid({SimMechanism::none, SimMechanism::peek_norm}, {100}, {3}, {0.0}, 2, opts);
    std::string csv = grid_table_csv(grid);
    auto lines = split_lines(csv);
    REQUIRE(lines.size() == 3);
    CHECK(lines[0] ==
          "mechanism,split_mode,n,p,s,seeds,completed,rejections,rejection_rate,"
          "wilson_lo,wilson_hi,mean_auc,mean_gap");

    auto fields = split_fields(lines[2]);
    REQUIRE(fields.size() == 13);
    CHECK(fields[0] == "peek_norm");
    CHECK(fields[1] == "subject_grouped");
    CHECK(fields[2] == "100");
    CHECK(fields[3] == "3");
    CHECK(fields[4] == "0");
    CHECK(fields[5] == "2");
    CHECK(fields[6] == "2");
    CHECK(fields[7] == "2");
    CHECK(fields[8] == "1");
    double lo = std::stod(fields[9]), hi = std::stod(fields[10]);
    CHECK(lo >= 0.0);
    CHECK(lo <= 1.0);
    CHECK(hi <= 1.0);
    CHECK(lo < hi);
    CHECK(std::stod(fields[11]) > 0.9);
    CHECK(std::stod(fields[12]) > 0.25);
}

TEST_CASE("split mode grid pins the supplementary design") {
    SimGridOptions opts = quick_opts(39, 4);
    SimGrid grid = run_split_mode_grid({SplitMode::subject_grouped, SplitMode::batch_blocked},
                                       {SimMechanism::batch_confounded}, 1, opts);
    REQUIRE(grid.tasks.size() == 2);
    for (const auto& t : grid.tasks) {
        REQUIRE(t.ok);
        CHECK(t.config.n == 500);
        CHECK(t.config.p == 20);
        CHECK(t.config.s == 0.0);
        CHECK(t.config.batches == 4);  // one batch per fold
    }
    REQUIRE(grid.cells.size() == 2);
    CHECK(grid.cells[0].split_mode == "subject_grouped");
    CHECK(grid.cells[1].split_mode == "batch_blocked");

    // grouping only by subject lets the batch shortcut through; blocking on
    // batch holds it constant inside each test fold
    CHECK(grid.cells[0].rejections == 1);
    CHECK(grid.cells[1].rejections == 0);
    CHECK(grid.tasks[0].gap > grid.tasks[1].gap);

    CHECK_THROWS_AS(
        run_split_mode_grid({SplitMode::subject_grouped}, {SimMechanism::none}, 0, opts),
        std::invalid_argument);
}
