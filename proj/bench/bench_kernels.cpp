// Timing comparison of the serial reference path (LEAKGUARD_THREADS=1)
// against the OpenMP path for the randomized kernels. Each kernel prints a
// checksum so runs can be compared for bit-identity across thread counts.

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <string>
#include <vector>

#include "leakguard/audit.hpp"
#include "leakguard/delta_lsi.hpp"
#include "leakguard/parallel.hpp"
#include "leakguard/resample.hpp"
#include "leakguard/rng.hpp"
#include "leakguard/sim.hpp"

using namespace leakguard;

namespace {

double now_ms() {
    using clock = std::chrono::steady_clock;
    return std::chrono::duration<double, std::milli>(clock::now().time_since_epoch()).count();
}

struct Timed {
    double ms = 0.0;
    double checksum = 0.0;
};

template <typename F>
Timed timed(F&& f) {
    double t0 = now_ms();
    double checksum = f();
    return {now_ms() - t0, checksum};
}

void report(const std::string& name, const Timed& serial, const Timed& parallel, int threads) {
    std::printf("%-28s serial %9.1f ms   threads=%d %9.1f ms   speedup %5.2fx   %s\n",
                name.c_str(), serial.ms, threads, parallel.ms,
                parallel.ms > 0 ? serial.ms / parallel.ms : 0.0,
                serial.checksum == parallel.checksum ? "identical" : "MISMATCH");
}

void set_threads(int n) {
    if (n <= 0)
        unsetenv("LEAKGUARD_THREADS");
    else
        setenv("LEAKGUARD_THREADS", std::to_string(n).c_str(), 1);
}

template <typename F>
void compare(const std::string& name, F&& f) {
    set_threads(1);
    Timed serial = timed(f);
    set_threads(0);
    int threads = worker_count();
    Timed par = timed(f);
    report(name, serial, par, threads);
}

}  // namespace

int main() {
    SimConfig cfg;
    cfg.mechanism = SimMechanism::peek_norm;
    cfg.n = 400;
    cfg.p = 20;
    cfg.s = 0.3;
    cfg.seed = 7;
    SimDataset sim = simulate(cfg);

    SplitOptions sopts;
    sopts.v = 5;
    sopts.repeats = 2;
    sopts.seed = 7;
    SplitPlan plan = make_split_plan(sim.data, SplitMode::subject_grouped, sopts);
    FitResult fit = fit_resample(sim.data, plan, LearnerSpec::parse("glmnet:alpha=0.9"),
                                 PreprocSpec::parse("impute=median,normalize=zscore"),
                                 {MetricKind::auc}, 7);

    compare("perm_gap fixed B=1000", [&] {
        AuditConfig a;
        a.B = 1000;
        a.perm_refit = PermRefit::fixed;
        a.seed = 11;
        PermGapResult r = perm_gap(fit, sim.data, a);
        return r.perm_mean + r.p_value;
    });

    std::vector<double> deltas;
    Rng rng(123);
    for (int i = 0; i < 20; ++i) deltas.push_back(0.15 + 0.03 * rng.normal());

    compare("bca bootstrap M=20000", [&] {
        BcaInterval ci = bca_interval(deltas, BcaEstimator::huber, 20000, 0.95, 13);
        return ci.lo + ci.hi;
    });

    compare("sign flip MC M=200000", [&] {
        std::vector<double> d25 = deltas;
        for (int i = 0; i < 5; ++i) d25.push_back(0.1 + 0.01 * i);
        SignFlipResult r = sign_flip_test(d25, Exchangeability::iid, 200000, 17);
        return r.p_value + r.t_observed;
    });

    compare("multivariate scan B=400", [&] {
        TargetScanMultivariate r =
            target_scan_multivariate(sim.data, sim.data.predictor_names(), -1, 5, 400, 19);
        return r.observed_auc + r.p_value;
    });

    compare("sim grid 4 tasks", [&] {
        SimGridOptions g;
        g.B = 100;
        SimGrid grid = run_grid({SimMechanism::none}, {200}, {10}, {0.0}, 4, g);
        double acc = 0.0;
        for (const auto& t : grid.tasks) acc += t.p_value;
        return acc;
    });

    return 0;
}
