#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "leakguard/resample.hpp"

namespace leakguard {

enum class Exchangeability { iid, blocked_time, by_group, within_batch };
std::string exchangeability_name(Exchangeability e);
Exchangeability exchangeability_from_name(const std::string& s);

// Per-repeat inflation scores, oriented so that positive means inflation.
struct DeltaVector {
    std::vector<double> deltas;    // paired case only
    std::vector<int> repeat_ids;   // 1-based repeats kept in both fits
    bool paired = false;
    bool higher_better = true;
    MetricKind metric = MetricKind::auc;
    std::vector<double> leaky_values;    // per-repeat summaries
    std::vector<double> guarded_values;
    double leaky_pooled = 0.0;
    double guarded_pooled = 0.0;
    std::vector<std::string> notes;
};

DeltaVector pair_fits(const FitResult& fit_leaky, const FitResult& fit_guarded, MetricKind metric);

struct HuberConfig {
    double k = 1.345;
    double scale_factor = 1.4826;
    int max_iter = 100;
    double tol = 1e-10;
};

// Huber M-location with the scale frozen at scale_factor * MAD; returns the
// median when the MAD is zero.
double huber_location(const std::vector<double>& deltas, const HuberConfig& cfg = {});

enum class BcaEstimator { mean, huber };

struct BcaInterval {
    bool available = false;
    std::string reason;
    double lo = 0.0;
    double hi = 0.0;
};

BcaInterval bca_interval(const std::vector<double>& deltas, BcaEstimator estimator, int m_boot,
                         double level, std::uint64_t seed, const HuberConfig& huber = {});

struct SignFlipResult {
    double t_observed = 0.0;
    double p_value = 1.0;
    std::string method;  // exact | monte_carlo | block
    long long m_flip = 0;  // assignments evaluated
    std::vector<std::string> notes;
};

// block_len < 1 picks ceil(sqrt(R)) for blocked_time
SignFlipResult sign_flip_test(const std::vector<double>& deltas, Exchangeability exchangeability,
                              int m_flip, std::uint64_t seed, int block_len = -1);

enum class InferenceTier { D_insufficient, C_signflip, B_signflip_ci, A_full_inference };
std::string tier_name(InferenceTier t);
InferenceTier tier_for(int r_eff, bool paired);

struct DeltaLsiOptions {
    MetricKind metric = MetricKind::auc;
    int m_boot = 2000;
    int m_flip = 10000;
    Exchangeability exchangeability = Exchangeability::iid;
    int block_len = -1;
    std::uint64_t seed = 1;
    HuberConfig huber;
};

struct DeltaLsiResult {
    double delta_metric = 0.0;  // arithmetic mean of deltas
    double delta_lsi = 0.0;     // Huber location
    BcaInterval ci_metric;
    BcaInterval ci_lsi;
    bool has_p = false;
    SignFlipResult sign_flip;
    InferenceTier tier = InferenceTier::D_insufficient;
    bool inference_ok = false;
    int r_eff = 0;
    bool paired = false;
    double leaky_pooled = 0.0;
    double guarded_pooled = 0.0;
    MetricKind metric = MetricKind::auc;
    Exchangeability requested_exchangeability = Exchangeability::iid;
    std::string effective_exchangeability;
    DeltaVector delta_vector;
    std::vector<std::string> notes;
};

DeltaLsiResult delta_lsi_from_deltas(const DeltaVector& dv, const DeltaLsiOptions& opts);
DeltaLsiResult delta_lsi(const FitResult& fit_leaky, const FitResult& fit_guarded,
                         const DeltaLsiOptions& opts);

}  // namespace leakguard
