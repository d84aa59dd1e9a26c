#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "leakguard/dataset.hpp"

namespace leakguard {

enum class SplitMode { subject_grouped, batch_blocked, study_loocv, time_series, combined };

std::string split_mode_name(SplitMode m);
SplitMode split_mode_from_name(const std::string& s);

// horizon/purge/embargo are row counts in time order. horizon+purge widen the
// gap before each test block; embargo guards the trailing boundary (only
// reachable if a fold ever holds post-test training rows).
struct TimeParams {
    int horizon = 0;
    int purge = 0;
    int embargo = 0;
};

struct Fold {
    int repeat_index = 0;
    int fold_index = 0;
    std::vector<std::int32_t> train_rows;
    std::vector<std::int32_t> test_rows;
};

struct SplitOptions {
    int v = 5;
    int repeats = 1;
    bool stratify = false;
    bool nested = false;
    int inner_v = 3;
    std::uint64_t seed = 1;
    TimeParams time;
    // constituent constraints for combined mode (grouping modes only)
    std::vector<SplitMode> combine;
};

struct SplitPlan {
    SplitMode mode = SplitMode::subject_grouped;
    std::vector<SplitMode> combine;
    int v = 5;
    int repeats = 1;
    bool stratified = false;
    bool nested = false;
    int inner_v = 3;
    std::uint64_t seed = 1;
    int n_rows = 0;
    std::string group_col;  // resolved grouping column, empty for time_series
    std::string time_col;
    TimeParams time;
    std::vector<Fold> folds;
    // nested inner folds, parallel to `folds`; row ids are global
    std::vector<std::vector<Fold>> inner;
    // rows in time order (time_series only), needed to re-derive train sets
    std::vector<std::int32_t> time_order;
    std::string hash;  // sha256 of the canonical serialization, first 12 hex
};

SplitPlan make_split_plan(const Dataset& ds, SplitMode mode, const SplitOptions& opts = {});

// pure function of (mode, v, repeats, seed, fold membership)
std::string plan_hash(const SplitPlan& plan);

// Compact form: one fold id per row per repeat (1-based; 0 = never tested).
// Enough to rebuild explicit folds: complements for grouped modes, the
// forward-chaining rule plus time_order for time_series.
struct CompactPlan {
    SplitMode mode = SplitMode::subject_grouped;
    std::vector<SplitMode> combine;
    int v = 5;
    int repeats = 1;
    bool stratified = false;
    std::uint64_t seed = 1;
    int n_rows = 0;
    std::string group_col;
    std::string time_col;
    TimeParams time;
    std::vector<std::vector<std::int32_t>> fold_of;  // [repeat][row]
    std::vector<std::int32_t> time_order;
    std::string hash;
};

CompactPlan to_compact(const SplitPlan& plan);
SplitPlan expand_compact(const CompactPlan& compact);

struct OverlapReport {
    struct Straddle {
        std::string column;
        std::string group;
        int repeat_index = 0;
        int fold_index = 0;
    };
    struct TimeViolation {
        int repeat_index = 0;
        int fold_index = 0;
        std::int32_t train_row = 0;
        std::string detail;
    };
    std::vector<Straddle> straddles;
    std::vector<TimeViolation> time_violations;
    int train_test_overlap = 0;
    int rows_multiply_tested = 0;
    bool clean() const {
        return straddles.empty() && time_violations.empty() && train_test_overlap == 0 &&
               rows_multiply_tested == 0;
    }
};

// Checks fold hygiene against the dataset: group straddles for the given
// columns (defaults to the plan's own grouping roles), time ordering with the
// purge/horizon/embargo gaps, and structural row accounting.
OverlapReport overlap_check(const SplitPlan& plan, const Dataset& ds,
                            const std::vector<std::string>& group_columns = {});

// Grouping codes the plan was built on (connected components for combined
// mode). Throws for time_series plans, which have no grouping.
std::vector<std::int32_t> plan_group_codes(const SplitPlan& plan, const Dataset& ds);

}  // namespace leakguard
