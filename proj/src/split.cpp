#include "leakguard/split.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <numeric>
#include <set>
#include <sstream>
#include <stdexcept>

#include "leakguard/hash.hpp"
#include "leakguard/rng.hpp"

namespace leakguard {

std::string split_mode_name(SplitMode m) {
    switch (m) {
        case SplitMode::subject_grouped: return "subject_grouped";
        case SplitMode::batch_blocked: return "batch_blocked";
        case SplitMode::study_loocv: return "study_loocv";
        case SplitMode::time_series: return "time_series";
        case SplitMode::combined: return "combined";
    }
    throw std::logic_error("unknown split mode");
}

SplitMode split_mode_from_name(const std::string& s) {
    if (s == "subject_grouped") return SplitMode::subject_grouped;
    if (s == "batch_blocked") return SplitMode::batch_blocked;
    if (s == "study_loocv") return SplitMode::study_loocv;
    if (s == "time_series") return SplitMode::time_series;
    if (s == "combined") return SplitMode::combined;
    throw std::invalid_argument("unknown split mode '" + s + "'");
}

namespace {

constexpr std::uint64_t kGroupTag = 0x67726f7570ULL;  // stream tag: grouping
constexpr std::uint64_t kInnerTag = 0x696e6e6572ULL;  // stream tag: nested folds

std::string role_column_for(const Dataset& ds, SplitMode mode) {
    const RoleMap& roles = ds.roles();
    switch (mode) {
        case SplitMode::subject_grouped:
            if (!roles.subject) throw std::invalid_argument("subject_grouped requires a subject role column");
            return *roles.subject;
        case SplitMode::batch_blocked:
            if (!roles.batch) throw std::invalid_argument("batch_blocked requires a batch role column");
            return *roles.batch;
        case SplitMode::study_loocv:
            if (!roles.study) throw std::invalid_argument("study_loocv requires a study role column");
            return *roles.study;
        case SplitMode::time_series:
            if (!roles.time) throw std::invalid_argument("time_series requires a time role column");
            return *roles.time;
        case SplitMode::combined:
            return "";
    }
    return "";
}

// Union-find components across the constituent grouping columns; rows in a
// component must never straddle a train/test boundary.
std::vector<std::int32_t> combined_group_codes(const Dataset& ds,
                                               const std::vector<SplitMode>& parts) {
    std::size_t n = ds.n_rows();
    std::vector<std::int32_t> parent(n);
    std::iota(parent.begin(), parent.end(), 0);
    std::function<std::int32_t(std::int32_t)> find = [&](std::int32_t x) {
        while (parent[static_cast<std::size_t>(x)] != x) {
            parent[static_cast<std::size_t>(x)] = parent[static_cast<std::size_t>(parent[static_cast<std::size_t>(x)])];
            x = parent[static_cast<std::size_t>(x)];
        }
        return x;
    };
    auto unite = [&](std::int32_t a, std::int32_t b) {
        a = find(a);
        b = find(b);
        if (a != b) parent[static_cast<std::size_t>(std::max(a, b))] = std::min(a, b);
    };
    for (SplitMode part : parts) {
        if (part == SplitMode::time_series || part == SplitMode::combined)
            throw std::invalid_argument("combined mode accepts grouping constraints only");
        auto codes = ds.group_codes(role_column_for(ds, part));
        std::map<std::int32_t, std::int32_t> first_row;
        for (std::size_t i = 0; i < n; ++i) {
            auto [it, inserted] = first_row.emplace(codes[i], static_cast<std::int32_t>(i));
            if (!inserted) unite(it->second, static_cast<std::int32_t>(i));
        }
    }
    std::vector<std::int32_t> comp(n);
    std::map<std::int32_t, std::int32_t> relabel;
    for (std::size_t i = 0; i < n; ++i) {
        std::int32_t root = find(static_cast<std::int32_t>(i));
        auto [it, inserted] = relabel.emplace(root, static_cast<std::int32_t>(relabel.size()));
        comp[i] = it->second;
    }
    return comp;
}

struct GroupInfo {
    std::int32_t code = 0;
    std::vector<std::int32_t> rows;
    int positives = 0;
};

// Greedy bin packing of groups (largest first) into v folds, minimizing
// (fold size, prevalence deviation) lexicographically; ties among equally
// good folds and among equal-size groups are broken by the seeded stream.
std::vector<std::vector<std::int32_t>> assign_groups(const std::vector<GroupInfo>& groups,
                                                     int v, bool stratify,
                                                     double overall_prevalence, Rng& rng) {
    std::vector<std::size_t> order(groups.size());
    std::iota(order.begin(), order.end(), 0);
    rng.shuffle(order);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return groups[a].rows.size() > groups[b].rows.size();
    });

    std::vector<std::vector<std::int32_t>> fold_groups(static_cast<std::size_t>(v));
    std::vector<int> fold_rows(static_cast<std::size_t>(v), 0);
    std::vector<int> fold_pos(static_cast<std::size_t>(v), 0);
    std::vector<int> fold_order(static_cast<std::size_t>(v));
    std::iota(fold_order.begin(), fold_order.end(), 0);

    for (std::size_t gi : order) {
        const GroupInfo& g = groups[gi];
        rng.shuffle(fold_order);
        int best = -1;
        int best_rows = 0;
        double best_dev = 0.0;
        for (int f : fold_order) {
            std::size_t fs = static_cast<std::size_t>(f);
            int rows_after = fold_rows[fs] + static_cast<int>(g.rows.size());
            double dev_after = 0.0;
            if (stratify) {
                double prev_after = static_cast<double>(fold_pos[fs] + g.positives) / rows_after;
                dev_after = std::fabs(prev_after - overall_prevalence);
            }
            if (best < 0 || rows_after < best_rows ||
                (rows_after == best_rows && stratify && dev_after < best_dev - 1e-12)) {
                best = f;
                best_rows = rows_after;
                best_dev = dev_after;
            }
        }
        std::size_t bs = static_cast<std::size_t>(best);
        fold_groups[bs].push_back(g.code);
        fold_rows[bs] = best_rows;
        fold_pos[bs] += g.positives;
    }
    return fold_groups;
}

std::vector<Fold> grouped_folds(const std::vector<std::int32_t>& codes,
                                const std::vector<double>& y, TaskKind task,
                                const std::vector<std::int32_t>& rows, int v, int repeats,
                                bool stratify, std::uint64_t seed, int first_repeat = 0) {
    std::map<std::int32_t, GroupInfo> by_code;
    double positives = 0.0;
    for (std::int32_t r : rows) {
        std::size_t ri = static_cast<std::size_t>(r);
        GroupInfo& g = by_code[codes[ri]];
        g.code = codes[ri];
        g.rows.push_back(r);
        if (task == TaskKind::binary_classification && y[ri] > 0.5) {
            ++g.positives;
            ++positives;
        }
    }
    std::vector<GroupInfo> groups;
    groups.reserve(by_code.size());
    for (auto& [code, g] : by_code) groups.push_back(std::move(g));
    if (static_cast<int>(groups.size()) < v)
        throw std::invalid_argument("v=" + std::to_string(v) + " exceeds the number of groups (" +
                                    std::to_string(groups.size()) + ")");
    double prevalence = rows.empty() ? 0.0 : positives / static_cast<double>(rows.size());

    std::vector<Fold> folds;
    for (int rep = 0; rep < repeats; ++rep) {
        Rng rng(derive_seed(seed, static_cast<std::uint64_t>(first_repeat + rep), kGroupTag));
        auto fold_groups = assign_groups(groups, v, stratify, prevalence, rng);
        std::map<std::int32_t, int> fold_of_group;
        for (int f = 0; f < v; ++f)
            for (std::int32_t code : fold_groups[static_cast<std::size_t>(f)]) fold_of_group[code] = f;
        for (int f = 0; f < v; ++f) {
            Fold fold;
            fold.repeat_index = first_repeat + rep;
            fold.fold_index = f;
            for (std::int32_t r : rows) {
                if (fold_of_group[codes[static_cast<std::size_t>(r)]] == f)
                    fold.test_rows.push_back(r);
                else
                    fold.train_rows.push_back(r);
            }
            if (fold.test_rows.empty())
                throw std::invalid_argument("fold " + std::to_string(f + 1) +
                                            " received no groups; lower v or use more groups");
            folds.push_back(std::move(fold));
        }
    }
    return folds;
}

std::vector<std::int32_t> time_ordering(const Dataset& ds, const std::string& time_col,
                                        const std::vector<std::int32_t>& rows) {
    auto t = ds.numeric_values(time_col);
    for (std::int32_t r : rows)
        if (std::isnan(t[static_cast<std::size_t>(r)]))
            throw std::invalid_argument("time column '" + time_col + "' has missing values");
    std::vector<std::int32_t> order = rows;
    // ties keep insertion (row) order
    std::stable_sort(order.begin(), order.end(), [&](std::int32_t a, std::int32_t b) {
        return t[static_cast<std::size_t>(a)] < t[static_cast<std::size_t>(b)];
    });
    return order;
}

// Forward chaining: v test blocks over the last ceil(n*v/(v+1)) rows in time
// order; training rows are the strictly earlier rows minus the horizon+purge
// gap, minus any rows inside the trailing embargo window.
std::vector<Fold> time_series_folds(const std::vector<std::int32_t>& order, int v,
                                    const TimeParams& tp, int repeat_index = 0) {
    int n = static_cast<int>(order.size());
    int m = static_cast<int>(std::ceil(static_cast<double>(n) * v / (v + 1.0)));
    int start = n - m;
    if (start < 1)
        throw std::invalid_argument("time_series plan leaves no training rows before the first block");
    int base = m / v;
    int extra = m % v;
    if (base == 0) throw std::invalid_argument("v=" + std::to_string(v) + " exceeds the test region size");
    std::vector<Fold> folds;
    int pos = start;
    for (int f = 0; f < v; ++f) {
        int len = base + (f < extra ? 1 : 0);
        int test_begin = pos;
        int test_end = pos + len;  // exclusive
        pos = test_end;
        Fold fold;
        fold.repeat_index = repeat_index;
        fold.fold_index = f;
        int gap = tp.horizon + tp.purge;
        int train_end = std::max(0, test_begin - gap);
        for (int i = 0; i < train_end; ++i) fold.train_rows.push_back(order[static_cast<std::size_t>(i)]);
        for (int i = test_begin; i < test_end; ++i) fold.test_rows.push_back(order[static_cast<std::size_t>(i)]);
        // embargo window: would only matter if training ever followed the block
        for (int i = test_end; i < std::min(n, test_end + tp.embargo); ++i)
            (void)order[static_cast<std::size_t>(i)];
        if (fold.train_rows.empty())
            throw std::invalid_argument("fold " + std::to_string(f + 1) +
                                        " has no training rows after purge/horizon");
        folds.push_back(std::move(fold));
    }
    return folds;
}

std::vector<std::int32_t> all_rows(std::size_t n) {
    std::vector<std::int32_t> rows(n);
    std::iota(rows.begin(), rows.end(), 0);
    return rows;
}

void sort_rows(std::vector<Fold>& folds) {
    for (auto& f : folds) {
        std::sort(f.train_rows.begin(), f.train_rows.end());
        std::sort(f.test_rows.begin(), f.test_rows.end());
    }
}

}  // namespace

std::string plan_hash(const SplitPlan& plan) {
    std::ostringstream ss;
    ss << "mode=" << split_mode_name(plan.mode) << ";v=" << plan.v << ";repeats=" << plan.repeats
       << ";seed=" << plan.seed << ";";
    std::vector<const Fold*> ordered;
    ordered.reserve(plan.folds.size());
    for (const auto& f : plan.folds) ordered.push_back(&f);
    std::sort(ordered.begin(), ordered.end(), [](const Fold* a, const Fold* b) {
        if (a->repeat_index != b->repeat_index) return a->repeat_index < b->repeat_index;
        return a->fold_index < b->fold_index;
    });
    for (const Fold* f : ordered) {
        auto train = f->train_rows;
        auto test = f->test_rows;
        std::sort(train.begin(), train.end());
        std::sort(test.begin(), test.end());
        ss << f->repeat_index << "," << f->fold_index << ":train=";
        for (std::size_t i = 0; i < train.size(); ++i) ss << (i ? "," : "") << train[i];
        ss << ";test=";
        for (std::size_t i = 0; i < test.size(); ++i) ss << (i ? "," : "") << test[i];
        ss << ";";
    }
    return sha256_hex(ss.str()).substr(0, 12);
}

SplitPlan make_split_plan(const Dataset& ds, SplitMode mode, const SplitOptions& opts) {
    if (opts.v < 2 && mode != SplitMode::study_loocv)
        throw std::invalid_argument("v must be at least 2");
    if (opts.repeats < 1) throw std::invalid_argument("repeats must be at least 1");

    SplitPlan plan;
    plan.mode = mode;
    plan.combine = opts.combine;
    plan.v = opts.v;
    plan.repeats = opts.repeats;
    plan.stratified = opts.stratify;
    plan.nested = opts.nested;
    plan.inner_v = opts.inner_v;
    plan.seed = opts.seed;
    plan.n_rows = static_cast<int>(ds.n_rows());
    plan.time = opts.time;

    auto rows = all_rows(ds.n_rows());
    auto y = ds.outcome_values();

    std::vector<std::int32_t> codes;
    switch (mode) {
        case SplitMode::subject_grouped:
        case SplitMode::batch_blocked: {
            plan.group_col = role_column_for(ds, mode);
            codes = ds.group_codes(plan.group_col);
            plan.folds = grouped_folds(codes, y, ds.task(), rows, plan.v, plan.repeats,
                                       plan.stratified, plan.seed);
            break;
        }
        case SplitMode::study_loocv: {
            plan.group_col = role_column_for(ds, mode);
            if (opts.repeats != 1)
                throw std::invalid_argument("study_loocv is deterministic; repeats must be 1");
            codes = ds.group_codes(plan.group_col);
            std::int32_t n_studies = 0;
            for (std::int32_t c : codes) n_studies = std::max(n_studies, c + 1);
            if (n_studies < 2) throw std::invalid_argument("study_loocv needs at least 2 studies");
            plan.v = n_studies;
            for (std::int32_t s = 0; s < n_studies; ++s) {
                Fold fold;
                fold.repeat_index = 0;
                fold.fold_index = s;
                for (std::int32_t r : rows) {
                    if (codes[static_cast<std::size_t>(r)] == s) fold.test_rows.push_back(r);
                    else fold.train_rows.push_back(r);
                }
                plan.folds.push_back(std::move(fold));
            }
            break;
        }
        case SplitMode::time_series: {
            plan.time_col = role_column_for(ds, mode);
            if (opts.repeats != 1)
                throw std::invalid_argument("time_series is deterministic; repeats must be 1");
            plan.time_order = time_ordering(ds, plan.time_col, rows);
            plan.folds = time_series_folds(plan.time_order, plan.v, plan.time);
            break;
        }
        case SplitMode::combined: {
            if (opts.combine.empty())
                throw std::invalid_argument("combined mode needs at least one constituent constraint");
            codes = combined_group_codes(ds, opts.combine);
            plan.folds = grouped_folds(codes, y, ds.task(), rows, plan.v, plan.repeats,
                                       plan.stratified, plan.seed);
            break;
        }
    }
    sort_rows(plan.folds);

    if (opts.nested) {
        if (mode == SplitMode::time_series)
            throw std::invalid_argument("nested tuning is not supported for time_series plans");
        plan.inner.resize(plan.folds.size());
        for (std::size_t k = 0; k < plan.folds.size(); ++k) {
            const Fold& outer = plan.folds[k];
            std::uint64_t inner_seed = derive_seed(plan.seed,
                                                   static_cast<std::uint64_t>(outer.repeat_index),
                                                   static_cast<std::uint64_t>(outer.fold_index),
                                                   kInnerTag);
            auto inner = grouped_folds(codes, y, ds.task(), outer.train_rows, opts.inner_v, 1,
                                       plan.stratified, inner_seed);
            for (auto& f : inner) {
                f.repeat_index = outer.repeat_index;
            }
            sort_rows(inner);
            plan.inner[k] = std::move(inner);
        }
    }

    plan.hash = plan_hash(plan);
    return plan;
}

CompactPlan to_compact(const SplitPlan& plan) {
    CompactPlan c;
    c.mode = plan.mode;
    c.combine = plan.combine;
    c.v = plan.v;
    c.repeats = plan.repeats;
    c.stratified = plan.stratified;
    c.seed = plan.seed;
    c.n_rows = plan.n_rows;
    c.group_col = plan.group_col;
    c.time_col = plan.time_col;
    c.time = plan.time;
    c.time_order = plan.time_order;
    c.hash = plan.hash;
    c.fold_of.assign(static_cast<std::size_t>(plan.repeats),
                     std::vector<std::int32_t>(static_cast<std::size_t>(plan.n_rows), 0));
    for (const auto& f : plan.folds)
        for (std::int32_t r : f.test_rows)
            c.fold_of[static_cast<std::size_t>(f.repeat_index)][static_cast<std::size_t>(r)] =
                f.fold_index + 1;
    return c;
}

SplitPlan expand_compact(const CompactPlan& c) {
    SplitPlan plan;
    plan.mode = c.mode;
    plan.combine = c.combine;
    plan.v = c.v;
    plan.repeats = c.repeats;
    plan.stratified = c.stratified;
    plan.seed = c.seed;
    plan.n_rows = c.n_rows;
    plan.group_col = c.group_col;
    plan.time_col = c.time_col;
    plan.time = c.time;
    plan.time_order = c.time_order;

    if (c.mode == SplitMode::time_series) {
        if (static_cast<int>(c.time_order.size()) != c.n_rows)
            throw std::invalid_argument("compact time_series plan is missing its time ordering");
        plan.folds = time_series_folds(c.time_order, c.v, c.time);
        // cross-check membership against the stored vector
        for (const auto& f : plan.folds)
            for (std::int32_t r : f.test_rows)
                if (c.fold_of.at(0).at(static_cast<std::size_t>(r)) != f.fold_index + 1)
                    throw std::invalid_argument("compact plan fold vector does not match its forward-chaining layout");
    } else {
        for (int rep = 0; rep < c.repeats; ++rep) {
            const auto& fo = c.fold_of.at(static_cast<std::size_t>(rep));
            std::int32_t v_seen = 0;
            for (std::int32_t r = 0; r < c.n_rows; ++r) v_seen = std::max(v_seen, fo[static_cast<std::size_t>(r)]);
            for (std::int32_t f = 1; f <= v_seen; ++f) {
                Fold fold;
                fold.repeat_index = rep;
                fold.fold_index = f - 1;
                for (std::int32_t r = 0; r < c.n_rows; ++r) {
                    if (fo[static_cast<std::size_t>(r)] == f) fold.test_rows.push_back(r);
                    else fold.train_rows.push_back(r);
                }
                plan.folds.push_back(std::move(fold));
            }
        }
    }
    sort_rows(plan.folds);
    plan.hash = plan_hash(plan);
    if (!c.hash.empty() && c.hash != plan.hash)
        throw std::invalid_argument("compact plan hash " + c.hash +
                                    " does not match expanded membership hash " + plan.hash);
    return plan;
}

std::vector<std::int32_t> plan_group_codes(const SplitPlan& plan, const Dataset& ds) {
    if (plan.mode == SplitMode::time_series)
        throw std::invalid_argument("time_series plans have no grouping structure");
    if (plan.mode == SplitMode::combined) return combined_group_codes(ds, plan.combine);
    return ds.group_codes(plan.group_col);
}

OverlapReport overlap_check(const SplitPlan& plan, const Dataset& ds,
                            const std::vector<std::string>& group_columns) {
    OverlapReport report;
    std::vector<std::string> cols = group_columns;
    if (cols.empty()) {
        if (!plan.group_col.empty() && plan.mode != SplitMode::time_series)
            cols.push_back(plan.group_col);
        if (plan.mode == SplitMode::combined)
            for (SplitMode part : plan.combine) cols.push_back(role_column_for(ds, part));
    }
    std::sort(cols.begin(), cols.end());
    cols.erase(std::unique(cols.begin(), cols.end()), cols.end());

    for (const auto& col : cols) {
        auto codes = ds.group_codes(col);
        auto labels = ds.group_labels(col);
        for (const auto& f : plan.folds) {
            std::set<std::int32_t> train_groups, test_groups;
            for (std::int32_t r : f.train_rows) train_groups.insert(codes[static_cast<std::size_t>(r)]);
            for (std::int32_t r : f.test_rows) test_groups.insert(codes[static_cast<std::size_t>(r)]);
            for (std::int32_t g : test_groups) {
                if (train_groups.count(g)) {
                    report.straddles.push_back({col,
                                                static_cast<std::size_t>(g) < labels.size()
                                                    ? labels[static_cast<std::size_t>(g)]
                                                    : std::to_string(g),
                                                f.repeat_index, f.fold_index});
                }
            }
        }
    }

    if (plan.mode == SplitMode::time_series && !plan.time_order.empty()) {
        std::vector<int> order_pos(static_cast<std::size_t>(plan.n_rows), -1);
        for (std::size_t i = 0; i < plan.time_order.size(); ++i)
            order_pos[static_cast<std::size_t>(plan.time_order[i])] = static_cast<int>(i);
        int gap = plan.time.horizon + plan.time.purge;
        for (const auto& f : plan.folds) {
            int test_begin = plan.n_rows, test_end = -1;
            for (std::int32_t r : f.test_rows) {
                test_begin = std::min(test_begin, order_pos[static_cast<std::size_t>(r)]);
                test_end = std::max(test_end, order_pos[static_cast<std::size_t>(r)]);
            }
            for (std::int32_t r : f.train_rows) {
                int p = order_pos[static_cast<std::size_t>(r)];
                if (p >= test_begin - gap && p <= test_end + plan.time.embargo) {
                    std::string why = p >= test_begin && p <= test_end ? "inside the test block"
                                      : p < test_begin ? "inside the purge/horizon gap"
                                                       : "inside the embargo window";
                    report.time_violations.push_back({f.repeat_index, f.fold_index, r, why});
                }
            }
        }
    }

    std::map<int, std::vector<int>> tested_per_repeat;
    for (const auto& f : plan.folds) {
        std::set<std::int32_t> train(f.train_rows.begin(), f.train_rows.end());
        for (std::int32_t r : f.test_rows)
            if (train.count(r)) ++report.train_test_overlap;
        auto& tested = tested_per_repeat[f.repeat_index];
        tested.resize(static_cast<std::size_t>(plan.n_rows), 0);
        for (std::int32_t r : f.test_rows) ++tested[static_cast<std::size_t>(r)];
    }
    for (auto& [rep, tested] : tested_per_repeat)
        for (int cnt : tested)
            if (cnt > 1) ++report.rows_multiply_tested;
    return report;
}

}  // namespace leakguard
