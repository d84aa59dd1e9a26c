#pragma once

// shared builders for the unit tests

#include <cmath>
#include <string>
#include <vector>

#include "leakguard/dataset.hpp"
#include "leakguard/rng.hpp"

namespace testutil {

struct SynthSpec {
    int n = 120;
    int rows_per_subject = 3;
    int batches = 6;
    int studies = 4;
    int p = 3;
    double beta = 0.8;       // signal on x1
    std::uint64_t seed = 1;
};

// subject/batch/study/t/y/x1..xp with a logistic signal on x1
inline leakguard::Dataset make_synth(const SynthSpec& s = {}) {
    using leakguard::Column;
    leakguard::Rng rng(s.seed);
    std::vector<std::string> subj(static_cast<std::size_t>(s.n));
    std::vector<std::string> batch(static_cast<std::size_t>(s.n));
    std::vector<std::string> study(static_cast<std::size_t>(s.n));
    std::vector<double> t(static_cast<std::size_t>(s.n));
    std::vector<std::string> y(static_cast<std::size_t>(s.n));
    std::vector<std::vector<double>> x(static_cast<std::size_t>(s.p),
                                       std::vector<double>(static_cast<std::size_t>(s.n)));
    for (int i = 0; i < s.n; ++i) {
        std::size_t ii = static_cast<std::size_t>(i);
        int sid = i / s.rows_per_subject;
        subj[ii] = "s" + std::to_string(sid);
        batch[ii] = "b" + std::to_string(sid % s.batches);
        study[ii] = "st" + std::to_string(sid % s.studies);
        t[ii] = i;
        for (int j = 0; j < s.p; ++j) x[static_cast<std::size_t>(j)][ii] = rng.normal();
        double eta = s.beta * x[0][ii];
        double pr = 1.0 / (1.0 + std::exp(-eta));
        y[ii] = rng.uniform01() < pr ? "1" : "0";
    }
    std::vector<Column> cols;
    cols.push_back(Column::categorical_col("subject", subj));
    cols.push_back(Column::categorical_col("batch", batch));
    cols.push_back(Column::categorical_col("study", study));
    cols.push_back(Column::numeric_col("t", t));
    cols.push_back(Column::categorical_col("y", y));
    for (int j = 0; j < s.p; ++j)
        cols.push_back(Column::numeric_col("x" + std::to_string(j + 1),
                                           std::move(x[static_cast<std::size_t>(j)])));
    leakguard::RoleMap roles;
    roles.outcome = "y";
    roles.positive_class = "1";
    roles.subject = "subject";
    roles.batch = "batch";
    roles.study = "study";
    roles.time = "t";
    return leakguard::Dataset::build(std::move(cols), std::move(roles));
}

}  // namespace testutil
