#pragma once

#include <string>
#include <vector>

#include "leakguard/dataset.hpp"

namespace leakguard {

enum class MetricKind { auc, accuracy, logloss, rmse, mae, r2 };

std::string metric_name(MetricKind m);
MetricKind metric_from_name(const std::string& s);
bool higher_is_better(MetricKind m);
bool metric_for_binary(MetricKind m);
// clip range for confidence intervals
void metric_range(MetricKind m, double& lo, double& hi);

// Mann-Whitney AUC via average ranks; NaN when either class is absent.
double auc_score(const std::vector<double>& scores, const std::vector<double>& labels01);

// single metric; NaN when undefined for the inputs
double metric_value(MetricKind m, const std::vector<double>& predictions,
                    const std::vector<double>& truth);

struct MetricValue {
    MetricKind metric = MetricKind::auc;
    double value = 0.0;
    int n_test = 0;
};

std::vector<MetricValue> metric_suite(TaskKind task, const std::vector<MetricKind>& requested,
                                      const std::vector<double>& predictions,
                                      const std::vector<double>& truth);

}  // namespace leakguard
