#include "leakguard/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace leakguard {

std::string metric_name(MetricKind m) {
    switch (m) {
        case MetricKind::auc: return "auc";
        case MetricKind::accuracy: return "accuracy";
        case MetricKind::logloss: return "logloss";
        case MetricKind::rmse: return "rmse";
        case MetricKind::mae: return "mae";
        case MetricKind::r2: return "r2";
    }
    throw std::logic_error("unknown metric");
}

MetricKind metric_from_name(const std::string& s) {
    if (s == "auc") return MetricKind::auc;
    if (s == "accuracy") return MetricKind::accuracy;
    if (s == "logloss") return MetricKind::logloss;
    if (s == "rmse") return MetricKind::rmse;
    if (s == "mae") return MetricKind::mae;
    if (s == "r2") return MetricKind::r2;
    throw std::invalid_argument("unknown metric '" + s + "'");
}

bool higher_is_better(MetricKind m) {
    switch (m) {
        case MetricKind::auc:
        case MetricKind::accuracy:
        case MetricKind::r2:
            return true;
        default:
            return false;
    }
}

bool metric_for_binary(MetricKind m) {
    switch (m) {
        case MetricKind::auc:
        case MetricKind::accuracy:
        case MetricKind::logloss:
            return true;
        default:
            return false;
    }
}

void metric_range(MetricKind m, double& lo, double& hi) {
    switch (m) {
        case MetricKind::auc:
        case MetricKind::accuracy:
            lo = 0.0;
            hi = 1.0;
            return;
        case MetricKind::logloss:
        case MetricKind::rmse:
        case MetricKind::mae:
            lo = 0.0;
            hi = std::numeric_limits<double>::infinity();
            return;
        case MetricKind::r2:
            lo = -std::numeric_limits<double>::infinity();
            hi = 1.0;
            return;
    }
}

double auc_score(const std::vector<double>& scores, const std::vector<double>& labels01) {
    std::size_t n = scores.size();
    if (n != labels01.size()) throw std::invalid_argument("auc: size mismatch");
    std::size_t n_pos = 0;
    for (double y : labels01)
        if (y > 0.5) ++n_pos;
    std::size_t n_neg = n - n_pos;
    if (n_pos == 0 || n_neg == 0) return std::nan("");

    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(),
              [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

    // average ranks over tied scores, then the rank-sum statistic
    double rank_sum_pos = 0.0;
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j + 1 < n && scores[idx[j + 1]] == scores[idx[i]]) ++j;
        double avg_rank = 0.5 * (static_cast<double>(i + 1) + static_cast<double>(j + 1));
        for (std::size_t k = i; k <= j; ++k)
            if (labels01[idx[k]] > 0.5) rank_sum_pos += avg_rank;
        i = j + 1;
    }
    double np = static_cast<double>(n_pos), nn = static_cast<double>(n_neg);
    return (rank_sum_pos - np * (np + 1.0) / 2.0) / (np * nn);
}

namespace {

double accuracy_score(const std::vector<double>& p, const std::vector<double>& y) {
    if (p.empty()) return std::nan("");
    double hits = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        double pred = p[i] > 0.5 ? 1.0 : 0.0;
        if (pred == y[i]) hits += 1.0;
    }
    return hits / static_cast<double>(p.size());
}

double logloss_score(const std::vector<double>& p, const std::vector<double>& y) {
    if (p.empty()) return std::nan("");
    double s = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        double pi = std::clamp(p[i], 1e-12, 1.0 - 1e-12);
        s += y[i] > 0.5 ? -std::log(pi) : -std::log(1.0 - pi);
    }
    return s / static_cast<double>(p.size());
}

double rmse_score(const std::vector<double>& p, const std::vector<double>& y) {
    if (p.empty()) return std::nan("");
    double s = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) s += (p[i] - y[i]) * (p[i] - y[i]);
    return std::sqrt(s / static_cast<double>(p.size()));
}

double mae_score(const std::vector<double>& p, const std::vector<double>& y) {
    if (p.empty()) return std::nan("");
    double s = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) s += std::fabs(p[i] - y[i]);
    return s / static_cast<double>(p.size());
}

double r2_score(const std::vector<double>& p, const std::vector<double>& y) {
    if (p.size() < 2) return std::nan("");
    double my = 0.0;
    for (double v : y) my += v;
    my /= static_cast<double>(y.size());
    double ss_res = 0.0, ss_tot = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        ss_res += (y[i] - p[i]) * (y[i] - p[i]);
        ss_tot += (y[i] - my) * (y[i] - my);
    }
    if (ss_tot <= 0.0) return std::nan("");
    return 1.0 - ss_res / ss_tot;
}

}  // namespace

double metric_value(MetricKind m, const std::vector<double>& predictions,
                    const std::vector<double>& truth) {
    if (predictions.size() != truth.size()) throw std::invalid_argument("metric: size mismatch");
    switch (m) {
        case MetricKind::auc: return auc_score(predictions, truth);
        case MetricKind::accuracy: return accuracy_score(predictions, truth);
        case MetricKind::logloss: return logloss_score(predictions, truth);
        case MetricKind::rmse: return rmse_score(predictions, truth);
        case MetricKind::mae: return mae_score(predictions, truth);
        case MetricKind::r2: return r2_score(predictions, truth);
    }
    return std::nan("");
}

std::vector<MetricValue> metric_suite(TaskKind task, const std::vector<MetricKind>& requested,
                                      const std::vector<double>& predictions,
                                      const std::vector<double>& truth) {
    std::vector<MetricValue> out;
    out.reserve(requested.size());
    for (MetricKind m : requested) {
        bool binary_metric = metric_for_binary(m);
        if ((task == TaskKind::binary_classification) != binary_metric)
            throw std::invalid_argument("metric '" + metric_name(m) + "' does not match the task kind");
        MetricValue mv;
        mv.metric = m;
        mv.value = metric_value(m, predictions, truth);
        mv.n_test = static_cast<int>(truth.size());
        out.push_back(mv);
    }
    return out;
}

}  // namespace leakguard
