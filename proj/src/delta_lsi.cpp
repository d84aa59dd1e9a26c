#include "leakguard/delta_lsi.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <stdexcept>

#include "leakguard/parallel.hpp"
#include "leakguard/rng.hpp"
#include "leakguard/stats.hpp"

namespace leakguard {

namespace {

constexpr std::uint64_t kBootTag = 0x626f6f74;
constexpr std::uint64_t kFlipTag = 0x666c6970;

double nan_value() { return std::numeric_limits<double>::quiet_NaN(); }

bool metric_requested(const FitResult& fit, MetricKind m) {
    return std::find(fit.metrics.begin(), fit.metrics.end(), m) != fit.metrics.end();
}

}  // namespace

std::string exchangeability_name(Exchangeability e) {
    switch (e) {
        case Exchangeability::iid: return "iid";
        case Exchangeability::blocked_time: return "blocked_time";
        case Exchangeability::by_group: return "by_group";
        case Exchangeability::within_batch: return "within_batch";
    }
    return "iid";
}

Exchangeability exchangeability_from_name(const std::string& s) {
    if (s == "iid") return Exchangeability::iid;
    if (s == "blocked_time") return Exchangeability::blocked_time;
    if (s == "by_group") return Exchangeability::by_group;
    if (s == "within_batch") return Exchangeability::within_batch;
    throw std::invalid_argument("unknown exchangeability: " + s +
                                " (expected iid, blocked_time, by_group, or within_batch)");
}

DeltaVector pair_fits(const FitResult& fit_leaky, const FitResult& fit_guarded, MetricKind metric) {
    if (!metric_requested(fit_leaky, metric))
        throw std::invalid_argument("metric " + metric_name(metric) + " was not computed in the leaky fit");
    if (!metric_requested(fit_guarded, metric))
        throw std::invalid_argument("metric " + metric_name(metric) + " was not computed in the guarded fit");

    DeltaVector dv;
    dv.metric = metric;
    dv.higher_better = higher_is_better(metric);
    dv.paired = !fit_leaky.plan.hash.empty() && fit_leaky.plan.hash == fit_guarded.plan.hash;

    RepeatSummary leaky = aggregate_repeats(fit_leaky, metric);
    RepeatSummary guarded = aggregate_repeats(fit_guarded, metric);

    if (dv.paired) {
        std::map<int, double> gv;
        for (std::size_t i = 0; i < guarded.repeat_index.size(); ++i)
            gv[guarded.repeat_index[i]] = guarded.value[i];
        for (std::size_t i = 0; i < leaky.repeat_index.size(); ++i) {
            auto it = gv.find(leaky.repeat_index[i]);
            if (it == gv.end()) continue;
            double raw = leaky.value[i] - it->second;
            dv.deltas.push_back(dv.higher_better ? raw : -raw);
            dv.repeat_ids.push_back(leaky.repeat_index[i] + 1);
            dv.leaky_values.push_back(leaky.value[i]);
            dv.guarded_values.push_back(it->second);
        }
        int dropped = static_cast<int>(std::max(leaky.value.size(), guarded.value.size()) -
                                       dv.deltas.size());
        if (dropped > 0)
            dv.notes.push_back(std::to_string(dropped) +
                               " repeat(s) lacked a valid summary in one arm and were dropped");
    } else {
        dv.leaky_values = leaky.value;
        dv.guarded_values = guarded.value;
        dv.notes.push_back("fold structures differ (plan hash " + fit_leaky.plan.hash + " vs " +
                           fit_guarded.plan.hash + "); fits are unpaired");
    }
    dv.leaky_pooled = dv.leaky_values.empty() ? nan_value() : mean_of(dv.leaky_values);
    dv.guarded_pooled = dv.guarded_values.empty() ? nan_value() : mean_of(dv.guarded_values);
    return dv;
}

double huber_location(const std::vector<double>& deltas, const HuberConfig& cfg) {
    if (deltas.empty()) throw std::invalid_argument("huber_location needs at least one delta");
    if (cfg.k <= 0.0) throw std::invalid_argument("huber k must be positive");
    double med = median_of(deltas);
    double scale = cfg.scale_factor * mad_of(deltas);
    if (scale <= 0.0) return med;

    double mu = med;
    for (int it = 0; it < cfg.max_iter; ++it) {
        double wsum = 0.0, wx = 0.0;
        for (double d : deltas) {
            double r = std::fabs(d - mu);
            double w = r <= cfg.k * scale ? 1.0 : cfg.k * scale / r;
            wsum += w;
            wx += w * d;
        }
        double next = wx / wsum;
        if (std::fabs(next - mu) < cfg.tol) return next;
        mu = next;
    }
    return mu;
}

BcaInterval bca_interval(const std::vector<double>& deltas, BcaEstimator estimator, int m_boot,
                         double level, std::uint64_t seed, const HuberConfig& huber) {
    BcaInterval out;
    const std::size_t R = deltas.size();
    if (R < 10) {
        out.reason = "needs at least 10 paired repeats, have " + std::to_string(R);
        return out;
    }
    if (m_boot < 2) throw std::invalid_argument("m_boot must be at least 2");
    if (!(level > 0.0 && level < 1.0)) throw std::invalid_argument("level must lie in (0, 1)");

    auto point = [&](const std::vector<double>& v) {
        return estimator == BcaEstimator::mean ? mean_of(v) : huber_location(v, huber);
    };
    const double theta = point(deltas);

    std::vector<double> boot(static_cast<std::size_t>(m_boot));
    parallel_for(boot.size(), [&](std::size_t b) {
        Rng rng(derive_seed(seed, static_cast<std::uint64_t>(b), kBootTag));
        std::vector<double> sample(R);
        for (std::size_t i = 0; i < R; ++i)
            sample[i] = deltas[rng.below(static_cast<std::uint64_t>(R))];
        boot[b] = point(sample);
    });
    std::sort(boot.begin(), boot.end());
    if (boot.front() == boot.back()) {
        out.available = true;
        out.lo = out.hi = theta;
        out.reason = "degenerate bootstrap distribution";
        return out;
    }

    double below = 0.0;
    for (double b : boot)
        if (b < theta) below += 1.0;
    double frac = below / static_cast<double>(m_boot);
    frac = std::min(std::max(frac, 0.5 / m_boot), 1.0 - 0.5 / m_boot);
    double z0 = normal_quantile(frac);

    // jackknife acceleration
    std::vector<double> jack(R);
    std::vector<double> loo(R - 1);
    for (std::size_t i = 0; i < R; ++i) {
        loo.clear();
        for (std::size_t j = 0; j < R; ++j)
            if (j != i) loo.push_back(deltas[j]);
        jack[i] = point(loo);
    }
    double jmean = mean_of(jack);
    double num = 0.0, den = 0.0;
    for (double j : jack) {
        double d = jmean - j;
        num += d * d * d;
        den += d * d;
    }
    double a = den > 0.0 ? num / (6.0 * std::pow(den, 1.5)) : 0.0;

    double alpha = (1.0 - level) / 2.0;
    auto adjusted = [&](double q) {
        double z = normal_quantile(q);
        double denom = 1.0 - a * (z0 + z);
        if (denom <= 0.0) return z0 + z > 0.0 ? 1.0 : 0.0;
        double val = normal_cdf(z0 + (z0 + z) / denom);
        return std::min(std::max(val, 0.0), 1.0);
    };
    double a1 = adjusted(alpha);
    double a2 = adjusted(1.0 - alpha);
    out.lo = quantile7(boot, a1);
    out.hi = quantile7(boot, a2);
    if (out.lo > out.hi) std::swap(out.lo, out.hi);
    // the interval always brackets the point estimate
    out.lo = std::min(out.lo, theta);
    out.hi = std::max(out.hi, theta);
    out.available = true;
    return out;
}

SignFlipResult sign_flip_test(const std::vector<double>& deltas, Exchangeability exchangeability,
                              int m_flip, std::uint64_t seed, int block_len) {
    if (deltas.empty()) throw std::invalid_argument("sign_flip_test needs at least one delta");
    SignFlipResult res;
    const std::size_t R = deltas.size();

    Exchangeability effective = exchangeability;
    if (exchangeability == Exchangeability::by_group ||
        exchangeability == Exchangeability::within_batch) {
        res.notes.push_back(exchangeability_name(exchangeability) +
                            " randomization falls back to the iid procedure");
        effective = Exchangeability::iid;
    }

    // flip units: singletons for iid, contiguous blocks for blocked_time
    std::vector<std::pair<std::size_t, std::size_t>> units;  // [begin, end)
    if (effective == Exchangeability::blocked_time) {
        std::size_t len = block_len > 0 ? static_cast<std::size_t>(block_len)
                                        : static_cast<std::size_t>(
                                              std::ceil(std::sqrt(static_cast<double>(R))));
        len = std::max<std::size_t>(1, std::min(len, R));
        for (std::size_t b = 0; b < R; b += len) units.emplace_back(b, std::min(b + len, R));
    } else {
        for (std::size_t i = 0; i < R; ++i) units.emplace_back(i, i + 1);
    }
    const std::size_t U = units.size();

    double t_obs = 0.0;
    for (double d : deltas) t_obs += d;
    t_obs /= static_cast<double>(R);
    res.t_observed = t_obs;

    auto stat_for_mask = [&](std::uint64_t mask) {
        double s = 0.0;
        for (std::size_t u = 0; u < U; ++u) {
            double sign = (mask >> u) & 1ULL ? -1.0 : 1.0;
            for (std::size_t i = units[u].first; i < units[u].second; ++i) s += sign * deltas[i];
        }
        return s / static_cast<double>(R);
    };

    if (U <= 15) {
        const std::uint64_t total = 1ULL << U;
        long long extreme = 0;
        for (std::uint64_t mask = 0; mask < total; ++mask)
            if (stat_for_mask(mask) >= t_obs) ++extreme;
        res.p_value = static_cast<double>(extreme) / static_cast<double>(total);
        res.m_flip = static_cast<long long>(total);
        res.method = effective == Exchangeability::blocked_time ? "block" : "exact";
    } else {
        if (m_flip < 1) throw std::invalid_argument("m_flip must be at least 1");
        std::vector<std::uint8_t> hits(static_cast<std::size_t>(m_flip), 0);
        parallel_for(hits.size(), [&](std::size_t b) {
            Rng rng(derive_seed(seed, static_cast<std::uint64_t>(b), kFlipTag));
            std::uint64_t mask = 0;
            for (std::size_t u = 0; u < U; ++u)
                if (rng.uniform01() < 0.5) mask |= 1ULL << u;
            if (stat_for_mask(mask) >= t_obs) hits[b] = 1;
        });
        long long extreme = std::accumulate(hits.begin(), hits.end(), 0LL);
        res.p_value = (static_cast<double>(extreme) + 1.0) / (static_cast<double>(m_flip) + 1.0);
        res.m_flip = m_flip;
        res.method = effective == Exchangeability::blocked_time ? "block" : "monte_carlo";
    }
    return res;
}

std::string tier_name(InferenceTier t) {
    switch (t) {
        case InferenceTier::D_insufficient: return "D_insufficient";
        case InferenceTier::C_signflip: return "C_signflip";
        case InferenceTier::B_signflip_ci: return "B_signflip_ci";
        case InferenceTier::A_full_inference: return "A_full_inference";
    }
    return "D_insufficient";
}

InferenceTier tier_for(int r_eff, bool paired) {
    if (!paired || r_eff < 5) return InferenceTier::D_insufficient;
    if (r_eff < 10) return InferenceTier::C_signflip;
    if (r_eff < 20) return InferenceTier::B_signflip_ci;
    return InferenceTier::A_full_inference;
}

DeltaLsiResult delta_lsi_from_deltas(const DeltaVector& dv, const DeltaLsiOptions& opts) {
    DeltaLsiResult res;
    res.metric = opts.metric;
    res.paired = dv.paired;
    res.requested_exchangeability = opts.exchangeability;
    res.effective_exchangeability = exchangeability_name(opts.exchangeability);
    res.delta_vector = dv;
    res.leaky_pooled = dv.leaky_pooled;
    res.guarded_pooled = dv.guarded_pooled;
    res.notes = dv.notes;
    res.r_eff = dv.paired ? static_cast<int>(dv.deltas.size()) : 0;
    res.tier = tier_for(res.r_eff, dv.paired);

    if (dv.paired && !dv.deltas.empty()) {
        res.delta_metric = mean_of(dv.deltas);
        res.delta_lsi = huber_location(dv.deltas, opts.huber);
    } else {
        double raw = dv.leaky_pooled - dv.guarded_pooled;
        res.delta_metric = dv.higher_better ? raw : -raw;
        res.delta_lsi = nan_value();
        res.notes.push_back("robust estimate needs paired repeat deltas; point difference reported only");
    }

    if (res.tier == InferenceTier::C_signflip || res.tier == InferenceTier::B_signflip_ci ||
        res.tier == InferenceTier::A_full_inference) {
        res.sign_flip = sign_flip_test(dv.deltas, opts.exchangeability, opts.m_flip,
                                       derive_seed(opts.seed, kFlipTag), opts.block_len);
        res.has_p = true;
        if (opts.exchangeability == Exchangeability::by_group ||
            opts.exchangeability == Exchangeability::within_batch)
            res.effective_exchangeability = "iid";
        for (const auto& n : res.sign_flip.notes) res.notes.push_back(n);
    }
    if (res.tier == InferenceTier::B_signflip_ci || res.tier == InferenceTier::A_full_inference) {
        res.ci_metric = bca_interval(dv.deltas, BcaEstimator::mean, opts.m_boot, 0.95,
                                     derive_seed(opts.seed, kBootTag, 1), opts.huber);
        res.ci_lsi = bca_interval(dv.deltas, BcaEstimator::huber, opts.m_boot, 0.95,
                                  derive_seed(opts.seed, kBootTag, 2), opts.huber);
    } else {
        res.ci_metric.reason = res.ci_lsi.reason =
            dv.paired ? "tier " + tier_name(res.tier) + " reports no interval" : "fits are unpaired";
    }

    res.inference_ok = res.tier == InferenceTier::A_full_inference && std::isfinite(res.delta_metric) &&
                       std::isfinite(res.delta_lsi) && res.has_p && res.ci_metric.available &&
                       res.ci_lsi.available && std::isfinite(res.ci_metric.lo) &&
                       std::isfinite(res.ci_metric.hi) && std::isfinite(res.ci_lsi.lo) &&
                       std::isfinite(res.ci_lsi.hi);
    return res;
}

DeltaLsiResult delta_lsi(const FitResult& fit_leaky, const FitResult& fit_guarded,
                         const DeltaLsiOptions& opts) {
    DeltaVector dv = pair_fits(fit_leaky, fit_guarded, opts.metric);
    return delta_lsi_from_deltas(dv, opts);
}

}  // namespace leakguard
