#pragma once

#include "siimil/rng.hpp"
#include "siimil/types.hpp"

#include <algorithm>
#include <array>
#include <functional>
#include <limits>
#include <numeric>
#include <optional>
#include <span>

namespace siimil {

// AUC as the Mann-Whitney rank statistic: fraction of (positive, negative)
// pairs with score_pos > score_neg, ties counted 0.5. Equal to the ROC
// integral, and bit-exact against the O(n^2) pairwise count.
inline double roc_auc(std::span<const double> scores, std::span<const int> labels) {
    if (scores.size() != labels.size()) throw Error("roc_auc: size mismatch");
    std::size_t n_pos = 0, n_neg = 0;
    for (int l : labels) (l == 1 ? n_pos : n_neg) += 1;
    if (n_pos == 0 || n_neg == 0)
        throw Error("roc_auc: undefined for single-class input");

    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

    double rank_sum_pos = 0.0;  // 1-based average ranks over positives
    std::size_t i = 0;
    while (i < order.size()) {
        std::size_t j = i;
        while (j + 1 < order.size() && scores[order[j + 1]] == scores[order[i]]) ++j;
        const double avg_rank = 0.5 * (static_cast<double>(i + 1) + static_cast<double>(j + 1));
        for (std::size_t k = i; k <= j; ++k)
            if (labels[order[k]] == 1) rank_sum_pos += avg_rank;
        i = j + 1;
    }
    const double u = rank_sum_pos - 0.5 * static_cast<double>(n_pos) * static_cast<double>(n_pos + 1);
    return u / (static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

// Confusion-matrix metrics at a fixed threshold; predicted positive iff
// score >= threshold. Metrics whose denominator is zero are reported as 0
// with the matching degenerate flag set.
struct ThresholdMetrics {
    double accuracy = 0.0;
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    bool precision_degenerate = false;
    bool recall_degenerate = false;
    bool f1_degenerate = false;
};

inline ThresholdMetrics threshold_metrics(std::span<const double> scores, std::span<const int> labels,
                                          double threshold = 0.5) {
    if (scores.empty() || scores.size() != labels.size())
        throw Error("threshold_metrics: empty or mismatched input");
    long tp = 0, tn = 0, fp = 0, fn = 0;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        const bool pred = scores[i] >= threshold;
        const bool truth = labels[i] == 1;
        if (pred && truth) ++tp;
        else if (pred && !truth) ++fp;
        else if (!pred && truth) ++fn;
        else ++tn;
    }
    ThresholdMetrics m;
    m.accuracy = static_cast<double>(tp + tn) / static_cast<double>(tp + tn + fp + fn);
    if (tp + fp > 0) m.precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
    else m.precision_degenerate = true;
    if (tp + fn > 0) m.recall = static_cast<double>(tp) / static_cast<double>(tp + fn);
    else m.recall_degenerate = true;
    if (2 * tp + fp + fn > 0) m.f1 = static_cast<double>(2 * tp) / static_cast<double>(2 * tp + fp + fn);
    else m.f1_degenerate = true;
    return m;
}

// Tumor instance rate: fraction of positive instances in a bag.
inline double tir(std::span<const std::uint8_t> instance_labels) {
    if (instance_labels.empty()) throw Error("tir: empty label vector");
    std::size_t ones = 0;
    for (std::uint8_t l : instance_labels) ones += (l != 0);
    return static_cast<double>(ones) / static_cast<double>(instance_labels.size());
}

// TIR buckets <0.5%, 0.5-1%, 1-10%, >=10%; closed on the lower edge.
struct TirGroupBounds {
    double low;
    double high;
};

inline constexpr std::array<TirGroupBounds, 4> kTirGroups = {
    {{0.0, 0.005}, {0.005, 0.01}, {0.01, 0.10}, {0.10, 1.0}}};

inline int tir_group_index(double value) {
    if (value < 0.005) return 0;
    if (value < 0.01) return 1;
    if (value < 0.10) return 2;
    return 3;
}

struct GroupRecall {
    double low = 0.0;
    double high = 0.0;
    int bag_count = 0;
    std::optional<double> recall;  // unset when the bucket is empty
};

// Recall over positive bags bucketed by their original-bag TIR. Negative
// bags need no instance labels; every positive bag must carry them.
inline std::array<GroupRecall, 4> grouped_recall(
    std::span<const double> scores, std::span<const int> labels,
    std::span<const std::optional<std::vector<std::uint8_t>>> instance_labels, double threshold = 0.5) {
    if (scores.size() != labels.size() || scores.size() != instance_labels.size())
        throw Error("grouped_recall: size mismatch");
    std::array<long, 4> tp{};
    std::array<long, 4> fn{};
    for (std::size_t i = 0; i < scores.size(); ++i) {
        if (labels[i] != 1) continue;
        if (!instance_labels[i])
            throw Error("grouped_recall: positive bag without instance labels");
        const int g = tir_group_index(tir(*instance_labels[i]));
        if (scores[i] >= threshold) ++tp[static_cast<std::size_t>(g)];
        else ++fn[static_cast<std::size_t>(g)];
    }
    std::array<GroupRecall, 4> out;
    for (std::size_t g = 0; g < 4; ++g) {
        out[g].low = kTirGroups[g].low;
        out[g].high = kTirGroups[g].high;
        const long total = tp[g] + fn[g];
        out[g].bag_count = static_cast<int>(total);
        if (total > 0) out[g].recall = static_cast<double>(tp[g]) / static_cast<double>(total);
    }
    return out;
}

using MetricFn = std::function<double(std::span<const double>, std::span<const int>)>;

struct BootstrapInterval {
    double lower = 0.0;
    double upper = 0.0;
};

namespace detail {

inline double percentile(std::vector<double>& sorted_values, double q) {
    std::sort(sorted_values.begin(), sorted_values.end());
    const double pos = q * static_cast<double>(sorted_values.size() - 1);
    const auto lo = static_cast<std::size_t>(pos);
    const auto hi = std::min(lo + 1, sorted_values.size() - 1);
    const double frac = pos - static_cast<double>(lo);
    return sorted_values[lo] * (1.0 - frac) + sorted_values[hi] * frac;
}

}  // namespace detail

// Percentile bootstrap over resampled bags with per-resample derived seeds.
// When the full sample has both classes, single-class resamples are redrawn
// (bounded retries). Endpoints are widened to contain the point estimate so
// the reported triple always satisfies lower <= point <= upper.
inline BootstrapInterval bootstrap_ci(std::span<const double> scores, std::span<const int> labels,
                                      const MetricFn& metric, int n_resamples = 1000,
                                      double level = 0.95, std::uint64_t seed = 0) {
    if (scores.empty() || scores.size() != labels.size())
        throw Error("bootstrap_ci: empty or mismatched input");
    if (n_resamples < 1 || !(level > 0.0 && level < 1.0))
        throw Error("bootstrap_ci: invalid resample count or level");
    const double point = metric(scores, labels);  // metric undefined -> propagate

    bool has_pos = false, has_neg = false;
    for (int l : labels) (l == 1 ? has_pos : has_neg) = true;
    const bool need_both = has_pos && has_neg;

    const std::size_t n = scores.size();
    std::vector<double> stats(static_cast<std::size_t>(n_resamples));
    std::vector<double> rs(n);
    std::vector<int> rl(n);
    for (int r = 0; r < n_resamples; ++r) {
        Rng rng(derive_seed(seed, static_cast<std::uint64_t>(r)));
        constexpr int kMaxRetries = 1000;
        int attempt = 0;
        for (;; ++attempt) {
            if (attempt >= kMaxRetries)
                throw Error("bootstrap_ci: could not draw a two-class resample");
            bool rpos = false, rneg = false;
            for (std::size_t i = 0; i < n; ++i) {
                const auto idx = static_cast<std::size_t>(rng.below(n));
                rs[i] = scores[idx];
                rl[i] = labels[idx];
                (rl[i] == 1 ? rpos : rneg) = true;
            }
            if (!need_both || (rpos && rneg)) break;
        }
        stats[static_cast<std::size_t>(r)] = metric(rs, rl);
    }

    const double alpha = 1.0 - level;
    BootstrapInterval ci;
    ci.lower = detail::percentile(stats, alpha / 2.0);
    ci.upper = detail::percentile(stats, 1.0 - alpha / 2.0);
    ci.lower = std::min(ci.lower, point);
    ci.upper = std::max(ci.upper, point);
    return ci;
}

struct MetricInterval {
    double value = 0.0;
    double lower = 0.0;
    double upper = 0.0;
};

struct MetricsReport {
    MetricInterval auc, accuracy, precision, recall, f1;
    double threshold = 0.5;
    int n_bootstrap = 0;
    ThresholdMetrics point;  // carries the degenerate flags
};

inline MetricsReport compute_metrics_report(std::span<const double> scores, std::span<const int> labels,
                                            double threshold = 0.5, int n_bootstrap = 1000,
                                            double level = 0.95, std::uint64_t seed = 0) {
    MetricsReport report;
    report.threshold = threshold;
    report.n_bootstrap = n_bootstrap;
    report.point = threshold_metrics(scores, labels, threshold);

    const auto with_ci = [&](const MetricFn& fn, double value, std::uint64_t stream) {
        const auto ci = bootstrap_ci(scores, labels, fn, n_bootstrap, level, derive_seed(seed, stream));
        return MetricInterval{value, ci.lower, ci.upper};
    };
    const MetricFn auc_fn = [](std::span<const double> s, std::span<const int> l) { return roc_auc(s, l); };
    const auto tm_fn = [threshold](auto member) {
        return MetricFn([threshold, member](std::span<const double> s, std::span<const int> l) {
            return threshold_metrics(s, l, threshold).*member;
        });
    };
    report.auc = with_ci(auc_fn, roc_auc(scores, labels), 0);
    report.accuracy = with_ci(tm_fn(&ThresholdMetrics::accuracy), report.point.accuracy, 1);
    report.precision = with_ci(tm_fn(&ThresholdMetrics::precision), report.point.precision, 2);
    report.recall = with_ci(tm_fn(&ThresholdMetrics::recall), report.point.recall, 3);
    report.f1 = with_ci(tm_fn(&ThresholdMetrics::f1), report.point.f1, 4);
    return report;
}

struct TirAmplificationRow {
    double low = 0.0;
    double high = 0.0;
    int bag_count = 0;
    double mean_tir_before = 0.0;
    double mean_tir_after = 0.0;
    double ratio = 0.0;
};

// Fig.4-style comparison: positive bags bucketed by original TIR, mean TIR
// before vs after salient selection. Buckets with no bags are omitted.
inline std::vector<TirAmplificationRow> tir_amplification_report(
    std::span<const LabeledEmbeddingBag> originals, std::span<const SalientBag> salient) {
    if (originals.size() != salient.size())
        throw Error("tir amplification: original/salient count mismatch");
    std::array<double, 4> before{}, after{};
    std::array<int, 4> count{};
    for (std::size_t b = 0; b < originals.size(); ++b) {
        if (originals[b].label != 1) continue;
        const auto& lbls = originals[b].embeddings.instance_labels;
        if (!lbls) throw Error("tir amplification: positive bag without instance labels");
        const double t_before = tir(*lbls);
        std::size_t kept_pos = 0;
        for (Index idx : salient[b].selected_indices)
            kept_pos += ((*lbls)[static_cast<std::size_t>(idx)] != 0);
        const double t_after =
            static_cast<double>(kept_pos) / static_cast<double>(salient[b].selected_indices.size());
        const auto g = static_cast<std::size_t>(tir_group_index(t_before));
        before[g] += t_before;
        after[g] += t_after;
        count[g] += 1;
    }
    std::vector<TirAmplificationRow> rows;
    for (std::size_t g = 0; g < 4; ++g) {
        if (count[g] == 0) continue;
        TirAmplificationRow row;
        row.low = kTirGroups[g].low;
        row.high = kTirGroups[g].high;
        row.bag_count = count[g];
        row.mean_tir_before = before[g] / count[g];
        row.mean_tir_after = after[g] / count[g];
        row.ratio = row.mean_tir_after / row.mean_tir_before;
        rows.push_back(row);
    }
    return rows;
}

}  // namespace siimil
