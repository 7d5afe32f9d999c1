#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <utility>
#include <vector>

#include "hcbr/dataset.hpp"

namespace hcbr {

// Entries are real-valued so that fold-averaged matrices are representable.
struct ConfusionMatrix {
    double tp = 0.0, fn = 0.0, fp = 0.0, tn = 0.0;

    double total() const { return tp + fn + fp + tn; }

    ConfusionMatrix& operator+=(const ConfusionMatrix& o) {
        tp += o.tp;
        fn += o.fn;
        fp += o.fp;
        tn += o.tn;
        return *this;
    }
};

struct MetricsReport {
    double accuracy = 0.0;
    double recall = 0.0;
    double specificity = 0.0;
    double precision = 0.0;
    double npv = 0.0;
    double f1 = 0.0;
    double mcc = 0.0;
    double abstention_coverage = 1.0;  // decided / total, set by the caller
};

// +1 is "positive". Abstentions must be filtered out by the caller.
inline ConfusionMatrix confusion(const std::vector<std::pair<int, int>>& records) {
    if (records.empty()) throw DataError("confusion: no predictions");
    ConfusionMatrix m;
    for (auto [truth, predicted] : records) {
        if (truth == +1)
            (predicted == +1 ? m.tp : m.fn) += 1.0;
        else
            (predicted == +1 ? m.fp : m.tn) += 1.0;
    }
    return m;
}

namespace detail {

inline double safe_div(double num, double den) { return den == 0.0 ? 0.0 : num / den; }

}  // namespace detail

inline MetricsReport report(const ConfusionMatrix& m) {
    if (m.total() <= 0.0) throw DataError("report: empty confusion matrix");
    MetricsReport r;
    r.accuracy = (m.tp + m.tn) / m.total();
    r.recall = detail::safe_div(m.tp, m.tp + m.fn);
    r.specificity = detail::safe_div(m.tn, m.tn + m.fp);
    r.precision = detail::safe_div(m.tp, m.tp + m.fp);
    r.npv = detail::safe_div(m.tn, m.tn + m.fn);
    r.f1 = detail::safe_div(2.0 * m.tp, 2.0 * m.tp + m.fp + m.fn);
    double den = std::sqrt((m.tp + m.fp) * (m.tp + m.fn) * (m.tn + m.fp) * (m.tn + m.fn));
    r.mcc = detail::safe_div(m.tp * m.tn - m.fp * m.fn, den);
    return r;
}

struct CalibrationBin {
    double low = 0.0;
    double high = 0.0;
    std::uint64_t correct = 0;
    std::uint64_t incorrect = 0;
};

struct CalibrationHistogram {
    std::vector<CalibrationBin> bins;
};

struct ScoredPrediction {
    double s = 0.0;
    bool correct = false;
};

// Buckets predictions by their support over a range symmetric around zero,
// so correct/incorrect distributions on both sides are directly comparable.
inline CalibrationHistogram calibration_histogram(const std::vector<ScoredPrediction>& preds,
                                                  int bin_count) {
    if (bin_count < 2) throw ConfigError("calibration_histogram: need at least 2 bins");
    if (preds.empty()) throw DataError("calibration_histogram: no predictions");

    double max_abs = 0.0;
    for (const auto& p : preds) max_abs = std::max(max_abs, std::fabs(p.s));
    if (max_abs == 0.0) max_abs = 1.0;  // degenerate: everything lands in the middle

    CalibrationHistogram h;
    h.bins.resize(bin_count);
    const double width = 2.0 * max_abs / bin_count;
    for (int i = 0; i < bin_count; ++i) {
        h.bins[i].low = -max_abs + i * width;
        h.bins[i].high = -max_abs + (i + 1) * width;
    }
    for (const auto& p : preds) {
        int idx = static_cast<int>((p.s + max_abs) / width);
        idx = std::clamp(idx, 0, bin_count - 1);
        (p.correct ? h.bins[idx].correct : h.bins[idx].incorrect) += 1;
    }
    return h;
}

// Returns the non-dominated subset: a dominates b when a >= b in both
// coordinates and beats it in at least one. Input order is preserved.
inline std::vector<std::pair<double, double>> pareto_frontier(
    const std::vector<std::pair<double, double>>& points) {
    std::vector<std::pair<double, double>> out;
    for (std::size_t i = 0; i < points.size(); ++i) {
        bool dominated = false;
        for (std::size_t j = 0; j < points.size() && !dominated; ++j) {
            if (j == i) continue;
            const auto& a = points[j];
            const auto& b = points[i];
            dominated = a.first >= b.first && a.second >= b.second &&
                        (a.first > b.first || a.second > b.second);
        }
        if (!dominated) out.push_back(points[i]);
    }
    return out;
}

}  // namespace hcbr
