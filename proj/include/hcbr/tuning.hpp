#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <utility>
#include <vector>

#include "hcbr/dataset.hpp"
#include "hcbr/decision.hpp"
#include "hcbr/metrics.hpp"
#include "hcbr/strength.hpp"

namespace hcbr {

// One validation case placed in the decision plane: net support on the x
// axis, the winning side's share of combined support on the y axis.
struct DecisionPoint {
    double x = 0.0;      // net support s
    double y = 0.0;      // max(s_pos, s_neg) / (s_pos + s_neg)
    bool correct = false;  // base-rule verdict vs truth
};

struct TuneResult {
    EtaConfig eta;
    std::vector<double> fold_untuned_accuracy;
    std::vector<double> fold_tuned_accuracy;
    std::size_t candidates_examined = 0;
};

namespace detail {

// Raw material for threshold evaluation: supports and truth per case.
struct ValPoint {
    double s_pos, s_neg, s;
    int truth;
};

// Mirrors the refined rule with weak verdicts withheld: a side that fails
// its threshold abstains rather than guessing. Tuned runs therefore trade
// coverage for accuracy on the cases they do decide, and candidate search
// scores exactly that decided-only accuracy.
inline int tuned_verdict(const ValPoint& p, double eta_pos, double eta_bar_pos, double eta_neg,
                         double eta_bar_neg) {
    if (p.s > 0.0) {
        double floor = std::max(eta_bar_pos / (1.0 - eta_bar_pos) * p.s_neg, eta_pos);
        return p.s_pos > floor ? +1 : kAbstain;
    }
    double floor = std::max(eta_bar_neg / (1.0 - eta_bar_neg) * p.s_pos, eta_neg);
    return p.s_neg > floor ? -1 : kAbstain;
}

struct ThresholdScore {
    double accuracy = 0.0;  // over decided points; 0 when nothing is decided
    std::uint64_t decided = 0;
};

inline ThresholdScore tuned_accuracy(const std::vector<ValPoint>& points, double eta_pos,
                                     double eta_bar_pos, double eta_neg, double eta_bar_neg) {
    ThresholdScore score;
    std::uint64_t correct = 0;
    for (const auto& p : points) {
        int verdict = tuned_verdict(p, eta_pos, eta_bar_pos, eta_neg, eta_bar_neg);
        if (verdict == kAbstain) continue;
        ++score.decided;
        if (verdict == p.truth) ++correct;
    }
    if (score.decided > 0)
        score.accuracy = static_cast<double>(correct) / static_cast<double>(score.decided);
    return score;
}

// Half the distance from v to the nearest other distinct value, 0 when the
// axis has fewer than two distinct values.
inline double half_gap_to_neighbor(const std::vector<double>& sorted_distinct, double v) {
    if (sorted_distinct.size() < 2) return 0.0;
    auto it = std::lower_bound(sorted_distinct.begin(), sorted_distinct.end(), v);
    double best = std::numeric_limits<double>::infinity();
    if (it != sorted_distinct.end() && *it == v) {
        if (it + 1 != sorted_distinct.end()) best = *(it + 1) - v;
        if (it != sorted_distinct.begin()) best = std::min(best, v - *(it - 1));
    } else {
        // v itself absent (cannot happen for points drawn from the list)
        if (it != sorted_distinct.end()) best = *it - v;
        if (it != sorted_distinct.begin()) best = std::min(best, v - *(it - 1));
    }
    return std::isfinite(best) ? best / 2.0 : 0.0;
}

inline double clamp_eta(double v) { return std::max(v, 0.0); }
inline double clamp_eta_bar(double v) {
    return std::clamp(v, 0.0, std::nextafter(1.0, 0.0));
}

struct SideBest {
    double eta = 0.0;
    double eta_bar = 0.0;
    double accuracy = 0.0;
    std::uint64_t decided = 0;
    std::size_t examined = 0;
};

// Exhaustive search over the candidate thresholds generated by one side's
// validation points (plus the do-nothing candidate, so the result can never
// be worse on validation data than no thresholds at all). Equal accuracy is
// broken toward the candidate deciding more cases, keeping the search from
// collapsing onto near-empty decided sets.
inline SideBest tune_side(const std::vector<ValPoint>& all_points, bool positive_side) {
    // points in this side's half-plane, in local coordinates (x grows with
    // the side's own support)
    std::vector<double> xs, ys;
    struct LocalPoint {
        double x, y;
        bool correct;
    };
    std::vector<LocalPoint> local;
    for (const auto& p : all_points) {
        bool on_side = positive_side ? p.s > 0.0 : p.s <= 0.0;
        if (!on_side) continue;
        double total = p.s_pos + p.s_neg;
        if (total <= 0.0) continue;  // share undefined
        LocalPoint lp;
        lp.x = positive_side ? p.s : -p.s;
        lp.y = (positive_side ? p.s_pos : p.s_neg) / total;
        lp.correct = (p.s > 0.0 ? +1 : -1) == p.truth;
        local.push_back(lp);
    }

    for (const auto& lp : local) {
        xs.push_back(lp.x);
        ys.push_back(lp.y);
    }
    auto distinct = [](std::vector<double>& v) {
        std::sort(v.begin(), v.end());
        v.erase(std::unique(v.begin(), v.end()), v.end());
    };
    distinct(xs);
    distinct(ys);

    auto evaluate = [&](double eta, double eta_bar) {
        return positive_side ? tuned_accuracy(all_points, eta, eta_bar, 0.0, 0.0)
                             : tuned_accuracy(all_points, 0.0, 0.0, eta, eta_bar);
    };

    SideBest best;
    ThresholdScore base = evaluate(0.0, 0.0);
    best.accuracy = base.accuracy;
    best.decided = base.decided;
    best.examined = 1;
    auto consider = [&](double eta, double eta_bar) {
        eta = clamp_eta(eta);
        eta_bar = clamp_eta_bar(eta_bar);
        ThresholdScore score = evaluate(eta, eta_bar);
        ++best.examined;
        if (score.accuracy > best.accuracy ||
            (score.accuracy == best.accuracy && score.decided > best.decided)) {
            best.accuracy = score.accuracy;
            best.decided = score.decided;
            best.eta = eta;
            best.eta_bar = eta_bar;
        }
    };
    for (const auto& lp : local) {
        double sign = lp.correct ? 1.0 : -1.0;
        double eps = sign * half_gap_to_neighbor(xs, lp.x);
        double eps_bar = sign * half_gap_to_neighbor(ys, lp.y);
        consider(lp.x + eps, lp.y + eps_bar);
        consider(lp.x + eps, 0.0);
        consider(0.0, lp.y + eps_bar);
    }
    return best;
}

}  // namespace detail

// Weak labels used on tuned runs: a side failing its threshold abstains, so
// reported accuracy covers the decided cases only (coverage is reported
// alongside).
inline EtaConfig tuned_eta_labels(double eta_pos, double eta_bar_pos, double eta_neg,
                                  double eta_bar_neg) {
    EtaConfig eta;
    eta.eta_pos = eta_pos;
    eta.eta_bar_pos = eta_bar_pos;
    eta.eta_neg = eta_neg;
    eta.eta_bar_neg = eta_bar_neg;
    eta.label_pos_weak = kAbstain;
    eta.label_neg_weak = kAbstain;
    return eta;
}

// Inner-cross-validation threshold search. Per inner fold: fit on the rest,
// place every validation case in the decision plane, generate the three
// candidate thresholds around each point and keep the per-side argmax; the
// returned thresholds average the per-fold winners.
inline TuneResult tune_eta(const std::vector<Case>& train_cases, int folds, std::uint64_t seed,
                           int k_train) {
    if (folds < 2) throw ConfigError("tune_eta: need at least 2 inner folds");
    FoldPlan plan = stratified_folds(train_cases, folds, seed);

    TuneResult result;
    double sum_eta_pos = 0.0, sum_eta_bar_pos = 0.0, sum_eta_neg = 0.0, sum_eta_bar_neg = 0.0;

    std::vector<Case> fit_cases;
    for (int f = 0; f < folds; ++f) {
        fit_cases.clear();
        for (std::uint32_t idx : plan.complement_indices(f)) fit_cases.push_back(train_cases[idx]);
        Partition partition = build_partition(fit_cases);
        StrengthVectors sv = compute_strengths(partition, fit_cases);
        train(partition, fit_cases, sv, k_train);

        std::vector<detail::ValPoint> points;
        for (std::uint32_t idx : plan.fold_indices(f)) {
            const Case& c = train_cases[idx];
            SupportBreakdown sb = support(sv, partition.project(c.features));
            points.push_back({sb.s_pos, sb.s_neg, sb.s, c.label});
        }

        detail::SideBest pos = detail::tune_side(points, true);
        detail::SideBest neg = detail::tune_side(points, false);
        result.candidates_examined += pos.examined + neg.examined;

        // The sides are searched independently; guard the joint pick so a
        // fold can never end up worse than no thresholds at all.
        detail::ThresholdScore base = detail::tuned_accuracy(points, 0.0, 0.0, 0.0, 0.0);
        detail::ThresholdScore joint =
            detail::tuned_accuracy(points, pos.eta, pos.eta_bar, neg.eta, neg.eta_bar);
        if (joint.accuracy < base.accuracy) {
            pos = detail::SideBest{};
            neg = detail::SideBest{};
            joint = base;
        }
        sum_eta_pos += pos.eta;
        sum_eta_bar_pos += pos.eta_bar;
        sum_eta_neg += neg.eta;
        sum_eta_bar_neg += neg.eta_bar;

        result.fold_untuned_accuracy.push_back(base.accuracy);
        result.fold_tuned_accuracy.push_back(joint.accuracy);
    }

    const double n = static_cast<double>(folds);
    result.eta = tuned_eta_labels(sum_eta_pos / n, sum_eta_bar_pos / n, sum_eta_neg / n,
                                  sum_eta_bar_neg / n);
    return result;
}

struct SweepPoint {
    double eta = 0.0;
    double coverage = 0.0;
    std::uint64_t decided = 0;
    std::optional<double> accuracy;  // absent when nothing is decided
};

struct SweepResult {
    std::vector<SweepPoint> points;
    std::vector<std::pair<double, double>> frontier;  // (accuracy, coverage)
};

// Symmetric-threshold sweep with abstention: for each eta, both sides must
// clear the same absolute floor or the case is left undecided. Reports the
// accuracy over decided cases and the decided fraction.
inline SweepResult sweep_eta(const ModelArtifact& model, const std::vector<Case>& test_cases,
                             const std::vector<double>& etas) {
    if (test_cases.empty()) throw DataError("sweep_eta: no test cases");
    std::vector<detail::ValPoint> points;
    points.reserve(test_cases.size());
    for (const Case& c : test_cases) {
        SupportBreakdown sb = support(model.strengths, model.partition.project(c.features));
        points.push_back({sb.s_pos, sb.s_neg, sb.s, c.label});
    }

    SweepResult result;
    for (double eta : etas) {
        if (eta < 0.0) throw ConfigError("sweep_eta: thresholds must be >= 0");
        std::uint64_t decided = 0, correct = 0;
        for (const auto& p : points) {
            int verdict;
            if (p.s > 0.0)
                verdict = p.s_pos > eta ? +1 : kAbstain;
            else
                verdict = p.s_neg > eta ? -1 : kAbstain;
            if (verdict == kAbstain) continue;
            ++decided;
            if (verdict == p.truth) ++correct;
        }
        SweepPoint sp;
        sp.eta = eta;
        sp.decided = decided;
        sp.coverage = static_cast<double>(decided) / static_cast<double>(points.size());
        if (decided > 0) sp.accuracy = static_cast<double>(correct) / static_cast<double>(decided);
        result.points.push_back(sp);
    }

    std::vector<std::pair<double, double>> scored;
    for (const auto& sp : result.points)
        if (sp.accuracy) scored.emplace_back(*sp.accuracy, sp.coverage);
    result.frontier = pareto_frontier(scored);
    return result;
}

}  // namespace hcbr
