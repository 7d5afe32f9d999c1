#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <string>

#include "hcbr/dataset.hpp"
#include "hcbr/partition.hpp"
#include "hcbr/rng.hpp"
#include "hcbr/strength.hpp"

namespace hcbr {

// Labels are +1/-1; 0 means abstain (and doubles as "unlabeled" on input).
inline constexpr int kAbstain = 0;

// Thresholds for the refined decision rule. eta_* demand an absolute amount
// of support for the winning class, eta_bar_* a share of the combined
// support; label_*_weak is the verdict when the winning side fails its check.
struct EtaConfig {
    double eta_pos = 0.0;      // minimum s_pos when s > 0
    double eta_neg = 0.0;      // minimum s_neg when s <= 0
    double eta_bar_pos = 0.0;  // in [0,1): required share s_pos/(s_pos+s_neg)
    double eta_bar_neg = 0.0;
    int label_pos_weak = +1;
    int label_neg_weak = -1;

    void validate() const {
        if (eta_pos < 0.0 || eta_neg < 0.0)
            throw ConfigError("eta thresholds must be >= 0");
        if (eta_bar_pos < 0.0 || eta_bar_pos >= 1.0 || eta_bar_neg < 0.0 || eta_bar_neg >= 1.0)
            throw ConfigError("eta ratio thresholds must lie in [0,1)");
        for (int l : {label_pos_weak, label_neg_weak})
            if (l != +1 && l != -1 && l != kAbstain)
                throw ConfigError("weak labels must be +1, -1 or abstain");
    }
};

enum class LocalityMode { off, absolute, ratio };
enum class LocalityFallback { bernoulli, majority_class };

// Gate on how much a query overlaps the training feature universe. Queries
// below the gate are answered by the fallback instead of the model.
struct LocalityConfig {
    LocalityMode mode = LocalityMode::off;
    double threshold = 0.0;  // absolute: min covered features; ratio: max D_x/|x|
    LocalityFallback fallback = LocalityFallback::bernoulli;

    void validate() const {
        if (mode == LocalityMode::absolute && (threshold < 0.0 || threshold != std::floor(threshold)))
            throw ConfigError("absolute locality threshold must be a non-negative integer");
        if (mode == LocalityMode::ratio && (threshold < 0.0 || threshold > 1.0))
            throw ConfigError("ratio locality threshold must lie in [0,1]");
    }
};

enum class DecisionPath { duplicate_bypass, locality_fallback, r2_strong, r2_weak };

inline const char* to_string(DecisionPath p) {
    switch (p) {
        case DecisionPath::duplicate_bypass: return "duplicate_bypass";
        case DecisionPath::locality_fallback: return "locality_fallback";
        case DecisionPath::r2_strong: return "r2_strong";
        case DecisionPath::r2_weak: return "r2_weak";
    }
    return "?";
}

struct DecisionOutcome {
    int predicted = kAbstain;
    SupportBreakdown support;
    DecisionPath path = DecisionPath::r2_strong;
};

// Base rule: the sign of the net support; ties go to -1.
inline int decide_r1(const SupportBreakdown& sb) { return sb.s > 0.0 ? +1 : -1; }

// Refined rule: the winning side must clear both the absolute floor and the
// required share of the combined support, otherwise its weak label applies.
inline DecisionOutcome decide_r2(const SupportBreakdown& sb, const EtaConfig& eta) {
    eta.validate();
    DecisionOutcome out;
    out.support = sb;
    if (sb.s > 0.0) {
        double floor = std::max(eta.eta_bar_pos / (1.0 - eta.eta_bar_pos) * sb.s_neg, eta.eta_pos);
        if (sb.s_pos > floor) {
            out.predicted = +1;
            out.path = DecisionPath::r2_strong;
        } else {
            out.predicted = eta.label_pos_weak;
            out.path = DecisionPath::r2_weak;
        }
    } else {
        double floor = std::max(eta.eta_bar_neg / (1.0 - eta.eta_bar_neg) * sb.s_pos, eta.eta_neg);
        if (sb.s_neg > floor) {
            out.predicted = -1;
            out.path = DecisionPath::r2_strong;
        } else {
            out.predicted = eta.label_neg_weak;
            out.path = DecisionPath::r2_weak;
        }
    }
    return out;
}

namespace detail {

inline int majority_or(std::uint64_t pos, std::uint64_t neg, int tie) {
    if (pos > neg) return +1;
    if (neg > pos) return -1;
    return tie;
}

}  // namespace detail

// Full pipeline:
//   1. exact-signature bypass — if the query reproduces a training signature
//      that carries BOTH labels, answer with that signature's majority label
//      (ties: majority over all conflicting signatures, then over the
//      training set);
//   2. locality gate — queries sharing too little with the training universe
//      get the fallback answer;
//   3. otherwise the refined rule on the query's support.
// extra_unknown counts query tokens missing from the model vocabulary; they
// join the discretionary set and veto the bypass (the id signature alone
// would no longer describe the full query).
inline DecisionOutcome decide_full(const ModelArtifact& model, const Case& query,
                                   const EtaConfig& eta, const LocalityConfig& locality,
                                   const DuplicateIndex* dup, bool heuristic_on,
                                   std::mt19937_64& rng, std::uint32_t extra_unknown = 0) {
    locality.validate();
    Projection proj = model.partition.project(query.features, extra_unknown);
    SupportBreakdown sb = support(model.strengths, proj);

    const int prevalence_majority = model.prevalence > 0.5 ? +1 : -1;

    if (heuristic_on && dup != nullptr && extra_unknown == 0) {
        if (const auto* counts = dup->find(query.features);
            counts != nullptr && counts->redundant()) {
            int label = detail::majority_or(counts->pos, counts->neg, kAbstain);
            if (label == kAbstain)
                label = detail::majority_or(dup->redundant_pos, dup->redundant_neg,
                                            prevalence_majority);
            return {label, std::move(sb), DecisionPath::duplicate_bypass};
        }
    }

    if (locality.mode != LocalityMode::off) {
        bool local_enough = true;
        if (locality.mode == LocalityMode::absolute) {
            local_enough = static_cast<double>(proj.covered_count()) >= locality.threshold;
        } else {
            double ratio = proj.query_size == 0
                               ? 1.0
                               : static_cast<double>(proj.discretionary_count) /
                                     static_cast<double>(proj.query_size);
            local_enough = ratio <= locality.threshold;
        }
        if (!local_enough) {
            int label;
            if (locality.fallback == LocalityFallback::bernoulli)
                label = rand_unit(rng) < model.prevalence ? +1 : -1;
            else
                label = prevalence_majority;
            return {label, std::move(sb), DecisionPath::locality_fallback};
        }
    }

    DecisionOutcome out = decide_r2(sb, eta);
    return out;
}

}  // namespace hcbr
