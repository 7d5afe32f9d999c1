#pragma once

#include <atomic>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <exception>
#include <fstream>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "hcbr/dataset.hpp"
#include "hcbr/decision.hpp"
#include "hcbr/metrics.hpp"
#include "hcbr/strength.hpp"
#include "hcbr/tuning.hpp"

namespace hcbr {

struct ExperimentConfig {
    int folds = 10;
    int iterations = 1;
    std::uint64_t seed = 0;
    EtaConfig eta;
    bool tune = false;
    int tune_folds = 10;
    LocalityConfig locality;
    bool heuristic = true;
    int threads = 0;  // 0 = hardware concurrency
    int calibration_bins = 20;
};

struct PredictionRecord {
    std::uint32_t case_id = 0;
    int fold = 0;
    int truth = 0;
    int predicted = 0;
    double s = 0.0, s_pos = 0.0, s_neg = 0.0, coverage = 0.0;
    DecisionPath path = DecisionPath::r2_strong;
};

struct FoldResult {
    int fold = 0;
    ConfusionMatrix matrix;  // decided predictions only
    MetricsReport metrics;
    std::uint64_t test_count = 0;
    std::uint64_t abstained = 0;
    EtaConfig eta_used;
    std::vector<double> tune_untuned_accuracy;  // inner-validation traces, empty unless tuned
    std::vector<double> tune_tuned_accuracy;
};

struct CvResult {
    std::vector<FoldResult> folds;
    std::vector<PredictionRecord> predictions;  // fold-major, original case order inside
    ConfusionMatrix summed_matrix;
    ConfusionMatrix mean_matrix;
    MetricsReport metrics_of_summed;
    MetricsReport mean_of_fold_metrics;
    CalibrationHistogram calibration;
};

namespace detail {

inline void run_one_fold(const Dataset& ds, const ExperimentConfig& config, const FoldPlan& plan,
                         int fold, FoldResult& fold_out,
                         std::vector<PredictionRecord>& pred_out) {
    std::vector<Case> train_cases;
    for (std::uint32_t idx : plan.complement_indices(fold)) train_cases.push_back(ds.cases[idx]);

    ModelArtifact model = fit_model(train_cases, ds.interner, config.iterations, config.seed);

    EtaConfig eta = config.eta;
    if (config.tune) {
        TuneResult tr =
            tune_eta(train_cases, config.tune_folds, config.seed + static_cast<std::uint64_t>(fold),
                     config.iterations);
        eta = tr.eta;
        fold_out.tune_untuned_accuracy = std::move(tr.fold_untuned_accuracy);
        fold_out.tune_tuned_accuracy = std::move(tr.fold_tuned_accuracy);
    }

    std::mt19937_64 rng(config.seed + static_cast<std::uint64_t>(fold));
    std::vector<std::pair<int, int>> decided;
    for (std::uint32_t idx : plan.fold_indices(fold)) {
        const Case& c = ds.cases[idx];
        DecisionOutcome outcome = decide_full(model, c, eta, config.locality, &model.duplicates,
                                              config.heuristic, rng);
        PredictionRecord rec;
        rec.case_id = c.case_id;
        rec.fold = fold;
        rec.truth = c.label;
        rec.predicted = outcome.predicted;
        rec.s = outcome.support.s;
        rec.s_pos = outcome.support.s_pos;
        rec.s_neg = outcome.support.s_neg;
        rec.coverage = outcome.support.coverage;
        rec.path = outcome.path;
        pred_out.push_back(rec);

        ++fold_out.test_count;
        if (outcome.predicted == kAbstain)
            ++fold_out.abstained;
        else
            decided.emplace_back(c.label, outcome.predicted);
    }

    fold_out.fold = fold;
    fold_out.eta_used = eta;
    fold_out.matrix = confusion(decided);
    fold_out.metrics = report(fold_out.matrix);
    fold_out.metrics.abstention_coverage =
        static_cast<double>(fold_out.test_count - fold_out.abstained) /
        static_cast<double>(fold_out.test_count);
}

}  // namespace detail

// Stratified k-fold cross-validation. Folds are independent jobs: each one
// fits its own model on the complement, optionally tunes thresholds by inner
// cross-validation, and predicts its held-out cases. Aggregation reports
// both the metrics of the summed matrix and the mean of per-fold metrics.
inline CvResult run_cv(const Dataset& ds, const ExperimentConfig& config) {
    if (config.folds < 2) throw ConfigError("run_cv: need at least 2 folds");
    if (config.iterations < 0) throw ConfigError("run_cv: iterations must be >= 0");
    config.eta.validate();
    config.locality.validate();

    FoldPlan plan = stratified_folds(ds.cases, config.folds, config.seed);

    CvResult result;
    result.folds.resize(config.folds);
    std::vector<std::vector<PredictionRecord>> fold_predictions(config.folds);
    std::vector<std::exception_ptr> errors(config.folds);

    unsigned worker_count = config.threads > 0
                                ? static_cast<unsigned>(config.threads)
                                : std::max(1u, std::thread::hardware_concurrency());
    worker_count = std::min<unsigned>(worker_count, static_cast<unsigned>(config.folds));

    std::atomic<int> next_fold{0};
    auto worker = [&]() {
        for (;;) {
            int fold = next_fold.fetch_add(1);
            if (fold >= config.folds) return;
            try {
                detail::run_one_fold(ds, config, plan, fold, result.folds[fold],
                                     fold_predictions[fold]);
            } catch (...) {
                errors[fold] = std::current_exception();
            }
        }
    };
    if (worker_count <= 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (unsigned t = 0; t < worker_count; ++t) pool.emplace_back(worker);
        for (auto& th : pool) th.join();
    }
    for (int f = 0; f < config.folds; ++f)
        if (errors[f]) std::rethrow_exception(errors[f]);

    std::vector<ScoredPrediction> scored;
    double acc = 0, rec = 0, spec = 0, prec = 0, npv = 0, f1 = 0, mcc = 0, cov = 0;
    std::uint64_t total = 0, abstained = 0;
    for (int f = 0; f < config.folds; ++f) {
        const FoldResult& fr = result.folds[f];
        result.summed_matrix += fr.matrix;
        acc += fr.metrics.accuracy;
        rec += fr.metrics.recall;
        spec += fr.metrics.specificity;
        prec += fr.metrics.precision;
        npv += fr.metrics.npv;
        f1 += fr.metrics.f1;
        mcc += fr.metrics.mcc;
        cov += fr.metrics.abstention_coverage;
        total += fr.test_count;
        abstained += fr.abstained;
        for (const auto& p : fold_predictions[f]) {
            result.predictions.push_back(p);
            if (p.predicted != kAbstain) scored.push_back({p.s, p.predicted == p.truth});
        }
    }
    const double k = static_cast<double>(config.folds);
    result.mean_of_fold_metrics = {acc / k, rec / k, spec / k, prec / k,
                                   npv / k, f1 / k,  mcc / k,  cov / k};
    result.mean_matrix = result.summed_matrix;
    result.mean_matrix.tp /= k;
    result.mean_matrix.fn /= k;
    result.mean_matrix.fp /= k;
    result.mean_matrix.tn /= k;
    result.metrics_of_summed = report(result.summed_matrix);
    result.metrics_of_summed.abstention_coverage =
        static_cast<double>(total - abstained) / static_cast<double>(total);
    result.calibration = calibration_histogram(scored, config.calibration_bins);
    return result;
}

struct LearningCurvePoint {
    double train_fraction = 0.0;
    double train_accuracy = 0.0;
    double test_accuracy = 0.0;
    int repetitions = 0;
    double test_std = 0.0;
};

// Accuracy as a function of training-set size: stratified subsample at each
// fraction, remainder as test set, averaged over repetitions with derived
// seeds. The duplicate bypass stays off unless explicitly enabled so the
// train/test gap reflects the model alone.
inline std::vector<LearningCurvePoint> learning_curve(const Dataset& ds,
                                                      const ExperimentConfig& config,
                                                      const std::vector<double>& fractions,
                                                      int repetitions) {
    if (repetitions < 1) throw ConfigError("learning_curve: repetitions must be >= 1");
    double prev = 0.0;
    for (double f : fractions) {
        if (f <= 0.0 || f >= 1.0 || f <= prev)
            throw ConfigError("learning_curve: fractions must be strictly increasing in (0,1)");
        prev = f;
    }

    std::vector<std::uint32_t> pos_idx, neg_idx;
    for (std::uint32_t i = 0; i < ds.cases.size(); ++i)
        (ds.cases[i].label == +1 ? pos_idx : neg_idx).push_back(i);
    if (pos_idx.size() < 2 || neg_idx.size() < 2)
        throw DataError("learning_curve: need at least 2 cases per class to split");

    std::vector<LearningCurvePoint> points;
    for (std::size_t fi = 0; fi < fractions.size(); ++fi) {
        const double fraction = fractions[fi];
        std::vector<double> train_accs, test_accs;
        for (int r = 0; r < repetitions; ++r) {
            std::uint64_t derived =
                config.seed + 1000003ull * (static_cast<std::uint64_t>(fi) + 1) +
                static_cast<std::uint64_t>(r);
            std::vector<Case> train_cases, test_cases;
            for (int attempt = 0;; ++attempt) {
                std::mt19937_64 rng(derived + static_cast<std::uint64_t>(attempt));
                auto pos = pos_idx, neg = neg_idx;
                shuffle_vec(pos, rng);
                shuffle_vec(neg, rng);
                auto take = [&](std::size_t n) {
                    return std::clamp<std::size_t>(
                        static_cast<std::size_t>(std::llround(fraction * static_cast<double>(n))),
                        1, n - 1);
                };
                train_cases.clear();
                test_cases.clear();
                for (std::size_t i = 0; i < pos.size(); ++i)
                    (i < take(pos.size()) ? train_cases : test_cases).push_back(ds.cases[pos[i]]);
                for (std::size_t i = 0; i < neg.size(); ++i)
                    (i < take(neg.size()) ? train_cases : test_cases).push_back(ds.cases[neg[i]]);
                bool has_pos = false, has_neg = false;
                for (const auto& c : train_cases) (c.label == +1 ? has_pos : has_neg) = true;
                if (has_pos && has_neg) break;
                if (attempt >= 8)
                    throw DataError("learning_curve: cannot draw a two-class training set");
            }

            ModelArtifact model =
                fit_model(train_cases, ds.interner, config.iterations, config.seed);
            std::mt19937_64 rng(derived);
            auto accuracy_over = [&](const std::vector<Case>& cases) {
                std::uint64_t correct = 0, decided = 0;
                for (const Case& c : cases) {
                    DecisionOutcome o = decide_full(model, c, config.eta, config.locality,
                                                    &model.duplicates, config.heuristic, rng);
                    if (o.predicted == kAbstain) continue;
                    ++decided;
                    if (o.predicted == c.label) ++correct;
                }
                return decided == 0 ? 0.0
                                    : static_cast<double>(correct) / static_cast<double>(decided);
            };
            train_accs.push_back(accuracy_over(train_cases));
            test_accs.push_back(accuracy_over(test_cases));
        }

        LearningCurvePoint p;
        p.train_fraction = fraction;
        p.repetitions = repetitions;
        double train_sum = 0.0, test_sum = 0.0;
        for (double a : train_accs) train_sum += a;
        for (double a : test_accs) test_sum += a;
        p.train_accuracy = train_sum / repetitions;
        p.test_accuracy = test_sum / repetitions;
        double var = 0.0;
        for (double a : test_accs) var += (a - p.test_accuracy) * (a - p.test_accuracy);
        p.test_std = std::sqrt(var / repetitions);
        points.push_back(p);
    }
    return points;
}

// ---- artifact writers (all byte-deterministic: no timestamps, shortest
// round-trip float formatting) ----

namespace detail {

inline std::string fmt_double(double v) {
    char buf[32];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    (void)ec;
    return std::string(buf, ptr);
}

inline std::ofstream open_out(const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot open output file '" + path + "'");
    return out;
}

}  // namespace detail

inline std::string label_token(int label) {
    if (label == +1) return "1";
    if (label == -1) return "-1";
    return "abstain";
}

inline void write_predictions_csv(const std::string& path,
                                  const std::vector<PredictionRecord>& predictions) {
    auto out = detail::open_out(path);
    out << "case_id,true_label,predicted,s,s_pos,s_neg,coverage,path\n";
    for (const auto& p : predictions) {
        out << p.case_id << ',' << (p.truth == 0 ? std::string() : label_token(p.truth)) << ','
            << label_token(p.predicted) << ',' << detail::fmt_double(p.s) << ','
            << detail::fmt_double(p.s_pos) << ',' << detail::fmt_double(p.s_neg) << ','
            << detail::fmt_double(p.coverage) << ',' << to_string(p.path) << '\n';
    }
}

inline void write_calibration_csv(const std::string& path, const CalibrationHistogram& hist) {
    auto out = detail::open_out(path);
    out << "bin_low,bin_high,correct,incorrect\n";
    for (const auto& b : hist.bins)
        out << detail::fmt_double(b.low) << ',' << detail::fmt_double(b.high) << ',' << b.correct
            << ',' << b.incorrect << '\n';
}

inline void write_curve_csv(const std::string& path,
                            const std::vector<LearningCurvePoint>& points) {
    auto out = detail::open_out(path);
    out << "train_fraction,train_accuracy,test_accuracy,repetitions,test_std\n";
    for (const auto& p : points)
        out << detail::fmt_double(p.train_fraction) << ',' << detail::fmt_double(p.train_accuracy)
            << ',' << detail::fmt_double(p.test_accuracy) << ',' << p.repetitions << ','
            << detail::fmt_double(p.test_std) << '\n';
}

inline nlohmann::json matrix_json(const ConfusionMatrix& m) {
    return {{"tp", m.tp}, {"fn", m.fn}, {"fp", m.fp}, {"tn", m.tn}};
}

inline nlohmann::json metrics_json(const MetricsReport& r) {
    return {{"accuracy", r.accuracy},
            {"recall", r.recall},
            {"specificity", r.specificity},
            {"precision", r.precision},
            {"npv", r.npv},
            {"f1", r.f1},
            {"mcc", r.mcc},
            {"abstention_coverage", r.abstention_coverage}};
}

inline nlohmann::json eta_json(const EtaConfig& eta) {
    return {{"eta_pos", eta.eta_pos},
            {"eta_neg", eta.eta_neg},
            {"eta_bar_pos", eta.eta_bar_pos},
            {"eta_bar_neg", eta.eta_bar_neg},
            {"label_pos_weak", eta.label_pos_weak},
            {"label_neg_weak", eta.label_neg_weak}};
}

inline void write_metrics_json(const std::string& path, const CvResult& result,
                               const nlohmann::json& resolved_config) {
    nlohmann::json doc;
    doc["config"] = resolved_config;
    auto& folds = doc["folds"] = nlohmann::json::array();
    for (const auto& fr : result.folds) {
        nlohmann::json jf;
        jf["fold"] = fr.fold;
        jf["matrix"] = matrix_json(fr.matrix);
        jf["metrics"] = metrics_json(fr.metrics);
        jf["test_count"] = fr.test_count;
        jf["abstained"] = fr.abstained;
        jf["eta_used"] = eta_json(fr.eta_used);
        if (!fr.tune_tuned_accuracy.empty()) {
            jf["tuning"] = {{"inner_untuned_accuracy", fr.tune_untuned_accuracy},
                            {"inner_tuned_accuracy", fr.tune_tuned_accuracy}};
        }
        folds.push_back(std::move(jf));
    }
    doc["aggregate"] = {{"summed_matrix", matrix_json(result.summed_matrix)},
                        {"mean_matrix", matrix_json(result.mean_matrix)},
                        {"metrics_of_summed", metrics_json(result.metrics_of_summed)},
                        {"mean_of_fold_metrics", metrics_json(result.mean_of_fold_metrics)}};
    auto out = detail::open_out(path);
    out << doc.dump(2) << '\n';
}

}  // namespace hcbr
