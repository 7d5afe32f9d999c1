// Command-line front end for the hypergraph case-based reasoning library.
// Subcommands: evaluate, train, predict, tune, sweep, curve, bench, probe.
// Exit codes: 0 success, 1 usage/configuration error, 2 data error.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "hcbr/dataset.hpp"
#include "hcbr/decision.hpp"
#include "hcbr/harness.hpp"
#include "hcbr/metrics.hpp"
#include "hcbr/partition.hpp"
#include "hcbr/probe.hpp"
#include "hcbr/strength.hpp"
#include "hcbr/tuning.hpp"

namespace fs = std::filesystem;

namespace {

struct DataFlags {
    std::string path;
    std::string format = "auto";  // auto: by extension
    std::string label_column;
    std::string positive = "+1";
    std::string negative = "-1";
    std::string missing = ",?";  // comma-separated missing tokens
    std::string delimiter = ",";
};

void add_data_flags(CLI::App* cmd, DataFlags& df, bool require_path = true) {
    auto* opt = cmd->add_option("--data", df.path, "Input dataset file");
    if (require_path) opt->required();
    cmd->add_option("--format", df.format, "Input format: csv, sparse or auto (by extension)")
        ->check(CLI::IsMember({"auto", "csv", "sparse"}))
        ->capture_default_str();
    cmd->add_option("--label-column", df.label_column, "CSV column holding the label");
    cmd->add_option("--positive", df.positive, "Label token mapped to +1")->capture_default_str();
    cmd->add_option("--negative", df.negative, "Label token mapped to -1")->capture_default_str();
    cmd->add_option("--missing", df.missing,
                    "Comma-separated cell values treated as missing (CSV only)")
        ->capture_default_str();
    cmd->add_option("--delimiter", df.delimiter, "CSV field delimiter")->capture_default_str();
}

std::vector<std::string> split_list(const std::string& text) {
    std::vector<std::string> out;
    std::string item;
    std::istringstream in(text);
    while (std::getline(in, item, ',')) out.push_back(item);
    if (!text.empty() && text.back() == ',') out.push_back("");
    if (text.empty()) out.push_back("");
    return out;
}

hcbr::Dataset load_data(const DataFlags& df, bool require_labels) {
    std::string format = df.format;
    if (format == "auto")
        format = df.path.size() >= 4 && df.path.substr(df.path.size() - 4) == ".csv" ? "csv"
                                                                                     : "sparse";
    std::ifstream in(df.path, std::ios::binary);
    if (!in) throw hcbr::DataError("cannot open data file '" + df.path + "'");

    if (format == "csv") {
        hcbr::CsvConfig cfg;
        cfg.label_column = df.label_column;
        cfg.positive_token = df.positive;
        cfg.negative_token = df.negative;
        cfg.missing_tokens = split_list(df.missing);
        if (df.delimiter.size() != 1)
            throw hcbr::ConfigError("--delimiter must be a single character");
        cfg.delimiter = df.delimiter[0];
        cfg.require_labels = require_labels;
        if (require_labels && cfg.label_column.empty())
            throw hcbr::ConfigError("--label-column is required for csv input");
        return hcbr::parse_csv(in, cfg);
    }
    hcbr::SparseConfig cfg;
    cfg.positive_token = df.positive;
    cfg.negative_token = df.negative;
    cfg.require_labels = require_labels;
    return hcbr::parse_sparse(in, cfg);
}

nlohmann::json data_json(const DataFlags& df) {
    return {{"path", df.path},         {"format", df.format},   {"label_column", df.label_column},
            {"positive", df.positive}, {"negative", df.negative}, {"missing", df.missing},
            {"delimiter", df.delimiter}};
}

struct EtaFlags {
    double eta_pos = 0.0, eta_neg = 0.0, eta_bar_pos = 0.0, eta_bar_neg = 0.0;
};

void add_eta_flags(CLI::App* cmd, EtaFlags& ef) {
    cmd->add_option("--eta-pos", ef.eta_pos, "Minimum positive-side support")
        ->capture_default_str();
    cmd->add_option("--eta-neg", ef.eta_neg, "Minimum negative-side support")
        ->capture_default_str();
    cmd->add_option("--eta-bar-pos", ef.eta_bar_pos,
                    "Required positive share of combined support, in [0,1)")
        ->capture_default_str();
    cmd->add_option("--eta-bar-neg", ef.eta_bar_neg,
                    "Required negative share of combined support, in [0,1)")
        ->capture_default_str();
}

hcbr::EtaConfig make_eta(const EtaFlags& ef) {
    hcbr::EtaConfig eta;
    eta.eta_pos = ef.eta_pos;
    eta.eta_neg = ef.eta_neg;
    eta.eta_bar_pos = ef.eta_bar_pos;
    eta.eta_bar_neg = ef.eta_bar_neg;
    eta.validate();
    return eta;
}

hcbr::LocalityConfig make_locality(const std::string& locality, const std::string& fallback) {
    hcbr::LocalityConfig lc;
    if (locality == "off") {
        lc.mode = hcbr::LocalityMode::off;
    } else if (locality.rfind("abs:", 0) == 0 || locality.rfind("ratio:", 0) == 0) {
        bool absolute = locality[0] == 'a';
        lc.mode = absolute ? hcbr::LocalityMode::absolute : hcbr::LocalityMode::ratio;
        try {
            lc.threshold = std::stod(locality.substr(locality.find(':') + 1));
        } catch (const std::exception&) {
            throw hcbr::ConfigError("--locality threshold is not a number: " + locality);
        }
    } else {
        throw hcbr::ConfigError("--locality must be off, abs:<count> or ratio:<fraction>");
    }
    if (fallback == "bernoulli")
        lc.fallback = hcbr::LocalityFallback::bernoulli;
    else if (fallback == "majority")
        lc.fallback = hcbr::LocalityFallback::majority_class;
    else
        throw hcbr::ConfigError("--fallback must be bernoulli or majority");
    lc.validate();
    return lc;
}

bool make_heuristic(const std::string& value) {
    if (value == "on") return true;
    if (value == "off") return false;
    throw hcbr::ConfigError("--heuristic must be on or off");
}

nlohmann::json locality_json(const std::string& locality, const std::string& fallback) {
    return {{"locality", locality}, {"fallback", fallback}};
}

void write_manifest(const std::string& path, const nlohmann::json& manifest) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw hcbr::DataError("cannot open output file '" + path + "'");
    out << manifest.dump(2) << '\n';
}

// Per-class shuffled split: the first round(fraction*n) of each class train,
// the rest test.
std::pair<std::vector<hcbr::Case>, std::vector<hcbr::Case>> split_stratified(
    const hcbr::Dataset& ds, double fraction, std::uint64_t seed) {
    if (fraction <= 0.0 || fraction >= 1.0)
        throw hcbr::ConfigError("--split must lie strictly between 0 and 1");
    std::vector<std::uint32_t> pos, neg;
    for (std::uint32_t i = 0; i < ds.cases.size(); ++i)
        (ds.cases[i].label == +1 ? pos : neg).push_back(i);
    if (pos.size() < 2 || neg.size() < 2)
        throw hcbr::DataError("split: need at least 2 cases per class");
    std::mt19937_64 rng(seed);
    hcbr::shuffle_vec(pos, rng);
    hcbr::shuffle_vec(neg, rng);
    std::pair<std::vector<hcbr::Case>, std::vector<hcbr::Case>> out;
    auto assign = [&](const std::vector<std::uint32_t>& idx) {
        auto take = std::clamp<std::size_t>(
            static_cast<std::size_t>(std::llround(fraction * static_cast<double>(idx.size()))), 1,
            idx.size() - 1);
        for (std::size_t i = 0; i < idx.size(); ++i)
            (i < take ? out.first : out.second).push_back(ds.cases[idx[i]]);
    };
    assign(pos);
    assign(neg);
    return out;
}

std::vector<double> parse_fractions(const std::string& text) {
    std::vector<double> out;
    for (const auto& item : split_list(text)) {
        try {
            out.push_back(std::stod(item));
        } catch (const std::exception&) {
            throw hcbr::ConfigError("--fractions entry is not a number: '" + item + "'");
        }
    }
    return out;
}

std::vector<int> parse_int_list(const std::string& text, const std::string& flag) {
    std::vector<int> out;
    for (const auto& item : split_list(text)) {
        try {
            out.push_back(std::stoi(item));
        } catch (const std::exception&) {
            throw hcbr::ConfigError(flag + " entry is not an integer: '" + item + "'");
        }
    }
    return out;
}

std::string fmt(double v) { return hcbr::detail::fmt_double(v); }

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Hypergraph case-based reasoning binary classifier"};
    app.require_subcommand(1);
    app.set_config("--config", "", "Read options from a key=value config file");

    // ---- evaluate / tune ----
    struct EvalFlags {
        DataFlags data;
        EtaFlags eta;
        int folds = 10, iterations = 1, tune_folds = 10, threads = 0, bins = 20;
        std::uint64_t seed = 0;
        bool tune = false;
        std::string heuristic = "on", locality = "off", fallback = "bernoulli";
        std::string out_dir = "out";
    };
    auto add_eval_like = [&](CLI::App* cmd, EvalFlags& ef, bool tuned) {
        add_data_flags(cmd, ef.data);
        add_eta_flags(cmd, ef.eta);
        cmd->add_option("--folds", ef.folds, "Cross-validation fold count")
            ->capture_default_str();
        cmd->add_option("--iterations", ef.iterations, "Training passes over the data")
            ->capture_default_str();
        cmd->add_option("--seed", ef.seed, "Random seed")->capture_default_str();
        cmd->add_option("--threads", ef.threads, "Worker threads (0 = hardware)")
            ->capture_default_str();
        cmd->add_option("--bins", ef.bins, "Calibration histogram bins")->capture_default_str();
        cmd->add_option("--heuristic", ef.heuristic,
                        "Duplicate-signature bypass: on or off")
            ->capture_default_str();
        cmd->add_option("--locality", ef.locality, "off, abs:<count> or ratio:<fraction>")
            ->capture_default_str();
        cmd->add_option("--fallback", ef.fallback,
                        "Low-overlap fallback: bernoulli or majority")
            ->capture_default_str();
        cmd->add_option("--out-dir", ef.out_dir, "Output directory")->capture_default_str();
        if (tuned) {
            ef.tune = true;
            cmd->add_option("--tune-folds", ef.tune_folds, "Inner fold count for tuning")
                ->capture_default_str();
        } else {
            cmd->add_flag("--tune", ef.tune, "Tune thresholds by nested cross-validation");
            cmd->add_option("--tune-folds", ef.tune_folds, "Inner fold count for tuning")
                ->capture_default_str();
        }
    };
    auto run_eval_like = [](const EvalFlags& ef, const std::string& command) {
        hcbr::Dataset ds = load_data(ef.data, true);
        hcbr::ExperimentConfig cfg;
        cfg.folds = ef.folds;
        cfg.iterations = ef.iterations;
        cfg.seed = ef.seed;
        cfg.eta = make_eta(ef.eta);
        cfg.tune = ef.tune;
        cfg.tune_folds = ef.tune_folds;
        cfg.locality = make_locality(ef.locality, ef.fallback);
        cfg.heuristic = make_heuristic(ef.heuristic);
        cfg.threads = ef.threads;
        cfg.calibration_bins = ef.bins;

        hcbr::CvResult result = hcbr::run_cv(ds, cfg);

        fs::create_directories(ef.out_dir);
        nlohmann::json manifest = {{"command", command},
                                   {"data", data_json(ef.data)},
                                   {"folds", ef.folds},
                                   {"iterations", ef.iterations},
                                   {"seed", ef.seed},
                                   {"eta", hcbr::eta_json(cfg.eta)},
                                   {"tune", cfg.tune},
                                   {"tune_folds", ef.tune_folds},
                                   {"heuristic", ef.heuristic},
                                   {"locality", locality_json(ef.locality, ef.fallback)},
                                   {"threads", ef.threads},
                                   {"bins", ef.bins},
                                   {"out_dir", ef.out_dir}};
        write_manifest(ef.out_dir + "/manifest.json", manifest);
        hcbr::write_metrics_json(ef.out_dir + "/metrics.json", result, manifest);
        hcbr::write_predictions_csv(ef.out_dir + "/predictions.csv", result.predictions);
        hcbr::write_calibration_csv(ef.out_dir + "/calibration.csv", result.calibration);

        const auto& m = result.metrics_of_summed;
        std::cout << "folds=" << ef.folds << " cases=" << ds.cases.size()
                  << " accuracy=" << fmt(m.accuracy) << " mcc=" << fmt(m.mcc)
                  << " mean_fold_accuracy=" << fmt(result.mean_of_fold_metrics.accuracy)
                  << " coverage=" << fmt(m.abstention_coverage) << '\n';
    };

    EvalFlags eval_flags;
    auto* cmd_eval = app.add_subcommand("evaluate", "Stratified cross-validation");
    add_eval_like(cmd_eval, eval_flags, false);
    cmd_eval->callback([&] { run_eval_like(eval_flags, "evaluate"); });

    EvalFlags tune_flags;
    auto* cmd_tune =
        app.add_subcommand("tune", "Cross-validation with nested threshold tuning");
    add_eval_like(cmd_tune, tune_flags, true);
    cmd_tune->callback([&] { run_eval_like(tune_flags, "tune"); });

    // ---- train ----
    struct TrainFlags {
        DataFlags data;
        int iterations = 1;
        std::uint64_t seed = 0;
        std::string out = "model.hcbr";
    } train_flags;
    auto* cmd_train = app.add_subcommand("train", "Fit a model and save it");
    add_data_flags(cmd_train, train_flags.data);
    cmd_train->add_option("--iterations", train_flags.iterations, "Training passes")
        ->capture_default_str();
    cmd_train->add_option("--seed", train_flags.seed, "Random seed")->capture_default_str();
    cmd_train->add_option("--out", train_flags.out, "Model output path")->capture_default_str();
    cmd_train->callback([&] {
        hcbr::Dataset ds = load_data(train_flags.data, true);
        hcbr::ModelArtifact model =
            hcbr::fit_model(ds.cases, ds.interner, train_flags.iterations, train_flags.seed);
        hcbr::save_model(model, train_flags.out);
        nlohmann::json manifest = {{"command", "train"},
                                   {"data", data_json(train_flags.data)},
                                   {"iterations", train_flags.iterations},
                                   {"seed", train_flags.seed},
                                   {"out", train_flags.out}};
        write_manifest(train_flags.out + ".manifest.json", manifest);
        std::cout << "trained on " << ds.cases.size() << " cases, "
                  << model.partition.block_count() << " blocks -> " << train_flags.out << '\n';
    });

    // ---- predict ----
    struct PredictFlags {
        DataFlags data;
        EtaFlags eta;
        std::string model;
        std::string heuristic = "on", locality = "off", fallback = "bernoulli";
        std::uint64_t seed = 0;
        std::string out_dir = "out";
    } predict_flags;
    auto* cmd_predict = app.add_subcommand("predict", "Classify cases with a saved model");
    add_data_flags(cmd_predict, predict_flags.data);
    add_eta_flags(cmd_predict, predict_flags.eta);
    cmd_predict->add_option("--model", predict_flags.model, "Model file from `train`")
        ->required();
    cmd_predict->add_option("--heuristic", predict_flags.heuristic, "on or off")
        ->capture_default_str();
    cmd_predict->add_option("--locality", predict_flags.locality,
                            "off, abs:<count> or ratio:<fraction>")
        ->capture_default_str();
    cmd_predict->add_option("--fallback", predict_flags.fallback, "bernoulli or majority")
        ->capture_default_str();
    cmd_predict->add_option("--seed", predict_flags.seed, "Random seed")->capture_default_str();
    cmd_predict->add_option("--out-dir", predict_flags.out_dir, "Output directory")
        ->capture_default_str();
    cmd_predict->callback([&] {
        hcbr::ModelArtifact model = hcbr::load_model(predict_flags.model);
        hcbr::Dataset ds = load_data(predict_flags.data, false);
        hcbr::EtaConfig eta = make_eta(predict_flags.eta);
        hcbr::LocalityConfig locality =
            make_locality(predict_flags.locality, predict_flags.fallback);
        bool heuristic = make_heuristic(predict_flags.heuristic);
        std::mt19937_64 rng(predict_flags.seed);

        std::vector<hcbr::PredictionRecord> records;
        std::uint64_t correct = 0, decided_labeled = 0;
        bool all_labeled = true;
        for (const hcbr::Case& raw : ds.cases) {
            hcbr::Case mapped;
            mapped.case_id = raw.case_id;
            mapped.label = raw.label;
            std::uint32_t unknown = 0;
            for (hcbr::FeatureId f : raw.features) {
                if (auto id = model.interner.find(ds.interner.token(f)))
                    mapped.features.push_back(*id);
                else
                    ++unknown;
            }
            std::sort(mapped.features.begin(), mapped.features.end());
            hcbr::DecisionOutcome outcome = hcbr::decide_full(
                model, mapped, eta, locality, &model.duplicates, heuristic, rng, unknown);
            hcbr::PredictionRecord rec;
            rec.case_id = raw.case_id;
            rec.truth = raw.label;
            rec.predicted = outcome.predicted;
            rec.s = outcome.support.s;
            rec.s_pos = outcome.support.s_pos;
            rec.s_neg = outcome.support.s_neg;
            rec.coverage = outcome.support.coverage;
            rec.path = outcome.path;
            records.push_back(rec);
            if (raw.label == 0) {
                all_labeled = false;
            } else if (outcome.predicted != hcbr::kAbstain) {
                ++decided_labeled;
                if (outcome.predicted == raw.label) ++correct;
            }
        }
        fs::create_directories(predict_flags.out_dir);
        nlohmann::json manifest = {{"command", "predict"},
                                   {"model", predict_flags.model},
                                   {"data", data_json(predict_flags.data)},
                                   {"eta", hcbr::eta_json(eta)},
                                   {"heuristic", predict_flags.heuristic},
                                   {"locality", locality_json(predict_flags.locality,
                                                              predict_flags.fallback)},
                                   {"seed", predict_flags.seed},
                                   {"out_dir", predict_flags.out_dir}};
        write_manifest(predict_flags.out_dir + "/manifest.json", manifest);
        hcbr::write_predictions_csv(predict_flags.out_dir + "/predictions.csv", records);
        std::cout << "predicted " << records.size() << " cases";
        if (all_labeled && decided_labeled > 0)
            std::cout << ", accuracy="
                      << fmt(static_cast<double>(correct) /
                             static_cast<double>(decided_labeled));
        std::cout << '\n';
    });

    // ---- sweep ----
    struct SweepFlags {
        DataFlags data;
        double split = 0.9;
        int points = 50, iterations = 1;
        std::uint64_t seed = 0;
        std::string out_dir = "out";
    } sweep_flags;
    auto* cmd_sweep = app.add_subcommand(
        "sweep", "Accuracy/coverage trade-off over symmetric abstention thresholds");
    add_data_flags(cmd_sweep, sweep_flags.data);
    cmd_sweep->add_option("--split", sweep_flags.split, "Training fraction of the split")
        ->capture_default_str();
    cmd_sweep->add_option("--points", sweep_flags.points, "Number of thresholds on the sweep")
        ->capture_default_str();
    cmd_sweep->add_option("--iterations", sweep_flags.iterations, "Training passes")
        ->capture_default_str();
    cmd_sweep->add_option("--seed", sweep_flags.seed, "Random seed")->capture_default_str();
    cmd_sweep->add_option("--out-dir", sweep_flags.out_dir, "Output directory")
        ->capture_default_str();
    cmd_sweep->callback([&] {
        if (sweep_flags.points < 2) throw hcbr::ConfigError("--points must be >= 2");
        hcbr::Dataset ds = load_data(sweep_flags.data, true);
        auto [train_cases, test_cases] =
            split_stratified(ds, sweep_flags.split, sweep_flags.seed);
        hcbr::ModelArtifact model = hcbr::fit_model(train_cases, ds.interner,
                                                    sweep_flags.iterations, sweep_flags.seed);

        // Threshold grid: 0 plus a log-spaced ramp across the range where the
        // winning-side supports of the held-out set actually live. Below the
        // smallest value every case is decided and above the largest none is,
        // so this spends the whole grid where coverage changes; the last point
        // sits just past the maximum and abstains on everything.
        double sup_min = std::numeric_limits<double>::infinity(), sup_max = 0.0;
        for (const hcbr::Case& c : test_cases) {
            hcbr::SupportBreakdown sb = hcbr::support(model, model.partition.project(c.features));
            double winning = sb.s > 0.0 ? sb.s_pos : sb.s_neg;
            if (winning > 0.0) {
                sup_min = std::min(sup_min, winning);
                sup_max = std::max(sup_max, winning);
            }
        }
        if (sup_max <= 0.0) {
            sup_min = 1e-4;
            sup_max = 1.0;
        }
        std::vector<double> etas{0.0};
        const double lo = sup_min * 0.999999, hi = sup_max * 1.000001;
        const int ramp = sweep_flags.points - 1;
        for (int i = 0; i < ramp; ++i) {
            double t = ramp == 1 ? 1.0 : static_cast<double>(i) / (ramp - 1);
            etas.push_back(lo * std::pow(hi / lo, t));
        }
        hcbr::SweepResult res = hcbr::sweep_eta(model, test_cases, etas);

        fs::create_directories(sweep_flags.out_dir);
        nlohmann::json manifest = {{"command", "sweep"},
                                   {"data", data_json(sweep_flags.data)},
                                   {"split", sweep_flags.split},
                                   {"points", sweep_flags.points},
                                   {"iterations", sweep_flags.iterations},
                                   {"seed", sweep_flags.seed},
                                   {"out_dir", sweep_flags.out_dir}};
        write_manifest(sweep_flags.out_dir + "/manifest.json", manifest);
        {
            std::ofstream out(sweep_flags.out_dir + "/sweep.csv", std::ios::binary);
            out << "eta,coverage,decided,accuracy\n";
            for (const auto& p : res.points) {
                out << fmt(p.eta) << ',' << fmt(p.coverage) << ',' << p.decided << ',';
                if (p.accuracy) out << fmt(*p.accuracy);
                out << '\n';
            }
        }
        {
            std::ofstream out(sweep_flags.out_dir + "/frontier.csv", std::ios::binary);
            out << "accuracy,coverage\n";
            for (const auto& [accuracy, coverage] : res.frontier)
                out << fmt(accuracy) << ',' << fmt(coverage) << '\n';
        }
        std::cout << "sweep over " << res.points.size() << " thresholds, "
                  << res.frontier.size() << " on the frontier -> " << sweep_flags.out_dir
                  << "/sweep.csv\n";
    });

    // ---- curve ----
    struct CurveFlags {
        DataFlags data;
        std::string fractions = "0.1,0.2,0.3,0.4,0.5,0.6,0.7,0.8,0.9";
        int reps = 10, iterations = 1, threads = 0;
        std::uint64_t seed = 0;
        std::string heuristic = "off", locality = "off", fallback = "bernoulli";
        std::string out_dir = "out";
    } curve_flags;
    auto* cmd_curve = app.add_subcommand("curve", "Accuracy as a function of training size");
    add_data_flags(cmd_curve, curve_flags.data);
    cmd_curve->add_option("--fractions", curve_flags.fractions,
                          "Comma-separated training fractions in (0,1)")
        ->capture_default_str();
    cmd_curve->add_option("--reps", curve_flags.reps, "Repetitions per fraction")
        ->capture_default_str();
    cmd_curve->add_option("--iterations", curve_flags.iterations, "Training passes")
        ->capture_default_str();
    cmd_curve->add_option("--seed", curve_flags.seed, "Random seed")->capture_default_str();
    cmd_curve->add_option("--heuristic", curve_flags.heuristic,
                          "Duplicate bypass during curve evaluation (default off)")
        ->capture_default_str();
    cmd_curve->add_option("--out-dir", curve_flags.out_dir, "Output directory")
        ->capture_default_str();
    cmd_curve->callback([&] {
        hcbr::Dataset ds = load_data(curve_flags.data, true);
        hcbr::ExperimentConfig cfg;
        cfg.iterations = curve_flags.iterations;
        cfg.seed = curve_flags.seed;
        cfg.heuristic = make_heuristic(curve_flags.heuristic);
        cfg.locality = make_locality(curve_flags.locality, curve_flags.fallback);
        auto points =
            hcbr::learning_curve(ds, cfg, parse_fractions(curve_flags.fractions),
                                 curve_flags.reps);
        fs::create_directories(curve_flags.out_dir);
        nlohmann::json manifest = {{"command", "curve"},
                                   {"data", data_json(curve_flags.data)},
                                   {"fractions", curve_flags.fractions},
                                   {"reps", curve_flags.reps},
                                   {"iterations", curve_flags.iterations},
                                   {"seed", curve_flags.seed},
                                   {"heuristic", curve_flags.heuristic},
                                   {"out_dir", curve_flags.out_dir}};
        write_manifest(curve_flags.out_dir + "/manifest.json", manifest);
        hcbr::write_curve_csv(curve_flags.out_dir + "/curve.csv", points);
        std::cout << "curve with " << points.size() << " points -> " << curve_flags.out_dir
                  << "/curve.csv\n";
    });

    // ---- bench ----
    struct BenchFlags {
        std::string n_list;
        std::string m_list = "10";
        int reps = 5;
        std::string out_dir = "out";
    } bench_flags;
    auto* cmd_bench =
        app.add_subcommand("bench", "Time partition and strength construction");
    cmd_bench->add_option("--n", bench_flags.n_list, "Comma-separated case counts")->required();
    cmd_bench->add_option("--m", bench_flags.m_list, "Comma-separated overlap widths")
        ->capture_default_str();
    cmd_bench->add_option("--reps", bench_flags.reps, "Repetitions per size")
        ->capture_default_str();
    cmd_bench->add_option("--out-dir", bench_flags.out_dir, "Output directory")
        ->capture_default_str();
    cmd_bench->callback([&] {
        auto records = hcbr::bench_build(parse_int_list(bench_flags.n_list, "--n"),
                                         parse_int_list(bench_flags.m_list, "--m"),
                                         bench_flags.reps);
        fs::create_directories(bench_flags.out_dir);
        nlohmann::json manifest = {{"command", "bench"},
                                   {"n", bench_flags.n_list},
                                   {"m", bench_flags.m_list},
                                   {"reps", bench_flags.reps},
                                   {"out_dir", bench_flags.out_dir}};
        write_manifest(bench_flags.out_dir + "/manifest.json", manifest);
        std::ofstream out(bench_flags.out_dir + "/bench.csv", std::ios::binary);
        out << "n,m,build_ms,strength_ms,partition_size\n";
        for (const auto& r : records) {
            out << r.n << ',' << r.m << ',' << fmt(r.build_ms) << ',' << fmt(r.strength_ms)
                << ',' << r.partition_size << '\n';
            std::cout << "n=" << r.n << " m=" << r.m << " build=" << fmt(r.build_ms)
                      << "ms strength=" << fmt(r.strength_ms) << "ms blocks=" << r.partition_size
                      << '\n';
        }
    });

    // ---- probe ----
    struct ProbeFlags {
        DataFlags data;
        double split = 0.9, alpha = 10.0, sigma = 0.0, c = 0.1;
        int generations = 100, population = 100, offspring = 100, iterations = 1;
        std::uint64_t seed = 0;
        std::string out_dir = "out";
    } probe_flags;
    auto* cmd_probe = app.add_subcommand(
        "probe", "Search for strength perturbations that raise training MCC");
    add_data_flags(cmd_probe, probe_flags.data);
    cmd_probe->add_option("--split", probe_flags.split, "Training fraction of the split")
        ->capture_default_str();
    cmd_probe->add_option("--generations", probe_flags.generations, "Generations")
        ->capture_default_str();
    cmd_probe->add_option("--population", probe_flags.population, "Population size")
        ->capture_default_str();
    cmd_probe->add_option("--offspring", probe_flags.offspring, "Offspring per generation")
        ->capture_default_str();
    cmd_probe->add_option("--alpha", probe_flags.alpha,
                          "Mutation scale divisor (sigma = strength spread / alpha)")
        ->capture_default_str();
    cmd_probe->add_option("--sigma", probe_flags.sigma,
                          "Explicit mutation std (overrides --alpha derivation)")
        ->capture_default_str();
    cmd_probe->add_option("--c", probe_flags.c, "Perturbation-norm regularization factor")
        ->capture_default_str();
    cmd_probe->add_option("--iterations", probe_flags.iterations, "Training passes")
        ->capture_default_str();
    cmd_probe->add_option("--seed", probe_flags.seed, "Random seed")->capture_default_str();
    cmd_probe->add_option("--out-dir", probe_flags.out_dir, "Output directory")
        ->capture_default_str();
    cmd_probe->callback([&] {
        hcbr::Dataset ds = load_data(probe_flags.data, true);
        auto [train_cases, test_cases] =
            split_stratified(ds, probe_flags.split, probe_flags.seed);
        hcbr::ModelArtifact model = hcbr::fit_model(train_cases, ds.interner,
                                                    probe_flags.iterations, probe_flags.seed);
        hcbr::ProbeConfig pc;
        pc.population = probe_flags.population;
        pc.offspring = probe_flags.offspring;
        pc.generations = probe_flags.generations;
        pc.c = probe_flags.c;
        pc.alpha = probe_flags.alpha;
        pc.sigma = probe_flags.sigma;
        pc.seed = probe_flags.seed;
        hcbr::ProbeResult res = hcbr::probe_model_space(model, train_cases, pc, &test_cases);

        fs::create_directories(probe_flags.out_dir);
        nlohmann::json manifest = {{"command", "probe"},
                                   {"data", data_json(probe_flags.data)},
                                   {"split", probe_flags.split},
                                   {"generations", probe_flags.generations},
                                   {"population", probe_flags.population},
                                   {"offspring", probe_flags.offspring},
                                   {"alpha", probe_flags.alpha},
                                   {"sigma", probe_flags.sigma},
                                   {"c", probe_flags.c},
                                   {"iterations", probe_flags.iterations},
                                   {"seed", probe_flags.seed},
                                   {"out_dir", probe_flags.out_dir}};
        write_manifest(probe_flags.out_dir + "/manifest.json", manifest);
        {
            std::ofstream out(probe_flags.out_dir + "/probe_history.csv", std::ios::binary);
            out << "generation,max_fitness,mean_fitness\n";
            for (const auto& h : res.history)
                out << h.generation << ',' << fmt(h.max_fitness) << ',' << fmt(h.mean_fitness)
                    << '\n';
        }
        double norm2 = 0.0;
        for (double d : res.best_delta) norm2 += d * d;
        nlohmann::json report = {{"sigma", res.sigma},
                                 {"initial_train_mcc", res.initial_train_mcc},
                                 {"final_train_mcc", res.final_train_mcc},
                                 {"train_mcc_improvement",
                                  res.final_train_mcc - res.initial_train_mcc},
                                 {"best_delta_norm2", norm2}};
        if (res.initial_test_mcc) {
            report["initial_test_mcc"] = *res.initial_test_mcc;
            report["final_test_mcc"] = *res.final_test_mcc;
            report["test_mcc_improvement"] = *res.final_test_mcc - *res.initial_test_mcc;
        }
        write_manifest(probe_flags.out_dir + "/probe.json", report);
        std::cout << "train MCC " << fmt(res.initial_train_mcc) << " -> "
                  << fmt(res.final_train_mcc) << " over " << probe_flags.generations
                  << " generations\n";
    });

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 1;
    } catch (const hcbr::ConfigError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    } catch (const hcbr::DataError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    }
    return 0;
}
