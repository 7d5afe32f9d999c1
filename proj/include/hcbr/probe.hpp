#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "hcbr/dataset.hpp"
#include "hcbr/metrics.hpp"
#include "hcbr/partition.hpp"
#include "hcbr/rng.hpp"
#include "hcbr/strength.hpp"

namespace hcbr {

// Sparse row-major weight matrix: one row per case, entries (block, weight)
// with weight = intersection/|case|. Rows of training cases sum to 1.
struct WeightMatrix {
    struct Entry {
        std::uint32_t block;
        double weight;
    };
    std::vector<std::vector<Entry>> rows;

    static WeightMatrix from_training(const Partition& partition,
                                      const std::vector<Case>& cases) {
        WeightMatrix w;
        w.rows.resize(cases.size());
        const auto& projections = partition.case_projections();
        if (projections.size() != cases.size())
            throw DataError("weight matrix: partition was not built from these cases");
        for (std::size_t i = 0; i < cases.size(); ++i) {
            const double qs = static_cast<double>(cases[i].features.size());
            for (std::uint32_t b : projections[i])
                w.rows[i].push_back({b, static_cast<double>(partition.blocks()[b].size()) / qs});
        }
        return w;
    }

    static WeightMatrix from_queries(const Partition& partition,
                                     const std::vector<Case>& cases) {
        WeightMatrix w;
        w.rows.resize(cases.size());
        for (std::size_t i = 0; i < cases.size(); ++i) {
            Projection proj = partition.project(cases[i].features);
            const double qs = static_cast<double>(proj.query_size);
            for (const auto& e : proj.entries)
                w.rows[i].push_back({e.block_id, static_cast<double>(e.intersection) / qs});
        }
        return w;
    }
};

struct ProbeConfig {
    int population = 100;
    int offspring = 100;
    int generations = 100;
    double c = 0.1;        // regularization on ||delta||^2
    double alpha = 10.0;   // mutation std = (strength spread) / alpha
    double sigma = 0.0;    // explicit mutation std; 0 means derive from alpha
    std::uint64_t seed = 0;
};

struct ProbeHistoryEntry {
    int generation = 0;
    double max_fitness = 0.0;
    double mean_fitness = 0.0;
};

struct ProbeResult {
    std::vector<double> best_delta;
    std::vector<ProbeHistoryEntry> history;
    double sigma = 0.0;
    double initial_train_mcc = 0.0;
    double final_train_mcc = 0.0;
    std::optional<double> initial_test_mcc;
    std::optional<double> final_test_mcc;
};

namespace detail {

inline double mcc_of_predictions(const WeightMatrix& w, const std::vector<int>& labels,
                                 const std::vector<double>& strengths_plus_delta) {
    ConfusionMatrix m;
    for (std::size_t i = 0; i < w.rows.size(); ++i) {
        double s = 0.0;
        for (const auto& e : w.rows[i]) s += e.weight * strengths_plus_delta[e.block];
        int predicted = s > 0.0 ? +1 : -1;
        if (labels[i] == +1)
            (predicted == +1 ? m.tp : m.fn) += 1.0;
        else
            (predicted == +1 ? m.fp : m.tn) += 1.0;
    }
    double den = std::sqrt((m.tp + m.fp) * (m.tp + m.fn) * (m.tn + m.fp) * (m.tn + m.fn));
    return den == 0.0 ? 0.0 : (m.tp * m.tn - m.fp * m.fn) / den;
}

// spread of the strength components: the largest |mu_i - mu_j| over all
// pairs. Dividing this by the mutation factor gives a scale at which a
// single perturbation can reorder components without dwarfing them.
inline double strength_spread(const std::vector<double>& mu) {
    auto [mn, mx] = std::minmax_element(mu.begin(), mu.end());
    return mu.empty() ? 0.0 : *mx - *mn;
}

}  // namespace detail

// Searches for a perturbation delta of the block strengths that raises the
// training MCC, penalized by c*||delta||^2. Plus-selection evolution
// strategy: each individual carries the perturbation and per-component
// mutation gates; mutation adds centered gaussian noise where a gate fires,
// crossover swaps an aligned two-point segment of both vectors.
inline ProbeResult probe_model_space(const ModelArtifact& model, const std::vector<Case>& cases,
                                     const ProbeConfig& config,
                                     const std::vector<Case>* test_cases = nullptr) {
    if (config.population < 1 || config.offspring < 1 || config.generations < 0)
        throw ConfigError("probe: population/offspring must be >= 1, generations >= 0");
    if (config.c < 0.0 || config.alpha <= 0.0 || config.sigma < 0.0)
        throw ConfigError("probe: c >= 0, alpha > 0, sigma >= 0 required");

    const std::size_t m_blocks = model.partition.block_count();
    std::vector<double> mu_net(m_blocks);
    for (std::size_t b = 0; b < m_blocks; ++b) mu_net[b] = model.strengths.mu(b);

    WeightMatrix w = WeightMatrix::from_training(model.partition, cases);
    std::vector<int> labels;
    labels.reserve(cases.size());
    for (const auto& c : cases) labels.push_back(c.label);
    bool has_pos = false, has_neg = false;
    for (int l : labels) (l == +1 ? has_pos : has_neg) = true;
    if (!has_pos || !has_neg) throw DataError("probe: both classes required");

    double sigma = config.sigma;
    if (sigma == 0.0) {
        double spread = detail::strength_spread(mu_net);
        if (spread == 0.0)
            throw DataError(
                "probe: all block strengths are equal, the mutation scale cannot be derived; "
                "set an explicit sigma");
        sigma = spread / config.alpha;
    }

    struct Individual {
        std::vector<double> delta;
        std::vector<double> nu;
        double fitness = 0.0;
    };

    std::vector<double> perturbed(m_blocks);
    auto evaluate = [&](Individual& ind) {
        double norm2 = 0.0;
        for (std::size_t b = 0; b < m_blocks; ++b) {
            perturbed[b] = mu_net[b] + ind.delta[b];
            norm2 += ind.delta[b] * ind.delta[b];
        }
        ind.fitness = detail::mcc_of_predictions(w, labels, perturbed) - config.c * norm2;
    };

    std::mt19937_64 rng(config.seed);
    std::vector<Individual> population(config.population);
    for (int i = 0; i < config.population; ++i) {
        auto& ind = population[i];
        ind.delta.assign(m_blocks, 0.0);
        ind.nu.assign(m_blocks, 0.1);
        if (i > 0)
            for (std::size_t b = 0; b < m_blocks; ++b) ind.delta[b] = rand_normal(rng) * sigma;
        evaluate(ind);
    }

    auto by_fitness = [](const Individual& a, const Individual& b) { return a.fitness > b.fitness; };
    std::stable_sort(population.begin(), population.end(), by_fitness);

    ProbeResult result;
    result.sigma = sigma;
    result.initial_train_mcc = detail::mcc_of_predictions(w, labels, mu_net);

    auto record = [&](int gen) {
        double sum = 0.0;
        for (const auto& ind : population) sum += ind.fitness;
        result.history.push_back(
            {gen, population.front().fitness, sum / static_cast<double>(population.size())});
    };
    record(0);

    std::vector<Individual> offspring(config.offspring);
    for (int gen = 1; gen <= config.generations; ++gen) {
        for (int o = 0; o < config.offspring; ++o) {
            const Individual& pa = population[rand_below(rng, population.size())];
            const Individual& pb = population[rand_below(rng, population.size())];
            Individual& child = offspring[o];
            child = pa;
            if (m_blocks > 1) {
                std::size_t c1 = rand_below(rng, m_blocks);
                std::size_t c2 = rand_below(rng, m_blocks);
                if (c1 > c2) std::swap(c1, c2);
                for (std::size_t b = c1; b < c2; ++b) {
                    child.delta[b] = pb.delta[b];
                    child.nu[b] = pb.nu[b];
                }
            }
            for (std::size_t b = 0; b < m_blocks; ++b)
                if (rand_unit(rng) < child.nu[b]) child.delta[b] += rand_normal(rng) * sigma;
            evaluate(child);
        }
        population.insert(population.end(), offspring.begin(), offspring.end());
        std::stable_sort(population.begin(), population.end(), by_fitness);
        population.resize(config.population);
        record(gen);
    }

    result.best_delta = population.front().delta;
    {
        std::vector<double> best(m_blocks);
        for (std::size_t b = 0; b < m_blocks; ++b) best[b] = mu_net[b] + result.best_delta[b];
        result.final_train_mcc = detail::mcc_of_predictions(w, labels, best);
        if (test_cases != nullptr && !test_cases->empty()) {
            WeightMatrix wt = WeightMatrix::from_queries(model.partition, *test_cases);
            std::vector<int> test_labels;
            for (const auto& c : *test_cases) test_labels.push_back(c.label);
            result.initial_test_mcc = detail::mcc_of_predictions(wt, test_labels, mu_net);
            result.final_test_mcc = detail::mcc_of_predictions(wt, test_labels, best);
        }
    }
    return result;
}

// Synthetic chain instance: case i carries features {i, ..., i+m} and the
// labels alternate. Every pair of consecutive cases overlaps in m features,
// which maximizes partition splitting pressure.
inline Dataset gen_worst_case(int n, int m) {
    if (n < 1 || m < 1) throw ConfigError("gen_worst_case: need N >= 1 and m >= 1");
    Dataset ds;
    for (int i = 1; i <= n; ++i) {
        Case c;
        c.case_id = static_cast<std::uint32_t>(i - 1);
        c.label = i % 2 == 0 ? +1 : -1;
        for (int f = i; f <= i + m; ++f)
            c.features.push_back(ds.interner.intern(std::to_string(f)));
        ds.cases.push_back(std::move(c));
    }
    ds.source_meta.format = "generated";
    return ds;
}

struct BenchRecord {
    int n = 0;
    int m = 0;
    double build_ms = 0.0;
    double strength_ms = 0.0;
    std::size_t partition_size = 0;
};

namespace detail {

inline double median(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    std::size_t n = v.size();
    return n % 2 == 1 ? v[n / 2] : (v[n / 2 - 1] + v[n / 2]) / 2.0;
}

}  // namespace detail

// Times partition construction and strength computation separately on the
// synthetic chain instances; reports the median over repetitions.
inline std::vector<BenchRecord> bench_build(const std::vector<int>& n_list,
                                            const std::vector<int>& m_list, int repetitions) {
    if (n_list.empty() || m_list.empty()) throw ConfigError("bench: empty size list");
    if (repetitions < 1) throw ConfigError("bench: repetitions must be >= 1");

    std::vector<BenchRecord> records;
    for (int m : m_list) {
        for (int n : n_list) {
            Dataset ds = gen_worst_case(n, m);
            std::vector<double> build_times, strength_times;
            std::size_t partition_size = 0;
            for (int rep = 0; rep < repetitions; ++rep) {
                auto t0 = std::chrono::steady_clock::now();
                Partition p = build_partition(ds.cases);
                auto t1 = std::chrono::steady_clock::now();
                StrengthVectors sv = compute_strengths(p, ds.cases);
                auto t2 = std::chrono::steady_clock::now();
                (void)sv;
                partition_size = p.block_count();
                build_times.push_back(std::chrono::duration<double, std::milli>(t1 - t0).count());
                strength_times.push_back(
                    std::chrono::duration<double, std::milli>(t2 - t1).count());
            }
            records.push_back({n, m, detail::median(build_times), detail::median(strength_times),
                               partition_size});
        }
    }
    return records;
}

}  // namespace hcbr
