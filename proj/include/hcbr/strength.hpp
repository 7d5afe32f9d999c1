#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

#include <json.hpp>

#include "hcbr/dataset.hpp"
#include "hcbr/partition.hpp"

namespace hcbr {

// Per-class normalized block strengths. Net strength mu(e) = mu_pos - mu_neg
// is what every decision consumes.
struct StrengthVectors {
    std::vector<double> mu_pos;
    std::vector<double> mu_neg;
    int trained_iterations = 0;

    double mu(std::size_t block) const { return mu_pos[block] - mu_neg[block]; }
    std::size_t size() const { return mu_pos.size(); }
};

// Intrinsic strength of every block. For each class l and training case x,
// the case-local share of block e is d_l(e)*|e| normalized by the case total
// D_l(x); the block strength sums those shares over all cases containing e,
// scaled by |e|/|F_X|, and is finally normalized to sum to 1 per class.
inline StrengthVectors compute_strengths(const Partition& partition,
                                         const std::vector<Case>& cases) {
    const auto& blocks = partition.blocks();
    const auto& projections = partition.case_projections();
    if (projections.size() != cases.size())
        throw DataError("compute_strengths: partition was not built from these cases");

    StrengthVectors sv;
    sv.mu_pos.assign(blocks.size(), 0.0);
    sv.mu_neg.assign(blocks.size(), 0.0);

    for (std::size_t i = 0; i < cases.size(); ++i) {
        const auto& proj = projections[i];
        double d_pos_total = 0.0, d_neg_total = 0.0;
        for (std::uint32_t b : proj) {
            double sz = blocks[b].size();
            d_pos_total += static_cast<double>(blocks[b].d_pos) * sz;
            d_neg_total += static_cast<double>(blocks[b].d_neg) * sz;
        }
        for (std::uint32_t b : proj) {
            double contrib = static_cast<double>(blocks[b].size());
            if (d_pos_total > 0.0 && blocks[b].d_pos > 0)
                sv.mu_pos[b] += static_cast<double>(blocks[b].d_pos) * contrib / d_pos_total;
            if (d_neg_total > 0.0 && blocks[b].d_neg > 0)
                sv.mu_neg[b] += static_cast<double>(blocks[b].d_neg) * contrib / d_neg_total;
        }
    }

    const double universe = static_cast<double>(partition.universe_size());
    double sum_pos = 0.0, sum_neg = 0.0;
    for (std::size_t b = 0; b < blocks.size(); ++b) {
        sv.mu_pos[b] *= static_cast<double>(blocks[b].size()) / universe;
        sv.mu_neg[b] *= static_cast<double>(blocks[b].size()) / universe;
        sum_pos += sv.mu_pos[b];
        sum_neg += sv.mu_neg[b];
    }
    if (sum_pos <= 0.0 || sum_neg <= 0.0)
        throw DataError("compute_strengths: one-class training set, normalization degenerate");
    for (std::size_t b = 0; b < blocks.size(); ++b) {
        sv.mu_pos[b] /= sum_pos;
        sv.mu_neg[b] /= sum_neg;
    }
    return sv;
}

struct SupportContribution {
    std::uint32_t block_id;
    double weight;    // |x ∩ e| / |x|
    double mu;        // net strength of the block
    double weighted;  // weight * mu
};

// Support of one case: the weighted combination of block strengths over its
// projection, split by class, plus the per-block breakdown for explanations.
struct SupportBreakdown {
    double s_pos = 0.0;
    double s_neg = 0.0;
    double s = 0.0;
    double coverage = 0.0;  // 1 - |D_x|/|x|, equals the weight sum
    std::vector<SupportContribution> contributions;
};

inline SupportBreakdown support(const StrengthVectors& sv, const Projection& projection) {
    SupportBreakdown out;
    if (projection.query_size == 0) return out;
    const double qs = static_cast<double>(projection.query_size);
    out.contributions.reserve(projection.entries.size());
    for (const auto& entry : projection.entries) {
        double w = static_cast<double>(entry.intersection) / qs;
        out.s_pos += w * sv.mu_pos[entry.block_id];
        out.s_neg += w * sv.mu_neg[entry.block_id];
        double mu = sv.mu(entry.block_id);
        out.contributions.push_back({entry.block_id, w, mu, w * mu});
    }
    out.s = out.s_pos - out.s_neg;
    out.coverage = static_cast<double>(projection.covered_count()) / qs;
    std::sort(out.contributions.begin(), out.contributions.end(),
              [](const SupportContribution& a, const SupportContribution& b) {
                  double ma = std::fabs(a.weighted), mb = std::fabs(b.weighted);
                  if (ma != mb) return ma > mb;
                  return a.block_id < b.block_id;
              });
    return out;
}

// Training loop: k passes in dataset order. A misclassified case shifts, for
// every block it touches, weight*|mu(e)| of mass from the predicted class to
// the true class. |mu(e)| is read before this case's own updates; later cases
// in the same pass see the new values.
inline void train(const Partition& partition, const std::vector<Case>& cases,
                  StrengthVectors& sv, int k) {
    if (k < 0) throw ConfigError("train: iteration count must be >= 0");
    const auto& blocks = partition.blocks();
    const auto& projections = partition.case_projections();
    if (projections.size() != cases.size())
        throw DataError("train: partition was not built from these cases");

    std::vector<double> snapshot;
    for (int pass = 0; pass < k; ++pass) {
        for (std::size_t i = 0; i < cases.size(); ++i) {
            const auto& proj = projections[i];
            const double qs = static_cast<double>(cases[i].features.size());
            double s = 0.0;
            for (std::uint32_t b : proj)
                s += static_cast<double>(blocks[b].size()) / qs * sv.mu(b);
            int predicted = s > 0.0 ? +1 : -1;
            int truth = cases[i].label;
            if (predicted == truth) continue;

            snapshot.resize(proj.size());
            for (std::size_t j = 0; j < proj.size(); ++j)
                snapshot[j] = std::fabs(sv.mu(proj[j]));
            for (std::size_t j = 0; j < proj.size(); ++j) {
                std::uint32_t b = proj[j];
                double upd = static_cast<double>(blocks[b].size()) / qs * snapshot[j];
                if (truth == +1) {
                    sv.mu_pos[b] += upd;
                    sv.mu_neg[b] -= upd;
                } else {
                    sv.mu_neg[b] += upd;
                    sv.mu_pos[b] -= upd;
                }
            }
        }
    }
    sv.trained_iterations += k;
}

// A trained model plus everything prediction needs: token names, the
// partition, strengths, the duplicate-signature index for the bypass
// heuristic, and provenance (training config, prevalence).
struct ModelArtifact {
    Interner interner;
    Partition partition;
    StrengthVectors strengths;
    DuplicateIndex duplicates;
    int iterations = 0;
    std::uint64_t seed = 0;
    double prevalence = 0.0;
};

inline SupportBreakdown support(const ModelArtifact& model, const Projection& projection) {
    return support(model.strengths, projection);
}

inline ModelArtifact fit_model(const std::vector<Case>& cases, const Interner& interner,
                               int iterations, std::uint64_t seed) {
    ModelArtifact m;
    m.interner = interner;
    m.partition = build_partition(cases);
    m.strengths = compute_strengths(m.partition, cases);
    train(m.partition, cases, m.strengths, iterations);
    m.duplicates = duplicate_index(cases);
    m.iterations = iterations;
    m.seed = seed;
    std::size_t pos = 0;
    for (const auto& c : cases)
        if (c.label == +1) ++pos;
    m.prevalence = static_cast<double>(pos) / static_cast<double>(cases.size());
    return m;
}

namespace detail {

inline std::uint64_t fnv1a64(const std::string& data) {
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char ch : data) {
        h ^= ch;
        h *= 1099511628211ull;
    }
    return h;
}

}  // namespace detail

inline constexpr int model_format_version = 1;

// Versioned, checksummed JSON document. nlohmann serializes doubles with
// shortest round-trip formatting, so mu vectors survive save/load exactly.
inline std::string serialize_model(const ModelArtifact& model) {
    if (model.partition.block_count() == 0)
        throw DataError("serialize_model: refusing to save a model with no blocks");

    nlohmann::json payload;
    payload["interner"] = model.interner.tokens();
    payload["universe_size"] = model.partition.universe_size();
    auto& jblocks = payload["blocks"] = nlohmann::json::array();
    for (const auto& b : model.partition.blocks()) {
        jblocks.push_back({{"id", b.block_id},
                           {"features", b.features},
                           {"d_pos", b.d_pos},
                           {"d_neg", b.d_neg}});
    }
    payload["mu_pos"] = model.strengths.mu_pos;
    payload["mu_neg"] = model.strengths.mu_neg;
    payload["trained_iterations"] = model.strengths.trained_iterations;
    payload["config"] = {{"iterations", model.iterations}, {"seed", model.seed}};
    payload["prevalence"] = model.prevalence;

    // only conflicting signatures matter at decision time
    auto& jdup = payload["duplicates"] = nlohmann::json::object();
    auto& jgroups = jdup["conflicting"] = nlohmann::json::array();
    for (const auto& [sig, counts] : model.duplicates.groups) {
        if (counts.redundant())
            jgroups.push_back({{"features", sig}, {"pos", counts.pos}, {"neg", counts.neg}});
    }
    jdup["redundant_pos"] = model.duplicates.redundant_pos;
    jdup["redundant_neg"] = model.duplicates.redundant_neg;

    const std::string canonical = payload.dump();
    nlohmann::json doc;
    doc["format"] = "hcbr-model";
    doc["version"] = model_format_version;
    doc["checksum"] = detail::fnv1a64(canonical);
    doc["payload"] = std::move(payload);
    return doc.dump(2) + "\n";
}

inline ModelArtifact deserialize_model(const std::string& text) {
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("model load: invalid document: ") + e.what());
    }
    if (!doc.is_object() || doc.value("format", "") != "hcbr-model")
        throw DataError("model load: not a model document");
    if (doc.value("version", -1) != model_format_version)
        throw DataError("model load: unsupported version");
    if (!doc.contains("payload") || !doc.contains("checksum"))
        throw DataError("model load: truncated document");

    const auto& payload = doc["payload"];
    if (detail::fnv1a64(payload.dump()) != doc["checksum"].get<std::uint64_t>())
        throw DataError("model load: checksum mismatch");

    ModelArtifact m;
    try {
        for (const auto& tok : payload.at("interner")) m.interner.intern(tok.get<std::string>());

        std::vector<Block> blocks;
        for (const auto& jb : payload.at("blocks")) {
            Block b;
            b.block_id = jb.at("id").get<std::uint32_t>();
            b.features = jb.at("features").get<std::vector<FeatureId>>();
            b.d_pos = jb.at("d_pos").get<std::uint32_t>();
            b.d_neg = jb.at("d_neg").get<std::uint32_t>();
            blocks.push_back(std::move(b));
        }
        m.partition = restore_partition(std::move(blocks));
        if (m.partition.universe_size() != payload.at("universe_size").get<std::size_t>())
            throw DataError("model load: universe size does not match blocks");

        m.strengths.mu_pos = payload.at("mu_pos").get<std::vector<double>>();
        m.strengths.mu_neg = payload.at("mu_neg").get<std::vector<double>>();
        m.strengths.trained_iterations = payload.at("trained_iterations").get<int>();
        if (m.strengths.mu_pos.size() != m.partition.block_count() ||
            m.strengths.mu_neg.size() != m.partition.block_count())
            throw DataError("model load: strength vectors do not match blocks");

        m.iterations = payload.at("config").at("iterations").get<int>();
        m.seed = payload.at("config").at("seed").get<std::uint64_t>();
        m.prevalence = payload.at("prevalence").get<double>();

        const auto& jdup = payload.at("duplicates");
        for (const auto& jg : jdup.at("conflicting")) {
            DuplicateIndex::Counts counts;
            counts.pos = jg.at("pos").get<std::uint32_t>();
            counts.neg = jg.at("neg").get<std::uint32_t>();
            m.duplicates.groups.emplace(jg.at("features").get<std::vector<FeatureId>>(), counts);
        }
        m.duplicates.redundant_pos = jdup.at("redundant_pos").get<std::uint64_t>();
        m.duplicates.redundant_neg = jdup.at("redundant_neg").get<std::uint64_t>();
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("model load: malformed payload: ") + e.what());
    }

    for (const auto& b : m.partition.blocks())
        for (FeatureId f : b.features)
            if (f >= m.interner.size())
                throw DataError("model load: block references unknown feature id");
    return m;
}

inline void save_model(const ModelArtifact& model, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("save_model: cannot open '" + path + "'");
    out << serialize_model(model);
}

inline ModelArtifact load_model(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("load_model: cannot open '" + path + "'");
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return deserialize_model(text);
}

}  // namespace hcbr
