#pragma once

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <istream>
#include <iterator>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "hcbr/rng.hpp"

namespace hcbr {

// Thrown for malformed or degenerate input data (CLI exit code 2).
struct DataError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Thrown for invalid configuration or usage (CLI exit code 1).
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

using FeatureId = std::uint32_t;

// Token <-> dense id bijection. Ids are assigned contiguously from 0 in
// first-observation order, so ingesting the same stream twice gives the
// same assignment.
class Interner {
public:
    FeatureId intern(const std::string& token) {
        auto it = ids_.find(token);
        if (it != ids_.end()) return it->second;
        FeatureId id = static_cast<FeatureId>(tokens_.size());
        tokens_.push_back(token);
        ids_.emplace(token, id);
        return id;
    }

    std::optional<FeatureId> find(const std::string& token) const {
        auto it = ids_.find(token);
        if (it == ids_.end()) return std::nullopt;
        return it->second;
    }

    const std::string& token(FeatureId id) const { return tokens_.at(id); }
    std::size_t size() const { return tokens_.size(); }
    const std::vector<std::string>& tokens() const { return tokens_; }

private:
    std::vector<std::string> tokens_;
    std::unordered_map<std::string, FeatureId> ids_;
};

// One case: a deduplicated, sorted feature-id set plus a label.
// label is +1 or -1 for training cases, 0 when unlabeled (prediction-only).
struct Case {
    std::uint32_t case_id = 0;
    std::vector<FeatureId> features;
    int label = 0;

    bool labeled() const { return label != 0; }
};

struct SourceMeta {
    std::string format;        // "csv" or "sparse"
    std::string label_column;  // csv only
    char delimiter = ',';
    std::string positive_token = "+1";
    std::string negative_token = "-1";
};

struct Dataset {
    std::vector<Case> cases;
    Interner interner;
    SourceMeta source_meta;

    std::size_t count_label(int label) const {
        std::size_t n = 0;
        for (const auto& c : cases)
            if (c.label == label) ++n;
        return n;
    }

    // fraction of +1 among labeled cases
    double prevalence() const {
        std::size_t pos = 0, labeled = 0;
        for (const auto& c : cases) {
            if (c.label != 0) ++labeled;
            if (c.label == +1) ++pos;
        }
        return labeled == 0 ? 0.0 : static_cast<double>(pos) / static_cast<double>(labeled);
    }
};

struct CsvConfig {
    std::string label_column;  // may stay empty for prediction-only input
    std::string positive_token = "+1";
    std::string negative_token = "-1";
    std::vector<std::string> missing_tokens = {"", "?"};
    char delimiter = ',';
    bool require_labels = true;  // false: unknown label tokens mean "unlabeled"
};

struct SparseConfig {
    std::string positive_token = "+1";
    std::string negative_token = "-1";
    bool require_labels = true;
};

namespace detail {

// RFC-4180-style field splitting: quoted fields may contain the delimiter,
// doubled quotes escape a quote. Trailing \r from CRLF input is stripped
// by the caller.
inline std::vector<std::string> split_fields(const std::string& line, char delim) {
    std::vector<std::string> out;
    std::string field;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        char ch = line[i];
        if (quoted) {
            if (ch == '"') {
                if (i + 1 < line.size() && line[i + 1] == '"') {
                    field.push_back('"');
                    ++i;
                } else {
                    quoted = false;
                }
            } else {
                field.push_back(ch);
            }
        } else if (ch == '"' && field.empty()) {
            quoted = true;
        } else if (ch == delim) {
            out.push_back(std::move(field));
            field.clear();
        } else {
            field.push_back(ch);
        }
    }
    out.push_back(std::move(field));
    return out;
}

inline void strip_cr(std::string& line) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
}

inline void sort_unique(std::vector<FeatureId>& v) {
    std::sort(v.begin(), v.end());
    v.erase(std::unique(v.begin(), v.end()), v.end());
}

inline int parse_label(const std::string& tok, const std::string& pos, const std::string& neg) {
    if (tok == pos) return +1;
    if (tok == neg) return -1;
    return 0;
}

}  // namespace detail

// Tabular ingestion. Every non-label cell in column `col` with value `v`
// becomes the categorical token "col=v"; cells matching a missing token
// contribute no feature.
inline Dataset parse_csv(std::istream& in, const CsvConfig& config) {
    Dataset ds;
    ds.source_meta.format = "csv";
    ds.source_meta.label_column = config.label_column;
    ds.source_meta.delimiter = config.delimiter;
    ds.source_meta.positive_token = config.positive_token;
    ds.source_meta.negative_token = config.negative_token;

    std::string line;
    if (!std::getline(in, line)) throw DataError("csv: empty stream, header required");
    detail::strip_cr(line);
    const auto header = detail::split_fields(line, config.delimiter);

    std::size_t label_idx = header.size();
    if (!config.label_column.empty()) {
        for (std::size_t i = 0; i < header.size(); ++i)
            if (header[i] == config.label_column) label_idx = i;
        if (label_idx == header.size())
            throw ConfigError("csv: label column '" + config.label_column +
                              "' not found in header");
    } else if (config.require_labels) {
        throw ConfigError("csv: a label column is required for labeled input");
    }

    auto is_missing = [&](const std::string& cell) {
        for (const auto& m : config.missing_tokens)
            if (cell == m) return true;
        return false;
    };

    std::size_t row_no = 1;  // header is row 1
    while (std::getline(in, line)) {
        ++row_no;
        detail::strip_cr(line);
        if (line.empty()) continue;
        auto fields = detail::split_fields(line, config.delimiter);
        if (fields.size() != header.size())
            throw DataError("csv: row " + std::to_string(row_no) + " has " +
                            std::to_string(fields.size()) + " fields, header has " +
                            std::to_string(header.size()));

        Case c;
        c.case_id = static_cast<std::uint32_t>(ds.cases.size());
        if (label_idx < header.size()) {
            c.label = detail::parse_label(fields[label_idx], config.positive_token,
                                          config.negative_token);
            if (c.label == 0 && config.require_labels)
                throw DataError("csv: row " + std::to_string(row_no) + ": unknown label token '" +
                                fields[label_idx] + "'");
        }
        for (std::size_t i = 0; i < fields.size(); ++i) {
            if (i == label_idx || is_missing(fields[i])) continue;
            c.features.push_back(ds.interner.intern(header[i] + "=" + fields[i]));
        }
        detail::sort_unique(c.features);
        if (c.features.empty())
            throw DataError("csv: row " + std::to_string(row_no) +
                            " has no features after missing-value removal");
        ds.cases.push_back(std::move(c));
    }
    return ds;
}

// Sparse ingestion: one case per line, "label idx:val idx:val ...".
// Each "idx:val" pair is kept verbatim as one categorical token.
inline Dataset parse_sparse(std::istream& in, const SparseConfig& config) {
    Dataset ds;
    ds.source_meta.format = "sparse";
    ds.source_meta.positive_token = config.positive_token;
    ds.source_meta.negative_token = config.negative_token;

    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        detail::strip_cr(line);
        std::istringstream ls(line);
        std::string tok;
        if (!(ls >> tok)) continue;  // blank line

        Case c;
        c.case_id = static_cast<std::uint32_t>(ds.cases.size());
        c.label = detail::parse_label(tok, config.positive_token, config.negative_token);
        if (c.label == 0 && config.require_labels)
            throw DataError("sparse: line " + std::to_string(line_no) + ": unknown label token '" +
                            tok + "'");
        while (ls >> tok) {
            if (tok.find(':') == std::string::npos)
                throw DataError("sparse: line " + std::to_string(line_no) + ": malformed pair '" +
                                tok + "'");
            c.features.push_back(ds.interner.intern(tok));
        }
        detail::sort_unique(c.features);
        if (c.features.empty())
            throw DataError("sparse: line " + std::to_string(line_no) + " has no features");
        ds.cases.push_back(std::move(c));
    }
    return ds;
}

// Fold assignment for stratified k-fold cross-validation.
struct FoldPlan {
    int k = 0;
    std::uint64_t seed = 0;
    std::vector<int> assignments;  // case index -> fold in [0, k)

    std::vector<std::uint32_t> fold_indices(int fold) const {
        std::vector<std::uint32_t> out;
        for (std::size_t i = 0; i < assignments.size(); ++i)
            if (assignments[i] == fold) out.push_back(static_cast<std::uint32_t>(i));
        return out;
    }

    std::vector<std::uint32_t> complement_indices(int fold) const {
        std::vector<std::uint32_t> out;
        for (std::size_t i = 0; i < assignments.size(); ++i)
            if (assignments[i] != fold) out.push_back(static_cast<std::uint32_t>(i));
        return out;
    }
};

// Per-class seeded shuffle followed by round-robin assignment, so per-class
// fold sizes differ by at most one.
inline FoldPlan stratified_folds(const std::vector<Case>& cases, int k, std::uint64_t seed) {
    if (k < 2) throw ConfigError("stratified_folds: k must be >= 2");
    std::vector<std::uint32_t> pos, neg;
    for (std::size_t i = 0; i < cases.size(); ++i) {
        if (cases[i].label == +1)
            pos.push_back(static_cast<std::uint32_t>(i));
        else if (cases[i].label == -1)
            neg.push_back(static_cast<std::uint32_t>(i));
        else
            throw DataError("stratified_folds: case " + std::to_string(i) + " is unlabeled");
    }
    if (pos.size() < static_cast<std::size_t>(k) || neg.size() < static_cast<std::size_t>(k))
        throw DataError("stratified_folds: a class has fewer than k members");

    FoldPlan plan;
    plan.k = k;
    plan.seed = seed;
    plan.assignments.assign(cases.size(), -1);
    std::mt19937_64 rng(seed);
    shuffle_vec(pos, rng);
    shuffle_vec(neg, rng);
    for (std::size_t j = 0; j < pos.size(); ++j) plan.assignments[pos[j]] = static_cast<int>(j % k);
    for (std::size_t j = 0; j < neg.size(); ++j) plan.assignments[neg[j]] = static_cast<int>(j % k);
    return plan;
}

inline FoldPlan stratified_folds(const Dataset& ds, int k, std::uint64_t seed) {
    return stratified_folds(ds.cases, k, seed);
}

// Exact feature-set signatures with per-label occurrence counts. A signature
// is redundant when it occurs with both labels; those are the cases the
// decision-time bypass heuristic cares about.
struct DuplicateIndex {
    struct Counts {
        std::uint32_t pos = 0;
        std::uint32_t neg = 0;
        bool redundant() const { return pos > 0 && neg > 0; }
    };

    std::map<std::vector<FeatureId>, Counts> groups;

    // aggregate statistics over redundant signatures only
    std::uint64_t redundant_pos = 0;
    std::uint64_t redundant_neg = 0;

    std::uint64_t redundant_cases() const { return redundant_pos + redundant_neg; }

    const Counts* find(const std::vector<FeatureId>& signature) const {
        auto it = groups.find(signature);
        return it == groups.end() ? nullptr : &it->second;
    }
};

inline DuplicateIndex duplicate_index(const std::vector<Case>& cases) {
    DuplicateIndex idx;
    for (const auto& c : cases) {
        if (!c.labeled()) throw DataError("duplicate_index: unlabeled case");
        auto& counts = idx.groups[c.features];
        if (c.label == +1)
            ++counts.pos;
        else
            ++counts.neg;
    }
    for (const auto& [sig, counts] : idx.groups) {
        if (counts.redundant()) {
            idx.redundant_pos += counts.pos;
            idx.redundant_neg += counts.neg;
        }
    }
    return idx;
}

inline DuplicateIndex duplicate_index(const Dataset& ds) { return duplicate_index(ds.cases); }

inline constexpr int dataset_cache_version = 1;

// Self-describing cache of a parsed dataset: interner table, cases with ids
// and labels, and the source description. Reloading reproduces the parse
// exactly (same ids, same order).
inline std::string serialize_dataset(const Dataset& ds) {
    nlohmann::json doc;
    doc["format"] = "hcbr-dataset";
    doc["version"] = dataset_cache_version;
    doc["interner"] = ds.interner.tokens();
    doc["source"] = {{"format", ds.source_meta.format},
                     {"label_column", ds.source_meta.label_column},
                     {"delimiter", std::string(1, ds.source_meta.delimiter)},
                     {"positive_token", ds.source_meta.positive_token},
                     {"negative_token", ds.source_meta.negative_token}};
    auto& jcases = doc["cases"] = nlohmann::json::array();
    for (const auto& c : ds.cases)
        jcases.push_back({{"id", c.case_id}, {"label", c.label}, {"features", c.features}});
    return doc.dump() + "\n";
}

inline Dataset deserialize_dataset(const std::string& text) {
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("dataset cache: invalid document: ") + e.what());
    }
    if (!doc.is_object() || doc.value("format", "") != "hcbr-dataset")
        throw DataError("dataset cache: not a dataset document");
    if (doc.value("version", -1) != dataset_cache_version)
        throw DataError("dataset cache: unsupported version");

    Dataset ds;
    try {
        for (const auto& tok : doc.at("interner")) ds.interner.intern(tok.get<std::string>());
        const auto& src = doc.at("source");
        ds.source_meta.format = src.at("format").get<std::string>();
        ds.source_meta.label_column = src.at("label_column").get<std::string>();
        std::string delim = src.at("delimiter").get<std::string>();
        if (!delim.empty()) ds.source_meta.delimiter = delim[0];
        ds.source_meta.positive_token = src.at("positive_token").get<std::string>();
        ds.source_meta.negative_token = src.at("negative_token").get<std::string>();
        for (const auto& jc : doc.at("cases")) {
            Case c;
            c.case_id = jc.at("id").get<std::uint32_t>();
            c.label = jc.at("label").get<int>();
            c.features = jc.at("features").get<std::vector<FeatureId>>();
            for (FeatureId f : c.features)
                if (f >= ds.interner.size())
                    throw DataError("dataset cache: case references unknown feature id");
            ds.cases.push_back(std::move(c));
        }
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("dataset cache: malformed payload: ") + e.what());
    }
    return ds;
}

inline void save_dataset(const Dataset& ds, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("save_dataset: cannot open '" + path + "'");
    out << serialize_dataset(ds);
}

inline Dataset load_dataset(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("load_dataset: cannot open '" + path + "'");
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return deserialize_dataset(text);
}

}  // namespace hcbr
