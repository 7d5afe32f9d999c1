#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <random>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "hcbr/rng.hpp"
#include "hcbr/strength.hpp"

using namespace hcbr;

namespace {

std::vector<Case> golden_cases() {
    return {
        {0, {1, 2, 3, 4, 5, 6, 7}, +1},
        {1, {4, 5, 6, 7, 8, 9, 10, 11}, -1},
        {2, {3, 4, 5, 11, 12, 13, 14}, +1},
    };
}

// Independent strength computation, straight from the definition and with no
// shared code: blocks from membership signatures, per-case share of each
// block d_l(e)|e| / sum over the case's blocks, summed over member cases,
// scaled by |e|/|F|, then normalized per class.
struct OracleStrength {
    std::map<std::set<FeatureId>, double> raw_pos, raw_neg;  // pre-normalization
    std::map<std::set<FeatureId>, double> mu_pos, mu_neg;
};

OracleStrength oracle_strengths(const std::vector<Case>& cases) {
    std::map<std::vector<int>, std::set<FeatureId>> by_signature;
    std::set<FeatureId> universe;
    for (const auto& c : cases) universe.insert(c.features.begin(), c.features.end());
    for (FeatureId f : universe) {
        std::vector<int> signature;
        for (std::size_t i = 0; i < cases.size(); ++i)
            if (std::count(cases[i].features.begin(), cases[i].features.end(), f))
                signature.push_back(static_cast<int>(i));
        by_signature[signature].insert(f);
    }

    struct B {
        std::set<FeatureId> features;
        std::vector<int> members;
        double d_pos = 0, d_neg = 0;
    };
    std::vector<B> blocks;
    for (auto& [sig, feats] : by_signature) {
        B b;
        b.features = feats;
        b.members = sig;
        for (int i : sig) (cases[i].label == +1 ? b.d_pos : b.d_neg) += 1;
        blocks.push_back(std::move(b));
    }

    OracleStrength out;
    double total_pos = 0, total_neg = 0;
    for (const auto& e : blocks) {
        double raw_pos = 0, raw_neg = 0;
        for (int x : e.members) {
            double den_pos = 0, den_neg = 0;
            for (const auto& other : blocks) {
                if (!std::count(other.members.begin(), other.members.end(), x)) continue;
                den_pos += other.d_pos * static_cast<double>(other.features.size());
                den_neg += other.d_neg * static_cast<double>(other.features.size());
            }
            double num = static_cast<double>(e.features.size());
            if (den_pos > 0) raw_pos += e.d_pos * num / den_pos;
            if (den_neg > 0) raw_neg += e.d_neg * num / den_neg;
        }
        double scale = static_cast<double>(e.features.size()) / static_cast<double>(universe.size());
        out.raw_pos[e.features] = raw_pos * scale;
        out.raw_neg[e.features] = raw_neg * scale;
        total_pos += raw_pos * scale;
        total_neg += raw_neg * scale;
    }
    for (const auto& e : blocks) {
        out.mu_pos[e.features] = out.raw_pos[e.features] / total_pos;
        out.mu_neg[e.features] = out.raw_neg[e.features] / total_neg;
    }
    return out;
}

std::set<FeatureId> feature_set(const Block& b) {
    return std::set<FeatureId>(b.features.begin(), b.features.end());
}

void compare_with_oracle(const Partition& p, const StrengthVectors& sv,
                         const std::vector<Case>& cases, double tol) {
    OracleStrength oracle = oracle_strengths(cases);
    REQUIRE(oracle.mu_pos.size() == p.block_count());
    for (const auto& b : p.blocks()) {
        auto key = feature_set(b);
        REQUIRE(oracle.mu_pos.count(key) == 1);
        CHECK_THAT(sv.mu_pos[b.block_id], Catch::Matchers::WithinAbs(oracle.mu_pos[key], tol));
        CHECK_THAT(sv.mu_neg[b.block_id], Catch::Matchers::WithinAbs(oracle.mu_neg[key], tol));
    }
}

std::vector<Case> random_instance(std::mt19937_64& rng, int max_cases, int max_universe) {
    int n = 2 + static_cast<int>(rand_below(rng, max_cases - 1));
    int universe = 1 + static_cast<int>(rand_below(rng, max_universe));
    std::vector<Case> cases;
    for (int i = 0; i < n; ++i) {
        Case c;
        c.case_id = static_cast<std::uint32_t>(i);
        // force both classes so normalization is well defined
        c.label = i == 0 ? +1 : i == 1 ? -1 : (rand_below(rng, 2) == 0 ? +1 : -1);
        for (int f = 0; f < universe; ++f)
            if (rand_below(rng, 3) == 0) c.features.push_back(static_cast<FeatureId>(f));
        if (c.features.empty())
            c.features.push_back(static_cast<FeatureId>(rand_below(rng, universe)));
        cases.push_back(std::move(c));
    }
    return cases;
}

}  // namespace

TEST_CASE("strength: golden per-block values", "[strength]") {
    auto cases = golden_cases();
    Partition p = build_partition(cases);
    StrengthVectors sv = compute_strengths(p, cases);

    // expected net strengths keyed by feature set (creation order varies
    // with insertion order, the values do not)
    const std::map<std::set<FeatureId>, double> want_mu = {
        {{1, 2}, 0.070707},       {{3}, 0.070707},  {{4, 5}, 0.005975},
        {{12, 13, 14}, 0.159091}, {{11}, -0.034535}, {{6, 7}, -0.081804},
        {{8, 9, 10}, -0.190141},
    };
    REQUIRE(p.block_count() == want_mu.size());
    for (const auto& b : p.blocks()) {
        auto it = want_mu.find(feature_set(b));
        REQUIRE(it != want_mu.end());
        CHECK_THAT(sv.mu(b.block_id), Catch::Matchers::WithinAbs(it->second, 1e-6));
    }

    // per-class vectors are normalized
    double sum_pos = 0, sum_neg = 0;
    for (std::size_t b = 0; b < sv.size(); ++b) {
        sum_pos += sv.mu_pos[b];
        sum_neg += sv.mu_neg[b];
    }
    CHECK_THAT(sum_pos, Catch::Matchers::WithinAbs(1.0, 1e-12));
    CHECK_THAT(sum_neg, Catch::Matchers::WithinAbs(1.0, 1e-12));

    compare_with_oracle(p, sv, cases, 1e-12);
}

TEST_CASE("strength: golden raw (pre-normalization) fractions", "[strength]") {
    auto cases = golden_cases();
    OracleStrength oracle = oracle_strengths(cases);
    // hand-derivable exact fractions for two blocks of the golden instance
    CHECK_THAT((oracle.raw_neg[{8, 9, 10}]), Catch::Matchers::WithinAbs(9.0 / 112.0, 1e-15));
    CHECK_THAT((oracle.raw_pos[{4, 5}]), Catch::Matchers::WithinAbs(48.0 / 245.0, 1e-15));
}

TEST_CASE("strength: matches the oracle on random instances", "[strength]") {
    std::mt19937_64 rng(91);
    for (int round = 0; round < 100; ++round) {
        auto cases = random_instance(rng, 10, 25);
        Partition p = build_partition(cases);
        StrengthVectors sv = compute_strengths(p, cases);
        compare_with_oracle(p, sv, cases, 1e-9);

        double sum_pos = 0, sum_neg = 0;
        for (std::size_t b = 0; b < sv.size(); ++b) {
            sum_pos += sv.mu_pos[b];
            sum_neg += sv.mu_neg[b];
        }
        CHECK_THAT(sum_pos, Catch::Matchers::WithinAbs(1.0, 1e-9));
        CHECK_THAT(sum_neg, Catch::Matchers::WithinAbs(1.0, 1e-9));
    }
}

TEST_CASE("strength: degenerate training sets are rejected", "[strength]") {
    std::vector<Case> one_class = {{0, {1}, +1}, {1, {2}, +1}};
    Partition p = build_partition(one_class);
    CHECK_THROWS_AS(compute_strengths(p, one_class), DataError);

    // partition built from different cases
    auto cases = golden_cases();
    Partition q = build_partition(cases);
    cases.pop_back();
    CHECK_THROWS_AS(compute_strengths(q, cases), DataError);
}

TEST_CASE("support: golden case supports and weights", "[strength]") {
    auto cases = golden_cases();
    Partition p = build_partition(cases);
    StrengthVectors sv = compute_strengths(p, cases);

    const std::vector<double> want_s = {0.008638, -0.094577, 0.075056};
    for (std::size_t i = 0; i < cases.size(); ++i) {
        SupportBreakdown sb = support(sv, p.project(cases[i].features));
        CHECK_THAT(sb.s, Catch::Matchers::WithinAbs(want_s[i], 1e-6));
        CHECK_THAT(sb.s, Catch::Matchers::WithinAbs(sb.s_pos - sb.s_neg, 1e-15));
        CHECK(sb.coverage == 1.0);

        // training-case weights form a convex combination
        double weight_sum = 0;
        for (const auto& c : sb.contributions) weight_sum += c.weight;
        CHECK_THAT(weight_sum, Catch::Matchers::WithinAbs(1.0, 1e-12));

        // contributions are sorted by influence
        for (std::size_t j = 1; j < sb.contributions.size(); ++j)
            CHECK(std::fabs(sb.contributions[j - 1].weighted) >=
                  std::fabs(sb.contributions[j].weighted));
    }
}

TEST_CASE("support: brute-force weights on random queries", "[strength]") {
    std::mt19937_64 rng(92);
    for (int round = 0; round < 50; ++round) {
        auto cases = random_instance(rng, 8, 20);
        Partition p = build_partition(cases);
        StrengthVectors sv = compute_strengths(p, cases);

        // random query over a slightly larger universe than training saw
        std::vector<FeatureId> query;
        for (FeatureId f = 0; f < 26; ++f)
            if (rand_below(rng, 4) == 0) query.push_back(f);
        if (query.empty()) query.push_back(0);

        SupportBreakdown sb = support(sv, p.project(query));

        double s_pos = 0, s_neg = 0, covered = 0;
        for (const auto& b : p.blocks()) {
            std::size_t inter = 0;
            for (FeatureId f : b.features)
                if (std::count(query.begin(), query.end(), f)) ++inter;
            if (inter == 0) continue;
            covered += static_cast<double>(inter);
            double w = static_cast<double>(inter) / static_cast<double>(query.size());
            s_pos += w * sv.mu_pos[b.block_id];
            s_neg += w * sv.mu_neg[b.block_id];
        }
        CHECK_THAT(sb.s_pos, Catch::Matchers::WithinAbs(s_pos, 1e-12));
        CHECK_THAT(sb.s_neg, Catch::Matchers::WithinAbs(s_neg, 1e-12));
        CHECK_THAT(sb.coverage,
                   Catch::Matchers::WithinAbs(covered / static_cast<double>(query.size()), 1e-12));
    }
}

TEST_CASE("support: empty projection yields zero support", "[strength]") {
    auto cases = golden_cases();
    Partition p = build_partition(cases);
    StrengthVectors sv = compute_strengths(p, cases);

    SupportBreakdown sb = support(sv, Projection{});
    CHECK(sb.s == 0.0);
    CHECK(sb.s_pos == 0.0);
    CHECK(sb.coverage == 0.0);

    // fully discretionary query: weights all zero
    SupportBreakdown unknown = support(sv, p.project({99, 100}));
    CHECK(unknown.s == 0.0);
    CHECK(unknown.coverage == 0.0);
}

TEST_CASE("train: correctly classified cases leave strengths unchanged", "[strength]") {
    auto cases = golden_cases();
    Partition p = build_partition(cases);
    StrengthVectors sv = compute_strengths(p, cases);
    StrengthVectors before = sv;

    train(p, cases, sv, 1);  // all three golden cases are already correct
    CHECK(sv.mu_pos == before.mu_pos);
    CHECK(sv.mu_neg == before.mu_neg);
    CHECK(sv.trained_iterations == 1);

    train(p, cases, sv, 0);  // explicit no-op
    CHECK(sv.trained_iterations == 1);
    CHECK_THROWS_AS(train(p, cases, sv, -1), ConfigError);
}

TEST_CASE("train: single-update displacement", "[strength]") {
    // two disjoint cases so block 0 is touched by case 0 only; dyadic values
    // keep every arithmetic step exact
    std::vector<Case> cases = {{0, {1, 2}, +1}, {1, {3}, -1}};
    Partition p = build_partition(cases);
    StrengthVectors sv;
    sv.mu_pos = {0.25, 0.375};
    sv.mu_neg = {0.5, 0.4375};
    // case 0: s = (2/2) * (0.25 - 0.5) = -0.25 -> predicted -1, truth +1
    // update: (|block|/|case|) * |mu| = 1 * 0.25 moves from neg to pos
    // case 1: s = 0.375 - 0.4375 < 0 -> correct, untouched
    train(p, cases, sv, 1);
    CHECK(sv.mu_pos == std::vector<double>{0.5, 0.375});
    CHECK(sv.mu_neg == std::vector<double>{0.25, 0.4375});
    CHECK(sv.mu(0) == 0.25);  // sign flipped, displaced by exactly 2*update
}

TEST_CASE("train: full-pass simulation on random instances", "[strength]") {
    // replays the documented update rule step by step: per pass in dataset
    // order, a misclassified case moves weight*|mu| (read before its own
    // updates) from the predicted class to the true class
    std::mt19937_64 rng(93);
    int updates_seen = 0;
    for (int round = 0; round < 100; ++round) {
        auto cases = random_instance(rng, 10, 25);
        Partition p = build_partition(cases);
        StrengthVectors sv = compute_strengths(p, cases);
        int k = 1 + static_cast<int>(rand_below(rng, 3));

        std::vector<double> pos = sv.mu_pos, neg = sv.mu_neg;
        const auto& blocks = p.blocks();
        for (int pass = 0; pass < k; ++pass) {
            for (std::size_t i = 0; i < cases.size(); ++i) {
                const auto& proj = p.case_projections()[i];
                double qs = static_cast<double>(cases[i].features.size());
                double s = 0;
                for (std::uint32_t b : proj)
                    s += static_cast<double>(blocks[b].size()) / qs * (pos[b] - neg[b]);
                int predicted = s > 0.0 ? +1 : -1;
                if (predicted == cases[i].label) continue;
                ++updates_seen;
                std::vector<double> magnitude;
                for (std::uint32_t b : proj) magnitude.push_back(std::fabs(pos[b] - neg[b]));
                for (std::size_t j = 0; j < proj.size(); ++j) {
                    std::uint32_t b = proj[j];
                    double upd = static_cast<double>(blocks[b].size()) / qs * magnitude[j];
                    if (cases[i].label == +1) {
                        pos[b] += upd;
                        neg[b] -= upd;
                    } else {
                        neg[b] += upd;
                        pos[b] -= upd;
                    }
                }
            }
        }

        train(p, cases, sv, k);
        REQUIRE(sv.mu_pos == pos);
        REQUIRE(sv.mu_neg == neg);
    }
    CHECK(updates_seen > 100);  // the property was actually exercised
}

TEST_CASE("model: fit_model assembles all parts", "[strength]") {
    auto cases = golden_cases();
    Interner interner;
    for (int i = 1; i <= 14; ++i) interner.intern("f" + std::to_string(i));

    ModelArtifact m = fit_model(cases, interner, 1, 42);
    CHECK(m.partition.block_count() == 7);
    CHECK(m.strengths.size() == 7);
    CHECK(m.strengths.trained_iterations == 1);
    CHECK(m.iterations == 1);
    CHECK(m.seed == 42);
    CHECK_THAT(m.prevalence, Catch::Matchers::WithinAbs(2.0 / 3.0, 1e-15));
    CHECK(m.duplicates.redundant_cases() == 0);
}

TEST_CASE("model: serialization round-trip is exact", "[strength]") {
    auto cases = golden_cases();
    cases.push_back({3, {1, 2, 3, 4, 5, 6, 7}, -1});  // conflicting duplicate of x1
    Interner interner;
    for (int i = 0; i <= 14; ++i) interner.intern("f" + std::to_string(i));
    ModelArtifact m = fit_model(cases, interner, 2, 7);

    std::string text = serialize_model(m);
    ModelArtifact back = deserialize_model(text);

    CHECK(back.strengths.mu_pos == m.strengths.mu_pos);  // bit-exact doubles
    CHECK(back.strengths.mu_neg == m.strengths.mu_neg);
    CHECK(back.strengths.trained_iterations == m.strengths.trained_iterations);
    CHECK(back.partition.block_count() == m.partition.block_count());
    CHECK(back.partition.universe_size() == m.partition.universe_size());
    for (const auto& b : m.partition.blocks()) {
        const auto& rb = back.partition.blocks()[b.block_id];
        CHECK(rb.features == b.features);
        CHECK(rb.d_pos == b.d_pos);
        CHECK(rb.d_neg == b.d_neg);
    }
    CHECK(back.interner.tokens() == m.interner.tokens());
    CHECK(back.iterations == m.iterations);
    CHECK(back.seed == m.seed);
    CHECK(back.prevalence == m.prevalence);
    const auto* conflict = back.duplicates.find({1, 2, 3, 4, 5, 6, 7});
    REQUIRE(conflict != nullptr);
    CHECK(conflict->pos == 2);
    CHECK(conflict->neg == 1);
    CHECK(back.duplicates.redundant_pos == m.duplicates.redundant_pos);

    // serializing the reload reproduces the document byte for byte
    CHECK(serialize_model(back) == text);

    // file round-trip
    std::string path = "roundtrip_model_tmp.json";
    save_model(m, path);
    ModelArtifact from_file = load_model(path);
    CHECK(from_file.strengths.mu_pos == m.strengths.mu_pos);
    std::remove(path.c_str());
}

TEST_CASE("model: corrupted documents are rejected", "[strength]") {
    auto cases = golden_cases();
    Interner interner;
    for (int i = 1; i <= 14; ++i) interner.intern("f" + std::to_string(i));
    ModelArtifact m = fit_model(cases, interner, 1, 0);
    std::string text = serialize_model(m);

    SECTION("payload tampering breaks the checksum") {
        auto doc = nlohmann::json::parse(text);
        doc["payload"]["prevalence"] = 0.123;
        CHECK_THROWS_AS(deserialize_model(doc.dump(2)), DataError);
    }
    SECTION("unsupported version") {
        auto doc = nlohmann::json::parse(text);
        doc["version"] = 99;
        CHECK_THROWS_AS(deserialize_model(doc.dump(2)), DataError);
    }
    SECTION("truncated document") {
        auto doc = nlohmann::json::parse(text);
        doc.erase("checksum");
        CHECK_THROWS_AS(deserialize_model(doc.dump(2)), DataError);
    }
    SECTION("not a model document at all") {
        CHECK_THROWS_AS(deserialize_model("{\"format\":\"zip\"}"), DataError);
        CHECK_THROWS_AS(deserialize_model("best model ever"), DataError);
    }
    SECTION("an empty model cannot be saved") {
        ModelArtifact empty;
        CHECK_THROWS_AS(serialize_model(empty), DataError);
    }
}
