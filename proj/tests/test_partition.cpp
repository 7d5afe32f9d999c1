#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <map>
#include <random>
#include <set>
#include <vector>

#include "hcbr/partition.hpp"
#include "hcbr/rng.hpp"

using namespace hcbr;

namespace {

// The three-case instance used throughout: features 1..14, labels +1/-1/+1.
std::vector<Case> golden_cases() {
    return {
        {0, {1, 2, 3, 4, 5, 6, 7}, +1},
        {1, {4, 5, 6, 7, 8, 9, 10, 11}, -1},
        {2, {3, 4, 5, 11, 12, 13, 14}, +1},
    };
}

// Independent ground truth: two features share a block iff they occur in
// exactly the same set of cases. Groups features by that membership
// signature; degrees follow from the signature itself.
struct OracleBlock {
    std::set<FeatureId> features;
    std::uint32_t d_pos = 0;
    std::uint32_t d_neg = 0;
};

std::vector<OracleBlock> oracle_partition(const std::vector<Case>& cases) {
    std::map<std::vector<int>, OracleBlock> by_signature;
    std::set<FeatureId> universe;
    for (const auto& c : cases) universe.insert(c.features.begin(), c.features.end());
    for (FeatureId f : universe) {
        std::vector<int> signature;
        for (std::size_t i = 0; i < cases.size(); ++i) {
            const auto& feats = cases[i].features;
            if (std::find(feats.begin(), feats.end(), f) != feats.end())
                signature.push_back(static_cast<int>(i));
        }
        auto& block = by_signature[signature];
        block.features.insert(f);
        if (block.features.size() == 1) {
            for (int i : signature)
                (cases[i].label == +1 ? block.d_pos : block.d_neg) += 1;
        }
    }
    std::vector<OracleBlock> out;
    for (auto& [sig, block] : by_signature) out.push_back(std::move(block));
    return out;
}

// Compare a built partition against the oracle as unordered sets of blocks.
void check_against_oracle(const Partition& p, const std::vector<Case>& cases) {
    auto expected = oracle_partition(cases);
    REQUIRE(p.block_count() == expected.size());

    std::size_t total_features = 0;
    for (const auto& b : p.blocks()) {
        std::set<FeatureId> feats(b.features.begin(), b.features.end());
        REQUIRE(feats.size() == b.features.size());  // no repeats inside a block
        total_features += feats.size();
        auto it = std::find_if(expected.begin(), expected.end(),
                               [&](const OracleBlock& ob) { return ob.features == feats; });
        REQUIRE(it != expected.end());
        CHECK(b.d_pos == it->d_pos);
        CHECK(b.d_neg == it->d_neg);
        CHECK(b.members_pos.size() == it->d_pos);
        CHECK(b.members_neg.size() == it->d_neg);
        expected.erase(it);
    }
    CHECK(p.universe_size() == total_features);
}

}  // namespace

TEST_CASE("partition: golden blocks, degrees and universe", "[partition]") {
    Partition p = build_partition(golden_cases());

    // creation order is pinned by the refinement algorithm
    const std::vector<std::vector<FeatureId>> want_features = {
        {1, 2}, {6, 7}, {8, 9, 10}, {3}, {4, 5}, {11}, {12, 13, 14}};
    const std::vector<std::uint32_t> want_d_pos = {1, 1, 0, 2, 2, 1, 1};
    const std::vector<std::uint32_t> want_d_neg = {0, 1, 1, 0, 1, 1, 0};

    REQUIRE(p.block_count() == 7);
    for (std::size_t b = 0; b < 7; ++b) {
        auto feats = p.blocks()[b].features;
        std::sort(feats.begin(), feats.end());
        CHECK(feats == want_features[b]);
        CHECK(p.blocks()[b].block_id == b);
        CHECK(p.blocks()[b].d_pos == want_d_pos[b]);
        CHECK(p.blocks()[b].d_neg == want_d_neg[b]);
        CHECK(p.blocks()[b].degree(+1) == want_d_pos[b]);
        CHECK(p.blocks()[b].degree(-1) == want_d_neg[b]);
    }
    CHECK(p.universe_size() == 14);
    check_against_oracle(p, golden_cases());
}

TEST_CASE("partition: training-case projections and member lists", "[partition]") {
    auto cases = golden_cases();
    Partition p = build_partition(cases);

    const auto& proj = p.case_projections();
    REQUIRE(proj.size() == 3);
    CHECK(proj[0] == std::vector<std::uint32_t>{0, 1, 3, 4});  // x1: {1,2},{6,7},{3},{4,5}
    CHECK(proj[1] == std::vector<std::uint32_t>{1, 2, 4, 5});  // x2: {6,7},{8,9,10},{4,5},{11}
    CHECK(proj[2] == std::vector<std::uint32_t>{3, 4, 5, 6});  // x3: {3},{4,5},{11},{12,13,14}

    CHECK(p.blocks()[4].members_pos == std::vector<std::uint32_t>{0, 2});
    CHECK(p.blocks()[4].members_neg == std::vector<std::uint32_t>{1});
    CHECK(p.blocks()[2].members_pos.empty());

    // every training case fully covers each block it touches
    for (std::size_t i = 0; i < cases.size(); ++i) {
        std::size_t covered = 0;
        for (std::uint32_t b : proj[i]) covered += p.blocks()[b].size();
        CHECK(covered == cases[i].features.size());
    }
}

TEST_CASE("partition: projecting queries", "[partition]") {
    Partition p = build_partition(golden_cases());

    SECTION("training case projects onto its own blocks") {
        Projection proj = p.project({4, 5, 6, 7, 8, 9, 10, 11});
        REQUIRE(proj.entries.size() == 4);
        CHECK(proj.entries[0].block_id == 1);
        CHECK(proj.entries[0].intersection == 2);
        CHECK(proj.entries[1].block_id == 2);
        CHECK(proj.entries[1].intersection == 3);
        CHECK(proj.entries[2].block_id == 4);
        CHECK(proj.entries[2].intersection == 2);
        CHECK(proj.entries[3].block_id == 5);
        CHECK(proj.entries[3].intersection == 1);
        CHECK(proj.query_size == 8);
        CHECK(proj.discretionary_count == 0);
        CHECK(proj.covered_count() == 8);
    }

    SECTION("unknown features are discretionary") {
        Projection proj = p.project({3, 4, 99});
        REQUIRE(proj.entries.size() == 2);
        CHECK(proj.entries[0].block_id == 3);
        CHECK(proj.entries[0].intersection == 1);
        CHECK(proj.entries[1].block_id == 4);
        CHECK(proj.entries[1].intersection == 1);
        CHECK(proj.query_size == 3);
        CHECK(proj.discretionary_count == 1);
        CHECK(proj.covered_count() == 2);
    }

    SECTION("extra_unknown counts uninterned query tokens") {
        Projection proj = p.project({3}, 2);
        CHECK(proj.query_size == 3);
        CHECK(proj.discretionary_count == 2);
        CHECK(proj.covered_count() == 1);
    }

    SECTION("fully unknown query still projects") {
        Projection proj = p.project({99, 100});
        CHECK(proj.entries.empty());
        CHECK(proj.discretionary_count == 2);
        CHECK(proj.covered_count() == 0);
    }

    SECTION("empty query is rejected") {
        CHECK_THROWS_AS(p.project({}), DataError);
        CHECK_NOTHROW(p.project({}, 1));  // unknown-token-only query is legal
    }

    SECTION("block_of maps features to blocks") {
        CHECK(p.block_of(3) == 3);
        CHECK(p.block_of(13) == 6);
        CHECK(p.block_of(99) == -1);
    }
}

TEST_CASE("partition: blocks do not depend on case order", "[partition]") {
    auto cases = golden_cases();
    std::mt19937_64 rng(11);
    for (int round = 0; round < 10; ++round) {
        auto shuffled = cases;
        shuffle_vec(shuffled, rng);
        // case ids shift with the order, so compare block sets only
        Partition p = build_partition(shuffled);
        check_against_oracle(p, shuffled);
        CHECK(p.block_count() == 7);
        CHECK(p.universe_size() == 14);
    }
}

TEST_CASE("partition: agrees with the membership-signature oracle on random instances",
          "[partition]") {
    std::mt19937_64 rng(20240815);
    for (int round = 0; round < 500; ++round) {
        int n = 1 + static_cast<int>(rand_below(rng, 12));
        int universe = 1 + static_cast<int>(rand_below(rng, 40));
        std::vector<Case> cases;
        for (int i = 0; i < n; ++i) {
            Case c;
            c.case_id = static_cast<std::uint32_t>(i);
            c.label = rand_below(rng, 2) == 0 ? +1 : -1;
            for (int f = 0; f < universe; ++f)
                if (rand_below(rng, 3) == 0) c.features.push_back(static_cast<FeatureId>(f));
            if (c.features.empty())
                c.features.push_back(static_cast<FeatureId>(rand_below(rng, universe)));
            cases.push_back(std::move(c));
        }
        check_against_oracle(build_partition(cases), cases);
    }
}

TEST_CASE("partition: degenerate inputs are rejected", "[partition]") {
    CHECK_THROWS_AS(build_partition({}), DataError);
    std::vector<Case> unlabeled = {{0, {1}, 0}};
    CHECK_THROWS_AS(build_partition(unlabeled), DataError);
}

TEST_CASE("partition: restore from stored blocks", "[partition]") {
    Partition p = build_partition(golden_cases());
    std::vector<Block> blocks;
    for (const auto& b : p.blocks()) {
        Block copy;
        copy.block_id = b.block_id;
        copy.features = b.features;
        copy.d_pos = b.d_pos;
        copy.d_neg = b.d_neg;
        blocks.push_back(std::move(copy));  // member lists intentionally dropped
    }
    Partition r = restore_partition(blocks);
    CHECK(r.block_count() == p.block_count());
    CHECK(r.universe_size() == p.universe_size());
    for (FeatureId f = 1; f <= 14; ++f) CHECK(r.block_of(f) == p.block_of(f));

    // identical projection behavior
    Projection a = p.project({3, 4, 99});
    Projection b = r.project({3, 4, 99});
    REQUIRE(a.entries.size() == b.entries.size());
    for (std::size_t i = 0; i < a.entries.size(); ++i) {
        CHECK(a.entries[i].block_id == b.entries[i].block_id);
        CHECK(a.entries[i].intersection == b.entries[i].intersection);
    }

    SECTION("rejects inconsistent block tables") {
        auto bad = blocks;
        bad[0].block_id = 3;  // non-contiguous ids
        CHECK_THROWS_AS(restore_partition(bad), DataError);

        bad = blocks;
        bad[1].features.push_back(bad[0].features[0]);  // feature in two blocks
        CHECK_THROWS_AS(restore_partition(bad), DataError);

        bad = blocks;
        bad[2].features.clear();  // empty block
        CHECK_THROWS_AS(restore_partition(bad), DataError);
    }
}
