#pragma once

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <vector>

#include "hcbr/dataset.hpp"

namespace hcbr {

// One block of the intersection partition: a maximal set of features that
// occur in exactly the same training cases.
struct Block {
    std::uint32_t block_id = 0;
    std::vector<FeatureId> features;
    std::vector<std::uint32_t> members_pos;  // case indices (into the training list)
    std::vector<std::uint32_t> members_neg;
    // degrees are stored explicitly: models restored from disk carry counts
    // but not member lists
    std::uint32_t d_pos = 0;
    std::uint32_t d_neg = 0;

    std::uint32_t size() const { return static_cast<std::uint32_t>(features.size()); }
    std::uint32_t degree(int label) const { return label == +1 ? d_pos : d_neg; }
};

// Result of projecting a feature set onto the partition: which blocks it
// touches and how much, plus how many of its features are unknown to the
// training universe (discretionary).
struct Projection {
    struct Entry {
        std::uint32_t block_id;
        std::uint32_t intersection;
    };
    std::vector<Entry> entries;
    std::uint32_t discretionary_count = 0;
    std::uint32_t query_size = 0;

    std::uint32_t covered_count() const { return query_size - discretionary_count; }
};

class Partition {
public:
    const std::vector<Block>& blocks() const { return blocks_; }
    std::size_t block_count() const { return blocks_.size(); }
    std::size_t universe_size() const { return universe_size_; }  // |F_X|

    // block containing a feature, or -1 if the feature is outside F_X
    std::int64_t block_of(FeatureId f) const {
        if (f >= feature_block_.size()) return -1;
        return feature_block_[f];
    }

    // projections of the training cases themselves, by training-list index
    const std::vector<std::vector<std::uint32_t>>& case_projections() const {
        return case_projections_;
    }

    // Project an arbitrary sorted feature-id set. extra_unknown counts query
    // tokens that never got an id from the dataset interner; they are
    // discretionary by definition.
    Projection project(const std::vector<FeatureId>& features,
                       std::uint32_t extra_unknown = 0) const {
        if (features.empty() && extra_unknown == 0)
            throw DataError("project: empty query");
        Projection proj;
        proj.query_size = static_cast<std::uint32_t>(features.size()) + extra_unknown;
        proj.discretionary_count = extra_unknown;
        // count intersections per touched block; scratch_ is reused across calls
        touched_.clear();
        for (FeatureId f : features) {
            std::int64_t b = block_of(f);
            if (b < 0) {
                ++proj.discretionary_count;
                continue;
            }
            if (scratch_[static_cast<std::size_t>(b)] == 0) touched_.push_back(static_cast<std::uint32_t>(b));
            ++scratch_[static_cast<std::size_t>(b)];
        }
        std::sort(touched_.begin(), touched_.end());
        proj.entries.reserve(touched_.size());
        for (std::uint32_t b : touched_) {
            proj.entries.push_back({b, scratch_[b]});
            scratch_[b] = 0;
        }
        return proj;
    }

    friend Partition build_partition(const std::vector<Case>& cases);
    friend Partition restore_partition(std::vector<Block> blocks);

private:
    std::vector<Block> blocks_;
    std::vector<std::int32_t> feature_block_;   // feature id -> block id, -1 unknown
    std::vector<std::uint32_t> feature_pos_;    // feature id -> index inside its block
    std::vector<std::vector<std::uint32_t>> case_projections_;
    std::size_t universe_size_ = 0;
    // mutable scratch keeps project() allocation-free; project is logically
    // const but not thread-safe on one instance because of this buffer, so
    // concurrent fold workers each own their model (see harness).
    mutable std::vector<std::uint32_t> scratch_;
    mutable std::vector<std::uint32_t> touched_;
};

// Incremental partition refinement. Inserting a case splits every block it
// partially overlaps into (block ∩ case) and (block \ case); its never-seen
// features form one new block. Total work is O(sum of case sizes).
inline Partition build_partition(const std::vector<Case>& cases) {
    if (cases.empty()) throw DataError("build_partition: no cases");

    Partition p;
    FeatureId max_feature = 0;
    for (const auto& c : cases) {
        if (!c.labeled()) throw DataError("build_partition: unlabeled case");
        for (FeatureId f : c.features) max_feature = std::max(max_feature, f);
    }
    p.feature_block_.assign(static_cast<std::size_t>(max_feature) + 1, -1);
    p.feature_pos_.assign(static_cast<std::size_t>(max_feature) + 1, 0);

    auto& blocks = p.blocks_;
    auto& fblock = p.feature_block_;
    auto& fpos = p.feature_pos_;

    // swap-remove one feature from its block, keeping positions consistent
    auto detach = [&](FeatureId f) {
        Block& b = blocks[static_cast<std::size_t>(fblock[f])];
        std::uint32_t pos = fpos[f];
        FeatureId last = b.features.back();
        b.features[pos] = last;
        fpos[last] = pos;
        b.features.pop_back();
    };

    std::vector<std::uint32_t> touched;        // block ids hit by the current case
    std::vector<std::vector<FeatureId>> hits;  // features hitting each touched block
    // epoch-stamped slots avoid clearing an O(|blocks|) array per case,
    // keeping the whole build linear in the sum of case sizes
    std::vector<std::uint32_t> hit_epoch;
    std::vector<std::uint32_t> hit_slot;
    std::uint32_t epoch = 0;
    std::vector<FeatureId> fresh;

    for (const auto& c : cases) {
        ++epoch;
        touched.clear();
        hits.clear();
        fresh.clear();
        if (hit_epoch.size() < blocks.size()) {
            hit_epoch.resize(blocks.size(), 0);
            hit_slot.resize(blocks.size(), 0);
        }

        for (FeatureId f : c.features) {
            std::int32_t b = fblock[f];
            if (b < 0) {
                fresh.push_back(f);
                continue;
            }
            auto bi = static_cast<std::size_t>(b);
            if (hit_epoch[bi] != epoch) {
                hit_epoch[bi] = epoch;
                hit_slot[bi] = static_cast<std::uint32_t>(touched.size());
                touched.push_back(static_cast<std::uint32_t>(b));
                hits.emplace_back();
            }
            hits[hit_slot[bi]].push_back(f);
        }

        for (std::size_t t = 0; t < touched.size(); ++t) {
            std::uint32_t b = touched[t];
            if (hits[t].size() == blocks[b].features.size()) continue;  // fully inside
            // partial overlap: move the hit features out into a new block
            std::uint32_t nb = static_cast<std::uint32_t>(blocks.size());
            Block fresh_block;
            fresh_block.block_id = nb;
            for (FeatureId f : hits[t]) {
                detach(f);
                fblock[f] = static_cast<std::int32_t>(nb);
                fpos[f] = static_cast<std::uint32_t>(fresh_block.features.size());
                fresh_block.features.push_back(f);
            }
            blocks.push_back(std::move(fresh_block));
        }

        if (!fresh.empty()) {
            std::uint32_t nb = static_cast<std::uint32_t>(blocks.size());
            Block b;
            b.block_id = nb;
            for (FeatureId f : fresh) {
                fblock[f] = static_cast<std::int32_t>(nb);
                fpos[f] = static_cast<std::uint32_t>(b.features.size());
                b.features.push_back(f);
            }
            blocks.push_back(std::move(b));
            p.universe_size_ += fresh.size();
        }
    }

    // Membership pass: every training case covers each of its blocks fully,
    // so grouping its features by final block recovers member lists, degrees
    // and the stored projections in one sweep.
    p.case_projections_.resize(cases.size());
    std::vector<std::uint32_t> counts(blocks.size(), 0);
    std::vector<std::uint32_t> local;
    for (std::size_t i = 0; i < cases.size(); ++i) {
        local.clear();
        for (FeatureId f : cases[i].features) {
            std::uint32_t b = static_cast<std::uint32_t>(fblock[f]);
            if (counts[b]++ == 0) local.push_back(b);
        }
        std::sort(local.begin(), local.end());
        for (std::uint32_t b : local) {
            if (counts[b] != blocks[b].features.size())
                throw DataError("build_partition: internal consistency failure");
            counts[b] = 0;
            if (cases[i].label == +1)
                blocks[b].members_pos.push_back(static_cast<std::uint32_t>(i));
            else
                blocks[b].members_neg.push_back(static_cast<std::uint32_t>(i));
        }
        p.case_projections_[i] = local;
    }
    for (auto& b : blocks) {
        b.d_pos = static_cast<std::uint32_t>(b.members_pos.size());
        b.d_neg = static_cast<std::uint32_t>(b.members_neg.size());
    }

    p.scratch_.assign(blocks.size(), 0);
    p.touched_.reserve(blocks.size());
    return p;
}

// Rebuild a partition from stored blocks (model deserialization); member
// lists and training-case projections are not restored.
inline Partition restore_partition(std::vector<Block> blocks) {
    Partition p;
    FeatureId max_feature = 0;
    for (const auto& b : blocks) {
        if (b.features.empty()) throw DataError("restore_partition: empty block");
        for (FeatureId f : b.features) max_feature = std::max(max_feature, f);
    }
    p.feature_block_.assign(static_cast<std::size_t>(max_feature) + 1, -1);
    p.feature_pos_.assign(static_cast<std::size_t>(max_feature) + 1, 0);
    for (std::size_t i = 0; i < blocks.size(); ++i) {
        if (blocks[i].block_id != i)
            throw DataError("restore_partition: non-contiguous block ids");
        for (std::size_t j = 0; j < blocks[i].features.size(); ++j) {
            FeatureId f = blocks[i].features[j];
            if (p.feature_block_[f] != -1)
                throw DataError("restore_partition: feature in two blocks");
            p.feature_block_[f] = static_cast<std::int32_t>(i);
            p.feature_pos_[f] = static_cast<std::uint32_t>(j);
        }
        p.universe_size_ += blocks[i].features.size();
    }
    p.blocks_ = std::move(blocks);
    p.scratch_.assign(p.blocks_.size(), 0);
    p.touched_.reserve(p.blocks_.size());
    return p;
}

}  // namespace hcbr
