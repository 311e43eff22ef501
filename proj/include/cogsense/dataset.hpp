#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "cogsense/generators.hpp"
#include "cogsense/rationale.hpp"

namespace cogsense {

// Derives an independent stream seed; generation stays a pure function of
// (base seed, record index).
inline uint64_t mix_seed(uint64_t base, uint64_t index) {
    uint64_t z = base + 0x9e3779b97f4a7c15ull * (index + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

struct DatasetSpec {
    int count = 0;
    uint64_t seed = 0;
    std::string split = "train";
    int bongard_positives = 6;
    int bongard_negatives = 3;
    AttributeSpace attrs;
};

// Random legal rule for a category, a pure function of the rng state.
inline RuleDescriptor sample_rule(Category category, Rng& rng, const AttributeSpace& attrs) {
    RuleDescriptor rule;
    rule.category = category;
    switch (category) {
        case Category::kFluid: {
            int k = rng.uniform_int(3);
            if (k == 0) {
                rule.rule_kind = RuleKind::kProgression;
                constexpr Attribute kAttrs[] = {Attribute::kShape, Attribute::kColor, Attribute::kSize,
                                                Attribute::kCount};
                rule.attribute = kAttrs[rng.uniform_int(4)];
                rule.parameters = {rng.uniform_int(2) == 0 ? 1 : -1};
            } else if (k == 1) {
                rule.rule_kind = RuleKind::kXor;
                rule.attribute = Attribute::kPresence;
            } else {
                rule.rule_kind = RuleKind::kConstancy;
                constexpr Attribute kAttrs[] = {Attribute::kShape, Attribute::kColor, Attribute::kSize,
                                                Attribute::kCount};
                rule.attribute = kAttrs[rng.uniform_int(4)];
            }
            break;
        }
        case Category::kCrystallized: {
            rule.rule_kind = RuleKind::kConceptMembership;
            int kind = rng.uniform_int(3);
            constexpr Attribute kCellAttrs[] = {Attribute::kShape, Attribute::kColor, Attribute::kSize};
            if (kind == kConceptUniformAttr) {
                rule.attribute = kCellAttrs[rng.uniform_int(3)];
                rule.parameters = {kConceptUniformAttr};
            } else if (kind == kConceptCountAtLeast) {
                rule.attribute = Attribute::kCount;
                rule.parameters = {kConceptCountAtLeast, 3 + rng.uniform_int(4)};
            } else {
                rule.attribute = kCellAttrs[rng.uniform_int(3)];
                rule.parameters = {kConceptContainsValue,
                                   rng.uniform_int(detail::attr_range(attrs, rule.attribute))};
            }
            break;
        }
        case Category::kVisuospatial: {
            rule.rule_kind = RuleKind::kConceptMembership;
            rule.attribute = Attribute::kPresence;
            int kind = rng.uniform_int(2) == 0 ? kConceptMirror : kConceptAligned;
            rule.parameters = {kind, rng.uniform_int(2)};
            break;
        }
        case Category::kMentalSimulation: {
            rule.rule_kind = RuleKind::kTransformation;
            int kind = rng.uniform_int(4);
            rule.attribute = kind == kTransformRecolor ? Attribute::kColor : Attribute::kPresence;
            rule.parameters = {kind, 2, 2};
            if (kind == kTransformRecolor) {
                std::vector<int> perm(attrs.colors);
                std::iota(perm.begin(), perm.end(), 0);
                bool identity = true;
                while (identity) {
                    rng.shuffle(perm);
                    for (int c = 0; c < attrs.colors; ++c) {
                        if (perm[c] != c) {
                            identity = false;
                            break;
                        }
                    }
                }
                rule.parameters.insert(rule.parameters.end(), perm.begin(), perm.end());
            }
            break;
        }
        case Category::kVisualRoutines: {
            rule.rule_kind = RuleKind::kOddOneOut;
            constexpr Attribute kAttrs[] = {Attribute::kShape, Attribute::kColor, Attribute::kSize,
                                            Attribute::kCount};
            rule.attribute = kAttrs[rng.uniform_int(4)];
            rule.parameters = {kDefaultOptionCount};
            break;
        }
    }
    return rule;
}

inline Puzzle generate_puzzle(const RuleDescriptor& rule, uint64_t seed, const DatasetSpec& spec) {
    switch (rule.rule_kind) {
        case RuleKind::kProgression:
        case RuleKind::kXor:
        case RuleKind::kConstancy:
            return gen_matrix_puzzle(rule, seed, spec.attrs);
        case RuleKind::kConceptMembership: {
            auto [pos, neg] =
                gen_bongard_puzzle(rule, seed, spec.bongard_positives, spec.bongard_negatives, spec.attrs);
            return reformat_bongard(rule, pos, neg, mix_seed(seed, 0x5eedu));
        }
        case RuleKind::kTransformation:
            return gen_transform_puzzle(rule, seed, spec.attrs);
        case RuleKind::kOddOneOut:
            return gen_odd_one_out(rule, seed, spec.attrs);
    }
    throw std::invalid_argument("generate_puzzle: unknown rule kind");
}

// Mixed corpus cycling through the five categories, rationales attached and
// filter-checked. Record i is reproducible from (spec.seed, i) alone.
inline std::vector<DatasetRecord> generate_dataset(const DatasetSpec& spec) {
    std::vector<DatasetRecord> out;
    out.reserve(spec.count);
    for (int i = 0; i < spec.count; ++i) {
        Category category = kAllCategories[i % kAllCategories.size()];
        uint64_t record_seed = mix_seed(spec.seed, static_cast<uint64_t>(i));
        Rng rule_rng(record_seed);
        RuleDescriptor rule = sample_rule(category, rule_rng, spec.attrs);
        DatasetRecord rec;
        rec.puzzle = generate_puzzle(rule, mix_seed(record_seed, 1), spec);
        rec.puzzle.rationale = synthesize_rationale(rec.puzzle, spec.attrs);
        rec.split = spec.split;
        rec.seed = record_seed;
        out.push_back(std::move(rec));
    }
    return out;
}

}  // namespace cogsense
