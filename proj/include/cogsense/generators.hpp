#pragma once

#include <algorithm>
#include <numeric>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "cogsense/puzzle.hpp"
#include "cogsense/rng.hpp"

namespace cogsense {

// All generators are pure functions of (rule descriptor, seed): the same
// inputs must reproduce the same puzzle bitwise.

inline constexpr int kDefaultOptionCount = 4;
inline constexpr int kMatrixPanelSide = 2;   // fluid category: 2x2 panels in a 3x3 matrix
inline constexpr int kBongardPanelSide = 3;  // concept category: 3x3 panels
inline constexpr int kOddPanelSide = 2;

namespace detail {

inline Rng make_rng(uint64_t seed) { return Rng(seed); }

// Choose `count` distinct cell positions of a w*h grid, set them present.
inline Panel panel_with_count(Rng& rng, int w, int h, int count, int shape, int color, int size) {
    Panel p(w, h);
    if (count < 0 || count > w * h) throw GenerationError("panel_with_count: count out of range");
    std::vector<int> pos(static_cast<size_t>(w) * h);
    std::iota(pos.begin(), pos.end(), 0);
    rng.shuffle(pos);
    for (int i = 0; i < count; ++i) {
        Cell& c = p.cells[pos[i]];
        c.present = true;
        c.shape = shape;
        c.color = color;
        c.size = size;
    }
    return p;
}

inline Panel panel_from_mask(int w, int h, uint32_t mask, int shape, int color, int size) {
    Panel p(w, h);
    for (int i = 0; i < w * h; ++i) {
        if (mask & (1u << i)) {
            Cell& c = p.cells[i];
            c.present = true;
            c.shape = shape;
            c.color = color;
            c.size = size;
        }
    }
    return p;
}

inline uint32_t panel_mask(const Panel& p) {
    uint32_t m = 0;
    for (size_t i = 0; i < p.cells.size(); ++i) {
        if (p.cells[i].present) m |= (1u << i);
    }
    return m;
}

// Fully random panel; every present cell gets independent attributes.
inline Panel random_panel(Rng& rng, int w, int h, const AttributeSpace& attrs, int min_present = 1) {
    Panel p(w, h);
    int placed = 0;
    for (Cell& c : p.cells) {
        if (rng.uniform() < 0.5) {
            c.present = true;
            c.shape = rng.uniform_int(attrs.shapes);
            c.color = rng.uniform_int(attrs.colors);
            c.size = rng.uniform_int(attrs.sizes);
            ++placed;
        }
    }
    while (placed < min_present) {
        int i = rng.uniform_int(w * h);
        if (!p.cells[i].present) {
            Cell& c = p.cells[i];
            c.present = true;
            c.shape = rng.uniform_int(attrs.shapes);
            c.color = rng.uniform_int(attrs.colors);
            c.size = rng.uniform_int(attrs.sizes);
            ++placed;
        }
    }
    return p;
}

inline int attr_range(const AttributeSpace& attrs, Attribute a) {
    switch (a) {
        case Attribute::kShape: return attrs.shapes;
        case Attribute::kColor: return attrs.colors;
        case Attribute::kSize: return attrs.sizes;
        default: throw std::invalid_argument("attr_range: attribute has no scalar range");
    }
}

inline int get_attr(const Cell& c, Attribute a) {
    switch (a) {
        case Attribute::kShape: return c.shape;
        case Attribute::kColor: return c.color;
        case Attribute::kSize: return c.size;
        default: throw std::invalid_argument("get_attr: attribute is not cell-valued");
    }
}

inline void set_attr(Cell& c, Attribute a, int v) {
    switch (a) {
        case Attribute::kShape: c.shape = v; return;
        case Attribute::kColor: c.color = v; return;
        case Attribute::kSize: c.size = v; return;
        default: throw std::invalid_argument("set_attr: attribute is not cell-valued");
    }
}

}  // namespace detail

// Value of a cell attribute shared by all present cells of a panel; empty if
// the panel has no present cells or mixes values.
inline std::optional<int> uniform_attr_value(const Panel& p, Attribute a) {
    std::optional<int> v;
    for (const Cell& c : p.cells) {
        if (!c.present) continue;
        int x = detail::get_attr(c, a);
        if (!v) {
            v = x;
        } else if (*v != x) {
            return std::nullopt;
        }
    }
    return v;
}

// Scalar "reading" of a panel under an attribute: count of present cells for
// kCount, shared attribute value otherwise.
inline std::optional<int> panel_value(const Panel& p, Attribute a) {
    if (a == Attribute::kCount) return p.count_present();
    if (a == Attribute::kPresence) throw std::invalid_argument("panel_value: presence has no scalar value");
    return uniform_attr_value(p, a);
}

// ---------------------------------------------------------------------------
// Fluid category: 3x3 matrix puzzles over 2x2 panels, row-wise rules.
// ---------------------------------------------------------------------------

inline void validate_matrix_rule(const RuleDescriptor& rule) {
    if (rule.category != Category::kFluid) {
        throw std::invalid_argument("gen_matrix_puzzle: rule category must be fluid");
    }
    if (!rule_kind_legal(rule.category, rule.rule_kind)) {
        throw std::invalid_argument("gen_matrix_puzzle: rule kind not legal for fluid");
    }
    switch (rule.rule_kind) {
        case RuleKind::kProgression:
            if (rule.parameters.size() != 1 || rule.parameters[0] == 0) {
                throw std::invalid_argument("gen_matrix_puzzle: progression needs parameters [step != 0]");
            }
            if (rule.attribute == Attribute::kPresence) {
                throw std::invalid_argument("gen_matrix_puzzle: progression does not apply to presence");
            }
            break;
        case RuleKind::kConstancy:
            if (rule.attribute == Attribute::kPresence) {
                throw std::invalid_argument("gen_matrix_puzzle: constancy does not apply to presence");
            }
            break;
        case RuleKind::kXor:
            if (rule.attribute != Attribute::kPresence) {
                throw std::invalid_argument("gen_matrix_puzzle: xor applies to presence only");
            }
            break;
        default:
            throw std::invalid_argument("gen_matrix_puzzle: unsupported rule kind");
    }
}

inline Puzzle gen_matrix_puzzle(const RuleDescriptor& rule, uint64_t seed,
                                const AttributeSpace& attrs = AttributeSpace{}) {
    validate_matrix_rule(rule);
    Rng rng = detail::make_rng(seed);
    const int side = kMatrixPanelSide;
    const int cells = side * side;

    // One attribute triple shared by every present cell keeps all panels
    // identical except along the rule-bound attribute.
    int base_shape = rng.uniform_int(attrs.shapes);
    int base_color = rng.uniform_int(attrs.colors);
    int base_size = rng.uniform_int(attrs.sizes);

    auto panel_for_value = [&](Attribute a, int v, uint32_t mask) {
        Panel p = detail::panel_from_mask(side, side, mask, base_shape, base_color, base_size);
        if (a != Attribute::kCount) {
            for (Cell& c : p.cells) {
                if (c.present) detail::set_attr(c, a, v);
            }
        }
        return p;
    };

    std::vector<Panel> grid;  // row-major, 9 panels; last is the answer
    int answer_value = -1;
    uint32_t answer_mask = 0;

    if (rule.rule_kind == RuleKind::kXor) {
        int white_shape = base_shape, white_color = base_color, white_size = base_size;
        for (int r = 0; r < 3; ++r) {
            uint32_t m1 = 0, m2 = 0, m3 = 0;
            for (int tries = 0;; ++tries) {
                if (tries > 10000) throw GenerationError("gen_matrix_puzzle: xor mask sampling stalled");
                m1 = static_cast<uint32_t>(rng.uniform_int(1 << cells));
                m2 = static_cast<uint32_t>(rng.uniform_int(1 << cells));
                m3 = m1 ^ m2;
                if (m3 != 0) break;  // keep every derived panel non-empty
            }
            grid.push_back(detail::panel_from_mask(side, side, m1, white_shape, white_color, white_size));
            grid.push_back(detail::panel_from_mask(side, side, m2, white_shape, white_color, white_size));
            grid.push_back(detail::panel_from_mask(side, side, m3, white_shape, white_color, white_size));
        }
        answer_mask = detail::panel_mask(grid.back());
    } else {
        const bool on_count = rule.attribute == Attribute::kCount;
        const int lo = on_count ? 1 : 0;  // keep panels non-empty
        const int hi = on_count ? cells : detail::attr_range(attrs, rule.attribute) - 1;
        int step = rule.rule_kind == RuleKind::kProgression ? rule.parameters[0] : 0;

        std::vector<int> starts;
        for (int v = lo; v <= hi; ++v) {
            int last = v + 2 * step;
            if (last >= lo && last <= hi && v + step >= lo && v + step <= hi) starts.push_back(v);
        }
        if (starts.empty()) {
            throw GenerationError("gen_matrix_puzzle: no feasible start values for rule parameters");
        }
        for (int r = 0; r < 3; ++r) {
            int v0 = starts[rng.uniform_int(static_cast<int>(starts.size()))];
            for (int i = 0; i < 3; ++i) {
                int v = v0 + i * step;
                uint32_t mask;
                if (on_count) {
                    Panel p = detail::panel_with_count(rng, side, side, v, base_shape, base_color, base_size);
                    grid.push_back(p);
                    continue;
                }
                // Random non-empty mask per panel; rule binds only the attribute.
                do {
                    mask = static_cast<uint32_t>(rng.uniform_int(1 << cells));
                } while (mask == 0);
                grid.push_back(panel_for_value(rule.attribute, v, mask));
            }
            if (r == 2) answer_value = v0 + 2 * step;
        }
    }

    Puzzle puzzle;
    puzzle.rule = rule;
    puzzle.question_panels.assign(grid.begin(), grid.end() - 1);
    Panel answer = grid.back();

    // Distractors differ from the answer exactly in the rule-bound attribute.
    std::vector<Panel> options;
    options.push_back(answer);
    if (rule.rule_kind == RuleKind::kXor) {
        std::vector<uint32_t> used = {answer_mask};
        while (static_cast<int>(options.size()) < kDefaultOptionCount) {
            uint32_t m = static_cast<uint32_t>(rng.uniform_int(1 << cells));
            if (m == 0 || std::find(used.begin(), used.end(), m) != used.end()) continue;
            used.push_back(m);
            options.push_back(detail::panel_from_mask(side, side, m, base_shape, base_color, base_size));
        }
    } else {
        const bool on_count = rule.attribute == Attribute::kCount;
        const int lo = on_count ? 1 : 0;
        const int hi = on_count ? cells : detail::attr_range(attrs, rule.attribute) - 1;
        std::vector<int> wrong;
        for (int v = lo; v <= hi; ++v) {
            if (v != answer_value) wrong.push_back(v);
        }
        if (static_cast<int>(wrong.size()) < kDefaultOptionCount - 1) {
            throw GenerationError("gen_matrix_puzzle: attribute range too small for distinct distractors");
        }
        rng.shuffle(wrong);
        uint32_t mask = detail::panel_mask(answer);
        for (int i = 0; i < kDefaultOptionCount - 1; ++i) {
            if (on_count) {
                options.push_back(detail::panel_with_count(rng, side, side, wrong[i], base_shape, base_color, base_size));
            } else {
                options.push_back(panel_for_value(rule.attribute, wrong[i], mask));
            }
        }
    }

    std::vector<int> order(options.size());
    std::iota(order.begin(), order.end(), 0);
    rng.shuffle(order);
    for (size_t k = 0; k < order.size(); ++k) {
        puzzle.option_panels.push_back(options[order[k]]);
        if (order[k] == 0) puzzle.answer_index = static_cast<int>(k);
    }
    return puzzle;
}

// ---------------------------------------------------------------------------
// Concept membership (crystallized + visuospatial): Bongard-style sets.
// ---------------------------------------------------------------------------

// Concept kinds, stored as parameters[0].
enum ConceptKind : int {
    kConceptUniformAttr = 0,   // all present cells share the bound attribute value
    kConceptCountAtLeast = 1,  // parameters[1] = m, count_present >= m
    kConceptContainsValue = 2, // parameters[1] = v, some present cell has attribute v
    kConceptMirror = 3,        // parameters[1] = axis (0 left-right, 1 top-bottom)
    kConceptAligned = 4,       // parameters[1] = direction (0 one row, 1 one column)
};

inline void validate_concept_rule(const RuleDescriptor& rule) {
    if (rule.rule_kind != RuleKind::kConceptMembership) {
        throw std::invalid_argument("concept rule: kind must be concept_membership");
    }
    if (rule.category != Category::kCrystallized && rule.category != Category::kVisuospatial) {
        throw std::invalid_argument("concept rule: category must be crystallized or visuospatial");
    }
    if (rule.parameters.empty()) throw std::invalid_argument("concept rule: missing concept kind");
    int kind = rule.parameters[0];
    bool crystallized = rule.category == Category::kCrystallized;
    switch (kind) {
        case kConceptUniformAttr:
            if (!crystallized) throw std::invalid_argument("concept rule: uniform_attr is crystallized");
            if (rule.attribute == Attribute::kCount || rule.attribute == Attribute::kPresence) {
                throw std::invalid_argument("concept rule: uniform_attr needs a cell attribute");
            }
            break;
        case kConceptCountAtLeast:
            if (!crystallized) throw std::invalid_argument("concept rule: count_at_least is crystallized");
            if (rule.attribute != Attribute::kCount || rule.parameters.size() != 2) {
                throw std::invalid_argument("concept rule: count_at_least needs attribute=count, parameters [kind, m]");
            }
            break;
        case kConceptContainsValue:
            if (!crystallized) throw std::invalid_argument("concept rule: contains_value is crystallized");
            if (rule.attribute == Attribute::kCount || rule.attribute == Attribute::kPresence ||
                rule.parameters.size() != 2) {
                throw std::invalid_argument("concept rule: contains_value needs a cell attribute, parameters [kind, v]");
            }
            break;
        case kConceptMirror:
        case kConceptAligned:
            if (crystallized) throw std::invalid_argument("concept rule: structural concepts are visuospatial");
            if (rule.attribute != Attribute::kPresence || rule.parameters.size() != 2 ||
                (rule.parameters[1] != 0 && rule.parameters[1] != 1)) {
                throw std::invalid_argument("concept rule: structural concepts need attribute=presence, parameters [kind, 0|1]");
            }
            break;
        default:
            throw std::invalid_argument("concept rule: unknown concept kind");
    }
}

inline Panel mirrored_panel(const Panel& p, int axis) {
    Panel out(p.width, p.height);
    for (int r = 0; r < p.height; ++r) {
        for (int c = 0; c < p.width; ++c) {
            int sr = axis == 0 ? r : p.height - 1 - r;
            int sc = axis == 0 ? p.width - 1 - c : c;
            out.at(r, c) = p.at(sr, sc);
        }
    }
    return out;
}

inline bool concept_holds(const RuleDescriptor& rule, const Panel& p) {
    validate_concept_rule(rule);
    int kind = rule.parameters[0];
    switch (kind) {
        case kConceptUniformAttr: {
            if (p.count_present() == 0) return false;
            return uniform_attr_value(p, rule.attribute).has_value();
        }
        case kConceptCountAtLeast:
            return p.count_present() >= rule.parameters[1];
        case kConceptContainsValue: {
            for (const Cell& c : p.cells) {
                if (c.present && detail::get_attr(c, rule.attribute) == rule.parameters[1]) return true;
            }
            return false;
        }
        case kConceptMirror:
            return p.count_present() > 0 && p == mirrored_panel(p, rule.parameters[1]);
        case kConceptAligned: {
            if (p.count_present() == 0) return false;
            std::optional<int> line;
            for (int r = 0; r < p.height; ++r) {
                for (int c = 0; c < p.width; ++c) {
                    if (!p.at(r, c).present) continue;
                    int x = rule.parameters[1] == 0 ? r : c;
                    if (!line) {
                        line = x;
                    } else if (*line != x) {
                        return false;
                    }
                }
            }
            return true;
        }
    }
    return false;
}

// Rejection-samples panels with the predicate forced to the requested truth
// value. Uses targeted construction for concepts rejection alone would rarely hit.
inline Panel sample_concept_panel(const RuleDescriptor& rule, Rng& rng, bool positive,
                                  const AttributeSpace& attrs) {
    const int side = kBongardPanelSide;
    int kind = rule.parameters[0];
    for (int tries = 0; tries < 10000; ++tries) {
        Panel p = detail::random_panel(rng, side, side, attrs, 2);
        if (positive) {
            switch (kind) {
                case kConceptUniformAttr: {
                    int v = rng.uniform_int(detail::attr_range(attrs, rule.attribute));
                    for (Cell& c : p.cells) {
                        if (c.present) detail::set_attr(c, rule.attribute, v);
                    }
                    break;
                }
                case kConceptCountAtLeast: {
                    int need = rule.parameters[1];
                    if (need > side * side) throw GenerationError("sample_concept_panel: count threshold exceeds panel");
                    std::vector<int> absent;
                    for (size_t i = 0; i < p.cells.size(); ++i) {
                        if (!p.cells[i].present) absent.push_back(static_cast<int>(i));
                    }
                    rng.shuffle(absent);
                    for (int i : absent) {
                        if (p.count_present() >= need) break;
                        Cell& c = p.cells[i];
                        c.present = true;
                        c.shape = rng.uniform_int(attrs.shapes);
                        c.color = rng.uniform_int(attrs.colors);
                        c.size = rng.uniform_int(attrs.sizes);
                    }
                    break;
                }
                case kConceptContainsValue: {
                    std::vector<int> present;
                    for (size_t i = 0; i < p.cells.size(); ++i) {
                        if (p.cells[i].present) present.push_back(static_cast<int>(i));
                    }
                    detail::set_attr(p.cells[present[rng.uniform_int(static_cast<int>(present.size()))]],
                                     rule.attribute, rule.parameters[1]);
                    break;
                }
                case kConceptMirror: {
                    // Fold the panel onto its mirror image to force symmetry.
                    for (int r = 0; r < side; ++r) {
                        for (int c = 0; c < side; ++c) {
                            int sr = rule.parameters[1] == 0 ? r : side - 1 - r;
                            int sc = rule.parameters[1] == 0 ? side - 1 - c : c;
                            if (r * side + c <= sr * side + sc) p.at(sr, sc) = p.at(r, c);
                        }
                    }
                    break;
                }
                case kConceptAligned: {
                    int line = rng.uniform_int(side);
                    Panel q(side, side);
                    int placed = 0;
                    for (int i = 0; i < side; ++i) {
                        int r = rule.parameters[1] == 0 ? line : i;
                        int c = rule.parameters[1] == 0 ? i : line;
                        if (rng.uniform() < 0.6 || (i == side - 1 && placed == 0)) {
                            Cell& cell = q.at(r, c);
                            cell.present = true;
                            cell.shape = rng.uniform_int(attrs.shapes);
                            cell.color = rng.uniform_int(attrs.colors);
                            cell.size = rng.uniform_int(attrs.sizes);
                            ++placed;
                        }
                    }
                    p = q;
                    break;
                }
            }
            p.normalize();
            if (concept_holds(rule, p)) return p;
        } else {
            if (kind == kConceptCountAtLeast) {
                // Rejection alone cannot reach counts below the random-panel
                // floor, so build sparse negatives directly.
                int m = rule.parameters[1];
                if (m <= 0) throw GenerationError("sample_concept_panel: concept admits no negatives");
                int target = m == 1 ? 0 : 1 + rng.uniform_int(m - 1);
                Panel q(side, side);
                std::vector<int> pos(static_cast<size_t>(side) * side);
                std::iota(pos.begin(), pos.end(), 0);
                rng.shuffle(pos);
                for (int j = 0; j < target; ++j) {
                    Cell& c = q.cells[pos[j]];
                    c.present = true;
                    c.shape = rng.uniform_int(attrs.shapes);
                    c.color = rng.uniform_int(attrs.colors);
                    c.size = rng.uniform_int(attrs.sizes);
                }
                p = q;
            }
            p.normalize();
            if (!concept_holds(rule, p)) return p;
        }
    }
    throw GenerationError("sample_concept_panel: sampling stalled");
}

// Bongard-style generation: panels satisfying the concept (positives) and
// violating it (negatives), each list pairwise distinct.
inline std::pair<std::vector<Panel>, std::vector<Panel>> gen_bongard_puzzle(
    const RuleDescriptor& rule, uint64_t seed, int n_positives = 6, int n_negatives = 3,
    const AttributeSpace& attrs = AttributeSpace{}) {
    validate_concept_rule(rule);
    if (n_positives < 2) throw GenerationError("gen_bongard_puzzle: need at least two positives");
    if (n_negatives < 1) throw GenerationError("gen_bongard_puzzle: empty negative budget");
    Rng rng = detail::make_rng(seed);

    auto fill = [&](std::vector<Panel>& out, int n, bool positive) {
        int stall = 0;
        while (static_cast<int>(out.size()) < n) {
            Panel p = sample_concept_panel(rule, rng, positive, attrs);
            if (std::find(out.begin(), out.end(), p) == out.end()) {
                out.push_back(p);
                stall = 0;
            } else if (++stall > 10000) {
                throw GenerationError("gen_bongard_puzzle: could not collect distinct panels");
            }
        }
    };
    std::vector<Panel> positives, negatives;
    fill(positives, n_positives, true);
    fill(negatives, n_negatives, false);
    return {positives, negatives};
}

// Reformat a Bongard set as a multiple-choice puzzle: hold out one positive,
// mix it with the negatives, ask which option belongs with the remaining positives.
inline Puzzle reformat_bongard(const RuleDescriptor& rule, const std::vector<Panel>& positives,
                               const std::vector<Panel>& negatives, uint64_t seed) {
    validate_concept_rule(rule);
    if (positives.size() < 2) throw std::invalid_argument("reformat_bongard: need at least two positives");
    if (negatives.empty()) throw std::invalid_argument("reformat_bongard: need at least one negative");
    Rng rng = detail::make_rng(seed);

    int held = rng.uniform_int(static_cast<int>(positives.size()));
    Puzzle puzzle;
    puzzle.rule = rule;
    for (size_t i = 0; i < positives.size(); ++i) {
        if (static_cast<int>(i) != held) puzzle.question_panels.push_back(positives[i]);
    }
    std::vector<Panel> options = negatives;
    options.push_back(positives[held]);  // index negatives.size() is the answer pre-shuffle
    std::vector<int> order(options.size());
    std::iota(order.begin(), order.end(), 0);
    rng.shuffle(order);
    for (size_t k = 0; k < order.size(); ++k) {
        puzzle.option_panels.push_back(options[order[k]]);
        if (order[k] == static_cast<int>(negatives.size())) puzzle.answer_index = static_cast<int>(k);
    }
    return puzzle;
}

// ---------------------------------------------------------------------------
// Mental simulation: apply a spatial transformation demonstrated by examples.
// ---------------------------------------------------------------------------

// Transformation kinds, stored as parameters[0]; parameters[1..2] = panel
// width and height; recolor appends a color permutation.
enum TransformKind : int {
    kTransformRecolor = 0,
    kTransformReflectH = 1,
    kTransformReflectV = 2,
    kTransformRotate180 = 3,
    kTransformIdentity = 4,
};

inline void validate_transform_rule(const RuleDescriptor& rule, const AttributeSpace& attrs) {
    if (rule.rule_kind != RuleKind::kTransformation || rule.category != Category::kMentalSimulation) {
        throw std::invalid_argument("transform rule: category mental_simulation with kind transformation");
    }
    if (rule.parameters.size() < 3) {
        throw std::invalid_argument("transform rule: parameters [kind, width, height, ...]");
    }
    int kind = rule.parameters[0];
    int w = rule.parameters[1], h = rule.parameters[2];
    if (w <= 0 || h <= 0 || w > 8 || h > 8) {
        throw GenerationError("transform rule: panel dimensions outside 1..8");
    }
    switch (kind) {
        case kTransformRecolor: {
            if (static_cast<int>(rule.parameters.size()) != 3 + attrs.colors) {
                throw std::invalid_argument("transform rule: recolor needs a full color permutation");
            }
            std::vector<bool> seen(attrs.colors, false);
            bool moves = false;
            for (int c = 0; c < attrs.colors; ++c) {
                int to = rule.parameters[3 + c];
                if (to < 0 || to >= attrs.colors || seen[to]) {
                    throw std::invalid_argument("transform rule: recolor map is not a permutation");
                }
                seen[to] = true;
                if (to != c) moves = true;
            }
            if (!moves) throw std::invalid_argument("transform rule: recolor map must move some color");
            break;
        }
        case kTransformReflectH:
        case kTransformReflectV:
        case kTransformRotate180:
        case kTransformIdentity:
            if (rule.parameters.size() != 3) {
                throw std::invalid_argument("transform rule: geometric kinds take no extra parameters");
            }
            break;
        default:
            throw std::invalid_argument("transform rule: unknown transformation kind");
    }
}

inline Panel apply_transform(const RuleDescriptor& rule, const Panel& input,
                             const AttributeSpace& attrs = AttributeSpace{}) {
    validate_transform_rule(rule, attrs);
    if (input.width != rule.parameters[1] || input.height != rule.parameters[2]) {
        throw GenerationError("apply_transform: panel dimensions do not match the rule");
    }
    int kind = rule.parameters[0];
    Panel out(input.width, input.height);
    switch (kind) {
        case kTransformRecolor:
            out = input;
            for (Cell& c : out.cells) {
                if (c.present) c.color = rule.parameters[3 + c.color];
            }
            break;
        case kTransformReflectH:
            out = mirrored_panel(input, 0);
            break;
        case kTransformReflectV:
            out = mirrored_panel(input, 1);
            break;
        case kTransformRotate180:
            out = mirrored_panel(mirrored_panel(input, 0), 1);
            break;
        case kTransformIdentity:
            out = input;
            break;
    }
    out.normalize();
    return out;
}

// Distractors for a ground-truth answer panel: perturbed copies, each
// differing from the truth in at least one cell and pairwise distinct.
inline std::pair<std::vector<Panel>, int> reformat_arc(const Panel& ground_truth, uint64_t seed,
                                                       int k_distractors,
                                                       const AttributeSpace& attrs = AttributeSpace{}) {
    if (k_distractors < 1) throw std::invalid_argument("reformat_arc: need at least one distractor");
    if (ground_truth.count_present() < 1) {
        throw std::invalid_argument("reformat_arc: ground truth needs at least one present cell");
    }
    Rng rng = detail::make_rng(seed);
    std::vector<Panel> distractors;
    const int budget = 2000 * k_distractors;
    for (int tries = 0; tries < budget && static_cast<int>(distractors.size()) < k_distractors; ++tries) {
        Panel p = ground_truth;
        int which = rng.uniform_int(3);
        int i = rng.uniform_int(static_cast<int>(p.cells.size()));
        Cell& c = p.cells[i];
        if (which == 0) {
            // Toggle one cell's presence.
            if (c.present) {
                c = Cell{};
            } else {
                c.present = true;
                c.shape = rng.uniform_int(attrs.shapes);
                c.color = rng.uniform_int(attrs.colors);
                c.size = rng.uniform_int(attrs.sizes);
            }
        } else if (which == 1) {
            // Remap every cell of one color.
            int from = rng.uniform_int(attrs.colors);
            int to = rng.uniform_int(attrs.colors);
            if (from == to) continue;
            bool touched = false;
            for (Cell& cell : p.cells) {
                if (cell.present && cell.color == from) {
                    cell.color = to;
                    touched = true;
                }
            }
            if (!touched) continue;
        } else {
            // Change one present cell's shape.
            if (!c.present) continue;
            int v = rng.uniform_int(attrs.shapes);
            if (v == c.shape) continue;
            c.shape = v;
        }
        p.normalize();
        if (p == ground_truth) continue;
        if (std::find(distractors.begin(), distractors.end(), p) != distractors.end()) continue;
        distractors.push_back(p);
    }
    if (static_cast<int>(distractors.size()) < k_distractors) {
        throw GenerationError("reformat_arc: cannot produce the requested number of distinct distractors");
    }
    std::vector<Panel> options = distractors;
    options.push_back(ground_truth);
    std::vector<int> order(options.size());
    std::iota(order.begin(), order.end(), 0);
    rng.shuffle(order);
    std::vector<Panel> shuffled;
    int answer = -1;
    for (size_t k = 0; k < order.size(); ++k) {
        shuffled.push_back(options[order[k]]);
        if (order[k] == k_distractors) answer = static_cast<int>(k);
    }
    return {shuffled, answer};
}

inline Puzzle gen_transform_puzzle(const RuleDescriptor& rule, uint64_t seed,
                                   const AttributeSpace& attrs = AttributeSpace{}) {
    validate_transform_rule(rule, attrs);
    Rng rng = detail::make_rng(seed);
    int w = rule.parameters[1], h = rule.parameters[2];
    int kind = rule.parameters[0];

    // Example inputs must actually exercise the transformation so that the
    // demonstrated pairs pin it down.
    auto informative = [&](const Panel& p) {
        if (kind == kTransformIdentity) return p.count_present() > 0;
        Panel mapped = apply_transform(rule, p, attrs);
        return p.count_present() > 0 && !(mapped == p);
    };
    auto sample_input = [&]() {
        for (int tries = 0; tries < 10000; ++tries) {
            Panel p = detail::random_panel(rng, w, h, attrs, 1);
            p.normalize();
            if (informative(p)) return p;
        }
        throw GenerationError("gen_transform_puzzle: could not sample informative inputs");
    };

    Puzzle puzzle;
    puzzle.rule = rule;
    for (int pair = 0; pair < 2; ++pair) {
        Panel in = sample_input();
        puzzle.question_panels.push_back(in);
        puzzle.question_panels.push_back(apply_transform(rule, in, attrs));
    }
    Panel query = sample_input();
    puzzle.question_panels.push_back(query);
    Panel truth = apply_transform(rule, query, attrs);

    auto [options, answer] = reformat_arc(truth, rng.next_u64(), kDefaultOptionCount - 1, attrs);
    puzzle.option_panels = std::move(options);
    puzzle.answer_index = answer;
    return puzzle;
}

// ---------------------------------------------------------------------------
// Visual routines: odd-one-out scanning.
// ---------------------------------------------------------------------------

inline void validate_odd_rule(const RuleDescriptor& rule) {
    if (rule.rule_kind != RuleKind::kOddOneOut || rule.category != Category::kVisualRoutines) {
        throw std::invalid_argument("odd rule: category visual_routines with kind odd_one_out");
    }
    if (rule.attribute == Attribute::kPresence) {
        throw std::invalid_argument("odd rule: presence is not a scalar attribute");
    }
    if (!rule.parameters.empty() && (rule.parameters.size() != 1 || rule.parameters[0] < 3 ||
                                     rule.parameters[0] > 8)) {
        throw std::invalid_argument("odd rule: parameters [option_count in 3..8]");
    }
}

inline Puzzle gen_odd_one_out(const RuleDescriptor& rule, uint64_t seed,
                              const AttributeSpace& attrs = AttributeSpace{}) {
    validate_odd_rule(rule);
    Rng rng = detail::make_rng(seed);
    const int side = kOddPanelSide;
    const int k = rule.parameters.empty() ? kDefaultOptionCount : rule.parameters[0];

    int base_shape = rng.uniform_int(attrs.shapes);
    int base_color = rng.uniform_int(attrs.colors);
    int base_size = rng.uniform_int(attrs.sizes);

    const bool on_count = rule.attribute == Attribute::kCount;
    const int lo = on_count ? 1 : 0;
    const int hi = on_count ? side * side : detail::attr_range(attrs, rule.attribute) - 1;
    if (hi - lo < 1) throw GenerationError("gen_odd_one_out: attribute range too small");
    int shared = lo + rng.uniform_int(hi - lo + 1);
    // The deviant value is uniform over the remaining values.
    std::vector<int> others;
    for (int v = lo; v <= hi; ++v) {
        if (v != shared) others.push_back(v);
    }
    int deviant = others[rng.uniform_int(static_cast<int>(others.size()))];

    auto make_panel = [&](int value) {
        if (on_count) return detail::panel_with_count(rng, side, side, value, base_shape, base_color, base_size);
        uint32_t mask;
        do {
            mask = static_cast<uint32_t>(rng.uniform_int(1 << (side * side)));
        } while (mask == 0);
        Panel p = detail::panel_from_mask(side, side, mask, base_shape, base_color, base_size);
        for (Cell& c : p.cells) {
            if (c.present) detail::set_attr(c, rule.attribute, value);
        }
        return p;
    };

    // All same-value panels share one appearance so only the deviant stands out.
    Panel base = make_panel(shared);
    Puzzle puzzle;
    puzzle.rule = rule;
    puzzle.answer_index = rng.uniform_int(k);
    for (int i = 0; i < k; ++i) {
        puzzle.option_panels.push_back(i == puzzle.answer_index ? make_panel(deviant) : base);
    }
    return puzzle;
}

// ---------------------------------------------------------------------------
// A generator-independent answer checker: accepts an option exactly when it
// satisfies the rule given the question panels.
// ---------------------------------------------------------------------------

inline bool checker_accepts(const Puzzle& puzzle, int option_index,
                            const AttributeSpace& attrs = AttributeSpace{}) {
    if (option_index < 0 || option_index >= puzzle.option_count()) {
        throw std::invalid_argument("checker_accepts: option index out of range");
    }
    const Panel& candidate = puzzle.option_panels[option_index];
    const RuleDescriptor& rule = puzzle.rule;
    switch (rule.rule_kind) {
        case RuleKind::kProgression: {
            const auto& q = puzzle.question_panels;
            auto v1 = panel_value(q[q.size() - 2], rule.attribute);
            auto v2 = panel_value(q[q.size() - 1], rule.attribute);
            if (!v1 || !v2) return false;
            int expected = 2 * *v2 - *v1;
            auto got = panel_value(candidate, rule.attribute);
            return got && *got == expected;
        }
        case RuleKind::kConstancy: {
            const auto& q = puzzle.question_panels;
            auto v1 = panel_value(q[q.size() - 2], rule.attribute);
            auto v2 = panel_value(q[q.size() - 1], rule.attribute);
            if (!v1 || !v2 || *v1 != *v2) return false;
            auto got = panel_value(candidate, rule.attribute);
            return got && *got == *v1;
        }
        case RuleKind::kXor: {
            const auto& q = puzzle.question_panels;
            uint32_t expected = detail::panel_mask(q[q.size() - 2]) ^ detail::panel_mask(q[q.size() - 1]);
            return detail::panel_mask(candidate) == expected;
        }
        case RuleKind::kConceptMembership:
            return concept_holds(rule, candidate);
        case RuleKind::kTransformation: {
            const Panel& query = puzzle.question_panels.back();
            return candidate == apply_transform(rule, query, attrs);
        }
        case RuleKind::kOddOneOut: {
            // Accepted option deviates from a value shared by all the others.
            std::optional<int> sharedv;
            for (int i = 0; i < puzzle.option_count(); ++i) {
                if (i == option_index) continue;
                auto v = panel_value(puzzle.option_panels[i], rule.attribute);
                if (!v) return false;
                if (!sharedv) {
                    sharedv = *v;
                } else if (*sharedv != *v) {
                    return false;
                }
            }
            auto got = panel_value(candidate, rule.attribute);
            return got && sharedv && *got != *sharedv;
        }
    }
    return false;
}

inline int checker_accept_count(const Puzzle& puzzle, const AttributeSpace& attrs = AttributeSpace{}) {
    int n = 0;
    for (int k = 0; k < puzzle.option_count(); ++k) n += checker_accepts(puzzle, k, attrs) ? 1 : 0;
    return n;
}

}  // namespace cogsense
