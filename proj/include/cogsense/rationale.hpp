#pragma once

#include <span>
#include <vector>

#include "cogsense/generators.hpp"
#include "cogsense/puzzle.hpp"

namespace cogsense {

inline constexpr int kMinRationaleSteps = 3;
inline constexpr int kMaxRationaleSteps = 12;

struct RationaleCheck {
    bool well_formed = false;
    int predicted_option = -1;  // -1 when no valid answer step exists
    int step_count = 0;
};

// Structural pass over a rationale: tokens must be in-vocabulary and
// non-terminal, steps separated by single STEP tokens, step count within
// bounds, and the final step exactly [ANS, OPT_k]. The answer marker may not
// appear anywhere else.
inline RationaleCheck inspect_rationale(std::span<const int> tokens) {
    RationaleCheck out;
    if (tokens.empty()) return out;
    for (int t : tokens) {
        if (t < 0 || t >= vocab::kCount || t == vocab::kEos) return out;
    }
    std::vector<std::vector<int>> steps(1);
    for (int t : tokens) {
        if (t == vocab::kStep) {
            steps.emplace_back();
        } else {
            steps.back().push_back(t);
        }
    }
    for (const auto& s : steps) {
        if (s.empty()) return out;  // leading, trailing, or doubled separator
    }
    out.step_count = static_cast<int>(steps.size());
    if (out.step_count < kMinRationaleSteps || out.step_count > kMaxRationaleSteps) return out;
    const auto& last = steps.back();
    if (last.size() != 2 || last[0] != vocab::kAnswerMarker || !vocab::is_option(last[1])) return out;
    for (size_t i = 0; i + 1 < steps.size(); ++i) {
        for (int t : steps[i]) {
            if (t == vocab::kAnswerMarker) return out;
        }
    }
    out.well_formed = true;
    out.predicted_option = vocab::option_index(last[1]);
    return out;
}

// Option index committed by a rationale, or -1 if it is malformed.
inline int parse_predicted_option(std::span<const int> tokens) {
    return inspect_rationale(tokens).predicted_option;
}

// Stage-I acceptance filter: keep a chain only when the predicted option is
// the gold one and the chain itself is well formed.
inline bool filter_chain(std::span<const int> tokens, int predicted_index, int gold_index) {
    return predicted_index == gold_index && inspect_rationale(tokens).well_formed;
}

// Convenience form: the predicted option is the one the chain commits to.
inline bool filter_chain(std::span<const int> tokens, int gold_index) {
    RationaleCheck c = inspect_rationale(tokens);
    return c.well_formed && c.predicted_option == gold_index;
}

namespace detail {

inline void push_count_digits(std::vector<int>& out, int n) {
    if (n > 9) out.push_back(vocab::digit(n / 10));
    out.push_back(vocab::digit(n % 10));
}

inline void push_mask_bits(std::vector<int>& out, const Panel& p) {
    for (const Cell& c : p.cells) out.push_back(vocab::digit(c.present ? 1 : 0));
}

}  // namespace detail

// Template rationale for a generated puzzle: name the rule, report the
// observations it rests on, state the derived target, then commit to an
// option. Always passes filter_chain against the gold answer.
inline std::vector<int> synthesize_rationale(const Puzzle& puzzle,
                                             const AttributeSpace& attrs = AttributeSpace{}) {
    const RuleDescriptor& rule = puzzle.rule;
    std::vector<int> z;
    auto step = [&]() { z.push_back(vocab::kStep); };
    switch (rule.rule_kind) {
        case RuleKind::kProgression: {
            const auto& q = puzzle.question_panels;
            int v1 = panel_value(q[q.size() - 2], rule.attribute).value();
            int v2 = panel_value(q[q.size() - 1], rule.attribute).value();
            int v3 = 2 * v2 - v1;
            z = {vocab::kRuleProgression, vocab::attribute_token(rule.attribute)};
            step();
            z.push_back(vocab::digit(v1));
            z.push_back(vocab::digit(v2));
            step();
            z.push_back(vocab::kTarget);
            z.push_back(vocab::digit(v3));
            break;
        }
        case RuleKind::kConstancy: {
            const auto& q = puzzle.question_panels;
            int v = panel_value(q[q.size() - 1], rule.attribute).value();
            z = {vocab::kRuleConstancy, vocab::attribute_token(rule.attribute)};
            step();
            z.push_back(vocab::digit(v));
            z.push_back(vocab::digit(v));
            step();
            z.push_back(vocab::kTarget);
            z.push_back(vocab::digit(v));
            break;
        }
        case RuleKind::kXor: {
            const auto& q = puzzle.question_panels;
            const Panel& a = q[q.size() - 2];
            const Panel& b = q[q.size() - 1];
            z = {vocab::kRuleXor, vocab::kAttrPresence};
            step();
            detail::push_mask_bits(z, a);
            step();
            detail::push_mask_bits(z, b);
            step();
            z.push_back(vocab::kTarget);
            Panel x(a.width, a.height);
            for (size_t i = 0; i < x.cells.size(); ++i) {
                x.cells[i].present = a.cells[i].present != b.cells[i].present;
            }
            detail::push_mask_bits(z, x);
            break;
        }
        case RuleKind::kConceptMembership: {
            z = {vocab::kRuleConcept, vocab::attribute_token(rule.attribute)};
            step();
            z.push_back(vocab::digit(rule.parameters[0]));
            z.push_back(vocab::digit(rule.parameters.size() > 1 ? rule.parameters[1] : 0));
            break;
        }
        case RuleKind::kTransformation: {
            int kind = rule.parameters[0];
            z = {vocab::kRuleTransform, vocab::kOpRecolor + kind};
            if (kind == kTransformRecolor) {
                step();
                for (size_t i = 3; i < rule.parameters.size(); ++i) {
                    z.push_back(vocab::digit(rule.parameters[i]));
                }
            }
            step();
            z.push_back(vocab::kTarget);
            Panel truth = apply_transform(rule, puzzle.question_panels.back(), attrs);
            detail::push_count_digits(z, truth.count_present());
            break;
        }
        case RuleKind::kOddOneOut: {
            int deviant = panel_value(puzzle.option_panels[puzzle.answer_index], rule.attribute).value();
            int shared = -1;
            for (int i = 0; i < puzzle.option_count(); ++i) {
                if (i != puzzle.answer_index) {
                    shared = panel_value(puzzle.option_panels[i], rule.attribute).value();
                    break;
                }
            }
            z = {vocab::kRuleOddOneOut, vocab::attribute_token(rule.attribute)};
            step();
            z.push_back(vocab::digit(shared));
            z.push_back(vocab::digit(deviant));
            step();
            z.push_back(vocab::kTarget);
            z.push_back(vocab::digit(deviant));
            break;
        }
    }
    if (z.empty()) throw std::invalid_argument("synthesize_rationale: unknown rule kind");
    step();
    z.push_back(vocab::kAnswerMarker);
    z.push_back(vocab::option(puzzle.answer_index));
    if (!filter_chain(z, puzzle.answer_index)) {
        throw std::logic_error("synthesize_rationale: produced a chain its own filter rejects");
    }
    return z;
}

}  // namespace cogsense
