#pragma once

// A deliberately tiny task whose rationale space can be enumerated exactly:
// one 1x1 question panel, two 1x1 options, digit-only rationales of bounded
// length. Used to compare the trained sampler against the enumerated target
// posterior by total-variation distance.

#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

#include "cogsense/dataset.hpp"
#include "cogsense/enumeration.hpp"
#include "cogsense/gfn.hpp"
#include "cogsense/sft.hpp"

namespace cogsense {

inline Puzzle toy_puzzle() {
    Panel q(1, 1);
    q.at(0, 0) = {1, 1, 1, true};
    Panel a(1, 1);
    a.at(0, 0) = {2, 1, 1, true};
    Panel b(1, 1);
    b.at(0, 0) = {1, 3, 2, true};
    Puzzle puzzle;
    puzzle.question_panels = {q};
    puzzle.option_panels = {a, b};
    puzzle.answer_index = 0;
    puzzle.rule.category = Category::kFluid;
    puzzle.rule.rule_kind = RuleKind::kProgression;
    puzzle.rule.attribute = Attribute::kShape;
    puzzle.rationale = {vocab::digit(0), vocab::digit(1)};
    return puzzle;
}

// Text budget: prompt (2) + rationale cap + stop + answer; the visual prefix
// of the toy puzzle needs at most 9 rows.
inline ModelConfig toy_model_config(int maxlen) {
    ModelConfig cfg;
    cfg.d_model = 16;
    cfg.n_layers = 2;
    cfg.n_heads = 2;
    cfg.ffn_width = 24;
    cfg.d_vis = 4;
    cfg.lvip_hidden = 4;
    cfg.max_text_len = 4 + maxlen;
    cfg.max_seq_len = 13 + maxlen;
    return cfg;
}

inline std::vector<int> digit_actions(int count) {
    std::vector<int> out;
    for (int d = 0; d < count; ++d) out.push_back(vocab::digit(d));
    return out;
}

// Sharpen a randomly initialized scorer so the reward varies visibly across
// rationales instead of being near-constant.
inline ModelState sharp_scorer_state(const ModelConfig& cfg, uint64_t seed) {
    ModelState s = init_model(cfg, seed);
    for (double& v : s.head_w.values) v *= 8.0;
    return s;
}

struct ToyTvResult {
    size_t n_sequences = 0;
    double sum_p = 0.0;      // Σ p* over the enumerated posterior
    double tv_before = 0.0;  // freshly initialized sampler vs p*
    double tv_after = 0.0;   // after `steps` training steps (== before at 0)
    int steps = 0;
};

// Enumerates the reward-induced posterior over digit rationales and measures
// how close the sampler gets to it, optionally training the sampler first.
// vocab = number of digit actions (the stop token is extra), maxlen = cap on
// rationale length. Seeds: scorer seed, sampler seed+1, training seed+2.
inline ToyTvResult run_toy_tv_experiment(int vocab, int maxlen, int steps, uint64_t seed) {
    if (vocab < 2 || vocab > 10) {
        throw std::invalid_argument("toy oracle: vocab must be 2..10 digit actions");
    }
    if (maxlen < 2) throw std::invalid_argument("toy oracle: maxlen must be at least 2");
    if (steps < 0) throw std::invalid_argument("toy oracle: negative step count");

    const ModelConfig cfg = toy_model_config(maxlen);
    const Puzzle puzzle = toy_puzzle();
    const std::vector<int> actions = digit_actions(vocab);

    ModelState scorer_state = sharp_scorer_state(cfg, seed);
    ScorerHandle scorer = freeze_scorer(scorer_state);
    ModelState policy = init_model(cfg, seed + 1);

    GfnConfig gcfg;
    gcfg.steps = steps;
    gcfg.samples_per_step = 8;
    gcfg.weights = {1.0, 0.1};
    gcfg.anchors = {2};
    gcfg.filter = {0.02, 0.02, 0};  // wide constant slack: train on everything
    gcfg.learning_rate = 2e-3;
    gcfg.seed = seed + 2;
    gcfg.action_tokens = actions;
    gcfg.max_rationale_len = maxlen;

    auto reward = [&](std::span<const int> z) {
        return prefix_reward(scorer->state(), scorer->state(), gcfg.weights, puzzle, z,
                             puzzle.answer_index)
            .combined;
    };
    const PosteriorEnumeration target = enumerate_posterior(reward, actions, maxlen);

    ToyTvResult out;
    out.steps = steps;
    out.n_sequences = target.trajectories.size();
    for (double p : target.probabilities) out.sum_p += p;

    const std::vector<double> q0 = enumerate_policy(policy, puzzle, actions, maxlen);
    out.tv_before = total_variation(q0, target.probabilities);
    out.tv_after = out.tv_before;
    if (steps > 0) {
        DatasetRecord rec;
        rec.puzzle = puzzle;
        rec.split = "train";
        rec.seed = 0;
        const std::vector<DatasetRecord> data = {rec};
        const GfnResult result = train_gfn(gcfg, policy, scorer, data);
        const std::vector<double> q1 = enumerate_policy(result.model, puzzle, actions, maxlen);
        out.tv_after = total_variation(q1, target.probabilities);
    }
    return out;
}

}  // namespace cogsense
