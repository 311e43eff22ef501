#pragma once

// Stage III: GFlowNet fine-tuning of the rationale policy. The policy is
// trained with a sub-trajectory balance objective so that its terminated
// sequences are distributed proportionally to exp(reward), where the reward
// combines answer evidence under a frozen scorer with an imagery-grounding
// term from the frozen prediction head. Prefix rewards are computed exactly
// only at sparse anchor indices and linearly interpolated in between, and
// candidate rationales train only if they pass a reference-relative
// acceptance threshold.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "cogsense/adam.hpp"
#include "cogsense/model.hpp"
#include "cogsense/sft.hpp"

namespace cogsense {

// ---------------------------------------------------------------------------
// Schedules and weights
// ---------------------------------------------------------------------------

struct RewardWeights {
    double alpha = 1.0;  // answer-evidence weight
    double gamma = 0.1;  // imagery-grounding weight

    void validate() const {
        if (alpha < 0.0 || gamma < 0.0) {
            throw std::invalid_argument("RewardWeights: weights must be nonnegative");
        }
        if (alpha + gamma <= 0.0) {
            throw std::invalid_argument("RewardWeights: at least one weight must be positive");
        }
    }
};

struct AnchorSchedule {
    int stride = 4;  // exact prefix rewards every `stride` steps

    void validate() const {
        if (stride < 1) throw std::invalid_argument("AnchorSchedule: stride must be >= 1");
    }
};

// Acceptance slack per training step: delta ramps linearly from delta0 to
// delta_final over warmup_steps, then stays flat. delta_final == delta0
// gives a constant schedule.
struct FilterSchedule {
    double delta0 = 0.5;
    double delta_final = 1.0;
    int warmup_steps = 200;

    double delta(int step) const {
        if (warmup_steps <= 0) return delta_final;
        const double frac = std::min(1.0, static_cast<double>(step) / warmup_steps);
        return delta0 + (delta_final - delta0) * frac;
    }

    void validate() const {
        if (!(delta0 > 0.0 && delta0 <= 1.0) || !(delta_final > 0.0 && delta_final <= 1.0)) {
            throw std::invalid_argument("FilterSchedule: delta values must lie in (0, 1]");
        }
        if (warmup_steps < 0) throw std::invalid_argument("FilterSchedule: negative warmup");
    }
};

// ---------------------------------------------------------------------------
// Rewards
// ---------------------------------------------------------------------------

struct RewardBreakdown {
    int t = 0;  // prefix length the reward was evaluated at
    double r_ans = 0.0;
    double r_lvip = 0.0;
    double combined = 0.0;
};

// Answer evidence of option y under the (frozen) scorer, conditioned on the
// puzzle and a rationale prefix.
inline double reward_ans(const ModelState& scorer_state, const Puzzle& puzzle,
                         std::span<const int> z_prefix, int option_index) {
    return answer_logprob(scorer_state, puzzle, z_prefix, option_index);
}

inline double neg_squared_distance(const Tensor& a, const Tensor& b) {
    if (!a.same_shape(b)) throw DimensionError("neg_squared_distance: shape mismatch");
    double sum = 0.0;
    for (size_t i = 0; i < a.values.size(); ++i) {
        const double d = a.values[i] - b.values[i];
        sum += d * d;
    }
    return -sum;
}

// Imagery grounding: negative squared distance between the frozen prediction
// head applied to the pooled option summary and the frozen target embedding
// of the gold option. The head parameters and the target always come from
// the scorer; `backbone` supplies the hidden states (pass the scorer state
// for a stationary reward, or the live policy state for the moving-target
// variant). Because option cells precede the text under the causal mask,
// the pooled summary — and hence this reward — does not vary with z_prefix.
inline double reward_lvip(const ModelState& backbone, const ModelState& scorer_state,
                          const Puzzle& puzzle, std::span<const int> z_prefix) {
    if (puzzle.option_panels.empty()) {
        throw std::invalid_argument("reward_lvip: puzzle has no option panels");
    }
    if (backbone.config.d_model != scorer_state.config.d_model ||
        backbone.config.d_vis != scorer_state.config.d_vis) {
        throw std::invalid_argument("reward_lvip: backbone and scorer dimensions differ");
    }
    ForwardOutput f = forward_eval(backbone, puzzle, z_prefix);
    const Tensor& pooled = f.pooled_option;  // 1 x d_model

    const Tensor& w1 = scorer_state.lvip_w1;
    const Tensor& b1 = scorer_state.lvip_b1;
    const Tensor& w2 = scorer_state.lvip_w2;
    const Tensor& b2 = scorer_state.lvip_b2;
    Tensor hidden = Tensor::zeros(1, w1.cols());
    for (int j = 0; j < w1.cols(); ++j) {
        double acc = b1.at(0, j);
        for (int i = 0; i < w1.rows(); ++i) acc += pooled.at(0, i) * w1.at(i, j);
        hidden.at(0, j) = std::tanh(acc);
    }
    Tensor pred = Tensor::zeros(1, w2.cols());
    for (int k = 0; k < w2.cols(); ++k) {
        double acc = b2.at(0, k);
        for (int j = 0; j < w2.rows(); ++j) acc += hidden.at(0, j) * w2.at(j, k);
        pred.at(0, k) = acc;
    }
    Tensor target = target_embedding(scorer_state, puzzle.option_panels[puzzle.answer_index]);
    return neg_squared_distance(pred, target);
}

inline double combine_reward(const RewardWeights& weights, double r_ans, double r_lvip) {
    weights.validate();
    return weights.alpha * r_ans + weights.gamma * r_lvip;
}

// Full prefix reward with its parts, evaluated at prefix length |z|.
inline RewardBreakdown prefix_reward(const ModelState& scorer_state, const ModelState& backbone,
                                     const RewardWeights& weights, const Puzzle& puzzle,
                                     std::span<const int> z, int option_index) {
    RewardBreakdown out;
    out.t = static_cast<int>(z.size());
    out.r_ans = reward_ans(scorer_state, puzzle, z, option_index);
    out.r_lvip = reward_lvip(backbone, scorer_state, puzzle, z);
    out.combined = combine_reward(weights, out.r_ans, out.r_lvip);
    return out;
}

// ---------------------------------------------------------------------------
// Sparse-anchor densification
// ---------------------------------------------------------------------------

// Exact scores at anchor indices {0, stride, 2*stride, ...} < n plus the
// endpoint n; every interior index is filled by linear interpolation inside
// its segment. reward_at(t) is called once per anchor, in increasing order.
template <class RewardFn>
std::vector<double> densify_scores(int n, int stride, RewardFn&& reward_at) {
    if (n < 0) throw std::invalid_argument("densify_scores: negative length");
    if (stride < 1) throw std::invalid_argument("densify_scores: stride must be >= 1");
    std::vector<int> anchors;
    for (int t = 0; t < n; t += stride) anchors.push_back(t);
    anchors.push_back(n);
    std::vector<double> scores(n + 1, 0.0);
    for (int a : anchors) scores[a] = reward_at(a);
    for (size_t s = 0; s + 1 < anchors.size(); ++s) {
        const int lo = anchors[s];
        const int hi = anchors[s + 1];
        for (int i = 1; i < hi - lo; ++i) {
            scores[lo + i] =
                scores[lo] + (static_cast<double>(i) / (hi - lo)) * (scores[hi] - scores[lo]);
        }
    }
    return scores;
}

struct DensifiedRewards {
    std::vector<double> rtilde;            // densified prefix scores, length n+1
    std::vector<RewardBreakdown> anchors;  // exact reward parts at anchor indices
};

inline DensifiedRewards densify_prefix_rewards(const Puzzle& puzzle, std::span<const int> z,
                                               int option_index, int stride,
                                               const ModelState& scorer_state,
                                               const ModelState& backbone,
                                               const RewardWeights& weights) {
    DensifiedRewards out;
    // The grounding term does not depend on the prefix (option cells precede
    // the text), so evaluate it once and reuse it at every anchor.
    const double r_lvip = reward_lvip(backbone, scorer_state, puzzle, {});
    auto reward_at = [&](int t) {
        RewardBreakdown rb;
        rb.t = t;
        rb.r_ans = reward_ans(scorer_state, puzzle, z.first(t), option_index);
        rb.r_lvip = r_lvip;
        rb.combined = combine_reward(weights, rb.r_ans, rb.r_lvip);
        out.anchors.push_back(rb);
        return rb.combined;
    };
    out.rtilde = densify_scores(static_cast<int>(z.size()), stride, reward_at);
    return out;
}

// ---------------------------------------------------------------------------
// Trajectories and the sub-trajectory balance loss
// ---------------------------------------------------------------------------

struct Trajectory {
    std::vector<int> tokens;
    bool terminated = true;  // the stop action was taken after the last token
    bool truncated = false;  // the stop was forced by the length cap
    std::vector<double> rtilde;            // densified prefix scores, length tokens.size()+1
    std::vector<RewardBreakdown> anchors;  // exact reward parts at anchors
};

namespace detail {

// Additive mask restricting the policy softmax to an action set plus the
// stop token; empty action set means the full vocabulary.
inline Tensor action_mask_row(int vocab_size, std::span<const int> actions) {
    Tensor row = Tensor::zeros(1, vocab_size);
    if (actions.empty()) return row;
    for (double& v : row.values) v = -1e30;
    for (int a : actions) {
        if (a < 0 || a >= vocab_size) {
            throw std::invalid_argument("action set contains an out-of-vocabulary token");
        }
        row.at(0, a) = 0.0;
    }
    row.at(0, vocab::kEos) = 0.0;
    return row;
}

}  // namespace detail

// Sub-trajectory balance over all prefix pairs of one trajectory. logits and
// flows are the full-sequence model outputs; state_pos0 is the sequence row
// of the empty-rationale state (the last prompt position), so prefix t lives
// at row state_pos0 + t. Every prefix also contributes a termination
// residual that ties the terminal flow to exp(rtilde[t]); residuals are
// weighted geometrically by kappa per action step and averaged.
inline Var subtb_loss(Tape& tape, const Trajectory& traj, Var logits, Var flows, int state_pos0,
                      double kappa, std::span<const int> actions = {}) {
    const int n = static_cast<int>(traj.tokens.size());
    if (traj.rtilde.size() != static_cast<size_t>(n) + 1) {
        throw std::invalid_argument("subtb_loss: densified scores must cover every prefix");
    }
    for (double r : traj.rtilde) {
        if (!std::isfinite(r)) throw std::runtime_error("subtb_loss: non-finite densified score");
    }
    if (!(kappa > 0.0)) throw std::invalid_argument("subtb_loss: kappa must be positive");
    if (state_pos0 < 0) throw std::invalid_argument("subtb_loss: negative state position");

    Var plogits = logits;
    if (!actions.empty()) {
        plogits = add_row(logits, tape.constant(detail::action_mask_row(
                                      tape.value(logits).cols(), actions)));
    }

    // log P(token | prefix) per action step, and log P(stop | prefix) at
    // every prefix; a truncated trajectory stops with probability one.
    std::vector<Var> cum;  // cum[t] = sum of the first t action log-probs
    cum.push_back(tape.constant(Tensor::scalar(0.0)));
    for (int t = 0; t < n; ++t) {
        Var lp = scale(cross_entropy_row(plogits, state_pos0 + t, traj.tokens[t]), -1.0);
        cum.push_back(add(cum.back(), lp));
    }
    std::vector<Var> stop_lp;
    for (int t = 0; t <= n; ++t) {
        if (t == n && traj.truncated) {
            stop_lp.push_back(tape.constant(Tensor::scalar(0.0)));
        } else {
            stop_lp.push_back(scale(cross_entropy_row(plogits, state_pos0 + t, vocab::kEos), -1.0));
        }
    }
    std::vector<Var> log_flow;
    for (int t = 0; t <= n; ++t) {
        log_flow.push_back(slice_rows(flows, state_pos0 + t, state_pos0 + t + 1));
    }

    std::vector<double> kappa_pow(n + 2, 1.0);
    for (int d = 1; d <= n + 1; ++d) kappa_pow[d] = kappa_pow[d - 1] * kappa;

    std::vector<Var> weighted;
    double weight_sum = 0.0;
    for (int i = 0; i <= n; ++i) {
        // Interior residuals between prefix flows.
        for (int j = i + 1; j <= n; ++j) {
            Var residual = sub(add(log_flow[i], sub(cum[j], cum[i])), log_flow[j]);
            weighted.push_back(scale(square(residual), kappa_pow[j - i]));
            weight_sum += kappa_pow[j - i];
        }
        // Termination residuals: stop at prefix t and match its score.
        for (int t = i; t <= n; ++t) {
            Var flowthrough = add(add(log_flow[i], sub(cum[t], cum[i])), stop_lp[t]);
            Var residual = sub(flowthrough, tape.constant(Tensor::scalar(traj.rtilde[t])));
            weighted.push_back(scale(square(residual), kappa_pow[t - i + 1]));
            weight_sum += kappa_pow[t - i + 1];
        }
    }
    return scale(add_all(weighted), 1.0 / weight_sum);
}

// ---------------------------------------------------------------------------
// Acceptance filter
// ---------------------------------------------------------------------------

// A candidate trains only if its reward is within log(delta) of the
// reference reward. delta = 1 admits exactly the candidates at least as good
// as the reference.
inline bool accept(double candidate_reward, double reference_reward, double delta) {
    if (!(delta > 0.0 && delta <= 1.0)) {
        throw std::invalid_argument("accept: delta must lie in (0, 1]");
    }
    return candidate_reward >= reference_reward + std::log(delta);
}

inline bool accept(const ModelState& scorer_state, const ModelState& backbone,
                   const RewardWeights& weights, const Puzzle& puzzle,
                   std::span<const int> z_candidate, std::span<const int> z_reference,
                   int option_index, double delta) {
    const double cand =
        prefix_reward(scorer_state, backbone, weights, puzzle, z_candidate, option_index).combined;
    const double ref =
        prefix_reward(scorer_state, backbone, weights, puzzle, z_reference, option_index).combined;
    return accept(cand, ref, delta);
}

// ---------------------------------------------------------------------------
// Ancestral sampling and MAP selection
// ---------------------------------------------------------------------------

struct SampledRationale {
    std::vector<int> tokens;
    int answer = 0;          // greedy answer decoded after the rationale
    bool truncated = false;  // stop forced by the length cap
};

namespace detail {

inline std::vector<int> allowed_actions(int vocab_size, std::span<const int> actions) {
    std::vector<int> out;
    if (actions.empty()) {
        for (int t = 0; t < vocab_size; ++t) out.push_back(t);
        return out;
    }
    out.assign(actions.begin(), actions.end());
    if (std::find(out.begin(), out.end(), static_cast<int>(vocab::kEos)) == out.end()) {
        out.push_back(vocab::kEos);
    }
    std::sort(out.begin(), out.end());
    return out;
}

// Maximum rationale length that still leaves room for the stop token and
// answer token inside the text budget.
inline int rationale_budget(const ModelConfig& config, const Puzzle& puzzle) {
    const int prompt = static_cast<int>(prompt_tokens(puzzle).size());
    return std::max(0, config.max_text_len - prompt - 2);
}

}  // namespace detail

// One ancestral sample from the policy: tokens are drawn from the softmax
// over the action set plus stop at temperature `temperature` (0 = greedy,
// ties to the lowest token id) until stop is drawn or the length cap forces
// it. The answer is then decoded greedily conditioned on the sample.
inline SampledRationale sample_rationale(const ModelState& state, const Puzzle& puzzle,
                                         double temperature, Rng& rng,
                                         std::span<const int> actions = {}, int max_len = -1) {
    if (temperature < 0.0) throw std::invalid_argument("sample_rationale: negative temperature");
    const int budget = detail::rationale_budget(state.config, puzzle);
    if (max_len < 0 || max_len > budget) max_len = budget;
    const std::vector<int> allowed = detail::allowed_actions(state.config.vocab_size, actions);

    SampledRationale out;
    for (;;) {
        if (static_cast<int>(out.tokens.size()) >= max_len) {
            out.truncated = true;  // stop is forced at the cap
            break;
        }
        ForwardOutput f = forward_eval(state, puzzle, out.tokens);
        const int row = f.spans.length - 1;
        int picked;
        if (temperature == 0.0) {
            picked = allowed.front();
            for (int tok : allowed) {
                if (f.logits.at(row, tok) > f.logits.at(row, picked)) picked = tok;
            }
        } else {
            double max_logit = -std::numeric_limits<double>::infinity();
            for (int tok : allowed) max_logit = std::max(max_logit, f.logits.at(row, tok));
            std::vector<double> probs(allowed.size());
            double norm = 0.0;
            for (size_t k = 0; k < allowed.size(); ++k) {
                probs[k] = std::exp((f.logits.at(row, allowed[k]) - max_logit) / temperature);
                norm += probs[k];
            }
            for (double& p : probs) p /= norm;
            picked = allowed[rng.categorical(probs)];
        }
        if (picked == vocab::kEos) break;
        out.tokens.push_back(picked);
    }
    out.answer = predict_answer(state, puzzle, out.tokens);
    return out;
}

inline std::vector<SampledRationale> sample_rationales(const ModelState& state,
                                                       const Puzzle& puzzle, int n_samples,
                                                       double temperature, Rng& rng,
                                                       std::span<const int> actions = {},
                                                       int max_len = -1) {
    if (n_samples < 1) throw std::invalid_argument("sample_rationales: need at least one sample");
    std::vector<SampledRationale> out;
    out.reserve(n_samples);
    for (int i = 0; i < n_samples; ++i) {
        out.push_back(sample_rationale(state, puzzle, temperature, rng, actions, max_len));
    }
    return out;
}

struct MapCandidate {
    std::vector<int> tokens;
    int answer = 0;
};

// Length-normalized answer evidence of each candidate under the scorer:
// log q(answer | puzzle, rationale) / (rationale length + 1 answer token).
inline std::vector<double> map_scores(const ModelState& scorer_state, const Puzzle& puzzle,
                                      std::span<const MapCandidate> candidates) {
    if (candidates.empty()) throw std::invalid_argument("map_scores: empty candidate list");
    std::vector<double> out;
    out.reserve(candidates.size());
    for (const MapCandidate& c : candidates) {
        const double lp = answer_logprob(scorer_state, puzzle, c.tokens, c.answer);
        out.push_back(lp / (static_cast<double>(c.tokens.size()) + 1.0));
    }
    return out;
}

// Answer of the best-scoring candidate; ties go to the lowest index.
inline int map_select(const ModelState& scorer_state, const Puzzle& puzzle,
                      std::span<const MapCandidate> candidates) {
    std::vector<double> scores = map_scores(scorer_state, puzzle, candidates);
    size_t best = 0;
    for (size_t i = 1; i < scores.size(); ++i) {
        if (scores[i] > scores[best]) best = i;
    }
    return candidates[best].answer;
}

// ---------------------------------------------------------------------------
// Training loop
// ---------------------------------------------------------------------------

struct GfnConfig {
    int steps = 200;
    int samples_per_step = 8;  // policy samples per step (the reference is extra)
    double kappa = 0.9;
    RewardWeights weights;
    AnchorSchedule anchors;
    FilterSchedule filter;
    double temperature = 1.0;
    double learning_rate = 1e-3;
    double weight_decay = 0.0;
    uint64_t seed = 0;
    // Reward backbone: false = frozen scorer state (stationary reward),
    // true = live policy state (the moving-target variant).
    bool live_reward_backbone = false;
    // Keep the reference rationale in every candidate pool so each step has
    // at least one trajectory that passes the filter.
    bool include_reference = true;
    std::vector<int> action_tokens;  // empty = full vocabulary
    int max_rationale_len = -1;      // -1 = fit the text budget

    void validate() const {
        if (steps < 0) throw std::invalid_argument("GfnConfig: negative step count");
        if (samples_per_step < 1) throw std::invalid_argument("GfnConfig: need samples per step");
        if (!(kappa > 0.0 && kappa <= 1.0)) {
            throw std::invalid_argument("GfnConfig: kappa must lie in (0, 1]");
        }
        if (temperature < 0.0) throw std::invalid_argument("GfnConfig: negative temperature");
        if (learning_rate <= 0.0) throw std::invalid_argument("GfnConfig: learning rate must be positive");
        if (weight_decay < 0.0) throw std::invalid_argument("GfnConfig: negative weight decay");
        weights.validate();
        anchors.validate();
        filter.validate();
    }
};

struct GfnStepLog {
    int step = 0;
    double accept_rate = 0.0;
    double mean_reward = 0.0;
    double mean_r_ans = 0.0;
    double mean_r_lvip = 0.0;
    double subtb_loss = 0.0;
    double delta = 0.0;
    bool skipped = false;  // no candidate passed the filter; no update applied

    friend bool operator==(const GfnStepLog&, const GfnStepLog&) = default;
};

struct GfnResult {
    ModelState model;
    std::vector<GfnStepLog> log;
};

inline GfnResult train_gfn(const GfnConfig& config, const ModelState& sft_model,
                           const ScorerHandle& scorer, std::span<const DatasetRecord> dataset) {
    config.validate();
    if (!scorer) throw std::invalid_argument("train_gfn: null scorer");
    if (dataset.empty()) throw std::invalid_argument("train_gfn: empty dataset");
    for (const DatasetRecord& rec : dataset) {
        if (!config.action_tokens.empty()) {
            for (int tok : rec.puzzle.rationale) {
                if (std::find(config.action_tokens.begin(), config.action_tokens.end(), tok) ==
                    config.action_tokens.end()) {
                    throw std::invalid_argument(
                        "train_gfn: reference rationale uses tokens outside the action set");
                }
            }
        }
    }

    ModelState state = sft_model;
    AdamConfig adam_config;
    adam_config.learning_rate = config.learning_rate;
    adam_config.weight_decay = config.weight_decay;
    Adam adam(adam_config);
    Rng rng(config.seed);

    GfnResult result;
    for (int step = 0; step < config.steps; ++step) {
        const DatasetRecord& rec = dataset[step % dataset.size()];
        const Puzzle& puzzle = rec.puzzle;
        const int gold = puzzle.answer_index;
        const double delta = config.filter.delta(step);
        const ModelState& backbone = config.live_reward_backbone ? state : scorer->state();

        std::vector<SampledRationale> pool;
        if (config.include_reference) {
            SampledRationale ref;
            ref.tokens = puzzle.rationale;
            ref.answer = gold;
            pool.push_back(std::move(ref));
        }
        std::vector<SampledRationale> sampled =
            sample_rationales(state, puzzle, config.samples_per_step, config.temperature, rng,
                              config.action_tokens, config.max_rationale_len);
        pool.insert(pool.end(), std::make_move_iterator(sampled.begin()),
                    std::make_move_iterator(sampled.end()));

        const double reference_reward =
            prefix_reward(scorer->state(), backbone, config.weights, puzzle, puzzle.rationale, gold)
                .combined;

        GfnStepLog row;
        row.step = step;
        row.delta = delta;
        std::vector<Trajectory> accepted;
        for (const SampledRationale& cand : pool) {
            RewardBreakdown rb =
                prefix_reward(scorer->state(), backbone, config.weights, puzzle, cand.tokens, gold);
            row.mean_reward += rb.combined;
            row.mean_r_ans += rb.r_ans;
            row.mean_r_lvip += rb.r_lvip;
            if (!accept(rb.combined, reference_reward, delta)) continue;
            DensifiedRewards dense =
                densify_prefix_rewards(puzzle, cand.tokens, gold, config.anchors.stride,
                                       scorer->state(), backbone, config.weights);
            Trajectory traj;
            traj.tokens = cand.tokens;
            traj.truncated = cand.truncated;
            traj.rtilde = std::move(dense.rtilde);
            traj.anchors = std::move(dense.anchors);
            accepted.push_back(std::move(traj));
        }
        row.mean_reward /= pool.size();
        row.mean_r_ans /= pool.size();
        row.mean_r_lvip /= pool.size();
        row.accept_rate = static_cast<double>(accepted.size()) / pool.size();

        if (accepted.empty()) {
            row.skipped = true;
            result.log.push_back(row);
            continue;
        }

        Tape tape;
        ParamVars p = lift_params(tape, state);
        std::vector<Var> losses;
        for (const Trajectory& traj : accepted) {
            ForwardVars f = forward_model(tape, p, state.config, puzzle, traj.tokens);
            losses.push_back(subtb_loss(tape, traj, f.logits, f.flows,
                                        f.spans.rationale.begin - 1, config.kappa,
                                        config.action_tokens));
        }
        Var loss = scale(add_all(losses), 1.0 / losses.size());
        row.subtb_loss = tape.value(loss).item();
        tape.backward(loss);
        adam.step(state, collect_grads(tape, p));
        result.log.push_back(row);
    }
    result.model = std::move(state);
    return result;
}

}  // namespace cogsense
