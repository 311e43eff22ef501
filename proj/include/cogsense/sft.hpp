#pragma once

#include <cmath>
#include <memory>
#include <numeric>
#include <optional>
#include <vector>

#include "cogsense/adam.hpp"
#include "cogsense/model.hpp"
#include "cogsense/rationale.hpp"

namespace cogsense {

struct SftConfig {
    double beta = 1.0;  // imagery-prediction weight
    double learning_rate = 1e-3;
    double weight_decay = 1e-5;
    int batch_size = 8;
    int epochs = 10;
    uint64_t seed = 0;

    void validate() const {
        if (beta < 0.0) throw std::invalid_argument("SftConfig: beta must be nonnegative");
        if (learning_rate <= 0.0) throw std::invalid_argument("SftConfig: learning rate must be positive");
        if (batch_size <= 0 || epochs < 0) {
            throw std::invalid_argument("SftConfig: batch size must be positive, epochs nonnegative");
        }
    }
};

// Target token stream for a record: rationale, termination, answer.
inline std::vector<int> target_suffix(const Puzzle& puzzle) {
    std::vector<int> x = puzzle.rationale;
    x.push_back(vocab::kEos);
    x.push_back(vocab::option(puzzle.answer_index));
    return x;
}

struct SftLossVars {
    Var total;
    Var ce;
    std::optional<Var> mse;  // absent when beta == 0: the term is never built
};

// Joint loss over a batch: per-sequence token cross-entropy (summed over the
// rationale, termination, and answer positions) plus beta times the imagery
// error against the frozen-encoder target of the gold option panel; both
// averaged over the batch.
inline SftLossVars build_sft_loss(Tape& tape, const ParamVars& p, const ModelState& state,
                                  std::span<const DatasetRecord> batch, double beta) {
    if (batch.empty()) throw std::invalid_argument("build_sft_loss: empty batch");
    if (beta < 0.0) throw std::invalid_argument("build_sft_loss: beta must be nonnegative");
    std::vector<Var> ce_terms;
    std::vector<Var> mse_terms;
    for (const DatasetRecord& rec : batch) {
        const Puzzle& puzzle = rec.puzzle;
        if (!filter_chain(puzzle.rationale, puzzle.answer_index)) {
            throw std::invalid_argument("build_sft_loss: batch record failed the chain filter");
        }
        std::vector<int> suffix = target_suffix(puzzle);
        ForwardVars f = forward_model(tape, p, state.config, puzzle, suffix);
        // Logits at position t predict the token at t+1; the first suffix
        // token is predicted from the last prompt position.
        std::vector<Var> steps;
        for (size_t t = 0; t < suffix.size(); ++t) {
            steps.push_back(cross_entropy_row(f.logits, f.spans.rationale.begin - 1 + static_cast<int>(t),
                                              suffix[t]));
        }
        ce_terms.push_back(add_all(steps));
        if (beta > 0.0) {
            Tensor h_y = target_embedding(state, puzzle.option_panels[puzzle.answer_index]);
            mse_terms.push_back(mse(f.lvip_pred, tape.constant(h_y)));
        }
    }
    const double inv_b = 1.0 / static_cast<double>(batch.size());
    SftLossVars out;
    out.ce = scale(add_all(ce_terms), inv_b);
    if (beta > 0.0) {
        out.mse = scale(add_all(mse_terms), inv_b);
        out.total = add(out.ce, scale(*out.mse, beta));
    } else {
        out.total = out.ce;
    }
    return out;
}

struct SftLossBreakdown {
    double total = 0.0;
    double ce = 0.0;
    double mse = 0.0;
};

inline SftLossBreakdown sft_loss(const ModelState& state, std::span<const DatasetRecord> batch,
                                 double beta) {
    Tape tape;
    ParamVars p = lift_params(tape, state);
    SftLossVars vars = build_sft_loss(tape, p, state, batch, beta);
    SftLossBreakdown out;
    out.total = tape.value(vars.total).item();
    out.ce = tape.value(vars.ce).item();
    out.mse = vars.mse ? tape.value(*vars.mse).item() : 0.0;
    return out;
}

// Log-probability of option y among the K option tokens, teacher-forced on
// the given rationale: softmax restricted to the option-letter slice of the
// vocabulary at the answer position.
inline double answer_logprob(const ModelState& state, const Puzzle& puzzle,
                             std::span<const int> rationale, int option_index) {
    if (option_index < 0 || option_index >= puzzle.option_count()) {
        throw std::invalid_argument("answer_logprob: option index out of range");
    }
    std::vector<int> suffix(rationale.begin(), rationale.end());
    suffix.push_back(vocab::kEos);
    ForwardOutput f = forward_eval(state, puzzle, suffix);
    const int row = f.spans.length - 1;
    double max_logit = -std::numeric_limits<double>::infinity();
    for (int k = 0; k < puzzle.option_count(); ++k) {
        max_logit = std::max(max_logit, f.logits.at(row, vocab::option(k)));
    }
    double lse = 0.0;
    for (int k = 0; k < puzzle.option_count(); ++k) {
        lse += std::exp(f.logits.at(row, vocab::option(k)) - max_logit);
    }
    return f.logits.at(row, vocab::option(option_index)) - max_logit - std::log(lse);
}

// Gold-rationale answer prediction: argmax over option tokens (ties go to
// the lowest index).
inline int predict_answer(const ModelState& state, const Puzzle& puzzle,
                          std::span<const int> rationale) {
    std::vector<int> suffix(rationale.begin(), rationale.end());
    suffix.push_back(vocab::kEos);
    ForwardOutput f = forward_eval(state, puzzle, suffix);
    const int row = f.spans.length - 1;
    int best = 0;
    for (int k = 1; k < puzzle.option_count(); ++k) {
        if (f.logits.at(row, vocab::option(k)) > f.logits.at(row, vocab::option(best))) best = k;
    }
    return best;
}

struct SftEpochMetrics {
    int epoch = 0;
    double ce = 0.0;
    double mse = 0.0;
    double total = 0.0;
    double eval_accuracy = 0.0;
    double eval_mse = 0.0;

    bool operator==(const SftEpochMetrics&) const = default;
};

struct SftResult {
    ModelState model;
    std::vector<SftEpochMetrics> history;
};

struct TrainingDiverged : std::runtime_error {
    using std::runtime_error::runtime_error;
};

namespace detail {

inline double eval_mse_value(const ModelState& state, const Puzzle& puzzle) {
    ForwardOutput f = forward_eval(state, puzzle, target_suffix(puzzle));
    Tensor h_y = target_embedding(state, puzzle.option_panels[puzzle.answer_index]);
    double acc = 0.0;
    for (int c = 0; c < h_y.cols(); ++c) {
        const double d = f.lvip_pred.at(0, c) - h_y.at(0, c);
        acc += d * d;
    }
    return acc / h_y.cols();
}

inline SftEpochMetrics eval_epoch(const ModelState& state, std::span<const DatasetRecord> eval_set,
                                  int epoch) {
    SftEpochMetrics m;
    m.epoch = epoch;
    int correct = 0;
    double mse_sum = 0.0;
    for (const DatasetRecord& rec : eval_set) {
        if (predict_answer(state, rec.puzzle, rec.puzzle.rationale) == rec.puzzle.answer_index) {
            ++correct;
        }
        mse_sum += eval_mse_value(state, rec.puzzle);
    }
    m.eval_accuracy = eval_set.empty() ? 0.0 : static_cast<double>(correct) / eval_set.size();
    m.eval_mse = eval_set.empty() ? 0.0 : mse_sum / eval_set.size();
    return m;
}

}  // namespace detail

// Stage-II training: teacher-forced joint optimization. Row 0 of the history
// is the pre-training snapshot; row e reflects the state after epoch e.
inline SftResult train_sft(ModelState state, const SftConfig& config,
                           std::span<const DatasetRecord> train, std::span<const DatasetRecord> eval_set) {
    config.validate();
    if (train.empty()) throw std::invalid_argument("train_sft: empty training set");
    AdamConfig adam_config;
    adam_config.learning_rate = config.learning_rate;
    adam_config.weight_decay = config.weight_decay;
    Adam adam(adam_config);
    Rng rng(config.seed);

    SftResult result;
    try {
        SftEpochMetrics first = detail::eval_epoch(state, eval_set, 0);
        // Batch-sized chunks: one tape over the whole set would not fit in
        // memory for large corpora.
        SftLossBreakdown initial;
        for (size_t start = 0; start < train.size(); start += config.batch_size) {
            const size_t count = std::min<size_t>(config.batch_size, train.size() - start);
            const SftLossBreakdown chunk = sft_loss(state, train.subspan(start, count), config.beta);
            initial.total += chunk.total * count;
            initial.ce += chunk.ce * count;
            initial.mse += chunk.mse * count;
        }
        initial.total /= train.size();
        initial.ce /= train.size();
        initial.mse /= train.size();
        if (!std::isfinite(initial.total)) throw TrainingDiverged("train_sft: non-finite loss");
        first.ce = initial.ce;
        first.mse = initial.mse;
        first.total = initial.total;
        result.history.push_back(first);
    } catch (const TrainingDiverged&) {
        throw;
    } catch (const std::runtime_error& e) {
        throw TrainingDiverged(std::string("train_sft: aborted at epoch 0: ") + e.what());
    }

    std::vector<int> order(train.size());
    std::iota(order.begin(), order.end(), 0);
    for (int epoch = 1; epoch <= config.epochs; ++epoch) {
        rng.shuffle(order);
        double ce_sum = 0.0, mse_sum = 0.0, total_sum = 0.0;
        int seen = 0;
        for (size_t start = 0; start < order.size(); start += config.batch_size) {
            const size_t stop = std::min(order.size(), start + config.batch_size);
            std::vector<DatasetRecord> batch;
            for (size_t i = start; i < stop; ++i) batch.push_back(train[order[i]]);
            try {
                Tape tape;
                ParamVars p = lift_params(tape, state);
                SftLossVars loss = build_sft_loss(tape, p, state, batch, config.beta);
                const double value = tape.value(loss.total).item();
                if (!std::isfinite(value)) {
                    throw TrainingDiverged("train_sft: non-finite loss at epoch " +
                                           std::to_string(epoch) + ", batch offset " +
                                           std::to_string(start));
                }
                ce_sum += tape.value(loss.ce).item() * batch.size();
                mse_sum += (loss.mse ? tape.value(*loss.mse).item() : 0.0) * batch.size();
                total_sum += value * batch.size();
                seen += static_cast<int>(batch.size());
                tape.backward(loss.total);
                adam.step(state, collect_grads(tape, p));
            } catch (const TrainingDiverged&) {
                throw;
            } catch (const std::runtime_error& e) {
                throw TrainingDiverged("train_sft: aborted at epoch " + std::to_string(epoch) +
                                       ", batch offset " + std::to_string(start) + ": " + e.what());
            }
        }
        // Training losses are the running averages seen during the epoch.
        SftEpochMetrics m = detail::eval_epoch(state, eval_set, epoch);
        m.ce = ce_sum / seen;
        m.mse = mse_sum / seen;
        m.total = total_sum / seen;
        result.history.push_back(m);
    }
    result.model = std::move(state);
    return result;
}

// ---------------------------------------------------------------------------
// Frozen scorer.
// ---------------------------------------------------------------------------

// Deep immutable copy of a trained model; shares nothing with the live
// parameters, so later updates can never leak into its scores.
class Scorer {
public:
    explicit Scorer(ModelState state) : state_(std::move(state)) {}
    const ModelState& state() const { return state_; }

private:
    ModelState state_;
};

using ScorerHandle = std::shared_ptr<const Scorer>;

inline ScorerHandle freeze_scorer(const ModelState& model) {
    return std::make_shared<const Scorer>(model);
}

}  // namespace cogsense
