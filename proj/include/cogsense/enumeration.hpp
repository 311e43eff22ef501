#pragma once

// Exhaustive enumeration oracles for small trajectory spaces: the exact
// reward-induced posterior p*(Z) ∝ exp(R(Z)) over all terminated sequences,
// and the exact sampling distribution of a policy over the same space. Both
// enumerate sequences in length-then-lexicographic order so their outputs
// align index by index.

#include <cmath>
#include <map>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "cogsense/gfn.hpp"
#include "cogsense/model.hpp"

namespace cogsense {

namespace detail {

inline void check_enumerable(size_t vocab_size, int max_len) {
    if (vocab_size == 0) throw std::invalid_argument("enumerate: empty vocabulary");
    if (max_len < 0) throw std::invalid_argument("enumerate: negative max length");
    double size = 1.0;
    for (int i = 0; i < max_len; ++i) size *= static_cast<double>(vocab_size);
    if (size > 1e6) {
        throw std::length_error("enumerate: trajectory space has about " +
                                std::to_string(size) + " sequences, beyond the 1e6 limit");
    }
}

}  // namespace detail

// All token sequences over `vocab` with length 0..max_len, ordered by length
// and then lexicographically by vocab position.
inline std::vector<std::vector<int>> enumerate_sequences(std::span<const int> vocab, int max_len) {
    detail::check_enumerable(vocab.size(), max_len);
    std::vector<std::vector<int>> out;
    out.push_back({});
    size_t level_begin = 0;
    for (int len = 1; len <= max_len; ++len) {
        const size_t level_end = out.size();
        for (size_t i = level_begin; i < level_end; ++i) {
            for (int tok : vocab) {
                std::vector<int> next = out[i];
                next.push_back(tok);
                out.push_back(std::move(next));
            }
        }
        level_begin = level_end;
    }
    return out;
}

struct PosteriorEnumeration {
    std::vector<std::vector<int>> trajectories;
    std::vector<double> probabilities;  // exp(R) / sum exp(R)
    double log_partition = 0.0;
};

// Exact posterior over every terminated trajectory of length <= max_len.
template <class RewardFn>
PosteriorEnumeration enumerate_posterior(RewardFn&& reward, std::span<const int> vocab,
                                         int max_len) {
    PosteriorEnumeration out;
    out.trajectories = enumerate_sequences(vocab, max_len);
    std::vector<double> r;
    r.reserve(out.trajectories.size());
    double max_r = -std::numeric_limits<double>::infinity();
    for (const auto& z : out.trajectories) {
        r.push_back(reward(std::span<const int>(z)));
        if (!std::isfinite(r.back())) {
            throw std::runtime_error("enumerate_posterior: non-finite reward");
        }
        max_r = std::max(max_r, r.back());
    }
    double norm = 0.0;
    for (double v : r) norm += std::exp(v - max_r);
    out.log_partition = max_r + std::log(norm);
    out.probabilities.reserve(r.size());
    for (double v : r) out.probabilities.push_back(std::exp(v - max_r) / norm);
    return out;
}

// Exact probability assigned by the policy to every trajectory of length
// <= max_len, aligned with enumerate_sequences(actions, max_len). Sequences
// shorter than the cap carry their stop-action factor; at the cap the stop
// is forced, matching the sampler's truncation rule.
inline std::vector<double> enumerate_policy(const ModelState& state, const Puzzle& puzzle,
                                            std::span<const int> actions, int max_len) {
    detail::check_enumerable(actions.size(), max_len);
    std::vector<std::vector<int>> sequences = enumerate_sequences(actions, max_len);
    const std::vector<int> allowed = detail::allowed_actions(state.config.vocab_size, actions);

    std::map<std::vector<int>, double> prefix_lp;
    prefix_lp[{}] = 0.0;
    std::vector<double> out;
    out.reserve(sequences.size());
    for (const auto& z : sequences) {
        const double base = prefix_lp.at(z);
        if (static_cast<int>(z.size()) == max_len) {
            out.push_back(std::exp(base));  // stop forced at the cap
            continue;
        }
        ForwardOutput f = forward_eval(state, puzzle, z);
        const int row = f.spans.length - 1;
        double max_logit = -std::numeric_limits<double>::infinity();
        for (int tok : allowed) max_logit = std::max(max_logit, f.logits.at(row, tok));
        double norm = 0.0;
        for (int tok : allowed) norm += std::exp(f.logits.at(row, tok) - max_logit);
        auto token_lp = [&](int tok) {
            return f.logits.at(row, tok) - max_logit - std::log(norm);
        };
        out.push_back(std::exp(base + token_lp(vocab::kEos)));
        for (int tok : actions) {
            std::vector<int> child = z;
            child.push_back(tok);
            prefix_lp[std::move(child)] = base + token_lp(tok);
        }
    }
    return out;
}

inline double total_variation(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) {
        throw std::invalid_argument("total_variation: distributions differ in size");
    }
    double sum = 0.0;
    for (size_t i = 0; i < a.size(); ++i) sum += std::abs(a[i] - b[i]);
    return 0.5 * sum;
}

}  // namespace cogsense
