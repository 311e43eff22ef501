#pragma once

// Per-category evaluation of a trained model on a puzzle set. Two decoding
// modes: greedy (argmax rollout, its decoded answer) and MAP-over-N-samples
// (length-normalized answer evidence picks among sampled rationales). The
// answer token alone is scored; rationale content never affects accuracy.

#include <cstdint>
#include <cstdio>
#include <optional>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "cogsense/dataset.hpp"
#include "cogsense/gfn.hpp"
#include "cogsense/model.hpp"

namespace cogsense {

enum class EvalMode { kGreedy, kMapN };

struct EvalOptions {
    EvalMode mode = EvalMode::kGreedy;
    int map_samples = 8;        // N for MAP mode
    double temperature = 1.0;   // sampling temperature in MAP mode
    uint64_t seed = 0;
    // MAP scoring backbone; null means the evaluated model scores its own
    // candidates. The ablation passes the frozen Stage-II scorer here.
    const ModelState* scorer = nullptr;
};

struct CategoryResult {
    Category category = Category::kFluid;
    int n = 0;
    int correct = 0;
    std::optional<double> accuracy;  // absent when the category is empty

    friend bool operator==(const CategoryResult&, const CategoryResult&) = default;
};

struct EvalReport {
    std::vector<CategoryResult> categories;  // one row per category, enum order
    int total_n = 0;
    double overall = 0.0;  // N-weighted mean of category accuracies
    uint64_t seed = 0;
    std::string variant;

    friend bool operator==(const EvalReport&, const EvalReport&) = default;
};

inline std::string format_eval_report(const EvalReport& report) {
    std::ostringstream out;
    out << "variant=" << (report.variant.empty() ? "-" : report.variant)
        << " seed=" << report.seed << "\n";
    for (const CategoryResult& row : report.categories) {
        out << "  " << category_name(row.category) << ": n=" << row.n;
        if (row.accuracy) {
            char buf[32];
            std::snprintf(buf, sizeof(buf), "%.4f", *row.accuracy);
            out << " accuracy=" << buf << " (" << row.correct << "/" << row.n << ")";
        }
        out << "\n";
    }
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.4f", report.overall);
    out << "  overall: n=" << report.total_n << " accuracy=" << buf << "\n";
    return out.str();
}

// Core accounting, parameterized over the answer choice so oracle choosers
// (gold answer, uniform random) can exercise the bookkeeping directly.
// chooser(record, index) -> chosen option index.
template <class Chooser>
EvalReport evaluate_with(std::span<const DatasetRecord> records, const EvalOptions& options,
                         Chooser&& chooser) {
    constexpr int kCategories = 5;
    int n[kCategories] = {};
    int correct[kCategories] = {};
    for (size_t i = 0; i < records.size(); ++i) {
        const Puzzle& puzzle = records[i].puzzle;
        const int cat = static_cast<int>(puzzle.rule.category);
        if (cat < 0 || cat >= kCategories) throw std::invalid_argument("evaluate: bad category");
        const int chosen = chooser(records[i], i);
        ++n[cat];
        if (chosen == puzzle.answer_index) ++correct[cat];
    }

    EvalReport report;
    report.seed = options.seed;
    int total_correct = 0;
    for (int c = 0; c < kCategories; ++c) {
        CategoryResult row;
        row.category = static_cast<Category>(c);
        row.n = n[c];
        row.correct = correct[c];
        if (n[c] > 0) row.accuracy = static_cast<double>(correct[c]) / n[c];
        report.total_n += n[c];
        total_correct += correct[c];
        report.categories.push_back(row);
    }
    report.overall = report.total_n > 0 ? static_cast<double>(total_correct) / report.total_n : 0.0;
    return report;
}

inline EvalReport evaluate(const ModelState& state, std::span<const DatasetRecord> records,
                           const EvalOptions& options = {}) {
    if (options.mode == EvalMode::kMapN && options.map_samples < 1) {
        throw std::invalid_argument("evaluate: MAP mode needs at least one sample");
    }
    const ModelState& scorer = options.scorer ? *options.scorer : state;
    auto chooser = [&](const DatasetRecord& rec, size_t index) -> int {
        Rng rng(mix_seed(options.seed, static_cast<uint64_t>(index)));
        if (options.mode == EvalMode::kGreedy) {
            return sample_rationale(state, rec.puzzle, 0.0, rng).answer;
        }
        std::vector<SampledRationale> samples =
            sample_rationales(state, rec.puzzle, options.map_samples, options.temperature, rng);
        std::vector<MapCandidate> candidates;
        candidates.reserve(samples.size());
        for (SampledRationale& s : samples) candidates.push_back({std::move(s.tokens), s.answer});
        return map_select(scorer, rec.puzzle, candidates);
    };
    return evaluate_with(records, options, chooser);
}

}  // namespace cogsense
