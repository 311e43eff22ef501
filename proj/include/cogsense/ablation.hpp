#pragma once

// Variant ablation matrix: trains each requested variant across seeds from a
// common per-seed initialization and shared per-seed data (only the training
// recipe differs between variants), then evaluates on one fixed puzzle set.
// A variant failure is recorded in its row; the rest of the table proceeds.

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "cogsense/dataset.hpp"
#include "cogsense/eval.hpp"
#include "cogsense/gfn.hpp"
#include "cogsense/run_config.hpp"
#include "cogsense/sft.hpp"

namespace cogsense {

// Training data varies with the run seed; the evaluation set is a fixed
// function of data_seed alone so every (variant, seed) row shares it.
inline DatasetSpec train_data_spec(const RunConfig& c) {
    DatasetSpec spec;
    spec.count = c.train_count;
    spec.seed = mix_seed(c.data_seed, c.seed);
    spec.split = "train";
    return spec;
}

inline DatasetSpec eval_data_spec(const RunConfig& c) {
    DatasetSpec spec;
    spec.count = c.eval_count;
    spec.seed = mix_seed(c.data_seed, 0x65766131ull);
    spec.split = "eval";
    return spec;
}

struct PipelineArtifacts {
    ModelState model;
    std::vector<SftEpochMetrics> sft_history;
    std::vector<GfnStepLog> gfn_log;
    EvalReport report;
};

// One end-to-end run for a (variant, seed) cell. base: untrained weights,
// greedy decoding. sft_no_lvip / sft_lvip: supervised training (imagery
// weight zeroed for the former), greedy decoding. sft_lvip_gfn: supervised
// training, then posterior training against the frozen scorer, then
// MAP-over-N decoding scored by that same frozen scorer.
inline PipelineArtifacts run_pipeline(const RunConfig& rc) {
    const std::vector<DatasetRecord> train = generate_dataset(train_data_spec(rc));
    const std::vector<DatasetRecord> eval_set = generate_dataset(eval_data_spec(rc));

    PipelineArtifacts out;
    EvalOptions eopts;
    eopts.seed = rc.seed;

    ModelState model = init_model(model_config(rc), rc.seed);
    if (rc.variant == Variant::kBase) {
        out.model = std::move(model);
        out.report = evaluate(out.model, eval_set, eopts);
    } else {
        SftResult sft = train_sft(std::move(model), sft_config(rc), train, eval_set);
        out.sft_history = std::move(sft.history);
        if (rc.variant == Variant::kSftLvipGfn) {
            ScorerHandle scorer = freeze_scorer(sft.model);
            GfnResult gfn = train_gfn(gfn_config(rc), sft.model, scorer, train);
            out.model = std::move(gfn.model);
            out.gfn_log = std::move(gfn.log);
            eopts.mode = EvalMode::kMapN;
            eopts.map_samples = rc.map_samples;
            eopts.temperature = rc.gfn_temperature;
            eopts.scorer = &scorer->state();
            out.report = evaluate(out.model, eval_set, eopts);
        } else {
            out.model = std::move(sft.model);
            out.report = evaluate(out.model, eval_set, eopts);
        }
    }
    out.report.variant = variant_name(rc.variant);
    out.report.seed = rc.seed;
    return out;
}

struct AblationRun {
    Variant variant = Variant::kBase;
    uint64_t seed = 0;
    bool failed = false;
    std::string error;
    EvalReport report;  // meaningful only when !failed

    friend bool operator==(const AblationRun&, const AblationRun&) = default;
};

struct VariantSummary {
    Variant variant = Variant::kBase;
    int n_ok = 0;
    int n_failed = 0;
    double mean_accuracy = 0.0;  // over successful seeds
    double stddev = 0.0;         // sample standard deviation (0 when n_ok < 2)

    friend bool operator==(const VariantSummary&, const VariantSummary&) = default;
};

struct OrderingFlag {
    Variant lo = Variant::kBase;
    Variant hi = Variant::kBase;
    bool holds = false;  // mean(hi) >= mean(lo) over successful seeds

    friend bool operator==(const OrderingFlag&, const OrderingFlag&) = default;
};

struct AblationTable {
    std::vector<AblationRun> runs;           // one row per (variant, seed)
    std::vector<VariantSummary> summaries;   // aggregate row per variant
    std::vector<OrderingFlag> orderings;     // adjacent pairs in variant order
};

inline AblationTable run_ablation(const RunConfig& base, std::span<const Variant> variants,
                                  std::span<const uint64_t> seeds) {
    if (variants.empty()) throw std::invalid_argument("run_ablation: no variants");
    if (seeds.empty()) throw std::invalid_argument("run_ablation: no seeds");

    AblationTable table;
    for (Variant v : variants) {
        VariantSummary summary;
        summary.variant = v;
        std::vector<double> accuracies;
        for (uint64_t seed : seeds) {
            RunConfig rc = base;
            rc.variant = v;
            rc.seed = seed;
            AblationRun run;
            run.variant = v;
            run.seed = seed;
            try {
                run.report = run_pipeline(rc).report;
                accuracies.push_back(run.report.overall);
                ++summary.n_ok;
            } catch (const std::exception& e) {
                run.failed = true;
                run.error = e.what();
                ++summary.n_failed;
            }
            table.runs.push_back(std::move(run));
        }
        if (!accuracies.empty()) {
            double sum = 0.0;
            for (double a : accuracies) sum += a;
            summary.mean_accuracy = sum / accuracies.size();
            if (accuracies.size() >= 2) {
                double ss = 0.0;
                for (double a : accuracies) {
                    const double d = a - summary.mean_accuracy;
                    ss += d * d;
                }
                summary.stddev = std::sqrt(ss / (accuracies.size() - 1));
            }
        }
        table.summaries.push_back(summary);
    }

    // Ordering flags between adjacent variants in canonical (weakest-first)
    // order, restricted to the variants actually present with >= 1 success.
    std::vector<const VariantSummary*> ordered;
    for (Variant v : {Variant::kBase, Variant::kSftNoLvip, Variant::kSftLvip,
                      Variant::kSftLvipGfn}) {
        for (const VariantSummary& s : table.summaries) {
            if (s.variant == v && s.n_ok > 0) ordered.push_back(&s);
        }
    }
    for (size_t i = 0; i + 1 < ordered.size(); ++i) {
        OrderingFlag flag;
        flag.lo = ordered[i]->variant;
        flag.hi = ordered[i + 1]->variant;
        flag.holds = ordered[i + 1]->mean_accuracy >= ordered[i]->mean_accuracy;
        table.orderings.push_back(flag);
    }
    return table;
}

inline std::string format_ablation_table(const AblationTable& table) {
    std::ostringstream out;
    char buf[64];
    out << "variant,seed,overall\n";
    for (const AblationRun& run : table.runs) {
        out << variant_name(run.variant) << ',' << run.seed << ',';
        if (run.failed) {
            out << "FAILED: " << run.error;
        } else {
            std::snprintf(buf, sizeof(buf), "%.4f", run.report.overall);
            out << buf;
        }
        out << '\n';
    }
    out << "\nvariant,n_ok,mean,stddev\n";
    for (const VariantSummary& s : table.summaries) {
        std::snprintf(buf, sizeof(buf), "%.4f,%.4f", s.mean_accuracy, s.stddev);
        out << variant_name(s.variant) << ',' << s.n_ok << ',' << (s.n_ok > 0 ? buf : "-,-")
            << '\n';
    }
    if (!table.orderings.empty()) {
        out << '\n';
        for (const OrderingFlag& flag : table.orderings) {
            out << "ordering " << variant_name(flag.hi) << " >= " << variant_name(flag.lo)
                << ": " << (flag.holds ? "holds" : "violated") << '\n';
        }
    }
    return out.str();
}

}  // namespace cogsense
