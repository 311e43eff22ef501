#pragma once

// Command-line entry point. Subcommands:
//   gen       write a procedurally generated puzzle corpus as JSONL
//   sft       supervised stage: train, checkpoint, metrics, eval report
//   gfn       posterior stage on top of a supervised checkpoint
//   eval      evaluate a checkpoint on an eval set
//   oracle    enumerable toy task: exact posterior vs sampler (TV distance)
//   ablate    variant x seed matrix with aggregate rows
//   plotdata  merge metrics CSVs into long-format plotting rows
// Exit codes: 0 success, 1 runtime failure, 2 usage error. The default
// output directory honors $COGSENSE_OUT_DIR when the config leaves it unset.

#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "cogsense/ablation.hpp"
#include "cogsense/checkpoint.hpp"
#include "cogsense/dataset_io.hpp"
#include "cogsense/eval.hpp"
#include "cogsense/metrics.hpp"
#include "cogsense/run_config.hpp"
#include "cogsense/toy_oracle.hpp"

namespace cogsense {
namespace detail {

inline std::string resolve_out_dir(const RunConfig& c) {
    if (c.out_dir == ".") {
        if (const char* env = std::getenv("COGSENSE_OUT_DIR")) return env;
    }
    return c.out_dir;
}

// Per-run artifact directory (config echo goes in immediately).
inline std::filesystem::path prepare_run_dir(const RunConfig& c) {
    std::filesystem::path dir = std::filesystem::path(resolve_out_dir(c)) /
                                (variant_name(c.variant) + "-seed" + std::to_string(c.seed));
    std::filesystem::create_directories(dir);
    std::ofstream config_echo(dir / "config.txt");
    config_echo << echo_run_config(c);
    if (!config_echo) throw std::runtime_error((dir / "config.txt").string() + ": write failed");
    return dir;
}

inline std::vector<DatasetRecord> load_or_generate(const std::string& override_path,
                                                   const DatasetSpec& spec) {
    if (!override_path.empty()) return load_dataset(override_path);
    return generate_dataset(spec);
}

inline EvalOptions eval_options_from(const RunConfig& rc) {
    EvalOptions opts;
    opts.mode = rc.eval_mode == "map" ? EvalMode::kMapN : EvalMode::kGreedy;
    opts.map_samples = rc.map_samples;
    opts.temperature = rc.gfn_temperature;
    opts.seed = rc.seed;
    return opts;
}

inline void emit_report(const std::filesystem::path& dir, const EvalReport& report) {
    const std::string text = format_eval_report(report);
    std::ofstream out(dir / "eval_report.txt");
    out << text;
    if (!out) throw std::runtime_error((dir / "eval_report.txt").string() + ": write failed");
    std::cout << text;
}

// First few eval puzzles' sampled rationales, one JSON object per line.
inline void dump_trajectories(const std::filesystem::path& path, const ModelState& model,
                              std::span<const DatasetRecord> records, const RunConfig& rc) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error(path.string() + ": cannot open for writing");
    const size_t limit = std::min<size_t>(records.size(), 8);
    for (size_t i = 0; i < limit; ++i) {
        Rng rng(mix_seed(rc.seed, static_cast<uint64_t>(i)));
        const std::vector<SampledRationale> samples =
            sample_rationales(model, records[i].puzzle, rc.map_samples, rc.gfn_temperature, rng);
        for (const SampledRationale& s : samples) {
            nlohmann::json row;
            row["puzzle"] = i;
            row["tokens"] = s.tokens;
            row["answer"] = s.answer;
            row["truncated"] = s.truncated;
            out << row.dump() << '\n';
        }
    }
    if (!out) throw std::runtime_error(path.string() + ": write failed");
}

inline int run_gen(uint64_t seed, int count, const std::string& out_path,
                   const std::string& split) {
    DatasetSpec spec;
    spec.count = count;
    spec.seed = seed;
    spec.split = split;
    const std::vector<DatasetRecord> records = generate_dataset(spec);
    serialize_dataset(records, out_path);
    std::cout << "wrote " << records.size() << " records to " << out_path << "\n";
    return 0;
}

inline int run_sft(const std::string& config_path, const std::string& data_path,
                   const std::string& eval_data_path) {
    RunConfig rc = load_run_config(config_path);
    const std::vector<DatasetRecord> train = load_or_generate(data_path, train_data_spec(rc));
    const std::vector<DatasetRecord> eval_set =
        load_or_generate(eval_data_path, eval_data_spec(rc));

    SftResult result =
        train_sft(init_model(model_config(rc), rc.seed), sft_config(rc), train, eval_set);
    const std::filesystem::path dir = prepare_run_dir(rc);
    save_checkpoint(result.model, (dir / "model.ckpt").string());
    write_sft_metrics_csv((dir / "sft_metrics.csv").string(), result.history);

    EvalReport report = evaluate(result.model, eval_set, eval_options_from(rc));
    report.variant = variant_name(rc.variant);
    emit_report(dir, report);
    return 0;
}

inline int run_gfn(const std::string& config_path, const std::string& init_path,
                   const std::string& data_path, const std::string& eval_data_path) {
    RunConfig rc = load_run_config(config_path);
    rc.variant = Variant::kSftLvipGfn;
    const std::vector<DatasetRecord> train = load_or_generate(data_path, train_data_spec(rc));
    const std::vector<DatasetRecord> eval_set =
        load_or_generate(eval_data_path, eval_data_spec(rc));

    ModelState sft_model =
        init_path.empty()
            ? train_sft(init_model(model_config(rc), rc.seed), sft_config(rc), train, eval_set)
                  .model
            : load_checkpoint(init_path);
    ScorerHandle scorer = freeze_scorer(sft_model);
    GfnResult result = train_gfn(gfn_config(rc), sft_model, scorer, train);

    const std::filesystem::path dir = prepare_run_dir(rc);
    save_checkpoint(result.model, (dir / "model.ckpt").string());
    write_gfn_log_csv((dir / "gfn_log.csv").string(), result.log);
    dump_trajectories(dir / "trajectories.jsonl", result.model, eval_set, rc);

    EvalOptions opts = eval_options_from(rc);
    opts.mode = EvalMode::kMapN;
    opts.scorer = &scorer->state();
    EvalReport report = evaluate(result.model, eval_set, opts);
    report.variant = variant_name(rc.variant);
    emit_report(dir, report);
    return 0;
}

inline int run_eval(const std::string& config_path, const std::string& model_path,
                    const std::string& scorer_path, const std::string& eval_data_path) {
    RunConfig rc = load_run_config(config_path);
    const std::vector<DatasetRecord> eval_set =
        load_or_generate(eval_data_path, eval_data_spec(rc));
    const ModelState model = load_checkpoint(model_path);

    EvalOptions opts = eval_options_from(rc);
    ModelState scorer;
    if (!scorer_path.empty()) {
        scorer = load_checkpoint(scorer_path);
        opts.scorer = &scorer;
    }
    EvalReport report = evaluate(model, eval_set, opts);
    report.variant = variant_name(rc.variant);
    emit_report(prepare_run_dir(rc), report);
    return 0;
}

inline int run_oracle(int vocab, int maxlen, int steps, uint64_t seed) {
    const ToyTvResult r = run_toy_tv_experiment(vocab, maxlen, steps, seed);
    std::cout << "sequences " << r.n_sequences << "\n";
    std::cout << "sum_p " << format_double(r.sum_p) << "\n";
    std::cout << "tv_before " << format_double(r.tv_before) << "\n";
    std::cout << "tv_after " << format_double(r.tv_after) << "\n";
    return 0;
}

inline int run_ablate(const std::string& config_path, const std::string& variants_csv,
                      const std::string& seeds_csv) {
    RunConfig rc = load_run_config(config_path);
    std::vector<Variant> variants;
    std::vector<uint64_t> seeds;
    {
        std::istringstream in(variants_csv);
        std::string item;
        while (std::getline(in, item, ',')) variants.push_back(variant_from(trim(item)));
    }
    {
        std::istringstream in(seeds_csv);
        std::string item;
        while (std::getline(in, item, ',')) seeds.push_back(parse_u64("seeds", trim(item)));
    }
    const AblationTable table = run_ablation(rc, variants, seeds);
    const std::string text = format_ablation_table(table);

    const std::filesystem::path dir = resolve_out_dir(rc);
    std::filesystem::create_directories(dir);
    std::ofstream out(dir / "ablation.txt");
    out << text;
    if (!out) throw std::runtime_error((dir / "ablation.txt").string() + ": write failed");
    std::cout << text;
    return 0;
}

inline int run_plotdata(const std::vector<std::string>& files, const std::string& out_path) {
    const std::string csv = plotdata_csv(files);
    if (out_path.empty()) {
        std::cout << csv;
    } else {
        std::ofstream out(out_path);
        out << csv;
        if (!out) throw std::runtime_error(out_path + ": write failed");
    }
    return 0;
}

}  // namespace detail

inline int cli(int argc, char** argv) {
    CLI::App app{"cogsense: visual-cognition puzzles, joint supervised + posterior training"};
    app.require_subcommand(1);

    uint64_t gen_seed = 0;
    int gen_count = 0;
    std::string gen_out, gen_split = "train";
    CLI::App* gen = app.add_subcommand("gen", "generate a puzzle corpus as JSONL");
    gen->add_option("--seed", gen_seed, "corpus seed");
    gen->add_option("--count", gen_count, "number of records")->required();
    gen->add_option("--out", gen_out, "output JSONL path")->required();
    gen->add_option("--split", gen_split, "split label");

    std::string sft_config_path, sft_data, sft_eval_data;
    CLI::App* sft = app.add_subcommand("sft", "supervised training stage");
    sft->add_option("--config", sft_config_path, "run config file")->required();
    sft->add_option("--data", sft_data, "training JSONL (default: generated from config)");
    sft->add_option("--eval-data", sft_eval_data, "eval JSONL (default: generated from config)");

    std::string gfn_config_path, gfn_init, gfn_data, gfn_eval_data;
    CLI::App* gfn = app.add_subcommand("gfn", "posterior training stage");
    gfn->add_option("--config", gfn_config_path, "run config file")->required();
    gfn->add_option("--init", gfn_init, "supervised checkpoint (default: train in-process)");
    gfn->add_option("--data", gfn_data, "training JSONL (default: generated from config)");
    gfn->add_option("--eval-data", gfn_eval_data, "eval JSONL (default: generated from config)");

    std::string eval_config_path, eval_model, eval_scorer, eval_data;
    CLI::App* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint");
    eval_cmd->add_option("--config", eval_config_path, "run config file")->required();
    eval_cmd->add_option("--model", eval_model, "model checkpoint")->required();
    eval_cmd->add_option("--scorer", eval_scorer, "MAP scorer checkpoint (default: the model)");
    eval_cmd->add_option("--data", eval_data, "eval JSONL (default: generated from config)");

    int oracle_vocab = 6, oracle_maxlen = 3, oracle_steps = 0;
    uint64_t oracle_seed = 17;
    CLI::App* oracle = app.add_subcommand("oracle", "enumerable toy posterior check");
    oracle->add_option("--vocab", oracle_vocab, "digit action count (2..10)");
    oracle->add_option("--maxlen", oracle_maxlen, "rationale length cap");
    oracle->add_option("--steps", oracle_steps, "sampler training steps before the final TV");
    oracle->add_option("--seed", oracle_seed, "experiment seed");

    std::string ablate_config_path;
    std::string ablate_variants = "base,sft_no_lvip,sft_lvip,sft_lvip_gfn";
    std::string ablate_seeds = "0,1,2";
    CLI::App* ablate = app.add_subcommand("ablate", "variant x seed experiment matrix");
    ablate->add_option("--config", ablate_config_path, "run config file")->required();
    ablate->add_option("--variants", ablate_variants, "comma-separated variant list");
    ablate->add_option("--seeds", ablate_seeds, "comma-separated seed list");

    std::vector<std::string> plot_files;
    std::string plot_out;
    CLI::App* plot = app.add_subcommand("plotdata", "merge metrics CSVs into long format");
    plot->add_option("files", plot_files, "metrics CSV files");
    plot->add_option("--out", plot_out, "output path (default: stdout)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::Success& e) {
        return app.exit(e);  // --help and friends: exit 0
    } catch (const CLI::ParseError& e) {
        app.exit(e);  // prints the CLI11 message (includes the flag name)
        return 2;
    }

    try {
        if (app.got_subcommand(gen)) return detail::run_gen(gen_seed, gen_count, gen_out, gen_split);
        if (app.got_subcommand(sft)) return detail::run_sft(sft_config_path, sft_data, sft_eval_data);
        if (app.got_subcommand(gfn)) {
            return detail::run_gfn(gfn_config_path, gfn_init, gfn_data, gfn_eval_data);
        }
        if (app.got_subcommand(eval_cmd)) {
            return detail::run_eval(eval_config_path, eval_model, eval_scorer, eval_data);
        }
        if (app.got_subcommand(oracle)) {
            return detail::run_oracle(oracle_vocab, oracle_maxlen, oracle_steps, oracle_seed);
        }
        if (app.got_subcommand(ablate)) {
            return detail::run_ablate(ablate_config_path, ablate_variants, ablate_seeds);
        }
        if (app.got_subcommand(plot)) return detail::run_plotdata(plot_files, plot_out);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 2;  // unreachable with require_subcommand(1)
}

}  // namespace cogsense
