#pragma once

// Flat key=value run configuration covering data generation, model size,
// both training stages, and evaluation. Parsing rejects unknown keys, and
// echo_run_config emits a canonical form that parses back to an identical
// config (doubles are printed with 17 significant digits).

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>

#include "cogsense/gfn.hpp"
#include "cogsense/model.hpp"
#include "cogsense/sft.hpp"

namespace cogsense {

enum class Variant { kBase, kSftNoLvip, kSftLvip, kSftLvipGfn };

inline std::string variant_name(Variant v) {
    switch (v) {
        case Variant::kBase: return "base";
        case Variant::kSftNoLvip: return "sft_no_lvip";
        case Variant::kSftLvip: return "sft_lvip";
        case Variant::kSftLvipGfn: return "sft_lvip_gfn";
    }
    throw std::invalid_argument("variant_name: unknown variant");
}

inline Variant variant_from(const std::string& name) {
    if (name == "base") return Variant::kBase;
    if (name == "sft_no_lvip") return Variant::kSftNoLvip;
    if (name == "sft_lvip") return Variant::kSftLvip;
    if (name == "sft_lvip_gfn") return Variant::kSftLvipGfn;
    throw std::invalid_argument("unknown variant '" + name + "'");
}

struct RunConfig {
    Variant variant = Variant::kSftLvip;
    uint64_t seed = 0;
    std::string out_dir = ".";

    // data
    int train_count = 64;
    int eval_count = 32;
    uint64_t data_seed = 0;

    // model
    int d_model = 32;
    int n_layers = 2;
    int n_heads = 4;
    int ffn_width = 64;
    int d_vis = 16;
    int lvip_hidden = 32;
    int max_seq_len = 192;
    int max_text_len = 64;

    // supervised stage
    double beta = 1.0;
    double sft_learning_rate = 1e-3;
    double sft_weight_decay = 1e-5;
    int batch_size = 8;
    int epochs = 10;

    // posterior stage
    int gfn_steps = 200;
    int samples_per_step = 8;
    double kappa = 0.9;
    double alpha = 1.0;
    double gamma = 0.1;
    int anchor_stride = 4;
    double delta0 = 0.5;
    double delta_final = 1.0;
    int warmup_steps = 200;
    double gfn_temperature = 1.0;
    double gfn_learning_rate = 1e-3;
    bool live_reward_backbone = false;

    // evaluation
    std::string eval_mode = "greedy";  // greedy | map
    int map_samples = 8;

    friend bool operator==(const RunConfig&, const RunConfig&) = default;
};

inline ModelConfig model_config(const RunConfig& c) {
    ModelConfig m;
    m.d_model = c.d_model;
    m.n_layers = c.n_layers;
    m.n_heads = c.n_heads;
    m.ffn_width = c.ffn_width;
    m.d_vis = c.d_vis;
    m.lvip_hidden = c.lvip_hidden;
    m.max_seq_len = c.max_seq_len;
    m.max_text_len = c.max_text_len;
    return m;
}

inline SftConfig sft_config(const RunConfig& c) {
    SftConfig s;
    s.beta = c.variant == Variant::kSftNoLvip ? 0.0 : c.beta;
    s.learning_rate = c.sft_learning_rate;
    s.weight_decay = c.sft_weight_decay;
    s.batch_size = c.batch_size;
    s.epochs = c.epochs;
    s.seed = c.seed;
    return s;
}

inline GfnConfig gfn_config(const RunConfig& c) {
    GfnConfig g;
    g.steps = c.gfn_steps;
    g.samples_per_step = c.samples_per_step;
    g.kappa = c.kappa;
    g.weights = {c.alpha, c.gamma};
    g.anchors = {c.anchor_stride};
    g.filter = {c.delta0, c.delta_final, c.warmup_steps};
    g.temperature = c.gfn_temperature;
    g.learning_rate = c.gfn_learning_rate;
    g.seed = c.seed;
    g.live_reward_backbone = c.live_reward_backbone;
    return g;
}

namespace detail {

inline std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

inline std::string trim(const std::string& s) {
    size_t begin = s.find_first_not_of(" \t\r");
    if (begin == std::string::npos) return "";
    size_t end = s.find_last_not_of(" \t\r");
    return s.substr(begin, end - begin + 1);
}

inline int parse_int(const std::string& key, const std::string& v) {
    try {
        size_t used = 0;
        int out = std::stoi(v, &used);
        if (used != v.size()) throw std::invalid_argument(v);
        return out;
    } catch (const std::exception&) {
        throw std::invalid_argument("config key '" + key + "': bad integer '" + v + "'");
    }
}

inline uint64_t parse_u64(const std::string& key, const std::string& v) {
    try {
        size_t used = 0;
        uint64_t out = std::stoull(v, &used);
        if (used != v.size()) throw std::invalid_argument(v);
        return out;
    } catch (const std::exception&) {
        throw std::invalid_argument("config key '" + key + "': bad integer '" + v + "'");
    }
}

inline double parse_double(const std::string& key, const std::string& v) {
    try {
        size_t used = 0;
        double out = std::stod(v, &used);
        if (used != v.size()) throw std::invalid_argument(v);
        return out;
    } catch (const std::exception&) {
        throw std::invalid_argument("config key '" + key + "': bad number '" + v + "'");
    }
}

inline bool parse_bool(const std::string& key, const std::string& v) {
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    throw std::invalid_argument("config key '" + key + "': bad boolean '" + v + "'");
}

}  // namespace detail

inline void apply_config_entry(RunConfig& c, const std::string& key, const std::string& value) {
    using detail::parse_bool;
    using detail::parse_double;
    using detail::parse_int;
    using detail::parse_u64;
    if (key == "variant") c.variant = variant_from(value);
    else if (key == "seed") c.seed = parse_u64(key, value);
    else if (key == "out_dir") c.out_dir = value;
    else if (key == "train_count") c.train_count = parse_int(key, value);
    else if (key == "eval_count") c.eval_count = parse_int(key, value);
    else if (key == "data_seed") c.data_seed = parse_u64(key, value);
    else if (key == "d_model") c.d_model = parse_int(key, value);
    else if (key == "n_layers") c.n_layers = parse_int(key, value);
    else if (key == "n_heads") c.n_heads = parse_int(key, value);
    else if (key == "ffn_width") c.ffn_width = parse_int(key, value);
    else if (key == "d_vis") c.d_vis = parse_int(key, value);
    else if (key == "lvip_hidden") c.lvip_hidden = parse_int(key, value);
    else if (key == "max_seq_len") c.max_seq_len = parse_int(key, value);
    else if (key == "max_text_len") c.max_text_len = parse_int(key, value);
    else if (key == "beta") c.beta = parse_double(key, value);
    else if (key == "sft_learning_rate") c.sft_learning_rate = parse_double(key, value);
    else if (key == "sft_weight_decay") c.sft_weight_decay = parse_double(key, value);
    else if (key == "batch_size") c.batch_size = parse_int(key, value);
    else if (key == "epochs") c.epochs = parse_int(key, value);
    else if (key == "gfn_steps") c.gfn_steps = parse_int(key, value);
    else if (key == "samples_per_step") c.samples_per_step = parse_int(key, value);
    else if (key == "kappa") c.kappa = parse_double(key, value);
    else if (key == "alpha") c.alpha = parse_double(key, value);
    else if (key == "gamma") c.gamma = parse_double(key, value);
    else if (key == "anchor_stride") c.anchor_stride = parse_int(key, value);
    else if (key == "delta0") c.delta0 = parse_double(key, value);
    else if (key == "delta_final") c.delta_final = parse_double(key, value);
    else if (key == "warmup_steps") c.warmup_steps = parse_int(key, value);
    else if (key == "gfn_temperature") c.gfn_temperature = parse_double(key, value);
    else if (key == "gfn_learning_rate") c.gfn_learning_rate = parse_double(key, value);
    else if (key == "live_reward_backbone") c.live_reward_backbone = parse_bool(key, value);
    else if (key == "eval_mode") {
        if (value != "greedy" && value != "map") {
            throw std::invalid_argument("config key 'eval_mode': expected greedy or map, got '" +
                                        value + "'");
        }
        c.eval_mode = value;
    } else if (key == "map_samples") c.map_samples = parse_int(key, value);
    else throw std::invalid_argument("unknown config key '" + key + "'");
}

inline RunConfig parse_run_config(const std::string& text) {
    RunConfig c;
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const std::string stripped = detail::trim(line);
        if (stripped.empty() || stripped[0] == '#') continue;
        const size_t eq = stripped.find('=');
        if (eq == std::string::npos) {
            throw std::invalid_argument("config line " + std::to_string(lineno) +
                                        ": expected key=value, got '" + stripped + "'");
        }
        apply_config_entry(c, detail::trim(stripped.substr(0, eq)),
                           detail::trim(stripped.substr(eq + 1)));
    }
    return c;
}

inline RunConfig load_run_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::invalid_argument("cannot open config file '" + path + "'");
    std::ostringstream text;
    text << in.rdbuf();
    return parse_run_config(text.str());
}

inline std::string echo_run_config(const RunConfig& c) {
    using detail::format_double;
    std::ostringstream out;
    out << "variant=" << variant_name(c.variant) << "\n";
    out << "seed=" << c.seed << "\n";
    out << "out_dir=" << c.out_dir << "\n";
    out << "train_count=" << c.train_count << "\n";
    out << "eval_count=" << c.eval_count << "\n";
    out << "data_seed=" << c.data_seed << "\n";
    out << "d_model=" << c.d_model << "\n";
    out << "n_layers=" << c.n_layers << "\n";
    out << "n_heads=" << c.n_heads << "\n";
    out << "ffn_width=" << c.ffn_width << "\n";
    out << "d_vis=" << c.d_vis << "\n";
    out << "lvip_hidden=" << c.lvip_hidden << "\n";
    out << "max_seq_len=" << c.max_seq_len << "\n";
    out << "max_text_len=" << c.max_text_len << "\n";
    out << "beta=" << format_double(c.beta) << "\n";
    out << "sft_learning_rate=" << format_double(c.sft_learning_rate) << "\n";
    out << "sft_weight_decay=" << format_double(c.sft_weight_decay) << "\n";
    out << "batch_size=" << c.batch_size << "\n";
    out << "epochs=" << c.epochs << "\n";
    out << "gfn_steps=" << c.gfn_steps << "\n";
    out << "samples_per_step=" << c.samples_per_step << "\n";
    out << "kappa=" << format_double(c.kappa) << "\n";
    out << "alpha=" << format_double(c.alpha) << "\n";
    out << "gamma=" << format_double(c.gamma) << "\n";
    out << "anchor_stride=" << c.anchor_stride << "\n";
    out << "delta0=" << format_double(c.delta0) << "\n";
    out << "delta_final=" << format_double(c.delta_final) << "\n";
    out << "warmup_steps=" << c.warmup_steps << "\n";
    out << "gfn_temperature=" << format_double(c.gfn_temperature) << "\n";
    out << "gfn_learning_rate=" << format_double(c.gfn_learning_rate) << "\n";
    out << "live_reward_backbone=" << (c.live_reward_backbone ? "true" : "false") << "\n";
    out << "eval_mode=" << c.eval_mode << "\n";
    out << "map_samples=" << c.map_samples << "\n";
    return out.str();
}

}  // namespace cogsense
