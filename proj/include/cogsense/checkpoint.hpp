#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "cogsense/model.hpp"

namespace cogsense {

struct CheckpointError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

inline constexpr const char* kCheckpointHeader = "cogsense-checkpoint v1";

namespace detail {

inline nlohmann::json config_to_json(const ModelConfig& c) {
    return nlohmann::json{
        {"d_model", c.d_model},       {"n_layers", c.n_layers},
        {"n_heads", c.n_heads},       {"ffn_width", c.ffn_width},
        {"vocab_size", c.vocab_size}, {"max_seq_len", c.max_seq_len},
        {"max_text_len", c.max_text_len}, {"d_vis", c.d_vis},
        {"lvip_hidden", c.lvip_hidden},   {"max_panel_side", c.max_panel_side},
        {"max_options", c.max_options},   {"max_question_panels", c.max_question_panels},
    };
}

inline ModelConfig config_from_json(const nlohmann::json& j) {
    ModelConfig c;
    c.d_model = j.at("d_model").get<int>();
    c.n_layers = j.at("n_layers").get<int>();
    c.n_heads = j.at("n_heads").get<int>();
    c.ffn_width = j.at("ffn_width").get<int>();
    c.vocab_size = j.at("vocab_size").get<int>();
    c.max_seq_len = j.at("max_seq_len").get<int>();
    c.max_text_len = j.at("max_text_len").get<int>();
    c.d_vis = j.at("d_vis").get<int>();
    c.lvip_hidden = j.at("lvip_hidden").get<int>();
    c.max_panel_side = j.at("max_panel_side").get<int>();
    c.max_options = j.at("max_options").get<int>();
    c.max_question_panels = j.at("max_question_panels").get<int>();
    c.validate();
    return c;
}

inline void write_le_double(std::ostream& out, double v) {
    uint64_t bits;
    std::memcpy(&bits, &v, sizeof(bits));
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((bits >> (8 * i)) & 0xff);
    out.write(reinterpret_cast<const char*>(b), 8);
}

inline double read_le_double(std::istream& in) {
    unsigned char b[8];
    in.read(reinterpret_cast<char*>(b), 8);
    if (!in) throw CheckpointError("checkpoint payload truncated");
    uint64_t bits = 0;
    for (int i = 0; i < 8; ++i) bits |= static_cast<uint64_t>(b[i]) << (8 * i);
    double v;
    std::memcpy(&v, &bits, sizeof(v));
    return v;
}

}  // namespace detail

// Layout: header line, manifest line (config + named tensor shapes), then a
// flat little-endian 64-bit float payload in manifest order.
inline void save_checkpoint(const ModelState& state, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw CheckpointError("save_checkpoint: cannot open '" + path + "'");
    nlohmann::json tensors = nlohmann::json::array();
    visit_params(state, [&](const std::string& name, const Tensor& t) {
        tensors.push_back({{"name", name}, {"rows", t.rows()}, {"cols", t.cols()}});
    });
    nlohmann::json manifest{{"config", detail::config_to_json(state.config)},
                            {"tensors", std::move(tensors)}};
    out << kCheckpointHeader << "\n" << manifest.dump() << "\n";
    visit_params(state, [&](const std::string&, const Tensor& t) {
        for (double v : t.values) detail::write_le_double(out, v);
    });
    if (!out) throw CheckpointError("save_checkpoint: write failed for '" + path + "'");
}

inline ModelState load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw CheckpointError("load_checkpoint: cannot open '" + path + "'");
    std::string header;
    if (!std::getline(in, header) || header != kCheckpointHeader) {
        throw CheckpointError("load_checkpoint: unrecognized header '" + header + "'");
    }
    std::string manifest_line;
    if (!std::getline(in, manifest_line)) throw CheckpointError("load_checkpoint: missing manifest");
    nlohmann::json manifest;
    try {
        manifest = nlohmann::json::parse(manifest_line);
    } catch (const nlohmann::json::exception& e) {
        throw CheckpointError(std::string("load_checkpoint: bad manifest: ") + e.what());
    }

    ModelState state;
    state.config = detail::config_from_json(manifest.at("config"));
    state.layers.resize(state.config.n_layers);

    const auto& tensors = manifest.at("tensors");
    size_t next = 0;
    visit_params(state, [&](const std::string& name, Tensor& t) {
        if (next >= tensors.size()) throw CheckpointError("load_checkpoint: manifest is missing tensors");
        const auto& entry = tensors[next++];
        if (entry.at("name").get<std::string>() != name) {
            throw CheckpointError("load_checkpoint: tensor order mismatch at '" + name + "'");
        }
        t = Tensor::zeros(entry.at("rows").get<int>(), entry.at("cols").get<int>());
        for (double& v : t.values) v = detail::read_le_double(in);
    });
    if (next != tensors.size()) throw CheckpointError("load_checkpoint: extra tensors in manifest");
    // The payload must end exactly here.
    char extra;
    if (in.read(&extra, 1)) throw CheckpointError("load_checkpoint: trailing bytes after payload");
    return state;
}

}  // namespace cogsense
