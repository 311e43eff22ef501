#pragma once

#include <cmath>
#include <string>
#include <unordered_map>
#include <vector>

#include "cogsense/autodiff.hpp"
#include "cogsense/puzzle.hpp"
#include "cogsense/rng.hpp"

namespace cogsense {

// ---------------------------------------------------------------------------
// Configuration and parameters.
// ---------------------------------------------------------------------------

struct ModelConfig {
    int d_model = 32;
    int n_layers = 2;
    int n_heads = 4;
    int ffn_width = 64;
    int vocab_size = vocab::kCount;
    int max_seq_len = 192;   // visual tokens + text tokens
    int max_text_len = 64;   // prompt + rationale + termination + answer
    int d_vis = 16;          // visual-encoder embedding width
    int lvip_hidden = 32;    // hidden width of the imagery-prediction head
    int max_panel_side = 8;
    int max_options = 8;
    int max_question_panels = 8;

    void validate() const {
        if (d_model <= 0 || n_layers <= 0 || n_heads <= 0 || ffn_width <= 0 || vocab_size <= 0 ||
            max_seq_len <= 0 || max_text_len <= 0 || d_vis <= 0 || lvip_hidden <= 0 ||
            max_panel_side <= 0 || max_panel_side > 8 || max_options <= 0 || max_question_panels <= 0) {
            throw std::invalid_argument("ModelConfig: sizes must be positive (panel side at most 8)");
        }
        if (d_model % n_heads != 0) {
            throw std::invalid_argument("ModelConfig: d_model must be divisible by n_heads");
        }
        if (max_text_len > max_seq_len) {
            throw std::invalid_argument("ModelConfig: max_text_len cannot exceed max_seq_len");
        }
    }

    bool operator==(const ModelConfig&) const = default;
};

struct LayerParams {
    Tensor attn_norm_gain, wq, wk, wv, wo;
    Tensor ffn_norm_gain, ffn_w1, ffn_b1, ffn_w2, ffn_b2;
};

struct ModelState {
    ModelConfig config;
    // Visual encoder: learned attribute and 2D position embeddings.
    Tensor vis_shape_emb, vis_color_emb, vis_size_emb, vis_presence_emb;
    Tensor vis_row_emb, vis_col_emb;
    // Projection from visual width to the language embedding space.
    Tensor proj_w, proj_b;
    // Text side: token table, text position table, panel-slot encodings.
    Tensor tok_emb, text_pos_emb, qpanel_emb, opt_slot_emb, opt_index_emb;
    // Backbone.
    std::vector<LayerParams> layers;
    Tensor final_norm_gain;
    // Decoder head, imagery-prediction head, flow head.
    Tensor head_w, head_b;
    Tensor lvip_w1, lvip_b1, lvip_w2, lvip_b2;
    Tensor flow_w, flow_b;
};

// Fixed deterministic visitation order; everything that walks parameters
// (init, optimizer, checkpoints, gradient checks) uses this single source.
template <class State, class Fn>
void visit_params(State& s, Fn&& fn) {
    fn("vis_shape_emb", s.vis_shape_emb);
    fn("vis_color_emb", s.vis_color_emb);
    fn("vis_size_emb", s.vis_size_emb);
    fn("vis_presence_emb", s.vis_presence_emb);
    fn("vis_row_emb", s.vis_row_emb);
    fn("vis_col_emb", s.vis_col_emb);
    fn("proj_w", s.proj_w);
    fn("proj_b", s.proj_b);
    fn("tok_emb", s.tok_emb);
    fn("text_pos_emb", s.text_pos_emb);
    fn("qpanel_emb", s.qpanel_emb);
    fn("opt_slot_emb", s.opt_slot_emb);
    fn("opt_index_emb", s.opt_index_emb);
    for (size_t l = 0; l < s.layers.size(); ++l) {
        auto& layer = s.layers[l];
        const std::string prefix = "layer" + std::to_string(l) + ".";
        fn(prefix + "attn_norm_gain", layer.attn_norm_gain);
        fn(prefix + "wq", layer.wq);
        fn(prefix + "wk", layer.wk);
        fn(prefix + "wv", layer.wv);
        fn(prefix + "wo", layer.wo);
        fn(prefix + "ffn_norm_gain", layer.ffn_norm_gain);
        fn(prefix + "ffn_w1", layer.ffn_w1);
        fn(prefix + "ffn_b1", layer.ffn_b1);
        fn(prefix + "ffn_w2", layer.ffn_w2);
        fn(prefix + "ffn_b2", layer.ffn_b2);
    }
    fn("final_norm_gain", s.final_norm_gain);
    fn("head_w", s.head_w);
    fn("head_b", s.head_b);
    fn("lvip_w1", s.lvip_w1);
    fn("lvip_b1", s.lvip_b1);
    fn("lvip_w2", s.lvip_w2);
    fn("lvip_b2", s.lvip_b2);
    fn("flow_w", s.flow_w);
    fn("flow_b", s.flow_b);
}

inline ModelState init_model(const ModelConfig& config, uint64_t seed,
                             const AttributeSpace& attrs = AttributeSpace{}) {
    config.validate();
    ModelState s;
    s.config = config;
    const double w = 0.05;
    Rng rng(seed);
    auto randn = [&](int r, int c) { return Tensor::randn(r, c, rng, w); };
    auto ones_row = [&](int c) {
        Tensor t = Tensor::zeros(1, c);
        for (double& v : t.values) v = 1.0;
        return t;
    };
    s.vis_shape_emb = randn(attrs.shapes, config.d_vis);
    s.vis_color_emb = randn(attrs.colors, config.d_vis);
    s.vis_size_emb = randn(attrs.sizes, config.d_vis);
    s.vis_presence_emb = randn(2, config.d_vis);
    s.vis_row_emb = randn(config.max_panel_side, config.d_vis);
    s.vis_col_emb = randn(config.max_panel_side, config.d_vis);
    s.proj_w = randn(config.d_vis, config.d_model);
    s.proj_b = Tensor::zeros(1, config.d_model);
    s.tok_emb = randn(config.vocab_size, config.d_model);
    s.text_pos_emb = randn(config.max_text_len, config.d_model);
    s.qpanel_emb = randn(config.max_question_panels, config.d_model);
    s.opt_slot_emb = randn(1, config.d_model);
    s.opt_index_emb = randn(config.max_options, config.d_model);
    s.layers.resize(config.n_layers);
    for (LayerParams& layer : s.layers) {
        layer.attn_norm_gain = ones_row(config.d_model);
        layer.wq = randn(config.d_model, config.d_model);
        layer.wk = randn(config.d_model, config.d_model);
        layer.wv = randn(config.d_model, config.d_model);
        layer.wo = randn(config.d_model, config.d_model);
        layer.ffn_norm_gain = ones_row(config.d_model);
        layer.ffn_w1 = randn(config.d_model, config.ffn_width);
        layer.ffn_b1 = Tensor::zeros(1, config.ffn_width);
        layer.ffn_w2 = randn(config.ffn_width, config.d_model);
        layer.ffn_b2 = Tensor::zeros(1, config.d_model);
    }
    s.final_norm_gain = ones_row(config.d_model);
    s.head_w = randn(config.d_model, config.vocab_size);
    s.head_b = Tensor::zeros(1, config.vocab_size);
    s.lvip_w1 = randn(config.d_model, config.lvip_hidden);
    s.lvip_b1 = Tensor::zeros(1, config.lvip_hidden);
    s.lvip_w2 = randn(config.lvip_hidden, config.d_vis);
    s.lvip_b2 = Tensor::zeros(1, config.d_vis);
    s.flow_w = randn(config.d_model, 1);
    s.flow_b = Tensor::zeros(1, 1);
    return s;
}

inline size_t count_params(const ModelState& s) {
    size_t n = 0;
    visit_params(s, [&](const std::string&, const Tensor& t) { n += t.values.size(); });
    return n;
}

// ---------------------------------------------------------------------------
// Lifting parameters onto a tape.
// ---------------------------------------------------------------------------

struct ParamVars {
    std::unordered_map<std::string, Var> vars;

    Var at(const std::string& name) const {
        auto it = vars.find(name);
        if (it == vars.end()) throw std::logic_error("ParamVars: unknown parameter '" + name + "'");
        return it->second;
    }
};

inline ParamVars lift_params(Tape& tape, const ModelState& state) {
    ParamVars p;
    visit_params(state, [&](const std::string& name, const Tensor& t) {
        p.vars.emplace(name, tape.param(t));
    });
    return p;
}

// ---------------------------------------------------------------------------
// Sequence layout.
// ---------------------------------------------------------------------------

struct Span {
    int begin = 0;
    int end = 0;  // half-open

    int size() const { return end - begin; }
    bool operator==(const Span&) const = default;
};

struct TokenSpanMap {
    Span question;              // all question-panel cell positions
    std::vector<Span> options;  // per-option cell positions
    Span prompt;                // prompt token positions
    Span rationale;             // rationale/termination/answer token positions
    int length = 0;

    bool operator==(const TokenSpanMap&) const = default;
};

inline std::vector<int> prompt_tokens(const Puzzle& puzzle) {
    return {vocab::kQuery, vocab::category_token(puzzle.rule.category)};
}

struct AssembleOptions {
    // Option-index embeddings distinguish option slots; switching them off
    // exposes the shared-slot encoding (used by the permutation property).
    bool include_option_index = true;
};

// ---------------------------------------------------------------------------
// Visual encoder and projection.
// ---------------------------------------------------------------------------

namespace detail {

inline void check_panel(const ModelConfig& cfg, const Panel& panel) {
    if (panel.width > cfg.max_panel_side || panel.height > cfg.max_panel_side) {
        throw DimensionError("encode_panel: panel exceeds configured side limit");
    }
    if (panel.width <= 0 || panel.height <= 0 ||
        panel.cells.size() != static_cast<size_t>(panel.width) * panel.height) {
        throw DimensionError("encode_panel: malformed panel");
    }
}

struct PanelIndices {
    std::vector<int> shape, color, size, presence, row, col;
};

inline PanelIndices panel_indices(const Panel& panel) {
    PanelIndices ix;
    for (int r = 0; r < panel.height; ++r) {
        for (int c = 0; c < panel.width; ++c) {
            const Cell& cell = panel.at(r, c);
            ix.shape.push_back(cell.shape);
            ix.color.push_back(cell.color);
            ix.size.push_back(cell.size);
            ix.presence.push_back(cell.present ? 1 : 0);
            ix.row.push_back(r);
            ix.col.push_back(c);
        }
    }
    return ix;
}

}  // namespace detail

// One embedding per cell: sum of attribute embeddings plus the 2D cell
// position embedding. Output shape (width*height, d_vis).
inline Var encode_panel(Tape& tape, const ParamVars& p, const ModelConfig& cfg, const Panel& panel) {
    detail::check_panel(cfg, panel);
    detail::PanelIndices ix = detail::panel_indices(panel);
    std::vector<Var> parts = {
        gather_rows(p.at("vis_shape_emb"), ix.shape),   gather_rows(p.at("vis_color_emb"), ix.color),
        gather_rows(p.at("vis_size_emb"), ix.size),     gather_rows(p.at("vis_presence_emb"), ix.presence),
        gather_rows(p.at("vis_row_emb"), ix.row),       gather_rows(p.at("vis_col_emb"), ix.col)};
    return add_all(parts);
}

// Value-only twin of encode_panel for frozen targets (no gradient flow).
inline Tensor encode_panel_values(const ModelState& s, const Panel& panel) {
    detail::check_panel(s.config, panel);
    detail::PanelIndices ix = detail::panel_indices(panel);
    const int n = static_cast<int>(ix.shape.size());
    Tensor out = Tensor::zeros(n, s.config.d_vis);
    auto accumulate = [&](const Tensor& table, const std::vector<int>& idx) {
        for (int i = 0; i < n; ++i) {
            for (int j = 0; j < s.config.d_vis; ++j) {
                out.at(i, j) += table.at(idx[i], j);
            }
        }
    };
    accumulate(s.vis_shape_emb, ix.shape);
    accumulate(s.vis_color_emb, ix.color);
    accumulate(s.vis_size_emb, ix.size);
    accumulate(s.vis_presence_emb, ix.presence);
    accumulate(s.vis_row_emb, ix.row);
    accumulate(s.vis_col_emb, ix.col);
    return out;
}

// Affine map from the visual width into the language embedding space.
inline Var project(Tape& tape, const ParamVars& p, Var features) {
    (void)tape;
    return add_row(matmul(features, p.at("proj_w")), p.at("proj_b"));
}

// Frozen visual-encoder features of a panel, mean-pooled to one vector.
// Computed outside any tape, so nothing can backpropagate into it.
inline Tensor target_embedding(const ModelState& s, const Panel& panel) {
    Tensor feats = encode_panel_values(s, panel);
    Tensor out = Tensor::zeros(1, feats.cols());
    for (int i = 0; i < feats.rows(); ++i) {
        for (int j = 0; j < feats.cols(); ++j) out.at(0, j) += feats.at(i, j);
    }
    for (double& v : out.values) v /= feats.rows();
    return out;
}

// ---------------------------------------------------------------------------
// Assembly: [question panels | option panels | prompt | rationale suffix].
// ---------------------------------------------------------------------------

struct AssembledVars {
    Var embeddings;  // length x d_model
    TokenSpanMap spans;
};

inline AssembledVars assemble_sequence(Tape& tape, const ParamVars& p, const ModelConfig& cfg,
                                       const Puzzle& puzzle, std::span<const int> text_suffix,
                                       const AssembleOptions& opts = {}) {
    if (static_cast<int>(puzzle.question_panels.size()) > cfg.max_question_panels) {
        throw std::length_error("assemble_sequence: too many question panels");
    }
    if (puzzle.option_count() > cfg.max_options) {
        throw std::length_error("assemble_sequence: too many option panels");
    }
    std::vector<Var> blocks;
    TokenSpanMap spans;
    int cursor = 0;

    spans.question.begin = cursor;
    for (size_t i = 0; i < puzzle.question_panels.size(); ++i) {
        const Panel& panel = puzzle.question_panels[i];
        Var h = project(tape, p, encode_panel(tape, p, cfg, panel));
        h = add_row(h, gather_rows(p.at("qpanel_emb"), {static_cast<int>(i)}));
        blocks.push_back(h);
        cursor += panel.width * panel.height;
    }
    spans.question.end = cursor;

    for (int k = 0; k < puzzle.option_count(); ++k) {
        const Panel& panel = puzzle.option_panels[k];
        Var h = project(tape, p, encode_panel(tape, p, cfg, panel));
        h = add_row(h, p.at("opt_slot_emb"));
        if (opts.include_option_index) {
            h = add_row(h, gather_rows(p.at("opt_index_emb"), {k}));
        }
        blocks.push_back(h);
        Span span{cursor, cursor + panel.width * panel.height};
        spans.options.push_back(span);
        cursor = span.end;
    }

    std::vector<int> text = prompt_tokens(puzzle);
    spans.prompt = {cursor, cursor + static_cast<int>(text.size())};
    text.insert(text.end(), text_suffix.begin(), text_suffix.end());
    spans.rationale = {spans.prompt.end, cursor + static_cast<int>(text.size())};
    cursor += static_cast<int>(text.size());

    if (static_cast<int>(text.size()) > cfg.max_text_len) {
        throw std::length_error("assemble_sequence: text segment exceeds max_text_len");
    }
    if (cursor > cfg.max_seq_len) {
        throw std::length_error("assemble_sequence: sequence exceeds max_seq_len");
    }
    for (int t : text) {
        if (t < 0 || t >= cfg.vocab_size) {
            throw std::invalid_argument("assemble_sequence: token outside vocabulary");
        }
    }
    std::vector<int> text_pos(text.size());
    for (size_t i = 0; i < text.size(); ++i) text_pos[i] = static_cast<int>(i);
    blocks.push_back(add(gather_rows(p.at("tok_emb"), text), gather_rows(p.at("text_pos_emb"), text_pos)));

    spans.length = cursor;
    return {concat_rows(blocks), spans};
}

// ---------------------------------------------------------------------------
// Backbone, heads, forward.
// ---------------------------------------------------------------------------

namespace detail {

inline Tensor causal_mask(int n) {
    Tensor m = Tensor::zeros(n, n);
    for (int i = 0; i < n; ++i) {
        for (int j = i + 1; j < n; ++j) m.at(i, j) = -1e30;
    }
    return m;
}

}  // namespace detail

// Pre-norm causal transformer; returns the final-layer hidden states after
// the output normalization.
inline Var transformer_hidden(Tape& tape, const ParamVars& p, const ModelConfig& cfg, Var x) {
    const int n = tape.value(x).rows();
    const int dh = cfg.d_model / cfg.n_heads;
    Var mask = tape.constant(detail::causal_mask(n));
    const double inv_sqrt_dh = 1.0 / std::sqrt(static_cast<double>(dh));
    for (int l = 0; l < cfg.n_layers; ++l) {
        const std::string prefix = "layer" + std::to_string(l) + ".";
        Var xn = rms_norm(x, p.at(prefix + "attn_norm_gain"));
        Var q = matmul(xn, p.at(prefix + "wq"));
        Var k = matmul(xn, p.at(prefix + "wk"));
        Var v = matmul(xn, p.at(prefix + "wv"));
        std::vector<Var> heads;
        for (int h = 0; h < cfg.n_heads; ++h) {
            Var qh = slice_cols(q, h * dh, (h + 1) * dh);
            Var kh = slice_cols(k, h * dh, (h + 1) * dh);
            Var vh = slice_cols(v, h * dh, (h + 1) * dh);
            Var scores = add(scale(matmul(qh, transpose(kh)), inv_sqrt_dh), mask);
            heads.push_back(matmul(softmax_rows(scores), vh));
        }
        x = add(x, matmul(concat_cols(heads), p.at(prefix + "wo")));
        Var fn = rms_norm(x, p.at(prefix + "ffn_norm_gain"));
        Var f = cogsense::tanh(add_row(matmul(fn, p.at(prefix + "ffn_w1")), p.at(prefix + "ffn_b1")));
        x = add(x, add_row(matmul(f, p.at(prefix + "ffn_w2")), p.at(prefix + "ffn_b2")));
    }
    return rms_norm(x, p.at("final_norm_gain"));
}

// Mean of final-layer hidden states over all option-token positions: the
// paper's single aggregate over option images.
inline Var pool_option_hidden(Tape& tape, Var hidden, const TokenSpanMap& spans) {
    std::vector<Var> parts;
    for (const Span& s : spans.options) {
        if (s.size() > 0) parts.push_back(slice_rows(hidden, s.begin, s.end));
    }
    if (parts.empty()) throw std::invalid_argument("pool_option_hidden: no option positions");
    (void)tape;
    return mean_rows(concat_rows(parts));
}

// Two-layer imagery-prediction head: affine, tanh, affine.
inline Var lvip_predict(Tape& tape, const ParamVars& p, Var pooled) {
    (void)tape;
    Var h = cogsense::tanh(add_row(matmul(pooled, p.at("lvip_w1")), p.at("lvip_b1")));
    return add_row(matmul(h, p.at("lvip_w2")), p.at("lvip_b2"));
}

struct ForwardVars {
    Var hidden;         // length x d_model
    Var logits;         // length x vocab
    Var flows;          // length x 1, per-position log-flow
    Var pooled_option;  // 1 x d_model
    Var lvip_pred;      // 1 x d_vis
    TokenSpanMap spans;
};

inline ForwardVars forward_model(Tape& tape, const ParamVars& p, const ModelConfig& cfg,
                                 const Puzzle& puzzle, std::span<const int> text_suffix,
                                 const AssembleOptions& opts = {}) {
    AssembledVars assembled = assemble_sequence(tape, p, cfg, puzzle, text_suffix, opts);
    ForwardVars out;
    out.spans = assembled.spans;
    out.hidden = transformer_hidden(tape, p, cfg, assembled.embeddings);
    out.logits = add_row(matmul(out.hidden, p.at("head_w")), p.at("head_b"));
    out.flows = add_row(matmul(out.hidden, p.at("flow_w")), p.at("flow_b"));
    out.pooled_option = pool_option_hidden(tape, out.hidden, out.spans);
    out.lvip_pred = lvip_predict(tape, p, out.pooled_option);
    return out;
}

struct ForwardOutput {
    Tensor hidden, logits, flows, pooled_option, lvip_pred;
    TokenSpanMap spans;
};

// Value-only forward: parameters enter as tape constants, so no gradients
// exist anywhere. Used for sampling, rewards, and evaluation.
inline ForwardOutput forward_eval(const ModelState& state, const Puzzle& puzzle,
                                  std::span<const int> text_suffix, const AssembleOptions& opts = {}) {
    Tape tape;
    ParamVars p = lift_params(tape, state);
    ForwardVars f = forward_model(tape, p, state.config, puzzle, text_suffix, opts);
    ForwardOutput out;
    out.hidden = tape.value(f.hidden);
    out.logits = tape.value(f.logits);
    out.flows = tape.value(f.flows);
    out.pooled_option = tape.value(f.pooled_option);
    out.lvip_pred = tape.value(f.lvip_pred);
    out.spans = f.spans;
    return out;
}

}  // namespace cogsense
