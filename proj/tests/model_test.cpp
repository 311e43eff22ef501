#include <gtest/gtest.h>

#include <cstdio>
#include <string>
#include <vector>

#include "cogsense/checkpoint.hpp"
#include "cogsense/dataset.hpp"
#include "cogsense/grad_check.hpp"
#include "cogsense/model.hpp"
#include "cogsense/rationale.hpp"

namespace cs = cogsense;

namespace {

cs::ModelConfig tiny_config() {
    cs::ModelConfig cfg;
    cfg.d_model = 8;
    cfg.n_layers = 1;
    cfg.n_heads = 2;
    cfg.ffn_width = 12;
    cfg.d_vis = 4;
    cfg.lvip_hidden = 6;
    cfg.max_seq_len = 96;
    cfg.max_text_len = 32;
    return cfg;
}

cs::Puzzle small_puzzle(uint64_t seed = 3) {
    cs::RuleDescriptor rule;
    rule.category = cs::Category::kVisualRoutines;
    rule.rule_kind = cs::RuleKind::kOddOneOut;
    rule.attribute = cs::Attribute::kColor;
    rule.parameters = {4};
    return cs::gen_odd_one_out(rule, seed);
}

cs::Puzzle transform_puzzle(uint64_t seed = 5) {
    cs::RuleDescriptor rule;
    rule.category = cs::Category::kMentalSimulation;
    rule.rule_kind = cs::RuleKind::kTransformation;
    rule.attribute = cs::Attribute::kPresence;
    rule.parameters = {cs::kTransformReflectH, 2, 2};
    return cs::gen_transform_puzzle(rule, seed);
}

// Collect the fixed-order parameter list so gradient checks can rebuild a
// ParamVars from the Vars handed to the loss builder.
struct ParamList {
    std::vector<std::string> names;
    std::vector<cs::Tensor*> ptrs;
};

ParamList param_list(cs::ModelState& s) {
    ParamList out;
    cs::visit_params(s, [&](const std::string& n, cs::Tensor& t) {
        out.names.push_back(n);
        out.ptrs.push_back(&t);
    });
    return out;
}

cs::ParamVars vars_from(const ParamList& list, std::span<const cs::Var> vars) {
    cs::ParamVars p;
    for (size_t i = 0; i < list.names.size(); ++i) p.vars.emplace(list.names[i], vars[i]);
    return p;
}

}  // namespace

// --- encode_panel ------------------------------------------------------------

TEST(EncodePanel, DeterministicAndLocal) {
    cs::ModelState s = cs::init_model(tiny_config(), 1);
    cs::Puzzle p = small_puzzle();
    const cs::Panel& panel = p.option_panels[0];
    EXPECT_EQ(cs::encode_panel_values(s, panel), cs::encode_panel_values(s, panel));

    // Change one cell: features differ at exactly that row, before any mixing.
    cs::Panel other = panel;
    other.cells[2].present = !other.cells[2].present;
    other.normalize();
    cs::Tensor a = cs::encode_panel_values(s, panel);
    cs::Tensor b = cs::encode_panel_values(s, other);
    for (int r = 0; r < a.rows(); ++r) {
        bool same = true;
        for (int c = 0; c < a.cols(); ++c) same = same && a.at(r, c) == b.at(r, c);
        EXPECT_EQ(same, r != 2) << "row " << r;
    }
}

TEST(EncodePanel, OutputLengthMatchesCellCount) {
    cs::ModelState s = cs::init_model(tiny_config(), 2);
    cs::Rng rng(7);
    for (int i = 0; i < 100; ++i) {
        int w = 1 + rng.uniform_int(4);
        int h = 1 + rng.uniform_int(4);
        cs::Panel panel = cs::detail::random_panel(rng, w, h, cs::AttributeSpace{}, 1);
        panel.normalize();
        cs::Tensor f = cs::encode_panel_values(s, panel);
        ASSERT_EQ(f.rows(), w * h);
        ASSERT_EQ(f.cols(), s.config.d_vis);
    }
}

TEST(EncodePanel, OversizePanelRejected) {
    cs::ModelConfig cfg = tiny_config();
    cfg.max_panel_side = 2;
    cs::ModelState s = cs::init_model(cfg, 3);
    EXPECT_THROW(cs::encode_panel_values(s, cs::Panel(3, 2)), cs::DimensionError);
    cs::Tape tape;
    cs::ParamVars p = cs::lift_params(tape, s);
    EXPECT_THROW(cs::encode_panel(tape, p, cfg, cs::Panel(3, 2)), cs::DimensionError);
}

// --- project -----------------------------------------------------------------

TEST(Project, AffineProperties) {
    cs::ModelState s = cs::init_model(tiny_config(), 4);
    s.proj_b = cs::Tensor::zeros(1, s.config.d_model);
    cs::Tape tape;
    cs::ParamVars p = cs::lift_params(tape, s);

    cs::Var zero = tape.constant(cs::Tensor::zeros(3, s.config.d_vis));
    cs::Tensor out = tape.value(cs::project(tape, p, zero));
    for (double v : out.values) EXPECT_EQ(v, 0.0);

    cs::Rng rng(5);
    cs::Tensor ta = cs::Tensor::randn(3, s.config.d_vis, rng);
    cs::Tensor tb = cs::Tensor::randn(3, s.config.d_vis, rng);
    cs::Tensor tsum = ta;
    for (size_t i = 0; i < tsum.values.size(); ++i) tsum.values[i] += tb.values[i];
    cs::Tensor pa = tape.value(cs::project(tape, p, tape.constant(ta)));
    cs::Tensor pb = tape.value(cs::project(tape, p, tape.constant(tb)));
    cs::Tensor psum = tape.value(cs::project(tape, p, tape.constant(tsum)));
    for (size_t i = 0; i < psum.values.size(); ++i) {
        EXPECT_NEAR(psum.values[i], pa.values[i] + pb.values[i], 1e-12);
    }
}

TEST(Project, GradientCheck) {
    cs::ModelState s = cs::init_model(tiny_config(), 6);
    cs::Rng rng(8);
    cs::Tensor input = cs::Tensor::randn(3, s.config.d_vis, rng);
    std::vector<cs::Tensor*> params = {&s.proj_w, &s.proj_b};
    auto build = [&](cs::Tape& tape, std::span<const cs::Var> vars) {
        cs::Var h = cs::add_row(cs::matmul(tape.constant(input), vars[0]), vars[1]);
        return cs::mse(h, tape.constant(cs::Tensor::zeros(3, s.config.d_model)));
    };
    cs::GradCheckReport report = cs::grad_check(params, build);
    EXPECT_TRUE(report.passed()) << report.max_rel_err;
}

// --- forward -------------------------------------------------------------------

TEST(Forward, AppendingTokensPreservesEarlierStates) {
    cs::ModelState s = cs::init_model(tiny_config(), 9);
    cs::Puzzle p = small_puzzle();
    std::vector<int> prefix = {cs::vocab::kRuleOddOneOut, cs::vocab::kAttrColor};
    std::vector<int> longer = prefix;
    longer.push_back(cs::vocab::kStep);
    longer.push_back(cs::vocab::digit(2));

    cs::ForwardOutput a = cs::forward_eval(s, p, prefix);
    cs::ForwardOutput b = cs::forward_eval(s, p, longer);
    ASSERT_EQ(b.hidden.rows(), a.hidden.rows() + 2);
    for (int r = 0; r < a.hidden.rows(); ++r) {
        for (int c = 0; c < a.hidden.cols(); ++c) {
            ASSERT_EQ(a.hidden.at(r, c), b.hidden.at(r, c)) << "hidden (" << r << "," << c << ")";
        }
        for (int c = 0; c < a.logits.cols(); ++c) {
            ASSERT_EQ(a.logits.at(r, c), b.logits.at(r, c)) << "logits (" << r << "," << c << ")";
        }
        ASSERT_EQ(a.flows.at(r, 0), b.flows.at(r, 0));
    }
}

TEST(Forward, SharedSlotEncodingMakesOptionBlocksSwappable) {
    cs::ModelState s = cs::init_model(tiny_config(), 10);
    cs::Puzzle p = transform_puzzle();
    ASSERT_FALSE(p.option_panels[0] == p.option_panels[1]);
    cs::Puzzle swapped = p;
    std::swap(swapped.option_panels[0], swapped.option_panels[1]);
    if (swapped.answer_index == 0) {
        swapped.answer_index = 1;
    } else if (swapped.answer_index == 1) {
        swapped.answer_index = 0;
    }

    cs::AssembleOptions opts;
    opts.include_option_index = false;
    std::vector<int> suffix = {cs::vocab::kEos};
    cs::Tape ta, tb;
    cs::AssembledVars ea = cs::assemble_sequence(ta, cs::lift_params(ta, s), s.config, p, suffix, opts);
    cs::AssembledVars eb = cs::assemble_sequence(tb, cs::lift_params(tb, s), s.config, swapped, suffix, opts);
    cs::Tensor va = ta.value(ea.embeddings);
    cs::Tensor vb = tb.value(eb.embeddings);

    // Block for option 0 after the swap equals block for option 1 before it,
    // and vice versa: the slot encoding carries no option index.
    auto block_equal = [&](cs::Span left, cs::Span right) {
        if (left.size() != right.size()) return false;
        for (int i = 0; i < left.size(); ++i) {
            for (int c = 0; c < va.cols(); ++c) {
                if (vb.at(right.begin + i, c) != va.at(left.begin + i, c)) return false;
            }
        }
        return true;
    };
    EXPECT_TRUE(block_equal(ea.spans.options[0], eb.spans.options[1]));
    EXPECT_TRUE(block_equal(ea.spans.options[1], eb.spans.options[0]));
    // Remaining blocks are untouched.
    for (size_t k = 2; k < ea.spans.options.size(); ++k) {
        EXPECT_TRUE(block_equal(ea.spans.options[k], eb.spans.options[k]));
    }
}

TEST(Forward, LogitsShapeAcross50RandomConfigs) {
    cs::Rng rng(11);
    cs::Puzzle p = small_puzzle();
    std::vector<int> suffix = {cs::vocab::digit(1), cs::vocab::kEos};
    for (int i = 0; i < 50; ++i) {
        cs::ModelConfig cfg;
        cfg.n_heads = 1 << rng.uniform_int(3);
        cfg.d_model = cfg.n_heads * (2 + rng.uniform_int(5));
        cfg.n_layers = 1 + rng.uniform_int(2);
        cfg.ffn_width = 4 + rng.uniform_int(13);
        cfg.d_vis = 2 + rng.uniform_int(7);
        cfg.lvip_hidden = 2 + rng.uniform_int(7);
        cfg.max_seq_len = 96;
        cfg.max_text_len = 32;
        cs::ModelState s = cs::init_model(cfg, 1000 + i);
        cs::ForwardOutput out = cs::forward_eval(s, p, suffix);
        ASSERT_EQ(out.logits.rows(), out.spans.length);
        ASSERT_EQ(out.logits.cols(), cfg.vocab_size);
        ASSERT_EQ(out.hidden.cols(), cfg.d_model);
        ASSERT_EQ(out.flows.cols(), 1);
        ASSERT_EQ(out.lvip_pred.cols(), cfg.d_vis);
        ASSERT_TRUE(out.logits.all_finite());
    }
}

TEST(Forward, LogitRowsNormalizeUnderSoftmax) {
    cs::ModelState s = cs::init_model(tiny_config(), 12);
    cs::Puzzle p = transform_puzzle();
    std::vector<int> suffix = {cs::vocab::kRuleTransform, cs::vocab::kOpReflectH, cs::vocab::kEos};
    cs::Tape tape;
    cs::ParamVars pv = cs::lift_params(tape, s);
    cs::ForwardVars f = cs::forward_model(tape, pv, s.config, p, suffix);
    cs::Tensor probs = tape.value(cs::softmax_rows(f.logits));
    for (int r = 0; r < probs.rows(); ++r) {
        double sum = 0.0;
        for (int c = 0; c < probs.cols(); ++c) sum += probs.at(r, c);
        EXPECT_NEAR(sum, 1.0, 1e-12);
    }
}

TEST(Forward, SequenceOverflowRejected) {
    cs::ModelConfig cfg = tiny_config();
    cfg.max_seq_len = 10;  // smaller than any real assembled puzzle
    cfg.max_text_len = 10;
    cs::ModelState s = cs::init_model(cfg, 13);
    EXPECT_THROW(cs::forward_eval(s, small_puzzle(), {}), std::length_error);

    cs::ModelConfig cfg2 = tiny_config();
    cfg2.max_text_len = 3;
    cs::ModelState s2 = cs::init_model(cfg2, 13);
    std::vector<int> suffix = {cs::vocab::digit(1), cs::vocab::digit(2), cs::vocab::digit(3)};
    EXPECT_THROW(cs::forward_eval(s2, small_puzzle(), suffix), std::length_error);
}

// --- pooling and heads -----------------------------------------------------------

TEST(PoolOptionHidden, HandCasesAndMeanIdentity) {
    cs::Tape tape;
    // Two option positions [1,3] and [3,1] -> [2,2].
    cs::Tensor h = cs::Tensor::from(2, 2, {1, 3, 3, 1});
    cs::TokenSpanMap spans;
    spans.options = {{0, 1}, {1, 2}};
    cs::Tensor pooled = tape.value(cs::pool_option_hidden(tape, tape.constant(h), spans));
    EXPECT_EQ(pooled.at(0, 0), 2.0);
    EXPECT_EQ(pooled.at(0, 1), 2.0);

    // Mean of identical vectors is that vector.
    cs::Tensor u = cs::Tensor::from(3, 2, {4, -1, 4, -1, 4, -1});
    cs::TokenSpanMap spans_u;
    spans_u.options = {{0, 3}};
    cs::Tensor pooled_u = tape.value(cs::pool_option_hidden(tape, tape.constant(u), spans_u));
    EXPECT_EQ(pooled_u.at(0, 0), 4.0);
    EXPECT_EQ(pooled_u.at(0, 1), -1.0);

    // Mean equals sum / M on random data.
    cs::Rng rng(14);
    cs::Tensor r = cs::Tensor::randn(6, 3, rng);
    cs::TokenSpanMap spans_r;
    spans_r.options = {{0, 2}, {3, 6}};
    cs::Tensor pooled_r = tape.value(cs::pool_option_hidden(tape, tape.constant(r), spans_r));
    for (int c = 0; c < 3; ++c) {
        double sum = r.at(0, c) + r.at(1, c) + r.at(3, c) + r.at(4, c) + r.at(5, c);
        EXPECT_NEAR(pooled_r.at(0, c), sum / 5.0, 1e-12);
    }

    cs::TokenSpanMap empty;
    EXPECT_THROW(cs::pool_option_hidden(tape, tape.constant(h), empty), std::invalid_argument);
}

TEST(LvipHead, ZeroWeightsGiveBiasAndGradCheckPasses) {
    cs::ModelState s = cs::init_model(tiny_config(), 15);
    s.lvip_w1 = cs::Tensor::zeros(s.config.d_model, s.config.lvip_hidden);
    s.lvip_w2 = cs::Tensor::zeros(s.config.lvip_hidden, s.config.d_vis);
    cs::Rng rng(16);
    for (double& v : s.lvip_b2.values) v = rng.normal();
    {
        cs::Tape tape;
        cs::ParamVars p = cs::lift_params(tape, s);
        cs::Var pooled = tape.constant(cs::Tensor::randn(1, s.config.d_model, rng));
        cs::Tensor out = tape.value(cs::lvip_predict(tape, p, pooled));
        ASSERT_EQ(out.cols(), s.config.d_vis);
        for (int c = 0; c < out.cols(); ++c) EXPECT_EQ(out.at(0, c), s.lvip_b2.at(0, c));
    }

    // Gradient check through both layers.
    cs::ModelState g = cs::init_model(tiny_config(), 17);
    cs::Tensor pooled_in = cs::Tensor::randn(1, g.config.d_model, rng);
    cs::Tensor target = cs::Tensor::randn(1, g.config.d_vis, rng);
    std::vector<cs::Tensor*> params = {&g.lvip_w1, &g.lvip_b1, &g.lvip_w2, &g.lvip_b2};
    auto build = [&](cs::Tape& tape, std::span<const cs::Var> vars) {
        cs::Var h = cs::tanh(cs::add_row(cs::matmul(tape.constant(pooled_in), vars[0]), vars[1]));
        cs::Var pred = cs::add_row(cs::matmul(h, vars[2]), vars[3]);
        return cs::mse(pred, tape.constant(target));
    };
    cs::GradCheckReport report = cs::grad_check(params, build);
    EXPECT_TRUE(report.passed()) << report.max_rel_err;
}

TEST(TargetEmbedding, FrozenDeterministicAndWellTyped) {
    cs::ModelState s = cs::init_model(tiny_config(), 18);
    cs::Puzzle p = small_puzzle();
    const cs::Panel& gold = p.option_panels[p.answer_index];
    cs::Tensor h1 = cs::target_embedding(s, gold);
    cs::Tensor h2 = cs::target_embedding(s, gold);
    EXPECT_EQ(h1, h2);
    ASSERT_EQ(h1.rows(), 1);
    ASSERT_EQ(h1.cols(), s.config.d_vis);

    // Frozen contract: a stored target is a value, not a view; perturbing the
    // encoder afterwards must not touch it.
    cs::Tensor stored = cs::target_embedding(s, gold);
    for (double& v : s.vis_color_emb.values) v += 1.0;
    EXPECT_EQ(stored, h1);
    EXPECT_FALSE(cs::target_embedding(s, gold) == h1);

    // Prediction and target live in the same space.
    cs::ModelState s2 = cs::init_model(tiny_config(), 19);
    cs::ForwardOutput out = cs::forward_eval(s2, p, {});
    EXPECT_EQ(out.lvip_pred.cols(), cs::target_embedding(s2, gold).cols());
}

// --- full-model gradient check ------------------------------------------------------

TEST(FullModel, GradientCheckThroughAllHeads) {
    cs::ModelState s = cs::init_model(tiny_config(), 20);
    cs::Puzzle p = small_puzzle(21);
    std::vector<int> rationale = cs::synthesize_rationale(p);
    std::vector<int> suffix = rationale;
    suffix.push_back(cs::vocab::kEos);
    suffix.push_back(cs::vocab::option(p.answer_index));
    cs::Tensor target = cs::target_embedding(s, p.option_panels[p.answer_index]);

    ParamList list = param_list(s);
    auto build = [&](cs::Tape& tape, std::span<const cs::Var> vars) {
        cs::ParamVars pv = vars_from(list, vars);
        cs::ForwardVars f = cs::forward_model(tape, pv, s.config, p, suffix);
        // Cross-entropy at one rationale position + imagery error + a flow
        // readout: every head participates in one scalar loss.
        int pos = f.spans.rationale.begin;
        cs::Var ce = cs::cross_entropy_row(f.logits, pos, suffix[0]);
        cs::Var im = cs::mse(f.lvip_pred, tape.constant(target));
        cs::Var fl = cs::square(cs::slice_rows(f.flows, f.spans.length - 1, f.spans.length));
        return cs::add(cs::add(ce, im), fl);
    };
    cs::GradCheckReport report = cs::grad_check(list.ptrs, build, 1e-5, 1e-4);
    EXPECT_TRUE(report.passed()) << "max rel err " << report.max_rel_err << ", violations "
                                 << report.violations.size();
    EXPECT_GT(report.checked, 1000);
}

// --- checkpointing -------------------------------------------------------------------

TEST(Checkpoint, RoundTripIsBitwise) {
    cs::ModelState s = cs::init_model(tiny_config(), 22);
    cs::Puzzle p = transform_puzzle(23);
    std::vector<int> suffix = cs::synthesize_rationale(p);
    const std::string path = "model_ckpt_test.bin";
    cs::save_checkpoint(s, path);
    cs::ModelState loaded = cs::load_checkpoint(path);
    EXPECT_EQ(loaded.config, s.config);

    cs::ForwardOutput a = cs::forward_eval(s, p, suffix);
    cs::ForwardOutput b = cs::forward_eval(loaded, p, suffix);
    EXPECT_EQ(a.hidden, b.hidden);
    EXPECT_EQ(a.logits, b.logits);
    EXPECT_EQ(a.flows, b.flows);
    EXPECT_EQ(a.pooled_option, b.pooled_option);
    EXPECT_EQ(a.lvip_pred, b.lvip_pred);
    std::remove(path.c_str());
}

TEST(Checkpoint, CorruptionDetected) {
    cs::ModelState s = cs::init_model(tiny_config(), 24);
    const std::string path = "model_ckpt_bad.bin";
    cs::save_checkpoint(s, path);

    // Wrong header.
    {
        std::ifstream in(path, std::ios::binary);
        std::string data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
        data[0] = 'X';
        std::ofstream out(path, std::ios::binary);
        out << data;
    }
    EXPECT_THROW(cs::load_checkpoint(path), cs::CheckpointError);

    // Truncated payload.
    cs::save_checkpoint(s, path);
    {
        std::ifstream in(path, std::ios::binary);
        std::string data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
        std::ofstream out(path, std::ios::binary);
        out << data.substr(0, data.size() - 16);
    }
    EXPECT_THROW(cs::load_checkpoint(path), cs::CheckpointError);
    std::remove(path.c_str());
}

TEST(ModelConfig, InvariantsEnforced) {
    cs::ModelConfig cfg = tiny_config();
    cfg.d_model = 10;
    cfg.n_heads = 4;
    EXPECT_THROW(cfg.validate(), std::invalid_argument);
    cfg = tiny_config();
    cfg.max_text_len = cfg.max_seq_len + 1;
    EXPECT_THROW(cfg.validate(), std::invalid_argument);
    cfg = tiny_config();
    cfg.n_layers = 0;
    EXPECT_THROW(cs::init_model(cfg, 0), std::invalid_argument);
}
