// Acceptance suite: one criterion per run block, one PASS/FAIL line each.
// Tolerances are pinned in code next to each check. The binary exits 0 only
// if every criterion passes. Pass criterion numbers as arguments to run a
// subset, e.g. `mrg_acceptance 6 7`.

#include <unistd.h>

#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <set>
#include <string>
#include <vector>

#include "mrg/grad_check.hpp"
#include "mrg/pipeline.hpp"

using namespace mrg;
namespace fs = std::filesystem;

namespace {

// ---------------------------------------------------------------------------
// Harness
// ---------------------------------------------------------------------------

struct Outcome {
    bool pass = false;
    std::string detail;          // appended to the PASS/FAIL line
    std::vector<std::string> notes;  // extra indented lines
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

fs::path g_work;  // scratch directory shared by the heavyweight criteria

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot read " + path);
    return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

// ---------------------------------------------------------------------------
// Naive oracles (straight loops, no shared code with the library kernels)
// ---------------------------------------------------------------------------

Tensor naive_affine(const Tensor& x, const Tensor& w, const Tensor& b) {
    Tensor out = Tensor::zeros(x.rows(), w.rows());
    for (int i = 0; i < x.rows(); ++i)
        for (int o = 0; o < w.rows(); ++o) {
            double acc = b.values()[static_cast<size_t>(o)];
            for (int j = 0; j < x.cols(); ++j) acc += x(i, j) * w(o, j);
            out(i, o) = acc;
        }
    return out;
}

Tensor naive_matmul_nt(const Tensor& a, const Tensor& b) {
    Tensor out = Tensor::zeros(a.rows(), b.rows());
    for (int i = 0; i < a.rows(); ++i)
        for (int j = 0; j < b.rows(); ++j) {
            double acc = 0.0;
            for (int k = 0; k < a.cols(); ++k) acc += a(i, k) * b(j, k);
            out(i, j) = acc;
        }
    return out;
}

void naive_softmax_rows_inplace(Tensor& t) {
    for (int i = 0; i < t.rows(); ++i) {
        double m = t(i, 0);
        for (int j = 1; j < t.cols(); ++j) m = std::max(m, t(i, j));
        double s = 0.0;
        for (int j = 0; j < t.cols(); ++j) {
            t(i, j) = std::exp(t(i, j) - m);
            s += t(i, j);
        }
        for (int j = 0; j < t.cols(); ++j) t(i, j) /= s;
    }
}

double naive_gelu(double v) { return 0.5 * v * (1.0 + std::erf(v * 0.70710678118654752440)); }

Tensor naive_layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta) {
    Tensor out = Tensor::zeros(x.rows(), x.cols());
    const int d = x.cols();
    for (int i = 0; i < x.rows(); ++i) {
        double mu = 0.0;
        for (int j = 0; j < d; ++j) mu += x(i, j);
        mu /= d;
        double var = 0.0;
        for (int j = 0; j < d; ++j) {
            const double c = x(i, j) - mu;
            var += c * c;
        }
        var /= d;
        const double inv = 1.0 / std::sqrt(var + 1e-12);
        for (int j = 0; j < d; ++j)
            out(i, j) = (x(i, j) - mu) * inv * gamma.values()[static_cast<size_t>(j)] +
                        beta.values()[static_cast<size_t>(j)];
    }
    return out;
}

/// Multi-head attention as published: per-head scaled dot product with an
/// optional additive score bias, concatenated and output-projected.
Tensor naive_mha(const Tensor& q_in, const Tensor& kv_in, const MhaParams& p,
                 const Tensor* bias) {
    const int d_model = p.wq.rows();
    const int dh = d_model / p.heads;
    Tensor q = naive_affine(q_in, p.wq, p.bq);
    Tensor k = naive_affine(kv_in, p.wk, p.bk);
    Tensor v = naive_affine(kv_in, p.wv, p.bv);
    Tensor merged = Tensor::zeros(q_in.rows(), d_model);
    for (int h = 0; h < p.heads; ++h) {
        Tensor scores = Tensor::zeros(q_in.rows(), kv_in.rows());
        for (int i = 0; i < q_in.rows(); ++i)
            for (int j = 0; j < kv_in.rows(); ++j) {
                double acc = 0.0;
                for (int c = 0; c < dh; ++c) acc += q(i, h * dh + c) * k(j, h * dh + c);
                scores(i, j) = acc / std::sqrt(static_cast<double>(dh)) +
                               (bias ? (*bias)(i, j) : 0.0);
            }
        naive_softmax_rows_inplace(scores);
        for (int i = 0; i < q_in.rows(); ++i)
            for (int c = 0; c < dh; ++c) {
                double acc = 0.0;
                for (int j = 0; j < kv_in.rows(); ++j) acc += scores(i, j) * v(j, h * dh + c);
                merged(i, h * dh + c) = acc;
            }
    }
    return naive_affine(merged, p.wo, p.bo);
}

Tensor naive_cross_block(const Tensor& t_f, const Tensor& scan, const KjaParams& p) {
    Tensor mha = naive_mha(t_f, scan, p.cross, nullptr);
    Tensor hidden = naive_affine(mha, p.cross_ffn_w1, p.cross_ffn_b1);
    for (auto& v : hidden.values()) v = naive_gelu(v);
    return naive_affine(hidden, p.cross_ffn_w2, p.cross_ffn_b2);
}

Tensor naive_masked_block(const Tensor& x, const Tensor& mask, const KjaParams& p) {
    Tensor bias = Tensor::zeros(mask.rows(), mask.cols());
    for (int i = 0; i < mask.rows(); ++i)
        for (int j = 0; j < mask.cols(); ++j) bias(i, j) = std::log(std::max(mask(i, j), 1e-30));
    Tensor ksa = naive_mha(x, x, p.self_attn, &bias);
    Tensor res = Tensor::zeros(x.rows(), x.cols());
    for (size_t i = 0; i < res.size(); ++i) res.values()[i] = ksa.values()[i] + x.values()[i];
    Tensor e_att = naive_layer_norm(res, p.ln1_gamma, p.ln1_beta);
    Tensor hidden = naive_affine(e_att, p.self_ffn_w1, p.self_ffn_b1);
    for (auto& v : hidden.values()) v = naive_gelu(v);
    Tensor ffn_out = naive_affine(hidden, p.self_ffn_w2, p.self_ffn_b2);
    for (size_t i = 0; i < ffn_out.size(); ++i) ffn_out.values()[i] += e_att.values()[i];
    return naive_layer_norm(ffn_out, p.ln2_gamma, p.ln2_beta);
}

/// Full pre-norm causal decoder stack, mirrored from the published layout.
Tensor naive_decoder_hidden(const Decoder& dec, const Tensor& seq) {
    const int len = seq.rows();
    const int d = dec.cfg.d_w;
    const int dh = d / dec.cfg.heads;
    Tensor x = Tensor::zeros(len, d);
    for (int i = 0; i < len; ++i)
        for (int j = 0; j < d; ++j) x(i, j) = seq(i, j) + dec.pos_table(i, j);
    for (const auto& blk : dec.blocks) {
        Tensor a_in = naive_layer_norm(x, blk.ln1_gamma, blk.ln1_beta);
        Tensor q = naive_matmul_nt(a_in, blk.wq.w);
        Tensor k = naive_matmul_nt(a_in, blk.wk.w);
        Tensor v = naive_matmul_nt(a_in, blk.wv.w);
        Tensor merged = Tensor::zeros(len, d);
        for (int h = 0; h < dec.cfg.heads; ++h) {
            Tensor scores = Tensor::zeros(len, len);
            for (int i = 0; i < len; ++i)
                for (int j = 0; j < len; ++j) {
                    double acc = 0.0;
                    for (int c = 0; c < dh; ++c) acc += q(i, h * dh + c) * k(j, h * dh + c);
                    scores(i, j) = acc / std::sqrt(static_cast<double>(dh)) +
                                   (j > i ? kCausalMask : 0.0);
                }
            naive_softmax_rows_inplace(scores);
            for (int i = 0; i < len; ++i)
                for (int c = 0; c < dh; ++c) {
                    double acc = 0.0;
                    for (int j = 0; j < len; ++j) acc += scores(i, j) * v(j, h * dh + c);
                    merged(i, h * dh + c) = acc;
                }
        }
        Tensor att_out = naive_matmul_nt(merged, blk.wo.w);
        for (size_t i = 0; i < x.size(); ++i) x.values()[i] += att_out.values()[i];
        Tensor f_in = naive_layer_norm(x, blk.ln2_gamma, blk.ln2_beta);
        Tensor hidden = naive_affine(f_in, blk.ffn_w1, blk.ffn_b1);
        for (auto& v2 : hidden.values()) v2 = naive_gelu(v2);
        Tensor f_out = naive_affine(hidden, blk.ffn_w2, blk.ffn_b2);
        for (size_t i = 0; i < x.size(); ++i) x.values()[i] += f_out.values()[i];
    }
    return naive_layer_norm(x, dec.lnf_gamma, dec.lnf_beta);
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
    double m = 0.0;
    for (size_t i = 0; i < a.size(); ++i)
        m = std::max(m, std::abs(a.values()[i] - b.values()[i]));
    return m;
}

// ---------------------------------------------------------------------------
// Criterion 1: gradient checks
// ---------------------------------------------------------------------------

Outcome c1_gradients() {
    const auto t0 = std::chrono::steady_clock::now();
    constexpr double kTol = 1e-4;  // relative, unit floor, h = 1e-5
    double worst = 0.0;
    std::string worst_site;
    size_t checked = 0;
    auto track = [&](const char* site, const GradCheckReport& rep) {
        checked += rep.checked;
        if (rep.max_rel_err > worst) {
            worst = rep.max_rel_err;
            worst_site = std::string(site) + " " + rep.worst;
        }
    };

    // Per-op toys, every differentiable kernel.
    Rng rng(90210);
    Tensor a = Tensor::randn(3, 4, rng, 1.0, true);
    Tensor b = Tensor::randn(4, 3, rng, 1.0, true);
    Tensor c = Tensor::randn(3, 4, rng, 1.0, true);
    Tensor w = Tensor::randn(5, 4, rng, 1.0, true);
    Tensor bias = Tensor::randn(1, 5, rng, 1.0, true);
    Tensor gamma = Tensor::randn(1, 4, rng, 0.3, true);
    Tensor beta = Tensor::randn(1, 4, rng, 0.3, true);
    Tensor pos = Tensor::randn(3, 4, rng, 0.5, true);
    for (auto& v : pos.values()) v = std::abs(v) + 0.5;
    Tensor sc = Tensor::scalar(1.3, true);
    Tensor table = Tensor::randn(6, 3, rng, 0.7, true);
    Tensor logits = Tensor::randn(3, 5, rng, 0.9, true);
    Tensor probs_in = Tensor::randn(4, 1, rng, 0.8, true);

    track("matmul", grad_check({a, b}, [&](Tape& t) { return sum_all(t, matmul(t, a, b)); }));
    track("matmul_nt",
          grad_check({a, c}, [&](Tape& t) { return sum_all(t, mul(t, matmul_nt(t, a, c), matmul_nt(t, a, c))); }));
    track("transpose", grad_check({a}, [&](Tape& t) {
              return sum_all(t, mul(t, transpose(t, a), transpose(t, a)));
          }));
    track("affine", grad_check({a, w, bias}, [&](Tape& t) {
              return sum_all(t, mul(t, affine(t, a, w, bias), affine(t, a, w, bias)));
          }));
    track("add+mul+scale", grad_check({a, c}, [&](Tape& t) {
              return sum_all(t, scale(t, mul(t, add(t, a, c), c), 0.7));
          }));
    track("scale_by+add_scalar", grad_check({a, sc}, [&](Tape& t) {
              return sum_all(t, add_scalar(t, scale_by(t, a, sc), sc));
          }));
    track("sigmoid", grad_check({a}, [&](Tape& t) { return sum_all(t, sigmoid(t, a)); }));
    track("exp", grad_check({a}, [&](Tape& t) { return sum_all(t, mrg::exp(t, scale(t, a, 0.5))); }));
    track("log_clamped", grad_check({pos}, [&](Tape& t) {
              return sum_all(t, log_clamped(t, pos, 1e-30));
          }));
    track("relu", grad_check({a}, [&](Tape& t) {
              return sum_all(t, mul(t, relu(t, a), a));
          }));
    track("gelu", grad_check({a}, [&](Tape& t) { return sum_all(t, gelu(t, a)); }));
    track("softmax", grad_check({a}, [&](Tape& t) {
              return sum_all(t, mul(t, softmax_rows(t, a), c));
          }));
    track("layer_norm", grad_check({a, gamma, beta}, [&](Tape& t) {
              return sum_all(t, mul(t, layer_norm(t, a, gamma, beta), c));
          }));
    track("reductions", grad_check({a}, [&](Tape& t) {
              Tensor r = reshape(t, a, 4, 3);
              return add(t, mean_all(t, mul(t, r, r)), sum_all(t, mean_rows(t, r)));
          }));
    track("slice+concat", grad_check({a}, [&](Tape& t) {
              Tensor top = slice_rows(t, a, 0, 2);
              Tensor rest = slice_rows(t, a, 2, 3);
              Tensor rt = concat_rows(t, {top, rest});
              return sum_all(t, mul(t, concat_cols(t, {slice_cols(t, rt, 0, 1), slice_cols(t, rt, 1, 4)}), a));
          }));
    track("embedding", grad_check({table}, [&](Tape& t) {
              Tensor rows = embedding_lookup(t, table, {0, 2, 2, 5});
              return sum_all(t, mul(t, rows, rows));
          }));
    track("cross_entropy", grad_check({logits}, [&](Tape& t) {
              return cross_entropy(t, logits, {1, 4, 0});
          }));
    const Tensor bce_labels = Tensor::from_data(4, 1, {1.0, 0.0, 1.0, 0.0});
    track("bce", grad_check({probs_in}, [&](Tape& t) {
              return binary_cross_entropy(t, sigmoid(t, probs_in), bce_labels);
          }));

    // Full composite: entity branch -> classifier -> prompt -> decoder, the
    // exact per-sample training loss. Two variants: (i) status embeddings
    // off, every trainable parameter checked; (ii) status embeddings on,
    // token table excluded (the status-word lookup is detached by design, so
    // perturbing the table moves the loss along a path the analytic gradient
    // deliberately ignores).
    RunConfig rc;
    rc.total = 4;
    rc.scans = 2;
    rc.patches = 2;
    rc.d_s = 3;
    rc.regions = 2;
    rc.lesions = 2;
    rc.d_h = 4;
    rc.d_w = 4;
    rc.kja_heads = 2;
    rc.d_r = 3;
    rc.kja_ffn = 6;
    rc.classifier_hidden = 3;
    rc.dec_layers = 1;
    rc.dec_heads = 2;
    rc.dec_ffn = 6;
    rc.max_len = 48;
    rc.adapter_rank = 2;
    rc.seed = 7;
    for (bool with_status : {false, true}) {
        rc.status_embed = with_status;
        auto [ev, graph] = default_entity_graph(rc.regions, rc.lesions);
        TokenVocab tv = build_token_vocab(ev, rc.instruction);
        Corpus corpus = generate_corpus(rc.corpus_config(), ev, tv);
        cooccurrence_stats(corpus.train, ev.k(), graph);
        Rng mrng(11);
        Model model = Model::init(rc, ev, graph, mrng);
        const SyntheticSample& s = corpus.train[0];
        std::vector<std::vector<double>> labels{
            std::vector<double>(s.labels.begin(), s.labels.end())};
        auto loss_fn = [&](Tape& t) {
            Model::EntityPass pass = model.forward_entities(t, s, true);
            Tensor l_d = classification_loss(t, {pass.preds}, labels);
            Tensor s_e;
            if (model.cfg.status_embed) {
                std::vector<double> e_s = per_entity_loss({pass.preds}, labels);
                s_e = embed_status(t, bucket_all(saturate(e_s)), model.dec.token_table,
                                   model.tvocab);
            }
            MultiModalPrompt prompt = model.build_prompt(t, pass, s_e);
            Tensor logits2 = model.dec.target_logits(t, prompt.embeddings, s.report);
            Tensor l_g = generation_loss(t, logits2, s.report);
            return joint_loss(t, l_g, l_d, model.cfg.lambda);
        };
        std::vector<Tensor> checked_params;
        for (const auto& rec : model.params) {
            if (!rec.trainable) continue;
            if (with_status && rec.name == "decoder.token_table") continue;
            checked_params.push_back(rec.tensor);
        }
        track(with_status ? "composite+status" : "composite",
              grad_check(checked_params, loss_fn));
    }

    const double elapsed = seconds_since(t0);
    Outcome o;
    o.pass = worst < kTol && elapsed < 60.0;
    o.detail = strf("max rel err %.3g (tol 1e-4) over %zu partials, %.1fs (limit 60s)", worst,
                    checked, elapsed);
    if (!o.pass) o.notes.push_back("worst: " + worst_site);
    return o;
}

// ---------------------------------------------------------------------------
// Criterion 2: attention kernels vs naive loop oracles
// ---------------------------------------------------------------------------

Outcome c2_attention_oracles() {
    constexpr double kTol = 1e-10;
    double worst_cross = 0.0, worst_masked = 0.0, worst_decoder = 0.0;
    int cases = 0;
    for (int trial = 0; trial < 100; ++trial) {
        Rng rng(40000 + trial);
        KjaConfig kc;
        kc.d_w = 4;
        kc.d_s = 3;
        kc.d_h = (trial % 2 == 0) ? 4 : 6;
        kc.heads = (trial % 3 == 0) ? 1 : 2;
        kc.d_r = 3;
        kc.ffn = 5;
        KjaParams p = KjaParams::init(kc, rng);
        const int k = 1 + static_cast<int>(rng.below(4));   // entities <= 4
        const int tok = 1 + static_cast<int>(rng.below(6)); // scan tokens <= 6

        // Cross attention block.
        Tensor t_f = Tensor::randn(k + 1, kc.d_w, rng);
        Tensor scan = Tensor::randn(tok, kc.d_s, rng);
        Tape tape;
        NoGradGuard guard(tape);
        worst_cross = std::max(
            worst_cross, max_abs_diff(cross_attend(tape, t_f, scan, p),
                                      naive_cross_block(t_f, scan, p)));

        // Knowledge-masked self-attention block (random binary mask with a
        // guaranteed live diagonal).
        Tensor x = Tensor::randn(k + 1, kc.d_h, rng);
        Tensor mask = Tensor::zeros(k + 1, k + 1);
        for (int i = 0; i <= k; ++i)
            for (int j = 0; j <= k; ++j) mask(i, j) = (i == j || rng.below(2) == 0) ? 1.0 : 0.0;
        worst_masked = std::max(
            worst_masked, max_abs_diff(masked_self_attend(tape, x, mask, p),
                                       naive_masked_block(x, mask, p)));

        // Full causal decoder stack.
        DecoderConfig dc;
        dc.vocab_size = 9;
        dc.d_w = 4;
        dc.layers = 1 + static_cast<int>(rng.below(2));
        dc.heads = 2;
        dc.ffn = 6;
        dc.max_len = 8;
        dc.adapter_rank = 0;
        Decoder dec = Decoder::init(dc, rng);
        Tensor seq = Tensor::randn(1 + static_cast<int>(rng.below(6)), dc.d_w, rng);
        worst_decoder = std::max(
            worst_decoder,
            max_abs_diff(dec.forward_hidden(tape, seq), naive_decoder_hidden(dec, seq)));
        ++cases;
    }
    Outcome o;
    o.pass = worst_cross < kTol && worst_masked < kTol && worst_decoder < kTol;
    o.detail = strf("%d cases: cross %.2e, masked-self %.2e, causal-decoder %.2e (tol 1e-10)",
                    cases, worst_cross, worst_masked, worst_decoder);
    return o;
}

// ---------------------------------------------------------------------------
// Criterion 3: mask semantics
// ---------------------------------------------------------------------------

Outcome c3_mask_semantics() {
    double worst_masked_prob = 0.0;
    double worst_neighbor = 0.0;
    int masked_pairs = 0;
    for (int trial = 0; trial < 60; ++trial) {
        Rng rng(52000 + trial);
        KjaConfig kc;
        kc.d_w = 4;
        kc.d_s = 3;
        kc.d_h = 4;
        kc.heads = 2;
        kc.d_r = 3;
        kc.ffn = 5;
        KjaParams p = KjaParams::init(kc, rng);
        const int k = 1 + static_cast<int>(rng.below(4));
        const int n = k + 1;
        Tensor x = Tensor::randn(n, kc.d_h, rng);
        Tensor mask = Tensor::zeros(n, n);
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j) mask(i, j) = (i == j || rng.below(2) == 0) ? 1.0 : 0.0;

        Tape tape;
        NoGradGuard guard(tape);
        AttentionProbe probe;
        (void)masked_self_attend(tape, x, mask, p, kMaskEps, &probe);
        for (const auto& probs : probe.head_probs)
            for (int i = 0; i < n; ++i)
                for (int j = 0; j < n; ++j)
                    if (mask(i, j) == 0.0) {
                        worst_masked_prob = std::max(worst_masked_prob, probs(i, j));
                        ++masked_pairs;
                    }

        // Single-neighbor row: row n-1 may only see column 0, so its
        // attention output must equal that neighbor's value row pushed
        // through the output projection.
        Tensor single = Tensor::full(n, n, 1.0);
        for (int j = 0; j < n; ++j) single(n - 1, j) = 0.0;
        single(n - 1, 0) = 1.0;
        Tensor bias = log_clamped(tape, single, kMaskEps);
        Tensor att = multi_head_attention(tape, x, x, p.self_attn, &bias);
        Tensor v = naive_affine(x, p.self_attn.wv, p.self_attn.bv);
        Tensor v0 = Tensor::zeros(1, kc.d_h);
        for (int c = 0; c < kc.d_h; ++c) v0(0, c) = v(0, c);
        Tensor expect = naive_affine(v0, p.self_attn.wo, p.self_attn.bo);
        for (int c = 0; c < kc.d_h; ++c)
            worst_neighbor = std::max(worst_neighbor, std::abs(att(n - 1, c) - expect(0, c)));
    }
    Outcome o;
    o.pass = worst_masked_prob < 1e-12 && worst_neighbor < 1e-10;
    o.detail = strf("max masked prob %.2e over %d pairs (tol 1e-12); "
                    "single-neighbor dev %.2e (tol 1e-10)",
                    worst_masked_prob, masked_pairs, worst_neighbor);
    return o;
}

// ---------------------------------------------------------------------------
// Criterion 4: knowledge-matrix invariants
// ---------------------------------------------------------------------------

Outcome c4_knowledge_matrices() {
    // (a) Implicit matrix symmetry and range over 1000 parameter draws.
    double worst_asym = 0.0;
    bool in_range = true;
    for (int trial = 0; trial < 1000; ++trial) {
        Rng rng(61000 + trial);
        KjaConfig kc;
        kc.d_w = 4;
        kc.d_s = 3;
        kc.d_h = 4;
        kc.heads = 2;
        kc.d_r = 3;
        kc.ffn = 5;
        KjaParams p = KjaParams::init(kc, rng);
        const int n = 2 + static_cast<int>(rng.below(4));
        Tensor feats = Tensor::randn(n, kc.d_h, rng, 1.5);
        Tape tape;
        NoGradGuard guard(tape);
        Tensor m_i = predict_implicit(tape, feats, p);
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j) {
                worst_asym = std::max(worst_asym, std::abs(m_i(i, j) - m_i(j, i)));
                in_range = in_range && m_i(i, j) > 0.0 && m_i(i, j) < 1.0;
            }
    }

    // (b) Fused mask arithmetic and (c) inference independence from the
    // evaluation sample's report, end to end through the model.
    RunConfig rc;
    rc.total = 10;
    rc.scans = 2;
    rc.patches = 2;
    rc.d_s = 6;
    rc.regions = 2;
    rc.lesions = 2;
    rc.d_h = 8;
    rc.d_w = 8;
    rc.kja_heads = 2;
    rc.d_r = 6;
    rc.kja_ffn = 12;
    rc.classifier_hidden = 6;
    rc.dec_layers = 1;
    rc.dec_heads = 2;
    rc.dec_ffn = 12;
    rc.max_len = 96;
    rc.adapter_rank = 0;
    rc.seed = 31;
    auto [ev, graph] = default_entity_graph(rc.regions, rc.lesions);
    TokenVocab tv = build_token_vocab(ev, rc.instruction);
    Corpus corpus = generate_corpus(rc.corpus_config(), ev, tv);
    cooccurrence_stats(corpus.train, ev.k(), graph);
    Rng mrng(5);
    Model model = Model::init(rc, ev, graph, mrng);

    double worst_blend = 0.0;
    for (int i = 0; i < 4; ++i) {
        const SyntheticSample& s = corpus.train[static_cast<size_t>(i)];
        Tape tape;
        NoGradGuard guard(tape);
        Model::EntityPass pass = model.forward_entities(tape, s, true);
        Tensor m_e = build_M_E_train(model.evocab, model.graph, s.gt_pairs);
        for (int r = 0; r < m_e.rows(); ++r)
            for (int c = 0; c < m_e.cols(); ++c)
                worst_blend = std::max(worst_blend,
                                       std::abs(pass.m_adj(r, c) -
                                                (0.9 * m_e(r, c) + 0.1 * pass.m_i(r, c))));
    }

    SyntheticSample eval_sample = corpus.test[0];
    SyntheticSample scrubbed = eval_sample;
    scrubbed.report.clear();
    scrubbed.gt_pairs.clear();
    Tape t1, t2;
    NoGradGuard g1(t1), g2(t2);
    const bool leak_free =
        model.forward_entities(t1, eval_sample, false).m_adj.values() ==
        model.forward_entities(t2, scrubbed, false).m_adj.values();

    Outcome o;
    o.pass = worst_asym <= 1e-12 && in_range && worst_blend <= 1e-12 && leak_free;
    o.detail = strf("1000 draws: asym %.2e, range(0,1) %s; blend dev %.2e (tol 1e-12); "
                    "inference mask report-independent %s",
                    worst_asym, in_range ? "ok" : "VIOLATED", worst_blend,
                    leak_free ? "yes" : "NO");
    return o;
}

// ---------------------------------------------------------------------------
// Criterion 5: learning-status scorer invariants
// ---------------------------------------------------------------------------

Outcome c5_scorer() {
    bool pass = true;
    std::string why;

    if (saturate({0.0})[0] != 0.0) { pass = false; why += "saturate(0)!=0; "; }
    if (std::abs(saturate({std::log(2.0)})[0] - 0.5) > 1e-12) {
        pass = false;
        why += "saturate(ln2)!=0.5; ";
    }

    const struct { double score; const char* word; } table[] = {
        {0.0, "proficient"}, {0.19, "proficient"}, {0.2, "good"},  {0.39, "good"},
        {0.4, "moderate"},   {0.59, "moderate"},   {0.6, "limited"}, {0.79, "limited"},
        {0.8, "poor"},       {1.0, "poor"},
    };
    for (const auto& row : table)
        if (bucket(row.score) != row.word) {
            pass = false;
            why += strf("bucket(%g)=%s want %s; ", row.score, bucket(row.score).c_str(), row.word);
        }

    double worst_sum = 0.0;
    for (int trial = 0; trial < 200; ++trial) {
        Rng rng(73000 + trial);
        const int k = 1 + static_cast<int>(rng.below(6));
        const int batch = 1 + static_cast<int>(rng.below(3));
        std::vector<Tensor> preds;
        std::vector<std::vector<double>> labels;
        Tape tape;
        NoGradGuard guard(tape);
        for (int b = 0; b < batch; ++b) {
            Tensor logit = Tensor::randn(k, 1, rng, 1.0);
            preds.push_back(sigmoid(tape, logit));
            std::vector<double> row;
            for (int i = 0; i < k; ++i) row.push_back(static_cast<double>(rng.below(2)));
            labels.push_back(row);
        }
        const std::vector<double> e_s = per_entity_loss(preds, labels);
        double sum = 0.0;
        for (double v : e_s) sum += v;
        const double l_d = classification_loss(tape, preds, labels).item();
        worst_sum = std::max(worst_sum, std::abs(sum - k * l_d));
    }
    if (worst_sum > 1e-10) { pass = false; why += strf("sum dev %.2e; ", worst_sum); }

    Outcome o;
    o.pass = pass;
    o.detail = pass ? strf("saturate anchors exact; 10 bucket boundaries; "
                           "sum(e_s)=k*L_d dev %.2e over 200 draws (tol 1e-10)",
                           worst_sum)
                    : why;
    return o;
}

// ---------------------------------------------------------------------------
// Criterion 6: overfit sanity
// ---------------------------------------------------------------------------

RunConfig overfit_config() {
    RunConfig rc;
    rc.total = 32;
    rc.scans = 4;
    rc.patches = 4;
    rc.d_s = 32;
    rc.regions = 4;
    rc.lesions = 4;  // k = 8
    rc.d_h = 64;
    rc.d_w = 64;
    rc.kja_heads = 8;
    rc.d_r = 32;
    rc.kja_ffn = 128;
    rc.classifier_hidden = 32;
    rc.dec_layers = 2;
    rc.dec_heads = 4;
    rc.dec_ffn = 128;
    rc.max_len = 128;
    rc.adapter_rank = 4;
    rc.lr = 1e-3;
    rc.batch = 8;
    rc.seed = 606;
    return rc;
}

/// Exact-position token accuracy of greedy reconstructions over a sample set.
double greedy_token_accuracy(const Model& model, const std::vector<SyntheticSample>& samples) {
    size_t hits = 0, total = 0;
    for (const auto& s : samples) {
        const std::vector<int> gen = generate_report(model, s, GenerationMode::greedy_mode());
        total += s.report.size();
        for (size_t i = 0; i < s.report.size() && i < gen.size(); ++i)
            if (gen[i] == s.report[i]) ++hits;
    }
    return total == 0 ? 0.0 : static_cast<double>(hits) / static_cast<double>(total);
}

Outcome c6_overfit() {
    const auto t0 = std::chrono::steady_clock::now();
    RunConfig rc = overfit_config();
    auto [ev, graph] = default_entity_graph(rc.regions, rc.lesions);
    TokenVocab tv = build_token_vocab(ev, rc.instruction);
    Corpus corpus = generate_corpus(rc.corpus_config(), ev, tv);
    std::vector<SyntheticSample> all;
    for (const auto& s : corpus.train) all.push_back(s);
    for (const auto& s : corpus.test) all.push_back(s);
    for (const auto& s : corpus.val) all.push_back(s);
    cooccurrence_stats(all, ev.k(), graph);

    Rng mrng(Rng::mix(rc.seed, fnv1a64("overfit")));
    Model model = Model::init(rc, ev, graph, mrng);
    AdamW opt(trainable_tensors(model.params), rc.adamw_config());
    Rng shuffle(Rng::mix(rc.seed, fnv1a64("shuffle")));

    std::vector<size_t> order(all.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;

    double epoch_gen = 0.0, accuracy = 0.0;
    int epoch = 0;
    bool met = false;
    for (epoch = 1; epoch <= 200 && !met; ++epoch) {
        for (size_t i = order.size(); i > 1; --i)
            std::swap(order[i - 1], order[shuffle.below(i)]);
        double sum_gen = 0.0;
        int steps = 0;
        for (size_t start = 0; start < all.size(); start += static_cast<size_t>(rc.batch)) {
            std::vector<const SyntheticSample*> batch;
            for (size_t j = start; j < std::min(all.size(), start + static_cast<size_t>(rc.batch)); ++j)
                batch.push_back(&all[order[j]]);
            sum_gen += train_batch(model, opt, batch).gen_loss;
            ++steps;
        }
        epoch_gen = sum_gen / steps;
        if (epoch_gen < 0.1) {
            accuracy = greedy_token_accuracy(model, all);
            met = accuracy >= 0.95;
        }
    }
    const double elapsed = seconds_since(t0);

    Outcome o;
    o.pass = met && elapsed < 600.0;
    o.detail = strf("L_g %.4f (<0.1) and token accuracy %.1f%% (>=95%%) after %d epochs "
                    "(limit 200), %.0fs (limit 600s)",
                    epoch_gen, accuracy * 100.0, met ? epoch - 1 : epoch, elapsed);
    return o;
}

// ---------------------------------------------------------------------------
// Criteria 7 and 8: ablation arms on the imbalanced corpus
// ---------------------------------------------------------------------------

struct ArmResult {
    double f1 = 0.0;
    double f1_variance = 0.0;
    double cider_score = 0.0;
    double bleu = 0.0;
};

RunConfig trend_config(uint64_t seed) {
    RunConfig rc = overfit_config();
    rc.total = 600;  // built-in prevalence ramp 0.9 -> 0.05 over k=8
    rc.epochs = 8;
    rc.lr = 1e-3;
    rc.batch = 8;
    rc.seed = seed;
    return rc;
}

ArmResult run_arm(const RunConfig& cfg, const std::string& data_dir, const std::string& run_dir) {
    TrainResult tr = run_train(cfg, data_dir, run_dir);
    EvalResult ev = run_eval(tr.checkpoint_path.string(), data_dir + "/test.mdata",
                             run_dir + "/eval");
    return {ev.keywords.f1, ev.keywords.f1_variance, ev.cider_score, ev.bleu};
}

struct TrendOutputs {
    std::string seed1_data;
    bool have_full_seed1 = false;
    ArmResult full_seed1;
};
TrendOutputs g_trend;

Outcome c7_balanced_trend() {
    const auto t0 = std::chrono::steady_clock::now();
    const uint64_t seeds[3] = {101, 202, 303};
    double full_f1 = 0.0, base_f1 = 0.0, full_var = 0.0, entity_var = 0.0;
    Outcome o;
    for (int si = 0; si < 3; ++si) {
        RunConfig base = trend_config(seeds[si]);
        const std::string data_dir = (g_work / strf("trend-data-%d", si)).string();
        run_gen_data(base, data_dir);
        if (si == 0) g_trend.seed1_data = data_dir;

        RunConfig cfg_full = base;  // entity + status + both masks
        RunConfig cfg_baseline = base;  // scan prompt only
        cfg_baseline.entity_embed = false;
        cfg_baseline.status_embed = false;
        RunConfig cfg_entity = base;  // entity embeds alone: no status, all-ones mask
        cfg_entity.status_embed = false;
        cfg_entity.use_m_e = false;
        cfg_entity.use_m_i = false;

        ArmResult full = run_arm(cfg_full, data_dir, (g_work / strf("trend-full-%d", si)).string());
        ArmResult baseline =
            run_arm(cfg_baseline, data_dir, (g_work / strf("trend-base-%d", si)).string());
        ArmResult entity =
            run_arm(cfg_entity, data_dir, (g_work / strf("trend-entity-%d", si)).string());
        if (si == 0) {
            g_trend.full_seed1 = full;
            g_trend.have_full_seed1 = true;
        }
        full_f1 += full.f1 / 3.0;
        base_f1 += baseline.f1 / 3.0;
        full_var += full.f1_variance / 3.0;
        entity_var += entity.f1_variance / 3.0;
        o.notes.push_back(strf(
            "seed %llu: F1 full %.3f / entity-only %.3f / baseline %.3f; "
            "per-entity F1 variance full %.4f / entity-only %.4f",
            static_cast<unsigned long long>(seeds[si]), full.f1, entity.f1, baseline.f1,
            full.f1_variance, entity.f1_variance));
    }
    const double elapsed = seconds_since(t0);
    const bool f1_up = full_f1 > base_f1;
    const bool var_down = full_var < entity_var;
    o.pass = f1_up && var_down && elapsed < 3600.0;
    o.detail = strf("mean F1 full %.3f vs baseline %.3f (%s); mean per-entity variance "
                    "full %.4f vs entity-only %.4f (%s); %.0fs (limit 3600s)",
                    full_f1, base_f1, f1_up ? "higher" : "NOT higher", full_var, entity_var,
                    var_down ? "lower" : "NOT lower", elapsed);
    return o;
}

Outcome c8_category_arm() {
    Outcome o;
    if (!g_trend.have_full_seed1) {
        // Criterion 7 did not run first (subset invocation): build the seed-1
        // data and status arm here so the comparison is still honest.
        RunConfig base = trend_config(101);
        g_trend.seed1_data = (g_work / "trend-data-0").string();
        if (!fs::exists(g_trend.seed1_data + "/train.mdata"))
            run_gen_data(base, g_trend.seed1_data);
        g_trend.full_seed1 =
            run_arm(base, g_trend.seed1_data, (g_work / "trend-full-0").string());
        g_trend.have_full_seed1 = true;
    }
    RunConfig cat = trend_config(101);
    cat.status_embed = false;
    cat.category_words = true;
    ArmResult category =
        run_arm(cat, g_trend.seed1_data, (g_work / "trend-category-0").string());
    const ArmResult& status = g_trend.full_seed1;
    o.pass = true;  // runnable + reported side by side; direction is a logged expectation
    o.detail = strf("status arm F1 %.3f CIDEr %.3f vs category arm F1 %.3f CIDEr %.3f",
                    status.f1, status.cider_score, category.f1, category.cider_score);
    o.notes.push_back(strf(
        "soft expectation (status >= category on F1): %s",
        status.f1 >= category.f1 ? "observed" : "not observed at this scale (logged, not gated)"));
    return o;
}

// ---------------------------------------------------------------------------
// Criterion 9: metric kernels vs frozen hand-computed oracles
// ---------------------------------------------------------------------------

Outcome c9_metrics() {
    constexpr double kTol = 1e-9;
    const std::vector<EvalPair> golden = {
        {1, {1, 2, 101, 3, 4, 102, 5}, {1, 2, 101, 3, 4, 102, 5}},
        {2, {1, 2, 103, 3, 6, 9, 8}, {1, 2, 101, 3, 6, 7, 8}},
        {3, {10, 11, 12, 104, 14}, {10, 11, 12, 13, 104, 14}},
        {4, {18, 17, 16, 15}, {15, 16, 17, 18}},
        {5, {1, 3, 5, 101, 102, 2, 2, 104}, {1, 3, 5, 101, 102, 103, 104, 2}},
    };
    struct Check {
        const char* name;
        double got, want;
    } checks[] = {
        {"bleu4", bleu4(golden), 0.52087400438295139},
        {"rouge_l", rouge_l(golden), 0.7217427733556766},
        {"cider", cider(golden), 4.9805977845722236},
        {"meteor_lite", meteor_lite(golden), 0.75931706774719565},
    };
    bool pass = true;
    double worst = 0.0;
    std::string why;
    for (const auto& c : checks) {
        const double dev = std::abs(c.got - c.want);
        worst = std::max(worst, dev);
        if (dev > kTol) {
            pass = false;
            why += strf("%s %.17g != %.17g; ", c.name, c.got, c.want);
        }
    }

    const std::vector<EvalPair> same = {
        {1, {5, 6, 7, 8, 9}, {5, 6, 7, 8, 9}},
        {2, {3, 3, 4, 2}, {3, 3, 4, 2}},
    };
    if (bleu4(same) != 1.0) { pass = false; why += "bleu4 max; "; }
    if (rouge_l(same) != 1.0) { pass = false; why += "rouge max; "; }
    if (cider(same) != 10.0) { pass = false; why += "cider max; "; }

    Outcome o;
    o.pass = pass;
    o.detail = pass ? strf("4 golden kernels dev %.2e (tol 1e-9); maxima 1.0/1.0/10.0 exact",
                           worst)
                    : why;
    return o;
}

// ---------------------------------------------------------------------------
// Criterion 10: bitwise determinism of train + eval
// ---------------------------------------------------------------------------

Outcome c10_determinism() {
    RunConfig rc;
    rc.total = 20;
    rc.scans = 3;
    rc.patches = 2;
    rc.d_s = 8;
    rc.regions = 2;
    rc.lesions = 2;
    rc.d_h = 16;
    rc.d_w = 16;
    rc.kja_heads = 2;
    rc.d_r = 8;
    rc.kja_ffn = 24;
    rc.classifier_hidden = 8;
    rc.dec_layers = 1;
    rc.dec_heads = 2;
    rc.dec_ffn = 24;
    rc.max_len = 128;
    rc.adapter_rank = 2;
    rc.lr = 1e-3;
    rc.epochs = 2;
    rc.batch = 4;
    rc.seed = 1234;

    auto one_run = [&](const std::string& tag) {
        const std::string data = (g_work / (tag + "-data")).string();
        const std::string run = (g_work / (tag + "-run")).string();
        run_gen_data(rc, data);
        TrainResult tr = run_train(rc, data, run);
        run_eval(tr.checkpoint_path.string(), data + "/test.mdata", run + "/eval");
        return run;
    };
    const std::string a = one_run("det-a");
    const std::string b = one_run("det-b");

    bool pass = true;
    std::string diffs;
    for (const char* rel : {"/checkpoint.bin", "/training_log.csv", "/status_log.csv",
                            "/val_log.csv", "/manifest.txt", "/eval/metrics.csv",
                            "/eval/entity_f1.csv", "/eval/generations.txt"}) {
        if (read_file(a + rel) != read_file(b + rel)) {
            pass = false;
            diffs += std::string(rel) + " ";
        }
    }
    Outcome o;
    o.pass = pass;
    o.detail = pass ? "checkpoint, logs, manifest, and eval CSVs byte-identical across two runs"
                    : "differs: " + diffs;
    return o;
}

// ---------------------------------------------------------------------------
// Criterion 11: low-rank adapter correctness
// ---------------------------------------------------------------------------

size_t predicted_trainable(const RunConfig& c, int vocab_size) {
    auto mha = [](int d_model, int d_q, int d_kv) {
        return static_cast<size_t>(d_model) * d_q + d_model +      // wq, bq
               2 * (static_cast<size_t>(d_model) * d_kv + d_model) +  // wk/bk, wv/bv
               static_cast<size_t>(d_model) * d_model + d_model;   // wo, bo
    };
    size_t n = 0;
    // Joint-attention stage.
    n += mha(c.d_h, c.d_w, c.d_s);                                      // cross attention
    n += 2 * (static_cast<size_t>(c.kja_ffn) * c.d_h) + c.kja_ffn + c.d_h;  // cross FFN
    n += static_cast<size_t>(c.d_r) * c.d_h + c.d_r + 2;                // relation proj + scalars
    n += mha(c.d_h, c.d_h, c.d_h);                                      // masked self-attention
    n += 2 * (static_cast<size_t>(c.kja_ffn) * c.d_h) + c.kja_ffn + c.d_h;  // self FFN
    n += 4 * static_cast<size_t>(c.d_h);                                // two layer norms
    n += static_cast<size_t>(c.d_w) * c.d_h + c.d_w;                    // entity projection
    // Presence classifier.
    n += static_cast<size_t>(c.classifier_hidden) * c.d_h + c.classifier_hidden +
         c.classifier_hidden + 1;
    // Scan adaptor.
    n += static_cast<size_t>(c.d_s) * (c.patches * c.d_s) + c.d_s +
         static_cast<size_t>(c.d_w) * c.d_s + c.d_w;
    // Decoder.
    n += 2 * static_cast<size_t>(vocab_size) * c.d_w;        // token table + untied head
    n += static_cast<size_t>(c.max_len) * c.d_w;             // positions
    const size_t attn_per_block =
        c.adapter_rank > 0 ? 4 * 2 * static_cast<size_t>(c.adapter_rank) * c.d_w
                           : 4 * static_cast<size_t>(c.d_w) * c.d_w;
    n += static_cast<size_t>(c.dec_layers) *
         (attn_per_block + 4 * static_cast<size_t>(c.d_w) +
          2 * static_cast<size_t>(c.dec_ffn) * c.d_w + c.dec_ffn + c.d_w);
    n += 2 * static_cast<size_t>(c.d_w);                     // final layer norm
    return n;
}

uint64_t frozen_hash(const ParamList& params) {
    Fnv1a64 h;
    for (const auto& rec : params) {
        if (rec.trainable) continue;
        h.update(rec.name);
        h.update(rec.tensor.values().data(), rec.tensor.values().size() * sizeof(double));
    }
    return h.digest();
}

Outcome c11_adapter() {
    // (a) Zero-initialized B: the adapted forward equals the frozen base.
    Rng rng(88);
    DecoderConfig dc;
    dc.vocab_size = 12;
    dc.d_w = 8;
    dc.layers = 2;
    dc.heads = 2;
    dc.ffn = 12;
    dc.max_len = 10;
    dc.adapter_rank = 3;
    Decoder adapted = Decoder::init(dc, rng);
    Decoder plain = adapted;  // shares every tensor handle
    plain.cfg.adapter_rank = 0;
    for (auto& blk : plain.blocks) {
        blk.wq.rank = 0;
        blk.wk.rank = 0;
        blk.wv.rank = 0;
        blk.wo.rank = 0;
    }
    Tensor seq = Tensor::randn(6, dc.d_w, rng);
    Tape tape;
    NoGradGuard guard(tape);
    const bool identity =
        adapted.forward_hidden(tape, seq).values() == plain.forward_hidden(tape, seq).values();

    // (b) Training moves only unfrozen parameters; (c) the trainable count
    // matches the closed-form prediction from the configuration.
    RunConfig rc;
    rc.total = 8;
    rc.scans = 2;
    rc.patches = 2;
    rc.d_s = 8;
    rc.regions = 2;
    rc.lesions = 2;
    rc.d_h = 16;
    rc.d_w = 16;
    rc.kja_heads = 2;
    rc.d_r = 8;
    rc.kja_ffn = 24;
    rc.classifier_hidden = 8;
    rc.dec_layers = 2;
    rc.dec_heads = 2;
    rc.dec_ffn = 24;
    rc.max_len = 96;
    rc.adapter_rank = 2;
    rc.lr = 1e-3;
    rc.seed = 99;
    auto [ev, graph] = default_entity_graph(rc.regions, rc.lesions);
    TokenVocab tv = build_token_vocab(ev, rc.instruction);
    Corpus corpus = generate_corpus(rc.corpus_config(), ev, tv);
    cooccurrence_stats(corpus.train, ev.k(), graph);
    Rng mrng(17);
    Model model = Model::init(rc, ev, graph, mrng);

    const size_t predicted = predicted_trainable(rc, tv.size());
    const size_t actual = trainable_count(model.params);

    const uint64_t frozen_before = frozen_hash(model.params);
    std::vector<double> lora_before;
    for (const auto& rec : model.params)
        if (rec.name.find("lora_") != std::string::npos)
            for (double v : rec.tensor.values()) lora_before.push_back(v);

    AdamW opt(trainable_tensors(model.params), rc.adamw_config());
    std::vector<const SyntheticSample*> batch;
    for (const auto& s : corpus.train) batch.push_back(&s);
    for (int step = 0; step < 3; ++step) train_batch(model, opt, batch);

    const uint64_t frozen_after = frozen_hash(model.params);
    std::vector<double> lora_after;
    for (const auto& rec : model.params)
        if (rec.name.find("lora_") != std::string::npos)
            for (double v : rec.tensor.values()) lora_after.push_back(v);

    const bool frozen_ok = frozen_before == frozen_after;
    const bool lora_moved = lora_before != lora_after;
    const bool count_ok = predicted == actual;

    Outcome o;
    o.pass = identity && frozen_ok && lora_moved && count_ok;
    o.detail = strf("zero-B identity %s; frozen hash %sequal after 3 steps (adapters %s); "
                    "trainable %zu == predicted %zu %s",
                    identity ? "exact" : "BROKEN", frozen_ok ? "" : "NOT ",
                    lora_moved ? "moved" : "DID NOT MOVE", actual, predicted,
                    count_ok ? "" : "MISMATCH");
    return o;
}

} // namespace

int main(int argc, char** argv) {
    struct Entry {
        int id;
        const char* name;
        Outcome (*fn)();
    };
    const Entry entries[] = {
        {1, "autodiff-gradient-checks", c1_gradients},
        {2, "attention-loop-oracles", c2_attention_oracles},
        {3, "mask-semantics", c3_mask_semantics},
        {4, "knowledge-matrix-invariants", c4_knowledge_matrices},
        {5, "status-scorer-invariants", c5_scorer},
        {6, "overfit-sanity", c6_overfit},
        {7, "balanced-learning-trend", c7_balanced_trend},
        {8, "category-prompt-comparison", c8_category_arm},
        {9, "metric-kernel-oracles", c9_metrics},
        {10, "bitwise-determinism", c10_determinism},
        {11, "adapter-correctness", c11_adapter},
    };

    std::set<int> selected;
    for (int i = 1; i < argc; ++i) selected.insert(std::atoi(argv[i]));

    g_work = fs::temp_directory_path() / strf("mrg-acceptance-%d", static_cast<int>(::getpid()));
    fs::create_directories(g_work);

    int failures = 0;
    const auto t0 = std::chrono::steady_clock::now();
    for (const auto& e : entries) {
        if (!selected.empty() && !selected.count(e.id)) continue;
        Outcome o;
        try {
            o = e.fn();
        } catch (const std::exception& ex) {
            o.pass = false;
            o.detail = strf("exception: %s", ex.what());
        }
        std::printf("%s %2d %-28s %s\n", o.pass ? "PASS" : "FAIL", e.id, e.name,
                    o.detail.c_str());
        for (const auto& n : o.notes) std::printf("        - %s\n", n.c_str());
        std::fflush(stdout);
        if (!o.pass) ++failures;
    }
    std::printf("%s: %d criterion(s) failed, %.0fs total\n", failures == 0 ? "OK" : "FAILED",
                failures, seconds_since(t0));

    std::error_code ec;
    fs::remove_all(g_work, ec);
    return failures == 0 ? 0 : 1;
}
