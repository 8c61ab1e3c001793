#pragma once

#include <cmath>
#include <optional>

#include "mrg/ops.hpp"
#include "mrg/params.hpp"
#include "mrg/rng.hpp"

namespace mrg {

enum class Activation { gelu, relu };

inline Activation parse_activation(const std::string& s) {
    if (s == "gelu") return Activation::gelu;
    if (s == "relu") return Activation::relu;
    throw ParseError(strf("unknown activation '%s'", s.c_str()));
}

inline const char* activation_name(Activation a) {
    return a == Activation::gelu ? "gelu" : "relu";
}

inline Tensor activate(Tape& tape, const Tensor& x, Activation act) {
    return act == Activation::gelu ? gelu(tape, x) : relu(tape, x);
}

// ---------------------------------------------------------------------------
// Shared multi-head attention kernel
// ---------------------------------------------------------------------------

/// Captures per-head attention probability matrices (detached) for
/// inspection and oracle tests.
struct AttentionProbe {
    std::vector<Tensor> head_probs;
};

struct MhaParams {
    Tensor wq, bq;  // d_model x d_q_in
    Tensor wk, bk;  // d_model x d_kv_in
    Tensor wv, bv;
    Tensor wo, bo;  // d_model x d_model
    int heads = 1;

    static MhaParams init(int d_model, int d_q_in, int d_kv_in, int heads, Rng& rng) {
        if (heads < 1 || d_model % heads != 0)
            throw Error(strf("attention: width %d not divisible by %d heads", d_model, heads));
        MhaParams p;
        p.heads = heads;
        p.wq = Tensor::randn(d_model, d_q_in, rng, 1.0 / std::sqrt(d_q_in), true);
        p.bq = Tensor::zeros(1, d_model, true);
        p.wk = Tensor::randn(d_model, d_kv_in, rng, 1.0 / std::sqrt(d_kv_in), true);
        p.bk = Tensor::zeros(1, d_model, true);
        p.wv = Tensor::randn(d_model, d_kv_in, rng, 1.0 / std::sqrt(d_kv_in), true);
        p.bv = Tensor::zeros(1, d_model, true);
        p.wo = Tensor::randn(d_model, d_model, rng, 1.0 / std::sqrt(d_model), true);
        p.bo = Tensor::zeros(1, d_model, true);
        return p;
    }

    void collect(ParamList& out, const std::string& prefix) const {
        add_param(out, prefix + ".wq", wq);
        add_param(out, prefix + ".bq", bq);
        add_param(out, prefix + ".wk", wk);
        add_param(out, prefix + ".bk", bk);
        add_param(out, prefix + ".wv", wv);
        add_param(out, prefix + ".bv", bv);
        add_param(out, prefix + ".wo", wo);
        add_param(out, prefix + ".bo", bo);
    }
};

/// Multi-head attention with queries from `q_in` and keys/values from
/// `kv_in`. `additive_bias`, when given, is added to every head's pre-softmax
/// scores (the knowledge-mask hook).
inline Tensor multi_head_attention(Tape& tape, const Tensor& q_in, const Tensor& kv_in,
                                   const MhaParams& p, const Tensor* additive_bias = nullptr,
                                   AttentionProbe* probe = nullptr) {
    const int d_model = p.wq.rows();
    if (additive_bias &&
        (additive_bias->rows() != q_in.rows() || additive_bias->cols() != kv_in.rows()))
        throw ShapeError(strf("attention bias %s vs scores %dx%d",
                              additive_bias->shape_str().c_str(), q_in.rows(), kv_in.rows()));
    Tensor q = affine(tape, q_in, p.wq, p.bq);
    Tensor k = affine(tape, kv_in, p.wk, p.bk);
    Tensor v = affine(tape, kv_in, p.wv, p.bv);
    const int dh = d_model / p.heads;
    const double inv_sqrt_dh = 1.0 / std::sqrt(static_cast<double>(dh));
    std::vector<Tensor> head_outs;
    head_outs.reserve(p.heads);
    for (int h = 0; h < p.heads; ++h) {
        Tensor qh = slice_cols(tape, q, h * dh, (h + 1) * dh);
        Tensor kh = slice_cols(tape, k, h * dh, (h + 1) * dh);
        Tensor vh = slice_cols(tape, v, h * dh, (h + 1) * dh);
        Tensor scores = scale(tape, matmul_nt(tape, qh, kh), inv_sqrt_dh);
        if (additive_bias) scores = add(tape, scores, *additive_bias);
        Tensor probs = softmax_rows(tape, scores);
        if (probe) probe->head_probs.push_back(probs.detached_copy());
        head_outs.push_back(matmul(tape, probs, vh));
    }
    Tensor merged = concat_cols(tape, std::span<const Tensor>(head_outs));
    return affine(tape, merged, p.wo, p.bo);
}

// ---------------------------------------------------------------------------
// Knowledge-driven joint attention
// ---------------------------------------------------------------------------

struct KjaConfig {
    int d_w = 64;    // decoder embedding width (query input)
    int d_s = 32;    // scan feature width (key/value input)
    int d_h = 64;    // attention width
    int heads = 8;
    int d_r = 64;    // relation projector width
    int ffn = 256;
    Activation act = Activation::gelu;
};

struct KjaParams {
    KjaConfig cfg;
    MhaParams cross;          // entity text -> scan features
    Tensor cross_ffn_w1, cross_ffn_b1, cross_ffn_w2, cross_ffn_b2;
    Tensor w_re, b_re;        // relation projector d_h -> d_r
    Tensor w_rp, b_rp;        // scalar scale/shift on the relation Gram matrix
    MhaParams self_attn;      // knowledge-masked self-attention
    Tensor self_ffn_w1, self_ffn_b1, self_ffn_w2, self_ffn_b2;
    Tensor ln1_gamma, ln1_beta, ln2_gamma, ln2_beta;
    Tensor proj_w, proj_b;    // entity projection d_h -> d_w

    static KjaParams init(const KjaConfig& cfg, Rng& rng) {
        if (cfg.heads < 1 || cfg.d_h % cfg.heads != 0)
            throw Error(strf("kja: d_h %d not divisible by %d heads", cfg.d_h, cfg.heads));
        KjaParams p;
        p.cfg = cfg;
        p.cross = MhaParams::init(cfg.d_h, cfg.d_w, cfg.d_s, cfg.heads, rng);
        p.cross_ffn_w1 = Tensor::randn(cfg.ffn, cfg.d_h, rng, 1.0 / std::sqrt(cfg.d_h), true);
        p.cross_ffn_b1 = Tensor::zeros(1, cfg.ffn, true);
        p.cross_ffn_w2 = Tensor::randn(cfg.d_h, cfg.ffn, rng, 1.0 / std::sqrt(cfg.ffn), true);
        p.cross_ffn_b2 = Tensor::zeros(1, cfg.d_h, true);
        p.w_re = Tensor::randn(cfg.d_r, cfg.d_h, rng, 1.0 / std::sqrt(cfg.d_h), true);
        p.b_re = Tensor::zeros(1, cfg.d_r, true);
        p.w_rp = Tensor::scalar(1.0 / std::sqrt(static_cast<double>(cfg.d_r)), true);
        p.b_rp = Tensor::scalar(0.0, true);
        p.self_attn = MhaParams::init(cfg.d_h, cfg.d_h, cfg.d_h, cfg.heads, rng);
        p.self_ffn_w1 = Tensor::randn(cfg.ffn, cfg.d_h, rng, 1.0 / std::sqrt(cfg.d_h), true);
        p.self_ffn_b1 = Tensor::zeros(1, cfg.ffn, true);
        p.self_ffn_w2 = Tensor::randn(cfg.d_h, cfg.ffn, rng, 1.0 / std::sqrt(cfg.ffn), true);
        p.self_ffn_b2 = Tensor::zeros(1, cfg.d_h, true);
        p.ln1_gamma = Tensor::full(1, cfg.d_h, 1.0, true);
        p.ln1_beta = Tensor::zeros(1, cfg.d_h, true);
        p.ln2_gamma = Tensor::full(1, cfg.d_h, 1.0, true);
        p.ln2_beta = Tensor::zeros(1, cfg.d_h, true);
        p.proj_w = Tensor::randn(cfg.d_w, cfg.d_h, rng, 1.0 / std::sqrt(cfg.d_h), true);
        p.proj_b = Tensor::zeros(1, cfg.d_w, true);
        return p;
    }

    void collect(ParamList& out, const std::string& prefix) const {
        cross.collect(out, prefix + ".cross");
        add_param(out, prefix + ".cross_ffn.w1", cross_ffn_w1);
        add_param(out, prefix + ".cross_ffn.b1", cross_ffn_b1);
        add_param(out, prefix + ".cross_ffn.w2", cross_ffn_w2);
        add_param(out, prefix + ".cross_ffn.b2", cross_ffn_b2);
        add_param(out, prefix + ".relation.w_re", w_re);
        add_param(out, prefix + ".relation.b_re", b_re);
        add_param(out, prefix + ".relation.w_rp", w_rp);
        add_param(out, prefix + ".relation.b_rp", b_rp);
        self_attn.collect(out, prefix + ".self");
        add_param(out, prefix + ".self_ffn.w1", self_ffn_w1);
        add_param(out, prefix + ".self_ffn.b1", self_ffn_b1);
        add_param(out, prefix + ".self_ffn.w2", self_ffn_w2);
        add_param(out, prefix + ".self_ffn.b2", self_ffn_b2);
        add_param(out, prefix + ".ln1.gamma", ln1_gamma);
        add_param(out, prefix + ".ln1.beta", ln1_beta);
        add_param(out, prefix + ".ln2.gamma", ln2_gamma);
        add_param(out, prefix + ".ln2.beta", ln2_beta);
        add_param(out, prefix + ".proj.w", proj_w);
        add_param(out, prefix + ".proj.b", proj_b);
    }
};

/// Additive attention bias applied for all masked-out pairs; exp(log eps)
/// drives their post-softmax probability below 1e-12 for binary masks.
inline constexpr double kMaskEps = 1e-30;

/// Cross attention from entity text features ((k+1) x d_w) into flattened
/// scan tokens (n_tok x d_s), followed by a plain feed-forward block.
inline Tensor cross_attend(Tape& tape, const Tensor& t_f, const Tensor& scan_tokens,
                           const KjaParams& p, AttentionProbe* probe = nullptr) {
    if (t_f.cols() != p.cfg.d_w)
        throw ShapeError(strf("cross_attend: entity features %s, expected width %d",
                              t_f.shape_str().c_str(), p.cfg.d_w));
    if (scan_tokens.cols() != p.cfg.d_s)
        throw ShapeError(strf("cross_attend: scan tokens %s, expected width %d",
                              scan_tokens.shape_str().c_str(), p.cfg.d_s));
    Tensor mha = multi_head_attention(tape, t_f, scan_tokens, p.cross, nullptr, probe);
    Tensor hidden = activate(tape, affine(tape, mha, p.cross_ffn_w1, p.cross_ffn_b1), p.cfg.act);
    return affine(tape, hidden, p.cross_ffn_w2, p.cross_ffn_b2);
}

/// Floor keeping implicit-adjacency entries strictly inside (0,1): a
/// saturated sigmoid rounds to exactly 0.0 or 1.0 in double precision, and an
/// exact zero would erase an edge from the fused mask outright.
constexpr double kImplicitFloor = 1e-9;

/// Implicit relation matrix: sigmoid(w_rp * (R_e R_e^T) + b_rp), symmetric by
/// construction since w_rp and b_rp are scalars. The raw sigmoid is squeezed
/// affinely into [kImplicitFloor, 1 - kImplicitFloor].
inline Tensor predict_implicit(Tape& tape, const Tensor& t_f_prime, const KjaParams& p) {
    Tensor r_e = affine(tape, t_f_prime, p.w_re, p.b_re);
    Tensor gram = matmul_nt(tape, r_e, r_e);
    Tensor sig = sigmoid(tape, add_scalar(tape, scale_by(tape, gram, p.w_rp), p.b_rp));
    return add_scalar(tape, scale(tape, sig, 1.0 - 2.0 * kImplicitFloor),
                      Tensor::scalar(kImplicitFloor));
}

/// Knowledge-masked self-attention block with post-norm residuals:
///   e_att = LN(KSA(T'_f, M_adj) + T'_f);  E_f = LN(FFN(e_att) + e_att).
inline Tensor masked_self_attend(Tape& tape, const Tensor& t_f_prime, const Tensor& m_adj,
                                 const KjaParams& p, double eps = kMaskEps,
                                 AttentionProbe* probe = nullptr) {
    const int n = t_f_prime.rows();
    if (m_adj.rows() != n || m_adj.cols() != n)
        throw ShapeError(strf("masked_self_attend: mask %s vs %d entities",
                              m_adj.shape_str().c_str(), n));
    for (int i = 0; i < n; ++i) {
        double row_max = 0.0;
        for (int j = 0; j < n; ++j) row_max = std::max(row_max, m_adj(i, j));
        if (row_max <= eps)
            throw NumericError(strf("masked_self_attend: mask row %d entirely below eps", i));
    }
    Tensor bias = log_clamped(tape, m_adj, eps);
    Tensor ksa = multi_head_attention(tape, t_f_prime, t_f_prime, p.self_attn, &bias, probe);
    Tensor e_att = layer_norm(tape, add(tape, ksa, t_f_prime), p.ln1_gamma, p.ln1_beta);
    Tensor hidden = activate(tape, affine(tape, e_att, p.self_ffn_w1, p.self_ffn_b1), p.cfg.act);
    Tensor ffn_out = affine(tape, hidden, p.self_ffn_w2, p.self_ffn_b2);
    return layer_norm(tape, add(tape, ffn_out, e_att), p.ln2_gamma, p.ln2_beta);
}

/// Drop the global row and project the remaining entity features into the
/// decoder embedding space: (k+1) x d_h -> k x d_w.
inline Tensor project_entities(Tape& tape, const Tensor& e_f, const KjaParams& p) {
    if (e_f.rows() < 2)
        throw ShapeError(strf("project_entities: need global + k rows, got %s",
                              e_f.shape_str().c_str()));
    Tensor named = slice_rows(tape, e_f, 1, e_f.rows());
    return affine(tape, named, p.proj_w, p.proj_b);
}

} // namespace mrg
