#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "mrg/ops.hpp"
#include "mrg/params.hpp"
#include "mrg/rng.hpp"
#include "mrg/kja.hpp"

namespace mrg {

struct DecoderConfig {
    int vocab_size = 0;
    int d_w = 64;
    int layers = 2;
    int heads = 4;
    int ffn = 256;
    int max_len = 256;
    int adapter_rank = 4;          // 0 disables low-rank adaptation
    double adapter_scaling = 8.0;
    Activation act = Activation::gelu;

    void validate() const {
        if (vocab_size < 2) throw Error("decoder: vocabulary too small");
        if (heads < 1 || d_w % heads != 0)
            throw Error(strf("decoder: d_w %d not divisible by %d heads", d_w, heads));
        if (adapter_rank < 0) throw Error("decoder: negative adapter rank");
    }
};

/// Bias-less projection, optionally low-rank adapted:
///   y = x W^T + (scaling/r) * (x A^T) B^T,   A: r x in, B: out x r.
/// With rank > 0 the base W is frozen and B starts at zero, so the adapted
/// forward is bitwise identical to the base until B moves.
struct LinearLayer {
    Tensor w;       // out x in
    Tensor lora_a;  // r x in
    Tensor lora_b;  // out x r
    int rank = 0;
    double scaling = 8.0;

    static LinearLayer init(int out, int in, Rng& rng, int rank = 0, double scaling = 8.0) {
        LinearLayer l;
        l.rank = rank;
        l.scaling = scaling;
        l.w = Tensor::randn(out, in, rng, 1.0 / std::sqrt(in), rank == 0);
        if (rank > 0) {
            if (rank > in || rank > out)
                throw Error(strf("adapter rank %d exceeds layer dims %dx%d", rank, out, in));
            l.lora_a = Tensor::randn(rank, in, rng, 1.0 / std::sqrt(in), true);
            l.lora_b = Tensor::zeros(out, rank, true);
        }
        return l;
    }

    Tensor forward(Tape& tape, const Tensor& x) const {
        Tensor base = matmul_nt(tape, x, w);
        if (rank == 0) return base;
        Tensor low = matmul_nt(tape, x, lora_a);
        Tensor delta = scale(tape, matmul_nt(tape, low, lora_b), scaling / rank);
        return add(tape, base, delta);
    }

    void collect(ParamList& out, const std::string& prefix) const {
        add_param(out, prefix + ".w", w, rank == 0);
        if (rank > 0) {
            add_param(out, prefix + ".lora_a", lora_a);
            add_param(out, prefix + ".lora_b", lora_b);
        }
    }
};

struct DecoderBlock {
    LinearLayer wq, wk, wv, wo;
    Tensor ln1_gamma, ln1_beta, ln2_gamma, ln2_beta;
    Tensor ffn_w1, ffn_b1, ffn_w2, ffn_b2;

    static DecoderBlock init(const DecoderConfig& cfg, Rng& rng) {
        DecoderBlock b;
        b.wq = LinearLayer::init(cfg.d_w, cfg.d_w, rng, cfg.adapter_rank, cfg.adapter_scaling);
        b.wk = LinearLayer::init(cfg.d_w, cfg.d_w, rng, cfg.adapter_rank, cfg.adapter_scaling);
        b.wv = LinearLayer::init(cfg.d_w, cfg.d_w, rng, cfg.adapter_rank, cfg.adapter_scaling);
        b.wo = LinearLayer::init(cfg.d_w, cfg.d_w, rng, cfg.adapter_rank, cfg.adapter_scaling);
        b.ln1_gamma = Tensor::full(1, cfg.d_w, 1.0, true);
        b.ln1_beta = Tensor::zeros(1, cfg.d_w, true);
        b.ln2_gamma = Tensor::full(1, cfg.d_w, 1.0, true);
        b.ln2_beta = Tensor::zeros(1, cfg.d_w, true);
        b.ffn_w1 = Tensor::randn(cfg.ffn, cfg.d_w, rng, 1.0 / std::sqrt(cfg.d_w), true);
        b.ffn_b1 = Tensor::zeros(1, cfg.ffn, true);
        b.ffn_w2 = Tensor::randn(cfg.d_w, cfg.ffn, rng, 1.0 / std::sqrt(cfg.ffn), true);
        b.ffn_b2 = Tensor::zeros(1, cfg.d_w, true);
        return b;
    }

    void collect(ParamList& out, const std::string& prefix) const {
        wq.collect(out, prefix + ".attn.wq");
        wk.collect(out, prefix + ".attn.wk");
        wv.collect(out, prefix + ".attn.wv");
        wo.collect(out, prefix + ".attn.wo");
        add_param(out, prefix + ".ln1.gamma", ln1_gamma);
        add_param(out, prefix + ".ln1.beta", ln1_beta);
        add_param(out, prefix + ".ln2.gamma", ln2_gamma);
        add_param(out, prefix + ".ln2.beta", ln2_beta);
        add_param(out, prefix + ".ffn.w1", ffn_w1);
        add_param(out, prefix + ".ffn.b1", ffn_b1);
        add_param(out, prefix + ".ffn.w2", ffn_w2);
        add_param(out, prefix + ".ffn.b2", ffn_b2);
    }
};

struct GenerationMode {
    bool greedy = true;
    double temperature = 1.0;
    uint64_t seed = 0;

    static GenerationMode greedy_mode() { return {true, 1.0, 0}; }
    static GenerationMode sampled(uint64_t seed, double temperature) {
        if (temperature <= 0.0) throw Error("generation: temperature must be positive");
        return {false, temperature, seed};
    }
};

inline constexpr double kCausalMask = -1e30;

/// Pre-norm causal transformer over an embedding sequence. Prompt embeddings
/// arrive pre-assembled; learned absolute positions are added here.
class Decoder {
public:
    DecoderConfig cfg;
    Tensor token_table;  // vocab x d_w; shared with entity names and status words
    Tensor pos_table;    // max_len x d_w
    std::vector<DecoderBlock> blocks;
    Tensor lnf_gamma, lnf_beta;
    LinearLayer head;    // untied output projection, never adapted

    static Decoder init(const DecoderConfig& cfg, Rng& rng) {
        cfg.validate();
        Decoder d;
        d.cfg = cfg;
        d.token_table = Tensor::randn(cfg.vocab_size, cfg.d_w, rng, 1.0 / std::sqrt(cfg.d_w), true);
        d.pos_table = Tensor::randn(cfg.max_len, cfg.d_w, rng, 1.0 / std::sqrt(cfg.d_w), true);
        for (int i = 0; i < cfg.layers; ++i) d.blocks.push_back(DecoderBlock::init(cfg, rng));
        d.lnf_gamma = Tensor::full(1, cfg.d_w, 1.0, true);
        d.lnf_beta = Tensor::zeros(1, cfg.d_w, true);
        d.head = LinearLayer::init(cfg.vocab_size, cfg.d_w, rng, 0);
        return d;
    }

    void collect(ParamList& out) const {
        add_param(out, "decoder.token_table", token_table);
        add_param(out, "decoder.pos_table", pos_table);
        for (size_t i = 0; i < blocks.size(); ++i)
            blocks[i].collect(out, strf("decoder.block%zu", i));
        add_param(out, "decoder.lnf.gamma", lnf_gamma);
        add_param(out, "decoder.lnf.beta", lnf_beta);
        head.collect(out, "decoder.head");
    }

    Tensor embed_tokens(Tape& tape, const std::vector<int>& ids) const {
        return embedding_lookup(tape, token_table, ids);
    }

    /// Hidden states for a full sequence of embeddings (causal attention).
    Tensor forward_hidden(Tape& tape, const Tensor& seq) const {
        const int len = seq.rows();
        if (len > cfg.max_len)
            throw Error(strf("decoder: sequence length %d exceeds max %d", len, cfg.max_len));
        Tensor causal = Tensor::zeros(len, len);
        for (int i = 0; i < len; ++i)
            for (int j = i + 1; j < len; ++j) causal(i, j) = kCausalMask;
        Tensor x = add(tape, seq, slice_rows(tape, pos_table, 0, len));
        const int dh = cfg.d_w / cfg.heads;
        const double inv_sqrt_dh = 1.0 / std::sqrt(static_cast<double>(dh));
        for (const auto& blk : blocks) {
            Tensor a_in = layer_norm(tape, x, blk.ln1_gamma, blk.ln1_beta);
            Tensor q = blk.wq.forward(tape, a_in);
            Tensor k = blk.wk.forward(tape, a_in);
            Tensor v = blk.wv.forward(tape, a_in);
            std::vector<Tensor> head_outs;
            head_outs.reserve(cfg.heads);
            for (int h = 0; h < cfg.heads; ++h) {
                Tensor qh = slice_cols(tape, q, h * dh, (h + 1) * dh);
                Tensor kh = slice_cols(tape, k, h * dh, (h + 1) * dh);
                Tensor vh = slice_cols(tape, v, h * dh, (h + 1) * dh);
                Tensor scores = add(tape, scale(tape, matmul_nt(tape, qh, kh), inv_sqrt_dh), causal);
                head_outs.push_back(matmul(tape, softmax_rows(tape, scores), vh));
            }
            Tensor merged = concat_cols(tape, std::span<const Tensor>(head_outs));
            x = add(tape, x, blk.wo.forward(tape, merged));
            Tensor f_in = layer_norm(tape, x, blk.ln2_gamma, blk.ln2_beta);
            Tensor hidden = activate(tape, affine(tape, f_in, blk.ffn_w1, blk.ffn_b1), cfg.act);
            x = add(tape, x, affine(tape, hidden, blk.ffn_w2, blk.ffn_b2));
        }
        return layer_norm(tape, x, lnf_gamma, lnf_beta);
    }

    /// Logits for each target position given the prompt prefix. Target token
    /// t is predicted from the position holding target token t-1 (or the last
    /// prompt position for t=0). Prompt positions receive no logits and hence
    /// no loss. Returns an undefined tensor for an empty target.
    Tensor target_logits(Tape& tape, const Tensor& prompt_embeds,
                         const std::vector<int>& target) const {
        const int p_len = prompt_embeds.rows();
        const int m = static_cast<int>(target.size());
        if (m == 0) return Tensor();
        if (p_len + m > cfg.max_len)
            throw Error(strf("decoder: prompt %d + target %d exceeds max length %d", p_len, m,
                             cfg.max_len));
        Tensor seq = prompt_embeds;
        if (m > 1) {
            std::vector<int> shifted(target.begin(), target.end() - 1);
            Tensor tgt_embeds = embed_tokens(tape, shifted);
            seq = concat_rows(tape, {prompt_embeds, tgt_embeds});
        }
        Tensor hidden = forward_hidden(tape, seq);
        Tensor rows = slice_rows(tape, hidden, p_len - 1, p_len - 1 + m);
        return head.forward(tape, rows);
    }

    std::vector<int> generate(const Tensor& prompt_embeds, int end_id, int max_new,
                              const GenerationMode& mode) const {
        Rng rng(mode.seed);
        std::vector<int> out;
        while (static_cast<int>(out.size()) < max_new) {
            if (prompt_embeds.rows() + static_cast<int>(out.size()) >= cfg.max_len) break;
            Tape tape;
            NoGradGuard guard(tape);
            Tensor seq = prompt_embeds;
            if (!out.empty()) seq = concat_rows(tape, {prompt_embeds, embed_tokens(tape, out)});
            Tensor hidden = forward_hidden(tape, seq);
            Tensor last = slice_rows(tape, hidden, hidden.rows() - 1, hidden.rows());
            Tensor logits = head.forward(tape, last);
            const int next = mode.greedy ? argmax_row(logits)
                                         : sample_row(logits, mode.temperature, rng);
            out.push_back(next);
            if (next == end_id) break;
        }
        return out;
    }

private:
    static int argmax_row(const Tensor& logits) {
        int best = 0;
        for (int j = 1; j < logits.cols(); ++j)
            if (logits(0, j) > logits(0, best)) best = j;
        return best;
    }

    static int sample_row(const Tensor& logits, double temperature, Rng& rng) {
        const int v = logits.cols();
        std::vector<double> p(static_cast<size_t>(v));
        double m = logits(0, 0) / temperature;
        for (int j = 0; j < v; ++j) m = std::max(m, logits(0, j) / temperature);
        double sum = 0.0;
        for (int j = 0; j < v; ++j) {
            p[static_cast<size_t>(j)] = std::exp(logits(0, j) / temperature - m);
            sum += p[static_cast<size_t>(j)];
        }
        double r = rng.uniform() * sum;
        for (int j = 0; j < v; ++j) {
            r -= p[static_cast<size_t>(j)];
            if (r <= 0.0) return j;
        }
        return v - 1;
    }
};

/// Mean token-level cross entropy over the target positions (Eq. 2 loss).
inline Tensor generation_loss(Tape& tape, const Tensor& logits, const std::vector<int>& target) {
    if (!logits.defined() || target.empty())
        throw Error("generation_loss: empty target");
    return cross_entropy(tape, logits, target);
}

/// L = L_g + lambda * L_d.
inline Tensor joint_loss(Tape& tape, const Tensor& l_g, const Tensor& l_d, double lambda) {
    if (l_g.size() != 1 || l_d.size() != 1)
        throw ShapeError(strf("joint_loss: %s and %s must be scalars", l_g.shape_str().c_str(),
                              l_d.shape_str().c_str()));
    return add(tape, l_g, scale(tape, l_d, lambda));
}

} // namespace mrg
