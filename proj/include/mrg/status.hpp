#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "mrg/kja.hpp"
#include "mrg/vocab.hpp"

namespace mrg {

// ---------------------------------------------------------------------------
// Per-entity presence classifier
// ---------------------------------------------------------------------------

struct ClassifierParams {
    Tensor w_h, b_h;  // hidden affine d_h -> d_c
    Tensor w_c, b_c;  // head d_c -> 1 logit per entity row
    Activation act = Activation::gelu;

    static ClassifierParams init(int d_h, int d_c, Activation act, Rng& rng) {
        ClassifierParams p;
        p.act = act;
        p.w_h = Tensor::randn(d_c, d_h, rng, 1.0 / std::sqrt(d_h), true);
        p.b_h = Tensor::zeros(1, d_c, true);
        p.w_c = Tensor::randn(1, d_c, rng, 1.0 / std::sqrt(d_c), true);
        p.b_c = Tensor::zeros(1, 1, true);
        return p;
    }

    void collect(ParamList& out, const std::string& prefix) const {
        add_param(out, prefix + ".w_h", w_h);
        add_param(out, prefix + ".b_h", b_h);
        add_param(out, prefix + ".w_c", w_c);
        add_param(out, prefix + ".b_c", b_c);
    }
};

/// Per-entity presence probabilities from the named-entity feature rows
/// (k x d_h, global row already dropped): sigmoid(head(act(hidden(E_f)))).
inline Tensor classify(Tape& tape, const Tensor& e_f_named, const ClassifierParams& p) {
    Tensor hidden = activate(tape, affine(tape, e_f_named, p.w_h, p.b_h), p.act);
    Tensor logits = affine(tape, hidden, p.w_c, p.b_c);  // k x 1
    return sigmoid(tape, logits);
}

// ---------------------------------------------------------------------------
// Batched losses
// ---------------------------------------------------------------------------

inline constexpr double kProbClamp = 1e-12;

inline void check_batch(const std::vector<Tensor>& preds,
                        const std::vector<std::vector<double>>& labels) {
    if (preds.empty()) throw Error("entity loss: empty batch");
    if (preds.size() != labels.size())
        throw ShapeError(strf("entity loss: %zu predictions vs %zu label rows", preds.size(),
                              labels.size()));
    const int k = preds[0].rows();
    for (size_t j = 0; j < preds.size(); ++j) {
        if (preds[j].rows() != k || preds[j].cols() != 1)
            throw ShapeError(strf("entity loss: prediction %zu is %s, expected %dx1", j,
                                  preds[j].shape_str().c_str(), k));
        if (static_cast<int>(labels[j].size()) != k)
            throw ShapeError(strf("entity loss: label row %zu has %zu entries, expected %d", j,
                                  labels[j].size(), k));
    }
}

/// Detached per-entity discriminative losses: e_s[i] is the batch-mean binary
/// cross entropy of entity i (uniform sample weights 1/b). Plain numbers; the
/// scorer path is non-differentiable by design.
inline std::vector<double> per_entity_loss(const std::vector<Tensor>& preds,
                                           const std::vector<std::vector<double>>& labels) {
    check_batch(preds, labels);
    const int k = preds[0].rows();
    const double b = static_cast<double>(preds.size());
    std::vector<double> e_s(static_cast<size_t>(k), 0.0);
    for (size_t j = 0; j < preds.size(); ++j)
        for (int i = 0; i < k; ++i) {
            const double p = std::min(std::max(preds[j](i, 0), kProbClamp), 1.0 - kProbClamp);
            const double y = labels[j][static_cast<size_t>(i)];
            e_s[static_cast<size_t>(i)] -= (y * std::log(p) + (1.0 - y) * std::log(1.0 - p)) / b;
        }
    return e_s;
}

/// Differentiable batch loss: mean BCE over all b x k prediction entries, so
/// sum(per_entity_loss) == k * classification_loss under uniform weights.
inline Tensor classification_loss(Tape& tape, const std::vector<Tensor>& preds,
                                  const std::vector<std::vector<double>>& labels) {
    check_batch(preds, labels);
    const int k = preds[0].rows();
    std::vector<Tensor> rows;
    rows.reserve(preds.size());
    std::vector<double> label_data;
    label_data.reserve(preds.size() * static_cast<size_t>(k));
    for (size_t j = 0; j < preds.size(); ++j) {
        rows.push_back(reshape(tape, preds[j], 1, k));
        label_data.insert(label_data.end(), labels[j].begin(), labels[j].end());
    }
    Tensor pred_mat = concat_rows(tape, std::span<const Tensor>(rows));
    Tensor label_mat = Tensor::from_data(static_cast<int>(preds.size()), k, std::move(label_data));
    return binary_cross_entropy(tape, pred_mat, label_mat, kProbClamp);
}

// ---------------------------------------------------------------------------
// Saturation, bucketing, status embeddings
// ---------------------------------------------------------------------------

/// Exponential saturation y = 1 - e^{-x}: maps non-negative losses into [0,1).
inline std::vector<double> saturate(const std::vector<double>& e_s) {
    std::vector<double> out;
    out.reserve(e_s.size());
    for (double x : e_s) {
        if (x < 0.0) throw Error(strf("saturate: negative loss %s", fmt_double(x).c_str()));
        out.push_back(1.0 - std::exp(-x));
    }
    return out;
}

/// Equal-width quintile buckets, lower boundary inclusive; 1.0 falls in the
/// last bucket.
inline int bucket_index(double score) {
    if (score < 0.0 || score > 1.0)
        throw Error(strf("bucket: score %s outside [0,1]", fmt_double(score).c_str()));
    // Explicit comparisons rather than score/0.2: division puts the literal
    // 0.6 into the wrong bucket (0.6/0.2 rounds to 2.999...).
    if (score < 0.2) return 0;
    if (score < 0.4) return 1;
    if (score < 0.6) return 2;
    if (score < 0.8) return 3;
    return 4;
}

inline std::string bucket(double score) { return status_words()[static_cast<size_t>(bucket_index(score))]; }

inline std::vector<std::string> bucket_all(const std::vector<double>& scores) {
    std::vector<std::string> out;
    out.reserve(scores.size());
    for (double s : scores) out.push_back(bucket(s));
    return out;
}

/// Status embeddings: per entity, the mean of the status word's token
/// embeddings from the shared decoder table. Built under a no-grad regime --
/// the status prompt is a constant describing training state, not a trainable
/// signal.
inline Tensor embed_status(Tape& tape, const std::vector<std::string>& words,
                           const Tensor& token_table, const TokenVocab& vocab) {
    if (words.empty()) throw Error("embed_status: no status words");
    NoGradGuard guard(tape);
    std::vector<Tensor> rows;
    rows.reserve(words.size());
    for (const auto& w : words) {
        std::vector<int> ids = vocab.ids(status_word_tokens(w));
        Tensor looked = embedding_lookup(tape, token_table, ids);
        rows.push_back(ids.size() == 1 ? looked : mean_rows(tape, looked));
    }
    return concat_rows(tape, std::span<const Tensor>(rows));
}

// ---------------------------------------------------------------------------
// EMA of learning scores (the inference-time status source)
// ---------------------------------------------------------------------------

struct EmaState {
    std::vector<double> values;
    int64_t updates = 0;

    static EmaState zeros(int k) { return {std::vector<double>(static_cast<size_t>(k), 0.0), 0}; }
};

inline void update_ema(const std::vector<double>& e_scores, EmaState& state, double decay) {
    if (decay < 0.0 || decay >= 1.0)
        throw Error(strf("update_ema: decay %s outside [0,1)", fmt_double(decay).c_str()));
    if (state.values.size() != e_scores.size())
        throw ShapeError(strf("update_ema: %zu scores vs %zu state entries", e_scores.size(),
                              state.values.size()));
    for (size_t i = 0; i < e_scores.size(); ++i)
        state.values[i] = decay * state.values[i] + (1.0 - decay) * e_scores[i];
    ++state.updates;
}

} // namespace mrg
