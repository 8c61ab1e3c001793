#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "mrg/config.hpp"
#include "mrg/decoder.hpp"
#include "mrg/entity_graph.hpp"
#include "mrg/kja.hpp"
#include "mrg/optim.hpp"
#include "mrg/params.hpp"
#include "mrg/prompt.hpp"
#include "mrg/status.hpp"
#include "mrg/synth.hpp"
#include "mrg/vocab.hpp"

namespace mrg {

/// Full report-generation model: scan adaptor, knowledge-driven joint
/// attention over entity text and scan patches, per-entity status classifier,
/// prompt assembler, and the autoregressive decoder. Entity name embeddings
/// are read from the decoder's token table so text and prompt share one space.
struct Model {
    RunConfig cfg;
    EntityVocabulary evocab;
    ExplicitGraph graph;  // carries training co-occurrence counts
    TokenVocab tvocab;
    KjaParams kja;
    ClassifierParams clf;
    AdaptorParams adaptor;
    Decoder dec;
    EmaState ema;
    ParamList params;
    std::vector<int> entity_text_ids;  // [global] + entity names, token ids

    static Model init(const RunConfig& rc, EntityVocabulary ev, ExplicitGraph g, Rng& rng) {
        rc.validate();
        Model m;
        m.cfg = rc;
        m.evocab = std::move(ev);
        m.graph = std::move(g);
        if (m.evocab.region_indices().size() != static_cast<size_t>(rc.regions) ||
            m.evocab.lesion_indices().size() != static_cast<size_t>(rc.lesions))
            throw Error(strf("model: graph has %zu regions / %zu lesions, config says %d/%d",
                             m.evocab.region_indices().size(), m.evocab.lesion_indices().size(),
                             rc.regions, rc.lesions));
        m.tvocab = build_token_vocab(m.evocab, rc.instruction);
        const Activation act = parse_activation(rc.activation);
        m.kja = KjaParams::init(rc.kja_config(), rng);
        m.clf = ClassifierParams::init(rc.d_h, rc.classifier_hidden, act, rng);
        m.adaptor = AdaptorParams::init(rc.patches, rc.d_s, rc.d_w, rng);
        m.dec = Decoder::init(rc.decoder_config(m.tvocab.size()), rng);
        m.ema = EmaState::zeros(m.evocab.k());
        m.kja.collect(m.params, "kja");
        m.clf.collect(m.params, "classifier");
        m.adaptor.collect(m.params, "adaptor");
        m.dec.collect(m.params);
        m.entity_text_ids.push_back(m.tvocab.id("[global]"));
        for (int i = 1; i <= m.evocab.k(); ++i)
            m.entity_text_ids.push_back(m.tvocab.id(m.evocab.at(i).name));
        return m;
    }

    PromptToggles toggles() const {
        return {cfg.entity_embed, cfg.status_embed, cfg.category_words};
    }

    /// Explicit adjacency from accumulated training co-occurrence statistics;
    /// the inference-time stand-in for report-derived pairs.
    Tensor statistical_m_e() const { return build_M_E_infer(evocab, graph, cfg.tau); }

    /// Attention mask per ablation switches: fused when both matrices are
    /// enabled, the single enabled one otherwise, all-ones when neither.
    Tensor mask_tensor(Tape& tape, const Tensor& m_e, const Tensor& m_i) const {
        if (cfg.use_m_e && cfg.use_m_i)
            return add(tape, scale(tape, m_e, cfg.alpha_e), scale(tape, m_i, cfg.alpha_i));
        if (cfg.use_m_e) return m_e;
        if (cfg.use_m_i) return m_i;
        const int n = evocab.k() + 1;
        return Tensor::full(n, n, 1.0);
    }

    /// Per-sample entity branch. `training` selects the adjacency source:
    /// report-derived pairs during training, co-occurrence statistics at
    /// inference (ground truth never reaches this path outside training).
    struct EntityPass {
        Tensor v_e;        // scans x d_w, adapted scan embeddings
        Tensor t_f_prime;  // (k+1) x d_h after cross attention
        Tensor m_i;        // implicit adjacency
        Tensor m_adj;      // mask used by self-attention
        Tensor e_f;        // (k+1) x d_h entity features
        Tensor e_e;        // k x d_w prompt-space entity embeddings
        Tensor preds;      // k x 1 presence probabilities
    };

    EntityPass forward_entities(Tape& tape, const SyntheticSample& s, bool training) const {
        EntityPass out;
        out.v_e = adapt_scans(tape, s.scan.per_scan_rows(), adaptor);
        if (!cfg.entity_embed) return out;  // scan-only arm skips the entity branch
        Tensor t_f = embedding_lookup(tape, dec.token_table, entity_text_ids);
        out.t_f_prime = cross_attend(tape, t_f, s.scan.data, kja);
        out.m_i = predict_implicit(tape, out.t_f_prime, kja);
        Tensor m_e = training ? build_M_E_train(evocab, graph, s.gt_pairs) : statistical_m_e();
        out.m_adj = mask_tensor(tape, m_e, out.m_i);
        out.e_f = masked_self_attend(tape, out.t_f_prime, out.m_adj, kja);
        out.e_e = project_entities(tape, out.e_f, kja);
        Tensor named = slice_rows(tape, out.e_f, 1, out.e_f.rows());
        out.preds = classify(tape, named, clf);
        return out;
    }

    std::vector<double> pred_values(const EntityPass& pass) const {
        return pass.preds.values();
    }

    /// Status words under inference conditions: bucketed score EMA.
    std::vector<std::string> inference_status_words() const { return bucket_all(ema.values); }

    /// Assemble one sample's prompt. `s_e` may be undefined when status
    /// embeddings are disabled; category words are cut from the classifier's
    /// own probabilities, never from labels.
    MultiModalPrompt build_prompt(Tape& tape, const EntityPass& pass, const Tensor& s_e) const {
        std::vector<std::string> cats;
        if (cfg.category_words) cats = category_words(pred_values(pass));
        return assemble_prompt(tape, pass.v_e, pass.e_e, s_e, cats, evocab, tvocab,
                               dec.token_table, cfg.instruction, toggles());
    }
};

// ---------------------------------------------------------------------------
// Batched training step
// ---------------------------------------------------------------------------

struct BatchStats {
    double loss = 0.0;      // joint objective
    double gen_loss = 0.0;  // mean autoregressive cross-entropy
    double cls_loss = 0.0;  // mean presence BCE (0 when the entity branch is off)
    std::vector<double> e_s;            // per-entity mean loss over the batch
    std::vector<double> scores;         // saturated learning scores
    std::vector<std::string> status_words;
};

namespace detail {

inline Tensor batch_mean(Tape& tape, const std::vector<Tensor>& scalars) {
    if (scalars.empty()) throw Error("batch_mean: empty batch");
    if (scalars.size() == 1) return scalars[0];
    Tensor stacked = concat_rows(tape, std::span<const Tensor>(scalars));
    return mean_all(tape, stacked);
}

} // namespace detail

/// One optimization step over a batch: entity forwards, classification loss,
/// detached learning-status path, prompt assembly, generation loss, joint
/// backward, optimizer update, and the score EMA update.
inline BatchStats train_batch(Model& m, AdamW& opt,
                              const std::vector<const SyntheticSample*>& batch) {
    if (batch.empty()) throw Error("train_batch: empty batch");
    Tape tape;
    std::vector<Model::EntityPass> passes;
    passes.reserve(batch.size());
    for (const auto* s : batch) passes.push_back(m.forward_entities(tape, *s, true));

    BatchStats stats;
    Tensor l_d;
    Tensor s_e;
    if (m.cfg.entity_embed) {
        std::vector<Tensor> preds;
        std::vector<std::vector<double>> labels;
        for (size_t j = 0; j < batch.size(); ++j) {
            preds.push_back(passes[j].preds);
            labels.emplace_back(batch[j]->labels.begin(), batch[j]->labels.end());
        }
        l_d = classification_loss(tape, preds, labels);
        stats.e_s = per_entity_loss(preds, labels);
        stats.scores = saturate(stats.e_s);
        stats.status_words = bucket_all(stats.scores);
        if (m.cfg.status_embed)
            s_e = embed_status(tape, stats.status_words, m.dec.token_table, m.tvocab);
    }

    std::vector<Tensor> gen_losses;
    gen_losses.reserve(batch.size());
    for (size_t j = 0; j < batch.size(); ++j) {
        MultiModalPrompt prompt = m.build_prompt(tape, passes[j], s_e);
        Tensor logits = m.dec.target_logits(tape, prompt.embeddings, batch[j]->report);
        gen_losses.push_back(generation_loss(tape, logits, batch[j]->report));
    }
    Tensor l_g = detail::batch_mean(tape, gen_losses);
    Tensor loss = m.cfg.entity_embed ? joint_loss(tape, l_g, l_d, m.cfg.lambda) : l_g;

    stats.loss = loss.values()[0];
    stats.gen_loss = l_g.values()[0];
    stats.cls_loss = m.cfg.entity_embed ? l_d.values()[0] : 0.0;

    tape.backward(loss);
    opt.step();
    opt.zero_grad();
    if (m.cfg.entity_embed) update_ema(stats.scores, m.ema, m.cfg.ema_decay);
    return stats;
}

// ---------------------------------------------------------------------------
// Evaluation-condition forwards (no gradients, no ground-truth adjacency)
// ---------------------------------------------------------------------------

struct EvalLosses {
    double gen_loss = 0.0;
    double cls_loss = 0.0;
};

/// Mean losses over a sample set under inference conditions: statistical
/// explicit adjacency and EMA-derived status words.
inline EvalLosses evaluate_losses(const Model& m, const std::vector<SyntheticSample>& samples) {
    if (samples.empty()) throw Error("evaluate_losses: empty sample set");
    EvalLosses out;
    for (const auto& s : samples) {
        Tape tape;
        NoGradGuard guard(tape);
        Model::EntityPass pass = m.forward_entities(tape, s, false);
        Tensor s_e;
        if (m.cfg.entity_embed && m.cfg.status_embed)
            s_e = embed_status(tape, m.inference_status_words(), m.dec.token_table, m.tvocab);
        MultiModalPrompt prompt = m.build_prompt(tape, pass, s_e);
        Tensor logits = m.dec.target_logits(tape, prompt.embeddings, s.report);
        out.gen_loss += generation_loss(tape, logits, s.report).values()[0];
        if (m.cfg.entity_embed) {
            std::vector<std::vector<double>> labels{{s.labels.begin(), s.labels.end()}};
            out.cls_loss += classification_loss(tape, {pass.preds}, labels).values()[0];
        }
    }
    out.gen_loss /= static_cast<double>(samples.size());
    out.cls_loss /= static_cast<double>(samples.size());
    return out;
}

/// Greedy (or sampled) report generation for one sample under inference
/// conditions. Returns generated token ids (terminator trimmed by detok).
inline std::vector<int> generate_report(const Model& m, const SyntheticSample& s,
                                        const GenerationMode& mode) {
    Tape tape;
    NoGradGuard guard(tape);
    Model::EntityPass pass = m.forward_entities(tape, s, false);
    Tensor s_e;
    if (m.cfg.entity_embed && m.cfg.status_embed)
        s_e = embed_status(tape, m.inference_status_words(), m.dec.token_table, m.tvocab);
    MultiModalPrompt prompt = m.build_prompt(tape, pass, s_e);
    const int budget = m.cfg.max_len - prompt.length();
    if (budget <= 0) throw Error("generate_report: prompt fills the context window");
    return m.dec.generate(prompt.embeddings, m.tvocab.end_id(), budget, mode);
}

} // namespace mrg
