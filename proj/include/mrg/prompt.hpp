#pragma once

#include <string>
#include <vector>

#include "mrg/status.hpp"

namespace mrg {

// ---------------------------------------------------------------------------
// Visual adaptor: per-scan patch features -> one word-space embedding each
// ---------------------------------------------------------------------------

struct AdaptorParams {
    Tensor w1, b1;  // (P*d_s) -> d_s
    Tensor w2, b2;  // d_s -> d_w

    static AdaptorParams init(int patches, int d_s, int d_w, Rng& rng) {
        AdaptorParams p;
        const int flat = patches * d_s;
        p.w1 = Tensor::randn(d_s, flat, rng, 1.0 / std::sqrt(flat), true);
        p.b1 = Tensor::zeros(1, d_s, true);
        p.w2 = Tensor::randn(d_w, d_s, rng, 1.0 / std::sqrt(d_s), true);
        p.b2 = Tensor::zeros(1, d_w, true);
        return p;
    }

    void collect(ParamList& out, const std::string& prefix) const {
        add_param(out, prefix + ".w1", w1);
        add_param(out, prefix + ".b1", b1);
        add_param(out, prefix + ".w2", w2);
        add_param(out, prefix + ".b2", b2);
    }
};

/// Two stacked affines over flattened per-scan features (N x P*d_s -> N x d_w).
inline Tensor adapt_scans(Tape& tape, const Tensor& per_scan_flat, const AdaptorParams& p) {
    if (per_scan_flat.cols() != p.w1.cols())
        throw ShapeError(strf("adapt_scans: input %s vs adaptor expecting width %d",
                              per_scan_flat.shape_str().c_str(), p.w1.cols()));
    return affine(tape, affine(tape, per_scan_flat, p.w1, p.b1), p.w2, p.b2);
}

// ---------------------------------------------------------------------------
// Multi-modal prompt
// ---------------------------------------------------------------------------

enum class SegmentKind { scan, entity_embed, status_embed, instruction_token, special_token };

inline const char* segment_name(SegmentKind k) {
    switch (k) {
        case SegmentKind::scan: return "scan";
        case SegmentKind::entity_embed: return "entity_embed";
        case SegmentKind::status_embed: return "status_embed";
        case SegmentKind::instruction_token: return "instruction_token";
        case SegmentKind::special_token: return "special_token";
    }
    return "?";
}

/// Where a prompt row's embedding came from; every row must be one of these.
enum class EmbedSource { adaptor, kja, status, vocab_table };

inline const char* source_name(EmbedSource s) {
    switch (s) {
        case EmbedSource::adaptor: return "adaptor";
        case EmbedSource::kja: return "kja";
        case EmbedSource::status: return "status";
        case EmbedSource::vocab_table: return "vocab";
    }
    return "?";
}

struct PromptPosition {
    SegmentKind kind;
    EmbedSource source;
    int entity_index = -1;  // vocabulary index 1..k when entity-scoped
    int token_id = -1;      // vocabulary id when source == vocab_table
};

struct MultiModalPrompt {
    Tensor embeddings;  // L x d_w
    std::vector<PromptPosition> positions;

    int length() const { return embeddings.rows(); }
};

struct PromptToggles {
    bool entity_embed = true;
    bool status_embed = true;
    bool category_words = false;
};

/// Per-entity presence words from classifier probabilities; the 0.5 boundary
/// is inclusive ("exist").
inline std::vector<std::string> category_words(const std::vector<double>& probs,
                                               double threshold = 0.5) {
    std::vector<std::string> out;
    out.reserve(probs.size());
    for (double p : probs) out.push_back(p >= threshold ? "exist" : "not exist");
    return out;
}

inline std::vector<std::string> category_word_tokens(const std::string& word) {
    if (word == "exist") return {"exist"};
    if (word == "not exist") return {"not", "exist"};
    throw Error(strf("unknown category word '%s'", word.c_str()));
}

/// Template order: [Img], scan embeddings, [/Img], then per entity its name
/// token, visual embedding, optional "status:" + status embedding, optional
/// category tokens, then [MRG] and the instruction tokens. Pure function of
/// its inputs; every row is tagged with kind and source.
inline MultiModalPrompt assemble_prompt(Tape& tape, const Tensor& v_e, const Tensor& e_e,
                                        const Tensor& s_e,
                                        const std::vector<std::string>& categories,
                                        const EntityVocabulary& evocab, const TokenVocab& tvocab,
                                        const Tensor& token_table,
                                        const std::string& instruction_text,
                                        const PromptToggles& toggles) {
    const int d_w = token_table.cols();
    const int k = evocab.k();
    if (v_e.cols() != d_w)
        throw ShapeError(strf("assemble_prompt: scan embeddings %s vs width %d",
                              v_e.shape_str().c_str(), d_w));
    if (toggles.status_embed && !toggles.entity_embed)
        throw Error("assemble_prompt: status embeddings require entity embeddings");
    if (toggles.category_words && !toggles.entity_embed)
        throw Error("assemble_prompt: category words require entity embeddings");
    if (toggles.entity_embed && (e_e.rows() != k || e_e.cols() != d_w))
        throw ShapeError(strf("assemble_prompt: entity embeddings %s, expected %dx%d",
                              e_e.shape_str().c_str(), k, d_w));
    if (toggles.status_embed && (s_e.rows() != k || s_e.cols() != d_w))
        throw ShapeError(strf("assemble_prompt: status embeddings %s, expected %dx%d",
                              s_e.shape_str().c_str(), k, d_w));
    if (toggles.category_words && static_cast<int>(categories.size()) != k)
        throw ShapeError(strf("assemble_prompt: %zu category words, expected %d",
                              categories.size(), k));

    std::vector<Tensor> rows;
    std::vector<PromptPosition> pos;
    auto push_token = [&](int id, SegmentKind kind, int entity) {
        rows.push_back(embedding_lookup(tape, token_table, {id}));
        pos.push_back({kind, EmbedSource::vocab_table, entity, id});
    };

    push_token(tvocab.img_open_id(), SegmentKind::special_token, -1);
    for (int s = 0; s < v_e.rows(); ++s) {
        rows.push_back(slice_rows(tape, v_e, s, s + 1));
        pos.push_back({SegmentKind::scan, EmbedSource::adaptor, -1, -1});
    }
    push_token(tvocab.img_close_id(), SegmentKind::special_token, -1);

    if (toggles.entity_embed) {
        for (int i = 1; i <= k; ++i) {
            push_token(tvocab.id(evocab.at(i).name), SegmentKind::special_token, i);
            rows.push_back(slice_rows(tape, e_e, i - 1, i));
            pos.push_back({SegmentKind::entity_embed, EmbedSource::kja, i, -1});
            if (toggles.status_embed) {
                push_token(tvocab.status_marker_id(), SegmentKind::special_token, i);
                rows.push_back(slice_rows(tape, s_e, i - 1, i));
                pos.push_back({SegmentKind::status_embed, EmbedSource::status, i, -1});
            }
            if (toggles.category_words)
                for (const auto& tok : category_word_tokens(categories[static_cast<size_t>(i - 1)]))
                    push_token(tvocab.id(tok), SegmentKind::special_token, i);
        }
    }

    push_token(tvocab.task_id(), SegmentKind::special_token, -1);
    for (const auto& w : split_words(instruction_text))
        push_token(tvocab.id(w), SegmentKind::instruction_token, -1);

    MultiModalPrompt prompt;
    prompt.embeddings = concat_rows(tape, std::span<const Tensor>(rows));
    prompt.positions = std::move(pos);
    return prompt;
}

/// Debug dump: one line per position, bit-exact layout documentation.
inline std::string prompt_layout_text(const MultiModalPrompt& p, const TokenVocab& tvocab) {
    std::string out;
    for (size_t i = 0; i < p.positions.size(); ++i) {
        const auto& pos = p.positions[i];
        out += strf("%zu %s %s", i, segment_name(pos.kind), source_name(pos.source));
        if (pos.entity_index >= 0) out += strf(" entity=%d", pos.entity_index);
        if (pos.token_id >= 0) out += strf(" token=%s", tvocab.token(pos.token_id).c_str());
        out += '\n';
    }
    return out;
}

} // namespace mrg
