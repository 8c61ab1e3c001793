#pragma once

#include <array>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "mrg/entity_graph.hpp"

namespace mrg {

/// The five learning-status words, ordered from best-learned to worst.
inline const std::array<std::string, 5>& status_words() {
    static const std::array<std::string, 5> w = {"proficient", "good", "moderate", "limited",
                                                 "poor"};
    return w;
}

/// Fixed sub-token split per status word. Two of the five are deliberately
/// multi-token so the embedding-averaging path is always exercised.
inline std::vector<std::string> status_word_tokens(const std::string& word) {
    if (word == "proficient") return {"profi", "cient"};
    if (word == "good") return {"good"};
    if (word == "moderate") return {"mode", "rate"};
    if (word == "limited") return {"limited"};
    if (word == "poor") return {"poor"};
    throw Error(strf("unknown status word '%s'", word.c_str()));
}

inline std::vector<std::string> split_words(const std::string& text) {
    std::istringstream in(text);
    std::vector<std::string> out;
    std::string w;
    while (in >> w) out.push_back(w);
    return out;
}

/// Token string <-> id table for the toy decoder. Construction order is fixed
/// so a given entity graph always yields the same ids.
class TokenVocab {
public:
    int add(const std::string& tok) {
        auto it = index_.find(tok);
        if (it != index_.end()) return it->second;
        const int id = static_cast<int>(tokens_.size());
        tokens_.push_back(tok);
        index_.emplace(tok, id);
        return id;
    }

    bool contains(const std::string& tok) const { return index_.count(tok) != 0; }

    int id(const std::string& tok) const {
        auto it = index_.find(tok);
        if (it == index_.end()) throw Error(strf("token '%s' not in vocabulary", tok.c_str()));
        return it->second;
    }

    const std::string& token(int id) const {
        if (id < 0 || id >= size()) throw Error(strf("token id %d outside vocabulary", id));
        return tokens_[static_cast<size_t>(id)];
    }

    int size() const { return static_cast<int>(tokens_.size()); }
    const std::vector<std::string>& tokens() const { return tokens_; }

    int end_id() const { return id("</s>"); }
    int img_open_id() const { return id("[Img]"); }
    int img_close_id() const { return id("[/Img]"); }
    int task_id() const { return id("[MRG]"); }
    int status_marker_id() const { return id("status:"); }

    std::vector<int> ids(const std::vector<std::string>& toks) const {
        std::vector<int> out;
        out.reserve(toks.size());
        for (const auto& t : toks) out.push_back(id(t));
        return out;
    }

    std::string detok(const std::vector<int>& seq, bool stop_at_end = true) const {
        std::string out;
        for (int t : seq) {
            if (stop_at_end && t == end_id()) break;
            if (!out.empty()) out += ' ';
            out += token(t);
        }
        return out;
    }

private:
    std::vector<std::string> tokens_;
    std::unordered_map<std::string, int> index_;
};

/// Default surface-word tables for synthetic entities. Indices past the table
/// fall back to generated names so any k works.
inline std::string default_region_name(int ordinal) {
    static const std::array<const char*, 4> names = {"cortex", "thalamus", "ventricles",
                                                     "basal_ganglia"};
    if (ordinal < static_cast<int>(names.size())) return names[static_cast<size_t>(ordinal)];
    return strf("region%d", ordinal + 1);
}

inline std::string default_lesion_name(int ordinal) {
    static const std::array<const char*, 4> names = {"hemorrhage", "edema", "calcification",
                                                     "infarct"};
    if (ordinal < static_cast<int>(names.size())) return names[static_cast<size_t>(ordinal)];
    return strf("lesion%d", ordinal + 1);
}

inline std::string default_finding_word(int ordinal) {
    static const std::array<const char*, 4> words = {"hyperdensity", "hypodensity", "swelling",
                                                     "midline_shift"};
    if (ordinal < static_cast<int>(words.size())) return words[static_cast<size_t>(ordinal)];
    return strf("finding%d", ordinal + 1);
}

/// Keyword rule: a region is marked by its ordinal finding word (present only
/// when the region has findings); a lesion is marked by its own name (only
/// mentioned when present). Makes report -> label extraction exact.
inline void assign_keywords(EntityVocabulary& vocab) {
    int region_ord = 0;
    for (auto& e : vocab.entities) {
        switch (e.kind) {
            case EntityKind::global: e.keyword.clear(); break;
            case EntityKind::region: e.keyword = default_finding_word(region_ord++); break;
            case EntityKind::lesion: e.keyword = e.name; break;
        }
    }
}

/// Regions first, then lesions; expert edges chain consecutive entities of
/// the same kind (a simple, deterministic stand-in for curated structure).
inline std::pair<EntityVocabulary, ExplicitGraph> default_entity_graph(int n_regions,
                                                                       int n_lesions) {
    if (n_regions < 1 || n_lesions < 1)
        throw Error("default_entity_graph: need at least one region and one lesion");
    EntityVocabulary vocab;
    vocab.entities.push_back({"[global]", EntityKind::global, ""});
    for (int i = 0; i < n_regions; ++i)
        vocab.entities.push_back({default_region_name(i), EntityKind::region, ""});
    for (int i = 0; i < n_lesions; ++i)
        vocab.entities.push_back({default_lesion_name(i), EntityKind::lesion, ""});
    assign_keywords(vocab);
    vocab.validate();
    ExplicitGraph graph;
    for (int i = 0; i + 1 < n_regions; ++i) graph.edges_t2t.emplace_back(1 + i, 2 + i);
    for (int i = 0; i + 1 < n_lesions; ++i)
        graph.edges_l2l.emplace_back(1 + n_regions + i, 2 + n_regions + i);
    graph.init_counts(vocab.k());
    graph.validate(vocab);
    return {vocab, graph};
}

inline constexpr const char* kDefaultInstruction = "describe findings for all entities .";

/// Deterministic vocabulary layout. Report-producing tokens (grammar words,
/// entity names, finding words) come before instruction words so report token
/// ids never depend on the instruction wording.
inline TokenVocab build_token_vocab(const EntityVocabulary& vocab,
                                    const std::string& instruction_text = kDefaultInstruction) {
    TokenVocab tv;
    tv.add("</s>");
    tv.add("[Img]");
    tv.add("[/Img]");
    tv.add("[MRG]");
    tv.add("[global]");
    tv.add("status:");
    for (const auto& w : status_words())
        for (const auto& t : status_word_tokens(w)) tv.add(t);
    tv.add("exist");
    tv.add("not");
    tv.add("shows");
    tv.add("appears");
    tv.add("normal");
    tv.add("noted");
    tv.add(".");
    for (int i = 1; i <= vocab.k(); ++i) tv.add(vocab.at(i).name);
    for (int i = 1; i <= vocab.k(); ++i)
        if (!vocab.at(i).keyword.empty()) tv.add(vocab.at(i).keyword);
    for (const auto& w : split_words(instruction_text)) tv.add(w);
    return tv;
}

} // namespace mrg
