#pragma once

#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "mrg/tensor.hpp"

namespace mrg {

enum class EntityKind { global, region, lesion };

inline const char* kind_name(EntityKind k) {
    switch (k) {
        case EntityKind::global: return "global";
        case EntityKind::region: return "region";
        case EntityKind::lesion: return "lesion";
    }
    return "?";
}

inline EntityKind parse_kind(const std::string& s) {
    if (s == "global") return EntityKind::global;
    if (s == "region") return EntityKind::region;
    if (s == "lesion") return EntityKind::lesion;
    throw ParseError(strf("unknown entity kind '%s'", s.c_str()));
}

/// Ordered entity list: index 0 is the global entity, indices 1..k are the
/// named regions and lesions. Each named entity carries the surface keyword
/// that marks its presence in a report.
struct EntityVocabulary {
    struct Entity {
        std::string name;
        EntityKind kind = EntityKind::region;
        std::string keyword;  // report token whose presence implies the entity
    };

    std::vector<Entity> entities;

    int k() const { return static_cast<int>(entities.size()) - 1; }

    const Entity& at(int idx) const {
        if (idx < 0 || idx >= static_cast<int>(entities.size()))
            throw Error(strf("entity index %d outside [0,%zu)", idx, entities.size()));
        return entities[idx];
    }

    bool is_region(int idx) const { return at(idx).kind == EntityKind::region; }
    bool is_lesion(int idx) const { return at(idx).kind == EntityKind::lesion; }

    std::vector<int> region_indices() const {
        std::vector<int> out;
        for (int i = 1; i <= k(); ++i)
            if (is_region(i)) out.push_back(i);
        return out;
    }

    std::vector<int> lesion_indices() const {
        std::vector<int> out;
        for (int i = 1; i <= k(); ++i)
            if (is_lesion(i)) out.push_back(i);
        return out;
    }

    void validate() const {
        if (entities.empty() || entities[0].kind != EntityKind::global)
            throw Error("entity vocabulary: index 0 must be the global entity");
        if (k() < 1) throw Error("entity vocabulary: need at least one named entity");
        for (int i = 1; i <= k(); ++i) {
            if (entities[i].kind == EntityKind::global)
                throw Error(strf("entity vocabulary: duplicate global at index %d", i));
            if (entities[i].name.empty())
                throw Error(strf("entity vocabulary: empty name at index %d", i));
        }
        for (size_t i = 0; i < entities.size(); ++i)
            for (size_t j = i + 1; j < entities.size(); ++j)
                if (entities[i].name == entities[j].name)
                    throw Error(strf("entity vocabulary: duplicate name '%s'", entities[i].name.c_str()));
    }
};

/// Expert-defined structure plus training-split co-occurrence statistics for
/// the region-lesion edges used at inference time.
struct ExplicitGraph {
    std::vector<std::pair<int, int>> edges_t2t;  // region-region, entity indices
    std::vector<std::pair<int, int>> edges_l2l;  // lesion-lesion, entity indices
    // counts[(r, l)] = training samples containing the ground-truth pair; keyed
    // by entity indices, dense over (k+1)^2 for simplicity, zero elsewhere.
    std::vector<int64_t> cooccurrence_counts;
    int64_t total_training_samples = 0;

    void init_counts(int k) { cooccurrence_counts.assign(static_cast<size_t>(k + 1) * (k + 1), 0); }

    int64_t count(int k, int region, int lesion) const {
        return cooccurrence_counts[static_cast<size_t>(region) * (k + 1) + lesion];
    }

    void add_count(int k, int region, int lesion, int64_t n = 1) {
        cooccurrence_counts[static_cast<size_t>(region) * (k + 1) + lesion] += n;
    }

    void validate(const EntityVocabulary& vocab) const {
        for (auto [a, b] : edges_t2t)
            if (!vocab.is_region(a) || !vocab.is_region(b))
                throw Error(strf("graph: t2t edge (%d,%d) must join regions", a, b));
        for (auto [a, b] : edges_l2l)
            if (!vocab.is_lesion(a) || !vocab.is_lesion(b))
                throw Error(strf("graph: l2l edge (%d,%d) must join lesions", a, b));
        for (int64_t c : cooccurrence_counts)
            if (c < 0) throw Error("graph: negative co-occurrence count");
    }
};

namespace detail {

/// Shared rules: global row/col all ones, diagonal ones (self-relation keeps
/// every attention row valid), expert edges symmetric.
inline Tensor m_e_base(const EntityVocabulary& vocab, const ExplicitGraph& graph) {
    const int k = vocab.k();
    Tensor m = Tensor::zeros(k + 1, k + 1);
    for (int i = 0; i <= k; ++i) {
        m(0, i) = 1.0;
        m(i, 0) = 1.0;
        m(i, i) = 1.0;
    }
    for (auto [a, b] : graph.edges_t2t) {
        m(a, b) = 1.0;
        m(b, a) = 1.0;
    }
    for (auto [a, b] : graph.edges_l2l) {
        m(a, b) = 1.0;
        m(b, a) = 1.0;
    }
    return m;
}

} // namespace detail

/// Training-mode explicit adjacency: region-lesion edges come from the
/// sample's ground-truth pairs.
inline Tensor build_M_E_train(const EntityVocabulary& vocab, const ExplicitGraph& graph,
                              const std::vector<std::pair<int, int>>& report_entity_pairs) {
    vocab.validate();
    graph.validate(vocab);
    Tensor m = detail::m_e_base(vocab, graph);
    for (auto [r, l] : report_entity_pairs) {
        if (r <= 0 || r > vocab.k() || l <= 0 || l > vocab.k())
            throw Error(strf("report pair (%d,%d): unknown entity", r, l));
        if (!vocab.is_region(r) || !vocab.is_lesion(l))
            throw Error(strf("report pair (%d,%d): kinds must be (region, lesion), got (%s, %s)",
                             r, l, kind_name(vocab.at(r).kind), kind_name(vocab.at(l).kind)));
        m(r, l) = 1.0;
        m(l, r) = 1.0;
    }
    return m;
}

/// Inference-mode explicit adjacency: region-lesion edges are thresholded
/// relative co-occurrence frequencies from the training split. Takes no
/// report, so evaluation-sample ground truth cannot leak in.
inline Tensor build_M_E_infer(const EntityVocabulary& vocab, const ExplicitGraph& graph,
                              double tau) {
    vocab.validate();
    graph.validate(vocab);
    if (tau < 0.0 || tau > 1.0) throw Error(strf("tau %s outside [0,1]", fmt_double(tau).c_str()));
    Tensor m = detail::m_e_base(vocab, graph);
    if (!graph.cooccurrence_counts.empty() && graph.total_training_samples > 0) {
        const int k = vocab.k();
        if (graph.cooccurrence_counts.size() != static_cast<size_t>(k + 1) * (k + 1))
            throw Error(strf("graph: co-occurrence table has %zu cells, expected %d",
                             graph.cooccurrence_counts.size(), (k + 1) * (k + 1)));
        for (int r : vocab.region_indices())
            for (int l : vocab.lesion_indices()) {
                const double freq = static_cast<double>(graph.count(k, r, l)) /
                                    static_cast<double>(graph.total_training_samples);
                if (freq >= tau) {
                    m(r, l) = 1.0;
                    m(l, r) = 1.0;
                }
            }
    }
    return m;
}

/// M_adj = alpha_E * M_E + alpha_I * M_I, entrywise.
inline Tensor fuse_adjacency(const Tensor& m_e, const Tensor& m_i, double alpha_e, double alpha_i) {
    if (!m_e.same_shape(m_i))
        throw ShapeError(strf("fuse_adjacency: %s vs %s", m_e.shape_str().c_str(),
                              m_i.shape_str().c_str()));
    if (alpha_e < 0.0 || alpha_i < 0.0) throw Error("fuse_adjacency: alphas must be non-negative");
    Tensor out = Tensor::zeros(m_e.rows(), m_e.cols());
    for (size_t i = 0; i < out.size(); ++i)
        out.values()[i] = alpha_e * m_e.values()[i] + alpha_i * m_i.values()[i];
    return out;
}

// ---------------------------------------------------------------------------
// Graph spec file: `entity <index> <name> <kind>` lines followed by
// `edge t2t|l2l <i> <j>` lines.
// ---------------------------------------------------------------------------

inline std::string graph_text(const EntityVocabulary& vocab, const ExplicitGraph& graph) {
    std::ostringstream out;
    for (size_t i = 0; i < vocab.entities.size(); ++i)
        out << "entity " << i << ' ' << vocab.entities[i].name << ' '
            << kind_name(vocab.entities[i].kind) << '\n';
    for (auto [a, b] : graph.edges_t2t) out << "edge t2t " << a << ' ' << b << '\n';
    for (auto [a, b] : graph.edges_l2l) out << "edge l2l " << a << ' ' << b << '\n';
    return out.str();
}

inline void save_graph(const std::string& path, const EntityVocabulary& vocab,
                       const ExplicitGraph& graph) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError(strf("cannot open %s for writing", path.c_str()));
    out << graph_text(vocab, graph);
    if (!out) throw IoError(strf("write to %s failed", path.c_str()));
}

inline std::pair<EntityVocabulary, ExplicitGraph> parse_graph_stream(std::istream& in,
                                                                     const std::string& path) {
    EntityVocabulary vocab;
    ExplicitGraph graph;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty() || line[0] == '#') continue;
        std::istringstream ls(line);
        std::string tag;
        ls >> tag;
        if (tag == "entity") {
            int idx;
            std::string name, kind;
            if (!(ls >> idx >> name >> kind))
                throw ParseError(strf("%s:%d: malformed entity line", path.c_str(), lineno));
            if (idx != static_cast<int>(vocab.entities.size()))
                throw ParseError(strf("%s:%d: entity index %d out of order", path.c_str(), lineno, idx));
            vocab.entities.push_back({name, parse_kind(kind), ""});
        } else if (tag == "edge") {
            std::string et;
            int a, b;
            if (!(ls >> et >> a >> b))
                throw ParseError(strf("%s:%d: malformed edge line", path.c_str(), lineno));
            if (et == "t2t")
                graph.edges_t2t.emplace_back(a, b);
            else if (et == "l2l")
                graph.edges_l2l.emplace_back(a, b);
            else
                throw ParseError(strf("%s:%d: unknown edge type '%s'", path.c_str(), lineno, et.c_str()));
        } else {
            throw ParseError(strf("%s:%d: unknown record '%s'", path.c_str(), lineno, tag.c_str()));
        }
    }
    vocab.validate();
    graph.init_counts(vocab.k());
    graph.validate(vocab);
    return {vocab, graph};
}

inline std::pair<EntityVocabulary, ExplicitGraph> parse_graph_text(const std::string& text) {
    std::istringstream in(text);
    return parse_graph_stream(in, "<graph>");
}

inline std::pair<EntityVocabulary, ExplicitGraph> load_graph(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError(strf("cannot open %s", path.c_str()));
    return parse_graph_stream(in, path);
}

} // namespace mrg
