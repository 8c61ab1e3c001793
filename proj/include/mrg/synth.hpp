#pragma once

#include <cinttypes>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "mrg/vocab.hpp"
#include "mrg/tensor.hpp"

namespace mrg {

/// Stack of per-scan patch features; `data` is (scans*patches) x width with
/// scan s occupying rows [s*patches, (s+1)*patches).
struct ScanVolume {
    int scans = 0;
    int patches = 0;
    int width = 0;
    Tensor data;

    /// One row per scan, patches flattened: scans x (patches*width).
    Tensor per_scan_rows() const {
        return Tensor::from_data(scans, patches * width, data.values());
    }
};

struct SyntheticSample {
    int64_t id = 0;
    ScanVolume scan;
    std::vector<int> labels;                      // entity 1..k presence
    std::vector<std::pair<int, int>> gt_pairs;    // (region, lesion) entity indices
    std::vector<int> report;                      // token ids, ends with </s>
};

struct CorpusConfig {
    int total = 40;        // split 7:2:1 into train/test/val
    int scans = 24;        // N
    int patches = 4;       // P
    int d_s = 32;
    int n_regions = 4;
    int n_lesions = 4;
    std::vector<double> prevalence;  // size k; empty -> linear ramp 0.9..0.05
    double snr = 5.0;                // infinity -> noise-free
    double signal = 1.0;             // Frobenius norm of each entity signature
    uint64_t seed = 42;

    int k() const { return n_regions + n_lesions; }
    int train_count() const { return total * 7 / 10; }
    int test_count() const { return total * 2 / 10; }
    int val_count() const { return total - train_count() - test_count(); }

    std::vector<double> effective_prevalence() const {
        if (!prevalence.empty()) {
            if (static_cast<int>(prevalence.size()) != k())
                throw Error(strf("corpus: %zu prevalences for %d entities", prevalence.size(), k()));
            for (double p : prevalence)
                if (p <= 0.0 || p >= 1.0)
                    throw Error(strf("corpus: prevalence %s outside (0,1)", fmt_double(p).c_str()));
            return prevalence;
        }
        std::vector<double> ramp(static_cast<size_t>(k()));
        for (int i = 0; i < k(); ++i)
            ramp[static_cast<size_t>(i)] =
                k() == 1 ? 0.5 : 0.9 + (0.05 - 0.9) * static_cast<double>(i) / (k() - 1);
        return ramp;
    }

    void validate() const {
        if (total < 1 || scans < 1 || patches < 1 || d_s < 1)
            throw Error("corpus: counts and dims must be positive");
        if (n_regions < 1 || n_lesions < 1)
            throw Error("corpus: need at least one region and one lesion");
        if (!(snr > 0.0)) throw Error("corpus: snr must be positive");
        if (!(signal > 0.0)) throw Error("corpus: signal must be positive");
        effective_prevalence();
    }
};

struct Corpus {
    std::vector<SyntheticSample> train, test, val;
};

// ---------------------------------------------------------------------------
// Report grammar (invertible by construction)
// ---------------------------------------------------------------------------

/// Fixed sentence per entity, in entity order:
///   region present: <name> shows <keyword> .      absent: <name> appears normal .
///   lesion present: <name> noted .                absent: (omitted)
/// The keyword token appears iff the entity is present, so labels are exactly
/// recoverable from the report.
inline std::vector<int> report_from_labels(const std::vector<int>& labels,
                                           const EntityVocabulary& evocab,
                                           const TokenVocab& tvocab) {
    if (static_cast<int>(labels.size()) != evocab.k())
        throw ShapeError(strf("report grammar: %zu labels for %d entities", labels.size(),
                              evocab.k()));
    std::vector<int> out;
    const int dot = tvocab.id(".");
    for (int i = 1; i <= evocab.k(); ++i) {
        const auto& e = evocab.at(i);
        const bool present = labels[static_cast<size_t>(i - 1)] != 0;
        if (e.kind == EntityKind::region) {
            out.push_back(tvocab.id(e.name));
            if (present) {
                out.push_back(tvocab.id("shows"));
                out.push_back(tvocab.id(e.keyword));
            } else {
                out.push_back(tvocab.id("appears"));
                out.push_back(tvocab.id("normal"));
            }
            out.push_back(dot);
        } else if (present) {
            out.push_back(tvocab.id(e.name));
            out.push_back(tvocab.id("noted"));
            out.push_back(dot);
        }
    }
    out.push_back(tvocab.end_id());
    return out;
}

/// Inverse of the grammar: entity i is present iff its keyword token occurs.
inline std::vector<int> labels_from_tokens(const std::vector<int>& tokens,
                                           const EntityVocabulary& evocab,
                                           const TokenVocab& tvocab) {
    std::vector<int> labels(static_cast<size_t>(evocab.k()), 0);
    for (int i = 1; i <= evocab.k(); ++i) {
        const int kw = tvocab.id(evocab.at(i).keyword);
        for (int t : tokens)
            if (t == kw) {
                labels[static_cast<size_t>(i - 1)] = 1;
                break;
            }
    }
    return labels;
}

// ---------------------------------------------------------------------------
// Generation
// ---------------------------------------------------------------------------

namespace detail {

/// Rank-1 P x d_s signature per entity, Frobenius norm == signal. Drawn from
/// a dedicated stream so sample generation order can't perturb them.
inline std::vector<std::vector<double>> entity_signatures(const CorpusConfig& cfg) {
    Rng rng(Rng::mix(cfg.seed, 0x516ea7b3ull));
    std::vector<std::vector<double>> sigs;
    sigs.reserve(static_cast<size_t>(cfg.k()));
    for (int e = 0; e < cfg.k(); ++e) {
        std::vector<double> u(static_cast<size_t>(cfg.patches)), v(static_cast<size_t>(cfg.d_s));
        double nu = 0.0, nv = 0.0;
        for (auto& x : u) {
            x = rng.normal();
            nu += x * x;
        }
        for (auto& x : v) {
            x = rng.normal();
            nv += x * x;
        }
        const double denom = std::sqrt(nu) * std::sqrt(nv);
        if (denom == 0.0) throw NumericError("entity signature degenerated to zero");
        std::vector<double> sig(static_cast<size_t>(cfg.patches) * cfg.d_s);
        for (int p = 0; p < cfg.patches; ++p)
            for (int j = 0; j < cfg.d_s; ++j)
                sig[static_cast<size_t>(p) * cfg.d_s + j] =
                    cfg.signal * u[static_cast<size_t>(p)] * v[static_cast<size_t>(j)] / denom;
        sigs.push_back(std::move(sig));
    }
    return sigs;
}

inline SyntheticSample make_sample(int64_t id, const CorpusConfig& cfg,
                                   const std::vector<double>& prevalence,
                                   const std::vector<std::vector<double>>& sigs,
                                   const EntityVocabulary& evocab, const TokenVocab& tvocab) {
    Rng rng(Rng::mix(cfg.seed, static_cast<uint64_t>(id)));
    SyntheticSample s;
    s.id = id;
    s.labels.resize(static_cast<size_t>(cfg.k()));
    for (int i = 0; i < cfg.k(); ++i)
        s.labels[static_cast<size_t>(i)] = rng.uniform() < prevalence[static_cast<size_t>(i)] ? 1 : 0;
    for (int r : evocab.region_indices())
        for (int l : evocab.lesion_indices())
            if (s.labels[static_cast<size_t>(r - 1)] && s.labels[static_cast<size_t>(l - 1)])
                s.gt_pairs.emplace_back(r, l);
    s.scan.scans = cfg.scans;
    s.scan.patches = cfg.patches;
    s.scan.width = cfg.d_s;
    s.scan.data = Tensor::zeros(cfg.scans * cfg.patches, cfg.d_s);
    auto& vf = s.scan.data.values();
    for (int i = 0; i < cfg.k(); ++i) {
        if (!s.labels[static_cast<size_t>(i)]) continue;
        const int scan_at = static_cast<int>(rng.below(static_cast<uint64_t>(cfg.scans)));
        const size_t base = static_cast<size_t>(scan_at) * cfg.patches * cfg.d_s;
        const auto& sig = sigs[static_cast<size_t>(i)];
        for (size_t j = 0; j < sig.size(); ++j) vf[base + j] += sig[j];
    }
    if (!std::isinf(cfg.snr)) {
        const double sd = cfg.signal / cfg.snr;
        for (auto& x : vf) x += sd * rng.normal();
    }
    s.report = report_from_labels(s.labels, evocab, tvocab);
    return s;
}

} // namespace detail

inline Corpus generate_corpus(const CorpusConfig& cfg, const EntityVocabulary& evocab,
                              const TokenVocab& tvocab) {
    cfg.validate();
    if (evocab.k() != cfg.k())
        throw Error(strf("corpus: config k=%d vs vocabulary k=%d", cfg.k(), evocab.k()));
    const auto prevalence = cfg.effective_prevalence();
    const auto sigs = detail::entity_signatures(cfg);
    Corpus corpus;
    int64_t id = 0;
    auto fill = [&](std::vector<SyntheticSample>& split, int count) {
        split.reserve(static_cast<size_t>(count));
        for (int i = 0; i < count; ++i)
            split.push_back(detail::make_sample(id++, cfg, prevalence, sigs, evocab, tvocab));
    };
    fill(corpus.train, cfg.train_count());
    fill(corpus.test, cfg.test_count());
    fill(corpus.val, cfg.val_count());
    return corpus;
}

/// Training-split co-occurrence counts for the inference-mode explicit graph.
inline void cooccurrence_stats(const std::vector<SyntheticSample>& train_split, int k,
                               ExplicitGraph& graph) {
    graph.init_counts(k);
    graph.total_training_samples = static_cast<int64_t>(train_split.size());
    for (const auto& s : train_split)
        for (auto [r, l] : s.gt_pairs) graph.add_count(k, r, l);
}

// ---------------------------------------------------------------------------
// Dataset files: one header line, then one line per sample with the feature
// block hex-encoded (bit-exact round trip).
// ---------------------------------------------------------------------------

namespace detail {

inline std::string hex_f64(const std::vector<double>& v) {
    static const char* digits = "0123456789abcdef";
    std::string out;
    out.reserve(v.size() * 16);
    for (double d : v) {
        const uint64_t bits = std::bit_cast<uint64_t>(d);
        for (int i = 15; i >= 0; --i) out += digits[(bits >> (4 * i)) & 0xF];
    }
    return out;
}

inline std::vector<double> unhex_f64(const std::string& s, size_t expect, const std::string& where) {
    if (s.size() != expect * 16)
        throw ParseError(strf("%s: feature blob has %zu hex chars, expected %zu", where.c_str(),
                              s.size(), expect * 16));
    std::vector<double> out(expect);
    for (size_t i = 0; i < expect; ++i) {
        uint64_t bits = 0;
        for (size_t j = 0; j < 16; ++j) {
            const char c = s[i * 16 + j];
            uint64_t nib;
            if (c >= '0' && c <= '9') nib = static_cast<uint64_t>(c - '0');
            else if (c >= 'a' && c <= 'f') nib = static_cast<uint64_t>(c - 'a' + 10);
            else throw ParseError(strf("%s: bad hex digit '%c'", where.c_str(), c));
            bits = (bits << 4) | nib;
        }
        out[i] = std::bit_cast<double>(bits);
    }
    return out;
}

} // namespace detail

inline void save_mdata(const std::string& path, const std::vector<SyntheticSample>& samples,
                       int scans, int patches, int width, int k) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError(strf("cannot open %s for writing", path.c_str()));
    out << "mdata 1 scans=" << scans << " patches=" << patches << " width=" << width
        << " k=" << k << '\n';
    for (const auto& s : samples) {
        out << "sample id=" << s.id << " labels=";
        for (int l : s.labels) out << (l ? '1' : '0');
        out << " pairs=";
        if (s.gt_pairs.empty()) {
            out << '-';
        } else {
            for (size_t i = 0; i < s.gt_pairs.size(); ++i) {
                if (i) out << ';';
                out << s.gt_pairs[i].first << ':' << s.gt_pairs[i].second;
            }
        }
        out << " report=";
        for (size_t i = 0; i < s.report.size(); ++i) {
            if (i) out << ',';
            out << s.report[i];
        }
        out << " vf=" << detail::hex_f64(s.scan.data.values()) << '\n';
    }
    if (!out) throw IoError(strf("write to %s failed", path.c_str()));
}

inline std::vector<SyntheticSample> load_mdata(const std::string& path, int expect_k = -1) {
    std::ifstream in(path);
    if (!in) throw IoError(strf("cannot open %s", path.c_str()));
    std::string line;
    int lineno = 0;
    auto where = [&]() { return strf("%s:%d", path.c_str(), lineno); };
    if (!std::getline(in, line)) throw ParseError(strf("%s: empty dataset file", path.c_str()));
    ++lineno;
    int scans = 0, patches = 0, width = 0, k = 0, version = 0;
    {
        std::istringstream hs(line);
        std::string magic;
        hs >> magic >> version;
        if (magic != "mdata" || version != 1)
            throw ParseError(strf("%s: not an mdata v1 file", where().c_str()));
        std::string kv;
        while (hs >> kv) {
            const auto eq = kv.find('=');
            if (eq == std::string::npos)
                throw ParseError(strf("%s: malformed header field '%s'", where().c_str(), kv.c_str()));
            const std::string key = kv.substr(0, eq);
            const int val = std::stoi(kv.substr(eq + 1));
            if (key == "scans") scans = val;
            else if (key == "patches") patches = val;
            else if (key == "width") width = val;
            else if (key == "k") k = val;
            else throw ParseError(strf("%s: unknown header field '%s'", where().c_str(), key.c_str()));
        }
        if (scans < 1 || patches < 1 || width < 1 || k < 1)
            throw ParseError(strf("%s: incomplete header", where().c_str()));
        if (expect_k >= 0 && k != expect_k)
            throw ParseError(strf("%s: dataset k=%d but graph has k=%d", where().c_str(), k, expect_k));
    }
    std::vector<SyntheticSample> out;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::istringstream ls(line);
        std::string tag;
        ls >> tag;
        if (tag != "sample") throw ParseError(strf("%s: expected 'sample' record", where().c_str()));
        SyntheticSample s;
        std::string field;
        bool have_id = false, have_labels = false, have_pairs = false, have_report = false,
             have_vf = false;
        while (ls >> field) {
            const auto eq = field.find('=');
            if (eq == std::string::npos)
                throw ParseError(strf("%s: malformed field '%s'", where().c_str(), field.c_str()));
            const std::string key = field.substr(0, eq);
            const std::string val = field.substr(eq + 1);
            if (key == "id") {
                s.id = std::stoll(val);
                have_id = true;
            } else if (key == "labels") {
                if (static_cast<int>(val.size()) != k)
                    throw ParseError(strf("%s: %zu labels, expected %d", where().c_str(), val.size(), k));
                for (char c : val) {
                    if (c != '0' && c != '1')
                        throw ParseError(strf("%s: label char '%c'", where().c_str(), c));
                    s.labels.push_back(c == '1' ? 1 : 0);
                }
                have_labels = true;
            } else if (key == "pairs") {
                if (val != "-") {
                    std::istringstream ps(val);
                    std::string pair;
                    while (std::getline(ps, pair, ';')) {
                        const auto colon = pair.find(':');
                        if (colon == std::string::npos)
                            throw ParseError(strf("%s: malformed pair '%s'", where().c_str(), pair.c_str()));
                        s.gt_pairs.emplace_back(std::stoi(pair.substr(0, colon)),
                                                std::stoi(pair.substr(colon + 1)));
                    }
                }
                have_pairs = true;
            } else if (key == "report") {
                std::istringstream rs(val);
                std::string tok;
                while (std::getline(rs, tok, ',')) s.report.push_back(std::stoi(tok));
                if (s.report.empty())
                    throw ParseError(strf("%s: empty report", where().c_str()));
                have_report = true;
            } else if (key == "vf") {
                const size_t expect = static_cast<size_t>(scans) * patches * width;
                s.scan.scans = scans;
                s.scan.patches = patches;
                s.scan.width = width;
                s.scan.data = Tensor::from_data(scans * patches, width,
                                                detail::unhex_f64(val, expect, where()));
                have_vf = true;
            } else {
                throw ParseError(strf("%s: unknown field '%s'", where().c_str(), key.c_str()));
            }
        }
        if (!(have_id && have_labels && have_pairs && have_report && have_vf))
            throw ParseError(strf("%s: incomplete sample record", where().c_str()));
        out.push_back(std::move(s));
    }
    return out;
}

} // namespace mrg
