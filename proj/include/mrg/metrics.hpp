#pragma once

#include <algorithm>
#include <cinttypes>
#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "mrg/common.hpp"

namespace mrg {

struct EvalPair {
    int64_t id = 0;
    std::vector<int> candidate;
    std::vector<int> reference;
};

inline void check_pairs(const std::vector<EvalPair>& pairs, const char* metric) {
    if (pairs.empty()) throw Error(strf("%s: empty evaluation set", metric));
    for (const auto& p : pairs)
        if (p.reference.empty())
            throw Error(strf("%s: sample %" PRId64 " has an empty reference", metric, p.id));
}

namespace detail {

using NgramCounts = std::map<std::vector<int>, int>;

inline NgramCounts ngram_counts(const std::vector<int>& seq, int n) {
    NgramCounts out;
    if (static_cast<int>(seq.size()) >= n)
        for (size_t i = 0; i + n <= seq.size(); ++i)
            ++out[std::vector<int>(seq.begin() + i, seq.begin() + i + n)];
    return out;
}

inline int lcs_length(const std::vector<int>& a, const std::vector<int>& b) {
    const size_t m = a.size(), n = b.size();
    std::vector<int> prev(n + 1, 0), cur(n + 1, 0);
    for (size_t i = 1; i <= m; ++i) {
        for (size_t j = 1; j <= n; ++j)
            cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
        std::swap(prev, cur);
    }
    return prev[n];
}

} // namespace detail

// ---------------------------------------------------------------------------
// BLEU-4 (corpus level)
// ---------------------------------------------------------------------------

/// Geometric mean of modified n-gram precisions (n=1..4) times the brevity
/// penalty, accumulated over the whole corpus. Optional add-one smoothing for
/// tiny corpora; off by default.
inline double bleu4(const std::vector<EvalPair>& pairs, bool smooth = false) {
    check_pairs(pairs, "bleu4");
    double clipped[4] = {0, 0, 0, 0}, totals[4] = {0, 0, 0, 0};
    double cand_len = 0.0, ref_len = 0.0;
    for (const auto& p : pairs) {
        cand_len += static_cast<double>(p.candidate.size());
        ref_len += static_cast<double>(p.reference.size());
        for (int n = 1; n <= 4; ++n) {
            const auto cand = detail::ngram_counts(p.candidate, n);
            const auto ref = detail::ngram_counts(p.reference, n);
            for (const auto& [gram, count] : cand) {
                totals[n - 1] += count;
                const auto it = ref.find(gram);
                if (it != ref.end()) clipped[n - 1] += std::min(count, it->second);
            }
        }
    }
    if (cand_len == 0.0) return 0.0;
    double log_p_sum = 0.0;
    for (int n = 0; n < 4; ++n) {
        const double num = smooth ? clipped[n] + 1.0 : clipped[n];
        const double den = smooth ? totals[n] + 1.0 : totals[n];
        if (num == 0.0 || den == 0.0) return 0.0;
        log_p_sum += std::log(num / den);
    }
    const double bp = cand_len > ref_len ? 1.0 : std::exp(1.0 - ref_len / cand_len);
    // Exact identical corpora: every precision is exactly 1 and BP is 1.
    if (log_p_sum == 0.0) return bp;
    return bp * std::exp(log_p_sum / 4.0);
}

// ---------------------------------------------------------------------------
// ROUGE-L
// ---------------------------------------------------------------------------

/// Mean per-pair LCS F-measure with the standard recall-weighted beta.
inline double rouge_l(const std::vector<EvalPair>& pairs, double beta = 1.2) {
    check_pairs(pairs, "rouge_l");
    const double b2 = beta * beta;
    double sum = 0.0;
    for (const auto& p : pairs) {
        if (p.candidate.empty()) continue;  // F=0
        const double lcs = detail::lcs_length(p.candidate, p.reference);
        if (lcs == 0.0) continue;
        const double prec = lcs / static_cast<double>(p.candidate.size());
        const double rec = lcs / static_cast<double>(p.reference.size());
        sum += ((1.0 + b2) * prec * rec) / (rec + b2 * prec);
    }
    return sum / static_cast<double>(pairs.size());
}

// ---------------------------------------------------------------------------
// CIDEr
// ---------------------------------------------------------------------------

/// Average over n=1..4 of TF-IDF cosine similarity, scaled by 10. IDF is
/// computed over the reference corpus: idf(g) = ln(|refs|) - ln(max(df(g),1)).
/// A single-document corpus is well-defined (all IDF weights zero) but
/// carries no signal; callers should flag it.
inline double cider(const std::vector<EvalPair>& pairs) {
    check_pairs(pairs, "cider");
    const double log_n = std::log(static_cast<double>(pairs.size()));
    std::map<std::vector<int>, int> df[4];
    for (const auto& p : pairs)
        for (int n = 1; n <= 4; ++n)
            for (const auto& [gram, count] : detail::ngram_counts(p.reference, n)) ++df[n - 1][gram];
    double corpus = 0.0;
    for (const auto& p : pairs) {
        double pair_score = 0.0;
        for (int n = 1; n <= 4; ++n) {
            const auto cand = detail::ngram_counts(p.candidate, n);
            const auto ref = detail::ngram_counts(p.reference, n);
            auto weight = [&](const std::vector<int>& gram, int count) {
                const auto it = df[n - 1].find(gram);
                const double d = it == df[n - 1].end() ? 1.0 : std::max(1.0, static_cast<double>(it->second));
                return count * (log_n - std::log(d));
            };
            double dot = 0.0, nc = 0.0, nr = 0.0;
            for (const auto& [gram, count] : cand) {
                const double w = weight(gram, count);
                nc += w * w;
                const auto it = ref.find(gram);
                if (it != ref.end()) dot += w * weight(gram, it->second);
            }
            for (const auto& [gram, count] : ref) {
                const double w = weight(gram, count);
                nr += w * w;
            }
            if (nc == 0.0 || nr == 0.0) continue;
            // Exact cosine 1 for identical weighted vectors (identical-pair maximum).
            pair_score += cand == ref ? 1.0 : dot / (std::sqrt(nc) * std::sqrt(nr));
        }
        corpus += 10.0 * pair_score / 4.0;
    }
    return corpus / static_cast<double>(pairs.size());
}

// ---------------------------------------------------------------------------
// METEOR-lite (exact unigram matching only)
// ---------------------------------------------------------------------------

/// Exact-match leftmost-greedy unigram alignment, recall-weighted harmonic
/// mean (9:1), times the fragmentation penalty 1 - 0.5*(chunks/matches)^3.
/// No stemming or synonym resources; documented simplification.
inline double meteor_lite(const std::vector<EvalPair>& pairs) {
    check_pairs(pairs, "meteor_lite");
    double sum = 0.0;
    for (const auto& p : pairs) {
        if (p.candidate.empty()) continue;
        std::vector<char> ref_used(p.reference.size(), 0);
        std::vector<std::pair<int, int>> matches;  // (candidate pos, reference pos), in order
        for (size_t i = 0; i < p.candidate.size(); ++i) {
            for (size_t j = 0; j < p.reference.size(); ++j) {
                if (!ref_used[j] && p.reference[j] == p.candidate[i]) {
                    ref_used[j] = 1;
                    matches.emplace_back(static_cast<int>(i), static_cast<int>(j));
                    break;
                }
            }
        }
        const double m = static_cast<double>(matches.size());
        if (m == 0.0) continue;
        const double prec = m / static_cast<double>(p.candidate.size());
        const double rec = m / static_cast<double>(p.reference.size());
        const double fmean = 10.0 * prec * rec / (rec + 9.0 * prec);
        // A chunk extends while the alignment is contiguous in both sequences.
        int chunks = 1;
        for (size_t i = 1; i < matches.size(); ++i)
            if (matches[i].first != matches[i - 1].first + 1 ||
                matches[i].second != matches[i - 1].second + 1)
                ++chunks;
        const double frag = static_cast<double>(chunks) / m;
        sum += fmean * (1.0 - 0.5 * frag * frag * frag);
    }
    return sum / static_cast<double>(pairs.size());
}

// ---------------------------------------------------------------------------
// Keyword precision/recall/F1 (clinical-evaluation analogue)
// ---------------------------------------------------------------------------

struct KeywordLexicon {
    std::vector<std::string> entity_names;  // k entries, entity order
    std::vector<int> keyword_ids;           // token id whose presence marks the entity
};

struct EntityPrf {
    std::string entity;
    double precision = 1.0;
    double recall = 1.0;
    double f1 = 1.0;
};

struct KeywordReport {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    std::vector<EntityPrf> per_entity;
    double f1_median = 0.0;
    double f1_iqr = 0.0;
    double f1_variance = 0.0;
};

namespace detail {

/// R's type-7 quantile (linear interpolation) on a copy of the data.
inline double quantile7(std::vector<double> v, double q) {
    std::sort(v.begin(), v.end());
    const double h = (static_cast<double>(v.size()) - 1.0) * q;
    const size_t lo = static_cast<size_t>(h);
    if (lo + 1 >= v.size()) return v.back();
    return v[lo] + (h - static_cast<double>(lo)) * (v[lo + 1] - v[lo]);
}

inline void prf_from_counts(double tp, double fp, double fn, double& prec, double& rec,
                            double& f1) {
    prec = (tp + fp) == 0.0 ? 1.0 : tp / (tp + fp);
    rec = (tp + fn) == 0.0 ? 1.0 : tp / (tp + fn);
    f1 = (prec + rec) == 0.0 ? 0.0 : 2.0 * prec * rec / (prec + rec);
}

} // namespace detail

/// Micro-averaged keyword P/R/F1 plus the per-entity F1 distribution
/// (median, interquartile range, population variance) behind the balance
/// analysis. An entity with no occurrences on either side scores 1 (nothing
/// to miss).
inline KeywordReport keyword_prf(const std::vector<EvalPair>& pairs,
                                 const KeywordLexicon& lexicon) {
    check_pairs(pairs, "keyword_prf");
    if (lexicon.keyword_ids.empty()) throw Error("keyword_prf: empty lexicon");
    if (lexicon.entity_names.size() != lexicon.keyword_ids.size())
        throw ShapeError(strf("keyword_prf: %zu names vs %zu keyword ids",
                              lexicon.entity_names.size(), lexicon.keyword_ids.size()));
    const size_t k = lexicon.keyword_ids.size();
    std::vector<double> tp(k, 0), fp(k, 0), fn(k, 0);
    auto has_token = [](const std::vector<int>& seq, int id) {
        return std::find(seq.begin(), seq.end(), id) != seq.end();
    };
    for (const auto& p : pairs)
        for (size_t e = 0; e < k; ++e) {
            const bool in_cand = has_token(p.candidate, lexicon.keyword_ids[e]);
            const bool in_ref = has_token(p.reference, lexicon.keyword_ids[e]);
            if (in_cand && in_ref) tp[e] += 1;
            else if (in_cand) fp[e] += 1;
            else if (in_ref) fn[e] += 1;
        }
    KeywordReport rep;
    double tp_all = 0, fp_all = 0, fn_all = 0;
    std::vector<double> f1s;
    f1s.reserve(k);
    for (size_t e = 0; e < k; ++e) {
        tp_all += tp[e];
        fp_all += fp[e];
        fn_all += fn[e];
        EntityPrf row;
        row.entity = lexicon.entity_names[e];
        detail::prf_from_counts(tp[e], fp[e], fn[e], row.precision, row.recall, row.f1);
        f1s.push_back(row.f1);
        rep.per_entity.push_back(std::move(row));
    }
    detail::prf_from_counts(tp_all, fp_all, fn_all, rep.precision, rep.recall, rep.f1);
    rep.f1_median = detail::quantile7(f1s, 0.5);
    rep.f1_iqr = detail::quantile7(f1s, 0.75) - detail::quantile7(f1s, 0.25);
    double mean = 0.0;
    for (double v : f1s) mean += v;
    mean /= static_cast<double>(f1s.size());
    double var = 0.0;
    for (double v : f1s) var += (v - mean) * (v - mean);
    rep.f1_variance = var / static_cast<double>(f1s.size());
    return rep;
}

} // namespace mrg
