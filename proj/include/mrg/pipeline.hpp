#pragma once

#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "mrg/checkpoint.hpp"
#include "mrg/config.hpp"
#include "mrg/metrics.hpp"
#include "mrg/model.hpp"

namespace mrg {

namespace fs = std::filesystem;

/// Recorded in every manifest so archived runs can be matched to the code
/// that produced them.
inline constexpr const char* kPipelineVersion = "mrg-1.0.0";

inline std::string hash_hex(uint64_t h) {
    return strf("%016llx", static_cast<unsigned long long>(h));
}

inline std::string manifest_header(const char* command, const RunConfig& cfg) {
    std::string out;
    out += strf("manifest %s\n", command);
    out += strf("version %s\n", kPipelineVersion);
    out += "config_hash " + hash_hex(config_hash(cfg)) + "\n";
    out += strf("seed %llu\n", static_cast<unsigned long long>(cfg.seed));
    out += strf("threads %d\n", cfg.threads);
    return out;
}

namespace detail {

inline void write_text_file(const fs::path& path, const std::string& content) {
    std::ofstream out(path, std::ios::trunc | std::ios::binary);
    if (!out) throw IoError(strf("cannot open %s for writing", path.string().c_str()));
    out << content;
    if (!out) throw IoError(strf("write to %s failed", path.string().c_str()));
}

inline std::vector<int> strip_end(std::vector<int> seq, int end_id) {
    while (!seq.empty() && seq.back() == end_id) seq.pop_back();
    return seq;
}

} // namespace detail

// ---------------------------------------------------------------------------
// Dataset generation
// ---------------------------------------------------------------------------

struct GenDataResult {
    fs::path dir;
    int train = 0, test = 0, val = 0;
};

/// Write graph.txt, {train,test,val}.mdata and a deterministic manifest into
/// `out_dir`. The manifest records content hashes and echoes the canonical
/// configuration; no timestamps or absolute paths appear anywhere.
inline GenDataResult run_gen_data(const RunConfig& cfg, const std::string& out_dir) {
    cfg.validate();
    fs::create_directories(out_dir);
    const fs::path dir(out_dir);

    auto [evocab, graph] = default_entity_graph(cfg.regions, cfg.lesions);
    TokenVocab tvocab = build_token_vocab(evocab, cfg.instruction);
    const CorpusConfig cc = cfg.corpus_config();
    Corpus corpus = generate_corpus(cc, evocab, tvocab);

    save_graph((dir / "graph.txt").string(), evocab, graph);
    save_mdata((dir / "train.mdata").string(), corpus.train, cc.scans, cc.patches, cc.d_s, cc.k());
    save_mdata((dir / "test.mdata").string(), corpus.test, cc.scans, cc.patches, cc.d_s, cc.k());
    save_mdata((dir / "val.mdata").string(), corpus.val, cc.scans, cc.patches, cc.d_s, cc.k());

    std::string man = manifest_header("gen-data", cfg);
    man += "graph graph.txt " + hash_hex(file_hash((dir / "graph.txt").string())) + "\n";
    man += strf("train train.mdata %s %zu\n",
                hash_hex(file_hash((dir / "train.mdata").string())).c_str(), corpus.train.size());
    man += strf("test test.mdata %s %zu\n",
                hash_hex(file_hash((dir / "test.mdata").string())).c_str(), corpus.test.size());
    man += strf("val val.mdata %s %zu\n",
                hash_hex(file_hash((dir / "val.mdata").string())).c_str(), corpus.val.size());
    man += "[config]\n" + config_text(cfg);
    detail::write_text_file(dir / "manifest.txt", man);

    return {dir, static_cast<int>(corpus.train.size()), static_cast<int>(corpus.test.size()),
            static_cast<int>(corpus.val.size())};
}

// ---------------------------------------------------------------------------
// Data loading
// ---------------------------------------------------------------------------

struct LoadedData {
    EntityVocabulary evocab;
    ExplicitGraph graph;  // co-occurrence counts filled from the train split
    Corpus corpus;
};

inline LoadedData load_dataset(const std::string& data_dir) {
    const fs::path dir(data_dir);
    LoadedData d;
    std::tie(d.evocab, d.graph) = load_graph((dir / "graph.txt").string());
    assign_keywords(d.evocab);
    const int k = d.evocab.k();
    d.corpus.train = load_mdata((dir / "train.mdata").string(), k);
    d.corpus.test = load_mdata((dir / "test.mdata").string(), k);
    d.corpus.val = load_mdata((dir / "val.mdata").string(), k);
    cooccurrence_stats(d.corpus.train, k, d.graph);
    return d;
}

// ---------------------------------------------------------------------------
// Checkpoint <-> model glue
// ---------------------------------------------------------------------------

inline CheckpointContents make_checkpoint(const Model& m, const AdamW* opt, uint64_t rng_state,
                                          int64_t best_epoch, double best_val_loss) {
    CheckpointContents c;
    c.config_text = config_text(m.cfg);
    c.graph_text = graph_text(m.evocab, m.graph);
    c.tokens = m.tvocab.tokens();
    c.params = snapshot_params(m.params);
    if (opt) {
        c.has_optimizer = true;
        c.optimizer_step = opt->step_count();
        c.adam_m = opt->first_moments();
        c.adam_v = opt->second_moments();
    }
    c.ema = m.ema;
    c.cooccurrence = m.graph.cooccurrence_counts;
    c.cooccurrence_total = m.graph.total_training_samples;
    c.rng_state = rng_state;
    c.best_epoch = best_epoch;
    c.best_val_loss = best_val_loss;
    return c;
}

/// Rebuild the full model a checkpoint describes: same config, same graph,
/// same token order, parameters and EMA restored bit-for-bit.
inline Model model_from_checkpoint(const CheckpointContents& c) {
    RunConfig cfg = parse_config_text(c.config_text);
    auto [evocab, graph] = parse_graph_text(c.graph_text);
    assign_keywords(evocab);
    const int k = evocab.k();
    const size_t cells = static_cast<size_t>(k + 1) * static_cast<size_t>(k + 1);
    if (!c.cooccurrence.empty() && c.cooccurrence.size() != cells)
        throw ShapeError(strf("checkpoint: %zu co-occurrence cells for %d entities",
                              c.cooccurrence.size(), k));
    if (!c.cooccurrence.empty()) {
        graph.cooccurrence_counts = c.cooccurrence;
        graph.total_training_samples = c.cooccurrence_total;
    }
    Rng rng(Rng::mix(cfg.seed, fnv1a64("model-init")));
    Model m = Model::init(cfg, std::move(evocab), std::move(graph), rng);
    if (m.tvocab.tokens() != c.tokens)
        throw Error("checkpoint: token vocabulary does not match the rebuilt model");
    restore_params(m.params, c.params);
    if (c.ema.values.size() != static_cast<size_t>(k))
        throw ShapeError(strf("checkpoint: EMA has %zu entries for %d entities",
                              c.ema.values.size(), k));
    m.ema = c.ema;
    return m;
}

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

struct TrainResult {
    fs::path checkpoint_path;
    int64_t steps = 0;
    int64_t best_epoch = -1;
    double best_val_gen_loss = 0.0;
    double final_train_loss = 0.0;
};

/// Full training run: shuffled mini-batches, per-step loss log, per-epoch
/// status log and validation, checkpoint kept at the best validation
/// generation loss. Aborts with the step number if the loss stops being
/// finite. All outputs are byte-deterministic for a given config and dataset.
using EpochCallback = std::function<void(int epoch, const EvalLosses& val, bool improved)>;

inline TrainResult run_train(const RunConfig& cfg, const std::string& data_dir,
                             const std::string& out_dir, const EpochCallback& on_epoch = {}) {
    cfg.validate();
    fs::create_directories(out_dir);
    const fs::path dir(out_dir);

    LoadedData data = load_dataset(data_dir);
    if (data.corpus.train.empty()) throw Error("train: empty training split");
    if (data.corpus.val.empty()) throw Error("train: empty validation split");

    Rng model_rng(Rng::mix(cfg.seed, fnv1a64("model-init")));
    Model model = Model::init(cfg, data.evocab, data.graph, model_rng);
    AdamW opt(trainable_tensors(model.params), cfg.adamw_config());
    Rng shuffle_rng(Rng::mix(cfg.seed, fnv1a64("batch-shuffle")));

    const int k = model.evocab.k();
    std::string train_log = "epoch,step,loss,gen_loss,cls_loss\n";
    std::string status_log = "epoch,step,entity,loss,score,word\n";
    std::string val_log = "epoch,val_gen_loss,val_cls_loss,improved\n";

    TrainResult res;
    res.checkpoint_path = dir / "checkpoint.bin";
    double best = std::numeric_limits<double>::infinity();
    int64_t step = 0;

    const size_t n = data.corpus.train.size();
    std::vector<size_t> order(n);
    for (size_t i = 0; i < n; ++i) order[i] = i;

    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        for (size_t i = n; i > 1; --i)
            std::swap(order[i - 1], order[shuffle_rng.below(i)]);

        for (size_t start = 0; start < n; start += static_cast<size_t>(cfg.batch)) {
            std::vector<const SyntheticSample*> batch;
            for (size_t j = start; j < std::min(n, start + static_cast<size_t>(cfg.batch)); ++j)
                batch.push_back(&data.corpus.train[order[j]]);
            BatchStats stats = train_batch(model, opt, batch);
            ++step;
            if (!std::isfinite(stats.loss))
                throw NumericError(strf("training diverged at step %lld (loss %s)",
                                        static_cast<long long>(step),
                                        fmt_double(stats.loss).c_str()));
            train_log += strf("%d,%lld,%s,%s,%s\n", epoch, static_cast<long long>(step),
                              fmt_double(stats.loss).c_str(), fmt_double(stats.gen_loss).c_str(),
                              fmt_double(stats.cls_loss).c_str());
            res.final_train_loss = stats.loss;
            if (cfg.entity_embed)
                for (int e = 0; e < k; ++e)
                    status_log += strf("%d,%lld,%s,%s,%s,%s\n", epoch,
                                       static_cast<long long>(step),
                                       model.evocab.at(e + 1).name.c_str(),
                                       fmt_double(stats.e_s[static_cast<size_t>(e)]).c_str(),
                                       fmt_double(stats.scores[static_cast<size_t>(e)]).c_str(),
                                       stats.status_words[static_cast<size_t>(e)].c_str());
        }

        EvalLosses val = evaluate_losses(model, data.corpus.val);
        const bool improved = val.gen_loss < best;
        if (improved) {
            best = val.gen_loss;
            res.best_epoch = epoch;
            write_checkpoint(res.checkpoint_path.string(),
                             make_checkpoint(model, &opt, shuffle_rng.state(), epoch, best));
        }
        val_log += strf("%d,%s,%s,%d\n", epoch, fmt_double(val.gen_loss).c_str(),
                        fmt_double(val.cls_loss).c_str(), improved ? 1 : 0);
        if (on_epoch) on_epoch(epoch, val, improved);
    }

    res.steps = step;
    res.best_val_gen_loss = best;
    detail::write_text_file(dir / "training_log.csv", train_log);
    detail::write_text_file(dir / "status_log.csv", status_log);
    detail::write_text_file(dir / "val_log.csv", val_log);

    std::string man = manifest_header("train", cfg);
    man += "graph " + hash_hex(file_hash((fs::path(data_dir) / "graph.txt").string())) + "\n";
    man += "train_data " + hash_hex(file_hash((fs::path(data_dir) / "train.mdata").string())) + "\n";
    man += "val_data " + hash_hex(file_hash((fs::path(data_dir) / "val.mdata").string())) + "\n";
    man += strf("steps %lld\n", static_cast<long long>(res.steps));
    man += strf("best_epoch %lld\n", static_cast<long long>(res.best_epoch));
    man += "best_val_gen_loss " + std::string(fmt_double(res.best_val_gen_loss)) + "\n";
    man += "checkpoint checkpoint.bin " + hash_hex(file_hash(res.checkpoint_path.string())) + "\n";
    man += "[config]\n" + config_text(cfg);
    detail::write_text_file(dir / "manifest.txt", man);
    return res;
}

// ---------------------------------------------------------------------------
// Evaluation
// ---------------------------------------------------------------------------

struct EvalResult {
    int samples = 0;
    bool single_document = false;  // CIDEr idf is degenerate with one reference
    double bleu = 0.0, rouge = 0.0, cider_score = 0.0, meteor = 0.0;
    KeywordReport keywords;
};

inline KeywordLexicon build_lexicon(const EntityVocabulary& evocab, const TokenVocab& tvocab) {
    KeywordLexicon lex;
    for (int i = 1; i <= evocab.k(); ++i) {
        lex.entity_names.push_back(evocab.at(i).name);
        lex.keyword_ids.push_back(tvocab.id(evocab.at(i).keyword));
    }
    return lex;
}

/// Score a model checkpoint against one dataset split: greedy generation per
/// sample, text-overlap metrics plus keyword precision/recall, and per-entity
/// F1 with distribution statistics. `self_eval` scores references against
/// themselves (a debug path that should pin every metric at its maximum).
inline EvalResult run_eval(const std::string& checkpoint_path, const std::string& mdata_path,
                           const std::string& out_dir, bool self_eval = false) {
    fs::create_directories(out_dir);
    const fs::path dir(out_dir);

    CheckpointContents ckpt = read_checkpoint(checkpoint_path);
    Model model = model_from_checkpoint(ckpt);
    std::vector<SyntheticSample> samples = load_mdata(mdata_path, model.evocab.k());
    if (samples.empty()) throw Error("eval: empty sample set");

    const int end_id = model.tvocab.end_id();
    std::vector<EvalPair> pairs;
    std::string gen_text;
    for (const auto& s : samples) {
        EvalPair p;
        p.id = s.id;
        p.reference = detail::strip_end(s.report, end_id);
        p.candidate = self_eval
                          ? p.reference
                          : detail::strip_end(generate_report(model, s, GenerationMode::greedy_mode()),
                                              end_id);
        gen_text += strf("id %lld\n", static_cast<long long>(s.id));
        gen_text += "ref " + model.tvocab.detok(p.reference) + "\n";
        gen_text += "hyp " + model.tvocab.detok(p.candidate) + "\n\n";
        pairs.push_back(std::move(p));
    }

    EvalResult res;
    res.samples = static_cast<int>(samples.size());
    res.single_document = samples.size() == 1;
    res.bleu = bleu4(pairs);
    res.rouge = rouge_l(pairs);
    res.cider_score = cider(pairs);
    res.meteor = meteor_lite(pairs);
    res.keywords = keyword_prf(pairs, build_lexicon(model.evocab, model.tvocab));

    std::string metrics_csv = "metric,value\n";
    metrics_csv += strf("samples,%d\n", res.samples);
    metrics_csv += strf("self_eval,%d\n", self_eval ? 1 : 0);
    metrics_csv += strf("cider_single_document,%d\n", res.single_document ? 1 : 0);
    metrics_csv += "bleu4," + std::string(fmt_double(res.bleu)) + "\n";
    metrics_csv += "rouge_l," + std::string(fmt_double(res.rouge)) + "\n";
    metrics_csv += "cider," + std::string(fmt_double(res.cider_score)) + "\n";
    metrics_csv += "meteor_lite," + std::string(fmt_double(res.meteor)) + "\n";
    metrics_csv += "keyword_precision," + std::string(fmt_double(res.keywords.precision)) + "\n";
    metrics_csv += "keyword_recall," + std::string(fmt_double(res.keywords.recall)) + "\n";
    metrics_csv += "keyword_f1," + std::string(fmt_double(res.keywords.f1)) + "\n";
    metrics_csv += "keyword_f1_median," + std::string(fmt_double(res.keywords.f1_median)) + "\n";
    metrics_csv += "keyword_f1_iqr," + std::string(fmt_double(res.keywords.f1_iqr)) + "\n";
    metrics_csv += "keyword_f1_variance," + std::string(fmt_double(res.keywords.f1_variance)) + "\n";
    detail::write_text_file(dir / "metrics.csv", metrics_csv);

    std::string entity_csv = "entity,precision,recall,f1\n";
    for (const auto& e : res.keywords.per_entity)
        entity_csv += e.entity + "," + fmt_double(e.precision) + "," + fmt_double(e.recall) + "," +
                      fmt_double(e.f1) + "\n";
    detail::write_text_file(dir / "entity_f1.csv", entity_csv);
    detail::write_text_file(dir / "generations.txt", gen_text);

    std::string man = manifest_header("eval", model.cfg);
    man += "checkpoint " + hash_hex(file_hash(checkpoint_path)) + "\n";
    man += "data " + hash_hex(file_hash(mdata_path)) + "\n";
    man += strf("self_eval %d\n", self_eval ? 1 : 0);
    man += strf("samples %d\n", res.samples);
    detail::write_text_file(dir / "manifest.txt", man);
    return res;
}

// ---------------------------------------------------------------------------
// Single-sample inference
// ---------------------------------------------------------------------------

struct InferResult {
    int64_t id = 0;
    std::vector<int> tokens;
    std::string text;
};

inline InferResult run_infer(const std::string& checkpoint_path, const std::string& mdata_path,
                             int64_t sample_id, const GenerationMode& mode) {
    CheckpointContents ckpt = read_checkpoint(checkpoint_path);
    Model model = model_from_checkpoint(ckpt);
    std::vector<SyntheticSample> samples = load_mdata(mdata_path, model.evocab.k());
    if (samples.empty()) throw Error("infer: empty sample set");
    const SyntheticSample* chosen = sample_id < 0 ? &samples.front() : nullptr;
    if (!chosen) {
        for (const auto& s : samples)
            if (s.id == sample_id) {
                chosen = &s;
                break;
            }
        if (!chosen)
            throw Error(strf("infer: sample id %lld not in %s",
                             static_cast<long long>(sample_id), mdata_path.c_str()));
    }
    InferResult res;
    res.id = chosen->id;
    res.tokens = generate_report(model, *chosen, mode);
    res.text = model.tvocab.detok(res.tokens);
    return res;
}

// ---------------------------------------------------------------------------
// Adjacency / prompt inspection
// ---------------------------------------------------------------------------

namespace detail {

inline std::string adjacency_csv(const Tensor& t, const EntityVocabulary& evocab) {
    std::string out = "entity";
    for (int j = 0; j < t.cols(); ++j) out += "," + evocab.at(j).name;
    out += "\n";
    for (int i = 0; i < t.rows(); ++i) {
        out += evocab.at(i).name;
        for (int j = 0; j < t.cols(); ++j) out += "," + std::string(fmt_double(t(i, j)));
        out += "\n";
    }
    return out;
}

} // namespace detail

/// Dump one sample's inference-condition internals: the explicit, implicit
/// and fused adjacency matrices, classifier confidences, EMA status, and the
/// exact prompt layout. Uses only inference inputs; report-derived pairs
/// never enter this path.
inline void run_inspect(const std::string& checkpoint_path, const std::string& mdata_path,
                        int64_t sample_id, const std::string& out_dir) {
    fs::create_directories(out_dir);
    const fs::path dir(out_dir);

    CheckpointContents ckpt = read_checkpoint(checkpoint_path);
    Model model = model_from_checkpoint(ckpt);
    if (!model.cfg.entity_embed)
        throw Error("inspect: the scan-only configuration has no entity branch to dump");
    std::vector<SyntheticSample> samples = load_mdata(mdata_path, model.evocab.k());
    if (samples.empty()) throw Error("inspect: empty sample set");
    const SyntheticSample* chosen = sample_id < 0 ? &samples.front() : nullptr;
    if (!chosen) {
        for (const auto& s : samples)
            if (s.id == sample_id) {
                chosen = &s;
                break;
            }
        if (!chosen)
            throw Error(strf("inspect: sample id %lld not in %s",
                             static_cast<long long>(sample_id), mdata_path.c_str()));
    }

    Tape tape;
    NoGradGuard guard(tape);
    Model::EntityPass pass = model.forward_entities(tape, *chosen, false);

    detail::write_text_file(dir / "adjacency_explicit.csv",
                            detail::adjacency_csv(model.statistical_m_e(), model.evocab));
    detail::write_text_file(dir / "adjacency_implicit.csv",
                            detail::adjacency_csv(pass.m_i, model.evocab));
    detail::write_text_file(dir / "adjacency_fused.csv",
                            detail::adjacency_csv(pass.m_adj, model.evocab));

    std::string conf = "entity,probability\n";
    for (int e = 0; e < model.evocab.k(); ++e)
        conf += model.evocab.at(e + 1).name + "," + fmt_double(pass.preds(e, 0)) + "\n";
    detail::write_text_file(dir / "confidences.csv", conf);

    std::string status = "entity,ema_score,word\n";
    const std::vector<std::string> words = model.inference_status_words();
    for (int e = 0; e < model.evocab.k(); ++e)
        status += model.evocab.at(e + 1).name + "," +
                  fmt_double(model.ema.values[static_cast<size_t>(e)]) + "," +
                  words[static_cast<size_t>(e)] + "\n";
    detail::write_text_file(dir / "status.csv", status);

    Tensor s_e;
    if (model.cfg.status_embed)
        s_e = embed_status(tape, words, model.dec.token_table, model.tvocab);
    MultiModalPrompt prompt = model.build_prompt(tape, pass, s_e);
    detail::write_text_file(dir / "prompt_layout.txt", prompt_layout_text(prompt, model.tvocab));

    std::string man = manifest_header("inspect-adjacency", model.cfg);
    man += "checkpoint " + hash_hex(file_hash(checkpoint_path)) + "\n";
    man += "data " + hash_hex(file_hash(mdata_path)) + "\n";
    man += strf("sample %lld\n", static_cast<long long>(chosen->id));
    detail::write_text_file(dir / "manifest.txt", man);
}

} // namespace mrg
