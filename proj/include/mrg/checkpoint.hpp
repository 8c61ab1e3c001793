#pragma once

#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include "mrg/common.hpp"
#include "mrg/params.hpp"
#include "mrg/serial.hpp"
#include "mrg/status.hpp"

namespace mrg {

inline constexpr const char* kCheckpointMagic = "MRGCKPT1";

/// Everything needed to resume or evaluate a run: the canonical config text,
/// the entity graph spec, the token list, every named parameter (trainable or
/// frozen), optimizer moments, per-entity score EMA, training co-occurrence
/// counts, the data RNG position, and best-validation metadata.
struct CheckpointContents {
    std::string config_text;
    std::string graph_text;
    std::vector<std::string> tokens;

    struct ParamRecord {
        std::string name;
        int rows = 0;
        int cols = 0;
        bool trainable = true;
        std::vector<double> values;
    };
    std::vector<ParamRecord> params;

    bool has_optimizer = false;
    int64_t optimizer_step = 0;
    std::vector<std::vector<double>> adam_m, adam_v;

    EmaState ema;
    std::vector<int64_t> cooccurrence;  // dense (k+1)x(k+1), row-major
    int64_t cooccurrence_total = 0;

    uint64_t rng_state = 0;
    int64_t best_epoch = -1;
    double best_val_loss = 0.0;
};

inline void write_checkpoint(const std::string& path, const CheckpointContents& c) {
    BinWriter w(path);
    w.str(kCheckpointMagic);
    w.str(c.config_text);
    w.str(c.graph_text);
    w.u64(c.tokens.size());
    for (const auto& t : c.tokens) w.str(t);
    w.u64(c.params.size());
    for (const auto& p : c.params) {
        w.str(p.name);
        w.u32(static_cast<uint32_t>(p.rows));
        w.u32(static_cast<uint32_t>(p.cols));
        w.u8(p.trainable ? 1 : 0);
        w.f64_vec(p.values);
    }
    w.u8(c.has_optimizer ? 1 : 0);
    if (c.has_optimizer) {
        w.i64(c.optimizer_step);
        w.u64(c.adam_m.size());
        for (size_t i = 0; i < c.adam_m.size(); ++i) {
            w.f64_vec(c.adam_m[i]);
            w.f64_vec(c.adam_v[i]);
        }
    }
    w.f64_vec(c.ema.values);
    w.i64(c.ema.updates);
    w.u64(c.cooccurrence.size());
    for (int64_t v : c.cooccurrence) w.i64(v);
    w.i64(c.cooccurrence_total);
    w.u64(c.rng_state);
    w.i64(c.best_epoch);
    w.f64(c.best_val_loss);
    w.close();
}

inline CheckpointContents read_checkpoint(const std::string& path) {
    BinReader r(path);
    if (r.str() != kCheckpointMagic)
        throw ParseError(strf("%s is not a checkpoint file", path.c_str()));
    CheckpointContents c;
    c.config_text = r.str();
    c.graph_text = r.str();
    const uint64_t nt = r.u64();
    c.tokens.reserve(nt);
    for (uint64_t i = 0; i < nt; ++i) c.tokens.push_back(r.str());
    const uint64_t np = r.u64();
    c.params.reserve(np);
    for (uint64_t i = 0; i < np; ++i) {
        CheckpointContents::ParamRecord p;
        p.name = r.str();
        p.rows = static_cast<int>(r.u32());
        p.cols = static_cast<int>(r.u32());
        p.trainable = r.u8() != 0;
        p.values = r.f64_vec();
        if (p.values.size() != static_cast<size_t>(p.rows) * static_cast<size_t>(p.cols))
            throw ParseError(strf("checkpoint %s: param %s has %zu values for %dx%d",
                                  path.c_str(), p.name.c_str(), p.values.size(), p.rows, p.cols));
        c.params.push_back(std::move(p));
    }
    c.has_optimizer = r.u8() != 0;
    if (c.has_optimizer) {
        c.optimizer_step = r.i64();
        const uint64_t slots = r.u64();
        c.adam_m.reserve(slots);
        c.adam_v.reserve(slots);
        for (uint64_t i = 0; i < slots; ++i) {
            c.adam_m.push_back(r.f64_vec());
            c.adam_v.push_back(r.f64_vec());
        }
    }
    c.ema.values = r.f64_vec();
    c.ema.updates = r.i64();
    const uint64_t nc = r.u64();
    c.cooccurrence.reserve(nc);
    for (uint64_t i = 0; i < nc; ++i) c.cooccurrence.push_back(r.i64());
    c.cooccurrence_total = r.i64();
    c.rng_state = r.u64();
    c.best_epoch = r.i64();
    c.best_val_loss = r.f64();
    if (!r.at_end()) throw ParseError(strf("checkpoint %s has trailing bytes", path.c_str()));
    return c;
}

/// Snapshot a live parameter list into checkpoint records.
inline std::vector<CheckpointContents::ParamRecord> snapshot_params(const ParamList& params) {
    std::vector<CheckpointContents::ParamRecord> out;
    out.reserve(params.size());
    for (const auto& p : params) {
        CheckpointContents::ParamRecord r;
        r.name = p.name;
        r.rows = p.tensor.rows();
        r.cols = p.tensor.cols();
        r.trainable = p.trainable;
        r.values = p.tensor.values();
        out.push_back(std::move(r));
    }
    return out;
}

/// Copy checkpoint values back into freshly initialized parameters. Names,
/// shapes, order, and trainability must all match the rebuilt model exactly.
inline void restore_params(ParamList& params,
                           const std::vector<CheckpointContents::ParamRecord>& records) {
    if (params.size() != records.size())
        throw ShapeError(strf("checkpoint restore: %zu records vs %zu params", records.size(),
                              params.size()));
    for (size_t i = 0; i < params.size(); ++i) {
        auto& p = params[i];
        const auto& r = records[i];
        if (p.name != r.name)
            throw ShapeError(strf("checkpoint restore: record %zu named %s, expected %s", i,
                                  r.name.c_str(), p.name.c_str()));
        if (p.tensor.rows() != r.rows || p.tensor.cols() != r.cols)
            throw ShapeError(strf("checkpoint restore: %s is %dx%d in file, %s in model",
                                  r.name.c_str(), r.rows, r.cols, p.tensor.shape_str().c_str()));
        if (p.trainable != r.trainable)
            throw ShapeError(strf("checkpoint restore: %s trainability mismatch", r.name.c_str()));
        p.tensor.values() = r.values;
    }
}

/// Hash of the raw checkpoint bytes; manifests record it so identical runs can
/// be compared without re-reading parameters.
inline uint64_t file_hash(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError(strf("cannot open %s", path.c_str()));
    Fnv1a64 h;
    char buf[4096];
    while (in.read(buf, sizeof buf) || in.gcount() > 0)
        h.update(buf, static_cast<size_t>(in.gcount()));
    return h.digest();
}

} // namespace mrg
