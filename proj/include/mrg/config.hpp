#pragma once

#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "mrg/common.hpp"
#include "mrg/kja.hpp"
#include "mrg/decoder.hpp"
#include "mrg/optim.hpp"
#include "mrg/synth.hpp"

namespace mrg {

/// One experiment's complete configuration. Serializes to a canonical
/// sectioned key=value text whose hash identifies the run in manifests.
struct RunConfig {
    // [corpus]
    int total = 40;
    int scans = 24;
    int patches = 4;
    int d_s = 32;
    int regions = 4;
    int lesions = 4;
    double snr = 5.0;
    double signal = 1.0;
    std::vector<double> prevalence;  // empty -> built-in imbalanced ramp

    // [model]
    int d_h = 64;
    int d_w = 64;
    int kja_heads = 8;
    int d_r = 64;
    int kja_ffn = 256;
    std::string activation = "gelu";
    int classifier_hidden = 64;
    double alpha_e = 0.9;
    double alpha_i = 0.1;
    int dec_layers = 2;
    int dec_heads = 4;
    int dec_ffn = 256;
    int max_len = 256;
    int adapter_rank = 4;
    double adapter_scaling = 8.0;

    // [train]
    double lr = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_eps = 1e-8;
    double weight_decay = 0.0;
    int epochs = 10;
    int batch = 4;
    double lambda = 0.1;
    double tau = 0.1;
    double ema_decay = 0.99;

    // [ablation]
    bool entity_embed = true;
    bool status_embed = true;
    bool category_words = false;
    bool use_m_e = true;
    bool use_m_i = true;

    // [run]
    uint64_t seed = 42;
    int threads = 1;
    std::string instruction = kDefaultInstruction;

    void validate() const {
        if (status_embed && !entity_embed)
            throw Error("config: status_embed requires entity_embed");
        if (category_words && !entity_embed)
            throw Error("config: category_words requires entity_embed");
        if (alpha_e < 0.0 || alpha_i < 0.0) throw Error("config: alphas must be non-negative");
        if (lr <= 0.0) throw Error("config: lr must be positive");
        if (tau < 0.0 || tau > 1.0) throw Error("config: tau outside [0,1]");
        if (ema_decay < 0.0 || ema_decay >= 1.0) throw Error("config: ema_decay outside [0,1)");
        if (lambda < 0.0) throw Error("config: lambda must be non-negative");
        if (epochs < 1 || batch < 1) throw Error("config: epochs and batch must be positive");
        if (threads < 1) throw Error("config: threads must be positive");
        parse_activation(activation);
        corpus_config().validate();
    }

    CorpusConfig corpus_config() const {
        CorpusConfig c;
        c.total = total;
        c.scans = scans;
        c.patches = patches;
        c.d_s = d_s;
        c.n_regions = regions;
        c.n_lesions = lesions;
        c.prevalence = prevalence;
        c.snr = snr;
        c.signal = signal;
        c.seed = seed;
        return c;
    }

    KjaConfig kja_config() const {
        KjaConfig c;
        c.d_w = d_w;
        c.d_s = d_s;
        c.d_h = d_h;
        c.heads = kja_heads;
        c.d_r = d_r;
        c.ffn = kja_ffn;
        c.act = parse_activation(activation);
        return c;
    }

    DecoderConfig decoder_config(int vocab_size) const {
        DecoderConfig c;
        c.vocab_size = vocab_size;
        c.d_w = d_w;
        c.layers = dec_layers;
        c.heads = dec_heads;
        c.ffn = dec_ffn;
        c.max_len = max_len;
        c.adapter_rank = adapter_rank;
        c.adapter_scaling = adapter_scaling;
        c.act = parse_activation(activation);
        return c;
    }

    AdamWConfig adamw_config() const {
        AdamWConfig c;
        c.lr = lr;
        c.beta1 = beta1;
        c.beta2 = beta2;
        c.eps = adam_eps;
        c.weight_decay = weight_decay;
        return c;
    }
};

namespace detail {

inline std::string trim(const std::string& s) {
    size_t a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    size_t b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

inline bool parse_bool(const std::string& v, const std::string& key) {
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    throw ParseError(strf("config: '%s' is not a boolean for %s", v.c_str(), key.c_str()));
}

inline double parse_double(const std::string& v, const std::string& key) {
    try {
        size_t used = 0;
        const double d = std::stod(v, &used);
        if (used != v.size()) throw std::invalid_argument(v);
        return d;
    } catch (const std::exception&) {
        throw ParseError(strf("config: '%s' is not a number for %s", v.c_str(), key.c_str()));
    }
}

inline int parse_int(const std::string& v, const std::string& key) {
    try {
        size_t used = 0;
        const int i = std::stoi(v, &used);
        if (used != v.size()) throw std::invalid_argument(v);
        return i;
    } catch (const std::exception&) {
        throw ParseError(strf("config: '%s' is not an integer for %s", v.c_str(), key.c_str()));
    }
}

inline uint64_t parse_u64(const std::string& v, const std::string& key) {
    try {
        // stoull accepts and wraps a leading minus sign; reject signs outright.
        if (v.empty() || v[0] == '-' || v[0] == '+') throw std::invalid_argument(v);
        size_t used = 0;
        const unsigned long long u = std::stoull(v, &used);
        if (used != v.size()) throw std::invalid_argument(v);
        return static_cast<uint64_t>(u);
    } catch (const std::exception&) {
        throw ParseError(strf("config: '%s' is not an unsigned integer for %s", v.c_str(), key.c_str()));
    }
}

inline std::vector<double> parse_double_list(const std::string& v, const std::string& key) {
    std::vector<double> out;
    if (detail::trim(v).empty()) return out;
    std::istringstream in(v);
    std::string item;
    while (std::getline(in, item, ',')) out.push_back(parse_double(detail::trim(item), key));
    return out;
}

} // namespace detail

/// Apply one `section.key = value` assignment; unknown keys are errors.
inline void config_set(RunConfig& c, const std::string& section, const std::string& key,
                       const std::string& value) {
    using namespace detail;
    const std::string full = section + "." + key;
    if (section == "corpus") {
        if (key == "total") c.total = parse_int(value, full);
        else if (key == "scans") c.scans = parse_int(value, full);
        else if (key == "patches") c.patches = parse_int(value, full);
        else if (key == "d_s") c.d_s = parse_int(value, full);
        else if (key == "regions") c.regions = parse_int(value, full);
        else if (key == "lesions") c.lesions = parse_int(value, full);
        else if (key == "snr") c.snr = parse_double(value, full);
        else if (key == "signal") c.signal = parse_double(value, full);
        else if (key == "prevalence") c.prevalence = parse_double_list(value, full);
        else throw ParseError(strf("config: unknown key %s", full.c_str()));
    } else if (section == "model") {
        if (key == "d_h") c.d_h = parse_int(value, full);
        else if (key == "d_w") c.d_w = parse_int(value, full);
        else if (key == "kja_heads") c.kja_heads = parse_int(value, full);
        else if (key == "d_r") c.d_r = parse_int(value, full);
        else if (key == "kja_ffn") c.kja_ffn = parse_int(value, full);
        else if (key == "activation") c.activation = value;
        else if (key == "classifier_hidden") c.classifier_hidden = parse_int(value, full);
        else if (key == "alpha_e") c.alpha_e = parse_double(value, full);
        else if (key == "alpha_i") c.alpha_i = parse_double(value, full);
        else if (key == "dec_layers") c.dec_layers = parse_int(value, full);
        else if (key == "dec_heads") c.dec_heads = parse_int(value, full);
        else if (key == "dec_ffn") c.dec_ffn = parse_int(value, full);
        else if (key == "max_len") c.max_len = parse_int(value, full);
        else if (key == "adapter_rank") c.adapter_rank = parse_int(value, full);
        else if (key == "adapter_scaling") c.adapter_scaling = parse_double(value, full);
        else throw ParseError(strf("config: unknown key %s", full.c_str()));
    } else if (section == "train") {
        if (key == "lr") c.lr = parse_double(value, full);
        else if (key == "beta1") c.beta1 = parse_double(value, full);
        else if (key == "beta2") c.beta2 = parse_double(value, full);
        else if (key == "adam_eps") c.adam_eps = parse_double(value, full);
        else if (key == "weight_decay") c.weight_decay = parse_double(value, full);
        else if (key == "epochs") c.epochs = parse_int(value, full);
        else if (key == "batch") c.batch = parse_int(value, full);
        else if (key == "lambda") c.lambda = parse_double(value, full);
        else if (key == "tau") c.tau = parse_double(value, full);
        else if (key == "ema_decay") c.ema_decay = parse_double(value, full);
        else throw ParseError(strf("config: unknown key %s", full.c_str()));
    } else if (section == "ablation") {
        if (key == "entity_embed") c.entity_embed = parse_bool(value, full);
        else if (key == "status_embed") c.status_embed = parse_bool(value, full);
        else if (key == "category_words") c.category_words = parse_bool(value, full);
        else if (key == "use_m_e") c.use_m_e = parse_bool(value, full);
        else if (key == "use_m_i") c.use_m_i = parse_bool(value, full);
        else throw ParseError(strf("config: unknown key %s", full.c_str()));
    } else if (section == "run") {
        if (key == "seed") c.seed = parse_u64(value, full);
        else if (key == "threads") c.threads = parse_int(value, full);
        else if (key == "instruction") c.instruction = value;
        else throw ParseError(strf("config: unknown key %s", full.c_str()));
    } else {
        throw ParseError(strf("config: unknown section [%s]", section.c_str()));
    }
}

/// `section.key=value` override strings (CLI --set).
inline void apply_override(RunConfig& c, const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos)
        throw ParseError(strf("override '%s' is not key=value", assignment.c_str()));
    const std::string path = detail::trim(assignment.substr(0, eq));
    const std::string value = detail::trim(assignment.substr(eq + 1));
    const auto dot = path.find('.');
    if (dot == std::string::npos)
        throw ParseError(strf("override key '%s' must be section.key", path.c_str()));
    config_set(c, path.substr(0, dot), path.substr(dot + 1), value);
}

inline RunConfig parse_config_stream(std::istream& in, const std::string& name) {
    RunConfig c;
    std::string line, section;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const std::string t = detail::trim(line);
        if (t.empty() || t[0] == '#' || t[0] == ';') continue;
        if (t.front() == '[') {
            if (t.back() != ']')
                throw ParseError(strf("%s:%d: malformed section header", name.c_str(), lineno));
            section = t.substr(1, t.size() - 2);
            continue;
        }
        const auto eq = t.find('=');
        if (eq == std::string::npos)
            throw ParseError(strf("%s:%d: expected key = value", name.c_str(), lineno));
        if (section.empty())
            throw ParseError(strf("%s:%d: key outside any [section]", name.c_str(), lineno));
        try {
            config_set(c, section, detail::trim(t.substr(0, eq)), detail::trim(t.substr(eq + 1)));
        } catch (const ParseError& e) {
            throw ParseError(strf("%s:%d: %s", name.c_str(), lineno, e.what()));
        }
    }
    return c;
}

inline RunConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError(strf("cannot open config %s", path.c_str()));
    return parse_config_stream(in, path);
}

inline RunConfig parse_config_text(const std::string& text) {
    std::istringstream in(text);
    return parse_config_stream(in, "<config>");
}

/// Canonical serialization: fixed key order, %.17g doubles. Identical
/// configurations produce identical bytes (and hence hashes).
inline std::string config_text(const RunConfig& c) {
    std::ostringstream out;
    auto b = [](bool v) { return v ? "true" : "false"; };
    out << "[corpus]\n";
    out << "total = " << c.total << "\n";
    out << "scans = " << c.scans << "\n";
    out << "patches = " << c.patches << "\n";
    out << "d_s = " << c.d_s << "\n";
    out << "regions = " << c.regions << "\n";
    out << "lesions = " << c.lesions << "\n";
    out << "snr = " << fmt_double(c.snr) << "\n";
    out << "signal = " << fmt_double(c.signal) << "\n";
    out << "prevalence = ";
    for (size_t i = 0; i < c.prevalence.size(); ++i)
        out << (i ? "," : "") << fmt_double(c.prevalence[i]);
    out << "\n";
    out << "[model]\n";
    out << "d_h = " << c.d_h << "\n";
    out << "d_w = " << c.d_w << "\n";
    out << "kja_heads = " << c.kja_heads << "\n";
    out << "d_r = " << c.d_r << "\n";
    out << "kja_ffn = " << c.kja_ffn << "\n";
    out << "activation = " << c.activation << "\n";
    out << "classifier_hidden = " << c.classifier_hidden << "\n";
    out << "alpha_e = " << fmt_double(c.alpha_e) << "\n";
    out << "alpha_i = " << fmt_double(c.alpha_i) << "\n";
    out << "dec_layers = " << c.dec_layers << "\n";
    out << "dec_heads = " << c.dec_heads << "\n";
    out << "dec_ffn = " << c.dec_ffn << "\n";
    out << "max_len = " << c.max_len << "\n";
    out << "adapter_rank = " << c.adapter_rank << "\n";
    out << "adapter_scaling = " << fmt_double(c.adapter_scaling) << "\n";
    out << "[train]\n";
    out << "lr = " << fmt_double(c.lr) << "\n";
    out << "beta1 = " << fmt_double(c.beta1) << "\n";
    out << "beta2 = " << fmt_double(c.beta2) << "\n";
    out << "adam_eps = " << fmt_double(c.adam_eps) << "\n";
    out << "weight_decay = " << fmt_double(c.weight_decay) << "\n";
    out << "epochs = " << c.epochs << "\n";
    out << "batch = " << c.batch << "\n";
    out << "lambda = " << fmt_double(c.lambda) << "\n";
    out << "tau = " << fmt_double(c.tau) << "\n";
    out << "ema_decay = " << fmt_double(c.ema_decay) << "\n";
    out << "[ablation]\n";
    out << "entity_embed = " << b(c.entity_embed) << "\n";
    out << "status_embed = " << b(c.status_embed) << "\n";
    out << "category_words = " << b(c.category_words) << "\n";
    out << "use_m_e = " << b(c.use_m_e) << "\n";
    out << "use_m_i = " << b(c.use_m_i) << "\n";
    out << "[run]\n";
    out << "seed = " << c.seed << "\n";
    out << "threads = " << c.threads << "\n";
    out << "instruction = " << c.instruction << "\n";
    return out.str();
}

inline uint64_t config_hash(const RunConfig& c) { return fnv1a64(config_text(c)); }

} // namespace mrg
