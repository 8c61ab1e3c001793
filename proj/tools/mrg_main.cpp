// Command-line front end for the entity-balanced report generation pipeline:
//   mrg gen-data | train | eval | infer | inspect-adjacency
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "mrg/pipeline.hpp"

namespace {

/// Resolve an output directory against MRG_OUT_ROOT when the path is relative.
std::string resolve_out(const std::string& out) {
    const char* root = std::getenv("MRG_OUT_ROOT");
    if (!root || *root == '\0') return out;
    std::filesystem::path p(out);
    if (p.is_absolute()) return out;
    return (std::filesystem::path(root) / p).string();
}

struct ConfigArgs {
    std::string config_file;
    std::vector<std::string> overrides;
    uint64_t seed = 0;
    bool seed_given = false;
    int threads = 0;
    bool threads_given = false;

    mrg::RunConfig resolve() const {
        mrg::RunConfig cfg;
        if (!config_file.empty()) cfg = mrg::load_config(config_file);
        for (const auto& o : overrides) mrg::apply_override(cfg, o);
        if (seed_given) cfg.seed = seed;
        if (threads_given) cfg.threads = threads;
        cfg.validate();
        return cfg;
    }

    void attach(CLI::App* cmd) {
        cmd->add_option("-c,--config", config_file, "configuration file (sectioned key=value)");
        cmd->add_option("--set", overrides, "override, e.g. --set train.epochs=20")
            ->take_all();
        cmd->add_option("--seed", seed, "override run.seed")->each([this](const std::string&) {
            seed_given = true;
        });
        cmd->add_option("--threads", threads,
                        "worker count recorded in the manifest (execution is single-threaded)")
            ->each([this](const std::string&) { threads_given = true; });
    }
};

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"entity-balanced report generation pipeline"};
    app.require_subcommand(1);

    // gen-data ---------------------------------------------------------------
    auto* gen = app.add_subcommand("gen-data", "generate a synthetic dataset");
    ConfigArgs gen_cfg;
    gen_cfg.attach(gen);
    std::string gen_out;
    gen->add_option("-o,--out", gen_out, "output directory")->required();

    // train ------------------------------------------------------------------
    auto* train = app.add_subcommand("train", "train a model on a generated dataset");
    ConfigArgs train_cfg;
    train_cfg.attach(train);
    std::string train_data, train_out;
    train->add_option("-d,--data", train_data, "dataset directory from gen-data")->required();
    train->add_option("-o,--out", train_out, "output directory")->required();

    // eval -------------------------------------------------------------------
    auto* eval = app.add_subcommand("eval", "score a checkpoint on a dataset split");
    std::string eval_ckpt, eval_data, eval_out;
    bool self_eval = false;
    eval->add_option("--checkpoint", eval_ckpt, "checkpoint file")->required();
    eval->add_option("-d,--data", eval_data, "sample file (.mdata)")->required();
    eval->add_option("-o,--out", eval_out, "output directory")->required();
    eval->add_flag("--self-eval", self_eval,
                   "score references against themselves (metric sanity check)");

    // infer ------------------------------------------------------------------
    auto* infer = app.add_subcommand("infer", "generate a report for one sample");
    std::string infer_ckpt, infer_data;
    int64_t infer_id = -1;
    bool infer_sample = false;
    double infer_temp = 1.0;
    uint64_t infer_seed = 0;
    infer->add_option("--checkpoint", infer_ckpt, "checkpoint file")->required();
    infer->add_option("-d,--data", infer_data, "sample file (.mdata)")->required();
    infer->add_option("--id", infer_id, "sample id (default: first sample)");
    infer->add_flag("--sample", infer_sample, "sample instead of greedy decoding");
    infer->add_option("--temperature", infer_temp, "sampling temperature");
    infer->add_option("--gen-seed", infer_seed, "sampling seed");

    // inspect-adjacency -------------------------------------------------------
    auto* inspect = app.add_subcommand("inspect-adjacency",
                                       "dump adjacency matrices, confidences and prompt layout");
    std::string ins_ckpt, ins_data, ins_out;
    int64_t ins_id = -1;
    inspect->add_option("--checkpoint", ins_ckpt, "checkpoint file")->required();
    inspect->add_option("-d,--data", ins_data, "sample file (.mdata)")->required();
    inspect->add_option("--id", ins_id, "sample id (default: first sample)");
    inspect->add_option("-o,--out", ins_out, "output directory")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (gen->parsed()) {
            const mrg::RunConfig cfg = gen_cfg.resolve();
            const auto res = mrg::run_gen_data(cfg, resolve_out(gen_out));
            std::printf("wrote %d train / %d test / %d val samples to %s\n", res.train, res.test,
                        res.val, res.dir.string().c_str());
        } else if (train->parsed()) {
            const mrg::RunConfig cfg = train_cfg.resolve();
            const auto res = mrg::run_train(
                cfg, train_data, resolve_out(train_out),
                [](int epoch, const mrg::EvalLosses& val, bool improved) {
                    std::printf("epoch %d val_gen_loss %.6f val_cls_loss %.6f%s\n", epoch,
                                val.gen_loss, val.cls_loss, improved ? " *" : "");
                    std::fflush(stdout);
                });
            std::printf("trained %lld steps, best epoch %lld (val gen loss %.6f), checkpoint %s\n",
                        static_cast<long long>(res.steps), static_cast<long long>(res.best_epoch),
                        res.best_val_gen_loss, res.checkpoint_path.string().c_str());
        } else if (eval->parsed()) {
            const auto res = mrg::run_eval(eval_ckpt, eval_data, resolve_out(eval_out), self_eval);
            if (res.single_document)
                std::fprintf(stderr,
                             "note: single-document corpus, CIDEr idf weights are all zero\n");
            std::printf("samples %d\n", res.samples);
            std::printf("bleu4 %.6f  rouge_l %.6f  cider %.6f  meteor_lite %.6f\n", res.bleu,
                        res.rouge, res.cider_score, res.meteor);
            std::printf("keyword precision %.6f recall %.6f f1 %.6f (median %.6f iqr %.6f var %.6f)\n",
                        res.keywords.precision, res.keywords.recall, res.keywords.f1,
                        res.keywords.f1_median, res.keywords.f1_iqr, res.keywords.f1_variance);
        } else if (infer->parsed()) {
            const mrg::GenerationMode mode = infer_sample
                                                 ? mrg::GenerationMode::sampled(infer_seed, infer_temp)
                                                 : mrg::GenerationMode::greedy_mode();
            const auto res = mrg::run_infer(infer_ckpt, infer_data, infer_id, mode);
            std::printf("id %lld\n%s\n", static_cast<long long>(res.id), res.text.c_str());
        } else if (inspect->parsed()) {
            mrg::run_inspect(ins_ckpt, ins_data, ins_id, resolve_out(ins_out));
            std::printf("wrote inspection files to %s\n", resolve_out(ins_out).c_str());
        }
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
