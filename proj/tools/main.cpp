#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "kgclm/commands.hpp"
#include "kgclm/config.hpp"

namespace {

struct CommonArgs {
    std::string config_path;
    std::vector<std::string> sets;
    std::vector<std::string> ablations;
    std::string score;
};

void add_common(CLI::App* cmd, CommonArgs& args) {
    cmd->add_option("--config", args.config_path, "key=value config file");
    cmd->add_option("--set", args.sets, "override a config key (key=value), last wins");
    cmd->add_option("--ablate", args.ablations,
                    "drop a component: local (beta=0), global (alpha=0), mask (no_role_sep)");
    cmd->add_option("--score", args.score, "score variant: transe|transe_l2|rotate|complex");
}

kgc::ExperimentConfig resolve(const CommonArgs& args) {
    kgc::ExperimentConfig cfg;
    if (!args.config_path.empty()) cfg = kgc::ExperimentConfig::load_file(args.config_path);
    cfg.apply_env_overrides();
    for (const std::string& s : args.sets) {
        const auto eq = s.find('=');
        if (eq == std::string::npos)
            throw kgc::ConfigError("--set expects key=value, got '" + s + "'");
        cfg.set(s.substr(0, eq), s.substr(eq + 1));
    }
    for (const std::string& a : args.ablations) cfg.apply_ablation(a);
    if (!args.score.empty()) cfg.set("score_variant", args.score);
    return cfg;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"generative knowledge-graph completion with translational and "
                 "mutual-information constraints"};
    app.require_subcommand(1);

    CommonArgs gen_args, train_args, eval_args, predict_args, report_args;

    CLI::App* gen = app.add_subcommand("gen-data", "generate synthetic multilingual graphs");
    add_common(gen, gen_args);

    CLI::App* tr = app.add_subcommand("train", "train a model on a data directory");
    add_common(tr, train_args);

    CLI::App* ev = app.add_subcommand("eval", "evaluate a checkpoint with Hits@k");
    add_common(ev, eval_args);
    std::string eval_ckpt, eval_split, eval_mode;
    ev->add_option("--checkpoint", eval_ckpt, "checkpoint file");
    ev->add_option("--split", eval_split, "train|valid|test");
    ev->add_option("--mode", eval_mode, "kgc|alignment");

    CLI::App* pr = app.add_subcommand("predict", "rank tail entities for one query");
    add_common(pr, predict_args);
    std::string p_ckpt, p_head, p_rel, p_lang;
    std::size_t p_k = 0;
    pr->add_option("--checkpoint", p_ckpt, "checkpoint file");
    pr->add_option("--head", p_head, "head entity surface form");
    pr->add_option("--rel", p_rel, "relation surface form");
    pr->add_option("--lang", p_lang, "query language tag");
    pr->add_option("--k", p_k, "number of candidates to print");

    CLI::App* rp = app.add_subcommand("report", "answer-length report from a predictions dump");
    add_common(rp, report_args);
    std::string rp_predictions;
    rp->add_option("--predictions", rp_predictions, "predictions.jsonl from eval");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : 1;
    }

    try {
        if (gen->parsed()) return kgc::cmd_gen_data(resolve(gen_args));
        if (tr->parsed()) return kgc::cmd_train(resolve(train_args));
        if (ev->parsed()) {
            kgc::ExperimentConfig cfg = resolve(eval_args);
            if (!eval_ckpt.empty()) cfg.set("checkpoint", eval_ckpt);
            if (!eval_split.empty()) cfg.set("eval_split", eval_split);
            if (!eval_mode.empty()) cfg.set("eval_mode", eval_mode);
            return kgc::cmd_eval(cfg);
        }
        if (pr->parsed()) {
            kgc::ExperimentConfig cfg = resolve(predict_args);
            if (!p_ckpt.empty()) cfg.set("checkpoint", p_ckpt);
            if (!p_head.empty()) cfg.set("predict_head", p_head);
            if (!p_rel.empty()) cfg.set("predict_rel", p_rel);
            if (!p_lang.empty()) cfg.set("predict_lang", p_lang);
            if (p_k > 0) cfg.set("predict_k", std::to_string(p_k));
            return kgc::cmd_predict(cfg);
        }
        if (rp->parsed()) {
            kgc::ExperimentConfig cfg = resolve(report_args);
            if (!rp_predictions.empty()) cfg.set("predictions", rp_predictions);
            return kgc::cmd_report(cfg);
        }
    } catch (const kgc::ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 1;
}
