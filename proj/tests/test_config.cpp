#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>

#include "kgclm/commands.hpp"
#include "kgclm/config.hpp"

using namespace kgc;
namespace fs = std::filesystem;

TEST_CASE("config set/get round-trips and rejects unknown keys") {
    ExperimentConfig cfg;
    cfg.set("lr", "0.01");
    CHECK(cfg.lr == 0.01);
    cfg.set("batch_size", "64");
    CHECK(cfg.batch_size == 64);
    cfg.set("tie_output", "false");
    CHECK_FALSE(cfg.tie_output);
    cfg.set("score_variant", "rotate");
    CHECK(cfg.score_variant == "rotate");

    CHECK_THROWS_AS(cfg.set("no_such_key", "1"), ConfigError);
    CHECK_THROWS_AS(cfg.set("lr", "fast"), ConfigError);
    CHECK_THROWS_AS(cfg.set("epochs", "-3"), ConfigError);
    CHECK_THROWS_AS(cfg.set("filtered", "maybe"), ConfigError);
}

TEST_CASE("config text form is a fixpoint") {
    ExperimentConfig cfg;
    cfg.set("lr", "0.0005");
    cfg.set("alpha", "0.25");
    cfg.set("data_dir", "some/dir");
    const std::string text = cfg.to_text();
    ExperimentConfig parsed = ExperimentConfig::parse_text(text);
    CHECK(parsed.to_text() == text);
    CHECK(parsed.lr == 0.0005);
    CHECK(parsed.alpha == 0.25);
    CHECK(parsed.data_dir == "some/dir");
}

TEST_CASE("config file parsing tolerates comments and blank lines") {
    const std::string text = "# comment\n\nlr = 0.002\n  epochs=7\n";
    ExperimentConfig cfg = ExperimentConfig::parse_text(text);
    CHECK(cfg.lr == 0.002);
    CHECK(cfg.epochs == 7);
    CHECK_THROWS_AS(ExperimentConfig::parse_text("not a key value pair\n"), ConfigError);
}

TEST_CASE("ablation flags resolve to the ablation-table configurations") {
    ExperimentConfig cfg;
    cfg.apply_ablation("local");
    CHECK(cfg.beta == 0.0);
    CHECK(cfg.alpha == 0.001);

    ExperimentConfig cfg2;
    cfg2.apply_ablation("global");
    CHECK(cfg2.alpha == 0.0);
    CHECK(cfg2.beta == 0.005);

    ExperimentConfig cfg3;
    cfg3.apply_ablation("mask");
    CHECK(cfg3.mask_mode == "no_role_sep");

    CHECK_THROWS_AS(cfg.apply_ablation("everything"), ConfigError);
}

TEST_CASE("environment overrides use the KGCLM_ prefix") {
    setenv("KGCLM_BEAM_WIDTH", "17", 1);
    ExperimentConfig cfg;
    cfg.apply_env_overrides();
    CHECK(cfg.beam_width == 17);
    unsetenv("KGCLM_BEAM_WIDTH");
}

TEST_CASE("derived configs validate their enum strings") {
    ExperimentConfig cfg;
    cfg.set("optimizer", "sgd");
    CHECK(cfg.train_config().optimizer == OptimizerKind::sgd);
    cfg.set("optimizer", "vibes");
    CHECK_THROWS_AS(cfg.train_config(), ConfigError);

    ExperimentConfig e;
    e.set("candidate_mode", "global");
    CHECK_FALSE(e.eval_config().per_language_candidates);
    e.set("eval_mode", "alignment");
    CHECK(e.eval_config().mode == EvalMode::alignment);
    e.set("eval_mode", "nope");
    CHECK_THROWS_AS(e.eval_config(), ConfigError);

    ExperimentConfig m;
    m.set("mask_mode", "full_causal");
    CHECK(m.model_config(10).mask_mode == MaskMode::full_causal);
    m.set("jsd_pos_form", "sp_t");
    CHECK(m.loss_weights().jsd_pos_form == JsdPositiveForm::sp_t);
}

TEST_CASE("commands: gen-data, train, eval, predict, report end to end") {
    const fs::path base = fs::temp_directory_path() / "kgclm_cmd_smoke";
    fs::remove_all(base);
    ExperimentConfig cfg;
    cfg.set("data_dir", (base / "data").string());
    cfg.set("out_dir", (base / "run").string());
    cfg.set("gen_entities", "24");
    cfg.set("gen_relations", "3");
    cfg.set("gen_triples", "60");
    cfg.set("gen_languages", "2");
    cfg.set("seed", "6");
    REQUIRE(cmd_gen_data(cfg) == 0);
    CHECK(fs::exists(base / "data" / "la.tsv"));
    CHECK(fs::exists(base / "data" / "lb.tsv"));
    CHECK(fs::exists(base / "data" / "manifest.json"));
    CHECK(fs::exists(base / "data" / "stats.json"));

    cfg.set("n_layers", "1");
    cfg.set("d_model", "16");
    cfg.set("d_ff", "32");
    cfg.set("n_heads", "2");
    cfg.set("epochs", "3");
    cfg.set("batch_size", "32");
    cfg.set("lr", "0.002");
    cfg.set("grad_norm_interval", "0");
    REQUIRE(cmd_train(cfg) == 0);
    CHECK(fs::exists(base / "run" / "model.ckpt"));
    CHECK(fs::exists(base / "run" / "vocab.json"));
    CHECK(fs::exists(base / "run" / "train_log.jsonl"));
    CHECK(fs::exists(base / "run" / "config.resolved"));

    // The resolved config reproduces the run settings.
    ExperimentConfig resolved =
        ExperimentConfig::load_file((base / "run" / "config.resolved").string());
    CHECK(resolved.epochs == 3);
    CHECK(resolved.d_model == 16);

    cfg.set("checkpoint", (base / "run" / "model.ckpt").string());
    cfg.set("out_dir", (base / "eval").string());
    cfg.set("beam_width", "10");
    REQUIRE(cmd_eval(cfg) == 0);
    CHECK(fs::exists(base / "eval" / "eval_report.json"));
    CHECK(fs::exists(base / "eval" / "eval_report.txt"));
    CHECK(fs::exists(base / "eval" / "predictions.jsonl"));
    CHECK(fs::exists(base / "eval" / "length_hits.svg"));

    // predict on a training head/relation prints a ranking (exit 0).
    KnowledgeGraph g = build_graph_from_config(cfg);
    const Triple& t0 = g.triples.front();
    cfg.set("predict_head", g.entity_surface[std::size_t(t0.head)]);
    cfg.set("predict_rel", g.relation_surface[std::size_t(t0.relation)]);
    cfg.set("predict_lang", t0.lang);
    cfg.set("predict_k", "3");
    REQUIRE(cmd_predict(cfg) == 0);

    cfg.set("predictions", (base / "eval" / "predictions.jsonl").string());
    cfg.set("out_dir", (base / "report").string());
    REQUIRE(cmd_report(cfg) == 0);
    CHECK(fs::exists(base / "report" / "length_report.json"));

    // Missing checkpoint is a runtime error, not a crash.
    cfg.set("checkpoint", (base / "nope.ckpt").string());
    CHECK_THROWS(cmd_eval(cfg));

    fs::remove_all(base);
}
