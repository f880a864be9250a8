#include "kgclm/commands.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

#include <json.hpp>

#include "kgclm/evaluation.hpp"
#include "kgclm/inference.hpp"
#include "kgclm/rand.hpp"
#include "kgclm/training.hpp"

namespace fs = std::filesystem;

namespace kgc {

namespace {

void write_text(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out.is_open()) throw std::runtime_error("cannot write " + path);
    out << text;
}

void write_resolved_config(const ExperimentConfig& cfg) {
    fs::create_directories(cfg.out_dir);
    cfg.save_file((fs::path(cfg.out_dir) / "config.resolved").string());
}

std::vector<std::string> synth_language_tags(std::size_t n) {
    std::vector<std::string> tags;
    for (std::size_t i = 0; i < n; ++i) {
        std::string tag = "l";
        tag += char('a' + int(i % 26));
        if (i >= 26) tag += std::to_string(i / 26);
        tags.push_back(tag);
    }
    return tags;
}

SplitRatios ratios_of(const ExperimentConfig& cfg) {
    SplitRatios r;
    r.train = cfg.ratio_train;
    r.valid = cfg.ratio_valid;
    r.test = cfg.ratio_test;
    return r;
}

std::string vocab_path_of(const ExperimentConfig& cfg) {
    if (!cfg.vocab.empty()) return cfg.vocab;
    if (cfg.checkpoint.empty()) throw ConfigError("config: checkpoint is required");
    return (fs::path(cfg.checkpoint).parent_path() / "vocab.json").string();
}

struct LoadedModel {
    Checkpoint ckpt;
    Vocabulary vocab;
};

LoadedModel load_model_and_vocab(const ExperimentConfig& cfg) {
    if (cfg.checkpoint.empty()) throw ConfigError("config: checkpoint is required");
    if (!fs::exists(cfg.checkpoint))
        throw std::runtime_error("checkpoint not found: " + cfg.checkpoint);
    LoadedModel lm;
    lm.ckpt = load_checkpoint(cfg.checkpoint);
    lm.vocab = Vocabulary::load(vocab_path_of(cfg));
    if (lm.vocab.content_hash() != lm.ckpt.vocab_hash)
        throw std::runtime_error("vocabulary hash does not match the checkpoint");
    return lm;
}

}  // namespace

KnowledgeGraph build_graph_from_config(const ExperimentConfig& cfg) {
    std::vector<std::string> files;
    for (const auto& entry : fs::directory_iterator(cfg.data_dir)) {
        if (!entry.is_regular_file()) continue;
        const std::string name = entry.path().filename().string();
        if (name.size() > 4 && name.substr(name.size() - 4) == ".tsv" &&
            name.rfind("pairs_", 0) != 0)
            files.push_back(name);
    }
    if (files.empty())
        throw std::runtime_error("no <lang>.tsv files found in " + cfg.data_dir);
    std::sort(files.begin(), files.end());

    std::vector<KnowledgeGraph> graphs;
    for (const std::string& f : files) {
        const std::string lang = f.substr(0, f.size() - 4);
        graphs.push_back(load_tsv((fs::path(cfg.data_dir) / f).string(), lang));
    }

    if (!cfg.alignment_pairs.empty()) {
        const auto comma = cfg.alignment_langs.find(',');
        if (comma == std::string::npos)
            throw ConfigError("config: alignment_langs must be '<l1>,<l2>'");
        const std::string l1 = cfg.alignment_langs.substr(0, comma);
        const std::string l2 = cfg.alignment_langs.substr(comma + 1);
        auto find_graph = [&](const std::string& lang) -> std::size_t {
            for (std::size_t i = 0; i < graphs.size(); ++i)
                if (graphs[i].lang == lang) return i;
            throw ConfigError("config: alignment language '" + lang + "' has no TSV file");
        };
        const std::size_t i1 = find_graph(l1), i2 = find_graph(l2);
        const auto pairs = load_alignment_pairs(cfg.alignment_pairs);
        KnowledgeGraph aug = alignment_augment(graphs[i1], graphs[i2], pairs);
        std::vector<KnowledgeGraph> rest;
        rest.push_back(std::move(aug));
        for (std::size_t i = 0; i < graphs.size(); ++i)
            if (i != i1 && i != i2) rest.push_back(std::move(graphs[i]));
        return merge_graphs(rest);
    }
    return merge_graphs(graphs);
}

DatasetSplit load_or_make_split(const KnowledgeGraph& g, const ExperimentConfig& cfg) {
    const fs::path manifest = fs::path(cfg.data_dir) / "manifest.json";
    if (fs::exists(manifest)) return load_split_manifest(g, manifest.string());
    DatasetSplit split = split_closed_world(g, ratios_of(cfg), cfg.seed);
    fs::create_directories(cfg.out_dir);
    save_split_manifest(split, ratios_of(cfg), cfg.seed,
                        (fs::path(cfg.out_dir) / "manifest.json").string());
    return split;
}

int cmd_gen_data(const ExperimentConfig& cfg) {
    SynthSpec spec;
    spec.n_entities = cfg.gen_entities;
    spec.n_relations = cfg.gen_relations;
    spec.n_triples = cfg.gen_triples;
    spec.languages = synth_language_tags(cfg.gen_languages);
    if (cfg.gen_pattern == "compositional")
        spec.pattern = SynthPattern::compositional;
    else if (cfg.gen_pattern == "random")
        spec.pattern = SynthPattern::random_edges;
    else
        throw ConfigError("config: gen_pattern must be compositional or random");
    spec.seed = cfg.seed;

    fs::create_directories(cfg.data_dir);
    const auto graphs = synth_generate(spec);
    for (const auto& g : graphs)
        save_tsv(g, (fs::path(cfg.data_dir) / (g.lang + ".tsv")).string());

    ExperimentConfig resolved = cfg;
    if (cfg.gen_alignment_pairs > 0) {
        if (graphs.size() < 2)
            throw ConfigError("config: gen_alignment_pairs needs at least 2 languages");
        // Random distinct cross-language entity pairs.
        Rng rng(seed_for(cfg.seed, "alignpairs"));
        std::vector<std::size_t> ids(spec.n_entities);
        for (std::size_t i = 0; i < ids.size(); ++i) ids[i] = i;
        rng.shuffle(ids);
        const std::size_t n = std::min<std::size_t>(cfg.gen_alignment_pairs, spec.n_entities);
        const std::string l1 = graphs[0].lang, l2 = graphs[1].lang;
        const std::string pairs_path =
            (fs::path(cfg.data_dir) / ("pairs_" + l1 + "_" + l2 + ".tsv")).string();
        std::ofstream out(pairs_path, std::ios::binary);
        for (std::size_t i = 0; i < n; ++i)
            out << graphs[0].entity_surface[ids[i]] << '\t' << graphs[1].entity_surface[ids[i]]
                << '\n';
        resolved.alignment_pairs = pairs_path;
        resolved.alignment_langs = l1 + "," + l2;
    }

    const KnowledgeGraph merged = build_graph_from_config(resolved);
    DatasetSplit split = split_closed_world(merged, ratios_of(resolved), resolved.seed);
    save_split_manifest(split, ratios_of(resolved), resolved.seed,
                        (fs::path(resolved.data_dir) / "manifest.json").string());

    const auto stats = split_stats(merged, split);
    const std::string table = format_stats_table(stats);
    std::cout << table;
    write_text((fs::path(resolved.data_dir) / "stats.txt").string(), table);

    nlohmann::json sj = nlohmann::json::array();
    for (const auto& s : stats) {
        nlohmann::json j;
        j["lang"] = s.lang;
        j["train"] = {{"triples", s.train_triples},
                      {"entities", s.train_entities},
                      {"relations", s.train_relations}};
        j["valid"] = {{"triples", s.valid_triples},
                      {"entities", s.valid_entities},
                      {"relations", s.valid_relations}};
        j["test"] = {{"triples", s.test_triples},
                     {"entities", s.test_entities},
                     {"relations", s.test_relations}};
        j["registry"] = {{"entities", s.registry_entities},
                         {"relations", s.registry_relations}};
        j["te_ratio"] = s.te_ratio;
        sj.push_back(j);
    }
    write_text((fs::path(resolved.data_dir) / "stats.json").string(), sj.dump(2) + "\n");

    ExperimentConfig out_cfg = resolved;
    out_cfg.out_dir = resolved.data_dir;
    write_resolved_config(out_cfg);
    return 0;
}

int cmd_train(const ExperimentConfig& cfg) {
    const KnowledgeGraph g = build_graph_from_config(cfg);
    const DatasetSplit split = load_or_make_split(g, cfg);
    const Vocabulary vocab = build_vocab({g}, cfg.tokenizer());

    fs::create_directories(cfg.out_dir);
    vocab.save((fs::path(cfg.out_dir) / "vocab.json").string());
    write_resolved_config(cfg);

    const ModelConfig mcfg = cfg.model_config(std::size_t(vocab.size()));
    const TrainConfig tcfg = cfg.train_config();

    TrainResult result;
    std::string failure;
    try {
        result = train(g, split, vocab, mcfg, tcfg);
    } catch (const std::exception& e) {
        failure = e.what();
    }
    std::ofstream log((fs::path(cfg.out_dir) / "train_log.jsonl").string(), std::ios::binary);
    for (const auto& rec : result.log) log << step_record_to_json(rec) << '\n';
    if (!failure.empty()) {
        std::cerr << "train aborted: " << failure << "\n";
        return 2;
    }
    std::cout << "trained " << result.steps << " steps over " << result.epochs_run
              << " epochs; checkpoint: " << result.final_checkpoint << "\n";
    if (result.best_valid_hits1 >= 0.0)
        std::cout << "best validation hits@1: " << result.best_valid_hits1 << "\n";
    return 0;
}

int cmd_eval(const ExperimentConfig& cfg) {
    LoadedModel lm = load_model_and_vocab(cfg);
    const KnowledgeGraph g = build_graph_from_config(cfg);
    DatasetSplit split = load_or_make_split(g, cfg);

    if (cfg.eval_split == "valid")
        split.test = split.valid;
    else if (cfg.eval_split == "train")
        split.test = split.train;
    else if (cfg.eval_split != "test")
        throw ConfigError("config: eval_split must be train, valid, or test");

    const EvalReport report = evaluate(lm.ckpt.model, lm.vocab, g, split, cfg.eval_config(),
                                       fs::path(cfg.checkpoint).filename().string());

    fs::create_directories(cfg.out_dir);
    write_resolved_config(cfg);
    write_text((fs::path(cfg.out_dir) / "eval_report.json").string(),
               eval_report_to_json(report) + "\n");
    const std::string table = format_eval_table(report);
    write_text((fs::path(cfg.out_dir) / "eval_report.txt").string(), table);
    write_predictions_jsonl(report, (fs::path(cfg.out_dir) / "predictions.jsonl").string());
    write_text((fs::path(cfg.out_dir) / "length_hits.svg").string(),
               length_buckets_svg(report.length_buckets, 10));
    std::cout << table;
    return 0;
}

int cmd_predict(const ExperimentConfig& cfg) {
    if (cfg.predict_head.empty() || cfg.predict_rel.empty() || cfg.predict_lang.empty())
        throw ConfigError("predict: predict_head, predict_rel, predict_lang are required");
    LoadedModel lm = load_model_and_vocab(cfg);
    const KnowledgeGraph g = build_graph_from_config(cfg);

    const bool per_lang = cfg.candidate_mode == "per_language";
    const std::string lang_key = per_lang ? cfg.predict_lang : std::string();
    EntityTrie trie = EntityTrie::build(entity_candidates(g, lm.vocab, lang_key), lang_key);
    if (trie.entity_count() == 0)
        throw std::runtime_error("predict: no candidate entities for language " +
                                 cfg.predict_lang);

    Decoder decoder(lm.ckpt.model, lm.vocab);
    const SerializedTriple query = serialize_query(cfg.predict_head, cfg.predict_rel, lm.vocab,
                                                   lm.ckpt.model.config().max_seq_len);
    const std::size_t k = std::max<std::size_t>(1, cfg.predict_k);
    const DecodeResult res =
        decoder.constrained_beam_search(query, trie, std::max<std::size_t>(cfg.beam_width, k), k);

    char buf[64];
    for (std::size_t i = 0; i < res.ranked.size(); ++i) {
        std::snprintf(buf, sizeof(buf), "%2zu  %12.4f  ", i + 1, res.ranked[i].log_prob);
        std::cout << buf << g.entity_surface[std::size_t(res.ranked[i].entity)] << "\n";
    }
    if (res.truncated) std::cout << "(some candidates exceeded the sequence budget)\n";
    return 0;
}

int cmd_report(const ExperimentConfig& cfg) {
    if (cfg.predictions.empty()) throw ConfigError("report: predictions path is required");
    const auto preds = read_predictions_jsonl(cfg.predictions);
    if (preds.empty()) throw std::runtime_error("report: no predictions in " + cfg.predictions);
    const std::vector<std::size_t> ks = {1, 3, 10};
    const auto buckets = length_report(preds, ks, cfg.length_bucket_threshold);

    fs::create_directories(cfg.out_dir);
    write_resolved_config(cfg);
    nlohmann::json j = nlohmann::json::array();
    std::ostringstream table;
    char buf[256];
    for (const auto& b : buckets) {
        nlohmann::json bj;
        bj["length"] = b.length;
        bj["count"] = b.count;
        bj["excluded"] = b.excluded;
        for (const auto& [k, v] : b.hits) bj["hits@" + std::to_string(k)] = v;
        j.push_back(bj);
        std::snprintf(buf, sizeof(buf), "len=%-3zu n=%-6zu%s", b.length, b.count,
                      b.excluded ? " [excluded]" : "");
        table << buf;
        for (const auto& [k, v] : b.hits) {
            std::snprintf(buf, sizeof(buf), "  hits@%zu=%.2f", k, v);
            table << buf;
        }
        table << "\n";
    }
    write_text((fs::path(cfg.out_dir) / "length_report.json").string(), j.dump(2) + "\n");
    write_text((fs::path(cfg.out_dir) / "length_report.txt").string(), table.str());
    write_text((fs::path(cfg.out_dir) / "length_hits.svg").string(),
               length_buckets_svg(buckets, 10));
    std::cout << table.str();
    return 0;
}

}  // namespace kgc
