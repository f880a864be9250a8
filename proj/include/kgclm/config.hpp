#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "kgclm/evaluation.hpp"
#include "kgclm/model.hpp"
#include "kgclm/objectives.hpp"
#include "kgclm/training.hpp"

namespace kgc {

// Configuration problems (unknown key, unparsable value, missing file key)
// exit with code 1; runtime failures exit with 2.
struct ConfigError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

// One flat key=value file drives every command; unknown keys are rejected
// and each run rewrites its fully resolved configuration next to its
// outputs, which is all that is needed to reproduce the run byte for byte.
struct ExperimentConfig {
    // paths
    std::string data_dir = "data";
    std::string out_dir = "out";
    std::string checkpoint;    // eval/predict input
    std::string vocab;         // defaults to <checkpoint dir>/vocab.json
    std::string predictions;   // report input
    // data
    double ratio_train = 0.8, ratio_valid = 0.1, ratio_test = 0.1;
    std::string alignment_pairs;  // optional pairs TSV
    std::string alignment_langs;  // "l1,l2" naming the paired graphs
    std::string tokenizer_mode = "char";  // char | word
    // model
    std::uint64_t n_layers = 2, n_heads = 4, d_model = 64, d_ff = 256, max_seq_len = 35;
    std::string mask_mode = "role_separated";
    bool tie_output = true;
    // training
    double lr = 3e-4;
    std::uint64_t batch_size = 128, epochs = 100;
    std::uint64_t seed = 1;
    std::string optimizer = "adam";  // adam | sgd
    double alpha = 0.001, beta = 0.005, gamma = 0.0;
    std::string score_variant = "transe_l1";
    std::string jsd_pos_form = "sp_neg_t";  // sp_neg_t | sp_t
    bool gamma_margin = false;
    std::uint64_t checkpoint_interval = 0;
    std::uint64_t grad_norm_interval = 1;
    std::uint64_t eval_interval = 0, patience = 0;
    double stop_train_hits1 = 0.0;
    // evaluation
    std::uint64_t beam_width = 10;
    std::string candidate_mode = "per_language";  // per_language | global
    bool filtered = false;
    std::uint64_t length_bucket_threshold = 10;
    std::string eval_split = "test";  // test | valid | train
    std::string eval_mode = "kgc";    // kgc | alignment
    // gen-data
    std::uint64_t gen_entities = 200, gen_relations = 5, gen_triples = 500, gen_languages = 3;
    std::string gen_pattern = "compositional";  // compositional | random
    std::uint64_t gen_alignment_pairs = 0;
    // predict
    std::string predict_head, predict_rel, predict_lang;
    std::uint64_t predict_k = 10;

    void set(const std::string& key, const std::string& value);  // throws ConfigError
    std::string to_text() const;  // every key, sorted, value round-trippable

    static ExperimentConfig parse_text(const std::string& text);
    static ExperimentConfig load_file(const std::string& path);
    void save_file(const std::string& path) const;

    // getenv("KGCLM_<KEY>") for every key, applied in key order.
    void apply_env_overrides();

    // --ablate local/global/mask, matching the ablation table rows.
    void apply_ablation(const std::string& which);

    ModelConfig model_config(std::size_t vocab_size) const;
    TrainConfig train_config() const;
    LossWeights loss_weights() const;
    EvalConfig eval_config() const;
    BaselineConfig baseline_config() const;
    TokenizerMode tokenizer() const;
};

}  // namespace kgc
