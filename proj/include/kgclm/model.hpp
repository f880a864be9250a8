#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "kgclm/array.hpp"
#include "kgclm/vocab.hpp"

namespace kgc {

// role_separated: query tokens attend bidirectionally within the query
//   region, answer tokens are causal over the answer and see the whole
//   query, and the [H]/[R] markers as queriers are restricted to their own
//   subtoken spans ([T] sees the whole query region).
// no_role_sep: the same prefix-LM shape without the marker restriction.
// full_causal: plain lower-triangular visibility.
enum class MaskMode { role_separated, no_role_sep, full_causal };

std::string mask_mode_name(MaskMode m);
MaskMode mask_mode_from_name(const std::string& name);

struct ModelConfig {
    std::size_t n_layers = 2;
    std::size_t n_heads = 4;
    std::size_t d_model = 64;
    std::size_t d_ff = 256;
    std::size_t max_seq_len = kDefaultMaxSeqLen;
    std::size_t vocab_size = 0;
    MaskMode mask_mode = MaskMode::role_separated;
    bool tie_output = true;

    void validate() const;  // d_model divisible by n_heads, sizes positive
};

// Square attend/block matrix: 0 = attend, -inf = block. The diagonal is
// always 0 so every position sees itself.
struct VisibilityMask {
    std::size_t n = 0;
    std::vector<double> m;

    double at(std::size_t i, std::size_t j) const { return m[i * n + j]; }
    bool blocked(std::size_t i, std::size_t j) const { return at(i, j) != 0.0; }
};

VisibilityMask build_visibility_mask(const SerializedTriple& s, MaskMode mode);
// Embeds a mask into a padded_len x padded_len matrix; padding columns are
// blocked everywhere, padding rows keep only their diagonal entry.
VisibilityMask pad_visibility_mask(const VisibilityMask& mask, std::size_t padded_len);

struct LayerWeights {
    Array wq, bq, wk, bk, wv, bv, wo, bo;
    Array ln1_g, ln1_b, ln2_g, ln2_b;
    Array w1, b1, w2, b2;
};

struct ModelWeights {
    Array tok_emb;  // [vocab, d]
    Array pos_emb;  // [max_seq_len, d]
    std::vector<LayerWeights> layers;
    Array lnf_g, lnf_b;
    Array out_proj;  // defined only when !tie_output
};

// Hidden states for a padded batch, with the role-marker positions kept so
// later stages can pull h_[H], h_[R], h_[T] rows out.
struct EncodedBatch {
    Array hidden;  // [batch*seq, d]
    std::size_t batch_size = 0;
    std::size_t seq_len = 0;
    std::vector<std::size_t> lengths;
    std::vector<std::size_t> pos_h, pos_r, pos_t;

    int row(std::size_t b, std::size_t p) const { return int(b * seq_len + p); }
};

struct RoleStates {
    Array h;  // [batch, d]
    Array r;
    Array t;
};

// Pre-norm transformer encoder over serialized triples with per-example
// visibility masks. All math is on the tape, so gradients flow end to end.
class Model {
public:
    Model() = default;
    Model(ModelConfig cfg, std::uint64_t seed);

    const ModelConfig& config() const { return cfg_; }
    ModelWeights& weights() { return w_; }
    const ModelWeights& weights() const { return w_; }

    std::vector<Array> parameters() const;
    std::vector<std::string> parameter_names() const;
    std::size_t parameter_count() const;

    EncodedBatch forward(const std::vector<SerializedTriple>& batch, Tape& tape) const;
    EncodedBatch forward(const std::vector<SerializedTriple>& batch,
                         const std::vector<VisibilityMask>& masks, Tape& tape) const;

    // Vocab logits for selected hidden rows (as EncodedBatch::row indices).
    Array logits_for_rows(const EncodedBatch& enc, const std::vector<int>& rows,
                          Tape& tape) const;
    // Logits for the token at position i of an example, computed from the
    // hidden state at i-1. i must be >= 1.
    Array next_token_logits(const EncodedBatch& enc, std::size_t example, std::size_t i,
                            Tape& tape) const;

private:
    ModelConfig cfg_;
    ModelWeights w_;
};

RoleStates extract_role_states(const EncodedBatch& enc, Tape& tape);

// Checkpoint file: one JSON header line (config, vocab hash, step, parameter
// order) followed by the raw little-endian float64 parameter blob.
void save_checkpoint(const Model& model, const std::string& vocab_hash, std::size_t step,
                     const std::string& path);

struct Checkpoint {
    Model model;
    std::string vocab_hash;
    std::size_t step = 0;
};

Checkpoint load_checkpoint(const std::string& path);

std::string model_config_to_json(const ModelConfig& cfg);
ModelConfig model_config_from_json(const std::string& text);

}  // namespace kgc
