#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "kgclm/evaluation.hpp"
#include "kgclm/kgdata.hpp"
#include "kgclm/model.hpp"
#include "kgclm/objectives.hpp"
#include "kgclm/optimizer.hpp"
#include "kgclm/vocab.hpp"

namespace kgc {

struct TrainConfig {
    double lr = 3e-4;
    std::size_t batch_size = 128;
    std::size_t epochs = 100;
    std::uint64_t seed = 1;
    LossWeights weights;
    OptimizerKind optimizer = OptimizerKind::adam;
    std::size_t checkpoint_interval = 0;  // steps; 0 = final checkpoint only
    std::size_t grad_norm_interval = 1;   // steps between grad-norm reports; 0 = never
    // validation-driven stopping
    std::size_t eval_interval = 0;  // epochs between Hits@1 evals; 0 = off
    std::size_t patience = 0;       // non-improving evals tolerated; 0 = no limit
    // stop once train-query Hits@1 reaches this (0 = off); useful for
    // memorization runs that would otherwise spin on a solved dataset
    double stop_train_hits1 = 0.0;
    std::size_t eval_beam_width = 10;
    std::string out_dir;  // checkpoints land here when nonempty

    void validate() const;  // batch_size >= 2 whenever beta > 0
};

// One padded training batch plus its negative pairing.
struct TrainBatch {
    std::vector<SerializedTriple> examples;
    std::vector<VisibilityMask> masks;
    std::vector<int> neg_pairing;  // derangement; empty for singleton batches
    std::vector<Triple> triples;
};

// Derangement over batch indices via a uniform random cycle; every index is
// paired with a different one, deterministically under seed.
std::vector<int> negative_sampler(std::size_t batch_size, std::uint64_t seed);

// Epoch-shuffled batches; every example appears exactly once per epoch and
// languages mix freely. Deterministic under (seed, epoch).
std::vector<TrainBatch> make_batches(const std::vector<SerializedTriple>& examples,
                                     const std::vector<Triple>& triples, MaskMode mask_mode,
                                     std::size_t batch_size, std::uint64_t seed,
                                     std::size_t epoch);

struct StepRecord {
    std::size_t step = 0;
    std::size_t epoch = 0;
    double lr = 0.0;
    LossReport losses;
};

std::string step_record_to_json(const StepRecord& rec);

struct TrainResult {
    std::vector<StepRecord> log;
    std::size_t steps = 0;
    std::size_t epochs_run = 0;
    std::string final_checkpoint;  // path, when out_dir was set
    std::string best_checkpoint;   // best valid Hits@1, when eval_interval > 0
    double best_valid_hits1 = -1.0;
    bool stopped_early = false;
};

// Full training loop: forward, composed loss, backward, adaptive step, with
// JSON-line loss records, interval checkpoints, and optional early stops. A
// NaN loss aborts (after flushing the log) and leaves the last-good
// checkpoint in place.
TrainResult train(const KnowledgeGraph& g, const DatasetSplit& split, const Vocabulary& vocab,
                  const ModelConfig& mcfg, const TrainConfig& tcfg, Model* out_model = nullptr);

// ---- embedding baselines ----

struct BaselineConfig {
    std::size_t dim = 32;  // entity dimension; even for rotate/complex
    double lr = 0.05;
    double margin = 1.0;
    std::size_t epochs = 200;
    std::size_t batch_size = 128;
    std::uint64_t seed = 1;
    OptimizerKind optimizer = OptimizerKind::adam;
};

// Lookup-table link predictor trained with margin ranking (transe/rotate)
// or logistic loss (complex) under uniform head/tail corruption.
class BaselineModel {
public:
    BaselineModel() = default;
    BaselineModel(ScoreVariant variant, std::size_t n_entities, std::size_t n_relations,
                  const BaselineConfig& cfg);

    ScoreVariant variant() const { return variant_; }
    const Array& entity_table() const { return ent_; }
    const Array& relation_table() const { return rel_; }

    // Plain-double score of one triple; lower is better.
    double score(int head, int relation, int tail) const;
    // Candidate entity ids sorted best-first (ties toward the smaller id).
    std::vector<int> rank_tails(int head, int relation,
                                const std::vector<int>& candidates) const;

private:
    friend BaselineModel train_embedding_baseline(const KnowledgeGraph&, const DatasetSplit&,
                                                  ScoreVariant, const BaselineConfig&);
    ScoreVariant variant_ = ScoreVariant::transe_l1;
    std::size_t dim_ = 0;
    Array ent_;  // [E, dim]
    Array rel_;  // [R, dim] (rotate: [R, dim/2] phase angles)
};

BaselineModel train_embedding_baseline(const KnowledgeGraph& g, const DatasetSplit& split,
                                       ScoreVariant variant, const BaselineConfig& cfg);

}  // namespace kgc
