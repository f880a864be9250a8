#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

namespace kgc {

// One (head, relation, tail) fact. Ids resolve in the owning graph's
// registries. lang is the language of the tail entity, which is what
// candidate selection at inference time needs; for monolingual facts the
// head shares it.
struct Triple {
    int head = -1;
    int relation = -1;
    int tail = -1;
    std::string lang;

    bool operator==(const Triple& o) const {
        return head == o.head && relation == o.relation && tail == o.tail && lang == o.lang;
    }
};

struct KnowledgeGraph {
    std::string lang;  // "de", or "de+fr" after a merge
    std::vector<std::string> entity_surface;
    std::vector<std::string> entity_lang;
    std::vector<std::string> relation_surface;
    std::vector<Triple> triples;
    std::size_t duplicate_lines_dropped = 0;

    int entity_id(const std::string& surface, const std::string& lang) const;
    int relation_id(const std::string& surface) const;
    int intern_entity(const std::string& surface, const std::string& lang);
    int intern_relation(const std::string& surface);

    // True if the exact triple is already present.
    bool has_triple(const Triple& t) const;
    // Adds unless duplicate; returns false for duplicates.
    bool add_triple(const Triple& t);

    std::size_t num_entities() const { return entity_surface.size(); }
    std::size_t num_relations() const { return relation_surface.size(); }

private:
    std::unordered_map<std::string, int> entity_index_;  // key: lang '\t' surface
    std::unordered_map<std::string, int> relation_index_;
    std::unordered_map<std::string, int> triple_index_;  // key: "h r t lang"
};

struct DatasetSplit {
    std::vector<Triple> train, valid, test;
    std::vector<std::size_t> train_idx, valid_idx, test_idx;  // into graph.triples
    std::vector<std::string> warnings;
};

struct SplitRatios {
    double train = 0.8;
    double valid = 0.1;
    double test = 0.1;
};

enum class SynthPattern { random_edges, compositional };

struct SynthSpec {
    std::size_t n_entities = 100;
    std::size_t n_relations = 5;
    std::size_t n_triples = 300;
    std::vector<std::string> languages;
    SynthPattern pattern = SynthPattern::random_edges;
    std::uint64_t seed = 0;
};

// Per-language counts in the style of a dataset statistics table. Entity and
// relation counts are reported under both readings: distinct ids appearing
// in that split's triples, and the full registry for the language.
struct LangStats {
    std::string lang;
    std::size_t train_triples = 0, valid_triples = 0, test_triples = 0;
    std::size_t train_entities = 0, valid_entities = 0, test_entities = 0;
    std::size_t train_relations = 0, valid_relations = 0, test_relations = 0;
    std::size_t registry_entities = 0, registry_relations = 0;
    double te_ratio = 0.0;
};

// head TAB relation TAB tail, UTF-8, no header. Malformed or empty fields
// raise with the line number; duplicate lines are dropped and counted.
KnowledgeGraph load_tsv(const std::string& path, const std::string& lang);
void save_tsv(const KnowledgeGraph& g, const std::string& path);

// Shuffles deterministically under seed, then repairs candidate valid/test
// triples whose entity or relation would otherwise be unseen in training by
// moving them to train. Never violates the closed-world guarantee.
DatasetSplit split_closed_world(const KnowledgeGraph& g, const SplitRatios& ratios,
                                std::uint64_t seed);

// (train+valid+test triples) / (distinct entities in train triples).
double te_ratio(const DatasetSplit& split);
double te_ratio_from_counts(std::size_t train_triples, std::size_t valid_triples,
                            std::size_t test_triples, std::size_t train_entities);

// Deterministic synthetic multilingual graphs. The compositional pattern
// plants an edge r2(a,c) whenever it plants r0(a,b) and r1(b,c), so a
// relation-composition regularity exists for a model to pick up.
std::vector<KnowledgeGraph> synth_generate(const SynthSpec& spec);

// Merges graphs into one multilingual graph. Entities are deduplicated by
// (language, surface); relations are shared by surface across languages.
KnowledgeGraph merge_graphs(const std::vector<KnowledgeGraph>& graphs);

// Merged graph plus one (e1, same_as_<l1>_<l2>, e2) edge per pair. Pair
// surfaces must exist in their respective graphs.
KnowledgeGraph alignment_augment(const KnowledgeGraph& g1, const KnowledgeGraph& g2,
                                 const std::vector<std::pair<std::string, std::string>>& pairs);

inline std::string alignment_relation_name(const std::string& l1, const std::string& l2) {
    return "same_as_" + l1 + "_" + l2;
}
bool is_alignment_relation(const std::string& relation_surface);

std::vector<std::pair<std::string, std::string>> load_alignment_pairs(const std::string& path);

void save_split_manifest(const DatasetSplit& split, const SplitRatios& ratios,
                         std::uint64_t seed, const std::string& path);
DatasetSplit load_split_manifest(const KnowledgeGraph& g, const std::string& path);

std::vector<LangStats> split_stats(const KnowledgeGraph& g, const DatasetSplit& split);
std::string format_stats_table(const std::vector<LangStats>& stats);

}  // namespace kgc
