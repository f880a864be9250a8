#pragma once

#include <map>
#include <string>
#include <vector>

#include "kgclm/model.hpp"
#include "kgclm/vocab.hpp"

namespace kgc {

// Prefix tree over entity token sequences; [E] is permitted exactly where a
// terminal node exists. Children are kept in token-id order so traversal is
// deterministic.
class EntityTrie {
public:
    struct Node {
        std::map<int, int> children;  // token id -> node index
        int entity = -1;              // >= 0 marks a terminal node
    };

    EntityTrie() { nodes_.emplace_back(); }

    // Duplicate identical token sequences for two entity ids are ambiguous
    // and raise an error naming both ids.
    static EntityTrie build(const std::vector<std::pair<int, std::vector<int>>>& entities,
                            const std::string& lang);

    void insert(int entity_id, const std::vector<int>& token_ids);

    int root() const { return 0; }
    int child(int node, int token) const;
    bool terminal(int node) const { return nodes_[std::size_t(node)].entity >= 0; }
    int entity_at(int node) const { return nodes_[std::size_t(node)].entity; }
    const std::map<int, int>& children(int node) const {
        return nodes_[std::size_t(node)].children;
    }
    bool contains(const std::vector<int>& token_ids) const;

    std::size_t entity_count() const { return entity_count_; }
    const std::string& lang() const { return lang_; }

private:
    std::vector<Node> nodes_;
    std::size_t entity_count_ = 0;
    std::string lang_;
};

struct BeamHypothesis {
    std::vector<int> tokens;  // emitted so far; ends with [E] once completed
    double log_prob = 0.0;
    int trie_node = 0;
    bool completed = false;
    int entity = -1;
};

struct ScoredEntity {
    int entity = -1;
    double log_prob = 0.0;
    std::vector<int> tokens;  // entity tokens, without [E]
};

struct DecodeResult {
    std::vector<ScoredEntity> ranked;  // best first
    bool truncated = false;  // a hypothesis ran out of room before completing
};

// Read-only decoding over a trained model: scores are summed token
// log-probabilities (the [E] step included), no length normalization.
// Equal scores break ties toward the lexicographically smaller token
// sequence, a prefix ordering before its extensions.
class Decoder {
public:
    Decoder(const Model& model, const Vocabulary& vocab)
        : model_(&model), vocab_(&vocab) {}

    DecodeResult constrained_beam_search(const SerializedTriple& query, const EntityTrie& trie,
                                         std::size_t beam_width, std::size_t k) const;

    // Beam width 1, top 1.
    DecodeResult greedy_decode(const SerializedTriple& query, const EntityTrie& trie) const;

    // Teacher-forces every candidate and returns the full ranking; the slow
    // exact decoder and the oracle the beam is checked against.
    std::vector<ScoredEntity> rank_exhaustive(
        const SerializedTriple& query,
        const std::vector<std::pair<int, std::vector<int>>>& candidates) const;

private:
    const Model* model_;
    const Vocabulary* vocab_;
};

// Query prefix extended with generated answer tokens (and optionally [E]),
// reusing the query's role positions so masks stay consistent with the
// full-sequence serialization.
SerializedTriple extend_query(const SerializedTriple& query, const std::vector<int>& tail_tokens,
                              bool add_end);

// Candidate (entity id, token ids) pairs for a trie: all entities of the
// given language, or every entity when lang is empty.
std::vector<std::pair<int, std::vector<int>>> entity_candidates(const KnowledgeGraph& g,
                                                                const Vocabulary& v,
                                                                const std::string& lang);

}  // namespace kgc
