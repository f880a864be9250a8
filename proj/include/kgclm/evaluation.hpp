#pragma once

#include <map>
#include <string>
#include <vector>

#include "kgclm/inference.hpp"
#include "kgclm/kgdata.hpp"
#include "kgclm/model.hpp"
#include "kgclm/vocab.hpp"

namespace kgc {

enum class EvalMode { kgc, alignment };

struct EvalConfig {
    std::size_t beam_width = 10;
    std::vector<std::size_t> ks = {1, 3, 10};
    bool per_language_candidates = true;  // false: rank against every entity
    bool filtered = false;                // drop other known-true tails from rankings
    std::size_t length_bucket_threshold = 10;
    EvalMode mode = EvalMode::kgc;
};

struct QueryPrediction {
    std::string lang, head, relation, gold;
    std::vector<std::pair<std::string, double>> topk;  // entity surface, log-prob
    std::size_t gold_rank = 0;                         // 1-based; 0 = not retrieved
    std::size_t answer_token_len = 0;                  // gold tail tokens (without [E])
};

struct LengthBucket {
    std::size_t length = 0;
    std::size_t count = 0;
    std::map<std::size_t, double> hits;  // k -> percentage
    bool excluded = false;               // below the occurrence threshold
};

struct EvalReport {
    std::map<std::string, std::map<std::size_t, double>> per_language;  // lang -> k -> %
    std::map<std::string, std::size_t> per_language_count;
    std::map<std::size_t, double> macro;  // unweighted mean over languages
    std::vector<LengthBucket> length_buckets;
    std::size_t total_queries = 0;
    // config echo
    std::size_t beam_width = 0;
    bool per_language_candidates = true;
    bool filtered = false;
    std::string mode;
    std::string checkpoint_id;
    std::vector<QueryPrediction> predictions;
};

// Fraction of queries whose gold id appears within the first k entries of
// its ranked list; an absent gold is a miss. Empty query set is an error.
double hits_at_k(const std::vector<std::vector<int>>& ranked, const std::vector<int>& golds,
                 std::size_t k);

// Decodes every query with trie-constrained beam search and aggregates
// Hits@k per language plus answer-length buckets. Golds missing from the
// candidate trie violate the closed-world contract and raise.
EvalReport evaluate_queries(const Model& model, const Vocabulary& vocab,
                            const KnowledgeGraph& g, const std::vector<Triple>& queries,
                            const std::vector<Triple>& known_triples, const EvalConfig& cfg,
                            const std::string& checkpoint_id);

// Test-split evaluation; alignment mode keeps only alignment-relation
// queries (and requires at least one).
EvalReport evaluate(const Model& model, const Vocabulary& vocab, const KnowledgeGraph& g,
                    const DatasetSplit& split, const EvalConfig& cfg,
                    const std::string& checkpoint_id);

std::vector<LengthBucket> length_report(const std::vector<QueryPrediction>& predictions,
                                        const std::vector<std::size_t>& ks,
                                        std::size_t threshold);

std::string eval_report_to_json(const EvalReport& report);
std::string format_eval_table(const EvalReport& report);
std::string length_buckets_svg(const std::vector<LengthBucket>& buckets, std::size_t k);
void write_predictions_jsonl(const EvalReport& report, const std::string& path);
std::vector<QueryPrediction> read_predictions_jsonl(const std::string& path);

}  // namespace kgc
