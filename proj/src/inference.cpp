#include "kgclm/inference.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace kgc {

namespace {

// Entity-token comparison for score ties: lexicographic by token id, a
// prefix before its extensions.
bool tokens_less(const std::vector<int>& a, const std::vector<int>& b) {
    return std::lexicographical_compare(a.begin(), a.end(), b.begin(), b.end());
}

// Log-softmax of one logits row, summed left to right for determinism.
std::vector<double> log_softmax(const double* logits, std::size_t n) {
    double mx = logits[0];
    for (std::size_t i = 1; i < n; ++i) mx = std::max(mx, logits[i]);
    double denom = 0.0;
    for (std::size_t i = 0; i < n; ++i) denom += std::exp(logits[i] - mx);
    const double lse = mx + std::log(denom);
    std::vector<double> out(n);
    for (std::size_t i = 0; i < n; ++i) out[i] = logits[i] - lse;
    return out;
}

}  // namespace

EntityTrie EntityTrie::build(const std::vector<std::pair<int, std::vector<int>>>& entities,
                             const std::string& lang) {
    EntityTrie trie;
    trie.lang_ = lang;
    for (const auto& [id, tokens] : entities) trie.insert(id, tokens);
    return trie;
}

void EntityTrie::insert(int entity_id, const std::vector<int>& token_ids) {
    if (token_ids.empty())
        throw std::invalid_argument("EntityTrie::insert: empty token sequence for entity " +
                                    std::to_string(entity_id));
    int node = 0;
    for (int tok : token_ids) {
        auto [it, inserted] = nodes_[std::size_t(node)].children.try_emplace(
            tok, int(nodes_.size()));
        if (inserted) nodes_.emplace_back();
        node = it->second;
    }
    if (nodes_[std::size_t(node)].entity >= 0)
        throw std::invalid_argument(
            "EntityTrie::insert: ambiguous surface form shared by entities " +
            std::to_string(nodes_[std::size_t(node)].entity) + " and " +
            std::to_string(entity_id));
    nodes_[std::size_t(node)].entity = entity_id;
    entity_count_ += 1;
}

int EntityTrie::child(int node, int token) const {
    const auto& ch = nodes_[std::size_t(node)].children;
    auto it = ch.find(token);
    return it == ch.end() ? -1 : it->second;
}

bool EntityTrie::contains(const std::vector<int>& token_ids) const {
    int node = 0;
    for (int tok : token_ids) {
        node = child(node, tok);
        if (node < 0) return false;
    }
    return terminal(node);
}

SerializedTriple extend_query(const SerializedTriple& query, const std::vector<int>& tail_tokens,
                              bool add_end) {
    SerializedTriple s = query;
    s.ids.insert(s.ids.end(), tail_tokens.begin(), tail_tokens.end());
    s.tail_begin = s.query_len;
    s.tail_end = s.ids.size();
    if (add_end) {
        s.pos_e = s.ids.size();
        s.ids.push_back(Vocabulary::kEnd);
    }
    return s;
}

std::vector<std::pair<int, std::vector<int>>> entity_candidates(const KnowledgeGraph& g,
                                                                const Vocabulary& v,
                                                                const std::string& lang) {
    std::vector<std::pair<int, std::vector<int>>> out;
    for (std::size_t e = 0; e < g.entity_surface.size(); ++e) {
        if (!lang.empty() && g.entity_lang[e] != lang) continue;
        out.emplace_back(int(e), v.encode(g.entity_surface[e]));
    }
    return out;
}

DecodeResult Decoder::constrained_beam_search(const SerializedTriple& query,
                                              const EntityTrie& trie, std::size_t beam_width,
                                              std::size_t k) const {
    if (beam_width < 1 || k < 1 || beam_width < k)
        throw std::invalid_argument("constrained_beam_search: need beam_width >= k >= 1");

    const std::size_t max_len = model_->config().max_seq_len;
    DecodeResult result;

    auto better = [](const BeamHypothesis& a, const BeamHypothesis& b) {
        if (a.log_prob != b.log_prob) return a.log_prob > b.log_prob;
        return tokens_less(a.tokens, b.tokens);
    };

    std::vector<BeamHypothesis> beam{BeamHypothesis{{}, 0.0, trie.root(), false, -1}};

    while (true) {
        std::vector<std::size_t> active;  // indices of incomplete hypotheses
        for (std::size_t i = 0; i < beam.size(); ++i) {
            if (beam[i].completed) continue;
            // +1 for the [E] the hypothesis still has to emit.
            if (query.ids.size() + beam[i].tokens.size() + 1 > max_len) {
                result.truncated = true;
                continue;
            }
            active.push_back(i);
        }
        if (active.empty()) break;

        std::vector<SerializedTriple> prefixes;
        prefixes.reserve(active.size());
        for (std::size_t i : active)
            prefixes.push_back(extend_query(query, beam[i].tokens, false));

        Tape tape(false);
        EncodedBatch enc = model_->forward(prefixes, tape);

        std::vector<BeamHypothesis> pool;
        for (std::size_t i = 0; i < beam.size(); ++i)
            if (beam[i].completed) pool.push_back(beam[i]);

        for (std::size_t a = 0; a < active.size(); ++a) {
            const BeamHypothesis& hyp = beam[active[a]];
            const std::size_t last = prefixes[a].ids.size();
            Array logits = model_->next_token_logits(enc, a, last, tape);
            const auto lp = log_softmax(logits.data(), logits.numel());

            for (const auto& [tok, child] : trie.children(hyp.trie_node)) {
                BeamHypothesis next = hyp;
                next.tokens.push_back(tok);
                next.log_prob += lp[std::size_t(tok)];
                next.trie_node = child;
                pool.push_back(std::move(next));
            }
            if (trie.terminal(hyp.trie_node)) {
                BeamHypothesis done = hyp;
                done.tokens.push_back(Vocabulary::kEnd);
                done.log_prob += lp[std::size_t(Vocabulary::kEnd)];
                done.completed = true;
                done.entity = trie.entity_at(hyp.trie_node);
                pool.push_back(std::move(done));
            }
        }
        if (pool.empty()) break;
        std::sort(pool.begin(), pool.end(), better);
        if (pool.size() > beam_width) pool.resize(beam_width);
        beam = std::move(pool);

        bool any_incomplete = false;
        for (const auto& h : beam) any_incomplete |= !h.completed;
        if (!any_incomplete) break;
    }

    std::vector<BeamHypothesis> completed;
    for (auto& h : beam)
        if (h.completed) completed.push_back(std::move(h));
    std::sort(completed.begin(), completed.end(), better);

    for (const auto& h : completed) {
        if (result.ranked.size() >= k) break;
        bool dup = false;
        for (const auto& r : result.ranked) dup |= r.entity == h.entity;
        if (dup) continue;  // cannot happen under a trie, kept for safety
        ScoredEntity se;
        se.entity = h.entity;
        se.log_prob = h.log_prob;
        se.tokens.assign(h.tokens.begin(), h.tokens.end() - 1);  // strip [E]
        result.ranked.push_back(std::move(se));
    }
    return result;
}

DecodeResult Decoder::greedy_decode(const SerializedTriple& query, const EntityTrie& trie) const {
    return constrained_beam_search(query, trie, 1, 1);
}

std::vector<ScoredEntity> Decoder::rank_exhaustive(
    const SerializedTriple& query,
    const std::vector<std::pair<int, std::vector<int>>>& candidates) const {
    std::vector<ScoredEntity> out;
    const std::size_t max_len = model_->config().max_seq_len;

    constexpr std::size_t kChunk = 64;
    std::vector<std::pair<int, std::vector<int>>> fitting;
    for (const auto& c : candidates) {
        if (query.ids.size() + c.second.size() + 1 <= max_len) fitting.push_back(c);
    }
    for (std::size_t base = 0; base < fitting.size(); base += kChunk) {
        const std::size_t n = std::min(kChunk, fitting.size() - base);
        std::vector<SerializedTriple> seqs;
        seqs.reserve(n);
        for (std::size_t i = 0; i < n; ++i)
            seqs.push_back(extend_query(query, fitting[base + i].second, true));

        Tape tape(false);
        EncodedBatch enc = model_->forward(seqs, tape);
        for (std::size_t i = 0; i < n; ++i) {
            const auto& s = seqs[i];
            std::vector<int> rows;
            for (std::size_t p = s.query_len; p < s.ids.size(); ++p)
                rows.push_back(enc.row(i, p - 1));
            Array logits = model_->logits_for_rows(enc, rows, tape);
            const std::size_t V = logits.cols();
            double score = 0.0;
            for (std::size_t p = 0; p < rows.size(); ++p) {
                const auto lp = log_softmax(logits.data() + p * V, V);
                score += lp[std::size_t(s.ids[s.query_len + p])];
            }
            ScoredEntity se;
            se.entity = fitting[base + i].first;
            se.log_prob = score;
            se.tokens = fitting[base + i].second;
            out.push_back(std::move(se));
        }
    }
    std::sort(out.begin(), out.end(), [](const ScoredEntity& a, const ScoredEntity& b) {
        if (a.log_prob != b.log_prob) return a.log_prob > b.log_prob;
        return tokens_less(a.tokens, b.tokens);
    });
    return out;
}

}  // namespace kgc
