#include "kgclm/evaluation.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace kgc {

namespace {

double pct(double fraction) { return 100.0 * fraction; }

double hits_from_ranks(const std::vector<std::size_t>& gold_ranks, std::size_t k) {
    std::size_t hit = 0;
    for (std::size_t r : gold_ranks)
        if (r >= 1 && r <= k) ++hit;
    return double(hit) / double(gold_ranks.size());
}

}  // namespace

double hits_at_k(const std::vector<std::vector<int>>& ranked, const std::vector<int>& golds,
                 std::size_t k) {
    if (k < 1) throw std::invalid_argument("hits_at_k: k must be >= 1");
    if (ranked.empty() || ranked.size() != golds.size())
        throw std::invalid_argument("hits_at_k: empty query set or size mismatch");
    std::size_t hit = 0;
    for (std::size_t q = 0; q < ranked.size(); ++q) {
        const std::size_t depth = std::min(k, ranked[q].size());
        for (std::size_t i = 0; i < depth; ++i) {
            if (ranked[q][i] == golds[q]) {
                ++hit;
                break;
            }
        }
    }
    return double(hit) / double(ranked.size());
}

EvalReport evaluate_queries(const Model& model, const Vocabulary& vocab,
                            const KnowledgeGraph& g, const std::vector<Triple>& queries,
                            const std::vector<Triple>& known_triples, const EvalConfig& cfg,
                            const std::string& checkpoint_id) {
    if (queries.empty()) throw std::invalid_argument("evaluate: empty query set");
    std::size_t max_k = 1;
    for (std::size_t k : cfg.ks) max_k = std::max(max_k, k);
    const std::size_t beam_width = std::max(cfg.beam_width, max_k);

    // Known true tails per (head, relation), for the filtered setting.
    std::map<std::pair<int, int>, std::set<int>> known;
    if (cfg.filtered)
        for (const Triple& t : known_triples) known[{t.head, t.relation}].insert(t.tail);

    std::map<std::string, EntityTrie> tries;
    auto trie_for = [&](const std::string& lang) -> const EntityTrie& {
        const std::string key = cfg.per_language_candidates ? lang : std::string();
        auto it = tries.find(key);
        if (it == tries.end())
            it = tries.emplace(key, EntityTrie::build(entity_candidates(g, vocab, key), key))
                     .first;
        return it->second;
    };

    Decoder decoder(model, vocab);
    EvalReport report;
    report.beam_width = beam_width;
    report.per_language_candidates = cfg.per_language_candidates;
    report.filtered = cfg.filtered;
    report.mode = cfg.mode == EvalMode::kgc ? "kgc" : "alignment";
    report.checkpoint_id = checkpoint_id;

    std::map<std::string, std::vector<std::size_t>> ranks_by_lang;

    for (const Triple& q : queries) {
        const EntityTrie& trie = trie_for(q.lang);
        const std::vector<int> gold_tokens = vocab.encode(g.entity_surface[std::size_t(q.tail)]);
        if (!trie.contains(gold_tokens))
            throw std::runtime_error("evaluate: gold entity '" +
                                     g.entity_surface[std::size_t(q.tail)] +
                                     "' missing from the candidate trie (closed-world violation)");

        std::size_t extra = 0;
        if (cfg.filtered) {
            auto it = known.find({q.head, q.relation});
            if (it != known.end() && it->second.size() > 1) extra = it->second.size() - 1;
        }
        const std::size_t want = max_k + extra;
        DecodeResult res = decoder.constrained_beam_search(
            serialize_query(q, g, vocab, model.config().max_seq_len), trie,
            std::max(beam_width, want), want);

        std::vector<ScoredEntity> ranked;
        for (const auto& se : res.ranked) {
            if (cfg.filtered && se.entity != q.tail) {
                auto it = known.find({q.head, q.relation});
                if (it != known.end() && it->second.count(se.entity)) continue;
            }
            ranked.push_back(se);
            if (ranked.size() >= max_k) break;
        }

        QueryPrediction pred;
        pred.lang = q.lang;
        pred.head = g.entity_surface[std::size_t(q.head)];
        pred.relation = g.relation_surface[std::size_t(q.relation)];
        pred.gold = g.entity_surface[std::size_t(q.tail)];
        pred.answer_token_len = gold_tokens.size();
        for (std::size_t i = 0; i < ranked.size(); ++i) {
            pred.topk.emplace_back(g.entity_surface[std::size_t(ranked[i].entity)],
                                   ranked[i].log_prob);
            if (ranked[i].entity == q.tail) pred.gold_rank = i + 1;
        }
        ranks_by_lang[q.lang].push_back(pred.gold_rank);
        report.predictions.push_back(std::move(pred));
    }

    for (const auto& [lang, ranks] : ranks_by_lang) {
        report.per_language_count[lang] = ranks.size();
        for (std::size_t k : cfg.ks)
            report.per_language[lang][k] = pct(hits_from_ranks(ranks, k));
    }
    for (std::size_t k : cfg.ks) {
        double acc = 0.0;
        for (const auto& [lang, vals] : report.per_language) acc += vals.at(k);
        report.macro[k] = acc / double(report.per_language.size());
    }
    report.total_queries = report.predictions.size();
    report.length_buckets =
        length_report(report.predictions, cfg.ks, cfg.length_bucket_threshold);
    return report;
}

EvalReport evaluate(const Model& model, const Vocabulary& vocab, const KnowledgeGraph& g,
                    const DatasetSplit& split, const EvalConfig& cfg,
                    const std::string& checkpoint_id) {
    std::vector<Triple> queries;
    if (cfg.mode == EvalMode::alignment) {
        for (const Triple& t : split.test)
            if (is_alignment_relation(g.relation_surface[std::size_t(t.relation)]))
                queries.push_back(t);
        if (queries.empty())
            throw std::invalid_argument("evaluate: alignment mode but no alignment queries");
    } else {
        queries = split.test;
    }
    std::vector<Triple> known = split.train;
    known.insert(known.end(), split.valid.begin(), split.valid.end());
    known.insert(known.end(), split.test.begin(), split.test.end());
    return evaluate_queries(model, vocab, g, queries, known, cfg, checkpoint_id);
}

std::vector<LengthBucket> length_report(const std::vector<QueryPrediction>& predictions,
                                        const std::vector<std::size_t>& ks,
                                        std::size_t threshold) {
    std::map<std::size_t, std::vector<std::size_t>> ranks_by_len;
    for (const auto& p : predictions) ranks_by_len[p.answer_token_len].push_back(p.gold_rank);
    std::vector<LengthBucket> out;
    for (const auto& [len, ranks] : ranks_by_len) {
        LengthBucket b;
        b.length = len;
        b.count = ranks.size();
        b.excluded = ranks.size() < threshold;
        for (std::size_t k : ks) b.hits[k] = pct(hits_from_ranks(ranks, k));
        out.push_back(std::move(b));
    }
    return out;
}

std::string eval_report_to_json(const EvalReport& report) {
    nlohmann::json j;
    j["mode"] = report.mode;
    j["beam_width"] = report.beam_width;
    j["per_language_candidates"] = report.per_language_candidates;
    j["filtered"] = report.filtered;
    j["checkpoint_id"] = report.checkpoint_id;
    j["total_queries"] = report.total_queries;
    for (const auto& [lang, vals] : report.per_language) {
        nlohmann::json lj;
        for (const auto& [k, v] : vals) lj["hits@" + std::to_string(k)] = v;
        lj["queries"] = report.per_language_count.at(lang);
        j["per_language"][lang] = lj;
    }
    for (const auto& [k, v] : report.macro) j["macro"]["hits@" + std::to_string(k)] = v;
    nlohmann::json buckets = nlohmann::json::array();
    for (const auto& b : report.length_buckets) {
        nlohmann::json bj;
        bj["length"] = b.length;
        bj["count"] = b.count;
        bj["excluded"] = b.excluded;
        for (const auto& [k, v] : b.hits) bj["hits@" + std::to_string(k)] = v;
        buckets.push_back(bj);
    }
    j["length_buckets"] = buckets;
    return j.dump(2);
}

std::string format_eval_table(const EvalReport& report) {
    std::ostringstream os;
    char buf[256];
    os << "mode=" << report.mode << " beam=" << report.beam_width
       << " candidates=" << (report.per_language_candidates ? "per_language" : "global")
       << " filtered=" << (report.filtered ? "yes" : "no") << "\n";
    std::vector<std::size_t> ks;
    for (const auto& [k, v] : report.macro) ks.push_back(k);
    os << "lang   queries";
    for (std::size_t k : ks) {
        std::snprintf(buf, sizeof(buf), "  hits@%-2zu", k);
        os << buf;
    }
    os << "\n";
    for (const auto& [lang, vals] : report.per_language) {
        std::snprintf(buf, sizeof(buf), "%-6s %7zu", lang.c_str(),
                      report.per_language_count.at(lang));
        os << buf;
        for (std::size_t k : ks) {
            std::snprintf(buf, sizeof(buf), "  %7.2f", vals.at(k));
            os << buf;
        }
        os << "\n";
    }
    os << "macro         ";
    for (std::size_t k : ks) {
        std::snprintf(buf, sizeof(buf), "  %7.2f", report.macro.at(k));
        os << buf;
    }
    os << "\n";
    if (!report.length_buckets.empty()) {
        os << "answer-length buckets (token count, excluded below threshold):\n";
        for (const auto& b : report.length_buckets) {
            std::snprintf(buf, sizeof(buf), "  len=%-3zu n=%-5zu%s", b.length, b.count,
                          b.excluded ? " [excluded]" : "");
            os << buf;
            for (const auto& [k, v] : b.hits) {
                std::snprintf(buf, sizeof(buf), "  hits@%zu=%.2f", k, v);
                os << buf;
            }
            os << "\n";
        }
    }
    return os.str();
}

std::string length_buckets_svg(const std::vector<LengthBucket>& buckets, std::size_t k) {
    std::vector<const LengthBucket*> shown;
    for (const auto& b : buckets)
        if (!b.excluded && b.hits.count(k)) shown.push_back(&b);
    const int bar_w = 40, gap = 14, h = 220, base = 180, left = 40;
    const int width = left + int(shown.size()) * (bar_w + gap) + gap;
    std::ostringstream os;
    os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << std::max(width, 120)
       << "\" height=\"" << h << "\">\n";
    os << "<text x=\"4\" y=\"16\" font-size=\"12\">hits@" << k
       << " by answer token length (%)</text>\n";
    os << "<line x1=\"" << left - 6 << "\" y1=\"" << base << "\" x2=\"" << width - 4
       << "\" y2=\"" << base << "\" stroke=\"black\"/>\n";
    int x = left;
    char buf[160];
    for (const auto* b : shown) {
        const double v = b->hits.at(k);
        const int bar_h = int(v / 100.0 * 150.0);
        std::snprintf(buf, sizeof(buf),
                      "<rect x=\"%d\" y=\"%d\" width=\"%d\" height=\"%d\" fill=\"#4477aa\"/>\n",
                      x, base - bar_h, bar_w, bar_h);
        os << buf;
        std::snprintf(buf, sizeof(buf),
                      "<text x=\"%d\" y=\"%d\" font-size=\"10\" text-anchor=\"middle\">%.1f</text>\n",
                      x + bar_w / 2, base - bar_h - 4, v);
        os << buf;
        std::snprintf(buf, sizeof(buf),
                      "<text x=\"%d\" y=\"%d\" font-size=\"10\" text-anchor=\"middle\">%zu</text>\n",
                      x + bar_w / 2, base + 14, b->length);
        os << buf;
        x += bar_w + gap;
    }
    os << "</svg>\n";
    return os.str();
}

void write_predictions_jsonl(const EvalReport& report, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out.is_open()) throw std::runtime_error("write_predictions_jsonl: cannot open " + path);
    for (const auto& p : report.predictions) {
        nlohmann::json j;
        j["lang"] = p.lang;
        j["head"] = p.head;
        j["relation"] = p.relation;
        j["gold"] = p.gold;
        j["gold_rank"] = p.gold_rank;
        j["answer_token_len"] = p.answer_token_len;
        nlohmann::json topk = nlohmann::json::array();
        for (const auto& [surface, lp] : p.topk) {
            topk.push_back({{"entity", surface}, {"log_prob", lp}});
        }
        j["topk"] = topk;
        out << j.dump() << '\n';
    }
}

std::vector<QueryPrediction> read_predictions_jsonl(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in.is_open()) throw std::runtime_error("read_predictions_jsonl: cannot open " + path);
    std::vector<QueryPrediction> out;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        nlohmann::json j = nlohmann::json::parse(line);
        QueryPrediction p;
        p.lang = j.at("lang").get<std::string>();
        p.head = j.at("head").get<std::string>();
        p.relation = j.at("relation").get<std::string>();
        p.gold = j.at("gold").get<std::string>();
        p.gold_rank = j.at("gold_rank").get<std::size_t>();
        p.answer_token_len = j.at("answer_token_len").get<std::size_t>();
        for (const auto& t : j.at("topk"))
            p.topk.emplace_back(t.at("entity").get<std::string>(),
                                t.at("log_prob").get<double>());
        out.push_back(std::move(p));
    }
    return out;
}

}  // namespace kgc
