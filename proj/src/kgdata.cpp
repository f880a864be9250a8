#include "kgclm/kgdata.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "kgclm/rand.hpp"

namespace kgc {

namespace {

std::string entity_key(const std::string& surface, const std::string& lang) {
    return lang + '\t' + surface;
}

std::string triple_key(const Triple& t) {
    return std::to_string(t.head) + ' ' + std::to_string(t.relation) + ' ' +
           std::to_string(t.tail) + ' ' + t.lang;
}

}  // namespace

int KnowledgeGraph::entity_id(const std::string& surface, const std::string& lang) const {
    auto it = entity_index_.find(entity_key(surface, lang));
    return it == entity_index_.end() ? -1 : it->second;
}

int KnowledgeGraph::relation_id(const std::string& surface) const {
    auto it = relation_index_.find(surface);
    return it == relation_index_.end() ? -1 : it->second;
}

int KnowledgeGraph::intern_entity(const std::string& surface, const std::string& lang) {
    auto [it, inserted] = entity_index_.try_emplace(entity_key(surface, lang),
                                                    int(entity_surface.size()));
    if (inserted) {
        entity_surface.push_back(surface);
        entity_lang.push_back(lang);
    }
    return it->second;
}

int KnowledgeGraph::intern_relation(const std::string& surface) {
    auto [it, inserted] = relation_index_.try_emplace(surface, int(relation_surface.size()));
    if (inserted) relation_surface.push_back(surface);
    return it->second;
}

bool KnowledgeGraph::has_triple(const Triple& t) const {
    return triple_index_.count(triple_key(t)) > 0;
}

bool KnowledgeGraph::add_triple(const Triple& t) {
    auto [it, inserted] = triple_index_.try_emplace(triple_key(t), int(triples.size()));
    if (inserted) triples.push_back(t);
    return inserted;
}

KnowledgeGraph load_tsv(const std::string& path, const std::string& lang) {
    std::ifstream in(path, std::ios::binary);
    if (!in.is_open()) throw std::runtime_error("load_tsv: cannot open " + path);
    KnowledgeGraph g;
    g.lang = lang;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const auto tab1 = line.find('\t');
        const auto tab2 = tab1 == std::string::npos ? std::string::npos : line.find('\t', tab1 + 1);
        if (tab1 == std::string::npos || tab2 == std::string::npos ||
            line.find('\t', tab2 + 1) != std::string::npos) {
            throw std::runtime_error(path + ":" + std::to_string(line_no) +
                                     ": expected 3 tab-separated fields");
        }
        const std::string h = line.substr(0, tab1);
        const std::string r = line.substr(tab1 + 1, tab2 - tab1 - 1);
        const std::string t = line.substr(tab2 + 1);
        if (h.empty() || r.empty() || t.empty()) {
            throw std::runtime_error(path + ":" + std::to_string(line_no) + ": empty field");
        }
        Triple tr;
        tr.head = g.intern_entity(h, lang);
        tr.relation = g.intern_relation(r);
        tr.tail = g.intern_entity(t, lang);
        tr.lang = lang;
        if (!g.add_triple(tr)) g.duplicate_lines_dropped += 1;
    }
    return g;
}

void save_tsv(const KnowledgeGraph& g, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out.is_open()) throw std::runtime_error("save_tsv: cannot open " + path);
    for (const Triple& t : g.triples) {
        out << g.entity_surface[std::size_t(t.head)] << '\t'
            << g.relation_surface[std::size_t(t.relation)] << '\t'
            << g.entity_surface[std::size_t(t.tail)] << '\n';
    }
}

DatasetSplit split_closed_world(const KnowledgeGraph& g, const SplitRatios& ratios,
                                std::uint64_t seed) {
    if (!(ratios.train > 0.0 && ratios.valid > 0.0 && ratios.test > 0.0))
        throw std::invalid_argument("split_closed_world: ratios must be positive");
    if (std::fabs(ratios.train + ratios.valid + ratios.test - 1.0) > 1e-9)
        throw std::invalid_argument("split_closed_world: ratios must sum to 1");

    const std::size_t n = g.triples.size();
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    Rng rng(seed_for(seed, "split"));
    rng.shuffle(order);

    std::size_t n_valid = std::size_t(std::llround(ratios.valid * double(n)));
    std::size_t n_test = std::size_t(std::llround(ratios.test * double(n)));
    if (n_valid + n_test > n) n_test = n - n_valid;
    const std::size_t n_train = n - n_valid - n_test;

    DatasetSplit split;
    if (n_train == 0)
        split.warnings.push_back("graph too small for requested ratios: empty train part");

    std::set<int> seen_entities, seen_relations;
    for (std::size_t i = 0; i < n_train; ++i) {
        const Triple& t = g.triples[order[i]];
        split.train.push_back(t);
        split.train_idx.push_back(order[i]);
        seen_entities.insert(t.head);
        seen_entities.insert(t.tail);
        seen_relations.insert(t.relation);
    }

    std::size_t moved = 0;
    auto place = [&](std::size_t idx, std::vector<Triple>& dst, std::vector<std::size_t>& dst_idx) {
        const Triple& t = g.triples[idx];
        const bool covered = seen_entities.count(t.head) && seen_entities.count(t.tail) &&
                             seen_relations.count(t.relation);
        if (covered) {
            dst.push_back(t);
            dst_idx.push_back(idx);
        } else {
            split.train.push_back(t);
            split.train_idx.push_back(idx);
            seen_entities.insert(t.head);
            seen_entities.insert(t.tail);
            seen_relations.insert(t.relation);
            ++moved;
        }
    };
    for (std::size_t i = n_train; i < n_train + n_valid; ++i)
        place(order[i], split.valid, split.valid_idx);
    for (std::size_t i = n_train + n_valid; i < n; ++i) place(order[i], split.test, split.test_idx);

    if (moved > 0)
        split.warnings.push_back("moved " + std::to_string(moved) +
                                 " triples to train to keep the closed-world guarantee");
    if (split.valid.empty()) split.warnings.push_back("validation split is empty");
    if (split.test.empty()) split.warnings.push_back("test split is empty");
    return split;
}

double te_ratio(const DatasetSplit& split) {
    std::set<int> train_entities;
    for (const Triple& t : split.train) {
        train_entities.insert(t.head);
        train_entities.insert(t.tail);
    }
    return te_ratio_from_counts(split.train.size(), split.valid.size(), split.test.size(),
                                train_entities.size());
}

double te_ratio_from_counts(std::size_t train_triples, std::size_t valid_triples,
                            std::size_t test_triples, std::size_t train_entities) {
    if (train_entities == 0) throw std::invalid_argument("te_ratio: zero training entities");
    return double(train_triples + valid_triples + test_triples) / double(train_entities);
}

namespace {

std::string synth_entity_name(const std::string& lang, std::size_t i) {
    return lang + "_e" + std::to_string(i);
}

KnowledgeGraph synth_one_language(const SynthSpec& spec, const std::string& lang) {
    const std::size_t ne = spec.n_entities, nr = spec.n_relations, nt = spec.n_triples;
    if (ne < 2 || nr < 1) throw std::invalid_argument("synth_generate: need >=2 entities, >=1 relation");
    if (nt > ne * (ne - 1) * nr)
        throw std::invalid_argument("synth_generate: too many triples for the entity/relation pool");
    if (spec.pattern == SynthPattern::compositional && (nr < 3 || ne < 3))
        throw std::invalid_argument(
            "synth_generate: compositional pattern needs >=3 relations and >=3 entities");

    KnowledgeGraph g;
    g.lang = lang;
    for (std::size_t i = 0; i < ne; ++i) g.intern_entity(synth_entity_name(lang, i), lang);
    for (std::size_t r = 0; r < nr; ++r) g.intern_relation("r" + std::to_string(r));

    Rng rng(seed_for(spec.seed, "synth:" + lang));
    const std::size_t max_attempts = 1000 * (nt + 1);
    std::size_t attempts = 0;

    auto add_random_edge = [&](std::size_t rel_limit) {
        // rel_limit excludes the composed relation r2 so the witnessing-path
        // property of compositional graphs stays checkable.
        while (attempts++ < max_attempts) {
            const int h = int(rng.below(ne));
            int t = int(rng.below(ne));
            if (t == h) continue;
            std::size_t r = rng.below(rel_limit);
            if (spec.pattern == SynthPattern::compositional && r == 2) continue;
            Triple tr{h, int(r), t, lang};
            if (g.add_triple(tr)) return true;
        }
        return false;
    };

    if (spec.pattern == SynthPattern::random_edges) {
        while (g.triples.size() < nt)
            if (!add_random_edge(nr))
                throw std::invalid_argument("synth_generate: infeasible spec (random pattern)");
    } else {
        while (g.triples.size() + 3 <= nt && attempts < max_attempts) {
            const int a = int(rng.below(ne));
            int b = int(rng.below(ne));
            int c = int(rng.below(ne));
            ++attempts;
            if (a == b || b == c || a == c) continue;
            Triple e1{a, 0, b, lang}, e2{b, 1, c, lang}, e3{a, 2, c, lang};
            if (g.has_triple(e1) || g.has_triple(e2) || g.has_triple(e3)) continue;
            g.add_triple(e1);
            g.add_triple(e2);
            g.add_triple(e3);
        }
        while (g.triples.size() < nt)
            if (!add_random_edge(nr))
                throw std::invalid_argument("synth_generate: infeasible spec (compositional)");
    }
    return g;
}

}  // namespace

std::vector<KnowledgeGraph> synth_generate(const SynthSpec& spec) {
    if (spec.languages.empty())
        throw std::invalid_argument("synth_generate: need at least one language");
    std::vector<KnowledgeGraph> out;
    for (const std::string& lang : spec.languages) out.push_back(synth_one_language(spec, lang));
    return out;
}

KnowledgeGraph merge_graphs(const std::vector<KnowledgeGraph>& graphs) {
    KnowledgeGraph merged;
    std::string lang_tag;
    for (const auto& g : graphs) {
        if (!lang_tag.empty()) lang_tag += '+';
        lang_tag += g.lang;
        for (const Triple& t : g.triples) {
            Triple m;
            m.head = merged.intern_entity(g.entity_surface[std::size_t(t.head)],
                                          g.entity_lang[std::size_t(t.head)]);
            m.relation = merged.intern_relation(g.relation_surface[std::size_t(t.relation)]);
            m.tail = merged.intern_entity(g.entity_surface[std::size_t(t.tail)],
                                          g.entity_lang[std::size_t(t.tail)]);
            m.lang = t.lang;
            merged.add_triple(m);
        }
        // Entities that appear in no triple still belong to the registry.
        for (std::size_t e = 0; e < g.entity_surface.size(); ++e)
            merged.intern_entity(g.entity_surface[e], g.entity_lang[e]);
        for (const auto& r : g.relation_surface) merged.intern_relation(r);
    }
    merged.lang = lang_tag;
    return merged;
}

KnowledgeGraph alignment_augment(const KnowledgeGraph& g1, const KnowledgeGraph& g2,
                                 const std::vector<std::pair<std::string, std::string>>& pairs) {
    KnowledgeGraph merged = merge_graphs({g1, g2});
    const int rel = merged.intern_relation(alignment_relation_name(g1.lang, g2.lang));
    for (const auto& [s1, s2] : pairs) {
        const int e1 = merged.entity_id(s1, g1.lang);
        const int e2 = merged.entity_id(s2, g2.lang);
        if (e1 < 0 || e2 < 0)
            throw std::invalid_argument("alignment_augment: unknown entity in pair (" + s1 +
                                        ", " + s2 + ")");
        Triple t{e1, rel, e2, g2.lang};
        if (!merged.add_triple(t)) merged.duplicate_lines_dropped += 1;
    }
    return merged;
}

bool is_alignment_relation(const std::string& relation_surface) {
    return relation_surface.rfind("same_as_", 0) == 0;
}

std::vector<std::pair<std::string, std::string>> load_alignment_pairs(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in.is_open()) throw std::runtime_error("load_alignment_pairs: cannot open " + path);
    std::vector<std::pair<std::string, std::string>> pairs;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const auto tab = line.find('\t');
        if (tab == std::string::npos || line.find('\t', tab + 1) != std::string::npos)
            throw std::runtime_error(path + ":" + std::to_string(line_no) +
                                     ": expected 2 tab-separated fields");
        pairs.emplace_back(line.substr(0, tab), line.substr(tab + 1));
    }
    return pairs;
}

void save_split_manifest(const DatasetSplit& split, const SplitRatios& ratios,
                         std::uint64_t seed, const std::string& path) {
    nlohmann::json j;
    j["seed"] = seed;
    j["ratios"] = {ratios.train, ratios.valid, ratios.test};
    j["train"] = split.train_idx;
    j["valid"] = split.valid_idx;
    j["test"] = split.test_idx;
    j["warnings"] = split.warnings;
    std::ofstream out(path, std::ios::binary);
    if (!out.is_open()) throw std::runtime_error("save_split_manifest: cannot open " + path);
    out << j.dump(2) << '\n';
}

DatasetSplit load_split_manifest(const KnowledgeGraph& g, const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in.is_open()) throw std::runtime_error("load_split_manifest: cannot open " + path);
    nlohmann::json j;
    in >> j;
    DatasetSplit split;
    auto fill = [&](const char* key, std::vector<Triple>& dst, std::vector<std::size_t>& idx) {
        for (const auto& v : j.at(key)) {
            const std::size_t i = v.get<std::size_t>();
            if (i >= g.triples.size())
                throw std::runtime_error("load_split_manifest: triple index out of range");
            dst.push_back(g.triples[i]);
            idx.push_back(i);
        }
    };
    fill("train", split.train, split.train_idx);
    fill("valid", split.valid, split.valid_idx);
    fill("test", split.test, split.test_idx);
    if (j.contains("warnings"))
        for (const auto& w : j["warnings"]) split.warnings.push_back(w.get<std::string>());
    return split;
}

std::vector<LangStats> split_stats(const KnowledgeGraph& g, const DatasetSplit& split) {
    std::vector<std::string> langs;
    for (const Triple& t : g.triples)
        if (std::find(langs.begin(), langs.end(), t.lang) == langs.end()) langs.push_back(t.lang);
    std::sort(langs.begin(), langs.end());

    std::vector<LangStats> out;
    for (const std::string& lang : langs) {
        LangStats s;
        s.lang = lang;
        auto count = [&](const std::vector<Triple>& part, std::size_t& triples,
                         std::size_t& entities, std::size_t& relations) {
            std::set<int> es, rs;
            for (const Triple& t : part) {
                if (t.lang != lang) continue;
                ++triples;
                es.insert(t.head);
                es.insert(t.tail);
                rs.insert(t.relation);
            }
            entities = es.size();
            relations = rs.size();
        };
        count(split.train, s.train_triples, s.train_entities, s.train_relations);
        count(split.valid, s.valid_triples, s.valid_entities, s.valid_relations);
        count(split.test, s.test_triples, s.test_entities, s.test_relations);
        for (std::size_t e = 0; e < g.entity_surface.size(); ++e)
            if (g.entity_lang[e] == lang) ++s.registry_entities;
        s.registry_relations = g.num_relations();
        if (s.train_entities > 0)
            s.te_ratio = te_ratio_from_counts(s.train_triples, s.valid_triples, s.test_triples,
                                              s.train_entities);
        out.push_back(s);
    }
    return out;
}

std::string format_stats_table(const std::vector<LangStats>& stats) {
    std::ostringstream os;
    os << "lang  split  triples  entities  relations  (registry: entities/relations)\n";
    char buf[256];
    for (const LangStats& s : stats) {
        std::snprintf(buf, sizeof(buf), "%-5s train  %7zu  %8zu  %9zu  (%zu/%zu)\n",
                      s.lang.c_str(), s.train_triples, s.train_entities, s.train_relations,
                      s.registry_entities, s.registry_relations);
        os << buf;
        std::snprintf(buf, sizeof(buf), "%-5s valid  %7zu  %8zu  %9zu\n", s.lang.c_str(),
                      s.valid_triples, s.valid_entities, s.valid_relations);
        os << buf;
        std::snprintf(buf, sizeof(buf), "%-5s test   %7zu  %8zu  %9zu\n", s.lang.c_str(),
                      s.test_triples, s.test_entities, s.test_relations);
        os << buf;
        std::snprintf(buf, sizeof(buf), "%-5s t/e ratio: %.2f\n", s.lang.c_str(), s.te_ratio);
        os << buf;
    }
    return os.str();
}

}  // namespace kgc
