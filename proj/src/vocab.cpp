#include "kgclm/vocab.hpp"

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace kgc {

namespace {

const char* kSpecialSurface[Vocabulary::kNumSpecials] = {"<s>", "</s>", "[H]", "[R]",
                                                         "[T]", "[E]", "<pad>", "<unk>"};

std::vector<std::string> split_words(const std::string& s) {
    std::vector<std::string> out;
    std::istringstream is(s);
    std::string w;
    while (is >> w) out.push_back(w);
    return out;
}

}  // namespace

std::vector<std::string> split_utf8(const std::string& s) {
    std::vector<std::string> out;
    std::size_t i = 0;
    while (i < s.size()) {
        const unsigned char c = static_cast<unsigned char>(s[i]);
        std::size_t len = 1;
        if (c >= 0xF0)
            len = 4;
        else if (c >= 0xE0)
            len = 3;
        else if (c >= 0xC0)
            len = 2;
        if (i + len > s.size()) len = 1;  // malformed tail: keep the byte
        out.push_back(s.substr(i, len));
        i += len;
    }
    return out;
}

Vocabulary::Vocabulary(std::vector<std::string> tokens, TokenizerMode mode) : mode_(mode) {
    id_to_token_.assign(kSpecialSurface, kSpecialSurface + kNumSpecials);
    for (auto& t : tokens) id_to_token_.push_back(std::move(t));
    for (std::size_t i = 0; i < id_to_token_.size(); ++i)
        token_to_id_.emplace(id_to_token_[i], int(i));
}

int Vocabulary::id(const std::string& token) const {
    auto it = token_to_id_.find(token);
    return it == token_to_id_.end() ? kUnk : it->second;
}

std::vector<int> Vocabulary::encode(const std::string& surface) const {
    const auto pieces =
        mode_ == TokenizerMode::chars ? split_utf8(surface) : split_words(surface);
    std::vector<int> out;
    out.reserve(pieces.size());
    for (const auto& p : pieces) out.push_back(id(p));
    return out;
}

std::string Vocabulary::decode(const std::vector<int>& ids) const {
    std::string out;
    for (std::size_t i = 0; i < ids.size(); ++i) {
        if (mode_ == TokenizerMode::words && i > 0 && !is_special(ids[i]) &&
            !is_special(ids[i - 1]))
            out += ' ';
        out += token(ids[i]);
    }
    return out;
}

std::string Vocabulary::to_json() const {
    nlohmann::json j;
    j["mode"] = mode_ == TokenizerMode::chars ? "char" : "word";
    nlohmann::json specials;
    for (int i = 0; i < kNumSpecials; ++i) specials[kSpecialSurface[i]] = i;
    j["specials"] = specials;
    j["tokens"] = std::vector<std::string>(id_to_token_.begin() + kNumSpecials,
                                           id_to_token_.end());
    return j.dump(2);
}

Vocabulary Vocabulary::from_json(const std::string& text) {
    nlohmann::json j = nlohmann::json::parse(text);
    const std::string mode_str = j.at("mode").get<std::string>();
    if (mode_str != "char" && mode_str != "word")
        throw std::runtime_error("Vocabulary::from_json: unknown mode " + mode_str);
    std::vector<std::string> tokens;
    for (const auto& t : j.at("tokens")) tokens.push_back(t.get<std::string>());
    return Vocabulary(std::move(tokens),
                      mode_str == "char" ? TokenizerMode::chars : TokenizerMode::words);
}

void Vocabulary::save(const std::string& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out.is_open()) throw std::runtime_error("Vocabulary::save: cannot open " + path);
    out << to_json() << '\n';
}

Vocabulary Vocabulary::load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in.is_open()) throw std::runtime_error("Vocabulary::load: cannot open " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return from_json(ss.str());
}

std::string Vocabulary::content_hash() const {
    const std::string text = to_json();
    std::uint64_t h = 14695981039346656037ULL;
    for (char c : text) {
        h ^= std::uint64_t(static_cast<unsigned char>(c));
        h *= 1099511628211ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return std::string(buf);
}

Vocabulary build_vocab(const std::vector<KnowledgeGraph>& graphs, TokenizerMode mode) {
    std::set<std::string> pieces;
    bool any_surface = false;
    for (const auto& g : graphs) {
        auto take = [&](const std::string& s) {
            any_surface = true;
            const auto split = mode == TokenizerMode::chars ? split_utf8(s) : split_words(s);
            pieces.insert(split.begin(), split.end());
        };
        for (const auto& s : g.entity_surface) take(s);
        for (const auto& s : g.relation_surface) take(s);
    }
    if (!any_surface) throw std::invalid_argument("build_vocab: empty corpus");
    return Vocabulary(std::vector<std::string>(pieces.begin(), pieces.end()), mode);
}

namespace {

SerializedTriple serialize_impl(const std::string& head, const std::string& rel,
                                const std::string* tail, const Vocabulary& v,
                                std::size_t max_seq_len) {
    SerializedTriple s;
    auto& ids = s.ids;
    ids.push_back(Vocabulary::kBos);
    s.pos_h = ids.size();
    ids.push_back(Vocabulary::kHead);
    s.head_begin = ids.size();
    for (int id : v.encode(head)) ids.push_back(id);
    s.head_end = ids.size();
    ids.push_back(Vocabulary::kSep);
    ids.push_back(Vocabulary::kSep);
    s.pos_r = ids.size();
    ids.push_back(Vocabulary::kRel);
    s.rel_begin = ids.size();
    for (int id : v.encode(rel)) ids.push_back(id);
    s.rel_end = ids.size();
    ids.push_back(Vocabulary::kSep);
    ids.push_back(Vocabulary::kSep);
    s.pos_t = ids.size();
    ids.push_back(Vocabulary::kTail);
    s.query_len = s.pos_t + 1;
    s.tail_begin = ids.size();
    s.tail_end = ids.size();
    if (tail != nullptr) {
        for (int id : v.encode(*tail)) ids.push_back(id);
        s.tail_end = ids.size();
        s.pos_e = ids.size();
        ids.push_back(Vocabulary::kEnd);
    }
    if (ids.size() > max_seq_len) {
        throw std::invalid_argument("serialize: sequence of length " +
                                    std::to_string(ids.size()) + " exceeds max_seq_len " +
                                    std::to_string(max_seq_len) + " for triple (" + head +
                                    ", " + rel + ", " + (tail ? *tail : std::string("?")) + ")");
    }
    return s;
}

}  // namespace

SerializedTriple serialize_triple(const std::string& head, const std::string& rel,
                                  const std::string& tail, const Vocabulary& v,
                                  std::size_t max_seq_len) {
    return serialize_impl(head, rel, &tail, v, max_seq_len);
}

SerializedTriple serialize_triple(const Triple& t, const KnowledgeGraph& g, const Vocabulary& v,
                                  std::size_t max_seq_len) {
    return serialize_triple(g.entity_surface[std::size_t(t.head)],
                            g.relation_surface[std::size_t(t.relation)],
                            g.entity_surface[std::size_t(t.tail)], v, max_seq_len);
}

SerializedTriple serialize_query(const std::string& head, const std::string& rel,
                                 const Vocabulary& v, std::size_t max_seq_len) {
    return serialize_impl(head, rel, nullptr, v, max_seq_len);
}

SerializedTriple serialize_query(const Triple& t, const KnowledgeGraph& g, const Vocabulary& v,
                                 std::size_t max_seq_len) {
    return serialize_query(g.entity_surface[std::size_t(t.head)],
                           g.relation_surface[std::size_t(t.relation)], v, max_seq_len);
}

}  // namespace kgc
