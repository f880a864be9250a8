#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "kgclm/kgdata.hpp"

namespace kgc {

enum class TokenizerMode { chars, words };

// Token inventory shared by model, trie, and decoders. Special ids occupy a
// fixed block at the front so they are stable across save/load; non-special
// tokens are id-assigned in sorted order, which makes builds deterministic.
class Vocabulary {
public:
    static constexpr int kBos = 0;   // <s>
    static constexpr int kSep = 1;   // </s>
    static constexpr int kHead = 2;  // [H]
    static constexpr int kRel = 3;   // [R]
    static constexpr int kTail = 4;  // [T]
    static constexpr int kEnd = 5;   // [E]
    static constexpr int kPad = 6;   // <pad>
    static constexpr int kUnk = 7;   // <unk>
    static constexpr int kNumSpecials = 8;

    Vocabulary() = default;
    Vocabulary(std::vector<std::string> tokens, TokenizerMode mode);

    TokenizerMode mode() const { return mode_; }
    int size() const { return int(id_to_token_.size()); }
    const std::string& token(int id) const { return id_to_token_[std::size_t(id)]; }
    int id(const std::string& token) const;  // kUnk when unknown
    static bool is_special(int id) { return id >= 0 && id < kNumSpecials; }

    // Splits a surface form per mode (UTF-8 codepoints or whitespace words)
    // and maps to ids; unknown tokens become <unk>.
    std::vector<int> encode(const std::string& surface) const;
    // Inverse of encode over known tokens; char mode joins with nothing,
    // word mode with single spaces. Special ids are rendered literally.
    std::string decode(const std::vector<int>& ids) const;

    std::string to_json() const;
    static Vocabulary from_json(const std::string& text);
    void save(const std::string& path) const;
    static Vocabulary load(const std::string& path);

    // FNV-1a over the JSON form; checkpoints embed it so that a model is
    // never evaluated against a different token inventory.
    std::string content_hash() const;

private:
    TokenizerMode mode_ = TokenizerMode::chars;
    std::vector<std::string> id_to_token_;
    std::unordered_map<std::string, int> token_to_id_;
};

// Token-id sequence in the fixed template
//   <s> [H] head </s> </s> [R] rel </s> </s> [T] tail [E]
// with role-marker positions and half-open subtoken spans recorded.
struct SerializedTriple {
    std::vector<int> ids;
    std::size_t head_begin = 0, head_end = 0;
    std::size_t rel_begin = 0, rel_end = 0;
    std::size_t tail_begin = 0, tail_end = 0;
    std::size_t pos_h = 0, pos_r = 0, pos_t = 0;
    std::optional<std::size_t> pos_e;
    std::size_t query_len = 0;  // pos_t + 1; tail text and [E] are the target

    std::size_t length() const { return ids.size(); }
};

// UTF-8 codepoint split (used by char mode and the entity trie).
std::vector<std::string> split_utf8(const std::string& s);

// Covers every character (char mode) or whitespace word (word mode) of the
// graphs' entity and relation surfaces. Empty corpus is an error.
Vocabulary build_vocab(const std::vector<KnowledgeGraph>& graphs, TokenizerMode mode);

inline constexpr std::size_t kDefaultMaxSeqLen = 35;

// Full triple template. Sequences longer than max_seq_len raise an error
// naming the triple; nothing is silently truncated.
SerializedTriple serialize_triple(const std::string& head, const std::string& rel,
                                  const std::string& tail, const Vocabulary& v,
                                  std::size_t max_seq_len = kDefaultMaxSeqLen);
SerializedTriple serialize_triple(const Triple& t, const KnowledgeGraph& g, const Vocabulary& v,
                                  std::size_t max_seq_len = kDefaultMaxSeqLen);

// Query prefix: the same template cut after [T]; tail span empty.
SerializedTriple serialize_query(const std::string& head, const std::string& rel,
                                 const Vocabulary& v,
                                 std::size_t max_seq_len = kDefaultMaxSeqLen);
SerializedTriple serialize_query(const Triple& t, const KnowledgeGraph& g, const Vocabulary& v,
                                 std::size_t max_seq_len = kDefaultMaxSeqLen);

}  // namespace kgc
