#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>

#include "kgclm/kgdata.hpp"
#include "kgclm/rand.hpp"
#include "kgclm/vocab.hpp"

using namespace kgc;

namespace {

KnowledgeGraph tiny_graph() {
    KnowledgeGraph g;
    g.lang = "xx";
    const int ab = g.intern_entity("ab", "xx");
    const int b = g.intern_entity("b", "xx");
    const int r = g.intern_relation("c");
    g.add_triple({ab, r, b, "xx"});
    return g;
}

}  // namespace

TEST_CASE("build_vocab covers corpus characters plus specials") {
    const auto g = tiny_graph();
    Vocabulary v = build_vocab({g}, TokenizerMode::chars);
    // {a, b, c} + 8 specials
    CHECK(v.size() == Vocabulary::kNumSpecials + 3);
    CHECK(v.id("a") >= Vocabulary::kNumSpecials);
    CHECK(v.id("zzz") == Vocabulary::kUnk);
    CHECK(v.token(Vocabulary::kBos) == "<s>");
    CHECK(v.token(Vocabulary::kSep) == "</s>");
    CHECK(v.token(Vocabulary::kEnd) == "[E]");

    CHECK_THROWS(build_vocab({}, TokenizerMode::chars));
}

TEST_CASE("vocab build is deterministic") {
    const auto g = tiny_graph();
    Vocabulary v1 = build_vocab({g}, TokenizerMode::chars);
    Vocabulary v2 = build_vocab({g}, TokenizerMode::chars);
    CHECK(v1.size() == v2.size());
    for (int i = 0; i < v1.size(); ++i) CHECK(v1.token(i) == v2.token(i));
    CHECK(v1.content_hash() == v2.content_hash());
}

TEST_CASE("multilingual round-trip over corpus surface forms") {
    KnowledgeGraph g;
    g.lang = "mul";
    const std::vector<std::string> surfaces = {"Müller", "東京", "naïve café",
                                               "Ωμέγα", "mixed 漢字 text"};
    for (const auto& s : surfaces) g.intern_entity(s, "mul");
    g.intern_relation("rel");
    Vocabulary v = build_vocab({g}, TokenizerMode::chars);
    for (const auto& s : surfaces) CHECK(v.decode(v.encode(s)) == s);

    Vocabulary w = build_vocab({g}, TokenizerMode::words);
    CHECK(w.decode(w.encode("mixed 漢字 text")) == "mixed 漢字 text");
}

TEST_CASE("serialize_triple lays out the template") {
    const auto g = tiny_graph();
    Vocabulary v = build_vocab({g}, TokenizerMode::chars);
    SerializedTriple s = serialize_triple("ab", "c", "d", v);

    // <s> [H] a b </s> </s> [R] c </s> </s> [T] d [E]
    REQUIRE(s.ids.size() == 13);
    CHECK(s.ids[0] == Vocabulary::kBos);
    CHECK(s.ids[1] == Vocabulary::kHead);
    CHECK(s.ids[2] == v.id("a"));
    CHECK(s.ids[3] == v.id("b"));
    CHECK(s.ids[4] == Vocabulary::kSep);
    CHECK(s.ids[5] == Vocabulary::kSep);
    CHECK(s.ids[6] == Vocabulary::kRel);
    CHECK(s.ids[7] == v.id("c"));
    CHECK(s.ids[8] == Vocabulary::kSep);
    CHECK(s.ids[9] == Vocabulary::kSep);
    CHECK(s.ids[10] == Vocabulary::kTail);
    CHECK(s.ids[11] == v.id("d"));  // "d" unseen in corpus -> UNK
    CHECK(s.ids[12] == Vocabulary::kEnd);

    CHECK(s.pos_h == 1);
    CHECK(s.pos_r == 6);
    CHECK(s.pos_t == 10);
    REQUIRE(s.pos_e.has_value());
    CHECK(*s.pos_e == 12);
    CHECK(s.query_len == 11);  // index of the first tail-side position
    CHECK(s.head_begin == 2);
    CHECK(s.head_end == 4);
    CHECK(s.rel_begin == 7);
    CHECK(s.rel_end == 8);
    CHECK(s.tail_begin == 11);
    CHECK(s.tail_end == 12);
}

TEST_CASE("empty tail puts [E] right after [T]") {
    const auto g = tiny_graph();
    Vocabulary v = build_vocab({g}, TokenizerMode::chars);
    SerializedTriple s = serialize_triple("ab", "c", "", v);
    CHECK(s.tail_begin == s.tail_end);
    CHECK(*s.pos_e == s.pos_t + 1);
    CHECK(s.ids[s.pos_t] == Vocabulary::kTail);
    CHECK(s.ids[*s.pos_e] == Vocabulary::kEnd);
}

TEST_CASE("decode round-trips the template text") {
    KnowledgeGraph g;
    g.lang = "xx";
    g.intern_entity("ab", "xx");
    g.intern_entity("d", "xx");
    g.intern_relation("c");
    Vocabulary v = build_vocab({g}, TokenizerMode::chars);
    SerializedTriple s = serialize_triple("ab", "c", "d", v);
    CHECK(v.decode(s.ids) == "<s>[H]ab</s></s>[R]c</s></s>[T]d[E]");
}

TEST_CASE("serialize_query is a prefix of serialize_triple") {
    KnowledgeGraph g;
    g.lang = "xx";
    Rng rng(5);
    std::vector<std::string> names;
    for (int i = 0; i < 30; ++i) {
        std::string n;
        const std::size_t len = 1 + rng.below(6);
        for (std::size_t j = 0; j < len; ++j) n += char('a' + int(rng.below(26)));
        names.push_back(n);
        g.intern_entity(n, "xx");
    }
    g.intern_relation("r0");
    g.intern_relation("r1");
    Vocabulary v = build_vocab({g}, TokenizerMode::chars);

    for (int trial = 0; trial < 100; ++trial) {
        const std::string h = names[rng.below(names.size())];
        const std::string t = names[rng.below(names.size())];
        const std::string r = rng.below(2) ? "r0" : "r1";
        SerializedTriple full = serialize_triple(h, r, t, v);
        SerializedTriple query = serialize_query(h, r, v);
        REQUIRE(query.ids.size() == full.query_len);
        for (std::size_t i = 0; i < query.ids.size(); ++i) CHECK(query.ids[i] == full.ids[i]);
        CHECK(query.tail_begin == query.tail_end);
        CHECK_FALSE(query.pos_e.has_value());
        CHECK(query.ids.back() == Vocabulary::kTail);
        // No PAD inside any serialized sequence.
        for (int id : full.ids) CHECK(id != Vocabulary::kPad);
    }
}

TEST_CASE("over-length serialization is a hard error naming the triple") {
    const auto g = tiny_graph();
    Vocabulary v = build_vocab({g}, TokenizerMode::chars);
    const std::string long_tail(40, 'b');
    try {
        serialize_triple("ab", "c", long_tail, v, 35);
        FAIL("expected an exception");
    } catch (const std::invalid_argument& e) {
        const std::string msg = e.what();
        CHECK(msg.find("ab") != std::string::npos);
        CHECK(msg.find(long_tail) != std::string::npos);
    }
    // A larger cap admits the same triple.
    CHECK_NOTHROW(serialize_triple("ab", "c", long_tail, v, 64));
}

TEST_CASE("vocabulary json round-trip keeps ids stable") {
    KnowledgeGraph g;
    g.lang = "xx";
    g.intern_entity("größe", "xx");
    g.intern_entity("abc", "xx");
    g.intern_relation("rel x");
    Vocabulary v = build_vocab({g}, TokenizerMode::chars);

    const std::string path =
        (std::filesystem::temp_directory_path() / "kgclm_vocab.json").string();
    v.save(path);
    Vocabulary loaded = Vocabulary::load(path);
    CHECK(loaded.size() == v.size());
    for (int i = 0; i < v.size(); ++i) CHECK(loaded.token(i) == v.token(i));
    CHECK(loaded.mode() == v.mode());
    CHECK(loaded.content_hash() == v.content_hash());
    std::filesystem::remove(path);
}
