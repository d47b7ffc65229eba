#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <fstream>
#include <map>
#include <set>

#include "dcls/common.hpp"
#include "dcls/corpus.hpp"
#include "dcls/util.hpp"
#include "test_util.hpp"

using namespace dcls;

TEST_CASE("build_vocab collects tokens, specials, and label tokens") {
    Vocab v = build_vocab({{"good movie", "pos"}}, 1);
    CHECK(v.is_content(v.id_of("good")));
    CHECK(v.is_content(v.id_of("movie")));
    CHECK(v.num_classes() == 1);
    CHECK(v.token(v.label_token(0)) == "<LBL_pos>");
    CHECK(v.token(Vocab::kMask) == "[MASK]");
}

TEST_CASE("build_vocab min_count maps rare tokens to UNK") {
    Vocab v = build_vocab({{"common rare", "pos"}, {"common word", "pos"}, {"common word", "neg"}},
                          2);
    CHECK(v.id_of("common") != Vocab::kUnk);
    CHECK(v.id_of("word") != Vocab::kUnk);
    CHECK(v.id_of("rare") == Vocab::kUnk);
}

TEST_CASE("build_vocab creates exactly one label token per class") {
    Vocab v = build_vocab({{"a b", "pos"}, {"c d", "neg"}, {"e f", "pos"}}, 1);
    CHECK(v.num_classes() == 2);
    CHECK(v.classes() == std::vector<std::string>{"pos", "neg"});
    CHECK(v.is_label_token(Vocab::kFirstLabel));
    CHECK(v.is_label_token(Vocab::kFirstLabel + 1));
    CHECK_FALSE(v.is_label_token(Vocab::kFirstLabel + 2));
}

TEST_CASE("build_vocab rejects an empty corpus") {
    CHECK_THROWS_AS(build_vocab({}, 1), ConfigError);
}

TEST_CASE("tokenize frames content with CLS/SEP and sets maskable flags") {
    Vocab v = build_vocab({{"good movie", "pos"}}, 1);
    TokenizedSample t = tokenize(v, {"good movie", "pos"});
    REQUIRE(t.ids.size() == 4);
    CHECK(t.ids[0] == Vocab::kCls);
    CHECK(t.ids[1] == v.id_of("good"));
    CHECK(t.ids[2] == v.id_of("movie"));
    CHECK(t.ids[3] == Vocab::kSep);
    CHECK(t.label_id == 0);
    CHECK(t.maskable == std::vector<uint8_t>{0, 1, 1, 0});
}

TEST_CASE("tokenize rejects empty text and unknown labels") {
    Vocab v = build_vocab({{"good movie", "pos"}}, 1);
    CHECK_THROWS_AS(tokenize(v, {"", "pos"}), ConfigError);
    CHECK_THROWS_AS(tokenize(v, {"   ", "pos"}), ConfigError);
    CHECK_THROWS_AS(tokenize(v, {"good", "mystery"}), ConfigError);
}

TEST_CASE("tokenize maps OOV tokens to UNK") {
    Vocab v = build_vocab({{"good word", "pos"}}, 1);
    TokenizedSample t = tokenize(v, {"zzz-unseen word", "pos"});
    REQUIRE(t.ids.size() == 4);
    CHECK(t.ids[1] == Vocab::kUnk);
    CHECK(t.ids[2] == v.id_of("word"));
}

TEST_CASE("detokenize joins content and renders MASK as [M]") {
    Vocab v = build_vocab({{"good movie", "pos"}}, 1);
    int32_t good = v.id_of("good"), movie = v.id_of("movie");
    CHECK(detokenize(v, std::vector<int32_t>{Vocab::kCls, good, movie, Vocab::kSep}) ==
          "good movie");
    CHECK(detokenize(v, std::vector<int32_t>{Vocab::kCls, Vocab::kMask, movie, Vocab::kSep}) ==
          "[M] movie");
    CHECK(detokenize(v, std::vector<int32_t>{Vocab::kCls, v.label_token(0), Vocab::kSep, good,
                                             Vocab::kSep}) == "good");
}

TEST_CASE("detokenize rejects out-of-range ids") {
    Vocab v = build_vocab({{"good movie", "pos"}}, 1);
    CHECK_THROWS_AS(detokenize(v, std::vector<int32_t>{v.size()}), ConfigError);
    CHECK_THROWS_AS(detokenize(v, std::vector<int32_t>{-1}), ConfigError);
}

TEST_CASE("round-trip holds for OOV-free samples") {
    auto samples = synth_corpus({{{"pos", 40}, {"neg", 40}}, 3});
    Vocab v = build_vocab(samples, 1);
    for (const auto& s : samples) {
        TokenizedSample t = tokenize(v, s);
        CHECK(detokenize(v, t.ids) == s.text);
    }
}

TEST_CASE("special and label positions are never maskable") {
    auto samples = synth_corpus({{{"pos", 25}, {"neg", 25}, {"neu", 25}}, 11});
    Vocab v = build_vocab(samples, 1);
    for (const auto& s : samples) {
        TokenizedSample t = tokenize(v, s);
        for (size_t i = 0; i < t.ids.size(); ++i) {
            if (v.is_special(t.ids[i]) && t.ids[i] != Vocab::kUnk) CHECK_FALSE(t.maskable[i]);
            if (v.is_label_token(t.ids[i])) CHECK_FALSE(t.maskable[i]);
        }
    }
}

TEST_CASE("load_jsonl parses objects and reports line numbers") {
    testutil::TempDir tmp("jsonl");
    auto path = tmp.path / "data.jsonl";

    SUBCASE("well-formed file") {
        std::ofstream(path) << R"({"text":"good","label":"pos"})" << "\n"
                            << R"({"text":"bad","label":"neg"})" << "\n";
        auto samples = load_jsonl(path);
        REQUIRE(samples.size() == 2);
        CHECK(samples[0].text == "good");
        CHECK(samples[0].label == "pos");
        CHECK(samples[1].label == "neg");
    }
    SUBCASE("missing field cites the line") {
        std::ofstream(path) << R"({"text":"good"})" << "\n";
        CHECK_THROWS_WITH_AS(load_jsonl(path), doctest::Contains("missing field 'label' at line 1"),
                             ConfigError);
    }
    SUBCASE("malformed json cites the line") {
        std::ofstream(path) << R"({"text":"good","label":"pos"})" << "\n" << "{oops\n";
        CHECK_THROWS_WITH_AS(load_jsonl(path), doctest::Contains("line 2"), ConfigError);
    }
    SUBCASE("empty file gives an empty list") {
        std::ofstream(path) << "";
        CHECK(load_jsonl(path).empty());
    }
    SUBCASE("save/load round-trip") {
        save_jsonl(path, testutil::tiny_corpus());
        auto loaded = load_jsonl(path);
        REQUIRE(loaded.size() == testutil::tiny_corpus().size());
        CHECK(loaded[0].text == "good movie tonight");
    }
}

TEST_CASE("synth_corpus honors counts, class order, and determinism") {
    auto samples = synth_corpus({{{"pos", 2}, {"neg", 1}}, 7});
    REQUIRE(samples.size() == 3);
    CHECK(samples[0].label == "pos");
    CHECK(samples[1].label == "pos");
    CHECK(samples[2].label == "neg");

    auto again = synth_corpus({{{"pos", 2}, {"neg", 1}}, 7});
    for (size_t i = 0; i < samples.size(); ++i) {
        CHECK(samples[i].text == again[i].text);
        CHECK(samples[i].label == again[i].label);
    }
    auto other_seed = synth_corpus({{{"pos", 2}, {"neg", 1}}, 8});
    bool any_diff = false;
    for (size_t i = 0; i < samples.size(); ++i) any_diff |= samples[i].text != other_seed[i].text;
    CHECK(any_diff);
}

TEST_CASE("synth_corpus label histogram matches the spec") {
    auto samples = synth_corpus({{{"pos", 300}, {"neg", 60}, {"neu", 30}}, 42});
    std::map<std::string, int> counts;
    for (const auto& s : samples) counts[s.label]++;
    CHECK(counts["pos"] == 300);
    CHECK(counts["neg"] == 60);
    CHECK(counts["neu"] == 30);

    // texts are unique within a class
    std::set<std::pair<std::string, std::string>> seen;
    for (const auto& s : samples) CHECK(seen.insert({s.label, s.text}).second);
}

TEST_CASE("synth_corpus rejects non-positive counts") {
    CHECK_THROWS_AS(synth_corpus({{{"pos", 0}}, 1}), ConfigError);
}

TEST_CASE("vocab JSON manifest round-trips") {
    auto samples = testutil::tiny_corpus();
    Vocab v = build_vocab(samples, 1);
    Vocab w = Vocab::from_json(v.to_json());
    CHECK(w.size() == v.size());
    CHECK(w.classes() == v.classes());
    for (int32_t id = 0; id < v.size(); ++id) CHECK(w.token(id) == v.token(id));

    testutil::TempDir tmp("vocab");
    v.save(tmp.path / "vocab.json");
    Vocab u = Vocab::load(tmp.path / "vocab.json");
    CHECK(u.size() == v.size());
}

TEST_CASE("normalized edit distance basics") {
    CHECK(normalized_edit_distance("a b c", "a b c") == 0.0);
    CHECK(normalized_edit_distance("a b c", "a x c") == doctest::Approx(1.0 / 3));
    CHECK(normalized_edit_distance("", "") == 0.0);
    CHECK(normalized_edit_distance("a", "") == 1.0);
}
