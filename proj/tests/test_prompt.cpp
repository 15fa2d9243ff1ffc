#include <doctest.h>

#include <filesystem>

#include "mgpf/prompt.hpp"
#include "mgpf/rng.hpp"

using namespace mgpf;

namespace {

// Vocabulary matching the paper-style example prompts.
Vocabulary coco_like() {
    Vocabulary v;
    v.add("yellow", WordKind::Color);
    v.add("green", WordKind::Color);
    v.add("red", WordKind::Color);
    v.add("blue", WordKind::Color);
    v.add("dog", WordKind::Object);
    v.add("skateboard", WordKind::Object);
    v.add("tree", WordKind::Object);
    v.add("circle", WordKind::Object);
    v.add("square", WordKind::Object);
    v.add("park", WordKind::Location);
    v.add("field", WordKind::Location);
    for (const char* w : {"a", "and", "in", "the"}) v.add(w, WordKind::Connective);
    return v;
}

std::string word_at(const ParsedPrompt& p, const Vocabulary& v, int pos) { return v.word(p.tokens.at(pos)); }

}  // namespace

TEST_CASE("two aligned pairs plus free trailing object") {
    Vocabulary v = coco_like();
    auto p = parse_prompt("a yellow dog and a green skateboard, a tree in the park", {"dog", "skateboard"}, v);
    REQUIRE(p.pairs.size() == 2);
    CHECK(word_at(p, v, p.pairs[0].attribute_index) == "yellow");
    CHECK(word_at(p, v, p.pairs[0].object_index) == "dog");
    CHECK(word_at(p, v, p.pairs[1].attribute_index) == "green");
    CHECK(word_at(p, v, p.pairs[1].object_index) == "skateboard");
    CHECK(p.s1.size() == 2);
    CHECK(p.s2.empty());
    REQUIRE(p.free_objects.size() == 1);
    CHECK(word_at(p, v, p.free_objects[0]) == "tree");
}

TEST_CASE("single phrase") {
    Vocabulary v = coco_like();
    auto p = parse_prompt("a red circle", {"circle"}, v);
    REQUIRE(p.pairs.size() == 1);
    CHECK(p.s1.size() == 1);
    CHECK(p.s2.empty());
    CHECK(p.free_objects.empty());
    CHECK(p.trailing_start == -1);
}

TEST_CASE("trailing pair with color goes to s2 without a mask") {
    Vocabulary v = coco_like();
    auto p = parse_prompt("a red circle, a blue square in the field", {"circle"}, v);
    REQUIRE(p.pairs.size() == 2);
    CHECK(p.s1.size() == 1);
    CHECK(word_at(p, v, p.s1[0].object_index) == "circle");
    REQUIRE(p.s2.size() == 1);
    CHECK(word_at(p, v, p.s2[0].attribute_index) == "blue");
    CHECK(word_at(p, v, p.s2[0].object_index) == "square");
}

TEST_CASE("errors") {
    Vocabulary v = coco_like();
    CHECK_THROWS_AS(parse_prompt("", {}, v), EmptyPromptError);
    CHECK_THROWS_AS(parse_prompt("   ", {}, v), EmptyPromptError);
    CHECK_THROWS_AS(parse_prompt("a purple dog", {}, v), UnknownWordError);
    CHECK_THROWS_AS(parse_prompt("a dog red", {}, v), GrammarMismatchError);
    CHECK_THROWS_AS(parse_prompt("red circle", {}, v), GrammarMismatchError);
    CHECK_THROWS_AS(parse_prompt("a red circle a blue square", {}, v), GrammarMismatchError);
    CHECK_THROWS_AS(parse_prompt("a red circle, a blue square", {}, v), GrammarMismatchError);
}

TEST_CASE("split_alignment cases") {
    Vocabulary v = coco_like();
    auto p = parse_prompt("a red circle and a blue square", {}, v);

    auto [s1a, s2a] = split_alignment({}, p.tokens, v, {"circle"});
    CHECK(s1a.empty());
    CHECK(s2a.empty());

    auto [s1b, s2b] = split_alignment(p.pairs, p.tokens, v, {});
    CHECK(s1b.empty());
    CHECK(s2b.size() == 2);

    auto [s1c, s2c] = split_alignment(p.pairs, p.tokens, v, {"square"});
    REQUIRE(s1c.size() == 1);
    CHECK(word_at(p, v, s1c[0].object_index) == "square");
    REQUIRE(s2c.size() == 1);
    CHECK(word_at(p, v, s2c[0].object_index) == "circle");
}

TEST_CASE("partition invariant and round-trip on random benchmark prompts") {
    Vocabulary v = Vocabulary::benchmark();
    auto colors = v.words_of_kind(WordKind::Color);
    auto objects = v.words_of_kind(WordKind::Object);
    auto locs = v.words_of_kind(WordKind::Location);
    Rng rng(7);
    for (int it = 0; it < 200; ++it) {
        std::string prompt = "a " + colors[rng.uniform_int(0, colors.size() - 1)] + " " +
                             objects[rng.uniform_int(0, objects.size() - 1)];
        std::set<std::string> masks;
        if (rng.uniform() < 0.7)
            prompt += " and a " + colors[rng.uniform_int(0, colors.size() - 1)] + " " +
                      objects[rng.uniform_int(0, objects.size() - 1)];
        if (rng.uniform() < 0.7) {
            prompt += ", a ";
            if (rng.uniform() < 0.5) prompt += colors[rng.uniform_int(0, colors.size() - 1)] + " ";
            prompt += objects[rng.uniform_int(0, objects.size() - 1)] + " in the " +
                      locs[rng.uniform_int(0, locs.size() - 1)];
        }
        if (rng.uniform() < 0.8) masks.insert(objects[rng.uniform_int(0, objects.size() - 1)]);

        auto p = parse_prompt(prompt, masks, v);
        CHECK(p.s1.size() + p.s2.size() == p.pairs.size());
        for (const auto& pr : p.s1) CHECK(masks.count(v.word(p.tokens[pr.object_index])) == 1);
        for (const auto& pr : p.s2) CHECK(masks.count(v.word(p.tokens[pr.object_index])) == 0);
        for (const auto& pr : p.pairs) {
            CHECK(pr.attribute_index >= 0);
            CHECK(pr.object_index < (int)p.tokens.size());
        }
        CHECK(p.render(v) == prompt);
    }
}

TEST_CASE("vocabulary file round-trip and hash") {
    Vocabulary v = Vocabulary::benchmark();
    auto path = std::filesystem::temp_directory_path() / "mgpf_vocab_test.txt";
    v.save(path.string());
    Vocabulary w = Vocabulary::load(path.string());
    CHECK(v.hash() == w.hash());
    CHECK(w.id("red") == v.id("red"));
    CHECK(w.kind(w.id("field")) == WordKind::Location);
    std::filesystem::remove(path);
}
