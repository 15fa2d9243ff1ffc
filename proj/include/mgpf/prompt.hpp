#pragma once

#include <cstdint>
#include <set>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

namespace mgpf {

enum class WordKind { Color, Object, Location, Connective };

struct UnknownWordError : std::runtime_error {
    explicit UnknownWordError(const std::string& w) : std::runtime_error("UnknownWord: " + w) {}
};
struct GrammarMismatchError : std::runtime_error {
    explicit GrammarMismatchError(const std::string& m) : std::runtime_error("GrammarMismatch: " + m) {}
};
struct EmptyPromptError : std::runtime_error {
    EmptyPromptError() : std::runtime_error("EmptyPrompt") {}
};

/// Closed word list with category tags. Token ids are positions in `words`.
class Vocabulary {
public:
    int add(const std::string& word, WordKind kind);
    int id(const std::string& word) const;  // throws UnknownWordError
    bool contains(const std::string& word) const;
    const std::string& word(int id) const { return words_.at(id); }
    WordKind kind(int id) const { return kinds_.at(id); }
    int size() const { return static_cast<int>(words_.size()); }

    std::vector<std::string> words_of_kind(WordKind k) const;

    std::uint64_t hash() const;

    /// One word per line, "color:red" / "object:circle" / "loc:field" / "word:a".
    static Vocabulary load(const std::string& path);
    void save(const std::string& path) const;

    /// The benchmark vocabulary: 11 colors, 12 objects, 5 locations, connectives.
    static Vocabulary benchmark();

private:
    std::vector<std::string> words_;
    std::vector<WordKind> kinds_;
    std::unordered_map<std::string, int> index_;
};

/// (attribute, object) token positions within ParsedPrompt::tokens.
struct AttributePair {
    int attribute_index = -1;
    int object_index = -1;
    bool operator==(const AttributePair&) const = default;
};

struct ParsedPrompt {
    std::vector<int> tokens;  // vocabulary ids, left to right
    std::vector<AttributePair> pairs;
    std::vector<AttributePair> s1;  // object has a mask
    std::vector<AttributePair> s2;  // remaining pairs
    std::vector<int> free_objects;  // trailing-clause object positions without an attribute
    int trailing_start = -1;        // token position where the trailing clause begins, -1 if none

    std::string render(const Vocabulary& vocab) const;
};

ParsedPrompt parse_prompt(const std::string& prompt, const std::set<std::string>& mask_names,
                          const Vocabulary& vocab);

/// Partition pairs by mask-name membership of their object word; order preserved.
std::pair<std::vector<AttributePair>, std::vector<AttributePair>> split_alignment(
    const std::vector<AttributePair>& pairs, const std::vector<int>& tokens, const Vocabulary& vocab,
    const std::set<std::string>& mask_names);

}  // namespace mgpf
