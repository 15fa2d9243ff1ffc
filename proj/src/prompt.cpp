#include "mgpf/prompt.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

namespace mgpf {

namespace {

const char* kind_tag(WordKind k) {
    switch (k) {
        case WordKind::Color: return "color";
        case WordKind::Object: return "object";
        case WordKind::Location: return "loc";
        case WordKind::Connective: return "word";
    }
    return "word";
}

WordKind tag_kind(const std::string& tag) {
    if (tag == "color") return WordKind::Color;
    if (tag == "object") return WordKind::Object;
    if (tag == "loc") return WordKind::Location;
    if (tag == "word") return WordKind::Connective;
    throw std::runtime_error("unknown vocabulary tag: " + tag);
}

}  // namespace

int Vocabulary::add(const std::string& word, WordKind kind) {
    auto it = index_.find(word);
    if (it != index_.end()) return it->second;
    int id = static_cast<int>(words_.size());
    words_.push_back(word);
    kinds_.push_back(kind);
    index_[word] = id;
    return id;
}

int Vocabulary::id(const std::string& word) const {
    auto it = index_.find(word);
    if (it == index_.end()) throw UnknownWordError(word);
    return it->second;
}

bool Vocabulary::contains(const std::string& word) const { return index_.count(word) > 0; }

std::vector<std::string> Vocabulary::words_of_kind(WordKind k) const {
    std::vector<std::string> out;
    for (int i = 0; i < size(); ++i)
        if (kinds_[i] == k) out.push_back(words_[i]);
    return out;
}

std::uint64_t Vocabulary::hash() const {
    std::uint64_t h = 14695981039346656037ull;
    auto mix = [&h](const std::string& s) {
        for (unsigned char c : s) {
            h ^= c;
            h *= 1099511628211ull;
        }
    };
    for (int i = 0; i < size(); ++i) {
        mix(kind_tag(kinds_[i]));
        mix(":");
        mix(words_[i]);
        mix("\n");
    }
    return h;
}

Vocabulary Vocabulary::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open vocabulary file: " + path);
    Vocabulary v;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        auto colon = line.find(':');
        if (colon == std::string::npos) throw std::runtime_error("bad vocabulary line: " + line);
        v.add(line.substr(colon + 1), tag_kind(line.substr(0, colon)));
    }
    return v;
}

void Vocabulary::save(const std::string& path) const {
    std::ofstream out(path);
    for (int i = 0; i < size(); ++i) out << kind_tag(kinds_[i]) << ":" << words_[i] << "\n";
}

Vocabulary Vocabulary::benchmark() {
    Vocabulary v;
    for (const char* w : {"red", "green", "blue", "yellow", "purple", "orange", "cyan", "magenta",
                          "brown", "pink", "gray"})
        v.add(w, WordKind::Color);
    for (const char* w : {"circle", "square", "triangle", "star", "cross", "diamond", "ring",
                          "hexagon", "heart", "crescent", "arrow", "pentagon"})
        v.add(w, WordKind::Object);
    for (const char* w : {"field", "park", "sky", "corner", "meadow"}) v.add(w, WordKind::Location);
    for (const char* w : {"a", "and", "in", "the"}) v.add(w, WordKind::Connective);
    return v;
}

std::string ParsedPrompt::render(const Vocabulary& vocab) const {
    std::string out;
    for (size_t i = 0; i < tokens.size(); ++i) {
        if (i > 0) out += (static_cast<int>(i) == trailing_start) ? ", " : " ";
        out += vocab.word(tokens[i]);
    }
    return out;
}

namespace {

struct TokenStream {
    std::vector<std::string> words;
    std::vector<bool> comma_before;  // true if a comma separated this word from the previous one
    size_t pos = 0;

    bool done() const { return pos >= words.size(); }
    const std::string& peek() const { return words[pos]; }
    bool comma_here() const { return comma_before[pos]; }
};

TokenStream tokenize(const std::string& prompt) {
    TokenStream ts;
    std::string cur;
    bool pending_comma = false;
    auto flush = [&]() {
        if (!cur.empty()) {
            ts.words.push_back(cur);
            ts.comma_before.push_back(pending_comma);
            pending_comma = false;
            cur.clear();
        }
    };
    for (char c : prompt) {
        if (c == ' ' || c == '\t' || c == '\n') {
            flush();
        } else if (c == ',') {
            flush();
            pending_comma = true;
        } else {
            cur += c;
        }
    }
    flush();
    return ts;
}

}  // namespace

ParsedPrompt parse_prompt(const std::string& prompt, const std::set<std::string>& mask_names,
                          const Vocabulary& vocab) {
    TokenStream ts = tokenize(prompt);
    if (ts.words.empty()) throw EmptyPromptError();
    for (const auto& w : ts.words)
        if (!vocab.contains(w)) throw UnknownWordError(w);

    ParsedPrompt p;
    auto push = [&](const std::string& w) {
        p.tokens.push_back(vocab.id(w));
        return static_cast<int>(p.tokens.size()) - 1;
    };
    auto expect = [&](const std::string& w) {
        if (ts.done() || ts.peek() != w)
            throw GrammarMismatchError("expected '" + w + "'" +
                                       (ts.done() ? " at end of prompt" : ", got '" + ts.peek() + "'"));
        push(w);
        ++ts.pos;
    };
    auto expect_kind = [&](WordKind k, const char* what) {
        if (ts.done() || vocab.kind(vocab.id(ts.peek())) != k)
            throw GrammarMismatchError(std::string("expected ") + what +
                                       (ts.done() ? " at end of prompt" : ", got '" + ts.peek() + "'"));
        int idx = push(ts.peek());
        ++ts.pos;
        return idx;
    };

    // noun phrase: "a <color> <object>"
    auto noun_phrase = [&]() {
        expect("a");
        int a = expect_kind(WordKind::Color, "a color");
        int o = expect_kind(WordKind::Object, "an object");
        p.pairs.push_back({a, o});
    };

    noun_phrase();
    if (!ts.done() && !ts.comma_here() && ts.peek() == "and") {
        expect("and");
        noun_phrase();
    }

    if (!ts.done()) {
        if (!ts.comma_here()) throw GrammarMismatchError("expected ',' before trailing clause");
        // trailing clause: "a [<color>] <object> in the <loc>"
        p.trailing_start = static_cast<int>(p.tokens.size());
        expect("a");
        int attr = -1;
        if (!ts.done() && vocab.kind(vocab.id(ts.peek())) == WordKind::Color)
            attr = expect_kind(WordKind::Color, "a color");
        int obj = expect_kind(WordKind::Object, "an object");
        expect("in");
        expect("the");
        expect_kind(WordKind::Location, "a location");
        if (attr >= 0)
            p.pairs.push_back({attr, obj});
        else
            p.free_objects.push_back(obj);
    }
    if (!ts.done()) throw GrammarMismatchError("unexpected trailing words starting at '" + ts.peek() + "'");

    std::tie(p.s1, p.s2) = split_alignment(p.pairs, p.tokens, vocab, mask_names);
    return p;
}

std::pair<std::vector<AttributePair>, std::vector<AttributePair>> split_alignment(
    const std::vector<AttributePair>& pairs, const std::vector<int>& tokens, const Vocabulary& vocab,
    const std::set<std::string>& mask_names) {
    std::vector<AttributePair> s1, s2;
    for (const auto& pr : pairs) {
        const std::string& obj = vocab.word(tokens.at(pr.object_index));
        (mask_names.count(obj) ? s1 : s2).push_back(pr);
    }
    return {s1, s2};
}

}  // namespace mgpf
