// Deterministic word-level tokenizer over a closed vocabulary, with segment
// ids computed at partition boundaries. One token per item word, punctuation
// mark, or number; a literal whitespace token follows every colon so step
// fragments look like [part][2][:][ws][4].
#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "countlab/prompts.hpp"

namespace countlab {

struct VocabError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct RangeError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

enum class TokenClass : uint8_t {
    Bos,
    Item,
    Comma,
    Separator,
    Colon,
    Whitespace,
    Number,
    Keyword,
};

inline std::string_view token_class_name(TokenClass c) {
    switch (c) {
        case TokenClass::Bos: return "BOS";
        case TokenClass::Item: return "ITEM";
        case TokenClass::Comma: return "COMMA";
        case TokenClass::Separator: return "SEPARATOR";
        case TokenClass::Colon: return "COLON";
        case TokenClass::Whitespace: return "WHITESPACE";
        case TokenClass::Number: return "NUMBER";
        case TokenClass::Keyword: return "KEYWORD";
    }
    return "?";
}

inline TokenClass token_class_from_name(std::string_view s) {
    if (s == "BOS") return TokenClass::Bos;
    if (s == "ITEM") return TokenClass::Item;
    if (s == "COMMA") return TokenClass::Comma;
    if (s == "SEPARATOR") return TokenClass::Separator;
    if (s == "COLON") return TokenClass::Colon;
    if (s == "WHITESPACE") return TokenClass::Whitespace;
    if (s == "NUMBER") return TokenClass::Number;
    if (s == "KEYWORD") return TokenClass::Keyword;
    throw VocabError("unknown token class name: " + std::string(s));
}

struct TokenEntry {
    std::string text;
    TokenClass cls = TokenClass::Keyword;
    std::optional<int> value;  // integer value, NUMBER tokens only
};

// Immutable after construction; encode/decode are pure.
class Vocab {
public:
    explicit Vocab(std::vector<TokenEntry> entries) : entries_(std::move(entries)) {
        int bos_count = 0;
        for (size_t i = 0; i < entries_.size(); ++i) {
            const TokenEntry& e = entries_[i];
            if (!by_text_.emplace(e.text, static_cast<int>(i)).second) {
                throw VocabError("duplicate vocab token: " + e.text);
            }
            if (e.cls == TokenClass::Bos) {
                ++bos_count;
                bos_id_ = static_cast<int>(i);
            }
            if (e.cls == TokenClass::Number) {
                if (!e.value.has_value()) {
                    throw VocabError("NUMBER token without value: " + e.text);
                }
                number_by_value_[*e.value] = static_cast<int>(i);
            }
            if (e.cls == TokenClass::Whitespace) ws_id_ = static_cast<int>(i);
            if (e.text == "<eos>") eos_id_ = static_cast<int>(i);
        }
        if (bos_count != 1) {
            throw VocabError("vocab must contain exactly one BOS token");
        }
    }

    int size() const { return static_cast<int>(entries_.size()); }

    int id_of(std::string_view text) const {
        auto it = by_text_.find(std::string(text));
        if (it == by_text_.end()) {
            throw VocabError("word not in vocabulary: \"" + std::string(text) + "\"");
        }
        return it->second;
    }

    std::optional<int> try_id(std::string_view text) const {
        auto it = by_text_.find(std::string(text));
        if (it == by_text_.end()) return std::nullopt;
        return it->second;
    }

    const TokenEntry& entry(int id) const {
        if (id < 0 || id >= size()) {
            throw RangeError("token id out of range: " + std::to_string(id));
        }
        return entries_[static_cast<size_t>(id)];
    }

    const std::string& text_of(int id) const { return entry(id).text; }
    TokenClass class_of(int id) const { return entry(id).cls; }
    bool is(int id, TokenClass c) const { return class_of(id) == c; }

    int value_of(int id) const {
        const TokenEntry& e = entry(id);
        if (!e.value.has_value()) {
            throw RangeError("token has no integer value: " + e.text);
        }
        return *e.value;
    }

    int number_id(int value) const {
        auto it = number_by_value_.find(value);
        if (it == number_by_value_.end()) {
            throw RangeError("no NUMBER token for value " + std::to_string(value));
        }
        return it->second;
    }

    bool has_number(int value) const { return number_by_value_.count(value) != 0; }
    const std::map<int, int>& numbers_by_value() const { return number_by_value_; }

    int bos_id() const { return bos_id_; }
    int eos_id() const { return eos_id_; }
    int ws_id() const { return ws_id_; }

    nlohmann::json to_json() const {
        nlohmann::json toks = nlohmann::json::array();
        for (const TokenEntry& e : entries_) {
            nlohmann::json t;
            t["token"] = e.text;
            t["class"] = token_class_name(e.cls);
            if (e.value.has_value()) t["value"] = *e.value;
            toks.push_back(std::move(t));
        }
        return nlohmann::json{{"tokens", std::move(toks)}};
    }

    static Vocab from_json(const nlohmann::json& j) {
        std::vector<TokenEntry> entries;
        for (const auto& t : j.at("tokens")) {
            TokenEntry e;
            e.text = t.at("token").get<std::string>();
            e.cls = token_class_from_name(t.at("class").get<std::string>());
            if (t.contains("value")) e.value = t.at("value").get<int>();
            entries.push_back(std::move(e));
        }
        return Vocab(std::move(entries));
    }

private:
    std::vector<TokenEntry> entries_;
    std::map<std::string, int> by_text_;
    std::map<int, int> number_by_value_;
    int bos_id_ = -1;
    int eos_id_ = -1;
    int ws_id_ = -1;
};

// Token ids plus 0-based partition index per position. The separator itself
// belongs to the segment it terminates; the increment lands on the token
// after it.
struct TokenSeq {
    std::vector<int> ids;
    std::vector<int> segment_ids;

    int length() const { return static_cast<int>(ids.size()); }

    void push(int id, bool id_is_separator) {
        const int seg = next_segment_;
        ids.push_back(id);
        segment_ids.push_back(seg);
        if (id_is_separator) ++next_segment_;
    }

    int next_segment() const { return next_segment_; }

    bool operator==(const TokenSeq& o) const {
        return ids == o.ids && segment_ids == o.segment_ids;
    }

private:
    int next_segment_ = 0;
};

namespace detail {

inline constexpr std::string_view kSplitPunct = ",|:.?()";

inline bool is_split_punct(char c) { return kSplitPunct.find(c) != std::string_view::npos; }

// Whitespace-separated chunks; a chunk that is itself a vocab token stays
// atomic ("[x1]", "..."), otherwise punctuation marks split off into their
// own tokens.
inline std::vector<std::string> split_words(std::string_view text, const Vocab& vocab) {
    std::vector<std::string> words;
    size_t i = 0;
    while (i < text.size()) {
        while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i]))) ++i;
        if (i >= text.size()) break;
        size_t j = i;
        while (j < text.size() && !std::isspace(static_cast<unsigned char>(text[j]))) ++j;
        std::string chunk(text.substr(i, j - i));
        i = j;
        if (vocab.try_id(chunk).has_value()) {
            words.push_back(std::move(chunk));
            continue;
        }
        std::string run;
        for (char c : chunk) {
            if (is_split_punct(c)) {
                if (!run.empty()) {
                    words.push_back(run);
                    run.clear();
                }
                words.emplace_back(1, c);
            } else {
                run.push_back(c);
            }
        }
        if (!run.empty()) words.push_back(std::move(run));
    }
    return words;
}

}  // namespace detail

// Encode canonical text. A BOS token is always prepended; a whitespace token
// is emitted after every colon.
inline TokenSeq encode(std::string_view text, const Vocab& vocab) {
    TokenSeq seq;
    seq.push(vocab.bos_id(), false);
    for (const std::string& w : detail::split_words(text, vocab)) {
        const std::optional<int> id = vocab.try_id(w);
        if (!id.has_value()) {
            throw VocabError("word not in vocabulary: \"" + w + "\"");
        }
        seq.push(*id, vocab.is(*id, TokenClass::Separator));
        if (vocab.is(*id, TokenClass::Colon)) {
            seq.push(vocab.ws_id(), false);
        }
    }
    return seq;
}

// Canonical spacing: comma/period/question/right-paren/colon bind left,
// left-paren binds right, the separator is spaced on both sides. BOS and the
// whitespace token render as nothing (the joiner supplies the space).
inline std::string decode(const TokenSeq& seq, const Vocab& vocab) {
    std::string out;
    bool suppress_space = false;
    for (int id : seq.ids) {
        const TokenEntry& e = vocab.entry(id);
        if (e.cls == TokenClass::Bos || e.cls == TokenClass::Whitespace) continue;
        const bool binds_left = e.cls == TokenClass::Comma || e.cls == TokenClass::Colon ||
                                (e.cls == TokenClass::Keyword &&
                                 (e.text == "." || e.text == "?" || e.text == ")"));
        if (!out.empty() && !binds_left && !suppress_space) out.push_back(' ');
        out += e.text;
        suppress_space = (e.cls == TokenClass::Keyword && e.text == "(");
    }
    return out;
}

inline constexpr int kMaxNumber = 200;

// Closed default vocabulary: the item alphabet, punctuation, number tokens
// 0..200, and every word used by the prompt templates.
inline Vocab default_vocab() {
    std::vector<TokenEntry> entries;
    entries.push_back({"<bos>", TokenClass::Bos, std::nullopt});
    entries.push_back({"<eos>", TokenClass::Keyword, std::nullopt});
    entries.push_back({" ", TokenClass::Whitespace, std::nullopt});
    entries.push_back({",", TokenClass::Comma, std::nullopt});
    entries.push_back({"|", TokenClass::Separator, std::nullopt});
    entries.push_back({":", TokenClass::Colon, std::nullopt});
    for (std::string_view item : prompts::kItems) {
        entries.push_back({std::string(item), TokenClass::Item, std::nullopt});
    }
    for (int n = 0; n <= kMaxNumber; ++n) {
        entries.push_back({std::to_string(n), TokenClass::Number, n});
    }

    std::set<std::string> keywords = {"part", "..."};
    auto harvest = [&keywords](std::string_view text) {
        std::string run;
        auto flush = [&] {
            if (!run.empty()) {
                keywords.insert(run);
                run.clear();
            }
        };
        size_t i = 0;
        while (i < text.size()) {
            while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i]))) ++i;
            if (i >= text.size()) break;
            size_t j = i;
            while (j < text.size() && !std::isspace(static_cast<unsigned char>(text[j]))) ++j;
            std::string chunk(text.substr(i, j - i));
            i = j;
            if (chunk == "..." || (chunk.front() == '[' && chunk.back() == ']')) {
                keywords.insert(chunk);
                continue;
            }
            for (char c : chunk) {
                if (detail::is_split_punct(c)) {
                    flush();
                    if (std::string_view(",|:").find(c) == std::string_view::npos) {
                        keywords.insert(std::string(1, c));
                    }
                } else {
                    run.push_back(c);
                }
            }
            flush();
        }
    };
    harvest(prompts::kUnstructuredNoSteps);
    harvest(prompts::kUnstructuredSteps);
    harvest(prompts::kStructuredNoSteps);
    harvest(prompts::kStructuredSteps);
    harvest(prompts::kCountScopeBlank);

    for (const std::string& w : keywords) {
        entries.push_back({w, TokenClass::Keyword, std::nullopt});
    }
    return Vocab(std::move(entries));
}

}  // namespace countlab
