#pragma once

#include <algorithm>
#include <cctype>
#include <cstdint>
#include <optional>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

namespace micl {

using TokenId = std::uint32_t;

inline std::uint64_t fnv1a64(const void* data, std::size_t len, std::uint64_t seed = 14695981039346656037ull) {
    const auto* p = static_cast<const unsigned char*>(data);
    std::uint64_t h = seed;
    for (std::size_t i = 0; i < len; ++i) {
        h ^= p[i];
        h *= 1099511628211ull;
    }
    return h;
}

inline std::uint64_t fnv1a64(const std::string& s) { return fnv1a64(s.data(), s.size()); }

// Whitespace tokenizer with a fixed-size hashing vocabulary.
class Tokenizer {
public:
    explicit Tokenizer(std::size_t vocab_size = 1024) : vocab_size_(vocab_size) {}

    std::size_t vocab_size() const { return vocab_size_; }

    TokenId id_of(const std::string& word) const {
        return static_cast<TokenId>(fnv1a64(lower(word)) % vocab_size_);
    }

    static std::vector<std::string> split(const std::string& text) {
        std::vector<std::string> words;
        std::istringstream is(text);
        std::string w;
        while (is >> w) words.push_back(lower(w));
        return words;
    }

    std::vector<TokenId> encode(const std::vector<std::string>& words) const {
        std::vector<TokenId> ids;
        ids.reserve(words.size());
        for (const auto& w : words) ids.push_back(id_of(w));
        return ids;
    }

    static std::string lower(std::string w) {
        std::transform(w.begin(), w.end(), w.begin(),
                       [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
        return w;
    }

private:
    std::size_t vocab_size_;
};

// Word-level polarity lexicon with antonym and synonym tables. Stands behind
// the sentiment view and the label-flipping text augmentation; replaceable by
// any table with the same three maps.
struct Lexicon {
    std::unordered_map<std::string, double> polarity;  // word -> [-1, 1]
    std::unordered_map<std::string, std::string> antonym;
    std::unordered_map<std::string, std::string> synonym;

    std::optional<double> polarity_of(const std::string& word) const {
        auto it = polarity.find(Tokenizer::lower(word));
        if (it == polarity.end()) return std::nullopt;
        return it->second;
    }

    static Lexicon builtin() {
        Lexicon lx;
        const std::vector<std::pair<std::string, double>> pos = {
            {"love", 0.9},  {"great", 0.8},     {"wonderful", 0.8}, {"amazing", 0.9},
            {"happy", 0.7}, {"awesome", 0.8},   {"perfect", 0.9},   {"delightful", 0.7},
            {"enjoy", 0.6}, {"brilliant", 0.8},
        };
        const std::vector<std::pair<std::string, double>> neg = {
            {"hate", -0.9},      {"terrible", -0.8}, {"awful", -0.8},    {"horrible", -0.9},
            {"sad", -0.7},       {"miserable", -0.8},{"worst", -0.9},    {"dreadful", -0.7},
            {"despise", -0.6},   {"abysmal", -0.8},
        };
        for (auto& [w, p] : pos) lx.polarity[w] = p;
        for (auto& [w, p] : neg) lx.polarity[w] = p;
        const std::vector<std::pair<std::string, std::string>> ants = {
            {"love", "hate"},        {"great", "terrible"},  {"wonderful", "awful"},
            {"amazing", "horrible"}, {"happy", "sad"},       {"awesome", "miserable"},
            {"perfect", "worst"},    {"delightful", "dreadful"}, {"enjoy", "despise"},
            {"brilliant", "abysmal"},
        };
        for (auto& [a, b] : ants) {
            lx.antonym[a] = b;
            lx.antonym[b] = a;
        }
        // Same-polarity (or neutral) substitutions used by the paraphrase strategy.
        const std::vector<std::pair<std::string, std::string>> syns = {
            {"great", "awesome"},   {"awesome", "great"},    {"love", "enjoy"},
            {"enjoy", "love"},      {"terrible", "awful"},   {"awful", "terrible"},
            {"hate", "despise"},    {"despise", "hate"},     {"photo", "picture"},
            {"picture", "photo"},   {"day", "morning"},      {"morning", "day"},
            {"city", "town"},       {"town", "city"},        {"wonderful", "delightful"},
            {"horrible", "dreadful"},
        };
        for (auto& [a, b] : syns) lx.synonym[a] = b;
        return lx;
    }
};

}  // namespace micl
