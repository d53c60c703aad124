#pragma once

#include <array>
#include <cctype>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

namespace kbmap {

// Fixed English stopword list applied by the tokenizer so near-zero-idf
// function words never dominate the textual edge mass.
inline const std::unordered_set<std::string>& stopwords() {
    static const std::unordered_set<std::string> words = {
        "a",       "about",   "above",  "after",  "again",   "against", "all",    "am",
        "an",      "and",     "any",    "are",    "as",      "at",      "be",     "because",
        "been",    "before",  "being",  "below",  "between", "both",    "but",    "by",
        "can",     "cannot",  "could",  "did",    "do",      "does",    "doing",  "down",
        "during",  "each",    "few",    "for",    "from",    "further", "had",    "has",
        "have",    "having",  "he",     "her",    "here",    "hers",    "herself","him",
        "himself", "his",     "how",    "i",      "if",      "in",      "into",   "is",
        "it",      "its",     "itself", "me",     "more",    "most",    "my",     "myself",
        "no",      "nor",     "not",    "of",     "off",     "on",      "once",   "only",
        "or",      "other",   "ought",  "our",    "ours",    "ourselves", "out",  "over",
        "own",     "same",    "she",    "should", "so",      "some",    "such",   "than",
        "that",    "the",     "their",  "theirs", "them",    "themselves", "then", "there",
        "these",   "they",    "this",   "those",  "through", "to",      "too",    "under",
        "until",   "up",      "very",   "was",    "we",      "were",    "what",   "when",
        "where",   "which",   "while",  "who",    "whom",    "why",     "with",   "would",
        "you",     "your",    "yours",  "yourself", "yourselves",
    };
    return words;
}

// Lowercase, split on runs of non-alphanumeric bytes, drop stopwords.
inline std::vector<std::string> tokenize(std::string_view text) {
    std::vector<std::string> tokens;
    std::string current;
    auto flush = [&] {
        if (!current.empty()) {
            if (!stopwords().count(current)) tokens.push_back(current);
            current.clear();
        }
    };
    for (unsigned char c : text) {
        if (std::isalnum(c))
            current.push_back(static_cast<char>(std::tolower(c)));
        else
            flush();
    }
    flush();
    return tokens;
}

}  // namespace kbmap
