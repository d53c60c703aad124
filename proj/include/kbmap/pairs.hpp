#pragma once

#include <istream>
#include <string>
#include <vector>

#include "kbmap/common.hpp"
#include "kbmap/embedding.hpp"
#include "kbmap/text.hpp"

namespace kbmap {

// One supervision example: a token sequence and the KB vector it should
// compose to. Anchors are (textual-feature token, its own node vector) pairs.
struct TrainingPair {
    std::vector<std::string> tokens;
    std::string entity;          // gold label (textual-feature label for anchors)
    std::vector<double> target;
    bool is_anchor = false;
};

// Pairs file: `text<TAB>entity_label` per line; targets resolved against the
// KB embedding table.
inline std::vector<TrainingPair> load_pairs(std::istream& in, const EmbeddingTable& kb) {
    std::vector<TrainingPair> pairs;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        std::string_view sv = strip_cr(line);
        if (sv.empty() || sv[0] == '#') continue;
        auto tab = sv.find('\t');
        if (tab == std::string_view::npos) throw parse_error("expected `text<TAB>entity_label`", line_no);
        std::string entity(sv.substr(tab + 1));
        if (entity.empty()) throw parse_error("empty entity label", line_no);
        TrainingPair p;
        p.tokens = tokenize(sv.substr(0, tab));
        if (p.tokens.empty()) throw parse_error("text has no usable tokens", line_no);
        p.entity = entity;
        int id = kb.find(entity);
        if (id < 0) throw std::invalid_argument("no KB vector for entity '" + entity + "'");
        auto v = kb.row(id);
        p.target.assign(v.begin(), v.end());
        pairs.push_back(std::move(p));
    }
    return pairs;
}

// One extra pair per textual-feature vector in the table: the raw token as a
// length-1 sequence, its own node vector as the target.
inline std::vector<TrainingPair> make_anchor_pairs(const EmbeddingTable& kb) {
    std::vector<TrainingPair> anchors;
    for (std::size_t i = 0; i < kb.size(); ++i) {
        const std::string& label = kb.label(i);
        if (!is_textual_label(label)) continue;
        TrainingPair p;
        p.tokens = tokenize(label.substr(4));
        if (p.tokens.empty()) continue;  // tokenizer may eat stopword features
        p.entity = label;
        auto v = kb.row(static_cast<int>(i));
        p.target.assign(v.begin(), v.end());
        p.is_anchor = true;
        anchors.push_back(std::move(p));
    }
    return anchors;
}

}  // namespace kbmap
