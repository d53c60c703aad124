#pragma once

#include <cmath>
#include <iostream>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "kbmap/common.hpp"
#include "kbmap/graph.hpp"
#include "kbmap/text.hpp"

namespace kbmap {

struct EntityDocument {
    std::string entity;               // entity label
    std::vector<std::string> tokens;  // lowercased, whitespace-free
};

// tf-idf_c(t) = tf_c(t) * ln(N / df(t)), raw-count tf. Tokens present in
// every document get weight 0 and are dropped, so every stored weight is > 0.
struct TfIdfTable {
    std::map<std::string, std::map<std::string, double>> weights;  // entity -> token -> tf-idf
    std::size_t n_docs = 0;
    std::map<std::string, std::size_t> df;
};

// Descriptions file: `entity_label<TAB>free text`; repeated entity lines are
// concatenated. Tokenization happens here.
inline std::vector<EntityDocument> read_descriptions(std::istream& in) {
    std::vector<EntityDocument> docs;
    std::map<std::string, std::size_t> pos;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        std::string_view sv = strip_cr(line);
        if (sv.empty() || sv[0] == '#') continue;
        auto tab = sv.find('\t');
        if (tab == std::string_view::npos)
            throw parse_error("expected `entity<TAB>text`", line_no);
        std::string_view label = sv.substr(0, tab);
        detail::check_label(label, line_no);
        auto tokens = tokenize(sv.substr(tab + 1));
        auto [it, inserted] = pos.emplace(std::string(label), docs.size());
        if (inserted) docs.push_back({std::string(label), {}});
        auto& doc = docs[it->second];
        doc.tokens.insert(doc.tokens.end(), tokens.begin(), tokens.end());
    }
    return docs;
}

inline TfIdfTable compute_tfidf(const std::vector<EntityDocument>& docs,
                                std::ostream* warnings = nullptr) {
    std::vector<const EntityDocument*> usable;
    for (const auto& d : docs) {
        if (d.tokens.empty()) {
            if (warnings)
                *warnings << "warning: entity '" << d.entity << "' has no tokens, skipping\n";
            continue;
        }
        usable.push_back(&d);
    }
    if (usable.empty()) throw std::invalid_argument("empty description corpus");

    TfIdfTable table;
    table.n_docs = usable.size();
    for (const auto* d : usable) {
        std::set<std::string> seen(d->tokens.begin(), d->tokens.end());
        for (const auto& t : seen) ++table.df[t];
    }
    const double n = static_cast<double>(table.n_docs);
    for (const auto* d : usable) {
        std::map<std::string, std::size_t> tf;
        for (const auto& t : d->tokens) ++tf[t];
        auto& row = table.weights[d->entity];
        for (const auto& [t, count] : tf) {
            std::size_t df = table.df.at(t);
            if (df == table.n_docs) continue;  // ln(1) = 0, dropped
            row[t] = static_cast<double>(count) * std::log(n / static_cast<double>(df));
        }
        if (row.empty()) table.weights.erase(d->entity);
    }
    return table;
}

// Adds one Textual node per distinct token (label `tf::<token>`) and an edge
// (entity, token, tf-idf). Entities listed in `exclude` contribute nothing;
// this is the held-out hygiene used by unseen evaluation.
inline KbGraph extend_graph(const KbGraph& g, const TfIdfTable& table,
                            const std::set<std::string>& exclude = {}) {
    for (const auto& [entity, row] : table.weights)
        if (g.find(entity) < 0) throw std::invalid_argument("tf-idf table references unknown entity '" + entity + "'");

    KbGraph out;
    for (int id = 0; id < static_cast<int>(g.size()); ++id) out.add_node(g.label(id), g.kind(id));
    for (int u = 0; u < static_cast<int>(g.size()); ++u)
        for (const auto& [v, w] : g.adjacent(u))
            if (u < v) out.add_edge(u, v, w);

    for (const auto& [entity, row] : table.weights) {
        if (exclude.count(entity)) continue;
        int eid = out.find(entity);
        for (const auto& [token, weight] : row) {
            int tid = out.add_node(kTextualPrefix + token, NodeKind::Textual);
            out.add_edge(eid, tid, weight);
        }
    }
    out.finalize();
    return out;
}

inline void save_tfidf_table(const TfIdfTable& table, std::ostream& out) {
    for (const auto& [entity, row] : table.weights)
        for (const auto& [token, weight] : row)
            out << entity << '\t' << token << '\t' << format_fixed(weight, 6) << '\n';
}

inline TfIdfTable load_tfidf_table(std::istream& in) {
    TfIdfTable table;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        std::string_view sv = strip_cr(line);
        if (sv.empty() || sv[0] == '#') continue;
        auto fields = split(sv, '\t');
        if (fields.size() != 3) throw parse_error("expected `entity<TAB>token<TAB>weight`", line_no);
        double w = parse_double(fields[2], line_no);
        if (w <= 0.0) throw parse_error("tf-idf weight must be > 0", line_no);
        table.weights[std::string(fields[0])][std::string(fields[1])] = w;
    }
    return table;
}

}  // namespace kbmap
