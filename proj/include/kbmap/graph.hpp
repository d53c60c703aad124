#pragma once

#include <algorithm>
#include <cstdint>
#include <istream>
#include <limits>
#include <ostream>
#include <string>
#include <unordered_map>
#include <vector>

#include "kbmap/common.hpp"

namespace kbmap {

enum class NodeKind { Entity, Textual };

// Textual-feature labels are namespaced with this prefix in every file format
// so they can never collide with entity labels.
inline constexpr const char* kTextualPrefix = "tf::";

inline bool is_textual_label(std::string_view label) {
    return label.size() >= 4 && label.substr(0, 4) == kTextualPrefix;
}

struct DegreeStats {
    std::size_t entity_nodes = 0;
    std::size_t textual_nodes = 0;
    std::size_t edges = 0;
    std::size_t min_degree = 0;
    std::size_t max_degree = 0;
    double mean_degree = 0.0;
};

// Undirected graph of entity and textual-feature nodes with weighted edges.
// Node ids are dense and assigned in first-seen order; adjacency lists are
// kept sorted by neighbor id, which makes every downstream traversal
// deterministic. Immutable after finalize(); construction is single-threaded,
// reads are safe from any number of threads.
class KbGraph {
public:
    int add_node(const std::string& label, NodeKind kind) {
        if (label.empty()) throw std::invalid_argument("empty node label");
        auto [it, inserted] = index_.emplace(label, static_cast<int>(labels_.size()));
        if (!inserted) {
            if (kinds_[it->second] != kind)
                throw std::invalid_argument("node '" + label + "' redeclared with a different kind");
            return it->second;
        }
        labels_.push_back(label);
        kinds_.push_back(kind);
        adj_.emplace_back();
        return it->second;
    }

    // Symmetric insertion; parallel edges are collapsed at finalize() keeping
    // the maximum weight. Textual-textual edges violate graph construction.
    void add_edge(int u, int v, double weight) {
        if (u == v) throw std::invalid_argument("self-loop on node '" + labels_.at(u) + "'");
        if (weight <= 0.0) throw std::invalid_argument("edge weight must be > 0");
        if (kinds_.at(u) == NodeKind::Textual && kinds_.at(v) == NodeKind::Textual)
            throw std::logic_error("edge between two textual nodes: " + labels_[u] + ", " + labels_[v]);
        adj_[u].emplace_back(v, weight);
        adj_[v].emplace_back(u, weight);
        finalized_ = false;
    }

    void finalize() {
        for (auto& nbrs : adj_) {
            std::sort(nbrs.begin(), nbrs.end());
            std::vector<std::pair<int, double>> merged;
            for (const auto& [id, w] : nbrs) {
                if (!merged.empty() && merged.back().first == id)
                    merged.back().second = std::max(merged.back().second, w);
                else
                    merged.emplace_back(id, w);
            }
            nbrs = std::move(merged);
        }
        finalized_ = true;
    }

    int find(const std::string& label) const {
        auto it = index_.find(label);
        return it == index_.end() ? -1 : it->second;
    }

    int require(const std::string& label) const {
        int id = find(label);
        if (id < 0) throw std::invalid_argument("unknown node '" + label + "'");
        return id;
    }

    std::size_t size() const { return labels_.size(); }
    const std::string& label(int id) const { return labels_.at(id); }
    NodeKind kind(int id) const { return kinds_.at(id); }

    const std::vector<std::pair<int, double>>& adjacent(int id) const {
        check_node(id);
        return adj_[id];
    }

    // (C_n, T_n): entity neighbors and weighted textual neighbors, both in
    // ascending id order.
    void neighbors(int id, std::vector<int>& entity_out,
                   std::vector<std::pair<int, double>>& textual_out) const {
        check_node(id);
        entity_out.clear();
        textual_out.clear();
        for (const auto& [nbr, w] : adj_[id]) {
            if (kinds_[nbr] == NodeKind::Entity)
                entity_out.push_back(nbr);
            else
                textual_out.emplace_back(nbr, w);
        }
    }

    DegreeStats degree_stats() const {
        DegreeStats s;
        std::size_t total_degree = 0;
        std::size_t min_d = std::numeric_limits<std::size_t>::max();
        for (std::size_t i = 0; i < labels_.size(); ++i) {
            if (kinds_[i] == NodeKind::Entity)
                ++s.entity_nodes;
            else
                ++s.textual_nodes;
            std::size_t d = adj_[i].size();
            total_degree += d;
            min_d = std::min(min_d, d);
            s.max_degree = std::max(s.max_degree, d);
        }
        if (!labels_.empty()) {
            s.min_degree = min_d;
            s.mean_degree = static_cast<double>(total_degree) / static_cast<double>(labels_.size());
        }
        s.edges = total_degree / 2;
        return s;
    }

    bool finalized() const { return finalized_; }

private:
    void check_node(int id) const {
        if (id < 0 || static_cast<std::size_t>(id) >= labels_.size())
            throw std::invalid_argument("unknown node id " + std::to_string(id));
    }

    std::vector<std::string> labels_;
    std::vector<NodeKind> kinds_;
    std::vector<std::vector<std::pair<int, double>>> adj_;
    std::unordered_map<std::string, int> index_;
    bool finalized_ = true;
};

namespace detail {

inline void check_label(std::string_view label, std::size_t line_no) {
    if (label.empty()) throw parse_error("empty node label", line_no);
    if (has_whitespace(label))
        throw parse_error("node label contains whitespace: '" + std::string(label) + "'", line_no);
}

}  // namespace detail

// Plain entity edge list: `src<TAB>dst` per line, '#' comments ignored.
inline KbGraph load_edge_list(std::istream& in) {
    KbGraph g;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        std::string_view sv = strip_cr(line);
        if (sv.empty() || sv[0] == '#') continue;
        auto fields = split(sv, '\t');
        if (fields.size() != 2)
            throw parse_error("expected 2 tab-separated fields, got " + std::to_string(fields.size()),
                              line_no);
        detail::check_label(fields[0], line_no);
        detail::check_label(fields[1], line_no);
        if (fields[0] == fields[1])
            throw parse_error("self-loop on '" + std::string(fields[0]) + "'", line_no);
        int u = g.add_node(std::string(fields[0]), NodeKind::Entity);
        int v = g.add_node(std::string(fields[1]), NodeKind::Entity);
        g.add_edge(u, v, 1.0);
    }
    g.finalize();
    return g;
}

// Extended edge list: 2 fields (weight 1) or 3 fields with an explicit
// weight. Node kind is recovered from the `tf::` label prefix.
inline KbGraph load_weighted_edge_list(std::istream& in) {
    KbGraph g;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        std::string_view sv = strip_cr(line);
        if (sv.empty() || sv[0] == '#') continue;
        auto fields = split(sv, '\t');
        if (fields.size() != 2 && fields.size() != 3)
            throw parse_error("expected 2 or 3 tab-separated fields, got " + std::to_string(fields.size()),
                              line_no);
        detail::check_label(fields[0], line_no);
        detail::check_label(fields[1], line_no);
        if (fields[0] == fields[1])
            throw parse_error("self-loop on '" + std::string(fields[0]) + "'", line_no);
        double w = fields.size() == 3 ? parse_double(fields[2], line_no) : 1.0;
        if (w <= 0.0) throw parse_error("edge weight must be > 0", line_no);
        NodeKind ku = is_textual_label(fields[0]) ? NodeKind::Textual : NodeKind::Entity;
        NodeKind kv = is_textual_label(fields[1]) ? NodeKind::Textual : NodeKind::Entity;
        if (ku == NodeKind::Textual && kv == NodeKind::Textual)
            throw parse_error("edge joins two textual nodes", line_no);
        int u = g.add_node(std::string(fields[0]), ku);
        int v = g.add_node(std::string(fields[1]), kv);
        g.add_edge(u, v, w);
    }
    g.finalize();
    return g;
}

// One line per undirected edge (lower id first); unit weights are written in
// the 2-field form so plain entity graphs stay readable by load_edge_list.
inline void save_edge_list(const KbGraph& g, std::ostream& out) {
    for (int u = 0; u < static_cast<int>(g.size()); ++u) {
        for (const auto& [v, w] : g.adjacent(u)) {
            if (v < u) continue;
            out << g.label(u) << '\t' << g.label(v);
            if (w != 1.0) out << '\t' << format_double(w);
            out << '\n';
        }
    }
}

inline void print_stats(const DegreeStats& s, std::ostream& out) {
    out << "entity nodes:  " << s.entity_nodes << '\n'
        << "textual nodes: " << s.textual_nodes << '\n'
        << "edges:         " << s.edges << '\n'
        << "degree min/mean/max: " << s.min_degree << '/' << format_fixed(s.mean_degree, 4) << '/'
        << s.max_degree << '\n';
}

}  // namespace kbmap
