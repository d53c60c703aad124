#pragma once

#include <cmath>
#include <cstdio>
#include <istream>
#include <ostream>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "kbmap/common.hpp"
#include "kbmap/graph.hpp"

namespace kbmap {

// Dense token-label -> vector map. Rows are stored in insertion order, which
// doubles as the serialization order.
class EmbeddingTable {
public:
    EmbeddingTable() = default;
    explicit EmbeddingTable(int dim) : dim_(dim) {
        if (dim < 1) throw std::invalid_argument("embedding dim must be >= 1");
    }

    int dim() const { return dim_; }
    std::size_t size() const { return labels_.size(); }
    const std::string& label(std::size_t i) const { return labels_.at(i); }

    int find(const std::string& label) const {
        auto it = index_.find(label);
        return it == index_.end() ? -1 : static_cast<int>(it->second);
    }

    int add(const std::string& label) {
        auto [it, inserted] = index_.emplace(label, labels_.size());
        if (!inserted) return static_cast<int>(it->second);
        labels_.push_back(label);
        data_.resize(data_.size() + dim_, 0.0);
        return static_cast<int>(labels_.size() - 1);
    }

    int add(const std::string& label, std::span<const double> v) {
        if (static_cast<int>(v.size()) != dim_) throw std::invalid_argument("vector dim mismatch");
        int id = add(label);
        std::copy(v.begin(), v.end(), row(id).begin());
        return id;
    }

    std::span<double> row(int i) { return {data_.data() + static_cast<std::size_t>(i) * dim_, static_cast<std::size_t>(dim_)}; }
    std::span<const double> row(int i) const {
        return {data_.data() + static_cast<std::size_t>(i) * dim_, static_cast<std::size_t>(dim_)};
    }

    std::span<const double> vector_of(const std::string& label) const {
        int id = find(label);
        if (id < 0) throw std::invalid_argument("no vector for label '" + label + "'");
        return row(id);
    }

private:
    int dim_ = 0;
    std::vector<std::string> labels_;
    std::vector<double> data_;
    std::unordered_map<std::string, std::size_t> index_;
};

inline double dot(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

inline double norm(std::span<const double> a) { return std::sqrt(dot(a, a)); }

// Cosine with a zero-norm operand is defined as 0 so rankings stay total.
inline double cosine(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) throw std::invalid_argument("cosine dimension mismatch");
    double na = norm(a), nb = norm(b);
    if (na == 0.0 || nb == 0.0) return 0.0;
    return dot(a, b) / (na * nb);
}

// Text format: `count dim` header, then `label v1 .. v_dim` rows with 8
// significant digits (word2vec text compatible).
inline void save_embeddings(const EmbeddingTable& table, std::ostream& out) {
    out << table.size() << ' ' << table.dim() << '\n';
    char buf[32];
    for (std::size_t i = 0; i < table.size(); ++i) {
        out << table.label(i);
        for (double v : table.row(static_cast<int>(i))) {
            std::snprintf(buf, sizeof(buf), "%.8g", v);
            out << ' ' << buf;
        }
        out << '\n';
    }
}

inline EmbeddingTable load_embeddings(std::istream& in) {
    std::string line;
    if (!std::getline(in, line)) throw io_error("empty embedding file");
    std::size_t count = 0;
    int dim = 0;
    {
        auto fields = split(strip_cr(line), ' ');
        if (fields.size() != 2) throw parse_error("expected `count dim` header", 1);
        count = static_cast<std::size_t>(parse_double(fields[0], 1));
        dim = static_cast<int>(parse_double(fields[1], 1));
    }
    if (dim < 1) throw parse_error("embedding dim must be >= 1", 1);
    EmbeddingTable table(dim);
    std::size_t line_no = 1;
    std::vector<double> v(static_cast<std::size_t>(dim));
    while (std::getline(in, line)) {
        ++line_no;
        std::string_view sv = strip_cr(line);
        if (sv.empty()) continue;
        auto fields = split(sv, ' ');
        if (fields.size() != static_cast<std::size_t>(dim) + 1)
            throw parse_error("expected label + " + std::to_string(dim) + " components", line_no);
        for (int d = 0; d < dim; ++d) v[static_cast<std::size_t>(d)] = parse_double(fields[d + 1], line_no);
        if (table.find(std::string(fields[0])) >= 0)
            throw parse_error("duplicate label '" + std::string(fields[0]) + "'", line_no);
        table.add(std::string(fields[0]), v);
    }
    if (table.size() != count)
        throw io_error("embedding header declares " + std::to_string(count) + " rows, file has " +
                       std::to_string(table.size()));
    return table;
}

// Candidate index for retrieval: entity rows only, textual features dropped.
inline EmbeddingTable entity_index(const EmbeddingTable& table) {
    EmbeddingTable out(table.dim());
    for (std::size_t i = 0; i < table.size(); ++i)
        if (!is_textual_label(table.label(i))) out.add(table.label(i), table.row(static_cast<int>(i)));
    return out;
}

}  // namespace kbmap
