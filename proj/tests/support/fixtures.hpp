#pragma once

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "kbmap/graph.hpp"
#include "kbmap/random.hpp"

namespace fixtures {

// Scratch directory removed on destruction.
class TempDir {
public:
    TempDir() {
        auto base = std::filesystem::temp_directory_path();
        for (int attempt = 0; attempt < 1000; ++attempt) {
            auto candidate = base / ("kbmap_test_" + std::to_string(std::rand()) + "_" + std::to_string(attempt));
            std::error_code ec;
            if (std::filesystem::create_directory(candidate, ec)) {
                path_ = candidate;
                return;
            }
        }
        throw std::runtime_error("could not create temp dir");
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    std::string file(const std::string& name) const { return (path_ / name).string(); }

private:
    std::filesystem::path path_;
};

inline void write_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    out << content;
}

inline std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

// ---------------------------------------------------------------------------
// Synthetic community-structured KB with planted token descriptions. Entities
// form densely connected communities bridged by a few edges; descriptions mix
// community topic words, globally shared words, and (optionally) ambiguous
// surface forms reused by a pair of communities.

struct SyntheticKbConfig {
    int n_entities = 200;
    int n_communities = 8;
    int intra_degree = 3;           // random intra-community edges per node
    int overlap_degree = 2;         // edges to the most token-overlapping peers
    double inter_edge_count = 0.0;  // expected random cross-community edges per node
    int community_vocab = 20;
    int shared_vocab = 12;
    int desc_min = 3, desc_max = 6;
    int ambiguous_words = 0;      // partitioned across community pairs (2a, 2a+1)
    double ambiguous_prob = 0.5;  // chance a description carries one
    std::uint64_t seed = 7;
};

struct SyntheticKb {
    SyntheticKbConfig cfg;
    kbmap::KbGraph graph;
    std::vector<std::string> entities;
    std::vector<int> community;
    std::vector<std::string> descriptions;  // one line of space-joined tokens per entity
    std::vector<std::string> ambiguous;     // planted surface forms

    std::string edge_list() const {
        std::ostringstream out;
        kbmap::save_edge_list(graph, out);
        return out.str();
    }

    std::string descriptions_file() const {
        std::ostringstream out;
        for (std::size_t i = 0; i < entities.size(); ++i)
            out << entities[i] << '\t' << descriptions[i] << '\n';
        return out.str();
    }

    std::string pairs_file() const {
        std::ostringstream out;
        for (std::size_t i = 0; i < entities.size(); ++i)
            out << descriptions[i] << '\t' << entities[i] << '\n';
        return out.str();
    }

    std::string labels_file() const {
        std::ostringstream out;
        for (std::size_t i = 0; i < entities.size(); ++i)
            out << entities[i] << '\t' << "class" << community[i] << '\n';
        return out.str();
    }
};

inline SyntheticKb make_synthetic_kb(const SyntheticKbConfig& cfg) {
    SyntheticKb kb;
    kb.cfg = cfg;
    kbmap::Rng rng(cfg.seed);

    const int per_community = cfg.n_entities / cfg.n_communities;
    char buf[64];
    for (int i = 0; i < cfg.n_entities; ++i) {
        std::snprintf(buf, sizeof(buf), "ent%04d", i);
        kb.entities.emplace_back(buf);
        kb.community.push_back(std::min(i / per_community, cfg.n_communities - 1));
        kb.graph.add_node(kb.entities.back(), kbmap::NodeKind::Entity);
    }

    // Vocabulary pools.
    std::vector<std::vector<std::string>> topic(static_cast<std::size_t>(cfg.n_communities));
    for (int c = 0; c < cfg.n_communities; ++c)
        for (int w = 0; w < cfg.community_vocab; ++w) {
            std::snprintf(buf, sizeof(buf), "topic%dw%02d", c, w);
            topic[static_cast<std::size_t>(c)].emplace_back(buf);
        }
    std::vector<std::string> shared;
    for (int w = 0; w < cfg.shared_vocab; ++w) {
        std::snprintf(buf, sizeof(buf), "shared%02d", w);
        shared.emplace_back(buf);
    }
    for (int a = 0; a < cfg.ambiguous_words; ++a) {
        std::snprintf(buf, sizeof(buf), "amb%02d", a);
        kb.ambiguous.emplace_back(buf);
    }

    // Descriptions: unique token multisets so memorization targets stay
    // distinguishable. Each community pair (2a, 2a+1) owns the ambiguous
    // surface forms with index % n_pairs == a, so one form recurs in two
    // distinct context distributions.
    const int n_pairs = std::max(1, cfg.n_communities / 2);
    std::set<std::string> used;
    for (int i = 0; i < cfg.n_entities; ++i) {
        const int c = kb.community[i];
        const auto& pool = topic[static_cast<std::size_t>(c)];
        for (int attempt = 0;; ++attempt) {
            int len = cfg.desc_min + static_cast<int>(rng.next_below(
                                         static_cast<std::uint64_t>(cfg.desc_max - cfg.desc_min + 1)));
            if (attempt > 20) ++len;  // widen on repeated collisions
            std::set<std::string> tokens;
            if (!kb.ambiguous.empty() && rng.next_double() < cfg.ambiguous_prob) {
                std::vector<std::size_t> owned;
                for (std::size_t a = 0; a < kb.ambiguous.size(); ++a)
                    if (static_cast<int>(a) % n_pairs == (c / 2) % n_pairs) owned.push_back(a);
                if (!owned.empty()) tokens.insert(kb.ambiguous[owned[rng.next_below(owned.size())]]);
            }
            while (static_cast<int>(tokens.size()) < len) {
                if (rng.next_double() < 0.75)
                    tokens.insert(pool[rng.next_below(pool.size())]);
                else
                    tokens.insert(shared[rng.next_below(shared.size())]);
            }
            std::string joined;
            for (const auto& t : tokens) joined += t + " ";
            if (used.insert(joined).second) {
                // Shuffled word order, fixed multiset.
                std::vector<std::string> seq(tokens.begin(), tokens.end());
                rng.shuffle(seq);
                std::string text;
                for (std::size_t w = 0; w < seq.size(); ++w) {
                    if (w) text += ' ';
                    text += seq[w];
                }
                kb.descriptions.push_back(text);
                break;
            }
        }
    }

    // Edges. Related entities share vocabulary: besides a chain backbone and
    // random intra-community edges, each entity links to its most
    // token-overlapping peers in the community. A ring of bridges keeps the
    // graph connected; optional random cross-community edges add noise.
    std::vector<std::set<std::string>> token_sets;
    for (const auto& d : kb.descriptions) {
        std::istringstream in(d);
        std::set<std::string> s;
        std::string tok;
        while (in >> tok) s.insert(tok);
        token_sets.push_back(std::move(s));
    }
    std::vector<std::vector<int>> members(static_cast<std::size_t>(cfg.n_communities));
    for (int i = 0; i < cfg.n_entities; ++i) members[static_cast<std::size_t>(kb.community[i])].push_back(i);
    for (const auto& m : members) {
        for (std::size_t i = 0; i + 1 < m.size(); ++i) kb.graph.add_edge(m[i], m[i + 1], 1.0);
        for (int node : m) {
            for (int e = 0; e < cfg.intra_degree; ++e) {
                int other = m[rng.next_below(m.size())];
                if (other != node) kb.graph.add_edge(node, other, 1.0);
            }
            if (cfg.overlap_degree > 0) {
                std::vector<std::pair<int, int>> scored;  // (-overlap, peer)
                for (int other : m) {
                    if (other == node) continue;
                    int overlap = 0;
                    for (const auto& t : token_sets[static_cast<std::size_t>(node)])
                        overlap += token_sets[static_cast<std::size_t>(other)].count(t);
                    if (overlap > 0) scored.emplace_back(-overlap, other);
                }
                std::sort(scored.begin(), scored.end());
                for (std::size_t e = 0; e < scored.size() && e < static_cast<std::size_t>(cfg.overlap_degree); ++e)
                    kb.graph.add_edge(node, scored[e].second, 1.0);
            }
        }
    }
    for (int c = 0; c < cfg.n_communities; ++c) {
        const auto& a = members[static_cast<std::size_t>(c)];
        const auto& b = members[static_cast<std::size_t>((c + 1) % cfg.n_communities)];
        if (!a.empty() && !b.empty()) kb.graph.add_edge(a.front(), b.front(), 1.0);
    }
    if (cfg.inter_edge_count > 0.0) {
        for (int node = 0; node < cfg.n_entities; ++node) {
            int n_edges = static_cast<int>(cfg.inter_edge_count);
            if (rng.next_double() < cfg.inter_edge_count - n_edges) ++n_edges;
            for (int e = 0; e < n_edges; ++e) {
                int other = static_cast<int>(rng.next_below(static_cast<std::uint64_t>(cfg.n_entities)));
                if (other != node && kb.community[other] != kb.community[node])
                    kb.graph.add_edge(node, other, 1.0);
            }
        }
    }
    kb.graph.finalize();
    return kb;
}

}  // namespace fixtures
