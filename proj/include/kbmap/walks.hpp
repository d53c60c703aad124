#pragma once

#include <istream>
#include <ostream>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include "kbmap/common.hpp"
#include "kbmap/graph.hpp"
#include "kbmap/random.hpp"

namespace kbmap {

struct WalkConfig {
    double lambda = 0.0;          // probability mass given to textual neighbors
    int walk_length = 20;         // nodes per walk (T)
    int walks_per_node = 10;
    std::uint64_t seed = 1;
    int threads = 1;

    void validate() const {
        if (lambda < 0.0 || lambda > 1.0) throw std::invalid_argument("lambda must be in [0,1]");
        if (walk_length < 1) throw std::invalid_argument("walk_length must be >= 1");
        if (walks_per_node < 1) throw std::invalid_argument("walks_per_node must be >= 1");
        if (threads < 1) throw std::invalid_argument("threads must be >= 1");
    }
};

struct Walk {
    std::vector<int> nodes;
    bool truncated = false;  // hit a dead end before reaching walk_length
};

struct WalkCorpus {
    std::vector<Walk> walks;

    std::set<int> vocabulary() const {
        std::set<int> v;
        for (const auto& w : walks) v.insert(w.nodes.begin(), w.nodes.end());
        return v;
    }
};

// Next-step categorical distribution at node n. Entity neighbors share
// (1-lambda) uniformly; textual neighbors share lambda proportionally to
// tf-idf. If one side is empty all mass goes to the other and lambda is
// irrelevant. Outcomes are ordered entities first, then textual, both
// ascending by id.
inline std::vector<std::pair<int, double>> step_distribution(const KbGraph& g, int n, double lambda) {
    std::vector<int> entities;
    std::vector<std::pair<int, double>> textual;
    g.neighbors(n, entities, textual);
    if (entities.empty() && textual.empty())
        throw std::invalid_argument("node '" + g.label(n) + "' has no neighbors");

    double entity_mass = entities.empty() ? 0.0 : (textual.empty() ? 1.0 : 1.0 - lambda);
    double textual_mass = textual.empty() ? 0.0 : (entities.empty() ? 1.0 : lambda);

    std::vector<std::pair<int, double>> dist;
    dist.reserve(entities.size() + textual.size());
    for (int e : entities) dist.emplace_back(e, entity_mass / static_cast<double>(entities.size()));
    double total_weight = 0.0;
    for (const auto& [t, w] : textual) total_weight += w;
    for (const auto& [t, w] : textual) dist.emplace_back(t, textual_mass * w / total_weight);
    return dist;
}

namespace detail {

// Cumulative-sum inversion; zero-probability outcomes are never drawn.
inline int sample_categorical(const std::vector<std::pair<int, double>>& dist, Rng& rng) {
    double u = rng.next_double();
    double cum = 0.0;
    for (std::size_t i = 0; i + 1 < dist.size(); ++i) {
        cum += dist[i].second;
        if (u < cum) return dist[i].first;
    }
    return dist.back().first;
}

}  // namespace detail

inline Walk sample_walk(const KbGraph& g, int start, const WalkConfig& cfg, Rng& rng) {
    Walk walk;
    walk.nodes.reserve(cfg.walk_length);
    walk.nodes.push_back(start);
    while (static_cast<int>(walk.nodes.size()) < cfg.walk_length) {
        int current = walk.nodes.back();
        if (g.adjacent(current).empty()) {
            walk.truncated = true;
            break;
        }
        auto dist = step_distribution(g, current, cfg.lambda);
        walk.nodes.push_back(detail::sample_categorical(dist, rng));
    }
    return walk;
}

// walks_per_node walks from every non-isolated node (entity and textual
// alike). At lambda = 0 textual nodes are unreachable and do not start walks
// either, so the corpus reduces to plain entity walks. Each (node, walk
// index) pair owns an independent seeded stream and output order is fixed,
// so the corpus is identical for any thread count.
inline WalkCorpus generate_corpus(const KbGraph& g, const WalkConfig& cfg) {
    cfg.validate();
    if (g.size() == 0) throw std::invalid_argument("empty graph");

    std::vector<int> starts;
    for (int n = 0; n < static_cast<int>(g.size()); ++n) {
        if (g.adjacent(n).empty()) continue;
        if (cfg.lambda == 0.0 && g.kind(n) == NodeKind::Textual) continue;
        starts.push_back(n);
    }

    WalkCorpus corpus;
    corpus.walks.resize(starts.size() * static_cast<std::size_t>(cfg.walks_per_node));

    auto run = [&](std::size_t begin, std::size_t end) {
        for (std::size_t si = begin; si < end; ++si) {
            int node = starts[si];
            for (int k = 0; k < cfg.walks_per_node; ++k) {
                Rng rng = substream(cfg.seed, static_cast<std::uint64_t>(node),
                                    static_cast<std::uint64_t>(k));
                corpus.walks[si * cfg.walks_per_node + k] = sample_walk(g, node, cfg, rng);
            }
        }
    };

    if (cfg.threads <= 1 || starts.size() < 2) {
        run(0, starts.size());
    } else {
        std::size_t n_threads = std::min<std::size_t>(cfg.threads, starts.size());
        std::vector<std::thread> pool;
        std::size_t chunk = (starts.size() + n_threads - 1) / n_threads;
        for (std::size_t t = 0; t < n_threads; ++t) {
            std::size_t begin = t * chunk;
            std::size_t end = std::min(starts.size(), begin + chunk);
            if (begin < end) pool.emplace_back(run, begin, end);
        }
        for (auto& th : pool) th.join();
    }
    return corpus;
}

// One walk per line, node labels space-separated. This is the skipgram input.
inline void save_corpus(const WalkCorpus& corpus, const KbGraph& g, std::ostream& out) {
    for (const auto& walk : corpus.walks) {
        for (std::size_t i = 0; i < walk.nodes.size(); ++i) {
            if (i) out << ' ';
            out << g.label(walk.nodes[i]);
        }
        out << '\n';
    }
}

inline std::vector<std::vector<std::string>> load_token_corpus(std::istream& in) {
    std::vector<std::vector<std::string>> walks;
    std::string line;
    while (std::getline(in, line)) {
        std::string_view sv = strip_cr(line);
        if (sv.empty()) continue;
        std::vector<std::string> tokens;
        for (auto part : split(sv, ' '))
            if (!part.empty()) tokens.emplace_back(part);
        if (!tokens.empty()) walks.push_back(std::move(tokens));
    }
    return walks;
}

}  // namespace kbmap
