#pragma once

#include <atomic>
#include <cmath>
#include <span>
#include <string>
#include <thread>
#include <unordered_map>
#include <vector>

#include "kbmap/embedding.hpp"
#include "kbmap/random.hpp"

namespace kbmap {

struct SkipgramConfig {
    int dim = 150;
    int window = 5;
    int negatives = 5;
    int epochs = 5;
    double learning_rate = 0.025;
    int min_count = 0;
    std::uint64_t seed = 1;
    int threads = 1;

    void validate() const {
        if (dim < 1) throw std::invalid_argument("dim must be >= 1");
        if (window < 1) throw std::invalid_argument("window must be >= 1");
        if (negatives < 1) throw std::invalid_argument("negatives must be >= 1");
        if (epochs < 1) throw std::invalid_argument("epochs must be >= 1");
        if (learning_rate <= 0.0) throw std::invalid_argument("learning rate must be > 0");
        if (min_count < 0) throw std::invalid_argument("min_count must be >= 0");
        if (threads < 1) throw std::invalid_argument("threads must be >= 1");
    }
};

// Emits (center, context) = (n_t, n_{t+j}) for -c <= j <= c, j != 0, clipped
// at walk bounds. The window is always full (no dynamic shrinking).
template <typename Fn>
void extract_pairs(std::span<const int> walk, int window, Fn&& fn) {
    const int len = static_cast<int>(walk.size());
    for (int t = 0; t < len; ++t)
        for (int j = -window; j <= window; ++j) {
            if (j == 0) continue;
            int s = t + j;
            if (s < 0 || s >= len) continue;
            fn(walk[t], walk[s]);
        }
}

inline std::vector<std::pair<int, int>> extract_pairs(std::span<const int> walk, int window) {
    std::vector<std::pair<int, int>> out;
    extract_pairs(walk, window, [&](int c, int x) { out.emplace_back(c, x); });
    return out;
}

// Surrogate for one training triple: -log s(u.v) - sum_neg log s(-u.v_neg).
inline double pair_loss(std::span<const double> center, std::span<const double> context,
                        const std::vector<std::span<const double>>& negatives) {
    double loss = -std::log(sigmoid(dot(center, context)));
    for (const auto& neg : negatives) loss += -std::log(sigmoid(-dot(center, neg)));
    return loss;
}

// Analytic gradient of pair_loss; d_targets[0] is the context, the rest the
// negatives. The SGD step in train() applies exactly -lr times this.
inline double pair_loss_grad(std::span<const double> center, std::span<const double> context,
                             const std::vector<std::span<const double>>& negatives,
                             std::vector<double>& d_center,
                             std::vector<std::vector<double>>& d_targets) {
    const std::size_t dim = center.size();
    d_center.assign(dim, 0.0);
    d_targets.assign(negatives.size() + 1, std::vector<double>(dim, 0.0));
    double s_pos = sigmoid(dot(center, context));
    for (std::size_t d = 0; d < dim; ++d) {
        d_center[d] += (s_pos - 1.0) * context[d];
        d_targets[0][d] = (s_pos - 1.0) * center[d];
    }
    double loss = -std::log(s_pos);
    for (std::size_t k = 0; k < negatives.size(); ++k) {
        double s_neg = sigmoid(dot(center, negatives[k]));
        for (std::size_t d = 0; d < dim; ++d) {
            d_center[d] += s_neg * negatives[k][d];
            d_targets[k + 1][d] = s_neg * center[d];
        }
        loss += -std::log(1.0 - s_neg);
    }
    return loss;
}

// Draws negatives from the unigram^0.75 distribution by cumulative-sum
// inversion, so sampled frequencies match the weights exactly.
class NegativeSampler {
public:
    explicit NegativeSampler(const std::vector<std::size_t>& counts) {
        cdf_.reserve(counts.size());
        double cum = 0.0;
        for (std::size_t c : counts) {
            cum += std::pow(static_cast<double>(c), 0.75);
            cdf_.push_back(cum);
        }
        if (cdf_.empty() || cum <= 0.0) throw std::invalid_argument("empty vocabulary");
    }

    int sample(Rng& rng) const {
        double u = rng.next_double() * cdf_.back();
        auto it = std::upper_bound(cdf_.begin(), cdf_.end(), u);
        if (it == cdf_.end()) --it;
        return static_cast<int>(it - cdf_.begin());
    }

    double probability(int i) const {
        double lo = i == 0 ? 0.0 : cdf_[static_cast<std::size_t>(i) - 1];
        return (cdf_[static_cast<std::size_t>(i)] - lo) / cdf_.back();
    }

private:
    std::vector<double> cdf_;
};

struct SkipgramResult {
    EmbeddingTable table;            // input vectors
    std::vector<double> loss_history;  // mean surrogate loss on a frozen pair sample, per epoch
};

namespace detail {

struct SgVocab {
    std::vector<std::string> labels;  // first-seen order
    std::vector<std::size_t> counts;
    std::unordered_map<std::string, int> index;
    std::vector<std::vector<int>> walks;  // corpus with filtered tokens removed
};

inline SgVocab build_vocab(const std::vector<std::vector<std::string>>& corpus, int min_count) {
    SgVocab v;
    for (const auto& walk : corpus)
        for (const auto& tok : walk) {
            auto [it, inserted] = v.index.emplace(tok, static_cast<int>(v.labels.size()));
            if (inserted) {
                v.labels.push_back(tok);
                v.counts.push_back(0);
            }
            ++v.counts[static_cast<std::size_t>(it->second)];
        }
    if (min_count > 1) {
        std::vector<int> remap(v.labels.size(), -1);
        std::vector<std::string> labels;
        std::vector<std::size_t> counts;
        for (std::size_t i = 0; i < v.labels.size(); ++i) {
            if (v.counts[i] < static_cast<std::size_t>(min_count)) continue;
            remap[i] = static_cast<int>(labels.size());
            labels.push_back(v.labels[i]);
            counts.push_back(v.counts[i]);
        }
        std::unordered_map<std::string, int> index;
        for (std::size_t i = 0; i < labels.size(); ++i) index.emplace(labels[i], static_cast<int>(i));
        for (const auto& walk : corpus) {
            std::vector<int> ids;
            for (const auto& tok : walk) {
                int old = v.index.at(tok);
                if (remap[static_cast<std::size_t>(old)] >= 0)
                    ids.push_back(remap[static_cast<std::size_t>(old)]);
            }
            if (!ids.empty()) v.walks.push_back(std::move(ids));
        }
        v.labels = std::move(labels);
        v.counts = std::move(counts);
        v.index = std::move(index);
    } else {
        for (const auto& walk : corpus) {
            std::vector<int> ids;
            ids.reserve(walk.size());
            for (const auto& tok : walk) ids.push_back(v.index.at(tok));
            v.walks.push_back(std::move(ids));
        }
    }
    return v;
}

}  // namespace detail

// Skipgram with negative sampling over the walk corpus. Input vectors start
// uniform in [-0.5/dim, 0.5/dim], output vectors at zero; the learning rate
// decays linearly to 1e-4 over all pairs of all epochs. Single-threaded mode
// is bit-reproducible given the seed; multi-threaded mode shares updates
// lock-free across walk shards and is checked statistically only.
inline SkipgramResult train_skipgram(const std::vector<std::vector<std::string>>& corpus,
                                     const SkipgramConfig& cfg) {
    cfg.validate();
    detail::SgVocab vocab = detail::build_vocab(corpus, cfg.min_count);
    if (vocab.labels.empty()) throw std::invalid_argument("empty corpus after min_count filtering");

    const std::size_t v_size = vocab.labels.size();
    const std::size_t dim = static_cast<std::size_t>(cfg.dim);
    std::vector<double> in(v_size * dim), out(v_size * dim, 0.0);
    {
        Rng rng(cfg.seed);
        for (auto& x : in) x = (rng.next_double() - 0.5) / static_cast<double>(cfg.dim);
    }

    NegativeSampler sampler(vocab.counts);

    std::size_t pairs_per_epoch = 0;
    for (const auto& walk : vocab.walks)
        extract_pairs(std::span<const int>(walk), cfg.window, [&](int, int) { ++pairs_per_epoch; });
    const double total_pairs =
        static_cast<double>(pairs_per_epoch) * static_cast<double>(cfg.epochs);

    // Frozen evaluation sample: up to 1000 pairs with fixed negatives.
    struct EvalTriple {
        int center, context;
        std::vector<int> negs;
    };
    std::vector<EvalTriple> eval_sample;
    if (pairs_per_epoch > 0) {
        Rng eval_rng(cfg.seed ^ 0x5EEDCAFEULL);
        std::size_t stride = std::max<std::size_t>(1, pairs_per_epoch / 1000);
        std::size_t seen = 0;
        for (const auto& walk : vocab.walks)
            extract_pairs(std::span<const int>(walk), cfg.window, [&](int c, int x) {
                if (seen++ % stride != 0) return;
                EvalTriple t{c, x, {}};
                for (int k = 0; k < cfg.negatives; ++k) t.negs.push_back(sampler.sample(eval_rng));
                eval_sample.push_back(std::move(t));
            });
    }
    auto eval_loss = [&]() {
        if (eval_sample.empty()) return 0.0;
        double total = 0.0;
        for (const auto& t : eval_sample) {
            std::span<const double> u(in.data() + static_cast<std::size_t>(t.center) * dim, dim);
            std::vector<std::span<const double>> negs;
            negs.reserve(t.negs.size());
            for (int n : t.negs)
                negs.emplace_back(out.data() + static_cast<std::size_t>(n) * dim, dim);
            total += pair_loss(u, {out.data() + static_cast<std::size_t>(t.context) * dim, dim}, negs);
        }
        return total / static_cast<double>(eval_sample.size());
    };

    const double lr0 = cfg.learning_rate;
    const double lr_min = 1e-4;
    std::atomic<std::size_t> processed{0};
    std::vector<double> neu_scratch;  // single-thread scratch

    auto train_walks = [&](std::size_t begin, std::size_t end, Rng& rng, std::vector<double>& neu) {
        neu.resize(dim);
        for (std::size_t wi = begin; wi < end; ++wi) {
            extract_pairs(std::span<const int>(vocab.walks[wi]), cfg.window, [&](int center, int context) {
                std::size_t done = processed.fetch_add(1, std::memory_order_relaxed);
                double frac = total_pairs > 0 ? static_cast<double>(done) / total_pairs : 0.0;
                double lr = std::max(lr_min, lr0 - (lr0 - lr_min) * frac);

                double* u = in.data() + static_cast<std::size_t>(center) * dim;
                std::fill(neu.begin(), neu.end(), 0.0);
                for (int k = 0; k <= cfg.negatives; ++k) {
                    int target;
                    double label;
                    if (k == 0) {
                        target = context;
                        label = 1.0;
                    } else {
                        target = sampler.sample(rng);
                        if (target == context) continue;
                        label = 0.0;
                    }
                    double* v = out.data() + static_cast<std::size_t>(target) * dim;
                    double f = 0.0;
                    for (std::size_t d = 0; d < dim; ++d) f += u[d] * v[d];
                    double g = (label - sigmoid(f)) * lr;
                    for (std::size_t d = 0; d < dim; ++d) neu[d] += g * v[d];
                    for (std::size_t d = 0; d < dim; ++d) v[d] += g * u[d];
                }
                for (std::size_t d = 0; d < dim; ++d) u[d] += neu[d];
            });
        }
    };

    SkipgramResult result;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        if (cfg.threads <= 1 || vocab.walks.size() < 2) {
            Rng rng = substream(cfg.seed, 0xE0ACULL, static_cast<std::uint64_t>(epoch));
            train_walks(0, vocab.walks.size(), rng, neu_scratch);
        } else {
            std::size_t n_threads = std::min<std::size_t>(cfg.threads, vocab.walks.size());
            std::size_t chunk = (vocab.walks.size() + n_threads - 1) / n_threads;
            std::vector<std::thread> pool;
            for (std::size_t t = 0; t < n_threads; ++t) {
                std::size_t begin = t * chunk;
                std::size_t end = std::min(vocab.walks.size(), begin + chunk);
                if (begin >= end) continue;
                pool.emplace_back([&, begin, end, t, epoch] {
                    Rng rng = substream(cfg.seed ^ (t + 1), 0xE0ACULL, static_cast<std::uint64_t>(epoch));
                    std::vector<double> neu;
                    train_walks(begin, end, rng, neu);
                });
            }
            for (auto& th : pool) th.join();
        }
        result.loss_history.push_back(eval_loss());
    }

    result.table = EmbeddingTable(cfg.dim);
    for (std::size_t i = 0; i < v_size; ++i)
        result.table.add(vocab.labels[i], std::span<const double>(in.data() + i * dim, dim));
    return result;
}

}  // namespace kbmap
