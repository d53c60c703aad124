#pragma once

#include <algorithm>
#include <map>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "kbmap/common.hpp"
#include "kbmap/embedding.hpp"
#include "kbmap/pairs.hpp"
#include "kbmap/random.hpp"

namespace kbmap {

struct RankedResult {
    std::size_t query = 0;
    std::string gold;
    std::size_t rank = 0;  // 1-based within the full candidate index
};

struct MetricsReport {
    double mrr = 0.0;
    std::map<int, double> acc_at;
    std::size_t n_queries = 0;
};

// Rank of the gold entity under descending cosine with ascending-label
// tie-break; gold must be present in the index.
inline std::size_t gold_rank(std::span<const double> prediction, const std::string& gold,
                             const EmbeddingTable& index) {
    int gid = index.find(gold);
    if (gid < 0) throw std::invalid_argument("gold entity '" + gold + "' missing from index");
    double gold_cos = cosine(prediction, index.row(gid));
    std::size_t rank = 1;
    for (std::size_t i = 0; i < index.size(); ++i) {
        if (static_cast<int>(i) == gid) continue;
        double c = cosine(prediction, index.row(static_cast<int>(i)));
        if (c > gold_cos || (c == gold_cos && index.label(i) < gold)) ++rank;
    }
    return rank;
}

inline MetricsReport evaluate_retrieval(const std::vector<std::vector<double>>& predictions,
                                        const std::vector<std::string>& golds,
                                        const EmbeddingTable& index, const std::vector<int>& ks,
                                        std::vector<RankedResult>* ranks_out = nullptr) {
    if (predictions.size() != golds.size())
        throw std::invalid_argument("prediction/gold count mismatch");
    if (predictions.empty()) throw std::invalid_argument("no queries");

    MetricsReport report;
    report.n_queries = predictions.size();
    std::vector<std::size_t> ranks(predictions.size());
    for (std::size_t q = 0; q < predictions.size(); ++q) {
        ranks[q] = gold_rank(predictions[q], golds[q], index);
        report.mrr += 1.0 / static_cast<double>(ranks[q]);
        if (ranks_out) ranks_out->push_back({q, golds[q], ranks[q]});
    }
    report.mrr /= static_cast<double>(predictions.size());
    for (int k : ks) {
        if (k < 1) throw std::invalid_argument("accuracy cutoff must be >= 1");
        std::size_t hits = 0;
        for (auto r : ranks)
            if (r <= static_cast<std::size_t>(k)) ++hits;
        report.acc_at[k] = static_cast<double>(hits) / static_cast<double>(predictions.size());
    }
    return report;
}

inline void print_metrics(const MetricsReport& r, std::ostream& out) {
    out << "queries: " << r.n_queries << '\n';
    out << "MRR:     " << format_fixed(r.mrr, 4) << '\n';
    for (const auto& [k, acc] : r.acc_at)
        out << "Acc@" << k << ":   " << format_fixed(acc, 4) << '\n';
}

// Machine format: one `metric<TAB>value` record per line.
inline void save_metrics(const MetricsReport& r, std::ostream& out) {
    out << "n_queries\t" << r.n_queries << '\n';
    out << "mrr\t" << format_fixed(r.mrr, 6) << '\n';
    for (const auto& [k, acc] : r.acc_at) out << "acc@" << k << '\t' << format_fixed(acc, 6) << '\n';
}

// Mean of the available token vectors; OOV tokens are skipped.
inline std::vector<double> avg_vector_baseline(const std::vector<std::string>& tokens,
                                               const EmbeddingTable& word_space) {
    std::vector<double> acc(static_cast<std::size_t>(word_space.dim()), 0.0);
    std::size_t found = 0;
    for (const auto& t : tokens) {
        int id = word_space.find(t);
        if (id < 0) continue;
        auto v = word_space.row(id);
        for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += v[i];
        ++found;
    }
    if (found == 0) throw std::invalid_argument("no token has a vector in the word space");
    for (auto& v : acc) v /= static_cast<double>(found);
    return acc;
}

namespace detail {

// Cholesky solve of the SPD system G X = B; G is n x n, B/X are n x m.
inline std::vector<double> cholesky_solve(std::vector<double> g, std::vector<double> b,
                                          std::size_t n, std::size_t m) {
    for (std::size_t j = 0; j < n; ++j) {
        double diag = g[j * n + j];
        for (std::size_t k = 0; k < j; ++k) diag -= g[j * n + k] * g[j * n + k];
        if (diag <= 0.0) throw std::invalid_argument("matrix is not positive definite; increase ridge");
        diag = std::sqrt(diag);
        g[j * n + j] = diag;
        for (std::size_t i = j + 1; i < n; ++i) {
            double v = g[i * n + j];
            for (std::size_t k = 0; k < j; ++k) v -= g[i * n + k] * g[j * n + k];
            g[i * n + j] = v / diag;
        }
    }
    // Forward then back substitution, column block at once.
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t c = 0; c < m; ++c) {
            double v = b[i * m + c];
            for (std::size_t k = 0; k < i; ++k) v -= g[i * n + k] * b[k * m + c];
            b[i * m + c] = v / g[i * n + i];
        }
    for (std::size_t i = n; i-- > 0;)
        for (std::size_t c = 0; c < m; ++c) {
            double v = b[i * m + c];
            for (std::size_t k = i + 1; k < n; ++k) v -= g[k * n + i] * b[k * m + c];
            b[i * m + c] = v / g[i * n + i];
        }
    return b;
}

}  // namespace detail

// Ridge least squares A = argmin ||XA - Y||_F^2 + ridge ||A||_F^2 via the
// normal equations; X is n x d row-major, Y is n x e, A is d x e.
inline std::vector<double> least_squares_map(const std::vector<double>& x,
                                             const std::vector<double>& y, std::size_t n,
                                             std::size_t d, std::size_t e, double ridge = 1e-6) {
    if (x.size() != n * d || y.size() != n * e) throw std::invalid_argument("matrix size mismatch");
    if (n < 1) throw std::invalid_argument("need at least one row");
    if (ridge < 0.0) throw std::invalid_argument("ridge must be >= 0");
    std::vector<double> gram(d * d, 0.0), xty(d * e, 0.0);
    for (std::size_t r = 0; r < n; ++r) {
        const double* xr = x.data() + r * d;
        const double* yr = y.data() + r * e;
        for (std::size_t i = 0; i < d; ++i) {
            for (std::size_t j = i; j < d; ++j) gram[i * d + j] += xr[i] * xr[j];
            for (std::size_t c = 0; c < e; ++c) xty[i * e + c] += xr[i] * yr[c];
        }
    }
    for (std::size_t i = 0; i < d; ++i) {
        gram[i * d + i] += ridge;
        for (std::size_t j = 0; j < i; ++j) gram[i * d + j] = gram[j * d + i];
    }
    return detail::cholesky_solve(std::move(gram), std::move(xty), d, e);
}

inline double ridge_objective(const std::vector<double>& x, const std::vector<double>& y,
                              const std::vector<double>& a, std::size_t n, std::size_t d,
                              std::size_t e, double ridge) {
    double obj = 0.0;
    for (std::size_t r = 0; r < n; ++r)
        for (std::size_t c = 0; c < e; ++c) {
            double pred = 0.0;
            for (std::size_t i = 0; i < d; ++i) pred += x[r * d + i] * a[i * e + c];
            double res = pred - y[r * e + c];
            obj += res * res;
        }
    for (double v : a) obj += ridge * v * v;
    return obj;
}

// ---------------------------------------------------------------------------
// One-vs-rest linear classifier trained by SGD on hinge loss with L2
// (lambda = 1e-4, 100 epochs), the linear-SVM stand-in for node
// classification.

class LinearClassifier {
public:
    void train(const std::vector<std::vector<double>>& xs, const std::vector<int>& ys,
               int n_classes, std::uint64_t seed) {
        if (xs.empty() || xs.size() != ys.size()) throw std::invalid_argument("bad training data");
        n_classes_ = n_classes;
        dim_ = xs[0].size();
        w_.assign(static_cast<std::size_t>(n_classes) * dim_, 0.0);
        b_.assign(static_cast<std::size_t>(n_classes), 0.0);

        const double lambda = 1e-4;
        const int epochs = 100;
        std::vector<std::size_t> order(xs.size());
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
        Rng rng(seed);
        std::size_t t = 0;
        for (int epoch = 0; epoch < epochs; ++epoch) {
            rng.shuffle(order);
            for (std::size_t idx : order) {
                double lr = 1.0 / (1.0 + lambda * static_cast<double>(t++)) * 0.1;
                const auto& x = xs[idx];
                for (int c = 0; c < n_classes_; ++c) {
                    double y = ys[idx] == c ? 1.0 : -1.0;
                    double* w = w_.data() + static_cast<std::size_t>(c) * dim_;
                    double margin = b_[static_cast<std::size_t>(c)];
                    for (std::size_t i = 0; i < dim_; ++i) margin += w[i] * x[i];
                    margin *= y;
                    for (std::size_t i = 0; i < dim_; ++i) w[i] -= lr * lambda * w[i];
                    if (margin < 1.0) {
                        for (std::size_t i = 0; i < dim_; ++i) w[i] += lr * y * x[i];
                        b_[static_cast<std::size_t>(c)] += lr * y;
                    }
                }
            }
        }
    }

    int predict(const std::vector<double>& x) const {
        int best = 0;
        double best_score = -1e300;
        for (int c = 0; c < n_classes_; ++c) {
            double score = b_[static_cast<std::size_t>(c)];
            const double* w = w_.data() + static_cast<std::size_t>(c) * dim_;
            for (std::size_t i = 0; i < dim_; ++i) score += w[i] * x[i];
            if (score > best_score) {
                best_score = score;
                best = c;
            }
        }
        return best;
    }

private:
    int n_classes_ = 0;
    std::size_t dim_ = 0;
    std::vector<double> w_;
    std::vector<double> b_;
};

// Stratified split + one-vs-rest training; returns held-out accuracy.
inline double linear_classifier_accuracy(const std::vector<std::vector<double>>& vectors,
                                         const std::vector<std::string>& labels, double train_ratio,
                                         std::uint64_t seed) {
    if (vectors.size() != labels.size() || vectors.empty())
        throw std::invalid_argument("bad classification data");
    if (train_ratio <= 0.0 || train_ratio >= 1.0)
        throw std::invalid_argument("train ratio must be in (0,1)");

    std::map<std::string, int> class_ids;
    for (const auto& l : labels) class_ids.emplace(l, 0);
    if (class_ids.size() < 2) throw std::invalid_argument("need at least 2 classes");
    int next = 0;
    std::vector<std::string> class_names;
    for (auto& [name, id] : class_ids) {
        id = next++;
        class_names.push_back(name);
    }

    std::map<int, std::vector<std::size_t>> by_class;
    for (std::size_t i = 0; i < labels.size(); ++i) by_class[class_ids.at(labels[i])].push_back(i);

    Rng rng(seed);
    std::vector<std::size_t> train_idx, test_idx;
    for (auto& [cls, idxs] : by_class) {
        rng.shuffle(idxs);
        std::size_t n_train = static_cast<std::size_t>(train_ratio * static_cast<double>(idxs.size()));
        if (n_train == 0)
            throw std::invalid_argument("class '" + class_names[static_cast<std::size_t>(cls)] +
                                        "' absent from training split");
        if (n_train == idxs.size()) --n_train;
        for (std::size_t i = 0; i < idxs.size(); ++i)
            (i < n_train ? train_idx : test_idx).push_back(idxs[i]);
    }
    if (test_idx.empty()) throw std::invalid_argument("empty test split");

    std::vector<std::vector<double>> train_x;
    std::vector<int> train_y;
    for (auto i : train_idx) {
        train_x.push_back(vectors[i]);
        train_y.push_back(class_ids.at(labels[i]));
    }
    LinearClassifier clf;
    clf.train(train_x, train_y, static_cast<int>(class_ids.size()), seed ^ 0xC1A55ULL);

    std::size_t correct = 0;
    for (auto i : test_idx)
        if (clf.predict(vectors[i]) == class_ids.at(labels[i])) ++correct;
    return static_cast<double>(correct) / static_cast<double>(test_idx.size());
}

// ---------------------------------------------------------------------------
// Seen/unseen protocol. Seen: the test set is a sample of the training set.
// Unseen: the test set is disjoint and its entity set is reported so the
// caller can strip those entities' textual features from the graph.

enum class SplitMode { Seen, Unseen };

struct SplitResult {
    std::vector<TrainingPair> train, test;
    std::set<std::string> test_entities;
};

inline SplitResult seen_unseen_split(const std::vector<TrainingPair>& pairs, SplitMode mode,
                                     std::size_t holdout, std::uint64_t seed) {
    if (holdout == 0 || holdout > pairs.size() || (mode == SplitMode::Unseen && holdout >= pairs.size()))
        throw std::invalid_argument("holdout size out of range");
    std::vector<std::size_t> order(pairs.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    Rng rng(seed);
    rng.shuffle(order);

    SplitResult out;
    for (std::size_t i = 0; i < holdout; ++i) {
        out.test.push_back(pairs[order[i]]);
        out.test_entities.insert(pairs[order[i]].entity);
    }
    if (mode == SplitMode::Seen) {
        out.train = pairs;
        out.test_entities.clear();  // nothing is hidden in seen mode
    } else {
        for (std::size_t i = holdout; i < order.size(); ++i) out.train.push_back(pairs[order[i]]);
    }
    return out;
}

}  // namespace kbmap
