#pragma once

#include <algorithm>
#include <map>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

#include "kbmap/common.hpp"
#include "kbmap/embedding.hpp"
#include "kbmap/nn.hpp"
#include "kbmap/pairs.hpp"
#include "kbmap/random.hpp"

namespace kbmap {

struct MsLstmConfig {
    int embed_dim = 150;   // generic/sense vector width (d)
    int senses = 3;        // sense vectors per word (k)
    int attn_hidden = 50;  // attention hidden units per sense (d_a)
    int hidden_dim = 200;  // LSTM hidden state width
    int output_dim = 150;  // KB space dimension
    double dropout_rate = 0.3;
    int batch_size = 32;
    int epochs = 100;
    std::uint64_t seed = 1;
    bool sense_updates = true;    // additive context updates of the senses
    bool sense_gradients = true;  // backprop MSE into the sense vectors

    void validate() const {
        if (embed_dim < 1 || senses < 1 || attn_hidden < 1 || hidden_dim < 1 || output_dim < 1)
            throw std::invalid_argument("model dimensions must be >= 1");
        if (dropout_rate < 0.0 || dropout_rate >= 1.0)
            throw std::invalid_argument("dropout rate must be in [0,1)");
        if (batch_size < 1) throw std::invalid_argument("batch size must be >= 1");
        if (epochs < 1) throw std::invalid_argument("epochs must be >= 1");
    }
};

// Per-word generic vector plus k sense vectors. `<unk>` is always present at
// index 0 and absorbs out-of-vocabulary tokens at inference.
class SenseBank {
public:
    static constexpr const char* kUnk = "<unk>";

    SenseBank() = default;
    SenseBank(const std::vector<std::string>& vocabulary, int dim, int senses, Rng& rng)
        : d_(dim), k_(senses) {
        add_word(kUnk);
        for (const auto& w : vocabulary) add_word(w);
        generic_ = Mat(static_cast<int>(words_.size()), d_);
        senses_ = Mat(static_cast<int>(words_.size()), k_ * d_);
        const double scale = 1.0 / std::sqrt(static_cast<double>(d_));
        generic_.init_uniform(rng, scale);
        // Senses start as the generic vector plus small noise: distinguishable
        // but clustered around a common centroid.
        for (int w = 0; w < generic_.rows; ++w)
            for (int j = 0; j < k_; ++j)
                for (int c = 0; c < d_; ++c)
                    senses_(w, j * d_ + c) = generic_(w, c) + rng.gaussian(0.0, 0.01);
    }

    int dim() const { return d_; }
    int senses() const { return k_; }
    std::size_t size() const { return words_.size(); }
    const std::string& word(int i) const { return words_.at(static_cast<std::size_t>(i)); }

    bool contains(const std::string& w) const { return index_.count(w) > 0; }

    // OOV words resolve to <unk>.
    int lookup(const std::string& w) const {
        auto it = index_.find(w);
        return it == index_.end() ? 0 : it->second;
    }

    std::span<double> generic_of(int w) { return generic_.row(w); }
    std::span<const double> generic_of(int w) const { return generic_.row(w); }
    std::span<double> sense_of(int w, int j) {
        return senses_.row(w).subspan(static_cast<std::size_t>(j) * d_, static_cast<std::size_t>(d_));
    }
    std::span<const double> sense_of(int w, int j) const {
        return senses_.row(w).subspan(static_cast<std::size_t>(j) * d_, static_cast<std::size_t>(d_));
    }

    Mat& generic_params() { return generic_; }
    Mat& sense_params() { return senses_; }
    const Mat& generic_params() const { return generic_; }
    const Mat& sense_params() const { return senses_; }

private:
    void add_word(const std::string& w) {
        auto [it, inserted] = index_.emplace(w, static_cast<int>(words_.size()));
        if (inserted) words_.push_back(w);
    }

    int d_ = 0, k_ = 0;
    std::vector<std::string> words_;
    std::unordered_map<std::string, int> index_;
    Mat generic_;  // V x d
    Mat senses_;   // V x (k*d)
};

struct AttentionParams {
    Mat w;                  // d_a x d
    Mat u;                  // d_a x d
    std::vector<double> b;  // d_a
    Mat wp;                 // k x d_a (one scoring vector per sense)

    AttentionParams() = default;
    AttentionParams(int d, int d_a, int k)
        : w(d_a, d), u(d_a, d), b(static_cast<std::size_t>(d_a), 0.0), wp(k, d_a) {}

    void init(Rng& rng, int d, int d_a) {
        w.init_uniform(rng, 1.0 / std::sqrt(static_cast<double>(d)));
        u.init_uniform(rng, 1.0 / std::sqrt(static_cast<double>(d)));
        wp.init_uniform(rng, 1.0 / std::sqrt(static_cast<double>(d_a)));
    }
};

// Mean of the generic vectors of all other words in the sequence; the zero
// vector for single-token input.
inline std::vector<double> context_vector(const SenseBank& bank, const std::vector<int>& token_ids,
                                          std::size_t i) {
    if (i >= token_ids.size()) throw std::invalid_argument("context position out of range");
    std::vector<double> c(static_cast<std::size_t>(bank.dim()), 0.0);
    if (token_ids.size() < 2) return c;
    for (std::size_t l = 0; l < token_ids.size(); ++l) {
        if (l == i) continue;
        axpy(1.0, bank.generic_of(token_ids[l]), c);
    }
    double inv = 1.0 / static_cast<double>(token_ids.size() - 1);
    for (auto& v : c) v *= inv;
    return c;
}

struct AttnCache {
    int word = 0;
    std::vector<double> context;   // c_i
    Mat s_hat;                     // k x d_a, tanh(W s_ij + U c_i + b)
    std::vector<double> logits;    // k
    std::vector<double> probs;     // k
    std::vector<double> attended;  // d
};

// Soft attention over the k senses of `word` given context c:
// logit_j = w'_j . tanh(W s_j + U c + b), p = softmax, attended = sum p_j s_j.
inline AttnCache sense_attention(const SenseBank& bank, const AttentionParams& att, int word,
                                 std::vector<double> context) {
    const int k = bank.senses();
    const int d_a = static_cast<int>(att.b.size());
    AttnCache cache;
    cache.word = word;
    cache.context = std::move(context);
    cache.s_hat = Mat(k, d_a);
    cache.logits.resize(static_cast<std::size_t>(k));

    std::vector<double> pre(static_cast<std::size_t>(d_a));
    for (int j = 0; j < k; ++j) {
        pre.assign(att.b.begin(), att.b.end());
        matvec_add(att.w, bank.sense_of(word, j), pre);
        matvec_add(att.u, cache.context, pre);
        for (int a = 0; a < d_a; ++a) cache.s_hat(j, a) = std::tanh(pre[static_cast<std::size_t>(a)]);
        cache.logits[static_cast<std::size_t>(j)] = dot(att.wp.row(j), cache.s_hat.row(j));
    }
    cache.probs = softmax(cache.logits);
    cache.attended.assign(static_cast<std::size_t>(bank.dim()), 0.0);
    for (int j = 0; j < k; ++j) axpy(cache.probs[static_cast<std::size_t>(j)], bank.sense_of(word, j), cache.attended);
    return cache;
}

// Context update of one sense vector: s += (s.c) c. Senses orthogonal to the
// context are fixed points.
inline void sense_update(SenseBank& bank, int word, int j, std::span<const double> context) {
    auto s = bank.sense_of(word, j);
    double sim = dot(s, context);
    axpy(sim, context, s);
}

// Eq. 3 style objective: mean over examples of the squared Euclidean residual
// (no division by dimension).
inline double mse_loss(const std::vector<std::vector<double>>& predictions,
                       const std::vector<std::vector<double>>& targets) {
    if (predictions.size() != targets.size())
        throw std::invalid_argument("prediction/target count mismatch");
    if (predictions.empty()) throw std::invalid_argument("empty prediction list");
    double total = 0.0;
    for (std::size_t i = 0; i < predictions.size(); ++i) {
        if (predictions[i].size() != targets[i].size())
            throw std::invalid_argument("prediction/target dim mismatch");
        for (std::size_t d = 0; d < predictions[i].size(); ++d) {
            double r = predictions[i][d] - targets[i][d];
            total += r * r;
        }
    }
    return total / static_cast<double>(predictions.size());
}

struct MsLstmGrads {
    Mat generic, senses;
    Mat att_w, att_u, att_wp;
    std::vector<double> att_b;
    LstmGrads lstm1, lstm2;
    Mat proj_w;
    std::vector<double> proj_b;

    void zero() {
        generic.zero();
        senses.zero();
        att_w.zero();
        att_u.zero();
        att_wp.zero();
        std::fill(att_b.begin(), att_b.end(), 0.0);
        lstm1.zero();
        lstm2.zero();
        proj_w.zero();
        std::fill(proj_b.begin(), proj_b.end(), 0.0);
    }
};

struct MsLstmForwardCache {
    std::vector<int> token_ids;
    std::vector<AttnCache> attn;
    std::vector<std::vector<double>> drop1, drop2;  // inverted dropout masks
    std::vector<LstmStepCache> lstm1, lstm2;
    std::vector<double> y_hat;
};

// Sense bank + attention disambiguation + 2-layer LSTM composer + affine
// projection into the KB space, trained on MSE against target entity vectors.
class MsLstmModel {
public:
    MsLstmConfig cfg;
    SenseBank bank;
    AttentionParams att;
    LstmCellParams lstm1, lstm2;
    Mat proj_w;
    std::vector<double> proj_b;

    MsLstmModel() = default;

    MsLstmModel(MsLstmConfig config, const std::vector<std::string>& vocabulary) : cfg(config) {
        cfg.validate();
        Rng rng = substream(cfg.seed, 0x1417ULL, 0);
        bank = SenseBank(vocabulary, cfg.embed_dim, cfg.senses, rng);
        att = AttentionParams(cfg.embed_dim, cfg.attn_hidden, cfg.senses);
        att.init(rng, cfg.embed_dim, cfg.attn_hidden);
        lstm1 = LstmCellParams(cfg.embed_dim, cfg.hidden_dim);
        lstm1.init(rng);
        lstm2 = LstmCellParams(cfg.hidden_dim, cfg.hidden_dim);
        lstm2.init(rng);
        proj_w = Mat(cfg.output_dim, cfg.hidden_dim);
        proj_w.init_uniform(rng, 1.0 / std::sqrt(static_cast<double>(cfg.hidden_dim)));
        proj_b.assign(static_cast<std::size_t>(cfg.output_dim), 0.0);
    }

    std::vector<int> to_ids(const std::vector<std::string>& tokens) const {
        std::vector<int> ids;
        ids.reserve(tokens.size());
        for (const auto& t : tokens) ids.push_back(bank.lookup(t));
        return ids;
    }

    // Inference disables dropout; sense updates never run inside forward.
    void forward(const std::vector<int>& token_ids, bool training, Rng& rng,
                 MsLstmForwardCache& cache) const {
        if (token_ids.empty()) throw std::invalid_argument("empty token sequence");
        const std::size_t len = token_ids.size();
        const int hid = cfg.hidden_dim;
        cache.token_ids = token_ids;
        cache.attn.resize(len);
        cache.drop1.resize(len);
        cache.drop2.resize(len);
        cache.lstm1.resize(len);
        cache.lstm2.resize(len);

        std::vector<double> h1(static_cast<std::size_t>(hid), 0.0), c1 = h1;
        std::vector<double> h2 = h1, c2 = h1;
        std::vector<double> x1(static_cast<std::size_t>(cfg.embed_dim));
        std::vector<double> x2(static_cast<std::size_t>(hid));
        const bool drop = training && cfg.dropout_rate > 0.0;

        for (std::size_t i = 0; i < len; ++i) {
            cache.attn[i] = sense_attention(bank, att, token_ids[i], context_vector(bank, token_ids, i));

            if (drop) {
                cache.drop1[i] = dropout_mask(static_cast<std::size_t>(cfg.embed_dim), cfg.dropout_rate, true, rng);
                for (int d = 0; d < cfg.embed_dim; ++d)
                    x1[static_cast<std::size_t>(d)] = cache.attn[i].attended[static_cast<std::size_t>(d)] * cache.drop1[i][static_cast<std::size_t>(d)];
            } else {
                cache.drop1[i].clear();
                x1 = cache.attn[i].attended;
            }
            lstm_step(lstm1, x1, h1, c1, cache.lstm1[i]);
            h1 = cache.lstm1[i].h;
            c1 = cache.lstm1[i].c;

            if (drop) {
                cache.drop2[i] = dropout_mask(static_cast<std::size_t>(hid), cfg.dropout_rate, true, rng);
                for (int d = 0; d < hid; ++d)
                    x2[static_cast<std::size_t>(d)] = h1[static_cast<std::size_t>(d)] * cache.drop2[i][static_cast<std::size_t>(d)];
            } else {
                cache.drop2[i].clear();
                x2 = h1;
            }
            lstm_step(lstm2, x2, h2, c2, cache.lstm2[i]);
            h2 = cache.lstm2[i].h;
            c2 = cache.lstm2[i].c;
        }

        cache.y_hat = proj_b;
        matvec_add(proj_w, h2, cache.y_hat);
    }

    // Predicted KB vector for a token sequence (inference mode).
    std::vector<double> compose(const std::vector<std::string>& tokens) const {
        Rng rng(0);
        MsLstmForwardCache cache;
        forward(to_ids(tokens), false, rng, cache);
        return cache.y_hat;
    }

    MsLstmGrads make_grads() const {
        MsLstmGrads g;
        g.generic = Mat(static_cast<int>(bank.size()), cfg.embed_dim);
        g.senses = Mat(static_cast<int>(bank.size()), cfg.senses * cfg.embed_dim);
        g.att_w = Mat(cfg.attn_hidden, cfg.embed_dim);
        g.att_u = Mat(cfg.attn_hidden, cfg.embed_dim);
        g.att_wp = Mat(cfg.senses, cfg.attn_hidden);
        g.att_b.assign(static_cast<std::size_t>(cfg.attn_hidden), 0.0);
        g.lstm1 = LstmGrads(lstm1);
        g.lstm2 = LstmGrads(lstm2);
        g.proj_w = Mat(cfg.output_dim, cfg.hidden_dim);
        g.proj_b.assign(static_cast<std::size_t>(cfg.output_dim), 0.0);
        return g;
    }

    // Accumulates parameter gradients for one example given dL/d y_hat.
    void backward(const MsLstmForwardCache& cache, std::span<const double> d_yhat,
                  MsLstmGrads& grads) const {
        const std::size_t len = cache.token_ids.size();
        const int hid = cfg.hidden_dim;
        const int d = cfg.embed_dim;
        const int k = cfg.senses;
        const int d_a = cfg.attn_hidden;

        // Projection.
        outer_add(grads.proj_w, d_yhat, cache.lstm2[len - 1].h);
        axpy(1.0, d_yhat, grads.proj_b);

        std::vector<double> dh2(static_cast<std::size_t>(hid), 0.0);
        mat_t_vec_add(proj_w, d_yhat, dh2);

        // LSTM layer 2 backward through time.
        std::vector<double> dc2(static_cast<std::size_t>(hid), 0.0);
        std::vector<std::vector<double>> dh1(len, std::vector<double>(static_cast<std::size_t>(hid), 0.0));
        std::vector<double> dx2(static_cast<std::size_t>(hid));
        for (std::size_t i = len; i-- > 0;) {
            std::fill(dx2.begin(), dx2.end(), 0.0);
            std::vector<double> dh2_prev(static_cast<std::size_t>(hid), 0.0);
            std::vector<double> dc2_prev(static_cast<std::size_t>(hid), 0.0);
            lstm_step_backward(lstm2, cache.lstm2[i], dh2, dc2, grads.lstm2, dx2, dh2_prev, dc2_prev);
            if (cache.drop2[i].empty()) {
                dh1[i] = dx2;
            } else {
                for (int j = 0; j < hid; ++j)
                    dh1[i][static_cast<std::size_t>(j)] = dx2[static_cast<std::size_t>(j)] * cache.drop2[i][static_cast<std::size_t>(j)];
            }
            dh2 = std::move(dh2_prev);
            dc2 = std::move(dc2_prev);
        }

        // LSTM layer 1 backward through time.
        std::vector<double> dh1_carry(static_cast<std::size_t>(hid), 0.0);
        std::vector<double> dc1(static_cast<std::size_t>(hid), 0.0);
        std::vector<std::vector<double>> datt(len, std::vector<double>(static_cast<std::size_t>(d), 0.0));
        std::vector<double> dx1(static_cast<std::size_t>(d));
        for (std::size_t i = len; i-- > 0;) {
            axpy(1.0, dh1[i], dh1_carry);
            std::fill(dx1.begin(), dx1.end(), 0.0);
            std::vector<double> dh1_prev(static_cast<std::size_t>(hid), 0.0);
            std::vector<double> dc1_prev(static_cast<std::size_t>(hid), 0.0);
            lstm_step_backward(lstm1, cache.lstm1[i], dh1_carry, dc1, grads.lstm1, dx1, dh1_prev, dc1_prev);
            if (cache.drop1[i].empty()) {
                datt[i] = dx1;
            } else {
                for (int j = 0; j < d; ++j)
                    datt[i][static_cast<std::size_t>(j)] = dx1[static_cast<std::size_t>(j)] * cache.drop1[i][static_cast<std::size_t>(j)];
            }
            dh1_carry = std::move(dh1_prev);
            dc1 = std::move(dc1_prev);
        }

        // Attention and embeddings.
        std::vector<std::vector<double>> dcontext(len, std::vector<double>(static_cast<std::size_t>(d), 0.0));
        std::vector<double> dp(static_cast<std::size_t>(k));
        std::vector<double> da(static_cast<std::size_t>(d_a));
        for (std::size_t i = 0; i < len; ++i) {
            const AttnCache& a = cache.attn[i];
            const int word = a.word;

            double dot_pd = 0.0;
            for (int j = 0; j < k; ++j) {
                dp[static_cast<std::size_t>(j)] = dot(datt[i], bank.sense_of(word, j));
                dot_pd += a.probs[static_cast<std::size_t>(j)] * dp[static_cast<std::size_t>(j)];
                // Direct path: attended = sum_j p_j s_j.
                axpy(a.probs[static_cast<std::size_t>(j)], datt[i],
                     grads.senses.row(word).subspan(static_cast<std::size_t>(j) * d, static_cast<std::size_t>(d)));
            }
            for (int j = 0; j < k; ++j) {
                double dlogit = a.probs[static_cast<std::size_t>(j)] * (dp[static_cast<std::size_t>(j)] - dot_pd);
                axpy(dlogit, a.s_hat.row(j), grads.att_wp.row(j));
                for (int x = 0; x < d_a; ++x) {
                    double sh = a.s_hat(j, x);
                    da[static_cast<std::size_t>(x)] = dlogit * att.wp(j, x) * (1.0 - sh * sh);
                }
                outer_add(grads.att_w, da, bank.sense_of(word, j));
                outer_add(grads.att_u, da, a.context);
                axpy(1.0, da, grads.att_b);
                mat_t_vec_add(att.w, da,
                              grads.senses.row(word).subspan(static_cast<std::size_t>(j) * d, static_cast<std::size_t>(d)));
                mat_t_vec_add(att.u, da, dcontext[i]);
            }
        }

        // Context vectors are means of the other generic vectors.
        if (len > 1) {
            std::vector<double> total(static_cast<std::size_t>(d), 0.0);
            for (std::size_t i = 0; i < len; ++i) axpy(1.0, dcontext[i], total);
            const double inv = 1.0 / static_cast<double>(len - 1);
            std::vector<double> contribution(static_cast<std::size_t>(d));
            for (std::size_t l = 0; l < len; ++l) {
                for (int x = 0; x < d; ++x)
                    contribution[static_cast<std::size_t>(x)] =
                        (total[static_cast<std::size_t>(x)] - dcontext[l][static_cast<std::size_t>(x)]) * inv;
                axpy(1.0, contribution, grads.generic.row(cache.token_ids[l]));
            }
        }
    }
};

// Ranked (entity, cosine) list for a composed vector; ties broken by
// ascending label so rankings are total.
inline std::vector<std::pair<std::string, double>> rank_entities(std::span<const double> y_hat,
                                                                 const EmbeddingTable& index,
                                                                 std::size_t top_k) {
    if (index.size() == 0) throw std::invalid_argument("empty entity index");
    std::vector<std::pair<std::string, double>> ranked;
    ranked.reserve(index.size());
    for (std::size_t i = 0; i < index.size(); ++i)
        ranked.emplace_back(index.label(i), cosine(y_hat, index.row(static_cast<int>(i))));
    std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
        if (a.second != b.second) return a.second > b.second;
        return a.first < b.first;
    });
    if (ranked.size() > top_k) ranked.resize(top_k);
    return ranked;
}

inline std::vector<std::pair<std::string, double>> infer(const MsLstmModel& model,
                                                         const std::vector<std::string>& tokens,
                                                         const EmbeddingTable& index,
                                                         std::size_t top_k) {
    return rank_entities(model.compose(tokens), index, top_k);
}

// Per-sense neighborhoods: the n nearest generic word vectors by cosine,
// excluding the word itself (and <unk>).
inline std::vector<std::vector<std::string>> nearest_words_per_sense(const MsLstmModel& model,
                                                                     const std::string& word,
                                                                     std::size_t n) {
    if (!model.bank.contains(word)) throw std::invalid_argument("unknown word '" + word + "'");
    const int wid = model.bank.lookup(word);
    std::vector<std::vector<std::string>> out;
    for (int j = 0; j < model.bank.senses(); ++j) {
        std::vector<std::pair<std::string, double>> ranked;
        for (std::size_t i = 1; i < model.bank.size(); ++i) {  // index 0 is <unk>
            if (static_cast<int>(i) == wid) continue;
            ranked.emplace_back(model.bank.word(static_cast<int>(i)),
                                cosine(model.bank.sense_of(wid, j), model.bank.generic_of(static_cast<int>(i))));
        }
        std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
            if (a.second != b.second) return a.second > b.second;
            return a.first < b.first;
        });
        if (ranked.size() > n) ranked.resize(n);
        std::vector<std::string> words;
        for (auto& [w, c] : ranked) words.push_back(std::move(w));
        out.push_back(std::move(words));
    }
    return out;
}

struct MsLstmTrainLog {
    std::vector<double> train_mse;  // per epoch, averaged over training forwards
    std::vector<double> dev_mse;    // per epoch when a dev set is given
};

namespace detail {

struct MsLstmAdam {
    AdamState generic, senses, att_w, att_u, att_b, att_wp;
    AdamState lstm1_wx, lstm1_wh, lstm1_b, lstm2_wx, lstm2_wh, lstm2_b;
    AdamState proj_w, proj_b;

    explicit MsLstmAdam(const MsLstmModel& m)
        : generic(m.bank.generic_params().d.size()), senses(m.bank.sense_params().d.size()),
          att_w(m.att.w.d.size()), att_u(m.att.u.d.size()), att_b(m.att.b.size()),
          att_wp(m.att.wp.d.size()), lstm1_wx(m.lstm1.wx.d.size()), lstm1_wh(m.lstm1.wh.d.size()),
          lstm1_b(m.lstm1.b.size()), lstm2_wx(m.lstm2.wx.d.size()), lstm2_wh(m.lstm2.wh.d.size()),
          lstm2_b(m.lstm2.b.size()), proj_w(m.proj_w.d.size()), proj_b(m.proj_b.size()) {}

    void step(MsLstmModel& m, MsLstmGrads& g) {
        if (!m.cfg.sense_gradients) {
            g.senses.zero();
        }
        adam_update(m.bank.generic_params().d, g.generic.d, generic);
        adam_update(m.bank.sense_params().d, g.senses.d, senses);
        adam_update(m.att.w.d, g.att_w.d, att_w);
        adam_update(m.att.u.d, g.att_u.d, att_u);
        adam_update(m.att.b, g.att_b, att_b);
        adam_update(m.att.wp.d, g.att_wp.d, att_wp);
        adam_update(m.lstm1.wx.d, g.lstm1.wx.d, lstm1_wx);
        adam_update(m.lstm1.wh.d, g.lstm1.wh.d, lstm1_wh);
        adam_update(m.lstm1.b, g.lstm1.b, lstm1_b);
        adam_update(m.lstm2.wx.d, g.lstm2.wx.d, lstm2_wx);
        adam_update(m.lstm2.wh.d, g.lstm2.wh.d, lstm2_wh);
        adam_update(m.lstm2.b, g.lstm2.b, lstm2_b);
        adam_update(m.proj_w.d, g.proj_w.d, proj_w);
        adam_update(m.proj_b, g.proj_b, proj_b);
    }
};

}  // namespace detail

// Mini-batch Adam on the MSE objective for every parameter block, then the
// additive sense updates for the tokens of the batch. Data order is shuffled
// per epoch with a seeded stream; fully deterministic given the seed.
inline MsLstmTrainLog train_mslstm(MsLstmModel& model, const std::vector<TrainingPair>& pairs,
                                   const std::vector<TrainingPair>* dev = nullptr) {
    if (pairs.empty()) throw std::invalid_argument("no training pairs");
    const MsLstmConfig& cfg = model.cfg;
    for (const auto& p : pairs)
        if (static_cast<int>(p.target.size()) != cfg.output_dim)
            throw std::invalid_argument("target dim mismatch for entity '" + p.entity + "'");

    std::vector<std::vector<int>> token_ids;
    token_ids.reserve(pairs.size());
    for (const auto& p : pairs) token_ids.push_back(model.to_ids(p.tokens));

    detail::MsLstmAdam adam(model);
    MsLstmGrads grads = model.make_grads();
    MsLstmTrainLog log;

    std::vector<std::size_t> order(pairs.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

    std::vector<MsLstmForwardCache> caches(static_cast<std::size_t>(cfg.batch_size));
    std::vector<double> d_yhat(static_cast<std::size_t>(cfg.output_dim));

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        Rng shuffle_rng = substream(cfg.seed, 0x5F0FULL, static_cast<std::uint64_t>(epoch));
        shuffle_rng.shuffle(order);
        Rng dropout_rng = substream(cfg.seed, 0xD0D0ULL, static_cast<std::uint64_t>(epoch));

        double epoch_loss = 0.0;
        for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch_size)) {
            const std::size_t batch_end = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
            const std::size_t batch_n = batch_end - start;
            grads.zero();

            for (std::size_t bi = 0; bi < batch_n; ++bi) {
                const std::size_t idx = order[start + bi];
                model.forward(token_ids[idx], true, dropout_rng, caches[bi]);
                double sq = 0.0;
                for (int x = 0; x < cfg.output_dim; ++x) {
                    double r = caches[bi].y_hat[static_cast<std::size_t>(x)] - pairs[idx].target[static_cast<std::size_t>(x)];
                    d_yhat[static_cast<std::size_t>(x)] = 2.0 * r / static_cast<double>(batch_n);
                    sq += r * r;
                }
                epoch_loss += sq;
                model.backward(caches[bi], d_yhat, grads);
            }

            adam.step(model, grads);

            if (cfg.sense_updates) {
                for (std::size_t bi = 0; bi < batch_n; ++bi) {
                    const MsLstmForwardCache& cache = caches[bi];
                    for (std::size_t i = 0; i < cache.token_ids.size(); ++i)
                        for (int j = 0; j < cfg.senses; ++j)
                            sense_update(model.bank, cache.token_ids[i], j, cache.attn[i].context);
                }
            }
        }
        log.train_mse.push_back(epoch_loss / static_cast<double>(pairs.size()));

        if (dev && !dev->empty()) {
            double dev_loss = 0.0;
            for (const auto& p : *dev) {
                auto y = model.compose(p.tokens);
                for (std::size_t x = 0; x < y.size(); ++x) {
                    double r = y[x] - p.target[x];
                    dev_loss += r * r;
                }
            }
            log.dev_mse.push_back(dev_loss / static_cast<double>(dev->size()));
        }
    }
    return log;
}

// ---------------------------------------------------------------------------
// Checkpoints: parameter blocks in the neural-core binary format plus a
// `word<TAB>index` vocabulary sidecar.

inline void save_model(const MsLstmModel& model, const std::string& path) {
    std::vector<ParamBlock> blocks;
    auto add_mat = [&](const std::string& name, const Mat& m) {
        blocks.push_back({name,
                          {static_cast<std::uint64_t>(m.rows), static_cast<std::uint64_t>(m.cols)},
                          m.d});
    };
    auto add_vec = [&](const std::string& name, const std::vector<double>& v) {
        blocks.push_back({name, {v.size()}, v});
    };
    add_vec("meta", {static_cast<double>(model.cfg.embed_dim), static_cast<double>(model.cfg.senses),
                     static_cast<double>(model.cfg.attn_hidden), static_cast<double>(model.cfg.hidden_dim),
                     static_cast<double>(model.cfg.output_dim), model.cfg.dropout_rate});
    add_mat("bank.generic", model.bank.generic_params());
    add_mat("bank.senses", model.bank.sense_params());
    add_mat("att.w", model.att.w);
    add_mat("att.u", model.att.u);
    add_vec("att.b", model.att.b);
    add_mat("att.wp", model.att.wp);
    add_mat("lstm1.wx", model.lstm1.wx);
    add_mat("lstm1.wh", model.lstm1.wh);
    add_vec("lstm1.b", model.lstm1.b);
    add_mat("lstm2.wx", model.lstm2.wx);
    add_mat("lstm2.wh", model.lstm2.wh);
    add_vec("lstm2.b", model.lstm2.b);
    add_mat("proj.w", model.proj_w);
    add_vec("proj.b", model.proj_b);

    atomic_write(path, [&](std::ostream& out) { write_checkpoint(out, blocks); });
    atomic_write(path + ".vocab", [&](std::ostream& out) {
        for (std::size_t i = 0; i < model.bank.size(); ++i)
            out << model.bank.word(static_cast<int>(i)) << '\t' << i << '\n';
    });
}

inline MsLstmModel load_model(const std::string& path) {
    auto in = open_input(path);
    auto blocks = read_checkpoint(in);
    std::map<std::string, ParamBlock*> by_name;
    for (auto& b : blocks) by_name[b.name] = &b;
    auto get = [&](const std::string& name) -> ParamBlock& {
        auto it = by_name.find(name);
        if (it == by_name.end()) throw io_error("checkpoint missing block '" + name + "'");
        return *it->second;
    };

    const auto& meta = get("meta").data;
    if (meta.size() != 6) throw io_error("bad checkpoint meta block");
    MsLstmConfig cfg;
    cfg.embed_dim = static_cast<int>(meta[0]);
    cfg.senses = static_cast<int>(meta[1]);
    cfg.attn_hidden = static_cast<int>(meta[2]);
    cfg.hidden_dim = static_cast<int>(meta[3]);
    cfg.output_dim = static_cast<int>(meta[4]);
    cfg.dropout_rate = meta[5];

    std::vector<std::string> vocab;
    {
        auto vin = open_input(path + ".vocab");
        std::string line;
        std::size_t line_no = 0;
        std::vector<std::pair<std::size_t, std::string>> entries;
        while (std::getline(vin, line)) {
            ++line_no;
            std::string_view sv = strip_cr(line);
            if (sv.empty()) continue;
            auto fields = split(sv, '\t');
            if (fields.size() != 2) throw parse_error("expected `word<TAB>index`", line_no);
            entries.emplace_back(static_cast<std::size_t>(parse_double(fields[1], line_no)),
                                 std::string(fields[0]));
        }
        std::sort(entries.begin(), entries.end());
        for (std::size_t i = 0; i < entries.size(); ++i) {
            if (entries[i].first != i) throw io_error("vocabulary indices are not dense");
            if (i == 0 && entries[i].second != SenseBank::kUnk)
                throw io_error("vocabulary must start with " + std::string(SenseBank::kUnk));
            if (i > 0) vocab.push_back(entries[i].second);
        }
    }

    MsLstmModel model(cfg, vocab);
    auto load_mat = [&](const std::string& name, Mat& m) {
        ParamBlock& b = get(name);
        if (b.shape.size() != 2 || static_cast<int>(b.shape[0]) != m.rows ||
            static_cast<int>(b.shape[1]) != m.cols)
            throw io_error("checkpoint shape mismatch for '" + name + "'");
        m.d = b.data;
    };
    auto load_vec = [&](const std::string& name, std::vector<double>& v) {
        ParamBlock& b = get(name);
        if (b.data.size() != v.size()) throw io_error("checkpoint shape mismatch for '" + name + "'");
        v = b.data;
    };
    load_mat("bank.generic", model.bank.generic_params());
    load_mat("bank.senses", model.bank.sense_params());
    load_mat("att.w", model.att.w);
    load_mat("att.u", model.att.u);
    load_vec("att.b", model.att.b);
    load_mat("att.wp", model.att.wp);
    load_mat("lstm1.wx", model.lstm1.wx);
    load_mat("lstm1.wh", model.lstm1.wh);
    load_vec("lstm1.b", model.lstm1.b);
    load_mat("lstm2.wx", model.lstm2.wx);
    load_mat("lstm2.wh", model.lstm2.wh);
    load_vec("lstm2.b", model.lstm2.b);
    load_mat("proj.w", model.proj_w);
    load_vec("proj.b", model.proj_b);
    return model;
}

}  // namespace kbmap
