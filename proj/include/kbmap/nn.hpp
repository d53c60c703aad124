#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "kbmap/common.hpp"
#include "kbmap/random.hpp"

namespace kbmap {

// Row-major dense matrix, double precision throughout.
struct Mat {
    int rows = 0, cols = 0;
    std::vector<double> d;

    Mat() = default;
    Mat(int r, int c) : rows(r), cols(c), d(static_cast<std::size_t>(r) * c, 0.0) {}

    double& operator()(int r, int c) { return d[static_cast<std::size_t>(r) * cols + c]; }
    double operator()(int r, int c) const { return d[static_cast<std::size_t>(r) * cols + c]; }
    std::span<double> row(int r) { return {d.data() + static_cast<std::size_t>(r) * cols, static_cast<std::size_t>(cols)}; }
    std::span<const double> row(int r) const {
        return {d.data() + static_cast<std::size_t>(r) * cols, static_cast<std::size_t>(cols)};
    }
    void zero() { std::fill(d.begin(), d.end(), 0.0); }
    void init_uniform(Rng& rng, double scale) {
        for (auto& x : d) x = rng.uniform(-scale, scale);
    }
};

// y += M x
inline void matvec_add(const Mat& m, std::span<const double> x, std::span<double> y) {
    if (static_cast<int>(x.size()) != m.cols || static_cast<int>(y.size()) != m.rows)
        throw std::invalid_argument("matvec shape mismatch");
    for (int r = 0; r < m.rows; ++r) {
        const double* row = m.d.data() + static_cast<std::size_t>(r) * m.cols;
        double s = 0.0;
        for (int c = 0; c < m.cols; ++c) s += row[c] * x[static_cast<std::size_t>(c)];
        y[static_cast<std::size_t>(r)] += s;
    }
}

// x += M^T y
inline void mat_t_vec_add(const Mat& m, std::span<const double> y, std::span<double> x) {
    if (static_cast<int>(y.size()) != m.rows || static_cast<int>(x.size()) != m.cols)
        throw std::invalid_argument("matvec shape mismatch");
    for (int r = 0; r < m.rows; ++r) {
        const double* row = m.d.data() + static_cast<std::size_t>(r) * m.cols;
        double yr = y[static_cast<std::size_t>(r)];
        for (int c = 0; c < m.cols; ++c) x[static_cast<std::size_t>(c)] += row[c] * yr;
    }
}

// M += a b^T
inline void outer_add(Mat& m, std::span<const double> a, std::span<const double> b) {
    if (static_cast<int>(a.size()) != m.rows || static_cast<int>(b.size()) != m.cols)
        throw std::invalid_argument("outer shape mismatch");
    for (int r = 0; r < m.rows; ++r) {
        double* row = m.d.data() + static_cast<std::size_t>(r) * m.cols;
        double ar = a[static_cast<std::size_t>(r)];
        for (int c = 0; c < m.cols; ++c) row[c] += ar * b[static_cast<std::size_t>(c)];
    }
}

inline void axpy(double alpha, std::span<const double> x, std::span<double> y) {
    for (std::size_t i = 0; i < x.size(); ++i) y[i] += alpha * x[i];
}

// Max-subtracted softmax; components in (0,1), sum 1.
inline std::vector<double> softmax(std::span<const double> logits) {
    if (logits.empty()) throw std::invalid_argument("softmax of empty vector");
    double mx = logits[0];
    for (double v : logits) {
        if (std::isnan(v)) throw std::invalid_argument("NaN logit");
        mx = std::max(mx, v);
    }
    std::vector<double> p(logits.size());
    double sum = 0.0;
    for (std::size_t i = 0; i < logits.size(); ++i) {
        p[i] = std::exp(logits[i] - mx);
        sum += p[i];
    }
    for (auto& v : p) v /= sum;
    return p;
}

// Inverted dropout: zeros with probability `rate` and scales survivors by
// 1/(1-rate) so the inference path is the identity.
inline std::vector<double> dropout_mask(std::size_t n, double rate, bool training, Rng& rng) {
    if (rate < 0.0 || rate >= 1.0) throw std::invalid_argument("dropout rate must be in [0,1)");
    std::vector<double> mask(n, 1.0);
    if (!training || rate == 0.0) return mask;
    const double keep_scale = 1.0 / (1.0 - rate);
    for (auto& m : mask) m = rng.next_double() < rate ? 0.0 : keep_scale;
    return mask;
}

inline std::vector<double> dropout(std::span<const double> x, double rate, bool training, Rng& rng) {
    auto mask = dropout_mask(x.size(), rate, training, rng);
    std::vector<double> out(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] * mask[i];
    return out;
}

// ---------------------------------------------------------------------------
// LSTM cell. Gates are stacked [i, f, g, o]; c = f.c_prev + i.g, h = o.tanh(c).

struct LstmCellParams {
    int input_dim = 0, hidden_dim = 0;
    Mat wx;                  // 4H x input_dim
    Mat wh;                  // 4H x hidden_dim
    std::vector<double> b;   // 4H

    LstmCellParams() = default;
    LstmCellParams(int input, int hidden)
        : input_dim(input), hidden_dim(hidden), wx(4 * hidden, input), wh(4 * hidden, hidden),
          b(static_cast<std::size_t>(4) * hidden, 0.0) {}

    // Uniform +-1/sqrt(fan_in); forget-gate bias starts at 1.0.
    void init(Rng& rng) {
        wx.init_uniform(rng, 1.0 / std::sqrt(static_cast<double>(input_dim)));
        wh.init_uniform(rng, 1.0 / std::sqrt(static_cast<double>(hidden_dim)));
        std::fill(b.begin(), b.end(), 0.0);
        std::fill(b.begin() + hidden_dim, b.begin() + 2 * hidden_dim, 1.0);
    }
};

struct LstmStepCache {
    std::vector<double> x, h_prev, c_prev;
    std::vector<double> gates;   // 4H post-activation
    std::vector<double> c, tanh_c, h;
};

inline void lstm_step(const LstmCellParams& p, std::span<const double> x,
                      std::span<const double> h_prev, std::span<const double> c_prev,
                      LstmStepCache& cache) {
    const int h = p.hidden_dim;
    if (static_cast<int>(x.size()) != p.input_dim || static_cast<int>(h_prev.size()) != h ||
        static_cast<int>(c_prev.size()) != h)
        throw std::invalid_argument("lstm_step shape mismatch");

    cache.x.assign(x.begin(), x.end());
    cache.h_prev.assign(h_prev.begin(), h_prev.end());
    cache.c_prev.assign(c_prev.begin(), c_prev.end());

    std::vector<double> z(p.b);
    matvec_add(p.wx, x, z);
    matvec_add(p.wh, h_prev, z);

    cache.gates.resize(static_cast<std::size_t>(4) * h);
    for (int j = 0; j < h; ++j) {
        cache.gates[static_cast<std::size_t>(j)] = sigmoid(z[static_cast<std::size_t>(j)]);                    // i
        cache.gates[static_cast<std::size_t>(h + j)] = sigmoid(z[static_cast<std::size_t>(h + j)]);            // f
        cache.gates[static_cast<std::size_t>(2 * h + j)] = std::tanh(z[static_cast<std::size_t>(2 * h + j)]);  // g
        cache.gates[static_cast<std::size_t>(3 * h + j)] = sigmoid(z[static_cast<std::size_t>(3 * h + j)]);    // o
    }
    cache.c.resize(static_cast<std::size_t>(h));
    cache.tanh_c.resize(static_cast<std::size_t>(h));
    cache.h.resize(static_cast<std::size_t>(h));
    for (int j = 0; j < h; ++j) {
        double i_g = cache.gates[static_cast<std::size_t>(j)];
        double f_g = cache.gates[static_cast<std::size_t>(h + j)];
        double g_g = cache.gates[static_cast<std::size_t>(2 * h + j)];
        double o_g = cache.gates[static_cast<std::size_t>(3 * h + j)];
        double c_new = f_g * c_prev[static_cast<std::size_t>(j)] + i_g * g_g;
        cache.c[static_cast<std::size_t>(j)] = c_new;
        cache.tanh_c[static_cast<std::size_t>(j)] = std::tanh(c_new);
        cache.h[static_cast<std::size_t>(j)] = o_g * cache.tanh_c[static_cast<std::size_t>(j)];
    }
}

inline std::pair<std::vector<double>, std::vector<double>> lstm_step(
    const LstmCellParams& p, std::span<const double> x, std::span<const double> h_prev,
    std::span<const double> c_prev) {
    LstmStepCache cache;
    lstm_step(p, x, h_prev, c_prev, cache);
    return {cache.h, cache.c};
}

struct LstmGrads {
    Mat wx, wh;
    std::vector<double> b;

    LstmGrads() = default;
    explicit LstmGrads(const LstmCellParams& p)
        : wx(4 * p.hidden_dim, p.input_dim), wh(4 * p.hidden_dim, p.hidden_dim),
          b(static_cast<std::size_t>(4) * p.hidden_dim, 0.0) {}
    void zero() {
        wx.zero();
        wh.zero();
        std::fill(b.begin(), b.end(), 0.0);
    }
};

// One BPTT step: dh/dc are the gradients flowing into h_t and c_t; outputs
// are accumulated into dx, dh_prev, dc_prev and the parameter grads.
inline void lstm_step_backward(const LstmCellParams& p, const LstmStepCache& cache,
                               std::span<const double> dh, std::span<const double> dc,
                               LstmGrads& grads, std::span<double> dx,
                               std::span<double> dh_prev, std::span<double> dc_prev) {
    const int h = p.hidden_dim;
    std::vector<double> dz(static_cast<std::size_t>(4) * h);
    for (int j = 0; j < h; ++j) {
        double i_g = cache.gates[static_cast<std::size_t>(j)];
        double f_g = cache.gates[static_cast<std::size_t>(h + j)];
        double g_g = cache.gates[static_cast<std::size_t>(2 * h + j)];
        double o_g = cache.gates[static_cast<std::size_t>(3 * h + j)];
        double tc = cache.tanh_c[static_cast<std::size_t>(j)];

        double dh_j = dh[static_cast<std::size_t>(j)];
        double dc_total = dc[static_cast<std::size_t>(j)] + dh_j * o_g * (1.0 - tc * tc);

        double di = dc_total * g_g;
        double df = dc_total * cache.c_prev[static_cast<std::size_t>(j)];
        double dg = dc_total * i_g;
        double do_ = dh_j * tc;

        dz[static_cast<std::size_t>(j)] = di * i_g * (1.0 - i_g);
        dz[static_cast<std::size_t>(h + j)] = df * f_g * (1.0 - f_g);
        dz[static_cast<std::size_t>(2 * h + j)] = dg * (1.0 - g_g * g_g);
        dz[static_cast<std::size_t>(3 * h + j)] = do_ * o_g * (1.0 - o_g);

        dc_prev[static_cast<std::size_t>(j)] += dc_total * f_g;
    }
    outer_add(grads.wx, dz, cache.x);
    outer_add(grads.wh, dz, cache.h_prev);
    axpy(1.0, dz, grads.b);
    mat_t_vec_add(p.wx, dz, dx);
    mat_t_vec_add(p.wh, dz, dh_prev);
}

// ---------------------------------------------------------------------------
// Adam with the fixed hyperparameters alpha=0.001, beta1=0.9, beta2=0.999,
// eps=1e-8, bias-corrected.

struct AdamState {
    std::vector<double> m, v;
    long long step = 0;
    double alpha = 0.001;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;

    AdamState() = default;
    explicit AdamState(std::size_t n) : m(n, 0.0), v(n, 0.0) {}
};

inline void adam_update(std::span<double> param, std::span<const double> grad, AdamState& st) {
    if (param.size() != grad.size() || param.size() != st.m.size())
        throw std::invalid_argument("adam shape mismatch");
    ++st.step;
    const double bc1 = 1.0 - std::pow(st.beta1, static_cast<double>(st.step));
    const double bc2 = 1.0 - std::pow(st.beta2, static_cast<double>(st.step));
    for (std::size_t i = 0; i < param.size(); ++i) {
        double g = grad[i];
        st.m[i] = st.beta1 * st.m[i] + (1.0 - st.beta1) * g;
        st.v[i] = st.beta2 * st.v[i] + (1.0 - st.beta2) * g * g;
        double m_hat = st.m[i] / bc1;
        double v_hat = st.v[i] / bc2;
        param[i] -= st.alpha * m_hat / (std::sqrt(v_hat) + st.epsilon);
    }
}

// ---------------------------------------------------------------------------
// Finite-difference gradient checking: central differences, step 1e-5,
// relative error |a-n| / max(|a|, |n|, 1e-8).

struct GradCheckBlock {
    std::string name;
    double* data = nullptr;
    std::size_t n = 0;
    const double* analytic = nullptr;
};

struct GradCheckReport {
    std::string name;
    double max_rel_err = 0.0;
};

template <typename LossFn>
std::vector<GradCheckReport> grad_check(LossFn&& loss, std::vector<GradCheckBlock> blocks,
                                        double step = 1e-5) {
    std::vector<GradCheckReport> reports;
    for (auto& blk : blocks) {
        GradCheckReport rep{blk.name, 0.0};
        for (std::size_t i = 0; i < blk.n; ++i) {
            double saved = blk.data[i];
            blk.data[i] = saved + step;
            double fp = loss();
            blk.data[i] = saved - step;
            double fm = loss();
            blk.data[i] = saved;
            double numeric = (fp - fm) / (2.0 * step);
            double analytic = blk.analytic[i];
            double rel = std::abs(analytic - numeric) /
                         std::max({std::abs(analytic), std::abs(numeric), 1e-8});
            rep.max_rel_err = std::max(rep.max_rel_err, rel);
        }
        reports.push_back(rep);
    }
    return reports;
}

// ---------------------------------------------------------------------------
// Parameter checkpoints: little-endian length-prefixed blocks of
// (name, shape, row-major doubles). Round-trips are exact.

struct ParamBlock {
    std::string name;
    std::vector<std::uint64_t> shape;
    std::vector<double> data;
};

namespace detail {

inline void write_u32(std::ostream& out, std::uint32_t v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(v));
}
inline void write_u64(std::ostream& out, std::uint64_t v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(v));
}
inline std::uint32_t read_u32(std::istream& in) {
    std::uint32_t v = 0;
    in.read(reinterpret_cast<char*>(&v), sizeof(v));
    if (!in) throw io_error("truncated checkpoint");
    return v;
}
inline std::uint64_t read_u64(std::istream& in) {
    std::uint64_t v = 0;
    in.read(reinterpret_cast<char*>(&v), sizeof(v));
    if (!in) throw io_error("truncated checkpoint");
    return v;
}

}  // namespace detail

inline constexpr char kCheckpointMagic[8] = {'K', 'B', 'M', 'C', '0', '0', '0', '1'};

inline void write_checkpoint(std::ostream& out, const std::vector<ParamBlock>& blocks) {
    out.write(kCheckpointMagic, sizeof(kCheckpointMagic));
    detail::write_u64(out, blocks.size());
    for (const auto& blk : blocks) {
        detail::write_u32(out, static_cast<std::uint32_t>(blk.name.size()));
        out.write(blk.name.data(), static_cast<std::streamsize>(blk.name.size()));
        detail::write_u32(out, static_cast<std::uint32_t>(blk.shape.size()));
        std::uint64_t total = 1;
        for (auto d : blk.shape) {
            detail::write_u64(out, d);
            total *= d;
        }
        if (total != blk.data.size()) throw std::logic_error("checkpoint block shape/data mismatch");
        out.write(reinterpret_cast<const char*>(blk.data.data()),
                  static_cast<std::streamsize>(blk.data.size() * sizeof(double)));
    }
    if (!out) throw io_error("checkpoint write failed");
}

inline std::vector<ParamBlock> read_checkpoint(std::istream& in) {
    char magic[8];
    in.read(magic, sizeof(magic));
    if (!in || std::memcmp(magic, kCheckpointMagic, sizeof(magic)) != 0)
        throw io_error("not a checkpoint file");
    std::uint64_t count = detail::read_u64(in);
    std::vector<ParamBlock> blocks;
    blocks.reserve(count);
    for (std::uint64_t i = 0; i < count; ++i) {
        ParamBlock blk;
        std::uint32_t name_len = detail::read_u32(in);
        blk.name.resize(name_len);
        in.read(blk.name.data(), name_len);
        std::uint32_t ndims = detail::read_u32(in);
        std::uint64_t total = 1;
        for (std::uint32_t d = 0; d < ndims; ++d) {
            blk.shape.push_back(detail::read_u64(in));
            total *= blk.shape.back();
        }
        blk.data.resize(total);
        in.read(reinterpret_cast<char*>(blk.data.data()),
                static_cast<std::streamsize>(total * sizeof(double)));
        if (!in) throw io_error("truncated checkpoint");
        blocks.push_back(std::move(blk));
    }
    return blocks;
}

}  // namespace kbmap
