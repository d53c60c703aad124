#include <cmath>
#include <sstream>

#include "catch2/catch_amalgamated.hpp"
#include "kbmap/nn.hpp"

using namespace kbmap;

namespace {

double sum_sq(std::span<const double> v) {
    double s = 0.0;
    for (double x : v) s += x * x;
    return s;
}

}  // namespace

TEST_CASE("lstm_step with all-zero parameters returns zero state") {
    LstmCellParams p(3, 4);
    std::vector<double> x(3, 1.7), h(4, 0.0), c(4, 0.0);
    auto [h1, c1] = lstm_step(p, x, h, c);
    for (double v : h1) REQUIRE(v == 0.0);  // gates 0.5, candidate tanh(0)=0
    for (double v : c1) REQUIRE(v == 0.0);
}

TEST_CASE("lstm_step closed form with biases only") {
    LstmCellParams p(2, 3);
    Rng rng(7);
    for (auto& b : p.b) b = rng.uniform(-1.0, 1.0);
    std::vector<double> x(2, 0.0), h0(3, 0.0), c0(3, 0.0);
    auto [h1, c1] = lstm_step(p, x, h0, c0);
    for (int j = 0; j < 3; ++j) {
        double i_g = sigmoid(p.b[static_cast<std::size_t>(j)]);
        double g_g = std::tanh(p.b[static_cast<std::size_t>(6 + j)]);
        double o_g = sigmoid(p.b[static_cast<std::size_t>(9 + j)]);
        double c_exp = i_g * g_g;  // c_prev = 0
        REQUIRE(c1[static_cast<std::size_t>(j)] == Catch::Approx(c_exp).margin(1e-15));
        REQUIRE(h1[static_cast<std::size_t>(j)] == Catch::Approx(o_g * std::tanh(c_exp)).margin(1e-15));
    }
}

TEST_CASE("lstm_step rejects shape mismatches") {
    LstmCellParams p(3, 4);
    std::vector<double> bad_x(2, 0.0), h(4, 0.0), c(4, 0.0);
    REQUIRE_THROWS_AS(lstm_step(p, bad_x, h, c), std::invalid_argument);
}

TEST_CASE("fresh parameters use forget bias 1 and bounded weights") {
    LstmCellParams p(9, 4);
    Rng rng(3);
    p.init(rng);
    for (int j = 0; j < 4; ++j) {
        REQUIRE(p.b[static_cast<std::size_t>(j)] == 0.0);
        REQUIRE(p.b[static_cast<std::size_t>(4 + j)] == 1.0);
    }
    for (double w : p.wx.d) REQUIRE(std::abs(w) <= 1.0 / 3.0);
}

TEST_CASE("lstm backward matches central finite differences over many seeds") {
    for (std::uint64_t seed = 1; seed <= 50; ++seed) {
        Rng rng(seed);
        const int in_dim = 3, hid = 4;
        LstmCellParams p(in_dim, hid);
        p.init(rng);
        for (auto& b : p.b) b = rng.uniform(-0.5, 0.5);
        std::vector<double> x(in_dim), h0(hid), c0(hid);
        for (auto& v : x) v = rng.uniform(-1.0, 1.0);
        for (auto& v : h0) v = rng.uniform(-1.0, 1.0);
        for (auto& v : c0) v = rng.uniform(-1.0, 1.0);

        auto loss = [&] {
            auto [h, c] = lstm_step(p, x, h0, c0);
            return sum_sq(h);
        };

        LstmStepCache cache;
        lstm_step(p, x, h0, c0, cache);
        std::vector<double> dh(cache.h);
        for (auto& v : dh) v *= 2.0;
        std::vector<double> dc(static_cast<std::size_t>(hid), 0.0);
        LstmGrads grads(p);
        std::vector<double> dx(static_cast<std::size_t>(in_dim), 0.0);
        std::vector<double> dh_prev(static_cast<std::size_t>(hid), 0.0);
        std::vector<double> dc_prev(static_cast<std::size_t>(hid), 0.0);
        lstm_step_backward(p, cache, dh, dc, grads, dx, dh_prev, dc_prev);

        auto reports = grad_check(loss, {
            {"wx", p.wx.d.data(), p.wx.d.size(), grads.wx.d.data()},
            {"wh", p.wh.d.data(), p.wh.d.size(), grads.wh.d.data()},
            {"b", p.b.data(), p.b.size(), grads.b.data()},
            {"x", x.data(), x.size(), dx.data()},
            {"h_prev", h0.data(), h0.size(), dh_prev.data()},
            {"c_prev", c0.data(), c0.size(), dc_prev.data()},
        });
        for (const auto& r : reports) {
            INFO(r.name << " seed " << seed);
            REQUIRE(r.max_rel_err <= 1e-4);
        }
    }
}

TEST_CASE("softmax basics") {
    auto p = softmax(std::vector<double>{0.0, 0.0, 0.0});
    for (double v : p) REQUIRE(v == Catch::Approx(1.0 / 3.0).epsilon(1e-12));

    auto q = softmax(std::vector<double>{1000.0, 0.0});
    REQUIRE(q[0] == Catch::Approx(1.0).margin(1e-12));
    REQUIRE(q[1] == Catch::Approx(0.0).margin(1e-12));
    REQUIRE(std::isfinite(q[0]));

    auto single = softmax(std::vector<double>{4.2});
    REQUIRE(single.size() == 1);
    REQUIRE(single[0] == 1.0);

    REQUIRE_THROWS_AS(softmax(std::vector<double>{0.0, std::nan("")}), std::invalid_argument);
}

TEST_CASE("softmax is shift invariant") {
    Rng rng(17);
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<double> logits(5);
        for (auto& v : logits) v = rng.uniform(-3.0, 3.0);
        auto p = softmax(logits);
        double sum = 0.0;
        for (double v : p) sum += v;
        REQUIRE(sum == Catch::Approx(1.0).epsilon(1e-12));
        std::vector<double> shifted = logits;
        for (auto& v : shifted) v += 13.7;
        auto q = softmax(shifted);
        for (std::size_t i = 0; i < p.size(); ++i)
            REQUIRE(p[i] == Catch::Approx(q[i]).margin(1e-12));
    }
}

TEST_CASE("adam leaves parameters alone on zero gradient") {
    std::vector<double> param{1.0, -2.0, 3.0};
    std::vector<double> grad(3, 0.0);
    AdamState st(3);
    adam_update(param, grad, st);
    REQUIRE(st.step == 1);
    REQUIRE(param == std::vector<double>{1.0, -2.0, 3.0});
}

TEST_CASE("adam first step has the bias-corrected closed form") {
    std::vector<double> param{0.5, -0.25, 4.0};
    std::vector<double> grad{0.3, -1.2, 0.0001};
    AdamState st(3);
    std::vector<double> before = param;
    adam_update(param, grad, st);
    for (std::size_t i = 0; i < param.size(); ++i) {
        double expected = before[i] - 0.001 * grad[i] / (std::abs(grad[i]) + 1e-8);
        REQUIRE(param[i] == Catch::Approx(expected).margin(1e-12));
    }
}

TEST_CASE("adam under a constant gradient moves monotonically against it") {
    std::vector<double> param{1.0};
    std::vector<double> grad{0.7};
    AdamState st(1);
    double prev = param[0];
    for (int step = 0; step < 100; ++step) {
        adam_update(param, grad, st);
        REQUIRE(param[0] < prev);
        prev = param[0];
    }
}

TEST_CASE("adam rejects shape mismatches") {
    std::vector<double> param(3, 0.0), grad(2, 0.0);
    AdamState st(3);
    REQUIRE_THROWS_AS(adam_update(param, grad, st), std::invalid_argument);
}

TEST_CASE("dropout contracts") {
    Rng rng(5);
    std::vector<double> x{1.0, 2.0, 3.0};
    REQUIRE(dropout(x, 0.0, true, rng) == x);
    REQUIRE(dropout(x, 0.0, false, rng) == x);
    REQUIRE(dropout(x, 0.5, false, rng) == x);  // inference is the identity
    REQUIRE_THROWS_AS(dropout(x, 1.0, true, rng), std::invalid_argument);
    REQUIRE_THROWS_AS(dropout(x, -0.1, true, rng), std::invalid_argument);
}

TEST_CASE("dropout zeroes about the configured fraction and rescales the rest") {
    Rng rng(11);
    const std::size_t n = 1000000;
    auto mask = dropout_mask(n, 0.5, true, rng);
    std::size_t zeros = 0;
    for (double m : mask) {
        if (m == 0.0)
            ++zeros;
        else
            REQUIRE(m == 2.0);
    }
    double frac = static_cast<double>(zeros) / static_cast<double>(n);
    REQUIRE(std::abs(frac - 0.5) < 0.01);
}

TEST_CASE("grad_check validates a known quadratic gradient") {
    std::vector<double> p{0.3, -1.4, 2.2, 0.0};
    std::vector<double> analytic = p;  // d/dp of 0.5*||p||^2
    auto loss = [&] { return 0.5 * sum_sq(p); };
    auto reports = grad_check(loss, {{"p", p.data(), p.size(), analytic.data()}});
    REQUIRE(reports[0].max_rel_err <= 1e-7);
}

TEST_CASE("grad_check validates softmax cross-entropy") {
    Rng rng(23);
    Mat w(3, 4);
    w.init_uniform(rng, 0.6);
    std::vector<double> x(4);
    for (auto& v : x) v = rng.uniform(-1.0, 1.0);
    const int target = 1;

    auto loss = [&] {
        std::vector<double> logits(3, 0.0);
        matvec_add(w, x, logits);
        return -std::log(softmax(logits)[target]);
    };

    std::vector<double> logits(3, 0.0);
    matvec_add(w, x, logits);
    auto p = softmax(logits);
    Mat dw(3, 4);
    p[target] -= 1.0;
    outer_add(dw, p, x);

    auto reports = grad_check(loss, {{"w", w.d.data(), w.d.size(), dw.d.data()}});
    REQUIRE(reports[0].max_rel_err <= 1e-5);
}

TEST_CASE("grad_check flags a wrong gradient") {
    std::vector<double> p{0.3, -1.4, 2.2};
    std::vector<double> wrong = p;
    for (auto& v : wrong) v += 0.5;
    auto loss = [&] { return 0.5 * sum_sq(p); };
    auto reports = grad_check(loss, {{"p", p.data(), p.size(), wrong.data()}});
    REQUIRE(reports[0].max_rel_err > 1e-4);
}

TEST_CASE("forward ops are pure") {
    Rng rng(31);
    LstmCellParams p(3, 4);
    p.init(rng);
    std::vector<double> x{0.1, -0.2, 0.3}, h(4, 0.1), c(4, -0.2);
    auto first = lstm_step(p, x, h, c);
    auto second = lstm_step(p, x, h, c);
    REQUIRE(first.first == second.first);
    REQUIRE(first.second == second.second);
}

TEST_CASE("checkpoint blocks round-trip exactly") {
    std::vector<ParamBlock> blocks;
    Rng rng(41);
    blocks.push_back({"alpha", {2, 3}, {}});
    blocks.back().data.resize(6);
    for (auto& v : blocks.back().data) v = rng.gaussian();
    blocks.push_back({"beta", {4}, {}});
    blocks.back().data.resize(4);
    for (auto& v : blocks.back().data) v = rng.gaussian() * 1e-17;

    std::stringstream buf;
    write_checkpoint(buf, blocks);
    auto loaded = read_checkpoint(buf);
    REQUIRE(loaded.size() == 2);
    for (std::size_t i = 0; i < blocks.size(); ++i) {
        REQUIRE(loaded[i].name == blocks[i].name);
        REQUIRE(loaded[i].shape == blocks[i].shape);
        REQUIRE(loaded[i].data == blocks[i].data);  // bit-exact
    }
}

TEST_CASE("corrupt checkpoints are rejected") {
    std::stringstream buf;
    buf << "not a checkpoint";
    REQUIRE_THROWS_AS(read_checkpoint(buf), io_error);

    std::vector<ParamBlock> blocks{{"x", {8}, std::vector<double>(8, 1.0)}};
    std::stringstream good;
    write_checkpoint(good, blocks);
    std::string bytes = good.str();
    std::stringstream truncated(bytes.substr(0, bytes.size() - 9));
    REQUIRE_THROWS_AS(read_checkpoint(truncated), io_error);
}
