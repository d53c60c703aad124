#include <map>
#include <sstream>

#include "catch2/catch_amalgamated.hpp"
#include "kbmap/tfidf.hpp"
#include "kbmap/walks.hpp"

using namespace kbmap;

namespace {

// One entity with 2 entity neighbors and 2 textual features (tf-idf 3.0, 1.0).
KbGraph mixed_fixture() {
    KbGraph g;
    int n = g.add_node("n", NodeKind::Entity);
    int c1 = g.add_node("c1", NodeKind::Entity);
    int c2 = g.add_node("c2", NodeKind::Entity);
    int t1 = g.add_node("tf::t1", NodeKind::Textual);
    int t2 = g.add_node("tf::t2", NodeKind::Textual);
    g.add_edge(n, c1, 1.0);
    g.add_edge(n, c2, 1.0);
    g.add_edge(n, t1, 3.0);
    g.add_edge(n, t2, 1.0);
    g.finalize();
    return g;
}

std::map<std::string, double> dist_by_label(const KbGraph& g, int node, double lambda) {
    std::map<std::string, double> out;
    for (const auto& [id, p] : step_distribution(g, node, lambda)) out[g.label(id)] = p;
    return out;
}

}  // namespace

TEST_CASE("step distribution splits mass per the lambda rule") {
    KbGraph g = mixed_fixture();
    auto d = dist_by_label(g, g.require("n"), 0.5);
    REQUIRE(d.at("c1") == Catch::Approx(0.25).epsilon(1e-12));
    REQUIRE(d.at("c2") == Catch::Approx(0.25).epsilon(1e-12));
    REQUIRE(d.at("tf::t1") == Catch::Approx(0.375).epsilon(1e-12));
    REQUIRE(d.at("tf::t2") == Catch::Approx(0.125).epsilon(1e-12));
}

TEST_CASE("lambda 0 recovers the uniform entity distribution") {
    KbGraph g = mixed_fixture();
    auto d = dist_by_label(g, g.require("n"), 0.0);
    REQUIRE(d.at("c1") == 0.5);
    REQUIRE(d.at("c2") == 0.5);
    REQUIRE(d.at("tf::t1") == 0.0);
    REQUIRE(d.at("tf::t2") == 0.0);
}

TEST_CASE("an empty side receives all probability mass") {
    KbGraph g;
    int n = g.add_node("n", NodeKind::Entity);
    int c1 = g.add_node("c1", NodeKind::Entity);
    int c2 = g.add_node("c2", NodeKind::Entity);
    g.add_edge(n, c1, 1.0);
    g.add_edge(n, c2, 1.0);
    g.finalize();
    // T_n empty, lambda = 1: mass reallocated uniformly to entities.
    auto d = dist_by_label(g, n, 1.0);
    REQUIRE(d.at("c1") == 0.5);
    REQUIRE(d.at("c2") == 0.5);

    KbGraph g2;
    int m = g2.add_node("m", NodeKind::Entity);
    int t = g2.add_node("tf::only", NodeKind::Textual);
    g2.add_edge(m, t, 2.5);
    g2.finalize();
    // C_n empty, lambda = 0: all mass on the textual side.
    auto d2 = dist_by_label(g2, m, 0.0);
    REQUIRE(d2.at("tf::only") == 1.0);
}

TEST_CASE("isolated node has no step distribution") {
    KbGraph g;
    g.add_node("solo", NodeKind::Entity);
    g.finalize();
    REQUIRE_THROWS_AS(step_distribution(g, 0, 0.5), std::invalid_argument);
}

TEST_CASE("step distribution sums to one for random graphs and lambdas") {
    Rng rng(3);
    for (int trial = 0; trial < 25; ++trial) {
        KbGraph g;
        int n_ent = 2 + static_cast<int>(rng.next_below(5));
        int n_txt = static_cast<int>(rng.next_below(4));
        int hub = g.add_node("hub", NodeKind::Entity);
        for (int i = 0; i < n_ent; ++i) {
            int e = g.add_node("e" + std::to_string(i), NodeKind::Entity);
            g.add_edge(hub, e, 1.0);
        }
        for (int i = 0; i < n_txt; ++i) {
            int t = g.add_node("tf::t" + std::to_string(i), NodeKind::Textual);
            g.add_edge(hub, t, 0.1 + 3.0 * rng.next_double());
        }
        g.finalize();
        for (double lambda : {0.0, 0.17, 0.5, 0.99, 1.0}) {
            double sum = 0.0;
            for (const auto& [id, p] : step_distribution(g, hub, lambda)) {
                REQUIRE(p >= 0.0);
                sum += p;
            }
            REQUIRE(sum == Catch::Approx(1.0).epsilon(1e-12));
        }
    }
}

TEST_CASE("empirical step frequencies converge to the distribution") {
    KbGraph g = mixed_fixture();
    int n = g.require("n");
    auto dist = step_distribution(g, n, 0.5);
    std::map<int, double> expected;
    for (const auto& [id, p] : dist) expected[id] = p;

    Rng rng(99);
    const int draws = 100000;
    std::map<int, int> counts;
    for (int i = 0; i < draws; ++i) {
        double u = rng.next_double();
        double cum = 0.0;
        int chosen = dist.back().first;
        for (const auto& [id, p] : dist) {
            cum += p;
            if (u < cum) {
                chosen = id;
                break;
            }
        }
        ++counts[chosen];
    }
    for (const auto& [id, p] : expected) {
        double freq = static_cast<double>(counts[id]) / draws;
        REQUIRE(std::abs(freq - p) < 0.01);
    }
}

TEST_CASE("lambda 1 walks alternate entity and textual nodes") {
    // Every entity has at least one textual feature.
    KbGraph g;
    std::vector<int> ents, texts;
    for (int i = 0; i < 4; ++i) ents.push_back(g.add_node("e" + std::to_string(i), NodeKind::Entity));
    for (int i = 0; i < 4; ++i)
        texts.push_back(g.add_node("tf::w" + std::to_string(i), NodeKind::Textual));
    for (int i = 0; i < 4; ++i) {
        g.add_edge(ents[i], ents[(i + 1) % 4], 1.0);
        g.add_edge(ents[i], texts[i], 1.0);
        g.add_edge(ents[i], texts[(i + 1) % 4], 0.5);
    }
    g.finalize();

    WalkConfig cfg;
    cfg.lambda = 1.0;
    cfg.walk_length = 21;
    Rng rng(5);
    Walk walk = sample_walk(g, ents[0], cfg, rng);
    REQUIRE(walk.nodes.size() == 21);
    for (std::size_t i = 0; i < walk.nodes.size(); ++i) {
        NodeKind expected = i % 2 == 0 ? NodeKind::Entity : NodeKind::Textual;
        REQUIRE(g.kind(walk.nodes[i]) == expected);
    }
}

TEST_CASE("lambda 0 walks never touch textual nodes") {
    KbGraph g = mixed_fixture();
    WalkConfig cfg;
    cfg.lambda = 0.0;
    cfg.walk_length = 50;
    Rng rng(6);
    Walk walk = sample_walk(g, g.require("n"), cfg, rng);
    for (int node : walk.nodes) REQUIRE(g.kind(node) == NodeKind::Entity);
}

TEST_CASE("forced moves on a path graph") {
    KbGraph g;
    int a = g.add_node("a", NodeKind::Entity);
    int b = g.add_node("b", NodeKind::Entity);
    g.add_edge(a, b, 1.0);
    g.finalize();
    WalkConfig cfg;
    cfg.lambda = 0.0;
    cfg.walk_length = 4;
    Rng rng(1);
    Walk walk = sample_walk(g, a, cfg, rng);
    REQUIRE(walk.nodes == std::vector<int>{a, b, a, b});
    REQUIRE_FALSE(walk.truncated);
}

TEST_CASE("isolated start yields a truncated length-1 walk") {
    KbGraph g;
    int solo = g.add_node("solo", NodeKind::Entity);
    g.finalize();
    WalkConfig cfg;
    cfg.walk_length = 10;
    Rng rng(1);
    Walk walk = sample_walk(g, solo, cfg, rng);
    REQUIRE(walk.nodes == std::vector<int>{solo});
    REQUIRE(walk.truncated);
}

TEST_CASE("a textual node is never followed by a textual node") {
    KbGraph g = mixed_fixture();
    for (double lambda : {0.3, 0.7, 1.0}) {
        WalkConfig cfg;
        cfg.lambda = lambda;
        cfg.walk_length = 40;
        cfg.walks_per_node = 5;
        WalkCorpus corpus = generate_corpus(g, cfg);
        for (const auto& walk : corpus.walks)
            for (std::size_t i = 0; i + 1 < walk.nodes.size(); ++i)
                if (g.kind(walk.nodes[i]) == NodeKind::Textual)
                    REQUIRE(g.kind(walk.nodes[i + 1]) == NodeKind::Entity);
    }
}

TEST_CASE("corpus size is walks_per_node times the non-isolated node count") {
    KbGraph g;
    int a = g.add_node("a", NodeKind::Entity);
    int b = g.add_node("b", NodeKind::Entity);
    int c = g.add_node("c", NodeKind::Entity);
    g.add_edge(a, b, 1.0);
    g.add_edge(b, c, 1.0);
    g.finalize();
    WalkConfig cfg;
    cfg.walks_per_node = 10;
    WalkCorpus corpus = generate_corpus(g, cfg);
    REQUIRE(corpus.walks.size() == 30);

    // Isolated nodes contribute no walks.
    KbGraph g2;
    g2.add_node("a", NodeKind::Entity);
    g2.add_node("b", NodeKind::Entity);
    g2.add_node("lonely", NodeKind::Entity);
    g2.add_edge(0, 1, 1.0);
    g2.finalize();
    WalkCorpus corpus2 = generate_corpus(g2, cfg);
    REQUIRE(corpus2.walks.size() == 20);
}

TEST_CASE("same seed gives byte-identical corpora, different seeds differ") {
    KbGraph g = mixed_fixture();
    WalkConfig cfg;
    cfg.lambda = 0.5;
    cfg.seed = 123;

    auto render = [&](const WalkCorpus& c) {
        std::ostringstream out;
        save_corpus(c, g, out);
        return out.str();
    };
    std::string first = render(generate_corpus(g, cfg));
    std::string second = render(generate_corpus(g, cfg));
    REQUIRE(first == second);

    cfg.seed = 124;
    REQUIRE(render(generate_corpus(g, cfg)) != first);
}

TEST_CASE("thread count does not change the corpus") {
    KbGraph g = mixed_fixture();
    WalkConfig cfg;
    cfg.lambda = 0.5;
    cfg.seed = 9;
    WalkCorpus serial = generate_corpus(g, cfg);
    cfg.threads = 4;
    WalkCorpus parallel = generate_corpus(g, cfg);
    REQUIRE(serial.walks.size() == parallel.walks.size());
    for (std::size_t i = 0; i < serial.walks.size(); ++i)
        REQUIRE(serial.walks[i].nodes == parallel.walks[i].nodes);
}

TEST_CASE("corpus save/load round-trip") {
    KbGraph g = mixed_fixture();
    WalkConfig cfg;
    cfg.lambda = 0.5;
    cfg.walk_length = 5;
    cfg.walks_per_node = 2;
    WalkCorpus corpus = generate_corpus(g, cfg);
    std::ostringstream out;
    save_corpus(corpus, g, out);
    std::istringstream in(out.str());
    auto loaded = load_token_corpus(in);
    REQUIRE(loaded.size() == corpus.walks.size());
    for (std::size_t i = 0; i < loaded.size(); ++i) {
        REQUIRE(loaded[i].size() == corpus.walks[i].nodes.size());
        for (std::size_t j = 0; j < loaded[i].size(); ++j)
            REQUIRE(loaded[i][j] == g.label(corpus.walks[i].nodes[j]));
    }
}

TEST_CASE("walk config is validated") {
    KbGraph g = mixed_fixture();
    WalkConfig cfg;
    cfg.lambda = 1.5;
    REQUIRE_THROWS_AS(generate_corpus(g, cfg), std::invalid_argument);
    cfg.lambda = 0.5;
    cfg.walk_length = 0;
    REQUIRE_THROWS_AS(generate_corpus(g, cfg), std::invalid_argument);
}
