// Pipeline driver: every stage of the graph -> walks -> embeddings -> mapper
// pipeline as a subcommand with file-based handoff and reproducible seeds.

#include <fstream>
#include <iostream>
#include <set>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "kbmap/embedding.hpp"
#include "kbmap/eval.hpp"
#include "kbmap/graph.hpp"
#include "kbmap/mslstm.hpp"
#include "kbmap/pairs.hpp"
#include "kbmap/skipgram.hpp"
#include "kbmap/tfidf.hpp"
#include "kbmap/walks.hpp"

namespace {

using namespace kbmap;

std::set<std::string> read_label_set(const std::string& path) {
    std::set<std::string> labels;
    auto in = open_input(path);
    std::string line;
    while (std::getline(in, line)) {
        std::string_view sv = strip_cr(line);
        if (sv.empty() || sv[0] == '#') continue;
        labels.emplace(sv);
    }
    return labels;
}

int cmd_graph_build(const std::string& edges_path, const std::string& out_path) {
    auto in = open_input(edges_path);
    KbGraph g = load_edge_list(in);
    atomic_write(out_path, [&](std::ostream& out) { save_edge_list(g, out); });
    print_stats(g.degree_stats(), std::cout);
    return 0;
}

int cmd_graph_stats(const std::string& edges_path) {
    auto in = open_input(edges_path);
    KbGraph g = load_weighted_edge_list(in);
    print_stats(g.degree_stats(), std::cout);
    return 0;
}

int cmd_extend(const std::string& graph_path, const std::string& desc_path,
               const std::string& exclude_path, const std::string& out_graph,
               const std::string& out_table) {
    auto gin = open_input(graph_path);
    KbGraph g = load_edge_list(gin);

    auto din = open_input(desc_path);
    auto docs = read_descriptions(din);
    bool any_tokens = false;
    for (const auto& d : docs) any_tokens |= !d.tokens.empty();

    TfIdfTable table;
    KbGraph extended;
    if (!any_tokens) {
        std::cerr << "warning: no usable descriptions, graph left unchanged\n";
        extended = g;
    } else {
        table = compute_tfidf(docs, &std::cerr);
        std::set<std::string> exclude;
        if (!exclude_path.empty()) exclude = read_label_set(exclude_path);
        extended = extend_graph(g, table, exclude);
    }
    atomic_write(out_graph, [&](std::ostream& out) { save_edge_list(extended, out); });
    atomic_write(out_table, [&](std::ostream& out) { save_tfidf_table(table, out); });
    print_stats(extended.degree_stats(), std::cout);
    return 0;
}

int cmd_walk(const std::string& graph_path, const WalkConfig& cfg, const std::string& out_path) {
    cfg.validate();
    auto in = open_input(graph_path);
    KbGraph g = load_weighted_edge_list(in);
    WalkCorpus corpus = generate_corpus(g, cfg);
    atomic_write(out_path, [&](std::ostream& out) { save_corpus(corpus, g, out); });
    std::cout << "walks: " << corpus.walks.size() << '\n';
    return 0;
}

int cmd_embed(const std::string& corpus_path, const SkipgramConfig& cfg,
              const std::string& out_path) {
    cfg.validate();
    auto in = open_input(corpus_path);
    auto corpus = load_token_corpus(in);
    if (corpus.empty()) throw std::invalid_argument("empty corpus file");
    SkipgramResult result = train_skipgram(corpus, cfg);
    atomic_write(out_path, [&](std::ostream& out) { save_embeddings(result.table, out); });
    std::cout << "vocabulary: " << result.table.size() << '\n';
    if (!result.loss_history.empty())
        std::cout << "loss: " << format_fixed(result.loss_history.front(), 6) << " -> "
                  << format_fixed(result.loss_history.back(), 6) << '\n';
    return 0;
}

int cmd_train(const std::string& pairs_path, const std::string& kb_path, MsLstmConfig cfg,
              const std::string& anchors, const std::string& dev_path,
              const std::string& model_out) {
    auto kin = open_input(kb_path);
    EmbeddingTable kb = load_embeddings(kin);
    cfg.output_dim = kb.dim();

    auto pin = open_input(pairs_path);
    std::vector<TrainingPair> pairs = load_pairs(pin, kb);
    if (anchors == "on") {
        auto anchor_pairs = make_anchor_pairs(kb);
        std::cout << "anchors: added " << anchor_pairs.size() << " pairs\n";
        pairs.insert(pairs.end(), anchor_pairs.begin(), anchor_pairs.end());
    }

    std::vector<TrainingPair> dev;
    if (!dev_path.empty()) {
        auto din = open_input(dev_path);
        dev = load_pairs(din, kb);
    }

    std::vector<std::string> vocab;
    std::set<std::string> seen;
    for (const auto& p : pairs)
        for (const auto& t : p.tokens)
            if (seen.insert(t).second) vocab.push_back(t);

    MsLstmModel model(cfg, vocab);
    MsLstmTrainLog log = train_mslstm(model, pairs, dev.empty() ? nullptr : &dev);
    save_model(model, model_out);
    atomic_write(model_out + ".loss", [&](std::ostream& out) {
        for (std::size_t e = 0; e < log.train_mse.size(); ++e) {
            out << e + 1 << '\t' << format_double(log.train_mse[e]);
            if (e < log.dev_mse.size()) out << '\t' << format_double(log.dev_mse[e]);
            out << '\n';
        }
    });
    std::cout << "trained " << pairs.size() << " pairs, " << cfg.epochs << " epochs, final mse "
              << format_fixed(log.train_mse.back(), 6) << '\n';
    return 0;
}

int cmd_eval(const std::string& model_path, const std::string& pairs_path,
             const std::string& kb_path, const std::vector<int>& ks, const std::string& out_path) {
    auto kin = open_input(kb_path);
    EmbeddingTable kb = load_embeddings(kin);
    auto pin = open_input(pairs_path);
    std::vector<TrainingPair> pairs = load_pairs(pin, kb);

    MsLstmModel model = load_model(model_path);
    if (model.cfg.output_dim != kb.dim())
        throw std::invalid_argument("model emits " + std::to_string(model.cfg.output_dim) +
                                    "-dim vectors but the embedding table is " +
                                    std::to_string(kb.dim()) + "-dim");
    EmbeddingTable index = entity_index(kb);

    std::vector<std::vector<double>> predictions;
    std::vector<std::string> golds;
    for (const auto& p : pairs) {
        predictions.push_back(model.compose(p.tokens));
        golds.push_back(p.entity);
    }
    MetricsReport report = evaluate_retrieval(predictions, golds, index, ks);
    print_metrics(report, std::cout);
    if (!out_path.empty())
        atomic_write(out_path, [&](std::ostream& out) { save_metrics(report, out); });
    return 0;
}

int cmd_infer(const std::string& model_path, const std::string& kb_path, const std::string& text,
              std::size_t top_k) {
    if (text.empty()) throw std::invalid_argument("empty text");
    auto kin = open_input(kb_path);
    EmbeddingTable kb = load_embeddings(kin);
    MsLstmModel model = load_model(model_path);
    if (model.cfg.output_dim != kb.dim())
        throw std::invalid_argument("model emits " + std::to_string(model.cfg.output_dim) +
                                    "-dim vectors but the embedding table is " +
                                    std::to_string(kb.dim()) + "-dim");

    auto tokens = tokenize(text);
    if (tokens.empty()) tokens.push_back(SenseBank::kUnk);
    auto ranked = infer(model, tokens, entity_index(kb), top_k);
    for (const auto& [label, cos] : ranked)
        std::cout << label << '\t' << format_fixed(cos, 4) << '\n';
    return 0;
}

int cmd_classify(const std::string& emb_path, const std::string& labels_path, double train_ratio,
                 std::uint64_t seed) {
    auto ein = open_input(emb_path);
    EmbeddingTable table = load_embeddings(ein);

    auto lin = open_input(labels_path);
    std::vector<std::vector<double>> vectors;
    std::vector<std::string> labels;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(lin, line)) {
        ++line_no;
        std::string_view sv = strip_cr(line);
        if (sv.empty() || sv[0] == '#') continue;
        auto fields = split(sv, '\t');
        if (fields.size() != 2) throw parse_error("expected `node_label<TAB>class_label`", line_no);
        int id = table.find(std::string(fields[0]));
        if (id < 0) throw std::invalid_argument("no vector for node '" + std::string(fields[0]) + "'");
        auto v = table.row(id);
        vectors.emplace_back(v.begin(), v.end());
        labels.emplace_back(fields[1]);
    }
    double acc = linear_classifier_accuracy(vectors, labels, train_ratio, seed);
    std::cout << "accuracy: " << format_fixed(acc, 4) << '\n';
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"knowledge-graph embeddings and text-to-entity mapping"};
    app.require_subcommand(1);

    // graph
    auto* graph = app.add_subcommand("graph", "build or inspect a knowledge graph");
    graph->require_subcommand(1);
    std::string edges_path, out_path;
    auto* build = graph->add_subcommand("build", "validate an edge list and write it normalized");
    build->add_option("--edges", edges_path, "entity edge list (src<TAB>dst)")->required();
    build->add_option("--out", out_path, "normalized edge list output")->required();
    auto* stats = graph->add_subcommand("stats", "print degree statistics");
    stats->add_option("--edges", edges_path, "edge list (plain or extended)")->required();

    // extend
    auto* extend = app.add_subcommand("extend", "add tf-idf weighted textual-feature nodes");
    std::string desc_path, exclude_path, out_graph, out_table;
    extend->add_option("--graph", edges_path, "entity edge list")->required();
    extend->add_option("--descriptions", desc_path, "entity<TAB>text lines")->required();
    extend->add_option("--exclude-entities", exclude_path, "entities whose features are omitted");
    extend->add_option("--out-graph", out_graph, "extended edge list output")->required();
    extend->add_option("--out-table", out_table, "tf-idf table output")->required();

    // walk
    auto* walk = app.add_subcommand("walk", "generate the random-walk corpus");
    WalkConfig wcfg;
    std::string corpus_path;
    walk->add_option("--graph", edges_path, "edge list (plain or extended)")->required();
    walk->add_option("--lambda", wcfg.lambda, "textual probability mass")
        ->required()
        ->check(CLI::Range(0.0, 1.0));
    walk->add_option("--length", wcfg.walk_length, "nodes per walk")->check(CLI::PositiveNumber);
    walk->add_option("--walks-per-node", wcfg.walks_per_node, "walks per start node")
        ->check(CLI::PositiveNumber);
    walk->add_option("--seed", wcfg.seed, "rng seed");
    walk->add_option("--threads", wcfg.threads, "worker threads")->check(CLI::PositiveNumber);
    walk->add_option("--out", corpus_path, "corpus output")->required();

    // embed
    auto* embed = app.add_subcommand("embed", "train skipgram node embeddings on a corpus");
    SkipgramConfig scfg;
    std::string emb_path;
    embed->add_option("--corpus", corpus_path, "walk corpus")->required();
    embed->add_option("--dim", scfg.dim, "embedding dimension")->check(CLI::PositiveNumber);
    embed->add_option("--window", scfg.window, "context window")->check(CLI::PositiveNumber);
    embed->add_option("--negatives", scfg.negatives, "negative samples per pair")
        ->check(CLI::PositiveNumber);
    embed->add_option("--epochs", scfg.epochs, "training epochs")->check(CLI::PositiveNumber);
    embed->add_option("--lr", scfg.learning_rate, "initial learning rate");
    embed->add_option("--min-count", scfg.min_count, "minimum token count");
    embed->add_option("--seed", scfg.seed, "rng seed");
    embed->add_option("--threads", scfg.threads, "worker threads")->check(CLI::PositiveNumber);
    embed->add_option("--out", emb_path, "embedding table output")->required();

    // train
    auto* train = app.add_subcommand("train", "train the multi-sense LSTM mapper");
    MsLstmConfig mcfg;
    std::string pairs_path, kb_path, anchors = "off", dev_path, model_path;
    train->add_option("--pairs", pairs_path, "text<TAB>entity training pairs")->required();
    train->add_option("--kb-embeddings", kb_path, "KB embedding table")->required();
    train->add_option("--senses", mcfg.senses, "sense vectors per word")->check(CLI::PositiveNumber);
    train->add_option("--anchors", anchors, "add textual-feature anchor pairs")
        ->check(CLI::IsMember({"on", "off"}));
    train->add_option("--epochs", mcfg.epochs, "training epochs")->check(CLI::PositiveNumber);
    train->add_option("--batch", mcfg.batch_size, "batch size")->check(CLI::PositiveNumber);
    train->add_option("--embed-dim", mcfg.embed_dim, "word embedding dimension")
        ->check(CLI::PositiveNumber);
    train->add_option("--attn-hidden", mcfg.attn_hidden, "attention hidden units per sense")
        ->check(CLI::PositiveNumber);
    train->add_option("--hidden", mcfg.hidden_dim, "LSTM hidden units")->check(CLI::PositiveNumber);
    train->add_option("--dropout", mcfg.dropout_rate, "dropout rate")
        ->check(CLI::Range(0.0, 0.999999));
    train->add_option("--seed", mcfg.seed, "rng seed");
    train->add_flag_callback("--no-sense-update", [&] { mcfg.sense_updates = false; },
                             "disable the additive context updates of sense vectors");
    train->add_flag_callback("--no-sense-grad", [&] { mcfg.sense_gradients = false; },
                             "disable MSE gradients into sense vectors");
    train->add_option("--dev", dev_path, "dev pairs for per-epoch MSE logging");
    train->add_option("--model-out", model_path, "checkpoint output")->required();

    // eval
    auto* eval = app.add_subcommand("eval", "retrieval metrics on test pairs");
    std::vector<int> ks{1, 10, 20, 100};
    std::string metrics_out;
    eval->add_option("--model", model_path, "model checkpoint")->required();
    eval->add_option("--pairs", pairs_path, "test pairs")->required();
    eval->add_option("--kb-embeddings", kb_path, "KB embedding table")->required();
    eval->add_option("--ks", ks, "accuracy cutoffs")->delimiter(',');
    eval->add_option("--out", metrics_out, "machine-readable metrics output");

    // infer
    auto* infer_cmd = app.add_subcommand("infer", "map free text to ranked entities");
    std::string text;
    std::size_t top_k = 10;
    infer_cmd->add_option("--model", model_path, "model checkpoint")->required();
    infer_cmd->add_option("--kb-embeddings", kb_path, "KB embedding table")->required();
    infer_cmd->add_option("--text", text, "input text")->required();
    infer_cmd->add_option("--top", top_k, "entities to print")->check(CLI::PositiveNumber);

    // classify
    auto* classify = app.add_subcommand("classify", "linear classification of node vectors");
    double train_ratio = 0.5;
    std::uint64_t cls_seed = 1;
    std::string labels_path;
    classify->add_option("--embeddings", emb_path, "node embedding table")->required();
    classify->add_option("--labels", labels_path, "node_label<TAB>class_label lines")->required();
    classify->add_option("--train-ratio", train_ratio, "training fraction");
    classify->add_option("--seed", cls_seed, "rng seed");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 1;  // flag/usage problems are user errors
    }

    try {
        if (build->parsed()) return cmd_graph_build(edges_path, out_path);
        if (stats->parsed()) return cmd_graph_stats(edges_path);
        if (extend->parsed())
            return cmd_extend(edges_path, desc_path, exclude_path, out_graph, out_table);
        if (walk->parsed()) return cmd_walk(edges_path, wcfg, corpus_path);
        if (embed->parsed()) return cmd_embed(corpus_path, scfg, emb_path);
        if (train->parsed())
            return cmd_train(pairs_path, kb_path, mcfg, anchors, dev_path, model_path);
        if (eval->parsed()) return cmd_eval(model_path, pairs_path, kb_path, ks, metrics_out);
        if (infer_cmd->parsed()) return cmd_infer(model_path, kb_path, text, top_k);
        if (classify->parsed()) return cmd_classify(emb_path, labels_path, train_ratio, cls_seed);
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    } catch (const std::logic_error& e) {
        std::cerr << "internal error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
