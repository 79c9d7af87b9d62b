#include "mgcn/cli.hpp"

#include <filesystem>
#include <fstream>
#include <map>
#include <ostream>

#include <CLI11.hpp>

#include "mgcn/dataset.hpp"
#include "mgcn/error.hpp"
#include "mgcn/eval.hpp"
#include "mgcn/gcn.hpp"
#include "mgcn/graph.hpp"
#include "mgcn/manifold.hpp"
#include "mgcn/ranking.hpp"

namespace mgcn::cli {

namespace {

namespace fs = std::filesystem;

const std::map<std::string, SearchBackend> kBackends{{"exact", SearchBackend::exact},
                                                     {"ball_tree", SearchBackend::ball_tree}};
const std::map<std::string, RerankerKind> kRerankers{{"none", RerankerKind::identity},
                                                     {"correlation", RerankerKind::correlation},
                                                     {"diffusion", RerankerKind::diffusion}};
const std::map<std::string, GraphKind> kGraphs{{"knn", GraphKind::knn},
                                               {"reciprocal", GraphKind::reciprocal}};
const std::map<std::string, Variant> kModels{{"gcn", Variant::gcn},
                                             {"sgc", Variant::sgc},
                                             {"appnp", Variant::appnp}};

struct RerankFlags {
    std::string method = "none";
    RerankerSpec spec;

    void add_to(CLI::App& cmd) {
        cmd.add_option("--rerank,--method", method, "Re-ranking method")
            ->check(CLI::IsMember({"none", "correlation", "diffusion"}));
        cmd.add_option("--method-k", spec.k_method, "Neighborhood size of the re-ranker");
        cmd.add_option("--iterations", spec.iterations, "Correlation re-ranking passes");
        cmd.add_option("--alpha", spec.alpha, "Diffusion damping in (0,1)");
        cmd.add_option("--eps", spec.eps, "Diffusion convergence tolerance");
        cmd.add_option("--max-iter", spec.max_iter, "Diffusion iteration cap");
    }

    RerankerSpec resolved() const {
        RerankerSpec s = spec;
        s.kind = kRerankers.at(method);
        return s;
    }
};

struct ModelFlags {
    std::string model = "gcn";
    ModelHyper hyper;
    TrainConfig train;

    void add_to(CLI::App& cmd) {
        cmd.add_option("--model", model, "GCN variant")->check(CLI::IsMember({"gcn", "sgc", "appnp"}));
        cmd.add_option("--epochs", train.epochs, "Full-batch training steps");
        cmd.add_option("--lr", train.learning_rate, "Adam learning rate");
        cmd.add_option("--hidden", hyper.hidden, "Hidden width (gcn, appnp)");
        cmd.add_option("--sgc-k", hyper.sgc_power, "SGC propagation power");
        cmd.add_option("--appnp-alpha", hyper.appnp_alpha, "APPNP teleport weight");
        cmd.add_option("--appnp-steps", hyper.appnp_steps, "APPNP propagation steps");
    }

    ModelHyper resolved() const {
        ModelHyper h = hyper;
        h.variant = kModels.at(model);
        return h;
    }
};

FeatureMatrix read_features(const fs::path& path) {
    return load_features(path, format_from_path(path));
}

void write_predictions(const fs::path& path, const std::vector<int>& predicted,
                       const LabelAssignment& labels) {
    std::ofstream out(path);
    if (!out) throw ConfigError("cannot write " + path.string());
    for (std::size_t i = 0; i < predicted.size(); ++i)
        out << i << ',' << labels.class_names[static_cast<std::size_t>(predicted[i])] << '\n';
}

struct Commands {
    explicit Commands(std::ostream& o) : out(o) {}

    std::ostream& out;

    // synth
    std::size_t synth_n = 1000;
    int synth_classes = 10;
    std::size_t synth_dims = 32;
    double synth_spread = 0.5;
    std::uint64_t seed = 0;
    fs::path features_out;
    fs::path labels_out;

    // shared paths
    fs::path features;
    fs::path labels;
    fs::path lists;
    fs::path edges;
    fs::path out_path;

    // rank
    std::size_t depth = 0;
    std::string backend = "ball_tree";

    RerankFlags rerank;

    // graph
    std::string graph = "knn";
    std::size_t k = 40;
    bool k_given = false;
    fs::path adjacency_out;

    ModelFlags model;
    std::size_t folds = 10;
    std::size_t fold = 0;
    int run = 0;
    int runs = 5;
    fs::path params_out;
    fs::path history_out;
    fs::path predictions_out;

    void synth() {
        auto data = synth_blobs(synth_n, synth_classes, synth_dims, synth_spread, seed);
        save_features(features_out, data.features, format_from_path(features_out));
        save_labels(labels_out, data.labels);
    }

    void rank() {
        auto x = read_features(features);
        std::size_t d = depth == 0 ? default_depth(x.rows(), 40, 40) : depth;
        if (d > x.rows()) {
            throw ConfigError("--depth " + std::to_string(d) + " exceeds the collection size n=" +
                              std::to_string(x.rows()));
        }
        write_ranked_lists(out_path, compute_ranked_lists(x, d, kBackends.at(backend)));
    }

    void do_rerank() {
        auto input = read_ranked_lists(lists);
        auto spec = rerank.resolved();
        if (spec.k_method > input.depth()) {
            throw ConfigError("--method-k " + std::to_string(spec.k_method) +
                              " exceeds the list depth " + std::to_string(input.depth()));
        }
        write_ranked_lists(out_path, mgcn::rerank(input, spec));
    }

    void do_graph() {
        auto input = read_ranked_lists(lists);
        if (!k_given) k = std::min(k, input.depth() - 1);
        if (k >= input.depth()) {
            throw ConfigError("--k " + std::to_string(k) + " must be below the list depth " +
                              std::to_string(input.depth()));
        }
        auto e = build_edges(input, kGraphs.at(graph), k);
        write_edges(out_path, e);
        if (!adjacency_out.empty()) write_adjacency(adjacency_out, NormalizedAdjacency(e));
    }

    void do_train() {
        auto x = read_features(features);
        auto truth = load_labels(labels, x.rows());
        auto a_hat = NormalizedAdjacency(read_edges(edges, x.rows()));
        if (fold >= folds) throw ConfigError("--fold must be below --folds");
        auto plan = make_folds(x.rows(), folds, fold_seed(seed, run));
        auto train_set = plan.members(fold);
        auto visible = truth.restricted_to(train_set);

        TrainConfig tc = model.train;
        tc.seed = cell_seed(seed, run, fold);
        tc.record_history = !history_out.empty();
        auto trained = train(model.resolved(), x, a_hat, visible, train_set, tc);
        auto predicted = predict(forward(x, a_hat, trained.params));

        if (!predictions_out.empty()) write_predictions(predictions_out, predicted, truth);
        if (!params_out.empty()) save_params(params_out, trained.params);
        if (!history_out.empty()) write_loss_history(history_out, trained.loss_history);

        auto eval_set = plan.non_members(fold);
        bool scorable = std::all_of(eval_set.begin(), eval_set.end(),
                                    [&](std::size_t i) { return truth.is_labeled(i); });
        if (scorable) {
            out << "accuracy " << accuracy(predicted, truth, eval_set) << " weighted_f1 "
                << weighted_f_measure(predicted, truth, eval_set) << '\n';
        }
    }

    void pipeline() {
        auto x = read_features(features);
        auto truth = load_labels(labels, x.rows());
        PipelineConfig cfg;
        cfg.reranker = rerank.resolved();
        cfg.graph_kind = kGraphs.at(graph);
        cfg.graph_k = k;
        cfg.depth = depth;
        cfg.backend = kBackends.at(backend);
        cfg.model = model.resolved();
        cfg.train = model.train;
        cfg.num_folds = folds;
        cfg.runs = runs;
        cfg.base_seed = seed;
        auto report = run_protocol(x, truth, cfg, !predictions_out.empty());

        fs::create_directories(out_path);
        write_report_json(out_path / "report.json", report);
        write_cells_csv(out_path / "cells.csv", report);
        if (!predictions_out.empty()) {
            std::ofstream pred(predictions_out);
            if (!pred) throw ConfigError("cannot write " + predictions_out.string());
            pred << "run,fold,index,label\n";
            for (const auto& c : report.cells)
                for (std::size_t i = 0; i < c.predictions.size(); ++i)
                    pred << c.run << ',' << c.fold << ',' << i << ','
                         << truth.class_names[static_cast<std::size_t>(c.predictions[i])] << '\n';
        }
        out << format_accuracy(report) << '\n';
    }
};

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Rank-based manifold learning + graph convolutional networks for semi-supervised classification",
                 "mgcn"};
    app.require_subcommand(1);
    Commands c(out);

    auto* synth = app.add_subcommand("synth", "Generate a Gaussian-blob dataset");
    synth->add_option("--n", c.synth_n, "Element count");
    synth->add_option("--classes", c.synth_classes, "Class count");
    synth->add_option("--dims", c.synth_dims, "Feature dimensionality");
    synth->add_option("--spread", c.synth_spread, "Noise standard deviation");
    synth->add_option("--seed", c.seed, "Random seed");
    synth->add_option("--features-out", c.features_out, "Feature file (.csv or FMAT)")->required();
    synth->add_option("--labels-out", c.labels_out, "Label file")->required();

    auto* rank = app.add_subcommand("rank", "Compute ranked lists from features");
    rank->add_option("--features", c.features, "Feature file (.csv or FMAT)")->required();
    rank->add_option("--depth", c.depth, "List depth L (default min(n, 200))");
    rank->add_option("--backend", c.backend, "Search backend")
        ->check(CLI::IsMember({"exact", "ball_tree"}));
    rank->add_option("--out", c.out_path, "Ranked-lists output")->required();

    auto* rr = app.add_subcommand("rerank", "Re-rank lists with unsupervised manifold learning");
    rr->add_option("--lists", c.lists, "Ranked-lists input")->required();
    c.rerank.add_to(*rr);
    rr->add_option("--out", c.out_path, "Ranked-lists output")->required();

    auto* graph = app.add_subcommand("graph", "Build a kNN or reciprocal kNN edge list");
    graph->add_option("--lists", c.lists, "Ranked-lists input")->required();
    graph->add_option("--graph", c.graph, "Graph kind")->check(CLI::IsMember({"knn", "reciprocal"}));
    auto* graph_k = graph->add_option("--k", c.k, "Neighborhood size (default 40, clamped to L-1)");
    graph->add_option("--out", c.out_path, "Edge-list output")->required();
    graph->add_option("--adjacency-out", c.adjacency_out, "Normalized adjacency triplets");

    auto* tr = app.add_subcommand("train", "Train on one fold and predict every node");
    tr->add_option("--features", c.features, "Feature file")->required();
    tr->add_option("--labels", c.labels, "Label file")->required();
    tr->add_option("--edges", c.edges, "Edge list")->required();
    c.model.add_to(*tr);
    tr->add_option("--folds", c.folds, "Fold count");
    tr->add_option("--fold", c.fold, "Training fold");
    tr->add_option("--run", c.run, "Run index (selects the fold shuffle)");
    tr->add_option("--seed", c.seed, "Base seed");
    tr->add_option("--predictions", c.predictions_out, "Predictions output (index,label)");
    tr->add_option("--params-out", c.params_out, "Directory for trained weights");
    tr->add_option("--history", c.history_out, "Loss history CSV");

    auto* pipe = app.add_subcommand("pipeline", "Run the full multi-run k-fold protocol");
    pipe->add_option("--features", c.features, "Feature file")->required();
    pipe->add_option("--labels", c.labels, "Label file")->required();
    c.rerank.add_to(*pipe);
    pipe->add_option("--graph", c.graph, "Graph kind")->check(CLI::IsMember({"knn", "reciprocal"}));
    pipe->add_option("--k", c.k, "Graph neighborhood size");
    pipe->add_option("--depth", c.depth, "List depth (default min(n, 5 max(k, method-k)))");
    pipe->add_option("--backend", c.backend, "Search backend")
        ->check(CLI::IsMember({"exact", "ball_tree"}));
    c.model.add_to(*pipe);
    pipe->add_option("--folds", c.folds, "Fold count");
    pipe->add_option("--runs", c.runs, "Repetitions");
    pipe->add_option("--seed", c.seed, "Base seed");
    pipe->add_option("--out", c.out_path, "Output directory for report.json and cells.csv")->required();
    pipe->add_option("--predictions", c.predictions_out, "Per-cell predictions CSV");

    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return kExitOk;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << '\n';
        auto* sub = app.get_subcommands().empty() ? &app : app.get_subcommands().front();
        err << sub->help();
        return kExitUsage;
    }

    try {
        if (synth->parsed()) c.synth();
        if (rank->parsed()) c.rank();
        if (rr->parsed()) c.do_rerank();
        if (graph->parsed()) {
            c.k_given = graph_k->count() > 0;
            c.do_graph();
        }
        if (tr->parsed()) c.do_train();
        if (pipe->parsed()) c.pipeline();
    } catch (const ConfigError& e) {
        err << "error: " << e.what() << '\n';
        return kExitUsage;
    } catch (const ParseError& e) {
        err << "error: " << e.what() << '\n';
        return kExitData;
    } catch (const ValidationError& e) {
        err << "error: " << e.what() << '\n';
        return kExitData;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return kExitRuntime;
    }
    return kExitOk;
}

}  // namespace mgcn::cli
