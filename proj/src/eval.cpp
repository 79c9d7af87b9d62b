#include "mgcn/eval.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <numeric>

#include "mgcn/error.hpp"

namespace mgcn {

namespace {

void check_eval_set(std::span<const int> predicted, const LabelAssignment& truth,
                    std::span<const std::size_t> eval_set) {
    if (eval_set.empty()) throw ConfigError("evaluation set is empty");
    for (auto i : eval_set) {
        if (i >= predicted.size() || i >= truth.n || !truth.is_labeled(i)) {
            throw ConfigError("evaluation node " + std::to_string(i) +
                              " lacks a prediction or a ground-truth label");
        }
    }
}

}  // namespace

double accuracy(std::span<const int> predicted, const LabelAssignment& truth,
                std::span<const std::size_t> eval_set) {
    check_eval_set(predicted, truth, eval_set);
    std::size_t hits = 0;
    for (auto i : eval_set) hits += predicted[i] == truth.labels[i];
    return static_cast<double>(hits) / static_cast<double>(eval_set.size());
}

double weighted_f_measure(std::span<const int> predicted, const LabelAssignment& truth,
                          std::span<const std::size_t> eval_set) {
    check_eval_set(predicted, truth, eval_set);
    int classes = truth.num_classes;
    for (auto i : eval_set) classes = std::max(classes, predicted[i] + 1);
    std::vector<double> tp(static_cast<std::size_t>(classes), 0.0);
    std::vector<double> fp(tp.size(), 0.0);
    std::vector<double> support(tp.size(), 0.0);
    for (auto i : eval_set) {
        const auto y = static_cast<std::size_t>(truth.labels[i]);
        const auto p = static_cast<std::size_t>(predicted[i]);
        support[y] += 1.0;
        if (p == y) {
            tp[y] += 1.0;
        } else {
            fp[p] += 1.0;
        }
    }
    double weighted = 0.0;
    double total = 0.0;
    for (std::size_t y = 0; y < tp.size(); ++y) {
        if (support[y] == 0.0) continue;
        const double precision = tp[y] + fp[y] > 0.0 ? tp[y] / (tp[y] + fp[y]) : 0.0;
        const double recall = tp[y] / support[y];
        const double f1 = precision + recall > 0.0 ? 2.0 * precision * recall / (precision + recall) : 0.0;
        weighted += support[y] * f1;
        total += support[y];
    }
    return weighted / total;
}

const char* stage_name(Stage s) {
    switch (s) {
        case Stage::rank: return "rank";
        case Stage::rerank: return "rerank";
        case Stage::graph: return "graph";
        case Stage::train: return "train";
        case Stage::test: return "test";
    }
    return "?";
}

void PipelineConfig::validate() const {
    if (runs < 1) throw ConfigError("runs must be >= 1");
    if (num_folds < 2) throw ConfigError("folds must be >= 2");
    if (graph_k < 1) throw ConfigError("graph k must be >= 1");
    model.validate();
    train.validate();
}

std::uint64_t fold_seed(std::uint64_t base_seed, int run) {
    return mix_seed(base_seed, static_cast<std::uint64_t>(run));
}

std::uint64_t cell_seed(std::uint64_t base_seed, int run, std::size_t fold) {
    return mix_seed(fold_seed(base_seed, run), 0x5eedULL + fold);
}

PipelineConfig resolve_for_size(PipelineConfig config, std::size_t n) {
    if (config.depth == 0) config.depth = default_depth(n, config.graph_k, config.reranker.k_method);
    config.depth = std::min(config.depth, n);
    if (config.depth >= 2) config.graph_k = std::min(config.graph_k, config.depth - 1);
    config.reranker.k_method = std::min(config.reranker.k_method, config.depth);
    return config;
}

GraphStages build_graph_stages(const FeatureMatrix& x, const PipelineConfig& resolved,
                               StageTimer& timer) {
    GraphStages stages;
    timer.time(Stage::rank, [&] {
        stages.ranked = compute_ranked_lists(x, resolved.depth, resolved.backend);
    });
    timer.time(Stage::rerank, [&] { stages.reranked = rerank(stages.ranked, resolved.reranker); });
    timer.time(Stage::graph, [&] {
        stages.edges = build_edges(stages.reranked, resolved.graph_kind, resolved.graph_k);
        stages.a_hat = NormalizedAdjacency(stages.edges);
    });
    return stages;
}

namespace {

template <class Fn>
auto with_context(const std::string& where, Fn&& fn) {
    try {
        return fn();
    } catch (const DivergenceError& e) {
        throw DivergenceError(e.epoch(), where + ": " + e.what());
    } catch (const ConfigError& e) {
        throw ConfigError(where + ": " + e.what());
    } catch (const ValidationError& e) {
        throw ValidationError(where + ": " + e.what());
    } catch (const ParseError& e) {
        throw ParseError(where + ": " + e.what());
    } catch (const std::runtime_error& e) {
        throw std::runtime_error(where + ": " + e.what());
    }
}

}  // namespace

std::pair<double, double> mean_and_std(std::span<const double> values) {
    if (values.empty()) return {0.0, 0.0};
    const double mean = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
    double sq = 0.0;
    for (double v : values) sq += (v - mean) * (v - mean);
    return {mean, std::sqrt(sq / static_cast<double>(values.size()))};
}

RunReport run_protocol(const FeatureMatrix& x, const LabelAssignment& labels,
                       const PipelineConfig& config, bool keep_predictions) {
    config.validate();
    if (labels.n != x.rows()) throw ValidationError("label count does not match the feature matrix");
    if (!labels.complete()) throw ValidationError("protocol needs a label for every node");

    RunReport report;
    report.config = resolve_for_size(config, x.rows());
    const auto& cfg = report.config;

    for (int run = 0; run < cfg.runs; ++run) {
        const std::string run_ctx = "run " + std::to_string(run);
        StageTimer graph_timer;
        auto stages = with_context(run_ctx, [&] { return build_graph_stages(x, cfg, graph_timer); });
        auto plan = with_context(run_ctx, [&] {
            return make_folds(x.rows(), cfg.num_folds, fold_seed(cfg.base_seed, run));
        });

        for (std::size_t fold = 0; fold < cfg.num_folds; ++fold) {
            const std::string ctx = run_ctx + ", fold " + std::to_string(fold);
            with_context(ctx, [&] {
                StageTimer timer = graph_timer;
                const auto train_set = plan.members(fold);
                const auto eval_set = plan.non_members(fold);
                // Only the training fold's labels are handed to the trainer.
                const auto visible = labels.restricted_to(train_set);

                TrainConfig tc = cfg.train;
                tc.seed = cell_seed(cfg.base_seed, run, fold);
                TrainResult trained;
                timer.time(Stage::train, [&] {
                    trained = train(cfg.model, x, stages.a_hat, visible, train_set, tc);
                });
                std::vector<int> predicted;
                timer.time(Stage::test, [&] {
                    predicted = predict(forward(x, stages.a_hat, trained.params));
                });

                CellResult cell;
                cell.run = run;
                cell.fold = fold;
                cell.accuracy = accuracy(predicted, labels, eval_set);
                cell.f1 = weighted_f_measure(predicted, labels, eval_set);
                cell.train_size = train_set.size();
                cell.eval_size = eval_set.size();
                cell.timings = timer.all();
                if (keep_predictions) cell.predictions = std::move(predicted);
                report.cells.push_back(std::move(cell));
                return 0;
            });
        }
    }

    std::vector<double> acc;
    std::vector<double> f1;
    for (const auto& c : report.cells) {
        acc.push_back(c.accuracy);
        f1.push_back(c.f1);
    }
    std::tie(report.accuracy_mean, report.accuracy_std) = mean_and_std(acc);
    std::tie(report.f1_mean, report.f1_std) = mean_and_std(f1);
    for (std::size_t s = 0; s < kStageCount; ++s) {
        double total = 0.0;
        for (const auto& c : report.cells) total += c.timings[s];
        report.timing_means[s] = total / static_cast<double>(report.cells.size());
    }
    return report;
}

namespace {

const char* reranker_name(RerankerKind k) {
    switch (k) {
        case RerankerKind::identity: return "none";
        case RerankerKind::correlation: return "correlation";
        case RerankerKind::diffusion: return "diffusion";
    }
    return "?";
}

nlohmann::json timings_json(const StageTimings& t) {
    nlohmann::json out = nlohmann::json::object();
    for (auto s : kStages) out[stage_name(s)] = t[static_cast<std::size_t>(s)];
    return out;
}

}  // namespace

nlohmann::json config_to_json(const PipelineConfig& c) {
    return {
        {"rerank", reranker_name(c.reranker.kind)},
        {"method_k", c.reranker.k_method},
        {"correlation_iterations", c.reranker.iterations},
        {"diffusion_alpha", c.reranker.alpha},
        {"diffusion_eps", c.reranker.eps},
        {"diffusion_max_iter", c.reranker.max_iter},
        {"graph", c.graph_kind == GraphKind::knn ? "knn" : "reciprocal"},
        {"k", c.graph_k},
        {"depth", c.depth},
        {"backend", c.backend == SearchBackend::exact ? "exact" : "ball_tree"},
        {"model", to_string(c.model.variant)},
        {"hidden", c.model.hidden},
        {"sgc_power", c.model.sgc_power},
        {"appnp_alpha", c.model.appnp_alpha},
        {"appnp_steps", c.model.appnp_steps},
        {"epochs", c.train.epochs},
        {"lr", c.train.learning_rate},
        {"folds", c.num_folds},
        {"runs", c.runs},
        {"seed", c.base_seed},
    };
}

nlohmann::json report_to_json(const RunReport& report) {
    nlohmann::json cells = nlohmann::json::array();
    for (const auto& c : report.cells) {
        cells.push_back({{"run", c.run},
                         {"fold", c.fold},
                         {"accuracy", c.accuracy},
                         {"f1", c.f1},
                         {"train_size", c.train_size},
                         {"eval_size", c.eval_size},
                         {"timings", timings_json(c.timings)}});
    }
    return {
        {"config", config_to_json(report.config)},
        {"cells", cells},
        {"aggregates",
         {{"accuracy_mean", report.accuracy_mean},
          {"accuracy_std", report.accuracy_std},
          {"f1_mean", report.f1_mean},
          {"f1_std", report.f1_std}}},
        {"timings", timings_json(report.timing_means)},
    };
}

nlohmann::json strip_timings(nlohmann::json report) {
    report.erase("timings");
    for (auto& c : report["cells"]) c.erase("timings");
    return report;
}

void write_report_json(const std::filesystem::path& path, const RunReport& report) {
    std::ofstream out(path);
    if (!out) throw ConfigError("cannot write " + path.string());
    out << report_to_json(report).dump(2) << '\n';
}

void write_cells_csv(const std::filesystem::path& path, const RunReport& report) {
    std::ofstream out(path);
    if (!out) throw ConfigError("cannot write " + path.string());
    out << "run,fold,accuracy,f1,train_s,test_s\n" << std::setprecision(17);
    for (const auto& c : report.cells) {
        out << c.run << ',' << c.fold << ',' << c.accuracy << ',' << c.f1 << ','
            << c.timings[static_cast<std::size_t>(Stage::train)] << ','
            << c.timings[static_cast<std::size_t>(Stage::test)] << '\n';
    }
}

std::string format_accuracy(const RunReport& report) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.2f \xC2\xB1 %.4f", 100.0 * report.accuracy_mean,
                  100.0 * report.accuracy_std);
    return buf;
}

}  // namespace mgcn
