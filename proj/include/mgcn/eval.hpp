#pragma once

#include <array>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mgcn/dataset.hpp"
#include "mgcn/gcn.hpp"
#include "mgcn/graph.hpp"
#include "mgcn/manifold.hpp"
#include "mgcn/ranking.hpp"

namespace mgcn {

double accuracy(std::span<const int> predicted, const LabelAssignment& truth,
                std::span<const std::size_t> eval_set);

/// Support-weighted mean of per-class F1 over the classes present in the
/// evaluation set's ground truth.
double weighted_f_measure(std::span<const int> predicted, const LabelAssignment& truth,
                          std::span<const std::size_t> eval_set);

enum class Stage { rank, rerank, graph, train, test };
inline constexpr std::size_t kStageCount = 5;
inline constexpr std::array<Stage, kStageCount> kStages{Stage::rank, Stage::rerank, Stage::graph,
                                                        Stage::train, Stage::test};
const char* stage_name(Stage s);

using StageTimings = std::array<double, kStageCount>;

/// Wall-clock seconds per pipeline stage, on a monotonic clock.
class StageTimer {
public:
    template <class Work>
    double time(Stage stage, Work&& work) {
        const auto start = std::chrono::steady_clock::now();
        std::forward<Work>(work)();
        const std::chrono::duration<double> elapsed = std::chrono::steady_clock::now() - start;
        seconds_[static_cast<std::size_t>(stage)] += elapsed.count();
        return elapsed.count();
    }

    double seconds(Stage stage) const { return seconds_[static_cast<std::size_t>(stage)]; }
    const StageTimings& all() const { return seconds_; }

private:
    StageTimings seconds_{};
};

struct PipelineConfig {
    RerankerSpec reranker;
    GraphKind graph_kind = GraphKind::knn;
    std::size_t graph_k = 40;
    std::size_t depth = 0;  // 0: default_depth(n, graph_k, method k)
    SearchBackend backend = SearchBackend::ball_tree;
    ModelHyper model;
    TrainConfig train;
    std::size_t num_folds = 10;
    int runs = 5;
    std::uint64_t base_seed = 0;

    void validate() const;
};

/// Seed of the fold shuffle in run `run`.
std::uint64_t fold_seed(std::uint64_t base_seed, int run);
/// Weight-initialization seed of cell (run, fold).
std::uint64_t cell_seed(std::uint64_t base_seed, int run, std::size_t fold);

/// Parameters actually used for an n-node collection: depth defaulted, and
/// graph/method k clamped so they fit inside the lists.
PipelineConfig resolve_for_size(PipelineConfig config, std::size_t n);

struct CellResult {
    int run = 0;
    std::size_t fold = 0;
    double accuracy = 0.0;
    double f1 = 0.0;
    std::size_t train_size = 0;
    std::size_t eval_size = 0;
    StageTimings timings{};
    std::vector<int> predictions;  // filled only when requested
};

struct RunReport {
    PipelineConfig config;
    std::vector<CellResult> cells;
    double accuracy_mean = 0.0;
    double accuracy_std = 0.0;
    double f1_mean = 0.0;
    double f1_std = 0.0;
    StageTimings timing_means{};
};

/// The unsupervised part of one run: ranked lists, re-ranking and the graph.
struct GraphStages {
    RankedLists ranked;
    RankedLists reranked;
    EdgeSet edges;
    NormalizedAdjacency a_hat;
};

GraphStages build_graph_stages(const FeatureMatrix& x, const PipelineConfig& resolved,
                               StageTimer& timer);

/// Multi-run, k-fold protocol: per run the graph is built once from all data
/// without labels; per fold the model trains on that fold's labels only and is
/// evaluated on every other node.
RunReport run_protocol(const FeatureMatrix& x, const LabelAssignment& labels,
                       const PipelineConfig& config, bool keep_predictions = false);

/// Population mean and standard deviation.
std::pair<double, double> mean_and_std(std::span<const double> values);

nlohmann::json config_to_json(const PipelineConfig& config);
nlohmann::json report_to_json(const RunReport& report);
/// JSON without any timing fields, for reproducibility comparisons.
nlohmann::json strip_timings(nlohmann::json report);

void write_report_json(const std::filesystem::path& path, const RunReport& report);
// "run,fold,accuracy,f1,train_s,test_s"
void write_cells_csv(const std::filesystem::path& path, const RunReport& report);

/// "MM.MM ± S.SSSS" with both values in percent.
std::string format_accuracy(const RunReport& report);

}  // namespace mgcn
