#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include "mgcn/dataset.hpp"
#include "mgcn/graph.hpp"

namespace mgcn {

enum class Variant { gcn, sgc, appnp };

std::string to_string(Variant v);
Variant parse_variant(const std::string& name);

enum class Activation { relu, identity };

struct ModelHyper {
    Variant variant = Variant::gcn;
    std::size_t hidden = 256;   // gcn, appnp
    int sgc_power = 2;          // K in softmax(A^K X W)
    double appnp_alpha = 0.1;   // teleport weight of the propagation
    int appnp_steps = 10;
    Activation hidden_activation = Activation::relu;

    void validate() const;
};

/// Trainable weights. gcn/appnp hold {W0 (d x H), W1 (H x c)}; sgc holds {W (d x c)}.
struct ModelParams {
    ModelHyper hyper;
    std::vector<Eigen::MatrixXd> weights;

    std::vector<std::string> weight_names() const;
    bool all_finite() const;
};

/// Seeded Glorot-uniform initialization.
ModelParams init_params(const ModelHyper& hyper, std::size_t d, int classes, std::uint64_t seed);

/// Row-stochastic n x c class distribution.
class EmbeddingMatrix {
public:
    EmbeddingMatrix() = default;
    /// Checks every row is a probability distribution within 1e-9.
    explicit EmbeddingMatrix(Eigen::MatrixXd probabilities);

    const Eigen::MatrixXd& probabilities() const { return probs_; }
    std::size_t rows() const { return static_cast<std::size_t>(probs_.rows()); }
    std::size_t classes() const { return static_cast<std::size_t>(probs_.cols()); }

private:
    Eigen::MatrixXd probs_;
};

Eigen::MatrixXd row_softmax(const Eigen::MatrixXd& logits);
Eigen::MatrixXd row_log_softmax(const Eigen::MatrixXd& logits);

/// Graph-dependent preprocessing shared by every forward pass of one variant:
/// A X for gcn, A^K X for sgc, X for appnp.
struct ModelInputs {
    Eigen::MatrixXd features;
    Eigen::MatrixXd propagated;
    const SparseRowMatrix* a_hat = nullptr;
};

ModelInputs prepare_inputs(const ModelHyper& hyper, const FeatureMatrix& x,
                           const NormalizedAdjacency& a_hat);

Eigen::MatrixXd compute_logits(const ModelInputs& inputs, const ModelParams& params);

EmbeddingMatrix gcn_forward(const FeatureMatrix& x, const NormalizedAdjacency& a_hat,
                            const ModelParams& params);
EmbeddingMatrix sgc_forward(const FeatureMatrix& x, const NormalizedAdjacency& a_hat,
                            const ModelParams& params);
EmbeddingMatrix appnp_forward(const FeatureMatrix& x, const NormalizedAdjacency& a_hat,
                              const ModelParams& params);
/// Dispatches on params.hyper.variant.
EmbeddingMatrix forward(const FeatureMatrix& x, const NormalizedAdjacency& a_hat,
                        const ModelParams& params);

struct LabeledNode {
    std::size_t node;
    int label;
};

/// Labeled nodes of `labels` restricted to `mask`; throws ConfigError when empty
/// or when a masked node carries no label.
std::vector<LabeledNode> training_targets(const LabelAssignment& labels,
                                          std::span<const std::size_t> mask);

/// Mean of -ln Z[i, y_i] over the masked nodes.
double masked_cross_entropy(const EmbeddingMatrix& z, const LabelAssignment& labels,
                            std::span<const std::size_t> mask);

/// Same loss evaluated from logits through log-sum-exp.
double masked_cross_entropy_logits(const Eigen::MatrixXd& logits,
                                   std::span<const LabeledNode> targets);

/// Loss and its analytic gradient with respect to every weight matrix.
double loss_and_gradients(const ModelInputs& inputs, const ModelParams& params,
                          std::span<const LabeledNode> targets,
                          std::vector<Eigen::MatrixXd>& gradients);

struct TrainConfig {
    int epochs = 200;
    double learning_rate = 1e-5;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_eps = 1e-8;
    std::uint64_t seed = 0;
    bool record_history = false;

    void validate() const;
};

struct TrainResult {
    ModelParams params;
    std::vector<double> loss_history;  // loss before each update, when recorded
    double final_loss = 0.0;           // loss after the last update
};

/// Full-batch Adam on the masked cross-entropy. Only labels inside
/// `train_mask` are read. Throws DivergenceError on a non-finite loss.
TrainResult train(const ModelHyper& hyper, const FeatureMatrix& x,
                  const NormalizedAdjacency& a_hat, const LabelAssignment& labels,
                  std::span<const std::size_t> train_mask, const TrainConfig& config);

/// Row-wise argmax, ties to the lowest class id.
std::vector<int> predict(const EmbeddingMatrix& z);

// Manifest plus one FMAT file per weight matrix.
void save_params(const std::filesystem::path& dir, const ModelParams& params);
ModelParams load_params(const std::filesystem::path& dir);

void write_loss_history(const std::filesystem::path& path, std::span<const double> history);

}  // namespace mgcn
