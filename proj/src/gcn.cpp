#include "mgcn/gcn.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <random>
#include <sstream>

#include "mgcn/error.hpp"

namespace mgcn {

std::string to_string(Variant v) {
    switch (v) {
        case Variant::gcn: return "gcn";
        case Variant::sgc: return "sgc";
        case Variant::appnp: return "appnp";
    }
    return "?";
}

Variant parse_variant(const std::string& name) {
    if (name == "gcn") return Variant::gcn;
    if (name == "sgc") return Variant::sgc;
    if (name == "appnp") return Variant::appnp;
    throw ConfigError("unknown model '" + name + "' (expected gcn, sgc or appnp)");
}

void ModelHyper::validate() const {
    if (variant != Variant::sgc && hidden < 1) throw ConfigError("hidden width must be >= 1");
    if (sgc_power < 0) throw ConfigError("SGC power K must be >= 0");
    if (!(appnp_alpha > 0.0 && appnp_alpha < 1.0)) throw ConfigError("APPNP alpha must lie in (0, 1)");
    if (appnp_steps < 0) throw ConfigError("APPNP steps must be >= 0");
}

std::vector<std::string> ModelParams::weight_names() const {
    if (hyper.variant == Variant::sgc) return {"W"};
    return {"W0", "W1"};
}

bool ModelParams::all_finite() const {
    for (const auto& w : weights)
        if (!w.allFinite()) return false;
    return true;
}

ModelParams init_params(const ModelHyper& hyper, std::size_t d, int classes, std::uint64_t seed) {
    hyper.validate();
    if (classes < 1) throw ConfigError("need at least one class");
    std::mt19937_64 rng(seed);
    auto glorot = [&](std::size_t fan_in, std::size_t fan_out) {
        const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
        std::uniform_real_distribution<double> dist(-limit, limit);
        Eigen::MatrixXd w(static_cast<Eigen::Index>(fan_in), static_cast<Eigen::Index>(fan_out));
        for (Eigen::Index k = 0; k < w.size(); ++k) w.data()[k] = dist(rng);
        return w;
    };
    const auto c = static_cast<std::size_t>(classes);
    ModelParams params{hyper, {}};
    if (hyper.variant == Variant::sgc) {
        params.weights.push_back(glorot(d, c));
    } else {
        params.weights.push_back(glorot(d, hyper.hidden));
        params.weights.push_back(glorot(hyper.hidden, c));
    }
    return params;
}

EmbeddingMatrix::EmbeddingMatrix(Eigen::MatrixXd probabilities) : probs_(std::move(probabilities)) {
    for (Eigen::Index i = 0; i < probs_.rows(); ++i) {
        if (std::abs(probs_.row(i).sum() - 1.0) > 1e-9 || (probs_.row(i).array() < 0.0).any() ||
            (probs_.row(i).array() > 1.0).any()) {
            throw ValidationError("embedding row " + std::to_string(i) + " is not a distribution");
        }
    }
}

Eigen::MatrixXd row_log_softmax(const Eigen::MatrixXd& logits) {
    Eigen::MatrixXd out(logits.rows(), logits.cols());
    for (Eigen::Index i = 0; i < logits.rows(); ++i) {
        const double peak = logits.row(i).maxCoeff();
        const double lse = peak + std::log((logits.row(i).array() - peak).exp().sum());
        out.row(i) = logits.row(i).array() - lse;
    }
    return out;
}

Eigen::MatrixXd row_softmax(const Eigen::MatrixXd& logits) {
    Eigen::MatrixXd out(logits.rows(), logits.cols());
    for (Eigen::Index i = 0; i < logits.rows(); ++i) {
        const double peak = logits.row(i).maxCoeff();
        out.row(i) = (logits.row(i).array() - peak).exp();
        out.row(i) /= out.row(i).sum();
    }
    return out;
}

namespace {

Eigen::MatrixXd activate(const Eigen::MatrixXd& pre, Activation act) {
    return act == Activation::relu ? Eigen::MatrixXd(pre.cwiseMax(0.0)) : pre;
}

Eigen::MatrixXd activate_backward(const Eigen::MatrixXd& grad, const Eigen::MatrixXd& pre,
                                  Activation act) {
    if (act == Activation::identity) return grad;
    return (pre.array() > 0.0).select(grad, 0.0);
}

void check_shapes(const ModelInputs& inputs, const ModelParams& params) {
    const auto n = inputs.features.rows();
    const auto d = inputs.features.cols();
    if (inputs.a_hat == nullptr || inputs.a_hat->rows() != n) {
        throw ConfigError("adjacency size does not match the feature matrix");
    }
    const auto& w = params.weights;
    if (params.hyper.variant == Variant::sgc) {
        if (w.size() != 1 || w[0].rows() != d) throw ConfigError("SGC weight shape mismatch");
        return;
    }
    if (w.size() != 2 || w[0].rows() != d || w[1].rows() != w[0].cols()) {
        throw ConfigError("weight shapes inconsistent with (d, H, c)");
    }
}

// Logits of the APPNP propagation Z_{t+1} = (1 - a) A Z_t + a H, Z_0 = H.
Eigen::MatrixXd appnp_propagate(const SparseRowMatrix& a_hat, const Eigen::MatrixXd& h,
                                double alpha, int steps) {
    Eigen::MatrixXd z = h;
    for (int t = 0; t < steps; ++t) {
        Eigen::MatrixXd az = a_hat * z;
        z = (1.0 - alpha) * az + alpha * h;
    }
    return z;
}

}  // namespace

ModelInputs prepare_inputs(const ModelHyper& hyper, const FeatureMatrix& x,
                           const NormalizedAdjacency& a_hat) {
    hyper.validate();
    if (a_hat.size() != x.rows()) throw ConfigError("adjacency size does not match the feature matrix");
    ModelInputs inputs;
    inputs.features = x.values();
    inputs.a_hat = &a_hat.matrix();
    switch (hyper.variant) {
        case Variant::gcn:
            inputs.propagated = a_hat.matrix() * inputs.features;
            break;
        case Variant::sgc:
            inputs.propagated = inputs.features;
            for (int k = 0; k < hyper.sgc_power; ++k) {
                Eigen::MatrixXd next = a_hat.matrix() * inputs.propagated;
                inputs.propagated.swap(next);
            }
            break;
        case Variant::appnp:
            break;
    }
    return inputs;
}

Eigen::MatrixXd compute_logits(const ModelInputs& inputs, const ModelParams& params) {
    check_shapes(inputs, params);
    const auto& hyper = params.hyper;
    const auto& w = params.weights;
    switch (hyper.variant) {
        case Variant::gcn: {
            Eigen::MatrixXd hidden = activate(inputs.propagated * w[0], hyper.hidden_activation);
            Eigen::MatrixXd projected = hidden * w[1];
            return *inputs.a_hat * projected;
        }
        case Variant::sgc:
            return inputs.propagated * w[0];
        case Variant::appnp: {
            Eigen::MatrixXd h = activate(inputs.features * w[0], hyper.hidden_activation) * w[1];
            return appnp_propagate(*inputs.a_hat, h, hyper.appnp_alpha, hyper.appnp_steps);
        }
    }
    throw std::logic_error("unknown variant");
}

EmbeddingMatrix forward(const FeatureMatrix& x, const NormalizedAdjacency& a_hat,
                        const ModelParams& params) {
    auto inputs = prepare_inputs(params.hyper, x, a_hat);
    return EmbeddingMatrix(row_softmax(compute_logits(inputs, params)));
}

namespace {

EmbeddingMatrix forward_as(Variant expected, const FeatureMatrix& x,
                           const NormalizedAdjacency& a_hat, const ModelParams& params) {
    if (params.hyper.variant != expected) {
        throw ConfigError("parameters are for " + to_string(params.hyper.variant) + ", not " +
                          to_string(expected));
    }
    return forward(x, a_hat, params);
}

}  // namespace

EmbeddingMatrix gcn_forward(const FeatureMatrix& x, const NormalizedAdjacency& a_hat,
                            const ModelParams& params) {
    return forward_as(Variant::gcn, x, a_hat, params);
}

EmbeddingMatrix sgc_forward(const FeatureMatrix& x, const NormalizedAdjacency& a_hat,
                            const ModelParams& params) {
    return forward_as(Variant::sgc, x, a_hat, params);
}

EmbeddingMatrix appnp_forward(const FeatureMatrix& x, const NormalizedAdjacency& a_hat,
                              const ModelParams& params) {
    return forward_as(Variant::appnp, x, a_hat, params);
}

std::vector<LabeledNode> training_targets(const LabelAssignment& labels,
                                          std::span<const std::size_t> mask) {
    if (mask.empty()) throw ConfigError("training mask is empty");
    std::vector<LabeledNode> out;
    out.reserve(mask.size());
    for (auto i : mask) {
        if (i >= labels.n || !labels.is_labeled(i)) {
            throw ConfigError("masked node " + std::to_string(i) + " has no label");
        }
        out.push_back({i, labels.labels[i]});
    }
    return out;
}

double masked_cross_entropy(const EmbeddingMatrix& z, const LabelAssignment& labels,
                            std::span<const std::size_t> mask) {
    auto targets = training_targets(labels, mask);
    double total = 0.0;
    for (const auto& t : targets) {
        total -= std::log(z.probabilities()(static_cast<Eigen::Index>(t.node), t.label));
    }
    return total / static_cast<double>(targets.size());
}

double masked_cross_entropy_logits(const Eigen::MatrixXd& logits,
                                   std::span<const LabeledNode> targets) {
    if (targets.empty()) throw ConfigError("training mask is empty");
    double total = 0.0;
    for (const auto& t : targets) {
        auto row = logits.row(static_cast<Eigen::Index>(t.node));
        const double peak = row.maxCoeff();
        const double lse = peak + std::log((row.array() - peak).exp().sum());
        total += lse - row(t.label);
    }
    return total / static_cast<double>(targets.size());
}

namespace {

// Gradient of the mean masked cross-entropy with respect to the logits rows
// listed in `targets`: (softmax - onehot) / m. Rows are indexed by position.
Eigen::MatrixXd target_logit_gradient(const Eigen::MatrixXd& target_logits,
                                      std::span<const LabeledNode> targets) {
    Eigen::MatrixXd grad = row_softmax(target_logits);
    for (std::size_t r = 0; r < targets.size(); ++r) grad(static_cast<Eigen::Index>(r), targets[r].label) -= 1.0;
    grad /= static_cast<double>(targets.size());
    return grad;
}

Eigen::MatrixXd gather_rows(const Eigen::MatrixXd& m, std::span<const LabeledNode> targets) {
    Eigen::MatrixXd out(static_cast<Eigen::Index>(targets.size()), m.cols());
    for (std::size_t r = 0; r < targets.size(); ++r)
        out.row(static_cast<Eigen::Index>(r)) = m.row(static_cast<Eigen::Index>(targets[r].node));
    return out;
}

Eigen::MatrixXd scatter_rows(const Eigen::MatrixXd& rows, std::span<const LabeledNode> targets,
                             Eigen::Index n) {
    Eigen::MatrixXd out = Eigen::MatrixXd::Zero(n, rows.cols());
    for (std::size_t r = 0; r < targets.size(); ++r)
        out.row(static_cast<Eigen::Index>(targets[r].node)) += rows.row(static_cast<Eigen::Index>(r));
    return out;
}

double loss_from_target_logits(const Eigen::MatrixXd& target_logits,
                               std::span<const LabeledNode> targets) {
    double total = 0.0;
    for (std::size_t r = 0; r < targets.size(); ++r) {
        auto row = target_logits.row(static_cast<Eigen::Index>(r));
        const double peak = row.maxCoeff();
        total += peak + std::log((row.array() - peak).exp().sum()) - row(targets[r].label);
    }
    return total / static_cast<double>(targets.size());
}

}  // namespace

double loss_and_gradients(const ModelInputs& inputs, const ModelParams& params,
                          std::span<const LabeledNode> targets,
                          std::vector<Eigen::MatrixXd>& gradients) {
    check_shapes(inputs, params);
    if (targets.empty()) throw ConfigError("training mask is empty");
    const auto& hyper = params.hyper;
    const auto& w = params.weights;
    const auto& a_hat = *inputs.a_hat;
    const Eigen::Index n = inputs.features.rows();
    gradients.resize(w.size());

    switch (hyper.variant) {
        case Variant::sgc: {
            // Only the labeled rows enter the loss.
            Eigen::MatrixXd features = gather_rows(inputs.propagated, targets);
            Eigen::MatrixXd logits = features * w[0];
            gradients[0] = features.transpose() * target_logit_gradient(logits, targets);
            return loss_from_target_logits(logits, targets);
        }
        case Variant::gcn: {
            Eigen::MatrixXd pre = inputs.propagated * w[0];
            Eigen::MatrixXd hidden = activate(pre, hyper.hidden_activation);
            Eigen::MatrixXd projected = hidden * w[1];
            Eigen::MatrixXd logits = a_hat * projected;
            Eigen::MatrixXd target_logits = gather_rows(logits, targets);
            Eigen::MatrixXd d_logits = scatter_rows(target_logit_gradient(target_logits, targets), targets, n);
            Eigen::MatrixXd d_projected = a_hat.transpose() * d_logits;
            gradients[1] = hidden.transpose() * d_projected;
            Eigen::MatrixXd d_hidden = d_projected * w[1].transpose();
            gradients[0] = inputs.propagated.transpose() *
                           activate_backward(d_hidden, pre, hyper.hidden_activation);
            return loss_from_target_logits(target_logits, targets);
        }
        case Variant::appnp: {
            Eigen::MatrixXd pre = inputs.features * w[0];
            Eigen::MatrixXd hidden = activate(pre, hyper.hidden_activation);
            Eigen::MatrixXd h = hidden * w[1];
            Eigen::MatrixXd logits = appnp_propagate(a_hat, h, hyper.appnp_alpha, hyper.appnp_steps);
            Eigen::MatrixXd target_logits = gather_rows(logits, targets);
            Eigen::MatrixXd g = scatter_rows(target_logit_gradient(target_logits, targets), targets, n);
            Eigen::MatrixXd d_h = Eigen::MatrixXd::Zero(h.rows(), h.cols());
            for (int t = 0; t < hyper.appnp_steps; ++t) {
                d_h += hyper.appnp_alpha * g;
                Eigen::MatrixXd back = a_hat.transpose() * g;
                g = (1.0 - hyper.appnp_alpha) * back;
            }
            d_h += g;
            gradients[1] = hidden.transpose() * d_h;
            Eigen::MatrixXd d_hidden = d_h * w[1].transpose();
            gradients[0] = inputs.features.transpose() *
                           activate_backward(d_hidden, pre, hyper.hidden_activation);
            return loss_from_target_logits(target_logits, targets);
        }
    }
    throw std::logic_error("unknown variant");
}

void TrainConfig::validate() const {
    if (epochs < 1) throw ConfigError("epochs must be >= 1");
    if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) {
        throw ConfigError("learning rate must be finite and non-negative");
    }
}

TrainResult train(const ModelHyper& hyper, const FeatureMatrix& x,
                  const NormalizedAdjacency& a_hat, const LabelAssignment& labels,
                  std::span<const std::size_t> train_mask, const TrainConfig& config) {
    config.validate();
    if (labels.n != x.rows()) throw ConfigError("label count does not match the feature matrix");
    const auto targets = training_targets(labels, train_mask);
    const auto inputs = prepare_inputs(hyper, x, a_hat);

    TrainResult result{init_params(hyper, x.cols(), labels.num_classes, config.seed), {}, 0.0};
    auto& weights = result.params.weights;

    std::vector<Eigen::MatrixXd> first_moment;
    std::vector<Eigen::MatrixXd> second_moment;
    for (const auto& w : weights) {
        first_moment.push_back(Eigen::MatrixXd::Zero(w.rows(), w.cols()));
        second_moment.push_back(Eigen::MatrixXd::Zero(w.rows(), w.cols()));
    }
    std::vector<Eigen::MatrixXd> grads;
    if (config.record_history) result.loss_history.reserve(static_cast<std::size_t>(config.epochs));

    double beta1_power = 1.0;
    double beta2_power = 1.0;
    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        const double loss = loss_and_gradients(inputs, result.params, targets, grads);
        if (!std::isfinite(loss)) {
            throw DivergenceError(epoch, "non-finite loss at epoch " + std::to_string(epoch));
        }
        if (config.record_history) result.loss_history.push_back(loss);

        beta1_power *= config.beta1;
        beta2_power *= config.beta2;
        const double step = config.learning_rate / (1.0 - beta1_power);
        const double v_correction = 1.0 / (1.0 - beta2_power);
        for (std::size_t k = 0; k < weights.size(); ++k) {
            first_moment[k] = config.beta1 * first_moment[k] + (1.0 - config.beta1) * grads[k];
            second_moment[k] = config.beta2 * second_moment[k] +
                               (1.0 - config.beta2) * grads[k].cwiseProduct(grads[k]);
            weights[k].array() -= step * first_moment[k].array() /
                                  ((second_moment[k].array() * v_correction).sqrt() + config.adam_eps);
        }
    }
    result.final_loss = loss_and_gradients(inputs, result.params, targets, grads);
    if (!std::isfinite(result.final_loss)) {
        throw DivergenceError(config.epochs, "non-finite loss after the final update");
    }
    return result;
}

std::vector<int> predict(const EmbeddingMatrix& z) {
    const auto& p = z.probabilities();
    std::vector<int> out(static_cast<std::size_t>(p.rows()));
    for (Eigen::Index i = 0; i < p.rows(); ++i) {
        Eigen::Index best = 0;
        for (Eigen::Index j = 1; j < p.cols(); ++j)
            if (p(i, j) > p(i, best)) best = j;
        out[static_cast<std::size_t>(i)] = static_cast<int>(best);
    }
    return out;
}

void save_params(const std::filesystem::path& dir, const ModelParams& params) {
    std::filesystem::create_directories(dir);
    std::ofstream manifest(dir / "manifest.txt");
    if (!manifest) throw ConfigError("cannot write " + (dir / "manifest.txt").string());
    const auto& h = params.hyper;
    manifest << "variant " << to_string(h.variant) << '\n'
             << "hidden " << h.hidden << '\n'
             << "sgc_power " << h.sgc_power << '\n'
             << "appnp_alpha " << h.appnp_alpha << '\n'
             << "appnp_steps " << h.appnp_steps << '\n';
    auto names = params.weight_names();
    for (std::size_t k = 0; k < params.weights.size(); ++k) {
        const auto file = names[k] + ".fmat";
        write_fmat(dir / file, RowMatrix(params.weights[k]));
        manifest << "weight " << names[k] << ' ' << file << '\n';
    }
}

ModelParams load_params(const std::filesystem::path& dir) {
    std::ifstream manifest(dir / "manifest.txt");
    if (!manifest) throw ParseError("cannot open " + (dir / "manifest.txt").string());
    ModelParams params;
    std::string line;
    while (std::getline(manifest, line)) {
        std::istringstream fields(line);
        std::string key;
        if (!(fields >> key)) continue;
        if (key == "variant") {
            std::string v;
            fields >> v;
            params.hyper.variant = parse_variant(v);
        } else if (key == "hidden") {
            fields >> params.hyper.hidden;
        } else if (key == "sgc_power") {
            fields >> params.hyper.sgc_power;
        } else if (key == "appnp_alpha") {
            fields >> params.hyper.appnp_alpha;
        } else if (key == "appnp_steps") {
            fields >> params.hyper.appnp_steps;
        } else if (key == "weight") {
            std::string name, file;
            fields >> name >> file;
            params.weights.emplace_back(read_fmat(dir / file));
        } else {
            throw ParseError("unknown manifest key '" + key + "'");
        }
        if (fields.fail()) throw ParseError("malformed manifest line '" + line + "'");
    }
    return params;
}

void write_loss_history(const std::filesystem::path& path, std::span<const double> history) {
    std::ofstream out(path);
    if (!out) throw ConfigError("cannot write " + path.string());
    out << "epoch,loss\n" << std::setprecision(17);
    for (std::size_t e = 0; e < history.size(); ++e) out << e << ',' << history[e] << '\n';
}

}  // namespace mgcn
