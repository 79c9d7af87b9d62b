#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "grad_check.hpp"
#include "mgcn/error.hpp"
#include "mgcn/gcn.hpp"
#include "mgcn/graph.hpp"
#include "test_util.hpp"

using namespace mgcn;

namespace {

Eigen::MatrixXd mat(Eigen::Index rows, Eigen::Index cols, std::initializer_list<double> v) {
    Eigen::MatrixXd m(rows, cols);
    Eigen::Index k = 0;
    for (double x : v) {
        m(k / cols, k % cols) = x;
        ++k;
    }
    return m;
}

FeatureMatrix features(const Eigen::MatrixXd& m) { return FeatureMatrix(RowMatrix(m)); }

ModelParams params_of(Variant v, std::vector<Eigen::MatrixXd> weights) {
    ModelParams p;
    p.hyper.variant = v;
    if (v != Variant::sgc) p.hyper.hidden = static_cast<std::size_t>(weights[0].cols());
    p.weights = std::move(weights);
    return p;
}

NormalizedAdjacency empty_graph(std::size_t n) { return NormalizedAdjacency(EdgeSet(n, {})); }

NormalizedAdjacency pair_graph() { return NormalizedAdjacency(EdgeSet(2, {{0, 1}})); }

// Single-node model evaluated straight from its inputs (feature matrices need n >= 2).
Eigen::MatrixXd single_node_probs(const Eigen::MatrixXd& x, const ModelParams& params) {
    static const NormalizedAdjacency one = empty_graph(1);
    ModelInputs inputs;
    inputs.features = x;
    inputs.propagated = one.matrix() * x;
    inputs.a_hat = &one.matrix();
    return row_softmax(compute_logits(inputs, params));
}

LabelAssignment labels_of(std::vector<int> y, int classes) {
    LabelAssignment l;
    l.n = y.size();
    l.num_classes = classes;
    l.labels = std::move(y);
    return l;
}

std::vector<std::size_t> all_nodes(std::size_t n) {
    std::vector<std::size_t> v(n);
    std::iota(v.begin(), v.end(), 0u);
    return v;
}

}  // namespace

TEST(GcnForward, UniformLogitsOnSingleNode) {
    auto p = params_of(Variant::gcn, {mat(2, 1, {1, 1}), mat(1, 2, {0, 0})});
    auto z = single_node_probs(mat(1, 2, {1, 0}), p);
    EXPECT_NEAR(z(0, 0), 0.5, 1e-15);
    EXPECT_NEAR(z(0, 1), 0.5, 1e-15);
}

TEST(GcnForward, LogTwoLogitGivesTwoThirds) {
    auto p = params_of(Variant::gcn, {mat(2, 1, {1, 1}), mat(1, 2, {std::log(2.0), 0})});
    auto z = single_node_probs(mat(1, 2, {1, 0}), p);
    EXPECT_NEAR(z(0, 0), 2.0 / 3.0, 1e-15);
    EXPECT_NEAR(z(0, 1), 1.0 / 3.0, 1e-15);
}

TEST(GcnForward, ZeroFirstLayerGivesUniformOutput) {
    Rng rng(1);
    auto x = rng.features(6, 3);
    auto p = params_of(Variant::gcn, {Eigen::MatrixXd::Zero(3, 4), Eigen::MatrixXd::Random(4, 5)});
    auto z = gcn_forward(x, NormalizedAdjacency(knn_edges(rng.random_lists(6, 3), 2)), p).probabilities();
    EXPECT_LE((z.array() - 0.2).abs().maxCoeff(), 1e-15);
}

TEST(GcnForward, VariantMismatchIsConfigError) {
    auto p = params_of(Variant::sgc, {Eigen::MatrixXd::Zero(2, 2)});
    EXPECT_THROW(gcn_forward(features(mat(2, 2, {1, 0, 0, 1})), pair_graph(), p), ConfigError);
}

TEST(GcnForward, ShapeMismatchIsConfigError) {
    auto p = params_of(Variant::gcn, {Eigen::MatrixXd::Zero(3, 2), Eigen::MatrixXd::Zero(2, 2)});
    EXPECT_THROW(gcn_forward(features(mat(2, 2, {1, 0, 0, 1})), pair_graph(), p), ConfigError);
    auto q = params_of(Variant::gcn, {Eigen::MatrixXd::Zero(2, 2), Eigen::MatrixXd::Zero(2, 2)});
    EXPECT_THROW(gcn_forward(features(mat(2, 2, {1, 0, 0, 1})), empty_graph(3), q), ConfigError);
}

TEST(SgcForward, PowerZeroIgnoresGraph) {
    Rng rng(2);
    auto x = rng.features(5, 3);
    auto p = params_of(Variant::sgc, {Eigen::MatrixXd::Random(3, 4)});
    p.hyper.sgc_power = 0;
    auto z = sgc_forward(x, NormalizedAdjacency(knn_edges(rng.random_lists(5, 4), 3)), p).probabilities();
    Eigen::MatrixXd expect = row_softmax(x.values() * p.weights[0]);
    EXPECT_LE((z - expect).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(SgcForward, IdentityGraphMakesPowerIrrelevant) {
    Rng rng(3);
    auto x = rng.features(4, 2);
    auto p = params_of(Variant::sgc, {Eigen::MatrixXd::Random(2, 3)});
    p.hyper.sgc_power = 0;
    auto base = sgc_forward(x, empty_graph(4), p).probabilities();
    for (int k : {1, 2, 5}) {
        p.hyper.sgc_power = k;
        EXPECT_EQ(sgc_forward(x, empty_graph(4), p).probabilities(), base);
    }
}

TEST(SgcForward, LongPropagationAveragesRows) {
    auto x = features(mat(2, 2, {3, -1, 0, 2}));
    auto p = params_of(Variant::sgc, {mat(2, 2, {1, 0.5, -0.3, 2})});
    p.hyper.sgc_power = 50;
    auto z = sgc_forward(x, pair_graph(), p).probabilities();
    EXPECT_LE((z.row(0) - z.row(1)).cwiseAbs().maxCoeff(), 1e-6);
}

TEST(AppnpForward, NoStepsIgnoresGraph) {
    Rng rng(4);
    auto x = rng.features(5, 3);
    auto p = params_of(Variant::appnp, {Eigen::MatrixXd::Random(3, 2), Eigen::MatrixXd::Random(2, 3)});
    p.hyper.appnp_steps = 0;
    auto z = appnp_forward(x, NormalizedAdjacency(knn_edges(rng.random_lists(5, 3), 2)), p).probabilities();
    Eigen::MatrixXd h = (x.values() * p.weights[0]).cwiseMax(0.0) * p.weights[1];
    EXPECT_LE((z - row_softmax(h)).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(AppnpForward, IdentityGraphIsFixedPoint) {
    Rng rng(5);
    auto x = rng.features(4, 3);
    auto p = params_of(Variant::appnp, {Eigen::MatrixXd::Random(3, 2), Eigen::MatrixXd::Random(2, 3)});
    p.hyper.appnp_steps = 7;
    p.hyper.appnp_alpha = 0.3;
    auto z = appnp_forward(x, empty_graph(4), p).probabilities();
    Eigen::MatrixXd h = (x.values() * p.weights[0]).cwiseMax(0.0) * p.weights[1];
    EXPECT_LE((z - row_softmax(h)).cwiseAbs().maxCoeff(), 1e-14);
}

TEST(AppnpForward, OneStepByHand) {
    // X = I, W0 = I, W1 = I gives H = I.
    auto x = features(mat(2, 2, {1, 0, 0, 1}));
    auto p = params_of(Variant::appnp, {Eigen::MatrixXd::Identity(2, 2), Eigen::MatrixXd::Identity(2, 2)});
    p.hyper.appnp_alpha = 0.5;
    p.hyper.appnp_steps = 1;
    auto a = pair_graph();
    auto logits = compute_logits(prepare_inputs(p.hyper, x, a), p);
    EXPECT_LE((logits - mat(2, 2, {0.75, 0.25, 0.25, 0.75})).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(Forward, RowsAreDistributionsForEveryVariant) {
    Rng rng(6);
    for (auto v : {Variant::gcn, Variant::sgc, Variant::appnp}) {
        for (int trial = 0; trial < 5; ++trial) {
            auto t = make_tiny_instance(rng, v);
            for (auto& w : t.params.weights) w *= 20.0;
            auto z = forward(t.x, t.a_hat, t.params).probabilities();
            for (Eigen::Index i = 0; i < z.rows(); ++i) EXPECT_NEAR(z.row(i).sum(), 1.0, 1e-9);
            EXPECT_GE(z.minCoeff(), 0.0);
            EXPECT_LE(z.maxCoeff(), 1.0);
        }
    }
}

TEST(Softmax, ShiftInvariant) {
    Rng rng(7);
    Eigen::MatrixXd logits = Eigen::MatrixXd::Random(6, 4) * 30.0;
    Eigen::MatrixXd shifted = logits;
    for (Eigen::Index i = 0; i < 6; ++i) shifted.row(i).array() += rng.uniform(-500.0, 500.0);
    EXPECT_LE((row_softmax(logits) - row_softmax(shifted)).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Softmax, HugeLogitsStayFinite) {
    Eigen::MatrixXd logits = mat(1, 3, {1000.0, 999.0, -1000.0});
    auto z = row_softmax(logits);
    EXPECT_TRUE(z.allFinite());
    EXPECT_NEAR(z.sum(), 1.0, 1e-15);
    EXPECT_NEAR(row_log_softmax(logits)(0, 2), -2000.0 - std::log1p(std::exp(-1.0)), 1e-9);
}

TEST(GcnVsSgc, IdentityActivationCollapsesToSgc) {
    Rng rng(8);
    for (int trial = 0; trial < 10; ++trial) {
        const std::size_t n = 5 + rng.below(15);
        auto x = rng.features(n, 4);
        auto a = NormalizedAdjacency(knn_edges(rng.random_lists(n, 5), 3));
        auto g = params_of(Variant::gcn, {Eigen::MatrixXd::Random(4, 6), Eigen::MatrixXd::Random(6, 3)});
        g.hyper.hidden_activation = Activation::identity;
        auto s = params_of(Variant::sgc, {g.weights[0] * g.weights[1]});
        s.hyper.sgc_power = 2;
        auto zg = gcn_forward(x, a, g).probabilities();
        auto zs = sgc_forward(x, a, s).probabilities();
        EXPECT_LE((zg - zs).cwiseAbs().maxCoeff(), 1e-10);
    }
}

TEST(Forward, PermutationEquivariant) {
    Rng rng(9);
    for (auto v : {Variant::gcn, Variant::sgc, Variant::appnp}) {
        const std::size_t n = 20;
        auto x = rng.features(n, 3);
        auto edges = knn_edges(rng.random_lists(n, 6), 4);
        std::vector<std::size_t> perm(n);
        std::iota(perm.begin(), perm.end(), 0u);
        std::shuffle(perm.begin(), perm.end(), std::mt19937_64(rng.next()));

        RowMatrix px(static_cast<Eigen::Index>(n), 3);
        for (std::size_t i = 0; i < n; ++i) px.row(static_cast<Eigen::Index>(perm[i])) = x.values().row(static_cast<Eigen::Index>(i));
        std::vector<Edge> pe;
        for (auto [i, j] : edges.edges())
            pe.emplace_back(static_cast<NodeId>(perm[i]), static_cast<NodeId>(perm[j]));

        ModelHyper hyper;
        hyper.variant = v;
        hyper.hidden = 5;
        auto params = init_params(hyper, 3, 4, rng.next());
        auto z = forward(x, NormalizedAdjacency(edges), params).probabilities();
        auto pz = forward(FeatureMatrix(px), NormalizedAdjacency(EdgeSet(n, pe)), params).probabilities();
        for (std::size_t i = 0; i < n; ++i) {
            EXPECT_LE((z.row(static_cast<Eigen::Index>(i)) - pz.row(static_cast<Eigen::Index>(perm[i])))
                          .cwiseAbs()
                          .maxCoeff(),
                      1e-12);
        }
    }
}

TEST(Gradients, MatchFiniteDifferencesForEveryVariant) {
    Rng rng(10);
    for (auto v : {Variant::gcn, Variant::sgc, Variant::appnp}) {
        for (int trial = 0; trial < 20; ++trial) {
            auto t = make_tiny_instance(rng, v);
            EXPECT_LT(gradient_error(t), 1e-4) << to_string(v) << " trial " << trial;
        }
    }
}

TEST(Gradients, IdentityActivationAlsoMatches) {
    Rng rng(11);
    for (auto v : {Variant::gcn, Variant::appnp}) {
        for (int trial = 0; trial < 5; ++trial) {
            auto t = make_tiny_instance(rng, v);
            t.params.hyper.hidden_activation = Activation::identity;
            EXPECT_LT(gradient_error(t), 1e-4);
        }
    }
}

TEST(MaskedCrossEntropy, HandExamples) {
    auto labels = labels_of({0, 1}, 2);
    std::vector<std::size_t> first{0};
    EmbeddingMatrix uniform(mat(2, 2, {0.5, 0.5, 0.5, 0.5}));
    EXPECT_NEAR(masked_cross_entropy(uniform, labels, first), std::log(2.0), 1e-12);

    EmbeddingMatrix onehot(mat(2, 2, {1, 0, 0, 1}));
    EXPECT_EQ(masked_cross_entropy(onehot, labels, all_nodes(2)), 0.0);

    EmbeddingMatrix mixed(mat(2, 2, {0.5, 0.5, 0.25, 0.75}));
    EXPECT_NEAR(masked_cross_entropy(mixed, labels, all_nodes(2)), 0.490415, 1e-6);
    EXPECT_NEAR(masked_cross_entropy(mixed, labels, all_nodes(2)),
                (std::log(2.0) + std::log(4.0 / 3.0)) / 2.0, 1e-15);
}

TEST(MaskedCrossEntropy, LogitPathAgreesWithProbabilities) {
    Eigen::MatrixXd logits = mat(2, 2, {0.0, 0.0, 0.0, std::log(3.0)});
    std::vector<LabeledNode> targets{{0, 0}, {1, 1}};
    EXPECT_NEAR(masked_cross_entropy_logits(logits, targets), (std::log(2.0) + std::log(4.0 / 3.0)) / 2.0,
                1e-15);
}

TEST(MaskedCrossEntropy, EmptyMaskIsConfigError) {
    auto labels = labels_of({0, 1}, 2);
    EmbeddingMatrix uniform(mat(2, 2, {0.5, 0.5, 0.5, 0.5}));
    EXPECT_THROW(masked_cross_entropy(uniform, labels, {}), ConfigError);
    auto partial = labels_of({0, kUnlabeled}, 2);
    EXPECT_THROW(training_targets(partial, all_nodes(2)), ConfigError);
}

TEST(EmbeddingMatrix, RejectsNonDistributions) {
    EXPECT_THROW(EmbeddingMatrix(mat(1, 2, {0.6, 0.6})), ValidationError);
    EXPECT_THROW(EmbeddingMatrix(mat(1, 2, {1.5, -0.5})), ValidationError);
}

TEST(Predict, ArgmaxWithLowTieBreak) {
    EXPECT_EQ(predict(EmbeddingMatrix(mat(1, 3, {0.1, 0.7, 0.2}))), std::vector<int>{1});
    EXPECT_EQ(predict(EmbeddingMatrix(mat(1, 2, {0.5, 0.5}))), std::vector<int>{0});
    EXPECT_EQ(predict(EmbeddingMatrix(mat(3, 3, {0, 0, 1, 1, 0, 0, 0, 1, 0}))), (std::vector<int>{2, 0, 1}));
}

namespace {

struct TrainFixture {
    FeatureMatrix x;
    NormalizedAdjacency a_hat;
    LabelAssignment labels;
    std::vector<std::size_t> mask;
};

// n=8, d=3, c=2; two labeled nodes per class; 2-NN graph.
TrainFixture tiny_problem(std::uint64_t seed) {
    auto data = synth_blobs(8, 2, 3, 0.3, seed);
    auto lists = compute_ranked_lists(data.features, 3, SearchBackend::exact);
    return {data.features, NormalizedAdjacency(knn_edges(lists, 2)), data.labels, {0, 1, 2, 3}};
}

}  // namespace

TEST(Train, ZeroLearningRateKeepsInitialWeights) {
    auto f = tiny_problem(1);
    for (auto v : {Variant::gcn, Variant::sgc, Variant::appnp}) {
        ModelHyper hyper;
        hyper.variant = v;
        hyper.hidden = 4;
        TrainConfig config;
        config.learning_rate = 0.0;
        config.epochs = 5;
        config.seed = 17;
        auto result = train(hyper, f.x, f.a_hat, f.labels, f.mask, config);
        auto init = init_params(hyper, 3, 2, 17);
        ASSERT_EQ(result.params.weights.size(), init.weights.size());
        for (std::size_t k = 0; k < init.weights.size(); ++k) EXPECT_EQ(result.params.weights[k], init.weights[k]);
    }
}

TEST(Train, LossDecreasesOnTinyProblem) {
    for (auto v : {Variant::gcn, Variant::sgc, Variant::appnp}) {
        for (std::uint64_t seed = 0; seed < 10; ++seed) {
            auto f = tiny_problem(seed);
            ModelHyper hyper;
            hyper.variant = v;
            hyper.hidden = 16;
            TrainConfig config;
            config.learning_rate = 1e-2;
            config.seed = seed;
            config.record_history = true;
            auto result = train(hyper, f.x, f.a_hat, f.labels, f.mask, config);
            ASSERT_EQ(result.loss_history.size(), 200u);
            EXPECT_LT(result.final_loss, result.loss_history.front()) << to_string(v) << " seed " << seed;
        }
    }
}

TEST(Train, DeterministicGivenSeed) {
    auto f = tiny_problem(3);
    ModelHyper hyper;
    hyper.hidden = 8;
    TrainConfig config;
    config.learning_rate = 1e-2;
    config.epochs = 50;
    config.seed = 99;
    auto a = train(hyper, f.x, f.a_hat, f.labels, f.mask, config);
    auto b = train(hyper, f.x, f.a_hat, f.labels, f.mask, config);
    for (std::size_t k = 0; k < a.params.weights.size(); ++k) EXPECT_EQ(a.params.weights[k], b.params.weights[k]);
    EXPECT_EQ(a.final_loss, b.final_loss);
}

TEST(Train, IgnoresLabelsOutsideTheMask) {
    auto f = tiny_problem(4);
    ModelHyper hyper;
    hyper.variant = Variant::appnp;
    hyper.hidden = 8;
    TrainConfig config;
    config.learning_rate = 1e-2;
    config.epochs = 30;
    auto a = train(hyper, f.x, f.a_hat, f.labels, f.mask, config);
    auto flipped = f.labels;
    for (std::size_t i = 4; i < 8; ++i) flipped.labels[i] = 1 - flipped.labels[i];
    auto b = train(hyper, f.x, f.a_hat, flipped, f.mask, config);
    for (std::size_t k = 0; k < a.params.weights.size(); ++k) EXPECT_EQ(a.params.weights[k], b.params.weights[k]);
}

TEST(Train, NonFiniteLossIsDivergence) {
    // Rows of +-1e308 overflow in the first layer; the second layer then mixes infinities.
    RowMatrix huge(4, 64);
    for (Eigen::Index i = 0; i < 4; ++i) huge.row(i).setConstant(i % 2 == 0 ? 1e308 : -1e308);
    auto labels = labels_of({0, 1, 0, 1}, 2);
    ModelHyper hyper;
    hyper.variant = Variant::gcn;
    hyper.hidden = 16;
    TrainConfig config;
    try {
        train(hyper, FeatureMatrix(huge), empty_graph(4), labels, all_nodes(4), config);
        FAIL() << "expected DivergenceError";
    } catch (const DivergenceError& e) {
        EXPECT_EQ(e.epoch(), 0);
    }
}

TEST(Train, RejectsBadConfig) {
    auto f = tiny_problem(1);
    ModelHyper hyper;
    TrainConfig config;
    config.epochs = 0;
    EXPECT_THROW(train(hyper, f.x, f.a_hat, f.labels, f.mask, config), ConfigError);
    config.epochs = 1;
    EXPECT_THROW(train(hyper, f.x, f.a_hat, f.labels, {}, config), ConfigError);
}

TEST(InitParams, GlorotBoundsAndShapes) {
    ModelHyper hyper;
    hyper.hidden = 256;
    auto p = init_params(hyper, 512, 10, 3);
    ASSERT_EQ(p.weights.size(), 2u);
    EXPECT_EQ(p.weights[0].rows(), 512);
    EXPECT_EQ(p.weights[0].cols(), 256);
    EXPECT_EQ(p.weights[1].rows(), 256);
    EXPECT_EQ(p.weights[1].cols(), 10);
    EXPECT_LE(p.weights[0].cwiseAbs().maxCoeff(), std::sqrt(6.0 / (512 + 256)));
    EXPECT_LE(p.weights[1].cwiseAbs().maxCoeff(), std::sqrt(6.0 / (256 + 10)));
    hyper.variant = Variant::sgc;
    auto s = init_params(hyper, 512, 10, 3);
    ASSERT_EQ(s.weights.size(), 1u);
    EXPECT_EQ(s.weights[0].rows(), 512);
    EXPECT_EQ(s.weights[0].cols(), 10);
}

TEST(Params, SaveLoadRoundTrip) {
    TempDir dir;
    ModelHyper hyper;
    hyper.variant = Variant::appnp;
    hyper.hidden = 5;
    hyper.appnp_alpha = 0.2;
    hyper.appnp_steps = 4;
    auto p = init_params(hyper, 3, 2, 8);
    save_params(dir.path("model"), p);
    auto q = load_params(dir.path("model"));
    EXPECT_EQ(q.hyper.variant, Variant::appnp);
    EXPECT_EQ(q.hyper.hidden, 5u);
    EXPECT_EQ(q.hyper.appnp_alpha, 0.2);
    EXPECT_EQ(q.hyper.appnp_steps, 4);
    ASSERT_EQ(q.weights.size(), 2u);
    // Stored as 32-bit floats.
    for (std::size_t k = 0; k < 2; ++k)
        EXPECT_LE((q.weights[k] - p.weights[k]).cwiseAbs().maxCoeff(), 1e-7);
}

TEST(Variant, ParseAndPrint) {
    for (auto v : {Variant::gcn, Variant::sgc, Variant::appnp}) EXPECT_EQ(parse_variant(to_string(v)), v);
    EXPECT_THROW(parse_variant("gat"), ConfigError);
}
