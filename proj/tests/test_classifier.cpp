#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "genprobe/classifier.hpp"
#include "genprobe/error.hpp"
#include "genprobe/rng.hpp"

using namespace genprobe;

namespace {

EmbeddingTable table_from(const std::vector<std::pair<std::string, std::vector<float>>>& rows) {
  std::vector<Vocabulary::Entry> entries;
  for (const auto& r : rows) entries.push_back({r.first, 1});
  EmbeddingTable t(Vocabulary(entries), static_cast<int>(rows.front().second.size()));
  for (std::size_t i = 0; i < rows.size(); ++i)
    std::copy(rows[i].second.begin(), rows[i].second.end(), t.input(i).begin());
  return t;
}

// Two Gaussian blobs in d dimensions, centred at +-margin on the first axis.
struct Blobs {
  EmbeddingTable table;
  std::vector<LabeledLemma> lemmas;
};

Blobs make_blobs(int n, int d, double margin, std::uint64_t seed, double scale = 1.0) {
  Rng rng(seed);
  std::vector<std::pair<std::string, std::vector<float>>> rows;
  Blobs b;
  for (int i = 0; i < n; ++i) {
    const bool fem = i % 2 == 1;
    std::vector<float> v(static_cast<std::size_t>(d));
    for (int j = 0; j < d; ++j) v[j] = static_cast<float>(scale * (0.3 * rng.normal() + (j == 0 ? (fem ? margin : -margin) : 0.0)));
    const std::string lemma = "w" + std::to_string(i);
    rows.push_back({lemma, v});
    b.lemmas.push_back({lemma, fem ? Gender::feminine : Gender::masculine});
  }
  b.table = table_from(rows);
  return b;
}

MlpParams zero_params(int in, const MlpShape& shape) {
  MlpParams p = init_mlp(in, shape, 1);
  for (auto& l : p.layers) {
    l.weight.setZero();
    l.bias.setZero();
  }
  return p;
}

// Relative error of the whole gradient, per layer.
double gradient_error(const MlpParams& params, const Eigen::MatrixXd& x, const std::vector<int>& y) {
  std::vector<DenseLayer> grads;
  mlp_loss_and_grad(params, x, y, &grads);
  const double h = 1e-6;
  double worst = 0.0;
  for (std::size_t l = 0; l < params.layers.size(); ++l) {
    Eigen::MatrixXd fd_w(params.layers[l].weight.rows(), params.layers[l].weight.cols());
    Eigen::VectorXd fd_b(params.layers[l].bias.size());
    for (Eigen::Index i = 0; i < fd_w.rows(); ++i) {
      for (Eigen::Index j = 0; j < fd_w.cols(); ++j) {
        MlpParams p = params, m = params;
        p.layers[l].weight(i, j) += h;
        m.layers[l].weight(i, j) -= h;
        fd_w(i, j) = (mlp_loss_and_grad(p, x, y, nullptr) - mlp_loss_and_grad(m, x, y, nullptr)) / (2 * h);
      }
      MlpParams p = params, m = params;
      p.layers[l].bias(i) += h;
      m.layers[l].bias(i) -= h;
      fd_b(i) = (mlp_loss_and_grad(p, x, y, nullptr) - mlp_loss_and_grad(m, x, y, nullptr)) / (2 * h);
    }
    const double ew = (fd_w - grads[l].weight).norm() / std::max(1e-12, fd_w.norm() + grads[l].weight.norm());
    const double eb = (fd_b - grads[l].bias).norm() / std::max(1e-12, fd_b.norm() + grads[l].bias.norm());
    worst = std::max({worst, ew, eb});
  }
  return worst;
}

}  // namespace

TEST(MlpForward, ZeroWeightsGiveUniform) {
  for (int depth : {1, 3}) {
    const auto p = zero_params(4, {depth, 5, Nonlinearity::tanh});
    const auto r = mlp_forward(p, Eigen::VectorXd::Random(4));
    EXPECT_DOUBLE_EQ(r.p_masc, 0.5);
    EXPECT_DOUBLE_EQ(r.p_fem, 0.5);
  }
}

TEST(MlpForward, SingleAffineLayerSoftmax) {
  auto p = zero_params(2, {1, 1, Nonlinearity::tanh});
  p.layers[0].weight << 1, 0, -1, 0;
  Eigen::VectorXd x(2);
  x << 3, 17.5;
  const auto r = mlp_forward(p, x);
  const double expected = std::exp(3.0) / (std::exp(3.0) + std::exp(-3.0));
  EXPECT_NEAR(r.p_masc, expected, 1e-12);
  EXPECT_NEAR(r.p_fem, 1.0 - expected, 1e-12);
  EXPECT_NEAR(r.p_masc, 0.9975, 1e-4);
}

TEST(MlpForward, OutputIsNormalizedForRandomParameters) {
  Rng rng(5);
  for (int trial = 0; trial < 100; ++trial) {
    const MlpShape shape{1 + trial % 5, 3 + trial % 4, static_cast<Nonlinearity>(trial % 3)};
    auto p = init_mlp(6, shape, rng.below(1'000'000));
    for (auto& l : p.layers) l.weight *= 1.0 + 5.0 * rng.uniform();
    Eigen::MatrixXd x = 10.0 * Eigen::MatrixXd::Random(6, 7);
    const Eigen::MatrixXd probs = mlp_forward_batch(p, x);
    for (Eigen::Index c = 0; c < probs.cols(); ++c) {
      EXPECT_NEAR(probs(0, c) + probs(1, c), 1.0, 1e-6);
      EXPECT_GE(probs(0, c), 0.0);
      EXPECT_LE(probs(1, c), 1.0);
    }
  }
}

TEST(MlpLoss, GradientMatchesFiniteDifferences) {
  Rng rng(11);
  for (Nonlinearity nl : {Nonlinearity::tanh, Nonlinearity::sigmoid, Nonlinearity::relu}) {
    for (int depth : {1, 3}) {
      for (int point = 0; point < 10; ++point) {
        const auto p = init_mlp(4, {depth, 5, nl}, rng.below(1u << 30));
        const Eigen::MatrixXd x = Eigen::MatrixXd::Random(4, 6);
        std::vector<int> y(6);
        for (auto& v : y) v = static_cast<int>(rng.below(2));
        EXPECT_LT(gradient_error(p, x, y), 1e-4) << to_string(nl) << " depth " << depth;
      }
    }
  }
}

TEST(TrainClassifier, SeparableBlobsAreFitExactly) {
  const auto blobs = make_blobs(200, 10, 2.0, 3);
  const auto data = gather(blobs.lemmas, blobs.table);
  TrainSpec spec;
  spec.seed = 4;
  const auto run = train_classifier(data, data, {1, 100, Nonlinearity::tanh}, spec);
  EXPECT_DOUBLE_EQ(run.best_dev_accuracy, 1.0);
  const auto acc = evaluate_accuracy(run.best, blobs.table, blobs.lemmas);
  EXPECT_DOUBLE_EQ(acc.accuracy, 1.0);
}

TEST(TrainClassifier, BestSnapshotIsAtLeastFirstEpoch) {
  const auto train = make_blobs(60, 6, 0.2, 1), dev = make_blobs(40, 6, 0.2, 2);
  for (int depth : {1, 2, 4}) {
    TrainSpec spec;
    spec.seed = static_cast<std::uint64_t>(depth);
    const auto run = train_classifier(gather(train.lemmas, train.table), gather(dev.lemmas, dev.table),
                                      {depth, 20, Nonlinearity::relu}, spec);
    ASSERT_EQ(run.dev_accuracy_by_epoch.size(), 50u);
    EXPECT_GE(run.best_dev_accuracy, run.dev_accuracy_by_epoch.front());
    EXPECT_DOUBLE_EQ(run.best_dev_accuracy, run.dev_accuracy_by_epoch[run.best_epoch - 1]);
    for (int e = 0; e < run.best_epoch - 1; ++e) EXPECT_LT(run.dev_accuracy_by_epoch[e], run.best_dev_accuracy);
  }
}

TEST(TrainClassifier, SameSeedSameParameters) {
  const auto blobs = make_blobs(50, 5, 1.0, 9);
  const auto data = gather(blobs.lemmas, blobs.table);
  TrainSpec spec;
  spec.seed = 77;
  spec.batch_size = 8;
  const auto a = train_classifier(data, data, {2, 10, Nonlinearity::sigmoid}, spec);
  const auto b = train_classifier(data, data, {2, 10, Nonlinearity::sigmoid}, spec);
  for (int l = 0; l < a.best.depth(); ++l) {
    EXPECT_EQ(a.best.layers[l].weight, b.best.layers[l].weight);
    EXPECT_EQ(a.best.layers[l].bias, b.best.layers[l].bias);
  }
}

TEST(TrainClassifier, EmptyTrainIsAConfigError) {
  const auto blobs = make_blobs(10, 3, 1.0, 1);
  const auto dev = gather(blobs.lemmas, blobs.table);
  LabeledMatrix empty{Eigen::MatrixXd(3, 0), {}, {}};
  EXPECT_THROW(train_classifier(empty, dev, {1, 5, Nonlinearity::tanh}, TrainSpec{}), ConfigError);
}

TEST(Sweep, SingleConfigurationGridReturnsIt) {
  const auto blobs = make_blobs(40, 4, 1.0, 1);
  const auto data = gather(blobs.lemmas, blobs.table);
  SweepGrid grid{{3}, {7}, {Nonlinearity::sigmoid}};
  TrainSpec spec;
  spec.epochs = 3;
  const auto r = sweep_hyperparameters(data, data, grid, spec);
  EXPECT_EQ(r.best_shape, (MlpShape{3, 7, Nonlinearity::sigmoid}));
  ASSERT_EQ(r.log.size(), 1u);
}

TEST(Sweep, InjectedScorerSelectsUniqueMaximum) {
  SweepGrid grid;
  const auto configs = grid.configurations();
  ASSERT_EQ(configs.size(), 45u);
  const MlpShape target{4, 200, Nonlinearity::relu};
  int calls = 0;
  const auto r = sweep_hyperparameters(
      grid,
      [&](const MlpShape& s, std::uint64_t) {
        ++calls;
        ClassifierRun run;
        run.best_dev_accuracy = s == target ? 0.9 : 0.5 + 0.001 * s.depth;
        return run;
      },
      1);
  EXPECT_EQ(calls, 45);
  EXPECT_EQ(r.best_shape, target);
  EXPECT_EQ(r.log.size(), 45u);
}

TEST(Sweep, SharedTrainingMatchesPerSplitSweep) {
  const auto train = make_blobs(80, 6, 0.4, 21), eval = make_blobs(40, 6, 0.4, 22);
  // Both sets share lemma names; give the eval set its own.
  std::vector<std::pair<std::string, std::vector<float>>> rows;
  std::vector<LabeledLemma> train_l, eval_l;
  for (std::size_t i = 0; i < train.lemmas.size(); ++i) {
    rows.push_back({"t" + std::to_string(i), {train.table.input(i).begin(), train.table.input(i).end()}});
    train_l.push_back({rows.back().first, train.lemmas[i].gender});
  }
  std::set<std::string> eval_set;
  for (std::size_t i = 0; i < eval.lemmas.size(); ++i) {
    rows.push_back({"e" + std::to_string(i), {eval.table.input(i).begin(), eval.table.input(i).end()}});
    eval_l.push_back({rows.back().first, eval.lemmas[i].gender});
    eval_set.insert(rows.back().first);
  }
  const auto table = table_from(rows);
  const auto splits = make_eval_splits(eval_set, 3, 5);
  SweepGrid grid{{1, 2}, {8}, {Nonlinearity::tanh, Nonlinearity::relu}};
  TrainSpec spec;
  spec.epochs = 10;
  spec.seed = 13;
  const auto train_m = gather(train_l, table);
  const auto shared = sweep_over_splits(train_m, eval_l, splits, table, grid, spec);
  ASSERT_EQ(shared.splits.size(), 3u);
  for (std::size_t k = 0; k < splits.size(); ++k) {
    const auto dev = gather(select_labeled(eval_l, splits[k].dev), table);
    const auto single = sweep_hyperparameters(train_m, dev, grid, spec, static_cast<int>(k));
    EXPECT_EQ(shared.splits[k].best_shape, single.best_shape);
    EXPECT_EQ(shared.splits[k].best_epoch, single.best_run.best_epoch);
    EXPECT_DOUBLE_EQ(shared.splits[k].dev_accuracy, single.best_run.best_dev_accuracy);
    const auto test = evaluate_accuracy(single.best_run.best, table, select_labeled(eval_l, splits[k].test));
    EXPECT_DOUBLE_EQ(shared.splits[k].test_accuracy, test.accuracy);
  }
}

TEST(MajorityBaseline, Examples) {
  using G = Gender;
  std::vector<G> six_four{G::masculine, G::masculine, G::masculine, G::masculine, G::masculine,
                          G::masculine, G::feminine,  G::feminine,  G::feminine,  G::feminine};
  EXPECT_DOUBLE_EQ(majority_baseline(six_four), 0.6);
  EXPECT_EQ(majority_class(six_four), G::masculine);
  std::vector<G> same(5, G::feminine);
  EXPECT_DOUBLE_EQ(majority_baseline(same), 1.0);
  std::vector<G> even{G::masculine, G::feminine};
  EXPECT_DOUBLE_EQ(majority_baseline(even), 0.5);
}

TEST(EvaluateAccuracy, ConstantPredictor) {
  const auto blobs = make_blobs(20, 3, 1.0, 1);
  auto p = zero_params(3, {1, 1, Nonlinearity::tanh});
  p.layers[0].bias << 50, -50;
  std::vector<LabeledLemma> masc, fem;
  for (const auto& l : blobs.lemmas) (l.gender == Gender::masculine ? masc : fem).push_back(l);
  EXPECT_DOUBLE_EQ(evaluate_accuracy(p, blobs.table, masc).accuracy, 1.0);
  EXPECT_DOUBLE_EQ(evaluate_accuracy(p, blobs.table, fem).accuracy, 0.0);
}

TEST(EvaluateAccuracy, ConfusionMatrixOracle) {
  // Predict feminine iff the first coordinate is positive.
  auto p = zero_params(2, {1, 1, Nonlinearity::tanh});
  p.layers[0].weight << -1, 0, 1, 0;
  std::vector<std::pair<std::string, std::vector<float>>> rows;
  std::vector<LabeledLemma> test;
  int tp = 0, tn = 0;
  Rng rng(8);
  for (int i = 0; i < 20; ++i) {
    const float x = static_cast<float>(rng.uniform() - 0.5) + (i % 7 == 0 ? 0.01f : 0.0f);
    const Gender g = rng.coin(0.5) ? Gender::feminine : Gender::masculine;
    rows.push_back({"l" + std::to_string(i), {x, 1.0f}});
    test.push_back({rows.back().first, g});
    if (x > 0 && g == Gender::feminine) ++tp;
    if (x <= 0 && g == Gender::masculine) ++tn;
  }
  const auto r = evaluate_accuracy(p, table_from(rows), test);
  EXPECT_DOUBLE_EQ(r.accuracy, (tp + tn) / 20.0);
  int hits = 0;
  for (bool c : r.correct) hits += c;
  EXPECT_EQ(hits, tp + tn);
  ASSERT_EQ(r.predictions.size(), 20u);
}

TEST(MlpFile, SaveLoadRoundTrip) {
  const auto p = init_mlp(5, {3, 4, Nonlinearity::relu}, 3);
  std::stringstream io;
  save_mlp(p, io);
  const auto q = load_mlp(io);
  ASSERT_EQ(q.depth(), 3);
  EXPECT_EQ(q.nonlinearity, Nonlinearity::relu);
  for (int l = 0; l < 3; ++l) {
    EXPECT_TRUE(q.layers[l].weight.isApprox(p.layers[l].weight, 1e-15));
    EXPECT_TRUE(q.layers[l].bias.isApprox(p.layers[l].bias, 1e-15));
  }
  std::istringstream bad("not a model\n");
  EXPECT_THROW(load_mlp(bad), FormatError);
}

TEST(ScalingInvariance, ForwardPassIsInvariantUnderCompensatedScaling) {
  const auto p = init_mlp(4, {1, 1, Nonlinearity::tanh}, 2);
  const Eigen::MatrixXd x = Eigen::MatrixXd::Random(4, 30);
  for (double c : {0.25, 3.0}) {
    MlpParams q = p;
    q.layers[0].weight /= c;
    EXPECT_TRUE(mlp_forward_batch(q, c * x).isApprox(mlp_forward_batch(p, x), 1e-12));
  }
}

TEST(ScalingInvariance, RetrainingOnScaledDataGivesSameArgmaxes) {
  const auto train = make_blobs(100, 10, 1.5, 31), test = make_blobs(60, 10, 1.5, 32);
  TrainSpec spec;
  spec.seed = 5;
  const MlpShape shape{1, 1, Nonlinearity::tanh};
  const auto base = train_mlp(init_mlp(10, shape, spec.seed), gather(train.lemmas, train.table), spec);
  const auto base_pred = evaluate_accuracy(base, test.table, test.lemmas);
  for (double c : {0.5, 4.0}) {
    const auto strain = make_blobs(100, 10, 1.5, 31, c), stest = make_blobs(60, 10, 1.5, 32, c);
    MlpParams init = init_mlp(10, shape, spec.seed);
    init.layers[0].weight /= c;
    const auto data = gather(strain.lemmas, strain.table);
    // Snapshot of the final epoch, trained from the compensated init.
    const auto trained = train_mlp(init, data, spec);
    const auto pred = evaluate_accuracy(trained, stest.table, stest.lemmas);
    for (std::size_t i = 0; i < pred.predictions.size(); ++i)
      EXPECT_EQ(pred.predictions[i].argmax(), base_pred.predictions[i].argmax()) << "c=" << c << " i=" << i;
  }
}
