#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "genprobe/embeddings.hpp"
#include "genprobe/lexicon.hpp"

namespace genprobe {

enum class Nonlinearity { tanh, sigmoid, relu };

std::string_view to_string(Nonlinearity nl);
std::optional<Nonlinearity> parse_nonlinearity(std::string_view name);

struct MlpShape {
  int depth = 2;  // number of affine layers; depth-1 is a linear classifier
  int hidden = 100;
  Nonlinearity nonlinearity = Nonlinearity::tanh;

  bool operator==(const MlpShape&) const = default;
};

struct DenseLayer {
  Eigen::MatrixXd weight;  // out x in
  Eigen::VectorXd bias;
};

// depth-1 hidden layers of `hidden` units followed by a 2-way softmax over
// (masculine, feminine).
struct MlpParams {
  std::vector<DenseLayer> layers;
  Nonlinearity nonlinearity = Nonlinearity::tanh;

  int depth() const noexcept { return static_cast<int>(layers.size()); }
  int input_dim() const { return static_cast<int>(layers.front().weight.cols()); }
};

// Symmetric uniform init in +-1/sqrt(fan_in).
MlpParams init_mlp(int input_dim, const MlpShape& shape, std::uint64_t seed);

struct GenderPrediction {
  std::string lemma;
  double p_masc;
  double p_fem;

  Gender argmax() const { return p_fem > p_masc ? Gender::feminine : Gender::masculine; }
};

GenderPrediction mlp_forward(const MlpParams& params, const Eigen::VectorXd& embedding);

// Column-wise class probabilities (2 x n) for inputs stored as columns (d x n).
Eigen::MatrixXd mlp_forward_batch(const MlpParams& params, const Eigen::MatrixXd& inputs);

// Mean negative log-likelihood of `labels` (0 = masc, 1 = fem) and its
// gradient, with the same layer structure as `params`.
double mlp_loss_and_grad(const MlpParams& params, const Eigen::MatrixXd& inputs, std::span<const int> labels,
                         std::vector<DenseLayer>* grads);

struct TrainSpec {
  double step_size = 0.1;
  int epochs = 50;
  int batch_size = 0;  // 0 = full batch
  std::uint64_t seed = 1;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  void validate() const;
};

// Columns are embeddings of `lemmas`; labels 0 = masc, 1 = fem.
struct LabeledMatrix {
  Eigen::MatrixXd inputs;
  std::vector<int> labels;
  std::vector<std::string> lemmas;

  std::size_t size() const noexcept { return labels.size(); }
};

int gender_class(Gender g);

// Throws DataError when a lemma is missing from the table or is neuter.
LabeledMatrix gather(const std::vector<LabeledLemma>& lemmas, const EmbeddingTable& table);

// Keeps the lemmas that have a vector in `table`.
std::vector<LabeledLemma> present_in(const std::vector<LabeledLemma>& lemmas, const EmbeddingTable& table);

// Trains from `init` for spec.epochs epochs; `on_epoch` sees the parameters
// after each epoch (1-based).
MlpParams train_mlp(MlpParams init, const LabeledMatrix& train, const TrainSpec& spec,
                    const std::function<void(int, const MlpParams&)>& on_epoch = {});

struct ClassifierRun {
  MlpParams best;
  int best_epoch = 0;
  double best_dev_accuracy = 0.0;
  std::vector<double> dev_accuracy_by_epoch;
};

// Evaluates dev after every epoch and returns the best snapshot (earliest
// on ties). Training always runs all epochs.
ClassifierRun train_classifier(const LabeledMatrix& train, const LabeledMatrix& dev, const MlpShape& shape,
                               const TrainSpec& spec);
ClassifierRun train_classifier(const std::vector<LabeledLemma>& train, const std::vector<LabeledLemma>& dev,
                               const EmbeddingTable& table, const MlpShape& shape, const TrainSpec& spec);

struct SweepGrid {
  std::vector<int> depths{1, 2, 3, 4, 5};
  std::vector<int> hidden_sizes{100, 200, 300};
  std::vector<Nonlinearity> nonlinearities{Nonlinearity::tanh, Nonlinearity::sigmoid, Nonlinearity::relu};

  std::vector<MlpShape> configurations() const;
};

struct SweepLogRow {
  MlpShape shape;
  int split_id;
  double dev_accuracy;
};

struct SweepResult {
  MlpShape best_shape;
  ClassifierRun best_run;
  std::vector<SweepLogRow> log;
};

// Trains every grid configuration with seed derived from (spec.seed,
// configuration) and keeps the dev-best. `trainer` may replace the
// training routine (used to inject scorers).
using ConfigTrainer = std::function<ClassifierRun(const MlpShape&, std::uint64_t seed)>;
SweepResult sweep_hyperparameters(const SweepGrid& grid, const ConfigTrainer& trainer, std::uint64_t base_seed,
                                  int split_id = 0);
SweepResult sweep_hyperparameters(const LabeledMatrix& train, const LabeledMatrix& dev, const SweepGrid& grid,
                                  const TrainSpec& spec, int split_id = 0);

std::uint64_t config_seed(std::uint64_t base_seed, const MlpShape& shape);

// Result of the dev-based sweep on one evaluation split.
struct SplitOutcome {
  int split_id = 0;
  MlpShape best_shape;
  int best_epoch = 0;
  double dev_accuracy = 0.0;
  double test_accuracy = 0.0;
  std::vector<std::string> test_lemmas;
  std::vector<int> test_labels;
  std::vector<int> test_predictions;
};

struct MultiSplitSweep {
  std::vector<SplitOutcome> splits;
  std::vector<SweepLogRow> log;
};

// Equivalent to running sweep_hyperparameters once per split with the
// split's dev half, then scoring the selected snapshot on its test half.
// Training does not see the eval lemmas, so each configuration is trained
// once and every epoch's snapshot is scored on all splits.
MultiSplitSweep sweep_over_splits(const LabeledMatrix& train, const std::vector<LabeledLemma>& eval,
                                  const std::vector<EvalSplit>& splits, const EmbeddingTable& table,
                                  const SweepGrid& grid, const TrainSpec& spec);

// max class frequency / total.
double majority_baseline(std::span<const Gender> labels);
Gender majority_class(std::span<const Gender> labels);

struct AccuracyResult {
  double accuracy;
  std::vector<GenderPrediction> predictions;
  std::vector<bool> correct;
};

AccuracyResult evaluate_accuracy(const MlpParams& params, const EmbeddingTable& table,
                                 const std::vector<LabeledLemma>& test);

// Text snapshot: magic line, shape header, then each layer's weight rows and bias.
void save_mlp(const MlpParams& params, std::ostream& out);
MlpParams load_mlp(std::istream& in);

void write_sweep_log(const std::vector<SweepLogRow>& log, std::ostream& out);

}  // namespace genprobe
