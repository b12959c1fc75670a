#include "genprobe/classifier.hpp"

#include <charconv>
#include <cmath>
#include <istream>
#include <ostream>
#include <unordered_map>

#include "genprobe/adam.hpp"
#include "genprobe/error.hpp"
#include "genprobe/rng.hpp"
#include "genprobe/text.hpp"

namespace genprobe {

std::string_view to_string(Nonlinearity nl) {
  switch (nl) {
    case Nonlinearity::tanh: return "tanh";
    case Nonlinearity::sigmoid: return "sigmoid";
    case Nonlinearity::relu: return "relu";
  }
  return "?";
}

std::optional<Nonlinearity> parse_nonlinearity(std::string_view name) {
  const std::string n = fold_case(trim(name));
  if (n == "tanh") return Nonlinearity::tanh;
  if (n == "sigmoid") return Nonlinearity::sigmoid;
  if (n == "relu") return Nonlinearity::relu;
  return std::nullopt;
}

MlpParams init_mlp(int input_dim, const MlpShape& shape, std::uint64_t seed) {
  if (input_dim < 1) throw ConfigError("mlp: input dimension must be positive");
  if (shape.depth < 1) throw ConfigError("mlp: depth must be >= 1");
  if (shape.depth > 1 && shape.hidden < 1) throw ConfigError("mlp: hidden size must be positive");
  Rng rng(derive_seed(seed, "mlp-init"));
  MlpParams params;
  params.nonlinearity = shape.nonlinearity;
  int in = input_dim;
  for (int l = 0; l < shape.depth; ++l) {
    const int out = (l + 1 == shape.depth) ? 2 : shape.hidden;
    const double bound = 1.0 / std::sqrt(static_cast<double>(in));
    DenseLayer layer{Eigen::MatrixXd(out, in), Eigen::VectorXd(out)};
    for (int c = 0; c < in; ++c)
      for (int r = 0; r < out; ++r) layer.weight(r, c) = (2.0 * rng.uniform() - 1.0) * bound;
    for (int r = 0; r < out; ++r) layer.bias(r) = (2.0 * rng.uniform() - 1.0) * bound;
    params.layers.push_back(std::move(layer));
    in = out;
  }
  return params;
}

namespace {

void activate(Nonlinearity nl, Eigen::MatrixXd& z) {
  switch (nl) {
    case Nonlinearity::tanh: z = z.array().tanh().matrix(); break;
    case Nonlinearity::sigmoid: z = (1.0 / (1.0 + (-z.array()).exp())).matrix(); break;
    case Nonlinearity::relu: z = z.cwiseMax(0.0); break;
  }
}

// Derivative expressed through the activation value a = f(z).
Eigen::MatrixXd activation_derivative(Nonlinearity nl, const Eigen::MatrixXd& a) {
  switch (nl) {
    case Nonlinearity::tanh: return (1.0 - a.array().square()).matrix();
    case Nonlinearity::sigmoid: return (a.array() * (1.0 - a.array())).matrix();
    case Nonlinearity::relu: return (a.array() > 0.0).cast<double>().matrix();
  }
  return a;
}

void softmax_columns(Eigen::MatrixXd& logits) {
  for (Eigen::Index c = 0; c < logits.cols(); ++c) {
    const double m = logits.col(c).maxCoeff();
    logits.col(c) = (logits.col(c).array() - m).exp().matrix();
    logits.col(c) /= logits.col(c).sum();
  }
}

void check_input(const MlpParams& params, Eigen::Index rows) {
  if (params.layers.empty()) throw ConfigError("mlp: no layers");
  if (rows != params.layers.front().weight.cols()) {
    throw DimensionError("mlp: input has dimension " + std::to_string(rows) + ", network expects " +
                         std::to_string(params.layers.front().weight.cols()));
  }
}

// Layer outputs after activation; the last entry holds logits.
std::vector<Eigen::MatrixXd> forward_all(const MlpParams& params, const Eigen::MatrixXd& inputs) {
  std::vector<Eigen::MatrixXd> acts;
  acts.reserve(params.layers.size());
  const Eigen::MatrixXd* prev = &inputs;
  for (std::size_t l = 0; l < params.layers.size(); ++l) {
    const auto& layer = params.layers[l];
    Eigen::MatrixXd z = layer.weight * *prev;
    z.colwise() += layer.bias;
    if (l + 1 < params.layers.size()) activate(params.nonlinearity, z);
    acts.push_back(std::move(z));
    prev = &acts.back();
  }
  return acts;
}

}  // namespace

Eigen::MatrixXd mlp_forward_batch(const MlpParams& params, const Eigen::MatrixXd& inputs) {
  check_input(params, inputs.rows());
  auto acts = forward_all(params, inputs);
  Eigen::MatrixXd p = std::move(acts.back());
  softmax_columns(p);
  return p;
}

GenderPrediction mlp_forward(const MlpParams& params, const Eigen::VectorXd& embedding) {
  const Eigen::MatrixXd p = mlp_forward_batch(params, embedding);
  return {"", p(0, 0), p(1, 0)};
}

double mlp_loss_and_grad(const MlpParams& params, const Eigen::MatrixXd& inputs, std::span<const int> labels,
                         std::vector<DenseLayer>* grads) {
  check_input(params, inputs.rows());
  const auto n = inputs.cols();
  if (n == 0 || static_cast<std::size_t>(n) != labels.size()) throw ConfigError("mlp: labels do not match inputs");
  auto acts = forward_all(params, inputs);
  Eigen::MatrixXd p = acts.back();
  softmax_columns(p);
  double loss = 0.0;
  for (Eigen::Index c = 0; c < n; ++c) loss -= std::log(std::max(p(labels[c], c), 1e-300));
  loss /= static_cast<double>(n);
  if (!grads) return loss;

  Eigen::MatrixXd delta = p;
  for (Eigen::Index c = 0; c < n; ++c) delta(labels[c], c) -= 1.0;
  delta /= static_cast<double>(n);
  grads->assign(params.layers.size(), DenseLayer{});
  for (std::size_t l = params.layers.size(); l-- > 0;) {
    const Eigen::MatrixXd& below = l == 0 ? inputs : acts[l - 1];
    (*grads)[l].weight = delta * below.transpose();
    (*grads)[l].bias = delta.rowwise().sum();
    if (l > 0) {
      Eigen::MatrixXd back = params.layers[l].weight.transpose() * delta;
      delta = back.cwiseProduct(activation_derivative(params.nonlinearity, acts[l - 1]));
    }
  }
  return loss;
}

void TrainSpec::validate() const {
  if (epochs < 1) throw ConfigError("classifier: epochs must be >= 1");
  if (!(step_size > 0)) throw ConfigError("classifier: step_size must be positive");
  if (batch_size < 0) throw ConfigError("classifier: batch_size must be >= 0");
}

int gender_class(Gender g) {
  switch (g) {
    case Gender::masculine: return 0;
    case Gender::feminine: return 1;
    case Gender::neuter: break;
  }
  throw DataError("classifier: neuter is not a class");
}

LabeledMatrix gather(const std::vector<LabeledLemma>& lemmas, const EmbeddingTable& table) {
  LabeledMatrix m;
  m.inputs.resize(table.dim(), static_cast<Eigen::Index>(lemmas.size()));
  m.labels.reserve(lemmas.size());
  m.lemmas.reserve(lemmas.size());
  for (std::size_t i = 0; i < lemmas.size(); ++i) {
    auto v = table.find(lemmas[i].lemma);
    if (v.empty()) throw DataError("no vector for lemma '" + lemmas[i].lemma + "'");
    for (int j = 0; j < table.dim(); ++j) m.inputs(j, static_cast<Eigen::Index>(i)) = v[static_cast<std::size_t>(j)];
    m.labels.push_back(gender_class(lemmas[i].gender));
    m.lemmas.push_back(lemmas[i].lemma);
  }
  return m;
}

std::vector<LabeledLemma> present_in(const std::vector<LabeledLemma>& lemmas, const EmbeddingTable& table) {
  std::vector<LabeledLemma> out;
  for (const auto& l : lemmas) {
    if (table.contains(l.lemma)) out.push_back(l);
  }
  return out;
}

MlpParams train_mlp(MlpParams params, const LabeledMatrix& train, const TrainSpec& spec,
                    const std::function<void(int, const MlpParams&)>& on_epoch) {
  spec.validate();
  if (train.size() == 0) throw ConfigError("classifier: empty training set");
  const AdamSettings adam{spec.step_size, spec.beta1, spec.beta2, spec.epsilon};
  std::vector<AdamState<Eigen::MatrixXd>> w_state;
  std::vector<AdamState<Eigen::VectorXd>> b_state;
  for (const auto& layer : params.layers) {
    w_state.emplace_back(layer.weight);
    b_state.emplace_back(layer.bias);
  }
  const auto n = static_cast<Eigen::Index>(train.size());
  const bool full_batch = spec.batch_size == 0 || spec.batch_size >= n;
  Rng batch_rng(derive_seed(spec.seed, "batches"));
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) order[static_cast<std::size_t>(i)] = i;
  std::vector<DenseLayer> grads;

  auto apply = [&](const Eigen::MatrixXd& x, std::span<const int> y) {
    const double loss = mlp_loss_and_grad(params, x, y, &grads);
    if (!std::isfinite(loss)) throw NumericalError("classifier: non-finite training loss");
    for (std::size_t l = 0; l < params.layers.size(); ++l) {
      params.layers[l].weight -= w_state[l].step(grads[l].weight, adam);
      params.layers[l].bias -= b_state[l].step(grads[l].bias, adam);
    }
  };

  for (int epoch = 1; epoch <= spec.epochs; ++epoch) {
    if (full_batch) {
      apply(train.inputs, train.labels);
    } else {
      batch_rng.shuffle(order);
      for (Eigen::Index start = 0; start < n; start += spec.batch_size) {
        const Eigen::Index len = std::min<Eigen::Index>(spec.batch_size, n - start);
        std::vector<Eigen::Index> idx(order.begin() + start, order.begin() + start + len);
        Eigen::MatrixXd x = train.inputs(Eigen::all, idx);
        std::vector<int> y;
        y.reserve(static_cast<std::size_t>(len));
        for (auto i : idx) y.push_back(train.labels[static_cast<std::size_t>(i)]);
        apply(x, y);
      }
    }
    if (on_epoch) on_epoch(epoch, params);
  }
  return params;
}

namespace {

std::vector<int> predict_classes(const MlpParams& params, const Eigen::MatrixXd& inputs) {
  const Eigen::MatrixXd p = mlp_forward_batch(params, inputs);
  std::vector<int> out(static_cast<std::size_t>(p.cols()));
  for (Eigen::Index c = 0; c < p.cols(); ++c) out[static_cast<std::size_t>(c)] = p(1, c) > p(0, c) ? 1 : 0;
  return out;
}

double accuracy_of(const std::vector<int>& predicted, const std::vector<int>& labels) {
  if (labels.empty()) return 0.0;
  std::size_t hits = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) hits += predicted[i] == labels[i];
  return static_cast<double>(hits) / static_cast<double>(labels.size());
}

}  // namespace

ClassifierRun train_classifier(const LabeledMatrix& train, const LabeledMatrix& dev, const MlpShape& shape,
                               const TrainSpec& spec) {
  if (train.size() == 0) throw ConfigError("classifier: empty training set");
  if (dev.size() == 0) throw ConfigError("classifier: empty dev set");
  ClassifierRun run;
  run.best_dev_accuracy = -1.0;
  MlpParams init = init_mlp(static_cast<int>(train.inputs.rows()), shape, spec.seed);
  train_mlp(std::move(init), train, spec, [&](int epoch, const MlpParams& params) {
    const double acc = accuracy_of(predict_classes(params, dev.inputs), dev.labels);
    run.dev_accuracy_by_epoch.push_back(acc);
    if (acc > run.best_dev_accuracy) {
      run.best_dev_accuracy = acc;
      run.best_epoch = epoch;
      run.best = params;
    }
  });
  return run;
}

ClassifierRun train_classifier(const std::vector<LabeledLemma>& train, const std::vector<LabeledLemma>& dev,
                               const EmbeddingTable& table, const MlpShape& shape, const TrainSpec& spec) {
  if (train.empty()) throw ConfigError("classifier: empty training set");
  return train_classifier(gather(train, table), gather(dev, table), shape, spec);
}

std::vector<MlpShape> SweepGrid::configurations() const {
  std::vector<MlpShape> out;
  for (int depth : depths)
    for (int hidden : hidden_sizes)
      for (Nonlinearity nl : nonlinearities) out.push_back({depth, hidden, nl});
  return out;
}

std::uint64_t config_seed(std::uint64_t base_seed, const MlpShape& shape) {
  return derive_seed(base_seed, "mlp-d" + std::to_string(shape.depth) + "-h" + std::to_string(shape.hidden) + "-" +
                                    std::string(to_string(shape.nonlinearity)));
}

SweepResult sweep_hyperparameters(const SweepGrid& grid, const ConfigTrainer& trainer, std::uint64_t base_seed,
                                  int split_id) {
  const auto configs = grid.configurations();
  if (configs.empty()) throw ConfigError("classifier: empty hyperparameter grid");
  SweepResult result;
  bool have_best = false;
  for (const auto& shape : configs) {
    ClassifierRun run = trainer(shape, config_seed(base_seed, shape));
    result.log.push_back({shape, split_id, run.best_dev_accuracy});
    if (!have_best || run.best_dev_accuracy > result.best_run.best_dev_accuracy) {
      result.best_shape = shape;
      result.best_run = std::move(run);
      have_best = true;
    }
  }
  return result;
}

SweepResult sweep_hyperparameters(const LabeledMatrix& train, const LabeledMatrix& dev, const SweepGrid& grid,
                                  const TrainSpec& spec, int split_id) {
  return sweep_hyperparameters(
      grid,
      [&](const MlpShape& shape, std::uint64_t seed) {
        TrainSpec s = spec;
        s.seed = seed;
        return train_classifier(train, dev, shape, s);
      },
      spec.seed, split_id);
}

MultiSplitSweep sweep_over_splits(const LabeledMatrix& train, const std::vector<LabeledLemma>& eval,
                                  const std::vector<EvalSplit>& splits, const EmbeddingTable& table,
                                  const SweepGrid& grid, const TrainSpec& spec) {
  const auto configs = grid.configurations();
  if (configs.empty()) throw ConfigError("classifier: empty hyperparameter grid");
  if (train.size() == 0) throw ConfigError("classifier: empty training set");
  const LabeledMatrix all = gather(eval, table);
  std::unordered_map<std::string, std::size_t> column;
  for (std::size_t i = 0; i < all.lemmas.size(); ++i) column.emplace(all.lemmas[i], i);

  struct SplitIndex {
    std::vector<std::size_t> dev, test;
  };
  std::vector<SplitIndex> index(splits.size());
  for (std::size_t s = 0; s < splits.size(); ++s) {
    for (const auto& l : splits[s].dev)
      if (auto it = column.find(l); it != column.end()) index[s].dev.push_back(it->second);
    for (const auto& l : splits[s].test)
      if (auto it = column.find(l); it != column.end()) index[s].test.push_back(it->second);
    if (index[s].dev.empty() || index[s].test.empty()) throw ConfigError("classifier: split has an empty half");
  }

  MultiSplitSweep result;
  result.splits.resize(splits.size());
  std::vector<double> best_dev(splits.size(), -1.0);
  for (const auto& shape : configs) {
    TrainSpec s = spec;
    s.seed = config_seed(spec.seed, shape);
    std::vector<double> config_best(splits.size(), -1.0);
    MlpParams init = init_mlp(static_cast<int>(train.inputs.rows()), shape, s.seed);
    train_mlp(std::move(init), train, s, [&](int epoch, const MlpParams& params) {
      const std::vector<int> predicted = predict_classes(params, all.inputs);
      for (std::size_t k = 0; k < splits.size(); ++k) {
        std::size_t hits = 0;
        for (auto i : index[k].dev) hits += predicted[i] == all.labels[i];
        const double dev_acc = static_cast<double>(hits) / static_cast<double>(index[k].dev.size());
        config_best[k] = std::max(config_best[k], dev_acc);
        if (dev_acc > best_dev[k]) {
          best_dev[k] = dev_acc;
          SplitOutcome& o = result.splits[k];
          o.split_id = static_cast<int>(k);
          o.best_shape = shape;
          o.best_epoch = epoch;
          o.dev_accuracy = dev_acc;
          o.test_lemmas.clear();
          o.test_labels.clear();
          o.test_predictions.clear();
          std::size_t test_hits = 0;
          for (auto i : index[k].test) {
            o.test_lemmas.push_back(all.lemmas[i]);
            o.test_labels.push_back(all.labels[i]);
            o.test_predictions.push_back(predicted[i]);
            test_hits += predicted[i] == all.labels[i];
          }
          o.test_accuracy = static_cast<double>(test_hits) / static_cast<double>(index[k].test.size());
        }
      }
    });
    for (std::size_t k = 0; k < splits.size(); ++k) {
      result.log.push_back({shape, static_cast<int>(k), config_best[k]});
    }
  }
  return result;
}

Gender majority_class(std::span<const Gender> labels) {
  if (labels.empty()) throw ConfigError("majority baseline needs labels");
  std::size_t counts[3] = {0, 0, 0};
  for (Gender g : labels) ++counts[static_cast<int>(g)];
  Gender best = Gender::feminine;
  for (Gender g : {Gender::masculine, Gender::neuter}) {
    if (counts[static_cast<int>(g)] > counts[static_cast<int>(best)]) best = g;
  }
  return best;
}

double majority_baseline(std::span<const Gender> labels) {
  const Gender g = majority_class(labels);
  const auto hits = std::count(labels.begin(), labels.end(), g);
  return static_cast<double>(hits) / static_cast<double>(labels.size());
}

AccuracyResult evaluate_accuracy(const MlpParams& params, const EmbeddingTable& table,
                                 const std::vector<LabeledLemma>& test) {
  AccuracyResult result{0.0, {}, {}};
  if (test.empty()) return result;
  const LabeledMatrix m = gather(test, table);
  const Eigen::MatrixXd p = mlp_forward_batch(params, m.inputs);
  std::size_t hits = 0;
  for (std::size_t i = 0; i < test.size(); ++i) {
    GenderPrediction pred{test[i].lemma, p(0, static_cast<Eigen::Index>(i)), p(1, static_cast<Eigen::Index>(i))};
    const bool ok = pred.argmax() == test[i].gender;
    hits += ok;
    result.correct.push_back(ok);
    result.predictions.push_back(std::move(pred));
  }
  result.accuracy = static_cast<double>(hits) / static_cast<double>(test.size());
  return result;
}

namespace {

void write_number(std::ostream& out, double v) {
  char buf[32];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  out << std::string_view(buf, static_cast<std::size_t>(end - buf));
}

double read_number(std::string_view s) {
  double v = 0;
  auto r = std::from_chars(s.data(), s.data() + s.size(), v);
  if (r.ec != std::errc{} || r.ptr != s.data() + s.size()) throw FormatError("model file: bad number '" + std::string(s) + "'");
  return v;
}

std::vector<std::string_view> expect_line(std::istream& in, std::string& line, std::string_view what) {
  if (!std::getline(in, line)) throw FormatError("model file: truncated before " + std::string(what));
  return split_whitespace(line);
}

}  // namespace

void save_mlp(const MlpParams& params, std::ostream& out) {
  out << "genprobe-mlp 1\n";
  out << "nonlinearity " << to_string(params.nonlinearity) << '\n';
  out << "layers " << params.layers.size() << '\n';
  for (const auto& layer : params.layers) {
    out << "layer " << layer.weight.rows() << ' ' << layer.weight.cols() << '\n';
    for (Eigen::Index r = 0; r < layer.weight.rows(); ++r) {
      for (Eigen::Index c = 0; c < layer.weight.cols(); ++c) {
        if (c) out << ' ';
        write_number(out, layer.weight(r, c));
      }
      out << '\n';
    }
    for (Eigen::Index r = 0; r < layer.bias.size(); ++r) {
      if (r) out << ' ';
      write_number(out, layer.bias(r));
    }
    out << '\n';
  }
}

MlpParams load_mlp(std::istream& in) {
  std::string line;
  auto magic = expect_line(in, line, "header");
  if (magic.size() != 2 || magic[0] != "genprobe-mlp" || magic[1] != "1") throw FormatError("model file: bad magic");
  auto nl_line = expect_line(in, line, "nonlinearity");
  if (nl_line.size() != 2 || nl_line[0] != "nonlinearity") throw FormatError("model file: missing nonlinearity");
  MlpParams params;
  auto nl = parse_nonlinearity(nl_line[1]);
  if (!nl) throw FormatError("model file: unknown nonlinearity");
  params.nonlinearity = *nl;
  auto count_line = expect_line(in, line, "layer count");
  if (count_line.size() != 2 || count_line[0] != "layers") throw FormatError("model file: missing layer count");
  const int n_layers = static_cast<int>(read_number(count_line[1]));
  if (n_layers < 1) throw FormatError("model file: no layers");
  for (int l = 0; l < n_layers; ++l) {
    auto head = expect_line(in, line, "layer header");
    if (head.size() != 3 || head[0] != "layer") throw FormatError("model file: bad layer header");
    const auto rows = static_cast<Eigen::Index>(read_number(head[1]));
    const auto cols = static_cast<Eigen::Index>(read_number(head[2]));
    if (rows < 1 || cols < 1) throw FormatError("model file: bad layer shape");
    if (!params.layers.empty() && params.layers.back().weight.rows() != cols) {
      throw FormatError("model file: layer shapes do not compose");
    }
    DenseLayer layer{Eigen::MatrixXd(rows, cols), Eigen::VectorXd(rows)};
    for (Eigen::Index r = 0; r < rows; ++r) {
      auto vals = expect_line(in, line, "weights");
      if (static_cast<Eigen::Index>(vals.size()) != cols) throw FormatError("model file: weight row has wrong length");
      for (Eigen::Index c = 0; c < cols; ++c) layer.weight(r, c) = read_number(vals[static_cast<std::size_t>(c)]);
    }
    auto bias = expect_line(in, line, "bias");
    if (static_cast<Eigen::Index>(bias.size()) != rows) throw FormatError("model file: bias has wrong length");
    for (Eigen::Index r = 0; r < rows; ++r) layer.bias(r) = read_number(bias[static_cast<std::size_t>(r)]);
    params.layers.push_back(std::move(layer));
  }
  if (params.layers.back().weight.rows() != 2) throw FormatError("model file: output layer must have 2 units");
  return params;
}

void write_sweep_log(const std::vector<SweepLogRow>& log, std::ostream& out) {
  out << "depth\thidden\tnonlinearity\tsplit_id\tdev_accuracy\n";
  for (const auto& row : log) {
    out << row.shape.depth << '\t' << row.shape.hidden << '\t' << to_string(row.shape.nonlinearity) << '\t'
        << row.split_id << '\t' << format_double(row.dev_accuracy, 6) << '\n';
  }
}

}  // namespace genprobe
