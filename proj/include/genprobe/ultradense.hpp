#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "genprobe/embeddings.hpp"
#include "genprobe/lexicon.hpp"

namespace genprobe {

// Orthogonal Q plus the row that carries the gender score. The rank-1
// selector that zeroes every other coordinate is never materialized.
struct OrthogonalTransform {
  Eigen::MatrixXd q;
  int gender_axis = 0;

  int dim() const { return static_cast<int>(q.rows()); }
  static OrthogonalTransform identity(int d);
};

double orthogonality_error(const Eigen::MatrixXd& q);  // max |Q^T Q - I|

struct LemmaPair {
  std::int32_t first;
  std::int32_t second;

  auto operator<=>(const LemmaPair&) const = default;
};

// Same-gender and different-gender pairs over `lemmas` (indices into it).
struct PairSets {
  std::vector<LabeledLemma> lemmas;
  std::vector<LemmaPair> same;
  std::vector<LemmaPair> diff;
  bool sampled = false;  // true when pairs were reservoir sampled
};

struct PairSetOptions {
  std::size_t enumerate_limit = 2000;  // lemmas; above this pairs are sampled
  std::size_t sample_size = 1'000'000;
  std::uint64_t seed = 1;
};

PairSets build_pair_sets(const std::vector<LabeledLemma>& lemmas, const PairSetOptions& options = {});

// Columns are the embeddings of `lemmas` in order.
Eigen::MatrixXd embedding_matrix(const std::vector<LabeledLemma>& lemmas, const EmbeddingTable& table);

// sum_S (q . (e - e'))^2 - sum_D (q . (e - e'))^2 for q the gender row of Q.
double objective_value(const OrthogonalTransform& transform, const Eigen::MatrixXd& vectors,
                       std::span<const LemmaPair> same, std::span<const LemmaPair> diff);

// Rows other than the gender axis are zero.
Eigen::MatrixXd objective_gradient(const OrthogonalTransform& transform, const Eigen::MatrixXd& vectors,
                                   std::span<const LemmaPair> same, std::span<const LemmaPair> diff);

// Orthogonal polar factor U V^T of M, via one-sided Jacobi SVD. Throws
// NumericalError when M is rank deficient or not finite.
Eigen::MatrixXd svd_orthogonalize(const Eigen::MatrixXd& m);

struct DensifierConfig {
  int iterations = 1000;
  double step_size = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::uint64_t seed = 1;
  int gender_axis = 0;

  void validate() const;
};

// Called after each projection with the 1-based iteration and current Q.
using DensifierObserver = std::function<void(int, const Eigen::MatrixXd&)>;

// Stochastic projected gradient: from Q = I, each iteration draws one pair
// from each set, takes an Adam descent step and projects back with SVD.
OrthogonalTransform train_densifier(const Eigen::MatrixXd& vectors, const PairSets& pairs,
                                    const DensifierConfig& config, const DensifierObserver& observer = {});
OrthogonalTransform train_densifier(const EmbeddingTable& table, const PairSets& pairs,
                                    const DensifierConfig& config, const DensifierObserver& observer = {});

double gender_score(const OrthogonalTransform& transform, std::span<const float> embedding);
double gender_score(const OrthogonalTransform& transform, const Eigen::VectorXd& embedding);

struct TransformHeader {
  int dim = 0;
  int iterations = 0;
  std::uint64_t seed = 0;
};

void save_transform(const OrthogonalTransform& transform, const TransformHeader& header, std::ostream& out);
OrthogonalTransform load_transform(std::istream& in, TransformHeader* header = nullptr);

struct ScoredLemma {
  std::string lemma;
  double score;
  Gender gold;
};

std::vector<ScoredLemma> score_lemmas(const OrthogonalTransform& transform, const EmbeddingTable& table,
                                      const std::vector<LabeledLemma>& lemmas);

// `lemma<TAB>score<TAB>gold_gender` lines.
void write_scores(const std::vector<ScoredLemma>& scores, std::ostream& out);

}  // namespace genprobe
