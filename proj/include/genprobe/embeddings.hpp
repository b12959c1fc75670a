#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <span>
#include <string_view>
#include <vector>

#include "genprobe/corpus.hpp"
#include "genprobe/rng.hpp"
#include "genprobe/vocabulary.hpp"

namespace genprobe {

struct SgnsConfig {
  int dim = 100;
  int window = 2;
  int negatives = 10;
  int epochs = 5;
  double initial_step = 0.025;
  double subsample_threshold = 1e-3;
  std::uint64_t seed = 1;
  // 1 = deterministic single worker; >1 = lock-free concurrent updates.
  int workers = 1;
  std::size_t negative_table_size = 10'000'000;

  void validate() const;
};

// Input vectors are the published embeddings; output (context) vectors are
// kept so training state can be saved.
class EmbeddingTable {
 public:
  EmbeddingTable() = default;
  EmbeddingTable(Vocabulary vocab, int dim);

  const Vocabulary& vocab() const noexcept { return vocab_; }
  int dim() const noexcept { return dim_; }
  std::size_t size() const noexcept { return vocab_.size(); }

  std::span<float> input(std::size_t id) { return {input_.data() + id * dim_, static_cast<std::size_t>(dim_)}; }
  std::span<const float> input(std::size_t id) const {
    return {input_.data() + id * dim_, static_cast<std::size_t>(dim_)};
  }
  std::span<float> output(std::size_t id) { return {output_.data() + id * dim_, static_cast<std::size_t>(dim_)}; }
  std::span<const float> output(std::size_t id) const {
    return {output_.data() + id * dim_, static_cast<std::size_t>(dim_)};
  }

  std::vector<float>& input_data() noexcept { return input_; }
  const std::vector<float>& input_data() const noexcept { return input_; }
  std::vector<float>& output_data() noexcept { return output_; }
  const std::vector<float>& output_data() const noexcept { return output_; }

  // Published vector of a word (case folded), or empty span if unknown.
  std::span<const float> find(std::string_view word) const;
  bool contains(std::string_view word) const { return vocab_.find(word).has_value(); }

  bool all_finite() const;

 private:
  Vocabulary vocab_;
  int dim_ = 0;
  std::vector<float> input_;
  std::vector<float> output_;
};

enum class PairLabel { positive, negative };

template <class T>
struct PairLossResult {
  T loss;
  std::vector<T> grad_center;
  std::vector<T> grad_context;
};

inline double log_sigmoid(double x) {
  return x >= 0 ? -std::log1p(std::exp(-x)) : x - std::log1p(std::exp(x));
}

inline double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

// loss = -log sigma(+-<u, v>), sign + for positive pairs.
template <class T>
PairLossResult<T> sgns_pair_loss(std::span<const T> center, std::span<const T> context, PairLabel label) {
  double dot = 0.0;
  for (std::size_t i = 0; i < center.size(); ++i) dot += static_cast<double>(center[i]) * context[i];
  const double sign = label == PairLabel::positive ? 1.0 : -1.0;
  // d/ddot of -log sigma(sign*dot) = -sign * (1 - sigma(sign*dot))
  const double g = -sign * (1.0 - sigmoid(sign * dot));
  PairLossResult<T> r{static_cast<T>(-log_sigmoid(sign * dot)), std::vector<T>(center.size()),
                      std::vector<T>(center.size())};
  for (std::size_t i = 0; i < center.size(); ++i) {
    r.grad_center[i] = static_cast<T>(g * context[i]);
    r.grad_context[i] = static_cast<T>(g * center[i]);
  }
  return r;
}

// Samples ids with probability proportional to count^0.75 from a
// precomputed table.
class NegativeSampler {
 public:
  NegativeSampler(const Vocabulary& vocab, std::size_t table_size = 10'000'000);

  std::int32_t draw(Rng& rng) const { return table_[rng.below(table_.size())]; }
  std::size_t table_size() const noexcept { return table_.size(); }
  // Exact sampling probability of each id given the table.
  std::vector<double> table_probabilities(std::size_t vocab_size) const;

 private:
  std::vector<std::int32_t> table_;
};

struct EpochLoss {
  int epoch;
  double mean_loss;  // mean per-pair loss over the epoch
  std::uint64_t pairs;
};

struct TrainingLog {
  std::vector<EpochLoss> epochs;
  std::uint64_t tokens_seen = 0;
};

// Skip-gram with negative sampling. Tokens outside `vocab` are skipped; a
// token's characters are only used for the vocabulary lookup.
EmbeddingTable train_sgns(const TokenStream& stream, const Vocabulary& vocab, const SgnsConfig& config,
                          TrainingLog* log = nullptr);

// Vector file: `|V| d` header then `type v1 ... vd` per line.
void save_vectors(const EmbeddingTable& table, std::ostream& out);
void save_context_vectors(const EmbeddingTable& table, std::ostream& out);
EmbeddingTable load_vectors(std::istream& in);
void load_context_vectors(EmbeddingTable& table, std::istream& in);

void save_vectors(const EmbeddingTable& table, const std::filesystem::path& path);
EmbeddingTable load_vectors(const std::filesystem::path& path);

double cosine(std::span<const float> a, std::span<const float> b);

}  // namespace genprobe
