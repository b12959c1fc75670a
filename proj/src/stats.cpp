#include "genprobe/stats.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "genprobe/error.hpp"
#include "genprobe/rng.hpp"

namespace genprobe {

std::vector<double> average_ranks(std::span<const double> values) {
  const std::size_t n = values.size();
  for (double v : values) {
    if (std::isnan(v)) throw NumericalError("cannot rank NaN values");
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
  std::vector<double> ranks(n);
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j + 1 < n && values[order[j + 1]] == values[order[i]]) ++j;
    const double r = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = r;
    i = j + 1;
  }
  return ranks;
}

namespace {

// Centered ranks and their sum of squares.
struct CenteredRanks {
  std::vector<double> values;
  double sum_squares = 0.0;
};

CenteredRanks centered_ranks(std::span<const double> x) {
  CenteredRanks c{average_ranks(x), 0.0};
  const double m = mean(c.values);
  for (double& v : c.values) {
    v -= m;
    c.sum_squares += v * v;
  }
  return c;
}

void check_pair(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw NumericalError("correlation inputs differ in length");
  if (x.size() < 3) throw NumericalError("correlation needs at least 3 observations");
}

double dot(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

}  // namespace

double spearman_rho(std::span<const double> x, std::span<const double> y) {
  check_pair(x, y);
  const CenteredRanks rx = centered_ranks(x);
  const CenteredRanks ry = centered_ranks(y);
  if (rx.sum_squares <= 0.0 || ry.sum_squares <= 0.0) {
    throw NumericalError("correlation undefined: a ranking has zero variance");
  }
  return std::clamp(dot(rx.values, ry.values) / std::sqrt(rx.sum_squares * ry.sum_squares), -1.0, 1.0);
}

std::vector<double> encode_genders(std::span<const Gender> labels) {
  std::vector<double> out;
  out.reserve(labels.size());
  for (Gender g : labels) {
    if (g == Gender::neuter) throw DataError("neuter has no 0/1 encoding");
    out.push_back(g == Gender::feminine ? 1.0 : 0.0);
  }
  return out;
}

double permutation_test_rho(std::span<const double> scores, std::span<const double> labels, int n_perm,
                            std::uint64_t seed) {
  if (n_perm < 1000) throw ConfigError("permutation test needs at least 1000 permutations");
  check_pair(scores, labels);
  const CenteredRanks rx = centered_ranks(scores);
  CenteredRanks ry = centered_ranks(labels);
  if (rx.sum_squares <= 0.0 || ry.sum_squares <= 0.0) {
    throw NumericalError("correlation undefined: a ranking has zero variance");
  }
  const double norm = std::sqrt(rx.sum_squares * ry.sum_squares);
  const double observed = std::abs(dot(rx.values, ry.values) / norm);
  // Guards against rounding when a permutation reproduces the observed ranks.
  const double threshold = observed - 1e-12;
  Rng rng(derive_seed(seed, "rho-permutation"));
  std::uint64_t extreme = 0;
  for (int p = 0; p < n_perm; ++p) {
    rng.shuffle(ry.values);
    if (std::abs(dot(rx.values, ry.values) / norm) >= threshold) ++extreme;
  }
  return static_cast<double>(1 + extreme) / static_cast<double>(1 + n_perm);
}

CorrelationResult correlate_scores(std::span<const double> scores, std::span<const Gender> labels, int n_perm,
                                   std::uint64_t seed) {
  const std::vector<double> y = encode_genders(labels);
  CorrelationResult r;
  r.n = scores.size();
  r.rho = spearman_rho(scores, y);
  r.p_value = permutation_test_rho(scores, y, n_perm, seed);
  r.significant = r.p_value < kSignificanceLevel;
  return r;
}

double accuracy_significance(const std::vector<bool>& classifier_correct, const std::vector<bool>& baseline_correct,
                             int n_shuffles, std::uint64_t seed) {
  if (classifier_correct.empty()) throw ConfigError("accuracy significance needs at least one item");
  if (classifier_correct.size() != baseline_correct.size()) {
    throw ConfigError("accuracy significance: correctness vectors differ in length");
  }
  if (n_shuffles < 1) throw ConfigError("accuracy significance needs at least one shuffle");
  // Only discordant items change under a swap; each contributes +-1.
  std::vector<int> discordant;
  for (std::size_t i = 0; i < classifier_correct.size(); ++i) {
    if (classifier_correct[i] != baseline_correct[i]) discordant.push_back(classifier_correct[i] ? 1 : -1);
  }
  const long observed = std::abs(std::accumulate(discordant.begin(), discordant.end(), 0L));
  Rng rng(derive_seed(seed, "accuracy-randomization"));
  std::uint64_t extreme = 0;
  for (int s = 0; s < n_shuffles; ++s) {
    long diff = 0;
    for (int d : discordant) diff += rng.coin(0.5) ? d : -d;
    if (std::abs(diff) >= observed) ++extreme;
  }
  return static_cast<double>(1 + extreme) / static_cast<double>(1 + n_shuffles);
}

double merge_p_values(std::span<const double> p_values) {
  if (p_values.empty()) throw ConfigError("no p-values to merge");
  return std::min(1.0, 2.0 * mean(p_values));
}

double mean(std::span<const double> v) {
  if (v.empty()) throw ConfigError("mean of an empty list");
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

}  // namespace genprobe
