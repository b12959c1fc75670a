#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "genprobe/lexicon.hpp"

namespace genprobe {

inline constexpr double kSignificanceLevel = 0.05;

struct CorrelationResult {
  double rho = 0.0;
  double p_value = 1.0;
  std::size_t n = 0;
  bool significant = false;
};

// Ranks starting at 1; tied values share their average rank.
std::vector<double> average_ranks(std::span<const double> values);

// Pearson correlation of average ranks. Throws NumericalError when either
// ranking has zero variance or the lengths differ or are below 3.
double spearman_rho(std::span<const double> x, std::span<const double> y);

// masc = 0, fem = 1.
std::vector<double> encode_genders(std::span<const Gender> labels);

// Two-sided label-permutation p-value with add-one smoothing.
double permutation_test_rho(std::span<const double> scores, std::span<const double> labels, int n_perm,
                            std::uint64_t seed);

CorrelationResult correlate_scores(std::span<const double> scores, std::span<const Gender> labels, int n_perm,
                                   std::uint64_t seed);

// Two-sided approximate randomization test of the accuracy difference
// between two per-item correctness vectors.
double accuracy_significance(const std::vector<bool>& classifier_correct, const std::vector<bool>& baseline_correct,
                             int n_shuffles, std::uint64_t seed);

// Merges p-values computed on the same data. Twice the arithmetic mean,
// capped at 1, is a valid p-value under arbitrary dependence.
double merge_p_values(std::span<const double> p_values);

double mean(std::span<const double> v);

}  // namespace genprobe
