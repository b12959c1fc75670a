#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "genprobe/classifier.hpp"
#include "genprobe/corpus.hpp"
#include "genprobe/embeddings.hpp"
#include "genprobe/lexicon.hpp"
#include "genprobe/report.hpp"
#include "genprobe/ultradense.hpp"
#include "genprobe/vocabulary.hpp"

namespace genprobe {

struct LexiconSettings {
  std::uint64_t min_occurrences = 50;
  int n_splits = 10;
};

// Training lexicon, evaluation lemmas and splits shared by all conditions
// of one language.
struct LanguageLexicon {
  GenderLexicon train;
  std::vector<LabeledLemma> eval;
  std::vector<EvalSplit> splits;
  std::map<std::string, long long> diagnostics;
};

// Eval lemmas are the inanimate concepts; their gender comes from the
// concept file or, failing that, from the corpus. Lemmas missing from any
// of `vocabularies` are dropped and counted.
LanguageLexicon prepare_lexicon(const TaggedCorpus& corpus, const std::vector<ConceptEntry>& concepts,
                                const std::vector<const Vocabulary*>& vocabularies,
                                const LexiconSettings& settings, std::uint64_t split_seed);

struct ClassifierSettings {
  TrainSpec spec;
  SweepGrid grid;
  int n_shuffles = 10'000;
};

struct ClassifierOutcome {
  std::vector<SplitAccuracy> splits;
  MultiSplitSweep sweep;
};

ClassifierOutcome run_classifier_experiment(const EmbeddingTable& table, const LanguageLexicon& lexicon,
                                            const ClassifierSettings& settings, std::uint64_t seed);

struct DensifierSettings {
  DensifierConfig config;
  PairSetOptions pairs;
  int n_permutations = 10'000;
};

struct DensifierOutcome {
  std::vector<SplitCorrelation> splits;
  // Split-0 test scores, oriented on the dev half so that larger = feminine.
  std::vector<ScoredLemma> scores;
  OrthogonalTransform first_transform;
};

// Trains on each split's dev half, scores its test half.
DensifierOutcome run_densifier_experiment(const EmbeddingTable& table, const LanguageLexicon& lexicon,
                                          const DensifierSettings& settings, std::uint64_t seed);

}  // namespace genprobe
