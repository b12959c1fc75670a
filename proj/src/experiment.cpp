#include "genprobe/experiment.hpp"

#include <algorithm>
#include <set>

#include "genprobe/error.hpp"
#include "genprobe/rng.hpp"
#include "genprobe/stats.hpp"
#include "genprobe/text.hpp"

namespace genprobe {

namespace {

bool in_all(const std::vector<const Vocabulary*>& vocabularies, const std::string& lemma) {
  return std::all_of(vocabularies.begin(), vocabularies.end(),
                     [&](const Vocabulary* v) { return v->find_folded(lemma).has_value(); });
}

Gender gender_of_class(int c) { return c == 1 ? Gender::feminine : Gender::masculine; }

}  // namespace

LanguageLexicon prepare_lexicon(const TaggedCorpus& corpus, const std::vector<ConceptEntry>& concepts,
                                const std::vector<const Vocabulary*>& vocabularies,
                                const LexiconSettings& settings, std::uint64_t split_seed) {
  LanguageLexicon out;
  auto& diag = out.diagnostics;
  ExtractionStats stats;
  const GenderLexicon lexicon = extract_gender_lexicon(corpus, settings.min_occurrences, &stats);
  diag["lexicon_lemmas"] = static_cast<long long>(lexicon.size());
  diag["lexicon_ties"] = static_cast<long long>(stats.ties);
  diag["lexicon_neuter_dropped"] = static_cast<long long>(stats.neuter_dropped);
  diag["lexicon_below_threshold"] = static_cast<long long>(stats.below_threshold);

  const auto inanimate = filter_inanimate(concepts);
  diag["concepts"] = static_cast<long long>(concepts.size());
  diag["concepts_animate"] = static_cast<long long>(concepts.size() - inanimate.size());
  long long no_gender = 0, neuter = 0, oov = 0, duplicate = 0, disagreements = 0;
  std::set<std::string> eval_set;
  for (const auto& c : inanimate) {
    const std::string lemma = fold_case(c.lemma);
    auto it = lexicon.find(lemma);
    std::optional<Gender> g = c.gold_gender;
    if (g && it != lexicon.end() && it->second.gender != *g) ++disagreements;
    if (!g && it != lexicon.end()) g = it->second.gender;
    if (!g) {
      ++no_gender;
      continue;
    }
    if (*g == Gender::neuter) {
      ++neuter;
      continue;
    }
    if (!in_all(vocabularies, lemma)) {
      ++oov;
      continue;
    }
    if (!eval_set.insert(lemma).second) {
      ++duplicate;
      continue;
    }
    out.eval.push_back({lemma, *g});
  }
  std::sort(out.eval.begin(), out.eval.end(), [](const auto& a, const auto& b) { return a.lemma < b.lemma; });
  diag["eval_lemmas"] = static_cast<long long>(out.eval.size());
  diag["eval_dropped_no_gender"] = no_gender;
  diag["eval_dropped_neuter"] = neuter;
  diag["eval_dropped_oov"] = oov;
  diag["eval_dropped_duplicate"] = duplicate;
  diag["eval_gender_disagreements"] = disagreements;

  long long train_oov = 0;
  for (auto& [lemma, entry] : exclude_eval_from_train(lexicon, eval_set)) {
    if (!in_all(vocabularies, lemma)) {
      ++train_oov;
      continue;
    }
    out.train.emplace(lemma, entry);
  }
  diag["train_lemmas"] = static_cast<long long>(out.train.size());
  diag["train_dropped_oov"] = train_oov;
  out.splits = make_eval_splits(eval_set, settings.n_splits, split_seed);
  return out;
}

ClassifierOutcome run_classifier_experiment(const EmbeddingTable& table, const LanguageLexicon& lexicon,
                                            const ClassifierSettings& settings, std::uint64_t seed) {
  const LabeledMatrix train = gather(to_labeled(lexicon.train), table);
  TrainSpec spec = settings.spec;
  spec.seed = seed;
  ClassifierOutcome out;
  out.sweep = sweep_over_splits(train, lexicon.eval, lexicon.splits, table, settings.grid, spec);
  for (const auto& s : out.sweep.splits) {
    std::vector<Gender> labels;
    for (int c : s.test_labels) labels.push_back(gender_of_class(c));
    const Gender majority = majority_class(labels);
    std::vector<bool> classifier_correct, baseline_correct;
    for (std::size_t i = 0; i < labels.size(); ++i) {
      classifier_correct.push_back(s.test_predictions[i] == s.test_labels[i]);
      baseline_correct.push_back(labels[i] == majority);
    }
    const double p = accuracy_significance(classifier_correct, baseline_correct, settings.n_shuffles,
                                           derive_seed(seed, "accuracy-split-" + std::to_string(s.split_id)));
    out.splits.push_back({s.split_id, s.test_accuracy, majority_baseline(labels), p, static_cast<int>(labels.size())});
  }
  return out;
}

DensifierOutcome run_densifier_experiment(const EmbeddingTable& table, const LanguageLexicon& lexicon,
                                          const DensifierSettings& settings, std::uint64_t seed) {
  DensifierOutcome out;
  for (std::size_t k = 0; k < lexicon.splits.size(); ++k) {
    const auto& split = lexicon.splits[k];
    const std::string tag = "-split-" + std::to_string(k);
    const auto dev = select_labeled(lexicon.eval, split.dev);
    const auto test = select_labeled(lexicon.eval, split.test);
    PairSetOptions pair_options = settings.pairs;
    pair_options.seed = derive_seed(seed, "pairs" + tag);
    const PairSets pairs = build_pair_sets(dev, pair_options);
    DensifierConfig config = settings.config;
    config.seed = derive_seed(seed, "densifier" + tag);
    OrthogonalTransform q = train_densifier(table, pairs, config);

    // The objective is symmetric in the sign of the gender row; fix it so
    // that feminine dev lemmas score higher.
    std::vector<double> dev_scores;
    std::vector<Gender> dev_labels;
    for (const auto& s : score_lemmas(q, table, dev)) {
      dev_scores.push_back(s.score);
      dev_labels.push_back(s.gold);
    }
    if (spearman_rho(dev_scores, encode_genders(dev_labels)) < 0) q.q.row(q.gender_axis) *= -1.0;

    const auto scored = score_lemmas(q, table, test);
    std::vector<double> scores;
    std::vector<Gender> labels;
    for (const auto& s : scored) {
      scores.push_back(s.score);
      labels.push_back(s.gold);
    }
    const CorrelationResult r =
        correlate_scores(scores, labels, settings.n_permutations, derive_seed(seed, "correlation" + tag));
    out.splits.push_back({static_cast<int>(k), r.rho, r.p_value, static_cast<int>(r.n)});
    if (k == 0) {
      out.scores = scored;
      out.first_transform = q;
    }
  }
  return out;
}

}  // namespace genprobe
