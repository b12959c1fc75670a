#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "genprobe/corpus.hpp"
#include "genprobe/lexicon.hpp"

namespace genprobe {

enum class SlotCategory { determiner, adjective, noun, verb, adposition };

std::string_view to_string(SlotCategory c);
std::vector<SlotCategory> default_sentence_template();

struct SynthSpec {
  int n_noun_lemmas = 400;
  double gender_balance = 0.5;  // fraction of feminine nouns
  int n_context_lemmas = 200;   // adjectives + verbs, split evenly
  int n_adpositions = 8;
  bool concord = true;
  double whorf_strength = 0.0;  // beta in [0, 1]
  int n_sentences = 200'000;
  std::vector<SlotCategory> sentence_template = default_sentence_template();
  double zipf_exponent = 1.0;
  double plural_rate = 0.3;
  double eval_fraction = 0.5;      // nouns listed in the concept file
  double animate_fraction = 0.05;  // of the listed concepts
  std::string language = "xx";
  std::uint64_t seed = 1;

  void validate() const;
};

// `key = value` lines; unknown keys are a ConfigError.
SynthSpec parse_synth_spec(std::istream& in);
void write_synth_spec(const SynthSpec& spec, std::ostream& out);

struct SynthGroundTruth {
  std::map<std::string, Gender> genders;           // noun lemma -> gender
  std::map<std::string, Gender> context_affinity;  // adjective/verb lemma -> affinity
};

struct SynthOutput {
  TaggedCorpus corpus;
  SynthGroundTruth truth;
  std::vector<ConceptEntry> concepts;
};

SynthOutput generate_corpus(const SynthSpec& spec);

// Sidecar: `noun<TAB>lemma<TAB>gender` and `context<TAB>lemma<TAB>affinity`.
void write_ground_truth(const SynthGroundTruth& truth, std::ostream& out);
SynthGroundTruth read_ground_truth(std::istream& in);

struct TruthMismatch {
  std::size_t sentence;
  std::size_t token;
  std::string lemma;
  std::string reason;
};

struct TruthDiagnostics {
  std::size_t noun_tokens = 0;
  std::vector<TruthMismatch> mismatches;
  std::vector<std::string> missing_lemmas;  // truth lemmas never seen in the corpus

  bool ok() const { return mismatches.empty() && missing_lemmas.empty(); }
  std::vector<std::string> offending_lemmas() const;
};

// Checks every noun token's gender tag against the truth table.
TruthDiagnostics verify_ground_truth(const TaggedCorpus& corpus, const SynthGroundTruth& truth);

}  // namespace genprobe
