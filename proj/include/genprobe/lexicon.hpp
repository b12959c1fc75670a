#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "genprobe/corpus.hpp"

namespace genprobe {

enum class Gender { masculine, feminine, neuter };

std::string_view to_string(Gender g);
// Accepts masc/fem/neut, m/f/n and the spelled-out names, any case.
std::optional<Gender> parse_gender(std::string_view text);

struct LexiconEntry {
  Gender gender;
  std::uint64_t support;  // gendered tokens of the lemma

  bool operator==(const LexiconEntry&) const = default;
};

// lemma -> gender. Keys are case folded.
using GenderLexicon = std::map<std::string, LexiconEntry, std::less<>>;

struct LabeledLemma {
  std::string lemma;
  Gender gender;

  bool operator==(const LabeledLemma&) const = default;
};

struct ExtractionStats {
  std::size_t ties = 0;
  std::size_t neuter_dropped = 0;
  std::size_t below_threshold = 0;
  std::vector<std::string> tied_lemmas;
};

// Keeps NOUN lemmas with more than `min_occurrences` gendered tokens,
// labelled with their modal gender. Exact ties go to feminine, then
// masculine. Neuter lemmas are dropped.
GenderLexicon extract_gender_lexicon(const TaggedCorpus& corpus, std::uint64_t min_occurrences,
                                     ExtractionStats* stats = nullptr);

// `lemma<TAB>gender<TAB>support` lines.
void write_gender_lexicon(const GenderLexicon& lexicon, std::ostream& out);
GenderLexicon read_gender_lexicon(std::istream& in);

std::vector<LabeledLemma> to_labeled(const GenderLexicon& lexicon);

// `lemma<TAB>gender` lines; extra columns are ignored.
void write_labeled(const std::vector<LabeledLemma>& lemmas, std::ostream& out);
std::vector<LabeledLemma> read_labeled(std::istream& in);

enum class Animacy { animate, inanimate };

struct ConceptEntry {
  std::string concept_id;
  std::string gloss;
  std::string lemma;
  Animacy animacy;
  std::optional<Gender> gold_gender;
};

// Tab-separated `concept_id gloss lemma animacy [gold_gender]`.
std::vector<ConceptEntry> load_concepts(std::istream& in);
void write_concepts(const std::vector<ConceptEntry>& entries, std::ostream& out);
std::vector<ConceptEntry> filter_inanimate(const std::vector<ConceptEntry>& entries);

struct EvalSplit {
  std::vector<std::string> dev;  // sorted
  std::vector<std::string> test;  // sorted
  std::uint64_t split_seed;
};

std::vector<EvalSplit> make_eval_splits(const std::set<std::string>& eval_lemmas, int n_splits,
                                        std::uint64_t base_seed);

GenderLexicon exclude_eval_from_train(const GenderLexicon& train, const std::set<std::string>& eval_lemmas);

// Labelled subset of `lemmas` in the given order; unknown lemmas are skipped.
std::vector<LabeledLemma> select_labeled(const std::vector<LabeledLemma>& pool,
                                         const std::vector<std::string>& lemmas);

}  // namespace genprobe
