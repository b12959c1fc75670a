#include "genprobe/lexicon.hpp"

#include <algorithm>
#include <array>
#include <istream>
#include <ostream>
#include <unordered_map>

#include "genprobe/error.hpp"
#include "genprobe/rng.hpp"
#include "genprobe/text.hpp"

namespace genprobe {

std::string_view to_string(Gender g) {
  switch (g) {
    case Gender::masculine: return "masc";
    case Gender::feminine: return "fem";
    case Gender::neuter: return "neut";
  }
  return "?";
}

std::optional<Gender> parse_gender(std::string_view text) {
  const std::string t = fold_case(trim(text));
  if (t == "masc" || t == "m" || t == "masculine") return Gender::masculine;
  if (t == "fem" || t == "f" || t == "feminine") return Gender::feminine;
  if (t == "neut" || t == "n" || t == "neuter") return Gender::neuter;
  return std::nullopt;
}

GenderLexicon extract_gender_lexicon(const TaggedCorpus& corpus, std::uint64_t min_occurrences,
                                     ExtractionStats* stats) {
  // counts indexed by Gender
  std::unordered_map<std::string, std::array<std::uint64_t, 3>> counts;
  for (const auto& sentence : corpus.sentences) {
    for (const auto& tok : sentence.tokens) {
      if (!tok.is_noun()) continue;
      auto value = tok.morph.get("gender");
      if (!value) continue;
      auto g = parse_gender(*value);
      if (!g) continue;  // multi-valued or unknown gender tags
      const std::string& lemma = tok.has_lemma() ? tok.lemma : tok.form;
      ++counts[fold_case(lemma)][static_cast<std::size_t>(*g)];
    }
  }

  ExtractionStats local;
  GenderLexicon lexicon;
  for (const auto& [lemma, c] : counts) {
    const std::uint64_t support = c[0] + c[1] + c[2];
    if (support <= min_occurrences) {
      ++local.below_threshold;
      continue;
    }
    // Preference order on exact ties: feminine, masculine, neuter.
    constexpr std::array<Gender, 3> order{Gender::feminine, Gender::masculine, Gender::neuter};
    Gender best = order[0];
    std::uint64_t best_count = c[static_cast<std::size_t>(best)];
    bool tie = false;
    for (std::size_t k = 1; k < order.size(); ++k) {
      const std::uint64_t n = c[static_cast<std::size_t>(order[k])];
      if (n > best_count) {
        best = order[k];
        best_count = n;
        tie = false;
      } else if (n == best_count && n > 0) {
        tie = true;
      }
    }
    if (tie) {
      ++local.ties;
      local.tied_lemmas.push_back(lemma);
    }
    if (best == Gender::neuter) {
      ++local.neuter_dropped;
      continue;
    }
    lexicon.emplace(lemma, LexiconEntry{best, support});
  }
  std::sort(local.tied_lemmas.begin(), local.tied_lemmas.end());
  if (stats) *stats = std::move(local);
  return lexicon;
}

void write_gender_lexicon(const GenderLexicon& lexicon, std::ostream& out) {
  for (const auto& [lemma, e] : lexicon) out << lemma << '\t' << to_string(e.gender) << '\t' << e.support << '\n';
}

GenderLexicon read_gender_lexicon(std::istream& in) {
  GenderLexicon lexicon;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty() || line.front() == '#') continue;
    const auto cols = split(line, '\t');
    if (cols.size() < 2) throw ParseError(line_no, "lexicon line needs lemma and gender");
    auto g = parse_gender(cols[1]);
    if (!g) throw ParseError(line_no, "unknown gender '" + std::string(cols[1]) + "'");
    std::uint64_t support = 0;
    if (cols.size() >= 3) support = std::stoull(std::string(cols[2]));
    lexicon[fold_case(cols[0])] = {*g, support};
  }
  return lexicon;
}

std::vector<LabeledLemma> to_labeled(const GenderLexicon& lexicon) {
  std::vector<LabeledLemma> out;
  out.reserve(lexicon.size());
  for (const auto& [lemma, e] : lexicon) out.push_back({lemma, e.gender});
  return out;
}

void write_labeled(const std::vector<LabeledLemma>& lemmas, std::ostream& out) {
  for (const auto& l : lemmas) out << l.lemma << '\t' << to_string(l.gender) << '\n';
}

std::vector<LabeledLemma> read_labeled(std::istream& in) {
  std::vector<LabeledLemma> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty() || line.front() == '#') continue;
    const auto cols = split(line, '\t');
    if (cols.size() < 2) throw ParseError(line_no, "expected lemma and gender");
    auto g = parse_gender(cols[1]);
    if (!g) throw ParseError(line_no, "unknown gender '" + std::string(cols[1]) + "'");
    out.push_back({fold_case(cols[0]), *g});
  }
  return out;
}

std::vector<ConceptEntry> load_concepts(std::istream& in) {
  std::vector<ConceptEntry> entries;
  std::set<std::string> ids;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (trim(line).empty() || line.front() == '#') continue;
    const auto cols = split(line, '\t');
    if (cols.size() < 4) {
      throw FormatError("concept file line " + std::to_string(line_no) + ": missing animacy column");
    }
    ConceptEntry e;
    e.concept_id = std::string(cols[0]);
    e.gloss = std::string(cols[1]);
    e.lemma = std::string(cols[2]);
    const std::string animacy = fold_case(trim(cols[3]));
    if (animacy == "animate") {
      e.animacy = Animacy::animate;
    } else if (animacy == "inanimate") {
      e.animacy = Animacy::inanimate;
    } else {
      throw FormatError("concept file line " + std::to_string(line_no) + ": animacy must be animate or inanimate");
    }
    if (cols.size() >= 5 && !trim(cols[4]).empty()) {
      e.gold_gender = parse_gender(cols[4]);
      if (!e.gold_gender) throw FormatError("concept file line " + std::to_string(line_no) + ": unknown gender");
    }
    if (e.concept_id.empty()) throw FormatError("concept file line " + std::to_string(line_no) + ": empty concept id");
    if (!ids.insert(e.concept_id).second) {
      throw FormatError("concept file line " + std::to_string(line_no) + ": duplicate concept id " + e.concept_id);
    }
    entries.push_back(std::move(e));
  }
  return entries;
}

void write_concepts(const std::vector<ConceptEntry>& entries, std::ostream& out) {
  for (const auto& e : entries) {
    out << e.concept_id << '\t' << e.gloss << '\t' << e.lemma << '\t'
        << (e.animacy == Animacy::animate ? "animate" : "inanimate");
    if (e.gold_gender) out << '\t' << to_string(*e.gold_gender);
    out << '\n';
  }
}

std::vector<ConceptEntry> filter_inanimate(const std::vector<ConceptEntry>& entries) {
  std::vector<ConceptEntry> out;
  std::copy_if(entries.begin(), entries.end(), std::back_inserter(out),
               [](const ConceptEntry& e) { return e.animacy == Animacy::inanimate; });
  return out;
}

std::vector<EvalSplit> make_eval_splits(const std::set<std::string>& eval_lemmas, int n_splits,
                                        std::uint64_t base_seed) {
  if (eval_lemmas.size() < 2) throw ConfigError("evaluation splits need at least 2 lemmas");
  if (n_splits < 1) throw ConfigError("need at least one evaluation split");
  const std::vector<std::string> sorted(eval_lemmas.begin(), eval_lemmas.end());
  std::vector<EvalSplit> splits;
  for (int s = 0; s < n_splits; ++s) {
    const std::uint64_t seed = derive_seed(base_seed, "split-" + std::to_string(s));
    Rng rng(seed);
    std::vector<std::string> order = sorted;
    rng.shuffle(order);
    const std::size_t half = order.size() / 2;
    EvalSplit split;
    split.dev.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(half));
    split.test.assign(order.begin() + static_cast<std::ptrdiff_t>(half), order.end());
    std::sort(split.dev.begin(), split.dev.end());
    std::sort(split.test.begin(), split.test.end());
    split.split_seed = seed;
    splits.push_back(std::move(split));
  }
  return splits;
}

GenderLexicon exclude_eval_from_train(const GenderLexicon& train, const std::set<std::string>& eval_lemmas) {
  GenderLexicon out;
  for (const auto& [lemma, e] : train) {
    if (!eval_lemmas.contains(lemma)) out.emplace(lemma, e);
  }
  return out;
}

std::vector<LabeledLemma> select_labeled(const std::vector<LabeledLemma>& pool,
                                         const std::vector<std::string>& lemmas) {
  std::unordered_map<std::string, Gender> index;
  for (const auto& l : pool) index.emplace(l.lemma, l.gender);
  std::vector<LabeledLemma> out;
  for (const auto& l : lemmas) {
    auto it = index.find(l);
    if (it != index.end()) out.push_back({l, it->second});
  }
  return out;
}

}  // namespace genprobe
