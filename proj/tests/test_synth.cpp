#include <gtest/gtest.h>

#include <cmath>
#include <map>
#include <sstream>

#include "genprobe/error.hpp"
#include "genprobe/lexicon.hpp"
#include "genprobe/synth.hpp"

using namespace genprobe;

namespace {

SynthSpec small_spec(double beta, std::uint64_t seed = 1) {
  SynthSpec s;
  s.n_noun_lemmas = 100;
  s.n_context_lemmas = 40;
  s.n_sentences = 20'000;
  s.whorf_strength = beta;
  s.seed = seed;
  return s;
}

// Head noun of each context token: adjectives and determiners look right,
// verbs look left.
std::vector<std::pair<const TaggedToken*, const TaggedToken*>> context_heads(const TaggedCorpus& c) {
  std::vector<std::pair<const TaggedToken*, const TaggedToken*>> out;
  for (const auto& s : c.sentences) {
    const auto& t = s.tokens;
    for (std::size_t i = 0; i < t.size(); ++i) {
      const TaggedToken* head = nullptr;
      if (t[i].pos == "ADJ" || t[i].pos == "DET") {
        for (std::size_t j = i + 1; j < t.size() && !head; ++j)
          if (t[j].is_noun()) head = &t[j];
      } else if (t[i].pos == "VERB") {
        for (std::size_t j = i; j-- > 0 && !head;)
          if (t[j].is_noun()) head = &t[j];
      } else {
        continue;
      }
      if (head) out.push_back({&t[i], head});
    }
  }
  return out;
}

// Upper chi-square quantile by the Wilson-Hilferty approximation.
double chi2_quantile(double dof, double z) {
  const double a = 2.0 / (9.0 * dof);
  return dof * std::pow(1.0 - a + z * std::sqrt(a), 3.0);
}

}  // namespace

TEST(GenerateCorpus, DeterminerFormsFollowHeadGender) {
  const auto out = generate_corpus(small_spec(0.0));
  std::map<std::tuple<std::string, std::string, std::string>, std::set<std::string>> forms;
  std::set<std::string> lemmas;
  for (const auto& [tok, head] : context_heads(out.corpus)) {
    if (tok->pos != "DET") continue;
    forms[{tok->lemma, std::string(*head->morph.get("gender")), std::string(*head->morph.get("number"))}].insert(tok->form);
    lemmas.insert(tok->lemma);
    EXPECT_EQ(tok->morph.get("gender"), head->morph.get("gender"));
  }
  EXPECT_EQ(lemmas, (std::set<std::string>{"el", "un"}));
  ASSERT_EQ(forms.size(), 8u);
  std::set<std::string> all_forms;
  for (const auto& [key, f] : forms) {
    EXPECT_EQ(f.size(), 1u);
    all_forms.insert(*f.begin());
  }
  EXPECT_EQ(all_forms.size(), 8u);
}

TEST(GenerateCorpus, NoConcordLeavesDeterminersUninflected) {
  auto spec = small_spec(0.0);
  spec.concord = false;
  spec.n_sentences = 2000;
  const auto out = generate_corpus(spec);
  std::map<std::string, std::set<std::string>> by_gender;
  for (const auto& [tok, head] : context_heads(out.corpus))
    if (tok->pos == "DET" || tok->pos == "ADJ") by_gender[tok->form].insert(std::string(*head->morph.get("gender")));
  std::size_t shared = 0;
  for (const auto& [form, g] : by_gender) shared += g.size() == 2;
  EXPECT_GT(shared, by_gender.size() / 2);
}

TEST(GenerateCorpus, NoWhorfEffectMeansNoMutualInformation) {
  const auto out = generate_corpus(small_spec(0.0));
  std::map<std::pair<std::string, std::string>, double> joint;
  std::map<std::string, double> lemma_marg, gender_marg;
  double n = 0;
  for (const auto& [tok, head] : context_heads(out.corpus)) {
    if (tok->pos != "ADJ" && tok->pos != "VERB") continue;
    const std::string g(*head->morph.get("gender"));
    joint[{tok->lemma, g}] += 1;
    lemma_marg[tok->lemma] += 1;
    gender_marg[g] += 1;
    n += 1;
  }
  double mi = 0;
  for (const auto& [key, c] : joint) mi += c / n * std::log2(c * n / (lemma_marg[key.first] * gender_marg[key.second]));
  EXPECT_LT(mi, 0.01);
}

TEST(GenerateCorpus, FullWhorfEffectUsesOnlyAffineContext) {
  const auto out = generate_corpus(small_spec(1.0));
  std::size_t checked = 0;
  for (const auto& [tok, head] : context_heads(out.corpus)) {
    if (tok->pos != "ADJ" && tok->pos != "VERB") continue;
    ASSERT_EQ(out.truth.context_affinity.at(tok->lemma), out.truth.genders.at(head->lemma)) << tok->lemma;
    ++checked;
  }
  EXPECT_EQ(checked, 2u * 20'000u);
}

TEST(GenerateCorpus, ReproducibleUnderSeed) {
  auto spec = small_spec(0.3);
  spec.n_sentences = 500;
  EXPECT_EQ(serialize_tagged_corpus(generate_corpus(spec).corpus), serialize_tagged_corpus(generate_corpus(spec).corpus));
  auto other = spec;
  other.seed = 2;
  EXPECT_NE(serialize_tagged_corpus(generate_corpus(spec).corpus), serialize_tagged_corpus(generate_corpus(other).corpus));
}

TEST(GenerateCorpus, SizeAndNounFrequenciesMatchSettings) {
  // Pooled over independent corpora: 8 x 99 degrees of freedom.
  double h = 0;
  for (int r = 1; r <= 100; ++r) h += 1.0 / r;
  double chi2 = 0;
  for (std::uint64_t seed = 1; seed <= 8; ++seed) {
    const auto out = generate_corpus(small_spec(0.0, seed));
    ASSERT_EQ(out.corpus.sentences.size(), 20'000u);
    ASSERT_EQ(out.corpus.token_count(), 7u * 20'000u);
    std::vector<double> counts(100, 0.0);
    double total = 0;
    for (const auto& s : out.corpus.sentences)
      for (const auto& t : s.tokens)
        if (t.is_noun()) counts[static_cast<std::size_t>(std::stoi(t.lemma.substr(1)))] += 1, total += 1;
    for (int i = 0; i < 100; ++i) {
      const double e = total / ((i + 1) * h);
      chi2 += (counts[i] - e) * (counts[i] - e) / e;
    }
  }
  // p > 0.01.
  EXPECT_LT(chi2, chi2_quantile(8 * 99, 2.326));
}

TEST(GenerateCorpus, ConceptListMarksAnimates) {
  const auto out = generate_corpus(small_spec(0.0));
  EXPECT_EQ(out.concepts.size(), 50u);
  std::size_t animate = 0;
  for (const auto& c : out.concepts) {
    animate += c.animacy == Animacy::animate;
    ASSERT_TRUE(c.gold_gender.has_value());
    EXPECT_EQ(*c.gold_gender, out.truth.genders.at(c.lemma));
  }
  EXPECT_EQ(animate, 3u);
}

TEST(VerifyGroundTruth, FreshCorpusMatches) {
  auto spec = small_spec(0.5);
  spec.n_sentences = 3000;
  const auto out = generate_corpus(spec);
  const auto d = verify_ground_truth(out.corpus, out.truth);
  EXPECT_TRUE(d.mismatches.empty());
  EXPECT_EQ(d.noun_tokens, 6000u);
}

TEST(VerifyGroundTruth, OneFlippedTagIsOneMismatch) {
  auto spec = small_spec(0.0);
  spec.n_sentences = 3000;
  auto out = generate_corpus(spec);
  TaggedToken& victim = out.corpus.sentences[17].tokens[2];
  ASSERT_TRUE(victim.is_noun());
  MorphBundle flipped;
  flipped.set("gender", victim.morph.get("gender") == "Masc" ? "Fem" : "Masc");
  flipped.set("number", *victim.morph.get("number"));
  victim.morph = flipped;
  const auto d = verify_ground_truth(out.corpus, out.truth);
  ASSERT_EQ(d.mismatches.size(), 1u);
  EXPECT_EQ(d.mismatches[0].sentence, 17u);
  EXPECT_EQ(d.mismatches[0].token, 2u);
  EXPECT_EQ(d.offending_lemmas(), std::vector<std::string>{victim.lemma});
}

TEST(VerifyGroundTruth, ExtractedLexiconEqualsTruth) {
  const auto out = generate_corpus(small_spec(0.0));
  std::uint64_t min_support = UINT64_MAX;
  std::map<std::string, std::uint64_t> support;
  for (const auto& s : out.corpus.sentences)
    for (const auto& t : s.tokens)
      if (t.is_noun()) ++support[t.lemma];
  for (const auto& [l, n] : support) min_support = std::min(min_support, n);
  ASSERT_EQ(support.size(), out.truth.genders.size());
  const auto lex = extract_gender_lexicon(out.corpus, min_support - 1);
  ASSERT_EQ(lex.size(), out.truth.genders.size());
  for (const auto& [lemma, g] : out.truth.genders) EXPECT_EQ(lex.at(lemma).gender, g);
}

TEST(GroundTruthFile, RoundTrip) {
  auto spec = small_spec(0.0);
  spec.n_sentences = 10;
  const auto out = generate_corpus(spec);
  std::stringstream io;
  write_ground_truth(out.truth, io);
  const auto back = read_ground_truth(io);
  EXPECT_EQ(back.genders, out.truth.genders);
  EXPECT_EQ(back.context_affinity, out.truth.context_affinity);
}

TEST(SynthSpec, TemplateWithAbsentCategoryIsAConfigError) {
  auto spec = small_spec(0.0);
  spec.n_adpositions = 0;
  EXPECT_THROW(generate_corpus(spec), ConfigError);
  spec = small_spec(0.0);
  spec.sentence_template = {SlotCategory::determiner, SlotCategory::adjective};
  EXPECT_THROW(generate_corpus(spec), ConfigError);
  spec = small_spec(0.0);
  spec.n_context_lemmas = 0;
  EXPECT_THROW(spec.validate(), ConfigError);
  spec = small_spec(1.5);
  EXPECT_THROW(spec.validate(), ConfigError);
}

TEST(SynthSpec, ParseAndWriteRoundTrip) {
  std::istringstream in("# comment\nn_noun_lemmas = 12\nwhorf_strength = 0.25\nconcord = false\nlanguage = es\nseed = 9\n");
  const auto s = parse_synth_spec(in);
  EXPECT_EQ(s.n_noun_lemmas, 12);
  EXPECT_DOUBLE_EQ(s.whorf_strength, 0.25);
  EXPECT_FALSE(s.concord);
  EXPECT_EQ(s.language, "es");
  std::stringstream io;
  write_synth_spec(s, io);
  const auto back = parse_synth_spec(io);
  EXPECT_EQ(back.n_noun_lemmas, 12);
  EXPECT_EQ(back.seed, 9u);
  EXPECT_EQ(back.sentence_template, s.sentence_template);
  std::istringstream bad("colour = blue\n");
  EXPECT_THROW(parse_synth_spec(bad), ConfigError);
  std::istringstream bad_int("n_sentences = lots\n");
  EXPECT_THROW(parse_synth_spec(bad_int), ConfigError);
}
