#include "genprobe/synth.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <ostream>
#include <set>

#include "genprobe/error.hpp"
#include "genprobe/rng.hpp"
#include "genprobe/text.hpp"

namespace genprobe {

std::string_view to_string(SlotCategory c) {
  switch (c) {
    case SlotCategory::determiner: return "det";
    case SlotCategory::adjective: return "adj";
    case SlotCategory::noun: return "noun";
    case SlotCategory::verb: return "verb";
    case SlotCategory::adposition: return "adp";
  }
  return "?";
}

namespace {

std::optional<SlotCategory> parse_slot(std::string_view s) {
  const std::string t = fold_case(trim(s));
  if (t == "det" || t == "determiner") return SlotCategory::determiner;
  if (t == "adj" || t == "adjective") return SlotCategory::adjective;
  if (t == "noun") return SlotCategory::noun;
  if (t == "verb") return SlotCategory::verb;
  if (t == "adp" || t == "adposition") return SlotCategory::adposition;
  return std::nullopt;
}

bool uses(const std::vector<SlotCategory>& tmpl, SlotCategory c) {
  return std::find(tmpl.begin(), tmpl.end(), c) != tmpl.end();
}

int n_adjectives(const SynthSpec& s) { return s.n_context_lemmas / 2; }
int n_verbs(const SynthSpec& s) { return s.n_context_lemmas - s.n_context_lemmas / 2; }
int n_feminine(const SynthSpec& s) { return static_cast<int>(std::lround(s.n_noun_lemmas * s.gender_balance)); }

std::string numbered(char prefix, int i, int count, std::string_view suffix = {}) {
  std::string digits = std::to_string(i);
  const std::size_t width = std::max<std::size_t>(3, std::to_string(std::max(count - 1, 0)).size());
  if (digits.size() < width) digits.insert(0, width - digits.size(), '0');
  return std::string(1, prefix) + digits + std::string(suffix);
}

}  // namespace

std::vector<SlotCategory> default_sentence_template() {
  using S = SlotCategory;
  return {S::determiner, S::adjective, S::noun, S::verb, S::adposition, S::determiner, S::noun};
}

void SynthSpec::validate() const {
  if (n_noun_lemmas < 2) throw ConfigError("synth: n_noun_lemmas must be >= 2");
  if (!(gender_balance > 0.0 && gender_balance < 1.0)) throw ConfigError("synth: gender_balance must be in (0, 1)");
  const int fem = n_feminine(*this);
  if (fem < 1 || fem >= n_noun_lemmas) throw ConfigError("synth: gender_balance leaves one gender without nouns");
  if (n_context_lemmas < 0 || n_adpositions < 0) throw ConfigError("synth: lemma counts must be >= 0");
  if (!(whorf_strength >= 0.0 && whorf_strength <= 1.0)) throw ConfigError("synth: whorf_strength must be in [0, 1]");
  if (n_sentences < 1) throw ConfigError("synth: n_sentences must be >= 1");
  if (!(zipf_exponent >= 0.0)) throw ConfigError("synth: zipf_exponent must be >= 0");
  if (!(plural_rate >= 0.0 && plural_rate <= 1.0)) throw ConfigError("synth: plural_rate must be in [0, 1]");
  if (!(eval_fraction >= 0.0 && eval_fraction <= 1.0)) throw ConfigError("synth: eval_fraction must be in [0, 1]");
  if (!(animate_fraction >= 0.0 && animate_fraction <= 1.0)) {
    throw ConfigError("synth: animate_fraction must be in [0, 1]");
  }
  if (language.empty()) throw ConfigError("synth: language must be set");
  if (sentence_template.empty()) throw ConfigError("synth: empty sentence template");
  if (!uses(sentence_template, SlotCategory::noun)) throw ConfigError("synth: template has no noun slot");
  if (uses(sentence_template, SlotCategory::adjective) && n_adjectives(*this) < 2) {
    throw ConfigError("synth: template uses adjectives but fewer than 2 adjective lemmas exist");
  }
  if (uses(sentence_template, SlotCategory::verb) && n_verbs(*this) < 2) {
    throw ConfigError("synth: template uses verbs but fewer than 2 verb lemmas exist");
  }
  if (uses(sentence_template, SlotCategory::adposition) && n_adpositions < 1) {
    throw ConfigError("synth: template uses adpositions but n_adpositions is 0");
  }
}

SynthSpec parse_synth_spec(std::istream& in) {
  SynthSpec spec;
  std::string line;
  std::size_t line_no = 0;
  auto to_int = [&](std::string_view v) {
    try {
      std::size_t used = 0;
      const long long x = std::stoll(std::string(v), &used);
      if (used != v.size()) throw std::invalid_argument("trailing");
      return x;
    } catch (const std::exception&) {
      throw ConfigError("synth spec line " + std::to_string(line_no) + ": expected an integer, got '" + std::string(v) + "'");
    }
  };
  auto to_real = [&](std::string_view v) {
    try {
      std::size_t used = 0;
      const double x = std::stod(std::string(v), &used);
      if (used != v.size()) throw std::invalid_argument("trailing");
      return x;
    } catch (const std::exception&) {
      throw ConfigError("synth spec line " + std::to_string(line_no) + ": expected a number, got '" + std::string(v) + "'");
    }
  };
  while (std::getline(in, line)) {
    ++line_no;
    const auto t = trim(line);
    if (t.empty() || t.front() == '#' || t.front() == ';') continue;
    const auto eq = t.find('=');
    if (eq == std::string_view::npos) throw ConfigError("synth spec line " + std::to_string(line_no) + ": expected key = value");
    const std::string key = fold_case(trim(t.substr(0, eq)));
    const auto value = trim(t.substr(eq + 1));
    if (key == "n_noun_lemmas") spec.n_noun_lemmas = static_cast<int>(to_int(value));
    else if (key == "gender_balance") spec.gender_balance = to_real(value);
    else if (key == "n_context_lemmas") spec.n_context_lemmas = static_cast<int>(to_int(value));
    else if (key == "n_adpositions") spec.n_adpositions = static_cast<int>(to_int(value));
    else if (key == "concord") {
      const std::string v = fold_case(value);
      if (v == "true" || v == "yes" || v == "1") spec.concord = true;
      else if (v == "false" || v == "no" || v == "0") spec.concord = false;
      else throw ConfigError("synth spec line " + std::to_string(line_no) + ": concord must be true or false");
    } else if (key == "whorf_strength") spec.whorf_strength = to_real(value);
    else if (key == "n_sentences") spec.n_sentences = static_cast<int>(to_int(value));
    else if (key == "sentence_template") {
      spec.sentence_template.clear();
      std::string list(value);
      std::replace(list.begin(), list.end(), ',', ' ');
      for (auto slot : split_whitespace(list)) {
        auto c = parse_slot(slot);
        if (!c) throw ConfigError("synth spec line " + std::to_string(line_no) + ": unknown slot '" + std::string(slot) + "'");
        spec.sentence_template.push_back(*c);
      }
    } else if (key == "zipf_exponent") spec.zipf_exponent = to_real(value);
    else if (key == "plural_rate") spec.plural_rate = to_real(value);
    else if (key == "eval_fraction") spec.eval_fraction = to_real(value);
    else if (key == "animate_fraction") spec.animate_fraction = to_real(value);
    else if (key == "language") spec.language = std::string(value);
    else if (key == "seed") spec.seed = static_cast<std::uint64_t>(to_int(value));
    else throw ConfigError("synth spec line " + std::to_string(line_no) + ": unknown key '" + key + "'");
  }
  spec.validate();
  return spec;
}

void write_synth_spec(const SynthSpec& spec, std::ostream& out) {
  out << "n_noun_lemmas = " << spec.n_noun_lemmas << '\n'
      << "gender_balance = " << spec.gender_balance << '\n'
      << "n_context_lemmas = " << spec.n_context_lemmas << '\n'
      << "n_adpositions = " << spec.n_adpositions << '\n'
      << "concord = " << (spec.concord ? "true" : "false") << '\n'
      << "whorf_strength = " << spec.whorf_strength << '\n'
      << "n_sentences = " << spec.n_sentences << '\n'
      << "sentence_template =";
  for (auto c : spec.sentence_template) out << ' ' << to_string(c);
  out << '\n'
      << "zipf_exponent = " << spec.zipf_exponent << '\n'
      << "plural_rate = " << spec.plural_rate << '\n'
      << "eval_fraction = " << spec.eval_fraction << '\n'
      << "animate_fraction = " << spec.animate_fraction << '\n'
      << "language = " << spec.language << '\n'
      << "seed = " << spec.seed << '\n';
}

namespace {

struct Lexicon {
  std::vector<std::string> nouns;
  std::vector<Gender> noun_gender;
  std::vector<double> noun_cdf;
  std::vector<std::string> adjectives;
  std::vector<std::string> verbs;
  std::vector<std::string> adpositions;
  // per context category, lemma indices with each affinity [masc, fem]
  std::vector<int> adj_by_affinity[2];
  std::vector<int> verb_by_affinity[2];
};

int gender_index(Gender g) { return g == Gender::feminine ? 1 : 0; }

// Half of the items get each affinity, assigned at random.
std::vector<Gender> balanced_assignment(int n, int n_fem, Rng& rng) {
  std::vector<Gender> g(static_cast<std::size_t>(n), Gender::masculine);
  std::fill(g.begin(), g.begin() + n_fem, Gender::feminine);
  rng.shuffle(g);
  return g;
}

std::size_t draw_cdf(const std::vector<double>& cdf, Rng& rng) {
  const double u = rng.uniform() * cdf.back();
  auto it = std::upper_bound(cdf.begin(), cdf.end(), u);
  return std::min<std::size_t>(static_cast<std::size_t>(it - cdf.begin()), cdf.size() - 1);
}

std::string_view gender_feature(Gender g) { return g == Gender::feminine ? "Fem" : "Masc"; }

std::string determiner_form(bool definite, Gender g, bool plural, bool concord) {
  const bool fem = concord && g == Gender::feminine;
  if (definite) return fem ? (plural ? "las" : "la") : (plural ? "los" : "el");
  return fem ? (plural ? "unas" : "una") : (plural ? "unos" : "un");
}

}  // namespace

SynthOutput generate_corpus(const SynthSpec& spec) {
  spec.validate();
  Rng rng(derive_seed(spec.seed, "synth"));
  Lexicon lex;
  const int n = spec.n_noun_lemmas;
  for (int i = 0; i < n; ++i) lex.nouns.push_back(numbered('n', i, n));
  lex.noun_gender = balanced_assignment(n, n_feminine(spec), rng);
  double acc = 0.0;
  for (int r = 1; r <= n; ++r) {
    acc += 1.0 / std::pow(static_cast<double>(r), spec.zipf_exponent);
    lex.noun_cdf.push_back(acc);
  }
  const int na = n_adjectives(spec), nv = n_verbs(spec);
  for (int i = 0; i < na; ++i) lex.adjectives.push_back(numbered('a', i, na, "o"));
  for (int i = 0; i < nv; ++i) lex.verbs.push_back(numbered('v', i, nv, "r"));
  for (int i = 0; i < spec.n_adpositions; ++i) lex.adpositions.push_back(numbered('p', i, spec.n_adpositions));

  SynthOutput out;
  const auto adj_aff = balanced_assignment(na, na / 2, rng);
  const auto verb_aff = balanced_assignment(nv, nv / 2, rng);
  for (int i = 0; i < na; ++i) {
    lex.adj_by_affinity[gender_index(adj_aff[i])].push_back(i);
    out.truth.context_affinity[lex.adjectives[i]] = adj_aff[i];
  }
  for (int i = 0; i < nv; ++i) {
    lex.verb_by_affinity[gender_index(verb_aff[i])].push_back(i);
    out.truth.context_affinity[lex.verbs[i]] = verb_aff[i];
  }
  for (int i = 0; i < n; ++i) out.truth.genders[lex.nouns[i]] = lex.noun_gender[i];

  // Head noun of every slot: determiners and adjectives take the next noun
  // to the right, verbs the closest noun to the left.
  const auto& tmpl = spec.sentence_template;
  const int slots = static_cast<int>(tmpl.size());
  std::vector<int> head(tmpl.size(), -1);
  for (int i = 0; i < slots; ++i) {
    if (tmpl[i] == SlotCategory::noun) {
      head[i] = i;
      continue;
    }
    int right = -1, left = -1;
    for (int j = i + 1; j < slots && right < 0; ++j)
      if (tmpl[j] == SlotCategory::noun) right = j;
    for (int j = i - 1; j >= 0 && left < 0; --j)
      if (tmpl[j] == SlotCategory::noun) left = j;
    const bool rightward = tmpl[i] != SlotCategory::verb;
    head[i] = rightward ? (right >= 0 ? right : left) : (left >= 0 ? left : right);
  }

  const double p_affine = (1.0 + spec.whorf_strength) / 2.0;
  auto pick_context = [&](const std::vector<int> (&by_aff)[2], Gender g) {
    const int affine = gender_index(g);
    const int set = rng.coin(p_affine) ? affine : 1 - affine;
    const auto& pool = by_aff[set];
    return pool[static_cast<std::size_t>(rng.below(pool.size()))];
  };

  TaggedCorpus& corpus = out.corpus;
  corpus.language = spec.language;
  corpus.provenance = "synthetic seed=" + std::to_string(spec.seed);
  corpus.tagset = default_tagset();
  corpus.header = {" language = " + corpus.language, " provenance = " + corpus.provenance};
  corpus.sentences.reserve(static_cast<std::size_t>(spec.n_sentences));

  std::vector<int> noun_at(tmpl.size());
  std::vector<bool> plural_at(tmpl.size());
  for (int s = 0; s < spec.n_sentences; ++s) {
    for (int i = 0; i < slots; ++i) {
      if (tmpl[i] != SlotCategory::noun) continue;
      noun_at[i] = static_cast<int>(draw_cdf(lex.noun_cdf, rng));
      plural_at[i] = rng.coin(spec.plural_rate);
    }
    TaggedSentence sentence;
    sentence.tokens.reserve(tmpl.size());
    for (int i = 0; i < slots; ++i) {
      const int h = head[i];
      const Gender g = lex.noun_gender[noun_at[h]];
      const bool pl = plural_at[h];
      const std::string_view number = pl ? "Plur" : "Sing";
      TaggedToken tok;
      switch (tmpl[i]) {
        case SlotCategory::noun: {
          const std::string& lemma = lex.nouns[noun_at[i]];
          tok = {pl ? lemma + "s" : lemma, lemma, "NOUN", {}};
          tok.morph.set("Gender", gender_feature(g));
          tok.morph.set("Number", number);
          break;
        }
        case SlotCategory::determiner: {
          const bool definite = rng.coin(0.5);
          tok = {determiner_form(definite, g, pl, spec.concord), definite ? "el" : "un", "DET", {}};
          tok.morph.set("Definite", definite ? "Def" : "Ind");
          if (spec.concord) tok.morph.set("Gender", gender_feature(g));
          tok.morph.set("Number", number);
          break;
        }
        case SlotCategory::adjective: {
          const std::string& lemma = lex.adjectives[pick_context(lex.adj_by_affinity, g)];
          std::string form = lemma;
          if (spec.concord && g == Gender::feminine) form.back() = 'a';
          if (pl) form += 's';
          tok = {std::move(form), lemma, "ADJ", {}};
          if (spec.concord) tok.morph.set("Gender", gender_feature(g));
          tok.morph.set("Number", number);
          break;
        }
        case SlotCategory::verb: {
          const std::string& lemma = lex.verbs[pick_context(lex.verb_by_affinity, g)];
          std::string form = lemma.substr(0, lemma.size() - 1) + (pl ? "an" : "a");
          tok = {std::move(form), lemma, "VERB", {}};
          tok.morph.set("Number", number);
          tok.morph.set("Person", "3");
          break;
        }
        case SlotCategory::adposition: {
          const std::string& lemma = lex.adpositions[static_cast<std::size_t>(rng.below(lex.adpositions.size()))];
          tok = {lemma, lemma, "ADP", {}};
          break;
        }
      }
      sentence.tokens.push_back(std::move(tok));
    }
    corpus.sentences.push_back(std::move(sentence));
  }

  // Concept list: a random subset of nouns, a few of them animate.
  std::vector<int> order(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) order[i] = i;
  rng.shuffle(order);
  const int listed = static_cast<int>(std::lround(n * spec.eval_fraction));
  const int animate = static_cast<int>(std::lround(listed * spec.animate_fraction));
  order.resize(static_cast<std::size_t>(listed));
  std::sort(order.begin() + animate, order.end());
  for (int k = 0; k < listed; ++k) {
    const int i = order[k];
    out.concepts.push_back({numbered('c', k, listed), "thing " + std::to_string(i), lex.nouns[i],
                            k < animate ? Animacy::animate : Animacy::inanimate, lex.noun_gender[i]});
  }
  return out;
}

void write_ground_truth(const SynthGroundTruth& truth, std::ostream& out) {
  for (const auto& [lemma, g] : truth.genders) out << "noun\t" << lemma << '\t' << to_string(g) << '\n';
  for (const auto& [lemma, g] : truth.context_affinity) out << "context\t" << lemma << '\t' << to_string(g) << '\n';
}

SynthGroundTruth read_ground_truth(std::istream& in) {
  SynthGroundTruth truth;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto t = trim_right(line);
    if (t.empty() || t.front() == '#') continue;
    const auto cols = split(t, '\t');
    if (cols.size() != 3) throw ParseError(line_no, "ground truth line needs 3 columns");
    auto g = parse_gender(cols[2]);
    if (!g) throw ParseError(line_no, "unknown gender '" + std::string(cols[2]) + "'");
    if (cols[0] == "noun") truth.genders[std::string(cols[1])] = *g;
    else if (cols[0] == "context") truth.context_affinity[std::string(cols[1])] = *g;
    else throw ParseError(line_no, "unknown ground truth kind '" + std::string(cols[0]) + "'");
  }
  return truth;
}

std::vector<std::string> TruthDiagnostics::offending_lemmas() const {
  std::set<std::string> s(missing_lemmas.begin(), missing_lemmas.end());
  for (const auto& m : mismatches) s.insert(m.lemma);
  return {s.begin(), s.end()};
}

TruthDiagnostics verify_ground_truth(const TaggedCorpus& corpus, const SynthGroundTruth& truth) {
  TruthDiagnostics d;
  std::set<std::string> seen;
  for (std::size_t s = 0; s < corpus.sentences.size(); ++s) {
    const auto& tokens = corpus.sentences[s].tokens;
    for (std::size_t t = 0; t < tokens.size(); ++t) {
      const auto& tok = tokens[t];
      if (!tok.is_noun()) continue;
      ++d.noun_tokens;
      const std::string lemma = fold_case(tok.has_lemma() ? tok.lemma : tok.form);
      seen.insert(lemma);
      auto it = truth.genders.find(lemma);
      if (it == truth.genders.end()) {
        d.mismatches.push_back({s, t, lemma, "noun lemma not in ground truth"});
        continue;
      }
      auto value = tok.morph.get("gender");
      if (!value) {
        d.mismatches.push_back({s, t, lemma, "noun has no gender feature"});
        continue;
      }
      auto g = parse_gender(*value);
      if (!g || *g != it->second) {
        d.mismatches.push_back({s, t, lemma, "tagged " + std::string(*value) + ", ground truth " +
                                                 std::string(to_string(it->second))});
      }
    }
  }
  for (const auto& [lemma, g] : truth.genders) {
    if (!seen.count(lemma)) d.missing_lemmas.push_back(lemma);
  }
  return d;
}

}  // namespace genprobe
