#include "genprobe/corpus.hpp"

#include <algorithm>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>

#include "genprobe/error.hpp"
#include "genprobe/text.hpp"

namespace genprobe {

MorphBundle MorphBundle::parse(std::string_view text) {
  MorphBundle bundle;
  if (text.empty() || text == "_") return bundle;
  for (std::string_view item : split(text, '|')) {
    const std::size_t eq = item.find('=');
    if (eq == std::string_view::npos) throw std::invalid_argument("feature without '=': " + std::string(item));
    const std::string_view attr = item.substr(0, eq);
    const std::string_view value = item.substr(eq + 1);
    if (attr.empty()) throw std::invalid_argument("empty feature attribute");
    if (value.empty()) throw std::invalid_argument("empty feature value for '" + std::string(attr) + "'");
    bundle.set(attr, value);
  }
  return bundle;
}

void MorphBundle::set(std::string_view attribute, std::string_view value) {
  MorphFeature f{fold_case(attribute), std::string(value)};
  auto it = std::lower_bound(features_.begin(), features_.end(), f.attribute,
                             [](const MorphFeature& a, const std::string& key) { return a.attribute < key; });
  if (it != features_.end() && it->attribute == f.attribute) {
    if (it->value != f.value) {
      throw std::invalid_argument("conflicting values for '" + f.attribute + "'");
    }
    return;
  }
  features_.insert(it, std::move(f));
}

std::optional<std::string_view> MorphBundle::get(std::string_view attribute) const {
  const std::string key = fold_case(attribute);
  auto it = std::lower_bound(features_.begin(), features_.end(), key,
                             [](const MorphFeature& a, const std::string& k) { return a.attribute < k; });
  if (it == features_.end() || it->attribute != key) return std::nullopt;
  return std::string_view(it->value);
}

std::string MorphBundle::to_string() const {
  if (features_.empty()) return "_";
  std::string out;
  for (const auto& f : features_) {
    if (!out.empty()) out.push_back('|');
    out += f.attribute;
    out.push_back('=');
    out += f.value;
  }
  return out;
}

std::size_t TaggedCorpus::token_count() const {
  std::size_t n = 0;
  for (const auto& s : sentences) n += s.tokens.size();
  return n;
}

const std::vector<std::string>& default_tagset() {
  static const std::vector<std::string> tags{"ADJ", "ADP", "ADV", "AUX", "CCONJ", "DET", "INTJ", "NOUN", "NUM",
                                             "PART", "PRON", "PROPN", "PUNCT", "SCONJ", "SYM", "VERB", "X"};
  return tags;
}

namespace {

// `# key = value` header metadata.
void read_metadata(TaggedCorpus& corpus, std::string_view comment) {
  const std::size_t eq = comment.find('=');
  if (eq == std::string_view::npos) return;
  const std::string key = fold_case(trim(comment.substr(0, eq)));
  const std::string_view value = trim(comment.substr(eq + 1));
  if (key == "language") {
    corpus.language = std::string(value);
  } else if (key == "provenance") {
    corpus.provenance = std::string(value);
  } else if (key == "tagset") {
    corpus.tagset.clear();
    for (auto tag : split_whitespace(value)) corpus.tagset.emplace_back(tag);
  }
}

}  // namespace

TaggedCorpus parse_tagged_corpus(std::istream& in, const ParseOptions& options) {
  TaggedCorpus corpus;
  TaggedSentence current;
  std::vector<std::string> pending_comments;
  bool seen_token = false;
  std::vector<std::string> tagset;

  auto close_sentence = [&] {
    if (!current.tokens.empty()) {
      corpus.sentences.push_back(std::move(current));
      current = TaggedSentence{};
    }
  };

  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (trim_right(line).empty()) {
      close_sentence();
      continue;
    }
    if (line.front() == '#') {
      std::string text = line.substr(1);
      if (!seen_token) {
        read_metadata(corpus, text);
        corpus.header.push_back(std::move(text));
      } else if (current.tokens.empty()) {
        pending_comments.push_back(std::move(text));
      } else {
        current.comments.push_back(std::move(text));
      }
      continue;
    }
    if (!seen_token) {
      seen_token = true;
      tagset = corpus.tagset.empty() ? default_tagset() : corpus.tagset;
    }
    const auto cols = split(line, '\t');
    if (cols.size() != 4) {
      throw ParseError(line_no, "expected 4 tab-separated columns, found " + std::to_string(cols.size()));
    }
    TaggedToken tok;
    tok.form = std::string(cols[0]);
    tok.lemma = std::string(cols[1]);
    tok.pos = std::string(cols[2]);
    if (tok.form.empty()) throw ParseError(line_no, "empty form");
    if (tok.lemma.empty()) throw ParseError(line_no, "empty lemma (use '_' for a missing lemma)");
    if (tok.pos.empty()) throw ParseError(line_no, "empty part of speech");
    if (std::find(tagset.begin(), tagset.end(), tok.pos) == tagset.end()) {
      throw ParseError(line_no, "part of speech '" + tok.pos + "' is not in the tagset");
    }
    try {
      tok.morph = MorphBundle::parse(cols[3]);
    } catch (const std::invalid_argument& e) {
      throw ParseError(line_no, e.what());
    }
    if (current.tokens.empty() && !pending_comments.empty()) {
      current.comments = std::move(pending_comments);
      pending_comments.clear();
    }
    current.tokens.push_back(std::move(tok));
  }
  close_sentence();
  corpus.trailer = std::move(pending_comments);

  if (!options.expected_language.empty()) {
    if (corpus.language.empty()) {
      corpus.language = options.expected_language;
    } else if (corpus.language != options.expected_language) {
      throw DataError("corpus language '" + corpus.language + "' does not match configured language '" +
                      options.expected_language + "'");
    }
  }
  return corpus;
}

TaggedCorpus parse_tagged_corpus(std::string_view text, const ParseOptions& options) {
  std::istringstream in{std::string(text)};
  return parse_tagged_corpus(in, options);
}

TaggedCorpus read_tagged_corpus(const std::string& path, const ParseOptions& options) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open corpus " + path);
  return parse_tagged_corpus(in, options);
}

void write_tagged_corpus(const TaggedCorpus& corpus, std::ostream& out) {
  for (const auto& h : corpus.header) out << '#' << h << '\n';
  for (const auto& s : corpus.sentences) {
    for (const auto& c : s.comments) out << '#' << c << '\n';
    for (const auto& t : s.tokens) {
      out << t.form << '\t' << t.lemma << '\t' << t.pos << '\t' << t.morph.to_string() << '\n';
    }
    out << '\n';
  }
  for (const auto& c : corpus.trailer) out << '#' << c << '\n';
}

std::string serialize_tagged_corpus(const TaggedCorpus& corpus) {
  std::ostringstream out;
  write_tagged_corpus(corpus, out);
  return out.str();
}

std::string_view to_string(ConditionKind kind) {
  switch (kind) {
    case ConditionKind::forms: return "forms";
    case ConditionKind::lemmata: return "lemmata";
    case ConditionKind::nouns: return "nouns";
    case ConditionKind::not_nouns: return "not_nouns";
  }
  return "?";
}

std::optional<ConditionKind> parse_condition(std::string_view name) {
  for (ConditionKind k : kAllConditions) {
    if (name == to_string(k)) return k;
  }
  if (name == "¬nouns" || name == "not-nouns") return ConditionKind::not_nouns;
  return std::nullopt;
}

std::size_t TokenStream::token_count() const {
  std::size_t n = 0;
  for (const auto& s : sentences) n += s.size();
  return n;
}

TokenStream apply_condition(const TaggedCorpus& corpus, ConditionKind condition) {
  TokenStream stream;
  stream.sentences.reserve(corpus.sentences.size());
  for (const auto& sentence : corpus.sentences) {
    std::vector<std::string> tokens;
    tokens.reserve(sentence.tokens.size());
    for (const auto& tok : sentence.tokens) {
      bool lemmatize = false;
      switch (condition) {
        case ConditionKind::forms: lemmatize = false; break;
        case ConditionKind::lemmata: lemmatize = true; break;
        case ConditionKind::nouns: lemmatize = tok.is_noun(); break;
        case ConditionKind::not_nouns: lemmatize = !tok.is_noun(); break;
      }
      if (lemmatize && !tok.has_lemma()) {
        ++stream.lemma_fallbacks;
        lemmatize = false;
      }
      tokens.push_back(lemmatize ? tok.lemma : tok.form);
    }
    stream.sentences.push_back(std::move(tokens));
  }
  return stream;
}

void write_token_stream(const TokenStream& stream, std::ostream& out) {
  for (const auto& s : stream.sentences) {
    for (std::size_t i = 0; i < s.size(); ++i) {
      if (i) out << ' ';
      out << s[i];
    }
    out << '\n';
  }
}

TokenStream read_token_stream(std::istream& in) {
  TokenStream stream;
  std::string line;
  while (std::getline(in, line)) {
    auto parts = split_whitespace(line);
    if (parts.empty()) continue;
    std::vector<std::string> tokens(parts.begin(), parts.end());
    stream.sentences.push_back(std::move(tokens));
  }
  return stream;
}

}  // namespace genprobe
