#pragma once

#include <cstddef>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace genprobe {

struct MorphFeature {
  std::string attribute;  // lowercase
  std::string value;

  auto operator<=>(const MorphFeature&) const = default;
};

// A set of attribute=value pairs with at most one value per attribute.
// Features are kept sorted by attribute, so equality is order-independent.
class MorphBundle {
 public:
  MorphBundle() = default;

  // Parses `attr=val|attr=val` or `_` for the empty bundle.
  // Throws std::invalid_argument with a short reason on malformed input.
  static MorphBundle parse(std::string_view text);

  void set(std::string_view attribute, std::string_view value);
  std::optional<std::string_view> get(std::string_view attribute) const;
  const std::vector<MorphFeature>& features() const noexcept { return features_; }
  bool empty() const noexcept { return features_.empty(); }

  std::string to_string() const;

  bool operator==(const MorphBundle&) const = default;

 private:
  std::vector<MorphFeature> features_;
};

// One corpus position: surface form, lemma, part of speech and features.
struct TaggedToken {
  std::string form;
  std::string lemma;  // "_" when the tagger produced none
  std::string pos;
  MorphBundle morph;

  bool has_lemma() const noexcept { return lemma != "_"; }
  bool is_noun() const noexcept { return pos == "NOUN"; }
};

struct TaggedSentence {
  std::vector<std::string> comments;  // without the leading '#'
  std::vector<TaggedToken> tokens;
};

struct TaggedCorpus {
  std::string language;
  std::string provenance;
  std::vector<std::string> tagset;
  std::vector<std::string> header;  // comment lines before the first sentence
  std::vector<TaggedSentence> sentences;
  std::vector<std::string> trailer;  // comment lines after the last sentence

  std::size_t token_count() const;
};

// UD universal part-of-speech tags, the tagset assumed when a corpus
// header does not declare one.
const std::vector<std::string>& default_tagset();

struct ParseOptions {
  // When non-empty, the corpus header must declare this language.
  std::string expected_language;
};

TaggedCorpus parse_tagged_corpus(std::istream& in, const ParseOptions& options = {});
TaggedCorpus parse_tagged_corpus(std::string_view text, const ParseOptions& options = {});
TaggedCorpus read_tagged_corpus(const std::string& path, const ParseOptions& options = {});

void write_tagged_corpus(const TaggedCorpus& corpus, std::ostream& out);
std::string serialize_tagged_corpus(const TaggedCorpus& corpus);

enum class ConditionKind { forms, lemmata, nouns, not_nouns };

inline constexpr ConditionKind kAllConditions[] = {ConditionKind::forms, ConditionKind::lemmata,
                                                   ConditionKind::nouns, ConditionKind::not_nouns};

std::string_view to_string(ConditionKind kind);
std::optional<ConditionKind> parse_condition(std::string_view name);

// Conditioned training text: one vector of tokens per sentence.
struct TokenStream {
  std::vector<std::vector<std::string>> sentences;
  // Positions where a lemma was requested but missing, so the form was used.
  std::size_t lemma_fallbacks = 0;

  std::size_t token_count() const;
};

TokenStream apply_condition(const TaggedCorpus& corpus, ConditionKind condition);

void write_token_stream(const TokenStream& stream, std::ostream& out);
TokenStream read_token_stream(std::istream& in);

}  // namespace genprobe
