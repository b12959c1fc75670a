#include "genprobe/vocabulary.hpp"

#include <algorithm>
#include <istream>
#include <numeric>
#include <ostream>

#include "genprobe/error.hpp"
#include "genprobe/text.hpp"

namespace genprobe {

Vocabulary::Vocabulary(std::vector<Entry> entries) : entries_(std::move(entries)) {
  index_.reserve(entries_.size());
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    if (!index_.emplace(entries_[i].type, static_cast<std::int32_t>(i)).second) {
      throw FormatError("duplicate vocabulary type '" + entries_[i].type + "'");
    }
    total_ += entries_[i].count;
  }
}

std::optional<std::int32_t> Vocabulary::find(std::string_view token) const { return find_folded(fold_case(token)); }

std::optional<std::int32_t> Vocabulary::find_folded(std::string_view type) const {
  auto it = index_.find(std::string(type));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

bool Vocabulary::operator==(const Vocabulary& other) const {
  if (entries_.size() != other.entries_.size()) return false;
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    if (entries_[i].type != other.entries_[i].type || entries_[i].count != other.entries_[i].count) return false;
  }
  return true;
}

Vocabulary build_vocab(const TokenStream& stream, std::uint64_t min_count) {
  if (min_count < 1) throw ConfigError("min_count must be at least 1");
  struct Tally {
    std::uint64_t count;
    std::size_t first_seen;
  };
  std::unordered_map<std::string, Tally> counts;
  std::size_t position = 0;
  for (const auto& sentence : stream.sentences) {
    for (const auto& token : sentence) {
      auto [it, inserted] = counts.try_emplace(fold_case(token), Tally{0, position});
      ++it->second.count;
      ++position;
    }
  }
  std::vector<std::pair<const std::string*, Tally>> kept;
  for (const auto& [type, tally] : counts) {
    if (tally.count >= min_count) kept.emplace_back(&type, tally);
  }
  std::sort(kept.begin(), kept.end(), [](const auto& a, const auto& b) {
    if (a.second.count != b.second.count) return a.second.count > b.second.count;
    return a.second.first_seen < b.second.first_seen;
  });
  std::vector<Vocabulary::Entry> entries;
  entries.reserve(kept.size());
  for (const auto& [type, tally] : kept) entries.push_back({*type, tally.count});
  return Vocabulary(std::move(entries));
}

void write_vocabulary(const Vocabulary& vocab, std::ostream& out) {
  for (const auto& e : vocab.entries()) out << e.type << '\t' << e.count << '\n';
}

Vocabulary read_vocabulary(std::istream& in) {
  std::vector<Vocabulary::Entry> entries;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto cols = split(line, '\t');
    if (cols.size() != 2) throw ParseError(line_no, "vocabulary line needs type and count");
    entries.push_back({std::string(cols[0]), std::stoull(std::string(cols[1]))});
  }
  return Vocabulary(std::move(entries));
}

}  // namespace genprobe
