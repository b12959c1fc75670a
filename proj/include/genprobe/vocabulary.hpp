#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "genprobe/corpus.hpp"

namespace genprobe {

// Case-folded token types with dense ids, most frequent first.
class Vocabulary {
 public:
  struct Entry {
    std::string type;
    std::uint64_t count;
  };

  Vocabulary() = default;
  explicit Vocabulary(std::vector<Entry> entries);

  std::size_t size() const noexcept { return entries_.size(); }
  bool empty() const noexcept { return entries_.empty(); }
  const std::vector<Entry>& entries() const noexcept { return entries_; }
  const Entry& operator[](std::size_t id) const { return entries_[id]; }

  // Looks up a raw token; case folding is applied here.
  std::optional<std::int32_t> find(std::string_view token) const;
  // Looks up an already folded type.
  std::optional<std::int32_t> find_folded(std::string_view type) const;

  std::uint64_t total_count() const noexcept { return total_; }

  bool operator==(const Vocabulary& other) const;

 private:
  std::vector<Entry> entries_;
  std::unordered_map<std::string, std::int32_t> index_;
  std::uint64_t total_ = 0;
};

// Keeps types with frequency >= min_count. Ties in frequency keep the order
// of first occurrence, so ids never depend on the characters of a type.
Vocabulary build_vocab(const TokenStream& stream, std::uint64_t min_count);

void write_vocabulary(const Vocabulary& vocab, std::ostream& out);
Vocabulary read_vocabulary(std::istream& in);

}  // namespace genprobe
