// Copyright 2026 The GACD Lab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace gacd {

using TokenId = std::uint32_t;

/// Tagged toy lexicon. Nouns carry the index of the object class they name.
class Vocab {
 public:
  struct Entry {
    std::string text;
    bool noun = false;
    int object_class = -1;
  };

  static constexpr std::string_view kBos = "<bos>";
  static constexpr std::string_view kEos = "<eos>";

  /// Builds the standard caption lexicon: specials, function words, the
  /// prompt words, one noun per object class, then filler up to `size`.
  static Vocab build(const std::vector<std::string>& object_classes,
                     const std::vector<std::string>& extra_words, std::size_t size);

  /// Parses the line-oriented `token<TAB>pos<TAB>object_class` format.
  static Vocab parse(std::string_view text);
  static Vocab load(const std::string& path);
  std::string serialize() const;
  void save(const std::string& path) const;

  std::size_t size() const noexcept { return entries_.size(); }
  const Entry& entry(TokenId id) const;
  const std::string& text(TokenId id) const { return entry(id).text; }
  bool is_noun(TokenId id) const { return id < entries_.size() && entries_[id].noun; }
  int object_class(TokenId id) const;

  std::optional<TokenId> find(std::string_view token) const;
  TokenId id(std::string_view token) const;
  std::vector<TokenId> encode(const std::vector<std::string>& tokens) const;
  std::vector<std::string> decode(const std::vector<TokenId>& ids) const;

  const std::vector<std::string>& object_classes() const noexcept { return classes_; }
  /// Noun token naming `object_class`.
  TokenId noun_for_class(int object_class) const;
  int class_index(std::string_view name) const;

  TokenId bos() const noexcept { return bos_; }
  TokenId eos() const noexcept { return eos_; }
  bool is_special(TokenId id) const noexcept { return id == bos_ || id == eos_; }

 private:
  void index();

  std::vector<Entry> entries_;
  std::vector<std::string> classes_;
  std::unordered_map<std::string, TokenId> lookup_;
  std::vector<TokenId> class_noun_;
  TokenId bos_ = 0;
  TokenId eos_ = 1;
};

}  // namespace gacd
