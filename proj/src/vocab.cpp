// Copyright 2026 The GACD Lab Authors
// SPDX-License-Identifier: Apache-2.0

#include "gacd/vocab.hpp"

#include <fstream>
#include <sstream>

#include "gacd/error.hpp"

namespace gacd {

Vocab Vocab::build(const std::vector<std::string>& object_classes,
                   const std::vector<std::string>& extra_words, std::size_t size) {
  require(!object_classes.empty(), ErrorCode::kInvalidArgument,
          "vocab: object class list is empty");
  Vocab v;
  auto push = [&](const std::string& text, bool noun, int cls) {
    for (const auto& e : v.entries_) {
      if (e.text == text) {
        if (noun) fail(ErrorCode::kInvalidArgument, "vocab: duplicate token '" + text + "'");
        return;
      }
    }
    v.entries_.push_back({text, noun, cls});
  };
  push(std::string(kBos), false, -1);
  push(std::string(kEos), false, -1);
  for (const char* w : {".", "a", "and"}) push(w, false, -1);
  for (const auto& w : extra_words) push(w, false, -1);
  for (std::size_t c = 0; c < object_classes.size(); ++c) {
    push(object_classes[c], true, static_cast<int>(c));
  }
  require(v.entries_.size() <= size, ErrorCode::kInvalidArgument,
          "vocab: " + std::to_string(v.entries_.size()) +
              " tokens do not fit in vocabulary size " + std::to_string(size));
  for (std::size_t i = v.entries_.size(), k = 0; i < size; ++i, ++k) {
    v.entries_.push_back({"<unused_" + std::to_string(k) + ">", false, -1});
  }
  v.classes_ = object_classes;
  v.index();
  return v;
}

void Vocab::index() {
  lookup_.clear();
  class_noun_.assign(classes_.size(), 0);
  std::vector<bool> seen(classes_.size(), false);
  for (TokenId i = 0; i < entries_.size(); ++i) {
    const Entry& e = entries_[i];
    require(lookup_.emplace(e.text, i).second, ErrorCode::kFormat,
            "vocab: duplicate token '" + e.text + "'");
    if (e.noun) {
      require(e.object_class >= 0 && static_cast<std::size_t>(e.object_class) < classes_.size(),
              ErrorCode::kFormat, "vocab: noun '" + e.text + "' has no object class");
      require(!seen[e.object_class], ErrorCode::kFormat,
              "vocab: object class '" + classes_[e.object_class] + "' named twice");
      seen[e.object_class] = true;
      class_noun_[e.object_class] = i;
    }
  }
  for (std::size_t c = 0; c < classes_.size(); ++c) {
    require(seen[c], ErrorCode::kFormat, "vocab: object class '" + classes_[c] + "' has no noun");
  }
  auto b = lookup_.find(std::string(kBos));
  auto e = lookup_.find(std::string(kEos));
  require(b != lookup_.end() && e != lookup_.end(), ErrorCode::kFormat,
          "vocab: missing <bos> or <eos>");
  bos_ = b->second;
  eos_ = e->second;
  require(!entries_[bos_].noun && !entries_[eos_].noun, ErrorCode::kFormat,
          "vocab: special tokens must not be nouns");
}

Vocab Vocab::parse(std::string_view text) {
  Vocab v;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto t1 = line.find('\t');
    const auto t2 = t1 == std::string::npos ? std::string::npos : line.find('\t', t1 + 1);
    require(t2 != std::string::npos, ErrorCode::kFormat,
            "vocab line " + std::to_string(lineno) + ": expected 3 tab-separated fields");
    Entry e;
    e.text = line.substr(0, t1);
    const std::string pos = line.substr(t1 + 1, t2 - t1 - 1);
    const std::string cls = line.substr(t2 + 1);
    require(pos == "noun" || pos == "other", ErrorCode::kFormat,
            "vocab line " + std::to_string(lineno) + ": pos must be 'noun' or 'other'");
    e.noun = pos == "noun";
    if (e.noun) {
      require(cls != "-" && !cls.empty(), ErrorCode::kFormat,
              "vocab line " + std::to_string(lineno) + ": noun without object class");
      int idx = -1;
      for (std::size_t c = 0; c < v.classes_.size(); ++c) {
        if (v.classes_[c] == cls) idx = static_cast<int>(c);
      }
      if (idx < 0) {
        idx = static_cast<int>(v.classes_.size());
        v.classes_.push_back(cls);
      }
      e.object_class = idx;
    } else {
      require(cls == "-", ErrorCode::kFormat,
              "vocab line " + std::to_string(lineno) + ": non-noun with object class");
    }
    v.entries_.push_back(std::move(e));
  }
  v.index();
  return v;
}

Vocab Vocab::load(const std::string& path) {
  std::ifstream in(path);
  require(static_cast<bool>(in), ErrorCode::kIo, "cannot open vocab file '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str());
}

std::string Vocab::serialize() const {
  std::string out;
  for (const Entry& e : entries_) {
    out += e.text;
    out += '\t';
    out += e.noun ? "noun" : "other";
    out += '\t';
    out += e.noun ? classes_[e.object_class] : "-";
    out += '\n';
  }
  return out;
}

void Vocab::save(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  require(static_cast<bool>(out), ErrorCode::kIo, "cannot write vocab file '" + path + "'");
  out << serialize();
  require(static_cast<bool>(out), ErrorCode::kIo, "write failed for '" + path + "'");
}

const Vocab::Entry& Vocab::entry(TokenId id) const {
  require(id < entries_.size(), ErrorCode::kInvalidArgument,
          "token id " + std::to_string(id) + " out of range");
  return entries_[id];
}

int Vocab::object_class(TokenId id) const { return entry(id).object_class; }

std::optional<TokenId> Vocab::find(std::string_view token) const {
  auto it = lookup_.find(std::string(token));
  if (it == lookup_.end()) return std::nullopt;
  return it->second;
}

TokenId Vocab::id(std::string_view token) const {
  auto found = find(token);
  require(found.has_value(), ErrorCode::kInvalidArgument,
          "unknown token '" + std::string(token) + "'");
  return *found;
}

std::vector<TokenId> Vocab::encode(const std::vector<std::string>& tokens) const {
  std::vector<TokenId> out;
  out.reserve(tokens.size());
  for (const auto& t : tokens) out.push_back(id(t));
  return out;
}

std::vector<std::string> Vocab::decode(const std::vector<TokenId>& ids) const {
  std::vector<std::string> out;
  out.reserve(ids.size());
  for (TokenId i : ids) out.push_back(text(i));
  return out;
}

TokenId Vocab::noun_for_class(int object_class) const {
  require(object_class >= 0 && static_cast<std::size_t>(object_class) < class_noun_.size(),
          ErrorCode::kInvalidArgument, "object class " + std::to_string(object_class) +
                                           " out of range");
  return class_noun_[object_class];
}

int Vocab::class_index(std::string_view name) const {
  for (std::size_t c = 0; c < classes_.size(); ++c) {
    if (classes_[c] == name) return static_cast<int>(c);
  }
  return -1;
}

}  // namespace gacd
