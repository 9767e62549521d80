// Copyright (C) 2026 The sebox Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Shared vocabulary: type symbols, the class catalog, rule ASTs and boxes.

#pragma once

#include <algorithm>
#include <compare>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "sebox/error.hpp"

namespace sebox {

using RuleId = std::uint32_t;

// A policy source file: repository-relative path plus contents.
struct SourceFile {
  std::string path;
  std::string text;

  friend bool operator==(const SourceFile&, const SourceFile&) = default;
};

enum class SymbolKind { ConcreteType, Attribute };

struct TypeSymbol {
  std::string name;
  SymbolKind kind = SymbolKind::ConcreteType;
  std::set<std::string> aliases;

  friend bool operator==(const TypeSymbol&, const TypeSymbol&) = default;
};

// Classes and their permission sets, with commons kept for inheritance.
struct ClassCatalog {
  std::map<std::string, std::set<std::string>> classes;
  std::map<std::string, std::set<std::string>> commons;

  bool has_class(std::string_view name) const {
    return classes.find(std::string(name)) != classes.end();
  }

  // Resolved permission set (own block plus inherited common).
  const std::set<std::string>& lookup(std::string_view name) const {
    auto it = classes.find(std::string(name));
    if (it == classes.end())
      throw Error(ErrorCode::UnknownClass, std::string(name));
    return it->second;
  }

  // Sum over classes of |permissions(class)|.
  std::size_t permission_count() const {
    std::size_t n = 0;
    for (const auto& [_, perms] : classes) n += perms.size();
    return n;
  }

  friend bool operator==(const ClassCatalog&, const ClassCatalog&) = default;
};

// Set expression used in the subject, target, class and permission fields.
// Permission and class expressions never contain Self.
struct SetExpr {
  enum class Kind { Single, Group, Wildcard, Complement, Negation, Self };

  Kind kind = Kind::Wildcard;
  std::string name;            // Single, Negation
  std::vector<SetExpr> terms;  // Group members; Complement holds one inner expr

  static SetExpr single(std::string n) {
    return SetExpr{Kind::Single, std::move(n), {}};
  }
  static SetExpr negation(std::string n) {
    return SetExpr{Kind::Negation, std::move(n), {}};
  }
  static SetExpr wildcard() { return SetExpr{Kind::Wildcard, {}, {}}; }
  static SetExpr self() { return SetExpr{Kind::Self, {}, {}}; }
  static SetExpr group(std::vector<SetExpr> t) {
    return SetExpr{Kind::Group, {}, std::move(t)};
  }
  static SetExpr complement(SetExpr inner) {
    SetExpr e{Kind::Complement, {}, {}};
    e.terms.push_back(std::move(inner));
    return e;
  }

  bool contains_self() const {
    if (kind == Kind::Self) return true;
    return std::any_of(terms.begin(), terms.end(),
                       [](const SetExpr& t) { return t.contains_self(); });
  }

  // Calls f(name) for every Single or Negation name in the expression.
  template <typename F>
  void for_each_name(F&& f) const {
    if (kind == Kind::Single || kind == Kind::Negation) f(name);
    for (const auto& t : terms) t.for_each_name(f);
  }

  friend bool operator==(const SetExpr&, const SetExpr&) = default;
};

using TypeExpr = SetExpr;
using PermExpr = SetExpr;

inline std::string to_string(const SetExpr& e) {
  switch (e.kind) {
    case SetExpr::Kind::Single: return e.name;
    case SetExpr::Kind::Negation: return "-" + e.name;
    case SetExpr::Kind::Wildcard: return "*";
    case SetExpr::Kind::Self: return "self";
    case SetExpr::Kind::Complement: return "~" + to_string(e.terms.front());
    case SetExpr::Kind::Group: {
      std::string out = "{";
      for (const auto& t : e.terms) out += " " + to_string(t);
      return out + " }";
    }
  }
  return {};
}

enum class RuleKind { Allow, Neverallow };

inline std::string_view to_string(RuleKind k) {
  return k == RuleKind::Allow ? "allow" : "neverallow";
}

struct Provenance {
  std::string file;
  int line = 0;
  std::vector<std::string> macro_chain;  // outermost first

  std::string str() const {
    std::string out = file + ":" + std::to_string(line);
    if (!macro_chain.empty()) {
      out += " [";
      for (std::size_t i = 0; i < macro_chain.size(); ++i) {
        if (i) out += " > ";
        out += macro_chain[i];
      }
      out += "]";
    }
    return out;
  }
  friend bool operator==(const Provenance&, const Provenance&) = default;
};

struct Rule {
  RuleKind kind = RuleKind::Allow;
  TypeExpr subject;
  TypeExpr target;
  SetExpr classes;
  PermExpr perms;
  Provenance provenance;
  RuleId rule_id = 0;

  // Equality of the statement itself, ignoring where it came from.
  bool same_statement(const Rule& o) const {
    return kind == o.kind && subject == o.subject && target == o.target &&
           classes == o.classes && perms == o.perms;
  }
};

inline std::string to_string(const Rule& r) {
  return std::string(to_string(r.kind)) + " " + to_string(r.subject) + " " +
         to_string(r.target) + ":" + to_string(r.classes) + " " +
         to_string(r.perms) + ";";
}

// One (subject type, object type, class, permission) quadruple.
struct Box {
  std::string subject;
  std::string object;
  std::string tclass;
  std::string perm;

  friend auto operator<=>(const Box&, const Box&) = default;
  friend bool operator==(const Box&, const Box&) = default;
};

// Canonical line form: "subject object class perm".
inline std::string format_box(const Box& b) {
  return b.subject + " " + b.object + " " + b.tclass + " " + b.perm;
}

inline Box parse_box_line(std::string_view line) {
  std::istringstream in{std::string(line)};
  std::vector<std::string> tok;
  for (std::string t; in >> t;) tok.push_back(std::move(t));
  if (tok.size() != 4)
    throw Error(ErrorCode::InvalidArgument,
                "box spec needs 4 tokens, got " + std::to_string(tok.size()) +
                    ": '" + std::string(line) + "'");
  return Box{tok[0], tok[1], tok[2], tok[3]};
}

// Packed box: subject(20) object(20) class(12) perm(12) bits, most
// significant first. Ids are assigned in sorted name order, so integer order
// on keys equals lexicographic order on the named boxes.
using BoxKey = std::uint64_t;

class BoxCodec {
 public:
  static constexpr unsigned kTypeBits = 20;
  static constexpr unsigned kClassBits = 12;
  static constexpr unsigned kPermBits = 12;

  BoxCodec() = default;

  BoxCodec(std::vector<std::string> types, std::vector<std::string> classes,
           std::vector<std::string> perms)
      : types_(std::move(types)),
        classes_(std::move(classes)),
        perms_(std::move(perms)) {
    std::sort(types_.begin(), types_.end());
    types_.erase(std::unique(types_.begin(), types_.end()), types_.end());
    std::sort(classes_.begin(), classes_.end());
    classes_.erase(std::unique(classes_.begin(), classes_.end()), classes_.end());
    std::sort(perms_.begin(), perms_.end());
    perms_.erase(std::unique(perms_.begin(), perms_.end()), perms_.end());
    if (types_.size() >= (1u << kTypeBits) ||
        classes_.size() >= (1u << kClassBits) ||
        perms_.size() >= (1u << kPermBits))
      throw Error(ErrorCode::CapacityExceeded,
                  "too many symbols for packed box keys");
  }

  static BoxKey pack(std::uint32_t s, std::uint32_t o, std::uint32_t c,
                     std::uint32_t p) {
    return (BoxKey{s} << (kTypeBits + kClassBits + kPermBits)) |
           (BoxKey{o} << (kClassBits + kPermBits)) | (BoxKey{c} << kPermBits) |
           BoxKey{p};
  }

  struct Parts {
    std::uint32_t subject, object, tclass, perm;
  };

  static Parts unpack(BoxKey k) {
    constexpr BoxKey type_mask = (BoxKey{1} << kTypeBits) - 1;
    return Parts{
        static_cast<std::uint32_t>(k >> (kTypeBits + kClassBits + kPermBits)),
        static_cast<std::uint32_t>((k >> (kClassBits + kPermBits)) & type_mask),
        static_cast<std::uint32_t>((k >> kPermBits) &
                                   ((BoxKey{1} << kClassBits) - 1)),
        static_cast<std::uint32_t>(k & ((BoxKey{1} << kPermBits) - 1))};
  }

  std::optional<std::uint32_t> type_id(std::string_view n) const {
    return find(types_, n);
  }
  std::optional<std::uint32_t> class_id(std::string_view n) const {
    return find(classes_, n);
  }
  std::optional<std::uint32_t> perm_id(std::string_view n) const {
    return find(perms_, n);
  }

  std::optional<BoxKey> encode(const Box& b) const {
    auto s = type_id(b.subject), o = type_id(b.object);
    auto c = class_id(b.tclass);
    auto p = perm_id(b.perm);
    if (!s || !o || !c || !p) return std::nullopt;
    return pack(*s, *o, *c, *p);
  }

  Box decode(BoxKey k) const {
    auto parts = unpack(k);
    return Box{types_.at(parts.subject), types_.at(parts.object),
               classes_.at(parts.tclass), perms_.at(parts.perm)};
  }

  const std::vector<std::string>& types() const { return types_; }
  const std::vector<std::string>& classes() const { return classes_; }
  const std::vector<std::string>& perms() const { return perms_; }

 private:
  static std::optional<std::uint32_t> find(const std::vector<std::string>& v,
                                           std::string_view n) {
    auto it = std::lower_bound(v.begin(), v.end(), n);
    if (it == v.end() || *it != n) return std::nullopt;
    return static_cast<std::uint32_t>(it - v.begin());
  }

  std::vector<std::string> types_;
  std::vector<std::string> classes_;
  std::vector<std::string> perms_;
};

// Sorted, deduplicated set of boxes with the box -> rule_id origin index,
// stored as compressed rows (keys_[i] owns origins_[offsets_[i]..offsets_[i+1])).
class BoxSet {
 public:
  BoxSet() : offsets_{0} {}

  std::size_t size() const { return keys_.size(); }
  bool empty() const { return keys_.empty(); }

  std::span<const BoxKey> keys() const { return keys_; }

  bool contains(BoxKey k) const {
    return std::binary_search(keys_.begin(), keys_.end(), k);
  }

  // Origin rule ids of the i-th key, ascending.
  std::span<const RuleId> origin_at(std::size_t i) const {
    return std::span<const RuleId>(origins_).subspan(
        offsets_[i], offsets_[i + 1] - offsets_[i]);
  }

  // Empty span when k is absent.
  std::span<const RuleId> origin(BoxKey k) const {
    auto it = std::lower_bound(keys_.begin(), keys_.end(), k);
    if (it == keys_.end() || *it != k) return {};
    return origin_at(static_cast<std::size_t>(it - keys_.begin()));
  }

  // Union; a box in both operands keeps the union of its origins.
  static BoxSet unite(const BoxSet& a, const BoxSet& b) {
    BoxSet out;
    std::size_t i = 0, j = 0;
    while (i < a.size() || j < b.size()) {
      if (j == b.size() || (i < a.size() && a.keys_[i] < b.keys_[j])) {
        out.append(a.keys_[i], a.origin_at(i));
        ++i;
      } else if (i == a.size() || b.keys_[j] < a.keys_[i]) {
        out.append(b.keys_[j], b.origin_at(j));
        ++j;
      } else {
        std::vector<RuleId> merged;
        auto oa = a.origin_at(i), ob = b.origin_at(j);
        std::set_union(oa.begin(), oa.end(), ob.begin(), ob.end(),
                       std::back_inserter(merged));
        out.append(a.keys_[i], merged);
        ++i;
        ++j;
      }
    }
    return out;
  }

  // a - b, keeping a's origins.
  static BoxSet subtract(const BoxSet& a, const BoxSet& b) {
    BoxSet out;
    std::size_t j = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
      while (j < b.size() && b.keys_[j] < a.keys_[i]) ++j;
      if (j < b.size() && b.keys_[j] == a.keys_[i]) continue;
      out.append(a.keys_[i], a.origin_at(i));
    }
    return out;
  }

  // a n b, keeping a's origins.
  static BoxSet intersect(const BoxSet& a, const BoxSet& b) {
    BoxSet out;
    std::size_t j = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
      while (j < b.size() && b.keys_[j] < a.keys_[i]) ++j;
      if (j < b.size() && b.keys_[j] == a.keys_[i])
        out.append(a.keys_[i], a.origin_at(i));
    }
    return out;
  }

  // Size of a u b without materializing it.
  static std::size_t union_size(const BoxSet& a, const BoxSet& b) {
    std::size_t common = 0, j = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
      while (j < b.size() && b.keys_[j] < a.keys_[i]) ++j;
      if (j < b.size() && b.keys_[j] == a.keys_[i]) ++common;
    }
    return a.size() + b.size() - common;
  }

  friend bool operator==(const BoxSet&, const BoxSet&) = default;

 private:
  friend class BoxSetBuilder;

  // Keys must arrive strictly increasing.
  void append(BoxKey k, std::span<const RuleId> origin) {
    keys_.push_back(k);
    origins_.insert(origins_.end(), origin.begin(), origin.end());
    offsets_.push_back(static_cast<std::uint32_t>(origins_.size()));
  }

  std::vector<BoxKey> keys_;
  std::vector<std::uint32_t> offsets_;
  std::vector<RuleId> origins_;
};

class BoxSetBuilder {
 public:
  void add(BoxKey k, RuleId rule) { pairs_.emplace_back(k, rule); }
  void reserve(std::size_t n) { pairs_.reserve(n); }
  std::size_t pending() const { return pairs_.size(); }
  // Drops everything added after pending() returned n.
  void truncate(std::size_t n) { pairs_.resize(std::min(n, pairs_.size())); }

  BoxSet build() && {
    std::sort(pairs_.begin(), pairs_.end());
    pairs_.erase(std::unique(pairs_.begin(), pairs_.end()), pairs_.end());
    BoxSet out;
    out.keys_.reserve(pairs_.size());
    out.origins_.reserve(pairs_.size());
    for (std::size_t i = 0; i < pairs_.size(); ++i) {
      if (i == 0 || pairs_[i].first != pairs_[i - 1].first) {
        if (i != 0)
          out.offsets_.push_back(static_cast<std::uint32_t>(i));
        out.keys_.push_back(pairs_[i].first);
      }
      out.origins_.push_back(pairs_[i].second);
    }
    if (!pairs_.empty())
      out.offsets_.push_back(static_cast<std::uint32_t>(pairs_.size()));
    pairs_.clear();
    return out;
  }

 private:
  std::vector<std::pair<BoxKey, RuleId>> pairs_;
};

}  // namespace sebox
