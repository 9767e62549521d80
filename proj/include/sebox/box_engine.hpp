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

// Rule-to-box decomposition.
//
// Every allow and neverallow rule expands to the cartesian product of its
// resolved subjects, objects (per subject when the target names `self`),
// classes and per-class permissions. Wildcards and complements over types
// range over declared concrete types; over permissions they range over the
// class's resolved permission set. Neverallow boxes are subtracted from the
// allow boxes; the overlap is reported as assertion violations.

#pragma once

#include <algorithm>
#include <cstdint>
#include <iterator>
#include <map>
#include <numeric>
#include <optional>
#include <ostream>
#include <set>
#include <string>
#include <vector>

#include "sebox/error.hpp"
#include "sebox/policy_model.hpp"
#include "sebox/policy_parser.hpp"

namespace sebox {

enum class Position { Subject, Target };

using IdSet = std::vector<std::uint32_t>;  // sorted, unique

namespace detail {

inline IdSet id_union(const IdSet& a, const IdSet& b) {
  IdSet out;
  out.reserve(a.size() + b.size());
  std::set_union(a.begin(), a.end(), b.begin(), b.end(),
                 std::back_inserter(out));
  return out;
}

inline IdSet id_difference(const IdSet& a, const IdSet& b) {
  IdSet out;
  std::set_difference(a.begin(), a.end(), b.begin(), b.end(),
                      std::back_inserter(out));
  return out;
}

inline IdSet id_range(std::size_t n) {
  IdSet out(n);
  std::iota(out.begin(), out.end(), 0u);
  return out;
}

// Evaluates a set expression over the universe [0, n). `leaf` maps a name to
// its members.
template <typename Leaf>
IdSet evaluate(const SetExpr& e, std::size_t n, const Leaf& leaf,
               std::optional<std::uint32_t> self) {
  using K = SetExpr::Kind;
  switch (e.kind) {
    case K::Single: return leaf(e.name);
    case K::Wildcard: return id_range(n);
    case K::Self:
      if (!self)
        throw Error(ErrorCode::InvalidArgument,
                    "'self' needs a subject binding in the target position");
      return IdSet{*self};
    case K::Complement:
      return id_difference(id_range(n), evaluate(e.terms.front(), n, leaf, self));
    case K::Negation:
      throw Error(ErrorCode::InvalidArgument,
                  "negation '-" + e.name + "' outside a group");
    case K::Group: {
      IdSet pos, neg;
      for (const auto& t : e.terms) {
        if (t.kind == K::Negation) neg = id_union(neg, leaf(t.name));
        else pos = id_union(pos, evaluate(t, n, leaf, self));
      }
      return id_difference(pos, neg);
    }
  }
  return {};
}

}  // namespace detail

// Integer-id view of a snapshot used for decomposition. Ids follow the
// sorted name order of the embedded BoxCodec.
class PolicyIndex {
 public:
  explicit PolicyIndex(const PolicySnapshot& snap) : snap_(&snap) {
    std::vector<std::string> perms;
    for (const auto& [_, ps] : snap.catalog.classes)
      perms.insert(perms.end(), ps.begin(), ps.end());
    std::vector<std::string> classes;
    for (const auto& [c, _] : snap.catalog.classes) classes.push_back(c);
    codec_ = BoxCodec(snap.concrete_types(), std::move(classes), std::move(perms));

    for (const auto& [attr, members] : snap.symbols.attribute_members) {
      IdSet ids;
      for (const auto& m : members)
        if (auto id = codec_.type_id(m)) ids.push_back(*id);
      std::sort(ids.begin(), ids.end());
      attributes_.emplace(attr, std::move(ids));
    }
    class_perms_.resize(codec_.classes().size());
    for (std::uint32_t c = 0; c < codec_.classes().size(); ++c) {
      for (const auto& p : snap.catalog.lookup(codec_.classes()[c]))
        class_perms_[c].push_back(*codec_.perm_id(p));
      std::sort(class_perms_[c].begin(), class_perms_[c].end());
    }
  }

  const BoxCodec& codec() const { return codec_; }
  const PolicySnapshot& snapshot() const { return *snap_; }
  std::size_t num_types() const { return codec_.types().size(); }

  IdSet type_leaf(const std::string& name) const {
    auto canon = snap_->symbols.canonical(name);
    if (!canon) throw Error(ErrorCode::UnknownName, name);
    if (auto it = attributes_.find(*canon); it != attributes_.end())
      return it->second;
    if (auto id = codec_.type_id(*canon)) return IdSet{*id};
    throw Error(ErrorCode::UnknownName, name);
  }

  IdSet resolve_types(const SetExpr& e,
                      std::optional<std::uint32_t> self = std::nullopt) const {
    return detail::evaluate(
        e, num_types(), [this](const std::string& n) { return type_leaf(n); },
        self);
  }

  IdSet resolve_classes(const SetExpr& e) const {
    return detail::evaluate(
        e, codec_.classes().size(),
        [this](const std::string& n) {
          auto id = codec_.class_id(n);
          if (!id) throw Error(ErrorCode::UnknownClass, n);
          return IdSet{*id};
        },
        std::nullopt);
  }

  // Permission ids (global) granted by `e` for class id `cls`.
  IdSet resolve_perms(const SetExpr& e, std::uint32_t cls) const {
    const IdSet& local = class_perms_.at(cls);
    // Evaluate over positions within the class set, then map back.
    auto positions = detail::evaluate(
        e, local.size(),
        [&](const std::string& n) {
          auto id = codec_.perm_id(n);
          auto it = id ? std::lower_bound(local.begin(), local.end(), *id)
                       : local.end();
          if (it == local.end() || *it != *id)
            throw Error(ErrorCode::UnknownPermission,
                        "'" + n + "' is not a permission of class '" +
                            codec_.classes()[cls] + "'");
          return IdSet{static_cast<std::uint32_t>(it - local.begin())};
        },
        std::nullopt);
    IdSet out;
    out.reserve(positions.size());
    for (auto pos : positions) out.push_back(local[pos]);
    return out;
  }

 private:
  const PolicySnapshot* snap_;
  BoxCodec codec_;
  std::map<std::string, IdSet> attributes_;
  std::vector<IdSet> class_perms_;
};

// Concrete type names denoted by `expr`.
inline std::set<std::string> resolve_type_expr(
    const TypeExpr& expr, const PolicySnapshot& snap, Position position,
    const std::optional<std::string>& subject_binding = std::nullopt) {
  std::optional<std::uint32_t> self;
  PolicyIndex index(snap);
  if (expr.contains_self()) {
    if (position != Position::Target || !subject_binding)
      throw Error(ErrorCode::InvalidArgument,
                  "'self' is only legal in the target position with a subject");
    self = index.codec().type_id(*subject_binding);
    if (!self) throw Error(ErrorCode::UnknownName, *subject_binding);
  }
  std::set<std::string> out;
  for (auto id : index.resolve_types(expr, self))
    out.insert(index.codec().types()[id]);
  return out;
}

// Permission names of `cls` denoted by `expr`.
inline std::set<std::string> resolve_perm_expr(const PermExpr& expr,
                                               const std::string& cls,
                                               const ClassCatalog& catalog) {
  const auto& perms = catalog.lookup(cls);
  std::vector<std::string> universe(perms.begin(), perms.end());
  auto positions = detail::evaluate(
      expr, universe.size(),
      [&](const std::string& n) {
        auto it = std::lower_bound(universe.begin(), universe.end(), n);
        if (it == universe.end() || *it != n)
          throw Error(ErrorCode::UnknownPermission,
                      "'" + n + "' is not a permission of class '" + cls + "'");
        return IdSet{static_cast<std::uint32_t>(it - universe.begin())};
      },
      std::nullopt);
  std::set<std::string> out;
  for (auto p : positions) out.insert(universe[p]);
  return out;
}

// Emits every box of `rule` into `sink(key)`; returns the number emitted.
template <typename Sink>
std::uint64_t for_each_rule_box(const Rule& rule, const PolicyIndex& index,
                                Sink&& sink) {
  IdSet subjects = index.resolve_types(rule.subject);
  IdSet classes = index.resolve_classes(rule.classes);
  std::vector<std::pair<std::uint32_t, IdSet>> class_perms;
  for (auto c : classes) {
    auto perms = index.resolve_perms(rule.perms, c);
    if (!perms.empty()) class_perms.emplace_back(c, std::move(perms));
  }
  std::uint64_t count = 0;
  const bool per_subject = rule.target.contains_self();
  IdSet shared_objects;
  if (!per_subject) shared_objects = index.resolve_types(rule.target);
  for (auto s : subjects) {
    IdSet own;
    if (per_subject) own = index.resolve_types(rule.target, s);
    const IdSet& objects = per_subject ? own : shared_objects;
    for (auto o : objects)
      for (const auto& [c, perms] : class_perms)
        for (auto p : perms) {
          sink(BoxCodec::pack(s, o, c, p));
          ++count;
        }
  }
  return count;
}

inline BoxSet decompose_rule(const Rule& rule, const PolicyIndex& index) {
  BoxSetBuilder b;
  for_each_rule_box(rule, index, [&](BoxKey k) { b.add(k, rule.rule_id); });
  return std::move(b).build();
}

inline std::vector<Box> rule_boxes(const Rule& rule, const PolicySnapshot& snap) {
  PolicyIndex index(snap);
  std::vector<Box> out;
  BoxSet boxes = decompose_rule(rule, index);
  for (auto k : boxes.keys())
    out.push_back(index.codec().decode(k));
  return out;
}

struct DecompositionResult {
  BoxCodec codec;
  BoxSet allow;
  BoxSet neverallow;
  BoxSet final_allow;           // allow - neverallow
  BoxSet assertion_violations;  // allow n neverallow, with allow origins
  std::vector<std::uint64_t> rule_box_counts;  // by rule_id, before dedup
  std::vector<RuleKind> rule_kinds;            // by rule_id
  std::vector<Provenance> provenance;          // by rule_id
  std::vector<Diagnostic> diagnostics;

  Box decode(BoxKey k) const { return codec.decode(k); }
  std::optional<BoxKey> encode(const Box& b) const { return codec.encode(b); }
};

inline DecompositionResult decompose_snapshot(const PolicySnapshot& snap,
                                              const ParseOptions& options = {}) {
  PolicyIndex index(snap);
  DecompositionResult out;
  out.codec = index.codec();
  out.rule_box_counts.assign(snap.rules.size(), 0);
  out.rule_kinds.resize(snap.rules.size());
  out.provenance.resize(snap.rules.size());
  BoxSetBuilder allow, never;
  for (const auto& rule : snap.rules) {
    out.rule_kinds.at(rule.rule_id) = rule.kind;
    out.provenance.at(rule.rule_id) = rule.provenance;
    BoxSetBuilder& sink = rule.kind == RuleKind::Allow ? allow : never;
    std::size_t mark = sink.pending();
    try {
      out.rule_box_counts[rule.rule_id] = for_each_rule_box(
          rule, index, [&](BoxKey k) { sink.add(k, rule.rule_id); });
    } catch (const Error& e) {
      if (options.strict)
        throw Error(e.code(), rule.provenance.str() + ": " + e.what());
      out.diagnostics.push_back(
          {rule.provenance.file, rule.provenance.line, e.what()});
      sink.truncate(mark);
      out.rule_box_counts[rule.rule_id] = 0;
    }
  }
  out.allow = std::move(allow).build();
  out.neverallow = std::move(never).build();
  out.final_allow = BoxSet::subtract(out.allow, out.neverallow);
  out.assertion_violations = BoxSet::intersect(out.allow, out.neverallow);
  return out;
}

// Provenance of every rule that produced `box` among the allow boxes.
inline std::vector<Provenance> rules_for_box(const DecompositionResult& result,
                                             const Box& box) {
  auto key = result.encode(box);
  if (!key || !result.allow.contains(*key))
    throw Error(ErrorCode::BoxNotPresent, format_box(box));
  std::vector<Provenance> out;
  for (auto id : result.allow.origin(*key)) out.push_back(result.provenance.at(id));
  return out;
}

// Canonical dump: one "subject object class perm" line per box, sorted.
inline void write_box_dump(std::ostream& os, const BoxSet& boxes,
                           const BoxCodec& codec) {
  for (auto k : boxes.keys()) os << format_box(codec.decode(k)) << '\n';
}

// "subject object class perm<TAB>rule_count<TAB>file:line[,file:line...]"
inline void write_provenance_dump(std::ostream& os,
                                  const DecompositionResult& result,
                                  const BoxSet& boxes) {
  for (std::size_t i = 0; i < boxes.size(); ++i) {
    auto origin = boxes.origin_at(i);
    os << format_box(result.decode(boxes.keys()[i])) << '\t' << origin.size()
       << '\t';
    for (std::size_t j = 0; j < origin.size(); ++j) {
      const auto& p = result.provenance.at(origin[j]);
      if (j) os << ',';
      os << p.file << ':' << p.line;
    }
    os << '\n';
  }
}

}  // namespace sebox
