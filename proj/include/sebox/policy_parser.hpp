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

// Parser for type-enforcement policy sources.
//
// Snapshot assembly runs in two passes over the macro-expanded files, sorted
// byte-wise by path: the first collects type, attribute and alias
// declarations; the second parses allow/neverallow rules against the
// completed symbol table and assigns dense rule ids. Statements outside the
// decomposition scope are skipped as balanced units and counted by keyword.

#pragma once

#include <algorithm>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "sebox/error.hpp"
#include "sebox/file_set.hpp"
#include "sebox/macro_preprocessor.hpp"
#include "sebox/policy_model.hpp"

namespace sebox {

struct ParseOptions {
  // Strict mode throws on unknown symbols and syntax errors; lenient mode
  // drops the offending rule and records a diagnostic.
  bool strict = false;
};

namespace lex {

struct Token {
  enum class Kind { Word, Punct };
  Kind kind = Kind::Word;
  std::string_view text;
  int line = 0;

  bool is(char c) const {
    return kind == Kind::Punct && text.size() == 1 && text[0] == c;
  }
  bool is_word() const { return kind == Kind::Word; }
  bool is_word(std::string_view w) const {
    return kind == Kind::Word && text == w;
  }
};

inline bool is_punct(char c) {
  switch (c) {
    case '{': case '}': case '(': case ')': case ';': case ':': case ',':
    case '~': case '*':
      return true;
    default:
      return false;
  }
}

inline bool is_space(char c) {
  return c == ' ' || c == '\t' || c == '\r' || c == '\n' || c == '\f' ||
         c == '\v';
}

// Splits policy text into words and single-character punctuation. '#' starts
// a comment; a '-' at the start of a token is emitted as its own punctuation
// token (group negation). The returned views point into `text`.
inline std::vector<Token> tokenize(std::string_view text) {
  std::vector<Token> out;
  int line = 1;
  std::size_t i = 0;
  while (i < text.size()) {
    char c = text[i];
    if (c == '\n') {
      ++line;
      ++i;
    } else if (is_space(c)) {
      ++i;
    } else if (c == '#') {
      while (i < text.size() && text[i] != '\n') ++i;
    } else if (c == '"') {
      std::size_t start = i++;
      while (i < text.size() && text[i] != '"' && text[i] != '\n') ++i;
      if (i < text.size() && text[i] == '"') ++i;
      out.push_back({Token::Kind::Word, text.substr(start, i - start), line});
    } else if (is_punct(c) || c == '-') {
      out.push_back({Token::Kind::Punct, text.substr(i, 1), line});
      ++i;
    } else {
      std::size_t start = i;
      while (i < text.size() && !is_space(text[i]) && !is_punct(text[i]) &&
             text[i] != '#' && text[i] != '"')
        ++i;
      out.push_back({Token::Kind::Word, text.substr(start, i - start), line});
    }
  }
  return out;
}

struct Statement {
  enum class Shape { Plain, Block, Invocation, Invalid };
  std::string keyword;
  std::size_t begin = 0;  // token range [begin, end)
  std::size_t end = 0;
  int line = 0;
  Shape shape = Shape::Plain;
  bool terminated = true;
};

inline bool is_block_keyword(std::string_view w) {
  return w == "if" || w == "else" || w == "optional" || w == "require" ||
         w == "tunableif" || w == "booleanif";
}

// Context statements that end at the line break rather than at ';'.
inline bool is_line_keyword(std::string_view w) {
  return w == "genfscon" || w == "sid" || w == "portcon" || w == "netifcon" ||
         w == "nodecon";
}

// Groups tokens into statements. Stray ';' tokens are not statements.
inline std::vector<Statement> split_statements(std::span<const Token> toks) {
  std::vector<Statement> out;
  std::size_t p = 0;
  while (p < toks.size()) {
    const Token& head = toks[p];
    if (head.is(';')) {
      ++p;
      continue;
    }
    Statement st;
    st.begin = p;
    st.line = head.line;
    if (!head.is_word()) {
      st.keyword = "<invalid>";
      st.shape = Statement::Shape::Invalid;
      int depth = 0;
      while (p < toks.size()) {
        const Token& t = toks[p++];
        if (t.is('{') || t.is('(')) ++depth;
        if ((t.is('}') || t.is(')')) && depth > 0) --depth;
        if (t.is(';') && depth == 0) break;
      }
      st.end = p;
      out.push_back(std::move(st));
      continue;
    }
    st.keyword = std::string(head.text);
    if (!is_block_keyword(head.text) && p + 1 < toks.size() &&
        toks[p + 1].is('(')) {
      st.shape = Statement::Shape::Invocation;
      int depth = 0;
      p += 1;
      st.terminated = false;
      while (p < toks.size()) {
        const Token& t = toks[p++];
        if (t.is('(')) ++depth;
        if (t.is(')') && --depth == 0) {
          st.terminated = true;
          break;
        }
      }
      if (p < toks.size() && toks[p].is(';')) ++p;
      st.end = p;
      out.push_back(std::move(st));
      continue;
    }
    if (is_block_keyword(head.text)) {
      st.shape = Statement::Shape::Block;
      int depth = 0;
      ++p;
      st.terminated = false;
      while (p < toks.size()) {
        const Token& t = toks[p++];
        if (t.is('{') || t.is('(')) ++depth;
        else if (t.is(')')) --depth;
        else if (t.is('}')) {
          if (--depth == 0) {
            if (p < toks.size() && toks[p].is_word("else")) continue;
            if (p < toks.size() && toks[p].is(';')) ++p;
            st.terminated = true;
            break;
          }
        } else if (t.is(';') && depth == 0) {
          st.terminated = true;
          break;
        }
      }
      st.end = p;
      out.push_back(std::move(st));
      continue;
    }
    if (is_line_keyword(head.text)) {
      ++p;
      while (p < toks.size() && toks[p].line == head.line && !toks[p].is(';')) ++p;
      if (p < toks.size() && toks[p].is(';')) ++p;
      st.end = p;
      out.push_back(std::move(st));
      continue;
    }
    int depth = 0;
    ++p;
    st.terminated = false;
    while (p < toks.size()) {
      const Token& t = toks[p++];
      if (t.is('{') || t.is('(')) ++depth;
      else if ((t.is('}') || t.is(')')) && depth > 0) --depth;
      else if (t.is(';') && depth == 0) {
        st.terminated = true;
        break;
      }
    }
    st.end = p;
    out.push_back(std::move(st));
  }
  return out;
}

// Recursive-descent reader for set expressions within one statement.
class ExprReader {
 public:
  ExprReader(std::span<const Token> toks, std::size_t pos, std::size_t end)
      : toks_(toks), pos_(pos), end_(end) {}

  std::size_t pos() const { return pos_; }
  bool at_end() const { return pos_ >= end_; }
  const Token* peek() const { return at_end() ? nullptr : &toks_[pos_]; }

  const Token& next(const char* expected) {
    if (at_end()) fail(std::string("unexpected end of statement, expected ") +
                       expected);
    return toks_[pos_++];
  }

  void expect(char c) {
    const Token& t = next(std::string(1, c).c_str());
    if (!t.is(c))
      fail(std::string("expected '") + c + "', got '" + std::string(t.text) +
           "'");
  }

  SetExpr expr(bool allow_self) {
    const Token& t = next("expression");
    if (t.is('*')) return SetExpr::wildcard();
    if (t.is('~')) return SetExpr::complement(expr(allow_self));
    if (t.is('{')) {
      std::vector<SetExpr> terms;
      while (true) {
        const Token& m = next("'}'");
        if (m.is('}')) break;
        if (m.is('-')) {
          const Token& n = next("name after '-'");
          if (!n.is_word() || n.text == "self")
            fail("invalid negation '-" + std::string(n.text) + "'");
          terms.push_back(SetExpr::negation(std::string(n.text)));
        } else if (m.is('*')) {
          terms.push_back(SetExpr::wildcard());
        } else if (m.is_word()) {
          terms.push_back(word(m, allow_self));
        } else {
          fail("unexpected '" + std::string(m.text) + "' in group");
        }
      }
      if (terms.empty()) fail("empty group");
      return SetExpr::group(std::move(terms));
    }
    if (t.is_word()) return word(t, allow_self);
    fail("unexpected '" + std::string(t.text) + "'");
  }

  [[noreturn]] void fail(const std::string& msg) const {
    throw Error(ErrorCode::SyntaxError, msg);
  }

 private:
  SetExpr word(const Token& t, bool allow_self) const {
    if (t.text == "self") {
      if (!allow_self) fail("'self' is only legal in the target position");
      return SetExpr::self();
    }
    return SetExpr::single(std::string(t.text));
  }

  std::span<const Token> toks_;
  std::size_t pos_;
  std::size_t end_;
};

}  // namespace lex

// Type, attribute and alias declarations found in one file.
struct Declarations {
  struct Decl {
    std::string name;
    SymbolKind kind;
    int line;
  };
  struct Membership {
    std::string type;
    std::string attribute;
    int line;
  };
  struct Alias {
    std::string type;
    std::string alias;
    int line;
  };
  std::vector<Decl> symbols;
  std::vector<Membership> memberships;
  std::vector<Alias> aliases;
  std::vector<Diagnostic> diagnostics;
};

// Handles `attribute a;`, `type t [alias ...] [, attr...];`,
// `typeattribute t attr [, attr...];` and `typealias t alias a;`.
inline Declarations parse_declarations(std::string_view text,
                                       const std::string& file = {}) {
  using lex::Statement;
  Declarations out;
  auto toks = lex::tokenize(text);
  for (const auto& st : lex::split_statements(toks)) {
    if (st.shape != Statement::Shape::Plain) continue;
    const std::string& kw = st.keyword;
    if (kw != "attribute" && kw != "type" && kw != "typeattribute" &&
        kw != "typealias")
      continue;
    try {
      if (!st.terminated) throw Error(ErrorCode::SyntaxError, "missing ';'");
      lex::ExprReader r(toks, st.begin + 1, st.end - 1);
      auto name_list = [&](std::vector<std::string>& names) {
        const auto& t = r.next("name");
        if (t.is('{')) {
          while (true) {
            const auto& m = r.next("'}'");
            if (m.is('}')) break;
            if (!m.is_word()) r.fail("expected name in alias list");
            names.emplace_back(m.text);
          }
        } else if (t.is_word()) {
          names.emplace_back(t.text);
        } else {
          r.fail("expected name");
        }
      };
      const auto& name_tok = r.next("name");
      if (!name_tok.is_word()) r.fail("expected name after '" + kw + "'");
      std::string name(name_tok.text);
      if (kw == "attribute") {
        if (!r.at_end()) r.fail("trailing tokens after attribute name");
        out.symbols.push_back({name, SymbolKind::Attribute, st.line});
      } else if (kw == "type") {
        out.symbols.push_back({name, SymbolKind::ConcreteType, st.line});
        if (auto* t = r.peek(); t && t->is_word("alias")) {
          r.next("alias");
          std::vector<std::string> aliases;
          name_list(aliases);
          for (auto& a : aliases) out.aliases.push_back({name, a, st.line});
        }
        while (!r.at_end()) {
          r.expect(',');
          const auto& a = r.next("attribute");
          if (!a.is_word()) r.fail("expected attribute name");
          out.memberships.push_back({name, std::string(a.text), st.line});
        }
      } else if (kw == "typeattribute") {
        do {
          const auto& a = r.next("attribute");
          if (!a.is_word()) r.fail("expected attribute name");
          out.memberships.push_back({name, std::string(a.text), st.line});
          if (r.at_end()) break;
          r.expect(',');
        } while (true);
      } else {
        const auto& al = r.next("alias");
        if (!al.is_word("alias")) r.fail("expected 'alias'");
        std::vector<std::string> aliases;
        name_list(aliases);
        for (auto& a : aliases) out.aliases.push_back({name, a, st.line});
        if (!r.at_end()) r.fail("trailing tokens after typealias");
      }
    } catch (const Error& e) {
      out.diagnostics.push_back({file, st.line, e.what()});
    }
  }
  return out;
}

// Accumulates `common` and `class` statements from security_classes and
// access_vectors; inheritance is resolved by finish().
class CatalogBuilder {
 public:
  explicit CatalogBuilder(bool strict = true) : strict_(strict) {}

  void add(std::string_view text, const std::string& file = {}) {
    auto toks = lex::tokenize(text);
    std::size_t p = 0;
    auto perm_block = [&](std::vector<std::string>& perms) {
      ++p;  // '{'
      while (p < toks.size() && !toks[p].is('}')) {
        if (toks[p].is_word()) perms.emplace_back(toks[p].text);
        ++p;
      }
      if (p == toks.size()) report(ErrorCode::SyntaxError, file, toks.back().line,
                                   "unterminated permission block");
      ++p;
    };
    while (p < toks.size()) {
      const auto& t = toks[p];
      if (t.is_word("common") && p + 1 < toks.size() && toks[p + 1].is_word()) {
        std::string name(toks[p + 1].text);
        int line = t.line;
        p += 2;
        std::vector<std::string> perms;
        if (p < toks.size() && toks[p].is('{')) perm_block(perms);
        auto& dst = commons_[name];
        for (auto& perm : perms)
          if (!dst.insert(perm).second)
            report(ErrorCode::DuplicatePermission, file, line,
                   "permission '" + perm + "' repeated in common '" + name + "'");
      } else if (t.is_word("class") && p + 1 < toks.size() &&
                 toks[p + 1].is_word()) {
        std::string name(toks[p + 1].text);
        int line = t.line;
        p += 2;
        auto& entry = classes_[name];
        if (entry.line == 0) {
          entry.line = line;
          entry.file = file;
          order_.push_back(name);
        }
        if (p + 1 < toks.size() && toks[p].is_word("inherits") &&
            toks[p + 1].is_word()) {
          entry.inherits = std::string(toks[p + 1].text);
          entry.inherit_line = line;
          p += 2;
        }
        if (p < toks.size() && toks[p].is('{')) {
          std::vector<std::string> perms;
          perm_block(perms);
          for (auto& perm : perms)
            if (!entry.own.insert(perm).second)
              report(ErrorCode::DuplicatePermission, file, line,
                     "permission '" + perm + "' repeated in class '" + name +
                         "'");
        }
      } else {
        ++p;
      }
    }
  }

  ClassCatalog finish() {
    ClassCatalog cat;
    cat.commons = commons_;
    for (const auto& name : order_) {
      const auto& entry = classes_.at(name);
      std::set<std::string> perms;
      if (!entry.inherits.empty()) {
        auto it = commons_.find(entry.inherits);
        if (it == commons_.end()) {
          report(ErrorCode::UnknownCommon, entry.file, entry.inherit_line,
                 "class '" + name + "' inherits undeclared common '" +
                     entry.inherits + "'");
        } else {
          perms = it->second;
        }
      }
      for (const auto& p : entry.own)
        if (!perms.insert(p).second)
          report(ErrorCode::DuplicatePermission, entry.file, entry.line,
                 "permission '" + p + "' of class '" + name +
                     "' repeats an inherited one");
      if (perms.empty()) {
        diagnostics_.push_back(
            {entry.file, entry.line,
             "class '" + name + "' has no permissions; dropped"});
        continue;
      }
      cat.classes.emplace(name, std::move(perms));
    }
    return cat;
  }

  const std::vector<Diagnostic>& diagnostics() const { return diagnostics_; }

 private:
  struct ClassEntry {
    std::string inherits;
    std::set<std::string> own;
    std::string file;
    int line = 0;
    int inherit_line = 0;
  };

  void report(ErrorCode code, const std::string& file, int line,
              const std::string& msg) {
    if (strict_)
      throw Error(code, (file.empty() ? std::string() : file + ":") +
                            std::to_string(line) + ": " + msg);
    diagnostics_.push_back(
        {file, line, std::string(to_string(code)) + ": " + msg});
  }

  bool strict_;
  std::map<std::string, std::set<std::string>> commons_;
  std::map<std::string, ClassEntry> classes_;
  std::vector<std::string> order_;
  std::vector<Diagnostic> diagnostics_;
};

// Parses `common <name> { perms }` and `class <name> [inherits <common>]
// [{ perms }]`, resolving inheritance.
inline ClassCatalog parse_access_vectors(std::string_view text,
                                         const std::string& file = {}) {
  CatalogBuilder b(/*strict=*/true);
  b.add(text, file);
  return b.finish();
}

// Declared names after alias resolution.
struct SymbolTable {
  std::map<std::string, TypeSymbol> types;  // concrete types and attributes
  std::map<std::string, std::set<std::string>> attribute_members;
  std::map<std::string, std::string> alias_to_type;

  // Canonical name for a type, attribute or alias; nullopt if undeclared.
  std::optional<std::string> canonical(const std::string& name) const {
    if (types.count(name)) return name;
    auto it = alias_to_type.find(name);
    if (it != alias_to_type.end()) return it->second;
    return std::nullopt;
  }

  bool is_attribute(const std::string& name) const {
    auto it = types.find(name);
    return it != types.end() && it->second.kind == SymbolKind::Attribute;
  }

  std::vector<std::string> concrete_types() const {
    std::vector<std::string> out;
    for (const auto& [name, sym] : types)
      if (sym.kind == SymbolKind::ConcreteType) out.push_back(name);
    return out;
  }
};

struct StatementCounts {
  std::size_t total = 0;
  std::size_t declarations = 0;
  std::size_t rules = 0;
  std::size_t dropped_rules = 0;
  std::size_t skipped = 0;
};

struct PolicySnapshot {
  SymbolTable symbols;
  ClassCatalog catalog;
  std::vector<Rule> rules;
  std::map<std::string, std::size_t> skipped_statements;
  StatementCounts counts;
  std::vector<Diagnostic> diagnostics;
  std::vector<std::string> files;
  std::size_t macro_redefinitions = 0;

  const std::map<std::string, TypeSymbol>& types() const {
    return symbols.types;
  }
  const std::map<std::string, std::set<std::string>>& attribute_members()
      const {
    return symbols.attribute_members;
  }
  std::vector<std::string> concrete_types() const {
    return symbols.concrete_types();
  }
  std::size_t num_allow_rules() const {
    return static_cast<std::size_t>(
        std::count_if(rules.begin(), rules.end(),
                      [](const Rule& r) { return r.kind == RuleKind::Allow; }));
  }
};

namespace detail {

inline std::set<std::string> resolve_class_names(const SetExpr& e,
                                                 const ClassCatalog& cat) {
  using K = SetExpr::Kind;
  std::set<std::string> all;
  for (const auto& [name, _] : cat.classes) all.insert(name);
  switch (e.kind) {
    case K::Single:
      return cat.has_class(e.name) ? std::set<std::string>{e.name}
                                   : std::set<std::string>{};
    case K::Wildcard: return all;
    case K::Complement: {
      auto inner = resolve_class_names(e.terms.front(), cat);
      std::set<std::string> out;
      std::set_difference(all.begin(), all.end(), inner.begin(), inner.end(),
                          std::inserter(out, out.end()));
      return out;
    }
    case K::Group: {
      std::set<std::string> pos, neg;
      for (const auto& t : e.terms) {
        if (t.kind == K::Negation) neg.insert(t.name);
        else for (auto& n : resolve_class_names(t, cat)) pos.insert(n);
      }
      for (const auto& n : neg) pos.erase(n);
      return pos;
    }
    default: return {};
  }
}

// Checks a rule against the symbol table and catalog, canonicalizing alias
// names in the type fields. Throws on the first unknown symbol.
inline void validate_rule(Rule& rule, const SymbolTable& symbols,
                          const ClassCatalog& catalog) {
  auto canon = [&](SetExpr& e, auto& self) -> void {
    if (e.kind == SetExpr::Kind::Single || e.kind == SetExpr::Kind::Negation) {
      auto c = symbols.canonical(e.name);
      if (!c) throw Error(ErrorCode::UnknownType, e.name);
      e.name = *c;
    }
    for (auto& t : e.terms) self(t, self);
  };
  canon(rule.subject, canon);
  canon(rule.target, canon);
  rule.classes.for_each_name([&](const std::string& n) {
    if (!catalog.has_class(n)) throw Error(ErrorCode::UnknownClass, n);
  });
  auto classes = resolve_class_names(rule.classes, catalog);
  for (const auto& cls : classes) {
    const auto& perms = catalog.lookup(cls);
    rule.perms.for_each_name([&](const std::string& p) {
      if (!perms.count(p))
        throw Error(ErrorCode::UnknownPermission,
                    "'" + p + "' is not a permission of class '" + cls + "'");
    });
  }
}

inline Rule read_rule(std::span<const lex::Token> toks,
                      const lex::Statement& st) {
  if (!st.terminated) throw Error(ErrorCode::SyntaxError, "missing ';'");
  Rule rule;
  rule.kind = st.keyword == "allow" ? RuleKind::Allow : RuleKind::Neverallow;
  lex::ExprReader r(toks, st.begin + 1, st.end - 1);
  rule.subject = r.expr(false);
  rule.target = r.expr(true);
  r.expect(':');
  rule.classes = r.expr(false);
  rule.perms = r.expr(false);
  if (!r.at_end())
    r.fail("unexpected '" + std::string(r.peek()->text) + "' after permissions");
  return rule;
}

}  // namespace detail

// Result of the rule pass over one expanded file.
struct RuleParseResult {
  std::vector<Rule> rules;
  std::map<std::string, std::size_t> skipped;
  StatementCounts counts;
  std::vector<Diagnostic> diagnostics;
};

// Parses allow/neverallow rules from expanded text. `origins`, when given,
// maps expanded-text lines back to source lines and macro chains. Rule ids
// are assigned from `first_id` upwards in statement order.
inline RuleParseResult parse_rules(std::string_view text,
                                   const ClassCatalog& catalog,
                                   const SymbolTable& symbols,
                                   const ParseOptions& options = {},
                                   const std::string& file = {},
                                   std::span<const LineOrigin> origins = {},
                                   RuleId first_id = 0) {
  using lex::Statement;
  RuleParseResult out;
  auto toks = lex::tokenize(text);
  auto provenance_of = [&](int line) {
    Provenance p;
    p.file = file;
    p.line = line;
    if (line >= 1 && static_cast<std::size_t>(line) <= origins.size()) {
      p.line = origins[line - 1].source_line;
      p.macro_chain = origins[line - 1].chain;
    }
    return p;
  };
  RuleId next_id = first_id;
  for (const auto& st : lex::split_statements(toks)) {
    ++out.counts.total;
    const std::string& kw = st.keyword;
    if (st.shape == Statement::Shape::Plain &&
        (kw == "attribute" || kw == "type" || kw == "typeattribute" ||
         kw == "typealias")) {
      ++out.counts.declarations;
      continue;
    }
    if (st.shape != Statement::Shape::Plain ||
        (kw != "allow" && kw != "neverallow")) {
      ++out.counts.skipped;
      ++out.skipped[kw];
      if (st.shape == Statement::Shape::Invalid) {
        auto prov = provenance_of(st.line);
        if (options.strict)
          throw Error(ErrorCode::SyntaxError,
                      prov.str() + ": statement does not start with a keyword");
        out.diagnostics.push_back(
            {prov.file, prov.line, "SyntaxError: stray punctuation skipped"});
      }
      continue;
    }
    auto prov = provenance_of(st.line);
    try {
      Rule rule = detail::read_rule(toks, st);
      detail::validate_rule(rule, symbols, catalog);
      rule.provenance = std::move(prov);
      rule.rule_id = next_id++;
      out.rules.push_back(std::move(rule));
      ++out.counts.rules;
    } catch (const Error& e) {
      if (options.strict) throw Error(e.code(), prov.str() + ": " + e.what());
      ++out.counts.dropped_rules;
      out.diagnostics.push_back({prov.file, prov.line, e.what()});
    }
  }
  return out;
}

// Files grouped by role; each group is processed in byte-wise path order.
struct SnapshotSources {
  std::vector<SourceFile> catalog;
  std::vector<SourceFile> macros;
  std::vector<SourceFile> policy;

  static SnapshotSources classify(std::vector<SourceFile> files,
                                  const FileSetConfig& config) {
    SnapshotSources s;
    for (auto& f : files) {
      switch (config.classify(f.path)) {
        case FileRole::Catalog: s.catalog.push_back(std::move(f)); break;
        case FileRole::Macros: s.macros.push_back(std::move(f)); break;
        case FileRole::Policy: s.policy.push_back(std::move(f)); break;
        case FileRole::Ignored: break;
      }
    }
    return s;
  }
};

inline SymbolTable assemble_symbols(
    const std::vector<std::pair<std::string, Declarations>>& decls,
    std::vector<Diagnostic>& diagnostics) {
  SymbolTable table;
  for (const auto& [file, d] : decls) {
    for (const auto& sym : d.symbols) {
      auto [it, inserted] =
          table.types.try_emplace(sym.name, TypeSymbol{sym.name, sym.kind, {}});
      if (!inserted) {
        diagnostics.push_back(
            {file, sym.line,
             it->second.kind == sym.kind
                 ? "duplicate declaration of '" + sym.name + "'"
                 : "'" + sym.name + "' declared as both type and attribute"});
      }
      if (sym.kind == SymbolKind::Attribute)
        table.attribute_members.try_emplace(sym.name);
    }
  }
  for (const auto& [file, d] : decls) {
    for (const auto& al : d.aliases) {
      if (table.types.count(al.alias) || table.alias_to_type.count(al.alias)) {
        diagnostics.push_back(
            {file, al.line, "alias '" + al.alias + "' collides with a name"});
        continue;
      }
      auto it = table.types.find(al.type);
      if (it == table.types.end() ||
          it->second.kind != SymbolKind::ConcreteType) {
        diagnostics.push_back({file, al.line,
                               "alias '" + al.alias + "' of undeclared type '" +
                                   al.type + "'"});
        continue;
      }
      it->second.aliases.insert(al.alias);
      table.alias_to_type.emplace(al.alias, al.type);
    }
  }
  for (const auto& [file, d] : decls) {
    for (const auto& m : d.memberships) {
      auto type = table.canonical(m.type);
      if (!table.is_attribute(m.attribute)) {
        diagnostics.push_back(
            {file, m.line,
             "UndeclaredAttribute: '" + m.attribute + "' (member '" + m.type +
                 "')"});
        continue;
      }
      if (!type || table.is_attribute(*type)) {
        diagnostics.push_back({file, m.line,
                               "'" + m.type +
                                   "' is not a declared type; membership in '" +
                                   m.attribute + "' ignored"});
        continue;
      }
      table.attribute_members[m.attribute].insert(*type);
    }
  }
  return table;
}

// Full two-pass assembly of a policy snapshot.
inline PolicySnapshot build_snapshot(SnapshotSources sources,
                                     const ParseOptions& options = {}) {
  auto by_path = [](const SourceFile& a, const SourceFile& b) {
    return a.path < b.path;
  };
  std::sort(sources.catalog.begin(), sources.catalog.end(), by_path);
  std::sort(sources.macros.begin(), sources.macros.end(), by_path);
  std::sort(sources.policy.begin(), sources.policy.end(), by_path);

  PolicySnapshot snap;
  for (const auto* group : {&sources.catalog, &sources.macros, &sources.policy})
    for (const auto& f : *group) snap.files.push_back(f.path);
  std::sort(snap.files.begin(), snap.files.end());

  CatalogBuilder catalog(options.strict);
  for (const auto& f : sources.catalog) catalog.add(f.text, f.path);
  snap.catalog = catalog.finish();
  snap.diagnostics.insert(snap.diagnostics.end(), catalog.diagnostics().begin(),
                          catalog.diagnostics().end());

  MacroTable macros;
  try {
    macros = load_macros(sources.macros);
  } catch (const Error& e) {
    if (options.strict) throw;
    snap.diagnostics.push_back({"", 0, e.what()});
  }
  snap.macro_redefinitions = macros.redefinitions;
  snap.diagnostics.insert(snap.diagnostics.end(), macros.warnings.begin(),
                          macros.warnings.end());

  std::vector<ExpandResult> expanded;
  expanded.reserve(sources.policy.size());
  for (const auto& f : sources.policy) {
    try {
      expanded.push_back(expand(f.text, macros, f.path));
    } catch (const Error& e) {
      if (options.strict) throw;
      snap.diagnostics.push_back(
          {f.path, 0, std::string(e.what()) + "; file used unexpanded"});
      ExpandResult raw;
      raw.text = f.text;
      expanded.push_back(std::move(raw));
    }
    auto& w = expanded.back().warnings;
    snap.diagnostics.insert(snap.diagnostics.end(), w.begin(), w.end());
  }

  std::vector<std::pair<std::string, Declarations>> decls;
  for (std::size_t i = 0; i < sources.policy.size(); ++i) {
    decls.emplace_back(sources.policy[i].path,
                       parse_declarations(expanded[i].text,
                                          sources.policy[i].path));
    auto& d = decls.back().second.diagnostics;
    snap.diagnostics.insert(snap.diagnostics.end(), d.begin(), d.end());
  }
  snap.symbols = assemble_symbols(decls, snap.diagnostics);

  for (std::size_t i = 0; i < sources.policy.size(); ++i) {
    auto parsed = parse_rules(expanded[i].text, snap.catalog, snap.symbols,
                              options, sources.policy[i].path,
                              expanded[i].lines,
                              static_cast<RuleId>(snap.rules.size()));
    for (auto& r : parsed.rules) snap.rules.push_back(std::move(r));
    for (auto& [k, v] : parsed.skipped) snap.skipped_statements[k] += v;
    snap.counts.total += parsed.counts.total;
    snap.counts.declarations += parsed.counts.declarations;
    snap.counts.rules += parsed.counts.rules;
    snap.counts.dropped_rules += parsed.counts.dropped_rules;
    snap.counts.skipped += parsed.counts.skipped;
    snap.diagnostics.insert(snap.diagnostics.end(), parsed.diagnostics.begin(),
                            parsed.diagnostics.end());
  }
  return snap;
}

inline PolicySnapshot build_snapshot(std::vector<SourceFile> files,
                                     const FileSetConfig& config,
                                     const ParseOptions& options = {}) {
  return build_snapshot(SnapshotSources::classify(std::move(files), config),
                        options);
}

}  // namespace sebox
