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

// Shared test fixtures: the F1 policy, a seeded random policy generator with
// its own expression tree, a brute-force box oracle over that tree, and a
// scratch git repository builder.
//
// The oracle deliberately shares no code with the library. It never parses
// policy text; it evaluates the generator's tree directly against every box
// of the universe.

#pragma once

#include <stdlib.h>
#include <unistd.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "sebox/policy_model.hpp"
#include "sebox/process.hpp"

namespace sebox::testing {

// ---------------------------------------------------------------- F1 policy

inline constexpr const char* kF1SecurityClasses = "class file\nclass dir\n";

inline constexpr const char* kF1AccessVectors =
    "class file\n{\n    read\n    write\n    open\n    execute\n}\n\n"
    "class dir\n{\n    read\n    search\n    open\n}\n";

inline constexpr const char* kF1Declarations =
    "attribute domain;\n"
    "attribute appdomain;\n"
    "attribute file_type;\n"
    "type init, domain;\n"
    "type untrusted_app, domain, appdomain;\n"
    "type system_app, domain, appdomain;\n"
    "type zygote_tmpfs, file_type;\n"
    "type system_file, file_type;\n";

inline constexpr const char* kF1ThreeRules =
    "allow appdomain zygote_tmpfs:file read;\n"
    "allow domain self:dir search;\n"
    "allow init file_type:file ~write;\n";

inline constexpr const char* kF1AllowNeverallow =
    "allow appdomain zygote_tmpfs:file read;\n"
    "neverallow untrusted_app zygote_tmpfs:file read;\n";

// F1 catalog and declarations plus `rules` in policy.te.
inline std::vector<SourceFile> f1_files(const std::string& rules,
                                        const std::string& macros = {}) {
  std::vector<SourceFile> files{
      {"security_classes", kF1SecurityClasses},
      {"access_vectors", kF1AccessVectors},
      {"decls.te", kF1Declarations},
      {"policy.te", rules},
  };
  if (!macros.empty()) files.push_back({"te_macros", macros});
  return files;
}

// ------------------------------------------------------- random policies

struct GenExpr {
  enum class Kind { Name, Negation, Wildcard, Complement, Group, Self };
  Kind kind = Kind::Name;
  std::string name;
  std::vector<GenExpr> terms;

  std::string text() const {
    switch (kind) {
      case Kind::Name: return name;
      case Kind::Negation: return "-" + name;
      case Kind::Wildcard: return "*";
      case Kind::Self: return "self";
      case Kind::Complement: return "~" + terms.at(0).text();
      case Kind::Group: {
        std::string s = "{";
        for (const auto& t : terms) s += " " + t.text();
        return s + " }";
      }
    }
    return {};
  }

  bool has_self() const {
    if (kind == Kind::Self) return true;
    for (const auto& t : terms)
      if (t.has_self()) return true;
    return false;
  }
};

struct GenRule {
  bool allow = true;
  GenExpr subject;
  GenExpr target;
  std::vector<std::string> classes;
  GenExpr perms;

  std::string text() const {
    std::string cls;
    if (classes.size() == 1) {
      cls = classes[0];
    } else {
      cls = "{";
      for (const auto& c : classes) cls += " " + c;
      cls += " }";
    }
    return std::string(allow ? "allow " : "neverallow ") + subject.text() + " " +
           target.text() + ":" + cls + " " + perms.text() + ";";
  }
};

struct GenPolicy {
  std::vector<std::string> types;
  std::map<std::string, std::set<std::string>> attributes;  // name -> members
  std::map<std::string, std::vector<std::string>> classes;  // name -> perms
  std::vector<GenRule> rules;

  std::vector<SourceFile> files() const {
    std::string sc, av, te;
    for (const auto& [c, perms] : classes) {
      sc += "class " + c + "\n";
      av += "class " + c + "\n{\n";
      for (const auto& p : perms) av += "    " + p + "\n";
      av += "}\n";
    }
    for (const auto& [a, _] : attributes) te += "attribute " + a + ";\n";
    for (const auto& t : types) {
      te += "type " + t;
      for (const auto& [a, members] : attributes)
        if (members.count(t)) te += ", " + a;
      te += ";\n";
    }
    for (const auto& r : rules) te += r.text() + "\n";
    return {{"security_classes", sc}, {"access_vectors", av}, {"policy.te", te}};
  }
};

class PolicyGenerator {
 public:
  explicit PolicyGenerator(std::uint64_t seed) : rng_(seed) {}

  GenPolicy policy() {
    GenPolicy p;
    int nt = uniform(1, 8);
    for (int i = 0; i < nt; ++i) p.types.push_back("t" + std::to_string(i));
    int na = uniform(0, 4);
    for (int i = 0; i < na; ++i) {
      auto& members = p.attributes["a" + std::to_string(i)];
      for (const auto& t : p.types)
        if (chance(0.4)) members.insert(t);
    }
    int nc = uniform(1, 3);
    std::vector<std::string> pool;
    for (int i = 0; i < 8; ++i) pool.push_back("p" + std::to_string(i));
    for (int i = 0; i < nc; ++i) {
      std::shuffle(pool.begin(), pool.end(), rng_);
      std::vector<std::string> perms(pool.begin(), pool.begin() + uniform(1, 6));
      std::sort(perms.begin(), perms.end());
      p.classes["c" + std::to_string(i)] = perms;
    }
    int nr = uniform(0, 30);
    for (int i = 0; i < nr; ++i) p.rules.push_back(rule(p, !chance(0.25)));
    return p;
  }

  GenRule rule(const GenPolicy& p, bool allow) {
    GenRule r;
    r.allow = allow;
    r.subject = type_expr(p, false);
    r.target = chance(0.2) ? GenExpr{GenExpr::Kind::Self, {}, {}} : type_expr(p, true);
    std::vector<std::string> names;
    for (const auto& [c, _] : p.classes) names.push_back(c);
    std::shuffle(names.begin(), names.end(), rng_);
    names.resize(static_cast<std::size_t>(uniform(1, static_cast<int>(names.size()))));
    std::sort(names.begin(), names.end());
    r.classes = names;
    std::vector<std::string> common = p.classes.at(names[0]);
    for (const auto& c : names) {
      std::vector<std::string> keep;
      const auto& perms = p.classes.at(c);
      std::set_intersection(common.begin(), common.end(), perms.begin(), perms.end(),
                            std::back_inserter(keep));
      common = keep;
    }
    r.perms = perm_expr(common);
    return r;
  }

 private:
  int uniform(int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng_); }
  bool chance(double p) { return std::bernoulli_distribution(p)(rng_); }

  template <typename C>
  const std::string& pick(const C& c) {
    auto it = c.begin();
    std::advance(it, uniform(0, static_cast<int>(c.size()) - 1));
    return *it;
  }

  std::string type_or_attribute(const GenPolicy& p) {
    std::vector<std::string> names = p.types;
    for (const auto& [a, _] : p.attributes) names.push_back(a);
    return pick(names);
  }

  GenExpr name(std::string n) { return {GenExpr::Kind::Name, std::move(n), {}}; }

  GenExpr group(const GenPolicy& p, bool allow_self) {
    GenExpr g{GenExpr::Kind::Group, {}, {}};
    int positives = uniform(0, 3);
    for (int i = 0; i < positives; ++i) {
      if (allow_self && chance(0.15)) g.terms.push_back({GenExpr::Kind::Self, {}, {}});
      else if (chance(0.1)) g.terms.push_back({GenExpr::Kind::Wildcard, {}, {}});
      else g.terms.push_back(name(type_or_attribute(p)));
    }
    int negatives = uniform(positives == 0 ? 1 : 0, 2);
    for (int i = 0; i < negatives; ++i)
      g.terms.push_back({GenExpr::Kind::Negation, type_or_attribute(p), {}});
    return g;
  }

  GenExpr type_expr(const GenPolicy& p, bool allow_self) {
    int r = uniform(0, 9);
    if (r <= 3) return name(type_or_attribute(p));
    if (r == 4) return {GenExpr::Kind::Wildcard, {}, {}};
    if (r == 5) {
      GenExpr inner = chance(0.5) ? name(type_or_attribute(p)) : group(p, false);
      return {GenExpr::Kind::Complement, {}, {inner}};
    }
    return group(p, allow_self);
  }

  GenExpr perm_expr(const std::vector<std::string>& common) {
    if (common.empty()) return {GenExpr::Kind::Wildcard, {}, {}};
    switch (uniform(0, 5)) {
      case 0: return name(pick(common));
      case 1: return {GenExpr::Kind::Wildcard, {}, {}};
      case 2: return {GenExpr::Kind::Complement, {}, {name(pick(common))}};
      case 3: {
        GenExpr g{GenExpr::Kind::Group, {}, {name(pick(common)), name(pick(common))}};
        return {GenExpr::Kind::Complement, {}, {g}};
      }
      case 4: return {GenExpr::Kind::Group, {}, {name(pick(common)), name(pick(common))}};
      default:
        return {GenExpr::Kind::Group,
                {},
                {{GenExpr::Kind::Wildcard, {}, {}},
                 {GenExpr::Kind::Negation, pick(common), {}}}};
    }
  }

  std::mt19937_64 rng_;
};

// ------------------------------------------------------------ the oracle

class BoxOracle {
 public:
  explicit BoxOracle(const GenPolicy& p) : p_(p) {}

  bool type_in(const GenExpr& e, const std::string& t, const std::string& subject) const {
    switch (e.kind) {
      case GenExpr::Kind::Name: {
        auto a = p_.attributes.find(e.name);
        return a != p_.attributes.end() ? a->second.count(t) > 0 : e.name == t;
      }
      case GenExpr::Kind::Negation: return false;
      case GenExpr::Kind::Wildcard: return true;
      case GenExpr::Kind::Self: return t == subject;
      case GenExpr::Kind::Complement: return !type_in(e.terms[0], t, subject);
      case GenExpr::Kind::Group: {
        bool pos = false, neg = false;
        for (const auto& term : e.terms) {
          if (term.kind == GenExpr::Kind::Negation)
            neg = neg || type_in({GenExpr::Kind::Name, term.name, {}}, t, subject);
          else
            pos = pos || type_in(term, t, subject);
        }
        return pos && !neg;
      }
    }
    return false;
  }

  static bool perm_in(const GenExpr& e, const std::string& perm) {
    switch (e.kind) {
      case GenExpr::Kind::Name: return e.name == perm;
      case GenExpr::Kind::Wildcard: return true;
      case GenExpr::Kind::Complement: return !perm_in(e.terms[0], perm);
      case GenExpr::Kind::Group: {
        bool pos = false, neg = false;
        for (const auto& t : e.terms) {
          if (t.kind == GenExpr::Kind::Negation) neg = neg || t.name == perm;
          else pos = pos || perm_in(t, perm);
        }
        return pos && !neg;
      }
      default: return false;
    }
  }

  bool admits(const GenRule& r, const std::string& s, const std::string& o,
              const std::string& c, const std::string& perm) const {
    return type_in(r.subject, s, "") && type_in(r.target, o, s) &&
           std::find(r.classes.begin(), r.classes.end(), c) != r.classes.end() &&
           perm_in(r.perms, perm);
  }

  // Every box of the universe, in canonical line form.
  template <typename F>
  void for_each_universe_box(F&& f) const {
    for (const auto& s : p_.types)
      for (const auto& o : p_.types)
        for (const auto& [c, perms] : p_.classes)
          for (const auto& perm : perms) f(s, o, c, perm);
  }

  std::set<std::string> boxes(bool allow) const {
    std::set<std::string> out;
    for_each_universe_box([&](auto& s, auto& o, auto& c, auto& perm) {
      for (const auto& r : p_.rules)
        if (r.allow == allow && admits(r, s, o, c, perm)) {
          out.insert(s + " " + o + " " + c + " " + perm);
          break;
        }
    });
    return out;
  }

  std::set<std::string> final_allow() const {
    std::set<std::string> out;
    auto never = boxes(false);
    for (const auto& b : boxes(true))
      if (!never.count(b)) out.insert(b);
    return out;
  }

  std::set<std::string> rule_boxes(const GenRule& r) const {
    std::set<std::string> out;
    for_each_universe_box([&](auto& s, auto& o, auto& c, auto& perm) {
      if (admits(r, s, o, c, perm)) out.insert(s + " " + o + " " + c + " " + perm);
    });
    return out;
  }

 private:
  const GenPolicy& p_;
};

// ------------------------------------------------------- scratch git repos

class TempDir {
 public:
  TempDir() {
    std::string tmpl = (std::filesystem::temp_directory_path() / "sebox-XXXXXX").string();
    if (!mkdtemp(tmpl.data())) throw std::runtime_error("mkdtemp failed");
    path_ = tmpl;
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::string str() const { return path_.string(); }

 private:
  std::filesystem::path path_;
};

class GitFixture {
 public:
  GitFixture() : dir_() {
    run({"init", "-q", "-b", "master"});
  }

  std::string path() const { return dir_.str(); }

  void write(const std::string& rel, const std::string& text) {
    auto p = dir_.path() / rel;
    std::filesystem::create_directories(p.parent_path());
    std::ofstream(p, std::ios::binary | std::ios::trunc) << text;
  }

  void remove(const std::string& rel) { run({"rm", "-q", rel}); }

  // Commits everything in the work tree; returns the new hash.
  std::string commit(const std::string& message,
                     const std::string& email = "dev@example.com") {
    run({"add", "-A"});
    std::string date = std::to_string(1500000000 + 3600 * ++clock_) + " +0000";
    run({"commit", "-q", "--allow-empty", "-m", message},
        {{"GIT_AUTHOR_NAME", "Dev"},
         {"GIT_AUTHOR_EMAIL", email},
         {"GIT_AUTHOR_DATE", date},
         {"GIT_COMMITTER_NAME", "Dev"},
         {"GIT_COMMITTER_EMAIL", email},
         {"GIT_COMMITTER_DATE", date}});
    return head();
  }

  std::string head() const {
    auto out = run({"rev-parse", "HEAD"});
    while (!out.empty() && (out.back() == '\n' || out.back() == '\r')) out.pop_back();
    return out;
  }

  std::string run(std::vector<std::string> args,
                  std::map<std::string, std::string> env = {}) const {
    std::vector<std::string> argv{"git", "-C", dir_.str(), "-c", "commit.gpgsign=false",
                                  "-c", "user.name=Dev", "-c", "user.email=dev@example.com"};
    argv.insert(argv.end(), args.begin(), args.end());
    env.emplace("GIT_CONFIG_NOSYSTEM", "1");
    env.emplace("GIT_CONFIG_GLOBAL", "/dev/null");
    auto r = run_process(argv, {}, env);
    if (!r.ok()) throw std::runtime_error("git failed: " + r.err);
    return r.out;
  }

 private:
  TempDir dir_;
  int clock_ = 0;
};

// Allow rules over the F1 declarations; commit k of a growing history holds
// the first k + 1 of them.
inline const std::vector<std::string>& growth_rules() {
  static const std::vector<std::string> rules{
      "allow appdomain zygote_tmpfs:file read;",
      "allow domain self:dir search;",
      "allow init file_type:file ~write;",
      "allow untrusted_app system_file:dir { read open };",
      "allow system_app file_type:dir search;",
      "allow init domain:dir read;",
      "allow untrusted_app zygote_tmpfs:file { open write };",
      "allow system_app self:dir read;",
      "allow domain system_file:file execute;",
      "allow appdomain init:dir open;",
  };
  return rules;
}

// Writes `n` commits, each adding one growth rule; returns their hashes.
inline std::vector<std::string> write_growth_history(GitFixture& g, std::size_t n,
                                                     const std::vector<std::string>& emails = {}) {
  std::vector<std::string> hashes;
  g.write("security_classes", kF1SecurityClasses);
  g.write("access_vectors", kF1AccessVectors);
  g.write("decls.te", kF1Declarations);
  std::string policy;
  for (std::size_t k = 0; k < n; ++k) {
    policy += growth_rules().at(k % growth_rules().size()) + "\n";
    g.write("policy.te", policy);
    std::string email = emails.empty() ? "dev@example.com" : emails[k % emails.size()];
    hashes.push_back(g.commit("rule " + std::to_string(k), email));
  }
  return hashes;
}

}  // namespace sebox::testing
