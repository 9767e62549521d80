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

// Git history mining through the git command-line tool.
//
// The branch is linearized along first parents (rev-list --first-parent),
// snapshot files are read straight from the object store (ls-tree +
// cat-file --batch) and per-commit diffs use diff --unified=0 against the
// first parent. The working tree is never touched.

#pragma once

#include <algorithm>
#include <cctype>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <istream>
#include <map>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "sebox/error.hpp"
#include "sebox/file_set.hpp"
#include "sebox/metrics_engine.hpp"
#include "sebox/parallel.hpp"
#include "sebox/policy_model.hpp"
#include "sebox/policy_parser.hpp"
#include "sebox/process.hpp"

namespace sebox {

struct CommitRecord {
  std::string hash;
  std::vector<std::string> parents;  // parents[0] is the first parent
  std::string author_email;
  std::int64_t author_timestamp = 0;
  std::int64_t committer_timestamp = 0;
  std::int64_t commit_index = 0;
  std::string subject_line;

  friend bool operator==(const CommitRecord&, const CommitRecord&) = default;
};

class GitRepo {
 public:
  explicit GitRepo(std::string path) : path_(std::move(path)) {
    std::error_code ec;
    if (!std::filesystem::is_directory(path_, ec))
      throw Error(ErrorCode::RepoNotFound, path_);
    if (!git({"rev-parse", "--git-dir"}).ok())
      throw Error(ErrorCode::RepoNotFound, path_ + " is not a git repository");
  }

  const std::string& path() const { return path_; }

  ProcessResult git(std::vector<std::string> args,
                    std::string_view input = {}) const {
    std::vector<std::string> argv{"git", "-C", path_, "-c", "core.quotepath=off"};
    argv.insert(argv.end(), args.begin(), args.end());
    return run_process(argv, input);
  }

  ProcessResult git_checked(std::vector<std::string> args,
                            std::string_view input = {}) const {
    auto r = git(args, input);
    if (!r.ok()) {
      std::string cmd;
      for (const auto& a : args) cmd += " " + a;
      throw Error(ErrorCode::ProcessError, "git" + cmd + ": " + r.err);
    }
    return r;
  }

  // Full hash of a commit named by hash or ref.
  std::string resolve_commit(const std::string& rev) const {
    auto r = git({"rev-parse", "--verify", "--quiet", rev + "^{commit}"});
    if (!r.ok()) throw Error(ErrorCode::CommitNotFound, rev);
    return trim(r.out);
  }

  std::string resolve_branch(const std::string& branch) const {
    auto r = git({"rev-parse", "--verify", "--quiet",
                  "refs/heads/" + branch + "^{commit}"});
    if (!r.ok()) r = git({"rev-parse", "--verify", "--quiet", branch + "^{commit}"});
    if (!r.ok()) throw Error(ErrorCode::BranchNotFound, branch);
    return trim(r.out);
  }

  const std::string& empty_tree() const {
    if (empty_tree_.empty())
      empty_tree_ = trim(git_checked({"hash-object", "-t", "tree", "--stdin"}).out);
    return empty_tree_;
  }

  static std::string trim(std::string s) {
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back())))
      s.pop_back();
    return s;
  }

 private:
  std::string path_;
  mutable std::string empty_tree_;
};

// First-parent chain from the branch head back to the root, oldest first.
inline std::vector<CommitRecord> linearize(const GitRepo& repo,
                                           const std::string& branch) {
  std::string head = repo.resolve_branch(branch);
  auto r = repo.git_checked(
      {"rev-list", "--first-parent",
       "--format=%H%x1f%P%x1f%ae%x1f%at%x1f%ct%x1f%s", head});
  std::vector<CommitRecord> out;
  std::istringstream in(r.out);
  std::string line;
  while (std::getline(in, line)) {
    if (line.rfind("commit ", 0) != 0) continue;
    std::string rec;
    if (!std::getline(in, rec)) break;
    std::vector<std::string> f;
    std::size_t start = 0;
    for (std::size_t i = 0; i <= rec.size(); ++i) {
      if (i == rec.size() || rec[i] == '\x1f') {
        f.push_back(rec.substr(start, i - start));
        start = i + 1;
        if (f.size() == 5) {
          f.push_back(rec.substr(start));
          break;
        }
      }
    }
    if (f.size() < 6)
      throw Error(ErrorCode::ProcessError, "unexpected rev-list record: " + rec);
    CommitRecord c;
    c.hash = f[0];
    std::istringstream ps(f[1]);
    for (std::string p; ps >> p;) c.parents.push_back(p);
    c.author_email = f[2];
    c.author_timestamp = std::stoll(f[3]);
    c.committer_timestamp = std::stoll(f[4]);
    c.subject_line = f[5];
    out.push_back(std::move(c));
  }
  std::reverse(out.begin(), out.end());
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i].commit_index = static_cast<std::int64_t>(i);
  return out;
}

struct SnapshotFiles {
  std::vector<SourceFile> files;  // sorted by path
  std::vector<Diagnostic> diagnostics;
};

// The configured policy files as they existed at `hash`.
inline SnapshotFiles extract_snapshot_files(const GitRepo& repo,
                                            const std::string& hash,
                                            const FileSetConfig& config) {
  std::string commit = repo.resolve_commit(hash);
  auto tree = repo.git_checked({"ls-tree", "-r", "-z", "--full-tree", commit});
  std::vector<std::pair<std::string, std::string>> wanted;  // (path, oid)
  std::string_view entries = tree.out;
  while (!entries.empty()) {
    auto nul = entries.find('\0');
    std::string_view entry = entries.substr(0, nul);
    entries = nul == std::string_view::npos ? std::string_view{}
                                            : entries.substr(nul + 1);
    auto tab = entry.find('\t');
    if (tab == std::string_view::npos) continue;
    std::istringstream meta{std::string(entry.substr(0, tab))};
    std::string mode, type, oid;
    meta >> mode >> type >> oid;
    std::string path(entry.substr(tab + 1));
    if (type == "blob" && config.selects(path)) wanted.emplace_back(path, oid);
  }
  std::sort(wanted.begin(), wanted.end());

  SnapshotFiles out;
  if (wanted.empty()) {
    out.diagnostics.push_back(
        {"", 0, "no configured policy files at commit " + commit});
    return out;
  }
  bool has_catalog = std::any_of(wanted.begin(), wanted.end(), [&](auto& w) {
    return config.classify(w.first) == FileRole::Catalog;
  });
  if (!has_catalog)
    out.diagnostics.push_back(
        {"", 0, "no class catalog file (access_vectors) at commit " + commit});

  std::string request;
  for (const auto& [_, oid] : wanted) request += oid + "\n";
  auto batch = repo.git_checked({"cat-file", "--batch"}, request);
  std::string_view data = batch.out;
  for (const auto& [path, oid] : wanted) {
    auto nl = data.find('\n');
    if (nl == std::string_view::npos)
      throw Error(ErrorCode::ProcessError, "truncated cat-file output");
    std::istringstream header{std::string(data.substr(0, nl))};
    std::string got, type;
    std::size_t size = 0;
    header >> got >> type >> size;
    if (type != "blob")
      throw Error(ErrorCode::ProcessError, "cat-file: unexpected object " + got);
    data.remove_prefix(nl + 1);
    out.files.push_back({path, std::string(data.substr(0, size))});
    data.remove_prefix(std::min(data.size(), size + 1));
  }
  return out;
}

using TokenExtractor = std::function<void(std::string_view line,
                                          std::set<std::string>& subjects,
                                          std::set<std::string>& objects)>;

// Default extractor for diff lines. Rule lines contribute their subject and
// target field names; declarations and macro invocation arguments count for
// both positions. Fragments that do not parse contribute nothing.
inline void extract_type_tokens(std::string_view line,
                                std::set<std::string>& subjects,
                                std::set<std::string>& objects) {
  auto toks = lex::tokenize(line);
  if (toks.empty() || !toks[0].is_word()) return;
  auto kw = toks[0].text;
  auto collect = [](const SetExpr& e, std::set<std::string>& into) {
    e.for_each_name([&](const std::string& n) { into.insert(n); });
  };
  static const std::set<std::string_view> kRuleKeywords = {
      "allow",     "neverallow",      "auditallow",      "dontaudit",
      "allowxperm", "neverallowxperm", "auditallowxperm", "dontauditxperm"};
  if (kRuleKeywords.count(kw)) {
    try {
      lex::ExprReader r(toks, 1, toks.size());
      SetExpr subject = r.expr(false);
      SetExpr target = r.expr(true);
      collect(subject, subjects);
      collect(target, objects);
    } catch (const Error&) {
    }
    return;
  }
  if (kw == "type" || kw == "typeattribute" || kw == "attribute") {
    if (toks.size() > 1 && toks[1].is_word()) {
      subjects.emplace(toks[1].text);
      objects.emplace(toks[1].text);
    }
    return;
  }
  if (toks.size() > 1 && toks[1].is('(')) {
    for (std::size_t i = 2; i < toks.size(); ++i) {
      if (toks[i].is(')')) break;
      if (toks[i].is_word() && detail::is_ident_start(toks[i].text[0])) {
        subjects.emplace(toks[i].text);
        objects.emplace(toks[i].text);
      }
    }
  }
}

namespace detail {

inline std::string normalize_ws(std::string_view s) {
  std::string out;
  bool space = false;
  for (char c : s) {
    if (lex::is_space(c)) {
      space = !out.empty();
      continue;
    }
    if (space) out.push_back(' ');
    space = false;
    out.push_back(c);
  }
  return out;
}

// Parses `git diff --unified=0` output into per-file removed/added lines.
struct FileDiff {
  std::vector<std::string> removed;
  std::vector<std::string> added;
};

inline std::map<std::string, FileDiff> parse_unified_diff(std::string_view text) {
  std::map<std::string, FileDiff> out;
  FileDiff* cur = nullptr;
  bool in_hunks = false;
  std::size_t pos = 0;
  while (pos < text.size()) {
    auto nl = text.find('\n', pos);
    std::string_view line =
        text.substr(pos, nl == std::string_view::npos ? text.npos : nl - pos);
    pos = nl == std::string_view::npos ? text.size() : nl + 1;
    if (line.rfind("diff --git ", 0) == 0) {
      auto b = line.rfind(" b/");
      std::string path(b == std::string_view::npos ? line.substr(11)
                                                   : line.substr(b + 3));
      cur = &out[path];
      in_hunks = false;
      continue;
    }
    if (!cur) continue;
    if (line.rfind("@@", 0) == 0) {
      in_hunks = true;
      continue;
    }
    if (!in_hunks || line.empty()) continue;
    if (line[0] == '-') cur->removed.emplace_back(line.substr(1));
    else if (line[0] == '+') cur->added.emplace_back(line.substr(1));
  }
  return out;
}

}  // namespace detail

// Type tokens on added or removed policy lines of each commit, diffed
// against its first parent (the empty tree for the root). Lines that only
// changed whitespace cancel out.
inline std::vector<CommitTokens> diff_token_index(
    const GitRepo& repo, std::span<const CommitRecord> commits,
    const FileSetConfig& config, const TokenExtractor& extractor = extract_type_tokens,
    std::size_t workers = 1) {
  std::vector<CommitTokens> out(commits.size());
  const std::string& empty_tree = repo.empty_tree();
  parallel_for(commits.size(), workers, [&](std::size_t i) {
    const auto& c = commits[i];
    std::string base = c.parents.empty() ? empty_tree : c.parents[0];
    auto r = repo.git({"diff", "--unified=0", "--no-color", "--no-renames",
                       "--no-ext-diff", base, c.hash, "--"});
    if (!r.ok()) throw Error(ErrorCode::CommitNotFound, c.hash + ": " + r.err);
    CommitTokens tokens;
    tokens.commit_index = c.commit_index;
    for (auto& [path, diff] : detail::parse_unified_diff(r.out)) {
      if (config.classify(path) != FileRole::Policy) continue;
      std::multiset<std::string> removed;
      for (const auto& l : diff.removed) removed.insert(detail::normalize_ws(l));
      std::vector<std::string> added;
      for (const auto& l : diff.added) {
        auto n = detail::normalize_ws(l);
        if (auto it = removed.find(n); it != removed.end()) removed.erase(it);
        else added.push_back(std::move(n));
      }
      for (const auto& l : removed) extractor(l, tokens.subjects, tokens.objects);
      for (const auto& l : added) extractor(l, tokens.subjects, tokens.objects);
    }
    out[i] = std::move(tokens);
  });
  return out;
}

// Email domain -> organization, falling back to the second-level domain.
struct OrgMap {
  std::map<std::string, std::string> table;

  // Reads `domain<TAB>organization` lines; '#' starts a comment.
  static OrgMap load(std::istream& in) {
    OrgMap m;
    std::string line;
    while (std::getline(in, line)) {
      if (auto hash = line.find('#'); hash != std::string::npos)
        line.resize(hash);
      auto tab = line.find('\t');
      if (tab == std::string::npos) continue;
      std::string domain = GitRepo::trim(line.substr(0, tab));
      std::string org = GitRepo::trim(line.substr(tab + 1));
      while (!domain.empty() && std::isspace(static_cast<unsigned char>(domain[0])))
        domain.erase(0, 1);
      while (!org.empty() && std::isspace(static_cast<unsigned char>(org[0])))
        org.erase(0, 1);
      if (domain.empty() || org.empty()) continue;
      std::transform(domain.begin(), domain.end(), domain.begin(),
                     [](unsigned char c) { return std::tolower(c); });
      m.table[domain] = org;
    }
    return m;
  }

  std::string lookup(std::string_view email) const {
    auto at = email.rfind('@');
    std::string domain(at == std::string_view::npos ? std::string_view{}
                                                    : email.substr(at + 1));
    std::transform(domain.begin(), domain.end(), domain.begin(),
                   [](unsigned char c) { return std::tolower(c); });
    while (!domain.empty() && domain.back() == '.') domain.pop_back();
    if (domain.empty()) return "(unknown)";
    for (std::string d = domain;;) {
      if (auto it = table.find(d); it != table.end()) return it->second;
      auto dot = d.find('.');
      if (dot == std::string::npos) break;
      d = d.substr(dot + 1);
    }
    auto last = domain.rfind('.');
    if (last == std::string::npos || last == 0) return domain;
    auto second = domain.rfind('.', last - 1);
    return second == std::string::npos ? domain : domain.substr(second + 1);
  }
};

struct ReleaseBucket {
  std::string label;
  std::int64_t start_index = 0;  // inclusive
  std::int64_t end_index = 0;    // inclusive
};

struct OrgReport {
  std::map<std::string, std::uint64_t> totals;
  std::vector<std::pair<std::string, std::map<std::string, std::uint64_t>>> buckets;
};

inline OrgReport attribute_orgs(std::span<const CommitRecord> commits,
                                const OrgMap& orgs,
                                std::span<const ReleaseBucket> buckets = {}) {
  for (const auto& b : buckets)
    if (b.start_index > b.end_index)
      throw Error(ErrorCode::InvalidArgument, "bucket '" + b.label + "' is empty");
  for (std::size_t i = 0; i < buckets.size(); ++i)
    for (std::size_t j = i + 1; j < buckets.size(); ++j)
      if (buckets[i].start_index <= buckets[j].end_index &&
          buckets[j].start_index <= buckets[i].end_index)
        throw Error(ErrorCode::OverlappingBuckets,
                    buckets[i].label + " and " + buckets[j].label);
  OrgReport out;
  for (const auto& b : buckets) out.buckets.emplace_back(b.label, std::map<std::string, std::uint64_t>{});
  for (const auto& c : commits) {
    auto org = orgs.lookup(c.author_email);
    ++out.totals[org];
    for (std::size_t i = 0; i < buckets.size(); ++i)
      if (c.commit_index >= buckets[i].start_index &&
          c.commit_index <= buckets[i].end_index)
        ++out.buckets[i].second[org];
  }
  return out;
}

}  // namespace sebox
