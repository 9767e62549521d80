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

// Command implementations behind the sebox tool. Each command writes its
// report to `out` (or RunConfig::out_path) and messages to `err`, and
// returns a process exit status.

#pragma once

#include <algorithm>
#include <atomic>
#include <charconv>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <mutex>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "sebox/box_engine.hpp"
#include "sebox/cache.hpp"
#include "sebox/error.hpp"
#include "sebox/file_set.hpp"
#include "sebox/metrics_engine.hpp"
#include "sebox/parallel.hpp"
#include "sebox/policy_parser.hpp"
#include "sebox/repo_miner.hpp"
#include "sebox/report.hpp"

namespace sebox {

enum ExitCode : int { kExitOk = 0, kExitUsage = 1, kExitNotFound = 2, kExitParse = 3 };

enum class SeriesKind { Types, Rules, Boxes };

struct RunConfig {
  std::string repo;
  std::string branch = "master";
  std::string dir;  // analyze a plain directory instead of a repository
  FileSetConfig files;
  bool strict = false;
  std::string cache_dir;  // empty: $SEBOX_CACHE_DIR, then ".sebox-cache"
  std::string from;       // commit index or hash; empty: first commit
  std::string to;         // commit index or hash; empty: branch head
  std::string commit;
  std::vector<std::string> keywords;
  std::string org_map;
  std::vector<ReleaseBucket> buckets;
  std::vector<double> breakpoints;
  std::size_t workers = 1;

  std::string out_path;
  std::string delta_out_path;
  std::string commits_out_path;
  std::string dump_path;
  std::string provenance_dump_path;
  std::string box_spec;
  std::string input_path;
  SeriesKind series = SeriesKind::Boxes;
  bool include_neverallow = false;
  bool subjects = true;
  bool objects = true;

  ParseOptions parse_options() const { return ParseOptions{strict}; }

  void validate() const {
    if (files.catalog_globs.empty() || files.policy_globs.empty())
      throw Error(ErrorCode::InvalidArgument, "file globs must not be empty");
    if (workers == 0) throw Error(ErrorCode::InvalidArgument, "workers must be >= 1");
  }
};

struct WalkStats {
  std::size_t cache_hits = 0;
  std::size_t computed = 0;
  std::size_t failed = 0;
};

inline int exit_code_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::RepoNotFound:
    case ErrorCode::BranchNotFound:
    case ErrorCode::CommitNotFound:
    case ErrorCode::BoxNotPresent:
    case ErrorCode::MissingWalkData:
    case ErrorCode::FewerThanTwoRows:
      return kExitNotFound;
    case ErrorCode::UnknownClass:
    case ErrorCode::UnknownCommon:
    case ErrorCode::UnknownType:
    case ErrorCode::UnknownName:
    case ErrorCode::UnknownPermission:
    case ErrorCode::DuplicatePermission:
    case ErrorCode::UndeclaredAttribute:
    case ErrorCode::SyntaxError:
    case ErrorCode::MalformedDefine:
    case ErrorCode::ExpansionDepthExceeded:
    case ErrorCode::ArityMismatch:
    case ErrorCode::CapacityExceeded:
      return kExitParse;
    default:
      return kExitUsage;
  }
}

// Result of the full pipeline on one file set.
struct Analysis {
  PolicySnapshot snapshot;
  DecompositionResult decomposition;
  MetricsRow metrics;
};

inline Analysis analyze_files(std::vector<SourceFile> files, const RunConfig& cfg) {
  Analysis a;
  a.snapshot = build_snapshot(std::move(files), cfg.files, cfg.parse_options());
  a.decomposition = decompose_snapshot(a.snapshot, cfg.parse_options());
  a.metrics = snapshot_metrics(a.snapshot, a.decomposition);
  return a;
}

// Selected files under `dir`, paths relative to it.
inline std::vector<SourceFile> read_policy_dir(const std::string& dir,
                                               const FileSetConfig& config) {
  namespace fs = std::filesystem;
  std::error_code ec;
  if (!fs::is_directory(dir, ec))
    throw Error(ErrorCode::RepoNotFound, "not a directory: " + dir);
  std::vector<SourceFile> out;
  for (auto it = fs::recursive_directory_iterator(dir, ec);
       it != fs::recursive_directory_iterator(); it.increment(ec)) {
    if (ec) throw Error(ErrorCode::IoError, dir + ": " + ec.message());
    if (!it->is_regular_file()) continue;
    std::string rel = fs::relative(it->path(), dir).generic_string();
    if (!config.selects(rel)) continue;
    std::ifstream in(it->path(), std::ios::binary);
    std::string text{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
    out.push_back({rel, std::move(text)});
  }
  std::sort(out.begin(), out.end(),
            [](const SourceFile& a, const SourceFile& b) { return a.path < b.path; });
  return out;
}

namespace detail {

// Runs `fn` against the --out file when one is configured, else `out`.
inline void with_output(const std::string& path, std::ostream& out,
                        const std::function<void(std::ostream&)>& fn) {
  if (path.empty() || path == "-") {
    fn(out);
    return;
  }
  std::ofstream file(path, std::ios::binary | std::ios::trunc);
  if (!file) throw Error(ErrorCode::IoError, "cannot write " + path);
  fn(file);
  if (!file) throw Error(ErrorCode::IoError, "write failed: " + path);
}

inline void report_diagnostics(const std::vector<Diagnostic>& diags, std::ostream& err) {
  for (const auto& d : diags) err << "warning: " << d.str() << "\n";
}

inline std::optional<std::int64_t> parse_index(const std::string& s) {
  std::int64_t v = 0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size()) return std::nullopt;
  return v;
}

inline std::size_t locate(const GitRepo& repo, std::span<const CommitRecord> commits,
                          const std::string& rev) {
  if (auto idx = parse_index(rev); idx && rev.size() < 12) {
    if (*idx < 0 || *idx >= static_cast<std::int64_t>(commits.size()))
      throw Error(ErrorCode::InvalidArgument,
                  "commit index " + rev + " outside 0.." +
                      std::to_string(commits.size() - 1));
    return static_cast<std::size_t>(*idx);
  }
  std::string hash = repo.resolve_commit(rev);
  for (std::size_t i = 0; i < commits.size(); ++i)
    if (commits[i].hash == hash) return i;
  throw Error(ErrorCode::CommitNotFound, rev + " is not on the first-parent history");
}

struct Range {
  std::size_t begin = 0;
  std::size_t end = 0;  // inclusive
};

inline Range resolve_range(const GitRepo& repo, std::span<const CommitRecord> commits,
                           const RunConfig& cfg) {
  if (commits.empty()) throw Error(ErrorCode::BranchNotFound, "empty history");
  Range r{0, commits.size() - 1};
  if (!cfg.from.empty()) r.begin = locate(repo, commits, cfg.from);
  if (!cfg.to.empty()) r.end = locate(repo, commits, cfg.to);
  if (r.begin > r.end)
    throw Error(ErrorCode::InvalidArgument, "range start is after range end");
  return r;
}

inline std::string dump_boxes(const DecompositionResult& d) {
  std::ostringstream os;
  write_box_dump(os, d.final_allow, d.codec);
  return os.str();
}

inline ResultCache open_cache(const RunConfig& cfg) {
  return ResultCache(ResultCache::default_root(cfg.cache_dir),
                     config_digest(cfg.files, cfg.parse_options()));
}

// Cached metrics for every commit in the range, or MissingWalkData.
inline std::vector<MetricsRow> cached_rows(const RunConfig& cfg,
                                           std::span<const CommitRecord> commits,
                                           Range range) {
  auto cache = open_cache(cfg);
  std::vector<MetricsRow> rows;
  for (std::size_t i = range.begin; i <= range.end; ++i) {
    auto row = cache.load_metrics(commits[i].hash);
    if (!row)
      throw Error(ErrorCode::MissingWalkData,
                  "no cached results for commit " + std::to_string(i) + " (" +
                      commits[i].hash + "); run `sebox walk` over this range first");
    rows.push_back(std::move(*row));
  }
  return rows;
}

}  // namespace detail

// Files of one snapshot: --dir, or --repo with --commit (default: branch head).
inline std::vector<SourceFile> load_snapshot_files(const RunConfig& cfg,
                                                   std::ostream& err,
                                                   CommitRecord* record = nullptr) {
  if (!cfg.dir.empty()) return read_policy_dir(cfg.dir, cfg.files);
  if (cfg.repo.empty())
    throw Error(ErrorCode::InvalidArgument, "either --dir or --repo is required");
  GitRepo repo(cfg.repo);
  std::string hash = cfg.commit.empty() ? repo.resolve_branch(cfg.branch)
                                        : repo.resolve_commit(cfg.commit);
  if (record) {
    record->hash = hash;
    record->commit_index = -1;
    try {
      for (const auto& c : linearize(repo, cfg.branch))
        if (c.hash == hash) *record = c;
    } catch (const Error&) {
    }
  }
  auto snap = extract_snapshot_files(repo, hash, cfg.files);
  detail::report_diagnostics(snap.diagnostics, err);
  return std::move(snap.files);
}

inline int cmd_analyze(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
  cfg.validate();
  CommitRecord record;
  auto files = load_snapshot_files(cfg, err, &record);
  if (files.empty()) err << "warning: no policy files selected\n";
  auto a = analyze_files(std::move(files), cfg);
  detail::report_diagnostics(a.snapshot.diagnostics, err);
  detail::report_diagnostics(a.decomposition.diagnostics, err);
  a.metrics.commit = record.hash;
  a.metrics.commit_index = cfg.dir.empty() ? record.commit_index : 0;
  a.metrics.author_timestamp = record.author_timestamp;
  detail::with_output(cfg.out_path, out, [&](std::ostream& os) {
    os << to_json(a.metrics).dump(1) << "\n";
  });
  if (!cfg.dump_path.empty())
    detail::with_output(cfg.dump_path, out, [&](std::ostream& os) {
      write_box_dump(os, a.decomposition.final_allow, a.decomposition.codec);
    });
  if (!cfg.provenance_dump_path.empty())
    detail::with_output(cfg.provenance_dump_path, out, [&](std::ostream& os) {
      write_provenance_dump(os, a.decomposition, a.decomposition.final_allow);
    });
  return kExitOk;
}

// Per-commit metrics over the configured range, computing only what the
// cache lacks. Failed commits yield rows marked failed in lenient mode.
inline std::vector<MetricsRow> walk_rows(const RunConfig& cfg,
                                         std::span<const CommitRecord> commits,
                                         detail::Range range, std::ostream& err,
                                         WalkStats* stats = nullptr) {
  GitRepo repo(cfg.repo);
  auto cache = detail::open_cache(cfg);
  std::size_t n = range.end - range.begin + 1;
  std::vector<MetricsRow> rows(n);
  std::vector<std::string> messages(n);
  std::atomic<std::size_t> hits{0}, computed{0}, failed{0};
  parallel_for(n, cfg.workers, [&](std::size_t i) {
    const auto& c = commits[range.begin + i];
    if (auto row = cache.load_metrics(c.hash)) {
      rows[i] = std::move(*row);
      rows[i].commit_index = c.commit_index;
      ++hits;
      return;
    }
    MetricsRow row;
    try {
      auto snap = extract_snapshot_files(repo, c.hash, cfg.files);
      auto a = analyze_files(std::move(snap.files), cfg);
      row = std::move(a.metrics);
      row.commit = c.hash;
      row.commit_index = c.commit_index;
      row.author_timestamp = c.author_timestamp;
      cache.store(c.hash, {detail::dump_boxes(a.decomposition), row});
      ++computed;
    } catch (const Error& e) {
      if (cfg.strict || e.code() == ErrorCode::ProcessError ||
          e.code() == ErrorCode::IoError)
        throw Error(e.code(), "commit " + c.hash + ": " + e.what());
      row = MetricsRow{};
      row.commit = c.hash;
      row.commit_index = c.commit_index;
      row.author_timestamp = c.author_timestamp;
      row.failed = true;
      messages[i] = "warning: commit " + std::to_string(c.commit_index) + " (" +
                    c.hash + ") failed: " + e.what();
      ++failed;
    }
    rows[i] = std::move(row);
  });
  for (const auto& m : messages)
    if (!m.empty()) err << m << "\n";
  if (stats) *stats = {hits.load(), computed.load(), failed.load()};
  return rows;
}

inline int cmd_walk(const RunConfig& cfg, std::ostream& out, std::ostream& err,
                    WalkStats* stats = nullptr) {
  cfg.validate();
  GitRepo repo(cfg.repo);
  auto commits = linearize(repo, cfg.branch);
  auto range = detail::resolve_range(repo, commits, cfg);
  WalkStats local;
  auto rows = walk_rows(cfg, commits, range, err, &local);
  if (stats) *stats = local;
  err << "walk: " << rows.size() << " commits, " << local.cache_hits
      << " cached, " << local.computed << " computed, " << local.failed
      << " failed\n";

  std::vector<MetricsRow> ok;
  for (const auto& r : rows)
    if (!r.failed) ok.push_back(r);
  std::optional<DeltaSeries> deltas;
  if (ok.size() >= 2) deltas = delta_series(ok, cfg.include_neverallow);
  else err << "walk: fewer than two successful commits, no delta report\n";

  std::string delta_path = cfg.delta_out_path;
  if (delta_path.empty() && !cfg.out_path.empty() && cfg.out_path != "-")
    delta_path = cfg.out_path + ".delta.csv";
  detail::with_output(cfg.out_path, out, [&](std::ostream& os) {
    write_metrics_csv(os, rows);
    if (deltas && delta_path.empty()) write_delta_csv(os, *deltas);
  });
  if (deltas && !delta_path.empty())
    detail::with_output(delta_path, out,
                        [&](std::ostream& os) { write_delta_csv(os, *deltas); });
  if (!cfg.commits_out_path.empty())
    detail::with_output(cfg.commits_out_path, out, [&](std::ostream& os) {
      for (std::size_t i = range.begin; i <= range.end; ++i)
        os << to_json(commits[i]).dump() << "\n";
    });
  return kExitOk;
}

inline int cmd_query_box(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
  cfg.validate();
  Box box = parse_box_line(cfg.box_spec);
  auto a = analyze_files(load_snapshot_files(cfg, err), cfg);
  auto origins = rules_for_box(a.decomposition, box);
  auto key = a.decomposition.encode(box);
  bool removed = key && a.decomposition.neverallow.contains(*key);
  detail::with_output(cfg.out_path, out, [&](std::ostream& os) {
    os << "box: " << format_box(box) << "\n"
       << "rules: " << origins.size() << "\n";
    if (removed) os << "note: also matched by a neverallow rule\n";
    for (const auto& p : origins) os << p.str() << "\n";
  });
  return kExitOk;
}

inline int cmd_age(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
  cfg.validate();
  GitRepo repo(cfg.repo);
  auto commits = linearize(repo, cfg.branch);
  auto range = detail::resolve_range(repo, commits, cfg);
  const auto& head = commits[range.end];
  auto cache = detail::open_cache(cfg);
  auto entry = cache.load(head.hash);
  if (!entry)
    throw Error(ErrorCode::MissingWalkData,
                "no cached box dump for commit " + std::to_string(range.end) +
                    "; run `sebox walk` first");
  std::set<std::string> subjects, objects;
  std::istringstream dump(entry->box_dump);
  for (std::string line; std::getline(dump, line);) {
    if (line.empty()) continue;
    Box b = parse_box_line(line);
    subjects.insert(b.subject);
    objects.insert(b.object);
  }
  std::span<const CommitRecord> history(commits.data(), range.end + 1);
  auto tokens = diff_token_index(repo, history, cfg.files, extract_type_tokens,
                                 cfg.workers);
  auto head_index = static_cast<std::int64_t>(range.end);
  detail::with_output(cfg.out_path, out, [&](std::ostream& os) {
    AgeReport s = type_age_cdf(tokens, head_index, Position::Subject, subjects);
    AgeReport o = type_age_cdf(tokens, head_index, Position::Target, objects);
    if (cfg.subjects && cfg.objects) {
      std::ostringstream tail;
      write_age_csv(os, s);
      write_age_csv(tail, o);
      std::string t = tail.str();
      os << t.substr(t.find('\n') + 1);
    } else {
      write_age_csv(os, cfg.subjects ? s : o);
    }
  });
  (void)err;
  return kExitOk;
}

inline int cmd_fit(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
  std::vector<SeriesPoint> series;
  if (!cfg.input_path.empty()) {
    std::ifstream in(cfg.input_path);
    if (!in) throw Error(ErrorCode::IoError, "cannot read " + cfg.input_path);
    series = read_series_csv(in);
  } else {
    cfg.validate();
    GitRepo repo(cfg.repo);
    auto commits = linearize(repo, cfg.branch);
    auto range = detail::resolve_range(repo, commits, cfg);
    for (const auto& r : detail::cached_rows(cfg, commits, range)) {
      if (r.failed) continue;
      double v = cfg.series == SeriesKind::Types   ? static_cast<double>(r.num_types)
                 : cfg.series == SeriesKind::Rules ? static_cast<double>(r.num_allow_rules)
                                                   : static_cast<double>(r.num_boxes);
      series.push_back({static_cast<double>(r.commit_index), v});
    }
  }
  auto segments = fit_exponential(series, cfg.breakpoints);
  detail::with_output(cfg.out_path, out,
                      [&](std::ostream& os) { write_fit_csv(os, segments); });
  (void)err;
  return kExitOk;
}

inline int cmd_coverage(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
  cfg.validate();
  std::vector<MetricsRow> rows;
  if (!cfg.dir.empty()) {
    auto a = analyze_files(read_policy_dir(cfg.dir, cfg.files), cfg);
    detail::report_diagnostics(a.snapshot.diagnostics, err);
    a.metrics.commit_index = 0;
    rows.push_back(std::move(a.metrics));
  } else {
    GitRepo repo(cfg.repo);
    auto commits = linearize(repo, cfg.branch);
    auto range = detail::resolve_range(repo, commits, cfg);
    rows = detail::cached_rows(cfg, commits, range);
  }
  detail::with_output(cfg.out_path, out, [&](std::ostream& os) {
    os << "commit_index,commit,covered_boxes,universe_boxes,coverage_ratio\n";
    for (const auto& r : rows) {
      if (r.failed) continue;
      os << r.commit_index << ',' << r.commit << ',' << r.covered_boxes << ','
         << r.universe_boxes << ',' << format_decimal(r.coverage_ratio()) << "\n";
    }
  });
  return kExitOk;
}

inline int cmd_contributors(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
  GitRepo repo(cfg.repo);
  auto commits = linearize(repo, cfg.branch);
  auto range = detail::resolve_range(repo, commits, cfg);
  OrgMap orgs;
  if (!cfg.org_map.empty()) {
    std::ifstream in(cfg.org_map);
    if (!in) throw Error(ErrorCode::IoError, "cannot read " + cfg.org_map);
    orgs = OrgMap::load(in);
  }
  std::span<const CommitRecord> selected(commits.data() + range.begin,
                                         range.end - range.begin + 1);
  auto report = attribute_orgs(selected, orgs, cfg.buckets);
  detail::with_output(cfg.out_path, out,
                      [&](std::ostream& os) { write_org_csv(os, report); });
  (void)err;
  return kExitOk;
}

// Rule origins are not cached, so every selected commit is decomposed again.
inline int cmd_filter(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
  cfg.validate();
  if (cfg.keywords.empty())
    throw Error(ErrorCode::InvalidArgument, "at least one --keyword is required");
  struct Row {
    std::int64_t index;
    std::string commit;
    KeywordCounts counts;
    bool failed = false;
  };
  std::vector<Row> rows;
  if (!cfg.dir.empty()) {
    auto a = analyze_files(read_policy_dir(cfg.dir, cfg.files), cfg);
    rows.push_back({0, "", keyword_filter_metrics(a.decomposition, cfg.keywords)});
  } else {
    GitRepo repo(cfg.repo);
    auto commits = linearize(repo, cfg.branch);
    auto range = detail::resolve_range(repo, commits, cfg);
    rows.resize(range.end - range.begin + 1);
    parallel_for(rows.size(), cfg.workers, [&](std::size_t i) {
      const auto& c = commits[range.begin + i];
      rows[i].index = c.commit_index;
      rows[i].commit = c.hash;
      try {
        auto files = extract_snapshot_files(repo, c.hash, cfg.files);
        auto a = analyze_files(std::move(files.files), cfg);
        rows[i].counts = keyword_filter_metrics(a.decomposition, cfg.keywords);
      } catch (const Error& e) {
        if (cfg.strict || e.code() == ErrorCode::InvalidArgument) throw;
        rows[i].failed = true;
      }
    });
  }
  detail::with_output(cfg.out_path, out, [&](std::ostream& os) {
    os << "commit_index,commit,status,keyword_boxes,keyword_rules\n";
    for (const auto& r : rows)
      os << r.index << ',' << r.commit << ',' << (r.failed ? "failed" : "ok") << ','
         << r.counts.boxes << ',' << r.counts.rules << "\n";
  });
  (void)err;
  return kExitOk;
}

// Runs a command, mapping library errors to exit statuses.
inline int run_guarded(const std::function<int()>& command, std::ostream& err) {
  try {
    return command();
  } catch (const Error& e) {
    err << "sebox: " << e.what() << "\n";
    if (e.code() == ErrorCode::MissingWalkData)
      err << "hint: run `sebox walk` over the same range and configuration first\n";
    return exit_code_for(e.code());
  } catch (const std::exception& e) {
    err << "sebox: " << e.what() << "\n";
    return kExitUsage;
  }
}

}  // namespace sebox
