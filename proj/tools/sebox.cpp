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

#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "sebox/app.hpp"

namespace {

constexpr const char* kCsvHelp = R"(
Metrics CSV (walk), preceded by "# sebox metrics schema 1":
  commit_index,commit,author_timestamp,status,num_allow_rules,
  num_neverallow_rules,num_rules_total,num_boxes,num_neverallow_boxes,
  num_assertion_violations,num_types,num_attributes,num_classes,
  num_permissions,avg_boxes_per_rule,coverage_ratio,bpr_0,bpr_1,bpr_2_9,
  bpr_10_99,bpr_100_999,bpr_1000_9999,bpr_10000_99999,bpr_100000_plus,rpb
Delta CSV (walk): commit_index,commit,delta_rules,delta_boxes,ratio
Age CSV: position,type,last_changed_index,age,cdf
Fit CSV: segment,start_index,end_index,points,ln_a,b,rms_residual
Coverage CSV: commit_index,commit,covered_boxes,universe_boxes,coverage_ratio
Contributors CSV: bucket,organization,commits
Filter CSV: commit_index,commit,status,keyword_boxes,keyword_rules

Exit status: 0 success, 1 usage, 2 data not found, 3 parse failure (--strict).
The cache directory defaults to $SEBOX_CACHE_DIR, then ./.sebox-cache.)";

struct GlobOptions {
  std::vector<std::string> catalog, macros, policy, exclude;
  bool no_default_excludes = false;
};

void add_common(CLI::App* sub, sebox::RunConfig& cfg, GlobOptions& globs,
                bool snapshot, bool history) {
  sub->add_option("-o,--out", cfg.out_path, "Write the report here instead of stdout");
  sub->add_flag("--strict", cfg.strict, "Abort on the first parse error");
  sub->add_option("--catalog-glob", globs.catalog, "Class catalog file globs");
  sub->add_option("--macro-glob", globs.macros, "Macro definition file globs");
  sub->add_option("--policy-glob", globs.policy, "Policy file globs");
  sub->add_option("--exclude-glob", globs.exclude, "Excluded path globs");
  sub->add_flag("--no-default-excludes", globs.no_default_excludes,
                "Drop the built-in exclude globs");
  sub->add_option("--repo", cfg.repo, "Path to the policy git repository");
  sub->add_option("--branch", cfg.branch, "Branch to linearize")->capture_default_str();
  sub->add_option("--cache-dir", cfg.cache_dir, "Result cache directory");
  sub->add_option("-j,--workers", cfg.workers, "Worker threads")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);
  if (snapshot) {
    sub->add_option("--dir", cfg.dir, "Analyze a plain policy directory");
    sub->add_option("--commit", cfg.commit, "Commit hash or ref (default: branch head)");
  }
  if (history) {
    sub->add_option("--from", cfg.from, "First commit (index or hash)");
    sub->add_option("--to", cfg.to, "Last commit (index or hash)");
  }
}

void apply_globs(sebox::RunConfig& cfg, const GlobOptions& g) {
  if (!g.catalog.empty()) cfg.files.catalog_globs = g.catalog;
  if (!g.macros.empty()) cfg.files.macro_globs = g.macros;
  if (!g.policy.empty()) cfg.files.policy_globs = g.policy;
  if (g.no_default_excludes) cfg.files.exclude_globs.clear();
  for (const auto& e : g.exclude) cfg.files.exclude_globs.push_back(e);
}

sebox::ReleaseBucket parse_bucket(const std::string& spec) {
  auto a = spec.rfind(':');
  auto b = a == std::string::npos ? a : spec.rfind(':', a - 1);
  if (b == std::string::npos || b == 0)
    throw sebox::Error(sebox::ErrorCode::InvalidArgument,
                       "bucket must be LABEL:START:END, got " + spec);
  try {
    return {spec.substr(0, b), std::stoll(spec.substr(b + 1, a - b - 1)),
            std::stoll(spec.substr(a + 1))};
  } catch (const std::logic_error&) {
    throw sebox::Error(sebox::ErrorCode::InvalidArgument, "bad bucket " + spec);
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Box-based metrics for SELinux-style policy repositories"};
  app.footer(kCsvHelp);
  app.require_subcommand(1);

  sebox::RunConfig cfg;
  GlobOptions globs;
  std::vector<std::string> bucket_specs;
  std::string series = "boxes";
  std::string position = "both";

  auto* analyze = app.add_subcommand("analyze", "Metrics for one snapshot as JSON");
  add_common(analyze, cfg, globs, true, false);
  analyze->add_option("--dump", cfg.dump_path, "Write sorted final boxes here");
  analyze->add_option("--provenance-dump", cfg.provenance_dump_path,
                      "Write boxes with their originating rules here");

  auto* walk = app.add_subcommand("walk", "Per-commit metrics and delta CSVs");
  add_common(walk, cfg, globs, false, true);
  walk->add_option("--delta-out", cfg.delta_out_path, "Delta CSV path");
  walk->add_option("--commits-out", cfg.commits_out_path,
                   "Write commit records as JSON lines here");
  walk->add_flag("--include-neverallow", cfg.include_neverallow,
                 "Count neverallow rules in rule deltas");

  auto* query = app.add_subcommand("query-box", "Rules producing one box");
  add_common(query, cfg, globs, true, false);
  query->add_option("box", cfg.box_spec, "\"subject object class perm\"")->required();

  auto* age = app.add_subcommand("age", "Type age distribution at the range end");
  add_common(age, cfg, globs, false, true);
  age->add_option("--position", position, "subject, object or both")
      ->check(CLI::IsMember({"subject", "object", "both"}))
      ->capture_default_str();

  auto* fit = app.add_subcommand("fit", "Piecewise exponential growth fit");
  add_common(fit, cfg, globs, false, true);
  fit->add_option("--series", series, "types, rules or boxes")
      ->check(CLI::IsMember({"types", "rules", "boxes"}))
      ->capture_default_str();
  fit->add_option("--input", cfg.input_path, "index,value CSV instead of walk data");
  fit->add_option("--breakpoint", cfg.breakpoints, "Segment boundary (repeatable)");

  auto* coverage = app.add_subcommand("coverage", "Covered share of the box universe");
  add_common(coverage, cfg, globs, false, true);
  coverage->add_option("--dir", cfg.dir, "Analyze a plain policy directory");

  auto* contributors = app.add_subcommand("contributors", "Commits per organization");
  add_common(contributors, cfg, globs, false, true);
  contributors->add_option("--org-map", cfg.org_map, "domain<TAB>organization file");
  contributors->add_option("--bucket", bucket_specs, "LABEL:START:END (repeatable)");

  auto* filter = app.add_subcommand("filter", "Boxes and rules touching keyword types");
  add_common(filter, cfg, globs, false, true);
  filter->add_option("--dir", cfg.dir, "Analyze a plain policy directory");
  filter->add_option("-k,--keyword", cfg.keywords, "Substring of type names (repeatable)")
      ->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int rc = app.exit(e);
    return rc == 0 ? sebox::kExitOk : sebox::kExitUsage;
  }

  return sebox::run_guarded(
      [&] {
        apply_globs(cfg, globs);
        for (const auto& b : bucket_specs) cfg.buckets.push_back(parse_bucket(b));
        cfg.series = series == "types"   ? sebox::SeriesKind::Types
                     : series == "rules" ? sebox::SeriesKind::Rules
                                         : sebox::SeriesKind::Boxes;
        cfg.subjects = position != "object";
        cfg.objects = position != "subject";
        auto& out = std::cout;
        auto& err = std::cerr;
        if (*analyze) return sebox::cmd_analyze(cfg, out, err);
        if (*walk) return sebox::cmd_walk(cfg, out, err);
        if (*query) return sebox::cmd_query_box(cfg, out, err);
        if (*age) return sebox::cmd_age(cfg, out, err);
        if (*fit) return sebox::cmd_fit(cfg, out, err);
        if (*coverage) return sebox::cmd_coverage(cfg, out, err);
        if (*contributors) return sebox::cmd_contributors(cfg, out, err);
        return sebox::cmd_filter(cfg, out, err);
      },
      std::cerr);
}
