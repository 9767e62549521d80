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

#pragma once

#include <fnmatch.h>

#include <string>
#include <string_view>
#include <vector>

namespace sebox {

enum class FileRole { Catalog, Macros, Policy, Ignored };

// Which files of a policy tree feed which stage. A pattern without '/'
// matches the basename; a pattern with '/' matches the whole relative path
// and its '*' may cross directory separators.
struct FileSetConfig {
  std::vector<std::string> catalog_globs{"security_classes", "access_vectors"};
  std::vector<std::string> macro_globs{"*_macros"};
  std::vector<std::string> policy_globs{"*.te", "attributes"};
  std::vector<std::string> exclude_globs{"prebuilts/*", "tests/*", "compat/*",
                                         "reqd_mask/*", "tools/*"};

  static bool glob_match(std::string_view pattern, std::string_view path) {
    std::string pat(pattern);
    std::string subject(path);
    if (pat.find('/') == std::string::npos) {
      auto slash = subject.rfind('/');
      if (slash != std::string::npos) subject = subject.substr(slash + 1);
    }
    return fnmatch(pat.c_str(), subject.c_str(), 0) == 0;
  }

  static bool any_match(const std::vector<std::string>& globs,
                        std::string_view path) {
    for (const auto& g : globs)
      if (glob_match(g, path)) return true;
    return false;
  }

  FileRole classify(std::string_view path) const {
    if (any_match(exclude_globs, path)) return FileRole::Ignored;
    if (any_match(catalog_globs, path)) return FileRole::Catalog;
    if (any_match(macro_globs, path)) return FileRole::Macros;
    if (any_match(policy_globs, path)) return FileRole::Policy;
    return FileRole::Ignored;
  }

  bool selects(std::string_view path) const {
    return classify(path) != FileRole::Ignored;
  }

  // Stable text form, used for cache digests.
  std::string canonical() const {
    std::string out;
    auto put = [&](const char* tag, const std::vector<std::string>& v) {
      out += tag;
      for (const auto& s : v) out += "\x1f" + s;
      out += "\x1e";
    };
    put("catalog", catalog_globs);
    put("macros", macro_globs);
    put("policy", policy_globs);
    put("exclude", exclude_globs);
    return out;
  }
};

}  // namespace sebox
