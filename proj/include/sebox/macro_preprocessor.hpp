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

// The m4 subset used by sepolicy sources: define() with positional
// parameters, nested invocation and backquote quoting. Other m4 builtins are
// reported and passed through verbatim.

#pragma once

#include <array>
#include <cctype>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "sebox/error.hpp"
#include "sebox/policy_model.hpp"

namespace sebox {

struct MacroDef {
  std::string body;
  int max_param = 0;  // highest $k referenced in body
  std::string file;
  int line = 0;
};

struct MacroTable {
  std::map<std::string, MacroDef, std::less<>> defs;
  std::size_t redefinitions = 0;
  std::vector<Diagnostic> warnings;

  bool contains(std::string_view name) const {
    return defs.find(name) != defs.end();
  }
  const MacroDef* find(std::string_view name) const {
    auto it = defs.find(name);
    return it == defs.end() ? nullptr : &it->second;
  }
};

// Where an output line came from: the input line of the outermost invocation
// and the macros expanded to produce it, outermost first.
struct LineOrigin {
  int source_line = 0;
  std::vector<std::string> chain;

  friend bool operator==(const LineOrigin&, const LineOrigin&) = default;
};

struct ExpandResult {
  std::string text;
  std::vector<LineOrigin> lines;  // one per output line
  std::vector<Diagnostic> warnings;
};

inline constexpr int kMaxExpansionDepth = 64;

namespace detail {

inline bool is_ident_start(char c) {
  return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || c == '_';
}
inline bool is_ident_char(char c) {
  return is_ident_start(c) || (c >= '0' && c <= '9');
}
inline bool is_blank(char c) { return c == ' ' || c == '\t'; }

inline bool is_m4_builtin(std::string_view w) {
  static constexpr std::array<std::string_view, 24> kBuiltins = {
      "define",  "undefine",    "ifelse",    "ifdef",   "include",
      "sinclude", "divert",     "undivert",  "changequote", "changecom",
      "pushdef", "popdef",      "indir",     "builtin", "eval",
      "incr",    "decr",        "translit",  "substr",  "index",
      "len",     "errprint",    "esyscmd",   "syscmd"};
  for (auto b : kBuiltins)
    if (b == w) return true;
  return false;
}

struct ArgList {
  std::vector<std::string> args;
  std::size_t end = 0;  // one past the closing ')'
};

// Collects a parenthesized m4 argument list starting at text[open] == '('.
// One level of quotes is stripped; commas split only at paren depth 0;
// leading unquoted whitespace of each argument is dropped.
inline ArgList collect_args(std::string_view text, std::size_t open,
                            const std::string& file, int line) {
  ArgList out;
  std::string cur;
  bool leading = true;
  int depth = 0;
  std::size_t i = open + 1;
  auto malformed = [&](const char* what) {
    return Error(ErrorCode::MalformedDefine,
                 file + ":" + std::to_string(line) + ": " + what);
  };
  while (true) {
    if (i >= text.size()) throw malformed("unbalanced parentheses");
    char c = text[i];
    if (c == '`') {
      int q = 1;
      ++i;
      while (true) {
        if (i >= text.size()) throw malformed("unbalanced quotes");
        char d = text[i];
        if (d == '`') {
          ++q;
        } else if (d == '\'') {
          if (--q == 0) break;
        }
        cur.push_back(d);
        ++i;
      }
      ++i;
      leading = false;
      continue;
    }
    if (leading && (is_blank(c) || c == '\n' || c == '\r')) {
      ++i;
      continue;
    }
    leading = false;
    if (c == '(') {
      ++depth;
    } else if (c == ')') {
      if (depth == 0) {
        out.args.push_back(std::move(cur));
        out.end = i + 1;
        return out;
      }
      --depth;
    } else if (c == ',' && depth == 0) {
      out.args.push_back(std::move(cur));
      cur.clear();
      leading = true;
      ++i;
      continue;
    }
    cur.push_back(c);
    ++i;
  }
}

inline int max_param_index(std::string_view body) {
  int best = 0;
  for (std::size_t i = 0; i + 1 < body.size(); ++i)
    if (body[i] == '$' && body[i + 1] >= '1' && body[i + 1] <= '9')
      best = std::max(best, body[i + 1] - '0');
  return best;
}

inline std::string substitute(std::string_view body, std::string_view name,
                              const std::vector<std::string>& args) {
  std::string out;
  out.reserve(body.size());
  for (std::size_t i = 0; i < body.size(); ++i) {
    if (body[i] != '$' || i + 1 == body.size()) {
      out.push_back(body[i]);
      continue;
    }
    char n = body[i + 1];
    if (n >= '0' && n <= '9') {
      int k = n - '0';
      if (k == 0)
        out += name;
      else if (static_cast<std::size_t>(k) <= args.size())
        out += args[k - 1];
      ++i;
    } else if (n == '#') {
      out += std::to_string(args.size());
      ++i;
    } else if (n == '*' || n == '@') {
      for (std::size_t a = 0; a < args.size(); ++a) {
        if (a) out.push_back(',');
        if (n == '@') out += "`" + args[a] + "'";
        else out += args[a];
      }
      ++i;
    } else {
      out.push_back('$');
    }
  }
  return out;
}

class Expander {
 public:
  Expander(const MacroTable& table, std::string file)
      : table_(table), file_(std::move(file)) {
    chains_.emplace_back();
  }

  ExpandResult run(std::string_view text) {
    scan(text, 0, 0, /*top_level=*/true, 1);
    return finish();
  }

 private:
  void emit(char c, std::uint32_t chain, int src) {
    if (chain != 0 && is_blank(c) && !out_.empty() && is_blank(out_.back()) &&
        chain_of_.back() != 0)
      return;
    if (chain != 0 && c == '\t') c = ' ';
    out_.push_back(c);
    chain_of_.push_back(chain);
    src_of_.push_back(src);
  }

  std::uint32_t push_chain(std::uint32_t parent, const std::string& name) {
    auto chain = chains_[parent];
    chain.push_back(name);
    chains_.push_back(std::move(chain));
    return static_cast<std::uint32_t>(chains_.size() - 1);
  }

  // Top-level text keeps source line numbers and treats quotes as ordinary
  // characters; macro output is attributed to the invocation's line.
  void scan(std::string_view in, std::uint32_t chain, int depth, bool top_level,
            int line) {
    std::size_t i = 0;
    while (i < in.size()) {
      char c = in[i];
      if (c == '#') {
        while (i < in.size() && in[i] != '\n') emit(in[i++], chain, line);
        continue;
      }
      if (c == '`' && !top_level) {
        int q = 1;
        ++i;
        while (i < in.size()) {
          if (in[i] == '`') ++q;
          if (in[i] == '\'' && --q == 0) break;
          emit(in[i++], chain, line);
        }
        ++i;
        continue;
      }
      if (is_ident_start(c) && (i == 0 || !is_ident_char(in[i - 1]))) {
        std::size_t start = i;
        while (i < in.size() && is_ident_char(in[i])) ++i;
        std::string_view word = in.substr(start, i - start);
        bool call = i < in.size() && in[i] == '(';
        if (call && is_m4_builtin(word)) {
          auto args = collect_args(in, i, file_, line);
          warnings_.push_back({file_, line,
                               "unsupported m4 builtin '" + std::string(word) +
                                   "' passed through verbatim"});
          for (std::size_t k = start; k < args.end; ++k) {
            emit(in[k], chain, line);
            if (top_level && in[k] == '\n') ++line;
          }
          i = args.end;
          continue;
        }
        if (const MacroDef* def = table_.find(word)) {
          std::vector<std::string> args;
          int call_line = line;
          if (call) {
            auto collected = collect_args(in, i, file_, line);
            if (top_level)
              for (std::size_t k = i; k < collected.end; ++k)
                if (in[k] == '\n') ++line;
            i = collected.end;
            args = std::move(collected.args);
          }
          if (static_cast<int>(args.size()) < def->max_param)
            throw Error(ErrorCode::ArityMismatch,
                        file_ + ":" + std::to_string(call_line) + ": macro '" +
                            std::string(word) + "' needs " +
                            std::to_string(def->max_param) + " arguments, got " +
                            std::to_string(args.size()));
          if (depth + 1 > kMaxExpansionDepth)
            throw Error(ErrorCode::ExpansionDepthExceeded,
                        file_ + ":" + std::to_string(call_line) +
                            ": expanding '" + std::string(word) + "'");
          std::string body = substitute(def->body, word, args);
          scan(body, push_chain(chain, std::string(word)), depth + 1, false,
               call_line);
          continue;
        }
        for (std::size_t k = start; k < i; ++k) emit(in[k], chain, line);
        continue;
      }
      emit(c, chain, line);
      if (top_level && c == '\n') ++line;
      ++i;
    }
  }

  ExpandResult finish() {
    ExpandResult r;
    std::size_t begin = 0;
    auto close_line = [&](std::size_t end) {
      LineOrigin origin;
      origin.source_line = begin < src_of_.size() ? src_of_[begin] : 1;
      std::uint32_t deepest = 0;
      for (std::size_t k = begin; k < end; ++k)
        if (chains_[chain_of_[k]].size() > chains_[deepest].size())
          deepest = chain_of_[k];
      origin.chain = chains_[deepest];
      r.lines.push_back(std::move(origin));
    };
    for (std::size_t k = 0; k < out_.size(); ++k) {
      if (out_[k] == '\n') {
        close_line(k + 1);
        begin = k + 1;
      }
    }
    if (begin < out_.size() || out_.empty()) close_line(out_.size());
    r.text = std::move(out_);
    r.warnings = std::move(warnings_);
    return r;
  }

  const MacroTable& table_;
  std::string file_;
  std::string out_;
  std::vector<std::uint32_t> chain_of_;
  std::vector<int> src_of_;
  std::vector<std::vector<std::string>> chains_;
  std::vector<Diagnostic> warnings_;
};

}  // namespace detail

// Reads every define(`name', `body') in the given macro files. A later
// definition replaces an earlier one and is counted in `redefinitions`.
inline MacroTable load_macros(std::span<const SourceFile> sources) {
  MacroTable table;
  for (const auto& src : sources) {
    std::string_view text = src.text;
    int line = 1;
    std::size_t i = 0;
    while (i < text.size()) {
      char c = text[i];
      if (c == '\n') {
        ++line;
        ++i;
        continue;
      }
      if (c == '#') {
        while (i < text.size() && text[i] != '\n') ++i;
        continue;
      }
      if (c == '`') {
        // Stray top-level quoted text; skip it as a unit.
        int q = 1;
        std::size_t j = i + 1;
        for (; j < text.size() && q > 0; ++j) {
          if (text[j] == '`') ++q;
          else if (text[j] == '\'') --q;
          else if (text[j] == '\n') ++line;
        }
        if (q != 0)
          throw Error(ErrorCode::MalformedDefine,
                      src.path + ":" + std::to_string(line) +
                          ": unbalanced quotes");
        i = j;
        continue;
      }
      if (!detail::is_ident_start(c) ||
          (i > 0 && detail::is_ident_char(text[i - 1]))) {
        ++i;
        continue;
      }
      std::size_t start = i;
      while (i < text.size() && detail::is_ident_char(text[i])) ++i;
      std::string_view word = text.substr(start, i - start);
      if (word != "define" || i >= text.size() || text[i] != '(') continue;
      int def_line = line;
      auto collected = detail::collect_args(text, i, src.path, line);
      for (std::size_t k = i; k < collected.end; ++k)
        if (text[k] == '\n') ++line;
      i = collected.end;
      auto& args = collected.args;
      std::string name = args.empty() ? std::string() : args[0];
      while (!name.empty() && std::isspace(static_cast<unsigned char>(name.back())))
        name.pop_back();
      if (name.empty())
        throw Error(ErrorCode::MalformedDefine,
                    src.path + ":" + std::to_string(def_line) +
                        ": define without a name");
      MacroDef def;
      def.body = args.size() > 1 ? args[1] : std::string();
      def.max_param = detail::max_param_index(def.body);
      def.file = src.path;
      def.line = def_line;
      auto [it, inserted] = table.defs.insert_or_assign(name, std::move(def));
      if (!inserted) {
        ++table.redefinitions;
        table.warnings.push_back(
            {src.path, def_line, "macro '" + name + "' redefined"});
      }
    }
  }
  return table;
}

// Expands every macro invocation in `text` until no defined name remains
// outside quotes and comments.
inline ExpandResult expand(std::string_view text, const MacroTable& table,
                           const std::string& file = {}) {
  return detail::Expander(table, file).run(text);
}

}  // namespace sebox
