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

// Content-addressed per-commit result store.
//
//   <root>/<config digest>/<commit hash>.boxes.gz   sorted box lines, gzip
//   <root>/<config digest>/<commit hash>.json       MetricsRow
//
// Both files are written to a temporary name and renamed into place, the
// JSON sidecar last, so a reader that finds the sidecar finds a complete
// entry.

#pragma once

#include <unistd.h>
#include <zlib.h>

#include <atomic>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <thread>

#include <json.hpp>

#include "sebox/error.hpp"
#include "sebox/file_set.hpp"
#include "sebox/metrics_engine.hpp"
#include "sebox/policy_parser.hpp"
#include "sebox/report.hpp"

namespace sebox {

inline constexpr int kCacheSchemaVersion = 1;
inline constexpr const char* kCacheDirEnv = "SEBOX_CACHE_DIR";

inline std::uint64_t fnv1a64(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

// Digest of every setting that changes what a commit decomposes to.
inline std::string config_digest(const FileSetConfig& files,
                                 const ParseOptions& options) {
  std::string text = files.canonical();
  text += options.strict ? "strict" : "lenient";
  text += "\x1e" + std::to_string(kCacheSchemaVersion);
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx",
                static_cast<unsigned long long>(fnv1a64(text)));
  return buf;
}

// Gzip with a zero mtime, so equal input gives equal bytes.
inline std::string gzip_compress(std::string_view data) {
  z_stream zs{};
  if (deflateInit2(&zs, Z_BEST_COMPRESSION, Z_DEFLATED, 15 + 16, 8,
                   Z_DEFAULT_STRATEGY) != Z_OK)
    throw Error(ErrorCode::IoError, "deflateInit2 failed");
  gz_header header{};
  header.os = 3;
  deflateSetHeader(&zs, &header);
  std::string out;
  out.resize(deflateBound(&zs, data.size()) + 32);
  zs.next_in = reinterpret_cast<Bytef*>(const_cast<char*>(data.data()));
  zs.avail_in = static_cast<uInt>(data.size());
  zs.next_out = reinterpret_cast<Bytef*>(out.data());
  zs.avail_out = static_cast<uInt>(out.size());
  int rc = deflate(&zs, Z_FINISH);
  deflateEnd(&zs);
  if (rc != Z_STREAM_END) throw Error(ErrorCode::IoError, "deflate failed");
  out.resize(zs.total_out);
  return out;
}

inline std::string gzip_decompress(std::string_view data) {
  z_stream zs{};
  if (inflateInit2(&zs, 15 + 16) != Z_OK)
    throw Error(ErrorCode::IoError, "inflateInit2 failed");
  zs.next_in = reinterpret_cast<Bytef*>(const_cast<char*>(data.data()));
  zs.avail_in = static_cast<uInt>(data.size());
  std::string out;
  char buf[65536];
  int rc = Z_OK;
  while (rc != Z_STREAM_END) {
    zs.next_out = reinterpret_cast<Bytef*>(buf);
    zs.avail_out = sizeof buf;
    rc = inflate(&zs, Z_NO_FLUSH);
    if (rc != Z_OK && rc != Z_STREAM_END) {
      inflateEnd(&zs);
      throw Error(ErrorCode::IoError, "corrupt gzip data");
    }
    out.append(buf, sizeof buf - zs.avail_out);
    if (rc == Z_OK && zs.avail_in == 0 && zs.avail_out != 0) {
      inflateEnd(&zs);
      throw Error(ErrorCode::IoError, "truncated gzip data");
    }
  }
  inflateEnd(&zs);
  return out;
}

struct CacheEntry {
  std::string box_dump;  // sorted "s o c p" lines
  MetricsRow metrics;
};

class ResultCache {
 public:
  ResultCache(std::filesystem::path root, std::string digest)
      : dir_(std::move(root) / std::move(digest)) {}

  // Explicit directory, else $SEBOX_CACHE_DIR, else ".sebox-cache".
  static std::filesystem::path default_root(const std::string& configured = {}) {
    if (!configured.empty()) return configured;
    if (const char* env = std::getenv(kCacheDirEnv); env && *env) return env;
    return ".sebox-cache";
  }

  const std::filesystem::path& dir() const { return dir_; }

  std::optional<CacheEntry> load(const std::string& hash) {
    auto json_path = dir_ / (hash + ".json");
    auto box_path = dir_ / (hash + ".boxes.gz");
    std::error_code ec;
    if (!std::filesystem::exists(json_path, ec) ||
        !std::filesystem::exists(box_path, ec)) {
      ++misses_;
      return std::nullopt;
    }
    try {
      CacheEntry e;
      e.metrics = metrics_from_json(nlohmann::json::parse(read_file(json_path)));
      e.box_dump = gzip_decompress(read_file(box_path));
      ++hits_;
      return e;
    } catch (const std::exception&) {
      ++misses_;
      return std::nullopt;
    }
  }

  // Metrics only; skips decompressing the box dump.
  std::optional<MetricsRow> load_metrics(const std::string& hash) {
    auto json_path = dir_ / (hash + ".json");
    std::error_code ec;
    if (!std::filesystem::exists(json_path, ec)) {
      ++misses_;
      return std::nullopt;
    }
    try {
      auto row = metrics_from_json(nlohmann::json::parse(read_file(json_path)));
      ++hits_;
      return row;
    } catch (const std::exception&) {
      ++misses_;
      return std::nullopt;
    }
  }

  void store(const std::string& hash, const CacheEntry& entry) {
    std::error_code ec;
    std::filesystem::create_directories(dir_, ec);
    if (ec) throw Error(ErrorCode::IoError, dir_.string() + ": " + ec.message());
    write_atomic(dir_ / (hash + ".boxes.gz"), gzip_compress(entry.box_dump));
    write_atomic(dir_ / (hash + ".json"), to_json(entry.metrics).dump(1) + "\n");
  }

  std::size_t hits() const { return hits_; }
  std::size_t misses() const { return misses_; }

 private:
  static std::string read_file(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw Error(ErrorCode::IoError, "cannot read " + p.string());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
  }

  static void write_atomic(const std::filesystem::path& p, std::string_view data) {
    static std::atomic<unsigned> counter{0};
    auto tmp = p;
    tmp += ".tmp." + std::to_string(::getpid()) + "." +
           std::to_string(counter.fetch_add(1));
    {
      std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
      out.write(data.data(), static_cast<std::streamsize>(data.size()));
      if (!out) throw Error(ErrorCode::IoError, "cannot write " + tmp.string());
    }
    std::error_code ec;
    std::filesystem::rename(tmp, p, ec);
    if (ec) {
      std::filesystem::remove(tmp, ec);
      throw Error(ErrorCode::IoError, "cannot rename into " + p.string());
    }
  }

  std::filesystem::path dir_;
  std::atomic<std::size_t> hits_{0};
  std::atomic<std::size_t> misses_{0};
};

}  // namespace sebox
