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

#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <random>

#include "sebox/cache.hpp"
#include "support/fixtures.hpp"

namespace sebox {
namespace {

namespace fs = std::filesystem;

TEST(Fnv1a64, KnownVectors) {
  EXPECT_EQ(fnv1a64(""), 0xcbf29ce484222325ULL);
  EXPECT_EQ(fnv1a64("a"), 0xaf63dc4c8601ec8cULL);
  EXPECT_EQ(fnv1a64("foobar"), 0x85944171f73967e8ULL);
}

TEST(Gzip, RoundTripAndDeterministic) {
  std::mt19937_64 rng(1);
  for (std::size_t n : {0u, 1u, 100u, 70000u}) {
    std::string data;
    for (std::size_t i = 0; i < n; ++i) data += static_cast<char>('a' + rng() % 5);
    auto a = gzip_compress(data);
    auto b = gzip_compress(data);
    EXPECT_EQ(a, b);
    ASSERT_GE(a.size(), 10u);
    EXPECT_EQ(static_cast<unsigned char>(a[0]), 0x1f);
    EXPECT_EQ(static_cast<unsigned char>(a[1]), 0x8b);
    EXPECT_EQ(a.substr(4, 4), std::string(4, '\0'));  // mtime
    EXPECT_EQ(gzip_decompress(a), data);
  }
  EXPECT_THROW(gzip_decompress("not gzip at all"), Error);
}

TEST(ConfigDigest, TracksEverySetting) {
  FileSetConfig base;
  auto d0 = config_digest(base, ParseOptions{false});
  EXPECT_EQ(d0.size(), 16u);
  EXPECT_EQ(d0, config_digest(FileSetConfig{}, ParseOptions{false}));
  EXPECT_NE(d0, config_digest(base, ParseOptions{true}));
  auto globs = base;
  globs.policy_globs.push_back("*.cil");
  EXPECT_NE(d0, config_digest(globs, ParseOptions{false}));
  auto excl = base;
  excl.exclude_globs.clear();
  EXPECT_NE(d0, config_digest(excl, ParseOptions{false}));
  // Moving a glob between roles must also change the digest.
  FileSetConfig a, b;
  a.catalog_globs = {"x"};
  a.macro_globs = {};
  b.catalog_globs = {};
  b.macro_globs = {"x"};
  EXPECT_NE(config_digest(a, ParseOptions{}), config_digest(b, ParseOptions{}));
}

CacheEntry sample_entry() {
  CacheEntry e;
  e.box_dump = "a b file read\nb a file read\n";
  e.metrics.commit = "abc";
  e.metrics.commit_index = 4;
  e.metrics.num_allow_rules = 2;
  e.metrics.num_boxes = 2;
  e.metrics.allow_rule_boxes = 2;
  e.metrics.bpr_histogram[1] = 2;
  e.metrics.rpb_histogram[2] = 1;
  return e;
}

TEST(ResultCache, StoreThenLoad) {
  testing::TempDir tmp;
  ResultCache cache(tmp.path(), "0011223344556677");
  EXPECT_FALSE(cache.load("abc"));
  EXPECT_EQ(cache.misses(), 1u);
  auto e = sample_entry();
  cache.store("abc", e);
  auto got = cache.load("abc");
  ASSERT_TRUE(got);
  EXPECT_EQ(got->box_dump, e.box_dump);
  EXPECT_EQ(got->metrics, e.metrics);
  EXPECT_EQ(cache.load_metrics("abc"), e.metrics);
  EXPECT_EQ(cache.hits(), 2u);
  EXPECT_TRUE(fs::exists(tmp.path() / "0011223344556677" / "abc.boxes.gz"));
  EXPECT_TRUE(fs::exists(tmp.path() / "0011223344556677" / "abc.json"));
}

TEST(ResultCache, BitReproducibleAndNoTempFiles) {
  testing::TempDir a, b;
  ResultCache ca(a.path(), "d"), cb(b.path(), "d");
  ca.store("h", sample_entry());
  cb.store("h", sample_entry());
  ca.store("h", sample_entry());
  for (const char* name : {"h.boxes.gz", "h.json"}) {
    std::ifstream fa(a.path() / "d" / name, std::ios::binary),
        fb(b.path() / "d" / name, std::ios::binary);
    std::string sa{std::istreambuf_iterator<char>(fa), {}};
    std::string sb{std::istreambuf_iterator<char>(fb), {}};
    EXPECT_EQ(sa, sb) << name;
  }
  std::size_t n = 0;
  for (const auto& entry : fs::directory_iterator(a.path() / "d")) {
    ++n;
    EXPECT_EQ(entry.path().string().find(".tmp"), std::string::npos);
  }
  EXPECT_EQ(n, 2u);
}

TEST(ResultCache, CorruptEntryIsAMiss) {
  testing::TempDir tmp;
  ResultCache cache(tmp.path(), "d");
  cache.store("h", sample_entry());
  std::ofstream(tmp.path() / "d" / "h.json") << "{ truncated";
  EXPECT_FALSE(cache.load("h"));
  EXPECT_FALSE(cache.load_metrics("h"));
  EXPECT_EQ(cache.hits(), 0u);
}

TEST(ResultCache, DigestsAreSeparateNamespaces) {
  testing::TempDir tmp;
  ResultCache a(tmp.path(), "one"), b(tmp.path(), "two");
  a.store("h", sample_entry());
  EXPECT_TRUE(a.load("h"));
  EXPECT_FALSE(b.load("h"));
}

TEST(ResultCache, DefaultRootPrecedence) {
  ::unsetenv(kCacheDirEnv);
  EXPECT_EQ(ResultCache::default_root(), fs::path(".sebox-cache"));
  ::setenv(kCacheDirEnv, "/tmp/from-env", 1);
  EXPECT_EQ(ResultCache::default_root(), fs::path("/tmp/from-env"));
  EXPECT_EQ(ResultCache::default_root("/explicit"), fs::path("/explicit"));
  ::unsetenv(kCacheDirEnv);
}

}  // namespace
}  // namespace sebox
