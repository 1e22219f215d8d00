#include <gtest/gtest.h>

#include <filesystem>
#include <random>
#include <thread>

#include "occmap/vector_cache.hpp"
#include "test_support.hpp"

using namespace occmap;
using namespace occmap::embedding;
using occmap::testing::TempDir;

namespace {

EmbeddingVector random_vector(std::mt19937_64& rng, std::size_t dim, const std::string& tag) {
  std::normal_distribution<double> g;
  std::vector<double> raw(dim);
  for (auto& x : raw) x = g(rng);
  return EmbeddingVector::normalized(std::span<const double>(raw), tag);
}

}  // namespace

TEST(VectorCacheTest, ChecksumIsZlibCrc32) {
  EXPECT_EQ(cache_detail::crc("123456789"), 0xCBF43926u);
}

TEST(VectorCacheTest, RecordByteLayout) {
  const EmbeddingVector v({1.0f, -2.0f}, "t");
  const std::string rec = encode_cache_record(0x0102030405060708ULL, v);
  const std::string expected_body = std::string("REC1") + "\x08\x07\x06\x05\x04\x03\x02\x01" +
                                    std::string("\x01\x00", 2) + "t" + std::string("\x02\x00\x00\x00", 4) +
                                    std::string("\x00\x00\x80\x3f", 4) + std::string("\x00\x00\x00\xc0", 4);
  ASSERT_EQ(rec.size(), expected_body.size() + 4);
  EXPECT_EQ(rec.substr(0, expected_body.size()), expected_body);
  const auto decoded = decode_cache_record(rec);
  ASSERT_TRUE(decoded);
  EXPECT_EQ(decoded->key, 0x0102030405060708ULL);
  EXPECT_EQ(decoded->vector, v);
  EXPECT_EQ(decoded->size, rec.size());
}

TEST(VectorCacheTest, HitsAreBitIdenticalAcrossReopen) {
  TempDir dir;
  const auto path = (dir / "v.occv").string();
  std::mt19937_64 rng(11);
  std::vector<EmbeddingVector> vs;
  {
    VectorCache cache(path);
    for (std::uint64_t k = 0; k < 200; ++k) {
      vs.push_back(random_vector(rng, 1 + k % 37, k % 2 ? "a" : "b"));
      EXPECT_TRUE(cache.put(k, vs.back()));
    }
    EXPECT_FALSE(cache.put(5, vs[5]));
    EXPECT_EQ(cache.size(), 200u);
  }
  VectorCache cache(path);
  EXPECT_FALSE(cache.stats().rebuilt_index);
  for (std::uint64_t k = 0; k < 200; ++k) {
    const auto hit = cache.get(k, vs[k].provider_tag());
    ASSERT_TRUE(hit);
    ASSERT_EQ(hit->dimension(), vs[k].dimension());
    EXPECT_EQ(std::memcmp(hit->values().data(), vs[k].values().data(), 4 * vs[k].dimension()), 0);
    EXPECT_FALSE(cache.get(k, "other-tag"));
  }
}

TEST(VectorCacheTest, MissingFooterIsRebuiltAndTornTailDropped) {
  TempDir dir;
  const auto path = dir / "v.occv";
  std::mt19937_64 rng(3);
  const auto a = random_vector(rng, 8, "t");
  const auto b = random_vector(rng, 8, "t");
  {
    VectorCache cache(path.string());
    cache.put(1, a);
    cache.put(2, b);
  }
  // Drop the footer trailer and add half of a record, as after a crash.
  std::string bytes = occmap::testing::read_file(path);
  const std::string data = bytes.substr(0, bytes.size() - 8);
  const std::string partial = encode_cache_record(3, a).substr(0, 20);
  occmap::testing::write_file(path, data + partial);
  {
    VectorCache cache(path.string());
    const auto s = cache.stats();
    EXPECT_TRUE(s.rebuilt_index);
    EXPECT_GT(s.discarded_tail_bytes, 0u);
    EXPECT_EQ(cache.size(), 2u);
    EXPECT_EQ(*cache.get(1, "t"), a);
    EXPECT_EQ(*cache.get(2, "t"), b);
    EXPECT_FALSE(cache.get(3, "t"));
  }
  // Clean reopen afterwards uses the rewritten footer.
  VectorCache again(path.string());
  EXPECT_FALSE(again.stats().rebuilt_index);
  EXPECT_EQ(again.size(), 2u);
}

TEST(VectorCacheTest, CorruptRecordIsAMissAndCanBeRewritten) {
  TempDir dir;
  const auto path = dir / "v.occv";
  std::mt19937_64 rng(5);
  const auto a = random_vector(rng, 16, "t");
  {
    VectorCache cache(path.string());
    cache.put(42, a);
  }
  std::string bytes = occmap::testing::read_file(path);
  // First value byte of the only record: header 16 + marker 4 + key 8 + len 2 + tag 1 + dim 4.
  bytes[16 + 4 + 8 + 2 + 1 + 4] ^= 0x40;
  occmap::testing::write_file(path, bytes);
  VectorCache cache(path.string());
  EXPECT_FALSE(cache.get(42, "t"));
  EXPECT_EQ(cache.stats().corrupt_reads, 1u);
  EXPECT_TRUE(cache.put(42, a));
  EXPECT_EQ(*cache.get(42, "t"), a);
}

TEST(VectorCacheTest, RejectsForeignFiles) {
  TempDir dir;
  const auto path = dir / "bogus.occv";
  occmap::testing::write_file(path, "definitely not a cache file");
  try {
    VectorCache cache(path.string());
    FAIL() << "expected CacheFormat";
  } catch (const EmbeddingError& e) {
    EXPECT_EQ(e.code(), EmbeddingErrc::CacheFormat);
  }
}

TEST(VectorCacheTest, ConcurrentReadersWithAWriter) {
  TempDir dir;
  VectorCache cache((dir / "v.occv").string());
  std::mt19937_64 rng(9);
  std::vector<EmbeddingVector> vs;
  for (std::uint64_t k = 0; k < 100; ++k) {
    vs.push_back(random_vector(rng, 32, "t"));
    cache.put(k, vs.back());
  }
  std::atomic<int> mismatches{0};
  {
    std::vector<std::jthread> readers;
    for (int t = 0; t < 6; ++t) {
      readers.emplace_back([&] {
        for (int round = 0; round < 20; ++round) {
          for (std::uint64_t k = 0; k < 100; ++k) {
            auto hit = cache.get(k, "t");
            if (!hit || !(*hit == vs[k])) ++mismatches;
          }
        }
      });
    }
    std::mt19937_64 wrng(10);
    for (std::uint64_t k = 100; k < 300; ++k) cache.put(k, random_vector(wrng, 32, "t"));
  }
  EXPECT_EQ(mismatches.load(), 0);
  EXPECT_EQ(cache.size(), 300u);
}
