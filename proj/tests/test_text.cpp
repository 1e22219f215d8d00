#include <gtest/gtest.h>

#include <sstream>

#include "occmap/config.hpp"
#include "occmap/text.hpp"

using namespace occmap;

TEST(TextTest, Fnv1aKnownVectors) {
  // Reference values of 64-bit FNV-1a.
  EXPECT_EQ(text::fnv1a64(""), 0xcbf29ce484222325ULL);
  EXPECT_EQ(text::fnv1a64("a"), 0xaf63dc4c8601ec8cULL);
  EXPECT_EQ(text::fnv1a64("foobar"), 0x85944171f73967e8ULL);
}

TEST(TextTest, DecodeReplacesInvalidSequences) {
  const std::string bad = std::string("ok") + '\xC3' + "x" + '\xE2' + '\x82' + "\xF0\x9F\x98\x80";
  const auto cps = text::decode_utf8(bad);
  // A truncated sequence yields one replacement per offending byte.
  ASSERT_EQ(cps.size(), 7u);
  EXPECT_EQ(cps[2], text::kReplacementChar);
  EXPECT_EQ(cps[3], U'x');
  EXPECT_EQ(cps[4], text::kReplacementChar);
  EXPECT_EQ(cps[5], text::kReplacementChar);
  EXPECT_EQ(cps[6], char32_t{0x1F600});
  // Overlong encoding of '/' and an encoded surrogate.
  EXPECT_EQ(text::decode_utf8("\xC0\xAF"), std::u32string(2, text::kReplacementChar));
  EXPECT_EQ(text::decode_utf8("\xED\xA0\x80").front(), text::kReplacementChar);
}

TEST(TextTest, SanitizeRoundTripsValidText) {
  const std::string s = "Café – naïve 日本";
  EXPECT_EQ(text::sanitize_utf8(s), s);
  EXPECT_EQ(text::encode_utf8(text::decode_utf8(s)), s);
}

TEST(TextTest, CollapseAndSlug) {
  EXPECT_EQ(text::collapse_whitespace("  a \t b\n\nc  "), "a b c");
  EXPECT_EQ(text::slugify("Cloud Computing"), "cloud-computing");
  EXPECT_EQ(text::slugify("  Gen AI / LLMs!"), "gen-ai-llms");
  EXPECT_EQ(text::slugify("***"), "x");
}

TEST(TextTest, FormatFixed) {
  EXPECT_EQ(text::format_fixed(0.7, 8), "0.70000000");
  EXPECT_EQ(text::format_fixed(1.0 / 3.0, 8), "0.33333333");
  EXPECT_EQ(text::format_fixed(-1e-12, 8), "0.00000000");
}

TEST(ConfigTest, ParsesSectionsAndComments) {
  std::istringstream in("# comment\nthreshold = 0.7\n[driver_threshold]\nCloud Computing = 0.5\n; other\n\n");
  const auto entries = parse_key_values(in, "test");
  ASSERT_EQ(entries.size(), 2u);
  EXPECT_EQ(entries[0].key, "threshold");
  EXPECT_EQ(entries[0].value, "0.7");
  EXPECT_EQ(entries[1].key, "driver_threshold.Cloud Computing");
  EXPECT_EQ(entries[1].line, 4);
  EXPECT_DOUBLE_EQ(parse_double_value(entries[1]), 0.5);
}

TEST(ConfigTest, RejectsMalformedLines) {
  std::istringstream in("threshold 0.7\n");
  try {
    parse_key_values(in, "cfg");
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    EXPECT_EQ(e.code(), ConfigErrc::Syntax);
    EXPECT_NE(std::string(e.what()).find("cfg:1"), std::string::npos);
  }
  EXPECT_THROW(parse_double_value({"threshold", "0.7x", 3}), ConfigError);
  EXPECT_THROW(parse_bool_value({"flag", "maybe", 3}), ConfigError);
}
