#include "fiscalrag/error.hpp"
#include "fiscalrag/text.hpp"

#include <gtest/gtest.h>

#include <charconv>

using namespace fiscalrag;

TEST(Text, TokenizeLowercasesAndSplitsOnPunctuation) {
    EXPECT_EQ(text::tokenize("APBN 2023: Rp3.000,5 T!"),
              (std::vector<std::string>{"apbn", "2023", "rp3", "000", "5", "t"}));
    EXPECT_TRUE(text::tokenize("  ...  ").empty());
}

TEST(Text, TokenizeKeepsUtf8LettersInsideWords) {
    EXPECT_EQ(text::tokenize("Café négara"), (std::vector<std::string>{"café", "négara"}));
}

TEST(Text, CollapseWhitespace) {
    EXPECT_EQ(text::collapse_whitespace("  a \t\n b  c "), "a b c");
    EXPECT_EQ(text::trim("\n x \t"), "x");
}

TEST(Text, Utf8Validation) {
    EXPECT_TRUE(text::is_valid_utf8("plain"));
    EXPECT_TRUE(text::is_valid_utf8("Rp 1.000 \xE2\x82\xAC"));
    EXPECT_FALSE(text::is_valid_utf8("\xFF\xFE"));
    EXPECT_FALSE(text::is_valid_utf8("\xE2\x82"));        // truncated sequence
    EXPECT_FALSE(text::is_valid_utf8("\xC0\xAF"));        // overlong
}

TEST(Text, CodepointOffsets) {
    const std::string s = "a\xC3\xA9z";  // aéz
    EXPECT_EQ(text::codepoint_offsets(s), (std::vector<std::size_t>{0, 1, 3, 4}));
    EXPECT_EQ(text::codepoint_count(s), 3u);
}

TEST(Text, Fnv1aKnownVectors) {
    EXPECT_EQ(text::fnv1a64(""), 0xcbf29ce484222325ULL);
    EXPECT_EQ(text::fnv1a64("a"), 0xaf63dc4c8601ec8cULL);
    EXPECT_EQ(text::hex64(0xabcULL), "0000000000000abc");
}

TEST(Text, Sha256KnownVector) {
    EXPECT_EQ(text::sha256_hex("abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST(Text, RandomTokensAreHexAndDistinct) {
    const auto a = text::random_token_hex(16);
    const auto b = text::random_token_hex(16);
    EXPECT_EQ(a.size(), 32u);
    EXPECT_NE(a, b);
    EXPECT_EQ(a.find_first_not_of("0123456789abcdef"), std::string::npos);
}

TEST(Text, TimestampIsUtcIso8601) {
    const auto ts = text::utc_now_iso8601();
    ASSERT_EQ(ts.size(), 24u);
    EXPECT_EQ(ts[10], 'T');
    EXPECT_EQ(ts.back(), 'Z');
}

TEST(Text, FormatLosslessUsesTwoDecimalsWhenExact) {
    EXPECT_EQ(text::format_lossless(0.4), "0.40");
    EXPECT_EQ(text::format_lossless(0.73), "0.73");
    EXPECT_EQ(text::format_lossless(1.0), "1.00");
    EXPECT_EQ(text::format_lossless(0.0), "0.00");
    EXPECT_EQ(text::format_lossless(0.125), "0.125");
}

TEST(Text, FormatLosslessRoundTrips) {
    for (double v : {2.0 / 3.0, 0.1 + 0.2, 1e-7, 123.456, 44.0 / 100.0}) {
        const auto s = text::format_lossless(v);
        double parsed = 0.0;
        std::from_chars(s.data(), s.data() + s.size(), parsed);
        EXPECT_EQ(parsed, v) << s;
    }
}

TEST(Text, StopwordListsCoverDetectionWords) {
    for (const char* w : {"yang", "dari", "berapa", "apa", "itu"}) EXPECT_TRUE(text::indonesian_stopwords().contains(w));
    for (const char* w : {"what", "is", "the", "in"}) EXPECT_TRUE(text::english_stopwords().contains(w));
    EXPECT_EQ(text::default_stopwords().size(),
              [] {
                  auto u = text::indonesian_stopwords();
                  u.insert(text::english_stopwords().begin(), text::english_stopwords().end());
                  return u.size();
              }());
}

TEST(Text, ErrorCarriesCodeAndSubject) {
    const Error e(ErrorCode::EmptyText, "empty input", "0");
    EXPECT_EQ(e.code(), ErrorCode::EmptyText);
    EXPECT_EQ(e.subject(), "0");
    EXPECT_NE(std::string(e.what()).find("EmptyText"), std::string::npos);
}
