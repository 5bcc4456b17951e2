#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

// Small text and hashing helpers shared by every module.
namespace fiscalrag::text {

/// Lowercased word tokens. A token is a maximal run of ASCII letters/digits or
/// non-ASCII bytes (so UTF-8 letters stay inside words); everything else
/// separates tokens.
std::vector<std::string> tokenize(std::string_view input);

std::string to_lower_ascii(std::string_view input);
std::string trim(std::string_view input);
/// Trim and replace every whitespace run with a single space.
std::string collapse_whitespace(std::string_view input);

bool is_valid_utf8(std::string_view input) noexcept;
/// Byte offset of every code point, plus a final entry equal to input.size().
std::vector<std::size_t> codepoint_offsets(std::string_view input);
std::size_t codepoint_count(std::string_view input) noexcept;

/// FNV-1a, 64-bit. Offset basis 0xcbf29ce484222325, prime 0x100000001b3.
std::uint64_t fnv1a64(std::string_view input) noexcept;
std::string hex64(std::uint64_t value);

std::string sha256_hex(std::string_view input);
/// Cryptographically random token, hex encoded (2 * bytes characters).
std::string random_token_hex(std::size_t bytes = 16);

std::string utc_now_iso8601();

/// Shortest decimal rendering with at least `min_decimals` fractional digits
/// that parses back to exactly `value`.
std::string format_lossless(double value, int min_decimals = 2);

/// Function words used by language detection and by the rule judge.
const std::unordered_set<std::string>& indonesian_stopwords();
const std::unordered_set<std::string>& english_stopwords();
/// Union of both lists.
const std::unordered_set<std::string>& default_stopwords();

} // namespace fiscalrag::text
