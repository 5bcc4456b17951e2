#include "fiscalrag/text.hpp"
#include "fiscalrag/error.hpp"

#include <openssl/evp.h>
#include <openssl/rand.h>

#include <array>
#include <cctype>
#include <charconv>
#include <chrono>
#include <cstdio>
#include <ctime>
#include <stdexcept>

namespace fiscalrag {

std::string_view to_string(ErrorCode code) noexcept {
    switch (code) {
    case ErrorCode::NotFound: return "NotFound";
    case ErrorCode::Undecodable: return "Undecodable";
    case ErrorCode::EmptyDocument: return "EmptyDocument";
    case ErrorCode::UnsupportedFormat: return "UnsupportedFormat";
    case ErrorCode::NotADirectory: return "NotADirectory";
    case ErrorCode::InvalidParams: return "InvalidParams";
    case ErrorCode::EmptyText: return "EmptyText";
    case ErrorCode::ProviderUnavailable: return "ProviderUnavailable";
    case ErrorCode::Timeout: return "Timeout";
    case ErrorCode::ContextTooLarge: return "ContextTooLarge";
    case ErrorCode::ScriptMiss: return "ScriptMiss";
    case ErrorCode::MissingVariable: return "MissingVariable";
    case ErrorCode::UnknownRoleSection: return "UnknownRoleSection";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::IoError: return "IoError";
    case ErrorCode::CorruptFile: return "CorruptFile";
    case ErrorCode::EmptyIndex: return "EmptyIndex";
    case ErrorCode::ContextBudgetExceeded: return "ContextBudgetExceeded";
    case ErrorCode::NoContexts: return "NoContexts";
    case ErrorCode::EmptyGroundTruth: return "EmptyGroundTruth";
    case ErrorCode::EmptyDataset: return "EmptyDataset";
    case ErrorCode::UnknownResponse: return "UnknownResponse";
    case ErrorCode::UnknownEntry: return "UnknownEntry";
    case ErrorCode::InvalidRating: return "InvalidRating";
    case ErrorCode::AlreadyCurated: return "AlreadyCurated";
    case ErrorCode::MissingCorrection: return "MissingCorrection";
    case ErrorCode::EmptySelection: return "EmptySelection";
    case ErrorCode::PathTraversal: return "PathTraversal";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    }
    return "Unknown";
}

} // namespace fiscalrag

namespace fiscalrag::text {

namespace {

bool is_word_byte(unsigned char c) noexcept {
    return std::isalnum(c) != 0 || c >= 0x80;
}

bool is_space(unsigned char c) noexcept {
    return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
}

} // namespace

std::vector<std::string> tokenize(std::string_view input) {
    std::vector<std::string> tokens;
    std::string current;
    for (char ch : input) {
        auto c = static_cast<unsigned char>(ch);
        if (is_word_byte(c)) {
            current.push_back(static_cast<char>(c < 0x80 ? std::tolower(c) : c));
        } else if (!current.empty()) {
            tokens.push_back(std::move(current));
            current.clear();
        }
    }
    if (!current.empty()) tokens.push_back(std::move(current));
    return tokens;
}

std::string to_lower_ascii(std::string_view input) {
    std::string out(input);
    for (auto& ch : out) {
        auto c = static_cast<unsigned char>(ch);
        if (c < 0x80) ch = static_cast<char>(std::tolower(c));
    }
    return out;
}

std::string trim(std::string_view input) {
    std::size_t begin = 0;
    std::size_t end = input.size();
    while (begin < end && is_space(static_cast<unsigned char>(input[begin]))) ++begin;
    while (end > begin && is_space(static_cast<unsigned char>(input[end - 1]))) --end;
    return std::string(input.substr(begin, end - begin));
}

std::string collapse_whitespace(std::string_view input) {
    std::string out;
    out.reserve(input.size());
    bool pending_space = false;
    for (char ch : input) {
        if (is_space(static_cast<unsigned char>(ch))) {
            pending_space = !out.empty();
            continue;
        }
        if (pending_space) out.push_back(' ');
        pending_space = false;
        out.push_back(ch);
    }
    return out;
}

bool is_valid_utf8(std::string_view input) noexcept {
    std::size_t i = 0;
    const std::size_t n = input.size();
    while (i < n) {
        auto c = static_cast<unsigned char>(input[i]);
        std::size_t extra = 0;
        std::uint32_t cp = 0;
        if (c < 0x80) {
            ++i;
            continue;
        } else if ((c & 0xE0) == 0xC0) {
            extra = 1;
            cp = c & 0x1F;
        } else if ((c & 0xF0) == 0xE0) {
            extra = 2;
            cp = c & 0x0F;
        } else if ((c & 0xF8) == 0xF0) {
            extra = 3;
            cp = c & 0x07;
        } else {
            return false;
        }
        if (i + extra >= n) return false;
        for (std::size_t k = 1; k <= extra; ++k) {
            auto cc = static_cast<unsigned char>(input[i + k]);
            if ((cc & 0xC0) != 0x80) return false;
            cp = (cp << 6) | (cc & 0x3F);
        }
        // overlong encodings, surrogates, out of range
        if ((extra == 1 && cp < 0x80) || (extra == 2 && cp < 0x800) ||
            (extra == 3 && cp < 0x10000) || cp > 0x10FFFF ||
            (cp >= 0xD800 && cp <= 0xDFFF)) {
            return false;
        }
        i += extra + 1;
    }
    return true;
}

std::vector<std::size_t> codepoint_offsets(std::string_view input) {
    std::vector<std::size_t> offsets;
    offsets.reserve(input.size() + 1);
    for (std::size_t i = 0; i < input.size(); ++i) {
        if ((static_cast<unsigned char>(input[i]) & 0xC0) != 0x80) offsets.push_back(i);
    }
    offsets.push_back(input.size());
    return offsets;
}

std::size_t codepoint_count(std::string_view input) noexcept {
    std::size_t count = 0;
    for (char ch : input) {
        if ((static_cast<unsigned char>(ch) & 0xC0) != 0x80) ++count;
    }
    return count;
}

std::uint64_t fnv1a64(std::string_view input) noexcept {
    std::uint64_t hash = 0xcbf29ce484222325ULL;
    for (char ch : input) {
        hash ^= static_cast<unsigned char>(ch);
        hash *= 0x100000001b3ULL;
    }
    return hash;
}

std::string hex64(std::uint64_t value) {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(value));
    return buf;
}

namespace {

std::string to_hex(const unsigned char* data, std::size_t len) {
    static constexpr char digits[] = "0123456789abcdef";
    std::string out;
    out.reserve(len * 2);
    for (std::size_t i = 0; i < len; ++i) {
        out.push_back(digits[data[i] >> 4]);
        out.push_back(digits[data[i] & 0x0F]);
    }
    return out;
}

} // namespace

std::string sha256_hex(std::string_view input) {
    std::array<unsigned char, EVP_MAX_MD_SIZE> digest{};
    unsigned int len = 0;
    if (EVP_Digest(input.data(), input.size(), digest.data(), &len, EVP_sha256(), nullptr) != 1) {
        throw std::runtime_error("sha256 digest failed");
    }
    return to_hex(digest.data(), len);
}

std::string random_token_hex(std::size_t bytes) {
    std::vector<unsigned char> buf(bytes);
    if (RAND_bytes(buf.data(), static_cast<int>(buf.size())) != 1) {
        throw std::runtime_error("RAND_bytes failed");
    }
    return to_hex(buf.data(), buf.size());
}

std::string utc_now_iso8601() {
    using namespace std::chrono;
    const auto now = system_clock::now();
    const std::time_t secs = system_clock::to_time_t(now);
    const auto millis = duration_cast<milliseconds>(now.time_since_epoch()).count() % 1000;
    std::tm tm{};
    gmtime_r(&secs, &tm);
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%04d-%02d-%02dT%02d:%02d:%02d.%03lldZ", tm.tm_year + 1900,
                  tm.tm_mon + 1, tm.tm_mday, tm.tm_hour, tm.tm_min, tm.tm_sec,
                  static_cast<long long>(millis));
    return buf;
}

std::string format_lossless(double value, int min_decimals) {
    char buf[400];
    for (int precision = min_decimals; precision <= 17; ++precision) {
        std::snprintf(buf, sizeof(buf), "%.*f", precision, value);
        double parsed = 0.0;
        std::from_chars(buf, buf + std::char_traits<char>::length(buf), parsed);
        if (parsed == value) return buf;
    }
    std::snprintf(buf, sizeof(buf), "%.17g", value);
    return buf;
}

const std::unordered_set<std::string>& indonesian_stopwords() {
    static const std::unordered_set<std::string> words = {
        "yang", "dan", "di", "ke", "dari", "untuk", "dengan", "pada", "adalah", "ini",
        "itu", "dalam", "tidak", "akan", "oleh", "atau", "juga", "sebagai", "bisa", "dapat",
        "ada", "karena", "telah", "sudah", "saat", "bagaimana", "apa", "berapa", "siapa",
        "kapan", "mengapa", "kenapa", "apakah", "mana", "tersebut", "para", "lebih", "hanya",
        "seperti", "bahwa", "jika", "maka", "kami", "kita", "saya", "mereka", "anda", "serta",
        "tentang", "antara", "secara", "hingga", "sampai", "belum", "masih", "yaitu"};
    return words;
}

const std::unordered_set<std::string>& english_stopwords() {
    static const std::unordered_set<std::string> words = {
        "the", "a", "an", "is", "are", "was", "were", "be", "been", "of",
        "in", "on", "at", "to", "for", "with", "by", "from", "and", "or",
        "but", "not", "this", "that", "these", "those", "it", "its", "as", "what",
        "which", "who", "whom", "when", "where", "why", "how", "do", "does", "did",
        "has", "have", "had", "will", "would", "can", "could", "should", "there", "their",
        "than", "then", "into", "about", "if", "so", "much", "many"};
    return words;
}

const std::unordered_set<std::string>& default_stopwords() {
    static const std::unordered_set<std::string> words = [] {
        std::unordered_set<std::string> merged = indonesian_stopwords();
        merged.insert(english_stopwords().begin(), english_stopwords().end());
        return merged;
    }();
    return words;
}

} // namespace fiscalrag::text
