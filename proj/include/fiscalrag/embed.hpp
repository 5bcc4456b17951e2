#pragma once

#include <atomic>
#include <chrono>
#include <cstddef>
#include <filesystem>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace fiscalrag::embed {

struct EmbeddingVector {
    std::size_t dims = 0;
    std::vector<float> values;
    std::string provider_id;
    std::string model_id;

    bool operator==(const EmbeddingVector&) const = default;
};

double dot(const std::vector<float>& a, const std::vector<float>& b);
double l2_norm(const std::vector<float>& v);

/// Raw embedding backend. Implementations must be safe to call concurrently.
/// Returned vectors need not be normalized; the embedding service does that.
class EmbeddingProvider {
public:
    virtual ~EmbeddingProvider() = default;

    virtual std::string provider_id() const = 0;
    virtual std::string model_id() const = 0;
    virtual std::vector<std::vector<float>> embed_batch(const std::vector<std::string>& texts) = 0;
};

inline constexpr std::size_t kMinDeterministicDims = 8;

/// Offline bag-of-tokens embedder. Each lowercase token adds 1.0 at
/// fnv1a64(token) mod dims, then the vector is L2-normalized.
EmbeddingVector deterministic_embed(std::string_view text, std::size_t dims);

class DeterministicEmbedder final : public EmbeddingProvider {
public:
    explicit DeterministicEmbedder(std::size_t dims = 256);

    std::string provider_id() const override { return "deterministic"; }
    std::string model_id() const override { return "fnv1a64-bow-" + std::to_string(dims_); }
    std::vector<std::vector<float>> embed_batch(const std::vector<std::string>& texts) override;

    std::size_t dims() const noexcept { return dims_; }

private:
    std::size_t dims_;
};

/// OpenAI-compatible POST {base_url}/v1/embeddings. The API key is read from
/// the named environment variable at construction.
class RemoteEmbedder final : public EmbeddingProvider {
public:
    struct Options {
        std::string base_url = "https://api.openai.com";
        std::string model = "text-embedding-3-small";
        std::string api_key_env = "OPENAI_API_KEY";
        std::chrono::milliseconds timeout{30000};
    };

    explicit RemoteEmbedder(Options options);

    std::string provider_id() const override { return "openai"; }
    std::string model_id() const override { return options_.model; }
    std::vector<std::vector<float>> embed_batch(const std::vector<std::string>& texts) override;

private:
    Options options_;
    std::string api_key_;
};

struct RetryPolicy {
    int attempts = 3;
    std::chrono::milliseconds initial_backoff{250};
};

struct CacheStats {
    std::size_t hits = 0;
    std::size_t misses = 0;
    std::size_t provider_calls = 0;
};

/// Front door for embeddings: validates inputs, retries provider failures,
/// normalizes output, and caches by (provider_id, model_id, content hash) in
/// memory and optionally as content-addressed files under `cache_dir`.
class EmbeddingService {
public:
    EmbeddingService(std::shared_ptr<EmbeddingProvider> provider,
                     std::optional<std::filesystem::path> cache_dir = std::nullopt,
                     RetryPolicy retry = {}, bool use_cache = true);

    std::vector<EmbeddingVector> embed_texts(const std::vector<std::string>& texts);
    EmbeddingVector embed_one(const std::string& text);

    CacheStats stats() const;
    const EmbeddingProvider& provider() const { return *provider_; }

    std::string cache_key(std::string_view text) const;

private:
    std::optional<std::vector<float>> lookup(const std::string& key);
    void store(const std::string& key, const std::vector<float>& values);
    std::vector<std::vector<float>> call_provider(const std::vector<std::string>& texts);

    std::shared_ptr<EmbeddingProvider> provider_;
    std::optional<std::filesystem::path> cache_dir_;
    RetryPolicy retry_;
    bool use_cache_;

    mutable std::mutex mutex_;
    std::unordered_map<std::string, std::vector<float>> memory_;
    std::atomic<std::size_t> hits_{0};
    std::atomic<std::size_t> misses_{0};
    std::atomic<std::size_t> provider_calls_{0};
};

} // namespace fiscalrag::embed
