#include "fiscalrag/embed.hpp"
#include "fiscalrag/error.hpp"
#include "fiscalrag/http_client.hpp"
#include "fiscalrag/text.hpp"

#include <nlohmann/json.hpp>

#include <cmath>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <thread>

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace fiscalrag::embed {

double dot(const std::vector<float>& a, const std::vector<float>& b) {
    double sum = 0.0;
    const std::size_t n = std::min(a.size(), b.size());
    for (std::size_t i = 0; i < n; ++i) sum += static_cast<double>(a[i]) * static_cast<double>(b[i]);
    return sum;
}

double l2_norm(const std::vector<float>& v) {
    return std::sqrt(dot(v, v));
}

namespace {

/// Returns false when the vector cannot be normalized (zero, NaN, Inf).
bool normalize(std::vector<float>& values) {
    double sum = 0.0;
    for (float x : values) {
        if (!std::isfinite(x)) return false;
        sum += static_cast<double>(x) * static_cast<double>(x);
    }
    const double norm = std::sqrt(sum);
    if (!(norm > 0.0) || !std::isfinite(norm)) return false;
    for (auto& x : values) x = static_cast<float>(static_cast<double>(x) / norm);
    return true;
}

std::vector<float> hashed_bag_of_tokens(std::string_view input, std::size_t dims) {
    const auto tokens = text::tokenize(input);
    if (tokens.empty()) throw Error(ErrorCode::EmptyText, "text has no tokens");
    std::vector<double> acc(dims, 0.0);
    for (const auto& token : tokens) acc[text::fnv1a64(token) % dims] += 1.0;
    double sum = 0.0;
    for (double x : acc) sum += x * x;
    const double norm = std::sqrt(sum);
    std::vector<float> values(dims);
    for (std::size_t i = 0; i < dims; ++i) values[i] = static_cast<float>(acc[i] / norm);
    return values;
}

} // namespace

EmbeddingVector deterministic_embed(std::string_view input, std::size_t dims) {
    if (dims < kMinDeterministicDims) {
        throw Error(ErrorCode::InvalidParams, "dims must be at least 8");
    }
    EmbeddingVector out;
    out.dims = dims;
    out.values = hashed_bag_of_tokens(input, dims);
    out.provider_id = "deterministic";
    out.model_id = "fnv1a64-bow-" + std::to_string(dims);
    return out;
}

DeterministicEmbedder::DeterministicEmbedder(std::size_t dims) : dims_(dims) {
    if (dims_ < kMinDeterministicDims) {
        throw Error(ErrorCode::InvalidParams, "dims must be at least 8");
    }
}

std::vector<std::vector<float>> DeterministicEmbedder::embed_batch(const std::vector<std::string>& texts) {
    std::vector<std::vector<float>> out;
    out.reserve(texts.size());
    for (std::size_t i = 0; i < texts.size(); ++i) {
        try {
            out.push_back(hashed_bag_of_tokens(texts[i], dims_));
        } catch (const Error& e) {
            throw Error(e.code(), "text " + std::to_string(i) + " has no tokens", std::to_string(i));
        }
    }
    return out;
}

RemoteEmbedder::RemoteEmbedder(Options options) : options_(std::move(options)) {
    if (const char* key = std::getenv(options_.api_key_env.c_str())) api_key_ = key;
}

std::vector<std::vector<float>> RemoteEmbedder::embed_batch(const std::vector<std::string>& texts) {
    const json request{{"model", options_.model}, {"input", texts}};
    std::vector<std::pair<std::string, std::string>> headers;
    if (!api_key_.empty()) headers.emplace_back("Authorization", "Bearer " + api_key_);

    const auto response =
        http::post_json(options_.base_url, "/v1/embeddings", headers, request.dump(), options_.timeout);
    if (response.status != 200) {
        throw Error(ErrorCode::ProviderUnavailable,
                    "embedding request failed: " +
                        (response.status ? "HTTP " + std::to_string(response.status) : response.error));
    }
    std::vector<std::vector<float>> out(texts.size());
    try {
        const auto body = json::parse(response.body);
        for (const auto& item : body.at("data")) {
            const auto index = item.value("index", std::size_t{0});
            if (index >= out.size()) throw Error(ErrorCode::ProviderUnavailable, "embedding index out of range");
            out[index] = item.at("embedding").get<std::vector<float>>();
        }
    } catch (const json::exception& e) {
        throw Error(ErrorCode::ProviderUnavailable, std::string("malformed embedding response: ") + e.what());
    }
    for (const auto& v : out) {
        if (v.empty()) throw Error(ErrorCode::ProviderUnavailable, "embedding response is missing items");
    }
    return out;
}

EmbeddingService::EmbeddingService(std::shared_ptr<EmbeddingProvider> provider,
                                   std::optional<fs::path> cache_dir, RetryPolicy retry, bool use_cache)
    : provider_(std::move(provider)), cache_dir_(std::move(cache_dir)), retry_(retry), use_cache_(use_cache) {
    if (cache_dir_) fs::create_directories(*cache_dir_);
}

std::string EmbeddingService::cache_key(std::string_view input) const {
    std::string material = provider_->provider_id();
    material.push_back('\0');
    material += provider_->model_id();
    material.push_back('\0');
    material.append(input);
    return text::sha256_hex(material);
}

std::optional<std::vector<float>> EmbeddingService::lookup(const std::string& key) {
    {
        std::lock_guard lock(mutex_);
        if (auto it = memory_.find(key); it != memory_.end()) return it->second;
    }
    if (!cache_dir_) return std::nullopt;

    std::ifstream in(*cache_dir_ / (key + ".f32"), std::ios::binary);
    if (!in) return std::nullopt;
    std::uint32_t dims = 0;
    in.read(reinterpret_cast<char*>(&dims), sizeof(dims));
    std::vector<float> values(dims);
    in.read(reinterpret_cast<char*>(values.data()), static_cast<std::streamsize>(dims * sizeof(float)));
    if (!in || dims == 0) return std::nullopt;

    std::lock_guard lock(mutex_);
    memory_.emplace(key, values);
    return values;
}

void EmbeddingService::store(const std::string& key, const std::vector<float>& values) {
    {
        std::lock_guard lock(mutex_);
        memory_[key] = values;
    }
    if (!cache_dir_) return;
    // Write-then-rename keeps concurrent readers from seeing partial files.
    const auto final_path = *cache_dir_ / (key + ".f32");
    const auto temp_path = *cache_dir_ / (key + "." + text::random_token_hex(4) + ".tmp");
    {
        std::ofstream out(temp_path, std::ios::binary | std::ios::trunc);
        const auto dims = static_cast<std::uint32_t>(values.size());
        out.write(reinterpret_cast<const char*>(&dims), sizeof(dims));
        out.write(reinterpret_cast<const char*>(values.data()),
                  static_cast<std::streamsize>(values.size() * sizeof(float)));
        if (!out) return;
    }
    std::error_code ec;
    fs::rename(temp_path, final_path, ec);
    if (ec) fs::remove(temp_path, ec);
}

std::vector<std::vector<float>> EmbeddingService::call_provider(const std::vector<std::string>& texts) {
    auto backoff = retry_.initial_backoff;
    for (int attempt = 1;; ++attempt) {
        try {
            provider_calls_.fetch_add(1);
            return provider_->embed_batch(texts);
        } catch (const Error& e) {
            if (e.code() != ErrorCode::ProviderUnavailable || attempt >= retry_.attempts) throw;
        }
        std::this_thread::sleep_for(backoff);
        backoff *= 2;
    }
}

std::vector<EmbeddingVector> EmbeddingService::embed_texts(const std::vector<std::string>& texts) {
    for (std::size_t i = 0; i < texts.size(); ++i) {
        if (text::trim(texts[i]).empty()) {
            throw Error(ErrorCode::EmptyText, "text " + std::to_string(i) + " is empty", std::to_string(i));
        }
    }

    std::vector<std::vector<float>> values(texts.size());
    std::vector<std::string> keys(texts.size());
    std::vector<std::size_t> missing;
    for (std::size_t i = 0; i < texts.size(); ++i) {
        keys[i] = cache_key(texts[i]);
        std::optional<std::vector<float>> cached;
        if (use_cache_) cached = lookup(keys[i]);
        if (cached) {
            values[i] = std::move(*cached);
            hits_.fetch_add(1);
        } else {
            missing.push_back(i);
            misses_.fetch_add(1);
        }
    }

    if (!missing.empty()) {
        std::vector<std::string> batch;
        batch.reserve(missing.size());
        for (auto i : missing) batch.push_back(texts[i]);
        auto fresh = call_provider(batch);
        if (fresh.size() != batch.size()) {
            throw Error(ErrorCode::ProviderUnavailable, "provider returned wrong number of vectors");
        }
        for (std::size_t j = 0; j < missing.size(); ++j) {
            auto& v = fresh[j];
            if (!normalize(v)) {
                throw Error(ErrorCode::ProviderUnavailable, "provider returned a degenerate vector");
            }
            if (use_cache_) store(keys[missing[j]], v);
            values[missing[j]] = std::move(v);
        }
    }

    std::vector<EmbeddingVector> out;
    out.reserve(texts.size());
    const std::size_t dims = values.empty() ? 0 : values.front().size();
    for (auto& v : values) {
        if (v.size() != dims) throw Error(ErrorCode::DimensionMismatch, "provider returned mixed dimensions");
        out.push_back({v.size(), std::move(v), provider_->provider_id(), provider_->model_id()});
    }
    return out;
}

EmbeddingVector EmbeddingService::embed_one(const std::string& input) {
    return std::move(embed_texts({input}).front());
}

CacheStats EmbeddingService::stats() const {
    return {hits_.load(), misses_.load(), provider_calls_.load()};
}

} // namespace fiscalrag::embed
