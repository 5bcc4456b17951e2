#pragma once

#include "fiscalrag/embed.hpp"
#include "fiscalrag/ingest.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <shared_mutex>
#include <string>
#include <vector>

namespace fiscalrag::index {

using Metadata = std::map<std::string, std::string>;
/// Exact-match key=value pairs; an entry matches when every pair matches.
using MetadataFilter = std::map<std::string, std::string>;

struct Entry {
    ingest::Chunk chunk;
    std::vector<float> vector;
    Metadata metadata;
};

struct RetrievalResult {
    std::string chunk_key;
    double score = 0.0;
    std::size_t rank = 0;  // 1-based

    bool operator==(const RetrievalResult&) const = default;
};

struct UpsertItem {
    ingest::Chunk chunk;
    embed::EmbeddingVector vector;
    Metadata metadata;
};

/// Search backend seam. The only shipped backend is the exact scan below.
class VectorStore {
public:
    virtual ~VectorStore() = default;

    virtual std::uint64_t upsert(const ingest::Chunk& chunk, const embed::EmbeddingVector& vector,
                                 Metadata metadata) = 0;
    virtual std::vector<RetrievalResult> query(const embed::EmbeddingVector& vector, std::size_t k,
                                               const MetadataFilter& filter = {}) const = 0;
    virtual std::size_t delete_document(const std::string& doc_id) = 0;
    virtual std::optional<Entry> get(const std::string& chunk_key) const = 0;
    virtual std::size_t size() const = 0;
    virtual std::size_t dims() const = 0;
    virtual std::uint64_t version() const = 0;
};

/// Brute-force cosine index over unit vectors. Scores are dot products;
/// results are ordered by (score desc, chunk_key asc). Readers share a lock,
/// writers take it exclusively, so a query never sees a half-applied batch.
///
/// On-disk layout (little-endian):
///   "RGFI" | format u32 (=1) | dims u32 | count u64 |
///   body: mutation version u64, then `count` records of
///         [u32 length][key][doc_id][seq u64][start u64][end u64][text]
///         [dims x f32][u32 n][n x (key, value)]   (strings are u32 length + bytes)
///   CRC32 of body, u32.
/// The mutation version survives a persist/load round trip.
class ExactIndex final : public VectorStore {
public:
    ExactIndex() = default;
    explicit ExactIndex(std::size_t dims) : dims_(dims) {}

    ExactIndex(const ExactIndex&) = delete;
    ExactIndex& operator=(const ExactIndex&) = delete;

    std::uint64_t upsert(const ingest::Chunk& chunk, const embed::EmbeddingVector& vector,
                         Metadata metadata) override;
    /// Applies all items under one write lock; dimension checks run first.
    std::uint64_t upsert_batch(const std::vector<UpsertItem>& items);
    std::vector<RetrievalResult> query(const embed::EmbeddingVector& vector, std::size_t k,
                                       const MetadataFilter& filter = {}) const override;
    std::size_t delete_document(const std::string& doc_id) override;
    std::optional<Entry> get(const std::string& chunk_key) const override;
    std::size_t size() const override;
    std::size_t dims() const override;
    std::uint64_t version() const override;

    bool has_document(const std::string& doc_id) const;
    /// Distinct doc ids whose entries carry metadata source_uri == uri.
    std::vector<std::string> documents_with_source(const std::string& source_uri) const;
    std::vector<std::string> keys() const;

    void persist(const std::filesystem::path& path) const;
    static std::unique_ptr<ExactIndex> load(const std::filesystem::path& path);
    /// Replaces this index's contents with the file's.
    void load_from(const std::filesystem::path& path);

private:
    void check_dims(std::size_t dims) const;

    mutable std::shared_mutex mutex_;
    std::size_t dims_ = 0;  // 0 until the first insert
    std::uint64_t version_ = 0;
    std::map<std::string, Entry> entries_;
};

inline constexpr char kIndexMagic[4] = {'R', 'G', 'F', 'I'};
inline constexpr std::uint32_t kIndexFormatVersion = 1;

} // namespace fiscalrag::index
