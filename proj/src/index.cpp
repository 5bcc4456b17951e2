#include "fiscalrag/index.hpp"
#include "fiscalrag/error.hpp"

#include <zlib.h>

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <mutex>
#include <set>
#include <sstream>

namespace fs = std::filesystem;

namespace fiscalrag::index {

namespace {

class Writer {
public:
    void u32(std::uint32_t v) {
        for (int i = 0; i < 4; ++i) buf_.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
    }
    void u64(std::uint64_t v) {
        for (int i = 0; i < 8; ++i) buf_.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
    }
    void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
    void str(std::string_view s) {
        u32(static_cast<std::uint32_t>(s.size()));
        buf_.append(s);
    }
    void raw(std::string_view s) { buf_.append(s); }

    std::string& buffer() { return buf_; }

private:
    std::string buf_;
};

class Reader {
public:
    explicit Reader(std::string_view data) : data_(data) {}

    std::uint32_t u32() {
        need(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(data_[pos_ + i])) << (8 * i);
        pos_ += 4;
        return v;
    }
    std::uint64_t u64() {
        need(8);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(data_[pos_ + i])) << (8 * i);
        pos_ += 8;
        return v;
    }
    float f32() { return std::bit_cast<float>(u32()); }
    std::string str() {
        const auto len = u32();
        need(len);
        std::string s(data_.substr(pos_, len));
        pos_ += len;
        return s;
    }
    std::string_view take(std::size_t n) {
        need(n);
        auto view = data_.substr(pos_, n);
        pos_ += n;
        return view;
    }
    std::size_t remaining() const { return data_.size() - pos_; }

private:
    void need(std::size_t n) const {
        if (data_.size() - pos_ < n) throw Error(ErrorCode::CorruptFile, "unexpected end of index data");
    }

    std::string_view data_;
    std::size_t pos_ = 0;
};

std::uint32_t crc32_of(std::string_view data) {
    uLong crc = crc32(0L, Z_NULL, 0);
    return static_cast<std::uint32_t>(
        crc32(crc, reinterpret_cast<const Bytef*>(data.data()), static_cast<uInt>(data.size())));
}

bool matches(const Metadata& metadata, const MetadataFilter& filter) {
    for (const auto& [key, value] : filter) {
        auto it = metadata.find(key);
        if (it == metadata.end() || it->second != value) return false;
    }
    return true;
}

} // namespace

void ExactIndex::check_dims(std::size_t dims) const {
    if (dims == 0) throw Error(ErrorCode::DimensionMismatch, "vector has zero dimensions");
    if (dims_ != 0 && dims != dims_) {
        throw Error(ErrorCode::DimensionMismatch,
                    "vector has " + std::to_string(dims) + " dims, index has " + std::to_string(dims_));
    }
}

std::uint64_t ExactIndex::upsert(const ingest::Chunk& chunk, const embed::EmbeddingVector& vector,
                                 Metadata metadata) {
    std::unique_lock lock(mutex_);
    check_dims(vector.values.size());
    if (dims_ == 0) dims_ = vector.values.size();
    entries_.insert_or_assign(chunk.key(), Entry{chunk, vector.values, std::move(metadata)});
    return ++version_;
}

std::uint64_t ExactIndex::upsert_batch(const std::vector<UpsertItem>& items) {
    std::unique_lock lock(mutex_);
    if (items.empty()) return version_;
    const std::size_t dims = dims_ != 0 ? dims_ : items.front().vector.values.size();
    for (const auto& item : items) {
        check_dims(item.vector.values.size());
        if (item.vector.values.size() != dims) {
            throw Error(ErrorCode::DimensionMismatch, "batch mixes vector dimensions");
        }
    }
    dims_ = dims;
    for (const auto& item : items) {
        entries_.insert_or_assign(item.chunk.key(), Entry{item.chunk, item.vector.values, item.metadata});
        ++version_;
    }
    return version_;
}

std::vector<RetrievalResult> ExactIndex::query(const embed::EmbeddingVector& vector, std::size_t k,
                                               const MetadataFilter& filter) const {
    if (k == 0) throw Error(ErrorCode::InvalidParams, "k must be at least 1");
    std::shared_lock lock(mutex_);
    if (entries_.empty()) return {};
    check_dims(vector.values.size());

    std::vector<RetrievalResult> scored;
    scored.reserve(entries_.size());
    for (const auto& [key, entry] : entries_) {
        if (!matches(entry.metadata, filter)) continue;
        scored.push_back({key, embed::dot(vector.values, entry.vector), 0});
    }
    const std::size_t take = std::min(k, scored.size());
    auto by_score = [](const RetrievalResult& a, const RetrievalResult& b) {
        if (a.score != b.score) return a.score > b.score;
        return a.chunk_key < b.chunk_key;
    };
    std::partial_sort(scored.begin(), scored.begin() + static_cast<std::ptrdiff_t>(take), scored.end(), by_score);
    scored.resize(take);
    for (std::size_t i = 0; i < scored.size(); ++i) scored[i].rank = i + 1;
    return scored;
}

std::size_t ExactIndex::delete_document(const std::string& doc_id) {
    std::unique_lock lock(mutex_);
    std::size_t removed = std::erase_if(entries_, [&](const auto& item) { return item.second.chunk.doc_id == doc_id; });
    if (removed > 0) ++version_;
    return removed;
}

std::optional<Entry> ExactIndex::get(const std::string& chunk_key) const {
    std::shared_lock lock(mutex_);
    if (auto it = entries_.find(chunk_key); it != entries_.end()) return it->second;
    return std::nullopt;
}

std::size_t ExactIndex::size() const {
    std::shared_lock lock(mutex_);
    return entries_.size();
}

std::size_t ExactIndex::dims() const {
    std::shared_lock lock(mutex_);
    return dims_;
}

std::uint64_t ExactIndex::version() const {
    std::shared_lock lock(mutex_);
    return version_;
}

bool ExactIndex::has_document(const std::string& doc_id) const {
    std::shared_lock lock(mutex_);
    // Keys are "<doc_id>:<seq>", so a document's entries are contiguous.
    auto it = entries_.lower_bound(doc_id + ":");
    return it != entries_.end() && it->second.chunk.doc_id == doc_id;
}

std::vector<std::string> ExactIndex::documents_with_source(const std::string& source_uri) const {
    std::shared_lock lock(mutex_);
    std::set<std::string> ids;
    for (const auto& [key, entry] : entries_) {
        auto it = entry.metadata.find("source_uri");
        if (it != entry.metadata.end() && it->second == source_uri) ids.insert(entry.chunk.doc_id);
    }
    return {ids.begin(), ids.end()};
}

std::vector<std::string> ExactIndex::keys() const {
    std::shared_lock lock(mutex_);
    std::vector<std::string> out;
    out.reserve(entries_.size());
    for (const auto& [key, entry] : entries_) out.push_back(key);
    return out;
}

void ExactIndex::persist(const fs::path& path) const {
    Writer header;
    Writer body;
    {
        std::shared_lock lock(mutex_);
        header.raw(std::string_view(kIndexMagic, 4));
        header.u32(kIndexFormatVersion);
        header.u32(static_cast<std::uint32_t>(dims_));
        header.u64(entries_.size());

        body.u64(version_);
        for (const auto& [key, entry] : entries_) {
            Writer record;
            record.str(key);
            record.str(entry.chunk.doc_id);
            record.u64(entry.chunk.seq);
            record.u64(entry.chunk.span.start);
            record.u64(entry.chunk.span.end);
            record.str(entry.chunk.text);
            for (float x : entry.vector) record.f32(x);
            record.u32(static_cast<std::uint32_t>(entry.metadata.size()));
            for (const auto& [mk, mv] : entry.metadata) {
                record.str(mk);
                record.str(mv);
            }
            body.u32(static_cast<std::uint32_t>(record.buffer().size()));
            body.raw(record.buffer());
        }
    }
    const auto crc = crc32_of(body.buffer());

    if (path.has_parent_path()) {
        std::error_code ec;
        fs::create_directories(path.parent_path(), ec);
    }
    const fs::path temp = path.string() + ".tmp";
    {
        std::ofstream out(temp, std::ios::binary | std::ios::trunc);
        if (!out) throw Error(ErrorCode::IoError, "cannot open index file for writing", path.string());
        Writer trailer;
        trailer.u32(crc);
        out.write(header.buffer().data(), static_cast<std::streamsize>(header.buffer().size()));
        out.write(body.buffer().data(), static_cast<std::streamsize>(body.buffer().size()));
        out.write(trailer.buffer().data(), static_cast<std::streamsize>(trailer.buffer().size()));
        if (!out) throw Error(ErrorCode::IoError, "failed writing index file", path.string());
    }
    std::error_code ec;
    fs::rename(temp, path, ec);
    if (ec) throw Error(ErrorCode::IoError, "cannot replace index file: " + ec.message(), path.string());
}

std::unique_ptr<ExactIndex> ExactIndex::load(const fs::path& path) {
    auto index = std::make_unique<ExactIndex>();
    index->load_from(path);
    return index;
}

void ExactIndex::load_from(const fs::path& path) {
    if (!fs::exists(path)) throw Error(ErrorCode::NotFound, "index file not found", path.string());
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::IoError, "cannot open index file", path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    const std::string data = buf.str();

    constexpr std::size_t header_size = 4 + 4 + 4 + 8;
    if (data.size() < header_size + 8 + 4) throw Error(ErrorCode::CorruptFile, "index file too short", path.string());
    if (data.compare(0, 4, kIndexMagic, 4) != 0) throw Error(ErrorCode::CorruptFile, "bad magic", path.string());

    Reader header(std::string_view(data).substr(4, header_size - 4));
    const auto format = header.u32();
    if (format != kIndexFormatVersion) {
        throw Error(ErrorCode::CorruptFile, "unsupported format version " + std::to_string(format), path.string());
    }
    const std::size_t dims = header.u32();
    const std::uint64_t count = header.u64();

    const std::string_view body = std::string_view(data).substr(header_size, data.size() - header_size - 4);
    Reader trailer(std::string_view(data).substr(data.size() - 4));
    if (trailer.u32() != crc32_of(body)) throw Error(ErrorCode::CorruptFile, "checksum mismatch", path.string());

    Reader reader(body);
    const std::uint64_t version = reader.u64();
    std::map<std::string, Entry> entries;
    for (std::uint64_t i = 0; i < count; ++i) {
        const auto length = reader.u32();
        Reader record(reader.take(length));
        const std::string key = record.str();
        Entry entry;
        entry.chunk.doc_id = record.str();
        entry.chunk.seq = record.u64();
        entry.chunk.span.start = record.u64();
        entry.chunk.span.end = record.u64();
        entry.chunk.text = record.str();
        entry.vector.resize(dims);
        for (auto& x : entry.vector) x = record.f32();
        const auto n_meta = record.u32();
        for (std::uint32_t m = 0; m < n_meta; ++m) {
            auto mk = record.str();
            entry.metadata[std::move(mk)] = record.str();
        }
        if (record.remaining() != 0 || key != entry.chunk.key()) {
            throw Error(ErrorCode::CorruptFile, "malformed record " + std::to_string(i), path.string());
        }
        entries.emplace(key, std::move(entry));
    }
    if (reader.remaining() != 0) throw Error(ErrorCode::CorruptFile, "trailing bytes in body", path.string());

    std::unique_lock lock(mutex_);
    dims_ = dims;
    version_ = version;
    entries_ = std::move(entries);
}

} // namespace fiscalrag::index
