#include "fiscalrag/error.hpp"
#include "fiscalrag/index.hpp"
#include "support.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <thread>

using namespace fiscalrag;
using fiscalrag::testing::TempDir;

namespace {

embed::EmbeddingVector vec(std::vector<float> values) {
    embed::EmbeddingVector v;
    v.dims = values.size();
    v.values = std::move(values);
    return v;
}

embed::EmbeddingVector random_unit(std::mt19937& rng, std::size_t dims) {
    std::normal_distribution<float> n(0.0f, 1.0f);
    std::vector<float> values(dims);
    double norm = 0.0;
    for (auto& x : values) {
        x = n(rng);
        norm += static_cast<double>(x) * x;
    }
    for (auto& x : values) x = static_cast<float>(x / std::sqrt(norm));
    return vec(std::move(values));
}

ingest::Chunk chunk(const std::string& doc, std::size_t seq, std::string text = "t") {
    return ingest::Chunk{doc, seq, std::move(text), {seq * 10, seq * 10 + 10}};
}

std::vector<std::string> keys_of(const std::vector<index::RetrievalResult>& results) {
    std::vector<std::string> keys;
    for (const auto& r : results) keys.push_back(r.chunk_key);
    return keys;
}

} // namespace

TEST(ExactIndex, UpsertReplacesSameKey) {
    index::ExactIndex idx;
    idx.upsert(chunk("d", 0), vec({1, 0, 0}), {});
    idx.upsert(chunk("d", 0), vec({0, 1, 0}), {});
    EXPECT_EQ(idx.size(), 1u);
    EXPECT_EQ(idx.get("d:0")->vector, (std::vector<float>{0, 1, 0}));
    EXPECT_EQ(idx.version(), 2u);
}

TEST(ExactIndex, DimensionMismatch) {
    index::ExactIndex idx(32);
    try {
        idx.upsert(chunk("d", 0), vec(std::vector<float>(64, 0.1f)), {});
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::DimensionMismatch);
    }
    idx.upsert(chunk("d", 0), vec(std::vector<float>(32, 0.1f)), {});
    EXPECT_THROW(idx.query(vec(std::vector<float>(16, 0.1f)), 1), Error);
}

TEST(ExactIndex, ThousandInsertsCountAndVersion) {
    index::ExactIndex idx;
    std::mt19937 rng(1);
    for (std::size_t i = 0; i < 1000; ++i) idx.upsert(chunk("doc" + std::to_string(i / 10), i % 10), random_unit(rng, 8), {});
    EXPECT_EQ(idx.size(), 1000u);
    EXPECT_EQ(idx.version(), 1000u);
}

TEST(ExactIndex, EmptyIndexQueryIsEmpty) {
    index::ExactIndex idx;
    EXPECT_TRUE(idx.query(vec({1, 0}), 5).empty());
}

TEST(ExactIndex, ZeroKIsRejected) {
    index::ExactIndex idx;
    idx.upsert(chunk("d", 0), vec({1, 0}), {});
    EXPECT_THROW(idx.query(vec({1, 0}), 0), Error);
}

TEST(ExactIndex, KAtLeastSizeReturnsEverythingOrdered) {
    index::ExactIndex idx;
    idx.upsert(chunk("a", 0), vec({0.6f, 0.8f}), {});
    idx.upsert(chunk("b", 0), vec({1.0f, 0.0f}), {});
    idx.upsert(chunk("c", 0), vec({0.0f, 1.0f}), {});
    const auto results = idx.query(vec({1.0f, 0.0f}), 10);
    EXPECT_EQ(keys_of(results), (std::vector<std::string>{"b:0", "a:0", "c:0"}));
    for (std::size_t i = 0; i < results.size(); ++i) EXPECT_EQ(results[i].rank, i + 1);
}

TEST(ExactIndex, TiesBreakByKeyAscending) {
    index::ExactIndex idx;
    for (const char* d : {"zeta", "alpha", "mid"}) idx.upsert(chunk(d, 0), vec({1, 0}), {});
    EXPECT_EQ(keys_of(idx.query(vec({1, 0}), 3)), (std::vector<std::string>{"alpha:0", "mid:0", "zeta:0"}));
}

TEST(ExactIndex, MetadataFilterRestrictsResults) {
    index::ExactIndex idx;
    idx.upsert(chunk("a", 0), vec({1, 0}), {{"year", "2023"}});
    idx.upsert(chunk("b", 0), vec({1, 0}), {{"year", "2024"}});
    EXPECT_EQ(keys_of(idx.query(vec({1, 0}), 5, {{"year", "2024"}})), (std::vector<std::string>{"b:0"}));
    EXPECT_TRUE(idx.query(vec({1, 0}), 5, {{"year", "1999"}}).empty());
}

TEST(ExactIndex, MatchesBruteForceOnRandomData) {
    std::mt19937 rng(42);
    index::ExactIndex idx;
    std::vector<std::pair<std::string, std::vector<float>>> all;
    for (std::size_t i = 0; i < 300; ++i) {
        auto v = random_unit(rng, 16);
        const auto c = chunk("doc" + std::to_string(i), 0);
        idx.upsert(c, v, {});
        all.emplace_back(c.key(), v.values);
    }
    for (int q = 0; q < 20; ++q) {
        const auto query = random_unit(rng, 16);
        std::vector<std::pair<double, std::string>> scored;
        for (const auto& [key, v] : all) {
            double s = 0.0;
            for (std::size_t d = 0; d < v.size(); ++d) s += static_cast<double>(v[d]) * query.values[d];
            scored.emplace_back(s, key);
        }
        std::sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
            return a.first != b.first ? a.first > b.first : a.second < b.second;
        });
        std::vector<std::string> expected;
        for (std::size_t i = 0; i < 7; ++i) expected.push_back(scored[i].second);
        EXPECT_EQ(keys_of(idx.query(query, 7)), expected);
    }
}

TEST(ExactIndex, PersistRoundTripPreservesQueriesAndVersion) {
    TempDir dir;
    std::mt19937 rng(3);
    index::ExactIndex idx;
    for (std::size_t i = 0; i < 100; ++i) {
        idx.upsert(chunk("doc" + std::to_string(i % 13), i, "text " + std::to_string(i)), random_unit(rng, 12),
                   {{"source_uri", "f" + std::to_string(i % 13) + ".txt"}});
    }
    idx.persist(dir / "index.rgfi");
    const auto loaded = index::ExactIndex::load(dir / "index.rgfi");
    EXPECT_EQ(loaded->size(), 100u);
    EXPECT_EQ(loaded->dims(), 12u);
    EXPECT_EQ(loaded->version(), idx.version());
    for (int q = 0; q < 25; ++q) {
        const auto query = random_unit(rng, 12);
        EXPECT_EQ(loaded->query(query, 10), idx.query(query, 10));
    }
    const auto entry = loaded->get("doc5:5");
    ASSERT_TRUE(entry);
    EXPECT_EQ(entry->chunk.text, "text 5");
    EXPECT_EQ(entry->metadata.at("source_uri"), "f5.txt");
}

TEST(ExactIndex, TruncatedFileIsCorrupt) {
    TempDir dir;
    index::ExactIndex idx;
    idx.upsert(chunk("d", 0, "hello"), vec({1, 0, 0, 0}), {});
    idx.persist(dir / "i.rgfi");
    const auto full = fiscalrag::testing::read_file(dir / "i.rgfi");
    for (std::size_t cut : {full.size() - 1, full.size() / 2, std::size_t{6}}) {
        fiscalrag::testing::write_file(dir / "t.rgfi", full.substr(0, cut));
        try {
            index::ExactIndex::load(dir / "t.rgfi");
            FAIL() << "cut at " << cut;
        } catch (const Error& e) {
            EXPECT_EQ(e.code(), ErrorCode::CorruptFile);
        }
    }
}

TEST(ExactIndex, FlippedByteFailsChecksum) {
    TempDir dir;
    index::ExactIndex idx;
    idx.upsert(chunk("d", 0, "hello"), vec({1, 0, 0, 0}), {});
    idx.persist(dir / "i.rgfi");
    auto bytes = fiscalrag::testing::read_file(dir / "i.rgfi");
    bytes[30] = static_cast<char>(bytes[30] ^ 0x40);
    fiscalrag::testing::write_file(dir / "i.rgfi", bytes);
    EXPECT_THROW(index::ExactIndex::load(dir / "i.rgfi"), Error);
}

TEST(ExactIndex, WrongMagicIsCorrupt) {
    TempDir dir;
    fiscalrag::testing::write_file(dir / "x.rgfi", std::string(64, 'x'));
    try {
        index::ExactIndex::load(dir / "x.rgfi");
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::CorruptFile);
    }
}

TEST(ExactIndex, EmptyIndexRoundTrip) {
    TempDir dir;
    index::ExactIndex idx;
    idx.persist(dir / "e.rgfi");
    const auto loaded = index::ExactIndex::load(dir / "e.rgfi");
    EXPECT_EQ(loaded->size(), 0u);
    EXPECT_TRUE(loaded->query(vec({1, 0}), 3).empty());
}

TEST(ExactIndex, MissingFileIsNotFound) {
    try {
        index::ExactIndex::load("/nonexistent/index.rgfi");
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::NotFound);
    }
}

TEST(ExactIndex, DeleteDocument) {
    index::ExactIndex idx;
    EXPECT_EQ(idx.delete_document("unknown"), 0u);
    EXPECT_EQ(idx.version(), 0u);
    for (std::size_t i = 0; i < 7; ++i) idx.upsert(chunk("seven", i), vec({1, 0}), {});
    idx.upsert(chunk("other", 0), vec({0.9f, 0.1f}), {});
    const auto before = idx.version();
    EXPECT_EQ(idx.delete_document("seven"), 7u);
    EXPECT_EQ(idx.version(), before + 1);
    EXPECT_FALSE(idx.has_document("seven"));
    for (const auto& r : idx.query(vec({1, 0}), 10)) EXPECT_EQ(r.chunk_key.rfind("seven", 0), std::string::npos);
}

TEST(ExactIndex, DocumentsWithSource) {
    index::ExactIndex idx;
    idx.upsert(chunk("d1", 0), vec({1, 0}), {{"source_uri", "a.txt"}});
    idx.upsert(chunk("d1", 1), vec({1, 0}), {{"source_uri", "a.txt"}});
    idx.upsert(chunk("d2", 0), vec({1, 0}), {{"source_uri", "b.txt"}});
    EXPECT_EQ(idx.documents_with_source("a.txt"), (std::vector<std::string>{"d1"}));
    EXPECT_TRUE(idx.documents_with_source("c.txt").empty());
}

TEST(ExactIndex, ConcurrentReadersSeeWholeBatches) {
    index::ExactIndex idx;
    std::mt19937 rng(5);
    std::vector<index::UpsertItem> batch;
    for (std::size_t i = 0; i < 50; ++i) batch.push_back({chunk("batch", i), random_unit(rng, 8), {}});
    idx.upsert(chunk("seed", 0), random_unit(rng, 8), {});

    std::atomic<bool> torn{false};
    std::jthread reader([&](std::stop_token stop) {
        while (!stop.stop_requested()) {
            const auto n = idx.size();
            if (n != 1 && n != 51) torn = true;
        }
    });
    idx.upsert_batch(batch);
    reader.request_stop();
    reader.join();
    EXPECT_FALSE(torn);
    EXPECT_EQ(idx.size(), 51u);
}
