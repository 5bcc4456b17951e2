#include "fiscalrag/error.hpp"
#include "fiscalrag/feedback.hpp"
#include "support.hpp"

#include <gtest/gtest.h>

#include <fstream>

using namespace fiscalrag;
using fiscalrag::testing::TempDir;
using json = nlohmann::json;

namespace {

feedback::AnswerRecord answer_record(const std::string& id, const std::string& question, const std::string& answer) {
    feedback::AnswerRecord r;
    r.response_id = id;
    r.question = question;
    r.payload.answer = answer;
    r.created_at = "2024-01-01T00:00:00.000Z";
    return r;
}

std::vector<json> read_jsonl(const std::filesystem::path& path) {
    std::vector<json> out;
    std::ifstream in(path);
    for (std::string line; std::getline(in, line);) {
        if (!line.empty()) out.push_back(json::parse(line));
    }
    return out;
}

std::optional<ErrorCode> code_of(const std::function<void()>& fn) {
    try {
        fn();
    } catch (const Error& e) {
        return e.code();
    }
    return std::nullopt;
}

struct Fixture {
    TempDir dir;
    feedback::AnswerLog answers{dir / "answers.jsonl"};

    Fixture() {
        for (int i = 0; i < 5; ++i) {
            answers.append(answer_record("r" + std::to_string(i), "Pertanyaan " + std::to_string(i) + "?",
                                         "Jawaban " + std::to_string(i) + "."));
        }
    }
};

} // namespace

TEST(AnswerLog, PersistsAcrossReopen) {
    Fixture f;
    EXPECT_EQ(f.answers.size(), 5u);
    feedback::AnswerLog reopened(f.dir / "answers.jsonl");
    EXPECT_EQ(reopened.size(), 5u);
    ASSERT_TRUE(reopened.find("r3"));
    EXPECT_EQ(reopened.find("r3")->payload.answer, "Jawaban 3.");
    EXPECT_FALSE(reopened.find("nope"));
}

TEST(FeedbackStore, RecordsValidFeedback) {
    Fixture f;
    feedback::FeedbackStore store(f.dir / "feedback.jsonl", f.answers);
    const auto entry = store.record_feedback("r1", 5, "bagus");
    EXPECT_EQ(entry.response_id, "r1");
    EXPECT_EQ(entry.rating, 5);
    EXPECT_EQ(entry.disposition, feedback::Disposition::pending);
    EXPECT_EQ(entry.id.size(), 16u);
    EXPECT_EQ(store.get(entry.id)->comment, std::optional<std::string>("bagus"));
}

TEST(FeedbackStore, RejectsBadRatingsAndUnknownResponses) {
    Fixture f;
    feedback::FeedbackStore store(f.dir / "feedback.jsonl", f.answers);
    EXPECT_EQ(code_of([&] { store.record_feedback("r1", 0); }), ErrorCode::InvalidRating);
    EXPECT_EQ(code_of([&] { store.record_feedback("r1", 6); }), ErrorCode::InvalidRating);
    EXPECT_EQ(code_of([&] { store.record_feedback("missing", 3); }), ErrorCode::UnknownResponse);
    EXPECT_TRUE(store.entries().empty());
}

TEST(FeedbackStore, CurationRules) {
    Fixture f;
    feedback::FeedbackStore store(f.dir / "feedback.jsonl", f.answers);
    const auto low = store.record_feedback("r0", 2);
    const auto high = store.record_feedback("r1", 4);

    EXPECT_EQ(code_of([&] { store.curate("zzz", feedback::Disposition::rejected); }), ErrorCode::UnknownEntry);
    EXPECT_EQ(code_of([&] { store.curate(low.id, feedback::Disposition::pending); }), ErrorCode::InvalidArgument);
    EXPECT_EQ(code_of([&] { store.curate(low.id, feedback::Disposition::approve_finetune); }),
              ErrorCode::MissingCorrection);

    const auto as_is = store.curate(high.id, feedback::Disposition::approve_finetune);
    EXPECT_EQ(as_is.entry.disposition, feedback::Disposition::approve_finetune);
    EXPECT_TRUE(as_is.entry.curated_at);
    EXPECT_EQ(code_of([&] { store.curate(high.id, feedback::Disposition::rejected); }), ErrorCode::AlreadyCurated);

    const auto fixed = store.curate(low.id, feedback::Disposition::approve_finetune, "Jawaban yang benar.");
    EXPECT_EQ(fixed.entry.corrected_answer, std::optional<std::string>("Jawaban yang benar."));
}

TEST(FeedbackStore, AsIsApprovalCanBeDisabled) {
    Fixture f;
    feedback::FeedbackStore store(f.dir / "feedback.jsonl", f.answers, {false, 4});
    const auto entry = store.record_feedback("r1", 5);
    EXPECT_EQ(code_of([&] { store.curate(entry.id, feedback::Disposition::approve_finetune); }),
              ErrorCode::MissingCorrection);
}

TEST(FeedbackStore, CorpusApprovalYieldsDocument) {
    Fixture f;
    feedback::FeedbackStore store(f.dir / "feedback.jsonl", f.answers);
    const auto entry = store.record_feedback("r2", 1);
    const auto result = store.curate(entry.id, feedback::Disposition::approve_corpus, "Jawaban benar.");
    ASSERT_TRUE(result.corpus_document);
    EXPECT_EQ(result.corpus_document->source_uri, "feedback://" + entry.id);
    EXPECT_NE(result.corpus_document->text.find("Pertanyaan 2?"), std::string::npos);
    EXPECT_NE(result.corpus_document->text.find("Jawaban benar."), std::string::npos);
}

TEST(FeedbackStore, ReplayRestoresEntriesAndDispositions) {
    Fixture f;
    std::string id;
    {
        feedback::FeedbackStore store(f.dir / "feedback.jsonl", f.answers);
        id = store.record_feedback("r1", 5).id;
        store.record_feedback("r2", 3);
        store.curate(id, feedback::Disposition::rejected);
    }
    feedback::FeedbackStore reopened(f.dir / "feedback.jsonl", f.answers);
    const auto entries = reopened.entries();
    ASSERT_EQ(entries.size(), 2u);
    EXPECT_EQ(entries[0].id, id);
    EXPECT_EQ(entries[0].disposition, feedback::Disposition::rejected);
    EXPECT_EQ(entries[1].response_id, "r2");
    for (const auto& line : read_jsonl(f.dir / "feedback.jsonl")) EXPECT_EQ(line["schema_version"], 1);
}

TEST(FeedbackStore, CorruptLogIsReported) {
    Fixture f;
    fiscalrag::testing::write_file(f.dir / "feedback.jsonl", "{\"type\": \"mystery\"}\n");
    EXPECT_EQ(code_of([&] { feedback::FeedbackStore(f.dir / "feedback.jsonl", f.answers); }), ErrorCode::CorruptFile);
}

TEST(Export, OnlyApprovedEntriesAreExported) {
    Fixture f;
    feedback::FeedbackStore store(f.dir / "feedback.jsonl", f.answers);
    std::vector<std::string> ids;
    for (int i = 0; i < 5; ++i) ids.push_back(store.record_feedback("r" + std::to_string(i), i + 1).id);
    store.curate(ids[0], feedback::Disposition::approve_finetune, "Koreksi nol.");
    store.curate(ids[4], feedback::Disposition::approve_finetune);
    store.curate(ids[1], feedback::Disposition::rejected);
    store.curate(ids[2], feedback::Disposition::approve_corpus, "Korpus.");

    const llm::TemplateStore templates;
    const auto out = f.dir / "export" / "ft.jsonl";
    const auto manifest = feedback::export_finetune(store, templates, out);
    EXPECT_EQ(manifest.count, 2u);
    EXPECT_EQ(manifest.entry_ids, (std::vector<std::string>{ids[0], ids[4]}));

    const auto records = read_jsonl(out);
    ASSERT_EQ(records.size(), 2u);
    for (const auto& r : records) EXPECT_FALSE(feedback::validate_finetune_record(r)) << r.dump();
    EXPECT_EQ(records[0]["messages"][1]["content"], "Pertanyaan 0?");
    EXPECT_EQ(records[0]["messages"][2]["content"], "Koreksi nol.");
    EXPECT_EQ(records[1]["messages"][2]["content"], "Jawaban 4.");
    EXPECT_EQ(records[0]["messages"][0]["content"], text::trim(templates.get("finetune_system.v1")));
    EXPECT_EQ(feedback::count_invalid_records(out), 0u);

    const auto manifest_json = json::parse(fiscalrag::testing::read_file(out.string() + ".manifest.json"));
    EXPECT_EQ(manifest_json["count"], 2);
}

TEST(Export, ImportedPairsAreIncluded) {
    Fixture f;
    feedback::FeedbackStore store(f.dir / "feedback.jsonl", f.answers);
    ingest::QAPair pair;
    pair.question = "Apa itu APBN?";
    pair.ground_truth = "Anggaran Pendapatan dan Belanja Negara.";
    const llm::TemplateStore templates;
    const auto manifest = feedback::export_finetune(store, templates, f.dir / "ft.jsonl", {pair});
    EXPECT_EQ(manifest.count, 1u);
    EXPECT_EQ(manifest.imported_pairs, 1u);
}

TEST(Export, NothingToExportIsAnError) {
    Fixture f;
    feedback::FeedbackStore store(f.dir / "feedback.jsonl", f.answers);
    store.record_feedback("r0", 5);
    const llm::TemplateStore templates;
    EXPECT_EQ(code_of([&] { feedback::export_finetune(store, templates, f.dir / "ft.jsonl"); }),
              ErrorCode::EmptySelection);
    EXPECT_FALSE(std::filesystem::exists(f.dir / "ft.jsonl"));
}

TEST(Export, ValidatorRejectsMalformedRecords) {
    const auto ok = json::parse(
        R"({"messages": [{"role": "system", "content": "s"}, {"role": "user", "content": "u"}, {"role": "assistant", "content": "a"}]})");
    EXPECT_FALSE(feedback::validate_finetune_record(ok));
    auto swapped = ok;
    std::swap(swapped["messages"][1], swapped["messages"][2]);
    EXPECT_TRUE(feedback::validate_finetune_record(swapped));
    auto empty = ok;
    empty["messages"][2]["content"] = "";
    EXPECT_TRUE(feedback::validate_finetune_record(empty));
    EXPECT_TRUE(feedback::validate_finetune_record(json::object()));
    auto short_list = ok;
    short_list["messages"].erase(0);
    EXPECT_TRUE(feedback::validate_finetune_record(short_list));
}
