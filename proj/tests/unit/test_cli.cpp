#include "cli.hpp"
#include "fiscalrag/eval.hpp"
#include "fiscalrag/ingest.hpp"
#include "fiscalrag/service.hpp"
#include "support.hpp"

#include <gtest/gtest.h>

#include <sstream>

using namespace fiscalrag;
using fiscalrag::testing::TempDir;
using json = nlohmann::json;

namespace {

struct CliResult {
    int code;
    std::string out;
    std::string err;
};

class CliTest : public ::testing::Test {
protected:
    void SetUp() override {
        fiscalrag::testing::write_file(dir_ / "script.json", R"js({"mode": "strict", "rules": [
            {"match": {"regex": "Question: ([^\\n]*)"}, "response": "Jawaban: $1", "substitute": true},
            {"match": {"regex": "[\\s\\S]"}, "response": "Ringkasan."}]})js");
        fiscalrag::testing::write_file(
            dir_ / "fiscalrag.json",
            json{{"corpus_dir", "corpus"},
                 {"providers", {{"scripted", {{"kind", "scripted"}, {"script", "script.json"}}}}},
                 {"embedder", {{"dims", 128}}}}
                .dump());
        fiscalrag::testing::write_file(dir_ / "corpus" / "apbn.txt", "Defisit APBN 2023 sebesar 2,84 persen dari PDB.");
        fiscalrag::testing::write_file(dir_ / "corpus" / "pajak.txt", "Penerimaan pajak 2023 mencapai 1.869 triliun.");
    }

    CliResult run(std::vector<std::string> args) {
        const std::string config = (dir_ / "fiscalrag.json").string();
        std::vector<std::string> full{"fiscalrag", "--config", config};
        full.insert(full.end(), args.begin(), args.end());
        std::vector<const char*> argv;
        for (const auto& a : full) argv.push_back(a.c_str());
        std::ostringstream out;
        std::ostringstream err;
        const int code = cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
        return {code, out.str(), err.str()};
    }

    TempDir dir_;
};

} // namespace

TEST_F(CliTest, IngestThenReingestAddsNothing) {
    const auto first = run({"ingest", "--path", (dir_ / "corpus").string()});
    ASSERT_EQ(first.code, cli::kExitOk) << first.err;
    const auto counts = json::parse(first.out);
    EXPECT_EQ(counts["documents"], 2);
    EXPECT_EQ(counts["chunks"], 2);
    const auto second = run({"ingest", "--path", (dir_ / "corpus").string()});
    ASSERT_EQ(second.code, cli::kExitOk) << second.err;
    EXPECT_EQ(json::parse(second.out)["chunks"], 0);
}

TEST_F(CliTest, IngestRejectsOverlapNotBelowSize) {
    const auto r = run({"ingest", "--path", (dir_ / "corpus").string(), "--chunk-size", "100", "--overlap", "100"});
    EXPECT_EQ(r.code, cli::kExitUsage);
}

TEST_F(CliTest, IngestMissingPathIsRuntimeError) {
    const auto r = run({"ingest", "--path", (dir_ / "nowhere").string()});
    EXPECT_EQ(r.code, cli::kExitRuntime);
    EXPECT_FALSE(r.err.empty());
}

TEST_F(CliTest, QueryTextAndJson) {
    ASSERT_EQ(run({"ingest", "--path", (dir_ / "corpus").string()}).code, cli::kExitOk);
    const auto text = run({"query", "--q", "Berapa defisit APBN 2023?"});
    ASSERT_EQ(text.code, cli::kExitOk) << text.err;
    EXPECT_NE(text.out.find("Jawaban: Berapa defisit APBN 2023?"), std::string::npos);
    EXPECT_NE(text.out.find("apbn.txt"), std::string::npos);

    const auto a = run({"query", "--q", "Berapa defisit APBN 2023?", "--json", "--chain", "map_reduce", "--k", "2"});
    const auto b = run({"query", "--q", "Berapa defisit APBN 2023?", "--json", "--chain", "map_reduce", "--k", "2"});
    ASSERT_EQ(a.code, cli::kExitOk) << a.err;
    EXPECT_EQ(a.out, b.out);
    const auto payload = json::parse(a.out);
    EXPECT_EQ(payload["chain_used"], "map_reduce");
    EXPECT_EQ(payload["sources"].size(), 2u);
    EXPECT_FALSE(payload.contains("latency"));

    const auto timed = run({"query", "--q", "Berapa defisit?", "--json", "--timing"});
    ASSERT_EQ(timed.code, cli::kExitOk);
    EXPECT_TRUE(json::parse(timed.out).contains("latency"));
}

TEST_F(CliTest, QueryUsageErrors) {
    EXPECT_EQ(run({"query", "--q", ""}).code, cli::kExitUsage);
    EXPECT_EQ(run({"query", "--q", "x", "--chain", "tree"}).code, cli::kExitUsage);
    EXPECT_EQ(run({"query", "--q", "x", "--k", "0"}).code, cli::kExitUsage);
    EXPECT_EQ(run({"bogus"}).code, cli::kExitUsage);
}

TEST_F(CliTest, QueryOnEmptyIndexIsRuntimeError) {
    EXPECT_EQ(run({"query", "--q", "Berapa defisit?"}).code, cli::kExitRuntime);
}

TEST_F(CliTest, EvalPrintsMetricsTable) {
    ASSERT_EQ(run({"ingest", "--path", (dir_ / "corpus").string()}).code, cli::kExitOk);
    ingest::QAPair pair;
    pair.question = "Berapa defisit APBN 2023?";
    pair.ground_truth = "Defisit APBN 2023 sebesar 2,84 persen.";
    ingest::write_qa_jsonl(dir_ / "qa.jsonl", {pair});
    fiscalrag::testing::write_file(dir_ / "configs.json", R"([{"name": "stuff", "rag": {"chain": "stuff", "k": 2}}])");
    const auto r = run({"eval", "--dataset", (dir_ / "qa.jsonl").string(), "--configs", (dir_ / "configs.json").string(),
                        "--out", (dir_ / "report").string()});
    ASSERT_EQ(r.code, cli::kExitOk) << r.err;
    EXPECT_NE(r.out.find("Model | Correctness | Faithfulness | Precision | Recall"), std::string::npos);
    EXPECT_TRUE(std::filesystem::exists(dir_ / "report" / "report.json"));
}

TEST_F(CliTest, EvalTableMatchesJsonReport) {
    ASSERT_EQ(run({"ingest", "--path", (dir_ / "corpus").string()}).code, cli::kExitOk);
    std::vector<ingest::QAPair> pairs(3);
    pairs[0].question = "Berapa defisit APBN 2023?";
    pairs[0].ground_truth = "Defisit APBN 2023 sebesar 2,84 persen.";
    pairs[1].question = "Berapa penerimaan pajak 2023?";
    pairs[1].ground_truth = "Penerimaan pajak 2023 mencapai 1.869 triliun.";
    pairs[2].question = "Apa itu APBN?";
    pairs[2].ground_truth = "Anggaran pendapatan dan belanja negara.";
    ingest::write_qa_jsonl(dir_ / "qa.jsonl", pairs);
    fiscalrag::testing::write_file(dir_ / "configs.json", R"([{"name": "stuff", "rag": {"k": 1}},
        {"name": "refine", "rag": {"chain": "refine", "k": 2}}])");
    const auto r = run({"eval", "--dataset", (dir_ / "qa.jsonl").string(), "--configs", (dir_ / "configs.json").string(),
                        "--out", (dir_ / "report").string(), "--workers", "2"});
    ASSERT_EQ(r.code, cli::kExitOk) << r.err;
    const auto report = json::parse(fiscalrag::testing::read_file(dir_ / "report" / "report.json"));
    const auto parsed = eval::parse_metrics_table(r.out);
    ASSERT_EQ(parsed.size(), report["rows"].size());
    for (std::size_t i = 0; i < parsed.size(); ++i) {
        const auto& row = report["rows"][i];
        EXPECT_EQ(parsed[i].model, row["name"]);
        std::size_t m = 0;
        for (const char* metric : {"correctness", "faithfulness", "precision", "recall"}) {
            const auto& cell = row["metrics"][metric]["value"];
            if (cell.is_null()) {
                EXPECT_FALSE(parsed[i].values[m]);
            } else {
                EXPECT_EQ(parsed[i].values[m], std::optional<double>(cell.get<double>())) << metric;
            }
            ++m;
        }
    }
}

TEST_F(CliTest, ExportWritesOneLinePerApproval) {
    ASSERT_EQ(run({"ingest", "--path", (dir_ / "corpus").string()}).code, cli::kExitOk);
    {
        service::Engine engine(service::load_config(dir_ / "fiscalrag.json"));
        for (int i = 0; i < 4; ++i) {
            const auto answer = engine.ask("Berapa defisit nomor " + std::to_string(i) + "?");
            const auto entry = engine.record_feedback(answer.response_id, 5, std::nullopt);
            if (i < 3) engine.curate(entry.id, feedback::Disposition::approve_finetune, std::nullopt);
        }
    }
    const auto listed = run({"feedback-list", "--json"});
    ASSERT_EQ(listed.code, cli::kExitOk);
    EXPECT_EQ(std::count(listed.out.begin(), listed.out.end(), '\n'), 4);

    const auto r = run({"export-finetune", "--out", (dir_ / "ft.jsonl").string()});
    ASSERT_EQ(r.code, cli::kExitOk) << r.err;
    const auto body = fiscalrag::testing::read_file(dir_ / "ft.jsonl");
    EXPECT_EQ(std::count(body.begin(), body.end(), '\n'), 3);
    EXPECT_EQ(feedback::count_invalid_records(dir_ / "ft.jsonl"), 0u);
}

TEST_F(CliTest, EvalMissingDatasetIsRuntimeError) {
    fiscalrag::testing::write_file(dir_ / "configs.json", R"([{"name": "stuff", "rag": {}}])");
    const auto r = run({"eval", "--dataset", (dir_ / "none.jsonl").string(), "--configs",
                        (dir_ / "configs.json").string()});
    EXPECT_EQ(r.code, cli::kExitRuntime);
}

TEST_F(CliTest, FeedbackListAndExport) {
    ASSERT_EQ(run({"ingest", "--path", (dir_ / "corpus").string()}).code, cli::kExitOk);
    const auto empty = run({"feedback-list", "--json"});
    ASSERT_EQ(empty.code, cli::kExitOk);
    EXPECT_TRUE(empty.out.empty());
    const auto none = run({"export-finetune", "--out", (dir_ / "ft.jsonl").string()});
    EXPECT_EQ(none.code, cli::kExitRuntime);

    ingest::QAPair pair;
    pair.question = "Apa itu APBN?";
    pair.ground_truth = "Anggaran Pendapatan dan Belanja Negara.";
    ingest::write_qa_jsonl(dir_ / "pairs.jsonl", {pair});
    const auto exported =
        run({"export-finetune", "--out", (dir_ / "ft.jsonl").string(), "--pairs", (dir_ / "pairs.jsonl").string()});
    ASSERT_EQ(exported.code, cli::kExitOk) << exported.err;
    EXPECT_TRUE(std::filesystem::exists(dir_ / "ft.jsonl.manifest.json"));
}

TEST_F(CliTest, CurateUnknownEntry) {
    const auto r = run({"curate", "--entry", "deadbeef", "--disposition", "rejected"});
    EXPECT_EQ(r.code, cli::kExitRuntime);
    EXPECT_EQ(run({"curate", "--entry", "x", "--disposition", "maybe"}).code, cli::kExitUsage);
}

TEST(Cli, HelpExitsZero) {
    std::ostringstream out;
    std::ostringstream err;
    const char* argv[] = {"fiscalrag", "--help"};
    EXPECT_EQ(cli::run(2, argv, out, err), cli::kExitOk);
    EXPECT_NE(out.str().find("ingest"), std::string::npos);
}
