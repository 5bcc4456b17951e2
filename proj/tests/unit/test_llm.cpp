#include "fiscalrag/error.hpp"
#include "fiscalrag/llm.hpp"
#include "support.hpp"

#include <httplib.h>
#include <gtest/gtest.h>

#include <thread>

using namespace fiscalrag;
using fiscalrag::testing::LambdaProvider;
using fiscalrag::testing::TempDir;
using json = nlohmann::json;

namespace {

std::vector<llm::ChatMessage> user(std::string content) {
    return {{llm::Role::user, std::move(content)}};
}

} // namespace

TEST(ScriptedProvider, ExactRuleReplays) {
    auto provider = llm::ScriptedProvider::from_json(json::parse(R"([{"match": {"exact": "ping"}, "response": "pong"}])"));
    const auto completion = llm::complete(*provider, user("ping"), {});
    EXPECT_EQ(completion.text, "pong");
    EXPECT_GE(completion.latency_seconds, 0.0);
}

TEST(ScriptedProvider, ExactMatchIgnoresWhitespaceRuns) {
    auto provider = llm::ScriptedProvider::from_json(json::parse(R"([{"match": {"exact": "ping pong"}, "response": "ok"}])"));
    EXPECT_EQ(llm::complete(*provider, user("  ping \n pong "), {}).text, "ok");
}

TEST(ScriptedProvider, StrictMissNamesPromptHash) {
    auto provider = llm::ScriptedProvider::from_json(json::parse(R"([{"match": {"exact": "ping"}, "response": "pong"}])"));
    const auto messages = user("something else");
    try {
        llm::complete(*provider, messages, {});
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::ScriptMiss);
        const auto hash = text::hex64(text::fnv1a64(llm::transcript(messages)));
        EXPECT_EQ(e.subject(), hash);
        EXPECT_NE(std::string(e.what()).find(hash), std::string::npos);
    }
}

TEST(ScriptedProvider, LenientMissApologizes) {
    auto provider = llm::ScriptedProvider::from_json(json::parse(R"({"mode": "lenient", "rules": []})"));
    EXPECT_EQ(llm::complete(*provider, user("anything"), {}).text, llm::kApologyText);
    EXPECT_FALSE(provider->strict());
}

TEST(ScriptedProvider, RegexSearchesTranscriptAndSubstitutes) {
    auto provider = llm::ScriptedProvider::from_json(json::parse(
        R"js([{"match": {"regex": "\\[system\\]\\nbe brief"}, "response": "brief"},
            {"match": {"regex": "Question: (\\w+)"}, "response": "echo $1", "substitute": true}])js"));
    EXPECT_EQ(llm::complete(*provider, {{llm::Role::system, "be brief"}, {llm::Role::user, "x"}}, {}).text, "brief");
    EXPECT_EQ(llm::complete(*provider, user("Question: APBN?"), {}).text, "echo APBN");
}

TEST(ScriptedProvider, ExactRulesWinOverRegexRules) {
    auto provider = llm::ScriptedProvider::from_json(json::parse(
        R"([{"match": {"regex": "ping"}, "response": "regex"}, {"match": {"exact": "ping"}, "response": "exact"}])"));
    EXPECT_EQ(llm::complete(*provider, user("ping"), {}).text, "exact");
}

TEST(ScriptedProvider, LoadsFromFile) {
    TempDir dir;
    fiscalrag::testing::write_file(dir / "s.json", R"({"rules": [{"match": {"exact": "a"}, "response": "b"}]})");
    auto provider = llm::ScriptedProvider::from_file(dir / "s.json", "mine");
    EXPECT_EQ(provider->provider_id(), "mine");
    EXPECT_EQ(llm::complete(*provider, user("a"), {}).text, "b");
    EXPECT_THROW(llm::ScriptedProvider::from_file(dir / "missing.json"), Error);
}

TEST(Complete, SlowProviderTimesOut) {
    LambdaProvider slow([](const auto&) {
        std::this_thread::sleep_for(std::chrono::milliseconds(20));
        return std::string("late");
    });
    llm::ModelConfig config;
    config.timeout_seconds = 0.001;
    try {
        llm::complete(slow, user("q"), config);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::Timeout);
    }
}

TEST(Complete, TrimsTrailingWhitespace) {
    LambdaProvider p([](const auto&) { return std::string("  answer \n\n"); });
    EXPECT_EQ(llm::complete(p, user("q"), {}).text, "  answer");
}

TEST(Complete, RejectsInvalidMessageLists) {
    LambdaProvider p([](const auto&) { return std::string("x"); });
    EXPECT_THROW(llm::complete(p, {}, {}), Error);
    EXPECT_THROW(llm::complete(p, {{llm::Role::user, ""}}, {}), Error);
    EXPECT_THROW(llm::complete(p, {{llm::Role::assistant, "hi"}}, {}), Error);
}

TEST(RenderPrompt, SubstitutesIntoRoleSections) {
    const auto messages = llm::render_prompt("[system] Answer in {lang}. [user] {q}",
                                             {{"lang", "Indonesian"}, {"q", "Apa itu APBN?"}});
    ASSERT_EQ(messages.size(), 2u);
    EXPECT_EQ(messages[0], (llm::ChatMessage{llm::Role::system, "Answer in Indonesian."}));
    EXPECT_EQ(messages[1], (llm::ChatMessage{llm::Role::user, "Apa itu APBN?"}));
}

TEST(RenderPrompt, MissingVariableIsNamed) {
    try {
        llm::render_prompt("[system] Answer in {lang}. [user] {q}", {{"lang", "Indonesian"}});
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::MissingVariable);
        EXPECT_EQ(e.subject(), "q");
    }
}

TEST(RenderPrompt, ValuesAreInsertedVerbatim) {
    const auto messages = llm::render_prompt("[user] {a} and {b}", {{"a", "{b}"}, {"b", "{x} [system]"}});
    ASSERT_EQ(messages.size(), 1u);
    EXPECT_EQ(messages[0].content, "{b} and {x} [system]");
}

TEST(RenderPrompt, UnknownRoleSection) {
    try {
        llm::render_prompt("[system] a [tool] b", {});
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::UnknownRoleSection);
    }
}

TEST(RenderPrompt, EmptySectionsAreDroppedAndLeadingTextIsUser) {
    const auto messages = llm::render_prompt("hello {name}\n[system]\n{empty}\n[assistant] ok", {{"name", "x"}, {"empty", ""}});
    ASSERT_EQ(messages.size(), 2u);
    EXPECT_EQ(messages[0], (llm::ChatMessage{llm::Role::user, "hello x"}));
    EXPECT_EQ(messages[1], (llm::ChatMessage{llm::Role::assistant, "ok"}));
}

TEST(RenderPrompt, NonIdentifierBracesAreLiteral) {
    const auto messages = llm::render_prompt(R"([user] {"answer": 1} {q})", {{"q", "go"}});
    EXPECT_EQ(messages[0].content, R"({"answer": 1} go)");
}

TEST(TemplateStore, BuiltinsRenderWithTheirVariables) {
    const llm::TemplateStore store;
    const std::map<std::string, std::string> vars{
        {"language_instruction", "Respond in English."}, {"format_instruction", ""}, {"context", "c"},
        {"question", "q"}, {"summaries", "s"}, {"existing_answer", "e"}, {"text", "t"}, {"reference", "r"},
        {"statement", "st"}, {"ground_truth", "g"}, {"answer", "a"}};
    for (const char* id : {"stuff.v1", "map.v1", "reduce.v1", "refine_initial.v1", "refine_step.v1", "judge_claims.v1",
                           "judge_support.v1", "judge_relevance.v1", "judge_grade.v1", "finetune_system.v1"}) {
        ASSERT_TRUE(store.contains(id)) << id;
        EXPECT_FALSE(llm::render_prompt(store.get(id), vars).empty()) << id;
    }
    EXPECT_THROW(store.get("nope.v1"), Error);
}

TEST(TemplateStore, DirectoryOverridesBuiltins) {
    TempDir dir;
    fiscalrag::testing::write_file(dir / "stuff.v1.txt", "[user] custom {question}");
    const llm::TemplateStore store(dir.path());
    EXPECT_EQ(store.get("stuff.v1"), "[user] custom {question}");
    EXPECT_TRUE(store.contains("map.v1"));
}

TEST(ProviderRegistry, UnknownIdIsUnavailable) {
    llm::ProviderRegistry registry;
    registry.add("a", std::make_shared<LambdaProvider>([](const auto&) { return std::string("x"); }));
    EXPECT_TRUE(registry.contains("a"));
    try {
        registry.get("b");
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::ProviderUnavailable);
    }
}

TEST(RecordingProvider, CountsAndKeepsRequests) {
    llm::RecordingProvider rec(std::make_shared<LambdaProvider>([](const auto&) { return std::string("x"); }));
    llm::complete(rec, user("one"), {});
    llm::complete(rec, user("two"), {});
    EXPECT_EQ(rec.calls(), 2u);
    EXPECT_EQ(rec.requests()[1][0].content, "two");
    rec.reset();
    EXPECT_EQ(rec.calls(), 0u);
}

TEST(ModelConfig, JsonRoundTrip) {
    llm::ModelConfig config{"openai", "gpt-4o-mini", 0.2, 256, 12.5};
    const auto back = json(config).get<llm::ModelConfig>();
    EXPECT_EQ(back.provider_id, "openai");
    EXPECT_EQ(back.model_id, "gpt-4o-mini");
    EXPECT_EQ(back.max_tokens, 256);
    EXPECT_EQ(back.timeout_seconds, 12.5);
}

class OpenAIProviderTest : public ::testing::Test {
protected:
    void SetUp() override {
        server_.Post("/v1/chat/completions", [this](const httplib::Request& req, httplib::Response& res) {
            last_request_ = json::parse(req.body);
            last_auth_ = req.get_header_value("Authorization");
            const auto content = last_request_["messages"].back()["content"].get<std::string>();
            if (content == "too long") {
                res.status = 400;
                res.set_content(R"({"error": {"code": "context_length_exceeded", "message": "too long"}})",
                                "application/json");
                return;
            }
            if (content == "boom") {
                res.status = 500;
                return;
            }
            res.set_content(json{{"choices", {{{"message", {{"role", "assistant"}, {"content", "reply: " + content}}}}}},
                                 {"usage", {{"prompt_tokens", 7}, {"completion_tokens", 3}}}}
                                .dump(),
                            "application/json");
        });
        port_ = server_.bind_to_any_port("127.0.0.1");
        thread_ = std::thread([this] { server_.listen_after_bind(); });
        server_.wait_until_ready();
        setenv("FISCALRAG_TEST_KEY", "sekret", 1);
        provider_ = std::make_unique<llm::OpenAIChatProvider>(
            llm::OpenAIChatProvider::Options{"gpt", "http://127.0.0.1:" + std::to_string(port_), "FISCALRAG_TEST_KEY"});
    }
    void TearDown() override {
        server_.stop();
        thread_.join();
    }

    httplib::Server server_;
    int port_ = 0;
    std::thread thread_;
    json last_request_;
    std::string last_auth_;
    std::unique_ptr<llm::OpenAIChatProvider> provider_;
};

TEST_F(OpenAIProviderTest, SendsChatRequestAndParsesReply) {
    llm::ModelConfig config{"gpt", "gpt-test", 0.0, 64, 10};
    const auto completion = llm::complete(*provider_, {{llm::Role::system, "sys"}, {llm::Role::user, "hi"}}, config);
    EXPECT_EQ(completion.text, "reply: hi");
    ASSERT_TRUE(completion.token_usage);
    EXPECT_EQ(completion.token_usage->prompt, 7);
    EXPECT_EQ(last_request_["model"], "gpt-test");
    EXPECT_EQ(last_request_["messages"][0]["role"], "system");
    EXPECT_EQ(last_auth_, "Bearer sekret");
}

TEST_F(OpenAIProviderTest, ContextLengthErrorIsContextTooLarge) {
    try {
        llm::complete(*provider_, user("too long"), {"gpt", "m", 0.0, 64, 10});
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::ContextTooLarge);
    }
}

TEST_F(OpenAIProviderTest, ServerErrorIsProviderUnavailable) {
    try {
        llm::complete(*provider_, user("boom"), {"gpt", "m", 0.0, 64, 10});
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::ProviderUnavailable);
    }
}
