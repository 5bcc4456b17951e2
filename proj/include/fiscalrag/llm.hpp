#pragma once

#include <atomic>
#include <chrono>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <regex>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

namespace fiscalrag::llm {

enum class Role { system, user, assistant };

std::string_view to_string(Role role) noexcept;
std::optional<Role> parse_role(std::string_view name) noexcept;

struct ChatMessage {
    Role role = Role::user;
    std::string content;

    bool operator==(const ChatMessage&) const = default;
};

struct ModelConfig {
    std::string provider_id = "scripted";
    std::string model_id = "scripted";
    double temperature = 0.0;
    int max_tokens = 1024;
    double timeout_seconds = 60.0;
};

void to_json(nlohmann::json& j, const ModelConfig& config);
void from_json(const nlohmann::json& j, ModelConfig& config);

struct TokenUsage {
    int prompt = 0;
    int completion = 0;
};

struct Completion {
    std::string text;
    double latency_seconds = 0.0;
    std::optional<TokenUsage> token_usage;
};

struct ProviderReply {
    std::string text;
    std::optional<TokenUsage> token_usage;
};

/// A chat-completion backend. Implementations must be callable concurrently.
class ChatProvider {
public:
    virtual ~ChatProvider() = default;
    virtual std::string provider_id() const = 0;
    virtual ProviderReply chat(const std::vector<ChatMessage>& messages, const ModelConfig& config) = 0;
};

/// Throws InvalidArgument unless messages are non-empty, every content is
/// non-empty and the first message is system or user.
void validate_messages(const std::vector<ChatMessage>& messages);

/// Calls the provider, timing the call with a steady clock. A call that runs
/// past config.timeout_seconds fails with Timeout. Trailing whitespace is
/// stripped from the returned text.
Completion complete(ChatProvider& provider, const std::vector<ChatMessage>& messages, const ModelConfig& config);

/// "[system]\n...\n[user]\n..." rendering used for script matching and audit logs.
std::string transcript(const std::vector<ChatMessage>& messages);

/// Splits a template on [system]/[user]/[assistant] markers (text before the
/// first marker is a user section), then substitutes {name} placeholders in
/// each section. Values are inserted verbatim and never re-expanded. Any other
/// [word] marker is UnknownRoleSection; an unbound placeholder is
/// MissingVariable. Sections that render empty are dropped.
std::vector<ChatMessage> render_prompt(std::string_view tmpl, const std::map<std::string, std::string>& vars);

/// Replays canned responses. Matching order: exact rules against the
/// whitespace-normalized last user message, then regex rules (ECMAScript,
/// searched over the transcript) in file order. Strict mode raises ScriptMiss
/// on no match; lenient mode returns kApologyText.
///
/// Script JSON: {"mode": "strict"|"lenient", "rules": [{"match": {"exact": s} |
/// {"regex": s}, "response": s, "substitute": bool}]}; a bare rule array is
/// also accepted (strict). With substitute=true the response is a match
/// format string ($1, $& ...).
class ScriptedProvider final : public ChatProvider {
public:
    struct Rule {
        std::optional<std::string> exact;
        std::optional<std::string> pattern;
        std::string response;
        bool substitute = false;
    };

    ScriptedProvider(std::vector<Rule> rules, bool strict = true, std::string id = "scripted");

    static std::shared_ptr<ScriptedProvider> from_json(const nlohmann::json& script, std::string id = "scripted");
    static std::shared_ptr<ScriptedProvider> from_file(const std::filesystem::path& path, std::string id = "scripted");

    std::string provider_id() const override { return id_; }
    ProviderReply chat(const std::vector<ChatMessage>& messages, const ModelConfig& config) override;

    bool strict() const noexcept { return strict_; }

private:
    struct CompiledRule {
        Rule rule;
        std::optional<std::regex> regex;
    };

    std::vector<CompiledRule> rules_;
    bool strict_;
    std::string id_;
};

inline constexpr std::string_view kApologyText =
    "Maaf, saya belum dapat menjawab pertanyaan tersebut. / Sorry, I cannot answer that question yet.";

/// OpenAI-compatible POST {base_url}/v1/chat/completions.
class OpenAIChatProvider final : public ChatProvider {
public:
    struct Options {
        std::string id = "openai";
        std::string base_url = "https://api.openai.com";
        std::string api_key_env = "OPENAI_API_KEY";
    };

    explicit OpenAIChatProvider(Options options);

    std::string provider_id() const override { return options_.id; }
    ProviderReply chat(const std::vector<ChatMessage>& messages, const ModelConfig& config) override;

private:
    Options options_;
    std::string api_key_;
};

/// Decorator that counts calls and keeps every request, for tests and audits.
class RecordingProvider final : public ChatProvider {
public:
    explicit RecordingProvider(std::shared_ptr<ChatProvider> inner) : inner_(std::move(inner)) {}

    std::string provider_id() const override { return inner_->provider_id(); }
    ProviderReply chat(const std::vector<ChatMessage>& messages, const ModelConfig& config) override;

    std::size_t calls() const;
    std::vector<std::vector<ChatMessage>> requests() const;
    void reset();

private:
    std::shared_ptr<ChatProvider> inner_;
    mutable std::mutex mutex_;
    std::vector<std::vector<ChatMessage>> requests_;
};

class ProviderRegistry {
public:
    void add(const std::string& id, std::shared_ptr<ChatProvider> provider);
    /// Throws ProviderUnavailable for unknown ids.
    std::shared_ptr<ChatProvider> get(const std::string& id) const;
    bool contains(const std::string& id) const;
    std::vector<std::string> ids() const;

private:
    std::map<std::string, std::shared_ptr<ChatProvider>> providers_;
};

/// Prompt templates by id ("stuff.v1", ...). Built-in defaults can be
/// overridden by "<id>.txt" files in a templates directory.
class TemplateStore {
public:
    TemplateStore();
    explicit TemplateStore(const std::filesystem::path& directory);

    const std::string& get(const std::string& id) const;
    void set(const std::string& id, std::string body);
    bool contains(const std::string& id) const;

private:
    std::map<std::string, std::string> templates_;
};

} // namespace fiscalrag::llm
