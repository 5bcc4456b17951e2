#include "fiscalrag/llm.hpp"
#include "fiscalrag/error.hpp"
#include "fiscalrag/http_client.hpp"
#include "fiscalrag/text.hpp"

#include <cctype>
#include <cstdlib>
#include <fstream>
#include <sstream>

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace fiscalrag::llm {

std::string_view to_string(Role role) noexcept {
    switch (role) {
    case Role::system: return "system";
    case Role::user: return "user";
    case Role::assistant: return "assistant";
    }
    return "user";
}

std::optional<Role> parse_role(std::string_view name) noexcept {
    if (name == "system") return Role::system;
    if (name == "user") return Role::user;
    if (name == "assistant") return Role::assistant;
    return std::nullopt;
}

void to_json(json& j, const ModelConfig& config) {
    j = json{{"provider_id", config.provider_id},
             {"model_id", config.model_id},
             {"temperature", config.temperature},
             {"max_tokens", config.max_tokens},
             {"timeout", config.timeout_seconds}};
}

void from_json(const json& j, ModelConfig& config) {
    ModelConfig defaults;
    config.provider_id = j.value("provider_id", defaults.provider_id);
    config.model_id = j.value("model_id", defaults.model_id);
    config.temperature = j.value("temperature", defaults.temperature);
    config.max_tokens = j.value("max_tokens", defaults.max_tokens);
    config.timeout_seconds = j.value("timeout", defaults.timeout_seconds);
    if (config.temperature < 0.0) throw Error(ErrorCode::InvalidArgument, "temperature must be >= 0");
    if (config.max_tokens <= 0) throw Error(ErrorCode::InvalidArgument, "max_tokens must be positive");
    if (!(config.timeout_seconds > 0.0)) throw Error(ErrorCode::InvalidArgument, "timeout must be positive");
}

void validate_messages(const std::vector<ChatMessage>& messages) {
    if (messages.empty()) throw Error(ErrorCode::InvalidArgument, "request has no messages");
    if (messages.front().role == Role::assistant) {
        throw Error(ErrorCode::InvalidArgument, "first message must be system or user");
    }
    for (std::size_t i = 0; i < messages.size(); ++i) {
        if (messages[i].content.empty()) {
            throw Error(ErrorCode::InvalidArgument, "message " + std::to_string(i) + " is empty");
        }
    }
}

namespace {

std::string rtrim(std::string s) {
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.pop_back();
    return s;
}

} // namespace

Completion complete(ChatProvider& provider, const std::vector<ChatMessage>& messages, const ModelConfig& config) {
    validate_messages(messages);
    const auto started = std::chrono::steady_clock::now();
    ProviderReply reply = provider.chat(messages, config);
    const double elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    if (elapsed > config.timeout_seconds) {
        throw Error(ErrorCode::Timeout, "provider " + provider.provider_id() + " took " + std::to_string(elapsed) +
                                            "s, limit " + std::to_string(config.timeout_seconds) + "s");
    }
    return Completion{rtrim(std::move(reply.text)), elapsed, reply.token_usage};
}

std::string transcript(const std::vector<ChatMessage>& messages) {
    std::string out;
    for (const auto& message : messages) {
        if (!out.empty()) out.push_back('\n');
        out += "[";
        out += to_string(message.role);
        out += "]\n";
        out += message.content;
    }
    return out;
}

namespace {

bool is_ident_start(char c) {
    return std::isalpha(static_cast<unsigned char>(c)) != 0 || c == '_';
}

bool is_ident_char(char c) {
    return std::isalnum(static_cast<unsigned char>(c)) != 0 || c == '_';
}

// Length of an identifier starting at `pos`, or 0.
std::size_t ident_length(std::string_view s, std::size_t pos) {
    if (pos >= s.size() || !is_ident_start(s[pos])) return 0;
    std::size_t end = pos + 1;
    while (end < s.size() && is_ident_char(s[end])) ++end;
    return end - pos;
}

std::string substitute(std::string_view section, const std::map<std::string, std::string>& vars) {
    std::string out;
    out.reserve(section.size());
    for (std::size_t i = 0; i < section.size(); ++i) {
        if (section[i] == '{') {
            const auto len = ident_length(section, i + 1);
            if (len > 0 && i + 1 + len < section.size() && section[i + 1 + len] == '}') {
                const std::string name(section.substr(i + 1, len));
                auto it = vars.find(name);
                if (it == vars.end()) throw Error(ErrorCode::MissingVariable, "no value for {" + name + "}", name);
                out += it->second;
                i += len + 1;
                continue;
            }
        }
        out.push_back(section[i]);
    }
    return out;
}

} // namespace

std::vector<ChatMessage> render_prompt(std::string_view tmpl, const std::map<std::string, std::string>& vars) {
    struct Section {
        Role role;
        std::size_t begin;
        std::size_t end;
    };
    std::vector<Section> sections;
    Role current = Role::user;
    std::size_t section_begin = 0;

    for (std::size_t i = 0; i < tmpl.size(); ++i) {
        if (tmpl[i] != '[') continue;
        const auto len = ident_length(tmpl, i + 1);
        if (len == 0 || i + 1 + len >= tmpl.size() || tmpl[i + 1 + len] != ']') continue;
        const auto name = tmpl.substr(i + 1, len);
        const auto role = parse_role(name);
        if (!role) throw Error(ErrorCode::UnknownRoleSection, "unknown section [" + std::string(name) + "]", std::string(name));
        sections.push_back({current, section_begin, i});
        current = *role;
        section_begin = i + len + 2;
        i += len + 1;
    }
    sections.push_back({current, section_begin, tmpl.size()});

    std::vector<ChatMessage> messages;
    for (const auto& section : sections) {
        const std::string raw = text::trim(tmpl.substr(section.begin, section.end - section.begin));
        if (raw.empty()) continue;
        std::string content = text::trim(substitute(raw, vars));
        if (content.empty()) continue;
        messages.push_back({section.role, std::move(content)});
    }
    return messages;
}

ScriptedProvider::ScriptedProvider(std::vector<Rule> rules, bool strict, std::string id)
    : strict_(strict), id_(std::move(id)) {
    for (auto& rule : rules) {
        CompiledRule compiled{std::move(rule), std::nullopt};
        if (compiled.rule.pattern) {
            try {
                compiled.regex.emplace(*compiled.rule.pattern, std::regex::ECMAScript);
            } catch (const std::regex_error& e) {
                throw Error(ErrorCode::InvalidArgument, "bad script regex '" + *compiled.rule.pattern + "': " + e.what());
            }
        }
        if (compiled.rule.exact) compiled.rule.exact = text::collapse_whitespace(*compiled.rule.exact);
        if (!compiled.rule.exact && !compiled.rule.pattern) {
            throw Error(ErrorCode::InvalidArgument, "script rule needs match.exact or match.regex");
        }
        rules_.push_back(std::move(compiled));
    }
}

std::shared_ptr<ScriptedProvider> ScriptedProvider::from_json(const json& script, std::string id) {
    bool strict = true;
    const json* rules_json = &script;
    if (script.is_object()) {
        strict = script.value("mode", std::string("strict")) != "lenient";
        rules_json = &script.at("rules");
    }
    if (!rules_json->is_array()) throw Error(ErrorCode::InvalidArgument, "script rules must be an array");

    std::vector<Rule> rules;
    for (const auto& item : *rules_json) {
        Rule rule;
        const auto& match = item.at("match");
        if (match.contains("exact")) rule.exact = match.at("exact").get<std::string>();
        if (match.contains("regex")) rule.pattern = match.at("regex").get<std::string>();
        rule.response = item.at("response").get<std::string>();
        rule.substitute = item.value("substitute", false);
        rules.push_back(std::move(rule));
    }
    return std::make_shared<ScriptedProvider>(std::move(rules), strict, std::move(id));
}

std::shared_ptr<ScriptedProvider> ScriptedProvider::from_file(const fs::path& path, std::string id) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::NotFound, "cannot open script", path.string());
    try {
        return from_json(json::parse(in), std::move(id));
    } catch (const json::exception& e) {
        throw Error(ErrorCode::InvalidArgument, std::string("malformed script: ") + e.what(), path.string());
    }
}

ProviderReply ScriptedProvider::chat(const std::vector<ChatMessage>& messages, const ModelConfig&) {
    std::string last_user;
    for (auto it = messages.rbegin(); it != messages.rend(); ++it) {
        if (it->role == Role::user) {
            last_user = text::collapse_whitespace(it->content);
            break;
        }
    }
    for (const auto& compiled : rules_) {
        if (compiled.rule.exact && *compiled.rule.exact == last_user) return {compiled.rule.response, std::nullopt};
    }
    const std::string full = transcript(messages);
    for (const auto& compiled : rules_) {
        if (!compiled.regex) continue;
        std::smatch match;
        if (std::regex_search(full, match, *compiled.regex)) {
            return {compiled.rule.substitute ? match.format(compiled.rule.response) : compiled.rule.response,
                    std::nullopt};
        }
    }
    if (strict_) {
        const auto hash = text::hex64(text::fnv1a64(full));
        throw Error(ErrorCode::ScriptMiss, "no script rule matches prompt " + hash, hash);
    }
    return {std::string(kApologyText), std::nullopt};
}

OpenAIChatProvider::OpenAIChatProvider(Options options) : options_(std::move(options)) {
    if (const char* key = std::getenv(options_.api_key_env.c_str())) api_key_ = key;
}

ProviderReply OpenAIChatProvider::chat(const std::vector<ChatMessage>& messages, const ModelConfig& config) {
    json request{{"model", config.model_id},
                 {"temperature", config.temperature},
                 {"max_tokens", config.max_tokens},
                 {"messages", json::array()}};
    for (const auto& message : messages) {
        request["messages"].push_back({{"role", to_string(message.role)}, {"content", message.content}});
    }
    std::vector<std::pair<std::string, std::string>> headers;
    if (!api_key_.empty()) headers.emplace_back("Authorization", "Bearer " + api_key_);

    const auto timeout = std::chrono::milliseconds(static_cast<long long>(config.timeout_seconds * 1000.0) + 1);
    const auto response = http::post_json(options_.base_url, "/v1/chat/completions", headers, request.dump(), timeout);
    if (response.timed_out) throw Error(ErrorCode::Timeout, "chat request timed out: " + response.error);
    if (response.status == 0) throw Error(ErrorCode::ProviderUnavailable, "chat request failed: " + response.error);
    if (response.status == 400 && response.body.find("context_length_exceeded") != std::string::npos) {
        throw Error(ErrorCode::ContextTooLarge, "provider rejected the prompt as too long");
    }
    if (response.status != 200) {
        throw Error(ErrorCode::ProviderUnavailable, "chat request failed with HTTP " + std::to_string(response.status));
    }
    try {
        const auto body = json::parse(response.body);
        ProviderReply reply;
        reply.text = body.at("choices").at(0).at("message").at("content").get<std::string>();
        if (body.contains("usage")) {
            const auto& usage = body["usage"];
            reply.token_usage = TokenUsage{usage.value("prompt_tokens", 0), usage.value("completion_tokens", 0)};
        }
        return reply;
    } catch (const json::exception& e) {
        throw Error(ErrorCode::ProviderUnavailable, std::string("malformed chat response: ") + e.what());
    }
}

ProviderReply RecordingProvider::chat(const std::vector<ChatMessage>& messages, const ModelConfig& config) {
    {
        std::lock_guard lock(mutex_);
        requests_.push_back(messages);
    }
    return inner_->chat(messages, config);
}

std::size_t RecordingProvider::calls() const {
    std::lock_guard lock(mutex_);
    return requests_.size();
}

std::vector<std::vector<ChatMessage>> RecordingProvider::requests() const {
    std::lock_guard lock(mutex_);
    return requests_;
}

void RecordingProvider::reset() {
    std::lock_guard lock(mutex_);
    requests_.clear();
}

void ProviderRegistry::add(const std::string& id, std::shared_ptr<ChatProvider> provider) {
    providers_[id] = std::move(provider);
}

std::shared_ptr<ChatProvider> ProviderRegistry::get(const std::string& id) const {
    auto it = providers_.find(id);
    if (it == providers_.end()) throw Error(ErrorCode::ProviderUnavailable, "no provider registered as '" + id + "'", id);
    return it->second;
}

bool ProviderRegistry::contains(const std::string& id) const {
    return providers_.contains(id);
}

std::vector<std::string> ProviderRegistry::ids() const {
    std::vector<std::string> out;
    for (const auto& [id, provider] : providers_) out.push_back(id);
    return out;
}

namespace {

const std::map<std::string, std::string>& builtin_templates() {
    static const std::map<std::string, std::string> templates = {
        {"stuff.v1",
         "[system]\n"
         "You answer questions about Indonesian government financial data and regulations. "
         "Use only the context provided by the user. If the context does not contain the answer, "
         "say that you cannot answer.\n"
         "{language_instruction}\n"
         "{format_instruction}\n"
         "[user]\n"
         "Context:\n{context}\n\n"
         "Question: {question}\n"},
        {"map.v1",
         "[system]\n"
         "Extract the facts from the context that help answer the question. "
         "Reply NONE if nothing is relevant.\n"
         "{language_instruction}\n"
         "[user]\n"
         "Context:\n{context}\n\n"
         "Question: {question}\n"},
        {"reduce.v1",
         "[system]\n"
         "Combine the extracted facts into one answer. If the facts do not contain the answer, "
         "say that you cannot answer.\n"
         "{language_instruction}\n"
         "{format_instruction}\n"
         "[user]\n"
         "Extracted facts:\n{summaries}\n\n"
         "Question: {question}\n"},
        {"refine_initial.v1",
         "[system]\n"
         "You answer questions about Indonesian government financial data and regulations. "
         "Use only the context provided by the user. If the context does not contain the answer, "
         "say that you cannot answer.\n"
         "{language_instruction}\n"
         "{format_instruction}\n"
         "[user]\n"
         "Context:\n{context}\n\n"
         "Question: {question}\n"},
        {"refine_step.v1",
         "[system]\n"
         "Improve the existing answer with the additional context. Keep the existing answer "
         "unchanged if the additional context does not help.\n"
         "{language_instruction}\n"
         "{format_instruction}\n"
         "[user]\n"
         "Question: {question}\n\n"
         "Existing answer:\n{existing_answer}\n\n"
         "Additional context:\n{context}\n"},
        {"judge_claims.v1",
         "[system]\n"
         "Break the text into standalone factual claims. Output one claim per line and nothing else.\n"
         "[user]\n{text}\n"},
        {"judge_support.v1",
         "[system]\n"
         "Decide whether the statement can be inferred from the reference text. Reply YES or NO.\n"
         "[user]\n"
         "Reference text:\n{reference}\n\n"
         "Statement: {statement}\n"},
        {"judge_relevance.v1",
         "[system]\n"
         "Decide whether the context was useful for arriving at the reference answer. Reply YES or NO.\n"
         "[user]\n"
         "Reference answer:\n{ground_truth}\n\n"
         "Context:\n{context}\n"},
        {"judge_grade.v1",
         "[system]\n"
         "Grade the answer against the reference answer. Reply YES if it is correct and NO otherwise.\n"
         "[user]\n"
         "Question: {question}\n"
         "Reference answer: {ground_truth}\n"
         "Answer: {answer}\n"},
        {"finetune_system.v1",
         "You answer questions about Indonesian government financial data and regulations. "
         "Respond in the language of the question."},
    };
    return templates;
}

} // namespace

TemplateStore::TemplateStore() : templates_(builtin_templates()) {}

TemplateStore::TemplateStore(const fs::path& directory) : TemplateStore() {
    std::error_code ec;
    if (!fs::is_directory(directory, ec)) return;
    for (const auto& entry : fs::directory_iterator(directory)) {
        if (!entry.is_regular_file() || entry.path().extension() != ".txt") continue;
        std::ifstream in(entry.path());
        std::ostringstream buf;
        buf << in.rdbuf();
        templates_[entry.path().stem().string()] = buf.str();
    }
}

const std::string& TemplateStore::get(const std::string& id) const {
    auto it = templates_.find(id);
    if (it == templates_.end()) throw Error(ErrorCode::NotFound, "unknown template '" + id + "'", id);
    return it->second;
}

void TemplateStore::set(const std::string& id, std::string body) {
    templates_[id] = std::move(body);
}

bool TemplateStore::contains(const std::string& id) const {
    return templates_.contains(id);
}

} // namespace fiscalrag::llm
