#include "fiscalrag/rag.hpp"
#include "fiscalrag/error.hpp"
#include "fiscalrag/text.hpp"

#include <chrono>

using json = nlohmann::json;

namespace fiscalrag::rag {

std::string_view to_string(Language language) noexcept {
    switch (language) {
    case Language::id: return "id";
    case Language::en: return "en";
    case Language::other: return "other";
    }
    return "other";
}

std::optional<Language> parse_language(std::string_view name) noexcept {
    if (name == "id") return Language::id;
    if (name == "en") return Language::en;
    if (name == "other") return Language::other;
    return std::nullopt;
}

std::string_view to_string(ChainType chain) noexcept {
    switch (chain) {
    case ChainType::stuff: return "stuff";
    case ChainType::map_reduce: return "map_reduce";
    case ChainType::refine: return "refine";
    }
    return "stuff";
}

std::optional<ChainType> parse_chain(std::string_view name) noexcept {
    if (name == "stuff") return ChainType::stuff;
    if (name == "map_reduce") return ChainType::map_reduce;
    if (name == "refine") return ChainType::refine;
    return std::nullopt;
}

Language detect_language(std::string_view question) {
    std::size_t id_hits = 0;
    std::size_t en_hits = 0;
    for (const auto& token : text::tokenize(question)) {
        if (text::indonesian_stopwords().contains(token)) ++id_hits;
        if (text::english_stopwords().contains(token)) ++en_hits;
    }
    if (id_hits > en_hits) return Language::id;
    if (en_hits > id_hits) return Language::en;
    return Language::other;
}

std::string language_instruction(Language language) {
    switch (language) {
    case Language::id: return "Respond in Indonesian.";
    case Language::en: return "Respond in English.";
    case Language::other: break;
    }
    return "Respond in the same language as the question.";
}

void to_json(json& j, const RagConfig& config) {
    j = json{{"k", config.k},
             {"chain", to_string(config.chain)},
             {"model", config.model},
             {"language_policy", config.language_policy.forced ? std::string(to_string(*config.language_policy.forced))
                                                                : std::string("match_input")},
             {"structured_output", config.structured_output},
             {"context_budget_chars", config.context_budget_chars}};
}

void from_json(const json& j, RagConfig& config) {
    if (j.contains("k")) {
        const auto k = j.at("k").get<long long>();
        if (k < 1) throw Error(ErrorCode::InvalidArgument, "k must be at least 1");
        config.k = static_cast<std::size_t>(k);
    }
    if (j.contains("chain")) {
        const auto name = j.at("chain").get<std::string>();
        const auto chain = parse_chain(name);
        if (!chain) throw Error(ErrorCode::InvalidArgument, "unknown chain '" + name + "'");
        config.chain = *chain;
    }
    if (j.contains("model")) config.model = j.at("model").get<llm::ModelConfig>();
    if (j.contains("language_policy")) {
        const auto policy = j.at("language_policy").get<std::string>();
        if (policy == "match_input") {
            config.language_policy.forced.reset();
        } else if (auto lang = parse_language(policy)) {
            config.language_policy.forced = *lang;
        } else {
            throw Error(ErrorCode::InvalidArgument, "unknown language policy '" + policy + "'");
        }
    }
    config.structured_output = j.value("structured_output", config.structured_output);
    config.context_budget_chars = j.value("context_budget_chars", config.context_budget_chars);
}

namespace {

json table_json(const std::optional<Table>& table) {
    if (!table) return nullptr;
    return json{{"columns", table->columns}, {"rows", table->rows}};
}

} // namespace

void to_json(json& j, const AnswerPayload& payload) {
    j = stable_json(payload);
    j["latency"] = payload.latency_seconds;
}

void from_json(const json& j, AnswerPayload& payload) {
    payload.answer = j.at("answer").get<std::string>();
    payload.language = parse_language(j.value("language", "other")).value_or(Language::other);
    payload.table.reset();
    if (j.contains("table") && j["table"].is_object()) {
        payload.table = Table{j["table"].at("columns").get<std::vector<std::string>>(),
                              j["table"].at("rows").get<std::vector<std::vector<std::string>>>()};
    }
    payload.sources.clear();
    for (const auto& s : j.value("sources", json::array())) {
        Source source;
        source.chunk_key = s.at("chunk_key").get<std::string>();
        source.source_uri = s.value("source_uri", "");
        source.score = s.value("score", 0.0);
        if (s.contains("span")) {
            source.start = s["span"].at(0).get<std::size_t>();
            source.end = s["span"].at(1).get<std::size_t>();
        }
        payload.sources.push_back(std::move(source));
    }
    payload.latency_seconds = j.value("latency", 0.0);
    payload.chain_used = parse_chain(j.value("chain_used", "stuff")).value_or(ChainType::stuff);
    payload.template_id = j.value("template_id", "");
    payload.parse_fallback = j.value("parse_fallback", false);
    payload.contexts = j.value("contexts", std::vector<std::string>{});
}

json stable_json(const AnswerPayload& payload) {
    json sources = json::array();
    for (const auto& s : payload.sources) {
        sources.push_back({{"chunk_key", s.chunk_key},
                           {"source_uri", s.source_uri},
                           {"score", s.score},
                           {"span", {s.start, s.end}}});
    }
    return json{{"answer", payload.answer},
                {"language", to_string(payload.language)},
                {"table", table_json(payload.table)},
                {"sources", std::move(sources)},
                {"chain_used", to_string(payload.chain_used)},
                {"template_id", payload.template_id},
                {"parse_fallback", payload.parse_fallback},
                {"contexts", payload.contexts}};
}

std::string format_contexts(const std::vector<Context>& contexts, std::size_t first_rank) {
    std::string out;
    for (std::size_t i = 0; i < contexts.size(); ++i) {
        if (!out.empty()) out += "\n\n";
        out += "[source " + std::to_string(first_rank + i) + ": " + contexts[i].source_uri + "]\n";
        out += contexts[i].text;
    }
    return out;
}

namespace {

std::map<std::string, std::string> base_vars(const ChainSettings& settings) {
    return {{"question", settings.question},
            {"language_instruction", settings.language_instruction},
            {"format_instruction", settings.structured_output ? std::string(kStructuredInstruction) : std::string()}};
}

std::string call(llm::ChatProvider& provider, const llm::ModelConfig& model,
                 const std::vector<llm::ChatMessage>& messages) {
    return llm::complete(provider, messages, model).text;
}

void require_contexts(const std::vector<Context>& contexts, std::string_view chain) {
    if (contexts.empty()) {
        throw Error(ErrorCode::InvalidArgument, std::string(chain) + " chain needs at least one context");
    }
}

} // namespace

std::vector<llm::ChatMessage> chain_stuff(const llm::TemplateStore& templates, const ChainSettings& settings,
                                          const std::vector<Context>& contexts) {
    std::size_t total = 0;
    for (const auto& context : contexts) total += text::codepoint_count(context.text);
    if (total > settings.context_budget_chars) {
        throw Error(ErrorCode::ContextBudgetExceeded,
                    std::to_string(total) + " context characters exceed the budget of " +
                        std::to_string(settings.context_budget_chars) + "; lower k or use map_reduce/refine");
    }
    auto vars = base_vars(settings);
    vars["context"] = contexts.empty() ? std::string(kNoContextClause) : format_contexts(contexts);
    return llm::render_prompt(templates.get("stuff.v1"), vars);
}

ChainResult chain_map_reduce(llm::ChatProvider& provider, const llm::ModelConfig& model,
                             const llm::TemplateStore& templates, const ChainSettings& settings,
                             const std::vector<Context>& contexts) {
    require_contexts(contexts, "map_reduce");
    ChainResult result;
    std::vector<Context> mapped;
    mapped.reserve(contexts.size());
    for (std::size_t i = 0; i < contexts.size(); ++i) {
        auto vars = base_vars(settings);
        vars["context"] = format_contexts({contexts[i]}, i + 1);
        Context extracted = contexts[i];
        extracted.text = call(provider, model, llm::render_prompt(templates.get("map.v1"), vars));
        ++result.calls;
        mapped.push_back(std::move(extracted));
    }
    auto vars = base_vars(settings);
    vars["summaries"] = format_contexts(mapped);
    result.text = call(provider, model, llm::render_prompt(templates.get("reduce.v1"), vars));
    ++result.calls;
    result.template_id = "reduce.v1";
    return result;
}

ChainResult chain_refine(llm::ChatProvider& provider, const llm::ModelConfig& model,
                         const llm::TemplateStore& templates, const ChainSettings& settings,
                         const std::vector<Context>& contexts) {
    require_contexts(contexts, "refine");
    ChainResult result;
    auto vars = base_vars(settings);
    vars["context"] = format_contexts({contexts.front()}, 1);
    result.text = call(provider, model, llm::render_prompt(templates.get("refine_initial.v1"), vars));
    result.calls = 1;
    result.template_id = "refine_initial.v1";
    for (std::size_t i = 1; i < contexts.size(); ++i) {
        auto step = base_vars(settings);
        step["existing_answer"] = result.text;
        step["context"] = format_contexts({contexts[i]}, i + 1);
        result.text = call(provider, model, llm::render_prompt(templates.get("refine_step.v1"), step));
        ++result.calls;
        result.template_id = "refine_step.v1";
    }
    return result;
}

ChainResult run_chain(ChainType chain, llm::ChatProvider& provider, const llm::ModelConfig& model,
                      const llm::TemplateStore& templates, const ChainSettings& settings,
                      const std::vector<Context>& contexts) {
    switch (chain) {
    case ChainType::map_reduce: return chain_map_reduce(provider, model, templates, settings, contexts);
    case ChainType::refine: return chain_refine(provider, model, templates, settings, contexts);
    case ChainType::stuff: break;
    }
    ChainResult result;
    result.text = call(provider, model, chain_stuff(templates, settings, contexts));
    result.calls = 1;
    result.template_id = "stuff.v1";
    return result;
}

namespace {

std::optional<Table> parse_table(const json& value) {
    if (value.is_null()) return std::nullopt;
    auto cell = [](const json& v) -> std::string {
        if (v.is_string()) return v.get<std::string>();
        if (v.is_number() || v.is_boolean()) return v.dump();
        throw Error(ErrorCode::InvalidArgument, "table cell must be a string or number");
    };
    Table table;
    for (const auto& column : value.at("columns")) table.columns.push_back(cell(column));
    for (const auto& row : value.at("rows")) {
        std::vector<std::string> cells;
        for (const auto& v : row) cells.push_back(cell(v));
        if (cells.size() != table.columns.size()) {
            throw Error(ErrorCode::InvalidArgument, "table row length differs from column count");
        }
        table.rows.push_back(std::move(cells));
    }
    return table;
}

} // namespace

StructuredOutput parse_structured(std::string_view raw) {
    StructuredOutput fallback{std::string(raw), std::nullopt, true};
    const auto open = raw.find("```json");
    if (open == std::string_view::npos) return fallback;
    const auto body_begin = raw.find('\n', open);
    if (body_begin == std::string_view::npos) return fallback;
    const auto close = raw.find("```", body_begin + 1);
    if (close == std::string_view::npos) return fallback;

    try {
        const auto parsed = json::parse(raw.substr(body_begin + 1, close - body_begin - 1));
        if (!parsed.is_object() || !parsed.contains("answer") || !parsed["answer"].is_string()) return fallback;
        StructuredOutput out;
        out.answer = parsed["answer"].get<std::string>();
        if (parsed.contains("table")) out.table = parse_table(parsed["table"]);
        return out;
    } catch (const json::exception&) {
        return fallback;
    } catch (const Error&) {
        return fallback;
    }
}

AnswerPayload answer(std::string_view question, const RagConfig& config, const Corpus& corpus,
                     llm::ChatProvider& provider, const llm::TemplateStore& templates,
                     const index::MetadataFilter& filter) {
    const auto started = std::chrono::steady_clock::now();
    if (text::trim(question).empty()) throw Error(ErrorCode::InvalidArgument, "question is empty");
    if (config.k < 1) throw Error(ErrorCode::InvalidArgument, "k must be at least 1");
    if (corpus.index.size() == 0) throw Error(ErrorCode::EmptyIndex, "the index has no documents");

    const std::string q(question);
    const auto query_vector = corpus.embedder.embed_one(q);
    const auto results = corpus.index.query(query_vector, config.k, filter);

    AnswerPayload payload;
    std::vector<Context> contexts;
    contexts.reserve(results.size());
    for (const auto& result : results) {
        auto entry = corpus.index.get(result.chunk_key);
        if (!entry) continue;  // deleted between query and fetch
        const auto uri_it = entry->metadata.find("source_uri");
        const std::string uri = uri_it != entry->metadata.end() ? uri_it->second : entry->chunk.doc_id;
        contexts.push_back({result.chunk_key, uri, entry->chunk.text, result.score});
        payload.sources.push_back({result.chunk_key, uri, result.score, entry->chunk.span.start, entry->chunk.span.end});
        payload.contexts.push_back(entry->chunk.text);
    }

    const Language detected = detect_language(q);
    payload.language = config.language_policy.forced.value_or(detected);

    ChainSettings settings;
    settings.question = q;
    settings.language_instruction = language_instruction(payload.language);
    settings.structured_output = config.structured_output;
    settings.context_budget_chars = config.context_budget_chars;

    // A filter can leave nothing to map or refine; the stuff prompt carries the no-context clause.
    const ChainType chain = contexts.empty() ? ChainType::stuff : config.chain;
    const auto result = run_chain(chain, provider, config.model, templates, settings, contexts);
    payload.chain_used = chain;
    payload.template_id = result.template_id;
    if (config.structured_output) {
        auto structured = parse_structured(result.text);
        payload.answer = std::move(structured.answer);
        payload.table = std::move(structured.table);
        payload.parse_fallback = structured.parse_fallback;
    } else {
        payload.answer = result.text;
    }
    payload.latency_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    return payload;
}

} // namespace fiscalrag::rag
