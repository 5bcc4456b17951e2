#include "fiscalrag/eval.hpp"
#include "fiscalrag/error.hpp"
#include "fiscalrag/text.hpp"

#include <algorithm>
#include <atomic>
#include <cctype>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <regex>
#include <sstream>
#include <thread>

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace fiscalrag::eval {

void to_json(json& j, const EvalRecord& record) {
    j = json{{"question", record.question},
             {"answer", record.answer},
             {"contexts", record.contexts},
             {"ground_truth", record.ground_truth}};
    if (record.human_label) j["human_label"] = *record.human_label;
}

void from_json(const json& j, EvalRecord& record) {
    record.question = j.at("question").get<std::string>();
    record.answer = j.at("answer").get<std::string>();
    record.contexts = j.value("contexts", std::vector<std::string>{});
    record.ground_truth = j.at("ground_truth").get<std::string>();
    record.human_label.reset();
    if (j.contains("human_label") && j["human_label"].is_boolean()) record.human_label = j["human_label"].get<bool>();
}

std::vector<EvalRecord> read_records_jsonl(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::NotFound, "cannot open records", path.string());
    std::vector<EvalRecord> records;
    std::string line;
    while (std::getline(in, line)) {
        if (text::trim(line).empty()) continue;
        records.push_back(json::parse(line).get<EvalRecord>());
    }
    return records;
}

std::vector<std::string> split_sentences(std::string_view input) {
    std::vector<std::string> out;
    std::size_t begin = 0;
    auto flush = [&](std::size_t end) {
        auto sentence = text::trim(input.substr(begin, end - begin));
        if (!sentence.empty()) out.push_back(std::move(sentence));
        begin = end;
    };
    for (std::size_t i = 0; i < input.size(); ++i) {
        const char c = input[i];
        if (c != '.' && c != '!' && c != '?') continue;
        const bool at_end = i + 1 == input.size();
        if (at_end || std::isspace(static_cast<unsigned char>(input[i + 1]))) flush(i + 1);
    }
    flush(input.size());
    return out;
}

RuleJudge::RuleJudge(RuleJudgeParams params) : params_(std::move(params)) {
    if (params_.stopwords.empty()) params_.stopwords = text::default_stopwords();
    if (!(params_.support_threshold > 0.0 && params_.support_threshold <= 1.0)) {
        throw Error(ErrorCode::InvalidParams, "support threshold must be in (0, 1]");
    }
    if (!(params_.relevance_threshold > 0.0 && params_.relevance_threshold <= 1.0)) {
        throw Error(ErrorCode::InvalidParams, "relevance threshold must be in (0, 1]");
    }
}

std::vector<std::string> RuleJudge::content_tokens(std::string_view input) const {
    auto tokens = text::tokenize(input);
    std::erase_if(tokens, [&](const std::string& t) { return params_.stopwords.contains(t); });
    return tokens;
}

double RuleJudge::coverage(std::string_view statement, std::string_view reference) const {
    const auto statement_tokens = content_tokens(statement);
    const std::unordered_set<std::string> wanted(statement_tokens.begin(), statement_tokens.end());
    if (wanted.empty()) return 0.0;
    const auto reference_tokens = text::tokenize(reference);
    const std::unordered_set<std::string> available(reference_tokens.begin(), reference_tokens.end());
    std::size_t present = 0;
    for (const auto& token : wanted) present += available.contains(token) ? 1 : 0;
    return static_cast<double>(present) / static_cast<double>(wanted.size());
}

std::vector<std::string> RuleJudge::split_claims(std::string_view input) {
    auto sentences = eval::split_sentences(input);
    std::erase_if(sentences, [&](const std::string& s) { return content_tokens(s).size() < params_.min_claim_tokens; });
    return sentences;
}

std::vector<std::string> RuleJudge::split_sentences(std::string_view input) {
    auto sentences = eval::split_sentences(input);
    std::erase_if(sentences, [&](const std::string& s) { return content_tokens(s).empty(); });
    return sentences;
}

bool RuleJudge::supported(std::string_view statement, std::string_view reference) {
    return coverage(statement, reference) >= params_.support_threshold;
}

bool RuleJudge::relevant(std::string_view context, std::string_view ground_truth) {
    return coverage(ground_truth, context) >= params_.relevance_threshold;
}

bool RuleJudge::grade(const EvalRecord& record) {
    const auto score = answer_correctness(record, *this);
    return score && *score >= 0.5;
}

bool parse_yes(std::string_view reply) {
    std::size_t i = 0;
    while (i < reply.size() && !std::isalpha(static_cast<unsigned char>(reply[i]))) ++i;
    if (reply.size() - i < 3) return false;
    return std::toupper(static_cast<unsigned char>(reply[i])) == 'Y' &&
           std::toupper(static_cast<unsigned char>(reply[i + 1])) == 'E' &&
           std::toupper(static_cast<unsigned char>(reply[i + 2])) == 'S';
}

LlmJudge::LlmJudge(std::shared_ptr<llm::ChatProvider> provider, llm::ModelConfig model,
                   std::shared_ptr<const llm::TemplateStore> templates)
    : provider_(std::move(provider)), model_(std::move(model)), templates_(std::move(templates)) {}

std::string LlmJudge::ask(const std::string& kind, const std::string& template_id,
                          const std::map<std::string, std::string>& vars) {
    const auto messages = llm::render_prompt(templates_->get(template_id), vars);
    auto completion = llm::complete(*provider_, messages, model_);
    std::lock_guard lock(mutex_);
    verdicts_.push_back({kind, llm::transcript(messages), completion.text});
    return completion.text;
}

bool LlmJudge::ask_yes_no(const std::string& kind, const std::string& template_id,
                          const std::map<std::string, std::string>& vars) {
    return parse_yes(ask(kind, template_id, vars));
}

std::vector<std::string> LlmJudge::split_claims(std::string_view input) {
    const auto reply = ask("claims", "judge_claims.v1", {{"text", std::string(input)}});
    std::vector<std::string> claims;
    std::istringstream lines(reply);
    std::string line;
    while (std::getline(lines, line)) {
        // drop list markers such as "-", "*", "1." and "2)"
        static const std::regex marker(R"(^\s*(?:[-*]|\d+[.)])\s+)");
        auto claim = text::trim(std::regex_replace(line, marker, ""));
        if (!claim.empty()) claims.push_back(std::move(claim));
    }
    return claims;
}

std::vector<std::string> LlmJudge::split_sentences(std::string_view input) {
    return eval::split_sentences(input);
}

bool LlmJudge::supported(std::string_view statement, std::string_view reference) {
    if (text::trim(reference).empty()) return false;
    return ask_yes_no("support", "judge_support.v1",
                      {{"statement", std::string(statement)}, {"reference", std::string(reference)}});
}

bool LlmJudge::relevant(std::string_view context, std::string_view ground_truth) {
    return ask_yes_no("relevance", "judge_relevance.v1",
                      {{"context", std::string(context)}, {"ground_truth", std::string(ground_truth)}});
}

bool LlmJudge::grade(const EvalRecord& record) {
    return ask_yes_no("grade", "judge_grade.v1",
                      {{"question", record.question}, {"answer", record.answer}, {"ground_truth", record.ground_truth}});
}

std::vector<JudgeVerdict> LlmJudge::verdicts() const {
    std::lock_guard lock(mutex_);
    return verdicts_;
}

namespace {

std::string join_contexts(const std::vector<std::string>& contexts) {
    std::string out;
    for (const auto& context : contexts) {
        if (!out.empty()) out += "\n\n";
        out += context;
    }
    return out;
}

} // namespace

std::vector<std::string> split_claims(std::string_view answer, Judge& judge) {
    return judge.split_claims(answer);
}

std::optional<double> faithfulness(const EvalRecord& record, Judge& judge) {
    const auto claims = judge.split_claims(record.answer);
    if (claims.empty()) return std::nullopt;
    const auto context = join_contexts(record.contexts);
    std::size_t supported = 0;
    for (const auto& claim : claims) supported += judge.supported(claim, context) ? 1 : 0;
    return static_cast<double>(supported) / static_cast<double>(claims.size());
}

ClaimCounts correctness_counts(const EvalRecord& record, Judge& judge) {
    ClaimCounts counts;
    for (const auto& claim : judge.split_claims(record.answer)) {
        if (judge.supported(claim, record.ground_truth)) {
            ++counts.tp;
        } else {
            ++counts.fp;
        }
    }
    for (const auto& claim : judge.split_claims(record.ground_truth)) {
        if (!judge.supported(claim, record.answer)) ++counts.fn;
    }
    return counts;
}

std::optional<double> answer_correctness(const EvalRecord& record, Judge& judge) {
    const auto c = correctness_counts(record, judge);
    if (c.tp == 0 && c.fp == 0 && c.fn == 0) return std::nullopt;
    const double tp = static_cast<double>(c.tp);
    return tp / (tp + 0.5 * static_cast<double>(c.fp + c.fn));
}

double context_precision(const EvalRecord& record, Judge& judge, PrecisionDenominator denominator) {
    if (record.contexts.empty()) throw Error(ErrorCode::NoContexts, "record has no retrieved contexts");
    double sum = 0.0;
    std::size_t relevant_so_far = 0;
    for (std::size_t k = 0; k < record.contexts.size(); ++k) {
        if (!judge.relevant(record.contexts[k], record.ground_truth)) continue;
        ++relevant_so_far;
        sum += static_cast<double>(relevant_so_far) / static_cast<double>(k + 1);
    }
    if (relevant_so_far == 0) return 0.0;
    const auto divisor = denominator == PrecisionDenominator::relevant ? relevant_so_far : record.contexts.size();
    return sum / static_cast<double>(divisor);
}

double context_recall(const EvalRecord& record, Judge& judge) {
    const auto sentences = judge.split_sentences(record.ground_truth);
    if (sentences.empty()) throw Error(ErrorCode::EmptyGroundTruth, "ground truth has no sentences");
    const auto context = join_contexts(record.contexts);
    std::size_t attributed = 0;
    for (const auto& sentence : sentences) attributed += judge.supported(sentence, context) ? 1 : 0;
    return static_cast<double>(attributed) / static_cast<double>(sentences.size());
}

double accuracy(const std::vector<EvalRecord>& records, Judge& judge) {
    if (records.empty()) throw Error(ErrorCode::EmptyDataset, "no records to grade");
    std::size_t correct = 0;
    for (const auto& record : records) {
        const bool ok = record.human_label ? *record.human_label : judge.grade(record);
        correct += ok ? 1 : 0;
    }
    return static_cast<double>(correct) / static_cast<double>(records.size());
}

ScoredRecord score_record(const EvalRecord& record, Judge& judge, PrecisionDenominator denominator) {
    ScoredRecord out;
    out.scores.faithfulness = faithfulness(record, judge);
    if (!out.scores.faithfulness) out.undefined_reasons.push_back("faithfulness: answer has no claims");
    out.scores.correctness = answer_correctness(record, judge);
    if (!out.scores.correctness) out.undefined_reasons.push_back("correctness: no claims in answer or ground truth");
    try {
        out.scores.context_precision = context_precision(record, judge, denominator);
    } catch (const Error& e) {
        if (e.code() != ErrorCode::NoContexts) throw;
        out.undefined_reasons.push_back("context_precision: no contexts");
    }
    try {
        out.scores.context_recall = context_recall(record, judge);
    } catch (const Error& e) {
        if (e.code() != ErrorCode::EmptyGroundTruth) throw;
        out.undefined_reasons.push_back("context_recall: ground truth has no sentences");
    }
    const bool correct = record.human_label ? *record.human_label : judge.grade(record);
    out.scores.accuracy = correct ? 1.0 : 0.0;
    return out;
}

std::vector<BenchmarkConfig> configs_from_json(const json& j) {
    const json& list = j.is_object() && j.contains("configs") ? j.at("configs") : j;
    if (!list.is_array()) throw Error(ErrorCode::InvalidArgument, "configs must be a JSON array");
    std::vector<BenchmarkConfig> configs;
    for (const auto& item : list) {
        BenchmarkConfig config;
        config.name = item.at("name").get<std::string>();
        if (item.contains("rag")) config.rag = item.at("rag").get<rag::RagConfig>();
        configs.push_back(std::move(config));
    }
    if (configs.empty()) throw Error(ErrorCode::InvalidArgument, "no benchmark configurations");
    return configs;
}

std::vector<BenchmarkConfig> read_configs(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::NotFound, "cannot open configs", path.string());
    try {
        return configs_from_json(json::parse(in));
    } catch (const json::exception& e) {
        throw Error(ErrorCode::InvalidArgument, std::string("malformed configs: ") + e.what(), path.string());
    }
}

MetricCell aggregate(const std::vector<std::optional<double>>& values, std::size_t errors) {
    MetricCell cell;
    cell.errors = errors;
    double sum = 0.0;
    for (const auto& v : values) {
        if (v) {
            sum += *v;
            ++cell.defined;
        } else {
            ++cell.undefined;
        }
    }
    if (cell.defined > 0) cell.value = sum / static_cast<double>(cell.defined);
    return cell;
}

namespace {

json cell_to_json(const MetricCell& cell) {
    json j{{"value", cell.value ? json(*cell.value) : json(nullptr)},
           {"defined", cell.defined},
           {"undefined", cell.undefined},
           {"errors", cell.errors}};
    if (!cell.value) {
        j["reason"] = cell.errors > 0 && cell.undefined == 0 ? "every question failed" : "no defined scores";
    }
    return j;
}

MetricCell cell_from_json(const json& j) {
    MetricCell cell;
    if (j.contains("value") && j["value"].is_number()) cell.value = j["value"].get<double>();
    cell.defined = j.value("defined", std::size_t{0});
    cell.undefined = j.value("undefined", std::size_t{0});
    cell.errors = j.value("errors", std::size_t{0});
    return cell;
}

std::string precision_name(PrecisionDenominator d) {
    return d == PrecisionDenominator::relevant ? "relevant" : "k";
}

} // namespace

json report_to_json(const BenchmarkReport& report) {
    json rows = json::array();
    json timing_rows = json::array();
    for (const auto& row : report.rows) {
        rows.push_back({{"name", row.name},
                        {"provider_id", row.provider_id},
                        {"model_id", row.model_id},
                        {"chain", row.chain},
                        {"k", row.k},
                        {"embedding", row.embedding},
                        {"vector_store", "exact"},
                        {"questions", row.questions},
                        {"failed", row.failed},
                        {"metrics",
                         {{"correctness", cell_to_json(row.correctness)},
                          {"faithfulness", cell_to_json(row.faithfulness)},
                          {"precision", cell_to_json(row.precision)},
                          {"recall", cell_to_json(row.recall)},
                          {"accuracy", cell_to_json(row.accuracy)}}}});
        timing_rows.push_back({{"name", row.name}, {"mean_response_s", row.mean_response_seconds}});
    }
    return json{{"schema_version", 1},
                {"judge", report.judge},
                {"precision_denominator", report.precision_denominator},
                {"rows", std::move(rows)},
                {"timing", {{"generated_at", report.generated_at}, {"rows", std::move(timing_rows)}}}};
}

BenchmarkReport report_from_json(const json& j) {
    BenchmarkReport report;
    report.judge = j.value("judge", "");
    report.precision_denominator = j.value("precision_denominator", "relevant");
    for (const auto& r : j.at("rows")) {
        ReportRow row;
        row.name = r.at("name").get<std::string>();
        row.provider_id = r.value("provider_id", "");
        row.model_id = r.value("model_id", "");
        row.chain = r.value("chain", "");
        row.k = r.value("k", std::size_t{0});
        row.embedding = r.value("embedding", "");
        row.questions = r.value("questions", std::size_t{0});
        row.failed = r.value("failed", std::size_t{0});
        const auto& m = r.at("metrics");
        row.correctness = cell_from_json(m.at("correctness"));
        row.faithfulness = cell_from_json(m.at("faithfulness"));
        row.precision = cell_from_json(m.at("precision"));
        row.recall = cell_from_json(m.at("recall"));
        row.accuracy = cell_from_json(m.at("accuracy"));
        report.rows.push_back(std::move(row));
    }
    if (j.contains("timing")) {
        const auto& timing = j["timing"];
        report.generated_at = timing.value("generated_at", "");
        for (const auto& t : timing.value("rows", json::array())) {
            for (auto& row : report.rows) {
                if (row.name == t.value("name", "")) row.mean_response_seconds = t.value("mean_response_s", 0.0);
            }
        }
    }
    return report;
}

json without_timing(json report) {
    report.erase("timing");
    return report;
}

namespace {

std::string render_aligned(const std::vector<std::vector<std::string>>& table) {
    std::vector<std::size_t> widths;
    for (const auto& row : table) {
        widths.resize(std::max(widths.size(), row.size()), 0);
        for (std::size_t c = 0; c < row.size(); ++c) widths[c] = std::max(widths[c], text::codepoint_count(row[c]));
    }
    auto render_row = [&](const std::vector<std::string>& row) {
        std::string line;
        for (std::size_t c = 0; c < row.size(); ++c) {
            if (c > 0) line += " | ";
            line += row[c];
            if (c + 1 < row.size()) line.append(widths[c] - text::codepoint_count(row[c]), ' ');
        }
        return line;
    };
    std::string out = render_row(table.front()) + "\n";
    for (std::size_t c = 0; c < widths.size(); ++c) {
        if (c > 0) out += "-|-";
        out.append(widths[c], '-');
    }
    out += "\n";
    for (std::size_t r = 1; r < table.size(); ++r) out += render_row(table[r]) + "\n";
    return out;
}

std::string metric_text(const MetricCell& cell) {
    return cell.value ? text::format_lossless(*cell.value, 2) : "n/a";
}

} // namespace

std::string render_metrics_table(const BenchmarkReport& report) {
    std::vector<std::vector<std::string>> table{{"Model", "Correctness", "Faithfulness", "Precision", "Recall"}};
    for (const auto& row : report.rows) {
        table.push_back({row.name, metric_text(row.correctness), metric_text(row.faithfulness),
                         metric_text(row.precision), metric_text(row.recall)});
    }
    return render_aligned(table);
}

std::string format_percent(double fraction) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.2f", fraction * 100.0);
    std::string s = buf;
    while (!s.empty() && s.back() == '0') s.pop_back();
    if (!s.empty() && s.back() == '.') s.pop_back();
    return s + "%";
}

std::string render_performance_table(const BenchmarkReport& report) {
    std::vector<std::vector<std::string>> table{{"Model", "Vector Database", "Embedding", "Response (s)", "Accuracy"}};
    for (const auto& row : report.rows) {
        char response[32];
        std::snprintf(response, sizeof(response), "%.5f", row.mean_response_seconds);
        table.push_back({row.name, "exact", row.embedding, response,
                         row.accuracy.value ? format_percent(*row.accuracy.value) : "n/a"});
    }
    return render_aligned(table);
}

std::string render_accuracy_progression(const std::vector<Stage>& stages) {
    std::vector<std::string> header{"Performance"};
    std::vector<std::string> values{"Accuracy"};
    for (const auto& stage : stages) {
        header.push_back(stage.name);
        values.push_back(format_percent(stage.accuracy));
    }
    return render_aligned({header, values});
}

std::vector<ParsedTableRow> parse_metrics_table(std::string_view table) {
    std::vector<ParsedTableRow> rows;
    std::istringstream in{std::string(table)};
    std::string line;
    bool header_seen = false;
    while (std::getline(in, line)) {
        if (text::trim(line).empty()) continue;
        if (line.find_first_not_of("-|+ ") == std::string::npos) continue;
        std::vector<std::string> cells;
        std::size_t begin = 0;
        for (;;) {
            const auto bar = line.find('|', begin);
            cells.push_back(text::trim(std::string_view(line).substr(begin, bar == std::string::npos ? bar : bar - begin)));
            if (bar == std::string::npos) break;
            begin = bar + 1;
        }
        if (!header_seen) {
            header_seen = true;
            continue;
        }
        ParsedTableRow row;
        row.model = cells.front();
        for (std::size_t c = 1; c < cells.size(); ++c) {
            if (cells[c] == "n/a") {
                row.values.push_back(std::nullopt);
                continue;
            }
            double value = 0.0;
            const auto& cell = cells[c];
            const auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), value);
            if (ec != std::errc() || ptr != cell.data() + cell.size()) {
                throw Error(ErrorCode::InvalidArgument, "unparseable table cell '" + cell + "'");
            }
            row.values.push_back(value);
        }
        rows.push_back(std::move(row));
    }
    return rows;
}

namespace {

struct QuestionOutcome {
    std::optional<rag::AnswerPayload> payload;
    std::optional<ScoredRecord> scored;
    std::string error;
};

} // namespace

BenchmarkReport run_benchmark(const std::vector<BenchmarkConfig>& configs, const std::vector<ingest::QAPair>& dataset,
                              Judge& judge, const BenchmarkEnvironment& env, const BenchmarkOptions& options) {
    if (dataset.empty()) throw Error(ErrorCode::EmptyDataset, "benchmark dataset is empty");

    BenchmarkReport report;
    report.generated_at = text::utc_now_iso8601();
    report.judge = judge.kind();
    report.precision_denominator = precision_name(options.precision_denominator);

    std::ofstream artifacts;
    if (options.artifact_dir) {
        fs::create_directories(*options.artifact_dir);
        artifacts.open(*options.artifact_dir / "questions.jsonl", std::ios::trunc);
        if (!artifacts) throw Error(ErrorCode::IoError, "cannot write artifacts", options.artifact_dir->string());
    }

    const std::string embedding =
        env.corpus.embedder.provider().provider_id() + "/" + env.corpus.embedder.provider().model_id();

    for (const auto& config : configs) {
        std::vector<QuestionOutcome> outcomes(dataset.size());
        std::shared_ptr<llm::ChatProvider> provider;
        std::string provider_error;
        try {
            provider = env.providers.get(config.rag.model.provider_id);
        } catch (const Error& e) {
            provider_error = e.what();
        }

        auto evaluate = [&](std::size_t i) {
            auto& outcome = outcomes[i];
            if (!provider) {
                outcome.error = provider_error;
                return;
            }
            try {
                const auto& pair = dataset[i];
                outcome.payload = rag::answer(pair.question, config.rag, env.corpus, *provider, env.templates);
                EvalRecord record{pair.question, outcome.payload->answer, outcome.payload->contexts, pair.ground_truth,
                                  std::nullopt};
                if (auto it = pair.human_labels.find(config.name); it != pair.human_labels.end()) {
                    record.human_label = it->second;
                }
                outcome.scored = score_record(record, judge, options.precision_denominator);
            } catch (const std::exception& e) {
                outcome.error = e.what();
            }
        };

        const std::size_t workers = std::max<std::size_t>(1, std::min(options.workers, dataset.size()));
        if (workers == 1) {
            for (std::size_t i = 0; i < dataset.size(); ++i) evaluate(i);
        } else {
            std::atomic<std::size_t> next{0};
            std::vector<std::jthread> pool;
            for (std::size_t w = 0; w < workers; ++w) {
                pool.emplace_back([&] {
                    for (std::size_t i = next.fetch_add(1); i < dataset.size(); i = next.fetch_add(1)) evaluate(i);
                });
            }
        }

        ReportRow row;
        row.name = config.name;
        row.provider_id = config.rag.model.provider_id;
        row.model_id = config.rag.model.model_id;
        row.chain = std::string(rag::to_string(config.rag.chain));
        row.k = config.rag.k;
        row.embedding = embedding;
        row.questions = dataset.size();

        std::vector<std::optional<double>> correctness, faithfulness, precision, recall, graded;
        double latency_sum = 0.0;
        for (std::size_t i = 0; i < outcomes.size(); ++i) {
            const auto& outcome = outcomes[i];
            if (outcome.scored) {
                const auto& s = outcome.scored->scores;
                correctness.push_back(s.correctness);
                faithfulness.push_back(s.faithfulness);
                precision.push_back(s.context_precision);
                recall.push_back(s.context_recall);
                graded.push_back(s.accuracy);
                latency_sum += outcome.payload->latency_seconds;
            } else {
                ++row.failed;
            }

            if (artifacts.is_open()) {
                json line{{"config", config.name},
                          {"question_index", i},
                          {"question", dataset[i].question},
                          {"ground_truth", dataset[i].ground_truth}};
                if (outcome.payload) {
                    line["payload"] = rag::stable_json(*outcome.payload);
                    line["latency"] = outcome.payload->latency_seconds;
                }
                if (outcome.scored) {
                    const auto& s = outcome.scored->scores;
                    auto opt = [](const std::optional<double>& v) { return v ? json(*v) : json(nullptr); };
                    line["scores"] = {{"faithfulness", opt(s.faithfulness)},
                                      {"correctness", opt(s.correctness)},
                                      {"context_precision", opt(s.context_precision)},
                                      {"context_recall", opt(s.context_recall)},
                                      {"accuracy", opt(s.accuracy)}};
                    line["undefined"] = outcome.scored->undefined_reasons;
                }
                if (!outcome.error.empty()) line["error"] = outcome.error;
                artifacts << line.dump() << '\n';
            }
        }
        row.correctness = aggregate(correctness, row.failed);
        row.faithfulness = aggregate(faithfulness, row.failed);
        row.precision = aggregate(precision, row.failed);
        row.recall = aggregate(recall, row.failed);
        row.accuracy = aggregate(graded, row.failed);
        const std::size_t answered = dataset.size() - row.failed;
        row.mean_response_seconds = answered > 0 ? latency_sum / static_cast<double>(answered) : 0.0;
        report.rows.push_back(std::move(row));
    }

    if (options.artifact_dir) {
        std::ofstream(*options.artifact_dir / "report.json", std::ios::trunc) << report_to_json(report).dump(2) << '\n';
        std::ofstream(*options.artifact_dir / "report.txt", std::ios::trunc)
            << render_metrics_table(report) << '\n'
            << render_performance_table(report);
    }
    return report;
}

} // namespace fiscalrag::eval
