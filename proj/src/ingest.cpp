#include "fiscalrag/ingest.hpp"
#include "fiscalrag/error.hpp"
#include "fiscalrag/text.hpp"

#include <algorithm>
#include <fstream>
#include <regex>
#include <sstream>
#include <unordered_set>

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace fiscalrag::ingest {

std::string_view to_string(Format format) noexcept {
    switch (format) {
    case Format::txt: return "txt";
    case Format::md: return "md";
    case Format::csv: return "csv";
    case Format::json: return "json";
    case Format::pdf_text: return "pdf_text";
    }
    return "txt";
}

std::optional<Format> parse_format(std::string_view name) noexcept {
    if (name == "txt") return Format::txt;
    if (name == "md") return Format::md;
    if (name == "csv") return Format::csv;
    if (name == "json") return Format::json;
    if (name == "pdf_text") return Format::pdf_text;
    return std::nullopt;
}

std::optional<Format> format_from_path(const fs::path& path) {
    const std::string name = text::to_lower_ascii(path.filename().string());
    auto ends_with = [&](std::string_view suffix) {
        return name.size() >= suffix.size() &&
               name.compare(name.size() - suffix.size(), suffix.size(), suffix) == 0;
    };
    if (ends_with(".pdf.txt")) return Format::pdf_text;
    if (ends_with(".txt")) return Format::txt;
    if (ends_with(".md")) return Format::md;
    if (ends_with(".csv")) return Format::csv;
    if (ends_with(".json")) return Format::json;
    return std::nullopt;
}

std::string document_id(std::string_view source_uri, std::string_view body) {
    std::string material;
    material.reserve(source_uri.size() + body.size() + 1);
    material.append(source_uri);
    material.push_back('\0');
    material.append(body);
    return text::sha256_hex(material);
}

Document make_document(std::string source_uri, Format format, std::string body,
                       std::map<std::string, std::string> metadata) {
    if (!text::is_valid_utf8(body)) {
        throw Error(ErrorCode::Undecodable, "text is not valid UTF-8", source_uri);
    }
    if (text::trim(body).empty()) {
        throw Error(ErrorCode::EmptyDocument, "document has no content", source_uri);
    }
    Document doc;
    doc.id = document_id(source_uri, body);
    doc.source_uri = std::move(source_uri);
    doc.format = format;
    doc.text = std::move(body);
    doc.metadata = std::move(metadata);
    return doc;
}

namespace {

std::vector<std::vector<std::string>> parse_csv(std::string_view csv) {
    std::vector<std::vector<std::string>> rows;
    std::vector<std::string> row;
    std::string field;
    bool in_quotes = false;
    bool field_started = false;

    auto end_field = [&] {
        row.push_back(std::move(field));
        field.clear();
        field_started = false;
    };
    auto end_row = [&] {
        end_field();
        const bool blank = row.size() == 1 && row.front().empty();
        if (!blank) rows.push_back(std::move(row));
        row.clear();
    };

    for (std::size_t i = 0; i < csv.size(); ++i) {
        const char c = csv[i];
        if (in_quotes) {
            if (c == '"') {
                if (i + 1 < csv.size() && csv[i + 1] == '"') {
                    field.push_back('"');
                    ++i;
                } else {
                    in_quotes = false;
                }
            } else {
                field.push_back(c);
            }
            continue;
        }
        if (c == '"' && !field_started) {
            in_quotes = true;
            field_started = true;
        } else if (c == ',') {
            end_field();
        } else if (c == '\n') {
            end_row();
        } else if (c == '\r') {
            if (i + 1 < csv.size() && csv[i + 1] == '\n') continue;
            end_row();
        } else {
            field.push_back(c);
            field_started = true;
        }
    }
    if (in_quotes) throw Error(ErrorCode::Undecodable, "unterminated quoted CSV field");
    if (!field.empty() || !row.empty()) end_row();
    return rows;
}

std::string render_json_document(std::string_view raw, std::map<std::string, std::string>& metadata) {
    json parsed;
    try {
        parsed = json::parse(raw);
    } catch (const json::exception& e) {
        throw Error(ErrorCode::Undecodable, std::string("invalid JSON: ") + e.what());
    }
    if (parsed.is_object() && parsed.contains("text") && parsed["text"].is_string()) {
        for (const char* key : {"title", "date", "origin"}) {
            if (parsed.contains(key) && parsed[key].is_string()) {
                metadata[key] = parsed[key].get<std::string>();
            }
        }
        return parsed["text"].get<std::string>();
    }
    return parsed.dump(2);
}

std::string read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::NotFound, "cannot open file", path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

} // namespace

std::string render_csv(std::string_view csv) {
    if (!text::is_valid_utf8(csv)) throw Error(ErrorCode::Undecodable, "CSV is not valid UTF-8");
    const auto rows = parse_csv(csv);
    if (rows.empty()) return {};
    const auto& header = rows.front();
    std::string out;
    for (std::size_t r = 1; r < rows.size(); ++r) {
        const auto& row = rows[r];
        if (row.size() != header.size()) {
            throw Error(ErrorCode::Undecodable,
                        "CSV row " + std::to_string(r + 1) + " has " + std::to_string(row.size()) +
                            " fields, header has " + std::to_string(header.size()));
        }
        if (!out.empty()) out.push_back('\n');
        for (std::size_t c = 0; c < row.size(); ++c) {
            if (c > 0) out += "; ";
            out += header[c];
            out += ": ";
            out += row[c];
        }
    }
    return out;
}

Document load_document(const fs::path& path, std::optional<Format> format_hint,
                       std::optional<std::string> source_uri) {
    std::error_code ec;
    if (!fs::is_regular_file(path, ec)) {
        throw Error(ErrorCode::NotFound, "no such file", path.string());
    }
    const auto format = format_hint ? format_hint : format_from_path(path);
    if (!format) {
        throw Error(ErrorCode::UnsupportedFormat, "unsupported file type", path.string());
    }

    std::string raw = read_file(path);
    if (raw.size() >= 3 && raw.compare(0, 3, "\xEF\xBB\xBF") == 0) raw.erase(0, 3);
    if (!text::is_valid_utf8(raw)) {
        throw Error(ErrorCode::Undecodable, "file is not valid UTF-8", path.string());
    }

    std::map<std::string, std::string> metadata{{"title", path.stem().string()}, {"origin", "file"}};
    std::string body;
    try {
        switch (*format) {
        case Format::csv: body = render_csv(raw); break;
        case Format::json: body = render_json_document(raw, metadata); break;
        default: body = std::move(raw); break;
        }
    } catch (const Error& e) {
        throw Error(e.code(), e.what(), path.string());
    }
    return make_document(source_uri.value_or(path.generic_string()), *format, std::move(body),
                         std::move(metadata));
}

LoadReport load_directory(const fs::path& root, bool recursive, const std::set<Format>& formats) {
    std::error_code ec;
    if (!fs::is_directory(root, ec)) {
        throw Error(ErrorCode::NotADirectory, "not a directory", root.string());
    }

    std::vector<fs::path> files;
    auto collect = [&](const fs::directory_entry& entry) {
        if (entry.is_regular_file()) files.push_back(entry.path());
    };
    if (recursive) {
        for (const auto& entry : fs::recursive_directory_iterator(root)) collect(entry);
    } else {
        for (const auto& entry : fs::directory_iterator(root)) collect(entry);
    }

    std::vector<std::pair<std::string, fs::path>> ordered;
    ordered.reserve(files.size());
    for (const auto& file : files) {
        ordered.emplace_back(fs::relative(file, root).generic_string(), file);
    }
    std::sort(ordered.begin(), ordered.end());

    LoadReport report;
    for (const auto& [relative, file] : ordered) {
        const auto format = format_from_path(file);
        if (!format || !formats.contains(*format)) {
            ++report.skipped;
            continue;
        }
        try {
            report.documents.push_back(load_document(file, format, relative));
        } catch (const Error& e) {
            report.failures.push_back({relative, std::string(to_string(e.code())), e.what()});
        }
    }
    return report;
}

std::vector<Chunk> split_text(const Document& doc, std::size_t chunk_size, std::size_t overlap) {
    if (chunk_size == 0 || overlap >= chunk_size) {
        throw Error(ErrorCode::InvalidParams, "require 0 <= overlap < chunk_size and chunk_size > 0");
    }
    if (doc.text.empty()) throw Error(ErrorCode::EmptyDocument, "document is empty", doc.id);

    const auto offsets = text::codepoint_offsets(doc.text);
    const std::size_t length = offsets.size() - 1;
    const std::size_t stride = chunk_size - overlap;

    std::vector<Chunk> chunks;
    for (std::size_t start = 0;; start += stride) {
        const std::size_t end = std::min(start + chunk_size, length);
        Chunk chunk;
        chunk.doc_id = doc.id;
        chunk.seq = chunks.size();
        chunk.span = {start, end};
        chunk.text = doc.text.substr(offsets[start], offsets[end] - offsets[start]);
        chunks.push_back(std::move(chunk));
        if (end == length) break;
    }
    return chunks;
}

std::string_view to_string(QaOrigin origin) noexcept {
    switch (origin) {
    case QaOrigin::scraped: return "scraped";
    case QaOrigin::expert_survey: return "expert_survey";
    case QaOrigin::feedback: return "feedback";
    }
    return "scraped";
}

void to_json(json& j, const QAPair& pair) {
    j = json{{"question", pair.question},
             {"ground_truth", pair.ground_truth},
             {"source", pair.source},
             {"origin", to_string(pair.origin)}};
    if (!pair.human_labels.empty()) j["human_labels"] = pair.human_labels;
}

void from_json(const json& j, QAPair& pair) {
    pair.question = j.value("question", "");
    pair.ground_truth = j.value("ground_truth", "");
    pair.source = j.value("source", "");
    const std::string origin = j.value("origin", "scraped");
    if (origin == "expert_survey") {
        pair.origin = QaOrigin::expert_survey;
    } else if (origin == "feedback") {
        pair.origin = QaOrigin::feedback;
    } else {
        pair.origin = QaOrigin::scraped;
    }
    pair.human_labels.clear();
    if (j.contains("human_labels") && j["human_labels"].is_object()) {
        pair.human_labels = j["human_labels"].get<std::map<std::string, bool>>();
    }
}

std::vector<QAPair> read_qa_jsonl(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::NotFound, "cannot open dataset", path.string());
    std::vector<QAPair> pairs;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (text::trim(line).empty()) continue;
        try {
            pairs.push_back(json::parse(line).get<QAPair>());
        } catch (const json::exception& e) {
            throw Error(ErrorCode::Undecodable,
                        "line " + std::to_string(line_no) + ": " + e.what(), path.string());
        }
    }
    return pairs;
}

void write_qa_jsonl(const fs::path& path, const std::vector<QAPair>& pairs) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw Error(ErrorCode::IoError, "cannot write dataset", path.string());
    for (const auto& pair : pairs) out << json(pair).dump() << '\n';
}

json CleanReport::to_json() const {
    return json{{"kept", kept},
                {"dropped", dropped},
                {"per_rule_counts",
                 {{"empty_question", empty_question},
                  {"empty_answer", empty_answer},
                  {"short_question", short_question},
                  {"short_answer", short_answer},
                  {"duplicates", duplicates}}}};
}

namespace {

std::string decode_entities(std::string s) {
    static const std::pair<std::string_view, std::string_view> entities[] = {
        {"&nbsp;", " "}, {"&lt;", "<"}, {"&gt;", ">"}, {"&quot;", "\""}, {"&#39;", "'"}, {"&amp;", "&"}};
    for (const auto& [from, to] : entities) {
        std::size_t pos = 0;
        while ((pos = s.find(from, pos)) != std::string::npos) {
            s.replace(pos, from.size(), to);
            pos += to.size();
        }
    }
    return s;
}

std::string clean_field(const std::string& raw) {
    static const std::regex tag("<[^<>]*>");
    // Iterate to a fixed point so cleaning is idempotent ("&lt;b&gt;", "<<b>x>").
    std::string current = raw;
    for (;;) {
        std::string next = std::regex_replace(decode_entities(current), tag, " ");
        if (next == current) break;
        current = std::move(next);
    }
    return text::collapse_whitespace(current);
}

} // namespace

std::string question_key(std::string_view question) {
    std::string key;
    for (const auto& token : text::tokenize(question)) {
        if (!key.empty()) key.push_back(' ');
        key += token;
    }
    return key;
}

std::pair<std::vector<QAPair>, CleanReport> clean_qa_pairs(const std::vector<QAPair>& raw) {
    std::vector<QAPair> kept;
    CleanReport report;
    std::unordered_set<std::string> seen;

    for (const auto& input : raw) {
        QAPair pair = input;
        pair.question = clean_field(input.question);
        pair.ground_truth = clean_field(input.ground_truth);

        if (pair.question.empty()) {
            ++report.empty_question;
        } else if (pair.ground_truth.empty()) {
            ++report.empty_answer;
        } else if (text::codepoint_count(pair.question) < kMinQuestionChars) {
            ++report.short_question;
        } else if (text::tokenize(pair.ground_truth).size() < kMinAnswerTokens) {
            ++report.short_answer;
        } else if (!seen.insert(question_key(pair.question)).second) {
            ++report.duplicates;
        } else {
            kept.push_back(std::move(pair));
            continue;
        }
        ++report.dropped;
    }
    report.kept = kept.size();
    return {std::move(kept), report};
}

} // namespace fiscalrag::ingest
