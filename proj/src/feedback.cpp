#include "fiscalrag/feedback.hpp"
#include "fiscalrag/error.hpp"
#include "fiscalrag/text.hpp"

#include <fstream>

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace fiscalrag::feedback {

namespace {

void ensure_parent(const fs::path& path) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
}

void append_json_line(const fs::path& path, const json& line) {
    std::ofstream out(path, std::ios::app | std::ios::binary);
    if (!out) throw Error(ErrorCode::IoError, "cannot append to log", path.string());
    out << line.dump() << '\n';
    out.flush();
    if (!out) throw Error(ErrorCode::IoError, "write failed", path.string());
}

template <typename F>
void for_each_line(const fs::path& path, F&& f) {
    std::ifstream in(path, std::ios::binary);
    if (!in) return;
    std::string line;
    std::size_t number = 0;
    while (std::getline(in, line)) {
        ++number;
        if (text::trim(line).empty()) continue;
        json parsed;
        try {
            parsed = json::parse(line);
        } catch (const json::exception& e) {
            throw Error(ErrorCode::CorruptFile, "line " + std::to_string(number) + ": " + e.what(), path.string());
        }
        f(parsed, number);
    }
}

std::optional<std::string> optional_string(const json& j, const char* key) {
    if (j.contains(key) && j[key].is_string()) return j[key].get<std::string>();
    return std::nullopt;
}

json optional_json(const std::optional<std::string>& value) {
    return value ? json(*value) : json(nullptr);
}

} // namespace

void to_json(json& j, const AnswerRecord& record) {
    j = json{{"response_id", record.response_id},
             {"question", record.question},
             {"payload", record.payload},
             {"created_at", record.created_at}};
}

void from_json(const json& j, AnswerRecord& record) {
    record.response_id = j.at("response_id").get<std::string>();
    record.question = j.at("question").get<std::string>();
    record.payload = j.at("payload").get<rag::AnswerPayload>();
    record.created_at = j.value("created_at", "");
}

AnswerLog::AnswerLog(fs::path path) : path_(std::move(path)) {
    ensure_parent(path_);
    for_each_line(path_, [&](const json& line, std::size_t) {
        auto record = line.get<AnswerRecord>();
        records_[record.response_id] = std::move(record);
    });
}

void AnswerLog::append(const AnswerRecord& record) {
    std::unique_lock lock(mutex_);
    append_json_line(path_, record);
    records_[record.response_id] = record;
}

std::optional<AnswerRecord> AnswerLog::find(const std::string& response_id) const {
    std::shared_lock lock(mutex_);
    const auto it = records_.find(response_id);
    if (it == records_.end()) return std::nullopt;
    return it->second;
}

std::size_t AnswerLog::size() const {
    std::shared_lock lock(mutex_);
    return records_.size();
}

std::string_view to_string(Disposition disposition) noexcept {
    switch (disposition) {
    case Disposition::pending: return "pending";
    case Disposition::approve_finetune: return "approve_finetune";
    case Disposition::approve_corpus: return "approve_corpus";
    case Disposition::rejected: return "rejected";
    }
    return "pending";
}

std::optional<Disposition> parse_disposition(std::string_view name) noexcept {
    for (auto d : {Disposition::pending, Disposition::approve_finetune, Disposition::approve_corpus,
                   Disposition::rejected}) {
        if (to_string(d) == name) return d;
    }
    return std::nullopt;
}

void to_json(json& j, const FeedbackEntry& entry) {
    j = json{{"id", entry.id},
             {"response_id", entry.response_id},
             {"rating", entry.rating},
             {"comment", optional_json(entry.comment)},
             {"created_at", entry.created_at},
             {"disposition", to_string(entry.disposition)},
             {"corrected_answer", optional_json(entry.corrected_answer)},
             {"curated_at", optional_json(entry.curated_at)}};
}

void from_json(const json& j, FeedbackEntry& entry) {
    entry.id = j.at("id").get<std::string>();
    entry.response_id = j.at("response_id").get<std::string>();
    entry.rating = j.at("rating").get<int>();
    entry.comment = optional_string(j, "comment");
    entry.created_at = j.value("created_at", "");
    entry.disposition = parse_disposition(j.value("disposition", "pending")).value_or(Disposition::pending);
    entry.corrected_answer = optional_string(j, "corrected_answer");
    entry.curated_at = optional_string(j, "curated_at");
}

FeedbackStore::FeedbackStore(fs::path path, const AnswerLog& answers, FeedbackPolicy policy)
    : path_(std::move(path)), answers_(answers), policy_(policy) {
    ensure_parent(path_);
    replay();
}

void FeedbackStore::replay() {
    for_each_line(path_, [&](const json& line, std::size_t number) {
        const auto where = path_.string() + ":" + std::to_string(number);
        if (line.value("schema_version", 0) != kSchemaVersion) {
            throw Error(ErrorCode::CorruptFile, "unsupported schema_version", where);
        }
        const auto type = line.value("type", "");
        if (type == "feedback") {
            auto entry = line.at("entry").get<FeedbackEntry>();
            if (!entries_.contains(entry.id)) order_.push_back(entry.id);
            entries_[entry.id] = std::move(entry);
        } else if (type == "curation") {
            const auto id = line.at("entry_id").get<std::string>();
            const auto it = entries_.find(id);
            if (it == entries_.end()) throw Error(ErrorCode::CorruptFile, "curation of unknown entry " + id, where);
            it->second.disposition =
                parse_disposition(line.at("disposition").get<std::string>()).value_or(Disposition::pending);
            it->second.corrected_answer = optional_string(line, "corrected_answer");
            it->second.curated_at = optional_string(line, "at");
        } else {
            throw Error(ErrorCode::CorruptFile, "unknown record type '" + type + "'", where);
        }
    });
}

void FeedbackStore::append_line(const json& line) {
    append_json_line(path_, line);
}

FeedbackEntry FeedbackStore::record_feedback(const std::string& response_id, int rating,
                                             std::optional<std::string> comment) {
    if (rating < 1 || rating > 5) {
        throw Error(ErrorCode::InvalidRating, "rating must be between 1 and 5, got " + std::to_string(rating));
    }
    if (!answers_.find(response_id)) throw Error(ErrorCode::UnknownResponse, "no answer with this id", response_id);

    FeedbackEntry entry;
    entry.id = text::random_token_hex(8);
    entry.response_id = response_id;
    entry.rating = rating;
    if (comment && !text::trim(*comment).empty()) entry.comment = std::move(comment);
    entry.created_at = text::utc_now_iso8601();

    std::unique_lock lock(mutex_);
    append_line({{"schema_version", kSchemaVersion}, {"type", "feedback"}, {"entry", entry}});
    order_.push_back(entry.id);
    entries_[entry.id] = entry;
    return entry;
}

ingest::Document corpus_document(const FeedbackEntry& entry, const std::string& question,
                                 const std::string& answer) {
    return ingest::make_document("feedback://" + entry.id, ingest::Format::txt,
                                 "Question: " + question + "\nAnswer: " + answer,
                                 {{"title", question}, {"origin", "feedback"}});
}

CurationResult FeedbackStore::curate(const std::string& entry_id, Disposition disposition,
                                     std::optional<std::string> corrected_answer) {
    if (disposition == Disposition::pending) {
        throw Error(ErrorCode::InvalidArgument, "an entry cannot be curated back to pending", entry_id);
    }
    if (corrected_answer && text::trim(*corrected_answer).empty()) corrected_answer.reset();

    std::unique_lock lock(mutex_);
    const auto it = entries_.find(entry_id);
    if (it == entries_.end()) throw Error(ErrorCode::UnknownEntry, "no feedback entry with this id", entry_id);
    if (it->second.disposition != Disposition::pending) {
        throw Error(ErrorCode::AlreadyCurated,
                    "entry is already " + std::string(to_string(it->second.disposition)), entry_id);
    }
    if (disposition == Disposition::approve_finetune && !corrected_answer &&
        !(policy_.allow_as_is && it->second.rating >= policy_.min_as_is_rating)) {
        throw Error(ErrorCode::MissingCorrection, "fine-tune approval of a low rating needs a corrected answer",
                    entry_id);
    }

    CurationResult result;
    if (disposition == Disposition::approve_corpus) {
        const auto record = answers_.find(it->second.response_id);
        if (!record) throw Error(ErrorCode::UnknownResponse, "answer missing from log", it->second.response_id);
        result.corpus_document =
            corpus_document(it->second, record->question, corrected_answer.value_or(record->payload.answer));
    }

    const auto at = text::utc_now_iso8601();
    append_line({{"schema_version", kSchemaVersion},
                 {"type", "curation"},
                 {"entry_id", entry_id},
                 {"disposition", to_string(disposition)},
                 {"corrected_answer", optional_json(corrected_answer)},
                 {"at", at}});
    it->second.disposition = disposition;
    it->second.corrected_answer = std::move(corrected_answer);
    it->second.curated_at = at;
    result.entry = it->second;
    return result;
}

std::optional<FeedbackEntry> FeedbackStore::get(const std::string& entry_id) const {
    std::shared_lock lock(mutex_);
    const auto it = entries_.find(entry_id);
    if (it == entries_.end()) return std::nullopt;
    return it->second;
}

std::vector<FeedbackEntry> FeedbackStore::entries() const {
    std::shared_lock lock(mutex_);
    std::vector<FeedbackEntry> out;
    out.reserve(order_.size());
    for (const auto& id : order_) out.push_back(entries_.at(id));
    return out;
}

void to_json(json& j, const ExportManifest& manifest) {
    j = json{{"count", manifest.count},
             {"entry_ids", manifest.entry_ids},
             {"imported_pairs", manifest.imported_pairs},
             {"dataset", manifest.dataset},
             {"created_at", manifest.created_at},
             {"schema_version", kSchemaVersion}};
}

namespace {

json chat_record(const std::string& system, const std::string& user, const std::string& assistant) {
    return json{{"messages",
                 {{{"role", "system"}, {"content", system}},
                  {{"role", "user"}, {"content", user}},
                  {{"role", "assistant"}, {"content", assistant}}}}};
}

} // namespace

ExportManifest export_finetune(const FeedbackStore& store, const llm::TemplateStore& templates,
                               const fs::path& out, const std::vector<ingest::QAPair>& imported) {
    const auto system = text::trim(templates.get("finetune_system.v1"));
    std::vector<json> records;
    ExportManifest manifest;

    for (const auto& entry : store.entries()) {
        if (entry.disposition != Disposition::approve_finetune) continue;
        const auto answer = store.answers().find(entry.response_id);
        if (!answer) throw Error(ErrorCode::UnknownResponse, "answer missing from log", entry.response_id);
        auto record = chat_record(system, answer->question, entry.corrected_answer.value_or(answer->payload.answer));
        if (auto problem = validate_finetune_record(record)) {
            throw Error(ErrorCode::InvalidArgument, "entry does not form a valid record: " + *problem, entry.id);
        }
        records.push_back(std::move(record));
        manifest.entry_ids.push_back(entry.id);
    }
    for (const auto& pair : imported) {
        auto record = chat_record(system, pair.question, pair.ground_truth);
        if (validate_finetune_record(record)) continue;
        records.push_back(std::move(record));
        ++manifest.imported_pairs;
    }
    if (records.empty()) throw Error(ErrorCode::EmptySelection, "no approved entries or imported pairs to export");

    ensure_parent(out);
    const auto tmp = fs::path(out.string() + ".tmp");
    {
        std::ofstream file(tmp, std::ios::trunc | std::ios::binary);
        if (!file) throw Error(ErrorCode::IoError, "cannot write dataset", out.string());
        for (const auto& record : records) file << record.dump() << '\n';
    }
    fs::rename(tmp, out);

    manifest.count = records.size();
    manifest.dataset = out.filename().string();
    manifest.created_at = text::utc_now_iso8601();
    std::ofstream(out.string() + ".manifest.json", std::ios::trunc) << json(manifest).dump(2) << '\n';
    return manifest;
}

std::optional<std::string> validate_finetune_record(const json& record) {
    if (!record.is_object() || !record.contains("messages")) return "missing messages";
    const auto& messages = record["messages"];
    if (!messages.is_array() || messages.size() != 3) return "expected exactly three messages";
    static constexpr const char* kRoles[] = {"system", "user", "assistant"};
    for (std::size_t i = 0; i < 3; ++i) {
        const auto& m = messages[i];
        if (!m.is_object() || m.value("role", "") != kRoles[i]) {
            return "message " + std::to_string(i) + " must have role " + kRoles[i];
        }
        if (!m.contains("content") || !m["content"].is_string() || text::trim(m["content"].get<std::string>()).empty()) {
            return std::string(kRoles[i]) + " content is empty";
        }
    }
    return std::nullopt;
}

std::size_t count_invalid_records(const fs::path& dataset) {
    std::ifstream in(dataset, std::ios::binary);
    if (!in) throw Error(ErrorCode::NotFound, "cannot open dataset", dataset.string());
    std::size_t invalid = 0;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        try {
            if (validate_finetune_record(json::parse(line))) ++invalid;
        } catch (const json::exception&) {
            ++invalid;
        }
    }
    return invalid;
}

} // namespace fiscalrag::feedback
