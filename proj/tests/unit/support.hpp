#pragma once

#include "fiscalrag/llm.hpp"
#include "fiscalrag/text.hpp"

#include <filesystem>
#include <fstream>
#include <functional>
#include <string>

namespace fiscalrag::testing {

/// Scratch directory removed on destruction.
class TempDir {
public:
    TempDir() : path_(std::filesystem::temp_directory_path() / ("fiscalrag-" + text::random_token_hex(6))) {
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const std::filesystem::path& path() const { return path_; }
    std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

private:
    std::filesystem::path path_;
};

inline void write_file(const std::filesystem::path& path, const std::string& content) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream(path, std::ios::binary | std::ios::trunc) << content;
}

inline std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

/// Chat provider backed by a lambda.
class LambdaProvider final : public llm::ChatProvider {
public:
    using Fn = std::function<std::string(const std::vector<llm::ChatMessage>&)>;

    explicit LambdaProvider(Fn fn, std::string id = "lambda") : fn_(std::move(fn)), id_(std::move(id)) {}

    std::string provider_id() const override { return id_; }
    llm::ProviderReply chat(const std::vector<llm::ChatMessage>& messages, const llm::ModelConfig&) override {
        return {fn_(messages), std::nullopt};
    }

private:
    Fn fn_;
    std::string id_;
};

inline std::string last_user(const std::vector<llm::ChatMessage>& messages) {
    for (auto it = messages.rbegin(); it != messages.rend(); ++it) {
        if (it->role == llm::Role::user) return it->content;
    }
    return {};
}

} // namespace fiscalrag::testing
