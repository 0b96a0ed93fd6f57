#pragma once

#include <chrono>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace mantis {

// One line of the structured log: {"ts", "engagement_id", "kind", "detail"}.
struct LogRecord {
    std::string ts;  // UTC, "2026-01-18T22:41:07.123Z"
    std::string engagement_id;
    std::string kind;
    nlohmann::json detail = nlohmann::json::object();
};

std::string format_timestamp(std::chrono::system_clock::time_point t);

std::string to_jsonl(const LogRecord& record);

// nullopt when the line is not a JSON object with the four fields. `error`
// receives a short reason.
std::optional<LogRecord> parse_record(std::string_view line, std::string* error = nullptr);

// Append-only, thread-safe. Records reach the file in append order and are
// flushed per line.
class EventLog {
public:
    // In-memory only.
    EventLog() = default;
    // Appends to `path`; throws ConfigError if it cannot be opened.
    explicit EventLog(const std::filesystem::path& path);

    void append(std::string engagement_id, std::string kind, nlohmann::json detail = nlohmann::json::object());

    // File-backed logs retain only the most recent records in memory.
    std::vector<LogRecord> records() const;
    std::vector<LogRecord> records_of(std::string_view kind) const;
    std::size_t size() const;

private:
    static constexpr std::size_t kRetained = 4096;

    mutable std::mutex mu_;
    std::ofstream file_;
    std::vector<LogRecord> records_;
};

}  // namespace mantis
