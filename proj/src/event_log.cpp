#include "mantis/event_log.hpp"

#include <ctime>

#include "mantis/error.hpp"

namespace mantis {

std::string format_timestamp(std::chrono::system_clock::time_point t) {
    using namespace std::chrono;
    auto secs = time_point_cast<seconds>(t);
    if (secs > t) secs -= seconds(1);
    auto ms = duration_cast<milliseconds>(t - secs).count();
    std::time_t tt = system_clock::to_time_t(secs);
    std::tm tm{};
    gmtime_r(&tt, &tm);
    char buf[40];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%S", &tm);
    char out[48];
    std::snprintf(out, sizeof out, "%s.%03dZ", buf, int(ms));
    return out;
}

std::string to_jsonl(const LogRecord& record) {
    nlohmann::ordered_json j;
    j["ts"] = record.ts;
    j["engagement_id"] = record.engagement_id;
    j["kind"] = record.kind;
    j["detail"] = record.detail;
    return j.dump(-1, ' ', false, nlohmann::json::error_handler_t::replace);
}

std::optional<LogRecord> parse_record(std::string_view line, std::string* error) {
    auto fail = [&](std::string why) -> std::optional<LogRecord> {
        if (error) *error = std::move(why);
        return std::nullopt;
    };
    auto j = nlohmann::json::parse(line, nullptr, false);
    if (j.is_discarded()) return fail("not JSON");
    if (!j.is_object()) return fail("not an object");
    for (const char* key : {"ts", "engagement_id", "kind"})
        if (!j.contains(key) || !j[key].is_string()) return fail(std::string("missing string field '") + key + "'");
    if (!j.contains("detail")) return fail("missing field 'detail'");
    return LogRecord{j["ts"].get<std::string>(), j["engagement_id"].get<std::string>(), j["kind"].get<std::string>(),
                     j["detail"]};
}

EventLog::EventLog(const std::filesystem::path& path) : file_(path, std::ios::app) {
    if (!file_) throw ConfigError("cannot open log file " + path.string());
}

void EventLog::append(std::string engagement_id, std::string kind, nlohmann::json detail) {
    std::lock_guard lock(mu_);
    LogRecord rec{format_timestamp(std::chrono::system_clock::now()), std::move(engagement_id), std::move(kind),
                  std::move(detail)};
    if (file_.is_open()) {
        file_ << to_jsonl(rec) << '\n';
        file_.flush();
        // The file is the record of truth; keep only a recent window in memory.
        if (records_.size() >= kRetained) records_.erase(records_.begin(), records_.begin() + kRetained / 2);
    }
    records_.push_back(std::move(rec));
}

std::vector<LogRecord> EventLog::records() const {
    std::lock_guard lock(mu_);
    return records_;
}

std::vector<LogRecord> EventLog::records_of(std::string_view kind) const {
    std::lock_guard lock(mu_);
    std::vector<LogRecord> out;
    for (const auto& r : records_)
        if (r.kind == kind) out.push_back(r);
    return out;
}

std::size_t EventLog::size() const {
    std::lock_guard lock(mu_);
    return records_.size();
}

}  // namespace mantis
