#pragma once

#include <chrono>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <regex>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include "mantis/ftp.hpp"
#include "mantis/payload.hpp"

namespace httplib {
class Server;
}

namespace mantis {

struct LoginRequest {
    std::string username;
    std::string password;
    std::string raw_query;
    Endpoint peer;
    std::string user_agent;
};

enum class SqliKind { none, auth_bypass, dump_probe };
std::string_view to_string(SqliKind kind) noexcept;

struct SqliVerdict {
    SqliKind kind = SqliKind::none;
    std::string matched_pattern;  // empty iff kind == none
};

// Case-insensitive ECMAScript regexes. Dump probes win over tautologies.
struct SqliPatterns {
    std::vector<std::string> tautologies;
    std::vector<std::string> dump_probes;
    std::vector<std::string> dump_user_agents;

    static SqliPatterns defaults();
};

// Decodes %XX and '+' exactly once. nullopt on a malformed escape.
std::optional<std::string> percent_decode(std::string_view in);

// Parses "username=..&password=.." (any order, extra keys ignored).
// nullopt when the query string is malformed.
std::optional<LoginRequest> parse_login_query(std::string_view raw_query, Endpoint peer = {},
                                              std::string user_agent = {});

class SqliClassifier {
public:
    explicit SqliClassifier(const SqliPatterns& patterns = SqliPatterns::defaults());
    SqliVerdict classify(const LoginRequest& req) const;

private:
    struct Rule {
        std::string source;
        std::regex re;
    };
    std::vector<Rule> tautologies_;
    std::vector<Rule> dumps_;
    std::vector<std::string> agents_;
};

SqliVerdict classify_sqli(const LoginRequest& req);

struct HttpResponse {
    int status = 200;
    std::string content_type = "text/html; charset=utf-8";
    std::string body;
};

// Login page with the planted database error banner.
std::string front_page();

struct LoginOutcome {
    HttpResponse response;
    SqliVerdict verdict;
    std::vector<ActivationEvent> events;
};

// Pure request handler: verdict, page and the event the verdict implies.
// `payload` goes into the page only for SQLi verdicts.
LoginOutcome handle_login(const LoginRequest& req, const std::optional<Payload>& payload,
                          const std::string& decoy_id = "web-decoy", const SqliClassifier& classifier = SqliClassifier());

// 400 + front page.
HttpResponse bad_request();

struct WebDecoyConfig {
    std::string decoy_id = "web-decoy";
    std::string server_header = "Microsoft-IIS/8.5";
    std::chrono::seconds dedup_window{600};
    SqliPatterns patterns = SqliPatterns::defaults();
};

// Stateful wrapper: per-peer dedup of activation events plus arming through
// the sink. Thread-safe.
class WebDecoy {
public:
    WebDecoy(WebDecoyConfig config, ActivationSink* sink);

    HttpResponse front() const;
    // Raw query string as received (before any decoding).
    LoginOutcome login(std::string_view raw_query, const Endpoint& peer, const std::string& user_agent = {},
                       std::chrono::steady_clock::time_point now = std::chrono::steady_clock::now());

    const WebDecoyConfig& config() const noexcept { return config_; }

private:
    struct Seen {
        std::chrono::steady_clock::time_point at;
        std::optional<Payload> payload;
    };

    WebDecoyConfig config_;
    ActivationSink* sink_;
    SqliClassifier classifier_;
    std::mutex mu_;
    std::map<std::pair<std::string, SqliKind>, Seen> seen_;
    std::uint64_t next_session_ = 1;
};

// HTTP/1.1 front-end: GET / and GET /login.
class WebDecoyServer {
public:
    WebDecoyServer(WebDecoy& decoy, const std::string& host, std::uint16_t port);
    ~WebDecoyServer();
    WebDecoyServer(const WebDecoyServer&) = delete;
    WebDecoyServer& operator=(const WebDecoyServer&) = delete;

    std::uint16_t port() const noexcept { return port_; }
    void stop();

private:
    WebDecoy& decoy_;
    std::unique_ptr<httplib::Server> server_;
    std::uint16_t port_ = 0;
    std::thread thread_;
};

}  // namespace mantis
