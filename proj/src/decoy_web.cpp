#include "mantis/decoy_web.hpp"

#include <httplib.h>

#include <algorithm>
#include <cctype>

#include "mantis/error.hpp"

namespace mantis {

namespace {

std::string fold(std::string_view s) {
    std::string out(s);
    std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) { return char(std::tolower(c)); });
    return out;
}

int hex_value(char c) {
    if (c >= '0' && c <= '9') return c - '0';
    if (c >= 'a' && c <= 'f') return c - 'a' + 10;
    if (c >= 'A' && c <= 'F') return c - 'A' + 10;
    return -1;
}

std::string page(std::string_view title, std::string_view inner) {
    std::string out = "<html>\n<head><title>";
    out.append(title).append("</title></head>\n<body>\n").append(inner).append("</body>\n</html>\n");
    return out;
}

constexpr std::string_view kLoginForm =
    "<h2>Login</h2>\n"
    "<form action=\"/login\" method=\"GET\">\n"
    "  Username: <input name=\"username\"><br><br>\n"
    "  Password: <input name=\"password\"><br><br>\n"
    " <input type=\"submit\" value=\"Login\">\n"
    "</form>\n";

constexpr std::string_view kErrorBanner =
    "<b1> Microsoft OLE DB Provider for SQL Server error '80040e14' </b1>\n"
    "<b2> Unclosed quotation mark after the character string ' '. </b2>\n"
    "\n"
    "<br>\n";

}  // namespace

std::string_view to_string(SqliKind kind) noexcept {
    switch (kind) {
        case SqliKind::none: return "none";
        case SqliKind::auth_bypass: return "auth_bypass";
        case SqliKind::dump_probe: return "dump_probe";
    }
    return "none";
}

SqliPatterns SqliPatterns::defaults() {
    SqliPatterns p;
    p.tautologies = {
        R"('\s*\)*\s*or\s*\(*\s*'?\s*\w+\s*'?\s*=\s*'?\s*\w+)",  // ' or '1'='1, ' OR 1=1, ') or ('a'='a
        R"("\s*\)*\s*or\s*\(*\s*"?\w*"?\s*=\s*"?\w*)",           // " or ""="
        R"('\s*or\s+(true|not\s+false)\b)",
        R"('\s*(--|#|/\*))",                                     // admin'-- comment truncation
        R"(\bor\s+\d+\s*=\s*\d+)",
        R"('\s*\|\|\s*'?\d+'?\s*=\s*'?\d+)",
    };
    p.dump_probes = {
        R"(\bunion\b[\s\S]*?\bselect\b)",
        R"(\border\s+by\s+\d+)",
        R"(\bgroup\s+by\s+\d+)",
        R"(\bsleep\s*\()",
        R"(\bpg_sleep\s*\()",
        R"(\bwaitfor\s+delay\b)",
        R"(\bbenchmark\s*\()",
        R"(\bdbms_pipe\.receive_message\b)",
        R"(\binformation_schema\b)",
        R"(\bsysobjects\b|\bsys\.tables\b|\bsqlite_master\b)",
        R"(@@version)",
        R"(\bextractvalue\s*\(|\bupdatexml\s*\()",
        R"(\bconvert\s*\(\s*int\b)",
        R"(\bcase\s+when\b)",
        R"(\belt\s*\()",
        R"(\bconcat\s*\(\s*0x)",
        R"(\brlike\b)",
        R"(\band\s+\(?\s*\d+\s*=\s*\(?\s*\d+)",  // boolean-blind "AND 5734=5734"
        R"(\band\s+\(\s*select\b)",
        R"(;\s*(select|drop|insert|exec|declare)\b)",  // stacked queries
    };
    p.dump_user_agents = {"sqlmap", "havij", "sqlninja"};
    return p;
}

std::optional<std::string> percent_decode(std::string_view in) {
    std::string out;
    out.reserve(in.size());
    for (std::size_t i = 0; i < in.size(); ++i) {
        char c = in[i];
        if (c == '+') {
            out += ' ';
        } else if (c == '%') {
            if (i + 2 >= in.size()) return std::nullopt;
            int hi = hex_value(in[i + 1]), lo = hex_value(in[i + 2]);
            if (hi < 0 || lo < 0) return std::nullopt;
            out += char(hi * 16 + lo);
            i += 2;
        } else {
            out += c;
        }
    }
    return out;
}

std::optional<LoginRequest> parse_login_query(std::string_view raw_query, Endpoint peer, std::string user_agent) {
    LoginRequest req;
    req.raw_query = std::string(raw_query);
    req.peer = std::move(peer);
    req.user_agent = std::move(user_agent);
    std::size_t pos = 0;
    while (pos <= raw_query.size()) {
        auto amp = raw_query.find('&', pos);
        if (amp == std::string_view::npos) amp = raw_query.size();
        auto pair = raw_query.substr(pos, amp - pos);
        pos = amp + 1;
        if (pair.empty()) continue;
        auto eq = pair.find('=');
        auto key = percent_decode(pair.substr(0, eq));
        auto value = percent_decode(eq == std::string_view::npos ? std::string_view{} : pair.substr(eq + 1));
        if (!key || !value) return std::nullopt;
        if (*key == "username") req.username = std::move(*value);
        else if (*key == "password") req.password = std::move(*value);
    }
    return req;
}

SqliClassifier::SqliClassifier(const SqliPatterns& patterns) {
    auto compile = [](const std::vector<std::string>& sources) {
        std::vector<Rule> rules;
        for (const auto& s : sources) {
            try {
                rules.push_back({s, std::regex(s, std::regex::ECMAScript | std::regex::icase | std::regex::optimize)});
            } catch (const std::regex_error& e) {
                throw ConfigError("bad SQLi pattern '" + s + "': " + e.what());
            }
        }
        return rules;
    };
    tautologies_ = compile(patterns.tautologies);
    dumps_ = compile(patterns.dump_probes);
    for (const auto& a : patterns.dump_user_agents) agents_.push_back(fold(a));
}

SqliVerdict SqliClassifier::classify(const LoginRequest& req) const {
    const std::string fields[] = {fold(req.username), fold(req.password)};
    const std::string ua = fold(req.user_agent);
    for (const auto& a : agents_)
        if (!a.empty() && ua.find(a) != std::string::npos) return {SqliKind::dump_probe, "user-agent:" + a};
    for (const auto& rule : dumps_)
        for (const auto& f : fields)
            if (std::regex_search(f, rule.re)) return {SqliKind::dump_probe, rule.source};
    for (const auto& rule : tautologies_)
        for (const auto& f : fields)
            if (std::regex_search(f, rule.re)) return {SqliKind::auth_bypass, rule.source};
    return {};
}

SqliVerdict classify_sqli(const LoginRequest& req) {
    static const SqliClassifier classifier;
    return classifier.classify(req);
}

std::string front_page() { return page("Login", std::string(kErrorBanner) + std::string(kLoginForm)); }

HttpResponse bad_request() { return {400, "text/html; charset=utf-8", front_page()}; }

LoginOutcome handle_login(const LoginRequest& req, const std::optional<Payload>& payload, const std::string& decoy_id,
                          const SqliClassifier& classifier) {
    LoginOutcome out;
    out.verdict = classifier.classify(req);
    const std::string hidden = payload ? payload->assembled + "\n" : std::string();
    const std::string session = req.peer.host.empty() ? "web" : req.peer.host;
    switch (out.verdict.kind) {
        case SqliKind::none:
            out.response.body = page("Login", std::string(kErrorBanner) + "<p>Invalid credentials</p>\n" +
                                                  std::string(kLoginForm));
            break;
        case SqliKind::auth_bypass:
            out.response.body = page("Dashboard", "<h2>Welcome back, admin</h2>\n<p>Login successful.</p>\n" + hidden);
            out.events.push_back(make_event(decoy_id, session, ActivationKind::web_sqli_login_bypass, req.peer,
                                            out.verdict.matched_pattern));
            break;
        case SqliKind::dump_probe:
            out.response.body = page("Query result",
                                     "<table border=\"1\">\n<caption>users</caption>\n<tr><th>data</th></tr>\n<tr><td>" + hidden + "</td></tr>\n</table>\n");
            out.events.push_back(
                make_event(decoy_id, session, ActivationKind::web_sqli_dump, req.peer, out.verdict.matched_pattern));
            break;
    }
    return out;
}

WebDecoy::WebDecoy(WebDecoyConfig config, ActivationSink* sink)
    : config_(std::move(config)), sink_(sink), classifier_(config_.patterns) {}

HttpResponse WebDecoy::front() const { return {200, "text/html; charset=utf-8", front_page()}; }

LoginOutcome WebDecoy::login(std::string_view raw_query, const Endpoint& peer, const std::string& user_agent,
                             std::chrono::steady_clock::time_point now) {
    auto req = parse_login_query(raw_query, peer, user_agent);
    if (!req) return {bad_request(), {}, {}};

    auto verdict = classifier_.classify(*req);
    if (verdict.kind == SqliKind::none) return handle_login(*req, std::nullopt, config_.decoy_id, classifier_);

    const auto kind = verdict.kind == SqliKind::auth_bypass ? ActivationKind::web_sqli_login_bypass
                                                              : ActivationKind::web_sqli_dump;
    std::optional<Payload> payload;
    bool fresh = false;
    {
        std::lock_guard lock(mu_);
        auto key = std::make_pair(peer.host, verdict.kind);
        auto it = seen_.find(key);
        if (it != seen_.end() && now - it->second.at < config_.dedup_window) {
            payload = it->second.payload;
        } else {
            fresh = true;
            auto ev = make_event(config_.decoy_id, config_.decoy_id + "-" + std::to_string(next_session_++), kind,
                                 peer, verdict.matched_pattern);
            // The sink runs under the lock so concurrent probes from one
            // peer cannot both count as first.
            if (sink_) payload = sink_->on_activation(ev);
            seen_[key] = {now, payload};
        }
    }
    auto out = handle_login(*req, payload, config_.decoy_id, classifier_);
    if (!fresh) out.events.clear();
    return out;
}

WebDecoyServer::WebDecoyServer(WebDecoy& decoy, const std::string& host, std::uint16_t port)
    : decoy_(decoy), server_(std::make_unique<httplib::Server>()) {
    server_->set_default_headers({{"Server", decoy_.config().server_header}});
    auto write = [](httplib::Response& res, const HttpResponse& r) {
        res.status = r.status;
        res.set_content(r.body, r.content_type);
    };
    server_->Get("/", [this, write](const httplib::Request&, httplib::Response& res) { write(res, decoy_.front()); });
    server_->Get("/login", [this, write](const httplib::Request& req, httplib::Response& res) {
        auto q = req.target.find('?');
        std::string raw = q == std::string::npos ? std::string() : req.target.substr(q + 1);
        auto out = decoy_.login(raw, {req.remote_addr, std::uint16_t(req.remote_port)},
                                req.get_header_value("User-Agent"));
        write(res, out.response);
    });
    if (port == 0) {
        int bound = server_->bind_to_any_port(host);
        if (bound < 0) throw NetError("web decoy: cannot bind " + host);
        port_ = std::uint16_t(bound);
    } else {
        if (!server_->bind_to_port(host, port)) throw NetError("web decoy: cannot bind " + host + ":" + std::to_string(port));
        port_ = port;
    }
    thread_ = std::thread([this] { server_->listen_after_bind(); });
    server_->wait_until_ready();
}

WebDecoyServer::~WebDecoyServer() { stop(); }

void WebDecoyServer::stop() {
    if (server_) server_->stop();
    if (thread_.joinable()) thread_.join();
}

}  // namespace mantis
