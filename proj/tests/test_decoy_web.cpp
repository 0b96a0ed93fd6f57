#include <catch_amalgamated.hpp>

#include <httplib.h>

#include <fstream>

#include "mantis/decoy_web.hpp"
#include "mantis/error.hpp"
#include "support.hpp"

using namespace mantis;
using namespace mantis::testing;

namespace {

LoginRequest req(std::string user, std::string pass, std::string ua = {}) {
    LoginRequest r;
    r.username = std::move(user);
    r.password = std::move(pass);
    r.user_agent = std::move(ua);
    r.peer = {"10.0.0.7", 40000};
    return r;
}

std::vector<std::string> fixture_lines(const std::string& name) {
    std::ifstream in(std::string(MANTIS_FIXTURES) + "/" + name);
    std::vector<std::string> out;
    std::string line;
    while (std::getline(in, line))
        if (!line.empty() && line[0] != '#') out.push_back(line);
    return out;
}

}  // namespace

TEST_CASE("front page reproduces the planted error and GET form", "[web]") {
    auto body = front_page();
    CHECK(body.find("Microsoft OLE DB Provider for SQL Server error '80040e14'") != std::string::npos);
    CHECK(body.find("Unclosed quotation mark after the character string ' '.") != std::string::npos);
    CHECK(body.find("<form action=\"/login\" method=\"GET\">") != std::string::npos);
    CHECK(body.find('\x1b') == std::string::npos);
    CHECK(body.find("<!--") == std::string::npos);
}

TEST_CASE("classify_sqli on the canonical inputs", "[web][sqli]") {
    CHECK(classify_sqli(req("' OR 1=1 -- ", "test")).kind == SqliKind::auth_bypass);
    CHECK(classify_sqli(req("admin", "admin")).kind == SqliKind::none);
    CHECK(classify_sqli(req("admin", "admin")).matched_pattern.empty());
    CHECK(classify_sqli(req("x' UNION SELECT null-- ", "")).kind == SqliKind::dump_probe);
    CHECK(classify_sqli(req("<script>alert('XSS')</script>", "x")).kind == SqliKind::none);
    CHECK(classify_sqli(req("guest", "guest", "sqlmap/1.7.2#stable (https://sqlmap.org)")).kind == SqliKind::dump_probe);
}

TEST_CASE("tautology corpus is auth_bypass", "[web][sqli]") {
    for (auto s : {"' or '1'='1", "' or 1=1 --", "\" or \"\"=\"", "admin'--", "') or ('a'='a", "' OR 'x'='x'#",
                   "1' or true--", "' || 1=1", "anything' OR 2=2/*"}) {
        INFO(s);
        auto v = classify_sqli(req(s, "pw"));
        CHECK(v.kind == SqliKind::auth_bypass);
        CHECK_FALSE(v.matched_pattern.empty());
        CHECK(classify_sqli(req("admin", s)).kind == SqliKind::auth_bypass);
    }
}

TEST_CASE("frozen sqlmap probe corpus is dump_probe", "[web][sqli]") {
    auto probes = fixture_lines("sqlmap_probes.txt");
    REQUIRE(probes.size() >= 25);
    for (const auto& p : probes) {
        INFO(p);
        CHECK(classify_sqli(req(p, "")).kind == SqliKind::dump_probe);
    }
}

TEST_CASE("benign corpus stays none", "[web][sqli]") {
    for (auto s : {"admin", "john.doe", "O'Brien", "p@ssw0rd!", "correct horse battery staple", "orders", "union-station",
                   "<img src=x onerror=alert(1)>", "../../etc/passwd", "select", "sandor"}) {
        INFO(s);
        CHECK(classify_sqli(req(s, s)).kind == SqliKind::none);
    }
}

TEST_CASE("query decoding happens exactly once", "[web]") {
    auto r = parse_login_query("username=%27+OR+1%3D1+--+&password=test");
    REQUIRE(r);
    CHECK(r->username == "' OR 1=1 -- ");
    CHECK(r->password == "test");
    auto twice = parse_login_query("username=%2527");
    REQUIRE(twice);
    CHECK(twice->username == "%27");
    CHECK_FALSE(parse_login_query("username=%zz").has_value());
    CHECK_FALSE(parse_login_query("username=%4").has_value());
    CHECK(parse_login_query("")->username.empty());
}

TEST_CASE("handle_login pages and events", "[web]") {
    auto payload = sample_payload(Concealment::html_comment);
    auto bypass = handle_login(req("' OR 1=1 -- ", "test"), payload);
    CHECK(bypass.response.status == 200);
    CHECK(bypass.response.body.find("<!-- \x1b[8m") != std::string::npos);
    REQUIRE(bypass.events.size() == 1);
    CHECK(bypass.events[0].kind == ActivationKind::web_sqli_login_bypass);
    CHECK(visible_text(bypass.response.body).find("curl") == std::string::npos);

    auto dump = handle_login(req("x' UNION SELECT null-- ", ""), payload);
    CHECK(dump.response.body.find("<caption>users</caption>") != std::string::npos);
    CHECK(dump.response.body.find(payload.assembled) != std::string::npos);
    REQUIRE(dump.events.size() == 1);
    CHECK(dump.events[0].kind == ActivationKind::web_sqli_dump);
    CHECK(visible_text(dump.response.body).find("curl") == std::string::npos);

    auto benign = handle_login(req("admin", "admin"), payload);
    CHECK(benign.events.empty());
    CHECK(benign.response.body.find("Invalid credentials") != std::string::npos);
    CHECK(benign.response.body.find('\x1b') == std::string::npos);
    CHECK(benign.response.body == handle_login(req("admin", "admin"), std::nullopt).response.body);

    auto xss = handle_login(req("<script>alert('XSS')</script>", "x"), payload);
    CHECK(xss.events.empty());
}

TEST_CASE("WebDecoy dedups per peer within the window", "[web]") {
    RecordingSink sink(sample_payload(Concealment::html_comment));
    WebDecoy decoy(WebDecoyConfig{}, &sink);
    Endpoint peer{"10.0.0.8", 5555};
    auto t0 = std::chrono::steady_clock::now();
    auto a = decoy.login("username=%27+or+1%3D1--&password=x", peer, "", t0);
    auto b = decoy.login("username=%27+or+1%3D1--&password=y", peer, "", t0 + std::chrono::seconds(30));
    CHECK(a.events.size() == 1);
    CHECK(b.events.empty());
    CHECK(a.response.body == b.response.body);  // same payload on repeat
    auto c = decoy.login("username=x%27+UNION+SELECT+1--", peer, "", t0 + std::chrono::seconds(31));
    CHECK(c.events.size() == 1);
    auto d = decoy.login("username=%27+or+1%3D1--", peer, "", t0 + std::chrono::minutes(11));
    CHECK(d.events.size() == 1);
    auto other = decoy.login("username=%27+or+1%3D1--", {"10.0.0.9", 1}, "", t0);
    CHECK(other.events.size() == 1);
    CHECK(sink.count() == 4);
    CHECK(decoy.login("username=%zz", peer).response.status == 400);
}

TEST_CASE("web decoy over HTTP", "[web][net]") {
    RecordingSink sink(sample_payload(Concealment::html_comment));
    WebDecoy decoy(WebDecoyConfig{}, &sink);
    WebDecoyServer server(decoy, "127.0.0.1", 0);
    httplib::Client cli("127.0.0.1", server.port());
    cli.set_url_encode(false);  // send the query exactly as a browser would
    auto front = cli.Get("/");
    REQUIRE(front);
    CHECK(front->status == 200);
    CHECK(front->get_header_value("Server") == "Microsoft-IIS/8.5");
    CHECK(front->body == front_page());
    auto benign = cli.Get("/login?username=admin&password=admin");
    REQUIRE(benign);
    CHECK(benign->body.find('\x1b') == std::string::npos);
    auto sqli = cli.Get("/login?username=%27+OR+1%3D1+--+&password=test");
    REQUIRE(sqli);
    CHECK(sqli->body.find("<!-- \x1b[8m") != std::string::npos);
    auto bad = cli.Get("/login?username=%G1");
    REQUIRE(bad);
    CHECK(bad->status == 400);
    server.stop();
    REQUIRE(sink.count() == 1);
    CHECK(sink.events[0].peer.host == "127.0.0.1");
}
