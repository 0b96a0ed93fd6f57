#include <catch_amalgamated.hpp>
#include <filesystem>
#include <fstream>

#include "mantis/config.hpp"
#include "mantis/error.hpp"

using namespace mantis;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    TempDir() {
        path = fs::temp_directory_path() / ("mantis_cfg_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
    fs::path write(const std::string& name, const std::string& text) const {
        std::ofstream(path / name) << text;
        return path / name;
    }
    static inline int counter = 0;
};

// Message of the ConfigError thrown by parsing `yaml`, or "" if it parsed.
std::string error_of(const TempDir& dir, const std::string& yaml) {
    try {
        parse_daemon_config(yaml, "cfg.yaml", dir.path);
    } catch (const ConfigError& e) {
        return e.what();
    }
    return "";
}

const char* kMinimal = R"(log_path: events.jsonl
decoys:
  - kind: ftp
    port: 2121
objective:
  kind: counterstrike
)";

}  // namespace

TEST_CASE("minimal config parses with defaults", "[config]") {
    TempDir dir;
    auto cfg = parse_daemon_config(kMinimal, "cfg.yaml", dir.path);
    REQUIRE(cfg.decoys.size() == 1);
    CHECK(cfg.decoys[0].kind == DecoyProtocol::ftp);
    CHECK(cfg.decoys[0].port == 2121);
    CHECK(cfg.decoys[0].id == "ftp-decoy");
    CHECK(cfg.objective.kind() == ObjectiveKind::counterstrike);
    CHECK(cfg.log_path == dir.path / "events.jsonl");
    CHECK(cfg.port_range.lo == 20000);
    CHECK(cfg.port_range.hi == 60999);
    CHECK_FALSE(cfg.seed);
    CHECK(cfg.gateways.empty());
}

TEST_CASE("full config", "[config]") {
    TempDir dir;
    dir.write("triggers.txt", "Great! Now, to complete the exploit {INSTRUCTIONS}\n");
    dir.write("names.txt", "a\nb\n");
    auto cfg = parse_daemon_config(R"(bind_host: 127.0.0.1
log_path: events.jsonl
port_range: {lo: 30000, hi: 30100}
seed: 99
trigger_pool: triggers.txt
decoys:
  - {kind: ftp, port: 2121}
  - {kind: web, port: 8080}
  - {kind: web, port: 8081}
objective:
  kind: tarpit
  port: 30050
  user: ftp_sync
  branching: 25
  seed: 7
tarpit:
  name_pool: names.txt
  fake_files: true
gateway:
  - listen: 2222
    upstream: 10.0.0.9:22
verify_timeout_ms: 1500
)",
                                   "cfg.yaml", dir.path);
    CHECK(cfg.bind_host == "127.0.0.1");
    CHECK(*cfg.seed == 99);
    CHECK(cfg.decoys[1].id == "web-decoy-8080");
    CHECK(cfg.decoys[2].id == "web-decoy-8081");
    auto* tp = cfg.objective.tarpit();
    REQUIRE(tp);
    CHECK(tp->tarpit_port == 30050);
    CHECK(tp->tarpit_user == "ftp_sync");
    CHECK(tp->branching == 25);
    CHECK(tp->seed == 7);
    CHECK(cfg.tarpit_fake_files);
    CHECK(*cfg.tarpit_name_pool_path == dir.path / "names.txt");
    REQUIRE(cfg.gateways.size() == 1);
    CHECK(cfg.gateways[0].upstream == Endpoint{"10.0.0.9", 22});
    CHECK(cfg.verify_timeout == std::chrono::milliseconds(1500));
}

TEST_CASE("colliding ports are refused with both lines", "[config]") {
    TempDir dir;
    auto err = error_of(dir, R"(log_path: events.jsonl
decoys:
  - kind: ftp
    port: 2121
  - kind: web
    port: 2121
objective:
  kind: counterstrike
)");
    CHECK(err == "cfg.yaml:6: port 2121 of web decoy collides with ftp decoy (line 4)");

    err = error_of(dir, R"(log_path: events.jsonl
decoys:
  - {kind: ftp, port: 2121}
objective: {kind: counterstrike}
gateway:
  - listen: 2121
    upstream: 127.0.0.1:21
)");
    CHECK(err == "cfg.yaml:6: port 2121 of gateway listener collides with ftp decoy (line 3)");

    err = error_of(dir, R"(log_path: events.jsonl
decoys:
  - {kind: ftp, port: 2121}
objective:
  kind: counterstrike
  listener_port: 30000
  initiator_port: 30000
)");
    CHECK(err == "cfg.yaml:7: port 30000 of initiator server collides with shell listener (line 6)");
}

TEST_CASE("diagnostics carry the offending line", "[config]") {
    TempDir dir;
    CHECK(error_of(dir, std::string(kMinimal) + "colour: blue\n") == "cfg.yaml:7: unknown key 'colour' in config");
    CHECK(error_of(dir, R"(log_path: events.jsonl
decoys:
  - kind: ssh
    port: 22
objective: {kind: counterstrike}
)") == "cfg.yaml:3: decoy kind must be 'ftp' or 'web', got 'ssh'");
    CHECK(error_of(dir, R"(log_path: events.jsonl
decoys:
  - kind: ftp
    port: 70000
objective: {kind: counterstrike}
)") == "cfg.yaml:4: decoy port must be at most 65535");
    CHECK(error_of(dir, R"(log_path: events.jsonl
decoys: [{kind: ftp, port: 2121}]
objective:
  kind: hackback
)") == "cfg.yaml:4: objective kind must be 'counterstrike' or 'tarpit', got 'hackback'");
    CHECK(error_of(dir, R"(log_path: events.jsonl
decoys: [{kind: ftp, port: 2121}]
objective:
  kind: tarpit
  user: "Bad User"
)")
              .starts_with("cfg.yaml:4: "));
    CHECK(error_of(dir, "log_path: x\ndecoys: [\n") .starts_with("cfg.yaml:"));
    CHECK(error_of(dir, "decoys: []\n") == "cfg.yaml:1: missing required key 'log_path'");
    CHECK(error_of(dir, "log_path: e.jsonl\ndecoys: []\nobjective: {kind: tarpit}\n") ==
          "cfg.yaml:2: decoys must be a non-empty list");
}

TEST_CASE("decoy ports must stay out of the service range", "[config]") {
    TempDir dir;
    CHECK(error_of(dir, R"(log_path: events.jsonl
decoys:
  - {kind: ftp, port: 25000}
objective: {kind: counterstrike}
)") == "cfg.yaml:3: port 25000 of ftp decoy lies inside port_range 20000-60999");
}

TEST_CASE("referenced files must exist", "[config]") {
    TempDir dir;
    CHECK(error_of(dir, std::string(kMinimal) + "trigger_pool: missing.txt\n") ==
          "cfg.yaml:7: trigger_pool '" + (dir.path / "missing.txt").string() + "' does not exist");
    CHECK(error_of(dir, R"(log_path: no/such/dir/events.jsonl
decoys: [{kind: ftp, port: 2121}]
objective: {kind: counterstrike}
)") == "cfg.yaml:1: log directory '" + (dir.path / "no/such/dir").string() + "' does not exist");
}

TEST_CASE("shipped example config is valid", "[config]") {
    auto path = fs::path(MANTIS_SOURCE_DIR) / "config" / "example.yaml";
    auto cfg = load_daemon_config(path);
    CHECK(cfg.decoys.size() == 2);
    CHECK(cfg.trigger_pool_path);
}

TEST_CASE("missing config file", "[config]") {
    CHECK_THROWS_AS(load_daemon_config("/nonexistent/mantis.yaml"), ConfigError);
}
