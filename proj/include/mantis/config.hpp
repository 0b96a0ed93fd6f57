#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "mantis/types.hpp"

namespace mantis {

enum class DecoyProtocol { ftp, web };

struct DecoySpec {
    DecoyProtocol kind = DecoyProtocol::ftp;
    std::uint16_t port = 0;
    std::string id;  // "ftp-decoy", "web-decoy", or "<kind>-decoy-<port>" when several share a kind
    int line = 0;
};

struct GatewayRule {
    std::uint16_t listen = 0;
    Endpoint upstream;
    int line = 0;
};

struct DaemonConfig {
    std::string bind_host = "0.0.0.0";
    std::vector<DecoySpec> decoys;
    SabotageObjective objective{CounterstrikeParams{}};
    std::vector<GatewayRule> gateways;
    std::optional<std::filesystem::path> trigger_pool_path;  // default pool when absent
    std::optional<std::filesystem::path> tarpit_name_pool_path;
    bool tarpit_fake_files = false;
    std::filesystem::path log_path;
    PortRange port_range{20000, 60999};
    std::optional<std::uint64_t> seed;  // drawn from the OS when absent
    std::chrono::milliseconds verify_timeout{5000};
    std::chrono::milliseconds initiator_grace{1000};
};

// Parses and validates a YAML daemon config: schema, port collisions, and
// existence of referenced files (relative paths resolve against `base_dir`).
// Throws ConfigError with "<source>:<line>: <message>".
DaemonConfig parse_daemon_config(const std::string& yaml_text, const std::string& source,
                                 const std::filesystem::path& base_dir);
DaemonConfig load_daemon_config(const std::filesystem::path& path);

}  // namespace mantis
