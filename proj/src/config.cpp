#include "mantis/config.hpp"

#include <yaml-cpp/yaml.h>

#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "mantis/error.hpp"

namespace mantis {

namespace {

class Diag {
public:
    explicit Diag(std::string source) : source_(std::move(source)) {}

    [[noreturn]] void fail(int line, const std::string& msg) const {
        throw ConfigError(source_ + ":" + std::to_string(line) + ": " + msg);
    }
    [[noreturn]] void fail(const YAML::Node& node, const std::string& msg) const { fail(line(node), msg); }
    static int line(const YAML::Node& node) { return node.Mark().line + 1; }

private:
    std::string source_;
};

void only_keys(const Diag& d, const YAML::Node& map, std::initializer_list<std::string_view> allowed,
               const std::string& where) {
    if (!map.IsMap()) d.fail(map, where + " must be a mapping");
    for (const auto& kv : map) {
        auto key = kv.first.as<std::string>();
        bool ok = false;
        for (auto a : allowed) ok |= key == a;
        if (!ok) d.fail(kv.first, "unknown key '" + key + "' in " + where);
    }
}

std::string as_string(const Diag& d, const YAML::Node& n, const std::string& what) {
    if (!n.IsScalar()) d.fail(n, what + " must be a string");
    return n.as<std::string>();
}

std::uint64_t as_uint(const Diag& d, const YAML::Node& n, const std::string& what, std::uint64_t max) {
    if (!n.IsScalar()) d.fail(n, what + " must be an integer");
    const auto text = n.Scalar();
    if (text.empty() || text.find_first_not_of("0123456789") != std::string::npos)
        d.fail(n, what + " must be a non-negative integer, got '" + text + "'");
    std::uint64_t v = 0;
    try {
        v = std::stoull(text);
    } catch (const std::exception&) {
        d.fail(n, what + " is out of range");
    }
    if (v > max) d.fail(n, what + " must be at most " + std::to_string(max));
    return v;
}

std::uint16_t as_port(const Diag& d, const YAML::Node& n, const std::string& what, bool allow_zero = false) {
    auto v = as_uint(d, n, what, 65535);
    if (v == 0 && !allow_zero) d.fail(n, what + " must be in 1..65535");
    return std::uint16_t(v);
}

bool as_bool(const Diag& d, const YAML::Node& n, const std::string& what) {
    try {
        return n.as<bool>();
    } catch (const YAML::Exception&) {
        d.fail(n, what + " must be true or false");
    }
}

Endpoint as_endpoint(const Diag& d, const YAML::Node& n, const std::string& what) {
    auto text = as_string(d, n, what);
    auto colon = text.rfind(':');
    if (colon == std::string::npos || colon == 0) d.fail(n, what + " must be host:port, got '" + text + "'");
    std::string port = text.substr(colon + 1);
    if (port.empty() || port.find_first_not_of("0123456789") != std::string::npos || port.size() > 5 ||
        std::stoul(port) == 0 || std::stoul(port) > 65535)
        d.fail(n, what + " has an invalid port: '" + text + "'");
    return {text.substr(0, colon), std::uint16_t(std::stoul(port))};
}

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
    std::filesystem::path path(p);
    return path.is_absolute() ? path : base / path;
}

void require_file(const Diag& d, const YAML::Node& n, const std::filesystem::path& path, const std::string& what) {
    std::error_code ec;
    if (!std::filesystem::is_regular_file(path, ec)) d.fail(n, what + " '" + path.string() + "' does not exist");
}

}  // namespace

DaemonConfig parse_daemon_config(const std::string& yaml_text, const std::string& source,
                                 const std::filesystem::path& base_dir) {
    const Diag d(source);
    YAML::Node root;
    try {
        root = YAML::Load(yaml_text);
    } catch (const YAML::ParserException& e) {
        d.fail(e.mark.line + 1, "YAML syntax error: " + e.msg);
    }
    if (!root || root.IsNull()) d.fail(1, "empty config");
    only_keys(d, root,
              {"bind_host", "log_path", "port_range", "seed", "trigger_pool", "decoys", "objective", "tarpit",
               "gateway", "verify_timeout_ms", "initiator_grace_ms"},
              "config");

    DaemonConfig cfg;
    if (root["bind_host"]) cfg.bind_host = as_string(d, root["bind_host"], "bind_host");

    if (!root["log_path"]) d.fail(1, "missing required key 'log_path'");
    cfg.log_path = resolve(base_dir, as_string(d, root["log_path"], "log_path"));
    {
        std::error_code ec;
        auto dir = cfg.log_path.parent_path();
        if (!dir.empty() && !std::filesystem::is_directory(dir, ec))
            d.fail(root["log_path"], "log directory '" + dir.string() + "' does not exist");
    }

    if (auto pr = root["port_range"]) {
        only_keys(d, pr, {"lo", "hi"}, "port_range");
        if (!pr["lo"] || !pr["hi"]) d.fail(pr, "port_range needs 'lo' and 'hi'");
        cfg.port_range = {as_port(d, pr["lo"], "port_range.lo"), as_port(d, pr["hi"], "port_range.hi")};
        if (cfg.port_range.lo > cfg.port_range.hi) d.fail(pr, "port_range.lo must not exceed port_range.hi");
    }
    if (auto s = root["seed"]) cfg.seed = as_uint(d, s, "seed", UINT64_MAX);
    if (auto t = root["verify_timeout_ms"])
        cfg.verify_timeout = std::chrono::milliseconds(as_uint(d, t, "verify_timeout_ms", 600000));
    if (auto t = root["initiator_grace_ms"])
        cfg.initiator_grace = std::chrono::milliseconds(as_uint(d, t, "initiator_grace_ms", 600000));
    if (auto t = root["trigger_pool"]) {
        cfg.trigger_pool_path = resolve(base_dir, as_string(d, t, "trigger_pool"));
        require_file(d, t, *cfg.trigger_pool_path, "trigger_pool");
    }

    // Every bound port, with the line that claimed it.
    std::map<std::uint16_t, std::pair<int, std::string>> claimed;
    auto claim = [&](const YAML::Node& n, std::uint16_t port, const std::string& who) {
        auto [it, fresh] = claimed.emplace(port, std::make_pair(Diag::line(n), who));
        if (!fresh)
            d.fail(n, "port " + std::to_string(port) + " of " + who + " collides with " + it->second.second +
                          " (line " + std::to_string(it->second.first) + ")");
    };

    auto decoys = root["decoys"];
    if (!decoys) d.fail(1, "missing required key 'decoys'");
    if (!decoys.IsSequence() || decoys.size() == 0) d.fail(decoys, "decoys must be a non-empty list");
    std::map<DecoyProtocol, int> per_kind;
    for (const auto& item : decoys) {
        only_keys(d, item, {"kind", "port", "id"}, "decoy");
        if (!item["kind"] || !item["port"]) d.fail(item, "decoy needs 'kind' and 'port'");
        DecoySpec spec;
        auto kind = as_string(d, item["kind"], "decoy kind");
        if (kind == "ftp") spec.kind = DecoyProtocol::ftp;
        else if (kind == "web") spec.kind = DecoyProtocol::web;
        else d.fail(item["kind"], "decoy kind must be 'ftp' or 'web', got '" + kind + "'");
        spec.port = as_port(d, item["port"], "decoy port");
        spec.line = Diag::line(item);
        if (item["id"]) spec.id = as_string(d, item["id"], "decoy id");
        ++per_kind[spec.kind];
        claim(item["port"], spec.port, kind + " decoy");
        cfg.decoys.push_back(spec);
    }
    std::set<std::string> ids;
    for (auto& spec : cfg.decoys) {
        const std::string base = spec.kind == DecoyProtocol::ftp ? "ftp-decoy" : "web-decoy";
        if (spec.id.empty()) spec.id = per_kind[spec.kind] > 1 ? base + "-" + std::to_string(spec.port) : base;
        if (spec.id == "tarpit" || !ids.insert(spec.id).second) d.fail(spec.line, "duplicate decoy id '" + spec.id + "'");
    }

    auto obj = root["objective"];
    if (!obj) d.fail(1, "missing required key 'objective'");
    if (!obj.IsMap() || !obj["kind"]) d.fail(obj, "objective needs a 'kind'");
    auto kind = as_string(d, obj["kind"], "objective kind");
    if (kind == "counterstrike") {
        only_keys(d, obj, {"kind", "target_addr", "listener_port", "initiator_port"}, "objective");
        CounterstrikeParams p;
        if (obj["target_addr"]) p.target_addr = as_string(d, obj["target_addr"], "target_addr");
        if (obj["listener_port"]) {
            p.listener_port = as_port(d, obj["listener_port"], "listener_port", true);
            if (p.listener_port) claim(obj["listener_port"], p.listener_port, "shell listener");
        }
        if (obj["initiator_port"]) {
            p.initiator_port = as_port(d, obj["initiator_port"], "initiator_port", true);
            if (p.initiator_port) claim(obj["initiator_port"], p.initiator_port, "initiator server");
        }
        cfg.objective = {p};
    } else if (kind == "tarpit") {
        only_keys(d, obj, {"kind", "port", "user", "branching", "seed"}, "objective");
        TarpitParams p;
        if (obj["port"]) {
            p.tarpit_port = as_port(d, obj["port"], "tarpit port", true);
            if (p.tarpit_port) claim(obj["port"], p.tarpit_port, "tarpit");
        }
        p.tarpit_user = obj["user"] ? as_string(d, obj["user"], "tarpit user") : "svc_backup";
        if (obj["branching"]) p.branching = std::uint32_t(as_uint(d, obj["branching"], "branching", 100000));
        if (obj["seed"]) p.seed = as_uint(d, obj["seed"], "tarpit seed", UINT64_MAX);
        cfg.objective = {p};
    } else {
        d.fail(obj["kind"], "objective kind must be 'counterstrike' or 'tarpit', got '" + kind + "'");
    }
    try {
        validate(cfg.objective, cfg.port_range, true);
    } catch (const ConfigError& e) {
        d.fail(obj, e.what());
    }

    if (auto t = root["tarpit"]) {
        only_keys(d, t, {"name_pool", "fake_files"}, "tarpit");
        if (t["name_pool"]) {
            cfg.tarpit_name_pool_path = resolve(base_dir, as_string(d, t["name_pool"], "tarpit.name_pool"));
            require_file(d, t["name_pool"], *cfg.tarpit_name_pool_path, "tarpit.name_pool");
        }
        if (t["fake_files"]) cfg.tarpit_fake_files = as_bool(d, t["fake_files"], "tarpit.fake_files");
    }

    if (auto gw = root["gateway"]) {
        if (!gw.IsSequence()) d.fail(gw, "gateway must be a list");
        for (const auto& item : gw) {
            only_keys(d, item, {"listen", "upstream"}, "gateway rule");
            if (!item["listen"] || !item["upstream"]) d.fail(item, "gateway rule needs 'listen' and 'upstream'");
            GatewayRule rule;
            rule.listen = as_port(d, item["listen"], "gateway listen");
            rule.upstream = as_endpoint(d, item["upstream"], "gateway upstream");
            rule.line = Diag::line(item);
            claim(item["listen"], rule.listen, "gateway listener");
            cfg.gateways.push_back(rule);
        }
    }

    // Fixed service ports of the objective live inside the range; decoys and
    // gateways must not, or the manager could hand them out twice.
    for (const auto& [port, who] : claimed) {
        const bool objective_port = who.second == "shell listener" || who.second == "initiator server" ||
                                    who.second == "tarpit";
        if (!objective_port && cfg.port_range.contains(port))
            d.fail(who.first, "port " + std::to_string(port) + " of " + who.second +
                                  " lies inside port_range " + std::to_string(cfg.port_range.lo) + "-" +
                                  std::to_string(cfg.port_range.hi));
    }
    return cfg;
}

DaemonConfig load_daemon_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError(path.string() + ": cannot open config file");
    std::stringstream ss;
    ss << in.rdbuf();
    auto base = path.parent_path();
    if (base.empty()) base = ".";
    return parse_daemon_config(ss.str(), path.string(), base);
}

}  // namespace mantis
