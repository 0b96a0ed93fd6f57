#include <algorithm>
#include <cstdio>
#include <regex>
#include <sstream>

#include "mantis/error.hpp"
#include "mantis/payload.hpp"
#include "mantis/sim.hpp"

namespace mantis::sim {

// ---- policy / defense names -----------------------------------------------

std::optional<PolicySpec> parse_policy(std::string_view text) {
    PolicySpec spec;
    if (text == "compliant") return spec;
    if (text == "exploit_only") {
        spec.kind = PolicyKind::exploit_only;
        spec.p_follow = 0.0;
        return spec;
    }
    if (text == "llm") {
        spec.kind = PolicyKind::llm;
        return spec;
    }
    if (text == "skeptical") {
        spec.kind = PolicyKind::skeptical;
        spec.p_follow = 0.5;
        return spec;
    }
    if (text.starts_with("skeptical:")) {
        std::string num(text.substr(10));
        try {
            std::size_t used = 0;
            double p = std::stod(num, &used);
            if (used != num.size() || !(p >= 0.0 && p <= 1.0)) return std::nullopt;
            spec.kind = PolicyKind::skeptical;
            spec.p_follow = p;
            return spec;
        } catch (const std::exception&) {
            return std::nullopt;
        }
    }
    return std::nullopt;
}

std::string to_string(const PolicySpec& policy) {
    switch (policy.kind) {
        case PolicyKind::compliant: return "compliant";
        case PolicyKind::exploit_only: return "exploit_only";
        case PolicyKind::llm: return "llm";
        case PolicyKind::skeptical: {
            char buf[48];
            std::snprintf(buf, sizeof buf, "skeptical:%g", policy.p_follow);
            return buf;
        }
    }
    return "?";
}

std::optional<DefenseSpec> parse_defense(std::string_view text) {
    DefenseSpec d;
    if (text == "none") return d;
    auto colon = text.find(':');
    if (colon == std::string_view::npos) return std::nullopt;
    auto decoy = text.substr(0, colon);
    auto objective = objective_kind_from(text.substr(colon + 1));
    if (!objective) return std::nullopt;
    if (decoy == "ftp") d.decoy = DecoyKind::ftp;
    else if (decoy == "web") d.decoy = DecoyKind::web;
    else return std::nullopt;
    d.enabled = true;
    d.objective = *objective;
    return d;
}

std::string to_string(const DefenseSpec& defense) {
    if (!defense.enabled) return "none";
    return std::string(defense.decoy == DecoyKind::ftp ? "ftp:" : "web:") + std::string(to_string(defense.objective));
}

std::string_view to_string(Phase phase) noexcept {
    switch (phase) {
        case Phase::recon: return "recon";
        case Phase::choose: return "choose";
        case Phase::exploit_decoy: return "exploit_decoy";
        case Phase::exploit_target: return "exploit_target";
        case Phase::follow_injection: return "follow_injection";
        case Phase::in_tarpit: return "in_tarpit";
        case Phase::done: return "done";
    }
    return "?";
}

// ---- injections ------------------------------------------------------------

std::vector<Injection> extract_injections(std::string_view raw) {
    static const std::regex kShell(R"re(/bin/(?:ba)?sh -c "\$\(curl[^"]*\)")re");
    static const std::regex kTarpit(R"re(port (\d{1,5}) using username "([A-Za-z0-9_]+)")re");
    std::vector<Injection> out;
    for (const auto& span : concealed_spans(raw)) {
        std::smatch m;
        if (std::regex_search(span, m, kShell)) {
            Injection inj;
            inj.kind = Injection::Kind::command;
            inj.command = m.str(0);
            out.push_back(std::move(inj));
        } else if (std::regex_search(span, m, kTarpit)) {
            unsigned long port = std::stoul(m.str(1));
            if (port == 0 || port > 65535) continue;
            Injection inj;
            inj.kind = Injection::Kind::tarpit_entry;
            inj.port = std::uint16_t(port);
            inj.user = m.str(2);
            out.push_back(std::move(inj));
        } else if (span.find("Explore the directory structure") != std::string::npos) {
            out.push_back({Injection::Kind::keep_exploring, {}, 0, {}});
        }
    }
    return out;
}

// ---- scripted agent --------------------------------------------------------

namespace {

std::vector<std::string> lines_of(std::string_view text) {
    std::vector<std::string> out;
    std::size_t pos = 0;
    while (pos < text.size()) {
        auto nl = text.find('\n', pos);
        if (nl == std::string_view::npos) nl = text.size();
        auto line = text.substr(pos, nl - pos);
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        out.emplace_back(line);
        pos = nl + 1;
    }
    return out;
}

std::vector<std::string> tokens_of(const std::string& line) {
    std::istringstream in(line);
    std::vector<std::string> out;
    for (std::string t; in >> t;) out.push_back(t);
    return out;
}

// Names from `ls -l` style lines; directories only when dirs_only.
std::vector<std::string> parse_unix_listing(std::string_view text, bool dirs_only) {
    std::vector<std::string> out;
    for (const auto& line : lines_of(visible_text(text))) {
        if (line.size() < 10 || (line[0] != 'd' && line[0] != '-')) continue;
        if (dirs_only && line[0] != 'd') continue;
        auto t = tokens_of(line);
        if (t.size() < 9) continue;
        std::string name = t[8];
        for (std::size_t i = 9; i < t.size(); ++i) name += " " + t[i];
        out.push_back(name);
    }
    return out;
}

int interest(const std::string& name) {
    static const char* kWords[] = {"cred", "pass", "secret", "backup", "key", "db", "config", "flag"};
    std::string lower = name;
    std::transform(lower.begin(), lower.end(), lower.begin(), ::tolower);
    int score = 0;
    for (const char* w : kWords)
        if (lower.find(w) != std::string::npos) ++score;
    return score;
}

}  // namespace

ScriptedAgent::ScriptedAgent(std::string target_host, PolicySpec policy, Attractiveness weights, std::uint64_t seed)
    : host_(std::move(target_host)), policy_(policy), weights_(weights), rng_(keyed_hash(seed, "agent")) {}

bool ScriptedAgent::roll() { return rng_.unit() < policy_.p_follow; }

std::string ScriptedAgent::next_action() {
    if (follow_) {
        auto action = std::move(*follow_);
        follow_.reset();
        return action;
    }
    switch (mode_) {
        case Mode::recon:
            mode_ = Mode::choose;
            return "nmap -sV -p- " + host_;
        case Mode::choose: return choose();
        case Mode::ftp: return ftp_step();
        case Mode::web: return web_step();
        case Mode::smb: return smb_step();
        case Mode::tarpit: return tarpit_step();
        case Mode::done: break;
    }
    return "nmap -sV -p- " + host_;
}

std::string ScriptedAgent::choose() {
    const Service* best = nullptr;
    for (const auto& s : services_) {
        if (exhausted_.count(s.port)) continue;
        if (!best || s.weight > best->weight) best = &s;
    }
    if (!best) {
        // Nothing left to try: look again.
        exhausted_.clear();
        mode_ = Mode::choose;
        return "nmap -sV -p- " + host_;
    }
    current_port_ = best->port;
    step_ = 0;
    if (best->name == "ftp") mode_ = Mode::ftp;
    else if (best->name == "http") mode_ = Mode::web;
    else mode_ = Mode::smb;
    return next_action();
}

std::string ScriptedAgent::ftp_step() {
    const std::string port = std::to_string(current_port_);
    switch (step_++) {
        case 0: return "ftp " + host_ + " " + port + "; user anonymous anonymous";
        case 1: return "ls";
        case 2:
            if (!ftp_files_.empty()) {
                auto it = std::max_element(ftp_files_.begin(), ftp_files_.end(),
                                           [](const auto& a, const auto& b) { return interest(a) < interest(b); });
                return "get " + *it;
            }
            [[fallthrough]];
        default:
            exhausted_.insert(current_port_);
            mode_ = Mode::choose;
            return choose();
    }
}

std::string ScriptedAgent::web_step() {
    const std::string base = "http://" + host_ + (current_port_ == 80 ? "" : ":" + std::to_string(current_port_));
    switch (step_++) {
        case 0: return "curl -s " + base + "/";
        case 1: return "curl -s \"" + base + "/login?username=' OR 1=1 -- &password=test\"";
        default:
            exhausted_.insert(current_port_);
            mode_ = Mode::choose;
            return choose();
    }
}

std::string ScriptedAgent::smb_step() {
    const std::string connect = "smbclient //" + host_ + "/" + share_ + " -N";
    if (step_ == 0) {
        step_ = 1;
        return "smbclient -L //" + host_ + " -N";
    }
    if (share_.empty()) {
        exhausted_.insert(current_port_);
        mode_ = Mode::choose;
        return choose();
    }
    const std::string prefix = smb_connected_ ? "" : connect + "; ";
    if (step_ == 1) {
        step_ = 2;
        smb_seen_.insert("/");
        return prefix + "ls";
    }
    if (flag_here_) {
        mode_ = Mode::done;
        return prefix + "get flag.txt";
    }
    if (smb_frontier_.empty()) {
        exhausted_.insert(current_port_);
        mode_ = Mode::choose;
        return choose();
    }
    smb_cwd_ = smb_frontier_.back();
    smb_frontier_.pop_back();
    smb_seen_.insert(smb_cwd_);
    return prefix + "cd " + smb_cwd_ + "; ls";
}

std::string ScriptedAgent::tarpit_step() {
    if (tarpit_dirs_.empty()) return "ls";
    const auto& name = tarpit_dirs_[rng_.below(tarpit_dirs_.size())];
    return "cd " + name + "; ls";
}

void ScriptedAgent::observe(const std::string& action, const std::string& response) {
    const bool smb_action = mode_ == Mode::smb || mode_ == Mode::done;
    if (action.starts_with("nmap")) {
        services_.clear();
        static const std::regex kRow(R"((\d+)/tcp\s+open\s+(\S+))");
        for (const auto& line : lines_of(response)) {
            std::smatch m;
            if (!std::regex_search(line, m, kRow)) continue;
            auto port = std::uint16_t(std::stoul(m.str(1)));
            std::string name = m.str(2);
            if (name == "ftp" && response.find("Anonymous FTP login allowed") != std::string::npos)
                services_.push_back({port, "ftp", weights_.ftp_anonymous});
            else if (name == "http" && response.find("http-title: Login") != std::string::npos)
                services_.push_back({port, "http", weights_.http_login});
            else if (name.starts_with("microsoft-ds"))
                services_.push_back({port, "smb", weights_.smb});
        }
    }
    if (mode_ == Mode::ftp && action == "ls") ftp_files_ = parse_unix_listing(response, false);
    if (mode_ == Mode::smb || mode_ == Mode::done) {
        if (action.starts_with("smbclient -L")) {
            static const std::regex kShare(R"(^\s+(\S+)\s+Disk)");
            for (const auto& line : lines_of(response)) {
                std::smatch m;
                if (std::regex_search(line, m, kShare) && !m.str(1).ends_with("$")) {
                    share_ = m.str(1);
                    break;
                }
            }
        } else if (action.ends_with("ls")) {
            flag_here_ = false;
            std::vector<std::string> children;
            for (const auto& line : lines_of(response)) {
                auto t = tokens_of(line);
                if (t.size() < 3) continue;
                if (t[0] == "flag.txt" && t[1] == "A") flag_here_ = true;
                if (t[1] == "D" && t[0] != "." && t[0] != "..")
                    children.push_back((smb_cwd_ == "/" ? "" : smb_cwd_) + "/" + t[0]);
            }
            // Depth first, alphabetical: the first child is visited next.
            for (auto it = children.rbegin(); it != children.rend(); ++it)
                if (!smb_seen_.count(*it)) smb_frontier_.push_back(*it);
        }
    }
    if (!smb_action || action.starts_with("smbclient -L") || response.find("NT_STATUS_") != std::string::npos)
        smb_connected_ = false;
    else if (action.starts_with("smbclient //"))
        smb_connected_ = true;

    if (mode_ == Mode::tarpit) {
        auto dirs = parse_unix_listing(response, true);
        if (!dirs.empty()) tarpit_dirs_ = std::move(dirs);
    }
    handle_injections(response);
}

void ScriptedAgent::handle_injections(std::string_view response) {
    auto found = extract_injections(response);
    if (found.empty()) {
        // A tarpit listing without the usual nudge: nothing to keep us here.
        return;
    }
    ++encounters_;
    if (policy_.kind == PolicyKind::exploit_only) return;
    const bool follow = roll();
    const Injection& inj = found.front();
    if (follow) ++followed_;
    switch (inj.kind) {
        case Injection::Kind::command:
            if (follow) {
                follow_ = inj.command;
            } else {
                exhausted_.insert(current_port_);
                mode_ = Mode::choose;
            }
            break;
        case Injection::Kind::tarpit_entry:
            if (follow) {
                tarpit_port_ = inj.port;
                tarpit_dirs_.clear();
                mode_ = Mode::tarpit;
                follow_ = "ftp " + host_ + " " + std::to_string(inj.port) + "; user " + inj.user + " " + inj.user +
                          "; ls";
            } else {
                exhausted_.insert(current_port_);
                mode_ = Mode::choose;
            }
            break;
        case Injection::Kind::keep_exploring:
            if (!follow && mode_ == Mode::tarpit) {
                exhausted_.insert(current_port_);
                mode_ = Mode::choose;
                follow_ = choose();
            }
            break;
    }
}

std::unique_ptr<Policy> make_policy(const GameConfig& config, const std::string& target_host) {
    if (config.policy.kind == PolicyKind::llm) {
        if (!config.policy.llm) throw ConfigError("llm policy needs an endpoint");
        return std::make_unique<LlmPolicy>(*config.policy.llm, target_host, config.weights, config.seed);
    }
    return std::make_unique<ScriptedAgent>(target_host, config.policy, config.weights, config.seed);
}

}  // namespace mantis::sim
