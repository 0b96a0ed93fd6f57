#include "mantis/tarpit.hpp"

#include <algorithm>
#include <array>
#include <cstdio>
#include <map>
#include <sstream>
#include <stdexcept>
#include <unordered_set>

#include "mantis/error.hpp"
#include "mantis/rng.hpp"

namespace mantis {

namespace {

constexpr std::array<std::string_view, 16> kSuffixes = {
    "", "_2021", "_2022", "_2023", "_2024", "_v2", "_v3", "_old",
    "_bak", "_June", "_Q2", "_final", "_archive", "_prod", "_vault", "_secure",
};

constexpr std::array<const char*, 12> kMonths = {"Jan", "Feb", "Mar", "Apr", "May", "Jun",
                                                 "Jul", "Aug", "Sep", "Oct", "Nov", "Dec"};

constexpr std::uint64_t kRootSalt = 0x6d616e7469732d74ULL;

std::string pseudo_date(SplitMix64& rng) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "%s %02d %02d:%02d", kMonths[rng.below(12)], int(1 + rng.below(28)),
                  int(rng.below(24)), int(rng.below(60)));
    return buf;
}

std::vector<std::string> split_path(std::string_view arg) {
    std::vector<std::string> parts;
    std::size_t pos = 0;
    while (pos <= arg.size()) {
        auto slash = arg.find('/', pos);
        if (slash == std::string_view::npos) slash = arg.size();
        if (slash > pos) parts.emplace_back(arg.substr(pos, slash - pos));
        pos = slash + 1;
    }
    return parts;
}

// Small bigram chain for the optional fake files.
constexpr std::string_view kCorpus =
    "the backup key for the production database is stored in the vault and the vault password "
    "is rotated every month by the admin team the admin team keeps the ssh keys for the build "
    "servers in the deployment folder and the deployment folder is mirrored to the archive server "
    "the archive server holds the credentials for the vpn gateway and the vpn gateway forwards "
    "traffic to the internal network where the database backup is restored every night";

const std::map<std::string, std::vector<std::string>>& bigrams() {
    static const auto table = [] {
        std::map<std::string, std::vector<std::string>> t;
        std::istringstream in{std::string(kCorpus)};
        std::string prev, word;
        while (in >> word) {
            if (!prev.empty()) t[prev].push_back(word);
            prev = word;
        }
        return t;
    }();
    return table;
}

}  // namespace

std::vector<std::string> default_name_pool() {
    return {
        "login_logs",      "network_configs",  "auth_logs",        "db_backups",       "vpn_keys",
        "system_dump",     "vpn_keys_vault",   "IT_configs",       "credentials_dump", "deployment_keys",
        "backup",          "development_keys", "server_keys",      "access_credentials", "admin_ssh_keys",
        "audit_logfiles",  "log_archive",      "root_access_logs", "employee_data",    "internal_slides",
        "root_certificates", "ssl_private_keys", "password_vault", "payroll_records",  "firewall_rules",
        "aws_credentials", "k8s_secrets",      "ldap_exports",     "hr_confidential",  "finance_reports",
        "customer_db",     "api_tokens",       "private_repos",    "ci_secrets",       "domain_admin",
        "backup_configs",  "ssh_host_keys",    "vpn_profiles",     "sql_dumps",        "mail_archive",
        "crypto_wallets",  "incident_reports", "source_code",      "admin_passwords",  "shadow_backups",
        "kerberos_tickets", "internal_certs",  "db_credentials",
    };
}

std::span<const std::string_view> name_suffixes() noexcept { return kSuffixes; }

Tarpit::Tarpit(TarpitConfig config) : config_(std::move(config)) {
    if (config_.branching < 1) throw ConfigError("tarpit branching must be >= 1");
    if (config_.name_pool.size() < 32)
        throw ConfigError("tarpit name pool needs at least 32 entries, got " + std::to_string(config_.name_pool.size()));
    for (const auto& n : config_.name_pool)
        if (n.empty() || n.find_first_of("/\r\n \x1b") != std::string::npos)
            throw ConfigError("tarpit name '" + n + "' is not a plain directory name");
    if (!valid_tarpit_user(config_.username)) throw ConfigError("invalid tarpit username '" + config_.username + "'");
    if (config_.reinject_text.find('\x1b') != std::string::npos ||
        config_.reinject_text.find_first_of("\r\n") != std::string::npos)
        throw ConfigError("tarpit re-injection text must be a single line without ESC");
}

Tarpit::NodeKey Tarpit::root() const noexcept { return mix64(config_.seed ^ kRootSalt); }

Tarpit::NodeKey Tarpit::child_key(NodeKey parent, std::string_view name) const noexcept {
    return keyed_hash(parent, name);
}

std::size_t Tarpit::child_count(NodeKey node) const noexcept {
    SplitMix64 rng(node);
    return config_.branching + rng.below(config_.branching);
}

std::vector<TarpitEntry> Tarpit::children(NodeKey node) const {
    SplitMix64 rng(node);
    const std::size_t n = config_.branching + rng.below(config_.branching);  // same draw as child_count
    const auto& pool = config_.name_pool;
    std::vector<TarpitEntry> out;
    out.reserve(n + 1);
    std::unordered_set<std::string> seen;
    seen.reserve(n * 2);
    for (std::size_t i = 0; i < n; ++i) {
        std::string name;
        for (int attempt = 0; attempt < 8; ++attempt) {
            std::string candidate = pool[rng.below(pool.size())] + std::string(kSuffixes[rng.below(kSuffixes.size())]);
            if (!seen.contains(candidate)) {
                name = std::move(candidate);
                break;
            }
        }
        if (name.empty()) {
            // pool x suffixes exhausted for this node: number the overflow
            std::string base = pool[rng.below(pool.size())];
            for (std::size_t k = i;; k += n) {
                name = base + "_" + std::to_string(k);
                if (!seen.contains(name)) break;
            }
        }
        seen.insert(name);
        out.push_back({std::move(name), pseudo_date(rng)});
    }
    if (config_.fake_files) {
        TarpitEntry file{"notes_" + std::to_string(node % 1000) + ".txt", pseudo_date(rng), false, 0};
        file.size = fake_file_content(node, file.name).size();
        out.push_back(std::move(file));
    }
    return out;
}

std::optional<Tarpit::NodeKey> Tarpit::resolve(const TarpitPath& path) const {
    NodeKey key = root();
    for (const auto& component : path) {
        auto kids = children(key);
        auto it = std::find_if(kids.begin(), kids.end(),
                               [&](const TarpitEntry& e) { return e.is_dir && e.name == component; });
        if (it == kids.end()) return std::nullopt;
        key = child_key(key, component);
    }
    return key;
}

std::vector<TarpitEntry> Tarpit::children_of(const TarpitPath& path) const {
    auto key = resolve(path);
    if (!key) throw std::invalid_argument("550 Failed to change directory.");
    return children(*key);
}

std::string Tarpit::fake_file_content(NodeKey node, std::string_view name) const {
    const auto& table = bigrams();
    SplitMix64 rng(keyed_hash(node, name));
    auto it = std::next(table.begin(), std::ptrdiff_t(rng.below(table.size())));
    std::string word = it->first;
    std::string out = word;
    for (int i = 0; i < 60; ++i) {
        auto next = table.find(word);
        if (next == table.end()) next = std::next(table.begin(), std::ptrdiff_t(rng.below(table.size())));
        const auto& options = next->second;
        word = options[rng.below(options.size())];
        out += (i % 12 == 11) ? ".\n" : " ";
        out += word;
    }
    return out + ".\n";
}

std::string format_path(const TarpitPath& path) {
    if (path.empty()) return "/";
    std::string out;
    for (const auto& c : path) out += "/" + c;
    return out;
}

std::optional<TarpitListing> render_listing(const Tarpit& tarpit, const TarpitPath& path,
                                            const std::string& session_id, const Endpoint& peer) {
    auto key = tarpit.resolve(path);
    if (!key) return std::nullopt;
    TarpitListing out;
    out.preliminary = "150 Here comes the directory listing\r\n";
    for (const auto& e : tarpit.children(*key)) out.data += render_listing_line({e.name, e.is_dir, e.size, e.date});
    out.final_line = "226 Directory send OK " + conceal_ansi(tarpit.config().reinject_text) + "\r\n";
    out.event = make_event("tarpit", session_id, ActivationKind::tarpit_listing, peer, format_path(path));
    return out;
}

double estimate_round_cost(double listing_bytes, double price_per_megatoken, double bytes_per_token) {
    if (!(listing_bytes > 0) || !(price_per_megatoken > 0) || !(bytes_per_token > 0))
        throw std::invalid_argument("estimate_round_cost: inputs must be positive");
    return (listing_bytes / bytes_per_token) * price_per_megatoken / 1e6;
}

// ---- FTP front-end ---------------------------------------------------------

std::string TarpitSession::ftp_banner_text() { return "220 (vsFTPd 3.0.3)\r\n"; }

TarpitSession::TarpitSession(const Tarpit& tarpit, ActivationSink* sink, DataChannel& data, std::string session_id,
                             Endpoint peer)
    : tarpit_(tarpit), sink_(sink), data_(data), session_id_(std::move(session_id)), peer_(std::move(peer)) {
    keys_.push_back(tarpit_.root());
}

bool TarpitSession::change_dir(std::string_view arg) {
    TarpitPath path = arg.starts_with('/') ? TarpitPath{} : path_;
    std::vector<Tarpit::NodeKey> keys = arg.starts_with('/') ? std::vector{tarpit_.root()} : keys_;
    for (auto& part : split_path(arg)) {
        if (part == ".") continue;
        if (part == "..") {
            if (!path.empty()) {
                path.pop_back();
                keys.pop_back();
            }
            continue;
        }
        auto kids = tarpit_.children(keys.back());
        bool found = std::any_of(kids.begin(), kids.end(), [&](const auto& e) { return e.is_dir && e.name == part; });
        if (!found) return false;
        keys.push_back(tarpit_.child_key(keys.back(), part));
        path.push_back(std::move(part));
    }
    path_ = std::move(path);
    keys_ = std::move(keys);
    return true;
}

FtpReply TarpitSession::handle(std::string_view line) {
    FtpReply r;
    auto cmd = parse_ftp_command(line);
    auto crlf = [](std::string_view s) { return std::string(s) + "\r\n"; };

    if (cmd.verb == "USER") {
        pending_user_ = cmd.arg;
        r.control = crlf("331 Please specify the password.");
    } else if (cmd.verb == "PASS") {
        if (pending_user_.empty()) {
            r.control = crlf("503 Login with USER first.");
        } else if (pending_user_ != tarpit_.config().username) {
            pending_user_.clear();
            r.control = crlf("530 Login incorrect.");
        } else {
            pending_user_.clear();
            authed_ = true;
            r.control = crlf("230 Login successful.");
        }
    } else if (cmd.verb == "QUIT") {
        r.control = crlf("221 Goodbye.");
        r.close = true;
    } else if (cmd.verb == "SYST") {
        r.control = crlf("215 UNIX Type: L8");
    } else if (!authed_) {
        r.control = crlf("530 Please login with USER and PASS.");
    } else if (cmd.verb == "TYPE") {
        r.control = crlf("200 Switching to Binary mode.");
    } else if (cmd.verb == "PWD") {
        r.control = crlf("257 \"" + format_path(path_) + "\" is the current directory");
    } else if (cmd.verb == "CWD" || cmd.verb == "CDUP") {
        bool ok = change_dir(cmd.verb == "CDUP" ? std::string("..") : cmd.arg);
        r.control = ok ? crlf("250 Directory successfully changed.") : crlf("550 Failed to change directory.");
    } else if (cmd.verb == "PORT") {
        if (auto ep = parse_host_port(cmd.arg)) {
            data_.set_active(*ep);
            r.control = crlf("200 PORT command successful. Consider using PASV.");
        } else {
            r.control = crlf("500 Illegal PORT command.");
        }
    } else if (cmd.verb == "PASV") {
        if (auto ep = data_.open_passive())
            r.control = crlf("227 Entering Passive Mode (" + format_host_port(*ep) + ").");
        else
            r.control = crlf("425 Cannot open passive connection.");
    } else if (cmd.verb == "LIST") {
        TarpitPath target = path_;
        if (!cmd.arg.empty() && !cmd.arg.starts_with('-')) {
            TarpitSession probe(*this);
            if (!probe.change_dir(cmd.arg)) {
                r.control = crlf("550 Failed to change directory.");
                return r;
            }
            target = probe.path_;
        }
        if (data_.mode() == DataMode::none) {
            r.control = crlf("425 Use PORT or PASV first.");
            return r;
        }
        auto listing = render_listing(tarpit_, target, session_id_, peer_);
        if (!listing) {
            r.control = crlf("550 Failed to change directory.");
            return r;
        }
        r.control = std::move(listing->preliminary);
        r.data = std::move(listing->data);
        r.after_data = std::move(listing->final_line);
        if (sink_) sink_->on_activation(listing->event);
        r.events.push_back(std::move(listing->event));
    } else if (cmd.verb == "RETR" && tarpit_.config().fake_files) {
        auto kids = tarpit_.children(keys_.back());
        auto it = std::find_if(kids.begin(), kids.end(), [&](const auto& e) { return !e.is_dir && e.name == cmd.arg; });
        if (it == kids.end() || data_.mode() == DataMode::none) {
            r.control = crlf(it == kids.end() ? "550 Failed to open file." : "425 Use PORT or PASV first.");
        } else {
            std::string body = tarpit_.fake_file_content(keys_.back(), it->name);
            r.control = crlf("150 Opening BINARY mode data connection for " + it->name + " (" +
                             std::to_string(body.size()) + " bytes).");
            r.data = std::move(body);
            r.after_data = "226 Transfer complete. " + conceal_ansi(tarpit_.config().reinject_text) + "\r\n";
        }
    } else {
        r.control = crlf("502 command not found.");
    }
    return r;
}

FtpHandlerFactory tarpit_factory(const Tarpit& tarpit, ActivationSink* sink) {
    return [&tarpit, sink](const FtpConnection& c) {
        return std::make_unique<TarpitSession>(tarpit, sink, c.data, c.session_id, c.peer);
    };
}

}  // namespace mantis
