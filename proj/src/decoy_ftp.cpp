#include "mantis/decoy_ftp.hpp"

#include <algorithm>
#include <cctype>

namespace mantis {

namespace {

constexpr std::string_view kDecoyDataWhenUnarmed = "# maintenance notes\nrotate keys before Friday\n";

std::string crlf(std::string_view s) { return std::string(s) + "\r\n"; }

}  // namespace

std::vector<ListingEntry> default_bait_listing() {
    return {
        {"backup.tar.gz", false, 48'213'504, "Mar 02 09:14"},
        {"credentials.txt", false, 1'337, "Jan 18 22:41"},
        {"db_dumps", true, 4096, "Feb 27 07:53"},
        {"ssh_keys", true, 4096, "Apr 14 11:09"},
    };
}

std::string ftp_banner() { return "220 (vsFTPd 3.0.3)\r\n"; }

bool is_anonymous_user(std::string_view user) noexcept {
    std::string folded(user);
    std::transform(folded.begin(), folded.end(), folded.begin(), [](unsigned char c) { return char(std::tolower(c)); });
    return folded == "anonymous" || folded == "ftp";
}

FtpDecoySession::FtpDecoySession(FtpDecoyConfig config, ActivationSink* sink, DataChannel& data,
                                 std::string session_id, Endpoint peer)
    : config_(std::move(config)), sink_(sink), data_(data) {
    session_.session_id = std::move(session_id);
    session_.peer = std::move(peer);
}

std::optional<Payload> FtpDecoySession::activate(ActivationKind kind, std::vector<ActivationEvent>& events,
                                                 std::string detail) {
    if (session_.activated.insert(kind).second) {
        auto ev = make_event(config_.decoy_id, session_.session_id, kind, session_.peer, std::move(detail));
        events.push_back(ev);
        if (sink_ && !session_.payload) session_.payload = sink_->on_activation(ev);
        else if (sink_) sink_->on_activation(ev);
    }
    return session_.payload;
}

const ListingEntry* FtpDecoySession::find_entry(std::string_view name) const {
    if (session_.cwd != "/") return nullptr;
    if (name.starts_with('/')) name.remove_prefix(1);
    auto it = std::find_if(config_.root.begin(), config_.root.end(), [&](const auto& e) { return e.name == name; });
    return it == config_.root.end() ? nullptr : &*it;
}

FtpReply FtpDecoySession::handle(std::string_view line) {
    FtpReply r;
    auto cmd = parse_ftp_command(line);
    const bool authed = session_.state == FtpAuthState::authenticated;

    if (cmd.verb == "USER") {
        session_.pending_user = cmd.arg;
        if (!authed) session_.state = FtpAuthState::awaiting_pass;
        r.control = crlf("331 Please specify the password.");
    } else if (cmd.verb == "PASS") {
        if (session_.pending_user.empty()) {
            r.control = crlf("503 Login with USER first.");
        } else if (!is_anonymous_user(session_.pending_user)) {
            session_.pending_user.clear();
            if (!authed) session_.state = FtpAuthState::awaiting_user;
            r.control = crlf("530 Login incorrect.");
        } else {
            session_.username = std::exchange(session_.pending_user, {});
            session_.state = FtpAuthState::authenticated;
            auto payload = activate(ActivationKind::ftp_anonymous_login, r.events, session_.username);
            r.control = payload ? "230 Login successful. " + payload->assembled + "\r\n"
                                : crlf("230 Login successful.");
        }
    } else if (cmd.verb == "QUIT") {
        r.control = crlf("221 Goodbye.");
        r.close = true;
    } else if (cmd.verb == "SYST") {
        r.control = crlf("215 UNIX Type: L8");
    } else if (cmd.verb == "TYPE" || cmd.verb == "PWD" || cmd.verb == "CWD" || cmd.verb == "PORT" ||
               cmd.verb == "PASV" || cmd.verb == "LIST" || cmd.verb == "RETR") {
        if (!authed) {
            r.control = crlf("530 Please login with USER and PASS.");
        } else if (cmd.verb == "TYPE") {
            r.control = cmd.arg.starts_with('A') || cmd.arg.starts_with('a') ? crlf("200 Switching to ASCII mode.")
                                                                               : crlf("200 Switching to Binary mode.");
        } else if (cmd.verb == "PWD") {
            r.control = crlf("257 \"" + session_.cwd + "\" is the current directory");
        } else if (cmd.verb == "CWD") {
            std::string target = cmd.arg;
            if (target == "/" || target == ".." || target == "../" || target.empty()) {
                session_.cwd = "/";
                r.control = crlf("250 Directory successfully changed.");
            } else if (auto* e = find_entry(target); e && e->is_dir) {
                session_.cwd = "/" + e->name;
                r.control = crlf("250 Directory successfully changed.");
            } else {
                r.control = crlf("550 Failed to change directory.");
            }
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
        } else if (data_.mode() == DataMode::none) {
            r.control = crlf("425 Use PORT or PASV first.");
        } else if (cmd.verb == "LIST") {
            std::string listing;
            if (session_.cwd == "/")
                for (const auto& e : config_.root) listing += render_listing_line(e);
            r.control = crlf("150 Here comes the directory listing.");
            r.data = std::move(listing);
            r.after_data = crlf("226 Directory send OK.");
        } else {  // RETR
            const auto* e = find_entry(cmd.arg);
            if (!e || e->is_dir) {
                r.control = crlf("550 Failed to open file.");
            } else {
                auto payload = activate(ActivationKind::ftp_fake_retr, r.events, e->name);
                std::string body = payload ? payload->assembled + "\n" : std::string(kDecoyDataWhenUnarmed);
                r.control = crlf("150 Opening BINARY mode data connection for " + e->name + " (" +
                                 std::to_string(body.size()) + " bytes).");
                r.data = std::move(body);
                r.after_data = crlf("226 Transfer complete.");
            }
        }
    } else {
        r.control = crlf("502 Command not implemented.");
    }
    return r;
}

FtpHandlerFactory ftp_decoy_factory(const FtpDecoyConfig& config, ActivationSink* sink) {
    return [config, sink](const FtpConnection& c) {
        return std::make_unique<FtpDecoySession>(config, sink, c.data, c.session_id, c.peer);
    };
}

}  // namespace mantis
