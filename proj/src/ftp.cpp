#include "mantis/ftp.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cstdio>

namespace mantis {

FtpCommand parse_ftp_command(std::string_view line) {
    while (!line.empty() && (line.back() == '\r' || line.back() == '\n')) line.remove_suffix(1);
    FtpCommand cmd;
    auto sp = line.find(' ');
    auto verb = line.substr(0, sp);
    cmd.verb.resize(verb.size());
    std::transform(verb.begin(), verb.end(), cmd.verb.begin(),
                   [](unsigned char c) { return char(std::toupper(c)); });
    if (sp != std::string_view::npos) cmd.arg = std::string(line.substr(sp + 1));
    return cmd;
}

std::optional<Endpoint> parse_host_port(std::string_view arg) {
    int parts[6];
    const char* p = arg.data();
    const char* end = arg.data() + arg.size();
    for (int i = 0; i < 6; ++i) {
        auto [next, ec] = std::from_chars(p, end, parts[i]);
        if (ec != std::errc{} || parts[i] < 0 || parts[i] > 255) return std::nullopt;
        p = next;
        if (i < 5) {
            if (p == end || *p != ',') return std::nullopt;
            ++p;
        }
    }
    if (p != end) return std::nullopt;
    Endpoint ep;
    ep.host = std::to_string(parts[0]) + "." + std::to_string(parts[1]) + "." + std::to_string(parts[2]) + "." +
              std::to_string(parts[3]);
    ep.port = std::uint16_t(parts[4] * 256 + parts[5]);
    return ep;
}

std::string format_host_port(const Endpoint& ep) {
    std::string host = ep.host;
    std::replace(host.begin(), host.end(), '.', ',');
    return host + "," + std::to_string(ep.port / 256) + "," + std::to_string(ep.port % 256);
}

std::string render_listing_line(const ListingEntry& entry) {
    char buf[96];
    std::snprintf(buf, sizeof buf, "%s 1 root group %llu %s ", entry.is_dir ? "drwxr-xr-x" : "-rw-r--r--",
                  static_cast<unsigned long long>(entry.size), entry.date.c_str());
    return buf + entry.name + "\r\n";
}

namespace {

class SocketDataChannel final : public DataChannel {
public:
    SocketDataChannel(std::string local_host, PortRange range, std::uint64_t seed)
        : local_host_(std::move(local_host)), range_(range), rng_(seed) {}

    std::optional<Endpoint> open_passive() override {
        passive_.reset();
        auto l = bind_in_range(local_host_, range_, rng_);
        if (!l) return std::nullopt;
        Endpoint ep{local_host_, l->port()};
        passive_ = std::move(*l);
        mode_ = DataMode::passive;
        return ep;
    }

    void set_active(const Endpoint& ep) override {
        passive_.reset();
        active_ = ep;
        mode_ = DataMode::active;
    }

    DataMode mode() const override { return mode_; }

    bool transfer(std::string_view bytes) override {
        bool ok = false;
        try {
            if (mode_ == DataMode::passive && passive_) {
                if (auto conn = passive_->accept(milliseconds(5000))) {
                    conn->write_all(bytes);
                    ok = true;
                }
            } else if (mode_ == DataMode::active) {
                auto conn = connect_tcp(active_);
                conn.write_all(bytes);
                ok = true;
            }
        } catch (const std::exception&) {
            ok = false;
        }
        // one transfer per PORT/PASV
        passive_.reset();
        mode_ = DataMode::none;
        return ok;
    }

private:
    std::string local_host_;
    PortRange range_;
    SplitMix64 rng_;
    std::optional<Listener> passive_;
    Endpoint active_;
    DataMode mode_ = DataMode::none;
};

}  // namespace

FtpServer::FtpServer(Listener listener, std::string id, FtpHandlerFactory factory, PortRange passive_range)
    : id_(std::move(id)),
      factory_(std::move(factory)),
      passive_range_(passive_range),
      server_(std::move(listener), [this](Socket& s) { serve(s); }) {}

void FtpServer::serve(Socket& control) {
    auto n = next_session_++;
    std::string session_id = id_ + "-" + std::to_string(n);
    SocketDataChannel data(control.local().host, passive_range_, keyed_hash(n, session_id));
    FtpConnection conn{session_id, control.peer(), data};
    auto handler = factory_(conn);
    control.write_all(handler->greeting());

    LineReader lines(control, kFtpMaxCommand);
    for (;;) {
        auto line = lines.next(milliseconds(300'000));
        if (!line) break;
        if (lines.overflowed()) {
            control.write_all("500 Command line too long.\r\n");
            continue;
        }
        FtpReply reply = handler->handle(*line);
        control.write_all(reply.control);
        if (reply.data) {
            if (data.transfer(*reply.data))
                control.write_all(reply.after_data);
            else
                control.write_all("425 Failed to establish connection.\r\n");
        }
        if (reply.close) break;
    }
}

}  // namespace mantis
