#include <poll.h>
#include <sys/socket.h>

#include <cerrno>

#include "mantis/error.hpp"
#include "mantis/manager.hpp"

namespace mantis {

Gateway::Gateway(Listener listener, Endpoint upstream, EventLog& log, milliseconds connect_timeout)
    : upstream_(std::move(upstream)), log_(log), connect_timeout_(connect_timeout) {
    server_ = std::make_unique<TcpServer>(std::move(listener), [this](Socket& client) { relay(client); });
    log_.append("gateway", "gateway_started", {{"port", server_->port()}, {"upstream", upstream_.to_string()}});
}

Gateway::~Gateway() { stop(); }

std::uint16_t Gateway::port() const noexcept { return server_->port(); }

void Gateway::stop() {
    stopping_ = true;
    if (server_) server_->stop();
}

void Gateway::relay(Socket& client) {
    Endpoint peer;
    try {
        peer = client.peer();
    } catch (const NetError&) {
    }
    Socket upstream;
    try {
        upstream = connect_tcp(upstream_, connect_timeout_);
    } catch (const NetError& e) {
        log_.append("gateway", "gateway_upstream_down",
                    {{"peer", peer.to_string()}, {"upstream", upstream_.to_string()}, {"error", e.what()}});
        client.close();
        return;
    }

    std::uint64_t up = 0, down = 0;
    bool client_open = true, upstream_open = true;
    char buf[64 * 1024];
    // Copies one chunk; false once the source is done.
    auto pump = [&](Socket& from, Socket& to, std::uint64_t& count) {
        ssize_t n;
        do {
            n = ::recv(from.fd(), buf, sizeof buf, 0);
        } while (n < 0 && errno == EINTR);
        if (n <= 0) {
            to.shutdown_write();
            return false;
        }
        try {
            to.write_all({buf, std::size_t(n)});
        } catch (const NetError&) {
            return false;
        }
        count += std::uint64_t(n);
        return true;
    };
    while ((client_open || upstream_open) && !stopping_) {
        pollfd fds[2] = {{client.fd(), short(client_open ? POLLIN : 0), 0},
                         {upstream.fd(), short(upstream_open ? POLLIN : 0), 0}};
        int rc = ::poll(fds, 2, 100);
        if (rc < 0 && errno != EINTR) break;
        if (rc <= 0) continue;
        if (client_open && (fds[0].revents & (POLLIN | POLLHUP | POLLERR)))
            client_open = pump(client, upstream, up);
        if (upstream_open && (fds[1].revents & (POLLIN | POLLHUP | POLLERR)))
            upstream_open = pump(upstream, client, down);
    }
    log_.append("gateway", "gateway_connection",
                {{"peer", peer.to_string()}, {"upstream", upstream_.to_string()}, {"bytes_up", up},
                 {"bytes_down", down}});
}

}  // namespace mantis
