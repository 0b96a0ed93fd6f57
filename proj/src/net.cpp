#include "mantis/net.hpp"

#include <arpa/inet.h>
#include <fcntl.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>

#include "mantis/error.hpp"

namespace mantis {

namespace {

std::string errno_text(const char* what) { return std::string(what) + ": " + std::strerror(errno); }

sockaddr_in make_addr(const std::string& host, std::uint16_t port) {
    sockaddr_in sa{};
    sa.sin_family = AF_INET;
    sa.sin_port = htons(port);
    if (host.empty() || host == "0.0.0.0") {
        sa.sin_addr.s_addr = htonl(INADDR_ANY);
    } else if (host == "localhost") {
        sa.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
    } else if (::inet_pton(AF_INET, host.c_str(), &sa.sin_addr) != 1) {
        throw NetError("not an IPv4 address: " + host);
    }
    return sa;
}

Endpoint to_endpoint(const sockaddr_in& sa) {
    char buf[INET_ADDRSTRLEN] = {};
    ::inet_ntop(AF_INET, &sa.sin_addr, buf, sizeof buf);
    return {buf, ntohs(sa.sin_port)};
}

// true when readable before the timeout
bool wait_readable(int fd, milliseconds timeout) {
    pollfd p{fd, POLLIN, 0};
    for (;;) {
        int rc = ::poll(&p, 1, int(timeout.count()));
        if (rc < 0 && errno == EINTR) continue;
        return rc > 0;
    }
}

}  // namespace

Socket& Socket::operator=(Socket&& o) noexcept {
    if (this != &o) {
        close();
        fd_ = std::exchange(o.fd_, -1);
    }
    return *this;
}

void Socket::write_all(std::string_view bytes) {
    while (!bytes.empty()) {
        ssize_t n = ::send(fd_, bytes.data(), bytes.size(), MSG_NOSIGNAL);
        if (n < 0) {
            if (errno == EINTR) continue;
            throw NetError(errno_text("send"));
        }
        bytes.remove_prefix(std::size_t(n));
    }
}

std::optional<std::size_t> Socket::read_some(std::span<char> buf, milliseconds timeout) {
    if (!wait_readable(fd_, timeout)) return std::nullopt;
    for (;;) {
        ssize_t n = ::recv(fd_, buf.data(), buf.size(), 0);
        if (n < 0 && errno == EINTR) continue;
        if (n < 0) {
            if (errno == ECONNRESET || errno == ENOTCONN) return 0;
            throw NetError(errno_text("recv"));
        }
        return std::size_t(n);
    }
}

std::string Socket::read_all(milliseconds timeout, std::size_t limit) {
    std::string out;
    char buf[16384];
    while (out.size() < limit) {
        auto n = read_some(buf, timeout);
        if (!n || *n == 0) break;
        out.append(buf, *n);
    }
    return out;
}

void Socket::shutdown_write() noexcept {
    if (fd_ >= 0) ::shutdown(fd_, SHUT_WR);
}

void Socket::close() noexcept {
    if (fd_ >= 0) {
        ::close(fd_);
        fd_ = -1;
    }
}

Endpoint Socket::peer() const {
    sockaddr_in sa{};
    socklen_t len = sizeof sa;
    if (::getpeername(fd_, reinterpret_cast<sockaddr*>(&sa), &len) != 0) return {};
    return to_endpoint(sa);
}

Endpoint Socket::local() const {
    sockaddr_in sa{};
    socklen_t len = sizeof sa;
    if (::getsockname(fd_, reinterpret_cast<sockaddr*>(&sa), &len) != 0) return {};
    return to_endpoint(sa);
}

std::optional<std::string> LineReader::next(milliseconds timeout) {
    overflowed_ = false;
    timed_out_ = false;
    for (;;) {
        auto nl = buf_.find('\n');
        if (nl != std::string::npos) {
            std::string line = buf_.substr(0, nl);
            buf_.erase(0, nl + 1);
            if (!line.empty() && line.back() == '\r') line.pop_back();
            if (line.size() > max_line_) {
                line.resize(max_line_);
                overflowed_ = true;
            }
            return line;
        }
        if (buf_.size() > max_line_ * 4) {
            // runaway line without terminator: hand back what we have
            std::string line = buf_.substr(0, max_line_);
            buf_.clear();
            overflowed_ = true;
            return line;
        }
        char tmp[4096];
        auto n = stream_.read_some(tmp, timeout);
        if (!n) {
            timed_out_ = true;
            return std::nullopt;
        }
        if (*n == 0) return std::nullopt;
        buf_.append(tmp, *n);
    }
}

Listener::Listener(const std::string& host, std::uint16_t port, int backlog) : host_(host) {
    int fd = ::socket(AF_INET, SOCK_STREAM | SOCK_CLOEXEC, 0);
    if (fd < 0) throw NetError(errno_text("socket"));
    sock_ = Socket(fd);
    int one = 1;
    ::setsockopt(fd, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
    auto sa = make_addr(host, port);
    if (::bind(fd, reinterpret_cast<sockaddr*>(&sa), sizeof sa) != 0)
        throw NetError(errno_text(("bind " + host + ":" + std::to_string(port)).c_str()));
    if (::listen(fd, backlog) != 0) throw NetError(errno_text("listen"));
    port_ = sock_.local().port;
}

std::optional<Socket> Listener::accept(milliseconds timeout) {
    if (!sock_.valid() || !wait_readable(sock_.fd(), timeout)) return std::nullopt;
    int fd = ::accept4(sock_.fd(), nullptr, nullptr, SOCK_CLOEXEC);
    if (fd < 0) return std::nullopt;
    int one = 1;
    ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
    return Socket(fd);
}

Socket connect_tcp(const Endpoint& to, milliseconds timeout) {
    int fd = ::socket(AF_INET, SOCK_STREAM | SOCK_CLOEXEC | SOCK_NONBLOCK, 0);
    if (fd < 0) throw NetError(errno_text("socket"));
    Socket sock(fd);
    auto sa = make_addr(to.host, to.port);
    if (::connect(fd, reinterpret_cast<sockaddr*>(&sa), sizeof sa) != 0) {
        if (errno != EINPROGRESS) throw NetError(errno_text(("connect " + to.to_string()).c_str()));
        pollfd p{fd, POLLOUT, 0};
        int rc;
        do {
            rc = ::poll(&p, 1, int(timeout.count()));
        } while (rc < 0 && errno == EINTR);
        if (rc == 0) throw NetError("connect " + to.to_string() + ": timed out");
        int err = 0;
        socklen_t len = sizeof err;
        ::getsockopt(fd, SOL_SOCKET, SO_ERROR, &err, &len);
        if (err != 0) throw NetError("connect " + to.to_string() + ": " + std::strerror(err));
    }
    ::fcntl(fd, F_SETFL, ::fcntl(fd, F_GETFL) & ~O_NONBLOCK);
    int one = 1;
    ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
    return sock;
}

std::optional<Listener> bind_in_range(const std::string& host, const PortRange& range, SplitMix64& rng,
                                      int attempts, const std::set<std::uint16_t>& exclude) {
    if (range.size() == 0) return std::nullopt;
    for (int i = 0; i < attempts; ++i) {
        auto port = std::uint16_t(range.lo + rng.below(range.size()));
        if (exclude.contains(port)) continue;
        try {
            return Listener(host, port);
        } catch (const NetError&) {
        }
    }
    return std::nullopt;
}

TcpServer::TcpServer(Listener listener, Handler handler)
    : listener_(std::move(listener)), handler_(std::move(handler)), port_(listener_.port()) {
    acceptor_ = std::thread([this] { accept_loop(); });
}

void TcpServer::accept_loop() {
    while (!stopping_) {
        if (listener_closed_) {
            listener_.close();
            // keep the thread alive for stop(); connections may still be live
            std::this_thread::sleep_for(milliseconds(20));
            continue;
        }
        auto conn = listener_.accept(milliseconds(50));
        std::lock_guard lock(mu_);
        for (auto it = workers_.begin(); it != workers_.end();) {
            if (*it->done) {
                it->thread.join();
                it = workers_.erase(it);
            } else {
                ++it;
            }
        }
        if (!conn || stopping_) continue;
        auto done = std::make_shared<std::atomic<bool>>(false);
        int fd = conn->fd();
        live_fds_.insert(fd);
        workers_.push_back({std::thread([this, done, c = std::move(*conn)]() mutable {
                                try {
                                    handler_(c);
                                } catch (const std::exception&) {
                                    // a broken peer ends only its own session
                                }
                                {
                                    std::lock_guard lk(mu_);
                                    live_fds_.erase(c.fd());
                                }
                                c.close();
                                *done = true;
                            }),
                            done});
    }
    listener_.close();
}

void TcpServer::close_listener() { listener_closed_ = true; }

void TcpServer::stop() {
    if (stopping_.exchange(true)) {
        if (acceptor_.joinable()) acceptor_.join();
        return;
    }
    if (acceptor_.joinable()) acceptor_.join();
    std::list<Worker> workers;
    {
        std::lock_guard lock(mu_);
        for (int fd : live_fds_) ::shutdown(fd, SHUT_RDWR);
        workers.swap(workers_);
    }
    for (auto& w : workers) w.thread.join();
}

}  // namespace mantis
