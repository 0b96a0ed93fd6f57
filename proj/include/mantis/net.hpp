#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <functional>
#include <list>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include "mantis/rng.hpp"
#include "mantis/types.hpp"

namespace mantis {

using std::chrono::milliseconds;

// Anything bytes can be exchanged over. Sockets implement it; tests use
// in-memory fakes.
class ByteStream {
public:
    virtual ~ByteStream() = default;
    virtual void write_all(std::string_view bytes) = 0;
    // Bytes read (0 = orderly EOF), or nullopt when nothing arrived in time.
    virtual std::optional<std::size_t> read_some(std::span<char> buf, milliseconds timeout) = 0;
};

class Socket final : public ByteStream {
public:
    Socket() = default;
    explicit Socket(int fd) noexcept : fd_(fd) {}
    Socket(Socket&& o) noexcept : fd_(std::exchange(o.fd_, -1)) {}
    Socket& operator=(Socket&& o) noexcept;
    Socket(const Socket&) = delete;
    Socket& operator=(const Socket&) = delete;
    ~Socket() override { close(); }

    int fd() const noexcept { return fd_; }
    bool valid() const noexcept { return fd_ >= 0; }

    void write_all(std::string_view bytes) override;
    std::optional<std::size_t> read_some(std::span<char> buf, milliseconds timeout) override;

    // Reads until EOF, `limit` bytes, or `timeout` of silence.
    std::string read_all(milliseconds timeout, std::size_t limit = std::size_t(64) << 20);

    void shutdown_write() noexcept;
    void close() noexcept;

    Endpoint peer() const;
    Endpoint local() const;

private:
    int fd_ = -1;
};

// Reassembles CRLF / LF terminated lines from a stream.
class LineReader {
public:
    explicit LineReader(ByteStream& stream, std::size_t max_line = 4096) : stream_(stream), max_line_(max_line) {}

    // Line without its terminator; nullopt on EOF or timeout. A line longer
    // than max_line is returned truncated and flagged via overflowed().
    std::optional<std::string> next(milliseconds timeout);
    bool overflowed() const noexcept { return overflowed_; }
    bool timed_out() const noexcept { return timed_out_; }

private:
    ByteStream& stream_;
    std::size_t max_line_;
    std::string buf_;
    bool overflowed_ = false;
    bool timed_out_ = false;
};

class Listener {
public:
    Listener() = default;
    // port 0 picks an ephemeral port. Throws NetError if the bind fails.
    Listener(const std::string& host, std::uint16_t port, int backlog = 64);
    Listener(Listener&&) noexcept = default;
    Listener& operator=(Listener&&) noexcept = default;

    std::optional<Socket> accept(milliseconds timeout);
    std::uint16_t port() const noexcept { return port_; }
    const std::string& host() const noexcept { return host_; }
    bool valid() const noexcept { return sock_.valid(); }
    void close() noexcept { sock_.close(); }

private:
    Socket sock_;
    std::string host_;
    std::uint16_t port_ = 0;
};

Socket connect_tcp(const Endpoint& to, milliseconds timeout = milliseconds(3000));

// Binds a listener on a uniformly chosen free port of `range`, retrying up to
// `attempts` times. nullopt when every attempt collided.
std::optional<Listener> bind_in_range(const std::string& host, const PortRange& range, SplitMix64& rng,
                                      int attempts = 64, const std::set<std::uint16_t>& exclude = {});

// Accept loop plus one thread per connection. stop() closes the listener,
// shuts down every live connection and joins all threads.
class TcpServer {
public:
    using Handler = std::function<void(Socket&)>;

    TcpServer(Listener listener, Handler handler);
    ~TcpServer() { stop(); }
    TcpServer(const TcpServer&) = delete;
    TcpServer& operator=(const TcpServer&) = delete;

    std::uint16_t port() const noexcept { return port_; }
    bool running() const noexcept { return !stopping_; }
    void stop();
    // Stop accepting new connections; live ones keep going.
    void close_listener();

private:
    void accept_loop();

    Listener listener_;
    Handler handler_;
    std::uint16_t port_;
    std::atomic<bool> stopping_{false};
    std::atomic<bool> listener_closed_{false};
    std::mutex mu_;
    std::set<int> live_fds_;
    struct Worker {
        std::thread thread;
        std::shared_ptr<std::atomic<bool>> done;
    };
    std::list<Worker> workers_;
    std::thread acceptor_;
};

}  // namespace mantis
