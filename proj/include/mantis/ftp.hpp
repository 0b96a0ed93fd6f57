#pragma once

#include <atomic>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "mantis/net.hpp"
#include "mantis/payload.hpp"
#include "mantis/types.hpp"

namespace mantis {

inline constexpr std::size_t kFtpMaxCommand = 512;

struct FtpCommand {
    std::string verb;  // upper-cased
    std::string arg;
};

// Splits "VERB arg..." and strips a trailing CR/LF.
FtpCommand parse_ftp_command(std::string_view line);

// "h1,h2,h3,h4,p1,p2" <-> endpoint.
std::optional<Endpoint> parse_host_port(std::string_view arg);
std::string format_host_port(const Endpoint& ep);

// One `ls -l` style line, CRLF terminated.
struct ListingEntry {
    std::string name;
    bool is_dir = true;
    std::uint64_t size = 4096;
    std::string date;  // "Mon DD HH:MM"
};
std::string render_listing_line(const ListingEntry& entry);

// What a command produced. `data`, when present, goes over the data channel
// between `control` and `after_data`.
struct FtpReply {
    std::string control;
    std::optional<std::string> data;
    std::string after_data;
    std::vector<ActivationEvent> events;
    bool close = false;
};

enum class DataMode { none, active, passive };

// The server side of PORT / PASV. The real implementation binds sockets;
// unit tests substitute a recorder.
class DataChannel {
public:
    virtual ~DataChannel() = default;
    // Opens a passive listener and returns the endpoint to advertise.
    virtual std::optional<Endpoint> open_passive() = 0;
    virtual void set_active(const Endpoint& ep) = 0;
    virtual DataMode mode() const = 0;
    // Sends bytes over the prepared channel and resets it. false on failure.
    virtual bool transfer(std::string_view bytes) = 0;
};

// Receives activation events and, when the decoy is armed, returns the
// payload to splice into the response.
class ActivationSink {
public:
    virtual ~ActivationSink() = default;
    virtual std::optional<Payload> on_activation(const ActivationEvent& event) = 0;
};

// Per-connection protocol logic.
class FtpHandler {
public:
    virtual ~FtpHandler() = default;
    virtual std::string greeting() = 0;
    virtual FtpReply handle(std::string_view line) = 0;
};

struct FtpConnection {
    std::string session_id;
    Endpoint peer;
    DataChannel& data;
};

using FtpHandlerFactory = std::function<std::unique_ptr<FtpHandler>(const FtpConnection&)>;

// TCP front-end shared by the decoy and the tarpit.
class FtpServer {
public:
    FtpServer(Listener listener, std::string id, FtpHandlerFactory factory, PortRange passive_range = {});
    void stop() { server_.stop(); }
    std::uint16_t port() const noexcept { return server_.port(); }

private:
    void serve(Socket& control);

    std::string id_;
    FtpHandlerFactory factory_;
    PortRange passive_range_;
    std::atomic<std::uint64_t> next_session_{1};
    TcpServer server_;
};

}  // namespace mantis
