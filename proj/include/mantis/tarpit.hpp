#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "mantis/ftp.hpp"
#include "mantis/payload.hpp"

namespace mantis {

// Sensitive-sounding directory labels, harvested from real tarpit sessions.
std::vector<std::string> default_name_pool();
std::span<const std::string_view> name_suffixes() noexcept;

struct TarpitConfig {
    std::uint64_t seed = 0;
    std::uint32_t branching = 10;
    std::vector<std::string> name_pool = default_name_pool();
    std::uint16_t port = 0;
    std::string username = "svc_backup";
    std::string reinject_text = std::string(kTarpitReinjection);
    // Off by default: file bait makes agents leave the interactive session.
    bool fake_files = false;
};

struct TarpitEntry {
    std::string name;
    std::string date;  // "Mon DD HH:MM"
    bool is_dir = true;
    std::uint64_t size = 4096;
};

using TarpitPath = std::vector<std::string>;

// An infinite directory tree. Children of a node are a pure function of
// (seed, path); nothing is stored.
class Tarpit {
public:
    // Throws ConfigError on an invalid config (empty / short name pool,
    // branching 0, malformed username).
    explicit Tarpit(TarpitConfig config);

    const TarpitConfig& config() const noexcept { return config_; }

    using NodeKey = std::uint64_t;
    NodeKey root() const noexcept;
    NodeKey child_key(NodeKey parent, std::string_view name) const noexcept;

    // Number of children of a node: in [branching, 2 * branching).
    std::size_t child_count(NodeKey node) const noexcept;
    std::vector<TarpitEntry> children(NodeKey node) const;

    // Key of `path`, or nullopt if some component was never generated.
    std::optional<NodeKey> resolve(const TarpitPath& path) const;

    // Throws std::invalid_argument ("550 Failed to change directory.") for
    // paths the tarpit never produced.
    std::vector<TarpitEntry> children_of(const TarpitPath& path) const;

    // Deterministic pseudo-text for the optional fake files.
    std::string fake_file_content(NodeKey node, std::string_view name) const;

private:
    TarpitConfig config_;
};

struct TarpitListing {
    std::string preliminary;  // "150 Here comes the directory listing\r\n"
    std::string data;         // one line per child
    std::string final_line;   // "226 Directory send OK " + concealed re-injection
    ActivationEvent event;
};

// nullopt for an invalid path (the caller answers 550, no event).
std::optional<TarpitListing> render_listing(const Tarpit& tarpit, const TarpitPath& path,
                                            const std::string& session_id = {}, const Endpoint& peer = {});

// (bytes / bytes_per_token) * price_per_megatoken / 1e6. Throws
// std::invalid_argument on non-positive inputs.
double estimate_round_cost(double listing_bytes, double price_per_megatoken, double bytes_per_token);

// Canonical "/a/b" form.
std::string format_path(const TarpitPath& path);

// FTP front-end: only the advertised username gets in; only listing and
// traversal do anything.
class TarpitSession final : public FtpHandler {
public:
    TarpitSession(const Tarpit& tarpit, ActivationSink* sink, DataChannel& data, std::string session_id, Endpoint peer);

    std::string greeting() override { return ftp_banner_text(); }
    FtpReply handle(std::string_view line) override;

    const TarpitPath& cwd() const noexcept { return path_; }
    static std::string ftp_banner_text();

private:
    bool change_dir(std::string_view arg);

    const Tarpit& tarpit_;
    ActivationSink* sink_;
    DataChannel& data_;
    std::string session_id_;
    Endpoint peer_;
    std::string pending_user_;
    bool authed_ = false;
    TarpitPath path_;
    std::vector<Tarpit::NodeKey> keys_;  // keys_[i] = key of path_[0..i)
};

// The factory keeps a reference to `tarpit`; it must outlive the server.
FtpHandlerFactory tarpit_factory(const Tarpit& tarpit, ActivationSink* sink);

}  // namespace mantis
