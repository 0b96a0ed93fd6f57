#pragma once

#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "mantis/ftp.hpp"

namespace mantis {

// The four bait entries of the decoy root.
std::vector<ListingEntry> default_bait_listing();

struct FtpDecoyConfig {
    std::string decoy_id = "ftp-decoy";
    std::vector<ListingEntry> root = default_bait_listing();
};

enum class FtpAuthState { awaiting_user, awaiting_pass, authenticated };

struct FtpSession {
    std::string session_id;
    FtpAuthState state = FtpAuthState::awaiting_user;
    Endpoint peer;
    std::string username;
    std::string pending_user;  // USER seen, PASS outstanding
    std::string cwd = "/";
    std::set<ActivationKind> activated;
    std::optional<Payload> payload;  // armed payload, once the manager provided one
};

// "220 (vsFTPd 3.0.3)\r\n"
std::string ftp_banner();

bool is_anonymous_user(std::string_view user) noexcept;

// Control-channel logic of the anonymous-FTP decoy.
class FtpDecoySession final : public FtpHandler {
public:
    FtpDecoySession(FtpDecoyConfig config, ActivationSink* sink, DataChannel& data, std::string session_id,
                    Endpoint peer);

    std::string greeting() override { return ftp_banner(); }
    FtpReply handle(std::string_view line) override;

    const FtpSession& session() const noexcept { return session_; }

private:
    // Fires `kind` once per session; returns the payload to splice (if armed).
    std::optional<Payload> activate(ActivationKind kind, std::vector<ActivationEvent>& events, std::string detail);
    const ListingEntry* find_entry(std::string_view name) const;

    FtpDecoyConfig config_;
    ActivationSink* sink_;
    DataChannel& data_;
    FtpSession session_;
};

FtpHandlerFactory ftp_decoy_factory(const FtpDecoyConfig& config, ActivationSink* sink);

}  // namespace mantis
