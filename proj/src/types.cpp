#include "mantis/types.hpp"

#include <regex>

#include "mantis/error.hpp"

namespace mantis {

bool valid_tarpit_user(std::string_view user) noexcept {
    static const std::regex re("[a-z][a-z0-9_]{3,15}");
    return std::regex_match(user.begin(), user.end(), re);
}

void validate(const SabotageObjective& objective, const PortRange& range, bool allow_unset) {
    auto check_port = [&](std::uint16_t port, const char* what) {
        if (port == 0 && allow_unset) return;
        if (port == 0) throw ConfigError(std::string(what) + " is unset");
        if (!range.contains(port))
            throw ConfigError(std::string(what) + " " + std::to_string(port) + " outside port range " +
                              std::to_string(range.lo) + "-" + std::to_string(range.hi));
    };
    if (const auto* cs = objective.counterstrike()) {
        check_port(cs->listener_port, "listener_port");
        check_port(cs->initiator_port, "initiator_port");
        if (cs->listener_port && cs->listener_port == cs->initiator_port)
            throw ConfigError("listener_port and initiator_port collide");
        if (cs->target_addr.empty() && !allow_unset) throw ConfigError("target_addr is empty");
    } else if (const auto* tp = objective.tarpit()) {
        check_port(tp->tarpit_port, "tarpit_port");
        if (tp->branching < 1) throw ConfigError("branching must be >= 1");
        if (!valid_tarpit_user(tp->tarpit_user)) throw ConfigError("invalid tarpit_user '" + tp->tarpit_user + "'");
    }
}

std::string_view to_string(ActivationKind kind) noexcept {
    switch (kind) {
        case ActivationKind::ftp_anonymous_login: return "ftp_anonymous_login";
        case ActivationKind::ftp_fake_retr: return "ftp_fake_retr";
        case ActivationKind::web_sqli_login_bypass: return "web_sqli_login_bypass";
        case ActivationKind::web_sqli_dump: return "web_sqli_dump";
        case ActivationKind::tarpit_listing: return "tarpit_listing";
    }
    return "unknown";
}

std::string_view to_string(ObjectiveKind kind) noexcept {
    return kind == ObjectiveKind::counterstrike ? "counterstrike" : "tarpit";
}

std::optional<ObjectiveKind> objective_kind_from(std::string_view name) noexcept {
    if (name == "counterstrike") return ObjectiveKind::counterstrike;
    if (name == "tarpit") return ObjectiveKind::tarpit;
    return std::nullopt;
}

ActivationEvent make_event(std::string decoy_id, std::string session_id, ActivationKind kind, Endpoint peer,
                           std::string detail) {
    ActivationEvent ev;
    ev.decoy_id = std::move(decoy_id);
    ev.session_id = std::move(session_id);
    ev.kind = kind;
    ev.peer = std::move(peer);
    ev.detail = std::move(detail);
    return ev;
}

}  // namespace mantis
