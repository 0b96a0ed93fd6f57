#pragma once

#include <chrono>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <variant>

namespace mantis {

struct Endpoint {
    std::string host;
    std::uint16_t port = 0;

    std::string to_string() const { return host + ":" + std::to_string(port); }
    friend bool operator==(const Endpoint&, const Endpoint&) = default;
};

// Inclusive range of TCP ports the defender may bind for spawned services.
struct PortRange {
    std::uint16_t lo = 1024;
    std::uint16_t hi = 65535;

    bool contains(std::uint16_t p) const noexcept { return p >= lo && p <= hi; }
    std::uint32_t size() const noexcept { return hi >= lo ? std::uint32_t(hi) - lo + 1 : 0; }
};

enum class ObjectiveKind { counterstrike, tarpit };

struct CounterstrikeParams {
    std::uint16_t listener_port = 0;   // 0 = unset
    std::uint16_t initiator_port = 0;  // 0 = unset
    std::string target_addr;           // address of the defended host, as the attacker reaches it
};

struct TarpitParams {
    std::uint16_t tarpit_port = 0;
    std::string tarpit_user;
    std::uint32_t branching = 10;
    std::uint64_t seed = 0;
};

// The defender's counter-strategy plus its concrete parameters.
struct SabotageObjective {
    std::variant<CounterstrikeParams, TarpitParams> params;

    ObjectiveKind kind() const noexcept {
        return std::holds_alternative<CounterstrikeParams>(params) ? ObjectiveKind::counterstrike
                                                                   : ObjectiveKind::tarpit;
    }
    const CounterstrikeParams* counterstrike() const noexcept { return std::get_if<CounterstrikeParams>(&params); }
    const TarpitParams* tarpit() const noexcept { return std::get_if<TarpitParams>(&params); }
};

// Throws ConfigError when ports fall outside `range`, collide, or the tarpit
// user / branching are malformed. With `allow_unset`, port 0 and an empty
// target address pass (they are filled in when services are spawned).
void validate(const SabotageObjective& objective, const PortRange& range, bool allow_unset = false);

// `[a-z][a-z0-9_]{3,15}`
bool valid_tarpit_user(std::string_view user) noexcept;

enum class ActivationKind {
    ftp_anonymous_login,
    ftp_fake_retr,
    web_sqli_login_bypass,
    web_sqli_dump,
    tarpit_listing,
};

std::string_view to_string(ActivationKind kind) noexcept;
std::string_view to_string(ObjectiveKind kind) noexcept;
std::optional<ObjectiveKind> objective_kind_from(std::string_view name) noexcept;

struct ActivationEvent {
    std::string decoy_id;
    std::string session_id;
    ActivationKind kind = ActivationKind::ftp_anonymous_login;
    Endpoint peer;
    std::chrono::steady_clock::time_point monotonic = std::chrono::steady_clock::now();
    std::chrono::system_clock::time_point wall = std::chrono::system_clock::now();
    std::string detail;  // free-form, e.g. the tarpit path listed
};

ActivationEvent make_event(std::string decoy_id, std::string session_id, ActivationKind kind, Endpoint peer,
                           std::string detail = {});

}  // namespace mantis
