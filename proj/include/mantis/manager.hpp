#pragma once

#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <functional>
#include <future>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include "mantis/event_log.hpp"
#include "mantis/ftp.hpp"
#include "mantis/net.hpp"
#include "mantis/payload.hpp"
#include "mantis/rng.hpp"
#include "mantis/tarpit.hpp"

namespace mantis {

enum class ServiceKind { initiator_http, shell_listener, tarpit_ftp };
enum class Outcome { pending, counterstrike_verified, tarpit_engaged, attacker_escaped };

std::string_view to_string(ServiceKind kind) noexcept;
std::string_view to_string(Outcome outcome) noexcept;

struct LiveService {
    ServiceKind kind = ServiceKind::initiator_http;
    std::uint16_t port = 0;
    std::chrono::system_clock::time_point started_at;
    std::string engagement_id;  // empty for the shared tarpit
};

struct ShellVerification {
    std::string probe_command;
    std::string expected_marker;
    std::string observed;
    bool verified = false;
};

// 16 lowercase hex digits.
std::string random_marker(SplitMix64& rng);

// Sends "echo <marker>\n" and reads up to 4 KiB until the marker shows up,
// the stream closes, or `timeout` expires.
ShellVerification verify_shell(ByteStream& conn, const std::string& marker,
                               milliseconds timeout = milliseconds(5000));

struct ManagerConfig {
    SabotageObjective objective{CounterstrikeParams{}};
    PortRange port_range;
    std::string bind_host = "0.0.0.0";
    std::vector<ExecutionTrigger> triggers = default_trigger_pool();
    std::uint64_t seed = 0;
    // Tarpit seed, branching and username are taken from the objective when
    // it is a tarpit objective.
    TarpitConfig tarpit;
    milliseconds verify_timeout{5000};
    milliseconds initiator_grace{1000};
    // Ports never handed out (decoys, gateway listeners).
    std::set<std::uint16_t> reserved_ports;
    int bind_attempts = 64;
};

struct Engagement {
    std::string id;
    std::string peer_host;
    Outcome outcome = Outcome::pending;
    std::map<std::string, Payload> armed;  // decoy_id -> payload handed out
    std::optional<CounterstrikeParams> counterstrike;
    std::string marker;
    std::set<std::string> sessions;
};

struct ManagerState {
    SabotageObjective objective;
    std::map<std::string, Payload> armed_decoys;  // most recent payload per decoy
    std::vector<LiveService> live_services;
    std::map<std::string, std::string> sessions;  // session_id -> engagement id
    std::map<std::string, Engagement> engagements;
    Outcome outcome = Outcome::pending;  // pending until some engagement is decided
};

// Coordinator behind every decoy. All state changes run on one worker thread;
// callers block on a future for the reply. Engagements are keyed by the peer
// address.
class InjectionManager final : public ActivationSink {
public:
    InjectionManager(ManagerConfig config, EventLog& log);
    ~InjectionManager() override;
    InjectionManager(const InjectionManager&) = delete;
    InjectionManager& operator=(const InjectionManager&) = delete;

    // Events from decoys that were never registered are logged and ignored.
    void register_decoy(const std::string& decoy_id);

    std::optional<Payload> on_activation(const ActivationEvent& event) override;

    ManagerState snapshot();
    Outcome outcome_for(const std::string& peer_host);
    // Waits until the engagement of `peer_host` reaches `want`.
    bool wait_for(const std::string& peer_host, Outcome want, milliseconds timeout);
    // Marks a still pending engagement as escaped and stops its services.
    void conclude(const std::string& peer_host);

    // The shared tarpit, once the tarpit objective has been armed.
    const Tarpit* tarpit() const noexcept { return tarpit_.get(); }

    // Stops the coordinator and every spawned service. Idempotent.
    void shutdown();

private:
    struct CounterstrikeServices;
    struct TarpitService;

    template <class F>
    auto call(F&& fn) -> decltype(fn());
    void post(std::function<void()> task);
    void after(milliseconds delay, std::function<void()> task);
    void run();

    std::optional<Payload> handle(const ActivationEvent& event);
    Engagement& engagement_for(const std::string& peer_host);
    bool arm_counterstrike(Engagement& eng);
    bool arm_tarpit();
    void stop_counterstrike(const std::string& engagement_id, bool initiator_only);
    void on_shell(const std::string& engagement_id, const Endpoint& peer, const ShellVerification& v);
    void set_outcome(Engagement& eng, Outcome outcome);
    std::optional<std::uint16_t> pick_port(const std::function<bool(std::uint16_t)>& try_bind);
    std::set<std::uint16_t> used_ports() const;
    ManagerState snapshot_locked() const;

    ManagerConfig config_;
    EventLog& log_;
    SplitMix64 rng_;
    std::set<std::string> decoys_;
    std::map<std::string, Engagement> engagements_;  // by peer host
    std::map<std::string, std::string> sessions_;
    std::vector<LiveService> live_;
    std::map<std::string, std::unique_ptr<CounterstrikeServices>> counterstrike_;
    std::unique_ptr<Tarpit> tarpit_;
    std::unique_ptr<TarpitService> tarpit_service_;
    std::uint64_t next_engagement_ = 1;

    std::mutex qmu_;
    std::condition_variable qcv_;
    std::deque<std::function<void()>> queue_;
    std::multimap<std::chrono::steady_clock::time_point, std::function<void()>> timers_;
    bool stopping_ = false;
    std::mutex outcome_mu_;
    std::condition_variable outcome_cv_;
    std::map<std::string, Outcome> outcomes_;  // by peer host, readable without the worker
    std::thread::id worker_id_;
    std::thread worker_;
    std::once_flag shutdown_once_;
};

// Relays every accepted connection to `upstream` unchanged. A connection per
// client; byte counts are logged when it ends.
class Gateway {
public:
    Gateway(Listener listener, Endpoint upstream, EventLog& log, milliseconds connect_timeout = milliseconds(3000));
    ~Gateway();
    Gateway(const Gateway&) = delete;
    Gateway& operator=(const Gateway&) = delete;

    std::uint16_t port() const noexcept;
    const Endpoint& upstream() const noexcept { return upstream_; }
    void stop();

private:
    void relay(Socket& client);

    Endpoint upstream_;
    EventLog& log_;
    milliseconds connect_timeout_;
    std::atomic<bool> stopping_{false};
    std::unique_ptr<TcpServer> server_;
};

}  // namespace mantis
