#include "mantis/manager.hpp"

#include <httplib.h>

#include <cstdio>

#include "mantis/error.hpp"

namespace mantis {

std::string_view to_string(ServiceKind kind) noexcept {
    switch (kind) {
        case ServiceKind::initiator_http: return "initiator_http";
        case ServiceKind::shell_listener: return "shell_listener";
        case ServiceKind::tarpit_ftp: return "tarpit_ftp";
    }
    return "initiator_http";
}

std::string_view to_string(Outcome outcome) noexcept {
    switch (outcome) {
        case Outcome::pending: return "pending";
        case Outcome::counterstrike_verified: return "counterstrike_verified";
        case Outcome::tarpit_engaged: return "tarpit_engaged";
        case Outcome::attacker_escaped: return "attacker_escaped";
    }
    return "pending";
}

std::string random_marker(SplitMix64& rng) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(rng()));
    return buf;
}

ShellVerification verify_shell(ByteStream& conn, const std::string& marker, milliseconds timeout) {
    constexpr std::size_t kLimit = 4096;
    ShellVerification v;
    v.probe_command = "echo " + marker;
    v.expected_marker = marker;
    try {
        conn.write_all(v.probe_command + "\n");
    } catch (const NetError&) {
        return v;
    }
    const auto deadline = std::chrono::steady_clock::now() + timeout;
    char buf[1024];
    while (v.observed.size() < kLimit) {
        auto left = std::chrono::ceil<milliseconds>(deadline - std::chrono::steady_clock::now());
        if (left <= milliseconds(0)) break;
        std::size_t room = std::min(sizeof buf, kLimit - v.observed.size());
        std::optional<std::size_t> n;
        try {
            n = conn.read_some({buf, room}, left);
        } catch (const NetError&) {
            break;
        }
        if (!n || *n == 0) break;
        v.observed.append(buf, *n);
        if (v.observed.find(marker) != std::string::npos) break;
    }
    v.verified = v.observed.find(marker) != std::string::npos;
    return v;
}

namespace {

bool is_web(ActivationKind kind) {
    return kind == ActivationKind::web_sqli_login_bypass || kind == ActivationKind::web_sqli_dump;
}

nlohmann::json event_json(const ActivationEvent& ev) {
    return {{"decoy", ev.decoy_id},
            {"session", ev.session_id},
            {"event", std::string(to_string(ev.kind))},
            {"peer", ev.peer.to_string()},
            {"detail", ev.detail}};
}

}  // namespace

struct InjectionManager::CounterstrikeServices {
    std::unique_ptr<httplib::Server> http;
    std::thread http_thread;
    std::uint16_t http_port = 0;
    bool fetched = false;
    std::unique_ptr<TcpServer> shell;
    std::uint16_t shell_port = 0;

    void stop_http() {
        if (http) http->stop();
        if (http_thread.joinable()) http_thread.join();
        http.reset();
    }
    void stop_shell() {
        if (shell) shell->stop();
        shell.reset();
    }
    ~CounterstrikeServices() {
        stop_http();
        stop_shell();
    }
};

struct InjectionManager::TarpitService {
    std::unique_ptr<FtpServer> server;
};

InjectionManager::InjectionManager(ManagerConfig config, EventLog& log)
    : config_(std::move(config)), log_(log), rng_(config_.seed) {
    validate(config_.objective, config_.port_range, true);
    if (config_.triggers.empty()) throw ConfigError("manager: empty trigger pool");
    if (auto* tp = config_.objective.tarpit()) {
        config_.tarpit.seed = tp->seed;
        config_.tarpit.branching = tp->branching;
        if (!tp->tarpit_user.empty()) config_.tarpit.username = tp->tarpit_user;
        config_.tarpit.port = tp->tarpit_port;
        // Fail at startup rather than on the first activation.
        tarpit_ = std::make_unique<Tarpit>(config_.tarpit);
    }
    decoys_.insert("tarpit");
    worker_ = std::thread([this] { run(); });
    worker_id_ = worker_.get_id();
}

InjectionManager::~InjectionManager() { shutdown(); }

template <class F>
auto InjectionManager::call(F&& fn) -> decltype(fn()) {
    using R = decltype(fn());
    if (std::this_thread::get_id() == worker_id_) return fn();
    auto task = std::make_shared<std::packaged_task<R()>>(std::forward<F>(fn));
    auto fut = task->get_future();
    {
        std::lock_guard lock(qmu_);
        if (stopping_) throw NetError("injection manager stopped");
        queue_.emplace_back([task] { (*task)(); });
    }
    qcv_.notify_one();
    return fut.get();
}

void InjectionManager::post(std::function<void()> task) {
    {
        std::lock_guard lock(qmu_);
        if (stopping_) return;
        queue_.push_back(std::move(task));
    }
    qcv_.notify_one();
}

void InjectionManager::after(milliseconds delay, std::function<void()> task) {
    {
        std::lock_guard lock(qmu_);
        if (stopping_) return;
        timers_.emplace(std::chrono::steady_clock::now() + delay, std::move(task));
    }
    qcv_.notify_one();
}

void InjectionManager::run() {
    std::unique_lock lock(qmu_);
    while (!stopping_) {
        std::function<void()> task;
        if (!queue_.empty()) {
            task = std::move(queue_.front());
            queue_.pop_front();
        } else if (!timers_.empty() && timers_.begin()->first <= std::chrono::steady_clock::now()) {
            task = std::move(timers_.begin()->second);
            timers_.erase(timers_.begin());
        } else {
            if (timers_.empty())
                qcv_.wait(lock);
            else
                qcv_.wait_until(lock, timers_.begin()->first);
            continue;
        }
        lock.unlock();
        try {
            task();
        } catch (const std::exception& e) {
            log_.append("manager", "internal_error", {{"what", e.what()}});
        }
        lock.lock();
    }
}

void InjectionManager::shutdown() {
    std::call_once(shutdown_once_, [this] {
        {
            std::lock_guard lock(qmu_);
            stopping_ = true;
        }
        qcv_.notify_all();
        if (worker_.joinable()) worker_.join();
        {
            // Pending callers see a broken promise.
            std::lock_guard lock(qmu_);
            queue_.clear();
            timers_.clear();
        }
        for (auto& [id, svc] : counterstrike_) {
            svc->stop_http();
            svc->stop_shell();
        }
        if (tarpit_service_) tarpit_service_->server->stop();
        for (const auto& s : live_)
            log_.append(s.engagement_id.empty() ? "manager" : s.engagement_id, "service_stopped",
                        {{"service", std::string(to_string(s.kind))}, {"port", s.port}});
        live_.clear();
        counterstrike_.clear();
        tarpit_service_.reset();
        outcome_cv_.notify_all();
    });
}

void InjectionManager::register_decoy(const std::string& decoy_id) {
    try {
        call([&] { decoys_.insert(decoy_id); });
    } catch (const NetError&) {
    }
}

std::optional<Payload> InjectionManager::on_activation(const ActivationEvent& event) {
    try {
        return call([&] { return handle(event); });
    } catch (const std::exception&) {
        // Stopped or broken: behave as a plain honeypot.
        return std::nullopt;
    }
}

Engagement& InjectionManager::engagement_for(const std::string& peer_host) {
    auto it = engagements_.find(peer_host);
    if (it != engagements_.end()) return it->second;
    Engagement eng;
    eng.id = "eng-" + std::to_string(next_engagement_++);
    eng.peer_host = peer_host;
    log_.append(eng.id, "engagement_opened", {{"peer", peer_host}});
    {
        std::lock_guard lock(outcome_mu_);
        outcomes_[peer_host] = Outcome::pending;
    }
    return engagements_.emplace(peer_host, std::move(eng)).first->second;
}

std::optional<Payload> InjectionManager::handle(const ActivationEvent& event) {
    if (!decoys_.count(event.decoy_id)) {
        log_.append("manager", "unregistered_decoy", event_json(event));
        return std::nullopt;
    }
    Engagement& eng = engagement_for(event.peer.host);
    if (!event.session_id.empty()) {
        eng.sessions.insert(event.session_id);
        sessions_[event.session_id] = eng.id;
    }
    log_.append(eng.id, "activation", event_json(event));

    if (event.kind == ActivationKind::tarpit_listing) {
        if (eng.outcome == Outcome::pending) set_outcome(eng, Outcome::tarpit_engaged);
        return std::nullopt;
    }
    if (eng.outcome != Outcome::pending) return std::nullopt;

    const Concealment concealment = is_web(event.kind) ? Concealment::html_comment : Concealment::ansi;
    if (auto it = eng.armed.find(event.decoy_id); it != eng.armed.end()) {
        bool live = true;
        if (config_.objective.kind() == ObjectiveKind::counterstrike) {
            auto svc = counterstrike_.find(eng.id);
            live = svc != counterstrike_.end() && svc->second->http && svc->second->shell;
        }
        if (live) return it->second;
        // The one-shot initiator is gone; hand out fresh services instead of
        // dangling instructions.
        eng.armed.clear();
        stop_counterstrike(eng.id, false);
        eng.counterstrike.reset();
    }

    SabotageObjective resolved = config_.objective;
    if (resolved.kind() == ObjectiveKind::counterstrike) {
        if (!eng.counterstrike && !arm_counterstrike(eng)) return std::nullopt;
        resolved.params = *eng.counterstrike;
    } else {
        if (!arm_tarpit()) return std::nullopt;
        auto params = *resolved.tarpit();
        params.tarpit_port = tarpit_service_->server->port();
        params.tarpit_user = tarpit_->config().username;
        resolved.params = params;
    }
    // Same trigger for every decoy of one engagement.
    const auto& trigger = pick_trigger(config_.triggers, keyed_hash(config_.seed, eng.id));
    Payload payload = build_payload(resolved, trigger, concealment);
    eng.armed[event.decoy_id] = payload;
    log_.append(eng.id, "payload_armed",
                {{"decoy", event.decoy_id},
                 {"objective", std::string(to_string(resolved.kind()))},
                 {"concealment", std::string(to_string(concealment))},
                 {"bytes", payload.assembled.size()}});
    return payload;
}

std::set<std::uint16_t> InjectionManager::used_ports() const {
    std::set<std::uint16_t> used = config_.reserved_ports;
    for (const auto& s : live_) used.insert(s.port);
    return used;
}

std::optional<std::uint16_t> InjectionManager::pick_port(const std::function<bool(std::uint16_t)>& try_bind) {
    const auto used = used_ports();
    const auto& range = config_.port_range;
    for (int i = 0; i < config_.bind_attempts; ++i) {
        auto port = static_cast<std::uint16_t>(range.lo + rng_.below(range.size()));
        if (used.count(port)) continue;
        if (try_bind(port)) return port;
    }
    return std::nullopt;
}

bool InjectionManager::arm_counterstrike(Engagement& eng) {
    CounterstrikeParams params = *config_.objective.counterstrike();
    if (params.target_addr.empty())
        params.target_addr = config_.bind_host == "0.0.0.0" ? "127.0.0.1" : config_.bind_host;
    auto svc = std::make_unique<CounterstrikeServices>();
    const auto used = used_ports();

    std::optional<Listener> shell;
    auto bind_shell = [&](std::uint16_t p) {
        try {
            shell.emplace(config_.bind_host, p);
            return true;
        } catch (const NetError&) {
            return false;
        }
    };
    std::optional<std::uint16_t> shell_port;
    if (params.listener_port && !used.count(params.listener_port) && bind_shell(params.listener_port))
        shell_port = params.listener_port;
    else
        shell_port = pick_port(bind_shell);

    svc->http = std::make_unique<httplib::Server>();
    auto bind_http = [&](std::uint16_t p) { return p != shell_port && svc->http->bind_to_port(config_.bind_host, p); };
    std::optional<std::uint16_t> http_port;
    if (shell_port) {
        if (params.initiator_port && !used.count(params.initiator_port) && bind_http(params.initiator_port))
            http_port = params.initiator_port;
        else
            http_port = pick_port(bind_http);
    }
    if (!shell_port || !http_port) {
        log_.append(eng.id, "port_exhausted",
                    {{"range", std::to_string(config_.port_range.lo) + "-" + std::to_string(config_.port_range.hi)},
                     {"action", "responding without payload"}});
        return false;
    }
    params.listener_port = *shell_port;
    params.initiator_port = *http_port;
    const std::string body = render_initiator(params);
    const std::string id = eng.id;

    svc->http->Get(".*", [this, body, id](const httplib::Request& req, httplib::Response& res) {
        res.set_content(body, "text/plain");
        Endpoint peer{req.remote_addr, static_cast<std::uint16_t>(req.remote_port)};
        post([this, id, peer] {
            auto it = counterstrike_.find(id);
            if (it == counterstrike_.end() || it->second->fetched) return;
            it->second->fetched = true;
            log_.append(id, "initiator_fetched", {{"peer", peer.to_string()}});
            after(config_.initiator_grace, [this, id] { stop_counterstrike(id, true); });
        });
    });
    auto refuse = [](const httplib::Request&, httplib::Response& res) {
        res.status = 405;
        res.set_header("Allow", "GET");
        res.set_content("method not allowed\n", "text/plain");
    };
    svc->http->Post(".*", refuse);
    svc->http->Put(".*", refuse);
    svc->http->Delete(".*", refuse);
    svc->http->Patch(".*", refuse);
    svc->http->Options(".*", refuse);
    svc->http_port = *http_port;
    auto* http = svc->http.get();
    svc->http_thread = std::thread([http] { http->listen_after_bind(); });
    http->wait_until_ready();

    const std::string marker = random_marker(rng_);
    const auto timeout = config_.verify_timeout;
    svc->shell_port = *shell_port;
    svc->shell = std::make_unique<TcpServer>(std::move(*shell), [this, id, marker, timeout](Socket& s) {
        Endpoint peer;
        try {
            peer = s.peer();
        } catch (const NetError&) {
        }
        auto v = verify_shell(s, marker, timeout);
        post([this, id, peer, v] { on_shell(id, peer, v); });
    });

    const auto now = std::chrono::system_clock::now();
    live_.push_back({ServiceKind::shell_listener, *shell_port, now, id});
    live_.push_back({ServiceKind::initiator_http, *http_port, now, id});
    log_.append(id, "service_started", {{"service", "shell_listener"}, {"port", *shell_port}});
    log_.append(id, "service_started", {{"service", "initiator_http"}, {"port", *http_port}});
    eng.counterstrike = params;
    eng.marker = marker;
    counterstrike_[id] = std::move(svc);
    return true;
}

bool InjectionManager::arm_tarpit() {
    if (tarpit_service_) return true;
    std::optional<Listener> listener;
    auto bind = [&](std::uint16_t p) {
        try {
            listener.emplace(config_.bind_host, p);
            return true;
        } catch (const NetError&) {
            return false;
        }
    };
    std::optional<std::uint16_t> port;
    const auto used = used_ports();
    if (config_.tarpit.port && !used.count(config_.tarpit.port) && bind(config_.tarpit.port))
        port = config_.tarpit.port;
    else
        port = pick_port(bind);
    if (!port) {
        log_.append("manager", "port_exhausted", {{"service", "tarpit_ftp"}, {"action", "responding without payload"}});
        return false;
    }
    auto svc = std::make_unique<TarpitService>();
    svc->server = std::make_unique<FtpServer>(std::move(*listener), "tarpit", tarpit_factory(*tarpit_, this),
                                              config_.port_range);
    live_.push_back({ServiceKind::tarpit_ftp, *port, std::chrono::system_clock::now(), {}});
    log_.append("manager", "service_started",
                {{"service", "tarpit_ftp"}, {"port", *port}, {"branching", tarpit_->config().branching}});
    tarpit_service_ = std::move(svc);
    return true;
}

void InjectionManager::stop_counterstrike(const std::string& engagement_id, bool initiator_only) {
    auto it = counterstrike_.find(engagement_id);
    if (it == counterstrike_.end()) return;
    auto& svc = *it->second;
    auto drop = [&](ServiceKind kind) {
        std::erase_if(live_, [&](const LiveService& s) {
            if (s.engagement_id != engagement_id || s.kind != kind) return false;
            log_.append(engagement_id, "service_stopped", {{"service", std::string(to_string(kind))}, {"port", s.port}});
            return true;
        });
    };
    if (svc.http) {
        svc.stop_http();
        drop(ServiceKind::initiator_http);
    }
    if (initiator_only) return;
    if (svc.shell) {
        svc.stop_shell();
        drop(ServiceKind::shell_listener);
    }
    counterstrike_.erase(it);
}

void InjectionManager::on_shell(const std::string& engagement_id, const Endpoint& peer, const ShellVerification& v) {
    std::string observed = v.observed.substr(0, 256);
    log_.append(engagement_id, v.verified ? "shell_verified" : "shell_rejected",
                {{"peer", peer.to_string()}, {"probe", v.probe_command}, {"observed", observed}});
    if (!v.verified) return;
    for (auto& [host, eng] : engagements_) {
        if (eng.id != engagement_id) continue;
        if (eng.outcome == Outcome::pending) {
            log_.append(eng.id, "hackback_verified",
                        {{"peer", peer.to_string()}, {"listener_port", eng.counterstrike->listener_port}});
            set_outcome(eng, Outcome::counterstrike_verified);
        }
        break;
    }
    stop_counterstrike(engagement_id, false);
}

void InjectionManager::set_outcome(Engagement& eng, Outcome outcome) {
    // Monotone: only pending may change.
    if (eng.outcome != Outcome::pending || outcome == Outcome::pending) return;
    eng.outcome = outcome;
    log_.append(eng.id, "outcome", {{"outcome", std::string(to_string(outcome))}, {"peer", eng.peer_host}});
    {
        std::lock_guard lock(outcome_mu_);
        outcomes_[eng.peer_host] = outcome;
    }
    outcome_cv_.notify_all();
}

Outcome InjectionManager::outcome_for(const std::string& peer_host) {
    std::lock_guard lock(outcome_mu_);
    auto it = outcomes_.find(peer_host);
    return it == outcomes_.end() ? Outcome::pending : it->second;
}

bool InjectionManager::wait_for(const std::string& peer_host, Outcome want, milliseconds timeout) {
    std::unique_lock lock(outcome_mu_);
    return outcome_cv_.wait_for(lock, timeout, [&] {
        auto it = outcomes_.find(peer_host);
        return it != outcomes_.end() && it->second == want;
    });
}

void InjectionManager::conclude(const std::string& peer_host) {
    try {
        call([&] {
            auto it = engagements_.find(peer_host);
            if (it == engagements_.end()) return;
            set_outcome(it->second, Outcome::attacker_escaped);
            stop_counterstrike(it->second.id, false);
        });
    } catch (const std::exception&) {
    }
}

ManagerState InjectionManager::snapshot_locked() const {
    ManagerState st;
    st.objective = config_.objective;
    st.live_services = live_;
    st.sessions = sessions_;
    for (const auto& [host, eng] : engagements_) {
        st.engagements[eng.id] = eng;
        for (const auto& [decoy, p] : eng.armed) st.armed_decoys[decoy] = p;
        if (st.outcome == Outcome::pending) st.outcome = eng.outcome;
    }
    return st;
}

ManagerState InjectionManager::snapshot() {
    try {
        return call([this] { return snapshot_locked(); });
    } catch (const std::exception&) {
        // Worker gone: nothing mutates any more.
        return snapshot_locked();
    }
}

}  // namespace mantis
