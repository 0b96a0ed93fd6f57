#pragma once

#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "mantis/ftp.hpp"
#include "mantis/payload.hpp"

namespace mantis::testing {

class FakeDataChannel final : public DataChannel {
public:
    std::optional<Endpoint> open_passive() override {
        mode_ = DataMode::passive;
        return Endpoint{"127.0.0.1", 40001};
    }
    void set_active(const Endpoint& ep) override {
        active = ep;
        mode_ = DataMode::active;
    }
    DataMode mode() const override { return mode_; }
    bool transfer(std::string_view bytes) override {
        sent.emplace_back(bytes);
        mode_ = DataMode::none;
        return true;
    }

    std::optional<Endpoint> active;
    std::vector<std::string> sent;

private:
    DataMode mode_ = DataMode::none;
};

// Arms every activation with a fixed payload and records what it saw.
class RecordingSink final : public ActivationSink {
public:
    explicit RecordingSink(std::optional<Payload> payload = std::nullopt) : payload_(std::move(payload)) {}

    std::optional<Payload> on_activation(const ActivationEvent& event) override {
        std::lock_guard lock(mu_);
        events.push_back(event);
        return payload_;
    }
    std::size_t count() {
        std::lock_guard lock(mu_);
        return events.size();
    }

    std::vector<ActivationEvent> events;

private:
    std::mutex mu_;
    std::optional<Payload> payload_;
};

inline Payload sample_payload(Concealment mode = Concealment::ansi) {
    SabotageObjective obj{CounterstrikeParams{8332, 4004, "10.128.118.144"}};
    return build_payload(obj, default_trigger_pool()[0], mode);
}

}  // namespace mantis::testing
