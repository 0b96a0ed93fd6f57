#include <CLI11.hpp>
#include <csignal>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <random>
#include <sstream>
#include <yaml-cpp/yaml.h>

#include "mantis/config.hpp"
#include "mantis/decoy_ftp.hpp"
#include "mantis/decoy_web.hpp"
#include "mantis/error.hpp"
#include "mantis/event_log.hpp"
#include "mantis/manager.hpp"
#include "mantis/sim.hpp"

using namespace mantis;

namespace {

constexpr int kOk = 0;
constexpr int kRuntime = 1;
constexpr int kUsage = 2;

// ---- serve -----------------------------------------------------------------

std::vector<std::string> read_name_pool(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read name pool " + path.string());
    std::vector<std::string> out;
    for (std::string line; std::getline(in, line);) {
        while (!line.empty() && (line.back() == '\r' || line.back() == ' ')) line.pop_back();
        if (line.empty() || line[0] == '#') continue;
        out.push_back(line);
    }
    return out;
}

int cmd_serve(const std::string& config_path) {
    // Signals are taken synchronously by this thread; block them before any
    // service thread exists so none of them inherits the default handler.
    sigset_t sigs;
    sigemptyset(&sigs);
    sigaddset(&sigs, SIGINT);
    sigaddset(&sigs, SIGTERM);
    pthread_sigmask(SIG_BLOCK, &sigs, nullptr);

    DaemonConfig cfg;
    ManagerConfig mc;
    std::unique_ptr<EventLog> log;
    try {
        cfg = load_daemon_config(config_path);
        mc.objective = cfg.objective;
        mc.port_range = cfg.port_range;
        mc.bind_host = cfg.bind_host;
        if (cfg.trigger_pool_path) mc.triggers = load_trigger_pool(*cfg.trigger_pool_path);
        mc.seed = cfg.seed ? *cfg.seed : (std::uint64_t(std::random_device{}()) << 32 | std::random_device{}());
        if (cfg.tarpit_name_pool_path) mc.tarpit.name_pool = read_name_pool(*cfg.tarpit_name_pool_path);
        mc.tarpit.fake_files = cfg.tarpit_fake_files;
        mc.verify_timeout = cfg.verify_timeout;
        mc.initiator_grace = cfg.initiator_grace;
        for (const auto& d : cfg.decoys) mc.reserved_ports.insert(d.port);
        for (const auto& g : cfg.gateways) mc.reserved_ports.insert(g.listen);
        log = std::make_unique<EventLog>(cfg.log_path);
    } catch (const ConfigError& e) {
        std::cerr << "mantis serve: " << e.what() << "\n";
        return kUsage;
    }

    std::unique_ptr<InjectionManager> manager;
    std::vector<std::unique_ptr<FtpServer>> ftp_decoys;
    std::vector<std::unique_ptr<WebDecoy>> web_decoys;
    std::vector<std::unique_ptr<WebDecoyServer>> web_servers;
    std::vector<std::unique_ptr<Gateway>> gateways;
    auto stop_all = [&] {
        for (auto& g : gateways) g->stop();
        for (auto& s : web_servers) s->stop();
        for (auto& s : ftp_decoys) s->stop();
        if (manager) manager->shutdown();
    };

    nlohmann::json started = {{"pid", ::getpid()}, {"objective", std::string(to_string(cfg.objective.kind()))}};
    try {
        manager = std::make_unique<InjectionManager>(mc, *log);
        for (const auto& d : cfg.decoys) {
            manager->register_decoy(d.id);
            if (d.kind == DecoyProtocol::ftp) {
                FtpDecoyConfig fc;
                fc.decoy_id = d.id;
                ftp_decoys.push_back(std::make_unique<FtpServer>(Listener(cfg.bind_host, d.port), d.id,
                                                                 ftp_decoy_factory(fc, manager.get()), cfg.port_range));
            } else {
                WebDecoyConfig wc;
                wc.decoy_id = d.id;
                web_decoys.push_back(std::make_unique<WebDecoy>(wc, manager.get()));
                web_servers.push_back(std::make_unique<WebDecoyServer>(*web_decoys.back(), cfg.bind_host, d.port));
            }
            started["decoys"].push_back(
                {{"id", d.id}, {"kind", d.kind == DecoyProtocol::ftp ? "ftp" : "web"}, {"port", d.port}});
        }
        for (const auto& g : cfg.gateways) {
            gateways.push_back(std::make_unique<Gateway>(Listener(cfg.bind_host, g.listen), g.upstream, *log));
            started["gateways"].push_back({{"listen", g.listen}, {"upstream", g.upstream.to_string()}});
        }
    } catch (const Error& e) {
        log->append("daemon", "daemon_failed", {{"error", e.what()}});
        stop_all();
        std::cerr << "mantis serve: " << e.what() << "\n";
        return kRuntime;
    }
    log->append("daemon", "daemon_started", started);

    int sig = 0;
    sigwait(&sigs, &sig);
    const auto t0 = std::chrono::steady_clock::now();
    log->append("daemon", "shutdown_requested", {{"signal", sig == SIGINT ? "SIGINT" : "SIGTERM"}});
    stop_all();
    const auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() - t0);
    log->append("daemon", "daemon_stopped", {{"shutdown_ms", ms.count()}});
    return kOk;
}

// ---- simulate --------------------------------------------------------------

sim::LlmEndpoint load_llm_config(const std::string& path) {
    YAML::Node n;
    try {
        n = YAML::LoadFile(path);
    } catch (const YAML::Exception& e) {
        throw ConfigError(path + ": " + e.what());
    }
    sim::LlmEndpoint ep;
    if (!n["url"] || !n["model"]) throw ConfigError(path + ": llm config needs 'url' and 'model'");
    ep.url = n["url"].as<std::string>();
    ep.model = n["model"].as<std::string>();
    if (n["token_env"]) ep.token_env = n["token_env"].as<std::string>();
    if (n["timeout_ms"]) ep.timeout = std::chrono::milliseconds(n["timeout_ms"].as<long>());
    return ep;
}

struct SimulateArgs {
    std::string policy = "compliant";
    std::string defense = "none";
    int games = 10;
    std::uint64_t seed = 1;
    std::string branching = "10";
    bool cost_sweep = false;
    std::string report;
    int max_rounds = 30;
    std::string llm_config;
    double price = 10.0;
    double bytes_per_token = 4.0;
};

std::optional<std::vector<std::uint32_t>> parse_branching_list(const std::string& text) {
    std::vector<std::uint32_t> out;
    std::stringstream ss(text);
    for (std::string item; std::getline(ss, item, ',');) {
        if (item.empty() || item.find_first_not_of("0123456789") != std::string::npos || item.size() > 7)
            return std::nullopt;
        auto v = std::stoul(item);
        if (v == 0) return std::nullopt;
        out.push_back(std::uint32_t(v));
    }
    if (out.empty()) return std::nullopt;
    return out;
}

int cmd_simulate(const SimulateArgs& a) {
    auto policy = sim::parse_policy(a.policy);
    if (!policy) {
        std::cerr << "mantis simulate: unknown policy '" << a.policy
                  << "' (compliant, skeptical[:p], exploit_only, llm)\n";
        return kUsage;
    }
    auto defense = sim::parse_defense(a.defense);
    if (!defense) {
        std::cerr << "mantis simulate: unknown defense '" << a.defense
                  << "' (none, ftp:counterstrike, ftp:tarpit, web:counterstrike, web:tarpit)\n";
        return kUsage;
    }
    if (a.games < 1) {
        std::cerr << "mantis simulate: --games must be at least 1\n";
        return kUsage;
    }
    auto branchings = parse_branching_list(a.branching);
    if (!branchings) {
        std::cerr << "mantis simulate: --branching takes a comma-separated list of positive integers\n";
        return kUsage;
    }

    sim::GameConfig base;
    base.policy = *policy;
    base.defense = *defense;
    base.seed = a.seed;
    base.max_rounds = a.max_rounds;
    base.price_per_megatoken = a.price;
    base.bytes_per_token = a.bytes_per_token;
    try {
        if (policy->kind == sim::PolicyKind::llm) {
            if (a.llm_config.empty()) {
                std::cerr << "mantis simulate: --policy llm needs --llm-config\n";
                return kUsage;
            }
            base.policy.llm = load_llm_config(a.llm_config);
        }
        sim::validate(base);
    } catch (const ConfigError& e) {
        std::cerr << "mantis simulate: " << e.what() << "\n";
        return kUsage;
    }

    std::ofstream report;
    if (!a.report.empty()) {
        report.open(a.report, std::ios::trunc);
        if (!report) {
            std::cerr << "mantis simulate: cannot write report " << a.report << "\n";
            return kRuntime;
        }
    }

    std::vector<sim::CampaignSummary> rows;
    try {
        for (auto b : *branchings) {
            auto cfg = base;
            cfg.branching = b;
            rows.push_back(sim::run_campaign(cfg, a.games));
            if (report) {
                for (const auto& r : rows.back().records) report << sim::game_record_json(r) << "\n";
                report << sim::summary_json(rows.back()) << "\n";
            }
        }
    } catch (const Error& e) {
        std::cerr << "mantis simulate: " << e.what() << "\n";
        return kRuntime;
    }

    std::cout << sim::format_summary_table(rows);
    if (a.cost_sweep) {
        std::cout << "\n";
        char buf[160];
        std::snprintf(buf, sizeof buf, "%9s %16s %14s %12s\n", "branching", "listing_B/round", "per_branching",
                      "cost_usd");
        std::cout << buf;
        bool monotone = true;
        double prev = -1;
        for (const auto& s : rows) {
            std::uint64_t bytes = 0;
            int rounds = 0;
            for (const auto& r : s.records) {
                bytes += r.listing_bytes;
                rounds += r.listing_rounds;
            }
            const double per_round = rounds ? double(bytes) / rounds : 0.0;
            std::snprintf(buf, sizeof buf, "%9u %16.1f %14.2f %12.6f\n", s.branching, per_round,
                          per_round / s.branching, s.total_cost);
            std::cout << buf;
            if (prev >= 0 && !(s.total_cost > prev)) monotone = false;
            prev = s.total_cost;
        }
        std::cout << "cost strictly increasing in branching: " << (monotone ? "yes" : "no") << "\n";
    }
    std::cout << "seed " << a.seed << ", " << a.games << " game(s) per row, max " << a.max_rounds << " rounds\n";
    return kOk;
}

// ---- events ----------------------------------------------------------------

int cmd_events(const std::string& path, const std::string& kind, const std::string& engagement, bool json) {
    std::ifstream in(path);
    if (!in) {
        std::cerr << "mantis events: cannot read log " << path << "\n";
        return kRuntime;
    }
    std::vector<LogRecord> records;
    int lineno = 0;
    for (std::string line; std::getline(in, line);) {
        ++lineno;
        if (line.empty()) continue;
        std::string error;
        auto rec = parse_record(line, &error);
        if (!rec) {
            std::cerr << "warning: " << path << ":" << lineno << ": skipping malformed record (" << error << ")\n";
            continue;
        }
        if (!kind.empty() && rec->kind != kind) continue;
        if (!engagement.empty() && rec->engagement_id != engagement) continue;
        records.push_back(std::move(*rec));
    }
    if (in.bad()) {
        std::cerr << "mantis events: read error on " << path << "\n";
        return kRuntime;
    }
    std::stable_sort(records.begin(), records.end(), [](const auto& x, const auto& y) { return x.ts < y.ts; });
    for (const auto& r : records) {
        if (json) {
            std::cout << to_jsonl(r) << "\n";
        } else {
            std::cout << r.ts << "  " << r.engagement_id << "  " << r.kind << "  "
                      << r.detail.dump(-1, ' ', false, nlohmann::json::error_handler_t::replace) << "\n";
        }
    }
    return kOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"mantis: decoy services that turn prompt injection against automated attackers"};
    app.require_subcommand(1);

    std::string config_path;
    auto* serve = app.add_subcommand("serve", "Run the decoys, gateway relays and injection manager");
    serve->add_option("--config", config_path, "YAML daemon config")->required();

    SimulateArgs sa;
    auto* simulate = app.add_subcommand("simulate", "Run scripted attacker campaigns against a simulated host");
    simulate->add_option("--policy", sa.policy, "compliant | skeptical[:p] | exploit_only | llm")
        ->capture_default_str();
    simulate->add_option("--defense", sa.defense, "none | ftp:counterstrike | ftp:tarpit | web:counterstrike | web:tarpit")
        ->capture_default_str();
    simulate->add_option("--games", sa.games, "Games per campaign row")->capture_default_str();
    simulate->add_option("--seed", sa.seed, "Seed of the first game; game i uses seed + i")->capture_default_str();
    simulate->add_option("--branching", sa.branching, "Tarpit branching factor(s), comma separated")
        ->capture_default_str();
    simulate->add_flag("--cost-sweep", sa.cost_sweep, "Print per-branching listing bytes and cost");
    simulate->add_option("--report", sa.report, "Write one JSON record per game plus a summary per row");
    simulate->add_option("--max-rounds", sa.max_rounds, "Round cap per game")->capture_default_str();
    simulate->add_option("--llm-config", sa.llm_config, "YAML with url, model, token_env, timeout_ms");
    simulate->add_option("--price", sa.price, "USD per million input tokens")->capture_default_str();
    simulate->add_option("--bytes-per-token", sa.bytes_per_token, "Tokenizer ratio")->capture_default_str();

    std::string log_path, kind, engagement;
    bool json = false;
    auto* events = app.add_subcommand("events", "Print event log records, filtered and time ordered");
    events->add_option("--log", log_path, "JSONL event log")->required();
    events->add_option("--kind", kind, "Only records of this kind");
    events->add_option("--engagement", engagement, "Only records of this engagement id");
    events->add_flag("--json", json, "Print the records as JSON lines");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kUsage;
    }

    try {
        if (*serve) return cmd_serve(config_path);
        if (*simulate) return cmd_simulate(sa);
        if (*events) return cmd_events(log_path, kind, engagement, json);
    } catch (const std::exception& e) {
        std::cerr << "mantis: " << e.what() << "\n";
        return kRuntime;
    }
    return kUsage;
}
