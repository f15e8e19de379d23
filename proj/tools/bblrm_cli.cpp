// bblrm: batch simulation, parameter sweeps, one-shot recommendations and
// the trial service behind one executable.
//
// Exit codes: 0 success, 1 runtime failure, 2 usage or input error.

#include "bblrm/json_io.hpp"
#include "bblrm/service.hpp"
#include "bblrm/simulator.hpp"

#include <CLI11.hpp>
#include <fmt/format.h>

#include <csignal>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <random>
#include <sstream>
#include <thread>

namespace fs = std::filesystem;
using namespace bblrm;

namespace {

struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Everything needed to regenerate a simulate/sweep output directory.
struct RunSpec {
    std::string command;  // "simulate" or "sweep"
    TrialConfig config;
    std::vector<Scenario> scenarios;
    std::vector<double> alphas;  // sweep only
    std::vector<double> omegas;  // sweep only
    int n_trials = 1000;
    std::uint64_t seed = 0;
    bool seed_drawn = false;
    bool audit = false;
};

std::uint64_t draw_seed() {
    std::random_device rd;
    return ((std::uint64_t{rd()} << 32) ^ rd()) & ((std::uint64_t{1} << 53) - 1);
}

std::vector<std::string> split_list(const std::string& text) {
    std::vector<std::string> out;
    std::string item;
    std::istringstream in(text);
    while (std::getline(in, item, ',')) {
        const auto b = item.find_first_not_of(" \t");
        const auto e = item.find_last_not_of(" \t");
        if (b != std::string::npos) out.push_back(item.substr(b, e - b + 1));
    }
    return out;
}

std::vector<double> parse_numbers(const std::string& text, const char* what) {
    std::vector<double> values;
    for (const auto& item : split_list(text)) {
        std::size_t used = 0;
        double v = 0.0;
        try {
            v = std::stod(item, &used);
        } catch (const std::exception&) {
            used = 0;
        }
        if (used != item.size()) throw UsageError(fmt::format("{}: '{}' is not a number", what, item));
        values.push_back(v);
    }
    if (values.empty()) throw UsageError(fmt::format("{}: list is empty", what));
    return values;
}

// "S1..S7", "S2,S5", "all" or any mix of those.
std::vector<Scenario> select_scenarios(const std::string& text) {
    std::vector<Scenario> out;
    for (const auto& item : split_list(text)) {
        if (item == "all") {
            for (const auto& s : builtin_scenarios()) out.push_back(s);
        } else if (auto dots = item.find(".."); dots != std::string::npos) {
            const auto& all = builtin_scenarios();
            auto pos = [&](const std::string& name) {
                for (std::size_t i = 0; i < all.size(); ++i) {
                    if (all[i].name == name) return i;
                }
                throw UsageError("unknown scenario " + name);
            };
            const auto lo = pos(item.substr(0, dots));
            const auto hi = pos(item.substr(dots + 2));
            if (lo > hi) throw UsageError("empty scenario range " + item);
            for (auto i = lo; i <= hi; ++i) out.push_back(all[i]);
        } else {
            try {
                out.push_back(builtin_scenario(item));
            } catch (const InvalidArgument&) {
                throw UsageError("unknown scenario " + item);
            }
        }
    }
    return out;
}

TrialConfig load_config(const std::string& path) {
    if (path.empty()) return {};
    return trial_config_from_json(read_json_file(path));
}

void write_file(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << text;
    if (!out) throw std::runtime_error("cannot write " + path.string());
}

Json manifest_json(const RunSpec& spec, const std::vector<std::string>& outputs) {
    Json scenarios = Json::array();
    for (const auto& s : spec.scenarios) {
        scenarios.push_back({{"name", s.name},
                             {"doses", spec.config.grid.doses},
                             {"dlt_probs", s.dlt_probs},
                             {"ndltae_probs", s.ndltae_probs}});
    }
    Json m{{"tool", "bblrm"},
           {"version", kVersion},
           {"command", spec.command},
           {"master_seed", spec.seed},
           {"seed_source", spec.seed_drawn ? "random" : "flag"},
           {"n_trials", spec.n_trials},
           {"config", to_json(spec.config)},
           {"scenarios", scenarios}};
    if (spec.command == "sweep") {
        m["alphas"] = spec.alphas;
        m["omegas"] = spec.omegas;
    }
    m["audit"] = spec.audit;
    m["outputs"] = outputs;
    return m;
}

RunSpec spec_from_manifest(const Json& m) {
    RunSpec spec;
    try {
        spec.command = m.at("command").get<std::string>();
        if (spec.command != "simulate" && spec.command != "sweep") {
            throw UsageError("manifest command must be simulate or sweep");
        }
        spec.config = trial_config_from_json(m.at("config"));
        for (const auto& s : m.at("scenarios")) spec.scenarios.push_back(scenario_from_json(s, spec.config.grid));
        spec.n_trials = m.at("n_trials").get<int>();
        spec.seed = m.at("master_seed").get<std::uint64_t>();
        spec.seed_drawn = m.at("seed_source").get<std::string>() == "random";
        spec.audit = m.value("audit", false);
        if (spec.command == "sweep") {
            spec.alphas = m.at("alphas").get<std::vector<double>>();
            spec.omegas = m.at("omegas").get<std::vector<double>>();
        }
    } catch (const Json::exception& e) {
        throw UsageError(std::string("malformed manifest: ") + e.what());
    }
    return spec;
}

// Runs a simulate or sweep spec and writes its outputs plus manifest.json.
void execute(const RunSpec& spec, const fs::path& out_dir, int jobs) {
    fs::create_directories(out_dir);
    std::vector<std::string> outputs;
    const auto& grid = spec.config.grid;

    if (spec.command == "simulate") {
        std::ostringstream csv, audit;
        write_oc_csv_header(csv, grid);
        for (const auto& scenario : spec.scenarios) {
            auto result = run_batch(scenario, spec.config, spec.n_trials, spec.seed, jobs, spec.audit);
            write_oc_csv_row(csv, result.oc, grid);
            for (const auto& r : result.records) {
                Json line = to_json(r, grid);
                line["scenario"] = scenario.name;
                audit << line.dump() << '\n';
            }
            std::cerr << fmt::format("simulate {}: toxic MTD {:.2f}%, true MTD {:.2f}%\n", scenario.name,
                                     result.oc.pct_toxic_mtd, result.oc.pct_true_mtd);
        }
        write_file(out_dir / "oc.csv", csv.str());
        outputs.push_back("oc.csv");
        if (spec.audit) {
            write_file(out_dir / "trials.jsonl", audit.str());
            outputs.push_back("trials.jsonl");
        }
    } else {
        std::vector<OperatingCharacteristics> rows;
        for (const auto& scenario : spec.scenarios) {
            auto part = sweep({scenario}, spec.alphas, spec.omegas, spec.config, spec.n_trials, spec.seed, jobs);
            std::cerr << fmt::format("sweep {}: {} cells\n", scenario.name, part.size());
            rows.insert(rows.end(), part.begin(), part.end());
        }
        std::ostringstream wide, long_form;
        write_oc_csv_header(wide, grid);
        for (const auto& oc : rows) write_oc_csv_row(wide, oc, grid);
        write_oc_long_csv(long_form, rows, grid);
        write_file(out_dir / "sweep.csv", wide.str());
        write_file(out_dir / "sweep_long.csv", long_form.str());
        outputs = {"sweep.csv", "sweep_long.csv"};
    }
    write_file(out_dir / "manifest.json", manifest_json(spec, outputs).dump(2) + "\n");
}

struct CommonFlags {
    std::string config_path;
    std::optional<std::uint64_t> seed;
    int jobs = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
};

struct BatchFlags {
    std::string scenarios = "S1..S7";
    std::vector<std::string> scenario_files;
    int n_trials = 1000;
    std::string out = ".";
    bool blrm = false;
    CLI::Option* scenarios_option = nullptr;
};

void add_common(CLI::App* cmd, CommonFlags& f, bool with_jobs) {
    cmd->add_option("--config", f.config_path, "Trial configuration JSON")->check(CLI::ExistingFile);
    cmd->add_option("--seed", f.seed, "Master seed (random and recorded when omitted)");
    if (with_jobs) cmd->add_option("--jobs", f.jobs, "Worker threads")->check(CLI::PositiveNumber);
}

void add_batch(CLI::App* cmd, BatchFlags& f) {
    f.scenarios_option = cmd->add_option("--scenarios", f.scenarios, "Built-in scenarios, e.g. S1..S7 or S2,S5");
    cmd->add_option("--scenario-file", f.scenario_files, "Custom scenario JSON (repeatable)")
        ->check(CLI::ExistingFile);
    cmd->add_option("--n-trials", f.n_trials, "Trials per cell")->check(CLI::PositiveNumber);
    cmd->add_option("--out", f.out, "Output directory");
    cmd->add_flag("--blrm", f.blrm, "Disable the burden term (plain BLRM)");
}

RunSpec base_spec(const std::string& command, const CommonFlags& common, const BatchFlags& batch) {
    RunSpec spec;
    spec.command = command;
    spec.config = load_config(common.config_path);
    if (batch.blrm) spec.config.decision.burden_enabled = false;
    // Custom scenario files replace the default built-in selection unless
    // --scenarios is given explicitly.
    if (batch.scenario_files.empty() || batch.scenarios_option->count() > 0) {
        spec.scenarios = select_scenarios(batch.scenarios);
    }
    for (const auto& file : batch.scenario_files) {
        spec.scenarios.push_back(scenario_from_json(read_json_file(file), spec.config.grid));
    }
    if (spec.scenarios.empty()) throw UsageError("no scenarios selected");
    spec.n_trials = batch.n_trials;
    spec.seed_drawn = !common.seed;
    spec.seed = common.seed ? *common.seed : draw_seed();
    return spec;
}

int serve(const std::string& bind, const std::string& data_dir, const std::string& ui_dir,
          const TrialConfig& config) {
    auto [host, port] = parse_bind_address(bind);
    ServiceOptions opts;
    opts.data_dir = data_dir;
    opts.default_config = config;
    if (const char* token = std::getenv("BBLRM_TOKEN"); token && *token) opts.token = token;
    if (!ui_dir.empty()) opts.ui_dir = ui_dir;

    // Signals are handled on a dedicated thread; block them everywhere else.
    sigset_t signals;
    sigemptyset(&signals);
    sigaddset(&signals, SIGINT);
    sigaddset(&signals, SIGTERM);
    pthread_sigmask(SIG_BLOCK, &signals, nullptr);

    std::unique_ptr<TrialService> service;
    try {
        service = std::make_unique<TrialService>(opts);
    } catch (const std::exception& e) {
        log_event("error", "startup_failed", {{"error", e.what()}});
        return 1;
    }
    HttpServer server(*service);
    int bound = 0;
    try {
        bound = server.bind(host, port);
    } catch (const std::exception& e) {
        log_event("error", "bind_failed", {{"bind", bind}, {"error", e.what()}});
        return 1;
    }
    std::thread waiter([&server, signals] {
        int sig = 0;
        sigwait(&signals, &sig);
        log_event("info", "shutdown", {{"signal", sig}});
        server.stop();
    });
    log_event("info", "listening", {{"host", host}, {"port", bound}, {"version", kVersion}});
    waiter.detach();
    server.listen();
    return 0;
}

std::string env_or(const char* name, const std::string& fallback) {
    const char* v = std::getenv(name);
    return v && *v ? std::string(v) : fallback;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"BBLRM dose-finding: simulation, sweeps, recommendations and the trial service"};
    app.set_version_flag("--version", kVersion);
    app.require_subcommand(1);

    CommonFlags sim_common, sweep_common, rec_common;
    BatchFlags sim_batch, sweep_batch;
    std::optional<double> sim_alpha, sim_omega;
    bool sim_audit = false;
    std::string sweep_alphas = "0.25,0.30,0.35,0.40";
    std::string sweep_omegas = "0,0.40,0.45,0.50,0.55,0.60";
    std::string rec_data;
    std::string serve_bind = env_or("BBLRM_BIND", "127.0.0.1:8080");
    std::string serve_data = env_or("BBLRM_DATA_DIR", "./trials");
    std::string serve_ui = env_or("BBLRM_UI_DIR", "");
    std::string serve_config;
    std::string replay_manifest, replay_out;
    int replay_jobs = sim_common.jobs;

    auto* simulate = app.add_subcommand("simulate", "Operating characteristics per scenario");
    add_common(simulate, sim_common, true);
    add_batch(simulate, sim_batch);
    simulate->add_option("--alpha", sim_alpha, "Escalation feasibility bound");
    simulate->add_option("--omega", sim_omega, "Burden intensity");
    simulate->add_flag("--audit", sim_audit, "Also write per-trial records to trials.jsonl");

    auto* sweep_cmd = app.add_subcommand("sweep", "Operating characteristics over an alpha x omega grid");
    add_common(sweep_cmd, sweep_common, true);
    add_batch(sweep_cmd, sweep_batch);
    sweep_cmd->add_option("--alphas", sweep_alphas, "Comma-separated alpha values");
    sweep_cmd->add_option("--omegas", sweep_omegas, "Comma-separated omega values");

    auto* recommend = app.add_subcommand("recommend", "Recommend the next dose for a cohort data file");
    add_common(recommend, rec_common, false);
    recommend->add_option("--data", rec_data, "Cohort data JSON")->required()->check(CLI::ExistingFile);

    auto* serve_cmd = app.add_subcommand("serve", "Run the trial service");
    serve_cmd->add_option("--bind", serve_bind, "host:port (env BBLRM_BIND)");
    serve_cmd->add_option("--data", serve_data, "Data directory (env BBLRM_DATA_DIR)");
    serve_cmd->add_option("--ui-dir", serve_ui, "Static console bundle served at / (env BBLRM_UI_DIR)");
    serve_cmd->add_option("--config", serve_config, "Default trial configuration JSON")->check(CLI::ExistingFile);

    auto* replay = app.add_subcommand("replay", "Regenerate outputs from a manifest");
    replay->add_option("manifest", replay_manifest, "manifest.json")->required()->check(CLI::ExistingFile);
    replay->add_option("--out", replay_out, "Output directory")->required();
    replay->add_option("--jobs", replay_jobs, "Worker threads")->check(CLI::PositiveNumber);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (*simulate) {
            RunSpec spec = base_spec("simulate", sim_common, sim_batch);
            if (sim_alpha) spec.config.decision.alpha = *sim_alpha;
            if (sim_omega) spec.config.decision.omega = *sim_omega;
            spec.config.validate();
            spec.audit = sim_audit;
            execute(spec, sim_batch.out, sim_common.jobs);
        } else if (*sweep_cmd) {
            RunSpec spec = base_spec("sweep", sweep_common, sweep_batch);
            spec.alphas = parse_numbers(sweep_alphas, "--alphas");
            spec.omegas = parse_numbers(sweep_omegas, "--omegas");
            for (double a : spec.alphas) {
                for (double w : spec.omegas) {
                    TrialConfig cell = spec.config;
                    cell.decision.alpha = a;
                    cell.decision.omega = w;
                    cell.validate();
                }
            }
            execute(spec, sweep_batch.out, sweep_common.jobs);
        } else if (*recommend) {
            const TrialConfig config = load_config(rec_common.config_path);
            const TrialHistory history = history_from_json(read_json_file(rec_data), config.grid);
            const std::uint64_t seed = rec_common.seed ? *rec_common.seed : draw_seed();
            std::cout << to_json(evaluate(config, history, seed, true), config.grid).dump(2) << '\n';
        } else if (*serve_cmd) {
            return serve(serve_bind, serve_data, serve_ui, load_config(serve_config));
        } else if (*replay) {
            RunSpec spec = spec_from_manifest(read_json_file(replay_manifest));
            execute(spec, replay_out, replay_jobs);
        }
    } catch (const UsageError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    } catch (const InvalidArgument& e) {
        // Includes ConfigError, whose message is already line-itemized.
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    } catch (const BatchFailure& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
