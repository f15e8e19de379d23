#include "bblrm/service.hpp"

#include "bblrm/rng.hpp"

#include <fmt/chrono.h>
#include <fmt/format.h>
#include <httplib.h>

#include <fcntl.h>
#include <unistd.h>

#include <algorithm>
#include <chrono>
#include <fstream>
#include <iostream>
#include <mutex>
#include <random>

namespace bblrm {

namespace {

// Seeds handed out by the service stay below 2^53 so that JSON clients that
// parse numbers as doubles round-trip them exactly.
constexpr std::uint64_t kSeedMask = (std::uint64_t{1} << 53) - 1;

std::uint64_t engine_seed(std::uint64_t base_seed, std::size_t cohorts) {
    return derive_seed(base_seed, kEngineStream + cohorts) & kSeedMask;
}

std::uint64_t random_seed() {
    std::random_device rd;
    return ((std::uint64_t{rd()} << 32) ^ rd()) & kSeedMask;
}

std::string new_trial_id() {
    std::random_device rd;
    return fmt::format("trial-{:08x}{:08x}", rd(), rd());
}

std::string timestamp_now() {
    const auto now = std::chrono::floor<std::chrono::seconds>(std::chrono::system_clock::now());
    return fmt::format("{:%Y-%m-%dT%H:%M:%SZ}", fmt::gmtime(std::chrono::system_clock::to_time_t(now)));
}

Json error_body(const std::string& code, const std::string& message,
                const std::vector<FieldError>& fields = {}) {
    Json list = Json::array();
    for (const auto& f : fields) list.push_back({{"field", f.field}, {"message", f.message}});
    return Json{{"code", code}, {"message", message}, {"field_errors", list}};
}

Reply error_reply(int status, const std::string& code, const std::string& message,
                  const std::vector<FieldError>& fields = {}) {
    return {status, error_body(code, message, fields)};
}

Reply not_found(const std::string& id) {
    return error_reply(404, "not_found", "unknown trial " + id);
}

Reply validation_failed(const ConfigError& e) {
    return error_reply(422, "validation_failed", "request failed validation", e.errors());
}

// One write(2) per line on an O_APPEND descriptor, then fsync.
void append_line(const std::filesystem::path& path, const std::string& line) {
    const int fd = ::open(path.c_str(), O_WRONLY | O_APPEND | O_CREAT | O_CLOEXEC, 0644);
    if (fd < 0) throw std::runtime_error("cannot open " + path.string());
    const std::string data = line + "\n";
    const ssize_t written = ::write(fd, data.data(), data.size());
    const bool ok = written == static_cast<ssize_t>(data.size()) && ::fsync(fd) == 0;
    ::close(fd);
    if (!ok) throw std::runtime_error("cannot append to " + path.string());
}

void write_new_file(const std::filesystem::path& path, const std::string& line) {
    auto tmp = path;
    tmp += ".tmp";
    std::filesystem::remove(tmp);
    append_line(tmp, line);
    std::filesystem::rename(tmp, path);
}

struct CohortEvent {
    CohortObservation observation;
    std::string timestamp;
    std::uint64_t seed = 0;
    bool override_dose = false;
};

struct AuditEntry {
    std::string timestamp;
    EngineResult result;
};

struct CohortRequest {
    CohortObservation observation;
    std::optional<std::uint64_t> seed;
    bool override_dose = false;
};

CohortRequest parse_cohort_request(const Json& body, const DoseGrid& grid) {
    if (!body.is_object()) throw ConfigError(std::vector<FieldError>{{"(root)", "expected an object"}});
    CohortRequest req;
    std::vector<FieldError> errors;
    Json observation = body;
    if (auto it = observation.find("seed"); it != observation.end()) {
        if (is_non_negative_integer(*it)) req.seed = it->get<std::uint64_t>();
        else if (!it->is_null()) errors.push_back({"seed", "expected an unsigned 64-bit integer"});
        observation.erase(it);
    }
    if (auto it = observation.find("override"); it != observation.end()) {
        if (it->is_boolean()) req.override_dose = it->get<bool>();
        else errors.push_back({"override", "expected true or false"});
        observation.erase(it);
    }
    try {
        req.observation = cohort_from_json(observation, grid, "");
    } catch (const ConfigError& e) {
        errors.insert(errors.end(), e.errors().begin(), e.errors().end());
    }
    if (!errors.empty()) throw ConfigError(std::move(errors));
    return req;
}

}  // namespace

struct TrialService::Trial {
    std::string id;
    std::string created_at;
    std::optional<std::string> idempotency_key;
    TrialConfig config;
    std::uint64_t base_seed = 0;
    std::filesystem::path log_path;

    TrialHistory history;
    std::vector<CohortEvent> events;
    std::vector<AuditEntry> audit;  // initial recommendation plus one per cohort

    mutable std::shared_mutex mutex;

    bool completed() const { return history.size() >= static_cast<std::size_t>(config.max_cohorts); }
    const char* status() const { return completed() ? "Completed" : "Active"; }
    const EngineResult& latest() const { return audit.back().result; }

    EngineResult evaluate_with(const TrialHistory& h, std::uint64_t seed) const {
        return evaluate(config, h, seed, true);
    }

    Json summary() const {
        return Json{{"id", id},
                    {"status", status()},
                    {"created_at", created_at},
                    {"cohorts", history.size()},
                    {"max_cohorts", config.max_cohorts},
                    {"recommended_dose", latest().dose}};
    }

    Json tested() const {
        Json rows = Json::array();
        for (std::size_t i = 0; i < config.grid.size(); ++i) {
            int patients = 0, dlts = 0, ndltaes = 0;
            for (const auto& c : history.cohorts) {
                if (c.dose_index != i) continue;
                patients += c.n;
                dlts += c.dlt_count;
                ndltaes += c.ndltae_count;
            }
            rows.push_back({{"dose", config.grid[i]},
                            {"patients", patients},
                            {"dlt_count", dlts},
                            {"ndltae_count", ndltaes}});
        }
        return rows;
    }

    Json view() const {
        Json cohorts = Json::array();
        for (const auto& e : events) {
            Json c = to_json(e.observation, config.grid);
            c["timestamp"] = e.timestamp;
            c["seed"] = e.seed;
            c["override"] = e.override_dose;
            cohorts.push_back(std::move(c));
        }
        Json audit_json = Json::array();
        for (std::size_t k = 0; k < audit.size(); ++k) {
            audit_json.push_back({{"after_cohorts", k},
                                  {"timestamp", audit[k].timestamp},
                                  {"recommendation", to_json(audit[k].result, config.grid)}});
        }
        Json out = summary();
        out["base_seed"] = base_seed;
        if (idempotency_key) out["idempotency_key"] = *idempotency_key;
        out["config"] = to_json(config);
        out["tested"] = tested();
        out["history"] = cohorts;
        out["audit"] = audit_json;
        out["recommendation"] = to_json(latest(), config.grid);
        return out;
    }

    Json created_event() const {
        return Json{{"type", "created"},
                    {"id", id},
                    {"timestamp", created_at},
                    {"base_seed", base_seed},
                    {"idempotency_key", idempotency_key ? Json(*idempotency_key) : Json(nullptr)},
                    {"config", to_json(config)}};
    }

    static Json cohort_event(const CohortEvent& e, const DoseGrid& grid) {
        return Json{{"type", "cohort"},
                    {"timestamp", e.timestamp},
                    {"seed", e.seed},
                    {"override", e.override_dose},
                    {"observation", to_json(e.observation, grid)}};
    }

    void apply(CohortEvent event, EngineResult result) {
        history.cohorts.push_back(event.observation);
        audit.push_back({event.timestamp, std::move(result)});
        events.push_back(std::move(event));
    }
};

TrialService::TrialService(ServiceOptions options) : options_(std::move(options)) {
    options_.default_config.validate();
    std::error_code ec;
    std::filesystem::create_directories(options_.data_dir, ec);
    if (!std::filesystem::is_directory(options_.data_dir)) {
        throw InvalidArgument("data dir " + options_.data_dir.string() + " is not a usable directory");
    }
    const auto probe = options_.data_dir / ".write-probe";
    {
        std::ofstream out(probe);
        if (!out) throw InvalidArgument("data dir " + options_.data_dir.string() + " is not writable");
    }
    std::filesystem::remove(probe);

    std::vector<std::filesystem::path> logs;
    for (const auto& entry : std::filesystem::directory_iterator(options_.data_dir)) {
        if (entry.is_regular_file() && entry.path().extension() == ".jsonl") logs.push_back(entry.path());
    }
    std::sort(logs.begin(), logs.end());
    for (const auto& log : logs) replay(log);
    log_event("info", "service_loaded",
              {{"data_dir", options_.data_dir.string()}, {"trials", trials_.size()}});
}

TrialService::~TrialService() = default;

void TrialService::replay(const std::filesystem::path& log) {
    std::ifstream in(log);
    std::vector<std::string> lines;
    for (std::string line; std::getline(in, line);) {
        if (!line.empty()) lines.push_back(std::move(line));
    }
    auto trial = std::make_shared<Trial>();
    trial->log_path = log;
    auto corrupt = [&](std::size_t i, const std::string& why) {
        return InvalidArgument(fmt::format("{}:{}: {}", log.string(), i + 1, why));
    };
    for (std::size_t i = 0; i < lines.size(); ++i) {
        Json event;
        try {
            event = Json::parse(lines[i]);
        } catch (const Json::parse_error&) {
            // A torn final line is an append that never completed.
            if (i + 1 == lines.size() && i > 0) {
                log_event("warn", "torn_log_line", {{"file", log.string()}, {"line", i + 1}});
                break;
            }
            throw corrupt(i, "unparseable event");
        }
        try {
            const std::string type = event.at("type").get<std::string>();
            if (i == 0) {
                if (type != "created") throw corrupt(i, "first event must be 'created'");
                trial->id = event.at("id").get<std::string>();
                trial->created_at = event.at("timestamp").get<std::string>();
                trial->base_seed = event.at("base_seed").get<std::uint64_t>();
                if (!event.at("idempotency_key").is_null()) {
                    trial->idempotency_key = event.at("idempotency_key").get<std::string>();
                }
                trial->config = trial_config_from_json(event.at("config"));
                trial->audit.push_back(
                    {trial->created_at, trial->evaluate_with(trial->history, engine_seed(trial->base_seed, 0))});
            } else {
                if (type != "cohort") throw corrupt(i, "unknown event type " + type);
                CohortEvent e;
                e.timestamp = event.at("timestamp").get<std::string>();
                e.seed = event.at("seed").get<std::uint64_t>();
                e.override_dose = event.at("override").get<bool>();
                e.observation = cohort_from_json(event.at("observation"), trial->config.grid, "observation");
                TrialHistory next = trial->history;
                next.cohorts.push_back(e.observation);
                auto result = trial->evaluate_with(next, e.seed);
                trial->apply(std::move(e), std::move(result));
            }
        } catch (const InvalidArgument&) {
            throw;
        } catch (const std::exception& ex) {
            throw corrupt(i, ex.what());
        }
    }
    if (trial->id.empty()) throw InvalidArgument(log.string() + ": empty event log");
    if (trial->idempotency_key) idempotency_[*trial->idempotency_key] = trial->id;
    trials_[trial->id] = std::move(trial);
}

std::shared_ptr<TrialService::Trial> TrialService::find(const std::string& id) const {
    std::shared_lock lock(mutex_);
    auto it = trials_.find(id);
    return it == trials_.end() ? nullptr : it->second;
}

Reply TrialService::create_trial(const Json& body, const std::optional<std::string>& idempotency_key) {
    if (!body.is_object()) return error_reply(422, "validation_failed", "body must be a JSON object");
    std::vector<FieldError> errors;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> key = idempotency_key;
    TrialConfig config = options_.default_config;
    for (const auto& [name, value] : body.items()) {
        if (name == "config") {
            try {
                config = trial_config_from_json(value, options_.default_config);
            } catch (const ConfigError& e) {
                for (const auto& f : e.errors()) errors.push_back({"config." + f.field, f.message});
            }
        } else if (name == "seed") {
            if (is_non_negative_integer(value)) seed = value.get<std::uint64_t>();
            else errors.push_back({"seed", "expected an unsigned 64-bit integer"});
        } else if (name == "idempotency_key") {
            if (value.is_string() && !value.get<std::string>().empty()) {
                if (!key) key = value.get<std::string>();
            } else {
                errors.push_back({"idempotency_key", "expected a non-empty string"});
            }
        } else {
            errors.push_back({name, "unknown field"});
        }
    }
    if (!errors.empty()) return error_reply(422, "validation_failed", "invalid trial configuration", errors);

    // Holding the map lock across creation makes the idempotency check and
    // the insert one step.
    std::unique_lock lock(mutex_);
    if (key) {
        if (auto it = idempotency_.find(*key); it != idempotency_.end()) {
            const auto& trial = trials_.at(it->second);
            std::shared_lock trial_lock(trial->mutex);
            return {200, trial->view()};
        }
    }
    auto trial = std::make_shared<Trial>();
    do {
        trial->id = new_trial_id();
    } while (trials_.count(trial->id));
    trial->created_at = timestamp_now();
    trial->idempotency_key = key;
    trial->config = config;
    trial->base_seed = seed ? *seed : random_seed();
    trial->log_path = options_.data_dir / (trial->id + ".jsonl");
    try {
        trial->audit.push_back(
            {trial->created_at, trial->evaluate_with(trial->history, engine_seed(trial->base_seed, 0))});
    } catch (const std::exception& e) {
        return error_reply(500, "engine_failure", e.what());
    }
    write_new_file(trial->log_path, trial->created_event().dump());
    if (key) idempotency_[*key] = trial->id;
    trials_[trial->id] = trial;
    log_event("info", "trial_created", {{"id", trial->id}, {"base_seed", trial->base_seed}});
    return {201, trial->view()};
}

Reply TrialService::list_trials() const {
    std::vector<std::shared_ptr<Trial>> all;
    {
        std::shared_lock lock(mutex_);
        for (const auto& [_, t] : trials_) all.push_back(t);
    }
    Json list = Json::array();
    for (const auto& t : all) {
        std::shared_lock lock(t->mutex);
        list.push_back(t->summary());
    }
    return {200, Json{{"trials", list}}};
}

Reply TrialService::get_trial(const std::string& id) const {
    auto trial = find(id);
    if (!trial) return not_found(id);
    std::shared_lock lock(trial->mutex);
    return {200, trial->view()};
}

Reply TrialService::post_cohort(const std::string& id, const Json& body) {
    auto trial = find(id);
    if (!trial) return not_found(id);
    std::unique_lock lock(trial->mutex);
    if (trial->completed()) return error_reply(409, "conflict", "trial " + id + " is completed");

    CohortRequest req;
    try {
        req = parse_cohort_request(body, trial->config.grid);
    } catch (const ConfigError& e) {
        return validation_failed(e);
    }
    const auto expected = trial->latest().recommendation.dose_index;
    if (req.observation.dose_index != expected && !req.override_dose) {
        return error_reply(422, "validation_failed", "dose differs from the current recommendation",
                           {{"dose", fmt::format("recommended dose is {}; set override to true to deviate",
                                                 format_dose(trial->config.grid[expected]))}});
    }

    CohortEvent event;
    event.observation = req.observation;
    event.timestamp = timestamp_now();
    event.seed = req.seed ? *req.seed : engine_seed(trial->base_seed, trial->history.size() + 1);
    event.override_dose = req.override_dose;

    TrialHistory next = trial->history;
    next.cohorts.push_back(event.observation);
    EngineResult result;
    try {
        result = trial->evaluate_with(next, event.seed);
    } catch (const std::exception& e) {
        return error_reply(500, "engine_failure", e.what());
    }
    append_line(trial->log_path, Trial::cohort_event(event, trial->config.grid).dump());
    trial->apply(std::move(event), std::move(result));
    log_event("info", "cohort_posted",
              {{"id", id}, {"cohorts", trial->history.size()}, {"seed", trial->latest().seed},
               {"recommended_dose", trial->latest().dose}});
    return {201, Json{{"trial_id", id},
                      {"status", trial->status()},
                      {"cohorts", trial->history.size()},
                      {"hypothetical", false},
                      {"recommendation", to_json(trial->latest(), trial->config.grid)}}};
}

Reply TrialService::what_if(const std::string& id, const Json& body) const {
    auto trial = find(id);
    if (!trial) return not_found(id);
    std::shared_lock lock(trial->mutex);
    if (trial->completed()) return error_reply(409, "conflict", "trial " + id + " is completed");
    CohortRequest req;
    try {
        req = parse_cohort_request(body, trial->config.grid);
    } catch (const ConfigError& e) {
        return validation_failed(e);
    }
    // Off-recommendation doses are allowed here without the override flag.
    TrialHistory next = trial->history;
    next.cohorts.push_back(req.observation);
    const auto seed = req.seed ? *req.seed : engine_seed(trial->base_seed, next.size());
    EngineResult result;
    try {
        result = trial->evaluate_with(next, seed);
    } catch (const std::exception& e) {
        return error_reply(500, "engine_failure", e.what());
    }
    return {200, Json{{"trial_id", id},
                      {"hypothetical", true},
                      {"cohorts", next.size()},
                      {"recommendation", to_json(result, trial->config.grid)}}};
}

Reply TrialService::posterior(const std::string& id) const {
    auto trial = find(id);
    if (!trial) return not_found(id);
    std::shared_lock lock(trial->mutex);
    const EngineResult& r = trial->latest();
    const auto& grid = trial->config.grid;
    const Json tested = trial->tested();
    Json doses = Json::array();
    for (std::size_t i = 0; i < grid.size(); ++i) {
        const auto& p = r.recommendation.interval_probs[i];
        const auto& b = r.bands[i];
        doses.push_back({{"dose", grid[i]},
                         {"dose_index", i},
                         {"under", p.under},
                         {"target", p.target},
                         {"over", p.over},
                         {"lower", b.lower},
                         {"median", b.median},
                         {"upper", b.upper},
                         {"patients", tested[i]["patients"]},
                         {"dlt_count", tested[i]["dlt_count"]},
                         {"ndltae_count", tested[i]["ndltae_count"]}});
    }
    const auto& iv = trial->config.intervals;
    return {200, Json{{"trial_id", id},
                      {"cohorts", trial->history.size()},
                      {"seed", r.seed},
                      {"recommended_dose", r.dose},
                      {"recommended_dose_index", r.recommendation.dose_index},
                      {"rationale", to_string(r.recommendation.rationale)},
                      {"mtd_quantile", r.recommendation.mtd_quantile},
                      {"intervals", {{"u", iv.u}, {"o", iv.o}, {"target", iv.target}}},
                      {"doses", doses}}};
}

Reply TrialService::health() const {
    std::shared_lock lock(mutex_);
    return {200, Json{{"status", "ok"}, {"version", kVersion}, {"trials", trials_.size()}}};
}

// ---------------------------------------------------------------------------

void log_event(const std::string& level, const std::string& event, Json fields) {
    static std::mutex mutex;
    Json line{{"ts", timestamp_now()}, {"level", level}, {"event", event}};
    for (auto& [k, v] : fields.items()) line[k] = v;
    const std::string text = line.dump();
    std::lock_guard lock(mutex);
    std::cerr << text << '\n';
}

std::pair<std::string, int> parse_bind_address(const std::string& address) {
    const auto colon = address.rfind(':');
    if (colon == std::string::npos || colon == 0) {
        throw InvalidArgument("bind address must be host:port, got '" + address + "'");
    }
    const std::string port_text = address.substr(colon + 1);
    int port = -1;
    try {
        std::size_t used = 0;
        port = std::stoi(port_text, &used);
        if (used != port_text.size()) port = -1;
    } catch (const std::exception&) {
    }
    if (port < 0 || port > 65535) throw InvalidArgument("invalid port in bind address '" + address + "'");
    return {address.substr(0, colon), port};
}

struct HttpServer::Impl {
    TrialService& service;
    httplib::Server server;

    explicit Impl(TrialService& s) : service(s) { routes(); }

    static void send(httplib::Response& res, const Reply& reply) {
        res.status = reply.status;
        res.set_content(reply.body.dump(), "application/json");
    }

    static std::optional<Json> parse_body(const httplib::Request& req, httplib::Response& res) {
        if (req.body.empty()) return Json::object();
        try {
            return Json::parse(req.body);
        } catch (const Json::parse_error& e) {
            send(res, error_reply(400, "bad_request", std::string("malformed JSON: ") + e.what()));
            return std::nullopt;
        }
    }

    void routes() {
        const auto& opts = service.options();
        server.set_pre_routing_handler([token = opts.token](const httplib::Request& req, httplib::Response& res) {
            if (!token || req.path.rfind("/v1/", 0) != 0 || req.path == "/v1/healthz") {
                return httplib::Server::HandlerResponse::Unhandled;
            }
            if (req.get_header_value("Authorization") == "Bearer " + *token) {
                return httplib::Server::HandlerResponse::Unhandled;
            }
            send(res, error_reply(401, "unauthorized", "missing or invalid bearer token"));
            return httplib::Server::HandlerResponse::Handled;
        });

        server.Get("/v1/healthz", [this](const httplib::Request&, httplib::Response& res) {
            send(res, service.health());
        });
        server.Get("/v1/trials", [this](const httplib::Request&, httplib::Response& res) {
            send(res, service.list_trials());
        });
        server.Post("/v1/trials", [this](const httplib::Request& req, httplib::Response& res) {
            auto body = parse_body(req, res);
            if (!body) return;
            std::optional<std::string> key;
            if (req.has_header("Idempotency-Key")) key = req.get_header_value("Idempotency-Key");
            send(res, service.create_trial(*body, key));
        });
        server.Get(R"(/v1/trials/([^/]+))", [this](const httplib::Request& req, httplib::Response& res) {
            send(res, service.get_trial(req.matches[1]));
        });
        server.Get(R"(/v1/trials/([^/]+)/posterior)", [this](const httplib::Request& req, httplib::Response& res) {
            send(res, service.posterior(req.matches[1]));
        });
        server.Post(R"(/v1/trials/([^/]+)/cohorts)", [this](const httplib::Request& req, httplib::Response& res) {
            auto body = parse_body(req, res);
            if (body) send(res, service.post_cohort(req.matches[1], *body));
        });
        server.Post(R"(/v1/trials/([^/]+)/whatif)", [this](const httplib::Request& req, httplib::Response& res) {
            auto body = parse_body(req, res);
            if (body) send(res, service.what_if(req.matches[1], *body));
        });

        if (opts.ui_dir) {
            if (!server.set_mount_point("/", opts.ui_dir->string())) {
                throw InvalidArgument("ui dir " + opts.ui_dir->string() + " is not a directory");
            }
        } else {
            server.Get("/", [](const httplib::Request&, httplib::Response& res) {
                res.set_content(
                    "<!doctype html><title>bblrm</title><p>bblrm trial service. "
                    "The API lives under <code>/v1</code>; no console bundle is mounted.</p>\n",
                    "text/html");
            });
        }

        server.set_error_handler([](const httplib::Request& req, httplib::Response& res) {
            if (res.body.empty() && req.path.rfind("/v1/", 0) == 0) {
                send(res, error_reply(res.status, res.status == 404 ? "not_found" : "error",
                                      res.status == 404 ? "no route for " + req.method + " " + req.path
                                                        : "request failed"));
            }
        });
        server.set_exception_handler([](const httplib::Request& req, httplib::Response& res, std::exception_ptr ep) {
            std::string what = "unknown error";
            try {
                std::rethrow_exception(ep);
            } catch (const std::exception& e) {
                what = e.what();
            } catch (...) {
            }
            log_event("error", "request_failed", {{"method", req.method}, {"path", req.path}, {"error", what}});
            send(res, error_reply(500, "internal_error", what));
        });
        server.set_logger([](const httplib::Request& req, const httplib::Response& res) {
            log_event("info", "http_request", {{"method", req.method}, {"path", req.path}, {"status", res.status}});
        });
    }
};

HttpServer::HttpServer(TrialService& service) : impl_(std::make_unique<Impl>(service)) {}
HttpServer::~HttpServer() = default;

int HttpServer::bind(const std::string& host, int port) {
    if (port == 0) {
        const int bound = impl_->server.bind_to_any_port(host);
        if (bound < 0) throw std::runtime_error("cannot bind " + host);
        return bound;
    }
    if (!impl_->server.bind_to_port(host, port)) {
        throw std::runtime_error(fmt::format("cannot bind {}:{}", host, port));
    }
    return port;
}

void HttpServer::listen() {
    impl_->server.listen_after_bind();
}

void HttpServer::stop() {
    impl_->server.stop();
}

void HttpServer::wait_until_ready() const {
    impl_->server.wait_until_ready();
}

}  // namespace bblrm
