#pragma once

// Trial-conduct service: live trials persisted as append-only JSON-lines
// event logs, one file per trial, replayed on startup. The HTTP layer is a
// thin adapter over TrialService.

#include "bblrm/json_io.hpp"

#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <shared_mutex>
#include <string>

namespace bblrm {

inline constexpr const char* kVersion = "0.1.0";

struct ServiceOptions {
    std::filesystem::path data_dir;
    TrialConfig default_config;
    std::optional<std::string> token;       // bearer token; none disables auth
    std::optional<std::filesystem::path> ui_dir;  // served at "/"
};

/// Status code plus JSON body. Errors carry {code, message, field_errors}.
struct Reply {
    int status = 200;
    Json body;
};

class TrialService {
public:
    /// Creates the data directory if needed and replays every event log in it.
    /// Throws InvalidArgument when the directory is unusable or a log is corrupt.
    explicit TrialService(ServiceOptions options);
    ~TrialService();

    TrialService(const TrialService&) = delete;
    TrialService& operator=(const TrialService&) = delete;

    Reply create_trial(const Json& body, const std::optional<std::string>& idempotency_key);
    Reply list_trials() const;
    Reply get_trial(const std::string& id) const;
    Reply post_cohort(const std::string& id, const Json& body);
    Reply what_if(const std::string& id, const Json& body) const;
    Reply posterior(const std::string& id) const;
    Reply health() const;

    const ServiceOptions& options() const noexcept { return options_; }

    struct Trial;

private:
    std::shared_ptr<Trial> find(const std::string& id) const;
    void replay(const std::filesystem::path& log);

    ServiceOptions options_;
    mutable std::shared_mutex mutex_;  // guards the two maps, not trial contents
    std::map<std::string, std::shared_ptr<Trial>> trials_;
    std::map<std::string, std::string> idempotency_;
};

/// HTTP front end (cpp-httplib) for a TrialService.
class HttpServer {
public:
    explicit HttpServer(TrialService& service);
    ~HttpServer();

    /// Binds host:port (port 0 picks a free one); returns the bound port or
    /// throws std::runtime_error.
    int bind(const std::string& host, int port);
    /// Serves until stop(); call after bind().
    void listen();
    void stop();
    void wait_until_ready() const;

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

/// Structured log line (one JSON object) to standard error.
void log_event(const std::string& level, const std::string& event, Json fields = Json::object());

/// Splits "host:port"; throws InvalidArgument on malformed input.
std::pair<std::string, int> parse_bind_address(const std::string& address);

}  // namespace bblrm
