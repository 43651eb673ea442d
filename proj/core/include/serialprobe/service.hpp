#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <stdexcept>
#include <string>
#include <vector>

#include "serialprobe/manifest.hpp"
#include "serialprobe/task.hpp"

namespace serialprobe::service {

/// Stratified sample: ceil(fraction * |cell|) trials from every condition cell,
/// uniformly within the cell. Returned in manifest order.
std::vector<std::string> select_human_subset(const Manifest& manifest, double fraction, std::uint64_t seed);

/// Judgment target per trial used by the coverage report.
int coverage_target(Task task) noexcept;

class ServiceError : public std::runtime_error {
public:
    ServiceError(std::string code, int http_status, const std::string& message)
        : std::runtime_error(message), code(std::move(code)), http_status(http_status) {}
    std::string code;
    int http_status;
};

struct Session {
    std::string session_id;
    Task task = Task::Oddball;
    std::vector<std::string> trials;
    std::size_t cursor = 0;
    std::string created_at;

    bool done() const noexcept { return cursor >= trials.size(); }
    bool operator==(const Session&) const = default;
};

struct HumanResponse {
    std::string session_id;
    std::string trial_id;
    Task task = Task::Oddball;
    int answer = 0;
    double rt_ms = 0;
    std::string server_received_at;
    bool valid = true;
};

Json response_to_json(const HumanResponse& r);
HumanResponse response_from_json(const Json& j);

/// Everything the service knows, as a pure fold over the event log.
struct State {
    std::map<std::string, Session> sessions;
    std::map<std::string, int> assigned;   ///< trial id -> sessions that include it
    std::map<std::string, int> judgments;  ///< trial id -> recorded responses
    std::vector<HumanResponse> responses;
    std::uint64_t events = 0;

    void apply(const Json& event);
    bool operator==(const State& other) const {
        return sessions == other.sessions && assigned == other.assigned && judgments == other.judgments &&
               events == other.events;
    }
};

/// Append-only JSONL. Each event is one write(2) on an O_APPEND descriptor, so a
/// crash leaves at most a torn final line, which replay ignores.
class EventLog {
public:
    explicit EventLog(std::filesystem::path path, bool fsync_each = false);
    ~EventLog();
    EventLog(const EventLog&) = delete;
    EventLog& operator=(const EventLog&) = delete;

    /// Events already on disk, in order.
    static std::vector<Json> read(const std::filesystem::path& path);
    void append(const Json& event);
    const std::filesystem::path& path() const noexcept { return path_; }

private:
    std::filesystem::path path_;
    int fd_ = -1;
    bool fsync_each_;
};

State replay(const std::filesystem::path& log_path);

struct ServiceConfig {
    std::filesystem::path data_root;  ///< directory holding the manifests and stimuli
    std::filesystem::path log_path;
    std::uint64_t seed = 0;
    double subset_fraction = 0.20;
    std::size_t session_length = 50;
    double rt_min_ms = 200;
    double rt_max_ms = 30000;
    std::string export_token;  ///< bearer token for /api/export; empty disables the check
    bool fsync_each = false;
};

struct Ack {
    bool duplicate = false;
    bool valid = true;
    std::size_t cursor = 0;
    bool done = false;
};

/// Session assignment and response recording. Thread-safe: mutations are
/// serialized through one writer lock, reads share a reader lock.
class ExperimentService {
public:
    /// Loads every manifest present under data_root, then replays the log.
    explicit ExperimentService(ServiceConfig config);
    /// For tests: explicit manifests.
    ExperimentService(ServiceConfig config, std::vector<Manifest> manifests);

    Session create_session(Task task);
    Session session(const std::string& session_id) const;
    /// Next trial payload, or {"done": true}.
    Json next(const std::string& session_id) const;
    Ack record_response(const std::string& session_id, const std::string& trial_id, int answer, double rt_ms);

    Json coverage(Task task) const;
    /// Response records for a task, one JSON object per line.
    std::string export_jsonl(Task task) const;

    State snapshot() const;
    const std::vector<std::string>& subset(Task task) const;
    bool has_task(Task task) const noexcept;
    const ServiceConfig& config() const noexcept { return config_; }

private:
    void init(std::vector<Manifest> manifests);
    const Manifest& manifest(Task task) const;

    ServiceConfig config_;
    std::map<Task, Manifest> manifests_;
    std::map<Task, std::vector<std::string>> subsets_;
    std::map<std::string, const TrialInfo*> trial_index_;
    mutable std::shared_mutex mutex_;
    State state_;
    std::unique_ptr<EventLog> log_;
};

/// HTTP front end. Blocks in listen() until stop() is called from another thread.
class HttpServer {
public:
    explicit HttpServer(ExperimentService& service, std::filesystem::path static_dir = {});
    ~HttpServer();
    bool listen(const std::string& host, int port);
    /// Binds to an ephemeral port and returns it (or -1); then call listen_after_bind().
    int bind_any(const std::string& host);
    bool bind(const std::string& host, int port);
    bool listen_after_bind();
    void stop();
    bool running() const;

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

std::string iso8601_now();

}  // namespace serialprobe::service
