#include "serialprobe/service.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <cmath>
#include <cstring>
#include <ctime>
#include <fstream>
#include <tuple>

#include <fmt/format.h>
#include <httplib.h>

#include "serialprobe/rng.hpp"

namespace serialprobe::service {

namespace {

Task task_of(const Json& j, const char* key = "task") {
    const auto t = parse_task(j.at(key).get<std::string>());
    if (!t) throw ServiceError("BadRequest", 400, fmt::format("unknown task '{}'", j.at(key).get<std::string>()));
    return *t;
}

Json answer_schema(Task task) {
    switch (task) {
        case Task::Oddball: return {{"type", "choice"}, {"options", {1, 2, 3, 4, 5, 6}}};
        case Task::Numerosity: return {{"type", "integer"}, {"min", 1}, {"max", answer_range(task).hi}};
        case Task::Rotation:
            return {{"type", "choice"}, {"options", {1, 0}}, {"labels", {{"1", "same"}, {"0", "mirror"}}}};
    }
    return {};
}

}  // namespace

std::string iso8601_now() {
    const auto now = std::chrono::system_clock::now();
    const auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(now.time_since_epoch()).count();
    const std::time_t secs = static_cast<std::time_t>(ms / 1000);
    std::tm tm{};
    gmtime_r(&secs, &tm);
    return fmt::format("{:04d}-{:02d}-{:02d}T{:02d}:{:02d}:{:02d}.{:03d}Z", tm.tm_year + 1900, tm.tm_mon + 1, tm.tm_mday,
                       tm.tm_hour, tm.tm_min, tm.tm_sec, static_cast<int>(ms % 1000));
}

std::vector<std::string> select_human_subset(const Manifest& manifest, double fraction, std::uint64_t seed) {
    if (!(fraction > 0.0 && fraction <= 1.0)) throw std::invalid_argument("subset fraction must be in (0, 1]");
    std::map<std::string, std::vector<std::size_t>> cells;
    for (std::size_t i = 0; i < manifest.trials.size(); ++i) cells[manifest.trials[i].cell].push_back(i);
    std::vector<bool> keep(manifest.trials.size(), false);
    for (auto& [cell, members] : cells) {
        auto rng = Rng::stream(seed, fmt::format("subset/{}/{}", to_string(manifest.task), cell));
        rng.shuffle(std::span<std::size_t>(members));
        const auto k = std::min(members.size(),
                                static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(members.size()) - 1e-9)));
        for (std::size_t j = 0; j < k; ++j) keep[members[j]] = true;
    }
    std::vector<std::string> out;
    for (std::size_t i = 0; i < keep.size(); ++i) {
        if (keep[i]) out.push_back(manifest.trials[i].trial_id);
    }
    return out;
}

int coverage_target(Task task) noexcept { return task == Task::Oddball ? 20 : 10; }

Json response_to_json(const HumanResponse& r) {
    return Json{{"session_id", r.session_id}, {"trial_id", r.trial_id}, {"task", std::string(to_string(r.task))},
                {"answer", r.answer},         {"rt_ms", r.rt_ms},       {"server_received_at", r.server_received_at},
                {"valid", r.valid}};
}

HumanResponse response_from_json(const Json& j) {
    HumanResponse r;
    r.session_id = j.at("session_id").get<std::string>();
    r.trial_id = j.at("trial_id").get<std::string>();
    r.task = task_of(j);
    r.answer = j.at("answer").get<int>();
    r.rt_ms = j.at("rt_ms").get<double>();
    r.server_received_at = j.value("server_received_at", "");
    r.valid = j.value("valid", true);
    return r;
}

void State::apply(const Json& event) {
    const auto type = event.at("type").get<std::string>();
    if (type == "session_created") {
        Session s;
        s.session_id = event.at("session_id").get<std::string>();
        s.task = task_of(event);
        s.trials = event.at("trials").get<std::vector<std::string>>();
        s.created_at = event.value("created_at", "");
        for (const auto& t : s.trials) ++assigned[t];
        sessions[s.session_id] = std::move(s);
    } else if (type == "response_recorded") {
        auto r = response_from_json(event);
        auto it = sessions.find(r.session_id);
        if (it == sessions.end()) throw std::runtime_error(fmt::format("log: response for unknown session {}", r.session_id));
        auto& s = it->second;
        if (s.done() || s.trials[s.cursor] != r.trial_id) {
            throw std::runtime_error(fmt::format("log: out-of-order response {} in session {}", r.trial_id, r.session_id));
        }
        ++s.cursor;
        ++judgments[r.trial_id];
        responses.push_back(std::move(r));
    } else {
        throw std::runtime_error(fmt::format("log: unknown event type '{}'", type));
    }
    ++events;
}

EventLog::EventLog(std::filesystem::path path, bool fsync_each) : path_(std::move(path)), fsync_each_(fsync_each) {
    if (path_.has_parent_path()) std::filesystem::create_directories(path_.parent_path());
    fd_ = ::open(path_.c_str(), O_RDWR | O_APPEND | O_CREAT | O_CLOEXEC, 0644);
    if (fd_ < 0) throw std::runtime_error(fmt::format("cannot open log '{}': {}", path_.string(), std::strerror(errno)));
    // drop a torn final line so the next event starts on a fresh line
    const off_t size = ::lseek(fd_, 0, SEEK_END);
    if (size > 0) {
        std::ifstream in(path_, std::ios::binary);
        std::string data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
        if (!data.empty() && data.back() != '\n') {
            const auto keep = data.find_last_of('\n');
            const off_t len = keep == std::string::npos ? 0 : static_cast<off_t>(keep + 1);
            if (::ftruncate(fd_, len) != 0) throw std::runtime_error("cannot truncate torn log tail");
        }
    }
}

EventLog::~EventLog() {
    if (fd_ >= 0) {
        ::fsync(fd_);
        ::close(fd_);
    }
}

std::vector<Json> EventLog::read(const std::filesystem::path& path) {
    std::vector<Json> out;
    std::ifstream in(path, std::ios::binary);
    if (!in) return out;
    std::string data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    std::size_t pos = 0;
    while (pos < data.size()) {
        const auto nl = data.find('\n', pos);
        if (nl == std::string::npos) break;  // torn tail from a crash mid-write
        const std::string_view line(data.data() + pos, nl - pos);
        if (!line.empty()) out.push_back(Json::parse(line));
        pos = nl + 1;
    }
    return out;
}

void EventLog::append(const Json& event) {
    const std::string line = event.dump() + "\n";
    const ssize_t n = ::write(fd_, line.data(), line.size());
    if (n != static_cast<ssize_t>(line.size())) {
        throw std::runtime_error(fmt::format("log write failed: {}", n < 0 ? std::strerror(errno) : "short write"));
    }
    if (fsync_each_) ::fdatasync(fd_);
}

State replay(const std::filesystem::path& log_path) {
    State s;
    for (const auto& e : EventLog::read(log_path)) s.apply(e);
    return s;
}

ExperimentService::ExperimentService(ServiceConfig config) : config_(std::move(config)) {
    std::vector<Manifest> manifests;
    for (Task t : kAllTasks) {
        const auto path = config_.data_root / manifest_filename(t);
        if (std::filesystem::exists(path)) manifests.push_back(load_manifest(path));
    }
    if (manifests.empty()) {
        throw std::runtime_error(fmt::format("no manifests under '{}'; run generate first", config_.data_root.string()));
    }
    init(std::move(manifests));
}

ExperimentService::ExperimentService(ServiceConfig config, std::vector<Manifest> manifests) : config_(std::move(config)) {
    init(std::move(manifests));
}

void ExperimentService::init(std::vector<Manifest> manifests) {
    for (auto& m : manifests) {
        const Task t = m.task;
        subsets_[t] = select_human_subset(m, config_.subset_fraction, config_.seed);
        manifests_[t] = std::move(m);
    }
    for (const auto& [task, m] : manifests_) {
        for (const auto& t : m.trials) trial_index_[t.trial_id] = &t;
    }
    state_ = replay(config_.log_path);
    for (const auto& [id, s] : state_.sessions) {
        for (const auto& t : s.trials) {
            if (!trial_index_.count(t)) {
                throw std::runtime_error(fmt::format("log references trial '{}' missing from the manifests", t));
            }
        }
    }
    log_ = std::make_unique<EventLog>(config_.log_path, config_.fsync_each);
}

const Manifest& ExperimentService::manifest(Task task) const {
    const auto it = manifests_.find(task);
    if (it == manifests_.end()) {
        throw ServiceError("UnknownTask", 404, fmt::format("no {} manifest loaded", to_string(task)));
    }
    return it->second;
}

bool ExperimentService::has_task(Task task) const noexcept { return manifests_.count(task) != 0; }

const std::vector<std::string>& ExperimentService::subset(Task task) const {
    manifest(task);
    return subsets_.at(task);
}

Session ExperimentService::create_session(Task task) {
    const auto& pool = subset(task);
    std::unique_lock lock(mutex_);
    if (pool.size() < config_.session_length) {
        throw ServiceError("SubsetExhausted", 422,
                           fmt::format("{} subset has {} trials, fewer than {}", to_string(task), pool.size(),
                                       config_.session_length));
    }
    const auto index = static_cast<std::uint64_t>(state_.sessions.size());
    auto rng = Rng::stream(config_.seed, "session", index);

    struct Candidate {
        std::string id;
        int assigned;
        std::uint64_t key;
    };
    std::map<std::string, std::vector<Candidate>> cells;
    for (const auto& id : pool) {
        const auto it = state_.assigned.find(id);
        cells[trial_index_.at(id)->cell].push_back({id, it == state_.assigned.end() ? 0 : it->second, rng.next()});
    }
    struct Cell {
        std::vector<Candidate> members;
        std::size_t taken = 0;
        std::uint64_t key = 0;
    };
    std::vector<Cell> order;
    for (auto& [name, members] : cells) {
        std::sort(members.begin(), members.end(),
                  [](const Candidate& a, const Candidate& b) { return std::tie(a.assigned, a.key) < std::tie(b.assigned, b.key); });
        order.push_back({std::move(members), 0, rng.next()});
    }

    // Greedy: the cell with the fewest picks this session, then the least
    // covered next trial, then a random key.
    std::vector<std::string> picked;
    while (picked.size() < config_.session_length) {
        Cell* best = nullptr;
        for (auto& c : order) {
            if (c.taken >= c.members.size()) continue;
            if (best == nullptr ||
                std::tie(c.taken, c.members[c.taken].assigned, c.key) <
                    std::tie(best->taken, best->members[best->taken].assigned, best->key)) {
                best = &c;
            }
        }
        picked.push_back(best->members[best->taken].id);
        ++best->taken;
    }
    rng.shuffle(std::span<std::string>(picked));

    Json event{{"type", "session_created"},
               {"session_id", fmt::format("{:016x}", Rng::stream_seed(config_.seed, "session-id", index))},
               {"task", std::string(to_string(task))},
               {"trials", picked},
               {"created_at", iso8601_now()}};
    log_->append(event);
    state_.apply(event);
    return state_.sessions.at(event["session_id"].get<std::string>());
}

Session ExperimentService::session(const std::string& session_id) const {
    std::shared_lock lock(mutex_);
    const auto it = state_.sessions.find(session_id);
    if (it == state_.sessions.end()) throw ServiceError("UnknownSession", 404, fmt::format("no session '{}'", session_id));
    return it->second;
}

Json ExperimentService::next(const std::string& session_id) const {
    const Session s = session(session_id);
    if (s.done()) return {{"done", true}, {"session_id", s.session_id}, {"n_trials", s.trials.size()}, {"cursor", s.cursor}};
    const auto* info = trial_index_.at(s.trials[s.cursor]);
    Json images = Json::array();
    for (const auto& p : info->panels) images.push_back("/stimuli/" + p);
    return {{"done", false},
            {"session_id", s.session_id},
            {"trial_id", info->trial_id},
            {"index", s.cursor},
            {"n_trials", s.trials.size()},
            {"images", images},
            {"composite", "/stimuli/" + info->image},
            {"answer_schema", answer_schema(s.task)},
            {"instructions_id", std::string(to_string(s.task))}};
}

Ack ExperimentService::record_response(const std::string& session_id, const std::string& trial_id, int answer,
                                       double rt_ms) {
    std::unique_lock lock(mutex_);
    const auto it = state_.sessions.find(session_id);
    if (it == state_.sessions.end()) throw ServiceError("UnknownSession", 404, fmt::format("no session '{}'", session_id));
    const Session& s = it->second;
    const auto answered_end = s.trials.begin() + static_cast<std::ptrdiff_t>(s.cursor);
    if (std::find(s.trials.begin(), answered_end, trial_id) != answered_end) {
        return {true, true, s.cursor, s.done()};
    }
    if (s.done()) throw ServiceError("SessionComplete", 409, "session already complete");
    if (s.trials[s.cursor] != trial_id) {
        throw ServiceError("OutOfOrder", 409,
                           fmt::format("expected trial '{}', got '{}'", s.trials[s.cursor], trial_id));
    }
    if (!answer_range(s.task).contains(answer)) {
        throw ServiceError("InvalidAnswer", 400, fmt::format("answer {} outside the {} range", answer, to_string(s.task)));
    }
    if (!std::isfinite(rt_ms) || rt_ms <= 0) throw ServiceError("InvalidRt", 400, "rt_ms must be a positive number");

    const bool valid = rt_ms >= config_.rt_min_ms && rt_ms <= config_.rt_max_ms;
    Json event{{"type", "response_recorded"},
               {"session_id", session_id},
               {"trial_id", trial_id},
               {"task", std::string(to_string(s.task))},
               {"answer", answer},
               {"rt_ms", rt_ms},
               {"server_received_at", iso8601_now()},
               {"valid", valid}};
    log_->append(event);
    state_.apply(event);
    const Session& after = state_.sessions.at(session_id);
    return {false, valid, after.cursor, after.done()};
}

Json ExperimentService::coverage(Task task) const {
    const auto& pool = subset(task);
    std::shared_lock lock(mutex_);
    const int target = coverage_target(task);
    Json trials = Json::array();
    int lo = -1, hi = 0;
    std::size_t below = 0;
    for (const auto& id : pool) {
        const auto a = state_.assigned.find(id);
        const auto j = state_.judgments.find(id);
        const int judged = j == state_.judgments.end() ? 0 : j->second;
        trials.push_back({{"trial_id", id},
                          {"cell", trial_index_.at(id)->cell},
                          {"assigned", a == state_.assigned.end() ? 0 : a->second},
                          {"judgments", judged},
                          {"below_target", judged < target}});
        lo = lo < 0 ? judged : std::min(lo, judged);
        hi = std::max(hi, judged);
        if (judged < target) ++below;
    }
    return {{"task", std::string(to_string(task))},
            {"target", target},
            {"n_trials", pool.size()},
            {"below_target", below},
            {"min_judgments", std::max(lo, 0)},
            {"max_judgments", hi},
            {"trials", trials}};
}

std::string ExperimentService::export_jsonl(Task task) const {
    std::shared_lock lock(mutex_);
    std::string out;
    for (const auto& r : state_.responses) {
        if (r.task == task) out += response_to_json(r).dump() + "\n";
    }
    return out;
}

State ExperimentService::snapshot() const {
    std::shared_lock lock(mutex_);
    return state_;
}

struct HttpServer::Impl {
    ExperimentService& service;
    httplib::Server server;

    explicit Impl(ExperimentService& s) : service(s) {}

    static void send(httplib::Response& res, int status, const Json& body) {
        res.status = status;
        res.set_content(body.dump(), "application/json");
    }

    template <typename Fn>
    static httplib::Server::Handler wrap(Fn fn) {
        return [fn](const httplib::Request& req, httplib::Response& res) {
            try {
                fn(req, res);
            } catch (const ServiceError& e) {
                send(res, e.http_status, {{"error", e.code}, {"message", e.what()}});
            } catch (const Json::exception& e) {
                send(res, 400, {{"error", "BadRequest"}, {"message", e.what()}});
            } catch (const std::exception& e) {
                send(res, 500, {{"error", "Internal"}, {"message", e.what()}});
            }
        };
    }

    static Task task_param(const httplib::Request& req) {
        if (!req.has_param("task")) throw ServiceError("BadRequest", 400, "missing ?task=");
        const auto t = parse_task(req.get_param_value("task"));
        if (!t) throw ServiceError("BadRequest", 400, "unknown task");
        return *t;
    }

    void routes(const std::filesystem::path& static_dir) {
        auto& svc = service;
        server.Post("/api/session", wrap([&svc](const httplib::Request& req, httplib::Response& res) {
                        const auto body = Json::parse(req.body);
                        const auto s = svc.create_session(task_of(body));
                        send(res, 200, {{"session_id", s.session_id},
                                        {"task", std::string(to_string(s.task))},
                                        {"n_trials", s.trials.size()}});
                    }));
        server.Get(R"(/api/session/([^/]+))", wrap([&svc](const httplib::Request& req, httplib::Response& res) {
                       const auto s = svc.session(req.matches[1]);
                       send(res, 200, {{"session_id", s.session_id},
                                       {"task", std::string(to_string(s.task))},
                                       {"n_trials", s.trials.size()},
                                       {"cursor", s.cursor},
                                       {"done", s.done()},
                                       {"created_at", s.created_at}});
                   }));
        server.Get(R"(/api/session/([^/]+)/next)", wrap([&svc](const httplib::Request& req, httplib::Response& res) {
                       send(res, 200, svc.next(req.matches[1]));
                   }));
        server.Post(R"(/api/session/([^/]+)/response)",
                    wrap([&svc](const httplib::Request& req, httplib::Response& res) {
                        const auto body = Json::parse(req.body);
                        const auto ack = svc.record_response(req.matches[1], body.at("trial_id").get<std::string>(),
                                                             body.at("answer").get<int>(), body.at("rt_ms").get<double>());
                        send(res, 200, {{"ok", true},
                                        {"duplicate", ack.duplicate},
                                        {"valid", ack.valid},
                                        {"cursor", ack.cursor},
                                        {"done", ack.done}});
                    }));
        server.Get("/api/coverage", wrap([&svc](const httplib::Request& req, httplib::Response& res) {
                       send(res, 200, svc.coverage(task_param(req)));
                   }));
        server.Get("/api/export", wrap([&svc](const httplib::Request& req, httplib::Response& res) {
                       const auto& token = svc.config().export_token;
                       if (!token.empty() && req.get_header_value("Authorization") != "Bearer " + token) {
                           throw ServiceError("Unauthorized", 401, "export requires a bearer token");
                       }
                       res.status = 200;
                       res.set_content(svc.export_jsonl(task_param(req)), "application/x-ndjson");
                   }));
        server.set_mount_point("/stimuli", svc.config().data_root.string());
        if (!static_dir.empty() && std::filesystem::is_directory(static_dir)) {
            server.set_mount_point("/", static_dir.string());
        }
    }
};

HttpServer::HttpServer(ExperimentService& service, std::filesystem::path static_dir)
    : impl_(std::make_unique<Impl>(service)) {
    impl_->routes(static_dir);
}

HttpServer::~HttpServer() = default;

bool HttpServer::listen(const std::string& host, int port) { return impl_->server.listen(host, port); }
int HttpServer::bind_any(const std::string& host) { return impl_->server.bind_to_any_port(host); }
bool HttpServer::bind(const std::string& host, int port) { return impl_->server.bind_to_port(host, port); }
bool HttpServer::listen_after_bind() { return impl_->server.listen_after_bind(); }
void HttpServer::stop() { impl_->server.stop(); }
bool HttpServer::running() const { return impl_->server.is_running(); }

}  // namespace serialprobe::service
