#include "serialprobe/config.hpp"

#include <cmath>
#include <cstdlib>
#include <set>

#include <fmt/format.h>

#ifndef SERIALPROBE_DATA_DIR
#define SERIALPROBE_DATA_DIR "data"
#endif

namespace serialprobe {

ConfigError::ConfigError(std::string key_path, const std::string& message)
    : std::runtime_error(fmt::format("config: {}: {}", key_path, message)), key(std::move(key_path)) {}

namespace {

// Typed access to one JSON object with key-path error messages.
class Section {
public:
    Section(const Json& j, std::string path) : j_(j), path_(std::move(path)) {
        if (!j_.is_object()) throw ConfigError(path_.empty() ? "<root>" : path_, "expected an object");
    }

    std::string key(const std::string& k) const { return path_.empty() ? k : path_ + "." + k; }

    const Json* find(const std::string& k) {
        seen_.insert(k);
        const auto it = j_.find(k);
        return it == j_.end() ? nullptr : &*it;
    }

    void get(const std::string& k, int& out) {
        if (const auto* v = find(k)) {
            if (!v->is_number_integer()) throw ConfigError(key(k), "expected an integer");
            const auto x = v->get<long long>();
            if (x < std::numeric_limits<int>::min() || x > std::numeric_limits<int>::max()) {
                throw ConfigError(key(k), "integer out of range");
            }
            out = static_cast<int>(x);
        }
    }
    void get(const std::string& k, double& out) {
        if (const auto* v = find(k)) {
            if (!v->is_number()) throw ConfigError(key(k), "expected a number");
            out = v->get<double>();
        }
    }
    void get(const std::string& k, bool& out) {
        if (const auto* v = find(k)) {
            if (!v->is_boolean()) throw ConfigError(key(k), "expected true or false");
            out = v->get<bool>();
        }
    }
    void get(const std::string& k, std::string& out) {
        if (const auto* v = find(k)) {
            if (!v->is_string()) throw ConfigError(key(k), "expected a string");
            out = v->get<std::string>();
        }
    }
    void get(const std::string& k, std::filesystem::path& out) {
        std::string s = out.string();
        get(k, s);
        out = s;
    }

    std::optional<Section> child(const std::string& k) {
        if (const auto* v = find(k)) return Section(*v, key(k));
        return std::nullopt;
    }

    void finish() const {
        for (const auto& [k, _] : j_.items()) {
            if (!seen_.count(k)) throw ConfigError(key(k), "unknown key");
        }
    }

private:
    const Json& j_;
    std::string path_;
    std::set<std::string> seen_;
};

void check(bool ok, const std::string& key, const std::string& message) {
    if (!ok) throw ConfigError(key, message);
}

Json model_to_json(const harness::HttpModelConfig& m) {
    Json j{{"id", m.id},           {"url", m.url},         {"model", m.model},
           {"auth_env", m.auth_env}, {"timeout_s", m.timeout_s}};
    j["temperature"] = m.temperature ? Json(*m.temperature) : Json(nullptr);
    j["max_tokens"] = m.max_tokens;
    return j;
}

}  // namespace

std::filesystem::path data_dir() {
    if (const char* env = std::getenv("SERIALPROBE_DATA_DIR"); env != nullptr && *env != '\0') return env;
    return SERIALPROBE_DATA_DIR;
}

int RunConfig::oddball_per_concept() const {
    return static_cast<int>(std::ceil(100.0 * scale.at(Task::Oddball) - 1e-9));
}

int RunConfig::numerosity_per_cell() const {
    return static_cast<int>(std::ceil(100.0 * scale.at(Task::Numerosity) - 1e-9));
}

double RunConfig::rotation_fraction() const { return scale.at(Task::Rotation); }

std::filesystem::path RunConfig::concepts_path() const {
    return concepts.empty() ? data_dir() / "concepts.geo" : concepts;
}

std::filesystem::path RunConfig::log_path() const {
    return serve.log.empty() ? output_dir / "service" / "events.jsonl" : serve.log;
}

service::ServiceConfig RunConfig::service_config() const {
    service::ServiceConfig s;
    s.data_root = output_dir;
    s.log_path = log_path();
    s.seed = seed.value_or(0);
    s.subset_fraction = serve.subset_fraction;
    s.session_length = static_cast<std::size_t>(serve.session_length);
    s.rt_min_ms = analyze.options.rt_min_ms;
    s.rt_max_ms = analyze.options.rt_max_ms;
    s.export_token = serve.export_token;
    s.fsync_each = serve.fsync;
    return s;
}

RunConfig config_from_json(const Json& j) {
    RunConfig c;
    Section root(j, "");
    if (const auto* v = root.find("seed")) {
        if (!v->is_number_unsigned()) throw ConfigError("seed", "expected a non-negative integer");
        c.seed = v->get<std::uint64_t>();
    }
    root.get("output_dir", c.output_dir);
    root.get("workers", c.workers);
    if (const auto* v = root.find("scale")) {
        if (v->is_number()) {
            for (auto& [t, s] : c.scale) s = v->get<double>();
        } else {
            Section s(*v, "scale");
            for (Task t : kAllTasks) s.get(std::string(to_string(t)), c.scale[t]);
            s.finish();
        }
    }
    if (auto s = root.child("oddball")) {
        s->get("concepts", c.concepts);
        s->get("cell_size", c.oddball.cell_size);
        s->get("stroke_px", c.oddball.stroke_px);
        s->get("margin", c.oddball.geometry.margin);
        s->get("violation_margin", c.oddball.geometry.violation_margin);
        s->get("max_attempts", c.oddball.geometry.max_attempts);
        s->get("max_oddball_resamples", c.oddball.max_oddball_resamples);
        s->finish();
    }
    if (auto s = root.child("numerosity")) {
        s->get("image_size", c.numerosity.image_size);
        c.numerosity.placement.resolution = c.numerosity.image_size;
        s->get("mask_resolution", c.numerosity.placement.resolution);
        s->get("scale_lo", c.numerosity.scale_lo);
        s->get("scale_hi", c.numerosity.scale_hi);
        s->get("overlap_lo", c.numerosity.placement.overlap_lo);
        s->get("overlap_hi", c.numerosity.placement.overlap_hi);
        s->get("visibility_floor", c.numerosity.placement.visibility_floor);
        s->get("min_gap_px", c.numerosity.placement.min_gap_px);
        s->finish();
    }
    if (auto s = root.child("rotation")) {
        s->get("panel_size", c.rotation.panel_size);
        s->get("gutter", c.rotation.gutter);
        s->finish();
    }
    if (const auto* v = root.find("models")) {
        if (!v->is_array()) throw ConfigError("models", "expected an array");
        for (std::size_t i = 0; i < v->size(); ++i) {
            Section s((*v)[i], fmt::format("models[{}]", i));
            harness::HttpModelConfig m;
            s.get("id", m.id);
            s.get("url", m.url);
            s.get("model", m.model);
            s.get("auth_env", m.auth_env);
            s.get("timeout_s", m.timeout_s);
            if (const auto* t = s.find("temperature"); t != nullptr && !t->is_null()) {
                if (!t->is_number()) throw ConfigError(s.key("temperature"), "expected a number or null");
                m.temperature = t->get<double>();
            }
            s.get("max_tokens", m.max_tokens);
            s.finish();
            c.models.push_back(std::move(m));
        }
    }
    if (auto s = root.child("evaluate")) {
        std::string mode(harness::to_string(c.evaluate.mode));
        s->get("mode", mode);
        const auto parsed = harness::parse_mode(mode);
        if (!parsed) throw ConfigError(s->key("mode"), "expected \"baseline\" or \"cot\"");
        c.evaluate.mode = *parsed;
        s->get("concurrency", c.evaluate.concurrency);
        s->get("max_retries", c.evaluate.max_retries);
        s->get("backoff_ms", c.evaluate.backoff_ms);
        s->finish();
    }
    if (auto s = root.child("serve")) {
        s->get("host", c.serve.host);
        s->get("port", c.serve.port);
        s->get("subset_fraction", c.serve.subset_fraction);
        s->get("session_length", c.serve.session_length);
        s->get("export_token", c.serve.export_token);
        s->get("log", c.serve.log);
        s->get("static_dir", c.serve.static_dir);
        s->get("fsync", c.serve.fsync);
        s->get("inter_trial_blank_ms", c.serve.inter_trial_blank_ms);
        s->finish();
    }
    if (auto s = root.child("analyze")) {
        auto& o = c.analyze.options;
        s->get("rt_min_ms", o.rt_min_ms);
        s->get("rt_max_ms", o.rt_max_ms);
        s->get("invalid_as_wrong", o.invalid_as_wrong);
        if (const auto* v = s->find("max_disparity")) {
            if (v->is_null()) {
                o.max_disparity.reset();
            } else if (v->is_number_integer()) {
                o.max_disparity = v->get<int>();
            } else {
                throw ConfigError(s->key("max_disparity"), "expected an integer or null");
            }
        }
        s->get("ci_level", o.ci_level);
        s->get("responses", c.analyze.responses);
        s->finish();
    }
    root.finish();
    return c;
}

RunConfig load_config(const std::filesystem::path& path) {
    Json j;
    try {
        j = read_json(path);
    } catch (const Json::exception& e) {
        throw ConfigError("<file>", fmt::format("'{}' is not valid JSON: {}", path.string(), e.what()));
    }
    return config_from_json(j);
}

Json config_to_json(const RunConfig& c) {
    Json j;
    j["seed"] = c.seed ? Json(*c.seed) : Json(nullptr);
    j["output_dir"] = c.output_dir.string();
    j["workers"] = c.workers;
    Json scale = Json::object();
    for (Task t : kAllTasks) scale[std::string(to_string(t))] = c.scale.at(t);
    j["scale"] = scale;
    j["oddball"] = {{"concepts", c.concepts.string()},
                    {"cell_size", c.oddball.cell_size},
                    {"stroke_px", c.oddball.stroke_px},
                    {"margin", c.oddball.geometry.margin},
                    {"violation_margin", c.oddball.geometry.violation_margin},
                    {"max_attempts", c.oddball.geometry.max_attempts},
                    {"max_oddball_resamples", c.oddball.max_oddball_resamples}};
    j["numerosity"] = {{"image_size", c.numerosity.image_size},
                       {"mask_resolution", c.numerosity.placement.resolution},
                       {"scale_lo", c.numerosity.scale_lo},
                       {"scale_hi", c.numerosity.scale_hi},
                       {"overlap_lo", c.numerosity.placement.overlap_lo},
                       {"overlap_hi", c.numerosity.placement.overlap_hi},
                       {"visibility_floor", c.numerosity.placement.visibility_floor},
                       {"min_gap_px", c.numerosity.placement.min_gap_px}};
    j["rotation"] = {{"panel_size", c.rotation.panel_size}, {"gutter", c.rotation.gutter}};
    j["models"] = Json::array();
    for (const auto& m : c.models) j["models"].push_back(model_to_json(m));
    j["evaluate"] = {{"mode", std::string(harness::to_string(c.evaluate.mode))},
                     {"concurrency", c.evaluate.concurrency},
                     {"max_retries", c.evaluate.max_retries},
                     {"backoff_ms", c.evaluate.backoff_ms}};
    j["serve"] = {{"host", c.serve.host},
                  {"port", c.serve.port},
                  {"subset_fraction", c.serve.subset_fraction},
                  {"session_length", c.serve.session_length},
                  {"export_token", c.serve.export_token.empty() ? "" : "<set>"},
                  {"log", c.serve.log.string()},
                  {"static_dir", c.serve.static_dir.string()},
                  {"fsync", c.serve.fsync},
                  {"inter_trial_blank_ms", c.serve.inter_trial_blank_ms}};
    const auto& o = c.analyze.options;
    j["analyze"] = {{"rt_min_ms", o.rt_min_ms},
                    {"rt_max_ms", o.rt_max_ms},
                    {"invalid_as_wrong", o.invalid_as_wrong},
                    {"max_disparity", o.max_disparity ? Json(*o.max_disparity) : Json(nullptr)},
                    {"ci_level", o.ci_level},
                    {"responses", c.analyze.responses.string()}};
    return j;
}

void validate(const RunConfig& c) {
    check(c.seed.has_value(), "seed", "required (there is no implicit seed)");
    check(!c.output_dir.empty(), "output_dir", "must not be empty");
    check(c.workers >= 0, "workers", "must be >= 0 (0 = all cores)");
    for (const auto& [t, s] : c.scale) {
        check(std::isfinite(s) && s >= 0.01 && s <= 1.0, fmt::format("scale.{}", to_string(t)), "must be in [0.01, 1]");
    }
    check(c.oddball.cell_size >= 32, "oddball.cell_size", "must be >= 32");
    check(c.oddball.stroke_px > 0, "oddball.stroke_px", "must be > 0");
    check(c.oddball.geometry.margin >= 0 && c.oddball.geometry.margin < 0.5, "oddball.margin", "must be in [0, 0.5)");
    check(c.oddball.geometry.violation_margin > 0, "oddball.violation_margin", "must be > 0");
    check(c.oddball.geometry.max_attempts > 0, "oddball.max_attempts", "must be > 0");
    check(c.oddball.max_oddball_resamples > 0, "oddball.max_oddball_resamples", "must be > 0");
    check(c.numerosity.image_size >= 64, "numerosity.image_size", "must be >= 64");
    check(c.numerosity.placement.resolution >= 64, "numerosity.mask_resolution", "must be >= 64");
    check(c.numerosity.scale_lo > 0 && c.numerosity.scale_lo <= c.numerosity.scale_hi && c.numerosity.scale_hi <= 0.5,
          "numerosity.scale_lo", "need 0 < scale_lo <= scale_hi <= 0.5");
    const auto& p = c.numerosity.placement;
    check(p.overlap_lo > 0 && p.overlap_lo < p.overlap_hi && p.overlap_hi < 1, "numerosity.overlap_lo",
          "need 0 < overlap_lo < overlap_hi < 1");
    check(p.visibility_floor >= 0 && p.visibility_floor < 1, "numerosity.visibility_floor", "must be in [0, 1)");
    check(p.min_gap_px >= 0, "numerosity.min_gap_px", "must be >= 0");
    check(c.rotation.panel_size >= 32, "rotation.panel_size", "must be >= 32");
    check(c.rotation.gutter >= 0, "rotation.gutter", "must be >= 0");
    std::set<std::string> ids;
    for (std::size_t i = 0; i < c.models.size(); ++i) {
        const auto& m = c.models[i];
        const auto key = fmt::format("models[{}]", i);
        check(!m.id.empty(), key + ".id", "required");
        check(m.id.find_first_of("/\\ ") == std::string::npos, key + ".id", "must not contain '/', '\\' or spaces");
        check(harness::make_builtin(m.id, 0) == nullptr, key + ".id", "collides with a built-in model name");
        check(ids.insert(m.id).second, key + ".id", fmt::format("duplicate id '{}'", m.id));
        check(m.url.rfind("http://", 0) == 0 || m.url.rfind("https://", 0) == 0, key + ".url",
              "must start with http:// or https://");
        check(m.timeout_s > 0, key + ".timeout_s", "must be > 0");
        check(m.max_tokens >= 0, key + ".max_tokens", "must be >= 0");
    }
    check(c.evaluate.concurrency >= 1, "evaluate.concurrency", "must be >= 1");
    check(c.evaluate.max_retries >= 1, "evaluate.max_retries", "must be >= 1");
    check(c.evaluate.backoff_ms >= 0, "evaluate.backoff_ms", "must be >= 0");
    check(!c.serve.host.empty(), "serve.host", "must not be empty");
    check(c.serve.port >= 0 && c.serve.port <= 65535, "serve.port", "must be in [0, 65535]");
    check(c.serve.subset_fraction > 0 && c.serve.subset_fraction <= 1, "serve.subset_fraction", "must be in (0, 1]");
    check(c.serve.session_length >= 1, "serve.session_length", "must be >= 1");
    check(c.serve.inter_trial_blank_ms >= 0, "serve.inter_trial_blank_ms", "must be >= 0");
    const auto& o = c.analyze.options;
    check(o.rt_min_ms >= 0 && o.rt_min_ms < o.rt_max_ms, "analyze.rt_min_ms", "need 0 <= rt_min_ms < rt_max_ms");
    check(!o.max_disparity || (*o.max_disparity >= 0 && *o.max_disparity <= 180), "analyze.max_disparity",
          "must be in [0, 180] or null");
    check(o.ci_level > 0 && o.ci_level < 1, "analyze.ci_level", "must be in (0, 1)");
}

void write_config_echo(const RunConfig& config, const std::filesystem::path& dir) {
    write_json(dir / "config.json", config_to_json(config));
}

}  // namespace serialprobe
