#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "serialprobe/analysis.hpp"
#include "serialprobe/harness.hpp"
#include "serialprobe/manifest.hpp"
#include "serialprobe/numerosity.hpp"
#include "serialprobe/oddball.hpp"
#include "serialprobe/rotation.hpp"
#include "serialprobe/service.hpp"

namespace serialprobe {

/// Raised for malformed or out-of-range configuration. `key` is the dotted
/// path of the offending entry, e.g. "scale.rotation".
class ConfigError : public std::runtime_error {
public:
    ConfigError(std::string key, const std::string& message);
    std::string key;
};

struct EvaluateSettings {
    harness::Mode mode = harness::Mode::Baseline;
    int concurrency = 4;
    int max_retries = 3;
    int backoff_ms = 1000;
};

struct ServeSettings {
    std::string host = "127.0.0.1";
    int port = 8080;  ///< 0 = ephemeral
    double subset_fraction = 0.20;
    int session_length = 50;
    std::string export_token;
    std::filesystem::path log;         ///< empty = <output_dir>/service/events.jsonl
    std::filesystem::path static_dir;  ///< empty = no static assets
    bool fsync = false;
    int inter_trial_blank_ms = 500;    ///< blank between trials in the participant UI; recorded only
};

struct AnalyzeSettings {
    analysis::AnalysisOptions options;
    std::filesystem::path responses;  ///< empty = the service log when present
};

struct RunConfig {
    std::optional<std::uint64_t> seed;
    std::filesystem::path output_dir = "out";
    int workers = 0;
    std::map<Task, double> scale{{Task::Oddball, 1.0}, {Task::Numerosity, 1.0}, {Task::Rotation, 1.0}};

    std::filesystem::path concepts;  ///< empty = the shipped library
    oddball::OddballConfig oddball;
    numerosity::NumerosityConfig numerosity;
    rotation::RotationConfig rotation;

    std::vector<harness::HttpModelConfig> models;
    EvaluateSettings evaluate;
    ServeSettings serve;
    AnalyzeSettings analyze;

    /// Trials per concept / per cell / total after scaling.
    int oddball_per_concept() const;
    int numerosity_per_cell() const;
    double rotation_fraction() const;

    std::filesystem::path concepts_path() const;
    std::filesystem::path log_path() const;
    service::ServiceConfig service_config() const;
};

/// Directory holding the shipped data (concept library, prompt files).
std::filesystem::path data_dir();

/// Parses a config object over the defaults. Unknown keys are errors so typos
/// do not silently fall back to defaults. Relative paths are kept as written
/// (relative to the working directory).
RunConfig config_from_json(const Json& j);
RunConfig load_config(const std::filesystem::path& path);

/// Fully resolved config, every key present. The export token is redacted.
Json config_to_json(const RunConfig& config);

/// Range checks; throws ConfigError with the key path.
void validate(const RunConfig& config);

/// Writes config.json (the resolved config) into `dir`.
void write_config_echo(const RunConfig& config, const std::filesystem::path& dir);

}  // namespace serialprobe
