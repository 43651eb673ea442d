#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "serialprobe/manifest.hpp"
#include "serialprobe/task.hpp"

namespace serialprobe::harness {

enum class Mode { Baseline, CoT };

std::string_view to_string(Mode mode) noexcept;
std::optional<Mode> parse_mode(std::string_view name) noexcept;

/// The six prompt templates, byte for byte.
std::string_view prompt_text(Task task, Mode mode) noexcept;

/// File name of a template under data/prompts/, e.g. "oddball_cot.txt".
std::string prompt_filename(Task task, Mode mode);

/// Last "[integer]" in the text, range-checked for the task. nullopt = Invalid.
std::optional<int> parse_bracketed_answer(std::string_view text, Task task);

struct ModelQuery {
    std::string trial_id;
    Task task = Task::Oddball;
    Mode mode = Mode::Baseline;
    std::string prompt;
    std::vector<std::filesystem::path> images;
    /// Only the built-in reference models look at this.
    int ground_truth = 0;
};

class TransportError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// One request = prompt + images -> text. Throws TransportError on failures
/// worth retrying.
class ModelClient {
public:
    virtual ~ModelClient() = default;
    virtual std::string id() const = 0;
    virtual std::string complete(const ModelQuery& query) = 0;
};

class OracleModel final : public ModelClient {
public:
    std::string id() const override { return "oracle"; }
    std::string complete(const ModelQuery& query) override;
};

/// Uniform over the task's guess range, seeded per (seed, trial id).
class UniformRandomModel final : public ModelClient {
public:
    explicit UniformRandomModel(std::uint64_t seed) : seed_(seed) {}
    std::string id() const override { return "uniform_random"; }
    std::string complete(const ModelQuery& query) override;

private:
    std::uint64_t seed_;
};

class MajorityClassModel final : public ModelClient {
public:
    explicit MajorityClassModel(int value = 1) : value_(value) {}
    std::string id() const override { return "majority_class"; }
    std::string complete(const ModelQuery& query) override;

private:
    int value_;
};

struct HttpModelConfig {
    std::string id;                ///< label used in output paths
    std::string url;               ///< full endpoint, e.g. http://127.0.0.1:8000/v1/chat/completions
    std::string model;             ///< "model" field of the request
    std::string auth_env;          ///< environment variable holding a bearer token; empty = no auth
    double timeout_s = 120.0;
    std::optional<double> temperature;
    int max_tokens = 0;            ///< 0 = omit
};

/// Chat-completions wire shape: one user message with a text part and one
/// base64 PNG image part per attachment; reply = choices[0].message.content.
class HttpChatModel final : public ModelClient {
public:
    explicit HttpChatModel(HttpModelConfig config);
    std::string id() const override { return config_.id; }
    std::string complete(const ModelQuery& query) override;

    /// Request body for a query (exposed for tests).
    Json request_body(const ModelQuery& query) const;

private:
    HttpModelConfig config_;
    std::string origin_;
    std::string path_;
};

/// Names "oracle", "uniform_random", "majority_class"; nullptr otherwise.
std::unique_ptr<ModelClient> make_builtin(std::string_view name, std::uint64_t seed);

std::string base64_encode(std::string_view bytes);

struct EvalRecord {
    std::string trial_id;
    std::string model_id;
    Task task = Task::Oddball;
    Mode mode = Mode::Baseline;
    std::string raw_text;
    std::optional<int> parsed_answer;
    std::optional<bool> correct;
    double latency_ms = 0;
    int attempt_count = 0;
    std::string error;  ///< last transport error when every attempt failed
};

Json record_to_json(const EvalRecord& r);
EvalRecord record_from_json(const Json& j);

struct EvalOptions {
    Mode mode = Mode::Baseline;
    int concurrency = 4;
    int max_retries = 3;
    std::chrono::milliseconds backoff_base{1000};  ///< waits base, 2*base, 4*base, ...
    std::function<void(std::size_t done, std::size_t total)> progress;
};

/// One record per manifest trial, sorted by trial id. Transport failures are
/// retried; unparseable answers are recorded as-is. Never throws per trial.
std::vector<EvalRecord> run_evaluation(const Manifest& manifest, ModelClient& model, const EvalOptions& options);

struct Score {
    std::size_t n = 0;
    std::size_t n_valid = 0;
    std::size_t n_invalid = 0;  ///< answered but unparseable or out of range
    std::size_t n_error = 0;    ///< transport failure after all retries
    std::size_t n_correct = 0;
    double accuracy = 0;          ///< n_correct / n_valid
    double accuracy_strict = 0;   ///< n_correct / n (invalid and failed count as wrong)
    double invalid_rate = 0;      ///< (n_invalid + n_error) / n
};

Score score(const std::vector<EvalRecord>& records);

/// evals/<model>/<task>.jsonl, or <task>_cot.jsonl for chain-of-thought runs.
std::filesystem::path eval_path(const std::filesystem::path& root, const std::string& model_id, Task task, Mode mode);

void write_jsonl(const std::filesystem::path& path, const std::vector<EvalRecord>& records);
std::vector<EvalRecord> read_jsonl(const std::filesystem::path& path);

}  // namespace serialprobe::harness
