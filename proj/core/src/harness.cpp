#include "serialprobe/harness.hpp"

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <fstream>
#include <mutex>
#include <regex>
#include <sstream>
#include <thread>

#include <fmt/format.h>
#include <httplib.h>
#include <openssl/evp.h>

#include "serialprobe/parallel.hpp"
#include "serialprobe/rng.hpp"

namespace serialprobe::harness {

namespace {

constexpr std::string_view k_oddball_baseline = R"(Which of the 6 shapes is different from the others? 

Return only the number of the odd one out in square brackets (e.g., [3]) without any additional reasoning or justification.)";

constexpr std::string_view k_oddball_cot = R"(Which of the 6 shapes is different from the others?

Analyze the relations between the parts of each stimulus to identify the stimulus that is different from the rest. Return your reasoning followed by the integer label of the odd one out enclosed in square brackets (e.g., [3]).)";

constexpr std::string_view k_rotation_baseline = R"(You will be shown two objects that are rotated at different angles. Your task is to determine whether these objects are:

A) The **SAME** object shown at different rotations
B) **DIFFERENT** objects that are mirror images of each other (these mirror images may also be rotated at different angles)

Even when rotated, identical objects will have the same features in the same arrangement. Mirror images will have reversed features that cannot be matched by rotation alone.

## Response Format:
[1] - The objects are identical but rotated differently
[0] - The objects are mirror images of each other

Please just include your final answer in the format [1] or [0] without any additional reasoning or justification.)";

constexpr std::string_view k_rotation_cot = R"(You will be shown two objects that are rotated at different angles. Your task is to determine whether these objects are:

A) The **SAME** object shown at different rotations
B) **DIFFERENT** objects that are mirror images of each other (these mirror images may also be rotated at different angles)

Even when rotated, identical objects will have the same features in the same arrangement. Mirror images will have reversed features that cannot be matched by rotation alone.

## Response Format:
[1] - The objects are identical but rotated differently
[0] - The objects are mirror images of each other

Please include your reasoning followed by your final answer in the format [1] or [0].)";

constexpr std::string_view k_numerosity_baseline = R"(The following images contains 1 or more objects that may or may not be overlapping.

Count the total number of objects in the scene, and return your final answer as an integer enclosed in square brackets (e.g., [10]).)";

constexpr std::string_view k_numerosity_cot = R"(The following images contain 1 or more objects that may or may not be overlapping.

Count the total number of objects in the scene one at a time. Once you have described all objects, return your final answer as an integer enclosed in square brackets (e.g., [10]).)";

std::string read_file(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error(fmt::format("cannot open '{}'", path.string()));
    std::ostringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

std::string bracketed(int v) { return fmt::format("[{}]", v); }

}  // namespace

std::string_view to_string(Mode mode) noexcept { return mode == Mode::Baseline ? "baseline" : "cot"; }

std::optional<Mode> parse_mode(std::string_view name) noexcept {
    if (name == "baseline") return Mode::Baseline;
    if (name == "cot") return Mode::CoT;
    return std::nullopt;
}

std::string_view prompt_text(Task task, Mode mode) noexcept {
    const bool cot = mode == Mode::CoT;
    switch (task) {
        case Task::Oddball: return cot ? k_oddball_cot : k_oddball_baseline;
        case Task::Numerosity: return cot ? k_numerosity_cot : k_numerosity_baseline;
        case Task::Rotation: return cot ? k_rotation_cot : k_rotation_baseline;
    }
    return {};
}

std::string prompt_filename(Task task, Mode mode) {
    return fmt::format("{}_{}.txt", to_string(task), to_string(mode));
}

std::optional<int> parse_bracketed_answer(std::string_view text, Task task) {
    static const std::regex pattern(R"(\[\s*([+-]?\d+)\s*\])");
    std::optional<std::string> last;
    const std::string s(text);
    for (auto it = std::sregex_iterator(s.begin(), s.end(), pattern); it != std::sregex_iterator(); ++it) {
        last = (*it)[1].str();
    }
    if (!last) return std::nullopt;
    if (last->size() > 12) return std::nullopt;
    const long long v = std::stoll(*last);
    if (!answer_range(task).contains(v)) return std::nullopt;
    return static_cast<int>(v);
}

std::string OracleModel::complete(const ModelQuery& query) { return bracketed(query.ground_truth); }

std::string UniformRandomModel::complete(const ModelQuery& query) {
    auto rng = Rng::stream(seed_, "uniform_random/" + query.trial_id);
    const auto range = guess_range(query.task);
    return bracketed(static_cast<int>(rng.between(range.lo, range.hi)));
}

std::string MajorityClassModel::complete(const ModelQuery&) { return bracketed(value_); }

std::unique_ptr<ModelClient> make_builtin(std::string_view name, std::uint64_t seed) {
    if (name == "oracle") return std::make_unique<OracleModel>();
    if (name == "uniform_random") return std::make_unique<UniformRandomModel>(seed);
    if (name == "majority_class") return std::make_unique<MajorityClassModel>(1);
    return nullptr;
}

std::string base64_encode(std::string_view bytes) {
    std::string out(4 * ((bytes.size() + 2) / 3), '\0');
    const int n = EVP_EncodeBlock(reinterpret_cast<unsigned char*>(out.data()),
                                  reinterpret_cast<const unsigned char*>(bytes.data()), static_cast<int>(bytes.size()));
    out.resize(static_cast<std::size_t>(n));
    return out;
}

HttpChatModel::HttpChatModel(HttpModelConfig config) : config_(std::move(config)) {
    static const std::regex url(R"(^(https?://[^/]+)(/.*)?$)");
    std::smatch m;
    if (!std::regex_match(config_.url, m, url)) {
        throw std::invalid_argument(fmt::format("model url '{}' is not http(s)://host[:port]/path", config_.url));
    }
    origin_ = m[1].str();
    path_ = m[2].matched ? m[2].str() : "/v1/chat/completions";
    if (config_.id.empty()) config_.id = config_.model;
}

Json HttpChatModel::request_body(const ModelQuery& query) const {
    Json content = Json::array();
    content.push_back({{"type", "text"}, {"text", query.prompt}});
    for (const auto& image : query.images) {
        content.push_back({{"type", "image_url"},
                           {"image_url", {{"url", "data:image/png;base64," + base64_encode(read_file(image))}}}});
    }
    Json body{{"model", config_.model}, {"messages", Json::array({Json{{"role", "user"}, {"content", content}}})}};
    if (config_.temperature) body["temperature"] = *config_.temperature;
    if (config_.max_tokens > 0) body["max_tokens"] = config_.max_tokens;
    return body;
}

std::string HttpChatModel::complete(const ModelQuery& query) {
    const auto body = request_body(query).dump();
    httplib::Client client(origin_);
    const auto secs = static_cast<time_t>(config_.timeout_s);
    client.set_connection_timeout(secs);
    client.set_read_timeout(secs);
    client.set_write_timeout(secs);
    httplib::Headers headers;
    if (!config_.auth_env.empty()) {
        const char* token = std::getenv(config_.auth_env.c_str());
        if (token == nullptr) throw std::runtime_error(fmt::format("environment variable {} is not set", config_.auth_env));
        headers.emplace("Authorization", std::string("Bearer ") + token);
    }
    auto res = client.Post(path_, headers, body, "application/json");
    if (!res) throw TransportError(fmt::format("{}: {}", origin_, httplib::to_string(res.error())));
    if (res->status != 200) throw TransportError(fmt::format("{}{}: HTTP {}", origin_, path_, res->status));
    try {
        const auto reply = Json::parse(res->body);
        const auto& msg = reply.at("choices").at(0).at("message").at("content");
        if (msg.is_string()) return msg.get<std::string>();
        // some servers return content as a list of parts
        std::string text;
        for (const auto& part : msg) {
            if (part.value("type", "") == "text") text += part.value("text", "");
        }
        return text;
    } catch (const Json::exception& e) {
        throw TransportError(fmt::format("malformed reply: {}", e.what()));
    }
}

Json record_to_json(const EvalRecord& r) {
    return Json{
        {"trial_id", r.trial_id},
        {"model_id", r.model_id},
        {"task", std::string(to_string(r.task))},
        {"mode", std::string(to_string(r.mode))},
        {"raw_text", r.raw_text},
        {"parsed_answer", r.parsed_answer ? Json(*r.parsed_answer) : Json(nullptr)},
        {"correct", r.correct ? Json(*r.correct) : Json(nullptr)},
        {"latency_ms", r.latency_ms},
        {"attempt_count", r.attempt_count},
        {"error", r.error},
    };
}

EvalRecord record_from_json(const Json& j) {
    EvalRecord r;
    r.trial_id = j.at("trial_id").get<std::string>();
    r.model_id = j.at("model_id").get<std::string>();
    const auto task = parse_task(j.at("task").get<std::string>());
    if (!task) throw std::runtime_error("eval record: unknown task");
    r.task = *task;
    r.mode = parse_mode(j.at("mode").get<std::string>()).value_or(Mode::Baseline);
    r.raw_text = j.value("raw_text", "");
    if (!j.at("parsed_answer").is_null()) r.parsed_answer = j.at("parsed_answer").get<int>();
    if (!j.at("correct").is_null()) r.correct = j.at("correct").get<bool>();
    r.latency_ms = j.value("latency_ms", 0.0);
    r.attempt_count = j.value("attempt_count", 0);
    r.error = j.value("error", "");
    return r;
}

std::vector<EvalRecord> run_evaluation(const Manifest& manifest, ModelClient& model, const EvalOptions& options) {
    const auto n = manifest.trials.size();
    std::vector<EvalRecord> records(n);
    std::atomic<std::size_t> done{0};
    std::mutex progress_mutex;
    const std::string prompt(prompt_text(manifest.task, options.mode));

    parallel_for(n, std::max(1, options.concurrency), [&](std::size_t i) {
        const auto& trial = manifest.trials[i];
        ModelQuery q;
        q.trial_id = trial.trial_id;
        q.task = manifest.task;
        q.mode = options.mode;
        q.prompt = prompt;
        q.images = {manifest.root / trial.image};
        q.ground_truth = trial.answer;

        EvalRecord& r = records[i];
        r.trial_id = trial.trial_id;
        r.model_id = model.id();
        r.task = manifest.task;
        r.mode = options.mode;
        for (int attempt = 1; attempt <= options.max_retries + 1; ++attempt) {
            r.attempt_count = attempt;
            const auto t0 = std::chrono::steady_clock::now();
            try {
                r.raw_text = model.complete(q);
                r.latency_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
                r.error.clear();
                break;
            } catch (const TransportError& e) {
                r.error = e.what();
                if (attempt <= options.max_retries) std::this_thread::sleep_for(options.backoff_base * (1 << (attempt - 1)));
            } catch (const std::exception& e) {
                r.error = e.what();
                break;
            }
        }
        if (r.error.empty()) {
            r.parsed_answer = parse_bracketed_answer(r.raw_text, manifest.task);
            if (r.parsed_answer) r.correct = *r.parsed_answer == trial.answer;
        }
        const auto k = ++done;
        if (options.progress) {
            std::lock_guard lock(progress_mutex);
            options.progress(k, n);
        }
    });
    std::sort(records.begin(), records.end(), [](const auto& a, const auto& b) { return a.trial_id < b.trial_id; });
    return records;
}

Score score(const std::vector<EvalRecord>& records) {
    Score s;
    s.n = records.size();
    for (const auto& r : records) {
        if (!r.error.empty()) {
            ++s.n_error;
        } else if (!r.correct) {
            ++s.n_invalid;
        } else {
            ++s.n_valid;
            if (*r.correct) ++s.n_correct;
        }
    }
    if (s.n_valid > 0) s.accuracy = static_cast<double>(s.n_correct) / static_cast<double>(s.n_valid);
    if (s.n > 0) {
        s.accuracy_strict = static_cast<double>(s.n_correct) / static_cast<double>(s.n);
        s.invalid_rate = static_cast<double>(s.n_invalid + s.n_error) / static_cast<double>(s.n);
    }
    return s;
}

std::filesystem::path eval_path(const std::filesystem::path& root, const std::string& model_id, Task task, Mode mode) {
    const std::string suffix = mode == Mode::CoT ? "_cot" : "";
    return root / "evals" / model_id / fmt::format("{}{}.jsonl", to_string(task), suffix);
}

void write_jsonl(const std::filesystem::path& path, const std::vector<EvalRecord>& records) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error(fmt::format("cannot write '{}'", path.string()));
    for (const auto& r : records) f << record_to_json(r).dump() << '\n';
}

std::vector<EvalRecord> read_jsonl(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error(fmt::format("cannot open '{}'", path.string()));
    std::vector<EvalRecord> out;
    std::string line;
    while (std::getline(f, line)) {
        if (line.empty()) continue;
        out.push_back(record_from_json(Json::parse(line)));
    }
    return out;
}

}  // namespace serialprobe::harness
