#pragma once

// Shared fixtures for unit and acceptance tests: scratch directories, CLI
// invocation, and a planted synthetic population for the analysis pipeline.

#include <unistd.h>

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include <fmt/format.h>

#include "serialprobe/analysis.hpp"
#include "serialprobe/concept.hpp"
#include "serialprobe/harness.hpp"
#include "serialprobe/manifest.hpp"
#include "serialprobe/rng.hpp"
#include "serialprobe/service.hpp"

namespace serialprobe::testing {

inline std::filesystem::path data_dir() { return SERIALPROBE_TEST_DATA_DIR; }
inline std::filesystem::path cli_path() { return SERIALPROBE_CLI_PATH; }

/// Fresh directory under the system temp dir, removed on destruction.
class ScratchDir {
public:
    explicit ScratchDir(const std::string& tag = "sp") {
        auto base = std::filesystem::temp_directory_path();
        for (int i = 0;; ++i) {
            path_ = base / fmt::format("{}-{}-{}", tag, ::getpid(), i);
            if (std::filesystem::create_directories(path_)) break;
        }
    }
    ~ScratchDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    ScratchDir(const ScratchDir&) = delete;
    ScratchDir& operator=(const ScratchDir&) = delete;
    const std::filesystem::path& path() const { return path_; }
    std::filesystem::path operator/(const std::string& rel) const { return path_ / rel; }

private:
    std::filesystem::path path_;
};

struct CliResult {
    int exit_code = -1;
    std::string output;  ///< stdout and stderr interleaved
};

/// Runs the serialprobe CLI with the given argument string.
inline CliResult run_cli(const std::string& args) {
    const std::string cmd = fmt::format("'{}' {} 2>&1", cli_path().string(), args);
    CliResult r;
    FILE* pipe = ::popen(cmd.c_str(), "r");
    if (pipe == nullptr) return r;
    char buf[4096];
    std::size_t n;
    while ((n = std::fread(buf, 1, sizeof buf, pipe)) > 0) r.output.append(buf, n);
    const int status = ::pclose(pipe);
    r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    return r;
}

inline std::string slurp(const std::filesystem::path& p) {
    std::FILE* f = std::fopen(p.c_str(), "rb");
    if (f == nullptr) return {};
    std::string s;
    char buf[65536];
    std::size_t n;
    while ((n = std::fread(buf, 1, sizeof buf, f)) > 0) s.append(buf, n);
    std::fclose(f);
    return s;
}

// ---- synthetic population ---------------------------------------------------

struct ConceptSpec {
    std::string name;
    int mdl = 1;
};

/// The shipped library's names and MDLs.
inline std::vector<ConceptSpec> library_concepts() {
    std::vector<ConceptSpec> out;
    for (const auto& p : dsl::load_library(data_dir() / "concepts.geo")) out.push_back({p.name, p.mdl});
    return out;
}

/// In-memory oddball manifest without images: per_concept trials per concept,
/// answers drawn from a seeded stream.
inline Manifest synthetic_oddball_manifest(const std::vector<ConceptSpec>& concepts, int per_concept,
                                           std::uint64_t seed) {
    Manifest m;
    m.task = Task::Oddball;
    m.header = {{"task", "oddball"}, {"synthetic", true}};
    for (const auto& c : concepts) {
        for (int k = 0; k < per_concept; ++k) {
            TrialInfo t;
            t.trial_id = fmt::format("oddball-{}-{:03d}", c.name, k);
            t.task = Task::Oddball;
            auto rng = Rng::stream(seed, "synthetic/answer/" + t.trial_id);
            t.answer = 1 + static_cast<int>(rng.below(6));
            t.cell = c.name;
            t.image = "oddball/" + t.trial_id + "/array.png";
            t.panels = {t.image};
            t.attributes = {{"trial_id", t.trial_id}, {"answer", t.answer}, {"cell", t.cell},
                            {"concept", c.name},      {"mdl", c.mdl},       {"family", "elements"}};
            m.trials.push_back(std::move(t));
        }
    }
    return m;
}

struct PopulationOptions {
    int participants = 74;
    int trials_per_participant = 50;
    double rt_base_ms = 500;
    double rt_per_mdl_ms = 300;
    double rt_noise_sd_ms = 50;
    double human_accuracy = 0.95;
    std::uint64_t seed = 1;
};

/// Humans with RT = base + per_mdl * MDL + N(0, sd). Trials are dealt to
/// participants from one shuffled order so each trial is judged about
/// participants * trials_per_participant / |trials| times.
inline std::vector<service::HumanResponse> synthetic_humans(const Manifest& m, const PopulationOptions& o) {
    std::vector<std::size_t> order(m.trials.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    auto deal = Rng::stream(o.seed, "synthetic/deal");
    deal.shuffle(std::span<std::size_t>(order));
    std::vector<service::HumanResponse> out;
    std::size_t next = 0;
    for (int p = 0; p < o.participants; ++p) {
        auto rng = Rng::stream(o.seed, "synthetic/participant", static_cast<std::uint64_t>(p));
        const std::string sid = fmt::format("p{:04d}", p);
        for (int k = 0; k < o.trials_per_participant; ++k) {
            const auto& t = m.trials[order[next++ % order.size()]];
            const int mdl = t.attributes.at("mdl").get<int>();
            service::HumanResponse r;
            r.session_id = sid;
            r.trial_id = t.trial_id;
            r.task = m.task;
            r.rt_ms = o.rt_base_ms + o.rt_per_mdl_ms * mdl + o.rt_noise_sd_ms * rng.normal();
            r.answer = rng.uniform() < o.human_accuracy ? t.answer : (t.answer % 6) + 1;
            r.server_received_at = "2026-01-01T00:00:00.000Z";
            out.push_back(r);
        }
    }
    return out;
}

/// Model correct on the first round(accuracy(mdl) * n) trials of each concept.
template <typename AccuracyFn>
std::vector<harness::EvalRecord> synthetic_model(const Manifest& m, const std::string& model_id, AccuracyFn accuracy) {
    std::map<std::string, std::vector<const TrialInfo*>> by_concept;
    for (const auto& t : m.trials) by_concept[t.cell].push_back(&t);
    std::vector<harness::EvalRecord> out;
    for (const auto& [concept_name, trials] : by_concept) {
        const int mdl = trials.front()->attributes.at("mdl").template get<int>();
        const auto n_correct = static_cast<std::size_t>(std::lround(accuracy(mdl) * static_cast<double>(trials.size())));
        for (std::size_t k = 0; k < trials.size(); ++k) {
            harness::EvalRecord r;
            r.trial_id = trials[k]->trial_id;
            r.model_id = model_id;
            r.task = m.task;
            r.parsed_answer = k < n_correct ? trials[k]->answer : (trials[k]->answer % 6) + 1;
            r.correct = k < n_correct;
            r.raw_text = fmt::format("[{}]", *r.parsed_answer);
            r.attempt_count = 1;
            out.push_back(r);
        }
    }
    return out;
}

}  // namespace serialprobe::testing
