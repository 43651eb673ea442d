// serialprobe: generate | evaluate | serve | analyze

#include <pthread.h>
#include <signal.h>
#include <unistd.h>

#include <chrono>
#include <cstdio>
#include <set>
#include <thread>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "serialprobe/analysis.hpp"
#include "serialprobe/concept.hpp"
#include "serialprobe/config.hpp"
#include "serialprobe/harness.hpp"
#include "serialprobe/numerosity.hpp"
#include "serialprobe/oddball.hpp"
#include "serialprobe/rotation.hpp"
#include "serialprobe/service.hpp"

namespace sp = serialprobe;
namespace fs = std::filesystem;

namespace {

struct Flags {
    std::string config;
    std::optional<double> scale;
    std::vector<std::string> tasks;
    std::string model;
    std::optional<std::uint64_t> seed;
    std::string out;
    std::optional<int> workers;
    std::optional<int> port;
    std::string mode;
};

class UsageError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

sp::RunConfig resolve(const Flags& f) {
    sp::RunConfig c = f.config.empty() ? sp::RunConfig{} : sp::load_config(f.config);
    if (f.config.empty() && !c.seed) c.seed = 0;
    if (f.seed) c.seed = *f.seed;
    if (f.scale) {
        for (auto& [t, s] : c.scale) s = *f.scale;
    }
    if (!f.out.empty()) c.output_dir = f.out;
    if (f.workers) c.workers = *f.workers;
    if (f.port) c.serve.port = *f.port;
    if (!f.mode.empty()) {
        const auto m = sp::harness::parse_mode(f.mode);
        if (!m) throw sp::ConfigError("evaluate.mode", "expected \"baseline\" or \"cot\"");
        c.evaluate.mode = *m;
    }
    sp::validate(c);
    return c;
}

std::vector<sp::Task> selected_tasks(const Flags& f) {
    if (f.tasks.empty()) return {sp::kAllTasks.begin(), sp::kAllTasks.end()};
    std::set<sp::Task> picked;
    for (const auto& name : f.tasks) {
        const auto t = sp::parse_task(name);
        if (!t) throw UsageError(fmt::format("unknown task '{}' (expected oddball, numerosity or rotation)", name));
        picked.insert(*t);
    }
    return {picked.begin(), picked.end()};
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

int cmd_generate(const Flags& f) {
    const auto c = resolve(f);
    fs::create_directories(c.output_dir);
    sp::write_config_echo(c, c.output_dir);
    std::size_t total = 0;
    for (sp::Task task : selected_tasks(f)) {
        const auto t0 = std::chrono::steady_clock::now();
        std::size_t n = 0;
        switch (task) {
            case sp::Task::Oddball: {
                const auto library = sp::dsl::load_library(c.concepts_path());
                sp::oddball::DatasetOptions o{*c.seed, c.oddball_per_concept(), c.workers, true};
                n = sp::oddball::generate_oddball_dataset(library, o, c.oddball, c.output_dir).trials.size();
                break;
            }
            case sp::Task::Numerosity: {
                sp::numerosity::DatasetOptions o{*c.seed, c.numerosity_per_cell(), c.workers, true};
                n = sp::numerosity::generate_numerosity_dataset(o, c.numerosity, c.output_dir).trials.size();
                break;
            }
            case sp::Task::Rotation: {
                sp::rotation::DatasetOptions o{*c.seed, c.rotation_fraction(), c.workers, true};
                n = sp::rotation::generate_rotation_dataset(sp::rotation::glyph_library(), o, c.rotation, c.output_dir)
                        .trials.size();
                break;
            }
        }
        total += n;
        const auto manifest = c.output_dir / sp::manifest_filename(task);
        fmt::print("{:<11} {:>5} trials  manifest sha256 {}  ({:.1f} s)\n", sp::to_string(task), n,
                   sp::sha256_file(manifest), seconds_since(t0));
        std::fflush(stdout);
    }
    fmt::print("total       {:>5} trials in {}\n", total, c.output_dir.string());
    return 0;
}

std::unique_ptr<sp::harness::ModelClient> make_model(const sp::RunConfig& c, const std::string& id) {
    if (auto m = sp::harness::make_builtin(id, *c.seed)) return m;
    for (const auto& m : c.models) {
        if (m.id == id) return std::make_unique<sp::harness::HttpChatModel>(m);
    }
    std::string known = "oracle, uniform_random, majority_class";
    for (const auto& m : c.models) known += ", " + m.id;
    throw UsageError(fmt::format("unknown model '{}' (known: {})", id, known));
}

int cmd_evaluate(const Flags& f) {
    const auto c = resolve(f);
    if (f.model.empty()) throw UsageError("evaluate needs --model <id>");
    auto model = make_model(c, f.model);
    sp::harness::EvalOptions options;
    options.mode = c.evaluate.mode;
    options.concurrency = c.evaluate.concurrency;
    options.max_retries = c.evaluate.max_retries;
    options.backoff_base = std::chrono::milliseconds(c.evaluate.backoff_ms);
    bool any = false;
    for (sp::Task task : selected_tasks(f)) {
        const auto path = c.output_dir / sp::manifest_filename(task);
        if (!fs::exists(path)) {
            if (!f.tasks.empty()) throw std::runtime_error(fmt::format("missing manifest '{}'; run generate first", path.string()));
            continue;
        }
        any = true;
        const auto manifest = sp::load_manifest(path);
        std::size_t last_pct = 0;
        options.progress = [&](std::size_t done, std::size_t total) {
            const std::size_t pct = done * 100 / std::max<std::size_t>(total, 1);
            if (pct >= last_pct + 10 || done == total) {
                last_pct = pct;
                fmt::print(stderr, "  {} {}/{}\n", sp::to_string(task), done, total);
            }
        };
        const auto t0 = std::chrono::steady_clock::now();
        const auto records = sp::harness::run_evaluation(manifest, *model, options);
        const auto out = sp::harness::eval_path(c.output_dir, model->id(), task, c.evaluate.mode);
        sp::harness::write_jsonl(out, records);
        sp::write_config_echo(c, out.parent_path());
        const auto s = sp::harness::score(records);
        fmt::print("{:<11} model={} mode={} n={} valid={} invalid={} error={} correct={} accuracy={:.4f} strict={:.4f} ({:.1f} s)\n",
                   sp::to_string(task), model->id(), sp::harness::to_string(c.evaluate.mode), s.n, s.n_valid,
                   s.n_invalid, s.n_error, s.n_correct, s.accuracy, s.accuracy_strict, seconds_since(t0));
        std::fflush(stdout);
    }
    if (!any) throw std::runtime_error(fmt::format("no manifests under '{}'; run generate first", c.output_dir.string()));
    return 0;
}

int cmd_serve(const Flags& f) {
    const auto c = resolve(f);
    const auto scfg = c.service_config();
    fs::create_directories(scfg.log_path.parent_path().empty() ? fs::path(".") : scfg.log_path.parent_path());
    sp::write_config_echo(c, scfg.log_path.parent_path().empty() ? fs::path(".") : scfg.log_path.parent_path());

    // Block the shutdown signals before any thread starts so only sigwait sees them.
    sigset_t signals;
    sigemptyset(&signals);
    sigaddset(&signals, SIGINT);
    sigaddset(&signals, SIGTERM);
    pthread_sigmask(SIG_BLOCK, &signals, nullptr);

    sp::service::ExperimentService svc(scfg);
    const auto state = svc.snapshot();
    sp::service::HttpServer server(svc, c.serve.static_dir);
    int port = c.serve.port;
    if (port == 0) {
        port = server.bind_any(c.serve.host);
        if (port < 0) throw std::runtime_error(fmt::format("cannot bind {}", c.serve.host));
    } else if (!server.bind(c.serve.host, port)) {
        throw std::runtime_error(fmt::format("cannot bind {}:{}", c.serve.host, port));
    }
    fmt::print("listening on http://{}:{} (log {}, {} sessions, {} responses replayed)\n", c.serve.host, port,
               scfg.log_path.string(), state.sessions.size(), state.responses.size());
    std::fflush(stdout);

    std::thread listener([&] {
        if (!server.listen_after_bind()) ::kill(::getpid(), SIGTERM);
    });
    int sig = 0;
    sigwait(&signals, &sig);
    server.stop();
    listener.join();
    fmt::print("shutting down on signal {}\n", sig);
    return 0;
}

int cmd_analyze(const Flags& f) {
    const auto c = resolve(f);
    std::vector<sp::Manifest> manifests;
    sp::Json inputs = sp::Json::object();
    for (sp::Task task : selected_tasks(f)) {
        const auto path = c.output_dir / sp::manifest_filename(task);
        if (!fs::exists(path)) continue;
        manifests.push_back(sp::load_manifest(path));
        inputs[sp::manifest_filename(task)] = sp::sha256_file(path);
    }
    if (manifests.empty()) throw std::runtime_error(fmt::format("no manifests under '{}'; run generate first", c.output_dir.string()));

    std::vector<sp::service::HumanResponse> responses;
    const fs::path responses_path = c.analyze.responses.empty() ? c.log_path() : c.analyze.responses;
    if (fs::exists(responses_path)) {
        responses = sp::analysis::load_responses(responses_path);
        // a task subset keeps only the responses that belong to it
        std::set<sp::Task> tasks;
        for (const auto& m : manifests) tasks.insert(m.task);
        std::erase_if(responses, [&](const auto& r) { return !tasks.count(r.task); });
        inputs["responses"] = sp::sha256_file(responses_path);
    } else if (!c.analyze.responses.empty()) {
        throw std::runtime_error(fmt::format("responses file '{}' does not exist", responses_path.string()));
    }

    auto evals = sp::analysis::load_evals(c.output_dir, c.evaluate.mode);
    if (!f.model.empty()) {
        if (!evals.count(f.model)) throw UsageError(fmt::format("no evaluations for model '{}'", f.model));
        evals = {{f.model, evals.at(f.model)}};
    }
    for (auto& [model, by_task] : evals) {
        std::erase_if(by_task, [&](const auto& kv) {
            return std::none_of(manifests.begin(), manifests.end(), [&](const auto& m) { return m.task == kv.first; });
        });
        for (const auto& [task, _] : by_task) {
            inputs[fs::relative(sp::harness::eval_path(c.output_dir, model, task, c.evaluate.mode), c.output_dir).string()] =
                sp::sha256_file(sp::harness::eval_path(c.output_dir, model, task, c.evaluate.mode));
        }
    }

    const auto s = sp::analysis::build_summaries(manifests, responses, evals, c.analyze.options);
    const auto out = c.output_dir / "summary";
    sp::analysis::write_summaries(s, out);
    sp::write_config_echo(c, out);

    sp::Json run;
    run["config"] = sp::config_to_json(c);
    run["seed"] = *c.seed;
    run["rt_bounds_ms"] = {c.analyze.options.rt_min_ms, c.analyze.options.rt_max_ms};
    run["invalid_as_wrong"] = c.analyze.options.invalid_as_wrong;
    run["inputs"] = inputs;
    run["n_responses"] = s.n_responses;
    run["n_valid_responses"] = s.n_valid_responses;
    run["dropped_participants"] = s.dropped_participants;
    sp::Json models = sp::Json::array();
    for (const auto& [m, _] : evals) models.push_back(m);
    run["models"] = models;
    sp::write_json(out / "run.json", run);

    fmt::print("{} responses ({} within RT bounds), {} participants dropped, {} model(s)\n", s.n_responses,
               s.n_valid_responses, s.dropped_participants.size(), evals.size());
    for (const auto& r : s.correlations) {
        if (r.r) {
            fmt::print("  {:<10} {:<38} {:<16} {:<14} n={:<4} r={:+.3f} p={:.3g}\n", r.task, r.analysis,
                       r.model_id.empty() ? "-" : r.model_id, r.filter.empty() ? "-" : r.filter, r.n, *r.r, *r.p);
        }
    }
    fmt::print("summaries written to {}\n", out.string());
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Serial-processing probes for vision-language models"};
    app.require_subcommand(1);
    app.fallthrough();
    Flags f;
    app.add_option("--config", f.config, "JSON run config")->check(CLI::ExistingFile);
    app.add_option("--scale", f.scale, "dataset scale for every task, in [0.01, 1]");
    app.add_option("--task", f.tasks, "restrict to tasks (oddball, numerosity, rotation)")->delimiter(',');
    app.add_option("--model", f.model, "model id: oracle, uniform_random, majority_class or a configured endpoint");
    app.add_option("--seed", f.seed, "root seed");
    app.add_option("--out", f.out, "output directory (overrides output_dir)");
    app.add_option("--workers", f.workers, "generator threads, 0 = all cores");
    app.add_option("--port", f.port, "serve: port, 0 = ephemeral");
    app.add_option("--mode", f.mode, "evaluate/analyze: baseline or cot");

    auto* gen = app.add_subcommand("generate", "build stimuli and manifests");
    auto* eval = app.add_subcommand("evaluate", "query a model on every trial");
    auto* serve = app.add_subcommand("serve", "run the human experiment service");
    auto* analyze = app.add_subcommand("analyze", "join responses and evaluations into summaries");

    CLI11_PARSE(app, argc, argv);
    try {
        if (gen->parsed()) return cmd_generate(f);
        if (eval->parsed()) return cmd_evaluate(f);
        if (serve->parsed()) return cmd_serve(f);
        if (analyze->parsed()) return cmd_analyze(f);
    } catch (const sp::ConfigError& e) {
        fmt::print(stderr, "error: {}\n", e.what());
        return 2;
    } catch (const UsageError& e) {
        fmt::print(stderr, "error: {}\n", e.what());
        return 2;
    } catch (const std::exception& e) {
        fmt::print(stderr, "error: {}\n", e.what());
        return 1;
    }
    return 0;
}
