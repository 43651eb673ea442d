#include "serialprobe/oddball.hpp"

#include <optional>

#include <fmt/format.h>

#include "serialprobe/parallel.hpp"

namespace serialprobe::oddball {

namespace {

bool violates_all(const geom::RealizedScene& scene, const std::vector<dsl::ConstraintPair>& removed,
                  double margin) {
    for (const auto& pair : removed) {
        if (geom::constraint_distance(scene, pair) < margin) return false;
    }
    return true;
}

}  // namespace

std::uint64_t trial_seed(std::uint64_t root_seed, const std::string& concept_name, int index) {
    return Rng::stream_seed(root_seed, "oddball/" + concept_name, static_cast<std::uint64_t>(index));
}

std::string trial_id(const std::string& concept_name, int index) {
    return fmt::format("oddball-{}-{:03d}", concept_name, index);
}

OddballScenes generate_oddball_trial(const dsl::ConceptProgram& program, std::string id, std::uint64_t seed,
                                     const OddballConfig& config) {
    Rng rng(seed);
    for (int restart = 0; restart < config.max_trial_restarts; ++restart) {
        OddballScenes out;
        out.trial.trial_id = id;
        out.trial.concept_name = program.name;
        out.trial.family = program.family;
        out.trial.mdl = dsl::compute_mdl(program);
        out.trial.seed = seed;
        out.trial.oddball_position = 1 + static_cast<int>(rng.below(6));
        auto relaxed = dsl::relax_constraints(program, 2, rng);
        out.trial.removed_constraints = relaxed.removed;

        const auto odd = static_cast<std::size_t>(out.trial.oddball_position - 1);
        for (std::size_t cell = 0; cell < 6; ++cell) {
            if (cell == odd) continue;
            out.trial.cell_seeds[cell] = rng.next();
            out.scenes[cell] = geom::realize(program, out.trial.cell_seeds[cell], config.geometry);
        }

        std::optional<geom::RealizedScene> oddball;
        for (int attempt = 0; attempt < config.max_oddball_resamples && !oddball; ++attempt) {
            const std::uint64_t s = rng.next();
            try {
                auto scene = geom::realize(relaxed.program, s, config.geometry);
                if (violates_all(scene, relaxed.removed, config.geometry.violation_margin)) {
                    out.trial.cell_seeds[odd] = s;
                    oddball = std::move(scene);
                }
            } catch (const geom::RealizationExhausted&) {
                // this relaxation may be hard to realize; try the next seed
            }
        }
        if (!oddball) continue;
        out.scenes[odd] = std::move(*oddball);
        return out;
    }
    throw geom::RealizationExhausted(program.name, config.max_trial_restarts * config.max_oddball_resamples);
}

std::array<geom::RealizedScene, 6> rebuild_scenes(const OddballTrial& trial, const dsl::ConceptProgram& program,
                                                  const OddballConfig& config) {
    const auto relaxed = dsl::remove_constraints(program, trial.removed_constraints);
    std::array<geom::RealizedScene, 6> scenes;
    for (std::size_t cell = 0; cell < 6; ++cell) {
        const bool odd = static_cast<int>(cell) == trial.oddball_position - 1;
        scenes[cell] = geom::realize(odd ? relaxed : program, trial.cell_seeds[cell], config.geometry);
    }
    return scenes;
}

OddballImages render_oddball(const OddballScenes& scenes, const OddballConfig& config) {
    OddballImages out;
    for (std::size_t i = 0; i < 6; ++i) {
        out.cells[i] = raster::render_scene(scenes.scenes[i], config.cell_size, config.stroke_px);
        out.cells[i].trial_id = scenes.trial.trial_id;
        out.cells[i].panel = {raster::PanelKind::ArrayCell, static_cast<int>(i) + 1};
    }
    out.array = raster::compose_oddball_array(out.cells, config.layout);
    return out;
}

Json trial_to_json(const OddballTrial& t) {
    const std::string dir = "oddball/" + t.trial_id;
    Json panels = Json::array();
    for (int i = 1; i <= 6; ++i) panels.push_back(fmt::format("{}/cell{}.png", dir, i));
    Json removed = Json::array();
    for (const auto& r : t.removed_constraints) removed.push_back({r.point, r.object});
    return Json{
        {"trial_id", t.trial_id},
        {"answer", t.oddball_position},
        {"cell", t.concept_name},
        {"image", dir + "/array.png"},
        {"panels", panels},
        {"concept", t.concept_name},
        {"family", std::string(dsl::to_string(t.family))},
        {"mdl", t.mdl},
        {"oddball_position", t.oddball_position},
        {"seed", t.seed},
        {"cell_seeds", t.cell_seeds},
        {"removed_constraints", removed},
    };
}

OddballTrial trial_from_json(const Json& j) {
    OddballTrial t;
    t.trial_id = j.at("trial_id").get<std::string>();
    t.concept_name = j.at("concept").get<std::string>();
    t.family = j.at("family").get<std::string>() == "elements" ? dsl::Family::Elements : dsl::Family::Constraints;
    t.mdl = j.at("mdl").get<int>();
    t.oddball_position = j.at("oddball_position").get<int>();
    t.seed = j.at("seed").get<std::uint64_t>();
    t.cell_seeds = j.at("cell_seeds").get<std::array<std::uint64_t, 6>>();
    for (const auto& r : j.at("removed_constraints")) {
        t.removed_constraints.push_back({r.at(0).get<std::string>(), r.at(1).get<std::string>()});
    }
    return t;
}

OddballDataset generate_oddball_dataset(const std::vector<dsl::ConceptProgram>& library,
                                        const DatasetOptions& options, const OddballConfig& config,
                                        const std::filesystem::path& root) {
    if (options.per_concept < 1) throw std::invalid_argument("per_concept must be >= 1");
    const std::size_t per = static_cast<std::size_t>(options.per_concept);
    const std::size_t n = library.size() * per;
    std::vector<OddballTrial> trials(n);

    parallel_for(n, options.workers, [&](std::size_t i) {
        const auto& program = library[i / per];
        const int k = static_cast<int>(i % per);
        auto scenes = generate_oddball_trial(program, trial_id(program.name, k),
                                             trial_seed(options.seed, program.name, k), config);
        if (!root.empty() && options.write_images) {
            const auto images = render_oddball(scenes, config);
            const auto dir = root / "oddball" / scenes.trial.trial_id;
            raster::write_png(dir / "array.png", images.array);
            for (std::size_t c = 0; c < 6; ++c) raster::write_png(dir / fmt::format("cell{}.png", c + 1), images.cells[c]);
        }
        trials[i] = std::move(scenes.trial);
    });

    std::string library_text;
    for (const auto& c : library) {
        library_text += fmt::format("concept {} {} {{\n{}}}\n", c.name, dsl::to_string(c.family), dsl::format_concept(c));
    }

    const auto& g = config.geometry;
    Json manifest{
        {"task", "oddball"},
        {"format_version", 1},
        {"seed", options.seed},
        {"per_concept", options.per_concept},
        {"n_trials", n},
        {"rng", std::string(kRngName)},
        {"library_sha256", sha256_hex(library_text)},
        {"geometry",
         {{"canvas", "unit square"},
          {"margin", g.margin},
          {"min_separation", g.min_separation},
          {"radius_min", g.radius_min},
          {"radius_max", g.radius_max},
          {"min_length", g.min_length},
          {"violation_margin", g.violation_margin},
          {"max_attempts", g.max_attempts},
          {"max_oddball_resamples", config.max_oddball_resamples}}},
        {"raster",
         {{"cell_size", config.cell_size}, {"stroke_px", config.stroke_px}, {"gutter", config.layout.gutter}}},
        {"notes",
         {{"mdl", "count of object statements, visible and invisible"},
          {"oddball", "two (point, object) constraint refs removed; each violated by >= violation_margin"},
          {"answer", "1-based oddball position in the 3x2 array, row-major"},
          {"mdl_distribution", "library MDL values are a curated choice"}}},
    };
    Json list = Json::array();
    for (const auto& t : trials) list.push_back(trial_to_json(t));
    manifest["trials"] = std::move(list);
    if (!root.empty()) write_json(root / manifest_filename(Task::Oddball), manifest);
    return {std::move(trials), std::move(manifest)};
}

}  // namespace serialprobe::oddball
