#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "serialprobe/concept.hpp"
#include "serialprobe/geometry.hpp"
#include "serialprobe/manifest.hpp"
#include "serialprobe/raster.hpp"

namespace serialprobe::oddball {

struct OddballConfig {
    geom::GeometryConfig geometry;
    int cell_size = 256;
    double stroke_px = 3.0;
    raster::ArrayLayout layout;
    int max_oddball_resamples = 200;
    int max_trial_restarts = 20;
};

struct OddballTrial {
    std::string trial_id;
    std::string concept_name;
    dsl::Family family = dsl::Family::Elements;
    int mdl = 0;
    int oddball_position = 1;  ///< 1-based
    std::array<std::uint64_t, 6> cell_seeds{};
    std::vector<dsl::ConstraintPair> removed_constraints;
    std::uint64_t seed = 0;

    bool operator==(const OddballTrial&) const = default;
};

/// Geometry of one trial, cell order = display order.
struct OddballScenes {
    OddballTrial trial;
    std::array<geom::RealizedScene, 6> scenes;
};

/// Five independent realizations of `program` plus one realization of the
/// program with two constraints removed, re-sampled until each removed
/// constraint is violated by at least the configured margin.
OddballScenes generate_oddball_trial(const dsl::ConceptProgram& program, std::string trial_id,
                                     std::uint64_t seed, const OddballConfig& config = {});

/// Rebuilds the six scenes from a trial record (seeds + removed constraints).
std::array<geom::RealizedScene, 6> rebuild_scenes(const OddballTrial& trial, const dsl::ConceptProgram& program,
                                                  const OddballConfig& config = {});

struct OddballImages {
    std::array<raster::StimulusImage, 6> cells;
    raster::StimulusImage array;
};

OddballImages render_oddball(const OddballScenes& scenes, const OddballConfig& config = {});

std::uint64_t trial_seed(std::uint64_t root_seed, const std::string& concept_name, int index);
std::string trial_id(const std::string& concept_name, int index);

struct DatasetOptions {
    std::uint64_t seed = 0;
    int per_concept = 100;
    int workers = 0;
    bool write_images = true;
};

struct OddballDataset {
    std::vector<OddballTrial> trials;
    Json manifest;
};

/// Generates library.size() * per_concept trials. When `root` is non-empty the
/// manifest is written to root/oddball_manifest.json and images under
/// root/oddball/<trial_id>/{array,cell1..cell6}.png.
OddballDataset generate_oddball_dataset(const std::vector<dsl::ConceptProgram>& library,
                                        const DatasetOptions& options, const OddballConfig& config,
                                        const std::filesystem::path& root = {});

Json trial_to_json(const OddballTrial& trial);
OddballTrial trial_from_json(const Json& j);

}  // namespace serialprobe::oddball
