#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "serialprobe/manifest.hpp"
#include "serialprobe/raster.hpp"
#include "serialprobe/rng.hpp"

namespace serialprobe::numerosity {

using geom::Vec2;
using raster::Polyline;
using raster::Rgb;

enum class Condition { UniformDistinct, UniformOverlapping, ColoredDistinct, ColoredOverlapping };

inline constexpr std::array<Condition, 4> kAllConditions{Condition::UniformDistinct, Condition::UniformOverlapping,
                                                         Condition::ColoredDistinct, Condition::ColoredOverlapping};

std::string_view to_string(Condition c) noexcept;
std::optional<Condition> parse_condition(std::string_view name) noexcept;
constexpr bool is_overlapping(Condition c) noexcept {
    return c == Condition::UniformOverlapping || c == Condition::ColoredOverlapping;
}
constexpr bool is_colored(Condition c) noexcept {
    return c == Condition::ColoredDistinct || c == Condition::ColoredOverlapping;
}

struct BlobShape {
    Polyline outline;          ///< unit canvas coordinates
    std::vector<Vec2> anchors; ///< the K pointed contour vertices, on the outline
    int n_points = 0;
    Vec2 centroid;
    std::int64_t area_px = 0;  ///< filled pixels at the working resolution
    Rgb color = raster::kBlack;
};

inline constexpr int kSamplesPerSegment = 64;
inline constexpr double kTangentScale = 0.3;
/// Fraction of an anchor's interior angle by which the tangents there turn
/// inward from the chord. Below 0.5 the two segments meeting at an anchor
/// cannot cross, so the tip stays a simple cusp.
inline constexpr double kTangentTurn = 0.25;

/// Blob centered at the origin. K in {3,4,5} anchors at angles
/// 2*pi*i/K + U(-pi/3K, pi/3K), radii scale * U(0.6, 1.0); Hermite segments
/// with tangent length 0.3 * chord leave and enter each anchor turned inward
/// from the chord by kTangentTurn of the interior angle there.
BlobShape generate_blob(Rng& rng, double scale);

/// The deterministic core of generate_blob.
BlobShape blob_from_anchors(std::vector<Vec2> anchors);

BlobShape translated(const BlobShape& shape, Vec2 offset);

/// Area-weighted polygon centroid.
Vec2 polygon_centroid(const Polyline& outline);

class PlacementExhausted : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct PlacementConfig {
    int resolution = 512;
    int min_gap_px = 4;
    int max_attempts = 5000;
    double overlap_lo = 0.60;
    double overlap_hi = 0.80;
    double visibility_floor = 0.10;
    double margin = 0.02;  ///< every outline vertex stays within [margin, 1 - margin]
};

struct Placement {
    std::vector<BlobShape> shapes;          ///< in draw order; later shapes occlude earlier ones
    std::vector<double> adjacent_overlaps;  ///< IoM of consecutive chain pairs; empty when distinct
    std::vector<double> visible_fraction;   ///< per shape, after occlusion by later shapes
};

/// Every placed shape rasterizes to one 8-connected component at the working
/// resolution (a very sharp tip can otherwise leave a detached pixel).
/// Distinct: rejection sampling with zero overlap and an edge gap.
/// Overlapping: chain placement, each consecutive pair bisected into the IoM band.
Placement place_shapes(std::vector<BlobShape> shapes, bool overlapping, Rng& rng, const PlacementConfig& config = {});

/// Per-shape visible fraction when drawn in order.
std::vector<double> visible_fractions(std::span<const raster::SpanMask> masks);

Rgb hsv_to_rgb(double hue_deg, double s, double v) noexcept;

/// Uniform: one random hue for all shapes. Colored: evenly spaced hues from a
/// random offset, shuffled. S = V = 0.8.
std::vector<double> assign_hues(std::size_t n, bool colored, Rng& rng);
void assign_colors(std::vector<BlobShape>& shapes, bool colored, Rng& rng);

struct NumerosityConfig {
    PlacementConfig placement;
    int image_size = 512;
    double scale_lo = 0.07;
    double scale_hi = 0.10;
    double outline_px = 2.0;
    int max_trial_restarts = 20;
};

struct NumerosityTrial {
    std::string trial_id;
    Condition condition = Condition::UniformDistinct;
    int numerosity = 1;
    double scale = 0;
    std::uint64_t seed = 0;
    std::vector<double> hues;
    Placement placement;
};

NumerosityTrial generate_numerosity_trial(Condition condition, int numerosity, std::string trial_id,
                                          std::uint64_t seed, const NumerosityConfig& config = {});

raster::StimulusImage render_numerosity(const NumerosityTrial& trial, const NumerosityConfig& config = {});

std::string trial_id(Condition condition, int numerosity, int index);
std::uint64_t trial_seed(std::uint64_t root_seed, Condition condition, int numerosity, int index);
std::string cell_label(Condition condition, int numerosity);

struct DatasetOptions {
    std::uint64_t seed = 0;
    int per_cell = 100;
    int workers = 0;
    bool write_images = true;
};

struct NumerosityDataset {
    std::vector<NumerosityTrial> trials;
    Json manifest;
};

/// 4 conditions x numerosities 1..8 x per_cell. Images at root/numerosity/<id>.png.
NumerosityDataset generate_numerosity_dataset(const DatasetOptions& options, const NumerosityConfig& config,
                                              const std::filesystem::path& root = {});

Json trial_to_json(const NumerosityTrial& trial);

}  // namespace serialprobe::numerosity
