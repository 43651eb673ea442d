#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "serialprobe/manifest.hpp"
#include "serialprobe/raster.hpp"

namespace serialprobe::rotation {

using raster::Polyline;

/// A letter drawn as filled rectangles on a 5x7 grid, in a box of height 1
/// (x right, y down).
struct Glyph {
    char label = '?';
    std::vector<Polyline> rings;
    double width = 5.0 / 7.0;
    double height = 1.0;
    double chirality_score = 1.0;
};

inline constexpr double kChiralityLimit = 0.98;
inline constexpr int kChiralityResolution = 128;

/// Rectangles from a row-major bitmap ('#' = ink), one rectangle per horizontal run.
Glyph glyph_from_bitmap(char label, const std::vector<std::string>& rows);

/// The 26 shipped glyphs A-Z with chirality scores filled in.
const std::vector<Glyph>& glyph_library();

/// Bitmap rows for a library letter.
const std::vector<std::string>& glyph_bitmap(char label);

/// Glyph placed in a unit panel: optional mirror about the vertical axis
/// through the glyph box center, then rotation by theta_deg (counterclockwise
/// as displayed) about the same center, scaled to a 0.8 diagonal and centered
/// at (0.5, 0.5). theta is taken mod 360.
std::vector<Polyline> transform_glyph(const Glyph& glyph, bool mirrored, double theta_deg);

/// Rotation about the panel center (counterclockwise as displayed).
std::vector<Polyline> rotate_rings(const std::vector<Polyline>& rings, double theta_deg, geom::Vec2 center = {0.5, 0.5});

/// Max over 1-degree rotations of IoU(mirror(g), rotate(g, phi)) at 128^2.
double check_chirality(const Glyph& glyph, int resolution = kChiralityResolution);

/// Max over 1-degree rotations phi of IoU(right, rotate(left, phi)).
double max_rotational_iou(const std::vector<Polyline>& left, const std::vector<Polyline>& right,
                          int resolution = kChiralityResolution);

class ChiralityError : public std::runtime_error {
public:
    ChiralityError(std::vector<char> failing);
    std::vector<char> failing;
};

struct RotationTrial {
    std::string trial_id;
    char label = 'A';
    int theta_deg = 0;
    bool pair_same = true;
    bool first_mirrored = false;
    int order = 0;  ///< position in the randomized trial order

    int disparity_deg() const noexcept { return theta_deg <= 180 ? theta_deg : 360 - theta_deg; }
    bool right_mirrored() const noexcept { return first_mirrored != !pair_same; }
    int answer() const noexcept { return pair_same ? 1 : 0; }
};

std::string trial_id(char label, int theta_deg, bool pair_same, bool first_mirrored);
std::string cell_label(int theta_deg, bool pair_same, bool first_mirrored);

struct RotationConfig {
    int panel_size = 256;
    int gutter = 8;
};

struct RotationImages {
    raster::StimulusImage left;
    raster::StimulusImage right;
    raster::StimulusImage pair;
};

RotationImages render_rotation(const RotationTrial& trial, const Glyph& glyph, const RotationConfig& config = {});

/// All 26 x 36 x 4 trials in canonical order (before shuffling).
std::vector<RotationTrial> all_trials();

struct DatasetOptions {
    std::uint64_t seed = 0;
    double scale = 1.0;  ///< keeps the first ceil(3744 * scale) trials of the shuffled order
    int workers = 0;
    bool write_images = true;
};

struct RotationDataset {
    std::vector<RotationTrial> trials;
    Json manifest;
};

/// Checks every glyph against the chirality gate, shuffles the full trial
/// list, keeps a prefix, and writes root/rotation/<id>/{pair,left,right}.png.
RotationDataset generate_rotation_dataset(const std::vector<Glyph>& glyphs, const DatasetOptions& options,
                                          const RotationConfig& config, const std::filesystem::path& root = {});

Json trial_to_json(const RotationTrial& trial);

}  // namespace serialprobe::rotation
