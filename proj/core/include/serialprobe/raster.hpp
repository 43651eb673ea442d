#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "serialprobe/geometry.hpp"

namespace serialprobe::raster {

using geom::Vec2;

/// Closed polyline; the closing edge back to the first vertex is implicit.
using Polyline = std::vector<Vec2>;

struct Rgb {
    std::uint8_t r = 255;
    std::uint8_t g = 255;
    std::uint8_t b = 255;
    bool operator==(const Rgb&) const = default;
    auto operator<=>(const Rgb&) const = default;
};

inline constexpr Rgb kWhite{255, 255, 255};
inline constexpr Rgb kBlack{0, 0, 0};
inline constexpr Rgb kIndexRed{230, 0, 0};
inline constexpr Rgb kGutterGray{200, 200, 200};

enum class PanelKind { Single, ArrayCell, PairLeft, PairRight };

struct Panel {
    PanelKind kind = PanelKind::Single;
    int index = 0;  ///< 1-based cell index for ArrayCell
    bool operator==(const Panel&) const = default;
};

/// Row-major RGB8 image with provenance. Background is white.
struct StimulusImage {
    int width = 0;
    int height = 0;
    std::vector<std::uint8_t> pixels;
    std::string trial_id;
    Panel panel;

    StimulusImage() = default;
    StimulusImage(int w, int h, Rgb background = kWhite);

    Rgb at(int x, int y) const noexcept {
        const auto i = (static_cast<std::size_t>(y) * static_cast<std::size_t>(width) + static_cast<std::size_t>(x)) * 3;
        return {pixels[i], pixels[i + 1], pixels[i + 2]};
    }
    void set(int x, int y, Rgb c) noexcept {
        const auto i = (static_cast<std::size_t>(y) * static_cast<std::size_t>(width) + static_cast<std::size_t>(x)) * 3;
        pixels[i] = c.r;
        pixels[i + 1] = c.g;
        pixels[i + 2] = c.b;
    }
    /// Linear blend of `c` over the existing pixel with weight `coverage` in [0,1].
    void blend(int x, int y, Rgb c, double coverage) noexcept;

    bool operator==(const StimulusImage&) const = default;
};

class SizeMismatch : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

class EmptyMask : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Antialiased stroke accumulation. Coverage from overlapping primitives
/// combines by max, so joints and crossings do not darken twice.
class StrokeLayer {
public:
    StrokeLayer(int width, int height);

    void segment(Vec2 a, Vec2 b, double stroke_px);
    void circle(Vec2 center, double radius, double stroke_px);
    void polyline(std::span<const Vec2> points, bool closed, double stroke_px);

    /// Composites the accumulated coverage in `color` onto `image`.
    void composite(StimulusImage& image, Rgb color) const;

private:
    void cover(int x, int y, double c) noexcept;
    int width_;
    int height_;
    std::vector<float> coverage_;
};

/// Visible objects drawn as antialiased strokes; pixel = unit coordinate * size.
StimulusImage render_scene(const geom::RealizedScene& scene, int size = 256, double stroke_px = 3.0);

struct ArrayLayout {
    int gutter = 8;
    double index_inset = 0.05;   ///< fraction of cell size
    double index_height = 0.14;  ///< fraction of cell size
};

/// 3x2 grid, red 1-based index numerals at the top-left of each cell.
StimulusImage compose_oddball_array(std::span<const StimulusImage> cells, const ArrayLayout& layout = {});

/// Top-left pixel of cell `position` (1..6) inside a composed array.
std::pair<int, int> array_cell_origin(int position, int cell_size, int gutter) noexcept;

/// Two panels side by side with a gray gutter.
StimulusImage compose_pair(const StimulusImage& left, const StimulusImage& right, int gutter = 8);

/// Embedded numeral strokes in a unit box (x right, y down). Digits 0-9.
std::span<const Polyline> numeral_strokes(int digit);

/// Draws a digit with its top-left corner at `origin`, `height` px tall.
void draw_numeral(StimulusImage& image, int digit, Vec2 origin, double height, double stroke_px, Rgb color);

/// Even-odd, antialiased fill. Coordinates in unit canvas space.
void fill_polygon(StimulusImage& image, std::span<const Polyline> rings, Rgb fill);

/// Value-returning form of fill_polygon.
StimulusImage rasterize_polygon(const Polyline& outline, Rgb fill, StimulusImage canvas);

/// Binary mask stored as sorted, disjoint [x0, x1) runs per row.
class SpanMask {
public:
    using Run = std::pair<int, int>;

    SpanMask() = default;
    explicit SpanMask(int resolution) : resolution_(resolution), rows_(static_cast<std::size_t>(resolution)) {}

    /// Pixel (i, j) is set iff its center is inside the rings (even-odd).
    static SpanMask from_polygon(std::span<const Polyline> rings, int resolution);
    static SpanMask from_polygon(const Polyline& outline, int resolution) {
        return from_polygon(std::span<const Polyline>(&outline, 1), resolution);
    }

    int resolution() const noexcept { return resolution_; }
    std::int64_t area() const noexcept;
    bool contains(int x, int y) const noexcept;
    bool empty() const noexcept { return area() == 0; }

    SpanMask intersected(const SpanMask& other) const;
    SpanMask united(const SpanMask& other) const;
    SpanMask subtracted(const SpanMask& other) const;
    /// Chebyshev dilation by r pixels.
    SpanMask dilated(int r) const;
    /// Number of 8-connected components.
    int components() const;

    const std::vector<Run>& row(int y) const { return rows_[static_cast<std::size_t>(y)]; }

private:
    int resolution_ = 0;
    std::vector<std::vector<Run>> rows_;
};

std::int64_t intersection_area(const SpanMask& a, const SpanMask& b);

/// |a & b| / min(|a|, |b|) at the given resolution. Throws EmptyMask.
double mask_overlap_ratio(const Polyline& a, const Polyline& b, int resolution = 512);
double mask_overlap_ratio(const SpanMask& a, const SpanMask& b);

/// Intersection over union; 0 when both are empty.
double iou(const SpanMask& a, const SpanMask& b);

std::vector<std::uint8_t> encode_png(const StimulusImage& image);
void write_png(const std::filesystem::path& path, const StimulusImage& image);

}  // namespace serialprobe::raster
