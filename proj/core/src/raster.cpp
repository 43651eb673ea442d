#include "serialprobe/raster.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>

#include <fmt/format.h>
#include <png.h>

namespace serialprobe::raster {

StimulusImage::StimulusImage(int w, int h, Rgb background)
    : width(w), height(h), pixels(static_cast<std::size_t>(w) * static_cast<std::size_t>(h) * 3) {
    for (std::size_t i = 0; i < pixels.size(); i += 3) {
        pixels[i] = background.r;
        pixels[i + 1] = background.g;
        pixels[i + 2] = background.b;
    }
}

void StimulusImage::blend(int x, int y, Rgb c, double coverage) noexcept {
    if (coverage <= 0.0) return;
    if (coverage >= 1.0) {
        set(x, y, c);
        return;
    }
    const Rgb old = at(x, y);
    auto mix = [coverage](std::uint8_t o, std::uint8_t n) {
        return static_cast<std::uint8_t>(std::lround(o + (static_cast<double>(n) - o) * coverage));
    };
    set(x, y, {mix(old.r, c.r), mix(old.g, c.g), mix(old.b, c.b)});
}

// ---------------------------------------------------------------- strokes

StrokeLayer::StrokeLayer(int width, int height)
    : width_(width), height_(height), coverage_(static_cast<std::size_t>(width) * static_cast<std::size_t>(height), 0.0f) {}

void StrokeLayer::cover(int x, int y, double c) noexcept {
    if (c <= 0.0) return;
    float& slot = coverage_[static_cast<std::size_t>(y) * static_cast<std::size_t>(width_) + static_cast<std::size_t>(x)];
    slot = std::max(slot, static_cast<float>(std::min(c, 1.0)));
}

void StrokeLayer::segment(Vec2 a, Vec2 b, double stroke_px) {
    const double half = stroke_px / 2.0 + 0.5;
    const int x0 = std::max(0, static_cast<int>(std::floor(std::min(a.x, b.x) - half)));
    const int x1 = std::min(width_ - 1, static_cast<int>(std::ceil(std::max(a.x, b.x) + half)));
    const int y0 = std::max(0, static_cast<int>(std::floor(std::min(a.y, b.y) - half)));
    const int y1 = std::min(height_ - 1, static_cast<int>(std::ceil(std::max(a.y, b.y) + half)));
    const geom::Segment seg{a, b};
    const bool point_like = a == b;
    for (int y = y0; y <= y1; ++y) {
        for (int x = x0; x <= x1; ++x) {
            const Vec2 q{x + 0.5, y + 0.5};
            const double d = point_like ? geom::distance(q, a) : geom::distance_to(seg, q);
            cover(x, y, half - d);
        }
    }
}

void StrokeLayer::circle(Vec2 center, double radius, double stroke_px) {
    const double half = stroke_px / 2.0 + 0.5;
    const double outer = radius + half;
    const int x0 = std::max(0, static_cast<int>(std::floor(center.x - outer)));
    const int x1 = std::min(width_ - 1, static_cast<int>(std::ceil(center.x + outer)));
    const int y0 = std::max(0, static_cast<int>(std::floor(center.y - outer)));
    const int y1 = std::min(height_ - 1, static_cast<int>(std::ceil(center.y + outer)));
    for (int y = y0; y <= y1; ++y) {
        for (int x = x0; x <= x1; ++x) {
            const double d = std::abs(geom::distance({x + 0.5, y + 0.5}, center) - radius);
            cover(x, y, half - d);
        }
    }
}

void StrokeLayer::polyline(std::span<const Vec2> points, bool closed, double stroke_px) {
    if (points.empty()) return;
    if (points.size() == 1) {
        segment(points[0], points[0], stroke_px);
        return;
    }
    for (std::size_t i = 0; i + 1 < points.size(); ++i) segment(points[i], points[i + 1], stroke_px);
    if (closed) segment(points.back(), points.front(), stroke_px);
}

void StrokeLayer::composite(StimulusImage& image, Rgb color) const {
    for (int y = 0; y < height_; ++y) {
        for (int x = 0; x < width_; ++x) {
            const float c = coverage_[static_cast<std::size_t>(y) * static_cast<std::size_t>(width_) + static_cast<std::size_t>(x)];
            if (c > 0.0f) image.blend(x, y, color, c);
        }
    }
}

StimulusImage render_scene(const geom::RealizedScene& scene, int size, double stroke_px) {
    if (size < 64) throw std::invalid_argument("render_scene: size must be >= 64");
    StimulusImage image(size, size);
    StrokeLayer layer(size, size);
    const double s = size;
    for (const auto& st : scene.program.statements) {
        if (!st.visible) continue;
        const auto& obj = scene.objects.at(st.id);
        if (const auto* seg = std::get_if<geom::Segment>(&obj)) {
            layer.segment(s * seg->a, s * seg->b, stroke_px);
        } else {
            const auto& c = std::get<geom::Circle>(obj);
            layer.circle(s * c.center, s * c.radius, stroke_px);
        }
    }
    layer.composite(image, kBlack);
    return image;
}

// ---------------------------------------------------------------- numerals

namespace {

using P = Vec2;

const std::array<std::vector<Polyline>, 10>& numeral_table() {
    static const std::array<std::vector<Polyline>, 10> table = {{
        {{P{0.5, 0.0}, P{0.15, 0.2}, P{0.1, 0.5}, P{0.15, 0.8}, P{0.5, 1.0}, P{0.85, 0.8}, P{0.9, 0.5},
          P{0.85, 0.2}, P{0.5, 0.0}}},
        {{P{0.25, 0.2}, P{0.55, 0.0}, P{0.55, 1.0}}, {P{0.25, 1.0}, P{0.85, 1.0}}},
        {{P{0.1, 0.2}, P{0.3, 0.0}, P{0.7, 0.0}, P{0.9, 0.2}, P{0.9, 0.4}, P{0.1, 1.0}, P{0.9, 1.0}}},
        {{P{0.1, 0.0}, P{0.9, 0.0}, P{0.45, 0.42}, P{0.75, 0.48}, P{0.9, 0.68}, P{0.85, 0.88}, P{0.65, 1.0},
          P{0.3, 1.0}, P{0.1, 0.88}}},
        {{P{0.7, 1.0}, P{0.7, 0.0}, P{0.1, 0.7}, P{0.95, 0.7}}},
        {{P{0.9, 0.0}, P{0.2, 0.0}, P{0.12, 0.45}, P{0.6, 0.4}, P{0.88, 0.58}, P{0.9, 0.82}, P{0.7, 1.0},
          P{0.3, 1.0}, P{0.1, 0.88}}},
        {{P{0.8, 0.05}, P{0.5, 0.0}, P{0.2, 0.15}, P{0.1, 0.5}, P{0.12, 0.82}, P{0.32, 1.0}, P{0.7, 1.0},
          P{0.9, 0.82}, P{0.9, 0.62}, P{0.7, 0.45}, P{0.3, 0.45}, P{0.12, 0.6}}},
        {{P{0.1, 0.0}, P{0.9, 0.0}, P{0.4, 1.0}}},
        {{P{0.5, 0.45}, P{0.2, 0.35}, P{0.15, 0.15}, P{0.35, 0.0}, P{0.65, 0.0}, P{0.85, 0.15}, P{0.8, 0.35},
          P{0.5, 0.45}, P{0.15, 0.6}, P{0.1, 0.82}, P{0.3, 1.0}, P{0.7, 1.0}, P{0.9, 0.82}, P{0.85, 0.6},
          P{0.5, 0.45}}},
        {{P{0.88, 0.4}, P{0.7, 0.55}, P{0.3, 0.55}, P{0.1, 0.38}, P{0.1, 0.18}, P{0.3, 0.0}, P{0.7, 0.0},
          P{0.88, 0.18}, P{0.9, 0.5}, P{0.8, 0.85}, P{0.5, 1.0}, P{0.2, 0.95}}},
    }};
    return table;
}

}  // namespace

std::span<const Polyline> numeral_strokes(int digit) {
    if (digit < 0 || digit > 9) throw std::out_of_range("numeral_strokes: digit outside 0-9");
    return numeral_table()[static_cast<std::size_t>(digit)];
}

void draw_numeral(StimulusImage& image, int digit, Vec2 origin, double height, double stroke_px, Rgb color) {
    StrokeLayer layer(image.width, image.height);
    const double width = 0.6 * height;
    for (const auto& stroke : numeral_strokes(digit)) {
        Polyline px;
        px.reserve(stroke.size());
        for (const auto& p : stroke) px.push_back({origin.x + p.x * width, origin.y + p.y * height});
        layer.polyline(px, false, stroke_px);
    }
    layer.composite(image, color);
}

// ---------------------------------------------------------------- composition

std::pair<int, int> array_cell_origin(int position, int cell_size, int gutter) noexcept {
    const int row = (position - 1) / 3;
    const int col = (position - 1) % 3;
    return {gutter + col * (cell_size + gutter), gutter + row * (cell_size + gutter)};
}

StimulusImage compose_oddball_array(std::span<const StimulusImage> cells, const ArrayLayout& layout) {
    if (cells.size() != 6) throw SizeMismatch(fmt::format("oddball array needs 6 cells, got {}", cells.size()));
    const int cell = cells[0].width;
    for (const auto& c : cells) {
        if (c.width != cell || c.height != cell) throw SizeMismatch("oddball array cells must be equal squares");
    }
    const int g = layout.gutter;
    StimulusImage out(3 * cell + 4 * g, 2 * cell + 3 * g, kGutterGray);
    out.trial_id = cells[0].trial_id;
    out.panel = {PanelKind::Single, 0};
    for (int pos = 1; pos <= 6; ++pos) {
        const auto [ox, oy] = array_cell_origin(pos, cell, g);
        const auto& src = cells[static_cast<std::size_t>(pos - 1)];
        for (int y = 0; y < cell; ++y) {
            std::copy_n(src.pixels.begin() + static_cast<std::ptrdiff_t>(y) * cell * 3, cell * 3,
                        out.pixels.begin() + (static_cast<std::ptrdiff_t>(oy + y) * out.width + ox) * 3);
        }
        const double inset = layout.index_inset * cell;
        draw_numeral(out, pos, {ox + inset, oy + inset}, layout.index_height * cell,
                     std::max(2.0, cell / 64.0), kIndexRed);
    }
    return out;
}

StimulusImage compose_pair(const StimulusImage& left, const StimulusImage& right, int gutter) {
    if (left.height != right.height) throw SizeMismatch("pair panels must have equal height");
    StimulusImage out(left.width + right.width + 3 * gutter, left.height + 2 * gutter, kGutterGray);
    out.trial_id = left.trial_id;
    auto blit = [&](const StimulusImage& src, int ox) {
        for (int y = 0; y < src.height; ++y) {
            std::copy_n(src.pixels.begin() + static_cast<std::ptrdiff_t>(y) * src.width * 3, src.width * 3,
                        out.pixels.begin() + (static_cast<std::ptrdiff_t>(gutter + y) * out.width + ox) * 3);
        }
    };
    blit(left, gutter);
    blit(right, 2 * gutter + left.width);
    return out;
}

// ---------------------------------------------------------------- polygon fill

namespace {

struct Edge {
    Vec2 p;
    Vec2 q;
};

std::vector<Edge> edges_of(std::span<const Polyline> rings, double sx, double sy) {
    std::vector<Edge> edges;
    for (const auto& ring : rings) {
        if (ring.size() < 2) continue;
        for (std::size_t i = 0; i < ring.size(); ++i) {
            const Vec2 a = ring[i];
            const Vec2 b = ring[(i + 1) % ring.size()];
            if (a.y == b.y) continue;
            edges.push_back({{a.x * sx, a.y * sy}, {b.x * sx, b.y * sy}});
        }
    }
    return edges;
}

void crossings(const std::vector<Edge>& edges, double y, std::vector<double>& xs) {
    xs.clear();
    for (const auto& e : edges) {
        const bool up = e.p.y <= y && y < e.q.y;
        const bool down = e.q.y <= y && y < e.p.y;
        if (up || down) xs.push_back(e.p.x + (y - e.p.y) * (e.q.x - e.p.x) / (e.q.y - e.p.y));
    }
    std::sort(xs.begin(), xs.end());
}

std::pair<double, double> y_range(const std::vector<Edge>& edges) {
    double lo = 1e300;
    double hi = -1e300;
    for (const auto& e : edges) {
        lo = std::min({lo, e.p.y, e.q.y});
        hi = std::max({hi, e.p.y, e.q.y});
    }
    return {lo, hi};
}

}  // namespace

void fill_polygon(StimulusImage& image, std::span<const Polyline> rings, Rgb fill) {
    constexpr int kSub = 4;
    const auto edges = edges_of(rings, image.width, image.height);
    if (edges.empty()) return;
    const auto [ylo, yhi] = y_range(edges);
    const int row0 = std::max(0, static_cast<int>(std::floor(ylo)));
    const int row1 = std::min(image.height, static_cast<int>(std::ceil(yhi)) + 1);
    std::vector<double> acc(static_cast<std::size_t>(image.width) + 1);
    std::vector<double> xs;
    const double w = 1.0 / kSub;
    for (int row = row0; row < row1; ++row) {
        std::fill(acc.begin(), acc.end(), 0.0);
        int touched_lo = image.width;
        int touched_hi = -1;
        for (int k = 0; k < kSub; ++k) {
            crossings(edges, row + (k + 0.5) / kSub, xs);
            for (std::size_t i = 0; i + 1 < xs.size(); i += 2) {
                const double x0 = std::clamp(xs[i], 0.0, static_cast<double>(image.width));
                const double x1 = std::clamp(xs[i + 1], 0.0, static_cast<double>(image.width));
                if (x1 <= x0) continue;
                const int i0 = static_cast<int>(x0);
                const int i1 = static_cast<int>(x1);
                touched_lo = std::min(touched_lo, i0);
                touched_hi = std::max(touched_hi, i1);
                if (i0 == i1) {
                    acc[static_cast<std::size_t>(i0)] += (x1 - x0) * w;
                    continue;
                }
                acc[static_cast<std::size_t>(i0)] += (i0 + 1 - x0) * w;
                for (int x = i0 + 1; x < i1; ++x) acc[static_cast<std::size_t>(x)] += w;
                acc[static_cast<std::size_t>(i1)] += (x1 - i1) * w;
            }
        }
        for (int x = std::max(0, touched_lo); x <= std::min(image.width - 1, touched_hi); ++x) {
            image.blend(x, row, fill, acc[static_cast<std::size_t>(x)]);
        }
    }
}

StimulusImage rasterize_polygon(const Polyline& outline, Rgb fill, StimulusImage canvas) {
    fill_polygon(canvas, std::span<const Polyline>(&outline, 1), fill);
    return canvas;
}

// ---------------------------------------------------------------- masks

namespace {

using Run = SpanMask::Run;

void push_run(std::vector<Run>& out, int a, int b) {
    if (b <= a) return;
    if (!out.empty() && out.back().second >= a) {
        out.back().second = std::max(out.back().second, b);
    } else {
        out.emplace_back(a, b);
    }
}

std::vector<Run> intersect_runs(const std::vector<Run>& a, const std::vector<Run>& b) {
    std::vector<Run> out;
    std::size_t i = 0;
    std::size_t j = 0;
    while (i < a.size() && j < b.size()) {
        const int lo = std::max(a[i].first, b[j].first);
        const int hi = std::min(a[i].second, b[j].second);
        if (lo < hi) out.emplace_back(lo, hi);
        (a[i].second < b[j].second) ? ++i : ++j;
    }
    return out;
}

std::vector<Run> union_runs(const std::vector<Run>& a, const std::vector<Run>& b) {
    std::vector<Run> out;
    std::size_t i = 0;
    std::size_t j = 0;
    while (i < a.size() || j < b.size()) {
        const bool take_a = j >= b.size() || (i < a.size() && a[i].first <= b[j].first);
        const Run r = take_a ? a[i++] : b[j++];
        push_run(out, r.first, r.second);
    }
    return out;
}

std::vector<Run> subtract_runs(const std::vector<Run>& a, const std::vector<Run>& b) {
    std::vector<Run> out;
    std::size_t j = 0;
    for (const auto& r : a) {
        int start = r.first;
        while (j < b.size() && b[j].second <= start) ++j;
        std::size_t k = j;
        while (k < b.size() && b[k].first < r.second) {
            if (b[k].first > start) out.emplace_back(start, b[k].first);
            start = std::max(start, b[k].second);
            ++k;
        }
        if (start < r.second) out.emplace_back(start, r.second);
    }
    return out;
}

std::int64_t runs_length(const std::vector<Run>& runs) {
    std::int64_t n = 0;
    for (const auto& r : runs) n += r.second - r.first;
    return n;
}

}  // namespace

SpanMask SpanMask::from_polygon(std::span<const Polyline> rings, int resolution) {
    SpanMask mask(resolution);
    const auto edges = edges_of(rings, resolution, resolution);
    if (edges.empty()) return mask;
    const auto [ylo, yhi] = y_range(edges);
    const int row0 = std::max(0, static_cast<int>(std::floor(ylo)));
    const int row1 = std::min(resolution, static_cast<int>(std::ceil(yhi)) + 1);
    std::vector<double> xs;
    for (int row = row0; row < row1; ++row) {
        crossings(edges, row + 0.5, xs);
        auto& out = mask.rows_[static_cast<std::size_t>(row)];
        for (std::size_t i = 0; i + 1 < xs.size(); i += 2) {
            const int a = std::max(0, static_cast<int>(std::ceil(xs[i] - 0.5)));
            const int b = std::min(resolution, static_cast<int>(std::ceil(xs[i + 1] - 0.5)));
            push_run(out, a, b);
        }
    }
    return mask;
}

std::int64_t SpanMask::area() const noexcept {
    std::int64_t n = 0;
    for (const auto& r : rows_) n += runs_length(r);
    return n;
}

bool SpanMask::contains(int x, int y) const noexcept {
    if (y < 0 || y >= resolution_) return false;
    for (const auto& [a, b] : rows_[static_cast<std::size_t>(y)]) {
        if (x >= a && x < b) return true;
    }
    return false;
}

SpanMask SpanMask::intersected(const SpanMask& other) const {
    SpanMask out(resolution_);
    for (std::size_t y = 0; y < rows_.size(); ++y) out.rows_[y] = intersect_runs(rows_[y], other.rows_[y]);
    return out;
}

SpanMask SpanMask::united(const SpanMask& other) const {
    SpanMask out(resolution_);
    for (std::size_t y = 0; y < rows_.size(); ++y) out.rows_[y] = union_runs(rows_[y], other.rows_[y]);
    return out;
}

SpanMask SpanMask::subtracted(const SpanMask& other) const {
    SpanMask out(resolution_);
    for (std::size_t y = 0; y < rows_.size(); ++y) out.rows_[y] = subtract_runs(rows_[y], other.rows_[y]);
    return out;
}

SpanMask SpanMask::dilated(int r) const {
    std::vector<std::vector<Run>> wide(rows_.size());
    for (std::size_t y = 0; y < rows_.size(); ++y) {
        for (const auto& [a, b] : rows_[y]) push_run(wide[y], std::max(0, a - r), std::min(resolution_, b + r));
    }
    SpanMask out(resolution_);
    const int n = resolution_;
    for (int y = 0; y < n; ++y) {
        std::vector<Run> acc;
        for (int dy = std::max(0, y - r); dy <= std::min(n - 1, y + r); ++dy) {
            if (!wide[static_cast<std::size_t>(dy)].empty()) acc = union_runs(acc, wide[static_cast<std::size_t>(dy)]);
        }
        out.rows_[static_cast<std::size_t>(y)] = std::move(acc);
    }
    return out;
}

int SpanMask::components() const {
    // Union-find over runs; runs in neighbouring rows touch (8-connected) when
    // their column ranges overlap after widening by one pixel.
    std::vector<std::size_t> parent;
    auto find = [&](std::size_t i) {
        while (parent[i] != i) i = parent[i] = parent[parent[i]];
        return i;
    };
    std::size_t prev_begin = 0;
    int merged = 0;
    for (std::size_t y = 0; y < rows_.size(); ++y) {
        const std::size_t begin = parent.size();
        for (std::size_t k = 0; k < rows_[y].size(); ++k) parent.push_back(begin + k);
        if (y > 0) {
            const auto& up = rows_[y - 1];
            const auto& cur = rows_[y];
            std::size_t i = 0, j = 0;
            while (i < up.size() && j < cur.size()) {
                if (up[i].first <= cur[j].second && cur[j].first <= up[i].second) {
                    const auto a = find(prev_begin + i), b = find(begin + j);
                    if (a != b) {
                        parent[a] = b;
                        ++merged;
                    }
                }
                if (up[i].second < cur[j].second) ++i;
                else ++j;
            }
        }
        prev_begin = begin;
    }
    return static_cast<int>(parent.size()) - merged;
}

std::int64_t intersection_area(const SpanMask& a, const SpanMask& b) {
    std::int64_t n = 0;
    for (int y = 0; y < a.resolution(); ++y) n += runs_length(intersect_runs(a.row(y), b.row(y)));
    return n;
}

double mask_overlap_ratio(const SpanMask& a, const SpanMask& b) {
    const auto area_a = a.area();
    const auto area_b = b.area();
    if (area_a == 0 || area_b == 0) throw EmptyMask("mask_overlap_ratio: shape rasterizes to zero pixels");
    return static_cast<double>(intersection_area(a, b)) / static_cast<double>(std::min(area_a, area_b));
}

double mask_overlap_ratio(const Polyline& a, const Polyline& b, int resolution) {
    if (resolution < 256) throw std::invalid_argument("mask_overlap_ratio: resolution must be >= 256");
    return mask_overlap_ratio(SpanMask::from_polygon(a, resolution), SpanMask::from_polygon(b, resolution));
}

double iou(const SpanMask& a, const SpanMask& b) {
    const auto inter = intersection_area(a, b);
    const auto uni = a.area() + b.area() - inter;
    return uni == 0 ? 0.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

// ---------------------------------------------------------------- png

std::vector<std::uint8_t> encode_png(const StimulusImage& image) {
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png) throw std::runtime_error("png_create_write_struct failed");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_write_struct(&png, nullptr);
        throw std::runtime_error("png_create_info_struct failed");
    }
    std::vector<std::uint8_t> out;
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw std::runtime_error("libpng error while encoding");
    }
    png_set_write_fn(
        png, &out,
        [](png_structp p, png_bytep data, png_size_t len) {
            auto* buf = static_cast<std::vector<std::uint8_t>*>(png_get_io_ptr(p));
            buf->insert(buf->end(), data, data + len);
        },
        nullptr);
    png_set_IHDR(png, info, static_cast<png_uint_32>(image.width), static_cast<png_uint_32>(image.height), 8,
                 PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_set_compression_level(png, 6);
    png_write_info(png, info);
    for (int y = 0; y < image.height; ++y) {
        auto* row = const_cast<png_bytep>(image.pixels.data() + static_cast<std::size_t>(y) * static_cast<std::size_t>(image.width) * 3);
        png_write_row(png, row);
    }
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
    return out;
}

void write_png(const std::filesystem::path& path, const StimulusImage& image) {
    const auto bytes = encode_png(image);
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error(fmt::format("cannot write '{}'", path.string()));
    f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

}  // namespace serialprobe::raster
