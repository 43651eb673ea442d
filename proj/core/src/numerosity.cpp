#include "serialprobe/numerosity.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include <fmt/format.h>

#include "serialprobe/parallel.hpp"

namespace serialprobe::numerosity {

namespace {

constexpr double kPi = std::numbers::pi;

struct Bounds {
    double x0, y0, x1, y1;
};

Bounds bounds_of(const Polyline& outline) {
    Bounds b{outline[0].x, outline[0].y, outline[0].x, outline[0].y};
    for (const auto& p : outline) {
        b.x0 = std::min(b.x0, p.x);
        b.y0 = std::min(b.y0, p.y);
        b.x1 = std::max(b.x1, p.x);
        b.y1 = std::max(b.y1, p.y);
    }
    return b;
}

double extent(const Polyline& outline, Vec2 about = {}) {
    double r = 0;
    for (const auto& p : outline) r = std::max(r, geom::distance(p, about));
    return r;
}

bool in_bounds(const BlobShape& s, double margin) {
    const auto b = bounds_of(s.outline);
    return b.x0 >= margin && b.y0 >= margin && b.x1 <= 1.0 - margin && b.y1 <= 1.0 - margin;
}

raster::SpanMask mask_of(const BlobShape& s, int resolution) {
    return raster::SpanMask::from_polygon(s.outline, resolution);
}

// Uniform offset that keeps a shape centered at the origin inside the margins.
std::optional<Vec2> random_offset(const BlobShape& local, double margin, Rng& rng) {
    const auto b = bounds_of(local.outline);
    const double xlo = margin - b.x0, xhi = 1.0 - margin - b.x1;
    const double ylo = margin - b.y0, yhi = 1.0 - margin - b.y1;
    if (xlo > xhi || ylo > yhi) return std::nullopt;
    const double x = rng.uniform(xlo, xhi);
    const double y = rng.uniform(ylo, yhi);
    return Vec2{x, y};
}

class AttemptBudget {
public:
    explicit AttemptBudget(int limit) : left_(limit) {}
    void spend(std::size_t n_shapes) {
        if (--left_ < 0) {
            throw PlacementExhausted(fmt::format("could not place {} shapes within the attempt budget", n_shapes));
        }
    }

private:
    int left_;
};

Placement place_distinct(const std::vector<BlobShape>& local, Rng& rng, const PlacementConfig& cfg) {
    AttemptBudget budget(cfg.max_attempts);
    Placement out;
    raster::SpanMask occupied(cfg.resolution);
    for (const auto& shape : local) {
        for (;;) {
            budget.spend(local.size());
            const auto offset = random_offset(shape, cfg.margin, rng);
            if (!offset) continue;
            auto placed = translated(shape, *offset);
            auto mask = mask_of(placed, cfg.resolution);
            if (mask.components() != 1) continue;
            if (raster::intersection_area(mask.dilated(cfg.min_gap_px), occupied) != 0) continue;
            occupied = occupied.united(mask);
            placed.area_px = mask.area();
            out.shapes.push_back(std::move(placed));
            break;
        }
    }
    out.visible_fraction.assign(out.shapes.size(), 1.0);
    return out;
}

// One chain step. Returns the placed shape when the bisection lands in the band
// and the result is in bounds and keeps every shape above the visibility floor.
std::optional<BlobShape> chain_step(const BlobShape& prev, const raster::SpanMask& prev_mask, const BlobShape& local,
                                    std::vector<raster::SpanMask>& masks, Rng& rng, const PlacementConfig& cfg,
                                    double& overlap) {
    const double angle = rng.uniform(0.0, 2.0 * kPi);
    const Vec2 dir{std::cos(angle), std::sin(angle)};
    const double dmax = extent(prev.outline, prev.centroid) + extent(local.outline) + 2.0 / cfg.resolution;
    const Vec2 origin = prev.centroid;
    double lo = 0.0, hi = dmax;
    for (int iter = 0; iter < 40; ++iter) {
        const double d = 0.5 * (lo + hi);
        auto placed = translated(local, origin + d * dir);
        auto mask = mask_of(placed, cfg.resolution);
        if (mask.empty()) return std::nullopt;
        const double r = raster::mask_overlap_ratio(prev_mask, mask);
        if (r > cfg.overlap_hi) {
            lo = d;
            continue;
        }
        if (r < cfg.overlap_lo) {
            hi = d;
            continue;
        }
        if (!in_bounds(placed, cfg.margin) || mask.components() != 1) return std::nullopt;
        masks.push_back(mask);
        const auto vis = visible_fractions(masks);
        if (*std::min_element(vis.begin(), vis.end()) < cfg.visibility_floor) {
            masks.pop_back();
            return std::nullopt;
        }
        placed.area_px = mask.area();
        overlap = r;
        return placed;
    }
    return std::nullopt;
}

Placement place_chain(const std::vector<BlobShape>& local, Rng& rng, const PlacementConfig& cfg) {
    AttemptBudget budget(cfg.max_attempts);
    constexpr int kStepAttempts = 100;
    for (;;) {
        Placement out;
        std::vector<raster::SpanMask> masks;
        budget.spend(local.size());
        const auto offset = random_offset(local[0], cfg.margin, rng);
        if (!offset) continue;
        auto first = translated(local[0], *offset);
        masks.push_back(mask_of(first, cfg.resolution));
        if (masks.back().components() != 1) continue;
        first.area_px = masks.back().area();
        out.shapes.push_back(std::move(first));

        bool stuck = false;
        for (std::size_t i = 1; i < local.size() && !stuck; ++i) {
            std::optional<BlobShape> next;
            double overlap = 0;
            for (int k = 0; k < kStepAttempts && !next; ++k) {
                budget.spend(local.size());
                const auto prev_mask = masks.back();
                next = chain_step(out.shapes.back(), prev_mask, local[i], masks, rng, cfg, overlap);
            }
            if (!next) {
                stuck = true;
                break;
            }
            out.shapes.push_back(std::move(*next));
            out.adjacent_overlaps.push_back(overlap);
        }
        if (stuck) continue;
        out.visible_fraction = visible_fractions(masks);
        return out;
    }
}

}  // namespace

std::string_view to_string(Condition c) noexcept {
    switch (c) {
        case Condition::UniformDistinct: return "uniform_distinct";
        case Condition::UniformOverlapping: return "uniform_overlapping";
        case Condition::ColoredDistinct: return "colored_distinct";
        case Condition::ColoredOverlapping: return "colored_overlapping";
    }
    return "?";
}

std::optional<Condition> parse_condition(std::string_view name) noexcept {
    for (auto c : kAllConditions) {
        if (to_string(c) == name) return c;
    }
    return std::nullopt;
}

Vec2 polygon_centroid(const Polyline& outline) {
    double a = 0, cx = 0, cy = 0;
    for (std::size_t i = 0; i < outline.size(); ++i) {
        const Vec2 p = outline[i];
        const Vec2 q = outline[(i + 1) % outline.size()];
        const double w = geom::cross(p, q);
        a += w;
        cx += (p.x + q.x) * w;
        cy += (p.y + q.y) * w;
    }
    if (std::abs(a) < 1e-300) return outline.empty() ? Vec2{} : outline[0];
    return {cx / (3.0 * a), cy / (3.0 * a)};
}

BlobShape blob_from_anchors(std::vector<Vec2> anchors) {
    BlobShape blob;
    const auto k = anchors.size();
    double twice_area = 0.0;
    for (std::size_t i = 0; i < k; ++i) twice_area += geom::cross(anchors[i], anchors[(i + 1) % k]);
    const double side = twice_area >= 0.0 ? 1.0 : -1.0;  // +1: interior on the left of each chord

    auto rotate = [](Vec2 v, double angle) {
        const double c = std::cos(angle), s = std::sin(angle);
        return Vec2{c * v.x - s * v.y, s * v.x + c * v.y};
    };
    std::vector<double> turn(k);
    for (std::size_t i = 0; i < k; ++i) {
        const Vec2 to_next = anchors[(i + 1) % k] - anchors[i];
        const Vec2 to_prev = anchors[(i + k - 1) % k] - anchors[i];
        double interior = std::atan2(side * geom::cross(to_next, to_prev), geom::dot(to_next, to_prev));
        if (interior < 0.0) interior += 2.0 * kPi;
        turn[i] = side * kTangentTurn * interior;
    }

    blob.outline.reserve(k * kSamplesPerSegment);
    for (std::size_t i = 0; i < k; ++i) {
        const Vec2 a = anchors[i];
        const Vec2 b = anchors[(i + 1) % k];
        const Vec2 chord = b - a;
        const Vec2 m0 = kTangentScale * rotate(chord, turn[i]);
        const Vec2 m1 = kTangentScale * rotate(chord, -turn[(i + 1) % k]);
        for (int s = 0; s < kSamplesPerSegment; ++s) {
            const double t = static_cast<double>(s) / kSamplesPerSegment;
            const double t2 = t * t, t3 = t2 * t;
            const double h00 = 2 * t3 - 3 * t2 + 1;
            const double h10 = t3 - 2 * t2 + t;
            const double h01 = -2 * t3 + 3 * t2;
            const double h11 = t3 - t2;
            blob.outline.push_back(s == 0 ? a : h00 * a + h10 * m0 + h01 * b + h11 * m1);
        }
    }
    blob.n_points = static_cast<int>(k);
    blob.anchors = std::move(anchors);
    blob.centroid = polygon_centroid(blob.outline);
    return blob;
}

BlobShape generate_blob(Rng& rng, double scale) {
    if (!(scale > 0.0 && scale <= 0.5)) throw std::invalid_argument("generate_blob: scale must be in (0, 0.5]");
    const int k = 3 + static_cast<int>(rng.below(3));
    std::vector<Vec2> anchors;
    anchors.reserve(static_cast<std::size_t>(k));
    const double jitter = kPi / (3.0 * k);
    for (int i = 0; i < k; ++i) {
        const double angle = 2.0 * kPi * i / k + rng.uniform(-jitter, jitter);
        const double r = scale * rng.uniform(0.6, 1.0);
        anchors.push_back({r * std::cos(angle), r * std::sin(angle)});
    }
    return blob_from_anchors(std::move(anchors));
}

BlobShape translated(const BlobShape& shape, Vec2 offset) {
    BlobShape out = shape;
    for (auto& p : out.outline) p = p + offset;
    for (auto& p : out.anchors) p = p + offset;
    out.centroid = out.centroid + offset;
    return out;
}

std::vector<double> visible_fractions(std::span<const raster::SpanMask> masks) {
    std::vector<double> out(masks.size(), 1.0);
    if (masks.empty()) return out;
    raster::SpanMask above(masks[0].resolution());
    for (std::size_t i = masks.size(); i-- > 0;) {
        const auto area = masks[i].area();
        if (area == 0) throw raster::EmptyMask("visible_fractions: empty shape mask");
        out[i] = static_cast<double>(masks[i].subtracted(above).area()) / static_cast<double>(area);
        above = above.united(masks[i]);
    }
    return out;
}

Placement place_shapes(std::vector<BlobShape> shapes, bool overlapping, Rng& rng, const PlacementConfig& config) {
    if (shapes.empty() || shapes.size() > 8) throw std::invalid_argument("place_shapes: 1-8 shapes");
    // shapes arrive centered at the origin
    for (auto& s : shapes) s = translated(s, -1.0 * s.centroid);
    return overlapping && shapes.size() > 1 ? place_chain(shapes, rng, config) : place_distinct(shapes, rng, config);
}

Rgb hsv_to_rgb(double hue_deg, double s, double v) noexcept {
    double h = std::fmod(hue_deg, 360.0);
    if (h < 0) h += 360.0;
    const double c = v * s;
    const double hp = h / 60.0;
    const double x = c * (1.0 - std::abs(std::fmod(hp, 2.0) - 1.0));
    double r = 0, g = 0, b = 0;
    switch (static_cast<int>(hp)) {
        case 0: r = c, g = x; break;
        case 1: r = x, g = c; break;
        case 2: g = c, b = x; break;
        case 3: g = x, b = c; break;
        case 4: r = x, b = c; break;
        default: r = c, b = x; break;
    }
    const double m = v - c;
    auto q = [](double u) { return static_cast<std::uint8_t>(std::lround(std::clamp(u, 0.0, 1.0) * 255.0)); };
    return {q(r + m), q(g + m), q(b + m)};
}

std::vector<double> assign_hues(std::size_t n, bool colored, Rng& rng) {
    std::vector<double> hues(n);
    const double offset = rng.uniform(0.0, 360.0);
    if (!colored) {
        std::fill(hues.begin(), hues.end(), offset);
        return hues;
    }
    for (std::size_t i = 0; i < n; ++i) hues[i] = std::fmod(offset + 360.0 * static_cast<double>(i) / static_cast<double>(n), 360.0);
    rng.shuffle(std::span<double>(hues));
    return hues;
}

void assign_colors(std::vector<BlobShape>& shapes, bool colored, Rng& rng) {
    const auto hues = assign_hues(shapes.size(), colored, rng);
    for (std::size_t i = 0; i < shapes.size(); ++i) shapes[i].color = hsv_to_rgb(hues[i], 0.8, 0.8);
}

std::string trial_id(Condition condition, int numerosity, int index) {
    return fmt::format("num-{}-{}-{:03d}", to_string(condition), numerosity, index);
}

std::uint64_t trial_seed(std::uint64_t root_seed, Condition condition, int numerosity, int index) {
    return Rng::stream_seed(root_seed, fmt::format("numerosity/{}/{}", to_string(condition), numerosity),
                            static_cast<std::uint64_t>(index));
}

std::string cell_label(Condition condition, int numerosity) {
    return fmt::format("{}/n{}", to_string(condition), numerosity);
}

NumerosityTrial generate_numerosity_trial(Condition condition, int numerosity, std::string id, std::uint64_t seed,
                                          const NumerosityConfig& config) {
    if (numerosity < 1 || numerosity > 8) throw std::invalid_argument("numerosity must be in 1..8");
    Rng rng(seed);
    NumerosityTrial trial;
    trial.trial_id = std::move(id);
    trial.condition = condition;
    trial.numerosity = numerosity;
    trial.seed = seed;
    trial.scale = rng.uniform(config.scale_lo, config.scale_hi);
    for (int restart = 0;; ++restart) {
        std::vector<BlobShape> shapes;
        for (int i = 0; i < numerosity; ++i) shapes.push_back(generate_blob(rng, trial.scale));
        try {
            trial.placement = place_shapes(std::move(shapes), is_overlapping(condition), rng, config.placement);
            break;
        } catch (const PlacementExhausted&) {
            if (restart + 1 >= config.max_trial_restarts) throw;
        }
    }
    trial.hues = assign_hues(trial.placement.shapes.size(), is_colored(condition), rng);
    for (std::size_t i = 0; i < trial.hues.size(); ++i) trial.placement.shapes[i].color = hsv_to_rgb(trial.hues[i], 0.8, 0.8);
    return trial;
}

raster::StimulusImage render_numerosity(const NumerosityTrial& trial, const NumerosityConfig& config) {
    raster::StimulusImage image(config.image_size, config.image_size);
    image.trial_id = trial.trial_id;
    const double s = config.image_size;
    for (const auto& shape : trial.placement.shapes) {
        raster::fill_polygon(image, std::span<const Polyline>(&shape.outline, 1), shape.color);
        Polyline px;
        px.reserve(shape.outline.size());
        for (const auto& p : shape.outline) px.push_back(s * p);
        raster::StrokeLayer layer(config.image_size, config.image_size);
        layer.polyline(px, true, config.outline_px);
        const Rgb edge{static_cast<std::uint8_t>(shape.color.r / 2), static_cast<std::uint8_t>(shape.color.g / 2),
                       static_cast<std::uint8_t>(shape.color.b / 2)};
        layer.composite(image, edge);
    }
    return image;
}

Json trial_to_json(const NumerosityTrial& t) {
    const std::string image = fmt::format("numerosity/{}.png", t.trial_id);
    Json shapes = Json::array();
    for (const auto& s : t.placement.shapes) {
        shapes.push_back({{"n_points", s.n_points},
                          {"centroid", {s.centroid.x, s.centroid.y}},
                          {"area_px", s.area_px},
                          {"color", fmt::format("#{:02x}{:02x}{:02x}", s.color.r, s.color.g, s.color.b)}});
    }
    const auto& vis = t.placement.visible_fraction;
    return Json{
        {"trial_id", t.trial_id},
        {"answer", t.numerosity},
        {"cell", cell_label(t.condition, t.numerosity)},
        {"image", image},
        {"panels", {image}},
        {"condition", std::string(to_string(t.condition))},
        {"numerosity", t.numerosity},
        {"seed", t.seed},
        {"scale", t.scale},
        {"adjacent_overlaps", t.placement.adjacent_overlaps},
        {"min_visible_fraction", vis.empty() ? 1.0 : *std::min_element(vis.begin(), vis.end())},
        {"shapes", shapes},
    };
}

NumerosityDataset generate_numerosity_dataset(const DatasetOptions& options, const NumerosityConfig& config,
                                              const std::filesystem::path& root) {
    if (options.per_cell < 1) throw std::invalid_argument("per_cell must be >= 1");
    const auto per = static_cast<std::size_t>(options.per_cell);
    const std::size_t n = kAllConditions.size() * 8 * per;
    std::vector<NumerosityTrial> trials(n);
    parallel_for(n, options.workers, [&](std::size_t i) {
        const auto condition = kAllConditions[i / (8 * per)];
        const int numerosity = 1 + static_cast<int>((i / per) % 8);
        const int k = static_cast<int>(i % per);
        auto trial = generate_numerosity_trial(condition, numerosity, trial_id(condition, numerosity, k),
                                               trial_seed(options.seed, condition, numerosity, k), config);
        if (!root.empty() && options.write_images) {
            raster::write_png(root / "numerosity" / (trial.trial_id + ".png"), render_numerosity(trial, config));
        }
        trials[i] = std::move(trial);
    });

    const auto& p = config.placement;
    Json conditions = Json::array();
    for (auto c : kAllConditions) conditions.push_back(std::string(to_string(c)));
    Json manifest{
        {"task", "numerosity"},
        {"format_version", 1},
        {"seed", options.seed},
        {"per_cell", options.per_cell},
        {"n_trials", n},
        {"rng", std::string(kRngName)},
        {"conditions", conditions},
        {"numerosities", {1, 2, 3, 4, 5, 6, 7, 8}},
        {"blob",
         {{"anchors", "K uniform in {3,4,5}"},
          {"samples_per_segment", kSamplesPerSegment},
          {"tangent_scale", kTangentScale},
          {"tangent_turn", kTangentTurn},
          {"scale_range", {config.scale_lo, config.scale_hi}}}},
        {"placement",
         {{"resolution", p.resolution},
          {"min_gap_px", p.min_gap_px},
          {"max_attempts", p.max_attempts},
          {"overlap_band", {p.overlap_lo, p.overlap_hi}},
          {"overlap_measure", "intersection over min area (IoM)"},
          {"adjacency", "consecutive shapes in the placement chain"},
          {"draw_order", "chain order; later shapes occlude earlier ones"},
          {"visibility_floor", p.visibility_floor}}},
        {"raster", {{"image_size", config.image_size}, {"outline_px", config.outline_px}, {"hsv_sv", {0.8, 0.8}}}},
    };
    Json list = Json::array();
    for (const auto& t : trials) list.push_back(trial_to_json(t));
    manifest["trials"] = std::move(list);
    if (!root.empty()) write_json(root / manifest_filename(Task::Numerosity), manifest);
    return {std::move(trials), std::move(manifest)};
}

}  // namespace serialprobe::numerosity
