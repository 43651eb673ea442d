#include "serialprobe/rotation.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>

#include <fmt/format.h>

#include "serialprobe/parallel.hpp"
#include "serialprobe/rng.hpp"

namespace serialprobe::rotation {

namespace {

using geom::Vec2;

// 5x7 letters. Letters with a mirror axis carry a small tweak (a trimmed
// serif, a spur, a shortened stroke) so that no rotation maps them onto their
// mirror image.
const std::map<char, std::vector<std::string>>& bitmaps() {
    static const std::map<char, std::vector<std::string>> table{
        {'A', {".###.", "#...#", "#...#", "#####", "#...#", "#...#", "#...."}},
        {'B', {"#####", "#...#", "#...#", "####.", "#...#", "#...#", "####."}},
        {'C', {".###.", "#...#", "#....", "#....", "#...#", "#...#", ".###."}},
        {'D', {"####.", "#..#.", "#...#", "#...#", "#...#", "#..#.", "###.."}},
        {'E', {"#####", "#....", "#....", "####.", "#....", "#....", "####."}},
        {'F', {"#####", "#....", "#....", "####.", "#....", "#....", "#...."}},
        {'G', {".###.", "#...#", "#....", "#.###", "#...#", "#...#", ".###."}},
        {'H', {"#....", "#...#", "#...#", "#####", "#...#", "#...#", "#...#"}},
        {'I', {".###.", "..#..", "..#..", "..#..", "..#..", "..#..", "..##."}},
        {'J', {"..###", "...#.", "...#.", "...#.", "#..#.", "#..#.", ".##.."}},
        {'K', {"#....", "#..#.", "#.#..", "##...", "#.#..", "#..#.", "#...#"}},
        {'L', {"#....", "#....", "#....", "#....", "#....", "#....", "#####"}},
        {'M', {"#...#", "##.##", "#.#.#", "#.#.#", "#...#", "#...#", "#...."}},
        {'N', {"#...#", "#...#", "##..#", "#.#.#", "#..##", "#...#", "#...#"}},
        {'O', {".###.", "#...#", "#...#", "#...#", "#...#", "#...#", ".####"}},
        {'P', {"####.", "#...#", "#...#", "####.", "#....", "#....", "#...."}},
        {'Q', {".###.", "#...#", "#...#", "#...#", "#.#.#", "#..#.", ".##.#"}},
        {'R', {"####.", "#...#", "#...#", "####.", "#.#..", "#..#.", "#...#"}},
        {'S', {".####", "#....", "#....", ".###.", "....#", "....#", "####."}},
        {'T', {".####", "..#..", "..#..", "..#..", "..#..", "..#..", "..#.."}},
        {'U', {"#...#", "#...#", "#...#", "#...#", "#...#", "#...#", ".####"}},
        {'V', {"....#", "#...#", "#...#", "#...#", "#...#", ".#.#.", "..#.."}},
        {'W', {"....#", "#...#", "#...#", "#.#.#", "#.#.#", "#.#.#", ".#.#."}},
        {'X', {"#...#", "#...#", ".#.#.", "..#..", ".#.#.", "#...#", "#...."}},
        {'Y', {"#...#", "#...#", ".#.#.", "..#..", "..#..", "..#..", ".##.."}},
        {'Z', {"#####", "....#", "...#.", "..#..", ".#...", "#....", "#####"}},
    };
    return table;
}

constexpr double kPanelDiagonal = 0.8;

Vec2 rotate_about(Vec2 p, Vec2 c, double cs, double sn) {
    const Vec2 q = p - c;
    // y points down, so this turns counterclockwise on screen
    return {c.x + q.x * cs + q.y * sn, c.y - q.x * sn + q.y * cs};
}

std::pair<double, double> cos_sin(double theta_deg) {
    double t = std::fmod(theta_deg, 360.0);
    if (t < 0) t += 360.0;
    const double rad = t * std::numbers::pi / 180.0;
    return {std::cos(rad), std::sin(rad)};
}

raster::SpanMask mask_of(const std::vector<Polyline>& rings, int resolution) {
    return raster::SpanMask::from_polygon(std::span<const Polyline>(rings), resolution);
}

}  // namespace

Glyph glyph_from_bitmap(char label, const std::vector<std::string>& rows) {
    Glyph g;
    g.label = label;
    const double cell = 1.0 / static_cast<double>(rows.size());
    std::size_t cols = 0;
    for (std::size_t r = 0; r < rows.size(); ++r) {
        const auto& row = rows[r];
        cols = std::max(cols, row.size());
        for (std::size_t c = 0; c < row.size();) {
            if (row[c] != '#') {
                ++c;
                continue;
            }
            std::size_t end = c;
            while (end < row.size() && row[end] == '#') ++end;
            const double x0 = static_cast<double>(c) * cell, x1 = static_cast<double>(end) * cell;
            const double y0 = static_cast<double>(r) * cell, y1 = static_cast<double>(r + 1) * cell;
            g.rings.push_back({{x0, y0}, {x1, y0}, {x1, y1}, {x0, y1}});
            c = end;
        }
    }
    g.width = static_cast<double>(cols) * cell;
    g.height = 1.0;
    return g;
}

const std::vector<std::string>& glyph_bitmap(char label) {
    const auto& t = bitmaps();
    const auto it = t.find(label);
    if (it == t.end()) throw std::invalid_argument(fmt::format("no glyph for '{}'", label));
    return it->second;
}

const std::vector<Glyph>& glyph_library() {
    static const std::vector<Glyph> library = [] {
        std::vector<Glyph> out;
        for (const auto& [label, rows] : bitmaps()) {
            auto g = glyph_from_bitmap(label, rows);
            g.chirality_score = check_chirality(g);
            out.push_back(std::move(g));
        }
        return out;
    }();
    return library;
}

std::vector<Polyline> transform_glyph(const Glyph& glyph, bool mirrored, double theta_deg) {
    const auto [cs, sn] = cos_sin(theta_deg);
    const Vec2 c{glyph.width / 2.0, glyph.height / 2.0};
    const double k = kPanelDiagonal / std::hypot(glyph.width, glyph.height);
    std::vector<Polyline> out = glyph.rings;
    for (auto& ring : out) {
        for (auto& p : ring) {
            Vec2 q = p - c;
            if (mirrored) q.x = -q.x;
            const Vec2 r = rotate_about(q, {0.0, 0.0}, cs, sn);
            p = Vec2{0.5, 0.5} + k * r;
        }
    }
    return out;
}

std::vector<Polyline> rotate_rings(const std::vector<Polyline>& rings, double theta_deg, Vec2 center) {
    const auto [cs, sn] = cos_sin(theta_deg);
    std::vector<Polyline> out = rings;
    for (auto& ring : out) {
        for (auto& p : ring) p = rotate_about(p, center, cs, sn);
    }
    return out;
}

double max_rotational_iou(const std::vector<Polyline>& left, const std::vector<Polyline>& right, int resolution) {
    const auto target = mask_of(right, resolution);
    if (target.empty()) throw raster::EmptyMask("max_rotational_iou: empty target");
    double best = 0.0;
    for (int phi = 0; phi < 360; ++phi) {
        best = std::max(best, raster::iou(target, mask_of(rotate_rings(left, phi), resolution)));
    }
    return best;
}

double check_chirality(const Glyph& glyph, int resolution) {
    const auto mirror = mask_of(transform_glyph(glyph, true, 0.0), resolution);
    if (mirror.empty()) throw raster::EmptyMask(fmt::format("glyph '{}' rasterizes to nothing", glyph.label));
    double best = 0.0;
    for (int phi = 0; phi < 360; ++phi) {
        best = std::max(best, raster::iou(mirror, mask_of(transform_glyph(glyph, false, phi), resolution)));
    }
    return best;
}

ChiralityError::ChiralityError(std::vector<char> bad)
    : std::runtime_error(fmt::format("glyphs fail the chirality gate: {}", std::string(bad.begin(), bad.end()))),
      failing(std::move(bad)) {}

std::string trial_id(char label, int theta_deg, bool pair_same, bool first_mirrored) {
    return fmt::format("rot-{}-{:03d}-{}-{}", label, theta_deg, pair_same ? "same" : "mirror",
                       first_mirrored ? "m1" : "m0");
}

std::string cell_label(int theta_deg, bool pair_same, bool first_mirrored) {
    return fmt::format("{:03d}/{}/{}", theta_deg, pair_same ? "same" : "mirror", first_mirrored ? "m1" : "m0");
}

RotationImages render_rotation(const RotationTrial& trial, const Glyph& glyph, const RotationConfig& config) {
    RotationImages out;
    out.left = raster::StimulusImage(config.panel_size, config.panel_size);
    out.right = raster::StimulusImage(config.panel_size, config.panel_size);
    raster::fill_polygon(out.left, transform_glyph(glyph, trial.first_mirrored, 0.0), raster::kBlack);
    raster::fill_polygon(out.right, transform_glyph(glyph, trial.right_mirrored(), trial.theta_deg), raster::kBlack);
    out.left.trial_id = out.right.trial_id = trial.trial_id;
    out.left.panel = {raster::PanelKind::PairLeft, 1};
    out.right.panel = {raster::PanelKind::PairRight, 2};
    out.pair = raster::compose_pair(out.left, out.right, config.gutter);
    out.pair.trial_id = trial.trial_id;
    return out;
}

std::vector<RotationTrial> all_trials() {
    std::vector<RotationTrial> out;
    out.reserve(26 * 36 * 4);
    for (char c = 'A'; c <= 'Z'; ++c) {
        for (int theta = 0; theta < 360; theta += 10) {
            for (bool same : {true, false}) {
                for (bool m : {false, true}) {
                    RotationTrial t;
                    t.trial_id = trial_id(c, theta, same, m);
                    t.label = c;
                    t.theta_deg = theta;
                    t.pair_same = same;
                    t.first_mirrored = m;
                    out.push_back(std::move(t));
                }
            }
        }
    }
    return out;
}

Json trial_to_json(const RotationTrial& t) {
    const std::string dir = "rotation/" + t.trial_id;
    return Json{
        {"trial_id", t.trial_id},
        {"answer", t.answer()},
        {"cell", cell_label(t.theta_deg, t.pair_same, t.first_mirrored)},
        {"image", dir + "/pair.png"},
        {"panels", {dir + "/left.png", dir + "/right.png"}},
        {"char", std::string(1, t.label)},
        {"theta_deg", t.theta_deg},
        {"disparity_deg", t.disparity_deg()},
        {"pair_same", t.pair_same},
        {"first_mirrored", t.first_mirrored},
        {"right_mirrored", t.right_mirrored()},
        {"order", t.order},
    };
}

RotationDataset generate_rotation_dataset(const std::vector<Glyph>& glyphs, const DatasetOptions& options,
                                          const RotationConfig& config, const std::filesystem::path& root) {
    std::vector<char> failing;
    std::map<char, const Glyph*> by_label;
    for (const auto& g : glyphs) {
        if (!(g.chirality_score < kChiralityLimit)) failing.push_back(g.label);
        by_label[g.label] = &g;
    }
    if (!failing.empty()) throw ChiralityError(failing);
    for (char c = 'A'; c <= 'Z'; ++c) {
        if (!by_label.count(c)) throw std::invalid_argument(fmt::format("glyph set is missing '{}'", c));
    }
    if (!(options.scale > 0.0 && options.scale <= 1.0)) throw std::invalid_argument("rotation scale must be in (0, 1]");

    auto trials = all_trials();
    const std::size_t total = trials.size();
    auto rng = Rng::stream(options.seed, "rotation/order");
    rng.shuffle(std::span<RotationTrial>(trials));
    const auto keep = std::min(total, static_cast<std::size_t>(std::ceil(static_cast<double>(total) * options.scale - 1e-9)));
    trials.resize(keep);
    for (std::size_t i = 0; i < trials.size(); ++i) trials[i].order = static_cast<int>(i);

    if (!root.empty() && options.write_images) {
        parallel_for(trials.size(), options.workers, [&](std::size_t i) {
            const auto& t = trials[i];
            const auto images = render_rotation(t, *by_label.at(t.label), config);
            const auto dir = root / "rotation" / t.trial_id;
            raster::write_png(dir / "pair.png", images.pair);
            raster::write_png(dir / "left.png", images.left);
            raster::write_png(dir / "right.png", images.right);
        });
    }

    Json glyph_info = Json::array();
    for (char c = 'A'; c <= 'Z'; ++c) {
        const auto* g = by_label.at(c);
        glyph_info.push_back({{"char", std::string(1, c)}, {"chirality_score", g->chirality_score}});
    }
    Json manifest{
        {"task", "rotation"},
        {"format_version", 1},
        {"seed", options.seed},
        {"scale", options.scale},
        {"n_trials", trials.size()},
        {"n_full", total},
        {"rng", std::string(kRngName)},
        {"angles", "0..350 step 10"},
        {"raster", {{"panel_size", config.panel_size}, {"gutter", config.gutter}, {"chirality_resolution", kChiralityResolution}}},
        {"glyphs", glyph_info},
        {"notes",
         {{"answer", "1 = same, 0 = mirror"},
          {"left_panel", "always at 0 degrees; theta is the full relative angle"},
          {"mirror", "reflection about the vertical axis through the glyph box center, before rotation"},
          {"rotation", "counterclockwise as displayed, about the glyph box center, placed at the panel center"},
          {"order", "trials listed in seeded random order; scaled runs keep a prefix"}}},
    };
    Json list = Json::array();
    for (const auto& t : trials) list.push_back(trial_to_json(t));
    manifest["trials"] = std::move(list);
    if (!root.empty()) write_json(root / manifest_filename(Task::Rotation), manifest);
    return {std::move(trials), std::move(manifest)};
}

}  // namespace serialprobe::rotation
