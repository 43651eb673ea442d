#include <gtest/gtest.h>

#include <cmath>
#include <map>
#include <numbers>
#include <set>

#include "serialprobe/rotation.hpp"
#include "test_support.hpp"

using namespace serialprobe;
using namespace serialprobe::rotation;
namespace sp_test = serialprobe::testing;

namespace {

double max_vertex_gap(const std::vector<Polyline>& a, const std::vector<Polyline>& b) {
    EXPECT_EQ(a.size(), b.size());
    double worst = 0;
    for (std::size_t r = 0; r < a.size() && r < b.size(); ++r) {
        EXPECT_EQ(a[r].size(), b[r].size());
        for (std::size_t k = 0; k < a[r].size() && k < b[r].size(); ++k) worst = std::max(worst, geom::distance(a[r][k], b[r][k]));
    }
    return worst;
}

std::vector<Polyline> mirrored_about_panel_axis(std::vector<Polyline> rings) {
    for (auto& ring : rings)
        for (auto& p : ring) p.x = 1.0 - p.x;
    return rings;
}

}  // namespace

TEST(Glyphs, LibraryPassesGate) {
    const auto& lib = glyph_library();
    ASSERT_EQ(lib.size(), 26u);
    std::set<char> labels;
    for (const auto& g : lib) {
        labels.insert(g.label);
        EXPECT_LT(g.chirality_score, kChiralityLimit) << g.label;
        EXPECT_GT(g.chirality_score, 0.0);
        EXPECT_EQ(glyph_bitmap(g.label).size(), 7u);
    }
    EXPECT_EQ(labels.size(), 26u);
}

TEST(Glyphs, BitmapRectanglesMatchInk) {
    const auto g = glyph_from_bitmap('T', {"#####", "..#..", "..#..", "..#..", "..#..", "..#..", "..#.."});
    EXPECT_EQ(g.rings.size(), 7u);  // one rectangle per horizontal run
    EXPECT_NEAR(g.width, 5.0 / 7.0, 1e-15);
}

TEST(Chirality, CircleIsSymmetric) {
    Glyph disc;
    disc.label = 'O';
    Polyline ring;
    for (int i = 0; i < 720; ++i) {
        const double a = 2 * std::numbers::pi * i / 720;
        ring.push_back({disc.width / 2 + 0.3 * std::cos(a), 0.5 + 0.3 * std::sin(a)});
    }
    disc.rings = {ring};
    EXPECT_GT(check_chirality(disc), 0.99);
}

TEST(Chirality, RLikeGlyphIsChiral) {
    const auto g = glyph_from_bitmap('R', glyph_bitmap('R'));
    EXPECT_LT(check_chirality(g), kChiralityLimit);
}

TEST(Chirality, MirrorHasSameScore) {
    for (char c : {'F', 'J', 'R', 'S'}) {
        const auto g = glyph_from_bitmap(c, glyph_bitmap(c));
        // Mirror the bitmap rows; the mirrored glyph scores the same up to raster error.
        std::vector<std::string> rows = glyph_bitmap(c);
        for (auto& r : rows) std::reverse(r.begin(), r.end());
        const auto m = glyph_from_bitmap(c, rows);
        EXPECT_NEAR(check_chirality(g), check_chirality(m), 0.01) << c;
    }
}

TEST(Chirality, SymmetricLetterIsRejected) {
    // 'H' has mirror symmetry, so the gate must score it at 1 (up to raster error).
    const auto h = glyph_from_bitmap('H', {"#...#", "#...#", "#...#", "#####", "#...#", "#...#", "#...#"});
    EXPECT_GE(check_chirality(h), kChiralityLimit);
    auto lib = glyph_library();
    lib[7] = h;
    lib[7].chirality_score = check_chirality(h);
    DatasetOptions opt;
    opt.write_images = false;
    try {
        generate_rotation_dataset(lib, opt, {});
        FAIL();
    } catch (const ChiralityError& e) {
        EXPECT_EQ(e.failing, std::vector<char>{'H'});
    }
}

TEST(Transform, IdentityAndPeriodicity) {
    const auto& g = glyph_library()[0];
    const auto a = transform_glyph(g, false, 0), b = transform_glyph(g, false, 360), c = transform_glyph(g, false, 720);
    EXPECT_LT(max_vertex_gap(a, b), 1e-12);
    EXPECT_LT(max_vertex_gap(a, c), 1e-12);
    // Identity up to the fixed placement: the box center lands at the panel center
    // with the box diagonal scaled to 0.8.
    const double k = 0.8 / std::hypot(g.width, g.height);
    for (std::size_t r = 0; r < g.rings.size(); ++r) {
        for (std::size_t i = 0; i < g.rings[r].size(); ++i) {
            EXPECT_NEAR(a[r][i].x, 0.5 + k * (g.rings[r][i].x - g.width / 2), 1e-12);
            EXPECT_NEAR(a[r][i].y, 0.5 + k * (g.rings[r][i].y - g.height / 2), 1e-12);
        }
    }
}

TEST(Transform, MirrorIsAnInvolution) {
    for (const auto& g : glyph_library()) {
        const auto plain = transform_glyph(g, false, 0);
        const auto once = transform_glyph(g, true, 0);
        EXPECT_GT(max_vertex_gap(plain, once), 0.01) << g.label;
        EXPECT_LT(max_vertex_gap(mirrored_about_panel_axis(once), plain), 1e-12) << g.label;
    }
}

TEST(Transform, RotationComposes) {
    for (const auto& g : glyph_library()) {
        for (bool m : {false, true}) {
            for (int theta = 0; theta < 360; theta += 50) {
                EXPECT_LT(max_vertex_gap(rotate_rings(transform_glyph(g, m, 0), theta), transform_glyph(g, m, theta)),
                          1e-12);
            }
        }
    }
}

TEST(Transform, CounterclockwiseAsDisplayed) {
    // y grows downward, so a point right of center moves up (smaller y) under +90.
    const std::vector<Polyline> ring{{{0.9, 0.5}}};
    const auto r = rotate_rings(ring, 90);
    EXPECT_NEAR(r[0][0].x, 0.5, 1e-12);
    EXPECT_NEAR(r[0][0].y, 0.1, 1e-12);
}

TEST(Trials, CanonicalSetIsBalanced) {
    const auto all = all_trials();
    ASSERT_EQ(all.size(), 3744u);
    int same = 0, first_mirrored = 0;
    std::map<int, int> by_theta;
    std::set<std::string> ids;
    for (const auto& t : all) {
        same += t.pair_same;
        first_mirrored += t.first_mirrored;
        ++by_theta[t.theta_deg];
        ids.insert(t.trial_id);
        EXPECT_EQ(t.answer(), t.pair_same ? 1 : 0);
        EXPECT_EQ(t.right_mirrored(), t.pair_same ? t.first_mirrored : !t.first_mirrored);
        EXPECT_LE(t.disparity_deg(), 180);
    }
    EXPECT_EQ(same, 1872);
    EXPECT_EQ(first_mirrored, 1872);
    EXPECT_EQ(by_theta.size(), 36u);
    for (const auto& [theta, n] : by_theta) EXPECT_EQ(n, 104);
    EXPECT_EQ(ids.size(), 3744u);
}

TEST(Trials, Disparity) {
    RotationTrial t;
    t.theta_deg = 350;
    EXPECT_EQ(t.disparity_deg(), 10);
    t.theta_deg = 180;
    EXPECT_EQ(t.disparity_deg(), 180);
}

TEST(Render, SameAtZeroGivesIdenticalPanels) {
    RotationTrial t;
    t.trial_id = trial_id('F', 0, true, false);
    t.label = 'F';
    const auto& g = glyph_library()[5];
    ASSERT_EQ(g.label, 'F');
    const auto img = render_rotation(t, g);
    EXPECT_EQ(img.left.pixels, img.right.pixels);
    t.pair_same = false;
    const auto mirror = render_rotation(t, g);
    EXPECT_NE(mirror.left.pixels, mirror.right.pixels);
}

TEST(Render, GroundTruthSample) {
    // Same pairs: right outline is the rotated left outline. Mirror pairs: no
    // rotation aligns the panels.
    auto rng = Rng::stream(1, "sample");
    const auto& lib = glyph_library();
    const auto all = all_trials();
    for (int k = 0; k < 12; ++k) {
        const auto& t = all[rng.below(all.size())];
        const auto& g = lib[static_cast<std::size_t>(t.label - 'A')];
        const auto left = transform_glyph(g, t.first_mirrored, 0);
        const auto right = transform_glyph(g, t.right_mirrored(), t.theta_deg);
        if (t.pair_same) {
            EXPECT_LT(max_vertex_gap(rotate_rings(left, t.theta_deg), right), 1e-12) << t.trial_id;
        } else {
            EXPECT_LT(max_rotational_iou(left, right), kChiralityLimit) << t.trial_id;
        }
    }
}

TEST(Dataset, ScaledPrefixAndDeterminism) {
    DatasetOptions opt;
    opt.seed = 9;
    opt.scale = 0.05;
    opt.write_images = false;
    const auto a = generate_rotation_dataset(glyph_library(), opt, {});
    EXPECT_EQ(a.trials.size(), 188u);
    const auto b = generate_rotation_dataset(glyph_library(), opt, {});
    EXPECT_EQ(a.manifest.dump(), b.manifest.dump());
    opt.scale = 1.0;
    const auto full = generate_rotation_dataset(glyph_library(), opt, {});
    ASSERT_EQ(full.trials.size(), 3744u);
    for (std::size_t i = 0; i < a.trials.size(); ++i) EXPECT_EQ(a.trials[i].trial_id, full.trials[i].trial_id);
    for (std::size_t i = 0; i < full.trials.size(); ++i) EXPECT_EQ(full.trials[i].order, static_cast<int>(i));
    opt.seed = 10;
    EXPECT_NE(generate_rotation_dataset(glyph_library(), opt, {}).trials[0].trial_id, full.trials[0].trial_id);
}

TEST(Dataset, WritesImagesAndManifest) {
    sp_test::ScratchDir dir;
    DatasetOptions opt;
    opt.seed = 2;
    opt.scale = 0.01;
    RotationConfig cfg;
    cfg.panel_size = 64;
    generate_rotation_dataset(glyph_library(), opt, cfg, dir.path());
    const auto m = load_manifest(dir / "rotation_manifest.json");
    ASSERT_EQ(m.trials.size(), 38u);
    for (const auto& t : m.trials) {
        EXPECT_TRUE(std::filesystem::exists(dir.path() / t.image));
        ASSERT_EQ(t.panels.size(), 2u);
        for (const auto& p : t.panels) EXPECT_TRUE(std::filesystem::exists(dir.path() / p));
        EXPECT_TRUE(t.answer == 0 || t.answer == 1);
    }
}
