#include <gtest/gtest.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>

#include "serialprobe/concept.hpp"
#include "serialprobe/geometry.hpp"
#include "serialprobe/raster.hpp"
#include "test_support.hpp"

using namespace serialprobe;
using namespace serialprobe::raster;

namespace {

Polyline square(double x0, double y0, double side) {
    return {{x0, y0}, {x0 + side, y0}, {x0 + side, y0 + side}, {x0, y0 + side}};
}

Polyline regular(Vec2 c, double r, int n, double phase = 0) {
    Polyline out;
    for (int i = 0; i < n; ++i) {
        const double a = phase + 2 * std::numbers::pi * i / n;
        out.push_back({c.x + r * std::cos(a), c.y + r * std::sin(a)});
    }
    return out;
}

std::int64_t count_pixels(const StimulusImage& img, Rgb c) {
    std::int64_t n = 0;
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x) n += img.at(x, y) == c;
    return n;
}

bool is_red(Rgb c) { return c.r > 150 && c.g < 120 && c.b < 120; }

geom::RealizedScene scene_of(const char* source, std::uint64_t seed = 1) {
    return geom::realize(dsl::parse_concept(source), seed);
}

}  // namespace

TEST(RenderScene, HorizontalSegmentIsABar) {
    geom::RealizedScene s = scene_of("l1 = line(p1(), p2())");
    s.objects["l1"] = geom::Segment{{0.25, 0.5}, {0.75, 0.5}};
    const auto img = render_scene(s, 256, 3.0);
    ASSERT_EQ(img.width, 256);
    int min_x = 256, max_x = -1, min_y = 256, max_y = -1;
    for (int y = 0; y < 256; ++y) {
        for (int x = 0; x < 256; ++x) {
            if (img.at(x, y) == kWhite) continue;
            min_x = std::min(min_x, x), max_x = std::max(max_x, x);
            min_y = std::min(min_y, y), max_y = std::max(max_y, y);
            EXPECT_EQ(img.at(x, y).r, img.at(x, y).g);  // gray levels only
        }
    }
    // Bar spans x in [64,192] (plus round caps) and a few rows around y = 128.
    EXPECT_NEAR(min_x, 64 - 2, 2);
    EXPECT_NEAR(max_x, 192 + 1, 2);
    EXPECT_GE(min_y, 124);
    EXPECT_LE(max_y, 131);
    EXPECT_LE(max_y - min_y + 1, 6);
    EXPECT_EQ(img.at(128, 128), kBlack);
}

TEST(RenderScene, InvisibleObjectsAreBlank) {
    const auto s = scene_of("c1* = circle(p1(), p2())\nl1* = line(p3(c1), p4(c1))");
    const auto img = render_scene(s, 128);
    EXPECT_EQ(count_pixels(img, kWhite), 128 * 128);
}

TEST(RenderScene, Deterministic) {
    const auto s = scene_of("c1 = circle(p1(), p2())\nl1 = line(p3(c1), p4(c1))", 5);
    EXPECT_EQ(render_scene(s), render_scene(s));
    EXPECT_EQ(encode_png(render_scene(s)), encode_png(render_scene(s)));
}

TEST(RenderScene, CircleStrokeAtRadius) {
    geom::RealizedScene s = scene_of("c1 = circle(p1(), p2())");
    s.objects["c1"] = geom::Circle{{0.5, 0.5}, 0.3};
    const auto img = render_scene(s, 200, 2.0);
    for (int k = 0; k < 360; k += 15) {
        const double a = k * std::numbers::pi / 180;
        const int x = static_cast<int>(100 + 60 * std::cos(a)), y = static_cast<int>(100 + 60 * std::sin(a));
        EXPECT_LT(img.at(x, y).r, 200) << k;
    }
    EXPECT_EQ(img.at(100, 100), kWhite);
}

TEST(Array, LayoutArithmetic) {
    EXPECT_EQ(array_cell_origin(1, 256, 8), std::make_pair(8, 8));
    EXPECT_EQ(array_cell_origin(3, 256, 8), std::make_pair(8 + 2 * 264, 8));
    EXPECT_EQ(array_cell_origin(4, 256, 8), std::make_pair(8, 8 + 264));
    EXPECT_EQ(array_cell_origin(6, 256, 8), std::make_pair(8 + 2 * 264, 8 + 264));
}

TEST(Array, RedNumeralsAtAnchors) {
    const std::array<StimulusImage, 6> cells{StimulusImage(128, 128), StimulusImage(128, 128), StimulusImage(128, 128),
                                             StimulusImage(128, 128), StimulusImage(128, 128), StimulusImage(128, 128)};
    const ArrayLayout layout;
    const auto img = compose_oddball_array(cells, layout);
    EXPECT_EQ(img.width, 3 * 128 + 4 * 8);
    EXPECT_EQ(img.height, 2 * 128 + 3 * 8);
    EXPECT_EQ(img.at(0, 0), kGutterGray);
    const double inset = layout.index_inset * 128, h = layout.index_height * 128;
    for (int pos = 1; pos <= 6; ++pos) {
        const auto [ox, oy] = array_cell_origin(pos, 128, 8);
        int inside = 0, outside = 0;
        for (int y = oy; y < oy + 128; ++y) {
            for (int x = ox; x < ox + 128; ++x) {
                const bool in_box = x >= ox + inset - 3 && x <= ox + inset + h + 3 && y >= oy + inset - 3 &&
                                    y <= oy + inset + h + 3;
                const Rgb c = img.at(x, y);
                if (c == kWhite) continue;
                (in_box ? inside : outside)++;
                if (in_box) {
                    EXPECT_GT(c.r, c.g);
                }
            }
        }
        EXPECT_GT(inside, 10) << pos;
        EXPECT_EQ(outside, 0) << pos;
    }
}

TEST(Array, NumeralsArePositional) {
    std::array<StimulusImage, 6> a{StimulusImage(96, 96), StimulusImage(96, 96), StimulusImage(96, 96),
                                   StimulusImage(96, 96), StimulusImage(96, 96), StimulusImage(96, 96)};
    // Mark each cell's content with a distinctive blue square at the bottom right.
    for (int i = 0; i < 6; ++i)
        for (int y = 60 + i; y < 90; ++y)
            for (int x = 60; x < 90; ++x) a[static_cast<std::size_t>(i)].set(x, y, {0, 0, 255});
    auto b = a;
    std::rotate(b.begin(), b.begin() + 2, b.end());
    const auto ia = compose_oddball_array(a), ib = compose_oddball_array(b);
    ASSERT_NE(ia, ib);
    for (int y = 0; y < ia.height; ++y) {
        for (int x = 0; x < ia.width; ++x) {
            EXPECT_EQ(is_red(ia.at(x, y)), is_red(ib.at(x, y)));
        }
    }
}

TEST(Array, WrongCellCount) {
    const std::vector<StimulusImage> five(5, StimulusImage(32, 32));
    EXPECT_THROW(compose_oddball_array(five), SizeMismatch);
    std::vector<StimulusImage> six(6, StimulusImage(32, 32));
    six[3] = StimulusImage(33, 32);
    EXPECT_THROW(compose_oddball_array(six), SizeMismatch);
}

TEST(Pair, Layout) {
    StimulusImage l(50, 40), r(50, 40);
    r.set(0, 0, kBlack);
    const auto p = compose_pair(l, r, 8);
    EXPECT_EQ(p.width, 50 + 50 + 24);
    EXPECT_EQ(p.height, 40 + 16);
    EXPECT_EQ(p.at(8 + 50 + 8, 8), kBlack);
    EXPECT_EQ(p.at(60, 20), kGutterGray);
    EXPECT_THROW(compose_pair(l, StimulusImage(50, 41)), SizeMismatch);
}

TEST(Numerals, AllDigitsHaveStrokes) {
    for (int d = 0; d <= 9; ++d) {
        const auto strokes = numeral_strokes(d);
        ASSERT_FALSE(strokes.empty()) << d;
        for (const auto& line : strokes)
            for (Vec2 p : line) {
                EXPECT_GE(p.x, 0.0);
                EXPECT_LE(p.x, 1.0);
                EXPECT_GE(p.y, 0.0);
                EXPECT_LE(p.y, 1.0);
            }
    }
}

TEST(Polygon, QuarterSquareArea) {
    const int w = 400;
    const auto img = rasterize_polygon(square(0.25, 0.25, 0.5), kBlack, StimulusImage(w, w));
    double ink = 0;
    for (int y = 0; y < w; ++y)
        for (int x = 0; x < w; ++x) ink += (255 - img.at(x, y).r) / 255.0;
    EXPECT_NEAR(ink, 0.25 * w * w, 0.01 * 0.25 * w * w);
    const auto mask = SpanMask::from_polygon(square(0.25, 0.25, 0.5), w);
    EXPECT_NEAR(static_cast<double>(mask.area()), 0.25 * w * w, 0.01 * 0.25 * w * w);
}

TEST(Polygon, DisjointBothVisibleAndOcclusion) {
    const Rgb red{255, 0, 0}, blue{0, 0, 255};
    auto img = rasterize_polygon(square(0.1, 0.1, 0.3), red, StimulusImage(100, 100));
    img = rasterize_polygon(square(0.6, 0.6, 0.3), blue, img);
    EXPECT_EQ(img.at(25, 25), red);
    EXPECT_EQ(img.at(75, 75), blue);
    img = rasterize_polygon(square(0.3, 0.3, 0.3), blue, img);
    EXPECT_EQ(img.at(35, 35), blue);  // inside both, drawn later
    EXPECT_EQ(img.at(15, 15), red);
}

TEST(Polygon, EvenOddHole) {
    const std::vector<Polyline> rings{square(0.1, 0.1, 0.8), square(0.4, 0.4, 0.2)};
    StimulusImage img(100, 100);
    fill_polygon(img, rings, kBlack);
    EXPECT_EQ(img.at(20, 20), kBlack);
    EXPECT_EQ(img.at(50, 50), kWhite);
    const auto m = SpanMask::from_polygon(rings, 100);
    EXPECT_TRUE(m.contains(20, 20));
    EXPECT_FALSE(m.contains(50, 50));
    EXPECT_EQ(m.area(), 80 * 80 - 20 * 20);
}

TEST(Overlap, IdenticalDisjointAndHalfShift) {
    const auto a = square(0.2, 0.2, 0.4);
    EXPECT_DOUBLE_EQ(mask_overlap_ratio(a, a), 1.0);
    EXPECT_DOUBLE_EQ(mask_overlap_ratio(a, square(0.7, 0.7, 0.2)), 0.0);
    EXPECT_NEAR(mask_overlap_ratio(a, square(0.4, 0.2, 0.4)), 0.5, 0.01);
}

TEST(Overlap, AnalyticDiscOracle) {
    // Two unit-radius-r discs at distance d: lens area 2r^2 acos(d/2r) - (d/2) sqrt(4r^2 - d^2).
    const double r = 0.2;
    for (double d : {0.05, 0.1, 0.2, 0.3}) {
        const auto a = regular({0.4, 0.5}, r, 720), b = regular({0.4 + d, 0.5}, r, 720);
        const double lens = 2 * r * r * std::acos(d / (2 * r)) - d / 2 * std::sqrt(4 * r * r - d * d);
        EXPECT_NEAR(mask_overlap_ratio(a, b, 1024), lens / (std::numbers::pi * r * r), 0.01) << d;
    }
}

TEST(Overlap, EmptyMaskThrows) {
    const Polyline tiny{{0.5, 0.5}, {0.50001, 0.5}, {0.5, 0.50001}};
    EXPECT_THROW(mask_overlap_ratio(tiny, square(0.1, 0.1, 0.5), 256), EmptyMask);
    EXPECT_THROW(mask_overlap_ratio(square(0.1, 0.1, 0.5), square(0.1, 0.1, 0.5), 64), std::invalid_argument);
}

TEST(SpanMask, SetAlgebraMatchesPixelwise) {
    auto rng = Rng::stream(4, "masks");
    for (int trial = 0; trial < 30; ++trial) {
        const int res = 64;
        const auto a = SpanMask::from_polygon(regular({rng.uniform(0.2, 0.8), rng.uniform(0.2, 0.8)},
                                                      rng.uniform(0.05, 0.3), 3 + static_cast<int>(rng.below(6)),
                                                      rng.uniform(0, 6.28)),
                                              res);
        const auto b = SpanMask::from_polygon(regular({rng.uniform(0.2, 0.8), rng.uniform(0.2, 0.8)},
                                                      rng.uniform(0.05, 0.3), 3 + static_cast<int>(rng.below(6))),
                                              res);
        const auto i = a.intersected(b), u = a.united(b), s = a.subtracted(b), d = a.dilated(2);
        std::int64_t ni = 0, nu = 0;
        for (int y = 0; y < res; ++y) {
            for (int x = 0; x < res; ++x) {
                const bool in_a = a.contains(x, y), in_b = b.contains(x, y);
                EXPECT_EQ(i.contains(x, y), in_a && in_b);
                EXPECT_EQ(u.contains(x, y), in_a || in_b);
                EXPECT_EQ(s.contains(x, y), in_a && !in_b);
                bool near = false;
                for (int dy = -2; dy <= 2 && !near; ++dy)
                    for (int dx = -2; dx <= 2; ++dx)
                        if (a.contains(x + dx, y + dy)) near = true;
                EXPECT_EQ(d.contains(x, y), near);
                ni += in_a && in_b;
                nu += in_a || in_b;
            }
        }
        EXPECT_EQ(intersection_area(a, b), ni);
        EXPECT_EQ(i.area(), ni);
        EXPECT_EQ(u.area(), nu);
        EXPECT_DOUBLE_EQ(iou(a, b), nu == 0 ? 0.0 : static_cast<double>(ni) / static_cast<double>(nu));
    }
}

TEST(SpanMask, ComponentsEightConnected) {
    SpanMask m = SpanMask::from_polygon(square(0.1, 0.1, 0.2), 100);
    EXPECT_EQ(m.components(), 1);
    m = m.united(SpanMask::from_polygon(square(0.6, 0.6, 0.2), 100));
    EXPECT_EQ(m.components(), 2);
    // Two pixels touching only at a corner form one component.
    const auto a = SpanMask::from_polygon(square(0.10, 0.10, 0.01), 100);
    const auto b = SpanMask::from_polygon(square(0.11, 0.11, 0.01), 100);
    ASSERT_EQ(a.area(), 1);
    ASSERT_EQ(b.area(), 1);
    EXPECT_EQ(a.united(b).components(), 1);
    EXPECT_EQ(SpanMask(10).components(), 0);
    // A U shape: two arms joined at the bottom; cutting the base splits it.
    const std::vector<Polyline> u{{{0.1, 0.1}, {0.9, 0.1}, {0.9, 0.9}, {0.1, 0.9}}, {{0.3, 0.1}, {0.7, 0.1}, {0.7, 0.7}, {0.3, 0.7}}};
    EXPECT_EQ(SpanMask::from_polygon(u, 100).components(), 1);
    EXPECT_EQ(SpanMask::from_polygon(u, 100).subtracted(SpanMask::from_polygon(square(0.0, 0.65, 1.0), 100)).components(), 2);
}

TEST(Png, SignatureAndHeader) {
    StimulusImage img(300, 200);
    const auto bytes = encode_png(img);
    ASSERT_GT(bytes.size(), 33u);
    const std::array<std::uint8_t, 8> sig{0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
    EXPECT_TRUE(std::equal(sig.begin(), sig.end(), bytes.begin()));
    auto be32 = [&](std::size_t off) {
        return (std::uint32_t{bytes[off]} << 24) | (std::uint32_t{bytes[off + 1]} << 16) |
               (std::uint32_t{bytes[off + 2]} << 8) | bytes[off + 3];
    };
    EXPECT_EQ(be32(16), 300u);
    EXPECT_EQ(be32(20), 200u);
}
