#include "serialprobe/geometry.hpp"

#include <algorithm>
#include <numbers>
#include <optional>

#include <fmt/format.h>

namespace serialprobe::geom {

namespace {

constexpr double kParamSlack = 1e-12;
constexpr double kTangentEps = 1e-24;

void check(const Segment& s) {
    if (s.a == s.b) throw DegenerateInput("zero-length segment");
}

void check(const Circle& c) {
    if (!(c.radius > 0.0)) throw DegenerateInput("zero-radius circle");
}

std::vector<Vec2> segment_segment(const Segment& s, const Segment& u) {
    const Vec2 d1 = s.b - s.a;
    const Vec2 d2 = u.b - u.a;
    const double denom = cross(d1, d2);
    const Vec2 w = u.a - s.a;
    const double scale = norm(d1) * norm(d2);

    if (std::abs(denom) <= 1e-14 * scale) {
        // Parallel. Collinear segments either touch at one endpoint, overlap, or miss.
        if (std::abs(cross(w, d1)) > 1e-14 * norm(d1) * std::max(1.0, norm(w))) return {};
        const double len2 = dot(d1, d1);
        double t0 = dot(u.a - s.a, d1) / len2;
        double t1 = dot(u.b - s.a, d1) / len2;
        if (t0 > t1) std::swap(t0, t1);
        const double lo = std::max(0.0, t0);
        const double hi = std::min(1.0, t1);
        if (hi < lo - kParamSlack) return {};
        if (hi - lo > kParamSlack) throw DegenerateInput("coincident (overlapping collinear) segments");
        return {s.a + lo * d1};
    }

    const double t = cross(w, d2) / denom;
    const double v = cross(w, d1) / denom;
    if (t < -kParamSlack || t > 1 + kParamSlack || v < -kParamSlack || v > 1 + kParamSlack) return {};
    return {s.a + std::clamp(t, 0.0, 1.0) * d1};
}

std::vector<Vec2> segment_circle(const Segment& s, const Circle& c) {
    const Vec2 d = s.b - s.a;
    const Vec2 f = s.a - c.center;
    const double a = dot(d, d);
    const double b = 2.0 * dot(f, d);
    const double cc = dot(f, f) - c.radius * c.radius;
    const double disc = b * b - 4.0 * a * cc;
    const double tol = kTangentEps * std::max(1.0, b * b);
    if (disc < -tol) return {};

    std::vector<Vec2> out;
    auto push = [&](double t) {
        if (t < -kParamSlack || t > 1 + kParamSlack) return;
        out.push_back(s.a + std::clamp(t, 0.0, 1.0) * d);
    };
    if (disc <= tol) {
        push(-b / (2.0 * a));
        return out;
    }
    // Numerically stable root pair.
    const double sq = std::sqrt(disc);
    const double q = -0.5 * (b + std::copysign(sq, b));
    double r1 = q / a;
    double r2 = (q != 0.0) ? cc / q : -r1;
    if (r1 > r2) std::swap(r1, r2);
    push(r1);
    push(r2);
    return out;
}

std::vector<Vec2> circle_circle(const Circle& c1, const Circle& c2) {
    const Vec2 delta = c2.center - c1.center;
    const double d = norm(delta);
    if (d == 0.0) {
        if (c1.radius == c2.radius) throw DegenerateInput("coincident circles");
        return {};
    }
    if (d > c1.radius + c2.radius || d < std::abs(c1.radius - c2.radius)) {
        const double gap = std::max(d - (c1.radius + c2.radius), std::abs(c1.radius - c2.radius) - d);
        if (gap > 1e-15 * std::max(1.0, d)) return {};
    }
    const double a = (d * d + c1.radius * c1.radius - c2.radius * c2.radius) / (2.0 * d);
    const double h2 = c1.radius * c1.radius - a * a;
    const Vec2 ex = (1.0 / d) * delta;
    const Vec2 base = c1.center + a * ex;
    if (h2 <= kTangentEps * std::max(1.0, c1.radius * c1.radius)) return {base};
    const double h = std::sqrt(h2);
    const Vec2 ey{-ex.y, ex.x};
    return {base + h * ey, base - h * ey};
}

}  // namespace

std::vector<Vec2> intersect(const Object& a, const Object& b) {
    std::visit([](const auto& o) { check(o); }, a);
    std::visit([](const auto& o) { check(o); }, b);
    return std::visit(
        [](const auto& x, const auto& y) -> std::vector<Vec2> {
            using X = std::decay_t<decltype(x)>;
            using Y = std::decay_t<decltype(y)>;
            if constexpr (std::is_same_v<X, Segment> && std::is_same_v<Y, Segment>) {
                return segment_segment(x, y);
            } else if constexpr (std::is_same_v<X, Segment> && std::is_same_v<Y, Circle>) {
                return segment_circle(x, y);
            } else if constexpr (std::is_same_v<X, Circle> && std::is_same_v<Y, Segment>) {
                return segment_circle(y, x);
            } else {
                return circle_circle(x, y);
            }
        },
        a, b);
}

double distance_to(const Object& locus, Vec2 p) noexcept {
    if (const auto* s = std::get_if<Segment>(&locus)) {
        const Vec2 d = s->b - s->a;
        const double len2 = dot(d, d);
        const double t = len2 > 0.0 ? std::clamp(dot(p - s->a, d) / len2, 0.0, 1.0) : 0.0;
        return distance(p, s->a + t * d);
    }
    const auto& c = std::get<Circle>(locus);
    return std::abs(distance(p, c.center) - c.radius);
}

Vec2 point_at(const Locus& locus, double parameter) noexcept {
    if (const auto* s = std::get_if<Segment>(&locus)) return s->a + parameter * (s->b - s->a);
    const auto& c = std::get<Circle>(locus);
    return c.center + Vec2{c.radius * std::cos(parameter), c.radius * std::sin(parameter)};
}

Vec2 sample_on_locus(const Locus& locus, Rng& rng) noexcept {
    if (std::holds_alternative<Segment>(locus)) return point_at(locus, rng.uniform());
    return point_at(locus, rng.uniform(0.0, 2.0 * std::numbers::pi));
}

RealizationExhausted::RealizationExhausted(std::string name, int attempts_)
    : std::runtime_error(
          fmt::format("concept '{}': realization failed after {} attempts", name, attempts_)),
      concept_name(std::move(name)),
      attempts(attempts_) {}

std::optional<RealizedScene> try_realize(const dsl::ConceptProgram& program, Rng& rng,
                                         const GeometryConfig& config) {
    RealizedScene scene;
    auto realize_point = [&](const dsl::PointSpec& spec) -> std::optional<Vec2> {
        if (spec.reuse) return scene.points.at(spec.id);
        if (spec.refs.empty()) {
            return Vec2{rng.uniform(config.margin, 1.0 - config.margin),
                        rng.uniform(config.margin, 1.0 - config.margin)};
        }
        if (spec.refs.size() == 1) return sample_on_locus(scene.objects.at(spec.refs[0]), rng);
        std::vector<Vec2> hits;
        try {
            hits = intersect(scene.objects.at(spec.refs[0]), scene.objects.at(spec.refs[1]));
        } catch (const DegenerateInput&) {
            return std::nullopt;
        }
        if (hits.empty()) return std::nullopt;
        return hits[static_cast<std::size_t>(rng.below(hits.size()))];
    };

    for (const auto& st : program.statements) {
        const auto a = realize_point(st.p1);
        if (!a) return std::nullopt;
        scene.points[st.p1.id] = *a;
        const auto b = realize_point(st.p2);
        if (!b) return std::nullopt;
        scene.points[st.p2.id] = *b;

        const double len = distance(*a, *b);
        if (st.kind == dsl::ObjectKind::Line) {
            if (len < config.min_length) return std::nullopt;
            scene.objects[st.id] = Segment{*a, *b};
        } else {
            if (len < config.radius_min || len > config.radius_max) return std::nullopt;
            scene.objects[st.id] = Circle{*a, len};
        }
    }

    for (const auto& [id, p] : scene.points) {
        if (p.x < 0.0 || p.x > 1.0 || p.y < 0.0 || p.y > 1.0) return std::nullopt;
    }
    for (auto i = scene.points.begin(); i != scene.points.end(); ++i) {
        for (auto j = std::next(i); j != scene.points.end(); ++j) {
            if (distance(i->second, j->second) < config.min_separation) return std::nullopt;
        }
    }
    scene.program = program;
    return scene;
}

RealizedScene realize(const dsl::ConceptProgram& program, std::uint64_t seed,
                      const GeometryConfig& config) {
    Rng rng(seed);
    for (int attempt = 0; attempt < config.max_attempts; ++attempt) {
        if (auto scene = try_realize(program, rng, config)) {
            scene->seed = seed;
            return std::move(*scene);
        }
    }
    throw RealizationExhausted(program.name, config.max_attempts);
}

double constraint_distance(const RealizedScene& scene, const dsl::ConstraintPair& pair) {
    return distance_to(scene.objects.at(pair.object), scene.points.at(pair.point));
}

double residual(const RealizedScene& scene, const dsl::ConceptProgram& against) {
    double worst = 0.0;
    for (const auto& pair : dsl::constraint_pairs(against)) {
        worst = std::max(worst, constraint_distance(scene, pair));
    }
    return worst;
}

}  // namespace serialprobe::geom
