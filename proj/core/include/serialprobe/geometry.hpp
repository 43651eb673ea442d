#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "serialprobe/concept.hpp"
#include "serialprobe/rng.hpp"

namespace serialprobe::geom {

struct Vec2 {
    double x = 0.0;
    double y = 0.0;

    friend constexpr Vec2 operator+(Vec2 a, Vec2 b) noexcept { return {a.x + b.x, a.y + b.y}; }
    friend constexpr Vec2 operator-(Vec2 a, Vec2 b) noexcept { return {a.x - b.x, a.y - b.y}; }
    friend constexpr Vec2 operator*(double s, Vec2 a) noexcept { return {s * a.x, s * a.y}; }
    friend constexpr Vec2 operator*(Vec2 a, double s) noexcept { return {s * a.x, s * a.y}; }
    bool operator==(const Vec2&) const = default;
};

constexpr double dot(Vec2 a, Vec2 b) noexcept { return a.x * b.x + a.y * b.y; }
constexpr double cross(Vec2 a, Vec2 b) noexcept { return a.x * b.y - a.y * b.x; }
inline double norm(Vec2 a) noexcept { return std::hypot(a.x, a.y); }
inline double distance(Vec2 a, Vec2 b) noexcept { return norm(a - b); }

/// Closed segment a-b.
struct Segment {
    Vec2 a;
    Vec2 b;
    bool operator==(const Segment&) const = default;
};

struct Circle {
    Vec2 center;
    double radius = 0.0;
    bool operator==(const Circle&) const = default;
};

/// A realized object doubles as its own locus: segments are parameterized by
/// t in [0,1], circles by theta in [0, 2*pi).
using Object = std::variant<Segment, Circle>;
using Locus = Object;

class DegenerateInput : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Intersection points of two objects (0, 1 or 2), segments restricted to
/// their extent. Throws DegenerateInput for zero-length segments, zero-radius
/// circles, and coincident objects.
std::vector<Vec2> intersect(const Object& a, const Object& b);

/// Euclidean distance from p to the object's locus.
double distance_to(const Object& locus, Vec2 p) noexcept;

Vec2 point_at(const Locus& locus, double parameter) noexcept;

/// Uniform over the parameter domain of the locus.
Vec2 sample_on_locus(const Locus& locus, Rng& rng) noexcept;

/// Bounds for realization. All values are in unit-canvas coordinates.
struct GeometryConfig {
    double margin = 0.1;
    double min_separation = 0.02;
    double radius_min = 0.05;
    double radius_max = 0.45;
    double min_length = 0.05;
    double violation_margin = 0.05;
    int max_attempts = 1000;
};

struct RealizedScene {
    dsl::ConceptProgram program;
    std::map<std::string, Vec2> points;
    std::map<std::string, Object> objects;
    std::uint64_t seed = 0;

    bool operator==(const RealizedScene&) const = default;
};

class RealizationExhausted : public std::runtime_error {
public:
    RealizationExhausted(std::string concept_name, int attempts);
    std::string concept_name;
    int attempts;
};

/// Realizes `program` from a fresh generator seeded with `seed`. Pure in
/// (program, seed, config).
RealizedScene realize(const dsl::ConceptProgram& program, std::uint64_t seed,
                      const GeometryConfig& config = {});

/// Single attempt; empty when the attempt is rejected.
std::optional<RealizedScene> try_realize(const dsl::ConceptProgram& program, Rng& rng,
                                         const GeometryConfig& config = {});

/// Distance of `point` from the locus of `object`, both looked up in the scene.
double constraint_distance(const RealizedScene& scene, const dsl::ConstraintPair& pair);

/// Max distance over every constraint pair of `against`, measured on the
/// scene's realized geometry. 0 when `against` has no constraints.
double residual(const RealizedScene& scene, const dsl::ConceptProgram& against);
inline double residual(const RealizedScene& scene) { return residual(scene, scene.program); }

}  // namespace serialprobe::geom
