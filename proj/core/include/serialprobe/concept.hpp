#pragma once

#include <cstddef>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "serialprobe/rng.hpp"

namespace serialprobe::dsl {

enum class ObjectKind { Line, Circle };
enum class Family { Elements, Constraints };

std::string_view to_string(ObjectKind kind) noexcept;
std::string_view to_string(Family family) noexcept;

/// A point argument of an object statement.
///
/// refs.size() == 0: free point; 1: on that object's locus; 2: at an
/// intersection of the two objects. reuse == true names an earlier point.
struct PointSpec {
    std::string id;
    std::vector<std::string> refs;
    bool reuse = false;

    bool operator==(const PointSpec&) const = default;
};

/// Line(p1, p2) is the segment p1-p2; Circle(p1, p2) is centered at p1 through p2.
struct ObjectStatement {
    std::string id;
    ObjectKind kind = ObjectKind::Line;
    PointSpec p1;
    PointSpec p2;
    bool visible = true;

    bool operator==(const ObjectStatement&) const = default;
};

struct ConceptProgram {
    std::string name;
    std::vector<ObjectStatement> statements;
    Family family = Family::Elements;
    int mdl = 0;

    bool operator==(const ConceptProgram&) const = default;
};

/// One relational constraint: point `point` must lie on object `object`.
struct ConstraintPair {
    std::string point;
    std::string object;

    bool operator==(const ConstraintPair&) const = default;
    auto operator<=>(const ConstraintPair&) const = default;
};

class DslError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Malformed input. line/column are 1-based.
class SyntaxError : public DslError {
public:
    SyntaxError(std::size_t line, std::size_t column, const std::string& expected,
                const std::string& found);
    std::size_t line;
    std::size_t column;
    std::string expected;
};

/// Forward, undeclared, or duplicate identifier.
class ReferenceError : public DslError {
public:
    ReferenceError(std::size_t line, std::size_t column, std::string token, const std::string& what);
    std::size_t line;
    std::size_t column;
    std::string token;
};

/// More than two refs on a point.
class ArityError : public DslError {
public:
    ArityError(std::size_t line, std::size_t column, const std::string& point, std::size_t count);
    std::size_t line;
    std::size_t column;
};

class InsufficientConstraints : public DslError {
public:
    using DslError::DslError;
};

/// Library-level validation failure (wrong concept count, concept not relaxable, ...).
class CountError : public DslError {
public:
    using DslError::DslError;
};

/// Parses the statements of a single program. The program gets `name` and `family`.
ConceptProgram parse_concept(std::string_view source, std::string name = "concept",
                             Family family = Family::Elements);

/// Canonical text form; parse_concept(format_concept(p)) == p up to name/family.
std::string format_concept(const ConceptProgram& program);

/// Number of object statements, visible and invisible.
int compute_mdl(const ConceptProgram& program) noexcept;

/// All (point, object) pairs over newly declared points, in declaration order.
std::vector<ConstraintPair> constraint_pairs(const ConceptProgram& program);

struct RelaxedProgram {
    ConceptProgram program;
    std::vector<ConstraintPair> removed;
};

/// Copy of `program` with the listed (point, object) refs deleted.
ConceptProgram remove_constraints(const ConceptProgram& program, const std::vector<ConstraintPair>& pairs);

/// Copy of `program` with k distinct constraint pairs deleted, chosen
/// uniformly without replacement.
RelaxedProgram relax_constraints(const ConceptProgram& program, std::size_t k, Rng& rng);

/// Parses a library text: blocks `concept <name> <elements|constraints> { ... }`.
std::vector<ConceptProgram> parse_library(std::string_view text);

inline constexpr std::size_t kLibrarySize = 37;

/// Reads, parses, and validates a concept library (exactly 37 concepts, both
/// families, MDL in [1,4], at least two constraint pairs each).
std::vector<ConceptProgram> load_library(const std::filesystem::path& path);

/// The validation half of load_library, for already-parsed programs.
void validate_library(const std::vector<ConceptProgram>& programs);

}  // namespace serialprobe::dsl
