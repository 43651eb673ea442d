#include <gtest/gtest.h>

#include <fmt/format.h>

#include <set>
#include <string>

#include "serialprobe/concept.hpp"
#include "test_support.hpp"

using namespace serialprobe;
namespace sp_test = serialprobe::testing;
using namespace serialprobe::dsl;

TEST(Parse, MinimalProgram) {
    const auto p = parse_concept("l1 = line(p1(), p2())");
    ASSERT_EQ(p.statements.size(), 1u);
    const auto& s = p.statements[0];
    EXPECT_EQ(s.id, "l1");
    EXPECT_EQ(s.kind, ObjectKind::Line);
    EXPECT_TRUE(s.visible);
    EXPECT_TRUE(s.p1.refs.empty());
    EXPECT_TRUE(s.p2.refs.empty());
    EXPECT_EQ(compute_mdl(p), 1);
    EXPECT_TRUE(constraint_pairs(p).empty());
}

TEST(Parse, InvisibleCircleWithChord) {
    const auto p = parse_concept("c1* = circle(p1(), p2())\nl1 = line(p3(c1), p4(c1))");
    ASSERT_EQ(p.statements.size(), 2u);
    EXPECT_FALSE(p.statements[0].visible);
    EXPECT_EQ(p.statements[0].kind, ObjectKind::Circle);
    EXPECT_TRUE(p.statements[1].visible);
    EXPECT_EQ(p.statements[1].p1.refs, std::vector<std::string>{"c1"});
    EXPECT_EQ(p.statements[1].p2.refs, std::vector<std::string>{"c1"});
    EXPECT_EQ(compute_mdl(p), 2);
    const std::vector<ConstraintPair> expected{{"p3", "c1"}, {"p4", "c1"}};
    EXPECT_EQ(constraint_pairs(p), expected);
}

TEST(Parse, ForwardReferenceNamesTheToken) {
    try {
        parse_concept("l1 = line(p1(l2), p2())");
        FAIL() << "expected ReferenceError";
    } catch (const ReferenceError& e) {
        EXPECT_EQ(e.token, "l2");
        EXPECT_EQ(e.line, 1u);
    }
}

TEST(Parse, ReuseOfPoints) {
    const auto p = parse_concept("c1 = circle(p1(), p2())\nl1 = line(p1, p3(c1))");
    EXPECT_TRUE(p.statements[1].p1.reuse);
    EXPECT_EQ(p.statements[1].p1.id, "p1");
}

TEST(Parse, Errors) {
    EXPECT_THROW(parse_concept("l1 = line(p1(), p2()"), SyntaxError);
    EXPECT_THROW(parse_concept("l1 = square(p1(), p2())"), SyntaxError);
    EXPECT_THROW(parse_concept("l1 = line(p1(), p1())"), ReferenceError);
    EXPECT_THROW(parse_concept("l1 = line(p1(), p2())\nl1 = line(p3(), p4())"), ReferenceError);
    EXPECT_THROW(parse_concept("l1 = line(p1(), p9)"), ReferenceError);
    EXPECT_THROW(parse_concept("l1 = line(p1(), p2())\nl2 = line(p3(), p4())\nl3 = line(p5(l1, l2, l1), p6())"),
                 ArityError);
}

TEST(Parse, SyntaxErrorPosition) {
    try {
        parse_concept("l1 = line(p1(), p2())\nl2 = line(p3() p4())");
        FAIL();
    } catch (const SyntaxError& e) {
        EXPECT_EQ(e.line, 2u);
        EXPECT_GT(e.column, 1u);
    }
}

TEST(Mdl, CountsInvisibleStatements) {
    const auto p = parse_concept(
        "c1* = circle(p1(), p2())\n"
        "l1 = line(p1, p3(c1))\n"
        "l2 = line(p1, p4(c1))\n"
        "l3 = line(p3, p4)");
    EXPECT_EQ(compute_mdl(p), 4);
}

TEST(Relax, TwoPairsBothRemoved) {
    const auto p = parse_concept("c1 = circle(p1(), p2())\nl1 = line(p3(c1), p4(c1))");
    auto rng = Rng::stream(1, "t");
    const auto r = relax_constraints(p, 2, rng);
    EXPECT_EQ(r.removed.size(), 2u);
    EXPECT_TRUE(r.program.statements[1].p1.refs.empty());
    EXPECT_TRUE(r.program.statements[1].p2.refs.empty());
    EXPECT_TRUE(constraint_pairs(r.program).empty());
}

TEST(Relax, ZeroIsIdentity) {
    const auto p = parse_concept("c1 = circle(p1(), p2())\nl1 = line(p3(c1), p4(c1))");
    auto rng = Rng::stream(1, "t");
    const auto r = relax_constraints(p, 0, rng);
    EXPECT_EQ(r.program, p);
    EXPECT_TRUE(r.removed.empty());
}

TEST(Relax, DeterministicAndDistinct) {
    for (const auto& prog : load_library(sp_test::data_dir() / "concepts.geo")) {
        auto a = Rng::stream(42, prog.name);
        auto b = Rng::stream(42, prog.name);
        const auto ra = relax_constraints(prog, 2, a);
        const auto rb = relax_constraints(prog, 2, b);
        EXPECT_EQ(ra.program, rb.program);
        EXPECT_EQ(ra.removed, rb.removed);
        ASSERT_EQ(ra.removed.size(), 2u);
        EXPECT_NE(ra.removed[0], ra.removed[1]);
        EXPECT_EQ(constraint_pairs(ra.program).size(), constraint_pairs(prog).size() - 2);
    }
}

TEST(Relax, UniformOverPairs) {
    // Three pairs, k=1: each removed about a third of the time.
    const auto p = parse_concept("c1 = circle(p1(), p2())\nl1 = line(p3(c1), p4(c1))\nl2 = line(p5(l1), p6())");
    ASSERT_EQ(constraint_pairs(p).size(), 3u);
    std::map<ConstraintPair, int> counts;
    auto rng = Rng::stream(9, "uniform");
    const int n = 30000;
    for (int i = 0; i < n; ++i) ++counts[relax_constraints(p, 1, rng).removed.at(0)];
    double chi2 = 0;
    for (const auto& [pair, c] : counts) chi2 += (c - n / 3.0) * (c - n / 3.0) / (n / 3.0);
    EXPECT_EQ(counts.size(), 3u);
    EXPECT_LT(chi2, 9.21);  // chi-square, 2 df, alpha 0.01
}

TEST(Relax, TooManyThrows) {
    const auto p = parse_concept("c1 = circle(p1(), p2())\nl1 = line(p3(c1), p4(c1))");
    auto rng = Rng::stream(1, "t");
    EXPECT_THROW(relax_constraints(p, 3, rng), InsufficientConstraints);
}

TEST(Library, ShippedLibrary) {
    const auto lib = load_library(sp_test::data_dir() / "concepts.geo");
    ASSERT_EQ(lib.size(), kLibrarySize);
    std::set<std::string> names;
    std::set<Family> families;
    for (const auto& p : lib) {
        names.insert(p.name);
        families.insert(p.family);
        EXPECT_EQ(p.mdl, compute_mdl(p));
        EXPECT_GE(p.mdl, 1);
        EXPECT_LE(p.mdl, 4);
        EXPECT_GE(constraint_pairs(p).size(), 2u) << p.name;
    }
    EXPECT_EQ(names.size(), lib.size());
    EXPECT_EQ(families.size(), 2u);
}

TEST(Library, RejectsUnderConstrainedConcept) {
    std::string text;
    for (std::size_t i = 0; i < kLibrarySize; ++i) {
        text += fmt::format("concept k{} elements {{\n  c1 = circle(p1(), p2())\n  l1 = line(p3(c1), p4({}))\n}}\n", i,
                            i == 0 ? "" : "c1");
    }
    auto progs = parse_library(text);
    EXPECT_THROW(validate_library(progs), CountError);
}

TEST(Library, EmptyFile) {
    sp_test::ScratchDir dir;
    { std::FILE* f = std::fopen((dir / "empty.geo").c_str(), "w"); std::fclose(f); }
    EXPECT_THROW(load_library(dir / "empty.geo"), CountError);
}

TEST(Library, WrongCount) {
    const auto progs = parse_library("concept a elements {\n c1 = circle(p1(), p2())\n l1 = line(p3(c1), p4(c1))\n}\n");
    EXPECT_THROW(validate_library(progs), CountError);
}

// Random well-formed programs: each statement refers only to earlier objects
// and points, with 0, 1 or 2 refs on new points.
static ConceptProgram random_program(Rng& rng) {
    ConceptProgram p;
    p.name = "fuzz";
    int next_point = 1;
    std::vector<std::string> objects;
    std::vector<std::string> points;
    const int n = 1 + static_cast<int>(rng.below(4));
    for (int i = 0; i < n; ++i) {
        ObjectStatement s;
        s.kind = rng.below(2) ? ObjectKind::Circle : ObjectKind::Line;
        s.id = fmt::format("{}{}", s.kind == ObjectKind::Circle ? "c" : "l", i + 1);
        s.visible = rng.below(4) != 0;
        auto make_point = [&](const std::string& avoid) {
            PointSpec ps;
            if (!points.empty() && rng.below(3) == 0) {
                ps.id = points[rng.below(points.size())];
                if (ps.id != avoid) {
                    ps.reuse = true;
                    return ps;
                }
            }
            ps.id = fmt::format("p{}", next_point++);
            const auto nrefs = objects.empty() ? 0 : rng.below(std::min<std::size_t>(3, objects.size() + 1));
            std::set<std::string> used;
            while (ps.refs.size() < nrefs) {
                const auto& o = objects[rng.below(objects.size())];
                if (used.insert(o).second) ps.refs.push_back(o);
            }
            points.push_back(ps.id);
            return ps;
        };
        s.p1 = make_point("");
        s.p2 = make_point(s.p1.id);
        p.statements.push_back(s);
        objects.push_back(s.id);
    }
    p.mdl = compute_mdl(p);
    return p;
}

TEST(Format, RoundTripFuzz) {
    auto rng = Rng::stream(2024, "fuzz");
    for (int i = 0; i < 500; ++i) {
        const auto p = random_program(rng);
        const auto text = format_concept(p);
        const auto q = parse_concept(text, p.name, p.family);
        EXPECT_EQ(q, p) << text;
        EXPECT_EQ(format_concept(q), text);
    }
}

TEST(Format, LibraryRoundTrip) {
    for (const auto& p : load_library(sp_test::data_dir() / "concepts.geo")) {
        EXPECT_EQ(parse_concept(format_concept(p), p.name, p.family), p) << p.name;
    }
}

TEST(Format, RemoveConstraintsMatchesRelax) {
    const auto p = parse_concept("c1 = circle(p1(), p2())\nl1 = line(p3(c1), p4(c1))\nl2 = line(p5(l1, c1), p6())");
    const auto q = remove_constraints(p, {{"p5", "l1"}});
    EXPECT_EQ(q.statements[2].p1.refs, std::vector<std::string>{"c1"});
    EXPECT_EQ(constraint_pairs(q).size(), constraint_pairs(p).size() - 1);
}
