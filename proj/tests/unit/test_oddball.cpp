#include <gtest/gtest.h>

#include <map>
#include <set>

#include "serialprobe/oddball.hpp"
#include "test_support.hpp"

using namespace serialprobe;
using namespace serialprobe::oddball;
namespace sp_test = serialprobe::testing;

namespace {

const std::vector<dsl::ConceptProgram>& library() {
    static const auto lib = dsl::load_library(sp_test::data_dir() / "concepts.geo");
    return lib;
}

const dsl::ConceptProgram& concept_named(const std::string& name) {
    for (const auto& p : library())
        if (p.name == name) return p;
    throw std::runtime_error("no concept " + name);
}

}  // namespace

TEST(Trial, RegularCellsSatisfyAndOddballViolates) {
    const OddballConfig cfg;
    for (const auto& p : library()) {
        const auto t = generate_oddball_trial(p, trial_id(p.name, 0), trial_seed(5, p.name, 0), cfg);
        ASSERT_GE(t.trial.oddball_position, 1);
        ASSERT_LE(t.trial.oddball_position, 6);
        ASSERT_EQ(t.trial.removed_constraints.size(), 2u);
        EXPECT_EQ(t.trial.mdl, p.mdl);
        for (int pos = 1; pos <= 6; ++pos) {
            const auto& scene = t.scenes[static_cast<std::size_t>(pos - 1)];
            if (pos == t.trial.oddball_position) {
                for (const auto& pair : t.trial.removed_constraints) {
                    EXPECT_GE(geom::constraint_distance(scene, pair), cfg.geometry.violation_margin) << p.name;
                }
                // Everything that was kept still holds.
                EXPECT_LE(geom::residual(scene), 1e-9) << p.name;
            } else {
                EXPECT_LE(geom::residual(scene, p), 1e-9) << p.name;
            }
        }
    }
}

TEST(Trial, TwoConstraintConceptHasNoConstrainedPointsInOddball) {
    const auto& p = concept_named("chord");
    ASSERT_EQ(dsl::constraint_pairs(p).size(), 2u);
    const auto t = generate_oddball_trial(p, "x", 99);
    const auto& odd = t.scenes[static_cast<std::size_t>(t.trial.oddball_position - 1)];
    EXPECT_TRUE(dsl::constraint_pairs(odd.program).empty());
}

TEST(Trial, DeterministicIncludingImages) {
    const auto& p = concept_named("inscribed_angle");
    const auto a = generate_oddball_trial(p, "x", 123), b = generate_oddball_trial(p, "x", 123);
    EXPECT_EQ(a.trial, b.trial);
    EXPECT_EQ(a.scenes, b.scenes);
    const auto ia = render_oddball(a), ib = render_oddball(b);
    EXPECT_EQ(ia.array, ib.array);
    EXPECT_EQ(raster::encode_png(ia.array), raster::encode_png(ib.array));
}

TEST(Trial, RebuildFromRecord) {
    for (const auto& p : library()) {
        const auto t = generate_oddball_trial(p, "x", trial_seed(1, p.name, 3));
        const auto round = trial_from_json(trial_to_json(t.trial));
        EXPECT_EQ(round, t.trial);
        EXPECT_EQ(rebuild_scenes(round, p), t.scenes) << p.name;
    }
}

TEST(Trial, ImagesHaveExpectedShape) {
    OddballConfig cfg;
    cfg.cell_size = 128;
    const auto t = generate_oddball_trial(concept_named("chord"), "x", 1, cfg);
    const auto img = render_oddball(t, cfg);
    EXPECT_EQ(img.array.width, 3 * 128 + 4 * cfg.layout.gutter);
    EXPECT_EQ(img.array.height, 2 * 128 + 3 * cfg.layout.gutter);
    for (const auto& c : img.cells) EXPECT_EQ(c.width, 128);
}

TEST(Ids, StableAndDistinct) {
    EXPECT_EQ(trial_id("chord", 7), trial_id("chord", 7));
    EXPECT_NE(trial_id("chord", 7), trial_id("chord", 8));
    EXPECT_NE(trial_seed(1, "chord", 0), trial_seed(1, "chord", 1));
    EXPECT_NE(trial_seed(1, "chord", 0), trial_seed(2, "chord", 0));
}

TEST(Dataset, TwoPerConcept) {
    DatasetOptions opt;
    opt.seed = 3;
    opt.per_concept = 2;
    opt.write_images = false;
    const auto ds = generate_oddball_dataset(library(), opt, {});
    ASSERT_EQ(ds.trials.size(), 74u);
    std::map<std::string, int> per;
    std::set<std::string> ids;
    for (const auto& t : ds.trials) {
        ++per[t.concept_name];
        ids.insert(t.trial_id);
    }
    EXPECT_EQ(per.size(), 37u);
    for (const auto& [name, n] : per) EXPECT_EQ(n, 2) << name;
    EXPECT_EQ(ids.size(), 74u);
    EXPECT_EQ(ds.manifest["trials"].size(), 74u);
}

TEST(Dataset, ManifestOnDiskAndWorkerIndependence) {
    sp_test::ScratchDir dir;
    DatasetOptions opt;
    opt.seed = 8;
    opt.per_concept = 1;
    opt.workers = 1;
    const auto one = generate_oddball_dataset(library(), opt, {}, dir.path());
    opt.write_images = false;
    opt.workers = 3;
    const auto three = generate_oddball_dataset(library(), opt, {});
    EXPECT_EQ(one.trials, three.trials);

    const auto m = load_manifest(dir / "oddball_manifest.json");
    ASSERT_EQ(m.trials.size(), 37u);
    for (const auto& t : m.trials) {
        EXPECT_TRUE(std::filesystem::exists(dir.path() / t.image)) << t.image;
        EXPECT_EQ(t.panels.size(), 6u);
        EXPECT_GE(t.answer, 1);
        EXPECT_LE(t.answer, 6);
        EXPECT_TRUE(std::filesystem::exists(dir.path() / "oddball" / t.trial_id / "cell6.png"));
    }
}

TEST(Dataset, PositionsRoughlyUniform) {
    // 37 * 6 = 222 trials; each position expected 37 times.
    DatasetOptions opt;
    opt.seed = 21;
    opt.per_concept = 6;
    opt.write_images = false;
    const auto ds = generate_oddball_dataset(library(), opt, {});
    std::map<int, int> hist;
    for (const auto& t : ds.trials) ++hist[t.oddball_position];
    double chi2 = 0;
    for (int pos = 1; pos <= 6; ++pos) chi2 += (hist[pos] - 37.0) * (hist[pos] - 37.0) / 37.0;
    EXPECT_LT(chi2, 15.09);  // chi-square, 5 df, alpha 0.01
}
