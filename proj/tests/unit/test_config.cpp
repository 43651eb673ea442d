#include <gtest/gtest.h>

#include <fstream>

#include "serialprobe/config.hpp"
#include "test_support.hpp"

using namespace serialprobe;
namespace sp_test = serialprobe::testing;

namespace {

std::string error_key(const Json& j) {
    try {
        validate(config_from_json(j));
    } catch (const ConfigError& e) {
        return e.key;
    }
    return "";
}

void write_text(const std::filesystem::path& p, const std::string& text) {
    std::ofstream out(p, std::ios::binary);
    out << text;
}

}  // namespace

TEST(Config, DefaultsValidateOnceSeeded) {
    RunConfig c;
    EXPECT_THROW(validate(c), ConfigError);
    c.seed = 3;
    EXPECT_NO_THROW(validate(c));
    EXPECT_EQ(c.oddball_per_concept(), 100);
    EXPECT_EQ(c.numerosity_per_cell(), 100);
    EXPECT_DOUBLE_EQ(c.rotation_fraction(), 1.0);
    EXPECT_EQ(c.log_path(), std::filesystem::path("out/service/events.jsonl"));
}

TEST(Config, ScaleForms) {
    auto c = config_from_json(Json::parse(R"({"seed": 1, "scale": 0.05})"));
    EXPECT_EQ(c.oddball_per_concept(), 5);
    EXPECT_EQ(c.numerosity_per_cell(), 5);
    c = config_from_json(Json::parse(R"({"seed": 1, "scale": {"rotation": 0.01}})"));
    EXPECT_EQ(c.oddball_per_concept(), 100);
    EXPECT_DOUBLE_EQ(c.rotation_fraction(), 0.01);
    c = config_from_json(Json::parse(R"({"seed": 1, "scale": 0.013})"));
    EXPECT_EQ(c.oddball_per_concept(), 2);  // rounds up
}

TEST(Config, ErrorsNameTheKeyPath) {
    EXPECT_EQ(error_key(Json::parse(R"({"seed": -1})")), "seed");
    EXPECT_EQ(error_key(Json::parse(R"({"seed": 1, "scale": {"rotation": 2}})")), "scale.rotation");
    EXPECT_EQ(error_key(Json::parse(R"({"seed": 1, "scale": {"rotaton": 0.5}})")), "scale.rotaton");
    EXPECT_EQ(error_key(Json::parse(R"({"seed": 1, "sead": 2})")), "sead");
    EXPECT_EQ(error_key(Json::parse(R"({"seed": 1, "serve": {"port": "80"}})")), "serve.port");
    EXPECT_EQ(error_key(Json::parse(R"({"seed": 1, "serve": {"port": 70000}})")), "serve.port");
    EXPECT_EQ(error_key(Json::parse(R"({"seed": 1, "evaluate": {"mode": "fast"}})")), "evaluate.mode");
    EXPECT_EQ(error_key(Json::parse(R"({"seed": 1, "models": [{"id": "m", "url": "ftp://x"}]})")), "models[0].url");
    EXPECT_EQ(error_key(Json::parse(R"({"seed": 1, "models": [{"id": "m", "url": "http://x", "extra": 1}]})")),
              "models[0].extra");
    EXPECT_EQ(error_key(Json::parse(R"({"seed": 1, "models": [{"id": "oracle", "url": "http://x"}]})")), "models[0].id");
    EXPECT_EQ(error_key(Json::parse(
                  R"({"seed": 1, "models": [{"id": "a", "url": "http://x"}, {"id": "a", "url": "http://y"}]})")),
              "models[1].id");
    EXPECT_EQ(error_key(Json::parse(R"({"seed": 1, "analyze": {"max_disparity": 200}})")), "analyze.max_disparity");
    EXPECT_EQ(error_key(Json::parse(R"({"seed": 1, "numerosity": {"overlap_lo": 0.5, "overlap_hi": 0.4}})")),
              "numerosity.overlap_lo");
    EXPECT_EQ(error_key(Json::parse(R"([1, 2])")), "<root>");
    EXPECT_EQ(error_key(Json::parse(R"({"seed": 1, "analyze": {"max_disparity": null}})")), "");
}

TEST(Config, EchoRoundTripsAndRedacts) {
    auto c = config_from_json(Json::parse(R"({
        "seed": 11, "output_dir": "runs/a", "scale": {"oddball": 0.2},
        "models": [{"id": "m1", "url": "http://localhost:1/v1/chat/completions", "model": "x", "temperature": 0}],
        "serve": {"export_token": "hunter2", "port": 0},
        "analyze": {"max_disparity": 90}
    })"));
    validate(c);
    const Json echo = config_to_json(c);
    EXPECT_EQ(echo["serve"]["export_token"], "<set>");
    EXPECT_EQ(echo.dump().find("hunter2"), std::string::npos);
    // Everything else survives a round trip.
    Json again_in = echo;
    again_in["serve"]["export_token"] = "hunter2";
    const auto again = config_from_json(again_in);
    EXPECT_EQ(config_to_json(again), echo);
    EXPECT_EQ(again.serve.export_token, "hunter2");
    EXPECT_EQ(again.models.at(0).temperature, 0.0);
    EXPECT_EQ(again.output_dir, std::filesystem::path("runs/a"));
}

TEST(Config, LoadReportsBadJson) {
    sp_test::ScratchDir dir;
    write_text(dir / "c.json", "{\"seed\": 1,");
    try {
        load_config(dir / "c.json");
        FAIL();
    } catch (const ConfigError& e) {
        EXPECT_EQ(e.key, "<file>");
    }
}

// ---- through the CLI -----------------------------------------------------------

TEST(Cli, ScaledRotationCountAndFlagsWin) {
    sp_test::ScratchDir dir;
    write_text(dir / "c.json", fmt::format(R"({{"seed": 5, "scale": 0.5, "output_dir": "{}",
                                               "rotation": {{"panel_size": 48}}}})",
                                           (dir / "from_file").string()));
    const auto out = dir / "flags";
    const auto r = sp_test::run_cli(fmt::format("generate --config '{}' --scale 0.05 --task rotation --seed 6 --out '{}'",
                                                (dir / "c.json").string(), out.string()));
    ASSERT_EQ(r.exit_code, 0) << r.output;
    EXPECT_FALSE(std::filesystem::exists(dir / "from_file"));
    const auto m = load_manifest(out / "rotation_manifest.json");
    EXPECT_EQ(m.trials.size(), 188u);
    const auto echo = Json::parse(sp_test::slurp(out / "config.json"));
    EXPECT_EQ(echo["seed"], 6);
    EXPECT_EQ(echo["scale"]["rotation"], 0.05);
    EXPECT_EQ(echo["rotation"]["panel_size"], 48);
}

TEST(Cli, ConfigErrorsExitWithTwo) {
    sp_test::ScratchDir dir;
    write_text(dir / "c.json", R"({"seed": 1, "scale": {"rotation": 3}})");
    auto r = sp_test::run_cli(fmt::format("generate --config '{}'", (dir / "c.json").string()));
    EXPECT_EQ(r.exit_code, 2);
    EXPECT_NE(r.output.find("scale.rotation"), std::string::npos) << r.output;

    write_text(dir / "d.json", R"({"scale": 0.1})");
    r = sp_test::run_cli(fmt::format("generate --config '{}'", (dir / "d.json").string()));
    EXPECT_EQ(r.exit_code, 2);
    EXPECT_NE(r.output.find("seed"), std::string::npos);

    r = sp_test::run_cli(fmt::format("generate --scale 0 --out '{}'", (dir / "o").string()));
    EXPECT_EQ(r.exit_code, 2);
    r = sp_test::run_cli(fmt::format("generate --task juggling --out '{}'", (dir / "o").string()));
    EXPECT_EQ(r.exit_code, 2);
    r = sp_test::run_cli("evaluate --model nobody --out '" + (dir / "o").string() + "'");
    EXPECT_EQ(r.exit_code, 2);
    r = sp_test::run_cli("frobnicate");
    EXPECT_NE(r.exit_code, 0);
}

TEST(Cli, EvaluateAndAnalyzeWithBuiltinModel) {
    sp_test::ScratchDir dir;
    const auto out = (dir / "run").string();
    auto r = sp_test::run_cli(fmt::format("generate --scale 0.01 --task rotation,numerosity --seed 3 --out '{}'", out));
    ASSERT_EQ(r.exit_code, 0) << r.output;
    r = sp_test::run_cli(fmt::format("evaluate --model oracle --task rotation --seed 3 --out '{}'", out));
    ASSERT_EQ(r.exit_code, 0) << r.output;
    EXPECT_NE(r.output.find("accuracy=1.0000"), std::string::npos) << r.output;
    r = sp_test::run_cli(fmt::format("analyze --seed 3 --out '{}'", out));
    ASSERT_EQ(r.exit_code, 0) << r.output;
    EXPECT_TRUE(std::filesystem::exists(dir / "run/summary/run.json"));
    const auto run = Json::parse(sp_test::slurp(dir / "run/summary/run.json"));
    EXPECT_EQ(run["models"], Json::array({"oracle"}));
}
