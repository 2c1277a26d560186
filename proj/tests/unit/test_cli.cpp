#include <doctest.h>

#include <filesystem>
#include <string>
#include <vector>

#include "cli.hpp"
#include "factor/evaluation.hpp"
#include "factor/interchange.hpp"
#include "factor/png_io.hpp"

namespace fs = std::filesystem;

namespace {

int factor_main(std::vector<std::string> args) {
  args.insert(args.begin(), "factor");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  return factor::cli::run(static_cast<int>(argv.size()), argv.data());
}

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name)
      : path(fs::temp_directory_path() / name) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string operator/(const std::string& leaf) const { return (path / leaf).string(); }
};

}  // namespace

TEST_SUITE("cli") {
  TEST_CASE("help and usage errors") {
    CHECK(factor_main({"--help"}) == 0);
    CHECK(factor_main({"calibrate", "--help"}) == 0);
    CHECK(factor_main({}) == 1);
    CHECK(factor_main({"frobnicate"}) == 1);
    CHECK(factor_main({"calibrate"}) == 1);
    CHECK(factor_main({"metrics", "--a", "x.png", "--b", "y.png", "--bogus"}) == 1);
  }

  TEST_CASE("pipeline") {
    TempDir tmp("factor_cli_pipeline");
    const std::string data = tmp / "data";
    REQUIRE(factor_main({"--log-level", "off", "generate", "--out", data, "--scenes", "6",
                         "--seed", "3"}) == 0);
    const std::string orig = data + "/detections_orig.jsonl";
    const std::string cf = data + "/detections_cf.jsonl";
    const std::string emb = data + "/embeddings.json";
    const std::string cfg = data + "/config.json";
    const std::string gt = data + "/groundtruth.jsonl";

    REQUIRE(factor_main({"--log-level", "off", "calibrate", "--orig", orig, "--cf", cf,
                         "--emb", emb, "--config", cfg, "--out", tmp / "cal1.jsonl",
                         "--stats", tmp / "stats1.json"}) == 0);
    REQUIRE(factor_main({"--log-level", "off", "calibrate", "--orig", orig, "--cf", cf,
                         "--emb", emb, "--config", cfg, "--out", tmp / "cal2.jsonl",
                         "--stats", tmp / "stats2.json", "--workers", "3"}) == 0);
    CHECK(factor::read_text_file(tmp / "cal1.jsonl") ==
          factor::read_text_file(tmp / "cal2.jsonl"));
    CHECK(factor::read_text_file(tmp / "stats1.json") ==
          factor::read_text_file(tmp / "stats2.json"));
    CHECK(factor::read_detections_jsonl(tmp / "cal1.jsonl").size() == 6);

    REQUIRE(factor_main({"--log-level", "off", "evaluate", "--det", tmp / "cal1.jsonl",
                         "--gt", gt, "--out", tmp / "report.json"}) == 0);
    CHECK(factor::read_text_file(tmp / "report.json").find("\"map50\"") !=
          std::string::npos);

    // Flag beats config file.
    REQUIRE(factor_main({"--log-level", "off", "calibrate", "--orig", orig, "--cf", cf,
                         "--emb", emb, "--config", cfg, "--lambda", "0.9", "--out",
                         tmp / "cal3.jsonl", "--stats", tmp / "stats3.json"}) == 0);
    CHECK(factor::read_text_file(tmp / "stats3.json").find("\"lambda\": 0.9") !=
          std::string::npos);

    // Mismatched inputs are input errors.
    CHECK(factor_main({"--log-level", "off", "calibrate", "--orig", orig, "--cf", gt,
                       "--emb", emb, "--out", tmp / "x.jsonl"}) == 1);
    CHECK(factor_main({"--log-level", "off", "evaluate", "--det", orig, "--gt", orig,
                       "--out", tmp / "x.json"}) == 1);
    CHECK(factor_main({"--log-level", "off", "calibrate", "--orig", tmp / "missing",
                       "--cf", cf, "--emb", emb, "--out", tmp / "x.jsonl"}) == 1);
  }

  TEST_CASE("perturb and metrics") {
    TempDir tmp("factor_cli_perturb");
    const std::string data = tmp / "data";
    REQUIRE(factor_main({"--log-level", "off", "generate", "--out", data, "--scenes",
                         "2"}) == 0);
    const std::string images = data + "/images";
    REQUIRE(factor_main({"--log-level", "off", "perturb", "--in", images, "--out",
                         tmp / "a", "--seed", "5"}) == 0);
    REQUIRE(factor_main({"--log-level", "off", "perturb", "--in", images, "--out",
                         tmp / "b", "--seed", "5", "--workers", "2"}) == 0);
    CHECK(factor::read_text_file(tmp / "a/scene-0.png") ==
          factor::read_text_file(tmp / "b/scene-0.png"));
    CHECK(factor::read_text_file(tmp / "a/diff_report.json") ==
          factor::read_text_file(tmp / "b/diff_report.json"));
    CHECK(factor_main({"--log-level", "off", "perturb", "--in", images, "--out",
                       tmp / "c", "--alpha", "1.0"}) == 1);
    CHECK(factor_main({"--log-level", "off", "perturb", "--in", images, "--out",
                       images}) == 1);

    const std::string img = images + "/scene-0.png";
    REQUIRE(factor_main({"--log-level", "off", "metrics", "--a", img, "--b", img,
                         "--out", tmp / "m.json"}) == 0);
    const std::string m = factor::read_text_file(tmp / "m.json");
    CHECK(m.find("\"delta_mu\": 0.0") != std::string::npos);
    CHECK(m.find("\"delta_max\": 0.0") != std::string::npos);
    CHECK(m.find("\"relative_change_pct\": 0.0") != std::string::npos);
  }

  TEST_CASE("sweep with plots") {
    TempDir tmp("factor_cli_sweep");
    factor::write_text_file(tmp / "exp.json",
                            R"({"num_scenes":8,"severities":["low","high"],"lambda_grid":[0.1,0.6,1.1]})");
    REQUIRE(factor_main({"--log-level", "off", "sweep", "--config", tmp / "exp.json",
                         "--out", tmp / "r1.json", "--emit-plots", tmp / "plots"}) == 0);
    REQUIRE(factor_main({"--log-level", "off", "sweep", "--config", tmp / "exp.json",
                         "--out", tmp / "r2.json", "--workers", "4"}) == 0);
    CHECK(factor::read_text_file(tmp / "r1.json") == factor::read_text_file(tmp / "r2.json"));
    CHECK(fs::exists(tmp / "plots/pr_low.svg"));
    CHECK(fs::exists(tmp / "plots/pr_high.svg"));
    CHECK(fs::exists(tmp / "plots/lambda_sensitivity.svg"));
    REQUIRE(factor_main({"--log-level", "off", "sweep", "--config", tmp / "exp.json",
                         "--out", tmp / "r3.json", "--seed", "9"}) == 0);
    CHECK(factor::read_text_file(tmp / "r3.json") != factor::read_text_file(tmp / "r1.json"));
    factor::write_text_file(tmp / "bad.json", R"({"severities":["extreme"]})");
    CHECK(factor_main({"--log-level", "off", "sweep", "--config", tmp / "bad.json",
                       "--out", tmp / "r4.json"}) == 1);
  }
}
