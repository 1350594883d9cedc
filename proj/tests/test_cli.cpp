#include <doctest.h>

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>

#include "dlo/io.hpp"

using namespace dlo;
namespace fs = std::filesystem;

namespace {

const fs::path kRoot = fs::temp_directory_path() / "dlo_test_cli";

int run(const std::string& args) {
  const std::string cmd = std::string(DLO_CLI_PATH) + " " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

// A few seconds end to end.
fs::path tiny_config() {
  fs::create_directories(kRoot);
  const fs::path p = kRoot / "tiny.json";
  std::ofstream(p) << R"({
    "preset": "desk",
    "lfi": {"n_iterations": 2, "first_iteration_trajectories": 24, "trajectories_per_iter": 12,
            "first_iteration_epochs": 3, "epochs_per_iter": 2},
    "mdnn": {"rff_features": 16, "hidden": 16, "components": 2},
    "ppo": {"total_steps": 384},
    "run": {"eval_repetitions": 1, "heatmap_resolution": 10}
  })";
  return p;
}

std::string args(const fs::path& cfg, const fs::path& out, int seed) {
  return "--config " + cfg.string() + " --out " + out.string() + " --seed " + std::to_string(seed);
}

}  // namespace

TEST_CASE("usage errors exit with 2") {
  CHECK(run("") == 2);
  CHECK(run("frobnicate") == 2);
  CHECK(run("pipeline --dlo 4 --out " + (kRoot / "bad").string()) == 2);
  CHECK(run("pipeline --config " + (kRoot / "does_not_exist.json").string()) == 2);
  fs::create_directories(kRoot);
  std::ofstream(kRoot / "unknown.json") << R"({"lfi": {"iterations": 3}})";
  CHECK(run("pipeline --config " + (kRoot / "unknown.json").string()) == 2);
  CHECK(run("--help") == 0);
}

TEST_CASE("simulate writes one record") {
  const fs::path out = kRoot / "sim";
  fs::remove_all(out);
  REQUIRE(run("simulate " + args(tiny_config(), out, 1) + " --length 0.25 --modulus 20000") == 0);
  ArtifactMeta meta;
  const auto recs = read_records_jsonl(out / "simulate.jsonl", &meta);
  REQUIRE(recs.size() == 1);
  CHECK(meta.seed == 1);
  CHECK(meta.stage == "simulate");
  REQUIRE(recs[0].params.has_value());
  CHECK(recs[0].params->length == 0.25);
  CHECK(run("simulate " + args(tiny_config(), out, 1) + " --length 0.9") == 2);
}

TEST_CASE("pipeline artifacts, stage skipping and reproducibility") {
  const fs::path cfg = tiny_config();
  const fs::path a = kRoot / "run_a", b = kRoot / "run_b";
  fs::remove_all(a);
  fs::remove_all(b);
  REQUIRE(run("pipeline " + args(cfg, a, 7)) == 0);

  for (const char* f : {"config.json", "policy_b0.json", "real_trajectory.jsonl", "posterior.json",
                        "posterior_iter_00.json", "posterior_iter_01.json", "lfi_loss.csv",
                        "learning_curve_b0.csv", "learning_curve_b1.csv", "learning_curve_mu.csv",
                        "eval_grid/summary.csv", "eval_grid/dtw_matrix.csv", "heatmaps/posterior.csv"}) {
    CHECK_MESSAGE(fs::exists(a / f), f);
  }
  for (const char* s : {"policy_b0", "real_rollout", "inference", "policy_b1", "policy_mu", "evaluate"}) {
    CHECK_MESSAGE(fs::exists(a / "stages" / (std::string(s) + ".json")), s);
  }
  ArtifactMeta meta;
  CHECK_NOTHROW(mog_from_json(read_json(a / "posterior.json", "posterior", &meta)).validate());
  CHECK(meta.seed == 7);

  // A rerun finds every marker and rewrites nothing.
  const auto stamp = fs::last_write_time(a / "posterior.json");
  REQUIRE(run("pipeline " + args(cfg, a, 7)) == 0);
  CHECK(fs::last_write_time(a / "posterior.json") == stamp);

  REQUIRE(run("pipeline " + args(cfg, b, 7)) == 0);
  for (const char* f : {"posterior.json", "learning_curve_b0.csv", "real_trajectory.jsonl",
                        "eval_grid/dtw_matrix.csv"}) {
    CHECK_MESSAGE(read_text(a / f) == read_text(b / f), f);
  }
}

TEST_CASE("single stages resume from earlier artifacts") {
  const fs::path cfg = tiny_config();
  const fs::path out = kRoot / "stages";
  fs::remove_all(out);
  REQUIRE(run("train-policy --prior uniform " + args(cfg, out, 3)) == 0);
  CHECK(fs::exists(out / "stages" / "policy_b0.json"));
  CHECK_FALSE(fs::exists(out / "posterior.json"));
  REQUIRE(run("collect -n 6 " + args(cfg, out, 3)) == 0);
  const auto lines = read_text(out / "dataset.jsonl");
  CHECK(std::count(lines.begin(), lines.end(), '\n') == 7);
  REQUIRE(run("infer " + args(cfg, out, 3)) == 0);
  CHECK(fs::exists(out / "posterior.json"));
  REQUIRE(run("heatmap " + args(cfg, out, 3)) == 0);
  CHECK(fs::exists(out / "heatmaps" / "posterior.csv"));
}
