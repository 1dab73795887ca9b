#include <filesystem>
#include <fstream>
#include <sstream>

#include "ct/cli.hpp"
#include "doctest.h"

using namespace ct;
namespace fs = std::filesystem;

namespace {

std::string slurp(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  REQUIRE(f);
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

struct TmpDir {
  std::string path;
  explicit TmpDir(const std::string& p) : path(p) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TmpDir() { fs::remove_all(path); }
};

}  // namespace

TEST_CASE("unknown command and flags exit with code 2") {
  CHECK(run_command({"no-such-command"}) == 2);
  CHECK(run_command({"gen-dataset", "--no-such-flag", "3"}) == 2);
}

TEST_CASE("module failures exit with code 1") {
  CHECK(run_command({"track", "--scene", "/nonexistent/scene", "--out", "/tmp/ct_cli_fail"}) == 1);
}

TEST_CASE("gen-dataset writes scenes and the resolved config") {
  TmpDir tmp("/tmp/ct_cli_gen");
  int rc = run_command({"gen-dataset", "--out", tmp.path, "--scenes", "1", "--views", "2", "--image-wh",
                        "24", "--timesteps", "2", "--resolution", "4", "--seed", "9"});
  CHECK(rc == 0);
  CHECK(fs::exists(tmp.path + "/config.json"));
  CHECK(fs::exists(tmp.path + "/scene_000/scene.json"));
  CHECK(fs::exists(tmp.path + "/scene_000/mesh_t0002.json"));
  CHECK(fs::exists(tmp.path + "/scene_000/view01_t0002.ppm"));
}

TEST_CASE("config file keys are validated") {
  TmpDir tmp("/tmp/ct_cli_cfg");
  {
    std::ofstream f(tmp.path + "/bad.json");
    f << "{\"not-a-flag\": 3}\n";
  }
  CHECK(run_command({"gen-dataset", "--config", tmp.path + "/bad.json"}) == 2);
  {
    std::ofstream f(tmp.path + "/good.json");
    f << "{\"scenes\": 1, \"views\": 1, \"image-wh\": 16, \"timesteps\": 1, \"resolution\": 3, "
         "\"out\": \"" << tmp.path << "/data\"}\n";
  }
  CHECK(run_command({"gen-dataset", "--config", tmp.path + "/good.json"}) == 0);
  CHECK(fs::exists(tmp.path + "/data/scene_000/scene.json"));
}

TEST_CASE("track then eval produce the contracted outputs") {
  TmpDir tmp("/tmp/ct_cli_track");
  REQUIRE(run_command({"gen-dataset", "--out", tmp.path + "/data", "--scenes", "1", "--views", "2",
                       "--image-wh", "32", "--timesteps", "2", "--resolution", "4", "--seed", "4"}) == 0);
  std::string scene = tmp.path + "/data/scene_000";
  REQUIRE(run_command({"fit-appearance", "--scene", scene, "--out", tmp.path + "/cloud.json", "--iters",
                       "40"}) == 0);
  REQUIRE(run_command({"track", "--scene", scene, "--out", tmp.path + "/run", "--mode", "rollout",
                       "--epochs", "10", "--cloud", tmp.path + "/cloud.json", "--seed", "1"}) == 0);
  CHECK(fs::exists(tmp.path + "/run/tracks.json"));
  CHECK(fs::exists(tmp.path + "/run/losses.csv"));
  CHECK(fs::exists(tmp.path + "/run/metrics.csv"));
  CHECK(fs::exists(tmp.path + "/run/config.json"));

  REQUIRE(run_command({"eval", "--pred", tmp.path + "/run/tracks.json", "--gt", scene, "--out",
                       tmp.path + "/eval"}) == 0);
  std::string metrics = slurp(tmp.path + "/eval/metrics.csv");
  CHECK(metrics.find("mte_mm") != std::string::npos);
  CHECK(std::count(metrics.begin(), metrics.end(), '\n') == 2);  // header + one row
}

TEST_CASE("rerunning with the same seed is byte-identical") {
  TmpDir tmp("/tmp/ct_cli_det");
  auto run_once = [&](const std::string& sub) {
    REQUIRE(run_command({"gen-dataset", "--out", tmp.path + "/" + sub, "--scenes", "1", "--views", "2",
                         "--image-wh", "24", "--timesteps", "2", "--resolution", "4", "--seed",
                         "77"}) == 0);
  };
  run_once("a");
  run_once("b");
  int compared = 0;
  for (const auto& entry : fs::recursive_directory_iterator(tmp.path + "/a")) {
    if (!entry.is_regular_file()) continue;
    std::string rel = fs::relative(entry.path(), tmp.path + "/a").string();
    if (rel == "config.json") continue;  // records the (differing) --out path
    CHECK(slurp(entry.path().string()) == slurp(tmp.path + "/b/" + rel));
    ++compared;
  }
  CHECK(compared > 5);
}

TEST_CASE("render-debug dumps views and the per-Gaussian table") {
  TmpDir tmp("/tmp/ct_cli_debug");
  REQUIRE(run_command({"gen-dataset", "--out", tmp.path + "/data", "--scenes", "1", "--views", "2",
                       "--image-wh", "24", "--timesteps", "1", "--resolution", "4", "--seed", "2"}) == 0);
  REQUIRE(run_command({"render-debug", "--scene", tmp.path + "/data/scene_000", "--t", "1", "--out",
                       tmp.path + "/dbg"}) == 0);
  CHECK(fs::exists(tmp.path + "/dbg/debug_view00_t0001.ppm"));
  CHECK(fs::exists(tmp.path + "/dbg/gaussians.csv"));
  std::string csv = slurp(tmp.path + "/dbg/gaussians.csv");
  CHECK(csv.find("face_id") != std::string::npos);
}
