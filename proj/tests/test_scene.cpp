#include <filesystem>

#include "ct/scene.hpp"
#include "doctest.h"

using namespace ct;

namespace {
SceneConfig small_config(std::uint64_t seed = 0) {
  SceneConfig c;
  c.resolution = 6;
  c.views = 2;
  c.image_width = c.image_height = 32;
  c.timesteps = 3;
  c.seed = seed;
  return c;
}
}  // namespace

TEST_CASE("generate_scene produces the expected counts") {
  SceneConfig c = small_config(1);
  c.views = 4;
  Scene s = generate_scene(c);
  CHECK(s.gt_positions.size() == 4);  // T+1
  CHECK(s.observations.size() == 4);
  std::size_t images = 0;
  for (const auto& v : s.observations) images += v.size();
  CHECK(images == 16);  // (T+1) * K
  CHECK(s.cameras.size() == 4);
  CHECK(s.trajectory.actions.size() == 3);
}

TEST_CASE("single view still renders every timestep") {
  SceneConfig c = small_config(2);
  c.views = 1;
  Scene s = generate_scene(c);
  std::size_t images = 0;
  for (const auto& v : s.observations) images += v.size();
  CHECK(images == 4);
}

TEST_CASE("same seed gives a bit-identical scene") {
  Scene a = generate_scene(small_config(3));
  Scene b = generate_scene(small_config(3));
  for (std::size_t t = 0; t < a.gt_positions.size(); ++t)
    for (std::size_t i = 0; i < a.gt_positions[t].size(); ++i)
      CHECK((a.gt_positions[t][i] - b.gt_positions[t][i]).norm() == 0.0);
  for (std::size_t t = 0; t < a.observations.size(); ++t)
    for (std::size_t k = 0; k < a.observations[t].size(); ++k)
      CHECK(a.observations[t][k].px == b.observations[t][k].px);
}

TEST_CASE("observations are non-trivial and bounded") {
  Scene s = generate_scene(small_config(4));
  double maxv = 0, sum = 0;
  for (const auto& views : s.observations)
    for (const auto& img : views)
      for (double v : img.px) {
        maxv = std::max(maxv, v);
        sum += v;
      }
  CHECK(maxv <= 1.0);
  CHECK(maxv > 0.2);  // the cloth is visible
  CHECK(sum > 0);
}

TEST_CASE("scene save/load round trip") {
  std::string dir = "/tmp/ct_scene_roundtrip";
  std::filesystem::remove_all(dir);
  Scene a = generate_scene(small_config(5));
  save_scene(dir, a);
  Scene b = load_scene(dir);
  CHECK(b.steps() == a.steps());
  CHECK(b.cameras.size() == a.cameras.size());
  CHECK(b.grasped_vertex == a.grasped_vertex);
  CHECK(b.trajectory.actions.size() == a.trajectory.actions.size());
  for (std::size_t t = 0; t < a.gt_positions.size(); ++t)
    for (std::size_t i = 0; i < a.gt_positions[t].size(); ++i)
      CHECK((a.gt_positions[t][i] - b.gt_positions[t][i]).norm() < 1e-15);
  // images go through 8-bit quantization
  for (std::size_t k = 0; k < a.observations[0].size(); ++k)
    for (std::size_t i = 0; i < a.observations[0][k].px.size(); ++i)
      CHECK(std::abs(a.observations[0][k].px[i] - b.observations[0][k].px[i]) <= 0.5 / 255 + 1e-12);
  CHECK(b.gt_cloud.size() == a.gt_cloud.size());
  std::filesystem::remove_all(dir);
}

TEST_CASE("pixel noise knob perturbs observations deterministically") {
  SceneConfig c = small_config(6);
  c.pixel_noise = 0.05;
  Scene a = generate_scene(c);
  Scene b = generate_scene(c);
  CHECK(a.observations[1][0].px == b.observations[1][0].px);
  SceneConfig clean = small_config(6);
  Scene d = generate_scene(clean);
  CHECK(a.observations[1][0].px != d.observations[1][0].px);
}

TEST_CASE("hemisphere cameras look at the target") {
  auto cams = hemisphere_cameras(Vec3(0.1, 0.1, 0), 4, 0.5, 64, 48, 48);
  CHECK(cams.size() == 4);
  for (const auto& cam : cams) {
    cam.validate();
    Vec3 xc = cam.to_camera(Vec3(0.1, 0.1, 0));
    CHECK(std::abs(xc.x()) < 1e-9);
    CHECK(std::abs(xc.y()) < 1e-9);
    CHECK(xc.z() == doctest::Approx(0.5).epsilon(1e-9));
  }
}
