#include "ct/scene.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <stdexcept>

#include "ct/rng.hpp"
#include "json.hpp"

namespace fs = std::filesystem;

namespace ct {

std::vector<CameraView> hemisphere_cameras(const Vec3& target, int count, double radius,
                                           double focal_px, int width, int height) {
  if (count < 1) throw std::invalid_argument("need at least one camera");
  std::vector<CameraView> cams;
  for (int k = 0; k < count; ++k) {
    double azimuth = M_PI / 4 + 2.0 * M_PI * k / count;
    double elevation = (k % 2 == 0) ? 55.0 * M_PI / 180 : 40.0 * M_PI / 180;
    Vec3 pos = target + radius * Vec3(std::cos(elevation) * std::cos(azimuth),
                                      std::cos(elevation) * std::sin(azimuth), std::sin(elevation));
    cams.push_back(look_at_camera(pos, target, focal_px, width, height));
  }
  return cams;
}

GaussianCloud checkerboard_cloud(const AugmentedMesh& mesh, int per_face, std::uint64_t seed) {
  GaussianCloud cloud = attach_gaussians(mesh, per_face, derive_seed(seed, "gt_cloud"));
  Vec3 lo = mesh.vertices()[0], hi = mesh.vertices()[0];
  for (const auto& v : mesh.vertices()) {
    lo = lo.cwiseMin(v);
    hi = hi.cwiseMax(v);
  }
  double cell = std::max((hi - lo).x(), (hi - lo).y()) / 4.0;
  const Vec3 col_a(0.85, 0.15, 0.15), col_b(0.93, 0.90, 0.84);
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    auto f = static_cast<std::size_t>(cloud.face_id[i]);
    auto tri = mesh.face_vertices(cloud.face_id[i]);
    Vec3 c = (tri[0] + tri[1] + tri[2]) / 3.0;
    int px = static_cast<int>(std::floor((c.x() - lo.x()) / cell));
    int py = static_cast<int>(std::floor((c.y() - lo.y()) / cell));
    Vec3 base = ((px + py) % 2 == 0) ? col_a : col_b;
    double jitter = 1.0 + 0.12 * (static_cast<double>(splitmix64(f) % 1000) / 500.0 - 1.0);
    cloud.color[i] = (base * jitter).cwiseMax(0.0).cwiseMin(1.0);
    cloud.opacity_logit[i] = 3.0;
  }
  return cloud;
}

Scene generate_scene(const SceneConfig& config) {
  if (config.views < 1) throw std::invalid_argument("views must be >= 1");
  if (config.timesteps < 1) throw std::invalid_argument("timesteps must be >= 1");

  Scene scene;
  scene.config = config;
  scene.rest = make_template_mesh(config.cloth, config.cloth_width, config.cloth_height, config.resolution);
  scene.trajectory =
      make_bezier_trajectory(scene.rest, derive_seed(config.seed, "trajectory"), config.timesteps);
  scene.grasped_vertex = scene.trajectory.pick_vertex;

  scene.params = config.params;
  scene.params.dt = scene.trajectory.dt;
  scene.params.substeps = std::max(1, static_cast<int>(std::ceil(scene.trajectory.dt / config.substep_target)));

  scene.gt_positions.push_back(scene.rest.vertices());
  scene.gt_velocities.push_back(scene.rest.velocities());
  AugmentedMesh current = scene.rest;
  for (int t = 0; t < config.timesteps; ++t) {
    current = simulate_step(current, scene.params, scene.trajectory.actions[static_cast<std::size_t>(t)],
                            scene.grasped_vertex);
    scene.gt_positions.push_back(current.vertices());
    scene.gt_velocities.push_back(current.velocities());
  }

  double focal = config.focal_factor * config.image_width;
  scene.cameras = hemisphere_cameras(scene.rest.centroid(), config.views, config.camera_radius, focal,
                                     config.image_width, config.image_height);
  scene.gt_cloud = checkerboard_cloud(scene.rest, config.gaussians_per_face, config.seed);

  std::mt19937_64 noise_rng(derive_seed(config.seed, "pixel_noise"));
  std::normal_distribution<double> noise(0.0, 1.0);
  scene.observations.resize(scene.gt_positions.size());
  for (int t = 0; t <= config.timesteps; ++t) {
    AugmentedMesh state = scene.state(t);
    auto& views = scene.observations[static_cast<std::size_t>(t)];
    views.reserve(scene.cameras.size());
    for (const auto& cam : scene.cameras) {
      Image img = render_view(scene.gt_cloud, state, scene.rest, cam).rgb;
      if (config.pixel_noise > 0) {
        for (double& v : img.px) v = std::clamp(v + config.pixel_noise * noise(noise_rng), 0.0, 1.0);
      }
      views.push_back(std::move(img));
    }
  }
  return scene;
}

// ---------------------------------------------------------------------------
// disk format: scene.json + cloud.json + mesh_t####.json + view##_t####.ppm
// ---------------------------------------------------------------------------

namespace {

nlohmann::ordered_json camera_to_json(const CameraView& cam) {
  nlohmann::ordered_json j;
  auto& m = j["world_to_cam"] = nlohmann::ordered_json::array();
  for (int r = 0; r < 4; ++r)
    for (int c = 0; c < 4; ++c) m.push_back(cam.world_to_cam(r, c));
  j["fx"] = cam.fx;
  j["fy"] = cam.fy;
  j["cx"] = cam.cx;
  j["cy"] = cam.cy;
  j["width"] = cam.width;
  j["height"] = cam.height;
  return j;
}

CameraView camera_from_json(const nlohmann::json& j) {
  CameraView cam;
  const auto& m = j.at("world_to_cam");
  for (int r = 0; r < 4; ++r)
    for (int c = 0; c < 4; ++c) cam.world_to_cam(r, c) = m.at(static_cast<std::size_t>(4 * r + c)).get<double>();
  cam.fx = j.at("fx").get<double>();
  cam.fy = j.at("fy").get<double>();
  cam.cx = j.at("cx").get<double>();
  cam.cy = j.at("cy").get<double>();
  cam.width = j.at("width").get<int>();
  cam.height = j.at("height").get<int>();
  cam.validate();
  return cam;
}

nlohmann::ordered_json vec3_json(const Vec3& v) { return nlohmann::ordered_json::array({v.x(), v.y(), v.z()}); }
Vec3 vec3_from(const nlohmann::json& j) {
  return Vec3(j.at(0).get<double>(), j.at(1).get<double>(), j.at(2).get<double>());
}

std::string step_name(const char* prefix, int t, const char* suffix) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%s%04d%s", prefix, t, suffix);
  return buf;
}

std::string view_name(int k, int t) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "view%02d_t%04d.ppm", k, t);
  return buf;
}

}  // namespace

nlohmann::ordered_json cloud_to_json(const GaussianCloud& cloud);
GaussianCloud cloud_from_json(const nlohmann::json& j);

nlohmann::ordered_json cloud_to_json(const GaussianCloud& cloud) {
  nlohmann::ordered_json j;
  j["count"] = cloud.size();
  auto arr = [&](const char* key) -> nlohmann::ordered_json& { return j[key] = nlohmann::ordered_json::array(); };
  auto& jf = arr("face_id");
  for (int f : cloud.face_id) jf.push_back(f);
  auto& jb = arr("bc");
  for (const auto& b : cloud.bc) jb.push_back({b.b1, b.b2, b.b3});
  auto& jr = arr("rotation");
  for (const auto& q : cloud.rotation) jr.push_back({q(0), q(1), q(2), q(3)});
  auto& js = arr("log_scales");
  for (const auto& s : cloud.log_scales) js.push_back({s.x(), s.y(), s.z()});
  auto& jo = arr("opacity_logit");
  for (double o : cloud.opacity_logit) jo.push_back(o);
  auto& jc = arr("color");
  for (const auto& c : cloud.color) jc.push_back({c.x(), c.y(), c.z()});
  return j;
}

GaussianCloud cloud_from_json(const nlohmann::json& j) {
  GaussianCloud cloud;
  for (const auto& f : j.at("face_id")) cloud.face_id.push_back(f.get<int>());
  for (const auto& b : j.at("bc"))
    cloud.bc.push_back(BarycentricCoord{b.at(0).get<double>(), b.at(1).get<double>(), b.at(2).get<double>()});
  for (const auto& q : j.at("rotation"))
    cloud.rotation.push_back(Eigen::Vector4d(q.at(0).get<double>(), q.at(1).get<double>(),
                                             q.at(2).get<double>(), q.at(3).get<double>()));
  for (const auto& s : j.at("log_scales")) cloud.log_scales.push_back(vec3_from(s));
  for (const auto& o : j.at("opacity_logit")) cloud.opacity_logit.push_back(o.get<double>());
  for (const auto& c : j.at("color")) cloud.color.push_back(vec3_from(c));
  if (cloud.bc.size() != cloud.size() || cloud.rotation.size() != cloud.size() ||
      cloud.log_scales.size() != cloud.size() || cloud.opacity_logit.size() != cloud.size() ||
      cloud.color.size() != cloud.size())
    throw std::invalid_argument("inconsistent cloud arrays in json");
  return cloud;
}

void save_gaussian_cloud(const std::string& path, const GaussianCloud& cloud) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot open for writing: " + path);
  f << cloud_to_json(cloud).dump() << "\n";
}

GaussianCloud load_gaussian_cloud(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open: " + path);
  return cloud_from_json(nlohmann::json::parse(f));
}

void save_scene(const std::string& dir, const Scene& scene) {
  fs::create_directories(dir);
  nlohmann::ordered_json j;
  j["template"] = to_string(scene.config.cloth);
  j["seed"] = scene.config.seed;
  j["timesteps"] = scene.steps();
  j["views"] = static_cast<int>(scene.cameras.size());
  j["image_width"] = scene.config.image_width;
  j["image_height"] = scene.config.image_height;
  j["pixel_noise"] = scene.config.pixel_noise;
  j["grasped_vertex"] = scene.grasped_vertex;
  j["cloth_width"] = scene.config.cloth_width;
  j["cloth_height"] = scene.config.cloth_height;
  j["resolution"] = scene.config.resolution;

  auto& jp = j["params"];
  jp["mass_per_vertex"] = scene.params.mass_per_vertex;
  jp["stretch_stiffness"] = scene.params.stretch_stiffness;
  jp["bending_stiffness"] = scene.params.bending_stiffness;
  jp["damping"] = scene.params.damping;
  jp["gravity"] = scene.params.gravity;
  jp["ground_friction"] = scene.params.ground_friction;
  jp["dt"] = scene.params.dt;
  jp["substeps"] = scene.params.substeps;

  auto& jt = j["trajectory"];
  jt["pick_vertex"] = scene.trajectory.pick_vertex;
  jt["place_point"] = vec3_json(scene.trajectory.place_point);
  jt["control_point"] = vec3_json(scene.trajectory.control_point);
  jt["dt"] = scene.trajectory.dt;
  jt["gripper_speed"] = scene.trajectory.gripper_speed;
  auto& ja = jt["actions"] = nlohmann::ordered_json::array();
  for (const auto& a : scene.trajectory.actions) ja.push_back(vec3_json(a));

  auto& jc = j["cameras"] = nlohmann::ordered_json::array();
  for (const auto& cam : scene.cameras) jc.push_back(camera_to_json(cam));

  std::ofstream f(dir + "/scene.json");
  if (!f) throw std::runtime_error("cannot open for writing: " + dir + "/scene.json");
  f << j.dump(1) << "\n";

  save_gaussian_cloud(dir + "/cloud.json", scene.gt_cloud);
  for (int t = 0; t <= scene.steps(); ++t) {
    save_mesh(dir + "/" + step_name("mesh_t", t, ".json"), scene.state(t));
    for (std::size_t k = 0; k < scene.cameras.size(); ++k)
      write_ppm(dir + "/" + view_name(static_cast<int>(k), t),
                scene.observations[static_cast<std::size_t>(t)][k]);
  }
}

Scene load_scene(const std::string& dir) {
  std::ifstream f(dir + "/scene.json");
  if (!f) throw std::runtime_error("cannot open: " + dir + "/scene.json");
  auto j = nlohmann::json::parse(f);

  Scene scene;
  scene.config.cloth = cloth_template_from_string(j.at("template").get<std::string>());
  scene.config.seed = j.at("seed").get<std::uint64_t>();
  scene.config.timesteps = j.at("timesteps").get<int>();
  scene.config.views = j.at("views").get<int>();
  scene.config.image_width = j.at("image_width").get<int>();
  scene.config.image_height = j.at("image_height").get<int>();
  scene.config.pixel_noise = j.at("pixel_noise").get<double>();
  scene.config.cloth_width = j.at("cloth_width").get<double>();
  scene.config.cloth_height = j.at("cloth_height").get<double>();
  scene.config.resolution = j.at("resolution").get<int>();
  scene.grasped_vertex = j.at("grasped_vertex").get<int>();

  const auto& jp = j.at("params");
  scene.params.mass_per_vertex = jp.at("mass_per_vertex").get<double>();
  scene.params.stretch_stiffness = jp.at("stretch_stiffness").get<double>();
  scene.params.bending_stiffness = jp.at("bending_stiffness").get<double>();
  scene.params.damping = jp.at("damping").get<double>();
  scene.params.gravity = jp.at("gravity").get<double>();
  scene.params.ground_friction = jp.at("ground_friction").get<double>();
  scene.params.dt = jp.at("dt").get<double>();
  scene.params.substeps = jp.at("substeps").get<int>();
  scene.config.params = scene.params;

  const auto& jt = j.at("trajectory");
  scene.trajectory.pick_vertex = jt.at("pick_vertex").get<int>();
  scene.trajectory.place_point = vec3_from(jt.at("place_point"));
  scene.trajectory.control_point = vec3_from(jt.at("control_point"));
  scene.trajectory.dt = jt.at("dt").get<double>();
  scene.trajectory.gripper_speed = jt.at("gripper_speed").get<double>();
  for (const auto& a : jt.at("actions")) scene.trajectory.actions.push_back(vec3_from(a));

  for (const auto& jc : j.at("cameras")) scene.cameras.push_back(camera_from_json(jc));

  scene.gt_cloud = load_gaussian_cloud(dir + "/cloud.json");
  scene.rest = load_mesh(dir + "/" + step_name("mesh_t", 0, ".json"));
  scene.gt_cloud.validate(scene.rest);

  int T = scene.config.timesteps;
  for (int t = 0; t <= T; ++t) {
    AugmentedMesh m = (t == 0) ? scene.rest : load_mesh(dir + "/" + step_name("mesh_t", t, ".json"));
    if (m.vertex_count() != scene.rest.vertex_count())
      throw std::runtime_error("mesh state size mismatch at t=" + std::to_string(t));
    scene.gt_positions.push_back(m.vertices());
    scene.gt_velocities.push_back(m.velocities());
    std::vector<Image> views;
    for (int k = 0; k < scene.config.views; ++k) views.push_back(read_ppm(dir + "/" + view_name(k, t)));
    scene.observations.push_back(std::move(views));
  }
  return scene;
}

}  // namespace ct
