#include "ct/cli.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "ct/appearance.hpp"
#include "ct/gns.hpp"
#include "ct/metrics.hpp"
#include "ct/mpc.hpp"
#include "ct/parallel.hpp"
#include "ct/refine.hpp"
#include "ct/rng.hpp"
#include "ct/scene.hpp"
#include "json.hpp"

namespace fs = std::filesystem;

namespace ct {

namespace {

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.6g", v);
  return buf;
}

class CsvWriter {
 public:
  CsvWriter(const std::string& path, const std::vector<std::string>& columns) : f_(path) {
    if (!f_) throw std::runtime_error("cannot open for writing: " + path);
    for (std::size_t i = 0; i < columns.size(); ++i) f_ << (i ? "," : "") << columns[i];
    f_ << "\n";
  }
  void row(const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) f_ << (i ? "," : "") << cells[i];
    f_ << "\n";
  }

 private:
  std::ofstream f_;
};

void write_resolved_config(const std::string& out_dir, const nlohmann::ordered_json& config) {
  fs::create_directories(out_dir);
  std::ofstream f(out_dir + "/config.json");
  if (!f) throw std::runtime_error("cannot open for writing: " + out_dir + "/config.json");
  f << config.dump(1) << "\n";
}

// --config file: every key must name a flag of the subcommand; values from
// the file are injected before the explicit flags, which therefore win
std::vector<std::string> inject_config_args(CLI::App& app, const std::vector<std::string>& args) {
  auto it = std::find(args.begin(), args.end(), "--config");
  if (it == args.end()) return args;
  if (args.empty() || it + 1 == args.end()) throw std::runtime_error("--config requires a path");
  if (it == args.begin()) throw std::runtime_error("--config must follow a subcommand");
  CLI::App* sub = app.get_subcommand_no_throw(args.front());
  if (!sub) return args;  // let the parser report the unknown subcommand

  std::ifstream f(*(it + 1));
  if (!f) throw std::runtime_error("cannot open config: " + *(it + 1));
  auto j = nlohmann::json::parse(f);
  std::vector<std::string> injected;
  for (auto kv = j.begin(); kv != j.end(); ++kv) {
    if (kv.key() == "command") {
      if (kv.value().get<std::string>() != args.front())
        throw std::runtime_error("config is for command '" + kv.value().get<std::string>() + "'");
      continue;
    }
    if (kv.key() == "config") continue;
    if (!sub->get_option_no_throw("--" + kv.key()))
      throw std::runtime_error("unknown config key: " + kv.key());
    std::string value = kv.value().is_string() ? kv.value().get<std::string>() : kv.value().dump();
    injected.push_back("--" + kv.key());
    injected.push_back(value);
  }
  std::vector<std::string> full;
  full.push_back(args.front());
  full.insert(full.end(), injected.begin(), injected.end());
  full.insert(full.end(), args.begin() + 1, args.end());
  return full;
}

void write_tracks_json(const std::string& path, std::span<const AugmentedMesh> refined) {
  nlohmann::ordered_json j;
  j["timesteps"] = refined.size();
  auto& jt = j["vertices"] = nlohmann::ordered_json::array();
  for (const auto& m : refined) {
    nlohmann::ordered_json frame = nlohmann::ordered_json::array();
    for (const auto& v : m.vertices()) frame.push_back({v.x(), v.y(), v.z()});
    jt.push_back(std::move(frame));
  }
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot open for writing: " + path);
  f << j.dump() << "\n";
}

TrackSet tracks_from_json(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open: " + path);
  auto j = nlohmann::json::parse(f);
  TrackSet t;
  for (const auto& frame : j.at("vertices")) {
    std::vector<Vec3> pts;
    for (const auto& v : frame) pts.emplace_back(v.at(0).get<double>(), v.at(1).get<double>(), v.at(2).get<double>());
    t.frames.push_back(std::move(pts));
  }
  return t;
}

void write_losses_csv(const std::string& path, std::span<const LossRecord> curve) {
  CsvWriter csv(path, {"epoch", "l_obs", "l_ssim", "l_iso", "l_magn", "total"});
  for (std::size_t e = 0; e < curve.size(); ++e)
    csv.row({std::to_string(e), fmt(curve[e].obs), fmt(curve[e].ssim), fmt(curve[e].iso),
             fmt(curve[e].magn), fmt(curve[e].total)});
}

void append_metrics_row(CsvWriter& csv, const std::string& scene_id, const std::string& method,
                        const TrackSet& pred, const TrackSet& gt) {
  double mte = mte_mm(pred, gt);
  DeltaAccuracy d = delta_accuracy(pred, gt);
  double surv = survival_rate(pred, gt);
  csv.row({scene_id, method, fmt(mte), fmt(d.per_threshold[0]), fmt(d.per_threshold[1]),
           fmt(d.per_threshold[2]), fmt(d.per_threshold[3]), fmt(d.per_threshold[4]), fmt(d.average),
           fmt(surv)});
}

const std::vector<std::string> kMetricsColumns = {"scene",    "method",   "mte_mm",   "delta_10",
                                                  "delta_20", "delta_40", "delta_80", "delta_160",
                                                  "delta_avg", "survival"};

TrackSet gt_tracks(const Scene& scene) {
  TrackSet gt;
  for (int t = 1; t <= scene.steps(); ++t)
    gt.frames.push_back(scene.gt_positions[static_cast<std::size_t>(t)]);
  return gt;
}

TrackSet refined_tracks(std::span<const AugmentedMesh> refined) {
  TrackSet t;
  for (const auto& m : refined) t.frames.push_back(m.vertices());
  return t;
}

struct TrackFlags {
  std::string scene_dir, out_dir, cloud_path, model_path;
  std::string mode = "rollout";
  std::string prior = "perturbed";
  int horizon = 1;
  int epochs = -1;  // -1: mode default
  int views = -1;
  double lr = 1e-2;
  double w_obs = 1.0, w_ssim = 0.02, w_iso = 1e-4, w_magn = 0.01;
  double stiffness_factor = 0.5, damping_factor = 0.5;
  int fit_iters = 400;
  int time_checkpoints = 0;
  bool dump_frames = false;
  std::uint64_t seed = 0;
};

UpdateConfig update_config_from(const TrackFlags& t) {
  UpdateConfig cfg;
  cfg.mode = t.mode == "iterative" ? UpdateMode::ITERATIVE : UpdateMode::ROLLOUT;
  cfg.horizon = t.horizon;
  cfg.epochs = t.epochs > 0 ? t.epochs : (cfg.mode == UpdateMode::ITERATIVE ? 240 : 120);
  cfg.lr = t.lr;
  cfg.views = t.views;
  cfg.weights.obs = t.w_obs;
  cfg.weights.ssim = t.w_ssim;
  cfg.weights.iso = t.w_iso;
  cfg.weights.magn = t.w_magn;
  cfg.checkpoint_interval = t.time_checkpoints;
  cfg.seed = t.seed;
  return cfg;
}

std::unique_ptr<TransitionPrior> make_prior(const TrackFlags& t, const Scene& scene) {
  if (t.prior == "perturbed")
    return std::make_unique<PerturbedSimPrior>(scene.params, t.stiffness_factor, t.damping_factor);
  if (t.prior == "gns") {
    if (t.model_path.empty()) throw std::runtime_error("--model required for --prior gns");
    return std::make_unique<GnsPrior>(load_gns(t.model_path));
  }
  if (t.prior == "zero") return std::make_unique<ZeroAccelPrior>();
  throw std::runtime_error("unknown prior: " + t.prior);
}

GaussianCloud estimator_cloud(const TrackFlags& t, const Scene& scene, const AugmentedMesh& mesh0) {
  if (!t.cloud_path.empty()) {
    GaussianCloud c = load_gaussian_cloud(t.cloud_path);
    c.validate(mesh0);
    return c;
  }
  GaussianCloud init = attach_gaussians(mesh0, scene.config.gaussians_per_face,
                                        derive_seed(t.seed, "estimator_cloud"));
  FitSchedule sched;
  sched.iterations = t.fit_iters;
  sched.warmup_no_reg = t.fit_iters / 4;
  sched.anneal_iters = (3 * t.fit_iters) / 4;
  std::vector<Image> obs0 = scene.observations[0];
  if (t.views > 0 && t.views < static_cast<int>(obs0.size())) obs0.resize(static_cast<std::size_t>(t.views));
  std::vector<CameraView> cams = scene.cameras;
  if (t.views > 0 && t.views < static_cast<int>(cams.size())) cams.resize(static_cast<std::size_t>(t.views));
  return fit_appearance(init, mesh0, obs0, cams, sched).cloud;
}

// ---------------------------------------------------------------------------
// subcommands
// ---------------------------------------------------------------------------

int cmd_gen_dataset(const std::string& out_dir, int scenes, const std::string& tmpl, int views,
                    int image_wh, int timesteps, int resolution, double noise, double cloth_size,
                    std::uint64_t seed) {
  nlohmann::ordered_json cfg{{"command", "gen-dataset"}, {"out", out_dir},       {"scenes", scenes},
                             {"template", tmpl},         {"views", views},       {"image-wh", image_wh},
                             {"timesteps", timesteps},   {"resolution", resolution}, {"noise", noise},
                             {"cloth-size", cloth_size}, {"seed", seed}};
  write_resolved_config(out_dir, cfg);
  for (int i = 0; i < scenes; ++i) {
    SceneConfig sc;
    sc.cloth = cloth_template_from_string(tmpl);
    sc.cloth_width = sc.cloth_height = cloth_size;
    sc.resolution = resolution;
    sc.views = views;
    sc.image_width = sc.image_height = image_wh;
    sc.timesteps = timesteps;
    sc.pixel_noise = noise;
    sc.seed = derive_seed(seed, "scene", static_cast<std::uint64_t>(i));
    Scene scene = generate_scene(sc);
    char name[32];
    std::snprintf(name, sizeof(name), "scene_%03d", i);
    save_scene(out_dir + "/" + name, scene);
    std::cout << name << ": T=" << scene.steps() << " views=" << scene.cameras.size() << "\n";
  }
  return 0;
}

int cmd_train_prior(const std::string& dataset_dir, const std::string& out_path, int epochs, int blocks,
                    int hidden, int history, double lr, int batch, double val_fraction,
                    std::uint64_t seed) {
  std::vector<TrainExample> examples;
  std::vector<std::string> scene_dirs;
  for (const auto& e : fs::directory_iterator(dataset_dir))
    if (e.is_directory() && fs::exists(e.path() / "scene.json")) scene_dirs.push_back(e.path().string());
  std::sort(scene_dirs.begin(), scene_dirs.end());
  if (scene_dirs.empty()) throw std::runtime_error("no scenes in " + dataset_dir);
  for (const auto& dir : scene_dirs) {
    Scene scene = load_scene(dir);
    auto ex = make_training_examples(scene.gt_positions, scene.rest, scene.trajectory.actions,
                                     scene.grasped_vertex, scene.trajectory.dt, history);
    for (auto& e : ex) examples.push_back(std::move(e));
  }
  GnsTrainConfig cfg;
  cfg.epochs = epochs;
  cfg.lr = lr;
  cfg.batch_size = batch;
  cfg.val_fraction = val_fraction;
  cfg.seed = seed;
  GnsTrainReport report;
  GnsParams params = gns_train(std::move(examples), history, blocks, hidden, cfg, &report);
  save_gns(out_path, params);

  std::string curve_path = fs::path(out_path).replace_extension(".curves.csv").string();
  CsvWriter csv(curve_path, {"epoch", "train_mse", "val_mse"});
  for (std::size_t e = 0; e < report.train_curve.size(); ++e)
    csv.row({std::to_string(e), fmt(report.train_curve[e]), fmt(report.val_curve[e])});
  std::cout << "val acceleration MSE " << fmt(report.val_accel_mse) << " vs zero baseline "
            << fmt(report.zero_baseline_accel_mse) << "\n";
  return 0;
}

int cmd_fit_appearance(const std::string& scene_dir, const std::string& out_path, int iters, int views,
                       std::uint64_t seed) {
  Scene scene = load_scene(scene_dir);
  AugmentedMesh mesh0 = scene.state(0);
  GaussianCloud init =
      attach_gaussians(mesh0, scene.config.gaussians_per_face, derive_seed(seed, "estimator_cloud"));
  FitSchedule sched;
  sched.iterations = iters;
  sched.warmup_no_reg = iters / 4;
  sched.anneal_iters = (3 * iters) / 4;
  std::vector<Image> obs0 = scene.observations[0];
  std::vector<CameraView> cams = scene.cameras;
  if (views > 0 && views < static_cast<int>(cams.size())) {
    obs0.resize(static_cast<std::size_t>(views));
    cams.resize(static_cast<std::size_t>(views));
  }
  FitResult r = fit_appearance(init, mesh0, obs0, cams, sched);
  save_gaussian_cloud(out_path, r.cloud);
  std::cout << "fit: loss " << fmt(r.initial_obs_loss) << " -> " << fmt(r.final_obs_loss) << ", "
            << r.cloud.size() << " gaussians\n";
  return 0;
}

int cmd_track(const TrackFlags& t) {
  Scene scene = load_scene(t.scene_dir);
  AugmentedMesh mesh0 = scene.state(0);
  UpdateConfig cfg = update_config_from(t);
  auto prior = make_prior(t, scene);
  GaussianCloud cloud = estimator_cloud(t, scene, mesh0);

  nlohmann::ordered_json jc{{"command", "track"},   {"scene", t.scene_dir},
                            {"out", t.out_dir},     {"mode", t.mode},
                            {"horizon", t.horizon}, {"epochs", cfg.epochs},
                            {"views", t.views},     {"prior", t.prior},
                            {"lr", t.lr},           {"w-obs", t.w_obs},
                            {"w-ssim", t.w_ssim},   {"w-iso", t.w_iso},
                            {"w-magn", t.w_magn},   {"stiffness-factor", t.stiffness_factor},
                            {"damping-factor", t.damping_factor},
                            {"cloud", t.cloud_path}, {"model", t.model_path},
                            {"fit-iters", t.fit_iters}, {"seed", t.seed}};
  write_resolved_config(t.out_dir, jc);

  TrackResult result = track(scene, *prior, cloud, mesh0, cfg);

  write_tracks_json(t.out_dir + "/tracks.json", result.refined);
  write_losses_csv(t.out_dir + "/losses.csv", result.losses);
  {
    CsvWriter csv(t.out_dir + "/metrics.csv", kMetricsColumns);
    std::string method = t.mode + "-" + t.prior;
    append_metrics_row(csv, t.scene_dir, method, refined_tracks(result.refined), gt_tracks(scene));
    append_metrics_row(csv, t.scene_dir, "prior-" + t.prior, refined_tracks(result.predicted),
                       gt_tracks(scene));
  }
  if (t.time_checkpoints > 0) {
    CsvWriter csv(t.out_dir + "/time_mte.csv", {"wall_seconds", "mte_mm"});
    for (const auto& [s, m] : result.time_mte_checkpoints) csv.row({fmt(s), fmt(m)});
  }
  if (t.dump_frames) {
    for (std::size_t s = 0; s < result.refined.size(); ++s)
      for (std::size_t k = 0; k < scene.cameras.size(); ++k) {
        char name[64];
        std::snprintf(name, sizeof(name), "/refined_view%02zu_t%04zu.ppm", k, s + 1);
        write_ppm(t.out_dir + name,
                  render_view(cloud, result.refined[s], mesh0, scene.cameras[k]).rgb);
      }
  }
  std::cout << "tracked " << result.refined.size() << " steps in " << fmt(result.wall_seconds) << " s\n";
  return 0;
}

int cmd_eval(const std::string& pred_path, const std::string& gt_dir, const std::string& out_dir) {
  Scene scene = load_scene(gt_dir);
  TrackSet pred = tracks_from_json(pred_path);
  write_resolved_config(out_dir, nlohmann::ordered_json{{"command", "eval"},
                                                        {"pred", pred_path},
                                                        {"gt", gt_dir},
                                                        {"out", out_dir}});
  CsvWriter csv(out_dir + "/metrics.csv", kMetricsColumns);
  append_metrics_row(csv, gt_dir, "tracks", pred, gt_tracks(scene));
  return 0;
}

int cmd_ablate(const std::string& scene_dir, const std::string& out_dir, int epochs, double lr,
               int fit_iters, std::uint64_t seed) {
  Scene scene = load_scene(scene_dir);
  AugmentedMesh mesh0 = scene.state(0);
  write_resolved_config(out_dir, nlohmann::ordered_json{{"command", "ablate"},
                                                        {"scene", scene_dir},
                                                        {"out", out_dir},
                                                        {"epochs", epochs},
                                                        {"lr", lr},
                                                        {"fit-iters", fit_iters},
                                                        {"seed", seed}});
  TrackFlags base;
  base.scene_dir = scene_dir;
  base.epochs = epochs;
  base.lr = lr;
  base.fit_iters = fit_iters;
  base.seed = seed;
  PerturbedSimPrior prior(scene.params, base.stiffness_factor, base.damping_factor);
  GaussianCloud cloud = estimator_cloud(base, scene, mesh0);
  TrackSet gt = gt_tracks(scene);

  CsvWriter csv(out_dir + "/ablation.csv", kMetricsColumns);
  auto run_cell = [&](const std::string& label, UpdateConfig cfg, bool no_prior) {
    TrackResult r;
    if (no_prior) {
      // refinement from the static initial state: no transition model at all
      Scene frozen = scene;
      ZeroAccelPrior zero;
      std::vector<Vec3> zero_actions(static_cast<std::size_t>(scene.steps()), Vec3::Zero());
      frozen.trajectory.actions = zero_actions;
      r = track(frozen, zero, cloud, mesh0, cfg);
    } else {
      r = track(scene, prior, cloud, mesh0, cfg);
    }
    append_metrics_row(csv, scene_dir, label, refined_tracks(r.refined), gt);
    return r;
  };

  UpdateConfig cfg = update_config_from(base);
  TrackResult full = run_cell("full-4views", cfg, false);
  append_metrics_row(csv, scene_dir, "a1-only-prior", refined_tracks(full.predicted), gt);
  run_cell("a2-no-prior", cfg, true);
  UpdateConfig noreg = cfg;
  noreg.weights.ssim = noreg.weights.iso = noreg.weights.magn = 0;
  run_cell("a3-no-lreg", noreg, false);
  UpdateConfig nores = cfg;
  nores.use_residual_field = false;
  run_cell("a4-no-residual", nores, false);
  for (int v = 1; v <= 3 && v < static_cast<int>(scene.cameras.size()); ++v) {
    UpdateConfig vc = cfg;
    vc.views = v;
    run_cell("a" + std::to_string(4 + v) + "-" + std::to_string(v) + "views", vc, false);
  }
  return 0;
}

int cmd_plan(const std::string& out_dir, const std::string& strategy, int seeds, int steps,
             int candidates, int horizon, double variance, int refine_epochs, double stiffness_factor,
             std::uint64_t seed) {
  write_resolved_config(out_dir, nlohmann::ordered_json{{"command", "plan"},
                                                        {"out", out_dir},
                                                        {"strategy", strategy},
                                                        {"seeds", seeds},
                                                        {"steps", steps},
                                                        {"candidates", candidates},
                                                        {"horizon", horizon},
                                                        {"variance", variance},
                                                        {"refine-epochs", refine_epochs},
                                                        {"stiffness-factor", stiffness_factor},
                                                        {"seed", seed}});
  std::vector<FoldStrategy> strategies;
  if (strategy == "all")
    strategies = {FoldStrategy::FIXED, FoldStrategy::MPC_OL, FoldStrategy::MPC_CS, FoldStrategy::MPC_ORACLE};
  else
    strategies = {fold_strategy_from_string(strategy)};

  CsvWriter report(out_dir + "/plan_report.csv",
                   {"seed", "strategy", "step", "predicted_cost", "action_x", "action_y", "action_z",
                    "refined_mte_mm", "prior_mte_mm"});
  CsvWriter summary(out_dir + "/plan_summary.csv", {"seed", "strategy", "final_mse"});

  ClothParams params;
  for (int s = 0; s < seeds; ++s) {
    std::uint64_t episode_seed = derive_seed(seed, "episode", static_cast<std::uint64_t>(s));
    FoldTask task = make_half_fold_task(0.2, 8, params, episode_seed);
    task.refine_config.epochs = refine_epochs;
    PerturbedSimPrior prior(params, stiffness_factor, stiffness_factor);
    for (FoldStrategy st : strategies) {
      PlanConfig pc;
      pc.n_candidates = candidates;
      pc.horizon = horizon;
      pc.control_variance = Vec3::Constant(variance);
      pc.total_steps = steps;
      pc.seed = episode_seed;
      FoldResult r = closed_loop_fold(task, prior, st, pc);
      for (const auto& rec : r.steps)
        report.row({std::to_string(s), to_string(st), std::to_string(rec.step), fmt(rec.predicted_cost),
                    fmt(rec.action.x()), fmt(rec.action.y()), fmt(rec.action.z()),
                    fmt(rec.refined_mte_mm), fmt(rec.prior_mte_mm)});
      summary.row({std::to_string(s), to_string(st), fmt(r.final_mse)});
      std::cout << "seed " << s << " " << to_string(st) << ": final MSE " << fmt(r.final_mse) << "\n";
    }
  }
  return 0;
}

int cmd_render_debug(const std::string& scene_dir, int t, const std::string& out_dir) {
  Scene scene = load_scene(scene_dir);
  if (t < 0 || t > scene.steps()) throw std::runtime_error("timestep out of range");
  write_resolved_config(out_dir, nlohmann::ordered_json{{"command", "render-debug"},
                                                        {"scene", scene_dir},
                                                        {"t", t},
                                                        {"out", out_dir}});
  AugmentedMesh state = scene.state(t);
  for (std::size_t k = 0; k < scene.cameras.size(); ++k) {
    RenderOutput out = render_view(scene.gt_cloud, state, scene.rest, scene.cameras[k]);
    char name[64];
    std::snprintf(name, sizeof(name), "/debug_view%02zu_t%04d.ppm", k, t);
    write_ppm(out_dir + name, out.rgb);
    if (k == 0) dump_gaussian_csv(out_dir + "/gaussians.csv", scene.gt_cloud, out);
  }
  return 0;
}

}  // namespace

int run_command(const std::vector<std::string>& args) {
  CLI::App app{"desk-scale cloth state estimation from multi-view RGB"};
  app.require_subcommand(1);
  app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);

  std::string config_path;

  // gen-dataset
  auto* gen = app.add_subcommand("gen-dataset", "generate synthetic scenes");
  std::string gen_out = "dataset", gen_template = "towel";
  int gen_scenes = 1, gen_views = 4, gen_wh = 128, gen_T = 16, gen_res = 8;
  double gen_noise = 0.0, gen_size = 0.2;
  std::uint64_t gen_seed = 0;
  gen->add_option("--out", gen_out);
  gen->add_option("--scenes", gen_scenes);
  gen->add_option("--template", gen_template);
  gen->add_option("--views", gen_views);
  gen->add_option("--image-wh", gen_wh);
  gen->add_option("--timesteps", gen_T);
  gen->add_option("--resolution", gen_res);
  gen->add_option("--noise", gen_noise);
  gen->add_option("--cloth-size", gen_size);
  gen->add_option("--seed", gen_seed);
  gen->add_option("--config", config_path);

  // train-prior
  auto* train = app.add_subcommand("train-prior", "train the learned transition model");
  std::string train_dataset, train_out = "model.json";
  int train_epochs = 100, train_blocks = 3, train_hidden = 32, train_history = 3, train_batch = 8;
  double train_lr = 1e-3, train_val = 0.15;
  std::uint64_t train_seed = 0;
  train->add_option("--dataset", train_dataset)->required();
  train->add_option("--out", train_out);
  train->add_option("--epochs", train_epochs);
  train->add_option("--blocks", train_blocks);
  train->add_option("--hidden", train_hidden);
  train->add_option("--history", train_history);
  train->add_option("--lr", train_lr);
  train->add_option("--batch", train_batch);
  train->add_option("--val-fraction", train_val);
  train->add_option("--seed", train_seed);
  train->add_option("--config", config_path);

  // fit-appearance
  auto* fit = app.add_subcommand("fit-appearance", "fit the Gaussian appearance at t=0");
  std::string fit_scene, fit_out = "cloud.json";
  int fit_iters = 500, fit_views = -1;
  std::uint64_t fit_seed = 0;
  fit->add_option("--scene", fit_scene)->required();
  fit->add_option("--out", fit_out);
  fit->add_option("--iters", fit_iters);
  fit->add_option("--views", fit_views);
  fit->add_option("--seed", fit_seed);
  fit->add_option("--config", config_path);

  // track
  auto* trk = app.add_subcommand("track", "run the prediction-update tracker on a scene");
  TrackFlags tf;
  trk->add_option("--scene", tf.scene_dir)->required();
  trk->add_option("--out", tf.out_dir)->required();
  trk->add_option("--mode", tf.mode)->check(CLI::IsMember({"rollout", "iterative"}));
  trk->add_option("--horizon", tf.horizon);
  trk->add_option("--epochs", tf.epochs);
  trk->add_option("--views", tf.views);
  trk->add_option("--lr", tf.lr);
  trk->add_option("--w-obs", tf.w_obs);
  trk->add_option("--w-ssim", tf.w_ssim);
  trk->add_option("--w-iso", tf.w_iso);
  trk->add_option("--w-magn", tf.w_magn);
  trk->add_option("--prior", tf.prior)->check(CLI::IsMember({"perturbed", "gns", "zero"}));
  trk->add_option("--model", tf.model_path);
  trk->add_option("--cloud", tf.cloud_path);
  trk->add_option("--fit-iters", tf.fit_iters);
  trk->add_option("--stiffness-factor", tf.stiffness_factor);
  trk->add_option("--damping-factor", tf.damping_factor);
  trk->add_option("--time-checkpoints", tf.time_checkpoints);
  trk->add_flag("--dump-frames", tf.dump_frames);
  trk->add_option("--seed", tf.seed);
  trk->add_option("--config", config_path);

  // eval
  auto* ev = app.add_subcommand("eval", "evaluate saved tracks against ground truth");
  std::string ev_pred, ev_gt, ev_out = "eval";
  ev->add_option("--pred", ev_pred)->required();
  ev->add_option("--gt", ev_gt)->required();
  ev->add_option("--out", ev_out);
  ev->add_option("--config", config_path);

  // ablate
  auto* ab = app.add_subcommand("ablate", "run the model-ablation grid on a scene");
  std::string ab_scene, ab_out = "ablation";
  int ab_epochs = 120, ab_fit = 400;
  double ab_lr = 1e-2;
  std::uint64_t ab_seed = 0;
  ab->add_option("--scene", ab_scene)->required();
  ab->add_option("--out", ab_out);
  ab->add_option("--epochs", ab_epochs);
  ab->add_option("--lr", ab_lr);
  ab->add_option("--fit-iters", ab_fit);
  ab->add_option("--seed", ab_seed);
  ab->add_option("--config", config_path);

  // plan
  auto* pl = app.add_subcommand("plan", "closed-loop half-fold manipulation");
  std::string pl_out = "plan", pl_strategy = "all";
  int pl_seeds = 10, pl_steps = 12, pl_cand = 32, pl_horizon = 4, pl_repochs = 60;
  double pl_var = 6e-5, pl_stiff = 0.5;
  std::uint64_t pl_seed = 0;
  pl->add_option("--out", pl_out);
  pl->add_option("--strategy", pl_strategy)
      ->check(CLI::IsMember({"all", "fixed", "mpc-ol", "mpc-cs", "mpc-oracle"}));
  pl->add_option("--seeds", pl_seeds);
  pl->add_option("--steps", pl_steps);
  pl->add_option("--candidates", pl_cand);
  pl->add_option("--horizon", pl_horizon);
  pl->add_option("--variance", pl_var);
  pl->add_option("--refine-epochs", pl_repochs);
  pl->add_option("--stiffness-factor", pl_stiff);
  pl->add_option("--seed", pl_seed);
  pl->add_option("--config", config_path);

  // render-debug
  auto* rd = app.add_subcommand("render-debug", "dump renders and per-Gaussian state");
  std::string rd_scene, rd_out = "debug";
  int rd_t = 0;
  rd->add_option("--scene", rd_scene)->required();
  rd->add_option("--t", rd_t);
  rd->add_option("--out", rd_out);
  rd->add_option("--config", config_path);

  std::vector<std::string> full_args;
  try {
    full_args = inject_config_args(app, args);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  std::vector<std::string> reversed(full_args.rbegin(), full_args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    CLI::App* sub = app.get_subcommands().front();
    if (sub == gen)
      return cmd_gen_dataset(gen_out, gen_scenes, gen_template, gen_views, gen_wh, gen_T, gen_res,
                             gen_noise, gen_size, gen_seed);
    if (sub == train)
      return cmd_train_prior(train_dataset, train_out, train_epochs, train_blocks, train_hidden,
                             train_history, train_lr, train_batch, train_val, train_seed);
    if (sub == fit) return cmd_fit_appearance(fit_scene, fit_out, fit_iters, fit_views, fit_seed);
    if (sub == trk) return cmd_track(tf);
    if (sub == ev) return cmd_eval(ev_pred, ev_gt, ev_out);
    if (sub == ab) return cmd_ablate(ab_scene, ab_out, ab_epochs, ab_lr, ab_fit, ab_seed);
    if (sub == pl)
      return cmd_plan(pl_out, pl_strategy, pl_seeds, pl_steps, pl_cand, pl_horizon, pl_var, pl_repochs,
                      pl_stiff, pl_seed);
    if (sub == rd) return cmd_render_debug(rd_scene, rd_t, rd_out);
    throw std::runtime_error("unhandled subcommand");
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace ct
