#include "ct/refine.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>

#include "ct/metrics.hpp"
#include "ct/parallel.hpp"
#include "ct/rng.hpp"

namespace ct {

Eigen::Matrix<double, 1, 12> encode_time(double t_hat) {
  Eigen::Matrix<double, 1, 12> e;
  for (int j = 0; j < 6; ++j) {
    double arg = std::pow(2.0, j) * M_PI * t_hat;
    e(2 * j) = std::sin(arg);
    e(2 * j + 1) = std::cos(arg);
  }
  return e;
}

ResidualField ResidualField::init(int n_vertices, int width, std::uint64_t seed) {
  std::mt19937_64 rng(splitmix64(seed));
  std::normal_distribution<double> dist(0.0, 1.0);
  ResidualField f;
  f.n_vertices = n_vertices;
  f.width = width;
  auto hidden_layer = [&](int in, int out) {
    Mat w(in, out);
    double s = std::sqrt(0.05 / in);  // keeps the initial residual under 1e-2 m
    for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = s * dist(rng);
    return w;
  };
  f.mlp.weights.push_back(hidden_layer(12, width));
  f.mlp.biases.push_back(Mat::Zero(1, width));
  f.mlp.weights.push_back(hidden_layer(width, width));
  f.mlp.biases.push_back(Mat::Zero(1, width));
  // output layer from N(0, 1e-4): the initial residual stays close to zero
  Mat w_out(width, 3 * n_vertices);
  for (Eigen::Index i = 0; i < w_out.size(); ++i) w_out.data()[i] = 0.01 * dist(rng);
  f.mlp.weights.push_back(w_out);
  f.mlp.biases.push_back(Mat::Zero(1, 3 * n_vertices));
  return f;
}

std::vector<Vec3> ResidualField::offsets(double t_hat) const {
  Mat x = encode_time(t_hat);
  for (std::size_t i = 0; i < mlp.weights.size(); ++i) {
    x = (x * mlp.weights[i] + mlp.biases[i]).eval();
    if (i + 1 < mlp.weights.size()) x = x.cwiseMax(0.0);
  }
  std::vector<Vec3> out(static_cast<std::size_t>(n_vertices));
  for (int i = 0; i < n_vertices; ++i)
    out[static_cast<std::size_t>(i)] = Vec3(x(0, 3 * i), x(0, 3 * i + 1), x(0, 3 * i + 2));
  return out;
}

std::vector<double> ResidualField::flatten() const {
  std::vector<double> flat;
  for (std::size_t i = 0; i < mlp.weights.size(); ++i) {
    flat.insert(flat.end(), mlp.weights[i].data(), mlp.weights[i].data() + mlp.weights[i].size());
    flat.insert(flat.end(), mlp.biases[i].data(), mlp.biases[i].data() + mlp.biases[i].size());
  }
  return flat;
}

void ResidualField::unflatten(const std::vector<double>& flat) {
  std::size_t off = 0;
  for (std::size_t i = 0; i < mlp.weights.size(); ++i) {
    std::copy_n(flat.begin() + static_cast<long>(off), mlp.weights[i].size(), mlp.weights[i].data());
    off += static_cast<std::size_t>(mlp.weights[i].size());
    std::copy_n(flat.begin() + static_cast<long>(off), mlp.biases[i].size(), mlp.biases[i].data());
    off += static_cast<std::size_t>(mlp.biases[i].size());
  }
  if (off != flat.size()) throw std::invalid_argument("field parameter size mismatch");
}

namespace {

struct FieldIds {
  std::vector<int> w, b;
};

FieldIds push_field(Tape& t, const ResidualField& f) {
  FieldIds ids;
  for (std::size_t i = 0; i < f.mlp.weights.size(); ++i) {
    ids.w.push_back(t.leaf(f.mlp.weights[i]));
    ids.b.push_back(t.leaf(f.mlp.biases[i]));
  }
  return ids;
}

int field_forward(Tape& t, const FieldIds& ids, double t_hat) {
  int x = t.leaf(encode_time(t_hat));
  for (std::size_t i = 0; i < ids.w.size(); ++i) {
    x = t.add_row_broadcast(t.matmul(x, ids.w[i]), ids.b[i]);
    if (i + 1 < ids.w.size()) x = t.relu(x);
  }
  return x;
}

std::vector<double> collect_field_grads(const Tape& t, const FieldIds& ids) {
  std::vector<double> flat;
  for (std::size_t i = 0; i < ids.w.size(); ++i) {
    const Mat& gw = t.grad(ids.w[i]);
    flat.insert(flat.end(), gw.data(), gw.data() + gw.size());
    const Mat& gb = t.grad(ids.b[i]);
    flat.insert(flat.end(), gb.data(), gb.data() + gb.size());
  }
  return flat;
}

int active_views(const UpdateConfig& config, std::size_t available) {
  int v = config.views < 0 ? static_cast<int>(available) : std::min<int>(config.views, static_cast<int>(available));
  if (v < 1) throw std::invalid_argument("need at least one view");
  return v;
}

// photometric + SSIM losses and their vertex gradients for one refined frame
void frame_obs_grads(const AugmentedMesh& refined, const std::vector<Image>& observations,
                     const GaussianCloud& cloud, const AugmentedMesh& rest_mesh,
                     const std::vector<CameraView>& cameras, const UpdateConfig& config, int n_views,
                     double total_px, double n_images, LossRecord& record, std::vector<Vec3>* grad) {
  for (int k = 0; k < n_views; ++k) {
    RenderOutput out = render_view(cloud, refined, rest_mesh, cameras[static_cast<std::size_t>(k)]);
    const Image& obs = observations[static_cast<std::size_t>(k)];
    record.obs += sum_sq_diff(out.rgb, obs) / total_px;
    bool use_ssim = config.weights.ssim > 0;
    if (use_ssim) record.ssim += (1.0 - ssim_mean(out.rgb, obs, config.ssim_window)) / n_images;
    if (!grad) continue;
    Image pg(out.rgb.width, out.rgb.height);
    add_mse_pixel_grad(out.rgb, obs, config.weights.obs / total_px, pg);
    if (use_ssim)
      add_ssim_pixel_grad(out.rgb, obs, config.ssim_window, -config.weights.ssim / n_images, pg);
    RenderGrads rg =
        render_backward(out, cloud, refined, rest_mesh, cameras[static_cast<std::size_t>(k)], pg);
    for (std::size_t i = 0; i < grad->size(); ++i) (*grad)[i] += rg.d_vertices[i];
  }
}

}  // namespace

LossValues compute_losses(std::span<const AugmentedMesh> meshes,
                          std::span<const std::vector<Image>> observations, const GaussianCloud& cloud,
                          const AugmentedMesh& rest_mesh, const std::vector<CameraView>& cameras,
                          const UpdateConfig& config) {
  if (meshes.size() != observations.size())
    throw std::invalid_argument("meshes/observations length mismatch");
  double total_px = 0;
  double n_images = 0;
  for (const auto& views : observations)
    for (const auto& img : views) {
      total_px += static_cast<double>(img.px.size());
      n_images += 1;
    }

  LossValues v;
  for (std::size_t s = 0; s < meshes.size(); ++s) {
    const auto& views = observations[s];
    if (views.empty()) continue;
    if (views.size() > cameras.size()) throw std::invalid_argument("more observations than cameras");
    LossRecord rec;
    frame_obs_grads(meshes[s], views, cloud, rest_mesh, cameras, config, static_cast<int>(views.size()),
                    total_px, n_images, rec, nullptr);
    v.obs += rec.obs;
    v.ssim += rec.ssim;
  }

  std::vector<std::vector<Vec3>> frames;
  frames.reserve(meshes.size());
  for (const auto& m : meshes) frames.push_back(m.vertices());
  if (!frames.empty()) {
    v.iso = iso_loss(meshes[0].topology(), frames);
    v.magn = magn_loss(frames);
  }
  return v;
}

RefineResult refine_states(const RefineWindow& window, const GaussianCloud& cloud,
                           const AugmentedMesh& rest_mesh, const std::vector<CameraView>& cameras,
                           const UpdateConfig& config, ResidualField* field,
                           const RefineObserver* observer) {
  const std::size_t H = window.predicted.size();
  if (H == 0) throw std::invalid_argument("empty refinement window");
  if (window.observations.size() != H || window.t_hats.size() != H)
    throw std::invalid_argument("window arrays misaligned");
  if (config.use_residual_field && !field) throw std::invalid_argument("field required");
  const std::size_t n = window.predicted[0].vertex_count();
  const int n_views = active_views(config, cameras.size());

  double total_px = 0, n_images = 0;
  for (const auto& views : window.observations) {
    if (static_cast<int>(views.size()) < n_views) throw std::invalid_argument("missing observations");
    for (int k = 0; k < n_views; ++k) {
      total_px += static_cast<double>(views[static_cast<std::size_t>(k)].px.size());
      n_images += 1;
    }
  }

  // parameters: either the shared residual field or free per-frame offsets
  std::vector<double> params;
  if (config.use_residual_field)
    params = field->flatten();
  else
    params.assign(3 * n * H, 0.0);

  auto offsets_of = [&](const std::vector<double>& p, std::size_t s) {
    std::vector<Vec3> out(n);
    if (config.use_residual_field) {
      ResidualField f = *field;
      f.unflatten(p);
      out = f.offsets(window.t_hats[s]);
    } else {
      for (std::size_t i = 0; i < n; ++i)
        out[i] = Vec3(p[3 * (s * n + i)], p[3 * (s * n + i) + 1], p[3 * (s * n + i) + 2]);
    }
    return out;
  };

  auto build_refined = [&](const std::vector<double>& p) {
    std::vector<AugmentedMesh> refined;
    refined.reserve(H);
    std::vector<Vec3> prev =
        window.anchor ? window.anchor->vertices() : window.predicted[0].vertices();
    for (std::size_t s = 0; s < H; ++s) {
      std::vector<Vec3> x = window.predicted[s].vertices();
      std::vector<Vec3> off = offsets_of(p, s);
      for (std::size_t i = 0; i < n; ++i) x[i] += off[i];
      std::vector<Vec3> v(n);
      if (window.anchor || s > 0) {
        for (std::size_t i = 0; i < n; ++i) v[i] = (x[i] - prev[i]) / window.dt;
      } else {
        v = window.predicted[s].velocities();
      }
      prev = x;
      refined.push_back(window.predicted[s].with_state(std::move(x), std::move(v)));
    }
    return refined;
  };

  Adam adam(config.lr, 0.8, 0.99);
  RefineResult result;
  double best_total = std::numeric_limits<double>::infinity();
  std::vector<double> best_params = params;

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    // forward: offsets per frame (through the field when enabled)
    Tape tape;
    FieldIds ids;
    std::vector<int> offset_nodes(H, -1);
    std::vector<std::vector<Vec3>> offsets(H);
    if (config.use_residual_field) {
      field->unflatten(params);
      ids = push_field(tape, *field);
      for (std::size_t s = 0; s < H; ++s) {
        offset_nodes[s] = field_forward(tape, ids, window.t_hats[s]);
        const Mat& o = tape.value(offset_nodes[s]);
        offsets[s].resize(n);
        for (std::size_t i = 0; i < n; ++i)
          offsets[s][i] = Vec3(o(0, static_cast<Eigen::Index>(3 * i)), o(0, static_cast<Eigen::Index>(3 * i + 1)),
                               o(0, static_cast<Eigen::Index>(3 * i + 2)));
      }
    } else {
      for (std::size_t s = 0; s < H; ++s) offsets[s] = offsets_of(params, s);
    }

    // refined frames and the temporal chain (anchor first when present)
    std::vector<std::vector<Vec3>> chain;
    chain.reserve(H + 1);
    if (window.anchor) chain.push_back(window.anchor->vertices());
    std::vector<AugmentedMesh> refined(H, window.predicted[0]);
    for (std::size_t s = 0; s < H; ++s) {
      std::vector<Vec3> x = window.predicted[s].vertices();
      for (std::size_t i = 0; i < n; ++i) x[i] += offsets[s][i];
      chain.push_back(x);
      refined[s] = window.predicted[s].with_state(std::move(x), window.predicted[s].velocities());
    }

    LossRecord rec;
    std::vector<std::vector<Vec3>> frame_grads(H, std::vector<Vec3>(n, Vec3::Zero()));
    for (std::size_t s = 0; s < H; ++s)
      frame_obs_grads(refined[s], window.observations[s], cloud, rest_mesh, cameras, config, n_views,
                      total_px, n_images, rec, &frame_grads[s]);

    const MeshTopology& topo = window.predicted[0].topology();
    rec.iso = iso_loss(topo, chain);
    rec.magn = magn_loss(chain);
    rec.total = config.weights.obs * rec.obs + config.weights.ssim * rec.ssim +
                config.weights.iso * rec.iso + config.weights.magn * rec.magn;
    if (!std::isfinite(rec.total))
      throw std::runtime_error("non-finite refinement loss at epoch " + std::to_string(epoch));
    result.curve.push_back(rec);
    if (epoch == 0) result.initial_total = rec.total;
    if (rec.total < best_total) {
      best_total = rec.total;
      best_params = params;
    }

    // temporal-loss gradients over the chain, then drop the anchor's slot
    std::vector<std::vector<Vec3>> chain_grads(chain.size(), std::vector<Vec3>(n, Vec3::Zero()));
    if (config.weights.iso > 0) add_iso_grad(topo, chain, config.weights.iso, chain_grads);
    if (config.weights.magn > 0) add_magn_grad(chain, config.weights.magn, chain_grads);
    std::size_t chain_off = window.anchor ? 1 : 0;
    for (std::size_t s = 0; s < H; ++s)
      for (std::size_t i = 0; i < n; ++i) frame_grads[s][i] += chain_grads[s + chain_off][i];

    // pull vertex gradients onto the parameters
    std::vector<double> grad;
    if (config.use_residual_field) {
      for (std::size_t s = 0; s < H; ++s) {
        Mat seed(1, static_cast<Eigen::Index>(3 * n));
        for (std::size_t i = 0; i < n; ++i)
          for (int c = 0; c < 3; ++c) seed(0, static_cast<Eigen::Index>(3 * i + static_cast<std::size_t>(c))) =
              frame_grads[s][i](c);
        tape.inject_grad(offset_nodes[s], seed);
      }
      tape.backward_injected();
      grad = collect_field_grads(tape, ids);
    } else {
      grad.assign(params.size(), 0.0);
      for (std::size_t s = 0; s < H; ++s)
        for (std::size_t i = 0; i < n; ++i)
          for (int c = 0; c < 3; ++c) grad[3 * (s * n + i) + static_cast<std::size_t>(c)] = frame_grads[s][i](c);
    }
    // short warmup keeps Adam's first normalized steps from overshooting,
    // cosine decay to a tenth of the base rate settles the late epochs
    int warmup = std::max(3, config.epochs / 20);
    double mult;
    if (epoch < warmup) {
      mult = static_cast<double>(epoch + 1) / warmup;
    } else {
      double u = static_cast<double>(epoch - warmup) / std::max(1, config.epochs - 1 - warmup);
      mult = 0.1 + 0.45 * (1.0 + std::cos(M_PI * u));
    }
    adam.set_lr(config.lr * mult);
    adam.step(params, grad);

    if (observer && config.checkpoint_interval > 0 && (epoch + 1) % config.checkpoint_interval == 0)
      (*observer)(epoch, build_refined(best_params));
  }

  params = best_params;
  if (config.use_residual_field) field->unflatten(params);
  result.refined = build_refined(params);
  result.final_total = best_total;
  return result;
}

AugmentedMesh refine_single_state(const AugmentedMesh& mesh, const GaussianCloud& cloud,
                                  const std::vector<Image>& observations,
                                  const std::vector<CameraView>& cameras, const UpdateConfig& config) {
  RefineWindow window;
  window.predicted = {mesh};
  window.observations = {observations};
  window.t_hats = {0.0};
  window.dt = 1.0;
  UpdateConfig cfg = config;
  cfg.use_residual_field = false;  // a single state needs no time conditioning
  RefineResult r = refine_states(window, cloud, mesh, cameras, cfg, nullptr);
  return r.refined[0];
}

TrackResult track(const Scene& scene, const TransitionPrior& prior, const GaussianCloud& cloud,
                  const AugmentedMesh& estimator_rest, const UpdateConfig& config) {
  const int T = scene.steps();
  if (T < 1) throw std::invalid_argument("scene has no steps");
  const double dt = scene.trajectory.dt;
  const int grasped = scene.grasped_vertex;
  const int n_views = active_views(config, scene.cameras.size());

  auto obs_subset = [&](int t) {
    std::vector<Image> views(scene.observations[static_cast<std::size_t>(t)].begin(),
                             scene.observations[static_cast<std::size_t>(t)].begin() + n_views);
    return views;
  };

  TrackResult result;
  double t_start = wall_seconds();

  if (config.mode == UpdateMode::ROLLOUT) {
    std::vector<AugmentedMesh> history = {estimator_rest};
    result.predicted = rollout(prior, history, scene.trajectory.actions, grasped, dt);

    RefineWindow window;
    window.anchor = estimator_rest;
    window.predicted = result.predicted;
    window.dt = dt;
    for (int t = 1; t <= T; ++t) {
      window.observations.push_back(obs_subset(t));
      window.t_hats.push_back(static_cast<double>(t) / T);
    }
    ResidualField field = ResidualField::init(static_cast<int>(estimator_rest.vertex_count()),
                                              config.field_width, derive_seed(config.seed, "field"));

    RefineResult r;
    if (config.checkpoint_interval > 0) {
      TrackSet gt;
      for (int t = 1; t <= T; ++t) gt.frames.push_back(scene.gt_positions[static_cast<std::size_t>(t)]);
      RefineObserver observer = [&](int, const std::vector<AugmentedMesh>& best) {
        TrackSet cur;
        for (const auto& m : best) cur.frames.push_back(m.vertices());
        result.time_mte_checkpoints.emplace_back(wall_seconds() - t_start, mte_mm(cur, gt));
      };
      r = refine_states(window, cloud, estimator_rest, scene.cameras, config, &field, &observer);
    } else {
      r = refine_states(window, cloud, estimator_rest, scene.cameras, config, &field);
    }
    result.refined = r.refined;
    result.losses = r.curve;
    result.window_seconds.push_back(wall_seconds() - t_start);
  } else {
    const int H = std::max(1, config.horizon);
    std::vector<AugmentedMesh> est = {estimator_rest};
    int window_index = 0;
    for (int t0 = 0; t0 < T; t0 += H) {
      double w_start = wall_seconds();
      int h_cur = std::min(H, T - t0);
      std::span<const AugmentedMesh> hist(est);
      std::size_t keep = static_cast<std::size_t>(std::max(1, prior.history_length()));
      if (hist.size() > keep) hist = hist.subspan(hist.size() - keep);
      std::vector<AugmentedMesh> hist_vec(hist.begin(), hist.end());
      std::span<const Vec3> actions(scene.trajectory.actions);
      std::vector<AugmentedMesh> predicted =
          rollout(prior, hist_vec, actions.subspan(static_cast<std::size_t>(t0), static_cast<std::size_t>(h_cur)),
                  grasped, dt);
      for (const auto& m : predicted) result.predicted.push_back(m);

      RefineWindow window;
      window.anchor = est.back();
      window.predicted = predicted;
      window.dt = dt;
      for (int t = t0 + 1; t <= t0 + h_cur; ++t) {
        window.observations.push_back(obs_subset(t));
        window.t_hats.push_back(static_cast<double>(t) / T);
      }
      ResidualField field =
          ResidualField::init(static_cast<int>(estimator_rest.vertex_count()), config.field_width,
                              derive_seed(config.seed, "field", static_cast<std::uint64_t>(window_index)));
      RefineResult r = refine_states(window, cloud, estimator_rest, scene.cameras, config, &field);
      for (const auto& c : r.curve) result.losses.push_back(c);
      for (auto& m : r.refined) est.push_back(std::move(m));
      result.window_seconds.push_back(wall_seconds() - w_start);
      ++window_index;
    }
    result.refined.assign(est.begin() + 1, est.end());
  }

  result.wall_seconds = wall_seconds() - t_start;
  return result;
}

}  // namespace ct
