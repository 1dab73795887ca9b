#include "ct/gns.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <stdexcept>

#include "ct/parallel.hpp"
#include "ct/rng.hpp"
#include "json.hpp"

namespace ct {

namespace {

// history index map with repeat-first padding
std::vector<std::size_t> padded_indices(std::size_t available, int m) {
  std::vector<std::size_t> idx(static_cast<std::size_t>(m) + 1);
  for (int k = 0; k <= m; ++k) {
    long long j = static_cast<long long>(available) - 1 - m + k;
    idx[static_cast<std::size_t>(k)] = static_cast<std::size_t>(std::max(0LL, j));
  }
  return idx;
}

void condition_on_action(GraphFeatures& f, int grasped_vertex, const Vec3& action, int m) {
  for (int c = 0; c < 3; ++c) f.node_features(grasped_vertex, 3 * (m - 1) + c) = action(c);
}

}  // namespace

GraphFeatures build_graph_features(std::span<const AugmentedMesh> history, int grasped_vertex,
                                   double dt, int m) {
  if (history.empty()) throw std::invalid_argument("empty history");
  const AugmentedMesh& latest = history.back();
  const std::size_t n = latest.vertex_count();
  for (const auto& h : history)
    if (h.vertex_count() != n) throw std::invalid_argument("vertex count mismatch across history");
  if (grasped_vertex < 0 || grasped_vertex >= static_cast<int>(n))
    throw std::out_of_range("grasped vertex out of range");

  auto idx = padded_indices(history.size(), m);
  GraphFeatures f;
  f.node_features = Mat::Zero(static_cast<Eigen::Index>(n), 3 * m + 1);
  for (int j = 1; j <= m; ++j) {
    const auto& xa = history[idx[static_cast<std::size_t>(j - 1)]].vertices();
    const auto& xb = history[idx[static_cast<std::size_t>(j)]].vertices();
    for (std::size_t i = 0; i < n; ++i) {
      Vec3 v = (xb[i] - xa[i]) / dt;
      for (int c = 0; c < 3; ++c) f.node_features(static_cast<Eigen::Index>(i), 3 * (j - 1) + c) = v(c);
    }
  }
  f.node_features(grasped_vertex, 3 * m) = 1.0;

  const auto& edges = latest.topology().edges;
  const auto& x = latest.vertices();
  f.edge_features = Mat::Zero(static_cast<Eigen::Index>(2 * edges.size()), 4);
  f.edge_src.reserve(2 * edges.size());
  f.edge_dst.reserve(2 * edges.size());
  for (std::size_t e = 0; e < edges.size(); ++e) {
    int a = edges[e][0], b = edges[e][1];
    Vec3 d = x[static_cast<std::size_t>(a)] - x[static_cast<std::size_t>(b)];
    auto row0 = static_cast<Eigen::Index>(2 * e), row1 = row0 + 1;
    for (int c = 0; c < 3; ++c) {
      f.edge_features(row0, c) = d(c);
      f.edge_features(row1, c) = -d(c);
    }
    f.edge_features(row0, 3) = d.norm();
    f.edge_features(row1, 3) = d.norm();
    f.edge_src.push_back(a);
    f.edge_dst.push_back(b);
    f.edge_src.push_back(b);
    f.edge_dst.push_back(a);
  }
  return f;
}

// ---------------------------------------------------------------------------
// parameters
// ---------------------------------------------------------------------------

namespace {

MlpParams make_mlp(int in, int hidden, int out, std::mt19937_64& rng, bool zero_last) {
  std::normal_distribution<double> dist(0.0, 1.0);
  auto he = [&](int r, int c) {
    Mat w(r, c);
    double s = std::sqrt(2.0 / r);
    for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = s * dist(rng);
    return w;
  };
  MlpParams p;
  p.weights.push_back(he(in, hidden));
  p.biases.push_back(Mat::Zero(1, hidden));
  p.weights.push_back(zero_last ? Mat::Zero(hidden, out) : he(hidden, out));
  p.biases.push_back(Mat::Zero(1, out));
  return p;
}

template <typename Fn>
void for_each_mlp(GnsParams& p, Fn&& fn) {
  fn(p.node_encoder);
  fn(p.edge_encoder);
  for (auto& m : p.edge_updates) fn(m);
  for (auto& m : p.node_updates) fn(m);
  fn(p.decoder);
}

template <typename Fn>
void for_each_mlp(const GnsParams& p, Fn&& fn) {
  fn(p.node_encoder);
  fn(p.edge_encoder);
  for (const auto& m : p.edge_updates) fn(m);
  for (const auto& m : p.node_updates) fn(m);
  fn(p.decoder);
}

}  // namespace

std::size_t GnsParams::parameter_count() const {
  std::size_t n = 0;
  for_each_mlp(*this, [&](const MlpParams& m) {
    for (std::size_t i = 0; i < m.weights.size(); ++i)
      n += static_cast<std::size_t>(m.weights[i].size() + m.biases[i].size());
  });
  return n;
}

std::vector<double> GnsParams::flatten() const {
  std::vector<double> flat;
  flat.reserve(parameter_count());
  for_each_mlp(*this, [&](const MlpParams& m) {
    for (std::size_t i = 0; i < m.weights.size(); ++i) {
      flat.insert(flat.end(), m.weights[i].data(), m.weights[i].data() + m.weights[i].size());
      flat.insert(flat.end(), m.biases[i].data(), m.biases[i].data() + m.biases[i].size());
    }
  });
  return flat;
}

void GnsParams::unflatten(const std::vector<double>& flat) {
  if (flat.size() != parameter_count()) throw std::invalid_argument("parameter vector size mismatch");
  std::size_t off = 0;
  for_each_mlp(*this, [&](MlpParams& m) {
    for (std::size_t i = 0; i < m.weights.size(); ++i) {
      std::copy_n(flat.begin() + static_cast<long>(off), m.weights[i].size(), m.weights[i].data());
      off += static_cast<std::size_t>(m.weights[i].size());
      std::copy_n(flat.begin() + static_cast<long>(off), m.biases[i].size(), m.biases[i].data());
      off += static_cast<std::size_t>(m.biases[i].size());
    }
  });
}

GnsParams init_gns_params(int history, int blocks, int hidden, std::uint64_t seed) {
  std::mt19937_64 rng(splitmix64(seed));
  GnsParams p;
  p.history = history;
  p.blocks = blocks;
  p.hidden = hidden;
  int node_in = 3 * history + 1;
  p.node_encoder = make_mlp(node_in, hidden, hidden, rng, false);
  p.edge_encoder = make_mlp(4, hidden, hidden, rng, false);
  for (int b = 0; b < blocks; ++b) {
    p.edge_updates.push_back(make_mlp(3 * hidden, hidden, hidden, rng, false));
    p.node_updates.push_back(make_mlp(2 * hidden, hidden, hidden, rng, false));
  }
  // zero decoder output: the untrained model predicts zero acceleration
  p.decoder = make_mlp(hidden, hidden, 3, rng, true);
  p.node_mean = Eigen::VectorXd::Zero(node_in);
  p.node_std = Eigen::VectorXd::Ones(node_in);
  p.edge_mean = Eigen::VectorXd::Zero(4);
  p.edge_std = Eigen::VectorXd::Ones(4);
  p.target_mean = Eigen::VectorXd::Zero(3);
  p.target_std = Eigen::VectorXd::Ones(3);
  return p;
}

void save_gns(const std::string& path, const GnsParams& p) {
  nlohmann::ordered_json j;
  j["history"] = p.history;
  j["blocks"] = p.blocks;
  j["hidden"] = p.hidden;
  auto dump_vec = [&](const char* key, const Eigen::VectorXd& v) {
    auto& a = j[key] = nlohmann::ordered_json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v(i));
  };
  dump_vec("node_mean", p.node_mean);
  dump_vec("node_std", p.node_std);
  dump_vec("edge_mean", p.edge_mean);
  dump_vec("edge_std", p.edge_std);
  dump_vec("target_mean", p.target_mean);
  dump_vec("target_std", p.target_std);
  auto flat = p.flatten();
  j["parameter_count"] = flat.size();
  auto& w = j["weights"] = nlohmann::ordered_json::array();
  for (double x : flat) w.push_back(x);
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot open for writing: " + path);
  f << j.dump() << "\n";
}

GnsParams load_gns(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open: " + path);
  auto j = nlohmann::json::parse(f);
  GnsParams p = init_gns_params(j.at("history").get<int>(), j.at("blocks").get<int>(),
                                j.at("hidden").get<int>(), 0);
  auto load_vec = [&](const char* key, Eigen::VectorXd& v) {
    const auto& a = j.at(key);
    if (a.size() != static_cast<std::size_t>(v.size()))
      throw std::invalid_argument(std::string("bad checkpoint vector size for ") + key);
    for (std::size_t i = 0; i < a.size(); ++i) v(static_cast<Eigen::Index>(i)) = a[i].get<double>();
  };
  load_vec("node_mean", p.node_mean);
  load_vec("node_std", p.node_std);
  load_vec("edge_mean", p.edge_mean);
  load_vec("edge_std", p.edge_std);
  load_vec("target_mean", p.target_mean);
  load_vec("target_std", p.target_std);
  std::vector<double> flat;
  for (const auto& x : j.at("weights")) flat.push_back(x.get<double>());
  if (flat.size() != j.at("parameter_count").get<std::size_t>())
    throw std::invalid_argument("checkpoint weight count mismatch");
  p.unflatten(flat);
  return p;
}

// ---------------------------------------------------------------------------
// forward pass
// ---------------------------------------------------------------------------

namespace {

struct MlpIds {
  std::vector<int> w, b;
};

struct GnsIds {
  MlpIds node_enc, edge_enc, dec;
  std::vector<MlpIds> eupd, nupd;
};

MlpIds push_mlp(Tape& t, const MlpParams& p) {
  MlpIds ids;
  for (std::size_t i = 0; i < p.weights.size(); ++i) {
    ids.w.push_back(t.leaf(p.weights[i]));
    ids.b.push_back(t.leaf(p.biases[i]));
  }
  return ids;
}

int mlp_forward(Tape& t, const MlpIds& ids, int x) {
  for (std::size_t i = 0; i < ids.w.size(); ++i) {
    x = t.add_row_broadcast(t.matmul(x, ids.w[i]), ids.b[i]);
    if (i + 1 < ids.w.size()) x = t.relu(x);
  }
  return x;
}

GnsIds push_gns(Tape& t, const GnsParams& p) {
  GnsIds ids;
  ids.node_enc = push_mlp(t, p.node_encoder);
  ids.edge_enc = push_mlp(t, p.edge_encoder);
  for (const auto& m : p.edge_updates) ids.eupd.push_back(push_mlp(t, m));
  for (const auto& m : p.node_updates) ids.nupd.push_back(push_mlp(t, m));
  ids.dec = push_mlp(t, p.decoder);
  return ids;
}

// gradient extraction in flatten() order
std::vector<double> collect_grads(const Tape& t, const GnsIds& ids) {
  std::vector<double> flat;
  auto grab = [&](const MlpIds& m) {
    for (std::size_t i = 0; i < m.w.size(); ++i) {
      const Mat& gw = t.grad(m.w[i]);
      flat.insert(flat.end(), gw.data(), gw.data() + gw.size());
      const Mat& gb = t.grad(m.b[i]);
      flat.insert(flat.end(), gb.data(), gb.data() + gb.size());
    }
  };
  grab(ids.node_enc);
  grab(ids.edge_enc);
  for (const auto& m : ids.eupd) grab(m);
  for (const auto& m : ids.nupd) grab(m);
  grab(ids.dec);
  return flat;
}

Mat normalize_rows(const Mat& x, const Eigen::VectorXd& mean, const Eigen::VectorXd& std) {
  Mat out = x;
  for (Eigen::Index c = 0; c < x.cols(); ++c)
    out.col(c) = (x.col(c).array() - mean(c)) / std(c);
  return out;
}

// normalized per-node accelerations; returns the output node id
int gns_forward(Tape& t, const GnsIds& ids, const GnsParams& p, const GraphFeatures& f) {
  int nf = t.leaf(normalize_rows(f.node_features, p.node_mean, p.node_std));
  int ef = t.leaf(normalize_rows(f.edge_features, p.edge_mean, p.edge_std));
  int h = mlp_forward(t, ids.node_enc, nf);
  int g = mlp_forward(t, ids.edge_enc, ef);
  int n_rows = static_cast<int>(f.node_features.rows());
  for (int b = 0; b < p.blocks; ++b) {
    int hs = t.gather_rows(h, f.edge_src);
    int hd = t.gather_rows(h, f.edge_dst);
    int upd = mlp_forward(t, ids.eupd[static_cast<std::size_t>(b)], t.concat_cols({g, hs, hd}));
    g = t.add(g, upd);
    int msg = t.scatter_sum_rows(g, f.edge_dst, n_rows);
    int nupd = mlp_forward(t, ids.nupd[static_cast<std::size_t>(b)], t.concat_cols({h, msg}));
    h = t.add(h, nupd);
  }
  return mlp_forward(t, ids.dec, h);
}

Mat denormalize_rows(const Mat& x, const Eigen::VectorXd& mean, const Eigen::VectorXd& std) {
  Mat out = x;
  for (Eigen::Index c = 0; c < x.cols(); ++c) out.col(c) = x.col(c).array() * std(c) + mean(c);
  return out;
}

}  // namespace

AugmentedMesh gns_predict(const GnsParams& params, std::span<const AugmentedMesh> history,
                          const Vec3& action, int grasped_vertex, double dt) {
  if (!action.allFinite()) throw std::invalid_argument("non-finite action");
  GraphFeatures f = build_graph_features(history, grasped_vertex, dt, params.history);
  condition_on_action(f, grasped_vertex, action, params.history);

  Tape t;
  GnsIds ids = push_gns(t, params);
  int out = gns_forward(t, ids, params, f);
  Mat accel = denormalize_rows(t.value(out), params.target_mean, params.target_std);
  if (!accel.allFinite()) throw std::runtime_error("non-finite network output");

  const AugmentedMesh& latest = history.back();
  const std::size_t n = latest.vertex_count();
  std::vector<Vec3> x(n), v(n);
  for (std::size_t i = 0; i < n; ++i) {
    Vec3 vel(f.node_features(static_cast<Eigen::Index>(i), 3 * (params.history - 1)),
             f.node_features(static_cast<Eigen::Index>(i), 3 * (params.history - 1) + 1),
             f.node_features(static_cast<Eigen::Index>(i), 3 * (params.history - 1) + 2));
    Vec3 a(accel(static_cast<Eigen::Index>(i), 0), accel(static_cast<Eigen::Index>(i), 1),
           accel(static_cast<Eigen::Index>(i), 2));
    v[i] = vel + a * dt;
    x[i] = latest.vertices()[i] + v[i] * dt;
  }
  auto g = static_cast<std::size_t>(grasped_vertex);
  v[g] = action;  // rigid attachment
  x[g] = latest.vertices()[g] + action * dt;
  return latest.with_state(std::move(x), std::move(v));
}

// ---------------------------------------------------------------------------
// training
// ---------------------------------------------------------------------------

GnsParams gns_train(std::vector<TrainExample> dataset, int history, int blocks, int hidden,
                    const GnsTrainConfig& config, GnsTrainReport* report) {
  if (dataset.empty()) throw std::invalid_argument("empty training set");
  std::mt19937_64 rng(derive_seed(config.seed, "gns_train"));

  std::vector<std::size_t> order(dataset.size());
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  std::size_t n_val = std::min(dataset.size() - 1,
                               static_cast<std::size_t>(std::round(config.val_fraction * dataset.size())));
  std::vector<std::size_t> val_idx(order.begin(), order.begin() + static_cast<long>(n_val));
  std::vector<std::size_t> train_idx(order.begin() + static_cast<long>(n_val), order.end());

  GnsParams params = init_gns_params(history, blocks, hidden, derive_seed(config.seed, "gns_init"));

  // normalization statistics from the training split
  auto fit_stats = [&](auto extract, Eigen::VectorXd& mean, Eigen::VectorXd& std) {
    double count = 0;
    mean.setZero();
    for (std::size_t i : train_idx) {
      const Mat& m = extract(dataset[i]);
      for (Eigen::Index r = 0; r < m.rows(); ++r) mean += m.row(r).transpose();
      count += static_cast<double>(m.rows());
    }
    mean /= count;
    std.setZero();
    for (std::size_t i : train_idx) {
      const Mat& m = extract(dataset[i]);
      for (Eigen::Index r = 0; r < m.rows(); ++r)
        std += (m.row(r).transpose() - mean).array().square().matrix();
    }
    std = (std / count).array().sqrt().max(1e-8).matrix();
  };
  fit_stats([](const TrainExample& e) -> const Mat& { return e.features.node_features; }, params.node_mean,
            params.node_std);
  fit_stats([](const TrainExample& e) -> const Mat& { return e.features.edge_features; }, params.edge_mean,
            params.edge_std);
  fit_stats([](const TrainExample& e) -> const Mat& { return e.target_accel; }, params.target_mean,
            params.target_std);
  // isotropic target scale: the training objective is then proportional to
  // the raw acceleration MSE, and the zero-initialized decoder starts exactly
  // at the zero-acceleration baseline
  double pooled = std::sqrt(params.target_std.array().square().mean());
  params.target_std.setConstant(pooled);
  // the grasped flag passes through unnormalized
  params.node_mean(3 * history) = 0.0;
  params.node_std(3 * history) = 1.0;

  auto example_loss_grad = [&](const TrainExample& ex, std::vector<double>* grad_out,
                               std::uint64_t noise_seed) {
    Tape t;
    GnsIds ids = push_gns(t, params);
    int out;
    if (noise_seed != 0 && config.feature_noise > 0) {
      GraphFeatures noised = ex.features;
      std::mt19937_64 nrng(noise_seed);
      std::normal_distribution<double> nd(0.0, 1.0);
      for (Eigen::Index r = 0; r < noised.node_features.rows(); ++r) {
        if (r == ex.grasped_vertex) continue;  // the gripper state is known exactly
        for (int c = 0; c < 3 * history; ++c)
          noised.node_features(r, c) += config.feature_noise * params.node_std(c) * nd(nrng);
      }
      out = gns_forward(t, ids, params, noised);
    } else {
      out = gns_forward(t, ids, params, ex.features);
    }
    Mat target = normalize_rows(ex.target_accel, params.target_mean, params.target_std);
    std::vector<std::uint8_t> mask(static_cast<std::size_t>(target.rows()), 1);
    mask[static_cast<std::size_t>(ex.grasped_vertex)] = 0;  // its output is overridden
    int loss = t.masked_mse(out, target, mask);
    double value = t.value(loss)(0, 0);
    if (grad_out) {
      t.backward(loss);
      *grad_out = collect_grads(t, ids);
    }
    return value;
  };

  std::vector<double> flat = params.flatten();
  Adam adam(config.lr);
  const std::size_t n_chunks = 8;

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    std::shuffle(train_idx.begin(), train_idx.end(), rng);
    double epoch_loss = 0;
    std::size_t batches = 0;
    for (std::size_t b0 = 0; b0 < train_idx.size(); b0 += static_cast<std::size_t>(config.batch_size)) {
      std::size_t b1 = std::min(train_idx.size(), b0 + static_cast<std::size_t>(config.batch_size));
      std::vector<std::vector<double>> chunk_grads(n_chunks);
      std::vector<double> chunk_loss(n_chunks, 0.0);
      chunked_for(b1 - b0, n_chunks, true, [&](std::size_t c, std::size_t lo, std::size_t hi) {
        std::vector<double> g;
        for (std::size_t k = lo; k < hi; ++k) {
          std::uint64_t noise_seed = derive_seed(config.seed, "train_noise",
                                                 (static_cast<std::uint64_t>(epoch) << 32) + b0 + k);
          double l = example_loss_grad(dataset[train_idx[b0 + k]], &g, noise_seed);
          chunk_loss[c] += l;
          if (chunk_grads[c].empty()) chunk_grads[c].assign(g.size(), 0.0);
          for (std::size_t i = 0; i < g.size(); ++i) chunk_grads[c][i] += g[i];
        }
      });
      std::vector<double> grad(flat.size(), 0.0);
      double batch_loss = 0;
      for (std::size_t c = 0; c < n_chunks; ++c) {
        batch_loss += chunk_loss[c];
        if (chunk_grads[c].empty()) continue;
        for (std::size_t i = 0; i < grad.size(); ++i) grad[i] += chunk_grads[c][i];
      }
      double inv = 1.0 / static_cast<double>(b1 - b0);
      for (double& g : grad) g *= inv;
      batch_loss *= inv;
      if (!std::isfinite(batch_loss))
        throw std::runtime_error("training diverged at epoch " + std::to_string(epoch));
      if (config.weight_decay > 0)
        for (std::size_t i = 0; i < grad.size(); ++i) grad[i] += config.weight_decay * flat[i];
      // cosine decay to a tenth of the base rate over the run
      double u = static_cast<double>(epoch) / std::max(1, config.epochs - 1);
      adam.set_lr(config.lr * (0.1 + 0.45 * (1.0 + std::cos(M_PI * u))));
      adam.step(flat, grad);
      params.unflatten(flat);
      epoch_loss += batch_loss;
      ++batches;
    }

    if (report) {
      report->train_curve.push_back(epoch_loss / static_cast<double>(std::max<std::size_t>(1, batches)));
      double val_loss = 0;
      for (std::size_t i : val_idx) val_loss += example_loss_grad(dataset[i], nullptr, 0);
      report->val_curve.push_back(val_idx.empty() ? 0.0 : val_loss / static_cast<double>(val_idx.size()));
    }
  }

  if (report) {
    double mse = 0, zero_mse = 0, pos_mse = 0, count = 0;
    for (std::size_t i : val_idx.empty() ? train_idx : val_idx) {
      const TrainExample& ex = dataset[i];
      Tape t;
      GnsIds ids = push_gns(t, params);
      int out = gns_forward(t, ids, params, ex.features);
      Mat accel = denormalize_rows(t.value(out), params.target_mean, params.target_std);
      for (Eigen::Index r = 0; r < accel.rows(); ++r) {
        if (r == ex.grasped_vertex) continue;
        double e2 = (accel.row(r) - ex.target_accel.row(r)).squaredNorm();
        mse += e2;
        zero_mse += ex.target_accel.row(r).squaredNorm();
        pos_mse += e2 * std::pow(ex.dt, 4);  // one-step position error
        count += 3;
      }
    }
    report->val_accel_mse = mse / count;
    report->zero_baseline_accel_mse = zero_mse / count;
    report->val_position_mse = pos_mse / count;
  }
  return params;
}

// ---------------------------------------------------------------------------
// priors and rollout
// ---------------------------------------------------------------------------

AugmentedMesh PerturbedSimPrior::predict(std::span<const AugmentedMesh> history, const Vec3& action,
                                         int grasped_vertex, double dt) const {
  ClothParams p = params_;
  p.dt = dt;
  p.substeps = std::max(1, static_cast<int>(std::ceil(dt / substep_target_)));
  return simulate_step(history.back(), p, action, grasped_vertex);
}

AugmentedMesh GnsPrior::predict(std::span<const AugmentedMesh> history, const Vec3& action,
                                int grasped_vertex, double dt) const {
  return gns_predict(params_, history, action, grasped_vertex, dt);
}

AugmentedMesh ZeroAccelPrior::predict(std::span<const AugmentedMesh> history, const Vec3& action,
                                      int grasped_vertex, double dt) const {
  const AugmentedMesh& latest = history.back();
  const std::size_t n = latest.vertex_count();
  std::vector<Vec3> x(n), v(n);
  if (history.size() >= 2) {
    const auto& prev = history[history.size() - 2].vertices();
    for (std::size_t i = 0; i < n; ++i) v[i] = (latest.vertices()[i] - prev[i]) / dt;
  } else {
    for (auto& vi : v) vi = Vec3::Zero();
  }
  for (std::size_t i = 0; i < n; ++i) x[i] = latest.vertices()[i] + v[i] * dt;
  auto g = static_cast<std::size_t>(grasped_vertex);
  v[g] = action;
  x[g] = latest.vertices()[g] + action * dt;
  return latest.with_state(std::move(x), std::move(v));
}

std::vector<AugmentedMesh> rollout(const TransitionPrior& prior, std::vector<AugmentedMesh> history,
                                   std::span<const Vec3> actions, int grasped_vertex, double dt) {
  if (history.empty()) throw std::invalid_argument("rollout needs an initial state");
  std::vector<AugmentedMesh> out;
  out.reserve(actions.size());
  for (const Vec3& a : actions) {
    AugmentedMesh next = prior.predict(history, a, grasped_vertex, dt);
    out.push_back(next);
    history.push_back(std::move(next));
    std::size_t keep = static_cast<std::size_t>(std::max(1, prior.history_length())) + 1;
    if (history.size() > keep) history.erase(history.begin(), history.end() - static_cast<long>(keep));
  }
  return out;
}

std::vector<TrainExample> make_training_examples(std::span<const std::vector<Vec3>> positions,
                                                 const AugmentedMesh& topology_mesh,
                                                 std::span<const Vec3> actions, int grasped_vertex,
                                                 double dt, int m) {
  if (positions.size() < 2 || actions.size() + 1 != positions.size())
    throw std::invalid_argument("positions/actions length mismatch");
  const std::size_t n = topology_mesh.vertex_count();
  std::vector<Vec3> zero_vel(n, Vec3::Zero());

  std::vector<TrainExample> out;
  for (std::size_t t = 0; t + 1 < positions.size(); ++t) {
    std::vector<AugmentedMesh> hist;
    for (long k = static_cast<long>(t) - m; k <= static_cast<long>(t); ++k) {
      std::size_t idx = static_cast<std::size_t>(std::max(0L, k));
      hist.push_back(topology_mesh.with_state(positions[idx], zero_vel));
    }
    TrainExample ex;
    ex.features = build_graph_features(hist, grasped_vertex, dt, m);
    condition_on_action(ex.features, grasped_vertex, actions[t], m);
    ex.grasped_vertex = grasped_vertex;
    ex.dt = dt;
    ex.target_accel = Mat::Zero(static_cast<Eigen::Index>(n), 3);
    const auto& x_prev = positions[t == 0 ? 0 : t - 1];
    const auto& x_cur = positions[t];
    const auto& x_next = positions[t + 1];
    for (std::size_t i = 0; i < n; ++i) {
      // x_prev == x_cur at t=0, matching the padded (at rest) history
      Vec3 a = (x_next[i] - 2.0 * x_cur[i] + x_prev[i]) / (dt * dt);
      for (int c = 0; c < 3; ++c) ex.target_accel(static_cast<Eigen::Index>(i), c) = a(c);
    }
    out.push_back(std::move(ex));
  }
  return out;
}

}  // namespace ct
