#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <string>

#include "ct/mesh.hpp"
#include "ct/sim.hpp"
#include "ct/tape.hpp"

namespace ct {

// Node features: past m velocity vectors plus a grasped flag. Edge features:
// distance vector and norm for both directions of every mesh edge. Absolute
// positions are excluded, which makes predictions translation-equivariant.
struct GraphFeatures {
  Mat node_features;  // N x (3m + 1)
  Mat edge_features;  // 2L x 4
  std::vector<int> edge_src, edge_dst;
};

GraphFeatures build_graph_features(std::span<const AugmentedMesh> history, int grasped_vertex,
                                   double dt, int m = 3);

struct MlpParams {
  std::vector<Mat> weights;  // in x out
  std::vector<Mat> biases;   // 1 x out
};

// Encoder (node + edge MLPs), `blocks` message-passing blocks with residual
// edge/node updates, and a per-node acceleration decoder.
struct GnsParams {
  int history = 3;
  int blocks = 3;
  int hidden = 32;
  MlpParams node_encoder, edge_encoder, decoder;
  std::vector<MlpParams> edge_updates, node_updates;
  Eigen::VectorXd node_mean, node_std;      // feature normalization
  Eigen::VectorXd edge_mean, edge_std;
  Eigen::VectorXd target_mean, target_std;  // acceleration normalization

  std::size_t parameter_count() const;
  std::vector<double> flatten() const;
  void unflatten(const std::vector<double>& flat);
};

GnsParams init_gns_params(int history, int blocks, int hidden, std::uint64_t seed);
void save_gns(const std::string& path, const GnsParams& params);
GnsParams load_gns(const std::string& path);

// One prediction step: grasped velocity overwritten by the action before the
// forward pass, per-node accelerations decoded, forward-Euler integration,
// grasped vertex re-pinned to follow the action exactly.
AugmentedMesh gns_predict(const GnsParams& params, std::span<const AugmentedMesh> history,
                          const Vec3& action, int grasped_vertex, double dt);

struct TrainExample {
  GraphFeatures features;
  Mat target_accel;  // N x 3, raw units
  int grasped_vertex = 0;
  double dt = 0;
};

struct GnsTrainConfig {
  int epochs = 120;
  int batch_size = 8;
  double lr = 1e-3;
  double val_fraction = 0.15;
  // training-time corruption of the velocity features (as a fraction of
  // their standard deviation); teaches the model to correct its own rollout
  // drift
  double feature_noise = 0.3;
  double weight_decay = 1e-4;
  std::uint64_t seed = 0;
};

struct GnsTrainReport {
  std::vector<double> train_curve;      // normalized acceleration MSE per epoch
  std::vector<double> val_curve;
  double val_accel_mse = 0;             // raw units, trained model
  double zero_baseline_accel_mse = 0;   // raw units, zero-acceleration baseline
  double val_position_mse = 0;          // one-step mesh-space MSE
};

GnsParams gns_train(std::vector<TrainExample> dataset, int history, int blocks, int hidden,
                    const GnsTrainConfig& config, GnsTrainReport* report = nullptr);

// Action-conditioned transition prior p(M_{t+1} | M_t, a_t).
class TransitionPrior {
 public:
  virtual ~TransitionPrior() = default;
  virtual AugmentedMesh predict(std::span<const AugmentedMesh> history, const Vec3& action,
                                int grasped_vertex, double dt) const = 0;
  virtual int history_length() const { return 1; }
};

// Training-free stand-in with a deliberate model gap: the simulator run with
// wrong stiffness/damping.
class PerturbedSimPrior : public TransitionPrior {
 public:
  PerturbedSimPrior(ClothParams base, double stiffness_factor = 0.5, double damping_factor = 0.5,
                    double substep_target = 0.002)
      : params_(base.perturbed(stiffness_factor, damping_factor)), substep_target_(substep_target) {}
  AugmentedMesh predict(std::span<const AugmentedMesh> history, const Vec3& action, int grasped_vertex,
                        double dt) const override;

 private:
  ClothParams params_;
  double substep_target_;
};

class GnsPrior : public TransitionPrior {
 public:
  explicit GnsPrior(GnsParams params) : params_(std::move(params)) {}
  AugmentedMesh predict(std::span<const AugmentedMesh> history, const Vec3& action, int grasped_vertex,
                        double dt) const override;
  int history_length() const override { return params_.history + 1; }

 private:
  GnsParams params_;
};

// Ballistic reference: zero acceleration everywhere, grasped vertex follows
// the action.
class ZeroAccelPrior : public TransitionPrior {
 public:
  AugmentedMesh predict(std::span<const AugmentedMesh> history, const Vec3& action, int grasped_vertex,
                        double dt) const override;
};

// Iterated one-step prediction feeding each output back as input.
std::vector<AugmentedMesh> rollout(const TransitionPrior& prior, std::vector<AugmentedMesh> history,
                                   std::span<const Vec3> actions, int grasped_vertex, double dt);

// (history, action, next state) tuples from a simulated trajectory.
std::vector<TrainExample> make_training_examples(std::span<const std::vector<Vec3>> positions,
                                                 const AugmentedMesh& topology_mesh,
                                                 std::span<const Vec3> actions, int grasped_vertex,
                                                 double dt, int m = 3);

}  // namespace ct
