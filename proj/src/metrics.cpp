#include "ct/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <span>
#include <stdexcept>

#include "ct/rng.hpp"

namespace ct {

namespace {

void check_aligned(const TrackSet& pred, const TrackSet& gt) {
  if (pred.num_frames() != gt.num_frames() || pred.num_frames() == 0)
    throw std::invalid_argument("track sets must have the same nonzero frame count");
  for (std::size_t t = 0; t < pred.num_frames(); ++t)
    if (pred.frames[t].size() != gt.frames[t].size() || pred.frames[t].size() != pred.frames[0].size())
      throw std::invalid_argument("track sets must have the same point count in every frame");
}

std::vector<double> all_errors_mm(const TrackSet& pred, const TrackSet& gt) {
  std::vector<double> e;
  e.reserve(pred.num_frames() * pred.num_points());
  for (std::size_t t = 0; t < pred.num_frames(); ++t)
    for (std::size_t p = 0; p < pred.frames[t].size(); ++p)
      e.push_back(1000.0 * (pred.frames[t][p] - gt.frames[t][p]).norm());
  return e;
}

}  // namespace

double mte_mm(const TrackSet& pred, const TrackSet& gt) {
  check_aligned(pred, gt);
  std::vector<double> e = all_errors_mm(pred, gt);
  std::size_t n = e.size();
  auto mid = e.begin() + static_cast<long>(n / 2);
  std::nth_element(e.begin(), mid, e.end());
  if (n % 2 == 1) return *mid;
  double hi = *mid;
  double lo = *std::max_element(e.begin(), mid);
  return 0.5 * (lo + hi);
}

DeltaAccuracy delta_accuracy(const TrackSet& pred, const TrackSet& gt) {
  check_aligned(pred, gt);
  std::vector<double> e = all_errors_mm(pred, gt);
  DeltaAccuracy out;
  for (std::size_t k = 0; k < kDeltaThresholdsMm.size(); ++k) {
    std::size_t within = 0;
    for (double v : e)
      if (v <= kDeltaThresholdsMm[k]) ++within;
    out.per_threshold[k] = static_cast<double>(within) / static_cast<double>(e.size());
    out.average += out.per_threshold[k] / static_cast<double>(kDeltaThresholdsMm.size());
  }
  return out;
}

double survival_rate(const TrackSet& pred, const TrackSet& gt, double threshold_mm) {
  check_aligned(pred, gt);
  const std::size_t T = pred.num_frames(), P = pred.num_points();
  double total = 0;
  for (std::size_t p = 0; p < P; ++p) {
    std::size_t alive = T;
    for (std::size_t t = 0; t < T; ++t) {
      double err = 1000.0 * (pred.frames[t][p] - gt.frames[t][p]).norm();
      if (err > threshold_mm) {
        alive = t;
        break;
      }
    }
    total += static_cast<double>(alive) / static_cast<double>(T);
  }
  return total / static_cast<double>(P);
}

InitAugmentation augmentation_from_string(const std::string& s) {
  if (s == "trans" || s == "TRANS") return InitAugmentation::TRANS;
  if (s == "rot" || s == "ROT") return InitAugmentation::ROT;
  if (s == "scaling" || s == "SCALING") return InitAugmentation::SCALING;
  if (s == "noise" || s == "NOISE") return InitAugmentation::NOISE;
  if (s == "trsn" || s == "TRSN") return InitAugmentation::TRSN;
  throw std::invalid_argument("unknown augmentation: " + s);
}

std::string to_string(InitAugmentation a) {
  switch (a) {
    case InitAugmentation::TRANS: return "TRANS";
    case InitAugmentation::ROT: return "ROT";
    case InitAugmentation::SCALING: return "SCALING";
    case InitAugmentation::NOISE: return "NOISE";
    case InitAugmentation::TRSN: return "TRSN";
  }
  return "?";
}

AugmentedMesh apply_init_augmentation(const AugmentedMesh& mesh, InitAugmentation kind,
                                      std::uint64_t rng_seed) {
  std::mt19937_64 rng(splitmix64(rng_seed));
  std::uniform_real_distribution<double> xy(-0.05, 0.05), z(-0.003, 0.003);
  std::uniform_real_distribution<double> yaw(-30.0 * M_PI / 180, 30.0 * M_PI / 180);
  std::uniform_real_distribution<double> scale(0.8, 1.2);
  std::normal_distribution<double> noise(0.0, 0.005);

  bool do_trans = kind == InitAugmentation::TRANS || kind == InitAugmentation::TRSN;
  bool do_rot = kind == InitAugmentation::ROT || kind == InitAugmentation::TRSN;
  bool do_scale = kind == InitAugmentation::SCALING || kind == InitAugmentation::TRSN;
  bool do_noise = kind == InitAugmentation::NOISE || kind == InitAugmentation::TRSN;

  std::vector<Vec3> x = mesh.vertices();
  Vec3 c = mesh.centroid();
  if (do_rot) {
    double a = yaw(rng);
    Mat3 r = Eigen::AngleAxisd(a, Vec3::UnitZ()).toRotationMatrix();
    for (auto& p : x) p = r * (p - c) + c;
  }
  bool rebuild = false;
  if (do_scale) {
    double s = scale(rng);
    for (auto& p : x) p = s * (p - c) + c;
    rebuild = true;  // rest lengths change
  }
  if (do_trans) {
    Vec3 t(xy(rng), xy(rng), z(rng));
    for (auto& p : x) p += t;
  }
  if (do_noise) {
    for (auto& p : x)
      for (int k = 0; k < 3; ++k) p(k) += noise(rng);
    rebuild = true;
  }
  // keep the cloth on the table
  double min_z = x[0].z();
  for (const auto& p : x) min_z = std::min(min_z, p.z());
  if (min_z < 0)
    for (auto& p : x) p.z() -= min_z;

  if (rebuild) return AugmentedMesh(x, mesh.topology().faces);
  std::vector<Vec3> zero_vel(x.size(), Vec3::Zero());
  return mesh.with_state(std::move(x), std::move(zero_vel));
}

TrackSet tracks_from_positions(std::span<const std::vector<Vec3>> frames) {
  TrackSet t;
  t.frames.assign(frames.begin(), frames.end());
  return t;
}

}  // namespace ct
