#pragma once

#include <array>
#include <cstdint>
#include <span>

#include "ct/mesh.hpp"

namespace ct {

// P tracked points over T frames, index-aligned between prediction and
// ground truth.
struct TrackSet {
  std::vector<std::vector<Vec3>> frames;  // T x P

  std::size_t num_frames() const { return frames.size(); }
  std::size_t num_points() const { return frames.empty() ? 0 : frames[0].size(); }
};

inline constexpr std::array<double, 5> kDeltaThresholdsMm = {10, 20, 40, 80, 160};
inline constexpr double kSurvivalThresholdMm = 50;

// Median over all (point, timestep) Euclidean errors, in millimeters.
double mte_mm(const TrackSet& pred, const TrackSet& gt);

struct DeltaAccuracy {
  std::array<double, 5> per_threshold{};
  double average = 0;
};

// Fraction of (point, timestep) errors within each threshold (inclusive).
DeltaAccuracy delta_accuracy(const TrackSet& pred, const TrackSet& gt);

// Per point, the fraction of the trajectory before its error first exceeds
// the threshold, averaged over points.
double survival_rate(const TrackSet& pred, const TrackSet& gt, double threshold_mm = kSurvivalThresholdMm);

enum class InitAugmentation { TRANS, ROT, SCALING, NOISE, TRSN };
InitAugmentation augmentation_from_string(const std::string& s);
std::string to_string(InitAugmentation a);

// Initialization-error augmentations: xy translation in [-0.05, 0.05] m, z in
// [-0.003, 0.003] m, yaw in [-30, 30] deg about the centroid, scaling in
// [0.8, 1.2] (rest lengths recomputed), per-coordinate noise sigma 0.005 m.
// TRSN composes all four.
AugmentedMesh apply_init_augmentation(const AugmentedMesh& mesh, InitAugmentation kind,
                                      std::uint64_t rng_seed);

TrackSet tracks_from_positions(std::span<const std::vector<Vec3>> frames);

}  // namespace ct
