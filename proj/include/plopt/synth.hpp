#pragma once

#include <cstdint>
#include <set>
#include <vector>

#include "plopt/types.hpp"

namespace plopt {
namespace synth {

struct WorldConfig {
  std::int64_t n_images = 100;
  std::int64_t n_classes = 5;
  double objects_per_image_mean = 3.0;
  double objects_per_image_dispersion = 1.0;
  double image_width = 640.0;
  double image_height = 640.0;
  double box_min_size = 24.0;
  double box_max_size = 64.0;
  std::uint64_t seed = 0;

  void validate() const;
};

// Score distributions are Beta; survival functions stay in closed form for
// the analytic oracle.
struct DetectorProfile {
  double recall_rate = 0.8;   // probability a true object is detected
  double fp_per_image = 1.0;  // Poisson rate of spurious detections
  double tp_score_a = 5.0;
  double tp_score_b = 2.0;
  double fp_score_a = 2.0;
  double fp_score_b = 5.0;
  double localization_jitter = 1.0;  // pixels, stddev of box perturbation
  double fp_box_min_size = 24.0;     // spurious-box size range
  double fp_box_max_size = 64.0;

  void validate() const;
};

// Fully annotated world, deterministic per seed. Class ids are 0-based.
// Object counts per image follow round(Normal(mean, dispersion)) clamped
// at zero; dispersion 0 gives a fixed count.
Dataset generate_world(const WorldConfig& config, int jobs = 1);

struct PartitionResult {
  DatasetBundle bundle;
  // Same images as bundle.datasets[i] but carrying all annotations; used by
  // oracle evaluators and detector simulation.
  std::vector<Dataset> full_truth;
};

// Emulates multi-dataset construction from one fully annotated world:
// images are split into n_splits seeded-random groups, class id j is
// assigned to split (j mod n_splits), out-of-split annotations are removed,
// and images left without annotations are dropped.
PartitionResult partition_classes(const Dataset& world, int n_splits,
                                  std::uint64_t seed);

// Simulates a teacher detector over the target classes of a fully annotated
// dataset: each true object is detected with probability recall_rate (box
// jittered, score ~ Beta(tp)); false positives appear at fp_per_image with
// uniform boxes and score ~ Beta(fp). Deterministic per seed.
std::vector<DetectionRecord> simulate_detector(
    const Dataset& full_truth, const std::set<ClassId>& target_classes,
    const DetectorProfile& profile, std::uint64_t seed, int jobs = 1);

// Expected PR curve of a simulated detector, from Beta survival functions:
//   precision(tau) = R*S_tp(tau) / (R*S_tp(tau) + phi*S_fp(tau))
//   recall(tau)    = recall_rate * S_tp(tau)
// with R = recall_rate * n_gt_per_image and phi = fp_per_image.
class AnalyticPR {
 public:
  AnalyticPR(DetectorProfile profile, double n_gt_per_image);

  double precision(double tau) const;
  double recall(double tau) const;

 private:
  DetectorProfile profile_;
  double n_gt_per_image_;
};

inline AnalyticPR analytic_pr(const DetectorProfile& profile,
                              double n_gt_per_image) {
  return AnalyticPR(profile, n_gt_per_image);
}

// P(score > tau) for score ~ Beta(a, b).
double beta_survival(double tau, double a, double b);

}  // namespace synth
}  // namespace plopt
