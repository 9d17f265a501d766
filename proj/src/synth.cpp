#include "plopt/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include <boost/math/special_functions/beta.hpp>

#include "plopt/parallel.hpp"

namespace plopt {
namespace synth {

namespace {

// Keep simulated scores strictly inside (0,1); a score of exactly 1 would
// survive a tau = 1 policy.
constexpr double kScoreMargin = 1e-9;

std::uint64_t splitmix64(std::uint64_t z) {
  z += 0x9E3779B97F4A7C15ull;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  return splitmix64(seed ^ splitmix64(stream + 1));
}

double sample_beta(std::mt19937_64& rng, double a, double b) {
  std::gamma_distribution<double> ga(a, 1.0);
  std::gamma_distribution<double> gb(b, 1.0);
  const double x = ga(rng);
  const double y = gb(rng);
  const double value = x + y > 0.0 ? x / (x + y) : 0.5;
  return std::clamp(value, kScoreMargin, 1.0 - kScoreMargin);
}

}  // namespace

void WorldConfig::validate() const {
  if (n_images < 1) throw ContractViolation("world: n_images must be >= 1");
  if (n_classes < 1) throw ContractViolation("world: n_classes must be >= 1");
  if (objects_per_image_mean < 0.0 || objects_per_image_dispersion < 0.0) {
    throw ContractViolation("world: objects_per_image parameters must be >= 0");
  }
  if (image_width <= 0.0 || image_height <= 0.0) {
    throw ContractViolation("world: image dimensions must be positive");
  }
  if (box_min_size <= 0.0 || box_max_size < box_min_size) {
    throw ContractViolation("world: box size range is empty");
  }
  if (box_max_size > image_width || box_max_size > image_height) {
    throw ContractViolation("world: boxes must fit inside the image");
  }
}

void DetectorProfile::validate() const {
  if (recall_rate < 0.0 || recall_rate > 1.0) {
    throw ContractViolation("detector: recall_rate must be in [0,1]");
  }
  if (fp_per_image < 0.0) {
    throw ContractViolation("detector: fp_per_image must be >= 0");
  }
  if (tp_score_a <= 0.0 || tp_score_b <= 0.0 || fp_score_a <= 0.0 ||
      fp_score_b <= 0.0) {
    throw ContractViolation("detector: Beta parameters must be positive");
  }
  if (localization_jitter < 0.0) {
    throw ContractViolation("detector: localization_jitter must be >= 0");
  }
  if (fp_box_min_size <= 0.0 || fp_box_max_size < fp_box_min_size) {
    throw ContractViolation("detector: fp box size range is empty");
  }
}

Dataset generate_world(const WorldConfig& config, int jobs) {
  config.validate();
  const auto n = static_cast<std::size_t>(config.n_images);

  std::vector<std::vector<GroundTruthLabel>> per_image(n);
  Dataset world;
  world.images.resize(n);
  for (ClassId c = 0; c < config.n_classes; ++c) world.class_set.insert(c);

  parallel_for(n, jobs, [&](std::size_t i) {
    std::mt19937_64 rng(derive_seed(config.seed, i));
    ImageInfo info;
    info.id = static_cast<ImageId>(i);
    info.width = config.image_width;
    info.height = config.image_height;
    info.file_name = "synthetic_" + std::to_string(i) + ".png";
    world.images[i] = std::move(info);

    std::int64_t count = 0;
    if (config.objects_per_image_dispersion == 0.0) {
      count = std::llround(config.objects_per_image_mean);
    } else {
      std::normal_distribution<double> dist(config.objects_per_image_mean,
                                            config.objects_per_image_dispersion);
      count = std::max<std::int64_t>(0, std::llround(dist(rng)));
    }

    std::uniform_int_distribution<ClassId> class_dist(0, config.n_classes - 1);
    std::uniform_real_distribution<double> size_dist(config.box_min_size,
                                                     config.box_max_size);
    auto& labels = per_image[i];
    labels.reserve(static_cast<std::size_t>(count));
    for (std::int64_t k = 0; k < count; ++k) {
      GroundTruthLabel label;
      label.image_id = static_cast<ImageId>(i);
      label.class_id = class_dist(rng);
      const double w = size_dist(rng);
      const double h = size_dist(rng);
      std::uniform_real_distribution<double> x_dist(0.0, config.image_width - w);
      std::uniform_real_distribution<double> y_dist(0.0,
                                                    config.image_height - h);
      label.box = {x_dist(rng), y_dist(rng), w, h};
      labels.push_back(std::move(label));
    }
  });

  for (auto& labels : per_image) {
    world.labels.insert(world.labels.end(),
                        std::make_move_iterator(labels.begin()),
                        std::make_move_iterator(labels.end()));
  }
  return world;
}

PartitionResult partition_classes(const Dataset& world, int n_splits,
                                  std::uint64_t seed) {
  if (n_splits < 2) {
    throw ContractViolation("partition: n_splits must be >= 2");
  }
  if (static_cast<std::size_t>(n_splits) > world.class_set.size()) {
    throw ContractViolation("partition: n_splits exceeds the class count");
  }

  // class id mod N assignment
  std::vector<std::set<ClassId>> class_sets(n_splits);
  for (ClassId id : world.class_set) {
    class_sets[static_cast<std::size_t>(
        ((id % n_splits) + n_splits) % n_splits)].insert(id);
  }

  std::vector<std::size_t> order(world.images.size());
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(derive_seed(seed, 0));
  std::shuffle(order.begin(), order.end(), rng);

  std::vector<std::vector<std::size_t>> image_groups(n_splits);
  for (std::size_t i = 0; i < order.size(); ++i) {
    image_groups[i % static_cast<std::size_t>(n_splits)].push_back(order[i]);
  }
  for (auto& group : image_groups) std::sort(group.begin(), group.end());

  PartitionResult result;
  std::vector<Dataset> datasets(n_splits);
  result.full_truth.resize(n_splits);
  for (int s = 0; s < n_splits; ++s) {
    auto& dataset = datasets[s];
    auto& full = result.full_truth[s];
    dataset.class_set = class_sets[s];
    full.class_set = world.class_set;

    for (std::size_t img_index : image_groups[s]) {
      const ImageInfo& info = world.images[img_index];
      std::vector<GroundTruthLabel> kept;
      std::vector<GroundTruthLabel> all;
      for (const auto& label : world.labels) {
        if (label.image_id != info.id) continue;
        all.push_back(label);
        if (class_sets[s].contains(label.class_id)) kept.push_back(label);
      }
      if (kept.empty()) continue;  // image has no in-split objects: dropped
      dataset.images.push_back(info);
      full.images.push_back(info);
      dataset.labels.insert(dataset.labels.end(), kept.begin(), kept.end());
      full.labels.insert(full.labels.end(), all.begin(), all.end());
    }
  }
  result.bundle = make_bundle(std::move(datasets));
  return result;
}

std::vector<DetectionRecord> simulate_detector(
    const Dataset& full_truth, const std::set<ClassId>& target_classes,
    const DetectorProfile& profile, std::uint64_t seed, int jobs) {
  profile.validate();
  for (ClassId id : target_classes) {
    if (!full_truth.class_set.contains(id)) {
      throw ContractViolation("target class " + std::to_string(id) +
                              " not in the dataset's class set");
    }
  }
  const std::vector<ClassId> classes(target_classes.begin(),
                                     target_classes.end());

  // label indices per image, in label order
  std::vector<std::vector<std::size_t>> labels_of(full_truth.images.size());
  {
    std::unordered_map<ImageId, std::size_t> image_index;
    for (std::size_t i = 0; i < full_truth.images.size(); ++i) {
      image_index[full_truth.images[i].id] = i;
    }
    for (std::size_t k = 0; k < full_truth.labels.size(); ++k) {
      auto it = image_index.find(full_truth.labels[k].image_id);
      if (it != image_index.end()) labels_of[it->second].push_back(k);
    }
  }

  std::vector<std::vector<DetectionRecord>> per_image(full_truth.images.size());
  parallel_for(full_truth.images.size(), jobs, [&](std::size_t i) {
    std::mt19937_64 rng(derive_seed(seed, i));
    const ImageInfo& info = full_truth.images[i];
    std::uniform_real_distribution<double> uniform(0.0, 1.0);
    std::normal_distribution<double> jitter(0.0, profile.localization_jitter);
    auto& out = per_image[i];

    for (std::size_t k : labels_of[i]) {
      const GroundTruthLabel& label = full_truth.labels[k];
      if (label.source == LabelSource::kIgnore) continue;
      if (!target_classes.contains(label.class_id)) continue;
      if (uniform(rng) >= profile.recall_rate) continue;

      DetectionRecord det;
      det.image_id = label.image_id;
      det.class_id = label.class_id;
      det.box = label.box;
      if (profile.localization_jitter > 0.0) {
        det.box.x += jitter(rng);
        det.box.y += jitter(rng);
        det.box.w = std::max(1.0, det.box.w + jitter(rng));
        det.box.h = std::max(1.0, det.box.h + jitter(rng));
      }
      det.score = sample_beta(rng, profile.tp_score_a, profile.tp_score_b);
      out.push_back(std::move(det));
    }

    std::poisson_distribution<int> fp_count(profile.fp_per_image);
    const int n_fp = profile.fp_per_image > 0.0 ? fp_count(rng) : 0;
    std::uniform_int_distribution<std::size_t> class_pick(0,
                                                          classes.size() - 1);
    const double max_size =
        std::min({profile.fp_box_max_size, info.width, info.height});
    std::uniform_real_distribution<double> size_dist(
        std::min(profile.fp_box_min_size, max_size), max_size);
    for (int k = 0; k < n_fp; ++k) {
      DetectionRecord det;
      det.image_id = info.id;
      det.class_id = classes[class_pick(rng)];
      const double w = size_dist(rng);
      const double h = size_dist(rng);
      std::uniform_real_distribution<double> x_dist(0.0, info.width - w);
      std::uniform_real_distribution<double> y_dist(0.0, info.height - h);
      det.box = {x_dist(rng), y_dist(rng), w, h};
      det.score = sample_beta(rng, profile.fp_score_a, profile.fp_score_b);
      out.push_back(std::move(det));
    }
  });

  std::vector<DetectionRecord> detections;
  for (auto& group : per_image) {
    detections.insert(detections.end(), std::make_move_iterator(group.begin()),
                      std::make_move_iterator(group.end()));
  }
  return detections;
}

double beta_survival(double tau, double a, double b) {
  if (tau <= 0.0) return 1.0;
  if (tau >= 1.0) return 0.0;
  return boost::math::ibetac(a, b, tau);
}

AnalyticPR::AnalyticPR(DetectorProfile profile, double n_gt_per_image)
    : profile_(std::move(profile)), n_gt_per_image_(n_gt_per_image) {
  profile_.validate();
  if (n_gt_per_image_ < 0.0) {
    throw ContractViolation("analytic_pr: n_gt_per_image must be >= 0");
  }
}

double AnalyticPR::recall(double tau) const {
  return profile_.recall_rate *
         beta_survival(tau, profile_.tp_score_a, profile_.tp_score_b);
}

double AnalyticPR::precision(double tau) const {
  const double tp_rate =
      profile_.recall_rate * n_gt_per_image_ *
      beta_survival(tau, profile_.tp_score_a, profile_.tp_score_b);
  const double fp_rate =
      profile_.fp_per_image *
      beta_survival(tau, profile_.fp_score_a, profile_.fp_score_b);
  if (tp_rate + fp_rate <= 0.0) return 1.0;  // no detections expected
  return tp_rate / (tp_rate + fp_rate);
}

}  // namespace synth
}  // namespace plopt
