#pragma once

#include <functional>
#include <map>
#include <memory>
#include <set>
#include <span>
#include <vector>

#include "plopt/pseudo_label.hpp"

namespace plopt {

// Candidate pool for grid search. Single candidates are stored with
// tau_h == tau_l.
struct GridCandidate {
  double tau_h = 1.0;
  double tau_l = 1.0;
};

struct GridSpec {
  PolicyMode mode = PolicyMode::kSingle;
  std::vector<GridCandidate> candidates;

  // [0.2, 0.3, ..., 0.9, 1]; tau = 1 is the "w/o PL" baseline.
  static GridSpec default_single_pool();
  // All (tau_h, tau_l) pairs from [0.2, 0.4, 0.6, 0.8, 1.0] with
  // tau_h >= tau_l: 15 candidates.
  static GridSpec default_dual_pool();
};

// Stand-in for training and scoring a student model on the merged dataset.
class Evaluator {
 public:
  virtual ~Evaluator() = default;
  virtual double evaluate(const Dataset& merged) const = 0;
};

// Per-class average precision at IoU 0.5 with the all-point precision
// envelope. Labels with source=ignore act as ignore regions.
double average_precision_50(std::span<const DetectionRecord> detections,
                            const Dataset& truth, ClassId class_id);

struct Map50Result {
  double map = 0.0;
  std::map<ClassId, double> per_class;  // classes with n_gt > 0 only
};

Map50Result map_50(std::span<const DetectionRecord> detections,
                   const Dataset& truth);

struct QualityReport {
  double precision = 1.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::int64_t tp = 0;
  std::int64_t fp = 0;
  std::int64_t n_gt = 0;
  std::vector<Finding> findings;
};

// Matches the set's pseudo labels (as score-1 detections) against the fully
// annotated truth at IoU 0.5 and reports the micro-averaged triple. An
// empty pseudo set reports precision 1 by convention. Classes absent from
// the truth are excluded with a warning.
QualityReport evaluate_pseudo_quality(
    const PseudoLabelSet& pseudo, const Dataset& full_truth,
    double iou_threshold = kDefaultIouThreshold);

// Oracle evaluator: F1 of a merged dataset's pseudo labels against held-out
// full truth, restricted per image to the classes its source dataset lacks.
class PseudoQualityEvaluator : public Evaluator {
 public:
  PseudoQualityEvaluator(Dataset full_truth,
                         std::map<ImageId, std::set<ClassId>> eligible,
                         double iou_threshold = kDefaultIouThreshold);

  double evaluate(const Dataset& merged) const override;
  QualityReport report(const Dataset& merged) const;

 private:
  Dataset full_truth_;
  std::map<ImageId, std::set<ClassId>> eligible_;
  double iou_threshold_;
};

// Builds the oracle evaluator from a bundle and its full-truth views (same
// images, all annotations), both expressed in merged image-id space.
PseudoQualityEvaluator make_pseudo_quality_evaluator(
    const DatasetBundle& bundle, std::span<const Dataset> full_truth_views,
    double iou_threshold = kDefaultIouThreshold);

struct GridSearchRow {
  GridCandidate candidate;
  double score = 0.0;
};

struct GridSearchResult {
  GridCandidate best;
  double best_score = 0.0;
  ThresholdPolicy best_policy;
  std::vector<GridSearchRow> table;
};

// Evaluator failure mid-search; carries the rows finished so far.
class GridSearchError : public std::runtime_error {
 public:
  GridSearchError(const std::string& message, std::vector<GridSearchRow> partial)
      : std::runtime_error(message), partial_table(std::move(partial)) {}
  std::vector<GridSearchRow> partial_table;
};

// For each candidate: build an all-class-identical policy, generate pseudo
// labels per dataset, merge, evaluate. Ties go to the lexicographically
// larger (tau_h, tau_l). Candidate evaluations may run in parallel; the
// table keeps candidate order.
GridSearchResult grid_search(
    const DatasetBundle& bundle,
    const std::vector<std::vector<DetectionRecord>>& detections_per_dataset,
    const GridSpec& spec, const Evaluator& evaluator, int jobs = 1);

}  // namespace plopt
