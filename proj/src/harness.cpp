#include "plopt/harness.hpp"

#include <algorithm>
#include <cmath>

#include "plopt/parallel.hpp"

namespace plopt {

GridSpec GridSpec::default_single_pool() {
  GridSpec spec;
  spec.mode = PolicyMode::kSingle;
  for (int i = 2; i <= 10; ++i) {
    const double tau = static_cast<double>(i) / 10.0;
    spec.candidates.push_back({tau, tau});
  }
  return spec;
}

GridSpec GridSpec::default_dual_pool() {
  GridSpec spec;
  spec.mode = PolicyMode::kDual;
  std::vector<double> pool;
  for (int i = 1; i <= 5; ++i) pool.push_back(static_cast<double>(i) / 5.0);
  for (double tau_h : pool) {
    for (double tau_l : pool) {
      if (tau_l <= tau_h) spec.candidates.push_back({tau_h, tau_l});
    }
  }
  return spec;
}

namespace {

std::vector<DetectionRecord> class_detections(
    std::span<const DetectionRecord> detections, ClassId class_id) {
  std::vector<DetectionRecord> result;
  for (const auto& det : detections) {
    if (det.class_id == class_id) result.push_back(det);
  }
  return result;
}

std::vector<GroundTruthLabel> class_labels(const Dataset& truth,
                                           ClassId class_id) {
  std::vector<GroundTruthLabel> result;
  for (const auto& label : truth.labels) {
    if (label.class_id == class_id) result.push_back(label);
  }
  return result;
}

// All-point interpolated AP: integrate the precision envelope over recall.
double envelope_ap(const std::vector<MatchRecord>& records, std::int64_t n_gt) {
  if (n_gt <= 0 || records.empty()) return 0.0;
  const std::size_t n = records.size();
  std::vector<double> precision(n);
  std::vector<double> recall(n);
  std::int64_t tp = 0;
  std::int64_t fp = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (records[i].is_tp) {
      ++tp;
    } else {
      ++fp;
    }
    precision[i] = static_cast<double>(tp) / static_cast<double>(tp + fp);
    recall[i] = static_cast<double>(tp) / static_cast<double>(n_gt);
  }
  for (std::size_t i = n - 1; i > 0; --i) {
    precision[i - 1] = std::max(precision[i - 1], precision[i]);
  }
  double ap = 0.0;
  double prev_recall = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    ap += (recall[i] - prev_recall) * precision[i];
    prev_recall = recall[i];
  }
  return ap;
}

}  // namespace

double average_precision_50(std::span<const DetectionRecord> detections,
                            const Dataset& truth, ClassId class_id) {
  const auto dets = class_detections(detections, class_id);
  const auto gts = class_labels(truth, class_id);
  const MatchResult matched = match_class(dets, gts, kDefaultIouThreshold);
  return envelope_ap(matched.records, matched.n_gt);
}

Map50Result map_50(std::span<const DetectionRecord> detections,
                   const Dataset& truth) {
  Map50Result result;
  for (ClassId class_id : truth.class_set) {
    const auto gts = class_labels(truth, class_id);
    const std::int64_t n_gt = static_cast<std::int64_t>(std::count_if(
        gts.begin(), gts.end(), [](const GroundTruthLabel& label) {
          return label.source != LabelSource::kIgnore;
        }));
    if (n_gt == 0) continue;  // class not represented: excluded from the mean
    result.per_class[class_id] =
        average_precision_50(detections, truth, class_id);
  }
  if (result.per_class.empty()) return result;
  double sum = 0.0;
  for (const auto& [class_id, ap] : result.per_class) sum += ap;
  result.map = sum / static_cast<double>(result.per_class.size());
  return result;
}

namespace {

struct QualityTotals {
  std::int64_t tp = 0;
  std::int64_t claimed = 0;
  std::int64_t n_gt = 0;

  QualityReport finish(std::vector<Finding> findings) const {
    QualityReport report;
    report.tp = tp;
    report.fp = claimed - tp;
    report.n_gt = n_gt;
    report.precision =
        claimed > 0 ? static_cast<double>(tp) / static_cast<double>(claimed)
                    : 1.0;  // no claims, no false claims
    report.recall =
        n_gt > 0 ? static_cast<double>(tp) / static_cast<double>(n_gt) : 0.0;
    report.f1 = f_beta(report.precision, report.recall, 1.0);
    report.findings = std::move(findings);
    return report;
  }
};

}  // namespace

QualityReport evaluate_pseudo_quality(const PseudoLabelSet& pseudo,
                                      const Dataset& full_truth,
                                      double iou_threshold) {
  std::set<ClassId> classes;
  for (const auto& label : pseudo.labels) {
    if (label.source == LabelSource::kPseudo) classes.insert(label.class_id);
  }

  QualityTotals totals;
  std::vector<Finding> findings;
  for (ClassId class_id : classes) {
    if (!full_truth.class_set.contains(class_id)) {
      findings.push_back({Severity::kWarning,
                          "class " + std::to_string(class_id) +
                              " absent from the reference truth; excluded"});
      continue;
    }
    std::vector<DetectionRecord> dets;
    for (const auto& label : pseudo.labels) {
      if (label.source == LabelSource::kPseudo && label.class_id == class_id) {
        dets.push_back({label.image_id, label.class_id, label.box, 1.0});
      }
    }
    const auto gts = class_labels(full_truth, class_id);
    const MatchResult matched = match_class(dets, gts, iou_threshold);
    totals.n_gt += matched.n_gt;
    for (const auto& record : matched.records) {
      ++totals.claimed;
      if (record.is_tp) ++totals.tp;
    }
  }
  return totals.finish(std::move(findings));
}

PseudoQualityEvaluator::PseudoQualityEvaluator(
    Dataset full_truth, std::map<ImageId, std::set<ClassId>> eligible,
    double iou_threshold)
    : full_truth_(std::move(full_truth)),
      eligible_(std::move(eligible)),
      iou_threshold_(iou_threshold) {}

QualityReport PseudoQualityEvaluator::report(const Dataset& merged) const {
  auto is_eligible = [this](ImageId image_id, ClassId class_id) {
    auto it = eligible_.find(image_id);
    return it != eligible_.end() && it->second.contains(class_id);
  };

  std::set<ClassId> classes;
  for (const auto& [image_id, class_set] : eligible_) {
    classes.insert(class_set.begin(), class_set.end());
  }

  QualityTotals totals;
  std::vector<Finding> findings;
  for (const auto& label : merged.labels) {
    if (label.source == LabelSource::kPseudo &&
        !is_eligible(label.image_id, label.class_id)) {
      ++totals.claimed;  // pseudo label outside its mandate: a false claim
    }
  }
  for (ClassId class_id : classes) {
    std::vector<DetectionRecord> dets;
    for (const auto& label : merged.labels) {
      if (label.source == LabelSource::kPseudo && label.class_id == class_id &&
          is_eligible(label.image_id, class_id)) {
        dets.push_back({label.image_id, label.class_id, label.box, 1.0});
      }
    }
    std::vector<GroundTruthLabel> gts;
    for (const auto& label : full_truth_.labels) {
      if (label.class_id == class_id && label.source != LabelSource::kIgnore &&
          is_eligible(label.image_id, class_id)) {
        gts.push_back(label);
      }
    }
    const MatchResult matched = match_class(dets, gts, iou_threshold_);
    totals.n_gt += matched.n_gt;
    for (const auto& record : matched.records) {
      ++totals.claimed;
      if (record.is_tp) ++totals.tp;
    }
  }
  return totals.finish(std::move(findings));
}

double PseudoQualityEvaluator::evaluate(const Dataset& merged) const {
  return report(merged).f1;
}

PseudoQualityEvaluator make_pseudo_quality_evaluator(
    const DatasetBundle& bundle, std::span<const Dataset> full_truth_views,
    double iou_threshold) {
  if (full_truth_views.size() != bundle.datasets.size()) {
    throw ContractViolation("expected one full-truth view per dataset");
  }
  const std::int64_t stride = merge_id_stride(bundle);

  Dataset truth;
  std::map<ImageId, std::set<ClassId>> eligible;
  for (std::size_t i = 0; i < full_truth_views.size(); ++i) {
    const auto offset = static_cast<std::int64_t>(i) * stride;
    const std::set<ClassId> complement = bundle.complement(i);
    for (const auto& img : full_truth_views[i].images) {
      ImageInfo info = img;
      info.id += offset;
      eligible[info.id] = complement;
      truth.images.push_back(std::move(info));
    }
    for (const auto& label : full_truth_views[i].labels) {
      GroundTruthLabel copy = label;
      copy.image_id += offset;
      truth.labels.push_back(std::move(copy));
    }
    truth.class_set.insert(full_truth_views[i].class_set.begin(),
                           full_truth_views[i].class_set.end());
  }
  return PseudoQualityEvaluator(std::move(truth), std::move(eligible),
                                iou_threshold);
}

GridSearchResult grid_search(
    const DatasetBundle& bundle,
    const std::vector<std::vector<DetectionRecord>>& detections_per_dataset,
    const GridSpec& spec, const Evaluator& evaluator, int jobs) {
  if (spec.candidates.empty()) {
    throw ContractViolation("grid spec has no candidates");
  }
  if (detections_per_dataset.size() != bundle.datasets.size()) {
    throw ContractViolation("expected one detection list per dataset");
  }
  for (const auto& candidate : spec.candidates) {
    if (candidate.tau_h < 0.0 || candidate.tau_h > 1.0 ||
        candidate.tau_l < 0.0 || candidate.tau_l > 1.0 ||
        candidate.tau_l > candidate.tau_h) {
      throw ContractViolation("grid candidate outside [0,1] or inverted");
    }
  }

  const std::size_t n = spec.candidates.size();
  std::vector<double> scores(n, 0.0);
  std::vector<std::string> errors(n);
  parallel_for(n, jobs, [&](std::size_t i) {
    const GridCandidate& candidate = spec.candidates[i];
    try {
      const ThresholdPolicy policy =
          uniform_policy(bundle.full_class_set, candidate.tau_h,
                         candidate.tau_l, spec.mode, PolicyMethod::kGrid);
      std::vector<PseudoLabelSet> pseudo_sets;
      pseudo_sets.reserve(bundle.datasets.size());
      for (std::size_t d = 0; d < bundle.datasets.size(); ++d) {
        pseudo_sets.push_back(
            generate(detections_per_dataset[d], policy, bundle.datasets[d]));
      }
      scores[i] = evaluator.evaluate(merge_bundle(bundle, pseudo_sets));
    } catch (const std::exception& e) {
      errors[i] = e.what();
      if (errors[i].empty()) errors[i] = "evaluation failed";
    }
  });

  GridSearchResult result;
  std::string failure;
  for (std::size_t i = 0; i < n; ++i) {
    if (!errors[i].empty()) {
      if (failure.empty()) {
        failure = "candidate " + std::to_string(i) + " failed: " + errors[i];
      }
      continue;
    }
    result.table.push_back({spec.candidates[i], scores[i]});
  }
  if (!failure.empty()) {
    throw GridSearchError(failure, std::move(result.table));
  }

  bool first = true;
  for (const auto& row : result.table) {
    const bool better =
        first || row.score > result.best_score ||
        (row.score == result.best_score &&
         (row.candidate.tau_h > result.best.tau_h ||
          (row.candidate.tau_h == result.best.tau_h &&
           row.candidate.tau_l > result.best.tau_l)));
    if (better) {
      result.best = row.candidate;
      result.best_score = row.score;
      first = false;
    }
  }
  result.best_policy =
      uniform_policy(bundle.full_class_set, result.best.tau_h,
                     result.best.tau_l, spec.mode, PolicyMethod::kGrid);
  return result;
}

}  // namespace plopt
