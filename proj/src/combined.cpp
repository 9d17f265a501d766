#include "plopt/combined.hpp"

#include <cmath>

namespace plopt {

double estimate_label_ratio(const DatasetBundle& bundle, ClassId class_id) {
  if (!bundle.full_class_set.contains(class_id)) {
    throw ContractViolation("class " + std::to_string(class_id) +
                            " not in the bundle's class set");
  }
  const std::size_t total = bundle.total_images();
  if (total == 0) {
    throw ContractViolation("bundle has no images");
  }
  std::size_t annotated = 0;
  for (const auto& dataset : bundle.datasets) {
    if (dataset.class_set.contains(class_id)) annotated += dataset.images.size();
  }
  return static_cast<double>(annotated) / static_cast<double>(total);
}

LabelRatioTable estimate_ratio_table(const DatasetBundle& bundle) {
  LabelRatioTable table;
  for (ClassId class_id : bundle.full_class_set) {
    table.entries[class_id] = {estimate_label_ratio(bundle, class_id),
                               RatioMode::kImageCountEstimate};
  }
  return table;
}

CombinedPoint combined_point(double p, double r, double x, bool at_tau_one) {
  if (p < 0.0 || p > 1.0 || r < 0.0 || r > 1.0 || x < 0.0 || x > 1.0) {
    throw ContractViolation("combined_point: inputs outside [0,1]");
  }
  if (p == 0.0 && r > 0.0) {
    throw ContractViolation("combined_point: r > 0 requires p > 0");
  }
  if (at_tau_one) return {1.0, 1.0, x};
  if (x == 0.0) return {0.0, p, r};
  if (x == 1.0) return {0.0, 1.0, 1.0};

  const double r_ds = x + (1.0 - x) * r;
  double p_ds = 1.0;
  if (r > 0.0) {
    p_ds = (x + (1.0 - x) * r) / (x + (1.0 - x) * r / p);
  }
  // r == 0: no pseudo labels kept, only the perfect ground-truth mass
  return {0.0, p_ds, r_ds};
}

CombinedPoint combined_point_counts(std::int64_t tp, std::int64_t fp,
                                    std::int64_t n_gt, double x,
                                    double threshold) {
  if (tp < 0 || fp < 0 || n_gt < tp) {
    throw ContractViolation("combined_point_counts: inconsistent counts");
  }
  if (x < 0.0 || x > 1.0) {
    throw ContractViolation("combined_point_counts: x outside [0,1]");
  }
  if (x == 1.0) return {threshold, 1.0, 1.0};

  // Perfect-label mass of the ground-truth portion, in units where the
  // pseudo-labeled portion holds n_gt objects.
  const double gt_mass = x / (1.0 - x) * static_cast<double>(n_gt);
  const double correct = gt_mass + static_cast<double>(tp);
  const double claimed = gt_mass + static_cast<double>(tp + fp);
  const double total = gt_mass + static_cast<double>(n_gt);

  CombinedPoint point;
  point.threshold = threshold;
  point.p_ds = claimed > 0.0 ? correct / claimed : 1.0;
  point.r_ds = total > 0.0 ? correct / total : 0.0;
  return point;
}

std::vector<CombinedPoint> combined_curve(const PRCurve& curve, double x) {
  std::vector<CombinedPoint> points;
  points.reserve(curve.points.size() + 1);
  points.push_back({1.0, 1.0, x});  // tau = 1: ground-truth labels only
  for (const auto& p : curve.points) {
    points.push_back(
        combined_point_counts(p.tp, p.fp, curve.n_gt, x, p.threshold));
  }
  return points;
}

namespace {

FmaxResult fmax_combined(const std::vector<CombinedPoint>& points,
                         double beta) {
  FmaxResult best{1.0, 0.0};
  bool first = true;
  for (const auto& point : points) {  // descending threshold
    const double score = f_beta(point.p_ds, point.r_ds, beta);
    if (first || score > best.fscore) {
      best.threshold = point.threshold;
      best.fscore = score;
      first = false;
    }
  }
  return best;
}

}  // namespace

PolicySelection select_policy_ds(const std::map<ClassId, PRCurve>& curves,
                                 const LabelRatioTable& ratios,
                                 PolicyMode mode, const BetaSettings& betas) {
  PolicySelection selection;
  selection.policy.method = PolicyMethod::kFmaxDs;
  selection.policy.mode = mode;
  selection.policy.beta_single = betas.single;
  selection.policy.beta_high = betas.high;
  selection.policy.beta_low = betas.low;

  for (const auto& [class_id, curve] : curves) {
    const double x = ratios.x(class_id);  // throws when missing
    if (curve.points.empty()) {
      selection.findings.push_back(
          {Severity::kWarning, "class " + std::to_string(class_id) +
                                   " has an empty curve; threshold 1.0"});
    }
    const auto points = combined_curve(curve, x);
    ClassThresholds thresholds;
    if (mode == PolicyMode::kSingle) {
      const double tau = fmax_combined(points, betas.single).threshold;
      thresholds = {tau, tau};
    } else {
      thresholds.tau_h = fmax_combined(points, betas.high).threshold;
      thresholds.tau_l = fmax_combined(points, betas.low).threshold;
      if (thresholds.tau_l > thresholds.tau_h) {
        thresholds.tau_l = thresholds.tau_h;
      }
    }
    selection.policy.classes[class_id] = thresholds;
  }
  return selection;
}

}  // namespace plopt
