#pragma once

#include <map>
#include <vector>

#include "plopt/threshold.hpp"

namespace plopt {

// One point of the precision/recall curve of ALL labels (human ground truth
// plus pseudo labels) for a class with labeled fraction x.
struct CombinedPoint {
  double threshold = 1.0;
  double p_ds = 1.0;
  double r_ds = 0.0;
};

// Image-count estimate of the labeled fraction x_j: images belonging to
// datasets that annotate class j, over all images in the bundle.
double estimate_label_ratio(const DatasetBundle& bundle, ClassId class_id);

// Estimates x for every class in the bundle's full class set.
LabelRatioTable estimate_ratio_table(const DatasetBundle& bundle);

// Ratio form. at_tau_one selects the tau = 1 endpoint (1, x). Requires
// p > 0 whenever r > 0; p = r = 0 is treated as "no pseudo labels kept".
CombinedPoint combined_point(double p, double r, double x, bool at_tau_one);

// Count form, defined even when tp = 0 with fp > 0: the labeled portion
// contributes a ground-truth mass of x/(1-x) * n_gt perfect labels.
CombinedPoint combined_point_counts(std::int64_t tp, std::int64_t fp,
                                    std::int64_t n_gt, double x,
                                    double threshold);

// Maps every curve point through the count form and prepends the tau = 1
// endpoint; sorted by descending threshold.
std::vector<CombinedPoint> combined_curve(const PRCurve& curve, double x);

// Fmax_DS selection: same rules as select_policy, but f_beta is maximized
// over the combined curve, so the tau = 1 endpoint competes and "no pseudo
// labels for this class" is a reachable outcome.
PolicySelection select_policy_ds(const std::map<ClassId, PRCurve>& curves,
                                 const LabelRatioTable& ratios,
                                 PolicyMode mode,
                                 const BetaSettings& betas = {});

}  // namespace plopt
