#pragma once

#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "plopt/matching.hpp"

namespace plopt {

struct PRPoint {
  double threshold = 0.0;
  std::int64_t tp = 0;  // cumulative over records with score >= threshold
  std::int64_t fp = 0;
  double precision = 0.0;
  double recall = 0.0;
};

// Step function of (threshold -> precision, recall), one point per distinct
// score, sorted by descending threshold.
struct PRCurve {
  ClassId class_id = 0;
  std::vector<PRPoint> points;
  std::int64_t n_gt = 0;
};

PRCurve pr_curve(std::span<const MatchRecord> records, std::int64_t n_gt);

// Weighted harmonic mean of precision and recall; 0 when both are 0.
double f_beta(double precision, double recall, double beta);

struct FmaxResult {
  double threshold = 1.0;
  double fscore = 0.0;
};

// Argmax of f_beta over the curve's points. Ties resolve to the higher
// threshold. An empty curve yields (1.0, 0.0): no usable pseudo labels.
FmaxResult fmax(const PRCurve& curve, double beta);

enum class PolicyMethod { kFmaxPl, kFmaxDs, kGrid, kManual };
enum class PolicyMode { kSingle, kDual };

const char* to_string(PolicyMethod method);
const char* to_string(PolicyMode mode);
PolicyMethod policy_method_from_string(const std::string& name);
PolicyMode policy_mode_from_string(const std::string& name);

// Per-class thresholds. Single policies store tau in both fields.
struct ClassThresholds {
  double tau_h = 1.0;
  double tau_l = 1.0;

  double tau() const { return tau_h; }
};

struct ThresholdPolicy {
  PolicyMethod method = PolicyMethod::kManual;
  PolicyMode mode = PolicyMode::kSingle;
  double beta_single = 1.0;
  double beta_high = 0.5;
  double beta_low = 2.0;
  std::map<ClassId, ClassThresholds> classes;

  bool covers(ClassId class_id) const {
    return classes.find(class_id) != classes.end();
  }
};

struct BetaSettings {
  double single = 1.0;
  double high = 0.5;
  double low = 2.0;
};

struct PolicySelection {
  ThresholdPolicy policy;
  std::vector<Finding> findings;
};

// Fmax_PL selection: single mode takes the F1 argmax per class; dual mode
// takes tau_h from the F_0.5 argmax and tau_l from the F_2 argmax, then
// clamps tau_l to tau_h if the pair comes out inverted. Classes with an
// empty curve resolve to 1.0 and produce a warning finding.
PolicySelection select_policy(const std::map<ClassId, PRCurve>& curves,
                              PolicyMode mode,
                              const BetaSettings& betas = {});

// Builds a policy that applies the same threshold(s) to every class.
ThresholdPolicy uniform_policy(const std::set<ClassId>& classes, double tau_h,
                               double tau_l, PolicyMode mode,
                               PolicyMethod method = PolicyMethod::kGrid);

std::string policy_to_json(const ThresholdPolicy& policy);
std::string policy_to_tsv(const ThresholdPolicy& policy);
ThresholdPolicy policy_from_json(const std::string& text);
ThresholdPolicy load_policy(const std::filesystem::path& path);
void save_policy(const ThresholdPolicy& policy,
                 const std::filesystem::path& path);

}  // namespace plopt
