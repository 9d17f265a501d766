#include "plopt/threshold.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "plopt/dataset_io.hpp"

namespace plopt {

using nlohmann::json;
using nlohmann::ordered_json;

PRCurve pr_curve(std::span<const MatchRecord> records, std::int64_t n_gt) {
  PRCurve curve;
  curve.n_gt = n_gt;
  if (records.empty()) return curve;

  curve.class_id = records.front().class_id;
  std::int64_t total_tp = 0;
  for (const auto& record : records) {
    if (record.class_id != curve.class_id) {
      throw ContractViolation("pr_curve records mix class ids");
    }
    if (record.is_tp) ++total_tp;
  }
  if (n_gt < total_tp) {
    throw ContractViolation("pr_curve: n_gt " + std::to_string(n_gt) +
                            " below TP count " + std::to_string(total_tp));
  }

  std::vector<const MatchRecord*> sorted;
  sorted.reserve(records.size());
  for (const auto& record : records) sorted.push_back(&record);
  std::stable_sort(sorted.begin(), sorted.end(),
                   [](const MatchRecord* a, const MatchRecord* b) {
                     return a->score > b->score;
                   });

  std::int64_t tp = 0;
  std::int64_t fp = 0;
  for (std::size_t i = 0; i < sorted.size(); ++i) {
    if (sorted[i]->is_tp) {
      ++tp;
    } else {
      ++fp;
    }
    // flush one point per distinct score
    if (i + 1 < sorted.size() && sorted[i + 1]->score == sorted[i]->score) {
      continue;
    }
    PRPoint point;
    point.threshold = sorted[i]->score;
    point.tp = tp;
    point.fp = fp;
    point.precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
    point.recall =
        n_gt > 0 ? static_cast<double>(tp) / static_cast<double>(n_gt) : 0.0;
    curve.points.push_back(point);
  }
  return curve;
}

double f_beta(double precision, double recall, double beta) {
  if (beta <= 0.0) {
    throw ContractViolation("f_beta: beta must be positive");
  }
  if (precision < 0.0 || precision > 1.0 || recall < 0.0 || recall > 1.0) {
    throw ContractViolation("f_beta: precision/recall outside [0,1]");
  }
  if (precision == 0.0 && recall == 0.0) return 0.0;
  const double b2 = beta * beta;
  return (1.0 + b2) * precision * recall / (b2 * precision + recall);
}

FmaxResult fmax(const PRCurve& curve, double beta) {
  FmaxResult best{1.0, 0.0};
  if (curve.points.empty()) return best;

  bool first = true;
  for (const auto& point : curve.points) {  // descending threshold
    const double score = f_beta(point.precision, point.recall, beta);
    if (first || score > best.fscore) {
      best.threshold = point.threshold;
      best.fscore = score;
      first = false;
    }
  }
  return best;
}

const char* to_string(PolicyMethod method) {
  switch (method) {
    case PolicyMethod::kFmaxPl:
      return "fmax_pl";
    case PolicyMethod::kFmaxDs:
      return "fmax_ds";
    case PolicyMethod::kGrid:
      return "grid";
    case PolicyMethod::kManual:
      return "manual";
  }
  return "manual";
}

const char* to_string(PolicyMode mode) {
  return mode == PolicyMode::kSingle ? "single" : "dual";
}

PolicyMethod policy_method_from_string(const std::string& name) {
  if (name == "fmax_pl" || name == "fmax-pl") return PolicyMethod::kFmaxPl;
  if (name == "fmax_ds" || name == "fmax-ds") return PolicyMethod::kFmaxDs;
  if (name == "grid") return PolicyMethod::kGrid;
  if (name == "manual") return PolicyMethod::kManual;
  throw ParseError("unknown policy method '" + name + "'");
}

PolicyMode policy_mode_from_string(const std::string& name) {
  if (name == "single") return PolicyMode::kSingle;
  if (name == "dual") return PolicyMode::kDual;
  throw ParseError("unknown policy mode '" + name + "'");
}

PolicySelection select_policy(const std::map<ClassId, PRCurve>& curves,
                              PolicyMode mode, const BetaSettings& betas) {
  PolicySelection selection;
  selection.policy.method = PolicyMethod::kFmaxPl;
  selection.policy.mode = mode;
  selection.policy.beta_single = betas.single;
  selection.policy.beta_high = betas.high;
  selection.policy.beta_low = betas.low;

  for (const auto& [class_id, curve] : curves) {
    ClassThresholds thresholds;
    if (curve.points.empty()) {
      selection.findings.push_back(
          {Severity::kWarning, "class " + std::to_string(class_id) +
                                   " has an empty curve; threshold 1.0"});
    } else if (mode == PolicyMode::kSingle) {
      const double tau = fmax(curve, betas.single).threshold;
      thresholds = {tau, tau};
    } else {
      thresholds.tau_h = fmax(curve, betas.high).threshold;
      thresholds.tau_l = fmax(curve, betas.low).threshold;
      if (thresholds.tau_l > thresholds.tau_h) {
        thresholds.tau_l = thresholds.tau_h;
      }
    }
    selection.policy.classes[class_id] = thresholds;
  }
  return selection;
}

ThresholdPolicy uniform_policy(const std::set<ClassId>& classes, double tau_h,
                               double tau_l, PolicyMode mode,
                               PolicyMethod method) {
  if (tau_l > tau_h) {
    throw ContractViolation("uniform_policy: tau_l above tau_h");
  }
  ThresholdPolicy policy;
  policy.method = method;
  policy.mode = mode;
  for (ClassId id : classes) {
    policy.classes[id] =
        mode == PolicyMode::kSingle ? ClassThresholds{tau_h, tau_h}
                                    : ClassThresholds{tau_h, tau_l};
  }
  return policy;
}

std::string policy_to_json(const ThresholdPolicy& policy) {
  ordered_json doc;
  doc["method"] = to_string(policy.method);
  doc["mode"] = to_string(policy.mode);
  if (policy.mode == PolicyMode::kSingle) {
    doc["beta_single"] = policy.beta_single;
  } else {
    doc["beta_high"] = policy.beta_high;
    doc["beta_low"] = policy.beta_low;
  }
  doc["classes"] = ordered_json::array();
  for (const auto& [class_id, thresholds] : policy.classes) {
    ordered_json j;
    j["class_id"] = class_id;
    if (policy.mode == PolicyMode::kSingle) {
      j["tau"] = thresholds.tau();
    } else {
      j["tau_h"] = thresholds.tau_h;
      j["tau_l"] = thresholds.tau_l;
    }
    doc["classes"].push_back(std::move(j));
  }
  return doc.dump(2) + "\n";
}

std::string policy_to_tsv(const ThresholdPolicy& policy) {
  std::ostringstream out;
  out << "class_id\ttau_h\ttau_l\n";
  for (const auto& [class_id, thresholds] : policy.classes) {
    out << class_id << '\t' << thresholds.tau_h << '\t' << thresholds.tau_l
        << '\n';
  }
  return out.str();
}

ThresholdPolicy policy_from_json(const std::string& text) {
  json doc = json::parse(text, nullptr, /*allow_exceptions=*/false);
  if (doc.is_discarded() || !doc.is_object()) {
    throw ParseError("policy document is not a JSON object");
  }
  ThresholdPolicy policy;
  policy.method = policy_method_from_string(doc.value("method", "manual"));
  policy.mode = policy_mode_from_string(doc.value("mode", "single"));
  policy.beta_single = doc.value("beta_single", 1.0);
  policy.beta_high = doc.value("beta_high", 0.5);
  policy.beta_low = doc.value("beta_low", 2.0);
  const auto classes = doc.find("classes");
  if (classes == doc.end() || !classes->is_array()) {
    throw ParseError("policy document missing 'classes' array");
  }
  for (const auto& entry : *classes) {
    if (!entry.is_object() || !entry.contains("class_id")) {
      throw ParseError("policy class entry missing 'class_id'");
    }
    const ClassId class_id = entry.at("class_id").get<ClassId>();
    ClassThresholds thresholds;
    if (policy.mode == PolicyMode::kSingle) {
      if (!entry.contains("tau")) {
        throw ParseError("single-mode policy entry missing 'tau'");
      }
      const double tau = entry.at("tau").get<double>();
      thresholds = {tau, tau};
    } else {
      if (!entry.contains("tau_h") || !entry.contains("tau_l")) {
        throw ParseError("dual-mode policy entry missing 'tau_h'/'tau_l'");
      }
      thresholds.tau_h = entry.at("tau_h").get<double>();
      thresholds.tau_l = entry.at("tau_l").get<double>();
    }
    if (thresholds.tau_h < 0.0 || thresholds.tau_h > 1.0 ||
        thresholds.tau_l < 0.0 || thresholds.tau_l > 1.0) {
      throw ValidationError("policy thresholds outside [0,1] for class " +
                            std::to_string(class_id));
    }
    if (thresholds.tau_l > thresholds.tau_h) {
      throw ValidationError("policy has tau_l > tau_h for class " +
                            std::to_string(class_id));
    }
    policy.classes[class_id] = thresholds;
  }
  return policy;
}

ThresholdPolicy load_policy(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw IoError("cannot open '" + path.string() + "'");
  }
  std::ostringstream buffer;
  buffer << in.rdbuf();
  try {
    return policy_from_json(buffer.str());
  } catch (const ParseError& e) {
    throw ParseError("'" + path.string() + "': " + e.what());
  }
}

void save_policy(const ThresholdPolicy& policy,
                 const std::filesystem::path& path) {
  atomic_write_text(path, policy_to_json(policy));
}

}  // namespace plopt
