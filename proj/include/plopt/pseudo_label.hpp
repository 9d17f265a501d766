#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "plopt/threshold.hpp"

namespace plopt {

struct PseudoProvenance {
  PolicyMethod method = PolicyMethod::kManual;
  PolicyMode mode = PolicyMode::kSingle;
  std::map<ClassId, ClassThresholds> thresholds;
  std::string detector_id;
};

struct PseudoLabelSet {
  std::vector<GroundTruthLabel> labels;
  PseudoProvenance provenance;
};

struct GenerateOptions {
  // Emit one explicit pseudo_background record (whole-image box) for every
  // image whose detections all score below their class's tau_l. Background
  // is otherwise implicit: the absence of records.
  bool emit_background_records = false;
  std::string detector_id;
};

// Applies a threshold policy to teacher detections for one target dataset.
// Single policy: score >= tau becomes a pseudo label. Dual policy:
// score >= tau_h becomes a pseudo label, tau_l <= score < tau_h becomes an
// ignore record, below tau_l nothing is emitted. Detections for classes the
// target already annotates are a contract violation.
PseudoLabelSet generate(std::span<const DetectionRecord> detections,
                        const ThresholdPolicy& policy, const Dataset& target,
                        const GenerateOptions& options = {});

// Stride used to namespace image ids when merging: dataset i's image id
// becomes i * stride + id.
std::int64_t merge_id_stride(const DatasetBundle& bundle);

// Merges the bundle and its per-dataset pseudo sets into one training
// dataset over the full class set. Human labels are preserved verbatim
// (modulo image-id namespacing); pseudo/ignore labels are appended.
// pseudo_sets may be empty (the "w/o PL" baseline) or one per dataset.
Dataset merge_bundle(const DatasetBundle& bundle,
                     std::span<const PseudoLabelSet> pseudo_sets = {});

std::string pseudo_set_to_json(const PseudoLabelSet& set);
PseudoLabelSet pseudo_set_from_json(const std::string& text);
PseudoLabelSet load_pseudo_set(const std::filesystem::path& path);
void save_pseudo_set(const PseudoLabelSet& set,
                     const std::filesystem::path& path);

}  // namespace plopt
