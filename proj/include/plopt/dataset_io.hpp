#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "plopt/types.hpp"

namespace plopt {

// Loads a COCO-style annotation document: top-level `images`, `annotations`,
// `categories`. Annotations may carry an optional `source` string and an
// optional `ignore` boolean; absent source means a human label.
Dataset load_ground_truth(const std::filesystem::path& path);

// Loads a COCO-style detection-results array:
// [{image_id, category_id, bbox, score}, ...]. Order preserved. Scores
// outside [0,1] and non-positive box sizes are rejected, not clamped.
std::vector<DetectionRecord> load_detections(const std::filesystem::path& path);

std::string dataset_to_json(const Dataset& dataset);
std::string detections_to_json(const std::vector<DetectionRecord>& detections);

void save_dataset(const Dataset& dataset, const std::filesystem::path& path);
void save_detections(const std::vector<DetectionRecord>& detections,
                     const std::filesystem::path& path);

// Report-only bundle checks: class-set overlaps, empty datasets, duplicate
// image ids across datasets (warnings), full_class_set != union (error).
std::vector<Finding> validate_bundle(const DatasetBundle& bundle);

LabelRatioTable load_ratio_table(const std::filesystem::path& path);
std::string ratio_table_to_json(const LabelRatioTable& table);
void save_ratio_table(const LabelRatioTable& table,
                      const std::filesystem::path& path);

// Writes via a temp file in the target directory followed by a rename.
void atomic_write_text(const std::filesystem::path& path,
                       const std::string& content);

}  // namespace plopt
