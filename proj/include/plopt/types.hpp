#pragma once

#include <cmath>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "plopt/common.hpp"

namespace plopt {

// Axis-aligned box, COCO convention: (x, y) is the top-left corner,
// w/h extend right and down. Continuous coordinates, no +1 correction.
struct Box {
  double x = 0.0;
  double y = 0.0;
  double w = 0.0;
  double h = 0.0;

  double area() const { return w * h; }

  bool valid() const {
    return std::isfinite(x) && std::isfinite(y) && std::isfinite(w) &&
           std::isfinite(h) && w > 0.0 && h > 0.0;
  }
};

enum class LabelSource { kHuman, kPseudo, kPseudoBackground, kIgnore };

const char* to_string(LabelSource source);
LabelSource label_source_from_string(const std::string& name);

struct GroundTruthLabel {
  ImageId image_id = 0;
  ClassId class_id = 0;
  Box box;
  LabelSource source = LabelSource::kHuman;
  // Generating confidence for pseudo entries; human labels carry 1.
  double score = 1.0;
};

struct DetectionRecord {
  ImageId image_id = 0;
  ClassId class_id = 0;
  Box box;
  double score = 0.0;
};

struct ImageInfo {
  ImageId id = 0;
  double width = 0.0;
  double height = 0.0;
  std::string file_name;
};

struct Dataset {
  std::vector<ImageInfo> images;
  std::vector<GroundTruthLabel> labels;
  std::set<ClassId> class_set;

  bool has_image(ImageId id) const;
  std::size_t count_labels(LabelSource source) const;
};

struct DatasetBundle {
  std::vector<Dataset> datasets;
  std::set<ClassId> full_class_set;

  // C-bar of dataset i: classes the bundle covers but dataset i lacks.
  std::set<ClassId> complement(std::size_t dataset_index) const;
  std::size_t total_images() const;
};

// Builds a bundle whose full class set is the union of member class sets.
DatasetBundle make_bundle(std::vector<Dataset> datasets);

enum class RatioMode { kExact, kImageCountEstimate };

const char* to_string(RatioMode mode);
RatioMode ratio_mode_from_string(const std::string& name);

struct LabelRatioEntry {
  double x = 0.0;  // fraction of class-j objects that carry human labels
  RatioMode mode = RatioMode::kExact;
};

struct LabelRatioTable {
  std::map<ClassId, LabelRatioEntry> entries;

  bool contains(ClassId class_id) const {
    return entries.find(class_id) != entries.end();
  }
  double x(ClassId class_id) const;
};

}  // namespace plopt
