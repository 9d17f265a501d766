#include "plopt/types.hpp"

#include <algorithm>
#include <unordered_set>

namespace plopt {

const char* to_string(LabelSource source) {
  switch (source) {
    case LabelSource::kHuman:
      return "human";
    case LabelSource::kPseudo:
      return "pseudo";
    case LabelSource::kPseudoBackground:
      return "pseudo_background";
    case LabelSource::kIgnore:
      return "ignore";
  }
  return "human";
}

LabelSource label_source_from_string(const std::string& name) {
  if (name == "human") return LabelSource::kHuman;
  if (name == "pseudo") return LabelSource::kPseudo;
  if (name == "pseudo_background") return LabelSource::kPseudoBackground;
  if (name == "ignore") return LabelSource::kIgnore;
  throw ParseError("unknown label source '" + name + "'");
}

const char* to_string(RatioMode mode) {
  return mode == RatioMode::kExact ? "exact" : "image_count_estimate";
}

RatioMode ratio_mode_from_string(const std::string& name) {
  if (name == "exact") return RatioMode::kExact;
  if (name == "image_count_estimate" || name == "image_count")
    return RatioMode::kImageCountEstimate;
  throw ParseError("unknown ratio mode '" + name + "'");
}

bool Dataset::has_image(ImageId id) const {
  return std::any_of(images.begin(), images.end(),
                     [id](const ImageInfo& info) { return info.id == id; });
}

std::size_t Dataset::count_labels(LabelSource source) const {
  return static_cast<std::size_t>(
      std::count_if(labels.begin(), labels.end(),
                    [source](const GroundTruthLabel& label) {
                      return label.source == source;
                    }));
}

std::set<ClassId> DatasetBundle::complement(std::size_t dataset_index) const {
  std::set<ClassId> result;
  const auto& own = datasets.at(dataset_index).class_set;
  for (ClassId id : full_class_set) {
    if (!own.contains(id)) result.insert(id);
  }
  return result;
}

std::size_t DatasetBundle::total_images() const {
  std::size_t total = 0;
  for (const auto& dataset : datasets) total += dataset.images.size();
  return total;
}

DatasetBundle make_bundle(std::vector<Dataset> datasets) {
  DatasetBundle bundle;
  bundle.datasets = std::move(datasets);
  for (const auto& dataset : bundle.datasets) {
    bundle.full_class_set.insert(dataset.class_set.begin(),
                                 dataset.class_set.end());
  }
  return bundle;
}

double LabelRatioTable::x(ClassId class_id) const {
  auto it = entries.find(class_id);
  if (it == entries.end()) {
    throw ContractViolation("no label ratio for class " +
                            std::to_string(class_id));
  }
  return it->second.x;
}

}  // namespace plopt
