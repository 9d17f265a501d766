#include "plopt/pseudo_label.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include <json.hpp>

#include "plopt/dataset_io.hpp"

namespace plopt {

using nlohmann::json;
using nlohmann::ordered_json;

PseudoLabelSet generate(std::span<const DetectionRecord> detections,
                        const ThresholdPolicy& policy, const Dataset& target,
                        const GenerateOptions& options) {
  std::unordered_set<std::int64_t> image_ids;
  for (const auto& img : target.images) image_ids.insert(img.id);

  PseudoLabelSet set;
  set.provenance.method = policy.method;
  set.provenance.mode = policy.mode;
  set.provenance.thresholds = policy.classes;
  set.provenance.detector_id = options.detector_id;

  const bool dual = policy.mode == PolicyMode::kDual;
  for (const auto& det : detections) {
    if (target.class_set.contains(det.class_id)) {
      throw ContractViolation("detection for class " +
                              std::to_string(det.class_id) +
                              " which the target dataset already annotates");
    }
    if (!policy.covers(det.class_id)) {
      throw ContractViolation("policy has no threshold for class " +
                              std::to_string(det.class_id));
    }
    if (!image_ids.contains(det.image_id)) {
      throw ValidationError("detection references image " +
                            std::to_string(det.image_id) +
                            " absent from the target dataset");
    }
    const ClassThresholds& thresholds = policy.classes.at(det.class_id);
    GroundTruthLabel label;
    label.image_id = det.image_id;
    label.class_id = det.class_id;
    label.box = det.box;
    label.score = det.score;
    if (det.score >= thresholds.tau_h) {
      label.source = LabelSource::kPseudo;
      set.labels.push_back(std::move(label));
    } else if (dual && det.score >= thresholds.tau_l) {
      label.source = LabelSource::kIgnore;
      set.labels.push_back(std::move(label));
    }
    // below tau_l: implicit pseudo background
  }

  if (options.emit_background_records) {
    std::unordered_map<std::int64_t, bool> all_below;  // image -> candidate
    for (const auto& img : target.images) all_below[img.id] = true;
    for (const auto& det : detections) {
      if (det.score >= policy.classes.at(det.class_id).tau_l) {
        all_below[det.image_id] = false;
      }
    }
    for (const auto& img : target.images) {
      if (!all_below[img.id] || img.width <= 0.0 || img.height <= 0.0) continue;
      GroundTruthLabel label;
      label.image_id = img.id;
      label.class_id = kBackgroundClassId;
      label.box = {0.0, 0.0, img.width, img.height};
      label.source = LabelSource::kPseudoBackground;
      label.score = 1.0;
      set.labels.push_back(std::move(label));
    }
  }
  return set;
}

std::int64_t merge_id_stride(const DatasetBundle& bundle) {
  std::int64_t max_id = 0;
  for (const auto& dataset : bundle.datasets) {
    for (const auto& img : dataset.images) {
      if (img.id < 0) {
        throw ValidationError("negative image id " + std::to_string(img.id));
      }
      max_id = std::max(max_id, img.id);
    }
  }
  std::int64_t stride = 10;
  while (stride <= max_id) stride *= 10;
  return stride;
}

Dataset merge_bundle(const DatasetBundle& bundle,
                     std::span<const PseudoLabelSet> pseudo_sets) {
  if (!pseudo_sets.empty() && pseudo_sets.size() != bundle.datasets.size()) {
    throw ContractViolation("expected one pseudo set per dataset, got " +
                            std::to_string(pseudo_sets.size()) + " for " +
                            std::to_string(bundle.datasets.size()));
  }
  const std::int64_t stride = merge_id_stride(bundle);
  auto remap = [stride](std::size_t dataset_index, ImageId id) {
    return static_cast<std::int64_t>(dataset_index) * stride + id;
  };

  Dataset merged;
  merged.class_set = bundle.full_class_set;

  for (std::size_t i = 0; i < bundle.datasets.size(); ++i) {
    for (const auto& img : bundle.datasets[i].images) {
      ImageInfo info = img;
      info.id = remap(i, img.id);
      merged.images.push_back(std::move(info));
    }
  }
  for (std::size_t i = 0; i < bundle.datasets.size(); ++i) {
    for (const auto& label : bundle.datasets[i].labels) {
      GroundTruthLabel copy = label;
      copy.image_id = remap(i, label.image_id);
      merged.labels.push_back(std::move(copy));
    }
  }
  for (std::size_t i = 0; i < pseudo_sets.size(); ++i) {
    std::unordered_set<std::int64_t> image_ids;
    for (const auto& img : bundle.datasets[i].images) image_ids.insert(img.id);
    for (const auto& label : pseudo_sets[i].labels) {
      if (label.class_id != kBackgroundClassId &&
          bundle.datasets[i].class_set.contains(label.class_id)) {
        throw ContractViolation(
            "pseudo label for class " + std::to_string(label.class_id) +
            " in dataset " + std::to_string(i) + " which annotates it");
      }
      if (!image_ids.contains(label.image_id)) {
        throw ValidationError("pseudo label references image " +
                              std::to_string(label.image_id) +
                              " absent from dataset " + std::to_string(i));
      }
      GroundTruthLabel copy = label;
      copy.image_id = remap(i, label.image_id);
      merged.labels.push_back(std::move(copy));
    }
  }
  return merged;
}

std::string pseudo_set_to_json(const PseudoLabelSet& set) {
  ordered_json doc;
  ordered_json provenance;
  provenance["method"] = to_string(set.provenance.method);
  provenance["mode"] = to_string(set.provenance.mode);
  provenance["detector_id"] = set.provenance.detector_id;
  provenance["thresholds"] = ordered_json::array();
  for (const auto& [class_id, thresholds] : set.provenance.thresholds) {
    ordered_json j;
    j["class_id"] = class_id;
    j["tau_h"] = thresholds.tau_h;
    j["tau_l"] = thresholds.tau_l;
    provenance["thresholds"].push_back(std::move(j));
  }
  doc["provenance"] = std::move(provenance);
  doc["labels"] = ordered_json::array();
  for (const auto& label : set.labels) {
    ordered_json j;
    j["image_id"] = label.image_id;
    j["category_id"] = label.class_id;
    j["bbox"] = ordered_json::array(
        {label.box.x, label.box.y, label.box.w, label.box.h});
    j["source"] = to_string(label.source);
    j["score"] = label.score;
    doc["labels"].push_back(std::move(j));
  }
  return doc.dump(2) + "\n";
}

PseudoLabelSet pseudo_set_from_json(const std::string& text) {
  json doc = json::parse(text, nullptr, /*allow_exceptions=*/false);
  if (doc.is_discarded() || !doc.is_object()) {
    throw ParseError("pseudo-label document is not a JSON object");
  }
  PseudoLabelSet set;
  if (auto it = doc.find("provenance"); it != doc.end() && it->is_object()) {
    set.provenance.method =
        policy_method_from_string(it->value("method", "manual"));
    set.provenance.mode = policy_mode_from_string(it->value("mode", "single"));
    set.provenance.detector_id = it->value("detector_id", "");
    if (auto th = it->find("thresholds"); th != it->end() && th->is_array()) {
      for (const auto& entry : *th) {
        set.provenance.thresholds[entry.at("class_id").get<ClassId>()] = {
            entry.at("tau_h").get<double>(), entry.at("tau_l").get<double>()};
      }
    }
  }
  const auto labels = doc.find("labels");
  if (labels == doc.end() || !labels->is_array()) {
    throw ParseError("pseudo-label document missing 'labels' array");
  }
  for (const auto& entry : *labels) {
    GroundTruthLabel label;
    label.image_id = entry.at("image_id").get<ImageId>();
    label.class_id = entry.at("category_id").get<ClassId>();
    const auto& bbox = entry.at("bbox");
    if (!bbox.is_array() || bbox.size() != 4) {
      throw ParseError("pseudo-label entry has a malformed 'bbox'");
    }
    label.box = {bbox[0].get<double>(), bbox[1].get<double>(),
                 bbox[2].get<double>(), bbox[3].get<double>()};
    label.source = label_source_from_string(entry.value("source", "pseudo"));
    label.score = entry.value("score", 1.0);
    set.labels.push_back(std::move(label));
  }
  return set;
}

PseudoLabelSet load_pseudo_set(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw IoError("cannot open '" + path.string() + "'");
  }
  std::ostringstream buffer;
  buffer << in.rdbuf();
  try {
    return pseudo_set_from_json(buffer.str());
  } catch (const json::exception& e) {
    throw ParseError("'" + path.string() + "': " + e.what());
  }
}

void save_pseudo_set(const PseudoLabelSet& set,
                     const std::filesystem::path& path) {
  atomic_write_text(path, pseudo_set_to_json(set));
}

}  // namespace plopt
